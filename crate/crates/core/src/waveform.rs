//! Transmit-side building blocks: the quaternary spreading-code pool, BPSK
//! modulation and spreading onto the chip grid, and the DFT preamble pool.

use std::collections::HashSet;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fec::FecCodec;

/// Parameters of the spreading-code pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    /// Number of codes in the pool.
    pub pool_size: usize,
    /// Chips per symbol.
    pub spread_len: usize,
    /// Seed for the pool draw; the pool is a pure function of these fields.
    pub seed: u64,
}

/// Number of distinct codes once global phase rotations are identified:
/// the first element can always be rotated to a fixed value.
pub fn phase_class_capacity(spread_len: usize) -> usize {
    4usize.pow(spread_len.saturating_sub(1) as u32)
}

/// A pool of unit-norm quaternary spreading codes with elements drawn from
/// (1+i)·i^e, e in 0..4, normalized by 1/sqrt(2·spread_len).
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingCodePool {
    spread_len: usize,
    codes: Vec<Vec<Complex64>>,
}

impl SpreadingCodePool {
    /// Draw `pool_size` codes, rejecting duplicates up to a global phase
    /// rotation so every pair of pool entries is genuinely distinct.
    pub fn build_pool(spec: &PoolSpec) -> Result<Self> {
        if spec.spread_len == 0 {
            return Err(Error::Config("spread_len must be positive".into()));
        }
        let capacity = phase_class_capacity(spec.spread_len);
        if spec.pool_size == 0 || spec.pool_size > capacity {
            return Err(Error::Config(format!(
                "pool_size {} outside [1, {capacity}] for spread_len {}",
                spec.pool_size, spec.spread_len
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scale = 1.0 / (2.0 * spec.spread_len as f64).sqrt();
        let mut seen: HashSet<Vec<u8>> = HashSet::with_capacity(spec.pool_size);
        let mut codes = Vec::with_capacity(spec.pool_size);
        while codes.len() < spec.pool_size {
            let exps: Vec<u8> =
                (0..spec.spread_len).map(|_| rng.random_range(0..4u8)).collect();
            // Canonical representative: rotate so the first exponent is 0.
            let canon: Vec<u8> =
                exps.iter().map(|&e| (e + 4 - exps[0]) % 4).collect();
            if !seen.insert(canon) {
                continue;
            }
            let code: Vec<Complex64> = exps
                .iter()
                .map(|&e| {
                    Complex64::new(1.0, 1.0)
                        * Complex64::i().powu(u32::from(e))
                        * scale
                })
                .collect();
            codes.push(code);
        }
        Ok(SpreadingCodePool { spread_len: spec.spread_len, codes })
    }

    /// Wrap externally supplied codes (each must have the common length).
    pub fn from_codes(codes: Vec<Vec<Complex64>>) -> Result<Self> {
        let spread_len = codes.first().map_or(0, Vec::len);
        if spread_len == 0 {
            return Err(Error::Config("pool needs at least one nonempty code".into()));
        }
        if codes.iter().any(|c| c.len() != spread_len) {
            return Err(Error::Config("codes must share one length".into()));
        }
        Ok(SpreadingCodePool { spread_len, codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn spread_len(&self) -> usize {
        self.spread_len
    }

    pub fn code(&self, index: usize) -> &[Complex64] {
        &self.codes[index]
    }

    pub fn codes(&self) -> impl Iterator<Item = &[Complex64]> {
        self.codes.iter().map(Vec::as_slice)
    }
}

/// Chip samples over one frame: `spread_len` rows by `num_symbols` columns,
/// stored column-major so one symbol's chips are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipGrid {
    spread_len: usize,
    num_symbols: usize,
    data: Vec<Complex64>,
}

impl ChipGrid {
    pub fn zeros(spread_len: usize, num_symbols: usize) -> Self {
        ChipGrid {
            spread_len,
            num_symbols,
            data: vec![Complex64::new(0.0, 0.0); spread_len * num_symbols],
        }
    }

    pub fn spread_len(&self) -> usize {
        self.spread_len
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn column(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.spread_len..(t + 1) * self.spread_len]
    }

    pub fn column_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.spread_len..(t + 1) * self.spread_len]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// self += scale * other, elementwise over the whole frame.
    pub fn add_scaled(&mut self, other: &ChipGrid, scale: Complex64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// self -= scale * other, elementwise over the whole frame.
    pub fn sub_scaled(&mut self, other: &ChipGrid, scale: Complex64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= scale * b;
        }
    }

    /// Inner product sum(conj(self) * other) over the whole frame.
    pub fn dot_conj(&self, other: &ChipGrid) -> Complex64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum()
    }
}

/// BPSK: bit 0 maps to +1, bit 1 to -1.
pub fn modulate_bits(bits: &[u8]) -> Vec<Complex64> {
    bits.iter()
        .map(|&b| Complex64::new(if b == 0 { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

/// Spread symbols with one code: column t of the grid is symbols[t] * code.
pub fn spread_symbols(symbols: &[Complex64], code: &[Complex64]) -> ChipGrid {
    let mut grid = ChipGrid::zeros(code.len(), symbols.len());
    for (t, &s) in symbols.iter().enumerate() {
        for (chip, &c) in grid.column_mut(t).iter_mut().zip(code) {
            *chip = s * c;
        }
    }
    grid
}

/// One user's transmission within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTransmission {
    pub ue_id: usize,
    pub info_bits: Vec<u8>,
    /// Pool index of the spreading code this user picked.
    pub code_index: usize,
    pub symbols: Vec<Complex64>,
    pub chips: ChipGrid,
    /// Per-user transmit power offset relative to nominal, in dB.
    pub power_offset_db: f64,
}

/// Encode, modulate, and spread one user's payload.
pub fn encode_transmission(
    codec: &FecCodec,
    pool: &SpreadingCodePool,
    ue_id: usize,
    code_index: usize,
    info_bits: &[u8],
    power_offset_db: f64,
) -> Result<UeTransmission> {
    if code_index >= pool.len() {
        return Err(Error::Usage(format!(
            "code_index {code_index} outside pool of {}",
            pool.len()
        )));
    }
    let tb = codec.attach_crc(info_bits)?;
    let coded = codec.encode(&tb)?;
    let mut symbols = modulate_bits(&coded);
    let amp = 10f64.powf(power_offset_db / 20.0);
    if power_offset_db != 0.0 {
        for s in &mut symbols {
            *s *= amp;
        }
    }
    let chips = spread_symbols(&symbols, pool.code(code_index));
    Ok(UeTransmission {
        ue_id,
        info_bits: info_bits.to_vec(),
        code_index,
        symbols,
        chips,
        power_offset_db,
    })
}

/// Orthogonal preamble pool: the first `pool_size` rows of a `seq_len`-point
/// unitary DFT matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PreamblePool {
    seq_len: usize,
    seqs: Vec<Vec<Complex64>>,
}

impl PreamblePool {
    pub fn new(pool_size: usize, seq_len: usize) -> Result<Self> {
        if seq_len == 0 || pool_size == 0 || pool_size > seq_len {
            return Err(Error::Config(format!(
                "preamble pool_size {pool_size} outside [1, {seq_len}]"
            )));
        }
        let scale = 1.0 / (seq_len as f64).sqrt();
        let seqs = (0..pool_size)
            .map(|q| {
                (0..seq_len)
                    .map(|n| {
                        let phase = -2.0 * std::f64::consts::PI * (q * n) as f64
                            / seq_len as f64;
                        Complex64::from_polar(scale, phase)
                    })
                    .collect()
            })
            .collect();
        Ok(PreamblePool { seq_len, seqs })
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// The unit-norm pool sequence.
    pub fn seq(&self, q: usize) -> &[Complex64] {
        &self.seqs[q]
    }

    /// The as-transmitted burst: the pool sequence scaled by
    /// sqrt(seq_len / spread_len) so its per-sample energy matches a data
    /// chip's 1/spread_len.
    pub fn burst(&self, q: usize, spread_len: usize) -> Vec<Complex64> {
        let amp = (self.seq_len as f64 / spread_len as f64).sqrt();
        self.seqs[q].iter().map(|x| x * amp).collect()
    }
}
