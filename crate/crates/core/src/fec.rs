//! Transport-block FEC: CRC-16 attachment plus a rate-1/2 constraint-length-7
//! convolutional code with soft-decision Viterbi decoding and length rate
//! matching.
//!
//! Bits are `u8` values 0/1 throughout. The mother code is tail-biting: the
//! encoder register is preloaded with the last six input bits, so an n-bit
//! block maps to exactly 2n mother bits and every position gets the full
//! constraint-length protection (no termination tail, no uncoded edge).
//! Decoding is wrap-around Viterbi over the circular LLR sequence.
//!
//! Rate matching selects `target` of the `2n` mother positions uniformly
//! (for the default 167-of-168 this drops exactly the final bit); the
//! de-rate-matcher fills unselected positions with zero log-likelihood
//! ratios. At effective rate 1 (`target` equal to the block length) rate
//! matching keeps only one generator's output stream and the circular code
//! stops being uniquely decodable — the surviving generator shares factors
//! with x^n + 1, so 64 distinct inputs share every codeword. The codec
//! therefore switches to the zero-start truncated encoder for that case,
//! which is bijective; with zero redundancy its block error rate equals
//! uncoded transmission, which is what rate 1 means.
//!
//! LLR convention: positive LLR means bit 0 (BPSK symbol +1).

use crate::error::{Error, Result};

/// CRC generator polynomial x^16 + x^12 + x^5 + 1 (0x1021), zero initial
/// value, no final inversion, most-significant bit first.
pub const CRC_POLY: u16 = 0x1021;
pub const CRC_BITS: usize = 16;

/// Convolutional generators, octal 133 / 171; the most significant of the 7
/// generator bits taps the current input bit.
pub const CONV_GENERATORS: [u32; 2] = [0o133, 0o171];
pub const CONSTRAINT_LEN: usize = 7;

const NUM_STATES: usize = 1 << (CONSTRAINT_LEN - 1);

/// CRC-16 over a bit sequence.
pub fn crc16(bits: &[u8]) -> u16 {
    let mut crc: u16 = 0;
    for &b in bits {
        debug_assert!(b <= 1, "bits must be 0 or 1");
        crc ^= u16::from(b & 1) << 15;
        crc = if crc & 0x8000 != 0 { (crc << 1) ^ CRC_POLY } else { crc << 1 };
    }
    crc
}

/// Append the 16 CRC bits (MSB first) to `info`.
pub fn crc_attach(info: &[u8]) -> Vec<u8> {
    let crc = crc16(info);
    let mut block = Vec::with_capacity(info.len() + CRC_BITS);
    block.extend_from_slice(info);
    for i in (0..CRC_BITS).rev() {
        block.push(((crc >> i) & 1) as u8);
    }
    block
}

/// Check the trailing 16-bit CRC of a block produced by [`crc_attach`].
pub fn crc_check(block: &[u8]) -> Result<bool> {
    if block.len() <= CRC_BITS {
        return Err(Error::Usage(format!(
            "crc_check needs more than {CRC_BITS} bits, got {}",
            block.len()
        )));
    }
    let split = block.len() - CRC_BITS;
    let crc = crc16(&block[..split]);
    let ok = block[split..]
        .iter()
        .enumerate()
        .all(|(i, &b)| b == ((crc >> (CRC_BITS - 1 - i)) & 1) as u8);
    Ok(ok)
}

/// A payload with its CRC attached; `bits` is info followed by the 16 CRC bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportBlock {
    pub bits: Vec<u8>,
    pub info_len: usize,
}

impl TransportBlock {
    pub fn from_info(info: &[u8]) -> Self {
        TransportBlock { bits: crc_attach(info), info_len: info.len() }
    }

    pub fn info(&self) -> &[u8] {
        &self.bits[..self.info_len]
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Output pair (2 coded bits, packed as o0<<1|o1) for every 7-bit register
/// value; index = current_bit<<6 | state.
fn output_table() -> [u8; 2 * NUM_STATES] {
    let mut t = [0u8; 2 * NUM_STATES];
    for (reg, slot) in t.iter_mut().enumerate() {
        let o0 = (reg as u32 & CONV_GENERATORS[0]).count_ones() & 1;
        let o1 = (reg as u32 & CONV_GENERATORS[1]).count_ones() & 1;
        *slot = ((o0 << 1) | o1) as u8;
    }
    t
}

/// Tail-biting register preload: the encoder starts holding the last six
/// input bits, so the code is circular and every bit position gets the full
/// constraint-length protection. For an all-zero tail this reduces to the
/// classic zero-start encoder.
fn tail_biting_state(bits: &[u8]) -> usize {
    let n = bits.len();
    let mut state = 0usize;
    for j in 1..=6usize.min(n) {
        // bit5 of the register is the most recent prior input.
        state |= (bits[(2 * n - j) % n] as usize) << (6 - j);
    }
    state
}

fn conv_encode_from(init_state: usize, bits: &[u8]) -> Vec<u8> {
    let table = output_table();
    let mut out = Vec::with_capacity(2 * bits.len());
    let mut state = init_state;
    for &b in bits {
        debug_assert!(b <= 1, "bits must be 0 or 1");
        let reg = ((b as usize) << 6) | state;
        let pair = table[reg];
        out.push(pair >> 1);
        out.push(pair & 1);
        state = reg >> 1;
    }
    out
}

/// Convolutionally encode a block as a tail-biting codeword: `n` input bits
/// produce exactly `2n` output bits, with no termination tail.
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    conv_encode_from(tail_biting_state(bits), bits)
}

/// Zero-start truncated variant: the register begins empty and no tail is
/// appended. Used where rate matching leaves no redundancy (see module doc);
/// the resulting map is a causal filter and always invertible.
pub fn conv_encode_truncated(bits: &[u8]) -> Vec<u8> {
    conv_encode_from(0, bits)
}

/// Circular passes for the wrap-around decoder. Three laps with the bits
/// read off the middle lap give every position at least a full block of
/// trellis context on both sides, which is within a small fraction of a dB
/// of exact maximum-likelihood for blocks of this size.
const WAVA_LAPS: usize = 3;

/// Soft-decision wrap-around Viterbi decode of `2n` LLRs into `n` bits of a
/// tail-biting codeword.
///
/// Maximizes sum over coded bits of llr * (1 - 2*coded_bit). All start
/// states open at zero metric; the trellis is run over the circular LLR
/// sequence for three laps and the survivor bits are read off the middle
/// lap, so neither the head nor the tail of the block sits at a trellis
/// boundary.
pub fn viterbi_decode(llrs: &[f64]) -> Result<Vec<u8>> {
    viterbi_run(llrs, WAVA_LAPS, false)
}

/// Single-lap Viterbi for the zero-start truncated code produced by
/// [`conv_encode_truncated`]: only state 0 opens, the end state is free.
pub fn viterbi_decode_truncated(llrs: &[f64]) -> Result<Vec<u8>> {
    viterbi_run(llrs, 1, true)
}

fn viterbi_run(llrs: &[f64], laps: usize, zero_start: bool) -> Result<Vec<u8>> {
    if llrs.len() % 2 != 0 {
        return Err(Error::Usage(format!(
            "viterbi needs an even number of llrs, got {}",
            llrs.len()
        )));
    }
    if llrs.iter().any(|l| !l.is_finite()) {
        return Err(Error::Usage("non-finite llr".into()));
    }
    let steps = llrs.len() / 2;
    let table = output_table();
    let total = steps * laps;

    let mut metric = if zero_start {
        let mut m = [f64::NEG_INFINITY; NUM_STATES];
        m[0] = 0.0;
        m
    } else {
        [0.0f64; NUM_STATES]
    };
    let mut next = [f64::NEG_INFINITY; NUM_STATES];
    // One decision bit per (step, state): which of the two predecessors won.
    let mut decisions: Vec<u64> = Vec::with_capacity(total);

    for step in 0..total {
        let t = step % steps;
        let l0 = llrs[2 * t];
        let l1 = llrs[2 * t + 1];
        // Branch metric for each 2-bit output pattern.
        let bm = [l0 + l1, l0 - l1, -l0 + l1, -l0 - l1];
        let mut dec: u64 = 0;
        for s_next in 0..NUM_STATES {
            let b = s_next >> 5;
            let p0 = (s_next & 31) << 1;
            let p1 = p0 | 1;
            let m0 = metric[p0] + bm[table[(b << 6) | p0] as usize];
            let m1 = metric[p1] + bm[table[(b << 6) | p1] as usize];
            if m1 > m0 {
                next[s_next] = m1;
                dec |= 1u64 << s_next;
            } else {
                next[s_next] = m0;
            }
        }
        decisions.push(dec);
        metric = next;
    }

    // Trace back from the best end metric; bits are read off the middle lap
    // (which for a single lap is the lap itself).
    let read_lap = laps / 2;
    let mut state = metric
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut bits = vec![0u8; steps];
    for step in (read_lap * steps..total).rev() {
        if step < (read_lap + 1) * steps {
            bits[step - read_lap * steps] = (state >> 5) as u8;
        }
        let took_p1 = (decisions[step] >> state) & 1 == 1;
        state = ((state & 31) << 1) | usize::from(took_p1);
    }
    Ok(bits)
}

/// Decoder output: the reconstructed block and whether its CRC checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedBlock {
    pub block: Vec<u8>,
    pub crc_pass: bool,
}

/// Complete transport-block codec: CRC attach/check, convolutional mother
/// code, and rate matching to a fixed over-the-air length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FecCodec {
    info_len: usize,
    target_len: usize,
    /// Mother-code positions that survive rate matching, strictly increasing.
    selected: Vec<usize>,
    /// False only at effective rate 1, where the circular code is ambiguous
    /// and the zero-start truncated variant is used instead (module doc).
    tail_biting: bool,
}

impl FecCodec {
    /// `info_len` payload bits (CRC-16 is appended to form the block);
    /// `target_len` coded bits go over the air.
    pub fn new(info_len: usize, target_len: usize) -> Result<Self> {
        if info_len == 0 {
            return Err(Error::Config("info_len must be positive".into()));
        }
        let block_len = info_len + CRC_BITS;
        let mother_len = 2 * block_len;
        if target_len < block_len || target_len > mother_len {
            return Err(Error::Config(format!(
                "target_len {target_len} outside [{block_len}, {mother_len}]"
            )));
        }
        let selected: Vec<usize> =
            (0..target_len).map(|j| j * mother_len / target_len).collect();
        debug_assert!(selected.windows(2).all(|w| w[0] < w[1]));
        Ok(FecCodec { info_len, target_len, selected, tail_biting: target_len > block_len })
    }

    pub fn info_len(&self) -> usize {
        self.info_len
    }

    pub fn block_len(&self) -> usize {
        self.info_len + CRC_BITS
    }

    pub fn mother_len(&self) -> usize {
        2 * self.block_len()
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    /// Mother-code bit positions that survive rate matching.
    pub fn selected_positions(&self) -> &[usize] {
        &self.selected
    }

    pub fn attach_crc(&self, info: &[u8]) -> Result<TransportBlock> {
        if info.len() != self.info_len {
            return Err(Error::Usage(format!(
                "info length {} != {}",
                info.len(),
                self.info_len
            )));
        }
        Ok(TransportBlock::from_info(info))
    }

    /// Encode a full block (info + CRC) to `target_len` bits.
    pub fn encode_block(&self, block: &[u8]) -> Result<Vec<u8>> {
        if block.len() != self.block_len() {
            return Err(Error::Usage(format!(
                "block length {} != {}",
                block.len(),
                self.block_len()
            )));
        }
        let mother =
            if self.tail_biting { conv_encode(block) } else { conv_encode_truncated(block) };
        Ok(self.selected.iter().map(|&p| mother[p]).collect())
    }

    pub fn encode(&self, tb: &TransportBlock) -> Result<Vec<u8>> {
        self.encode_block(&tb.bits)
    }

    /// Decode `target_len` LLRs (positive means bit 0). Punctured mother
    /// positions are treated as erasures (zero LLR).
    pub fn decode(&self, llrs: &[f64]) -> Result<DecodedBlock> {
        if llrs.len() != self.target_len {
            return Err(Error::Usage(format!(
                "llr length {} != {}",
                llrs.len(),
                self.target_len
            )));
        }
        if llrs.iter().any(|l| !l.is_finite()) {
            return Err(Error::Usage("non-finite llr".into()));
        }
        let mut mother = vec![0.0f64; self.mother_len()];
        for (j, &p) in self.selected.iter().enumerate() {
            mother[p] = llrs[j];
        }
        let block = if self.tail_biting {
            viterbi_decode(&mother)?
        } else {
            viterbi_decode_truncated(&mother)?
        };
        let crc_pass = crc_check(&block)?;
        Ok(DecodedBlock { block, crc_pass })
    }

    /// The info payload inside a full block.
    pub fn info_bits<'a>(&self, block: &'a [u8]) -> &'a [u8] {
        &block[..self.info_len]
    }
}
