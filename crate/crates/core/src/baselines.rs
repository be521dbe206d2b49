//! Reference receivers the blind detector is measured against: a perfect-CSI
//! MMSE-SIC upper bound and a preamble-assisted receiver whose channel
//! knowledge comes from orthogonal preambles instead of a genie.

use std::collections::HashSet;

use num_complex::Complex64;

use crate::bsc::{combine, csc_combine, CscMode};
use crate::channel::ReceiveGrid;
use crate::error::{Error, Result};
use crate::fec::FecCodec;
use crate::linalg::CMat;
use crate::mud::{
    attribute_code, decode_candidate, despread, estimate_covariance, estimate_gain,
    hd_sinr_db, mmse_weights, reconstruct_and_cancel, select_active, RoundDiagnostics,
};
use crate::waveform::{
    modulate_bits, spread_symbols, ChipGrid, PreamblePool, SpreadingCodePool,
    UeTransmission,
};

// ---------------------------------------------------------------------------
// Perfect-CSI MMSE-SIC
// ---------------------------------------------------------------------------

/// Genie knowledge about one user: which code it spreads with, its true
/// channel, and its transmit amplitude (1.0 at nominal power).
#[derive(Debug, Clone)]
pub struct IdealUser {
    pub code_index: usize,
    pub channel: Vec<Complex64>,
    pub amplitude: f64,
}

/// One user recovered by the perfect-CSI receiver.
#[derive(Debug, Clone)]
pub struct IdealDecoded {
    pub ue_index: usize,
    pub info_bits: Vec<u8>,
    /// Position in the cancellation order (0 = first cancelled).
    pub order: usize,
    pub sinr_db: f64,
}

#[derive(Debug, Clone)]
pub struct IdealResult {
    pub decoded: Vec<IdealDecoded>,
    pub decode_attempts: usize,
}

/// Stacked antenna-by-chip signature of one user: block a holds
/// amplitude * channel[a] * code.
fn stacked_signature(user: &IdealUser, pool: &SpreadingCodePool) -> Vec<Complex64> {
    let code = pool.code(user.code_index);
    let mut g = Vec::with_capacity(user.channel.len() * code.len());
    for &h in &user.channel {
        for &c in code {
            g.push(user.amplitude * h * c);
        }
    }
    g
}

/// Despread the stacked received frame with weights w: u(t) = w^H s(t).
fn despread_stacked(grid: &ReceiveGrid, w: &[Complex64]) -> Vec<Complex64> {
    let l = grid.antennas[0].spread_len();
    let t = grid.antennas[0].num_symbols();
    let mut out = vec![Complex64::new(0.0, 0.0); t];
    for (a, ant) in grid.antennas.iter().enumerate() {
        let wa = &w[a * l..(a + 1) * l];
        for (col, u) in out.iter_mut().enumerate() {
            *u += ant
                .column(col)
                .iter()
                .zip(wa)
                .map(|(y, ww)| ww.conj() * y)
                .sum::<Complex64>();
        }
    }
    out
}

/// MMSE-SIC with perfect channel state information.
///
/// The exact covariance of the stacked frame is built from the true
/// signatures of all not-yet-cancelled users plus the noise floor. Users are
/// tried strongest post-MMSE SINR first; a CRC pass cancels the user with its
/// true channel, everything is re-ranked, and failed users stay in as
/// interference until a full pass decodes nobody new.
pub fn ideal_mmse_sic(
    grid: &ReceiveGrid,
    pool: &SpreadingCodePool,
    codec: &FecCodec,
    users: &[IdealUser],
) -> Result<IdealResult> {
    let m = grid.num_antennas();
    if m == 0 {
        return Err(Error::Usage("empty receive grid".into()));
    }
    let l = grid.antennas[0].spread_len();
    if pool.spread_len() != l {
        return Err(Error::Usage("pool spread length does not match grid".into()));
    }
    for (k, u) in users.iter().enumerate() {
        if u.channel.len() != m {
            return Err(Error::Usage(format!(
                "user {k} has {} channel gains, expected {m}",
                u.channel.len()
            )));
        }
        if u.code_index >= pool.len() {
            return Err(Error::Usage(format!(
                "user {k} code index {} outside pool",
                u.code_index
            )));
        }
    }

    let d = m * l;
    let signatures: Vec<Vec<Complex64>> =
        users.iter().map(|u| stacked_signature(u, pool)).collect();
    let mut work = grid.clone();
    let mut remaining: Vec<usize> = (0..users.len()).collect();
    let mut decoded = Vec::new();
    let mut attempts = 0usize;

    while !remaining.is_empty() {
        // Exact covariance of what is still on the air.
        let mut r = CMat::zeros(d);
        for &k in &remaining {
            r.accumulate_outer(&signatures[k], 1.0);
        }
        let floor = if work.noise_var > 0.0 {
            work.noise_var
        } else {
            // Keep the matrix invertible for noise-free inputs.
            1e-12 * (r.trace_real() / d as f64).max(1.0)
        };
        r.add_scaled_identity(floor);
        r.hermitize();
        let chol = r.cholesky()?;

        // Post-MMSE SINR of every remaining user: beta/(1-beta) with
        // beta = g^H R^-1 g (R includes the user itself).
        let mut ranked: Vec<(f64, usize)> = remaining
            .iter()
            .map(|&k| {
                let beta = chol.quad_form_inv(&signatures[k]).min(1.0 - 1e-15);
                (beta / (1.0 - beta), k)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut cancelled: Option<usize> = None;
        for &(sinr, k) in &ranked {
            let g = &signatures[k];
            let beta = chol.quad_form_inv(g).min(1.0 - 1e-15);
            let rinv_g = chol.solve(g);
            let weights: Vec<Complex64> =
                rinv_g.iter().map(|w| w / beta).collect();
            let symbols = despread_stacked(&work, &weights);
            // Unbiased despreader: u(t) = b(t) + residual of known variance.
            let scale = 2.0 * beta / (1.0 - beta).max(1e-15);
            let llrs: Vec<f64> = symbols.iter().map(|u| u.re * scale).collect();
            attempts += 1;
            let out = codec.decode(&llrs)?;
            if !out.crc_pass {
                continue;
            }
            let coded = codec.encode_block(&out.block)?;
            let syms = modulate_bits(&coded);
            let mut chips = spread_symbols(&syms, pool.code(users[k].code_index));
            if users[k].amplitude != 1.0 {
                let amp = Complex64::new(users[k].amplitude, 0.0);
                let zero = ChipGrid::zeros(l, chips.num_symbols());
                let mut scaled = zero;
                scaled.add_scaled(&chips, amp);
                chips = scaled;
            }
            for (a, y) in work.antennas.iter_mut().enumerate() {
                y.sub_scaled(&chips, users[k].channel[a]);
            }
            decoded.push(IdealDecoded {
                ue_index: k,
                info_bits: codec.info_bits(&out.block).to_vec(),
                order: decoded.len(),
                sinr_db: 10.0 * sinr.max(f64::MIN_POSITIVE).log10(),
            });
            cancelled = Some(k);
            break;
        }
        match cancelled {
            Some(k) => remaining.retain(|&j| j != k),
            None => break,
        }
    }

    Ok(IdealResult { decoded, decode_attempts: attempts })
}

// ---------------------------------------------------------------------------
// Preamble-assisted receiver
// ---------------------------------------------------------------------------

/// A received frame that carries a preamble region ahead of the data region.
#[derive(Debug, Clone)]
pub struct PreambleFrame {
    /// Per-antenna preamble samples.
    pub preamble_rx: Vec<Vec<Complex64>>,
    pub data: ReceiveGrid,
}

/// Build the receive-side frame for preamble transmissions: every user sends
/// its preamble burst and its data chips through the same block-fading
/// channel; both regions get noise of the same per-sample variance.
#[allow(clippy::too_many_arguments)]
pub fn build_preamble_frame(
    txs: &[UeTransmission],
    preamble_indices: &[usize],
    channels: &[Vec<Complex64>],
    ppool: &PreamblePool,
    num_antennas: usize,
    spread_len: usize,
    num_symbols: usize,
    snr_db: f64,
    rng: &mut impl rand::Rng,
) -> Result<PreambleFrame> {
    if txs.len() != preamble_indices.len() {
        return Err(Error::Usage(format!(
            "{} transmissions but {} preamble indices",
            txs.len(),
            preamble_indices.len()
        )));
    }
    if preamble_indices.iter().any(|&q| q >= ppool.len()) {
        return Err(Error::Usage("preamble index outside pool".into()));
    }
    let data = crate::channel::apply_channel(
        txs,
        channels,
        num_antennas,
        spread_len,
        num_symbols,
        snr_db,
        rng,
    )?;
    let noise_amp = data.noise_var.sqrt();
    let bursts: Vec<Vec<Complex64>> = preamble_indices
        .iter()
        .map(|&q| ppool.burst(q, spread_len))
        .collect();
    let mut preamble_rx = Vec::with_capacity(num_antennas);
    for a in 0..num_antennas {
        let mut region = vec![Complex64::new(0.0, 0.0); ppool.seq_len()];
        for (burst, h) in bursts.iter().zip(channels) {
            for (sample, &b) in region.iter_mut().zip(burst) {
                *sample += h[a] * b;
            }
        }
        if noise_amp > 0.0 {
            for sample in &mut region {
                *sample += crate::channel::draw_cn(rng) * noise_amp;
            }
        }
        preamble_rx.push(region);
    }
    Ok(PreambleFrame { preamble_rx, data })
}

/// One preamble the detector declared active.
#[derive(Debug, Clone)]
pub struct PreambleDetection {
    pub seq_index: usize,
    /// Correlation energy summed over antennas.
    pub energy: f64,
    /// Per-antenna channel estimate from the preamble correlation.
    pub estimate: Vec<Complex64>,
}

/// Correlate the preamble region against the whole pool and keep sequences
/// whose energy exceeds `threshold_factor` times the pool median (the median
/// tracks the noise floor since most sequences are unused). Detections come
/// back strongest first.
pub fn detect_preambles(
    preamble_rx: &[Vec<Complex64>],
    ppool: &PreamblePool,
    spread_len: usize,
    threshold_factor: f64,
) -> Vec<PreambleDetection> {
    let alpha = (ppool.seq_len() as f64 / spread_len as f64).sqrt();
    let mut dets: Vec<PreambleDetection> = Vec::new();
    let mut energies = Vec::with_capacity(ppool.len());
    for q in 0..ppool.len() {
        let seq = ppool.seq(q);
        let mut estimate = Vec::with_capacity(preamble_rx.len());
        let mut energy = 0.0;
        for region in preamble_rx {
            let rho: Complex64 =
                seq.iter().zip(region).map(|(p, y)| p.conj() * y).sum();
            energy += rho.norm_sqr();
            estimate.push(rho / alpha);
        }
        energies.push(energy);
        dets.push(PreambleDetection { seq_index: q, energy, estimate });
    }
    let peak = energies.iter().copied().fold(0.0, f64::max);
    let mut sorted = energies;
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    // The relative floor only matters for noise-free input, where the median
    // is numerical dust; any real noise floor sits far above it.
    let threshold = (threshold_factor * median).max(1e-12 * peak);
    let mut out: Vec<PreambleDetection> =
        dets.into_iter().filter(|d| d.energy > threshold).collect();
    out.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.seq_index.cmp(&b.seq_index)));
    out
}

/// Tuning of the preamble-assisted receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleRxConfig {
    /// MRC or zero-forcing combining from the preamble channel estimates.
    pub csc_mode: CscMode,
    /// Detection threshold as a multiple of the pool-median energy.
    pub threshold_factor: f64,
    /// Codes kept per detection by the activity metric.
    pub codes_per_detection: usize,
    /// Candidates decoded per round across all detections.
    pub decode_budget: usize,
    pub max_rounds: usize,
    pub sinr_cap_db: f64,
    pub diagonal_loading: f64,
}

impl Default for PreambleRxConfig {
    fn default() -> Self {
        PreambleRxConfig {
            csc_mode: CscMode::Mrc,
            threshold_factor: 4.0,
            codes_per_detection: 8,
            decode_budget: 16,
            max_rounds: 8,
            sinr_cap_db: 40.0,
            diagonal_loading: 1e-3,
        }
    }
}

/// One block recovered by the preamble-assisted receiver.
#[derive(Debug, Clone)]
pub struct PreambleDecoded {
    /// Which detected preamble's combining vector produced the decode.
    pub preamble_index: usize,
    pub code_index: usize,
    pub info_bits: Vec<u8>,
    pub round: usize,
    pub sinr_db: f64,
}

#[derive(Debug, Clone)]
pub struct PreambleResult {
    pub decoded: Vec<PreambleDecoded>,
    pub rounds: Vec<RoundDiagnostics>,
    /// Detections in the first round, before any cancellation.
    pub initial_detections: usize,
}

/// Build the combining vector for one detection: MRC toward its estimate, or
/// zero-forcing against the strongest other detections (at most
/// antennas-minus-one of them), falling back to MRC when the estimates are
/// too aligned to invert.
fn detection_combiner(
    detections: &[PreambleDetection],
    target: usize,
    num_antennas: usize,
    mode: CscMode,
) -> Result<Vec<Complex64>> {
    match mode {
        CscMode::Mrc => {
            csc_combine(&[detections[target].estimate.clone()], 0, CscMode::Mrc)
        }
        CscMode::Zfc => {
            // Detections are already sorted strongest first; pick the target
            // plus the strongest others that fit the antenna budget.
            let mut subset = vec![detections[target].estimate.clone()];
            for (i, d) in detections.iter().enumerate() {
                if i != target && subset.len() < num_antennas {
                    subset.push(d.estimate.clone());
                }
            }
            match csc_combine(&subset, 0, CscMode::Zfc) {
                Ok(v) => Ok(v),
                Err(Error::DegenerateCombining(_)) => csc_combine(
                    &[detections[target].estimate.clone()],
                    0,
                    CscMode::Mrc,
                ),
                Err(e) => Err(e),
            }
        }
    }
}

/// Run the preamble-assisted receiver over one frame.
///
/// Each round re-detects preambles on the residual preamble region, forms
/// one combined data stream per detection, and runs the same blind
/// code-domain pipeline as the data-only receiver (activity metric, blind
/// gain, hard-decision-SINR ranking, CRC-gated decoding). A decoded block is
/// cancelled from the data region via its least-squares channel estimate and
/// from the preamble region via the same estimate on its detection's
/// sequence.
pub fn preamble_receiver(
    frame: &PreambleFrame,
    ppool: &PreamblePool,
    pool: &SpreadingCodePool,
    codec: &FecCodec,
    config: &PreambleRxConfig,
) -> Result<PreambleResult> {
    let m = frame.data.num_antennas();
    if m == 0 || frame.preamble_rx.len() != m {
        return Err(Error::Usage(format!(
            "preamble region covers {} antennas, data {}",
            frame.preamble_rx.len(),
            m
        )));
    }
    let spread_len = frame.data.antennas[0].spread_len();
    if pool.spread_len() != spread_len {
        return Err(Error::Usage("pool spread length does not match grid".into()));
    }
    if frame.preamble_rx.iter().any(|r| r.len() != ppool.seq_len()) {
        return Err(Error::Usage("preamble region length mismatch".into()));
    }

    let alpha = (ppool.seq_len() as f64 / spread_len as f64).sqrt();
    let mut work = frame.clone();
    let mut decoded: Vec<PreambleDecoded> = Vec::new();
    // Payload-keyed dedup, as in the blind pipeline: residual leakage of
    // an already-cancelled block must not be cancelled a second time.
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut rounds = Vec::new();
    let mut initial_detections = 0usize;

    for round in 1..=config.max_rounds {
        let detections = detect_preambles(
            &work.preamble_rx,
            ppool,
            spread_len,
            config.threshold_factor,
        );
        if round == 1 {
            initial_detections = detections.len();
        }
        if detections.is_empty() {
            rounds.push(RoundDiagnostics {
                round,
                candidates_ranked: 0,
                decode_attempts: 0,
                new_decodes: 0,
            });
            break;
        }

        struct Candidate {
            seq_index: usize,
            code_index: usize,
            sinr_db: f64,
            gain: Complex64,
            symbols: Vec<Complex64>,
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        for target in 0..detections.len() {
            let v = match detection_combiner(&detections, target, m, config.csc_mode)
            {
                Ok(v) => v,
                Err(Error::DegenerateCombining(_)) => continue,
                Err(e) => return Err(e),
            };
            let stream = combine(&work.data.antennas, &v)?;
            let cov = estimate_covariance(&stream, config.diagonal_loading);
            let active = select_active(&cov, pool, config.codes_per_detection)?;
            for code_idx in active {
                let weights = match mmse_weights(&cov, pool.code(code_idx)) {
                    Ok(w) => w,
                    Err(Error::Numerical(_)) => continue,
                    Err(e) => return Err(e),
                };
                let symbols = despread(&stream, &weights);
                let est = estimate_gain(&symbols);
                if est.gain.norm_sqr() <= 0.0 {
                    continue;
                }
                let sinr_db = hd_sinr_db(&symbols, est.gain, config.sinr_cap_db);
                if !sinr_db.is_finite() {
                    continue;
                }
                candidates.push(Candidate {
                    seq_index: detections[target].seq_index,
                    code_index: code_idx,
                    sinr_db,
                    gain: est.gain,
                    symbols,
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.sinr_db
                .total_cmp(&a.sinr_db)
                .then(a.seq_index.cmp(&b.seq_index))
                .then(a.code_index.cmp(&b.code_index))
        });

        let ranked = candidates.len();
        let mut attempts = 0usize;
        let mut new_decodes = 0usize;
        let mut cancel_queue: Vec<(PreambleDecoded, ChipGrid)> = Vec::new();
        for cand in candidates.into_iter().take(config.decode_budget) {
            let (calls, block) =
                decode_candidate(codec, &cand.symbols, cand.gain, work.data.noise_var)?;
            attempts += calls;
            let Some(block) = block else { continue };
            let info = codec.info_bits(&block).to_vec();
            if seen.insert(info.clone()) {
                let coded = codec.encode_block(&block)?;
                let syms = modulate_bits(&coded);
                // Cancel under the best-fitting code, as in the blind
                // pipeline: a CRC pass through a cross-correlated code must
                // not leave the real waveform behind.
                let code_index = attribute_code(&work.data, pool, &syms);
                let chips = spread_symbols(&syms, pool.code(code_index));
                cancel_queue.push((
                    PreambleDecoded {
                        preamble_index: cand.seq_index,
                        code_index,
                        info_bits: info,
                        round,
                        sinr_db: cand.sinr_db,
                    },
                    chips,
                ));
                new_decodes += 1;
            }
        }

        for (record, chips) in cancel_queue {
            // Data region: least-squares estimate and exact subtraction.
            let est = reconstruct_and_cancel(&mut work.data, &chips)?;
            // Preamble region: remove this user's share of its sequence.
            let seq = ppool.seq(record.preamble_index);
            for (a, region) in work.preamble_rx.iter_mut().enumerate() {
                let h = est[a] * alpha;
                for (sample, &p) in region.iter_mut().zip(seq) {
                    *sample -= h * p;
                }
            }
            decoded.push(record);
        }

        rounds.push(RoundDiagnostics {
            round,
            candidates_ranked: ranked,
            decode_attempts: attempts,
            new_decodes,
        });
        if new_decodes == 0 {
            break;
        }
    }

    Ok(PreambleResult { decoded, rounds, initial_detections })
}
