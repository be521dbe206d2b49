//! Data-only blind multi-user detection over combined streams.
//!
//! Per combined stream the receiver estimates the chip-level covariance,
//! scores every pool code with the MMSE activity metric c^H R^-1 c (small
//! means active), despreads the most active codes with MMSE weights, and
//! blindly estimates each stream's effective gain from second-order symbol
//! statistics. Candidates from all combining vectors are ranked globally by
//! hard-decision SINR; the best few are decoded, CRC-checked, reconstructed,
//! and cancelled from every antenna, and the whole process repeats until no
//! new block decodes.

use std::collections::HashSet;

use num_complex::Complex64;

use crate::bsc::VectorSet;
use crate::channel::ReceiveGrid;
use crate::error::{Error, Result};
use crate::fec::FecCodec;
use crate::linalg::CMat;
use crate::waveform::{ChipGrid, SpreadingCodePool};

/// Tuning knobs of the blind detector.
#[derive(Debug, Clone, PartialEq)]
pub struct MudConfig {
    /// Codes kept per combined stream by the activity metric.
    pub codes_per_stream: usize,
    /// Candidates decoded per round across all streams (decode budget).
    pub decode_budget: usize,
    /// Maximum detection/cancellation rounds.
    pub max_rounds: usize,
    /// Hard-decision SINR is clipped here (dB) to keep ranking finite.
    pub sinr_cap_db: f64,
    /// Diagonal loading for the covariance estimate, as a fraction of the
    /// average chip power.
    pub diagonal_loading: f64,
}

impl Default for MudConfig {
    fn default() -> Self {
        MudConfig {
            codes_per_stream: 8,
            decode_budget: 16,
            max_rounds: 8,
            sinr_cap_db: 40.0,
            diagonal_loading: 1e-3,
        }
    }
}

/// Chip-level covariance of one combined stream, with diagonal loading.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// R = (1/T) sum_t z_t z_t^H + eps I.
    pub matrix: CMat,
    /// Number of symbol columns averaged.
    pub num_symbols: usize,
}

/// Sample covariance over the columns of a combined stream.
///
/// `loading` adds `loading * mean-chip-power` to the diagonal so the matrix
/// stays invertible even for degenerate streams.
pub fn estimate_covariance(stream: &ChipGrid, loading: f64) -> CovarianceEstimate {
    let l = stream.spread_len();
    let t = stream.num_symbols().max(1);
    let mut r = CMat::zeros(l);
    for col in 0..stream.num_symbols() {
        r.accumulate_outer(stream.column(col), 1.0);
    }
    r.scale(1.0 / t as f64);
    let eps = loading * r.trace_real() / l as f64;
    r.add_scaled_identity(eps.max(f64::MIN_POSITIVE));
    r.hermitize();
    CovarianceEstimate { matrix: r, num_symbols: stream.num_symbols() }
}

/// MMSE activity metric c^H R^-1 c: low for codes present in the stream.
pub fn mmse_metric(cov: &CovarianceEstimate, code: &[Complex64]) -> Result<f64> {
    let chol = cov.matrix.cholesky()?;
    Ok(chol.quad_form_inv(code))
}

/// Indices of the `count` most active pool codes (smallest metric first;
/// metric ties break toward the lower code index).
pub fn select_active(
    cov: &CovarianceEstimate,
    pool: &SpreadingCodePool,
    count: usize,
) -> Result<Vec<usize>> {
    let chol = cov.matrix.cholesky()?;
    let mut scored: Vec<(f64, usize)> = (0..pool.len())
        .map(|idx| (chol.quad_form_inv(pool.code(idx)), idx))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(count).map(|(_, idx)| idx).collect())
}

/// MMSE despreading weights for one code: w = R^-1 c / (c^H R^-1 c).
/// The normalization makes the despreader unbiased: w^H c = 1.
pub fn mmse_weights(cov: &CovarianceEstimate, code: &[Complex64]) -> Result<Vec<Complex64>> {
    let chol = cov.matrix.cholesky()?;
    let rinv_c = chol.solve(code);
    let denom: Complex64 = code.iter().zip(&rinv_c).map(|(c, w)| c.conj() * w).sum();
    if !(denom.re > 0.0) || !denom.re.is_finite() {
        return Err(Error::Numerical(format!(
            "despreader normalization {denom} not positive"
        )));
    }
    Ok(rinv_c.iter().map(|w| w / denom.re).collect())
}

/// Despread every column of a stream with fixed weights.
pub fn despread(stream: &ChipGrid, weights: &[Complex64]) -> Vec<Complex64> {
    (0..stream.num_symbols())
        .map(|t| {
            stream
                .column(t)
                .iter()
                .zip(weights)
                .map(|(z, w)| w.conj() * z)
                .sum()
        })
        .collect()
}

/// Blind estimate of a despread stream's effective complex gain.
#[derive(Debug, Clone, Copy)]
pub struct GainEstimate {
    /// Principal square root of the second-moment estimate; the true gain is
    /// this value or its negation (BPSK leaves a sign ambiguity).
    pub gain: Complex64,
    /// True when the second moment was too weak to trust against the
    /// estimator's own sampling noise.
    pub low_confidence: bool,
}

/// Estimate the complex gain g of u_t = g * b_t + noise with BPSK b_t from
/// the second moment: E[u^2] = g^2 (the data average to zero out).
///
/// BPSK squares to one, so mean(u_t^2) -> g^2 regardless of the data; the
/// principal square root recovers g up to sign. The confidence flag compares
/// |mean(u^2)| against the sqrt(2/T) relative sampling deviation of the
/// mean-power estimate.
pub fn estimate_gain(symbols: &[Complex64]) -> GainEstimate {
    let t = symbols.len().max(1) as f64;
    let m2: Complex64 = symbols.iter().map(|u| u * u).sum::<Complex64>() / t;
    let power: f64 = symbols.iter().map(|u| u.norm_sqr()).sum::<f64>() / t;
    let gain = m2.sqrt();
    let low_confidence = m2.norm() < 3.0 * power * (2.0 / t).sqrt();
    GainEstimate { gain, low_confidence }
}

/// Hard-decision SINR (dB) of a despread stream under an assumed gain.
///
/// The stream is normalized by the gain, folded onto the positive half-plane
/// with the hard decision sign(Re), and the ratio of coherent power to
/// residual variance is reported. The fold makes the value invariant to the
/// BPSK sign ambiguity. Streams with no coherent component give -inf.
pub fn hd_sinr_db(symbols: &[Complex64], gain: Complex64, cap_db: f64) -> f64 {
    if symbols.is_empty() || gain.norm_sqr() <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let t = symbols.len() as f64;
    let mut mean = Complex64::new(0.0, 0.0);
    let mut power = 0.0;
    for u in symbols {
        let d = u / gain;
        let folded = if d.re < 0.0 { -d } else { d };
        mean += folded;
        power += folded.norm_sqr();
    }
    mean /= t;
    power /= t;
    let var = (power - mean.norm_sqr()).max(0.0);
    let sig = mean.norm_sqr();
    if sig <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if var <= 0.0 {
        return cap_db;
    }
    (10.0 * (sig / var).log10()).min(cap_db)
}

/// One ranked decode candidate (a combined stream despread with one code).
#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub vector_index: usize,
    pub code_index: usize,
    pub sinr_db: f64,
    pub gain: Complex64,
    pub low_confidence: bool,
}

/// One successfully decoded block.
#[derive(Debug, Clone)]
pub struct DecodedStream {
    pub code_index: usize,
    pub info_bits: Vec<u8>,
    /// Round (1-based) in which the block decoded.
    pub round: usize,
    pub vector_index: usize,
    pub sinr_db: f64,
    /// Least-squares per-antenna channel estimate from the reconstructed chips.
    pub channel_estimate: Vec<Complex64>,
}

/// Per-round bookkeeping for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub candidates_ranked: usize,
    pub decode_attempts: usize,
    pub new_decodes: usize,
}

/// Everything the blind receiver recovered from one frame.
#[derive(Debug, Clone)]
pub struct MudResult {
    pub decoded: Vec<DecodedStream>,
    pub rounds: Vec<RoundDiagnostics>,
}

/// Decode one despread stream under the +gain then -gain hypothesis,
/// skipping the second when the first already passes CRC. Returns the number
/// of decoder calls and the passing block, if any.
pub(crate) fn decode_candidate(
    codec: &FecCodec,
    symbols: &[Complex64],
    gain: Complex64,
    noise_var: f64,
) -> Result<(usize, Option<Vec<u8>>)> {
    let mut attempts = 0usize;
    for sign in [1.0, -1.0] {
        attempts += 1;
        let g = gain * sign;
        let scale = 2.0 * g.norm_sqr() / noise_var.max(1e-12);
        let llrs: Vec<f64> = symbols.iter().map(|u| (u / g).re * scale).collect();
        let out = codec.decode(&llrs)?;
        if out.crc_pass {
            return Ok((attempts, Some(out.block)));
        }
    }
    Ok((attempts, None))
}

/// The pool code whose spread waveform captures the most least-squares
/// energy from the grid for a known symbol stream, summed over antennas.
///
/// A strong user's payload can first pass CRC through a cross-correlated
/// code ("ghost" pass); cancelling under that code would subtract a leakage-
/// shaped sliver and strand the user's full-power signal in the residual.
/// Re-attributing the decoded symbols to their best-fitting code makes the
/// cancellation subtract the waveform that is actually present. Unit-norm
/// codes make the fit energies directly comparable; ties break to the
/// lowest index.
pub fn attribute_code(
    grid: &ReceiveGrid,
    pool: &SpreadingCodePool,
    symbols: &[Complex64],
) -> usize {
    // <spread(s, c), y_a> = c^H d_a with d_a[l] = sum_t conj(s_t) y_a[l, t],
    // so one sweep of the grid serves all pool codes.
    let l = pool.spread_len();
    let d: Vec<Vec<Complex64>> = grid
        .antennas
        .iter()
        .map(|y| {
            let mut v = vec![Complex64::new(0.0, 0.0); l];
            for t in 0..y.num_symbols().min(symbols.len()) {
                let st = symbols[t].conj();
                for (vi, &yc) in v.iter_mut().zip(y.column(t)) {
                    *vi += st * yc;
                }
            }
            v
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for idx in 0..pool.len() {
        let code = pool.code(idx);
        let energy: f64 = d
            .iter()
            .map(|da| {
                let ip: Complex64 =
                    code.iter().zip(da).map(|(c, dd)| c.conj() * dd).sum();
                ip.norm_sqr()
            })
            .sum();
        if energy > best.0 {
            best = (energy, idx);
        }
    }
    best.1
}

/// Least-squares channel estimate and cancellation of one reconstructed
/// transmission: per antenna a, h_a = <x, y_a> / ||x||^2, then y_a -= h_a x.
/// Returns the per-antenna estimates.
pub fn reconstruct_and_cancel(
    grid: &mut ReceiveGrid,
    chips: &ChipGrid,
) -> Result<Vec<Complex64>> {
    let energy = chips.norm_sqr();
    if energy <= 0.0 {
        return Err(Error::Numerical("cannot cancel an all-zero stream".into()));
    }
    let mut estimates = Vec::with_capacity(grid.antennas.len());
    for y in &mut grid.antennas {
        let h = chips.dot_conj(y) / energy;
        y.sub_scaled(chips, h);
        estimates.push(h);
    }
    Ok(estimates)
}

/// Run the full blind detector over one received frame.
///
/// Every combining vector produces one stream; every stream nominates its
/// most active codes; all (vector, code) candidates are ranked together by
/// hard-decision SINR and the top `decode_budget` are decoded with both gain
/// signs (the negated gain is skipped when the first sign already passes
/// CRC). Passing blocks are de-duplicated on payload, re-attributed to their
/// best-fitting code, reconstructed, and cancelled at the end of the round;
/// rounds repeat until nothing new decodes.
pub fn run_mud(
    grid: &ReceiveGrid,
    pool: &SpreadingCodePool,
    set: &VectorSet,
    codec: &FecCodec,
    config: &MudConfig,
) -> Result<MudResult> {
    if grid.num_antennas() != set.num_antennas() {
        return Err(Error::Usage(format!(
            "{} antennas but combining vectors expect {}",
            grid.num_antennas(),
            set.num_antennas()
        )));
    }
    if grid.antennas.is_empty() {
        return Err(Error::Usage("empty receive grid".into()));
    }
    let spread_len = grid.antennas[0].spread_len();
    if pool.spread_len() != spread_len {
        return Err(Error::Usage(format!(
            "pool spread length {} does not match grid {}",
            pool.spread_len(),
            spread_len
        )));
    }

    let mut work = grid.clone();
    let mut decoded: Vec<DecodedStream> = Vec::new();
    // Keyed by payload alone: once a block is decoded and cancelled, a later
    // CRC pass on the same payload is residual leakage (possibly despread
    // under a different code) and must not re-enter the cancellation queue.
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut rounds = Vec::new();

    for round in 1..=config.max_rounds {
        // Rank all (vector, code) candidates by hard-decision SINR.
        let mut candidates: Vec<(DetectionRecord, Vec<Complex64>)> = Vec::new();
        for (v_idx, v) in set.vectors().enumerate() {
            let stream = crate::bsc::combine(&work.antennas, v)?;
            let cov = estimate_covariance(&stream, config.diagonal_loading);
            let active = select_active(&cov, pool, config.codes_per_stream)?;
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
                candidates.push((
                    DetectionRecord {
                        vector_index: v_idx,
                        code_index: code_idx,
                        sinr_db,
                        gain: est.gain,
                        low_confidence: est.low_confidence,
                    },
                    symbols,
                ));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.sinr_db
                .total_cmp(&a.0.sinr_db)
                .then(a.0.vector_index.cmp(&b.0.vector_index))
                .then(a.0.code_index.cmp(&b.0.code_index))
        });

        let mut attempts = 0usize;
        let mut new_decodes = 0usize;
        let ranked = candidates.len();
        let mut cancel_queue: Vec<(DecodedStream, ChipGrid)> = Vec::new();
        for (record, symbols) in candidates.into_iter().take(config.decode_budget) {
            let (calls, block) =
                decode_candidate(codec, &symbols, record.gain, work.noise_var)?;
            attempts += calls;
            let Some(block) = block else { continue };
            let info = codec.info_bits(&block).to_vec();
            if seen.insert(info.clone()) {
                // Rebuild the clean chip stream for cancellation, under the
                // code the block was most plausibly transmitted with (which
                // is not always the code it was despread with).
                let coded = codec.encode_block(&block)?;
                let syms = crate::waveform::modulate_bits(&coded);
                let code_index = attribute_code(&work, pool, &syms);
                let chips =
                    crate::waveform::spread_symbols(&syms, pool.code(code_index));
                cancel_queue.push((
                    DecodedStream {
                        code_index,
                        info_bits: info,
                        round,
                        vector_index: record.vector_index,
                        sinr_db: record.sinr_db,
                        channel_estimate: Vec::new(),
                    },
                    chips,
                ));
                new_decodes += 1;
            }
        }

        for (mut stream, chips) in cancel_queue {
            stream.channel_estimate = reconstruct_and_cancel(&mut work, &chips)?;
            decoded.push(stream);
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

    Ok(MudResult { decoded, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsc::VectorSetKind;
    use crate::channel::{apply_channel, draw_channels};
    use crate::fec::FecCodec;
    use crate::waveform::{
        encode_transmission, spread_symbols, PoolSpec, SpreadingCodePool,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dft4_pool() -> SpreadingCodePool {
        // Orthonormal 4-point DFT columns: a clean covariance testbed.
        let codes: Vec<Vec<Complex64>> = (0..4)
            .map(|k| {
                (0..4)
                    .map(|n| {
                        Complex64::from_polar(
                            0.5,
                            -2.0 * std::f64::consts::PI * (k * n) as f64 / 4.0,
                        )
                    })
                    .collect()
            })
            .collect();
        SpreadingCodePool::from_codes(codes).unwrap()
    }

    fn musa_pool() -> SpreadingCodePool {
        SpreadingCodePool::build_pool(&PoolSpec {
            pool_size: 64,
            spread_len: 4,
            seed: 7,
        })
        .unwrap()
    }

    fn random_bpsk(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0))
            .collect()
    }

    /// R for one unit code at amplitude a in noise var s over T -> exact
    /// matrix a^2 cc^H + s I; check metric against the Sherman-Morrison
    /// closed form for 100 random (a, s) pairs.
    #[test]
    fn test_activity_metric_matches_rank_one_closed_form() {
        let pool = dft4_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let a: f64 = 0.2 + 2.0 * rng.random::<f64>();
            let s: f64 = 0.05 + rng.random::<f64>();
            let code_idx = trial % 4;
            let code = pool.code(code_idx).to_vec();
            // Build the exact covariance a^2 cc^H + s I.
            let mut r = CMat::zeros(4);
            r.accumulate_outer(&code, a * a);
            r.add_scaled_identity(s);
            r.hermitize();
            let cov = CovarianceEstimate { matrix: r, num_symbols: 1000 };
            // Sherman-Morrison: c^H (a^2 cc^H + sI)^-1 c with ||c|| = 1
            // equals 1 / (s + a^2).
            let expect_active = 1.0 / (s + a * a);
            let metric = mmse_metric(&cov, &code).unwrap();
            assert!(
                (metric - expect_active).abs() < 1e-9,
                "active code: {metric} vs {expect_active}"
            );
            // An orthogonal code sees only the identity part: metric 1/s.
            let other = pool.code((code_idx + 1) % 4);
            let metric_other = mmse_metric(&cov, other).unwrap();
            assert!(
                (metric_other - 1.0 / s).abs() < 1e-9,
                "inactive code: {metric_other} vs {}",
                1.0 / s
            );
            assert!(metric < metric_other);
        }
    }

    #[test]
    fn test_sample_covariance_converges_to_rank_one_form() {
        let pool = dft4_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = 20000;
        let syms = random_bpsk(&mut rng, t);
        let stream = spread_symbols(&syms, pool.code(2));
        let cov = estimate_covariance(&stream, 0.0);
        // Noiseless single code: R -> cc^H exactly (BPSK squares to 1).
        for i in 0..4 {
            for j in 0..4 {
                let expect = pool.code(2)[i] * pool.code(2)[j].conj();
                let got = cov.matrix.get(i, j);
                assert!((got - expect).norm() < 1e-12, "R[{i}{j}]");
            }
        }
    }

    #[test]
    fn test_select_active_finds_planted_codes() {
        let pool = musa_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 500;
        let active = [3usize, 17, 40, 61];
        let mut stream = ChipGrid::zeros(4, t);
        for &idx in &active {
            let syms = random_bpsk(&mut rng, t);
            let x = spread_symbols(&syms, pool.code(idx));
            stream.add_scaled(&x, c(1.0, 0.0));
        }
        // Mild noise.
        for re in stream.as_mut_slice() {
            *re += crate::channel::draw_cn(&mut rng) * 0.1;
        }
        let cov = estimate_covariance(&stream, 1e-3);
        let picked = select_active(&cov, &pool, 8).unwrap();
        for idx in active {
            assert!(picked.contains(&idx), "code {idx} missed: {picked:?}");
        }
    }

    #[test]
    fn test_select_active_breaks_metric_ties_by_index() {
        let pool = dft4_pool();
        // Pure identity covariance: every code scores exactly the same.
        let mut r = CMat::zeros(4);
        r.add_scaled_identity(1.0);
        let cov = CovarianceEstimate { matrix: r, num_symbols: 100 };
        let picked = select_active(&cov, &pool, 3).unwrap();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn test_mmse_weights_are_unbiased_for_their_code() {
        let pool = musa_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = 2000;
        let mut stream = ChipGrid::zeros(4, t);
        for idx in [10usize, 30] {
            let syms = random_bpsk(&mut rng, t);
            stream.add_scaled(&spread_symbols(&syms, pool.code(idx)), c(1.0, 0.0));
        }
        let cov = estimate_covariance(&stream, 1e-3);
        let w = mmse_weights(&cov, pool.code(10)).unwrap();
        let unbias: Complex64 = pool.code(10).iter().zip(&w).map(|(cc, ww)| ww.conj() * cc).sum();
        assert!((unbias - c(1.0, 0.0)).norm() < 1e-9, "w^H c = {unbias}");
    }

    #[test]
    fn test_despread_is_matched_filter_in_white_noise() {
        // With R = I the MMSE weights reduce to the code itself, so
        // despreading one clean column returns the symbol exactly.
        let pool = dft4_pool();
        let mut r = CMat::zeros(4);
        r.add_scaled_identity(1.0);
        let cov = CovarianceEstimate { matrix: r, num_symbols: 100 };
        let w = mmse_weights(&cov, pool.code(1)).unwrap();
        for (ww, cc) in w.iter().zip(pool.code(1)) {
            assert!((ww - cc).norm() < 1e-12);
        }
        let syms = [c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)];
        let stream = spread_symbols(&syms, pool.code(1));
        let out = despread(&stream, &w);
        for (o, s) in out.iter().zip(&syms) {
            assert!((o - s).norm() < 1e-12);
        }
    }

    #[test]
    fn test_gain_estimate_recovers_complex_gain_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let g = crate::channel::draw_cn(&mut rng) + c(0.1, 0.1);
            let syms: Vec<Complex64> =
                random_bpsk(&mut rng, 4000).iter().map(|b| b * g).collect();
            let est = estimate_gain(&syms);
            assert!(!est.low_confidence);
            let d_plus = (est.gain - g).norm();
            let d_minus = (est.gain + g).norm();
            assert!(
                d_plus.min(d_minus) < 1e-9,
                "gain {g} estimated as {}",
                est.gain
            );
        }
    }

    #[test]
    fn test_gain_estimate_flags_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut flagged = 0;
        for _ in 0..50 {
            let noise: Vec<Complex64> =
                (0..167).map(|_| crate::channel::draw_cn(&mut rng)).collect();
            if estimate_gain(&noise).low_confidence {
                flagged += 1;
            }
        }
        assert!(flagged >= 45, "only {flagged}/50 noise streams flagged");
    }

    #[test]
    fn test_hd_sinr_is_sign_invariant_and_monotone_in_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = c(0.8, -0.6);
        let bits = random_bpsk(&mut rng, 2000);
        let make = |noise_amp: f64, rng: &mut ChaCha8Rng| -> Vec<Complex64> {
            bits.iter()
                .map(|b| b * g + crate::channel::draw_cn(rng) * noise_amp)
                .collect()
        };
        let clean = make(0.05, &mut rng);
        let dirty = make(0.5, &mut rng);
        let s_clean = hd_sinr_db(&clean, g, 40.0);
        let s_dirty = hd_sinr_db(&dirty, g, 40.0);
        assert!(s_clean > s_dirty + 10.0, "{s_clean} vs {s_dirty}");
        // Same value under the flipped gain hypothesis.
        let flipped = hd_sinr_db(&clean, -g, 40.0);
        assert!((s_clean - flipped).abs() < 1e-9);
        // Cap engages for a noiseless stream.
        let perfect: Vec<Complex64> = bits.iter().map(|b| b * g).collect();
        assert_eq!(hd_sinr_db(&perfect, g, 40.0), 40.0);
        assert_eq!(hd_sinr_db(&[], g, 40.0), f64::NEG_INFINITY);
    }

    #[test]
    fn test_reconstruct_and_cancel_removes_known_stream_exactly() {
        let pool = musa_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let syms = random_bpsk(&mut rng, 167);
        let chips = spread_symbols(&syms, pool.code(5));
        let h = [c(0.3, -1.2), c(0.9, 0.4)];
        let mut grid = ReceiveGrid {
            antennas: h
                .iter()
                .map(|&ha| {
                    let mut g = ChipGrid::zeros(4, 167);
                    g.add_scaled(&chips, ha);
                    g
                })
                .collect(),
            noise_var: 0.0,
        };
        let est = reconstruct_and_cancel(&mut grid, &chips).unwrap();
        for a in 0..2 {
            assert!((est[a] - h[a]).norm() < 1e-12);
            assert!(grid.antennas[a].norm_sqr() < 1e-20);
        }
    }

    fn run_frame(
        seed: u64,
        num_ues: usize,
        snr_db_re: f64,
        trials_t: usize,
    ) -> (MudResult, Vec<Vec<u8>>) {
        let codec = FecCodec::new(68, trials_t).unwrap();
        let pool = musa_pool();
        let set = VectorSet::builtin(VectorSetKind::V2Of6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut txs = Vec::new();
        let mut infos = Vec::new();
        for ue in 0..num_ues {
            let info: Vec<u8> = (0..68).map(|_| rng.random_range(0..2u8)).collect();
            let code_index = rng.random_range(0..pool.len());
            txs.push(
                encode_transmission(&codec, &pool, ue, code_index, &info, 0.0)
                    .unwrap(),
            );
            infos.push(info);
        }
        let channels = draw_channels(&mut rng, num_ues, 2);
        // Channel-level SNR argument references per-RE chip energy 1/L.
        let grid = apply_channel(
            &txs,
            &channels,
            2,
            4,
            trials_t,
            snr_db_re + 10.0 * 4.0f64.log10(),
            &mut rng,
        )
        .unwrap();
        let result =
            run_mud(&grid, &pool, &set, &codec, &MudConfig::default()).unwrap();
        (result, infos)
    }

    #[test]
    fn test_single_user_decodes_at_high_snr() {
        for seed in 0..10 {
            let (result, infos) = run_frame(seed, 1, 15.0, 167);
            assert_eq!(result.decoded.len(), 1, "seed {seed}");
            assert_eq!(result.decoded[0].info_bits, infos[0]);
        }
    }

    #[test]
    fn test_four_users_mostly_recovered_at_high_snr() {
        let mut recovered = 0usize;
        let mut sent = 0usize;
        for seed in 100..120 {
            let (result, infos) = run_frame(seed, 4, 15.0, 167);
            sent += infos.len();
            for info in &infos {
                if result.decoded.iter().any(|d| &d.info_bits == info) {
                    recovered += 1;
                }
            }
        }
        assert!(
            recovered * 100 >= sent * 95,
            "only {recovered}/{sent} blocks recovered"
        );
    }

    #[test]
    fn test_run_mud_is_deterministic() {
        let (a, _) = run_frame(7, 4, 10.0, 167);
        let (b, _) = run_frame(7, 4, 10.0, 167);
        assert_eq!(a.decoded.len(), b.decoded.len());
        for (x, y) in a.decoded.iter().zip(&b.decoded) {
            assert_eq!(x.code_index, y.code_index);
            assert_eq!(x.info_bits, y.info_bits);
            assert_eq!(x.vector_index, y.vector_index);
            assert!((x.sinr_db - y.sinr_db).abs() < 1e-15);
        }
    }

    #[test]
    fn test_noise_only_frame_decodes_nothing() {
        let codec = FecCodec::new(68, 167).unwrap();
        let pool = musa_pool();
        let set = VectorSet::builtin(VectorSetKind::V2Of6);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let grid = apply_channel(&[], &[], 2, 4, 167, 10.0, &mut rng).unwrap();
        let result =
            run_mud(&grid, &pool, &set, &codec, &MudConfig::default()).unwrap();
        assert!(
            result.decoded.is_empty(),
            "decoded {} blocks from pure noise",
            result.decoded.len()
        );
        assert_eq!(result.rounds.len(), 1);
    }

    #[test]
    fn test_run_mud_validates_shapes() {
        let codec = FecCodec::new(68, 167).unwrap();
        let pool = musa_pool();
        let set = VectorSet::builtin(VectorSetKind::V4Of24);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = apply_channel(&[], &[], 2, 4, 167, 10.0, &mut rng).unwrap();
        // 2-antenna grid with 4-antenna vector set.
        assert!(run_mud(&grid, &pool, &set, &codec, &MudConfig::default()).is_err());
    }
}
