//! Monte-Carlo harness: derives one independent RNG per trial, builds the
//! frame, runs the scenario's receiver, and aggregates block error counts
//! into BLER curves.
//!
//! Energy reference: a scenario's `snr_db` axis is defined at the level of
//! one user's data chips per resource element. Spread symbols carry energy
//! 1/spread_len per element (unit-norm codes), so the channel's noise
//! argument is `snr_db + 10*log10(spread_len)`, which sets the noise
//! variance to `10^(-snr_db/10) / spread_len`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{
    build_preamble_frame, ideal_mmse_sic, preamble_receiver, IdealUser,
    PreambleRxConfig,
};
use crate::bsc::{CscMode, VectorSet, VectorSetKind};
use crate::channel::{apply_channel, draw_channels, ReceiveGrid};
use crate::error::{Error, Result};
use crate::fec::FecCodec;
use crate::mud::{run_mud, MudConfig};
use crate::results::{bler_point, BlerPoint, ScenarioRun};
use crate::scenario::{ReceiverKind, Scenario};
use crate::waveform::{
    encode_transmission, PoolSpec, PreamblePool, SpreadingCodePool, UeTransmission,
};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (SNR point, trial) cell: a splitmix64 chain over the master
/// seed and both indices, so every trial is an independent stream and any
/// single trial can be reproduced in isolation.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    let mut s = master;
    let mixed_master = splitmix64(&mut s);
    let mut s = mixed_master ^ (point as u64);
    let mixed_point = splitmix64(&mut s);
    let mut s = mixed_point ^ (trial as u64);
    splitmix64(&mut s)
}

/// Channel-level SNR argument for a data-chip-referenced scenario SNR.
pub fn channel_snr_arg(snr_db: f64, spread_len: usize) -> f64 {
    snr_db + 10.0 * (spread_len as f64).log10()
}

/// Immutable per-campaign state shared by every trial.
#[derive(Debug, Clone)]
pub struct TrialContext {
    scenario: Scenario,
    pool: SpreadingCodePool,
    preamble_pool: Option<PreamblePool>,
    codec: FecCodec,
    vector_set: Option<VectorSet>,
}

impl TrialContext {
    pub fn new(scenario: &Scenario) -> Result<TrialContext> {
        scenario.validate()?;
        let pool = SpreadingCodePool::build_pool(&PoolSpec {
            pool_size: scenario.pool_size,
            spread_len: scenario.spread_len,
            seed: scenario.pool_seed,
        })?;
        let codec = FecCodec::new(
            scenario.resolved_info_bits(),
            scenario.resolved_spread_units(),
        )?;
        let preamble_pool = if scenario.receiver.is_preamble() {
            Some(PreamblePool::new(
                scenario.preamble_pool_size,
                scenario.preamble_len,
            )?)
        } else {
            None
        };
        let vector_set = match scenario.receiver {
            ReceiverKind::BlindBsc => {
                Some(VectorSet::builtin(scenario.vector_set))
            }
            _ => None,
        };
        Ok(TrialContext {
            scenario: scenario.clone(),
            pool,
            preamble_pool,
            codec,
            vector_set,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn pool(&self) -> &SpreadingCodePool {
        &self.pool
    }

    pub fn codec(&self) -> &FecCodec {
        &self.codec
    }

    fn mud_config(&self) -> MudConfig {
        MudConfig {
            codes_per_stream: self.scenario.codes_per_stream,
            decode_budget: self.scenario.decode_budget,
            max_rounds: self.scenario.max_rounds,
            ..MudConfig::default()
        }
    }

    fn preamble_config(&self) -> PreambleRxConfig {
        PreambleRxConfig {
            csc_mode: match self.scenario.receiver {
                ReceiverKind::PreambleZfc => CscMode::Zfc,
                _ => CscMode::Mrc,
            },
            codes_per_detection: self.scenario.codes_per_stream,
            decode_budget: self.scenario.decode_budget,
            max_rounds: self.scenario.max_rounds,
            ..PreambleRxConfig::default()
        }
    }
}

/// Everything one frame's transmitters drew.
#[derive(Debug, Clone)]
pub struct FrameDraw {
    pub txs: Vec<UeTransmission>,
    pub channels: Vec<Vec<Complex64>>,
    /// One entry per user in preamble mode, empty otherwise.
    pub preamble_indices: Vec<usize>,
}

impl FrameDraw {
    /// True when at least two users drew the same random signature (the
    /// spreading code, or the preamble where one is transmitted).
    pub fn has_signature_collision(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        if self.preamble_indices.is_empty() {
            self.txs.iter().any(|tx| !seen.insert(tx.code_index))
        } else {
            self.preamble_indices.iter().any(|&q| !seen.insert(q))
        }
    }
}

/// Draw one frame's payloads, signatures, and channels.
pub fn draw_frame(ctx: &TrialContext, rng: &mut impl Rng) -> Result<FrameDraw> {
    let s = &ctx.scenario;
    let info_len = ctx.codec.info_len();
    let mut txs = Vec::with_capacity(s.num_ues);
    let mut preamble_indices = Vec::new();
    for ue in 0..s.num_ues {
        let info: Vec<u8> = (0..info_len).map(|_| rng.random_range(0..2u8)).collect();
        let code_index = rng.random_range(0..ctx.pool.len());
        if let Some(ppool) = &ctx.preamble_pool {
            preamble_indices.push(rng.random_range(0..ppool.len()));
        }
        let offset = s.power_offsets_db.get(ue).copied().unwrap_or(0.0);
        txs.push(encode_transmission(
            &ctx.codec, &ctx.pool, ue, code_index, &info, offset,
        )?);
    }
    let channels = draw_channels(rng, s.num_ues, s.num_antennas);
    Ok(FrameDraw { txs, channels, preamble_indices })
}

/// Counts from one simulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub blocks_sent: u64,
    pub block_errors: u64,
    pub signature_collision: bool,
}

/// Simulate one frame at `snr point, trial` and count block errors.
///
/// The trial is a pure function of the context and the two indices: running
/// it alone gives bit-identical counts to the same cell inside a campaign.
pub fn run_single_trial(
    ctx: &TrialContext,
    point: usize,
    trial: usize,
) -> Result<TrialOutcome> {
    let s = &ctx.scenario;
    let snr_db = *s
        .snr_db
        .get(point)
        .ok_or_else(|| Error::Usage(format!("snr point {point} out of range")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(s.seed, point, trial));
    let frame = draw_frame(ctx, &mut rng)?;
    let num_symbols = ctx.codec.target_len();
    let chan_snr = channel_snr_arg(snr_db, s.spread_len);

    let mut errors = 0u64;
    match s.receiver {
        ReceiverKind::BlindBsc => {
            let grid = apply_channel(
                &frame.txs,
                &frame.channels,
                s.num_antennas,
                s.spread_len,
                num_symbols,
                chan_snr,
                &mut rng,
            )?;
            // The single-antenna receiver sees the same frame but keeps only
            // the first antenna.
            let grid = if s.vector_set == VectorSetKind::Single {
                ReceiveGrid {
                    antennas: vec![grid.antennas[0].clone()],
                    noise_var: grid.noise_var,
                }
            } else {
                grid
            };
            let set = ctx.vector_set.as_ref().expect("blind receiver has a set");
            let out = run_mud(&grid, &ctx.pool, set, &ctx.codec, &ctx.mud_config())?;
            // A block is delivered when its exact payload shows up anywhere
            // in the decoded set; the code index the receiver attributed it
            // to is irrelevant to the user.
            for tx in &frame.txs {
                let hit = out.decoded.iter().any(|d| d.info_bits == tx.info_bits);
                if !hit {
                    errors += 1;
                }
            }
        }
        ReceiverKind::IdealCsi => {
            let grid = apply_channel(
                &frame.txs,
                &frame.channels,
                s.num_antennas,
                s.spread_len,
                num_symbols,
                chan_snr,
                &mut rng,
            )?;
            let users: Vec<IdealUser> = frame
                .txs
                .iter()
                .zip(&frame.channels)
                .map(|(tx, h)| IdealUser {
                    code_index: tx.code_index,
                    channel: h.clone(),
                    amplitude: 10f64.powf(tx.power_offset_db / 20.0),
                })
                .collect();
            let out = ideal_mmse_sic(&grid, &ctx.pool, &ctx.codec, &users)?;
            for tx in &frame.txs {
                let hit = out.decoded.iter().any(|d| d.info_bits == tx.info_bits);
                if !hit {
                    errors += 1;
                }
            }
        }
        ReceiverKind::PreambleMrc | ReceiverKind::PreambleZfc => {
            let ppool = ctx.preamble_pool.as_ref().expect("preamble pool built");
            let pframe = build_preamble_frame(
                &frame.txs,
                &frame.preamble_indices,
                &frame.channels,
                ppool,
                s.num_antennas,
                s.spread_len,
                num_symbols,
                chan_snr,
                &mut rng,
            )?;
            let out = preamble_receiver(
                &pframe,
                ppool,
                &ctx.pool,
                &ctx.codec,
                &ctx.preamble_config(),
            )?;
            for tx in &frame.txs {
                let hit = out.decoded.iter().any(|d| d.info_bits == tx.info_bits);
                if !hit {
                    errors += 1;
                }
            }
        }
    }

    Ok(TrialOutcome {
        blocks_sent: s.num_ues as u64,
        block_errors: errors,
        signature_collision: frame.has_signature_collision(),
    })
}

/// Run every trial of one SNR point (in parallel) and aggregate.
pub fn run_point(ctx: &TrialContext, point: usize) -> Result<BlerPoint> {
    let s = &ctx.scenario;
    let snr_db = *s
        .snr_db
        .get(point)
        .ok_or_else(|| Error::Usage(format!("snr point {point} out of range")))?;
    let outcomes: Vec<TrialOutcome> = (0..s.trials)
        .into_par_iter()
        .map(|t| run_single_trial(ctx, point, t))
        .collect::<Result<_>>()?;
    let mut sent = 0u64;
    let mut errors = 0u64;
    let mut collisions = 0u64;
    for o in &outcomes {
        sent += o.blocks_sent;
        errors += o.block_errors;
        collisions += u64::from(o.signature_collision);
    }
    let frac = collisions as f64 / s.trials as f64;
    Ok(bler_point(snr_db, sent, errors, Some(frac)))
}

/// Run a whole campaign: every SNR point of the scenario.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun> {
    let ctx = TrialContext::new(scenario)?;
    let mut points = Vec::with_capacity(scenario.snr_db.len());
    for point in 0..scenario.snr_db.len() {
        points.push(run_point(&ctx, point)?);
    }
    Ok(ScenarioRun { scenario: scenario.name.clone(), points })
}
