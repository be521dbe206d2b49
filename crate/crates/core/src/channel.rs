//! Flat Rayleigh block-fading channel and per-antenna receive grid.
//!
//! Every user sees one complex gain per receive antenna, constant across the
//! frame; the receiver adds circularly symmetric complex Gaussian noise of
//! variance `10^(-snr_db/10)` per resource element per antenna.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::waveform::{ChipGrid, UeTransmission};

/// One draw of CN(0, 1): independent real and imaginary parts of variance 1/2.
pub fn draw_cn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Per-antenna gains for one user: iid CN(0, 1).
pub fn draw_channel(rng: &mut impl Rng, num_antennas: usize) -> Vec<Complex64> {
    (0..num_antennas).map(|_| draw_cn(rng)).collect()
}

/// Per-antenna gains for every user in a frame.
pub fn draw_channels(
    rng: &mut impl Rng,
    num_ues: usize,
    num_antennas: usize,
) -> Vec<Vec<Complex64>> {
    (0..num_ues).map(|_| draw_channel(rng, num_antennas)).collect()
}

/// What the antenna array sees over one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveGrid {
    pub antennas: Vec<ChipGrid>,
    /// Noise variance per resource element per antenna.
    pub noise_var: f64,
}

impl ReceiveGrid {
    pub fn num_antennas(&self) -> usize {
        self.antennas.len()
    }
}

/// Superimpose all transmissions through their channels and add receiver
/// noise of variance `10^(-snr_db/10)` per resource element.
pub fn apply_channel(
    txs: &[UeTransmission],
    channels: &[Vec<Complex64>],
    num_antennas: usize,
    spread_len: usize,
    num_symbols: usize,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<ReceiveGrid> {
    if txs.len() != channels.len() {
        return Err(Error::Usage(format!(
            "{} transmissions but {} channels",
            txs.len(),
            channels.len()
        )));
    }
    if num_antennas == 0 {
        return Err(Error::Config("need at least one antenna".into()));
    }
    for (k, (tx, h)) in txs.iter().zip(channels).enumerate() {
        if h.len() != num_antennas {
            return Err(Error::Usage(format!(
                "channel {k} has {} gains, expected {num_antennas}",
                h.len()
            )));
        }
        if tx.chips.spread_len() != spread_len || tx.chips.num_symbols() != num_symbols
        {
            return Err(Error::Usage(format!(
                "transmission {k} is {}x{}, expected {spread_len}x{num_symbols}",
                tx.chips.spread_len(),
                tx.chips.num_symbols()
            )));
        }
    }

    let noise_var = 10f64.powf(-snr_db / 10.0);
    let noise_amp = noise_var.sqrt();
    let mut antennas = Vec::with_capacity(num_antennas);
    for a in 0..num_antennas {
        let mut grid = ChipGrid::zeros(spread_len, num_symbols);
        for (tx, h) in txs.iter().zip(channels) {
            grid.add_scaled(&tx.chips, h[a]);
        }
        if noise_amp > 0.0 {
            for re in grid.as_mut_slice() {
                *re += draw_cn(rng) * noise_amp;
            }
        }
        antennas.push(grid);
    }
    Ok(ReceiveGrid { antennas, noise_var })
}
