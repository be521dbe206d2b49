//! Declarative simulation campaigns: which receiver, how many users, which
//! SNR grid, how many trials. Scenarios load from TOML and validate before
//! anything runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bsc::VectorSetKind;
use crate::error::{Error, Result};
use crate::fec::CRC_BITS;

/// Which receiver processes the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    /// Data-only blind detection over the built-in combining-vector set.
    BlindBsc,
    /// Perfect-CSI MMSE-SIC upper bound.
    IdealCsi,
    /// Preamble-assisted detection with maximum-ratio combining.
    PreambleMrc,
    /// Preamble-assisted detection with zero-forcing combining.
    PreambleZfc,
}

impl ReceiverKind {
    pub fn is_preamble(self) -> bool {
        matches!(self, ReceiverKind::PreambleMrc | ReceiverKind::PreambleZfc)
    }
}

fn default_num_antennas() -> usize {
    2
}
fn default_vector_set() -> VectorSetKind {
    VectorSetKind::V2Of6
}
fn default_seed() -> u64 {
    1
}
fn default_spread_len() -> usize {
    4
}
fn default_pool_size() -> usize {
    64
}
fn default_pool_seed() -> u64 {
    7
}
fn default_preamble_pool_size() -> usize {
    64
}
fn default_preamble_len() -> usize {
    336
}
fn default_decode_budget() -> usize {
    16
}
fn default_codes_per_stream() -> usize {
    8
}
fn default_max_rounds() -> usize {
    8
}

/// One simulation campaign. Unknown keys in the TOML are rejected so typos
/// fail loudly instead of silently running defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub receiver: ReceiverKind,
    /// Users transmitting in every frame.
    pub num_ues: usize,
    /// SNR grid in dB, referenced to the per-resource-element energy of one
    /// user's data chips.
    pub snr_db: Vec<f64>,
    /// Monte-Carlo frames per SNR point.
    pub trials: usize,
    #[serde(default = "default_num_antennas")]
    pub num_antennas: usize,
    /// Combining-vector set for the blind receiver ("single" listens to the
    /// first antenna only, whatever num_antennas says).
    #[serde(default = "default_vector_set")]
    pub vector_set: VectorSetKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_spread_len")]
    pub spread_len: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_pool_seed")]
    pub pool_seed: u64,
    /// Data symbols per frame; defaults to 167 for data-only frames and 84
    /// for preamble frames (whose preamble occupies the difference).
    #[serde(default)]
    pub spread_units: Option<usize>,
    /// Payload bits per block; defaults to 68, or 26 for preamble frames
    /// with `half_tb` set.
    #[serde(default)]
    pub info_bits: Option<usize>,
    /// Preamble frames only: carry half a transport block (26 info bits) so
    /// the code rate stays 1/2 despite the shorter data region. Off by
    /// default: the full 84-bit block then rides at effective rate 1, which
    /// is the cost of spending half the frame on preambles.
    #[serde(default)]
    pub half_tb: bool,
    #[serde(default = "default_preamble_pool_size")]
    pub preamble_pool_size: usize,
    #[serde(default = "default_preamble_len")]
    pub preamble_len: usize,
    #[serde(default = "default_decode_budget")]
    pub decode_budget: usize,
    #[serde(default = "default_codes_per_stream")]
    pub codes_per_stream: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Per-user transmit power offsets in dB; empty means all users nominal.
    #[serde(default)]
    pub power_offsets_db: Vec<f64>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml_str(&text)
    }

    /// Data symbols per frame.
    pub fn resolved_spread_units(&self) -> usize {
        self.spread_units.unwrap_or(if self.receiver.is_preamble() {
            84
        } else {
            167
        })
    }

    /// Payload bits per block.
    pub fn resolved_info_bits(&self) -> usize {
        self.info_bits.unwrap_or(if self.receiver.is_preamble() && self.half_tb {
            26
        } else {
            68
        })
    }

    /// Users per chip of spreading: 16 users over length-4 codes is 400%.
    pub fn overloading_percent(&self) -> f64 {
        100.0 * self.num_ues as f64 / self.spread_len as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        if self.num_ues == 0 {
            return Err(Error::Config("num_ues must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db grid is empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db entries must be finite".into()));
        }
        if self.num_antennas == 0 {
            return Err(Error::Config("num_antennas must be positive".into()));
        }
        if self.spread_len == 0 {
            return Err(Error::Config("spread_len must be positive".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be positive".into()));
        }
        if self.receiver == ReceiverKind::BlindBsc {
            let set_antennas = self.vector_set.num_antennas();
            let ok = match self.vector_set {
                // The single-antenna receiver drops down to one antenna no
                // matter how many the array has.
                VectorSetKind::Single => self.num_antennas >= 1,
                _ => set_antennas == self.num_antennas,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "vector set expects {set_antennas} antennas, scenario has {}",
                    self.num_antennas
                )));
            }
        }
        if self.receiver.is_preamble() {
            if self.preamble_pool_size == 0
                || self.preamble_pool_size > self.preamble_len
            {
                return Err(Error::Config(format!(
                    "preamble_pool_size {} outside [1, {}]",
                    self.preamble_pool_size, self.preamble_len
                )));
            }
        }
        let info = self.resolved_info_bits();
        let block = info + CRC_BITS;
        let target = self.resolved_spread_units();
        if info == 0 {
            return Err(Error::Config("info_bits must be positive".into()));
        }
        if target < block || target > 2 * block {
            return Err(Error::Config(format!(
                "spread_units {target} outside [{block}, {}] for {info} info bits",
                2 * block
            )));
        }
        if !self.power_offsets_db.is_empty()
            && self.power_offsets_db.len() != self.num_ues
        {
            return Err(Error::Config(format!(
                "power_offsets_db has {} entries for {} users",
                self.power_offsets_db.len(),
                self.num_ues
            )));
        }
        Ok(())
    }
}

/// Load every `*.toml` scenario in a directory, sorted by name.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            out.push(Scenario::from_path(&path)?);
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
