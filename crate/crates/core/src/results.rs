//! Campaign outputs: per-SNR-point block error rates with Wilson confidence
//! intervals, serialized as CSV or JSON.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One SNR point of a BLER curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlerPoint {
    pub snr_db: f64,
    pub blocks_sent: u64,
    pub block_errors: u64,
    pub bler: f64,
    /// 95% Wilson interval bounds.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction of frames where at least two users picked the same random
    /// signature (spreading code, or preamble in preamble mode). Carried in
    /// JSON output only; the CSV column set stays fixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature_collision_frac: Option<f64>,
}

/// A named set of points, as emitted to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: String,
    pub points: Vec<BlerPoint>,
}

/// Wilson score interval for `errors` failures out of `total`.
///
/// At zero errors the lower bound is exactly 0 and at `errors == total` the
/// upper bound is exactly 1 (both are algebraic identities of the score
/// form, not special cases).
pub fn wilson_interval(errors: u64, total: u64, z: f64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Assemble a curve point from raw counts with a 95% interval.
pub fn bler_point(
    snr_db: f64,
    blocks_sent: u64,
    block_errors: u64,
    signature_collision_frac: Option<f64>,
) -> BlerPoint {
    let bler = if blocks_sent == 0 {
        0.0
    } else {
        block_errors as f64 / blocks_sent as f64
    };
    let (ci_low, ci_high) = wilson_interval(block_errors, blocks_sent, 1.96);
    BlerPoint {
        snr_db,
        blocks_sent,
        block_errors,
        bler,
        ci_low,
        ci_high,
        signature_collision_frac,
    }
}

pub const CSV_HEADER: &str = "snr_db,blocks_sent,block_errors,bler,ci_low,ci_high";

/// Render points as CSV with the fixed header. Floats use the shortest
/// representation that round-trips, so re-parsing is lossless.
pub fn emit_csv(points: &[BlerPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.snr_db, p.blocks_sent, p.block_errors, p.bler, p.ci_low, p.ci_high
        ));
    }
    out
}

/// Parse CSV produced by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<BlerPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Usage(format!(
                "bad csv header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Usage(format!(
                "line {}: expected 6 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Usage(format!("line {}: {e}", i + 2)))
        };
        let parse_u = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::Usage(format!("line {}: {e}", i + 2)))
        };
        out.push(BlerPoint {
            snr_db: parse_f(fields[0])?,
            blocks_sent: parse_u(fields[1])?,
            block_errors: parse_u(fields[2])?,
            bler: parse_f(fields[3])?,
            ci_low: parse_f(fields[4])?,
            ci_high: parse_f(fields[5])?,
            signature_collision_frac: None,
        });
    }
    Ok(out)
}

/// Render a run as pretty JSON.
pub fn emit_json(run: &ScenarioRun) -> Result<String> {
    serde_json::to_string_pretty(run)
        .map_err(|e| Error::Usage(format!("json: {e}")))
}

/// Output format of the campaign results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Write a run in the chosen format.
pub fn emit_results(
    run: &ScenarioRun,
    format: OutputFormat,
    writer: &mut impl Write,
) -> Result<()> {
    match format {
        OutputFormat::Csv => writer.write_all(emit_csv(&run.points).as_bytes())?,
        OutputFormat::Json => {
            writer.write_all(emit_json(run)?.as_bytes())?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}
