//! Second-level analysis over an ensemble of independent sequences: the
//! distribution of each test's p-values should be uniform and the share of
//! passing sequences should sit near `1 - alpha`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{igamc, run_battery, BatteryConfig, BatteryReport};
use crate::bitgen::BitStream;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed;

/// Uniformity p-values below this reject the ensemble.
pub const UNIFORMITY_THRESHOLD: f64 = 1e-4;

const BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityCheck {
    pub name: String,
    pub sequences: usize,
    pub bin_counts: Vec<u64>,
    /// Chi-square p-value of the ten-bin histogram of p-values.
    pub p_uniformity: f64,
    /// Fraction of sequences that passed at the battery's alpha.
    pub proportion: f64,
    /// Lower end of the three-sigma acceptance interval for `proportion`.
    pub proportion_floor: f64,
    /// `p_uniformity >= UNIFORMITY_THRESHOLD`.
    pub pass: bool,
}

/// Chi-square test of `p_values` against U(0, 1) on ten equal bins.
pub fn uniformity_p_value(p_values: &[f64]) -> Result<(f64, Vec<u64>)> {
    if p_values.is_empty() {
        return Err(Error::data("no p-values to bin"));
    }
    let mut counts = vec![0u64; BINS];
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::data(format!("p-value {p} is outside [0, 1]")));
        }
        counts[((p * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let expected = p_values.len() as f64 / BINS as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    Ok((igamc((BINS - 1) as f64 / 2.0, chi2 / 2.0), counts))
}

/// `(1 - alpha) - 3 sqrt(alpha (1 - alpha) / m)`.
pub fn proportion_floor(alpha: f64, m: usize) -> f64 {
    let q = 1.0 - alpha;
    q - 3.0 * (alpha * q / m as f64).sqrt()
}

/// Per-test uniformity and proportion over a set of battery reports. Every
/// report must contain the same test names; a test that errored on any
/// sequence is a data error.
pub fn ensemble_checks(reports: &[BatteryReport]) -> Result<Vec<UniformityCheck>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::data("empty ensemble"))?;
    if let Some(r) = reports.iter().find(|r| !r.errors.is_empty()) {
        return Err(Error::data(format!(
            "test {} could not run: {}",
            r.errors[0].name, r.errors[0].message
        )));
    }
    first
        .results
        .iter()
        .map(|t| {
            let mut ps = Vec::with_capacity(reports.len());
            let mut passed = 0usize;
            for r in reports {
                let res = r
                    .get(&t.name)
                    .ok_or_else(|| Error::data(format!("{} missing from a report", t.name)))?;
                ps.push(res.p_value);
                passed += res.pass as usize;
            }
            let (p_uniformity, bin_counts) = uniformity_p_value(&ps)?;
            Ok(UniformityCheck {
                name: t.name.clone(),
                sequences: reports.len(),
                bin_counts,
                p_uniformity,
                proportion: passed as f64 / reports.len() as f64,
                proportion_floor: proportion_floor(first.alpha, reports.len()),
                pass: p_uniformity >= UNIFORMITY_THRESHOLD,
            })
        })
        .collect()
}

/// Runs the battery on `count` ChaCha8 sequences of `length` bits seeded by
/// `seed::derive(master, i)` and returns the ensemble checks.
pub fn null_ensemble(
    count: usize,
    length: usize,
    master: u64,
    cfg: &BatteryConfig,
    exec: Execution,
) -> Result<Vec<UniformityCheck>> {
    let reports = exec.map_range(count, |i| {
        let mut rng = seed::rng(seed::derive(master, i as u64));
        let bits = BitStream::from_bools((0..length).map(|_| rng.random::<bool>()));
        run_battery(&bits, cfg, Execution::Sequential)
    });
    ensemble_checks(&reports)
}
