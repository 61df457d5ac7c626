//! Randomness test battery following the NIST SP 800-22 statistic and
//! reference-distribution definitions.
//!
//! Parameters outside the range where a statistic is defined are
//! configuration errors and inputs below a test's structural minimum are
//! data errors. Departures from the SP 800-22 *recommended* input sizes only
//! produce warnings, which are logged and kept on the result.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

mod battery;
mod complexity;
mod frequency;
mod rank;
mod spectral;
mod template;
mod uniformity;

pub use battery::{run_battery, BatteryConfig, BatteryReport, TestFailure, UNIMPLEMENTED};
pub use complexity::{berlekamp_massey, linear_complexity, linear_complexity_profile};
pub use frequency::{block_frequency, cumulative_sums, frequency_monobit, longest_run_of_ones, runs, Direction};
pub use rank::{binary_matrix_rank, gf2_rank};
pub use spectral::dft_spectral;
pub use template::{approximate_entropy, serial};
pub use uniformity::{
    ensemble_checks, null_ensemble, proportion_floor, uniformity_p_value, UniformityCheck,
    UNIFORMITY_THRESHOLD,
};

/// Significance level used throughout unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Outcome of one statistical test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub parameters: BTreeMap<String, u64>,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TestResult {
    fn new(name: &str, statistic: f64, p_value: f64) -> Self {
        let p_value = if p_value.is_nan() { 0.0 } else { p_value.clamp(0.0, 1.0) };
        Self {
            name: name.to_string(),
            parameters: BTreeMap::new(),
            statistic,
            p_value,
            pass: p_value >= DEFAULT_ALPHA,
            alpha: DEFAULT_ALPHA,
            warnings: Vec::new(),
        }
    }

    fn param(mut self, key: &str, value: usize) -> Self {
        self.parameters.insert(key.to_string(), value as u64);
        self
    }

    fn warned(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }

    /// Re-evaluates the verdict at significance `alpha`.
    pub fn at_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.pass = self.p_value >= alpha;
        self
    }
}

/// Collects recommendation warnings for one test invocation.
struct Advisories {
    test: &'static str,
    items: Vec<String>,
}

impl Advisories {
    fn new(test: &'static str) -> Self {
        Self {
            test,
            items: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            let m = msg();
            warn!("{}: {m}", self.test);
            self.items.push(m);
        }
    }
}

fn require_len(test: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::data(format!("{test} needs at least {min} bits, got {n}")));
    }
    Ok(())
}

fn require_range(test: &str, name: &str, v: usize, lo: usize, hi: usize) -> Result<()> {
    if v < lo || v > hi {
        return Err(Error::config(format!(
            "{test}: {name} = {v} is outside the valid range [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Regularized upper incomplete gamma function Q(a, x).
fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(a, x)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}
