use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    approximate_entropy, binary_matrix_rank, block_frequency, cumulative_sums, dft_spectral,
    frequency_monobit, linear_complexity, longest_run_of_ones, runs, serial, Direction,
    TestResult, DEFAULT_ALPHA,
};
use crate::bitgen::BitStream;
use crate::error::Result;
use crate::exec::Execution;

/// SP 800-22 families this battery does not implement.
pub const UNIMPLEMENTED: [&str; 5] = [
    "non_overlapping_template",
    "overlapping_template",
    "universal",
    "random_excursions",
    "random_excursions_variant",
];

const RECOMMENDED_LENGTH: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub alpha: f64,
    pub block_frequency_m: usize,
    pub approximate_entropy_m: usize,
    pub serial_m: usize,
    pub linear_complexity_m: usize,
    pub rank_rows: usize,
    pub rank_cols: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            block_frequency_m: 128,
            approximate_entropy_m: 2,
            serial_m: 3,
            linear_complexity_m: 500,
            rank_rows: 32,
            rank_cols: 32,
        }
    }
}

/// A test that could not be evaluated on the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFailure {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub length: usize,
    pub alpha: f64,
    pub results: Vec<TestResult>,
    pub errors: Vec<TestFailure>,
    pub unimplemented: Vec<String>,
    pub warnings: Vec<String>,
}

impl BatteryReport {
    /// True when every implemented test ran and passed.
    pub fn all_passed(&self) -> bool {
        self.errors.is_empty() && self.results.iter().all(|r| r.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.name.as_str())
            .chain(self.errors.iter().map(|e| e.name.as_str()))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&TestResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

const JOBS: [&str; 11] = [
    "frequency",
    "block_frequency",
    "cumulative_sums_forward",
    "cumulative_sums_backward",
    "runs",
    "longest_run",
    "rank",
    "fft",
    "approximate_entropy",
    "serial",
    "linear_complexity",
];

/// Runs every implemented test with the configured parameters. Tests that
/// cannot run on the input are collected in `errors`, not propagated.
pub fn run_battery(bits: &BitStream, cfg: &BatteryConfig, exec: Execution) -> BatteryReport {
    let n = bits.len();
    let mut warnings = Vec::new();
    if n < RECOMMENDED_LENGTH {
        let m = format!("{n} bits is below the recommended {RECOMMENDED_LENGTH}");
        warn!("battery: {m}");
        warnings.push(m);
    }
    let mut serial_m = cfg.serial_m;
    let limit = (n.max(1) as f64).log2().floor() as usize;
    if n > 0 && serial_m + 2 >= limit && limit >= 5 {
        serial_m = limit - 3;
        let m = format!("serial m reduced from {} to {serial_m} for {n} bits", cfg.serial_m);
        warn!("battery: {m}");
        warnings.push(m);
    }

    let outcomes: Vec<Vec<(&str, Result<TestResult>)>> = exec.map(&JOBS, |&job| match job {
        "frequency" => vec![(job, frequency_monobit(bits))],
        "block_frequency" => vec![(job, block_frequency(bits, cfg.block_frequency_m))],
        "cumulative_sums_forward" => vec![(job, cumulative_sums(bits, Direction::Forward))],
        "cumulative_sums_backward" => vec![(job, cumulative_sums(bits, Direction::Backward))],
        "runs" => vec![(job, runs(bits))],
        "longest_run" => vec![(job, longest_run_of_ones(bits))],
        "rank" => vec![(job, binary_matrix_rank(bits, cfg.rank_rows, cfg.rank_cols))],
        "fft" => vec![(job, dft_spectral(bits))],
        "approximate_entropy" => vec![(job, approximate_entropy(bits, cfg.approximate_entropy_m))],
        "serial" => match serial(bits, serial_m) {
            Ok((a, b)) => vec![("serial_1", Ok(a)), ("serial_2", Ok(b))],
            Err(e) => {
                let msg = e.to_string();
                vec![
                    ("serial_1", Err(e)),
                    ("serial_2", Err(crate::error::Error::data(msg))),
                ]
            }
        },
        "linear_complexity" => vec![(job, linear_complexity(bits, cfg.linear_complexity_m))],
        _ => unreachable!("unknown battery job {job}"),
    });

    let mut results = Vec::new();
    let mut errors = Vec::new();
    for (name, outcome) in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => results.push(r.at_alpha(cfg.alpha)),
            Err(e) => errors.push(TestFailure {
                name: name.to_string(),
                message: e.to_string(),
            }),
        }
    }
    BatteryReport {
        length: n,
        alpha: cfg.alpha,
        results,
        errors,
        unimplemented: UNIMPLEMENTED.iter().map(|s| s.to_string()).collect(),
        warnings,
    }
}
