//! Two-level extraction from a noisy current trace and dwell-time
//! statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rtn::{Level, Trace};

/// Default hysteresis guard band, in units of the within-cluster noise σ.
pub const DEFAULT_GUARD_SIGMAS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelExtraction {
    pub levels: Vec<Level>,
    pub threshold: f64,
    pub low_mean: f64,
    pub high_mean: f64,
    /// `high_mean - low_mean`.
    pub delta_i: f64,
    /// Noise estimated from the median absolute first difference, which
    /// rare level jumps do not disturb.
    pub noise_sigma: f64,
}

/// Splits the samples into two clusters by 1-D two-means (Lloyd iterations
/// from the overall mean), then assigns levels with a hysteretic comparator
/// at `threshold +/- guard_sigmas * noise_sigma`. Fails when the cluster
/// means are closer than twice the noise sigma.
pub fn extract_levels(trace: &Trace, guard_sigmas: f64) -> Result<LevelExtraction> {
    trace.validate()?;
    if !(guard_sigmas.is_finite() && guard_sigmas >= 0.0) {
        return Err(Error::config("guard band must be non-negative"));
    }
    let x = &trace.samples;
    let mut threshold = trace.mean();
    let mut stats = split(x, threshold);
    for _ in 0..100 {
        let (lo, hi) = match stats {
            Some(means) => means,
            None => break,
        };
        let next = 0.5 * (lo + hi);
        if next == threshold {
            break;
        }
        threshold = next;
        stats = split(x, threshold);
    }
    let (low_mean, high_mean) =
        stats.ok_or_else(|| Error::data("levels unresolvable: trace is constant"))?;
    let noise_sigma = difference_sigma(x);
    let delta_i = high_mean - low_mean;
    if delta_i < 2.0 * noise_sigma {
        return Err(Error::data(format!(
            "levels unresolvable: separation {delta_i:e} is below twice the noise sigma {noise_sigma:e}"
        )));
    }
    let guard = guard_sigmas * noise_sigma;
    let mut state = if x[0] > threshold { Level::High } else { Level::Low };
    let levels = x
        .iter()
        .map(|&v| {
            if v > threshold + guard {
                state = Level::High;
            } else if v < threshold - guard {
                state = Level::Low;
            }
            state
        })
        .collect();
    Ok(LevelExtraction {
        levels,
        threshold,
        low_mean,
        high_mean,
        delta_i,
        noise_sigma,
    })
}

/// Means of the samples at or below and above `t`; `None` when either side
/// is empty.
fn split(x: &[f64], t: f64) -> Option<(f64, f64)> {
    let (mut n0, mut s0, mut n1, mut s1) = (0usize, 0.0, 0usize, 0.0);
    for &v in x {
        if v > t {
            n1 += 1;
            s1 += v;
        } else {
            n0 += 1;
            s0 += v;
        }
    }
    if n0 == 0 || n1 == 0 {
        return None;
    }
    Some((s0 / n0 as f64, s1 / n1 as f64))
}

/// Gaussian-consistent sigma from the median of `|x[k+1] - x[k]|`.
fn difference_sigma(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mid = d.len() / 2;
    let (_, median, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *median / (0.674_489_750_196_081_7 * std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellTimeStats {
    pub mean_tau_h: Option<f64>,
    pub mean_tau_l: Option<f64>,
    pub high_dwells: Vec<f64>,
    pub low_dwells: Vec<f64>,
    pub transitions: usize,
}

/// Complete dwell durations between consecutive transitions. The censored
/// first and last dwells are dropped.
pub fn dwell_times(levels: &[Level], dt: f64) -> Result<DwellTimeStats> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    let edges: Vec<usize> = (1..levels.len())
        .filter(|&i| levels[i] != levels[i - 1])
        .collect();
    if edges.len() < 2 {
        return Err(Error::data(format!(
            "need at least two transitions, found {}",
            edges.len()
        )));
    }
    let mut high_dwells = Vec::new();
    let mut low_dwells = Vec::new();
    for w in edges.windows(2) {
        let d = (w[1] - w[0]) as f64 * dt;
        match levels[w[0]] {
            Level::High => high_dwells.push(d),
            Level::Low => low_dwells.push(d),
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(DwellTimeStats {
        mean_tau_h: mean(&high_dwells),
        mean_tau_l: mean(&low_dwells),
        high_dwells,
        low_dwells,
        transitions: edges.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtn::{simulate_device, DeviceParams, OperatingPoint, TrapParams};

    #[test]
    fn noise_free_two_level_trace_is_recovered_exactly() {
        let pattern: Vec<f64> = (0..1000).map(|i| if (i / 7) % 3 == 0 { 2.0 } else { 1.0 }).collect();
        let ex = extract_levels(&Trace::new(1.0, pattern.clone()).unwrap(), 0.5).unwrap();
        for (l, v) in ex.levels.iter().zip(&pattern) {
            assert_eq!(l.is_high(), *v == 2.0);
        }
        assert_eq!(ex.delta_i, 1.0);
        assert_eq!(ex.noise_sigma, 0.0);
    }

    #[test]
    fn constant_or_unimodal_trace_is_unresolvable() {
        assert!(extract_levels(&Trace::new(1.0, vec![3.0; 100]).unwrap(), 0.5).is_err());
        let mut rng = crate::seed::rng(4);
        let gauss: Vec<f64> = (0..10_000)
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let err = extract_levels(&Trace::new(1.0, gauss).unwrap(), 0.5).unwrap_err();
        assert!(err.to_string().contains("levels unresolvable"));
    }

    #[test]
    fn ten_sigma_separation_rarely_misclassifies() {
        let dev = DeviceParams {
            traps: vec![TrapParams {
                tau_capture_ref: 0.02,
                tau_emission_ref: 0.01,
                ..TrapParams::default()
            }],
            noise_sigma: 20e-12,
            ..DeviceParams::default()
        };
        let op = OperatingPoint::default();
        let (trajectories, noisy) = simulate_device(&dev, &op, 200.0, 1e-4, 5).unwrap();
        let ex = extract_levels(&noisy, DEFAULT_GUARD_SIGMAS).unwrap();
        let mut truth = trajectories[0].cursor();
        let wrong = ex
            .levels
            .iter()
            .enumerate()
            .filter(|&(k, l)| *l != truth.advance_to(k as f64 * noisy.dt))
            .count();
        assert!((wrong as f64) / (noisy.len() as f64) < 1e-4, "{wrong}");
        assert!((ex.delta_i / 200e-12 - 1.0).abs() < 0.02);
    }

    #[test]
    fn alternating_every_m_samples() {
        let m = 5;
        let levels: Vec<Level> = (0..100)
            .map(|i| if (i / m) % 2 == 0 { Level::Low } else { Level::High })
            .collect();
        let s = dwell_times(&levels, 0.25).unwrap();
        assert_eq!(s.mean_tau_h, Some(1.25));
        assert_eq!(s.mean_tau_l, Some(1.25));
        assert_eq!(s.transitions, 19);
    }

    #[test]
    fn single_transition_is_an_error() {
        let levels = [Level::Low, Level::Low, Level::High, Level::High];
        assert!(dwell_times(&levels, 1.0).is_err());
    }
}
