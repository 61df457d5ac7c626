//! Time-lag plots: 2-D histograms of a series against its delayed copy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rtn::Level;

/// Transition counts of a two-level series. `lh` is LOW then HIGH (capture),
/// `hl` is HIGH then LOW (emission).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CornerCounts {
    pub hh: u64,
    pub ll: u64,
    pub lh: u64,
    pub hl: u64,
}

impl CornerCounts {
    pub fn total(&self) -> u64 {
        self.hh + self.ll + self.lh + self.hl
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlpMatrix {
    pub lag: usize,
    pub bins: usize,
    /// Histogram range shared by both axes.
    pub range: (f64, f64),
    /// Row-major `bins x bins`; row indexes `x[k]`, column `x[k + lag]`.
    pub counts: Vec<u64>,
    pub corner_counts: Option<CornerCounts>,
}

impl TlpMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn at(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.bins + col]
    }
}

/// Histogram of `(x[k], x[k + lag])`. Corner counts are filled in when the
/// series takes exactly two distinct values.
pub fn tlp(series: &[f64], lag: usize, bins: usize) -> Result<TlpMatrix> {
    if lag == 0 {
        return Err(Error::config("lag must be at least 1"));
    }
    if bins == 0 {
        return Err(Error::config("bins must be at least 1"));
    }
    if lag >= series.len() {
        return Err(Error::data(format!(
            "lag {lag} is not shorter than the series ({} samples)",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("series contains non-finite values"));
    }
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    let bin = |v: f64| {
        if width == 0.0 {
            0
        } else {
            (((v - lo) / width * bins as f64) as usize).min(bins - 1)
        }
    };
    let mut counts = vec![0u64; bins * bins];
    for k in 0..series.len() - lag {
        counts[bin(series[k]) * bins + bin(series[k + lag])] += 1;
    }
    let two_valued = width > 0.0 && series.iter().all(|&v| v == lo || v == hi);
    let corner_counts = two_valued.then(|| {
        let levels: Vec<Level> = series
            .iter()
            .map(|&v| if v == hi { Level::High } else { Level::Low })
            .collect();
        corners(&levels, lag)
    });
    Ok(TlpMatrix {
        lag,
        bins,
        range: (lo, hi),
        counts,
        corner_counts,
    })
}

/// Time-lag plot of a level sequence: LOW maps to 0, HIGH to 1, and the
/// corner counts are always present.
pub fn tlp_levels(levels: &[Level], lag: usize) -> Result<TlpMatrix> {
    let series: Vec<f64> = levels.iter().map(|l| f64::from(u8::from(l.is_high()))).collect();
    let mut m = tlp(&series, lag, 2)?;
    m.range = (0.0, 1.0);
    m.counts = vec![0; 4];
    let c = corners(levels, lag);
    m.counts[0] = c.ll;
    m.counts[1] = c.lh;
    m.counts[2] = c.hl;
    m.counts[3] = c.hh;
    m.corner_counts = Some(c);
    Ok(m)
}

fn corners(levels: &[Level], lag: usize) -> CornerCounts {
    let mut c = CornerCounts::default();
    for k in 0..levels.len() - lag {
        match (levels[k], levels[k + lag]) {
            (Level::High, Level::High) => c.hh += 1,
            (Level::Low, Level::Low) => c.ll += 1,
            (Level::Low, Level::High) => c.lh += 1,
            (Level::High, Level::Low) => c.hl += 1,
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_high_is_all_hh() {
        let m = tlp_levels(&[Level::High; 50], 1).unwrap();
        let c = m.corner_counts.unwrap();
        assert_eq!(c.hh, 49);
        assert_eq!(c.total(), 49);
        assert_eq!(m.total(), 49);
    }

    #[test]
    fn alternation_splits_between_lh_and_hl() {
        let s: Vec<f64> = (0..101).map(|i| (i % 2) as f64 * 3e-10).collect();
        let m = tlp(&s, 1, 16).unwrap();
        let c = m.corner_counts.unwrap();
        assert_eq!((c.hh, c.ll), (0, 0));
        assert_eq!(c.lh, 50);
        assert_eq!(c.hl, 50);
        assert_eq!(m.at(0, 15) + m.at(15, 0), 100);
    }

    #[test]
    fn lag_too_long_is_an_error() {
        assert!(tlp(&[1.0, 2.0, 3.0], 3, 4).is_err());
        assert!(tlp(&[1.0, 2.0, 3.0], 0, 4).is_err());
    }

    #[test]
    fn continuous_series_has_no_corners() {
        let s: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = tlp(&s, 2, 5).unwrap();
        assert!(m.corner_counts.is_none());
        assert_eq!(m.total(), 8);
    }
}
