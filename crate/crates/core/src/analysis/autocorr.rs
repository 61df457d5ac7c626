//! Sample autocorrelation of a bitstream.

use serde::{Deserialize, Serialize};

use crate::bitgen::BitStream;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrSeries {
    pub lags: Vec<usize>,
    pub rho: Vec<f64>,
    pub n: usize,
    /// Half-width of the white-noise band, `Z95 / sqrt(n)`.
    pub confidence_band: f64,
}

impl AutocorrSeries {
    /// Lags whose coefficient falls outside the band.
    pub fn violations(&self) -> usize {
        self.rho.iter().filter(|r| r.abs() > self.confidence_band).count()
    }

    pub fn fraction_within_band(&self) -> f64 {
        1.0 - self.violations() as f64 / self.rho.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.rho.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Pearson correlation of `x[0..n-k]` with `x[k..n]` for the +/-1 map of
/// the bits, at every lag `k` in `1..=max_lag`.
pub fn autocorrelation(bits: &BitStream, max_lag: usize, exec: Execution) -> Result<AutocorrSeries> {
    let n = bits.len();
    if max_lag == 0 {
        return Err(Error::config("max lag must be at least 1"));
    }
    if n <= max_lag + 1 {
        return Err(Error::data(format!(
            "stream of {n} bits is too short for lag {max_lag}"
        )));
    }
    let ones = bits.count_ones();
    if ones == 0 || ones == n {
        return Err(Error::data("zero variance: stream is constant"));
    }
    let x: Vec<f64> = bits.as_slice().iter().map(|&b| 2.0 * b as f64 - 1.0).collect();
    let rho = exec.map_range(max_lag, |i| pearson(&x[..n - i - 1], &x[i + 1..]));
    Ok(AutocorrSeries {
        lags: (1..=max_lag).collect(),
        rho,
        n,
        confidence_band: Z95 / (n as f64).sqrt(),
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn alternation_gives_exact_signs() {
        let bits = BitStream::from_bools((0..1000).map(|i| i % 2 == 0));
        let a = autocorrelation(&bits, 4, Execution::Sequential).unwrap();
        assert_eq!(a.rho[0], -1.0);
        assert_eq!(a.rho[1], 1.0);
    }

    #[test]
    fn constant_stream_has_zero_variance() {
        let bits = BitStream::from_bits(vec![1; 100]).unwrap();
        assert!(autocorrelation(&bits, 5, Execution::Sequential).is_err());
    }

    #[test]
    fn doubled_bits_have_half_lag_one_correlation() {
        let mut rng = seed::rng(12);
        let bits = BitStream::from_bools((0..1 << 17).flat_map(|_| {
            let b: bool = rng.random();
            [b, b]
        }));
        let a = autocorrelation(&bits, 3, Execution::Parallel).unwrap();
        assert!((a.rho[0] - 0.5).abs() < 0.01, "{}", a.rho[0]);
        assert!(a.rho[1].abs() < 0.01);
    }

    #[test]
    fn fair_bits_violate_the_band_at_the_nominal_rate() {
        let seeds: Vec<u64> = (0..20).collect();
        let within = Execution::Parallel.map(&seeds, |&s| {
            let mut rng = seed::rng(s);
            let bits = BitStream::from_bools((0..1 << 17).map(|_| rng.random::<bool>()));
            autocorrelation(&bits, 100, Execution::Sequential)
                .unwrap()
                .fraction_within_band()
        });
        let mean = within.iter().sum::<f64>() / within.len() as f64;
        assert!((mean - 0.95).abs() < 0.015, "{mean}");
    }
}
