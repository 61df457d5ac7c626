//! Welch power spectral density estimation and spectral fits.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rtn::Trace;

/// Segments handled per work item. Partial sums inside a chunk and the
/// final chunk reduction both run in a fixed order.
const SEGMENTS_PER_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: Window,
    /// Divide by the squared mean of the trace.
    pub normalized: bool,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment_length: 8192,
            overlap_fraction: 0.5,
            window: Window::Hann,
            normalized: false,
        }
    }
}

/// One-sided spectral density with optional fit results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub segments: usize,
    pub fitted_alpha: Option<f64>,
    pub fitted_corner: Option<f64>,
    pub fitted_plateau: Option<f64>,
}

impl SpectrumEstimate {
    /// Frequency resolution.
    pub fn df(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    pub fn nyquist(&self) -> f64 {
        *self.freqs.last().expect("spectrum is never empty")
    }

    /// Rectangle-rule integral of the density over all bins.
    pub fn integral(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "freq_hz,psd")?;
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            writeln!(w, "{f:e},{p:e}")?;
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with Hann windowing and per-segment mean removal.
pub fn estimate_psd(trace: &Trace, cfg: &PsdConfig, exec: Execution) -> Result<SpectrumEstimate> {
    trace.validate()?;
    let n = cfg.segment_length;
    if n < 8 || !n.is_power_of_two() {
        return Err(Error::config(format!(
            "segment length must be a power of two >= 8, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap_fraction) {
        return Err(Error::config(format!(
            "overlap fraction must be in [0, 1), got {}",
            cfg.overlap_fraction
        )));
    }
    if trace.len() < n {
        return Err(Error::data(format!(
            "trace of {} samples is shorter than one {n}-sample segment",
            trace.len()
        )));
    }
    let step = ((n as f64 * (1.0 - cfg.overlap_fraction)).round() as usize).max(1);
    let segments = (trace.len() - n) / step + 1;
    let window = match cfg.window {
        Window::Hann => hann(n),
    };
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let x = &trace.samples;

    let chunks = segments.div_ceil(SEGMENTS_PER_CHUNK);
    let partials = exec.map_range(chunks, |c| {
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let first = c * SEGMENTS_PER_CHUNK;
        for s in first..(first + SEGMENTS_PER_CHUNK).min(segments) {
            let seg = &x[s * step..s * step + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = Complex::new((v - mean) * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        acc
    });
    let mut total = vec![0.0; bins];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }

    let mut scale = trace.dt / (window_power * segments as f64);
    if cfg.normalized {
        let m = trace.mean();
        if m == 0.0 {
            return Err(Error::data("cannot normalize a zero-mean trace"));
        }
        scale /= m * m;
    }
    let psd: Vec<f64> = total
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let df = 1.0 / (n as f64 * trace.dt);
    Ok(SpectrumEstimate {
        freqs: (0..bins).map(|k| k as f64 * df).collect(),
        psd,
        segments,
        fitted_alpha: None,
        fitted_corner: None,
        fitted_plateau: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, dt: f64, s: u64) -> Trace {
        let mut rng = seed::rng(s);
        let samples = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        Trace::new(dt, samples).unwrap()
    }

    #[test]
    fn white_noise_density_is_flat_at_two_dt() {
        let dt = 1e-3;
        let spec = estimate_psd(&white(1 << 19, dt, 3), &PsdConfig {
            segment_length: 1024,
            ..PsdConfig::default()
        }, Execution::Parallel)
        .unwrap();
        assert!(spec.segments >= 1000);
        for &p in &spec.psd[1..spec.psd.len() - 1] {
            assert!((p / (2.0 * dt) - 1.0).abs() < 0.2, "{p}");
        }
        let variance = 1.0;
        assert!((spec.integral() / variance - 1.0).abs() < 0.05);
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let dt = 1e-3;
        let n = 1 << 14;
        let f0 = 37.0 / (1024.0 * dt);
        let samples = (0..n).map(|i| (2.0 * PI * f0 * i as f64 * dt).sin()).collect();
        let spec = estimate_psd(&Trace::new(dt, samples).unwrap(), &PsdConfig {
            segment_length: 1024,
            ..PsdConfig::default()
        }, Execution::Sequential)
        .unwrap();
        let peak = spec
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 37);
        assert!((spec.freqs[peak] - f0).abs() < 1e-9);
    }

    #[test]
    fn strategies_are_bit_identical() {
        let t = white(100_000, 1e-4, 8);
        let cfg = PsdConfig {
            segment_length: 512,
            ..PsdConfig::default()
        };
        let a = estimate_psd(&t, &cfg, Execution::Sequential).unwrap();
        let b = estimate_psd(&t, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_segments() {
        let t = white(1000, 1e-3, 1);
        for n in [1000, 2048, 4] {
            let cfg = PsdConfig {
                segment_length: n,
                ..PsdConfig::default()
            };
            assert!(estimate_psd(&t, &cfg, Execution::Sequential).is_err());
        }
    }

    #[test]
    fn normalization_divides_by_squared_mean() {
        let mut t = white(1 << 14, 1e-3, 2);
        for x in &mut t.samples {
            *x += 4.0;
        }
        let raw = estimate_psd(&t, &PsdConfig::default(), Execution::Sequential).unwrap();
        let norm = estimate_psd(&t, &PsdConfig {
            normalized: true,
            ..PsdConfig::default()
        }, Execution::Sequential)
        .unwrap();
        let m = t.mean();
        for (a, b) in raw.psd.iter().zip(&norm.psd) {
            assert!((a / (m * m) - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}
