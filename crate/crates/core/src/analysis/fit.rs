//! Lorentzian and power-law fits to a one-sided spectrum.
//!
//! Both fits are least squares in log-PSD with weights `1/f`, which gives
//! every decade of the linearly spaced Welch grid equal influence.

use serde::{Deserialize, Serialize};

use super::psd::SpectrumEstimate;
use crate::error::{Error, Result};

const GRID_POINTS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub corner: f64,
    pub plateau: f64,
    /// Weighted RMS of the log-PSD residual (natural log units).
    pub residual_rms: f64,
    pub band: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub band: (f64, f64),
    pub points: usize,
}

/// Default Lorentzian fit band: `[4 * f_min, f_nyquist / 4]`.
pub fn default_fit_band(spec: &SpectrumEstimate) -> (f64, f64) {
    (4.0 * spec.df(), spec.nyquist() / 4.0)
}

struct LogPoints {
    ln_f: Vec<f64>,
    ln_p: Vec<f64>,
    w: Vec<f64>,
}

fn points_in_band(spec: &SpectrumEstimate, lo: f64, hi: f64) -> Result<LogPoints> {
    let mut pts = LogPoints {
        ln_f: Vec::new(),
        ln_p: Vec::new(),
        w: Vec::new(),
    };
    for (&f, &p) in spec.freqs.iter().zip(&spec.psd) {
        if f < lo || f > hi || f <= 0.0 {
            continue;
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::data(format!("non-positive density {p} at {f} Hz")));
        }
        pts.ln_f.push(f.ln());
        pts.ln_p.push(p.ln());
        pts.w.push(1.0 / f);
    }
    if pts.ln_f.len() < 3 {
        return Err(Error::data(format!(
            "fewer than three spectral points in [{lo}, {hi}] Hz"
        )));
    }
    Ok(pts)
}

/// Weighted residual and best log-plateau for a given log-corner.
fn lorentz_cost(pts: &LogPoints, ln_fc: f64) -> (f64, f64) {
    let r: Vec<f64> = pts
        .ln_f
        .iter()
        .zip(&pts.ln_p)
        .map(|(&lf, &lp)| lp + (2.0 * (lf - ln_fc)).exp().ln_1p())
        .collect();
    let wsum: f64 = pts.w.iter().sum();
    let ln_p0 = r.iter().zip(&pts.w).map(|(r, w)| r * w).sum::<f64>() / wsum;
    let ssr = r
        .iter()
        .zip(&pts.w)
        .map(|(r, w)| w * (r - ln_p0).powi(2))
        .sum::<f64>()
        / wsum;
    (ssr, ln_p0)
}

/// Fits `P(f) = plateau / (1 + (f / corner)^2)` over `band`
/// (default [`default_fit_band`]).
///
/// The plateau is solved in closed form for each trial corner; the corner
/// is located by a grid scan in `ln f` followed by golden-section
/// refinement. A corner at the scan boundary or within a decade of either
/// band edge is unidentifiable and reported as [`Error::FitNotConverged`].
pub fn fit_lorentzian(spec: &SpectrumEstimate, band: Option<(f64, f64)>) -> Result<LorentzianFit> {
    let (lo, hi) = band.unwrap_or_else(|| default_fit_band(spec));
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::config(format!("invalid fit band [{lo}, {hi}]")));
    }
    let pts = points_in_band(spec, lo, hi)?;
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (GRID_POINTS - 1) as f64;
    let (best, _) = (0..GRID_POINTS)
        .map(|i| (i, lorentz_cost(&pts, a + i as f64 * step).0))
        .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });

    let not_converged = |reason: &str, ln_fc: f64| {
        let (_, ln_p0) = lorentz_cost(&pts, ln_fc);
        Error::FitNotConverged {
            reason: reason.to_string(),
            best_corner: ln_fc.exp(),
            best_plateau: ln_p0.exp(),
        }
    };
    if best == 0 || best == GRID_POINTS - 1 {
        return Err(not_converged("optimum lies on the fit band boundary", a + best as f64 * step));
    }

    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x0, mut x3) = (a + (best - 1) as f64 * step, a + (best + 1) as f64 * step);
    let mut x1 = x3 - gr * (x3 - x0);
    let mut x2 = x0 + gr * (x3 - x0);
    let (mut c1, mut c2) = (lorentz_cost(&pts, x1).0, lorentz_cost(&pts, x2).0);
    for _ in 0..200 {
        if (x3 - x0).abs() < 1e-12 {
            break;
        }
        if c1 < c2 {
            x3 = x2;
            x2 = x1;
            c2 = c1;
            x1 = x3 - gr * (x3 - x0);
            c1 = lorentz_cost(&pts, x1).0;
        } else {
            x0 = x1;
            x1 = x2;
            c1 = c2;
            x2 = x0 + gr * (x3 - x0);
            c2 = lorentz_cost(&pts, x2).0;
        }
    }
    let ln_fc = 0.5 * (x0 + x3);
    let corner = ln_fc.exp();
    if corner < 10.0 * lo || corner > hi / 10.0 {
        return Err(not_converged(
            "corner is within a decade of the fit band edge",
            ln_fc,
        ));
    }
    let (ssr, ln_p0) = lorentz_cost(&pts, ln_fc);
    Ok(LorentzianFit {
        corner,
        plateau: ln_p0.exp(),
        residual_rms: ssr.sqrt(),
        band: (lo, hi),
    })
}

/// Spectral exponent `alpha` of `P ~ 1/f^alpha` over `[lo, hi]`.
pub fn fit_alpha(spec: &SpectrumEstimate, lo: f64, hi: f64) -> Result<AlphaFit> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::config(format!("invalid fit band [{lo}, {hi}]")));
    }
    let pts = points_in_band(spec, lo, hi)?;
    let wsum: f64 = pts.w.iter().sum();
    let mx = pts.ln_f.iter().zip(&pts.w).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let my = pts.ln_p.iter().zip(&pts.w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((x, y), w) in pts.ln_f.iter().zip(&pts.ln_p).zip(&pts.w) {
        sxy += w * (x - mx) * (y - my);
        sxx += w * (x - mx) * (x - mx);
    }
    Ok(AlphaFit {
        alpha: -sxy / sxx,
        band: (lo, hi),
        points: pts.ln_f.len(),
    })
}

/// Lorentzian fit followed by a slope fit over `[5 fc, min(f_nyq/4, 100 fc)]`.
/// Returns the spectrum with its fit fields populated.
pub fn fit_spectrum(spec: &SpectrumEstimate) -> Result<(SpectrumEstimate, LorentzianFit, AlphaFit)> {
    let lf = fit_lorentzian(spec, None)?;
    let hi = (spec.nyquist() / 4.0).min(100.0 * lf.corner);
    let af = fit_alpha(spec, 5.0 * lf.corner, hi)?;
    let mut out = spec.clone();
    out.fitted_corner = Some(lf.corner);
    out.fitted_plateau = Some(lf.plateau);
    out.fitted_alpha = Some(af.alpha);
    Ok((out, lf, af))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(corner: f64, plateau: f64, df: f64, bins: usize) -> SpectrumEstimate {
        let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
        let psd = freqs
            .iter()
            .map(|f| plateau / (1.0 + (f / corner).powi(2)))
            .collect();
        SpectrumEstimate {
            freqs,
            psd,
            segments: 1,
            fitted_alpha: None,
            fitted_corner: None,
            fitted_plateau: None,
        }
    }

    #[test]
    fn exact_lorentzian_is_recovered() {
        for corner in [0.01, 0.0318, 0.2] {
            let spec = synthetic(corner, 4e-20, 1e-4, (1 << 17) + 1);
            let fit = fit_lorentzian(&spec, None).unwrap();
            assert!((fit.corner / corner - 1.0).abs() < 1e-3, "{}", fit.corner);
            assert!((fit.plateau / 4e-20 - 1.0).abs() < 1e-3);
            assert!(fit.residual_rms < 1e-6);
        }
    }

    #[test]
    fn flat_spectrum_is_rejected() {
        let spec = synthetic(1e12, 1.0, 0.01, 4097);
        match fit_lorentzian(&spec, None) {
            Err(Error::FitNotConverged { best_plateau, .. }) => assert!(best_plateau >= 1.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn corner_near_band_edge_is_rejected() {
        let spec = synthetic(0.05, 1.0, 0.005, 8193);
        assert!(matches!(
            fit_lorentzian(&spec, None),
            Err(Error::FitNotConverged { .. })
        ));
    }

    #[test]
    fn alpha_of_pure_power_law() {
        let freqs: Vec<f64> = (0..2000).map(|k| k as f64 * 0.1).collect();
        let psd = freqs.iter().map(|f| if *f > 0.0 { f.powf(-1.3) } else { 1.0 }).collect();
        let spec = SpectrumEstimate {
            freqs,
            psd,
            segments: 1,
            fitted_alpha: None,
            fitted_corner: None,
            fitted_plateau: None,
        };
        let fit = fit_alpha(&spec, 1.0, 100.0).unwrap();
        assert!((fit.alpha - 1.3).abs() < 1e-9);
    }

    #[test]
    fn lorentzian_slope_far_above_corner_is_two() {
        let spec = synthetic(1.0, 1.0, 0.01, 100_001);
        let (out, lf, af) = fit_spectrum(&spec).unwrap();
        assert!((lf.corner - 1.0).abs() < 1e-6);
        assert!(af.alpha > 1.9 && af.alpha < 2.0);
        assert_eq!(out.fitted_corner, Some(lf.corner));
    }
}
