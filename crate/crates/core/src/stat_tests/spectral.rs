use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::function::erf::erfc;

use super::{require_len, Advisories, TestResult};
use crate::bitgen::BitStream;
use crate::error::Result;

/// Discrete Fourier transform (spectral) test with the 95% peak threshold
/// `T = sqrt(ln(20) n)`.
pub fn dft_spectral(bits: &BitStream) -> Result<TestResult> {
    let n = bits.len();
    require_len("fft", n, 2)?;
    let mut adv = Advisories::new("fft");
    adv.check(n >= 1000, || format!("n = {n} is below the recommended 1000"));
    let mut buf: Vec<Complex<f64>> = bits
        .as_slice()
        .iter()
        .map(|&b| Complex::new(2.0 * b as f64 - 1.0, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let threshold = (20f64.ln() * nf).sqrt();
    let below = buf[..n / 2].iter().filter(|c| c.norm() < threshold).count() as f64;
    let expected = 0.95 * nf / 2.0;
    let d = (below - expected) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    Ok(TestResult::new("fft", d, erfc(d.abs() / std::f64::consts::SQRT_2))
        .param("n", n)
        .warned(adv.items))
}
