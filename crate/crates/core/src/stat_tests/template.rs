//! Overlapping m-bit pattern statistics: approximate entropy and serial.

use super::{igamc, require_len, require_range, Advisories, TestResult};
use crate::bitgen::BitStream;
use crate::error::Result;

/// Counts of every overlapping `m`-bit pattern, wrapping around the end.
fn pattern_counts(x: &[u8], m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        counts[0] = x.len() as u64;
        return counts;
    }
    let mask = (1usize << m) - 1;
    let n = x.len();
    let mut v = 0usize;
    for &b in x.iter().take(m - 1) {
        v = (v << 1) | b as usize;
    }
    for i in 0..n {
        v = ((v << 1) | x[(i + m - 1) % n] as usize) & mask;
        counts[v] += 1;
    }
    counts
}

fn phi(x: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = x.len() as f64;
    pattern_counts(x, m)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum()
}

fn psi2(x: &[u8], m: isize) -> f64 {
    if m <= 0 {
        return 0.0;
    }
    let n = x.len() as f64;
    let sum: f64 = pattern_counts(x, m as usize)
        .iter()
        .map(|&c| (c as f64).powi(2))
        .sum();
    (1u64 << m) as f64 / n * sum - n
}

pub fn approximate_entropy(bits: &BitStream, m: usize) -> Result<TestResult> {
    let n = bits.len();
    require_range("approximate_entropy", "m", m, 1, 20)?;
    require_len("approximate_entropy", n, m + 2)?;
    let mut adv = Advisories::new("approximate_entropy");
    let limit = (n as f64).log2().floor() as isize - 5;
    adv.check((m as isize) < limit, || {
        format!("m = {m} is not below the recommended floor(log2 n) - 5 = {limit}")
    });
    let x = bits.as_slice();
    let ap_en = phi(x, m) - phi(x, m + 1);
    let chi2 = 2.0 * n as f64 * (std::f64::consts::LN_2 - ap_en);
    Ok(TestResult::new(
        "approximate_entropy",
        chi2,
        igamc((1u64 << (m - 1)) as f64, chi2 / 2.0),
    )
    .param("n", n)
    .param("m", m)
    .warned(adv.items))
}

/// Serial test; returns the results for `del psi^2` and `del^2 psi^2`.
pub fn serial(bits: &BitStream, m: usize) -> Result<(TestResult, TestResult)> {
    let n = bits.len();
    require_range("serial", "m", m, 2, 20)?;
    require_len("serial", n, m + 1)?;
    let mut adv = Advisories::new("serial");
    let limit = (n as f64).log2().floor() as isize - 2;
    adv.check((m as isize) < limit, || {
        format!("m = {m} is not below the recommended floor(log2 n) - 2 = {limit}")
    });
    let x = bits.as_slice();
    let mi = m as isize;
    let (p0, p1, p2) = (psi2(x, mi), psi2(x, mi - 1), psi2(x, mi - 2));
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    let first = TestResult::new("serial_1", d1, igamc((m as f64 - 2.0).exp2(), d1 / 2.0))
        .param("n", n)
        .param("m", m)
        .warned(adv.items.clone());
    let second = TestResult::new("serial_2", d2, igamc((m as f64 - 3.0).exp2(), d2 / 2.0))
        .param("n", n)
        .param("m", m)
        .warned(adv.items);
    Ok((first, second))
}
