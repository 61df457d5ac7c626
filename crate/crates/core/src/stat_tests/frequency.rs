use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{igamc, normal_cdf, require_len, require_range, Advisories, TestResult};
use crate::bitgen::BitStream;
use crate::error::Result;

pub fn frequency_monobit(bits: &BitStream) -> Result<TestResult> {
    let n = bits.len();
    require_len("frequency", n, 100)?;
    let s = 2 * bits.count_ones() as i64 - n as i64;
    let s_obs = (s.abs() as f64) / (n as f64).sqrt();
    Ok(TestResult::new("frequency", s_obs, erfc(s_obs / std::f64::consts::SQRT_2)).param("n", n))
}

pub fn block_frequency(bits: &BitStream, m: usize) -> Result<TestResult> {
    let n = bits.len();
    require_len("block_frequency", n, 100)?;
    require_range("block_frequency", "M", m, 2, n)?;
    let mut adv = Advisories::new("block_frequency");
    adv.check(m >= 20, || format!("block length M = {m} is below the recommended 20"));
    let blocks = n / m;
    let chi2 = 4.0
        * m as f64
        * bits
            .as_slice()
            .chunks_exact(m)
            .map(|b| {
                let pi = b.iter().map(|&x| x as u32).sum::<u32>() as f64 / m as f64;
                (pi - 0.5).powi(2)
            })
            .sum::<f64>();
    Ok(
        TestResult::new("block_frequency", chi2, igamc(blocks as f64 / 2.0, chi2 / 2.0))
            .param("n", n)
            .param("M", m)
            .warned(adv.items),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

pub fn cumulative_sums(bits: &BitStream, direction: Direction) -> Result<TestResult> {
    let n = bits.len();
    let name = match direction {
        Direction::Forward => "cumulative_sums_forward",
        Direction::Backward => "cumulative_sums_backward",
    };
    require_len(name, n, 100)?;
    let step = |&b: &u8| 2 * b as i64 - 1;
    let mut s = 0i64;
    let mut z = 0i64;
    let mut visit = |v: i64| {
        s += v;
        z = z.max(s.abs());
    };
    match direction {
        Direction::Forward => bits.as_slice().iter().map(step).for_each(&mut visit),
        Direction::Backward => bits.as_slice().iter().rev().map(step).for_each(&mut visit),
    }
    let (nf, zf) = (n as f64, z as f64);
    let sq = nf.sqrt();
    let mut t1 = 0.0;
    let k_lo = ((-nf / zf + 1.0) / 4.0).floor() as i64;
    let k_hi = ((nf / zf - 1.0) / 4.0).floor() as i64;
    for k in k_lo..=k_hi {
        let k = k as f64;
        t1 += normal_cdf((4.0 * k + 1.0) * zf / sq) - normal_cdf((4.0 * k - 1.0) * zf / sq);
    }
    let mut t2 = 0.0;
    let k_lo = ((-nf / zf - 3.0) / 4.0).floor() as i64;
    for k in k_lo..=k_hi {
        let k = k as f64;
        t2 += normal_cdf((4.0 * k + 3.0) * zf / sq) - normal_cdf((4.0 * k + 1.0) * zf / sq);
    }
    Ok(TestResult::new(name, zf, 1.0 - t1 + t2).param("n", n))
}

/// Runs test. When the monobit prerequisite `|pi - 1/2| < 2/sqrt(n)` fails
/// the p-value is 0.
pub fn runs(bits: &BitStream) -> Result<TestResult> {
    let n = bits.len();
    require_len("runs", n, 100)?;
    let x = bits.as_slice();
    let pi = bits.count_ones() as f64 / n as f64;
    if (pi - 0.5).abs() >= 2.0 / (n as f64).sqrt() {
        return Ok(TestResult::new("runs", f64::NAN, 0.0)
            .param("n", n)
            .warned(vec!["frequency prerequisite failed; test not applicable".into()]));
    }
    let v = 1 + x.windows(2).filter(|w| w[0] != w[1]).count();
    let nf = n as f64;
    let num = (v as f64 - 2.0 * nf * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi);
    Ok(TestResult::new("runs", v as f64, erfc(num / den)).param("n", n))
}

struct LongestRunTable {
    m: usize,
    v_min: usize,
    pi: &'static [f64],
}

const LONGEST_8: LongestRunTable = LongestRunTable {
    m: 8,
    v_min: 1,
    pi: &[0.21484375, 0.3671875, 0.23046875, 0.1875],
};
const LONGEST_128: LongestRunTable = LongestRunTable {
    m: 128,
    v_min: 4,
    pi: &[0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847],
};
const LONGEST_10K: LongestRunTable = LongestRunTable {
    m: 10_000,
    v_min: 10,
    pi: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
};

/// Longest run of ones in a block; block length 8, 128 or 10^4 by input
/// length.
pub fn longest_run_of_ones(bits: &BitStream) -> Result<TestResult> {
    let n = bits.len();
    require_len("longest_run", n, 128)?;
    let table = if n < 6272 {
        &LONGEST_8
    } else if n < 750_000 {
        &LONGEST_128
    } else {
        &LONGEST_10K
    };
    let k = table.pi.len() - 1;
    let mut counts = vec![0u64; k + 1];
    let blocks = n / table.m;
    for block in bits.as_slice().chunks_exact(table.m) {
        let (mut best, mut cur) = (0, 0);
        for &b in block {
            cur = if b == 1 { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        let idx = best.clamp(table.v_min, table.v_min + k) - table.v_min;
        counts[idx] += 1;
    }
    let nb = blocks as f64;
    let chi2: f64 = counts
        .iter()
        .zip(table.pi)
        .map(|(&c, &p)| (c as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    Ok(TestResult::new("longest_run", chi2, igamc(k as f64 / 2.0, chi2 / 2.0))
        .param("n", n)
        .param("M", table.m))
}
