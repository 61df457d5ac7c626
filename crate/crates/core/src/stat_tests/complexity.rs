use super::{igamc, require_len, require_range, Advisories, TestResult};
use crate::bitgen::BitStream;
use crate::error::Result;

const LC_PI: [f64; 7] = [0.010417, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833];

/// 64 bits of `bits` starting at bit `offset` (missing bits read as zero).
fn word_at(bits: &[u64], offset: usize) -> u64 {
    let (q, r) = (offset / 64, offset % 64);
    let lo = bits.get(q).copied().unwrap_or(0) >> r;
    let hi = if r == 0 {
        0
    } else {
        bits.get(q + 1).copied().unwrap_or(0) << (64 - r)
    };
    lo | hi
}

/// `dst ^= src << shift`, truncated to the length of `dst`.
fn xor_shifted(dst: &mut [u64], src: &[u64], shift: usize) {
    let (q, r) = (shift / 64, shift % 64);
    for (w, &s) in src.iter().enumerate() {
        if s == 0 {
            continue;
        }
        if let Some(d) = dst.get_mut(w + q) {
            *d ^= s << r;
        }
        if r != 0 {
            if let Some(d) = dst.get_mut(w + q + 1) {
                *d ^= s >> (64 - r);
            }
        }
    }
}

/// Length of the shortest LFSR generating `seq` (Berlekamp-Massey over
/// GF(2), with the polynomials and the reversed sequence packed into words
/// so each discrepancy is a word-wise AND and parity).
pub fn berlekamp_massey(seq: &[u8]) -> usize {
    let n = seq.len();
    if n == 0 {
        return 0;
    }
    let words = n / 64 + 2;
    // rev[j] = seq[n - 1 - j]
    let mut rev = vec![0u64; words];
    for (j, &b) in seq.iter().rev().enumerate() {
        rev[j / 64] |= (b as u64 & 1) << (j % 64);
    }
    let mut c = vec![0u64; words];
    let mut b = vec![0u64; words];
    c[0] = 1;
    b[0] = 1;
    let mut l = 0usize;
    let mut m: isize = -1;
    for step in 0..n {
        // sum_{i=0..=step} c_i * seq[step - i] = sum_i c_i * rev[n - 1 - step + i]
        let off = n - 1 - step;
        let mut acc = 0u64;
        for (w, &cw) in c.iter().enumerate().take(step / 64 + 1) {
            acc ^= cw & word_at(&rev, off + 64 * w);
        }
        if acc.count_ones() % 2 == 1 {
            let t = c.clone();
            xor_shifted(&mut c, &b, (step as isize - m) as usize);
            if 2 * l <= step {
                l = step + 1 - l;
                m = step as isize;
                b = t;
            }
        }
    }
    l
}

/// Linear complexity of every complete `m`-bit block.
pub fn linear_complexity_profile(bits: &BitStream, m: usize) -> Vec<usize> {
    bits.as_slice().chunks_exact(m.max(1)).map(berlekamp_massey).collect()
}

pub fn linear_complexity(bits: &BitStream, m: usize) -> Result<TestResult> {
    let n = bits.len();
    require_range("linear_complexity", "M", m, 2, 1 << 20)?;
    require_len("linear_complexity", n, m)?;
    let blocks = n / m;
    let mut adv = Advisories::new("linear_complexity");
    adv.check((500..=5000).contains(&m), || {
        format!("M = {m} is outside the recommended [500, 5000]")
    });
    adv.check(blocks >= 200, || format!("{blocks} blocks is below the recommended 200"));
    let mf = m as f64;
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mu = mf / 2.0 + (9.0 - sign) / 36.0 - (mf / 3.0 + 2.0 / 9.0) / mf.exp2();
    let mut v = [0u64; 7];
    for l in linear_complexity_profile(bits, m) {
        let t = sign * (l as f64 - mu) + 2.0 / 9.0;
        let idx = if t <= -2.5 {
            0
        } else if t <= -1.5 {
            1
        } else if t <= -0.5 {
            2
        } else if t <= 0.5 {
            3
        } else if t <= 1.5 {
            4
        } else if t <= 2.5 {
            5
        } else {
            6
        };
        v[idx] += 1;
    }
    let nb = blocks as f64;
    let chi2: f64 = v
        .iter()
        .zip(&LC_PI)
        .map(|(&c, &p)| (c as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    Ok(TestResult::new("linear_complexity", chi2, igamc(3.0, chi2 / 2.0))
        .param("n", n)
        .param("M", m)
        .warned(adv.items))
}
