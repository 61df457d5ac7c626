use super::{igamc, require_len, require_range, Advisories, TestResult};
use crate::bitgen::BitStream;
use crate::error::Result;

/// Rank over GF(2) of a matrix whose rows are bitmasks of `cols` columns.
pub fn gf2_rank(rows: &mut [u64], cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let bit = 1u64 << (cols - 1 - c);
        let Some(p) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row & bit != 0 {
                *row ^= pivot;
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Probability that a uniformly random `m x q` binary matrix has rank `r`.
fn rank_probability(r: usize, m: usize, q: usize) -> f64 {
    let exp = (r * (q + m - r)) as f64 - (m * q) as f64;
    let mut p = exp.exp2();
    for i in 0..r {
        let i = i as f64;
        p *= (1.0 - (i - q as f64).exp2()) * (1.0 - (i - m as f64).exp2())
            / (1.0 - (i - r as f64).exp2());
    }
    p
}

/// Binary matrix rank test on disjoint `m x q` matrices filled row by row.
pub fn binary_matrix_rank(bits: &BitStream, m: usize, q: usize) -> Result<TestResult> {
    let n = bits.len();
    require_range("rank", "M", m, 2, 64)?;
    require_range("rank", "Q", q, 2, 64)?;
    require_len("rank", n, m * q)?;
    let mut adv = Advisories::new("rank");
    let matrices = n / (m * q);
    adv.check(matrices >= 38, || {
        format!("{matrices} matrices is below the recommended 38")
    });
    let full = m.min(q);
    let mut f = [0u64; 3];
    let mut rows = vec![0u64; m];
    for block in bits.as_slice().chunks_exact(m * q) {
        for (row, chunk) in rows.iter_mut().zip(block.chunks_exact(q)) {
            *row = chunk.iter().fold(0u64, |a, &b| (a << 1) | b as u64);
        }
        let r = gf2_rank(&mut rows, q);
        f[if r == full { 0 } else if r + 1 == full { 1 } else { 2 }] += 1;
    }
    let p0 = rank_probability(full, m, q);
    let p1 = rank_probability(full - 1, m, q);
    let p = [p0, p1, 1.0 - p0 - p1];
    let nf = matrices as f64;
    let chi2: f64 = f
        .iter()
        .zip(&p)
        .map(|(&c, &p)| (c as f64 - nf * p).powi(2) / (nf * p))
        .sum();
    Ok(TestResult::new("rank", chi2, igamc(1.0, chi2 / 2.0))
        .param("n", n)
        .param("M", m)
        .param("Q", q)
        .warned(adv.items))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_sum_to_one_and_match_asymptotics() {
        let total: f64 = (0..=32).map(|r| rank_probability(r, 32, 32)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((rank_probability(32, 32, 32) - 0.288_788_095_1).abs() < 1e-9);
        assert!((rank_probability(31, 32, 32) - 0.577_576_190_2).abs() < 1e-9);
    }

    #[test]
    fn identity_and_singular_matrices() {
        let mut id: Vec<u64> = (0..8).map(|i| 1 << i).collect();
        assert_eq!(gf2_rank(&mut id, 8), 8);
        let mut dup = vec![0b1010, 0b1010, 0b0110, 0b1100];
        assert_eq!(gf2_rank(&mut dup, 4), 2);
    }
}
