//! Plug-in Shannon entropy of non-overlapping bit blocks.

use serde::{Deserialize, Serialize};

use crate::bitgen::BitStream;
use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 8;
/// Minimum stream length, in bits per possible symbol.
const COVERAGE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Entropy per bit, in [0, 1].
    pub shannon_bits_per_bit: f64,
    pub block_size: usize,
    pub blocks: usize,
    /// Occurrences of each block value (first bit most significant).
    pub counts: Vec<u64>,
}

/// Empirical entropy of the `block_size`-bit symbols, divided by
/// `block_size`. Needs `n >= 100 * 2^block_size`; the trailing partial
/// block is discarded.
pub fn shannon_entropy(bits: &BitStream, block_size: usize) -> Result<EntropyReport> {
    if !(1..=20).contains(&block_size) {
        return Err(Error::config(format!(
            "block size must be in 1..=20, got {block_size}"
        )));
    }
    let symbols = 1usize << block_size;
    if bits.len() < COVERAGE * symbols {
        return Err(Error::data(format!(
            "{} bits do not cover {symbols} symbols (need at least {})",
            bits.len(),
            COVERAGE * symbols
        )));
    }
    let blocks = bits.len() / block_size;
    let mut counts = vec![0u64; symbols];
    for chunk in bits.as_slice().chunks_exact(block_size) {
        let v = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        counts[v] += 1;
    }
    let total = blocks as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok(EntropyReport {
        shannon_bits_per_bit: (h / block_size as f64).clamp(0.0, 1.0),
        block_size,
        blocks,
        counts,
    })
}
