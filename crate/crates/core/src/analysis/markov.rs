//! Order-k Markov next-bit predictor used as a predictability baseline.

use serde::{Deserialize, Serialize};

use crate::bitgen::BitStream;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub order: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Wilson 95% interval.
    pub interval: (f64, f64),
    /// Test predictions that fell back to the global majority.
    pub unseen_contexts: usize,
}

/// Trains on the first `train_fraction` of the stream and predicts each
/// later bit from its `order` predecessors. Ties predict 1; contexts never
/// seen in training predict the training majority.
pub fn markov_predict(bits: &BitStream, order: usize, train_fraction: f64) -> Result<MarkovReport> {
    if order > MAX_ORDER {
        return Err(Error::config(format!("order must be at most {MAX_ORDER}, got {order}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let x = bits.as_slice();
    let n = x.len();
    let train_len = (n as f64 * train_fraction).floor() as usize;
    if train_len <= order || train_len >= n {
        return Err(Error::data(format!(
            "{n} bits leave no room for an order-{order} train/test split"
        )));
    }
    let mask = (1usize << order) - 1;
    let mut table = vec![[0u64; 2]; 1 << order];
    let mut ctx = 0usize;
    let mut ones = 0u64;
    for (i, &b) in x[..train_len].iter().enumerate() {
        if i >= order {
            table[ctx][b as usize] += 1;
        }
        ones += b as u64;
        ctx = ((ctx << 1) | b as usize) & mask;
    }
    let majority = u8::from(2 * ones >= train_len as u64);
    let mut correct = 0;
    let mut unseen = 0;
    for (i, &b) in x.iter().enumerate().skip(train_len) {
        let c = x[i - order..i].iter().fold(0usize, |a, &v| (a << 1) | v as usize);
        let [zeros, ones] = table[c];
        let guess = if zeros + ones == 0 {
            unseen += 1;
            majority
        } else {
            u8::from(ones >= zeros)
        };
        correct += usize::from(guess == b);
    }
    let test_len = n - train_len;
    let accuracy = correct as f64 / test_len as f64;
    Ok(MarkovReport {
        order,
        train_len,
        test_len,
        correct,
        accuracy,
        interval: wilson(correct, test_len),
        unseen_contexts: unseen,
    })
}

fn wilson(k: usize, n: usize) -> (f64, f64) {
    let z = super::autocorr::Z95;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn periodic_pattern_is_fully_predictable() {
        let bits = BitStream::from_bools((0..4000).map(|i| [true, true, false, true][i % 4]));
        let r = markov_predict(&bits, 4, 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.unseen_contexts, 0);
    }

    #[test]
    fn fair_bits_are_unpredictable() {
        let mut rng = seed::rng(31);
        let bits = BitStream::from_bools((0..200_000).map(|_| rng.random::<bool>()));
        let r = markov_predict(&bits, 8, 0.5).unwrap();
        let sigma = (0.25 / r.test_len as f64).sqrt();
        assert!((r.accuracy - 0.5).abs() < 3.0 * sigma, "{}", r.accuracy);
        assert!(r.interval.0 <= r.accuracy && r.accuracy <= r.interval.1);
    }

    #[test]
    fn biased_coin_with_order_zero() {
        let mut rng = seed::rng(32);
        let bits = BitStream::from_bools((0..200_000).map(|_| rng.random::<f64>() < 0.75));
        let r = markov_predict(&bits, 0, 0.5).unwrap();
        assert!((r.accuracy - 0.75).abs() < 0.01);
    }

    #[test]
    fn invalid_parameters() {
        let bits = BitStream::from_bits(vec![0, 1, 1, 0]).unwrap();
        assert!(markov_predict(&bits, 17, 0.5).is_err());
        assert!(markov_predict(&bits, 1, 1.0).is_err());
        assert!(markov_predict(&bits, 3, 0.5).is_err());
    }
}
