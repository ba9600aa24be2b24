//! Discrete Shannon quantities, all in bits.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A probability vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dist(Vec<f64>);

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(contract("distribution has empty support"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(contract(format!("negative or non-finite mass in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(contract(format!("distribution sums to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes nonnegative weights; all-zero weights are rejected.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(contract("weights must be nonnegative with positive total"));
        }
        Ok(Self(weights.iter().map(|w| w / total).collect()))
    }

    /// Counts smoothed with a symmetric pseudo-count `alpha` on every cell.
    pub fn from_counts(counts: &[f64], alpha: f64) -> Result<Self> {
        let smoothed: Vec<f64> = counts.iter().map(|c| c + alpha).collect();
        Self::from_weights(&smoothed)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(contract("distribution has empty support"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `-sum p log2 p` over raw masses, with `0 log 0 = 0`.
pub fn entropy_of(masses: impl IntoIterator<Item = f64>) -> f64 {
    masses
        .into_iter()
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn shannon_entropy(d: &Dist) -> f64 {
    entropy_of(d.0.iter().copied())
}

/// Entropy of smoothed counts: `H((c_k + alpha) / sum)`.
pub fn smoothed_entropy(counts: &[f64], alpha: f64) -> f64 {
    let total: f64 = counts.iter().map(|c| c + alpha).sum();
    if total <= 0.0 {
        return 0.0;
    }
    entropy_of(counts.iter().map(|c| (c + alpha) / total))
}

/// `H(outcome | condition)` from `(outcome, condition)` samples.
///
/// Each conditional distribution over `0..outcome_support` gets pseudo-count
/// `alpha`; the condition weights are plain empirical frequencies.
pub fn conditional_entropy(
    samples: &[(usize, usize)],
    outcome_support: usize,
    alpha: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(contract("conditional entropy needs at least one sample"));
    }
    if let Some((o, _)) = samples.iter().find(|(o, _)| *o >= outcome_support) {
        return Err(contract(format!(
            "outcome {o} outside support of size {outcome_support}"
        )));
    }
    let conditions = samples.iter().map(|(_, c)| *c).max().unwrap() + 1;
    let mut table = vec![vec![0.0; outcome_support]; conditions];
    for &(o, c) in samples {
        table[c][o] += 1.0;
    }
    let n = samples.len() as f64;
    Ok(table
        .iter()
        .filter_map(|row| {
            let seen: f64 = row.iter().sum();
            (seen > 0.0).then(|| seen / n * smoothed_entropy(row, alpha))
        })
        .sum())
}

/// Plug-in mutual information of a joint count table, in bits.
pub fn mutual_information(joint: &[Vec<f64>]) -> f64 {
    let total: f64 = joint.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / total).collect();
    let width = joint.iter().map(Vec::len).max().unwrap_or(0);
    let cols: Vec<f64> = (0..width)
        .map(|k| joint.iter().map(|r| r.get(k).copied().unwrap_or(0.0)).sum::<f64>() / total)
        .collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (k, &c) in row.iter().enumerate() {
            if c > 0.0 {
                let p = c / total;
                mi += p * (p / (rows[i] * cols[k])).log2();
            }
        }
    }
    mi.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shannon_examples() {
        let h = |v: Vec<f64>| shannon_entropy(&Dist::new(v).unwrap());
        assert!((h(vec![0.5, 0.5]) - 1.0).abs() < 1e-12);
        assert_eq!(h(vec![1.0, 0.0]), 0.0);
        assert!((h(vec![0.25; 4]) - 2.0).abs() < 1e-12);
        assert!((h(vec![0.125; 8]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_distribution_rejected() {
        assert!(Dist::new(vec![0.6, 0.6]).is_err());
        assert!(Dist::new(vec![-0.1, 1.1]).is_err());
        assert!(Dist::new(vec![]).is_err());
    }

    #[test]
    fn smoothing_behaviour() {
        // a single codeword out of eight
        let mut counts = vec![0.0; 8];
        counts[2] = 100.0;
        assert!(smoothed_entropy(&counts, 1e-12) < 1e-9);
        // unseen codewords still carry mass with alpha = 1
        let h = smoothed_entropy(&counts, 1.0);
        assert!(h > 0.0 && h < 3.0);
        assert!((smoothed_entropy(&[0.0; 8], 1.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_entropy_hand_table() {
        // {(a,0):2, (b,0):2, (a,1):4} with a=0, b=1
        let mut samples = vec![(0, 0); 2];
        samples.extend(vec![(1, 0); 2]);
        samples.extend(vec![(0, 1); 4]);
        let h = conditional_entropy(&samples, 2, 0.0).unwrap();
        assert!((h - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conditional_entropy_deterministic_and_independent() {
        let det: Vec<(usize, usize)> = (0..300).map(|i| (i % 3, i % 3)).collect();
        assert!(conditional_entropy(&det, 3, 0.0).unwrap() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ind: Vec<(usize, usize)> = (0..10_000)
            .map(|_| (rng.random_range(0..2), rng.random_range(0..3)))
            .collect();
        let h = conditional_entropy(&ind, 2, 1.0).unwrap();
        assert!((h - 1.0).abs() < 0.05, "{h}");
        assert!(conditional_entropy(&[], 2, 1.0).is_err());
    }

    #[test]
    fn mutual_information_cases() {
        // codeword is a function of three equiprobable states
        let joint = vec![
            vec![10.0, 0.0, 0.0],
            vec![0.0, 10.0, 0.0],
            vec![0.0, 0.0, 10.0],
        ];
        assert!((mutual_information(&joint) - 3f64.log2()).abs() < 1e-12);
        let product = vec![vec![6.0, 3.0], vec![4.0, 2.0]];
        assert!(mutual_information(&product).abs() < 1e-12);
    }
}
