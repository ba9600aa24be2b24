//! Entropic causal direction between two discrete variables.

use serde::{Deserialize, Serialize};

use super::coupling::min_entropy_coupling;
use super::entropy::{entropy_of, Dist};
use crate::error::{contract, Result};

/// Sums closer than this are not separated.
pub const DIRECTION_MARGIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalDirection {
    XCausesY,
    YCausesX,
    Undecided,
}

/// Smallest entropy of an exogenous variable that can generate all
/// conditionals `Y | X = i`: the joint entropy of their minimum-entropy
/// coupling (greedy). A single conditional needs only its own entropy.
pub fn causal_lower_bound(conditionals: &[Dist]) -> Result<f64> {
    match conditionals {
        [] => Err(contract("at least one conditional is required")),
        [only] => Ok(entropy_of(only.probs().iter().copied())),
        many => Ok(min_entropy_coupling(many)?.entropy()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionScores {
    /// `H(X) + causal_lower_bound({Y | X = i})`
    pub x_to_y: f64,
    /// `H(Y) + causal_lower_bound({X | Y = j})`
    pub y_to_x: f64,
    pub verdict: CausalDirection,
}

pub fn infer_causal_direction(samples: &[(usize, usize)]) -> Result<DirectionScores> {
    if samples.is_empty() {
        return Err(contract("no samples"));
    }
    let nx = samples.iter().map(|s| s.0).max().unwrap() + 1;
    let ny = samples.iter().map(|s| s.1).max().unwrap() + 1;
    let mut joint = vec![vec![0.0; ny]; nx];
    for &(x, y) in samples {
        joint[x][y] += 1.0;
    }
    let transposed: Vec<Vec<f64>> = (0..ny)
        .map(|y| (0..nx).map(|x| joint[x][y]).collect())
        .collect();
    let (hx, conds_y) = marginal_and_conditionals(&joint)?;
    let (hy, conds_x) = marginal_and_conditionals(&transposed)?;
    let degenerate = conds_y.len() < 2 || conds_x.len() < 2;
    let x_to_y = hx + causal_lower_bound(&conds_y)?;
    let y_to_x = hy + causal_lower_bound(&conds_x)?;
    let verdict = if degenerate || (x_to_y - y_to_x).abs() < DIRECTION_MARGIN {
        CausalDirection::Undecided
    } else if x_to_y < y_to_x {
        CausalDirection::XCausesY
    } else {
        CausalDirection::YCausesX
    };
    Ok(DirectionScores {
        x_to_y,
        y_to_x,
        verdict,
    })
}

/// Entropy of the row marginal and the row-conditional distributions of the
/// observed rows.
fn marginal_and_conditionals(table: &[Vec<f64>]) -> Result<(f64, Vec<Dist>)> {
    let total: f64 = table.iter().flatten().sum();
    let mut row_masses = Vec::new();
    let mut conds = Vec::new();
    for row in table {
        let mass: f64 = row.iter().sum();
        if mass > 0.0 {
            row_masses.push(mass / total);
            conds.push(Dist::from_weights(row)?);
        }
    }
    Ok((entropy_of(row_masses), conds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Dist {
        Dist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bound_examples() {
        let point = d(&[0.0, 1.0]);
        assert_eq!(causal_lower_bound(&[point.clone(), point.clone()]).unwrap(), 0.0);
        // disjoint point masses still couple onto one joint cell
        let a = d(&[1.0, 0.0]);
        let b = d(&[0.0, 1.0]);
        assert_eq!(causal_lower_bound(&[a, b]).unwrap(), 0.0);
        let u = d(&[0.5, 0.5]);
        assert!((causal_lower_bound(&[u.clone(), u]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_is_permutation_invariant() {
        let cs = vec![d(&[0.7, 0.2, 0.1]), d(&[0.1, 0.5, 0.4]), d(&[0.3, 0.3, 0.4])];
        let h = causal_lower_bound(&cs).unwrap();
        let rev: Vec<Dist> = cs.iter().rev().cloned().collect();
        let rot = vec![cs[1].clone(), cs[2].clone(), cs[0].clone()];
        assert!((causal_lower_bound(&rev).unwrap() - h).abs() < 1e-12);
        assert!((causal_lower_bound(&rot).unwrap() - h).abs() < 1e-12);
    }

    fn counts_to_samples(table: &[(usize, usize, usize)]) -> Vec<(usize, usize)> {
        table
            .iter()
            .flat_map(|&(x, y, n)| std::iter::repeat_n((x, y), n))
            .collect()
    }

    #[test]
    fn deterministic_map_points_forward() {
        // X in 0..4 with weights 4:3:2:1, Y = [0,0,1,1][X]
        let samples = counts_to_samples(&[(0, 0, 40), (1, 0, 30), (2, 1, 20), (3, 1, 10)]);
        let s = infer_causal_direction(&samples).unwrap();
        let hx = entropy_of([0.4, 0.3, 0.2, 0.1]);
        assert!((s.x_to_y - hx).abs() < 1e-12);
        // hand-run greedy on X|Y=0 = [4/7,3/7,0,0], X|Y=1 = [0,0,2/3,1/3]:
        // allocations 4/7, 1/3, 2/21
        let hy = entropy_of([0.7, 0.3]);
        let ec = entropy_of([4.0 / 7.0, 1.0 / 3.0, 2.0 / 21.0]);
        assert!((s.y_to_x - (hy + ec)).abs() < 1e-12);
        assert_eq!(s.verdict, CausalDirection::XCausesY);

        let swapped: Vec<(usize, usize)> = samples.iter().map(|(x, y)| (*y, *x)).collect();
        assert_eq!(
            infer_causal_direction(&swapped).unwrap().verdict,
            CausalDirection::YCausesX
        );
    }

    #[test]
    fn independent_is_undecided() {
        let mut table = Vec::new();
        for (x, wx) in [3usize, 2, 5].iter().enumerate() {
            for (y, wy) in [1usize, 4].iter().enumerate() {
                table.push((x, y, wx * wy * 10));
            }
        }
        let s = infer_causal_direction(&counts_to_samples(&table)).unwrap();
        assert_eq!(s.verdict, CausalDirection::Undecided);
        assert!((s.x_to_y - s.y_to_x).abs() < 1e-9);
    }

    #[test]
    fn constant_variable_is_undecided() {
        let samples = vec![(0, 0), (1, 0), (2, 0)];
        assert_eq!(
            infer_causal_direction(&samples).unwrap().verdict,
            CausalDirection::Undecided
        );
    }
}
