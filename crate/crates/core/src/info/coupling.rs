//! Minimum-entropy couplings of discrete marginals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::entropy::{entropy_of, Dist};
use crate::error::{contract, Error, Result};

pub const MARGINAL_TOL: f64 = 1e-6;

/// Sparse joint distribution over the product of the marginals' supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingTable {
    dims: Vec<usize>,
    cells: BTreeMap<Vec<usize>, f64>,
}

impl CouplingTable {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cells(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.cells
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.cells.get(index).copied().unwrap_or(0.0)
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(self.cells.values().copied())
    }

    /// Marginal along `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dims[axis]];
        for (idx, p) in &self.cells {
            m[idx[axis]] += p;
        }
        m
    }

    /// Largest absolute deviation between the table's marginals and `targets`.
    pub fn marginal_error(&self, targets: &[Dist]) -> f64 {
        targets
            .iter()
            .enumerate()
            .flat_map(|(axis, d)| {
                self.marginal(axis)
                    .into_iter()
                    .zip(d.probs().to_vec())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

/// Greedy coupling: repeatedly join the largest remaining mass of every
/// marginal, allocate the smallest of those maxima to that joint cell, and
/// subtract it everywhere.
pub fn min_entropy_coupling(marginals: &[Dist]) -> Result<CouplingTable> {
    if marginals.len() < 2 {
        return Err(contract("coupling needs at least two marginals"));
    }
    let dims: Vec<usize> = marginals.iter().map(Dist::len).collect();
    let mut remaining: Vec<Vec<f64>> = marginals.iter().map(|d| d.probs().to_vec()).collect();
    let mut cells: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let max_steps: usize = dims.iter().sum();
    for _ in 0..max_steps {
        let picks: Vec<(usize, f64)> = remaining
            .iter()
            .map(|r| {
                r.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
            })
            .collect();
        let mass = picks.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        if mass <= 1e-15 {
            break;
        }
        let index: Vec<usize> = picks.iter().map(|(i, _)| *i).collect();
        for (r, (i, _)) in remaining.iter_mut().zip(&picks) {
            r[*i] -= mass;
        }
        *cells.entry(index).or_insert(0.0) += mass;
    }
    let table = CouplingTable { dims, cells };
    debug_assert!(table.marginal_error(marginals) <= MARGINAL_TOL);
    Ok(table)
}

/// Exact minimum-entropy coupling of two marginals with support at most 3.
///
/// Joint entropy is concave, so its minimum over the transportation polytope
/// is attained at a vertex. Vertices are basic feasible solutions, i.e.
/// spanning trees of the row/column bipartite graph with nonnegative flows;
/// all of them are enumerated.
pub fn mec_brute_force(p: &Dist, q: &Dist) -> Result<CouplingTable> {
    let (m, n) = (p.len(), q.len());
    if m > 3 || n > 3 {
        return Err(Error::Unsupported(format!(
            "brute-force coupling supports at most 3x3, got {m}x{n}"
        )));
    }
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |k| (i, k))).collect();
    let basis_size = m + n - 1;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << cells.len()) {
        if mask.count_ones() as usize != basis_size {
            continue;
        }
        let chosen: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, c)| *c)
            .collect();
        let Some(flows) = solve_tree(&chosen, p.probs(), q.probs()) else {
            continue;
        };
        let h = entropy_of(flows.iter().copied());
        if best.as_ref().is_none_or(|(bh, _)| h < *bh) {
            let mut dense = vec![0.0; m * n];
            for ((i, k), f) in chosen.iter().zip(&flows) {
                dense[i * n + k] = *f;
            }
            best = Some((h, dense));
        }
    }
    let (_, dense) = best.ok_or_else(|| contract("transportation polytope has no vertex"))?;
    let mut table = BTreeMap::new();
    for (c, v) in dense.into_iter().enumerate() {
        if v > 0.0 {
            table.insert(vec![c / n, c % n], v);
        }
    }
    Ok(CouplingTable {
        dims: vec![m, n],
        cells: table,
    })
}

/// Flows on a candidate basis by leaf elimination; `None` if the cells do
/// not form a spanning tree or a flow would be negative.
fn solve_tree(cells: &[(usize, usize)], rows: &[f64], cols: &[f64]) -> Option<Vec<f64>> {
    let m = rows.len();
    let mut supply: Vec<f64> = rows.iter().chain(cols).copied().collect();
    let mut alive = vec![true; cells.len()];
    let mut flows = vec![0.0; cells.len()];
    let node_of = |c: &(usize, usize)| (c.0, m + c.1);
    for _ in 0..cells.len() {
        let mut degree = vec![0usize; supply.len()];
        for (c, _) in cells.iter().zip(&alive).filter(|(_, a)| **a) {
            let (r, k) = node_of(c);
            degree[r] += 1;
            degree[k] += 1;
        }
        let (e, leaf) = cells
            .iter()
            .enumerate()
            .filter(|(e, _)| alive[*e])
            .find_map(|(e, c)| {
                let (r, k) = node_of(c);
                if degree[r] == 1 {
                    Some((e, r))
                } else if degree[k] == 1 {
                    Some((e, k))
                } else {
                    None
                }
            })?;
        let (r, k) = node_of(&cells[e]);
        let other = if leaf == r { k } else { r };
        let f = supply[leaf];
        if f < -1e-12 {
            return None;
        }
        let f = f.max(0.0);
        flows[e] = f;
        supply[leaf] = 0.0;
        supply[other] -= f;
        alive[e] = false;
    }
    if supply.iter().any(|s| s.abs() > 1e-9) {
        return None;
    }
    Some(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Dist {
        Dist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn point_masses_couple_at_zero_entropy() {
        let t = min_entropy_coupling(&[d(&[1.0, 0.0]), d(&[1.0, 0.0])]).unwrap();
        assert_eq!(t.entropy(), 0.0);
        let b = mec_brute_force(&d(&[1.0, 0.0]), &d(&[1.0, 0.0])).unwrap();
        assert_eq!(b.entropy(), 0.0);
    }

    #[test]
    fn uniform_binaries_give_diagonal() {
        let u = d(&[0.5, 0.5]);
        let t = min_entropy_coupling(&[u.clone(), u.clone()]).unwrap();
        assert!((t.entropy() - 1.0).abs() < 1e-12);
        assert_eq!(t.get(&[0, 0]), 0.5);
        assert_eq!(t.get(&[1, 1]), 0.5);
        let b = mec_brute_force(&u, &u).unwrap();
        assert!((b.entropy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_respects_marginals_for_many_marginals() {
        let ms = vec![d(&[0.5, 0.3, 0.2]), d(&[0.6, 0.4]), d(&[0.1, 0.2, 0.3, 0.4])];
        let t = min_entropy_coupling(&ms).unwrap();
        assert!(t.marginal_error(&ms) < MARGINAL_TOL);
        assert_eq!(t.dims(), &[3, 2, 4]);
    }

    #[test]
    fn brute_force_rejects_large_support() {
        assert!(matches!(
            mec_brute_force(&d(&[0.25; 4]), &d(&[0.5, 0.5])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn single_marginal_rejected() {
        assert!(min_entropy_coupling(&[d(&[1.0])]).is_err());
    }
}
