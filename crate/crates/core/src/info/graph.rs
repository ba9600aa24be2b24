//! Protocol graphs and their von Neumann (Laplacian-spectrum) entropy.

use serde::{Deserialize, Serialize};

use super::entropy::entropy_of;
use crate::error::{contract, Error, Result};

pub const JACOBI_TOL: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Undirected weighted graph over labelled protocol symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolGraph {
    pub vertices: Vec<String>,
    /// Row-major `n x n`, symmetric with zero diagonal.
    pub adjacency: Vec<f64>,
}

impl ProtocolGraph {
    pub fn new(vertices: Vec<String>, adjacency: Vec<f64>) -> Result<Self> {
        let n = vertices.len();
        if adjacency.len() != n * n {
            return Err(contract(format!(
                "adjacency has {} entries for {n} vertices",
                adjacency.len()
            )));
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0.0 {
                return Err(contract(format!("nonzero diagonal at vertex {i}")));
            }
            for k in 0..n {
                let a = adjacency[i * n + k];
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(contract(format!("invalid weight {a} at ({i},{k})")));
                }
                if (a - adjacency[k * n + i]).abs() > 1e-12 {
                    return Err(contract(format!("adjacency not symmetric at ({i},{k})")));
                }
            }
        }
        Ok(Self {
            vertices,
            adjacency,
        })
    }

    /// Graph with no edges; add weight with [`ProtocolGraph::add_edge`].
    pub fn empty(vertices: Vec<String>) -> Self {
        let n = vertices.len();
        Self {
            vertices,
            adjacency: vec![0.0; n * n],
        }
    }

    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) {
        if a == b {
            return;
        }
        let n = self.n();
        self.adjacency[a * n + b] += weight;
        self.adjacency[b * n + a] += weight;
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_index(&self, label: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == label)
    }

    /// `L = D - A`, row-major.
    pub fn laplacian(&self) -> Vec<f64> {
        let n = self.n();
        let mut l: Vec<f64> = self.adjacency.iter().map(|a| -a).collect();
        for i in 0..n {
            l[i * n + i] = self.adjacency[i * n..(i + 1) * n].iter().sum();
        }
        l
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |k| (i, k)))
            .filter(|(i, k)| self.adjacency[i * n + k] > 0.0)
            .count()
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    if matrix.len() != n * n {
        return Err(contract("matrix is not n x n"));
    }
    let mut a = matrix.to_vec();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    s += a[i * n + k] * a[i * n + k];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off_norm(&a) >= JACOBI_TOL {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// `-sum (l_i / tr L) log2 (l_i / tr L)` over the Laplacian spectrum.
pub fn von_neumann_entropy(g: &ProtocolGraph) -> Result<f64> {
    let n = g.n();
    let lap = g.laplacian();
    let trace: f64 = (0..n).map(|i| lap[i * n + i]).sum();
    if trace <= 0.0 {
        return Err(contract("graph has no edges"));
    }
    let eig = jacobi_eigenvalues(&lap, n)?;
    Ok(entropy_of(eig.into_iter().map(|l| l.max(0.0) / trace)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn single_edge_has_zero_entropy() {
        let mut g = ProtocolGraph::empty(labels(2));
        g.add_edge(0, 1, 1.0);
        let eig = jacobi_eigenvalues(&g.laplacian(), 2).unwrap();
        assert!(eig[0].abs() < 1e-12 && (eig[1] - 2.0).abs() < 1e-12);
        assert!(von_neumann_entropy(&g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn triangle_has_one_bit() {
        let mut g = ProtocolGraph::empty(labels(3));
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(0, 2, 1.0);
        assert!((von_neumann_entropy(&g).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_graph_rejected() {
        let g = ProtocolGraph::empty(labels(4));
        assert!(von_neumann_entropy(&g).is_err());
    }

    #[test]
    fn reference_bounds() {
        assert!((22f64.log2() - 4.46).abs() < 0.005);
        assert!((13f64.log2() - 3.70).abs() < 0.005);
    }

    #[test]
    fn validation() {
        assert!(ProtocolGraph::new(labels(2), vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(ProtocolGraph::new(labels(2), vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(ProtocolGraph::new(labels(2), vec![0.0, 1.0, 1.0, 0.0]).is_ok());
    }
}
