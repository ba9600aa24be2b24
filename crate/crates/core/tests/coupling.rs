use maclab::info::{mec_brute_force, min_entropy_coupling, shannon_entropy, Dist};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lattice denominator for test marginals.
const D: u32 = 12;

fn h(cells: &[u32]) -> f64 {
    cells
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / D as f64;
            -p * p.log2()
        })
        .sum()
}

/// Exhaustive minimum over all couplings with entries on the 1/D lattice.
/// Row and column sums are integers, so the transportation polytope has
/// integral vertices and the concave joint entropy attains its minimum on
/// the lattice.
fn lattice_oracle(rows: &[u32], cols: &[u32]) -> f64 {
    let (m, n) = (rows.len(), cols.len());
    let mut best = f64::INFINITY;
    let mut cells = vec![0u32; m * n];
    fn fill(i: usize, cells: &mut [u32], rows: &[u32], cols: &[u32], best: &mut f64) {
        let (m, n) = (rows.len(), cols.len());
        if i == m - 1 {
            // last row is forced by the column sums
            for k in 0..n {
                let used: u32 = (0..m - 1).map(|r| cells[r * n + k]).sum();
                if used > cols[k] {
                    return;
                }
                cells[i * n + k] = cols[k] - used;
            }
            *best = best.min(h(cells));
            return;
        }
        row(i, 0, rows[i], cells, rows, cols, best);
    }
    fn row(i: usize, k: usize, left: u32, cells: &mut [u32], rows: &[u32], cols: &[u32], best: &mut f64) {
        let n = cols.len();
        if k == n - 1 {
            cells[i * n + k] = left;
            let used: u32 = (0..=i).map(|r| cells[r * n + k]).sum();
            if used <= cols[k] {
                fill(i + 1, cells, rows, cols, best);
            }
            return;
        }
        for v in 0..=left {
            cells[i * n + k] = v;
            let used: u32 = (0..=i).map(|r| cells[r * n + k]).sum();
            if used > cols[k] {
                break;
            }
            row(i, k + 1, left - v, cells, rows, cols, best);
        }
    }
    if m == 1 {
        return h(cols);
    }
    fill(0, &mut cells, rows, cols, &mut best);
    best
}

fn random_lattice_marginal(rng: &mut ChaCha8Rng) -> Vec<u32> {
    let size = rng.random_range(1..=3);
    loop {
        let mut cuts: Vec<u32> = (0..size - 1).map(|_| rng.random_range(1..D)).collect();
        cuts.sort_unstable();
        let mut parts = Vec::with_capacity(size);
        let mut prev = 0;
        for c in cuts.into_iter().chain(std::iter::once(D)) {
            parts.push(c - prev);
            prev = c;
        }
        if parts.iter().all(|&p| p > 0) {
            return parts;
        }
    }
}

fn dist(parts: &[u32]) -> Dist {
    Dist::new(parts.iter().map(|&p| p as f64 / D as f64).collect()).unwrap()
}

#[test]
fn oracle_examples() {
    // uniform binaries couple on the diagonal
    assert!((lattice_oracle(&[6, 6], &[6, 6]) - 1.0).abs() < 1e-12);
    // a point mass leaves only the other marginal's entropy
    assert!((lattice_oracle(&[12], &[3, 9]) - h(&[3, 9])).abs() < 1e-12);
    // (1/2,1/2) with (1/4,3/4): best is {1/2, 1/4, 1/4} = 1.5 bits
    assert!((lattice_oracle(&[6, 6], &[3, 9]) - 1.5).abs() < 1e-12);
}

#[test]
fn greedy_within_one_bit_of_oracle_on_100_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for _ in 0..100 {
        let p = random_lattice_marginal(&mut rng);
        let q = random_lattice_marginal(&mut rng);
        let oracle = lattice_oracle(&p, &q);
        let (dp, dq) = (dist(&p), dist(&q));
        let greedy = min_entropy_coupling(&[dp.clone(), dq.clone()]).unwrap();
        assert!(greedy.marginal_error(&[dp.clone(), dq.clone()]) < 1e-6);
        assert!(greedy.entropy() <= oracle + 1.0 + 1e-9, "{p:?} {q:?}");
        assert!(greedy.entropy() >= oracle - 1e-9);
        // no coupling beats the larger marginal entropy
        assert!(oracle >= shannon_entropy(&dp).max(shannon_entropy(&dq)) - 1e-9);

        let exact = mec_brute_force(&dp, &dq).unwrap();
        assert!((exact.entropy() - oracle).abs() < 1e-9, "{p:?} {q:?}");
        assert!(exact.marginal_error(&[dp, dq]) < 1e-6);
    }
}

#[test]
fn greedy_satisfies_real_valued_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let count = rng.random_range(2..=4);
        let marginals: Vec<Dist> = (0..count)
            .map(|_| {
                let size = rng.random_range(1..=6);
                let w: Vec<f64> = (0..size).map(|_| rng.random_range(0.01..1.0)).collect();
                Dist::from_weights(&w).unwrap()
            })
            .collect();
        let c = min_entropy_coupling(&marginals).unwrap();
        assert!(c.marginal_error(&marginals) < 1e-6);
        let total: f64 = c.cells().values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
