//! Window statistics over traces: message/action entropies, the
//! entropic-causal regularizer, codeword sparsity and the bottleneck term.

use serde::{Deserialize, Serialize};

use super::model::Trace;
use crate::env::UeAction;
use crate::error::{contract, Result};
use crate::info::{mutual_information, smoothed_entropy};

/// Occurrence counts accumulated over a set of traces.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageCounts {
    pub codebook_size: usize,
    pub levels: usize,
    /// `[ue][codeword]`
    pub up: Vec<Vec<f64>>,
    pub dn: Vec<Vec<f64>>,
    /// `[ue][state][action]`
    pub action_by_state: Vec<Vec<Vec<f64>>>,
    /// `[ue][state][codeword]`
    pub up_by_state: Vec<Vec<Vec<f64>>>,
}

impl MessageCounts {
    pub fn new(num_ues: usize, codebook_size: usize, levels: usize) -> Self {
        Self {
            codebook_size,
            levels,
            up: vec![vec![0.0; codebook_size]; num_ues],
            dn: vec![vec![0.0; codebook_size]; num_ues],
            action_by_state: vec![vec![vec![0.0; UeAction::COUNT]; levels]; num_ues],
            up_by_state: vec![vec![vec![0.0; codebook_size]; levels]; num_ues],
        }
    }

    pub fn from_traces(traces: &[Trace], codebook_size: usize) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| contract("at least one trace is required"))?;
        let levels = traces
            .iter()
            .flat_map(|t| t.records.iter().map(|r| r.state as usize + 1))
            .max()
            .unwrap_or(1);
        let mut counts = Self::new(first.num_ues, codebook_size, levels);
        for t in traces {
            counts.add(t, 1.0)?;
        }
        Ok(counts)
    }

    pub fn num_ues(&self) -> usize {
        self.up.len()
    }

    /// Adds (`weight = 1`) or removes (`weight = -1`) a trace.
    pub fn add(&mut self, trace: &Trace, weight: f64) -> Result<()> {
        if trace.num_ues != self.num_ues() {
            return Err(contract("trace UE count differs from the window"));
        }
        for r in &trace.records {
            if r.up >= self.codebook_size || r.dn >= self.codebook_size {
                return Err(contract(format!(
                    "codeword index outside codebook of size {}",
                    self.codebook_size
                )));
            }
            let s = r.state as usize;
            if s >= self.levels {
                return Err(contract(format!("state {s} outside the window's range")));
            }
            self.up[r.ue][r.up] += weight;
            self.dn[r.ue][r.dn] += weight;
            self.action_by_state[r.ue][s][r.action.index()] += weight;
            self.up_by_state[r.ue][s][r.up] += weight;
        }
        Ok(())
    }

    pub fn state_counts(&self, ue: usize) -> Vec<f64> {
        self.action_by_state[ue]
            .iter()
            .map(|row| row.iter().sum())
            .collect()
    }
}

/// Entropies in bits estimated from codeword/action frequencies with a
/// symmetric pseudo-count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// `H(m_j^up)` per UE.
    pub up: Vec<f64>,
    /// `H(m_j^dn)` per UE.
    pub dn: Vec<f64>,
    /// `H(a_j | s_j = i)` per UE and state; `None` when `i` was never observed.
    pub action_given_state: Vec<Vec<Option<f64>>>,
    /// `H(U_j)`: the sum of the observed conditional action entropies.
    pub u: Vec<f64>,
}

impl EntropyReport {
    pub fn from_counts(counts: &MessageCounts, alpha: f64) -> Self {
        let up = counts.up.iter().map(|c| smoothed_entropy(c, alpha)).collect();
        let dn = counts.dn.iter().map(|c| smoothed_entropy(c, alpha)).collect();
        let action_given_state: Vec<Vec<Option<f64>>> = counts
            .action_by_state
            .iter()
            .map(|per_state| {
                per_state
                    .iter()
                    .map(|row| {
                        (row.iter().sum::<f64>() > 0.0).then(|| smoothed_entropy(row, alpha))
                    })
                    .collect()
            })
            .collect();
        let u = action_given_state
            .iter()
            .map(|hs| hs.iter().flatten().sum())
            .collect();
        Self {
            up,
            dn,
            action_given_state,
            u,
        }
    }
}

pub fn estimate_entropies(
    traces: &[Trace],
    codebook_size: usize,
    alpha: f64,
) -> Result<EntropyReport> {
    let counts = MessageCounts::from_traces(traces, codebook_size)?;
    Ok(EntropyReport::from_counts(&counts, alpha))
}

/// UE whose uplink is paired with UE `ue`'s action uncertainty.
pub fn partner(ue: usize, num_ues: usize) -> usize {
    (ue + 1) % num_ues
}

/// `max(0, x - y) + y`, identical to `max(x, y)`.
pub fn hinge_form(x: f64, y: f64) -> f64 {
    (x - y).max(0.0) + y
}

/// Which side of `max(H(U_j), H(m_partner^up))` is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcBranch {
    Actions,
    Uplink,
}

pub fn ec_branch(report: &EntropyReport, ue: usize) -> EcBranch {
    let p = partner(ue, report.u.len());
    if report.u[ue] >= report.up[p] {
        EcBranch::Actions
    } else {
        EcBranch::Uplink
    }
}

/// `L_EC = sum_j max(H(U_j), H(m_{partner(j)}^up))`. With two UEs this is
/// `max(H(U_1), H(m_2^up)) + max(H(U_2), H(m_1^up))`.
pub fn regularizer_ec(report: &EntropyReport) -> f64 {
    let n = report.u.len();
    (0..n)
        .map(|j| report.u[j].max(report.up[partner(j, n)]))
        .sum()
}

/// Active codewords (empirical frequency at least `epsilon`) per channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSparsity {
    pub up: Vec<usize>,
    pub dn: Vec<usize>,
}

impl ChannelSparsity {
    /// `up_1;..;up_n;dn_1;..;dn_n`
    pub fn to_field(&self) -> String {
        self.up
            .iter()
            .chain(&self.dn)
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn active_codewords(counts: &[f64], epsilon: f64) -> usize {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    counts.iter().filter(|c| **c / total >= epsilon).count()
}

pub fn codeword_sparsity(
    traces: &[Trace],
    codebook_size: usize,
    epsilon: f64,
) -> Result<ChannelSparsity> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(contract("epsilon must lie in (0, 1)"));
    }
    let counts = MessageCounts::from_traces(traces, codebook_size)?;
    Ok(sparsity_from_counts(&counts, epsilon))
}

pub fn sparsity_from_counts(counts: &MessageCounts, epsilon: f64) -> ChannelSparsity {
    ChannelSparsity {
        up: counts.up.iter().map(|c| active_codewords(c, epsilon)).collect(),
        dn: counts.dn.iter().map(|c| active_codewords(c, epsilon)).collect(),
    }
}

/// Plug-in `I(S_j; M_j^up)` summed over UEs.
pub fn ib_term(traces: &[Trace], codebook_size: usize) -> Result<f64> {
    let counts = MessageCounts::from_traces(traces, codebook_size)?;
    Ok(ib_from_counts(&counts))
}

pub fn ib_from_counts(counts: &MessageCounts) -> f64 {
    counts.up_by_state.iter().map(|t| mutual_information(t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::model::TraceRecord;

    fn trace_from(rows: &[(u32, usize, usize, UeAction)]) -> Trace {
        Trace {
            num_ues: 1,
            records: rows
                .iter()
                .enumerate()
                .map(|(i, &(state, up, dn, action))| TraceRecord {
                    slot: i as u32,
                    ue: 0,
                    state,
                    up,
                    dn,
                    action,
                    reward: 0.0,
                })
                .collect(),
            episode_return: 0.0,
            collisions: 0,
        }
    }

    #[test]
    fn uniform_codewords_give_three_bits() {
        let rows: Vec<_> = (0..800)
            .map(|i| (0, i % 8, i % 8, UeAction::Silence))
            .collect();
        let r = estimate_entropies(&[trace_from(&rows)], 8, 1e-9).unwrap();
        assert!((r.up[0] - 3.0).abs() < 1e-9);
        assert!(r.u[0] < 1e-6);
    }

    #[test]
    fn single_codeword_with_vanishing_pseudocount() {
        let rows: Vec<_> = (0..50).map(|_| (1, 5, 2, UeAction::Access)).collect();
        let r = estimate_entropies(&[trace_from(&rows)], 8, 1e-12).unwrap();
        assert!(r.up[0] < 1e-9 && r.dn[0] < 1e-9);
        // unseen codewords get mass through the pseudo-count
        let r1 = estimate_entropies(&[trace_from(&rows)], 8, 1.0).unwrap();
        let expected = smoothed_entropy(&[0., 0., 0., 0., 0., 50., 0., 0.], 1.0);
        assert!((r1.up[0] - expected).abs() < 1e-12);
        assert!(r1.up[0] > 0.0);
        // state 0 never observed
        assert_eq!(r1.action_given_state[0][0], None);
    }

    #[test]
    fn entropies_bounded_by_codebook() {
        let rows: Vec<_> = (0..37)
            .map(|i| ((i % 3) as u32, (i * 5) % 8, (i * 3) % 8, UeAction::ALL[i % 3]))
            .collect();
        let r = estimate_entropies(&[trace_from(&rows)], 8, 1.0).unwrap();
        for h in r.up.iter().chain(&r.dn) {
            assert!(*h >= 0.0 && *h <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn empty_or_out_of_range_rejected() {
        assert!(estimate_entropies(&[], 8, 1.0).is_err());
        let t = trace_from(&[(0, 9, 0, UeAction::Access)]);
        assert!(estimate_entropies(&[t], 8, 1.0).is_err());
    }

    fn report(u: [f64; 2], up: [f64; 2]) -> EntropyReport {
        EntropyReport {
            up: up.to_vec(),
            dn: vec![0.0; 2],
            action_given_state: vec![vec![]; 2],
            u: u.to_vec(),
        }
    }

    #[test]
    fn regularizer_examples() {
        // H(U_1) = 0.9 against H(m_2^up) = 1.4
        let r = report([0.9, 0.0], [0.0, 1.4]);
        assert!((regularizer_ec(&r) - 1.4).abs() < 1e-15);
        let r = report([2.0, 0.0], [0.0, 1.0]);
        assert!((regularizer_ec(&r) - 2.0).abs() < 1e-15);
        assert_eq!(ec_branch(&r, 0), EcBranch::Actions);
        let r = report([0.5, 0.25], [1.0, 2.0]);
        assert!((regularizer_ec(&r) - (2.0 + 1.0)).abs() < 1e-15);
        assert_eq!(ec_branch(&r, 0), EcBranch::Uplink);
    }

    #[test]
    fn sparsity_counts() {
        let rows: Vec<_> = (0..100)
            .map(|i| (0, i % 2, i % 8, UeAction::Silence))
            .collect();
        let s = codeword_sparsity(&[trace_from(&rows)], 8, 0.01).unwrap();
        assert_eq!(s.up, vec![2]);
        assert_eq!(s.dn, vec![8]);
        assert_eq!(s.to_field(), "2;8");
        assert!(codeword_sparsity(&[trace_from(&rows)], 8, 1.0).is_err());
    }

    #[test]
    fn ib_term_cases() {
        let det: Vec<_> = (0..300)
            .map(|i| ((i % 3) as u32, i % 3, 0, UeAction::Silence))
            .collect();
        let v = ib_term(&[trace_from(&det)], 8).unwrap();
        assert!((v - 3f64.log2()).abs() < 1e-12);
        // codeword cycles independently of the state
        let ind: Vec<_> = (0..3000)
            .map(|i| (((i / 8) % 3) as u32, i % 8, 0, UeAction::Silence))
            .collect();
        assert!(ib_term(&[trace_from(&ind)], 8).unwrap() < 0.05);
    }

    #[test]
    fn hinge_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.0..3.0);
            let y: f64 = rng.random_range(0.0..3.0);
            assert!((hinge_form(x, y) - x.max(y)).abs() < 1e-12);
        }
    }
}
