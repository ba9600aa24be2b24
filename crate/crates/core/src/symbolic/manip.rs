//! Conflict detection, clause edits, entropy-based selection and cost
//! accounting.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exec::{execute_step, ExecMode};
use super::{Agent, Clause, Predicate, SymbolicProtocol, Term};
use crate::env::{enumerate_states, UeAction};
use crate::error::{contract, Error, Result};
use crate::info::semantic_entropy;
use crate::learn::TrainedProtocol;

type Facts = BTreeMap<(Predicate, Agent), String>;

fn holds(clause: &Clause, facts: &Facts) -> bool {
    clause
        .body
        .iter()
        .all(|t| facts.get(&(t.predicate, t.agent)) == Some(&t.symbol))
}

fn applicable<'p>(
    protocol: &'p SymbolicProtocol,
    predicate: Predicate,
    agent: Agent,
    facts: &Facts,
) -> impl Iterator<Item = (usize, &'p Clause)> + 'p {
    let facts = facts.clone();
    protocol
        .clauses()
        .iter()
        .enumerate()
        .filter(move |(_, c)| {
            c.head.predicate == predicate && c.head.agent == agent && c.p > 0.0 && holds(c, &facts)
        })
}

/// Access clauses of agent `j` that can fire under the given uplink facts.
fn reachable_access(protocol: &SymbolicProtocol, j: usize, facts: &Facts) -> BTreeSet<usize> {
    let agent = Agent::Ue(j);
    let is_access = |c: &Clause| c.head.symbol == UeAction::Access.symbol();
    let direct: Vec<(usize, &Clause)> = applicable(protocol, Predicate::Action, agent, facts)
        .filter(|(_, c)| c.is_grant_free())
        .collect();
    if !direct.is_empty() {
        return direct.into_iter().filter(|(_, c)| is_access(c)).map(|(i, _)| i).collect();
    }
    let mut out = BTreeSet::new();
    for (_, dn) in applicable(protocol, Predicate::Dn, agent, facts) {
        let mut f = facts.clone();
        f.insert((Predicate::Dn, agent), dn.head.symbol.clone());
        out.extend(
            applicable(protocol, Predicate::Action, agent, &f)
                .filter(|(_, c)| !c.is_grant_free() && is_access(c))
                .map(|(i, _)| i),
        );
    }
    out
}

/// Pairs `(c, c')`, `c < c'`, of access clauses of distinct agents that can
/// fire together in some joint state.
pub fn find_conflicts(protocol: &SymbolicProtocol) -> BTreeSet<(usize, usize)> {
    let n = protocol.num_agents();
    let states: Vec<String> = protocol
        .vocabulary()
        .get(Predicate::State)
        .map(|s| s.iter().cloned().collect())
        .unwrap_or_default();
    let mut conflicts = BTreeSet::new();
    if n < 2 || states.is_empty() {
        return conflicts;
    }

    let mut joint = vec![0usize; n];
    loop {
        let facts: Facts = joint
            .iter()
            .enumerate()
            .map(|(j, &s)| ((Predicate::State, Agent::Ue(j)), states[s].clone()))
            .collect();
        // every combination of applicable uplinks (or none, if no clause applies)
        let mut branches = vec![facts];
        for j in 0..n {
            let agent = Agent::Ue(j);
            let mut next = Vec::new();
            for f in branches {
                let ups: BTreeSet<String> = applicable(protocol, Predicate::Up, agent, &f)
                    .map(|(_, c)| c.head.symbol.clone())
                    .collect();
                if ups.is_empty() {
                    next.push(f);
                    continue;
                }
                for u in ups {
                    let mut g = f.clone();
                    g.insert((Predicate::Up, agent), u);
                    next.push(g);
                }
            }
            branches = next;
        }
        for f in &branches {
            let sets: Vec<BTreeSet<usize>> = (0..n).map(|j| reachable_access(protocol, j, f)).collect();
            for a in 0..n {
                for b in a + 1..n {
                    for &x in &sets[a] {
                        for &y in &sets[b] {
                            conflicts.insert((x.min(y), x.max(y)));
                        }
                    }
                }
            }
        }

        let mut k = 0;
        loop {
            if k == n {
                return conflicts;
            }
            joint[k] += 1;
            if joint[k] < states.len() {
                break;
            }
            joint[k] = 0;
            k += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Edit {
    Add(Clause),
    Remove(usize),
}

/// Applies one edit and returns the new protocol.
pub fn edit(protocol: &SymbolicProtocol, command: &Edit) -> Result<SymbolicProtocol> {
    match command {
        Edit::Remove(id) => {
            if *id >= protocol.len() {
                return Err(Error::NotFound(*id));
            }
            let mut clauses = protocol.clauses().to_vec();
            clauses.remove(*id);
            protocol.with_clauses(clauses)
        }
        Edit::Add(clause) => {
            if protocol.position(clause).is_some() {
                return Err(Error::Validation(format!(
                    "a clause with head `{}` and the same body exists",
                    clause.head
                )));
            }
            let mut clauses = protocol.clauses().to_vec();
            clauses.push(clause.clone());
            protocol.with_clauses(clauses).map_err(|e| match e {
                Error::OutOfVocabulary { predicate, token } => Error::Validation(format!(
                    "symbol `{token}` not in the `{predicate}` vocabulary"
                )),
                other => other,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConflictRemoval {
    pub protocol: SymbolicProtocol,
    /// Removed clauses, in removal order.
    pub removed: Vec<Clause>,
    /// Silence clauses added where a removal left a body without any action.
    pub added: Vec<Clause>,
}

/// Removes access clauses until no conflict remains. Each round drops the
/// clause involved in the most conflicts, preferring the lower context and
/// then the lower id. A body left without any action clause receives a
/// silence clause with context 1.
pub fn remove_conflicts(protocol: &SymbolicProtocol) -> Result<ConflictRemoval> {
    let mut current = protocol.clone();
    let mut removed = Vec::new();
    let mut added = Vec::new();
    loop {
        let conflicts = find_conflicts(&current);
        if conflicts.is_empty() {
            break;
        }
        let mut involvement: BTreeMap<usize, usize> = BTreeMap::new();
        for (a, b) in conflicts {
            *involvement.entry(a).or_default() += 1;
            *involvement.entry(b).or_default() += 1;
        }
        let (&victim, _) = involvement
            .iter()
            .max_by(|(ia, na), (ib, nb)| {
                let pa = current.clauses()[**ia].p;
                let pb = current.clauses()[**ib].p;
                na.cmp(nb)
                    .then(pb.total_cmp(&pa))
                    .then(ib.cmp(ia))
            })
            .expect("nonempty conflict set");
        let clause = current.clauses()[victim].clone();
        current = edit(&current, &Edit::Remove(victim))?;
        let orphaned = !current.clauses().iter().any(|c| {
            c.head.predicate == Predicate::Action && c.head.agent == clause.head.agent && c.body == clause.body
        });
        if orphaned {
            let silence = Clause::new(
                1.0,
                Term::new(Predicate::Action, clause.head.agent, UeAction::Silence.symbol()),
                clause.body.clone(),
            );
            current = edit(&current, &Edit::Add(silence.clone()))?;
            added.push(silence);
        }
        removed.push(clause);
    }
    Ok(ConflictRemoval {
        protocol: current,
        removed,
        added,
    })
}

/// Index of the candidate with the lowest semantic entropy; ties go to the
/// lowest index.
pub fn select_best(candidates: &[SymbolicProtocol]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(contract("no candidate protocols"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let h = semantic_entropy(&c.contexts())?;
        if h < best.1 {
            best = (i, h);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// FLOPs of one joint step through all execution networks.
    pub neural_flops_per_step: u64,
    /// Worst case over joint states of deterministic-mode comparisons.
    pub symbolic_comparisons_per_step: u64,
    pub compute_ratio: f64,
    pub neural_bytes: usize,
    pub symbolic_bytes: usize,
    /// `symbolic_bytes / neural_bytes`
    pub memory_ratio: f64,
}

/// Per-step compute and storage of a neural protocol against its symbolic
/// counterpart. Neural storage counts the execution networks (the critic is
/// training-only) at 8 bytes per parameter; symbolic storage counts the
/// clause lines.
pub fn cost_report(neural: &TrainedProtocol, symbolic: &SymbolicProtocol) -> Result<CostReport> {
    let neural_flops: u64 = neural.execution_nets().map(|m| m.forward_flops()).sum();
    let params: usize = neural.execution_nets().map(|m| m.param_count()).sum();
    let mut worst = 0;
    for s in enumerate_states(&neural.env)? {
        let r = execute_step::<ChaCha8Rng>(symbolic, &s.buffers, &mut ExecMode::Deterministic)?;
        worst = worst.max(r.comparisons);
    }
    let neural_bytes = params * 8;
    let symbolic_bytes = symbolic.clause_bytes();
    Ok(CostReport {
        neural_flops_per_step: neural_flops,
        symbolic_comparisons_per_step: worst,
        compute_ratio: neural_flops as f64 / worst.max(1) as f64,
        neural_bytes,
        symbolic_bytes,
        memory_ratio: symbolic_bytes as f64 / neural_bytes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse;

    const COLLIDING: &str = "\
%vocab action access discard silence
1::up(ue1,m0) :- state(ue1,1).
1::up(ue2,m0) :- state(ue2,1).
1::dn(ue1,m0) :- up(ue1,m0), up(ue2,m0).
1::dn(ue2,m0) :- up(ue1,m0), up(ue2,m0).
1::action(ue1,access) :- state(ue1,1), dn(ue1,m0).
0.6::action(ue2,access) :- state(ue2,1), dn(ue2,m0).
0.4::action(ue2,silence) :- state(ue2,1), dn(ue2,m0).
";

    #[test]
    fn co_firable_access_reported() {
        let p = parse(COLLIDING).unwrap();
        let c = find_conflicts(&p);
        assert_eq!(c.len(), 1);
        let (a, b) = *c.iter().next().unwrap();
        assert_eq!(p.clause(a).unwrap().head.agent, Agent::Ue(0));
        assert_eq!(p.clause(b).unwrap().head.agent, Agent::Ue(1));
    }

    #[test]
    fn disjoint_states_do_not_conflict() {
        let p = parse(
            "1::action(ue1,access) :- state(ue1,1).\n1::action(ue1,silence) :- state(ue1,0).\n\
             1::action(ue2,silence) :- state(ue2,1).\n1::action(ue2,silence) :- state(ue2,0).\n",
        )
        .unwrap();
        assert!(find_conflicts(&p).is_empty());
    }

    #[test]
    fn grant_free_access_pairs_conflict() {
        let p = parse("1::action(ue1,access) :- state(ue1,1).\n1::action(ue2,access) :- state(ue2,1).\n")
            .unwrap();
        assert_eq!(find_conflicts(&p).len(), 1);
    }

    #[test]
    fn removal_clears_conflicts_and_keeps_coverage() {
        let p = parse(COLLIDING).unwrap();
        let out = remove_conflicts(&p).unwrap();
        assert!(find_conflicts(&out.protocol).is_empty());
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.removed[0].p, 0.6);
        assert!(out.added.is_empty());
        let r = execute_step::<ChaCha8Rng>(&out.protocol, &[1, 1], &mut ExecMode::Deterministic).unwrap();
        assert_eq!(r.actions, vec![UeAction::Access, UeAction::Silence]);
    }

    #[test]
    fn add_then_remove_restores() {
        let p = parse(COLLIDING).unwrap();
        let c = Clause::new(
            0.5,
            Term::ue(Predicate::Action, 0, "discard"),
            vec![Term::ue(Predicate::State, 0, "1"), Term::ue(Predicate::Dn, 0, "m0")],
        );
        let q = edit(&p, &Edit::Add(c.clone())).unwrap();
        assert_eq!(q.len(), p.len() + 1);
        let id = q.position(&c).unwrap();
        assert_eq!(edit(&q, &Edit::Remove(id)).unwrap(), p);
    }

    #[test]
    fn add_outside_vocabulary_is_validation_error() {
        let p = parse(COLLIDING).unwrap();
        let c = Clause::new(1.0, Term::ue(Predicate::Up, 0, "m7"), vec![Term::ue(Predicate::State, 0, "1")]);
        assert!(matches!(edit(&p, &Edit::Add(c)), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_id_not_found() {
        let p = parse(COLLIDING).unwrap();
        assert!(matches!(edit(&p, &Edit::Remove(99)), Err(Error::NotFound(99))));
    }

    #[test]
    fn selection_is_argmin_entropy() {
        let with = |p: f64| {
            let q = crate::symbolic::format_prob(p);
            parse(&format!("{q}::action(ue1,access) :- state(ue1,1).\n")).unwrap()
        };
        // binary entropies 0.8, 0.3 and 0.5 bits
        let targets = [0.8, 0.3, 0.5];
        let ps: Vec<f64> = targets
            .iter()
            .map(|&h| {
                let (mut lo, mut hi) = (0.5, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if crate::info::binary_entropy(mid) > h {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            })
            .collect();
        let cands: Vec<SymbolicProtocol> = ps.iter().map(|&p| with(p)).collect();
        assert_eq!(select_best(&cands).unwrap(), 1);
        assert_eq!(select_best(&cands[..1]).unwrap(), 0);
        assert!(select_best(&[]).is_err());
    }
}
