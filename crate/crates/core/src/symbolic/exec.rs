//! Network-free execution by staged forward chaining.
//!
//! Stage 1 fires uplink clauses from state facts. Stage 2 either fires a
//! grant-free action clause or a downlink clause for each agent. Stage 3
//! fires message-driven action clauses for the agents still undecided.

use std::collections::BTreeMap;

use rand::Rng;

use super::{Agent, Clause, Predicate, SymbolicProtocol, Term};
use crate::env::UeAction;
use crate::error::{contract, Error, Result};

pub enum ExecMode<'a, R: Rng + ?Sized> {
    /// Highest context wins; ties go to the lowest clause id.
    Deterministic,
    /// Sample among applicable clauses proportionally to context.
    Stochastic(&'a mut R),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub actions: Vec<UeAction>,
    /// Ids of the clauses that fired, in firing order.
    pub fired: Vec<usize>,
    /// Body-term comparisons spent on matching.
    pub comparisons: u64,
}

type Facts = BTreeMap<(Predicate, Agent), String>;

fn state_facts(buffers: &[u32]) -> Facts {
    buffers
        .iter()
        .enumerate()
        .map(|(j, b)| ((Predicate::State, Agent::Ue(j)), b.to_string()))
        .collect()
}

/// Whether every body term is a known fact; counts one comparison per term
/// inspected and stops at the first miss.
fn body_holds(clause: &Clause, facts: &Facts, comparisons: &mut u64) -> bool {
    for t in &clause.body {
        *comparisons += 1;
        if facts.get(&(t.predicate, t.agent)) != Some(&t.symbol) {
            return false;
        }
    }
    true
}

fn matching<'p>(
    protocol: &'p SymbolicProtocol,
    predicate: Predicate,
    agent: Agent,
    facts: &Facts,
    filter: impl Fn(&Clause) -> bool,
    comparisons: &mut u64,
) -> Vec<(usize, &'p Clause)> {
    protocol
        .clauses()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.head.predicate == predicate && c.head.agent == agent && filter(c))
        .filter(|(_, c)| body_holds(c, facts, comparisons))
        .collect()
}

fn choose<R: Rng + ?Sized>(candidates: &[(usize, &Clause)], mode: &mut ExecMode<'_, R>) -> usize {
    let deterministic = |cands: &[(usize, &Clause)]| {
        let mut best = 0;
        for (i, (_, c)) in cands.iter().enumerate() {
            if c.p > cands[best].1.p {
                best = i;
            }
        }
        best
    };
    match mode {
        ExecMode::Deterministic => deterministic(candidates),
        ExecMode::Stochastic(rng) => {
            let total: f64 = candidates.iter().map(|(_, c)| c.p).sum();
            if total <= 0.0 {
                return deterministic(candidates);
            }
            let mut u = rng.random::<f64>() * total;
            for (i, (_, c)) in candidates.iter().enumerate() {
                u -= c.p;
                if u < 0.0 {
                    return i;
                }
            }
            // rounding can leave a sliver past the last positive weight
            candidates.iter().rposition(|(_, c)| c.p > 0.0).unwrap_or(0)
        }
    }
}

fn parse_action(term: &Term) -> Result<UeAction> {
    UeAction::from_symbol(&term.symbol)
        .ok_or_else(|| Error::Validation(format!("`{}` is not an action symbol", term.symbol)))
}

/// One joint step for UEs holding `buffers`.
pub fn execute_step<R: Rng + ?Sized>(
    protocol: &SymbolicProtocol,
    buffers: &[u32],
    mode: &mut ExecMode<'_, R>,
) -> Result<StepResult> {
    let n = buffers.len();
    for b in buffers {
        if !protocol.vocabulary().contains(Predicate::State, &b.to_string()) {
            return Err(contract(format!("state `{b}` outside the protocol vocabulary")));
        }
    }
    let mut facts = state_facts(buffers);
    let mut comparisons = 0;
    let mut fired = Vec::new();

    for j in 0..n {
        let agent = Agent::Ue(j);
        let cands = matching(protocol, Predicate::Up, agent, &facts, |_| true, &mut comparisons);
        if !cands.is_empty() {
            let (id, c) = cands[choose(&cands, mode)];
            fired.push(id);
            facts.insert((Predicate::Up, agent), c.head.symbol.clone());
        }
    }

    let mut actions: Vec<Option<UeAction>> = vec![None; n];
    for (j, slot) in actions.iter_mut().enumerate() {
        let agent = Agent::Ue(j);
        let direct = matching(
            protocol,
            Predicate::Action,
            agent,
            &facts,
            Clause::is_grant_free,
            &mut comparisons,
        );
        if !direct.is_empty() {
            let (id, c) = direct[choose(&direct, mode)];
            fired.push(id);
            *slot = Some(parse_action(&c.head)?);
            continue;
        }
        let cands = matching(protocol, Predicate::Dn, agent, &facts, |_| true, &mut comparisons);
        if !cands.is_empty() {
            let (id, c) = cands[choose(&cands, mode)];
            fired.push(id);
            facts.insert((Predicate::Dn, agent), c.head.symbol.clone());
        }
    }

    for (j, slot) in actions.iter_mut().enumerate() {
        if slot.is_some() {
            continue;
        }
        let agent = Agent::Ue(j);
        let cands = matching(
            protocol,
            Predicate::Action,
            agent,
            &facts,
            |c| !c.is_grant_free(),
            &mut comparisons,
        );
        if cands.is_empty() {
            return Err(Error::Coverage {
                agent: agent.to_string(),
                state: format!("{buffers:?}"),
            });
        }
        let (id, c) = cands[choose(&cands, mode)];
        fired.push(id);
        *slot = Some(parse_action(&c.head)?);
    }

    Ok(StepResult {
        actions: actions.into_iter().map(|a| a.expect("every agent decided")).collect(),
        fired,
        comparisons,
    })
}

/// Exact joint-action distribution of stochastic execution in one state.
pub fn action_distribution(
    protocol: &SymbolicProtocol,
    buffers: &[u32],
) -> Result<BTreeMap<Vec<UeAction>, f64>> {
    let n = buffers.len();
    let facts = state_facts(buffers);
    let mut ignored = 0;
    let normalized = |cands: Vec<(usize, &Clause)>| -> Vec<(f64, Term)> {
        let total: f64 = cands.iter().map(|(_, c)| c.p).sum();
        cands
            .into_iter()
            .filter(|(_, c)| c.p > 0.0)
            .map(|(_, c)| (c.p / total, c.head.clone()))
            .collect()
    };

    // branches over uplink facts
    let mut branches: Vec<(f64, Facts)> = vec![(1.0, facts)];
    for j in 0..n {
        let agent = Agent::Ue(j);
        let mut next = Vec::new();
        for (w, f) in branches {
            let opts = normalized(matching(protocol, Predicate::Up, agent, &f, |_| true, &mut ignored));
            if opts.is_empty() {
                next.push((w, f));
                continue;
            }
            for (p, head) in opts {
                let mut g = f.clone();
                g.insert((Predicate::Up, agent), head.symbol);
                next.push((w * p, g));
            }
        }
        branches = next;
    }

    let mut out: BTreeMap<Vec<UeAction>, f64> = BTreeMap::new();
    for (w, f) in branches {
        // per-agent action marginals are independent given the uplink facts
        let mut per_agent: Vec<Vec<(f64, UeAction)>> = Vec::with_capacity(n);
        for j in 0..n {
            let agent = Agent::Ue(j);
            let direct = normalized(matching(
                protocol,
                Predicate::Action,
                agent,
                &f,
                Clause::is_grant_free,
                &mut ignored,
            ));
            let mut dist: BTreeMap<UeAction, f64> = BTreeMap::new();
            if !direct.is_empty() {
                for (p, head) in direct {
                    *dist.entry(parse_action(&head)?).or_default() += p;
                }
            } else {
                let dns = normalized(matching(protocol, Predicate::Dn, agent, &f, |_| true, &mut ignored));
                let mut dn_branches: Vec<(f64, Facts)> = dns
                    .into_iter()
                    .map(|(p, head)| {
                        let mut g = f.clone();
                        g.insert((Predicate::Dn, agent), head.symbol);
                        (p, g)
                    })
                    .collect();
                if dn_branches.is_empty() {
                    dn_branches.push((1.0, f.clone()));
                }
                for (p, g) in dn_branches {
                    let acts = normalized(matching(
                        protocol,
                        Predicate::Action,
                        agent,
                        &g,
                        |c| !c.is_grant_free(),
                        &mut ignored,
                    ));
                    if acts.is_empty() {
                        return Err(Error::Coverage {
                            agent: agent.to_string(),
                            state: format!("{buffers:?}"),
                        });
                    }
                    for (q, head) in acts {
                        *dist.entry(parse_action(&head)?).or_default() += p * q;
                    }
                }
            }
            per_agent.push(dist.into_iter().map(|(a, p)| (p, a)).collect());
        }
        let mut joint: Vec<(f64, Vec<UeAction>)> = vec![(w, Vec::new())];
        for opts in &per_agent {
            joint = joint
                .into_iter()
                .flat_map(|(p, acts)| {
                    opts.iter().map(move |(q, a)| {
                        let mut v = acts.clone();
                        v.push(*a);
                        (p * q, v)
                    })
                })
                .collect();
        }
        for (p, acts) in joint {
            *out.entry(acts).or_default() += p;
        }
    }
    Ok(out)
}
