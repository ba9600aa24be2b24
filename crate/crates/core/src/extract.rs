//! Turning a trained neural protocol into probabilistic clauses.
//!
//! The protocol is run as a simulator over every joint state, producing a
//! table of message chains with frequencies. Simplification drops message
//! chains that never change an agent's action and clusters codewords whose
//! downstream behavior is alike. Context values then become clause
//! probabilities.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{enumerate_states, EnvConfig, UeAction};
use crate::error::{contract, Result};
use crate::info::ProtocolGraph;
use crate::learn::{Choice, TrainedProtocol};
use crate::seeds::derive_seed;
use crate::symbolic::{vertex_label, Agent, Clause, Predicate, SymbolicProtocol, Term, Vocabulary};

pub const DEFAULT_ROLLOUTS: usize = 256;
pub const DEFAULT_TV_THRESHOLD: f64 = 0.05;
pub const DEFAULT_MIN_FREQUENCY: f64 = 0.01;

/// One observed message chain in a joint state. A `None` message means the
/// connection was skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub state: Vec<u32>,
    pub ups: Vec<Option<usize>>,
    pub dns: Vec<Option<usize>>,
    pub actions: Vec<UeAction>,
    /// Frequency within the joint state.
    pub freq: f64,
}

impl ChainRow {
    fn key(&self) -> (&[u32], &[Option<usize>], &[Option<usize>], Vec<usize>) {
        (
            &self.state,
            &self.ups,
            &self.dns,
            self.actions.iter().map(|a| a.index()).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationTable {
    pub num_ues: usize,
    pub codebook_size: usize,
    /// Buffer levels per UE.
    pub levels: usize,
    pub rows: Vec<ChainRow>,
}

impl OperationTable {
    /// Sorts rows and merges duplicates.
    pub fn normalize(&mut self) {
        self.rows.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut merged: Vec<ChainRow> = Vec::with_capacity(self.rows.len());
        for row in self.rows.drain(..) {
            match merged.last_mut() {
                Some(last) if last.key() == row.key() => last.freq += row.freq,
                _ => merged.push(row),
            }
        }
        self.rows = merged;
    }

    /// Total frequency per joint state.
    pub fn state_totals(&self) -> BTreeMap<Vec<u32>, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.state.clone()).or_insert(0.0) += r.freq;
        }
        out
    }

    /// Distribution of joint actions per joint state.
    pub fn action_marginals(&self) -> BTreeMap<Vec<u32>, BTreeMap<Vec<UeAction>, f64>> {
        let mut out: BTreeMap<Vec<u32>, BTreeMap<Vec<UeAction>, f64>> = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.state.clone())
                .or_default()
                .entry(r.actions.clone())
                .or_insert(0.0) += r.freq;
        }
        out
    }
}

/// Runs the stochastic forward pass `rollouts` times in every joint state.
/// Each state draws from its own stream derived from `(seed, state index)`.
pub fn extract_table(
    protocol: &TrainedProtocol,
    env: &EnvConfig,
    rollouts: usize,
    seed: u64,
) -> Result<OperationTable> {
    protocol.validate()?;
    if rollouts == 0 {
        return Err(contract("at least one rollout per state required"));
    }
    if env.num_ues != protocol.num_ues() || env.buffer_cap != protocol.env.buffer_cap {
        return Err(contract("environment does not match the protocol"));
    }
    let mut rows = Vec::new();
    for (i, s) in enumerate_states(env)?.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let mut counts: BTreeMap<(Vec<usize>, Vec<usize>, Vec<usize>), usize> = BTreeMap::new();
        for _ in 0..rollouts {
            let d = protocol.decide(&s.buffers, &mut Choice::Sample(&mut rng))?;
            let acts = d.actions.iter().map(|a| a.index()).collect();
            *counts.entry((d.ups, d.dns, acts)).or_default() += 1;
        }
        for ((ups, dns, acts), c) in counts {
            rows.push(ChainRow {
                state: s.buffers.clone(),
                ups: ups.into_iter().map(Some).collect(),
                dns: dns.into_iter().map(Some).collect(),
                actions: acts
                    .into_iter()
                    .map(|a| UeAction::from_index(a).expect("valid action index"))
                    .collect(),
                freq: c as f64 / rollouts as f64,
            });
        }
    }
    let mut table = OperationTable {
        num_ues: protocol.num_ues(),
        codebook_size: protocol.codebook_size(),
        levels: env.buffer_levels(),
        rows,
    };
    table.normalize();
    Ok(table)
}

/// Raw codeword to representative codeword, per channel and UE.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub up: Vec<Vec<usize>>,
    pub dn: Vec<Vec<usize>>,
}

impl ClusterMap {
    pub fn identity(num_ues: usize, codebook_size: usize) -> Self {
        let id: Vec<usize> = (0..codebook_size).collect();
        Self {
            up: vec![id.clone(); num_ues],
            dn: vec![id; num_ues],
        }
    }

    /// Distinct representatives of one channel.
    pub fn clusters(channel: &[usize]) -> BTreeSet<usize> {
        channel.iter().copied().collect()
    }

    pub fn merges(&self) -> usize {
        self.up
            .iter()
            .chain(&self.dn)
            .map(|ch| ch.len() - Self::clusters(ch).len())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifyOptions {
    /// Total-variation threshold for merging codewords.
    pub tv_threshold: f64,
    /// Codewords used less often than this are absorbed into their nearest
    /// cluster regardless of distance. Zero disables absorption.
    pub min_frequency: f64,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        Self {
            tv_threshold: DEFAULT_TV_THRESHOLD,
            min_frequency: DEFAULT_MIN_FREQUENCY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Channel {
    Up,
    Dn,
}

/// Grant-free skipping followed by per-channel codeword clustering.
pub fn simplify(table: &OperationTable, options: SimplifyOptions) -> Result<(OperationTable, ClusterMap)> {
    if !(0.0..1.0).contains(&options.tv_threshold) {
        return Err(contract("TV threshold must lie in [0, 1)"));
    }
    if !(0.0..1.0).contains(&options.min_frequency) {
        return Err(contract("minimum frequency must lie in [0, 1)"));
    }
    let n = table.num_ues;
    let k = table.codebook_size;

    let grant_free = grant_free_states(table);
    let mut skipped = table.clone();
    for row in &mut skipped.rows {
        for j in 0..n {
            if grant_free.contains(&(j, row.state[j])) {
                row.dns[j] = None;
            }
        }
        // the BS reads every uplink, so uplinks matter while any downlink is used
        if row.dns.iter().all(Option::is_none) {
            row.ups.iter_mut().for_each(|u| *u = None);
        }
    }
    skipped.normalize();

    let mut map = ClusterMap::identity(n, k);
    for j in 0..n {
        map.up[j] = cluster_channel(&skipped, Channel::Up, j, options);
        map.dn[j] = cluster_channel(&skipped, Channel::Dn, j, options);
    }
    let mut out = skipped;
    for row in &mut out.rows {
        for j in 0..n {
            row.ups[j] = row.ups[j].map(|u| map.up[j][u]);
            row.dns[j] = row.dns[j].map(|d| map.dn[j][d]);
        }
    }
    out.normalize();
    Ok((out, map))
}

/// `(ue, own level)` pairs whose action is identical in every row.
fn grant_free_states(table: &OperationTable) -> BTreeSet<(usize, u32)> {
    let mut seen: BTreeMap<(usize, u32), BTreeSet<UeAction>> = BTreeMap::new();
    for r in &table.rows {
        for j in 0..table.num_ues {
            seen.entry((j, r.state[j])).or_default().insert(r.actions[j]);
        }
    }
    seen.into_iter()
        .filter(|(_, acts)| acts.len() == 1)
        .map(|(key, _)| key)
        .collect()
}

/// Per joint state, the distribution of the actions a codeword feeds: the
/// UE's own action for a downlink, the joint action for an uplink.
type Downstream = BTreeMap<Vec<u32>, BTreeMap<Vec<UeAction>, f64>>;

fn downstream(table: &OperationTable, channel: Channel, ue: usize) -> (Vec<Downstream>, Vec<f64>) {
    let k = table.codebook_size;
    let mut dist: Vec<Downstream> = vec![BTreeMap::new(); k];
    let mut usage = vec![0.0; k];
    let total_mass: f64 = table.rows.iter().map(|r| r.freq).sum();
    for r in &table.rows {
        let code = match channel {
            Channel::Up => r.ups[ue],
            Channel::Dn => r.dns[ue],
        };
        let Some(c) = code else { continue };
        usage[c] += r.freq / total_mass;
        let outcome = match channel {
            Channel::Up => r.actions.clone(),
            Channel::Dn => vec![r.actions[ue]],
        };
        *dist[c]
            .entry(r.state.clone())
            .or_default()
            .entry(outcome)
            .or_insert(0.0) += r.freq;
    }
    for d in &mut dist {
        for per_state in d.values_mut() {
            let z: f64 = per_state.values().sum();
            per_state.values_mut().for_each(|v| *v /= z);
        }
    }
    (dist, usage)
}

/// Largest total variation over joint states where both codewords occur;
/// `None` when they never share a state.
fn tv_distance(a: &Downstream, b: &Downstream) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (state, pa) in a {
        let Some(pb) = b.get(state) else { continue };
        let keys: BTreeSet<&Vec<UeAction>> = pa.keys().chain(pb.keys()).collect();
        let tv = 0.5
            * keys
                .into_iter()
                .map(|key| (pa.get(key).unwrap_or(&0.0) - pb.get(key).unwrap_or(&0.0)).abs())
                .sum::<f64>();
        worst = Some(worst.map_or(tv, |w: f64| w.max(tv)));
    }
    worst
}

fn cluster_channel(table: &OperationTable, channel: Channel, ue: usize, options: SimplifyOptions) -> Vec<usize> {
    let k = table.codebook_size;
    let (dist, usage) = downstream(table, channel, ue);
    let used: Vec<usize> = (0..k).filter(|&c| usage[c] > 0.0).collect();
    let mut map: Vec<usize> = (0..k).collect();
    if used.is_empty() {
        map.iter_mut().for_each(|m| *m = 0);
        return map;
    }

    let pair_tv: BTreeMap<(usize, usize), Option<f64>> = used
        .iter()
        .flat_map(|&a| used.iter().map(move |&b| (a, b)))
        .filter(|(a, b)| a < b)
        .map(|(a, b)| ((a, b), tv_distance(&dist[a], &dist[b])))
        .collect();
    let tv = |a: usize, b: usize| -> f64 {
        if a == b {
            return 0.0;
        }
        pair_tv[&(a.min(b), a.max(b))].unwrap_or(f64::INFINITY)
    };
    // complete linkage: the farthest pair of members
    let linkage = |x: &[usize], y: &[usize]| -> f64 {
        x.iter()
            .flat_map(|&a| y.iter().map(move |&b| (a, b)))
            .map(|(a, b)| tv(a, b))
            .fold(0.0, f64::max)
    };

    let frequent: Vec<usize> = used
        .iter()
        .copied()
        .filter(|&c| usage[c] >= options.min_frequency)
        .collect();
    let mut clusters: Vec<Vec<usize>> = frequent.iter().map(|&c| vec![c]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = linkage(&clusters[i], &clusters[j]);
                if d <= options.tv_threshold && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let moved = clusters.remove(j);
        clusters[i].extend(moved);
        clusters[i].sort_unstable();
    }

    // rare codewords join the nearest cluster they share a state with; with
    // no frequent codeword at all the most used codeword seeds the clusters
    let mut rare: Vec<usize> = used
        .iter()
        .copied()
        .filter(|&c| usage[c] < options.min_frequency)
        .collect();
    rare.sort_by(|a, b| usage[*b].total_cmp(&usage[*a]).then(a.cmp(b)));
    for c in rare {
        let nearest = clusters
            .iter()
            .enumerate()
            .filter_map(|(i, cl)| {
                let d = cl.iter().map(|&m| tv(c, m)).fold(0.0, f64::max);
                d.is_finite().then_some((d, i))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match nearest {
            Some((_, i)) => {
                clusters[i].push(c);
                clusters[i].sort_unstable();
            }
            None => clusters.push(vec![c]),
        }
    }

    for cl in &clusters {
        let rep = cl[0];
        for &c in cl {
            map[c] = rep;
        }
    }
    // never-used codewords map onto the most used cluster
    let dominant = clusters
        .iter()
        .max_by(|a, b| {
            let ua: f64 = a.iter().map(|&c| usage[c]).sum();
            let ub: f64 = b.iter().map(|&c| usage[c]).sum();
            ua.total_cmp(&ub).then(b[0].cmp(&a[0]))
        })
        .map(|cl| cl[0])
        .expect("at least one cluster");
    for c in 0..k {
        if usage[c] == 0.0 {
            map[c] = dominant;
        }
    }
    map
}

/// A connection `body -> head` with its context value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub head: Term,
    pub body: Vec<Term>,
    pub p: f64,
}

pub fn code_symbol(code: usize) -> String {
    format!("m{code}")
}

fn ue_term(pred: Predicate, ue: usize, symbol: String) -> Term {
    Term::new(pred, Agent::Ue(ue), symbol)
}

/// Context of each connection: the frequency of its head among rows that
/// share its body. Joint states weigh equally.
pub fn assign_context(table: &OperationTable) -> Result<Vec<Connection>> {
    if table.rows.is_empty() {
        return Err(contract("empty operation table"));
    }
    let n = table.num_ues;
    let mut mass: BTreeMap<(Vec<Term>, Term), f64> = BTreeMap::new();
    for r in &table.rows {
        let uplink_body: Vec<Term> = (0..n)
            .filter_map(|j| r.ups[j].map(|u| ue_term(Predicate::Up, j, code_symbol(u))))
            .collect();
        for j in 0..n {
            let state = ue_term(Predicate::State, j, r.state[j].to_string());
            let action = ue_term(Predicate::Action, j, r.actions[j].symbol().to_string());
            if let Some(u) = r.ups[j] {
                let head = ue_term(Predicate::Up, j, code_symbol(u));
                *mass.entry((vec![state.clone()], head)).or_default() += r.freq;
            }
            match r.dns[j] {
                Some(d) => {
                    let dn = ue_term(Predicate::Dn, j, code_symbol(d));
                    *mass.entry((uplink_body.clone(), dn.clone())).or_default() += r.freq;
                    *mass.entry((vec![state, dn], action)).or_default() += r.freq;
                }
                None => {
                    *mass.entry((vec![state], action)).or_default() += r.freq;
                }
            }
        }
    }
    // normalize per (body, head predicate and agent)
    let mut totals: BTreeMap<(Vec<Term>, Predicate, Agent), f64> = BTreeMap::new();
    for ((body, head), m) in &mass {
        *totals
            .entry((body.clone(), head.predicate, head.agent))
            .or_default() += m;
    }
    Ok(mass
        .into_iter()
        .map(|((body, head), m)| {
            let z = totals[&(body.clone(), head.predicate, head.agent)];
            Connection { p: m / z, head, body }
        })
        .collect())
}

/// Clauses plus the protocol graph over the vocabulary. The vocabulary holds
/// every buffer level, every action and the image of the cluster map.
pub fn build_protocol(
    connections: &[Connection],
    levels: usize,
    map: &ClusterMap,
    provenance: Option<String>,
) -> Result<(SymbolicProtocol, ProtocolGraph)> {
    if connections.is_empty() {
        return Err(contract("no connections to build a protocol from"));
    }
    let mut vocab = Vocabulary::default();
    for s in 0..levels {
        vocab.insert(Predicate::State, s.to_string());
    }
    for a in UeAction::ALL {
        vocab.insert(Predicate::Action, a.symbol());
    }
    for ch in &map.up {
        for c in ClusterMap::clusters(ch) {
            vocab.insert(Predicate::Up, code_symbol(c));
        }
    }
    for ch in &map.dn {
        for c in ClusterMap::clusters(ch) {
            vocab.insert(Predicate::Dn, code_symbol(c));
        }
    }
    let clauses: Vec<Clause> = connections
        .iter()
        .map(|c| Clause::new(c.p, c.head.clone(), c.body.clone()))
        .collect();
    let protocol = SymbolicProtocol::new(clauses, vocab, provenance)?;
    let graph = protocol_graph(&protocol)?;
    Ok((protocol, graph))
}

/// Vertices are vocabulary symbols; each clause adds its context to the edge
/// between every body symbol and its head symbol.
pub fn protocol_graph(protocol: &SymbolicProtocol) -> Result<ProtocolGraph> {
    let labels = protocol.vocabulary().labels();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut g = ProtocolGraph::empty(labels.clone());
    for c in protocol.clauses() {
        let h = index[vertex_label(c.head.predicate, &c.head.symbol).as_str()];
        for t in &c.body {
            let b = index[vertex_label(t.predicate, &t.symbol).as_str()];
            g.add_edge(b, h, c.p);
        }
    }
    Ok(g)
}

/// The complete pipeline with default simplification.
pub fn extract_protocol(
    protocol: &TrainedProtocol,
    rollouts: usize,
    options: SimplifyOptions,
    seed: u64,
) -> Result<(SymbolicProtocol, ProtocolGraph)> {
    let table = extract_table(protocol, &protocol.env, rollouts, seed)?;
    let (simple, map) = simplify(&table, options)?;
    let connections = assign_context(&simple)?;
    build_protocol(&connections, table.levels, &map, Some(protocol.identifier()))
}
