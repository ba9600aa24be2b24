//! Probabilistic-clause protocols: data model, text format, execution and
//! manipulation.
//!
//! A clause `p::head :- body.` states that `head` follows from `body` with
//! context value `p`. Heads and bodies are terms `pred(agent,symbol)` over
//! four predicates: `state`, `up`, `dn` and `action`.

mod exec;
mod manip;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exec::{action_distribution, execute_step, ExecMode, StepResult};
pub use manip::{
    cost_report, edit, find_conflicts, remove_conflicts, select_best, ConflictRemoval, CostReport,
    Edit,
};
pub use text::{canonicalize, format_prob, parse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    State,
    Up,
    Dn,
    Action,
}

impl Predicate {
    pub const ALL: [Predicate; 4] = [
        Predicate::State,
        Predicate::Up,
        Predicate::Dn,
        Predicate::Action,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::State => "state",
            Predicate::Up => "up",
            Predicate::Dn => "dn",
            Predicate::Action => "action",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// `ueN` agents are numbered from 1 in text; `Ue(0)` prints as `ue1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Agent {
    Ue(usize),
    Bs,
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Ue(i) => write!(f, "ue{}", i + 1),
            Agent::Bs => f.write_str("bs"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub predicate: Predicate,
    pub agent: Agent,
    pub symbol: String,
}

impl Term {
    pub fn new(predicate: Predicate, agent: Agent, symbol: impl Into<String>) -> Self {
        Self {
            predicate,
            agent,
            symbol: symbol.into(),
        }
    }

    pub fn ue(predicate: Predicate, ue: usize, symbol: impl Into<String>) -> Self {
        Self::new(predicate, Agent::Ue(ue), symbol)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.predicate.name(), self.agent, self.symbol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub p: f64,
    pub head: Term,
    pub body: Vec<Term>,
}

impl Clause {
    pub fn new(p: f64, head: Term, body: Vec<Term>) -> Self {
        Self { p, head, body }
    }

    /// Clause whose body holds no message terms.
    pub fn is_grant_free(&self) -> bool {
        self.head.predicate == Predicate::Action
            && self.body.iter().all(|t| t.predicate == Predicate::State)
    }

    fn sort_key(&self) -> (Agent, Predicate, &str, Vec<(Predicate, Agent, &str)>) {
        (
            self.head.agent,
            self.head.predicate,
            self.head.symbol.as_str(),
            self.body
                .iter()
                .map(|t| (t.predicate, t.agent, t.symbol.as_str()))
                .collect(),
        )
    }

    fn same_rule(&self, other: &Clause) -> bool {
        self.head == other.head && self.body == other.body
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", format_prob(self.p), self.head)?;
        for (i, t) in self.body.iter().enumerate() {
            f.write_str(if i == 0 { " :- " } else { ", " })?;
            write!(f, "{t}")?;
        }
        f.write_str(".")
    }
}

/// Per-predicate symbol sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub symbols: BTreeMap<Predicate, BTreeSet<String>>,
}

impl Vocabulary {
    pub fn get(&self, predicate: Predicate) -> Option<&BTreeSet<String>> {
        self.symbols.get(&predicate)
    }

    pub fn insert(&mut self, predicate: Predicate, symbol: impl Into<String>) {
        self.symbols.entry(predicate).or_default().insert(symbol.into());
    }

    pub fn contains(&self, predicate: Predicate, symbol: &str) -> bool {
        self.symbols
            .get(&predicate)
            .is_some_and(|s| s.contains(symbol))
    }

    pub fn len(&self) -> usize {
        self.symbols.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vertex labels `pred:symbol` in predicate order.
    pub fn labels(&self) -> Vec<String> {
        Predicate::ALL
            .iter()
            .flat_map(|p| {
                self.symbols
                    .get(p)
                    .into_iter()
                    .flatten()
                    .map(move |s| vertex_label(*p, s))
            })
            .collect()
    }
}

pub fn vertex_label(predicate: Predicate, symbol: &str) -> String {
    format!("{}:{}", predicate.name(), symbol)
}

/// Clauses kept in canonical order; a clause id is its position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolicProtocol {
    clauses: Vec<Clause>,
    vocabulary: Vocabulary,
    provenance: Option<String>,
}

impl SymbolicProtocol {
    /// Validates and canonicalizes. Context values are rounded to the six
    /// digits the text format carries.
    pub fn new(
        mut clauses: Vec<Clause>,
        vocabulary: Vocabulary,
        provenance: Option<String>,
    ) -> Result<Self> {
        for c in &mut clauses {
            if !(0.0..=1.0).contains(&c.p) {
                return Err(Error::Validation(format!(
                    "context {} of `{}` outside [0, 1]",
                    c.p, c.head
                )));
            }
            c.p = round6(c.p);
            for t in std::iter::once(&c.head).chain(&c.body) {
                if !vocabulary.contains(t.predicate, &t.symbol) {
                    return Err(Error::OutOfVocabulary {
                        predicate: t.predicate.name().to_string(),
                        token: t.symbol.clone(),
                    });
                }
                if !valid_symbol(&t.symbol) {
                    return Err(Error::Validation(format!("malformed symbol `{}`", t.symbol)));
                }
            }
        }
        clauses.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        if let Some(w) = clauses.windows(2).find(|w| w[0].same_rule(&w[1])) {
            return Err(Error::Validation(format!(
                "duplicate rule for head `{}`",
                w[0].head
            )));
        }
        Ok(Self {
            clauses,
            vocabulary,
            provenance,
        })
    }

    /// Like [`SymbolicProtocol::new`] with the vocabulary read off the clauses.
    pub fn from_clauses(clauses: Vec<Clause>, provenance: Option<String>) -> Result<Self> {
        let mut vocab = Vocabulary::default();
        for c in &clauses {
            for t in std::iter::once(&c.head).chain(&c.body) {
                vocab.insert(t.predicate, t.symbol.clone());
            }
        }
        Self::new(clauses, vocab, provenance)
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn clause(&self, id: usize) -> Option<&Clause> {
        self.clauses.get(id)
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Id of the clause with the same head and body.
    pub fn position(&self, clause: &Clause) -> Option<usize> {
        self.clauses.iter().position(|c| c.same_rule(clause))
    }

    pub fn contexts(&self) -> Vec<f64> {
        self.clauses.iter().map(|c| c.p).collect()
    }

    /// Number of UE agents mentioned anywhere.
    pub fn num_agents(&self) -> usize {
        self.clauses
            .iter()
            .flat_map(|c| std::iter::once(&c.head).chain(&c.body))
            .filter_map(|t| match t.agent {
                Agent::Ue(i) => Some(i + 1),
                Agent::Bs => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        text::serialize(self)
    }

    /// Bytes of the clause lines alone (one LF each).
    pub fn clause_bytes(&self) -> usize {
        self.clauses.iter().map(|c| c.to_string().len() + 1).sum()
    }

    pub(crate) fn with_clauses(&self, clauses: Vec<Clause>) -> Result<Self> {
        Self::new(clauses, self.vocabulary.clone(), self.provenance.clone())
    }
}

pub(crate) fn round6(p: f64) -> f64 {
    (p * 1e6).round() / 1e6
}

pub(crate) fn valid_symbol(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}
