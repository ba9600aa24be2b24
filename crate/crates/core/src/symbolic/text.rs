//! `.sproto` text format.
//!
//! ```text
//! % provenance neural-pos-seed0
//! %vocab state 0 1 2
//! 0.8::action(ue1,access) :- state(ue1,2), dn(ue1,m3).
//! ```
//!
//! Lines starting with `%` are comments. Two comment forms carry data: the
//! `%vocab <pred> <symbols...>` pragma declares a predicate's vocabulary and
//! `% provenance <id>` names the source protocol. Predicates without a
//! pragma take their vocabulary from the clauses.

use std::collections::BTreeSet;

use super::{valid_symbol, Agent, Clause, Predicate, SymbolicProtocol, Term, Vocabulary};
use crate::error::{Error, Result};

const VOCAB_PRAGMA: &str = "%vocab";
const PROVENANCE: &str = "% provenance ";

/// Up to six fractional digits, trailing zeros trimmed.
pub fn format_prob(p: f64) -> String {
    let s = format!("{p:.6}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

pub(super) fn serialize(protocol: &SymbolicProtocol) -> String {
    let mut out = String::new();
    if let Some(id) = protocol.provenance() {
        out.push_str(PROVENANCE);
        out.push_str(id);
        out.push('\n');
    }
    for pred in Predicate::ALL {
        if let Some(symbols) = protocol.vocabulary().get(pred) {
            if symbols.is_empty() {
                continue;
            }
            out.push_str(VOCAB_PRAGMA);
            out.push(' ');
            out.push_str(pred.name());
            for s in symbols {
                out.push(' ');
                out.push_str(s);
            }
            out.push('\n');
        }
    }
    for c in protocol.clauses() {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}

pub fn canonicalize(text: &str) -> Result<String> {
    Ok(parse(text)?.to_text())
}

pub fn parse(text: &str) -> Result<SymbolicProtocol> {
    let mut clauses = Vec::new();
    let mut declared = Vocabulary::default();
    let mut provenance = None;
    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(PROVENANCE) {
            provenance = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix(VOCAB_PRAGMA) {
            parse_pragma(rest, line_no, &mut declared)?;
        } else if !line.starts_with('%') {
            clauses.push(Cursor::new(line, line_no).clause()?);
        }
    }

    let mut vocab = declared.clone();
    for c in &clauses {
        for t in std::iter::once(&c.head).chain(&c.body) {
            match declared.get(t.predicate) {
                Some(set) if !set.contains(&t.symbol) => {
                    return Err(Error::OutOfVocabulary {
                        predicate: t.predicate.name().to_string(),
                        token: t.symbol.clone(),
                    })
                }
                Some(_) => {}
                None => vocab.insert(t.predicate, t.symbol.clone()),
            }
        }
    }
    SymbolicProtocol::new(clauses, vocab, provenance)
}

fn parse_pragma(rest: &str, line: usize, vocab: &mut Vocabulary) -> Result<()> {
    let syntax = |column: usize, message: &str| Error::Syntax {
        line,
        column,
        message: message.to_string(),
    };
    if !rest.starts_with(' ') {
        // some other comment that happens to start with the pragma text
        return Ok(());
    }
    let mut words = rest.split(' ').skip(1);
    let col0 = VOCAB_PRAGMA.len() + 2;
    let pred_word = words.next().unwrap_or("");
    let pred = Predicate::from_name(pred_word)
        .ok_or_else(|| syntax(col0, "unknown predicate in vocabulary pragma"))?;
    let mut col = col0 + pred_word.len() + 1;
    let set: &mut BTreeSet<String> = vocab.symbols.entry(pred).or_default();
    for w in words {
        if !valid_symbol(w) {
            return Err(syntax(col, "malformed symbol in vocabulary pragma"));
        }
        set.insert(w.to_string());
        col += w.len() + 1;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a str, line_no: usize) -> Self {
        Self {
            bytes: line.as_bytes(),
            pos: 0,
            line: line_no,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.bytes[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{lit}`")))
        }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii slice")
    }

    fn clause(&mut self) -> Result<Clause> {
        let p = self.prob()?;
        self.expect("::")?;
        let head = self.term()?;
        let mut body = Vec::new();
        if self.eat(" :- ") {
            body.push(self.term()?);
            while self.eat(", ") {
                body.push(self.term()?);
            }
        }
        self.expect(".")?;
        if self.pos != self.bytes.len() {
            return Err(self.error("unexpected characters after clause end"));
        }
        Ok(Clause { p, head, body })
    }

    fn prob(&mut self) -> Result<f64> {
        let start = self.pos;
        let int = self.take_while(|b| b.is_ascii_digit());
        if int.is_empty() {
            return Err(self.error("expected probability"));
        }
        if self.eat(".") {
            let frac_start = self.pos;
            let frac = self.take_while(|b| b.is_ascii_digit());
            if frac.is_empty() {
                return Err(self.error("expected fractional digits"));
            }
            if frac.len() > 6 {
                self.pos = frac_start + 6;
                return Err(self.error("more than six fractional digits"));
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii slice");
        let p: f64 = text.parse().map_err(|_| self.error("malformed probability"))?;
        if p > 1.0 {
            self.pos = start;
            return Err(self.error("probability exceeds 1"));
        }
        Ok(p)
    }

    fn term(&mut self) -> Result<Term> {
        let pred_start = self.pos;
        let name = self.take_while(|b| b.is_ascii_lowercase());
        let predicate = Predicate::from_name(name).ok_or_else(|| {
            self.pos = pred_start;
            self.error(format!("unknown predicate `{name}`"))
        })?;
        self.expect("(")?;
        let agent = self.agent()?;
        self.expect(",")?;
        let symbol = self.take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
        if symbol.is_empty() {
            return Err(self.error("expected symbol"));
        }
        self.expect(")")?;
        Ok(Term {
            predicate,
            agent,
            symbol: symbol.to_string(),
        })
    }

    fn agent(&mut self) -> Result<Agent> {
        if self.eat("bs") {
            return Ok(Agent::Bs);
        }
        let start = self.pos;
        self.expect("ue")?;
        let digits = self.take_while(|b| b.is_ascii_digit());
        match digits.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Agent::Ue(n - 1)),
            _ => {
                self.pos = start;
                Err(self.error("expected agent `ue<n>` with n >= 1 or `bs`"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prob_formatting() {
        assert_eq!(format_prob(1.0), "1");
        assert_eq!(format_prob(0.0), "0");
        assert_eq!(format_prob(0.5), "0.5");
        assert_eq!(format_prob(0.1234567), "0.123457");
    }

    #[test]
    fn single_clause() {
        let p = parse("0.8::action(ue1,access) :- state(ue1,2), dn(ue1,m3).").unwrap();
        assert_eq!(p.len(), 1);
        let c = &p.clauses()[0];
        assert_eq!(c.p, 0.8);
        assert_eq!(c.body.len(), 2);
        assert_eq!(c.head.agent, Agent::Ue(0));
    }

    #[test]
    fn missing_period_points_at_clause_end() {
        let text = "1::up(ue1,m0) :- state(ue1,0)";
        match parse(text).unwrap_err() {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 1);
                assert_eq!(column, text.len() + 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn syntax_error_line_numbers() {
        let text = "% header\n1::up(ue1,m0) :- state(ue1,0).\n0.5::up(ue1,m1) :- stat(ue1,0).\n";
        match parse(text).unwrap_err() {
            Error::Syntax { line, column, .. } => assert_eq!((line, column), (3, 20)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn pragma_enforces_vocabulary() {
        let text = "%vocab up m0 m1\n1::up(ue1,m9) :- state(ue1,0).\n";
        match parse(text).unwrap_err() {
            Error::OutOfVocabulary { predicate, token } => {
                assert_eq!(predicate, "up");
                assert_eq!(token, "m9");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(parse("1.5::up(ue1,m0).").is_err());
        assert!(parse("0.1234567::up(ue1,m0).").is_err());
        assert!(parse(".5::up(ue1,m0).").is_err());
    }

    #[test]
    fn rejects_loose_spacing() {
        assert!(parse("1 :: up(ue1,m0).").is_err());
        assert!(parse("1::up(ue1,m0):-state(ue1,0).").is_err());
        assert!(parse("1::up(ue0,m0).").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "% provenance demo\n%vocab action access discard silence\n\
                    1::action(ue2,silence) :- state(ue2,0).\n\
                    0.25::up(ue1,m1) :- state(ue1,0).\n\
                    0.75::up(ue1,m0) :- state(ue1,0).\n";
        let canon = canonicalize(text).unwrap();
        assert!(canon.starts_with("% provenance demo\n%vocab state 0\n%vocab up m0 m1\n"));
        assert_eq!(canonicalize(&canon).unwrap(), canon);
        assert_eq!(parse(&canon).unwrap().provenance(), Some("demo"));
    }
}
