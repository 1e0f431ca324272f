//! Multisets over alphabet symbols: the content of every region.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::model::ModelError;

/// An object name. Interned so clones in the rewriting hot path are cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

/// Tokens of the rule grammar that can never double as object names.
pub const RESERVED_TOKENS: &[&str] = &["->", "!", "|", "."];

impl Symbol {
    pub fn new(name: &str) -> Result<Self, ModelError> {
        if name.is_empty()
            || name.chars().any(char::is_whitespace)
            || RESERVED_TOKENS.contains(&name)
        {
            return Err(ModelError::BadSymbol(name.to_string()));
        }
        Ok(Symbol(Arc::from(name)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A multiset of objects in canonical form: stored counts are always >= 1,
/// absent symbols have count 0.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Multiset {
    counts: BTreeMap<Symbol, u64>,
}

impl Multiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Symbol, u64)>>(pairs: I) -> Self {
        let mut m = Multiset::new();
        for (sym, n) in pairs {
            m.add(&sym, n);
        }
        m
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, sym: &Symbol) -> u64 {
        self.counts.get(sym).copied().unwrap_or(0)
    }

    /// Total number of objects, with multiplicity.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Number of distinct symbols.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, u64)> {
        self.counts.iter().map(|(s, &n)| (s, n))
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.counts.keys()
    }

    pub fn add(&mut self, sym: &Symbol, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(sym.clone()).or_insert(0) += n;
    }

    /// Removes `n` copies of `sym`. Errors if fewer than `n` are present.
    pub fn remove(&mut self, sym: &Symbol, n: u64) -> Result<(), ModelError> {
        if n == 0 {
            return Ok(());
        }
        match self.counts.get_mut(sym) {
            Some(c) if *c > n => {
                *c -= n;
                Ok(())
            }
            Some(c) if *c == n => {
                self.counts.remove(sym);
                Ok(())
            }
            _ => Err(ModelError::MultisetUnderflow {
                symbol: sym.to_string(),
                have: self.count(sym),
                need: n,
            }),
        }
    }

    pub fn union(&self, other: &Multiset) -> Multiset {
        let mut out = self.clone();
        out.add_all(other);
        out
    }

    pub fn add_all(&mut self, other: &Multiset) {
        for (sym, n) in other.iter() {
            self.add(sym, n);
        }
    }

    /// `self - other`; requires containment.
    pub fn difference(&self, other: &Multiset) -> Result<Multiset, ModelError> {
        let mut out = self.clone();
        out.remove_all(other)?;
        Ok(out)
    }

    pub fn remove_all(&mut self, other: &Multiset) -> Result<(), ModelError> {
        if !self.contains(other) {
            let (sym, need) = other
                .iter()
                .find(|(s, n)| self.count(s) < *n)
                .map(|(s, n)| (s.to_string(), n))
                .expect("containment failure has a witness");
            return Err(ModelError::MultisetUnderflow {
                symbol: sym.clone(),
                have: self.count(&Symbol::new(&sym).unwrap()),
                need,
            });
        }
        for (sym, n) in other.iter() {
            self.remove(sym, n).expect("containment checked");
        }
        Ok(())
    }

    /// True iff `other` is a sub-multiset of `self`.
    pub fn contains(&self, other: &Multiset) -> bool {
        other.iter().all(|(sym, n)| self.count(sym) >= n)
    }

    pub fn scale(&self, k: u64) -> Multiset {
        if k == 0 {
            return Multiset::new();
        }
        Multiset {
            counts: self.counts.iter().map(|(s, n)| (s.clone(), n * k)).collect(),
        }
    }

    /// How many whole copies of `other` fit in `self`. `u64::MAX` if `other`
    /// is empty.
    pub fn fits(&self, other: &Multiset) -> u64 {
        other
            .iter()
            .map(|(sym, n)| self.count(sym) / n)
            .min()
            .unwrap_or(u64::MAX)
    }

    /// Canonical `{sym*count,…}` rendering, symbols sorted, `*1` elided.
    pub fn canonical(&self) -> String {
        let mut out = String::from("{");
        for (i, (sym, n)) in self.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(sym.as_str());
            if n != 1 {
                out.push('*');
                out.push_str(&n.to_string());
            }
        }
        out.push('}');
        out
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}
