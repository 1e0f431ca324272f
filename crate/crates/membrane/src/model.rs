//! Static description of a membrane system: alphabet, membrane tree, rules,
//! priorities, and the structural validation that keeps them consistent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::multiset::{Multiset, Symbol, RESERVED_TOKENS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid symbol name {0:?}")]
    BadSymbol(String),
    #[error("invalid label {0:?}")]
    BadLabel(String),
    #[error("multiset underflow: have {have} of {symbol}, need {need}")]
    MultisetUnderflow { symbol: String, have: u64, need: u64 },
}

/// A membrane label, element of the label set H.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(std::sync::Arc<str>);

impl Label {
    pub fn new(value: &str) -> Result<Self, ModelError> {
        if value.is_empty()
            || value.chars().any(char::is_whitespace)
            || RESERVED_TOKENS.contains(&value)
        {
            return Err(ModelError::BadLabel(value.to_string()));
        }
        Ok(Label(std::sync::Arc::from(value)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The initial membrane structure mu: a rooted tree whose root is the skin.
/// Labels are unique across the initial tree.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MembraneTemplate {
    pub label: Label,
    pub children: Vec<MembraneTemplate>,
}

impl MembraneTemplate {
    pub fn leaf(label: Label) -> Self {
        MembraneTemplate { label, children: Vec::new() }
    }

    /// Pre-order traversal of the template tree.
    pub fn preorder(&self) -> Vec<&MembraneTemplate> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            for c in node.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn labels(&self) -> Vec<Label> {
        self.preorder().iter().map(|n| n.label.clone()).collect()
    }

    pub fn find(&self, label: &Label) -> Option<&MembraneTemplate> {
        self.preorder().into_iter().find(|n| &n.label == label)
    }
}

/// Where a produced object goes in a transition rule.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Target {
    Here,
    Out,
    In(Label),
}

/// A cooperative rewriting rule of a transition-mode region.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TransitionRule {
    pub name: String,
    pub region: Label,
    pub lhs: Multiset,
    pub rhs: Vec<(Symbol, Target)>,
}

/// One of the five active-membranes rule forms, acting on membranes
/// labeled `label`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ActiveRule {
    pub name: String,
    pub label: Label,
    pub op: ActiveOp,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ActiveOp {
    /// [a -> v]_h
    Evolve { trigger: Symbol, products: Multiset },
    /// a [ ]_h -> [b]_h — consumes from the parent region.
    SendIn { trigger: Symbol, product: Option<Symbol> },
    /// [a]_h -> b
    SendOut { trigger: Symbol, product: Option<Symbol> },
    /// [a]_h -> b, membrane removed.
    Dissolve { trigger: Symbol, product: Option<Symbol> },
    /// [a]_h -> [b]_h [c]_h, elementary membranes only.
    Divide { trigger: Symbol, left: Symbol, right: Symbol },
}

impl ActiveOp {
    pub fn trigger(&self) -> &Symbol {
        match self {
            ActiveOp::Evolve { trigger, .. }
            | ActiveOp::SendIn { trigger, .. }
            | ActiveOp::SendOut { trigger, .. }
            | ActiveOp::Dissolve { trigger, .. }
            | ActiveOp::Divide { trigger, .. } => trigger,
        }
    }

    /// Structural rules occupy the affected membrane's one per-step slot.
    pub fn is_structural(&self) -> bool {
        !matches!(self, ActiveOp::Evolve { .. })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Transition,
    Active,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Transition => "transition",
            Mode::Active => "active",
        })
    }
}

/// Region-keyed rule sets; the variant must agree with the spec's mode.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Rules {
    Transition(BTreeMap<Label, Vec<TransitionRule>>),
    Active(BTreeMap<Label, Vec<ActiveRule>>),
}

impl Rules {
    pub fn is_empty(&self) -> bool {
        match self {
            Rules::Transition(m) => m.values().all(Vec::is_empty),
            Rules::Active(m) => m.values().all(Vec::is_empty),
        }
    }
}

/// Where results are read from.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub enum OutputRegion {
    #[default]
    Environment,
    Membrane(Label),
}

/// The full static description of a membrane system.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PSystemSpec {
    pub mode: Mode,
    pub alphabet: BTreeSet<Symbol>,
    pub catalysts: BTreeSet<Symbol>,
    /// Terminal symbols used for result extraction; `None` means the whole
    /// alphabet.
    pub terminals: Option<BTreeSet<Symbol>>,
    pub mu: MembraneTemplate,
    pub initial: BTreeMap<Label, Multiset>,
    pub rules: Rules,
    /// Per-region strict priority pairs (higher, lower); transition mode only.
    pub priorities: BTreeMap<Label, BTreeSet<(String, String)>>,
    pub output: OutputRegion,
    pub recognizer: Option<(Symbol, Symbol)>,
}

impl PSystemSpec {
    pub fn new(mode: Mode, alphabet: BTreeSet<Symbol>, mu: MembraneTemplate) -> Self {
        let rules = match mode {
            Mode::Transition => Rules::Transition(BTreeMap::new()),
            Mode::Active => Rules::Active(BTreeMap::new()),
        };
        PSystemSpec {
            mode,
            alphabet,
            catalysts: BTreeSet::new(),
            terminals: None,
            mu,
            initial: BTreeMap::new(),
            rules,
            priorities: BTreeMap::new(),
            output: OutputRegion::Environment,
            recognizer: None,
        }
    }

    /// The label set H, derived from mu.
    pub fn labels(&self) -> BTreeSet<Label> {
        self.mu.labels().into_iter().collect()
    }

    pub fn terminals_effective(&self) -> BTreeSet<Symbol> {
        self.terminals.clone().unwrap_or_else(|| self.alphabet.clone())
    }

    pub fn transition_rules(&self, region: &Label) -> &[TransitionRule] {
        match &self.rules {
            Rules::Transition(m) => m.get(region).map(Vec::as_slice).unwrap_or(&[]),
            Rules::Active(_) => &[],
        }
    }

    pub fn active_rules(&self, label: &Label) -> &[ActiveRule] {
        match &self.rules {
            Rules::Active(m) => m.get(label).map(Vec::as_slice).unwrap_or(&[]),
            Rules::Transition(_) => &[],
        }
    }

    /// Transitive closure of a region's priority pairs.
    pub fn priority_closure(&self, region: &Label) -> BTreeSet<(String, String)> {
        let Some(pairs) = self.priorities.get(region) else {
            return BTreeSet::new();
        };
        let mut closure = pairs.clone();
        loop {
            let mut added = Vec::new();
            for (a, b) in &closure {
                for (c, d) in &closure {
                    if b == c && !closure.contains(&(a.clone(), d.clone())) {
                        added.push((a.clone(), d.clone()));
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            closure.extend(added);
        }
        closure
    }
}

/// One violated structural invariant, with its location.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Checks every structural invariant of a spec. An empty list means valid.
pub fn validate_spec(spec: &PSystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, loc: &str, msg: String| {
        out.push(Violation { location: loc.to_string(), message: msg });
    };

    // Labels in mu are injective.
    let mut seen = BTreeSet::new();
    for label in spec.mu.labels() {
        if !seen.insert(label.clone()) {
            push(&mut out, "mu", format!("duplicate label in \u{3bc}: {label}"));
        }
    }
    let labels = spec.labels();

    if spec.alphabet.is_empty() {
        push(&mut out, "alphabet", "alphabet is empty".into());
    }
    for c in &spec.catalysts {
        if !spec.alphabet.contains(c) {
            push(&mut out, "catalysts", format!("catalyst {c} not in alphabet"));
        }
    }
    if spec.mode == Mode::Active && !spec.catalysts.is_empty() {
        push(&mut out, "catalysts", "catalysts are transition-mode only".into());
    }
    if let Some(terms) = &spec.terminals {
        for t in terms {
            if !spec.alphabet.contains(t) {
                push(&mut out, "terminals", format!("terminal {t} not in alphabet"));
            }
        }
    }

    for (label, mset) in &spec.initial {
        if !labels.contains(label) {
            push(&mut out, "init", format!("initial multiset for label {label} not in \u{3bc}"));
        }
        for sym in mset.symbols() {
            if !spec.alphabet.contains(sym) {
                push(&mut out, "init", format!("symbol {sym} in region {label} not in alphabet"));
            }
        }
    }

    match (&spec.rules, spec.mode) {
        (Rules::Transition(_), Mode::Active) | (Rules::Active(_), Mode::Transition) => {
            push(&mut out, "rules", "rule kind does not match declared mode".into());
        }
        (Rules::Transition(regions), Mode::Transition) => {
            for (region, rules) in regions {
                let loc = format!("region {region}");
                if !labels.contains(region) {
                    push(&mut out, &loc, "rule region label not in \u{3bc}".into());
                    continue;
                }
                let mut names = BTreeSet::new();
                let child_labels: BTreeSet<Label> = spec
                    .mu
                    .find(region)
                    .map(|n| n.children.iter().map(|c| c.label.clone()).collect())
                    .unwrap_or_default();
                for rule in rules {
                    let loc = format!("region {region} rule {}", rule.name);
                    if !names.insert(rule.name.clone()) {
                        push(&mut out, &loc, "duplicate rule name in region".into());
                    }
                    if rule.lhs.is_empty() {
                        push(&mut out, &loc, "left side is empty".into());
                    }
                    for sym in rule.lhs.symbols() {
                        if !spec.alphabet.contains(sym) {
                            push(&mut out, &loc, format!("symbol {sym} not in alphabet"));
                        }
                    }
                    for (sym, target) in &rule.rhs {
                        if !spec.alphabet.contains(sym) {
                            push(&mut out, &loc, format!("symbol {sym} not in alphabet"));
                        }
                        if let Target::In(l) = target {
                            if !child_labels.contains(l) {
                                push(
                                    &mut out,
                                    &loc,
                                    format!("in({l}) target is not a child of region {region}"),
                                );
                            }
                        }
                    }
                    // Catalysts are conserved: equal multiplicity, target here.
                    for c in &spec.catalysts {
                        let consumed = rule.lhs.count(c);
                        if consumed == 0 {
                            continue;
                        }
                        let kept = rule
                            .rhs
                            .iter()
                            .filter(|(s, t)| s == c && *t == Target::Here)
                            .count() as u64;
                        if kept != consumed {
                            push(&mut out, &loc, format!("catalyst {c} not conserved"));
                        }
                    }
                }
            }
        }
        (Rules::Active(per_label), Mode::Active) => {
            let skin = spec.mu.label.clone();
            for (label, rules) in per_label {
                let loc = format!("label {label}");
                if !labels.contains(label) {
                    push(&mut out, &loc, "rule label not in \u{3bc}".into());
                    continue;
                }
                let mut names = BTreeSet::new();
                for rule in rules {
                    let loc = format!("label {label} rule {}", rule.name);
                    if !names.insert(rule.name.clone()) {
                        push(&mut out, &loc, "duplicate rule name in region".into());
                    }
                    let mut syms: Vec<&Symbol> = vec![rule.op.trigger()];
                    match &rule.op {
                        ActiveOp::Evolve { products, .. } => syms.extend(products.symbols()),
                        ActiveOp::SendIn { product, .. }
                        | ActiveOp::SendOut { product, .. }
                        | ActiveOp::Dissolve { product, .. } => syms.extend(product.iter()),
                        ActiveOp::Divide { left, right, .. } => {
                            syms.push(left);
                            syms.push(right);
                        }
                    }
                    for sym in syms {
                        if !spec.alphabet.contains(sym) {
                            push(&mut out, &loc, format!("symbol {sym} not in alphabet"));
                        }
                    }
                    if matches!(rule.op, ActiveOp::Dissolve { .. } | ActiveOp::Divide { .. })
                        && *label == skin
                    {
                        push(&mut out, &loc, "dissolve/divide forbidden on the skin".into());
                    }
                    if matches!(rule.op, ActiveOp::SendIn { .. }) && *label == skin {
                        push(&mut out, &loc, "send-in cannot target the skin".into());
                    }
                }
            }
        }
    }

    // Priorities: transition mode only, known rule names, strict partial order.
    if spec.mode == Mode::Active && !spec.priorities.is_empty() {
        push(&mut out, "prio", "priorities are transition-mode only".into());
    }
    for (region, pairs) in &spec.priorities {
        let loc = format!("prio {region}");
        let names: BTreeSet<&str> = spec
            .transition_rules(region)
            .iter()
            .map(|r| r.name.as_str())
            .collect();
        for (hi, lo) in pairs {
            for n in [hi, lo] {
                if !names.contains(n.as_str()) {
                    push(&mut out, &loc, format!("unknown rule name {n} in priority"));
                }
            }
        }
        let closure = spec.priority_closure(region);
        if closure.iter().any(|(a, b)| a == b) {
            push(&mut out, &loc, "priority relation has a cycle".into());
        }
    }

    if let OutputRegion::Membrane(l) = &spec.output {
        if !labels.contains(l) {
            push(&mut out, "output", format!("output label {l} not in \u{3bc}"));
        }
    }
    if let Some((yes, no)) = &spec.recognizer {
        if spec.output != OutputRegion::Environment {
            push(&mut out, "recognizer", "recognizer requires output env".into());
        }
        for s in [yes, no] {
            if !spec.alphabet.contains(s) {
                push(&mut out, "recognizer", format!("answer symbol {s} not in alphabet"));
            }
        }
        if yes == no {
            push(&mut out, "recognizer", "yes and no symbols must differ".into());
        }
    }

    out
}
