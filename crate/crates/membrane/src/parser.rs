//! Line-oriented textual format for system descriptions (`.mps` files), with
//! a canonical serializer. `parse(serialize(spec))` is structurally equal to
//! `spec` for every valid spec.
//!
//! Grammar (one directive per line, `#` starts a comment):
//!
//! ```text
//! model transition | model active
//! alphabet <sym>+
//! catalysts <sym>*
//! terminals <sym>*
//! mu <tree>                        tree := "[" <label> <tree>* "]"
//! init <label>: <mset>             mset := "." | (<sym> | <sym>*<count>)+
//! rule <label> @<name>: <mset> -> <rhslist>
//!                                  rhslist := "." | (<sym>[!out | !in(<label>)])+
//! arule <label> <kind> @<name>: <sym> -> <rhs>
//!                                  kind := evo | in | out | dis | div
//! prio <label>: <name> > <name>
//! output env | output <label>
//! recognizer <yesSym> <noSym>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{
    ActiveOp, ActiveRule, Label, MembraneTemplate, Mode, OutputRegion, PSystemSpec, Rules, Target,
    TransitionRule,
};
use crate::multiset::{Multiset, Symbol};

/// 1-based source location of a token or span.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SourceSpan {
    pub line: u32,
    pub col_start: u32,
    pub col_end: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}-{}: {}: {}",
            self.span.line, self.span.col_start, self.span.col_end, sev, self.message
        )
    }
}

#[derive(Clone, Debug)]
struct Token {
    text: String,
    span: SourceSpan,
}

/// Splits a line into tokens; punctuation is its own token.
fn tokenize(line: &str, line_no: u32) -> Vec<Token> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let text = if c == '-' && i + 1 < chars.len() && chars[i + 1] == '>' {
            // Consume a maximal run of arrow-ish characters so `->>` becomes
            // one malformed token rather than `->` plus garbage.
            let mut j = i + 2;
            while j < chars.len() && (chars[j] == '>' || chars[j] == '-') {
                j += 1;
            }
            i = j;
            chars[start..j].iter().collect()
        } else if "[]():!*.|>@".contains(c) {
            i += 1;
            c.to_string()
        } else {
            let mut j = i;
            while j < chars.len()
                && !chars[j].is_whitespace()
                && !"[]():!*.|>@#".contains(chars[j])
                && !(chars[j] == '-' && j + 1 < chars.len() && chars[j + 1] == '>')
            {
                j += 1;
            }
            i = j;
            chars[start..j].iter().collect()
        };
        out.push(Token {
            text,
            span: SourceSpan {
                line: line_no,
                col_start: start as u32 + 1,
                col_end: i as u32,
            },
        });
    }
    out
}

struct LineParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: u32,
    line_len: u32,
}

impl<'a> LineParser<'a> {
    fn new(tokens: &'a [Token], line: u32, line_len: u32) -> Self {
        LineParser { tokens, pos: 0, line, line_len }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> SourceSpan {
        self.peek().map(|t| t.span).unwrap_or(SourceSpan {
            line: self.line,
            col_start: self.line_len.max(1),
            col_end: self.line_len.max(1),
        })
    }

    fn err(&self, message: impl Into<String>) -> ParseDiagnostic {
        ParseDiagnostic {
            severity: Severity::Error,
            message: message.into(),
            span: self.here(),
        }
    }

    fn expect(&mut self, text: &str) -> Result<(), ParseDiagnostic> {
        match self.peek() {
            Some(t) if t.text == text => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.err(format!("expected `{text}`, found `{}`", t.text))),
            None => Err(self.err(format!("expected `{text}`, found end of line"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseDiagnostic> {
        match self.peek() {
            Some(t) if is_ident(&t.text) => {
                let out = (t.text.clone(), t.span);
                self.pos += 1;
                Ok(out)
            }
            Some(t) => Err(self.err(format!("expected {what}, found `{}`", t.text))),
            None => Err(self.err(format!("expected {what}, found end of line"))),
        }
    }

    fn done(&mut self) -> Result<(), ParseDiagnostic> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected trailing `{}`", t.text))),
        }
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Builder {
    mode: Option<Mode>,
    alphabet: BTreeSet<Symbol>,
    catalysts: BTreeSet<Symbol>,
    terminals: Option<BTreeSet<Symbol>>,
    mu: Option<MembraneTemplate>,
    initial: BTreeMap<Label, Multiset>,
    trans_rules: BTreeMap<Label, Vec<TransitionRule>>,
    active_rules: BTreeMap<Label, Vec<ActiveRule>>,
    priorities: BTreeMap<Label, BTreeSet<(String, String)>>,
    output: OutputRegion,
    recognizer: Option<(Symbol, Symbol)>,
    region_order: Vec<Label>,
}

/// Parses DSL text. Errors mean no spec is produced.
pub fn parse(text: &str) -> Result<PSystemSpec, Vec<ParseDiagnostic>> {
    let mut diags: Vec<ParseDiagnostic> = Vec::new();
    let mut b = Builder {
        mode: None,
        alphabet: BTreeSet::new(),
        catalysts: BTreeSet::new(),
        terminals: None,
        mu: None,
        initial: BTreeMap::new(),
        trans_rules: BTreeMap::new(),
        active_rules: BTreeMap::new(),
        priorities: BTreeMap::new(),
        output: OutputRegion::Environment,
        recognizer: None,
        region_order: Vec::new(),
    };

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let tokens = tokenize(line, line_no);
        if tokens.is_empty() {
            continue;
        }
        let mut p = LineParser::new(&tokens, line_no, line.chars().count() as u32);
        let head = p.next().unwrap().clone();
        let result = match head.text.as_str() {
            "model" => parse_model(&mut p, &mut b),
            "alphabet" => parse_symbol_list(&mut p, |syms| b.alphabet.extend(syms)),
            "catalysts" => parse_symbol_list(&mut p, |syms| b.catalysts.extend(syms)),
            "terminals" => parse_symbol_list(&mut p, |syms| {
                b.terminals.get_or_insert_with(BTreeSet::new).extend(syms)
            }),
            "mu" => parse_mu(&mut p, &mut b),
            "init" => parse_init(&mut p, &mut b),
            "rule" => parse_rule(&mut p, &mut b),
            "arule" => parse_arule(&mut p, &mut b),
            "prio" => parse_prio(&mut p, &mut b),
            "output" => parse_output(&mut p, &mut b),
            "recognizer" => parse_recognizer(&mut p, &mut b),
            other => Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("unknown directive `{other}`"),
                span: head.span,
            }),
        };
        if let Err(d) = result {
            diags.push(d);
        }
    }

    let top = SourceSpan { line: 1, col_start: 1, col_end: 1 };
    if b.mode.is_none() {
        diags.push(ParseDiagnostic {
            severity: Severity::Error,
            message: "missing `model` directive".into(),
            span: top,
        });
    }
    if b.mu.is_none() {
        diags.push(ParseDiagnostic {
            severity: Severity::Error,
            message: "missing `mu` directive".into(),
            span: top,
        });
    }
    if b.alphabet.is_empty() {
        diags.push(ParseDiagnostic {
            severity: Severity::Error,
            message: "missing or empty `alphabet` directive".into(),
            span: top,
        });
    }

    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(diags);
    }

    let mode = b.mode.unwrap();
    let rules = match mode {
        Mode::Transition => Rules::Transition(b.trans_rules),
        Mode::Active => Rules::Active(b.active_rules),
    };
    b.initial.retain(|_, m| !m.is_empty());
    Ok(PSystemSpec {
        mode,
        alphabet: b.alphabet,
        catalysts: b.catalysts,
        terminals: b.terminals,
        mu: b.mu.unwrap(),
        initial: b.initial,
        rules,
        priorities: b.priorities,
        output: b.output,
        recognizer: b.recognizer,
    })
}

fn parse_model(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let (word, span) = p.ident("mode")?;
    b.mode = Some(match word.as_str() {
        "transition" => Mode::Transition,
        "active" => Mode::Active,
        _ => {
            return Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("unknown mode `{word}`"),
                span,
            })
        }
    });
    p.done()
}

fn parse_symbol_list(
    p: &mut LineParser,
    mut sink: impl FnMut(Vec<Symbol>),
) -> Result<(), ParseDiagnostic> {
    let mut syms = Vec::new();
    while p.peek().is_some() {
        let (name, span) = p.ident("symbol")?;
        syms.push(Symbol::new(&name).map_err(|e| ParseDiagnostic {
            severity: Severity::Error,
            message: e.to_string(),
            span,
        })?);
    }
    sink(syms);
    Ok(())
}

fn parse_tree(p: &mut LineParser) -> Result<MembraneTemplate, ParseDiagnostic> {
    p.expect("[")?;
    let (label, span) = p.ident("membrane label")?;
    let label = Label::new(&label).map_err(|e| ParseDiagnostic {
        severity: Severity::Error,
        message: e.to_string(),
        span,
    })?;
    let mut children = Vec::new();
    while matches!(p.peek(), Some(t) if t.text == "[") {
        children.push(parse_tree(p)?);
    }
    p.expect("]")?;
    Ok(MembraneTemplate { label, children })
}

fn parse_mu(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let tree = parse_tree(p)?;
    b.region_order = tree.labels();
    b.mu = Some(tree);
    p.done()
}

fn parse_label(p: &mut LineParser) -> Result<Label, ParseDiagnostic> {
    let (text, span) = p.ident("label")?;
    Label::new(&text).map_err(|e| ParseDiagnostic {
        severity: Severity::Error,
        message: e.to_string(),
        span,
    })
}

fn parse_symbol(p: &mut LineParser) -> Result<Symbol, ParseDiagnostic> {
    let (text, span) = p.ident("symbol")?;
    Symbol::new(&text).map_err(|e| ParseDiagnostic {
        severity: Severity::Error,
        message: e.to_string(),
        span,
    })
}

/// `<mset> := "." | (<sym> | <sym>*<count>)+`
fn parse_mset(p: &mut LineParser, stop: &[&str]) -> Result<Multiset, ParseDiagnostic> {
    if matches!(p.peek(), Some(t) if t.text == ".") {
        p.next();
        return Ok(Multiset::new());
    }
    let mut out = Multiset::new();
    let mut any = false;
    while let Some(t) = p.peek() {
        if stop.iter().any(|s| t.text.starts_with(s)) {
            break;
        }
        let sym = parse_symbol(p)?;
        let mut count = 1;
        if matches!(p.peek(), Some(t) if t.text == "*") {
            p.next();
            let (num, span) = p.ident("count")?;
            count = num.parse::<u64>().map_err(|_| ParseDiagnostic {
                severity: Severity::Error,
                message: format!("invalid count `{num}`"),
                span,
            })?;
        }
        out.add(&sym, count);
        any = true;
    }
    if !any {
        return Err(p.err("expected multiset"));
    }
    Ok(out)
}

fn parse_init(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let label = parse_label(p)?;
    p.expect(":")?;
    let mset = parse_mset(p, &[])?;
    p.done()?;
    b.initial.entry(label).or_default().add_all(&mset);
    Ok(())
}

fn parse_arrow(p: &mut LineParser) -> Result<(), ParseDiagnostic> {
    match p.peek() {
        Some(t) if t.text == "->" => {
            p.next();
            Ok(())
        }
        Some(t) if t.text.starts_with("->") => Err(ParseDiagnostic {
            severity: Severity::Error,
            message: format!("malformed rule arrow `{}`", t.text),
            span: t.span,
        }),
        _ => Err(p.err("expected `->`")),
    }
}

fn parse_rule(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let region = parse_label(p)?;
    p.expect("@")?;
    let (name, _) = p.ident("rule name")?;
    p.expect(":")?;
    let lhs = parse_mset(p, &["->"])?;
    parse_arrow(p)?;
    let mut rhs = Vec::new();
    if matches!(p.peek(), Some(t) if t.text == ".") {
        p.next();
    } else {
        while p.peek().is_some() {
            let sym = parse_symbol(p)?;
            let target = if matches!(p.peek(), Some(t) if t.text == "!") {
                p.next();
                let (word, span) = p.ident("target")?;
                match word.as_str() {
                    "out" => Target::Out,
                    "in" => {
                        p.expect("(")?;
                        let label = parse_label(p)?;
                        p.expect(")")?;
                        Target::In(label)
                    }
                    _ => {
                        return Err(ParseDiagnostic {
                            severity: Severity::Error,
                            message: format!("unknown target `{word}`"),
                            span,
                        })
                    }
                }
            } else {
                Target::Here
            };
            rhs.push((sym, target));
        }
        if rhs.is_empty() {
            return Err(p.err("expected rule right side"));
        }
    }
    p.done()?;
    b.trans_rules
        .entry(region.clone())
        .or_default()
        .push(TransitionRule { name, region, lhs, rhs });
    Ok(())
}

fn parse_arule(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let label = parse_label(p)?;
    let (kind, kind_span) = p.ident("rule kind")?;
    p.expect("@")?;
    let (name, _) = p.ident("rule name")?;
    p.expect(":")?;
    let trigger = parse_symbol(p)?;
    parse_arrow(p)?;
    let opt_sym = |p: &mut LineParser| -> Result<Option<Symbol>, ParseDiagnostic> {
        if matches!(p.peek(), Some(t) if t.text == ".") {
            p.next();
            Ok(None)
        } else {
            Ok(Some(parse_symbol(p)?))
        }
    };
    let op = match kind.as_str() {
        "evo" => ActiveOp::Evolve { trigger, products: parse_mset(p, &[])? },
        "in" => ActiveOp::SendIn { trigger, product: opt_sym(p)? },
        "out" => ActiveOp::SendOut { trigger, product: opt_sym(p)? },
        "dis" => ActiveOp::Dissolve { trigger, product: opt_sym(p)? },
        "div" => {
            let left = parse_symbol(p)?;
            p.expect("|")?;
            let right = parse_symbol(p)?;
            ActiveOp::Divide { trigger, left, right }
        }
        _ => {
            return Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("unknown active rule kind `{kind}`"),
                span: kind_span,
            })
        }
    };
    p.done()?;
    b.active_rules
        .entry(label.clone())
        .or_default()
        .push(ActiveRule { name, label, op });
    Ok(())
}

fn parse_prio(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let region = parse_label(p)?;
    p.expect(":")?;
    let (hi, _) = p.ident("rule name")?;
    p.expect(">")?;
    let (lo, _) = p.ident("rule name")?;
    p.done()?;
    b.priorities.entry(region).or_default().insert((hi, lo));
    Ok(())
}

fn parse_output(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let (word, span) = p.ident("output region")?;
    b.output = if word == "env" {
        OutputRegion::Environment
    } else {
        OutputRegion::Membrane(Label::new(&word).map_err(|e| ParseDiagnostic {
            severity: Severity::Error,
            message: e.to_string(),
            span,
        })?)
    };
    p.done()
}

fn parse_recognizer(p: &mut LineParser, b: &mut Builder) -> Result<(), ParseDiagnostic> {
    let yes = parse_symbol(p)?;
    let no = parse_symbol(p)?;
    p.done()?;
    b.recognizer = Some((yes, no));
    Ok(())
}

fn mset_text(m: &Multiset) -> String {
    if m.is_empty() {
        return ".".into();
    }
    m.iter()
        .map(|(sym, n)| if n == 1 { sym.to_string() } else { format!("{sym}*{n}") })
        .collect::<Vec<_>>()
        .join(" ")
}

fn tree_text(t: &MembraneTemplate) -> String {
    let mut out = format!("[{}", t.label);
    for c in &t.children {
        out.push_str(&tree_text(c));
    }
    out.push(']');
    out
}

/// Emits canonical DSL text. Order: model, alphabet, catalysts, terminals,
/// mu, init (mu pre-order), rules (per region in mu pre-order, declaration
/// order), prio, output, recognizer.
pub fn serialize(spec: &PSystemSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("model {}\n", spec.mode));
    let syms = |set: &BTreeSet<Symbol>| {
        set.iter().map(Symbol::to_string).collect::<Vec<_>>().join(" ")
    };
    out.push_str(&format!("alphabet {}\n", syms(&spec.alphabet)));
    if !spec.catalysts.is_empty() {
        out.push_str(&format!("catalysts {}\n", syms(&spec.catalysts)));
    }
    if let Some(terms) = &spec.terminals {
        out.push_str(&format!("terminals {}\n", syms(terms)));
    }
    out.push_str(&format!("mu {}\n", tree_text(&spec.mu)));
    let region_order = spec.mu.labels();
    for label in &region_order {
        if let Some(mset) = spec.initial.get(label) {
            if !mset.is_empty() {
                out.push_str(&format!("init {label}: {}\n", mset_text(mset)));
            }
        }
    }
    for label in &region_order {
        match &spec.rules {
            Rules::Transition(_) => {
                for rule in spec.transition_rules(label) {
                    let rhs = if rule.rhs.is_empty() {
                        ".".into()
                    } else {
                        rule.rhs
                            .iter()
                            .map(|(sym, target)| match target {
                                Target::Here => sym.to_string(),
                                Target::Out => format!("{sym}!out"),
                                Target::In(l) => format!("{sym}!in({l})"),
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    };
                    out.push_str(&format!(
                        "rule {label} @{}: {} -> {rhs}\n",
                        rule.name,
                        mset_text(&rule.lhs)
                    ));
                }
            }
            Rules::Active(_) => {
                for rule in spec.active_rules(label) {
                    let opt = |s: &Option<Symbol>| {
                        s.as_ref().map(Symbol::to_string).unwrap_or_else(|| ".".into())
                    };
                    let (kind, trigger, rhs) = match &rule.op {
                        ActiveOp::Evolve { trigger, products } => {
                            ("evo", trigger, mset_text(products))
                        }
                        ActiveOp::SendIn { trigger, product } => ("in", trigger, opt(product)),
                        ActiveOp::SendOut { trigger, product } => ("out", trigger, opt(product)),
                        ActiveOp::Dissolve { trigger, product } => ("dis", trigger, opt(product)),
                        ActiveOp::Divide { trigger, left, right } => {
                            ("div", trigger, format!("{left} | {right}"))
                        }
                    };
                    out.push_str(&format!(
                        "arule {label} {kind} @{}: {trigger} -> {rhs}\n",
                        rule.name
                    ));
                }
            }
        }
    }
    for label in &region_order {
        if let Some(pairs) = spec.priorities.get(label) {
            for (hi, lo) in pairs {
                out.push_str(&format!("prio {label}: {hi} > {lo}\n"));
            }
        }
    }
    match &spec.output {
        OutputRegion::Environment => out.push_str("output env\n"),
        OutputRegion::Membrane(l) => out.push_str(&format!("output {l}\n")),
    }
    if let Some((yes, no)) = &spec.recognizer {
        out.push_str(&format!("recognizer {yes} {no}\n"));
    }
    out
}
