//! Abstraction grammars and the knowledge base that holds them.

mod dsl;
pub mod pattern;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Observable, RelationTable, Time};
use crate::procedures::Registry;

pub use pattern::{
    enumerate_patterns, enumerate_states, AbstractionPattern, Finding, GenerationState,
};

use dsl::{Cmp, ConstraintAst, Decl, Expr, GrammarAst, Item, PredArgAst, RefAst};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub file: String,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KbErrorKind {
    Syntax,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {} error: {message}", match kind { KbErrorKind::Syntax => "syntax", KbErrorKind::Semantic => "semantic" })]
pub struct KbError {
    pub kind: KbErrorKind,
    pub pos: Pos,
    pub message: String,
}

impl KbError {
    fn semantic(pos: Pos, message: String) -> Self {
        KbError {
            kind: KbErrorKind::Semantic,
            pos,
            message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Abstracted,
    Environment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Begin,
    End,
}

/// Who a reference in a constraint block points at.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Hyp,
    This,
    /// The k-th finding before this one, k >= 1.
    Back(usize),
    /// Nearest earlier finding of that observable.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeRef {
    pub owner: Owner,
    pub end: End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgTemplate {
    Time(TimeRef),
    Attr(Owner, String),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintTemplate {
    /// `lo <= x - y <= hi`; `y == None` is the time origin.
    Diff {
        x: TimeRef,
        y: Option<TimeRef>,
        lo: Time,
        hi: Time,
        label: String,
    },
    Pred {
        name: String,
        args: Vec<ArgTemplate>,
        label: String,
    },
}

impl ConstraintTemplate {
    pub fn owners(&self) -> Vec<&Owner> {
        match self {
            ConstraintTemplate::Diff { x, y, .. } => {
                let mut v = vec![&x.owner];
                if let Some(y) = y {
                    v.push(&y.owner);
                }
                v
            }
            ConstraintTemplate::Pred { args, .. } => args
                .iter()
                .filter_map(|a| match a {
                    ArgTemplate::Time(t) => Some(&t.owner),
                    ArgTemplate::Attr(o, _) => Some(o),
                    ArgTemplate::Const(_) => None,
                })
                .collect(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ConstraintTemplate::Diff { label, .. } | ConstraintTemplate::Pred { label, .. } => {
                label
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub lhs: usize,
    /// `None` for a lambda production.
    pub terminal: Option<String>,
    pub rhs: Option<usize>,
    pub role: Role,
    pub theta: Option<String>,
    pub constraints: Vec<ConstraintTemplate>,
    /// No temporal constraint ties the new finding to an earlier one, so
    /// the default ordering applies.
    pub hereafter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub name: String,
    pub hypothesis: String,
    pub nonterminals: Vec<String>,
    pub productions: Vec<Production>,
    pub salient: Vec<String>,
    pub detector: Option<String>,
    /// Terminals emitted by productions on a cycle of the nonterminal graph.
    pub periodic: BTreeSet<String>,
}

pub const START: usize = 0;

impl Grammar {
    pub fn terminals(&self) -> BTreeSet<&str> {
        self.productions
            .iter()
            .filter_map(|p| p.terminal.as_deref())
            .collect()
    }

    pub fn abstracted_terminals(&self) -> BTreeSet<&str> {
        self.productions
            .iter()
            .filter(|p| p.role == Role::Abstracted)
            .filter_map(|p| p.terminal.as_deref())
            .collect()
    }

    pub fn production_text(&self, i: usize) -> String {
        let p = &self.productions[i];
        let rhs = match (&p.terminal, p.rhs) {
            (None, _) => "lambda".to_string(),
            (Some(t), None) => t.clone(),
            (Some(t), Some(n)) => format!("{t} {}", self.nonterminals[n]),
        };
        format!("{} -> {rhs}", self.nonterminals[p.lhs])
    }
}

/// Observables, relations and grammars, validated together.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub observables: Vec<Observable>,
    pub relations: RelationTable,
    pub grammars: Vec<Grammar>,
    index: BTreeMap<String, usize>,
    /// Direct abstraction pairs `(terminal, hypothesis)`.
    abstraction: BTreeSet<(String, String)>,
}

pub struct KbSource<'a> {
    pub name: &'a str,
    pub text: &'a str,
}

impl KnowledgeBase {
    pub fn parse(text: &str, registry: &Registry) -> Result<Self, KbError> {
        Self::parse_sources(&[KbSource { name: "kb", text }], registry)
    }

    pub fn parse_sources(sources: &[KbSource<'_>], registry: &Registry) -> Result<Self, KbError> {
        let mut decls = Vec::new();
        for s in sources {
            decls.extend(dsl::parse(s.name, s.text)?);
        }
        build(decls, registry)
    }

    pub fn observable(&self, id: &str) -> Option<&Observable> {
        self.index.get(id).map(|&i| &self.observables[i])
    }

    pub fn grammar(&self, name: &str) -> Option<&Grammar> {
        self.grammars.iter().find(|g| g.name == name)
    }

    pub fn is_a(&self, specific: &str, general: &str) -> bool {
        self.relations.is_a(specific, general)
    }

    pub fn mutually_exclusive(&self, a: &str, b: &str) -> bool {
        self.relations.mutually_exclusive(a, b).unwrap_or(false)
    }

    pub fn abstraction_pairs(&self) -> impl Iterator<Item = &(String, String)> {
        self.abstraction.iter()
    }

    /// `q` can be abstracted by some grammar, directly or as a specialization
    /// of an abstracted terminal.
    pub fn in_domain(&self, q: &str) -> bool {
        self.abstraction.iter().any(|(t, _)| self.is_a(q, t))
    }

    /// Largest number of observables any single observable can be abstracted into.
    pub fn default_k(&self) -> usize {
        let mut per: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (t, h) in &self.abstraction {
            per.entry(t).or_default().insert(h);
        }
        per.values().map(BTreeSet::len).max().unwrap_or(0)
    }
}

fn build(decls: Vec<Decl>, registry: &Registry) -> Result<KnowledgeBase, KbError> {
    let mut observables: Vec<Observable> = Vec::new();
    let mut index = BTreeMap::new();
    let mut is_a = Vec::new();
    let mut excludes = Vec::new();
    let mut grammar_asts = Vec::new();
    let mut first_pos = None;
    for d in decls {
        match d {
            Decl::Observable(q, pos) => {
                first_pos.get_or_insert(pos.clone());
                if index.contains_key(&q.id) {
                    return Err(KbError::semantic(
                        pos,
                        format!("duplicate observable `{}`", q.id),
                    ));
                }
                index.insert(q.id.clone(), observables.len());
                observables.push(q);
            }
            Decl::IsA(a, b, pos) => is_a.push((a, b, pos)),
            Decl::Excludes(a, b, pos) => excludes.push((a, b, pos)),
            Decl::Grammar(g) => grammar_asts.push(g),
        }
    }
    for (a, b, pos) in is_a.iter().chain(&excludes) {
        for q in [a, b] {
            if !index.contains_key(q) {
                return Err(KbError::semantic(
                    pos.clone(),
                    format!("unknown observable `{q}`"),
                ));
            }
        }
    }
    let pairs = |v: &[(String, String, Pos)]| -> Vec<(String, String)> {
        v.iter().map(|(a, b, _)| (a.clone(), b.clone())).collect()
    };
    let relations =
        RelationTable::build(&observables, &pairs(&is_a), &pairs(&excludes)).map_err(|e| {
            let pos = match &e {
                ModelError::BadGeneralization { specific, .. } | ModelError::IsACycle(specific) => {
                    is_a.iter()
                        .find(|(a, _, _)| a == specific)
                        .map(|(_, _, p)| p.clone())
                }
                _ => None,
            };
            KbError::semantic(
                pos.or(first_pos.clone()).unwrap_or(Pos {
                    file: "kb".into(),
                    line: 1,
                    col: 1,
                }),
                e.to_string(),
            )
        })?;

    let mut kb = KnowledgeBase {
        observables,
        relations,
        grammars: Vec::new(),
        index,
        abstraction: BTreeSet::new(),
    };
    let mut names = BTreeSet::new();
    for g in grammar_asts {
        if !names.insert(g.name.clone()) {
            return Err(KbError::semantic(
                g.pos.clone(),
                format!("duplicate grammar `{}`", g.name),
            ));
        }
        let grammar = compile_grammar(&kb, g, registry)?;
        for t in grammar.abstracted_terminals() {
            kb.abstraction
                .insert((t.to_string(), grammar.hypothesis.clone()));
        }
        kb.grammars.push(grammar);
    }
    check_abstraction_acyclic(&kb)?;
    Ok(kb)
}

fn check_abstraction_acyclic(kb: &KnowledgeBase) -> Result<(), KbError> {
    // Depth-first search for a cycle in terminal -> hypothesis edges.
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (t, h) in &kb.abstraction {
        succ.entry(t).or_default().push(h);
    }
    fn visit<'a>(
        n: &'a str,
        succ: &BTreeMap<&'a str, Vec<&'a str>>,
        state: &mut BTreeMap<&'a str, u8>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<&'a str>> {
        match state.get(n) {
            Some(1) => {
                let start = path.iter().position(|p| *p == n).unwrap_or(0);
                let mut cyc = path[start..].to_vec();
                cyc.push(n);
                return Some(cyc);
            }
            Some(2) => return None,
            _ => {}
        }
        state.insert(n, 1);
        path.push(n);
        for m in succ.get(n).into_iter().flatten() {
            if let Some(c) = visit(m, succ, state, path) {
                return Some(c);
            }
        }
        path.pop();
        state.insert(n, 2);
        None
    }
    let mut state = BTreeMap::new();
    for n in succ.keys() {
        let mut path = Vec::new();
        if let Some(cycle) = visit(n, &succ, &mut state, &mut path) {
            let g = kb
                .grammars
                .iter()
                .find(|g| g.hypothesis == cycle[1])
                .map(|g| g.name.clone())
                .unwrap_or_default();
            return Err(KbError::semantic(
                Pos {
                    file: "kb".into(),
                    line: 1,
                    col: 1,
                },
                format!(
                    "cyclic abstraction relation {} (grammar `{g}`)",
                    cycle.join(" < ")
                ),
            ));
        }
    }
    Ok(())
}

/// Linear form `sum(coef * ref) + constant`.
#[derive(Debug, Default, Clone)]
struct Linear {
    terms: BTreeMap<TimeRef, f64>,
    constant: f64,
}

impl Linear {
    fn scale(mut self, k: f64) -> Linear {
        for v in self.terms.values_mut() {
            *v *= k;
        }
        self.constant *= k;
        self
    }

    fn plus(mut self, other: Linear) -> Linear {
        for (r, c) in other.terms {
            *self.terms.entry(r).or_insert(0.0) += c;
        }
        self.constant += other.constant;
        self.terms.retain(|_, c| c.abs() > 1e-12);
        self
    }
}

struct Scope<'a> {
    kb: &'a KnowledgeBase,
    hypothesis: &'a str,
    terminal: Option<&'a str>,
}

impl Scope<'_> {
    fn owner(&self, name: &str, pos: &Pos) -> Result<Owner, KbError> {
        match name {
            "h" => Ok(Owner::Hyp),
            "m" => match self.terminal {
                Some(_) => Ok(Owner::This),
                None => Err(KbError::semantic(
                    pos.clone(),
                    "variable `m` out of scope in a lambda production".into(),
                )),
            },
            "prev" => Ok(Owner::Back(1)),
            _ => {
                if let Some(k) = name
                    .strip_prefix("prev")
                    .and_then(|k| k.parse::<usize>().ok())
                {
                    if k == 0 {
                        return Err(KbError::semantic(
                            pos.clone(),
                            "`prev0` is not a finding".into(),
                        ));
                    }
                    return Ok(Owner::Back(k));
                }
                if self.kb.observable(name).is_none() {
                    return Err(KbError::semantic(
                        pos.clone(),
                        format!("unknown observable `{name}`"),
                    ));
                }
                if Some(name) == self.terminal {
                    Ok(Owner::This)
                } else {
                    Ok(Owner::Named(name.to_string()))
                }
            }
        }
    }

    fn observable_of(&self, owner: &Owner) -> Option<&Observable> {
        match owner {
            Owner::Hyp => self.kb.observable(self.hypothesis),
            Owner::This => self.terminal.and_then(|t| self.kb.observable(t)),
            Owner::Named(q) => self.kb.observable(q),
            Owner::Back(_) => None,
        }
    }

    fn time_ref(&self, r: &RefAst, pos: &Pos) -> Result<Option<TimeRef>, KbError> {
        let owner = self.owner(&r.owner, pos)?;
        let end = match r.field.as_str() {
            "Tb" | "T" => End::Begin,
            "Te" => End::End,
            _ => return Ok(None),
        };
        if r.field == "T" {
            if let Some(q) = self.observable_of(&owner) {
                if !q.instant {
                    return Err(KbError::semantic(
                        pos.clone(),
                        format!(
                            "`{}.T` needs an instantaneous observable; `{}` is not",
                            r.owner, q.id
                        ),
                    ));
                }
            }
        }
        Ok(Some(TimeRef { owner, end }))
    }

    fn attr_arg(&self, r: &RefAst, pos: &Pos) -> Result<ArgTemplate, KbError> {
        if let Some(t) = self.time_ref(r, pos)? {
            return Ok(ArgTemplate::Time(t));
        }
        let owner = self.owner(&r.owner, pos)?;
        if let Some(q) = self.observable_of(&owner) {
            if q.attribute(&r.field).is_none() {
                return Err(KbError::semantic(
                    pos.clone(),
                    format!("`{}` has no attribute `{}`", q.id, r.field),
                ));
            }
        }
        Ok(ArgTemplate::Attr(owner, r.field.clone()))
    }

    fn linear(&self, e: &Expr, pos: &Pos) -> Result<Linear, KbError> {
        Ok(match e {
            Expr::Num(x) => Linear {
                terms: BTreeMap::new(),
                constant: *x,
            },
            Expr::Ref(r) => match self.time_ref(r, pos)? {
                Some(t) => Linear {
                    terms: [(t, 1.0)].into_iter().collect(),
                    constant: 0.0,
                },
                None => {
                    return Err(KbError::semantic(
                        pos.clone(),
                        format!(
                            "attribute `{}.{}` in a temporal constraint; use a `pred`",
                            r.owner, r.field
                        ),
                    ))
                }
            },
            Expr::Neg(a) => self.linear(a, pos)?.scale(-1.0),
            Expr::Add(a, b) => self.linear(a, pos)?.plus(self.linear(b, pos)?),
            Expr::Sub(a, b) => self.linear(a, pos)?.plus(self.linear(b, pos)?.scale(-1.0)),
            Expr::Mul(a, b) => {
                let (la, lb) = (self.linear(a, pos)?, self.linear(b, pos)?);
                if la.terms.is_empty() {
                    lb.scale(la.constant)
                } else if lb.terms.is_empty() {
                    la.scale(lb.constant)
                } else {
                    return Err(KbError::semantic(
                        pos.clone(),
                        "product of two time variables".into(),
                    ));
                }
            }
        })
    }
}

/// Turns `l op r` into `lo <= x - y <= hi`.
fn difference(
    l: Linear,
    op: Cmp,
    r: Linear,
    pos: &Pos,
    text: &str,
) -> Result<Option<(TimeRef, Option<TimeRef>, Time, Time)>, KbError> {
    // Orient the difference after the first positive term as written.
    let first_pos = |e: &Linear| {
        e.terms
            .iter()
            .find(|(_, c)| **c > 0.0)
            .map(|(t, _)| t.clone())
    };
    let preferred = if l.terms.is_empty() {
        first_pos(&r)
    } else {
        first_pos(&l)
    };
    let diff = l.plus(r.scale(-1.0));
    let bad = |msg: &str| KbError::semantic(pos.clone(), format!("{msg} in `{text}`"));
    let terms: Vec<(TimeRef, f64)> = diff.terms.into_iter().collect();
    let (x, y, sign) = match terms.as_slice() {
        [] => {
            let c = diff.constant;
            let holds = match op {
                Cmp::Le => c <= 0.0,
                Cmp::Lt => c < 0.0,
                Cmp::Ge => c >= 0.0,
                Cmp::Gt => c > 0.0,
                Cmp::Eq => c == 0.0,
            };
            return if holds {
                Ok(None)
            } else {
                Err(bad("constant constraint never holds"))
            };
        }
        [(a, ca)] if (ca.abs() - 1.0).abs() < 1e-9 => (a.clone(), None, ca.signum()),
        [(a, ca), (b, cb)] if (ca + cb).abs() < 1e-9 && (ca.abs() - 1.0).abs() < 1e-9 => {
            if preferred.as_ref() == Some(b) {
                (b.clone(), Some(a.clone()), cb.signum())
            } else {
                (a.clone(), Some(b.clone()), ca.signum())
            }
        }
        _ => return Err(bad("not a difference of two time variables")),
    };
    // sign * (x - y) + c  op  0
    let c = diff.constant;
    let bound = (-c * sign).round() as Time;
    let flip = sign < 0.0;
    let (lo, hi) = match (op, flip) {
        (Cmp::Le, false) | (Cmp::Ge, true) => (-crate::temporal::INF, bound),
        (Cmp::Lt, false) | (Cmp::Gt, true) => (-crate::temporal::INF, bound - 1),
        (Cmp::Ge, false) | (Cmp::Le, true) => (bound, crate::temporal::INF),
        (Cmp::Gt, false) | (Cmp::Lt, true) => (bound + 1, crate::temporal::INF),
        (Cmp::Eq, _) => (bound, bound),
    };
    Ok(Some((x, y, lo, hi)))
}

fn compile_grammar(
    kb: &KnowledgeBase,
    g: GrammarAst,
    registry: &Registry,
) -> Result<Grammar, KbError> {
    let (hyp, hpos) = &g.hypothesis;
    if kb.observable(hyp).is_none() {
        return Err(KbError::semantic(
            hpos.clone(),
            format!("unknown observable `{hyp}`"),
        ));
    }
    if let Some((d, dpos)) = &g.detector {
        if !registry.has_detector(d) {
            return Err(KbError::semantic(
                dpos.clone(),
                format!("unknown detector `{d}`"),
            ));
        }
    }
    let start = g.productions[0].lhs.clone();
    let mut nonterminals = vec![start.clone()];
    for p in &g.productions {
        if !nonterminals.contains(&p.lhs) {
            nonterminals.push(p.lhs.clone());
        }
    }
    for p in &g.productions {
        if let Some(r) = &p.rhs {
            if *r == start {
                return Err(KbError::semantic(
                    p.pos.clone(),
                    format!("start symbol `{start}` on a right-hand side"),
                ));
            }
            if !nonterminals.contains(r) {
                return Err(KbError::semantic(
                    p.pos.clone(),
                    format!("nonterminal `{r}` has no productions"),
                ));
            }
        }
    }
    let nt = |s: &str| nonterminals.iter().position(|n| n == s).unwrap();

    let mut productions = Vec::new();
    for p in &g.productions {
        if let Some((t, tpos)) = &p.terminal {
            if kb.observable(t).is_none() {
                return Err(KbError::semantic(
                    tpos.clone(),
                    format!("unknown observable `{t}`"),
                ));
            }
        } else if nt(&p.lhs) == START {
            return Err(KbError::semantic(
                p.pos.clone(),
                "the start symbol cannot derive lambda".into(),
            ));
        }
        let scope = Scope {
            kb,
            hypothesis: hyp,
            terminal: p.terminal.as_ref().map(|(t, _)| t.as_str()),
        };
        let mut role = None;
        let mut theta = None;
        let mut constraints = Vec::new();
        for item in &p.items {
            match item {
                Item::Abstracted | Item::Environment => {
                    let r = if *item == Item::Abstracted {
                        Role::Abstracted
                    } else {
                        Role::Environment
                    };
                    if role.replace(r).is_some() {
                        return Err(KbError::semantic(p.pos.clone(), "role given twice".into()));
                    }
                }
                Item::Theta(name, pos) => {
                    if !registry.has_theta(name) {
                        return Err(KbError::semantic(
                            pos.clone(),
                            format!("unknown observation procedure `{name}`"),
                        ));
                    }
                    theta = Some(name.clone());
                }
                Item::Constraint(ConstraintAst::Pred {
                    name,
                    args,
                    text,
                    pos,
                }) => {
                    if !registry.has_predicate(name) {
                        return Err(KbError::semantic(
                            pos.clone(),
                            format!("unknown predicate `{name}`"),
                        ));
                    }
                    let args = args
                        .iter()
                        .map(|a| match a {
                            PredArgAst::Num(x) => Ok(ArgTemplate::Const(*x)),
                            PredArgAst::Ref(r) => scope.attr_arg(r, pos),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    constraints.push(ConstraintTemplate::Pred {
                        name: name.clone(),
                        args,
                        label: text.clone(),
                    });
                }
                Item::Constraint(ConstraintAst::Compare {
                    exprs,
                    ops,
                    text,
                    pos,
                }) => {
                    let lin: Vec<Linear> = exprs
                        .iter()
                        .map(|e| scope.linear(e, pos))
                        .collect::<Result<_, _>>()?;
                    // Merge a chain like `a <= X - Y <= b` into one template.
                    let mut merged: Vec<(TimeRef, Option<TimeRef>, Time, Time)> = Vec::new();
                    for (i, op) in ops.iter().enumerate() {
                        if let Some((x, y, lo, hi)) =
                            difference(lin[i].clone(), *op, lin[i + 1].clone(), pos, text)?
                        {
                            match merged.iter_mut().find(|m| m.0 == x && m.1 == y) {
                                Some(m) => {
                                    m.2 = m.2.max(lo);
                                    m.3 = m.3.min(hi);
                                }
                                None => merged.push((x, y, lo, hi)),
                            }
                        }
                    }
                    for (x, y, lo, hi) in merged {
                        if lo > hi {
                            return Err(KbError::semantic(
                                pos.clone(),
                                format!("empty bounds in `{text}`"),
                            ));
                        }
                        constraints.push(ConstraintTemplate::Diff {
                            x,
                            y,
                            lo,
                            hi,
                            label: text.clone(),
                        });
                    }
                }
            }
        }
        let role = match (role, &p.terminal) {
            (Some(r), _) => r,
            (None, None) => Role::Abstracted,
            (None, Some(_)) => {
                return Err(KbError::semantic(
                    p.pos.clone(),
                    "production needs `abstracted` or `environment`".into(),
                ))
            }
        };
        let relates = |o: &Owner| matches!(o, Owner::Back(_) | Owner::Named(_));
        let hereafter = p.terminal.is_some()
            && !constraints.iter().any(|c| match c {
                ConstraintTemplate::Diff { x, y: Some(y), .. } => {
                    (x.owner == Owner::This && relates(&y.owner))
                        || (y.owner == Owner::This && relates(&x.owner))
                }
                _ => false,
            });
        productions.push(Production {
            lhs: nt(&p.lhs),
            terminal: p.terminal.as_ref().map(|(t, _)| t.clone()),
            rhs: p.rhs.as_deref().map(nt),
            role,
            theta,
            constraints,
            hereafter,
        });
    }

    let mut salient = Vec::new();
    for (s, spos) in &g.salient {
        if !productions.iter().any(|p| p.terminal.as_deref() == Some(s)) {
            return Err(KbError::semantic(
                spos.clone(),
                format!("salient `{s}` is not a terminal"),
            ));
        }
        salient.push(s.clone());
    }

    // Reachability from the start symbol.
    let mut reach = vec![false; nonterminals.len()];
    reach[START] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for p in &productions {
            if let Some(r) = p.rhs {
                if reach[p.lhs] && !reach[r] {
                    reach[r] = true;
                    changed = true;
                }
            }
        }
    }
    if let Some(i) = reach.iter().position(|r| !r) {
        let p = g
            .productions
            .iter()
            .find(|p| p.lhs == nonterminals[i])
            .unwrap();
        return Err(KbError::semantic(
            p.pos.clone(),
            format!("nonterminal `{}` is unreachable", nonterminals[i]),
        ));
    }

    check_scopes(&nonterminals, &productions, &g)?;

    // A production lies on a cycle when its lhs is reachable from its rhs.
    let reaches = |from: usize, to: usize| {
        let mut seen = vec![false; nonterminals.len()];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(
                productions
                    .iter()
                    .filter(|p| p.lhs == n)
                    .filter_map(|p| p.rhs),
            );
        }
        false
    };
    let periodic = productions
        .iter()
        .filter(|p| p.rhs.is_some_and(|r| reaches(r, p.lhs)))
        .filter_map(|p| p.terminal.clone())
        .collect();

    Ok(Grammar {
        name: g.name,
        hypothesis: hyp.clone(),
        nonterminals,
        productions,
        salient,
        detector: g.detector.map(|d| d.0),
        periodic,
    })
}

/// Every `prevN` and named reference must denote a finding on all
/// derivations that reach the production.
fn check_scopes(
    nonterminals: &[String],
    productions: &[Production],
    g: &GrammarAst,
) -> Result<(), KbError> {
    let n = nonterminals.len();
    let all: BTreeSet<String> = productions
        .iter()
        .filter_map(|p| p.terminal.clone())
        .collect();
    let mut min_len = vec![usize::MAX; n];
    let mut sure: Vec<BTreeSet<String>> = vec![all; n];
    min_len[START] = 0;
    sure[START] = BTreeSet::new();
    let mut changed = true;
    while changed {
        changed = false;
        for p in productions {
            let (Some(r), true) = (p.rhs, min_len[p.lhs] != usize::MAX) else {
                continue;
            };
            let len = min_len[p.lhs] + usize::from(p.terminal.is_some());
            let mut set = sure[p.lhs].clone();
            set.extend(p.terminal.clone());
            if len < min_len[r] {
                min_len[r] = len;
                changed = true;
            }
            let inter: BTreeSet<String> = sure[r].intersection(&set).cloned().collect();
            if inter != sure[r] {
                sure[r] = inter;
                changed = true;
            }
        }
    }
    for (p, ast) in productions.iter().zip(&g.productions) {
        for c in &p.constraints {
            for o in c.owners() {
                let ok = match o {
                    Owner::Back(k) => *k <= min_len[p.lhs],
                    Owner::Named(q) => sure[p.lhs].contains(q),
                    _ => true,
                };
                if !ok {
                    let what = match o {
                        Owner::Back(1) => "prev".to_string(),
                        Owner::Back(k) => format!("prev{k}"),
                        Owner::Named(q) => q.clone(),
                        _ => unreachable!(),
                    };
                    return Err(KbError::semantic(
                        ast.pos.clone(),
                        format!("variable `{what}` out of scope in `{}`", c.label()),
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const G_N: &str = "
observable Pw { process atrial; }
observable QRS { process ventricular; }
observable Tw { process repolarization; }
observable N { process cycle; }
grammar G_N hypothesizes N {
  H -> Pw D { abstracted; h.Tb = m.Tb; 50 <= m.Te - m.Tb <= 120 }
  D -> QRS E { abstracted; 50 <= m.Te - m.Tb <= 150; 100 <= m.Tb - Pw.Tb <= 210 }
  E -> Tw { abstracted; 80 <= m.Tb - QRS.Te <= 120; m.Te - QRS.Tb <= 520; h.Te = m.Te }
}";

    fn reg() -> Registry {
        Registry::with_builtins()
    }

    #[test]
    fn parses_g_n() {
        let kb = KnowledgeBase::parse(G_N, &reg()).unwrap();
        let g = kb.grammar("G_N").unwrap();
        assert_eq!(g.terminals(), ["Pw", "QRS", "Tw"].into_iter().collect());
        assert_eq!(g.productions.len(), 3);
        assert!(!g.productions[1].hereafter);
        assert!(g.periodic.is_empty());
        let ConstraintTemplate::Diff { lo, hi, .. } = &g.productions[1].constraints[1] else {
            panic!()
        };
        assert_eq!((*lo, *hi), (100, 210));
        assert!(kb.in_domain("Pw"));
        assert!(!kb.in_domain("N"));
        assert_eq!(kb.default_k(), 1);
    }

    #[test]
    fn start_on_rhs_rejected() {
        let src = "observable a { process p; } observable b { process p; }
grammar G hypothesizes b { H -> a H { abstracted } }";
        let err = KnowledgeBase::parse(src, &reg()).unwrap_err();
        assert_eq!(err.kind, KbErrorKind::Semantic);
        assert!(err.message.contains("right-hand side"), "{err}");
    }

    #[test]
    fn cyclic_abstraction_rejected() {
        let src = "observable a { process p; } observable b { process p; }
grammar G1 hypothesizes b { H -> a { abstracted } }
grammar G2 hypothesizes a { H -> b { abstracted } }";
        let err = KnowledgeBase::parse(src, &reg()).unwrap_err();
        assert!(err.message.contains("cyclic abstraction"), "{err}");
    }

    #[test]
    fn out_of_scope_reference() {
        let src =
            "observable a { process p; } observable b { process p; } observable c { process p; }
grammar G hypothesizes c { H -> a D { abstracted } D -> b { abstracted; m.Tb - prev2.Te <= 10 } }";
        let err = KnowledgeBase::parse(src, &reg()).unwrap_err();
        assert!(err.message.contains("out of scope"), "{err}");
        let src = src.replace("prev2", "prev");
        KnowledgeBase::parse(&src, &reg()).unwrap();
    }

    #[test]
    fn unknown_observable_reported_with_location() {
        let src =
            "observable a { process p; }\ngrammar G hypothesizes a {\n  H -> zz { abstracted }\n}";
        let err = KnowledgeBase::parse(src, &reg()).unwrap_err();
        assert_eq!(err.pos.line, 3);
        assert!(err.message.contains("unknown observable `zz`"));
    }

    #[test]
    fn strict_and_flipped_comparisons() {
        let src = "observable a { process p; } observable c { process p; }
grammar G hypothesizes c { H -> a D { abstracted; m.Tb > h.Tb; 3 >= h.Te - m.Te } D -> lambda { } }";
        let kb = KnowledgeBase::parse(src, &reg()).unwrap();
        let cs = &kb.grammars[0].productions[0].constraints;
        let ConstraintTemplate::Diff { x, lo, hi, .. } = &cs[0] else {
            panic!()
        };
        assert_eq!(
            (x.owner.clone(), *lo, *hi),
            (Owner::This, 1, crate::temporal::INF)
        );
        let ConstraintTemplate::Diff { x, lo, hi, .. } = &cs[1] else {
            panic!()
        };
        assert_eq!(
            (x.owner.clone(), *lo, *hi),
            (Owner::Hyp, -crate::temporal::INF, 3)
        );
    }
}
