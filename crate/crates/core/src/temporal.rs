//! Simple temporal networks over integer milliseconds.
//!
//! Variable 0 is the time origin. `d[i][j]` is the tightest known upper
//! bound on `x_j - x_i`; the domain of `x` is `[-d[x][0], d[0][x]]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Time, Value};

/// Stands for an unbounded distance. Kept well below `i64::MAX` so that
/// sums of two bounds never overflow before saturation.
pub const INF: Time = i64::MAX / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

pub const ORIGIN: VarId = VarId(0);

fn add(a: Time, b: Time) -> Time {
    if a >= INF || b >= INF {
        INF
    } else {
        (a + b).clamp(-INF, INF)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("inconsistent: {label}")]
pub struct Inconsistent {
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

impl Consistency {
    pub fn is_consistent(self) -> bool {
        self == Consistency::Consistent
    }
}

/// `lo <= x - y <= hi`, with `-INF`/`INF` for open ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferenceConstraint {
    pub x: VarId,
    pub y: VarId,
    pub lo: Time,
    pub hi: Time,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrOwner {
    Hypothesis,
    Finding(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttrKey {
    pub owner: AttrOwner,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredArg {
    Time(VarId),
    Attr(AttrKey),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateConstraint {
    pub name: String,
    pub args: Vec<PredArg>,
    pub label: String,
}

/// Resolves predicate names to evaluators.
pub trait PredicateEval {
    fn eval(&self, name: &str, args: &[Value]) -> Result<bool, UnknownPredicate>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown predicate `{0}`")]
pub struct UnknownPredicate(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateCheck {
    Satisfied,
    Violated(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalNetwork {
    names: Vec<String>,
    d: Vec<Vec<Time>>,
    constraints: Vec<DifferenceConstraint>,
    predicates: Vec<PredicateConstraint>,
    consistent: bool,
}

impl Default for TemporalNetwork {
    fn default() -> Self {
        Self::new()
    }
}

impl TemporalNetwork {
    pub fn new() -> Self {
        TemporalNetwork {
            names: vec!["0".to_string()],
            d: vec![vec![0]],
            constraints: Vec::new(),
            predicates: Vec::new(),
            consistent: true,
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>) -> VarId {
        let n = self.d.len();
        for row in &mut self.d {
            row.push(INF);
        }
        let mut row = vec![INF; n + 1];
        row[n] = 0;
        self.d.push(row);
        self.names.push(name.into());
        VarId(n)
    }

    pub fn len(&self) -> usize {
        self.d.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v.0]
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn constraints(&self) -> &[DifferenceConstraint] {
        &self.constraints
    }

    pub fn predicates(&self) -> &[PredicateConstraint] {
        &self.predicates
    }

    /// Current `[lo, hi]`; open ends are `-INF`/`INF`.
    pub fn domain(&self, v: VarId) -> (Time, Time) {
        let hi = self.d[0][v.0];
        let lo = self.d[v.0][0];
        (if lo >= INF { -INF } else { -lo }, hi)
    }

    pub fn value(&self, v: VarId) -> Option<Time> {
        let (lo, hi) = self.domain(v);
        (lo == hi).then_some(lo)
    }

    /// Upper bound on `y - x`.
    pub fn distance(&self, x: VarId, y: VarId) -> Time {
        self.d[x.0][y.0]
    }

    /// Adds `lo <= x - y <= hi` and restores minimality incrementally.
    pub fn add_constraint(
        &mut self,
        x: VarId,
        y: VarId,
        lo: Time,
        hi: Time,
        label: impl Into<String>,
    ) -> Result<(), Inconsistent> {
        let label = label.into();
        if !self.consistent {
            return Err(Inconsistent { label });
        }
        self.constraints.push(DifferenceConstraint {
            x,
            y,
            lo,
            hi,
            label: label.clone(),
        });
        let ok = lo <= hi && self.tighten(y, x, hi) && self.tighten(x, y, lo.saturating_neg());
        if ok {
            Ok(())
        } else {
            self.consistent = false;
            Err(Inconsistent { label })
        }
    }

    /// `x_j - x_i <= w`. Returns false on a negative cycle.
    fn tighten(&mut self, i: VarId, j: VarId, w: Time) -> bool {
        let (i, j) = (i.0, j.0);
        if w >= INF || w >= self.d[i][j] {
            return true;
        }
        if add(self.d[j][i], w) < 0 {
            return false;
        }
        let n = self.d.len();
        let into_i: Vec<Time> = (0..n).map(|a| self.d[a][i]).collect();
        let from_j = self.d[j].clone();
        for (a, &ai) in into_i.iter().enumerate() {
            if ai >= INF {
                continue;
            }
            let via = add(ai, w);
            let row = &mut self.d[a];
            for (b, &jb) in from_j.iter().enumerate() {
                let cand = add(via, jb);
                if cand < row[b] {
                    row[b] = cand;
                }
            }
        }
        true
    }

    pub fn bind(&mut self, v: VarId, value: Time, label: &str) -> Result<(), Inconsistent> {
        let (lo, hi) = self.domain(v);
        if value < lo || value > hi {
            self.consistent = false;
            return Err(Inconsistent {
                label: format!(
                    "{label}: {} = {value} outside [{lo}, {hi}]",
                    self.names[v.0]
                ),
            });
        }
        self.add_constraint(v, ORIGIN, value, value, label)
    }

    /// Narrows a domain to `[lo, hi]`; returns whether anything changed.
    pub fn restrict(
        &mut self,
        v: VarId,
        lo: Time,
        hi: Time,
        label: &str,
    ) -> Result<bool, Inconsistent> {
        let before = self.domain(v);
        let lo_c = if lo <= -INF { -INF } else { lo.max(before.0) };
        let hi_c = hi.min(before.1);
        if (lo_c, hi_c) == before {
            return Ok(false);
        }
        self.add_constraint(v, ORIGIN, lo_c, hi_c, label)?;
        Ok(true)
    }

    /// Recomputes every distance from the constraint list (Floyd-Warshall).
    pub fn propagate(&mut self) -> Consistency {
        let n = self.d.len();
        let mut d = vec![vec![INF; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for c in &self.constraints {
            if c.lo > c.hi {
                self.consistent = false;
                return Consistency::Inconsistent;
            }
            let (x, y) = (c.x.0, c.y.0);
            d[y][x] = d[y][x].min(c.hi);
            if c.lo > -INF {
                d[x][y] = d[x][y].min(-c.lo);
            }
        }
        for k in 0..n {
            for i in 0..n {
                let ik = d[i][k];
                if ik >= INF {
                    continue;
                }
                for j in 0..n {
                    let cand = add(ik, d[k][j]);
                    if cand < d[i][j] {
                        d[i][j] = cand;
                    }
                }
            }
        }
        self.consistent = (0..n).all(|i| d[i][i] >= 0);
        self.d = d;
        if self.consistent {
            Consistency::Consistent
        } else {
            Consistency::Inconsistent
        }
    }

    pub fn add_predicate(&mut self, p: PredicateConstraint) {
        self.predicates.push(p);
    }

    /// Evaluates the predicates whose arguments are all bound or valued.
    pub fn check_predicates(
        &self,
        assignment: &dyn Fn(&AttrKey) -> Option<Value>,
        eval: &dyn PredicateEval,
    ) -> Result<PredicateCheck, UnknownPredicate> {
        let mut violated = Vec::new();
        for p in &self.predicates {
            let Some(args) = self.predicate_args(p, assignment) else {
                continue;
            };
            if !eval.eval(&p.name, &args)? {
                violated.push(p.label.clone());
            }
        }
        Ok(if violated.is_empty() {
            PredicateCheck::Satisfied
        } else {
            PredicateCheck::Violated(violated)
        })
    }

    /// Argument values if every argument is known.
    pub fn predicate_args(
        &self,
        p: &PredicateConstraint,
        assignment: &dyn Fn(&AttrKey) -> Option<Value>,
    ) -> Option<Vec<Value>> {
        p.args
            .iter()
            .map(|a| match a {
                PredArg::Time(v) => self.value(*v).map(|t| Value::Num(t as f64)),
                PredArg::Attr(k) => assignment(k),
                PredArg::Const(c) => Some(Value::Num(*c)),
            })
            .collect()
    }

    /// Per-variable `[lo, hi]` pairs, for traces and reports.
    pub fn domains(&self) -> Vec<(String, Time, Time)> {
        (1..self.d.len())
            .map(|i| {
                let (lo, hi) = self.domain(VarId(i));
                (self.names[i].clone(), lo, hi)
            })
            .collect()
    }
}

impl fmt::Display for TemporalNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, lo, hi) in self.domains() {
            let show = |t: Time| {
                if t <= -INF {
                    "-inf".to_string()
                } else if t >= INF {
                    "inf".to_string()
                } else {
                    t.to_string()
                }
            };
            writeln!(f, "{name} in [{}, {}]", show(lo), show(hi))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pw_qrs_window() {
        let mut n = TemporalNetwork::new();
        let pw = n.add_variable("Pw.Tb");
        let qrs = n.add_variable("QRS.Tb");
        n.bind(pw, 300, "pw").unwrap();
        n.add_constraint(qrs, pw, 100, 210, "pr").unwrap();
        assert_eq!(n.domain(qrs), (400, 510));
    }

    #[test]
    fn negative_cycle() {
        let mut n = TemporalNetwork::new();
        let x = n.add_variable("x");
        let y = n.add_variable("y");
        n.add_constraint(x, y, 1, 2, "a").unwrap();
        assert!(n.add_constraint(y, x, 1, 2, "b").is_err());
        assert!(!n.is_consistent());
        assert_eq!(n.propagate(), Consistency::Inconsistent);
    }

    #[test]
    fn empty_network() {
        let mut n = TemporalNetwork::new();
        assert_eq!(n.propagate(), Consistency::Consistent);
        assert!(n.domains().is_empty());
    }

    #[test]
    fn bind_outside_domain() {
        let mut n = TemporalNetwork::new();
        let x = n.add_variable("x");
        n.restrict(x, 0, 10, "dom").unwrap();
        assert!(n.bind(x, 11, "obs").is_err());
    }

    #[test]
    fn restrict_reports_change() {
        let mut n = TemporalNetwork::new();
        let x = n.add_variable("x");
        assert!(n.restrict(x, 0, 10, "a").unwrap());
        assert!(!n.restrict(x, -5, 20, "b").unwrap());
        assert!(n.restrict(x, 2, 20, "c").unwrap());
        assert_eq!(n.domain(x), (2, 10));
    }

    struct Ge;
    impl PredicateEval for Ge {
        fn eval(&self, name: &str, args: &[Value]) -> Result<bool, UnknownPredicate> {
            match name {
                "ge" => Ok(args[0].as_f64() >= args[1].as_f64()),
                _ => Err(UnknownPredicate(name.into())),
            }
        }
    }

    #[test]
    fn predicates_skip_unbound() {
        let mut n = TemporalNetwork::new();
        let x = n.add_variable("x");
        let key = AttrKey {
            owner: AttrOwner::Finding(0),
            name: "a".into(),
        };
        n.add_predicate(PredicateConstraint {
            name: "ge".into(),
            args: vec![PredArg::Attr(key.clone()), PredArg::Const(20.0)],
            label: "c8".into(),
        });
        n.add_predicate(PredicateConstraint {
            name: "ge".into(),
            args: vec![PredArg::Time(x), PredArg::Const(0.0)],
            label: "t".into(),
        });
        let forty = |_: &AttrKey| Some(Value::Num(40.0));
        assert_eq!(
            n.check_predicates(&forty, &Ge).unwrap(),
            PredicateCheck::Satisfied
        );
        let ten = |_: &AttrKey| Some(Value::Num(10.0));
        assert_eq!(
            n.check_predicates(&ten, &Ge).unwrap(),
            PredicateCheck::Violated(vec!["c8".into()])
        );
        n.bind(x, -3, "x").unwrap();
        let none = |_: &AttrKey| None;
        assert_eq!(
            n.check_predicates(&none, &Ge).unwrap(),
            PredicateCheck::Violated(vec!["t".into()])
        );
        n.add_predicate(PredicateConstraint {
            name: "nope".into(),
            args: vec![],
            label: "u".into(),
        });
        assert!(n.check_predicates(&none, &Ge).is_err());
    }
}
