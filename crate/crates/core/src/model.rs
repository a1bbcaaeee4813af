//! Observables, observations and the relations between them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds.
pub type Time = i64;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),
    #[error("duplicate observable `{0}`")]
    DuplicateObservable(String),
    #[error("duplicate attribute `{attr}` in observable `{observable}`")]
    DuplicateAttribute { observable: String, attr: String },
    #[error("is_a cycle through `{0}`")]
    IsACycle(String),
    #[error("`{specific}` cannot specialize `{general}`: {reason}")]
    BadGeneralization {
        specific: String,
        general: String,
        reason: String,
    },
    #[error("observation `{0}` is not in the sequence")]
    NotInSequence(String),
    #[error("observation `{new}` overlaps `{existing}` of the same observable")]
    Overlap { new: String, existing: String },
    #[error("observation `{id}`: {reason}")]
    InvalidObservation { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Label(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Label(_) => None,
        }
    }

    /// Numbers and booleans are recognised, anything else is a label.
    pub fn parse(text: &str) -> Value {
        let t = text.trim();
        match t {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => t
                .parse::<f64>()
                .map(Value::Num)
                .unwrap_or_else(|_| Value::Label(t.to_string())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Num(x) => write!(f, "{x}"),
            Value::Label(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Real {
        lo: Option<f64>,
        hi: Option<f64>,
        unit: Option<String>,
    },
    Labels(BTreeSet<String>),
    Bool,
    Any,
}

impl Domain {
    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Domain::Any, _) => true,
            (Domain::Bool, Value::Bool(_)) => true,
            (Domain::Labels(set), Value::Label(l)) => set.contains(l),
            (Domain::Real { lo, hi, .. }, Value::Num(x)) => {
                lo.is_none_or(|lo| *x >= lo) && hi.is_none_or(|hi| *x <= hi)
            }
            _ => false,
        }
    }

    /// True when every value of `other` is also a value of `self`.
    pub fn includes(&self, other: &Domain) -> bool {
        match (self, other) {
            (Domain::Any, _) => true,
            (_, Domain::Any) => false,
            (Domain::Bool, Domain::Bool) => true,
            (Domain::Labels(a), Domain::Labels(b)) => b.is_subset(a),
            (Domain::Real { lo: l1, hi: h1, .. }, Domain::Real { lo: l2, hi: h2, .. }) => {
                let lo_ok = match (l1, l2) {
                    (None, _) => true,
                    (Some(_), None) => false,
                    (Some(a), Some(b)) => b >= a,
                };
                let hi_ok = match (h1, h2) {
                    (None, _) => true,
                    (Some(_), None) => false,
                    (Some(a), Some(b)) => b <= a,
                };
                lo_ok && hi_ok
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub id: String,
    pub process: String,
    pub attributes: Vec<Attribute>,
    pub instant: bool,
}

impl Observable {
    pub fn new(id: &str, process: &str) -> Self {
        Observable {
            id: id.to_string(),
            process: process.to_string(),
            attributes: Vec::new(),
            instant: false,
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: String,
    pub observable: String,
    #[serde(default)]
    pub values: BTreeMap<String, Value>,
    pub t_begin: Time,
    pub t_end: Time,
}

impl Observation {
    pub fn new(id: &str, observable: &str, t_begin: Time, t_end: Time) -> Self {
        Observation {
            id: id.to_string(),
            observable: observable.to_string(),
            values: BTreeMap::new(),
            t_begin,
            t_end,
        }
    }

    pub fn instant(id: &str, observable: &str, t: Time) -> Self {
        Self::new(id, observable, t, t)
    }

    pub fn with(mut self, attr: &str, v: Value) -> Self {
        self.values.insert(attr.to_string(), v);
        self
    }

    /// Checks the invariants of an observation against its observable.
    pub fn validate(&self, q: &Observable) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidObservation {
            id: self.id.clone(),
            reason,
        };
        if self.t_begin > self.t_end {
            return Err(bad(format!(
                "t_begin {} after t_end {}",
                self.t_begin, self.t_end
            )));
        }
        if q.instant && self.t_begin != self.t_end {
            return Err(bad(format!("`{}` is instantaneous", q.id)));
        }
        for (name, v) in &self.values {
            let attr = q
                .attribute(name)
                .ok_or_else(|| bad(format!("`{}` has no attribute `{name}`", q.id)))?;
            if !attr.domain.contains(v) {
                return Err(bad(format!("value {v} outside the domain of `{name}`")));
            }
        }
        Ok(())
    }
}

/// Begin time, then end time, then observable name.
pub fn obs_cmp(a: &Observation, b: &Observation) -> Ordering {
    a.t_begin
        .cmp(&b.t_begin)
        .then(a.t_end.cmp(&b.t_end))
        .then_with(|| a.observable.cmp(&b.observable))
}

pub fn obs_less(a: &Observation, b: &Observation) -> bool {
    obs_cmp(a, b) == Ordering::Less
}

/// Generalization and exclusion between observables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RelationTable {
    known: BTreeSet<String>,
    declared_is_a: BTreeSet<(String, String)>,
    is_a: BTreeSet<(String, String)>,
    declared_excludes: BTreeSet<(String, String)>,
    excludes: BTreeSet<(String, String)>,
}

impl RelationTable {
    /// Validates the declarations and materializes both closures.
    pub fn build(
        observables: &[Observable],
        is_a: &[(String, String)],
        excludes: &[(String, String)],
    ) -> Result<Self, ModelError> {
        let by_id: BTreeMap<&str, &Observable> =
            observables.iter().map(|q| (q.id.as_str(), q)).collect();
        let known: BTreeSet<String> = by_id.keys().map(|s| s.to_string()).collect();
        let check = |id: &String| {
            if known.contains(id) {
                Ok(())
            } else {
                Err(ModelError::UnknownObservable(id.clone()))
            }
        };
        for (a, b) in is_a.iter().chain(excludes) {
            check(a)?;
            check(b)?;
        }

        for (spec, gen) in is_a {
            let s = by_id[spec.as_str()];
            let g = by_id[gen.as_str()];
            for ga in &g.attributes {
                let Some(sa) = s.attribute(&ga.name) else {
                    return Err(ModelError::BadGeneralization {
                        specific: spec.clone(),
                        general: gen.clone(),
                        reason: format!("missing attribute `{}`", ga.name),
                    });
                };
                if !ga.domain.includes(&sa.domain) {
                    return Err(ModelError::BadGeneralization {
                        specific: spec.clone(),
                        general: gen.clone(),
                        reason: format!("domain of `{}` is wider", ga.name),
                    });
                }
            }
        }

        let declared_is_a: BTreeSet<_> = is_a.iter().cloned().collect();
        let mut closure = declared_is_a.clone();
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
        if let Some((a, _)) = closure.iter().find(|(a, b)| a == b) {
            return Err(ModelError::IsACycle(a.clone()));
        }

        let mut declared_excludes = BTreeSet::new();
        for (a, b) in excludes {
            declared_excludes.insert((a.clone(), b.clone()));
            declared_excludes.insert((b.clone(), a.clone()));
        }
        // Symmetric and transitive: every pair of distinct members of a
        // connected component.
        let mut component: BTreeMap<String, usize> = BTreeMap::new();
        let mut groups: Vec<BTreeSet<String>> = Vec::new();
        for (a, b) in excludes {
            let ca = component.get(a).copied();
            let cb = component.get(b).copied();
            match (ca, cb) {
                (None, None) => {
                    groups.push([a.clone(), b.clone()].into_iter().collect());
                    component.insert(a.clone(), groups.len() - 1);
                    component.insert(b.clone(), groups.len() - 1);
                }
                (Some(c), None) => {
                    groups[c].insert(b.clone());
                    component.insert(b.clone(), c);
                }
                (None, Some(c)) => {
                    groups[c].insert(a.clone());
                    component.insert(a.clone(), c);
                }
                (Some(c1), Some(c2)) if c1 != c2 => {
                    let moved = std::mem::take(&mut groups[c2]);
                    for m in &moved {
                        component.insert(m.clone(), c1);
                    }
                    groups[c1].extend(moved);
                }
                _ => {}
            }
        }
        let mut excl = BTreeSet::new();
        for g in &groups {
            for a in g {
                for b in g {
                    if a != b {
                        excl.insert((a.clone(), b.clone()));
                    }
                }
            }
        }
        if excl.len() > declared_excludes.len() {
            log::warn!(
                "exclusion closure adds {} pairs beyond the declared ones",
                (excl.len() - declared_excludes.len()) / 2
            );
        }

        Ok(RelationTable {
            known,
            declared_is_a,
            is_a: closure,
            declared_excludes,
            excludes: excl,
        })
    }

    /// Reflexive, transitive generalization test.
    pub fn is_a(&self, specific: &str, general: &str) -> bool {
        specific == general
            || self
                .is_a
                .contains(&(specific.to_string(), general.to_string()))
    }

    pub fn mutually_exclusive(&self, q1: &str, q2: &str) -> Result<bool, ModelError> {
        for q in [q1, q2] {
            if !self.known.contains(q) {
                return Err(ModelError::UnknownObservable(q.to_string()));
            }
        }
        Ok(self.excludes.contains(&(q1.to_string(), q2.to_string())))
    }

    pub fn declared_is_a(&self) -> impl Iterator<Item = &(String, String)> {
        self.declared_is_a.iter()
    }

    pub fn exclusion_closure(&self) -> impl Iterator<Item = &(String, String)> {
        self.excludes.iter()
    }

    /// Number of closure pairs that were not declared (each unordered pair once).
    pub fn derived_exclusions(&self) -> usize {
        (self.excludes.len() - self.declared_excludes.len()) / 2
    }
}

/// Observations kept sorted, with an index per observable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSequence {
    items: Vec<Observation>,
    by_observable: BTreeMap<String, Vec<usize>>,
}

impl ObservationSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_observations(obs: Vec<Observation>) -> Result<Self, ModelError> {
        let mut seq = Self::new();
        for o in obs {
            seq.insert(o)?;
        }
        Ok(seq)
    }

    /// Inserts in order; rejects overlap with an observation of the same observable.
    pub fn insert(&mut self, o: Observation) -> Result<usize, ModelError> {
        if let Some(idx) = self.by_observable.get(&o.observable) {
            for &i in idx {
                let e = &self.items[i];
                if e.t_begin <= o.t_end && o.t_begin <= e.t_end {
                    return Err(ModelError::Overlap {
                        new: o.id.clone(),
                        existing: e.id.clone(),
                    });
                }
            }
        }
        let pos = self
            .items
            .partition_point(|e| obs_cmp(e, &o) != Ordering::Greater);
        self.items.insert(pos, o);
        self.reindex();
        Ok(pos)
    }

    fn reindex(&mut self) {
        self.by_observable.clear();
        for (i, o) in self.items.iter().enumerate() {
            self.by_observable
                .entry(o.observable.clone())
                .or_default()
                .push(i);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Observation> {
        self.items.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.items.iter()
    }

    pub fn as_slice(&self) -> &[Observation] {
        &self.items
    }

    pub fn into_vec(self) -> Vec<Observation> {
        self.items
    }

    /// Positions of the observations of `q`, in order.
    pub fn q_sequence(&self, q: &str) -> &[usize] {
        self.by_observable.get(q).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn position(&self, o: &Observation) -> Option<usize> {
        self.items.iter().position(|e| e == o)
    }

    pub fn q_succ(&self, o: &Observation) -> Result<Option<&Observation>, ModelError> {
        let i = self
            .position(o)
            .ok_or_else(|| ModelError::NotInSequence(o.id.clone()))?;
        let qs = self.q_sequence(&o.observable);
        let k = qs.iter().position(|&j| j == i).expect("indexed");
        Ok(qs.get(k + 1).map(|&j| &self.items[j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str) -> Observable {
        Observable::new(id, "p")
    }

    #[test]
    fn obs_less_examples() {
        let a = Observation::new("x", "a", 1, 5);
        assert!(obs_less(&a, &Observation::new("y", "a", 2, 3)));
        assert!(obs_less(&a, &Observation::new("y", "b", 1, 5)));
        assert!(!obs_less(&a, &a.clone()));
        assert!(obs_less(
            &Observation::new("p", "Pw", 300, 403),
            &Observation::new("w", "wave", 300, 403)
        ));
    }

    #[test]
    fn q_succ_skips_other_observables() {
        let seq = ObservationSequence::from_observations(vec![
            Observation::new("p1", "P", 0, 80),
            Observation::new("r1", "QRS", 100, 180),
            Observation::new("p2", "P", 800, 880),
            Observation::new("r2", "QRS", 900, 980),
        ])
        .unwrap();
        let r1 = seq.get(1).unwrap().clone();
        assert_eq!(seq.q_succ(&r1).unwrap().unwrap().id, "r2");
        let r2 = seq.get(3).unwrap().clone();
        assert_eq!(seq.q_succ(&r2).unwrap(), None);
        let stranger = Observation::new("z", "QRS", 5000, 5001);
        assert!(seq.q_succ(&stranger).is_err());
    }

    #[test]
    fn overlap_rejected() {
        let mut seq = ObservationSequence::new();
        seq.insert(Observation::new("a", "QRS", 100, 200)).unwrap();
        let err = seq
            .insert(Observation::new("b", "QRS", 200, 300))
            .unwrap_err();
        assert!(matches!(err, ModelError::Overlap { .. }));
        seq.insert(Observation::new("c", "P", 150, 250)).unwrap();
    }

    #[test]
    fn exclusion_closure() {
        let qs: Vec<_> = ["a", "b", "c", "d"].iter().map(|s| q(s)).collect();
        let rel = RelationTable::build(
            &qs,
            &[],
            &[("a".into(), "b".into()), ("b".into(), "c".into())],
        )
        .unwrap();
        assert!(rel.mutually_exclusive("b", "a").unwrap());
        assert!(rel.mutually_exclusive("a", "c").unwrap());
        assert!(!rel.mutually_exclusive("a", "d").unwrap());
        assert!(!rel.mutually_exclusive("a", "a").unwrap());
        assert_eq!(rel.derived_exclusions(), 1);
        assert!(rel.mutually_exclusive("a", "zz").is_err());
    }

    #[test]
    fn is_a_checks_attributes() {
        let mut beat = q("beat");
        beat.attributes.push(Attribute {
            name: "rr".into(),
            domain: Domain::Real {
                lo: Some(0.0),
                hi: Some(3000.0),
                unit: Some("ms".into()),
            },
        });
        let mut n = q("N");
        n.attributes.push(Attribute {
            name: "rr".into(),
            domain: Domain::Real {
                lo: Some(300.0),
                hi: Some(2000.0),
                unit: Some("ms".into()),
            },
        });
        let bare = q("V");
        let ok = RelationTable::build(
            &[beat.clone(), n.clone(), bare.clone()],
            &[("N".into(), "beat".into())],
            &[],
        )
        .unwrap();
        assert!(ok.is_a("N", "beat"));
        assert!(!ok.is_a("beat", "N"));
        let err = RelationTable::build(&[beat, n, bare], &[("V".into(), "beat".into())], &[]);
        assert!(matches!(err, Err(ModelError::BadGeneralization { .. })));
    }

    #[test]
    fn is_a_cycle_rejected() {
        let qs: Vec<_> = ["a", "b"].iter().map(|s| q(s)).collect();
        let err = RelationTable::build(
            &qs,
            &[("a".into(), "b".into()), ("b".into(), "a".into())],
            &[],
        );
        assert!(matches!(err, Err(ModelError::IsACycle(_))));
    }
}
