//! Independent check of an interpretation against every invariant.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{ConstraintTemplate, End, Owner, Role};
use crate::interp::{Interpretation, ObsRef, Problem};
use crate::temporal::INF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Injectivity,
    RoleOverlap,
    Specialization,
    Temporal,
    Covering,
    Predicate,
    Periodicity,
    Exclusivity,
    Incomplete,
    CoveringRatio,
    Unintelligible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub hypothesis: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.hypothesis {
            Some(h) => write!(f, "{:?} in {h}: {}", self.kind, self.message),
            None => write!(f, "{:?}: {}", self.kind, self.message),
        }
    }
}

/// Checks that hold for every interpretation the search generates.
pub fn validate(p: &Problem, i: &Interpretation) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |kind, h: Option<String>, message: String| {
        out.push(Violation {
            kind,
            hypothesis: h,
            message,
        })
    };
    for x in &i.hypotheses {
        let name = Some(i.label(p, ObsRef::Hyp(x.id)));
        let used: Vec<ObsRef> = x.matching.values().copied().collect();
        let distinct: BTreeSet<ObsRef> = used.iter().copied().collect();
        if distinct.len() != used.len() {
            v(
                ViolationKind::Injectivity,
                name.clone(),
                "an observation matches two findings".into(),
            );
        }
        let ab = x.matched_with_role(Role::Abstracted);
        let env = x.matched_with_role(Role::Environment);
        if !ab.is_disjoint(&env) {
            v(
                ViolationKind::RoleOverlap,
                name.clone(),
                "observation is both abstracted and environment".into(),
            );
        }
        let mut net = x.state.pattern.network.clone();
        for (&f, &o) in &x.matching {
            let fd = x.finding(f);
            let q = i.observable(p, o);
            if !p.kb.is_a(q, &fd.observable) {
                v(
                    ViolationKind::Specialization,
                    name.clone(),
                    format!("m{f} expects `{}`, got `{q}`", fd.observable),
                );
            }
            let (ob, oe) = i.times(p, o);
            let ok = net.restrict(fd.tb, ob.0, ob.1, "check").is_ok()
                && net.restrict(fd.te, oe.0, oe.1, "check").is_ok();
            if !ok {
                v(
                    ViolationKind::Temporal,
                    name.clone(),
                    format!("{} does not fit the constraints of m{f}", i.label(p, o)),
                );
            }
            if fd.role == Role::Abstracted {
                let (hb, he) = (x.begin(), x.end());
                if ob.1 < hb.0 || oe.0 > he.1 {
                    v(
                        ViolationKind::Covering,
                        name.clone(),
                        format!("{} lies outside the hypothesis", i.label(p, o)),
                    );
                }
            }
        }
        if net.is_consistent() && !net.propagate().is_consistent() {
            v(
                ViolationKind::Temporal,
                name.clone(),
                "constraint network is inconsistent".into(),
            );
        }
        if let Err(r) = i.check_predicates(p, x.id) {
            v(ViolationKind::Predicate, name.clone(), r.label);
        }
        if let Some(why) = periodicity(p, i, x.id) {
            v(ViolationKind::Periodicity, name.clone(), why);
        }
    }
    for a in &i.hypotheses {
        for b in &i.hypotheses {
            if a.id < b.id
                && p.kb.mutually_exclusive(a.observable(), b.observable())
                && !a
                    .matched_with_role(Role::Abstracted)
                    .is_disjoint(&b.matched_with_role(Role::Abstracted))
            {
                v(
                    ViolationKind::Exclusivity,
                    None,
                    format!(
                        "{} and {} share evidence",
                        i.label(p, ObsRef::Hyp(a.id)),
                        i.label(p, ObsRef::Hyp(b.id))
                    ),
                );
            }
        }
    }
    let abstracted: BTreeSet<usize> = i
        .hypotheses
        .iter()
        .flat_map(|h| {
            h.matching
                .iter()
                .filter(|(f, _)| h.finding(**f).role == Role::Abstracted)
                .filter_map(|(_, o)| match o {
                    ObsRef::Initial(k) => Some(*k),
                    ObsRef::Hyp(_) => None,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let domain: Vec<usize> = (0..p.observations.len())
        .filter(|k| !p.pre_abstracted.contains(k) && p.kb.in_domain(&p.observations[*k].observable))
        .collect();
    let expected = if p.kb.grammars.is_empty() {
        0.0
    } else if domain.is_empty() {
        1.0
    } else {
        domain.iter().filter(|k| abstracted.contains(k)).count() as f64 / domain.len() as f64
    };
    if (i.covering_ratio(p) - expected).abs() > 1e-12 {
        v(
            ViolationKind::CoveringRatio,
            None,
            format!("reported {} but counted {expected}", i.covering_ratio(p)),
        );
    }
    let unexplained: BTreeSet<usize> = domain
        .iter()
        .copied()
        .filter(|k| !abstracted.contains(k))
        .collect();
    if i.unintelligible(p) != unexplained {
        v(
            ViolationKind::Unintelligible,
            None,
            "unexplained observations differ from the domain minus the abstracted ones".into(),
        );
    }
    out
}

/// As [`validate`], and every hypothesis must be complete.
pub fn validate_final(p: &Problem, i: &Interpretation) -> Vec<Violation> {
    let mut out = validate(p, i);
    for x in &i.hypotheses {
        if !i.hyp_complete(x.id) {
            out.push(Violation {
                kind: ViolationKind::Incomplete,
                hypothesis: Some(i.label(p, ObsRef::Hyp(x.id))),
                message: "hypothesis is not complete".into(),
            });
        }
    }
    out
}

fn unary_ok(cs: &[ConstraintTemplate], tb: i64, te: i64) -> bool {
    cs.iter().all(|c| {
        let ConstraintTemplate::Diff { x, y, lo, hi, .. } = c else {
            return true;
        };
        if x.owner != Owner::This {
            return true;
        }
        let t = |e: End| if e == End::Begin { tb } else { te };
        let d = match y {
            None => t(x.end),
            Some(y) if y.owner == Owner::This => t(x.end) - t(y.end),
            Some(_) => return true,
        };
        (*lo <= -INF || d >= *lo) && (*hi >= INF || d <= *hi)
    })
}

/// Consecutive same-observable findings skip nothing they could have matched.
fn periodicity(p: &Problem, i: &Interpretation, h: u32) -> Option<String> {
    let x = i.hyp(h);
    let g = &p.kb.grammars[x.grammar];
    let order = x.state.derivation();
    let everything = i.all_observations(p);
    for k in 1..order.len() {
        let fb = x.finding(order[k]);
        let Some(&prev) = order[..k]
            .iter()
            .rev()
            .find(|&&f| x.finding(f).observable == fb.observable)
        else {
            continue;
        };
        let fa = x.finding(prev);
        let (Some(oa), Some(ob)) = (x.matching.get(&fa.id), x.matching.get(&fb.id)) else {
            continue;
        };
        let key = |o: ObsRef| {
            let (b, e) = i.times(p, o);
            (b.0, e.0, i.observable(p, o).to_string())
        };
        let (ka, kb) = (key(*oa), key(*ob));
        let between: Vec<ObsRef> = everything
            .iter()
            .copied()
            .filter(|&o| o != *oa && o != *ob && o != ObsRef::Hyp(h))
            .filter(|&o| ka < key(o) && key(o) < kb)
            .collect();
        if g.periodic.contains(&fa.observable) {
            let cs = &g.productions[fb.production].constraints;
            if let Some(o) = between.iter().find(|&&o| {
                let ko = key(o);
                p.kb.is_a(i.observable(p, o), &fa.observable) && unary_ok(cs, ko.0, ko.1)
            }) {
                return Some(format!("{} skipped", i.label(p, *o)));
            }
        } else {
            let q = i.observable(p, *oa);
            if let Some(o) = between
                .iter()
                .find(|&&o| i.observable(p, o) == q && x.matching.values().any(|m| *m == o))
            {
                return Some(format!("{} skipped", i.label(p, *o)));
            }
        }
    }
    None
}
