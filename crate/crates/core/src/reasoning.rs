//! Reasoning modes that turn an interpretation into its descendants.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grammar::{GenerationState, Role};
use crate::interp::{Focus, Interpretation, ObsRef, Problem, Reject, RejectKind};
use crate::procedures::DetectorInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    Abduce,
    Deduce,
    Subsume,
    Predict,
    Advance,
}

/// What a step changed, for traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Delta {
    Hypothesis {
        hypothesis: String,
        grammar: String,
        production: String,
        evidence: Option<String>,
    },
    Finding {
        hypothesis: String,
        finding: Option<u32>,
        production: String,
    },
    Match {
        hypothesis: String,
        finding: u32,
        observation: String,
    },
    Focus {
        popped: Option<String>,
        pushed: Option<String>,
        set_aside: Option<String>,
    },
}

#[derive(Debug, Clone)]
pub struct Child {
    pub op: Op,
    pub interp: Interpretation,
    pub delta: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub op: Op,
    /// What was attempted, e.g. the candidate observation.
    pub target: String,
    pub cause: Reject,
}

#[derive(Debug, Clone)]
enum Outcome {
    Child(Child),
    Rejected(Rejection),
}

/// Lazily yields the descendants of one interpretation, one reasoning mode
/// at a time.
#[derive(Debug, Clone, Default)]
pub struct Descendants {
    stage: usize,
    queue: VecDeque<Outcome>,
    produced: usize,
    done: bool,
}

impl Descendants {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exhausted(&self) -> bool {
        self.done
    }

    /// Number of children returned so far.
    pub fn produced(&self) -> usize {
        self.produced
    }

    /// Next child and its index among the children of `parent`. Rejected
    /// branches met on the way are handed to `rejected`.
    pub fn next(
        &mut self,
        p: &Problem,
        parent: &Interpretation,
        rejected: &mut dyn FnMut(Rejection),
    ) -> Option<(usize, Child)> {
        loop {
            if let Some(o) = self.queue.pop_front() {
                match o {
                    Outcome::Child(c) => {
                        self.produced += 1;
                        return Some((self.produced - 1, c));
                    }
                    Outcome::Rejected(r) => {
                        rejected(r);
                        continue;
                    }
                }
            }
            if self.done {
                return None;
            }
            let Some(focus) = parent.focus_top() else {
                self.done = true;
                return None;
            };
            let ops: &[Op] = match focus {
                Focus::Obs(_) => &[Op::Deduce, Op::Abduce, Op::Advance],
                Focus::Finding { .. } => &[Op::Subsume, Op::Predict],
            };
            let Some(&op) = ops.get(self.stage) else {
                self.done = true;
                return None;
            };
            self.stage += 1;
            self.queue = expand(p, parent, focus, op).into();
        }
    }
}

/// Every descendant of `i`, in generation order.
pub fn descendants(p: &Problem, i: &Interpretation) -> Vec<Child> {
    let mut d = Descendants::new();
    let mut out = Vec::new();
    while let Some((_, c)) = d.next(p, i, &mut |_| {}) {
        out.push(c);
    }
    out
}

fn expand(p: &Problem, i: &Interpretation, focus: Focus, op: Op) -> Vec<Outcome> {
    match (focus, op) {
        (Focus::Obs(o), Op::Deduce) => deduce(p, i, o),
        (Focus::Obs(o), Op::Abduce) => abduce(p, i, o),
        (Focus::Obs(o), Op::Advance) => advance(p, i, o).into_iter().collect(),
        (Focus::Finding { hyp, finding }, Op::Subsume) => subsume(p, i, hyp, finding),
        (Focus::Finding { hyp, finding }, Op::Predict) => predict(p, i, hyp, finding),
        _ => Vec::new(),
    }
}

fn rejected(op: Op, target: String, cause: Reject) -> Outcome {
    Outcome::Rejected(Rejection { op, target, cause })
}

fn new_finding(before: &GenerationState, after: &GenerationState) -> Option<u32> {
    (after.pattern.findings.len() > before.pattern.findings.len())
        .then(|| after.pattern.findings.last().unwrap().id)
}

fn deduce(p: &Problem, i: &Interpretation, o: ObsRef) -> Vec<Outcome> {
    let ObsRef::Hyp(h) = o else { return Vec::new() };
    let x = i.hyp(h);
    if x.detected {
        return Vec::new();
    }
    let g = &p.kb.grammars[x.grammar];
    let exts = if x.state.begin != crate::grammar::START {
        x.state.extend_back(&p.kb).unwrap_or_default()
    } else {
        x.state.extend_forward(&p.kb)
    };
    let label = i.label(p, o);
    let mut out = Vec::new();
    for e in exts {
        let production = g.production_text(e.production);
        let state = match e.state {
            Ok(s) => s,
            Err(err) => {
                out.push(rejected(Op::Deduce, production, err.into()));
                continue;
            }
        };
        let fid = new_finding(&x.state, &state);
        let mut next = i.clone();
        next.set_state(h, state);
        if let Err(r) = next.settle(p) {
            out.push(rejected(Op::Deduce, production, r));
            continue;
        }
        if let Some(f) = fid {
            next.focus_push(Focus::Finding { hyp: h, finding: f });
        }
        out.push(Outcome::Child(Child {
            op: Op::Deduce,
            interp: next,
            delta: Delta::Finding {
                hypothesis: label.clone(),
                finding: fid,
                production,
            },
        }));
    }
    out
}

fn abduce(p: &Problem, i: &Interpretation, o: ObsRef) -> Vec<Outcome> {
    if let ObsRef::Hyp(h) = o {
        if !i.hyp_complete(h) {
            return Vec::new();
        }
    }
    let q = i.observable(p, o).to_string();
    let label = i.label(p, o);
    let mut out = Vec::new();
    for (gi, g) in p.kb.grammars.iter().enumerate() {
        for (pi, prod) in g.productions.iter().enumerate() {
            let Some(t) = &prod.terminal else { continue };
            if prod.role != Role::Abstracted || !p.kb.is_a(&q, t) {
                continue;
            }
            let text = format!("{}: {}", g.name, g.production_text(pi));
            let Ok(state) = GenerationState::from_abduce(&p.kb, gi, pi) else {
                continue;
            };
            let fid = state.pattern.findings[0].id;
            let mut base = i.clone();
            let h = base.add_hypothesis(gi, state);
            match base.match_finding(p, h, fid, o) {
                Ok(mut next) => {
                    next.focus_pop();
                    next.focus_push(Focus::Obs(ObsRef::Hyp(h)));
                    out.push(Outcome::Child(Child {
                        op: Op::Abduce,
                        delta: Delta::Hypothesis {
                            hypothesis: next.label(p, ObsRef::Hyp(h)),
                            grammar: g.name.clone(),
                            production: g.production_text(pi),
                            evidence: Some(label.clone()),
                        },
                        interp: next,
                    }));
                }
                Err(r) => out.push(rejected(Op::Abduce, text, r)),
            }
        }
    }
    out
}

fn advance(p: &Problem, i: &Interpretation, o: ObsRef) -> Option<Outcome> {
    if let ObsRef::Hyp(h) = o {
        if !i.hyp_complete(h) {
            return None;
        }
    }
    let mut next = i.clone();
    next.focus_pop();
    let mut set_aside = None;
    if let ObsRef::Initial(k) = o {
        if !i.abstracted_initial().contains(&k) {
            next.set_aside.insert(k);
            set_aside = Some(i.label(p, o));
        }
    }
    let refilled = next.focus.is_empty() && next.refill(p);
    let pushed = refilled.then(|| next.focus_label(p, *next.focus.last().unwrap()));
    Some(Outcome::Child(Child {
        op: Op::Advance,
        delta: Delta::Focus {
            popped: Some(i.label(p, o)),
            pushed,
            set_aside,
        },
        interp: next,
    }))
}

fn intersects(a: (i64, i64), b: (i64, i64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

fn subsume(p: &Problem, i: &Interpretation, h: u32, f: u32) -> Vec<Outcome> {
    let x = i.hyp(h);
    let finding = x.finding(f);
    let (wb, we) = (x.domain(finding.tb), x.domain(finding.te));
    let mut out = Vec::new();
    for o in i.all_observations(p) {
        if o == ObsRef::Hyp(h) || !p.kb.is_a(i.observable(p, o), &finding.observable) {
            continue;
        }
        if x.matching.values().any(|m| *m == o) {
            continue;
        }
        if let ObsRef::Hyp(b) = o {
            if i.depends_on(b, h) {
                continue;
            }
        }
        let (ob, oe) = i.times(p, o);
        if !intersects(ob, wb) || !intersects(oe, we) {
            continue;
        }
        let label = i.label(p, o);
        match i.match_finding(p, h, f, o) {
            Ok(mut next) => {
                next.focus_pop();
                out.push(Outcome::Child(Child {
                    op: Op::Subsume,
                    delta: Delta::Match {
                        hypothesis: i.label(p, ObsRef::Hyp(h)),
                        finding: f,
                        observation: label,
                    },
                    interp: next,
                }));
            }
            Err(r) => out.push(rejected(Op::Subsume, label, r)),
        }
    }
    out
}

fn predict(p: &Problem, i: &Interpretation, h: u32, f: u32) -> Vec<Outcome> {
    let x = i.hyp(h);
    let finding = x.finding(f).clone();
    let (wb, we) = (x.domain(finding.tb), x.domain(finding.te));
    let mut out = Vec::new();
    for (gi, g) in p.kb.grammars.iter().enumerate() {
        if !p.kb.is_a(&g.hypothesis, &finding.observable) {
            continue;
        }
        let state = GenerationState::from_predict(&p.kb, gi);
        let push = |next: Interpretation, new: u32, out: &mut Vec<Outcome>| {
            let mut next = next;
            next.focus_pop();
            next.focus_push(Focus::Obs(ObsRef::Hyp(new)));
            out.push(Outcome::Child(Child {
                op: Op::Predict,
                delta: Delta::Hypothesis {
                    hypothesis: next.label(p, ObsRef::Hyp(new)),
                    grammar: g.name.clone(),
                    production: String::new(),
                    evidence: None,
                },
                interp: next,
            }));
        };
        match &g.detector {
            Some(d) => {
                let found = p.registry.run_detector(
                    d,
                    &DetectorInput {
                        observable: &g.hypothesis,
                        begin: wb,
                        end: we,
                        series: p.series.as_ref(),
                    },
                );
                if found.is_empty() {
                    out.push(rejected(
                        Op::Predict,
                        g.name.clone(),
                        Reject::new(
                            RejectKind::Detector,
                            format!("no `{}` in [{}, {}]", g.hypothesis, wb.0, we.1),
                        ),
                    ));
                }
                for det in found {
                    let mut base = i.clone();
                    let new = base.add_hypothesis(gi, state.clone());
                    let r = base
                        .set_detected(p, new, det.t_begin, det.t_end, det.values)
                        .and_then(|_| base.match_finding(p, h, f, ObsRef::Hyp(new)));
                    match r {
                        Ok(next) => push(next, new, &mut out),
                        Err(r) => out.push(rejected(
                            Op::Predict,
                            format!("{} at {}", g.name, det.t_begin),
                            r,
                        )),
                    }
                }
            }
            None => {
                let mut base = i.clone();
                let new = base.add_hypothesis(gi, state);
                match base.match_finding(p, h, f, ObsRef::Hyp(new)) {
                    Ok(next) => push(next, new, &mut out),
                    Err(r) => out.push(rejected(Op::Predict, g.name.clone(), r)),
                }
            }
        }
    }
    out
}
