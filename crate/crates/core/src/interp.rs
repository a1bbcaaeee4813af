//! Interpretations: immutable snapshots of hypotheses, matchings and the
//! focus of attention.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecg::{self, SampleSeries};
use crate::grammar::{
    ConstraintTemplate, End, Finding, GenerationState, KnowledgeBase, Owner, Role,
};
use crate::model::{ModelError, Observation, ObservationSequence, Time, Value};
use crate::procedures::{Evidence, Registry, ThetaInput};
use crate::temporal::{AttrKey, AttrOwner, Inconsistent, PredicateCheck, VarId, INF};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("observation id `{0}` is used twice")]
    DuplicateId(String),
    #[error("observation id `{0}` may not contain `#`")]
    ReservedId(String),
    #[error("`{by}` abstracts unknown observation `{id}`")]
    UnknownAbstracted { by: String, id: String },
}

/// Initial observations, the abstraction model and the optional raw signal.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kb: Arc<KnowledgeBase>,
    pub registry: Arc<Registry>,
    /// Sorted by `obs_less`.
    pub observations: Vec<Observation>,
    /// Initial observations already explained by another initial one.
    pub pre_abstracted: BTreeSet<usize>,
    pub series: Option<SampleSeries>,
    order: Vec<usize>,
    domain: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ProblemOptions {
    /// `(observation id, ids it abstracts)`.
    pub abstracts: Vec<(String, Vec<String>)>,
    pub series: Option<SampleSeries>,
    pub salient: bool,
}

impl Problem {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        registry: Arc<Registry>,
        observations: Vec<Observation>,
        opts: ProblemOptions,
    ) -> Result<Self, ProblemError> {
        let mut seen = BTreeSet::new();
        let mut obs = Vec::with_capacity(observations.len());
        for (i, mut o) in observations.into_iter().enumerate() {
            if o.id.is_empty() {
                o.id = format!("o{i}");
            }
            if o.id.contains('#') {
                return Err(ProblemError::ReservedId(o.id));
            }
            if !seen.insert(o.id.clone()) {
                return Err(ProblemError::DuplicateId(o.id));
            }
            let q = kb
                .observable(&o.observable)
                .ok_or_else(|| ModelError::UnknownObservable(o.observable.clone()))?;
            o.validate(q)?;
            obs.push(o);
        }
        let observations = ObservationSequence::from_observations(obs)?.into_vec();
        let index: BTreeMap<&str, usize> = observations
            .iter()
            .enumerate()
            .map(|(i, o)| (o.id.as_str(), i))
            .collect();
        let mut pre_abstracted = BTreeSet::new();
        for (by, ids) in &opts.abstracts {
            if !index.contains_key(by.as_str()) {
                return Err(ProblemError::UnknownAbstracted {
                    by: by.clone(),
                    id: by.clone(),
                });
            }
            for id in ids {
                let i = index
                    .get(id.as_str())
                    .ok_or_else(|| ProblemError::UnknownAbstracted {
                        by: by.clone(),
                        id: id.clone(),
                    })?;
                pre_abstracted.insert(*i);
            }
        }
        let domain: BTreeSet<usize> = (0..observations.len())
            .filter(|i| !pre_abstracted.contains(i) && kb.in_domain(&observations[*i].observable))
            .collect();
        let mut order: Vec<usize> = domain.iter().copied().collect();
        if opts.salient {
            let salient: BTreeSet<&str> = kb
                .grammars
                .iter()
                .flat_map(|g| g.salient.iter().map(String::as_str))
                .collect();
            let points: Vec<Time> = opts
                .series
                .as_ref()
                .map(|s| {
                    ecg::detect_salient(s, None, ecg::DEFAULT_REFRACTORY)
                        .into_iter()
                        .map(|p| p.t)
                        .collect()
                })
                .unwrap_or_default();
            let near = |o: &Observation| {
                points.iter().any(|&t| {
                    o.t_begin - ecg::DEFAULT_REFRACTORY / 2 <= t
                        && t <= o.t_end + ecg::DEFAULT_REFRACTORY / 2
                })
            };
            order.sort_by_key(|&i| {
                let o = &observations[i];
                (
                    !salient.iter().any(|s| kb.is_a(&o.observable, s)),
                    !near(o),
                    i,
                )
            });
        }
        Ok(Problem {
            kb,
            registry,
            observations,
            pre_abstracted,
            series: opts.series,
            order,
            domain,
        })
    }

    /// Initial observations that some grammar can abstract, minus the
    /// pre-abstracted ones.
    pub fn domain(&self) -> &BTreeSet<usize> {
        &self.domain
    }

    /// Order in which unexplained observations enter the focus.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.observations.iter().position(|o| o.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsRef {
    Initial(usize),
    Hyp(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Obs(ObsRef),
    Finding { hyp: u32, finding: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: u32,
    pub grammar: usize,
    pub state: GenerationState,
    /// Finding id to matched observation.
    pub matching: BTreeMap<u32, ObsRef>,
    pub values: BTreeMap<String, Value>,
    pub theta_done: bool,
    /// Created by a detector from the raw signal.
    pub detected: bool,
}

impl Hypothesis {
    pub fn observable(&self) -> &str {
        &self.state.pattern.hypothesis
    }

    pub fn finding(&self, f: u32) -> &Finding {
        &self.state.pattern.findings[f as usize]
    }

    pub fn begin(&self) -> (Time, Time) {
        self.state.pattern.network.domain(self.state.pattern.tb)
    }

    pub fn end(&self) -> (Time, Time) {
        self.state.pattern.network.domain(self.state.pattern.te)
    }

    pub fn domain(&self, v: VarId) -> (Time, Time) {
        self.state.pattern.network.domain(v)
    }

    /// Structure closed at the start symbol with every finding matched.
    pub fn saturated(&self) -> bool {
        self.detected
            || (self.state.is_complete()
                && self
                    .state
                    .pattern
                    .findings
                    .iter()
                    .all(|f| self.matching.contains_key(&f.id)))
    }

    pub fn matched_with_role(&self, role: Role) -> BTreeSet<ObsRef> {
        self.matching
            .iter()
            .filter(|(f, _)| self.finding(**f).role == role)
            .map(|(_, o)| *o)
            .collect()
    }
}

/// Why a branch was not generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    Constraint,
    Predicate,
    Injectivity,
    Periodicity,
    Covering,
    Exclusivity,
    Cycle,
    Theta,
    Detector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{kind:?}: {label}")]
pub struct Reject {
    pub kind: RejectKind,
    pub label: String,
}

impl Reject {
    pub fn new(kind: RejectKind, label: impl Into<String>) -> Self {
        Reject {
            kind,
            label: label.into(),
        }
    }
}

impl From<Inconsistent> for Reject {
    fn from(e: Inconsistent) -> Self {
        let kind = if e.label == "covering" {
            RejectKind::Covering
        } else {
            RejectKind::Constraint
        };
        Reject {
            kind,
            label: e.label,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub hypotheses: Vec<Arc<Hypothesis>>,
    /// Top of the stack is the last element.
    pub focus: Vec<Focus>,
    /// Initial observations popped without an explanation.
    pub set_aside: BTreeSet<usize>,
    /// Initial observations that have entered the focus through a refill.
    pub visited: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Heuristic {
    /// Abstractable initial observations not yet abstracted.
    pub uncovered: usize,
    /// Number of hypotheses.
    pub complexity: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSets {
    pub abstracted_by: BTreeSet<ObsRef>,
    pub environment_of: BTreeSet<ObsRef>,
    pub evidence_of: BTreeSet<ObsRef>,
}

impl fmt::Display for ObsRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObsRef::Initial(i) => write!(f, "o[{i}]"),
            ObsRef::Hyp(h) => write!(f, "h[{h}]"),
        }
    }
}

/// Key used to order observations, guessed ones by their earliest times.
pub(crate) type TimeKey<'a> = (Time, Time, &'a str);

impl Interpretation {
    /// The trivial interpretation with the first unexplained observation in focus.
    pub fn initial(p: &Problem) -> Self {
        let mut i = Interpretation::default();
        i.refill(p);
        i
    }

    pub fn hyp(&self, h: u32) -> &Hypothesis {
        &self.hypotheses[h as usize]
    }

    fn hyp_mut(&mut self, h: u32) -> &mut Hypothesis {
        Arc::make_mut(&mut self.hypotheses[h as usize])
    }

    pub fn focus_top(&self) -> Option<Focus> {
        self.focus.last().copied()
    }

    pub fn focus_push(&mut self, f: Focus) {
        self.focus.push(f);
    }

    pub fn focus_pop(&mut self) -> Option<Focus> {
        self.focus.pop()
    }

    /// Pushes the next unexplained, unvisited initial observation.
    pub(crate) fn refill(&mut self, p: &Problem) -> bool {
        let abstracted = self.abstracted_initial();
        let next = p
            .order()
            .iter()
            .copied()
            .find(|i| !self.visited.contains(i) && !abstracted.contains(i));
        match next {
            Some(i) => {
                self.visited.insert(i);
                self.focus.push(Focus::Obs(ObsRef::Initial(i)));
                true
            }
            None => false,
        }
    }

    pub fn observable<'a>(&'a self, p: &'a Problem, o: ObsRef) -> &'a str {
        match o {
            ObsRef::Initial(i) => &p.observations[i].observable,
            ObsRef::Hyp(h) => self.hyp(h).observable(),
        }
    }

    /// Begin and end domains; initial observations have point domains.
    pub fn times(&self, p: &Problem, o: ObsRef) -> ((Time, Time), (Time, Time)) {
        match o {
            ObsRef::Initial(i) => {
                let x = &p.observations[i];
                ((x.t_begin, x.t_begin), (x.t_end, x.t_end))
            }
            ObsRef::Hyp(h) => {
                let h = self.hyp(h);
                (h.begin(), h.end())
            }
        }
    }

    pub fn label(&self, p: &Problem, o: ObsRef) -> String {
        match o {
            ObsRef::Initial(i) => p.observations[i].id.clone(),
            ObsRef::Hyp(h) => format!("{}#{h}", self.hyp(h).observable()),
        }
    }

    pub fn focus_label(&self, p: &Problem, f: Focus) -> String {
        match f {
            Focus::Obs(o) => self.label(p, o),
            Focus::Finding { hyp, finding } => {
                format!(
                    "{}#{hyp}.m{finding}:{}",
                    self.hyp(hyp).observable(),
                    self.hyp(hyp).finding(finding).observable
                )
            }
        }
    }

    pub(crate) fn time_key<'a>(&'a self, p: &'a Problem, o: ObsRef) -> TimeKey<'a> {
        let (b, e) = self.times(p, o);
        (b.0, e.0, self.observable(p, o))
    }

    pub fn values<'a>(&'a self, p: &'a Problem, o: ObsRef) -> &'a BTreeMap<String, Value> {
        match o {
            ObsRef::Initial(i) => &p.observations[i].values,
            ObsRef::Hyp(h) => &self.hyp(h).values,
        }
    }

    /// Every observation of the interpretation: initial ones and hypotheses.
    pub fn all_observations(&self, p: &Problem) -> Vec<ObsRef> {
        (0..p.observations.len())
            .map(ObsRef::Initial)
            .chain((0..self.hypotheses.len() as u32).map(ObsRef::Hyp))
            .collect()
    }

    pub fn evidence_sets(&self, h: u32) -> EvidenceSets {
        let h = self.hyp(h);
        let abstracted_by = h.matched_with_role(Role::Abstracted);
        let environment_of = h.matched_with_role(Role::Environment);
        let evidence_of = abstracted_by.union(&environment_of).copied().collect();
        EvidenceSets {
            abstracted_by,
            environment_of,
            evidence_of,
        }
    }

    /// Union over all hypotheses.
    pub fn global_evidence(&self) -> EvidenceSets {
        let mut out = EvidenceSets::default();
        for h in 0..self.hypotheses.len() as u32 {
            let e = self.evidence_sets(h);
            out.abstracted_by.extend(e.abstracted_by);
            out.environment_of.extend(e.environment_of);
            out.evidence_of.extend(e.evidence_of);
        }
        out
    }

    pub fn abstracted_initial(&self) -> BTreeSet<usize> {
        self.hypotheses
            .iter()
            .flat_map(|h| h.matched_with_role(Role::Abstracted))
            .filter_map(|o| match o {
                ObsRef::Initial(i) => Some(i),
                ObsRef::Hyp(_) => None,
            })
            .collect()
    }

    pub fn heuristic(&self, p: &Problem) -> Heuristic {
        let abstracted = self.abstracted_initial();
        Heuristic {
            uncovered: p
                .domain()
                .iter()
                .filter(|i| !abstracted.contains(i))
                .count(),
            complexity: self.hypotheses.len(),
        }
    }

    pub fn covering_ratio(&self, p: &Problem) -> f64 {
        covering_ratio(p, &self.abstracted_initial())
    }

    /// Observations of the domain that no hypothesis abstracts.
    pub fn unintelligible(&self, p: &Problem) -> BTreeSet<usize> {
        let abstracted = self.abstracted_initial();
        p.domain().difference(&abstracted).copied().collect()
    }

    /// Every hypothesis is complete.
    pub fn well_formed(&self) -> bool {
        (0..self.hypotheses.len() as u32).all(|h| self.hyp_complete(h))
    }

    pub fn hyp_complete(&self, h: u32) -> bool {
        let x = self.hyp(h);
        x.saturated() && (x.detected || x.theta_done || x.state.pattern.theta.is_none())
    }

    pub fn is_goal(&self, p: &Problem) -> bool {
        !p.kb.grammars.is_empty() && self.heuristic(p).uncovered == 0 && self.well_formed()
    }

    /// Hypotheses `h` depends on through matched guessed observations, transitively.
    pub fn depends_on(&self, h: u32, other: u32) -> bool {
        let mut stack = vec![h];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            if x == other {
                return true;
            }
            if !seen.insert(x) {
                continue;
            }
            for o in self.hyp(x).matching.values() {
                if let ObsRef::Hyp(y) = o {
                    stack.push(*y);
                }
            }
        }
        false
    }

    /// Adds a hypothesis and returns its id.
    pub(crate) fn add_hypothesis(&mut self, grammar: usize, state: GenerationState) -> u32 {
        let id = self.hypotheses.len() as u32;
        self.hypotheses.push(Arc::new(Hypothesis {
            id,
            grammar,
            state,
            matching: BTreeMap::new(),
            values: BTreeMap::new(),
            theta_done: false,
            detected: false,
        }));
        id
    }

    pub(crate) fn set_state(&mut self, h: u32, state: GenerationState) {
        self.hyp_mut(h).state = state;
    }

    pub(crate) fn set_detected(
        &mut self,
        p: &Problem,
        h: u32,
        t_begin: Time,
        t_end: Time,
        values: BTreeMap<String, Value>,
    ) -> Result<(), Reject> {
        check_values(p, self.hyp(h).observable(), &values)?;
        let x = self.hyp_mut(h);
        let (tb, te) = (x.state.pattern.tb, x.state.pattern.te);
        x.state.pattern.network.bind(tb, t_begin, "detection")?;
        x.state.pattern.network.bind(te, t_end, "detection")?;
        x.values = values;
        x.detected = true;
        x.theta_done = true;
        Ok(())
    }

    /// Sets `finding <- o` in hypothesis `h` and restores every invariant, or
    /// explains why that is impossible.
    pub fn match_finding(
        &self,
        p: &Problem,
        h: u32,
        f: u32,
        o: ObsRef,
    ) -> Result<Interpretation, Reject> {
        let x = self.hyp(h);
        let finding = x.finding(f).clone();
        if x.matching.contains_key(&f) {
            return Err(Reject::new(
                RejectKind::Injectivity,
                format!("finding m{f} already matched"),
            ));
        }
        let q = self.observable(p, o);
        if !p.kb.is_a(q, &finding.observable) {
            return Err(Reject::new(
                RejectKind::Constraint,
                format!("`{q}` is not a `{}`", finding.observable),
            ));
        }
        if x.matching.values().any(|m| *m == o) {
            return Err(Reject::new(
                RejectKind::Injectivity,
                format!("{} already matched in hypothesis {h}", self.label(p, o)),
            ));
        }
        if let ObsRef::Hyp(b) = o {
            if b == h || self.depends_on(b, h) {
                return Err(Reject::new(
                    RejectKind::Cycle,
                    format!("{} depends on hypothesis {h}", self.label(p, o)),
                ));
            }
        }
        let mut next = self.clone();
        {
            let (ob, oe) = self.times(p, o);
            let y = next.hyp_mut(h);
            y.matching.insert(f, o);
            let net = &mut y.state.pattern.network;
            net.restrict(finding.tb, ob.0, ob.1, "match")?;
            net.restrict(finding.te, oe.0, oe.1, "match")?;
        }
        if let Some(why) = periodicity_breach(p, &next, h) {
            return Err(Reject::new(RejectKind::Periodicity, why));
        }
        next.settle(p)?;
        for other in 0..next.hypotheses.len() as u32 {
            if other != h && next.check_alternative(p, h, other) {
                return Err(Reject::new(
                    RejectKind::Exclusivity,
                    format!(
                        "{} and {} share abstracted evidence",
                        next.label(p, ObsRef::Hyp(h)),
                        next.label(p, ObsRef::Hyp(other))
                    ),
                ));
            }
        }
        Ok(next)
    }

    /// Mutually exclusive observables with shared abstracted evidence.
    pub fn check_alternative(&self, p: &Problem, a: u32, b: u32) -> bool {
        let (x, y) = (self.hyp(a), self.hyp(b));
        p.kb.mutually_exclusive(x.observable(), y.observable())
            && !x
                .matched_with_role(Role::Abstracted)
                .is_disjoint(&y.matched_with_role(Role::Abstracted))
    }

    /// Propagates between linked hypotheses and applies observation
    /// procedures until nothing changes, then checks every predicate.
    pub(crate) fn settle(&mut self, p: &Problem) -> Result<(), Reject> {
        loop {
            let mut changed = false;
            for h in 0..self.hypotheses.len() as u32 {
                let links: Vec<(u32, u32)> = self
                    .hyp(h)
                    .matching
                    .iter()
                    .filter_map(|(f, o)| match o {
                        ObsRef::Hyp(b) => Some((*f, *b)),
                        ObsRef::Initial(_) => None,
                    })
                    .collect();
                for (f, b) in links {
                    let finding = self.hyp(h).finding(f).clone();
                    let (bb, be) = (self.hyp(b).begin(), self.hyp(b).end());
                    let (fb, fe) = (
                        self.hyp(h).domain(finding.tb),
                        self.hyp(h).domain(finding.te),
                    );
                    if fb != bb || fe != be {
                        let y = self.hyp_mut(h);
                        let net = &mut y.state.pattern.network;
                        changed |= net.restrict(finding.tb, bb.0, bb.1, "link")?;
                        changed |= net.restrict(finding.te, be.0, be.1, "link")?;
                        let (fb, fe) = (y.domain(finding.tb), y.domain(finding.te));
                        let z = self.hyp_mut(b);
                        let (tb, te) = (z.state.pattern.tb, z.state.pattern.te);
                        let net = &mut z.state.pattern.network;
                        changed |= net.restrict(tb, fb.0, fb.1, "link")?;
                        changed |= net.restrict(te, fe.0, fe.1, "link")?;
                    }
                }
            }
            for h in 0..self.hypotheses.len() as u32 {
                if self.theta_ready(h) {
                    self.apply_theta(p, h)?;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for h in 0..self.hypotheses.len() as u32 {
            self.check_predicates(p, h)?;
        }
        Ok(())
    }

    fn theta_ready(&self, h: u32) -> bool {
        let x = self.hyp(h);
        !x.theta_done
            && x.state.pattern.theta.is_some()
            && x.saturated()
            && x.matching.values().all(|o| match o {
                ObsRef::Hyp(b) => self.hyp_complete(*b),
                ObsRef::Initial(_) => true,
            })
    }

    fn apply_theta(&mut self, p: &Problem, h: u32) -> Result<(), Reject> {
        let x = self.hyp(h);
        let name = x.state.pattern.theta.clone().expect("ready");
        let evidence: Vec<Evidence> = x
            .state
            .derivation()
            .into_iter()
            .map(|f| {
                let o = x.matching[&f];
                let (b, e) = self.times(p, o);
                Evidence {
                    observable: x.finding(f).observable.clone(),
                    role: x.finding(f).role,
                    t_begin: b.0,
                    t_end: e.0,
                    values: self.values(p, o).clone(),
                }
            })
            .collect();
        let out = p
            .registry
            .run_theta(
                &name,
                &ThetaInput {
                    hypothesis: x.observable(),
                    evidence: &evidence,
                    series: p.series.as_ref(),
                },
            )
            .map_err(|e| Reject::new(RejectKind::Theta, format!("{name}: {e}")))?;
        check_values(p, x.observable(), &out.values)?;
        let y = self.hyp_mut(h);
        let (tb, te) = (y.state.pattern.tb, y.state.pattern.te);
        let net = &mut y.state.pattern.network;
        if let Some(t) = out.t_begin {
            net.bind(tb, t, &name)
                .map_err(|e| Reject::new(RejectKind::Theta, e.label))?;
        }
        if let Some(t) = out.t_end {
            net.bind(te, t, &name)
                .map_err(|e| Reject::new(RejectKind::Theta, e.label))?;
        }
        y.values = out.values;
        y.theta_done = true;
        Ok(())
    }

    /// Value of an attribute variable, if known.
    pub fn attr_value(&self, p: &Problem, h: u32, key: &AttrKey) -> Option<Value> {
        let x = self.hyp(h);
        match key.owner {
            AttrOwner::Hypothesis => x.values.get(&key.name).cloned(),
            AttrOwner::Finding(f) => {
                let o = x.matching.get(&f)?;
                self.values(p, *o).get(&key.name).cloned()
            }
        }
    }

    pub fn check_predicates(&self, p: &Problem, h: u32) -> Result<(), Reject> {
        let x = self.hyp(h);
        let eval = p.registry.evaluator(p.series.as_ref());
        let lookup = |k: &AttrKey| self.attr_value(p, h, k);
        match x.state.pattern.network.check_predicates(&lookup, &eval) {
            Ok(PredicateCheck::Satisfied) => Ok(()),
            Ok(PredicateCheck::Violated(v)) => {
                Err(Reject::new(RejectKind::Predicate, v.join("; ")))
            }
            Err(e) => Err(Reject::new(RejectKind::Predicate, e.to_string())),
        }
    }
}

fn check_values(
    p: &Problem,
    observable: &str,
    values: &BTreeMap<String, Value>,
) -> Result<(), Reject> {
    let q = p.kb.observable(observable).ok_or_else(|| {
        Reject::new(
            RejectKind::Theta,
            format!("unknown observable `{observable}`"),
        )
    })?;
    for (k, v) in values {
        match q.attribute(k) {
            Some(a) if a.domain.contains(v) => {}
            Some(_) => {
                return Err(Reject::new(
                    RejectKind::Theta,
                    format!("{observable}.{k} = {v} outside its domain"),
                ))
            }
            None => {
                return Err(Reject::new(
                    RejectKind::Theta,
                    format!("`{observable}` has no attribute `{k}`"),
                ))
            }
        }
    }
    Ok(())
}

pub fn covering_ratio(p: &Problem, abstracted: &BTreeSet<usize>) -> f64 {
    if p.kb.grammars.is_empty() {
        return 0.0;
    }
    let n = p.domain().len();
    if n == 0 {
        log::info!("no abstractable observations; covering ratio is vacuously 1");
        return 1.0;
    }
    let k = p.domain().iter().filter(|i| abstracted.contains(i)).count();
    k as f64 / n as f64
}

fn key_cmp(a: &TimeKey<'_>, b: &TimeKey<'_>) -> Ordering {
    a.cmp(b)
}

/// Checks the unary constraints of a production against given times.
fn satisfies_own(constraints: &[ConstraintTemplate], tb: Time, te: Time) -> bool {
    let at = |e: End| if e == End::Begin { tb } else { te };
    constraints.iter().all(|c| match c {
        ConstraintTemplate::Diff { x, y, lo, hi, .. } if x.owner == Owner::This => {
            let v = match y {
                None => at(x.end),
                Some(y) if y.owner == Owner::This => at(x.end) - at(y.end),
                Some(_) => return true,
            };
            (*lo <= -INF || v >= *lo) && (*hi >= INF || v <= *hi)
        }
        _ => true,
    })
}

/// Each finding paired with the closest earlier one of the same observable.
pub fn same_observable_pairs<'a>(
    order: &[u32],
    observable: impl Fn(u32) -> &'a String,
) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (k, &b) in order.iter().enumerate() {
        if let Some(&a) = order[..k]
            .iter()
            .rev()
            .find(|&&a| observable(a) == observable(b))
        {
            out.push((a, b));
        }
    }
    out
}

/// Consecutive findings of one observable must be matched to consecutive
/// observations. On a repeating part of the grammar, no observation that
/// could have been matched may lie between them. Elsewhere, the successor
/// of a matched observation cannot be skipped if the hypothesis already
/// uses it.
pub fn periodicity_breach(p: &Problem, i: &Interpretation, h: u32) -> Option<String> {
    let x = i.hyp(h);
    let g = &p.kb.grammars[x.grammar];
    for (a, b) in same_observable_pairs(&x.state.derivation(), |f| &x.finding(f).observable) {
        let (fa, fb) = (x.finding(a), x.finding(b));
        let (Some(&oa), Some(&ob)) = (x.matching.get(&fa.id), x.matching.get(&fb.id)) else {
            continue;
        };
        let (ka, kb) = (i.time_key(p, oa), i.time_key(p, ob));
        if g.periodic.contains(&fa.observable) {
            let own = &g.productions[fb.production].constraints;
            for o in i.all_observations(p) {
                if o == oa
                    || o == ob
                    || o == ObsRef::Hyp(h)
                    || !p.kb.is_a(i.observable(p, o), &fa.observable)
                {
                    continue;
                }
                let k = i.time_key(p, o);
                if key_cmp(&ka, &k) == Ordering::Less
                    && key_cmp(&k, &kb) == Ordering::Less
                    && satisfies_own(own, k.0, k.1)
                {
                    return Some(format!(
                        "{} lies between {} and {}",
                        i.label(p, o),
                        i.label(p, oa),
                        i.label(p, ob)
                    ));
                }
            }
        } else {
            let q = i.observable(p, oa);
            let succ = i
                .all_observations(p)
                .into_iter()
                .filter(|&o| o != oa && o != ObsRef::Hyp(h) && i.observable(p, o) == q)
                .filter(|&o| key_cmp(&ka, &i.time_key(p, o)) == Ordering::Less)
                .min_by(|&a, &b| key_cmp(&i.time_key(p, a), &i.time_key(p, b)));
            if let Some(s) = succ {
                if s != ob && x.matching.values().any(|m| *m == s) {
                    return Some(format!(
                        "{} skips {}, which the hypothesis already uses",
                        i.label(p, ob),
                        i.label(p, s)
                    ));
                }
            }
        }
    }
    None
}
