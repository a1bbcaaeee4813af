//! Serializable summaries of interpretations and explanations of traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grammar::Role;
use crate::interp::{Interpretation, ObsRef, Problem};
use crate::model::{Time, Value};
use crate::reasoning::Rejection;
use crate::search::{SearchResult, Stats, Trace, TraceNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingReport {
    pub id: u32,
    pub observable: String,
    pub role: Role,
    pub t_begin: (Time, Time),
    pub t_end: (Time, Time),
    pub matched: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub id: String,
    pub observable: String,
    pub grammar: String,
    pub t_begin: (Time, Time),
    pub t_end: (Time, Time),
    pub values: BTreeMap<String, Value>,
    pub complete: bool,
    pub detected: bool,
    pub productions: Vec<String>,
    pub findings: Vec<FindingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub covering_ratio: f64,
    pub uncovered: usize,
    pub complexity: usize,
    pub goal: bool,
    pub truncated: bool,
    /// Child indices from the initial interpretation; replaying them
    /// regenerates this interpretation.
    pub path: Vec<usize>,
    pub hypotheses: Vec<HypothesisReport>,
    pub unintelligible: Vec<String>,
    pub stats: Option<Stats>,
}

impl Report {
    pub fn describe(p: &Problem, i: &Interpretation) -> Self {
        let e = i.heuristic(p);
        let hypotheses = i
            .hypotheses
            .iter()
            .map(|h| {
                let g = &p.kb.grammars[h.grammar];
                let findings = h
                    .state
                    .derivation()
                    .into_iter()
                    .map(|f| {
                        let fd = h.finding(f);
                        FindingReport {
                            id: f,
                            observable: fd.observable.clone(),
                            role: fd.role,
                            t_begin: h.domain(fd.tb),
                            t_end: h.domain(fd.te),
                            matched: h.matching.get(&f).map(|o| i.label(p, *o)),
                        }
                    })
                    .collect();
                HypothesisReport {
                    id: i.label(p, ObsRef::Hyp(h.id)),
                    observable: h.observable().to_string(),
                    grammar: g.name.clone(),
                    t_begin: h.begin(),
                    t_end: h.end(),
                    values: h.values.clone(),
                    complete: i.hyp_complete(h.id),
                    detected: h.detected,
                    productions: h
                        .state
                        .productions()
                        .into_iter()
                        .map(|k| g.production_text(k))
                        .collect(),
                    findings,
                }
            })
            .collect();
        Report {
            covering_ratio: i.covering_ratio(p),
            uncovered: e.uncovered,
            complexity: e.complexity,
            goal: i.is_goal(p),
            truncated: false,
            path: Vec::new(),
            hypotheses,
            unintelligible: i
                .unintelligible(p)
                .into_iter()
                .map(|k| p.observations[k].id.clone())
                .collect(),
            stats: None,
        }
    }

    pub fn from_result(p: &Problem, r: &SearchResult) -> Self {
        Report {
            goal: r.goal,
            truncated: r.truncated,
            path: r.path(),
            stats: Some(r.stats.clone()),
            ..Report::describe(p, &r.best)
        }
    }

    /// Same hypotheses, matchings and coverage, ignoring search bookkeeping.
    pub fn same_interpretation(&self, other: &Report) -> bool {
        self.hypotheses == other.hypotheses
            && self.unintelligible == other.unintelligible
            && self.covering_ratio == other.covering_ratio
    }
}

/// The steps leading from the initial interpretation to node `id`.
pub fn explain(t: &Trace, id: usize) -> Option<Vec<&TraceNode>> {
    t.node(id)?;
    Some(
        t.ancestry(id)
            .into_iter()
            .skip(1)
            .map(|n| &t.nodes[n])
            .collect(),
    )
}

/// One human-readable line for a trace node.
pub fn node_line(t: &Trace, id: usize) -> String {
    let n = &t.nodes[id];
    let op =
        n.op.map(|o| format!("{o:?}").to_uppercase())
            .unwrap_or_else(|| "START".into());
    let delta = n
        .delta
        .as_ref()
        .map(|d| serde_json::to_string(d).unwrap_or_default())
        .unwrap_or_default();
    format!(
        "I{id} {op} eps=({}, {}) cov={:.3} focus=[{}] {delta}",
        n.uncovered,
        n.complexity,
        n.covering_ratio,
        n.focus.join(", ")
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alternative {
    /// A child of `parent` other than the one on the path.
    Sibling {
        parent: usize,
        chosen: usize,
        node: usize,
        verdict: String,
    },
    Rejected {
        parent: usize,
        #[serde(flatten)]
        rejection: Rejection,
    },
}

impl Alternative {
    pub fn describe(&self, t: &Trace) -> String {
        match self {
            Alternative::Sibling {
                parent,
                chosen,
                node,
                verdict,
            } => format!(
                "from I{parent}: sibling {} ({verdict}) vs I{chosen}",
                node_line(t, *node)
            ),
            Alternative::Rejected { parent, rejection } => format!(
                "from I{parent}: {:?} {} rejected, {:?}: {}",
                rejection.op, rejection.target, rejection.cause.kind, rejection.cause.label
            ),
        }
    }
}

/// Alternatives met along the derivation of `id`: siblings that were
/// generated but not followed, and branches rejected outright.
pub fn why_not(t: &Trace, id: usize) -> Option<Vec<Alternative>> {
    t.node(id)?;
    let chain = t.ancestry(id);
    let mut out = Vec::new();
    let rejected = |parent: usize, out: &mut Vec<Alternative>| {
        for r in t.rejections.iter().filter(|r| r.parent == parent) {
            out.push(Alternative::Rejected {
                parent,
                rejection: r.rejection.clone(),
            });
        }
    };
    for w in chain.windows(2) {
        let (parent, chosen) = (w[0], w[1]);
        let c = &t.nodes[chosen];
        for s in t
            .nodes
            .iter()
            .filter(|n| n.parent == Some(parent) && n.id != chosen)
        {
            let verdict = match (s.uncovered, s.complexity).cmp(&(c.uncovered, c.complexity)) {
                std::cmp::Ordering::Less => "better heuristic, not pursued to a solution",
                std::cmp::Ordering::Equal => "equal heuristic, generated later or abandoned",
                std::cmp::Ordering::Greater => "worse heuristic than the chosen step",
            };
            out.push(Alternative::Sibling {
                parent,
                chosen,
                node: s.id,
                verdict: verdict.into(),
            });
        }
        rejected(parent, &mut out);
    }
    rejected(id, &mut out);
    Some(out)
}
