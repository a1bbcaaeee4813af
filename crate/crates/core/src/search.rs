//! Best-first search over the interpretation space.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::interp::{Heuristic, Interpretation, Problem};
use crate::reasoning::{Delta, Descendants, Op, Rejection};

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Nodes expanded per iteration; `None` uses the KB default.
    pub k: Option<usize>,
    pub max_nodes: usize,
    pub time_budget: Option<Duration>,
    /// Record rejected branches in the trace.
    pub record_rejections: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: None,
            max_nodes: 1_000_000,
            time_budget: None,
            record_rejections: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub op: Option<Op>,
    /// Index among the children of the parent.
    pub index: usize,
    pub focus: Vec<String>,
    pub uncovered: usize,
    pub complexity: usize,
    pub covering_ratio: f64,
    pub delta: Option<Delta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRejection {
    pub parent: usize,
    #[serde(flatten)]
    pub rejection: Rejection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub nodes: Vec<TraceNode>,
    pub rejections: Vec<TraceRejection>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TraceLine {
    Node(TraceNode),
    Rejection(TraceRejection),
}

impl Trace {
    /// One JSON record per line, nodes first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let nodes = self.nodes.iter().cloned().map(TraceLine::Node);
        let rejections = self.rejections.iter().cloned().map(TraceLine::Rejection);
        for l in nodes.chain(rejections) {
            out.push_str(&serde_json::to_string(&l).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let mut t = Trace::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                TraceLine::Node(n) => t.nodes.push(n),
                TraceLine::Rejection(r) => t.rejections.push(r),
            }
        }
        Ok(t)
    }

    pub fn node(&self, id: usize) -> Option<&TraceNode> {
        self.nodes.get(id)
    }

    /// Ids from the root to `id`.
    pub fn ancestry(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Child indices leading from the root to `id`.
    pub fn path(&self, id: usize) -> Vec<usize> {
        self.ancestry(id)
            .into_iter()
            .skip(1)
            .map(|n| self.nodes[n].index)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub generated: usize,
    pub expansions: usize,
    pub closed: usize,
    pub max_open: usize,
    pub elapsed_ms: u128,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Interpretation,
    pub best_id: usize,
    pub goal: bool,
    pub truncated: bool,
    pub trace: Trace,
    pub stats: Stats,
}

impl SearchResult {
    pub fn path(&self) -> Vec<usize> {
        self.trace.path(self.best_id)
    }
}

struct Node {
    interp: Interpretation,
    cursor: Descendants,
}

fn record(
    p: &Problem,
    i: &Interpretation,
    id: usize,
    parent: Option<usize>,
    op: Option<Op>,
    index: usize,
    delta: Option<Delta>,
) -> TraceNode {
    let e = i.heuristic(p);
    TraceNode {
        id,
        parent,
        op,
        index,
        focus: i.focus.iter().map(|f| i.focus_label(p, *f)).collect(),
        uncovered: e.uncovered,
        complexity: e.complexity,
        covering_ratio: i.covering_ratio(p),
        delta,
    }
}

pub fn construe(p: &Problem, cfg: &SearchConfig) -> SearchResult {
    construe_observed(p, cfg, &mut |_, _| {})
}

/// As [`construe`], handing every generated interpretation to `observe`.
pub fn construe_observed(
    p: &Problem,
    cfg: &SearchConfig,
    observe: &mut dyn FnMut(usize, &Interpretation),
) -> SearchResult {
    let start = Instant::now();
    let k = cfg.k.unwrap_or_else(|| p.kb.default_k());
    let root = Interpretation::initial(p);
    observe(0, &root);
    let mut trace = Trace {
        nodes: vec![record(p, &root, 0, None, None, 0, None)],
        rejections: Vec::new(),
    };
    let mut stats = Stats {
        generated: 1,
        k,
        ..Stats::default()
    };
    let finish = |best: Interpretation, best_id, goal, truncated, trace, mut stats: Stats| {
        stats.elapsed_ms = start.elapsed().as_millis();
        SearchResult {
            best,
            best_id,
            goal,
            truncated,
            trace,
            stats,
        }
    };
    if k == 0 || root.is_goal(p) {
        let goal = root.is_goal(p);
        return finish(root, 0, goal, false, trace, stats);
    }

    let mut nodes: Vec<Option<Node>> = vec![Some(Node {
        interp: root,
        cursor: Descendants::new(),
    })];
    let mut best_closed: Option<(Heuristic, usize)> = None;
    let mut open: BTreeMap<(Heuristic, usize), ()> = BTreeMap::new();
    let h0 = nodes[0].as_ref().unwrap().interp.heuristic(p);
    open.insert((h0, 0), ());
    let mut truncated = false;

    'search: while !open.is_empty() {
        let batch: Vec<(Heuristic, usize)> = open.keys().take(k).copied().collect();
        for key in batch {
            if stats.generated >= cfg.max_nodes
                || cfg.time_budget.is_some_and(|b| start.elapsed() >= b)
            {
                truncated = true;
                break 'search;
            }
            let id = key.1;
            stats.expansions += 1;
            let node = nodes[id].as_mut().expect("open node");
            let parent_id = id;
            let mut rejections = Vec::new();
            let next = node.cursor.next(p, &node.interp, &mut |r| {
                if cfg.record_rejections {
                    rejections.push(TraceRejection {
                        parent: parent_id,
                        rejection: r,
                    })
                }
            });
            trace.rejections.extend(rejections);
            match next {
                None => {
                    open.remove(&key);
                    stats.closed += 1;
                    let keep = node.interp.well_formed() && best_closed.is_none_or(|b| key < b);
                    if keep {
                        node.cursor = Descendants::new();
                        if let Some(b) = best_closed.replace(key) {
                            nodes[b.1] = None;
                        }
                    } else {
                        nodes[id] = None;
                    }
                }
                Some((index, child)) => {
                    let cid = nodes.len();
                    trace.nodes.push(record(
                        p,
                        &child.interp,
                        cid,
                        Some(id),
                        Some(child.op),
                        index,
                        Some(child.delta),
                    ));
                    observe(cid, &child.interp);
                    stats.generated += 1;
                    if child.interp.is_goal(p) {
                        stats.max_open = stats.max_open.max(open.len());
                        return finish(child.interp, cid, true, false, trace, stats);
                    }
                    let h = child.interp.heuristic(p);
                    nodes.push(Some(Node {
                        interp: child.interp,
                        cursor: Descendants::new(),
                    }));
                    open.insert((h, cid), ());
                }
            }
        }
        stats.max_open = stats.max_open.max(open.len());
    }

    let mut pool: Vec<usize> = best_closed.map(|b| b.1).into_iter().collect();
    if truncated {
        pool.extend(open.keys().map(|k| k.1));
    }
    let best_id = pool
        .into_iter()
        .filter(|&i| nodes[i].as_ref().is_some_and(|n| n.interp.well_formed()))
        .min_by_key(|&i| (nodes[i].as_ref().unwrap().interp.heuristic(p), i))
        .unwrap_or(0);
    let best = nodes[best_id]
        .take()
        .map(|n| n.interp)
        .unwrap_or_else(|| Interpretation::initial(p));
    finish(best, best_id, false, truncated, trace, stats)
}

/// Regenerates the interpretations along a path of child indices.
pub fn replay(p: &Problem, path: &[usize]) -> Option<Vec<Interpretation>> {
    let mut cur = Interpretation::initial(p);
    let mut out = vec![cur.clone()];
    for &idx in path {
        let mut d = Descendants::new();
        let mut found = None;
        while let Some((i, c)) = d.next(p, &cur, &mut |_| {}) {
            if i == idx {
                found = Some(c.interp);
                break;
            }
        }
        cur = found?;
        out.push(cur.clone());
    }
    Some(out)
}
