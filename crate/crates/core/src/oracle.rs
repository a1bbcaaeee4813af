//! Exhaustive reference solvers for small problems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{enumerate_states, GenerationState, KbError, KnowledgeBase, Role};
use crate::interp::{Problem, ProblemOptions};
use crate::model::{Observation, Time, Value};
use crate::procedures::{Evidence, Registry, ThetaInput};
use crate::temporal::{AttrKey, AttrOwner, PredicateCheck};

pub const MAX_ORACLE_OBSERVATIONS: usize = 10;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} observations; the exhaustive oracle accepts at most {MAX_ORACLE_OBSERVATIONS}")]
    TooLarge(usize),
    #[error("empty universe")]
    EmptyUniverse,
    #[error("set element {0} is not in the universe")]
    NotInUniverse(u32),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("{0}")]
    Problem(String),
}

/// A hypothesis built only from initial observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub grammar: String,
    pub hypothesis: String,
    pub word: Vec<String>,
    /// Observation ids in derivation order.
    pub evidence: Vec<String>,
    pub abstracted: BTreeSet<usize>,
    pub t_begin: Time,
    pub t_end: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSolution {
    pub candidates: Vec<Candidate>,
    /// Indices into `candidates`, one entry per minimum cover.
    pub minimum_covers: Vec<Vec<usize>>,
    pub minimum_size: Option<usize>,
}

/// Every hypothesis whose evidence is a set of initial observations.
pub fn candidates(p: &Problem, max_findings: usize) -> Result<Vec<Candidate>, OracleError> {
    let n = p.observations.len();
    if n > MAX_ORACLE_OBSERVATIONS {
        return Err(OracleError::TooLarge(n));
    }
    let mut out: Vec<Candidate> = Vec::new();
    for (gi, g) in p.kb.grammars.iter().enumerate() {
        for state in enumerate_states(&p.kb, gi, max_findings) {
            let order = state.derivation();
            let mut assignment = Vec::new();
            assign(p, &state, &order, &mut assignment, &mut |a| {
                if let Some(c) = finish(p, &state, &order, a) {
                    if !out.contains(&c) {
                        out.push(Candidate {
                            grammar: g.name.clone(),
                            ..c
                        });
                    }
                }
            });
        }
    }
    Ok(out)
}

fn assign(
    p: &Problem,
    s: &GenerationState,
    order: &[u32],
    chosen: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == order.len() {
        emit(chosen);
        return;
    }
    let f = &s.pattern.findings[order[chosen.len()] as usize];
    for (k, o) in p.observations.iter().enumerate() {
        if chosen.contains(&k) || !p.kb.is_a(&o.observable, &f.observable) {
            continue;
        }
        let mut net = s.pattern.network.clone();
        let mut ok = true;
        for (j, &c) in chosen.iter().chain(std::iter::once(&k)).enumerate() {
            let fj = &s.pattern.findings[order[j] as usize];
            let oj = &p.observations[c];
            ok &=
                net.bind(fj.tb, oj.t_begin, "o").is_ok() && net.bind(fj.te, oj.t_end, "o").is_ok();
        }
        if ok && net.propagate().is_consistent() {
            chosen.push(k);
            assign(p, s, order, chosen, emit);
            chosen.pop();
        }
    }
}

fn finish(p: &Problem, s: &GenerationState, order: &[u32], chosen: &[usize]) -> Option<Candidate> {
    let mut net = s.pattern.network.clone();
    let by_finding: BTreeMap<u32, usize> =
        order.iter().copied().zip(chosen.iter().copied()).collect();
    for (&f, &k) in &by_finding {
        let fd = &s.pattern.findings[f as usize];
        let o = &p.observations[k];
        net.bind(fd.tb, o.t_begin, "o").ok()?;
        net.bind(fd.te, o.t_end, "o").ok()?;
    }
    let mut values: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(theta) = &s.pattern.theta {
        let evidence: Vec<Evidence> = order
            .iter()
            .map(|f| {
                let o = &p.observations[by_finding[f]];
                Evidence {
                    observable: s.pattern.findings[*f as usize].observable.clone(),
                    role: s.pattern.findings[*f as usize].role,
                    t_begin: o.t_begin,
                    t_end: o.t_end,
                    values: o.values.clone(),
                }
            })
            .collect();
        let out = p
            .registry
            .run_theta(
                theta,
                &ThetaInput {
                    hypothesis: &s.pattern.hypothesis,
                    evidence: &evidence,
                    series: p.series.as_ref(),
                },
            )
            .ok()?;
        let q = p.kb.observable(&s.pattern.hypothesis)?;
        for (k, v) in &out.values {
            if !q.attribute(k).is_some_and(|a| a.domain.contains(v)) {
                return None;
            }
        }
        if let Some(t) = out.t_begin {
            net.bind(s.pattern.tb, t, "theta").ok()?;
        }
        if let Some(t) = out.t_end {
            net.bind(s.pattern.te, t, "theta").ok()?;
        }
        values = out.values;
    }
    if !net.propagate().is_consistent() {
        return None;
    }
    let lookup = |key: &AttrKey| match key.owner {
        AttrOwner::Hypothesis => values.get(&key.name).cloned(),
        AttrOwner::Finding(f) => p.observations[*by_finding.get(&f)?]
            .values
            .get(&key.name)
            .cloned(),
    };
    let eval = p.registry.evaluator(p.series.as_ref());
    if !matches!(
        net.check_predicates(&lookup, &eval),
        Ok(PredicateCheck::Satisfied)
    ) {
        return None;
    }
    if !consecutive(p, s, order, chosen) {
        return None;
    }
    let abstracted = order
        .iter()
        .zip(chosen)
        .filter(|(f, _)| s.pattern.findings[**f as usize].role == Role::Abstracted)
        .map(|(_, &k)| k)
        .collect();
    Some(Candidate {
        grammar: String::new(),
        hypothesis: s.pattern.hypothesis.clone(),
        word: s.word(),
        evidence: chosen
            .iter()
            .map(|&k| p.observations[k].id.clone())
            .collect(),
        abstracted,
        t_begin: net.domain(s.pattern.tb).0,
        t_end: net.domain(s.pattern.te).0,
    })
}

/// Successive findings of one observable skip no observation that could
/// have taken the later one's place on a repeating part of the grammar, and
/// never skip one the hypothesis uses elsewhere.
fn consecutive(p: &Problem, s: &GenerationState, order: &[u32], chosen: &[usize]) -> bool {
    let g = &p.kb.grammars[s.grammar];
    let finding = |w: usize| &s.pattern.findings[order[w] as usize];
    for w in 1..order.len() {
        let fb = finding(w);
        let Some(v) = (0..w)
            .rev()
            .find(|&v| finding(v).observable == fb.observable)
        else {
            continue;
        };
        let fa = finding(v);
        let (a, b) = (chosen[v], chosen[w]);
        let lo = a.min(b);
        let hi = a.max(b);
        for k in lo + 1..hi {
            let o = &p.observations[k];
            if g.periodic.contains(&fa.observable) {
                if !p.kb.is_a(&o.observable, &fa.observable) {
                    continue;
                }
                let own_ok = g.productions[fb.production]
                    .constraints
                    .iter()
                    .all(|c| match c {
                        crate::grammar::ConstraintTemplate::Diff { x, y, lo, hi, .. } => {
                            use crate::grammar::{End, Owner};
                            if x.owner != Owner::This {
                                return true;
                            }
                            let t = |e: End| if e == End::Begin { o.t_begin } else { o.t_end };
                            let d = match y {
                                None => t(x.end),
                                Some(y) if y.owner == Owner::This => t(x.end) - t(y.end),
                                Some(_) => return true,
                            };
                            d >= *lo && d <= *hi
                        }
                        _ => true,
                    });
                if own_ok {
                    return false;
                }
            } else if o.observable == p.observations[a].observable && chosen.contains(&k) {
                return false;
            }
        }
    }
    true
}

/// Minimum-size exclusive covers of the abstractable observations.
pub fn brute_force_solution(
    p: &Problem,
    max_findings: usize,
    max_hypotheses: usize,
) -> Result<CoverSolution, OracleError> {
    let cands = candidates(p, max_findings)?;
    let domain: BTreeSet<usize> = p.domain().clone();
    let useful: Vec<usize> = (0..cands.len())
        .filter(|&c| !cands[c].abstracted.is_empty())
        .collect();
    let alternative = |a: &Candidate, b: &Candidate| {
        p.kb.mutually_exclusive(&a.hypothesis, &b.hypothesis)
            && !a.abstracted.is_disjoint(&b.abstracted)
    };
    let mut covers = Vec::new();
    let mut size = None;
    for k in 0..=max_hypotheses.min(useful.len()) {
        for_each_combination(useful.len(), k, &mut |idx| {
            let set: Vec<usize> = idx.iter().map(|&i| useful[i]).collect();
            let covered: BTreeSet<usize> = set
                .iter()
                .flat_map(|&c| cands[c].abstracted.iter().copied())
                .collect();
            if !domain.is_subset(&covered) {
                return;
            }
            for (x, &a) in set.iter().enumerate() {
                for &b in &set[x + 1..] {
                    if alternative(&cands[a], &cands[b]) {
                        return;
                    }
                }
            }
            covers.push(set);
        });
        if !covers.is_empty() {
            size = Some(k);
            break;
        }
    }
    Ok(CoverSolution {
        candidates: cands,
        minimum_covers: covers,
        minimum_size: size,
    })
}

fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Size of a smallest subfamily of `sets` whose union is `universe`.
pub fn min_set_cover(universe: &[u32], sets: &[Vec<u32>]) -> Option<usize> {
    let u: BTreeSet<u32> = universe.iter().copied().collect();
    assert!(
        sets.len() < 32,
        "exhaustive set cover is limited to 31 sets"
    );
    let mut best: Option<usize> = None;
    for mask in 0u32..(1 << sets.len()) {
        let k = mask.count_ones() as usize;
        if best.is_some_and(|b| k >= b) {
            continue;
        }
        let covered: BTreeSet<u32> = (0..sets.len())
            .filter(|i| mask & (1 << i) != 0)
            .flat_map(|i| sets[i].iter().copied())
            .collect();
        if u.is_subset(&covered) {
            best = Some(k);
        }
    }
    best
}

/// Knowledge-base text of the set-cover reduction: one presence observable
/// and, per set, a chain grammar pinned to the set's elements.
pub fn reduction_kb(universe: &[u32], sets: &[Vec<u32>]) -> Result<String, OracleError> {
    if universe.is_empty() {
        return Err(OracleError::EmptyUniverse);
    }
    let u: BTreeSet<u32> = universe.iter().copied().collect();
    let mut text =
        String::from("observable q { process presence; attr present: bool; instant; }\n");
    for (k, s) in sets.iter().enumerate() {
        let elems: BTreeSet<u32> = s.iter().copied().collect();
        if let Some(e) = elems.iter().find(|e| !u.contains(e)) {
            return Err(OracleError::NotInUniverse(*e));
        }
        if elems.is_empty() {
            continue;
        }
        let elems: Vec<u32> = elems.into_iter().collect();
        writeln!(
            text,
            "observable S{k} {{ process cover; attr present: bool; }}"
        )
        .unwrap();
        writeln!(text, "grammar G_S{k} hypothesizes S{k} {{").unwrap();
        let last = elems.len() - 1;
        for (j, e) in elems.iter().enumerate() {
            let lhs = if j == 0 {
                "H".to_string()
            } else {
                format!("D{j}")
            };
            let rhs = if j == last {
                String::new()
            } else {
                format!(" D{}", j + 1)
            };
            let mut items = format!("abstracted; m.T = {e}");
            if j == 0 {
                items.push_str("; h.Tb = m.T");
            }
            if j == last {
                items.push_str("; h.Te = m.T; theta presence");
            }
            writeln!(text, "  {lhs} -> q{rhs} {{ {items} }}").unwrap();
        }
        text.push_str("}\n");
    }
    if !text.contains("grammar") {
        // keeps q abstractable, so an empty family covers nothing
        text.push_str("observable none { process cover; }\ngrammar G_none hypothesizes none {\n  H -> q { abstracted; m.T = -1; h.Tb = m.T; h.Te = m.T }\n}\n");
    }
    Ok(text)
}

/// One present `q` observation per universe element, at time equal to the element.
pub fn reduction_observations(universe: &[u32]) -> Vec<Observation> {
    let u: BTreeSet<u32> = universe.iter().copied().collect();
    u.iter()
        .map(|&e| {
            Observation::instant(&format!("u{e}"), "q", e as Time)
                .with("present", Value::Bool(true))
        })
        .collect()
}

pub fn phi_reduction(universe: &[u32], sets: &[Vec<u32>]) -> Result<Problem, OracleError> {
    let text = reduction_kb(universe, sets)?;
    let registry = Registry::with_builtins();
    let kb = KnowledgeBase::parse(&text, &registry)?;
    Problem::new(
        Arc::new(kb),
        Arc::new(registry),
        reduction_observations(universe),
        ProblemOptions::default(),
    )
    .map_err(|e| OracleError::Problem(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_cover_small() {
        assert_eq!(
            min_set_cover(&[1, 2, 3], &[vec![1, 2], vec![3], vec![1, 2, 3]]),
            Some(1)
        );
        assert_eq!(min_set_cover(&[1, 2, 3], &[vec![1], vec![2]]), None);
        assert_eq!(
            min_set_cover(
                &[1, 2, 3, 4],
                &[vec![1, 2], vec![3], vec![2, 4], vec![1, 3]]
            ),
            Some(2)
        );
    }

    #[test]
    fn reduction_text_parses() {
        let text = reduction_kb(&[1, 2, 3], &[vec![3, 1], vec![2]]).unwrap();
        assert!(text.contains("grammar G_S0 hypothesizes S0"));
        assert!(text.contains("H -> q D1 { abstracted; m.T = 1; h.Tb = m.T }"));
        assert!(text.contains("D1 -> q { abstracted; m.T = 3; h.Te = m.T; theta presence }"));
        let p = phi_reduction(&[1, 2, 3], &[vec![3, 1], vec![2]]).unwrap();
        assert_eq!(p.kb.grammars.len(), 2);
        assert!(matches!(
            phi_reduction(&[], &[]),
            Err(OracleError::EmptyUniverse)
        ));
        assert!(matches!(
            phi_reduction(&[1], &[vec![2]]),
            Err(OracleError::NotInUniverse(2))
        ));
    }

    #[test]
    fn reduction_matches_set_cover() {
        let u = [1, 2, 3, 4];
        let s = vec![vec![1, 2], vec![3], vec![2, 4], vec![1, 3]];
        let p = phi_reduction(&u, &s).unwrap();
        let sol = brute_force_solution(&p, 8, 6).unwrap();
        assert_eq!(sol.minimum_size, min_set_cover(&u, &s));
    }

    #[test]
    fn empty_family_covers_nothing() {
        let p = phi_reduction(&[1], &[]).unwrap();
        assert_eq!(brute_force_solution(&p, 4, 2).unwrap().minimum_size, None);
        assert_eq!(min_set_cover(&[1], &[]), None);
    }
}
