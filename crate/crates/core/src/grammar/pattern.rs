//! Incremental construction of abstraction patterns.
//!
//! A [`GenerationState`] records the chain of applied productions together
//! with the pattern built so far. Productions are added at the tail
//! (forward) or, while the chain does not start at the start symbol, at the
//! head (backward). References that cannot be resolved yet because the
//! chain prefix is missing stay pending until a backward step supplies them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::temporal::{
    AttrKey, AttrOwner, Inconsistent, PredArg, PredicateConstraint, TemporalNetwork, VarId, INF,
};

use super::{
    ArgTemplate, ConstraintTemplate, End, Grammar, KnowledgeBase, Owner, Role, TimeRef, START,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("abduction needs an abstracted terminal, `{0}` is not")]
    NotAbstracted(String),
    #[error("backward extension of a chain that already starts at the start symbol")]
    AtStart,
    #[error(transparent)]
    Inconsistent(#[from] Inconsistent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub id: u32,
    pub observable: String,
    pub role: Role,
    pub tb: VarId,
    pub te: VarId,
    pub production: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionPattern {
    pub hypothesis: String,
    pub tb: VarId,
    pub te: VarId,
    /// Indexed by finding id, in creation order.
    pub findings: Vec<Finding>,
    pub network: TemporalNetwork,
    pub theta: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub production: usize,
    pub finding: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    /// Finding id of the entry that owns the template.
    finding: u32,
    template: ConstraintTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationState {
    pub grammar: usize,
    pub chain: VecDeque<ChainEntry>,
    pub begin: usize,
    /// `None` once a terminal or lambda production closed the pattern.
    pub end: Option<usize>,
    pub pattern: AbstractionPattern,
    pending: Vec<Pending>,
}

/// One outcome of a backward or forward step.
#[derive(Debug, Clone)]
pub struct Extension {
    pub production: usize,
    pub state: Result<GenerationState, Inconsistent>,
}

enum Side {
    Front,
    Back,
}

impl GenerationState {
    /// Empty pattern at the start symbol.
    pub fn from_predict(kb: &KnowledgeBase, grammar: usize) -> Self {
        let g = &kb.grammars[grammar];
        let mut network = TemporalNetwork::new();
        let tb = network.add_variable(format!("{}.Tb", g.hypothesis));
        let te = network.add_variable(format!("{}.Te", g.hypothesis));
        let instant = kb.observable(&g.hypothesis).is_some_and(|q| q.instant);
        let (lo, hi) = if instant { (0, 0) } else { (0, INF) };
        network
            .add_constraint(te, tb, lo, hi, "duration")
            .expect("fresh network");
        GenerationState {
            grammar,
            chain: VecDeque::new(),
            begin: START,
            end: Some(START),
            pattern: AbstractionPattern {
                hypothesis: g.hypothesis.clone(),
                tb,
                te,
                findings: Vec::new(),
                network,
                theta: None,
            },
            pending: Vec::new(),
        }
    }

    /// Pattern seeded with the finding of one abstracted production.
    pub fn from_abduce(
        kb: &KnowledgeBase,
        grammar: usize,
        production: usize,
    ) -> Result<Self, PatternError> {
        let g = &kb.grammars[grammar];
        let p = &g.productions[production];
        let Some(t) = &p.terminal else {
            return Err(PatternError::NotAbstracted("lambda".into()));
        };
        if p.role != Role::Abstracted {
            return Err(PatternError::NotAbstracted(t.clone()));
        }
        let mut s = Self::from_predict(kb, grammar);
        s.begin = p.lhs;
        s.end = Some(p.lhs);
        s.apply(kb, production, Side::Back)?;
        s.begin = p.lhs;
        s.end = p.rhs;
        s.resolve_pending(kb)?;
        Ok(s)
    }

    /// Rebuilds a state by applying productions forward from the start symbol.
    pub fn from_chain(
        kb: &KnowledgeBase,
        grammar: usize,
        productions: &[usize],
    ) -> Result<Self, Inconsistent> {
        let mut s = Self::from_predict(kb, grammar);
        for &p in productions {
            match s.forward_with(kb, p) {
                Some(r) => s = r?,
                None => {
                    return Err(Inconsistent {
                        label: format!("production {p} does not continue the chain"),
                    })
                }
            }
        }
        Ok(s)
    }

    pub fn is_closed(&self) -> bool {
        self.end.is_none()
    }

    /// Closed and rooted at the start symbol.
    pub fn is_complete(&self) -> bool {
        self.end.is_none() && self.begin == START
    }

    pub fn grammar<'a>(&self, kb: &'a KnowledgeBase) -> &'a Grammar {
        &kb.grammars[self.grammar]
    }

    /// Finding ids in derivation order.
    pub fn derivation(&self) -> Vec<u32> {
        self.chain.iter().filter_map(|e| e.finding).collect()
    }

    /// Terminal observables in derivation order.
    pub fn word(&self) -> Vec<String> {
        self.derivation()
            .into_iter()
            .map(|f| self.pattern.findings[f as usize].observable.clone())
            .collect()
    }

    pub fn productions(&self) -> Vec<usize> {
        self.chain.iter().map(|e| e.production).collect()
    }

    /// The observation procedure of the last production in the chain that names one.
    pub fn active_theta<'a>(&self, kb: &'a KnowledgeBase) -> Option<&'a str> {
        let g = self.grammar(kb);
        self.chain
            .iter()
            .rev()
            .find_map(|e| g.productions[e.production].theta.as_deref())
    }

    pub fn extend_back(&self, kb: &KnowledgeBase) -> Result<Vec<Extension>, PatternError> {
        if self.begin == START {
            return Err(PatternError::AtStart);
        }
        let g = self.grammar(kb);
        Ok((0..g.productions.len())
            .filter(|&i| g.productions[i].rhs == Some(self.begin))
            .map(|i| {
                let mut s = self.clone();
                let state = s.apply(kb, i, Side::Front).and_then(|_| {
                    s.begin = g.productions[i].lhs;
                    s.resolve_pending(kb)?;
                    Ok(s)
                });
                Extension {
                    production: i,
                    state,
                }
            })
            .collect())
    }

    pub fn extend_forward(&self, kb: &KnowledgeBase) -> Vec<Extension> {
        let Some(end) = self.end else {
            return Vec::new();
        };
        let g = self.grammar(kb);
        (0..g.productions.len())
            .filter(|&i| g.productions[i].lhs == end)
            .map(|i| Extension {
                production: i,
                state: self.forward_with(kb, i).expect("lhs matches"),
            })
            .collect()
    }

    fn forward_with(
        &self,
        kb: &KnowledgeBase,
        production: usize,
    ) -> Option<Result<Self, Inconsistent>> {
        let g = self.grammar(kb);
        let p = &g.productions[production];
        if Some(p.lhs) != self.end {
            return None;
        }
        let mut s = self.clone();
        Some(s.apply(kb, production, Side::Back).map(|_| {
            s.end = p.rhs;
            s
        }))
    }

    fn apply(
        &mut self,
        kb: &KnowledgeBase,
        production: usize,
        side: Side,
    ) -> Result<(), Inconsistent> {
        let g = &kb.grammars[self.grammar];
        let p = &g.productions[production];
        let finding = match &p.terminal {
            Some(t) => {
                let id = self.pattern.findings.len() as u32;
                let tb = self.pattern.network.add_variable(format!("{t}#{id}.Tb"));
                let te = self.pattern.network.add_variable(format!("{t}#{id}.Te"));
                self.pattern.findings.push(Finding {
                    id,
                    observable: t.clone(),
                    role: p.role,
                    tb,
                    te,
                    production,
                });
                Some(id)
            }
            None => None,
        };
        let entry = ChainEntry {
            production,
            finding,
        };
        let pos = match side {
            Side::Front => {
                self.chain.push_front(entry);
                0
            }
            Side::Back => {
                self.chain.push_back(entry);
                self.chain.len() - 1
            }
        };
        if p.theta.is_some() || self.pattern.theta.is_none() {
            self.pattern.theta = self.active_theta(kb).map(str::to_string);
        }
        let Some(fid) = finding else {
            for c in &p.constraints {
                // Lambda blocks may only mention the hypothesis and earlier findings.
                self.place(kb, pos, u32::MAX, c.clone())?;
            }
            return Ok(());
        };
        let f = self.pattern.findings[fid as usize].clone();
        let h = (self.pattern.tb, self.pattern.te);
        let net = &mut self.pattern.network;
        let instant = kb.observable(&f.observable).is_some_and(|q| q.instant);
        net.add_constraint(f.te, f.tb, 0, if instant { 0 } else { INF }, "duration")?;
        if f.role == Role::Abstracted {
            net.add_constraint(f.tb, h.0, 0, INF, "covering")?;
            net.add_constraint(h.1, f.te, 0, INF, "covering")?;
        }
        for c in &p.constraints {
            self.place(kb, pos, fid, c.clone())?;
        }
        self.default_order(kb, pos)?;
        Ok(())
    }

    /// Hereafter ordering and same-observable non-overlap around the entry at `pos`.
    fn default_order(&mut self, kb: &KnowledgeBase, pos: usize) -> Result<(), Inconsistent> {
        let g = &kb.grammars[self.grammar];
        let fid = self.chain[pos].finding.expect("finding entry");
        let f = self.pattern.findings[fid as usize].clone();
        let findings = &self.pattern.findings;
        let before: Vec<&Finding> = self
            .chain
            .range(..pos)
            .filter_map(|e| e.finding)
            .map(|i| &findings[i as usize])
            .collect();
        let after: Vec<&Finding> = self
            .chain
            .range(pos + 1..)
            .filter_map(|e| e.finding)
            .map(|i| &findings[i as usize])
            .collect();
        let mut add: Vec<(VarId, VarId, i64, &str)> = Vec::new();
        if g.productions[f.production].hereafter {
            for b in &before {
                add.push((f.tb, b.tb, 0, "hereafter"));
            }
        }
        for a in &after {
            if g.productions[a.production].hereafter {
                add.push((a.tb, f.tb, 0, "hereafter"));
            }
        }
        if let Some(b) = before.iter().rev().find(|b| b.observable == f.observable) {
            add.push((f.tb, b.te, 1, "non-overlap"));
        }
        if let Some(a) = after.iter().find(|a| a.observable == f.observable) {
            add.push((a.tb, f.te, 1, "non-overlap"));
        }
        for (x, y, lo, label) in add {
            self.pattern.network.add_constraint(x, y, lo, INF, label)?;
        }
        Ok(())
    }

    fn place(
        &mut self,
        kb: &KnowledgeBase,
        pos: usize,
        fid: u32,
        c: ConstraintTemplate,
    ) -> Result<(), Inconsistent> {
        if !self.try_instantiate(kb, pos, &c)? {
            self.pending.push(Pending {
                finding: fid,
                template: c,
            });
        }
        Ok(())
    }

    fn resolve_pending(&mut self, kb: &KnowledgeBase) -> Result<(), Inconsistent> {
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            let pos = self
                .chain
                .iter()
                .position(|e| e.finding == Some(p.finding))
                .or_else(|| {
                    // Lambda owners keep u32::MAX; they sit at the tail.
                    (p.finding == u32::MAX).then(|| self.chain.len() - 1)
                })
                .expect("owner in chain");
            if !self.try_instantiate(kb, pos, &p.template)? {
                if self.begin == START {
                    return Err(Inconsistent {
                        label: format!("unresolved reference in `{}`", p.template.label()),
                    });
                }
                self.pending.push(p);
            }
        }
        Ok(())
    }

    fn owner_finding(&self, pos: usize, owner: &Owner) -> Option<Option<u32>> {
        match owner {
            Owner::Hyp => Some(None),
            Owner::This => self.chain[pos].finding.map(Some),
            Owner::Back(k) => self
                .chain
                .range(..pos)
                .rev()
                .filter_map(|e| e.finding)
                .nth(k - 1)
                .map(Some),
            Owner::Named(q) => self
                .chain
                .range(..pos)
                .rev()
                .filter_map(|e| e.finding)
                .find(|&f| self.pattern.findings[f as usize].observable == *q)
                .map(Some),
        }
    }

    fn var(&self, pos: usize, r: &TimeRef) -> Option<VarId> {
        let f = self.owner_finding(pos, &r.owner)?;
        let (tb, te) = match f {
            None => (self.pattern.tb, self.pattern.te),
            Some(f) => {
                let f = &self.pattern.findings[f as usize];
                (f.tb, f.te)
            }
        };
        Some(if r.end == End::Begin { tb } else { te })
    }

    /// Adds the constraint if every reference resolves; `Ok(false)` otherwise.
    fn try_instantiate(
        &mut self,
        _kb: &KnowledgeBase,
        pos: usize,
        c: &ConstraintTemplate,
    ) -> Result<bool, Inconsistent> {
        match c {
            ConstraintTemplate::Diff {
                x,
                y,
                lo,
                hi,
                label,
            } => {
                let Some(xv) = self.var(pos, x) else {
                    return Ok(false);
                };
                let yv = match y {
                    Some(y) => match self.var(pos, y) {
                        Some(v) => v,
                        None => return Ok(false),
                    },
                    None => crate::temporal::ORIGIN,
                };
                self.pattern
                    .network
                    .add_constraint(xv, yv, *lo, *hi, label.clone())?;
                Ok(true)
            }
            ConstraintTemplate::Pred { name, args, label } => {
                let mut out = Vec::new();
                for a in args {
                    out.push(match a {
                        ArgTemplate::Const(c) => PredArg::Const(*c),
                        ArgTemplate::Time(t) => match self.var(pos, t) {
                            Some(v) => PredArg::Time(v),
                            None => return Ok(false),
                        },
                        ArgTemplate::Attr(o, name) => match self.owner_finding(pos, o) {
                            Some(f) => PredArg::Attr(AttrKey {
                                owner: f.map_or(AttrOwner::Hypothesis, AttrOwner::Finding),
                                name: name.clone(),
                            }),
                            None => return Ok(false),
                        },
                    });
                }
                self.pattern.network.add_predicate(PredicateConstraint {
                    name: name.clone(),
                    args: out,
                    label: label.clone(),
                });
                Ok(true)
            }
        }
    }

    /// Constraint list keyed by derivation position rather than creation
    /// order, so that states built in different orders compare equal.
    pub fn canonical_constraints(&self) -> Vec<(String, String, i64, i64, String)> {
        let order = self.derivation();
        let net = &self.pattern.network;
        let name = |v: VarId| -> String {
            if v == crate::temporal::ORIGIN {
                return "0".into();
            }
            if v == self.pattern.tb {
                return "h.Tb".into();
            }
            if v == self.pattern.te {
                return "h.Te".into();
            }
            for (k, &f) in order.iter().enumerate() {
                let f = &self.pattern.findings[f as usize];
                if f.tb == v {
                    return format!("f{k}.Tb");
                }
                if f.te == v {
                    return format!("f{k}.Te");
                }
            }
            net.name(v).to_string()
        };
        let mut out: Vec<_> = net
            .constraints()
            .iter()
            .map(|c| (name(c.x), name(c.y), c.lo, c.hi, c.label.clone()))
            .collect();
        out.sort();
        out
    }
}

/// Every complete pattern of the grammar with at most `max_findings` findings.
pub fn enumerate_states(
    kb: &KnowledgeBase,
    grammar: usize,
    max_findings: usize,
) -> Vec<GenerationState> {
    let mut out = Vec::new();
    if max_findings == 0 {
        return out;
    }
    let mut stack = vec![GenerationState::from_predict(kb, grammar)];
    while let Some(s) = stack.pop() {
        if s.is_closed() {
            out.push(s);
            continue;
        }
        let mut next: Vec<GenerationState> = s
            .extend_forward(kb)
            .into_iter()
            .filter_map(|e| e.state.ok())
            .filter(|n| n.pattern.findings.len() <= max_findings)
            .collect();
        next.reverse();
        stack.extend(next);
    }
    out.sort_by(|a, b| {
        a.word()
            .len()
            .cmp(&b.word().len())
            .then(a.productions().cmp(&b.productions()))
    });
    out
}

pub fn enumerate_patterns(
    kb: &KnowledgeBase,
    grammar: usize,
    max_findings: usize,
) -> Vec<AbstractionPattern> {
    enumerate_states(kb, grammar, max_findings)
        .into_iter()
        .map(|s| s.pattern)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedures::Registry;

    const KB: &str = "
observable Pw { process atrial; }
observable QRS { process ventricular; }
observable Tw { process repolarization; }
observable N { process cycle; }
observable beat { process b; instant; }
observable Nb { process b; instant; }
observable Vb { process b; instant; }
observable VB { process bigeminy; }
grammar G_N hypothesizes N {
  H -> Pw D { abstracted; h.Tb = m.Tb; 50 <= m.Te - m.Tb <= 120 }
  D -> QRS E { abstracted; 50 <= m.Te - m.Tb <= 150; 100 <= m.Tb - Pw.Tb <= 210 }
  E -> Tw { abstracted; 80 <= m.Tb - QRS.Te <= 120; m.Te - QRS.Tb <= 520; h.Te = m.Te }
}
grammar G_VB hypothesizes VB {
  H -> Nb D { abstracted; h.Tb = m.T }
  D -> Vb E { abstracted; 200 <= m.T - prev.T <= 800 }
  E -> Nb F { abstracted; 1.5*200 <= m.T - prev.T <= 4*800 }
  F -> Vb E { abstracted; 200 <= m.T - prev.T <= 800 }
  F -> Vb { abstracted; 200 <= m.T - prev.T <= 800; h.Te = m.T }
}";

    fn kb() -> KnowledgeBase {
        KnowledgeBase::parse(KB, &Registry::with_builtins()).unwrap()
    }

    #[test]
    fn g_n_single_pattern() {
        let kb = kb();
        let pats = enumerate_states(&kb, 0, 3);
        assert_eq!(pats.len(), 1);
        assert_eq!(pats[0].word(), vec!["Pw", "QRS", "Tw"]);
        assert!(enumerate_states(&kb, 0, 2).is_empty());
        assert!(enumerate_states(&kb, 0, 0).is_empty());
    }

    #[test]
    fn g_vb_even_lengths() {
        let kb = kb();
        let words: Vec<String> = enumerate_states(&kb, 1, 6)
            .iter()
            .map(|s| s.word().concat())
            .collect();
        assert_eq!(words, vec!["NbVbNbVb", "NbVbNbVbNbVb"]);
        assert_eq!(
            kb.grammars[1].periodic,
            ["Nb", "Vb"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn abduce_from_middle_then_back() {
        let kb = kb();
        let s = GenerationState::from_abduce(&kb, 0, 1).unwrap();
        assert_eq!((s.begin, s.end), (1, Some(2)));
        assert_eq!(s.pending.len(), 1);
        let back = s.extend_back(&kb).unwrap();
        assert_eq!(back.len(), 1);
        let b = back[0].state.clone().unwrap();
        assert_eq!(b.begin, START);
        assert!(b.pending.is_empty());
        assert!(b.extend_back(&kb).is_err());
        let mut net = b.pattern.network.clone();
        let pw = b.pattern.findings[1].tb;
        net.bind(pw, 300, "pw").unwrap();
        assert_eq!(net.domain(b.pattern.findings[0].tb), (400, 510));
    }

    #[test]
    fn abduce_needs_abstracted_terminal() {
        let src =
            "observable a { process p; } observable b { process p; } observable c { process p; }
grammar G hypothesizes c { H -> a D { environment } D -> b { abstracted } }";
        let kb = KnowledgeBase::parse(src, &Registry::with_builtins()).unwrap();
        assert!(matches!(
            GenerationState::from_abduce(&kb, 0, 0),
            Err(PatternError::NotAbstracted(_))
        ));
        assert!(GenerationState::from_abduce(&kb, 0, 1).is_ok());
    }

    #[test]
    fn interior_back_extension_branches() {
        let kb = kb();
        // Abduce at E -> Nb F: backward steps may come from D -> Vb E or F -> Vb E.
        let s = GenerationState::from_abduce(&kb, 1, 2).unwrap();
        let back = s.extend_back(&kb).unwrap();
        let prods: Vec<usize> = back.iter().map(|e| e.production).collect();
        assert_eq!(prods, vec![1, 3]);
    }

    #[test]
    fn closed_pattern_has_no_forward_step() {
        let kb = kb();
        let s = GenerationState::from_chain(&kb, 0, &[0, 1, 2]).unwrap();
        assert!(s.is_complete());
        assert!(s.extend_forward(&kb).is_empty());
    }

    #[test]
    fn hereafter_injected_without_relating_constraint() {
        let src =
            "observable a { process p; } observable b { process p; } observable c { process p; }
grammar G hypothesizes c { H -> a D { abstracted } D -> b { abstracted } }";
        let kb = KnowledgeBase::parse(src, &Registry::with_builtins()).unwrap();
        let s = GenerationState::from_chain(&kb, 0, &[0, 1]).unwrap();
        let cs = s.canonical_constraints();
        assert!(cs.contains(&("f1.Tb".into(), "f0.Tb".into(), 0, INF, "hereafter".into())));
    }
}
