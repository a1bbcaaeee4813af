//! Named predicates, observation procedures and detectors that grammars
//! refer to from the KB text.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ecg::{self, SampleSeries};
use crate::grammar::Role;
use crate::model::{Time, Value};
use crate::temporal::{PredicateEval, UnknownPredicate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ProcedureError(pub String);

/// One matched observation handed to an observation procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub observable: String,
    pub role: Role,
    pub t_begin: Time,
    pub t_end: Time,
    pub values: BTreeMap<String, Value>,
}

pub struct ThetaInput<'a> {
    pub hypothesis: &'a str,
    /// In derivation order.
    pub evidence: &'a [Evidence],
    pub series: Option<&'a SampleSeries>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThetaOutput {
    pub values: BTreeMap<String, Value>,
    pub t_begin: Option<Time>,
    pub t_end: Option<Time>,
}

pub struct DetectorInput<'a> {
    pub observable: &'a str,
    pub begin: (Time, Time),
    pub end: (Time, Time),
    pub series: Option<&'a SampleSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub t_begin: Time,
    pub t_end: Time,
    pub values: BTreeMap<String, Value>,
}

pub type PredicateFn =
    dyn Fn(&[Value], Option<&SampleSeries>) -> Result<bool, ProcedureError> + Send + Sync;
pub type ThetaFn = dyn Fn(&ThetaInput<'_>) -> Result<ThetaOutput, ProcedureError> + Send + Sync;
pub type DetectorFn = dyn Fn(&DetectorInput<'_>) -> Vec<Detection> + Send + Sync;

#[derive(Clone, Default)]
pub struct Registry {
    predicates: BTreeMap<String, Arc<PredicateFn>>,
    thetas: BTreeMap<String, Arc<ThetaFn>>,
    detectors: BTreeMap<String, Arc<DetectorFn>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("predicates", &self.predicates.keys().collect::<Vec<_>>())
            .field("thetas", &self.thetas.keys().collect::<Vec<_>>())
            .field("detectors", &self.detectors.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn num(args: &[Value], i: usize) -> Result<f64, ProcedureError> {
    args.get(i)
        .and_then(Value::as_f64)
        .ok_or_else(|| ProcedureError(format!("argument {} is not numeric", i + 1)))
}

fn arity(args: &[Value], n: usize) -> Result<(), ProcedureError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(ProcedureError(format!(
            "expected {n} arguments, got {}",
            args.len()
        )))
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Registry::default();
        r.predicate("ge", |a, _| {
            arity(a, 2)?;
            Ok(num(a, 0)? >= num(a, 1)?)
        });
        r.predicate("le", |a, _| {
            arity(a, 2)?;
            Ok(num(a, 0)? <= num(a, 1)?)
        });
        r.predicate("eq", |a, _| {
            arity(a, 2)?;
            Ok(a[0] == a[1])
        });
        r.predicate("present", |a, _| {
            Ok(a.iter().all(|v| *v == Value::Bool(true)))
        });
        r.predicate("sinus_residual", |a, _| {
            arity(a, 4)?;
            Ok(ecg::sinus_residual_ok(
                num(a, 0)?,
                num(a, 1)?,
                num(a, 2)?,
                num(a, 3)?,
            ))
        });
        r.predicate("max_slope_ratio", |a, s| {
            arity(a, 5)?;
            let Some(s) = s else { return Ok(true) };
            let t = |i| num(a, i).map(|x| x.round() as Time);
            Ok(ecg::max_slope_ratio(
                s,
                (t(0)?, t(1)?),
                (t(2)?, t(3)?),
                num(a, 4)?,
            ))
        });
        r.theta("sinus_fit", |inp| {
            let pts = points(inp.evidence)?;
            let fit = ecg::sinus_fit(&pts).map_err(|e| ProcedureError(e.to_string()))?;
            Ok(ThetaOutput {
                values: [
                    ("alpha".to_string(), Value::Num(fit.alpha)),
                    ("omega".to_string(), Value::Num(fit.omega)),
                ]
                .into_iter()
                .collect(),
                t_begin: Some(fit.t_begin),
                t_end: Some(fit.t_end),
            })
        });
        r.theta("wave_observation", |inp| {
            let pts = points(inp.evidence)?;
            let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let w = ecg::wave_observation(&v).map_err(|e| ProcedureError(e.to_string()))?;
            Ok(ThetaOutput {
                values: ecg::wave_values(&w, pts[1].0, pts[w.tp].0),
                t_begin: Some(pts[1].0),
                t_end: Some(pts[pts.len() - 2].0),
            })
        });
        r.theta("tw_delin", |inp| {
            let find = |q: &str| {
                inp.evidence
                    .iter()
                    .find(|e| e.observable == q)
                    .ok_or_else(|| ProcedureError(format!("no `{q}` evidence")))
            };
            let (qrs, wave) = (find("QRS")?, find("wave")?);
            let (tb, te) = ecg::tw_delin((qrs.t_begin, qrs.t_end), (wave.t_begin, wave.t_end))
                .map_err(|e| ProcedureError(e.to_string()))?;
            Ok(ThetaOutput {
                values: BTreeMap::new(),
                t_begin: Some(tb),
                t_end: Some(te),
            })
        });
        r.theta("presence", |inp| {
            let all = inp
                .evidence
                .iter()
                .all(|e| e.values.get("present") == Some(&Value::Bool(true)));
            Ok(ThetaOutput {
                values: [("present".to_string(), Value::Bool(all))]
                    .into_iter()
                    .collect(),
                t_begin: None,
                t_end: None,
            })
        });
        r.detector("wave_detector", |inp| {
            let Some(s) = inp.series else {
                return Vec::new();
            };
            ecg::detect_waves(s, inp.begin, inp.end)
                .into_iter()
                .map(|d| Detection {
                    t_begin: d.t_begin,
                    t_end: d.t_end,
                    values: ecg::wave_values(&d.wave, d.t_begin, d.t_tp),
                })
                .collect()
        });
        r
    }

    pub fn predicate(
        &mut self,
        name: &str,
        f: impl Fn(&[Value], Option<&SampleSeries>) -> Result<bool, ProcedureError>
            + Send
            + Sync
            + 'static,
    ) {
        self.predicates.insert(name.to_string(), Arc::new(f));
    }

    pub fn theta(
        &mut self,
        name: &str,
        f: impl Fn(&ThetaInput<'_>) -> Result<ThetaOutput, ProcedureError> + Send + Sync + 'static,
    ) {
        self.thetas.insert(name.to_string(), Arc::new(f));
    }

    pub fn detector(
        &mut self,
        name: &str,
        f: impl Fn(&DetectorInput<'_>) -> Vec<Detection> + Send + Sync + 'static,
    ) {
        self.detectors.insert(name.to_string(), Arc::new(f));
    }

    pub fn has_predicate(&self, name: &str) -> bool {
        self.predicates.contains_key(name)
    }

    pub fn has_theta(&self, name: &str) -> bool {
        self.thetas.contains_key(name)
    }

    pub fn has_detector(&self, name: &str) -> bool {
        self.detectors.contains_key(name)
    }

    pub fn run_theta(
        &self,
        name: &str,
        input: &ThetaInput<'_>,
    ) -> Result<ThetaOutput, ProcedureError> {
        let f = self
            .thetas
            .get(name)
            .ok_or_else(|| ProcedureError(format!("unknown observation procedure `{name}`")))?;
        f(input)
    }

    pub fn run_detector(&self, name: &str, input: &DetectorInput<'_>) -> Vec<Detection> {
        self.detectors
            .get(name)
            .map(|f| f(input))
            .unwrap_or_default()
    }

    /// Binds the registry to a signal so that predicates can look at it.
    pub fn evaluator<'a>(&'a self, series: Option<&'a SampleSeries>) -> Evaluator<'a> {
        Evaluator {
            registry: self,
            series,
        }
    }
}

pub struct Evaluator<'a> {
    registry: &'a Registry,
    series: Option<&'a SampleSeries>,
}

impl PredicateEval for Evaluator<'_> {
    fn eval(&self, name: &str, args: &[Value]) -> Result<bool, UnknownPredicate> {
        let f = self
            .registry
            .predicates
            .get(name)
            .ok_or_else(|| UnknownPredicate(name.to_string()))?;
        match f(args, self.series) {
            Ok(b) => Ok(b),
            Err(e) => {
                log::warn!("predicate `{name}` failed: {e}");
                Ok(false)
            }
        }
    }
}

/// `(t, value)` pairs from point evidence; the first numeric attribute is the value.
fn points(evidence: &[Evidence]) -> Result<Vec<(Time, f64)>, ProcedureError> {
    evidence
        .iter()
        .map(|e| {
            e.values
                .values()
                .find_map(Value::as_f64)
                .map(|v| (e.t_begin, v))
                .ok_or_else(|| {
                    ProcedureError(format!("`{}` evidence without a value", e.observable))
                })
        })
        .collect()
}
