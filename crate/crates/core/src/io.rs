//! Reading observations, signals and knowledge bases from files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::ecg::{self, EcgError, SampleSeries};
use crate::grammar::{KbError, KbSource, KnowledgeBase};
use crate::model::{Observation, Time, Value};
use crate::procedures::Registry;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Kb(#[from] KbError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Series(#[from] EcgError),
    #[error("bad time `{0}`")]
    Time(String),
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
}

pub fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|source| InputError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Integers are milliseconds, decimals are seconds, `mm:ss.fff` and
/// `hh:mm:ss.fff` are clock times.
pub fn parse_time(text: &str) -> Result<Time, InputError> {
    let t = text.trim();
    let bad = || InputError::Time(text.to_string());
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() > 3 {
            return Err(bad());
        }
        let mut secs = 0.0;
        for (i, p) in parts.iter().enumerate() {
            let x: f64 = p.parse().map_err(|_| bad())?;
            if x < 0.0 || (i + 1 < parts.len() && x.fract() != 0.0) {
                return Err(bad());
            }
            secs = secs * 60.0 + x;
        }
        return Ok((secs * 1000.0).round() as Time);
    }
    if let Ok(ms) = t.parse::<Time>() {
        return Ok(ms);
    }
    match t.parse::<f64>() {
        Ok(s) if s.is_finite() => Ok((s * 1000.0).round() as Time),
        _ => Err(bad()),
    }
}

fn json_time(v: &serde_json::Value) -> Result<Time, InputError> {
    match v {
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(ms) => Ok(ms),
            None => Ok((n.as_f64().unwrap_or(f64::NAN) * 1000.0).round() as Time),
        },
        serde_json::Value::String(s) => parse_time(s),
        other => Err(InputError::Time(other.to_string())),
    }
}

#[derive(Debug, Deserialize)]
struct RawObservation {
    #[serde(default)]
    id: String,
    observable: String,
    #[serde(default)]
    t: Option<serde_json::Value>,
    #[serde(default)]
    t_begin: Option<serde_json::Value>,
    #[serde(default)]
    t_end: Option<serde_json::Value>,
    #[serde(default)]
    values: BTreeMap<String, Value>,
    #[serde(default)]
    abstracts: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawInput {
    observations: Vec<RawObservation>,
    #[serde(default)]
    series: Option<RawSeries>,
}

#[derive(Debug, Deserialize)]
struct RawSeries {
    t: Vec<serde_json::Value>,
    v: Vec<f64>,
}

/// Observations plus what they already abstract, and an optional signal.
#[derive(Debug, Clone, Default)]
pub struct Input {
    pub observations: Vec<Observation>,
    pub abstracts: Vec<(String, Vec<String>)>,
    pub series: Option<SampleSeries>,
}

pub fn parse_json_input(text: &str) -> Result<Input, InputError> {
    let raw: RawInput = serde_json::from_str(text)?;
    let mut out = Input::default();
    for (i, r) in raw.observations.into_iter().enumerate() {
        let (tb, te) = match (&r.t, &r.t_begin, &r.t_end) {
            (Some(t), None, None) => {
                let t = json_time(t)?;
                (t, t)
            }
            (None, Some(b), Some(e)) => (json_time(b)?, json_time(e)?),
            (None, Some(b), None) => {
                let t = json_time(b)?;
                (t, t)
            }
            _ => {
                return Err(InputError::Row {
                    line: i + 1,
                    reason: "give either `t` or `t_begin` and `t_end`".into(),
                })
            }
        };
        let id = if r.id.is_empty() {
            format!("o{i}")
        } else {
            r.id
        };
        if !r.abstracts.is_empty() {
            out.abstracts.push((id.clone(), r.abstracts));
        }
        out.observations.push(Observation {
            id,
            observable: r.observable,
            values: r.values,
            t_begin: tb,
            t_end: te,
        });
    }
    if let Some(s) = raw.series {
        let t = s.t.iter().map(json_time).collect::<Result<Vec<_>, _>>()?;
        out.series = Some(SampleSeries::new(t, s.v)?);
    }
    Ok(out)
}

/// `a=1;b=x` attribute lists.
pub fn parse_values(text: &str) -> Result<BTreeMap<String, Value>, String> {
    let mut out = BTreeMap::new();
    for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("`{part}` is not `name=value`"))?;
        out.insert(k.trim().to_string(), Value::parse(v));
    }
    Ok(out)
}

/// Observation CSV with a header naming `t_begin`, `t_end`, `observable`
/// and optionally `id`, `values` and `abstracts`.
pub fn parse_observation_csv(text: &str) -> Result<Input, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(cb), Some(ce), Some(cq)) = (col("t_begin"), col("t_end"), col("observable")) else {
        return Err(InputError::Row {
            line: 1,
            reason: "header needs t_begin, t_end and observable".into(),
        });
    };
    let (cid, cv, ca) = (col("id"), col("values"), col("abstracts"));
    let mut out = Input::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("");
        let row = |reason: String| InputError::Row { line, reason };
        let id = match field(cid) {
            "" => format!("o{i}"),
            s => s.to_string(),
        };
        let tb = parse_time(field(Some(cb)))?;
        let te = match field(Some(ce)) {
            "" => tb,
            s => parse_time(s)?,
        };
        let values = parse_values(field(cv)).map_err(row)?;
        let abstracts: Vec<String> = field(ca)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if !abstracts.is_empty() {
            out.abstracts.push((id.clone(), abstracts));
        }
        out.observations.push(Observation {
            id,
            observable: field(Some(cq)).to_string(),
            values,
            t_begin: tb,
            t_end: te,
        });
    }
    Ok(out)
}

/// Two columns, time and value, with an optional header.
pub fn parse_series_csv(text: &str) -> Result<SampleSeries, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (Some(a), Some(b)) = (rec.get(0), rec.get(1)) else {
            return Err(InputError::Row {
                line: i + 1,
                reason: "expected `t,value`".into(),
            });
        };
        let Ok(x) = b.parse::<f64>() else {
            if i == 0 {
                continue;
            }
            return Err(InputError::Row {
                line: i + 1,
                reason: format!("bad value `{b}`"),
            });
        };
        t.push(parse_time(a)?);
        v.push(x);
    }
    Ok(SampleSeries::new(t, v)?)
}

/// Each sample as an instant observation of `observable` with value `attr`.
pub fn series_observations(s: &SampleSeries, observable: &str, attr: &str) -> Vec<Observation> {
    s.t.iter()
        .zip(&s.v)
        .enumerate()
        .map(|(i, (&t, &v))| {
            Observation::instant(&format!("{observable}{i}"), observable, t)
                .with(attr, Value::Num(v))
        })
        .collect()
}

/// Observations from a JSON or CSV file, picked by extension or content.
pub fn load_input(path: &Path) -> Result<Input, InputError> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{') {
        parse_json_input(&text)
    } else {
        parse_observation_csv(&text)
    }
}

pub fn builtin_kb(name: &str) -> Option<&'static str> {
    match name {
        "sinus" | "sinus.kb" => Some(ecg::SINUS_KB),
        "ecg_waves" | "ecg_waves.kb" => Some(ecg::ECG_WAVES_KB),
        "ecg_rhythms" | "ecg_rhythms.kb" => Some(ecg::ECG_RHYTHMS_KB),
        _ => None,
    }
}

/// KB files given by path, by name inside `dir`, or by built-in name.
pub fn load_kb(
    specs: &[String],
    dir: Option<&Path>,
    registry: &Registry,
) -> Result<KnowledgeBase, InputError> {
    let mut texts: Vec<(String, String)> = Vec::new();
    for s in specs {
        let p = PathBuf::from(s);
        let candidate = dir.map(|d| d.join(s)).filter(|c| c.exists());
        if p.exists() {
            texts.push((s.clone(), read(&p)?));
        } else if let Some(c) = candidate {
            texts.push((c.display().to_string(), read(&c)?));
        } else if let Some(t) = builtin_kb(s) {
            texts.push((s.clone(), t.to_string()));
        } else {
            return Err(InputError::Io {
                path: s.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such knowledge base"),
            });
        }
    }
    let sources: Vec<KbSource<'_>> = texts
        .iter()
        .map(|(n, t)| KbSource { name: n, text: t })
        .collect();
    Ok(KnowledgeBase::parse_sources(&sources, registry)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_formats() {
        assert_eq!(parse_time("463").unwrap(), 463);
        assert_eq!(parse_time("0.463").unwrap(), 463);
        assert_eq!(parse_time("01:02.5").unwrap(), 62_500);
        assert_eq!(parse_time("1:00:00").unwrap(), 3_600_000);
        assert!(parse_time("x").is_err());
        assert!(parse_time("1.5:00").is_err());
    }

    #[test]
    fn csv_rows() {
        let text = "id,t_begin,t_end,observable,values,abstracts\nq,0.463,549,QRS,amp=1000;kind=N,w\nw,463,549,wave,,\n";
        let inp = parse_observation_csv(text).unwrap();
        assert_eq!(inp.observations.len(), 2);
        assert_eq!(inp.observations[0].t_begin, 463);
        assert_eq!(inp.observations[0].values["kind"], Value::Label("N".into()));
        assert_eq!(
            inp.abstracts,
            vec![("q".to_string(), vec!["w".to_string()])]
        );
    }

    #[test]
    fn json_instants_and_series() {
        let text = r#"{"observations":[{"observable":"p","t":4,"values":{"V":2.5}}],"series":{"t":[0,"0.004"],"v":[1,2]}}"#;
        let inp = parse_json_input(text).unwrap();
        assert_eq!(
            (inp.observations[0].t_begin, inp.observations[0].t_end),
            (4, 4)
        );
        assert_eq!(inp.series.unwrap().t, vec![0, 4]);
    }

    #[test]
    fn series_with_header() {
        let s = parse_series_csv("t,value\n0,1\n4,2.5\n").unwrap();
        assert_eq!(s.v, vec![1.0, 2.5]);
        assert!(parse_series_csv("0,1\n0,2\n").is_err());
    }
}
