//! Signal procedures for the shipped knowledge bases: sinusoid fitting,
//! wave delineation and saliency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Time, Value};

pub const SINUS_KB: &str = include_str!("../kb/sinus.kb");
pub const ECG_WAVES_KB: &str = include_str!("../kb/ecg_waves.kb");
pub const ECG_RHYTHMS_KB: &str = include_str!("../kb/ecg_rhythms.kb");

/// Minimum wave amplitude in microvolts.
pub const MIN_WAVE_AMPLITUDE: f64 = 20.0;
/// Minimum wave duration in milliseconds.
pub const MIN_WAVE_DURATION: Time = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EcgError {
    #[error("series times must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("series has {t} times and {v} values")]
    Length { t: usize, v: usize },
    #[error("insufficient evidence: {0}")]
    InsufficientEvidence(String),
    #[error("malformed wave: {0}")]
    MalformedWave(String),
    #[error("wave at {wave} starts before the QRS ends at {qrs_end}")]
    WaveBeforeQrs { wave: Time, qrs_end: Time },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub t: Vec<Time>,
    pub v: Vec<f64>,
}

impl SampleSeries {
    pub fn new(t: Vec<Time>, v: Vec<f64>) -> Result<Self, EcgError> {
        if t.len() != v.len() {
            return Err(EcgError::Length {
                t: t.len(),
                v: v.len(),
            });
        }
        if let Some(i) = t.windows(2).position(|w| w[0] >= w[1]) {
            return Err(EcgError::NotIncreasing(i + 1));
        }
        Ok(SampleSeries { t, v })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index range of the samples with `tb <= t <= te`.
    pub fn range(&self, tb: Time, te: Time) -> std::ops::Range<usize> {
        let a = self.t.partition_point(|&x| x < tb);
        let b = self.t.partition_point(|&x| x <= te);
        a..b.max(a)
    }

    /// Largest absolute first difference between samples inside `[tb, te]`.
    pub fn max_abs_diff(&self, tb: Time, te: Time) -> Option<f64> {
        let r = self.range(tb, te);
        self.v[r]
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusFit {
    pub alpha: f64,
    pub omega: f64,
    /// Estimate from the mean peak spacing, before refinement.
    pub omega0: f64,
    pub t_begin: Time,
    pub t_end: Time,
    pub peaks: Vec<Time>,
    pub max_residual: f64,
}

/// Points where the slope changes sign. A flat run counts once, at its last point.
pub fn peaks(points: &[(Time, f64)]) -> Vec<Time> {
    let mut out = Vec::new();
    let mut last = 0i8;
    for k in 0..points.len().saturating_sub(1) {
        let s = sign(points[k + 1].1 - points[k].1);
        if s == 0 {
            continue;
        }
        if last != 0 && s != last {
            out.push(points[k].0);
        }
        last = s;
    }
    out
}

pub fn sinus_residual(alpha: f64, omega: f64, t: f64, v: f64) -> f64 {
    (alpha * (omega * t).sin() - v).abs()
}

/// The residual bound is a third of the amplitude.
pub fn sinus_residual_ok(alpha: f64, omega: f64, t: f64, v: f64) -> bool {
    sinus_residual(alpha, omega, t, v) <= alpha / 3.0 + 1e-9
}

/// Amplitude from the largest magnitude, frequency from the mean spacing of
/// peaks, then refined on a grid within 10% to minimize the largest residual.
pub fn sinus_fit(points: &[(Time, f64)]) -> Result<SinusFit, EcgError> {
    let pk = peaks(points);
    if pk.len() < 2 {
        return Err(EcgError::InsufficientEvidence(format!(
            "{} peaks, need 2",
            pk.len()
        )));
    }
    let alpha = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let mean = (pk[pk.len() - 1] - pk[0]) as f64 / (pk.len() - 1) as f64;
    let omega0 = std::f64::consts::PI / mean;
    let worst = |w: f64| {
        points
            .iter()
            .map(|&(t, v)| sinus_residual(alpha, w, t as f64, v))
            .fold(0.0, f64::max)
    };
    const STEPS: usize = 2000;
    let mut best = (worst(omega0), omega0);
    for i in 0..=STEPS {
        let w = omega0 * (0.9 + 0.2 * i as f64 / STEPS as f64);
        let r = worst(w);
        if r < best.0 {
            best = (r, w);
        }
    }
    Ok(SinusFit {
        alpha,
        omega: best.1,
        omega0,
        t_begin: points[0].0,
        t_end: points[points.len() - 1].0,
        peaks: pk,
        max_residual: best.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveObservation {
    /// +1 or -1.
    pub vp: i8,
    pub a: f64,
    /// Index of the turning point.
    pub tp: usize,
}

/// Attributes of a wave from samples `V_0..V_n`, where `V_0` and `V_n` are
/// the context samples just outside the wave.
pub fn wave_observation(v: &[f64]) -> Result<WaveObservation, EcgError> {
    if v.len() < 5 {
        return Err(EcgError::MalformedWave(format!(
            "{} samples, need at least 5",
            v.len()
        )));
    }
    let n = v.len() - 1;
    let interior = 1..n;
    // A flat approach decides by the first slope inside the wave.
    let falling = v[1] < v[0] || (v[1] == v[0] && v[2] < v[1]);
    let tp = if falling {
        interior.min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    } else {
        interior
            .max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a)))
            .unwrap()
    };
    let vp = if v[tp] - v[1] < 0.0 { -1 } else { 1 };
    let a = (v[tp] - v[1]).abs().max((v[tp] - v[n - 1]).abs());
    Ok(WaveObservation { vp, a, tp })
}

pub fn wave_values(w: &WaveObservation, _t_begin: Time, t_tp: Time) -> BTreeMap<String, Value> {
    [
        (
            "vp".to_string(),
            Value::Label(if w.vp > 0 { "pos" } else { "neg" }.to_string()),
        ),
        ("a".to_string(), Value::Num(w.a)),
        ("tp".to_string(), Value::Num(t_tp as f64)),
    ]
    .into_iter()
    .collect()
}

/// Labels of the violated wave constraints (`c1`..`c8`) for samples `V_0..V_n`.
pub fn wave_shape(t: &[Time], v: &[f64]) -> Vec<&'static str> {
    let mut bad = Vec::new();
    if v.len() < 5 || t.len() != v.len() {
        return vec!["c1"];
    }
    let n = v.len() - 1;
    let Ok(w) = wave_observation(v) else {
        return vec!["c1"];
    };
    let tp = w.tp;
    if t[n - 1] - t[1] < MIN_WAVE_DURATION {
        bad.push("c1");
    }
    if !(t[1] < t[tp] && t[tp] < t[n - 1]) {
        bad.push("c4");
    }
    if sign(v[1] - v[0]) == sign(v[2] - v[1]) {
        bad.push("c5");
    }
    if sign(v[n] - v[n - 1]) == sign(v[n - 1] - v[n - 2]) {
        bad.push("c6");
    }
    if tp == 0
        || tp == n
        || sign(v[tp] - v[tp - 1]) != -sign(v[tp + 1] - v[tp])
        || sign(v[tp] - v[tp - 1]) == 0
    {
        bad.push("c7");
    }
    if (v[tp] - v[1]).abs().min((v[tp] - v[n - 1]).abs()) < MIN_WAVE_AMPLITUDE {
        bad.push("c8");
    }
    bad
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveDetection {
    pub t_begin: Time,
    pub t_end: Time,
    pub t_tp: Time,
    pub wave: WaveObservation,
}

/// Waves whose onset lies in `begin` and whose end lies in `end`. The onset
/// is a change of slope, the wave turns once and ends at the next change.
pub fn detect_waves(
    s: &SampleSeries,
    begin: (Time, Time),
    end: (Time, Time),
) -> Vec<WaveDetection> {
    let v = &s.v;
    let slope = |k: usize| sign(v[k + 1] - v[k]);
    let mut out: Vec<WaveDetection> = Vec::new();
    for i in s.range(begin.0, begin.1) {
        if i == 0 || i + 3 >= v.len() {
            continue;
        }
        let s0 = slope(i);
        if s0 == 0 || sign(v[i] - v[i - 1]) == s0 {
            continue;
        }
        let mut k = i + 1;
        while k + 1 < v.len() && slope(k) == s0 {
            k += 1;
        }
        if k + 1 >= v.len() || slope(k) != -s0 {
            continue;
        }
        let mut j = k + 1;
        while j + 1 < v.len() && slope(j) == -s0 {
            j += 1;
        }
        if j + 1 >= v.len() || s.t[j] < end.0 || s.t[j] > end.1 {
            continue;
        }
        let (ts, vs) = (&s.t[i - 1..=j + 1], &v[i - 1..=j + 1]);
        if !wave_shape(ts, vs).is_empty() {
            continue;
        }
        let w = wave_observation(vs).expect("checked shape");
        if out.iter().all(|d| (d.t_begin, d.t_end) != (s.t[i], s.t[j])) {
            out.push(WaveDetection {
                t_begin: s.t[i],
                t_end: s.t[j],
                t_tp: ts[w.tp],
                wave: w,
            });
        }
    }
    out
}

/// T wave limits: the wave's own limits, once it is known to follow the QRS.
pub fn tw_delin(qrs: (Time, Time), wave: (Time, Time)) -> Result<(Time, Time), EcgError> {
    if wave.0 < qrs.1 {
        return Err(EcgError::WaveBeforeQrs {
            wave: wave.0,
            qrs_end: qrs.1,
        });
    }
    Ok(wave)
}

/// The steepest slope inside the wave is at most `ratio` times the steepest
/// slope inside the QRS. Windows without samples are not judged.
pub fn max_slope_ratio(
    s: &SampleSeries,
    wave: (Time, Time),
    qrs: (Time, Time),
    ratio: f64,
) -> bool {
    match (s.max_abs_diff(wave.0, wave.1), s.max_abs_diff(qrs.0, qrs.1)) {
        (Some(w), Some(q)) => w <= ratio * q,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientPoint {
    pub t: Time,
    pub slope: f64,
}

pub const DEFAULT_REFRACTORY: Time = 200;

/// Local maxima of the absolute first difference above `threshold`
/// (default three times the median), one per refractory window.
pub fn detect_salient(
    s: &SampleSeries,
    threshold: Option<f64>,
    refractory: Time,
) -> Vec<SalientPoint> {
    if s.len() < 2 {
        return Vec::new();
    }
    // d[k] is the slope arriving at sample k + 1.
    let d: Vec<f64> = s.v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let threshold = threshold.unwrap_or_else(|| {
        let mut m = d.clone();
        m.sort_by(f64::total_cmp);
        3.0 * m[m.len() / 2]
    });
    let mut out: Vec<SalientPoint> = Vec::new();
    for k in 0..d.len() {
        let left = k == 0 || d[k] >= d[k - 1];
        let right = k + 1 == d.len() || d[k] > d[k + 1];
        if !(left && right && d[k] > threshold) {
            continue;
        }
        let p = SalientPoint {
            t: s.t[k + 1],
            slope: d[k],
        };
        match out.last_mut() {
            Some(last) if p.t - last.t < refractory => {
                if p.slope > last.slope {
                    *last = p;
                }
            }
            _ => out.push(p),
        }
    }
    out
}
