//! Small reference problems used by the tests, the CLI demos and the
//! acceptance suite.

use std::sync::Arc;

use crate::ecg::{self, SampleSeries};
use crate::grammar::{KbSource, KnowledgeBase};
use crate::interp::{Problem, ProblemOptions};
use crate::model::{Observation, Time, Value};
use crate::procedures::Registry;

/// Sampled points of the sinusoid example, `(t, V)`.
pub const SINUS_POINTS: [(Time, f64); 30] = [
    (1, 3.4),
    (4, 17.6),
    (8, 12.9),
    (10, 2.6),
    (14, -17.5),
    (15, -20.0),
    (19, -10.5),
    (21, -0.8),
    (22, 7.8),
    (24, 17.5),
    (26, 19.4),
    (27, 19.4),
    (28, 17.6),
    (30, 7.8),
    (34, -14.9),
    (35, -16.3),
    (40, -11.6),
    (45, 15.6),
    (47, 17.1),
    (55, -15.8),
    (64, 7.7),
    (70, 13.7),
    (73, 2.7),
    (78, -19.8),
    (80, -19.6),
    (83, -3.1),
    (84, 0.2),
    (85, 8.1),
    (86, 9.6),
    (94, 0.0),
];

pub const BRADY_KB: &str = "
observable beat { process heart_beat; instant; }
observable BRADY { process rhythm; }
grammar G_brady hypothesizes BRADY {
  H -> beat D { abstracted; h.Tb = m.T }
  D -> beat E { abstracted; 1000 <= m.T - prev.T <= 2000 }
  E -> beat E { abstracted; 1000 <= m.T - prev.T <= 2000 }
  E -> beat { abstracted; 1000 <= m.T - prev.T <= 2000; h.Te = m.T }
}
";

pub fn kb(sources: &[&str]) -> Arc<KnowledgeBase> {
    let named: Vec<KbSource<'_>> = sources
        .iter()
        .enumerate()
        .map(|(i, t)| KbSource {
            name: ["first", "second", "third"].get(i).copied().unwrap_or("kb"),
            text: t,
        })
        .collect();
    Arc::new(
        KnowledgeBase::parse_sources(&named, &Registry::with_builtins())
            .expect("fixture KB parses"),
    )
}

fn problem(kb: Arc<KnowledgeBase>, obs: Vec<Observation>, opts: ProblemOptions) -> Problem {
    Problem::new(kb, Arc::new(Registry::with_builtins()), obs, opts)
        .expect("fixture problem is valid")
}

pub fn sinus() -> Problem {
    let obs = SINUS_POINTS
        .iter()
        .enumerate()
        .map(|(i, &(t, v))| Observation::instant(&format!("p{i}"), "p", t).with("V", Value::Num(v)))
        .collect();
    problem(kb(&[ecg::SINUS_KB]), obs, ProblemOptions::default())
}

/// One cardiac cycle sampled every 4 ms: a P wave, a QRS complex of
/// 1000 uV over 463..549 and a T wave shaped as a 300 uV half sine over
/// 652..876.
pub fn worked_example_series() -> SampleSeries {
    let t: Vec<Time> = (0..300).map(|i| i * 4).collect();
    let half_sine = |t: Time, b: Time, e: Time, a: f64| {
        (a * 10.0 * (std::f64::consts::PI * (t - b) as f64 / (e - b) as f64).sin()).round() / 10.0
    };
    let v = t
        .iter()
        .map(|&t| match t {
            300..=403 => half_sine(t, 300, 403, 120.0),
            463..=506 => (1000.0 * (t - 463) as f64 / 43.0).round(),
            507..=549 => (1000.0 * (549 - t) as f64 / 43.0).round(),
            652..=876 => half_sine(t, 652, 876, 300.0),
            _ => 0.0,
        })
        .collect();
    SampleSeries::new(t, v).expect("increasing")
}

pub fn worked_example_observations() -> (Vec<Observation>, Vec<(String, Vec<String>)>) {
    let obs = vec![
        Observation::new("pw", "Pw", 300, 403),
        Observation::new("qrs", "QRS", 463, 549),
        Observation::new("wave1", "wave", 300, 403),
        Observation::new("wave2", "wave", 463, 549),
    ];
    let abstracts = vec![
        ("pw".to_string(), vec!["wave1".to_string()]),
        ("qrs".to_string(), vec!["wave2".to_string()]),
    ];
    (obs, abstracts)
}

pub fn worked_example() -> Problem {
    let (obs, abstracts) = worked_example_observations();
    problem(
        kb(&[ecg::ECG_WAVES_KB]),
        obs,
        ProblemOptions {
            abstracts,
            series: Some(worked_example_series()),
            salient: false,
        },
    )
}

fn beats(kind: &[(&str, Time)]) -> Vec<Observation> {
    kind.iter()
        .enumerate()
        .map(|(i, &(q, t))| Observation::instant(&format!("b{i}"), q, t))
        .collect()
}

pub fn rhythm_kb() -> Arc<KnowledgeBase> {
    kb(&[ecg::ECG_WAVES_KB, ecg::ECG_RHYTHMS_KB])
}

/// Alternating normal and ventricular beats.
pub fn bigeminy() -> Problem {
    let obs = beats(&[
        ("Nb", 0),
        ("Vb", 400),
        ("Nb", 1200),
        ("Vb", 1600),
        ("Nb", 2400),
        ("Vb", 2800),
    ]);
    problem(rhythm_kb(), obs, ProblemOptions::default())
}

/// Nine normal beats 800 ms apart.
pub fn nine_beats() -> Problem {
    let obs = beats(&(0..9).map(|i| ("Nb", 400 + 800 * i)).collect::<Vec<_>>());
    problem(rhythm_kb(), obs, ProblemOptions::default())
}

/// Six beats 800 ms apart under a rhythm that needs 1000..2000 ms.
pub fn brady() -> Problem {
    let obs = beats(&(0..6).map(|i| ("beat", 400 + 800 * i)).collect::<Vec<_>>());
    problem(kb(&[BRADY_KB]), obs, ProblemOptions::default())
}

fn qrs(id: &str, t: Time, width: Time) -> Observation {
    Observation::new(id, "QRS", t, t + width)
}

/// Eight QRS annotations of a regular rhythm plus two 10 ms artefacts.
pub fn ignorance() -> Problem {
    let mut obs: Vec<Observation> = (0..8)
        .map(|i| qrs(&format!("q{i}"), 400 + 800 * i, 80))
        .collect();
    obs.push(qrs("noise1", 400 + 800 * 2 + 300, 10));
    obs.push(qrs("noise2", 400 + 800 * 5 + 300, 10));
    problem(rhythm_kb(), obs, ProblemOptions::default())
}

/// QRS onset times of the missing-beat signal; the seventh is not annotated.
pub const MISSING_BEAT_ONSETS: [Time; 8] = [400, 1200, 2000, 2800, 3600, 4400, 5200, 6000];
pub const MISSING_BEAT: usize = 6;

pub fn missing_beat_series() -> SampleSeries {
    let t: Vec<Time> = (0..1700).map(|i| i * 4).collect();
    let v = t
        .iter()
        .map(|&t| {
            MISSING_BEAT_ONSETS
                .iter()
                .enumerate()
                .map(|(k, &b)| {
                    let amp = if k == MISSING_BEAT { 120.0 } else { 1000.0 };
                    let d = t - b;
                    if (0..=40).contains(&d) {
                        (amp * d as f64 / 40.0).round()
                    } else if (41..=80).contains(&d) {
                        (amp * (80 - d) as f64 / 40.0).round()
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    SampleSeries::new(t, v).expect("increasing")
}

pub fn missing_beat() -> Problem {
    let obs = MISSING_BEAT_ONSETS
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != MISSING_BEAT)
        .map(|(k, &t)| qrs(&format!("q{k}"), t, 80))
        .collect();
    problem(
        rhythm_kb(),
        obs,
        ProblemOptions {
            series: Some(missing_beat_series()),
            ..ProblemOptions::default()
        },
    )
}
