#![allow(dead_code)]

use std::collections::BTreeSet;

use construe::temporal::{TemporalNetwork, VarId, INF, ORIGIN};
use rand::Rng;

/// Variables range over `[-RANGE, RANGE]` in the brute-force networks.
pub const RANGE: i64 = 5;

#[derive(Debug, Clone)]
pub struct SmallNetwork {
    pub vars: usize,
    /// `(x, y, lo, hi)` meaning `lo <= x - y <= hi`, 0 being the origin.
    pub constraints: Vec<(usize, usize, i64, i64)>,
}

pub fn random_network(rng: &mut impl Rng) -> SmallNetwork {
    let vars = rng.gen_range(1..=4);
    let mut constraints: Vec<(usize, usize, i64, i64)> =
        (1..=vars).map(|v| (v, 0, -RANGE, RANGE)).collect();
    for _ in 0..rng.gen_range(0..=6) {
        let x = rng.gen_range(0..=vars);
        let y = rng.gen_range(0..=vars);
        if x == y {
            continue;
        }
        let lo = rng.gen_range(-6..=6);
        let hi = lo + rng.gen_range(-1..=6);
        constraints.push((x, y, lo, hi));
    }
    SmallNetwork { vars, constraints }
}

/// Builds the network constraint by constraint; `None` if any addition fails.
pub fn build(n: &SmallNetwork) -> (TemporalNetwork, Vec<VarId>, bool) {
    let mut net = TemporalNetwork::new();
    let mut ids = vec![ORIGIN];
    for v in 1..=n.vars {
        ids.push(net.add_variable(format!("x{v}")));
    }
    let mut ok = true;
    for &(x, y, lo, hi) in &n.constraints {
        if net.add_constraint(ids[x], ids[y], lo, hi, "c").is_err() {
            ok = false;
            break;
        }
    }
    (net, ids, ok)
}

/// Every integer solution; the origin is fixed at 0.
pub fn solutions(n: &SmallNetwork) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; n.vars + 1];
    fn rec(n: &SmallNetwork, k: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if k > n.vars {
            if n.constraints.iter().all(|&(x, y, lo, hi)| {
                let d = cur[x] - cur[y];
                lo <= d && d <= hi
            }) {
                out.push(cur.clone());
            }
            return;
        }
        for v in -RANGE..=RANGE {
            cur[k] = v;
            rec(n, k + 1, cur, out);
        }
    }
    rec(n, 1, &mut cur, &mut out);
    out
}

/// Disagreements between the network and exhaustive enumeration.
pub fn stn_disagreements(n: &SmallNetwork) -> Vec<String> {
    let (net, ids, ok) = build(n);
    let sols = solutions(n);
    let mut out = Vec::new();
    if ok != !sols.is_empty() {
        out.push(format!("consistency {ok} but {} solutions", sols.len()));
        return out;
    }
    if !ok {
        return out;
    }
    for a in 0..=n.vars {
        for b in 0..=n.vars {
            let max = sols.iter().map(|s| s[b] - s[a]).max().unwrap();
            let d = net.distance(ids[a], ids[b]);
            if d != max {
                out.push(format!("d[{a}][{b}] = {d}, largest x{b} - x{a} = {max}"));
            }
        }
    }
    let mut again = net.clone();
    again.propagate();
    for a in 0..=n.vars {
        for b in 0..=n.vars {
            if again.distance(ids[a], ids[b]) != net.distance(ids[a], ids[b]) {
                out.push(format!("full propagation changes d[{a}][{b}]"));
            }
        }
    }
    let mut twice = again.clone();
    twice.propagate();
    if (0..=n.vars).any(|a| {
        (0..=n.vars).any(|b| twice.distance(ids[a], ids[b]) != again.distance(ids[a], ids[b]))
    }) {
        out.push("propagation is not idempotent".into());
    }
    out
}

/// Domains never widen when a constraint is added.
pub fn monotone(n: &SmallNetwork, extra: (usize, usize, i64, i64)) -> bool {
    let (net, ids, ok) = build(n);
    if !ok || extra.0 > n.vars || extra.1 > n.vars || extra.0 == extra.1 {
        return true;
    }
    let mut more = net.clone();
    if more
        .add_constraint(ids[extra.0], ids[extra.1], extra.2, extra.3, "extra")
        .is_err()
    {
        return true;
    }
    (0..=n.vars).all(|a| {
        (0..=n.vars).all(|b| {
            let (d0, d1) = (net.distance(ids[a], ids[b]), more.distance(ids[a], ids[b]));
            d1 <= d0 || d0 >= INF
        })
    })
}

/// A grammar over `a`, `b`, `c` built from segments, each one terminal
/// either once or repeated, with the equivalent regular expression over
/// space-terminated words.
pub fn segment_grammar(segments: &[(char, bool)]) -> (String, String) {
    let mut kb = String::new();
    for t in ['a', 'b', 'c'] {
        kb.push_str(&format!("observable {t} {{ process p{t}; instant; }}\n"));
    }
    kb.push_str("observable Z { process pz; }\ngrammar G_Z hypothesizes Z {\n");
    let nt = |i: usize| {
        if i == 0 {
            "H".to_string()
        } else {
            format!("N{i}")
        }
    };
    let last = segments.len() - 1;
    let mut re = String::from("^");
    for (i, &(t, repeat)) in segments.iter().enumerate() {
        let next = if i == last {
            String::new()
        } else {
            format!(" {}", nt(i + 1))
        };
        if repeat {
            // the head can't loop on itself, so the loop lives in a fresh symbol
            let lp = format!("L{i}");
            kb.push_str(&format!("  {} -> {t}{next} {{ abstracted }}\n", nt(i)));
            kb.push_str(&format!("  {} -> {t} {lp} {{ abstracted }}\n", nt(i)));
            kb.push_str(&format!("  {lp} -> {t} {lp} {{ abstracted }}\n"));
            kb.push_str(&format!("  {lp} -> {t}{next} {{ abstracted }}\n"));
            re.push_str(&format!("(?:{t} )+"));
        } else {
            kb.push_str(&format!("  {} -> {t}{next} {{ abstracted }}\n", nt(i)));
            re.push_str(&format!("{t} "));
        }
    }
    kb.push_str("}\n");
    re.push('$');
    (kb, re)
}

/// All words over `alphabet` with 1..=max letters, space-terminated.
pub fn all_words(alphabet: &[&str], max: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for w in &layer {
            for a in alphabet {
                next.push(format!("{w}{a} "));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Words the pattern generator yields for grammar `g`, space-terminated.
pub fn generated_words(
    kb: &construe::grammar::KnowledgeBase,
    g: usize,
    max: usize,
) -> BTreeSet<String> {
    construe::grammar::enumerate_states(kb, g, max)
        .into_iter()
        .map(|s| s.word().iter().map(|w| format!("{w} ")).collect())
        .collect()
}

pub fn reference_words(re: &str, alphabet: &[&str], max: usize) -> BTreeSet<String> {
    let re = regex::Regex::new(re).unwrap();
    all_words(alphabet, max)
        .into_iter()
        .filter(|w| re.is_match(w))
        .collect()
}
