//! Brute-force reference implementations and generators shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        (dot(a, b) / d).clamp(-1.0, 1.0)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exhaustive KNN: repeated linear scans pick the k nearest (first index wins
/// on equal distance), then a plain vote table decides.
pub fn knn_oracle(
    points: &[(Vec<f64>, String)],
    label_order: &[String],
    query: &[f64],
    k: usize,
    cosine: bool,
) -> (String, Vec<usize>, f64) {
    let dist: Vec<f64> = points
        .iter()
        .map(|(p, _)| if cosine { 1.0 - cosine_similarity(query, p) } else { euclidean(query, p) })
        .collect();
    let mut taken = vec![false; points.len()];
    let mut neighbors = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        neighbors.push(b);
    }
    let mut winner: Option<(usize, usize, f64)> = None;
    for (li, label) in label_order.iter().enumerate() {
        let ds: Vec<f64> = neighbors.iter().filter(|&&i| &points[i].1 == label).map(|&i| dist[i]).collect();
        if ds.is_empty() {
            continue;
        }
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        let take = match winner {
            None => true,
            Some((_, v, m)) => ds.len() > v || (ds.len() == v && mean < m),
        };
        if take {
            winner = Some((li, ds.len(), mean));
        }
    }
    let (li, votes, _) = winner.unwrap();
    (label_order[li].clone(), neighbors, votes as f64 / k as f64)
}

/// Exhaustive similarity sort: every pair compared, ties by index.
pub fn retrieval_oracle(patients: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(usize, f64)> {
    let sims: Vec<f64> = patients.iter().map(|p| cosine_similarity(query, p)).collect();
    let mut order: Vec<usize> = (0..patients.len()).collect();
    // Insertion sort keeps the oracle independent of library sorting.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (order[j - 1], order[j]);
            let swap = sims[b] > sims[a] || (sims[b] == sims[a] && b < a);
            if !swap {
                break;
            }
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    order.into_iter().take(k).map(|i| (i, sims[i])).collect()
}

/// Canonical base labels used by the aggregation and recall generators.
pub const BASES: [&str; 6] = [
    "kabuki syndrome",
    "distal arthrogryposis type 10",
    "noonan syndrome",
    "marfan syndrome",
    "ehlers danlos syndrome",
    "alpha beta",
];

/// A surface variant of `base` that normalizes back to `base`.
pub fn surface_variant<R: Rng>(rng: &mut R, base: &str) -> String {
    let words: Vec<String> = base
        .split(' ')
        .map(|w| match rng.random_range(0..3) {
            0 => w.to_string(),
            1 => w.to_uppercase(),
            _ => {
                let mut c = w.chars();
                match c.next() {
                    Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
                    None => String::new(),
                }
            }
        })
        .collect();
    let seps = [" ", "  ", "-", ", ", " / ", "_"];
    let mut out = String::new();
    if rng.random_bool(0.2) {
        out.push(' ');
    }
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push_str(seps.choose(rng).unwrap());
        }
        out.push_str(w);
    }
    if rng.random_bool(0.2) {
        out.push_str(". ");
    }
    out
}

/// Tally oracle for one sample set: `(base label, integer confidence)`.
/// Plurality, then higher mean confidence, then smaller label.
pub fn tally_oracle(samples: &[(&str, u32)]) -> (String, f64) {
    let mut labels: Vec<&str> = samples.iter().map(|s| s.0).collect();
    labels.sort();
    labels.dedup();
    let mut best: Option<(&str, usize, f64)> = None;
    for l in labels {
        let confs: Vec<u32> = samples.iter().filter(|s| s.0 == l).map(|s| s.1).collect();
        let count = confs.len();
        let mean = confs.iter().map(|&c| c as f64).sum::<f64>() / count as f64;
        let take = match best {
            None => true,
            Some((bl, bc, bm)) => count > bc || (count == bc && (mean > bm || (mean == bm && l < bl))),
        };
        if take {
            best = Some((l, count, mean));
        }
    }
    let total: f64 = samples.iter().map(|s| s.1 as f64).sum();
    (best.unwrap().0.to_string(), total / samples.len() as f64)
}

/// Set-intersection oracle over base labels.
pub fn recall_oracle(predictions: &[&str], gold: &[&str], k: usize) -> bool {
    let n = k.min(predictions.len());
    predictions[..n].iter().any(|p| gold.contains(p))
}

/// Random string over an alphabet mixing ASCII, punctuation, compatibility
/// forms, ligatures, combining marks and case-special letters.
pub fn fuzz_string<R: Rng>(rng: &mut R) -> String {
    const ALPHABET: &[&str] = &[
        "a", "B", "z", "Q", "0", "7", " ", "  ", "\t", "\n", ",", "-", "/", ".", "(", ")", "'", "_", "é", "É", "ß",
        "ẞ", "İ", "ı", "Σ", "ς", "ﬁ", "Ａ", "ｚ", "１", "\u{0301}", "\u{0308}", "e\u{0301}", "Ω", "Å", "ǅ", "№",
        "½", "²", "ⅷ", "한", "字", "\u{00A0}", "\u{2013}", "\u{200B}", "🙂",
    ];
    let len = rng.random_range(0..24);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}
