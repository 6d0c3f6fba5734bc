//! Aggregation of sampled summary answers into one answer and confidence.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::CandidateAnswer;

/// One sampled summary reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSample {
    pub sample_index: u32,
    pub answer: CandidateAnswer,
    #[serde(default)]
    pub alternatives: Vec<CandidateAnswer>,
}

/// Majority answer plus the mean confidence over every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub winner: CandidateAnswer,
    pub final_confidence: f64,
}

/// Order-independent mean: values are summed in sorted order.
fn mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

struct Tally<'a> {
    count: usize,
    confidences: Vec<f64>,
    members: Vec<&'a CandidateAnswer>,
}

fn tally<'a>(answers: impl Iterator<Item = &'a CandidateAnswer>) -> BTreeMap<&'a str, Tally<'a>> {
    let mut map: BTreeMap<&str, Tally> = BTreeMap::new();
    for a in answers {
        let t = map.entry(a.normalized_label.as_str()).or_insert_with(|| Tally {
            count: 0,
            confidences: Vec::new(),
            members: Vec::new(),
        });
        t.count += 1;
        t.confidences.push(a.confidence);
        t.members.push(a);
    }
    map
}

/// Higher count, then higher mean confidence, then smaller normalized label.
fn rank_order(a: (&str, usize, f64), b: (&str, usize, f64)) -> Ordering {
    b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(b.0))
}

/// Representative surface form for a label group, independent of sample order.
fn representative<'a>(members: &[&'a CandidateAnswer]) -> &'a CandidateAnswer {
    members
        .iter()
        .copied()
        .min_by(|x, y| {
            y.confidence
                .total_cmp(&x.confidence)
                .then_with(|| x.label.cmp(&y.label))
                .then_with(|| x.rationale.cmp(&y.rationale))
        })
        .expect("non-empty group")
}

/// Plurality vote over normalized labels; the final confidence is the mean
/// over all samples, winners and losers alike. `None` for no samples.
pub fn aggregate_confidence(samples: &[ConfidenceSample]) -> Option<Aggregate> {
    if samples.is_empty() {
        return None;
    }
    let groups = tally(samples.iter().map(|s| &s.answer));
    let mut ranked: Vec<(&str, usize, f64, &Tally)> = groups
        .iter()
        .map(|(label, t)| (*label, t.count, mean(&mut t.confidences.clone()), t))
        .collect();
    ranked.sort_by(|a, b| rank_order((a.0, a.1, a.2), (b.0, b.1, b.2)));
    let winner = representative(&ranked[0].3.members).clone();
    let mut all: Vec<f64> = samples.iter().map(|s| s.answer.confidence).collect();
    Some(Aggregate {
        winner,
        final_confidence: mean(&mut all),
    })
}

/// Up to `top_k` distinct answers: the aggregate winner (carrying the final
/// confidence) followed by the remaining primaries and alternatives, ranked
/// by how many samples mention them, then mean confidence, then label.
pub fn rank_answers(samples: &[ConfidenceSample], aggregate: &Aggregate, top_k: usize) -> Vec<CandidateAnswer> {
    let mut first = aggregate.winner.clone();
    first.confidence = aggregate.final_confidence;
    let mut out = vec![first];
    if top_k <= 1 {
        return out;
    }
    // A sample mentioning a label more than once counts once.
    let mut mentions: Vec<&CandidateAnswer> = Vec::new();
    for s in samples {
        let mut seen = std::collections::BTreeSet::new();
        for a in std::iter::once(&s.answer).chain(&s.alternatives) {
            if seen.insert(a.normalized_label.as_str()) {
                mentions.push(a);
            }
        }
    }
    let groups = tally(mentions.into_iter());
    let mut ranked: Vec<(&str, usize, f64, &Tally)> = groups
        .iter()
        .filter(|(label, _)| **label != aggregate.winner.normalized_label)
        .map(|(label, t)| (*label, t.count, mean(&mut t.confidences.clone()), t))
        .collect();
    ranked.sort_by(|a, b| rank_order((a.0, a.1, a.2), (b.0, b.1, b.2)));
    for (_, _, conf, t) in ranked.into_iter().take(top_k - 1) {
        let mut a = representative(&t.members).clone();
        a.confidence = conf;
        out.push(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::LabelKind;

    fn sample(i: u32, label: &str, conf: f64) -> ConfidenceSample {
        ConfidenceSample {
            sample_index: i,
            answer: CandidateAnswer::new(label, LabelKind::Disease, conf, "").unwrap(),
            alternatives: Vec::new(),
        }
    }

    #[test]
    fn majority_and_mean() {
        let s = [sample(0, "A", 80.0), sample(1, "a", 60.0), sample(2, "B", 100.0)];
        let agg = aggregate_confidence(&s).unwrap();
        assert_eq!(agg.winner.normalized_label, "a");
        assert_eq!(agg.winner.label, "A");
        assert!((agg.final_confidence - 80.0).abs() < 1e-9);
    }

    #[test]
    fn tie_broken_by_mean_confidence_then_label() {
        let s = [sample(0, "B", 70.0), sample(1, "A", 60.0)];
        assert_eq!(aggregate_confidence(&s).unwrap().winner.label, "B");
        let s = [sample(0, "B", 60.0), sample(1, "A", 60.0)];
        assert_eq!(aggregate_confidence(&s).unwrap().winner.label, "A");
    }

    #[test]
    fn single_sample_identity() {
        let s = [sample(0, "Distal arthrogryposis, type 10", 90.0)];
        let agg = aggregate_confidence(&s).unwrap();
        assert_eq!(agg.final_confidence, 90.0);
        assert_eq!(agg.winner.label, "Distal arthrogryposis, type 10");
        assert!(aggregate_confidence(&[]).is_none());
    }

    #[test]
    fn ranking_includes_alternatives() {
        let mut s0 = sample(0, "A", 80.0);
        s0.alternatives = vec![
            CandidateAnswer::new("C", LabelKind::Disease, 30.0, "").unwrap(),
            CandidateAnswer::new("B", LabelKind::Disease, 20.0, "").unwrap(),
        ];
        let s1 = sample(1, "A", 60.0);
        let s2 = sample(2, "B", 50.0);
        let samples = [s0, s1, s2];
        let agg = aggregate_confidence(&samples).unwrap();
        let ranked = rank_answers(&samples, &agg, 5);
        let labels: Vec<_> = ranked.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(labels, ["A", "B", "C"]);
        assert!((ranked[0].confidence - agg.final_confidence).abs() < 1e-12);
        assert!((ranked[1].confidence - 35.0).abs() < 1e-12);
        assert_eq!(rank_answers(&samples, &agg, 1).len(), 1);
        assert_eq!(rank_answers(&samples, &agg, 2).len(), 2);
    }
}
