use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, RouterError};
use crate::domain::Route;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    /// Cosine distance is `1 - cos`.
    pub fn distance(self, a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        match self {
            Metric::Cosine => 1.0 - a.cosine(b),
            Metric::Euclidean => a.euclidean(b),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = RouterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(RouterError::InvalidModel(format!("unknown metric {other}"))),
        }
    }
}

/// Router class label. Any label set is accepted; only `Rare` selects the
/// rare-disease branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouteLabel(String);

impl RouteLabel {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn common() -> Self {
        Self::new("Common")
    }

    pub fn rare() -> Self {
        Self::new("Rare")
    }

    pub fn healthy() -> Self {
        Self::new("Healthy")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn route(&self) -> Route {
        if self.0.eq_ignore_ascii_case("rare") {
            Route::Rare
        } else {
            Route::Common
        }
    }
}

impl fmt::Display for RouteLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub v: EmbeddingVector,
    pub label: RouteLabel,
}

/// Lazy KNN classifier: stores every training example.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterModel {
    dim: usize,
    metric: Metric,
    knn_k: usize,
    label_set: Vec<RouteLabel>,
    points: Vec<ReferencePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub label: RouteLabel,
    /// Fraction of the k neighbors voting for `label`.
    pub score: f64,
    /// Reference indices, nearest first.
    pub neighbor_ids: Vec<usize>,
}

impl RouteDecision {
    pub fn route(&self) -> Route {
        self.label.route()
    }
}

/// On-disk form: `{dim, metric, knn_k, labels[], points:[{v, label}]}`.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    metric: Metric,
    knn_k: usize,
    labels: Vec<RouteLabel>,
    points: Vec<ReferencePoint>,
}

pub fn fit_router(
    examples: Vec<(EmbeddingVector, RouteLabel)>,
    knn_k: usize,
    metric: Metric,
) -> Result<RouterModel, RouterError> {
    let first = examples.first().ok_or(RouterError::EmptyTrainingSet)?;
    if knn_k == 0 || knn_k > examples.len() {
        return Err(RouterError::KTooLarge {
            k: knn_k,
            n: examples.len(),
        });
    }
    let dim = first.0.dim();
    let mut label_set: Vec<RouteLabel> = Vec::new();
    let mut points = Vec::with_capacity(examples.len());
    for (v, label) in examples {
        if v.dim() != dim {
            return Err(RouterError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        if !label_set.contains(&label) {
            label_set.push(label.clone());
        }
        points.push(ReferencePoint { v, label });
    }
    Ok(RouterModel {
        dim,
        metric,
        knn_k,
        label_set,
        points,
    })
}

impl RouterModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn knn_k(&self) -> usize {
        self.knn_k
    }

    pub fn label_set(&self) -> &[RouteLabel] {
        &self.label_set
    }

    pub fn points(&self) -> &[ReferencePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Plurality vote over the k nearest references.
    ///
    /// Distance ties when selecting neighbors go to the lower reference
    /// index. Vote ties go to the label with the smaller mean neighbor
    /// distance, then to the label seen first during fitting.
    pub fn classify(&self, v: &EmbeddingVector) -> Result<RouteDecision, RouterError> {
        if v.dim() != self.dim {
            return Err(RouterError::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        let mut ranked: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (self.metric.distance(v, &p.v), i))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranked.truncate(self.knn_k);

        // label index -> (votes, distance sum)
        let mut tally: Vec<(usize, f64)> = vec![(0, 0.0); self.label_set.len()];
        for (d, i) in &ranked {
            let li = self
                .label_set
                .iter()
                .position(|l| *l == self.points[*i].label)
                .expect("label recorded at fit");
            tally[li].0 += 1;
            tally[li].1 += d;
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for (li, (votes, sum)) in tally.iter().enumerate() {
            if *votes == 0 {
                continue;
            }
            let mean = sum / *votes as f64;
            let better = match best {
                None => true,
                Some((_, bv, bm)) => *votes > bv || (*votes == bv && mean < bm),
            };
            if better {
                best = Some((li, *votes, mean));
            }
        }
        let (li, votes, _) = best.expect("k >= 1 neighbors");
        Ok(RouteDecision {
            label: self.label_set[li].clone(),
            score: votes as f64 / self.knn_k as f64,
            neighbor_ids: ranked.into_iter().map(|(_, i)| i).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            dim: self.dim,
            metric: self.metric,
            knn_k: self.knn_k,
            labels: self.label_set.clone(),
            points: self.points.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RouterError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| RouterError::InvalidModel(e.to_string()))?;
        let examples: Vec<_> = file.points.into_iter().map(|p| (p.v, p.label)).collect();
        let mut model = fit_router(examples, file.knn_k, file.metric)?;
        if model.dim != file.dim {
            return Err(RouterError::DimensionMismatch {
                expected: file.dim,
                got: model.dim,
            });
        }
        // Keep the stored label order; it drives tie-breaks.
        for l in &model.label_set {
            if !file.labels.contains(l) {
                return Err(RouterError::InvalidModel(format!("point label {l} missing from labels")));
            }
        }
        model.label_set = file.labels;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), RouterError> {
        std::fs::write(path, self.to_json()).map_err(|e| RouterError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RouterError> {
        let text = std::fs::read_to_string(path).map_err(|e| RouterError::Io(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Accuracy and confusion counts over a labeled test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterEvaluation {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// gold label -> predicted label -> count
    pub confusion: BTreeMap<RouteLabel, BTreeMap<RouteLabel, usize>>,
}

impl RouterEvaluation {
    pub fn table(&self) -> String {
        let mut labels: Vec<&RouteLabel> = self.confusion.keys().collect();
        for row in self.confusion.values() {
            for l in row.keys() {
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
        }
        labels.sort();
        let width = labels.iter().map(|l| l.as_str().len()).max().unwrap_or(4).max(9);
        let mut out = format!("{:<width$}", "gold\\pred");
        for l in &labels {
            out.push_str(&format!(" {:>width$}", l.as_str()));
        }
        out.push('\n');
        for g in &labels {
            out.push_str(&format!("{:<width$}", g.as_str()));
            for p in &labels {
                let n = self
                    .confusion
                    .get(*g)
                    .and_then(|r| r.get(*p))
                    .copied()
                    .unwrap_or(0);
                out.push_str(&format!(" {n:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate_router(
    model: &RouterModel,
    test: &[(EmbeddingVector, RouteLabel)],
) -> Result<RouterEvaluation, RouterError> {
    let mut confusion: BTreeMap<RouteLabel, BTreeMap<RouteLabel, usize>> = BTreeMap::new();
    let mut correct = 0;
    for (v, gold) in test {
        let pred = model.classify(v)?.label;
        if &pred == gold {
            correct += 1;
        }
        *confusion.entry(gold.clone()).or_default().entry(pred).or_insert(0) += 1;
    }
    let n = test.len();
    Ok(RouterEvaluation {
        n,
        correct,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    fn three_points() -> Vec<(EmbeddingVector, RouteLabel)> {
        vec![
            (v(&[0.0, 0.0]), RouteLabel::common()),
            (v(&[0.0, 1.0]), RouteLabel::common()),
            (v(&[5.0, 5.0]), RouteLabel::rare()),
        ]
    }

    #[test]
    fn nearest_single_neighbor() {
        let m = fit_router(three_points(), 1, Metric::Euclidean).unwrap();
        let d = m.classify(&v(&[0.0, 0.01])).unwrap();
        assert_eq!(d.label, RouteLabel::common());
        assert_eq!(d.score, 1.0);
        assert_eq!(d.neighbor_ids, vec![0]);
    }

    #[test]
    fn majority_of_three() {
        let m = fit_router(three_points(), 3, Metric::Euclidean).unwrap();
        let d = m.classify(&v(&[0.0, 0.01])).unwrap();
        assert_eq!(d.label, RouteLabel::common());
        assert!((d.score - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.neighbor_ids, vec![0, 1, 2]);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(fit_router(vec![], 1, Metric::Cosine), Err(RouterError::EmptyTrainingSet));
        let ten: Vec<_> = (0..10).map(|i| (v(&[i as f64, 1.0]), RouteLabel::rare())).collect();
        assert_eq!(fit_router(ten.clone(), 11, Metric::Cosine), Err(RouterError::KTooLarge { k: 11, n: 10 }));
        assert_eq!(fit_router(ten, 3, Metric::Cosine).unwrap().len(), 10);
        let mixed = vec![(v(&[1.0]), RouteLabel::rare()), (v(&[1.0, 2.0]), RouteLabel::rare())];
        assert!(matches!(fit_router(mixed, 1, Metric::Cosine), Err(RouterError::DimensionMismatch { .. })));
    }

    #[test]
    fn conflicting_duplicates_are_stored_and_tie_broken() {
        let pts = vec![
            (v(&[1.0, 0.0]), RouteLabel::rare()),
            (v(&[1.0, 0.0]), RouteLabel::common()),
        ];
        let m = fit_router(pts, 2, Metric::Cosine).unwrap();
        assert_eq!(m.len(), 2);
        // Equal votes and equal mean distance: first-seen label wins.
        assert_eq!(m.classify(&v(&[1.0, 0.0])).unwrap().label, RouteLabel::rare());
        // k=1: exact distance tie goes to the lower index.
        let m = fit_router(m.points().iter().map(|p| (p.v.clone(), p.label.clone())).collect(), 1, Metric::Cosine).unwrap();
        assert_eq!(m.classify(&v(&[2.0, 0.0])).unwrap().neighbor_ids, vec![0]);
    }

    #[test]
    fn vote_tie_prefers_closer_label() {
        let pts = vec![
            (v(&[3.0]), RouteLabel::common()),
            (v(&[1.0]), RouteLabel::rare()),
        ];
        let m = fit_router(pts, 2, Metric::Euclidean).unwrap();
        assert_eq!(m.classify(&v(&[0.0])).unwrap().label, RouteLabel::rare());
    }

    #[test]
    fn query_dimension_checked() {
        let m = fit_router(three_points(), 1, Metric::Euclidean).unwrap();
        assert!(matches!(m.classify(&v(&[1.0])), Err(RouterError::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn json_round_trip_keeps_label_order() {
        let m = fit_router(three_points(), 3, Metric::Euclidean).unwrap();
        let json = m.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["dim"], 2);
        assert_eq!(parsed["labels"], serde_json::json!(["Common", "Rare"]));
        assert_eq!(parsed["points"][2]["label"], "Rare");
        assert_eq!(RouterModel::from_json(&json).unwrap(), m);
        assert!(RouterModel::from_json(r#"{"dim":3,"metric":"cosine","knn_k":1,"labels":["Rare"],"points":[{"v":[1,2],"label":"Rare"}]}"#).is_err());
    }

    #[test]
    fn only_rare_routes_rare() {
        assert_eq!(RouteLabel::rare().route(), Route::Rare);
        assert_eq!(RouteLabel::new("rare").route(), Route::Rare);
        assert_eq!(RouteLabel::healthy().route(), Route::Common);
        assert_eq!(RouteLabel::common().route(), Route::Common);
    }

    #[test]
    fn evaluation_counts() {
        let m = fit_router(three_points(), 1, Metric::Euclidean).unwrap();
        let test = vec![
            (v(&[0.1, 0.0]), RouteLabel::common()),
            (v(&[4.0, 4.0]), RouteLabel::rare()),
            (v(&[4.0, 5.0]), RouteLabel::common()),
        ];
        let e = evaluate_router(&m, &test).unwrap();
        assert_eq!((e.n, e.correct), (3, 2));
        assert_eq!(e.confusion[&RouteLabel::common()][&RouteLabel::rare()], 1);
        assert!(e.table().contains("gold\\pred"));
    }
}
