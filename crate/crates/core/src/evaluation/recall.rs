use std::collections::HashSet;

use super::{EvalError, LabelKind, Normalizer};

/// Whether any of the first `k` predictions matches a gold label after
/// normalization.
pub fn recall_at_k(
    predictions: &[String],
    gold: &[String],
    k: usize,
    kind: LabelKind,
) -> Result<bool, EvalError> {
    recall_at_k_with(&Normalizer::default(), predictions, gold, k, kind)
}

pub fn recall_at_k_with(
    normalizer: &Normalizer,
    predictions: &[String],
    gold: &[String],
    k: usize,
    kind: LabelKind,
) -> Result<bool, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK(k));
    }
    let gold: HashSet<String> = gold
        .iter()
        .map(|g| normalizer.normalize(g, kind))
        .filter(|g| !g.is_empty())
        .collect();
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(predictions
        .iter()
        .take(k)
        .any(|p| gold.contains(&normalizer.normalize(p, kind))))
}

/// Dataset-level recall: fraction of hits.
pub fn mean_recall(hits: &[bool]) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn normalized_exact_match() {
        assert!(recall_at_k(&s(&["kabuki syndrome"]), &s(&["Kabuki Syndrome"]), 1, LabelKind::Disease).unwrap());
    }

    #[test]
    fn cutoff_respected() {
        let preds = s(&["a", "b", "c"]);
        assert!(!recall_at_k(&preds, &s(&["c"]), 2, LabelKind::Disease).unwrap());
        assert!(recall_at_k(&preds, &s(&["c"]), 3, LabelKind::Disease).unwrap());
        assert!(recall_at_k(&preds, &s(&["c"]), 10, LabelKind::Disease).unwrap());
        assert!(!recall_at_k(&[], &s(&["c"]), 10, LabelKind::Disease).unwrap());
    }

    #[test]
    fn mean_over_cases() {
        assert_eq!(mean_recall(&[true, true, false, true]), 0.75);
        assert_eq!(mean_recall(&[]), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(recall_at_k(&s(&["a"]), &[], 1, LabelKind::Gene), Err(EvalError::EmptyGold));
        assert_eq!(recall_at_k(&s(&["a"]), &s(&[" - "]), 1, LabelKind::Gene), Err(EvalError::EmptyGold));
        assert_eq!(recall_at_k(&s(&["a"]), &s(&["a"]), 0, LabelKind::Gene), Err(EvalError::InvalidK(0)));
    }
}
