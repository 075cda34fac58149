//! Label switching, semantic and spelling similarity, and the
//! switched/unswitched similarity splits.

mod jaro;
mod wordvec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ConditionCode;
use crate::normalize_label;

pub use jaro::{jaro, jaro_winkler, WINKLER_P, WINKLER_PREFIX_CAP};
pub use wordvec::{load_word_vectors, semantic_similarity, MissPolicy, WordVectorError, WordVectorStore};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no records for condition {0}")]
    NoRecords(ConditionCode),
    #[error("semantic similarity needs a word-vector store")]
    MissingStore,
}

/// Outcome of one (image, word, prompt) trial against its no-word control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub image_id: String,
    pub condition: ConditionCode,
    pub prompt_id: String,
    pub word: String,
    /// Prediction on the no-word image.
    pub orig_label: String,
    /// Prediction on the word-superimposed image.
    pub new_label: String,
    pub switched: bool,
    pub orig_prob: f64,
    pub new_prob: f64,
}

impl PairRecord {
    /// `switched` is derived from the labels.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        image_id: impl Into<String>,
        condition: ConditionCode,
        prompt_id: impl Into<String>,
        word: impl Into<String>,
        orig_label: impl Into<String>,
        new_label: impl Into<String>,
        orig_prob: f64,
        new_prob: f64,
    ) -> Self {
        let orig_label = orig_label.into();
        let new_label = new_label.into();
        PairRecord {
            switched: normalize_label(&orig_label) != normalize_label(&new_label),
            image_id: image_id.into(),
            condition,
            prompt_id: prompt_id.into(),
            word: word.into(),
            orig_label,
            new_label,
            orig_prob,
            new_prob,
        }
    }
}

/// Percentage of the condition's records whose label switched.
pub fn switching_rate(records: &[PairRecord], condition: ConditionCode) -> Result<f64, MetricsError> {
    let (total, switched) = records
        .iter()
        .filter(|r| r.condition == condition)
        .fold((0usize, 0usize), |(t, s), r| (t + 1, s + r.switched as usize));
    if total == 0 {
        return Err(MetricsError::NoRecords(condition));
    }
    Ok(100.0 * switched as f64 / total as f64)
}

/// Rates for every condition present in `records`.
pub fn switching_rates(records: &[PairRecord]) -> BTreeMap<ConditionCode, f64> {
    let mut counts: BTreeMap<ConditionCode, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(r.condition).or_default();
        e.0 += 1;
        e.1 += r.switched as usize;
    }
    counts
        .into_iter()
        .map(|(c, (t, s))| (c, 100.0 * s as f64 / t as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    Semantic,
    Spelling,
}

impl SimilarityMetric {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::Semantic => "semantic",
            SimilarityMetric::Spelling => "spelling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySplit {
    pub switched_values: Vec<f64>,
    pub unswitched_values: Vec<f64>,
    pub switched_median: Option<f64>,
    pub unswitched_median: Option<f64>,
    pub missing_count: usize,
}

impl SimilaritySplit {
    pub fn total(&self) -> usize {
        self.switched_values.len() + self.unswitched_values.len() + self.missing_count
    }
}

/// Median; even lengths average the middle two. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Similarity between a label and a word under `metric`; `None` is missing.
pub fn label_word_similarity(
    metric: SimilarityMetric,
    store: Option<&WordVectorStore>,
    label: &str,
    word: &str,
) -> Result<Option<f64>, MetricsError> {
    match metric {
        SimilarityMetric::Spelling => Ok(Some(jaro_winkler(&normalize_label(label), &normalize_label(word)))),
        SimilarityMetric::Semantic => {
            let store = store.ok_or(MetricsError::MissingStore)?;
            Ok(semantic_similarity(store, label, word))
        }
    }
}

/// Partition similarity(orig_label, word) by whether the record switched.
pub fn split_by_switch(
    records: &[PairRecord],
    metric: SimilarityMetric,
    store: Option<&WordVectorStore>,
) -> Result<SimilaritySplit, MetricsError> {
    let mut switched_values = Vec::new();
    let mut unswitched_values = Vec::new();
    let mut missing_count = 0;
    for r in records {
        match label_word_similarity(metric, store, &r.orig_label, &r.word)? {
            Some(s) if r.switched => switched_values.push(s),
            Some(s) => unswitched_values.push(s),
            None => missing_count += 1,
        }
    }
    Ok(SimilaritySplit {
        switched_median: median(&switched_values),
        unswitched_median: median(&unswitched_values),
        switched_values,
        unswitched_values,
        missing_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relatedness {
    pub values: Vec<f64>,
    pub median: Option<f64>,
    pub missing_count: usize,
}

/// semantic_similarity(new_label, word) over switched records.
pub fn switched_label_relatedness(records: &[PairRecord], store: &WordVectorStore) -> Relatedness {
    let mut values = Vec::new();
    let mut missing_count = 0;
    for r in records.iter().filter(|r| r.switched) {
        match semantic_similarity(store, &r.new_label, &r.word) {
            Some(s) => values.push(s),
            None => missing_count += 1,
        }
    }
    Relatedness {
        median: median(&values),
        values,
        missing_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pr(orig: &str, new: &str, word: &str, cond: ConditionCode) -> PairRecord {
        PairRecord::new("img", cond, "default", word, orig, new, 0.9, 0.8)
    }

    #[test]
    fn switched_derived_from_labels() {
        assert!(!pr("Dog", "dog ", "cat", ConditionCode::BB).switched);
        assert!(pr("dog", "cat", "cat", ConditionCode::BB).switched);
    }

    #[test]
    fn rates() {
        let none = vec![pr("dog", "dog", "cat", ConditionCode::BB); 4];
        assert_eq!(switching_rate(&none, ConditionCode::BB).unwrap(), 0.0);
        let mut mixed = vec![pr("dog", "dog", "cat", ConditionCode::SS); 5];
        mixed.extend(vec![pr("dog", "cat", "cat", ConditionCode::SS); 3]);
        assert_eq!(switching_rate(&mixed, ConditionCode::SS).unwrap(), 37.5);
        assert_eq!(
            switching_rate(&mixed, ConditionCode::BB),
            Err(MetricsError::NoRecords(ConditionCode::BB))
        );
        let all = switching_rates(&mixed);
        assert_eq!(all.len(), 1);
        assert_eq!(all[&ConditionCode::SS], 37.5);
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[0.4, 0.2]), Some(0.30000000000000004));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    }

    #[test]
    fn split_three_records() {
        let store = WordVectorStore::from_pairs(vec![
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
        ])
        .unwrap();
        // spelling on three hand-picked pairs, oracle by sorting
        let recs = vec![
            pr("dog", "cat", "dot", ConditionCode::BB),
            pr("dog", "cat", "xyz", ConditionCode::BB),
            pr("dog", "dog", "dog", ConditionCode::BB),
        ];
        let split = split_by_switch(&recs, SimilarityMetric::Spelling, None).unwrap();
        assert_eq!(split.switched_values.len(), 2);
        assert_eq!(split.unswitched_values, vec![1.0]);
        let mut sorted = split.switched_values.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(split.switched_median, Some((sorted[0] + sorted[1]) / 2.0));

        let sem = split_by_switch(&recs, SimilarityMetric::Semantic, Some(&store)).unwrap();
        assert_eq!(sem.missing_count, 3);
        assert_eq!(sem.total(), 3);
        assert_eq!(
            split_by_switch(&recs, SimilarityMetric::Semantic, None),
            Err(MetricsError::MissingStore)
        );
    }

    #[test]
    fn split_medians_from_values() {
        // (switched, 0.2), (switched, 0.4), (unswitched, 0.3) via a store
        // whose cosines against "w" are exactly those values
        let angle = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        let store = WordVectorStore::from_pairs(vec![
            ("w".to_string(), vec![1.0, 0.0]),
            ("p".to_string(), angle(0.2)),
            ("q".to_string(), angle(0.4)),
            ("r".to_string(), angle(0.3)),
        ])
        .unwrap();
        let recs = vec![
            pr("p", "x", "w", ConditionCode::SS),
            pr("q", "x", "w", ConditionCode::SS),
            pr("r", "r", "w", ConditionCode::SS),
        ];
        let s = split_by_switch(&recs, SimilarityMetric::Semantic, Some(&store)).unwrap();
        assert!((s.switched_median.unwrap() - 0.3).abs() < 1e-12);
        assert!((s.unswitched_median.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_partition() {
        let recs = vec![pr("dog", "cat", "cat", ConditionCode::BB)];
        let s = split_by_switch(&recs, SimilarityMetric::Spelling, None).unwrap();
        assert!(s.unswitched_values.is_empty());
        assert_eq!(s.unswitched_median, None);
    }

    #[test]
    fn identity_spelling() {
        let recs = vec![
            pr("dog", "dog", "dog", ConditionCode::BB),
            pr("dog", "cat", "Dog", ConditionCode::BB),
        ];
        let s = split_by_switch(&recs, SimilarityMetric::Spelling, None).unwrap();
        assert!(s.switched_values.iter().chain(&s.unswitched_values).all(|v| *v == 1.0));
    }

    #[test]
    fn relatedness() {
        let store = WordVectorStore::from_pairs(vec![
            ("cat".to_string(), vec![1.0, 0.5]),
            ("dog".to_string(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let recs = vec![
            pr("dog", "cat", "cat", ConditionCode::BB),
            pr("dog", "dog", "cat", ConditionCode::BB),
            pr("dog", "moose", "cat", ConditionCode::BB),
        ];
        let r = switched_label_relatedness(&recs, &store);
        assert_eq!(r.values, vec![1.0]);
        assert_eq!(r.missing_count, 1);
        let none = switched_label_relatedness(&recs[1..2], &store);
        assert!(none.values.is_empty());
    }

    proptest! {
        #[test]
        fn rate_permutation_invariant(flags in proptest::collection::vec(any::<bool>(), 1..40), rot in 0usize..40) {
            let recs: Vec<PairRecord> = flags
                .iter()
                .map(|&s| pr("dog", if s { "cat" } else { "dog" }, "cat", ConditionCode::SB))
                .collect();
            let mut rotated = recs.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            prop_assert_eq!(
                switching_rate(&recs, ConditionCode::SB).unwrap(),
                switching_rate(&rotated, ConditionCode::SB).unwrap()
            );
        }

        #[test]
        fn split_partitions(labels in proptest::collection::vec(("[a-c]{1,3}", "[a-c]{1,3}", "[a-c]{1,3}"), 0..30)) {
            let store = WordVectorStore::from_pairs(vec![
                ("a".to_string(), vec![1.0, 0.0]),
                ("b".to_string(), vec![0.3, 1.0]),
                ("ab".to_string(), vec![-1.0, 0.2]),
            ]).unwrap();
            let recs: Vec<PairRecord> = labels
                .iter()
                .map(|(o, n, w)| pr(o, n, w, ConditionCode::BB))
                .collect();
            for metric in [SimilarityMetric::Semantic, SimilarityMetric::Spelling] {
                let s = split_by_switch(&recs, metric, Some(&store)).unwrap();
                prop_assert_eq!(s.total(), recs.len());
                let n_switched = recs.iter().filter(|r| r.switched).count();
                prop_assert!(s.switched_values.len() <= n_switched);
                prop_assert!(s.unswitched_values.len() <= recs.len() - n_switched);
            }
        }
    }
}
