//! Diversity of generated sample sets.
//!
//! Both metrics average a pairwise score over all unordered pairs of samples of
//! one relation. Sentences are rebuilt from the `token` list, lowercased and
//! split on whitespace.
//!
//! - cosine: cosine similarity of raw term-frequency vectors;
//! - repetition: Jaccard overlap `|U₁ ∩ U₂| / |U₁ ∪ U₂|` of the unique words.
//!
//! Higher values mean less diverse data.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReSample;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiversityError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// The sentence behind a sample: its tokens joined by single spaces.
pub fn detokenize(sample: &ReSample) -> String {
    sample.tokens.join(" ")
}

fn words(sample: &ReSample) -> Vec<String> {
    detokenize(sample)
        .split_whitespace()
        .map(str::to_lowercase)
        .collect()
}

/// Word ids shared by all samples of one call.
#[derive(Default)]
struct Vocab(HashMap<String, u32>);

impl Vocab {
    /// Sorted `(word id, count)` pairs of one sample.
    fn counts(&mut self, sample: &ReSample) -> Vec<(u32, u32)> {
        let mut ids: Vec<u32> = words(sample)
            .into_iter()
            .map(|w| {
                let next = self.0.len() as u32;
                *self.0.entry(w).or_insert(next)
            })
            .collect();
        ids.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match out.last_mut() {
                Some((last, n)) if *last == id => *n += 1,
                _ => out.push((id, 1)),
            }
        }
        out
    }
}

struct TermVector {
    counts: Vec<(u32, u32)>,
    sq_norm: f64,
}

impl TermVector {
    fn new(counts: Vec<(u32, u32)>) -> Self {
        let sq_norm = counts.iter().map(|&(_, c)| f64::from(c) * f64::from(c)).sum();
        TermVector { counts, sq_norm }
    }
}

/// Calls `f(x, y)` for every id present in both sorted lists.
fn for_shared(a: &[(u32, u32)], b: &[(u32, u32)], mut f: impl FnMut(u32, u32)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                f(a[i].1, b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
}

fn cosine(a: &TermVector, b: &TermVector) -> f64 {
    if a.sq_norm == 0.0 || b.sq_norm == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    for_shared(&a.counts, &b.counts, |x, y| dot += f64::from(x) * f64::from(y));
    // one square root of the product keeps cos(v, v) exactly 1 for integer counts
    (dot / (a.sq_norm * b.sq_norm).sqrt()).clamp(0.0, 1.0)
}

fn jaccard(a: &[(u32, u32)], b: &[(u32, u32)]) -> f64 {
    let mut shared = 0usize;
    for_shared(a, b, |_, _| shared += 1);
    let union = a.len() + b.len() - shared;
    if union == 0 {
        return 0.0;
    }
    shared as f64 / union as f64
}

fn pairwise_mean<T>(items: &[T], score: impl Fn(&T, &T) -> f64) -> Result<f64, DiversityError> {
    let n = items.len();
    if n < 2 {
        return Err(DiversityError::TooFewSamples(n));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += score(&items[i], &items[j]);
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Mean cosine similarity of term-frequency vectors over all unordered pairs.
pub fn pairwise_cosine_mean(samples: &[ReSample]) -> Result<f64, DiversityError> {
    let mut vocab = Vocab::default();
    let vectors: Vec<TermVector> = samples.iter().map(|s| TermVector::new(vocab.counts(s))).collect();
    pairwise_mean(&vectors, cosine)
}

/// Mean Jaccard overlap of unique lowercased words over all unordered pairs.
pub fn word_repetition_mean(samples: &[ReSample]) -> Result<f64, DiversityError> {
    let mut vocab = Vocab::default();
    let sets: Vec<Vec<(u32, u32)>> = samples.iter().map(|s| vocab.counts(s)).collect();
    pairwise_mean(&sets, |a, b| jaccard(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDiversity {
    pub mean_cosine: Option<f64>,
    pub mean_repetition: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallDiversity {
    pub mean_cosine: Option<f64>,
    pub mean_repetition: Option<f64>,
    /// Relations with at least two samples.
    pub relations: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub per_relation: BTreeMap<String, RelationDiversity>,
    pub overall: OverallDiversity,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Both metrics per relation; relations with fewer than two samples get null
/// metrics and do not count towards the overall means.
pub fn diversity_report(groups: &BTreeMap<String, Vec<ReSample>>) -> DiversityReport {
    let mut per_relation = BTreeMap::new();
    let mut cosines = Vec::new();
    let mut repetitions = Vec::new();
    for (relation, samples) in groups {
        let mean_cosine = pairwise_cosine_mean(samples).ok();
        let mean_repetition = word_repetition_mean(samples).ok();
        cosines.extend(mean_cosine);
        repetitions.extend(mean_repetition);
        per_relation.insert(
            relation.clone(),
            RelationDiversity {
                mean_cosine,
                mean_repetition,
                n: samples.len(),
            },
        );
    }
    DiversityReport {
        per_relation,
        overall: OverallDiversity {
            mean_cosine: mean(&cosines),
            mean_repetition: mean(&repetitions),
            relations: cosines.len(),
            samples: groups.values().map(Vec::len).sum(),
        },
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl DiversityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table, one row per relation plus an overall row.
    pub fn to_table(&self) -> String {
        let width = self
            .per_relation
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("overall".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>10}  {:>6}", "relation", "cosine", "repetition", "n");
        let _ = writeln!(out, "{}", "-".repeat(width + 32));
        for (name, row) in &self.per_relation {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>10}  {:>6}",
                name,
                cell(row.mean_cosine),
                cell(row.mean_repetition),
                row.n
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 32));
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>10}  {:>6}",
            "overall",
            cell(self.overall.mean_cosine),
            cell(self.overall.mean_repetition),
            self.overall.samples
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Provenance;

    fn sample(sentence: &str) -> ReSample {
        let tokens: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        ReSample::from_ranges(tokens, (0, 1), (1, 2), "per:age", Provenance::Generated, "x").unwrap()
    }

    #[test]
    fn detokenize_joins_with_spaces() {
        let s = sample("John died .");
        assert_eq!(detokenize(&s), "John died .");
        let mut single = s.clone();
        single.tokens = vec!["Hi".into()];
        assert_eq!(detokenize(&single), "Hi");
        let back: Vec<String> = detokenize(&s).split(' ').map(str::to_string).collect();
        assert_eq!(back, s.tokens);
    }

    #[test]
    fn hand_computed_values() {
        let same = [sample("a b"), sample("a b")];
        assert_eq!(pairwise_cosine_mean(&same).unwrap(), 1.0);
        assert_eq!(word_repetition_mean(&same).unwrap(), 1.0);

        // (1,1,0)·(1,0,1) / (√2·√2)
        let ab_ac = [sample("a b"), sample("a c")];
        assert!((pairwise_cosine_mean(&ab_ac).unwrap() - 0.5).abs() < 1e-12);
        // {a} / {a, b, c}
        assert!((word_repetition_mean(&ab_ac).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let disjoint = [sample("a b"), sample("c d")];
        assert_eq!(word_repetition_mean(&disjoint).unwrap(), 0.0);
        assert_eq!(pairwise_cosine_mean(&disjoint).unwrap(), 0.0);
    }

    #[test]
    fn case_insensitive() {
        let pair = [sample("The Cat"), sample("the cat")];
        assert_eq!(word_repetition_mean(&pair).unwrap(), 1.0);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            pairwise_cosine_mean(&[sample("a b")]),
            Err(DiversityError::TooFewSamples(1))
        );
        assert_eq!(word_repetition_mean(&[]), Err(DiversityError::TooFewSamples(0)));
    }

    #[test]
    fn report_nulls_and_overall() {
        let mut groups = BTreeMap::new();
        groups.insert("per:age".to_string(), vec![sample("a b"), sample("a b")]);
        groups.insert("per:title".to_string(), vec![sample("a b"), sample("a c")]);
        groups.insert("org:founded".to_string(), vec![sample("x y")]);
        let report = diversity_report(&groups);

        let row = &report.per_relation["per:age"];
        assert_eq!((row.mean_cosine, row.mean_repetition, row.n), (Some(1.0), Some(1.0), 2));
        let lone = &report.per_relation["org:founded"];
        assert_eq!((lone.mean_cosine, lone.mean_repetition), (None, None));
        assert!((report.overall.mean_cosine.unwrap() - 0.75).abs() < 1e-12);
        assert!((report.overall.mean_repetition.unwrap() - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(report.overall.relations, 2);

        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert!(json["per_relation"]["org:founded"]["mean_cosine"].is_null());
        assert_eq!(json["per_relation"]["per:age"]["n"], 2);
        assert!(report.to_table().contains("overall"));

        let empty = diversity_report(&BTreeMap::new());
        assert_eq!(empty.overall.mean_cosine, None);
    }
}
