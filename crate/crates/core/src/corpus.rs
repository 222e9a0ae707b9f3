//! Relation extraction samples, relation catalogs and dataset I/O.
//!
//! Spans are half-open `[start, end)` token ranges everywhere inside the crate.
//! TACRED stores inclusive end indices; those are converted when reading and
//! writing TACRED JSON and nowhere else.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::seed::rng_from_seed;

/// Catalog bundled with the crate: TACRED (42 relations) and SemEval (19).
pub const BUNDLED_CATALOG: &str = include_str!("../resources/catalog.json");

/// The 19 SemEval 2010 Task 8 relation names, in the bundled catalog's spelling.
pub const SEMEVAL_RELATIONS: [&str; 19] = [
    "Component-Whole (e2,e1)",
    "Instrument-Agency (e2,e1)",
    "Member-Collection (e1,e2)",
    "Cause-Effect (e2,e1)",
    "Entity-Destination (e1,e2)",
    "Content-Container (e1,e2)",
    "Message-Topic (e1,e2)",
    "Product-Producer (e2,e1)",
    "Member-Collection (e2,e1)",
    "Entity-Origin (e1,e2)",
    "Cause-Effect (e1,e2)",
    "Component-Whole (e1,e2)",
    "Message-Topic (e2,e1)",
    "Product-Producer (e1,e2)",
    "Entity-Origin (e2,e1)",
    "Content-Container (e2,e1)",
    "Instrument-Agency (e1,e2)",
    "Entity-Destination (e2,e1)",
    "Other",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read or write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: record {index}: {message}")]
    Record {
        path: String,
        index: usize,
        message: String,
    },
    #[error("invalid samples: {}", format_offenders(.0))]
    Validation(Vec<(usize, Vec<String>)>),
    #[error("duplicate relation name {0:?}")]
    DuplicateRelation(String),
    #[error("unknown dataset {0:?} in catalog")]
    UnknownDataset(String),
    #[error("relation catalog is empty")]
    EmptyCatalog,
    #[error("relation roles overlap on {0:?}")]
    RoleOverlap(Vec<String>),
}

fn format_offenders(offenders: &[(usize, Vec<String>)]) -> String {
    offenders
        .iter()
        .map(|(i, v)| format!("#{i} ({})", v.join("; ")))
        .collect::<Vec<_>>()
        .join(", ")
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Entity mention located by a half-open token range.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntitySpan {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    /// Builds the span from `tokens[start..end)`. Returns `None` when out of range or empty.
    pub fn from_tokens(tokens: &[String], start: usize, end: usize) -> Option<Self> {
        if start >= end || end > tokens.len() {
            return None;
        }
        Some(EntitySpan {
            surface: join_tokens(&tokens[start..end]),
            start,
            end,
        })
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

pub(crate) fn join_tokens(tokens: &[String]) -> String {
    tokens.join(" ").trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gold,
    Generated,
    Perturbed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Gold => "gold",
            Provenance::Generated => "generated",
            Provenance::Perturbed => "perturbed",
        })
    }
}

/// One sentence-level relation extraction instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReSample {
    pub tokens: Vec<String>,
    pub head: EntitySpan,
    pub tail: EntitySpan,
    pub relation: String,
    pub provenance: Provenance,
    pub source_id: String,
}

/// Wire form of an entity: `{"name": ..., "pos": [start, end]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct EntityJson {
    pub name: String,
    pub pos: [usize; 2],
}

impl From<&EntitySpan> for EntityJson {
    fn from(span: &EntitySpan) -> Self {
        EntityJson {
            name: span.surface.clone(),
            pos: [span.start, span.end],
        }
    }
}

/// One line of the normalized JSONL format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizedRecord {
    token: Vec<String>,
    h: EntityJson,
    t: EntityJson,
    relation: String,
    provenance: Provenance,
    source_id: String,
}

/// Sample as shown to (and expected back from) the model: no bookkeeping fields.
#[derive(Serialize)]
struct PromptRecord<'a> {
    token: &'a [String],
    h: EntityJson,
    t: EntityJson,
    relation: &'a str,
}

impl ReSample {
    /// Builds a sample whose entity surfaces are taken from the token ranges.
    pub fn from_ranges(
        tokens: Vec<String>,
        head: (usize, usize),
        tail: (usize, usize),
        relation: impl Into<String>,
        provenance: Provenance,
        source_id: impl Into<String>,
    ) -> Option<Self> {
        let head = EntitySpan::from_tokens(&tokens, head.0, head.1)?;
        let tail = EntitySpan::from_tokens(&tokens, tail.0, tail.1)?;
        Some(ReSample {
            tokens,
            head,
            tail,
            relation: relation.into(),
            provenance,
            source_id: source_id.into(),
        })
    }

    /// Normalized JSONL line (without the trailing newline).
    pub fn to_normalized_json(&self) -> String {
        serde_json::to_string(&self.normalized_record()).expect("sample serializes")
    }

    /// Pretty-printed `{"token", "h", "t", "relation"}` object used in prompts and
    /// preference pairs.
    pub fn to_prompt_json(&self) -> String {
        let record = PromptRecord {
            token: &self.tokens,
            h: (&self.head).into(),
            t: (&self.tail).into(),
            relation: &self.relation,
        };
        serde_json::to_string_pretty(&record).expect("sample serializes")
    }

    /// Parses one normalized JSONL line. Spans are checked only for range, not catalog.
    pub fn from_normalized_json(line: &str) -> Result<Self, String> {
        let record: NormalizedRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let sample = ReSample {
            head: EntitySpan {
                surface: record.h.name,
                start: record.h.pos[0],
                end: record.h.pos[1],
            },
            tail: EntitySpan {
                surface: record.t.name,
                start: record.t.pos[0],
                end: record.t.pos[1],
            },
            tokens: record.token,
            relation: record.relation,
            provenance: record.provenance,
            source_id: record.source_id,
        };
        let problems = structural_violations(&sample);
        if problems.is_empty() {
            Ok(sample)
        } else {
            Err(problems.join("; "))
        }
    }

    fn normalized_record(&self) -> NormalizedRecord {
        NormalizedRecord {
            token: self.tokens.clone(),
            h: (&self.head).into(),
            t: (&self.tail).into(),
            relation: self.relation.clone(),
            provenance: self.provenance,
            source_id: self.source_id.clone(),
        }
    }

    /// Same sample with a different provenance tag.
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInfo {
    pub name: String,
    pub explanation: String,
    pub dataset: String,
}

/// Ordered relation categories with their natural-language explanations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelationCatalog {
    relations: Vec<RelationInfo>,
}

impl RelationCatalog {
    pub fn new(relations: Vec<RelationInfo>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for info in &relations {
            if !seen.insert(info.name.as_str()) {
                return Err(CorpusError::DuplicateRelation(info.name.clone()));
            }
        }
        Ok(RelationCatalog { relations })
    }

    /// Parses catalog JSON of the form `{dataset: {relation: explanation}}`.
    pub fn from_json_str(text: &str) -> Result<Self, CorpusError> {
        let datasets: OrderedPairs<OrderedPairs<String>> =
            serde_json::from_str(text).map_err(|source| CorpusError::Json {
                path: "<catalog>".into(),
                source,
            })?;
        let mut relations = Vec::new();
        for (dataset, entries) in datasets.0 {
            for (name, explanation) in entries.0 {
                relations.push(RelationInfo {
                    name,
                    explanation,
                    dataset: dataset.clone(),
                });
            }
        }
        RelationCatalog::new(relations)
    }

    /// The catalog shipped with the crate.
    pub fn bundled() -> Self {
        RelationCatalog::from_json_str(BUNDLED_CATALOG).expect("bundled catalog is valid")
    }

    /// Sub-catalog with the relations of one dataset.
    pub fn for_dataset(&self, dataset: &str) -> Result<Self, CorpusError> {
        let relations: Vec<_> = self
            .relations
            .iter()
            .filter(|r| r.dataset == dataset)
            .cloned()
            .collect();
        if relations.is_empty() {
            return Err(CorpusError::UnknownDataset(dataset.to_string()));
        }
        Ok(RelationCatalog { relations })
    }

    pub fn get(&self, name: &str) -> Option<&RelationInfo> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn explanation(&self, name: &str) -> Option<&str> {
        self.get(name).map(|r| r.explanation.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(|r| r.name.as_str())
    }

    pub fn relations(&self) -> &[RelationInfo] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

/// JSON object read as an ordered list of pairs, keeping duplicate keys visible.
struct OrderedPairs<T>(Vec<(String, T)>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for OrderedPairs<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for PairsVisitor<T> {
            type Value = OrderedPairs<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some((key, value)) = map.next_entry::<String, T>()? {
                    pairs.push((key, value));
                }
                Ok(OrderedPairs(pairs))
            }
        }

        deserializer.deserialize_map(PairsVisitor(std::marker::PhantomData))
    }
}

/// Reads a catalog file. Duplicate relation names anywhere in the file are rejected.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<RelationCatalog, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    RelationCatalog::from_json_str(&text).map_err(|e| match e {
        CorpusError::Json { source, .. } => CorpusError::Json {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Partition of the relation names into two halves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub part_a: BTreeSet<String>,
    pub part_b: BTreeSet<String>,
}

impl SplitPlan {
    /// Assigns roles: `part_a` trains the preference model and `part_b` is generated,
    /// or the other way round when `swap` is set.
    pub fn roles(&self, swap: bool) -> RelationRoles {
        let (dpo, generate) = if swap {
            (self.part_b.clone(), self.part_a.clone())
        } else {
            (self.part_a.clone(), self.part_b.clone())
        };
        RelationRoles { dpo, generate }
    }
}

/// Which relations feed preference data and which are generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRoles {
    pub dpo: BTreeSet<String>,
    pub generate: BTreeSet<String>,
}

impl RelationRoles {
    /// Fails when a relation is assigned both roles.
    pub fn check_disjoint(&self) -> Result<(), CorpusError> {
        let overlap: Vec<String> = self.dpo.intersection(&self.generate).cloned().collect();
        if overlap.is_empty() {
            Ok(())
        } else {
            Err(CorpusError::RoleOverlap(overlap))
        }
    }
}

/// Shuffles the catalog's relation names with `seed` and halves them; `part_a`
/// receives the extra relation when the count is odd.
pub fn split_relations(catalog: &RelationCatalog, seed: u64) -> Result<SplitPlan, CorpusError> {
    if catalog.is_empty() {
        return Err(CorpusError::EmptyCatalog);
    }
    let mut names: Vec<String> = catalog.names().map(str::to_string).collect();
    names.shuffle(&mut rng_from_seed(seed));
    let cut = names.len().div_ceil(2);
    let part_b = names.split_off(cut);
    Ok(SplitPlan {
        part_a: names.into_iter().collect(),
        part_b: part_b.into_iter().collect(),
    })
}

/// Result of [`validate_sample`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Violations(Vec<String>),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }

    pub fn violations(&self) -> &[String] {
        match self {
            Verdict::Ok => &[],
            Verdict::Violations(v) => v,
        }
    }
}

fn span_violations(role: &str, span: &EntitySpan, tokens: &[String], out: &mut Vec<String>) {
    if span.start >= span.end {
        out.push(format!("{role} span empty"));
    } else if span.end > tokens.len() {
        out.push(format!("{role} span out of bounds"));
    } else if span.surface != join_tokens(&tokens[span.start..span.end]) {
        out.push(format!("{role} surface mismatch"));
    }
}

fn structural_violations(sample: &ReSample) -> Vec<String> {
    let mut out = Vec::new();
    if sample.tokens.is_empty() {
        out.push("empty tokens".to_string());
    }
    span_violations("head", &sample.head, &sample.tokens, &mut out);
    span_violations("tail", &sample.tail, &sample.tokens, &mut out);
    out
}

/// Checks span invariants and catalog membership. Never fails; problems are
/// reported in the verdict. Span problems contain "span out of bounds" and
/// catalog misses "unknown relation".
pub fn validate_sample(sample: &ReSample, catalog: &RelationCatalog) -> Verdict {
    let mut out = structural_violations(sample);
    if !catalog.contains(&sample.relation) {
        out.push(format!("unknown relation {:?}", sample.relation));
    }
    if out.is_empty() {
        Verdict::Ok
    } else {
        Verdict::Violations(out)
    }
}

#[derive(Debug, Deserialize)]
struct TacredRecord {
    #[serde(default)]
    id: Option<String>,
    token: Vec<String>,
    subj_start: usize,
    subj_end: usize,
    obj_start: usize,
    obj_end: usize,
    relation: String,
}

#[derive(Serialize)]
struct TacredOut<'a> {
    id: &'a str,
    token: &'a [String],
    subj_start: usize,
    subj_end: usize,
    obj_start: usize,
    obj_end: usize,
    relation: &'a str,
}

/// Converts a TACRED inclusive `(start, end)` pair to a half-open range.
pub fn inclusive_to_half_open(start: usize, end_inclusive: usize) -> (usize, usize) {
    (start, end_inclusive + 1)
}

/// Loads a TACRED-style JSON array. Inclusive end indices become half-open spans.
pub fn load_tacred(path: impl AsRef<Path>) -> Result<Vec<ReSample>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let values: Vec<Value> = serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::with_capacity(values.len());
    let mut offenders = Vec::new();
    for (index, value) in values.into_iter().enumerate() {
        let record: TacredRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::Record {
                path: path.display().to_string(),
                index,
                message: e.to_string(),
            })?;
        if record.subj_end < record.subj_start || record.obj_end < record.obj_start {
            offenders.push((index, vec!["span end precedes start".to_string()]));
            continue;
        }
        let head = inclusive_to_half_open(record.subj_start, record.subj_end);
        let tail = inclusive_to_half_open(record.obj_start, record.obj_end);
        let source_id = record.id.unwrap_or_else(|| format!("tacred:{index}"));
        match ReSample::from_ranges(
            record.token,
            head,
            tail,
            record.relation,
            Provenance::Gold,
            source_id,
        ) {
            Some(sample) => samples.push(sample),
            None => offenders.push((index, vec!["span out of bounds".to_string()])),
        }
    }
    if offenders.is_empty() {
        Ok(samples)
    } else {
        Err(CorpusError::Validation(offenders))
    }
}

/// Loads normalized JSONL. Blank lines are skipped; record indices in errors are
/// 1-based line numbers.
pub fn load_normalized(path: impl AsRef<Path>) -> Result<Vec<ReSample>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = ReSample::from_normalized_json(&line).map_err(|message| CorpusError::Record {
            path: path.display().to_string(),
            index: i + 1,
            message,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Maps `Cause-Effect(e1,e2)` to the catalog spelling `Cause-Effect (e1,e2)`.
pub fn normalize_semeval_relation(name: &str) -> String {
    match name.find('(') {
        Some(i) if i > 0 && !name[..i].ends_with(' ') => {
            format!("{} {}", &name[..i], &name[i..])
        }
        _ => name.to_string(),
    }
}

/// Loads SemEval data that was converted to normalized JSONL. Gold provenance is
/// forced and relation names must be one of the 19 SemEval categories.
pub fn load_semeval(path: impl AsRef<Path>) -> Result<Vec<ReSample>, CorpusError> {
    let mut samples = load_normalized(path)?;
    let mut offenders = Vec::new();
    for (i, sample) in samples.iter_mut().enumerate() {
        sample.relation = normalize_semeval_relation(&sample.relation);
        sample.provenance = Provenance::Gold;
        if !SEMEVAL_RELATIONS.contains(&sample.relation.as_str()) {
            offenders.push((i, vec![format!("unknown relation {:?}", sample.relation)]));
        }
    }
    if offenders.is_empty() {
        Ok(samples)
    } else {
        Err(CorpusError::Validation(offenders))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    NormalizedJsonl,
    TacredJson,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized-jsonl" | "jsonl" => Ok(ExportFormat::NormalizedJsonl),
            "tacred-json" | "tacred" => Ok(ExportFormat::TacredJson),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

/// Renders samples in `format` without validation.
pub fn render_samples(samples: &[ReSample], format: ExportFormat) -> String {
    match format {
        ExportFormat::NormalizedJsonl => {
            let mut out = String::new();
            for s in samples {
                out.push_str(&s.to_normalized_json());
                out.push('\n');
            }
            out
        }
        ExportFormat::TacredJson => {
            if samples.is_empty() {
                return "[]\n".to_string();
            }
            let lines: Vec<String> = samples
                .iter()
                .map(|s| {
                    serde_json::to_string(&TacredOut {
                        id: &s.source_id,
                        token: &s.tokens,
                        subj_start: s.head.start,
                        subj_end: s.head.end - 1,
                        obj_start: s.tail.start,
                        obj_end: s.tail.end - 1,
                        relation: &s.relation,
                    })
                    .expect("sample serializes")
                })
                .collect();
            format!("[\n{}\n]\n", lines.join(",\n"))
        }
    }
}

/// Writes samples after validating every one; any invalid sample aborts the
/// whole export and nothing is written.
pub fn export_samples(
    samples: &[ReSample],
    format: ExportFormat,
    path: impl AsRef<Path>,
    catalog: &RelationCatalog,
) -> Result<(), CorpusError> {
    let offenders: Vec<(usize, Vec<String>)> = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match validate_sample(s, catalog) {
            Verdict::Ok => None,
            Verdict::Violations(v) => Some((i, v)),
        })
        .collect();
    if !offenders.is_empty() {
        return Err(CorpusError::Validation(offenders));
    }
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    file.write_all(render_samples(samples, format).as_bytes())
        .map_err(|e| CorpusError::io(path, e))
}

/// Samples grouped by relation, preserving input order inside each group.
pub fn group_by_relation(samples: &[ReSample]) -> BTreeMap<String, Vec<ReSample>> {
    let mut groups: BTreeMap<String, Vec<ReSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.relation.clone()).or_default().push(s.clone());
    }
    groups
}
