//! Generation loops.
//!
//! - One-by-one: each accepted sample is appended to the demonstrations before
//!   the next request.
//! - All-at-once: a single request asks for many samples; nothing is fed back.
//! - Constant pool: one-by-one with at most `pool_capacity` demonstrations,
//!   random replacement once the pool is full.
//!
//! Every backend call produces at least one [`GenerationRecord`], which is
//! enough to replay a run against a scripted mock.

mod backend;
mod parse;

pub use backend::{
    extract_content, BackendError, HttpBackend, HttpSettings, LlmBackend, RecordingBackend,
    ScriptEntry, ScriptedMock,
};
pub use parse::{extract_json_objects, find_subsequence, parse_generation, sample_from_value, ParseError};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_sample, ReSample, RelationCatalog, Verdict};
use crate::promptkit::{
    push_demonstration, render_prompt, replace_demonstration_random, PromptError,
    PromptSpec, RenderedPrompt, DEFAULT_POOL_CAPACITY,
};

/// Largest number of samples requested in one all-at-once call.
pub const AAO_CHUNK: usize = 32;

/// Sampling and loop settings. Defaults follow the published LLaMA2 setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub repetition_penalty: f64,
    /// Rounds for one-by-one and constant-pool runs, sample count for all-at-once.
    pub rounds: usize,
    pub max_retries_per_round: usize,
    pub seed: u64,
    pub diversity_instruction: bool,
    pub pool_capacity: usize,
    /// Reject samples whose tokens equal a demonstration's.
    pub reject_duplicates: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 0.4,
            top_p: 0.9,
            top_k: 20,
            repetition_penalty: 1.15,
            rounds: 8,
            max_retries_per_round: 2,
            seed: 0,
            diversity_instruction: true,
            pool_capacity: DEFAULT_POOL_CAPACITY,
            reject_duplicates: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.top_k == 0 {
            return Err("top_k must be positive".into());
        }
        if self.repetition_penalty.is_nan() || self.repetition_penalty < 1.0 {
            return Err(format!(
                "repetition_penalty must be >= 1, got {}",
                self.repetition_penalty
            ));
        }
        if self.rounds == 0 {
            return Err("rounds must be positive".into());
        }
        if self.pool_capacity == 0 {
            return Err("pool_capacity must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    ParseFailed,
    ValidationFailed,
    /// Final failed attempt of a round, or a call that yielded nothing usable.
    Exhausted,
}

/// Audit entry for one backend response (or one object inside it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub relation: String,
    pub round: usize,
    pub attempt: usize,
    /// Object index inside an all-at-once response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<usize>,
    pub prompt_manifest: Vec<String>,
    pub prompt: String,
    pub raw_response: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

/// Result of one generation run for one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRun {
    pub relation: String,
    pub accepted: Vec<ReSample>,
    pub records: Vec<GenerationRecord>,
    /// Demonstrations in effect after the last round.
    pub final_spec: PromptSpec,
}

/// Backend failure mid-run; everything gathered before it is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunAborted {
    pub partial: GenerationRun,
    pub source: BackendError,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("seed demonstration is labeled {found:?}, expected {expected:?}")]
    SeedRelation { expected: String, found: String },
    #[error("backend failed after {} accepted samples: {}", .0.partial.accepted.len(), .0.source)]
    Aborted(Box<RunAborted>),
}

impl GenError {
    /// Partial run of an aborted generation.
    pub fn partial(&self) -> Option<&GenerationRun> {
        match self {
            GenError::Aborted(a) => Some(&a.partial),
            _ => None,
        }
    }
}

enum Judgement {
    Accepted(ReSample),
    Rejected(Outcome, Vec<String>),
}

fn generated_id(relation: &str, index: usize) -> String {
    format!("gen/{relation}/{index}")
}

/// Applies the acceptance policy: spans must resolve, the sample must pass
/// catalog validation and carry the target relation.
fn judge_value(
    value: &serde_json::Value,
    source_id: String,
    spec: &PromptSpec,
    cfg: &GenerationConfig,
    catalog: &RelationCatalog,
) -> Judgement {
    let sample = match sample_from_value(value, &source_id) {
        Ok(s) => s,
        Err(e @ ParseError::UnresolvedSpan { .. }) => {
            return Judgement::Rejected(Outcome::ValidationFailed, vec![e.to_string()])
        }
        Err(e) => return Judgement::Rejected(Outcome::ParseFailed, vec![e.to_string()]),
    };
    let mut violations = Vec::new();
    if let Verdict::Violations(v) = validate_sample(&sample, catalog) {
        violations.extend(v);
    }
    if sample.relation != spec.target_relation {
        violations.push(format!(
            "relation {:?} differs from target {:?}",
            sample.relation, spec.target_relation
        ));
    }
    if cfg.reject_duplicates && spec.demonstrations.iter().any(|d| d.tokens == sample.tokens) {
        violations.push("duplicate of a demonstration".to_string());
    }
    if violations.is_empty() {
        Judgement::Accepted(sample)
    } else {
        Judgement::Rejected(Outcome::ValidationFailed, violations)
    }
}

fn judge_response(
    raw: &str,
    source_id: String,
    spec: &PromptSpec,
    cfg: &GenerationConfig,
    catalog: &RelationCatalog,
) -> Judgement {
    match extract_json_objects(raw).first() {
        Some(value) => judge_value(value, source_id, spec, cfg, catalog),
        None => Judgement::Rejected(Outcome::ParseFailed, vec![ParseError::NoJson.to_string()]),
    }
}

fn check_seed(relation: &str, demos: &[ReSample]) -> Result<(), GenError> {
    match demos.iter().find(|d| d.relation != relation) {
        Some(d) => Err(GenError::SeedRelation {
            expected: relation.to_string(),
            found: d.relation.clone(),
        }),
        None => Ok(()),
    }
}

/// Shared driver for the two feedback modes; `feed` folds an accepted sample
/// into the spec.
fn run_feedback<F>(
    mut spec: PromptSpec,
    rounds: usize,
    cfg: &GenerationConfig,
    backend: &dyn LlmBackend,
    catalog: &RelationCatalog,
    mut feed: F,
) -> Result<GenerationRun, GenError>
where
    F: FnMut(&PromptSpec, ReSample) -> Result<PromptSpec, PromptError>,
{
    cfg.validate().map_err(GenError::Config)?;
    let mut run = GenerationRun {
        relation: spec.target_relation.clone(),
        accepted: Vec::new(),
        records: Vec::new(),
        final_spec: spec.clone(),
    };

    for round in 0..rounds {
        let prompt = render_prompt(&spec, catalog)?;
        for attempt in 0..=cfg.max_retries_per_round {
            let raw = match backend.complete(&prompt.text, cfg) {
                Ok(raw) => raw,
                Err(source) => {
                    run.final_spec = spec;
                    return Err(GenError::Aborted(Box::new(RunAborted {
                        partial: run,
                        source,
                    })));
                }
            };
            let source_id = generated_id(&run.relation, run.accepted.len());
            let record = |outcome, violations| GenerationRecord {
                relation: run.relation.clone(),
                round,
                attempt,
                item: None,
                prompt_manifest: prompt.manifest.clone(),
                prompt: prompt.text.clone(),
                raw_response: raw.clone(),
                outcome,
                violations,
            };
            match judge_response(&raw, source_id, &spec, cfg, catalog) {
                Judgement::Accepted(sample) => {
                    run.records.push(record(Outcome::Accepted, Vec::new()));
                    spec = feed(&spec, sample.clone())?;
                    run.accepted.push(sample);
                    break;
                }
                Judgement::Rejected(outcome, violations) => {
                    let last = attempt == cfg.max_retries_per_round;
                    let rec = if last {
                        let mut v = vec![format!("{outcome:?}")];
                        v.extend(violations);
                        record(Outcome::Exhausted, v)
                    } else {
                        record(outcome, violations)
                    };
                    run.records.push(rec);
                    if last {
                        log::warn!(
                            "{}: round {round} produced no valid sample after {} attempts",
                            run.relation,
                            attempt + 1
                        );
                    }
                }
            }
        }
    }
    run.final_spec = spec;
    Ok(run)
}

/// One-by-one generation for `rounds` rounds starting from one seed demonstration.
pub fn run_obo(
    relation: &str,
    seed_demo: ReSample,
    rounds: usize,
    cfg: &GenerationConfig,
    backend: &dyn LlmBackend,
    catalog: &RelationCatalog,
) -> Result<GenerationRun, GenError> {
    check_seed(relation, std::slice::from_ref(&seed_demo))?;
    let spec = PromptSpec::one_by_one(relation, seed_demo)
        .with_diversity_instruction(cfg.diversity_instruction);
    run_feedback(spec, rounds, cfg, backend, catalog, push_demonstration)
}

/// Constant-pool generation: accepted samples enter a pool bounded by
/// `cfg.pool_capacity` through random replacement driven by `rng`.
pub fn run_constant<R: Rng + ?Sized>(
    relation: &str,
    seed_demos: Vec<ReSample>,
    rounds: usize,
    cfg: &GenerationConfig,
    backend: &dyn LlmBackend,
    catalog: &RelationCatalog,
    rng: &mut R,
) -> Result<GenerationRun, GenError> {
    check_seed(relation, &seed_demos)?;
    let spec = PromptSpec::constant_pool(relation, seed_demos, cfg.pool_capacity)?
        .with_diversity_instruction(cfg.diversity_instruction);
    run_feedback(spec, rounds, cfg, backend, catalog, |s, sample| {
        replace_demonstration_random(s, sample, rng)
    })
}

/// All-at-once generation of `count` samples, requested in chunks of at most
/// [`AAO_CHUNK`]. Each chunk is one backend call; every object found in the
/// response is judged independently.
pub fn run_aao(
    relation: &str,
    seed_demo: ReSample,
    count: usize,
    cfg: &GenerationConfig,
    backend: &dyn LlmBackend,
    catalog: &RelationCatalog,
) -> Result<GenerationRun, GenError> {
    cfg.validate().map_err(GenError::Config)?;
    check_seed(relation, std::slice::from_ref(&seed_demo))?;
    if count == 0 {
        return Err(PromptError::ZeroCount.into());
    }
    let base = PromptSpec::all_at_once(relation, seed_demo, count)
        .with_diversity_instruction(cfg.diversity_instruction);
    let mut run = GenerationRun {
        relation: relation.to_string(),
        accepted: Vec::new(),
        records: Vec::new(),
        final_spec: base.clone(),
    };

    let mut remaining = count;
    let mut chunk = 0;
    while remaining > 0 {
        let wanted = remaining.min(AAO_CHUNK);
        let spec = PromptSpec {
            aao_count: wanted,
            ..base.clone()
        };
        let prompt: RenderedPrompt = render_prompt(&spec, catalog)?;
        let raw = match backend.complete(&prompt.text, cfg) {
            Ok(raw) => raw,
            Err(source) => {
                return Err(GenError::Aborted(Box::new(RunAborted {
                    partial: run,
                    source,
                })))
            }
        };
        let record = |item, outcome, violations| GenerationRecord {
            relation: relation.to_string(),
            round: chunk,
            attempt: 0,
            item,
            prompt_manifest: prompt.manifest.clone(),
            prompt: prompt.text.clone(),
            raw_response: raw.clone(),
            outcome,
            violations,
        };

        let objects = extract_json_objects(&raw);
        if objects.is_empty() {
            run.records.push(record(
                None,
                Outcome::Exhausted,
                vec![ParseError::NoJson.to_string()],
            ));
        }
        let mut taken = 0;
        for (item, value) in objects.iter().enumerate() {
            if taken == wanted {
                run.records.push(record(
                    Some(item),
                    Outcome::ValidationFailed,
                    vec![format!("beyond the {wanted} requested samples")],
                ));
                continue;
            }
            let source_id = generated_id(relation, run.accepted.len());
            match judge_value(value, source_id, &spec, cfg, catalog) {
                Judgement::Accepted(sample) => {
                    run.records.push(record(Some(item), Outcome::Accepted, Vec::new()));
                    run.accepted.push(sample);
                    taken += 1;
                }
                Judgement::Rejected(outcome, violations) => {
                    run.records.push(record(Some(item), outcome, violations));
                }
            }
        }
        remaining -= wanted;
        chunk += 1;
    }
    Ok(run)
}
