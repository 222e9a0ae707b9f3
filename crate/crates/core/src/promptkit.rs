//! Generation prompt assembly.
//!
//! A rendered prompt has three parts in fixed order: the task description
//! (bundled template text), the explanation of the target relation taken from the
//! catalog, and the demonstration samples. It ends with the key sentence that
//! asks for new samples.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_sample, ReSample, RelationCatalog, Verdict};

/// Task-description header. Changing it changes every prompt; the golden prompt
/// fixtures guard it.
pub const TASK_DESCRIPTION: &str = include_str!("../resources/task_description.txt");

pub const DIVERSITY_SENTENCE: &str =
    "Please make the generated samples as different from the above demonstrations as possible.";

pub const DEFAULT_POOL_CAPACITY: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("relation {0:?} is not in the catalog")]
    UnknownRelation(String),
    #[error("prompt needs at least one demonstration")]
    NoDemonstrations,
    #[error("demonstration pool holds {len} samples but capacity is {capacity}")]
    PoolOverflow { len: usize, capacity: usize },
    #[error("operation requires {expected:?} mode, spec is {actual:?}")]
    ModeMismatch {
        expected: PromptMode,
        actual: PromptMode,
    },
    #[error("demonstration {source_id} is labeled {found:?}, expected {expected:?}")]
    RelationMismatch {
        source_id: String,
        expected: String,
        found: String,
    },
    #[error("demonstration {source_id} is invalid: {}", .violations.join("; "))]
    InvalidDemonstration {
        source_id: String,
        violations: Vec<String>,
    },
    #[error("sample count must be positive")]
    ZeroCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// One sample per request, accepted samples join the demonstrations.
    OneByOne,
    /// Many samples in one request, no feedback.
    AllAtOnce,
    /// One sample per request with a bounded demonstration pool.
    OneByOneConstant,
}

/// Everything needed to render one prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub diversity_instruction: bool,
    pub target_relation: String,
    pub demonstrations: Vec<ReSample>,
    pub aao_count: usize,
    pub pool_capacity: usize,
}

impl PromptSpec {
    pub fn one_by_one(relation: impl Into<String>, seed_demo: ReSample) -> Self {
        PromptSpec {
            mode: PromptMode::OneByOne,
            diversity_instruction: true,
            target_relation: relation.into(),
            demonstrations: vec![seed_demo],
            aao_count: 1,
            pool_capacity: DEFAULT_POOL_CAPACITY,
        }
    }

    pub fn all_at_once(relation: impl Into<String>, seed_demo: ReSample, count: usize) -> Self {
        PromptSpec {
            mode: PromptMode::AllAtOnce,
            aao_count: count,
            ..PromptSpec::one_by_one(relation, seed_demo)
        }
    }

    /// Constant-pool spec. Fails if `seed_demos` is empty or exceeds `capacity`.
    pub fn constant_pool(
        relation: impl Into<String>,
        seed_demos: Vec<ReSample>,
        capacity: usize,
    ) -> Result<Self, PromptError> {
        let spec = PromptSpec {
            mode: PromptMode::OneByOneConstant,
            diversity_instruction: true,
            target_relation: relation.into(),
            demonstrations: seed_demos,
            aao_count: 1,
            pool_capacity: capacity,
        };
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn with_diversity_instruction(mut self, enabled: bool) -> Self {
        self.diversity_instruction = enabled;
        self
    }

    fn check_shape(&self) -> Result<(), PromptError> {
        if self.demonstrations.is_empty() {
            return Err(PromptError::NoDemonstrations);
        }
        if self.mode == PromptMode::OneByOneConstant
            && self.demonstrations.len() > self.pool_capacity
        {
            return Err(PromptError::PoolOverflow {
                len: self.demonstrations.len(),
                capacity: self.pool_capacity,
            });
        }
        if self.mode == PromptMode::AllAtOnce && self.aao_count == 0 {
            return Err(PromptError::ZeroCount);
        }
        Ok(())
    }

    fn require_mode(&self, expected: PromptMode) -> Result<(), PromptError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(PromptError::ModeMismatch {
                expected,
                actual: self.mode,
            })
        }
    }

    fn require_target(&self, sample: &ReSample) -> Result<(), PromptError> {
        if sample.relation == self.target_relation {
            Ok(())
        } else {
            Err(PromptError::RelationMismatch {
                source_id: sample.source_id.clone(),
                expected: self.target_relation.clone(),
                found: sample.relation.clone(),
            })
        }
    }
}

/// Prompt text with the demonstrations it shows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// `source_id` of each demonstration, in prompt order.
    pub manifest: Vec<String>,
    /// Closing instruction; always a suffix of `text`.
    pub key_sentence: String,
}

/// Builds the closing instruction. `aao_count` is read only in all-at-once mode.
pub fn key_sentence(
    mode: PromptMode,
    diversity_instruction: bool,
    relation: &str,
    aao_count: usize,
) -> String {
    let request = match mode {
        PromptMode::AllAtOnce => {
            format!("So please generate {aao_count} samples for the relation '{relation}'.")
        }
        PromptMode::OneByOne | PromptMode::OneByOneConstant => {
            format!("So please generate a sample for the relation '{relation}'.")
        }
    };
    if diversity_instruction {
        format!("{request} {DIVERSITY_SENTENCE}")
    } else {
        request
    }
}

/// Renders the prompt. Pure: identical inputs give byte-identical text.
pub fn render_prompt(
    spec: &PromptSpec,
    catalog: &RelationCatalog,
) -> Result<RenderedPrompt, PromptError> {
    spec.check_shape()?;
    let explanation = catalog
        .explanation(&spec.target_relation)
        .ok_or_else(|| PromptError::UnknownRelation(spec.target_relation.clone()))?;
    for demo in &spec.demonstrations {
        if let Verdict::Violations(violations) = validate_sample(demo, catalog) {
            return Err(PromptError::InvalidDemonstration {
                source_id: demo.source_id.clone(),
                violations,
            });
        }
    }

    let key = key_sentence(
        spec.mode,
        spec.diversity_instruction,
        &spec.target_relation,
        spec.aao_count,
    );
    let demos: Vec<String> = spec
        .demonstrations
        .iter()
        .map(ReSample::to_prompt_json)
        .collect();

    let mut text = String::with_capacity(TASK_DESCRIPTION.len() + 512 * demos.len());
    text.push_str(TASK_DESCRIPTION.trim_end());
    text.push_str("\n\n");
    text.push_str(&format!(
        "Relation: {}\nExplanation: {}\n\n",
        spec.target_relation, explanation
    ));
    text.push_str("Demonstrations:\n");
    text.push_str(&demos.join("\n\n"));
    text.push_str("\n\n");
    text.push_str(&key);

    Ok(RenderedPrompt {
        text,
        manifest: spec
            .demonstrations
            .iter()
            .map(|d| d.source_id.clone())
            .collect(),
        key_sentence: key,
    })
}

/// One-by-one feedback: returns a new spec with `sample` appended last.
pub fn push_demonstration(spec: &PromptSpec, sample: ReSample) -> Result<PromptSpec, PromptError> {
    spec.require_mode(PromptMode::OneByOne)?;
    spec.require_target(&sample)?;
    let mut next = spec.clone();
    next.demonstrations.push(sample);
    Ok(next)
}

/// Constant-pool feedback: appends while the pool is below capacity, otherwise
/// overwrites one uniformly chosen demonstration.
pub fn replace_demonstration_random<R: Rng + ?Sized>(
    spec: &PromptSpec,
    sample: ReSample,
    rng: &mut R,
) -> Result<PromptSpec, PromptError> {
    spec.require_mode(PromptMode::OneByOneConstant)?;
    spec.require_target(&sample)?;
    let mut next = spec.clone();
    if next.demonstrations.len() < next.pool_capacity {
        next.demonstrations.push(sample);
    } else if !next.demonstrations.is_empty() {
        let slot = rng.gen_range(0..next.demonstrations.len());
        next.demonstrations[slot] = sample;
    }
    Ok(next)
}
