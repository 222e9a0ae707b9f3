//! Preference data for DPO fine-tuning of the generator.
//!
//! Each pair shows the generation prompt as the instruction, a gold sample of the
//! target relation as the preferred output and a constructed bad sample as the
//! dispreferred output. Bad samples come from three strategies:
//!
//! - [`Strategy::Mislabel`]: a gold sample of another relation relabeled as the target;
//! - [`Strategy::Perturb`]: a demonstration with both entities swapped out and a
//!   few context words inserted or deleted;
//! - [`Strategy::Copy`]: a verbatim copy of a demonstration.
//!
//! Within a relation the instructions mimic one-by-one generation: pair `j`
//! shows the seed demonstration followed by the preferred samples of pairs
//! `0..j`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    join_tokens, validate_sample, EntitySpan, Provenance, ReSample, RelationCatalog,
    RelationRoles, Verdict,
};
use crate::promptkit::{render_prompt, PromptError, PromptSpec};
use crate::seed::child_rng;

const PERTURB_ATTEMPTS: usize = 10;
const FALLBACK_FILLER: [&str; 6] = ["also", "then", "reportedly", "the", "recently", "still"];

#[derive(Debug, Error)]
pub enum DpoError {
    #[error("relation {relation:?} has no unused gold sample left; lower pairs_per_relation")]
    PoolExhausted { relation: String },
    #[error("no gold sample with a relation other than {0:?}")]
    NoOtherRelation(String),
    #[error("could not perturb {source_id} after {attempts} attempts")]
    PerturbFailed { source_id: String, attempts: usize },
    #[error("no demonstrations to copy")]
    NoDemonstrations,
    #[error("split hygiene violation: {0:?} assigned to both preference data and generation")]
    Hygiene(Vec<String>),
    #[error("gold sample {source_id} is invalid: {}", .violations.join("; "))]
    InvalidGold {
        source_id: String,
        violations: Vec<String>,
    },
    #[error("relation {relation:?}: dispreferred output equals preferred output for pair {ordinal}")]
    Degenerate { relation: String, ordinal: usize },
    #[error("invalid build config: {0}")]
    Config(String),
    #[error("beta must be a positive finite number, got {0}")]
    Beta(f64),
    #[error("log-probabilities must be finite, got {0} and {1}")]
    NonFinite(f64, f64),
    #[error("refusing to write an empty preference dataset")]
    Empty,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mislabel,
    Perturb,
    Copy,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Mislabel, Strategy::Perturb, Strategy::Copy];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Mislabel => "mislabel",
            Strategy::Perturb => "perturb",
            Strategy::Copy => "copy",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One preference training instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferencePair {
    pub instruction: String,
    pub preferred: String,
    pub dispreferred: String,
    pub strategy: Strategy,
    pub relation: String,
    pub ordinal: usize,
}

/// Relative weights of the dispreferred strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyMix {
    pub mislabel: f64,
    pub perturb: f64,
    pub copy: f64,
}

impl Default for StrategyMix {
    fn default() -> Self {
        StrategyMix {
            mislabel: 1.0,
            perturb: 1.0,
            copy: 1.0,
        }
    }
}

impl StrategyMix {
    pub fn only(strategy: Strategy) -> Self {
        let mut mix = StrategyMix {
            mislabel: 0.0,
            perturb: 0.0,
            copy: 0.0,
        };
        match strategy {
            Strategy::Mislabel => mix.mislabel = 1.0,
            Strategy::Perturb => mix.perturb = 1.0,
            Strategy::Copy => mix.copy = 1.0,
        }
        mix
    }

    fn weights(&self) -> [f64; 3] {
        [self.mislabel, self.perturb, self.copy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoBuildConfig {
    pub pairs_per_relation: usize,
    pub strategy_mix: StrategyMix,
    /// Inclusive `[min, max]` number of single-word insertions/deletions.
    pub perturb_word_ops: [usize; 2],
    pub diversity_instruction: bool,
    pub seed: u64,
}

impl Default for DpoBuildConfig {
    fn default() -> Self {
        DpoBuildConfig {
            pairs_per_relation: 8,
            strategy_mix: StrategyMix::default(),
            perturb_word_ops: [1, 3],
            diversity_instruction: true,
            seed: 0,
        }
    }
}

impl DpoBuildConfig {
    pub fn validate(&self) -> Result<(), DpoError> {
        if self.pairs_per_relation == 0 {
            return Err(DpoError::Config("pairs_per_relation must be positive".into()));
        }
        let w = self.strategy_mix.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(DpoError::Config(
                "strategy weights must be non-negative with a positive sum".into(),
            ));
        }
        if self.perturb_word_ops[0] > self.perturb_word_ops[1] {
            return Err(DpoError::Config("perturb_word_ops min exceeds max".into()));
        }
        Ok(())
    }

    pub fn word_ops(&self) -> RangeInclusive<usize> {
        self.perturb_word_ops[0]..=self.perturb_word_ops[1]
    }
}

/// Without-replacement draws of gold samples for one relation.
#[derive(Debug, Clone)]
pub struct PreferredPool {
    relation: String,
    remaining: Vec<ReSample>,
}

impl PreferredPool {
    pub fn new(gold: &[ReSample], relation: &str) -> Self {
        PreferredPool {
            relation: relation.to_string(),
            remaining: gold
                .iter()
                .filter(|s| s.relation == relation)
                .cloned()
                .collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.remaining.len()
    }
}

/// Draws an unused gold sample of the pool's relation uniformly at random.
pub fn make_preferred<R: Rng + ?Sized>(
    pool: &mut PreferredPool,
    rng: &mut R,
) -> Result<ReSample, DpoError> {
    if pool.remaining.is_empty() {
        return Err(DpoError::PoolExhausted {
            relation: pool.relation.clone(),
        });
    }
    let i = rng.gen_range(0..pool.remaining.len());
    Ok(pool.remaining.remove(i))
}

/// A gold sample of another relation with its label changed to `target`.
/// Tokens, spans and `source_id` are kept.
pub fn dispreferred_mislabel<R: Rng + ?Sized>(
    gold_pool: &[ReSample],
    target: &str,
    rng: &mut R,
) -> Result<ReSample, DpoError> {
    let others: Vec<&ReSample> = gold_pool.iter().filter(|s| s.relation != target).collect();
    if others.is_empty() {
        return Err(DpoError::NoOtherRelation(target.to_string()));
    }
    let mut out = others[rng.gen_range(0..others.len())].clone();
    out.relation = target.to_string();
    out.provenance = Provenance::Perturbed;
    Ok(out)
}

/// Replacement material for [`dispreferred_perturb`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityPools {
    pub heads: Vec<String>,
    pub tails: Vec<String>,
    /// Words available for insertion.
    pub filler: Vec<String>,
}

impl EntityPools {
    /// Head/tail surfaces and context words of `relation`'s gold samples.
    pub fn from_gold(gold: &[ReSample], relation: &str) -> Self {
        let mut pools = EntityPools::default();
        for s in gold.iter().filter(|s| s.relation == relation) {
            if !pools.heads.contains(&s.head.surface) {
                pools.heads.push(s.head.surface.clone());
            }
            if !pools.tails.contains(&s.tail.surface) {
                pools.tails.push(s.tail.surface.clone());
            }
            for (i, tok) in s.tokens.iter().enumerate() {
                let in_entity = (s.head.start..s.head.end).contains(&i)
                    || (s.tail.start..s.tail.end).contains(&i);
                if !in_entity && !pools.filler.contains(tok) {
                    pools.filler.push(tok.clone());
                }
            }
        }
        pools
    }
}

fn pick<'a, R: Rng + ?Sized>(items: &[&'a String], rng: &mut R) -> Option<&'a String> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.gen_range(0..items.len())])
    }
}

/// Rebuilds `tokens` with the two spans replaced by new surfaces.
fn restitch(
    tokens: &[String],
    head: &EntitySpan,
    tail: &EntitySpan,
    new_head: &str,
    new_tail: &str,
) -> (Vec<String>, (usize, usize), (usize, usize)) {
    let head_words: Vec<String> = new_head.split_whitespace().map(str::to_string).collect();
    let tail_words: Vec<String> = new_tail.split_whitespace().map(str::to_string).collect();
    let head_first = head.start < tail.start;
    let (first, first_words, second, second_words) = if head_first {
        (head, &head_words, tail, &tail_words)
    } else {
        (tail, &tail_words, head, &head_words)
    };

    let mut out = Vec::with_capacity(tokens.len() + 4);
    out.extend_from_slice(&tokens[..first.start]);
    let a = (out.len(), out.len() + first_words.len());
    out.extend(first_words.iter().cloned());
    out.extend_from_slice(&tokens[first.end..second.start]);
    let b = (out.len(), out.len() + second_words.len());
    out.extend(second_words.iter().cloned());
    out.extend_from_slice(&tokens[second.end..]);

    if head_first {
        (out, a, b)
    } else {
        (out, b, a)
    }
}

fn inside(span: (usize, usize), i: usize) -> bool {
    span.0 <= i && i < span.1
}

/// Near-duplicate of `demo`: both entities replaced by other same-role surfaces
/// from `pools`, then `k ∈ word_ops` single-word context insertions or deletions.
pub fn dispreferred_perturb<R: Rng + ?Sized>(
    demo: &ReSample,
    rng: &mut R,
    word_ops: RangeInclusive<usize>,
    pools: &EntityPools,
) -> Result<ReSample, DpoError> {
    let failed = || DpoError::PerturbFailed {
        source_id: demo.source_id.clone(),
        attempts: PERTURB_ATTEMPTS,
    };
    let filler: Vec<&str> = if pools.filler.is_empty() {
        FALLBACK_FILLER.to_vec()
    } else {
        pools.filler.iter().map(String::as_str).collect()
    };

    for _ in 0..PERTURB_ATTEMPTS {
        let heads: Vec<&String> = pools
            .heads
            .iter()
            .filter(|h| !h.trim().is_empty() && **h != demo.head.surface)
            .collect();
        let tails: Vec<&String> = pools
            .tails
            .iter()
            .filter(|t| !t.trim().is_empty() && **t != demo.tail.surface)
            .collect();
        let (Some(new_head), Some(new_tail)) = (pick(&heads, rng), pick(&tails, rng)) else {
            continue;
        };
        if demo.head.overlaps(&demo.tail) || demo.head.end > demo.tokens.len() || demo.tail.end > demo.tokens.len() {
            continue;
        }

        let (mut tokens, mut head, mut tail) =
            restitch(&demo.tokens, &demo.head, &demo.tail, new_head, new_tail);

        let ops = rng.gen_range(word_ops.clone());
        for _ in 0..ops {
            let deletable: Vec<usize> = (0..tokens.len())
                .filter(|&i| !inside(head, i) && !inside(tail, i))
                .collect();
            if !deletable.is_empty() && rng.gen_bool(0.5) {
                let i = deletable[rng.gen_range(0..deletable.len())];
                tokens.remove(i);
                for span in [&mut head, &mut tail] {
                    if span.0 > i {
                        span.0 -= 1;
                        span.1 -= 1;
                    }
                }
            } else {
                // insertion points never split an entity
                let slots: Vec<usize> = (0..=tokens.len())
                    .filter(|&p| !(head.0 < p && p < head.1) && !(tail.0 < p && p < tail.1))
                    .collect();
                let p = slots[rng.gen_range(0..slots.len())];
                let word = filler[rng.gen_range(0..filler.len())];
                tokens.insert(p, word.to_string());
                for span in [&mut head, &mut tail] {
                    if span.0 >= p {
                        span.0 += 1;
                        span.1 += 1;
                    }
                }
            }
        }

        let Some(mut out) = ReSample::from_ranges(
            tokens,
            head,
            tail,
            demo.relation.clone(),
            Provenance::Perturbed,
            format!("{}~perturbed", demo.source_id),
        ) else {
            continue;
        };
        out.head.surface = join_tokens(&out.tokens[out.head.start..out.head.end]);
        out.tail.surface = join_tokens(&out.tokens[out.tail.start..out.tail.end]);
        if out.head.surface != demo.head.surface
            && out.tail.surface != demo.tail.surface
            && out.tokens != demo.tokens
        {
            return Ok(out);
        }
    }
    Err(failed())
}

/// A uniformly chosen demonstration, retagged as perturbed.
pub fn dispreferred_copy<R: Rng + ?Sized>(
    demos: &[ReSample],
    rng: &mut R,
) -> Result<ReSample, DpoError> {
    if demos.is_empty() {
        return Err(DpoError::NoDemonstrations);
    }
    Ok(demos[rng.gen_range(0..demos.len())]
        .clone()
        .with_provenance(Provenance::Perturbed))
}

/// Pairs plus, per pair, the `source_id` of the sample the dispreferred output
/// was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpoBuild {
    pub pairs: Vec<PreferencePair>,
    pub sources: Vec<String>,
}

impl DpoBuild {
    pub fn histogram(&self) -> BTreeMap<Strategy, usize> {
        strategy_histogram(&self.pairs)
    }
}

pub fn strategy_histogram(pairs: &[PreferencePair]) -> BTreeMap<Strategy, usize> {
    let mut counts: BTreeMap<Strategy, usize> = Strategy::ALL.iter().map(|s| (*s, 0)).collect();
    for p in pairs {
        *counts.entry(p.strategy).or_default() += 1;
    }
    counts
}

/// Builds `pairs_per_relation` pairs for every relation in `roles.dpo`.
///
/// Only gold samples of the preference half are used, for preferred outputs as
/// well as for mislabel sources. Each relation draws from its own random stream
/// derived from `(cfg.seed, relation)`.
pub fn build_dpo_dataset(
    gold: &[ReSample],
    roles: &RelationRoles,
    cfg: &DpoBuildConfig,
    catalog: &RelationCatalog,
) -> Result<DpoBuild, DpoError> {
    cfg.validate()?;
    let overlap: Vec<String> = roles.dpo.intersection(&roles.generate).cloned().collect();
    if !overlap.is_empty() {
        return Err(DpoError::Hygiene(overlap));
    }
    let dpo_gold: Vec<ReSample> = gold
        .iter()
        .filter(|s| roles.dpo.contains(&s.relation))
        .cloned()
        .collect();
    for s in &dpo_gold {
        if let Verdict::Violations(violations) = validate_sample(s, catalog) {
            return Err(DpoError::InvalidGold {
                source_id: s.source_id.clone(),
                violations,
            });
        }
    }
    let weights = WeightedIndex::new(cfg.strategy_mix.weights())
        .map_err(|e| DpoError::Config(e.to_string()))?;

    let mut build = DpoBuild {
        pairs: Vec::new(),
        sources: Vec::new(),
    };
    for relation in &roles.dpo {
        let mut rng = child_rng(cfg.seed, relation);
        let mut pool = PreferredPool::new(&dpo_gold, relation);
        let entity_pools = EntityPools::from_gold(&dpo_gold, relation);
        let seed_demo = make_preferred(&mut pool, &mut rng)?;
        let mut spec = PromptSpec::one_by_one(relation.clone(), seed_demo)
            .with_diversity_instruction(cfg.diversity_instruction);

        for ordinal in 0..cfg.pairs_per_relation {
            let instruction = render_prompt(&spec, catalog)?.text;
            let preferred = make_preferred(&mut pool, &mut rng)?;
            let preferred_text = preferred.to_prompt_json();

            let mut chosen = None;
            for _ in 0..PERTURB_ATTEMPTS {
                let strategy = Strategy::ALL[weights.sample(&mut rng)];
                let bad = match strategy {
                    Strategy::Mislabel => dispreferred_mislabel(&dpo_gold, relation, &mut rng)?,
                    Strategy::Perturb => {
                        let demo = dispreferred_copy(&spec.demonstrations, &mut rng)?;
                        let mut out =
                            dispreferred_perturb(&demo, &mut rng, cfg.word_ops(), &entity_pools)?;
                        out.source_id = demo.source_id.clone();
                        out
                    }
                    Strategy::Copy => dispreferred_copy(&spec.demonstrations, &mut rng)?,
                };
                let text = bad.to_prompt_json();
                if text != preferred_text {
                    chosen = Some((strategy, text, bad.source_id));
                    break;
                }
            }
            let Some((strategy, dispreferred, source)) = chosen else {
                return Err(DpoError::Degenerate {
                    relation: relation.clone(),
                    ordinal,
                });
            };

            build.pairs.push(PreferencePair {
                instruction,
                preferred: preferred_text,
                dispreferred,
                strategy,
                relation: relation.clone(),
                ordinal,
            });
            build.sources.push(source);
            spec.demonstrations.push(preferred);
        }
    }
    Ok(build)
}

/// `β` of the preference objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoBeta(f64);

impl DpoBeta {
    pub fn new(beta: f64) -> Result<Self, DpoError> {
        if beta.is_finite() && beta > 0.0 {
            Ok(DpoBeta(beta))
        } else {
            Err(DpoError::Beta(beta))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `ln σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// One term of the preference objective:
/// `ln σ((1/β) · (log π(y₁|x) − log π(y₂|x)))`.
///
/// The scale is the reciprocal of β, so smaller β sharpens the contrast.
pub fn dpo_objective(
    logp_preferred: f64,
    logp_dispreferred: f64,
    beta: DpoBeta,
) -> Result<f64, DpoError> {
    if !logp_preferred.is_finite() || !logp_dispreferred.is_finite() {
        return Err(DpoError::NonFinite(logp_preferred, logp_dispreferred));
    }
    Ok(log_sigmoid((logp_preferred - logp_dispreferred) / beta.get()))
}

#[derive(Serialize, Deserialize)]
struct EmittedPair {
    instruction: String,
    output: Vec<String>,
    strategy: Strategy,
    relation: String,
    ordinal: usize,
}

#[derive(Serialize)]
struct AliasPair<'a> {
    prompt: &'a str,
    chosen: &'a str,
    rejected: &'a str,
}

fn file_err(path: &Path, message: impl fmt::Display) -> DpoError {
    DpoError::File {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// One JSON line per pair:
/// `{"instruction", "output": [preferred, dispreferred], "strategy", "relation", "ordinal"}`.
pub fn render_jsonl(pairs: &[PreferencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let line = EmittedPair {
            instruction: p.instruction.clone(),
            output: vec![p.preferred.clone(), p.dispreferred.clone()],
            strategy: p.strategy,
            relation: p.relation.clone(),
            ordinal: p.ordinal,
        };
        out.push_str(&serde_json::to_string(&line).expect("pair serializes"));
        out.push('\n');
    }
    out
}

pub fn emit_jsonl(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<(), DpoError> {
    if pairs.is_empty() {
        return Err(DpoError::Empty);
    }
    let path = path.as_ref();
    fs::write(path, render_jsonl(pairs)).map_err(|e| file_err(path, e))
}

/// Writes the `{"prompt", "chosen", "rejected"}` shape some trainers expect.
pub fn emit_alias_jsonl(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<(), DpoError> {
    if pairs.is_empty() {
        return Err(DpoError::Empty);
    }
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| file_err(path, e))?;
    for p in pairs {
        let line = serde_json::to_string(&AliasPair {
            prompt: &p.instruction,
            chosen: &p.preferred,
            rejected: &p.dispreferred,
        })
        .expect("pair serializes");
        writeln!(file, "{line}").map_err(|e| file_err(path, e))?;
    }
    Ok(())
}

/// Reads a file written by [`emit_jsonl`].
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>, DpoError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| file_err(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| file_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: EmittedPair = serde_json::from_str(&line)
            .map_err(|err| file_err(path, format!("line {}: {err}", i + 1)))?;
        let [preferred, dispreferred]: [String; 2] = e.output.try_into().map_err(|o: Vec<String>| {
            file_err(path, format!("line {}: output has {} entries, expected 2", i + 1, o.len()))
        })?;
        pairs.push(PreferencePair {
            instruction: e.instruction,
            preferred,
            dispreferred,
            strategy: e.strategy,
            relation: e.relation,
            ordinal: e.ordinal,
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use std::collections::BTreeSet;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn gold(id: usize, relation: &str, head: &str, tail: &str) -> ReSample {
        let mut tokens = toks(head);
        let h = (0, tokens.len());
        tokens.extend(toks("was said to be linked with"));
        let start = tokens.len();
        tokens.extend(toks(tail));
        let t = (start, tokens.len());
        tokens.push(".".into());
        ReSample::from_ranges(tokens, h, t, relation, Provenance::Gold, format!("g{id}")).unwrap()
    }

    fn corpus() -> Vec<ReSample> {
        let mut out = Vec::new();
        for (r, relation) in ["per:age", "org:founded", "per:title"].iter().enumerate() {
            for i in 0..10 {
                out.push(gold(
                    r * 100 + i,
                    relation,
                    &format!("Head{r} Name{i}"),
                    &format!("Tail{r}x{i}"),
                ));
            }
        }
        out
    }

    /// Token-level Levenshtein distance.
    fn edit_distance(a: &[String], b: &[String]) -> usize {
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for (i, x) in a.iter().enumerate() {
            let mut cur = vec![i + 1; b.len() + 1];
            for (j, y) in b.iter().enumerate() {
                let sub = prev[j] + usize::from(x != y);
                cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    fn masked(s: &ReSample) -> Vec<String> {
        let mut out = Vec::new();
        for (i, t) in s.tokens.iter().enumerate() {
            if i == s.head.start {
                out.push("<H>".to_string());
            } else if i == s.tail.start {
                out.push("<T>".to_string());
            } else if !(s.head.start..s.head.end).contains(&i) && !(s.tail.start..s.tail.end).contains(&i) {
                out.push(t.clone());
            }
        }
        out
    }

    #[test]
    fn preferred_draws_without_replacement() {
        let gold = corpus();
        let mut pool = PreferredPool::new(&gold, "per:age");
        let mut rng = rng_from_seed(1);
        let drawn: BTreeSet<String> = (0..4)
            .map(|_| make_preferred(&mut pool, &mut rng).unwrap().source_id)
            .collect();
        assert_eq!(drawn.len(), 4);

        let single = vec![gold[0].clone()];
        let mut pool = PreferredPool::new(&single, "per:age");
        make_preferred(&mut pool, &mut rng).unwrap();
        assert!(matches!(
            make_preferred(&mut pool, &mut rng),
            Err(DpoError::PoolExhausted { .. })
        ));

        let seq = |seed| {
            let mut pool = PreferredPool::new(&gold, "per:age");
            let mut rng = rng_from_seed(seed);
            (0..5)
                .map(|_| make_preferred(&mut pool, &mut rng).unwrap().source_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
    }

    #[test]
    fn mislabel_changes_only_label() {
        let pool = vec![gold(1, "org:founded", "Acme Corp", "1990")];
        let mut rng = rng_from_seed(0);
        let out = dispreferred_mislabel(&pool, "per:age", &mut rng).unwrap();
        assert_eq!(out.tokens, pool[0].tokens);
        assert_eq!(out.head, pool[0].head);
        assert_eq!(out.tail, pool[0].tail);
        assert_eq!(out.source_id, pool[0].source_id);
        assert_eq!(out.relation, "per:age");
        assert_eq!(out.provenance, Provenance::Perturbed);
        assert!(matches!(
            dispreferred_mislabel(&pool, "org:founded", &mut rng),
            Err(DpoError::NoOtherRelation(_))
        ));
    }

    #[test]
    fn perturb_swaps_entities_and_edits_lightly() {
        let catalog = RelationCatalog::bundled();
        let gold = corpus();
        let pools = EntityPools::from_gold(&gold, "per:age");
        let mut rng = rng_from_seed(3);
        for i in 0..200 {
            let demo = &gold[i % 10];
            let out = dispreferred_perturb(demo, &mut rng, 1..=3, &pools).unwrap();
            assert!(pools.heads.contains(&out.head.surface));
            assert_ne!(out.head.surface, demo.head.surface);
            assert_ne!(out.tail.surface, demo.tail.surface);
            assert!(validate_sample(&out, &catalog).is_ok());
            assert!(edit_distance(&masked(demo), &masked(&out)) <= 3);
            assert_ne!(&out, demo);
        }
    }

    #[test]
    fn perturb_handles_tail_before_head() {
        let tokens = toks("In 1990 , Acme Corp was founded .");
        let demo =
            ReSample::from_ranges(tokens, (3, 5), (1, 2), "org:founded", Provenance::Gold, "d")
                .unwrap();
        let pools = EntityPools {
            heads: vec!["Globex".into()],
            tails: vec!["March 2001".into()],
            filler: vec![],
        };
        let out = dispreferred_perturb(&demo, &mut rng_from_seed(2), 0..=0, &pools).unwrap();
        assert_eq!(out.tokens, toks("In March 2001 , Globex was founded ."));
        assert_eq!((out.tail.start, out.tail.end), (1, 3));
        assert_eq!((out.head.start, out.head.end), (4, 5));
    }

    #[test]
    fn perturb_fails_without_alternatives() {
        let demo = gold(1, "per:age", "Bob", "30");
        let pools = EntityPools {
            heads: vec!["Bob".into()],
            tails: vec!["31".into()],
            filler: vec![],
        };
        assert!(matches!(
            dispreferred_perturb(&demo, &mut rng_from_seed(0), 1..=3, &pools),
            Err(DpoError::PerturbFailed { attempts: 10, .. })
        ));
    }

    #[test]
    fn copy_matches_demo_serialization() {
        let demos = vec![gold(1, "per:age", "A", "1")];
        let out = dispreferred_copy(&demos, &mut rng_from_seed(0)).unwrap();
        assert_eq!(out.tokens, demos[0].tokens);
        assert_eq!(out.to_prompt_json(), demos[0].to_prompt_json());
        assert!(matches!(
            dispreferred_copy(&[], &mut rng_from_seed(0)),
            Err(DpoError::NoDemonstrations)
        ));
        let three: Vec<_> = (0..3).map(|i| gold(i, "per:age", "A", &i.to_string())).collect();
        let pick = |s| dispreferred_copy(&three, &mut rng_from_seed(s)).unwrap();
        assert_eq!(pick(5), pick(5));
    }

    fn roles() -> RelationRoles {
        RelationRoles {
            dpo: ["per:age", "org:founded"].iter().map(|s| s.to_string()).collect(),
            generate: ["per:title"].iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn incrementing_demonstrations() {
        let catalog = RelationCatalog::bundled();
        let cfg = DpoBuildConfig {
            pairs_per_relation: 4,
            ..DpoBuildConfig::default()
        };
        let build = build_dpo_dataset(&corpus(), &roles(), &cfg, &catalog).unwrap();
        assert_eq!(build.pairs.len(), 8);
        for relation in ["per:age", "org:founded"] {
            let pairs: Vec<_> = build.pairs.iter().filter(|p| p.relation == relation).collect();
            let counts: Vec<usize> = pairs
                .iter()
                .map(|p| p.instruction.matches("\"token\": [").count())
                .collect();
            assert_eq!(counts, vec![1, 2, 3, 4]);
            for w in pairs.windows(2) {
                assert!(w[1].instruction.contains(&w[0].preferred));
            }
        }
        assert!(build.pairs.iter().all(|p| p.relation != "per:title"));
    }

    #[test]
    fn copy_only_mix() {
        let catalog = RelationCatalog::bundled();
        let cfg = DpoBuildConfig {
            pairs_per_relation: 5,
            strategy_mix: StrategyMix::only(Strategy::Copy),
            ..DpoBuildConfig::default()
        };
        let build = build_dpo_dataset(&corpus(), &roles(), &cfg, &catalog).unwrap();
        for p in &build.pairs {
            assert_eq!(p.strategy, Strategy::Copy);
            assert!(p.instruction.contains(&p.dispreferred));
        }
    }

    #[test]
    fn hygiene_and_exhaustion() {
        let catalog = RelationCatalog::bundled();
        let mut overlapping = roles();
        overlapping.generate.insert("per:age".into());
        assert!(matches!(
            build_dpo_dataset(&corpus(), &overlapping, &DpoBuildConfig::default(), &catalog),
            Err(DpoError::Hygiene(_))
        ));
        let cfg = DpoBuildConfig {
            pairs_per_relation: 10,
            ..DpoBuildConfig::default()
        };
        assert!(matches!(
            build_dpo_dataset(&corpus(), &roles(), &cfg, &catalog),
            Err(DpoError::PoolExhausted { .. })
        ));
    }

    #[test]
    fn objective_values() {
        let beta = DpoBeta::new(1.0).unwrap();
        assert_eq!(dpo_objective(-3.0, -3.0, beta).unwrap(), -std::f64::consts::LN_2);
        // σ(ln 3) = 3/4
        let v = dpo_objective(3f64.ln(), 0.0, beta).unwrap();
        assert!((v - 0.75f64.ln()).abs() < 1e-12);
        // 1/β scaling: β = 2 halves the difference
        let half = dpo_objective(2.0 * 3f64.ln(), 0.0, DpoBeta::new(2.0).unwrap()).unwrap();
        assert!((half - v).abs() < 1e-12);
        assert!(dpo_objective(1e4, 0.0, beta).unwrap() <= 0.0);
        assert_eq!(dpo_objective(-1e4, 0.0, beta).unwrap(), -1e4);
        assert!(dpo_objective(f64::NAN, 0.0, beta).is_err());
        assert!(DpoBeta::new(0.0).is_err());
        assert!(DpoBeta::new(-1.0).is_err());
    }

    #[test]
    fn jsonl_round_trip_and_schema() {
        let catalog = RelationCatalog::bundled();
        let build = build_dpo_dataset(&corpus(), &roles(), &DpoBuildConfig::default(), &catalog)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dpo.jsonl");
        emit_jsonl(&build.pairs, &path).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), build.pairs);
        let text = fs::read_to_string(&path).unwrap();
        for line in text.lines() {
            assert!(line.starts_with("{\"instruction\":"));
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["output"].as_array().unwrap().len(), 2);
            let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
            assert_eq!(keys, ["instruction", "output", "strategy", "relation", "ordinal"]);
        }
        assert!(matches!(emit_jsonl(&[], &path), Err(DpoError::Empty)));

        let alias = dir.path().join("alias.jsonl");
        emit_alias_jsonl(&build.pairs, &alias).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(fs::read_to_string(&alias).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(first["chosen"], build.pairs[0].preferred.as_str());

        fs::write(&path, "{\"instruction\":\"x\",\"output\":[\"a\"],\"strategy\":\"copy\",\"relation\":\"r\",\"ordinal\":0}\n").unwrap();
        assert!(load_jsonl(&path).is_err());
    }
}
