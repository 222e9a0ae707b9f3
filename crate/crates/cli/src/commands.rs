use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use clap::ValueEnum;
use rand::Rng;
use relgen_core::corpus::{
    export_samples, group_by_relation, load_normalized, load_semeval, load_tacred,
    render_samples, split_relations,
};
use relgen_core::diversity::diversity_report;
use relgen_core::dpoprep::{build_dpo_dataset, emit_alias_jsonl, emit_jsonl};
use relgen_core::genloop::{run_aao, run_constant, run_obo, HttpBackend, RecordingBackend, ScriptedMock};
use relgen_core::seed::child_rng;
use relgen_core::{
    DiversityReport, DpoError, ExportFormat, GenError, GenerationConfig, GenerationRun,
    LlmBackend, ReSample, RelationCatalog, RelationRoles,
};
use serde::{Deserialize, Serialize};

use crate::config::{GoldFormat, PipelineConfig};

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Backend(anyhow::Error),
    Hygiene(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Backend(_) => 3,
            Failure::Hygiene(_) => 4,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Backend(e) | Failure::Hygiene(e) | Failure::Other(e) => e,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Other)?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Other)
}

/// Contents of `splitplan.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub seed: u64,
    pub swapped: bool,
    pub dpo: BTreeSet<String>,
    pub generate: BTreeSet<String>,
}

impl SplitFile {
    fn roles(&self) -> RelationRoles {
        RelationRoles {
            dpo: self.dpo.clone(),
            generate: self.generate.clone(),
        }
    }
}

fn read_split(cfg: &PipelineConfig) -> Result<RelationRoles, Failure> {
    let path = cfg.splitplan_path();
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {} (run `relgen split` first)", path.display()))
        .map_err(Failure::Config)?;
    let file: SplitFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Config)?;
    let roles = file.roles();
    roles
        .check_disjoint()
        .map_err(|e| Failure::Hygiene(anyhow!("{}: {e}", path.display())))?;
    Ok(roles)
}

pub fn split(cfg: &PipelineConfig, swap: bool) -> Result<(), Failure> {
    let catalog = cfg.catalog().map_err(Failure::Config)?;
    let seed = cfg.seed_for("split");
    let plan = split_relations(&catalog, seed).map_err(config_err)?;
    let roles = plan.roles(swap);
    let file = SplitFile {
        seed,
        swapped: swap,
        dpo: roles.dpo,
        generate: roles.generate,
    };
    let path = cfg.splitplan_path();
    let mut text = serde_json::to_string_pretty(&file).expect("split plan serializes");
    text.push('\n');
    write_file(&path, &text)?;
    println!(
        "{} relations for preference data, {} for generation -> {}",
        file.dpo.len(),
        file.generate.len(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenMode {
    /// One by one, every accepted sample becomes a demonstration.
    Obo,
    /// All at once, `count` samples per relation without feedback.
    Aao,
    /// One by one with a demonstration pool of fixed capacity.
    Constant,
}

pub struct GenerateOptions {
    pub mode: GenMode,
    pub count: Option<usize>,
    pub rounds: Option<usize>,
    pub relations: Vec<String>,
    pub mock: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub jobs: usize,
    pub diversity_instruction: bool,
    pub name: String,
}

fn make_backend(cfg: &PipelineConfig, opts: &GenerateOptions) -> Result<Box<dyn LlmBackend>, Failure> {
    let inner: Box<dyn LlmBackend> = match &opts.mock {
        Some(path) => Box::new(ScriptedMock::from_file(path).map_err(config_err)?),
        None => {
            let backend = cfg
                .backend
                .as_ref()
                .ok_or_else(|| config_err(anyhow!("no [backend] section and no --mock script")))?;
            Box::new(HttpBackend::new(backend.settings().map_err(Failure::Config)?))
        }
    };
    match &opts.record {
        Some(path) => Ok(Box::new(
            RecordingBackend::create(inner, path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(Failure::Other)?,
        )),
        None => Ok(inner),
    }
}

/// Relations to generate: the generation half, narrowed by the filter.
fn target_relations(
    roles: &RelationRoles,
    filter: &[String],
    catalog: &RelationCatalog,
) -> Result<Vec<String>, Failure> {
    for name in filter {
        if !catalog.contains(name) {
            return Err(config_err(anyhow!("unknown relation {name:?} in --relation")));
        }
        if !roles.generate.contains(name) {
            log::warn!("{name} is not in the generation half; skipped");
        }
    }
    Ok(roles
        .generate
        .iter()
        .filter(|r| filter.is_empty() || filter.contains(r))
        .cloned()
        .collect())
}

fn generate_one(
    relation: &str,
    gold: &[ReSample],
    cfg: &GenerationConfig,
    mode: GenMode,
    count: usize,
    backend: &dyn LlmBackend,
    catalog: &RelationCatalog,
) -> Option<Result<GenerationRun, GenError>> {
    let candidates: Vec<&ReSample> = gold.iter().filter(|s| s.relation == relation).collect();
    if candidates.is_empty() {
        log::warn!("no gold sample of {relation}; skipped");
        return None;
    }
    let mut rng = child_rng(cfg.seed, relation);
    let seed_demo = candidates[rng.gen_range(0..candidates.len())].clone();
    Some(match mode {
        GenMode::Obo => run_obo(relation, seed_demo, cfg.rounds, cfg, backend, catalog),
        GenMode::Aao => run_aao(relation, seed_demo, count, cfg, backend, catalog),
        GenMode::Constant => {
            run_constant(relation, vec![seed_demo], cfg.rounds, cfg, backend, catalog, &mut rng)
        }
    })
}

pub fn generate(cfg: &PipelineConfig, opts: &GenerateOptions) -> Result<(), Failure> {
    if opts.jobs == 0 {
        return Err(config_err(anyhow!("--jobs must be at least 1")));
    }
    if opts.jobs > 1 && opts.mock.is_some() {
        return Err(config_err(anyhow!(
            "--jobs > 1 cannot be combined with --mock: scripted responses are consumed in order"
        )));
    }
    let roles = read_split(cfg)?;
    let catalog = cfg.catalog().map_err(Failure::Config)?;
    let gold = cfg.gold().map_err(Failure::Config)?;
    let relations = target_relations(&roles, &opts.relations, &catalog)?;

    let mut gen_cfg = cfg.generation.clone();
    gen_cfg.seed = cfg.seed_for("generate");
    gen_cfg.diversity_instruction &= opts.diversity_instruction;
    if let Some(rounds) = opts.rounds {
        gen_cfg.rounds = rounds;
    }
    gen_cfg.validate().map_err(|e| config_err(anyhow!(e)))?;
    let count = opts.count.unwrap_or(gen_cfg.rounds);
    let backend = make_backend(cfg, opts)?;

    let slots: Vec<Mutex<Option<Result<GenerationRun, GenError>>>> =
        relations.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    // no new relation is started once the backend has failed
    let stop = AtomicBool::new(false);
    let work = || loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(relation) = relations.get(i) else { break };
        let result = generate_one(relation, &gold, &gen_cfg, opts.mode, count, &*backend, &catalog);
        if matches!(result, Some(Err(GenError::Aborted(_)))) {
            stop.store(true, Ordering::SeqCst);
        }
        *slots[i].lock().expect("slot lock") = result;
    };
    std::thread::scope(|scope| {
        for _ in 1..opts.jobs.min(relations.len().max(1)) {
            scope.spawn(work);
        }
        work();
    });

    let mut accepted = Vec::new();
    let mut records = String::new();
    let mut failure = None;
    for (relation, slot) in relations.iter().zip(slots) {
        let run = match slot.into_inner().expect("slot lock") {
            None => continue,
            Some(Ok(run)) => run,
            Some(Err(GenError::Aborted(aborted))) => {
                let message = format!("{relation}: {}", aborted.source);
                failure.get_or_insert(Failure::Backend(anyhow!(message)));
                aborted.partial
            }
            Some(Err(e)) => {
                failure.get_or_insert(config_err(anyhow!("{relation}: {e}")));
                continue;
            }
        };
        accepted.extend(run.accepted);
        for record in &run.records {
            records.push_str(&serde_json::to_string(record).expect("record serializes"));
            records.push('\n');
        }
    }

    let samples_path = cfg.output_dir.join(format!("{}.jsonl", opts.name));
    let records_path = cfg.output_dir.join(format!("{}.records.jsonl", opts.name));
    write_file(&samples_path, &render_samples(&accepted, ExportFormat::NormalizedJsonl))?;
    write_file(&records_path, &records)?;
    println!(
        "{} samples for {} relations -> {}",
        accepted.len(),
        relations.len(),
        samples_path.display()
    );
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

pub fn dpo_prep(cfg: &PipelineConfig, alias: bool) -> Result<(), Failure> {
    let roles = read_split(cfg)?;
    let catalog = cfg.catalog().map_err(Failure::Config)?;
    let gold = cfg.gold().map_err(Failure::Config)?;
    let mut dpo_cfg = cfg.dpo.clone();
    dpo_cfg.seed = cfg.seed_for("dpo");

    let build = build_dpo_dataset(&gold, &roles, &dpo_cfg, &catalog).map_err(|e| match e {
        DpoError::Hygiene(_) => Failure::Hygiene(e.into()),
        other => config_err(other),
    })?;
    let leaked: Vec<&str> = build
        .pairs
        .iter()
        .filter(|p| roles.generate.contains(&p.relation))
        .map(|p| p.relation.as_str())
        .collect();
    if !leaked.is_empty() {
        return Err(Failure::Hygiene(anyhow!("pairs built for generation relations {leaked:?}")));
    }

    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))
        .map_err(Failure::Other)?;
    let path = cfg.output_dir.join("dpo.jsonl");
    emit_jsonl(&build.pairs, &path).map_err(|e| Failure::Other(e.into()))?;
    if alias {
        emit_alias_jsonl(&build.pairs, cfg.output_dir.join("dpo.alias.jsonl"))
            .map_err(|e| Failure::Other(e.into()))?;
    }
    for (strategy, n) in build.histogram() {
        println!("{:<10}{n:>6}", strategy.as_str());
    }
    println!("{:<10}{:>6}", "total", build.pairs.len());
    println!("-> {}", path.display());
    Ok(())
}

fn report_for(path: &Path) -> Result<DiversityReport, Failure> {
    let samples = load_normalized(path).map_err(config_err)?;
    Ok(diversity_report(&group_by_relation(&samples)))
}

fn delta(a: Option<f64>, b: Option<f64>) -> String {
    match (a, b) {
        (Some(a), Some(b)) => format!("{:+.4}", a - b),
        _ => "-".into(),
    }
}

pub fn diversity(
    cfg: &PipelineConfig,
    input: &Path,
    compare: Option<&Path>,
    name: &str,
) -> Result<(), Failure> {
    let report = report_for(input)?;
    let mut text = report.to_table();
    write_file(&cfg.output_dir.join(format!("{name}.json")), &(report.to_json() + "\n"))?;
    if let Some(other) = compare {
        let second = report_for(other)?;
        write_file(
            &cfg.output_dir.join(format!("{name}.compare.json")),
            &(second.to_json() + "\n"),
        )?;
        let _ = writeln!(text, "\ncompared with {}", other.display());
        text.push_str(&second.to_table());
        let _ = writeln!(
            text,
            "\ndifference of overall means (input - compared): cosine {}, repetition {}",
            delta(report.overall.mean_cosine, second.overall.mean_cosine),
            delta(report.overall.mean_repetition, second.overall.mean_repetition)
        );
    }
    write_file(&cfg.output_dir.join(format!("{name}.txt")), &text)?;
    print!("{text}");
    Ok(())
}

pub fn export(
    cfg: &PipelineConfig,
    input: Option<&Path>,
    input_format: Option<GoldFormat>,
    format: ExportFormat,
    output: &Path,
) -> Result<(), Failure> {
    let catalog = cfg.catalog().map_err(Failure::Config)?;
    let samples = match input {
        None => cfg.gold().map_err(Failure::Config)?,
        Some(path) => {
            let guessed = match path.extension().and_then(|e| e.to_str()) {
                Some("jsonl") => GoldFormat::Jsonl,
                _ => GoldFormat::Tacred,
            };
            match input_format.unwrap_or(guessed) {
                GoldFormat::Tacred => load_tacred(path),
                GoldFormat::Jsonl => load_normalized(path),
                GoldFormat::Semeval => load_semeval(path),
            }
            .map_err(config_err)?
        }
    };
    export_samples(&samples, format, output, &catalog).map_err(config_err)?;
    println!("{} samples -> {}", samples.len(), output.display());
    Ok(())
}
