use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use relgen_core::corpus::{load_normalized, load_tacred};
use relgen_core::genloop::ScriptEntry;
use relgen_core::ReSample;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures").join(name)
}

struct Env {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Env {
    fn new(extra: &str) -> Env {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("relgen.toml");
        let text = format!(
            "seed = 11\noutput_dir = \"out\"\n\n[data]\ngold = {:?}\n{extra}",
            fixture("tacred_synth.json").display().to_string()
        );
        std::fs::write(&config, text).unwrap();
        Env { dir, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, args: &[&str]) -> (i32, String, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_relgen"))
            .arg("-c")
            .arg(&self.config)
            .args(args)
            .output()
            .unwrap();
        (
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).into_owned(),
            String::from_utf8_lossy(&out.stderr).into_owned(),
        )
    }

    fn ok(&self, args: &[&str]) -> String {
        let (code, stdout, stderr) = self.run(args);
        assert_eq!(code, 0, "{args:?}: {stderr}");
        stdout
    }

    fn plan(&self) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out().join("splitplan.json")).unwrap()).unwrap()
    }

    fn generate_half(&self) -> Vec<String> {
        self.plan()["generate"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect()
    }

    fn write_mock(&self, entries: &[ScriptEntry]) -> PathBuf {
        let path = self.dir.path().join("mock.jsonl");
        let text: String = entries
            .iter()
            .map(|e| serde_json::to_string(e).unwrap() + "\n")
            .collect();
        std::fs::write(&path, text).unwrap();
        path
    }
}

fn gold_of(relation: &str) -> Vec<ReSample> {
    load_tacred(fixture("tacred_synth.json"))
        .unwrap()
        .into_iter()
        .filter(|s| s.relation == relation)
        .collect()
}

fn obo_entries(relations: &[String], rounds: usize) -> Vec<ScriptEntry> {
    relations
        .iter()
        .flat_map(|r| {
            let pool = gold_of(r);
            (0..rounds).map(move |i| ScriptEntry::Response(pool[i].to_prompt_json()))
        })
        .collect()
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn split_writes_halves_and_swap_exchanges_roles() {
    let env = Env::new("");
    env.ok(&["split"]);
    let plan = env.plan();
    assert_eq!(plan["dpo"].as_array().unwrap().len(), 21);
    assert_eq!(plan["generate"].as_array().unwrap().len(), 21);

    env.ok(&["split", "--swap"]);
    let swapped = env.plan();
    assert_eq!(swapped["dpo"], plan["generate"]);
    assert_eq!(swapped["generate"], plan["dpo"]);
    assert_eq!(swapped["swapped"], true);
}

#[test]
fn config_errors_exit_2() {
    let env = Env::new("catalog = \"missing.json\"\n");
    let (code, _, stderr) = env.run(&["split"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("missing.json"), "{stderr}");

    let env = Env::new("[generation]\ntemprature = 0.3\n");
    let (code, _, stderr) = env.run(&["split"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("temprature"), "{stderr}");

    let env = Env::new("");
    let (code, _, stderr) = env.run(&["dpo-prep"]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("relgen split"));
}

#[test]
fn generate_obo_with_mock_for_two_relations() {
    let env = Env::new("");
    env.ok(&["split"]);
    let picked: Vec<String> = env.generate_half().into_iter().take(2).collect();
    let mock = env.write_mock(&obo_entries(&picked, 3));
    env.ok(&[
        "generate", "--rounds", "3", "--mock", mock.to_str().unwrap(),
        "--relation", &picked[0], "--relation", &picked[1],
    ]);
    let samples = load_normalized(env.out().join("generated.jsonl")).unwrap();
    assert_eq!(samples.len(), 6);
    let relations: BTreeSet<&str> = samples.iter().map(|s| s.relation.as_str()).collect();
    assert_eq!(relations, picked.iter().map(String::as_str).collect());
    assert!(lines(&env.out().join("generated.records.jsonl")).len() >= 6);
}

#[test]
fn generate_aao_makes_one_call_per_relation() {
    let env = Env::new("");
    env.ok(&["split"]);
    let relation = env.generate_half()[0].clone();
    let pool = gold_of(&relation);
    let body: Vec<String> = (0..32).map(|i| pool[i % pool.len()].to_prompt_json()).collect();
    let mock = env.write_mock(&[ScriptEntry::Response(body.join("\n"))]);
    env.ok(&[
        "generate", "--mode", "aao", "--count", "32", "--mock", mock.to_str().unwrap(),
        "--relation", &relation,
    ]);
    let records = lines(&env.out().join("generated.records.jsonl"));
    assert_eq!(records.len(), 32);
    let calls: BTreeSet<(u64, u64)> = records
        .iter()
        .map(|r| (r["round"].as_u64().unwrap(), r["attempt"].as_u64().unwrap()))
        .collect();
    assert_eq!(calls.len(), 1);
    assert_eq!(load_normalized(env.out().join("generated.jsonl")).unwrap().len(), 32);
}

#[test]
fn relation_filter_excludes_others() {
    let env = Env::new("");
    env.ok(&["split"]);
    let half = env.generate_half();
    let mock = env.write_mock(&obo_entries(&half[1..2], 2));
    env.ok(&["generate", "--rounds", "2", "--mock", mock.to_str().unwrap(), "--relation", &half[1]]);
    let samples = load_normalized(env.out().join("generated.jsonl")).unwrap();
    assert!(samples.iter().all(|s| s.relation == half[1]));
    assert!(!samples.iter().any(|s| s.relation == half[0]));
}

#[test]
fn backend_failure_exits_3_and_keeps_partial_output() {
    let env = Env::new("");
    env.ok(&["split"]);
    let half = env.generate_half();
    let mut entries = obo_entries(&half[..1], 2);
    entries.push(ScriptEntry::Error("connection reset".into()));
    let mock = env.write_mock(&entries);
    let (code, _, stderr) = env.run(&["generate", "--rounds", "2", "--mock", mock.to_str().unwrap()]);
    assert_eq!(code, 3, "{stderr}");
    let samples = load_normalized(env.out().join("generated.jsonl")).unwrap();
    assert_eq!(samples.len(), 2);
    assert!(samples.iter().all(|s| s.relation == half[0]));
}

#[test]
fn unreachable_http_backend_exits_3() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let env = Env::new(&format!(
        "\n[backend]\nurl = \"http://127.0.0.1:{port}/v1/chat/completions\"\nmodel = \"m\"\nmax_transport_retries = 0\n"
    ));
    env.ok(&["split"]);
    let (code, _, stderr) = env.run(&["generate", "--rounds", "1"]);
    assert_eq!(code, 3, "{stderr}");
}

#[test]
fn dpo_prep_writes_168_lines_and_histogram() {
    let env = Env::new("");
    env.ok(&["split"]);
    let stdout = env.ok(&["dpo-prep", "--alias"]);
    let pairs = lines(&env.out().join("dpo.jsonl"));
    assert_eq!(pairs.len(), 168);
    let total: usize = stdout
        .lines()
        .filter(|l| !l.starts_with("total") && !l.starts_with("->"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 168);
    assert!(stdout.contains("total"));
    let plan = env.plan();
    let dpo: BTreeSet<&str> = plan["dpo"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(pairs.iter().all(|p| dpo.contains(p["relation"].as_str().unwrap())));
    assert!(pairs.iter().all(|p| p["output"].as_array().unwrap().len() == 2));

    let alias = lines(&env.out().join("dpo.alias.jsonl"));
    assert_eq!(alias.len(), 168);
    assert_eq!(alias[0]["chosen"], pairs[0]["output"][0]);
    assert_eq!(alias[0]["rejected"], pairs[0]["output"][1]);
}

#[test]
fn dpo_prep_rejects_overlapping_halves() {
    let env = Env::new("");
    env.ok(&["split"]);
    let mut plan = env.plan();
    plan["dpo"] = plan["generate"].clone();
    std::fs::write(env.out().join("splitplan.json"), plan.to_string()).unwrap();
    let (code, _, stderr) = env.run(&["dpo-prep"]);
    assert_eq!(code, 4, "{stderr}");
    assert!(!env.out().join("dpo.jsonl").exists());
}

#[test]
fn diversity_reports() {
    let env = Env::new("");
    let sample = gold_of("per:age").remove(0);
    let input = env.dir.path().join("twins.jsonl");
    std::fs::write(&input, format!("{0}\n{0}\n", sample.to_normalized_json())).unwrap();
    env.ok(&["diversity", "--input", input.to_str().unwrap()]);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(env.out().join("diversity.json")).unwrap()).unwrap();
    assert_eq!(report["overall"]["mean_cosine"], 1.0);
    assert_eq!(report["overall"]["mean_repetition"], 1.0);
    assert!(env.out().join("diversity.txt").exists());

    let single = env.dir.path().join("single.jsonl");
    std::fs::write(&single, format!("{}\n", sample.to_normalized_json())).unwrap();
    env.ok(&["diversity", "--input", single.to_str().unwrap(), "--name", "single"]);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(env.out().join("single.json")).unwrap()).unwrap();
    assert!(report["overall"]["mean_cosine"].is_null());

    let bad = env.dir.path().join("bad.jsonl");
    std::fs::write(&bad, format!("{}\n{{\"token\": 3}}\n", sample.to_normalized_json())).unwrap();
    let (code, _, stderr) = env.run(&["diversity", "--input", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("record 2"), "{stderr}");

    let stdout = env.ok(&[
        "diversity", "--input", input.to_str().unwrap(), "--compare", single.to_str().unwrap(),
        "--name", "cmp",
    ]);
    assert!(stdout.contains("difference of overall means"));
}

#[test]
fn export_converts_gold() {
    let env = Env::new("");
    let out = env.dir.path().join("gold.jsonl");
    env.ok(&["export", "--output", out.to_str().unwrap()]);
    let back = load_normalized(&out).unwrap();
    assert_eq!(back, load_tacred(fixture("tacred_synth.json")).unwrap());

    let tacred = env.dir.path().join("gold.json");
    env.ok(&["export", "--input", out.to_str().unwrap(), "--format", "tacred-json", "--output", tacred.to_str().unwrap()]);
    assert_eq!(load_tacred(&tacred).unwrap(), back);
}
