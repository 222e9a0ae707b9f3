mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relgen_core::corpus::{validate_sample, RelationCatalog};
use relgen_core::genloop::{
    run_aao, run_constant, run_obo, GenerationConfig, Outcome, RecordingBackend, ScriptedMock,
};

use common::{numbered, response_for};

fn script(relation: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| response_for(relation, i)).collect()
}

#[test]
fn obo_manifest_grows_by_one_per_round() {
    let catalog = RelationCatalog::bundled();
    let cfg = GenerationConfig::default();
    for k in [1, 2, 7, 32, 64] {
        let mock = ScriptedMock::from_responses(script("per:age", k));
        let run = run_obo("per:age", numbered("per:age", 0), k, &cfg, &mock, &catalog).unwrap();
        assert_eq!(run.accepted.len(), k);
        assert_eq!(run.records.len(), k);
        for (j, record) in run.records.iter().enumerate() {
            assert_eq!(record.prompt_manifest.len(), 1 + j);
            let mut expected = vec!["demo-0".to_string()];
            expected.extend(run.accepted[..j].iter().map(|s| s.source_id.clone()));
            assert_eq!(record.prompt_manifest, expected);
        }
        assert_eq!(run.final_spec.demonstrations.len(), 1 + k);
        assert!(run.accepted.iter().all(|s| validate_sample(s, &catalog).is_ok()));
    }
}

#[test]
fn replaying_recorded_prompts_reproduces_responses() {
    let catalog = RelationCatalog::bundled();
    let cfg = GenerationConfig {
        max_retries_per_round: 1,
        ..GenerationConfig::default()
    };
    let mut responses = script("per:title", 5);
    responses.insert(2, "no json here".to_string());
    responses.insert(4, response_for("per:age", 9));

    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("tape.jsonl");
    let recorder = RecordingBackend::create(ScriptedMock::from_responses(responses), &tape).unwrap();
    let first = run_obo("per:title", numbered("per:title", 0), 5, &cfg, &recorder, &catalog).unwrap();
    drop(recorder);

    let replay = ScriptedMock::from_file(&tape).unwrap();
    let second = run_obo("per:title", numbered("per:title", 0), 5, &cfg, &replay, &catalog).unwrap();
    assert_eq!(first, second);

    let prompts = replay.prompts();
    assert_eq!(prompts.len(), first.records.len());
    for (record, prompt) in first.records.iter().zip(&prompts) {
        assert_eq!(&record.prompt, prompt);
    }
    let outcomes: Vec<Outcome> = first.records.iter().map(|r| r.outcome).collect();
    assert!(outcomes.contains(&Outcome::ParseFailed));
    assert!(outcomes.contains(&Outcome::ValidationFailed));
    assert!(first.records.iter().all(|r| r.outcome != Outcome::Accepted || r.violations.is_empty()));
}

#[test]
fn aao_and_single_obo_round_agree() {
    let catalog = RelationCatalog::bundled();
    let cfg = GenerationConfig::default();
    let a = run_aao(
        "per:age",
        numbered("per:age", 0),
        1,
        &cfg,
        &ScriptedMock::from_responses(script("per:age", 1)),
        &catalog,
    )
    .unwrap();
    let o = run_obo(
        "per:age",
        numbered("per:age", 0),
        1,
        &cfg,
        &ScriptedMock::from_responses(script("per:age", 1)),
        &catalog,
    )
    .unwrap();
    assert_eq!(a.accepted, o.accepted);
}

#[test]
fn constant_pool_manifest_lengths() {
    let catalog = RelationCatalog::bundled();
    let cfg = GenerationConfig::default();
    let mock = ScriptedMock::from_responses(script("per:age", 6));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let run = run_constant("per:age", vec![numbered("per:age", 0)], 6, &cfg, &mock, &catalog, &mut rng)
        .unwrap();
    let lengths: Vec<usize> = run.records.iter().map(|r| r.prompt_manifest.len()).collect();
    assert_eq!(lengths, [1, 2, 3, 4, 4, 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mock_runs_are_deterministic(k in 1usize..12, seed in any::<u64>(), capacity in 1usize..6) {
        let catalog = RelationCatalog::bundled();
        let cfg = GenerationConfig { pool_capacity: capacity, ..GenerationConfig::default() };
        let go = || {
            let mock = ScriptedMock::from_responses(script("per:age", k));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_constant("per:age", vec![numbered("per:age", 0)], k, &cfg, &mock, &catalog, &mut rng).unwrap()
        };
        let (a, b) = (go(), go());
        prop_assert_eq!(&a, &b);
        prop_assert!(a.records.iter().all(|r| r.prompt_manifest.len() <= capacity));
    }
}
