#![allow(dead_code)]

use std::path::PathBuf;

use relgen_core::corpus::{load_tacred, Provenance, ReSample};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    workspace_root().join("data/fixtures").join(name)
}

pub fn mini_tacred() -> Vec<ReSample> {
    load_tacred(fixture("tacred_mini.json")).expect("mini fixture loads")
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// A valid generated-looking sample for `relation`, numbered `i`.
pub fn numbered(relation: &str, i: usize) -> ReSample {
    ReSample::from_ranges(
        toks(&format!("Person{i} turned {i} last spring .")),
        (0, 1),
        (2, 3),
        relation,
        Provenance::Gold,
        format!("demo-{i}"),
    )
    .unwrap()
}

/// Model-style response carrying one sample object.
pub fn response_for(relation: &str, i: usize) -> String {
    format!(
        "Here is a new sample:\n```json\n{{\"token\": [\"Writer{i}\", \"is\", \"{i}\", \"years\", \"old\", \".\"], \"h\": {{\"name\": \"Writer{i}\", \"pos\": [0, 1]}}, \"t\": {{\"name\": \"{i}\", \"pos\": [2, 3]}}, \"relation\": \"{relation}\"}}\n```"
    )
}
