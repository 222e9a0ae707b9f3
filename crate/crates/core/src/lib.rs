//! Generation of relation extraction training data with a large language model.
//!
//! The crate is split along the pipeline:
//!
//! - [`corpus`]: samples, relation catalogs, dataset loaders/exporters and the
//!   relation split used to keep preference data and generated data apart.
//! - [`promptkit`]: the three-part generation prompt (task description,
//!   relation explanation, demonstrations) and demonstration-pool updates.
//! - [`genloop`]: one-by-one, all-at-once and constant-pool generation loops
//!   over an [`LlmBackend`](genloop::LlmBackend).
//! - [`dpoprep`]: preference pair construction with incrementing demonstrations.
//! - [`diversity`]: pairwise cosine similarity and word repetition metrics.

pub mod corpus;
pub mod diversity;
pub mod dpoprep;
pub mod genloop;
pub mod promptkit;
pub mod seed;

pub use corpus::{
    CorpusError, EntitySpan, ExportFormat, Provenance, ReSample, RelationCatalog, RelationInfo,
    RelationRoles, SplitPlan, Verdict,
};
pub use diversity::{DiversityError, DiversityReport, RelationDiversity};
pub use dpoprep::{DpoBeta, DpoBuild, DpoBuildConfig, DpoError, PreferencePair, Strategy};
pub use genloop::{
    BackendError, GenError, GenerationConfig, GenerationRecord, GenerationRun, LlmBackend,
    Outcome, RunAborted,
};
pub use promptkit::{PromptError, PromptMode, PromptSpec, RenderedPrompt};
