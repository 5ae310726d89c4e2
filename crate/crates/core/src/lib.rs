//! Skill-library evolution for LLM agents.
//!
//! Failed task–trajectory pairs drive one evolution epoch: infer the knowledge
//! tags each task needs, select library skills that cover them, ask a chat
//! model for a new skill that fills the gaps, and keep the candidates that
//! score best on joint tag coverage and task alignment.

pub mod cover;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod hash;
pub mod model;
pub mod prompts;
pub mod providers;
pub mod retrieval;
pub mod scoring;
pub mod tags;
pub mod text;

pub use cover::{select_sources, CoverInstance, SelectionResult, Strategy};
pub use error::{Error, ProviderError, Result};
pub use model::{
    collect_failures, load_library, save_library, EvaluationRecord, FailurePair, Origin, Skill, SkillLibrary,
    Task, Trajectory,
};
pub use providers::{ChatModel, Embedder, LikelihoodScorer, Providers};
pub use tags::{EquivalenceIndex, KnowledgeTag, TagSet};
