//! Two-phase retrosynthesis planning: an LLM sketches a route step by step
//! through a semantic template index, then a tree search refines it.

pub mod benchmark;
pub mod error;
pub mod eval;
pub mod index;
pub mod llm;
pub mod mcts;
pub mod phase1;
pub mod pipeline;
pub mod route;

pub use error::{IndexError, LlmError, RouteError};
pub use index::{build_index, HashedEmbedder, SearchHit, TemplateIndex, TemplateRecord};
pub use llm::{Gateway, LlmBackend, Message};
pub use mcts::{action_logit, alignment_score, rank_routes, run_search, RouteCandidate, ScoringParams};
pub use phase1::{AttemptResult, Blueprint, BlueprintStep, PlannerConfig, PlannerContext, PlannerState, StopReason};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineResult};
pub use route::{contains_building_block, is_solved, Route};
