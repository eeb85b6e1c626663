//! Phase 1 followed by one search per attempt, ranked together.

use serde::{Deserialize, Serialize};
use synthelite_chem::{Molecule, Stock};

use crate::index::TemplateIndex;
use crate::mcts::{rank_routes, run_search, RouteCandidate, ScoringParams, SearchStats};
use crate::phase1::{run_phase1, AttemptResult, PlannerConfig, PlannerContext};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub planner: PlannerConfig,
    pub scoring: ScoringParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.planner.validate()?;
        self.scoring.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub attempts: Vec<AttemptResult>,
    pub routes: Vec<RouteCandidate>,
    pub search_stats: Vec<SearchStats>,
}

/// Search every attempt's blueprint (partial ones included) and rank the
/// pooled candidates.
pub fn search_attempts(
    target: &Molecule,
    attempts: &[AttemptResult],
    stock: &Stock,
    index: &TemplateIndex,
    params: &ScoringParams,
) -> (Vec<RouteCandidate>, Vec<SearchStats>) {
    let mut pool = Vec::new();
    let mut stats = Vec::new();
    for a in attempts {
        let (found, s) = run_search(&a.blueprint, target, stock, index, params, a.index);
        pool.extend(found);
        stats.push(s);
    }
    (rank_routes(pool, attempts.len()), stats)
}

pub fn run_pipeline(target: &Molecule, ctx: &PlannerContext, params: &ScoringParams) -> PipelineResult {
    let attempts = run_phase1(target, ctx);
    let (routes, search_stats) = search_attempts(target, &attempts, ctx.stock, ctx.index, params);
    PipelineResult { attempts, routes, search_stats }
}

/// One JSON object per line, in rank order.
pub fn routes_jsonl(routes: &[RouteCandidate]) -> String {
    let mut out = String::new();
    for r in routes {
        out.push_str(&serde_json::to_string(r).expect("candidate serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_routes_jsonl(text: &str) -> Result<Vec<RouteCandidate>, crate::error::RouteError> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let c: RouteCandidate = serde_json::from_str(line)?;
        c.route.validate()?;
        out.push(c);
    }
    Ok(out)
}
