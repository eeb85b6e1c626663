//! Greedy LLM-driven planning: one combined Task 0/1/2 call per step, a
//! template search on the forward description, and an LLM selection among
//! site-matched candidates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use synthelite_chem::{apply_template, map_atoms, site_matches, Molecule, RetroReaction, Stock};

use crate::error::LlmError;
use crate::index::TemplateIndex;
use crate::llm::prompt::asset;
use crate::llm::{
    extract_tag, parse_feedback, parse_int_list, parse_plan, parse_stop, render, Feedback, Gateway, Message,
    SynthesisPlan,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub max_steps: usize,
    pub attempts: usize,
    pub max_candidates: usize,
    pub select_count: usize,
    /// Re-asks allowed per call when the reply is unusable.
    pub step_retry: usize,
    /// Templates retrieved per query before application.
    pub top_k: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { max_steps: 25, attempts: 3, max_candidates: 20, select_count: 3, step_retry: 1, top_k: 50 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.attempts == 0 || self.max_candidates == 0 || self.select_count == 0 || self.top_k == 0 {
            return Err("attempts, max_candidates, select_count and top_k must be positive".into());
        }
        if self.max_candidates < self.select_count {
            return Err("max_candidates must be at least select_count".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub molecule: Molecule,
    pub in_stock: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub target: Molecule,
    pub frontier: Vec<FrontierEntry>,
    pub reactions: Vec<RetroReaction>,
    pub step: usize,
}

impl PlannerState {
    pub fn new(target: Molecule, stock: &Stock) -> Self {
        let entry = FrontierEntry { in_stock: stock.contains(&target), molecule: target.clone() };
        PlannerState { target, frontier: vec![entry], reactions: Vec::new(), step: 0 }
    }

    /// Replace frontier entry `at` (the reaction's product) by its reactants.
    pub fn apply(&mut self, at: usize, r: RetroReaction, stock: &Stock) {
        debug_assert_eq!(self.frontier[at].molecule, r.product);
        self.frontier.remove(at);
        for m in &r.reactants {
            self.frontier.push(FrontierEntry { in_stock: stock.contains(m), molecule: m.clone() });
        }
        self.reactions.push(r);
        self.step += 1;
    }

    /// Rebuild the frontier from the target by replaying the reactions,
    /// each expanding the first frontier entry equal to its product.
    pub fn replay(target: &Molecule, reactions: &[RetroReaction], stock: &Stock) -> Option<Self> {
        let mut s = PlannerState::new(target.clone(), stock);
        for r in reactions {
            let at = s.frontier.iter().position(|e| e.molecule == r.product)?;
            s.apply(at, r.clone(), stock);
        }
        Some(s)
    }

    pub fn all_in_stock(&self) -> bool {
        self.frontier.iter().all(|e| e.in_stock)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlueprintStep {
    pub depth: usize,
    pub ref_reaction: RetroReaction,
    /// The forward-reaction description used as the search query.
    pub query: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub steps: Vec<BlueprintStep>,
}

impl Blueprint {
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, depth: usize) -> Option<&BlueprintStep> {
        depth.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    /// Same key format as [`crate::route::Route::reaction_multiset`].
    pub fn reaction_multiset(&self) -> Vec<String> {
        let mut keys: Vec<String> = self
            .steps
            .iter()
            .map(|s| format!("{}|{}", s.ref_reaction.template_id, s.ref_reaction.retro_smiles()))
            .collect();
        keys.sort();
        keys
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopSignal,
    MaxSteps,
    DeadEnd,
    StepFailure,
    BackendFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptResult {
    /// 1-based.
    pub index: usize,
    pub blueprint: Blueprint,
    pub final_state: PlannerState,
    pub solved: bool,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Successful LLM calls made by this attempt, evaluation included.
    #[serde(default)]
    pub llm_calls: usize,
}

pub struct PlannerContext<'a> {
    pub user_prompt: &'a str,
    pub index: &'a TemplateIndex,
    pub stock: &'a Stock,
    pub llm: &'a Gateway,
    pub config: &'a PlannerConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Applied,
    Stop,
    DeadEnd(String),
    Failure(String),
    Backend(String),
}

/// What Task 2 asked for.
#[derive(Clone, Debug)]
struct NextStep {
    forward: String,
    molecule: usize,
    site: BTreeSet<u32>,
    #[allow(dead_code)]
    plan: SynthesisPlan,
}

enum Problem {
    /// Unparseable reply; ends the step as a failure.
    Format(String),
    /// Parseable but unusable; ends the step as a dead end.
    Unusable(String),
}

fn frontier_block(state: &PlannerState, mapped: bool) -> String {
    state
        .frontier
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let smiles = if mapped { map_atoms(&e.molecule).smiles } else { e.molecule.smiles().to_string() };
            format!("{i}: {smiles} (in stock: {})", if e.in_stock { "yes" } else { "no" })
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn reactions_block(reactions: &[RetroReaction]) -> String {
    let list: Vec<String> = reactions.iter().map(RetroReaction::retro_smiles).collect();
    serde_json::to_string_pretty(&list).expect("strings serialize")
}

/// The `<previous_attempts>` content: each attempt's reactions and feedback.
pub fn previous_attempts_text(history: &[AttemptResult]) -> String {
    let mut out = Vec::new();
    for a in history {
        let mut s = format!(
            "Attempt {} (solved: {}, stop reason: {})\nReactions:\n",
            a.index,
            a.solved,
            serde_json::to_value(a.stop_reason).unwrap().as_str().unwrap_or("")
        );
        if a.final_state.reactions.is_empty() {
            s.push_str("(none)\n");
        }
        for (i, r) in a.final_state.reactions.iter().enumerate() {
            s.push_str(&format!("{}. {}\n", i + 1, r.retro_smiles()));
        }
        if let Some(fb) = &a.feedback {
            s.push_str("Feedback:\n");
            s.push_str(&serde_json::to_string_pretty(fb).unwrap());
            s.push('\n');
        }
        out.push(s);
    }
    out.join("\n")
}

/// The combined Task 0/1/2 conversation for the current state.
pub fn step_messages(state: &PlannerState, user_prompt: &str, history: &[AttemptResult]) -> Vec<Message> {
    let input = render(
        &asset("plan_input"),
        &BTreeMap::from([("TARGET_MOLECULE", state.target.smiles().to_string()), ("USER_PROMPT", user_prompt.to_string())]),
    )
    .expect("plan_input slots");
    let mut parts = vec![input];
    if !history.is_empty() {
        let vars = BTreeMap::from([("PREVIOUS_ATTEMPTS", previous_attempts_text(history))]);
        parts.push(render(&asset("plan_previous_attempts"), &vars).expect("previous attempts slot"));
    }
    let vars = BTreeMap::from([
        ("PREVIOUS_REACTIONS", reactions_block(&state.reactions)),
        ("CURRENT_MOLECULE_SMILES", frontier_block(state, false)),
        ("CURRENT_MOLECULE_SMILES_MAPPED", frontier_block(state, true)),
    ]);
    parts.push(render(&asset("plan_state"), &vars).expect("state slots"));
    for task in ["task0_stop", "task1_plan", "task2_next_step"] {
        parts.push(asset(task).body);
    }
    vec![Message::system(asset("plan_role").body), Message::user(parts.join("\n\n"))]
}

fn reask(error: &str) -> Message {
    Message::user(render(&asset("reask"), &BTreeMap::from([("ERROR", error.to_string())])).expect("reask slot"))
}

fn read_next_step(reply: &str, state: &PlannerState) -> Result<NextStep, Problem> {
    let fmt = |e: LlmError| Problem::Format(e.to_string());
    let plan = parse_plan(reply).map_err(fmt)?;
    extract_tag(reply, "next_retro_transformation").map_err(fmt)?;
    let forward = extract_tag(reply, "next_forward_reaction").map_err(fmt)?;
    if forward.is_empty() {
        return Err(Problem::Format("<next_forward_reaction> is empty".into()));
    }
    let index = parse_int_list(reply, "expandable_molecule_index").map_err(fmt)?;
    let [molecule] = index[..] else {
        return Err(Problem::Format("<expandable_molecule_index> must hold a single integer".into()));
    };
    let site = parse_int_list(reply, "reaction_atom_indices").map_err(fmt)?;
    if molecule >= state.frontier.len() {
        return Err(Problem::Unusable(format!(
            "expandable molecule index {molecule} is out of range; there are {} molecules",
            state.frontier.len()
        )));
    }
    Ok(NextStep { forward, molecule, site: site.into_iter().map(|i| i as u32).collect(), plan })
}

/// Retrieve templates for the forward text, apply them to the chosen
/// molecule and keep outcomes at the requested site.
pub fn site_candidates(
    index: &TemplateIndex,
    query: &str,
    mol: &Molecule,
    site: &BTreeSet<u32>,
    config: &PlannerConfig,
) -> Result<Vec<RetroReaction>, crate::error::IndexError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for hit in index.search(query, config.top_k)? {
        let Some(rec) = index.record(&hit.template_id) else { continue };
        for r in apply_template(&rec.template, mol) {
            if site_matches(&r, site) && seen.insert((r.reactants.clone(), r.site.clone())) {
                out.push(r);
            }
        }
        if out.len() >= config.max_candidates {
            break;
        }
    }
    out.truncate(config.max_candidates);
    Ok(out)
}

fn search_result_text(candidates: &[RetroReaction], index: &TemplateIndex) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let reactants: Vec<&str> = r.reactants.iter().map(Molecule::smiles).collect();
            let desc = index.record(&r.template_id).map_or("", |t| t.description.as_str());
            format!("{i}: {}>>{} | {desc}", reactants.join("."), r.product)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// One planning step. On `Applied` the state and blueprint are extended.
pub fn plan_step(
    state: &mut PlannerState,
    blueprint: &mut Blueprint,
    history: &[AttemptResult],
    ctx: &PlannerContext,
) -> StepOutcome {
    let mut messages = step_messages(state, ctx.user_prompt, history);
    let mut reasks = ctx.config.step_retry;
    let (reply, next, candidates) = loop {
        let reply = match ctx.llm.complete(&messages) {
            Ok(r) => r,
            Err(e) => return StepOutcome::Backend(e.to_string()),
        };
        if parse_stop(&reply) {
            return StepOutcome::Stop;
        }
        let problem = match read_next_step(&reply, state) {
            Ok(next) => {
                let mol = &state.frontier[next.molecule].molecule;
                match site_candidates(ctx.index, &next.forward, mol, &next.site, ctx.config) {
                    Ok(c) if !c.is_empty() => break (reply, next, c),
                    Ok(_) => Problem::Unusable(format!(
                        "no retrieved template applies to molecule {} at atoms {:?}",
                        next.molecule, next.site
                    )),
                    Err(e) => return StepOutcome::Failure(e.to_string()),
                }
            }
            Err(p) => p,
        };
        let msg = match &problem {
            Problem::Format(m) | Problem::Unusable(m) => m.clone(),
        };
        if reasks == 0 {
            return match problem {
                Problem::Format(m) => StepOutcome::Failure(m),
                Problem::Unusable(m) => StepOutcome::DeadEnd(m),
            };
        }
        reasks -= 1;
        log::info!("step {}: re-asking ({msg})", state.step + 1);
        messages.push(Message::assistant(reply));
        messages.push(reask(&msg));
    };

    let vars = BTreeMap::from([
        ("SEARCH_RESULT", search_result_text(&candidates, ctx.index)),
        ("MAX_SELECTS_REACTIONS", ctx.config.select_count.to_string()),
    ]);
    messages.push(Message::assistant(reply));
    messages.push(Message::user(render(&asset("select_reactions"), &vars).expect("selection slots")));
    let mut reasks = ctx.config.step_retry;
    let chosen = loop {
        let reply = match ctx.llm.complete(&messages) {
            Ok(r) => r,
            Err(e) => return StepOutcome::Backend(e.to_string()),
        };
        let err = match parse_int_list(&reply, "selected_reaction_indices") {
            // Rank 1 first; later ranks are fallbacks for invalid picks.
            Ok(ranks) => match ranks.into_iter().find(|&i| i < candidates.len()) {
                Some(i) => break i,
                None => format!("no selected index is within 0..{}", candidates.len()),
            },
            Err(e) => e.to_string(),
        };
        if reasks == 0 {
            return StepOutcome::Failure(err);
        }
        reasks -= 1;
        messages.push(Message::assistant(reply));
        messages.push(reask(&err));
    };
    let reaction = candidates[chosen].clone();
    state.apply(next.molecule, reaction.clone(), ctx.stock);
    blueprint.steps.push(BlueprintStep { depth: state.step, ref_reaction: reaction, query: next.forward });
    StepOutcome::Applied
}

/// Plan until stop, dead end, failure or the step limit.
pub fn run_attempt(target: &Molecule, history: &[AttemptResult], ctx: &PlannerContext) -> AttemptResult {
    let calls_before = ctx.llm.ledger().len();
    let mut state = PlannerState::new(target.clone(), ctx.stock);
    let mut blueprint = Blueprint::default();
    let mut detail = None;
    let stop_reason = loop {
        if state.step >= ctx.config.max_steps {
            break StopReason::MaxSteps;
        }
        match plan_step(&mut state, &mut blueprint, history, ctx) {
            StepOutcome::Applied => continue,
            StepOutcome::Stop => break StopReason::StopSignal,
            StepOutcome::DeadEnd(m) => {
                detail = Some(m);
                break StopReason::DeadEnd;
            }
            StepOutcome::Failure(m) => {
                detail = Some(m);
                break StopReason::StepFailure;
            }
            StepOutcome::Backend(m) => {
                detail = Some(m);
                break StopReason::BackendFailure;
            }
        }
    };
    if let Some(d) = &detail {
        log::warn!("attempt {} ended with {stop_reason:?}: {d}", history.len() + 1);
    }
    AttemptResult {
        index: history.len() + 1,
        solved: state.all_in_stock(),
        blueprint,
        final_state: state,
        stop_reason,
        feedback: None,
        detail,
        llm_calls: ctx.llm.ledger().len() - calls_before,
    }
}

pub fn evaluation_messages(attempt: &AttemptResult, user_prompt: &str) -> Vec<Message> {
    let plan = attempt
        .blueprint
        .steps
        .iter()
        .map(|s| format!("Step {}: {}\nDescription: {}", s.depth, s.ref_reaction.retro_smiles(), s.query))
        .collect::<Vec<_>>()
        .join("\n");
    let vars = BTreeMap::from([
        ("TARGET_MOLECULE", attempt.final_state.target.smiles().to_string()),
        ("USER_PROMPT", user_prompt.to_string()),
        ("PROPOSED_SYNTHESIS_PLAN", plan),
    ]);
    let input = render(&asset("eval_input"), &vars).expect("eval_input slots");
    vec![Message::system(asset("eval_role").body), Message::user(format!("{input}\n\n{}", asset("eval_instruction").body))]
}

/// Best-effort critique of an attempt; empty on any failure.
pub fn self_evaluate(attempt: &AttemptResult, user_prompt: &str, llm: &Gateway, retries: usize) -> Feedback {
    if attempt.final_state.reactions.is_empty() {
        return Feedback::default();
    }
    let mut messages = evaluation_messages(attempt, user_prompt);
    for left in (0..=retries).rev() {
        let reply = match llm.complete(&messages) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("self-evaluation call failed: {e}");
                return Feedback::default();
            }
        };
        match parse_feedback(&reply) {
            Ok(fb) => return fb,
            Err(e) if left > 0 => {
                messages.push(Message::assistant(reply));
                messages.push(reask(&e.to_string()));
            }
            Err(e) => log::warn!("self-evaluation unusable: {e}"),
        }
    }
    Feedback::default()
}

/// One attempt followed by its self-evaluation.
pub fn run_evaluated_attempt(target: &Molecule, history: &[AttemptResult], ctx: &PlannerContext) -> AttemptResult {
    let mut attempt = run_attempt(target, history, ctx);
    let before = ctx.llm.ledger().len();
    let fb = self_evaluate(&attempt, ctx.user_prompt, ctx.llm, ctx.config.step_retry);
    attempt.llm_calls += ctx.llm.ledger().len() - before;
    attempt.feedback = Some(fb);
    attempt
}

/// `config.attempts` attempts, each seeing all earlier ones.
pub fn run_phase1(target: &Molecule, ctx: &PlannerContext) -> Vec<AttemptResult> {
    let mut history = Vec::new();
    for _ in 0..ctx.config.attempts {
        let a = run_evaluated_attempt(target, &history, ctx);
        history.push(a);
    }
    history
}

#[cfg(test)]
mod tests {
    use super::*;
    use synthelite_chem::canonicalize;

    #[test]
    fn replay_reproduces_frontier() {
        let stock = Stock::from_smiles(["CN"]).unwrap();
        let target = canonicalize("CNC(C)=O").unwrap();
        let r = RetroReaction::from_retro_smiles("CNC(C)=O>>CC(=O)O.CN", "t001", [2, 3].into()).unwrap();
        let mut s = PlannerState::new(target.clone(), &stock);
        s.apply(0, r.clone(), &stock);
        assert_eq!(PlannerState::replay(&target, &[r], &stock).unwrap(), s);
        assert_eq!(s.step, s.reactions.len());
        assert_eq!(s.frontier.iter().map(|e| e.in_stock).collect::<Vec<_>>(), [false, true]);
    }

    #[test]
    fn config_defaults_and_limits() {
        let c = PlannerConfig::default();
        assert_eq!((c.max_steps, c.attempts, c.max_candidates, c.select_count), (25, 3, 20, 3));
        assert!(c.validate().is_ok());
        assert!(PlannerConfig { max_candidates: 2, ..c }.validate().is_err());
    }

    #[test]
    fn state_block_lists_stock_flags() {
        let stock = Stock::from_smiles(["CN"]).unwrap();
        let s = PlannerState::new(canonicalize("CN").unwrap(), &stock);
        let msgs = step_messages(&s, "any", &[]);
        assert!(msgs[1].content.contains("0: CN (in stock: yes)"));
        assert!(msgs[1].content.contains("0: [CH3:1][NH2:2] (in stock: yes)"));
        assert!(!msgs[1].content.contains("<previous_attempts>"));
    }
}
