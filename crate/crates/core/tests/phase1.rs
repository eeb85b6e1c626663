//! Scripted planning scenarios on the toy library.

mod common;

use std::sync::Arc;

use common::{mol, toy_index, toy_rules, toy_stock, Recorder, TOY_TARGET};
use synthelite_core::llm::ScriptRule;
use synthelite_core::phase1::{run_attempt, run_phase1};
use synthelite_core::{Gateway, PlannerConfig, PlannerContext, StopReason};

fn gateway_for(backend: Arc<Recorder>) -> Gateway {
    Gateway::new(backend).with_retry(0, std::time::Duration::ZERO)
}

const PROMPT: &str = "Highly feasible synthesis with high overall yields";

#[test]
fn toy_attempt_solves_in_three_steps_within_budget() {
    let (index, stock) = (toy_index(), toy_stock());
    let llm = gateway_for(Recorder::new(toy_rules()));
    let config = PlannerConfig::default();
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let a = run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert!(a.solved);
    assert_eq!(a.stop_reason, StopReason::StopSignal);
    let ids: Vec<&str> = a.blueprint.steps.iter().map(|s| s.ref_reaction.template_id.as_str()).collect();
    assert_eq!(ids, ["t001", "t004", "t006"]);
    assert_eq!(a.blueprint.steps.iter().map(|s| s.depth).collect::<Vec<_>>(), [1, 2, 3]);
    // Two calls per applied step plus the stop call.
    assert!(a.llm_calls <= 2 * a.blueprint.depth() + 2, "{} calls", a.llm_calls);
    assert_eq!(a.llm_calls, 7);
    assert!(a.final_state.all_in_stock());
}

#[test]
fn later_attempts_see_earlier_reactions_and_feedback() {
    let (index, stock) = (toy_index(), toy_stock());
    let backend = Recorder::new(toy_rules());
    let llm = gateway_for(backend.clone());
    let config = PlannerConfig { attempts: 2, ..PlannerConfig::default() };
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let attempts = run_phase1(&mol(TOY_TARGET), &ctx);
    assert_eq!(attempts.len(), 2);
    let fb = attempts[0].feedback.as_ref().unwrap();
    assert!(fb.overall_feedback.contains("strategically different"));

    let planning: Vec<String> = backend
        .conversations()
        .into_iter()
        .filter(|c| c.len() == 2 && c[1].content.contains("<previous_reactions>"))
        .map(|c| c[1].content.clone())
        .collect();
    // 4 planning calls per attempt (3 steps and the stop).
    assert_eq!(planning.len(), 8);
    assert!(planning[..4].iter().all(|p| !p.contains("<previous_attempts>")));
    for p in &planning[4..] {
        assert!(p.contains("Attempt 1 (solved: true, stop reason: stop_signal)"));
        for r in &attempts[0].final_state.reactions {
            assert!(p.contains(&r.retro_smiles()), "missing {}", r.retro_smiles());
        }
        assert!(p.contains(&fb.overall_feedback));
    }
    assert_eq!(attempts[1].index, 2);
}

#[test]
fn out_of_range_molecule_index_is_a_dead_end() {
    let (index, stock) = (toy_index(), toy_stock());
    let mut rules = vec![ScriptRule::new(
        "<previous_reactions>\n[]",
        "<synthesis_plan>{\"next_steps\": [{\"step_number\": 1, \"step_description\": \"x\"}]}</synthesis_plan>\
         <next_retro_transformation>x</next_retro_transformation>\
         <next_forward_reaction>amide coupling</next_forward_reaction>\
         <expandable_molecule_index>4</expandable_molecule_index>\
         <reaction_atom_indices>[2, 3]</reaction_atom_indices>",
    )];
    rules.push(ScriptRule::new("could not be used", rules[0].response.clone()));
    rules.extend(toy_rules());
    let backend = Recorder::new(rules);
    let llm = gateway_for(backend.clone());
    let config = PlannerConfig::default();
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let a = run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert_eq!(a.stop_reason, StopReason::DeadEnd);
    assert!(a.detail.unwrap().contains("out of range"));
    // One call and one re-ask.
    assert_eq!(a.llm_calls, 2);
    assert!(a.blueprint.steps.is_empty());
    assert!(!a.solved);
}

#[test]
fn site_without_templates_is_a_dead_end() {
    let (index, stock) = (toy_index(), toy_stock());
    let mut rules = vec![ScriptRule::new(
        "<previous_reactions>\n[]",
        "<synthesis_plan>{\"next_steps\": [{\"step_number\": 1, \"step_description\": \"x\"}]}</synthesis_plan>\
         <next_retro_transformation>x</next_retro_transformation>\
         <next_forward_reaction>amide coupling of a carboxylic acid and an amine</next_forward_reaction>\
         <expandable_molecule_index>0</expandable_molecule_index>\
         <reaction_atom_indices>[13, 14]</reaction_atom_indices>",
    )];
    rules.push(ScriptRule::new("could not be used", rules[0].response.clone()));
    rules.extend(toy_rules());
    let llm = gateway_for(Recorder::new(rules));
    let config = PlannerConfig::default();
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let a = run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert_eq!(a.stop_reason, StopReason::DeadEnd);
    assert!(a.detail.unwrap().contains("no retrieved template"));
}

#[test]
fn step_limit_stops_the_attempt() {
    let (index, stock) = (toy_index(), toy_stock());
    let llm = gateway_for(Recorder::new(toy_rules()));
    let config = PlannerConfig { max_steps: 2, ..PlannerConfig::default() };
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let a = run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert_eq!(a.stop_reason, StopReason::MaxSteps);
    assert_eq!(a.blueprint.depth(), 2);
    assert!(!a.solved);
}

#[test]
fn garbage_replies_end_in_step_failure() {
    let (index, stock) = (toy_index(), toy_stock());
    let llm = gateway_for(Recorder::new(vec![ScriptRule::new("", "I would rather talk about the weather.")]));
    let config = PlannerConfig::default();
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let attempts = run_phase1(&mol(TOY_TARGET), &ctx);
    assert_eq!(attempts.len(), 3);
    for a in attempts {
        assert_eq!(a.stop_reason, StopReason::StepFailure);
        assert_eq!(a.llm_calls, 2);
        assert!(a.blueprint.steps.is_empty());
        assert!(a.feedback.unwrap().is_empty());
    }
}

#[test]
fn unanswered_prompt_is_a_backend_failure() {
    let (index, stock) = (toy_index(), toy_stock());
    let llm = gateway_for(Recorder::new(Vec::new()));
    let config = PlannerConfig::default();
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let a = run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert_eq!(a.stop_reason, StopReason::BackendFailure);
    assert_eq!(a.llm_calls, 0);
}

#[test]
fn bad_selection_falls_back_to_next_rank() {
    let (index, stock) = (toy_index(), toy_stock());
    let mut rules = vec![ScriptRule::new(
        "<search_result>",
        "<selected_reaction_indices>[99, 0]</selected_reaction_indices>",
    )];
    rules.extend(toy_rules());
    let llm = gateway_for(Recorder::new(rules));
    let config = PlannerConfig { max_steps: 1, ..PlannerConfig::default() };
    let ctx = PlannerContext { user_prompt: PROMPT, index: &index, stock: &stock, llm: &llm, config: &config };
    let a = run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert_eq!(a.blueprint.depth(), 1);
    // Candidate 0 is the best-scoring template at the amide site.
    assert_eq!(a.blueprint.steps[0].ref_reaction.template_id, "t001");
}
