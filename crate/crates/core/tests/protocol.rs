//! Synthesize well-formed replies for every tagged block and parse them back.

use proptest::collection::vec;
use proptest::prelude::*;
use synthelite_core::llm::parse::{PlanStep, ProblemStep};
use synthelite_core::llm::{
    extract_tag, parse_feedback, parse_int_list, parse_plan, parse_stop, wrap_tag, Feedback,
    SynthesisPlan,
};

/// Free text that cannot open a tag.
fn prose() -> impl Strategy<Value = String> {
    "[^<]{0,40}"
}

fn steps(first: u32, n: usize, with_reaction: bool) -> impl Strategy<Value = Vec<PlanStep>> {
    (vec((1u32..4, prose(), "[A-Za-z0-9()=#.>]{1,30}"), n)).prop_map(move |raw| {
        let mut number = first;
        raw.into_iter()
            .map(|(gap, description, reaction)| {
                number += gap;
                PlanStep {
                    step_number: number,
                    step_reaction: with_reaction.then_some(reaction),
                    step_description: description,
                }
            })
            .collect()
    })
}

fn plan() -> impl Strategy<Value = SynthesisPlan> {
    (0usize..4, 1usize..4)
        .prop_flat_map(|(done, todo)| {
            (
                (prose(), vec("[A-Za-z0-9()=#]{1,20}", 0..4), prose()),
                steps(0, done, true),
                (prose(), prose(), prose()),
                Just(todo),
            )
        })
        .prop_flat_map(|(head, previous, tail, todo)| {
            let last = previous.last().map_or(0, |s| s.step_number);
            (Just(head), Just(previous), Just(tail), steps(last, todo, false))
        })
        .prop_map(|((target, expandable, constraint), previous, (overview, estimate, notes), next)| SynthesisPlan {
            target_smiles: target,
            expandable_molecules: expandable,
            user_constraint: constraint,
            previous_steps: previous,
            strategy_overview: overview,
            step_estimate: estimate,
            next_steps: next,
            additional_notes: notes,
        })
}

fn feedback() -> impl Strategy<Value = Feedback> {
    (prose(), vec((1u32..30, prose()), 0..4)).prop_map(|(overall, steps)| Feedback {
        overall_feedback: overall,
        problematic_steps: steps.into_iter().map(|(step_id, feedback)| ProblemStep { step_id, feedback }).collect(),
    })
}

/// The JSON as a model might write it: pretty or compact, sometimes with a
/// trailing comma or a line comment.
fn loosen(json: String, style: u8) -> String {
    match style % 4 {
        0 => json,
        1 => {
            let end = json.rfind('}').unwrap();
            format!("{},\n{}", json[..end].trim_end(), &json[end..])
        }
        2 => format!("# model commentary\n{json}"),
        _ => format!("// reply\n{json}"),
    }
}

fn list_text(items: &[usize], style: u8) -> String {
    let inner = items.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    match style % 3 {
        0 => format!("[{inner}]"),
        1 => format!("({inner})"),
        _ if items.len() == 1 => inner,
        _ => format!("[{inner}]"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn stop_signal_round_trips(stop in any::<bool>(), upper in any::<bool>(), pre in prose(), post in prose()) {
        let word = match (stop, upper) {
            (true, true) => "TRUE",
            (true, false) => "true",
            (false, true) => "FALSE",
            (false, false) => "false",
        };
        let reply = format!("{pre}\n{}\n{post}", wrap_tag("stop_signal", word));
        prop_assert_eq!(parse_stop(&reply), stop);
    }

    #[test]
    fn atom_indices_round_trip(items in vec(0usize..200, 1..4), style in any::<u8>(), pre in prose()) {
        let reply = format!("{pre}\n{}", wrap_tag("reaction_atom_indices", &list_text(&items, style)));
        prop_assert_eq!(parse_int_list(&reply, "reaction_atom_indices").unwrap(), items);
    }

    #[test]
    fn selection_round_trips(items in vec(0usize..20, 1..6), style in any::<u8>(), pre in prose()) {
        let reply = format!("{pre}\n{}", wrap_tag("selected_reaction_indices", &list_text(&items, style)));
        prop_assert_eq!(parse_int_list(&reply, "selected_reaction_indices").unwrap(), items);
    }

    #[test]
    fn expandable_index_round_trips(i in 0usize..50, pre in prose()) {
        let reply = format!("{pre}\n{}", wrap_tag("expandable_molecule_index", &i.to_string()));
        prop_assert_eq!(parse_int_list(&reply, "expandable_molecule_index").unwrap(), vec![i]);
    }

    #[test]
    fn synthesis_plan_round_trips(p in plan(), pretty in any::<bool>(), style in any::<u8>(), pre in prose()) {
        let json = if pretty { serde_json::to_string_pretty(&p) } else { serde_json::to_string(&p) }.unwrap();
        let reply = format!("{pre}\n{}\nafterwards", wrap_tag("synthesis_plan", &loosen(json, style)));
        prop_assert_eq!(parse_plan(&reply).unwrap(), p);
    }

    #[test]
    fn feedback_round_trips(f in feedback(), style in any::<u8>(), pre in prose()) {
        let json = serde_json::to_string_pretty(&f).unwrap();
        let reply = format!("{pre}\n{}", wrap_tag("feedback", &loosen(json, style)));
        prop_assert_eq!(parse_feedback(&reply).unwrap(), f);
    }

    #[test]
    fn free_text_tags_round_trip(body in "[^<\\s][^<]{0,60}[^<\\s]") {
        for tag in ["next_retro_transformation", "next_forward_reaction", "description"] {
            prop_assert_eq!(extract_tag(&wrap_tag(tag, &body), tag).unwrap(), body.clone());
        }
    }
}

#[test]
fn plan_with_repeated_step_numbers_is_rejected() {
    let reply = wrap_tag(
        "synthesis_plan",
        r#"{"previous_steps": [{"step_number": 2, "step_description": "a"}],
            "next_steps": [{"step_number": 2, "step_description": "b"}]}"#,
    );
    assert!(parse_plan(&reply).is_err());
}

#[test]
fn plan_template_placeholders_are_tolerated() {
    let reply = wrap_tag(
        "synthesis_plan",
        r#"{
  "target_smiles": "CCO",
  "expandable_molecules": "CCO, CC",
  "previous_steps": [],
  "step_estimate": 3,
  "next_steps": [
    {
      "step_number": 1, # continuing
      "step_description": "Description of the retro transformation"
    },
    ...
  ],
}"#,
    );
    let plan = parse_plan(&reply).unwrap();
    assert_eq!(plan.expandable_molecules, ["CCO", "CC"]);
    assert_eq!(plan.step_estimate, "3");
    assert_eq!(plan.next_steps.len(), 1);
}

#[test]
fn feedback_requires_overall_text() {
    assert!(parse_feedback(&wrap_tag("feedback", r#"{"problematic_steps": []}"#)).is_err());
    let fb = parse_feedback(&wrap_tag("feedback", r#"{"overall_feedback": "fine"}"#)).unwrap();
    assert!(fb.problematic_steps.is_empty());
}
