//! `{{VAR}}` prompt templates and the shipped prompt assets.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::LlmError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_vars: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let required_vars = placeholders(&body).into_iter().map(|(_, _, v)| v.to_string()).collect();
        PromptTemplate { name: name.into(), body, required_vars }
    }

    /// A shipped asset by file stem, e.g. `"task0_stop"`.
    pub fn asset(name: &str) -> Option<Self> {
        ASSETS.iter().find(|(n, _)| *n == name).map(|(n, body)| PromptTemplate::new(*n, *body))
    }
}

/// (start, end, name) of every `{{NAME}}` token.
fn placeholders(body: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = body[from..].find("{{") {
        let start = from + open;
        let Some(close) = body[start + 2..].find("}}") else { break };
        let end = start + 2 + close + 2;
        let name = &body[start + 2..end - 2];
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            out.push((start, end, name));
            from = end;
        } else {
            from = start + 2;
        }
    }
    out
}

/// Substitute every placeholder in one pass; inserted values are never
/// re-expanded.
pub fn render(t: &PromptTemplate, vars: &BTreeMap<&str, String>) -> Result<String, LlmError> {
    if let Some(missing) = t.required_vars.iter().find(|v| !vars.contains_key(v.as_str())) {
        return Err(LlmError::MissingVar(missing.clone()));
    }
    let mut out = String::with_capacity(t.body.len());
    let mut last = 0;
    for (start, end, name) in placeholders(&t.body) {
        out.push_str(&t.body[last..start]);
        out.push_str(&vars[name]);
        last = end;
    }
    out.push_str(&t.body[last..]);
    Ok(out)
}

macro_rules! assets {
    ($($name:literal),* $(,)?) => {
        /// Every shipped prompt as (file stem, text).
        pub const ASSETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../assets/prompts/", $name, ".txt")))),*
        ];
    };
}

assets!(
    "describe_role",
    "describe_input",
    "describe_instruction",
    "describe_examples",
    "plan_role",
    "plan_input",
    "plan_previous_attempts",
    "plan_state",
    "task0_stop",
    "task1_plan",
    "task2_next_step",
    "select_reactions",
    "eval_role",
    "eval_input",
    "eval_instruction",
    "neutral_prompt",
    "starting_material",
    "judge",
    "reask",
);

/// Look up a shipped asset that is known to exist.
pub(crate) fn asset(name: &str) -> PromptTemplate {
    PromptTemplate::asset(name).unwrap_or_else(|| panic!("prompt asset {name} not shipped"))
}

/// The default user prompt when none is given.
pub fn neutral_prompt() -> &'static str {
    ASSETS.iter().find(|(n, _)| *n == "neutral_prompt").map(|(_, b)| b.trim()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_and_reports_missing() {
        let t = PromptTemplate::new("t", "target: {{TARGET_MOLECULE}}");
        assert_eq!(render(&t, &vars(&[("TARGET_MOLECULE", "CCO")])).unwrap(), "target: CCO");
        let err = render(&t, &vars(&[])).unwrap_err();
        assert!(matches!(err, LlmError::MissingVar(v) if v == "TARGET_MOLECULE"));
    }

    #[test]
    fn values_are_not_reexpanded() {
        let t = PromptTemplate::new("t", "{{A}} and {{B}}");
        let out = render(&t, &vars(&[("A", "{{B}}"), ("B", "x")])).unwrap();
        assert_eq!(out, "{{B}} and x");
    }

    #[test]
    fn every_asset_declares_its_slots() {
        for (name, body) in ASSETS {
            let t = PromptTemplate::new(*name, *body);
            let filled: BTreeMap<&str, String> =
                t.required_vars.iter().map(|v| (v.as_str(), "value".to_string())).collect();
            let out = render(&t, &filled).unwrap();
            assert!(!out.contains("{{"), "{name}");
        }
        let state = PromptTemplate::asset("plan_state").unwrap();
        let expected = ["CURRENT_MOLECULE_SMILES", "CURRENT_MOLECULE_SMILES_MAPPED", "PREVIOUS_REACTIONS"];
        assert_eq!(state.required_vars.iter().map(String::as_str).collect::<Vec<_>>(), expected);
        assert!(neutral_prompt().starts_with("Highly feasible synthesis"));
    }
}
