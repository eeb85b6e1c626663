//! Constraint checkers, benchmark metrics and the feasibility judge.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use synthelite_chem::smarts::Pattern;
use synthelite_chem::{matches_smirks, RetroReaction};

use crate::error::{LlmError, RouteError};
use crate::llm::prompt::asset;
use crate::llm::{extract_tag, render, Gateway, Message};
use crate::route::Route;

/// Where in the route a rule looks. Depth 1 is the last forward step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    #[default]
    Any,
    FinalStep,
    /// The deepest reactions, i.e. the first forward steps.
    FirstStep,
    WithinLastN(usize),
}

/// Forward-direction order between two rules' matching reactions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOrder {
    Before(String),
    After(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(default)]
    pub id: String,
    /// Forward reaction pattern, `reactants>>products`.
    pub smirks: String,
    #[serde(default)]
    pub position: Position,
    #[serde(default)]
    pub negate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<RuleOrder>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintChecker {
    pub id: String,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

impl ConstraintChecker {
    pub fn parse(json: &str) -> Result<Self, RouteError> {
        let c: ConstraintChecker = serde_json::from_str(json)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), RouteError> {
        for rule in &self.rules {
            let (lhs, rhs) = rule
                .smirks
                .split_once(">>")
                .ok_or_else(|| RouteError::Checker(format!("rule {:?}: not a reaction pattern", rule.id)))?;
            if lhs.trim().is_empty() || rhs.trim().is_empty() {
                return Err(RouteError::Checker(format!("rule {:?}: empty reaction side", rule.id)));
            }
            Pattern::parse(lhs)?;
            Pattern::parse(rhs)?;
            if let Position::WithinLastN(0) = rule.position {
                return Err(RouteError::Checker(format!("rule {:?}: within_last_n needs n >= 1", rule.id)));
            }
            if let Some(RuleOrder::Before(other) | RuleOrder::After(other)) = &rule.ordering {
                if rule.negate {
                    return Err(RouteError::Checker(format!("rule {:?}: ordering on a negated rule", rule.id)));
                }
                if !self.rules.iter().any(|r| &r.id == other && !r.negate) {
                    return Err(RouteError::Checker(format!("rule {:?}: unknown ordering target {other:?}", rule.id)));
                }
            }
        }
        Ok(())
    }
}

/// Depths of the reactions matching `rule` at its position.
fn matching_depths(rule: &Rule, steps: &[(usize, RetroReaction)], max_depth: usize) -> Result<Vec<usize>, RouteError> {
    let mut out = Vec::new();
    for (depth, rxn) in steps {
        let in_scope = match rule.position {
            Position::Any => true,
            Position::FinalStep => *depth == 1,
            Position::FirstStep => *depth == max_depth,
            Position::WithinLastN(n) => *depth <= n,
        };
        if in_scope && matches_smirks(rxn, &rule.smirks)? {
            out.push(*depth);
        }
    }
    Ok(out)
}

/// True iff every rule holds at its position, honouring negation and order.
pub fn check_constraint(route: &Route, checker: &ConstraintChecker) -> Result<bool, RouteError> {
    checker.validate()?;
    let steps = route
        .reactions()
        .into_iter()
        .map(|(d, r)| r.reaction().map(|rx| (d, rx)))
        .collect::<Result<Vec<_>, _>>()?;
    let max_depth = steps.iter().map(|(d, _)| *d).max().unwrap_or(0);
    let mut hits: HashMap<&str, Vec<usize>> = HashMap::new();
    for rule in &checker.rules {
        hits.insert(rule.id.as_str(), matching_depths(rule, &steps, max_depth)?);
    }
    for rule in &checker.rules {
        let mine = &hits[rule.id.as_str()];
        if rule.negate {
            if !mine.is_empty() {
                return Ok(false);
            }
            continue;
        }
        if mine.is_empty() {
            return Ok(false);
        }
        let ok = match &rule.ordering {
            None => true,
            // Earlier in the forward direction means deeper in the tree.
            Some(RuleOrder::Before(o)) => mine.iter().any(|&d| hits[o.as_str()].iter().any(|&e| d > e)),
            Some(RuleOrder::After(o)) => mine.iter().any(|&d| hits[o.as_str()].iter().any(|&e| d < e)),
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Ranked pass/fail flags of one benchmark case's routes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub passes: Vec<bool>,
}

/// Fraction of cases with a passing route among the first `k`.
pub fn recall_at_k(cases: &[CaseOutcome], k: usize) -> Result<f64, RouteError> {
    if cases.is_empty() {
        return Err(RouteError::EmptyBenchmark);
    }
    if k == 0 {
        return Err(RouteError::Checker("k must be at least 1".into()));
    }
    let hit = cases.iter().filter(|c| c.passes.iter().take(k).any(|&p| p)).count();
    Ok(hit as f64 / cases.len() as f64)
}

/// Passing routes over all routes, pooled across cases.
pub fn precision(cases: &[CaseOutcome]) -> Result<f64, RouteError> {
    let total: usize = cases.iter().map(|c| c.passes.len()).sum();
    if total == 0 {
        return Err(RouteError::NoRoutes);
    }
    let pass: usize = cases.iter().map(|c| c.passes.iter().filter(|&&p| p).count()).sum();
    Ok(pass as f64 / total as f64)
}

/// Per-case precision averaged over cases that produced routes.
pub fn precision_macro(cases: &[CaseOutcome]) -> Result<f64, RouteError> {
    let per: Vec<f64> = cases
        .iter()
        .filter(|c| !c.passes.is_empty())
        .map(|c| c.passes.iter().filter(|&&p| p).count() as f64 / c.passes.len() as f64)
        .collect();
    if per.is_empty() {
        return Err(RouteError::NoRoutes);
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Fraction of cases for which `satisfied` holds.
pub fn solve_rate<C>(cases: &[C], satisfied: impl Fn(&C) -> bool) -> Result<f64, RouteError> {
    if cases.is_empty() {
        return Err(RouteError::EmptyBenchmark);
    }
    Ok(cases.iter().filter(|c| satisfied(c)).count() as f64 / cases.len() as f64)
}

/// Recall at each requested K.
pub fn recall_curve(cases: &[CaseOutcome], ks: &[usize]) -> Result<BTreeMap<usize, f64>, RouteError> {
    ks.iter().map(|&k| recall_at_k(cases, k).map(|r| (k, r))).collect()
}

/// The route as numbered retro-reaction lines, deepest last.
pub fn route_text(route: &Route) -> String {
    route
        .reactions()
        .iter()
        .enumerate()
        .map(|(i, (_, r))| format!("Step {}: {}", i + 1, r.retro_smiles))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_score(reply: &str) -> Result<u8, LlmError> {
    let body = extract_tag(reply, "score")?;
    match body.trim().parse::<u8>() {
        Ok(n) if (1..=10).contains(&n) => Ok(n),
        _ => Err(LlmError::ScoreParse(format!("expected an integer from 1 to 10, got {body:?}"))),
    }
}

/// Ask the judge `runs` times and keep the highest score. Each run gets one
/// re-ask if its score is unreadable or out of range.
pub fn judge_feasibility(route: &Route, llm: &Gateway, runs: usize) -> Result<u8, RouteError> {
    if route.reaction_count() == 0 {
        return Err(RouteError::Checker("route has no reactions to judge".into()));
    }
    let mut best = 0;
    for run in 1..=runs {
        let vars = BTreeMap::from([
            ("TARGET_MOLECULE", route.root.smiles.clone()),
            ("ROUTE", route_text(route)),
            ("RUN", format!("{run} of {runs}")),
        ]);
        let mut messages = vec![Message::user(render(&asset("judge"), &vars)?)];
        let reply = llm.complete(&messages)?;
        let score = match parse_score(&reply) {
            Ok(s) => s,
            Err(e) => {
                messages.push(Message::assistant(reply));
                let fix = BTreeMap::from([("ERROR", e.to_string())]);
                messages.push(Message::user(render(&asset("reask"), &fix)?));
                parse_score(&llm.complete(&messages)?).map_err(|e| match e {
                    LlmError::TagMissing(_) => LlmError::ScoreParse("no <score> tag".into()),
                    other => other,
                })?
            }
        };
        best = best.max(score);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(passes: &[bool]) -> CaseOutcome {
        CaseOutcome { case_id: String::new(), passes: passes.to_vec() }
    }

    #[test]
    fn recall_and_precision_basics() {
        let cases = [outcome(&[false, true]), outcome(&[true]), outcome(&[])];
        assert!((recall_at_k(&cases, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((recall_at_k(&cases, 2).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((precision(&cases).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((precision_macro(&cases).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(recall_at_k(&[], 1), Err(RouteError::EmptyBenchmark)));
    }

    #[test]
    fn six_routes_five_passing() {
        let cases = [outcome(&[true, true, false]), outcome(&[true, true, true])];
        assert!((precision(&cases).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn checker_json_shapes() {
        let c = ConstraintChecker::parse(
            r#"{"id": "c", "rules": [
                {"id": "a", "smirks": "[C:1](=O)O.[N:2]>>[C:1](=O)[N:2]", "position": "final_step"},
                {"id": "b", "smirks": "c[Br].cB(O)O>>cc", "position": {"within_last_n": 3}, "ordering": {"before": "a"}}
            ]}"#,
        )
        .unwrap();
        assert_eq!(c.rules[1].position, Position::WithinLastN(3));
        assert!(ConstraintChecker::parse(r#"{"id": "c", "rules": [{"smirks": "C>>", "negate": true}]}"#).is_err());
        assert!(ConstraintChecker::parse(r#"{"id": "c", "rules": [{"id": "x", "smirks": "C>>C", "ordering": {"after": "y"}}]}"#).is_err());
    }
}
