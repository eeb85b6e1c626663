//! Benchmark manifests, per-case scoring and the aggregate report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthelite_chem::{canonicalize, Molecule};

use crate::error::RouteError;
use crate::eval::{check_constraint, precision, precision_macro, recall_curve, solve_rate, CaseOutcome, ConstraintChecker};
use crate::llm::prompt::{asset, neutral_prompt};
use crate::llm::render;
use crate::mcts::RouteCandidate;
use crate::route::contains_building_block;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub target_smiles: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building_block_smiles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building_block_name: Option<String>,
}

/// How a case decides whether one route passes.
#[derive(Clone, Debug)]
pub enum CaseCheck {
    Rules(ConstraintChecker),
    /// Solved and containing the building block as a leaf or intermediate.
    BuildingBlock(Molecule),
    /// No constraint: a route passes when it is solved.
    Solved,
}

pub struct BenchmarkCase {
    pub entry: ManifestEntry,
    pub target: Molecule,
    pub prompt: String,
    pub check: CaseCheck,
}

pub fn load_manifest(path: &Path) -> Result<Vec<BenchmarkCase>, RouteError> {
    let text = std::fs::read_to_string(path).map_err(|e| RouteError::Checker(format!("{}: {e}", path.display())))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    entries.into_iter().map(|e| prepare_case(e, base)).collect()
}

/// Resolve the checker and the prompt; building-block cases without a
/// prompt get the starting-material prompt, others the neutral prompt.
pub fn prepare_case(entry: ManifestEntry, base: &Path) -> Result<BenchmarkCase, RouteError> {
    let target = canonicalize(&entry.target_smiles)?;
    let (check, default_prompt) = match (&entry.checker_file, &entry.building_block_smiles) {
        (Some(file), _) => {
            let p = base.join(file);
            let text = std::fs::read_to_string(&p).map_err(|e| RouteError::Checker(format!("{}: {e}", p.display())))?;
            (CaseCheck::Rules(ConstraintChecker::parse(&text)?), neutral_prompt().to_string())
        }
        (None, Some(bb)) => {
            let m = canonicalize(bb)?;
            let vars = BTreeMap::from([
                ("IUPAC_NAME", entry.building_block_name.clone().unwrap_or_else(|| m.smiles().to_string())),
                ("SMILES", m.smiles().to_string()),
            ]);
            (CaseCheck::BuildingBlock(m), render(&asset("starting_material"), &vars)?.trim().to_string())
        }
        (None, None) => (CaseCheck::Solved, neutral_prompt().to_string()),
    };
    let prompt = entry.prompt.clone().filter(|p| !p.trim().is_empty()).unwrap_or(default_prompt);
    Ok(BenchmarkCase { entry, target, prompt, check })
}

pub fn route_passes(c: &RouteCandidate, check: &CaseCheck) -> Result<bool, RouteError> {
    Ok(match check {
        CaseCheck::Rules(rules) => check_constraint(&c.route, rules)?,
        CaseCheck::BuildingBlock(bb) => c.solved && contains_building_block(&c.route, bb),
        CaseCheck::Solved => c.solved,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    /// Per ranked route.
    pub passes: Vec<bool>,
    pub solved: Vec<bool>,
}

impl CaseResult {
    pub fn score(case_id: &str, routes: &[RouteCandidate], check: &CaseCheck) -> Result<Self, RouteError> {
        Ok(CaseResult {
            case_id: case_id.to_string(),
            passes: routes.iter().map(|r| route_passes(r, check)).collect::<Result<_, _>>()?,
            solved: routes.iter().map(|r| r.solved).collect(),
        })
    }

    pub fn outcome(&self) -> CaseOutcome {
        CaseOutcome { case_id: self.case_id.clone(), passes: self.passes.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseResult>,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub precision: Option<f64>,
    pub precision_macro: Option<f64>,
    /// Cases with at least one solved, passing route.
    pub solve_rate: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub feasibility: BTreeMap<String, Vec<u8>>,
}

pub fn report(cases: Vec<CaseResult>, ks: &[usize]) -> Result<EvalReport, RouteError> {
    let outcomes: Vec<CaseOutcome> = cases.iter().map(CaseResult::outcome).collect();
    Ok(EvalReport {
        recall_at_k: recall_curve(&outcomes, ks)?,
        precision: precision(&outcomes).ok(),
        precision_macro: precision_macro(&outcomes).ok(),
        solve_rate: solve_rate(&cases, |c| c.passes.iter().zip(&c.solved).any(|(p, s)| *p && *s))?,
        cases,
        feasibility: BTreeMap::new(),
    })
}
