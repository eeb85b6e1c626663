#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use synthelite_chem::{canonicalize, Molecule, Stock};
use synthelite_core::index::{describe_templates, load_templates};
use synthelite_core::llm::{ScriptRule, ScriptedBackend};
use synthelite_core::{build_index, Gateway, HashedEmbedder, TemplateIndex};

pub const TOY_TARGET: &str = "CNC(=O)c1ccc(-c2ccccc2)cc1";

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/toy")
}

pub fn toy_stock() -> Stock {
    Stock::load(&toy_dir().join("stock.smi")).unwrap()
}

pub fn toy_rules() -> Vec<ScriptRule> {
    ScriptedBackend::load(&toy_dir().join("llm.jsonl")).unwrap().rules().to_vec()
}

pub fn gateway(rules: Vec<ScriptRule>) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::new(rules))).with_retry(0, std::time::Duration::ZERO)
}

pub fn toy_gateway() -> Gateway {
    gateway(toy_rules())
}

/// The shipped library described through the shipped ledger.
pub fn toy_index() -> TemplateIndex {
    let records = load_templates(&toy_dir().join("templates.jsonl")).unwrap();
    let described = describe_templates(&records, &toy_gateway(), 4).unwrap();
    build_index(&described, Box::new(HashedEmbedder::default())).unwrap()
}

pub fn mol(smiles: &str) -> Molecule {
    canonicalize(smiles).unwrap()
}

/// Wraps a backend and keeps every conversation it was sent.
pub struct Recorder {
    pub inner: ScriptedBackend,
    pub seen: std::sync::Mutex<Vec<Vec<synthelite_core::Message>>>,
}

impl Recorder {
    pub fn new(rules: Vec<ScriptRule>) -> Arc<Self> {
        Arc::new(Recorder { inner: ScriptedBackend::new(rules), seen: Default::default() })
    }

    pub fn conversations(&self) -> Vec<Vec<synthelite_core::Message>> {
        self.seen.lock().unwrap().clone()
    }
}

impl synthelite_core::LlmBackend for Recorder {
    fn name(&self) -> &str {
        "recorder"
    }

    fn complete(&self, messages: &[synthelite_core::Message]) -> Result<String, synthelite_core::LlmError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        synthelite_core::LlmBackend::complete(&self.inner, messages)
    }
}

/// The blueprint of the scripted toy attempt (amide, ester, Suzuki).
pub fn toy_blueprint(index: &TemplateIndex) -> synthelite_core::Blueprint {
    let stock = toy_stock();
    let llm = toy_gateway();
    let config = synthelite_core::PlannerConfig::default();
    let ctx = synthelite_core::PlannerContext {
        user_prompt: "Highly feasible synthesis with high overall yields",
        index,
        stock: &stock,
        llm: &llm,
        config: &config,
    };
    let a = synthelite_core::phase1::run_attempt(&mol(TOY_TARGET), &[], &ctx);
    assert!(a.solved, "toy ledger no longer solves the toy target");
    a.blueprint
}
