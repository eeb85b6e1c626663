use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use synthelite_chem::{canonicalize, Molecule, Stock};
use synthelite_core::benchmark::{load_manifest, report, CaseResult, EvalReport};
use synthelite_core::eval::{check_constraint, ConstraintChecker};
use synthelite_core::index::{describe_templates, embedder_by_name, load_templates, HASHED_EMBEDDER};
use synthelite_core::llm::{backend_from_spec, CallLedger};
use synthelite_core::pipeline::{routes_jsonl, search_attempts};
use synthelite_core::{
    build_index, run_pipeline, AttemptResult, Blueprint, Gateway, LlmBackend, PipelineConfig, PlannerContext,
    RouteCandidate, Route, TemplateIndex,
};
use synthelite_service::store::write_atomic;
use synthelite_service::{Engine, JobService, JobStore};

#[derive(Parser)]
#[command(name = "synthelite", version, about = "LLM-steered retrosynthesis planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or query the template index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the LLM planner and write one attempt record per attempt.
    Plan(PlanArgs),
    /// Search around a blueprint and write routes.jsonl.
    Search(SearchArgs),
    #[command(subcommand)]
    Benchmark(BenchmarkCommand),
    /// Check one route against a constraint checker.
    Validate {
        #[arg(long)]
        route: PathBuf,
        #[arg(long)]
        checker: PathBuf,
    },
    /// Start the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct LlmArg {
    /// `scripted:FILE`, `openai[:MODEL]` or `anthropic[:MODEL]`.
    #[arg(long, env = "SYNTHELITE_LLM")]
    llm: Option<String>,
}

impl LlmArg {
    fn backend(&self) -> Result<Arc<dyn LlmBackend>> {
        let spec = self.llm.as_deref().context("no LLM backend: pass --llm or set SYNTHELITE_LLM")?;
        Ok(backend_from_spec(spec)?)
    }
}

#[derive(Subcommand)]
enum IndexCommand {
    Build {
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = HASHED_EMBEDDER)]
        embedder: String,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[command(flatten)]
        llm: LlmArg,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    target: String,
    /// Constraint text, or `@FILE` to read it from a file.
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    stock: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 3)]
    attempts: usize,
    #[arg(long, default_value_t = 25)]
    max_steps: usize,
    #[command(flatten)]
    llm: LlmArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// An attempt record from `plan`, or a bare blueprint with `--target`.
    #[arg(long)]
    blueprint: PathBuf,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    stock: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 100.0)]
    c: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchmarkCommand {
    /// Plan and search every manifest case; writes per-case routes and report.json.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        stock: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Pipeline settings as JSON; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the report of a finished run at other cutoffs.
    Score {
        #[arg(long)]
        results: PathBuf,
        #[arg(short, value_delimiter = ',', default_value = "1,5,10,20,30")]
        k: Vec<usize>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "SYNTHELITE_STORE")]
    store: PathBuf,
    #[arg(long)]
    stock: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = synthelite_service::DEFAULT_WORKERS)]
    workers: usize,
    /// Transport retries per LLM call.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[command(flatten)]
    llm: LlmArg,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Index(IndexCommand::Build { templates, out, embedder, parallelism, llm }) => {
            index_build(&templates, &out, &embedder, parallelism, &llm)
        }
        Command::Index(IndexCommand::Query { index, text, k }) => {
            let index = load_index(&index)?;
            for hit in index.search(&text, k)? {
                let count = index.record(&hit.template_id).map_or(0, |r| r.count);
                println!("{}\t{:.6}\t{count}", hit.template_id, hit.similarity);
            }
            Ok(())
        }
        Command::Plan(args) => plan(args),
        Command::Search(args) => search(args),
        Command::Benchmark(BenchmarkCommand::Run { manifest, stock, index, config, llm, out }) => {
            benchmark_run(&manifest, &stock, &index, config.as_deref(), &llm, &out)
        }
        Command::Benchmark(BenchmarkCommand::Score { results, k }) => {
            let text = fs::read_to_string(results.join("cases.jsonl"))
                .with_context(|| format!("{}: not a benchmark run", results.display()))?;
            let cases = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<Vec<CaseResult>, _>>()?;
            println!("{}", summary(&report(cases, &k)?)?);
            Ok(())
        }
        Command::Validate { route, checker } => validate(&route, &checker),
        Command::Serve(args) => serve(args),
    }
}

fn load_index(dir: &Path) -> Result<TemplateIndex> {
    TemplateIndex::load(dir).with_context(|| format!("loading index {}", dir.display()))
}

fn load_stock(path: &Path) -> Result<Stock> {
    Stock::load(path).with_context(|| format!("loading stock {}", path.display()))
}

fn target(smiles: &str) -> Result<Molecule> {
    canonicalize(smiles).with_context(|| format!("target {smiles:?}"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn index_build(templates: &Path, out: &Path, embedder: &str, parallelism: usize, llm: &LlmArg) -> Result<()> {
    let records = load_templates(templates)?;
    let embedder = embedder_by_name(embedder).with_context(|| format!("unknown embedder {embedder}"))?;
    fs::create_dir_all(out)?;
    let gateway = Gateway::new(llm.backend()?).with_ledger(Arc::new(CallLedger::with_file(out.join("calls.jsonl"))));
    let described = describe_templates(&records, &gateway, parallelism)?;
    let dropped = described.iter().filter(|r| r.implausible).count();
    let index = build_index(&described, embedder)?;
    index.save(out)?;
    log::info!("indexed {} templates ({dropped} judged implausible) into {}", index.len(), out.display());
    Ok(())
}

fn plan(args: PlanArgs) -> Result<()> {
    let prompt = match args.prompt.as_deref() {
        Some(p) if p.starts_with('@') => fs::read_to_string(&p[1..]).with_context(|| format!("prompt file {}", &p[1..]))?,
        Some(p) => p.to_string(),
        None => synthelite_core::llm::prompt::neutral_prompt().to_string(),
    };
    let (index, stock, target) = (load_index(&args.index)?, load_stock(&args.stock)?, target(&args.target)?);
    let config = synthelite_core::PlannerConfig {
        attempts: args.attempts,
        max_steps: args.max_steps,
        ..Default::default()
    };
    config.validate().map_err(anyhow::Error::msg)?;
    fs::create_dir_all(&args.out)?;
    let llm = Gateway::new(args.llm.backend()?)
        .with_ledger(Arc::new(CallLedger::with_file(args.out.join("calls.jsonl"))));
    let ctx = PlannerContext { user_prompt: prompt.trim(), index: &index, stock: &stock, llm: &llm, config: &config };
    for a in synthelite_core::phase1::run_phase1(&target, &ctx) {
        write_json(&args.out.join(format!("attempt_{}.json", a.index)), &a)?;
        println!("attempt {}: {:?}, solved {}, {} steps", a.index, a.stop_reason, a.solved, a.blueprint.depth());
    }
    Ok(())
}

fn search(args: SearchArgs) -> Result<()> {
    let text = fs::read_to_string(&args.blueprint).with_context(|| format!("{}", args.blueprint.display()))?;
    let attempt = match serde_json::from_str::<AttemptResult>(&text) {
        Ok(a) => a,
        Err(_) => {
            let blueprint: Blueprint = serde_json::from_str(&text).context("neither an attempt record nor a blueprint")?;
            let Some(smiles) = &args.target else { bail!("a bare blueprint needs --target") };
            let target = target(smiles)?;
            let stock = load_stock(&args.stock)?;
            AttemptResult {
                index: 1,
                blueprint,
                final_state: synthelite_core::PlannerState::new(target, &stock),
                solved: false,
                stop_reason: synthelite_core::StopReason::StopSignal,
                feedback: None,
                detail: None,
                llm_calls: 0,
            }
        }
    };
    let target = match &args.target {
        Some(s) => target(s)?,
        None => attempt.final_state.target.clone(),
    };
    let params = synthelite_core::ScoringParams {
        iterations: args.iterations,
        alpha: args.alpha,
        c: args.c,
        ..Default::default()
    };
    params.validate().map_err(anyhow::Error::msg)?;
    let (index, stock) = (load_index(&args.index)?, load_stock(&args.stock)?);
    let (routes, stats) = search_attempts(&target, std::slice::from_ref(&attempt), &stock, &index, &params);
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("routes.jsonl"), routes_jsonl(&routes).as_bytes())?;
    let solved = routes.iter().filter(|r| r.solved).count();
    println!("{} routes ({solved} solved), {} index queries", routes.len(), stats[0].index_queries);
    Ok(())
}

fn benchmark_run(
    manifest: &Path,
    stock: &Path,
    index: &Path,
    config: Option<&Path>,
    llm: &LlmArg,
    out: &Path,
) -> Result<()> {
    let cases = load_manifest(manifest)?;
    let (index, stock, backend) = (load_index(index)?, load_stock(stock)?, llm.backend()?);
    let config: PipelineConfig = match config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    config.validate().map_err(anyhow::Error::msg)?;
    fs::create_dir_all(out)?;
    let mut results = Vec::new();
    for case in &cases {
        let dir = out.join(&case.entry.case_id);
        fs::create_dir_all(&dir)?;
        let llm = Gateway::new(backend.clone()).with_ledger(Arc::new(CallLedger::with_file(dir.join("calls.jsonl"))));
        let ctx = PlannerContext {
            user_prompt: &case.prompt,
            index: &index,
            stock: &stock,
            llm: &llm,
            config: &config.planner,
        };
        let result = run_pipeline(&case.target, &ctx, &config.scoring);
        for a in &result.attempts {
            write_json(&dir.join(format!("attempt_{}.json", a.index)), a)?;
        }
        write_atomic(&dir.join("routes.jsonl"), routes_jsonl(&result.routes).as_bytes())?;
        let scored = CaseResult::score(&case.entry.case_id, &result.routes, &case.check)?;
        log::info!(
            "{}: {} routes, {} passing",
            case.entry.case_id,
            scored.passes.len(),
            scored.passes.iter().filter(|p| **p).count()
        );
        results.push(scored);
    }
    let mut lines = String::new();
    for r in &results {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    write_atomic(&out.join("cases.jsonl"), lines.as_bytes())?;
    let rep = report(results, &[1, 5, 10, 20, 30])?;
    write_json(&out.join("report.json"), &rep)?;
    println!("{}", summary(&rep)?);
    Ok(())
}

/// The aggregate numbers without the per-route detail.
fn summary(rep: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "cases": rep.cases.len(),
        "recall_at_k": rep.recall_at_k,
        "precision": rep.precision,
        "precision_macro": rep.precision_macro,
        "solve_rate": rep.solve_rate,
    }))?)
}

fn validate(route: &Path, checker: &Path) -> Result<()> {
    let text = fs::read_to_string(route).with_context(|| format!("{}", route.display()))?;
    let text = text.trim();
    let route = match serde_json::from_str::<RouteCandidate>(text) {
        Ok(c) => c.route,
        Err(_) => Route::parse(text)?,
    };
    route.validate()?;
    let checker = ConstraintChecker::parse(&fs::read_to_string(checker)?)?;
    if check_constraint(&route, &checker)? {
        println!("pass");
        Ok(())
    } else {
        println!("fail");
        std::process::exit(1);
    }
}

fn serve(args: ServeArgs) -> Result<()> {
    let index = load_index(&args.index)?;
    let stock = load_stock(&args.stock)?;
    let engine = Engine::new(index, stock, args.llm.backend()?)
        .with_retry(args.retries, std::time::Duration::from_millis(500));
    let store = JobStore::open(&args.store)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        let svc = JobService::new(store, engine, args.workers);
        synthelite_service::serve(listener, svc).await?;
        Ok(())
    })
}
