//! Semantic template search: one-sentence descriptions, text embeddings,
//! cosine retrieval and the popularity prior.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use synthelite_chem::RetroTemplate;

use crate::error::{IndexError, LlmError};
use crate::llm::prompt::asset;
use crate::llm::{extract_tag, render, Gateway, Message};

/// The fixed sentence a describer emits for templates it rejects.
pub const IMPLAUSIBLE: &str = "This reaction template represents a chemically implausible transformation.";

#[derive(Clone, Debug)]
pub struct TemplateRecord {
    pub template: RetroTemplate,
    pub count: u64,
    pub description: String,
    pub implausible: bool,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    smarts: String,
    #[serde(default)]
    count: u64,
    #[serde(default)]
    description: String,
    #[serde(default)]
    implausible: bool,
}

impl TemplateRecord {
    pub fn new(template: RetroTemplate, count: u64) -> Self {
        TemplateRecord { template, count, description: String::new(), implausible: false }
    }

    pub fn id(&self) -> &str {
        &self.template.id
    }

    /// The template written forward, reactants on the left.
    pub fn forward_smarts(&self) -> String {
        match self.template.smarts.split_once(">>") {
            Some((product, reactants)) => format!("{reactants}>>{product}"),
            None => self.template.smarts.clone(),
        }
    }

    fn line(&self) -> RecordLine {
        RecordLine {
            id: self.id().to_string(),
            smarts: self.template.smarts.clone(),
            count: self.count,
            description: self.description.clone(),
            implausible: self.implausible,
        }
    }

    fn from_line(l: RecordLine, line: usize) -> Result<Self, IndexError> {
        let template = RetroTemplate::parse(l.id, l.smarts).map_err(|e| IndexError::Record { line, msg: e.to_string() })?;
        Ok(TemplateRecord { template, count: l.count, description: l.description, implausible: l.implausible })
    }
}

/// Load templates from JSONL (`id, smarts, count[, description]`) or from
/// tab-separated `id smarts count [description]` lines.
pub fn load_templates(path: &Path) -> Result<Vec<TemplateRecord>, IndexError> {
    parse_templates(&fs::read_to_string(path)?)
}

pub fn parse_templates(text: &str) -> Result<Vec<TemplateRecord>, IndexError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = if line.starts_with('{') {
            serde_json::from_str::<RecordLine>(line).map_err(|e| IndexError::Record { line: i + 1, msg: e.to_string() })?
        } else {
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() < 3 {
                return Err(IndexError::Record { line: i + 1, msg: "expected id, smarts and count columns".into() });
            }
            let count = cols[2].trim().parse().map_err(|_| IndexError::Record { line: i + 1, msg: format!("bad count {:?}", cols[2]) })?;
            RecordLine {
                id: cols[0].trim().into(),
                smarts: cols[1].trim().into(),
                count,
                description: cols.get(3).map(|s| s.trim().to_string()).unwrap_or_default(),
                implausible: false,
            }
        };
        let mut rec = TemplateRecord::from_line(rec, i + 1)?;
        rec.implausible = rec.implausible || rec.description == IMPLAUSIBLE;
        out.push(rec);
    }
    Ok(out)
}

/// The description prompt for one template: (system, user).
pub fn describe_messages(rec: &TemplateRecord) -> Vec<Message> {
    let vars = BTreeMap::from([("SMARTS_REACTION", rec.forward_smarts())]);
    let input = render(&asset("describe_input"), &vars).expect("describe_input has one slot");
    let user = [input, asset("describe_instruction").body, asset("describe_examples").body].join("\n");
    vec![Message::system(asset("describe_role").body), Message::user(user)]
}

fn clean_description(text: &str) -> String {
    let t = text.trim();
    let t = t.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(t);
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Describe one record: up to two re-asks on a missing tag, after which the
/// template is marked implausible.
fn describe_one(rec: &TemplateRecord, llm: &Gateway) -> Result<TemplateRecord, LlmError> {
    let messages = describe_messages(rec);
    let mut out = rec.clone();
    for _ in 0..3 {
        let reply = llm.complete(&messages)?;
        if let Ok(text) = extract_tag(&reply, "description") {
            let d = clean_description(&text);
            if !d.is_empty() {
                out.implausible = d == IMPLAUSIBLE;
                out.description = d;
                return Ok(out);
            }
        }
    }
    log::warn!("no description for template {}; marking implausible", rec.id());
    out.description = IMPLAUSIBLE.to_string();
    out.implausible = true;
    Ok(out)
}

/// Describe every record, fanning out over `parallelism` threads. Output
/// order equals input order.
pub fn describe_templates(
    records: &[TemplateRecord],
    llm: &Gateway,
    parallelism: usize,
) -> Result<Vec<TemplateRecord>, LlmError> {
    let chunk = records.len().div_ceil(parallelism.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|r| describe_one(r, llm)).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut out = Vec::with_capacity(records.len());
        for h in handles {
            out.extend(h.join().expect("describe worker panicked")?);
        }
        Ok(out)
    })
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f32>, IndexError>;
}

/// Offline fallback: lower-cased alphanumeric tokens hashed (64-bit FNV-1a)
/// into `dim` buckets, counted, then L2-normalized.
#[derive(Clone, Debug)]
pub struct HashedEmbedder {
    dim: usize,
    id: String,
}

pub const HASHED_EMBEDDER: &str = "hashed-bow-512";

impl HashedEmbedder {
    pub fn new(dim: usize) -> Self {
        HashedEmbedder { dim, id: format!("hashed-bow-{dim}") }
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(512)
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl Embedder for HashedEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, IndexError> {
        let mut v = vec![0f64; self.dim];
        let mut any = false;
        for t in tokens(text) {
            v[(fnv1a(t.as_bytes()) % self.dim as u64) as usize] += 1.0;
            any = true;
        }
        if !any {
            return Err(IndexError::EmptyText);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(v.into_iter().map(|x| (x / norm) as f32).collect())
    }
}

/// Embedder by name, as stored in `meta.json`.
pub fn embedder_by_name(name: &str) -> Option<Box<dyn Embedder>> {
    let dim = name.strip_prefix("hashed-bow-")?.parse().ok()?;
    (dim > 0).then(|| Box::new(HashedEmbedder::new(dim)) as Box<dyn Embedder>)
}

pub fn embed_text(embedder: &dyn Embedder, text: &str) -> Result<Vec<f32>, IndexError> {
    if text.trim().is_empty() {
        return Err(IndexError::EmptyText);
    }
    embedder.embed(text)
}

pub fn popularity_prior(count: u64, c: f64) -> f64 {
    count as f64 / (count as f64 + c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub template_id: String,
    pub similarity: f64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    embedder_id: String,
    dim: usize,
    count: usize,
}

/// Plausible templates with one embedding row each. Immutable once built;
/// the query counter is the only interior state.
pub struct TemplateIndex {
    records: Vec<TemplateRecord>,
    vectors: Vec<Vec<f32>>,
    norms: Vec<f64>,
    by_id: HashMap<String, usize>,
    embedder: Box<dyn Embedder>,
    queries: AtomicUsize,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

impl TemplateIndex {
    fn assemble(records: Vec<TemplateRecord>, vectors: Vec<Vec<f32>>, embedder: Box<dyn Embedder>) -> Self {
        let norms = vectors.iter().map(|v| norm(v)).collect();
        let by_id = records.iter().enumerate().map(|(i, r)| (r.id().to_string(), i)).collect();
        TemplateIndex { records, vectors, norms, by_id, embedder, queries: AtomicUsize::new(0) }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn embedder_id(&self) -> &str {
        self.embedder.id()
    }

    pub fn records(&self) -> &[TemplateRecord] {
        &self.records
    }

    pub fn record(&self, id: &str) -> Option<&TemplateRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    /// Number of `search` calls made so far.
    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::SeqCst)
    }

    /// At most `k` hits by cosine similarity; ties go to the higher count,
    /// then the smaller id.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        if self.records.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let q = embed_text(self.embedder.as_ref(), query)?;
        let qn = norm(&q);
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let denom = qn * self.norms[i];
                let dot: f64 = q.iter().zip(v).map(|(&x, &y)| x as f64 * y as f64).sum();
                let sim = if denom == 0.0 { 0.0 } else { (dot / denom).clamp(-1.0, 1.0) };
                (sim, i)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(self.records[b.1].count.cmp(&self.records[a.1].count))
                .then(self.records[a.1].id().cmp(self.records[b.1].id()))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(similarity, i)| SearchHit { template_id: self.records[i].id().to_string(), similarity })
            .collect())
    }

    /// The `n` most frequent templates, ties by id.
    pub fn most_frequent(&self, n: usize) -> Vec<&TemplateRecord> {
        let mut all: Vec<&TemplateRecord> = self.records.iter().collect();
        all.sort_by(|a, b| b.count.cmp(&a.count).then(a.id().cmp(b.id())));
        all.truncate(n);
        all
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        fs::create_dir_all(dir)?;
        let mut records = String::new();
        for r in &self.records {
            records.push_str(&serde_json::to_string(&r.line()).expect("record serializes"));
            records.push('\n');
        }
        write_atomic(&dir.join("records.jsonl"), records.as_bytes())?;
        let dim = self.vectors.first().map_or(0, Vec::len);
        let mut bin = Vec::with_capacity(8 + 4 * dim * self.vectors.len());
        bin.extend_from_slice(&(dim as u32).to_le_bytes());
        bin.extend_from_slice(&(self.vectors.len() as u32).to_le_bytes());
        for v in &self.vectors {
            for x in v {
                bin.extend_from_slice(&x.to_le_bytes());
            }
        }
        write_atomic(&dir.join("vectors.bin"), &bin)?;
        let meta = Meta { embedder_id: self.embedder.id().to_string(), dim, count: self.records.len() };
        write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&meta).expect("meta").as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let corrupt = |file: &str, msg: String| IndexError::Corrupt { path: dir.join(file).display().to_string(), msg };
        let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
            .map_err(|e| corrupt("meta.json", e.to_string()))?;
        let embedder = embedder_by_name(&meta.embedder_id)
            .ok_or_else(|| corrupt("meta.json", format!("unknown embedder {}", meta.embedder_id)))?;
        let records = parse_templates(&fs::read_to_string(dir.join("records.jsonl"))?)?;
        let bin = fs::read(dir.join("vectors.bin"))?;
        if bin.len() < 8 {
            return Err(corrupt("vectors.bin", "truncated header".into()));
        }
        let dim = u32::from_le_bytes(bin[0..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bin[4..8].try_into().unwrap()) as usize;
        if bin.len() != 8 + 4 * dim * n || n != records.len() || (n > 0 && dim != meta.dim) {
            return Err(corrupt("vectors.bin", format!("expected {n} rows of {dim} floats for {} records", records.len())));
        }
        let vectors = bin[8..]
            .chunks_exact(4 * dim.max(1))
            .take(n)
            .map(|row| row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
            .collect();
        Ok(Self::assemble(records, vectors, embedder))
    }
}

/// Embed the plausible records. Records without a description are an error.
pub fn build_index(records: &[TemplateRecord], embedder: Box<dyn Embedder>) -> Result<TemplateIndex, IndexError> {
    let mut kept = Vec::new();
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.implausible {
            continue;
        }
        if r.description.trim().is_empty() {
            return Err(IndexError::Record { line: i + 1, msg: format!("template {} has no description", r.id()) });
        }
        let v = embed_text(embedder.as_ref(), &r.description)?;
        if let Some(first) = vectors.first() {
            if first.len() != v.len() {
                return Err(IndexError::DimensionMismatch { expected: first.len(), got: v.len() });
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::Record { line: i + 1, msg: "non-finite embedding".into() });
        }
        vectors.push(v);
        kept.push(r.clone());
    }
    Ok(TemplateIndex::assemble(kept, vectors, embedder))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
