//! Blueprint-guided Monte Carlo tree search over retro-reactions.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use synthelite_chem::{apply_template, site_matches, Molecule, RetroReaction, Stock};

use crate::index::{popularity_prior, SearchHit, TemplateIndex};
use crate::phase1::{Blueprint, FrontierEntry};
use crate::route::Route;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    pub alpha: f64,
    pub c: f64,
    pub iterations: usize,
    pub exploration_c: f64,
    /// Extra depth allowed beyond the blueprint.
    pub depth_slack: usize,
    /// Templates retrieved per blueprint depth.
    pub top_k: usize,
    /// Most frequent templates tried beyond the blueprint depth.
    pub fallback_templates: usize,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            alpha: 0.5,
            c: 100.0,
            iterations: 300,
            exploration_c: 1.4,
            depth_slack: 5,
            top_k: 50,
            fallback_templates: 20,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(format!("c must be positive, got {}", self.c));
        }
        if self.iterations == 0 || self.top_k == 0 {
            return Err("iterations and top_k must be positive".into());
        }
        if !(self.exploration_c >= 0.0 && self.exploration_c.is_finite()) {
            return Err("exploration_c must be non-negative".into());
        }
        Ok(())
    }
}

/// `alpha * sim + (1 - alpha) * count / (count + c)`
pub fn action_logit(sim: f64, count: u64, params: &ScoringParams) -> f64 {
    params.alpha * sim + (1.0 - params.alpha) * popularity_prior(count, params.c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredAction {
    pub reaction: RetroReaction,
    pub logit: f64,
    pub prior: f64,
}

/// Softmax of the logits, written into `prior`.
pub fn assign_priors(actions: &mut [ScoredAction]) {
    let Some(max) = actions.iter().map(|a| a.logit).reduce(f64::max) else { return };
    let exps: Vec<f64> = actions.iter().map(|a| (a.logit - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    for (a, e) in actions.iter_mut().zip(exps) {
        a.prior = e / total;
    }
}

/// Per-depth retrieval cache and per-(molecule, depth) action cache. The
/// index is queried at most once per blueprint depth.
pub struct ActionCache<'a> {
    index: &'a TemplateIndex,
    blueprint: &'a Blueprint,
    params: &'a ScoringParams,
    hits: HashMap<usize, Vec<SearchHit>>,
    actions: HashMap<(Molecule, usize), Vec<ScoredAction>>,
    queries: usize,
}

impl<'a> ActionCache<'a> {
    pub fn new(index: &'a TemplateIndex, blueprint: &'a Blueprint, params: &'a ScoringParams) -> Self {
        ActionCache { index, blueprint, params, hits: HashMap::new(), actions: HashMap::new(), queries: 0 }
    }

    /// Index queries issued through this cache.
    pub fn queries(&self) -> usize {
        self.queries
    }

    fn hits(&mut self, depth: usize) -> &[SearchHit] {
        if !self.hits.contains_key(&depth) {
            let q = &self.blueprint.step(depth).expect("depth within blueprint").query;
            self.queries += 1;
            let found = self.index.search(q, self.params.top_k).unwrap_or_else(|e| {
                log::warn!("template search failed at depth {depth}: {e}");
                Vec::new()
            });
            self.hits.insert(depth, found);
        }
        &self.hits[&depth]
    }

    /// Scored actions on `mol` at reaction depth `depth` (1-based). Within
    /// the blueprint, actions come from the depth's query; when `mol` is the
    /// reference product, only the reference site is allowed. Beyond the
    /// blueprint, the most frequent templates are used with the popularity
    /// term alone. Priors are left at zero; they are set per node.
    pub fn candidate_actions(&mut self, mol: &Molecule, depth: usize) -> Vec<ScoredAction> {
        let key = (mol.clone(), depth);
        if let Some(a) = self.actions.get(&key) {
            return a.clone();
        }
        let params = self.params;
        let mut out = Vec::new();
        if let Some(step) = self.blueprint.step(depth) {
            let reference = &step.ref_reaction;
            let hits = self.hits(depth).to_vec();
            for hit in hits {
                let Some(rec) = self.index.record(&hit.template_id) else { continue };
                for r in apply_template(&rec.template, mol) {
                    if *mol == reference.product && !site_matches(&r, &reference.site) {
                        continue;
                    }
                    let logit = action_logit(hit.similarity, rec.count, params);
                    out.push(ScoredAction { reaction: r, logit, prior: 0.0 });
                }
            }
        } else {
            for rec in self.index.most_frequent(params.fallback_templates) {
                for r in apply_template(&rec.template, mol) {
                    let logit = (1.0 - params.alpha) * popularity_prior(rec.count, params.c);
                    out.push(ScoredAction { reaction: r, logit, prior: 0.0 });
                }
            }
        }
        out.sort_by(|a, b| b.logit.total_cmp(&a.logit).then_with(|| a.reaction.cmp(&b.reaction)));
        out.dedup_by(|a, b| a.reaction == b.reaction);
        self.actions.insert(key, out.clone());
        out
    }

    /// The molecules expanded at `depth`: the reference product if it is on
    /// the frontier, otherwise every unpurchasable frontier molecule.
    fn expandable(&self, frontier: &[FrontierEntry], depth: usize) -> Vec<Molecule> {
        if let Some(step) = self.blueprint.step(depth) {
            if frontier.iter().any(|e| e.molecule == step.ref_reaction.product) {
                return vec![step.ref_reaction.product.clone()];
            }
        }
        let mut seen = BTreeSet::new();
        frontier.iter().filter(|e| !e.in_stock && seen.insert(e.molecule.clone())).map(|e| e.molecule.clone()).collect()
    }

    /// All actions of a search node, with softmax priors.
    pub fn node_actions(&mut self, frontier: &[FrontierEntry], depth: usize) -> Vec<ScoredAction> {
        let mut all = Vec::new();
        for mol in self.expandable(frontier, depth) {
            all.extend(self.candidate_actions(&mol, depth));
        }
        assign_priors(&mut all);
        all
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteCandidate {
    pub route: Route,
    pub alignment: f64,
    pub attempt_index: usize,
    pub solved: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub iterations: usize,
    pub index_queries: usize,
    pub nodes: usize,
    pub max_depth: usize,
}

struct Node {
    frontier: Vec<FrontierEntry>,
    path: Vec<RetroReaction>,
    visits: u32,
    value_sum: f64,
    value: f64,
    terminal: bool,
    exhausted: bool,
    actions: Option<Vec<ScoredAction>>,
    children: Vec<Option<usize>>,
}

fn frontier_value(frontier: &[FrontierEntry]) -> f64 {
    if frontier.is_empty() {
        return 1.0;
    }
    frontier.iter().filter(|e| e.in_stock).count() as f64 / frontier.len() as f64
}

fn expand_frontier(frontier: &[FrontierEntry], r: &RetroReaction, stock: &Stock) -> Vec<FrontierEntry> {
    let mut out = frontier.to_vec();
    if let Some(at) = out.iter().position(|e| e.molecule == r.product) {
        out.remove(at);
    }
    out.extend(r.reactants.iter().map(|m| FrontierEntry { molecule: m.clone(), in_stock: stock.contains(m) }));
    out
}

struct Tree<'a> {
    nodes: Vec<Node>,
    stock: &'a Stock,
    max_depth: usize,
}

impl Tree<'_> {
    fn add(&mut self, frontier: Vec<FrontierEntry>, path: Vec<RetroReaction>) -> usize {
        let value = frontier_value(&frontier);
        let solved = frontier.iter().all(|e| e.in_stock);
        let terminal = solved || path.len() >= self.max_depth;
        self.nodes.push(Node {
            frontier,
            path,
            visits: 0,
            value_sum: 0.0,
            value,
            terminal,
            exhausted: terminal,
            actions: None,
            children: Vec::new(),
        });
        self.nodes.len() - 1
    }

    fn select(&self, id: usize, c: f64) -> Option<usize> {
        let node = &self.nodes[id];
        let actions = node.actions.as_ref()?;
        let sqrt_n = (node.visits.max(1) as f64).sqrt();
        let mut best: Option<(f64, usize)> = None;
        for (i, a) in actions.iter().enumerate() {
            let (q, n) = match node.children[i] {
                Some(ch) if self.nodes[ch].exhausted => continue,
                // Unvisited children are valued by their own frontier.
                Some(ch) if self.nodes[ch].visits == 0 => (self.nodes[ch].value, 0),
                Some(ch) => {
                    let c = &self.nodes[ch];
                    (c.value_sum / c.visits as f64, c.visits)
                }
                None => (0.0, 0),
            };
            let score = q + c * a.prior * sqrt_n / (1.0 + n as f64);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, i));
            }
        }
        best.map(|(_, i)| i)
    }

    fn refresh_exhausted(&mut self, id: usize) {
        let node = &self.nodes[id];
        if node.terminal {
            return;
        }
        let done = node.actions.is_some()
            && node.children.iter().all(|c| c.is_some_and(|ch| self.nodes[ch].exhausted));
        self.nodes[id].exhausted = done;
    }
}

/// Run the search for one blueprint. Returns every distinct solved route
/// found, or the best unsolved one when nothing was solved.
pub fn run_search(
    blueprint: &Blueprint,
    target: &Molecule,
    stock: &Stock,
    index: &TemplateIndex,
    params: &ScoringParams,
    attempt_index: usize,
) -> (Vec<RouteCandidate>, SearchStats) {
    let mut cache = ActionCache::new(index, blueprint, params);
    let mut tree = Tree { nodes: Vec::new(), stock, max_depth: blueprint.depth() + params.depth_slack };
    let root_frontier = vec![FrontierEntry { molecule: target.clone(), in_stock: stock.contains(target) }];
    tree.add(root_frontier, Vec::new());

    let mut solved: Vec<usize> = Vec::new();
    let mut seen = BTreeSet::new();
    if tree.nodes[0].terminal && tree.nodes[0].value == 1.0 {
        solved.push(0);
        seen.insert(Vec::<String>::new());
    }
    let mut stats = SearchStats::default();
    for _ in 0..params.iterations {
        if tree.nodes[0].exhausted && stats.iterations > 0 {
            break;
        }
        stats.iterations += 1;
        let mut path = vec![0];
        let mut id = 0;
        loop {
            if tree.nodes[id].terminal {
                break;
            }
            if tree.nodes[id].actions.is_none() {
                // Expansion creates every child at once; solved ones are
                // recorded immediately.
                let node = &tree.nodes[id];
                let acts = cache.node_actions(&node.frontier, node.path.len() + 1);
                let children: Vec<(Vec<FrontierEntry>, Vec<RetroReaction>)> = acts
                    .iter()
                    .map(|a| {
                        let mut p = node.path.clone();
                        p.push(a.reaction.clone());
                        (expand_frontier(&node.frontier, &a.reaction, tree.stock), p)
                    })
                    .collect();
                let mut ids = Vec::with_capacity(children.len());
                for (frontier, p) in children {
                    let ch = tree.add(frontier, p);
                    let child = &tree.nodes[ch];
                    stats.max_depth = stats.max_depth.max(child.path.len());
                    if child.value == 1.0 && child.terminal {
                        let mut key: Vec<String> =
                            child.path.iter().map(|r| format!("{}|{}", r.template_id, r.retro_smiles())).collect();
                        key.sort();
                        if seen.insert(key) {
                            solved.push(ch);
                        }
                    }
                    ids.push(Some(ch));
                }
                let node = &mut tree.nodes[id];
                if acts.is_empty() {
                    node.terminal = true;
                    node.exhausted = true;
                }
                node.children = ids;
                node.actions = Some(acts);
                break;
            }
            let Some(i) = tree.select(id, params.exploration_c) else { break };
            id = tree.nodes[id].children[i].expect("children are created on expansion");
            path.push(id);
        }
        let leaf = *path.last().unwrap();
        let value = tree.nodes[leaf].value;
        for &n in path.iter().rev() {
            let node = &mut tree.nodes[n];
            node.visits += 1;
            node.value_sum += value;
            tree.refresh_exhausted(n);
        }
    }
    stats.index_queries = cache.queries();
    stats.nodes = tree.nodes.len();

    let picks = if solved.is_empty() {
        // Highest value, then fewer reactions, then discovery order.
        let best = (0..tree.nodes.len())
            .max_by(|&a, &b| {
                let (na, nb) = (&tree.nodes[a], &tree.nodes[b]);
                na.value.total_cmp(&nb.value).then(nb.path.len().cmp(&na.path.len())).then(b.cmp(&a))
            })
            .unwrap();
        vec![best]
    } else {
        solved
    };
    let descriptions: Vec<Option<String>> = blueprint.steps.iter().map(|s| Some(s.query.clone())).collect();
    let candidates = picks
        .into_iter()
        .map(|n| {
            let node = &tree.nodes[n];
            let route = Route::from_reactions(target, &node.path, &descriptions, stock).expect("search paths replay");
            RouteCandidate {
                alignment: alignment_score(&route, blueprint),
                solved: node.frontier.iter().all(|e| e.in_stock),
                route,
                attempt_index,
            }
        })
        .collect();
    (candidates, stats)
}

/// Share of blueprint reactions present in the route, matched by template
/// and product.
pub fn alignment_score(route: &Route, blueprint: &Blueprint) -> f64 {
    if blueprint.steps.is_empty() {
        return 0.0;
    }
    let present: BTreeSet<(String, String)> = route
        .reactions()
        .iter()
        .filter_map(|(_, r)| {
            let product = synthelite_chem::canonicalize(r.product()).ok()?;
            Some((r.template_id.clone(), product.smiles().to_string()))
        })
        .collect();
    let hits = blueprint
        .steps
        .iter()
        .filter(|s| present.contains(&(s.ref_reaction.template_id.clone(), s.ref_reaction.product.smiles().to_string())))
        .count();
    hits as f64 / blueprint.steps.len() as f64
}

/// Solved first, then alignment weighted by attempt recency, then shorter
/// routes, then route hash. Routes with the same reactions keep only their
/// best-ranked copy.
pub fn rank_routes(candidates: Vec<RouteCandidate>, total_attempts: usize) -> Vec<RouteCandidate> {
    let a = total_attempts.max(1) as f64;
    let mut keyed: Vec<(f64, String, RouteCandidate)> = candidates
        .into_iter()
        .map(|c| (c.alignment * c.attempt_index as f64 / a, c.route.hash(), c))
        .collect();
    keyed.sort_by(|x, y| {
        y.2.solved
            .cmp(&x.2.solved)
            .then(y.0.total_cmp(&x.0))
            .then(x.2.route.reaction_count().cmp(&y.2.route.reaction_count()))
            .then(x.1.cmp(&y.1))
    });
    let mut seen = BTreeSet::new();
    keyed.into_iter().filter(|(_, _, c)| seen.insert(c.route.reaction_multiset())).map(|(_, _, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_formula() {
        let p = ScoringParams::default();
        assert!((action_logit(1.0, 100, &p) - 0.75).abs() < 1e-12);
        assert_eq!(action_logit(0.0, 0, &p), 0.0);
        let greedy = ScoringParams { alpha: 1.0, ..p };
        assert_eq!(action_logit(0.3, 5000, &greedy), 0.3);
    }

    #[test]
    fn priors_sum_to_one() {
        let r = RetroReaction::from_retro_smiles("CCO>>CC.O", "x", BTreeSet::new()).unwrap();
        let mut acts: Vec<ScoredAction> =
            [0.1, 0.5, 0.9].iter().map(|&z| ScoredAction { reaction: r.clone(), logit: z, prior: 0.0 }).collect();
        assign_priors(&mut acts);
        assert!((acts.iter().map(|a| a.prior).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(acts[2].prior > acts[0].prior && acts.iter().all(|a| a.prior > 0.0 && a.prior <= 1.0));
    }
}
