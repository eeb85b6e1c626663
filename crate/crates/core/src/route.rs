//! Synthesis routes as alternating molecule/reaction trees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use synthelite_chem::{canonicalize, Molecule, RetroReaction, Stock};

use crate::error::RouteError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolNode {
    pub smiles: String,
    pub in_stock: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<RxnNode>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RxnNode {
    pub template_id: String,
    /// `product>>reactant.reactant`
    pub retro_smiles: String,
    #[serde(default)]
    pub site: Vec<u32>,
    /// The text query that led to this reaction, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub children: Vec<MolNode>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

fn schema(msg: impl Into<String>) -> RouteError {
    RouteError::Schema(msg.into())
}

impl MolNode {
    pub fn leaf(m: &Molecule, stock: &Stock) -> Self {
        MolNode { smiles: m.smiles().to_string(), in_stock: stock.contains(m), children: Vec::new(), extra: BTreeMap::new() }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

impl RxnNode {
    pub fn product(&self) -> &str {
        self.retro_smiles.split_once(">>").map_or(&self.retro_smiles, |(p, _)| p)
    }

    pub fn reaction(&self) -> Result<RetroReaction, RouteError> {
        Ok(RetroReaction::from_retro_smiles(&self.retro_smiles, &self.template_id, self.site.iter().copied().collect())?)
    }
}

/// A route rooted at the target molecule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route {
    pub root: MolNode,
}

impl Route {
    pub fn target_only(target: &Molecule, stock: &Stock) -> Self {
        Route { root: MolNode::leaf(target, stock) }
    }

    /// Replay retro-reactions from the target. Each reaction expands the
    /// first unexpanded leaf (pre-order) holding its product.
    pub fn from_reactions(
        target: &Molecule,
        reactions: &[RetroReaction],
        descriptions: &[Option<String>],
        stock: &Stock,
    ) -> Result<Self, RouteError> {
        let mut root = MolNode::leaf(target, stock);
        for (i, r) in reactions.iter().enumerate() {
            let slot = first_open_leaf(&mut root, r.product.smiles())
                .ok_or_else(|| schema(format!("no open leaf {} for reaction {}", r.product, i + 1)))?;
            slot.children.push(RxnNode {
                template_id: r.template_id.clone(),
                retro_smiles: r.retro_smiles(),
                site: r.site.iter().copied().collect(),
                description: descriptions.get(i).cloned().flatten(),
                children: r.reactants.iter().map(|m| MolNode::leaf(m, stock)).collect(),
                extra: BTreeMap::new(),
            });
        }
        Ok(Route { root })
    }

    pub fn parse(json: &str) -> Result<Self, RouteError> {
        let route: Route = serde_json::from_str(json).map_err(|e| schema(e.to_string()))?;
        route.validate()?;
        Ok(route)
    }

    pub fn from_value(v: Value) -> Result<Self, RouteError> {
        let route: Route = serde_json::from_value(v).map_err(|e| schema(e.to_string()))?;
        route.validate()?;
        Ok(route)
    }

    /// Each reaction's product equals its parent molecule and its children
    /// are exactly its reactants.
    pub fn validate(&self) -> Result<(), RouteError> {
        fn walk(m: &MolNode) -> Result<(), RouteError> {
            let parent = canonicalize(&m.smiles)?;
            if m.children.len() > 1 {
                return Err(schema(format!("molecule {} has {} reactions", m.smiles, m.children.len())));
            }
            for r in &m.children {
                let rxn = r.reaction()?;
                if rxn.product != parent {
                    return Err(schema(format!("reaction product {} differs from parent {}", rxn.product, parent)));
                }
                let mut kids = r.children.iter().map(|c| canonicalize(&c.smiles)).collect::<Result<Vec<_>, _>>()?;
                kids.sort();
                kids.dedup();
                if kids != rxn.reactants {
                    return Err(schema(format!("children of {} do not match its reactants", r.retro_smiles)));
                }
                for c in &r.children {
                    walk(c)?;
                }
            }
            Ok(())
        }
        walk(&self.root)
    }

    /// Reaction nodes with their depth (1 = the step that makes the target),
    /// in pre-order.
    pub fn reactions(&self) -> Vec<(usize, &RxnNode)> {
        fn walk<'a>(m: &'a MolNode, depth: usize, out: &mut Vec<(usize, &'a RxnNode)>) {
            for r in &m.children {
                out.push((depth, r));
                for c in &r.children {
                    walk(c, depth + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 1, &mut out);
        out
    }

    pub fn molecules(&self) -> Vec<&MolNode> {
        fn walk<'a>(m: &'a MolNode, out: &mut Vec<&'a MolNode>) {
            out.push(m);
            for r in &m.children {
                for c in &r.children {
                    walk(c, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn leaves(&self) -> Vec<&MolNode> {
        self.molecules().into_iter().filter(|m| m.is_leaf()).collect()
    }

    pub fn reaction_count(&self) -> usize {
        self.reactions().len()
    }

    /// Sorted `template_id|retro_smiles` keys; equal keys mean the same set
    /// of reactions regardless of tree order.
    pub fn reaction_multiset(&self) -> Vec<String> {
        let mut keys: Vec<String> =
            self.reactions().iter().map(|(_, r)| format!("{}|{}", r.template_id, r.retro_smiles)).collect();
        keys.sort();
        keys
    }

    /// JSON with object keys in sorted order.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("route serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        crate::llm::sha256_hex(self.to_canonical_json().as_bytes())
    }
}

fn first_open_leaf<'a>(m: &'a mut MolNode, smiles: &str) -> Option<&'a mut MolNode> {
    if m.children.is_empty() {
        return (m.smiles == smiles).then_some(m);
    }
    for r in &mut m.children {
        for c in &mut r.children {
            if let Some(hit) = first_open_leaf(c, smiles) {
                return Some(hit);
            }
        }
    }
    None
}

/// Every leaf is purchasable.
pub fn is_solved(route: &Route, stock: &Stock) -> bool {
    route.leaves().iter().all(|leaf| canonicalize(&leaf.smiles).is_ok_and(|m| stock.contains(&m)))
}

/// The building block appears anywhere in the route, leaf or intermediate.
pub fn contains_building_block(route: &Route, bb: &Molecule) -> bool {
    route.molecules().iter().any(|m| canonicalize(&m.smiles).is_ok_and(|c| &c == bb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stock() -> Stock {
        Stock::from_smiles(["CC(=O)O", "CN"]).unwrap()
    }

    fn amide_route() -> Route {
        let target = canonicalize("CNC(C)=O").unwrap();
        let r = RetroReaction::from_retro_smiles("CNC(C)=O>>CC(=O)O.CN", "t001", [2, 3].into()).unwrap();
        Route::from_reactions(&target, &[r], &[Some("amide".into())], &stock()).unwrap()
    }

    #[test]
    fn round_trip_keeps_unknown_fields() {
        let mut route = amide_route();
        route.root.extra.insert("score".into(), Value::from(0.5));
        let text = route.to_canonical_json();
        let back = Route::parse(&text).unwrap();
        assert_eq!(back, route);
        assert_eq!(back.to_canonical_json(), text);
    }

    #[test]
    fn product_mismatch_is_rejected() {
        let text = amide_route().to_canonical_json().replace("\"smiles\":\"CNC(C)=O\"", "\"smiles\":\"CCO\"");
        assert!(matches!(Route::parse(&text), Err(RouteError::Schema(_))));
    }

    #[test]
    fn alternation_is_enforced() {
        let bad = r#"{"smiles":"CCO","in_stock":false,"children":[{"smiles":"CC","in_stock":true}]}"#;
        assert!(matches!(Route::parse(bad), Err(RouteError::Schema(_))));
    }

    #[test]
    fn single_node_and_solvedness() {
        let s = stock();
        let lone = Route::target_only(&canonicalize("CN").unwrap(), &s);
        assert!(Route::parse(&lone.to_canonical_json()).is_ok());
        assert!(is_solved(&lone, &s));
        let route = amide_route();
        assert!(is_solved(&route, &s));
        assert!(!is_solved(&route, &Stock::from_smiles(["CN"]).unwrap()));
        assert_eq!(route.reactions()[0].0, 1);
    }

    #[test]
    fn building_block_anywhere() {
        let route = amide_route();
        assert!(contains_building_block(&route, &canonicalize("NC").unwrap()));
        assert!(contains_building_block(&route, &canonicalize("CC(=O)NC").unwrap()));
        assert!(!contains_building_block(&route, &canonicalize("CCO").unwrap()));
    }
}
