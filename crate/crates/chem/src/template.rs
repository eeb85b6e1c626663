//! Retro templates: `product_pattern>>reactant_patterns`, applied to a
//! product molecule to enumerate precursor sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ChemError, Result};
use crate::mol::{Atom, BondOrder, Chirality, Mol};
use crate::molecule::{map_atoms, Molecule};
use crate::smarts::{find_matches, has_match, MolInfo, Pattern};
use crate::smiles::{check_valence, kekulize, perceive_aromaticity};

/// Distinct match sites kept per (template, molecule).
pub const MAX_SITES: usize = 50;
/// Embeddings enumerated before giving up on further sites.
const MAX_EMBEDDINGS: usize = 1000;

#[derive(Clone)]
pub struct RetroTemplate {
    pub id: String,
    pub smarts: String,
    product: Pattern,
    reactants: Pattern,
    /// Reactant-side atom index for each map number on the product side.
    reactant_of_map: HashMap<u32, usize>,
    /// Product-side query atoms whose bonding changes.
    changed: Vec<usize>,
}

impl fmt::Debug for RetroTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RetroTemplate({}: {})", self.id, self.smarts)
    }
}

fn terr(msg: impl Into<String>) -> ChemError {
    ChemError::Template(msg.into())
}

fn side_maps(p: &Pattern, side: &str) -> Result<HashMap<u32, usize>> {
    let mut out = HashMap::new();
    for (i, a) in p.atoms.iter().enumerate() {
        if a.map != 0 && out.insert(a.map, i).is_some() {
            return Err(terr(format!("map {} repeated on the {side} side", a.map)));
        }
    }
    Ok(out)
}

/// (neighbour map, pinned bond order) pairs; `None` in the result means the
/// atom has a bond to an unmapped atom, which is always a change.
fn mapped_neighbours(p: &Pattern, atom: usize) -> Option<BTreeMap<u32, Option<BondOrder>>> {
    let mut out = BTreeMap::new();
    for &(n, bi) in &p.adj[atom] {
        let m = p.atoms[n].map;
        if m == 0 {
            return None;
        }
        out.insert(m, p.bonds[bi].order());
    }
    Some(out)
}

impl RetroTemplate {
    pub fn parse(id: impl Into<String>, smarts: impl Into<String>) -> Result<Self> {
        let smarts = smarts.into();
        let (lhs, rhs) = smarts
            .split_once(">>")
            .ok_or_else(|| terr(format!("missing '>>' in {smarts}")))?;
        if rhs.contains('>') {
            return Err(terr("more than one '>>'"));
        }
        let wrap = |e: ChemError| terr(e.to_string());
        let product = Pattern::parse(lhs).map_err(wrap)?;
        if product.components.len() != 1 {
            return Err(terr("product side must be a single pattern"));
        }
        let reactants = Pattern::parse(rhs).map_err(wrap)?;
        let prod_maps = side_maps(&product, "product")?;
        let react_maps = side_maps(&reactants, "reactant")?;
        let reactant_of_map: HashMap<u32, usize> = prod_maps
            .keys()
            .filter_map(|m| react_maps.get(m).map(|&r| (*m, r)))
            .collect();
        let mut changed = Vec::new();
        for (q, atom) in product.atoms.iter().enumerate() {
            if atom.map == 0 {
                continue;
            }
            let Some(&r) = reactant_of_map.get(&atom.map) else {
                changed.push(q);
                continue;
            };
            let before = mapped_neighbours(&product, q);
            let after = mapped_neighbours(&reactants, r);
            let same = match (before, after) {
                (Some(b), Some(a)) => {
                    b.len() == a.len()
                        && b.iter().all(|(m, ob)| match a.get(m) {
                            None => false,
                            Some(oa) => ob.is_none() || oa.is_none() || ob == oa,
                        })
                }
                _ => false,
            };
            if !same {
                changed.push(q);
            }
        }
        Ok(RetroTemplate {
            id: id.into(),
            smarts,
            product,
            reactants,
            reactant_of_map,
            changed,
        })
    }

    /// Whether the product-side pattern occurs in `m`.
    pub fn product_matches(&self, m: &Molecule) -> bool {
        has_match(&self.product, m.graph(), &MolInfo::new(m.graph()))
    }
}

/// One retro-disconnection of `product` into `reactants`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RetroReaction {
    pub product: Molecule,
    /// Sorted, without duplicates.
    pub reactants: Vec<Molecule>,
    pub template_id: String,
    /// Atom-map numbers (see [`map_atoms`]) of product atoms whose bonding
    /// changes.
    pub site: BTreeSet<u32>,
}

impl RetroReaction {
    /// `product>>reactant.reactant`.
    pub fn retro_smiles(&self) -> String {
        let reactants: Vec<&str> = self.reactants.iter().map(Molecule::smiles).collect();
        format!("{}>>{}", self.product.smiles(), reactants.join("."))
    }

    /// Rebuild from a `product>>reactants` string; reactants are re-sorted.
    pub fn from_retro_smiles(retro: &str, template_id: &str, site: BTreeSet<u32>) -> Result<Self> {
        let (p, r) = retro
            .split_once(">>")
            .ok_or_else(|| terr(format!("missing '>>' in {retro}")))?;
        let product = crate::canonicalize(p)?;
        let mut reactants = Vec::new();
        for part in r.split('.').filter(|s| !s.is_empty()) {
            reactants.push(crate::canonicalize(part)?);
        }
        reactants.sort();
        reactants.dedup();
        Ok(RetroReaction {
            product,
            reactants,
            template_id: template_id.to_string(),
            site,
        })
    }
}

/// True when either site set contains the other.
pub fn site_matches(r: &RetroReaction, requested: &BTreeSet<u32>) -> bool {
    requested.is_subset(&r.site) || r.site.is_subset(requested)
}

/// Apply a retro template at every match site of `m`. Sites whose outcome is
/// not a valid structure are skipped. Results are sorted by site, then by
/// reactant SMILES, and capped at [`MAX_SITES`].
pub fn apply_template(t: &RetroTemplate, m: &Molecule) -> Vec<RetroReaction> {
    let mol = m.graph();
    let info = MolInfo::new(mol);
    let embeddings = find_matches(&t.product, mol, &info, MAX_EMBEDDINGS);
    if embeddings.is_empty() {
        return Vec::new();
    }
    let map_of = map_atoms(m).map_of();
    let mut found: BTreeMap<(Vec<u32>, Vec<Molecule>), RetroReaction> = BTreeMap::new();
    for assign in embeddings {
        let Some(reactants) = run_once(t, mol, &assign) else {
            continue;
        };
        if reactants.is_empty() || reactants.contains(m) {
            continue;
        }
        let mut site: BTreeSet<u32> = t.changed.iter().map(|&q| map_of[assign[q]]).collect();
        if site.is_empty() {
            // No bond changes (e.g. a pure charge or hydrogen edit): the
            // whole mapped match is the site.
            site = t
                .product
                .atoms
                .iter()
                .enumerate()
                .filter(|(_, a)| a.map != 0)
                .map(|(q, _)| map_of[assign[q]])
                .collect();
        }
        let key = (site.iter().copied().collect::<Vec<_>>(), reactants.clone());
        found.entry(key).or_insert_with(|| RetroReaction {
            product: m.clone(),
            reactants,
            template_id: t.id.clone(),
            site,
        });
    }
    found.into_values().take(MAX_SITES).collect()
}

/// Build the precursor graph for one embedding and split it into molecules.
fn run_once(t: &RetroTemplate, mol: &Mol, assign: &[usize]) -> Option<Vec<Molecule>> {
    let n = mol.atoms.len();
    let mut matched: Vec<Option<usize>> = vec![None; n];
    for (q, &a) in assign.iter().enumerate() {
        matched[a] = Some(q);
    }
    let kept_map = |q: usize| -> Option<usize> {
        let map = t.product.atoms[q].map;
        (map != 0).then(|| t.reactant_of_map.get(&map).copied()).flatten()
    };

    // Atoms carried over: kept mapped atoms plus everything reachable from
    // them without crossing another matched atom.
    let mut include = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for (q, &a) in assign.iter().enumerate() {
        if kept_map(q).is_some() {
            include[a] = true;
            stack.push(a);
        }
    }
    while let Some(u) = stack.pop() {
        for v in mol.neighbors(u) {
            if !include[v] && matched[v].is_none() {
                include[v] = true;
                stack.push(v);
            }
        }
    }

    let mut out = Mol::new();
    let mut recompute: Vec<bool> = Vec::new();
    let mut new_of = vec![usize::MAX; n];
    let mut new_of_r = vec![usize::MAX; t.reactants.atoms.len()];
    for a in (0..n).filter(|&a| include[a]) {
        let mut atom = mol.atoms[a].clone();
        atom.map = 0;
        let mut fixed_h = atom.explicit_h;
        if let Some(q) = matched[a] {
            let r = kept_map(q).expect("included matched atoms are kept");
            let spec = t.reactants.atoms[r].spec();
            if let Some(z) = spec.element {
                atom.element = z;
            }
            if let Some(c) = spec.charge {
                atom.charge = c;
            }
            if let Some(h) = spec.h {
                atom.h = h;
                atom.explicit_h = true;
                fixed_h = true;
            }
            // Templates are applied without stereo.
            atom.chirality = Chirality::None;
            atom.chiral_order.clear();
            new_of_r[r] = out.atoms.len();
        }
        new_of[a] = out.add_atom(atom);
        recompute.push(!fixed_h);
    }
    for (r, qa) in t.reactants.atoms.iter().enumerate() {
        if new_of_r[r] != usize::MAX {
            continue;
        }
        if qa.map != 0 && t.reactant_of_map.contains_key(&qa.map) {
            // Mapped atom whose product-side partner was not carried.
            return None;
        }
        let spec = qa.spec();
        let mut atom = Atom::new(spec.element.unwrap_or(0));
        atom.aromatic = spec.aromatic.unwrap_or(false);
        atom.charge = spec.charge.unwrap_or(0);
        if let Some(h) = spec.h {
            atom.h = h;
            atom.explicit_h = true;
        }
        new_of_r[r] = out.add_atom(atom);
        recompute.push(spec.h.is_none());
    }

    // Bonds between two matched atoms that the product pattern relates are
    // replaced by whatever the reactant side says; all others are copied.
    for b in &mol.bonds {
        if !include[b.a] || !include[b.b] {
            continue;
        }
        if let (Some(qa), Some(qb)) = (matched[b.a], matched[b.b]) {
            if t.product.bond_between(qa, qb).is_some() {
                continue;
            }
        }
        out.add_bond_dir(new_of[b.a], new_of[b.b], b.order, b.dir);
    }
    for qb in &t.reactants.bonds {
        let (x, y) = (new_of_r[qb.a], new_of_r[qb.b]);
        let original = |x: usize, y: usize| -> Option<BondOrder> {
            let ox = new_of.iter().position(|&v| v == x)?;
            let oy = new_of.iter().position(|&v| v == y)?;
            mol.bond_between(ox, oy).map(|bi| mol.bonds[bi].order)
        };
        let order = qb.order().or_else(|| original(x, y)).unwrap_or(
            if out.atoms[x].aromatic && out.atoms[y].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            },
        );
        match out.bond_between(x, y) {
            Some(bi) => out.bonds[bi].order = order,
            None => {
                out.add_bond(x, y, order);
            }
        }
    }

    // Stereo on untouched parts survives when all participants do.
    for a in (0..n).filter(|&a| include[a] && matched[a].is_none()) {
        let old = &mol.atoms[a];
        if old.chirality == Chirality::None {
            continue;
        }
        let lost = old
            .chiral_order
            .iter()
            .any(|&x| x != crate::mol::IMPLICIT_H && new_of[x] == usize::MAX);
        let atom = &mut out.atoms[new_of[a]];
        if lost {
            atom.chirality = Chirality::None;
            atom.chiral_order.clear();
        } else {
            atom.chiral_order = old
                .chiral_order
                .iter()
                .map(|&x| if x == crate::mol::IMPLICIT_H { x } else { new_of[x] })
                .collect();
        }
    }
    for st in &mol.double_stereo {
        let b = &mol.bonds[st.bond];
        let ids = [b.a, b.b, st.ref_a, st.ref_b];
        if ids.iter().any(|&i| new_of[i] == usize::MAX) {
            continue;
        }
        if let Some(nb) = out.bond_between(new_of[b.a], new_of[b.b]) {
            if out.bonds[nb].order != BondOrder::Double {
                continue;
            }
            let forward = out.bonds[nb].a == new_of[b.a];
            let (ra, rb) = if forward {
                (new_of[st.ref_a], new_of[st.ref_b])
            } else {
                (new_of[st.ref_b], new_of[st.ref_a])
            };
            out.double_stereo.push(crate::mol::DoubleBondStereo {
                bond: nb,
                ref_a: ra,
                ref_b: rb,
                cis: st.cis,
            });
        }
    }

    for i in 0..out.atoms.len() {
        if recompute[i] {
            out.atoms[i].h = out.implicit_h(i).unwrap_or(0);
            out.atoms[i].explicit_h = false;
        }
    }
    kekulize(&mut out).ok()?;
    check_valence(&out).ok()?;
    perceive_aromaticity(&mut out);

    let mut result: Vec<Molecule> = out
        .components()
        .into_iter()
        .map(|comp| Molecule::from_graph(out.subgraph(&comp)))
        .collect();
    result.sort();
    result.dedup();
    Some(result)
}

/// Forward-direction reaction pattern check: every reactant-side component
/// must occur in some reactant and every product-side component in the
/// product. Atom maps in the pattern are ignored.
pub fn matches_smirks(rxn: &RetroReaction, pattern: &str) -> Result<bool> {
    let parts: Vec<&str> = pattern.split('>').collect();
    let (lhs, rhs) = match parts.as_slice() {
        [l, "", r] | [l, _, r] => (*l, *r),
        _ => return Err(ChemError::Pattern(format!("not a reaction pattern: '{pattern}'"))),
    };
    if lhs.trim().is_empty() || rhs.trim().is_empty() {
        return Err(ChemError::Pattern("empty reaction side".into()));
    }
    let reactant_side = Pattern::parse(lhs)?;
    let product_side = Pattern::parse(rhs)?;
    let infos: Vec<MolInfo> = rxn.reactants.iter().map(|r| MolInfo::new(r.graph())).collect();
    for comp in reactant_side.split_components() {
        let hit = rxn
            .reactants
            .iter()
            .zip(&infos)
            .any(|(r, info)| has_match(&comp, r.graph(), info));
        if !hit {
            return Ok(false);
        }
    }
    let pinfo = MolInfo::new(rxn.product.graph());
    Ok(product_side
        .split_components()
        .iter()
        .all(|comp| has_match(comp, rxn.product.graph(), &pinfo)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonicalize;

    const AMIDE: &str = "[C:1](=[O:2])[N:3]>>[C:1](=[O:2])[OH].[N:3]";

    fn smiles_sets(rs: &[RetroReaction]) -> Vec<Vec<String>> {
        rs.iter()
            .map(|r| r.reactants.iter().map(|m| m.smiles().to_string()).collect())
            .collect()
    }

    #[test]
    fn amide_disconnection() {
        let t = RetroTemplate::parse("amide", AMIDE).unwrap();
        let m = canonicalize("CNC(C)=O").unwrap();
        let out = apply_template(&t, &m);
        assert_eq!(smiles_sets(&out), vec![vec!["CC(=O)O", "CN"]]);
        assert_eq!(out[0].site.len(), 2);
        assert!(apply_template(&t, &canonicalize("CCO").unwrap()).is_empty());
        let imide = apply_template(&t, &canonicalize("CC(=O)NC(C)=O").unwrap());
        assert_eq!(imide.len(), 2);
    }

    #[test]
    fn site_is_the_cleaved_bond() {
        let t = RetroTemplate::parse("amide", AMIDE).unwrap();
        let m = canonicalize("CNC(C)=O").unwrap();
        let mapped = map_atoms(&m);
        let r = &apply_template(&t, &m)[0];
        let elements: BTreeSet<u8> = r
            .site
            .iter()
            .map(|&k| m.graph().atoms[mapped.atom(k).unwrap()].element)
            .collect();
        assert_eq!(elements, BTreeSet::from([6, 7]));
    }

    #[test]
    fn template_errors() {
        assert!(RetroTemplate::parse("x", "CC").is_err());
        assert!(RetroTemplate::parse("x", "C.C>>CC").is_err());
        assert!(RetroTemplate::parse("x", "[C:1]([N:1])>>C").is_err());
        assert!(RetroTemplate::parse("x", "C(>>C").is_err());
    }

    #[test]
    fn site_containment() {
        let r = RetroReaction {
            product: canonicalize("CC").unwrap(),
            reactants: vec![canonicalize("C").unwrap()],
            template_id: "t".into(),
            site: BTreeSet::from([3, 7]),
        };
        assert!(site_matches(&r, &BTreeSet::from([3, 7])));
        assert!(site_matches(&r, &BTreeSet::from([3])));
        assert!(!site_matches(&r, &BTreeSet::from([5])));
    }

    #[test]
    fn smirks_checks() {
        let t = RetroTemplate::parse("amide", AMIDE).unwrap();
        let amide = apply_template(&t, &canonicalize("CNC(C)=O").unwrap()).remove(0);
        let forward = "[C:1](=[O:2])[OH].[N:3]>>[C:1](=[O:2])[N:3]";
        assert!(matches_smirks(&amide, forward).unwrap());
        let suzuki = RetroTemplate::parse("suzuki", "[c:1]-!@[c:2]>>[c:1]Br.[c:2]B(O)O").unwrap();
        let biaryl = apply_template(&suzuki, &canonicalize("c1ccc(-c2ccccc2)cc1").unwrap());
        assert_eq!(smiles_sets(&biaryl), vec![vec!["Brc1ccccc1", "OB(O)c1ccccc1"]]);
        assert!(!matches_smirks(&biaryl[0], forward).unwrap());
        assert!(matches_smirks(&amide, "").is_err());
    }
}
