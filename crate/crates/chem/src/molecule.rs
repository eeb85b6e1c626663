use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canon::{canonical_ranks, canonical_smiles, write_smiles, WriteOptions};
use crate::error::Result;
use crate::mol::Mol;
use crate::smiles::parse_smiles;

/// A molecule held in canonical form. Equality, ordering and hashing are by
/// canonical SMILES.
#[derive(Clone)]
pub struct Molecule {
    smiles: String,
    graph: Arc<Mol>,
}

impl Molecule {
    pub fn smiles(&self) -> &str {
        &self.smiles
    }

    pub fn graph(&self) -> &Mol {
        &self.graph
    }

    pub fn atom_count(&self) -> usize {
        self.graph.atoms.len()
    }

    /// Build from an already-parsed graph. Atom maps are dropped. The stored
    /// graph is re-read from the canonical string so that it (including atom
    /// order and which hydrogen counts are bracket-fixed) depends only on the
    /// molecule, not on how it was spelled.
    pub fn from_graph(mut mol: Mol) -> Self {
        for a in &mut mol.atoms {
            a.map = 0;
        }
        let smiles = canonical_smiles(&mol);
        let graph = parse_smiles(&smiles).unwrap_or(mol);
        Molecule {
            smiles,
            graph: Arc::new(graph),
        }
    }
}

/// Parse any valid SMILES and return its canonical fixed point.
pub fn canonicalize(smiles: &str) -> Result<Molecule> {
    let mol = parse_smiles(smiles)?;
    Ok(Molecule::from_graph(mol))
}

impl fmt::Debug for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Molecule({})", self.smiles)
    }
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.smiles)
    }
}

impl PartialEq for Molecule {
    fn eq(&self, other: &Self) -> bool {
        self.smiles == other.smiles
    }
}

impl Eq for Molecule {}

impl std::hash::Hash for Molecule {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.smiles.hash(state)
    }
}

impl PartialOrd for Molecule {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Molecule {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.smiles.cmp(&other.smiles)
    }
}

impl std::str::FromStr for Molecule {
    type Err = crate::ChemError;

    fn from_str(s: &str) -> Result<Self> {
        canonicalize(s)
    }
}

impl Serialize for Molecule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.smiles)
    }
}

impl<'de> Deserialize<'de> for Molecule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        canonicalize(&s).map_err(serde::de::Error::custom)
    }
}

/// Canonical SMILES with atom-map numbers 1..n in canonical output order.
#[derive(Clone, Debug)]
pub struct MappedMolecule {
    pub smiles: String,
    pub parent: Molecule,
    /// Atom-map number to atom index in `parent.graph()`.
    pub index_of: BTreeMap<u32, usize>,
}

impl MappedMolecule {
    pub fn atom(&self, map: u32) -> Option<usize> {
        self.index_of.get(&map).copied()
    }

    /// Inverse of `index_of`: atom index to map number.
    pub fn map_of(&self) -> Vec<u32> {
        let mut out = vec![0; self.parent.atom_count()];
        for (&m, &i) in &self.index_of {
            out[i] = m;
        }
        out
    }
}

pub fn map_atoms(m: &Molecule) -> MappedMolecule {
    let mut mol = m.graph().clone();
    let ranks = canonical_ranks(&mol);
    let (_, order) = write_smiles(&mol, &ranks, WriteOptions::default());
    let mut index_of = BTreeMap::new();
    for (k, &atom) in order.iter().enumerate() {
        let map = k as u32 + 1;
        mol.atoms[atom].map = map;
        index_of.insert(map, atom);
    }
    let (smiles, _) = write_smiles(&mol, &ranks, WriteOptions { atom_maps: true });
    MappedMolecule {
        smiles,
        parent: m.clone(),
        index_of,
    }
}
