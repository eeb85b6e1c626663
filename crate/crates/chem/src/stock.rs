use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{ChemError, Result};
use crate::molecule::{canonicalize, Molecule};

/// Purchasable building blocks, keyed by canonical SMILES.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stock {
    members: BTreeSet<String>,
}

impl Stock {
    pub fn from_smiles<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut members = BTreeSet::new();
        for s in items {
            members.insert(canonicalize(s)?.smiles().to_string());
        }
        Ok(Stock { members })
    }

    /// One SMILES per line; blank lines and `#` comments are skipped. Text
    /// after the first whitespace on a line (e.g. a name) is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut members = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some(smiles) = line.split_whitespace().next() else {
                continue;
            };
            let m = canonicalize(smiles).map_err(|e| ChemError::Stock {
                line: i + 1,
                msg: e.to_string(),
            })?;
            members.insert(m.smiles().to_string());
        }
        Ok(Stock { members })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
        Stock::parse(&text)
    }

    pub fn contains(&self, m: &Molecule) -> bool {
        self.members.contains(m.smiles())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(String::as_str)
    }
}

pub fn in_stock(s: &Stock, m: &Molecule) -> bool {
    s.contains(m)
}
