pub mod canon;
pub mod element;
pub mod error;
pub mod mol;
pub mod molecule;
pub mod smarts;
pub mod smiles;
pub mod stock;
pub mod template;

pub use error::{ChemError, Result};
pub use molecule::{canonicalize, map_atoms, MappedMolecule, Molecule};
pub use stock::{in_stock, Stock};
pub use template::{apply_template, matches_smirks, site_matches, RetroReaction, RetroTemplate};
