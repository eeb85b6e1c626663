//! SMILES reader.
//!
//! Input is kekulized (which validates aromatic notation), then aromaticity
//! is re-perceived from the Kekulé form so that aromatic and Kekulé spellings
//! of one molecule produce the same graph.

use std::collections::HashMap;

use crate::element;
use crate::error::ChemError;
use crate::mol::{Atom, BondDir, BondOrder, Chirality, DoubleBondStereo, Mol, IMPLICIT_H};

#[derive(Clone, Copy, Debug)]
enum Slot {
    Atom(usize),
    H,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BondSpec {
    Order(BondOrder),
    Dir(BondDir),
}

struct RingOpen {
    atom: usize,
    spec: Option<BondSpec>,
    slot: usize,
}

fn err(pos: usize, msg: impl Into<String>) -> ChemError {
    ChemError::Parse {
        pos,
        msg: msg.into(),
    }
}

pub fn parse_smiles(input: &str) -> Result<Mol, ChemError> {
    let s = input.trim().as_bytes();
    if s.is_empty() {
        return Err(err(0, "empty SMILES"));
    }
    let mut mol = Mol::new();
    let mut slots: Vec<Vec<Slot>> = Vec::new();
    let mut bracketed: Vec<bool> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branches: Vec<Option<usize>> = Vec::new();
    let mut pending: Option<BondSpec> = None;
    let mut rings: HashMap<u32, RingOpen> = HashMap::new();
    let mut pos = 0usize;

    while pos < s.len() {
        let c = s[pos];
        match c {
            b'(' => {
                if prev.is_none() {
                    return Err(err(pos, "branch without preceding atom"));
                }
                if pending.is_some() {
                    return Err(err(pos, "bond before branch"));
                }
                branches.push(prev);
                pos += 1;
            }
            b')' => {
                if pending.is_some() {
                    return Err(err(pos, "dangling bond before ')'"));
                }
                prev = branches.pop().ok_or_else(|| err(pos, "unbalanced ')'"))?;
                pos += 1;
            }
            b'.' => {
                if pending.is_some() {
                    return Err(err(pos, "bond before '.'"));
                }
                prev = None;
                pos += 1;
            }
            b'-' | b'=' | b'#' | b'$' | b':' | b'/' | b'\\' => {
                if pending.is_some() {
                    return Err(err(pos, "two consecutive bond symbols"));
                }
                if prev.is_none() {
                    return Err(err(pos, "bond without preceding atom"));
                }
                pending = Some(match c {
                    b'-' => BondSpec::Order(BondOrder::Single),
                    b'=' => BondSpec::Order(BondOrder::Double),
                    b'#' => BondSpec::Order(BondOrder::Triple),
                    b'$' => return Err(err(pos, "quadruple bonds are not supported")),
                    b':' => BondSpec::Order(BondOrder::Aromatic),
                    b'/' => BondSpec::Dir(BondDir::Up),
                    _ => BondSpec::Dir(BondDir::Down),
                });
                pos += 1;
            }
            b'0'..=b'9' | b'%' => {
                let u = prev.ok_or_else(|| err(pos, "ring closure without atom"))?;
                let num = if c == b'%' {
                    if pos + 2 >= s.len() || !s[pos + 1].is_ascii_digit() || !s[pos + 2].is_ascii_digit() {
                        return Err(err(pos, "malformed %nn ring closure"));
                    }
                    let n = ((s[pos + 1] - b'0') * 10 + (s[pos + 2] - b'0')) as u32;
                    pos += 3;
                    n
                } else {
                    pos += 1;
                    (c - b'0') as u32
                };
                let spec = pending.take();
                if let Some(open) = rings.remove(&num) {
                    let v = open.atom;
                    if v == u {
                        return Err(err(pos, "ring closure to the same atom"));
                    }
                    if mol.bond_between(u, v).is_some() {
                        return Err(err(pos, "duplicate bond via ring closure"));
                    }
                    let (order, dir) = match (open.spec, spec) {
                        (Some(a), Some(b)) if a != b => {
                            // Directional marks on both ends are allowed if consistent.
                            match (a, b) {
                                (BondSpec::Dir(_), BondSpec::Dir(_)) => resolve(Some(a), &mol, v, u),
                                _ => return Err(err(pos, "conflicting ring-closure bonds")),
                            }
                        }
                        (Some(a), _) => resolve(Some(a), &mol, v, u),
                        (None, Some(b)) => {
                            let (o, d) = resolve(Some(b), &mol, v, u);
                            (o, flip(d))
                        }
                        (None, None) => resolve(None, &mol, v, u),
                    };
                    mol.add_bond_dir(v, u, order, dir);
                    slots[v][open.slot] = Slot::Atom(u);
                    slots[u].push(Slot::Atom(v));
                } else {
                    let slot = slots[u].len();
                    slots[u].push(Slot::Ring);
                    rings.insert(num, RingOpen { atom: u, spec, slot });
                }
            }
            b'[' => {
                let (atom, has_h_slot, next) = parse_bracket(s, pos)?;
                let idx = add_atom(&mut mol, &mut slots, atom, prev, pending.take());
                bracketed.push(true);
                if has_h_slot {
                    slots[idx].push(Slot::H);
                }
                prev = Some(idx);
                pos = next;
            }
            _ => {
                let (atom, next) = parse_organic(s, pos)?;
                let idx = add_atom(&mut mol, &mut slots, atom, prev, pending.take());
                bracketed.push(false);
                prev = Some(idx);
                pos = next;
            }
        }
    }
    if pending.is_some() {
        return Err(err(s.len(), "dangling bond at end"));
    }
    if !branches.is_empty() {
        return Err(err(s.len(), "unbalanced '('"));
    }
    if let Some(num) = rings.keys().next() {
        return Err(err(s.len(), format!("unclosed ring {num}")));
    }

    for (i, atom) in mol.atoms.iter_mut().enumerate() {
        if atom.chirality != Chirality::None {
            atom.chiral_order = slots[i]
                .iter()
                .map(|s| match s {
                    Slot::Atom(n) => *n,
                    Slot::H => IMPLICIT_H,
                    Slot::Ring => unreachable!("rings closed"),
                })
                .collect();
        }
    }
    for i in 0..mol.atoms.len() {
        if !bracketed[i] {
            mol.atoms[i].h = mol.implicit_h(i).unwrap_or(0);
        }
    }
    for i in 0..mol.atoms.len() {
        let a = &mol.atoms[i];
        if a.chirality != Chirality::None {
            let n = a.chiral_order.len();
            if !(3..=4).contains(&n) {
                mol.atoms[i].chirality = Chirality::None;
                mol.atoms[i].chiral_order.clear();
            }
        }
    }
    collect_double_stereo(&mut mol);
    kekulize(&mut mol).map_err(|m| err(0, m))?;
    check_valence(&mol).map_err(|m| err(0, m))?;
    perceive_aromaticity(&mut mol);
    Ok(mol)
}

fn flip(d: BondDir) -> BondDir {
    match d {
        BondDir::Up => BondDir::Down,
        BondDir::Down => BondDir::Up,
        BondDir::None => BondDir::None,
    }
}

fn resolve(spec: Option<BondSpec>, mol: &Mol, a: usize, b: usize) -> (BondOrder, BondDir) {
    match spec {
        Some(BondSpec::Order(o)) => (o, BondDir::None),
        Some(BondSpec::Dir(d)) => (BondOrder::Single, d),
        None => {
            if mol.atoms[a].aromatic && mol.atoms[b].aromatic {
                (BondOrder::Aromatic, BondDir::None)
            } else {
                (BondOrder::Single, BondDir::None)
            }
        }
    }
}

fn add_atom(
    mol: &mut Mol,
    slots: &mut Vec<Vec<Slot>>,
    atom: Atom,
    prev: Option<usize>,
    spec: Option<BondSpec>,
) -> usize {
    let idx = mol.add_atom(atom);
    slots.push(Vec::new());
    if let Some(p) = prev {
        let (order, dir) = resolve(spec, mol, p, idx);
        mol.add_bond_dir(p, idx, order, dir);
        slots[idx].push(Slot::Atom(p));
        slots[p].push(Slot::Atom(idx));
    }
    idx
}

fn parse_organic(s: &[u8], pos: usize) -> Result<(Atom, usize), ChemError> {
    let two = if pos + 1 < s.len() { &s[pos..pos + 2] } else { &s[pos..pos + 1] };
    let (z, aromatic, len) = match two {
        b"Cl" => (17, false, 2),
        b"Br" => (35, false, 2),
        _ => match s[pos] {
            b'B' => (5, false, 1),
            b'C' => (6, false, 1),
            b'N' => (7, false, 1),
            b'O' => (8, false, 1),
            b'P' => (15, false, 1),
            b'S' => (16, false, 1),
            b'F' => (9, false, 1),
            b'I' => (53, false, 1),
            b'b' => (5, true, 1),
            b'c' => (6, true, 1),
            b'n' => (7, true, 1),
            b'o' => (8, true, 1),
            b'p' => (15, true, 1),
            b's' => (16, true, 1),
            b'*' => (0, false, 1),
            other => {
                return Err(err(pos, format!("unexpected character '{}'", other as char)));
            }
        },
    };
    let mut atom = Atom::new(z);
    atom.aromatic = aromatic;
    Ok((atom, pos + len))
}

fn parse_number(s: &[u8], mut pos: usize) -> (Option<u32>, usize) {
    let start = pos;
    let mut v: u32 = 0;
    while pos < s.len() && s[pos].is_ascii_digit() {
        v = v.saturating_mul(10).saturating_add((s[pos] - b'0') as u32);
        pos += 1;
    }
    if pos == start {
        (None, pos)
    } else {
        (Some(v), pos)
    }
}

/// Returns the atom, whether it carries an H entry for chirality ordering,
/// and the position after `]`.
fn parse_bracket(s: &[u8], open: usize) -> Result<(Atom, bool, usize), ChemError> {
    let mut pos = open + 1;
    let (isotope, p) = parse_number(s, pos);
    pos = p;
    if pos >= s.len() {
        return Err(err(pos, "unterminated bracket atom"));
    }
    let (z, aromatic) = if s[pos] == b'*' {
        pos += 1;
        (0u8, false)
    } else if s[pos].is_ascii_lowercase() {
        let two = if pos + 1 < s.len() { &s[pos..pos + 2] } else { &s[pos..pos + 1] };
        if two == b"se" {
            pos += 2;
            (34, true)
        } else if two == b"as" {
            pos += 2;
            (33, true)
        } else {
            let z = match s[pos] {
                b'b' => 5,
                b'c' => 6,
                b'n' => 7,
                b'o' => 8,
                b'p' => 15,
                b's' => 16,
                other => return Err(err(pos, format!("bad aromatic symbol '{}'", other as char))),
            };
            pos += 1;
            (z, true)
        }
    } else if s[pos].is_ascii_uppercase() {
        let mut found = None;
        if pos + 1 < s.len() && s[pos + 1].is_ascii_lowercase() {
            let sym = std::str::from_utf8(&s[pos..pos + 2]).unwrap_or("");
            if let Some(z) = element::from_symbol(sym) {
                found = Some((z, 2));
            }
        }
        if found.is_none() {
            let sym = std::str::from_utf8(&s[pos..pos + 1]).unwrap_or("");
            found = element::from_symbol(sym).map(|z| (z, 1));
        }
        let (z, len) = found.ok_or_else(|| err(pos, "unknown element"))?;
        pos += len;
        (z, false)
    } else {
        return Err(err(pos, "expected element symbol"));
    };
    let mut atom = Atom::new(z);
    atom.aromatic = aromatic;
    atom.isotope = isotope.unwrap_or(0) as u16;
    atom.explicit_h = true;

    if pos < s.len() && s[pos] == b'@' {
        pos += 1;
        atom.chirality = Chirality::Ccw;
        if pos < s.len() && s[pos] == b'@' {
            pos += 1;
            atom.chirality = Chirality::Cw;
        } else if s[pos..].starts_with(b"TH1") {
            pos += 3;
        } else if s[pos..].starts_with(b"TH2") {
            pos += 3;
            atom.chirality = Chirality::Cw;
        } else if pos < s.len() && s[pos].is_ascii_uppercase() && s[pos] != b'H' {
            return Err(err(pos, "unsupported chirality class"));
        }
    }
    let mut has_h = false;
    if pos < s.len() && s[pos] == b'H' {
        pos += 1;
        let (n, p) = parse_number(s, pos);
        pos = p;
        atom.h = n.unwrap_or(1) as u8;
        has_h = atom.h > 0;
    }
    if pos < s.len() && (s[pos] == b'+' || s[pos] == b'-') {
        let sign: i8 = if s[pos] == b'+' { 1 } else { -1 };
        let sym = s[pos];
        pos += 1;
        let (n, p) = parse_number(s, pos);
        if let Some(n) = n {
            pos = p;
            atom.charge = sign * n as i8;
        } else {
            let mut count = 1i8;
            while pos < s.len() && s[pos] == sym {
                count += 1;
                pos += 1;
            }
            atom.charge = sign * count;
        }
    }
    if pos < s.len() && s[pos] == b':' {
        pos += 1;
        let (n, p) = parse_number(s, pos);
        atom.map = n.ok_or_else(|| err(pos, "atom map without number"))?;
        pos = p;
    }
    if pos >= s.len() || s[pos] != b']' {
        return Err(err(pos, "expected ']'"));
    }
    if has_h && atom.chirality != Chirality::None && atom.h != 1 {
        return Err(err(pos, "chiral atom with more than one H"));
    }
    let h_slot = has_h && atom.chirality != Chirality::None;
    Ok((atom, h_slot, pos + 1))
}

/// Sign of a directional bond as seen from `atom` towards `nbr`.
fn dir_sign(mol: &Mol, atom: usize, bond: usize) -> Option<i8> {
    let b = &mol.bonds[bond];
    let up = match b.dir {
        BondDir::Up => true,
        BondDir::Down => false,
        BondDir::None => return None,
    };
    // Neighbour written before the atom (atom is the bond's end) keeps the sign.
    let nbr_before = b.b == atom;
    Some(if up == nbr_before { 1 } else { -1 })
}

fn collect_double_stereo(mol: &mut Mol) {
    let mut found = Vec::new();
    for (bi, bond) in mol.bonds.iter().enumerate() {
        if bond.order != BondOrder::Double {
            continue;
        }
        let side = |atom: usize| {
            mol.adj[atom].iter().find_map(|&(n, nb)| {
                if nb == bi || mol.bonds[nb].order != BondOrder::Single {
                    return None;
                }
                dir_sign(mol, atom, nb).map(|s| (n, s))
            })
        };
        if let (Some((ra, sa)), Some((rb, sb))) = (side(bond.a), side(bond.b)) {
            // Need a real choice on each end: at least 2 substituents overall.
            found.push(DoubleBondStereo {
                bond: bi,
                ref_a: ra,
                ref_b: rb,
                cis: sa == sb,
            });
        }
    }
    for b in &mut mol.bonds {
        b.dir = BondDir::None;
    }
    mol.double_stereo = found;
}

fn needs_pi_bond(mol: &Mol, atom: usize) -> bool {
    let a = &mol.atoms[atom];
    let valences = element::charged_valences(a.element, a.charge);
    let Some(&lowest) = valences.first() else {
        return false;
    };
    let used = mol.bond_valence_sum(atom) as i16 + a.h as i16;
    lowest as i16 - used >= 1
}

/// Replace aromatic bonds by an alternating single/double assignment.
pub(crate) fn kekulize(mol: &mut Mol) -> Result<(), String> {
    let arom_bonds: Vec<usize> = (0..mol.bonds.len())
        .filter(|&b| mol.bonds[b].order == BondOrder::Aromatic)
        .collect();
    if arom_bonds.is_empty() {
        for a in &mut mol.atoms {
            if a.aromatic {
                return Err("aromatic atom outside any aromatic bond".into());
            }
        }
        return Ok(());
    }
    for &bi in &arom_bonds {
        let b = &mol.bonds[bi];
        if !mol.atoms[b.a].aromatic || !mol.atoms[b.b].aromatic {
            return Err("aromatic bond between non-aromatic atoms".into());
        }
    }
    let n = mol.atoms.len();
    let need: Vec<bool> = (0..n)
        .map(|i| mol.atoms[i].aromatic && needs_pi_bond(mol, i))
        .collect();
    for i in 0..n {
        if mol.atoms[i].aromatic && mol.aromatic_bond_count(i) == 0 {
            return Err(format!("aromatic atom {i} is not in an aromatic ring"));
        }
    }
    let mut mate = vec![usize::MAX; n];
    if !match_pi(mol, &need, &mut mate) {
        return Err("cannot kekulize aromatic system".into());
    }
    for &bi in &arom_bonds {
        let (a, b) = (mol.bonds[bi].a, mol.bonds[bi].b);
        mol.bonds[bi].order = if mate[a] == b {
            BondOrder::Double
        } else {
            BondOrder::Single
        };
    }
    for a in &mut mol.atoms {
        a.aromatic = false;
    }
    Ok(())
}

fn match_pi(mol: &Mol, need: &[bool], mate: &mut [usize]) -> bool {
    let candidates = |u: usize, mate: &[usize]| -> Vec<usize> {
        mol.adj[u]
            .iter()
            .filter(|(v, bi)| {
                mol.bonds[*bi].order == BondOrder::Aromatic && need[*v] && mate[*v] == usize::MAX
            })
            .map(|(v, _)| *v)
            .collect()
    };
    // Most constrained unmatched atom first.
    let mut best: Option<(usize, Vec<usize>)> = None;
    for u in 0..need.len() {
        if !need[u] || mate[u] != usize::MAX {
            continue;
        }
        let c = candidates(u, mate);
        if c.is_empty() {
            return false;
        }
        if best.as_ref().is_none_or(|(_, bc)| c.len() < bc.len()) {
            let done = c.len() == 1;
            best = Some((u, c));
            if done {
                break;
            }
        }
    }
    let Some((u, cands)) = best else {
        return true;
    };
    for v in cands {
        mate[u] = v;
        mate[v] = u;
        if match_pi(mol, need, mate) {
            return true;
        }
        mate[u] = usize::MAX;
        mate[v] = usize::MAX;
    }
    false
}

pub(crate) fn check_valence(mol: &Mol) -> Result<(), String> {
    for (i, a) in mol.atoms.iter().enumerate() {
        let valences = element::charged_valences(a.element, a.charge);
        if let Some(&max) = valences.last() {
            let total = mol.bond_valence_sum(i) as u16 + a.h as u16;
            if total > max as u16 {
                return Err(format!(
                    "atom {i} ({}) exceeds its valence",
                    element::symbol(a.element)
                ));
            }
        }
    }
    Ok(())
}

/// Pi electrons an atom can contribute to a ring in the Kekulé form.
fn pi_electrons(mol: &Mol, atom: usize, ring_atom: &[bool]) -> Option<u8> {
    let a = &mol.atoms[atom];
    let mut doubles = Vec::new();
    for &(n, bi) in &mol.adj[atom] {
        match mol.bonds[bi].order {
            BondOrder::Double => doubles.push(n),
            BondOrder::Triple => return None,
            _ => {}
        }
    }
    if doubles.len() > 1 {
        return None;
    }
    if let Some(&p) = doubles.first() {
        if ring_atom[p] {
            return Some(1);
        }
        return match mol.atoms[p].element {
            7 | 8 | 16 | 34 => Some(0),
            _ => None,
        };
    }
    let connections = mol.degree(atom) + a.h as usize;
    match (a.element, a.charge) {
        (6, -1) => Some(2),
        (6, 1) => Some(0),
        (5, 0) if connections == 3 => Some(0),
        (7, 0) | (15, 0) if connections == 3 => Some(2),
        (8, 0) | (16, 0) | (34, 0) if connections == 2 => Some(2),
        _ => None,
    }
}

/// Mark rings satisfying the 4n+2 rule as aromatic. Expects a Kekulé graph.
pub(crate) fn perceive_aromaticity(mol: &mut Mol) {
    let ring_bonds = mol.ring_bonds();
    let ring_atom = mol.ring_atoms();
    let electrons: Vec<Option<u8>> = (0..mol.atoms.len())
        .map(|i| if ring_atom[i] { pi_electrons(mol, i, &ring_atom) } else { None })
        .collect();
    let mask: Vec<bool> = mol
        .bonds
        .iter()
        .enumerate()
        .map(|(bi, b)| ring_bonds[bi] && electrons[b.a].is_some() && electrons[b.b].is_some())
        .collect();
    if !mask.iter().any(|&m| m) {
        return;
    }
    let cycles = mol.simple_cycles(10, &mask);
    let mut arom_atom = vec![false; mol.atoms.len()];
    let mut arom_bond = vec![false; mol.bonds.len()];
    for cycle in cycles {
        let total: u32 = cycle.iter().map(|&i| electrons[i].unwrap_or(0) as u32).sum();
        if total % 4 != 2 {
            continue;
        }
        for k in 0..cycle.len() {
            let (u, v) = (cycle[k], cycle[(k + 1) % cycle.len()]);
            arom_atom[u] = true;
            if let Some(bi) = mol.bond_between(u, v) {
                arom_bond[bi] = true;
            }
        }
    }
    for (i, a) in mol.atoms.iter_mut().enumerate() {
        a.aromatic = arom_atom[i];
    }
    for (bi, b) in mol.bonds.iter_mut().enumerate() {
        if arom_bond[bi] {
            b.order = BondOrder::Aromatic;
        }
    }
    // A stereo mark on a bond that became aromatic is meaningless.
    let bonds = &mol.bonds;
    mol.double_stereo
        .retain(|st| bonds[st.bond].order == BondOrder::Double);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h_counts(smi: &str) -> Vec<u8> {
        parse_smiles(smi).unwrap().atoms.iter().map(|a| a.h).collect()
    }

    #[test]
    fn implicit_hydrogens() {
        assert_eq!(h_counts("CCO"), vec![3, 2, 1]);
        assert_eq!(h_counts("C=O"), vec![2, 0]);
        assert_eq!(h_counts("c1ccccc1"), vec![1; 6]);
        assert_eq!(h_counts("c1cc[nH]c1"), vec![1, 1, 1, 1, 1]);
        assert_eq!(h_counts("[NH4+]"), vec![4]);
        assert_eq!(h_counts("CS(C)(=O)=O"), vec![3, 0, 3, 0, 0]);
    }

    #[test]
    fn kekule_input_is_aromatized() {
        let m = parse_smiles("C1=CC=CC=C1").unwrap();
        assert!(m.atoms.iter().all(|a| a.aromatic));
        assert!(m.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
        let p = parse_smiles("O=C1C=CC=CN1").unwrap();
        assert!(p.atoms[1].aromatic);
        let q = parse_smiles("O=C1C=CC(=O)C=C1").unwrap();
        assert!(q.atoms.iter().all(|a| !a.aromatic));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["C(", "C)", "C1CC", "", "C==C", "c1cccc1", "[Xx]", "C(C)(C)(C)(C)C", "CC["] {
            assert!(parse_smiles(bad).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn ring_closure_bond_orders() {
        let m = parse_smiles("C1CC=1").unwrap();
        assert_eq!(m.bonds.iter().filter(|b| b.order == BondOrder::Double).count(), 1);
        assert!(parse_smiles("C%10CC%10").is_ok());
    }

    #[test]
    fn double_bond_stereo_is_recorded() {
        let trans = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(trans.double_stereo.len(), 1);
        assert!(!trans.double_stereo[0].cis);
        let cis = parse_smiles("F/C=C\\F").unwrap();
        assert!(cis.double_stereo[0].cis);
        let trans2 = parse_smiles("C(\\F)=C/F").unwrap();
        assert!(!trans2.double_stereo[0].cis);
    }

    #[test]
    fn chiral_neighbour_order() {
        let m = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(m.atoms[1].chirality, Chirality::Cw);
        assert_eq!(m.atoms[1].chiral_order, vec![0, IMPLICIT_H, 2, 3]);
    }

    #[test]
    fn charges_and_isotopes() {
        let m = parse_smiles("[13CH3][O-]").unwrap();
        assert_eq!(m.atoms[0].isotope, 13);
        assert_eq!(m.atoms[1].charge, -1);
        let n = parse_smiles("[Fe+++]").unwrap();
        assert_eq!(n.atoms[0].charge, 3);
    }
}
