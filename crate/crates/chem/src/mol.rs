//! Molecular graph with explicit hydrogen counts and stereo annotations.

use crate::element;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer contribution to valence; aromatic bonds count as one here and
    /// the extra pi electron is handled per atom.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// Direction marks as written in SMILES (`/` and `\`), relative to the
/// order the two atoms appear in the string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondDir {
    None,
    Up,
    Down,
}

/// Tetrahedral parity: `@` (counter-clockwise) or `@@` (clockwise), viewed
/// from the first neighbour in `Atom::chiral_order`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chirality {
    None,
    Ccw,
    Cw,
}

impl Chirality {
    pub fn flipped(self) -> Self {
        match self {
            Chirality::Ccw => Chirality::Cw,
            Chirality::Cw => Chirality::Ccw,
            Chirality::None => Chirality::None,
        }
    }
}

/// Marker for an implicit hydrogen in a chiral neighbour list.
pub const IMPLICIT_H: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub element: u8,
    pub aromatic: bool,
    pub charge: i8,
    pub isotope: u16,
    /// Total attached hydrogens (implicit and bracket-specified).
    pub h: u8,
    /// Whether the hydrogen count was fixed by brackets in the input.
    pub explicit_h: bool,
    pub chirality: Chirality,
    pub chiral_order: Vec<usize>,
    pub map: u32,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Atom {
            element,
            aromatic: false,
            charge: 0,
            isotope: 0,
            h: 0,
            explicit_h: false,
            chirality: Chirality::None,
            chiral_order: Vec::new(),
            map: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub dir: BondDir,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Cis/trans relation across a double bond between `ref_a` (a neighbour of
/// the bond's `a` atom) and `ref_b` (a neighbour of its `b` atom).
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleBondStereo {
    pub bond: usize,
    pub ref_a: usize,
    pub ref_b: usize,
    pub cis: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mol {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Per atom: (neighbour, bond index).
    pub adj: Vec<Vec<(usize, usize)>>,
    pub double_stereo: Vec<DoubleBondStereo>,
}

impl Mol {
    pub fn new() -> Self {
        Mol::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adj.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> usize {
        self.add_bond_dir(a, b, order, BondDir::None)
    }

    pub fn add_bond_dir(&mut self, a: usize, b: usize, order: BondOrder, dir: BondDir) -> usize {
        let idx = self.bonds.len();
        self.bonds.push(Bond { a, b, order, dir });
        self.adj[a].push((b, idx));
        self.adj[b].push((a, idx));
        idx
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adj[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adj[a].iter().find(|(n, _)| *n == b).map(|(_, bi)| *bi)
    }

    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[atom].iter().map(|(n, _)| *n)
    }

    /// Sum of bond valences, aromatic bonds counted as one.
    pub fn bond_valence_sum(&self, atom: usize) -> u8 {
        self.adj[atom]
            .iter()
            .map(|(_, bi)| self.bonds[*bi].order.valence())
            .sum()
    }

    pub fn aromatic_bond_count(&self, atom: usize) -> usize {
        self.adj[atom]
            .iter()
            .filter(|(_, bi)| self.bonds[*bi].order == BondOrder::Aromatic)
            .count()
    }

    /// Hydrogen count an unbracketed atom would receive in this bonding
    /// environment. `None` when the element has no default valence.
    pub fn implicit_h(&self, atom: usize) -> Option<u8> {
        let a = &self.atoms[atom];
        let valences = element::charged_valences(a.element, a.charge);
        let lowest = *valences.first()?;
        let mut used = self.bond_valence_sum(atom) as i16;
        if a.aromatic {
            // Atoms donating a lone pair (o, s, pyrrole-type n) take no extra
            // electron; the rest contribute one to the pi system.
            let aromatic_bonds = self.aromatic_bond_count(atom) as i16;
            if aromatic_bonds > 0 && !matches!(a.element, 8 | 16 | 34) {
                used += 1;
            }
            return Some((lowest as i16 - used).max(0) as u8);
        }
        for &v in valences {
            if v as i16 >= used {
                return Some((v as i16 - used) as u8);
            }
        }
        Some(0)
    }

    /// Connected components as sorted atom index lists, ordered by their
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Copy of the atoms in `keep` (sorted), reindexed densely.
    pub fn subgraph(&self, keep: &[usize]) -> Mol {
        let mut index = vec![usize::MAX; self.atoms.len()];
        let mut out = Mol::new();
        for &old in keep {
            index[old] = out.add_atom(self.atoms[old].clone());
        }
        for bond in &self.bonds {
            let (a, b) = (index[bond.a], index[bond.b]);
            if a != usize::MAX && b != usize::MAX {
                out.add_bond_dir(a, b, bond.order, bond.dir);
            }
        }
        for (new_idx, &old) in keep.iter().enumerate() {
            let old_order = &self.atoms[old].chiral_order;
            let lost = old_order
                .iter()
                .any(|&n| n != IMPLICIT_H && index[n] == usize::MAX);
            let atom = &mut out.atoms[new_idx];
            if lost {
                atom.chirality = Chirality::None;
                atom.chiral_order.clear();
            } else {
                atom.chiral_order = old_order
                    .iter()
                    .map(|&n| if n == IMPLICIT_H { IMPLICIT_H } else { index[n] })
                    .collect();
            }
        }
        for st in &self.double_stereo {
            let bond = &self.bonds[st.bond];
            let ids = [bond.a, bond.b, st.ref_a, st.ref_b];
            if ids.iter().all(|&i| index[i] != usize::MAX) {
                if let Some(nb) = out.bond_between(index[bond.a], index[bond.b]) {
                    let nbond = &out.bonds[nb];
                    let (ra, rb) = if nbond.a == index[bond.a] {
                        (index[st.ref_a], index[st.ref_b])
                    } else {
                        (index[st.ref_b], index[st.ref_a])
                    };
                    out.double_stereo.push(DoubleBondStereo {
                        bond: nb,
                        ref_a: ra,
                        ref_b: rb,
                        cis: st.cis,
                    });
                }
            }
        }
        out
    }

    /// Atoms lying on at least one ring, by bridge detection.
    pub fn ring_atoms(&self) -> Vec<bool> {
        let ring_bonds = self.ring_bonds();
        let mut out = vec![false; self.atoms.len()];
        for (bi, bond) in self.bonds.iter().enumerate() {
            if ring_bonds[bi] {
                out[bond.a] = true;
                out[bond.b] = true;
            }
        }
        out
    }

    /// Bonds that are not bridges (i.e. lie on a cycle).
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_ring = vec![true; self.bonds.len()];
        let mut timer = 0usize;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // Iterative Tarjan bridge finding: (atom, parent bond, next adj index).
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (u, pb, ref mut next)) = stack.last_mut() {
                if *next < self.adj[u].len() {
                    let (v, bi) = self.adj[u][*next];
                    *next += 1;
                    if bi == pb {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, bi, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            is_ring[pb] = false;
                        }
                    }
                }
            }
        }
        is_ring
    }

    /// Simple cycles (as atom lists in ring order) no longer than `max_len`.
    pub fn simple_cycles(&self, max_len: usize, ring_bonds: &[bool]) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut out = Vec::new();
        let mut path = Vec::new();
        let mut on_path = vec![false; n];
        for start in 0..n {
            let has_ring = self.adj[start].iter().any(|(_, bi)| ring_bonds[*bi]);
            if !has_ring {
                continue;
            }
            path.clear();
            path.push(start);
            on_path[start] = true;
            self.cycle_dfs(start, start, max_len, ring_bonds, &mut path, &mut on_path, &mut out);
            on_path[start] = false;
            if out.len() > 20_000 {
                break;
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn cycle_dfs(
        &self,
        start: usize,
        u: usize,
        max_len: usize,
        ring_bonds: &[bool],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        for &(v, bi) in &self.adj[u] {
            if !ring_bonds[bi] {
                continue;
            }
            if v == start && path.len() >= 3 {
                // Report each cycle once: start is its minimum and the second
                // atom is smaller than the last.
                if path[1] < path[path.len() - 1] {
                    out.push(path.clone());
                }
                continue;
            }
            if v <= start || on_path[v] || path.len() >= max_len {
                continue;
            }
            on_path[v] = true;
            path.push(v);
            self.cycle_dfs(start, v, max_len, ring_bonds, path, on_path, out);
            path.pop();
            on_path[v] = false;
        }
    }
}
