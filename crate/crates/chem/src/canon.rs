//! Canonical atom ranking and SMILES writing.

use crate::element;
use crate::mol::{BondDir, BondOrder, Chirality, Mol, IMPLICIT_H};

fn dense_rank<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn refine(mol: &Mol, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.atoms.len())
            .map(|i| {
                let mut nbrs: Vec<(usize, u8)> = mol.adj[i]
                    .iter()
                    .map(|&(n, bi)| (ranks[n], mol.bonds[bi].order.code()))
                    .collect();
                nbrs.sort_unstable();
                (ranks[i], nbrs)
            })
            .collect();
        let next = dense_rank(&keys);
        let next_classes = class_count(&next);
        ranks = next;
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
    }
}

/// Canonical ranks (0-based, all distinct). Atoms with fewer connections and
/// lower atomic number rank first, so chains start at a terminal atom.
pub fn canonical_ranks(mol: &Mol) -> Vec<usize> {
    let n = mol.atoms.len();
    if n == 0 {
        return Vec::new();
    }
    let ring = mol.ring_atoms();
    let invariants: Vec<(usize, u8, u16, i8, u8, bool, bool)> = (0..n)
        .map(|i| {
            let a = &mol.atoms[i];
            (
                mol.degree(i),
                a.element,
                a.isotope,
                a.charge,
                a.h,
                a.aromatic,
                ring[i],
            )
        })
        .collect();
    let mut ranks = refine(mol, dense_rank(&invariants));
    while class_count(&ranks) < n {
        // Break the lowest tie by promoting its lowest-index member.
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let tied = (0..n).find(|&r| counts[r] > 1).expect("a tie exists");
        let chosen = (0..n).find(|&i| ranks[i] == tied).expect("member");
        let split: Vec<usize> = (0..n)
            .map(|i| 2 * ranks[i] + usize::from(ranks[i] == tied && i != chosen))
            .collect();
        ranks = refine(mol, dense_rank(&split));
    }
    ranks
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WriteOptions {
    pub atom_maps: bool,
}

struct Writer<'a> {
    mol: &'a Mol,
    priority: &'a [usize],
    opts: WriteOptions,
    visited: Vec<bool>,
    bond_used: Vec<bool>,
    children: Vec<Vec<(usize, usize)>>,
    parent: Vec<Option<usize>>,
    /// Ring bonds per atom as (bond, partner, is_opening), discovery order.
    ring_bonds: Vec<Vec<(usize, usize, bool)>>,
    visit_order: Vec<usize>,
    position: Vec<usize>,
    first: Vec<usize>,
    dirs: Vec<BondDir>,
}

impl<'a> Writer<'a> {
    fn new(mol: &'a Mol, priority: &'a [usize], opts: WriteOptions) -> Self {
        let n = mol.atoms.len();
        Writer {
            mol,
            priority,
            opts,
            visited: vec![false; n],
            bond_used: vec![false; mol.bonds.len()],
            children: vec![Vec::new(); n],
            parent: vec![None; n],
            ring_bonds: vec![Vec::new(); n],
            visit_order: Vec::new(),
            position: vec![usize::MAX; n],
            first: vec![usize::MAX; mol.bonds.len()],
            dirs: vec![BondDir::None; mol.bonds.len()],
        }
    }

    fn plan(&mut self, start: usize) {
        // Iterative DFS mirroring the recursive visiting order.
        let mut stack: Vec<(usize, Vec<(usize, usize)>, usize)> = Vec::new();
        self.enter(start, None);
        stack.push((start, self.sorted_nbrs(start), 0));
        while let Some((u, nbrs, next)) = stack.last_mut() {
            if *next >= nbrs.len() {
                stack.pop();
                continue;
            }
            let (v, bi) = nbrs[*next];
            *next += 1;
            let u = *u;
            if self.bond_used[bi] {
                continue;
            }
            self.bond_used[bi] = true;
            if self.visited[v] {
                self.ring_bonds[v].push((bi, u, true));
                self.ring_bonds[u].push((bi, v, false));
                self.first[bi] = v;
            } else {
                self.children[u].push((v, bi));
                self.first[bi] = u;
                self.enter(v, Some(u));
                let nb = self.sorted_nbrs(v);
                stack.push((v, nb, 0));
            }
        }
    }

    fn enter(&mut self, u: usize, parent: Option<usize>) {
        self.visited[u] = true;
        self.parent[u] = parent;
        self.position[u] = self.visit_order.len();
        self.visit_order.push(u);
    }

    fn sorted_nbrs(&self, u: usize) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.mol.adj[u].clone();
        v.sort_by_key(|&(n, _)| self.priority[n]);
        v
    }

    /// Ring-bond emission order at an atom: closures (partner written
    /// earlier) first, then openings by partner position.
    fn ordered_ring_bonds(&self, u: usize) -> Vec<(usize, usize, bool)> {
        let mut rb = self.ring_bonds[u].clone();
        rb.sort_by_key(|&(_, partner, opening)| (opening, self.position[partner]));
        rb
    }

    fn dir_sign(&self, atom: usize, bond: usize) -> Option<i8> {
        let up = match self.dirs[bond] {
            BondDir::Up => true,
            BondDir::Down => false,
            BondDir::None => return None,
        };
        let nbr_before = self.first[bond] != atom;
        Some(if up == nbr_before { 1 } else { -1 })
    }

    fn set_sign(&mut self, atom: usize, bond: usize, sign: i8) {
        let nbr_before = self.first[bond] != atom;
        let up = (sign == 1) == nbr_before;
        self.dirs[bond] = if up { BondDir::Up } else { BondDir::Down };
    }

    fn assign_directions(&mut self) {
        let mut stereo = self.mol.double_stereo.clone();
        stereo.sort_by_key(|st| {
            let b = &self.mol.bonds[st.bond];
            self.position[b.a].min(self.position[b.b])
        });
        for st in stereo {
            let bond = &self.mol.bonds[st.bond];
            let (a, b, ref_a, ref_b) = if self.position[bond.a] <= self.position[bond.b] {
                (bond.a, bond.b, st.ref_a, st.ref_b)
            } else {
                (bond.b, bond.a, st.ref_b, st.ref_a)
            };
            let pick = |w: &Self, atom: usize| -> Option<(usize, usize)> {
                let mut opts: Vec<(usize, usize)> = w.mol.adj[atom]
                    .iter()
                    .copied()
                    .filter(|&(_, bi)| bi != st.bond && w.mol.bonds[bi].order == BondOrder::Single)
                    .collect();
                opts.sort_by_key(|&(n, bi)| (w.dirs[bi] == BondDir::None, w.position[n]));
                opts.first().copied()
            };
            let (Some((x, bx)), Some((y, by))) = (pick(self, a), pick(self, b)) else {
                continue;
            };
            let cis = st.cis ^ (x != ref_a) ^ (y != ref_b);
            let sx = match self.dir_sign(a, bx) {
                Some(s) => s,
                None => {
                    self.set_sign(a, bx, 1);
                    1
                }
            };
            let want = if cis { sx } else { -sx };
            if self.dir_sign(b, by).is_none() {
                self.set_sign(b, by, want);
            }
        }
    }

    fn bond_symbol(&self, bi: usize) -> &'static str {
        let b = &self.mol.bonds[bi];
        let both_arom = self.mol.atoms[b.a].aromatic && self.mol.atoms[b.b].aromatic;
        match b.order {
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => {
                if both_arom {
                    ""
                } else {
                    ":"
                }
            }
            BondOrder::Single => match self.dirs[bi] {
                BondDir::Up => "/",
                BondDir::Down => "\\",
                BondDir::None => {
                    if both_arom {
                        "-"
                    } else {
                        ""
                    }
                }
            },
        }
    }

    fn output_chirality(&self, u: usize, ring_order: &[(usize, usize, bool)]) -> Chirality {
        let atom = &self.mol.atoms[u];
        if atom.chirality == Chirality::None {
            return Chirality::None;
        }
        let mut order = Vec::new();
        if let Some(p) = self.parent[u] {
            order.push(p);
        }
        if atom.chiral_order.contains(&IMPLICIT_H) {
            order.push(IMPLICIT_H);
        }
        for &(_, partner, _) in ring_order {
            order.push(partner);
        }
        for &(c, _) in &self.children[u] {
            order.push(c);
        }
        match permutation_parity(&atom.chiral_order, &order) {
            Some(true) => atom.chirality,
            Some(false) => atom.chirality.flipped(),
            None => Chirality::None,
        }
    }

    fn atom_symbol(&self, u: usize, chirality: Chirality) -> String {
        let atom = &self.mol.atoms[u];
        let map = if self.opts.atom_maps { atom.map } else { 0 };
        let implicit = self.mol.implicit_h(u).unwrap_or(0);
        let organic = element::is_organic_subset(atom.element) || atom.element == 0;
        let bare = organic
            && atom.charge == 0
            && atom.isotope == 0
            && chirality == Chirality::None
            && map == 0
            && implicit == atom.h
            && !(atom.aromatic && !element::can_be_aromatic(atom.element));
        let sym = element::symbol(atom.element);
        let sym = if atom.aromatic { sym.to_ascii_lowercase() } else { sym.to_string() };
        if bare {
            return sym;
        }
        let mut s = String::from("[");
        if atom.isotope != 0 {
            s.push_str(&atom.isotope.to_string());
        }
        s.push_str(&sym);
        match chirality {
            Chirality::Ccw => s.push('@'),
            Chirality::Cw => s.push_str("@@"),
            Chirality::None => {}
        }
        if atom.h > 0 {
            s.push('H');
            if atom.h > 1 {
                s.push_str(&atom.h.to_string());
            }
        }
        match atom.charge {
            0 => {}
            1 => s.push('+'),
            -1 => s.push('-'),
            c if c > 0 => s.push_str(&format!("+{c}")),
            c => s.push_str(&format!("-{}", -c)),
        }
        if map != 0 {
            s.push(':');
            s.push_str(&map.to_string());
        }
        s.push(']');
        s
    }

    fn emit(&self, u: usize, into: Option<usize>, digits: &mut RingDigits, out: &mut String, order: &mut Vec<usize>) {
        if let Some(bi) = into {
            out.push_str(self.bond_symbol(bi));
        }
        let rings = self.ordered_ring_bonds(u);
        let chir = self.output_chirality(u, &rings);
        out.push_str(&self.atom_symbol(u, chir));
        order.push(u);
        for &(bi, _, opening) in &rings {
            let d = if opening {
                out.push_str(self.bond_symbol(bi));
                digits.open(bi)
            } else {
                digits.close(bi)
            };
            if d < 10 {
                out.push((b'0' + d as u8) as char);
            } else {
                out.push_str(&format!("%{d}"));
            }
        }
        let kids = &self.children[u];
        for (k, &(c, bi)) in kids.iter().enumerate() {
            let branch = k + 1 < kids.len();
            if branch {
                out.push('(');
            }
            self.emit(c, Some(bi), digits, out, order);
            if branch {
                out.push(')');
            }
        }
    }
}

struct RingDigits {
    in_use: Vec<bool>,
    by_bond: std::collections::HashMap<usize, usize>,
}

impl Default for RingDigits {
    fn default() -> Self {
        RingDigits {
            in_use: vec![false; 100],
            by_bond: Default::default(),
        }
    }
}

impl RingDigits {
    fn open(&mut self, bond: usize) -> usize {
        let d = (1..100).find(|&d| !self.in_use[d]).expect("ring digits exhausted");
        self.in_use[d] = true;
        self.by_bond.insert(bond, d);
        d
    }

    fn close(&mut self, bond: usize) -> usize {
        let d = self.by_bond.remove(&bond).expect("ring bond opened");
        self.in_use[d] = false;
        d
    }
}

/// `Some(true)` for an even permutation between two orderings of the same
/// items, `Some(false)` for odd, `None` if the sets differ.
fn permutation_parity(reference: &[usize], other: &[usize]) -> Option<bool> {
    if reference.len() != other.len() {
        return None;
    }
    let mut perm = Vec::with_capacity(other.len());
    for x in other {
        perm.push(reference.iter().position(|r| r == x)?);
    }
    let mut even = true;
    for i in 0..perm.len() {
        while perm[i] != i {
            let j = perm[i];
            perm.swap(i, j);
            even = !even;
        }
    }
    Some(even)
}

/// Write SMILES visiting atoms by ascending `priority`. Returns the string and
/// the atom indices in the order they appear.
pub fn write_smiles(mol: &Mol, priority: &[usize], opts: WriteOptions) -> (String, Vec<usize>) {
    let mut comps: Vec<(String, String, Vec<usize>)> = Vec::new();
    for comp in mol.components() {
        let start = *comp.iter().min_by_key(|&&i| priority[i]).expect("non-empty");
        let mut w = Writer::new(mol, priority, opts);
        w.plan(start);
        w.assign_directions();
        let mut s = String::new();
        let mut order = Vec::new();
        w.emit(start, None, &mut RingDigits::default(), &mut s, &mut order);
        let key = if opts.atom_maps {
            let mut plain = String::new();
            let mut w2 = Writer::new(mol, priority, WriteOptions::default());
            w2.plan(start);
            w2.assign_directions();
            w2.emit(start, None, &mut RingDigits::default(), &mut plain, &mut Vec::new());
            plain
        } else {
            s.clone()
        };
        comps.push((key, s, order));
    }
    comps.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    let mut order = Vec::new();
    for (i, (_, s, o)) in comps.into_iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        out.push_str(&s);
        order.extend(o);
    }
    (out, order)
}

pub fn canonical_smiles(mol: &Mol) -> String {
    let ranks = canonical_ranks(mol);
    write_smiles(mol, &ranks, WriteOptions::default()).0
}
