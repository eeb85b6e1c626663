//! SMARTS query patterns and subgraph matching against [`Mol`] graphs.
//!
//! Supported: bracket primitives `* #n a A D H h X v R r x + - @` and
//! isotopes, element symbols, recursive `$()`, the logical operators
//! `! & , ;`, bond primitives `- = # : ~ @ / \`, ring closures and
//! dot-separated components. Hydrogen counts are totals.

use crate::element;
use crate::error::ChemError;
use crate::mol::{BondOrder, Mol};

#[derive(Clone, Debug)]
pub enum Expr<P> {
    Prim(P),
    Not(Box<Expr<P>>),
    And(Vec<Expr<P>>),
    Or(Vec<Expr<P>>),
}

impl<P> Expr<P> {
    fn eval(&self, f: &dyn Fn(&P) -> bool) -> bool {
        match self {
            Expr::Prim(p) => f(p),
            Expr::Not(e) => !e.eval(f),
            Expr::And(v) => v.iter().all(|e| e.eval(f)),
            Expr::Or(v) => v.iter().any(|e| e.eval(f)),
        }
    }

    /// Primitives reachable through conjunctions only.
    fn conjuncts(&self) -> Vec<&P> {
        match self {
            Expr::Prim(p) => vec![p],
            Expr::And(v) => v.iter().flat_map(|e| e.conjuncts()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum AtomPrim {
    Any,
    /// `aromatic` is `None` for `#n`, which matches either form.
    Element { number: u8, aromatic: Option<bool> },
    Aromatic(bool),
    Degree(u8),
    TotalH(u8),
    ImplicitH(u8),
    Connectivity(u8),
    Valence(u8),
    InRing(bool),
    RingCount(u8),
    RingSize(u8),
    RingConnectivity(u8),
    Charge(i8),
    Isotope(u16),
    Chiral,
    Recursive(Box<Pattern>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondPrim {
    Order(BondOrder),
    Any,
    Ring,
    Directional,
}

#[derive(Clone, Debug)]
pub struct QueryAtom {
    pub expr: Expr<AtomPrim>,
    pub map: u32,
}

/// Element, aromaticity, charge and hydrogen count pinned by a query atom.
/// Used when a query atom has to be turned into a real atom.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomSpec {
    pub element: Option<u8>,
    pub aromatic: Option<bool>,
    pub charge: Option<i8>,
    pub h: Option<u8>,
}

impl QueryAtom {
    pub fn spec(&self) -> AtomSpec {
        let mut spec = AtomSpec::default();
        for p in self.expr.conjuncts() {
            match p {
                AtomPrim::Element { number, aromatic } if spec.element.is_none() => {
                    spec.element = Some(*number);
                    if aromatic.is_some() {
                        spec.aromatic = *aromatic;
                    }
                }
                AtomPrim::Aromatic(a) if spec.aromatic.is_none() => spec.aromatic = Some(*a),
                AtomPrim::Charge(c) if spec.charge.is_none() => spec.charge = Some(*c),
                AtomPrim::TotalH(h) if spec.h.is_none() => spec.h = Some(*h),
                _ => {}
            }
        }
        spec
    }
}

#[derive(Clone, Debug)]
pub struct QueryBond {
    pub a: usize,
    pub b: usize,
    /// `None` is the implicit bond: single or aromatic.
    pub expr: Option<Expr<BondPrim>>,
}

impl QueryBond {
    /// The bond order this query pins down, if it is a plain order symbol.
    pub fn order(&self) -> Option<BondOrder> {
        match &self.expr {
            Some(Expr::Prim(BondPrim::Order(o))) => Some(*o),
            Some(Expr::Prim(BondPrim::Directional)) => Some(BondOrder::Single),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Pattern {
    pub atoms: Vec<QueryAtom>,
    pub bonds: Vec<QueryBond>,
    pub adj: Vec<Vec<(usize, usize)>>,
    /// Atom indices per dot-separated component, in input order.
    pub components: Vec<Vec<usize>>,
}

fn perr(msg: impl Into<String>) -> ChemError {
    ChemError::Pattern(msg.into())
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Pattern, ChemError> {
        let s = text.trim().as_bytes();
        if s.is_empty() {
            return Err(perr("empty pattern"));
        }
        let mut p = Parser { s, pos: 0 };
        let pat = p.pattern()?;
        if p.pos != s.len() {
            return Err(perr(format!("unexpected '{}' at {}", s[p.pos] as char, p.pos)));
        }
        Ok(pat)
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adj[a].iter().find(|(n, _)| *n == b).map(|(_, bi)| *bi)
    }

    /// One pattern per dot-separated component.
    pub fn split_components(&self) -> Vec<Pattern> {
        self.components
            .iter()
            .map(|comp| {
                let mut index = vec![usize::MAX; self.atoms.len()];
                let mut out = Pattern::default();
                for &a in comp {
                    index[a] = out.atoms.len();
                    out.atoms.push(self.atoms[a].clone());
                    out.adj.push(Vec::new());
                }
                for b in &self.bonds {
                    if index[b.a] != usize::MAX && index[b.b] != usize::MAX {
                        out.add_bond(index[b.a], index[b.b], b.expr.clone())
                            .expect("bonds of a valid pattern");
                    }
                }
                out.components.push((0..comp.len()).collect());
                out
            })
            .collect()
    }

    fn add_bond(&mut self, a: usize, b: usize, expr: Option<Expr<BondPrim>>) -> Result<(), ChemError> {
        if a == b || self.bond_between(a, b).is_some() {
            return Err(perr("duplicate or self bond"));
        }
        let idx = self.bonds.len();
        self.bonds.push(QueryBond { a, b, expr });
        self.adj[a].push((b, idx));
        self.adj[b].push((a, idx));
        Ok(())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut v: u32 = 0;
        while let Some(c) = self.peek().filter(u8::is_ascii_digit) {
            v = v.saturating_mul(10).saturating_add((c - b'0') as u32);
            self.pos += 1;
        }
        (self.pos > start).then_some(v)
    }

    fn small(&mut self, default: u8) -> u8 {
        self.number().map_or(default, |n| n.min(255) as u8)
    }

    fn pattern(&mut self) -> Result<Pattern, ChemError> {
        let mut pat = Pattern::default();
        let mut prev: Option<usize> = None;
        let mut branches: Vec<Option<usize>> = Vec::new();
        let mut pending: Option<Expr<BondPrim>> = None;
        let mut rings: std::collections::HashMap<u32, (usize, Option<Expr<BondPrim>>)> =
            Default::default();
        let mut current: Vec<usize> = Vec::new();
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(perr("misplaced '('"));
                    }
                    branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(perr("dangling bond before ')'"));
                    }
                    prev = branches.pop().ok_or_else(|| perr("unbalanced ')'"))?;
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() || !branches.is_empty() {
                        return Err(perr("misplaced '.'"));
                    }
                    if !current.is_empty() {
                        pat.components.push(std::mem::take(&mut current));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'/' | b'\\' | b'!' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(perr("misplaced bond"));
                    }
                    pending = Some(self.bond_expr()?);
                }
                b'0'..=b'9' | b'%' => {
                    let u = prev.ok_or_else(|| perr("ring closure without atom"))?;
                    let num = if c == b'%' {
                        self.pos += 1;
                        let start = self.pos;
                        let n = self.number().ok_or_else(|| perr("bad %nn"))?;
                        if self.pos - start != 2 {
                            return Err(perr("bad %nn"));
                        }
                        n
                    } else {
                        self.pos += 1;
                        (c - b'0') as u32
                    };
                    let expr = pending.take();
                    if let Some((v, open_expr)) = rings.remove(&num) {
                        pat.add_bond(v, u, open_expr.or(expr))?;
                    } else {
                        rings.insert(num, (u, expr));
                    }
                }
                _ => {
                    let atom = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    let idx = pat.atoms.len();
                    pat.atoms.push(atom);
                    pat.adj.push(Vec::new());
                    current.push(idx);
                    if let Some(p) = prev {
                        pat.add_bond(p, idx, pending.take())?;
                    }
                    prev = Some(idx);
                }
            }
        }
        if pending.is_some() || !branches.is_empty() || !rings.is_empty() {
            return Err(perr("unterminated bond, branch or ring"));
        }
        if !current.is_empty() {
            pat.components.push(current);
        }
        if pat.atoms.is_empty() {
            return Err(perr("pattern without atoms"));
        }
        Ok(pat)
    }

    fn organic_atom(&mut self) -> Result<QueryAtom, ChemError> {
        let rest = &self.s[self.pos..];
        let (prim, len) = if rest.starts_with(b"Cl") {
            (element_prim(17, false), 2)
        } else if rest.starts_with(b"Br") {
            (element_prim(35, false), 2)
        } else {
            let prim = match rest[0] {
                b'*' => AtomPrim::Any,
                b'a' => AtomPrim::Aromatic(true),
                b'A' => AtomPrim::Aromatic(false),
                c => {
                    let (z, aromatic) = organic_symbol(c)
                        .ok_or_else(|| perr(format!("unexpected '{}'", c as char)))?;
                    element_prim(z, aromatic)
                }
            };
            (prim, 1)
        };
        self.pos += len;
        Ok(QueryAtom {
            expr: Expr::Prim(prim),
            map: 0,
        })
    }

    fn bracket_atom(&mut self) -> Result<QueryAtom, ChemError> {
        self.pos += 1;
        let expr = self.atom_low()?;
        let mut map = 0;
        if self.peek() == Some(b':') {
            self.pos += 1;
            map = self.number().ok_or_else(|| perr("atom map without number"))?;
        }
        if self.peek() != Some(b']') {
            return Err(perr(format!("expected ']' at {}", self.pos)));
        }
        self.pos += 1;
        Ok(QueryAtom { expr, map })
    }

    fn atom_low(&mut self) -> Result<Expr<AtomPrim>, ChemError> {
        let mut terms = vec![self.atom_or()?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            terms.push(self.atom_or()?);
        }
        Ok(collapse(terms, Expr::And))
    }

    fn atom_or(&mut self) -> Result<Expr<AtomPrim>, ChemError> {
        let mut terms = vec![self.atom_and()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            terms.push(self.atom_and()?);
        }
        Ok(collapse(terms, Expr::Or))
    }

    fn atom_and(&mut self) -> Result<Expr<AtomPrim>, ChemError> {
        let mut terms = vec![self.atom_not()?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    terms.push(self.atom_not()?);
                }
                Some(b';' | b',' | b']' | b':') | None => break,
                Some(_) => terms.push(self.atom_not()?),
            }
        }
        Ok(collapse(terms, Expr::And))
    }

    fn atom_not(&mut self) -> Result<Expr<AtomPrim>, ChemError> {
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.atom_not()?)));
        }
        Ok(Expr::Prim(self.atom_prim()?))
    }

    fn atom_prim(&mut self) -> Result<AtomPrim, ChemError> {
        let c = self.peek().ok_or_else(|| perr("unterminated bracket atom"))?;
        let next = self.s.get(self.pos + 1).copied();
        let prim = match c {
            b'$' => {
                if next != Some(b'(') {
                    return Err(perr("expected '(' after '$'"));
                }
                let start = self.pos + 2;
                let mut depth = 1usize;
                let mut i = start;
                while i < self.s.len() && depth > 0 {
                    match self.s[i] {
                        b'(' => depth += 1,
                        b')' => depth -= 1,
                        _ => {}
                    }
                    i += 1;
                }
                if depth != 0 {
                    return Err(perr("unbalanced recursive SMARTS"));
                }
                let inner = std::str::from_utf8(&self.s[start..i - 1]).map_err(|_| perr("utf8"))?;
                self.pos = i;
                return Ok(AtomPrim::Recursive(Box::new(Pattern::parse(inner)?)));
            }
            b'*' => {
                self.pos += 1;
                AtomPrim::Any
            }
            b'0'..=b'9' => {
                let n = self.number().unwrap_or(0);
                return Ok(AtomPrim::Isotope(n.min(u16::MAX as u32) as u16));
            }
            b'#' => {
                self.pos += 1;
                let n = self.number().ok_or_else(|| perr("'#' without atomic number"))?;
                if n > 118 {
                    return Err(perr("atomic number out of range"));
                }
                return Ok(AtomPrim::Element {
                    number: n as u8,
                    aromatic: None,
                });
            }
            b'+' | b'-' => {
                self.pos += 1;
                let sign: i8 = if c == b'+' { 1 } else { -1 };
                let magnitude = match self.number() {
                    Some(n) => n.min(15) as i8,
                    None => {
                        let mut count = 1i8;
                        while self.peek() == Some(c) {
                            count += 1;
                            self.pos += 1;
                        }
                        count
                    }
                };
                return Ok(AtomPrim::Charge(sign * magnitude));
            }
            b'@' => {
                self.pos += 1;
                while matches!(self.peek(), Some(b'@' | b'?')) {
                    self.pos += 1;
                }
                return Ok(AtomPrim::Chiral);
            }
            _ => {
                if let Some(prim) = self.element_symbol() {
                    return Ok(prim);
                }
                self.pos += 1;
                match c {
                    b'a' => AtomPrim::Aromatic(true),
                    b'A' => AtomPrim::Aromatic(false),
                    b'D' => AtomPrim::Degree(self.small(1)),
                    b'H' => AtomPrim::TotalH(self.small(1)),
                    b'h' => AtomPrim::ImplicitH(self.small(1)),
                    b'X' => AtomPrim::Connectivity(self.small(1)),
                    b'v' => AtomPrim::Valence(self.small(1)),
                    b'R' => match self.number() {
                        None => AtomPrim::InRing(true),
                        Some(0) => AtomPrim::InRing(false),
                        Some(n) => AtomPrim::RingCount(n.min(255) as u8),
                    },
                    b'r' => match self.number() {
                        None => AtomPrim::InRing(true),
                        Some(0) => AtomPrim::InRing(false),
                        Some(n) => AtomPrim::RingSize(n.min(255) as u8),
                    },
                    b'x' => match self.number() {
                        None => AtomPrim::InRing(true),
                        Some(n) => AtomPrim::RingConnectivity(n.min(255) as u8),
                    },
                    other => return Err(perr(format!("unknown primitive '{}'", other as char))),
                }
            }
        };
        Ok(prim)
    }

    /// Element symbols inside brackets. `H` is hydrogen only when it stands
    /// alone (`[H]`, `[2H]`, `[H+]`); otherwise it is a hydrogen count.
    fn element_symbol(&mut self) -> Option<AtomPrim> {
        let c = self.peek()?;
        let next = self.s.get(self.pos + 1).copied();
        if c.is_ascii_uppercase() {
            if let Some(n) = next.filter(u8::is_ascii_lowercase) {
                let sym = [c, n];
                let sym = std::str::from_utf8(&sym).ok()?;
                if let Some(z) = element::from_symbol(sym) {
                    self.pos += 2;
                    return Some(element_prim(z, false));
                }
            }
            if c == b'H' {
                let first = self.pos > 0 && matches!(self.s[self.pos - 1], b'[' | b'0'..=b'9');
                let alone = matches!(next, Some(b']' | b':' | b'+' | b'-'));
                if first && alone {
                    self.pos += 1;
                    return Some(element_prim(1, false));
                }
                return None;
            }
            if matches!(c, b'D' | b'X' | b'R' | b'A') {
                return None;
            }
            let z = element::from_symbol(std::str::from_utf8(&[c]).ok()?)?;
            self.pos += 1;
            return Some(element_prim(z, false));
        }
        if c.is_ascii_lowercase() {
            for (sym, z) in [(&b"se"[..], 34u8), (&b"as"[..], 33u8)] {
                if self.s[self.pos..].starts_with(sym) {
                    self.pos += 2;
                    return Some(element_prim(z, true));
                }
            }
            let (z, aromatic) = organic_symbol(c).filter(|(_, ar)| *ar)?;
            self.pos += 1;
            return Some(element_prim(z, aromatic));
        }
        None
    }

    fn bond_expr(&mut self) -> Result<Expr<BondPrim>, ChemError> {
        let mut terms = vec![self.bond_or()?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            terms.push(self.bond_or()?);
        }
        Ok(collapse(terms, Expr::And))
    }

    fn bond_or(&mut self) -> Result<Expr<BondPrim>, ChemError> {
        let mut terms = vec![self.bond_and()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            terms.push(self.bond_and()?);
        }
        Ok(collapse(terms, Expr::Or))
    }

    fn bond_and(&mut self) -> Result<Expr<BondPrim>, ChemError> {
        let mut terms = vec![self.bond_not()?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    terms.push(self.bond_not()?);
                }
                Some(b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'/' | b'\\' | b'!') => {
                    terms.push(self.bond_not()?)
                }
                _ => break,
            }
        }
        Ok(collapse(terms, Expr::And))
    }

    fn bond_not(&mut self) -> Result<Expr<BondPrim>, ChemError> {
        let c = self.peek().ok_or_else(|| perr("unterminated bond"))?;
        self.pos += 1;
        let prim = match c {
            b'!' => return Ok(Expr::Not(Box::new(self.bond_not()?))),
            b'-' => BondPrim::Order(BondOrder::Single),
            b'=' => BondPrim::Order(BondOrder::Double),
            b'#' => BondPrim::Order(BondOrder::Triple),
            b':' => BondPrim::Order(BondOrder::Aromatic),
            b'~' => BondPrim::Any,
            b'@' => BondPrim::Ring,
            b'/' | b'\\' => BondPrim::Directional,
            other => return Err(perr(format!("unknown bond '{}'", other as char))),
        };
        Ok(Expr::Prim(prim))
    }
}

fn collapse<P>(mut terms: Vec<Expr<P>>, wrap: fn(Vec<Expr<P>>) -> Expr<P>) -> Expr<P> {
    if terms.len() == 1 {
        terms.pop().expect("one term")
    } else {
        wrap(terms)
    }
}

fn element_prim(z: u8, aromatic: bool) -> AtomPrim {
    AtomPrim::Element {
        number: z,
        aromatic: Some(aromatic),
    }
}

fn organic_symbol(c: u8) -> Option<(u8, bool)> {
    Some(match c {
        b'B' => (5, false),
        b'C' => (6, false),
        b'N' => (7, false),
        b'O' => (8, false),
        b'P' => (15, false),
        b'S' => (16, false),
        b'F' => (9, false),
        b'I' => (53, false),
        b'b' => (5, true),
        b'c' => (6, true),
        b'n' => (7, true),
        b'o' => (8, true),
        b'p' => (15, true),
        b's' => (16, true),
        _ => return None,
    })
}

/// Ring and valence facts about a molecule that SMARTS primitives need.
#[derive(Clone, Debug)]
pub struct MolInfo {
    ring_bond: Vec<bool>,
    ring_bond_count: Vec<u8>,
    ring_sizes: Vec<Vec<u8>>,
    valence: Vec<u8>,
}

impl MolInfo {
    pub fn new(mol: &Mol) -> Self {
        let ring_bond = mol.ring_bonds();
        let n = mol.atoms.len();
        let mut ring_bond_count = vec![0u8; n];
        let mut ring_sizes = vec![Vec::new(); n];
        for (bi, b) in mol.bonds.iter().enumerate() {
            if !ring_bond[bi] {
                continue;
            }
            ring_bond_count[b.a] += 1;
            ring_bond_count[b.b] += 1;
            if let Some(size) = smallest_cycle_through(mol, bi, &ring_bond) {
                for atom in [b.a, b.b] {
                    if !ring_sizes[atom].contains(&size) {
                        ring_sizes[atom].push(size);
                    }
                }
            }
        }
        let valence = (0..n)
            .map(|i| {
                let a = &mol.atoms[i];
                let mut v = mol.bond_valence_sum(i) + a.h;
                if a.aromatic && mol.aromatic_bond_count(i) > 0 && !matches!(a.element, 8 | 16 | 34) {
                    v += 1;
                }
                v
            })
            .collect();
        MolInfo {
            ring_bond,
            ring_bond_count,
            ring_sizes,
            valence,
        }
    }

    fn in_ring(&self, atom: usize) -> bool {
        self.ring_bond_count[atom] > 0
    }

    /// Approximates the number of smallest rings an atom sits on from its
    /// ring-bond count (two bonds per ring, one shared per fusion).
    fn ring_count(&self, atom: usize) -> u8 {
        self.ring_bond_count[atom].saturating_sub(1)
    }
}

/// Length of the shortest cycle containing bond `bi` (BFS avoiding it).
fn smallest_cycle_through(mol: &Mol, bi: usize, ring_bond: &[bool]) -> Option<u8> {
    let (src, dst) = (mol.bonds[bi].a, mol.bonds[bi].b);
    let mut dist = vec![usize::MAX; mol.atoms.len()];
    let mut queue = std::collections::VecDeque::new();
    dist[src] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        for &(v, b) in &mol.adj[u] {
            if b == bi || !ring_bond[b] || dist[v] != usize::MAX {
                continue;
            }
            dist[v] = dist[u] + 1;
            if v == dst {
                return Some((dist[v] + 1).min(255) as u8);
            }
            queue.push_back(v);
        }
    }
    None
}

fn atom_prim_matches(p: &AtomPrim, mol: &Mol, info: &MolInfo, i: usize) -> bool {
    let a = &mol.atoms[i];
    match p {
        AtomPrim::Any | AtomPrim::Chiral => true,
        AtomPrim::Element { number, aromatic } => {
            a.element == *number && aromatic.is_none_or(|ar| a.aromatic == ar)
        }
        AtomPrim::Aromatic(ar) => a.aromatic == *ar,
        AtomPrim::Degree(n) => mol.degree(i) == *n as usize,
        AtomPrim::TotalH(n) | AtomPrim::ImplicitH(n) => a.h == *n,
        AtomPrim::Connectivity(n) => mol.degree(i) + a.h as usize == *n as usize,
        AtomPrim::Valence(n) => info.valence[i] == *n,
        AtomPrim::InRing(r) => info.in_ring(i) == *r,
        AtomPrim::RingCount(n) => info.ring_count(i) == *n,
        AtomPrim::RingSize(n) => info.ring_sizes[i].contains(n),
        AtomPrim::RingConnectivity(n) => info.ring_bond_count[i] == *n,
        AtomPrim::Charge(c) => a.charge == *c,
        AtomPrim::Isotope(n) => a.isotope == *n,
        AtomPrim::Recursive(pat) => matches_at(pat, mol, info, i),
    }
}

fn atom_matches(q: &QueryAtom, mol: &Mol, info: &MolInfo, i: usize) -> bool {
    q.expr.eval(&|p| atom_prim_matches(p, mol, info, i))
}

fn bond_matches(q: &QueryBond, mol: &Mol, info: &MolInfo, bi: usize) -> bool {
    let order = mol.bonds[bi].order;
    match &q.expr {
        None => matches!(order, BondOrder::Single | BondOrder::Aromatic),
        Some(e) => e.eval(&|p| match p {
            BondPrim::Order(o) => order == *o,
            BondPrim::Any => true,
            BondPrim::Ring => info.ring_bond[bi],
            BondPrim::Directional => order == BondOrder::Single,
        }),
    }
}

/// Search order: query atoms by DFS so each non-root atom has an already
/// placed neighbour to draw candidates from.
fn search_order(p: &Pattern, root: usize) -> Vec<(usize, Option<usize>)> {
    let n = p.atoms.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let starts = std::iter::once(root).chain(0..n);
    for start in starts {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![(start, None)];
        while let Some((u, parent)) = stack.pop() {
            order.push((u, parent));
            for &(v, _) in p.adj[u].iter().rev() {
                if !seen[v] {
                    seen[v] = true;
                    stack.push((v, Some(u)));
                }
            }
        }
    }
    order
}

struct Search<'a> {
    p: &'a Pattern,
    mol: &'a Mol,
    info: &'a MolInfo,
    order: Vec<(usize, Option<usize>)>,
    assign: Vec<usize>,
    used: Vec<bool>,
    limit: usize,
    out: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn run(&mut self, k: usize) {
        if self.out.len() >= self.limit {
            return;
        }
        if k == self.order.len() {
            self.out.push(self.assign.clone());
            return;
        }
        let (q, parent) = self.order[k];
        let candidates: Vec<usize> = match parent {
            Some(pq) => self.mol.neighbors(self.assign[pq]).collect(),
            None => (0..self.mol.atoms.len()).collect(),
        };
        for t in candidates {
            if self.used[t] || !self.feasible(q, t) {
                continue;
            }
            self.assign[q] = t;
            self.used[t] = true;
            self.run(k + 1);
            self.used[t] = false;
            self.assign[q] = usize::MAX;
            if self.out.len() >= self.limit {
                return;
            }
        }
    }

    fn feasible(&self, q: usize, t: usize) -> bool {
        for &(qn, qb) in &self.p.adj[q] {
            let tn = self.assign[qn];
            if tn == usize::MAX {
                continue;
            }
            match self.mol.bond_between(t, tn) {
                Some(tb) if bond_matches(&self.p.bonds[qb], self.mol, self.info, tb) => {}
                _ => return false,
            }
        }
        atom_matches(&self.p.atoms[q], self.mol, self.info, t)
    }
}

fn search(p: &Pattern, mol: &Mol, info: &MolInfo, root: Option<(usize, usize)>, limit: usize) -> Vec<Vec<usize>> {
    let n = p.atoms.len();
    let mut s = Search {
        p,
        mol,
        info,
        order: search_order(p, root.map_or(0, |(q, _)| q)),
        assign: vec![usize::MAX; n],
        used: vec![false; mol.atoms.len()],
        limit,
        out: Vec::new(),
    };
    match root {
        Some((q, t)) => {
            if t < mol.atoms.len() && s.feasible(q, t) {
                s.assign[q] = t;
                s.used[t] = true;
                s.run(1);
            }
        }
        None => s.run(0),
    }
    s.out
}

/// All injective embeddings of the pattern (query atom index to molecule atom
/// index), at most `limit`. Symmetric embeddings are all reported.
pub fn find_matches(p: &Pattern, mol: &Mol, info: &MolInfo, limit: usize) -> Vec<Vec<usize>> {
    search(p, mol, info, None, limit)
}

pub fn has_match(p: &Pattern, mol: &Mol, info: &MolInfo) -> bool {
    !search(p, mol, info, None, 1).is_empty()
}

/// Whether the pattern embeds with its first atom on `atom`.
pub fn matches_at(p: &Pattern, mol: &Mol, info: &MolInfo, atom: usize) -> bool {
    !search(p, mol, info, Some((0, atom)), 1).is_empty()
}
