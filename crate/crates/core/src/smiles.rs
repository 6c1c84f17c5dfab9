//! SMILES parsing into an annotated molecular graph.
//!
//! Supported: organic-subset atoms, bracket atoms (isotope, chirality,
//! hydrogen count, charge, atom class), bond symbols `- = # : / \`,
//! branches, ring closures (`1`..`9`, `%10`..`%99`) and dot-separated
//! fragments. Stereo marks are accepted and dropped. Aromaticity is taken
//! from the notation (lowercase atoms, `:` bonds) without perception.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elements;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Stable small-integer code used by fingerprint hashing.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    /// Bond order in half units (aromatic = 1.5 -> 3).
    fn half_units(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }

    /// Bond order as a real number (aromatic = 1.5).
    pub fn as_f64(self) -> f64 {
        self.half_units() as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub atomic_number: u8,
    pub aromatic: bool,
    pub formal_charge: i8,
    pub isotope: Option<u16>,
    /// Hydrogen count written inside a bracket atom.
    pub explicit_h: Option<u8>,
    /// Hydrogens derived from the default valence; zero for bracket atoms.
    pub implicit_h: u8,
    pub degree: usize,
    pub in_ring: bool,
}

impl Atom {
    pub fn element(&self) -> &'static str {
        elements::symbol(self.atomic_number).unwrap_or("?")
    }

    pub fn total_h(&self) -> u8 {
        self.explicit_h.unwrap_or(0) + self.implicit_h
    }

    fn bare(atomic_number: u8, aromatic: bool) -> Self {
        Atom {
            atomic_number,
            aromatic,
            formal_charge: 0,
            isotope: None,
            explicit_h: None,
            implicit_h: 0,
            degree: 0,
            in_ring: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// A simple undirected molecular graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub source_text: String,
    /// Per atom: (neighbor atom, bond index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    /// Number of independent cycles (edges − vertices + components).
    pub fn ring_count(&self) -> usize {
        let components = atom_components(self).len();
        (self.bonds.len() + components).saturating_sub(self.atoms.len())
    }

    /// The induced subgraph on `atoms` (given in any order; kept in ascending
    /// index order). Atom annotations are carried over unchanged, which is
    /// exact when `atoms` is a union of connected components.
    pub fn induced_subgraph(&self, atoms: &[usize]) -> MolecularGraph {
        let mut keep: Vec<usize> = atoms.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let new_atoms: Vec<Atom> = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let new_bonds: Vec<Bond> = self
            .bonds
            .iter()
            .filter(|b| remap[b.begin] != usize::MAX && remap[b.end] != usize::MAX)
            .map(|b| Bond {
                begin: remap[b.begin],
                end: remap[b.end],
                order: b.order,
                in_ring: b.in_ring,
            })
            .collect();
        let mut g = MolecularGraph {
            atoms: new_atoms,
            bonds: new_bonds,
            source_text: self.source_text.clone(),
            adjacency: Vec::new(),
        };
        g.rebuild_adjacency();
        for i in 0..g.atoms.len() {
            g.atoms[i].degree = g.adjacency[i].len();
        }
        g
    }

    /// Largest connected component (ties go to the component holding the
    /// smallest atom index).
    pub fn largest_component(&self) -> MolecularGraph {
        match atom_components(self).first() {
            Some(c) if c.len() < self.atoms.len() => self.induced_subgraph(c),
            _ => self.clone(),
        }
    }

    /// Relabel atoms so that new atom `k` is old atom `order[k]`.
    ///
    /// Panics if `order` is not a permutation of the atom indices.
    pub fn permuted(&self, order: &[usize]) -> MolecularGraph {
        let n = self.atoms.len();
        assert_eq!(order.len(), n, "permutation length");
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            assert!(old < n && inverse[old] == usize::MAX, "not a permutation");
            inverse[old] = new;
        }
        let mut g = MolecularGraph {
            atoms: order.iter().map(|&i| self.atoms[i].clone()).collect(),
            bonds: self
                .bonds
                .iter()
                .map(|b| Bond {
                    begin: inverse[b.begin],
                    end: inverse[b.end],
                    order: b.order,
                    in_ring: b.in_ring,
                })
                .collect(),
            source_text: self.source_text.clone(),
            adjacency: Vec::new(),
        };
        g.rebuild_adjacency();
        g
    }

    /// Write the graph as SMILES. Each fragment is traversed depth-first from
    /// its lowest-index atom, visiting neighbors in ascending index order, so
    /// relabeling with [`MolecularGraph::permuted`] yields different but
    /// equivalent strings. Bare atoms for organic-subset atoms, brackets for
    /// atoms that carry an explicit hydrogen count.
    pub fn to_smiles(&self) -> String {
        let n = self.atoms.len();
        let mut writer = SmilesWriter {
            graph: self,
            visited: vec![false; n],
            used_bond: vec![false; self.bonds.len()],
            children: vec![Vec::new(); n],
            ring_open: vec![Vec::new(); n],
            ring_close: vec![Vec::new(); n],
        };
        let mut roots = Vec::new();
        for start in 0..n {
            if !writer.visited[start] {
                roots.push(start);
                writer.explore(start, None);
            }
        }
        let mut out = String::new();
        let mut digits: Vec<Option<usize>> = Vec::new();
        let mut bond_digit = vec![0usize; self.bonds.len()];
        for (k, &root) in roots.iter().enumerate() {
            if k > 0 {
                out.push('.');
            }
            writer.emit(root, &mut out, &mut digits, &mut bond_digit);
        }
        out
    }

    fn rebuild_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.atoms.len()];
        for (bi, b) in self.bonds.iter().enumerate() {
            self.adjacency[b.begin].push((b.end, bi));
            self.adjacency[b.end].push((b.begin, bi));
        }
    }

    fn finalize(&mut self, bracket: &[bool]) {
        self.rebuild_adjacency();
        for i in 0..self.atoms.len() {
            self.atoms[i].degree = self.adjacency[i].len();
        }
        self.perceive_rings();
        for i in 0..self.atoms.len() {
            if bracket[i] {
                self.atoms[i].implicit_h = 0;
                continue;
            }
            let atom = &self.atoms[i];
            let Some(valence) = elements::default_valence(atom.atomic_number, atom.formal_charge)
            else {
                continue;
            };
            let used: u32 = self.adjacency[i]
                .iter()
                .map(|&(_, bi)| self.bonds[bi].order.half_units())
                .sum();
            let free = (2 * valence as u32).saturating_sub(used);
            self.atoms[i].implicit_h = (free / 2) as u8;
        }
    }

    /// A bond lies on a ring iff its endpoints stay connected without it.
    fn perceive_rings(&mut self) {
        let n = self.atoms.len();
        let mut seen = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for bi in 0..self.bonds.len() {
            let (s, t) = (self.bonds[bi].begin, self.bonds[bi].end);
            queue.clear();
            queue.push_back(s);
            seen[s] = bi;
            let mut found = false;
            while let Some(u) = queue.pop_front() {
                for &(v, via) in &self.adjacency[u] {
                    if via == bi || seen[v] == bi {
                        continue;
                    }
                    if v == t {
                        found = true;
                        break;
                    }
                    seen[v] = bi;
                    queue.push_back(v);
                }
                if found {
                    break;
                }
            }
            self.bonds[bi].in_ring = found;
        }
        for a in &mut self.atoms {
            a.in_ring = false;
        }
        for bi in 0..self.bonds.len() {
            if self.bonds[bi].in_ring {
                let (s, t) = (self.bonds[bi].begin, self.bonds[bi].end);
                self.atoms[s].in_ring = true;
                self.atoms[t].in_ring = true;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmilesErrorKind {
    EmptyInput,
    UnclosedBranch,
    UnclosedRing,
    UnknownElement,
    MalformedBracket,
    /// A token that cannot appear where it was found (stray `)`, dangling
    /// bond symbol, empty branch, ...).
    UnexpectedCharacter,
    /// A ring closure that would create a self-loop or a parallel bond, or
    /// whose two bond symbols disagree.
    InvalidBond,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at offset {offset}")]
pub struct SmilesError {
    pub kind: SmilesErrorKind,
    /// Byte offset into the original (untrimmed) text.
    pub offset: usize,
}

fn err<T>(kind: SmilesErrorKind, offset: usize) -> Result<T, SmilesError> {
    Err(SmilesError { kind, offset })
}

#[derive(Clone, Copy)]
enum PendingBond {
    Order(BondOrder),
    /// `/` or `\`: a single bond whose stereo meaning is discarded.
    Directional,
}

impl PendingBond {
    fn order(self) -> BondOrder {
        match self {
            PendingBond::Order(o) => o,
            PendingBond::Directional => BondOrder::Single,
        }
    }
}

struct RingOpening {
    atom: usize,
    bond: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bracket: Vec<bool>,
    bonds: Vec<Bond>,
    pair_bonds: BTreeMap<(usize, usize), usize>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.bytes.get(self.pos + k).copied()
    }

    fn add_atom(&mut self, atom: Atom, bracket: bool) -> usize {
        self.atoms.push(atom);
        self.bracket.push(bracket);
        self.atoms.len() - 1
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, offset: usize) -> Result<(), SmilesError> {
        if a == b {
            return err(SmilesErrorKind::InvalidBond, offset);
        }
        let key = (a.min(b), a.max(b));
        if self.pair_bonds.contains_key(&key) {
            return err(SmilesErrorKind::InvalidBond, offset);
        }
        self.pair_bonds.insert(key, self.bonds.len());
        self.bonds.push(Bond {
            begin: a,
            end: b,
            order,
            in_ring: false,
        });
        Ok(())
    }

    fn parse_organic(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.peek().unwrap();
        let (symbol, aromatic, len): (&str, bool, usize) = match c {
            b'B' if self.peek_at(1) == Some(b'r') => ("Br", false, 2),
            b'C' if self.peek_at(1) == Some(b'l') => ("Cl", false, 2),
            b'B' => ("B", false, 1),
            b'C' => ("C", false, 1),
            b'N' => ("N", false, 1),
            b'O' => ("O", false, 1),
            b'P' => ("P", false, 1),
            b'S' => ("S", false, 1),
            b'F' => ("F", false, 1),
            b'I' => ("I", false, 1),
            b'b' => ("B", true, 1),
            b'c' => ("C", true, 1),
            b'n' => ("N", true, 1),
            b'o' => ("O", true, 1),
            b'p' => ("P", true, 1),
            b's' => ("S", true, 1),
            _ => return err(SmilesErrorKind::UnknownElement, start),
        };
        self.pos += len;
        let z = elements::atomic_number(symbol).expect("organic subset is in the table");
        Ok(Atom::bare(z, aromatic))
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(d) = self.peek().filter(u8::is_ascii_digit) {
            value = value.saturating_mul(10).saturating_add((d - b'0') as u32);
            self.pos += 1;
        }
        (self.pos > start).then_some(value)
    }

    fn parse_bracket(&mut self) -> Result<Atom, SmilesError> {
        debug_assert_eq!(self.peek(), Some(b'['));
        self.pos += 1;
        let isotope = match self.read_number() {
            Some(v) if v > u16::MAX as u32 => return err(SmilesErrorKind::MalformedBracket, self.pos),
            Some(v) => Some(v as u16),
            None => None,
        };

        let sym_start = self.pos;
        let (z, aromatic) = match self.peek() {
            Some(c) if c.is_ascii_lowercase() => {
                let two = self
                    .peek_at(1)
                    .filter(u8::is_ascii_lowercase)
                    .map(|c2| [c, c2]);
                let pick = two
                    .and_then(|t| std::str::from_utf8(&t).ok().map(str::to_owned))
                    .filter(|s| elements::AROMATIC_SYMBOLS.contains(&s.as_str()));
                let text = match pick {
                    Some(s) => s,
                    None => {
                        let s = (c as char).to_string();
                        if !elements::AROMATIC_SYMBOLS.contains(&s.as_str()) {
                            return err(SmilesErrorKind::UnknownElement, sym_start);
                        }
                        s
                    }
                };
                self.pos += text.len();
                let mut cap = text.clone();
                cap[..1].make_ascii_uppercase();
                let z = elements::atomic_number(&cap)
                    .ok_or(SmilesError { kind: SmilesErrorKind::UnknownElement, offset: sym_start })?;
                (z, true)
            }
            Some(c) if c.is_ascii_uppercase() => {
                let two = self.peek_at(1).filter(u8::is_ascii_lowercase).and_then(|c2| {
                    let s: String = [c as char, c2 as char].iter().collect();
                    elements::atomic_number(&s).map(|z| (z, 2))
                });
                let (z, len) = match two {
                    Some(found) => found,
                    None => {
                        let s = (c as char).to_string();
                        match elements::atomic_number(&s) {
                            Some(z) => (z, 1),
                            None => return err(SmilesErrorKind::UnknownElement, sym_start),
                        }
                    }
                };
                self.pos += len;
                (z, false)
            }
            Some(b'*') => return err(SmilesErrorKind::UnknownElement, sym_start),
            _ => return err(SmilesErrorKind::MalformedBracket, sym_start),
        };

        let mut atom = Atom::bare(z, aromatic);
        atom.isotope = isotope;

        // chirality: @, @@ and the @TH1-style classes
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else if matches!(
                (self.peek(), self.peek_at(1)),
                (Some(b'T'), Some(b'H')) | (Some(b'A'), Some(b'L')) | (Some(b'S'), Some(b'P'))
                    | (Some(b'T'), Some(b'B')) | (Some(b'O'), Some(b'H'))
            ) {
                self.pos += 2;
                if self.read_number().is_none() {
                    return err(SmilesErrorKind::MalformedBracket, self.pos);
                }
            }
        }

        if self.peek() == Some(b'H') {
            self.pos += 1;
            let h = self.read_number().unwrap_or(1);
            if h > 9 {
                return err(SmilesErrorKind::MalformedBracket, self.pos - 1);
            }
            atom.explicit_h = Some(h as u8);
        } else {
            atom.explicit_h = Some(0);
        }

        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let unit: i32 = if sign == b'+' { 1 } else { -1 };
            let magnitude = if let Some(n) = self.read_number() {
                n as i32
            } else {
                let mut m = 1;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    m += 1;
                }
                m
            };
            if magnitude > 15 {
                return err(SmilesErrorKind::MalformedBracket, self.pos);
            }
            atom.formal_charge = (unit * magnitude) as i8;
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.read_number().is_none() {
                return err(SmilesErrorKind::MalformedBracket, self.pos);
            }
        }

        match self.peek() {
            Some(b']') => {
                self.pos += 1;
                Ok(atom)
            }
            _ => err(SmilesErrorKind::MalformedBracket, self.pos),
        }
    }

    fn run(mut self, source: &str) -> Result<MolecularGraph, SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(PendingBond, usize)> = None;
        // (atom the branch hangs from, offset of '(', atom count at open)
        let mut branches: Vec<(usize, usize, usize)> = Vec::new();
        let mut rings: BTreeMap<u32, RingOpening> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    };
                    if pending.is_some() {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    }
                    branches.push((p, offset, self.atoms.len()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((anchor, _, count)) = branches.pop() else {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    };
                    if pending.is_some() || self.atoms.len() == count {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    }
                    prev = Some(anchor);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() || prev.is_none() {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    }
                    let bond = match c {
                        b'-' => PendingBond::Order(BondOrder::Single),
                        b'=' => PendingBond::Order(BondOrder::Double),
                        b'#' => PendingBond::Order(BondOrder::Triple),
                        b':' => PendingBond::Order(BondOrder::Aromatic),
                        _ => PendingBond::Directional,
                    };
                    pending = Some((bond, offset));
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() || prev.is_none() {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return err(SmilesErrorKind::UnexpectedCharacter, offset);
                    };
                    let index = if c == b'%' {
                        let (d1, d2) = (self.peek_at(1), self.peek_at(2));
                        match (d1, d2) {
                            (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                                self.pos += 3;
                                ((a - b'0') * 10 + (b - b'0')) as u32
                            }
                            _ => return err(SmilesErrorKind::UnexpectedCharacter, offset),
                        }
                    } else {
                        self.pos += 1;
                        (c - b'0') as u32
                    };
                    let here = pending.take().map(|(b, _)| b.order());
                    match rings.remove(&index) {
                        Some(open) => {
                            let order = match (open.bond, here) {
                                (Some(a), Some(b)) if a != b => {
                                    return err(SmilesErrorKind::InvalidBond, offset)
                                }
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => self.default_order(open.atom, p),
                            };
                            self.add_bond(open.atom, p, order, offset)?;
                        }
                        None => {
                            rings.insert(index, RingOpening { atom: p, bond: here, offset });
                        }
                    }
                }
                b'[' => {
                    let atom = self.parse_bracket()?;
                    let idx = self.add_atom(atom, true);
                    if let Some(p) = prev {
                        let order = match pending.take() {
                            Some((b, _)) => b.order(),
                            None => self.default_order(p, idx),
                        };
                        self.add_bond(p, idx, order, offset)?;
                    }
                    prev = Some(idx);
                }
                b'A'..=b'Z' | b'a'..=b'z' | b'*' => {
                    let atom = self.parse_organic()?;
                    let idx = self.add_atom(atom, false);
                    if let Some(p) = prev {
                        let order = match pending.take() {
                            Some((b, _)) => b.order(),
                            None => self.default_order(p, idx),
                        };
                        self.add_bond(p, idx, order, offset)?;
                    }
                    prev = Some(idx);
                }
                _ => return err(SmilesErrorKind::UnexpectedCharacter, offset),
            }
        }

        if let Some(&(_, offset, _)) = branches.first() {
            return err(SmilesErrorKind::UnclosedBranch, offset);
        }
        if let Some(offset) = rings.values().map(|r| r.offset).min() {
            return err(SmilesErrorKind::UnclosedRing, offset);
        }
        if let Some((_, offset)) = pending {
            return err(SmilesErrorKind::UnexpectedCharacter, offset);
        }

        let mut graph = MolecularGraph {
            atoms: self.atoms,
            bonds: self.bonds,
            source_text: source.to_string(),
            adjacency: Vec::new(),
        };
        graph.finalize(&self.bracket);
        Ok(graph)
    }
}

struct SmilesWriter<'a> {
    graph: &'a MolecularGraph,
    visited: Vec<bool>,
    used_bond: Vec<bool>,
    /// Per atom: (child atom, bond index) in traversal order.
    children: Vec<Vec<(usize, usize)>>,
    /// Per atom: ring bonds opened at (ancestor side) or closed at this atom.
    ring_open: Vec<Vec<usize>>,
    ring_close: Vec<Vec<usize>>,
}

impl SmilesWriter<'_> {
    fn explore(&mut self, u: usize, via: Option<usize>) {
        self.visited[u] = true;
        if let Some(b) = via {
            self.used_bond[b] = true;
        }
        let mut nbrs: Vec<(usize, usize)> = self.graph.adjacency[u].clone();
        nbrs.sort_unstable();
        for (v, b) in nbrs {
            if self.used_bond[b] {
                continue;
            }
            if self.visited[v] {
                // back edge to an ancestor still on the stack
                self.used_bond[b] = true;
                self.ring_open[v].push(b);
                self.ring_close[u].push(b);
            } else {
                self.children[u].push((v, b));
                self.explore(v, Some(b));
            }
        }
    }

    fn bond_symbol(&self, b: usize) -> &'static str {
        let bond = &self.graph.bonds[b];
        let both_aromatic = self.graph.atoms[bond.begin].aromatic && self.graph.atoms[bond.end].aromatic;
        match bond.order {
            BondOrder::Single if both_aromatic => "-",
            BondOrder::Single => "",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic if both_aromatic => "",
            BondOrder::Aromatic => ":",
        }
    }

    fn write_atom(&self, u: usize, out: &mut String) {
        let atom = &self.graph.atoms[u];
        let mut symbol = atom.element().to_string();
        if atom.aromatic {
            symbol = symbol.to_ascii_lowercase();
        }
        let Some(h) = atom.explicit_h else {
            out.push_str(&symbol);
            return;
        };
        out.push('[');
        if let Some(iso) = atom.isotope {
            out.push_str(&iso.to_string());
        }
        out.push_str(&symbol);
        match h {
            0 => {}
            1 => out.push('H'),
            k => out.push_str(&format!("H{k}")),
        }
        match atom.formal_charge {
            0 => {}
            1 => out.push('+'),
            -1 => out.push('-'),
            c if c > 0 => out.push_str(&format!("+{c}")),
            c => out.push_str(&format!("-{}", -(c as i16))),
        }
        out.push(']');
    }

    fn push_digit(out: &mut String, d: usize) {
        if d < 10 {
            out.push_str(&d.to_string());
        } else {
            out.push_str(&format!("%{d:02}"));
        }
    }

    fn emit(&self, u: usize, out: &mut String, digits: &mut Vec<Option<usize>>, bond_digit: &mut [usize]) {
        self.write_atom(u, out);
        for &b in &self.ring_close[u] {
            let d = bond_digit[b];
            out.push_str(self.bond_symbol(b));
            Self::push_digit(out, d);
            digits[d] = None;
        }
        for &b in &self.ring_open[u] {
            let d = match digits.iter().skip(1).position(Option::is_none) {
                Some(p) => p + 1,
                None => {
                    if digits.is_empty() {
                        digits.push(None);
                    }
                    digits.push(None);
                    digits.len() - 1
                }
            };
            digits[d] = Some(b);
            bond_digit[b] = d;
            Self::push_digit(out, d);
        }
        let kids = &self.children[u];
        for (k, &(v, b)) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(self.bond_symbol(b));
            self.emit(v, out, digits, bond_digit);
            if !last {
                out.push(')');
            }
        }
    }
}

/// Parse a SMILES string. Error offsets index into `text` as given.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    if let Some(pos) = text.bytes().position(|b| !b.is_ascii()) {
        return err(SmilesErrorKind::MalformedBracket, pos);
    }
    let lead = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return err(SmilesErrorKind::EmptyInput, 0);
    }
    let parser = Parser {
        bytes: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bracket: Vec::new(),
        bonds: Vec::new(),
        pair_bonds: BTreeMap::new(),
    };
    parser.run(trimmed).map_err(|mut e| {
        e.offset += lead;
        e
    })
}

/// Connected components, largest first; equal sizes ordered by their
/// smallest atom index. Each component lists its atoms ascending.
pub fn atom_components(graph: &MolecularGraph) -> Vec<Vec<usize>> {
    let n = graph.atoms.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &(v, _) in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    // stable sort keeps discovery order (= smallest index) among equal sizes
    out.sort_by_key(|c| std::cmp::Reverse(c.len()));
    out
}
