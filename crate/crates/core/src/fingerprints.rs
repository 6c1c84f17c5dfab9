//! Circular count fingerprints, Tanimoto similarity, reference-set
//! similarity features and the column sparsity filter.
//!
//! # Identifier hashing
//!
//! Identifiers are unfolded 64-bit values produced by [`stable_hash`]:
//! every input word is encoded as 8 little-endian bytes, the byte stream is
//! hashed with FNV-1a 64 (offset basis `0xcbf29ce484222325`, prime
//! `0x100000001b3`) and the result is passed through the SplitMix64
//! finalizer. The initial atom invariant hashes the words
//! `[atomic number, degree, total H, formal charge (two's complement),
//! aromatic, in ring]`; iteration `r` hashes
//! `[r, previous id, bond code_1, neighbor id_1, ...]` with the neighbor
//! pairs sorted ascending. Bond codes: single 1, double 2, triple 3,
//! aromatic 4.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::smiles::{parse_smiles, MolecularGraph, SmilesError};

pub const MAX_RADIUS: usize = 10;

/// Radius of ECFP4.
pub const ECFP4_RADIUS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum FingerprintError {
    #[error("radius {0} exceeds the maximum of {MAX_RADIUS}")]
    RadiusTooLarge(usize),
    #[error("reference set is empty")]
    EmptyReferenceSet,
    #[error("sparsity threshold must be positive")]
    NonPositiveThreshold,
    #[error("reference file line {line}: {message}")]
    ReferenceFile { line: usize, message: String },
    #[error("reference file line {line}: invalid SMILES: {error}")]
    ReferenceSmiles { line: usize, error: SmilesError },
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Platform-independent 64-bit hash of a word sequence.
pub fn stable_hash(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    splitmix64(h)
}

/// Feature-id to positive count, iterated in ascending id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseCountVector {
    entries: BTreeMap<u64, u32>,
}

impl SparseCountVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&mut self, id: u64) {
        *self.entries.entry(id).or_insert(0) += 1;
    }

    /// Sets a count; zero removes the entry.
    pub fn set(&mut self, id: u64, count: u32) {
        if count == 0 {
            self.entries.remove(&id);
        } else {
            self.entries.insert(id, count);
        }
    }

    pub fn get(&self, id: u64) -> u32 {
        self.entries.get(&id).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.entries.values().map(|&c| c as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }
}

impl FromIterator<(u64, u32)> for SparseCountVector {
    fn from_iter<I: IntoIterator<Item = (u64, u32)>>(iter: I) -> Self {
        let mut v = SparseCountVector::new();
        for (id, c) in iter {
            if c > 0 {
                *v.entries.entry(id).or_insert(0) += c;
            }
        }
        v
    }
}

/// Atom-set bitmask for one environment.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct AtomSet(Vec<u64>);

impl AtomSet {
    fn single(n: usize, i: usize) -> Self {
        let mut words = vec![0u64; n.div_ceil(64).max(1)];
        words[i / 64] |= 1 << (i % 64);
        AtomSet(words)
    }

    fn union_with(&mut self, other: &AtomSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

fn initial_invariant(graph: &MolecularGraph, i: usize) -> u64 {
    let a = &graph.atoms[i];
    stable_hash(&[
        a.atomic_number as u64,
        a.degree as u64,
        a.total_h() as u64,
        a.formal_charge as i64 as u64,
        a.aromatic as u64,
        a.in_ring as u64,
    ])
}

/// Morgan-style circular count fingerprint up to `radius` bond hops.
///
/// An environment is emitted only when it grows past the atom's
/// environment at the previous radius; environments covering the same atom
/// set at the same radius are counted once, under the smallest identifier.
pub fn ecfp(graph: &MolecularGraph, radius: usize) -> Result<SparseCountVector, FingerprintError> {
    if radius > MAX_RADIUS {
        return Err(FingerprintError::RadiusTooLarge(radius));
    }
    let n = graph.atom_count();
    let mut fp = SparseCountVector::new();
    let mut ids: Vec<u64> = (0..n).map(|i| initial_invariant(graph, i)).collect();
    let mut envs: Vec<AtomSet> = (0..n).map(|i| AtomSet::single(n, i)).collect();
    for &id in &ids {
        fp.increment(id);
    }

    let mut words = Vec::new();
    let mut neighbors: Vec<(u64, u64)> = Vec::new();
    for r in 1..=radius {
        let mut next_ids = Vec::with_capacity(n);
        let mut next_envs = Vec::with_capacity(n);
        for i in 0..n {
            neighbors.clear();
            let mut env = envs[i].clone();
            for &(j, bi) in graph.neighbors(i) {
                neighbors.push((graph.bonds[bi].order.code(), ids[j]));
                env.union_with(&envs[j]);
            }
            neighbors.sort_unstable();
            words.clear();
            words.push(r as u64);
            words.push(ids[i]);
            for &(code, nid) in &neighbors {
                words.push(code);
                words.push(nid);
            }
            next_ids.push(stable_hash(&words));
            next_envs.push(env);
        }

        let mut fresh: BTreeMap<&AtomSet, u64> = BTreeMap::new();
        for i in 0..n {
            if next_envs[i] == envs[i] {
                continue;
            }
            fresh
                .entry(&next_envs[i])
                .and_modify(|best| *best = (*best).min(next_ids[i]))
                .or_insert(next_ids[i]);
        }
        if fresh.is_empty() {
            break;
        }
        for &id in fresh.values() {
            fp.increment(id);
        }
        ids = next_ids;
        envs = next_envs;
    }
    Ok(fp)
}

/// Parse and fingerprint in one step.
pub fn ecfp_smiles(text: &str, radius: usize) -> Result<SparseCountVector, crate::Error> {
    let g = parse_smiles(text)?;
    Ok(ecfp(&g, radius)?)
}

/// Binary Tanimoto similarity over feature-id supports; two empty vectors
/// have similarity 1.
pub fn tanimoto(a: &SparseCountVector, b: &SparseCountVector) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut common = 0usize;
    let mut ia = a.entries.keys().peekable();
    let mut ib = b.entries.keys().peekable();
    while let (Some(&&x), Some(&&y)) = (ia.peek(), ib.peek()) {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                common += 1;
                ia.next();
                ib.next();
            }
        }
    }
    let union = a.len() + b.len() - common;
    common as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePattern {
    pub id: String,
    pub smiles: String,
    pub fingerprint: SparseCountVector,
}

/// Named collection of reference structures (toxicophores, scaffolds).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub name: String,
    pub patterns: Vec<ReferencePattern>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Builds a set from `(id, SMILES)` pairs, fingerprinting each pattern
    /// at ECFP4 radius.
    pub fn from_pairs<I, S1, S2>(name: &str, pairs: I) -> Result<Self, FingerprintError>
    where
        I: IntoIterator<Item = (S1, S2)>,
        S1: Into<String>,
        S2: Into<String>,
    {
        let mut text = String::new();
        for (id, smi) in pairs {
            text.push_str(&id.into());
            text.push('\t');
            text.push_str(&smi.into());
            text.push('\n');
        }
        Self::parse(name, &text)
    }

    /// Parses the `pattern_id<TAB>SMILES` format; `#` lines and blank lines
    /// are skipped. Line numbers in errors are 1-based.
    pub fn parse(name: &str, text: &str) -> Result<Self, FingerprintError> {
        let mut patterns: Vec<ReferencePattern> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let id = fields.next().unwrap_or("").trim();
            let smi = fields.next().map(str::trim).unwrap_or("");
            if id.is_empty() || smi.is_empty() || fields.next().is_some() {
                return Err(FingerprintError::ReferenceFile {
                    line: line_no,
                    message: "expected `pattern_id<TAB>SMILES`".into(),
                });
            }
            if patterns.iter().any(|p| p.id == id) {
                return Err(FingerprintError::ReferenceFile {
                    line: line_no,
                    message: format!("duplicate pattern id `{id}`"),
                });
            }
            let graph = parse_smiles(smi)
                .map_err(|error| FingerprintError::ReferenceSmiles { line: line_no, error })?;
            let fingerprint = ecfp(&graph, ECFP4_RADIUS)?;
            patterns.push(ReferencePattern {
                id: id.to_string(),
                smiles: smi.to_string(),
                fingerprint,
            });
        }
        Ok(ReferenceSet {
            name: name.to_string(),
            patterns,
        })
    }

    /// Back to the file format (without comments).
    pub fn to_text(&self) -> String {
        self.patterns
            .iter()
            .map(|p| format!("{}\t{}\n", p.id, p.smiles))
            .collect()
    }
}

/// Tanimoto similarity of `fp` to every pattern, in file order.
pub fn reference_features(fp: &SparseCountVector, refs: &ReferenceSet) -> Result<Vec<f64>, FingerprintError> {
    if refs.is_empty() {
        return Err(FingerprintError::EmptyReferenceSet);
    }
    Ok(refs.patterns.iter().map(|p| tanimoto(fp, &p.fingerprint)).collect())
}

/// Keep-mask over feature columns: kept iff present in at least
/// `threshold` compounds.
pub fn sparsity_filter(column_counts: &[usize], threshold: usize) -> Result<Vec<bool>, FingerprintError> {
    if threshold == 0 {
        return Err(FingerprintError::NonPositiveThreshold);
    }
    Ok(column_counts.iter().map(|&c| c >= threshold).collect())
}

/// Number of fingerprints containing each feature id.
pub fn occurrence_counts<'a, I>(fps: I) -> BTreeMap<u64, usize>
where
    I: IntoIterator<Item = &'a SparseCountVector>,
{
    let mut counts = BTreeMap::new();
    for fp in fps {
        for id in fp.ids() {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, VecDeque};

    fn fp(s: &str, r: usize) -> SparseCountVector {
        ecfp(&parse_smiles(s).unwrap(), r).unwrap()
    }

    fn support(ids: &[u64]) -> SparseCountVector {
        ids.iter().map(|&i| (i, 1)).collect()
    }

    /// Independent count of emitted environments: BFS balls of each radius,
    /// dropped when they equal the same atom's ball one radius lower,
    /// deduplicated by atom set within a radius.
    fn brute_force_environment_count(g: &MolecularGraph, radius: usize) -> u64 {
        let n = g.atom_count();
        let ball = |center: usize, r: usize| -> BTreeSet<usize> {
            let mut dist = vec![usize::MAX; n];
            dist[center] = 0;
            let mut q = VecDeque::from([center]);
            while let Some(u) = q.pop_front() {
                for &(v, _) in g.neighbors(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            (0..n).filter(|&i| dist[i] <= r).collect()
        };
        let mut total = n as u64;
        for r in 1..=radius {
            let mut sets = BTreeSet::new();
            for i in 0..n {
                let b = ball(i, r);
                if b != ball(i, r - 1) {
                    sets.insert(b);
                }
            }
            total += sets.len() as u64;
        }
        total
    }

    #[test]
    fn single_atom_has_one_feature() {
        let v = fp("C", 2);
        assert_eq!(v.len(), 1);
        assert_eq!(v.total_count(), 1);
    }

    #[test]
    fn ethanol_radius_one_has_six_unit_entries() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(brute_force_environment_count(&g, 1), 6);
        let v = ecfp(&g, 1).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|(_, c)| c == 1));
    }

    #[test]
    fn atom_order_does_not_matter() {
        assert_eq!(fp("OCC", 2), fp("CCO", 2));
        assert_eq!(fp("c1ccccc1O", 2), fp("Oc1ccccc1", 2));
    }

    #[test]
    fn emitted_total_matches_environment_enumeration() {
        // symmetric molecules make identifiers collide, so compare totals
        for s in ["CCC", "CC(C)(C)C", "c1ccccc1", "C1CCC2CCCCC2C1", "CC(=O)Nc1ccc(O)cc1", "O=[N+]([O-])c1ccccc1", "C.CC", "CCCCCCCCCC"] {
            let g = parse_smiles(s).unwrap();
            for r in 0..=3 {
                assert_eq!(
                    ecfp(&g, r).unwrap().total_count(),
                    brute_force_environment_count(&g, r),
                    "{s} radius {r}"
                );
            }
        }
    }

    #[test]
    fn radius_limit() {
        let g = parse_smiles("CC").unwrap();
        assert!(ecfp(&g, 10).is_ok());
        assert_eq!(ecfp(&g, 11), Err(FingerprintError::RadiusTooLarge(11)));
    }

    #[test]
    fn long_chains_share_support() {
        let a = fp("CCCCCCCCCCCC", 2);
        let b = fp("CCCCCCCCCCCCCC", 2);
        assert_eq!(tanimoto(&a, &b), 1.0);
        assert_ne!(a, b);
    }

    #[test]
    fn hash_is_pinned() {
        // Frozen values guard cross-platform stability of identifiers.
        assert_eq!(stable_hash(&[]), 0xf52a_15e9_a9b5_e89b);
        assert_eq!(stable_hash(&[6, 1, 3, 0, 0, 0]), 0xefa6_4029_e757_90ae);
        let methane = fp("C", 2);
        assert_eq!(methane.ids().collect::<Vec<_>>(), vec![16_055_175_078_953_659_788]);
    }

    #[test]
    fn tanimoto_examples() {
        let a = support(&[1, 2]);
        assert_eq!(tanimoto(&a, &a), 1.0);
        assert_eq!(tanimoto(&a, &support(&[3, 4])), 0.0);
        assert!((tanimoto(&a, &support(&[2, 3])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tanimoto(&SparseCountVector::new(), &SparseCountVector::new()), 1.0);
        assert_eq!(tanimoto(&a, &SparseCountVector::new()), 0.0);
        // counts are ignored
        let heavy: SparseCountVector = [(1, 7), (2, 3)].into_iter().collect();
        assert_eq!(tanimoto(&a, &heavy), 1.0);
    }

    #[test]
    fn reference_feature_examples() {
        let mut refs = ReferenceSet { name: "t".into(), patterns: vec![] };
        assert_eq!(reference_features(&support(&[1]), &refs), Err(FingerprintError::EmptyReferenceSet));
        refs.patterns.push(ReferencePattern { id: "p".into(), smiles: String::new(), fingerprint: support(&[1, 2]) });
        let v = reference_features(&support(&[2, 3]), &refs).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-15);
        refs.patterns.push(ReferencePattern { id: "q".into(), smiles: String::new(), fingerprint: support(&[9]) });
        assert_eq!(reference_features(&support(&[9]), &refs).unwrap()[1], 1.0);
        assert_eq!(reference_features(&support(&[42]), &refs).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn reference_file_parsing() {
        let text = "# toxicophores\nnitro\tO=[N+]([O-])c1ccccc1\n\nphenol\tOc1ccccc1\n";
        let set = ReferenceSet::parse("tox", text).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.patterns[1].id, "phenol");
        assert_eq!(set.patterns[1].fingerprint, fp("Oc1ccccc1", 2));
        let dup = ReferenceSet::parse("x", "a\tC\na\tCC\n").unwrap_err();
        assert!(matches!(dup, FingerprintError::ReferenceFile { line: 2, .. }));
        let bad = ReferenceSet::parse("x", "a\tC(\n").unwrap_err();
        assert!(matches!(bad, FingerprintError::ReferenceSmiles { line: 1, .. }));
        let missing = ReferenceSet::parse("x", "a\n").unwrap_err();
        assert!(matches!(missing, FingerprintError::ReferenceFile { line: 1, .. }));
    }

    #[test]
    fn sparsity_filter_examples() {
        assert_eq!(sparsity_filter(&[4, 5, 6], 5).unwrap(), vec![false, true, true]);
        assert_eq!(sparsity_filter(&[0, 1, 3], 1).unwrap(), vec![false, true, true]);
        assert_eq!(sparsity_filter(&[0, 0, 0], 5).unwrap(), vec![false; 3]);
        assert_eq!(sparsity_filter(&[1], 0), Err(FingerprintError::NonPositiveThreshold));
    }
}
