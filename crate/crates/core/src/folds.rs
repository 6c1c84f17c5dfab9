//! Cluster-based cross-validation folds.
//!
//! Compounds are grouped by single-linkage clustering on binary Tanimoto
//! similarity. Only compounds labeled on enough tasks are evaluated; whole
//! clusters of those are dealt to folds greedily by size. Sparsely labeled
//! compounds stay on the training side of every fold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabelMatrix;
use crate::fingerprints::{tanimoto, SparseCountVector};

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_MIN_TASKS: usize = 8;

#[derive(Debug, Error)]
pub enum FoldError {
    #[error("similarity threshold {0} must lie strictly between 0 and 1")]
    ThresholdOutOfRange(f64),
    #[error("no compounds to cluster")]
    NoCompounds,
    #[error("fold count {0} must be at least 2")]
    InvalidFoldCount(usize),
    #[error("only {clusters} clusters with eligible compounds, need at least {k}")]
    TooFewClusters { clusters: usize, k: usize },
    #[error("expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("fold file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Evaluation fold per compound; `None` for training-only compounds.
    pub eval_assignment: Vec<Option<usize>>,
    pub cluster_id: Vec<usize>,
}

impl FoldAssignment {
    pub fn n_compounds(&self) -> usize {
        self.eval_assignment.len()
    }

    /// Rows evaluated in `fold`.
    pub fn eval_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_compounds()).filter(|&i| self.eval_assignment[i] == Some(fold)).collect()
    }

    /// Rows used for training when `fold` is held out, including every
    /// training-only compound.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_compounds()).filter(|&i| self.eval_assignment[i] != Some(fold)).collect()
    }

    /// Eligible compounds per fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.eval_assignment.iter().flatten() {
            sizes[*f] += 1;
        }
        sizes
    }

    /// Serialize as `compound_id<TAB>cluster_id<TAB>fold-or-dash` lines after
    /// a `#folds<TAB>k` header.
    pub fn to_text(&self, ids: &[String]) -> Result<String, FoldError> {
        if ids.len() != self.n_compounds() {
            return Err(FoldError::LengthMismatch { expected: self.n_compounds(), found: ids.len() });
        }
        let mut out = format!("#folds\t{}\n", self.k);
        for (i, id) in ids.iter().enumerate() {
            let fold = match self.eval_assignment[i] {
                Some(f) => f.to_string(),
                None => "-".to_string(),
            };
            out.push_str(&format!("{id}\t{}\t{fold}\n", self.cluster_id[i]));
        }
        Ok(out)
    }

    /// Parse a fold file. Without a `#folds` header, `k` is one more than the
    /// largest fold index present.
    pub fn parse(text: &str) -> Result<(Vec<String>, FoldAssignment), FoldError> {
        let mut ids = Vec::new();
        let mut eval = Vec::new();
        let mut clusters = Vec::new();
        let mut declared_k = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let bad = |message: String| FoldError::Parse { line: line_no, message };
            if let Some(rest) = line.strip_prefix("#folds\t") {
                let k = rest.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?;
                declared_k = Some(k);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let cluster = fields[1].parse::<usize>().map_err(|e| bad(format!("cluster id: {e}")))?;
            let fold = match fields[2] {
                "-" => None,
                f => Some(f.parse::<usize>().map_err(|e| bad(format!("fold: {e}")))?),
            };
            ids.push(fields[0].to_string());
            clusters.push(cluster);
            eval.push(fold);
        }
        let max_fold = eval.iter().flatten().max().map(|f| f + 1).unwrap_or(0);
        let k = declared_k.unwrap_or(max_fold);
        if k < 2 {
            return Err(FoldError::InvalidFoldCount(k));
        }
        if max_fold > k {
            return Err(FoldError::Parse { line: 0, message: format!("fold index {} exceeds k = {k}", max_fold - 1) });
        }
        Ok((ids, FoldAssignment { k, eval_assignment: eval, cluster_id: clusters }))
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // the smaller index becomes the root, which keeps ids stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage clusters over the graph with an edge wherever
/// `tanimoto >= threshold`. Cluster ids are 0-based in order of each
/// cluster's smallest member.
pub fn cluster_compounds(fingerprints: &[SparseCountVector], threshold: f64) -> Result<Vec<usize>, FoldError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(FoldError::ThresholdOutOfRange(threshold));
    }
    let n = fingerprints.len();
    if n == 0 {
        return Err(FoldError::NoCompounds);
    }
    let sizes: Vec<usize> = fingerprints.iter().map(SparseCountVector::len).collect();
    let edges: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .filter(|&j| {
                    // |A∩B|/|A∪B| <= min/max, so skip pairs that cannot reach the threshold
                    let (lo, hi) = (sizes[i].min(sizes[j]), sizes[i].max(sizes[j]));
                    if hi > 0 && (lo as f64) / (hi as f64) < threshold {
                        return false;
                    }
                    tanimoto(&fingerprints[i], &fingerprints[j]) >= threshold
                })
                .collect()
        })
        .collect();
    let mut sets = DisjointSet::new(n);
    for (i, js) in edges.iter().enumerate() {
        for &j in js {
            sets.union(i, j);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut ids = vec![0; n];
    let mut next = 0;
    for i in 0..n {
        let root = sets.find(i);
        if label[root] == usize::MAX {
            label[root] = next;
            next += 1;
        }
        ids[i] = label[root];
    }
    Ok(ids)
}

/// Deal eligible clusters to `k` folds. A compound is eligible when it has at
/// least `min_tasks` labels. Clusters go largest first (ties by cluster id) to
/// the currently smallest fold (ties to the lowest index).
pub fn make_folds(clusters: &[usize], labels: &LabelMatrix, k: usize, min_tasks: usize) -> Result<FoldAssignment, FoldError> {
    if k < 2 {
        return Err(FoldError::InvalidFoldCount(k));
    }
    if clusters.len() != labels.n_rows() {
        return Err(FoldError::LengthMismatch { expected: labels.n_rows(), found: clusters.len() });
    }
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &c) in clusters.iter().enumerate() {
        if labels.present_count(i) >= min_tasks {
            members[c].push(i);
        }
    }
    let mut order: Vec<usize> = (0..n_clusters).filter(|&c| !members[c].is_empty()).collect();
    if order.len() < k {
        return Err(FoldError::TooFewClusters { clusters: order.len(), k });
    }
    order.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));
    let mut fold_size = vec![0usize; k];
    let mut eval = vec![None; clusters.len()];
    for c in order {
        let target = (0..k).min_by_key(|&f| (fold_size[f], f)).expect("k >= 2");
        fold_size[target] += members[c].len();
        for &i in &members[c] {
            eval[i] = Some(target);
        }
    }
    Ok(FoldAssignment { k, eval_assignment: eval, cluster_id: clusters.to_vec() })
}
