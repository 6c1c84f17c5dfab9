//! AUC, the two-sided Mann-Whitney U test, single-task versus multi-task
//! comparison and label statistics.

use std::cmp::Ordering;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::dataset::{LabelMatrix, SparseFeatureMatrix};
use crate::mtnn::{self, NetSpec, TrainConfig};
use crate::Scalar;

/// Combined sample size up to which p-values are computed exactly.
pub const EXACT_LIMIT: usize = 12;
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("AUC needs both classes (positives {n_pos}, negatives {n_neg})")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
    #[error("need at least one restart")]
    NoRestarts,
    #[error(transparent)]
    Training(#[from] mtnn::TrainError),
}

/// 1-based ranks with ties sharing their mean rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Rank-based ROC AUC with midranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvaluationError> {
    if scores.len() != labels.len() {
        return Err(EvaluationError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvaluationError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvaluationError::SingleClass { n_pos, n_neg });
    }
    let ranks = midranks(scores);
    let r_pos: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((r_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Two-sided Mann-Whitney U test. Exact over all relabelings of the pooled
/// midranks when `a.len() + b.len() <= 12`; otherwise the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_two_sided(a: &[f64], b: &[f64]) -> Result<f64, EvaluationError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvaluationError::EmptySample);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if let Some(i) = pooled.iter().position(|s| !s.is_finite()) {
        return Err(EvaluationError::NonFiniteScore(i));
    }
    let ranks = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    if na + nb <= EXACT_LIMIT {
        Ok(exact_p(&ranks, na))
    } else {
        Ok(normal_p(&ranks, na, nb))
    }
}

/// Counts subsets of size `na` by doubled rank sum; midranks are multiples
/// of 1/2 so doubled sums are integers and the comparison is exact.
fn exact_p(ranks: &[f64], na: usize) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut ways = vec![vec![0u64; total + 1]; na + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for k in (1..=na).rev() {
            for s in (r..=total).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let observed: usize = doubled[..na].iter().sum();
    // 2·E[R_a] = na·(n + 1)
    let center = (na * (ranks.len() + 1)) as i64;
    let dist = |s: usize| (s as i64 - center).abs();
    let cut = dist(observed);
    let (mut extreme, mut all) = (0u64, 0u64);
    for (s, &w) in ways[na].iter().enumerate() {
        all += w;
        if dist(s) >= cut {
            extreme += w;
        }
    }
    extreme as f64 / all as f64
}

fn normal_p(ranks: &[f64], na: usize, nb: usize) -> f64 {
    let n = (na + nb) as f64;
    let (fa, fb) = (na as f64, nb as f64);
    let r_a: f64 = ranks[..na].iter().sum();
    let u = r_a - fa * (fa + 1.0) / 2.0;
    let mu = fa * fb / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = fa * fb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    /// `None` when the evaluated rows hold only one class.
    pub auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Per-task AUC of `probs` (one row per entry of `rows`) over the labeled rows.
pub fn task_scores<F: Scalar>(probs: &Array2<F>, labels: &LabelMatrix, rows: &[usize]) -> Vec<TaskScore> {
    assert_eq!(probs.nrows(), rows.len(), "one prediction row per evaluated row");
    (0..labels.n_tasks())
        .map(|t| {
            let mut scores = Vec::new();
            let mut truth = Vec::new();
            for (k, &r) in rows.iter().enumerate() {
                if let Some(v) = labels.get(r, t) {
                    scores.push(probs[[k, t]].as_f64());
                    truth.push(v);
                }
            }
            let n_pos = truth.iter().filter(|&&v| v).count();
            TaskScore {
                task: labels.task_names()[t].clone(),
                auc: auc(&scores, &truth).ok(),
                n_pos,
                n_neg: truth.len() - n_pos,
            }
        })
        .collect()
}

/// Mean AUC over tasks with both classes present; `None` if there are none.
pub fn mean_auc(scores: &[TaskScore]) -> Option<f64> {
    let defined: Vec<f64> = scores.iter().filter_map(|s| s.auc).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// One arm of a comparison: hidden layer sizes and training settings. The
/// seed of restart `r` is `config.seed + r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub net: NetSpec,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskComparison {
    pub task: String,
    pub st_aucs: Vec<Option<f64>>,
    pub mt_aucs: Vec<Option<f64>>,
    pub mean_st: Option<f64>,
    pub mean_mt: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub restarts: usize,
    pub alpha: f64,
    pub tasks: Vec<TaskComparison>,
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    let d: Option<Vec<f64>> = v.iter().copied().collect();
    d.filter(|d| !d.is_empty()).map(|d| d.iter().sum::<f64>() / d.len() as f64)
}

impl ComparisonReport {
    /// Tab-separated `task, auc_st, auc_mt, p_value, significant`.
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
        let mut out = String::from("task\tauc_st\tauc_mt\tp_value\tsignificant\n");
        for t in &self.tasks {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                t.task,
                fmt(t.mean_st),
                fmt(t.mean_mt),
                t.p_value.map_or("NA".to_string(), |p| format!("{p:.4e}")),
                t.significant
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Train `restarts` single-task nets per task and `restarts` multi-task nets on
/// `train_rows`, score every net on `eval_rows` and test each task's AUC
/// samples against each other. Early stopping, when enabled in an arm's
/// config, monitors `eval_rows`.
pub fn compare_st_mt<F: Scalar>(
    features: &SparseFeatureMatrix<F>,
    labels: &LabelMatrix,
    train_rows: &[usize],
    eval_rows: &[usize],
    st: &ArmSpec,
    mt: &ArmSpec,
    restarts: usize,
) -> Result<ComparisonReport, EvaluationError> {
    if restarts == 0 {
        return Err(EvaluationError::NoRestarts);
    }
    let n_tasks = labels.n_tasks();
    // job = (task or None for the multi-task arm, restart)
    let jobs: Vec<(Option<usize>, usize)> = (0..n_tasks)
        .map(Some)
        .chain(std::iter::once(None))
        .flat_map(|t| (0..restarts).map(move |r| (t, r)))
        .collect();
    let results: Vec<Result<Vec<Option<f64>>, EvaluationError>> = jobs
        .par_iter()
        .map(|&(task, r)| {
            let (arm, job_labels, rows): (&ArmSpec, LabelMatrix, Vec<usize>) = match task {
                Some(t) => {
                    let l = labels.select_tasks(&[t]);
                    let rows = train_rows.iter().copied().filter(|&i| l.mask(i, 0)).collect();
                    (st, l, rows)
                }
                None => (mt, labels.clone(), train_rows.to_vec()),
            };
            let mut config = arm.config.clone();
            config.seed = config.seed.wrapping_add(r as u64);
            let (net, _) = mtnn::train(features, &job_labels, &rows, eval_rows, &arm.net, &config)?;
            let probs = mtnn::predict_rows(&net, features, eval_rows)?;
            Ok(task_scores(&probs, &job_labels, eval_rows).into_iter().map(|s| s.auc).collect())
        })
        .collect();
    let mut st_aucs = vec![Vec::with_capacity(restarts); n_tasks];
    let mut mt_aucs = vec![Vec::with_capacity(restarts); n_tasks];
    for (&(task, _), res) in jobs.iter().zip(results) {
        let aucs = res?;
        match task {
            Some(t) => st_aucs[t].push(aucs[0]),
            None => {
                for t in 0..n_tasks {
                    mt_aucs[t].push(aucs[t]);
                }
            }
        }
    }
    let tasks = (0..n_tasks)
        .map(|t| {
            let (s, m) = (&st_aucs[t], &mt_aucs[t]);
            let p_value = match (s.iter().copied().collect::<Option<Vec<f64>>>(), m.iter().copied().collect::<Option<Vec<f64>>>()) {
                (Some(a), Some(b)) => mann_whitney_two_sided(&a, &b).ok(),
                _ => None,
            };
            TaskComparison {
                task: labels.task_names()[t].clone(),
                st_aucs: s.clone(),
                mt_aucs: m.clone(),
                mean_st: mean_defined(s),
                mean_mt: mean_defined(m),
                p_value,
                significant: p_value.is_some_and(|p| p < ALPHA),
            }
        })
        .collect();
    Ok(ComparisonReport { restarts, alpha: ALPHA, tasks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub task_names: Vec<String>,
    /// `histogram[c]` = number of compounds labeled on exactly `c` tasks.
    pub histogram: Vec<usize>,
    /// Absolute Pearson correlation of label columns over jointly labeled
    /// compounds; `None` with fewer than two such compounds or zero variance.
    pub correlation: Vec<Vec<Option<f64>>>,
}

pub fn dataset_stats(labels: &LabelMatrix) -> DatasetStats {
    let t = labels.n_tasks();
    let mut histogram = vec![0; t + 1];
    for i in 0..labels.n_rows() {
        histogram[labels.present_count(i)] += 1;
    }
    let columns: Vec<Vec<Option<bool>>> = (0..t).map(|j| labels.column(j)).collect();
    let mut correlation = vec![vec![None; t]; t];
    for a in 0..t {
        for b in a..t {
            let pairs: Vec<(f64, f64)> = columns[a]
                .iter()
                .zip(&columns[b])
                .filter_map(|(x, y)| Some((f64::from(u8::from((*x)?)), f64::from(u8::from((*y)?)))))
                .collect();
            let r = abs_pearson(&pairs);
            correlation[a][b] = r;
            correlation[b][a] = r;
        }
    }
    DatasetStats { task_names: labels.task_names().to_vec(), histogram, correlation }
}

fn abs_pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).abs().min(1.0))
}

impl DatasetStats {
    pub fn histogram_tsv(&self) -> String {
        let mut out = String::from("labels\tcompounds\n");
        for (c, n) in self.histogram.iter().enumerate() {
            out.push_str(&format!("{c}\t{n}\n"));
        }
        out
    }

    /// Square matrix with a header row; undefined cells are `NA`.
    pub fn correlation_tsv(&self) -> String {
        let mut out = String::from("task");
        for name in &self.task_names {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.task_names.iter().zip(&self.correlation) {
            out.push_str(name);
            for v in row {
                out.push('\t');
                out.push_str(&v.map_or("NA".to_string(), |x| format!("{x:.4}")));
            }
            out.push('\n');
        }
        out
    }
}
