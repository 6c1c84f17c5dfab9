//! Grid and sampled hyperparameter search over clustered cross-validation,
//! with the winning configuration chosen separately for every task.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CompoundTable, FeatureConfig, FeatureFamilies, FeaturePipeline, NormalizationKind};
use crate::evaluation::task_scores;
use crate::folds::FoldAssignment;
use crate::mtnn::{self, Dropout, NetSpec, TrainConfig};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("search space line {line}: {message}")]
    SpaceFile { line: usize, message: String },
    #[error("search space field `{0}` has no candidate values")]
    EmptyField(&'static str),
    #[error("no configurations were evaluated")]
    NoConfigs,
    #[error("sample of {requested} exceeds grid size {available}")]
    SampleTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub normalization: NormalizationKind,
    pub feature_families: FeatureFamilies,
    pub sparseness_threshold: usize,
    pub hidden_units: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub dropout: bool,
    pub l2: f64,
}

impl HyperConfig {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            families: self.feature_families,
            sparseness_threshold: self.sparseness_threshold,
            normalization: self.normalization,
        }
    }

    pub fn net_spec(&self) -> NetSpec {
        NetSpec { hidden: vec![self.hidden_units; self.layers] }
    }

    pub fn train_config(&self, settings: &SearchSettings, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2: self.l2,
            dropout: self.dropout.then(Dropout::default),
            batch_size: settings.batch_size,
            max_epochs: settings.max_epochs,
            patience: settings.patience,
            seed,
        }
    }

    /// Field values in enumeration order, as written to result tables.
    fn fields(&self) -> [String; 8] {
        [
            self.normalization.to_string(),
            self.feature_families.to_string(),
            self.sparseness_threshold.to_string(),
            self.hidden_units.to_string(),
            self.layers.to_string(),
            self.learning_rate.to_string(),
            if self.dropout { "on" } else { "off" }.to_string(),
            self.l2.to_string(),
        ]
    }
}

impl fmt::Display for HyperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, fam, s, h, l, lr, d, l2] = self.fields();
        write!(f, "norm={n} features={fam} sparse={s} hidden={h}x{l} lr={lr} dropout={d} l2={l2}")
    }
}

const FIELD_NAMES: [&str; 8] = [
    "normalization",
    "feature_families",
    "sparseness_threshold",
    "hidden_units",
    "layers",
    "learning_rate",
    "dropout",
    "l2",
];

/// Candidate values per field; the grid is their Cartesian product, with the
/// first field varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub normalization: Vec<NormalizationKind>,
    pub feature_families: Vec<FeatureFamilies>,
    pub sparseness_threshold: Vec<usize>,
    pub hidden_units: Vec<usize>,
    pub layers: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub dropout: Vec<bool>,
    pub l2: Vec<f64>,
}

impl SearchSpace {
    /// The full grid (18,144 configurations).
    pub fn full() -> Self {
        SearchSpace {
            normalization: NormalizationKind::ALL.to_vec(),
            feature_families: FeatureFamilies::all_nonempty(),
            sparseness_threshold: vec![5, 10, 20],
            hidden_units: vec![1024, 4096, 8192, 16356],
            layers: vec![1, 2, 3],
            learning_rate: vec![0.01, 0.05, 0.1],
            dropout: vec![false, true],
            l2: vec![0.0, 1e-6, 1e-5, 1e-4],
        }
    }

    /// Same structure with hidden widths {32, 64}.
    pub fn desk() -> Self {
        SearchSpace { hidden_units: vec![32, 64], ..Self::full() }
    }

    fn radices(&self) -> [usize; 8] {
        [
            self.normalization.len(),
            self.feature_families.len(),
            self.sparseness_threshold.len(),
            self.hidden_units.len(),
            self.layers.len(),
            self.learning_rate.len(),
            self.dropout.len(),
            self.l2.len(),
        ]
    }

    pub fn cardinality(&self) -> usize {
        self.radices().iter().product()
    }

    /// The configuration at position `index` of [`enumerate_grid`].
    pub fn config_at(&self, index: usize) -> HyperConfig {
        let radices = self.radices();
        let mut digits = [0usize; 8];
        let mut rest = index;
        for f in (0..8).rev() {
            digits[f] = rest % radices[f];
            rest /= radices[f];
        }
        HyperConfig {
            normalization: self.normalization[digits[0]],
            feature_families: self.feature_families[digits[1]],
            sparseness_threshold: self.sparseness_threshold[digits[2]],
            hidden_units: self.hidden_units[digits[3]],
            layers: self.layers[digits[4]],
            learning_rate: self.learning_rate[digits[5]],
            dropout: self.dropout[digits[6]],
            l2: self.l2[digits[7]],
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        match self.radices().iter().position(|&r| r == 0) {
            Some(f) => Err(SearchError::EmptyField(FIELD_NAMES[f])),
            None => Ok(()),
        }
    }

    /// Parse `key = v1, v2, ...` lines over `base`; keys not mentioned keep
    /// their base values. `feature_families = all-subsets` expands to the
    /// seven nonempty subsets; otherwise list subsets like `descriptors+ecfp4`.
    /// Dropout values are `on`/`off`. `#` starts a comment.
    pub fn parse(text: &str, base: SearchSpace) -> Result<Self, SearchError> {
        let mut space = base;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| SearchError::SpaceFile { line: n + 1, message };
            let (key, values) = line.split_once('=').ok_or_else(|| bad("expected `key = values`".into()))?;
            let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                return Err(bad(format!("no values for `{}`", key.trim())));
            }
            fn all<T, E: fmt::Display>(vals: &[&str], f: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, String> {
                vals.iter().map(|v| f(v).map_err(|e| format!("`{v}`: {e}"))).collect()
            }
            match key.trim() {
                "normalization" => space.normalization = all(&values, str::parse).map_err(bad)?,
                "feature_families" => {
                    space.feature_families = if values == ["all-subsets"] {
                        FeatureFamilies::all_nonempty()
                    } else {
                        let fams: Vec<FeatureFamilies> = all(&values, str::parse).map_err(bad)?;
                        if fams.iter().any(|f| f.is_empty()) {
                            return Err(bad("empty feature family set".into()));
                        }
                        fams
                    }
                }
                "sparseness_threshold" => space.sparseness_threshold = all(&values, str::parse::<usize>).map_err(bad)?,
                "hidden_units" => space.hidden_units = all(&values, str::parse::<usize>).map_err(bad)?,
                "layers" => space.layers = all(&values, str::parse::<usize>).map_err(bad)?,
                "learning_rate" => space.learning_rate = all(&values, str::parse::<f64>).map_err(bad)?,
                "l2" => space.l2 = all(&values, str::parse::<f64>).map_err(bad)?,
                "dropout" => {
                    space.dropout = all(&values, |v| match v {
                        "on" | "true" => Ok(true),
                        "off" | "false" => Ok(false),
                        _ => Err("expected on or off"),
                    })
                    .map_err(bad)?
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(space)
    }
}

/// Every configuration of `space`, first field slowest.
pub fn enumerate_grid(space: &SearchSpace) -> Vec<HyperConfig> {
    (0..space.cardinality()).map(|i| space.config_at(i)).collect()
}

/// `m` distinct grid positions drawn by `seed`, returned in enumeration order.
pub fn sample_grid(space: &SearchSpace, m: usize, seed: u64) -> Result<Vec<(usize, HyperConfig)>, SearchError> {
    let n = space.cardinality();
    if m > n {
        return Err(SearchError::SampleTooLarge { requested: m, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| (i, space.config_at(i))).collect())
}

/// Training settings shared by every configuration of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            batch_size: mtnn::DEFAULT_BATCH,
            max_epochs: mtnn::DEFAULT_MAX_EPOCHS,
            patience: Some(mtnn::DEFAULT_PATIENCE),
            seed: 0,
        }
    }
}

impl SearchSettings {
    pub fn desk() -> Self {
        SearchSettings { max_epochs: 30, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Per task; `None` where the held-out fold lacks a class or training failed.
    pub aucs: Vec<Option<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEvaluation {
    /// Position in the enumeration; ties in selection go to the smaller index.
    pub index: usize,
    pub config: HyperConfig,
    pub folds: Vec<FoldOutcome>,
}

impl ConfigEvaluation {
    /// Mean over the defined fold AUCs of `task`.
    pub fn mean_auc(&self, task: usize) -> Option<f64> {
        let v: Vec<f64> = self.folds.iter().filter_map(|f| f.aucs.get(task).copied().flatten()).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Train on every fold but `fold` (preprocessing fitted on those rows only)
/// and score the held-out fold. Early stopping monitors the held-out fold.
pub fn evaluate_fold<F: Scalar>(
    config: &HyperConfig,
    table: &CompoundTable,
    folds: &FoldAssignment,
    fold: usize,
    settings: &SearchSettings,
    seed: u64,
) -> FoldOutcome {
    let n_tasks = table.labels.n_tasks();
    let fail = |e: String| FoldOutcome { fold, aucs: vec![None; n_tasks], error: Some(e) };
    let train_rows = folds.train_rows(fold);
    let eval_rows = folds.eval_rows(fold);
    let pipeline = match FeaturePipeline::fit(table, &train_rows, config.feature_config()) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let features = match pipeline.transform::<F>(table, &table.all_rows()) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string()),
    };
    let train_config = config.train_config(settings, seed.wrapping_add(fold as u64));
    let result = mtnn::train(&features, &table.labels, &train_rows, &eval_rows, &config.net_spec(), &train_config)
        .and_then(|(net, _)| mtnn::predict_rows(&net, &features, &eval_rows));
    match result {
        Ok(probs) => FoldOutcome {
            fold,
            aucs: task_scores(&probs, &table.labels, &eval_rows).into_iter().map(|s| s.auc).collect(),
            error: None,
        },
        Err(e) => fail(e.to_string()),
    }
}

/// Per-fold, per-task AUCs of one configuration. Fold `f` trains with seed
/// `seed + f`.
pub fn evaluate_config<F: Scalar>(
    config: &HyperConfig,
    table: &CompoundTable,
    folds: &FoldAssignment,
    settings: &SearchSettings,
    seed: u64,
) -> Vec<FoldOutcome> {
    (0..folds.k).into_par_iter().map(|f| evaluate_fold::<F>(config, table, folds, f, settings, seed)).collect()
}

/// Evaluate `configs` (grid index, config) on every fold, in parallel over
/// (config, fold) pairs. Output order follows `configs`.
pub fn run_search<F: Scalar>(
    configs: &[(usize, HyperConfig)],
    table: &CompoundTable,
    folds: &FoldAssignment,
    settings: &SearchSettings,
) -> Vec<ConfigEvaluation> {
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..folds.k).map(move |f| (c, f))).collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(c, f)| evaluate_fold::<F>(&configs[c].1, table, folds, f, settings, settings.seed))
        .collect();
    let mut evals: Vec<ConfigEvaluation> = configs
        .iter()
        .map(|(index, config)| ConfigEvaluation { index: *index, config: config.clone(), folds: Vec::new() })
        .collect();
    for (&(c, _), outcome) in jobs.iter().zip(outcomes) {
        evals[c].folds.push(outcome);
    }
    evals
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSelection {
    pub task: String,
    /// `None` when no configuration produced a defined AUC for the task.
    pub best_index: Option<usize>,
    pub best_config: Option<HyperConfig>,
    pub mean_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub tasks: Vec<TaskSelection>,
    pub evaluations: Vec<ConfigEvaluation>,
}

/// Per task, the configuration with the highest mean fold AUC; exact ties go
/// to the smaller enumeration index regardless of the order of `evaluations`.
pub fn select_per_task(evaluations: &[ConfigEvaluation], task_names: &[String]) -> Result<SearchResult, SearchError> {
    if evaluations.is_empty() {
        return Err(SearchError::NoConfigs);
    }
    let mut sorted = evaluations.to_vec();
    sorted.sort_by_key(|e| e.index);
    let tasks = task_names
        .iter()
        .enumerate()
        .map(|(t, name)| {
            let mut best: Option<(&ConfigEvaluation, f64)> = None;
            for e in &sorted {
                if let Some(m) = e.mean_auc(t) {
                    if best.is_none_or(|(_, b)| m > b) {
                        best = Some((e, m));
                    }
                }
            }
            TaskSelection {
                task: name.clone(),
                best_index: best.map(|(e, _)| e.index),
                best_config: best.map(|(e, _)| e.config.clone()),
                mean_auc: best.map(|(_, m)| m),
            }
        })
        .collect();
    Ok(SearchResult { tasks, evaluations: sorted })
}

impl SearchResult {
    /// Long format: config index, config fields, fold, task, auc (`NA` when missing).
    pub fn results_tsv(&self, task_names: &[String]) -> String {
        let mut out = format!("config\t{}\tfold\ttask\tauc\n", FIELD_NAMES.join("\t"));
        for e in &self.evaluations {
            let fields = e.config.fields().join("\t");
            for f in &e.folds {
                for (t, auc) in f.aucs.iter().enumerate() {
                    let auc = auc.map_or("NA".to_string(), |a| format!("{a:.6}"));
                    out.push_str(&format!("{}\t{fields}\t{}\t{}\t{auc}\n", e.index, f.fold, task_names[t]));
                }
            }
        }
        out
    }

    /// One line per task: task, chosen config index and fields, mean AUC.
    pub fn selection_tsv(&self) -> String {
        let mut out = format!("task\tconfig\t{}\tmean_auc\n", FIELD_NAMES.join("\t"));
        for s in &self.tasks {
            match (&s.best_index, &s.best_config, s.mean_auc) {
                (Some(i), Some(c), Some(m)) => {
                    out.push_str(&format!("{}\t{i}\t{}\t{m:.6}\n", s.task, c.fields().join("\t")));
                }
                _ => {
                    out.push_str(&format!("{}\tNA{}\tNA\n", s.task, "\tNA".repeat(FIELD_NAMES.len())));
                }
            }
        }
        out
    }
}
