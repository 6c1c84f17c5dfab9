//! Synthetic demonstration data: small substituted ring and chain
//! molecules with four tasks driven by one latent score.
//!
//! Every compound gets a score `z` that sums fixed weights of its core and
//! substituents. Task `k` is active when `z + noise_k` exceeds the task's
//! threshold, so all tasks share most of their signal. Training labels are
//! then dropped at random: the dense tasks keep `dense_fraction` of their
//! labels, the last (sparse) task keeps `sparse_fraction`. Leaderboard
//! compounds keep every label.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_compound_file, CompoundRecord, FeatureConfig, FeatureFamilies, NormalizationKind};
use crate::evaluation::ArmSpec;
use crate::mtnn::{NetSpec, TrainConfig};
use crate::smiles::parse_smiles;

/// (ring or chain pieces, weight); substituent slots sit between pieces.
const CORES: [(&[&str; 4], f64); 4] = [
    (&["c1", "cc", "cc", "c1"], 0.3),
    (&["c1", "nc", "cc", "c1"], 0.5),
    (&["C1", "CC", "CC", "C1"], -0.4),
    (&["C", "CC", "CC", "C"], -0.6),
];

/// (fragment, weight); the empty fragment leaves the slot unsubstituted.
const SUBSTITUENTS: [(&str, f64); 14] = [
    ("", 0.0),
    ("N(=O)=O", 1.5),
    ("N", 0.8),
    ("Cl", 0.6),
    ("Br", 1.0),
    ("O", -0.6),
    ("C", 0.0),
    ("C(=O)O", -1.2),
    ("OC", -0.2),
    ("C#N", 0.4),
    ("S", 0.9),
    ("C=O", 0.7),
    ("CC", -0.3),
    ("NC(=O)C", -0.8),
];

/// Reference patterns shipped with the demo: each substituent on benzene.
const REFERENCES: [(&str, &str); 8] = [
    ("nitroarene", "c1ccccc1N(=O)=O"),
    ("aniline", "c1ccccc1N"),
    ("chloroarene", "c1ccccc1Cl"),
    ("bromoarene", "c1ccccc1Br"),
    ("thiophenol", "c1ccccc1S"),
    ("benzaldehyde", "c1ccccc1C=O"),
    ("benzoic_acid", "c1ccccc1C(=O)O"),
    ("phenol", "c1ccccc1O"),
];

pub const TASK_NAMES: [&str; 4] = ["A", "B", "C", "D"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n_train: usize,
    pub n_leaderboard: usize,
    pub dense_fraction: f64,
    pub sparse_fraction: f64,
    /// Standard deviation of the per-task noise added to the latent score.
    pub task_noise: f64,
    /// Active fraction of each task before label dropout.
    pub active_rates: [f64; 4],
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            n_train: 300,
            n_leaderboard: 100,
            dense_fraction: 0.8,
            sparse_fraction: 0.05,
            task_noise: 0.35,
            active_rates: [0.35, 0.35, 0.35, 0.35],
            seed: 2014,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoData {
    pub task_names: Vec<String>,
    pub train: Vec<CompoundRecord>,
    pub leaderboard: Vec<CompoundRecord>,
    /// Training labels before dropout, for diagnostics.
    pub train_full_labels: Vec<Vec<bool>>,
    pub references_text: String,
}

impl DemoData {
    pub fn train_file(&self) -> String {
        write_compound_file(&self.task_names, &self.train)
    }

    pub fn leaderboard_file(&self) -> String {
        write_compound_file(&self.task_names, &self.leaderboard)
    }
}

fn draw_molecules(n: usize, seen: &mut HashSet<(usize, [usize; 3])>, rng: &mut ChaCha8Rng) -> Vec<(String, f64)> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let core = rng.random_range(0..CORES.len());
        let mut subs = [0usize; 3];
        for s in &mut subs {
            // a quarter of the slots stay empty
            *s = if rng.random::<f64>() < 0.25 { 0 } else { rng.random_range(1..SUBSTITUENTS.len()) };
        }
        let mut key = subs;
        key.sort_unstable();
        if key == [0, 0, 0] || !seen.insert((core, key)) {
            continue;
        }
        let (pieces, core_w) = CORES[core];
        let mut smiles = String::new();
        let mut z = core_w;
        for (k, piece) in pieces.iter().enumerate() {
            smiles.push_str(piece);
            if k < 3 {
                let (frag, w) = SUBSTITUENTS[subs[k]];
                if !frag.is_empty() {
                    smiles.push('(');
                    smiles.push_str(frag);
                    smiles.push(')');
                }
                z += w;
            }
        }
        out.push((smiles, z));
    }
    out
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((s.len() as f64 - 1.0) * q).round() as usize;
    s[k]
}

/// Deterministic in `config`.
pub fn generate_demo(config: &DemoConfig) -> DemoData {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = HashSet::new();
    let n = config.n_train + config.n_leaderboard;
    let mols = draw_molecules(n, &mut seen, &mut rng);
    let noise = Normal::new(0.0, config.task_noise).expect("finite noise");
    let n_tasks = TASK_NAMES.len();
    let scores: Vec<Vec<f64>> =
        (0..n_tasks).map(|_| mols.iter().map(|(_, z)| z + noise.sample(&mut rng)).collect()).collect();
    let thresholds: Vec<f64> =
        (0..n_tasks).map(|t| quantile(&scores[t], 1.0 - config.active_rates[t])).collect();
    let full: Vec<Vec<bool>> = (0..n).map(|i| (0..n_tasks).map(|t| scores[t][i] > thresholds[t]).collect()).collect();

    let mut train_labels: Vec<Vec<Option<bool>>> = full[..config.n_train]
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(t, &y)| (t + 1 == n_tasks || rng.random::<f64>() < config.dense_fraction).then_some(y))
                .collect()
        })
        .collect();
    // the sparse task keeps an exact count of labels with both classes present
    let sparse = n_tasks - 1;
    let keep = ((config.n_train as f64 * config.sparse_fraction).round() as usize).max(4).min(config.n_train);
    let mut rows: Vec<usize> = (0..config.n_train).collect();
    loop {
        rows.shuffle(&mut rng);
        let pos = rows[..keep].iter().filter(|&&i| full[i][sparse]).count();
        if pos >= 2 && keep - pos >= 2 {
            break;
        }
    }
    let kept: HashSet<usize> = rows[..keep].iter().copied().collect();
    for (i, row) in train_labels.iter_mut().enumerate() {
        if !kept.contains(&i) {
            row[sparse] = None;
        }
    }

    let record = |id: String, smiles: &str, labels: Vec<Option<bool>>| CompoundRecord {
        id,
        graph: parse_smiles(smiles).expect("generated SMILES parse"),
        labels,
    };
    let train = (0..config.n_train)
        .map(|i| record(format!("demo{:04}", i + 1), &mols[i].0, train_labels[i].clone()))
        .collect();
    let leaderboard = (config.n_train..n)
        .map(|i| {
            let labels = full[i].iter().map(|&y| Some(y)).collect();
            record(format!("lb{:04}", i - config.n_train + 1), &mols[i].0, labels)
        })
        .collect();
    let references_text = REFERENCES.iter().map(|(id, smi)| format!("{id}\t{smi}\n")).collect();
    DemoData {
        task_names: TASK_NAMES.iter().map(|s| s.to_string()).collect(),
        train,
        leaderboard,
        train_full_labels: full[..config.n_train].to_vec(),
        references_text,
    }
}

/// Restarts per arm in the single-task versus multi-task comparison.
pub const COMPARISON_RESTARTS: usize = 5;

/// Preprocessing used with the demo data: ECFP counts seen in at least
/// three training compounds, tanh-squashed.
pub fn demo_features() -> FeatureConfig {
    FeatureConfig {
        families: FeatureFamilies::ECFP_ONLY,
        sparseness_threshold: 3,
        normalization: NormalizationKind::Tanh,
    }
}

/// Shared arm settings for the comparison: one 64-unit layer and a fixed
/// budget of 100 epochs (no early stopping, so the leaderboard plays no
/// part in training).
pub fn demo_arm(seed: u64) -> ArmSpec {
    ArmSpec {
        net: NetSpec::new(&[64]),
        config: TrainConfig {
            learning_rate: 0.05,
            l2: 0.0,
            dropout: None,
            batch_size: 32,
            max_epochs: 100,
            patience: None,
            seed,
        },
    }
}
