//! Acceptance suite. Each criterion runs under `catch_unwind`, is timed
//! against its budget and prints one PASS/FAIL line. The process exits
//! nonzero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use deeptox::dataset::{
    ColumnInfo, CompoundRecord, CompoundTable, FeatureConfig, FeatureFamilies, FeaturePipeline, FeatureSource,
    LabelMatrix, NormalizationKind, SparseFeatureMatrix,
};
use deeptox::demo::{demo_arm, demo_features, generate_demo, DemoConfig, COMPARISON_RESTARTS};
use deeptox::evaluation::{auc, compare_st_mt, dataset_stats, mann_whitney_two_sided, mean_auc, task_scores};
use deeptox::fingerprints::{ecfp, ecfp_smiles, tanimoto, ReferenceSet};
use deeptox::folds::{cluster_compounds, make_folds, DEFAULT_FOLDS, DEFAULT_MIN_TASKS, DEFAULT_THRESHOLD};
use deeptox::hypersearch::{enumerate_grid, sample_grid, SearchSpace};
use deeptox::interpret::{correlate_units, hidden_activations, pattern_presence, DEFAULT_PRESENCE_THRESHOLD};
use deeptox::mtnn::{
    backward, forward, init_network, masked_loss, predict_rows, train, train_from, Dropout, ForwardMode, NetSpec,
    Network, TrainConfig, TrainHistory,
};
use deeptox::smiles::parse_smiles;
use ndarray::{s, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1, 2

struct Instance {
    net: Network<f64>,
    x: Array2<f64>,
    y: Array2<f64>,
    m: Array2<f64>,
    dropout: Option<Dropout>,
}

fn instance(seed: u64, layers: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=5);
    let d = rng.random_range(2..=6);
    let mut dims = vec![d];
    for _ in 0..layers {
        dims.push(rng.random_range(2..=6));
    }
    dims.push(3);
    let mut net: Network<f64> = init_network(&dims, seed).unwrap();
    for b in net.biases_mut() {
        b.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.5..1.5));
    let y = Array2::from_shape_simple_fn((n, 3), || f64::from(u8::from(rng.random_bool(0.5))));
    let mut m = Array2::from_shape_simple_fn((n, 3), || f64::from(u8::from(rng.random_bool(0.5))));
    m[[0, 0]] = 1.0;
    let dropout = (seed % 2 == 1).then(Dropout::default);
    Instance { net, x, y, m, dropout }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Masked cross-entropy written from the output pre-activations.
fn loss_at(inst: &Instance, net: &Network<f64>, mask_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let acts = forward(net, &inst.x, ForwardMode::Train { dropout: inst.dropout, rng: &mut rng }).unwrap();
    let z = acts.pre.last().unwrap();
    let (mut total, mut count) = (0.0, 0.0);
    for ((z, y), m) in z.iter().zip(&inst.y).zip(&inst.m) {
        if *m == 1.0 {
            total += y * softplus(-z) + (1.0 - y) * softplus(*z);
            count += 1.0;
        }
    }
    total / count
}

fn gradient_error(inst: &Instance) -> f64 {
    const H: f64 = 1e-5;
    let mask_seed = 11;
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let acts = forward(&inst.net, &inst.x, ForwardMode::Train { dropout: inst.dropout, rng: &mut rng }).unwrap();
    let grads = backward(&inst.net, &acts, &inst.y, &inst.m).unwrap();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    let central = |plus: Network<f64>, minus: Network<f64>| {
        (loss_at(inst, &plus, mask_seed) - loss_at(inst, &minus, mask_seed)) / (2.0 * H)
    };
    let mut worst = 0.0f64;
    for l in 0..inst.net.weights().len() {
        let (rows, cols) = inst.net.weights()[l].dim();
        for i in 0..rows {
            for j in 0..cols {
                let (mut plus, mut minus) = (inst.net.clone(), inst.net.clone());
                plus.weights_mut()[l][[i, j]] += H;
                minus.weights_mut()[l][[i, j]] -= H;
                worst = worst.max(rel(grads.weights[l][[i, j]], central(plus, minus)));
            }
            let (mut plus, mut minus) = (inst.net.clone(), inst.net.clone());
            plus.biases_mut()[l][i] += H;
            minus.biases_mut()[l][i] -= H;
            worst = worst.max(rel(grads.biases[l][i], central(plus, minus)));
        }
    }
    worst
}

fn gradient_check() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let inst = instance(seed, 1 + seed as usize % 3);
        let err = gradient_error(&inst);
        ensure(err < 1e-5, || format!("instance {seed}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("20 instances, max relative error {worst:.2e}"))
}

fn dense_features(x: &Array2<f64>) -> SparseFeatureMatrix<f64> {
    let catalog = (0..x.ncols())
        .map(|j| ColumnInfo { source: FeatureSource::Descriptor, feature_id: j as u64, name: format!("f{j}") })
        .collect();
    SparseFeatureMatrix::from_dense(x, catalog)
}

/// Gaussian blobs; task t is the sign of feature t.
fn blobs(n: usize, seed: u64) -> (SparseFeatureMatrix<f64>, LabelMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 6));
    let mut rows = Vec::new();
    for i in 0..n {
        let a = rng.random_bool(0.5);
        let b = rng.random_bool(0.5);
        for j in 0..6 {
            x[[i, j]] = rng.random_range(-0.5..0.5);
        }
        x[[i, 0]] += if a { 1.5 } else { -1.5 };
        x[[i, 1]] += if b { 1.5 } else { -1.5 };
        rows.push(vec![Some(a), Some(b)]);
    }
    (dense_features(&x), LabelMatrix::from_rows(vec!["a".into(), "b".into()], rows).unwrap())
}

fn masked_semantics() -> Result<String, String> {
    for seed in 0..20u64 {
        let inst = instance(seed, 1 + seed as usize % 3);
        let acts = forward(&inst.net, &inst.x, ForwardMode::Inference).unwrap();
        let g = backward(&inst.net, &acts, &inst.y, &inst.m).unwrap();
        let loss = masked_loss(&acts.output, &inst.y, &inst.m);
        let (n, extra) = (inst.x.nrows(), 4);
        let mut x2 = Array2::from_elem((n + extra, inst.x.ncols()), 0.7);
        x2.slice_mut(s![extra.., ..]).assign(&inst.x);
        let mut y2 = Array2::ones((n + extra, 3));
        y2.slice_mut(s![extra.., ..]).assign(&inst.y);
        let mut m2 = Array2::zeros((n + extra, 3));
        m2.slice_mut(s![extra.., ..]).assign(&inst.m);
        let acts2 = forward(&inst.net, &x2, ForwardMode::Inference).unwrap();
        let g2 = backward(&inst.net, &acts2, &y2, &m2).unwrap();
        let loss2 = masked_loss(&acts2.output, &y2, &m2);
        ensure(loss.value.to_bits() == loss2.value.to_bits(), || format!("instance {seed}: loss moved"))?;
        ensure(g == g2, || format!("instance {seed}: gradients moved"))?;
    }

    let (x, full) = blobs(120, 4);
    let mut masked = full.clone();
    for i in 0..masked.n_rows() {
        masked.set(i, 1, None);
    }
    let only_a = full.select_tasks(&[0]);
    let config = TrainConfig {
        learning_rate: 0.1,
        batch_size: 16,
        max_epochs: 12,
        dropout: Some(Dropout::default()),
        l2: 1e-4,
        patience: None,
        seed: 21,
    };
    let train_rows: Vec<usize> = (0..90).collect();
    let valid_rows: Vec<usize> = (90..120).collect();
    let (mt_net, mt_hist) =
        train(&x, &masked, &train_rows, &valid_rows, &NetSpec::new(&[8, 8]), &config).map_err(|e| e.to_string())?;
    let st_init = init_network::<f64>(&[6, 8, 8, 2], 21).unwrap().select_outputs(&[0]);
    let (st_net, st_hist) =
        train_from(st_init, &x, &only_a, &train_rows, &valid_rows, &config).map_err(|e| e.to_string())?;
    let bits = |h: &TrainHistory| h.losses().iter().map(|l| l.to_bits()).collect::<Vec<_>>();
    ensure(bits(&mt_hist) == bits(&st_hist), || "loss sequences differ".into())?;
    ensure(mt_net.select_outputs(&[0]) == st_net, || "final weights differ".into())?;
    Ok(format!("20 padded batches exact, {} epoch losses bit-identical", mt_hist.records.len()))
}

// ---------------------------------------------------------------- 3

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    num / pairs
}

/// Exact two-sided p over every way of choosing sample `a` from the pool.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|&x| {
            let less = pooled.iter().filter(|&&y| y < x).count() as f64;
            let equal = pooled.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let na = a.len();
    let expected = na as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..na].iter().sum::<f64>() - expected).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let s: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        total += 1;
        if (s - expected).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn auc_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = rng.random_range(2..=60);
        let levels = rng.random_range(2..=n.max(2));
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let err = (auc(&scores, &labels).map_err(|e| e.to_string())? - brute_auc(&scores, &labels)).abs();
        ensure(err <= 1e-12, || format!("AUC instance {k}: error {err:e}"))?;
        worst = worst.max(err);
    }
    let mut cases = 0;
    let mut worst_p = 0.0f64;
    for na in 1..12usize {
        for nb in 1..=(12 - na) {
            for rep in 0..4 {
                let levels = if rep == 0 { 1000 } else { rng.random_range(2..8) };
                let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..levels) as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..levels) as f64).collect();
                if a.iter().chain(&b).all(|&x| x == a[0]) {
                    continue;
                }
                let p = mann_whitney_two_sided(&a, &b).map_err(|e| e.to_string())?;
                let err = (p - enumerated_p(&a, &b)).abs();
                ensure(err < 1e-12, || format!("p for {a:?} vs {b:?}: error {err:e}"))?;
                worst_p = worst_p.max(err);
                cases += 1;
            }
        }
    }
    Ok(format!("1000 AUC instances (max error {worst:.1e}), {cases} exact p-values (max error {worst_p:.1e})"))
}

// ---------------------------------------------------------------- 4

/// Every entry has at least four heavy atoms, so ten distinct orders exist.
const CORPUS: [&str; 20] = [
    "CCCO",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "c1ccc2ccccc2c1",
    "C1CCCCC1",
    "OC(=O)CC(O)(CC(=O)O)C(=O)O",
    "c1ccncc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "Clc1ccc(Cl)cc1",
    "CCN(CC)CC",
    "O=C1NC(=O)c2ccccc12",
    "C#CCO",
    "CC(=O)Nc1ccc(O)cc1",
    "CC[NH3+].[Cl-]",
    "C[N+](C)(C)C",
    "OC1C(O)C(O)C(O)C(O)C1O",
    "c1ccc(cc1)-c1ccccc1",
    "CS(=O)(=O)N",
    "BrCC(Br)CBr",
    "C12CC3CC(C1)CC(C3)C2",
];

fn fingerprint_invariance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for smi in CORPUS {
        let g = parse_smiles(smi).map_err(|e| format!("{smi}: {e}"))?;
        let reference = ecfp(&g, 2).unwrap();
        let mut seen = HashSet::new();
        let mut order: Vec<usize> = (0..g.atom_count()).collect();
        while seen.len() < 10 {
            order.shuffle(&mut rng);
            if !seen.insert(order.clone()) {
                continue;
            }
            let p = g.permuted(&order);
            ensure(ecfp(&p, 2).unwrap() == reference, || format!("{smi}: permuted graph differs"))?;
            let text = p.to_smiles();
            let reparsed = parse_smiles(&text).map_err(|e| format!("{text}: {e}"))?;
            ensure(ecfp(&reparsed, 2).unwrap() == reference, || format!("{smi}: {text} differs"))?;
            checked += 1;
        }
    }
    for single in ["C", "O", "[Na+]", "[Cl-]", "N"] {
        let fp = ecfp_smiles(single, 2).map_err(|e| e.to_string())?;
        ensure(fp.len() == 1, || format!("{single}: {} features", fp.len()))?;
    }
    let methane = ecfp_smiles("C", 2).unwrap();
    ensure(methane.iter().collect::<Vec<_>>() == [(16055175078953659788, 1)], || format!("{methane:?}"))?;
    Ok(format!("{checked} permutations of 20 molecules, single atoms give one feature"))
}

// ---------------------------------------------------------------- 5

const RINGS: [[&str; 4]; 5] = [
    ["c1", "cc", "cc", "c1"],
    ["c1", "nc", "cc", "c1"],
    ["C1", "CC", "CC", "C1"],
    ["c1", "cn", "cc", "c1"],
    ["C1", "CN", "CC", "C1"],
];
const GROUPS: [&str; 12] =
    ["N(=O)=O", "N", "Cl", "Br", "O", "C", "C(=O)O", "OC", "C#N", "S", "C=O", "NC(=O)C"];
const SPECTATORS: [&str; 7] = [".[Na+]", ".[K+]", ".[Cl-]", ".O", ".[Li+]", ".[Br-]", ".[Ca+2]"];

fn substituted_ring(rng: &mut ChaCha8Rng) -> String {
    let ring = RINGS[rng.random_range(0..RINGS.len())];
    let mut smi = String::new();
    for (k, piece) in ring.iter().enumerate() {
        smi.push_str(piece);
        if k < 3 {
            smi.push('(');
            smi.push_str(GROUPS[rng.random_range(0..GROUPS.len())]);
            smi.push(')');
        }
    }
    smi
}

/// Planted clusters of salt or solvate forms of one parent, every member
/// at Tanimoto >= 0.9 to every other. Returns (smiles, planted cluster).
fn planted_dataset(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<Option<usize>>) {
    let mut parents = BTreeSet::new();
    while parents.len() < 60 {
        parents.insert(substituted_ring(rng));
    }
    let parents: Vec<String> = parents.into_iter().collect();
    let (mut smiles, mut planted) = (Vec::new(), Vec::new());
    for (c, parent) in parents.iter().enumerate() {
        if c % 3 == 0 {
            smiles.push(parent.clone());
            planted.push(None);
            continue;
        }
        let mut members = vec![parent.clone()];
        let mut fps = vec![ecfp_smiles(parent, 2).unwrap()];
        let count = rng.random_range(1..=4);
        for spec in SPECTATORS.choose_multiple(rng, count) {
            let cand = format!("{parent}{spec}");
            let fp = ecfp_smiles(&cand, 2).unwrap();
            if fps.iter().all(|f| tanimoto(f, &fp) >= 0.9) {
                members.push(cand);
                fps.push(fp);
            }
        }
        if members.len() < 2 {
            smiles.push(parent.clone());
            planted.push(None);
            continue;
        }
        for m in members {
            smiles.push(m);
            planted.push(Some(c));
        }
    }
    (smiles, planted)
}

fn fold_leakage() -> Result<String, String> {
    let n_tasks = 12;
    let names: Vec<String> = (0..n_tasks).map(|t| format!("t{t}")).collect();
    let (mut pairs, mut sparse_checked, mut shared_eval) = (0usize, 0usize, 0usize);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (smiles, planted) = planted_dataset(&mut rng);
        let mut order: Vec<usize> = (0..smiles.len()).collect();
        order.shuffle(&mut rng);
        let records: Vec<CompoundRecord> = order
            .iter()
            .map(|&i| {
                let labeled = if rng.random_bool(0.3) { rng.random_range(0..8) } else { rng.random_range(8..=n_tasks) };
                let mut tasks: Vec<usize> = (0..n_tasks).collect();
                tasks.shuffle(&mut rng);
                let mut labels = vec![None; n_tasks];
                for &t in &tasks[..labeled] {
                    labels[t] = Some(rng.random_bool(0.4));
                }
                CompoundRecord { id: format!("s{i}"), graph: parse_smiles(&smiles[i]).unwrap(), labels }
            })
            .collect();
        let planted: Vec<Option<usize>> = order.iter().map(|&i| planted[i]).collect();
        let table = CompoundTable::build(&names, &records, &[], None).map_err(|e| e.to_string())?;
        let clusters = cluster_compounds(&table.ecfp, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
        let folds = make_folds(&clusters, &table.labels, DEFAULT_FOLDS, DEFAULT_MIN_TASKS).map_err(|e| e.to_string())?;
        let n = table.n_rows();
        let eval_sets: Vec<HashSet<usize>> = (0..folds.k).map(|f| folds.eval_rows(f).into_iter().collect()).collect();
        for i in 0..n {
            let holding = eval_sets.iter().filter(|s| s.contains(&i)).count();
            if table.labels.present_count(i) < DEFAULT_MIN_TASKS {
                sparse_checked += 1;
                ensure(folds.eval_assignment[i].is_none() && holding == 0, || {
                    format!("dataset {seed}: {} with {} tasks is evaluated", table.ids[i], table.labels.present_count(i))
                })?;
            }
            for j in i + 1..n {
                if planted[i].is_none() || planted[i] != planted[j] {
                    continue;
                }
                let sim = tanimoto(&table.ecfp[i], &table.ecfp[j]);
                ensure(sim >= 0.9, || format!("generator produced a pair at {sim}"))?;
                pairs += 1;
                if let (Some(a), Some(b)) = (folds.eval_assignment[i], folds.eval_assignment[j]) {
                    shared_eval += 1;
                    ensure(a == b, || format!("dataset {seed}: {} and {} split", table.ids[i], table.ids[j]))?;
                }
            }
        }
    }
    ensure(shared_eval > 0, || "no planted pair ever reached evaluation".into())?;
    Ok(format!(
        "10 datasets, {pairs} planted pairs ({shared_eval} both evaluated) never split, {sparse_checked} sparse compounds kept in training"
    ))
}

// ---------------------------------------------------------------- 6

fn multitask_benefit() -> Result<String, String> {
    let demo = generate_demo(&DemoConfig::default());
    let full = LabelMatrix::from_rows(
        demo.task_names.clone(),
        demo.train_full_labels.iter().map(|r| r.iter().map(|&y| Some(y)).collect()).collect(),
    )
    .unwrap();
    let stats = dataset_stats(&full);
    let corr: Vec<String> = (0..3).map(|t| format!("{:.2}", stats.correlation[3][t].unwrap_or(f64::NAN))).collect();
    let d_labels = demo.train.iter().filter(|r| r.labels[3].is_some()).count();

    let n_train = demo.train.len();
    let mut records = demo.train.clone();
    records.extend(demo.leaderboard.iter().cloned());
    let table = CompoundTable::build(&demo.task_names, &records, &[], None).map_err(|e| e.to_string())?;
    let train_rows: Vec<usize> = (0..n_train).collect();
    let eval_rows: Vec<usize> = (n_train..table.n_rows()).collect();
    let pipeline = FeaturePipeline::fit(&table, &train_rows, demo_features()).map_err(|e| e.to_string())?;
    let x = pipeline.transform::<f64>(&table, &table.all_rows()).map_err(|e| e.to_string())?;

    let d = 3;
    let mut significant = 0;
    let mut first = None;
    let mut lines = Vec::new();
    for rep in 0..10u64 {
        let arm = demo_arm(1000 * rep);
        let report = compare_st_mt(&x, &table.labels, &train_rows, &eval_rows, &arm, &arm, COMPARISON_RESTARTS)
            .map_err(|e| e.to_string())?;
        let task = &report.tasks[d];
        let (st, mt) = (task.mean_st.unwrap_or(f64::NAN), task.mean_mt.unwrap_or(f64::NAN));
        let p = task.p_value.unwrap_or(1.0);
        if mt > st && p < 0.05 {
            significant += 1;
        }
        first.get_or_insert((st, mt));
        lines.push(format!("rep {rep}: ST {st:.3} MT {mt:.3} p {p:.4}"));
    }
    let (st0, mt0) = first.unwrap();
    let detail = format!(
        "D has {d_labels}/{n_train} labels, corr with A-C [{}]; MT {mt0:.3} vs ST {st0:.3}; significant in {significant}/10",
        corr.join(", ")
    );
    ensure(mt0 > st0 && significant >= 8, || format!("{detail}\n    {}", lines.join("\n    ")))?;
    Ok(detail)
}

// ---------------------------------------------------------------- 7

fn training_sanity() -> Result<String, String> {
    let (x, labels) = blobs(400, 8);
    let train_rows: Vec<usize> = (0..300).collect();
    let held: Vec<usize> = (300..400).collect();
    let config = TrainConfig { learning_rate: 0.1, batch_size: 32, max_epochs: 50, patience: None, seed: 3, ..TrainConfig::default() };
    let (net, hist) = train(&x, &labels, &train_rows, &[], &NetSpec::new(&[32]), &config).map_err(|e| e.to_string())?;
    ensure(hist.records.len() <= 50, || format!("{} epochs", hist.records.len()))?;
    let probs = predict_rows(&net, &x, &held).map_err(|e| e.to_string())?;
    let mean = mean_auc(&task_scores(&probs, &labels, &held)).unwrap_or(0.0);
    ensure(mean > 0.95, || format!("held-out mean AUC {mean:.4}"))?;
    Ok(format!("held-out mean AUC {mean:.4} after {} epochs", hist.records.len()))
}

// ---------------------------------------------------------------- 8

const PLANTED: &str = "O=C(Nc1ccc(Cl)cc1)c1ccc(N(=O)=O)cc1";

fn interpretability() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut smiles = Vec::new();
    for i in 0..360 {
        if i % 3 == 0 {
            let mut s = PLANTED.to_string();
            let count = rng.random_range(0..=2);
            for spec in SPECTATORS.choose_multiple(&mut rng, count) {
                s.push_str(spec);
            }
            smiles.push(s);
        } else {
            smiles.push(substituted_ring(&mut rng));
        }
    }
    let refs = ReferenceSet::from_pairs(
        "patterns",
        [
            ("planted", PLANTED),
            ("nitroarene", "c1ccccc1N(=O)=O"),
            ("aniline", "c1ccccc1N"),
            ("phenol", "c1ccccc1O"),
            ("benzoic_acid", "c1ccccc1C(=O)O"),
        ],
    )
    .map_err(|e| e.to_string())?;
    let graphs: Vec<_> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
    let fps: Vec<_> = graphs.iter().map(|g| ecfp(g, 2).unwrap()).collect();
    let presence = pattern_presence(&fps, &refs, DEFAULT_PRESENCE_THRESHOLD);
    let records: Vec<CompoundRecord> = graphs
        .into_iter()
        .enumerate()
        .map(|(i, graph)| {
            let y = presence[[i, 0]] != rng.random_bool(0.1);
            CompoundRecord { id: format!("p{i}"), graph, labels: vec![Some(y)] }
        })
        .collect();
    let carriers = presence.column(0).iter().filter(|&&b| b).count();
    let table = CompoundTable::build(&["toxic".to_string()], &records, &[], None).map_err(|e| e.to_string())?;
    let rows = table.all_rows();
    let features = FeatureConfig {
        families: FeatureFamilies::ECFP_ONLY,
        sparseness_threshold: 3,
        normalization: NormalizationKind::Tanh,
    };
    let pipeline = FeaturePipeline::fit(&table, &rows, features).map_err(|e| e.to_string())?;
    let x = pipeline.transform::<f64>(&table, &rows).map_err(|e| e.to_string())?;
    let config = TrainConfig { learning_rate: 0.05, batch_size: 32, max_epochs: 40, patience: None, seed: 5, ..TrainConfig::default() };
    let (net, _) = train(&x, &table.labels, &rows, &[], &NetSpec::new(&[32]), &config).map_err(|e| e.to_string())?;
    let acts = hidden_activations(&net, &x, 1).map_err(|e| e.to_string())?;
    let ids: Vec<String> = refs.patterns.iter().map(|p| p.id.clone()).collect();
    let pairs = correlate_units(1, &acts, &presence, &ids, &table.ids).map_err(|e| e.to_string())?;
    let hit = pairs.iter().take(10).find(|c| c.pattern_id == "planted" && c.correlation.abs() > 0.5);
    match hit {
        Some(c) => Ok(format!(
            "{carriers}/{} carriers; unit {} r = {:.3} (q = {:.1e}) in top 10",
            rows.len(),
            c.unit,
            c.correlation,
            c.p_adjusted
        )),
        None => {
            let top: Vec<String> =
                pairs.iter().take(10).map(|c| format!("{}:{}:{:.2}", c.unit, c.pattern_id, c.correlation)).collect();
            Err(format!("no planted pair in top 10: {}", top.join(" ")))
        }
    }
}

// ---------------------------------------------------------------- 9

fn direct_count(space: &SearchSpace) -> usize {
    [
        space.normalization.len(),
        space.feature_families.len(),
        space.sparseness_threshold.len(),
        space.hidden_units.len(),
        space.layers.len(),
        space.learning_rate.len(),
        space.dropout.len(),
        space.l2.len(),
    ]
    .iter()
    .product()
}

fn grid_bookkeeping() -> Result<String, String> {
    let full = SearchSpace::full();
    let grid = enumerate_grid(&full);
    ensure(grid.len() == 18_144, || format!("full grid has {}", grid.len()))?;
    ensure(full.cardinality() == 18_144, || format!("cardinality {}", full.cardinality()))?;
    let distinct: HashSet<String> = grid.iter().map(|c| c.to_string()).collect();
    ensure(distinct.len() == 18_144, || format!("{} distinct configurations", distinct.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..50 {
        fn pick<T: Clone>(v: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
            let n = rng.random_range(1..=v.len());
            v.choose_multiple(rng, n).cloned().collect()
        }
        let space = SearchSpace {
            normalization: pick(&full.normalization, &mut rng),
            feature_families: pick(&full.feature_families, &mut rng),
            sparseness_threshold: pick(&full.sparseness_threshold, &mut rng),
            hidden_units: pick(&full.hidden_units, &mut rng),
            layers: pick(&full.layers, &mut rng),
            learning_rate: pick(&full.learning_rate, &mut rng),
            dropout: pick(&full.dropout, &mut rng),
            l2: pick(&full.l2, &mut rng),
        };
        let want = direct_count(&space);
        let got = enumerate_grid(&space).len();
        ensure(got == want && space.cardinality() == want, || format!("space {k}: {got} vs {want}"))?;
    }
    let sample = sample_grid(&full, 25, 4).map_err(|e| e.to_string())?;
    let idx: HashSet<usize> = sample.iter().map(|(i, _)| *i).collect();
    ensure(idx.len() == 25 && sample.iter().all(|(i, c)| grid[*i] == *c), || "sample disagrees with grid".into())?;
    Ok("18144 configurations; 50 restricted spaces match their products".into())
}

// ---------------------------------------------------------------- 10

fn run_pipeline(dir: &Path, threads: &str) -> Result<(), String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let space = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/desk_space.txt");
    let steps: Vec<Vec<String>> = [
        vec!["generate-demo", "--output-dir", &p("")],
        vec!["featurize", "--input", &p("demo_train.tsv"), "--references", &p("demo_references.tsv"), "--families", "ecfp4+similarity+descriptors", "--output", &p("x.bin")],
        vec!["split", "--input", &p("demo_train.tsv"), "--min-tasks", "3", "--output", &p("folds.tsv")],
        vec!["train", "--input", &p("demo_train.tsv"), "--folds", &p("folds.tsv"), "--fold", "0", "--epochs", "15", "--patience", "5", "--dropout", "--hidden", "32,16", "--output", &p("model.bin"), "--history", &p("history.tsv")],
        vec!["predict", "--model", &p("model.bin"), "--input", &p("demo_leaderboard.tsv"), "--output", &p("pred.tsv")],
        vec!["eval", "--predictions", &p("pred.tsv"), "--labels", &p("demo_leaderboard.tsv"), "--output", &p("eval.tsv")],
        vec!["search", "--input", &p("demo_train.tsv"), "--references", &p("demo_references.tsv"), "--folds", &p("folds.tsv"), "--space", space, "--epochs", "5", "--output", &p("search.tsv"), "--selection", &p("selection.tsv")],
        vec!["compare", "--train", &p("demo_train.tsv"), "--eval", &p("demo_leaderboard.tsv"), "--restarts", "2", "--epochs", "10", "--output", &p("compare.tsv"), "--json", &p("compare.json")],
        vec!["interpret", "--model", &p("model.bin"), "--input", &p("demo_leaderboard.tsv"), "--patterns", &p("demo_references.tsv"), "--output", &p("interpret.tsv"), "--trend", &p("trend.tsv")],
        vec!["stats", "--input", &p("demo_train.tsv"), "--histogram", &p("hist.tsv"), "--correlation", &p("corr.tsv")],
    ]
    .iter()
    .map(|v| v.iter().map(|s| s.to_string()).collect())
    .collect();
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_deeptox"))
            .args(&args)
            .args(["--seed", "17"])
            .env("DEEPTOX_THREADS", threads)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)))?;
    }
    Ok(())
}

fn end_to_end_determinism() -> Result<String, String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path(), "1")?;
    run_pipeline(b.path(), "2")?;
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut bytes = 0;
    for name in &names {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(x == y, || format!("{name} differs"))?;
        bytes += x.len();
    }
    let n_b = std::fs::read_dir(b.path()).unwrap().count();
    ensure(n_b == names.len(), || format!("{} vs {n_b} files", names.len()))?;
    Ok(format!("{} files ({bytes} bytes) identical across runs with 1 and 2 threads", names.len()))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(u32, &str, u64, Check); 10] = [
        (1, "gradient correctness", 10, gradient_check),
        (2, "masked-loss semantics", 5, masked_semantics),
        (3, "AUC and Mann-Whitney oracles", 30, auc_oracles),
        (4, "fingerprint invariance", 5, fingerprint_invariance),
        (5, "fold leakage", 10, fold_leakage),
        (6, "multi-task benefit", 300, multitask_benefit),
        (7, "training sanity", 60, training_sanity),
        (8, "interpretability recovery", 120, interpretability),
        (9, "grid bookkeeping", 1, grid_bookkeeping),
        (10, "end-to-end determinism", 120, end_to_end_determinism),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let limit = Duration::from_secs(limit);
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the time budget")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} AC{id:<2} {name:<30} {:>7.2}s / {:>3}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
