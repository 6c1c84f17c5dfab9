use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use ndarray::Array2;

use deeptox::dataset::{
    merge_duplicates, parse_compound_file, parse_tox21_csv, write_compound_file, CompoundFile, CompoundTable, ExternalDescriptors,
    FeatureConfig, FeatureFamilies, FeaturePipeline, LabelMatrix, NormalizationKind,
};
use deeptox::demo::{generate_demo, DemoConfig};
use deeptox::evaluation::{compare_st_mt, dataset_stats, mean_auc, task_scores, ArmSpec};
use deeptox::fingerprints::{ecfp, ReferenceSet, ECFP4_RADIUS};
use deeptox::folds::{cluster_compounds, make_folds, FoldAssignment};
use deeptox::hypersearch::{enumerate_grid, run_search, sample_grid, select_per_task, SearchSettings, SearchSpace};
use deeptox::interpret::{
    adjust, correlate_units, hidden_activations, layer_trend, layer_trend_tsv, pattern_presence, report_tsv,
};
use deeptox::model::TrainedModel;
use deeptox::mtnn::{self, Dropout, NetSpec, TrainConfig};

use crate::{Cli, Command, FeatureArgs, NetArgs};

pub enum Failure {
    /// Bad invocation: missing inputs, invalid flag values.
    Usage(String),
    /// Inputs were read but are malformed or inconsistent.
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

/// Every input is checked for existence before anything is read.
fn require(paths: &[&Path]) -> Outcome {
    for p in paths {
        if !p.is_file() {
            return usage(format!("input file not found: {}", p.display()));
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Data)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Data)
}

/// Outputs are written only after every computation has succeeded.
fn write_all(outputs: &[(&Path, &[u8])]) -> Outcome {
    for (path, bytes) in outputs {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn compounds(path: &Path) -> Result<CompoundFile, Failure> {
    let text = read(path)?;
    Ok(parse_compound_file(&text).with_context(|| path.display().to_string())?)
}

fn references(paths: &[PathBuf]) -> Result<Vec<ReferenceSet>, Failure> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "refs".into());
            let text = read(p)?;
            Ok(ReferenceSet::parse(&name, &text).with_context(|| p.display().to_string())?)
        })
        .collect()
}

fn descriptors(path: Option<&PathBuf>) -> Result<Option<ExternalDescriptors>, Failure> {
    path.map(|p| {
        let text = read(p)?;
        Ok(ExternalDescriptors::parse(&text).with_context(|| p.display().to_string())?)
    })
    .transpose()
}

fn feature_config(args: &FeatureArgs) -> Result<FeatureConfig, Failure> {
    let families: FeatureFamilies = match args.families.parse() {
        Ok(f) => f,
        Err(e) => return usage(format!("--families: {e}")),
    };
    let normalization: NormalizationKind = match args.normalization.parse() {
        Ok(n) => n,
        Err(e) => return usage(format!("--normalization: {e}")),
    };
    if families.similarity && args.references.is_empty() {
        return usage("similarity features need at least one --references file");
    }
    Ok(FeatureConfig { families, sparseness_threshold: args.sparseness, normalization })
}

fn train_config(args: &NetArgs, seed: u64) -> Result<(NetSpec, TrainConfig), Failure> {
    if args.hidden.is_empty() || args.hidden.contains(&0) {
        return usage("--hidden needs positive widths");
    }
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        l2: args.l2,
        dropout: args.dropout.then(Dropout::default),
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        patience: args.patience,
        seed,
    };
    Ok((NetSpec::new(&args.hidden), config))
}

fn file_inputs(args: &FeatureArgs) -> Vec<&Path> {
    let mut v: Vec<&Path> = args.references.iter().map(PathBuf::as_path).collect();
    v.extend(args.descriptors.as_deref());
    v
}

fn table(file: &CompoundFile, refs: &[ReferenceSet], ext: Option<&ExternalDescriptors>) -> Result<CompoundTable, Failure> {
    Ok(CompoundTable::build(&file.task_names, &file.records, refs, ext).map_err(anyhow::Error::from)?)
}

fn folds_for(path: &Path, ids: &[String]) -> Result<FoldAssignment, Failure> {
    let text = read(path)?;
    let (fold_ids, folds) = FoldAssignment::parse(&text).with_context(|| path.display().to_string())?;
    if fold_ids != ids {
        return Err(Failure::Data(anyhow!(
            "{}: fold file lists {} compounds that do not match the {} compounds of the input (same ids, same order)",
            path.display(),
            fold_ids.len(),
            ids.len()
        )));
    }
    Ok(folds)
}

pub fn run(cli: Cli) -> Outcome {
    let seed = cli.seed;
    match cli.command {
        Command::Featurize { input, features, output, catalog } => {
            require(&[&[input.as_path()][..], &file_inputs(&features)].concat())?;
            let config = feature_config(&features)?;
            let file = compounds(&input)?;
            let refs = references(&features.references)?;
            let ext = descriptors(features.descriptors.as_ref())?;
            let t = table(&file, &refs, ext.as_ref())?;
            let pipeline = FeaturePipeline::fit(&t, &t.all_rows(), config).map_err(anyhow::Error::from)?;
            let matrix = pipeline.transform::<f32>(&t, &t.all_rows()).map_err(anyhow::Error::from)?;
            let catalog = catalog.unwrap_or_else(|| PathBuf::from(format!("{}.catalog.tsv", output.display())));
            write_all(&[(&output, &matrix.to_bytes()), (&catalog, matrix.catalog_text().as_bytes())])?;
            println!("rows\t{}", matrix.n_rows());
            println!("ecfp\t{}", pipeline.ecfp_ids.len());
            println!("similarity\t{}", pipeline.similarity_columns.len());
            println!("descriptors\t{}", pipeline.descriptor_names.len());
            Ok(())
        }
        Command::Split { input, threshold, folds, min_tasks, output } => {
            require(&[&input])?;
            let file = compounds(&input)?;
            let t = table(&file, &[], None)?;
            let clusters = cluster_compounds(&t.ecfp, threshold).map_err(anyhow::Error::from)?;
            let assignment = make_folds(&clusters, &t.labels, folds, min_tasks).map_err(anyhow::Error::from)?;
            let text = assignment.to_text(&t.ids).map_err(anyhow::Error::from)?;
            write_all(&[(&output, text.as_bytes())])?;
            let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
            println!("clusters\t{n_clusters}");
            for (f, n) in assignment.fold_sizes().iter().enumerate() {
                println!("fold {f}\t{n}");
            }
            Ok(())
        }
        Command::Train { input, features, net, folds, fold, output, history } => {
            let mut inputs = vec![input.as_path()];
            inputs.extend(file_inputs(&features));
            inputs.extend(folds.as_deref());
            require(&inputs)?;
            let config = feature_config(&features)?;
            let (spec, train_cfg) = train_config(&net, seed.unwrap_or(0))?;
            let file = compounds(&input)?;
            let refs = references(&features.references)?;
            let ext = descriptors(features.descriptors.as_ref())?;
            let t = table(&file, &refs, ext.as_ref())?;
            let (train_rows, valid_rows) = match (&folds, fold) {
                (Some(p), Some(f)) => {
                    let a = folds_for(p, &t.ids)?;
                    if f >= a.k {
                        return usage(format!("--fold {f} out of range for {} folds", a.k));
                    }
                    (a.train_rows(f), a.eval_rows(f))
                }
                _ => (t.all_rows(), Vec::new()),
            };
            let pipeline = FeaturePipeline::fit(&t, &train_rows, config).map_err(anyhow::Error::from)?;
            let x = pipeline.transform::<f64>(&t, &t.all_rows()).map_err(anyhow::Error::from)?;
            let (trained, hist) = mtnn::train(&x, &t.labels, &train_rows, &valid_rows, &spec, &train_cfg)
                .map_err(anyhow::Error::from)?;
            let model = TrainedModel { net: trained, task_names: file.task_names.clone(), pipeline: Some(pipeline) };
            let mut hist_text = String::from("epoch\ttrain_loss\tvalid_auc\n");
            for r in &hist.records {
                let v = r.valid_metric.map_or("NA".to_string(), |m| format!("{m:.6}"));
                hist_text.push_str(&format!("{}\t{:.6}\t{v}\n", r.epoch, r.train_loss));
            }
            let bytes = model.to_bytes();
            let mut outs: Vec<(&Path, &[u8])> = vec![(&output, &bytes)];
            if let Some(h) = &history {
                outs.push((h, hist_text.as_bytes()));
            }
            write_all(&outs)?;
            println!("epochs\t{}", hist.stopped_epoch);
            println!("best_epoch\t{}", hist.best_epoch);
            if let Some(m) = hist.best_metric {
                println!("valid_auc\t{m:.4}");
            }
            Ok(())
        }
        Command::Predict { model, input, descriptors: desc, output } => {
            let mut inputs = vec![model.as_path(), input.as_path()];
            inputs.extend(desc.as_deref());
            require(&inputs)?;
            let m = TrainedModel::<f64>::from_bytes(&read_bytes(&model)?)
                .with_context(|| model.display().to_string())?;
            let pipeline = m.pipeline.as_ref().ok_or_else(|| anyhow!("model has no feature pipeline"))?;
            let file = compounds(&input)?;
            let refs = pipeline.rebuild_references().map_err(anyhow::Error::from)?;
            let ext = descriptors(desc.as_ref())?;
            let t = table(&file, &refs, ext.as_ref())?;
            let x = pipeline.transform::<f64>(&t, &t.all_rows()).map_err(anyhow::Error::from)?;
            let probs = mtnn::predict(&m.net, &x).map_err(anyhow::Error::from)?;
            let mut out = String::from("compound_id\ttask\tprobability\n");
            for (i, id) in t.ids.iter().enumerate() {
                for (k, task) in m.task_names.iter().enumerate() {
                    out.push_str(&format!("{id}\t{task}\t{:.6}\n", probs[[i, k]]));
                }
            }
            write_all(&[(&output, out.as_bytes())])?;
            println!("predictions\t{}", t.n_rows() * m.task_names.len());
            Ok(())
        }
        Command::Eval { predictions, labels, output } => {
            require(&[&predictions, &labels])?;
            let file = compounds(&labels)?;
            let preds = parse_predictions(&read(&predictions)?).with_context(|| predictions.display().to_string())?;
            let report = eval_report(&file, &preds)?;
            match output {
                Some(p) => write_all(&[(&p, report.as_bytes())])?,
                None => print!("{report}"),
            }
            Ok(())
        }
        Command::Search {
            input,
            references: ref_paths,
            descriptors: desc,
            folds,
            space,
            preset,
            sample,
            batch_size,
            epochs,
            patience,
            output,
            selection,
        } => {
            let mut inputs = vec![input.as_path(), folds.as_path()];
            inputs.extend(ref_paths.iter().map(PathBuf::as_path));
            inputs.extend(desc.as_deref());
            inputs.extend(space.as_deref());
            require(&inputs)?;
            let base = match preset.as_str() {
                "desk" => SearchSpace::desk(),
                "full" => SearchSpace::full(),
                other => return usage(format!("--preset must be desk or full, got `{other}`")),
            };
            let space = match &space {
                Some(p) => SearchSpace::parse(&read(p)?, base).with_context(|| p.display().to_string())?,
                None => base,
            };
            space.validate().map_err(anyhow::Error::from)?;
            let seed = seed.unwrap_or(0);
            let configs: Vec<_> = match sample {
                Some(m) => sample_grid(&space, m, seed).map_err(anyhow::Error::from)?,
                None => enumerate_grid(&space).into_iter().enumerate().collect(),
            };
            let file = compounds(&input)?;
            let refs = references(&ref_paths)?;
            let ext = descriptors(desc.as_ref())?;
            let t = table(&file, &refs, ext.as_ref())?;
            let assignment = folds_for(&folds, &t.ids)?;
            let settings = SearchSettings { batch_size, max_epochs: epochs, patience, seed };
            let evals = run_search::<f64>(&configs, &t, &assignment, &settings);
            let result = select_per_task(&evals, &file.task_names).map_err(anyhow::Error::from)?;
            let results = result.results_tsv(&file.task_names);
            let chosen = result.selection_tsv();
            let mut outs: Vec<(&Path, &[u8])> = vec![(&output, results.as_bytes())];
            if let Some(s) = &selection {
                outs.push((s, chosen.as_bytes()));
            }
            write_all(&outs)?;
            let failed = evals.iter().flat_map(|e| &e.folds).filter(|f| f.error.is_some()).count();
            println!("configs\t{}", configs.len());
            println!("failed_folds\t{failed}");
            if selection.is_none() {
                print!("{chosen}");
            }
            Ok(())
        }
        Command::Compare { train, eval, features, net, restarts, output, json } => {
            let mut inputs = vec![train.as_path(), eval.as_path()];
            inputs.extend(file_inputs(&features));
            require(&inputs)?;
            let config = feature_config(&features)?;
            let (spec, train_cfg) = train_config(&net, seed.unwrap_or(0))?;
            if restarts == 0 {
                return usage("--restarts must be positive");
            }
            let train_file = compounds(&train)?;
            let eval_file = compounds(&eval)?;
            if train_file.task_names != eval_file.task_names {
                return Err(Failure::Data(anyhow!(
                    "task columns differ: train has [{}], eval has [{}]",
                    train_file.task_names.join(","),
                    eval_file.task_names.join(",")
                )));
            }
            let n_train = train_file.records.len();
            let mut records = train_file.records;
            records.extend(eval_file.records);
            let merged = CompoundFile { task_names: train_file.task_names, records };
            let refs = references(&features.references)?;
            let ext = descriptors(features.descriptors.as_ref())?;
            let t = table(&merged, &refs, ext.as_ref())?;
            let train_rows: Vec<usize> = (0..n_train).collect();
            let eval_rows: Vec<usize> = (n_train..t.n_rows()).collect();
            let pipeline = FeaturePipeline::fit(&t, &train_rows, config).map_err(anyhow::Error::from)?;
            let x = pipeline.transform::<f64>(&t, &t.all_rows()).map_err(anyhow::Error::from)?;
            let arm = ArmSpec { net: spec, config: train_cfg };
            let report = compare_st_mt(&x, &t.labels, &train_rows, &eval_rows, &arm, &arm, restarts)
                .map_err(anyhow::Error::from)?;
            let tsv = report.to_tsv();
            let js = report.to_json();
            let mut outs: Vec<(&Path, &[u8])> = vec![(&output, tsv.as_bytes())];
            if let Some(j) = &json {
                outs.push((j, js.as_bytes()));
            }
            write_all(&outs)?;
            print!("{tsv}");
            Ok(())
        }
        Command::Interpret { model, input, patterns, descriptors: desc, layers, threshold, output, trend, top } => {
            let mut inputs = vec![model.as_path(), input.as_path(), patterns.as_path()];
            inputs.extend(desc.as_deref());
            require(&inputs)?;
            if !(0.0..=1.0).contains(&threshold) {
                return usage("--threshold must lie in [0, 1]");
            }
            let m = TrainedModel::<f64>::from_bytes(&read_bytes(&model)?)
                .with_context(|| model.display().to_string())?;
            let pipeline = m.pipeline.as_ref().ok_or_else(|| anyhow!("model has no feature pipeline"))?;
            let layers: Vec<usize> =
                if layers.is_empty() { (1..=m.net.n_hidden_layers()).collect() } else { layers };
            let pats = references(std::slice::from_ref(&patterns))?.remove(0);
            let file = compounds(&input)?;
            let refs = pipeline.rebuild_references().map_err(anyhow::Error::from)?;
            let ext = descriptors(desc.as_ref())?;
            let t = table(&file, &refs, ext.as_ref())?;
            let x = pipeline.transform::<f64>(&t, &t.all_rows()).map_err(anyhow::Error::from)?;
            let presence = pattern_presence(&t.ecfp, &pats, threshold);
            let pattern_ids: Vec<String> = pats.patterns.iter().map(|p| p.id.clone()).collect();
            let mut per_layer = Vec::new();
            for &l in &layers {
                let acts = hidden_activations(&m.net, &x, l).map_err(anyhow::Error::from)?;
                let pairs = correlate_units(l, &acts, &presence, &pattern_ids, &t.ids).map_err(anyhow::Error::from)?;
                per_layer.push((l, pairs));
            }
            let trend_text = match &trend {
                Some(_) => Some(layer_trend_tsv(&layer_trend(&per_layer, &pats, top).map_err(anyhow::Error::from)?)),
                None => None,
            };
            let mut all: Vec<_> = per_layer.into_iter().flat_map(|(_, p)| p).collect();
            adjust(&mut all);
            let report = report_tsv(&all);
            let mut outs: Vec<(&Path, &[u8])> = vec![(&output, report.as_bytes())];
            if let (Some(p), Some(text)) = (&trend, &trend_text) {
                outs.push((p, text.as_bytes()));
            }
            write_all(&outs)?;
            println!("pairs\t{}", all.len());
            let significant = all.iter().filter(|c| c.p_adjusted < deeptox::interpret::FDR_LEVEL).count();
            println!("significant\t{significant}");
            Ok(())
        }
        Command::Stats { input, histogram, correlation } => {
            require(&[&input])?;
            let file = compounds(&input)?;
            let mut labels = LabelMatrix::new(file.task_names.clone());
            for r in &file.records {
                labels.push_row(&r.labels);
            }
            let stats = dataset_stats(&labels);
            let (h, c) = (stats.histogram_tsv(), stats.correlation_tsv());
            let mut outs: Vec<(&Path, &[u8])> = Vec::new();
            if let Some(p) = &histogram {
                outs.push((p, h.as_bytes()));
            }
            if let Some(p) = &correlation {
                outs.push((p, c.as_bytes()));
            }
            write_all(&outs)?;
            if histogram.is_none() {
                print!("{h}");
            }
            if correlation.is_none() {
                print!("{c}");
            }
            Ok(())
        }
        Command::ImportTox21 { input, output, merge } => {
            require(&[&input])?;
            let text = read(&input)?;
            let mut file = parse_tox21_csv(&text).with_context(|| input.display().to_string())?;
            if merge {
                let fp = |g: &deeptox::smiles::MolecularGraph| ecfp(g, ECFP4_RADIUS).expect("radius is valid");
                let (records, report) = merge_duplicates(&file.records, fp);
                println!("merged_groups\t{}", report.groups.len());
                println!("contradictions\t{}", report.total_contradictions());
                file.records = records;
            }
            let out = write_compound_file(&file.task_names, &file.records);
            write_all(&[(&output, out.as_bytes())])?;
            println!("compounds\t{}", file.records.len());
            println!("tasks\t{}", file.task_names.len());
            Ok(())
        }
        Command::GenerateDemo { output_dir } => {
            let config = DemoConfig { seed: seed.unwrap_or(DemoConfig::default().seed), ..DemoConfig::default() };
            let demo = generate_demo(&config);
            let (train, lb) = (demo.train_file(), demo.leaderboard_file());
            write_all(&[
                (&output_dir.join("demo_train.tsv"), train.as_bytes()),
                (&output_dir.join("demo_leaderboard.tsv"), lb.as_bytes()),
                (&output_dir.join("demo_references.tsv"), demo.references_text.as_bytes()),
            ])?;
            println!("train\t{}", demo.train.len());
            println!("leaderboard\t{}", demo.leaderboard.len());
            Ok(())
        }
    }
}

/// (compound id, task) → probability.
fn parse_predictions(text: &str) -> anyhow::Result<HashMap<(String, String), f64>> {
    let mut out = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() || (k == 0 && line.starts_with("compound_id")) {
            continue;
        }
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if f.len() != 3 {
            bail!("line {line_no}: expected 3 fields, found {}", f.len());
        }
        let p: f64 = f[2].trim().parse().map_err(|_| anyhow!("line {line_no}: `{}` is not a probability", f[2]))?;
        if out.insert((f[0].to_string(), f[1].to_string()), p).is_some() {
            bail!("line {line_no}: duplicate prediction for ({}, {})", f[0], f[1]);
        }
    }
    Ok(out)
}

fn eval_report(file: &CompoundFile, preds: &HashMap<(String, String), f64>) -> Result<String, Failure> {
    let n = file.records.len();
    let t = file.task_names.len();
    let mut labels = LabelMatrix::new(file.task_names.clone());
    let mut probs = Array2::<f64>::zeros((n, t));
    for (i, r) in file.records.iter().enumerate() {
        labels.push_row(&r.labels);
        for (k, task) in file.task_names.iter().enumerate() {
            if r.labels[k].is_none() {
                continue;
            }
            match preds.get(&(r.id.clone(), task.clone())) {
                Some(&p) => probs[[i, k]] = p,
                None => return Err(Failure::Data(anyhow!("no prediction for compound `{}`, task `{task}`", r.id))),
            }
        }
    }
    let rows: Vec<usize> = (0..n).collect();
    let scores = task_scores(&probs, &labels, &rows);
    let mut out = String::from("task\tn_pos\tn_neg\tauc\n");
    for s in &scores {
        let auc = s.auc.map_or("NA".to_string(), |a| format!("{a:.6}"));
        out.push_str(&format!("{}\t{}\t{}\t{auc}\n", s.task, s.n_pos, s.n_neg));
    }
    let mean = mean_auc(&scores).map_or("NA".to_string(), |a| format!("{a:.6}"));
    out.push_str(&format!("mean\t\t\t{mean}\n"));
    Ok(out)
}
