//! Hidden-unit probing: correlate unit activations with the presence of
//! reference patterns.

use std::cmp::Ordering;
use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::dataset::{dense_batch, SparseFeatureMatrix};
use crate::fingerprints::{tanimoto, ReferenceSet, SparseCountVector};
use crate::mtnn::{forward, ForwardMode, Network, TrainError, PREDICT_CHUNK};
use crate::Scalar;

pub const DEFAULT_PRESENCE_THRESHOLD: f64 = 0.9;
pub const FDR_LEVEL: f64 = 0.05;
pub const TOP_COMPOUNDS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("layer {layer} out of range: network has {layers} hidden layers (numbered from 1)")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("row mismatch: {activations} activation rows vs {presence} presence rows")]
    RowMismatch { activations: usize, presence: usize },
    #[error("column mismatch: expected {expected} names, found {found}")]
    NameMismatch { expected: usize, found: usize },
    #[error("layer trend needs at least 2 layers, got {0}")]
    TooFewLayers(usize),
    #[error(transparent)]
    Network(#[from] TrainError),
}

/// Inference-mode ReLU activations of hidden layer `layer` (1-based) for
/// every row of `features`.
pub fn hidden_activations<F: Scalar>(
    net: &Network<F>,
    features: &SparseFeatureMatrix<F>,
    layer: usize,
) -> Result<Array2<F>, InterpretError> {
    let layers = net.n_hidden_layers();
    if layer == 0 || layer > layers {
        return Err(InterpretError::LayerOutOfRange { layer, layers });
    }
    if features.n_cols() != net.n_inputs() {
        return Err(TrainError::DimensionMismatch { expected: net.n_inputs(), found: features.n_cols() }.into());
    }
    let width = net.layer_dims()[layer];
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    let mut out = Array2::zeros((rows.len(), width));
    for (c, chunk) in rows.chunks(PREDICT_CHUNK).enumerate() {
        let x = dense_batch(features, chunk).map_err(TrainError::from)?;
        let acts = forward(net, &x, ForwardMode::Inference)?;
        out.slice_mut(ndarray::s![c * PREDICT_CHUNK..c * PREDICT_CHUNK + chunk.len(), ..])
            .assign(&acts.hidden(layer - 1));
    }
    Ok(out)
}

/// `presence[i][j]` is whether `tanimoto(fps[i], pattern j) >= threshold`.
pub fn pattern_presence(fps: &[SparseCountVector], refs: &ReferenceSet, threshold: f64) -> Array2<bool> {
    let m = refs.len();
    let flat: Vec<bool> = fps
        .par_iter()
        .flat_map_iter(|fp| refs.patterns.iter().map(move |p| tanimoto(fp, &p.fingerprint) >= threshold))
        .collect();
    Array2::from_shape_vec((fps.len(), m), flat).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCorrelation {
    pub layer: usize,
    pub unit: usize,
    pub pattern_id: String,
    pub correlation: f64,
    pub p_value: f64,
    /// Benjamini-Hochberg adjusted over every pair in the same report.
    pub p_adjusted: f64,
    /// Highest-activation compounds first (ties by row).
    pub top_compounds: Vec<String>,
}

/// Two-sided p of the t statistic `r sqrt((n-2)/(1-r^2))` with n-2 degrees
/// of freedom. Defined as 1 when n < 3.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let r = r.abs().min(1.0);
    if r == 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t)).min(1.0)
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap_or(Ordering::Equal).then(b.cmp(&a)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (k, &i) in order.iter().enumerate() {
        let rank = m - k;
        running = running.min(p[i] * m as f64 / rank as f64);
        adjusted[i] = running;
    }
    adjusted
}

fn centered(col: impl Iterator<Item = f64>) -> Option<(Vec<f64>, f64)> {
    let v: Vec<f64> = col.collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss: f64 = c.iter().map(|x| x * x).sum();
    (ss > 0.0).then_some((c, ss))
}

fn rank_order(a: &UnitCorrelation, b: &UnitCorrelation) -> Ordering {
    b.correlation
        .abs()
        .partial_cmp(&a.correlation.abs())
        .unwrap_or(Ordering::Equal)
        .then(a.layer.cmp(&b.layer))
        .then(a.unit.cmp(&b.unit))
        .then(a.pattern_id.cmp(&b.pattern_id))
}

/// Point-biserial correlation of every (unit, pattern) column pair.
/// Constant activation columns and single-class patterns are skipped.
/// Results are ranked by descending |r|, ties by (layer, unit, pattern_id),
/// with BH adjustment over the returned pairs.
pub fn correlate_units<F: Scalar>(
    layer: usize,
    activations: &Array2<F>,
    presence: &Array2<bool>,
    pattern_ids: &[String],
    compound_ids: &[String],
) -> Result<Vec<UnitCorrelation>, InterpretError> {
    let n = activations.nrows();
    if presence.nrows() != n {
        return Err(InterpretError::RowMismatch { activations: n, presence: presence.nrows() });
    }
    if pattern_ids.len() != presence.ncols() {
        return Err(InterpretError::NameMismatch { expected: presence.ncols(), found: pattern_ids.len() });
    }
    if compound_ids.len() != n {
        return Err(InterpretError::NameMismatch { expected: n, found: compound_ids.len() });
    }
    let patterns: Vec<(usize, Vec<f64>, f64)> = (0..presence.ncols())
        .filter_map(|j| {
            centered(presence.column(j).iter().map(|&b| if b { 1.0 } else { 0.0 })).map(|(c, s)| (j, c, s))
        })
        .collect();
    let mut out: Vec<UnitCorrelation> = (0..activations.ncols())
        .into_par_iter()
        .flat_map_iter(|u| {
            let col: Vec<f64> = activations.column(u).iter().map(|x| x.as_f64()).collect();
            let Some((cu, su)) = centered(col.iter().copied()) else {
                return Vec::new();
            };
            let mut top: Vec<usize> = (0..n).collect();
            top.sort_by(|&a, &b| col[b].partial_cmp(&col[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            let top: Vec<String> = top.into_iter().take(TOP_COMPOUNDS).map(|i| compound_ids[i].clone()).collect();
            patterns
                .iter()
                .map(|(j, cp, sp)| {
                    let dot: f64 = cu.iter().zip(cp).map(|(a, b)| a * b).sum();
                    let r = (dot / (su * sp).sqrt()).clamp(-1.0, 1.0);
                    UnitCorrelation {
                        layer,
                        unit: u,
                        pattern_id: pattern_ids[*j].clone(),
                        correlation: r,
                        p_value: correlation_p_value(r, n),
                        p_adjusted: f64::NAN,
                        top_compounds: top.clone(),
                    }
                })
                .collect()
        })
        .collect();
    adjust(&mut out);
    Ok(out)
}

/// Recomputes BH adjustment across all pairs and re-ranks.
pub fn adjust(pairs: &mut [UnitCorrelation]) {
    let p: Vec<f64> = pairs.iter().map(|c| c.p_value).collect();
    for (c, a) in pairs.iter_mut().zip(benjamini_hochberg(&p)) {
        c.p_adjusted = a;
    }
    pairs.sort_by(rank_order);
}

/// Tab-separated report: layer, unit, pattern_id, correlation, p_raw,
/// p_adjusted, top compounds (comma-joined).
pub fn report_tsv(pairs: &[UnitCorrelation]) -> String {
    let mut out = String::from("layer\tunit\tpattern_id\tcorrelation\tp_raw\tp_adjusted\ttop_compounds\n");
    for c in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{:.4e}\t{:.4e}\t{}\n",
            c.layer,
            c.unit,
            c.pattern_id,
            c.correlation,
            c.p_value,
            c.p_adjusted,
            c.top_compounds.join(",")
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrendRow {
    pub layer: usize,
    pub pairs: usize,
    /// |r|-weighted mean support size of the patterns in the top pairs.
    pub mean_pattern_size: Option<f64>,
}

/// Per layer, the |r|-weighted mean pattern size (number of distinct
/// fingerprint features) over that layer's `q` strongest pairs.
pub fn layer_trend(
    per_layer: &[(usize, Vec<UnitCorrelation>)],
    refs: &ReferenceSet,
    q: usize,
) -> Result<Vec<LayerTrendRow>, InterpretError> {
    if per_layer.len() < 2 {
        return Err(InterpretError::TooFewLayers(per_layer.len()));
    }
    let size: HashMap<&str, usize> = refs.patterns.iter().map(|p| (p.id.as_str(), p.fingerprint.len())).collect();
    Ok(per_layer
        .iter()
        .map(|(layer, pairs)| {
            let mut ranked = pairs.clone();
            ranked.sort_by(rank_order);
            let top = &ranked[..q.min(ranked.len())];
            let (mut wsum, mut w) = (0.0, 0.0);
            for c in top {
                let s = size.get(c.pattern_id.as_str()).copied().unwrap_or(0) as f64;
                wsum += c.correlation.abs() * s;
                w += c.correlation.abs();
            }
            LayerTrendRow { layer: *layer, pairs: top.len(), mean_pattern_size: (w > 0.0).then(|| wsum / w) }
        })
        .collect())
}

pub fn layer_trend_tsv(rows: &[LayerTrendRow]) -> String {
    let mut out = String::from("layer\tpairs\tmean_pattern_size\n");
    for r in rows {
        let m = r.mean_pattern_size.map_or("NA".to_string(), |m| format!("{m:.3}"));
        out.push_str(&format!("{}\t{}\t{m}\n", r.layer, r.pairs));
    }
    out
}
