use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DatasetError, SparseFeatureMatrix};
use crate::Scalar;

/// Lower bound applied to fitted standard deviations.
pub const SD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NormalizationKind {
    StandardDeviation,
    Tanh,
    Sqrt,
}

impl NormalizationKind {
    pub const ALL: [NormalizationKind; 3] =
        [NormalizationKind::StandardDeviation, NormalizationKind::Tanh, NormalizationKind::Sqrt];

    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationKind::StandardDeviation => "standard-deviation",
            NormalizationKind::Tanh => "tanh",
            NormalizationKind::Sqrt => "sqrt",
        }
    }
}

impl fmt::Display for NormalizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "standard-deviation" | "sd" | "std" => Ok(NormalizationKind::StandardDeviation),
            "tanh" => Ok(NormalizationKind::Tanh),
            "sqrt" => Ok(NormalizationKind::Sqrt),
            other => Err(format!("unknown normalization `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub sd: f64,
}

/// A fitted normalization; `stats` is present iff the kind is
/// standard-deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationScheme {
    pub kind: NormalizationKind,
    pub stats: Option<Vec<ColumnStats>>,
}

/// Fit on the rows of `matrix`. Callers pass training rows only.
pub fn fit_normalizer<F: Scalar>(matrix: &SparseFeatureMatrix<F>, kind: NormalizationKind) -> NormalizationScheme {
    if kind != NormalizationKind::StandardDeviation {
        return NormalizationScheme { kind, stats: None };
    }
    let d = matrix.n_cols();
    let n = matrix.n_rows();
    let mut sum = vec![0.0f64; d];
    for i in 0..n {
        for (c, v) in matrix.row_entries(i) {
            sum[c] += v.as_f64();
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }).collect();
    // squared deviations: stored entries plus implicit zeros
    let mut sq = vec![0.0f64; d];
    let mut nnz = vec![0usize; d];
    for i in 0..n {
        for (c, v) in matrix.row_entries(i) {
            let dv = v.as_f64() - mean[c];
            sq[c] += dv * dv;
            nnz[c] += 1;
        }
    }
    let stats = (0..d)
        .map(|c| {
            let zeros = (n - nnz[c]) as f64;
            let var = if n == 0 { 0.0 } else { (sq[c] + zeros * mean[c] * mean[c]) / n as f64 };
            ColumnStats { mean: mean[c], sd: var.sqrt().max(SD_FLOOR) }
        })
        .collect();
    NormalizationScheme { kind, stats: Some(stats) }
}

pub fn apply_normalizer<F: Scalar>(
    matrix: &SparseFeatureMatrix<F>,
    scheme: &NormalizationScheme,
) -> Result<SparseFeatureMatrix<F>, DatasetError> {
    match scheme.kind {
        NormalizationKind::Tanh => Ok(matrix.map_values(|v| v.tanh())),
        NormalizationKind::Sqrt => {
            for i in 0..matrix.n_rows() {
                if let Some((c, v)) = matrix.row_entries(i).find(|(_, v)| *v < F::zero()) {
                    return Err(DatasetError::NegativeInputToSqrt { row: i, column: c, value: v.as_f64() });
                }
            }
            Ok(matrix.map_values(|v| v.sqrt()))
        }
        NormalizationKind::StandardDeviation => {
            let stats = scheme
                .stats
                .as_ref()
                .ok_or_else(|| DatasetError::Format("standard-deviation scheme without statistics".into()))?;
            if stats.len() != matrix.n_cols() {
                return Err(DatasetError::WidthMismatch { expected: stats.len(), found: matrix.n_cols() });
            }
            let mut out = SparseFeatureMatrix::empty(matrix.catalog().to_vec());
            let mut dense = vec![0.0f64; matrix.n_cols()];
            for i in 0..matrix.n_rows() {
                dense.iter_mut().for_each(|x| *x = 0.0);
                for (c, v) in matrix.row_entries(i) {
                    dense[c] = v.as_f64();
                }
                out.push_row(
                    dense
                        .iter()
                        .zip(stats)
                        .map(|(x, s)| F::of((x - s.mean) / s.sd))
                        .enumerate(),
                );
            }
            Ok(out)
        }
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Column medians of `block` restricted to `rows`; columns with no
/// observed value get 0.
pub fn fit_medians(block: &[Vec<Option<f64>>], n_cols: usize, rows: &[usize]) -> Vec<f64> {
    (0..n_cols)
        .map(|c| {
            let mut seen: Vec<f64> = rows.iter().filter_map(|&r| block[r][c]).collect();
            median(&mut seen).unwrap_or(0.0)
        })
        .collect()
}

pub fn apply_medians(row: &[Option<f64>], medians: &[f64]) -> Vec<f64> {
    row.iter().zip(medians).map(|(v, m)| v.unwrap_or(*m)).collect()
}

/// Replace every missing cell with its column median over `fit_rows`.
pub fn median_impute(block: &[Vec<Option<f64>>], n_cols: usize, fit_rows: &[usize]) -> Vec<Vec<f64>> {
    let medians = fit_medians(block, n_cols, fit_rows);
    block.iter().map(|r| apply_medians(r, &medians)).collect()
}
