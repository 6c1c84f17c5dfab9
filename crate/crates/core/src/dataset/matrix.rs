//! Compressed-sparse-row feature matrix and its binary file layout.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "DTXM"
//! version      u32      1
//! n_rows       u64
//! n_cols       u64
//! nnz          u64
//! row_offsets  (n_rows + 1) × u64
//! col_indices  nnz × u32
//! values       nnz × f32
//! catalog      n_cols × { source u8 (0 ecfp, 1 reference, 2 descriptor),
//!                         feature_id u64, name_len u16, name UTF-8 }
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::Scalar;

pub const MATRIX_MAGIC: &[u8; 4] = b"DTXM";
pub const MATRIX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSource {
    Ecfp,
    ReferenceSimilarity,
    Descriptor,
}

impl FeatureSource {
    pub fn code(self) -> u8 {
        match self {
            FeatureSource::Ecfp => 0,
            FeatureSource::ReferenceSimilarity => 1,
            FeatureSource::Descriptor => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureSource::Ecfp),
            1 => Some(FeatureSource::ReferenceSimilarity),
            2 => Some(FeatureSource::Descriptor),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSource::Ecfp => "ecfp",
            FeatureSource::ReferenceSimilarity => "reference-similarity",
            FeatureSource::Descriptor => "descriptor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub source: FeatureSource,
    pub feature_id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureMatrix<F> {
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<F>,
    catalog: Vec<ColumnInfo>,
}

impl<F: Scalar> SparseFeatureMatrix<F> {
    pub fn empty(catalog: Vec<ColumnInfo>) -> Self {
        SparseFeatureMatrix {
            row_offsets: vec![0],
            col_indices: Vec::new(),
            values: Vec::new(),
            catalog,
        }
    }

    /// Appends a row; `entries` must have strictly increasing in-range columns.
    /// Explicit zeros are dropped.
    pub fn push_row<I: IntoIterator<Item = (usize, F)>>(&mut self, entries: I) {
        let mut last: Option<usize> = None;
        for (c, v) in entries {
            assert!(c < self.n_cols(), "column {c} out of range");
            assert!(last.is_none_or(|l| c > l), "columns must increase within a row");
            last = Some(c);
            if v != F::zero() {
                self.col_indices.push(c as u32);
                self.values.push(v);
            }
        }
        self.row_offsets.push(self.col_indices.len());
    }

    pub fn n_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.catalog.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn catalog(&self) -> &[ColumnInfo] {
        &self.catalog
    }

    pub fn row(&self, i: usize) -> (&[u32], &[F]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let (c, v) = self.row(i);
        c.iter().zip(v).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        let (c, v) = self.row(i);
        match c.binary_search(&(j as u32)) {
            Ok(k) => v[k],
            Err(_) => F::zero(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::empty(self.catalog.clone());
        for &r in rows {
            out.push_row(self.row_entries(r));
        }
        out
    }

    /// Rebuild from dense rows, dropping zeros.
    pub fn from_dense(dense: &Array2<F>, catalog: Vec<ColumnInfo>) -> Self {
        assert_eq!(dense.ncols(), catalog.len());
        let mut out = Self::empty(catalog);
        for row in dense.rows() {
            out.push_row(row.iter().copied().enumerate());
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(F) -> F) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f(*v);
        }
        out.compact();
        out
    }

    fn compact(&mut self) {
        if self.values.iter().all(|v| *v != F::zero()) {
            return;
        }
        let mut out = Self::empty(std::mem::take(&mut self.catalog));
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            out.push_row(c.iter().zip(v).map(|(&c, &v)| (c as usize, v)));
        }
        *self = out;
    }

    pub fn convert<G: Scalar>(&self) -> SparseFeatureMatrix<G> {
        SparseFeatureMatrix {
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().map(|v| G::of(v.as_f64())).collect(),
            catalog: self.catalog.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.nnz() * 8 + self.n_rows() * 8);
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_cols() as u64).to_le_bytes());
        out.extend_from_slice(&(self.nnz() as u64).to_le_bytes());
        for &o in &self.row_offsets {
            out.extend_from_slice(&(o as u64).to_le_bytes());
        }
        for &c in &self.col_indices {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        for col in &self.catalog {
            out.push(col.source.code());
            out.extend_from_slice(&col.feature_id.to_le_bytes());
            let name = col.name.as_bytes();
            let len = name.len().min(u16::MAX as usize);
            out.extend_from_slice(&(len as u16).to_le_bytes());
            out.extend_from_slice(&name[..len]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MATRIX_MAGIC {
            return Err(DatasetError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != MATRIX_VERSION {
            return Err(DatasetError::Format(format!("unsupported version {version}")));
        }
        let n_rows = r.u64()? as usize;
        let n_cols = r.u64()? as usize;
        let nnz = r.u64()? as usize;
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        for _ in 0..=n_rows {
            row_offsets.push(r.u64()? as usize);
        }
        let mut col_indices = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            col_indices.push(r.u32()?);
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            values.push(F::of(f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64));
        }
        let mut catalog = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let code = r.take(1)?[0];
            let source = FeatureSource::from_code(code)
                .ok_or_else(|| DatasetError::Format(format!("unknown column source {code}")))?;
            let feature_id = r.u64()?;
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| DatasetError::Format("column name is not UTF-8".into()))?;
            catalog.push(ColumnInfo { source, feature_id, name });
        }
        if r.pos != bytes.len() {
            return Err(DatasetError::Format("trailing bytes".into()));
        }
        let valid_offsets = row_offsets.first() == Some(&0)
            && row_offsets.last() == Some(&nnz)
            && row_offsets.windows(2).all(|w| w[0] <= w[1]);
        if !valid_offsets {
            return Err(DatasetError::Format("row offsets are inconsistent".into()));
        }
        for i in 0..n_rows {
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            let increasing = cols.windows(2).all(|w| w[0] < w[1]);
            if !increasing || cols.last().is_some_and(|&c| c as usize >= n_cols) {
                return Err(DatasetError::Format(format!("row {i} has invalid column indices")));
            }
        }
        Ok(SparseFeatureMatrix { row_offsets, col_indices, values, catalog })
    }

    /// Human-readable catalog: `column<TAB>source<TAB>feature_id<TAB>name`.
    pub fn catalog_text(&self) -> String {
        let mut s = String::from("column\tsource\tfeature_id\tname\n");
        for (j, c) in self.catalog.iter().enumerate() {
            s.push_str(&format!("{j}\t{}\t{}\t{}\n", c.source.as_str(), c.feature_id, c.name));
        }
        s
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        if self.pos + n > self.bytes.len() {
            return Err(DatasetError::Format("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Densify the selected rows (in the requested order) into a
/// `|rows| × n_cols` block.
pub fn dense_batch<F: Scalar>(matrix: &SparseFeatureMatrix<F>, rows: &[usize]) -> Result<Array2<F>, DatasetError> {
    let mut out = Array2::zeros((rows.len(), matrix.n_cols()));
    for (bi, &r) in rows.iter().enumerate() {
        if r >= matrix.n_rows() {
            return Err(DatasetError::IndexOutOfBounds { index: r, rows: matrix.n_rows() });
        }
        for (c, v) in matrix.row_entries(r) {
            out[[bi, c]] = v;
        }
    }
    Ok(out)
}
