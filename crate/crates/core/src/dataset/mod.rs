//! Labeled compound collections, feature assembly and preprocessing.
//!
//! Raw per-compound features live in a [`CompoundTable`]. A
//! [`FeaturePipeline`] is fitted on a set of training rows (sparsity
//! filter, descriptor medians, normalizer) and turns any rows of a table
//! into a [`SparseFeatureMatrix`]. Column blocks always appear in the
//! order ECFP, reference similarity, descriptors.

mod descriptors;
mod io;
mod labels;
mod matrix;
mod merge;
mod normalize;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use descriptors::{builtin_descriptors, builtin_names, ExternalDescriptors};
pub use io::{parse_compound_file, parse_tox21_csv, write_compound_file, CompoundFile};
pub use labels::LabelMatrix;
pub use matrix::{dense_batch, ColumnInfo, FeatureSource, SparseFeatureMatrix, MATRIX_MAGIC, MATRIX_VERSION};
pub use merge::{merge_duplicates, MergeGroup, MergeReport};
pub use normalize::{
    apply_medians, apply_normalizer, fit_medians, fit_normalizer, median_impute, ColumnStats, NormalizationKind,
    NormalizationScheme, SD_FLOOR,
};

use crate::fingerprints::{
    ecfp, occurrence_counts, reference_features, sparsity_filter, FingerprintError, ReferenceSet, SparseCountVector,
    ECFP4_RADIUS,
};
use crate::smiles::{MolecularGraph, SmilesError};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("no feature family enabled")]
    NoFeatureFamily,
    #[error("label row {row} has {found} values, expected {expected}")]
    LabelWidthMismatch { row: usize, expected: usize, found: usize },
    #[error("sqrt normalization of negative value {value} at row {row}, column {column}")]
    NegativeInputToSqrt { row: usize, column: usize, value: f64 },
    #[error("row index {index} out of bounds for {rows} rows")]
    IndexOutOfBounds { index: usize, rows: usize },
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("reference-similarity features requested but no reference set supplied")]
    NoReferences,
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid SMILES: {error}")]
    Smiles { line: usize, error: SmilesError },
    #[error("malformed matrix data: {0}")]
    Format(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

/// One input compound.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundRecord {
    pub id: String,
    pub graph: MolecularGraph,
    pub labels: Vec<Option<bool>>,
}

/// Which feature blocks enter the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureFamilies {
    pub descriptors: bool,
    pub similarity: bool,
    pub ecfp: bool,
}

impl FeatureFamilies {
    pub const ECFP_ONLY: FeatureFamilies = FeatureFamilies { descriptors: false, similarity: false, ecfp: true };

    /// The seven nonempty subsets, ordered by bitmask
    /// (descriptors = 1, similarity = 2, ecfp = 4).
    pub fn all_nonempty() -> Vec<FeatureFamilies> {
        (1u8..8).map(Self::from_bits).collect()
    }

    pub fn from_bits(bits: u8) -> Self {
        FeatureFamilies { descriptors: bits & 1 != 0, similarity: bits & 2 != 0, ecfp: bits & 4 != 0 }
    }

    pub fn bits(self) -> u8 {
        self.descriptors as u8 | (self.similarity as u8) << 1 | (self.ecfp as u8) << 2
    }

    pub fn is_empty(self) -> bool {
        self.bits() == 0
    }
}

impl fmt::Display for FeatureFamilies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.descriptors {
            parts.push("descriptors");
        }
        if self.similarity {
            parts.push("similarity");
        }
        if self.ecfp {
            parts.push("ecfp4");
        }
        if parts.is_empty() {
            parts.push("none");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeatureFamilies {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = FeatureFamilies { descriptors: false, similarity: false, ecfp: false };
        for part in s.split('+').map(str::trim) {
            match part {
                "descriptors" | "molecular-descriptors" => out.descriptors = true,
                "similarity" | "tox-and-scaffold-similarities" => out.similarity = true,
                "ecfp4" | "ecfp" | "ECFP4" => out.ecfp = true,
                other => return Err(format!("unknown feature family `{other}`")),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub families: FeatureFamilies,
    /// Minimum number of training compounds an ECFP feature must occur in.
    pub sparseness_threshold: usize,
    pub normalization: NormalizationKind,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            families: FeatureFamilies { descriptors: true, similarity: true, ecfp: true },
            sparseness_threshold: 5,
            normalization: NormalizationKind::Tanh,
        }
    }
}

/// Raw features for every compound, before filtering and normalization.
#[derive(Debug, Clone)]
pub struct CompoundTable {
    pub ids: Vec<String>,
    pub graphs: Vec<MolecularGraph>,
    pub labels: LabelMatrix,
    pub ecfp: Vec<SparseCountVector>,
    pub references: Vec<ReferenceSet>,
    pub similarity_columns: Vec<ColumnInfo>,
    pub similarity: Vec<Vec<f64>>,
    pub descriptor_names: Vec<String>,
    pub descriptors: Vec<Vec<Option<f64>>>,
}

impl CompoundTable {
    /// Computes ECFP4 counts, similarities to every reference pattern and
    /// the built-in plus external descriptors.
    pub fn build(
        task_names: &[String],
        records: &[CompoundRecord],
        references: &[ReferenceSet],
        external: Option<&ExternalDescriptors>,
    ) -> Result<Self, DatasetError> {
        let t = task_names.len();
        let mut labels = LabelMatrix::new(task_names.to_vec());
        for (i, r) in records.iter().enumerate() {
            if r.labels.len() != t {
                return Err(DatasetError::LabelWidthMismatch { row: i, expected: t, found: r.labels.len() });
            }
            labels.push_row(&r.labels);
        }

        let mut similarity_columns = Vec::new();
        for set in references {
            if set.is_empty() {
                return Err(FingerprintError::EmptyReferenceSet.into());
            }
            for p in &set.patterns {
                similarity_columns.push(ColumnInfo {
                    source: FeatureSource::ReferenceSimilarity,
                    feature_id: similarity_columns.len() as u64,
                    name: format!("{}:{}", set.name, p.id),
                });
            }
        }

        let mut descriptor_names = builtin_names();
        if let Some(ext) = external {
            descriptor_names.extend(ext.names.iter().map(|n| format!("ext:{n}")));
        }

        let per_row: Vec<(SparseCountVector, Vec<f64>, Vec<Option<f64>>)> = records
            .par_iter()
            .map(|r| {
                let fp = ecfp(&r.graph, ECFP4_RADIUS)?;
                let mut sim = Vec::with_capacity(similarity_columns.len());
                for set in references {
                    sim.extend(reference_features(&fp, set)?);
                }
                let mut desc: Vec<Option<f64>> = builtin_descriptors(&r.graph).into_iter().map(Some).collect();
                if let Some(ext) = external {
                    desc.extend(ext.row(&r.id));
                }
                Ok((fp, sim, desc))
            })
            .collect::<Result<_, FingerprintError>>()?;

        let mut table = CompoundTable {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            graphs: records.iter().map(|r| r.graph.clone()).collect(),
            labels,
            ecfp: Vec::with_capacity(records.len()),
            references: references.to_vec(),
            similarity_columns,
            similarity: Vec::with_capacity(records.len()),
            descriptor_names,
            descriptors: Vec::with_capacity(records.len()),
        };
        for (fp, sim, desc) in per_row {
            table.ecfp.push(fp);
            table.similarity.push(sim);
            table.descriptors.push(desc);
        }
        Ok(table)
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }
}

/// Serializable description of a reference set (enough to rebuild it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub name: String,
    pub patterns: Vec<(String, String)>,
}

impl ReferenceSpec {
    pub fn of(set: &ReferenceSet) -> Self {
        ReferenceSpec {
            name: set.name.clone(),
            patterns: set.patterns.iter().map(|p| (p.id.clone(), p.smiles.clone())).collect(),
        }
    }

    pub fn rebuild(&self) -> Result<ReferenceSet, FingerprintError> {
        ReferenceSet::from_pairs(&self.name, self.patterns.iter().map(|(a, b)| (a.as_str(), b.as_str())))
    }
}

/// Preprocessing fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub config: FeatureConfig,
    /// Kept ECFP identifiers, ascending.
    pub ecfp_ids: Vec<u64>,
    pub references: Vec<ReferenceSpec>,
    pub similarity_columns: Vec<ColumnInfo>,
    pub descriptor_names: Vec<String>,
    pub medians: Vec<f64>,
    pub normalizer: NormalizationScheme,
}

impl FeaturePipeline {
    /// Fits the sparsity filter, descriptor medians and normalizer using
    /// only `train_rows` of `table`.
    pub fn fit(table: &CompoundTable, train_rows: &[usize], config: FeatureConfig) -> Result<Self, DatasetError> {
        let fam = config.families;
        if fam.is_empty() {
            return Err(DatasetError::NoFeatureFamily);
        }
        if fam.similarity && table.similarity_columns.is_empty() {
            return Err(DatasetError::NoReferences);
        }
        let ecfp_ids = if fam.ecfp {
            let occ = occurrence_counts(train_rows.iter().map(|&r| &table.ecfp[r]));
            let ids: Vec<u64> = occ.keys().copied().collect();
            let counts: Vec<usize> = occ.values().copied().collect();
            let keep = sparsity_filter(&counts, config.sparseness_threshold)?;
            ids.into_iter().zip(keep).filter(|(_, k)| *k).map(|(id, _)| id).collect()
        } else {
            Vec::new()
        };
        let medians = if fam.descriptors {
            fit_medians(&table.descriptors, table.descriptor_names.len(), train_rows)
        } else {
            Vec::new()
        };
        let mut pipeline = FeaturePipeline {
            config,
            ecfp_ids,
            references: table.references.iter().map(ReferenceSpec::of).collect(),
            similarity_columns: if fam.similarity { table.similarity_columns.clone() } else { Vec::new() },
            descriptor_names: if fam.descriptors { table.descriptor_names.clone() } else { Vec::new() },
            medians,
            normalizer: NormalizationScheme { kind: config.normalization, stats: None },
        };
        let raw: SparseFeatureMatrix<f64> = pipeline.raw_matrix(table, train_rows)?;
        pipeline.normalizer = fit_normalizer(&raw, config.normalization);
        Ok(pipeline)
    }

    pub fn n_features(&self) -> usize {
        self.ecfp_ids.len() + self.similarity_columns.len() + self.descriptor_names.len()
    }

    pub fn catalog(&self) -> Vec<ColumnInfo> {
        let mut cat: Vec<ColumnInfo> = self
            .ecfp_ids
            .iter()
            .map(|&id| ColumnInfo { source: FeatureSource::Ecfp, feature_id: id, name: format!("ecfp:{id:016x}") })
            .collect();
        cat.extend(self.similarity_columns.iter().cloned());
        cat.extend(self.descriptor_names.iter().enumerate().map(|(k, n)| ColumnInfo {
            source: FeatureSource::Descriptor,
            feature_id: k as u64,
            name: n.clone(),
        }));
        cat
    }

    fn check_schema(&self, table: &CompoundTable) -> Result<(), DatasetError> {
        let fam = self.config.families;
        if fam.similarity && table.similarity_columns != self.similarity_columns {
            return Err(DatasetError::SchemaMismatch(format!(
                "expected {} reference-similarity columns, found {}",
                self.similarity_columns.len(),
                table.similarity_columns.len()
            )));
        }
        if fam.descriptors && table.descriptor_names != self.descriptor_names {
            return Err(DatasetError::SchemaMismatch(format!(
                "expected descriptors [{}], found [{}]",
                self.descriptor_names.join(","),
                table.descriptor_names.join(",")
            )));
        }
        Ok(())
    }

    /// Filtered and imputed, not yet normalized.
    pub fn raw_matrix<F: Scalar>(
        &self,
        table: &CompoundTable,
        rows: &[usize],
    ) -> Result<SparseFeatureMatrix<F>, DatasetError> {
        self.check_schema(table)?;
        let fam = self.config.families;
        let col_of: HashMap<u64, usize> = self.ecfp_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let sim_offset = self.ecfp_ids.len();
        let desc_offset = sim_offset + self.similarity_columns.len();
        let mut m = SparseFeatureMatrix::empty(self.catalog());
        let mut entries: Vec<(usize, F)> = Vec::new();
        for &r in rows {
            if r >= table.n_rows() {
                return Err(DatasetError::IndexOutOfBounds { index: r, rows: table.n_rows() });
            }
            entries.clear();
            if fam.ecfp {
                // ids iterate ascending and kept columns are in id order
                for (id, c) in table.ecfp[r].iter() {
                    if let Some(&k) = col_of.get(&id) {
                        entries.push((k, F::of(c as f64)));
                    }
                }
            }
            if fam.similarity {
                for (k, &v) in table.similarity[r].iter().enumerate() {
                    entries.push((sim_offset + k, F::of(v)));
                }
            }
            if fam.descriptors {
                let vals = apply_medians(&table.descriptors[r], &self.medians);
                for (k, v) in vals.into_iter().enumerate() {
                    entries.push((desc_offset + k, F::of(v)));
                }
            }
            m.push_row(entries.iter().copied());
        }
        Ok(m)
    }

    pub fn transform<F: Scalar>(
        &self,
        table: &CompoundTable,
        rows: &[usize],
    ) -> Result<SparseFeatureMatrix<F>, DatasetError> {
        let raw = self.raw_matrix::<F>(table, rows)?;
        apply_normalizer(&raw, &self.normalizer)
    }

    pub fn rebuild_references(&self) -> Result<Vec<ReferenceSet>, FingerprintError> {
        self.references.iter().map(ReferenceSpec::rebuild).collect()
    }
}

/// Network-ready data: normalized features with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub features: SparseFeatureMatrix<F>,
    pub labels: LabelMatrix,
    pub compound_ids: Vec<String>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(
        features: SparseFeatureMatrix<F>,
        labels: LabelMatrix,
        compound_ids: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n = features.n_rows();
        if labels.n_rows() != n && labels.n_tasks() > 0 {
            return Err(DatasetError::WidthMismatch { expected: n, found: labels.n_rows() });
        }
        if compound_ids.len() != n {
            return Err(DatasetError::WidthMismatch { expected: n, found: compound_ids.len() });
        }
        Ok(Dataset { features, labels, compound_ids })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.n_tasks()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Dataset {
            features: self.features.select_rows(rows),
            labels: self.labels.select_rows(rows),
            compound_ids: rows.iter().map(|&r| self.compound_ids[r].clone()).collect(),
        }
    }

    /// Materialize `rows` of `table` through an already fitted pipeline.
    pub fn from_table(
        table: &CompoundTable,
        pipeline: &FeaturePipeline,
        rows: &[usize],
    ) -> Result<Self, DatasetError> {
        let features = pipeline.transform(table, rows)?;
        Dataset::new(
            features,
            table.labels.select_rows(rows),
            rows.iter().map(|&r| table.ids[r].clone()).collect(),
        )
    }
}

/// Builds the full dataset with preprocessing fitted on every row.
pub fn assemble<F: Scalar>(
    task_names: &[String],
    records: &[CompoundRecord],
    references: &[ReferenceSet],
    external: Option<&ExternalDescriptors>,
    config: FeatureConfig,
) -> Result<(Dataset<F>, FeaturePipeline, CompoundTable), DatasetError> {
    if config.families.is_empty() {
        return Err(DatasetError::NoFeatureFamily);
    }
    let table = CompoundTable::build(task_names, records, references, external)?;
    let rows = table.all_rows();
    let pipeline = FeaturePipeline::fit(&table, &rows, config)?;
    let dataset = Dataset::from_table(&table, &pipeline, &rows)?;
    Ok((dataset, pipeline, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn rec(id: &str, smi: &str, labels: &[Option<bool>]) -> CompoundRecord {
        CompoundRecord { id: id.into(), graph: parse_smiles(smi).unwrap(), labels: labels.to_vec() }
    }

    fn tasks(n: usize) -> Vec<String> {
        (0..n).map(|t| format!("t{t}")).collect()
    }

    fn refs() -> Vec<ReferenceSet> {
        vec![ReferenceSet::from_pairs("tox", [("phenol", "Oc1ccccc1"), ("nitro", "C[N+](=O)[O-]")]).unwrap()]
    }

    fn cfg(families: FeatureFamilies, threshold: usize) -> FeatureConfig {
        FeatureConfig { families, sparseness_threshold: threshold, normalization: NormalizationKind::Tanh }
    }

    #[test]
    fn ecfp_only_catalog() {
        let rows = vec![rec("a", "CCO", &[Some(true)])];
        let (ds, _, _) = assemble::<f64>(&tasks(1), &rows, &[], None, cfg(FeatureFamilies::ECFP_ONLY, 1)).unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert!(ds.features.catalog().iter().all(|c| c.source == FeatureSource::Ecfp));
        assert_eq!(ds.n_features(), 7);
    }

    #[test]
    fn all_missing_row_is_kept() {
        let rows = vec![rec("a", "CCO", &[None, None]), rec("b", "CC", &[Some(true), None])];
        let (ds, _, _) = assemble::<f64>(&tasks(2), &rows, &[], None, cfg(FeatureFamilies::ECFP_ONLY, 1)).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.labels.present_count(0), 0);
    }

    #[test]
    fn block_order_is_fixed() {
        let rows = vec![rec("a", "Oc1ccccc1", &[Some(true)]), rec("b", "CCO", &[Some(false)])];
        let all = FeatureFamilies { descriptors: true, similarity: true, ecfp: true };
        let (ds, _, _) = assemble::<f64>(&tasks(1), &rows, &refs(), None, cfg(all, 1)).unwrap();
        let sources: Vec<FeatureSource> = ds.features.catalog().iter().map(|c| c.source).collect();
        let mut sorted = sources.clone();
        sorted.sort();
        assert_eq!(sources, sorted);
        assert!(sources.contains(&FeatureSource::ReferenceSimilarity));
        let two = FeatureFamilies { descriptors: true, similarity: true, ecfp: false };
        let (ds, _, _) = assemble::<f64>(&tasks(1), &rows, &refs(), None, cfg(two, 1)).unwrap();
        let first_desc = ds.features.catalog().iter().position(|c| c.source == FeatureSource::Descriptor).unwrap();
        assert_eq!(first_desc, 2);
        // phenol is identical to the first pattern
        assert!((ds.features.get(0, 0) - 1.0f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn assembly_errors() {
        let rows = vec![rec("a", "CCO", &[Some(true)])];
        let none = FeatureFamilies { descriptors: false, similarity: false, ecfp: false };
        assert_eq!(
            assemble::<f64>(&tasks(1), &rows, &[], None, cfg(none, 1)).unwrap_err(),
            DatasetError::NoFeatureFamily
        );
        assert_eq!(
            assemble::<f64>(&tasks(2), &rows, &[], None, cfg(FeatureFamilies::ECFP_ONLY, 1)).unwrap_err(),
            DatasetError::LabelWidthMismatch { row: 0, expected: 2, found: 1 }
        );
        let sim = FeatureFamilies { descriptors: false, similarity: true, ecfp: false };
        assert_eq!(assemble::<f64>(&tasks(1), &rows, &[], None, cfg(sim, 1)).unwrap_err(), DatasetError::NoReferences);
    }

    #[test]
    fn sparsity_filter_uses_training_rows() {
        let rows = vec![rec("a", "CCO", &[None]), rec("b", "CCO", &[None]), rec("c", "c1ccccc1", &[None])];
        let table = CompoundTable::build(&tasks(1), &rows, &[], None).unwrap();
        let p = FeaturePipeline::fit(&table, &[0, 1, 2], cfg(FeatureFamilies::ECFP_ONLY, 2)).unwrap();
        assert_eq!(p.ecfp_ids.len(), 7);
        let p = FeaturePipeline::fit(&table, &[0, 2], cfg(FeatureFamilies::ECFP_ONLY, 2)).unwrap();
        assert!(p.ecfp_ids.is_empty());
    }

    #[test]
    fn external_descriptors_are_imputed() {
        let ext = ExternalDescriptors::parse("id\tlogp\na\t1\nb\tNA\nc\t3\n").unwrap();
        let rows = vec![rec("a", "CCO", &[None]), rec("b", "CC", &[None]), rec("c", "C", &[None])];
        let fam = FeatureFamilies { descriptors: true, similarity: false, ecfp: false };
        let config = FeatureConfig { families: fam, sparseness_threshold: 1, normalization: NormalizationKind::Sqrt };
        let (ds, pipeline, _) = assemble::<f64>(&tasks(1), &rows, &[], Some(&ext), config).unwrap();
        let col = pipeline.descriptor_names.iter().position(|n| n == "ext:logp").unwrap();
        assert!((ds.features.get(1, col) - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn families_parse_and_print() {
        assert_eq!(FeatureFamilies::all_nonempty().len(), 7);
        for f in FeatureFamilies::all_nonempty() {
            assert_eq!(f.to_string().parse::<FeatureFamilies>().unwrap(), f);
        }
        assert!("bogus".parse::<FeatureFamilies>().is_err());
    }
}
