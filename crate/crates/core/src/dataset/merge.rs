//! Duplicate-structure consolidation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::CompoundRecord;
use crate::fingerprints::SparseCountVector;
use crate::smiles::MolecularGraph;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergeGroup {
    /// Ids of the merged rows; the first one names the merged record.
    pub ids: Vec<String>,
    /// Tasks whose labels disagreed and were set to missing.
    pub contradictions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct MergeReport {
    /// Only groups with more than one member.
    pub groups: Vec<MergeGroup>,
}

impl MergeReport {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn total_contradictions(&self) -> usize {
        self.groups.iter().map(|g| g.contradictions).sum()
    }
}

/// Groups rows whose largest connected component fingerprints identically.
/// Per task, agreeing labels are kept and disagreeing ones become missing.
/// Output order follows the first occurrence of each group.
pub fn merge_duplicates<FP>(records: &[CompoundRecord], fingerprint: FP) -> (Vec<CompoundRecord>, MergeReport)
where
    FP: Fn(&MolecularGraph) -> SparseCountVector + Sync,
{
    let keys: Vec<Vec<(u64, u32)>> = records
        .par_iter()
        .map(|r| fingerprint(&r.graph.largest_component()).iter().collect())
        .collect();

    let mut group_of: BTreeMap<&[(u64, u32)], usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        match group_of.get(k.as_slice()) {
            Some(&g) => groups[g].push(i),
            None => {
                group_of.insert(k.as_slice(), groups.len());
                groups.push(vec![i]);
            }
        }
    }

    let mut merged = Vec::with_capacity(groups.len());
    let mut report = MergeReport::default();
    for members in &groups {
        let first = &records[members[0]];
        if members.len() == 1 {
            merged.push(first.clone());
            continue;
        }
        let width = first.labels.len();
        let mut labels = vec![None; width];
        let mut contradictions = 0;
        for (t, slot) in labels.iter_mut().enumerate() {
            let mut seen: Option<bool> = None;
            let mut conflict = false;
            for &m in members {
                if let Some(v) = records[m].labels.get(t).copied().flatten() {
                    match seen {
                        None => seen = Some(v),
                        Some(s) if s != v => conflict = true,
                        _ => {}
                    }
                }
            }
            if conflict {
                contradictions += 1;
            } else {
                *slot = seen;
            }
        }
        report.groups.push(MergeGroup {
            ids: members.iter().map(|&m| records[m].id.clone()).collect(),
            contradictions,
        });
        merged.push(CompoundRecord { id: first.id.clone(), graph: first.graph.clone(), labels });
    }
    (merged, report)
}
