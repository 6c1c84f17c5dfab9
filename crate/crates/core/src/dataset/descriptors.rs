//! Graph-derived molecular descriptors and the external descriptor table.

use std::collections::HashMap;

use super::DatasetError;
use crate::elements;
use crate::smiles::MolecularGraph;

/// Elements with their own count descriptor; everything else is pooled.
const COUNTED: &[(&str, u8)] = &[
    ("C", 6), ("N", 7), ("O", 8), ("S", 16), ("P", 15), ("F", 9), ("Cl", 17), ("Br", 35), ("I", 53),
];

pub fn builtin_names() -> Vec<String> {
    let mut names: Vec<String> = vec!["heavy_atoms".into(), "bonds".into(), "rings".into()];
    names.extend(COUNTED.iter().map(|(s, _)| format!("count_{s}")));
    names.extend(["count_other", "mean_degree", "aromatic_fraction", "molecular_weight"].map(String::from));
    names
}

/// Values in the order of [`builtin_names`]. Molecular weight includes
/// explicit and implicit hydrogens.
pub fn builtin_descriptors(graph: &MolecularGraph) -> Vec<f64> {
    let n = graph.atom_count();
    let mut out = vec![n as f64, graph.bond_count() as f64, graph.ring_count() as f64];
    let mut other = 0usize;
    let mut counts = vec![0usize; COUNTED.len()];
    for a in &graph.atoms {
        match COUNTED.iter().position(|(_, z)| *z == a.atomic_number) {
            Some(k) => counts[k] += 1,
            None => other += 1,
        }
    }
    out.extend(counts.iter().map(|&c| c as f64));
    out.push(other as f64);
    let (mean_degree, aromatic) = if n == 0 {
        (0.0, 0.0)
    } else {
        let deg: usize = graph.atoms.iter().map(|a| a.degree).sum();
        let aro = graph.atoms.iter().filter(|a| a.aromatic).count();
        (deg as f64 / n as f64, aro as f64 / n as f64)
    };
    out.push(mean_degree);
    out.push(aromatic);
    let h_mass = elements::atomic_mass(1).unwrap();
    let weight: f64 = graph
        .atoms
        .iter()
        .map(|a| elements::atomic_mass(a.atomic_number).unwrap_or(0.0) + a.total_h() as f64 * h_mass)
        .sum();
    out.push(weight);
    out
}

/// Externally computed descriptors keyed by compound id. Missing values
/// are written as `NA` (never inferred from zero or an empty field).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalDescriptors {
    pub names: Vec<String>,
    pub rows: HashMap<String, Vec<Option<f64>>>,
}

impl ExternalDescriptors {
    /// Format: header `compound_id<TAB>name_1<TAB>...`, then one line per
    /// compound with numbers or `NA`.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(DatasetError::Parse { line: 1, message: "missing header".into() });
        };
        let names: Vec<String> = header.trim_end_matches('\r').split('\t').skip(1).map(|s| s.trim().to_string()).collect();
        let mut rows = HashMap::new();
        for (k, line) in lines {
            let line_no = k + 1;
            let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            if fields.len() != names.len() + 1 {
                return Err(DatasetError::Parse {
                    line: line_no,
                    message: format!("expected {} fields, found {}", names.len() + 1, fields.len()),
                });
            }
            let mut vals = Vec::with_capacity(names.len());
            for f in &fields[1..] {
                let f = f.trim();
                if f == "NA" {
                    vals.push(None);
                } else {
                    let v: f64 = f.parse().map_err(|_| DatasetError::Parse {
                        line: line_no,
                        message: format!("`{f}` is neither a number nor NA"),
                    })?;
                    vals.push(Some(v));
                }
            }
            let id = fields[0].trim().to_string();
            if rows.insert(id.clone(), vals).is_some() {
                return Err(DatasetError::Parse { line: line_no, message: format!("duplicate compound id `{id}`") });
            }
        }
        Ok(ExternalDescriptors { names, rows })
    }

    /// Row for `id`; compounds absent from the table are all-missing.
    pub fn row(&self, id: &str) -> Vec<Option<f64>> {
        self.rows.get(id).cloned().unwrap_or_else(|| vec![None; self.names.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    #[test]
    fn ethanol_descriptors() {
        let d = builtin_descriptors(&parse_smiles("CCO").unwrap());
        let names = builtin_names();
        assert_eq!(d.len(), names.len());
        let get = |n: &str| d[names.iter().position(|x| x == n).unwrap()];
        assert_eq!(get("heavy_atoms"), 3.0);
        assert_eq!(get("bonds"), 2.0);
        assert_eq!(get("rings"), 0.0);
        assert_eq!(get("count_C"), 2.0);
        assert_eq!(get("count_O"), 1.0);
        assert!((get("mean_degree") - 4.0 / 3.0).abs() < 1e-12);
        assert!((get("molecular_weight") - 46.069).abs() < 0.01);
    }

    #[test]
    fn benzene_is_aromatic() {
        let d = builtin_descriptors(&parse_smiles("c1ccccc1[Na]").unwrap());
        let names = builtin_names();
        let get = |n: &str| d[names.iter().position(|x| x == n).unwrap()];
        assert_eq!(get("rings"), 1.0);
        assert_eq!(get("count_other"), 1.0);
        assert!((get("aromatic_fraction") - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn external_table() {
        let t = ExternalDescriptors::parse("id\tlogp\ttpsa\nm1\t1.5\tNA\nm2\t0\t3\n").unwrap();
        assert_eq!(t.names, vec!["logp", "tpsa"]);
        assert_eq!(t.row("m1"), vec![Some(1.5), None]);
        assert_eq!(t.row("m2"), vec![Some(0.0), Some(3.0)]);
        assert_eq!(t.row("zz"), vec![None, None]);
        assert!(matches!(ExternalDescriptors::parse("id\ta\nm1\t\n"), Err(DatasetError::Parse { line: 2, .. })));
    }
}
