//! Compound file formats.
//!
//! The native format is tab-separated with a header line:
//!
//! ```text
//! compound_id<TAB>smiles<TAB>task_1<TAB>...<TAB>task_T
//! m0001<TAB>CCO<TAB>1<TAB><TAB>0
//! ```
//!
//! Label fields are `1` (active), `0` (inactive) or empty (missing).

use super::{CompoundRecord, DatasetError};
use crate::smiles::parse_smiles;

#[derive(Debug, Clone)]
pub struct CompoundFile {
    pub task_names: Vec<String>,
    pub records: Vec<CompoundRecord>,
}

fn parse_label(field: &str, line: usize) -> Result<Option<bool>, DatasetError> {
    match field.trim() {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(DatasetError::Parse { line, message: format!("label `{other}` is not 0, 1 or empty") }),
    }
}

pub fn parse_compound_file(text: &str) -> Result<CompoundFile, DatasetError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim_end_matches('\r'),
            None => return Err(DatasetError::Parse { line: 1, message: "missing header line".into() }),
        }
    };
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 {
        return Err(DatasetError::Parse { line: 1, message: "header needs compound_id and smiles columns".into() });
    }
    let task_names: Vec<String> = cols[2..].iter().map(|s| s.trim().to_string()).collect();
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, raw) in lines {
        let line = k + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != task_names.len() + 2 {
            return Err(DatasetError::Parse {
                line,
                message: format!("expected {} fields, found {}", task_names.len() + 2, fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(DatasetError::Parse { line, message: "empty compound id".into() });
        }
        if !seen.insert(id.to_string()) {
            return Err(DatasetError::Parse { line, message: format!("duplicate compound id `{id}`") });
        }
        let graph = parse_smiles(fields[1]).map_err(|error| DatasetError::Smiles { line, error })?;
        let labels = fields[2..].iter().map(|f| parse_label(f, line)).collect::<Result<Vec<_>, _>>()?;
        records.push(CompoundRecord { id: id.to_string(), graph, labels });
    }
    Ok(CompoundFile { task_names, records })
}

pub fn write_compound_file(task_names: &[String], records: &[CompoundRecord]) -> String {
    let mut s = String::from("compound_id\tsmiles");
    for t in task_names {
        s.push('\t');
        s.push_str(t);
    }
    s.push('\n');
    for r in records {
        s.push_str(&r.id);
        s.push('\t');
        s.push_str(&r.graph.source_text);
        for l in &r.labels {
            s.push('\t');
            match l {
                Some(true) => s.push('1'),
                Some(false) => s.push('0'),
                None => {}
            }
        }
        s.push('\n');
    }
    s
}

/// Reads the public Tox21 comma-separated layout: a header naming the task
/// columns plus `mol_id` and `smiles` columns (any order); labels are `0`,
/// `1` (or `0.0`/`1.0`) and empty for missing.
pub fn parse_tox21_csv(text: &str) -> Result<CompoundFile, DatasetError> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(DatasetError::Parse { line: 1, message: "missing header line".into() });
    };
    let cols: Vec<String> = header.trim_end_matches('\r').split(',').map(|s| s.trim().to_string()).collect();
    let find = |name: &str| cols.iter().position(|c| c.eq_ignore_ascii_case(name));
    let (Some(id_col), Some(smi_col)) = (find("mol_id"), find("smiles")) else {
        return Err(DatasetError::Parse { line: 1, message: "header must contain mol_id and smiles".into() });
    };
    let task_cols: Vec<usize> = (0..cols.len()).filter(|&c| c != id_col && c != smi_col).collect();
    let task_names = task_cols.iter().map(|&c| cols[c].clone()).collect();
    let mut records = Vec::new();
    for (k, raw) in lines {
        let line = k + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != cols.len() {
            return Err(DatasetError::Parse {
                line,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let graph = parse_smiles(fields[smi_col]).map_err(|error| DatasetError::Smiles { line, error })?;
        let mut labels = Vec::with_capacity(task_cols.len());
        for &c in &task_cols {
            let f = fields[c].trim();
            labels.push(match f {
                "0" | "0.0" => Some(false),
                "1" | "1.0" => Some(true),
                "" => None,
                other => return Err(DatasetError::Parse { line, message: format!("label `{other}`") }),
            });
        }
        records.push(CompoundRecord { id: fields[id_col].trim().to_string(), graph, labels });
    }
    Ok(CompoundFile { task_names, records })
}
