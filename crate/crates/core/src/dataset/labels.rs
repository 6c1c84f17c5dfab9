use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Per-compound, per-task activity values; `None` is a missing label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    task_names: Vec<String>,
    /// Row-major `n × T`.
    values: Vec<Option<bool>>,
}

impl LabelMatrix {
    pub fn new(task_names: Vec<String>) -> Self {
        LabelMatrix { task_names, values: Vec::new() }
    }

    pub fn from_rows(task_names: Vec<String>, rows: Vec<Vec<Option<bool>>>) -> Result<Self, usize> {
        let mut m = LabelMatrix::new(task_names);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != m.n_tasks() {
                return Err(i);
            }
            m.values.extend(r);
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[Option<bool>]) {
        assert_eq!(row.len(), self.n_tasks(), "label row width");
        self.values.extend_from_slice(row);
    }

    pub fn task_names(&self) -> &[String] {
        &self.task_names
    }

    pub fn n_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.task_names.is_empty() {
            0
        } else {
            self.values.len() / self.task_names.len()
        }
    }

    pub fn get(&self, row: usize, task: usize) -> Option<bool> {
        self.values[row * self.n_tasks() + task]
    }

    pub fn set(&mut self, row: usize, task: usize, value: Option<bool>) {
        let t = self.n_tasks();
        self.values[row * t + task] = value;
    }

    /// m_ti: 1 iff the label is present.
    pub fn mask(&self, row: usize, task: usize) -> bool {
        self.get(row, task).is_some()
    }

    pub fn row(&self, row: usize) -> &[Option<bool>] {
        let t = self.n_tasks();
        &self.values[row * t..(row + 1) * t]
    }

    pub fn present_count(&self, row: usize) -> usize {
        self.row(row).iter().filter(|v| v.is_some()).count()
    }

    pub fn column(&self, task: usize) -> Vec<Option<bool>> {
        (0..self.n_rows()).map(|i| self.get(i, task)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabelMatrix {
        let mut out = LabelMatrix::new(self.task_names.clone());
        for &r in rows {
            out.values.extend_from_slice(self.row(r));
        }
        out
    }

    /// Keep only the listed task columns, in the given order.
    pub fn select_tasks(&self, tasks: &[usize]) -> LabelMatrix {
        let names = tasks.iter().map(|&t| self.task_names[t].clone()).collect();
        let mut out = LabelMatrix::new(names);
        for i in 0..self.n_rows() {
            for &t in tasks {
                out.values.push(self.get(i, t));
            }
        }
        out
    }

    /// Dense targets and mask for a batch of rows; missing targets are 0.
    pub fn batch<F: Scalar>(&self, rows: &[usize]) -> (Array2<F>, Array2<F>) {
        let t = self.n_tasks();
        let mut y = Array2::zeros((rows.len(), t));
        let mut m = Array2::zeros((rows.len(), t));
        for (bi, &r) in rows.iter().enumerate() {
            for task in 0..t {
                if let Some(v) = self.get(r, task) {
                    m[[bi, task]] = F::one();
                    if v {
                        y[[bi, task]] = F::one();
                    }
                }
            }
        }
        (y, m)
    }
}
