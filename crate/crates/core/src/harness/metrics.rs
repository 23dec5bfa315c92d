//! Accuracy matrix and the average accuracy / forgetting / intransigence
//! measures derived from it.
//!
//! With `a[i][j]` the accuracy on task `j` right after training task `i`
//! (1-based, `j ≤ i`):
//!
//! * `A_k = (1/k) Σ_{j≤k} a[k][j]`
//! * `F_k = (1/(k−1)) Σ_{j<k} (max_{l∈[j,k−1]} a[l][j] − a[k][j])`, `k ≥ 2`
//! * `I_k = (1/k) Σ_{j≤k} (ref[j] − a[j][j])` for reference accuracies `ref`

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    /// Appends the evaluations made after the next task. Row `i` (0-based)
    /// must hold exactly `i + 1` accuracies in `[0, 1]`.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::Shape(format!(
                "row {} needs {} entries, got {}",
                self.rows.len() + 1,
                self.rows.len() + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Number of tasks trained so far.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Accuracy on task `task` after training task `after`, both 1-based.
    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.rows
            .get(after.checked_sub(1)?)?
            .get(task.checked_sub(1)?)
            .copied()
    }

    /// Row for `after` (1-based).
    pub fn row(&self, after: usize) -> &[f64] {
        &self.rows[after - 1]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| *r.last().expect("non-empty row"))
            .collect()
    }

    pub fn average_accuracy(&self, k: usize) -> Result<f64> {
        self.check_k(k)?;
        let row = self.row(k);
        Ok(row.iter().sum::<f64>() / row.len() as f64)
    }

    pub fn forgetting(&self, k: usize) -> Result<f64> {
        self.check_k(k)?;
        if k < 2 {
            return Err(Error::Shape("forgetting needs at least two tasks".into()));
        }
        let total: f64 = (1..k)
            .map(|j| {
                let best = (j..k)
                    .map(|l| self.get(l, j).expect("filled"))
                    .fold(f64::NEG_INFINITY, f64::max);
                best - self.get(k, j).expect("filled")
            })
            .sum();
        Ok(total / (k - 1) as f64)
    }

    pub fn intransigence(&self, k: usize, reference: &[f64]) -> Result<f64> {
        self.check_k(k)?;
        if reference.len() < k {
            return Err(Error::Shape(format!(
                "{} reference accuracies for {k} tasks",
                reference.len()
            )));
        }
        let total: f64 = (1..=k)
            .map(|j| reference[j - 1] - self.get(j, j).expect("filled"))
            .sum();
        Ok(total / k as f64)
    }

    /// Population standard deviation of row `k`.
    pub fn std_dev(&self, k: usize) -> Result<f64> {
        let mean = self.average_accuracy(k)?;
        let row = self.row(k);
        Ok((row.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / row.len() as f64).sqrt())
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.len() {
            return Err(Error::Shape(format!(
                "task count {k} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `A_k` for `k = 1..=n`.
    pub average: Vec<f64>,
    /// `F_k`; `None` for `k = 1`.
    pub forgetting: Vec<Option<f64>>,
    /// `I_k`, present when reference accuracies were supplied.
    pub intransigence: Option<Vec<f64>>,
    pub std_dev: Vec<f64>,
    /// Last row of the matrix.
    pub final_accuracies: Vec<f64>,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn final_average(&self) -> f64 {
        *self.average.last().unwrap_or(&0.0)
    }

    pub fn final_forgetting(&self) -> Option<f64> {
        self.forgetting.last().copied().flatten()
    }
}

pub fn compute_metrics(
    m: &AccuracyMatrix,
    singletask_acc: Option<&[f64]>,
) -> Result<MetricsReport> {
    if m.is_empty() {
        return Err(Error::Shape("empty accuracy matrix".into()));
    }
    let n = m.len();
    let ks = 1..=n;
    Ok(MetricsReport {
        average: ks
            .clone()
            .map(|k| m.average_accuracy(k))
            .collect::<Result<_>>()?,
        forgetting: ks
            .clone()
            .map(|k| {
                if k < 2 {
                    Ok(None)
                } else {
                    m.forgetting(k).map(Some)
                }
            })
            .collect::<Result<_>>()?,
        intransigence: singletask_acc
            .map(|r| {
                ks.clone()
                    .map(|k| m.intransigence(k, r))
                    .collect::<Result<_>>()
            })
            .transpose()?,
        std_dev: ks.map(|k| m.std_dev(k)).collect::<Result<_>>()?,
        final_accuracies: m.row(n).to_vec(),
        wall_clock_secs: 0.0,
    })
}
