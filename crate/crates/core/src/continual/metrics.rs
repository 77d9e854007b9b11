//! Accuracy matrices and forgetting metrics of task-incremental training.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;

/// `a[t][i]`: test accuracy on task `i` after training on task `t`
/// (0-based, `i <= t`). Cells may be missing while a run is in progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        AccuracyMatrix {
            rows: (0..tasks).map(|t| vec![None; t + 1]).collect(),
        }
    }

    /// From complete lower-triangular rows (row `t` has `t + 1` entries).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut a = AccuracyMatrix::new(rows.len());
        for (t, row) in rows.iter().enumerate() {
            if row.len() != t + 1 {
                return Err(Error::Shape(format!("row {t} has {} entries, expected {}", row.len(), t + 1)));
            }
            for (i, &v) in row.iter().enumerate() {
                a.set(t, i, v)?;
            }
        }
        Ok(a)
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn set(&mut self, t: usize, i: usize, value: f64) -> Result<()> {
        if t >= self.tasks() || i > t {
            return Err(Error::Shape(format!("cell ({t}, {i}) outside the lower triangle of {} tasks", self.tasks())));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Input(format!("accuracy {value} outside [0, 1]")));
        }
        self.rows[t][i] = Some(value);
        Ok(())
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.rows.get(t).and_then(|r| r.get(i)).copied().flatten()
    }

    /// 1-based `(t, i)` of every empty cell.
    pub fn missing(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, row) in self.rows.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                if v.is_none() {
                    out.push((t + 1, i + 1));
                }
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.missing().is_empty()
    }

    fn require_complete(&self) -> Result<()> {
        let missing = self.missing();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteMatrix(missing))
        }
    }

    fn at(&self, t: usize, i: usize) -> f64 {
        self.rows[t][i].expect("checked complete")
    }

    /// `stage,task,accuracy` rows, 1-based; empty cells are skipped.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["stage", "task", "accuracy"])?;
        for (t, row) in self.rows.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    out.write_record([(t + 1).to_string(), (i + 1).to_string(), v.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(tasks: usize, r: R) -> Result<Self> {
        let mut a = AccuracyMatrix::new(tasks);
        let mut reader = csv::Reader::from_reader(r);
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse_err = |m: &str| Error::Parse {
                line: line as u64 + 2,
                column: String::new(),
                message: m.to_string(),
            };
            if rec.len() != 3 {
                return Err(parse_err("expected stage,task,accuracy"));
            }
            let t: usize = rec[0].parse().map_err(|_| parse_err("bad stage"))?;
            let i: usize = rec[1].parse().map_err(|_| parse_err("bad task"))?;
            let v: f64 = rec[2].parse().map_err(|_| parse_err("bad accuracy"))?;
            if t == 0 || i == 0 {
                return Err(parse_err("stages and tasks are 1-based"));
            }
            a.set(t - 1, i - 1, v)?;
        }
        Ok(a)
    }
}

fn forgetting(a: &AccuracyMatrix, include_last: bool) -> Result<f64> {
    let t_count = a.tasks();
    if t_count < 2 {
        return Err(Error::UndefinedMetric(format!("forgetting needs at least two tasks, got {t_count}")));
    }
    a.require_complete()?;
    let last = t_count - 1;
    let upper = if include_last { t_count } else { last };
    let total: f64 = (0..last)
        .map(|i| (i..upper).map(|t| a.at(t, i) - a.at(last, i)).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(total / last as f64)
}

/// `1/(T-1) sum_{i<T} max_{i <= t <= T-1} (a[t][i] - a[T][i])`.
pub fn average_forgetting(a: &AccuracyMatrix) -> Result<f64> {
    forgetting(a, false)
}

/// As [`average_forgetting`] with the maximum extended to `t = T`, which
/// makes it non-negative.
pub fn average_forgetting_inclusive(a: &AccuracyMatrix) -> Result<f64> {
    forgetting(a, true)
}

/// Mean accuracy over all tasks after the last stage.
pub fn average_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    a.require_complete()?;
    let t = a.tasks();
    if t == 0 {
        return Err(Error::UndefinedMetric("no tasks".into()));
    }
    Ok((0..t).map(|i| a.at(t - 1, i)).sum::<f64>() / t as f64)
}

/// Mean accuracy on each task right after training on it.
pub fn learning_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    a.require_complete()?;
    let t = a.tasks();
    if t == 0 {
        return Err(Error::UndefinedMetric("no tasks".into()));
    }
    Ok((0..t).map(|i| a.at(i, i)).sum::<f64>() / t as f64)
}

/// `||w_T - w_0|| / ||w_0||`.
pub fn param_distance(w_t: &[f64], w_0: &[f64]) -> Result<f64> {
    if w_t.len() != w_0.len() {
        return Err(Error::Shape(format!("{} vs {} parameters", w_t.len(), w_0.len())));
    }
    let base = norm2(w_0);
    if base == 0.0 {
        return Err(Error::Degenerate("initial parameters have zero norm".into()));
    }
    let diff: Vec<f64> = w_t.iter().zip(w_0).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / base)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinualMetrics {
    pub average_forgetting: f64,
    pub average_forgetting_inclusive: f64,
    pub average_accuracy: f64,
    pub learning_accuracy: f64,
    pub param_distance: f64,
}

impl ContinualMetrics {
    pub fn compute(a: &AccuracyMatrix, w_0: &[f64], w_t: &[f64]) -> Result<Self> {
        Ok(ContinualMetrics {
            average_forgetting: average_forgetting(a)?,
            average_forgetting_inclusive: average_forgetting_inclusive(a)?,
            average_accuracy: average_accuracy(a)?,
            learning_accuracy: learning_accuracy(a)?,
            param_distance: param_distance(w_t, w_0)?,
        })
    }
}
