//! Plain sequential fine-tuning across a task sequence.

use serde::{Deserialize, Serialize};

use super::metrics::AccuracyMatrix;
use super::tasks::TaskSequence;
use crate::error::{Error, Result};
use crate::nn::{accuracy, train, Dataset, Loss, NetworkSpec, ParameterVector, TrainConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequentialRun {
    pub accuracy: AccuracyMatrix,
    pub w_0: ParameterVector,
    /// Parameters after the last completed task.
    pub w_t: ParameterVector,
    pub aborted: Option<String>,
}

/// Trains on each task in turn, with no replay or regularization, and
/// evaluates every task seen so far after each stage. Task `t` trains with
/// seed `derive_seed(cfg.seed, "task", [t])`.
pub fn train_sequential(
    spec: &NetworkSpec,
    theta0: &ParameterVector,
    tasks: &TaskSequence,
    cfg: &TrainConfig,
) -> Result<SequentialRun> {
    if cfg.loss != Loss::CrossEntropy {
        return Err(Error::Config("sequential classification training uses cross-entropy".into()));
    }
    let mut run = SequentialRun {
        accuracy: AccuracyMatrix::new(tasks.len()),
        w_0: theta0.clone(),
        w_t: theta0.clone(),
        aborted: None,
    };
    for (t, task) in tasks.tasks.iter().enumerate() {
        let mut stage = cfg.clone();
        stage.seed = rng::derive_seed(cfg.seed, "task", &[t as u64]);
        let data = Dataset::classification(task.train.x.clone(), task.train.labels.clone(), task.classes.clone());
        match train(spec, &run.w_t, &data, &stage) {
            Ok(r) => run.w_t = r.params,
            Err(e @ Error::Divergence { .. }) => {
                run.aborted = Some(format!("task {}: {e}", t + 1));
                return Ok(run);
            }
            Err(e) => return Err(e),
        }
        for (i, seen) in tasks.tasks[..=t].iter().enumerate() {
            let acc = accuracy(spec, &run.w_t, &seen.test.x, &seen.test.labels, seen.classes.as_deref())?;
            run.accuracy.set(t, i, acc)?;
        }
    }
    Ok(run)
}
