//! Task sequences built from a base image dataset.

use serde::{Deserialize, Serialize};

use super::images::{rotate_set, ImageSet, ImageSplits};
use crate::error::{Error, Result};
use crate::kernel::entk::fingerprint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub train: ImageSet,
    pub test: ImageSet,
    /// Classes visible to this task's head; `None` means a shared head over
    /// all classes.
    pub classes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskRecipe {
    Rotated { angles: Vec<f64> },
    Split { classes_per_task: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
    pub recipe: TaskRecipe,
    pub base_fingerprint: String,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// `0, 22.5, ..., 180`.
pub fn default_angles() -> Vec<f64> {
    (0..9).map(|i| 22.5 * i as f64).collect()
}

fn base_fingerprint(base: &ImageSplits) -> String {
    fingerprint(&[&base.train.x, &base.test.x])
}

/// One task per angle with a shared head.
pub fn rotated_task_sequence(base: &ImageSplits, angles: &[f64]) -> Result<TaskSequence> {
    if angles.is_empty() {
        return Err(Error::Config("at least one rotation angle is needed".into()));
    }
    let tasks = angles
        .iter()
        .map(|&a| {
            Ok(Task {
                name: format!("rotate-{a}"),
                train: rotate_set(&base.train, a)?,
                test: rotate_set(&base.test, a)?,
                classes: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSequence {
        tasks,
        recipe: TaskRecipe::Rotated { angles: angles.to_vec() },
        base_fingerprint: base_fingerprint(base),
    })
}

/// Contiguous blocks of `classes_per_task` labels; each task keeps only its
/// own classes and is evaluated with its own head.
pub fn split_task_sequence(base: &ImageSplits, classes_per_task: usize) -> Result<TaskSequence> {
    let k = base.train.num_classes;
    if classes_per_task == 0 || !k.is_multiple_of(classes_per_task) {
        return Err(Error::Config(format!("{k} classes cannot be split into blocks of {classes_per_task}")));
    }
    let pick = |set: &ImageSet, classes: &[usize]| {
        let idx: Vec<usize> = (0..set.len()).filter(|&i| classes.contains(&set.labels[i])).collect();
        set.subset(&idx)
    };
    let tasks = (0..k / classes_per_task)
        .map(|t| {
            let classes: Vec<usize> = (t * classes_per_task..(t + 1) * classes_per_task).collect();
            Task {
                name: format!("classes-{}-{}", classes[0], classes[classes.len() - 1]),
                train: pick(&base.train, &classes),
                test: pick(&base.test, &classes),
                classes: Some(classes),
            }
        })
        .collect();
    Ok(TaskSequence {
        tasks,
        recipe: TaskRecipe::Split { classes_per_task },
        base_fingerprint: base_fingerprint(base),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continual::images::synthetic_digit_splits;

    #[test]
    fn rotated_examples() {
        let base = synthetic_digit_splits(20, 10, 28, 0).unwrap();
        assert_eq!(rotated_task_sequence(&base, &default_angles()).unwrap().len(), 9);
        let one = rotated_task_sequence(&base, &[0.0]).unwrap();
        assert_eq!(one.tasks[0].train, base.train);
        assert_eq!(one.tasks[0].test, base.test);
    }

    #[test]
    fn split_partitions_classes() {
        let base = synthetic_digit_splits(40, 20, 12, 0).unwrap();
        let seq = split_task_sequence(&base, 2).unwrap();
        assert_eq!(seq.len(), 5);
        let mut all: Vec<usize> = seq.tasks.iter().flat_map(|t| t.classes.clone().unwrap()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_task_sequence(&base, 10).unwrap().tasks[0].train, base.train);
        assert!(matches!(split_task_sequence(&base, 3), Err(Error::Config(_))));
    }
}
