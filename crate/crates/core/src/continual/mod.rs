//! Task-incremental continual learning: task sequences, sequential
//! fine-tuning and forgetting metrics.

pub mod images;
pub mod metrics;
pub mod sequential;
pub mod tasks;

pub use images::{rotate_image, rotate_set, synthetic_digit_splits, synthetic_digits, ImageSet, ImageSplits};
pub use metrics::{
    average_accuracy, average_forgetting, average_forgetting_inclusive, learning_accuracy, param_distance, AccuracyMatrix,
    ContinualMetrics,
};
pub use sequential::{train_sequential, SequentialRun};
pub use tasks::{default_angles, rotated_task_sequence, split_task_sequence, Task, TaskRecipe, TaskSequence};
