//! Fully connected networks: specification, parameters, forward pass,
//! Jacobian products and mini-batch training.

pub mod forward;
pub mod jacobian;
pub mod params;
pub mod spec;
pub mod train;

pub use forward::{forward, forward_cache, ForwardCache};
pub use jacobian::{jacobian, JacobianOperator, DEFAULT_JACOBIAN_BUDGET};
pub use params::{init_params, InitConfig, ParameterVector, WeightDistribution};
pub use spec::{Activation, LayerSlot, LayerSpec, NetworkSpec, Parametrization};
pub use train::{accuracy, predict_classes, train, Dataset, Loss, Optimizer, Targets, TrainConfig, TrainResult};
