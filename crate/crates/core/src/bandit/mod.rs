//! Contextual bandits with a neural surrogate whose uncertainty comes from
//! the linearized Laplace posterior.

pub mod env;
pub mod laplace;
pub mod run;
pub mod schedule;

pub use env::{gaussian_blobs, letter_like, magic_like, make_bandit_env, standardize, BanditEnvironment, LabeledData};
pub use laplace::{fit_laplace, tune_prior_precision, update_noise, LaplaceForm, LaplacePosterior, TuneMode};
pub use run::{cumulative_regret, run_bandit, BanditConfig, LaplaceSurrogate, RegretTrace, RewardModel};
pub use schedule::{gamma_ntk_theory, ucb_select, NtkTheoryParams, Schedule, TIE_TOLERANCE};
