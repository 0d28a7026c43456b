//! Preference-optimization losses on exactly computable tabular policies.
//!
//! The crate provides:
//!
//! - softmax [`TabularPolicy`] tables with exact log-probabilities and KL
//!   ([`policy`]);
//! - the DPO family of losses, including the tilted `drdpo` variant and the
//!   `cdpo` / `ipo` / `rdpo` baselines ([`loss`]);
//! - the distributionally robust closed forms behind the tilted loss: Gibbs
//!   weights, worst-case reweightings, dual variables, and a finite-sample
//!   bound, each paired with a brute-force oracle ([`dro`]);
//! - analytic gradients with a central-difference oracle ([`grad`]);
//! - phi-divergence machinery with conjugates ([`divergence`]);
//! - synthetic pairwise tasks with injectable pointwise and pairwise noise
//!   ([`synth`]) and a deterministic trainer ([`mod@train`]).
//!
//! Core math is generic over the scalar type via [`scalar::Real`]; the
//! `*64` aliases below pin the `f64` lane used by the CLI and all reference
//! tolerances.

pub mod divergence;
pub mod dro;
pub mod error;
pub mod grad;
pub mod loss;
pub mod policy;
pub mod scalar;
pub mod synth;
pub mod train;

pub use divergence::{
    conjugate_sup_oracle, phi_divergence, DiscreteDistribution, GridSpec, PhiFamily,
};
pub use dro::{
    beta_star, generalization_bound, gibbs_weights, optimal_alpha, optimal_likelihood_ratio,
    optimal_reward_general_phi, penalized_objective, penalized_optimum, reward_variance_under_ref,
    simplex_search_oracle, worst_case_distribution, BoundInputs, WeightVector,
};
pub use error::{Error, Result};
pub use grad::{
    finite_diff, grad_baselines, grad_dpo, grad_dr_dpo, grad_loss, relative_gradient_error,
    GradientTable,
};
pub use loss::{
    cdpo_loss, dpo_loss, dr_dpo_loss, h_dpo, h_values, ipo_loss, loss_value, rdpo_loss, LossKind,
    LossSpec, LOSS_KIND_NAMES,
};
pub use policy::{
    implicit_reward, kl_policy, log_ratio, PreferenceDataset, PreferencePair, PromptSpace,
    RewardTable, TabularPolicy,
};
pub use scalar::Real;
pub use synth::{
    derive_seed, flip_pairs, gen_reference, gen_reward, sample_preferences, NoiseSpec, TaskSpec,
};
pub use train::{
    eval_expected_reward, eval_kl, eval_preference_accuracy, train, EvalInputs, TrainConfig,
    TrainReport, WeightStats,
};

/// `f64` lane used by the CLI and the reference tolerances.
pub type Policy64 = TabularPolicy<f64>;
pub type Reward64 = RewardTable<f64>;
pub type Gradient64 = GradientTable<f64>;
pub type Distribution64 = DiscreteDistribution<f64>;
