//! Metropolis-within-Gibbs sampler for the random-intercept AFT model with
//! a sum-of-trees mean function.

mod centering;
mod chain;
mod draws;
mod gibbs;

pub use centering::{center_responses, censored_lognormal_loglik, fit_lognormal, CenteringConstants, SIGMA_FLOOR};
pub use chain::{run_chain, ChainConfig, RiaftState, StateDump};
pub use draws::{predict_posterior, Draw, DrawHeader, PosteriorDraws};
pub use gibbs::{
    alpha_cluster_conditional, alpha_global_conditional, augment_censored, b_conditional, gibbs_update_alpha,
    gibbs_update_b, gibbs_update_tau2, tau2_conditional, ExpansionMode, InterceptBlock,
};
pub use crate::stats::sample_trunc_normal;
