//! Counterfactual contrasts from posterior draws and fit-the-fit subgroup
//! discovery.

mod forest;
mod functional;
mod iste;
mod report;
mod subgroups;

pub use forest::{r_squared, ForestConfig, RandomForestModel, RegNode, RegTree, TreeParams};
pub use functional::{
    functional_draws, functional_effect, predict_functional, predict_rmst, predict_survival_prob, rmst,
    survival_prob, Functional, InterceptMode, RMST_TOL,
};
pub use iste::{estimate_ate, estimate_iste, estimate_iste_new, pool_imputations, pool_iste, AteEstimate, IsteEstimate};
pub use report::{write_ate_csv, write_iste_csv, RuleEntry, RuleReport};
pub use subgroups::{
    extract_rules, feature_matrix, fit_the_fit, Condition, FitTheFitConfig, FitTheFitResult, RuleConfig, SubgroupRule,
};
