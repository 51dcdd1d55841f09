//! Benchmark data generation, amputation, imputation, effect oracles and
//! evaluation metrics.

mod amputation;
mod bench;
mod censoring;
mod dgp;
mod impute;
mod metrics;
mod oracle;

pub use amputation::{ampute, calibrated_probs, weighted_sum_scores, AmputationPattern, AmputationPlan, Tail, WssTerm};
pub use censoring::{censored_fraction, solve_censoring_rate, CensoredTimes, CENSORING_TOLERANCE};
pub use dgp::{
    assign_treatment, assignment_logits, cluster_labels, covariates_to_design, design_to_covariates,
    expected_log_time, gen_covariates, gen_design, gen_survival_times, log_rate, q_function, shape, simulate,
    softmax3, weibull_survival, weibull_time, Assignment, DgpConfig, DgpMode, Hazard, Setting, SimulatedData,
    SurvivalTimes, Truth,
};
pub use impute::{chained_impute, ImputeConfig};
pub use metrics::{
    default_gps_boxes, gps_subclass, metric_bias_rmse_by_gps, metric_concordance, metric_pehe, metric_selection,
    GpsBox, SelectionMetrics, SubclassError, DEFAULT_GPS_SUBCLASSES,
};
pub use oracle::{true_effect, true_iste_oracle, weibull_rmst, EffectScale};
pub use bench::{
    run_experiment, HeterogeneityReplicate, MeanSd, MetricsReport, PairMetrics, PairSummary, ReplicateFailure,
    ScenarioConfig, SelectionOutcome, SelectionSummary, SubclassSummary, VarselectReplicate,
};
