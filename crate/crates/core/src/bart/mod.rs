//! Sum-of-trees regression engine sampled by Bayesian backfitting.

mod forest;
mod moves;
mod predictors;
mod serialize;
mod tree;

pub use forest::{compute_vip, init_forest, BartConfig, BartHyper, Forest, MoveCounts, SCALE_FLOOR};
pub use moves::{leaf_log_lik, propose_move, split_prob, MoveContext, MoveDetail, MoveKind, MoveProbs, TreeMove};
pub use predictors::{PredictorKind, Predictors, MAX_LEVELS};
pub use serialize::{read_forest, write_forest, ForestRecord, ForestSnapshot};
pub use tree::{DecisionTree, Node, PreorderNode, SplitRule};
