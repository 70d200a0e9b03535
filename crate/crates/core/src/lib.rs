//! AND/OR branch-and-bound for MPE over graphical models, with learned
//! subproblem complexity estimates driving parallel frontier selection.

pub mod executor;
pub mod features;
pub mod frontier;
pub mod generate;
pub mod graph;
pub mod minibucket;
pub mod model;
pub mod problem;
pub mod regression;
pub mod pseudo_tree;
pub mod search;

pub use features::{FeatureVector, PartialFeatures, FEATURE_COUNT};
pub use graph::{induced_width, min_fill_ordering, PrimalGraph};
pub use minibucket::{HeuristicError, MiniBucketHeuristic};
pub use model::{parse_uai, write_uai, Factor, GraphicalModel, ModelError, ParseError};
pub use problem::{Problem, ProblemOptions};
pub use pseudo_tree::{build_pseudo_tree, PseudoTree};
pub use search::{probe, solve, SearchConfig, SearchResult, SubproblemHandle};
