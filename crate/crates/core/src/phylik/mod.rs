//! Trees, Newick IO and likelihood evaluation.

pub mod likelihood;
pub mod newick;
pub mod tree;

pub use likelihood::{site_conditionals, total_log_likelihood, Engine, LikelihoodResult, SitePatterns};
pub use newick::{parse_newick, write_newick};
pub use tree::{Edge, GoldTree, Phylogeny, DEFAULT_BL, MAX_BL, MIN_BL};
