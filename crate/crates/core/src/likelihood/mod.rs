//! Site and multisite likelihoods by Felsenstein pruning, with a brute-force
//! oracle.

mod pruning;
mod view;

pub use pruning::{
    all_patterns, brute_force_site_likelihood, log_likelihood, root_invariance_check, site_likelihood,
    site_log_likelihood, LeafPattern, Pruner,
};
pub use view::RootedView;
