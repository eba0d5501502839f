//! Substitution models and site simulation.

mod model;
mod simulate;
mod sites;

pub use model::{derive_constants, ModelSpec, MutationModel};
pub use simulate::{extend_ranked_sites, extend_sites, extend_unrooted_sites, project_sites, replay, simulate_sites};
pub use sites::{Event, EventLog, Provenance, SiteMatrix};
