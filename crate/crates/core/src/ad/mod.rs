//! Forward-mode automatic differentiation with branch tracing.

mod dual;
mod trace;

pub use dual::{constant_parameters, seed_parameters, Dual, MAX_PARAMS};
pub use trace::{
    BranchKey, BranchRecord, BranchRegistry, BranchSite, Observation, PathKey, SiteId, TraceContext, TraceMode,
    DEFAULT_REGISTRY_CAP,
};
