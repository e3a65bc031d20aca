//! Model likelihood, hierarchical priors, MAP fitting, MCMC and diagnostics.

pub mod diagnostics;
pub mod draws;
pub mod hierarchical;
pub mod map;
pub mod model;
pub mod recovery;
pub mod sampler;
pub mod trajectories;

pub use diagnostics::{ess, rhat};
pub use draws::{ParamSummary, PosteriorDraws};
pub use hierarchical::{posterior_mean_params, sample_posterior, HierarchicalTarget, InterceptOnlyTarget};
pub use map::{fit_map, FitOptions, FitResult};
pub use model::{log_likelihood, log_posterior, Dataset, HyperParams, RateFamily};
pub use sampler::SamplerConfig;
pub use recovery::{run_recovery, RecoveryConfig, RecoveryReport};
pub use trajectories::{posterior_trajectories, PosteriorTrajectories};
