//! Synthetic data, agreement metrics, baseline clusterers and bound checks used
//! to evaluate the model.

pub mod baselines;
pub mod experiments;
pub mod generators;
pub mod metrics;
pub mod tailcheck;

pub use baselines::{gmm_em_diag, kmeans, spectral_clustering, GmmFit, KMeansFit};
pub use generators::{generate, Family, GeneratorSpec, Generated};
pub use metrics::{ami, ari, nmi, MetricsReport};
pub use tailcheck::{
    empirical_tail_check, fit_tail_params, mode_concentration_check, tail_bound_check, BoundStatus, ModeReport,
    TailBoundParams, TailReport,
};
