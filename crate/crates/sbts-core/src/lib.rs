//! Kernel-bridge synthetic time-series generation: given a panel of sampled
//! paths, estimate an interval-wise bridge drift with Nadaraya-Watson kernel
//! weights and integrate new paths through it, plus the supporting pipeline
//! (scaling, bandwidth selection, reference simulators, MLE-based robustness
//! checks, and evaluation metrics).

pub mod data;
pub mod drift;
pub mod error;
pub mod metrics;
pub mod mle;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod scaling;
pub mod selection;
pub mod simulators;

pub use data::{
    read_panel_csv, write_panel_csv, DriftConfig, GenerationConfig, MarkovOrder, Panel,
    StartPolicy, TimeGrid,
};
pub use drift::{estimate_drift, DriftQuery};
pub use error::{Result, SbtsError};
pub use metrics::{
    autocorrelation_score, cross_correlation_score, evaluate, marginal_ks, onnd,
    two_sample_proxy, MetricReport,
};
pub use mle::{
    fit_heston, fit_ou, heston_nll, ou_nll, run_robustness, FitResult, RobustnessConfig,
    RobustnessProcess, RobustnessReport,
};
pub use sampler::{
    generate_conditional_terminals, generate_paths, GeneratedPanel, PathProvenance,
};
pub use scaling::{
    rescale_increments, rescale_returns, returns_to_base_one, to_log_returns, ScalingTransform,
};
pub use selection::{select, BandwidthCandidate, SelectionConfig, SelectionReport};
pub use simulators::{
    simulate_ar, simulate_fbm, simulate_garch2, simulate_heston, simulate_ou, simulate_sine,
    HestonLayout, HestonParams, HestonRanges, OuParams, OuRanges,
};
