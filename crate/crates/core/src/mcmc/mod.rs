//! Full-posterior Gibbs sampler, retained-draw storage, convergence
//! diagnostics and posterior summaries.

mod chain;
mod diagnostics;
mod ess;
mod store;
mod summary;

pub use chain::{chain_seed, run_chain, run_chain_with_diagnostics, run_chains, Chain, ChainState};
pub use diagnostics::{monitored_scalars, process_names, static_parameters, ChainDiagnostics, EssEntry};
pub use ess::{effective_sample_size, Ess};
pub use store::{DrawLayout, PosteriorStore, Provenance, SAMPLER_VERSION};
pub use summary::{
    covariance_series, draw_covariance, parameter_table, quantile_sorted, quantiles, summarize, CovarianceSeries,
    ParameterSummary, Summary, SummaryChecks, TimePointSummary,
};
