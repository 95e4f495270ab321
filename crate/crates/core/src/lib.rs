//! Capacity of the flat-fading Gaussian relay channel under linear
//! time-invariant relaying.
//!
//! The [`optimizer`] module solves the finite-mode capacity problems, the
//! [`oracle`] module cross-checks them with a per-bin optimization, the
//! [`spectral`] module evaluates exact block mutual information of
//! Toeplitz models and its spectral limit, and [`filterbank`] turns a mode
//! allocation into a concrete relay filter.

pub mod channel;
pub mod error;
pub mod filterbank;
pub mod optimizer;
pub mod oracle;
pub mod spectral;

pub use channel::{
    allocation_rate, allocation_rate_in, cap, cap_in, direct_rate, effective_snr_fd,
    effective_snr_lti, full_power_iaf_gain, iaf_allocation, iaf_gain, iaf_rate,
    iaf_rate_full_power, relay_power_of, ChannelParams, ModeAllocation, RateReport, RateUnit,
};
pub use error::{Error, Result};
pub use filterbank::{
    achieved_rate, bank_response, plan_bands, read_taps_text, synthesize_taps, taps_rate,
    write_taps_text, Band, BandPlan, TapFile,
};
pub use optimizer::{
    classical_cutset_bound, cutset_bound, inner_concave_solve, kkt_residual, optimize_fd,
    optimize_lti_complex, optimize_lti_real, rate_report, waterfill_mu, FdAllocation,
    FdSolution, InnerSolution, KKTReport, LtiSolution, SearchDiagnostics, SolverOptions,
};
pub use oracle::{cluster_lambdas, lift_to_allocation, oracle_optimize, BinSolution, ClusterSummary};
pub use spectral::{
    autocovariances, convergence_gap, power_checks, smooth_test_spectrum, spectral_rate,
    spectrum_fd, spectrum_fr, toeplitz_mi, FilterTaps, FrequencyResponse, PowerGaps,
    PowerSpectrum, SpectrumGrid,
};
