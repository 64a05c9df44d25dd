//! Asset-pricing tests: time-series alphas, Fama-MacBeth, GRS, Bayesian
//! factor-subset comparison and fixed-effects determinants.

mod bayes;
mod factors;
mod fama_macbeth;
mod grs;
mod ols;
mod panel_fe;
mod timeseries;

pub use bayes::{
    bs_marginal_likelihood, bs_posteriors, posteriors_from_log_ml, KMode, ModelPosterior,
    PosteriorPoint, DEFAULT_MIN_WINDOW, DEFAULT_PRIOR,
};
pub use factors::{FactorModel, FactorPanel};
pub use fama_macbeth::{
    fama_macbeth, fm_second_pass, CrossSection, FmConfig, FmResult, COLLINEAR_CONDITION,
    DEFAULT_FM_PORTFOLIOS, SCORE_PREMIUM,
};
pub use grs::{grs_test, GRSResult};
pub use ols::{design_with_intercept, ols, RegressionFit, StdErrors, SINGULAR_CONDITION};
pub use panel_fe::{fe_determinants, FeData, FeFit, FeSpec, FirmYearTable};
pub use timeseries::{
    rolling_betas, ts_alpha, ts_alpha_series, ts_regression, DEFAULT_BETA_WINDOW,
};
