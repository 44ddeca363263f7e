//! Maximum-likelihood estimation for zero-inflated binomial regression.
//!
//! A response `y_i` out of `n_i` trials is a structural zero with probability
//! `p_i = F(beta' x_i)` and otherwise `Binomial(n_i, pi_i)` with
//! `pi_i = F(mu' w_i)`, where `F` is the probit or logit link.
//!
//! ```
//! use zib_core::{fit, generate, FitConfig, SimDesign};
//!
//! let data = generate(&SimDesign::default_design(400, 11)).unwrap();
//! let result = fit(&data, &FitConfig::default()).unwrap();
//! assert!(result.converged);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod link;
pub mod model;
pub mod simulate;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use inference::{covariance, infer, standardize, wald_intervals, InferenceReport};
pub use likelihood::{
    condition_diagnostics, fd_gradient, fd_hessian, log_likelihood, observed_information, score,
    ConditionDiagnostics, InformationMatrix, ScoreWorkspace,
};
pub use link::{Link, LinkKind};
pub use model::{
    log_pmf, mixture_probs, pmf, predictors, Dataset, LinkPair, MixtureProbabilities, Observation,
    ParameterVector,
};
pub use simulate::{generate, mc_study, McOptions, McReport, SimDesign};
pub use solver::{fit, fit_binomial_only, fit_from, initialize, FitConfig, FitResult, FitWarning};
