//! Polynomial model identification: pool grammar, OLS, stepwise selection
//! and analytic prediction intervals.

pub mod model;
pub mod ols;
pub mod pool;
pub mod stepwise;
pub mod term;

pub use model::{FitStatistics, PolyInterval, PolynomialModel, StepAction, StepRecord};
pub use ols::{ols_fit, residual_variance, OlsFit};
pub use pool::{expand_pool, CandidatePool};
pub use stepwise::{stepwise_fit, StepwiseCriteria};
pub use term::{Monomial, Term};
