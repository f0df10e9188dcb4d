//! Survey statistics and consistency checks on reported summaries.

pub mod audit;
mod describe;
mod inference;
pub mod survey;
mod tdist;

pub use describe::{cronbach_alpha, descriptives, mean, variance, Descriptives};
pub use inference::{
    correlation_from_r, ols_simple, pearson, regression_from_r, t_from_r, ttest_from_summary, ttest_independent,
    Correlation, GroupSummary, RegressionReport, TTestReport, TTestVariant,
};
pub use tdist::{f_sf, ln_beta, ln_gamma, reg_inc_beta, t_two_sided_p};
