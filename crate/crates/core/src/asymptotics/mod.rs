//! Analytic approximations: Gaussian local limits, characteristic-function
//! scans, large-deviation rates and the quadratic operator `L`.

mod cfscan;
mod lclt;
mod operator;
mod rate;

pub use cfscan::{cf_scan, parse_grid_step, CfDomain, CfScanReport, MAX_SCAN_POINTS};
pub use lclt::{
    exact_class_term, gaussian_closure_directed, in_balanced_region, lclt_directed, lclt_relative_error,
    GaussianClosure, LcltResult,
};
pub use operator::{
    adaptive_gk, apply_l, closed_form_integral, family_one_basis, family_two_basis, operator_l_check, quadrature_p2,
    EigenFamily, OperatorReport, SymZeroMatrix,
};
pub use rate::{directed_objective, rate_directed_explicit, rate_directed_opt, rate_undirected_explicit, RateEvaluation};
