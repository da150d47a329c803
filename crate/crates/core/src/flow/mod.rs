//! Integral curves of the frozen field `A(., 0)` and the Carleman weight
//! built from their arc length.

mod curve;
mod ode;
mod weight;

pub use curve::{
    check_dissipative, trace_curve, DissipativityReport, FailureKind, IntegralCurve,
    NotDissipative, TraceOptions,
};
pub use weight::{
    beta_for_horizon, build_inverse_weight, build_weight, compute_grad_phi0, compute_phi0, verify_gradient_identity,
    GradientIdentityReport, Phi0, WeightData, WeightSummary,
};
