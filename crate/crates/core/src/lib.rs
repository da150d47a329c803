//! Numerical laboratory for first-order hyperbolic operators
//! `P u = A0(x,t) u_t + A(x,t) . grad u` with space-time coefficients.
//!
//! The crate builds the arc-length Carleman weight `phi(x,t) = phi0(x) - beta t`
//! from the integral curves of `A(., 0)`, solves the forward transport
//! problems with a first-order upwind scheme, checks the weighted and energy
//! estimates on grids, and runs the inverse source and coefficient
//! experiments.
//!
//! Module map:
//!
//! * [`fields`]: domains, tensor grids, coefficient fields and the standing
//!   assumption checks (positivity, spd, structure factor).
//! * [`flow`]: integral-curve tracing, dissipativity, `phi0` and the weight
//!   constants.
//! * [`transport`]: inflow/outflow partition, upwind solver, energy.
//! * [`carleman`]: conjugated operator and s-sweeps of the weighted estimate.
//! * [`inverse`]: admissibility, forward maps with exact discrete adjoints,
//!   reconstructions and stability ratios.
//! * [`scenario`] and [`pipeline`]: configuration files and the stage runner
//!   behind the command line tool.
//! * [`acceptance`]: the acceptance criteria, shared by the test suite and
//!   the `accept` subcommand.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod acceptance;
pub mod carleman;
pub mod error;
pub mod fields;
pub mod flow;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod scenario;
pub mod transport;

pub use error::{Condition, Error, Result};
pub use fields::{
    CoefficientSet, FieldId, Grid, GridFunction, Mask, ProblemDomain, ScalarField, TimeFactor,
    VectorField,
};
pub use flow::{IntegralCurve, WeightData};
