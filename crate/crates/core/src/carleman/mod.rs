//! Numerical checks of the Carleman estimate for the weight
//! `phi = phi0 - beta t`: the conjugated operator and s-sweeps.

mod catalog;
mod conjugate;
mod ops;
mod sweep;

pub use catalog::{test_function, test_functions, TestFunction};
pub use conjugate::{conjugate_operator, ConjugateResult};
pub(crate) use ops::{space_diff, time_diff};
pub use ops::{apply_p, apply_p_plus};
pub use sweep::{default_s_list, log_spaced, sweep_carleman, CarlemanReport, SweepRow};
