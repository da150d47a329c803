//! Forward transport problems `A0 u_t + A . grad u + p u = S` with inflow
//! data on the incoming boundary and initial data at `t = 0`.

mod energy;
mod partition;
mod solve;
mod upwind;

pub use energy::{check_energy_estimate, compute_energy, EnergyReport, EnergyTrace};
pub use partition::{partition_boundary, BoundaryPartition};
pub use solve::{solve_forward, ForwardProblem, SolutionField, Source, TraceRow};
pub use upwind::{stable_nt, UpwindOperator, CFL_SAFETY};
