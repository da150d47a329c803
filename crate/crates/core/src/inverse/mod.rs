//! Source, zeroth-order and principal-part recovery experiments built on a
//! matrix-free linear source-to-trace map.

mod admissibility;
mod icp;
mod icp2;
mod isp;
mod map;
mod solve;

pub use admissibility::{check_admissibility, AdmissibilityCheck, ConditionCheck, ProblemKind};
pub use icp::{icp_reduce_and_run, IcpReport, IcpSetup};
pub use icp2::{icp2_run, Icp2Report, Icp2Setup, Measurement, PrincipalPair};
pub use isp::{
    carleman_reweight, field_norm, isp_forward_map, isp_map, isp_reconstruct, isp_reconstruct_discrepancy,
    isp_stability_ratio, noisy_observation, random_bumps, random_sources, ratio_trial, reconstruct_stacked,
    Observation, Reconstruction, ReconstructOptions, StabilityRatioReport, Trial,
};
pub use map::{ObservationSet, Prolongation, SourceMap, TraceSample};
pub use solve::{add_noise, relative_l2, solve_tikhonov, NoiseChannels};
