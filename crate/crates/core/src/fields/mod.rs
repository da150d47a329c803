//! Domains, grids and coefficient fields, plus numerical certificates of
//! the standing assumptions on the principal part `A`.

mod checks;
mod coefficients;
mod domain;
mod function;
mod grid;

pub use checks::{
    check_positivity, check_spd, structure_factor, structure_reconstruction_error,
    PositivityReport, SpdReport, StructureFactor, DEFAULT_SPD_DIRECTIONS,
};
pub use coefficients::{
    CoefficientSet, FieldId, SampledField, ScalarField, ScalarKind, SineTerm, TimeFactor,
    VectorField, VectorKind,
};
pub use domain::{Facet, Mask, Point, ProblemDomain, SampledLevel};
pub use function::GridFunction;
pub use grid::{BoundaryNode, Grid};
