//! TOML scenario files: domain, grid, coefficients and experiment blocks.
//!
//! Relative CSV paths are resolved against the scenario file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fields::{
    CoefficientSet, Facet, Grid, Point, ProblemDomain, ScalarField, ScalarKind, SineTerm, TimeFactor,
    VectorField,
};
use crate::inverse::{Icp2Setup, IcpSetup, Measurement, PrincipalPair, ReconstructOptions};
use crate::io::read_sampled_field;
use crate::transport::stable_nt;

/// Pipeline stage requested by a scenario or subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Check,
    Weight,
    Solve,
    Carleman,
    Isp,
    Icp,
    Icp2,
    All,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Check,
        Stage::Weight,
        Stage::Solve,
        Stage::Carleman,
        Stage::Isp,
        Stage::Icp,
        Stage::Icp2,
        Stage::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Check => "check",
            Stage::Weight => "weight",
            Stage::Solve => "solve",
            Stage::Carleman => "carleman",
            Stage::Isp => "isp",
            Stage::Icp => "icp",
            Stage::Icp2 => "icp2",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { x: [f64; 2], horizon: f64 },
    Rectangle { x: [f64; 2], y: [f64; 2], horizon: f64 },
    HalfDisc { radius: f64, horizon: f64 },
    Annulus { radius: f64, horizon: f64 },
}

impl DomainSpec {
    pub fn build(&self) -> Result<ProblemDomain> {
        let d = match *self {
            DomainSpec::Interval { x, horizon } => ProblemDomain::interval(x[0], x[1], horizon),
            DomainSpec::Rectangle { x, y, horizon } => ProblemDomain::rectangle(x, y, horizon),
            DomainSpec::HalfDisc { radius, horizon } => ProblemDomain::half_disc(radius, horizon),
            DomainSpec::Annulus { radius, horizon } => ProblemDomain::annulus(radius, horizon),
        };
        d.validate()?;
        Ok(d)
    }

    fn set_horizon(&mut self, t: f64) {
        match self {
            DomainSpec::Interval { horizon, .. }
            | DomainSpec::Rectangle { horizon, .. }
            | DomainSpec::HalfDisc { horizon, .. }
            | DomainSpec::Annulus { horizon, .. } => *horizon = t,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Nodes per axis (one entry in 1D).
    pub n: Vec<usize>,
    /// Time intervals; the smallest stable count when absent.
    pub nt: Option<usize>,
    /// Dyadic refinements applied before the run.
    #[serde(default)]
    pub refine: u32,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarKindSpec {
    Constant {
        value: f64,
    },
    Affine {
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        grad: Point,
        #[serde(default)]
        ct: f64,
    },
    Wave {
        amp: f64,
        k: Point,
        #[serde(default)]
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Gaussian {
        amp: f64,
        center: Point,
        width: f64,
    },
    Bump {
        amp: f64,
        center: Point,
        radius: f64,
    },
    Series {
        terms: Vec<SineTerm>,
    },
    Csv {
        path: PathBuf,
    },
}

/// Scalar field: a catalog entry or a CSV sample, optionally multiplied by
/// a time factor.
#[derive(Clone, Debug, Deserialize)]
pub struct ScalarSpec {
    #[serde(flatten)]
    pub kind: ScalarKindSpec,
    pub time: Option<TimeFactor>,
}

impl ScalarSpec {
    pub fn constant(value: f64) -> Self {
        ScalarSpec {
            kind: ScalarKindSpec::Constant { value },
            time: None,
        }
    }

    pub fn build(&self, base: &Path, dim: usize) -> Result<ScalarField> {
        let f = match &self.kind {
            ScalarKindSpec::Constant { value } => ScalarField::constant(*value),
            ScalarKindSpec::Affine { c0, grad, ct } => ScalarField::affine(*c0, *grad, *ct),
            ScalarKindSpec::Wave { amp, k, omega, phase } => ScalarField::new(ScalarKind::Wave {
                amp: *amp,
                k: *k,
                omega: *omega,
                phase: *phase,
            }),
            ScalarKindSpec::Gaussian { amp, center, width } => ScalarField::new(ScalarKind::Gaussian {
                amp: *amp,
                center: *center,
                width: *width,
            }),
            ScalarKindSpec::Bump { amp, center, radius } => ScalarField::new(ScalarKind::Bump {
                amp: *amp,
                center: *center,
                radius: *radius,
            }),
            ScalarKindSpec::Series { terms } => ScalarField::sine_series(terms.clone()),
            ScalarKindSpec::Csv { path } => {
                let s = read_sampled_field(&base.join(path), dim)?;
                if s.components() != 1 {
                    return Err(Error::Config(format!("{}: scalar field needs one value column", path.display())));
                }
                ScalarField::sampled(s)
            }
        };
        Ok(match &self.time {
            Some(t) => f.with_time(t.clone()),
            None => f,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorKindSpec {
    Constant {
        value: Point,
    },
    /// `matrix x + offset + drift t`.
    Affine {
        matrix: [[f64; 2]; 2],
        #[serde(default)]
        offset: Point,
        #[serde(default)]
        drift: Point,
    },
    /// `(-y, x)`.
    Rotation,
    /// `(-x, -1)`.
    HalfDiscSink,
    Csv {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Deserialize)]
pub struct VectorSpec {
    #[serde(flatten)]
    pub kind: VectorKindSpec,
    pub time: Option<TimeFactor>,
}

impl VectorSpec {
    pub fn build(&self, base: &Path, dim: usize) -> Result<VectorField> {
        let f = match &self.kind {
            VectorKindSpec::Constant { value } => VectorField::constant(*value),
            VectorKindSpec::Affine { matrix, offset, drift } => VectorField::affine(*matrix, *offset, *drift),
            VectorKindSpec::Rotation => VectorField::rotation(),
            VectorKindSpec::HalfDiscSink => VectorField::half_disc_sink(),
            VectorKindSpec::Csv { path } => {
                let s = read_sampled_field(&base.join(path), dim)?;
                if s.components() != dim {
                    return Err(Error::Config(format!(
                        "{}: vector field needs {dim} value columns, found {}",
                        path.display(),
                        s.components()
                    )));
                }
                VectorField::sampled(s)
            }
        };
        Ok(match &self.time {
            Some(t) => f.with_time(t.clone()),
            None => f,
        })
    }
}

fn one() -> ScalarSpec {
    ScalarSpec::constant(1.0)
}

fn zero() -> ScalarSpec {
    ScalarSpec::constant(0.0)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub rho: f64,
    pub spd_constant: Option<f64>,
    #[serde(default = "one")]
    pub a0: ScalarSpec,
    pub a: VectorSpec,
    #[serde(default = "zero")]
    pub p: ScalarSpec,
    #[serde(default = "one")]
    pub r: ScalarSpec,
    #[serde(default = "zero")]
    pub f: ScalarSpec,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightParams {
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    #[serde(default = "zero")]
    pub inflow: ScalarSpec,
    #[serde(default = "zero")]
    pub init: ScalarSpec,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            inflow: zero(),
            init: zero(),
        }
    }
}

fn default_count() -> usize {
    20
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanParams {
    pub s_list: Option<Vec<f64>>,
    #[serde(default = "default_count")]
    pub count: usize,
}

impl Default for CarlemanParams {
    fn default() -> Self {
        CarlemanParams {
            s_list: None,
            count: default_count(),
        }
    }
}

fn default_lambda() -> f64 {
    1e-8
}

fn default_stride() -> usize {
    2
}

fn default_ensemble() -> usize {
    10
}

fn default_m0() -> f64 {
    1e-3
}

fn default_bound() -> f64 {
    1e3
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IspParams {
    /// Source to reconstruct.
    pub source: ScalarSpec,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Relative Gaussian noise per trace channel; zero for clean data.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default = "default_m0")]
    pub m0: f64,
    /// Carleman parameter of the data weight; zero disables it.
    #[serde(default)]
    pub carleman_s: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcpParams {
    pub p1: ScalarSpec,
    pub p2: ScalarSpec,
    pub inflow: ScalarSpec,
    pub alpha: ScalarSpec,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_m0")]
    pub m0: f64,
    #[serde(default = "default_bound")]
    pub bound_m: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub alpha: ScalarSpec,
    pub inflow: ScalarSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    #[serde(default = "one")]
    pub a0: ScalarSpec,
    pub a: VectorSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Icp2Params {
    #[serde(default = "one")]
    pub p: ScalarSpec,
    pub measurements: Vec<MeasurementSpec>,
    pub pair1: PairSpec,
    pub pair2: PairSpec,
    /// Observed facets: `x0`, `x1`, `y0`, `y1`, `mask`.
    pub gamma: Vec<String>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_m0")]
    pub m0: f64,
    #[serde(default = "default_bound")]
    pub bound_m: f64,
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Stage,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub weight: WeightParams,
    #[serde(default)]
    pub solve: SolveParams,
    #[serde(default)]
    pub carleman: CarlemanParams,
    pub isp: Option<IspParams>,
    pub icp: Option<IcpParams>,
    pub icp2: Option<Icp2Params>,
    /// Directory that relative paths refer to.
    #[serde(skip)]
    pub base: PathBuf,
}

/// Everything a run needs, built from a scenario.
#[derive(Clone, Debug)]
pub struct Problem {
    pub domain: ProblemDomain,
    pub cs: CoefficientSet,
    pub grid: Grid,
}

impl Scenario {
    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        s.base = base.into();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::parse(&text, base)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.grid.n.len() != dim {
            return Err(Error::Config(format!(
                "grid.n has {} entries for a {dim}-dimensional domain",
                self.grid.n.len()
            )));
        }
        let needs = |present: bool, block: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!("kind = \"{}\" requires an [{block}] block", self.kind)))
            }
        };
        match self.kind {
            Stage::Isp => needs(self.isp.is_some(), "isp")?,
            Stage::Icp => needs(self.icp.is_some(), "icp")?,
            Stage::Icp2 => needs(self.icp2.is_some(), "icp2")?,
            _ => {}
        }
        if let Some(p) = &self.icp2 {
            for g in &p.gamma {
                if Facet::parse(g).is_none() {
                    return Err(Error::Config(format!("unknown facet '{g}' in icp2.gamma")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.domain {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn set_horizon(&mut self, t: f64) {
        self.domain.set_horizon(t);
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        let (b, d) = (&self.base, self.dim());
        let c = &self.coefficients;
        if !(c.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", c.rho)));
        }
        let mut cs = CoefficientSet::transport(c.a.build(b, d)?, c.rho)
            .with_a0(c.a0.build(b, d)?)
            .with_p(c.p.build(b, d)?)
            .with_r(c.r.build(b, d)?)
            .with_f(c.f.build(b, d)?);
        cs.spd_constant = c.spd_constant;
        Ok(cs)
    }

    /// Domain, coefficients and grid. Without an explicit `nt` the smallest
    /// stable count is used for the coefficients `stable_for` (defaulting
    /// to the scenario's own).
    pub fn problem(&self, stable_for: &[&CoefficientSet]) -> Result<Problem> {
        let domain = self.domain.build()?;
        let cs = self.coefficients()?;
        let n = [self.grid.n[0], self.grid.n.get(1).copied().unwrap_or(0)];
        let mut grid = Grid::new(&domain, n, self.grid.nt.unwrap_or(2))?;
        for _ in 0..self.grid.refine {
            grid = grid.refined()?;
        }
        if self.grid.nt.is_none() {
            let mut nt = stable_nt(&cs, &grid)?;
            for other in stable_for {
                nt = nt.max(stable_nt(other, &grid)?);
            }
            grid = grid.with_nt(nt)?;
        }
        Ok(Problem { domain, cs, grid })
    }

    pub fn scalar(&self, s: &ScalarSpec) -> Result<ScalarField> {
        s.build(&self.base, self.dim())
    }

    pub fn icp_setup(&self, p: &IcpParams, reconstruct: bool) -> Result<IcpSetup> {
        Ok(IcpSetup {
            p1: self.scalar(&p.p1)?,
            p2: self.scalar(&p.p2)?,
            inflow: self.scalar(&p.inflow)?,
            alpha: self.scalar(&p.alpha)?,
            m0: p.m0,
            bound_m: p.bound_m,
            stride: p.stride,
            reconstruct: reconstruct.then(|| ReconstructOptions {
                lambda: p.lambda,
                ..Default::default()
            }),
        })
    }

    pub fn icp2_setup(&self, p: &Icp2Params, reconstruct: bool) -> Result<Icp2Setup> {
        let (b, d) = (&self.base, self.dim());
        let pair = |s: &PairSpec| -> Result<PrincipalPair> {
            Ok(PrincipalPair {
                a0: s.a0.build(b, d)?,
                a: s.a.build(b, d)?,
            })
        };
        Ok(Icp2Setup {
            p: self.scalar(&p.p)?,
            rho: self.coefficients.rho,
            measurements: p
                .measurements
                .iter()
                .map(|m| {
                    Ok(Measurement {
                        alpha: self.scalar(&m.alpha)?,
                        inflow: self.scalar(&m.inflow)?,
                    })
                })
                .collect::<Result<_>>()?,
            pair1: pair(&p.pair1)?,
            pair2: pair(&p.pair2)?,
            gamma: p.gamma.iter().filter_map(|g| Facet::parse(g)).collect(),
            m0: p.m0,
            bound_m: p.bound_m,
            stride: p.stride,
            reconstruct: reconstruct.then(|| ReconstructOptions {
                lambda: p.lambda,
                ..Default::default()
            }),
        })
    }
}
