use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::domain::Point;
use super::function::GridFunction;
use super::grid::Grid;

/// Scalar time modulation `g(t)` multiplying a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFactor {
    /// `exp(rate t)`
    Exp { rate: f64 },
    /// `c0 + c1 t + c2 t^2 + ...`
    Poly { coeffs: Vec<f64> },
}

impl TimeFactor {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Exp { rate } => (rate * t).exp(),
            TimeFactor::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Exp { rate } => rate * (rate * t).exp(),
            TimeFactor::Poly { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c),
        }
    }
}

/// One term `coef * prod_k sin(pi k_i x_i)` of a sine series; axes with
/// zero wave number are skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub coef: f64,
    pub k: [f64; 2],
}

impl SineTerm {
    fn value(&self, x: Point) -> f64 {
        let mut v = self.coef;
        for a in 0..2 {
            if self.k[a] != 0.0 {
                v *= (PI * self.k[a] * x[a]).sin();
            }
        }
        v
    }

    fn grad(&self, x: Point) -> Point {
        let mut g = [0.0; 2];
        for a in 0..2 {
            if self.k[a] == 0.0 {
                continue;
            }
            let mut v = self.coef * PI * self.k[a] * (PI * self.k[a] * x[a]).cos();
            let b = 1 - a;
            if self.k[b] != 0.0 {
                v *= (PI * self.k[b] * x[b]).sin();
            }
            g[a] = v;
        }
        g
    }
}

/// Data sampled on a tensor space(-time) grid, interpolated bilinearly in
/// space and linearly in time.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub dim: usize,
    pub lo: Point,
    pub h: [f64; 2],
    pub n: [usize; 2],
    pub t0: f64,
    pub dt: f64,
    pub data: GridFunction,
}

impl SampledField {
    pub fn from_grid(grid: &Grid, data: GridFunction) -> Result<Self> {
        if data.nodes() != grid.node_count() {
            return Err(Error::Config(format!(
                "sampled field has {} nodes, grid has {}",
                data.nodes(),
                grid.node_count()
            )));
        }
        if data.levels() != 1 && data.levels() != grid.levels() {
            return Err(Error::Config(format!(
                "sampled field has {} time levels, grid has {}",
                data.levels(),
                grid.levels()
            )));
        }
        let b = grid.domain().bounds;
        Ok(SampledField {
            dim: grid.dim(),
            lo: [b[0][0], b[1][0]],
            h: grid.spacing(),
            n: grid.shape(),
            t0: 0.0,
            dt: grid.dt(),
            data,
        })
    }

    pub fn components(&self) -> usize {
        self.data.components()
    }

    fn axis(&self, k: usize, x: f64) -> (usize, f64) {
        if k >= self.dim || self.n[k] < 2 {
            return (0, 0.0);
        }
        let s = ((x - self.lo[k]) / self.h[k]).clamp(0.0, (self.n[k] - 1) as f64);
        let i = (s.floor() as usize).min(self.n[k] - 2);
        (i, s - i as f64)
    }

    fn spatial(&self, level: usize, x: Point, comp: usize) -> f64 {
        let (i, fx) = self.axis(0, x[0]);
        let (j, fy) = self.axis(1, x[1]);
        let at = |i: usize, j: usize| self.data.get(level, i + self.n[0] * j, comp);
        if self.dim == 1 {
            return (1.0 - fx) * at(i, 0) + fx * at(i + 1, 0);
        }
        (1.0 - fx) * (1.0 - fy) * at(i, j)
            + fx * (1.0 - fy) * at(i + 1, j)
            + (1.0 - fx) * fy * at(i, j + 1)
            + fx * fy * at(i + 1, j + 1)
    }

    pub fn value(&self, x: Point, t: f64, comp: usize) -> f64 {
        let levels = self.data.levels();
        if levels == 1 {
            return self.spatial(0, x, comp);
        }
        let s = ((t - self.t0) / self.dt).clamp(0.0, (levels - 1) as f64);
        let n = (s.floor() as usize).min(levels - 2);
        let ft = s - n as f64;
        (1.0 - ft) * self.spatial(n, x, comp) + ft * self.spatial(n + 1, x, comp)
    }

    /// Time derivative by second-order differences of the sampled levels.
    pub fn dt(&self, x: Point, t: f64, comp: usize) -> f64 {
        let levels = self.data.levels();
        if levels == 1 {
            return 0.0;
        }
        let s = ((t - self.t0) / self.dt).round().clamp(0.0, (levels - 1) as f64) as usize;
        let v = |n: usize| self.spatial(n, x, comp);
        if levels == 2 {
            return (v(1) - v(0)) / self.dt;
        }
        if s == 0 {
            (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * self.dt)
        } else if s == levels - 1 {
            (3.0 * v(s) - 4.0 * v(s - 1) + v(s - 2)) / (2.0 * self.dt)
        } else {
            (v(s + 1) - v(s - 1)) / (2.0 * self.dt)
        }
    }

    fn grad(&self, x: Point, t: f64, comp: usize) -> Point {
        let mut g = [0.0; 2];
        for k in 0..self.dim {
            let e = 0.5 * self.h[k];
            let mut xp = x;
            let mut xm = x;
            xp[k] += e;
            xm[k] -= e;
            g[k] = (self.value(xp, t, comp) - self.value(xm, t, comp)) / (2.0 * e);
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarKind {
    Constant(f64),
    /// `c0 + grad . x + ct t`
    Affine { c0: f64, grad: Point, ct: f64 },
    /// `amp sin(pi (k . x - omega t) + phase)`
    Wave {
        amp: f64,
        k: Point,
        omega: f64,
        phase: f64,
    },
    /// `amp exp(-|x - center|^2 / width^2)`
    Gaussian { amp: f64, center: Point, width: f64 },
    /// Smooth compactly supported bump with peak value `amp`.
    Bump { amp: f64, center: Point, radius: f64 },
    Series(Vec<SineTerm>),
    Sampled(Arc<SampledField>),
}

/// Scalar coefficient, source or data field on the space-time cylinder.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub kind: ScalarKind,
    pub time: Option<TimeFactor>,
}

impl ScalarField {
    pub fn new(kind: ScalarKind) -> Self {
        ScalarField { kind, time: None }
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(ScalarKind::Constant(c))
    }

    pub fn zero() -> Self {
        ScalarField::constant(0.0)
    }

    pub fn affine(c0: f64, grad: Point, ct: f64) -> Self {
        ScalarField::new(ScalarKind::Affine { c0, grad, ct })
    }

    pub fn sine_series(terms: Vec<SineTerm>) -> Self {
        ScalarField::new(ScalarKind::Series(terms))
    }

    pub fn sampled(field: SampledField) -> Self {
        ScalarField::new(ScalarKind::Sampled(Arc::new(field)))
    }

    pub fn with_time(mut self, factor: TimeFactor) -> Self {
        self.time = Some(factor);
        self
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ScalarKind::Constant(c) if c == 0.0)
    }

    /// Whether the field varies in time.
    pub fn is_time_dependent(&self) -> bool {
        if self.time.is_some() {
            return true;
        }
        match &self.kind {
            ScalarKind::Affine { ct, .. } => *ct != 0.0,
            ScalarKind::Wave { omega, .. } => *omega != 0.0,
            ScalarKind::Sampled(s) => s.data.levels() > 1,
            _ => false,
        }
    }

    fn base(&self, x: Point, t: f64) -> f64 {
        match &self.kind {
            ScalarKind::Constant(c) => *c,
            ScalarKind::Affine { c0, grad, ct } => c0 + grad[0] * x[0] + grad[1] * x[1] + ct * t,
            ScalarKind::Wave {
                amp,
                k,
                omega,
                phase,
            } => amp * (PI * (k[0] * x[0] + k[1] * x[1] - omega * t) + phase).sin(),
            ScalarKind::Gaussian { amp, center, width } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amp * (-r2 / (width * width)).exp()
            }
            ScalarKind::Bump {
                amp,
                center,
                radius,
            } => {
                let q = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
                if q < 1.0 {
                    amp * (1.0 - 1.0 / (1.0 - q)).exp()
                } else {
                    0.0
                }
            }
            ScalarKind::Series(terms) => terms.iter().map(|s| s.value(x)).sum(),
            ScalarKind::Sampled(s) => s.value(x, t, 0),
        }
    }

    fn base_dt(&self, x: Point, t: f64) -> f64 {
        match &self.kind {
            ScalarKind::Affine { ct, .. } => *ct,
            ScalarKind::Wave {
                amp,
                k,
                omega,
                phase,
            } => -amp * PI * omega * (PI * (k[0] * x[0] + k[1] * x[1] - omega * t) + phase).cos(),
            ScalarKind::Sampled(s) => s.dt(x, t, 0),
            _ => 0.0,
        }
    }

    fn base_grad(&self, x: Point, t: f64) -> Point {
        match &self.kind {
            ScalarKind::Constant(_) => [0.0, 0.0],
            ScalarKind::Affine { grad, .. } => *grad,
            ScalarKind::Wave {
                amp,
                k,
                omega,
                phase,
            } => {
                let c = amp * PI * (PI * (k[0] * x[0] + k[1] * x[1] - omega * t) + phase).cos();
                [c * k[0], c * k[1]]
            }
            ScalarKind::Gaussian { width, center, .. } => {
                let v = self.base(x, t);
                let s = -2.0 / (width * width);
                [s * (x[0] - center[0]) * v, s * (x[1] - center[1]) * v]
            }
            ScalarKind::Bump { center, radius, .. } => {
                let r2 = radius * radius;
                let q = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / r2;
                if q >= 1.0 {
                    return [0.0, 0.0];
                }
                let v = self.base(x, t);
                let s = -v / ((1.0 - q) * (1.0 - q)) * 2.0 / r2;
                [s * (x[0] - center[0]), s * (x[1] - center[1])]
            }
            ScalarKind::Series(terms) => terms.iter().fold([0.0, 0.0], |acc, s| {
                let g = s.grad(x);
                [acc[0] + g[0], acc[1] + g[1]]
            }),
            ScalarKind::Sampled(s) => s.grad(x, t, 0),
        }
    }

    pub fn value(&self, x: Point, t: f64) -> f64 {
        let v = self.base(x, t);
        match &self.time {
            Some(g) => v * g.value(t),
            None => v,
        }
    }

    pub fn dt(&self, x: Point, t: f64) -> f64 {
        match &self.time {
            Some(g) => self.base_dt(x, t) * g.value(t) + self.base(x, t) * g.derivative(t),
            None => self.base_dt(x, t),
        }
    }

    pub fn grad(&self, x: Point, t: f64) -> Point {
        let g = self.base_grad(x, t);
        match &self.time {
            Some(f) => {
                let s = f.value(t);
                [g[0] * s, g[1] * s]
            }
            None => g,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VectorKind {
    /// `matrix x + offset + drift t`
    Affine {
        matrix: [[f64; 2]; 2],
        offset: Point,
        drift: Point,
    },
    Sampled(Arc<SampledField>),
}

/// Principal part `A(x,t)`. In one dimension only the first component is
/// used and the second must vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub kind: VectorKind,
    pub time: Option<TimeFactor>,
}

impl VectorField {
    pub fn affine(matrix: [[f64; 2]; 2], offset: Point, drift: Point) -> Self {
        VectorField {
            kind: VectorKind::Affine {
                matrix,
                offset,
                drift,
            },
            time: None,
        }
    }

    pub fn constant(a: Point) -> Self {
        VectorField::affine([[0.0; 2]; 2], a, [0.0, 0.0])
    }

    /// The rotation field `(-y, x)`.
    pub fn rotation() -> Self {
        VectorField::affine([[0.0, -1.0], [1.0, 0.0]], [0.0, 0.0], [0.0, 0.0])
    }

    /// The field `(-x, -1)`, dissipative on the upper half disc.
    pub fn half_disc_sink() -> Self {
        VectorField::affine([[-1.0, 0.0], [0.0, 0.0]], [0.0, -1.0], [0.0, 0.0])
    }

    pub fn sampled(field: SampledField) -> Self {
        VectorField {
            kind: VectorKind::Sampled(Arc::new(field)),
            time: None,
        }
    }

    pub fn with_time(mut self, factor: TimeFactor) -> Self {
        self.time = Some(factor);
        self
    }

    pub fn is_time_dependent(&self) -> bool {
        if self.time.is_some() {
            return true;
        }
        match &self.kind {
            VectorKind::Affine { drift, .. } => drift[0] != 0.0 || drift[1] != 0.0,
            VectorKind::Sampled(s) => s.data.levels() > 1,
        }
    }

    fn base(&self, x: Point, t: f64) -> Point {
        match &self.kind {
            VectorKind::Affine {
                matrix,
                offset,
                drift,
            } => [
                matrix[0][0] * x[0] + matrix[0][1] * x[1] + offset[0] + drift[0] * t,
                matrix[1][0] * x[0] + matrix[1][1] * x[1] + offset[1] + drift[1] * t,
            ],
            VectorKind::Sampled(s) => {
                let second = if s.components() > 1 { s.value(x, t, 1) } else { 0.0 };
                [s.value(x, t, 0), second]
            }
        }
    }

    fn base_dt(&self, x: Point, t: f64) -> Point {
        match &self.kind {
            VectorKind::Affine { drift, .. } => *drift,
            VectorKind::Sampled(s) => {
                let second = if s.components() > 1 { s.dt(x, t, 1) } else { 0.0 };
                [s.dt(x, t, 0), second]
            }
        }
    }

    pub fn value(&self, x: Point, t: f64) -> Point {
        let v = self.base(x, t);
        match &self.time {
            Some(g) => {
                let s = g.value(t);
                [v[0] * s, v[1] * s]
            }
            None => v,
        }
    }

    pub fn dt(&self, x: Point, t: f64) -> Point {
        let d = self.base_dt(x, t);
        match &self.time {
            Some(g) => {
                let v = self.base(x, t);
                let (s, ds) = (g.value(t), g.derivative(t));
                [d[0] * s + v[0] * ds, d[1] * s + v[1] * ds]
            }
            None => d,
        }
    }
}

/// Which field of a [`CoefficientSet`] to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldId {
    A0,
    A,
    P,
    R,
    F,
}

/// Coefficients of `A0 u_t + A . grad u + p u = R f`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    pub a0: ScalarField,
    pub a: VectorField,
    pub p: ScalarField,
    pub r: ScalarField,
    pub f: ScalarField,
    /// Declared lower bound for `|A|`.
    pub rho: f64,
    pub spd_constant: Option<f64>,
}

impl CoefficientSet {
    /// `A0 = 1`, `p = 0`, `R = 1`, `f = 0`.
    pub fn transport(a: VectorField, rho: f64) -> Self {
        CoefficientSet {
            a0: ScalarField::constant(1.0),
            a,
            p: ScalarField::zero(),
            r: ScalarField::constant(1.0),
            f: ScalarField::zero(),
            rho,
            spd_constant: None,
        }
    }

    pub fn with_a0(mut self, a0: ScalarField) -> Self {
        self.a0 = a0;
        self
    }

    pub fn with_p(mut self, p: ScalarField) -> Self {
        self.p = p;
        self
    }

    pub fn with_r(mut self, r: ScalarField) -> Self {
        self.r = r;
        self
    }

    pub fn with_f(mut self, f: ScalarField) -> Self {
        self.f = f;
        self
    }

    /// Evaluate a field at `(x, t)`, refusing points outside the closed
    /// cylinder by more than `tol`.
    pub fn evaluate_field(&self, grid: &Grid, which: FieldId, x: Point, t: f64) -> Result<Vec<f64>> {
        let dom = grid.domain();
        let tol = 1e-9 * dom.diameter().max(1.0);
        if !dom.contains(x, tol) || t < -tol || t > dom.horizon + tol {
            return Err(Error::Domain(format!(
                "point ({}, {}) at t = {t} lies outside the space-time cylinder",
                x[0], x[1]
            )));
        }
        let v = match which {
            FieldId::A0 => vec![self.a0.value(x, t)],
            FieldId::A => {
                let a = self.a.value(x, t);
                a[..dom.dim].to_vec()
            }
            FieldId::P => vec![self.p.value(x, t)],
            FieldId::R => vec![self.r.value(x, t)],
            FieldId::F => vec![self.f.value(x, 0.0)],
        };
        Ok(v)
    }

    /// `sup A0` over the grid's space-time nodes.
    pub fn sup_a0(&self, grid: &Grid) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for n in 0..grid.levels() {
            let t = grid.time(n);
            for i in grid.active_nodes() {
                m = m.max(self.a0.value(grid.coords(i), t));
            }
        }
        m
    }

    pub fn min_a0(&self, grid: &Grid) -> f64 {
        let mut m = f64::INFINITY;
        for n in 0..grid.levels() {
            let t = grid.time(n);
            for i in grid.active_nodes() {
                m = m.min(self.a0.value(grid.coords(i), t));
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::domain::ProblemDomain;

    fn square() -> Grid {
        Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [5, 5], 4).unwrap()
    }

    #[test]
    fn constant_field_evaluates_everywhere() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let v = cs.evaluate_field(&square(), FieldId::A, [0.5, 0.5], 0.0).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn rotation_field_at_north_pole() {
        let g = Grid::new(&ProblemDomain::annulus(1.0, 1.0), [9, 9], 4).unwrap();
        let cs = CoefficientSet::transport(VectorField::rotation(), 0.5);
        for t in [0.0, 0.3, 1.0] {
            let v = cs.evaluate_field(&g, FieldId::A, [0.0, 1.0], t).unwrap();
            assert_eq!(v, vec![-1.0, 0.0]);
        }
    }

    #[test]
    fn exponential_time_factor_scales_componentwise() {
        let base = VectorField::affine([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.0], [0.0, 0.0]);
        let a = base.clone().with_time(TimeFactor::Exp { rate: 1.0 });
        let x = [0.25, 0.75];
        let a0 = base.value(x, 0.0);
        let a1 = a.value(x, 1.0);
        for k in 0..2 {
            assert!((a1[k] - std::f64::consts::E * a0[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn points_outside_the_cylinder_are_refused() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = square();
        assert!(matches!(
            cs.evaluate_field(&g, FieldId::A, [1.5, 0.5], 0.0),
            Err(Error::Domain(_))
        ));
        assert!(cs.evaluate_field(&g, FieldId::A, [0.5, 0.5], 2.0).is_err());
    }

    #[test]
    fn poly_factor_derivative() {
        let f = TimeFactor::Poly {
            coeffs: vec![1.0, 0.0, 1.0],
        };
        assert_eq!(f.value(2.0), 5.0);
        assert_eq!(f.derivative(2.0), 4.0);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let fields = [
            ScalarField::new(ScalarKind::Gaussian {
                amp: 1.3,
                center: [0.4, 0.6],
                width: 0.3,
            }),
            ScalarField::new(ScalarKind::Bump {
                amp: 2.0,
                center: [0.5, 0.5],
                radius: 0.45,
            }),
            ScalarField::sine_series(vec![
                SineTerm { coef: 0.7, k: [1.0, 2.0] },
                SineTerm { coef: -0.2, k: [3.0, 0.0] },
            ]),
            ScalarField::new(ScalarKind::Wave {
                amp: 1.0,
                k: [1.0, 0.5],
                omega: 1.0,
                phase: 0.3,
            }),
        ];
        let e = 1e-6;
        for f in &fields {
            for x in [[0.3, 0.4], [0.55, 0.62], [0.7, 0.2]] {
                let g = f.grad(x, 0.2);
                let gx = (f.value([x[0] + e, x[1]], 0.2) - f.value([x[0] - e, x[1]], 0.2)) / (2.0 * e);
                let gy = (f.value([x[0], x[1] + e], 0.2) - f.value([x[0], x[1] - e], 0.2)) / (2.0 * e);
                assert!((g[0] - gx).abs() < 1e-7, "{f:?}");
                assert!((g[1] - gy).abs() < 1e-7, "{f:?}");
            }
        }
    }

    #[test]
    fn sampled_field_interpolates_linear_data_exactly() {
        let g = square();
        let data = GridFunction::spacetime(&g, |x, t| 1.0 + 2.0 * x[0] - x[1] + 3.0 * t);
        let s = ScalarField::sampled(SampledField::from_grid(&g, data).unwrap());
        let v = s.value([0.33, 0.71], 0.4);
        assert!((v - (1.0 + 0.66 - 0.71 + 1.2)).abs() < 1e-13);
        assert!((s.dt([0.33, 0.71], 0.5) - 3.0).abs() < 1e-12);
    }
}
