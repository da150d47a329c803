//! Numerical certificates for the standing assumptions on `A`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

use super::coefficients::CoefficientSet;
use super::function::GridFunction;
use super::grid::Grid;

#[derive(Clone, Debug, Serialize)]
pub struct PositivityReport {
    pub rho_observed: f64,
    pub rho_declared: f64,
    pub pass: bool,
}

/// Minimum of `|A|` over every space-time node. The comparison with the
/// declared bound allows a relative roundoff of `1e-12`.
pub fn check_positivity(cs: &CoefficientSet, grid: &Grid) -> PositivityReport {
    let mut rho_observed = f64::INFINITY;
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let a = cs.a.value(grid.coords(i), t);
            rho_observed = rho_observed.min(norm(a, grid.dim()));
        }
    }
    PositivityReport {
        rho_observed,
        rho_declared: cs.rho,
        pass: rho_observed >= cs.rho * (1.0 - 1e-12),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpdReport {
    /// `f64::INFINITY` when some direction annihilates `A` but not `dA/dt`.
    pub c_observed: f64,
    pub pass: bool,
    /// Node and time of the worst ratio (or of the violation).
    pub worst_node: Option<usize>,
    pub worst_time: Option<f64>,
}

pub const DEFAULT_SPD_DIRECTIONS: usize = 32;

/// Samples `|dA/dt . xi| / |A . xi|` over unit directions at every node.
///
/// In 2D the directions are `n_dirs` equispaced angles in `[0, pi)` plus the
/// direction orthogonal to `A` at the node, which is where a violation shows.
pub fn check_spd(cs: &CoefficientSet, grid: &Grid, n_dirs: usize) -> SpdReport {
    let dim = grid.dim();
    let mut max_a: f64 = 0.0;
    let mut max_dt: f64 = 0.0;
    let mut samples = Vec::with_capacity(grid.levels() * grid.node_count());
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            let a = cs.a.value(x, t);
            let da = cs.a.dt(x, t);
            max_a = max_a.max(norm(a, dim));
            max_dt = max_dt.max(norm(da, dim));
            samples.push((i, t, a, da));
        }
    }
    let eps_den = 1e-8 * max_a;
    let eps_num = 1e-6 * max_dt;

    let mut dirs: Vec<[f64; 2]> = if dim == 1 {
        vec![[1.0, 0.0]]
    } else {
        (0..n_dirs.max(1))
            .map(|k| {
                let th = PI * k as f64 / n_dirs.max(1) as f64;
                [th.cos(), th.sin()]
            })
            .collect()
    };
    let fixed = dirs.len();

    let mut report = SpdReport {
        c_observed: 0.0,
        pass: true,
        worst_node: None,
        worst_time: None,
    };
    for (i, t, a, da) in samples {
        dirs.truncate(fixed);
        if dim == 2 {
            let na = norm(a, 2);
            if na > 0.0 {
                dirs.push([-a[1] / na, a[0] / na]);
            }
        }
        for xi in &dirs {
            let den = (a[0] * xi[0] + a[1] * xi[1]).abs();
            let num = (da[0] * xi[0] + da[1] * xi[1]).abs();
            if den <= eps_den {
                if num > eps_num {
                    return SpdReport {
                        c_observed: f64::INFINITY,
                        pass: false,
                        worst_node: Some(i),
                        worst_time: Some(t),
                    };
                }
                continue;
            }
            let ratio = num / den;
            if ratio > report.c_observed {
                report.c_observed = ratio;
                report.worst_node = Some(i);
                report.worst_time = Some(t);
            }
        }
    }
    report
}

/// Scalar `phi` with `dA/dt = phi A`, sampled at every space-time node.
#[derive(Clone, Debug)]
pub struct StructureFactor {
    pub phi: GridFunction,
    /// `max |dA/dt - phi A|` over the nodes.
    pub residual: f64,
}

/// `phi = (dA/dt . A) / |A|^2`. Fails when the residual exceeds
/// `1e-6 max|dA/dt| + 1e-12`, i.e. when `dA/dt` is not parallel to `A`.
pub fn structure_factor(cs: &CoefficientSet, grid: &Grid) -> Result<StructureFactor> {
    let m = grid.node_count();
    let mut phi = GridFunction::zeros(m, grid.levels(), 1);
    let mut residual: f64 = 0.0;
    let mut max_dt: f64 = 0.0;
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            let a = cs.a.value(x, t);
            let da = cs.a.dt(x, t);
            let a2 = a[0] * a[0] + a[1] * a[1];
            if a2 == 0.0 {
                return Err(Error::admissibility(
                    crate::error::Condition::Positivity,
                    format!("A vanishes at node {i}, t = {t}"),
                ));
            }
            let f = (da[0] * a[0] + da[1] * a[1]) / a2;
            phi.set(n, i, 0, f);
            residual = residual.max(((da[0] - f * a[0]).powi(2) + (da[1] - f * a[1]).powi(2)).sqrt());
            max_dt = max_dt.max(norm(da, grid.dim()));
        }
    }
    if residual > 1e-6 * max_dt + 1e-12 {
        return Err(Error::Structure { residual });
    }
    Ok(StructureFactor { phi, residual })
}

/// Rebuilds `A(x,t) = A(x,0) exp(int_0^t phi)` with the composite trapezoid
/// rule and returns the largest node-wise relative error against `A`.
pub fn structure_reconstruction_error(cs: &CoefficientSet, grid: &Grid, sf: &StructureFactor) -> f64 {
    let mut worst: f64 = 0.0;
    for i in grid.active_nodes() {
        let x = grid.coords(i);
        let a_init = cs.a.value(x, 0.0);
        let mut integral = 0.0;
        for n in 1..grid.levels() {
            let dt = grid.time(n) - grid.time(n - 1);
            integral += 0.5 * dt * (sf.phi.get(n - 1, i, 0) + sf.phi.get(n, i, 0));
            let scale = integral.exp();
            let a = cs.a.value(x, grid.time(n));
            let err = ((a_init[0] * scale - a[0]).powi(2) + (a_init[1] * scale - a[1]).powi(2)).sqrt();
            worst = worst.max(err / norm(a, 2));
        }
    }
    worst
}

fn norm(a: [f64; 2], dim: usize) -> f64 {
    if dim == 1 {
        a[0].abs()
    } else {
        (a[0] * a[0] + a[1] * a[1]).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::coefficients::{TimeFactor, VectorField};
    use crate::fields::domain::ProblemDomain;

    fn square(nt: usize) -> Grid {
        Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [9, 9], nt).unwrap()
    }

    #[test]
    fn positivity_of_constant_field() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let r = check_positivity(&cs, &square(4));
        assert_eq!(r.rho_observed, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn positivity_fails_through_a_stagnation_point() {
        let a = VectorField::affine([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], [0.0, 0.0]);
        let cs = CoefficientSet::transport(a, 0.1);
        let r = check_positivity(&cs, &square(4));
        assert_eq!(r.rho_observed, 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn positivity_on_annulus_equals_inner_radius() {
        // |A| = r for the rotation; the inner circle carries grid nodes at (+-1/2, 0).
        let g = Grid::new(&ProblemDomain::annulus(1.0, 1.0), [41, 41], 4).unwrap();
        let cs = CoefficientSet::transport(VectorField::rotation(), 0.5);
        let r = check_positivity(&cs, &g);
        let brute = g
            .active_nodes()
            .map(|i| {
                let x = g.coords(i);
                (x[0] * x[0] + x[1] * x[1]).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.rho_observed, brute);
        assert!((r.rho_observed - 0.5).abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn spd_time_independent_is_zero() {
        let cs = CoefficientSet::transport(VectorField::rotation(), 0.5);
        let r = check_spd(&cs, &square(4), DEFAULT_SPD_DIRECTIONS);
        assert_eq!(r.c_observed, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn spd_one_dimensional_linear_growth() {
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 1.0), [11, 0], 10).unwrap();
        let a = VectorField::affine([[1.0, 0.0], [0.0, 0.0]], [1.0, 0.0], [0.0, 0.0])
            .with_time(TimeFactor::Poly { coeffs: vec![1.0, 1.0] });
        let cs = CoefficientSet::transport(a, 1.0);
        let r = check_spd(&cs, &g, DEFAULT_SPD_DIRECTIONS);
        assert!((r.c_observed - 1.0).abs() < 1e-14);
        assert_eq!(r.worst_time, Some(0.0));
        assert!(r.pass);
    }

    #[test]
    fn spd_rejects_tilting_field() {
        let a = VectorField::affine([[0.0; 2]; 2], [1.0, 0.0], [0.0, 1.0]);
        let cs = CoefficientSet::transport(a, 1.0);
        let r = check_spd(&cs, &square(4), DEFAULT_SPD_DIRECTIONS);
        assert!(r.c_observed.is_infinite());
        assert!(!r.pass);
        assert!(matches!(structure_factor(&cs, &square(4)), Err(Error::Structure { .. })));
    }

    #[test]
    fn structure_factor_of_exponential_growth_is_one() {
        let a = VectorField::rotation().with_time(TimeFactor::Exp { rate: 1.0 });
        let g = Grid::new(&ProblemDomain::annulus(1.0, 1.0), [11, 11], 10).unwrap();
        let cs = CoefficientSet::transport(a, 0.5);
        let sf = structure_factor(&cs, &g).unwrap();
        for i in g.active_nodes() {
            for n in 0..g.levels() {
                assert!((sf.phi.get(n, i, 0) - 1.0).abs() < 1e-14);
            }
        }
        assert!(sf.residual < 1e-12);
    }

    #[test]
    fn structure_factor_of_quadratic_growth() {
        let base = VectorField::constant([1.0, 0.5]);
        let a = base.with_time(TimeFactor::Poly {
            coeffs: vec![1.0, 0.0, 1.0],
        });
        let cs = CoefficientSet::transport(a, 1.0);
        let g = square(1000);
        let sf = structure_factor(&cs, &g).unwrap();
        let err = structure_reconstruction_error(&cs, &g, &sf);
        assert!(err <= 10.0 * g.dt() * g.dt(), "{err}");
        let g = square(5000);
        let sf = structure_factor(&cs, &g).unwrap();
        for n in 0..g.levels() {
            let t = g.time(n);
            assert!((sf.phi.get(n, 0, 0) - 2.0 * t / (1.0 + t * t)).abs() < 1e-14);
        }
        // exp(int_0^t 2s/(1+s^2) ds) = 1 + t^2
        let err = structure_reconstruction_error(&cs, &g, &sf);
        assert!(err < 1e-8, "{err}");
    }
}
