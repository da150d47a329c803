use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Condition, Error, Result};
use crate::fields::{CoefficientSet, Grid, GridFunction};

use super::curve::{trace_backward, TraceOptions};

/// Backward exit parameters and arc lengths at every active node.
#[derive(Clone, Debug)]
pub struct Phi0 {
    pub sigma_minus: GridFunction,
    pub phi0: GridFunction,
    /// Nodes whose backward curve leaves the domain nearly tangentially.
    pub tangential: Vec<usize>,
}

/// `phi0(x)`: length of the backward integral curve of `A(., 0)` from `x`
/// to the boundary. Inactive nodes carry zero.
pub fn compute_phi0(cs: &CoefficientSet, grid: &Grid, opts: &TraceOptions) -> Result<Phi0> {
    let m = grid.node_count();
    let dom = grid.domain();
    let traces: Vec<_> = (0..m)
        .into_par_iter()
        .map(|i| {
            if !grid.is_active(i) {
                return Ok((0.0, 0.0, false));
            }
            trace_backward(cs, dom, grid.coords(i), opts).map_err(|mut e| {
                e.node = Some(i);
                e
            })
        })
        .collect();
    let mut sigma_minus = GridFunction::zeros(m, 1, 1);
    let mut phi0 = GridFunction::zeros(m, 1, 1);
    let mut tangential = Vec::new();
    for (i, r) in traces.into_iter().enumerate() {
        let (s, arc, tang) = r?;
        sigma_minus.set(0, i, 0, s);
        phi0.set(0, i, 0, arc);
        if tang {
            tangential.push(i);
        }
    }
    Ok(Phi0 {
        sigma_minus,
        phi0,
        tangential,
    })
}

/// Gradient of a spatial grid function: centred differences where both
/// neighbours are active, second-order one-sided differences where two
/// neighbours on one side are, first-order otherwise. Always two components.
pub fn compute_grad_phi0(grid: &Grid, phi0: &GridFunction) -> GridFunction {
    let m = grid.node_count();
    let h = grid.spacing();
    let v = |i: usize| phi0.get(0, i, 0);
    let mut grad = GridFunction::zeros(m, 1, 2);
    for i in grid.active_nodes() {
        for axis in 0..grid.dim() {
            let back = grid.neighbor(i, axis, -1);
            let fwd = grid.neighbor(i, axis, 1);
            let d = match (back, fwd) {
                (Some(b), Some(f)) => (v(f) - v(b)) / (2.0 * h[axis]),
                (None, Some(f)) => match grid.neighbor(f, axis, 1) {
                    Some(ff) => (-3.0 * v(i) + 4.0 * v(f) - v(ff)) / (2.0 * h[axis]),
                    None => (v(f) - v(i)) / h[axis],
                },
                (Some(b), None) => match grid.neighbor(b, axis, -1) {
                    Some(bb) => (3.0 * v(i) - 4.0 * v(b) + v(bb)) / (2.0 * h[axis]),
                    None => (v(i) - v(b)) / h[axis],
                },
                (None, None) => 0.0,
            };
            grad.set(0, i, axis, d);
        }
    }
    grad
}

/// The weight `phi(x,t) = phi0(x) - beta t` with its derived constants.
#[derive(Clone, Debug)]
pub struct WeightData {
    pub sigma_minus: GridFunction,
    pub phi0: GridFunction,
    pub grad_phi0: GridFunction,
    pub beta: f64,
    /// `min P phi` over the space-time nodes.
    pub delta: f64,
    /// `beta T - max phi0`; only meaningful when `kappa_ok`.
    pub kappa: f64,
    pub kappa_ok: bool,
    /// `(sup A0)(max phi0) / rho`.
    pub t0: f64,
    pub rho: f64,
    pub sup_a0: f64,
    pub phi0_max: f64,
    pub horizon: f64,
    pub tangential: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightSummary {
    pub beta: f64,
    pub delta: f64,
    pub kappa: f64,
    pub kappa_ok: bool,
    pub t0: f64,
    pub rho: f64,
    pub sup_a0: f64,
    pub phi0_max: f64,
    pub horizon: f64,
    pub tangential_nodes: Vec<usize>,
}

impl WeightData {
    pub fn phi(&self, node: usize, t: f64) -> f64 {
        self.phi0.get(0, node, 0) - self.beta * t
    }

    pub fn grad(&self, node: usize) -> [f64; 2] {
        [self.grad_phi0.get(0, node, 0), self.grad_phi0.get(0, node, 1)]
    }

    /// Largest admissible `beta`, i.e. `rho / sup A0`.
    pub fn beta_bound(&self) -> f64 {
        self.rho / self.sup_a0
    }

    /// Fails with the time condition unless `T0 < T` and `kappa > 0`.
    pub fn require_time(&self, condition: Condition) -> Result<()> {
        if self.t0 >= self.horizon {
            return Err(Error::admissibility(
                condition,
                format!("T0 = {:.6} is not below the horizon T = {:.6}", self.t0, self.horizon),
            ));
        }
        if !self.kappa_ok {
            return Err(Error::admissibility(
                condition,
                format!(
                    "kappa = beta T - max phi0 = {:.3e} is not positive for beta = {:.6}",
                    self.kappa, self.beta
                ),
            ));
        }
        Ok(())
    }

    pub fn summary(&self) -> WeightSummary {
        WeightSummary {
            beta: self.beta,
            delta: self.delta,
            kappa: self.kappa,
            kappa_ok: self.kappa_ok,
            t0: self.t0,
            rho: self.rho,
            sup_a0: self.sup_a0,
            phi0_max: self.phi0_max,
            horizon: self.horizon,
            tangential_nodes: self.tangential.clone(),
        }
    }
}

/// Midpoint of `(max phi0 / T, rho / sup A0)`, the interval of `beta` giving
/// both `delta > 0` and `kappa > 0`. `None` when it is empty (`T0 >= T`).
pub fn beta_for_horizon(rho: f64, sup_a0: f64, phi0_max: f64, horizon: f64) -> Option<f64> {
    let lo = phi0_max / horizon;
    let hi = rho / sup_a0;
    (lo < hi).then_some(0.5 * (lo + hi))
}

/// Weight for the inverse problems: `beta` defaults to `beta_for_horizon`
/// when that interval is nonempty, so that `kappa > 0`, and to the
/// `build_weight` default otherwise.
pub fn build_inverse_weight(cs: &CoefficientSet, grid: &Grid, phi0: Phi0, beta: Option<f64>) -> Result<WeightData> {
    let beta = beta.or_else(|| {
        let phi0_max = grid.active_nodes().map(|i| phi0.phi0.get(0, i, 0)).fold(0.0, f64::max);
        beta_for_horizon(cs.rho, cs.sup_a0(grid), phi0_max, grid.horizon())
    });
    build_weight(cs, grid, phi0, beta)
}

/// Assembles the weight. `beta` defaults to half of `rho / sup A0`.
pub fn build_weight(cs: &CoefficientSet, grid: &Grid, phi0: Phi0, beta: Option<f64>) -> Result<WeightData> {
    let sup_a0 = cs.sup_a0(grid);
    let bound = cs.rho / sup_a0;
    let beta = match beta {
        Some(b) if !(b > 0.0 && b < bound) => {
            return Err(Error::admissibility(
                Condition::Beta,
                format!("beta = {b} must lie in (0, rho / sup A0) = (0, {bound:.6})"),
            ))
        }
        Some(b) => b,
        None => 0.5 * bound,
    };
    let grad_phi0 = compute_grad_phi0(grid, &phi0.phi0);
    let phi0_max = grid
        .active_nodes()
        .map(|i| phi0.phi0.get(0, i, 0))
        .fold(0.0, f64::max);

    let mut delta = f64::INFINITY;
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            let a = cs.a.value(x, t);
            let pphi = a[0] * grad_phi0.get(0, i, 0) + a[1] * grad_phi0.get(0, i, 1)
                - beta * cs.a0.value(x, t);
            delta = delta.min(pphi);
        }
    }
    if !(delta > 0.0) {
        return Err(Error::admissibility(
            Condition::WeightAdmissibility,
            format!("min P phi = {delta:.6e} is not positive for beta = {beta:.6}"),
        ));
    }
    let horizon = grid.horizon();
    let kappa = beta * horizon - phi0_max;
    Ok(WeightData {
        sigma_minus: phi0.sigma_minus,
        phi0: phi0.phi0,
        grad_phi0,
        beta,
        delta,
        kappa,
        kappa_ok: kappa > 0.0,
        t0: sup_a0 * phi0_max / cs.rho,
        rho: cs.rho,
        sup_a0,
        phi0_max,
        horizon,
        tangential: phi0.tangential,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientIdentityReport {
    pub max_abs_dev: f64,
    pub tol: f64,
    pub nodes_checked: usize,
    pub pass: bool,
}

/// `max |A . grad phi0 - |A||` over space-time nodes at depth `>= 2h`,
/// against the tolerance `20 h`.
pub fn verify_gradient_identity(cs: &CoefficientSet, grid: &Grid, wd: &WeightData) -> GradientIdentityReport {
    let h = grid.h_max();
    let interior: Vec<usize> = grid.active_nodes().filter(|&i| grid.depth(i) >= 2.0 * h).collect();
    let mut dev: f64 = 0.0;
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for &i in &interior {
            let a = cs.a.value(grid.coords(i), t);
            let g = wd.grad(i);
            let norm = if grid.dim() == 1 { a[0].abs() } else { a[0].hypot(a[1]) };
            dev = dev.max((a[0] * g[0] + a[1] * g[1] - norm).abs());
        }
    }
    let tol = 20.0 * h;
    GradientIdentityReport {
        max_abs_dev: dev,
        tol,
        nodes_checked: interior.len(),
        pass: dev <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, TimeFactor, VectorField};

    fn weight(cs: &CoefficientSet, grid: &Grid, beta: Option<f64>) -> Result<WeightData> {
        let opts = TraceOptions::for_problem(cs, grid.domain());
        build_weight(cs, grid, compute_phi0(cs, grid, &opts)?, beta)
    }

    fn unit_square(t: f64) -> Grid {
        Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], t), [11, 11], 8).unwrap()
    }

    #[test]
    fn constant_field_gives_phi0_equal_to_x() {
        for speed in [1.0, 2.0] {
            let cs = CoefficientSet::transport(VectorField::constant([speed, 0.0]), speed);
            let g = unit_square(1.0);
            let wd = weight(&cs, &g, None).unwrap();
            for i in g.active_nodes() {
                let x = g.coords(i);
                assert!((wd.phi0.get(0, i, 0) - x[0]).abs() < 1e-9);
                assert!((wd.grad(i)[0] - 1.0).abs() < 1e-8 && wd.grad(i)[1].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn weight_constants_for_unit_speed() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let wd = weight(&cs, &unit_square(2.0), Some(0.5)).unwrap();
        assert!((wd.delta - 0.5).abs() < 1e-8);
        assert!((wd.t0 - 1.0).abs() < 1e-9);
        assert!(wd.kappa.abs() < 1e-9);
        let wd = weight(&cs, &unit_square(2.5), Some(0.5)).unwrap();
        assert!((wd.kappa - 0.25).abs() < 1e-9 && wd.kappa_ok);
    }

    #[test]
    fn weight_constants_for_double_speed() {
        let cs = CoefficientSet::transport(VectorField::constant([2.0, 0.0]), 2.0);
        let wd = weight(&cs, &unit_square(1.0), Some(1.0)).unwrap();
        assert!((wd.delta - 1.0).abs() < 1e-8);
        assert!((wd.t0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn beta_outside_bound_is_rejected() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let e = weight(&cs, &unit_square(1.0), Some(1.0)).unwrap_err();
        assert!(matches!(e, Error::Admissibility { condition: Condition::Beta, .. }));
    }

    #[test]
    fn gradient_of_linear_functions_is_exact() {
        let g = unit_square(1.0);
        let f = GridFunction::spatial(&g, |x| x[0] + x[1]);
        let grad = compute_grad_phi0(&g, &f);
        for i in g.active_nodes() {
            assert!((grad.get(0, i, 0) - 1.0).abs() < 1e-12);
            assert!((grad.get(0, i, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_second_order() {
        let f = |x: [f64; 2]| (1.3 * x[0]).sin() * (0.7 * x[1]).cos();
        let fx = |x: [f64; 2]| 1.3 * (1.3 * x[0]).cos() * (0.7 * x[1]).cos();
        let err = |n: usize| {
            let g = Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [n, n], 2).unwrap();
            let grad = compute_grad_phi0(&g, &GridFunction::spatial(&g, f));
            g.active_nodes()
                .map(|i| (grad.get(0, i, 0) - fx(g.coords(i))).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(17) / err(33);
        assert!(ratio > 3.5, "{ratio}");
    }

    #[test]
    fn exponential_growth_keeps_identity_exact() {
        let a = VectorField::constant([1.0, 0.0]).with_time(TimeFactor::Exp { rate: 1.0 });
        let cs = CoefficientSet::transport(a, 1.0);
        let g = unit_square(1.0);
        let wd = weight(&cs, &g, None).unwrap();
        let r = verify_gradient_identity(&cs, &g, &wd);
        assert!(r.max_abs_dev < 1e-7, "{r:?}");
    }

    #[test]
    fn reparametrisation_leaves_phi0_unchanged() {
        let g = Grid::new(&ProblemDomain::half_disc(1.0, 1.0), [17, 9], 4).unwrap();
        let cs = CoefficientSet::transport(VectorField::half_disc_sink(), 1.0);
        let scaled = VectorField::affine([[-3.0, 0.0], [0.0, 0.0]], [0.0, -3.0], [0.0, 0.0]);
        let cs3 = CoefficientSet::transport(scaled, 3.0);
        let p1 = compute_phi0(&cs, &g, &TraceOptions::for_problem(&cs, g.domain())).unwrap();
        let p3 = compute_phi0(&cs3, &g, &TraceOptions::for_problem(&cs3, g.domain())).unwrap();
        for i in g.active_nodes() {
            assert!((p1.phi0.get(0, i, 0) - p3.phi0.get(0, i, 0)).abs() < 1e-8);
            let s1 = p1.sigma_minus.get(0, i, 0);
            assert!((s1 - 3.0 * p3.sigma_minus.get(0, i, 0)).abs() < 1e-8);
        }
    }

    #[test]
    fn beta_for_horizon_is_inside_both_bounds() {
        let b = beta_for_horizon(1.0, 1.0, 1.0, 2.0).unwrap();
        assert!((b - 0.75).abs() < 1e-15);
        assert!(beta_for_horizon(1.0, 1.0, 1.0, 0.5).is_none());
    }
}
