use crate::fields::{CoefficientSet, Grid, GridFunction};

/// Derivative along `axis` at node `i` of one level: centred where both
/// neighbours are active, second-order one-sided otherwise.
pub(crate) fn space_diff(grid: &Grid, v: &[f64], i: usize, axis: usize) -> f64 {
    let h = grid.spacing()[axis];
    match (grid.neighbor(i, axis, -1), grid.neighbor(i, axis, 1)) {
        (Some(b), Some(f)) => (v[f] - v[b]) / (2.0 * h),
        (None, Some(f)) => match grid.neighbor(f, axis, 1) {
            Some(ff) => (-3.0 * v[i] + 4.0 * v[f] - v[ff]) / (2.0 * h),
            None => (v[f] - v[i]) / h,
        },
        (Some(b), None) => match grid.neighbor(b, axis, -1) {
            Some(bb) => (3.0 * v[i] - 4.0 * v[b] + v[bb]) / (2.0 * h),
            None => (v[i] - v[b]) / h,
        },
        (None, None) => 0.0,
    }
}

/// Time derivative at level `n`, node `i`, same stencil rules as in space.
pub(crate) fn time_diff(grid: &Grid, u: &GridFunction, n: usize, i: usize) -> f64 {
    let nt = grid.nt();
    let dt = grid.dt();
    let g = |k: usize| u.get(k, i, 0);
    if n == 0 {
        (-3.0 * g(0) + 4.0 * g(1) - g(2)) / (2.0 * dt)
    } else if n == nt {
        (3.0 * g(nt) - 4.0 * g(nt - 1) + g(nt - 2)) / (2.0 * dt)
    } else {
        (g(n + 1) - g(n - 1)) / (2.0 * dt)
    }
}

/// `P u = A0 u_t + A . grad u` by second-order differences.
pub fn apply_p(cs: &CoefficientSet, grid: &Grid, u: &GridFunction) -> GridFunction {
    let m = grid.node_count();
    let mut out = GridFunction::zeros(m, grid.levels(), 1);
    for n in 0..grid.levels() {
        let t = grid.time(n);
        let level = u.level(n);
        let row = out.level_mut(n);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            let a = cs.a.value(x, t);
            let mut v = cs.a0.value(x, t) * time_diff(grid, u, n, i);
            for k in 0..grid.dim() {
                v += a[k] * space_diff(grid, level, i, k);
            }
            row[i] = v;
        }
    }
    out
}

/// `(P + p) u`.
pub fn apply_p_plus(cs: &CoefficientSet, grid: &Grid, u: &GridFunction) -> GridFunction {
    let mut out = apply_p(cs, grid, u);
    if !cs.p.is_zero() {
        for n in 0..grid.levels() {
            let t = grid.time(n);
            for i in grid.active_nodes() {
                let v = out.get(n, i, 0) + cs.p.value(grid.coords(i), t) * u.get(n, i, 0);
                out.set(n, i, 0, v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, VectorField};

    #[test]
    fn exact_on_quadratics() {
        let g = Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 2.0], 1.0), [7, 9], 6).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, -0.5]), 0.5);
        let u = GridFunction::spacetime(&g, |x, t| x[0] * x[0] + x[0] * x[1] + t * t);
        let pu = apply_p(&cs, &g, &u);
        for n in 0..g.levels() {
            let t = g.time(n);
            for i in g.active_nodes() {
                let x = g.coords(i);
                let exact = 2.0 * t + (2.0 * x[0] + x[1]) - 0.5 * x[0];
                assert!((pu.get(n, i, 0) - exact).abs() < 1e-11);
            }
        }
    }
}
