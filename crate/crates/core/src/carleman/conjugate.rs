use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, Grid, GridFunction};
use crate::flow::WeightData;

use super::ops::apply_p;

#[derive(Clone, Debug)]
pub struct ConjugateResult {
    /// `P z - s (P phi) z`.
    pub direct: GridFunction,
    /// `e^{s phi} P(e^{-s phi} z)`.
    pub via_exp: GridFunction,
    /// Largest node-wise difference between the two.
    pub discrepancy: f64,
}

/// Largest exponent allowed before `exp` is considered unsafe.
const MAX_EXPONENT: f64 = 700.0;

/// `P phi = A . grad phi0 - beta A0` at every space-time node.
pub(crate) fn p_phi(cs: &CoefficientSet, grid: &Grid, wd: &WeightData) -> GridFunction {
    let mut out = GridFunction::zeros(grid.node_count(), grid.levels(), 1);
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            let a = cs.a.value(x, t);
            let g = wd.grad(i);
            out.set(n, i, 0, a[0] * g[0] + a[1] * g[1] - wd.beta * cs.a0.value(x, t));
        }
    }
    out
}

/// Space-time samples of `phi` and its extreme values over active nodes.
pub(crate) fn phi_values(grid: &Grid, wd: &WeightData) -> (GridFunction, f64, f64) {
    let mut phi = GridFunction::zeros(grid.node_count(), grid.levels(), 1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let v = wd.phi(i, t);
            phi.set(n, i, 0, v);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (phi, lo, hi)
}

/// The conjugated operator `P_s z` computed directly and through the
/// exponentials. The exponentials use `phi - c` with `c` the midrange of
/// `phi`, which leaves `P_s` unchanged; `s osc(phi) / 2 > 700` is refused.
pub fn conjugate_operator(
    cs: &CoefficientSet,
    grid: &Grid,
    wd: &WeightData,
    z: &GridFunction,
    s: f64,
) -> Result<ConjugateResult> {
    let (phi, lo, hi) = phi_values(grid, wd);
    let c = 0.5 * (lo + hi);
    if s.abs() * 0.5 * (hi - lo) > MAX_EXPONENT {
        return Err(Error::Numerical(format!(
            "e^(s phi) overflows for s = {s} and osc(phi) = {:.3}; use the shifted weight",
            hi - lo
        )));
    }
    let pz = apply_p(cs, grid, z);
    let pphi = p_phi(cs, grid, wd);
    let mut direct = pz.clone();
    for ((d, q), zz) in direct.values_mut().iter_mut().zip(pphi.values()).zip(z.values()) {
        *d -= s * q * zz;
    }

    let mut damped = z.clone();
    for (v, p) in damped.values_mut().iter_mut().zip(phi.values()) {
        *v *= (-s * (p - c)).exp();
    }
    let mut via_exp = apply_p(cs, grid, &damped);
    for (v, p) in via_exp.values_mut().iter_mut().zip(phi.values()) {
        *v *= (s * (p - c)).exp();
    }
    let mut discrepancy: f64 = 0.0;
    for n in 0..grid.levels() {
        for i in grid.active_nodes() {
            discrepancy = discrepancy.max((direct.get(n, i, 0) - via_exp.get(n, i, 0)).abs());
        }
    }
    Ok(ConjugateResult {
        direct,
        via_exp,
        discrepancy,
    })
}
