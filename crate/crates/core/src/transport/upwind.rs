use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, Grid};

/// Fraction of the monotonicity limit used for the time step.
pub const CFL_SAFETY: f64 = 0.9;

const NONE: u32 = u32::MAX;

/// Explicit Euler / dimension-by-dimension upwind step for
/// `A0 u_t + A . grad u + p u = S`, with coefficients frozen at each level.
///
/// Level `n + 1` at node `i` is either prescribed (the upwind neighbour along
/// some axis is missing, i.e. `i` is a strict inflow node at `t_n`) or
///
/// `u_i^{n+1} = d_i u_i^n + sum_k c_k u_{nb_k}^n + s_i S_i^n`.
#[derive(Clone, Debug)]
pub struct UpwindOperator {
    m: usize,
    nt: usize,
    diag: Vec<f64>,
    nbr: Vec<[(u32, f64); 2]>,
    src: Vec<f64>,
    prescribed: Vec<bool>,
    active: Vec<bool>,
}

/// `dt` limit at one node: `CFL_SAFETY * A0 / (sum_k |A_k| / h_k + max(p, 0))`.
fn node_limit(a0: f64, a: [f64; 2], p: f64, h: [f64; 2], dim: usize) -> f64 {
    let mut rate = p.max(0.0);
    for k in 0..dim {
        rate += a[k].abs() / h[k];
    }
    if rate == 0.0 {
        f64::INFINITY
    } else {
        CFL_SAFETY * a0 / rate
    }
}

/// Smallest number of time intervals on `grid`'s spatial mesh meeting the
/// step limit at every node and level of the resulting grid.
pub fn stable_nt(cs: &CoefficientSet, grid: &Grid) -> Result<usize> {
    let mut nt = grid.nt();
    for _ in 0..20 {
        let g = grid.with_nt(nt)?;
        let limit = dt_limit(cs, &g);
        let need = ((g.horizon() / limit) * (1.0 - 1e-12)).ceil().max(2.0) as usize;
        if need <= nt && g.dt() <= limit {
            return Ok(nt);
        }
        nt = need.max(nt + 1);
    }
    Err(Error::Numerical("time step selection did not settle".into()))
}

fn dt_limit(cs: &CoefficientSet, grid: &Grid) -> f64 {
    let h = grid.spacing();
    let dim = grid.dim();
    let mut limit = f64::INFINITY;
    for n in 0..grid.nt() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            limit = limit.min(node_limit(cs.a0.value(x, t), cs.a.value(x, t), cs.p.value(x, t), h, dim));
        }
    }
    limit
}

impl UpwindOperator {
    /// Samples the coefficients at every level and checks the step limit.
    pub fn new(cs: &CoefficientSet, grid: &Grid) -> Result<Self> {
        let m = grid.node_count();
        let nt = grid.nt();
        let h = grid.spacing();
        let dim = grid.dim();
        let dt = grid.dt();

        let min_a0 = cs.min_a0(grid);
        if !(min_a0 > 0.0) {
            return Err(Error::Domain(format!("A0 must be positive, min A0 = {min_a0}")));
        }
        let limit = dt_limit(cs, grid);
        if dt > limit {
            return Err(Error::Cfl {
                dt,
                limit,
                required_nt: (grid.horizon() / limit).ceil() as usize,
            });
        }

        let levels: Vec<_> = (0..nt)
            .into_par_iter()
            .map(|n| {
                let t = grid.time(n);
                let mut diag = vec![0.0; m];
                let mut nbr = vec![[(NONE, 0.0); 2]; m];
                let mut src = vec![0.0; m];
                let mut prescribed = vec![false; m];
                for i in grid.active_nodes() {
                    let x = grid.coords(i);
                    let a = cs.a.value(x, t);
                    let scale = dt / cs.a0.value(x, t);
                    let mut d = 1.0 - scale * cs.p.value(x, t);
                    for k in 0..dim {
                        if a[k] == 0.0 {
                            continue;
                        }
                        let dir = if a[k] > 0.0 { -1 } else { 1 };
                        match grid.neighbor(i, k, dir) {
                            Some(nb) => {
                                let c = scale * a[k].abs() / h[k];
                                d -= c;
                                nbr[i][k] = (nb as u32, c);
                            }
                            None => prescribed[i] = true,
                        }
                    }
                    if prescribed[i] {
                        nbr[i] = [(NONE, 0.0); 2];
                        d = 0.0;
                    } else {
                        src[i] = scale;
                    }
                    diag[i] = d;
                }
                (diag, nbr, src, prescribed)
            })
            .collect();

        let mut op = UpwindOperator {
            m,
            nt,
            diag: Vec::with_capacity(nt * m),
            nbr: Vec::with_capacity(nt * m),
            src: Vec::with_capacity(nt * m),
            prescribed: Vec::with_capacity(nt * m),
            active: grid.active().to_vec(),
        };
        for (d, b, s, p) in levels {
            op.diag.extend(d);
            op.nbr.extend(b);
            op.src.extend(s);
            op.prescribed.extend(p);
        }
        Ok(op)
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.nt
    }

    /// Whether node `i` at level `n + 1` takes its value from the inflow data.
    pub fn is_prescribed(&self, n: usize, i: usize) -> bool {
        self.prescribed[n * self.m + i]
    }

    /// Source multiplier `dt / A0` of step `n` at node `i` (zero where
    /// prescribed).
    pub fn source_scale(&self, n: usize, i: usize) -> f64 {
        self.src[n * self.m + i]
    }

    /// Writes level `n + 1` into `out`. `source` holds `S` at level `n`
    /// (or is empty for a homogeneous step); `inflow(i)` gives the prescribed
    /// value at node `i`.
    pub fn step(&self, n: usize, u: &[f64], source: &[f64], out: &mut [f64], inflow: impl Fn(usize) -> f64) {
        let base = n * self.m;
        for i in 0..self.m {
            if !self.active[i] {
                out[i] = 0.0;
                continue;
            }
            let k = base + i;
            if self.prescribed[k] {
                out[i] = inflow(i);
                continue;
            }
            let mut v = self.diag[k] * u[i];
            for &(nb, c) in &self.nbr[k] {
                if nb != NONE {
                    v += c * u[nb as usize];
                }
            }
            if !source.is_empty() {
                v += self.src[k] * source[i];
            }
            out[i] = v;
        }
    }

    /// Transpose of the homogeneous part of `step(n, ...)`: adds to `back`
    /// the cotangent of level `n` given the cotangent `w` of level `n + 1`.
    pub fn step_transpose(&self, n: usize, w: &[f64], back: &mut [f64]) {
        let base = n * self.m;
        for i in 0..self.m {
            let k = base + i;
            if !self.active[i] || self.prescribed[k] {
                continue;
            }
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            back[i] += self.diag[k] * wi;
            for &(nb, c) in &self.nbr[k] {
                if nb != NONE {
                    back[nb as usize] += c * wi;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, VectorField};

    #[test]
    fn step_limit_is_enforced() {
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 1.0), [11, 0], 5).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        match UpwindOperator::new(&cs, &g) {
            Err(Error::Cfl { required_nt, .. }) => assert_eq!(required_nt, 12),
            other => panic!("{other:?}"),
        }
        assert_eq!(stable_nt(&cs, &g).unwrap(), 12);
    }

    #[test]
    fn two_dimensional_limit_uses_the_sum_of_rates() {
        let g = Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [11, 11], 2).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 1.0]), 1.0);
        // 0.9 / (10 + 10) = 0.045
        assert_eq!(stable_nt(&cs, &g).unwrap(), 23);
    }

    #[test]
    fn transpose_matches_the_step() {
        let g = Grid::new(&ProblemDomain::half_disc(1.0, 0.5), [13, 7], 2).unwrap();
        let cs = CoefficientSet::transport(VectorField::half_disc_sink(), 1.0);
        let g = g.with_nt(stable_nt(&cs, &g).unwrap()).unwrap();
        let op = UpwindOperator::new(&cs, &g).unwrap();
        let m = g.node_count();
        let u: Vec<f64> = (0..m).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let w: Vec<f64> = (0..m).map(|i| ((i * 17 % 7) as f64).cos()).collect();
        let mut out = vec![0.0; m];
        op.step(1, &u, &[], &mut out, |_| 0.0);
        let mut back = vec![0.0; m];
        op.step_transpose(1, &w, &mut back);
        let lhs: f64 = out.iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
