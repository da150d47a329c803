use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, Facet, Grid, GridFunction};
use crate::transport::{partition_boundary, UpwindOperator};

/// Boundary observation points: `(level, node, dS dt weight)`.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    pub points: Vec<(usize, usize, f64)>,
}

impl ObservationSet {
    /// The outflow part of the boundary at every level.
    pub fn outflow(cs: &CoefficientSet, grid: &Grid) -> Self {
        let part = partition_boundary(cs, grid);
        let bnd = grid.boundary();
        let wt = grid.time_weights();
        ObservationSet {
            points: part
                .outflow_pairs()
                .map(|(n, e)| (n, bnd[e].node, bnd[e].ds * wt[n]))
                .collect(),
        }
    }

    /// Every boundary entry on the listed facets at every level.
    pub fn facets(grid: &Grid, facets: &[Facet]) -> Self {
        let wt = grid.time_weights();
        let mut points = Vec::new();
        for n in 0..grid.levels() {
            for b in grid.boundary() {
                if facets.contains(&b.facet) {
                    points.push((n, b.node, b.ds * wt[n]));
                }
            }
        }
        ObservationSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One observed boundary value pair with its quadrature weight.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceSample {
    pub level: usize,
    pub node: usize,
    pub weight: f64,
    pub u: f64,
    pub dtu: f64,
}

/// Linear interpolation from every second node (plus the last one) to the
/// full grid, per axis.
#[derive(Clone, Debug)]
pub struct Prolongation {
    coarse: usize,
    /// Per fine node: up to four `(coarse index, weight)` pairs.
    stencil: Vec<Vec<(usize, f64)>>,
    coarse_nodes: Vec<usize>,
}

fn axis_stencil(n: usize, stride: usize) -> (Vec<usize>, Vec<Vec<(usize, f64)>>) {
    let mut pos: Vec<usize> = (0..n).step_by(stride).collect();
    if *pos.last().unwrap() != n - 1 {
        pos.push(n - 1);
    }
    let mut st = vec![Vec::new(); n];
    for c in 0..pos.len() - 1 {
        let (a, b) = (pos[c], pos[c + 1]);
        for i in a..=b {
            let w = (i - a) as f64 / (b - a) as f64;
            if i == a {
                st[i] = vec![(c, 1.0)];
            } else if i == b {
                st[i] = vec![(c + 1, 1.0)];
            } else {
                st[i] = vec![(c, 1.0 - w), (c + 1, w)];
            }
        }
    }
    (pos, st)
}

impl Prolongation {
    pub fn new(grid: &Grid, stride: usize) -> Self {
        let [nx, ny] = grid.shape();
        let (px, sx) = axis_stencil(nx, stride.max(1));
        let (py, sy) = if grid.dim() == 2 {
            axis_stencil(ny, stride.max(1))
        } else {
            (vec![0], vec![vec![(0, 1.0)]])
        };
        let cx = px.len();
        let mut stencil = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let mut s = Vec::with_capacity(4);
                for &(cj, wj) in &sy[j] {
                    for &(ci, wi) in &sx[i] {
                        s.push((ci + cx * cj, wi * wj));
                    }
                }
                stencil.push(s);
            }
        }
        let coarse_nodes = py.iter().flat_map(|&j| px.iter().map(move |&i| grid.index(i, j))).collect();
        Prolongation {
            coarse: cx * py.len(),
            stencil,
            coarse_nodes,
        }
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse
    }

    /// Fine node index of every coarse parameter.
    pub fn coarse_nodes(&self) -> &[usize] {
        &self.coarse_nodes
    }

    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.stencil) {
            *o = s.iter().map(|&(k, w)| w * c[k]).sum();
        }
    }

    pub fn transpose(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (fv, s) in f.iter().zip(&self.stencil) {
            for &(k, w) in s {
                out[k] += w * fv;
            }
        }
    }
}

/// `F -> (sqrt(w) u, sqrt(w) u_t)` at the observation points, where `u`
/// solves `A0 u_t + A . grad u + p u = sum_l R_l F_l` with zero inflow and
/// initial data, and `F` is parametrised on the coarse nodes.
///
/// Parameters are component-major: `c[l * coarse + k]`.
#[derive(Clone, Debug)]
pub struct SourceMap {
    op: UpwindOperator,
    /// `R` per level (the last is unused), node and component.
    r: GridFunction,
    ell: usize,
    prolong: Prolongation,
    obs: Vec<(usize, usize, f64)>,
    /// Time-difference stencil used for `u_t` at each level.
    dt_stencil: Vec<(usize, usize, f64)>,
    m: usize,
    nt: usize,
}

impl SourceMap {
    pub fn new(
        cs: &CoefficientSet,
        grid: &Grid,
        r: GridFunction,
        obs: &ObservationSet,
        stride: usize,
    ) -> Result<Self> {
        let op = UpwindOperator::new(cs, grid)?;
        Self::with_operator(op, grid, r, obs, stride)
    }

    pub fn with_operator(
        op: UpwindOperator,
        grid: &Grid,
        r: GridFunction,
        obs: &ObservationSet,
        stride: usize,
    ) -> Result<Self> {
        let m = grid.node_count();
        let nt = grid.nt();
        if r.nodes() != m || r.levels() != nt + 1 {
            return Err(Error::Config("R must be sampled at every space-time node".into()));
        }
        if obs.is_empty() {
            return Err(Error::Config("observation set is empty".into()));
        }
        let dt_stencil = (0..=nt)
            .map(|n| {
                if n == 0 {
                    (0, 1, grid.dt())
                } else if n == nt {
                    (nt - 1, nt, grid.time(nt) - grid.time(nt - 1))
                } else {
                    (n - 1, n + 1, grid.time(n + 1) - grid.time(n - 1))
                }
            })
            .collect();
        Ok(SourceMap {
            op,
            ell: r.components(),
            r,
            prolong: Prolongation::new(grid, stride),
            obs: obs.points.iter().map(|&(n, i, w)| (n, i, w.sqrt())).collect(),
            dt_stencil,
            m,
            nt,
        })
    }

    pub fn param_len(&self) -> usize {
        self.ell * self.prolong.coarse_len()
    }

    pub fn obs_len(&self) -> usize {
        2 * self.obs.len()
    }

    pub fn components(&self) -> usize {
        self.ell
    }

    pub fn prolongation(&self) -> &Prolongation {
        &self.prolong
    }

    /// Multiplies the square-root weight of observation `k` by `scale(k)`.
    pub fn reweight(&mut self, scale: impl Fn(usize, usize) -> f64) {
        for o in &mut self.obs {
            o.2 *= scale(o.0, o.1);
        }
    }

    /// Fine-grid `F` (node-major, `ell` components) from coarse parameters.
    pub fn prolong(&self, c: &[f64]) -> Vec<f64> {
        let nc = self.prolong.coarse_len();
        let mut f = vec![0.0; self.m * self.ell];
        let mut tmp = vec![0.0; self.m];
        for l in 0..self.ell {
            self.prolong.apply(&c[l * nc..(l + 1) * nc], &mut tmp);
            for i in 0..self.m {
                f[i * self.ell + l] = tmp[i];
            }
        }
        f
    }

    pub fn prolong_transpose(&self, f: &[f64]) -> Vec<f64> {
        let nc = self.prolong.coarse_len();
        let mut c = vec![0.0; nc * self.ell];
        let mut tmp = vec![0.0; self.m];
        for l in 0..self.ell {
            for i in 0..self.m {
                tmp[i] = f[i * self.ell + l];
            }
            self.prolong.transpose(&tmp, &mut c[l * nc..(l + 1) * nc]);
        }
        c
    }

    /// Solution of the forward problem for a fine-grid `F`.
    pub fn solve_fine(&self, f: &[f64]) -> GridFunction {
        let (m, ell) = (self.m, self.ell);
        let mut u = GridFunction::zeros(m, self.nt + 1, 1);
        let mut s = vec![0.0; m];
        let mut next = vec![0.0; m];
        for n in 0..self.nt {
            let r = self.r.level(n);
            for i in 0..m {
                let mut v = 0.0;
                for l in 0..ell {
                    v += r[i * ell + l] * f[i * ell + l];
                }
                s[i] = v;
            }
            self.op.step(n, u.level(n), &s, &mut next, |_| 0.0);
            u.level_mut(n + 1).copy_from_slice(&next);
        }
        u
    }

    /// Observation vector of a fine-grid `F`.
    pub fn observe_fine(&self, f: &[f64]) -> Vec<f64> {
        let u = self.solve_fine(f);
        self.observe_solution(&u)
    }

    /// Weighted traces `(sqrt(w) u, sqrt(w) u_t)` of a space-time field.
    pub fn observe_solution(&self, u: &GridFunction) -> Vec<f64> {
        let k = self.obs.len();
        let mut y = vec![0.0; 2 * k];
        for (e, &(n, i, w)) in self.obs.iter().enumerate() {
            let (a, b, dt) = self.dt_stencil[n];
            y[e] = w * u.get(n, i, 0);
            y[k + e] = w * (u.get(b, i, 0) - u.get(a, i, 0)) / dt;
        }
        y
    }

    /// Unweighted trace values of an observation vector.
    pub fn samples(&self, y: &[f64]) -> Vec<TraceSample> {
        let k = self.obs.len();
        self.obs
            .iter()
            .enumerate()
            .map(|(e, &(level, node, w))| {
                let inv = if w > 0.0 { 1.0 / w } else { 0.0 };
                TraceSample {
                    level,
                    node,
                    weight: w * w,
                    u: y[e] * inv,
                    dtu: y[k + e] * inv,
                }
            })
            .collect()
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        self.observe_fine(&self.prolong(c))
    }

    /// Exact transpose of `observe_fine`, returning a fine-grid `F` cotangent.
    pub fn adjoint_fine(&self, y: &[f64]) -> Vec<f64> {
        let (m, ell, nt) = (self.m, self.ell, self.nt);
        let k = self.obs.len();
        let mut cu = vec![0.0; m * (nt + 1)];
        for (e, &(n, i, w)) in self.obs.iter().enumerate() {
            cu[n * m + i] += w * y[e];
            let (a, b, dt) = self.dt_stencil[n];
            let d = w * y[k + e] / dt;
            cu[b * m + i] += d;
            cu[a * m + i] -= d;
        }
        let mut lam = cu[nt * m..].to_vec();
        let mut back = vec![0.0; m];
        let mut g = vec![0.0; m * ell];
        for n in (0..nt).rev() {
            let r = self.r.level(n);
            for i in 0..m {
                let ds = self.op.source_scale(n, i) * lam[i];
                if ds != 0.0 {
                    for l in 0..ell {
                        g[i * ell + l] += r[i * ell + l] * ds;
                    }
                }
            }
            back.copy_from_slice(&cu[n * m..(n + 1) * m]);
            self.op.step_transpose(n, &lam, &mut back);
            std::mem::swap(&mut lam, &mut back);
        }
        g
    }

    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.prolong_transpose(&self.adjoint_fine(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, VectorField};
    use crate::transport::stable_nt;

    #[test]
    fn prolongation_reproduces_linear_functions() {
        let g = Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [8, 7], 2).unwrap();
        let p = Prolongation::new(&g, 2);
        let c: Vec<f64> = p.coarse_nodes().iter().map(|&i| {
            let x = g.coords(i);
            2.0 * x[0] - x[1]
        }).collect();
        let mut f = vec![0.0; g.node_count()];
        p.apply(&c, &mut f);
        for i in 0..g.node_count() {
            let x = g.coords(i);
            assert!((f[i] - (2.0 * x[0] - x[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_the_transpose() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 2.0), [21, 0], 2).unwrap();
        let g = g.with_nt(stable_nt(&cs, &g).unwrap()).unwrap();
        let r = GridFunction::spacetime(&g, |x, t| 1.0 + x[0] * t);
        let map = SourceMap::new(&cs, &g, r, &ObservationSet::outflow(&cs, &g), 2).unwrap();
        let c: Vec<f64> = (0..map.param_len()).map(|k| (k as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..map.obs_len()).map(|k| (k as f64 * 0.3).cos()).collect();
        let lhs: f64 = map.apply(&c).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = c.iter().zip(map.adjoint(&y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} {rhs}");
    }
}
