use crate::error::{Error, Result};

use super::domain::{Facet, Point, ProblemDomain};

/// A boundary node on one facet. Box corners appear once per facet.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    pub facet: Facet,
    pub normal: Point,
    /// Boundary measure attached to the node (1 for the end points in 1D).
    pub ds: f64,
}

/// Uniform tensor grid over the bounding box of a domain, with trapezoid
/// quadrature in space and time.
#[derive(Clone, Debug)]
pub struct Grid {
    domain: ProblemDomain,
    n: [usize; 2],
    lo: Point,
    h: [f64; 2],
    nt: usize,
    dt: f64,
    active: Vec<bool>,
    weights: Vec<f64>,
    time_weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
}

impl Grid {
    /// `n` holds the node count per axis (the second entry is ignored in 1D)
    /// and `nt` the number of time intervals.
    pub fn new(domain: &ProblemDomain, n: [usize; 2], nt: usize) -> Result<Grid> {
        domain.validate()?;
        let n = if domain.dim == 1 { [n[0], 1] } else { n };
        for k in 0..domain.dim {
            if n[k] < 3 {
                return Err(Error::Config(format!(
                    "grid needs at least 3 nodes per axis, axis {k} has {}",
                    n[k]
                )));
            }
        }
        if nt < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 time steps, got {nt}"
            )));
        }
        let lo = [domain.bounds[0][0], domain.bounds[1][0]];
        let mut h = [0.0; 2];
        for k in 0..domain.dim {
            h[k] = (domain.bounds[k][1] - domain.bounds[k][0]) / (n[k] - 1) as f64;
        }
        let count = n[0] * n[1];
        let tol = 1e-12 * domain.diameter();
        let mut grid = Grid {
            domain: domain.clone(),
            n,
            lo,
            h,
            nt,
            dt: domain.horizon / nt as f64,
            active: vec![true; count],
            weights: vec![0.0; count],
            time_weights: trapezoid(nt + 1, domain.horizon / nt as f64),
            boundary: Vec::new(),
        };
        if domain.mask.is_some() {
            for i in 0..count {
                grid.active[i] = domain.level(grid.coords(i)) <= tol;
            }
            if !grid.active.iter().any(|&a| a) {
                return Err(Error::Config("masked region contains no grid node".into()));
            }
        }
        grid.build_weights();
        grid.build_boundary();
        Ok(grid)
    }

    /// Dyadic refinement in space and time.
    pub fn refined(&self) -> Result<Grid> {
        Grid::new(
            &self.domain,
            [2 * (self.n[0] - 1) + 1, 2 * (self.n[1].max(2) - 1) + 1],
            2 * self.nt,
        )
    }

    pub fn with_nt(&self, nt: usize) -> Result<Grid> {
        Grid::new(&self.domain, self.n, nt)
    }

    fn build_weights(&mut self) {
        let wx = trapezoid(self.n[0], self.h[0]);
        let wy = if self.dim() == 2 {
            trapezoid(self.n[1], self.h[1])
        } else {
            vec![1.0]
        };
        for j in 0..self.n[1] {
            for i in 0..self.n[0] {
                let idx = i + self.n[0] * j;
                self.weights[idx] = if self.active[idx] { wx[i] * wy[j] } else { 0.0 };
            }
        }
        if self.domain.mask.is_some() {
            if let Some(area) = self.domain.measure() {
                let sum: f64 = self.weights.iter().sum();
                for w in &mut self.weights {
                    *w *= area / sum;
                }
            }
        }
    }

    fn build_boundary(&mut self) {
        let dim = self.dim();
        let mut out = Vec::new();
        for idx in 0..self.node_count() {
            if !self.active[idx] {
                continue;
            }
            let ij = self.ij(idx);
            let mut mask_edge = false;
            for k in 0..dim {
                for (facet, at_edge) in [
                    (Facet::Lower(k), ij[k] == 0),
                    (Facet::Upper(k), ij[k] == self.n[k] - 1),
                ] {
                    if at_edge {
                        out.push(BoundaryNode {
                            node: idx,
                            facet,
                            normal: facet.box_normal(),
                            ds: self.facet_ds(idx, k),
                        });
                    } else if let Some(nb) = self.offset(idx, k, if matches!(facet, Facet::Lower(_)) { -1 } else { 1 }) {
                        if !self.active[nb] {
                            mask_edge = true;
                        }
                    }
                }
            }
            if mask_edge {
                let x = self.coords(idx);
                let normal = self.domain.mask.as_ref().expect("mask edge without mask").normal(x);
                let denom = normal[0].abs() + normal[1].abs();
                let hmean = (self.h[0] * self.h[1]).sqrt();
                out.push(BoundaryNode {
                    node: idx,
                    facet: Facet::Mask,
                    normal,
                    ds: if denom > 0.0 { hmean / denom } else { hmean },
                });
            }
        }
        out.sort_by_key(|b| (b.facet, b.node));
        self.boundary = out;
    }

    /// Trapezoid length element along a box facet normal to axis `k`.
    fn facet_ds(&self, idx: usize, k: usize) -> f64 {
        if self.dim() == 1 {
            return 1.0;
        }
        let along = 1 - k;
        let ij = self.ij(idx);
        let mut w = self.h[along];
        let prev = ij[along] == 0 || self.offset(idx, along, -1).is_some_and(|nb| !self.active[nb]);
        let next = ij[along] == self.n[along] - 1
            || self.offset(idx, along, 1).is_some_and(|nb| !self.active[nb]);
        if prev {
            w *= 0.5;
        }
        if next {
            w *= 0.5;
        }
        if prev && next {
            w = 0.0;
        }
        w
    }

    pub fn domain(&self) -> &ProblemDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.h
    }

    /// Largest spatial step.
    pub fn h_max(&self) -> f64 {
        self.h[..self.dim()].iter().cloned().fold(0.0, f64::max)
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn levels(&self) -> usize {
        self.nt + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.domain.horizon
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.nt {
            self.domain.horizon
        } else {
            level as f64 * self.dt
        }
    }

    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    pub fn ij(&self, idx: usize) -> [usize; 2] {
        [idx % self.n[0], idx / self.n[0]]
    }

    pub fn coords(&self, idx: usize) -> Point {
        let [i, j] = self.ij(idx);
        let x = if i == self.n[0] - 1 {
            self.domain.bounds[0][1]
        } else {
            self.lo[0] + i as f64 * self.h[0]
        };
        let y = if self.dim() == 1 {
            0.0
        } else if j == self.n[1] - 1 {
            self.domain.bounds[1][1]
        } else {
            self.lo[1] + j as f64 * self.h[1]
        };
        [x, y]
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&i| self.active[i])
    }

    /// Neighbour of `idx` along `axis` (`dir` = +1 or -1) inside the box,
    /// regardless of the mask.
    pub fn offset(&self, idx: usize, axis: usize, dir: i32) -> Option<usize> {
        let ij = self.ij(idx);
        let stride = if axis == 0 { 1 } else { self.n[0] };
        if dir < 0 {
            (ij[axis] > 0).then(|| idx - stride)
        } else {
            (ij[axis] + 1 < self.n[axis]).then(|| idx + stride)
        }
    }

    /// Active neighbour along `axis`.
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i32) -> Option<usize> {
        self.offset(idx, axis, dir).filter(|&nb| self.active[nb])
    }

    /// Spatial quadrature weights (zero outside the mask).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn time_weights(&self) -> &[f64] {
        &self.time_weights
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    /// Distance-like depth of a node below the boundary.
    pub fn depth(&self, idx: usize) -> f64 {
        -self.domain.level(self.coords(idx))
    }

    /// `sum_i w_i v_i` over a single level.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Space-time quadrature of level-major values.
    pub fn integrate_spacetime(&self, values: &[f64]) -> f64 {
        let m = self.node_count();
        self.time_weights
            .iter()
            .enumerate()
            .map(|(n, wt)| wt * self.integrate(&values[n * m..(n + 1) * m]))
            .sum()
    }
}

fn trapezoid(count: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; count];
    if count == 1 {
        w[0] = 1.0;
        return w;
    }
    w[0] *= 0.5;
    w[count - 1] *= 0.5;
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn box_weights_reproduce_measure() {
        let d = ProblemDomain::rectangle([0.0, 2.0], [-1.0, 0.5], 1.0);
        let g = Grid::new(&d, [17, 9], 4).unwrap();
        let area: f64 = g.weights().iter().sum();
        assert!((area - 3.0).abs() <= 1e-12 * 3.0);
        let total_t: f64 = g.time_weights().iter().sum();
        assert!((total_t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interval_grid_has_two_end_points() {
        let d = ProblemDomain::interval(0.0, 1.0, 1.0);
        let g = Grid::new(&d, [11, 0], 10).unwrap();
        assert_eq!(g.node_count(), 11);
        assert_eq!(g.boundary().len(), 2);
        assert_eq!(g.boundary()[0].normal, [-1.0, 0.0]);
        assert_eq!(g.coords(10), [1.0, 0.0]);
    }

    #[test]
    fn masked_weights_match_analytic_area() {
        let d = ProblemDomain::half_disc(1.0, 1.0);
        let g = Grid::new(&d, [41, 21], 4).unwrap();
        let area: f64 = g.weights().iter().sum();
        assert!((area - PI / 2.0).abs() <= 1e-12 * PI);
        assert!(g.boundary().iter().any(|b| b.facet == Facet::Mask));
        for b in g.boundary() {
            let n = (b.normal[0].powi(2) + b.normal[1].powi(2)).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn square_facets_have_unit_length() {
        let d = ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0);
        let g = Grid::new(&d, [9, 9], 4).unwrap();
        for f in ["x0", "x1", "y0", "y1"] {
            let f = Facet::parse(f).unwrap();
            let len: f64 = g.boundary().iter().filter(|b| b.facet == f).map(|b| b.ds).sum();
            assert!((len - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn too_coarse_grids_are_rejected() {
        let d = ProblemDomain::interval(0.0, 1.0, 1.0);
        assert!(Grid::new(&d, [2, 0], 10).is_err());
        assert!(Grid::new(&d, [5, 0], 1).is_err());
    }

    #[test]
    fn refinement_is_dyadic() {
        let d = ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0);
        let g = Grid::new(&d, [5, 9], 4).unwrap().refined().unwrap();
        assert_eq!(g.shape(), [9, 17]);
        assert_eq!(g.nt(), 8);
    }
}
