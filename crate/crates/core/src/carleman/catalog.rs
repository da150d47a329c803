use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fields::{Grid, GridFunction, Point};
use crate::flow::WeightData;

/// One term `c cos(pi (k . x + w t) + theta)`.
#[derive(Clone, Debug, Serialize)]
pub struct Mode {
    pub coef: f64,
    pub k: Point,
    pub w: f64,
    pub theta: f64,
}

/// Smooth test functions on the space-time cylinder that vanish at `t = 0`
/// and on the inflow boundary.
#[derive(Clone, Debug, Serialize)]
pub enum TestFunction {
    /// `(t / T) (phi0 / max phi0) sum_j modes_j`; `phi0` vanishes exactly
    /// on the inflow part of the boundary.
    Modulated { modes: Vec<Mode> },
    /// `amp exp(1 - 1 / (1 - r^2))` for `r < 1`, with
    /// `r^2 = |x - center|^2 / radius^2 + (t - tc)^2 / rt^2`.
    Bump {
        amp: f64,
        center: Point,
        radius: f64,
        tc: f64,
        rt: f64,
    },
}

impl TestFunction {
    pub fn sample(&self, grid: &Grid, wd: &WeightData) -> GridFunction {
        let horizon = grid.horizon();
        let mut out = GridFunction::zeros(grid.node_count(), grid.levels(), 1);
        for n in 0..grid.levels() {
            let t = grid.time(n);
            for i in grid.active_nodes() {
                let x = grid.coords(i);
                let v = match self {
                    TestFunction::Modulated { modes } => {
                        let envelope = (t / horizon) * wd.phi0.get(0, i, 0) / wd.phi0_max.max(f64::MIN_POSITIVE);
                        let s: f64 = modes
                            .iter()
                            .map(|m| m.coef * (PI * (m.k[0] * x[0] + m.k[1] * x[1] + m.w * t) + m.theta).cos())
                            .sum();
                        envelope * s
                    }
                    TestFunction::Bump {
                        amp,
                        center,
                        radius,
                        tc,
                        rt,
                    } => {
                        let dx = x[0] - center[0];
                        let dy = if grid.dim() == 2 { x[1] - center[1] } else { 0.0 };
                        let r2 = (dx * dx + dy * dy) / (radius * radius) + ((t - tc) / rt).powi(2);
                        if r2 < 1.0 {
                            amp * (1.0 - 1.0 / (1.0 - r2)).exp()
                        } else {
                            0.0
                        }
                    }
                };
                out.set(n, i, 0, v);
            }
        }
        out
    }
}

/// Draw number `index` of the catalog for `seed`. Every fourth draw is a
/// bump, the others are modulated trigonometric sums of three modes.
pub fn test_function(grid: &Grid, seed: u64, index: usize) -> TestFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let dim = grid.dim();
    let horizon = grid.horizon();
    if index % 4 == 3 {
        let diam = grid.domain().diameter();
        // Translates of one bump give the same ratio for constant
        // coefficients, so the radius varies too.
        let radius = rng.random_range(0.1..0.25) * diam;
        let deep: Vec<usize> = grid.active_nodes().filter(|&i| grid.depth(i) > radius).collect();
        let pick = if deep.is_empty() {
            grid.active_nodes().max_by(|&a, &b| grid.depth(a).total_cmp(&grid.depth(b))).unwrap()
        } else {
            deep[rng.random_range(0..deep.len())]
        };
        TestFunction::Bump {
            amp: rng.random_range(0.5..2.0),
            center: grid.coords(pick),
            radius: radius.min(grid.depth(pick).max(1e-3)),
            tc: rng.random_range(0.3..0.7) * horizon,
            rt: 0.25 * horizon,
        }
    } else {
        let modes = (0..3)
            .map(|_| Mode {
                coef: rng.random_range(-1.0..1.0),
                k: [
                    rng.random_range(0.0..3.0),
                    if dim == 2 { rng.random_range(0.0..3.0) } else { 0.0 },
                ],
                w: rng.random_range(0.0..2.0) / horizon,
                theta: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        TestFunction::Modulated { modes }
    }
}

pub fn test_functions(grid: &Grid, seed: u64, count: usize) -> Vec<TestFunction> {
    (0..count).map(|k| test_function(grid, seed, k)).collect()
}
