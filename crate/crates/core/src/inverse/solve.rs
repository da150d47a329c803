use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::fields::Grid;
use crate::linalg::{cg, norm, CgOptions, CgReport};

use super::map::SourceMap;

/// Minimises `sum_m ||K_m c - y_m||^2 + lambda ||P c||^2_{L2(Omega)}` by CG on
/// the normal equations. All maps must share one parametrisation. Returns
/// the coarse parameters, the fine-grid field and the CG report.
pub fn solve_tikhonov(
    maps: &[&SourceMap],
    ys: &[&[f64]],
    grid: &Grid,
    lambda: f64,
    opts: CgOptions,
) -> (Vec<f64>, Vec<f64>, CgReport) {
    let lead = maps[0];
    let ell = lead.components();
    let w = grid.weights();
    let mut b = vec![0.0; lead.param_len()];
    for (map, y) in maps.iter().zip(ys) {
        for (bk, a) in b.iter_mut().zip(map.adjoint(y)) {
            *bk += a;
        }
    }
    let normal = |c: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for map in maps {
            let back = map.adjoint(&map.apply(c));
            for (o, v) in out.iter_mut().zip(back) {
                *o += v;
            }
        }
        if lambda > 0.0 {
            let mut f = lead.prolong(c);
            for (k, v) in f.iter_mut().enumerate() {
                *v *= w[k / ell];
            }
            for (o, v) in out.iter_mut().zip(lead.prolong_transpose(&f)) {
                *o += lambda * v;
            }
        }
    };
    let (c, report) = cg(normal, &b, opts);
    let f = lead.prolong(&c);
    (c, f, report)
}

/// Noise levels applied to the `u` and `u_t` halves of an observation.
#[derive(Clone, Debug, Serialize)]
pub struct NoiseChannels {
    pub sigma_u: f64,
    pub sigma_dtu: f64,
    /// Euclidean norm of the noise actually added.
    pub norm: f64,
}

/// Adds independent Gaussian noise to each channel, with standard deviation
/// `level` times the channel's root mean square.
pub fn add_noise(y: &[f64], level: f64, rng: &mut impl Rng) -> (Vec<f64>, NoiseChannels) {
    let k = y.len() / 2;
    let rms = |v: &[f64]| norm(v) / (v.len().max(1) as f64).sqrt();
    let sigma_u = level * rms(&y[..k]);
    let sigma_dtu = level * rms(&y[k..]);
    let mut out = y.to_vec();
    let mut nn = 0.0;
    for (j, v) in out.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        let e = if j < k { sigma_u } else { sigma_dtu } * z;
        *v += e;
        nn += e * e;
    }
    (
        out,
        NoiseChannels {
            sigma_u,
            sigma_dtu,
            norm: nn.sqrt(),
        },
    )
}

/// `||a - b|| / ||b||` in `L2(Omega)` for node-major fields with `ell`
/// components.
pub fn relative_l2(grid: &Grid, a: &[f64], b: &[f64], ell: usize) -> f64 {
    let w = grid.weights();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..a.len() {
        num += w[k / ell] * (a[k] - b[k]).powi(2);
        den += w[k / ell] * b[k] * b[k];
    }
    (num / den).sqrt()
}
