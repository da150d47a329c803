use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fields::{CoefficientSet, Grid, GridFunction};
use crate::flow::WeightData;
use crate::linalg::{norm, CgOptions, CgReport};

use super::map::{ObservationSet, SourceMap};
use super::solve::{add_noise, relative_l2, solve_tikhonov, NoiseChannels};

/// Weighted boundary traces: the first half of `y` holds `sqrt(w) u`, the
/// second `sqrt(w) u_t`, so Euclidean norms of the halves are the
/// `L2(Sigma)` norms.
#[derive(Clone, Debug, Serialize)]
pub struct Observation {
    pub y: Vec<f64>,
}

impl Observation {
    pub fn u_part(&self) -> &[f64] {
        &self.y[..self.y.len() / 2]
    }

    pub fn dtu_part(&self) -> &[f64] {
        &self.y[self.y.len() / 2..]
    }

    /// `(||u||, ||u_t||)` on the observed boundary part.
    pub fn norms(&self) -> (f64, f64) {
        (norm(self.u_part()), norm(self.dtu_part()))
    }
}

/// Source map for `R f` with `R` taken from the coefficient set, observed on
/// the outflow boundary.
pub fn isp_map(cs: &CoefficientSet, grid: &Grid, stride: usize) -> Result<SourceMap> {
    let r = GridFunction::spacetime(grid, |x, t| cs.r.value(x, t));
    SourceMap::new(cs, grid, r, &ObservationSet::outflow(cs, grid), stride)
}

/// Observation of the solution driven by the fine-grid source `f`.
pub fn isp_forward_map(map: &SourceMap, f: &[f64]) -> Observation {
    Observation { y: map.observe_fine(f) }
}

#[derive(Clone, Copy, Debug)]
pub struct ReconstructOptions {
    pub lambda: f64,
    pub cg: CgOptions,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            lambda: 1e-8,
            cg: CgOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Reconstruction {
    /// Node-major fine-grid field, `components` values per node.
    #[serde(skip)]
    pub f_hat: Vec<f64>,
    pub lambda: f64,
    /// `||K f_hat - y||` in the observation norm.
    pub misfit: f64,
    pub rel_error: Option<f64>,
    pub cg: CgReport,
}

/// Multiplies every observation by `e^{s (phi - max phi)}` at its node and
/// time, so that the squared misfit carries the Carleman weight.
pub fn carleman_reweight(map: &mut SourceMap, grid: &Grid, wd: &WeightData, s: f64) {
    let mut hi = f64::NEG_INFINITY;
    for n in 0..grid.levels() {
        for i in grid.active_nodes() {
            hi = hi.max(wd.phi(i, grid.time(n)));
        }
    }
    map.reweight(|n, i| (s * (wd.phi(i, grid.time(n)) - hi)).exp());
}

fn finish(maps: &[&SourceMap], ys: &[&[f64]], grid: &Grid, opts: &ReconstructOptions, truth: Option<&[f64]>) -> Reconstruction {
    let (c, f_hat, cg) = solve_tikhonov(maps, ys, grid, opts.lambda, opts.cg);
    let mut misfit = 0.0;
    for (map, y) in maps.iter().zip(ys) {
        let k = map.apply(&c);
        misfit += k.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    let ell = maps[0].components();
    Reconstruction {
        rel_error: truth.map(|t| relative_l2(grid, &f_hat, t, ell)),
        f_hat,
        lambda: opts.lambda,
        misfit: misfit.sqrt(),
        cg,
    }
}

/// Tikhonov reconstruction of the source from one observation. `truth`, if
/// given, is compared in relative `L2(Omega)`.
pub fn isp_reconstruct(
    map: &SourceMap,
    obs: &Observation,
    grid: &Grid,
    opts: &ReconstructOptions,
    truth: Option<&[f64]>,
) -> Reconstruction {
    finish(&[map], &[&obs.y], grid, opts, truth)
}

/// Reconstruction from several maps sharing one parametrisation.
pub fn reconstruct_stacked(
    maps: &[&SourceMap],
    ys: &[&[f64]],
    grid: &Grid,
    opts: &ReconstructOptions,
    truth: Option<&[f64]>,
) -> Reconstruction {
    finish(maps, ys, grid, opts, truth)
}

/// Discrepancy principle: walks `lambdas` from the largest down and returns
/// the first reconstruction whose misfit is at most `tau * noise_norm`
/// (or the last one tried).
pub fn isp_reconstruct_discrepancy(
    map: &SourceMap,
    obs: &Observation,
    grid: &Grid,
    base: &ReconstructOptions,
    noise_norm: f64,
    tau: f64,
    lambdas: &[f64],
    truth: Option<&[f64]>,
) -> Reconstruction {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut last = None;
    for lambda in sorted {
        let opts = ReconstructOptions { lambda, ..*base };
        let rec = isp_reconstruct(map, obs, grid, &opts, truth);
        if rec.misfit <= tau * noise_norm {
            return rec;
        }
        last = Some(rec);
    }
    last.expect("at least one regularisation parameter")
}

/// Noisy copy of an observation, per-channel relative level.
pub fn noisy_observation(obs: &Observation, level: f64, seed: u64) -> (Observation, NoiseChannels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, ch) = add_noise(&obs.y, level, &mut rng);
    (Observation { y }, ch)
}

#[derive(Clone, Debug, Serialize)]
pub struct Trial {
    pub index: usize,
    pub f_norm: f64,
    pub obs_u: f64,
    pub obs_dtu: f64,
    /// `||f|| / (||u|| + ||u_t||)`; absent when the observation vanishes.
    pub ratio: Option<f64>,
    /// Nonzero source with a vanishing observation.
    pub non_observable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRatioReport {
    pub trials: Vec<Trial>,
    pub max_ratio: Option<f64>,
    /// Some trial was non-observable.
    pub flagged: bool,
}

impl StabilityRatioReport {
    pub fn from_trials(trials: Vec<Trial>) -> Self {
        let flagged = trials.iter().any(|t| t.non_observable);
        let max_ratio = if flagged {
            None
        } else {
            trials.iter().filter_map(|t| t.ratio).reduce(f64::max)
        };
        StabilityRatioReport {
            trials,
            max_ratio,
            flagged,
        }
    }

    /// Whether this and a refined report agree within `factor`; a flagged
    /// report is never stable.
    pub fn stable_against(&self, refined: &StabilityRatioReport, factor: f64) -> bool {
        match (self.max_ratio, refined.max_ratio) {
            (Some(a), Some(b)) => a.max(b) <= factor * a.min(b),
            _ => false,
        }
    }
}

/// Ratio row for one source and its observation.
pub fn ratio_trial(index: usize, f_norm: f64, obs: &Observation) -> Trial {
    let (ou, od) = obs.norms();
    let denom = ou + od;
    let non_observable = f_norm > 0.0 && denom <= 1e-14 * f_norm;
    Trial {
        index,
        f_norm,
        obs_u: ou,
        obs_dtu: od,
        ratio: (!non_observable && f_norm > 0.0).then(|| f_norm / denom),
        non_observable,
    }
}

/// `L2(Omega)` norm of a node-major field with `ell` components.
pub fn field_norm(grid: &Grid, f: &[f64], ell: usize) -> f64 {
    let w = grid.weights();
    f.iter().enumerate().map(|(k, v)| w[k / ell] * v * v).sum::<f64>().sqrt()
}

/// Stability ratios for an ensemble of fine-grid sources.
pub fn isp_stability_ratio(map: &SourceMap, grid: &Grid, sources: &[Vec<f64>]) -> StabilityRatioReport {
    use rayon::prelude::*;
    let trials = sources
        .par_iter()
        .enumerate()
        .map(|(k, f)| ratio_trial(k, field_norm(grid, f, 1), &isp_forward_map(map, f)))
        .collect();
    StabilityRatioReport::from_trials(trials)
}

/// Smooth random sources `sum_k a_k prod_d sin(k pi xi_d + theta_kd)` in
/// bounding-box coordinates `xi in [0,1]^d`, `k = 1..4`, `a_k ~ U(-1,1)/k`.
pub fn random_sources(grid: &Grid, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let b = grid.domain().bounds;
    (0..count)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let mut modes = Vec::new();
            for k in 1..=4 {
                let phases: Vec<f64> = (0..grid.dim())
                    .map(|_| rng.random_range(0.0..std::f64::consts::PI))
                    .collect();
                modes.push((rng.random_range(-1.0..1.0) / k as f64, k as f64, phases));
            }
            (0..grid.node_count())
                .map(|i| {
                    if !grid.is_active(i) {
                        return 0.0;
                    }
                    let x = grid.coords(i);
                    modes
                        .iter()
                        .map(|(a, k, phases)| {
                            let mut v = *a;
                            for (d, theta) in phases.iter().enumerate() {
                                let xi = (x[d] - b[d][0]) / (b[d][1] - b[d][0]);
                                v *= (k * std::f64::consts::PI * xi + theta).sin();
                            }
                            v
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Smooth bumps `(1 - r^2)^3` along axis 0 with random centre and radius
/// inside `window`.
pub fn random_bumps(grid: &Grid, seed: u64, count: usize, window: [f64; 2]) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let width = window[1] - window[0];
            let radius = rng.random_range(0.2 * width..0.5 * width);
            let centre = rng.random_range(window[0] + radius..window[1] - radius);
            let amp = rng.random_range(0.5..1.5);
            (0..grid.node_count())
                .map(|i| {
                    let r = (grid.coords(i)[0] - centre) / radius;
                    if grid.is_active(i) && r.abs() < 1.0 {
                        amp * (1.0 - r * r).powi(3)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, VectorField};
    use crate::transport::stable_nt;

    fn line(n: usize, horizon: f64) -> (CoefficientSet, Grid) {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, horizon), [n, 0], 2).unwrap();
        let g = g.with_nt(stable_nt(&cs, &g).unwrap()).unwrap();
        (cs, g)
    }

    #[test]
    fn zero_source_observes_zero_and_reconstructs_zero() {
        let (cs, g) = line(21, 2.0);
        let map = isp_map(&cs, &g, 2).unwrap();
        let obs = isp_forward_map(&map, &vec![0.0; g.node_count()]);
        assert!(obs.y.iter().all(|v| *v == 0.0));
        let rec = isp_reconstruct(&map, &obs, &g, &ReconstructOptions::default(), None);
        assert!(rec.f_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_source_trace_follows_min_one_t() {
        let (cs, g) = line(201, 2.0);
        let map = isp_map(&cs, &g, 2).unwrap();
        let obs = isp_forward_map(&map, &vec![1.0; g.node_count()]);
        let pts = ObservationSet::outflow(&cs, &g);
        let u = obs.u_part();
        for (k, &(n, i, w)) in pts.points.iter().enumerate() {
            assert_eq!(g.coords(i)[0], 1.0);
            let t = g.time(n);
            if w > 0.0 {
                assert!((u[k] / w.sqrt() - t.min(1.0)).abs() < 0.06, "t = {t}");
            }
        }
    }

    #[test]
    fn ratio_is_homogeneous() {
        let (cs, g) = line(41, 2.0);
        let map = isp_map(&cs, &g, 2).unwrap();
        let f0 = random_sources(&g, 3, 1).remove(0);
        let ens: Vec<Vec<f64>> = [0.5, 1.0, 7.0].iter().map(|c| f0.iter().map(|v| c * v).collect()).collect();
        let rep = isp_stability_ratio(&map, &g, &ens);
        let r0 = rep.trials[0].ratio.unwrap();
        for t in &rep.trials {
            assert!((t.ratio.unwrap() - r0).abs() <= 1e-10 * r0);
        }
    }

    #[test]
    fn sources_in_the_unreached_region_are_flagged() {
        let (cs, g) = line(101, 0.5);
        let map = isp_map(&cs, &g, 2).unwrap();
        let rep = isp_stability_ratio(&map, &g, &random_bumps(&g, 1, 3, [0.05, 0.4]));
        assert!(rep.flagged && rep.max_ratio.is_none());
    }
}
