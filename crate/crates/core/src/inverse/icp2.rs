use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::{apply_p_plus, space_diff, time_diff};
use crate::error::{Condition, Error, Result};
use crate::fields::{CoefficientSet, Facet, Grid, GridFunction, ScalarField, VectorField};
use crate::flow::{build_inverse_weight, compute_phi0, TraceOptions, WeightData};
use crate::linalg::norm;
use crate::transport::{partition_boundary, solve_forward, ForwardProblem, UpwindOperator};

use super::admissibility::{check, check_admissibility, AdmissibilityCheck, ProblemKind};
use super::isp::{field_norm, reconstruct_stacked, Reconstruction, ReconstructOptions};
use super::map::{ObservationSet, SourceMap, TraceSample};

/// Initial and inflow data of one measurement.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub alpha: ScalarField,
    pub inflow: ScalarField,
}

/// Time-independent principal part `(A0, A)`.
#[derive(Clone, Debug)]
pub struct PrincipalPair {
    pub a0: ScalarField,
    pub a: VectorField,
}

#[derive(Clone, Debug)]
pub struct Icp2Setup {
    pub p: ScalarField,
    pub rho: f64,
    /// `d + 1` measurements.
    pub measurements: Vec<Measurement>,
    pub pair1: PrincipalPair,
    pub pair2: PrincipalPair,
    /// Observed boundary facets.
    pub gamma: Vec<Facet>,
    pub m0: f64,
    pub bound_m: f64,
    pub stride: usize,
    pub reconstruct: Option<ReconstructOptions>,
}

impl Icp2Setup {
    fn coefficients(&self, pair: &PrincipalPair) -> CoefficientSet {
        CoefficientSet::transport(pair.a.clone(), self.rho)
            .with_a0(pair.a0.clone())
            .with_p(self.p.clone())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Icp2Report {
    pub admissibility: AdmissibilityCheck,
    /// The two principal parts agree on the grid.
    pub identical: bool,
    /// `||F||_{L2(Omega; R^{d+1})}`.
    pub f_norm: f64,
    /// `||v_m||_{H1(0,T; L2(Gamma))}` per measurement.
    pub obs_h1: Vec<f64>,
    pub ratio: Option<f64>,
    /// Max over `m` of the difference between `v_m` and the reduced solve.
    pub reduction_defect: f64,
    /// `sum_m ||(P_1 + p) v_m - R_m . F||_{L2(Q)}`, centred differences.
    pub residual_l2: f64,
    pub reconstruction: Option<Reconstruction>,
    /// Traces of `v_m` on the observed facets, per measurement.
    #[serde(skip)]
    pub traces: Vec<Vec<TraceSample>>,
    /// `F` at the nodes, node-major with `d + 1` components.
    #[serde(skip)]
    pub truth: Vec<f64>,
}

fn weight_for(cs: &CoefficientSet, grid: &Grid) -> Result<WeightData> {
    let phi0 = compute_phi0(cs, grid, &TraceOptions::for_problem(cs, grid.domain()))?;
    build_inverse_weight(cs, grid, phi0, None)
}

/// Sampled `(A0, A)` bounds: `(min |A|, max(sup A0, sup |A|))`.
fn pair_bounds(cs: &CoefficientSet, grid: &Grid) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in grid.active_nodes() {
        let x = grid.coords(i);
        let a = cs.a.value(x, 0.0);
        let na = if grid.dim() == 1 { a[0].abs() } else { a[0].hypot(a[1]) };
        lo = lo.min(na);
        hi = hi.max(cs.a0.value(x, 0.0).abs()).max(na);
    }
    (lo, hi)
}

/// One-sided difference of level `u` along `axis` against the flow of `a`.
fn upwind_diff(grid: &Grid, u: &[f64], i: usize, axis: usize, a: f64) -> f64 {
    let h = grid.spacing()[axis];
    if a >= 0.0 {
        grid.neighbor(i, axis, -1).map_or(0.0, |b| (u[i] - u[b]) / h)
    } else {
        grid.neighbor(i, axis, 1).map_or(0.0, |f| (u[f] - u[i]) / h)
    }
}

/// Principal-part recovery: `2(d+1)` solves, the coupled reduction
/// `(P_1 + p) v_m = R_m . F` with `F = (A0_1 - A0_2, A_1 - A_2)` and the
/// stability ratio over the observed facets.
pub fn icp2_run(grid: &Grid, setup: &Icp2Setup) -> Result<Icp2Report> {
    let d = grid.dim();
    let ell = d + 1;
    for pair in [&setup.pair1, &setup.pair2] {
        if pair.a0.is_time_dependent() || pair.a.is_time_dependent() {
            return Err(Error::Config("principal parts must be time independent".into()));
        }
    }
    let cs1 = setup.coefficients(&setup.pair1);
    let cs2 = setup.coefficients(&setup.pair2);
    let wd1 = weight_for(&cs1, grid)?;
    let wd2 = weight_for(&cs2, grid)?;

    let alphas: Vec<ScalarField> = setup.measurements.iter().map(|m| m.alpha.clone()).collect();
    let mut admissibility = check_admissibility(
        ProblemKind::Icp2 { alphas: &alphas },
        &cs1,
        grid,
        &[&wd1, &wd2],
        setup.m0,
        setup.bound_m,
    );
    for (k, cs) in [&cs1, &cs2].into_iter().enumerate() {
        let (lo, hi) = pair_bounds(cs, grid);
        admissibility.checks.push(check(
            Condition::Positivity,
            lo,
            setup.rho,
            lo >= setup.rho,
            format!("pair {}: min |A| = {lo:.6e}, rho = {:.3e}", k + 1, setup.rho),
        ));
        admissibility.checks.push(check(
            Condition::Bounds,
            hi,
            setup.bound_m,
            hi <= setup.bound_m,
            format!("pair {}: max(sup A0, sup |A|) = {hi:.6e}, bound M = {:.3e}", k + 1, setup.bound_m),
        ));
        let bnd = grid.boundary();
        let missing = partition_boundary(cs, grid)
            .outflow_pairs()
            .filter(|&(_, e)| !setup.gamma.contains(&bnd[e].facet))
            .count();
        admissibility.checks.push(check(
            Condition::Gamma,
            missing as f64,
            0.0,
            missing == 0,
            format!("pair {}: {missing} outflow entries outside the observed facets", k + 1),
        ));
    }
    admissibility.require()?;

    let problems: Vec<(usize, usize)> = (0..setup.measurements.len()).flat_map(|m| [(m, 0), (m, 1)]).collect();
    let sols = problems
        .par_iter()
        .map(|&(m, k)| {
            let meas = &setup.measurements[m];
            let cs = if k == 0 { &cs1 } else { &cs2 };
            solve_forward(cs, grid, &ForwardProblem::free(meas.inflow.clone(), meas.alpha.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let m_nodes = grid.node_count();
    let nt = grid.nt();
    let mut truth = vec![0.0; m_nodes * ell];
    for i in grid.active_nodes() {
        let x = grid.coords(i);
        truth[i * ell] = cs1.a0.value(x, 0.0) - cs2.a0.value(x, 0.0);
        let (a1, a2) = (cs1.a.value(x, 0.0), cs2.a.value(x, 0.0));
        for k in 0..d {
            truth[i * ell + k + 1] = a1[k] - a2[k];
        }
    }
    let f_norm = field_norm(grid, &truth, ell);
    let identical = f_norm == 0.0;

    let op = UpwindOperator::new(&cs1, grid)?;
    let obs_set = ObservationSet::facets(grid, &setup.gamma);
    let mut maps = Vec::with_capacity(setup.measurements.len());
    let mut ys = Vec::with_capacity(setup.measurements.len());
    let mut obs_h1 = Vec::new();
    let mut traces = Vec::new();
    let mut reduction_defect: f64 = 0.0;
    let mut residual_sq = 0.0;
    for m in 0..setup.measurements.len() {
        let (s1, s2) = (&sols[2 * m], &sols[2 * m + 1]);
        let v = s1.u.sub(&s2.u);
        let u2 = &s2.u;

        // discrete R_m matching the scheme, and its centred counterpart
        let mut r = GridFunction::zeros(m_nodes, nt + 1, ell);
        let mut rc = GridFunction::zeros(m_nodes, nt + 1, ell);
        for n in 0..=nt {
            let level = u2.level(n);
            for i in grid.active_nodes() {
                let x = grid.coords(i);
                let (a1, a2) = (cs1.a.value(x, 0.0), cs2.a.value(x, 0.0));
                if n < nt {
                    r.set(n, i, 0, -(u2.get(n + 1, i, 0) - u2.get(n, i, 0)) / grid.dt());
                    for k in 0..d {
                        let dir = if a1[k] != 0.0 { a1[k] } else { a2[k] };
                        r.set(n, i, k + 1, -upwind_diff(grid, level, i, k, dir));
                    }
                }
                rc.set(n, i, 0, -time_diff(grid, u2, n, i));
                for k in 0..d {
                    rc.set(n, i, k + 1, -space_diff(grid, level, i, k));
                }
            }
        }

        let map = SourceMap::with_operator(op.clone(), grid, r, &obs_set, setup.stride)?;
        reduction_defect = reduction_defect.max(map.solve_fine(&truth).sub(&v).max_abs());

        let pv = apply_p_plus(&cs1, grid, &v);
        let mut res = vec![0.0; m_nodes * (nt + 1)];
        for n in 0..=nt {
            for i in grid.active_nodes() {
                let mut e = pv.get(n, i, 0);
                for l in 0..ell {
                    e -= rc.get(n, i, l) * truth[i * ell + l];
                }
                res[n * m_nodes + i] = e * e;
            }
        }
        residual_sq += grid.integrate_spacetime(&res);

        let y = map.observe_solution(&v);
        obs_h1.push(norm(&y));
        traces.push(map.samples(&y));
        maps.push(map);
        ys.push(y);
    }

    let denom: f64 = obs_h1.iter().sum();
    let ratio = (!identical && denom > 1e-14 * f_norm).then(|| f_norm / denom);
    let reconstruction = match (&setup.reconstruct, identical) {
        (Some(opts), false) => {
            let mref: Vec<&SourceMap> = maps.iter().collect();
            let yref: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
            Some(reconstruct_stacked(&mref, &yref, grid, opts, Some(&truth)))
        }
        _ => None,
    };
    Ok(Icp2Report {
        admissibility,
        identical,
        f_norm,
        obs_h1,
        ratio,
        reduction_defect,
        residual_l2: residual_sq.sqrt(),
        reconstruction,
        traces,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ProblemDomain;
    use crate::transport::stable_nt;

    pub(crate) fn line_setup(n: usize, a0_2: f64, a_2: f64) -> (Grid, Icp2Setup) {
        let setup = Icp2Setup {
            p: ScalarField::constant(1.0),
            rho: 0.9,
            measurements: vec![
                Measurement {
                    alpha: ScalarField::constant(1.0),
                    inflow: ScalarField::constant(1.0),
                },
                Measurement {
                    alpha: ScalarField::affine(0.0, [1.0, 0.0], 0.0),
                    inflow: ScalarField::zero(),
                },
            ],
            pair1: PrincipalPair {
                a0: ScalarField::constant(1.0),
                a: VectorField::constant([1.0, 0.0]),
            },
            pair2: PrincipalPair {
                a0: ScalarField::constant(a0_2),
                a: VectorField::constant([a_2, 0.0]),
            },
            gamma: vec![Facet::Upper(0)],
            m0: 0.5,
            bound_m: 10.0,
            stride: 2,
            reconstruct: None,
        };
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 2.0), [n, 0], 2).unwrap();
        let nt = stable_nt(&setup.coefficients(&setup.pair1), &g).unwrap();
        (g.with_nt(nt).unwrap(), setup)
    }

    #[test]
    fn coupled_reduction_is_exact_on_the_grid() {
        let (g, s) = line_setup(41, 1.1, 0.9);
        let rep = icp2_run(&g, &s).unwrap();
        assert!(rep.reduction_defect < 1e-12, "{}", rep.reduction_defect);
        assert!(rep.ratio.unwrap().is_finite());
        assert!((rep.admissibility.get(Condition::R2).unwrap().observed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_pairs_give_zero_differences() {
        let (g, s) = line_setup(21, 1.0, 1.0);
        let rep = icp2_run(&g, &s).unwrap();
        assert!(rep.identical && rep.ratio.is_none());
        assert_eq!(rep.obs_h1, vec![0.0, 0.0]);
    }

    #[test]
    fn unobserved_outflow_is_rejected() {
        let (g, mut s) = line_setup(21, 1.1, 0.9);
        s.gamma = vec![Facet::Lower(0)];
        let e = icp2_run(&g, &s).unwrap_err();
        assert!(e.to_string().contains("(Gamma)"), "{e}");
    }

    #[test]
    fn degenerate_measurements_fail_the_determinant() {
        let (g, mut s) = line_setup(21, 1.1, 0.9);
        s.measurements[1].alpha = ScalarField::constant(2.0);
        s.measurements[1].inflow = ScalarField::constant(2.0);
        let e = icp2_run(&g, &s).unwrap_err();
        assert!(e.to_string().contains("(R2)"), "{e}");
    }
}
