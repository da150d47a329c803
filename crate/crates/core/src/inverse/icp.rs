use serde::Serialize;

use crate::carleman::apply_p_plus;
use crate::error::{Condition, Result};
use crate::fields::{CoefficientSet, Grid, GridFunction, ScalarField};
use crate::flow::WeightData;
use crate::transport::{solve_forward, ForwardProblem, SolutionField, UpwindOperator};

use super::admissibility::{check, check_admissibility, AdmissibilityCheck, ProblemKind};
use super::isp::{field_norm, isp_reconstruct, ratio_trial, Observation, Reconstruction, ReconstructOptions, Trial};
use super::map::{ObservationSet, SourceMap, TraceSample};

/// Two zeroth-order coefficients driven by the same data `(g, alpha)`.
#[derive(Clone, Debug)]
pub struct IcpSetup {
    pub p1: ScalarField,
    pub p2: ScalarField,
    pub inflow: ScalarField,
    pub alpha: ScalarField,
    pub m0: f64,
    pub bound_m: f64,
    pub stride: usize,
    /// Reconstruct `p1 - p2` from the traces of `u1 - u2`.
    pub reconstruct: Option<ReconstructOptions>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IcpReport {
    pub admissibility: AdmissibilityCheck,
    /// `p1 = p2` on the grid; the ratio is vacuous.
    pub identical: bool,
    pub trial: Trial,
    /// Max difference between `u1 - u2` and the reduced source solve.
    pub reduction_defect: f64,
    /// `||(P + p1) v - R f||_{L2(Q)}` with centred differences.
    pub residual_l2: f64,
    /// `||u2||_{H1(0,T; Linf)}` from nodal maxima.
    pub u2_bound: f64,
    pub reconstruction: Option<Reconstruction>,
    /// Outflow traces of `v`.
    #[serde(skip)]
    pub traces: Vec<TraceSample>,
    /// `p1 - p2` at the nodes.
    #[serde(skip)]
    pub truth: Vec<f64>,
}

fn h1_linf(grid: &Grid, sol: &SolutionField) -> f64 {
    let wt = grid.time_weights();
    let mut acc = 0.0;
    for n in 0..grid.levels() {
        let mu = grid.active_nodes().map(|i| sol.u.get(n, i, 0).abs()).fold(0.0, f64::max);
        let md = grid.active_nodes().map(|i| sol.dtu.get(n, i, 0).abs()).fold(0.0, f64::max);
        acc += wt[n] * (mu * mu + md * md);
    }
    acc.sqrt()
}

/// Solves with `p1` and `p2`, forms `v = u1 - u2`, `R = -u2`,
/// `f = p1 - p2`, and runs the source problem on `(v, R, f)` observed on the
/// outflow boundary of `cs`.
pub fn icp_reduce_and_run(cs: &CoefficientSet, grid: &Grid, wd: &WeightData, setup: &IcpSetup) -> Result<IcpReport> {
    let mut admissibility = check_admissibility(
        ProblemKind::Icp {
            alpha: &setup.alpha,
            p1: &setup.p1,
            p2: &setup.p2,
        },
        cs,
        grid,
        &[wd],
        setup.m0,
        setup.bound_m,
    );
    admissibility.require()?;

    let cs1 = cs.clone().with_p(setup.p1.clone());
    let cs2 = cs.clone().with_p(setup.p2.clone());
    let problem = ForwardProblem::free(setup.inflow.clone(), setup.alpha.clone());
    let (s1, s2) = rayon::join(|| solve_forward(&cs1, grid, &problem), || solve_forward(&cs2, grid, &problem));
    let (s1, s2) = (s1?, s2?);

    let u2_bound = h1_linf(grid, &s2);
    admissibility.checks.push(check(
        Condition::Bounds,
        u2_bound,
        setup.bound_m,
        u2_bound <= setup.bound_m,
        format!("||u2||_H1(0,T;Linf) = {u2_bound:.6e}, bound M = {:.3e}", setup.bound_m),
    ));
    admissibility.require()?;

    let v = s1.u.sub(&s2.u);
    let mut r = s2.u.clone();
    r.scale(-1.0);
    let f: Vec<f64> = (0..grid.node_count())
        .map(|i| {
            if grid.is_active(i) {
                let x = grid.coords(i);
                setup.p1.value(x, 0.0) - setup.p2.value(x, 0.0)
            } else {
                0.0
            }
        })
        .collect();

    let op = UpwindOperator::new(&cs1, grid)?;
    let map = SourceMap::with_operator(op, grid, r.clone(), &ObservationSet::outflow(cs, grid), setup.stride)?;
    let reduced = map.solve_fine(&f);
    let reduction_defect = reduced.sub(&v).max_abs();

    let pv = apply_p_plus(&cs1, grid, &v);
    let m = grid.node_count();
    let mut res = GridFunction::zeros(m, grid.levels(), 1);
    for n in 0..grid.levels() {
        for i in grid.active_nodes() {
            let e = pv.get(n, i, 0) - r.get(n, i, 0) * f[i];
            res.set(n, i, 0, e * e);
        }
    }
    let residual_l2 = grid.integrate_spacetime(res.values()).sqrt();

    let obs = Observation { y: map.observe_solution(&v) };
    let f_norm = field_norm(grid, &f, 1);
    let identical = f_norm == 0.0;
    let trial = ratio_trial(0, f_norm, &obs);
    let reconstruction = match (&setup.reconstruct, identical) {
        (Some(opts), false) => Some(isp_reconstruct(&map, &obs, grid, opts, Some(&f))),
        _ => None,
    };
    Ok(IcpReport {
        admissibility,
        identical,
        trial,
        reduction_defect,
        residual_l2,
        u2_bound,
        reconstruction,
        traces: map.samples(&obs.y),
        truth: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, VectorField};
    use crate::flow::{build_weight, compute_phi0, TraceOptions};
    use crate::transport::stable_nt;

    fn setup(p2: ScalarField, alpha: f64) -> (CoefficientSet, Grid, WeightData, IcpSetup) {
        let dom = ProblemDomain::interval(0.0, 1.0, 2.0);
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = Grid::new(&dom, [41, 0], 2).unwrap();
        let g = g.with_nt(stable_nt(&cs.clone().with_p(p2.clone()), &g).unwrap()).unwrap();
        let phi0 = compute_phi0(&cs, &g, &TraceOptions::for_problem(&cs, &dom)).unwrap();
        let wd = build_weight(&cs, &g, phi0, None).unwrap();
        let s = IcpSetup {
            p1: ScalarField::zero(),
            p2,
            inflow: ScalarField::constant(1.0),
            alpha: ScalarField::constant(alpha),
            m0: 0.5,
            bound_m: 10.0,
            stride: 2,
            reconstruct: None,
        };
        (cs, g, wd, s)
    }

    #[test]
    fn reduction_is_exact_on_the_grid() {
        let (cs, g, wd, s) = setup(ScalarField::affine(0.0, [1.0, 0.0], 0.0), 1.0);
        let rep = icp_reduce_and_run(&cs, &g, &wd, &s).unwrap();
        assert!(rep.reduction_defect < 1e-13, "{}", rep.reduction_defect);
        assert!(rep.trial.ratio.unwrap().is_finite());
    }

    #[test]
    fn equal_coefficients_are_identical() {
        let (cs, g, wd, mut s) = setup(ScalarField::zero(), 1.0);
        s.reconstruct = Some(ReconstructOptions::default());
        let rep = icp_reduce_and_run(&cs, &g, &wd, &s).unwrap();
        assert!(rep.identical && rep.trial.ratio.is_none() && rep.reconstruction.is_none());
        assert_eq!(rep.reduction_defect, 0.0);
    }

    #[test]
    fn small_alpha_is_rejected() {
        let (cs, g, wd, s) = setup(ScalarField::zero(), 0.1);
        let e = icp_reduce_and_run(&cs, &g, &wd, &s).unwrap_err();
        assert!(e.to_string().contains("(alpha)"));
    }
}
