use serde::Serialize;

use crate::error::{Condition, Error, Result};
use crate::fields::{CoefficientSet, Grid, ScalarField};
use crate::flow::WeightData;

/// Inverse problem whose hypotheses are checked.
#[derive(Clone, Copy, Debug)]
pub enum ProblemKind<'a> {
    /// Source problem: `|R(x,0)| >= m0`.
    Isp,
    /// Zeroth-order coefficient: `|alpha| >= m0` and `|p_k| <= M`.
    Icp {
        alpha: &'a ScalarField,
        p1: &'a ScalarField,
        p2: &'a ScalarField,
    },
    /// Principal part from `d + 1` measurements:
    /// `|p(x,0)| |det(alpha_m; grad alpha_m)| >= m0`.
    Icp2 { alphas: &'a [ScalarField] },
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub label: &'static str,
    pub observed: f64,
    pub required: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityCheck {
    pub checks: Vec<ConditionCheck>,
}

impl AdmissibilityCheck {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, condition: Condition) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }

    /// The first failing condition as an error.
    pub fn require(&self) -> Result<()> {
        match self.checks.iter().find(|c| !c.pass) {
            Some(c) => Err(Error::admissibility(c.condition, c.detail.clone())),
            None => Ok(()),
        }
    }
}

pub(crate) fn check(condition: Condition, observed: f64, required: f64, pass: bool, detail: String) -> ConditionCheck {
    ConditionCheck {
        condition,
        label: condition.label(),
        observed,
        required,
        pass,
        detail,
    }
}

fn min_abs_at_start(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> (f64, Option<usize>) {
    grid.active_nodes()
        .map(|i| (f(grid.coords(i)).abs(), Some(i)))
        .fold((f64::INFINITY, None), |a, b| if b.0 < a.0 { b } else { a })
}

fn at_node(at: Option<usize>) -> String {
    at.map_or_else(String::new, |i| format!(" at node {i}"))
}

fn sup_abs(grid: &Grid, f: &ScalarField) -> f64 {
    let mut m: f64 = 0.0;
    for n in 0..grid.levels() {
        let t = grid.time(n);
        for i in grid.active_nodes() {
            m = m.max(f.value(grid.coords(i), t).abs());
        }
    }
    m
}

fn det(a: &mut [[f64; 3]; 3], n: usize) -> f64 {
    // Gaussian elimination with partial pivoting.
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

/// Evaluates the hypotheses of one experiment on the grid. Each weight in
/// `wds` contributes an observation-time check; `m0` is the required lower
/// bound and `bound_m` the size of the conditional set.
pub fn check_admissibility(
    kind: ProblemKind<'_>,
    cs: &CoefficientSet,
    grid: &Grid,
    wds: &[&WeightData],
    m0: f64,
    bound_m: f64,
) -> AdmissibilityCheck {
    let mut checks = Vec::new();
    let time_condition = match kind {
        ProblemKind::Icp2 { .. } => Condition::Time2,
        _ => Condition::Time,
    };
    match kind {
        ProblemKind::Isp => {
            let (m, at) = min_abs_at_start(grid, |x| cs.r.value(x, 0.0));
            checks.push(check(
                Condition::R,
                m,
                m0,
                m >= m0,
                format!("min |R(x,0)| = {m:.6e}{}, required >= {m0:.3e}", at_node(at)),
            ));
        }
        ProblemKind::Icp { alpha, p1, p2 } => {
            let (m, at) = min_abs_at_start(grid, |x| alpha.value(x, 0.0));
            checks.push(check(
                Condition::Alpha,
                m,
                m0,
                m >= m0,
                format!("min |alpha| = {m:.6e}{}, required >= {m0:.3e}", at_node(at)),
            ));
            let sup = sup_abs(grid, p1).max(sup_abs(grid, p2));
            checks.push(check(
                Condition::Bounds,
                sup,
                bound_m,
                sup <= bound_m,
                format!("max(sup |p1|, sup |p2|) = {sup:.6e}, bound M = {bound_m:.3e}"),
            ));
        }
        ProblemKind::Icp2 { alphas } => {
            let d = grid.dim();
            if alphas.len() != d + 1 {
                checks.push(check(
                    Condition::R2,
                    0.0,
                    m0,
                    false,
                    format!("{} measurements given, {} required", alphas.len(), d + 1),
                ));
            } else {
                let (m, at) = min_abs_at_start(grid, |x| {
                    let mut a = [[0.0; 3]; 3];
                    for (r, al) in alphas.iter().enumerate() {
                        a[r][0] = al.value(x, 0.0);
                        let g = al.grad(x, 0.0);
                        a[r][1..=d].copy_from_slice(&g[..d]);
                    }
                    cs.p.value(x, 0.0) * det(&mut a, d + 1)
                });
                let where_ = at.map(|i| grid.coords(i));
                checks.push(check(
                    Condition::R2,
                    m,
                    m0,
                    m >= m0,
                    format!("min |p(x,0) det| = {m:.6e} at {where_:?}, required >= {m0:.3e}"),
                ));
            }
        }
    }
    for wd in wds {
        checks.push(check(
            time_condition,
            grid.horizon() - wd.t0,
            0.0,
            wd.t0 < grid.horizon(),
            format!("T0 = {:.6} against T = {:.6}", wd.t0, grid.horizon()),
        ));
    }
    AdmissibilityCheck { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, VectorField};
    use crate::flow::{build_weight, compute_phi0, TraceOptions};

    #[test]
    fn unit_r_passes() {
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 2.0), [11, 0], 30).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let c = check_admissibility(ProblemKind::Isp, &cs, &g, &[], 0.5, 10.0);
        assert_eq!(c.get(Condition::R).unwrap().observed, 1.0);
        assert!(c.pass());
    }

    #[test]
    fn determinant_of_one_and_x_is_one() {
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 2.0), [11, 0], 30).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0).with_p(ScalarField::constant(1.0));
        let alphas = [ScalarField::constant(1.0), ScalarField::affine(0.0, [1.0, 0.0], 0.0)];
        let c = check_admissibility(ProblemKind::Icp2 { alphas: &alphas }, &cs, &g, &[], 0.5, 10.0);
        assert!((c.get(Condition::R2).unwrap().observed - 1.0).abs() < 1e-15);
    }

    #[test]
    fn short_horizon_fails_time() {
        let dom = ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 0.9);
        let g = Grid::new(&dom, [9, 9], 20).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let phi0 = compute_phi0(&cs, &g, &TraceOptions::for_problem(&cs, &dom)).unwrap();
        let wd = build_weight(&cs, &g, phi0, None).unwrap();
        let c = check_admissibility(ProblemKind::Isp, &cs, &g, &[&wd], 0.5, 10.0);
        assert!(!c.pass());
        let e = c.require().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("(time)"));
    }
}
