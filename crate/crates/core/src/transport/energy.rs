use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, Grid};

use super::solve::SolutionField;

/// `E(t) = int (A0 |u_t|^2 + |u|^2) dx` at every level.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
}

pub fn compute_energy(sol: &SolutionField, cs: &CoefficientSet, grid: &Grid) -> EnergyTrace {
    let m = grid.node_count();
    let mut energy = Vec::with_capacity(grid.levels());
    let mut dens = vec![0.0; m];
    for n in 0..grid.levels() {
        let t = grid.time(n);
        let (u, d) = (sol.u.level(n), sol.dtu.level(n));
        for i in grid.active_nodes() {
            dens[i] = cs.a0.value(grid.coords(i), t) * d[i] * d[i] + u[i] * u[i];
        }
        energy.push(grid.integrate(&dens));
    }
    EnergyTrace {
        times: (0..grid.levels()).map(|n| grid.time(n)).collect(),
        energy,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    /// `max_t E(t) / ||f||^2`.
    pub c_energy: f64,
    /// `max_t E(t) / (||dA/dt . grad u||^2_{L2(Q)} + ||f||^2)`.
    pub c_energy_drift: f64,
    pub argmax_t: f64,
    pub f_norm_sq: f64,
    /// Both `u` and `f` vanish; the ratio is undefined.
    pub vacuous: bool,
}

/// Energy constants for a solve with zero inflow and initial data. `f`
/// holds the source profile at the grid nodes.
pub fn check_energy_estimate(
    sol: &SolutionField,
    cs: &CoefficientSet,
    grid: &Grid,
    f: &[f64],
) -> Result<EnergyReport> {
    let trace = compute_energy(sol, cs, grid);
    let f2: Vec<f64> = f.iter().map(|v| v * v).collect();
    let f_norm_sq = grid.integrate(&f2);
    let (k, e_max) = trace
        .energy
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, e)| if e > acc.1 { (k, e) } else { acc });
    if f_norm_sq == 0.0 {
        if sol.u.max_abs() > 0.0 {
            return Err(Error::Numerical(
                "nonzero solution for a vanishing source with homogeneous data".into(),
            ));
        }
        return Ok(EnergyReport {
            c_energy: 0.0,
            c_energy_drift: 0.0,
            argmax_t: 0.0,
            f_norm_sq,
            vacuous: true,
        });
    }

    let drift = if cs.a.is_time_dependent() {
        drift_norm_sq(sol, cs, grid)
    } else {
        0.0
    };
    Ok(EnergyReport {
        c_energy: e_max / f_norm_sq,
        c_energy_drift: e_max / (drift + f_norm_sq),
        argmax_t: trace.times[k],
        f_norm_sq,
        vacuous: false,
    })
}

/// `||dA/dt . grad u||^2` over the space-time cylinder, centred differences.
fn drift_norm_sq(sol: &SolutionField, cs: &CoefficientSet, grid: &Grid) -> f64 {
    let m = grid.node_count();
    let h = grid.spacing();
    let mut vals = vec![0.0; m * grid.levels()];
    for n in 0..grid.levels() {
        let t = grid.time(n);
        let u = sol.u.level(n);
        for i in grid.active_nodes() {
            let da = cs.a.dt(grid.coords(i), t);
            let mut s = 0.0;
            for k in 0..grid.dim() {
                let (b, f) = (grid.neighbor(i, k, -1), grid.neighbor(i, k, 1));
                let d = match (b, f) {
                    (Some(b), Some(f)) => (u[f] - u[b]) / (2.0 * h[k]),
                    (None, Some(f)) => (u[f] - u[i]) / h[k],
                    (Some(b), None) => (u[i] - u[b]) / h[k],
                    (None, None) => 0.0,
                };
                s += da[k] * d;
            }
            vals[n * m + i] = s * s;
        }
    }
    grid.integrate_spacetime(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, ScalarField, VectorField};
    use crate::transport::{solve_forward, stable_nt, ForwardProblem, Source};

    fn unit_source(n: usize) -> (CoefficientSet, Grid, SolutionField) {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0)
            .with_f(ScalarField::constant(1.0));
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 1.0), [n, 0], 2).unwrap();
        let g = g.with_nt(stable_nt(&cs, &g).unwrap()).unwrap();
        let sol = solve_forward(&cs, &g, &ForwardProblem::homogeneous(Source::from_coefficients(&cs))).unwrap();
        (cs, g, sol)
    }

    #[test]
    fn doubling_u_quadruples_energy() {
        let (cs, g, mut sol) = unit_source(21);
        let e1 = compute_energy(&sol, &cs, &g);
        sol.u.scale(2.0);
        sol.dtu.scale(2.0);
        let e2 = compute_energy(&sol, &cs, &g);
        for (a, b) in e1.energy.iter().zip(&e2.energy) {
            assert_eq!(4.0 * a, *b);
        }
    }

    #[test]
    fn unit_source_energy_peaks_at_start() {
        let (cs, g, sol) = unit_source(201);
        let f = vec![1.0; g.node_count()];
        let r = check_energy_estimate(&sol, &cs, &g, &f).unwrap();
        assert!((r.c_energy - 1.0).abs() < 0.05, "{r:?}");
        assert_eq!(r.argmax_t, 0.0);
    }

    #[test]
    fn zero_source_is_vacuous() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, 1.0), [11, 0], 20).unwrap();
        let sol = solve_forward(&cs, &g, &ForwardProblem::homogeneous(Source::Zero)).unwrap();
        let r = check_energy_estimate(&sol, &cs, &g, &[0.0; 11]).unwrap();
        assert!(r.vacuous);
    }
}
