use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, Facet, Grid, GridFunction, Point, ScalarField};

use super::partition::{partition_boundary, BoundaryPartition};
use super::upwind::UpwindOperator;

/// Right-hand side `S` of the equation.
#[derive(Clone, Debug)]
pub enum Source {
    Zero,
    /// `R(x,t) f(x)` from analytic fields.
    Separable { r: ScalarField, f: ScalarField },
    /// `S` sampled at every space-time node (one component).
    Gridded(GridFunction),
}

impl Source {
    /// `R f` as declared in the coefficient set.
    pub fn from_coefficients(cs: &CoefficientSet) -> Self {
        if cs.f.is_zero() {
            Source::Zero
        } else {
            Source::Separable {
                r: cs.r.clone(),
                f: cs.f.clone(),
            }
        }
    }

    fn fill(&self, grid: &Grid, n: usize, out: &mut [f64]) {
        match self {
            Source::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Source::Separable { r, f } => {
                let t = grid.time(n);
                for (i, v) in out.iter_mut().enumerate() {
                    *v = if grid.is_active(i) {
                        let x = grid.coords(i);
                        r.value(x, t) * f.value(x, 0.0)
                    } else {
                        0.0
                    };
                }
            }
            Source::Gridded(s) => out.copy_from_slice(s.level(n)),
        }
    }
}

/// Source, inflow data `g` and initial data `alpha`.
#[derive(Clone, Debug)]
pub struct ForwardProblem {
    pub source: Source,
    pub inflow: ScalarField,
    pub init: ScalarField,
}

impl ForwardProblem {
    /// Zero inflow and initial data.
    pub fn homogeneous(source: Source) -> Self {
        ForwardProblem {
            source,
            inflow: ScalarField::zero(),
            init: ScalarField::zero(),
        }
    }

    pub fn free(inflow: ScalarField, init: ScalarField) -> Self {
        ForwardProblem {
            source: Source::Zero,
            inflow,
            init,
        }
    }
}

/// Values of `u` and `u_t` at one outflow boundary entry and level.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub facet: Facet,
    pub node: usize,
    pub x: Point,
    pub level: usize,
    pub t: f64,
    pub u: f64,
    pub dtu: f64,
    /// `dS dt` quadrature weight of the entry.
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct SolutionField {
    pub u: GridFunction,
    pub dtu: GridFunction,
    pub partition: BoundaryPartition,
    pub traces: Vec<TraceRow>,
    /// Inflow nodes at `t = 0` where `alpha` and `g` disagree by more than
    /// `1e-8`; the initial value is kept there.
    pub corner_mismatches: Vec<usize>,
}

impl SolutionField {
    /// `||u||^2 + ||u_t||^2` on the outflow part of the boundary.
    pub fn trace_norms(&self) -> (f64, f64) {
        let mut nu = 0.0;
        let mut nd = 0.0;
        for r in &self.traces {
            nu += r.weight * r.u * r.u;
            nd += r.weight * r.dtu * r.dtu;
        }
        (nu.sqrt(), nd.sqrt())
    }
}

/// Discrete time derivative: centred inside, one-sided at `t = 0` and `T`.
pub(crate) fn time_derivative(grid: &Grid, u: &GridFunction) -> GridFunction {
    let m = grid.node_count();
    let nt = grid.nt();
    let dt = grid.dt();
    let mut d = GridFunction::zeros(m, nt + 1, 1);
    for n in 0..=nt {
        let (a, b, w) = if n == 0 {
            (0, 1, dt)
        } else if n == nt {
            (nt - 1, nt, grid.time(nt) - grid.time(nt - 1))
        } else {
            (n - 1, n + 1, grid.time(n + 1) - grid.time(n - 1))
        };
        let (ua, ub) = (u.level(a), u.level(b));
        let out = d.level_mut(n);
        for i in 0..m {
            out[i] = (ub[i] - ua[i]) / w;
        }
    }
    d
}

/// Outflow trace rows of `u` and `u_t`, ordered by level then boundary entry.
pub(crate) fn outflow_traces(
    grid: &Grid,
    part: &BoundaryPartition,
    u: &GridFunction,
    dtu: &GridFunction,
) -> Vec<TraceRow> {
    let bnd = grid.boundary();
    let wt = grid.time_weights();
    part.outflow_pairs()
        .map(|(n, e)| {
            let b = &bnd[e];
            TraceRow {
                facet: b.facet,
                node: b.node,
                x: grid.coords(b.node),
                level: n,
                t: grid.time(n),
                u: u.get(n, b.node, 0),
                dtu: dtu.get(n, b.node, 0),
                weight: b.ds * wt[n],
            }
        })
        .collect()
}

/// First-order upwind solve of `A0 u_t + A . grad u + p u = S` with `u = g`
/// at inflow nodes and `u(., 0) = alpha`.
pub fn solve_forward(cs: &CoefficientSet, grid: &Grid, problem: &ForwardProblem) -> Result<SolutionField> {
    let op = UpwindOperator::new(cs, grid)?;
    solve_with(&op, cs, grid, problem)
}

pub(crate) fn solve_with(
    op: &UpwindOperator,
    cs: &CoefficientSet,
    grid: &Grid,
    problem: &ForwardProblem,
) -> Result<SolutionField> {
    let m = grid.node_count();
    let nt = grid.nt();
    let mut u = GridFunction::zeros(m, nt + 1, 1);
    let mut corner_mismatches = Vec::new();
    {
        let u0 = u.level_mut(0);
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            u0[i] = problem.init.value(x, 0.0);
            if op.is_prescribed(0, i) && (problem.inflow.value(x, 0.0) - u0[i]).abs() > 1e-8 {
                corner_mismatches.push(i);
            }
        }
    }
    let mut s = vec![0.0; m];
    let mut next = vec![0.0; m];
    let homogeneous = matches!(problem.source, Source::Zero);
    for n in 0..nt {
        if !homogeneous {
            problem.source.fill(grid, n, &mut s);
        }
        let t1 = grid.time(n + 1);
        let src: &[f64] = if homogeneous { &[] } else { &s };
        op.step(n, u.level(n), src, &mut next, |i| problem.inflow.value(grid.coords(i), t1));
        u.level_mut(n + 1).copy_from_slice(&next);
    }
    if !u.all_finite() {
        return Err(Error::Numerical("forward solve produced non-finite values".into()));
    }
    let dtu = time_derivative(grid, &u);
    let partition = partition_boundary(cs, grid);
    let traces = outflow_traces(grid, &partition, &u, &dtu);
    Ok(SolutionField {
        u,
        dtu,
        partition,
        traces,
        corner_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ProblemDomain, ScalarKind, VectorField};
    use crate::transport::stable_nt;

    fn line(n: usize, horizon: f64) -> (CoefficientSet, Grid) {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, horizon), [n, 0], 2).unwrap();
        let nt = stable_nt(&cs, &g).unwrap();
        (cs, g.with_nt(nt).unwrap())
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (cs, g) = line(21, 1.0);
        let sol = solve_forward(&cs, &g, &ForwardProblem::homogeneous(Source::Zero)).unwrap();
        assert_eq!(sol.u.max_abs(), 0.0);
    }

    #[test]
    fn unit_source_approaches_min_x_t() {
        let (cs, g) = line(101, 1.0);
        let cs = cs.with_f(ScalarField::constant(1.0));
        let sol = solve_forward(&cs, &g, &ForwardProblem::homogeneous(Source::from_coefficients(&cs))).unwrap();
        let mut err: f64 = 0.0;
        for n in 0..g.levels() {
            for i in 0..g.node_count() {
                let x = g.coords(i)[0];
                err = err.max((sol.u.get(n, i, 0) - x.min(g.time(n))).abs());
            }
        }
        assert!(err < 0.1, "{err}");
        // the trace at x = 1 follows min(1, t)
        let last = sol.traces.last().unwrap();
        assert_eq!(last.facet, Facet::Upper(0));
        assert!((last.u - 1.0).abs() < 0.05);
    }

    #[test]
    fn traveling_wave_keeps_its_inflow() {
        let (cs, g) = line(41, 0.5);
        let wave = ScalarField::new(ScalarKind::Wave {
            amp: 1.0,
            k: [1.0, 0.0],
            omega: 1.0,
            phase: 0.0,
        });
        let sol = solve_forward(&cs, &g, &ForwardProblem::free(wave.clone(), wave.clone())).unwrap();
        for n in 1..g.levels() {
            assert_eq!(sol.u.get(n, 0, 0), wave.value([0.0, 0.0], g.time(n)));
        }
        assert!(sol.corner_mismatches.is_empty());
    }

    #[test]
    fn corner_mismatch_is_reported_and_alpha_kept() {
        let (cs, g) = line(11, 0.5);
        let sol = solve_forward(
            &cs,
            &g,
            &ForwardProblem::free(ScalarField::constant(1.0), ScalarField::zero()),
        )
        .unwrap();
        assert_eq!(sol.corner_mismatches, vec![0]);
        assert_eq!(sol.u.get(0, 0, 0), 0.0);
        assert_eq!(sol.u.get(1, 0, 0), 1.0);
    }
}
