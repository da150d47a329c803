use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Condition, Error};
use crate::fields::{CoefficientSet, Grid, Point, ProblemDomain};

use super::ode::{dp_step, step_factor, State};

/// Tolerances for tracing integral curves of `A(., 0)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceOptions {
    /// Local error tolerance per step.
    pub tol_ode: f64,
    /// Distance to the boundary accepted as landed.
    pub tol_bdry: f64,
    /// Parameter cap; reaching it means the curve does not exit.
    pub s_max: f64,
    /// Keep the accepted step points on the returned curve.
    pub record_samples: bool,
}

impl TraceOptions {
    /// `tol_ode = 1e-9`, `tol_bdry = 1e-10 diam`, `s_max = 100 diam / rho`.
    pub fn for_problem(cs: &CoefficientSet, dom: &ProblemDomain) -> Self {
        let diam = dom.diameter();
        TraceOptions {
            tol_ode: 1e-9,
            tol_bdry: 1e-10 * diam,
            s_max: 100.0 * diam / cs.rho,
            record_samples: false,
        }
    }

    pub fn with_s_max(mut self, s_max: f64) -> Self {
        self.s_max = s_max;
        self
    }

    pub fn with_samples(mut self) -> Self {
        self.record_samples = true;
        self
    }
}

/// Exits whose direction is this close to tangential are flagged.
const TANGENTIAL_COS: f64 = 1e-3;

/// Maximal integral curve of `A(., 0)` through a seed point.
#[derive(Clone, Debug, Serialize)]
pub struct IntegralCurve {
    pub seed: Point,
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    pub exit_minus: Point,
    pub exit_plus: Point,
    /// Length of the backward segment `[sigma_minus, 0]`.
    pub arc_minus: f64,
    /// Length of the forward segment `[0, sigma_plus]`.
    pub arc_plus: f64,
    /// `(sigma, c(sigma))` at accepted steps, ordered by `sigma`.
    pub samples: Vec<(f64, Point)>,
    /// Whether the backward / forward exit is nearly tangential.
    pub tangential: [bool; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FailureKind {
    /// The parameter cap was reached before the curve left the domain.
    CapReached,
    /// `A(., 0)` vanishes (or the step size underflowed) along the curve.
    Stagnation,
}

/// The curve through `seed` does not exit the domain in finite parameter.
#[derive(Clone, Debug, Serialize)]
pub struct NotDissipative {
    pub seed: Point,
    pub node: Option<usize>,
    pub kind: FailureKind,
    /// `-1` for the backward direction, `+1` for the forward one.
    pub direction: i8,
    /// Where the trace stopped.
    pub stopped_at: Point,
}

impl From<NotDissipative> for Error {
    fn from(e: NotDissipative) -> Self {
        let what = match e.kind {
            FailureKind::CapReached => "does not leave the domain before the parameter cap",
            FailureKind::Stagnation => "runs into a stagnation point",
        };
        Error::admissibility(
            Condition::Finiteness,
            format!(
                "the {} integral curve of A(.,0) through ({:.6}, {:.6}) {what}",
                if e.direction < 0 { "backward" } else { "forward" },
                e.seed[0],
                e.seed[1]
            ),
        )
    }
}

struct Half {
    param: f64,
    exit: Point,
    arc: f64,
    samples: Vec<(f64, Point)>,
    tangential: bool,
}

fn speed(a: Point, dim: usize) -> f64 {
    if dim == 1 {
        a[0].abs()
    } else {
        (a[0] * a[0] + a[1] * a[1]).sqrt()
    }
}

fn trace_half(
    cs: &CoefficientSet,
    dom: &ProblemDomain,
    seed: Point,
    dir: f64,
    opts: &TraceOptions,
) -> Result<Half, (FailureKind, Point)> {
    let dim = dom.dim;
    let field = |y: &State| -> State {
        let a = cs.a.value([y[0], y[1]], 0.0);
        let a = if dim == 1 { [a[0], 0.0] } else { a };
        [dir * a[0], dir * a[1], speed(a, dim)]
    };
    let diam = dom.diameter();
    let max_len = 0.02 * diam;
    let outside = |y: &State| dom.level([y[0], y[1]]) > opts.tol_bdry;

    let mut y: State = [seed[0], seed[1], 0.0];
    let mut k1 = field(&y);
    let v0 = speed([k1[0], k1[1]], dim);
    let stagnant = 1e-13 * cs.rho.max(v0);
    if v0 <= stagnant.max(f64::MIN_POSITIVE) {
        return Err((FailureKind::Stagnation, seed));
    }
    let mut tau = 0.0;
    let mut h = (0.01 * diam / v0).min(opts.s_max);
    let mut samples = Vec::new();
    if opts.record_samples {
        samples.push((0.0, seed));
    }

    loop {
        let v = speed([k1[0], k1[1]], dim);
        if v <= stagnant {
            return Err((FailureKind::Stagnation, [y[0], y[1]]));
        }
        h = h.min(max_len / v);
        if tau >= opts.s_max {
            return Err((FailureKind::CapReached, [y[0], y[1]]));
        }
        if h <= 1e-14 * (1.0 + tau) {
            return Err((FailureKind::Stagnation, [y[0], y[1]]));
        }
        let step = dp_step(&field, &y, &k1, h, opts.tol_ode);
        if step.err > 1.0 {
            h *= step_factor(step.err);
            continue;
        }
        if outside(&step.y) {
            // Bisect the step length onto the boundary.
            let (mut lo, mut hi) = (0.0, h);
            let mut y_lo = y;
            for _ in 0..200 {
                if (hi - lo) * v <= 0.5 * opts.tol_bdry {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let s = dp_step(&field, &y, &k1, mid, opts.tol_ode);
                if outside(&s.y) {
                    hi = mid;
                } else {
                    lo = mid;
                    y_lo = s.y;
                }
            }
            let exit = [y_lo[0], y_lo[1]];
            let a = cs.a.value(exit, 0.0);
            let nu = dom.outward_normal(exit);
            let an = (a[0] * nu[0] + if dim == 2 { a[1] * nu[1] } else { 0.0 }).abs();
            let tangential = an <= TANGENTIAL_COS * speed(a, dim);
            let param = tau + lo;
            if opts.record_samples {
                samples.push((param, exit));
            }
            return Ok(Half {
                param,
                exit,
                arc: y_lo[2],
                samples,
                tangential,
            });
        }
        tau += h;
        y = step.y;
        k1 = step.k_last;
        if opts.record_samples {
            samples.push((tau, [y[0], y[1]]));
        }
        h *= step_factor(step.err);
    }
}

/// Traces the maximal integral curve of `A(., 0)` through `x` in both
/// directions, landing each end on the boundary by bisection.
pub fn trace_curve(
    cs: &CoefficientSet,
    dom: &ProblemDomain,
    x: Point,
    opts: &TraceOptions,
) -> Result<IntegralCurve, NotDissipative> {
    let fail = |(kind, at): (FailureKind, Point), direction: i8| NotDissipative {
        seed: x,
        node: None,
        kind,
        direction,
        stopped_at: at,
    };
    let back = trace_half(cs, dom, x, -1.0, opts).map_err(|e| fail(e, -1))?;
    let fwd = trace_half(cs, dom, x, 1.0, opts).map_err(|e| fail(e, 1))?;
    let mut samples = Vec::new();
    if opts.record_samples {
        samples.extend(back.samples.iter().rev().map(|&(s, p)| (-s, p)));
        samples.extend(fwd.samples.iter().skip(1).cloned());
    }
    Ok(IntegralCurve {
        seed: x,
        sigma_minus: -back.param,
        sigma_plus: fwd.param,
        exit_minus: back.exit,
        exit_plus: fwd.exit,
        arc_minus: back.arc,
        arc_plus: fwd.arc,
        samples,
        tangential: [back.tangential, fwd.tangential],
    })
}

/// Backward half of a trace only: `(sigma_minus, arc length, tangential)`.
pub(crate) fn trace_backward(
    cs: &CoefficientSet,
    dom: &ProblemDomain,
    x: Point,
    opts: &TraceOptions,
) -> Result<(f64, f64, bool), NotDissipative> {
    trace_half(cs, dom, x, -1.0, opts)
        .map(|h| (-h.param, h.arc, h.tangential))
        .map_err(|(kind, at)| NotDissipative {
            seed: x,
            node: None,
            kind,
            direction: -1,
            stopped_at: at,
        })
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipativityReport {
    pub dissipative: bool,
    pub witness: Option<NotDissipative>,
    pub nodes_traced: usize,
    /// Nodes whose curve leaves the domain nearly tangentially.
    pub tangential_nodes: Vec<usize>,
}

/// Traces from every active node; the field is reported dissipative iff all
/// traces exit. The witness is the lowest-index failing node.
pub fn check_dissipative(cs: &CoefficientSet, grid: &Grid, opts: &TraceOptions) -> DissipativityReport {
    let nodes: Vec<usize> = grid.active_nodes().collect();
    let dom = grid.domain();
    let mut tangential = Vec::new();
    let mut traced = 0;
    // Chunks keep the early exit cheap for non-dissipative fields.
    for chunk in nodes.chunks(256) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|&i| trace_curve(cs, dom, grid.coords(i), opts))
            .collect();
        for (&i, r) in chunk.iter().zip(results) {
            traced += 1;
            match r {
                Ok(c) => {
                    if c.tangential[0] || c.tangential[1] {
                        tangential.push(i);
                    }
                }
                Err(mut e) => {
                    e.node = Some(i);
                    return DissipativityReport {
                        dissipative: false,
                        witness: Some(e),
                        nodes_traced: traced,
                        tangential_nodes: tangential,
                    };
                }
            }
        }
    }
    DissipativityReport {
        dissipative: true,
        witness: None,
        nodes_traced: traced,
        tangential_nodes: tangential,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::VectorField;

    fn square() -> ProblemDomain {
        ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0)
    }

    #[test]
    fn straight_line_through_square() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let dom = square();
        let opts = TraceOptions::for_problem(&cs, &dom).with_samples();
        let c = trace_curve(&cs, &dom, [0.3, 0.5], &opts).unwrap();
        assert!((c.sigma_minus + 0.3).abs() < 1e-9);
        assert!((c.sigma_plus - 0.7).abs() < 1e-9);
        assert!((c.exit_minus[0]).abs() < 1e-9 && (c.exit_minus[1] - 0.5).abs() < 1e-12);
        assert!((c.exit_plus[0] - 1.0).abs() < 1e-9);
        assert!((c.arc_minus - 0.3).abs() < 1e-9);
        assert_eq!(c.samples.iter().find(|s| s.0 == 0.0).unwrap().1, [0.3, 0.5]);
        assert!(c.samples.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn both_exits_land_on_the_boundary() {
        let cs = CoefficientSet::transport(VectorField::half_disc_sink(), 1.0);
        let dom = ProblemDomain::half_disc(1.0, 1.0);
        let opts = TraceOptions::for_problem(&cs, &dom);
        for seed in [[0.1, 0.2], [-0.5, 0.5], [0.7, 0.1], [0.0, 0.9]] {
            let c = trace_curve(&cs, &dom, seed, &opts).unwrap();
            assert!(dom.level(c.exit_minus).abs() <= 1e-9, "{c:?}");
            assert!(dom.level(c.exit_plus).abs() <= 1e-9, "{c:?}");
            assert!(c.sigma_minus <= 0.0 && c.sigma_plus >= 0.0);
        }
    }

    #[test]
    fn rotation_on_annulus_never_exits() {
        let cs = CoefficientSet::transport(VectorField::rotation(), 0.5);
        let dom = ProblemDomain::annulus(1.0, 1.0);
        let opts = TraceOptions::for_problem(&cs, &dom);
        let e = trace_curve(&cs, &dom, [0.75, 0.0], &opts).unwrap_err();
        assert_eq!(e.kind, FailureKind::CapReached);
        let err: Error = e.into();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("(finiteness)"));
    }

    #[test]
    fn stagnation_point_is_reported() {
        let a = VectorField::affine([[1.0, 0.0], [0.0, 1.0]], [-0.5, -0.5], [0.0, 0.0]);
        let cs = CoefficientSet::transport(a, 0.1);
        let e = trace_curve(&cs, &square(), [0.5, 0.5], &TraceOptions::for_problem(&cs, &square()))
            .unwrap_err();
        assert_eq!(e.kind, FailureKind::Stagnation);
    }

    #[test]
    fn seed_on_inflow_boundary_has_zero_backward_parameter() {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let c = trace_curve(&cs, &square(), [0.0, 0.4], &TraceOptions::for_problem(&cs, &square()))
            .unwrap();
        assert!(c.sigma_minus.abs() < 1e-9);
        assert!(c.arc_minus.abs() < 1e-9);
    }

    #[test]
    fn interval_traces_in_one_dimension() {
        let cs = CoefficientSet::transport(VectorField::constant([2.0, 0.0]), 2.0);
        let dom = ProblemDomain::interval(0.0, 1.0, 1.0);
        let c = trace_curve(&cs, &dom, [0.25, 0.0], &TraceOptions::for_problem(&cs, &dom)).unwrap();
        assert!((c.sigma_minus + 0.125).abs() < 1e-9);
        assert!((c.arc_minus - 0.25).abs() < 1e-9);
        assert!((c.sigma_plus - 0.375).abs() < 1e-9);
    }
}
