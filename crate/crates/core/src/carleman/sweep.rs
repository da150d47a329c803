use rayon::prelude::*;
use serde::Serialize;

use crate::fields::{CoefficientSet, Grid, GridFunction};
use crate::flow::WeightData;
use crate::transport::partition_boundary;

use super::conjugate::phi_values;
use super::ops::apply_p_plus;

/// The five weighted terms of the estimate at one `s`, each with the powers
/// of `s` that multiply it, all scaled by `e^{-2 s max phi}`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub s: f64,
    /// `s^2 int_Q e^{2 s phi} u^2`
    pub lhs_interior: f64,
    /// `s int_Omega e^{2 s phi(., 0)} u(., 0)^2`
    pub lhs_initial: f64,
    /// `int_Q e^{2 s phi} |(P + p) u|^2`
    pub rhs_interior: f64,
    /// `s int_{Sigma+} e^{2 s phi} u^2 dS dt`
    pub rhs_outflow: f64,
    /// `s int_Omega e^{2 s phi(., T)} u(., T)^2`
    pub rhs_terminal: f64,
    /// `LHS / RHS`; infinite when only the right side vanishes, `None` when
    /// both do.
    pub c_required: Option<f64>,
}

impl SweepRow {
    pub fn lhs(&self) -> f64 {
        self.lhs_interior + self.lhs_initial
    }

    pub fn rhs(&self) -> f64 {
        self.rhs_interior + self.rhs_outflow + self.rhs_terminal
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlemanReport {
    pub rows: Vec<SweepRow>,
    /// Smallest swept `s` after which `C_required` never grows by more than
    /// 5% between consecutive sweep points; `None` when it still does so
    /// into the last point.
    pub s_star_observed: Option<f64>,
    /// `max C_required` over `s >= s_star_observed`.
    pub c_observed: Option<f64>,
    /// Some `s` has `RHS = 0 < LHS`.
    pub violation: bool,
    /// `u` vanishes identically.
    pub vacuous: bool,
}

/// Relative growth tolerated inside the tail.
pub const TAIL_SLACK: f64 = 0.05;

/// `count` logarithmically spaced values in `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k + 1 == count {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// 16 values in `[1, 100]`.
pub fn default_s_list() -> Vec<f64> {
    log_spaced(1.0, 100.0, 16)
}

/// Evaluates both sides of the weighted estimate for `u` at every `s`.
/// The weight is used as `e^{2 s (phi - max phi)}` on both sides, which
/// rescales the inequality without changing `C_required`.
pub fn sweep_carleman(
    cs: &CoefficientSet,
    grid: &Grid,
    wd: &WeightData,
    u: &GridFunction,
    s_list: &[f64],
) -> CarlemanReport {
    let m = grid.node_count();
    let nt = grid.nt();
    let (phi, _, phi_max) = phi_values(grid, wd);
    let lu = apply_p_plus(cs, grid, u);
    let part = partition_boundary(cs, grid);
    let bnd = grid.boundary();
    let wx = grid.weights();
    let wt = grid.time_weights();

    let u2: Vec<f64> = u.values().iter().map(|v| v * v).collect();
    let lu2: Vec<f64> = lu.values().iter().map(|v| v * v).collect();
    let outflow: Vec<(usize, f64)> = part
        .outflow_pairs()
        .map(|(n, e)| (n * m + bnd[e].node, bnd[e].ds * wt[n]))
        .collect();
    let shifted: Vec<f64> = phi.values().iter().map(|p| p - phi_max).collect();

    let rows: Vec<SweepRow> = s_list
        .par_iter()
        .map(|&s| {
            let w = |k: usize| (2.0 * s * shifted[k]).exp();
            let (mut iq, mut jq) = (0.0, 0.0);
            for n in 0..=nt {
                let (mut a, mut b) = (0.0, 0.0);
                for i in 0..m {
                    if wx[i] == 0.0 {
                        continue;
                    }
                    let k = n * m + i;
                    if u2[k] == 0.0 && lu2[k] == 0.0 {
                        continue;
                    }
                    let e = wx[i] * w(k);
                    a += e * u2[k];
                    b += e * lu2[k];
                }
                iq += wt[n] * a;
                jq += wt[n] * b;
            }
            let level = |n: usize| -> f64 {
                (0..m).map(|i| wx[i] * w(n * m + i) * u2[n * m + i]).sum()
            };
            let i0 = level(0);
            let it = level(nt);
            let bo: f64 = outflow.iter().map(|&(k, q)| q * w(k) * u2[k]).sum();
            let mut row = SweepRow {
                s,
                lhs_interior: s * s * iq,
                lhs_initial: s * i0,
                rhs_interior: jq,
                rhs_outflow: s * bo,
                rhs_terminal: s * it,
                c_required: None,
            };
            let (l, r) = (row.lhs(), row.rhs());
            row.c_required = if r > 0.0 {
                Some(l / r)
            } else if l > 0.0 {
                Some(f64::INFINITY)
            } else {
                None
            };
            row
        })
        .collect();

    let violation = rows.iter().any(|r| r.c_required == Some(f64::INFINITY));
    let vacuous = rows.iter().all(|r| r.c_required.is_none());
    let (s_star_observed, c_observed) = if violation || vacuous {
        (None, None)
    } else {
        tail(&rows)
    };
    CarlemanReport {
        rows,
        s_star_observed,
        c_observed,
        violation,
        vacuous,
    }
}

fn tail(rows: &[SweepRow]) -> (Option<f64>, Option<f64>) {
    let c: Vec<f64> = rows.iter().map(|r| r.c_required.unwrap_or(0.0)).collect();
    if c.is_empty() {
        return (None, None);
    }
    let mut start = c.len() - 1;
    while start > 0 && c[start] <= (1.0 + TAIL_SLACK) * c[start - 1] {
        start -= 1;
    }
    // A tail needs two sweep points; growth into the last one leaves none.
    if c.len() > 1 && start == c.len() - 1 {
        return (None, None);
    }
    let c_max = c[start..].iter().cloned().fold(0.0, f64::max);
    (Some(rows[start].s), Some(c_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: f64, c: f64) -> SweepRow {
        SweepRow {
            s,
            lhs_interior: c,
            lhs_initial: 0.0,
            rhs_interior: 1.0,
            rhs_outflow: 0.0,
            rhs_terminal: 0.0,
            c_required: Some(c),
        }
    }

    #[test]
    fn tail_starts_after_the_last_growth() {
        let rows: Vec<_> = [1.0, 3.0, 2.9, 2.95, 2.0]
            .iter()
            .enumerate()
            .map(|(k, &c)| row(k as f64 + 1.0, c))
            .collect();
        let (s, c) = tail(&rows);
        assert_eq!(s, Some(2.0));
        assert_eq!(c, Some(3.0));
    }

    #[test]
    fn growth_into_the_last_point_leaves_no_tail() {
        let rows: Vec<_> = [1.0, 1.01, 1.2].iter().enumerate().map(|(k, &c)| row(k as f64 + 1.0, c)).collect();
        assert_eq!(tail(&rows), (None, None));
        assert_eq!(tail(&rows[..1]), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn log_spacing_hits_both_ends() {
        let s = default_s_list();
        assert_eq!(s.len(), 16);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[15], 100.0);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }
}
