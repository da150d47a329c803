//! Conjugate gradients for symmetric positive definite operators given as
//! closures.

use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct CgReport {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` of the returned iterate.
    pub rel_residual: f64,
    pub converged: bool,
    /// No progress over a window of iterations, or a non-positive curvature.
    pub stagnated: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Iterations without a new best residual before giving up.
    pub patience: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-8,
            max_iter: 500,
            patience: 100,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` from `x = 0`. Returns the iterate with the smallest
/// residual seen.
pub fn cg(mut apply: impl FnMut(&[f64], &mut [f64]), b: &[f64], opts: CgOptions) -> (Vec<f64>, CgReport) {
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return (
            x,
            CgReport {
                iterations: 0,
                rel_residual: 0.0,
                converged: true,
                stagnated: false,
            },
        );
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut best = (x.clone(), rr.sqrt() / bn);
    let mut since_best = 0;
    let mut stagnated = false;
    let mut it = 0;
    while it < opts.max_iter {
        if best.1 <= opts.rel_tol {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            stagnated = true;
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        it += 1;
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bn;
        if rel < best.1 {
            best = (x.clone(), rel);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                stagnated = true;
                break;
            }
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    let converged = best.1 <= opts.rel_tol;
    let report = CgReport {
        iterations: it,
        rel_residual: best.1,
        converged,
        stagnated: stagnated && !converged,
    };
    (best.0, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_spd_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let b = [1.0, 2.0, 3.0];
        let (x, rep) = cg(
            |v, out| {
                for i in 0..3 {
                    out[i] = (0..3).map(|j| a[i][j] * v[j]).sum();
                }
            },
            &b,
            CgOptions::default(),
        );
        assert!(rep.converged && rep.iterations <= 3);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn zero_right_hand_side_gives_zero() {
        let (x, rep) = cg(|v, out| out.copy_from_slice(v), &[0.0; 4], CgOptions::default());
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn indefinite_operator_is_flagged() {
        let (_, rep) = cg(|v, out| out.iter_mut().zip(v).for_each(|(o, x)| *o = -x), &[1.0, 1.0], CgOptions::default());
        assert!(rep.stagnated && !rep.converged);
    }
}
