//! Closed-form solutions used as references. Nothing here calls into the
//! solvers it is compared against.

use std::f64::consts::PI;

/// `u = min(x, t)` solves `u_t + u_x = 1` on `(0, 1)` with zero inflow at
/// `x = 0` and zero initial data.
pub fn min_x_t(x: f64, t: f64) -> f64 {
    x.min(t)
}

/// `u = sin(pi (x - t))` solves `u_t + u_x = 0`.
pub fn traveling_wave(x: f64, t: f64) -> f64 {
    (PI * (x - t)).sin()
}

/// `E(t) = int_0^1 (|d_t min(x,t)|^2 + min(x,t)^2) dx = 1 - t + t^2 - 2t^3/3`
/// for `0 <= t <= 1`.
pub fn energy_min_x_t(t: f64) -> f64 {
    assert!((0.0..=1.0).contains(&t));
    1.0 - t + t * t - 2.0 * t * t * t / 3.0
}

/// Curve of `X = (-x, -1)` through `(x0, y0)`: `(x0 e^{-s}, y0 - s)`.
pub fn half_disc_curve(x0: f64, y0: f64, s: f64) -> [f64; 2] {
    [x0 * (-s).exp(), y0 - s]
}

/// Exit parameters `(sigma_minus, sigma_plus)` of the curve of `(-x, -1)`
/// through `(x0, y0)` in the half disc `{x^2 + y^2 < r^2, y > 0}`.
///
/// Forward the curve reaches `y = 0` at `s = y0`; backward it meets the arc
/// where `x0^2 e^{-2s} + (y0 - s)^2 = r^2`, found by bisection.
pub fn half_disc_exits(x0: f64, y0: f64, r: f64) -> (f64, f64) {
    let g = |s: f64| x0 * x0 * (-2.0 * s).exp() + (y0 - s) * (y0 - s) - r * r;
    let mut lo = -1.0;
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), y0)
}

/// Arc length of the backward segment, `int_{s-}^0 sqrt(x0^2 e^{-2s} + 1) ds`,
/// by composite Simpson with `2n` panels.
pub fn half_disc_arc_length(x0: f64, y0: f64, r: f64, n: usize) -> f64 {
    let (sm, _) = half_disc_exits(x0, y0, r);
    let speed = |s: f64| (x0 * x0 * (-2.0 * s).exp() + 1.0).sqrt();
    simpson(speed, sm, 0.0, n)
}

/// Composite Simpson rule on `[a, b]` with `2n` subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let m = 2 * n.max(1);
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_matches_fine_quadrature() {
        for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
            // piecewise smooth integrand: split at the kink x = t
            let q = simpson(|x| x * x, 0.0, t, 50) + simpson(|_| 1.0 + t * t, t, 1.0, 50);
            assert!((q - energy_min_x_t(t)).abs() < 1e-12, "{t}");
        }
        assert_eq!(energy_min_x_t(0.0), 1.0);
    }

    #[test]
    fn half_disc_exit_lies_on_the_arc() {
        let (sm, sp) = half_disc_exits(0.3, 0.4, 1.0);
        let c = half_disc_curve(0.3, 0.4, sm);
        assert!((c[0].hypot(c[1]) - 1.0).abs() < 1e-12);
        assert_eq!(sp, 0.4);
        assert!(sm < 0.0);
    }

    #[test]
    fn arc_length_on_the_axis_is_the_height_gap() {
        // x0 = 0: vertical segment from (0, y0) up to (0, r)
        assert!((half_disc_arc_length(0.0, 0.25, 1.0, 10) - 0.75).abs() < 1e-12);
    }
}
