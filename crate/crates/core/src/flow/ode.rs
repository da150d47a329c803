//! Embedded Dormand-Prince 5(4) step for small autonomous systems.

pub(crate) const DIM: usize = 3;
pub(crate) type State = [f64; DIM];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) struct Step {
    pub y: State,
    /// Error estimate scaled by the tolerance; the step is acceptable if <= 1.
    pub err: f64,
    /// Derivative at the new point (first stage of the next step).
    pub k_last: State,
}

/// One step of size `h` from `y` with first stage `k1 = f(y)`.
pub(crate) fn dp_step(f: &impl Fn(&State) -> State, y: &State, k1: &State, h: f64, tol: f64) -> Step {
    let mut k = [[0.0; DIM]; 7];
    k[0] = *k1;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for d in 0..DIM {
                    ys[d] += h * a * kj[d];
                }
            }
        }
        k[s] = f(&ys);
    }
    // Row 6 of A holds the fifth-order weights, so stage 7 was evaluated at y_new.
    let mut y_new = *y;
    for (j, w) in A[6].iter().enumerate() {
        for d in 0..DIM {
            y_new[d] += h * w * k[j][d];
        }
    }
    let mut err: f64 = 0.0;
    for d in 0..DIM {
        let mut e = 0.0;
        for (j, w) in E.iter().enumerate() {
            e += w * k[j][d];
        }
        let scale = tol * (1.0 + y[d].abs().max(y_new[d].abs()));
        err = err.max((h * e).abs() / scale);
    }
    Step {
        y: y_new,
        err,
        k_last: k[6],
    }
}

/// Step-size update factor for an error ratio `err`.
pub(crate) fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fifth_order_accurate() {
        let f = |y: &State| [-y[0], 0.0, 0.0];
        let mut y = [1.0, 0.0, 0.0];
        let h = 0.1;
        for _ in 0..10 {
            let k1 = f(&y);
            y = dp_step(&f, &y, &k1, h, 1e-9).y;
        }
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn error_estimate_vanishes_on_polynomials() {
        let f = |_: &State| [1.0, 2.0, 0.5];
        let y = [0.0; 3];
        let s = dp_step(&f, &y, &f(&y), 0.7, 1e-9);
        assert!((s.y[0] - 0.7).abs() < 1e-15);
        assert!((s.y[1] - 1.4).abs() < 1e-15);
        assert!(s.err < 1e-3);
    }
}
