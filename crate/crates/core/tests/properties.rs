use approx::assert_relative_eq;
use proptest::prelude::*;

use carleman_core::acceptance::loglog_slope;
use carleman_core::fields::ScalarKind;
use carleman_core::flow::{build_weight, compute_phi0, TraceOptions};
use carleman_core::inverse::{ObservationSet, SourceMap};
use carleman_core::transport::{solve_forward, stable_nt, ForwardProblem, Source};
use carleman_core::{CoefficientSet, Grid, GridFunction, ProblemDomain, ScalarField, VectorField};

fn line(n: usize, horizon: f64, cs: &CoefficientSet) -> Grid {
    let g = Grid::new(&ProblemDomain::interval(0.0, 1.0, horizon), [n, 0], 2).unwrap();
    g.with_nt(stable_nt(cs, &g).unwrap()).unwrap()
}

fn half_disc(cs: &CoefficientSet) -> Grid {
    let g = Grid::new(&ProblemDomain::half_disc(1.0, 1.5), [13, 13], 2).unwrap();
    g.with_nt(stable_nt(cs, &g).unwrap()).unwrap()
}

fn sink() -> CoefficientSet {
    CoefficientSet::transport(VectorField::half_disc_sink(), 1.0).with_p(ScalarField::constant(0.5))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn wave(amp: f64, k: [f64; 2], omega: f64, phase: f64) -> ScalarField {
    ScalarField::new(ScalarKind::Wave { amp, k, omega, phase })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn source_map_adjoint_is_exact(seed in any::<u64>(), speed in 0.5f64..2.0, two_d in any::<bool>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cs = if two_d { sink() } else { CoefficientSet::transport(VectorField::constant([speed, 0.0]), 1.0) };
        let g = if two_d { half_disc(&cs) } else { line(21, 1.5, &cs) };
        let r = GridFunction::spacetime(&g, |x, t| 1.0 + 0.3 * (x[0] - t).cos());
        let map = SourceMap::new(&cs, &g, r, &ObservationSet::outflow(&cs, &g), 2).unwrap();
        let c: Vec<f64> = (0..map.param_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..map.obs_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&map.apply(&c), &y);
        let rhs = dot(&c, &map.adjoint(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn forward_solve_is_linear_in_the_source(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.5f64..4.0) {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0)
            .with_p(ScalarField::constant(0.3));
        let g = line(41, 1.0, &cs);
        let s1 = GridFunction::spacetime(&g, |x, t| (k * x[0] + t).sin());
        let s2 = GridFunction::spacetime(&g, |x, _| x[0] * x[0]);
        let mut mix = s1.clone();
        for (m, (p, q)) in mix.values_mut().iter_mut().zip(s1.values().iter().zip(s2.values())) {
            *m = a * p + b * q;
        }
        let solve = |s: GridFunction| solve_forward(&cs, &g, &ForwardProblem::homogeneous(Source::Gridded(s))).unwrap().u;
        let (u1, u2, um) = (solve(s1), solve(s2), solve(mix));
        for ((p, q), m) in u1.values().iter().zip(u2.values()).zip(um.values()) {
            prop_assert!((a * p + b * q - m).abs() <= 1e-12 * (1.0 + m.abs()));
        }
    }

    #[test]
    fn maximum_principle_on_the_half_disc(amp in 0.1f64..2.0, kx in -2.0f64..2.0, ky in -2.0f64..2.0, omega in -2.0f64..2.0) {
        let cs = CoefficientSet::transport(VectorField::half_disc_sink(), 1.0);
        let g = half_disc(&cs);
        let data = wave(amp, [kx, ky], omega, 0.2);
        let sol = solve_forward(&cs, &g, &ForwardProblem::free(data.clone(), data)).unwrap();
        // The data are bounded by `amp` everywhere.
        prop_assert!(sol.u.max_abs() <= amp + 1e-12);
    }

    #[test]
    fn constants_are_preserved(c in -5.0f64..5.0, speed in 0.3f64..3.0) {
        let cs = CoefficientSet::transport(VectorField::constant([speed, 0.0]), 1.0);
        let g = line(31, 1.0, &cs);
        let k = ScalarField::constant(c);
        let sol = solve_forward(&cs, &g, &ForwardProblem::free(k.clone(), k)).unwrap();
        for v in sol.u.values() {
            prop_assert!((v - c).abs() <= 1e-13 * (1.0 + c.abs()));
        }
        for v in sol.dtu.values() {
            prop_assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn weight_is_affine_in_time(beta_frac in 0.05f64..0.95) {
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let g = line(41, 1.0, &cs);
        let phi0 = compute_phi0(&cs, &g, &TraceOptions::for_problem(&cs, g.domain())).unwrap();
        let beta = beta_frac * cs.rho / cs.sup_a0(&g);
        let wd = build_weight(&cs, &g, phi0, Some(beta)).unwrap();
        for i in g.active_nodes() {
            let p0 = wd.phi(i, 0.0);
            for t in [0.25, 0.5, 1.0] {
                prop_assert!((wd.phi(i, t) - (p0 - beta * t)).abs() <= 1e-14 * (1.0 + p0.abs()));
            }
        }
    }

    #[test]
    fn loglog_slope_recovers_power_laws(p in -3.0f64..3.0, c in 0.01f64..100.0) {
        let h = [0.1f64, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|v| c * v.powf(p)).collect();
        prop_assert!((loglog_slope(&h, &e) - p).abs() < 1e-10);
    }
}

#[test]
fn unit_speed_arc_length_weight_on_the_interval() {
    // Curves of A = (1,0) leave [0,1] through x = 1, so phi0 is the distance
    // to that end plus the normalisation the weight applies.
    let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
    let g = line(51, 1.0, &cs);
    let phi0 = compute_phi0(&cs, &g, &TraceOptions::for_problem(&cs, g.domain())).unwrap();
    let wd = build_weight(&cs, &g, phi0, None).unwrap();
    let nodes: Vec<usize> = g.active_nodes().collect();
    for w in nodes.windows(2) {
        let d = wd.phi(w[1], 0.0) - wd.phi(w[0], 0.0);
        assert_relative_eq!(d.abs(), g.spacing()[0], max_relative = 1e-6);
    }
}
