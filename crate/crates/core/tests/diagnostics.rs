use std::f64::consts::PI;

use obstacle_lab::diagnostics::{
    check_almost_monotone, compute_h, compute_i, compute_monneau, compute_weiss, growth_rate_check, profile,
    DiagnosticInput, ProfileOptions, RadiusLadder,
};
use obstacle_lab::fields::ProblemConfig;
use obstacle_lab::geometry::Grid;
use obstacle_lab::manufactured::{even_harmonic_poly, AnalyticField};
use obstacle_lab::pipeline::{diagnose, nearest_free_boundary_point};
use obstacle_lab::poly::Polynomial;
use obstacle_lab::solver::{solve, Initial, SolverOptions};
use proptest::prelude::*;

const H: f64 = 2.0 / 128.0;

fn field(p: Polynomial) -> AnalyticField {
    AnalyticField::from_polynomial(p, "test polynomial")
}

#[test]
fn closed_form_h_and_i() {
    let x1 = field(even_harmonic_poly(2, 1));
    let inp = DiagnosticInput::model(&x1, H, 2);
    for rho in [0.2, 0.5, 0.9] {
        let h = compute_h(&inp, rho).unwrap();
        assert!((h - PI * rho * rho / 2.0).abs() < 1e-10, "{rho}: {h}");
        let i = compute_i(&inp, rho).unwrap();
        assert!((i / h - 1.0).abs() < 1e-10);
        let w2 = compute_weiss(&inp, rho, 2.0).unwrap();
        assert!((w2 + PI / (2.0 * rho * rho)).abs() < 1e-8, "{rho}: {w2}");
    }
    let p2 = field(even_harmonic_poly(2, 2));
    let inp = DiagnosticInput::model(&p2, H, 2);
    let h = compute_h(&inp, 0.5).unwrap();
    assert!((h - 0.5f64.powi(4) * PI / 2.0).abs() < 1e-10);
    assert!((compute_i(&inp, 0.5).unwrap() / h - 2.0).abs() < 1e-3);
}

#[test]
fn monneau_cross_terms_vanish() {
    let eps = 0.01;
    let p2 = even_harmonic_poly(2, 2);
    let v = field(p2.add(&even_harmonic_poly(2, 1).with_order(2).scale(eps)));
    let inp = DiagnosticInput::model(&v, H, 2);
    for rho in [0.3, 0.6] {
        let m = compute_monneau(&inp, rho, &p2, 2.0).unwrap();
        let expect = eps * eps * PI / 2.0 / (rho * rho);
        assert!((m - expect).abs() < 1e-8 * expect.max(1.0), "{m} vs {expect}");
    }
}

#[test]
fn monotone_check_reports_worst_pair() {
    let rho = [0.1, 0.2, 0.4, 0.8];
    assert!(check_almost_monotone(&[1.0; 4], &rho, 0.0, 0.0).pass);
    assert!(check_almost_monotone(&[0.1, 0.2, 0.3, 0.4], &rho, 0.0, 0.0).pass);
    let r = check_almost_monotone(&[0.1, 0.2, 0.19, 0.4], &rho, 1e-3, 0.0);
    assert!(!r.pass);
    assert_eq!(r.worst_pair, Some((0.2, 0.4)));
}

#[test]
fn truncation_on_fast_decay() {
    // x1^2 x2^2 - (x1^4 + x2^4)/6 is harmonic and vanishes to order 4 > κ = 2
    let mut p = Polynomial::zero(2, 4);
    p.set(&[2, 2, 0], 1.0);
    p.set(&[4, 0, 0], -1.0 / 6.0);
    p.set(&[0, 4, 0], -1.0 / 6.0);
    let v = field(p);
    let inp = DiagnosticInput::model(&v, H, 2);
    let ladder = RadiusLadder::geometric(0.9, inp.floor(), Some(8)).unwrap();
    let prof = profile(&inp, &ladder, &ProfileOptions::default()).unwrap();
    let last = prof.phi.len() - 1;
    assert!(prof.truncated[last]);
    assert_eq!(prof.phi[last], 2.0);
}

#[test]
fn growth_slopes() {
    let cases = [
        (even_harmonic_poly(2, 1), 1.0, 0.05),
        (even_harmonic_poly(2, 2), 2.0, 0.1),
        (Polynomial::constant(2, 0, 1.0), 0.0, 0.02),
    ];
    for (p, nu, band) in cases {
        let v = field(p);
        let inp = DiagnosticInput::model(&v, H, 2);
        let ladder = RadiusLadder::geometric(0.9, inp.floor(), Some(8)).unwrap();
        let opts = ProfileOptions { identity_budget: false, ..Default::default() };
        let g = growth_rate_check(&profile(&inp, &ladder, &opts).unwrap(), nu, band);
        assert!(g.pass && (g.slope - 2.0 * nu).abs() <= band, "{g:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frequency_is_scale_invariant(c in prop_oneof![-50.0..-1.0f64, 1.0..50.0f64], nu in 1usize..=3, dim in 2usize..=3) {
        // the truncation floor is absolute, so invariance holds off the truncated rungs
        // and enlarging the field can only lift rungs out of truncation
        let base = even_harmonic_poly(dim, nu);
        let v = field(base.clone());
        let cv = field(base.scale(c));
        let opts = ProfileOptions { identity_budget: false, volume: false, ..Default::default() };
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.9, inp.floor(), Some(6)).unwrap();
        let a = profile(&inp, &ladder, &opts).unwrap();
        let b = profile(&DiagnosticInput::model(&cv, H, 3), &ladder, &opts).unwrap();
        for k in 0..a.phi.len() {
            prop_assert!(!b.truncated[k] || a.truncated[k]);
            if !a.truncated[k] {
                prop_assert!((a.phi[k] - b.phi[k]).abs() < 1e-10);
                prop_assert!((a.phi[k] - nu as f64).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn weiss_vanishes_on_homogeneous(nu in 1usize..=3, rho in 0.1..0.9f64, theta in 0.0..std::f64::consts::TAU) {
        // rotate a 3D exemplar about the x_n axis
        let (c, s) = (theta.cos(), theta.sin());
        let base = even_harmonic_poly(3, nu);
        let grad_base = base.clone();
        let rot = move |x: &[f64; 3]| [c * x[0] + s * x[1], -s * x[0] + c * x[1], x[2]];
        let v = AnalyticField::new(
            3,
            move |x| base.eval(&rot(x)),
            move |x| {
                let g = grad_base.gradient(&rot(x));
                [c * g[0] - s * g[1], s * g[0] + c * g[1], g[2]]
            },
            "rotated",
            "analytic",
        );
        let inp = DiagnosticInput::model(&v, H, 3);
        prop_assert!(compute_weiss(&inp, rho, nu as f64).unwrap().abs() < 1e-6);
    }
}

#[test]
fn solved_variable_coefficient_instance_is_almost_monotone() {
    let grid = Grid::new(2, 65).unwrap();
    let spec = ProblemConfig::identity(2)
        .with_coefficients(&[&["1 + x1^2/4", "0"], &["0", "1"]], 0.5)
        .with_penalties("1", "2")
        .with_dirichlet("x1")
        .build(&grid)
        .unwrap();
    let r = solve(&spec, Initial::Zero, &SolverOptions::default()).unwrap();
    assert!(r.converged);
    let x0 = nearest_free_boundary_point(&spec, &r.u).expect("free boundary point");
    let d = diagnose(&spec, &r.u, &x0, 0.9, None).unwrap();
    assert!(d.monotone_pass(), "{:?} {:?} {:?}", d.almgren, d.weiss, d.monneau);
    assert!(d.identity_failures.is_empty(), "{:?}", d.identity_failures);
    // K stays within the e^{±C ρ} sandwich of H
    let c = d.profile.slack_constant;
    for (k, (h, rho)) in d.profile.k.iter().zip(d.profile.h.iter().zip(&d.profile.ladder.rho)) {
        let ratio = k / h;
        assert!(ratio >= (-c * rho).exp() - 1e-12 && ratio <= (c * rho).exp() + 1e-12, "{ratio}");
    }
}
