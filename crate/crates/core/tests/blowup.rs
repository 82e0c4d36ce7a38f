use obstacle_lab::blowup::{estimate_frequency, fit_tangent, invariant_subspace};
use obstacle_lab::diagnostics::{profile, DiagnosticInput, ProfileOptions, RadiusLadder};
use obstacle_lab::fields::Matrix3;
use obstacle_lab::manufactured::{even_harmonic_poly, AnalyticField};
use obstacle_lab::poly::Polynomial;
use proptest::prelude::*;

const H: f64 = 2.0 / 128.0;
const I3: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[test]
fn frequency_of_exemplars() {
    for (nu, dim) in [(1, 2), (2, 2), (3, 2), (2, 3)] {
        let v = AnalyticField::from_polynomial(even_harmonic_poly(dim, nu), "exemplar");
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.9, inp.floor(), Some(8)).unwrap();
        let opts = ProfileOptions { identity_budget: false, volume: false, ..Default::default() };
        let e = estimate_frequency(&profile(&inp, &ladder, &opts).unwrap()).unwrap();
        assert_eq!(e.nu_int, nu);
        assert!((e.nu_hat - nu as f64).abs() < 0.02, "{e:?}");
        assert!(e.confidence >= 0.95 && !e.truncation_limited, "{e:?}");
    }
}

#[test]
fn truncation_limited_estimate() {
    let mut p = Polynomial::zero(2, 4);
    p.set(&[2, 2, 0], 1.0);
    p.set(&[4, 0, 0], -1.0 / 6.0);
    p.set(&[0, 4, 0], -1.0 / 6.0);
    let v = AnalyticField::from_polynomial(p.scale(1e-3), "quartic");
    let inp = DiagnosticInput::model(&v, H, 2);
    let ladder = RadiusLadder::geometric(0.9, inp.floor(), Some(8)).unwrap();
    let opts = ProfileOptions { identity_budget: false, volume: false, ..Default::default() };
    let prof = profile(&inp, &ladder, &opts).unwrap();
    assert!(prof.truncated.iter().all(|&t| t));
    assert!(estimate_frequency(&prof).unwrap().truncation_limited);
}

#[test]
fn perturbed_fit_recovers_leading_term() {
    let mut p = even_harmonic_poly(2, 2).with_order(3);
    p = p.add(&even_harmonic_poly(2, 3).scale(1e-3));
    let v = AnalyticField::from_polynomial(p, "perturbed");
    let inp = DiagnosticInput::model(&v, H, 3);
    let ladder = RadiusLadder::geometric(0.2, inp.floor(), Some(6)).unwrap();
    let t = fit_tangent(&inp, &I3, 2, &ladder).unwrap();
    assert!((t.coefficients.coeff(&[2, 0, 0]) - 1.0).abs() < 1e-3);
    assert!(t.coefficients.coeff(&[1, 1, 0]).abs() < 1e-3);
    assert!((t.coefficients.coeff(&[0, 2, 0]) + 1.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Rotating `x1^2 - x3^2` about the `x3` axis rotates its invariant direction.
    #[test]
    fn invariant_direction_follows_rotation(theta in 0.0..std::f64::consts::PI) {
        let (c, s) = (theta.cos(), theta.sin());
        let mut p = Polynomial::zero(3, 2);
        p.set(&[2, 0, 0], c * c);
        p.set(&[1, 1, 0], 2.0 * c * s);
        p.set(&[0, 2, 0], s * s);
        p.set(&[0, 0, 2], -1.0);
        let v = AnalyticField::from_polynomial(p, "rotated");
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.9, 4.0 * H, Some(6)).unwrap();
        let t = fit_tangent(&inp, &I3, 2, &ladder).unwrap();
        let (d, basis) = invariant_subspace(&t).unwrap();
        prop_assert_eq!(d, 1);
        let e = &basis[0];
        let along = (-s * e[0] + c * e[1]).abs();
        prop_assert!((along - 1.0).abs() < 1e-6, "{:?}", e);
        prop_assert!(e[2].abs() < 1e-12);
    }

    /// Translating an exemplar along its invariant direction leaves the tangent unchanged.
    #[test]
    fn tangent_invariant_under_translation(shift in -0.3..0.3f64) {
        let base = even_harmonic_poly(3, 2);
        let b = base.clone();
        let v = AnalyticField::new(
            3,
            move |x| b.eval(&[x[0], x[1] + shift, x[2]]),
            move |x| base.gradient(&[x[0], x[1] + shift, x[2]]),
            "translated",
            "analytic",
        );
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.6, 4.0 * H, Some(6)).unwrap();
        let t = fit_tangent(&inp, &I3, 2, &ladder).unwrap();
        prop_assert!(t.coefficients.max_abs_diff(&even_harmonic_poly(3, 2)) < 1e-8);
        prop_assert_eq!(t.invariant_dim, 1);
    }
}
