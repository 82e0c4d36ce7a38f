use obstacle_lab::fields::{ProblemConfig, ScalarField};
use obstacle_lab::geometry::Grid;
use obstacle_lab::manufactured::{even_harmonic_polynomial, log_solution_w, penalization_family, w_regularity_ratio};
use obstacle_lab::solver::{solve, Initial, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn log_solution_is_harmonic() {
    for p in [2, 3] {
        let w = log_solution_w(2, p, 1.0).unwrap();
        let mut worst = [0.0f64; 2];
        for (k, h) in [1e-2, 5e-3].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..100 {
                let x = [rng.gen_range(-0.8..0.8), rng.gen_range(0.1..0.8), 0.0];
                let lap = (w.eval(&[x[0] + h, x[1], 0.0])
                    + w.eval(&[x[0] - h, x[1], 0.0])
                    + w.eval(&[x[0], x[1] + h, 0.0])
                    + w.eval(&[x[0], x[1] - h, 0.0])
                    - 4.0 * w.eval(&x))
                    / (h * h);
                worst[k] = worst[k].max(lap.abs());
            }
        }
        // O(h²): halving h cuts the residual by about four
        assert!(worst[1] < 0.35 * worst[0] + 1e-9, "p={p}: {worst:?}");
    }
}

fn w_oracle(x1: f64, xn: f64, p: i32, kappa: f64) -> f64 {
    use num_complex::Complex64;
    let pf = p as f64;
    let pi = std::f64::consts::PI;
    let z = Complex64::new(xn, x1);
    let bracket = z.ln() / (pi * pf) - 1.0 / (pi * pf * pf) + Complex64::new(0.0, 1.0 / (2.0 * pf));
    (Complex64::new(0.0, -1.0).powi(p) * kappa * z.powi(p) * bracket).re
}

#[test]
fn log_solution_matches_complex_oracle() {
    let w2 = log_solution_w(2, 2, 1.0).unwrap();
    assert!((w_oracle(0.0, 1.0, 2, 1.0) - 0.079_577_471_545_947_67).abs() < 1e-15);
    assert!((w2.eval(&[0.0, 1.0, 0.0]) - 0.079_577_471_545_947_67).abs() < 1e-15);
    let w3 = log_solution_w(2, 3, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (x1, xn) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
        assert!((w2.eval(&[x1, xn, 0.0]) - w_oracle(x1, xn, 2, 1.0)).abs() < 1e-13);
        assert!((w3.eval(&[x1, xn, 0.0]) - w_oracle(x1, xn, 3, 0.5)).abs() < 1e-13);
    }
}

#[test]
fn regularity_ratio_grows() {
    let w = log_solution_w(2, 2, 1.0).unwrap();
    let big = w_regularity_ratio(&w, 2, 0.2, 64);
    let small = w_regularity_ratio(&w, 2, 0.01, 64);
    assert!(small > 1.5 * big, "{big} {small}");
}

#[test]
fn harmonic_exemplar_slab_flux() {
    let p3 = even_harmonic_polynomial(2, 3).unwrap();
    assert_eq!(p3.grad(&[0.3, 0.0, 0.0])[1], 0.0);
    assert_eq!(even_harmonic_polynomial(2, 1).unwrap().eval(&[0.4, 0.7, 0.0]), 0.4);
}

#[test]
fn penalization_drives_violation_down() {
    let grid = Grid::new(2, 33).unwrap();
    let base = ProblemConfig::identity(2).with_penalties("1", "1").with_dirichlet("x1").build(&grid).unwrap();
    let family = penalization_family(&base, 3);
    assert_eq!(family[0].k_plus, base.k_plus);
    let mut last = f64::INFINITY;
    for spec in &family {
        let r = solve(spec, Initial::Zero, &SolverOptions::default()).unwrap();
        let gap = ScalarField::from_fn(&grid, |x| spec.obstacle_at(x));
        let violation = (0..grid.node_count())
            .filter(|&i| {
                let mi = grid.multi_index(i);
                grid.is_slab(&mi) && !grid.is_outer(&mi)
            })
            .map(|i| (gap.values()[i] - r.u.values()[i]).max(0.0))
            .fold(0.0, f64::max);
        assert!(violation <= last + 1e-12, "{violation} after {last}");
        last = violation;
    }
}

#[test]
fn zero_penalty_member_is_neumann() {
    let grid = Grid::new(2, 33).unwrap();
    let spec = ProblemConfig::identity(2).with_penalties("0", "0").with_dirichlet("x1^2 - x2^2").build(&grid).unwrap();
    let r = solve(&spec, Initial::Zero, &SolverOptions::default()).unwrap();
    assert!(r.weak_residual <= 1e-9, "{}", r.weak_residual);
}
