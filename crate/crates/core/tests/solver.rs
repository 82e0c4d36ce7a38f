use obstacle_lab::fields::{penalty, penalty_derivative, ProblemConfig, ScalarField};
use obstacle_lab::geometry::Grid;
use obstacle_lab::solver::{
    assemble, coordinate_descent, initial_field, minimize, solve, solve_linear_mixed, weak_residual, Initial,
    SolverOptions,
};
use obstacle_lab::expr::Expr;
use obstacle_lab::fields::CoefficientField;
use proptest::prelude::*;

fn uniqueness(m: usize) -> obstacle_lab::fields::ProblemSpec {
    let grid = Grid::new(2, m).unwrap();
    ProblemConfig::identity(2)
        .with_penalties("1", "2")
        .with_dirichlet("x1")
        .build(&grid)
        .unwrap()
}

#[test]
fn energy_examples() {
    let grid = Grid::new(2, 17).unwrap();
    let free = ProblemConfig::identity(2).with_penalties("0", "0").build(&grid).unwrap();
    let e = assemble(&free).unwrap();
    assert!(e.energy(&vec![3.0; grid.node_count()]).abs() < 1e-12);
    let x1 = ScalarField::from_fn(&grid, |x| x[0]);
    assert!((e.energy(x1.values()) - 1.0).abs() < 1e-12);
    let one_sided = ProblemConfig::identity(2).with_penalties("1", "0").build(&grid).unwrap();
    let e = assemble(&one_sided).unwrap();
    assert!(e.energy(&vec![-1.0; grid.node_count()]).abs() < 1e-12);
}

#[test]
fn linear_datum_is_one_step() {
    let grid = Grid::new(2, 33).unwrap();
    let spec = ProblemConfig::identity(2)
        .with_penalties("0", "0")
        .with_dirichlet("x1")
        .build(&grid)
        .unwrap();
    let r = solve(&spec, Initial::Zero, &SolverOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.iterations <= 1, "{}", r.iterations);
    let exact = ScalarField::from_fn(&grid, |x| x[0]);
    assert!(r.u.max_abs_diff(&exact) < 1e-12);
    assert!(weak_residual(&r.u, &spec) < 1e-12);
}

#[test]
fn energy_decreases_and_residual_detects_perturbation() {
    let spec = uniqueness(33);
    let r = solve(&spec, Initial::Random(11), &SolverOptions::default()).unwrap();
    assert!(r.converged);
    for w in r.energy_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{:?}", r.energy_history);
    }
    assert!(r.weak_residual <= 10.0 * 1e-10);
    let mut bumped = r.u.clone();
    let grid = spec.grid.clone();
    let node = grid.index(&[16, 8, 0]);
    bumped.values_mut()[node] += 1e-2;
    assert!(weak_residual(&bumped, &spec) >= 1e-4);
}

#[test]
fn linear_mixed_matches_gauss_seidel() {
    let grid = Grid::new(2, 17).unwrap();
    let a = CoefficientField::identity(2);
    let w = solve_linear_mixed(&Expr::Num(1.0), &Expr::Num(0.0), &a, &grid).unwrap();
    let spec = ProblemConfig::identity(2)
        .with_penalties("0", "0")
        .with_dirichlet("0")
        .build(&grid)
        .unwrap();
    let energy = assemble(&spec).unwrap();
    let k = energy.stiffness();
    // minimize 1/2 w'Kw + sum over the slab of weight * flux * w
    let mut load = vec![0.0; grid.node_count()];
    for (i, wt) in energy.slab() {
        load[i] = wt;
    }
    let mut v = vec![0.0; grid.node_count()];
    for _ in 0..20_000 {
        let mut moved = 0.0f64;
        for i in (0..v.len()).filter(|&i| energy.is_free(i)) {
            let (mut off, mut diag) = (0.0, 0.0);
            for (j, kij) in k.row(i) {
                if j == i {
                    diag = kij;
                } else {
                    off += kij * v[j];
                }
            }
            let next = -(load[i] + off) / diag;
            moved = moved.max((next - v[i]).abs());
            v[i] = next;
        }
        if moved < 1e-15 {
            break;
        }
    }
    let oracle = ScalarField::new(grid.clone(), v).unwrap();
    assert!(w.max_abs_diff(&oracle) < 1e-8, "{}", w.max_abs_diff(&oracle));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn minimizer_independent_of_start(seed in any::<u64>()) {
        let spec = uniqueness(17);
        let opts = SolverOptions::default();
        let a = solve(&spec, Initial::Zero, &opts).unwrap();
        let b = solve(&spec, Initial::Random(seed), &opts).unwrap();
        prop_assert!(a.converged && b.converged);
        prop_assert!(a.u.max_abs_diff(&b.u) < 1e-8);
    }

    #[test]
    fn newton_matches_coordinate_descent(kp in 0.0..3.0f64, km in 0.0..3.0f64) {
        let grid = Grid::new(2, 9).unwrap();
        let spec = ProblemConfig::identity(2)
            .with_penalties(&format!("{kp}"), &format!("{km}"))
            .with_dirichlet("x1 - 0.2")
            .build(&grid)
            .unwrap();
        let energy = assemble(&spec).unwrap();
        let start = initial_field(&energy, Initial::Zero).unwrap();
        let newton = minimize(&energy, &start, &SolverOptions::default()).unwrap();
        let (cd, _) = coordinate_descent(&energy, &start, 1e-14, 100_000).unwrap();
        prop_assert!(newton.u.max_abs_diff(&cd) < 1e-6);
    }

    #[test]
    fn penalty_is_convex(kp in 0.0..5.0f64, km in 0.0..5.0f64, p in 1.0..3.0f64, s in -2.0..2.0f64, t in -2.0..2.0f64) {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        prop_assert!(penalty_derivative(kp, km, p, lo) <= penalty_derivative(kp, km, p, hi) + 1e-12);
        prop_assert!(penalty(kp, km, p, s) >= 0.0);
        let mid = 0.5 * (s + t);
        prop_assert!(penalty(kp, km, p, mid) <= 0.5 * (penalty(kp, km, p, s) + penalty(kp, km, p, t)) + 1e-12);
    }
}
