use obstacle_lab::fields::{ProblemConfig, ProblemSpec, ScalarField};
use obstacle_lab::freeboundary::{
    classify_all, extract_contact_set, extract_free_boundary, stratify, ClassifyOptions, PointKind,
};
use obstacle_lab::geometry::Grid;
use obstacle_lab::solver::{solve, Initial, SolverOptions};

fn solved(dim: usize, m: usize, cfg: ProblemConfig) -> (ProblemSpec, ScalarField) {
    let grid = Grid::new(dim, m).unwrap();
    let spec = cfg.build(&grid).unwrap();
    let r = solve(&spec, Initial::Zero, &SolverOptions::default()).unwrap();
    assert!(r.converged);
    (spec, r.u)
}

#[test]
fn seeded_singular_point_in_the_plane() {
    let (spec, u) = solved(2, 65, ProblemConfig::identity(2).with_penalties("0", "1").with_dirichlet("x1^2 - x2^2"));
    let fb = extract_free_boundary(&extract_contact_set(&u, &spec.obstacle, None));
    let (points, excluded) = classify_all(&fb, &u, &spec, &ClassifyOptions::default()).unwrap();
    assert!(excluded.is_empty());
    assert!(!points.is_empty());
    for p in &points {
        assert_eq!(p.kind, PointKind::Singular);
        assert_eq!((p.nu, p.stratum_dim), (Some(2), Some(0)));
    }
    let strata = stratify(&points);
    assert_eq!(strata.len(), 1);
    assert_eq!((strata[0].nu, strata[0].d), (2, 0));
}

#[test]
fn singular_line_in_space() {
    let (spec, u) = solved(3, 33, ProblemConfig::identity(3).with_penalties("0", "1").with_dirichlet("x1^2 - x3^2"));
    let h = spec.grid.spacing();
    let fb = extract_free_boundary(&extract_contact_set(&u, &spec.obstacle, None));
    let (points, _) = classify_all(&fb, &u, &spec, &ClassifyOptions::default()).unwrap();
    let strata = stratify(&points);
    assert_eq!(strata.len(), 1, "{strata:?}");
    let s = &strata[0];
    assert_eq!((s.nu, s.d), (2, 1));
    assert!(s.count >= 3);
    assert!(s.line_fit_residual.unwrap() <= 2.0 * h);
}

#[test]
fn transversal_crossing_is_regular() {
    let (spec, u) = solved(2, 65, ProblemConfig::identity(2).with_penalties("1", "2").with_dirichlet("x1"));
    let fb = extract_free_boundary(&extract_contact_set(&u, &spec.obstacle, None));
    let (points, _) = classify_all(&fb, &u, &spec, &ClassifyOptions::default()).unwrap();
    assert!(!points.is_empty());
    assert!(points.iter().all(|p| p.kind == PointKind::Regular), "{points:?}");
    assert!(stratify(&points).is_empty());
}
