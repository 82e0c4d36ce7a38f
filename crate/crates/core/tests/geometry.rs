use std::f64::consts::PI;

use obstacle_lab::fields::ScalarField;
use obstacle_lab::geometry::{disk_quadrature, halfball_quadrature, hemisphere_quadrature, Grid};
use proptest::prelude::*;

#[test]
fn grid_shapes() {
    let g = Grid::new(2, 129).unwrap();
    assert_eq!(g.spacing(), 2.0 / 128.0);
    let g3 = Grid::new(3, 65).unwrap();
    assert_eq!(g3.node_count(), 65 * 65 * 33);
    let err = Grid::new(2, 8).unwrap_err().to_string();
    assert!(err.contains("cells_per_axis must be odd"), "{err}");
}

#[test]
fn interpolation_at_nodes_and_edges() {
    let g = Grid::new(2, 33).unwrap();
    let h = g.spacing();
    let sq = ScalarField::from_fn(&g, |x| x[0] * x[0]);
    for i in 0..16 {
        let x1 = -1.0 + h * (i as f64 + 0.5);
        let err = (sq.interpolate(&[x1, 0.25, 0.0]).unwrap() - x1 * x1).abs();
        assert!(err <= h * h / 4.0 + 1e-15, "x1={x1}: {err}");
    }
    let bump = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() + x[1]);
    assert_eq!(bump.interpolate(&[0.0; 3]).unwrap(), bump.values()[g.origin_index()]);
}

#[test]
fn quadrature_closed_forms() {
    let h = 2.0 / 128.0;
    let hemi = hemisphere_quadrature(2, 1.0, 64).unwrap();
    assert!((hemi.integrate(|x| x[0] * x[0]) - PI / 2.0).abs() < 1e-10);
    let hemi3 = hemisphere_quadrature(3, 1.0, 32).unwrap();
    assert!((hemi3.total_weight() - 2.0 * PI).abs() < 1e-10);
    let half = halfball_quadrature(2, 1.0, h).unwrap();
    assert!((half.total_weight() - PI / 2.0).abs() < 1e-6);
    assert!((half.integrate(|x| x[0] * x[0]) - PI / 8.0).abs() < 1e-5);
    let half3 = halfball_quadrature(3, 0.5, h).unwrap();
    assert!((half3.total_weight() - PI / 12.0).abs() < 1e-6);
    let seg = disk_quadrature(2, 0.3, h).unwrap();
    assert!((seg.total_weight() - 0.6).abs() < 1e-12);
    assert!((seg.integrate(|x| x[0].max(0.0)) - 0.045).abs() < 1e-10);
    let disk = disk_quadrature(3, 1.0, h).unwrap();
    assert!((disk.total_weight() - PI).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bilinear_reproduced(
        c in prop::array::uniform4(-3.0..3.0f64),
        x1 in -1.0..1.0f64,
        x2 in 0.0..1.0f64,
    ) {
        let g = Grid::new(2, 17).unwrap();
        let f = |x: &[f64; 3]| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[1];
        let u = ScalarField::from_fn(&g, f);
        let x = [x1, x2, 0.0];
        prop_assert!((u.interpolate(&x).unwrap() - f(&x)).abs() < 1e-12);
    }

    #[test]
    fn trilinear_reproduced(
        c in prop::array::uniform4(-3.0..3.0f64),
        x in (-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64),
    ) {
        let g = Grid::new(3, 9).unwrap();
        let f = |x: &[f64; 3]| c[0] * x[0] + c[1] * x[1] * x[2] + c[2] * x[0] * x[1] * x[2] + c[3];
        let u = ScalarField::from_fn(&g, f);
        let p = [x.0, x.1, x.2];
        prop_assert!((u.interpolate(&p).unwrap() - f(&p)).abs() < 1e-12);
    }

    #[test]
    fn halfball_volume_scales(rho in 0.05..1.0f64, dim in 2usize..=3) {
        let q = halfball_quadrature(dim, rho, 2.0 / 128.0).unwrap();
        let exact = if dim == 2 { PI * rho * rho / 2.0 } else { 2.0 * PI * rho.powi(3) / 3.0 };
        prop_assert!((q.total_weight() - exact).abs() < 1e-6 * exact.max(1.0));
    }

    #[test]
    fn hemisphere_area_scales(rho in 0.05..1.0f64) {
        let q = hemisphere_quadrature(3, rho, 24).unwrap();
        prop_assert!((q.total_weight() - 2.0 * PI * rho * rho).abs() < 1e-10);
    }
}
