//! Polynomial extension of the obstacle, the normalized solution `v = u − h̃`
//! and its forcing `f = −D_i(a^{ij} D_j h̃)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{finite_difference_taylor, Expr};
use crate::fields::{penalty_lipschitz, CoefficientField, FieldEval, Matrix3, ProblemSpec, ScalarField};
use crate::geometry::Grid;
pub use crate::poly::{MonomialSet, MultiIndex, Polynomial};
use crate::Point;

const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// `h` restricted to the slab: every occurrence of `x_n` replaced by 0.
pub fn slab_restriction(h: &Expr, dim: usize) -> Expr {
    if h.independent_of(dim - 1) {
        return h.clone();
    }
    let mut map = IDENTITY;
    map[dim - 1][dim - 1] = 0.0;
    h.substitute_affine(&[0.0; 3], &map, dim)
}

/// Taylor polynomial of total degree `order` of `e` at the origin, from exact
/// jets when `e` is smooth there and from central differences with step
/// `fd_step` otherwise.
fn taylor_at_origin(e: &Expr, dim: usize, axes: usize, order: usize, fd_step: f64) -> Result<Polynomial> {
    match e.taylor(&[0.0; 3], dim, order) {
        Ok(p) => Ok(p),
        Err(Error::NonSmooth(_)) => {
            let f = |x: &Point| e.eval(x);
            Ok(finite_difference_taylor(&f, &[0.0; 3], dim, axes, order, fd_step))
        }
        Err(e) => Err(e),
    }
}

/// The unique polynomial `h̄` of degree ≤ κ with `h̄(x′,0) = T_κ h(x′)`,
/// vanishing first `x_n`-layer, and `D_i(a^{ij} D_j h̄) = O(|x|^{κ−1})`.
///
/// Layers `h_{k+2}` are obtained from the Taylor layers of `A` in `x_n`; the
/// division by `a^{nn}(x′,0)` uses its truncated reciprocal series.
pub fn extend_obstacle(a: &CoefficientField, h: &Expr, kappa: usize, fd_step: f64) -> Result<Polynomial> {
    let n = a.dim();
    let xn = n - 1;
    let slab = slab_restriction(h, n);
    let h0 = taylor_at_origin(&slab, n, n - 1, kappa, fd_step)?.restrict_axis_zero(xn);
    if kappa < 2 {
        return Ok(h0);
    }
    let a_order = kappa - 1;
    let mut a_poly = vec![vec![Polynomial::zero(n, kappa); n]; n];
    for (i, row) in a_poly.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = taylor_at_origin(a.entry(i, j), n, n, a_order, fd_step)?.with_order(kappa);
        }
    }
    // a^{ij}_m(x'): coefficient of x_n^m
    let layer = |i: usize, j: usize, m: usize| -> Polynomial {
        if m > a_order {
            Polynomial::zero(n, kappa)
        } else {
            a_poly[i][j].slice_power(xn, m)
        }
    };
    let ann0 = layer(xn, xn, 0);
    if ann0.constant_term() <= 0.0 {
        return Err(Error::Validation("a^{nn}(0) must be positive".into()));
    }
    let inv = ann0.recip().expect("positive constant term");
    let mut layers = vec![h0.clone(), Polynomial::zero(n, kappa)];
    for k in 0..=kappa - 2 {
        let kf = k as f64;
        let mut s = Polynomial::zero(n, kappa);
        for l in 0..=k {
            for i in 0..xn {
                for j in 0..xn {
                    let t = layer(i, j, k - l).mul(&layers[l].derivative(j));
                    s = s.add(&t.derivative(i));
                }
                let t = layer(i, xn, k - l).mul(&layers[l + 1]);
                s = s.add(&t.derivative(i).scale((l + 1) as f64));
            }
            let t = layer(xn, xn, k + 1 - l).mul(&layers[l + 1]);
            s = s.add(&t.scale(((l + 1) as f64) * (kf + 1.0)));
        }
        for l in 0..=k + 1 {
            for j in 0..xn {
                let t = layer(xn, j, k + 1 - l).mul(&layers[l].derivative(j));
                s = s.add(&t.scale(kf + 1.0));
            }
        }
        let next = s
            .mul(&inv)
            .scale(-1.0 / ((kf + 1.0) * (kf + 2.0)))
            .truncated(kappa - k - 2);
        layers.push(next);
    }
    let mut out = Polynomial::zero(n, kappa);
    for (l, p) in layers.iter().enumerate() {
        out = out.add(&p.shift_power(xn, l));
    }
    Ok(out)
}

/// `D_i(a^{ij} D_j q)` for a polynomial `q`, with `A` replaced by its Taylor
/// polynomial of degree `a_order` at the origin; the product is truncated at
/// the order of `q`.
pub fn apply_operator(a: &CoefficientField, q: &Polynomial, a_order: usize) -> Result<Polynomial> {
    let n = a.dim();
    let mut out = Polynomial::zero(n, q.order());
    for i in 0..n {
        for j in 0..n {
            let aij = a.entry(i, j).taylor(&[0.0; 3], n, a_order)?.with_order(q.order());
            out = out.add(&aij.mul(&q.derivative(j)).derivative(i));
        }
    }
    Ok(out)
}

/// `h̃ = h̄ − h̄(x′,0) + h(x′)` with cached derivative polynomials.
#[derive(Clone, Debug)]
pub struct ObstacleExtension {
    dim: usize,
    h_bar: Polynomial,
    /// `h̄ − h̄(x′,0)`
    interior: Polynomial,
    d1: Vec<Polynomial>,
    d2: Vec<Vec<Polynomial>>,
    slab: Expr,
    slab_zero: bool,
    fd_step: f64,
}

impl ObstacleExtension {
    pub fn new(h_bar: Polynomial, h: &Expr, fd_step: f64) -> ObstacleExtension {
        let dim = h_bar.dim();
        let interior = h_bar.sub(&h_bar.restrict_axis_zero(dim - 1));
        let d1: Vec<Polynomial> = (0..dim).map(|i| interior.derivative(i)).collect();
        let d2 = d1
            .iter()
            .map(|d| (0..dim).map(|j| d.derivative(j)).collect())
            .collect();
        let slab = slab_restriction(h, dim);
        let slab_zero = slab.constant_value() == Some(0.0);
        ObstacleExtension {
            dim,
            h_bar,
            interior,
            d1,
            d2,
            slab,
            slab_zero,
            fd_step,
        }
    }

    pub fn h_bar(&self) -> &Polynomial {
        &self.h_bar
    }

    pub fn is_zero(&self) -> bool {
        self.slab_zero && self.interior.is_zero()
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.interior.eval(x) + if self.slab_zero { 0.0 } else { self.slab.eval(x) }
    }

    /// Value, gradient and Hessian of `h̃` at `x`.
    pub fn jet2(&self, x: &Point) -> (f64, Point, Matrix3) {
        let n = self.dim;
        let mut g = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for i in 0..n {
            g[i] = self.d1[i].eval(x);
            for j in 0..n {
                hess[i][j] = self.d2[i][j].eval(x);
            }
        }
        let mut v = self.interior.eval(x);
        if !self.slab_zero {
            let jet = match self.slab.taylor(x, n, 2) {
                Ok(p) => p,
                Err(_) => {
                    let f = |y: &Point| self.slab.eval(y);
                    finite_difference_taylor(&f, x, n, n - 1, 2, self.fd_step)
                }
            };
            v += jet.constant_term();
            for i in 0..n {
                let mut e = [0u8; 3];
                e[i] = 1;
                g[i] += jet.coeff(&e);
                for j in 0..n {
                    let mut e = [0u8; 3];
                    e[i] += 1;
                    e[j] += 1;
                    let c = jet.coeff(&e);
                    hess[i][j] += if i == j { 2.0 * c } else { c };
                }
            }
        }
        (v, g, hess)
    }

    /// `f(x) = −D_i(a^{ij}(x) D_j h̃(x))`.
    pub fn forcing(&self, a: &CoefficientField, x: &Point) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let n = self.dim;
        let (_, g, hess) = self.jet2(x);
        let m = a.eval(x);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += m[i][j] * hess[i][j];
            }
        }
        if !a.is_constant() {
            let jets = a.taylor(x, 1).ok();
            for i in 0..n {
                for j in 0..n {
                    let d = match &jets {
                        Some(jets) => {
                            let mut e = [0u8; 3];
                            e[i] = 1;
                            jets[i][j].coeff(&e)
                        }
                        None => {
                            let mut p = *x;
                            let mut q = *x;
                            p[i] += self.fd_step;
                            q[i] -= self.fd_step;
                            (a.entry(i, j).eval(&p) - a.entry(i, j).eval(&q)) / (2.0 * self.fd_step)
                        }
                    };
                    s += d * g[j];
                }
            }
        }
        -s
    }
}

/// Result of the growth test `sup |f(x)| / |x|^{κ−1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub constant: f64,
    pub pass: bool,
    /// Largest ratio among the nodes nearest the origin.
    pub nearest_ratio: f64,
}

/// Growth test over `(|x|, |f(x)|)` samples on a grid of spacing `h`.
///
/// The bound fails when the ratio near the origin exceeds twice its value away
/// from it, which is how an unbounded ratio shows up on a finite grid.
pub fn growth_from_samples(samples: impl Iterator<Item = (f64, f64)>, h: f64, kappa: usize) -> GrowthCheck {
    let e = kappa as i32 - 1;
    let mut sup: f64 = 0.0;
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    for (r, f) in samples {
        if r == 0.0 {
            continue;
        }
        let ratio = f / r.powi(e);
        sup = sup.max(ratio);
        if r <= 3.0 * h {
            inner = inner.max(ratio);
        } else if r >= 6.0 * h {
            outer = outer.max(ratio);
        }
    }
    GrowthCheck {
        constant: sup,
        pass: inner <= 2.0 * outer || inner == 0.0,
        nearest_ratio: inner,
    }
}

/// `sup_{x ≠ 0} |f(x)| / |x|^{κ−1}` over grid nodes.
pub fn check_f_growth(f: &ScalarField, kappa: usize) -> GrowthCheck {
    let g = f.grid();
    let n = g.dim();
    growth_from_samples(
        (0..g.node_count()).map(|i| {
            let x = g.node(i);
            let r = x[..n].iter().map(|t| t * t).sum::<f64>().sqrt();
            (r, f.values()[i].abs())
        }),
        g.spacing(),
        kappa,
    )
}

/// Symmetric square root of a positive definite `n×n` matrix and its inverse.
pub fn sqrt_spd(m: &Matrix3, dim: usize) -> Result<(Matrix3, Matrix3)> {
    let dm = nalgebra::DMatrix::from_fn(dim, dim, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let eig = dm.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Validation("coefficient matrix is not positive definite".into()));
    }
    let mut s = [[0.0; 3]; 3];
    let mut si = [[0.0; 3]; 3];
    for k in 0..dim {
        let l = eig.eigenvalues[k];
        for i in 0..dim {
            for j in 0..dim {
                let q = eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)];
                s[i][j] += l.sqrt() * q;
                si[i][j] += q / l.sqrt();
            }
        }
    }
    Ok((s, si))
}

/// The problem seen from a slab point `x0` in coordinates `x = x0 + L y`, with
/// `L` the symmetric square root of `A(x0)`, normalized by the obstacle
/// extension: `v(y) = u(x0 + L y) − h̃(y)`.
#[derive(Clone, Debug)]
pub struct NormalizedProblem {
    pub base: Point,
    pub map: Matrix3,
    pub map_inv: Matrix3,
    pub u: ScalarField,
    /// Coefficients `L⁻¹ A(x0 + L y) L⁻¹`.
    pub a: CoefficientField,
    pub k_plus: Expr,
    pub k_minus: Expr,
    pub p: f64,
    pub kappa: usize,
    pub extension: ObstacleExtension,
    /// Grid spacing expressed in `y` units.
    pub spacing: f64,
    /// Nodal `v` on the solver grid; only present when `x0 = 0` and `L = I`.
    pub v: Option<ScalarField>,
    /// Nodal `f` on the solver grid, same condition as `v`.
    pub f: Option<ScalarField>,
    pub f_growth: GrowthCheck,
    /// Lipschitz bound of `k±` in `y` units.
    pub penalty_lipschitz: f64,
}

impl NormalizedProblem {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn h_bar(&self) -> &Polynomial {
        self.extension.h_bar()
    }

    pub fn to_grid_point(&self, y: &Point) -> Point {
        let n = self.dim();
        let mut x = self.base;
        for i in 0..n {
            for j in 0..n {
                x[i] += self.map[i][j] * y[j];
            }
        }
        x
    }

    pub fn forcing(&self, y: &Point) -> f64 {
        self.extension.forcing(&self.a, y)
    }

    pub fn forcing_vanishes(&self) -> bool {
        self.extension.is_zero()
    }

    /// The same problem with `u` subsampled onto the grid of twice the
    /// spacing; `None` when that grid would not have a node at the origin.
    pub fn coarsened(&self) -> Option<NormalizedProblem> {
        let fine = self.u.grid();
        let m = fine.cells_per_axis();
        if !(m - 1).is_multiple_of(4) || (m - 1) / 2 + 1 < 9 {
            return None;
        }
        let coarse = Grid::new(fine.dim(), (m - 1) / 2 + 1).ok()?;
        let values = (0..coarse.node_count())
            .map(|i| {
                let mi = coarse.multi_index(i);
                fine.index(&[2 * mi[0], 2 * mi[1], 2 * mi[2]])
            })
            .map(|j| self.u.values()[j])
            .collect();
        let u = ScalarField::new(coarse, values).ok()?;
        Some(NormalizedProblem {
            u,
            spacing: 2.0 * self.spacing,
            v: None,
            f: None,
            ..self.clone()
        })
    }
}

impl FieldEval for NormalizedProblem {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn value(&self, y: &Point) -> Result<f64> {
        let x = self.to_grid_point(y);
        Ok(self.u.interpolate(&x)? - self.extension.value(y))
    }

    fn gradient(&self, y: &Point) -> Result<Point> {
        let n = self.dim();
        let x = self.to_grid_point(y);
        let gu = self.u.gradient(&x)?;
        let (_, gh, _) = if self.extension.is_zero() {
            (0.0, [0.0; 3], [[0.0; 3]; 3])
        } else {
            self.extension.jet2(y)
        };
        let mut g = [0.0; 3];
        for j in 0..n {
            for i in 0..n {
                g[j] += self.map[i][j] * gu[i];
            }
            g[j] -= gh[j];
        }
        Ok(g)
    }

    fn spacing(&self) -> Option<f64> {
        Some(self.spacing)
    }
}

/// Normalize a solved field at the origin: `v = u − h̃` and `f` on the grid.
pub fn normalize(spec: &ProblemSpec, u: &ScalarField) -> Result<NormalizedProblem> {
    let grid = &spec.grid;
    let h_bar = extend_obstacle(&spec.a, &spec.obstacle, spec.kappa, grid.spacing())?;
    let ext = ObstacleExtension::new(h_bar, &spec.obstacle, grid.spacing());
    let v = u.map(|x, val| val - ext.value(x));
    let f = ScalarField::from_fn(grid, |x| ext.forcing(&spec.a, x));
    let growth = check_f_growth(&f, spec.kappa);
    Ok(NormalizedProblem {
        base: [0.0; 3],
        map: IDENTITY,
        map_inv: IDENTITY,
        u: u.clone(),
        a: spec.a.clone(),
        k_plus: spec.k_plus.clone(),
        k_minus: spec.k_minus.clone(),
        p: spec.p,
        kappa: spec.kappa,
        extension: ext,
        spacing: grid.spacing(),
        v: Some(v),
        f: Some(f),
        f_growth: growth,
        penalty_lipschitz: penalty_lipschitz(spec, 1000),
    })
}

/// Normalize at a slab point `x0` after the affine change `x = x0 + L y`.
pub fn normalize_at(spec: &ProblemSpec, u: &ScalarField, x0: &Point) -> Result<NormalizedProblem> {
    let n = spec.dim();
    if x0[n - 1] != 0.0 {
        return Err(Error::Domain("recentering point must lie on the slab".into()));
    }
    if x0[..n].iter().all(|c| *c == 0.0) && spec.a.is_identity() {
        return normalize(spec, u);
    }
    let a0 = spec.a.eval(x0);
    let (l, l_inv) = sqrt_spd(&a0, n)?;
    let a_loc = spec.a.recentered(x0, &l, &l_inv);
    let lnn = l[n - 1][n - 1];
    let k_plus = spec.k_plus.substitute_affine(x0, &l, n).scaled(1.0 / lnn);
    let k_minus = spec.k_minus.substitute_affine(x0, &l, n).scaled(1.0 / lnn);
    let obstacle = slab_restriction(&spec.obstacle, n).substitute_affine(x0, &l, n);
    let sigma_min = {
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| l[i][j]);
        dm.symmetric_eigenvalues().min()
    };
    let sigma_max = {
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| l[i][j]);
        dm.symmetric_eigenvalues().max()
    };
    let spacing = spec.grid.spacing() / sigma_min;
    let h_bar = extend_obstacle(&a_loc, &obstacle, spec.kappa, spacing)?;
    let ext = ObstacleExtension::new(h_bar, &obstacle, spacing);
    // growth of f sampled on a local lattice of the grid's resolution
    let reach = 0.4;
    let steps = (reach / spacing).floor() as i64;
    let mut samples = Vec::new();
    let mut idx = [0i64; 3];
    let lat = |k: i64| k as f64 * spacing;
    let range: Vec<i64> = (-steps..=steps).collect();
    let upper: Vec<i64> = (0..=steps).collect();
    let axes: Vec<&Vec<i64>> = (0..n).map(|a| if a == n - 1 { &upper } else { &range }).collect();
    let total: usize = axes.iter().map(|r| r.len()).product();
    for mut c in 0..total {
        for a in 0..n {
            idx[a] = axes[a][c % axes[a].len()];
            c /= axes[a].len();
        }
        let mut y = [0.0; 3];
        for a in 0..n {
            y[a] = lat(idx[a]);
        }
        let r = y[..n].iter().map(|t| t * t).sum::<f64>().sqrt();
        if r <= reach {
            samples.push((r, ext.forcing(&a_loc, &y).abs()));
        }
    }
    let growth = growth_from_samples(samples.into_iter(), spacing, spec.kappa);
    Ok(NormalizedProblem {
        base: *x0,
        map: l,
        map_inv: l_inv,
        u: u.clone(),
        a: a_loc,
        k_plus,
        k_minus,
        p: spec.p,
        kappa: spec.kappa,
        extension: ext,
        spacing,
        v: None,
        f: None,
        f_growth: growth,
        penalty_lipschitz: penalty_lipschitz(spec, 1000) * sigma_max / lnn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ProblemConfig;
    use crate::geometry::Grid;

    fn parse(s: &str) -> Expr {
        Expr::parse(s, 2, "h").unwrap()
    }

    #[test]
    fn identity_quadratic_obstacle() {
        let a = CoefficientField::identity(2);
        let hb = extend_obstacle(&a, &parse("x1^2"), 2, 0.01).unwrap();
        assert_eq!(hb.coeff(&[2, 0, 0]), 1.0);
        assert_eq!(hb.coeff(&[0, 2, 0]), -1.0);
        assert_eq!(hb.terms().count(), 2);
    }

    #[test]
    fn linear_obstacle_layers() {
        let grid = Grid::new(2, 9).unwrap();
        let spec = ProblemConfig::identity(2)
            .with_coefficients(&[&["1 + x1^2", "0"], &["0", "1 + x2"]], 2.0)
            .build(&grid)
            .unwrap();
        let hb = extend_obstacle(&spec.a, &parse("0.5 - 2*x1"), 3, 0.01).unwrap();
        assert_eq!(hb.coeff(&[0, 0, 0]), 0.5);
        assert_eq!(hb.coeff(&[1, 0, 0]), -2.0);
        // D_1((1 + x1^2)(-2)) = -4 x1 is cancelled by the layer 2 x1 x2^2
        assert!((hb.coeff(&[1, 2, 0]) - 2.0).abs() < 1e-14);
        let flat = extend_obstacle(&CoefficientField::identity(2), &parse("0.5 - 2*x1"), 3, 0.01).unwrap();
        assert_eq!(flat.terms().count(), 2);
    }

    #[test]
    fn operator_residual_vanishes_to_order() {
        let grid = Grid::new(2, 9).unwrap();
        let spec = ProblemConfig::identity(2)
            .with_coefficients(&[&["1 + x1^2/4 + x2^2", "0"], &["0", "1 + x1*x2 + x1"]], 3.0)
            .build(&grid)
            .unwrap();
        for kappa in 2..=5 {
            let hb = extend_obstacle(&spec.a, &parse("x1^2 + x1^3 - x1^4 + sin(x1)"), kappa, 0.01).unwrap();
            assert!(hb.degree() <= kappa);
            let lh = apply_operator(&spec.a, &hb, kappa - 1).unwrap();
            for (e, c) in lh.terms() {
                if crate::poly::degree_of(&e) + 2 <= kappa {
                    assert!(c.abs() < 1e-12, "kappa {kappa}: {e:?} -> {c}");
                }
            }
            // vanishing first layer
            assert!(hb.slice_power(1, 1).is_zero());
        }
    }

    #[test]
    fn growth_examples() {
        let g = Grid::new(2, 33).unwrap();
        let zero = ScalarField::zeros(&g);
        let c = check_f_growth(&zero, 2);
        assert_eq!(c.constant, 0.0);
        assert!(c.pass);
        let r = ScalarField::from_fn(&g, |x| (x[0] * x[0] + x[1] * x[1]).sqrt());
        let c = check_f_growth(&r, 2);
        assert!((c.constant - 1.0).abs() < 1e-12 && c.pass);
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let c = check_f_growth(&one, 2);
        assert!(!c.pass);
        assert!((c.nearest_ratio - 1.0 / g.spacing()).abs() < 1e-9);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let m = [[4.0, 0.0, 0.0], [0.0, 9.0, 0.0], [0.0, 0.0, 1.0]];
        let (s, si) = sqrt_spd(&m, 2).unwrap();
        assert!((s[0][0] - 2.0).abs() < 1e-14 && (s[1][1] - 3.0).abs() < 1e-14);
        assert!((si[1][1] - 1.0 / 3.0).abs() < 1e-14);
    }
}
