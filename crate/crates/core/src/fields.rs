//! Grid functions, coefficient fields and problem data.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::Grid;
use crate::poly::Polynomial;
use crate::Point;

pub type Matrix3 = [[f64; 3]; 3];

/// Nodal values on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite value at node {i}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point) -> f64) -> ScalarField {
        let values = grid.sample(f);
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interpolate(&self, x: &Point) -> Result<f64> {
        self.grid.interpolate(&self.values, x)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(&Point, f64) -> f64) -> ScalarField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| f(&self.grid.node(i), *v))
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Anything the diagnostics can sample: a value and a gradient at a point.
pub trait FieldEval: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> Result<f64>;
    fn gradient(&self, x: &Point) -> Result<Point>;
    /// Grid spacing that limits resolution, if any.
    fn spacing(&self) -> Option<f64>;
}

/// Step of the difference stencil used for gradients of grid fields.
pub fn gradient_step(h: f64) -> f64 {
    h / 2.0
}

impl ScalarField {
    /// Fourth-order differences of the interpolant with step `step`, one-sided
    /// where the centred stencil would leave the domain.
    pub fn gradient_with_step(&self, x: &Point, step: f64) -> Result<Point> {
        let dim = self.grid.dim();
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate().take(dim) {
            let lo = if a == dim - 1 { 0.0 } else { -1.0 };
            let at = |k: f64| -> Result<f64> {
                let mut y = *x;
                y[a] += k * step;
                self.interpolate(&y)
            };
            *ga = if x[a] - 2.0 * step >= lo && x[a] + 2.0 * step <= 1.0 {
                (-at(2.0)? + 8.0 * at(1.0)? - 8.0 * at(-1.0)? + at(-2.0)?) / (12.0 * step)
            } else {
                let s = if x[a] - 2.0 * step < lo { 1.0 } else { -1.0 };
                s * (-25.0 * at(0.0)? + 48.0 * at(s)? - 36.0 * at(2.0 * s)? + 16.0 * at(3.0 * s)?
                    - 3.0 * at(4.0 * s)?)
                    / (12.0 * step)
            };
        }
        Ok(g)
    }
}

impl FieldEval for ScalarField {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn value(&self, x: &Point) -> Result<f64> {
        self.interpolate(x)
    }

    fn gradient(&self, x: &Point) -> Result<Point> {
        self.gradient_with_step(x, gradient_step(self.grid.spacing()))
    }

    fn spacing(&self) -> Option<f64> {
        Some(self.grid.spacing())
    }
}

/// Symmetric coefficient matrix `A(x)` given by expression trees.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    dim: usize,
    entries: Vec<Expr>,
    lipschitz_bound: f64,
}

impl CoefficientField {
    pub fn new(dim: usize, entries: Vec<Vec<Expr>>, lipschitz_bound: f64) -> Result<CoefficientField> {
        if entries.len() != dim || entries.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation(format!("coefficient matrix must be {dim}x{dim}")));
        }
        if !(lipschitz_bound >= 0.0) {
            return Err(Error::Validation("lipschitz_bound must be non-negative".into()));
        }
        Ok(CoefficientField {
            dim,
            entries: entries.into_iter().flatten().collect(),
            lipschitz_bound,
        })
    }

    pub fn identity(dim: usize) -> CoefficientField {
        let entries = (0..dim)
            .map(|i| (0..dim).map(|j| Expr::Num(if i == j { 1.0 } else { 0.0 })).collect())
            .collect();
        CoefficientField::new(dim, entries, 0.0).expect("identity is well formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.dim + j]
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|e| e.constant_value().is_some())
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| self.entry(i, j).constant_value() == Some(if i == j { 1.0 } else { 0.0 }))
        })
    }

    pub fn eval(&self, x: &Point) -> Matrix3 {
        let mut a = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                a[i][j] = self.entry(i, j).eval(x);
            }
        }
        a
    }

    /// Taylor polynomials of every entry about `x0`.
    pub fn taylor(&self, x0: &Point, order: usize) -> Result<Vec<Vec<Polynomial>>> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.entry(i, j).taylor(x0, self.dim, order))
                    .collect()
            })
            .collect()
    }

    /// `A(x0 + L y)` conjugated as `L^{-1} A L^{-1}`, in the variables `y`.
    pub fn recentered(&self, x0: &Point, l: &Matrix3, l_inv: &Matrix3) -> CoefficientField {
        let n = self.dim;
        let sub: Vec<Expr> = self
            .entries
            .iter()
            .map(|e| e.substitute_affine(x0, l, n))
            .collect();
        let mut entries = vec![vec![Expr::Num(0.0); n]; n];
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                let mut acc: Option<Expr> = None;
                for k in 0..n {
                    for m in 0..n {
                        let c = l_inv[i][k] * l_inv[m][j];
                        if c == 0.0 {
                            continue;
                        }
                        let term = sub[k * n + m].scaled(c);
                        acc = Some(match acc {
                            None => term,
                            Some(a) => Expr::Add(Box::new(a), Box::new(term)),
                        });
                    }
                }
                *slot = acc.unwrap_or(Expr::Num(0.0));
            }
        }
        let op_norm = (0..n)
            .map(|i| (0..n).map(|k| l[k][i].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let inv_norm = (0..n)
            .map(|i| (0..n).map(|k| l_inv[i][k].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        CoefficientField {
            dim: n,
            entries: entries.into_iter().flatten().collect(),
            lipschitz_bound: self.lipschitz_bound * op_norm * inv_norm * inv_norm,
        }
    }
}

/// `μ(x) = a^{ij} x_i x_j / |x|²`, equal to 1 at the origin.
pub fn mu_at(a: &CoefficientField, x: &Point) -> f64 {
    let r2: f64 = x[..a.dim].iter().map(|t| t * t).sum();
    if r2 == 0.0 {
        return 1.0;
    }
    let m = a.eval(x);
    mu_from_matrix(&m, x, a.dim) / r2
}

fn mu_from_matrix(m: &Matrix3, x: &Point, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += m[i][j] * x[i] * x[j];
        }
    }
    s
}

/// `b(x) = A(x) − I`.
pub fn b_at(a: &CoefficientField, x: &Point) -> Matrix3 {
    let mut m = a.eval(x);
    for (i, row) in m.iter_mut().enumerate().take(a.dim) {
        row[i] -= 1.0;
    }
    m
}

/// `Σ_i D_i(b^{ij} x_j / |x|)`; analytic derivatives when every entry is
/// smooth at `x`, central differences with step `fd_step` otherwise.
pub fn div_b_radial(a: &CoefficientField, x: &Point, fd_step: f64) -> Result<f64> {
    let n = a.dim;
    let r: f64 = x[..n].iter().map(|t| t * t).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Singular("div_b_radial at the origin".into()));
    }
    if a.is_constant() {
        return Ok(div_b_constant(a, x, r));
    }
    match a.taylor(x, 1) {
        Ok(jets) => {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let jet = &jets[i][j];
                    let mut e = [0u8; 3];
                    e[i] = 1;
                    let d_a = jet.coeff(&e);
                    let b = jet.constant_term() - if i == j { 1.0 } else { 0.0 };
                    let delta = if i == j { 1.0 } else { 0.0 };
                    s += d_a * x[j] / r + b * (delta / r - x[i] * x[j] / (r * r * r));
                }
            }
            Ok(s)
        }
        Err(Error::NonSmooth(_)) => Ok(div_b_fd(a, x, fd_step)),
        Err(e) => Err(e),
    }
}

fn div_b_constant(a: &CoefficientField, x: &Point, r: f64) -> f64 {
    let b = b_at(a, x);
    let n = a.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            s += b[i][j] * (delta / r - x[i] * x[j] / (r * r * r));
        }
    }
    s
}

/// Central-difference version of [`div_b_radial`].
pub fn div_b_fd(a: &CoefficientField, x: &Point, step: f64) -> f64 {
    let n = a.dim;
    let flux = |y: &Point, i: usize| -> f64 {
        let r: f64 = y[..n].iter().map(|t| t * t).sum::<f64>().sqrt();
        let b = b_at(a, y);
        (0..n).map(|j| b[i][j] * y[j] / r).sum()
    };
    (0..n)
        .map(|i| {
            let mut p = *x;
            let mut m = *x;
            p[i] += step;
            m[i] -= step;
            (flux(&p, i) - flux(&m, i)) / (2.0 * step)
        })
        .sum()
}

/// Problem data as expression strings, the config-level form of [`ProblemSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    /// Row-major `n x n` entries.
    pub a: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_bound: Option<f64>,
    pub k_plus: String,
    pub k_minus: String,
    pub obstacle: String,
    pub p: f64,
    pub kappa: usize,
    pub dirichlet: String,
}

impl ProblemConfig {
    /// Identity coefficients, zero penalties, zero obstacle, `p = 2`, `κ = 2`.
    pub fn identity(dim: usize) -> ProblemConfig {
        ProblemConfig {
            dim,
            a: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { "1" } else { "0" }.to_string()).collect())
                .collect(),
            lipschitz_bound: None,
            k_plus: "0".into(),
            k_minus: "0".into(),
            obstacle: "0".into(),
            p: 2.0,
            kappa: 2,
            dirichlet: "0".into(),
        }
    }

    pub fn with_penalties(mut self, k_plus: &str, k_minus: &str) -> Self {
        self.k_plus = k_plus.into();
        self.k_minus = k_minus.into();
        self
    }

    pub fn with_dirichlet(mut self, g: &str) -> Self {
        self.dirichlet = g.into();
        self
    }

    pub fn with_obstacle(mut self, h: &str) -> Self {
        self.obstacle = h.into();
        self
    }

    pub fn with_exponent(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_kappa(mut self, kappa: usize) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_coefficients(mut self, rows: &[&[&str]], lipschitz_bound: f64) -> Self {
        self.a = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        self.lipschitz_bound = Some(lipschitz_bound);
        self
    }

    pub fn build(&self, grid: &Grid) -> Result<ProblemSpec> {
        let n = self.dim;
        if grid.dim() != n {
            return Err(Error::Config(format!(
                "problem dim {n} differs from grid dim {}",
                grid.dim()
            )));
        }
        if self.a.len() != n || self.a.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("problem.a must be a {n}x{n} matrix")));
        }
        let mut rows = Vec::with_capacity(n);
        for (i, row) in self.a.iter().enumerate() {
            let mut parsed = Vec::with_capacity(n);
            for (j, s) in row.iter().enumerate() {
                parsed.push(Expr::parse(s, n, &format!("problem.a[{i}][{j}]"))?);
            }
            rows.push(parsed);
        }
        let k_plus = Expr::parse(&self.k_plus, n, "problem.k_plus")?;
        let k_minus = Expr::parse(&self.k_minus, n, "problem.k_minus")?;
        let obstacle = Expr::parse(&self.obstacle, n, "problem.obstacle")?;
        let dirichlet = Expr::parse(&self.dirichlet, n, "problem.dirichlet")?;
        let provisional = CoefficientField::new(n, rows.clone(), 0.0)?;
        let lipschitz = match self.lipschitz_bound {
            Some(c) => c,
            None => sampled_lipschitz(&provisional, 1000, 0) * 1.1,
        };
        let a = CoefficientField::new(n, rows, lipschitz)?;
        Ok(ProblemSpec {
            a,
            k_plus,
            k_minus,
            obstacle,
            p: self.p,
            kappa: self.kappa,
            dirichlet,
            grid: grid.clone(),
        })
    }
}

/// Problem data: coefficients, penalties, obstacle, exponent, truncation order
/// and Dirichlet datum on the outer faces of the half-cube.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub a: CoefficientField,
    pub k_plus: Expr,
    pub k_minus: Expr,
    pub obstacle: Expr,
    pub p: f64,
    pub kappa: usize,
    pub dirichlet: Expr,
    pub grid: Grid,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn slab(x: &Point, dim: usize) -> Point {
        let mut y = *x;
        y[dim - 1] = 0.0;
        y
    }

    /// `h(x')`, evaluated on the slab below `x`.
    pub fn obstacle_at(&self, x: &Point) -> f64 {
        self.obstacle.eval(&Self::slab(x, self.dim()))
    }

    pub fn k_plus_at(&self, x: &Point) -> f64 {
        self.k_plus.eval(&Self::slab(x, self.dim()))
    }

    pub fn k_minus_at(&self, x: &Point) -> f64 {
        self.k_minus.eval(&Self::slab(x, self.dim()))
    }

    /// Boundary flux `k₊((s)⁺)^{p−1} − k₋((s)⁻)^{p−1}` for `s = u − h`.
    pub fn flux(&self, x: &Point, s: f64) -> f64 {
        penalty_derivative(self.k_plus_at(x), self.k_minus_at(x), self.p, s)
    }

    pub fn penalties_vanish(&self) -> bool {
        self.k_plus.constant_value() == Some(0.0) && self.k_minus.constant_value() == Some(0.0)
    }

    pub fn penalties_constant(&self) -> bool {
        self.k_plus.constant_value().is_some() && self.k_minus.constant_value().is_some()
    }

    pub fn with_grid(&self, grid: &Grid) -> ProblemSpec {
        let mut s = self.clone();
        s.grid = grid.clone();
        s
    }
}

/// `(1/p)(k₊(s⁺)^p + k₋(s⁻)^p)`.
pub fn penalty(kp: f64, km: f64, p: f64, s: f64) -> f64 {
    if s > 0.0 {
        kp * pow_p(s, p) / p
    } else if s < 0.0 {
        km * pow_p(-s, p) / p
    } else {
        0.0
    }
}

/// Derivative of [`penalty`] in `s`.
pub fn penalty_derivative(kp: f64, km: f64, p: f64, s: f64) -> f64 {
    if s > 0.0 {
        kp * pow_p(s, p - 1.0)
    } else if s < 0.0 {
        -km * pow_p(-s, p - 1.0)
    } else {
        0.0
    }
}

/// `t^e` for `t ≥ 0`, exact for small integer `e`.
pub fn pow_p(t: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 16.0 {
        t.powi(e as i32)
    } else {
        t.powf(e)
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub worst: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
    pub lambda: f64,
    pub big_lambda: f64,
    pub sampled_lipschitz: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} (worst {:e}): {}", c.name, c.worst, c.detail))
            .collect()
    }

    pub fn into_result(self) -> Result<ValidationReport> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::Validation(self.failures().join("; ")))
        }
    }
}

const NORMALIZATION_TOL: f64 = 1e-12;

fn sample_points(dim: usize, count: usize, slab: bool, rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..count)
        .map(|_| {
            let mut x = [0.0; 3];
            for (a, xa) in x.iter_mut().enumerate().take(dim) {
                *xa = if a == dim - 1 {
                    if slab {
                        0.0
                    } else {
                        rng.gen_range(0.0..=1.0)
                    }
                } else {
                    rng.gen_range(-1.0..=1.0)
                };
            }
            x
        })
        .collect()
}

/// Largest sampled difference quotient `max_ij |a_ij(x) − a_ij(y)| / |x − y|`.
pub fn sampled_lipschitz(a: &CoefficientField, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.dim;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = sample_points(n, 1, false, &mut rng)[0];
        let mut y = x;
        for (k, ya) in y.iter_mut().enumerate().take(n) {
            let lo = if k == n - 1 { 0.0 } else { -1.0 };
            *ya = (*ya + rng.gen_range(-0.05..0.05)).clamp(lo, 1.0);
        }
        let d: f64 = (0..n).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt();
        if d < 1e-9 {
            continue;
        }
        let (ax, ay) = (a.eval(&x), a.eval(&y));
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((ax[i][j] - ay[i][j]).abs() / d);
            }
        }
    }
    worst
}

/// Sampled check of symmetry, ellipticity, both normalizations, sign of the
/// penalties, the exponent range and the declared Lipschitz bound.
pub fn validate_spec(spec: &ProblemSpec) -> ValidationReport {
    let a = &spec.a;
    let n = a.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut pts = sample_points(n, 1000, false, &mut rng);
    let coarse = Grid::new(n, 9).expect("valid coarse grid");
    pts.extend((0..coarse.node_count()).map(|i| coarse.node(i)));
    let slab_pts = {
        let mut s = sample_points(n, 500, true, &mut rng);
        s.extend(
            (0..coarse.node_count())
                .map(|i| coarse.node(i))
                .filter(|x| x[n - 1] == 0.0),
        );
        s
    };
    let mut checks = Vec::new();

    let mut sym: f64 = 0.0;
    let mut lam = f64::INFINITY;
    let mut big: f64 = 0.0;
    let mut finite = true;
    for x in &pts {
        let m = a.eval(x);
        let mut dm = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                sym = sym.max((m[i][j] - m[j][i]).abs());
                dm[(i, j)] = 0.5 * (m[i][j] + m[j][i]);
                finite &= m[i][j].is_finite();
            }
        }
        if !finite {
            break;
        }
        let eig = dm.symmetric_eigenvalues();
        lam = lam.min(eig.min());
        big = big.max(eig.max());
    }
    checks.push(HypothesisCheck {
        name: "symmetry".into(),
        pass: finite && sym <= NORMALIZATION_TOL,
        worst: sym,
        detail: "max |a_ij - a_ji| over samples".into(),
    });
    checks.push(HypothesisCheck {
        name: "ellipticity".into(),
        pass: finite && lam > 0.0,
        worst: lam,
        detail: format!("sampled eigenvalue range [{lam}, {big}]"),
    });

    let a0 = a.eval(&[0.0; 3]);
    let mut norm0: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            norm0 = norm0.max((a0[i][j] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    checks.push(HypothesisCheck {
        name: "identity_at_origin".into(),
        pass: norm0 <= NORMALIZATION_TOL,
        worst: norm0,
        detail: "max |a_ij(0) - delta_ij|".into(),
    });

    let mut tang: f64 = 0.0;
    for x in &slab_pts {
        let m = a.eval(x);
        for i in 0..n - 1 {
            tang = tang.max(m[i][n - 1].abs()).max(m[n - 1][i].abs());
        }
    }
    checks.push(HypothesisCheck {
        name: "boundary_normalization".into(),
        pass: tang <= NORMALIZATION_TOL,
        worst: tang,
        detail: "max |a^{in}(x',0)| for i < n".into(),
    });

    let mut kmin = f64::INFINITY;
    for x in &slab_pts {
        kmin = kmin.min(spec.k_plus_at(x)).min(spec.k_minus_at(x));
    }
    checks.push(HypothesisCheck {
        name: "penalties_nonnegative".into(),
        pass: kmin >= 0.0,
        worst: kmin,
        detail: "min of k+ and k- on the slab".into(),
    });
    checks.push(HypothesisCheck {
        name: "exponent".into(),
        pass: spec.p >= 2.0 && spec.p.is_finite(),
        worst: spec.p,
        detail: "p >= 2".into(),
    });
    checks.push(HypothesisCheck {
        name: "kappa".into(),
        pass: spec.kappa >= 1,
        worst: spec.kappa as f64,
        detail: "kappa >= 1".into(),
    });

    let lip = sampled_lipschitz(a, 1000, 0x11b);
    checks.push(HypothesisCheck {
        name: "lipschitz_bound".into(),
        pass: lip <= a.lipschitz_bound * (1.0 + 1e-9) + 1e-12,
        worst: lip,
        detail: format!("declared {}", a.lipschitz_bound),
    });

    ValidationReport {
        checks,
        lambda: lam,
        big_lambda: big,
        sampled_lipschitz: lip,
    }
}

/// Sampled Lipschitz constant of `k₊` and `k₋` along the slab.
pub fn penalty_lipschitz(spec: &ProblemSpec, samples: usize) -> f64 {
    if spec.penalties_constant() {
        return 0.0;
    }
    let n = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e7);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = sample_points(n, 1, true, &mut rng)[0];
        let mut y = x;
        for ya in y.iter_mut().take(n - 1) {
            *ya = (*ya + rng.gen_range(-0.05..0.05)).clamp(-1.0, 1.0);
        }
        let d: f64 = (0..n).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt();
        if d < 1e-9 {
            continue;
        }
        worst = worst
            .max((spec.k_plus_at(&x) - spec.k_plus_at(&y)).abs() / d)
            .max((spec.k_minus_at(&x) - spec.k_minus_at(&y)).abs() / d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_spec(entry: &str, lip: f64) -> ProblemSpec {
        let grid = Grid::new(2, 17).unwrap();
        ProblemConfig::identity(2)
            .with_coefficients(&[&[entry, "0"], &["0", "1"]], lip)
            .build(&grid)
            .unwrap()
    }

    #[test]
    fn identity_validates() {
        let grid = Grid::new(2, 17).unwrap();
        let spec = ProblemConfig::identity(2).build(&grid).unwrap();
        let r = validate_spec(&spec);
        assert!(r.passed(), "{:?}", r.failures());
        assert_eq!(r.lambda, 1.0);
        assert_eq!(r.big_lambda, 1.0);
    }

    #[test]
    fn variable_diagonal_bounds() {
        let spec = diag_spec("1 + x1^2", 2.0);
        let r = validate_spec(&spec);
        assert!(r.passed(), "{:?}", r.failures());
        assert!((r.lambda - 1.0).abs() < 1e-12);
        assert!((r.big_lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_normalization_violation() {
        let grid = Grid::new(2, 17).unwrap();
        let spec = ProblemConfig::identity(2)
            .with_coefficients(&[&["1", "0.1*x1"], &["0.1*x1", "1"]], 1.0)
            .build(&grid)
            .unwrap();
        let r = validate_spec(&spec);
        assert!(!r.check("boundary_normalization").unwrap().pass);
    }

    #[test]
    fn mu_and_b() {
        let spec = diag_spec("1 + x1^2", 2.0);
        assert_eq!(mu_at(&spec.a, &[1.0, 0.0, 0.0]), 2.0);
        assert_eq!(mu_at(&spec.a, &[0.0, 1.0, 0.0]), 1.0);
        assert_eq!(mu_at(&spec.a, &[0.0, 0.0, 0.0]), 1.0);
        let b = b_at(&spec.a, &[0.5, 0.0, 0.0]);
        assert_eq!(b[0][0], 0.25);
        assert_eq!(b[0][1], 0.0);
        assert_eq!(b[1][1], 0.0);
    }

    #[test]
    fn div_b_closed_form() {
        let spec = diag_spec("1 + x1^2", 2.0);
        let rho = 0.3;
        let v = div_b_radial(&spec.a, &[rho, 0.0, 0.0], 1e-3).unwrap();
        assert!((v - 2.0 * rho).abs() < 1e-14);
        let fd = div_b_fd(&spec.a, &[rho, 0.0, 0.0], 1e-4);
        assert!((fd - 2.0 * rho).abs() < 1e-6);
        assert!(div_b_radial(&spec.a, &[0.0; 3], 1e-3).is_err());
        let id = CoefficientField::identity(3);
        assert_eq!(div_b_radial(&id, &[0.1, 0.2, 0.3], 1e-3).unwrap(), 0.0);
    }
}
