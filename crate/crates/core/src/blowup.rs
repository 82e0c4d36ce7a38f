//! Rescalings at a free-boundary point, the frequency estimate, the tangent
//! homogeneous polynomial and its invariant subspace.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::{compute_h, linear_fit, DiagnosticInput, FrequencyProfile, RadiusLadder};
use crate::error::{Error, Result};
use crate::fields::{mu_at, Matrix3, ScalarField};
use crate::geometry::{angular_count_for, hemisphere_quadrature, Grid};
use crate::poly::{degree_of, MonomialSet, MultiIndex, Polynomial};
use crate::Point;

/// Relative singular-value threshold below which a direction counts as an
/// invariant of the tangent.
pub const INVARIANT_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RescaleMode {
    /// `v(ρx) / H(ρ)^{1/2}`.
    Almgren,
    /// `v(ρx) / ρ^ν`.
    Homogeneous { nu: f64 },
}

#[derive(Clone, Debug)]
pub struct Rescaling {
    pub base_point: Point,
    pub rho: f64,
    pub mode: RescaleMode,
    /// Samples on a unit half-cube window.
    pub field: ScalarField,
    pub scale: f64,
}

impl Rescaling {
    /// `∫_{(∂B_1)^+} μ(ρy) v_ρ(y)²`, which is 1 in Almgren mode.
    pub fn hemisphere_normalization(&self, inp: &DiagnosticInput) -> Result<f64> {
        let n = self.field.grid().dim();
        let rule = hemisphere_quadrature(n, 1.0, angular_count_for(1.0, self.field.grid().spacing()))?;
        rule.try_integrate(|y| {
            let mut x = [0.0; 3];
            for i in 0..n {
                x[i] = self.rho * y[i];
            }
            let v = self.field.interpolate(y)?;
            Ok(mu_at(&inp.a, &x) * v * v)
        })
    }
}

/// Rescale `v` around the origin of its coordinates (the base point) onto a
/// window grid with `cells` cells per lateral axis.
pub fn rescale(inp: &DiagnosticInput, base_point: Point, rho: f64, mode: RescaleMode, cells: usize) -> Result<Rescaling> {
    let scale = match mode {
        RescaleMode::Almgren => {
            let h = compute_h(inp, rho)?;
            if h <= 0.0 {
                return Err(Error::Degenerate(format!("H({rho}) = 0, Almgren rescaling undefined")));
            }
            h.sqrt()
        }
        RescaleMode::Homogeneous { nu } => rho.powf(nu),
    };
    let grid = Grid::new(inp.dim(), cells)?;
    let n = inp.dim();
    let mut values = Vec::with_capacity(grid.node_count());
    for idx in 0..grid.node_count() {
        let y = grid.node(idx);
        let mut x = [0.0; 3];
        for i in 0..n {
            x[i] = rho * y[i];
        }
        values.push(inp.v.value(&x)? / scale);
    }
    Ok(Rescaling {
        base_point,
        rho,
        mode,
        field: ScalarField::new(grid, values)?,
        scale,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyEstimate {
    pub nu_hat: f64,
    pub nu_int: usize,
    pub confidence: f64,
    /// `Φ = κ` on the small rungs: the frequency is at least `κ` and the
    /// estimate carries no further information.
    pub truncation_limited: bool,
    pub rungs_used: Vec<f64>,
}

/// Extrapolate `Φ` to `0⁺` by a `1/ρ`-weighted line through the smallest four
/// untruncated rungs.
pub fn estimate_frequency(profile: &FrequencyProfile) -> Result<FrequencyEstimate> {
    let m = profile.len();
    if m < 6 {
        return Err(Error::Degenerate(format!("frequency estimate needs 6 rungs, profile has {m}")));
    }
    let kappa = profile.kappa;
    let small: Vec<usize> = (m - 4..m).collect();
    if small.iter().all(|&k| profile.truncated[k]) {
        return Ok(FrequencyEstimate {
            nu_hat: kappa as f64,
            nu_int: kappa,
            confidence: 0.0,
            truncation_limited: true,
            rungs_used: Vec::new(),
        });
    }
    let used: Vec<usize> = (0..m).rev().filter(|&k| !profile.truncated[k]).take(4).collect();
    let nu_hat = if used.len() == 1 {
        profile.phi[used[0]]
    } else {
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &k in &used {
            let (r, p) = (profile.ladder.rho[k], profile.phi[k]);
            let w = 1.0 / r;
            sw += w;
            sx += w * r;
            sy += w * p;
            sxx += w * r * r;
            sxy += w * r * p;
        }
        let det = sw * sxx - sx * sx;
        if det.abs() < 1e-300 {
            sy / sw
        } else {
            (sxx * sy - sx * sxy) / det
        }
    };
    let nu_int = (nu_hat.round().max(1.0)) as usize;
    Ok(FrequencyEstimate {
        nu_hat,
        nu_int,
        confidence: (1.0 - 2.0 * (nu_hat - nu_int as f64).abs()).clamp(0.0, 1.0),
        truncation_limited: false,
        rungs_used: used.iter().map(|&k| profile.ladder.rho[k]).collect(),
    })
}

/// Lower bound `sup |v| ≥ c ρ^ν` on the smallest rungs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Nondegeneracy {
    pub fitted_c: f64,
    /// Log-log slope of `sup|v|/ρ^ν` against `ρ`; positive means `v` decays
    /// faster than `ρ^ν`.
    pub slope: f64,
    pub flagged: bool,
}

/// Even degree-`ν` homogeneous polynomial annihilated by `a^{ij}(x0) D_ij`.
#[derive(Clone, Debug, Serialize)]
pub struct TangentPolynomial {
    pub nu: usize,
    #[serde(rename = "d")]
    pub invariant_dim: usize,
    pub invariant_basis: Vec<Vec<f64>>,
    pub coefficients: Polynomial,
    pub even_in_xn: bool,
    pub harmonic_residual: f64,
    /// Relative root-mean-square misfit of the fit.
    pub fit_residual: f64,
    pub monneau: Vec<f64>,
    pub monneau_nonincreasing: bool,
    pub nondegeneracy: Nondegeneracy,
}

impl TangentPolynomial {
    pub fn dim(&self) -> usize {
        self.coefficients.dim()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.coefficients.eval(x)
    }
}

/// Monomials of degree `ν` with even `x_n` exponent.
fn even_monomials(dim: usize, nu: usize) -> Vec<MultiIndex> {
    MonomialSet::get(dim, nu)
        .exponents()
        .iter()
        .filter(|e| degree_of(e) == nu && e[dim - 1] % 2 == 0)
        .copied()
        .collect()
}

fn second_order(a0: &Matrix3, p: &Polynomial) -> Polynomial {
    let n = p.dim();
    let mut out = Polynomial::zero(n, p.order());
    for i in 0..n {
        for j in 0..n {
            if a0[i][j] != 0.0 {
                out = out.add(&p.derivative(i).derivative(j).scale(a0[i][j]));
            }
        }
    }
    out
}

/// Orthonormal basis (columns) of the null space of `m`, by SVD with the
/// relative threshold `tol`.
fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // pad so the SVD yields a full set of right singular vectors
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..cols)
        .filter(|&k| svd.singular_values[k] <= tol * smax.max(1e-300))
        .collect();
    let mut out = DMatrix::zeros(cols, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        for r in 0..cols {
            out[(r, c)] = vt[(k, r)];
        }
    }
    out
}

/// Basis polynomials of the even, degree-`ν`, `a0`-harmonic homogeneous space.
pub fn tangent_basis(dim: usize, nu: usize, a0: &Matrix3) -> Vec<Polynomial> {
    let mons = even_monomials(dim, nu);
    let polys: Vec<Polynomial> = mons
        .iter()
        .map(|e| Polynomial::monomial(dim, nu, e, 1.0))
        .collect();
    if nu < 2 {
        return polys;
    }
    let images: Vec<Polynomial> = polys.iter().map(|p| second_order(a0, p)).collect();
    let target = MonomialSet::get(dim, nu);
    let rows = target.len();
    let m = DMatrix::from_fn(rows, polys.len(), |r, c| images[c].coefficients()[r]);
    let ns = null_space(&m, 1e-12);
    (0..ns.ncols())
        .map(|c| {
            let mut p = Polynomial::zero(dim, nu);
            for (k, q) in polys.iter().enumerate() {
                p = p.add(&q.scale(ns[(k, c)]));
            }
            p
        })
        .collect()
}

/// Least-squares tangent of `v` at the origin of its coordinates, from
/// `ρ^{−ν} v(ρ·)` on the hemispheres of the smallest three rungs.
pub fn fit_tangent(inp: &DiagnosticInput, a0: &Matrix3, nu: usize, ladder: &RadiusLadder) -> Result<TangentPolynomial> {
    if nu < 1 {
        return Err(Error::Validation("tangent degree must be at least 1".into()));
    }
    let n = inp.dim();
    let basis = tangent_basis(n, nu, a0);
    if basis.is_empty() {
        return Err(Error::Degenerate(format!("no even a0-harmonic polynomials of degree {nu}")));
    }
    let m = ladder.len();
    let rungs: Vec<f64> = ladder.rho[m.saturating_sub(3)..].to_vec();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut sups = Vec::new();
    let mut samples = Vec::new();
    for &rho in &rungs {
        let rule = hemisphere_quadrature(n, rho, angular_count_for(rho, inp.spacing))?;
        let total = rule.total_weight();
        let mut sup: f64 = 0.0;
        for (x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = inp.v.value(x)?;
            sup = sup.max(v.abs());
            let sw = (w / total).sqrt();
            let mut omega = [0.0; 3];
            for i in 0..n {
                omega[i] = x[i] / rho;
            }
            rows.push(basis.iter().map(|b| sw * b.eval(&omega)).collect());
            rhs.push(sw * v / rho.powi(nu as i32));
            samples.push((*x, rho, w, v));
        }
        sups.push(sup);
    }
    let a = DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]);
    let b = DVector::from_vec(rhs.clone());
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(Error::Degenerate(format!("rank-deficient tangent basis for degree {nu}")));
    }
    let c = svd
        .solve(&b, 1e-14 * smax)
        .map_err(|e| Error::Linear(e.to_string()))?;
    let mut poly = Polynomial::zero(n, nu);
    for (k, q) in basis.iter().enumerate() {
        poly = poly.add(&q.scale(c[k]));
    }
    for (e, v) in poly.clone().terms() {
        if v.abs() < 1e-15 {
            poly.set(&e, 0.0);
        }
    }
    let resid = &a * &c - &b;
    let fit_residual = resid.norm() / b.norm().max(1e-300);
    let hess = second_order(a0, &poly);
    let harmonic_residual = samples
        .iter()
        .map(|(x, ..)| hess.eval(x).abs())
        .fold(0.0, f64::max);
    // Monneau against the fit on the fitted rungs
    let mut monneau = vec![0.0; rungs.len()];
    for (x, rho, w, v) in &samples {
        let k = rungs.iter().position(|r| r == rho).unwrap();
        let d = v - poly.eval(x);
        monneau[k] += w * d * d * mu_at(&inp.a, x);
    }
    for (k, &rho) in rungs.iter().enumerate() {
        monneau[k] *= rho.powf(1.0 - n as f64 - 2.0 * nu as f64);
    }
    let mono_tol = 1e-3 * monneau.iter().cloned().fold(0.0, f64::max) + 1e-12;
    let monneau_nonincreasing = monneau.windows(2).all(|w| w[1] <= w[0] + mono_tol);
    let nondegeneracy = nondegeneracy_from(&rungs, &sups, nu);
    // a vanishing fit is already flagged and has no meaningful subspace
    let (invariant_dim, invariant_basis) = if poly.is_zero() {
        (0, Vec::new())
    } else {
        invariant_subspace_of(&poly)?
    };
    Ok(TangentPolynomial {
        nu,
        invariant_dim,
        invariant_basis,
        coefficients: poly,
        even_in_xn: true,
        harmonic_residual,
        fit_residual,
        monneau,
        monneau_nonincreasing,
        nondegeneracy,
    })
}

/// `c = min sup|v|/ρ^ν` over the given rungs; flagged when `c` vanishes
/// relative to the data or the ratio decays like `ρ^{1/2}` or faster.
pub fn nondegeneracy_from(rungs: &[f64], sups: &[f64], nu: usize) -> Nondegeneracy {
    let ratios: Vec<f64> = rungs
        .iter()
        .zip(sups)
        .map(|(r, s)| s / r.powi(nu as i32))
        .collect();
    let c = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = sups.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = rungs
        .iter()
        .zip(&ratios)
        .filter(|(_, &q)| q > 0.0)
        .map(|(r, q)| (r.ln(), q.ln()))
        .collect();
    let slope = if pts.len() >= 2 { linear_fit(&pts).0 } else { f64::NAN };
    let flagged = !(c > 1e-6 * scale.max(1e-300)) || !(slope < 0.5);
    Nondegeneracy {
        fitted_c: c,
        slope,
        flagged,
    }
}

fn invariant_subspace_of(p: &Polynomial) -> Result<(usize, Vec<Vec<f64>>)> {
    let n = p.dim();
    let nu = p.order();
    let target = MonomialSet::get(n, nu);
    let derivs: Vec<Polynomial> = (0..n - 1).map(|j| p.derivative(j)).collect();
    let m = DMatrix::from_fn(target.len(), n - 1, |r, c| derivs[c].coefficients()[r]);
    let ns = null_space(&m, INVARIANT_TOL);
    let dim = ns.ncols();
    if dim > n.saturating_sub(2) {
        return Err(Error::Inconsistent(format!(
            "invariant subspace of dimension {dim} exceeds n - 2 = {}",
            n as i64 - 2
        )));
    }
    let basis = (0..dim)
        .map(|c| {
            let mut z = vec![0.0; n];
            for r in 0..n - 1 {
                z[r] = ns[(r, c)];
            }
            z
        })
        .collect();
    Ok((dim, basis))
}

/// `S(v*) = {z ∈ ℝ^{n−1}×{0} : z·∇v* ≡ 0}` as a dimension and an orthonormal
/// basis.
pub fn invariant_subspace(t: &TangentPolynomial) -> Result<(usize, Vec<Vec<f64>>)> {
    invariant_subspace_of(&t.coefficients)
}

/// Euclidean distance between coefficient vectors, across degrees.
pub fn coefficient_distance(a: &Polynomial, b: &Polynomial) -> f64 {
    let order = a.order().max(b.order());
    let (a, b) = (a.with_order(order), b.with_order(order));
    a.coefficients()
        .iter()
        .zip(b.coefficients())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    /// `(|x − y|, ‖v*_x − v*_y‖)` for every pair.
    pub pairs: Vec<(f64, f64)>,
    /// Monotone envelope `ω(δ) = max{‖v*_x − v*_y‖ : |x − y| ≤ δ}` at each
    /// observed distance.
    pub envelope: Vec<(f64, f64)>,
}

pub fn tangent_continuity_report(points: &[Point], tangents: &[TangentPolynomial]) -> Result<ContinuityReport> {
    if points.len() < 2 || points.len() != tangents.len() {
        return Err(Error::Degenerate("continuity report needs two or more points with tangents".into()));
    }
    let mut pairs = Vec::new();
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d = (0..3).map(|i| (points[a][i] - points[b][i]).powi(2)).sum::<f64>().sqrt();
            pairs.push((d, coefficient_distance(&tangents[a].coefficients, &tangents[b].coefficients)));
        }
    }
    let mut sorted = pairs.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut envelope = Vec::new();
    let mut running: f64 = 0.0;
    for (d, c) in sorted {
        running = running.max(c);
        envelope.push((d, running));
    }
    Ok(ContinuityReport { pairs, envelope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::DiagnosticInput;
    use crate::manufactured::{even_harmonic_poly, AnalyticField};

    const I3: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    const H: f64 = 2.0 / 128.0;

    #[test]
    fn basis_dimensions() {
        // n = 2: one even harmonic per degree
        for nu in 1..=4 {
            assert_eq!(tangent_basis(2, nu, &I3).len(), 1);
        }
        // n = 3, degree 2: x1², x1x2, x2², x3² minus one constraint
        assert_eq!(tangent_basis(3, 2, &I3).len(), 3);
    }

    #[test]
    fn exact_fit_and_subspace() {
        let v = AnalyticField::from_polynomial(even_harmonic_poly(2, 2), "q");
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.9, 4.0 * H, None).unwrap();
        let t = fit_tangent(&inp, &I3, 2, &ladder).unwrap();
        assert!((t.coefficients.coeff(&[2, 0, 0]) - 1.0).abs() < 1e-8);
        assert!((t.coefficients.coeff(&[0, 2, 0]) + 1.0).abs() < 1e-8);
        assert!(t.fit_residual < 1e-8);
        assert_eq!(t.invariant_dim, 0);
        assert!(!t.nondegeneracy.flagged);

        let v3 = AnalyticField::from_polynomial(even_harmonic_poly(3, 2), "q3");
        let inp = DiagnosticInput::model(&v3, H, 3);
        let t = fit_tangent(&inp, &I3, 2, &ladder).unwrap();
        assert_eq!(t.invariant_dim, 1);
        assert!((t.invariant_basis[0][1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_field_flagged() {
        let v = AnalyticField::new(2, |_| 0.0, |_| [0.0; 3], "0", "analytic");
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.9, 4.0 * H, None).unwrap();
        let t = fit_tangent(&inp, &I3, 2, &ladder).unwrap();
        assert!(t.nondegeneracy.flagged);
        assert!(matches!(
            rescale(&inp, [0.0; 3], 0.5, RescaleMode::Almgren, 33),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn full_rank_gradient_gives_no_invariants() {
        let mut p = Polynomial::zero(3, 2);
        p.set(&[2, 0, 0], 1.0);
        p.set(&[0, 2, 0], 1.0);
        p.set(&[0, 0, 2], -2.0);
        assert_eq!(invariant_subspace_of(&p).unwrap().0, 0);
    }

    #[test]
    fn rescalings() {
        let v = AnalyticField::from_polynomial(even_harmonic_poly(2, 1), "x1");
        let inp = DiagnosticInput::model(&v, H, 2);
        let r = rescale(&inp, [0.0; 3], 0.5, RescaleMode::Homogeneous { nu: 1.0 }, 33).unwrap();
        for (i, val) in r.field.values().iter().enumerate() {
            assert!((val - r.field.grid().node(i)[0]).abs() < 1e-15);
        }
        let r = rescale(&inp, [0.0; 3], 0.5, RescaleMode::Almgren, 65).unwrap();
        assert!((r.hemisphere_normalization(&inp).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn continuity_envelope() {
        let mut a = Polynomial::zero(2, 2);
        a.set(&[2, 0, 0], 1.0);
        let mut b = a.clone();
        b.set(&[2, 0, 0], 1.1);
        let mk = |p: Polynomial| TangentPolynomial {
            nu: 2,
            invariant_dim: 0,
            invariant_basis: vec![],
            coefficients: p,
            even_in_xn: true,
            harmonic_residual: 0.0,
            fit_residual: 0.0,
            monneau: vec![],
            monneau_nonincreasing: true,
            nondegeneracy: Nondegeneracy {
                fitted_c: 1.0,
                slope: 0.0,
                flagged: false,
            },
        };
        let rep = tangent_continuity_report(&[[0.0; 3], [0.2, 0.0, 0.0]], &[mk(a.clone()), mk(b)]).unwrap();
        assert!((rep.envelope[0].1 - 0.1).abs() < 1e-12);
        let rep = tangent_continuity_report(&[[0.0; 3], [0.2, 0.0, 0.0]], &[mk(a.clone()), mk(a)]).unwrap();
        assert_eq!(rep.envelope[0].1, 0.0);
    }
}
