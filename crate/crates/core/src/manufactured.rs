//! Closed-form reference fields.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{FieldEval, ProblemSpec};
use crate::poly::Polynomial;
use crate::Point;

type ValueFn = dyn Fn(&Point) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Point) -> Point + Send + Sync;

/// A field with an exact value rule and an exact gradient rule.
#[derive(Clone)]
pub struct AnalyticField {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
    pub description: String,
    pub regularity_tag: String,
}

impl fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticField")
            .field("dim", &self.dim)
            .field("description", &self.description)
            .field("regularity_tag", &self.regularity_tag)
            .finish()
    }
}

impl AnalyticField {
    pub fn new(
        dim: usize,
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Point) -> Point + Send + Sync + 'static,
        description: impl Into<String>,
        regularity_tag: impl Into<String>,
    ) -> AnalyticField {
        AnalyticField {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            description: description.into(),
            regularity_tag: regularity_tag.into(),
        }
    }

    pub fn from_polynomial(p: Polynomial, description: impl Into<String>) -> AnalyticField {
        let dim = p.dim();
        let grads: Vec<Polynomial> = (0..dim).map(|i| p.derivative(i)).collect();
        AnalyticField::new(
            dim,
            move |x| p.eval(x),
            move |x| {
                let mut g = [0.0; 3];
                for (i, d) in grads.iter().enumerate() {
                    g[i] = d.eval(x);
                }
                g
            },
            description,
            "polynomial",
        )
    }

    pub fn eval(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Point) -> Point {
        (self.gradient)(x)
    }

    /// `c · self`.
    pub fn scaled(&self, c: f64) -> AnalyticField {
        let a = self.clone();
        let b = self.clone();
        AnalyticField::new(
            self.dim,
            move |x| c * a.eval(x),
            move |x| {
                let g = b.grad(x);
                [c * g[0], c * g[1], c * g[2]]
            },
            format!("{c} * ({})", self.description),
            self.regularity_tag.clone(),
        )
    }

    /// `self + other`.
    pub fn plus(&self, other: &AnalyticField) -> AnalyticField {
        let (a, b) = (self.clone(), other.clone());
        let (c, d) = (self.clone(), other.clone());
        AnalyticField::new(
            self.dim,
            move |x| a.eval(x) + b.eval(x),
            move |x| {
                let (g, h) = (c.grad(x), d.grad(x));
                [g[0] + h[0], g[1] + h[1], g[2] + h[2]]
            },
            format!("{} + {}", self.description, other.description),
            self.regularity_tag.clone(),
        )
    }

    /// Largest deviation between the gradient rule and centred differences
    /// of the value rule at `samples` random points of the open half-ball of
    /// radius 0.9.
    pub fn gradient_consistency(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim;
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        let mut taken = 0;
        while taken < samples {
            let mut x = [0.0; 3];
            for c in x.iter_mut().take(n - 1) {
                *c = rng.gen_range(-0.9..0.9);
            }
            x[n - 1] = rng.gen_range(0.05..0.9);
            if x.iter().map(|t| t * t).sum::<f64>() > 0.81 {
                continue;
            }
            taken += 1;
            let g = self.grad(&x);
            for (i, gi) in g.iter().enumerate().take(n) {
                let mut p = x;
                let mut q = x;
                p[i] += step;
                q[i] -= step;
                let fd = (self.eval(&p) - self.eval(&q)) / (2.0 * step);
                worst = worst.max((fd - gi).abs() / (1.0 + gi.abs()));
            }
        }
        worst
    }
}

impl FieldEval for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> Result<f64> {
        Ok(self.eval(x))
    }

    fn gradient(&self, x: &Point) -> Result<Point> {
        Ok(self.grad(x))
    }

    fn spacing(&self) -> Option<f64> {
        None
    }
}

/// Polar form of `z = x_n + i x_1`: modulus and the principal argument in
/// `[−π/2, π/2]` on the closed upper half-space.
fn polar(x: &Point, dim: usize) -> (f64, f64) {
    let (x1, xn) = (x[0], x[dim - 1]);
    (x1.hypot(xn), x1.atan2(xn))
}

/// `w = Re((−i)^p κ₊ z^p (log z/(πp) − 1/(πp²) + i/(2p)))`, `z = x_n + i x_1`.
///
/// On the slab `D_n w = κ₊ (x_1⁺)^{p−1}`; `w` is `C^{p−1}` but its
/// `(p−1)`-th derivatives are not Lipschitz at the origin.
pub fn log_solution_w(dim: usize, p: u32, kappa_plus: f64) -> Result<AnalyticField> {
    if p < 2 {
        return Err(Error::Validation(format!("log solution needs p >= 2, got {p}")));
    }
    let pf = p as f64;
    let value = move |x: &Point| -> f64 {
        let (r, theta) = polar(x, dim);
        if r == 0.0 {
            return 0.0;
        }
        let phi = pf * (theta - FRAC_PI_2);
        let re = r.ln() / (PI * pf) - 1.0 / (PI * pf * pf);
        let im = theta / (PI * pf) + 1.0 / (2.0 * pf);
        kappa_plus * r.powi(p as i32) * (phi.cos() * re - phi.sin() * im)
    };
    let gradient = move |x: &Point| -> Point {
        let mut g = [0.0; 3];
        let (r, theta) = polar(x, dim);
        if r == 0.0 {
            return g;
        }
        // F'(z) = κ₊ (−i)^p z^{p−1} (log z/π + i/2)
        let psi = (pf - 1.0) * theta - pf * FRAC_PI_2;
        let q = r.ln() / PI;
        let s = theta / PI + 0.5;
        let m = kappa_plus * r.powi(p as i32 - 1);
        let re = m * (psi.cos() * q - psi.sin() * s);
        let im = m * (psi.sin() * q + psi.cos() * s);
        g[dim - 1] = re;
        g[0] = -im;
        g
    };
    Ok(AnalyticField::new(
        dim,
        value,
        gradient,
        format!("log solution w, p = {p}, kappa_plus = {kappa_plus}"),
        format!("C^{} but not C^{},1", p - 1, p - 1),
    ))
}

/// `Re(x_1 + i x_n)^ν` as a polynomial in `dim` variables.
pub fn even_harmonic_poly(dim: usize, nu: usize) -> Polynomial {
    let mut out = Polynomial::zero(dim, nu);
    // Re Σ C(ν,k) x1^{ν−k} (i x_n)^k keeps even k with sign (−1)^{k/2}
    let mut binom = 1.0;
    for k in 0..=nu {
        if k > 0 {
            binom = binom * (nu + 1 - k) as f64 / k as f64;
        }
        if k % 2 == 0 {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let mut e = [0u8; 3];
            e[0] = (nu - k) as u8;
            e[dim - 1] += k as u8;
            out.set(&e, sign * binom);
        }
    }
    out
}

/// `Re(x_1 + i x_n)^ν`: harmonic, homogeneous of degree `ν`, even in `x_n`.
pub fn even_harmonic_polynomial(dim: usize, nu: usize) -> Result<AnalyticField> {
    if nu < 1 {
        return Err(Error::Validation("harmonic degree must be at least 1".into()));
    }
    let mut f = AnalyticField::from_polynomial(even_harmonic_poly(dim, nu), format!("Re(x1 + i xn)^{nu}"));
    f.regularity_tag = "analytic".into();
    Ok(f)
}

/// `e^{x_1}(cos x_n + sin x_n)`: harmonic, with slab flux `D_n = e^{x_1}`.
pub fn smooth_harmonic(dim: usize) -> AnalyticField {
    AnalyticField::new(
        dim,
        move |x| x[0].exp() * (x[dim - 1].cos() + x[dim - 1].sin()),
        move |x| {
            let e = x[0].exp();
            let (c, s) = (x[dim - 1].cos(), x[dim - 1].sin());
            let mut g = [0.0; 3];
            g[0] = e * (c + s);
            g[dim - 1] = e * (c - s);
            g
        },
        "exp(x1) (cos xn + sin xn)",
        "analytic",
    )
}

/// `sup_{B_ρ^+} |w − T|/ρ^p` with `T` the degree-`(p−1)` Taylor polynomial of
/// `w` at the origin, which vanishes identically.
pub fn w_regularity_ratio(w: &AnalyticField, p: u32, rho: f64, samples: usize) -> f64 {
    let n = w.dim;
    let mut sup: f64 = 0.0;
    for i in 1..=samples {
        let r = rho * i as f64 / samples as f64;
        for j in 0..=samples {
            let theta = -FRAC_PI_2 + PI * j as f64 / samples as f64;
            let mut x = [0.0; 3];
            x[0] = r * theta.sin();
            x[n - 1] = r * theta.cos();
            sup = sup.max(w.eval(&x).abs());
        }
    }
    sup / rho.powi(p as i32)
}

/// Specs with `k₋` multiplied by `10^j` for `j = 0..=j_max`.
pub fn penalization_family(base: &ProblemSpec, j_max: u32) -> Vec<ProblemSpec> {
    (0..=j_max)
        .map(|j| {
            let mut s = base.clone();
            if j > 0 {
                s.k_minus = base.k_minus.scaled(10f64.powi(j as i32));
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w_slab_flux() {
        for p in [2, 3] {
            let w = log_solution_w(2, p, 1.0).unwrap();
            for i in 0..1000 {
                let x1 = -0.9 + 1.8 * (i as f64 + 0.5) / 1000.0;
                let dn = w.grad(&[x1, 0.0, 0.0])[1];
                let expect = x1.max(0.0).powi(p as i32 - 1);
                assert!((dn - expect).abs() < 1e-8, "p={p} x1={x1}: {dn} vs {expect}");
            }
        }
    }

    #[test]
    fn w_reference_value() {
        let w = log_solution_w(2, 2, 1.0).unwrap();
        assert!((w.eval(&[0.0, 1.0, 0.0]) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(w.eval(&[0.0; 3]), 0.0);
    }

    #[test]
    fn harmonic_polynomials() {
        let p2 = even_harmonic_poly(2, 2);
        assert_eq!(p2.coeff(&[2, 0, 0]), 1.0);
        assert_eq!(p2.coeff(&[0, 2, 0]), -1.0);
        let p1 = even_harmonic_poly(3, 1);
        assert_eq!(p1.coeff(&[1, 0, 0]), 1.0);
        let f3 = even_harmonic_polynomial(2, 3).unwrap();
        assert_eq!(f3.grad(&[0.3, 0.0, 0.0])[1], 0.0);
        let p4 = even_harmonic_poly(3, 4);
        let lap = p4.derivative(0).derivative(0).add(&p4.derivative(2).derivative(2));
        assert!(lap.is_zero());
    }

    #[test]
    fn gradients_consistent() {
        for f in [
            log_solution_w(2, 2, 1.0).unwrap(),
            log_solution_w(3, 3, 0.5).unwrap(),
            even_harmonic_polynomial(2, 3).unwrap(),
            smooth_harmonic(2),
        ] {
            assert!(f.gradient_consistency(100, 3) < 1e-6, "{}", f.description);
        }
    }
}
