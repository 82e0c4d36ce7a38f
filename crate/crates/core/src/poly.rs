//! Dense multivariate polynomials truncated at a fixed total degree.
//!
//! The same type serves two roles: exact polynomials (the obstacle extension,
//! tangent polynomials) and truncated Taylor jets used to differentiate
//! expression trees.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Point;

/// Multi-index of a monomial. Entries past `dim` are zero.
pub type MultiIndex = [u8; 3];

/// Graded enumeration of all monomials of total degree ≤ `order` in `dim`
/// variables, with a dense lookup table.
#[derive(Debug)]
pub struct MonomialSet {
    dim: usize,
    order: usize,
    exps: Vec<MultiIndex>,
    lut: Vec<u32>,
}

impl MonomialSet {
    fn build(dim: usize, order: usize) -> Self {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        let side = order + 1;
        let mut exps = Vec::new();
        for deg in 0..=order {
            match dim {
                1 => exps.push([deg as u8, 0, 0]),
                2 => {
                    for a in (0..=deg).rev() {
                        exps.push([a as u8, (deg - a) as u8, 0]);
                    }
                }
                _ => {
                    for a in (0..=deg).rev() {
                        for b in (0..=deg - a).rev() {
                            exps.push([a as u8, b as u8, (deg - a - b) as u8]);
                        }
                    }
                }
            }
        }
        let mut lut = vec![u32::MAX; side.pow(3)];
        for (k, e) in exps.iter().enumerate() {
            lut[Self::key(side, e)] = k as u32;
        }
        MonomialSet {
            dim,
            order,
            exps,
            lut,
        }
    }

    fn key(side: usize, e: &MultiIndex) -> usize {
        (e[0] as usize * side + e[1] as usize) * side + e[2] as usize
    }

    /// Shared instance for `(dim, order)`.
    pub fn get(dim: usize, order: usize) -> Arc<MonomialSet> {
        #[allow(clippy::type_complexity)]
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialSet>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("monomial cache poisoned");
        guard
            .entry((dim, order))
            .or_insert_with(|| Arc::new(MonomialSet::build(dim, order)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[MultiIndex] {
        &self.exps
    }

    /// Position of `e`, or `None` when its degree exceeds the order.
    pub fn index_of(&self, e: &MultiIndex) -> Option<usize> {
        let deg = degree_of(e);
        if deg > self.order {
            return None;
        }
        let idx = self.lut[Self::key(self.order + 1, e)];
        (idx != u32::MAX).then_some(idx as usize)
    }
}

pub fn degree_of(e: &MultiIndex) -> usize {
    e.iter().map(|&a| a as usize).sum()
}

/// Polynomial in `dim` variables holding every coefficient up to `order`.
#[derive(Clone)]
pub struct Polynomial {
    basis: Arc<MonomialSet>,
    coeffs: Vec<f64>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial(dim={}, ", self.dim())?;
        let terms: Vec<_> = self.terms().collect();
        f.debug_list().entries(terms).finish()?;
        write!(f, ")")
    }
}

impl Polynomial {
    pub fn zero(dim: usize, order: usize) -> Self {
        let basis = MonomialSet::get(dim, order);
        let coeffs = vec![0.0; basis.len()];
        Polynomial { basis, coeffs }
    }

    pub fn constant(dim: usize, order: usize, value: f64) -> Self {
        let mut p = Self::zero(dim, order);
        p.coeffs[0] = value;
        p
    }

    /// `offset + x_axis`.
    pub fn variable(dim: usize, order: usize, axis: usize, offset: f64) -> Self {
        let mut p = Self::constant(dim, order, offset);
        if order >= 1 {
            let mut e = [0u8; 3];
            e[axis] = 1;
            p.set(&e, 1.0);
        }
        p
    }

    pub fn monomial(dim: usize, order: usize, e: &MultiIndex, c: f64) -> Self {
        let mut p = Self::zero(dim, order);
        p.set(e, c);
        p
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn basis(&self) -> &MonomialSet {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, e: &MultiIndex) -> f64 {
        self.basis.index_of(e).map_or(0.0, |k| self.coeffs[k])
    }

    /// Panics when `e` exceeds the order.
    pub fn set(&mut self, e: &MultiIndex, c: f64) {
        let k = self
            .basis
            .index_of(e)
            .expect("multi-index exceeds polynomial order");
        self.coeffs[k] = c;
    }

    pub fn add_to(&mut self, e: &MultiIndex, c: f64) {
        let k = self
            .basis
            .index_of(e)
            .expect("multi-index exceeds polynomial order");
        self.coeffs[k] += c;
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    /// Largest total degree carrying a non-zero coefficient; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.basis
            .exps
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| degree_of(e))
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Non-zero `(multi-index, coefficient)` pairs in graded order.
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.basis
            .exps
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| (*e, *c))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Re-express with a different order, dropping terms above it.
    pub fn with_order(&self, order: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim(), order);
        for (e, c) in self.terms() {
            if degree_of(&e) <= order {
                out.set(&e, c);
            }
        }
        out
    }

    /// Drop all terms with total degree above `degree`, keeping the order.
    pub fn truncated(&self, degree: usize) -> Polynomial {
        let mut out = self.clone();
        for (k, e) in self.basis.exps.iter().enumerate() {
            if degree_of(e) > degree {
                out.coeffs[k] = 0.0;
            }
        }
        out
    }

    /// Keep only the terms of exact total degree `degree`.
    pub fn homogeneous_part(&self, degree: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim(), self.order());
        for (k, e) in self.basis.exps.iter().enumerate() {
            if degree_of(e) == degree {
                out.coeffs[k] = self.coeffs[k];
            }
        }
        out
    }

    fn check_compat(&self, other: &Polynomial) {
        assert_eq!(self.dim(), other.dim(), "polynomial dimension mismatch");
        assert_eq!(self.order(), other.order(), "polynomial order mismatch");
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.check_compat(other);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.check_compat(other);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= *b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn add_constant(&self, s: f64) -> Polynomial {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Product truncated at the common order.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        self.check_compat(other);
        let order = self.order();
        let mut out = Polynomial::zero(self.dim(), order);
        let exps = &self.basis.exps;
        for (i, a) in self.coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let ei = exps[i];
            let di = degree_of(&ei);
            for (j, b) in other.coeffs.iter().enumerate() {
                if *b == 0.0 {
                    continue;
                }
                let ej = exps[j];
                if di + degree_of(&ej) > order {
                    // graded ordering: every later j has degree >= this one
                    break;
                }
                let e = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
                let k = self.basis.index_of(&e).expect("product index in range");
                out.coeffs[k] += a * b;
            }
        }
        out
    }

    /// `sum_k series[k] * t^k` with `t = self - self(0)`, truncated at the order.
    pub fn compose_series(&self, series: &[f64]) -> Polynomial {
        let mut t = self.clone();
        t.coeffs[0] = 0.0;
        let mut out = Polynomial::constant(self.dim(), self.order(), 0.0);
        // Horner
        for c in series.iter().rev() {
            out = out.mul(&t).add_constant(*c);
        }
        out
    }

    /// Multiplicative inverse as a truncated series about the constant term.
    pub fn recip(&self) -> Option<Polynomial> {
        let c0 = self.coeffs[0];
        if c0 == 0.0 {
            return None;
        }
        let series: Vec<f64> = (0..=self.order())
            .map(|k| (-1.0f64).powi(k as i32) / c0.powi(k as i32 + 1))
            .collect();
        Some(self.compose_series(&series))
    }

    /// Partial derivative along `axis`, same order (top-degree terms vanish).
    pub fn derivative(&self, axis: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim(), self.order());
        for (e, c) in self.terms() {
            if e[axis] == 0 {
                continue;
            }
            let mut d = e;
            d[axis] -= 1;
            out.add_to(&d, c * e[axis] as f64);
        }
        out
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let dim = self.dim();
        let order = self.order();
        let mut pows = [[1.0f64; 24]; 3];
        for a in 0..dim {
            for k in 1..=order.min(23) {
                pows[a][k] = pows[a][k - 1] * x[a];
            }
        }
        self.basis
            .exps
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| {
                c * pows[0][e[0] as usize] * pows[1][e[1] as usize] * pows[2][e[2] as usize]
            })
            .sum()
    }

    pub fn gradient(&self, x: &Point) -> Point {
        let mut g = [0.0; 3];
        for (a, slot) in g.iter_mut().enumerate().take(self.dim()) {
            *slot = self.derivative(a).eval(x);
        }
        g
    }

    /// Substitute `x_axis = 0`.
    pub fn restrict_axis_zero(&self, axis: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim(), self.order());
        for (e, c) in self.terms() {
            if e[axis] == 0 {
                out.add_to(&e, c);
            }
        }
        out
    }

    /// Coefficient of `x_axis^k`, as a polynomial in the remaining variables.
    pub fn slice_power(&self, axis: usize, k: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim(), self.order());
        for (e, c) in self.terms() {
            if e[axis] as usize == k {
                let mut r = e;
                r[axis] = 0;
                out.add_to(&r, c);
            }
        }
        out
    }

    /// Multiply by `x_axis^k` (terms pushed past the order are dropped).
    pub fn shift_power(&self, axis: usize, k: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim(), self.order());
        for (e, c) in self.terms() {
            let mut r = e;
            r[axis] += k as u8;
            if degree_of(&r) <= self.order() {
                out.add_to(&r, c);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Polynomial) -> f64 {
        let order = self.order().max(other.order());
        let a = self.with_order(order);
        let b = other.with_order(order);
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }
}

#[derive(Serialize, Deserialize)]
struct Term(Vec<u8>, f64);

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = self.dim();
        let terms: Vec<Term> = self
            .terms()
            .map(|(e, c)| Term(e[..dim].to_vec(), c))
            .collect();
        terms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<Term>::deserialize(d)?;
        let dim = terms.first().map_or(1, |t| t.0.len());
        if !(1..=3).contains(&dim) || terms.iter().any(|t| t.0.len() != dim) {
            return Err(D::Error::custom("inconsistent multi-index lengths"));
        }
        let order = terms
            .iter()
            .map(|t| t.0.iter().map(|&a| a as usize).sum::<usize>())
            .max()
            .unwrap_or(0);
        let mut p = Polynomial::zero(dim, order);
        for t in terms {
            let mut e = [0u8; 3];
            e[..dim].copy_from_slice(&t.0);
            p.add_to(&e, t.1);
        }
        Ok(p)
    }
}

/// `n!` as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
