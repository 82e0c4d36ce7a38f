//! Almgren-type frequency quantities `H, I, D, G, K, Φ`, the Weiss and Monneau
//! functionals, and their monotonicity checks on a ladder of radii.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{div_b_radial, pow_p, CoefficientField, FieldEval};
use crate::geometry::{angular_count_for, disk_with, halfball_with, hemisphere_quadrature};
use crate::poly::Polynomial;
use crate::taylor::NormalizedProblem;
use crate::Point;

/// Largest radius any diagnostic may use.
pub const RHO_MAX: f64 = 0.9;

/// Right-hand side `f` of the normalized equation.
pub trait Forcing: Sync {
    fn at(&self, x: &Point) -> f64;
}

impl<F: Fn(&Point) -> f64 + Sync> Forcing for F {
    fn at(&self, x: &Point) -> f64 {
        self(x)
    }
}

impl Forcing for NormalizedProblem {
    fn at(&self, x: &Point) -> f64 {
        self.forcing(x)
    }
}

/// Decreasing radii with a resolution floor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusLadder {
    pub rho: Vec<f64>,
    pub floor: f64,
}

impl RadiusLadder {
    /// `ρ_k = rho_max · 2^{−k/4}` for as long as `ρ_k ≥ floor`, at most
    /// `max_rungs` rungs.
    pub fn geometric(rho_max: f64, floor: f64, max_rungs: Option<usize>) -> Result<RadiusLadder> {
        if !(rho_max > 0.0 && rho_max <= RHO_MAX) {
            return Err(Error::Domain(format!("ladder top {rho_max} outside (0, {RHO_MAX}]")));
        }
        if rho_max < floor {
            return Err(Error::BelowResolution { rho: rho_max, floor });
        }
        let cap = max_rungs.unwrap_or(usize::MAX);
        let rho: Vec<f64> = (0..)
            .map(|k| rho_max * 2f64.powf(-(k as f64) / 4.0))
            .take_while(|&r| r >= floor)
            .take(cap)
            .collect();
        Ok(RadiusLadder { rho, floor })
    }

    pub fn from_values(rho: Vec<f64>, floor: f64) -> Result<RadiusLadder> {
        if rho.is_empty() {
            return Err(Error::Domain("empty ladder".into()));
        }
        for w in rho.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Domain("ladder must be strictly decreasing".into()));
            }
        }
        if rho[0] > RHO_MAX {
            return Err(Error::Domain(format!("ladder top {} exceeds {RHO_MAX}", rho[0])));
        }
        let last = *rho.last().unwrap();
        if last < floor {
            return Err(Error::BelowResolution { rho: last, floor });
        }
        Ok(RadiusLadder { rho, floor })
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn smallest(&self) -> f64 {
        *self.rho.last().expect("nonempty ladder")
    }
}

/// Everything the functionals need: `v`, `A`, `k±`, `p`, `κ` and `f`, all in
/// the coordinates where the base point is the origin.
#[derive(Clone)]
pub struct DiagnosticInput<'a> {
    pub v: &'a dyn FieldEval,
    /// The same `v` built from a grid of twice the spacing, for the
    /// discretization part of the identity budget.
    pub coarse: Option<&'a dyn FieldEval>,
    pub a: CoefficientField,
    pub k_plus: Expr,
    pub k_minus: Expr,
    pub p: f64,
    pub kappa: usize,
    pub forcing: Option<&'a dyn Forcing>,
    /// Grid spacing; the resolution floor is four times this.
    pub spacing: f64,
    pub f_growth: f64,
    pub penalty_lipschitz: f64,
}

impl<'a> DiagnosticInput<'a> {
    /// `A = I`, `k ≡ 0`, `f ≡ 0`, `p = 2`.
    pub fn model(v: &'a dyn FieldEval, spacing: f64, kappa: usize) -> DiagnosticInput<'a> {
        let dim = v.dim();
        DiagnosticInput {
            v,
            coarse: None,
            a: CoefficientField::identity(dim),
            k_plus: Expr::Num(0.0),
            k_minus: Expr::Num(0.0),
            p: 2.0,
            kappa,
            forcing: None,
            spacing,
            f_growth: 0.0,
            penalty_lipschitz: 0.0,
        }
    }

    pub fn from_normalized(np: &'a NormalizedProblem, coarse: Option<&'a NormalizedProblem>) -> DiagnosticInput<'a> {
        DiagnosticInput {
            v: np,
            coarse: coarse.map(|c| c as &dyn FieldEval),
            a: np.a.clone(),
            k_plus: np.k_plus.clone(),
            k_minus: np.k_minus.clone(),
            p: np.p,
            kappa: np.kappa,
            forcing: if np.forcing_vanishes() { None } else { Some(np as &dyn Forcing) },
            spacing: np.spacing,
            f_growth: np.f_growth.constant,
            penalty_lipschitz: np.penalty_lipschitz,
        }
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    pub fn floor(&self) -> f64 {
        4.0 * self.spacing
    }

    fn penalties_vanish(&self) -> bool {
        self.k_plus.constant_value() == Some(0.0) && self.k_minus.constant_value() == Some(0.0)
    }

    /// Engineering proxy for the constants of the monotonicity theorems: zero
    /// in the model case, otherwise `10·(Lip A + C_f + Lip k)`.
    pub fn slack_constant(&self) -> f64 {
        let model = self.a.is_constant()
            && self.forcing.is_none()
            && self.k_plus.constant_value().is_some()
            && self.k_minus.constant_value().is_some();
        if model {
            0.0
        } else {
            10.0 * (self.a.lipschitz_bound() + self.f_growth + self.penalty_lipschitz)
        }
    }

    fn check_radius(&self, rho: f64) -> Result<()> {
        if rho > RHO_MAX {
            return Err(Error::Domain(format!("radius {rho} exceeds {RHO_MAX}")));
        }
        if rho < self.floor() * (1.0 - 1e-12) {
            return Err(Error::BelowResolution { rho, floor: self.floor() });
        }
        Ok(())
    }
}

/// A polynomial compared against `v` in the Monneau functional.
#[derive(Clone, Debug, Serialize)]
pub struct TangentRef {
    pub label: String,
    pub nu: f64,
    pub poly: Polynomial,
}

#[derive(Clone, Debug, Serialize)]
pub struct Series {
    pub label: String,
    pub nu: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ProfileOptions {
    pub weiss_nu: Vec<f64>,
    pub tangents: Vec<TangentRef>,
    pub slack_override: Option<f64>,
    pub identity_budget: bool,
    /// Trapezoid sub-intervals per ladder gap when integrating `G`.
    pub g_substeps: usize,
    /// Compute the half-ball and disk integrals (`D`, growth, identity);
    /// without them those columns are NaN.
    pub volume: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            weiss_nu: Vec::new(),
            tangents: Vec::new(),
            slack_override: None,
            identity_budget: true,
            g_substeps: 8,
            volume: true,
        }
    }
}

/// Per-rung values of every functional.
#[derive(Clone, Debug, Serialize)]
pub struct FrequencyProfile {
    pub dim: usize,
    pub ladder: RadiusLadder,
    pub h: Vec<f64>,
    pub i: Vec<f64>,
    pub d: Vec<f64>,
    pub g: Vec<f64>,
    pub k: Vec<f64>,
    pub k_low: Vec<f64>,
    pub k_high: Vec<f64>,
    pub phi: Vec<f64>,
    /// `true` where `K ≤ ρ^{2κ}` and `Φ = κ`.
    pub truncated: Vec<bool>,
    pub weiss: Vec<Series>,
    pub monneau: Vec<Series>,
    /// `ρ^{−n} ∫_{B_ρ^+} v²`.
    pub l2_growth: Vec<f64>,
    /// `sup_{(∂B_ρ)^+} |v|` over the hemisphere nodes.
    pub sup_abs: Vec<f64>,
    /// `D − I + ρ^{2−n}∫vf + ((p−2)/p) ρ^{2−n}∫_{B′} k|v|^p`.
    pub identity_residual: Vec<f64>,
    pub identity_budget: Vec<f64>,
    pub kappa: usize,
    pub slack_constant: f64,
    /// The slack is the engineering proxy rather than a proven constant.
    pub slack_is_proxy: bool,
    pub g_bound: f64,
}

struct Hemi {
    h: f64,
    i: f64,
    gnum: f64,
    sup: f64,
    monneau: Vec<f64>,
}

fn hemisphere_terms(
    inp: &DiagnosticInput,
    field: &dyn FieldEval,
    rho: f64,
    angular: usize,
    tangents: &[TangentRef],
    need_gradient: bool,
) -> Result<Hemi> {
    let n = inp.dim();
    let rule = hemisphere_quadrature(n, rho, angular)?;
    let identity = inp.a.is_identity();
    let mut out = Hemi {
        h: 0.0,
        i: 0.0,
        gnum: 0.0,
        sup: 0.0,
        monneau: vec![0.0; tangents.len()],
    };
    for (x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = field.value(x)?;
        let (mu, m, divb) = if identity {
            (1.0, None, 0.0)
        } else {
            let m = inp.a.eval(x);
            let mut mu = 0.0;
            for i in 0..n {
                for j in 0..n {
                    mu += m[i][j] * x[i] * x[j];
                }
            }
            mu /= rho * rho;
            (mu, Some(m), div_b_radial(&inp.a, x, inp.spacing / 4.0)?)
        };
        out.h += w * mu * v * v;
        out.sup = out.sup.max(v.abs());
        if need_gradient {
            let g = field.gradient(x)?;
            let mut flux = 0.0;
            for i in 0..n {
                let ag = match &m {
                    Some(m) => (0..n).map(|j| m[i][j] * g[j]).sum::<f64>(),
                    None => g[i],
                };
                flux += ag * x[i] / rho;
            }
            out.i += w * v * flux;
        }
        if !identity {
            out.gnum += w * v * v * ((1.0 - n as f64) * (mu - 1.0) / rho + divb);
        }
        for (t, acc) in tangents.iter().zip(out.monneau.iter_mut()) {
            let d = v - t.poly.eval(x);
            *acc += w * d * d * mu;
        }
    }
    Ok(out)
}

struct Vol {
    energy: f64,
    vf: f64,
    l2: f64,
}

fn volume_terms(inp: &DiagnosticInput, field: &dyn FieldEval, rho: f64, intervals: usize, angular: usize) -> Result<Vol> {
    let n = inp.dim();
    let rule = halfball_with(n, rho, intervals, angular)?;
    let identity = inp.a.is_identity();
    let mut out = Vol {
        energy: 0.0,
        vf: 0.0,
        l2: 0.0,
    };
    for (x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = field.value(x)?;
        let g = field.gradient(x)?;
        let e = if identity {
            g[..n].iter().map(|t| t * t).sum::<f64>()
        } else {
            let m = inp.a.eval(x);
            let mut e = 0.0;
            for i in 0..n {
                for j in 0..n {
                    e += m[i][j] * g[i] * g[j];
                }
            }
            e
        };
        out.energy += w * e;
        out.l2 += w * v * v;
        if let Some(f) = inp.forcing {
            out.vf += w * v * f.at(x);
        }
    }
    Ok(out)
}

fn disk_term(inp: &DiagnosticInput, field: &dyn FieldEval, rho: f64, count: usize) -> Result<f64> {
    if inp.penalties_vanish() {
        return Ok(0.0);
    }
    let rule = disk_with(inp.dim(), rho, count)?;
    let mut s = 0.0;
    for (x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = field.value(x)?;
        let k = if v > 0.0 { inp.k_plus.eval(x) } else { inp.k_minus.eval(x) };
        s += w * k * pow_p(v.abs(), inp.p);
    }
    Ok(s)
}

fn radial_intervals(rho: f64, h: f64) -> usize {
    let n = 16usize.max((2.0 * rho / h).ceil() as usize);
    n + n % 2
}

struct Resolution {
    angular: usize,
    intervals: usize,
}

impl Resolution {
    fn fine(rho: f64, h: f64) -> Resolution {
        Resolution {
            angular: angular_count_for(rho, h),
            intervals: radial_intervals(rho, h),
        }
    }

    fn coarse(rho: f64, h: f64) -> Resolution {
        let f = Resolution::fine(rho, h);
        let half = f.intervals / 2;
        Resolution {
            angular: (f.angular / 2).max(16),
            intervals: (half + half % 2).max(2),
        }
    }
}

/// `D`, `I` and the identity residual from one field at one resolution.
fn identity_terms(inp: &DiagnosticInput, field: &dyn FieldEval, rho: f64, res: &Resolution) -> Result<(f64, f64, f64, f64)> {
    let n = inp.dim() as i32;
    let hemi = hemisphere_terms(inp, field, rho, res.angular, &[], true)?;
    let vol = volume_terms(inp, field, rho, res.intervals, res.angular)?;
    let kt = disk_term(inp, field, rho, res.angular)?;
    let s = rho.powi(2 - n);
    let i = s * hemi.i;
    let d = s * (vol.energy + 2.0 / inp.p * kt);
    let resid = d - i + s * vol.vf + (inp.p - 2.0) / inp.p * s * kt;
    let scale = d.abs() + i.abs() + s * vol.vf.abs() + s * kt;
    Ok((d, i, resid, scale))
}

/// `H(ρ) = ρ^{1−n} ∫_{(∂B_ρ)^+} μ v²`.
pub fn compute_h(inp: &DiagnosticInput, rho: f64) -> Result<f64> {
    inp.check_radius(rho)?;
    let hemi = hemisphere_terms(inp, inp.v, rho, angular_count_for(rho, inp.spacing), &[], false)?;
    Ok(rho.powi(1 - inp.dim() as i32) * hemi.h)
}

/// `I(ρ) = ρ^{2−n} ∫_{(∂B_ρ)^+} a^{ij} v D_i v x_j/ρ`.
pub fn compute_i(inp: &DiagnosticInput, rho: f64) -> Result<f64> {
    inp.check_radius(rho)?;
    let hemi = hemisphere_terms(inp, inp.v, rho, angular_count_for(rho, inp.spacing), &[], true)?;
    Ok(rho.powi(2 - inp.dim() as i32) * hemi.i)
}

/// `D(ρ) = ρ^{2−n} ∫_{B_ρ^+} a^{ij} D_i v D_j v + (2/p) ρ^{2−n} ∫_{B′_ρ} k₊(v⁺)^p + k₋(v⁻)^p`.
pub fn compute_d(inp: &DiagnosticInput, rho: f64) -> Result<f64> {
    inp.check_radius(rho)?;
    let res = Resolution::fine(rho, inp.spacing);
    let vol = volume_terms(inp, inp.v, rho, res.intervals, res.angular)?;
    let kt = disk_term(inp, inp.v, rho, res.angular)?;
    Ok(rho.powi(2 - inp.dim() as i32) * (vol.energy + 2.0 / inp.p * kt))
}

/// `G(ρ)`, zero when `H(ρ) = 0`.
pub fn compute_g(inp: &DiagnosticInput, rho: f64) -> Result<f64> {
    inp.check_radius(rho)?;
    if inp.a.is_identity() {
        return Ok(0.0);
    }
    let hemi = hemisphere_terms(inp, inp.v, rho, angular_count_for(rho, inp.spacing), &[], false)?;
    Ok(if hemi.h > 0.0 { hemi.gnum / hemi.h } else { 0.0 })
}

/// `𝒲_ν(ρ) = ρ^{−2ν}(I(ρ) − ν H(ρ))`.
pub fn compute_weiss(inp: &DiagnosticInput, rho: f64, nu: f64) -> Result<f64> {
    inp.check_radius(rho)?;
    let n = inp.dim() as i32;
    let hemi = hemisphere_terms(inp, inp.v, rho, angular_count_for(rho, inp.spacing), &[], true)?;
    let h = rho.powi(1 - n) * hemi.h;
    let i = rho.powi(2 - n) * hemi.i;
    Ok(rho.powf(-2.0 * nu) * (i - nu * h))
}

/// `𝓜(ρ) = ρ^{1−n−2ν} ∫_{(∂B_ρ)^+} (v − p_ν)² μ`.
pub fn compute_monneau(inp: &DiagnosticInput, rho: f64, tangent: &Polynomial, nu: f64) -> Result<f64> {
    inp.check_radius(rho)?;
    let t = [TangentRef {
        label: String::new(),
        nu,
        poly: tangent.clone(),
    }];
    let hemi = hemisphere_terms(inp, inp.v, rho, angular_count_for(rho, inp.spacing), &t, false)?;
    Ok(rho.powf(1.0 - inp.dim() as f64 - 2.0 * nu) * hemi.monneau[0])
}

/// `Φ = I/H` where `K > ρ^{2κ}`, else `κ`; the flag marks truncation.
pub fn phi_from(h: f64, i: f64, k: f64, rho: f64, kappa: usize) -> Result<(f64, bool)> {
    if k > rho.powi(2 * kappa as i32) {
        if h <= 0.0 {
            return Err(Error::Inconsistent(format!("K({rho}) = {k} above truncation with H = 0")));
        }
        Ok((i / h, false))
    } else {
        Ok((kappa as f64, true))
    }
}

struct Rung {
    h: f64,
    i: f64,
    d: f64,
    gnum: f64,
    sup: f64,
    monneau: Vec<f64>,
    l2: f64,
    resid: f64,
    budget: f64,
}

fn rung(inp: &DiagnosticInput, rho: f64, opts: &ProfileOptions) -> Result<Rung> {
    inp.check_radius(rho)?;
    let n = inp.dim() as i32;
    let fine = Resolution::fine(rho, inp.spacing);
    let hemi = hemisphere_terms(inp, inp.v, rho, fine.angular, &opts.tangents, true)?;
    let s = rho.powi(2 - n);
    let i = s * hemi.i;
    let monneau = opts
        .tangents
        .iter()
        .zip(&hemi.monneau)
        .map(|(t, m)| rho.powf(1.0 - n as f64 - 2.0 * t.nu) * m)
        .collect();
    if !opts.volume {
        return Ok(Rung {
            h: rho.powi(1 - n) * hemi.h,
            i,
            d: f64::NAN,
            gnum: rho.powi(1 - n) * hemi.gnum,
            sup: hemi.sup,
            monneau,
            l2: f64::NAN,
            resid: f64::NAN,
            budget: f64::NAN,
        });
    }
    let vol = volume_terms(inp, inp.v, rho, fine.intervals, fine.angular)?;
    let kt = disk_term(inp, inp.v, rho, fine.angular)?;
    let d = s * (vol.energy + 2.0 / inp.p * kt);
    let resid = d - i + s * vol.vf + (inp.p - 2.0) / inp.p * s * kt;
    let scale = d.abs() + i.abs() + s * vol.vf.abs() + s * kt;
    let budget = if opts.identity_budget {
        let (_, _, r_quad, _) = identity_terms(inp, inp.v, rho, &Resolution::coarse(rho, inp.spacing))?;
        let e_quad = (resid - r_quad).abs();
        let e_interp = match inp.coarse {
            Some(c) => (resid - identity_terms(inp, c, rho, &fine)?.2).abs(),
            None => 0.0,
        };
        10.0 * (e_quad + e_interp) + 1e-10 * scale + 1e-14
    } else {
        f64::NAN
    };
    Ok(Rung {
        h: rho.powi(1 - n) * hemi.h,
        i,
        d,
        gnum: rho.powi(1 - n) * hemi.gnum,
        sup: hemi.sup,
        monneau,
        l2: rho.powi(-n) * vol.l2,
        resid,
        budget,
    })
}

/// All functionals on every rung of the ladder. Rungs are evaluated in
/// parallel on the current rayon pool and collected in ladder order.
pub fn profile(inp: &DiagnosticInput, ladder: &RadiusLadder, opts: &ProfileOptions) -> Result<FrequencyProfile> {
    if ladder.floor < inp.floor() * (1.0 - 1e-12) {
        return Err(Error::BelowResolution {
            rho: ladder.floor,
            floor: inp.floor(),
        });
    }
    let rungs: Vec<Rung> = ladder
        .rho
        .par_iter()
        .map(|&r| rung(inp, r, opts))
        .collect::<Result<_>>()?;
    let h: Vec<f64> = rungs.iter().map(|r| r.h).collect();
    let i: Vec<f64> = rungs.iter().map(|r| r.i).collect();
    let g: Vec<f64> = rungs
        .iter()
        .map(|r| if r.h > 0.0 { r.gnum / r.h } else { 0.0 })
        .collect();
    let (k, k_low, k_high, g_bound) = integrate_k(inp, ladder, &h, &g, opts.g_substeps)?;
    let mut phi = Vec::with_capacity(h.len());
    let mut truncated = Vec::with_capacity(h.len());
    for (idx, &rho) in ladder.rho.iter().enumerate() {
        let (p, t) = phi_from(h[idx], i[idx], k[idx], rho, inp.kappa)?;
        phi.push(p);
        truncated.push(t);
    }
    let weiss = opts
        .weiss_nu
        .iter()
        .map(|&nu| Series {
            label: format!("W_{nu}"),
            nu,
            values: ladder
                .rho
                .iter()
                .enumerate()
                .map(|(idx, &rho)| rho.powf(-2.0 * nu) * (i[idx] - nu * h[idx]))
                .collect(),
        })
        .collect();
    let monneau = opts
        .tangents
        .iter()
        .enumerate()
        .map(|(t, tr)| Series {
            label: tr.label.clone(),
            nu: tr.nu,
            values: rungs.iter().map(|r| r.monneau[t]).collect(),
        })
        .collect();
    let slack = opts.slack_override.unwrap_or_else(|| inp.slack_constant());
    Ok(FrequencyProfile {
        dim: inp.dim(),
        ladder: ladder.clone(),
        d: rungs.iter().map(|r| r.d).collect(),
        l2_growth: rungs.iter().map(|r| r.l2).collect(),
        sup_abs: rungs.iter().map(|r| r.sup).collect(),
        identity_residual: rungs.iter().map(|r| r.resid).collect(),
        identity_budget: rungs.iter().map(|r| r.budget).collect(),
        h,
        i,
        g,
        k,
        k_low,
        k_high,
        phi,
        truncated,
        weiss,
        monneau,
        kappa: inp.kappa,
        slack_constant: slack,
        slack_is_proxy: opts.slack_override.is_none() && slack > 0.0,
        g_bound,
    })
}

type KParts = (Vec<f64>, Vec<f64>, Vec<f64>, f64);

/// `K(ρ) = H(ρ) exp(−∫_0^ρ G)` by the trapezoid rule on a subdivision of the
/// ladder; the unresolved tail below the smallest rung is estimated by
/// `G(ρ_min)·ρ_min` with an uncertainty band of `±C_G·ρ_min`.
fn integrate_k(inp: &DiagnosticInput, ladder: &RadiusLadder, h: &[f64], g: &[f64], substeps: usize) -> Result<KParts> {
    if inp.a.is_identity() {
        return Ok((h.to_vec(), h.to_vec(), h.to_vec(), 0.0));
    }
    let m = ladder.len();
    let sub = substeps.max(1);
    // ascending radii and the interior sub-radii of each gap
    let mut interior = Vec::new();
    for idx in (1..m).rev() {
        let (a, b) = (ladder.rho[idx], ladder.rho[idx - 1]);
        for s in 1..sub {
            interior.push(a + (b - a) * s as f64 / sub as f64);
        }
    }
    let g_inner: Vec<f64> = interior
        .par_iter()
        .map(|&r| compute_g(inp, r))
        .collect::<Result<_>>()?;
    let mut cumulative = vec![0.0; m];
    let mut acc = 0.0;
    let mut cursor = 0;
    for idx in (1..m).rev() {
        let (a, b) = (ladder.rho[idx], ladder.rho[idx - 1]);
        let dr = (b - a) / sub as f64;
        let mut prev = g[idx];
        for _ in 1..sub {
            let cur = g_inner[cursor];
            cursor += 1;
            acc += 0.5 * dr * (prev + cur);
            prev = cur;
        }
        acc += 0.5 * dr * (prev + g[idx - 1]);
        cumulative[idx - 1] = acc;
    }
    let bound = 2.0 * g.iter().chain(&g_inner).fold(0.0f64, |s, v| s.max(v.abs()));
    let rmin = ladder.smallest();
    let tail = g[m - 1] * rmin;
    let band = bound * rmin;
    let mut k = Vec::with_capacity(m);
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    for idx in 0..m {
        let e = cumulative[idx] + tail;
        k.push(h[idx] * (-e).exp());
        lo.push(h[idx] * (-e - band).exp());
        hi.push(h[idx] * (-e + band).exp());
    }
    Ok((k, lo, hi, bound))
}

/// Worst violation of `s(σ) ≤ s(ρ) + slack·(ρ−σ) + tol` over rung pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub pass: bool,
    pub worst_violation: f64,
    /// `(σ, ρ)` achieving the worst violation.
    pub worst_pair: Option<(f64, f64)>,
    pub slack: f64,
    pub tol: f64,
}

pub fn check_almost_monotone(series: &[f64], ladder: &[f64], slack: f64, tol: f64) -> MonotoneReport {
    let mut worst = f64::NEG_INFINITY;
    let mut pair = None;
    for a in 0..ladder.len() {
        for b in 0..ladder.len() {
            let (rho, sigma) = (ladder[a], ladder[b]);
            if sigma >= rho || series[a].is_nan() || series[b].is_nan() {
                continue;
            }
            let v = series[b] - series[a] - slack * (rho - sigma);
            if v > worst {
                worst = v;
                pair = Some((sigma, rho));
            }
        }
    }
    MonotoneReport {
        pass: worst <= tol,
        worst_violation: worst.max(0.0),
        worst_pair: pair,
        slack,
        tol,
    }
}

impl FrequencyProfile {
    pub fn len(&self) -> usize {
        self.ladder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ladder.is_empty()
    }

    /// `e^{Cρ} Φ(ρ) + C e^C ρ`.
    pub fn almgren_series(&self, c: f64) -> Vec<f64> {
        self.ladder
            .rho
            .iter()
            .zip(&self.phi)
            .map(|(&r, &p)| (c * r).exp() * p + c * c.exp() * r)
            .collect()
    }

    fn plus_linear(&self, values: &[f64], c: f64) -> Vec<f64> {
        self.ladder.rho.iter().zip(values).map(|(&r, &v)| v + c * r).collect()
    }

    /// `𝒲_ν(ρ) + Cρ` for the `idx`-th Weiss exponent.
    pub fn weiss_series(&self, idx: usize, c: f64) -> Vec<f64> {
        self.plus_linear(&self.weiss[idx].values, c)
    }

    /// `𝓜(ρ) + Cρ` for the `idx`-th tangent.
    pub fn monneau_series(&self, idx: usize, c: f64) -> Vec<f64> {
        self.plus_linear(&self.monneau[idx].values, c)
    }

    /// Rungs whose identity residual exceeds the budget.
    pub fn identity_failures(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| !(self.identity_residual[k].abs() <= self.identity_budget[k]))
            .collect()
    }

    /// CSV with header `rho,H,I,D,G,K,Phi,W_nu,M`, 17 significant digits; the
    /// last two columns hold the first Weiss and Monneau series when present.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,H,I,D,G,K,Phi,W_nu,M\n");
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for k in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                cell(Some(self.ladder.rho[k])),
                cell(Some(self.h[k])),
                cell(Some(self.i[k])),
                cell(Some(self.d[k])),
                cell(Some(self.g[k])),
                cell(Some(self.k[k])),
                cell(Some(self.phi[k])),
                cell(self.weiss.first().map(|s| s.values[k])),
                cell(self.monneau.first().map(|s| s.values[k])),
            );
        }
        out
    }
}

/// Least-squares slope of `log(ρ^{−n}∫v²)` against `log ρ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub slope: f64,
    pub expected: f64,
    pub band: f64,
    /// Largest deviation of the data from the fitted line in log units.
    pub fit_deviation: f64,
    pub pass: bool,
}

pub fn growth_rate_check(profile: &FrequencyProfile, nu: f64, band: f64) -> GrowthReport {
    let pts: Vec<(f64, f64)> = profile
        .ladder
        .rho
        .iter()
        .zip(&profile.l2_growth)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&r, &v)| (r.ln(), v.ln()))
        .collect();
    let (slope, intercept) = linear_fit(&pts);
    let dev = pts
        .iter()
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    let expected = 2.0 * nu;
    GrowthReport {
        slope,
        expected,
        band,
        fit_deviation: dev,
        pass: (slope - expected).abs() <= band,
    }
}

/// Ordinary least-squares line `y = a x + b`; `(0, mean)` when degenerate.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let a = sxy / sxx;
    (a, my - a * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::{even_harmonic_polynomial, AnalyticField};
    use std::f64::consts::PI;

    const H: f64 = 2.0 / 128.0;

    fn poly_field(src: &str) -> AnalyticField {
        let e = Expr::parse(src, 2, "v").unwrap();
        AnalyticField::from_polynomial(e.taylor(&[0.0; 3], 2, 6).unwrap(), src)
    }

    #[test]
    fn closed_forms() {
        let one = poly_field("1");
        let inp = DiagnosticInput::model(&one, H, 2);
        assert!((compute_h(&inp, 0.5).unwrap() - PI).abs() < 1e-10);
        assert_eq!(compute_i(&inp, 0.5).unwrap(), 0.0);
        assert_eq!(compute_d(&inp, 0.5).unwrap(), 0.0);
        let x1 = poly_field("x1");
        let inp = DiagnosticInput::model(&x1, H, 2);
        let rho: f64 = 0.5;
        assert!((compute_h(&inp, rho).unwrap() - PI * rho * rho / 2.0).abs() < 1e-10);
        assert!((compute_i(&inp, rho).unwrap() - PI * rho * rho / 2.0).abs() < 1e-10);
        assert!((compute_d(&inp, rho).unwrap() - PI * rho * rho / 2.0).abs() < 1e-6);
        let w2 = compute_weiss(&inp, rho, 2.0).unwrap();
        assert!((w2 + PI / (2.0 * rho * rho)).abs() < 1e-8);
        let q = poly_field("x1^2 - x2^2");
        let inp = DiagnosticInput::model(&q, H, 2);
        assert!((compute_h(&inp, 0.5).unwrap() - 0.5f64.powi(4) * PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn monneau_closed_form() {
        let eps = 0.01;
        let v = poly_field("x1^2 - x2^2 + 0.01*x1");
        let inp = DiagnosticInput::model(&v, H, 3);
        let p2 = Expr::parse("x1^2 - x2^2", 2, "p").unwrap().taylor(&[0.0; 3], 2, 2).unwrap();
        for rho in [0.2, 0.5, 0.8] {
            let m = compute_monneau(&inp, rho, &p2, 2.0).unwrap();
            assert!((m - eps * eps * PI / 2.0 / (rho * rho)).abs() < 1e-10);
        }
    }

    #[test]
    fn below_floor_rejected() {
        let one = poly_field("1");
        let inp = DiagnosticInput::model(&one, 0.1, 2);
        assert!(matches!(compute_h(&inp, 0.2), Err(Error::BelowResolution { .. })));
    }

    #[test]
    fn monotone_checks() {
        let ladder = [0.8, 0.4, 0.2, 0.1];
        assert!(check_almost_monotone(&[1.0; 4], &ladder, 0.0, 1e-3).pass);
        assert!(check_almost_monotone(&[4.0, 3.0, 2.0, 1.0], &ladder, 0.0, 1e-3).pass);
        let r = check_almost_monotone(&[4.0, 3.0, 3.01, 1.0], &ladder, 1e-3, 1e-3);
        assert!(!r.pass);
        assert_eq!(r.worst_pair, Some((0.2, 0.4)));
    }

    #[test]
    fn homogeneous_profile() {
        let v = even_harmonic_polynomial(2, 2).unwrap();
        let inp = DiagnosticInput::model(&v, H, 3);
        let ladder = RadiusLadder::geometric(0.9, 8.0 * H, None).unwrap();
        let opts = ProfileOptions {
            weiss_nu: vec![2.0],
            ..Default::default()
        };
        let prof = profile(&inp, &ladder, &opts).unwrap();
        for k in 0..prof.len() {
            assert!((prof.phi[k] - 2.0).abs() < 1e-3);
            assert!(prof.weiss[0].values[k].abs() < 1e-5);
            assert!(prof.identity_residual[k].abs() <= prof.identity_budget[k]);
        }
        let g = growth_rate_check(&prof, 2.0, 0.1);
        assert!(g.pass, "{g:?}");
        assert!(prof.to_csv().starts_with("rho,H,I,D,G,K,Phi,W_nu,M\n"));
    }
}
