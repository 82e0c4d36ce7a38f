//! Discrete energy minimization.
//!
//! The Dirichlet integral is discretized with multilinear (Q1) elements and a
//! 2-point Gauss rule per axis; the slab penalty uses lumped trapezoid weights.
//! The discrete energy is therefore exactly the objective being minimized, its
//! gradient is the tent-function weak residual, and its Hessian is SPD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{
    penalty, penalty_derivative, pow_p, validate_spec, CoefficientField, Matrix3, ProblemSpec,
    ScalarField,
};
use crate::geometry::Grid;
use crate::linalg::SpdFactor;
use crate::Point;

const GAUSS_OFFSET: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt(3)) / 2

/// Stiffness matrix stored as a `3^n`-point stencil per node.
#[derive(Clone, Debug)]
pub struct Stencil {
    grid: Grid,
    width: usize,
    deltas: Vec<[i64; 3]>,
    vals: Vec<f64>,
}

impl Stencil {
    fn new(grid: &Grid) -> Stencil {
        let dim = grid.dim();
        let width = 3usize.pow(dim as u32);
        let deltas = (0..width)
            .map(|o| {
                let mut d = [0i64; 3];
                let mut r = o;
                for da in d.iter_mut().take(dim) {
                    *da = (r % 3) as i64 - 1;
                    r /= 3;
                }
                d
            })
            .collect();
        Stencil {
            grid: grid.clone(),
            width,
            deltas,
            vals: vec![0.0; width * grid.node_count()],
        }
    }

    fn slot(&self, from: &[usize; 3], to: &[usize; 3]) -> usize {
        let mut o = 0;
        let mut mul = 1;
        for a in 0..self.grid.dim() {
            o += ((to[a] as i64 - from[a] as i64 + 1) as usize) * mul;
            mul *= 3;
        }
        o
    }

    fn neighbour(&self, mi: &[usize; 3], o: usize) -> [usize; 3] {
        let d = self.deltas[o];
        [
            (mi[0] as i64 + d[0]) as usize,
            (mi[1] as i64 + d[1]) as usize,
            (mi[2] as i64 + d[2]) as usize,
        ]
    }

    /// `(K w)_i` for node `i`.
    pub fn apply_row(&self, i: usize, w: &[f64]) -> f64 {
        let mi = self.grid.multi_index(i);
        let row = &self.vals[i * self.width..(i + 1) * self.width];
        let mut acc = 0.0;
        for (o, &k) in row.iter().enumerate() {
            if k != 0.0 {
                acc += k * w[self.grid.index(&self.neighbour(&mi, o))];
            }
        }
        acc
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        (0..self.grid.node_count()).map(|i| self.apply_row(i, w)).collect()
    }

    /// Nonzero `(node, neighbour, value)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let mi = self.grid.multi_index(i);
        self.vals[i * self.width..(i + 1) * self.width]
            .iter()
            .enumerate()
            .filter(|(_, k)| **k != 0.0)
            .map(move |(o, k)| (self.grid.index(&self.neighbour(&mi, o)), *k))
    }
}

/// Corner offsets of a cell, corner `c` has bit `a` set when shifted along axis `a`.
fn corner(cell: &[usize; 3], c: usize, dim: usize) -> [usize; 3] {
    let mut mi = *cell;
    for (a, m) in mi.iter_mut().enumerate().take(dim) {
        *m += (c >> a) & 1;
    }
    mi
}

/// Reference gradients of the Q1 shape functions at local point `t`, scaled by `1/h`.
fn shape_gradients(t: &[f64; 3], dim: usize, h: f64) -> Vec<Point> {
    (0..1usize << dim)
        .map(|c| {
            let mut g = [0.0; 3];
            for (a, ga) in g.iter_mut().enumerate().take(dim) {
                let mut v = if (c >> a) & 1 == 1 { 1.0 } else { -1.0 } / h;
                for b in 0..dim {
                    if b != a {
                        v *= if (c >> b) & 1 == 1 { t[b] } else { 1.0 - t[b] };
                    }
                }
                *ga = v;
            }
            g
        })
        .collect()
}

fn shape_values(t: &[f64; 3], dim: usize) -> Vec<f64> {
    (0..1usize << dim)
        .map(|c| {
            (0..dim)
                .map(|a| if (c >> a) & 1 == 1 { t[a] } else { 1.0 - t[a] })
                .product()
        })
        .collect()
}

fn gauss_points(dim: usize) -> Vec<[f64; 3]> {
    (0..1usize << dim)
        .map(|g| {
            let mut t = [0.0; 3];
            for (a, ta) in t.iter_mut().enumerate().take(dim) {
                *ta = if (g >> a) & 1 == 1 { 1.0 - GAUSS_OFFSET } else { GAUSS_OFFSET };
            }
            t
        })
        .collect()
}

fn cells(grid: &Grid) -> impl Iterator<Item = [usize; 3]> + '_ {
    let s = grid.shape();
    let dim = grid.dim();
    let ext = |a: usize| if a < dim { s[a] - 1 } else { 1 };
    let (e0, e1, e2) = (ext(0), ext(1), ext(2));
    (0..e0).flat_map(move |i| (0..e1).flat_map(move |j| (0..e2).map(move |k| [i, j, k])))
}

/// Local stiffness `∫_cell a^{ij} D_i φ_k D_j φ_l`.
fn element_matrix(a: &CoefficientField, grid: &Grid, cell: &[usize; 3], constant: Option<&Matrix3>) -> Vec<f64> {
    let dim = grid.dim();
    let h = grid.spacing();
    let nc = 1usize << dim;
    let weight = (h / 2.0).powi(dim as i32);
    let origin = grid.point_of(cell);
    let mut ke = vec![0.0; nc * nc];
    for t in gauss_points(dim) {
        let grads = shape_gradients(&t, dim, h);
        let m = match constant {
            Some(m) => *m,
            None => {
                let mut x = origin;
                for q in 0..dim {
                    x[q] += t[q] * h;
                }
                a.eval(&x)
            }
        };
        for k in 0..nc {
            let mut ag = [0.0; 3];
            for i in 0..dim {
                for j in 0..dim {
                    ag[i] += m[i][j] * grads[k][j];
                }
            }
            for l in 0..nc {
                let mut s = 0.0;
                for i in 0..dim {
                    s += ag[i] * grads[l][i];
                }
                ke[k * nc + l] += weight * s;
            }
        }
    }
    ke
}

fn assemble_stiffness(a: &CoefficientField, grid: &Grid) -> Stencil {
    let dim = grid.dim();
    let nc = 1usize << dim;
    let mut st = Stencil::new(grid);
    let constant = if a.is_constant() {
        Some(a.eval(&[0.0; 3]))
    } else {
        None
    };
    let shared = constant
        .as_ref()
        .map(|m| element_matrix(a, grid, &[0; 3], Some(m)));
    for cell in cells(grid) {
        let ke = match &shared {
            Some(k) => k.clone(),
            None => element_matrix(a, grid, &cell, None),
        };
        let corners: Vec<[usize; 3]> = (0..nc).map(|c| corner(&cell, c, dim)).collect();
        for k in 0..nc {
            let row = grid.index(&corners[k]);
            for l in 0..nc {
                let o = st.slot(&corners[k], &corners[l]);
                st.vals[row * st.width + o] += ke[k * nc + l];
            }
        }
    }
    st
}

/// Trapezoid weight of a slab node.
fn slab_weight(grid: &Grid, mi: &[usize; 3]) -> f64 {
    let h = grid.spacing();
    let m = grid.cells_per_axis();
    (0..grid.dim() - 1)
        .map(|a| if mi[a] == 0 || mi[a] == m - 1 { h / 2.0 } else { h })
        .product()
}

/// The discrete energy `J` of a problem on its grid.
#[derive(Clone, Debug)]
pub struct DiscreteEnergy {
    spec: ProblemSpec,
    stiffness: Stencil,
    slab_nodes: Vec<usize>,
    slab_weights: Vec<f64>,
    k_plus: Vec<f64>,
    k_minus: Vec<f64>,
    obstacle: Vec<f64>,
    free_nodes: Vec<usize>,
    free_index: Vec<usize>,
    dirichlet: Vec<f64>,
}

const NOT_FREE: usize = usize::MAX;

/// Validate the problem and assemble its discrete energy.
pub fn assemble(spec: &ProblemSpec) -> Result<DiscreteEnergy> {
    validate_spec(spec).into_result()?;
    Ok(assemble_unchecked(spec))
}

fn assemble_unchecked(spec: &ProblemSpec) -> DiscreteEnergy {
    let grid = &spec.grid;
    let stiffness = assemble_stiffness(&spec.a, grid);
    let mut slab_nodes = Vec::new();
    let mut slab_weights = Vec::new();
    let mut k_plus = Vec::new();
    let mut k_minus = Vec::new();
    let mut obstacle = Vec::new();
    let mut free_nodes = Vec::new();
    let mut free_index = vec![NOT_FREE; grid.node_count()];
    let mut dirichlet = vec![0.0; grid.node_count()];
    for i in 0..grid.node_count() {
        let mi = grid.multi_index(i);
        let x = grid.point_of(&mi);
        if grid.is_slab(&mi) {
            slab_nodes.push(i);
            slab_weights.push(slab_weight(grid, &mi));
            k_plus.push(spec.k_plus_at(&x));
            k_minus.push(spec.k_minus_at(&x));
            obstacle.push(spec.obstacle_at(&x));
        }
        if grid.is_outer(&mi) {
            dirichlet[i] = spec.dirichlet.eval(&x);
        } else {
            free_index[i] = free_nodes.len();
            free_nodes.push(i);
        }
    }
    DiscreteEnergy {
        spec: spec.clone(),
        stiffness,
        slab_nodes,
        slab_weights,
        k_plus,
        k_minus,
        obstacle,
        free_nodes,
        free_index,
        dirichlet,
    }
}

impl DiscreteEnergy {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn stiffness(&self) -> &Stencil {
        &self.stiffness
    }

    pub fn free_count(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.free_index[node] != NOT_FREE
    }

    /// Slab nodes with their trapezoid weights.
    pub fn slab(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.slab_nodes.iter().copied().zip(self.slab_weights.iter().copied())
    }

    /// Overwrite the outer-face values of `w` with the Dirichlet datum.
    pub fn impose_dirichlet(&self, w: &mut [f64]) {
        for (i, v) in w.iter_mut().enumerate() {
            if !self.is_free(i) {
                *v = self.dirichlet[i];
            }
        }
    }

    fn p(&self) -> f64 {
        self.spec.p
    }

    /// `J(w)` over the whole half-cube.
    pub fn energy(&self, w: &[f64]) -> f64 {
        let kw = self.stiffness.apply(w);
        let quad: f64 = w.iter().zip(&kw).map(|(a, b)| a * b).sum::<f64>() * 0.5;
        let pen: f64 = (0..self.slab_nodes.len())
            .map(|s| {
                let i = self.slab_nodes[s];
                self.slab_weights[s]
                    * penalty(self.k_plus[s], self.k_minus[s], self.p(), w[i] - self.obstacle[s])
            })
            .sum();
        quad + pen
    }

    /// Gradient of `J` with respect to the free nodal values.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .free_nodes
            .iter()
            .map(|&i| self.stiffness.apply_row(i, w))
            .collect();
        for s in 0..self.slab_nodes.len() {
            let fi = self.free_index[self.slab_nodes[s]];
            if fi != NOT_FREE {
                let i = self.slab_nodes[s];
                g[fi] += self.slab_weights[s]
                    * penalty_derivative(self.k_plus[s], self.k_minus[s], self.p(), w[i] - self.obstacle[s]);
            }
        }
        g
    }

    fn penalty_curvature(&self, s: usize, r: f64) -> f64 {
        let p = self.p();
        let (kp, km) = (self.k_plus[s], self.k_minus[s]);
        if p == 2.0 {
            // semismooth choice on the kink
            if r > 0.0 {
                kp
            } else if r < 0.0 {
                km
            } else {
                0.5 * (kp + km)
            }
        } else if r > 0.0 {
            (p - 1.0) * kp * pow_p(r, p - 2.0)
        } else if r < 0.0 {
            (p - 1.0) * km * pow_p(-r, p - 2.0)
        } else {
            0.0
        }
    }

    /// Lower-triangle triplets of the (generalized) Hessian on free nodes.
    fn hessian(&self, w: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.free_nodes.len() * self.stiffness.width / 2 + 1);
        for (fi, &i) in self.free_nodes.iter().enumerate() {
            for (j, k) in self.stiffness.row(i) {
                let fj = self.free_index[j];
                if fj != NOT_FREE && fj <= fi {
                    t.push((fi, fj, k));
                }
            }
        }
        for s in 0..self.slab_nodes.len() {
            let i = self.slab_nodes[s];
            let fi = self.free_index[i];
            if fi != NOT_FREE {
                let c = self.penalty_curvature(s, w[i] - self.obstacle[s]);
                if c != 0.0 {
                    t.push((fi, fi, self.slab_weights[s] * c));
                }
            }
        }
        t
    }

    /// `J(w + t d) − J(w)` for a free-node direction `d`, evaluated without
    /// cancellation against `J(w)`.
    fn increment(&self, w: &[f64], g: &[f64], d_full: &[f64], kd: &[f64], t: f64) -> f64 {
        let lin: f64 = self
            .free_nodes
            .iter()
            .enumerate()
            .map(|(fi, &i)| g[fi] * d_full[i])
            .sum();
        let quad: f64 = d_full.iter().zip(kd).map(|(a, b)| a * b).sum();
        let mut pen = 0.0;
        for s in 0..self.slab_nodes.len() {
            let i = self.slab_nodes[s];
            if self.free_index[i] == NOT_FREE || d_full[i] == 0.0 {
                continue;
            }
            pen += self.slab_weights[s]
                * penalty_remainder(
                    self.k_plus[s],
                    self.k_minus[s],
                    self.p(),
                    w[i] - self.obstacle[s],
                    t * d_full[i],
                );
        }
        t * lin + 0.5 * t * t * quad + pen
    }
}

/// `P(s + δ) − P(s) − P'(s) δ` for the penalty `P`, exact on each quadratic piece when `p = 2`.
fn penalty_remainder(kp: f64, km: f64, p: f64, s: f64, delta: f64) -> f64 {
    let e = s + delta;
    if p == 2.0 {
        if s >= 0.0 && e >= 0.0 {
            return 0.5 * kp * delta * delta;
        }
        if s <= 0.0 && e <= 0.0 {
            return 0.5 * km * delta * delta;
        }
    }
    penalty(kp, km, p, e) - penalty(kp, km, p, s) - penalty_derivative(kp, km, p, s) * delta
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Serialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub u: ScalarField,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub gradient_norm: f64,
    pub weak_residual: f64,
    pub converged: bool,
}

impl std::fmt::Debug for SolveResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveResult")
            .field("nodes", &self.u.values().len())
            .field("iterations", &self.iterations)
            .field("energy", &self.energy_history.last())
            .field("gradient_norm", &self.gradient_norm)
            .field("weak_residual", &self.weak_residual)
            .finish()
    }
}

/// Starting fields for [`minimize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Initial {
    Zero,
    /// Uniform in `[-1, 1]` at free nodes.
    Random(u64),
    /// Discrete `A`-harmonic extension of the Dirichlet datum with zero flux.
    Harmonic,
}

pub fn initial_field(energy: &DiscreteEnergy, kind: Initial) -> Result<ScalarField> {
    let grid = energy.grid();
    let mut w = match kind {
        Initial::Zero => vec![0.0; grid.node_count()],
        Initial::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..grid.node_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        }
        Initial::Harmonic => {
            return solve_linear_mixed(&Expr::Num(0.0), &energy.spec.dirichlet, &energy.spec.a, grid)
        }
    };
    energy.impose_dirichlet(&mut w);
    ScalarField::new(grid.clone(), w)
}

fn scaled_norm(g: &[f64]) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    (g.iter().map(|x| x * x).sum::<f64>() / g.len() as f64).sqrt()
}

/// Damped (semismooth for `p = 2`) Newton minimization of `J`.
///
/// Outer-face values of `initial` are replaced by the Dirichlet datum.
pub fn minimize(energy: &DiscreteEnergy, initial: &ScalarField, options: &SolverOptions) -> Result<SolveResult> {
    let grid = energy.grid();
    if initial.grid() != grid {
        return Err(Error::InvalidGrid("initial field lives on a different grid".into()));
    }
    let mut w = initial.values().to_vec();
    energy.impose_dirichlet(&mut w);
    let mut history = vec![energy.energy(&w)];
    let mut iterations = 0;
    let mut g = energy.gradient(&w);
    let mut gnorm = scaled_norm(&g);
    let mut cached: Option<(Vec<u8>, SpdFactor)> = None;
    let p2 = energy.p() == 2.0;
    while gnorm > options.tol {
        if iterations >= options.max_iter {
            return Err(non_convergence(energy, w, iterations, history, gnorm));
        }
        // p = 2 Jacobians depend only on the sign pattern of u - h
        let pattern: Vec<u8> = if p2 {
            energy
                .slab_nodes
                .iter()
                .zip(&energy.obstacle)
                .map(|(&i, h)| match (w[i] - h).partial_cmp(&0.0) {
                    Some(std::cmp::Ordering::Greater) => 2,
                    Some(std::cmp::Ordering::Less) => 0,
                    _ => 1,
                })
                .collect()
        } else {
            Vec::new()
        };
        let reuse = p2 && cached.as_ref().is_some_and(|(pat, _)| *pat == pattern);
        if !reuse {
            let factor = SpdFactor::new(energy.free_count(), &energy.hessian(&w))?;
            cached = Some((pattern, factor));
        }
        let factor = &cached.as_ref().expect("factor present").1;
        let step = factor.solve(&g);
        let mut d_full = vec![0.0; w.len()];
        for (fi, &i) in energy.free_nodes.iter().enumerate() {
            d_full[i] = -step[fi];
        }
        let slope: f64 = energy
            .free_nodes
            .iter()
            .enumerate()
            .map(|(fi, &i)| g[fi] * d_full[i])
            .sum();
        if slope >= 0.0 {
            return Err(non_convergence(energy, w, iterations, history, gnorm));
        }
        let kd = energy.stiffness.apply(&d_full);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let dj = energy.increment(&w, &g, &d_full, &kd, t);
            if dj <= 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(non_convergence(energy, w, iterations, history, gnorm));
        }
        for (wi, di) in w.iter_mut().zip(&d_full) {
            *wi += t * di;
        }
        iterations += 1;
        history.push(energy.energy(&w));
        g = energy.gradient(&w);
        gnorm = scaled_norm(&g);
    }
    let u = ScalarField::new(grid.clone(), w)?;
    let weak = weak_residual(&u, energy.spec());
    Ok(SolveResult {
        u,
        iterations,
        energy_history: history,
        gradient_norm: gnorm,
        weak_residual: weak,
        converged: true,
    })
}

fn non_convergence(energy: &DiscreteEnergy, w: Vec<f64>, iterations: usize, history: Vec<f64>, gnorm: f64) -> Error {
    let u = ScalarField::new(energy.grid().clone(), w).unwrap_or_else(|_| ScalarField::zeros(energy.grid()));
    let weak = weak_residual(&u, energy.spec());
    Error::NonConvergence {
        iterations,
        gradient_norm: gnorm,
        last: Box::new(SolveResult {
            u,
            iterations,
            energy_history: history,
            gradient_norm: gnorm,
            weak_residual: weak,
            converged: false,
        }),
    }
}

/// Gauss–Seidel coordinate descent on `J`: each free node in turn is set to
/// the exact minimizer of `J` along its coordinate, found by bisection on the
/// monotone one-dimensional derivative. Slow, but independent of the Newton
/// machinery; stops when a sweep moves no value by more than `tol`.
pub fn coordinate_descent(
    energy: &DiscreteEnergy,
    initial: &ScalarField,
    tol: f64,
    max_sweeps: usize,
) -> Result<(ScalarField, usize)> {
    let mut w = initial.values().to_vec();
    energy.impose_dirichlet(&mut w);
    let mut slab_of = vec![NOT_FREE; w.len()];
    for (s, &i) in energy.slab_nodes.iter().enumerate() {
        slab_of[i] = s;
    }
    let diag: Vec<f64> = (0..w.len())
        .map(|i| energy.stiffness.row(i).filter(|&(j, _)| j == i).map(|(_, k)| k).sum())
        .collect();
    let p = energy.p();
    for sweep in 1..=max_sweeps {
        let mut moved: f64 = 0.0;
        for &i in &energy.free_nodes {
            let r = energy.stiffness.apply_row(i, &w) - diag[i] * w[i];
            let s = slab_of[i];
            let slope = |t: f64| {
                let mut d = diag[i] * t + r;
                if s != NOT_FREE {
                    d += energy.slab_weights[s]
                        * penalty_derivative(energy.k_plus[s], energy.k_minus[s], p, t - energy.obstacle[s]);
                }
                d
            };
            let mut lo = w[i] - 1.0;
            let mut hi = w[i] + 1.0;
            while slope(lo) > 0.0 {
                lo -= 2.0 * (hi - lo);
            }
            while slope(hi) < 0.0 {
                hi += 2.0 * (hi - lo);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            moved = moved.max((t - w[i]).abs());
            w[i] = t;
        }
        if moved <= tol {
            return Ok((ScalarField::new(energy.grid().clone(), w)?, sweep));
        }
    }
    Err(Error::Inconsistent(format!(
        "coordinate descent did not settle in {max_sweeps} sweeps"
    )))
}

/// Assemble, build the requested initial field and minimize.
pub fn solve(spec: &ProblemSpec, initial: Initial, options: &SolverOptions) -> Result<SolveResult> {
    let energy = assemble(spec)?;
    let start = initial_field(&energy, initial)?;
    minimize(&energy, &start, options)
}

/// `max_ζ |∫ a Du Dζ + ∫_Γ P'(u − h) ζ| / ‖ζ‖_{H¹}` over the tent functions of
/// all nodes off the outer faces, computed cell by cell.
pub fn weak_residual(u: &ScalarField, spec: &ProblemSpec) -> f64 {
    let grid = u.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let nc = 1usize << dim;
    let w = u.values();
    let mut residual = vec![0.0; grid.node_count()];
    let mut norm2 = vec![0.0; grid.node_count()];
    let weight = (h / 2.0).powi(dim as i32);
    let gps = gauss_points(dim);
    let grads: Vec<Vec<Point>> = gps.iter().map(|t| shape_gradients(t, dim, h)).collect();
    let vals: Vec<Vec<f64>> = gps.iter().map(|t| shape_values(t, dim)).collect();
    let constant = spec.a.is_constant().then(|| spec.a.eval(&[0.0; 3]));
    for cell in cells(grid) {
        let corners: Vec<usize> = (0..nc).map(|c| grid.index(&corner(&cell, c, dim))).collect();
        let origin = grid.point_of(&cell);
        for (q, t) in gps.iter().enumerate() {
            let m = match &constant {
                Some(m) => *m,
                None => {
                    let mut x = origin;
                    for a in 0..dim {
                        x[a] += t[a] * h;
                    }
                    spec.a.eval(&x)
                }
            };
            let mut du = [0.0; 3];
            for (k, &node) in corners.iter().enumerate() {
                for a in 0..dim {
                    du[a] += w[node] * grads[q][k][a];
                }
            }
            let mut flux = [0.0; 3];
            for i in 0..dim {
                for j in 0..dim {
                    flux[i] += m[i][j] * du[j];
                }
            }
            for (k, &node) in corners.iter().enumerate() {
                let gk = &grads[q][k];
                residual[node] += weight * (0..dim).map(|i| flux[i] * gk[i]).sum::<f64>();
                norm2[node] +=
                    weight * (vals[q][k] * vals[q][k] + (0..dim).map(|i| gk[i] * gk[i]).sum::<f64>());
            }
        }
    }
    for i in 0..grid.node_count() {
        let mi = grid.multi_index(i);
        if grid.is_slab(&mi) {
            let x = grid.point_of(&mi);
            residual[i] += slab_weight(grid, &mi) * spec.flux(&x, w[i] - spec.obstacle_at(&x));
        }
    }
    (0..grid.node_count())
        .filter(|&i| !grid.is_outer(&grid.multi_index(i)))
        .map(|i| residual[i].abs() / norm2[i].sqrt())
        .fold(0.0, f64::max)
}

/// Discrete outward conormal derivative `a Du · ν` at free slab nodes,
/// `(K u)_i / w_i`, paired with the node index.
pub fn slab_conormal_flux(energy: &DiscreteEnergy, u: &ScalarField) -> Vec<(usize, f64)> {
    energy
        .slab()
        .filter(|(i, _)| energy.is_free(*i))
        .map(|(i, wt)| (i, energy.stiffness.apply_row(i, u.values()) / wt))
        .collect()
}

/// One linear solve of `D_i(a^{ij} D_j w) = 0` with `a^{nn} D_n w = flux` on
/// the slab and `w = dirichlet` on the outer faces.
pub fn solve_linear_mixed(flux: &Expr, dirichlet: &Expr, a: &CoefficientField, grid: &Grid) -> Result<ScalarField> {
    solve_linear_mixed_with(|x| flux.eval(x), |x| dirichlet.eval(x), a, grid)
}

/// [`solve_linear_mixed`] with data given as closures.
pub fn solve_linear_mixed_with(
    flux: impl Fn(&Point) -> f64,
    dirichlet: impl Fn(&Point) -> f64,
    a: &CoefficientField,
    grid: &Grid,
) -> Result<ScalarField> {
    if a.dim() != grid.dim() {
        return Err(Error::Validation("coefficient and grid dimensions differ".into()));
    }
    let stiffness = assemble_stiffness(a, grid);
    let n = grid.node_count();
    let mut free_index = vec![NOT_FREE; n];
    let mut free_nodes = Vec::new();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mi = grid.multi_index(i);
        if grid.is_outer(&mi) {
            w[i] = dirichlet(&grid.point_of(&mi));
        } else {
            free_index[i] = free_nodes.len();
            free_nodes.push(i);
        }
    }
    let mut rhs = vec![0.0; free_nodes.len()];
    let mut triplets = Vec::new();
    for (fi, &i) in free_nodes.iter().enumerate() {
        let mi = grid.multi_index(i);
        for (j, k) in stiffness.row(i) {
            let fj = free_index[j];
            if fj == NOT_FREE {
                rhs[fi] -= k * w[j];
            } else if fj <= fi {
                triplets.push((fi, fj, k));
            }
        }
        if grid.is_slab(&mi) {
            rhs[fi] -= slab_weight(grid, &mi) * flux(&grid.point_of(&mi));
        }
    }
    let factor = SpdFactor::new(free_nodes.len(), &triplets)?;
    let sol = factor.solve(&rhs);
    for (fi, &i) in free_nodes.iter().enumerate() {
        w[i] = sol[fi];
    }
    ScalarField::new(grid.clone(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ProblemConfig;

    fn spec(cfg: ProblemConfig, m: usize) -> ProblemSpec {
        cfg.build(&Grid::new(cfg.dim, m).unwrap()).unwrap()
    }

    #[test]
    fn energy_examples() {
        let s = spec(ProblemConfig::identity(2), 17);
        let e = assemble(&s).unwrap();
        let g = s.grid.clone();
        assert!(e.energy(&vec![3.0; g.node_count()]).abs() < 1e-12);
        let lin = g.sample(|x| x[0]);
        // |Dw|^2 = 1 over the half-cube of area 2
        assert!((e.energy(&lin) - 1.0).abs() < 1e-12);
        let s = spec(ProblemConfig::identity(2).with_penalties("1", "0"), 17);
        let e = assemble(&s).unwrap();
        assert!(e.energy(&vec![-1.0; g.node_count()]).abs() < 1e-12);
    }

    #[test]
    fn linear_solution_in_one_step() {
        let s = spec(ProblemConfig::identity(2).with_dirichlet("x1"), 33);
        let r = solve(&s, Initial::Zero, &SolverOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        let exact = s.grid.sample(|x| x[0]);
        for (a, b) in r.u.values().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.weak_residual < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = spec(
            ProblemConfig::identity(2)
                .with_coefficients(&[&["1 + x1^2/4", "0"], &["0", "1"]], 0.5)
                .with_penalties("1", "2")
                .with_exponent(3.0)
                .with_dirichlet("x1"),
            9,
        );
        let e = assemble(&s).unwrap();
        let mut w = s.grid.sample(|x| (3.0 * x[0]).sin() + x[1]);
        e.impose_dirichlet(&mut w);
        let g = e.gradient(&w);
        for (fi, &i) in e.free_nodes.iter().enumerate().step_by(5) {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += 1e-6;
            wm[i] -= 1e-6;
            let fd = (e.energy(&wp) - e.energy(&wm)) / 2e-6;
            assert!((fd - g[fi]).abs() < 1e-6, "node {i}: {fd} vs {}", g[fi]);
        }
    }

    #[test]
    fn perturbation_raises_residual() {
        let s = spec(ProblemConfig::identity(2).with_dirichlet("x1"), 17);
        let mut u = ScalarField::from_fn(&s.grid, |x| x[0]);
        let i = s.grid.index(&[8, 4, 0]);
        u.values_mut()[i] += 1e-2;
        assert!(weak_residual(&u, &s) >= 1e-4);
    }

    #[test]
    fn mixed_problem_zero_flux() {
        let g = Grid::new(2, 17).unwrap();
        let a = CoefficientField::identity(2);
        let w = solve_linear_mixed(&Expr::Num(0.0), &Expr::Var(0), &a, &g).unwrap();
        let exact = g.sample(|x| x[0]);
        for (a, b) in w.values().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
