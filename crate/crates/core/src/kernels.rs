//! Poisson kernel, its gradient, the ψ generators built from it, Poisson
//! averages of cubes and the averaging / fractional-type operators.

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, DyadicGrid, PhysBox};
use crate::error::{GwError, Result};
use crate::lattice::{Atom, GridFunction, Point, Weight};
use crate::rng::trial_rng;

/// `Γ((n+1)/2) / π^{(n+1)/2}`.
pub fn poisson_normalization(dim: usize) -> f64 {
    match dim {
        1 => 1.0 / PI,
        2 => 1.0 / (2.0 * PI),
        _ => panic!("unsupported dimension {dim}"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub dim: usize,
    pub c_p: f64,
}

impl KernelParams {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            c_p: poisson_normalization(dim),
        }
    }
}

#[inline]
fn norm2(x: &Point) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(GwError::domain(format!("t must be positive, got {t}")))
    }
}

#[inline]
pub(crate) fn poisson_raw(dim: usize, x: &Point, t: f64) -> f64 {
    let c = poisson_normalization(dim);
    c * t / (t * t + norm2(x)).powf((dim as f64 + 1.0) / 2.0)
}

/// Gradient `(∂_t, ∂_{x_1}, …, ∂_{x_n}) P_t(x)`; unused slots are zero.
#[inline]
pub(crate) fn grad_poisson_raw(dim: usize, x: &Point, t: f64) -> [f64; 3] {
    let c = poisson_normalization(dim);
    let n = dim as f64;
    let r2 = norm2(x);
    let s = t * t + r2;
    let denom = s.powf((n + 3.0) / 2.0);
    let mut g = [0.0; 3];
    g[0] = c * (r2 - n * t * t) / denom;
    for a in 0..dim {
        g[a + 1] = -(n + 1.0) * c * t * x[a] / denom;
    }
    g
}

/// `P_t(x) = c_P t^{-n} (1 + |x/t|²)^{-(n+1)/2}`.
pub fn poisson(dim: usize, x: &Point, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(poisson_raw(dim, x, t))
}

/// `∂_t P_t(x) = c_n (|x|² − n t²) / (t² + |x|²)^{(n+3)/2}` with `c_n = c_P`.
pub fn dt_poisson(dim: usize, x: &Point, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(grad_poisson_raw(dim, x, t)[0])
}

/// `(∂_t P_t, ∇_x P_t)` as an `(n+1)`-vector.
pub fn grad_poisson(dim: usize, x: &Point, t: f64) -> Result<Vec<f64>> {
    check_t(t)?;
    Ok(grad_poisson_raw(dim, x, t)[..=dim].to_vec())
}

/// The generators `∂_t P_t|_{t=1}` and `∂_{x_i} P_1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    DtPoisson,
    DxPoisson(usize),
}

impl Generator {
    pub fn all(dim: usize) -> Vec<Generator> {
        std::iter::once(Generator::DtPoisson)
            .chain((0..dim).map(Generator::DxPoisson))
            .collect()
    }

    fn slot(&self) -> usize {
        match self {
            Generator::DtPoisson => 0,
            Generator::DxPoisson(a) => a + 1,
        }
    }

    /// `ψ(x)`.
    pub fn eval(&self, dim: usize, x: &Point) -> f64 {
        grad_poisson_raw(dim, x, 1.0)[self.slot()]
    }

    /// `ψ_t(x) = t^{-n} ψ(x/t)`, which equals `t ∂ P_t(x)` for the matching
    /// derivative.
    #[inline]
    pub fn dilated(&self, dim: usize, x: &Point, t: f64) -> f64 {
        t * grad_poisson_raw(dim, x, t)[self.slot()]
    }
}

/// The `n+1` generators with the evaluation cutoff radius (in lattice sides).
#[derive(Clone, Debug, PartialEq)]
pub struct PsiFamily {
    pub dim: usize,
    pub generators: Vec<Generator>,
    pub r_cut: f64,
}

impl PsiFamily {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            generators: Generator::all(dim),
            r_cut: 1e3,
        }
    }
}

/// `ψ_t * μ (x) = Σ_a ψ_t(x − y_a) m_a`.
pub fn psi_t_convolve(atoms: &[Atom], psi: Generator, dim: usize, x: &Point, t: f64) -> f64 {
    atoms
        .iter()
        .map(|a| {
            let z = [x[0] - a.pos[0], x[1] - a.pos[1]];
            psi.dilated(dim, &z, t) * a.mass
        })
        .sum()
}

/// Empirical constants of the three 𝒰₁,₁ conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct U11Report {
    pub c_decay: f64,
    pub c_smooth: f64,
    pub cancel_residual: f64,
}

fn sample_directions(dim: usize) -> Vec<Point> {
    if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..64)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / 64.0;
                [phi.cos(), phi.sin()]
            })
            .collect()
    }
}

/// `∫ ψ` in polar form with `ρ = tan θ`, which turns the algebraic tail
/// into a smooth integrand on `[0, π/2)`.
fn integral_of(psi: Generator, dim: usize) -> f64 {
    let rule = GaussLegendre::new(16.try_into().expect("nonzero"));
    let panels = 64;
    let dirs = sample_directions(dim);
    let angular_weight = if dim == 1 { 1.0 } else { 2.0 * PI / dirs.len() as f64 };
    let mut total = 0.0;
    for p in 0..panels {
        let a = PI / 2.0 * p as f64 / panels as f64;
        let b = PI / 2.0 * (p + 1) as f64 / panels as f64;
        total += rule.integrate(a, b, |theta| {
            let rho = theta.tan();
            let jac = rho.powi(dim as i32 - 1) / (theta.cos() * theta.cos());
            dirs.iter()
                .map(|d| psi.eval(dim, &[rho * d[0], rho * d[1]]))
                .sum::<f64>()
                * jac
        });
    }
    total * angular_weight
}

pub fn u11_check(psi: Generator, dim: usize) -> U11Report {
    let n = dim as f64;
    let radii: Vec<f64> = (0..=400)
        .map(|k| k as f64 * 0.025)
        .chain((0..=600).map(|k| 10f64.powf(1.0 + 2.0 * k as f64 / 600.0)))
        .collect();
    let mut c_decay: f64 = 0.0;
    for d in sample_directions(dim) {
        for &r in &radii {
            let x = [r * d[0], r * d[1]];
            c_decay = c_decay.max(psi.eval(dim, &x).abs() * (1.0 + r).powf(n + 1.0));
        }
    }
    let mut rng = trial_rng(0x5eed_0011, dim as u64);
    let mut c_smooth: f64 = 0.0;
    for k in 0..20_000 {
        let scale = 10f64.powf(rng.random_range(-1.0..3.0));
        let mut x = [0.0; 2];
        let mut y = [0.0; 2];
        let gap = if k % 2 == 0 {
            10f64.powf(rng.random_range(-6.0..0.0))
        } else {
            scale * rng.random_range(0.0..2.0)
        };
        for a in 0..dim {
            x[a] = scale * rng.random_range(-1.0..1.0);
            y[a] = x[a] + gap * rng.random_range(-1.0..1.0);
        }
        let dist = crate::lattice::distance(&x, &y);
        if dist == 0.0 {
            continue;
        }
        let rx = norm2(&x).sqrt();
        let ry = norm2(&y).sqrt();
        let bound = dist * ((1.0 + rx).powf(-n - 2.0) + (1.0 + ry).powf(-n - 2.0));
        c_smooth = c_smooth.max((psi.eval(dim, &x) - psi.eval(dim, &y)).abs() / bound);
    }
    U11Report {
        c_decay,
        c_smooth,
        cancel_residual: integral_of(psi, dim).abs(),
    }
}

/// `l(K) / (l(K) + dist(y, K))^{n+1}` summed against atoms.
pub fn poisson_avg_atoms(grid: &DyadicGrid, cube: &DyadicCube, atoms: &[Atom]) -> f64 {
    let pieces = grid.pieces(cube);
    let l = grid.side(cube);
    let p = grid.lattice().dim() as i32 + 1;
    atoms
        .iter()
        .map(|a| {
            let d = pieces
                .iter()
                .map(|b: &PhysBox| b.distance_to_point(&a.pos))
                .fold(f64::INFINITY, f64::min);
            a.mass * l / (l + d).powi(p)
        })
        .sum()
}

/// `P(K, μ) = ∫ l(K) / (l(K) + dist(y, K))^{n+1} μ(dy)`.
pub fn poisson_avg(grid: &DyadicGrid, cube: &DyadicCube, mu: &Weight) -> f64 {
    poisson_avg_atoms(grid, cube, &mu.atoms())
}

/// `A_r^σ f(x) = r^{-n} ∫_{Q(x,r)} f dσ` with the half-open cube of side
/// `r` centered at `x`.
pub fn avg_operator(f: &GridFunction, sigma: &Weight, r: f64, x: &Point) -> Result<f64> {
    if !(r > 0.0) {
        return Err(GwError::domain(format!("averaging scale must be positive, got {r}")));
    }
    let lattice = sigma.lattice();
    let dim = lattice.dim();
    let mut sum = 0.0;
    for (i, &m) in sigma.masses().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let y = lattice.cell_center(i);
        if (0..dim).all(|a| y[a] >= x[a] - r / 2.0 && y[a] < x[a] + r / 2.0) {
            sum += f.value(i) * m;
        }
    }
    Ok(sum / r.powi(dim as i32))
}

/// `K_{α,t}(x, y) = t^α / (t + |x − y|)^{n+α}`.
#[inline]
pub fn k_alpha(dim: usize, alpha: f64, t: f64, x: &Point, y: &Point) -> f64 {
    t.powf(alpha) / (t + crate::lattice::distance(x, y)).powf(dim as f64 + alpha)
}

/// `I_{α,t}^σ f(x) = ∫ K_{α,t}(x, y) f(y) σ(dy)`.
pub fn i_alpha(f: &GridFunction, sigma: &Weight, alpha: f64, t: f64, x: &Point) -> Result<f64> {
    if !(alpha > 0.0 && t > 0.0) {
        return Err(GwError::domain("need α > 0 and t > 0"));
    }
    let lattice = sigma.lattice();
    Ok(sigma
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(i, m)| k_alpha(lattice.dim(), alpha, t, x, &lattice.cell_center(i)) * f.value(i) * m)
        .sum())
}
