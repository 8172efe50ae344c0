//! Discrete g-function: log-scale quadrature in `t`, Carleson-box and
//! Whitney-region integrals, and the exact operator norm on a finite
//! lattice as a top eigenvalue.
//!
//! Every integral is written against `dt/t`. The g-function integrand
//! `|∇P_t * μ|² t dt` equals `Σ_ψ |ψ_t * μ|² dt/t` for the `n+1`
//! generators `ψ_t = t ∂P_t`, so one quadrature serves both.

use std::io::Write;
use std::path::Path;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, DyadicGrid};
use crate::error::{GwError, Result};
use crate::kernels::Generator;
use crate::lattice::{Atom, GridFunction, LatticeSpec, Point, Weight};

pub const DEFAULT_NODES_PER_OCTAVE: usize = 16;

/// Largest σ-support handled by the dense eigensolve.
pub const MAX_DENSE: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
struct Panel {
    /// `ln t` endpoints.
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Composite Gauss–Legendre rule in `u = ln t` on `[t_min, t_max]`, one
/// panel per octave starting at `t_min` (the last may be shorter).
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    t_min: f64,
    t_max: f64,
    per_octave: usize,
    panels: Vec<Panel>,
}

fn gauss_nodes(count: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(count.try_into().expect("node count is positive"));
    let half = (hi - lo) / 2.0;
    let mid = (hi + lo) / 2.0;
    rule.iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .unzip()
}

impl Quadrature {
    pub fn new(t_min: f64, t_max: f64, per_octave: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(GwError::validation(format!(
                "need 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        if per_octave < 2 {
            return Err(GwError::validation("need at least 2 nodes per octave"));
        }
        let ln2 = std::f64::consts::LN_2;
        let (a, b) = (t_min.ln(), t_max.ln());
        let mut panels = Vec::new();
        let mut lo = a;
        while lo < b {
            // merge a sliver into the previous panel rather than emit it
            let mut hi = lo + ln2;
            if b - hi < 1e-9 * ln2 {
                hi = b;
            }
            let (nodes, weights) = gauss_nodes(per_octave, lo, hi);
            panels.push(Panel {
                lo,
                hi,
                nodes,
                weights,
            });
            lo = hi;
        }
        Ok(Self {
            t_min,
            t_max,
            per_octave,
            panels,
        })
    }

    pub fn for_lattice(lattice: &LatticeSpec) -> Self {
        Self::with_density(lattice, DEFAULT_NODES_PER_OCTAVE)
    }

    pub fn with_density(lattice: &LatticeSpec, per_octave: usize) -> Self {
        Self::new(lattice.t_min(), lattice.t_max(), per_octave)
            .expect("lattice truncation is validated")
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn per_octave(&self) -> usize {
        self.per_octave
    }

    /// All `(t, w)` pairs with weights for `dt/t`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.panels
            .iter()
            .flat_map(|p| p.nodes.iter().zip(&p.weights).map(|(u, w)| (u.exp(), *w)))
            .collect()
    }

    /// Nodes for `dt/t` over `(a, b] ∩ [t_min, t_max]`. Panels inside the
    /// window are reused; partially covered panels get a fresh rule on
    /// the overlap with the same node count.
    pub fn window(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let lo = a.max(self.t_min);
        let hi = b.min(self.t_max);
        if !(lo < hi) {
            return Vec::new();
        }
        let (ulo, uhi) = (lo.ln(), hi.ln());
        let tol = 1e-12;
        let mut out = Vec::new();
        for p in &self.panels {
            let s = p.lo.max(ulo);
            let e = p.hi.min(uhi);
            if e - s <= tol {
                continue;
            }
            if s - p.lo <= tol && p.hi - e <= tol {
                out.extend(p.nodes.iter().zip(&p.weights).map(|(u, w)| (u.exp(), *w)));
            } else {
                let (nodes, weights) = gauss_nodes(self.per_octave, s, e);
                out.extend(nodes.iter().zip(&weights).map(|(u, w)| (u.exp(), *w)));
            }
        }
        out
    }
}

/// Which square function is integrated: the full Poisson gradient
/// (all `n+1` generators) or a single generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    PoissonGradient,
    Psi(Generator),
}

impl TransformKind {
    pub fn generators(&self, dim: usize) -> Vec<Generator> {
        match self {
            TransformKind::PoissonGradient => Generator::all(dim),
            TransformKind::Psi(g) => vec![*g],
        }
    }
}

/// `Σ_ψ |ψ_t * μ(x)|²` at one `(x, t)`.
fn energy_at(atoms: &[Atom], gens: &[Generator], dim: usize, x: &Point, t: f64) -> f64 {
    gens.iter()
        .map(|g| {
            let v: f64 = atoms
                .iter()
                .map(|a| {
                    let z = [x[0] - a.pos[0], x[1] - a.pos[1]];
                    g.dilated(dim, &z, t) * a.mass
                })
                .sum();
            v * v
        })
        .sum()
}

/// `∫ Σ_ψ |ψ_t * μ(x)|² dt/t` over the given nodes.
pub fn window_energy(
    atoms: &[Atom],
    kind: TransformKind,
    dim: usize,
    x: &Point,
    nodes: &[(f64, f64)],
) -> f64 {
    let gens = kind.generators(dim);
    nodes
        .iter()
        .map(|&(t, w)| w * energy_at(atoms, &gens, dim, x, t))
        .sum()
}

/// `g(μ)(x) = (∫ |∇P_t * μ(x)|² t dt)^{1/2}` over the truncated range.
pub fn g_value(fw: &[Atom], dim: usize, x: &Point, quad: &Quadrature) -> f64 {
    window_energy(fw, TransformKind::PoissonGradient, dim, x, &quad.nodes()).sqrt()
}

fn same_lattice(a: &LatticeSpec, b: &LatticeSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(GwError::domain("inputs live on different lattices"))
    }
}

/// `‖T(fσ)‖_{L²(w)}` for the chosen transform.
pub fn g_norm(
    f: &GridFunction,
    sigma: &Weight,
    w: &Weight,
    quad: &Quadrature,
    kind: TransformKind,
) -> Result<f64> {
    same_lattice(f.lattice(), sigma.lattice())?;
    same_lattice(sigma.lattice(), w.lattice())?;
    let fw = sigma.times(f);
    Ok(strip_integral(&fw, kind, w, quad).sqrt())
}

/// `∬ Σ_ψ |ψ_t * μ|² w(dx) dt/t` over the whole truncated strip.
pub fn strip_integral(fw: &[Atom], kind: TransformKind, w: &Weight, quad: &Quadrature) -> f64 {
    let dim = w.lattice().dim();
    let nodes = quad.nodes();
    let parts: Vec<f64> = w
        .atoms()
        .par_iter()
        .map(|x| x.mass * window_energy(fw, kind, dim, &x.pos, &nodes))
        .collect();
    parts.iter().sum()
}

/// Testing integral `∬_{I × (0, l(I)]} |∇P_t(1_I σ)|² w(dx) t dt`.
pub fn box_integral(
    grid: &DyadicGrid,
    cube: &DyadicCube,
    sigma: &Weight,
    w: &Weight,
    quad: &Quadrature,
) -> f64 {
    box_integral_kind(grid, cube, sigma, w, quad, TransformKind::PoissonGradient)
}

/// `∬_{I × (0, l(I)]} Σ_ψ |ψ_t * (1_I σ)|² w(dx) dt/t`.
pub fn box_integral_kind(
    grid: &DyadicGrid,
    cube: &DyadicCube,
    sigma: &Weight,
    w: &Weight,
    quad: &Quadrature,
    kind: TransformKind,
) -> f64 {
    let src = sigma.atoms_in(grid, cube);
    if src.is_empty() {
        return 0.0;
    }
    let dim = grid.lattice().dim();
    let nodes = quad.window(0.0, grid.side(cube));
    w.atoms_in(grid, cube)
        .iter()
        .map(|x| x.mass * window_energy(&src, kind, dim, &x.pos, &nodes))
        .sum()
}

/// `∬_{W_R} Σ_ψ |ψ_t * μ|² w(dx) dt/t` with `W_R = R × (l(R)/2, l(R)]`.
pub fn whitney_integral(
    grid: &DyadicGrid,
    cube: &DyadicCube,
    fw: &[Atom],
    kind: TransformKind,
    w: &Weight,
    quad: &Quadrature,
) -> f64 {
    let l = grid.side(cube);
    let nodes = quad.window(l / 2.0, l);
    if nodes.is_empty() || fw.is_empty() {
        return 0.0;
    }
    let dim = grid.lattice().dim();
    w.atoms_in(grid, cube)
        .iter()
        .map(|x| x.mass * window_energy(fw, kind, dim, &x.pos, &nodes))
        .sum()
}

/// Per-cell, per-level Whitney energies `w_x ∫_{(l_j/2, l_j]} Σ_ψ |ψ_t*μ(x)|² dt/t`.
/// They do not depend on the grid shift, so sums over `W_R` for many
/// shifted grids reduce to table lookups.
#[derive(Clone, Debug)]
pub struct WhitneyTable {
    /// `levels[j][cell]`.
    levels: Vec<Vec<f64>>,
}

impl WhitneyTable {
    pub fn new(fw: &[Atom], kind: TransformKind, w: &Weight, quad: &Quadrature) -> Self {
        let lattice = *w.lattice();
        let dim = lattice.dim();
        let windows: Vec<Vec<(f64, f64)>> = (0..=lattice.depth())
            .map(|j| {
                let l = lattice.side() / (1u64 << j) as f64;
                quad.window(l / 2.0, l)
            })
            .collect();
        let charged = w.charged_cells();
        let rows: Vec<Vec<f64>> = charged
            .par_iter()
            .map(|&i| {
                let x = lattice.cell_center(i);
                let m = w.masses()[i];
                windows
                    .iter()
                    .map(|nodes| m * window_energy(fw, kind, dim, &x, nodes))
                    .collect()
            })
            .collect();
        let mut levels = vec![vec![0.0; lattice.cell_count()]; windows.len()];
        for (row, &i) in rows.iter().zip(&charged) {
            for (j, v) in row.iter().enumerate() {
                levels[j][i] = *v;
            }
        }
        Self { levels }
    }

    pub fn region(&self, grid: &DyadicGrid, cube: &DyadicCube) -> f64 {
        let level = &self.levels[cube.level as usize];
        grid.cell_box(cube).cells().map(|i| level[i]).sum()
    }

    /// Whitney energy of every level-`j` cube of `grid`.
    pub fn level_regions(&self, grid: &DyadicGrid, level: u32) -> Vec<f64> {
        grid.level_sums(&self.levels[level as usize])
            .level(level)
            .to_vec()
    }

    pub fn total(&self) -> f64 {
        self.levels.iter().flatten().sum()
    }
}

/// Quadratic form `f ↦ ‖T(fσ)‖²_{L²(w)}` in the coordinates of the
/// σ-charged cells: `form[a][b] = σ_a σ_b Σ_x w_x ∫ Σ_ψ ψ_t(x−y_a) ψ_t(x−y_b) dt/t`.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub cells: Vec<usize>,
    pub sigma: Vec<f64>,
    pub form: DMatrix<f64>,
}

fn kernel_rows(
    src: &[Point],
    gens: &[Generator],
    dim: usize,
    x: &Point,
    nodes: &[(f64, f64)],
    scale: f64,
) -> DMatrix<f64> {
    let rows = nodes.len() * gens.len();
    let mut m = DMatrix::zeros(rows, src.len());
    for (k, &(t, w)) in nodes.iter().enumerate() {
        let s = (scale * w).sqrt();
        for (g_idx, g) in gens.iter().enumerate() {
            let r = k * gens.len() + g_idx;
            for (a, y) in src.iter().enumerate() {
                let z = [x[0] - y[0], x[1] - y[1]];
                m[(r, a)] = s * g.dilated(dim, &z, t);
            }
        }
    }
    m
}

impl OperatorMatrix {
    pub fn assemble(
        sigma: &Weight,
        w: &Weight,
        quad: &Quadrature,
        kind: TransformKind,
    ) -> Result<Self> {
        same_lattice(sigma.lattice(), w.lattice())?;
        let cells = sigma.charged_cells();
        if cells.len() > MAX_DENSE {
            return Err(GwError::Refused(format!(
                "{} σ-charged cells exceed the dense limit {MAX_DENSE}; use power iteration",
                cells.len()
            )));
        }
        let lattice = *sigma.lattice();
        let dim = lattice.dim();
        let src: Vec<Point> = cells.iter().map(|&i| lattice.cell_center(i)).collect();
        let sig: Vec<f64> = cells.iter().map(|&i| sigma.masses()[i]).collect();
        let gens = kind.generators(dim);
        let nodes = quad.nodes();
        let targets = w.atoms();
        let n = cells.len();
        // fixed chunking keeps the summation order independent of threads
        let chunk = 16;
        let partials: Vec<DMatrix<f64>> = targets
            .par_chunks(chunk)
            .map(|xs| {
                let mut acc = DMatrix::zeros(n, n);
                for x in xs {
                    let phi = kernel_rows(&src, &gens, dim, &x.pos, &nodes, x.mass);
                    acc.gemm_tr(1.0, &phi, &phi, 1.0);
                }
                acc
            })
            .collect();
        let mut form = DMatrix::zeros(n, n);
        for p in &partials {
            form += p;
        }
        for a in 0..n {
            for b in 0..n {
                form[(a, b)] *= sig[a] * sig[b];
            }
        }
        // symmetrize away rounding in the accumulated products
        let form = (&form + form.transpose()) * 0.5;
        Ok(Self {
            cells,
            sigma: sig,
            form,
        })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    /// `D^{-1/2} A D^{-1/2}` with `D = diag σ`.
    pub fn normalized(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut b = self.form.clone();
        for a in 0..n {
            for c in 0..n {
                b[(a, c)] /= (self.sigma[a] * self.sigma[c]).sqrt();
            }
        }
        b
    }

    /// `A(f, f) / Σ σ_a f_a²` for a vector on the charged cells.
    pub fn rayleigh(&self, f: &[f64]) -> f64 {
        let v = DVector::from_column_slice(f);
        let num = v.dot(&(&self.form * &v));
        let den: f64 = f.iter().zip(&self.sigma).map(|(x, s)| x * x * s).sum();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Largest eigenvalue and its maximizer in `f` coordinates.
    pub fn top_eigen(&self) -> (f64, Vec<f64>) {
        if self.dim() == 0 {
            return (0.0, Vec::new());
        }
        let eig = SymmetricEigen::new(self.normalized());
        let (k, lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        let u = eig.eigenvectors.column(k);
        let f = u
            .iter()
            .zip(&self.sigma)
            .map(|(x, s)| x / s.sqrt())
            .collect();
        (lambda.max(0.0), f)
    }

    /// Row-major little-endian `f64` matrix after a `u64` dimension header.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.dim();
        out.write_all(&(n as u64).to_le_bytes())?;
        for a in 0..n {
            for b in 0..n {
                out.write_all(&self.form[(a, b)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| GwError::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file))
            .map_err(|e| GwError::io(path, e))
    }
}

/// Read a matrix written by [`OperatorMatrix::write_binary`].
pub fn read_binary(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let header: [u8; 8] = bytes
        .get(..8)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| GwError::validation("matrix dump shorter than its header"))?;
    let n = u64::from_le_bytes(header) as usize;
    let body = &bytes[8..];
    if body.len() != n * n * 8 {
        return Err(GwError::validation(format!(
            "matrix dump holds {} bytes, expected {}",
            body.len(),
            n * n * 8
        )));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(n, n, &vals))
}

/// `𝒢 = sup_f ‖T(fσ)‖_{L²(w)} / ‖f‖_σ` for the discretized transform.
pub fn operator_norm_exact(
    sigma: &Weight,
    w: &Weight,
    quad: &Quadrature,
    kind: TransformKind,
) -> Result<f64> {
    if sigma.is_zero() || w.is_zero() {
        same_lattice(sigma.lattice(), w.lattice())?;
        return Ok(0.0);
    }
    let m = OperatorMatrix::assemble(sigma, w, quad, kind)?;
    Ok(m.top_eigen().0.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Matrix-free power iteration for supports beyond the dense limit. The
/// result is a Rayleigh quotient and hence a lower bound for `𝒢`.
pub fn operator_norm_power(
    sigma: &Weight,
    w: &Weight,
    quad: &Quadrature,
    kind: TransformKind,
    max_iter: usize,
    tol: f64,
) -> Result<PowerEstimate> {
    same_lattice(sigma.lattice(), w.lattice())?;
    let lattice = *sigma.lattice();
    let dim = lattice.dim();
    let cells = sigma.charged_cells();
    if cells.is_empty() || w.is_zero() {
        return Ok(PowerEstimate {
            norm: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let src: Vec<Point> = cells.iter().map(|&i| lattice.cell_center(i)).collect();
    let root_sigma: Vec<f64> = cells.iter().map(|&i| sigma.masses()[i].sqrt()).collect();
    let gens = kind.generators(dim);
    let nodes = quad.nodes();
    let targets = w.atoms();
    // v ↦ D^{1/2} M D^{1/2} v without storing M
    let apply = |v: &[f64]| -> Vec<f64> {
        let u: Vec<f64> = v.iter().zip(&root_sigma).map(|(a, s)| a * s).collect();
        let parts: Vec<Vec<f64>> = targets
            .par_chunks(16)
            .map(|xs| {
                let mut acc = vec![0.0; src.len()];
                for x in xs {
                    for &(t, wt) in &nodes {
                        for g in &gens {
                            let row: Vec<f64> = src
                                .iter()
                                .map(|y| g.dilated(dim, &[x.pos[0] - y[0], x.pos[1] - y[1]], t))
                                .collect();
                            let dot: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
                            let c = x.mass * wt * dot;
                            for (acc_a, r) in acc.iter_mut().zip(&row) {
                                *acc_a += c * r;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; src.len()];
        for p in &parts {
            for (o, q) in out.iter_mut().zip(p) {
                *o += q;
            }
        }
        out.iter().zip(&root_sigma).map(|(a, s)| a * s).collect()
    };
    let mut v: Vec<f64> = vec![1.0 / (src.len() as f64).sqrt(); src.len()];
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let mv = apply(&v);
        let new_lambda: f64 = mv.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = mv.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(PowerEstimate {
                norm: 0.0,
                iterations: it,
                converged: true,
            });
        }
        v = mv.iter().map(|a| a / norm).collect();
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs() {
            return Ok(PowerEstimate {
                norm: new_lambda.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            });
        }
        lambda = new_lambda;
    }
    Ok(PowerEstimate {
        norm: lambda.max(0.0).sqrt(),
        iterations: max_iter,
        converged: false,
    })
}
