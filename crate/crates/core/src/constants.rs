//! Estimators for the constants of the two-weight characterization and
//! numerical checkers for the auxiliary lemmas.
//!
//! Suprema over cubes range over the cubes of the given grid. Lemma
//! checkers return ratios whose corpus maxima are the measured implied
//! constants; no numeric threshold is assumed for them.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, DyadicGrid, GridParams, LevelSums};
use crate::error::{GwError, Result};
use crate::gfun::{box_integral, operator_norm_exact, strip_integral, whitney_integral, Quadrature, TransformKind};
use crate::kernels::{avg_operator, poisson_avg_atoms, Generator};
use crate::lattice::{Atom, GridFunction, Weight};
use crate::rng::trial_rng;

/// A supremum together with the cube attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CubeSup {
    pub value: f64,
    pub argmax: Option<DyadicCube>,
}

impl CubeSup {
    fn zero() -> Self {
        Self {
            value: 0.0,
            argmax: None,
        }
    }

    fn offer(&mut self, value: f64, cube: DyadicCube) {
        if value > self.value {
            self.value = value;
            self.argmax = Some(cube);
        }
    }
}

fn check_pair(sigma: &Weight, w: &Weight, grid: &DyadicGrid) -> Result<()> {
    if sigma.lattice() != grid.lattice() || w.lattice() != grid.lattice() {
        return Err(GwError::domain("weights and grid live on different lattices"));
    }
    Ok(())
}

/// `𝒜₂ = sup_I (σ(I)/|I|)(w(I)/|I|)`.
pub fn a2_constant(sigma: &Weight, w: &Weight, grid: &DyadicGrid) -> Result<CubeSup> {
    check_pair(sigma, w, grid)?;
    let s = grid.level_sums(sigma.masses());
    let ws = grid.level_sums(w.masses());
    let mut best = CubeSup::zero();
    for q in grid.all_cubes() {
        let v = grid.volume(&q);
        best.offer(s.get(grid, &q) * ws.get(grid, &q) / (v * v), q);
    }
    Ok(best)
}

/// `𝒯 = sup_I (box_integral(I) / σ(I))^{1/2}`.
pub fn testing_constant(
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    quad: &Quadrature,
) -> Result<CubeSup> {
    check_pair(sigma, w, grid)?;
    let s = grid.level_sums(sigma.masses());
    let ws = grid.level_sums(w.masses());
    let cubes: Vec<DyadicCube> = grid
        .all_cubes()
        .into_iter()
        .filter(|q| s.get(grid, q) > 0.0 && ws.get(grid, q) > 0.0)
        .collect();
    let vals: Vec<f64> = cubes
        .par_iter()
        .map(|q| (box_integral(grid, q, sigma, w, quad) / s.get(grid, q)).sqrt())
        .collect();
    let mut best = CubeSup::zero();
    for (q, v) in cubes.into_iter().zip(vals) {
        best.offer(v, q);
    }
    Ok(best)
}

/// `sup_Q ∫ l(Q)² / (l(Q) + dist(y, Q))^{2(n+1)} σ(dy) · w(Q)`.
pub fn half_poisson_constant(sigma: &Weight, w: &Weight, grid: &DyadicGrid) -> Result<CubeSup> {
    check_pair(sigma, w, grid)?;
    let ws = grid.level_sums(w.masses());
    let atoms = sigma.atoms();
    let p = 2 * (grid.lattice().dim() as i32 + 1);
    let mut best = CubeSup::zero();
    for q in grid.all_cubes() {
        let wq = ws.get(grid, &q);
        if wq == 0.0 {
            continue;
        }
        let l = grid.side(&q);
        let pieces = grid.pieces(&q);
        let tail: f64 = atoms
            .iter()
            .map(|a| {
                let d = pieces
                    .iter()
                    .map(|b| b.distance_to_point(&a.pos))
                    .fold(f64::INFINITY, f64::min);
                a.mass * l * l / (l + d).powi(p)
            })
            .sum();
        best.offer(tail * wq, q);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PivotalStrategy {
    /// Enumerate every dyadic partition; refused past the budget.
    Exact,
    /// Exact optimum over partitions by the tree recursion
    /// `Best(J) = max(v(J), Σ_{J' ∈ ch(J)} Best(J'))`.
    Tree,
    /// Split a cube whenever its children beat it one level down.
    Greedy,
    /// Best of `samples` random partitions per top cube.
    Sampled { samples: usize, seed: u64 },
}

impl PivotalStrategy {
    pub fn is_exact(&self) -> bool {
        matches!(self, PivotalStrategy::Exact | PivotalStrategy::Tree)
    }
}

pub const PARTITION_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PivotalEstimate {
    pub value: f64,
    pub strategy: PivotalStrategy,
    pub exact: bool,
    pub argmax: Option<DyadicCube>,
}

/// Partition values `v(J) = Σ_{K ∈ 𝒲_J} P(K, 1_{I⁰}σ)² w(K)` for the
/// descendants of one top cube.
struct PartitionValues<'a> {
    grid: &'a DyadicGrid,
    values: HashMap<DyadicCube, f64>,
}

impl<'a> PartitionValues<'a> {
    fn new(
        grid: &'a DyadicGrid,
        top: &DyadicCube,
        sigma: &Weight,
        w_sums: &LevelSums,
        whitney: &[crate::dyadic::WhitneyCollection],
    ) -> Self {
        let src = sigma.atoms_in(grid, top);
        let mut p_cache: HashMap<DyadicCube, f64> = HashMap::new();
        let mut values = HashMap::new();
        let mut stack = vec![*top];
        while let Some(j) = stack.pop() {
            let v: f64 = whitney[grid.ordinal(&j)]
                .cubes()
                .map(|k| {
                    let wk = w_sums.get(grid, k);
                    if wk == 0.0 {
                        return 0.0;
                    }
                    let p = *p_cache
                        .entry(*k)
                        .or_insert_with(|| poisson_avg_atoms(grid, k, &src));
                    p * p * wk
                })
                .sum();
            values.insert(j, v);
            if j.level < grid.depth() {
                stack.extend(grid.children(&j).expect("not at finest level"));
            }
        }
        Self { grid, values }
    }

    fn v(&self, j: &DyadicCube) -> f64 {
        self.values[j]
    }

    fn children(&self, j: &DyadicCube) -> Vec<DyadicCube> {
        if j.level < self.grid.depth() {
            self.grid.children(j).expect("not at finest level")
        } else {
            Vec::new()
        }
    }

    fn best(&self, j: &DyadicCube) -> f64 {
        let ch = self.children(j);
        if ch.is_empty() {
            return self.v(j);
        }
        let split: f64 = ch.iter().map(|c| self.best(c)).sum();
        self.v(j).max(split)
    }

    fn greedy(&self, j: &DyadicCube) -> f64 {
        let ch = self.children(j);
        let one_level: f64 = ch.iter().map(|c| self.v(c)).sum();
        if ch.is_empty() || one_level <= self.v(j) {
            self.v(j)
        } else {
            ch.iter().map(|c| self.greedy(c)).sum()
        }
    }

    fn sampled(&self, j: &DyadicCube, rng: &mut ChaCha8Rng) -> f64 {
        let ch = self.children(j);
        if ch.is_empty() || rng.random_bool(0.5) {
            self.v(j)
        } else {
            ch.iter().map(|c| self.sampled(c, rng)).sum()
        }
    }

    /// Number of dyadic partitions of `j`, capped just above the budget.
    fn partition_count(&self, j: &DyadicCube) -> u64 {
        let ch = self.children(j);
        let mut prod: u64 = 1;
        for c in &ch {
            prod = prod.saturating_mul(self.partition_count(c)).min(PARTITION_BUDGET + 1);
        }
        if ch.is_empty() {
            1
        } else {
            (1 + prod).min(PARTITION_BUDGET + 1)
        }
    }

    /// Values of all partitions of `j`.
    fn enumerate(&self, j: &DyadicCube) -> Vec<f64> {
        let mut out = vec![self.v(j)];
        let ch = self.children(j);
        if ch.is_empty() {
            return out;
        }
        let mut combos = vec![0.0];
        for c in &ch {
            let sub = self.enumerate(c);
            combos = combos
                .iter()
                .flat_map(|a| sub.iter().map(move |b| a + b))
                .collect();
        }
        out.extend(combos);
        out
    }
}

/// `𝒫 = sup_{I⁰, partition} (Σ_α Σ_{K ∈ 𝒲_{I_α}} P(K, 1_{I⁰}σ)² w(K) / σ(I⁰))^{1/2}`.
pub fn pivotal_constant(
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    strategy: PivotalStrategy,
) -> Result<PivotalEstimate> {
    check_pair(sigma, w, grid)?;
    let mut est = PivotalEstimate {
        value: 0.0,
        strategy,
        exact: strategy.is_exact(),
        argmax: None,
    };
    if sigma.is_zero() || w.is_zero() {
        return Ok(est);
    }
    let s = grid.level_sums(sigma.masses());
    let ws = grid.level_sums(w.masses());
    let whitney = grid.whitney_all();
    let tops: Vec<DyadicCube> = grid
        .all_cubes()
        .into_iter()
        .filter(|q| s.get(grid, q) > 0.0)
        .collect();
    let vals: Vec<Result<f64>> = tops
        .par_iter()
        .map(|top| {
            let pv = PartitionValues::new(grid, top, sigma, &ws, &whitney);
            let sum = match strategy {
                PivotalStrategy::Exact => {
                    if pv.partition_count(top) > PARTITION_BUDGET {
                        return Err(GwError::Refused(format!(
                            "exact pivotal enumeration exceeds {PARTITION_BUDGET} partitions; use the tree or sampled strategy"
                        )));
                    }
                    pv.enumerate(top).into_iter().fold(0.0, f64::max)
                }
                PivotalStrategy::Tree => pv.best(top),
                PivotalStrategy::Greedy => pv.greedy(top),
                PivotalStrategy::Sampled { samples, seed } => {
                    let mut rng = trial_rng(seed, grid.ordinal(top) as u64);
                    (0..samples.max(1))
                        .map(|_| pv.sampled(top, &mut rng))
                        .fold(0.0, f64::max)
                }
            };
            Ok((sum / s.get(grid, top)).sqrt())
        })
        .collect();
    for (q, v) in tops.into_iter().zip(vals) {
        let v = v?;
        if v > est.value {
            est.value = v;
            est.argmax = Some(q);
        }
    }
    Ok(est)
}

/// Value of the trivial partition `{I⁰}` at one top cube.
pub fn pivotal_trivial(sigma: &Weight, w: &Weight, grid: &DyadicGrid, top: &DyadicCube) -> Result<f64> {
    check_pair(sigma, w, grid)?;
    let m = crate::lattice::mass(sigma, grid, top)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    let src = sigma.atoms_in(grid, top);
    let ws = grid.level_sums(w.masses());
    let sum: f64 = grid
        .whitney(top)
        .cubes()
        .map(|k| poisson_avg_atoms(grid, k, &src).powi(2) * ws.get(grid, k))
        .sum();
    Ok((sum / m).sqrt())
}

/// Provenance block attached to every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes_per_octave: usize,
    pub grid: GridParams,
    pub cube_family: &'static str,
    pub poisson_average: &'static str,
    pub goodness: &'static str,
    pub testing_box: &'static str,
}

impl Provenance {
    pub fn new(grid: &DyadicGrid, quad: &Quadrature) -> Self {
        Self {
            t_min: quad.t_min(),
            t_max: quad.t_max(),
            nodes_per_octave: quad.per_octave(),
            grid: grid.params(),
            cube_family: "dyadic cubes of the grid inside the base cube",
            poisson_average: "P(K, mu) = sum over atoms of l(K) / (l(K) + dist(y, K))^(n+1)",
            goodness: "badness witnesses searched among ancestors inside the finite lattice universe",
            testing_box: "I x (0, l(I)] intersected with [t_min, t_max]",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub a2: f64,
    pub testing: f64,
    pub pivotal: PivotalEstimate,
    /// `𝒩 = 𝒜₂^{1/2} + 𝒯`.
    pub n_const: f64,
    /// `𝒢(t_min, t_max)`.
    pub g_norm: f64,
    /// `𝒢` recomputed with `t_min` halved.
    pub g_norm_half_tmin: f64,
    pub g_stable: bool,
    pub half_poisson: f64,
    pub a2_argmax: Option<DyadicCube>,
    pub testing_argmax: Option<DyadicCube>,
    pub provenance: Provenance,
    /// Wall-clock stamp; omitted unless explicitly requested so reports
    /// stay reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Relative change of `𝒢` under halving `t_min` tolerated as stable.
pub const G_STABILITY: f64 = 0.01;

pub fn constants_report(
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    quad: &Quadrature,
    strategy: PivotalStrategy,
) -> Result<ConstantsReport> {
    let a2 = a2_constant(sigma, w, grid)?;
    let testing = testing_constant(sigma, w, grid, quad)?;
    let pivotal = pivotal_constant(sigma, w, grid, strategy)?;
    let g = operator_norm_exact(sigma, w, quad, TransformKind::PoissonGradient)?;
    let half = Quadrature::new(quad.t_min() / 2.0, quad.t_max(), quad.per_octave())?;
    let g_half = operator_norm_exact(sigma, w, &half, TransformKind::PoissonGradient)?;
    let hp = half_poisson_constant(sigma, w, grid)?;
    Ok(ConstantsReport {
        a2: a2.value,
        testing: testing.value,
        pivotal,
        n_const: a2.value.sqrt() + testing.value,
        g_norm: g,
        g_norm_half_tmin: g_half,
        g_stable: g_half - g <= G_STABILITY * g.max(f64::MIN_POSITIVE),
        half_poisson: hp.value,
        a2_argmax: a2.argmax,
        testing_argmax: testing.argmax,
        provenance: Provenance::new(grid, quad),
        timestamp: None,
    })
}

/// `max_Q (σ(Q)²/|Q|²) w(Q) / ‖g(1_Q σ)‖²_{L²(w)}` over cubes where both
/// sides are positive.
pub fn necessity_a2_ratio(
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    quad: &Quadrature,
) -> Result<CubeSup> {
    check_pair(sigma, w, grid)?;
    if quad.t_max() < 4.0 * grid.lattice().side() {
        return Err(GwError::validation(
            "the necessity ratio needs t_max ≥ 4 times the base side",
        ));
    }
    let s = grid.level_sums(sigma.masses());
    let ws = grid.level_sums(w.masses());
    let cubes: Vec<DyadicCube> = grid
        .all_cubes()
        .into_iter()
        .filter(|q| s.get(grid, q) > 0.0 && ws.get(grid, q) > 0.0)
        .collect();
    let vals: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let src = sigma.atoms_in(grid, q);
            let den = strip_integral(&src, TransformKind::PoissonGradient, w, quad);
            let v = grid.volume(q);
            let num = s.get(grid, q).powi(2) / (v * v) * ws.get(grid, q);
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    let mut best = CubeSup::zero();
    for (q, v) in cubes.into_iter().zip(vals) {
        best.offer(v, q);
    }
    Ok(best)
}

/// `𝒫 / 𝒩`, zero when `𝒩 = 0`.
pub fn pivotal_lemma_ratio(report: &ConstantsReport) -> f64 {
    if report.n_const == 0.0 {
        0.0
    } else {
        report.pivotal.value / report.n_const
    }
}

/// `A^α_{QR} = l(Q)^{α/2} l(R)^{α/2} D(Q,R)^{-(n+α)} σ(Q)^{1/2} w(R)^{1/2}`
/// with `D(Q, R) = l(Q) + l(R) + d(Q, R)`.
pub fn bilinear_entry(
    grid: &DyadicGrid,
    alpha: f64,
    q: &DyadicCube,
    r: &DyadicCube,
    sigma_q: f64,
    w_r: f64,
) -> f64 {
    let (lq, lr) = (grid.side(q), grid.side(r));
    let d = lq + lr + grid.dist_cubes(q, r);
    let n = grid.lattice().dim() as f64;
    (lq * lr).powf(alpha / 2.0) * d.powf(-(n + alpha)) * (sigma_q * w_r).sqrt()
}

/// `Σ_{Q,R} A^α_{QR} x_Q y_R / (𝒜₂^{1/2} ‖x‖ ‖y‖)`, zero for `0/0`.
pub fn bilinear_form_ratio(
    grid: &DyadicGrid,
    alpha: f64,
    x: &[(DyadicCube, f64)],
    y: &[(DyadicCube, f64)],
    sigma: &Weight,
    w: &Weight,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(GwError::domain("α must be positive"));
    }
    let a2 = a2_constant(sigma, w, grid)?.value;
    let s = grid.level_sums(sigma.masses());
    let ws = grid.level_sums(w.masses());
    let mut lhs = 0.0;
    for (q, xq) in x {
        for (r, yr) in y {
            if *xq == 0.0 || *yr == 0.0 {
                continue;
            }
            lhs += bilinear_entry(grid, alpha, q, r, s.get(grid, q), ws.get(grid, r)) * xq * yr;
        }
    }
    let nx = x.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
    let ny = y.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
    let den = a2.sqrt() * nx * ny;
    Ok(if den == 0.0 { 0.0 } else { lhs / den })
}

/// Supremum of the bilinear ratio over all coefficient vectors: the
/// largest singular value of `A^α` over the cubes of the grid, divided by
/// `𝒜₂^{1/2}`. The matrix is entrywise nonnegative, so the supremum is
/// attained by nonnegative coefficients.
pub fn bilinear_sup(grid: &DyadicGrid, alpha: f64, sigma: &Weight, w: &Weight) -> Result<f64> {
    let a2 = a2_constant(sigma, w, grid)?.value;
    if a2 == 0.0 {
        return Ok(0.0);
    }
    let s = grid.level_sums(sigma.masses());
    let ws = grid.level_sums(w.masses());
    let qs: Vec<DyadicCube> = grid.all_cubes().into_iter().filter(|q| s.get(grid, q) > 0.0).collect();
    let rs: Vec<DyadicCube> = grid.all_cubes().into_iter().filter(|r| ws.get(grid, r) > 0.0).collect();
    let mut a = DMatrix::zeros(qs.len(), rs.len());
    for (i, q) in qs.iter().enumerate() {
        for (j, r) in rs.iter().enumerate() {
            a[(i, j)] = bilinear_entry(grid, alpha, q, r, s.get(grid, q), ws.get(grid, r));
        }
    }
    let top = a.singular_values().iter().cloned().fold(0.0, f64::max);
    Ok(top / a2.sqrt())
}

/// `‖A_r^σ f‖_{L²(w)} / (𝒜₂^{1/2} ‖f‖_σ)` with `𝒜₂` over `grid`.
pub fn averaging_ratio(
    f: &GridFunction,
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    r: f64,
) -> Result<f64> {
    check_pair(sigma, w, grid)?;
    let a2 = a2_constant(sigma, w, grid)?.value;
    let lattice = w.lattice();
    let mut num = 0.0;
    for i in w.charged_cells() {
        let a = avg_operator(f, sigma, r, &lattice.cell_center(i))?;
        num += a * a * w.masses()[i];
    }
    let norm = crate::lattice::l2_norm(f, sigma);
    let den = a2.sqrt() * norm;
    Ok(if den == 0.0 { 0.0 } else { num.sqrt() / den })
}

/// Operator norm of `A_r^σ : L²(σ) → L²(w)` divided by `𝒜₂^{1/2}`.
pub fn averaging_sup(sigma: &Weight, w: &Weight, grid: &DyadicGrid, r: f64) -> Result<f64> {
    check_pair(sigma, w, grid)?;
    if !(r > 0.0) {
        return Err(GwError::domain("averaging scale must be positive"));
    }
    let a2 = a2_constant(sigma, w, grid)?.value;
    if a2 == 0.0 {
        return Ok(0.0);
    }
    let lattice = *sigma.lattice();
    let dim = lattice.dim();
    let xs = w.charged_cells();
    let ys = sigma.charged_cells();
    let mut b = DMatrix::zeros(xs.len(), ys.len());
    for (i, &xc) in xs.iter().enumerate() {
        let x = lattice.cell_center(xc);
        for (j, &yc) in ys.iter().enumerate() {
            let y = lattice.cell_center(yc);
            if (0..dim).all(|a| y[a] >= x[a] - r / 2.0 && y[a] < x[a] + r / 2.0) {
                b[(i, j)] = (w.masses()[xc] * sigma.masses()[yc]).sqrt() / r.powi(dim as i32);
            }
        }
    }
    let top = b.singular_values().iter().cloned().fold(0.0, f64::max);
    Ok(top / a2.sqrt())
}

/// Configuration of the good-gain lemma: `R ⊂ K ⊂ S` with
/// `dist(R, ∂K) ≥ l(R)^γ l(K)^{1-γ}` and `fσ` vanishing on `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodGainConfig {
    pub r: DyadicCube,
    pub k: DyadicCube,
    pub s: DyadicCube,
    pub f: GridFunction,
}

pub fn check_good_gain(cfg: &GoodGainConfig, sigma: &Weight, grid: &DyadicGrid) -> Result<()> {
    if !(grid.contains(&cfg.k, &cfg.r) && grid.contains(&cfg.s, &cfg.k)) {
        return Err(GwError::domain("need R ⊂ K ⊂ S"));
    }
    let d = grid
        .boundary_distance(&cfg.r, &cfg.k)
        .expect("R inside K");
    if d < grid.goodness_threshold(&cfg.r, &cfg.k) {
        return Err(GwError::domain("R is too close to the boundary of K"));
    }
    if grid
        .cell_box(&cfg.s)
        .cells()
        .any(|i| cfg.f.value(i) * sigma.masses()[i] != 0.0)
    {
        return Err(GwError::domain("fσ must vanish on S"));
    }
    Ok(())
}

/// `∬_{W_R} |ψ_t * (fσ)|² w dt/t / ((l(R)/l(K)) P(K, |f|σ)² w(R))`.
pub fn good_gain_ratio(
    cfg: &GoodGainConfig,
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    psi: Generator,
    quad: &Quadrature,
) -> Result<f64> {
    check_pair(sigma, w, grid)?;
    check_good_gain(cfg, sigma, grid)?;
    let fw = sigma.times(&cfg.f);
    let lhs = whitney_integral(grid, &cfg.r, &fw, TransformKind::Psi(psi), w, quad);
    let abs: Vec<Atom> = fw
        .iter()
        .map(|a| Atom {
            pos: a.pos,
            mass: a.mass.abs(),
        })
        .collect();
    let wr = crate::lattice::mass(w, grid, &cfg.r)?;
    let rhs = grid.side(&cfg.r) / grid.side(&cfg.k) * poisson_avg_atoms(grid, &cfg.k, &abs).powi(2) * wr;
    Ok(if rhs == 0.0 { 0.0 } else { lhs / rhs })
}

/// Random admissible configuration: `S` a cube of level `≥ 1`, `K ⊂ S`,
/// `R ⊂ K` far enough from `∂K`, `f` random off `S`.
pub fn random_good_gain_config(grid: &DyadicGrid, rng: &mut ChaCha8Rng) -> Option<GoodGainConfig> {
    let depth = grid.depth();
    let lattice = *grid.lattice();
    for _ in 0..1000 {
        let ls = rng.random_range(1..=depth.saturating_sub(2).max(1));
        let s = random_cube(grid, ls, rng);
        let lk = rng.random_range(ls..=depth);
        let k = random_descendant(grid, &s, lk, rng);
        let lr = rng.random_range(lk..=depth);
        let r = random_descendant(grid, &k, lr, rng);
        let d = grid.boundary_distance(&r, &k).expect("descendant");
        if d < grid.goodness_threshold(&r, &k) {
            continue;
        }
        let inside: Vec<usize> = grid.cell_box(&s).cells().collect();
        let values: Vec<f64> = (0..lattice.cell_count())
            .map(|i| {
                if inside.contains(&i) {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        let f = GridFunction::new(lattice, values).expect("finite values");
        return Some(GoodGainConfig { r, k, s, f });
    }
    None
}

fn random_cube(grid: &DyadicGrid, level: u32, rng: &mut ChaCha8Rng) -> DyadicCube {
    let n = grid.level_len(level);
    grid.level_cubes(level)
        .nth(rng.random_range(0..n))
        .expect("index in range")
}

fn random_descendant(grid: &DyadicGrid, cube: &DyadicCube, level: u32, rng: &mut ChaCha8Rng) -> DyadicCube {
    let mut c = *cube;
    while c.level < level {
        let ch = grid.children(&c).expect("above target level");
        c = ch[rng.random_range(0..ch.len())];
    }
    c
}

/// Same configuration with `R` replaced by each of its children charged
/// by `w`; `l(R)/l(K)` halves and the hypotheses persist.
pub fn halved_configs(cfg: &GoodGainConfig, grid: &DyadicGrid) -> Vec<GoodGainConfig> {
    if cfg.r.level >= grid.depth() {
        return Vec::new();
    }
    grid.children(&cfg.r)
        .expect("not at finest level")
        .into_iter()
        .map(|r| GoodGainConfig { r, ..cfg.clone() })
        .collect()
}
