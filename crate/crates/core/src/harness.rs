//! Run configuration, weight-pair corpora and the experiment drivers behind
//! the `gw` subcommands.
//!
//! Corpus members are described physically (densities, atom positions,
//! coarse block values) and discretized on demand, so the same instance
//! can be compared across depths. All randomness flows from `seed`
//! through [`trial_rng`] with a fixed stream per purpose.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{
    averaging_sup, bilinear_sup, constants_report, good_gain_ratio, halved_configs,
    necessity_a2_ratio, pivotal_constant, pivotal_lemma_ratio, random_good_gain_config,
    ConstantsReport, PivotalStrategy,
};
use crate::dyadic::{default_gamma, default_r, estimate_pi_good, pi_good_level, DyadicGrid};
use crate::error::{GwError, Result};
use crate::gfun::{strip_integral, Quadrature, TransformKind, WhitneyTable, DEFAULT_NODES_PER_OCTAVE};
use crate::kernels::Generator;
use crate::lattice::{Atom, GridFunction, LatticeSpec, Weight};
use crate::rng::trial_rng;
use crate::stopping::{
    build_tree, check_by_construct, control_bound, control_by_tau, quasi_orthogonality_ratio,
    ByConstructReport, ControlReport, StoppingParams,
};
use crate::transform::{expand, pythagoras_residual};

// rng streams; instance i of a corpus uses CORPUS_STREAM + i
const CORPUS_STREAM: u64 = 1 << 20;
const GOODGAIN_STREAM: u64 = 2 << 20;
const SHIFT_STREAM: u64 = 3 << 20;
const GRID_STREAM: u64 = 4 << 20;

/// Sites per axis available to random atoms.
const ATOM_SITES: u32 = 8;

/// `|z|` tolerated by the averaging identity check.
pub const Z_LIMIT: f64 = 3.0;
/// Slack on `𝒯 ≤ 𝒢` for quadrature and eigensolver error.
pub const TESTING_SLACK: f64 = 1e-3;
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Lebesgue,
    Atoms,
    Cantor,
    Uniform,
    Power,
}

impl WeightKind {
    pub const ALL: [WeightKind; 5] = [
        WeightKind::Lebesgue,
        WeightKind::Atoms,
        WeightKind::Cantor,
        WeightKind::Uniform,
        WeightKind::Power,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub size: usize,
    pub kinds: Vec<WeightKind>,
    /// Append the zero-σ, zero-w and shared-atom fixtures.
    pub degenerate: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            size: 30,
            kinds: WeightKind::ALL.to_vec(),
            degenerate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub depth: u32,
    pub corner: Option<Vec<f64>>,
    pub side: f64,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub r: Option<u32>,
    pub gamma: Option<f64>,
    pub nodes_per_octave: usize,
    pub c0: f64,
    pub pivotal: PivotalStrategy,
    pub corpus: CorpusConfig,
    pub shifts: usize,
    pub identity_fixtures: usize,
    /// Goodness parameter for the identity check; `None` uses `r`.
    pub identity_r: Option<u32>,
    pub goodgain_configs: usize,
    pub bilinear_alpha: f64,
    /// Averaging scales as fractions of the base side.
    pub averaging_scales: Vec<f64>,
    pub pi_good_trials: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            depth: 6,
            corner: None,
            side: 1.0,
            t_min: None,
            t_max: None,
            r: None,
            gamma: None,
            nodes_per_octave: DEFAULT_NODES_PER_OCTAVE,
            c0: 4.0,
            pivotal: PivotalStrategy::Tree,
            corpus: CorpusConfig::default(),
            shifts: 500,
            identity_fixtures: 5,
            identity_r: None,
            goodgain_configs: 200,
            bilinear_alpha: 1.0,
            averaging_scales: vec![0.5, 0.25, 0.125],
            pi_good_trials: 2000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GwError::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.lattice()?;
        Ok(cfg)
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        self.lattice_at(self.depth)
    }

    pub fn lattice_at(&self, depth: u32) -> Result<LatticeSpec> {
        let corner = self.corner.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        let l = LatticeSpec::new(self.dim, &corner, self.side, depth)?;
        match (self.t_min, self.t_max) {
            (None, None) => Ok(l),
            (a, b) => l.with_truncation(a.unwrap_or(l.t_min()), b.unwrap_or(l.t_max())),
        }
    }

    pub fn r(&self) -> u32 {
        self.r.unwrap_or_else(|| default_r(self.dim))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| default_gamma(self.dim))
    }

    pub fn grid(&self, lattice: LatticeSpec) -> DyadicGrid {
        DyadicGrid::standard(lattice).with_r(self.r()).with_gamma(self.gamma())
    }

    pub fn quadrature(&self, lattice: &LatticeSpec) -> Result<Quadrature> {
        Quadrature::new(lattice.t_min(), lattice.t_max(), self.nodes_per_octave)
    }

    pub fn stopping_params(&self, pivotal: f64) -> StoppingParams {
        StoppingParams {
            c0: self.c0,
            ..StoppingParams::new(pivotal)
        }
    }
}

/// Weight given independently of the lattice; masses are taken at cell
/// centers when discretized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightSpec {
    Zero,
    Lebesgue { density: f64 },
    /// Positions in unit coordinates of the base cube.
    Atoms { atoms: Vec<([f64; 2], f64)> },
    /// Middle-thirds set after `digits` steps in each coordinate.
    Cantor { digits: u32, total: f64 },
    /// Piecewise constant density on `blocks^n` equal subcubes.
    Blocks { blocks: usize, values: Vec<f64> },
    /// Density `|u − center|^exponent` in unit coordinates.
    Power { center: [f64; 2], exponent: f64 },
}

fn unit_coords(lattice: &LatticeSpec, cell: usize) -> [f64; 2] {
    let c = lattice.cell_center(cell);
    let k = lattice.corner();
    let mut u = [0.0; 2];
    for a in 0..lattice.dim() {
        u[a] = (c[a] - k[a]) / lattice.side();
    }
    u
}

fn block_index(u: &[f64; 2], dim: usize, blocks: usize) -> usize {
    let mut idx = 0;
    for a in (0..dim).rev() {
        let b = ((u[a] * blocks as f64).floor() as usize).min(blocks - 1);
        idx = idx * blocks + b;
    }
    idx
}

fn in_cantor(u: f64, digits: u32) -> bool {
    let mut x = u;
    for _ in 0..digits {
        x *= 3.0;
        let d = x.floor();
        if d == 1.0 {
            return false;
        }
        x -= d;
    }
    true
}

impl WeightSpec {
    pub fn discretize(&self, lattice: LatticeSpec) -> Result<Weight> {
        let dim = lattice.dim();
        let n = lattice.cell_count();
        let vol = lattice.cell_volume();
        let masses = match self {
            WeightSpec::Zero => vec![0.0; n],
            WeightSpec::Lebesgue { density } => vec![density * vol; n],
            WeightSpec::Atoms { atoms } => {
                let mut m = vec![0.0; n];
                let k = lattice.corner();
                for (u, mass) in atoms {
                    let x: Vec<f64> = (0..dim).map(|a| k[a] + u[a] * lattice.side()).collect();
                    let cell = lattice
                        .locate(&x)
                        .ok_or_else(|| GwError::validation("atom outside the base cube"))?;
                    m[cell] += mass;
                }
                m
            }
            WeightSpec::Cantor { digits, total } => {
                // fewer digits on coarse lattices so every retained interval
                // still holds a cell center
                let fit = (lattice.depth() as f64 * 2f64.ln() / 3f64.ln()).floor() as u32;
                let digits = (*digits).min(fit);
                let inside: Vec<bool> = (0..n)
                    .map(|i| {
                        let u = unit_coords(&lattice, i);
                        (0..dim).all(|a| in_cantor(u[a], digits))
                    })
                    .collect();
                let count = inside.iter().filter(|&&b| b).count() as f64;
                inside
                    .into_iter()
                    .map(|b| if b { total / count } else { 0.0 })
                    .collect()
            }
            WeightSpec::Blocks { blocks, values } => {
                if *blocks == 0 || values.len() != blocks.pow(dim as u32) {
                    return Err(GwError::validation("block density needs blocks^n values"));
                }
                (0..n)
                    .map(|i| values[block_index(&unit_coords(&lattice, i), dim, *blocks)] * vol)
                    .collect()
            }
            WeightSpec::Power { center, exponent } => (0..n)
                .map(|i| {
                    let u = unit_coords(&lattice, i);
                    let d = (0..dim).map(|a| (u[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                    // a center sitting on a cell center is moved off by h/4
                    let d = d.max(0.25 / lattice.per_axis() as f64);
                    d.powf(*exponent) * vol
                })
                .collect(),
        };
        Weight::new(lattice, masses)
    }

    pub fn random(kind: WeightKind, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let point = |rng: &mut ChaCha8Rng| {
            let mut p = [0.0; 2];
            for c in p.iter_mut().take(dim) {
                *c = rng.random_range(0.0..1.0);
            }
            p
        };
        match kind {
            WeightKind::Lebesgue => WeightSpec::Lebesgue {
                density: rng.random_range(0.5..2.0),
            },
            WeightKind::Atoms => {
                // centers of level-3 cubes: every lattice of depth ≥ 3 moves
                // them by the same h/2, so pairwise distances do not depend
                // on the depth
                let k = rng.random_range(1..=4);
                let site = |rng: &mut ChaCha8Rng| {
                    let mut p = [0.0; 2];
                    for c in p.iter_mut().take(dim) {
                        *c = (rng.random_range(0..ATOM_SITES) as f64 + 0.5) / ATOM_SITES as f64;
                    }
                    p
                };
                WeightSpec::Atoms {
                    atoms: (0..k)
                        .map(|_| (site(rng), rng.random_range(0.2..1.0) / k as f64))
                        .collect(),
                }
            }
            WeightKind::Cantor => WeightSpec::Cantor {
                digits: 3,
                total: rng.random_range(0.5..2.0),
            },
            WeightKind::Uniform => {
                let blocks: usize = if dim == 1 { 8 } else { 4 };
                WeightSpec::Blocks {
                    blocks,
                    values: (0..blocks.pow(dim as u32))
                        .map(|_| {
                            if rng.random_bool(0.2) {
                                0.0
                            } else {
                                rng.random_range(0.0..1.0)
                            }
                        })
                        .collect(),
                }
            }
            WeightKind::Power => WeightSpec::Power {
                center: point(rng),
                exponent: rng.random_range(-0.6..1.5),
            },
        }
    }
}

/// Piecewise constant test function on `blocks^n` subcubes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub blocks: usize,
    pub values: Vec<f64>,
}

impl FunctionSpec {
    /// Signed values of order one with sparse spikes `e^{u}`, `u ∈ [2, 6)`,
    /// on about 8% of the blocks, so that averages over small cubes can
    /// exceed ten times the average over their stopping parent.
    pub fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let blocks: usize = if dim == 1 { 64 } else { 8 };
        let values = (0..blocks.pow(dim as u32))
            .map(|_| {
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let m = if rng.random_bool(0.08) {
                    rng.random_range(2.0..6.0f64).exp()
                } else {
                    rng.random_range(0.5..1.5)
                };
                s * m
            })
            .collect();
        Self { blocks, values }
    }

    pub fn discretize(&self, lattice: LatticeSpec) -> Result<GridFunction> {
        let dim = lattice.dim();
        if self.blocks == 0 || self.values.len() != self.blocks.pow(dim as u32) {
            return Err(GwError::validation("block function needs blocks^n values"));
        }
        GridFunction::new(
            lattice,
            (0..lattice.cell_count())
                .map(|i| self.values[block_index(&unit_coords(&lattice, i), dim, self.blocks)])
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: usize,
    pub label: String,
    pub sigma: WeightSpec,
    pub w: WeightSpec,
    pub f: FunctionSpec,
}

pub struct Instance {
    pub spec: InstanceSpec,
    pub sigma: Weight,
    pub w: Weight,
    pub f: GridFunction,
}

impl InstanceSpec {
    pub fn build(&self, lattice: LatticeSpec) -> Result<Instance> {
        Ok(Instance {
            spec: self.clone(),
            sigma: self.sigma.discretize(lattice)?,
            w: self.w.discretize(lattice)?,
            f: self.f.discretize(lattice)?,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.label.starts_with("fixture/")
    }
}

fn kind_name(k: WeightKind) -> &'static str {
    match k {
        WeightKind::Lebesgue => "lebesgue",
        WeightKind::Atoms => "atoms",
        WeightKind::Cantor => "cantor",
        WeightKind::Uniform => "uniform",
        WeightKind::Power => "power",
    }
}

/// The three degenerate fixtures: zero σ, zero w, one shared atom.
pub fn degenerate_fixtures(dim: usize, first_id: usize) -> Vec<InstanceSpec> {
    let f = FunctionSpec {
        blocks: 1,
        values: vec![1.0],
    };
    let centre = [0.3, if dim == 2 { 0.6 } else { 0.0 }];
    let atom = WeightSpec::Atoms {
        atoms: vec![(centre, 1.0)],
    };
    let leb = WeightSpec::Lebesgue { density: 1.0 };
    [
        ("fixture/zero_sigma", WeightSpec::Zero, leb.clone()),
        ("fixture/zero_w", leb, WeightSpec::Zero),
        ("fixture/shared_atom", atom.clone(), atom),
    ]
    .into_iter()
    .enumerate()
    .map(|(k, (label, sigma, w))| InstanceSpec {
        id: first_id + k,
        label: label.to_string(),
        sigma,
        w,
        f: f.clone(),
    })
    .collect()
}

/// Corpus of `size` random pairs followed by the degenerate fixtures when
/// enabled. Instance `i` depends only on `(seed, i)`.
pub fn corpus(cfg: &RunConfig) -> Result<Vec<InstanceSpec>> {
    let kinds = &cfg.corpus.kinds;
    if kinds.is_empty() && cfg.corpus.size > 0 {
        return Err(GwError::validation("corpus needs at least one weight kind"));
    }
    let k = kinds.len().max(1);
    let mut out: Vec<InstanceSpec> = (0..cfg.corpus.size)
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, CORPUS_STREAM + i as u64);
            let ks = kinds[i % k];
            let kw = kinds[(i + i / k) % k];
            InstanceSpec {
                id: i,
                label: format!("{}/{}", kind_name(ks), kind_name(kw)),
                sigma: WeightSpec::random(ks, cfg.dim, &mut rng),
                w: WeightSpec::random(kw, cfg.dim, &mut rng),
                f: FunctionSpec::random(cfg.dim, &mut rng),
            }
        })
        .collect();
    if cfg.corpus.degenerate {
        let n = out.len();
        out.extend(degenerate_fixtures(cfg.dim, n));
    }
    Ok(out)
}

// ---------------------------------------------------------------- constants

pub fn run_constants(cfg: &RunConfig, sigma: &Weight, w: &Weight) -> Result<ConstantsReport> {
    let lattice = *sigma.lattice();
    constants_report(sigma, w, &cfg.grid(lattice), &cfg.quadrature(&lattice)?, cfg.pivotal)
}

// ---------------------------------------------------------------- identity

/// Every shift gives the same sum when no cube can be bad; the minimum
/// sample size suffices.
const ALL_GOOD_SHIFTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityStats {
    /// Full-strip integral over `(h/2, s]`.
    pub full: f64,
    /// Shift average of `Σ_{R good} W_R / π_{level(R)}`.
    pub mean: f64,
    pub difference: f64,
    pub std_error: f64,
    pub z: f64,
    pub shifts: usize,
    pub r: u32,
    /// `π_good` per level in the truncated model.
    pub pi_good: Vec<f64>,
}

impl IdentityStats {
    /// Every cube good, so each shift must reproduce the full integral.
    pub fn all_good(&self) -> bool {
        self.pi_good.iter().all(|&p| p == 1.0)
    }

    pub fn pass(&self) -> bool {
        if self.all_good() {
            let scale = self.full.abs().max(f64::MIN_POSITIVE);
            self.difference.abs() <= 1e-10 * scale && self.std_error <= 1e-10 * scale
        } else {
            self.z.abs() <= Z_LIMIT
        }
    }
}

/// Monte Carlo check of `full = E_β Σ_{R good} W_R / π_{level(R)}`.
///
/// `lattice` should carry the Whitney truncation `(h/2, s]` so that the
/// regions `W_R` tile the strip being integrated.
#[allow(clippy::too_many_arguments)]
pub fn verify_identity(
    fw: &[Atom],
    w: &Weight,
    lattice: LatticeSpec,
    r: u32,
    gamma: f64,
    kind: TransformKind,
    shifts: usize,
    seed: u64,
) -> Result<IdentityStats> {
    if shifts < 100 {
        return Err(GwError::validation(format!("need at least 100 shifts, got {shifts}")));
    }
    let quad = Quadrature::for_lattice(&lattice);
    let full = strip_integral(fw, kind, w, &quad);
    let table = WhitneyTable::new(fw, kind, w, &quad);
    let pi: Vec<f64> = (0..=lattice.depth())
        .map(|j| pi_good_level(lattice, r, gamma, j))
        .collect();
    if let Some(j) = pi.iter().position(|&p| p == 0.0) {
        return Err(GwError::domain(format!("no good cubes at level {j}; lower r")));
    }
    let samples: Vec<f64> = (0..shifts)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, SHIFT_STREAM + t as u64);
            let grid = DyadicGrid::random(lattice, &mut rng).with_r(r).with_gamma(gamma);
            (0..=lattice.depth())
                .map(|j| {
                    grid.level_cubes(j)
                        .filter(|q| grid.is_good(q))
                        .map(|q| table.region(&grid, &q))
                        .sum::<f64>()
                        / pi[j as usize]
                })
                .sum()
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let difference = mean - full;
    let z = if std_error > 0.0 {
        difference / std_error
    } else if difference.abs() <= 1e-12 * full.abs() {
        0.0
    } else {
        f64::INFINITY.copysign(difference)
    };
    Ok(IdentityStats {
        full,
        mean,
        difference,
        std_error,
        z,
        shifts,
        r,
        pi_good: pi,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRecord {
    pub fixture: String,
    pub regime: &'static str,
    pub stats: IdentityStats,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRun {
    pub records: Vec<IdentityRecord>,
    pub pass: bool,
}

/// The identity on the first `identity_fixtures` corpus pairs plus the
/// zero fixture, and the all-good regime `r > depth` on the first pair.
pub fn cmd_verify_identity(cfg: &RunConfig) -> Result<IdentityRun> {
    let lattice = cfg.lattice()?.whitney_truncation();
    let r = cfg.identity_r.unwrap_or_else(|| cfg.r());
    let kind = TransformKind::Psi(Generator::DtPoisson);
    let specs = corpus(cfg)?;
    let mut fixtures: Vec<&InstanceSpec> = specs
        .iter()
        .filter(|s| !s.is_degenerate())
        .take(cfg.identity_fixtures)
        .collect();
    let zero = degenerate_fixtures(cfg.dim, specs.len())
        .into_iter()
        .find(|s| s.label == "fixture/zero_sigma")
        .expect("fixture list");
    fixtures.push(&zero);
    let mut records = Vec::new();
    for (k, spec) in fixtures.iter().enumerate() {
        let inst = spec.build(lattice)?;
        let fw = inst.sigma.times(&inst.f);
        let stats = verify_identity(&fw, &inst.w, lattice, r, cfg.gamma(), kind, cfg.shifts, cfg.seed)?;
        let all_good = k == 0;
        let pass = stats.pass();
        records.push(IdentityRecord {
            fixture: format!("{}:{}", spec.id, spec.label),
            regime: "sampled",
            stats,
            pass,
        });
        if all_good {
            let stats = verify_identity(
                &fw,
                &inst.w,
                lattice,
                lattice.depth() + 1,
                cfg.gamma(),
                kind,
                ALL_GOOD_SHIFTS,
                cfg.seed,
            )?;
            let pass = stats.pass() && stats.all_good();
            records.push(IdentityRecord {
                fixture: format!("{}:{}", spec.id, spec.label),
                regime: "all_good",
                stats,
                pass,
            });
        }
    }
    let pass = records.iter().all(|r| r.pass);
    Ok(IdentityRun { records, pass })
}

// ---------------------------------------------------------------- equivalence

/// `a / b` with `0/0 = 0`.
pub fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ratios {
    pub g_over_n: f64,
    pub sqrt_a2_over_g: f64,
    pub t_over_g: f64,
    pub p_over_n: f64,
}

impl Ratios {
    pub fn of(report: &ConstantsReport) -> Self {
        Self {
            g_over_n: ratio(report.g_norm, report.n_const),
            sqrt_a2_over_g: ratio(report.a2.sqrt(), report.g_norm),
            t_over_g: ratio(report.testing, report.g_norm),
            p_over_n: pivotal_lemma_ratio(report),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceRecord {
    pub id: usize,
    pub label: String,
    pub report: ConstantsReport,
    pub ratios: Ratios,
    /// Instance value of the necessity ratio.
    pub necessity: f64,
    pub testing_ok: bool,
    pub necessity_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceSummary {
    pub instances: usize,
    /// Instances with `𝒩 > 0`, over which the `𝒢/𝒩` range is taken.
    pub nondegenerate: usize,
    pub g_over_n_min: f64,
    pub g_over_n_max: f64,
    pub g_over_n_median: f64,
    /// `c₂ / c₁`.
    pub spread: f64,
    pub c_nec: f64,
    pub c_piv: f64,
    pub testing_violations: usize,
    pub necessity_violations: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceRun {
    pub depth: u32,
    pub records: Vec<EquivalenceRecord>,
    pub summary: EquivalenceSummary,
}

pub fn equivalence(cfg: &RunConfig, specs: &[InstanceSpec]) -> Result<EquivalenceRun> {
    let lattice = cfg.lattice()?;
    let grid = cfg.grid(lattice);
    let quad = cfg.quadrature(&lattice)?;
    let mut records = Vec::with_capacity(specs.len());
    for spec in specs {
        let inst = spec.build(lattice)?;
        let report = constants_report(&inst.sigma, &inst.w, &grid, &quad, cfg.pivotal)?;
        let necessity = necessity_a2_ratio(&inst.sigma, &inst.w, &grid, &quad)?.value;
        records.push(EquivalenceRecord {
            id: spec.id,
            label: spec.label.clone(),
            ratios: Ratios::of(&report),
            testing_ok: report.testing <= report.g_norm * (1.0 + TESTING_SLACK),
            report,
            necessity,
            necessity_ok: true,
        });
    }
    let c_nec = records.iter().map(|r| r.necessity).fold(0.0, f64::max);
    for r in &mut records {
        r.necessity_ok = r.report.a2 <= c_nec * r.report.g_norm.powi(2) * (1.0 + 1e-9);
    }
    let mut gn: Vec<f64> = records
        .iter()
        .filter(|r| r.report.n_const > 0.0)
        .map(|r| r.ratios.g_over_n)
        .collect();
    gn.sort_by(f64::total_cmp);
    let (lo, hi, med) = if gn.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let m = gn.len();
        let med = if m % 2 == 1 {
            gn[m / 2]
        } else {
            (gn[m / 2 - 1] + gn[m / 2]) / 2.0
        };
        (gn[0], gn[m - 1], med)
    };
    let testing_violations = records.iter().filter(|r| !r.testing_ok).count();
    let necessity_violations = records.iter().filter(|r| !r.necessity_ok).count();
    let finite = records.iter().all(|r| {
        let q = r.ratios;
        [q.g_over_n, q.sqrt_a2_over_g, q.t_over_g, q.p_over_n]
            .iter()
            .all(|v| v.is_finite())
    });
    let summary = EquivalenceSummary {
        instances: records.len(),
        nondegenerate: gn.len(),
        g_over_n_min: lo,
        g_over_n_max: hi,
        g_over_n_median: med,
        spread: ratio(hi, lo),
        c_nec,
        c_piv: records.iter().map(|r| r.ratios.p_over_n).fold(0.0, f64::max),
        testing_violations,
        necessity_violations,
        pass: finite && testing_violations == 0 && necessity_violations == 0,
    };
    Ok(EquivalenceRun {
        depth: lattice.depth(),
        records,
        summary,
    })
}

pub fn cmd_equivalence(cfg: &RunConfig) -> Result<EquivalenceRun> {
    let specs = corpus(cfg)?;
    if specs.is_empty() {
        return Err(GwError::validation("corpus is empty"));
    }
    equivalence(cfg, &specs)
}

#[derive(Serialize)]
struct EquivalenceRow<'a> {
    id: usize,
    label: &'a str,
    a2: f64,
    testing: f64,
    pivotal: f64,
    n_const: f64,
    g_norm: f64,
    g_norm_half_tmin: f64,
    half_poisson: f64,
    g_over_n: f64,
    sqrt_a2_over_g: f64,
    t_over_g: f64,
    p_over_n: f64,
    necessity: f64,
    testing_ok: bool,
    necessity_ok: bool,
}

pub fn write_equivalence_csv<W: Write>(run: &EquivalenceRun, out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for r in &run.records {
        wr.serialize(EquivalenceRow {
            id: r.id,
            label: &r.label,
            a2: r.report.a2,
            testing: r.report.testing,
            pivotal: r.report.pivotal.value,
            n_const: r.report.n_const,
            g_norm: r.report.g_norm,
            g_norm_half_tmin: r.report.g_norm_half_tmin,
            half_poisson: r.report.half_poisson,
            g_over_n: r.ratios.g_over_n,
            sqrt_a2_over_g: r.ratios.sqrt_a2_over_g,
            t_over_g: r.ratios.t_over_g,
            p_over_n: r.ratios.p_over_n,
            necessity: r.necessity,
            testing_ok: r.testing_ok,
            necessity_ok: r.necessity_ok,
        })
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| GwError::io("<csv>", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> GwError {
    GwError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

// ---------------------------------------------------------------- stopping

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingRun {
    pub pivotal: f64,
    pub params: StoppingParams,
    pub nodes: usize,
    pub quasi_orthogonality: f64,
    pub control: ControlReport,
    pub control_bound: f64,
    pub by_construct: ByConstructReport,
    pub tree: serde_json::Value,
    pub pass: bool,
}

pub fn run_stopping(cfg: &RunConfig, f: &GridFunction, sigma: &Weight, w: &Weight) -> Result<StoppingRun> {
    let grid = cfg.grid(*sigma.lattice());
    let pivotal = pivotal_constant(sigma, w, &grid, cfg.pivotal)?.value;
    let params = cfg.stopping_params(pivotal);
    let tree = build_tree(f, sigma, w, &grid, params)?;
    let control = control_by_tau(&tree, f, sigma, &grid)?;
    let bound = control_bound(&params);
    let by_construct = check_by_construct(&tree, &grid);
    Ok(StoppingRun {
        pivotal,
        params,
        nodes: tree.len(),
        quasi_orthogonality: quasi_orthogonality_ratio(&tree, f, sigma, &grid),
        pass: control.governed <= bound * (1.0 + 1e-12) && by_construct.violations == 0,
        control,
        control_bound: bound,
        by_construct,
        tree: tree.to_json(&grid),
    })
}

// ---------------------------------------------------------------- lemmas

pub const LEMMAS: [&str; 8] = [
    "orthogonality",
    "goodgain",
    "pivotal",
    "necessity",
    "bilinear",
    "averaging",
    "quasi",
    "control",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub lemma: String,
    pub depth: u32,
    pub max_ratio: f64,
    /// Instance (or configuration) attaining the maximum.
    pub argmax: Option<String>,
    pub samples: usize,
    pub alt_depth: u32,
    pub alt_max_ratio: f64,
    /// `|max − alt_max| / max`.
    pub depth_delta: f64,
    /// Value the maximum is checked against, when the lemma has one.
    pub bound: Option<f64>,
    pub pass: bool,
}

struct LemmaValue {
    max: f64,
    argmax: Option<String>,
    samples: usize,
    bound: Option<f64>,
}

fn max_over<I: IntoIterator<Item = (String, f64)>>(items: I) -> (f64, Option<String>, usize) {
    let mut best = (0.0, None, 0);
    for (label, v) in items {
        best.2 += 1;
        if v > best.0 || best.1.is_none() && v >= best.0 {
            best.0 = v;
            best.1 = Some(label);
        }
    }
    best
}

fn instance_label(s: &InstanceSpec) -> String {
    format!("{}:{}", s.id, s.label)
}

/// `(label, ratio)` per configuration, and the ratios of the halved variants.
pub type GoodGainSweep = (Vec<(String, f64)>, Vec<f64>);
type GoodGainSample = (String, f64, Vec<f64>);

/// Good-gain ratios of random admissible configurations and of their
/// halved variants `R → child of R`.

pub fn good_gain_sweep(cfg: &RunConfig, specs: &[InstanceSpec], depth: u32) -> Result<GoodGainSweep> {
    let lattice = cfg.lattice_at(depth)?;
    let grid = cfg.grid(lattice);
    let quad = cfg.quadrature(&lattice)?;
    let pool: Vec<&InstanceSpec> = specs.iter().filter(|s| !s.is_degenerate()).collect();
    if pool.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let insts: Vec<Instance> = pool.iter().map(|s| s.build(lattice)).collect::<Result<_>>()?;
    let results: Vec<Result<Option<GoodGainSample>>> = (0..cfg.goodgain_configs)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(cfg.seed, GOODGAIN_STREAM + k as u64);
            let Some(c) = random_good_gain_config(&grid, &mut rng) else {
                return Ok(None);
            };
            let inst = &insts[k % insts.len()];
            let psi = Generator::DtPoisson;
            let base = good_gain_ratio(&c, &inst.sigma, &inst.w, &grid, psi, &quad)?;
            let halved = halved_configs(&c, &grid)
                .iter()
                .map(|h| good_gain_ratio(h, &inst.sigma, &inst.w, &grid, psi, &quad))
                .collect::<Result<Vec<f64>>>()?;
            let label = format!(
                "config {k} on {}: R=({},{:?}) K=({},{:?}) S=({},{:?})",
                instance_label(&inst.spec),
                c.r.level,
                c.r.index,
                c.k.level,
                c.k.index,
                c.s.level,
                c.s.index
            );
            Ok(Some((label, base, halved)))
        })
        .collect();
    let mut base = Vec::new();
    let mut halved = Vec::new();
    for r in results {
        if let Some((label, b, h)) = r? {
            base.push((label, b));
            halved.extend(h);
        }
    }
    Ok((base, halved))
}

fn lemma_value(cfg: &RunConfig, lemma: &str, specs: &[InstanceSpec], depth: u32) -> Result<LemmaValue> {
    let lattice = cfg.lattice_at(depth)?;
    let grid = cfg.grid(lattice);
    let quad = cfg.quadrature(&lattice)?;
    let pool: Vec<&InstanceSpec> = specs.iter().collect();
    let per_instance = |g: &(dyn Fn(&Instance) -> Result<f64> + Sync)| -> Result<(f64, Option<String>, usize)> {
        let vals: Vec<Result<(String, f64)>> = pool
            .par_iter()
            .map(|s| {
                let inst = s.build(lattice)?;
                Ok((instance_label(s), g(&inst)?))
            })
            .collect();
        Ok(max_over(vals.into_iter().collect::<Result<Vec<_>>>()?))
    };
    let (max, argmax, samples, bound) = match lemma {
        "orthogonality" => {
            let (m, a, n) = per_instance(&|i| {
                let e = expand(&i.f, &i.sigma, &grid, 0)?;
                Ok(pythagoras_residual(&i.f, &i.sigma, &e, &grid))
            })?;
            (m, a, n, Some(ORTHOGONALITY_TOL))
        }
        "goodgain" => {
            let (base, halved) = good_gain_sweep(cfg, specs, depth)?;
            let (m, a, n) = max_over(base);
            let h = halved.into_iter().fold(0.0, f64::max);
            // bound slot carries the halved maximum, which must stay ≤ C_gg
            (m, a, n, Some(h))
        }
        "pivotal" => {
            let (m, a, n) = per_instance(&|i| {
                let rep = constants_report(&i.sigma, &i.w, &grid, &quad, cfg.pivotal)?;
                Ok(pivotal_lemma_ratio(&rep))
            })?;
            (m, a, n, None)
        }
        "necessity" => {
            let (m, a, n) = per_instance(&|i| Ok(necessity_a2_ratio(&i.sigma, &i.w, &grid, &quad)?.value))?;
            (m, a, n, None)
        }
        "bilinear" => {
            let (m, a, n) = per_instance(&|i| bilinear_sup(&grid, cfg.bilinear_alpha, &i.sigma, &i.w))?;
            (m, a, n, None)
        }
        "averaging" => {
            let (m, a, n) = per_instance(&|i| {
                cfg.averaging_scales
                    .iter()
                    .map(|&s| averaging_sup(&i.sigma, &i.w, &grid, s * lattice.side()))
                    .try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)))
            })?;
            (m, a, n, None)
        }
        "quasi" | "control" => {
            let control = lemma == "control";
            let (m, a, n) = per_instance(&|i| {
                let p = pivotal_constant(&i.sigma, &i.w, &grid, cfg.pivotal)?.value;
                let tree = build_tree(&i.f, &i.sigma, &i.w, &grid, cfg.stopping_params(p))?;
                if control {
                    Ok(control_by_tau(&tree, &i.f, &i.sigma, &grid)?.governed)
                } else {
                    Ok(quasi_orthogonality_ratio(&tree, &i.f, &i.sigma, &grid))
                }
            })?;
            let bound = control.then(|| control_bound(&cfg.stopping_params(0.0)));
            (m, a, n, bound)
        }
        other => {
            return Err(GwError::Usage(format!(
                "unknown lemma '{other}'; known: {}",
                LEMMAS.join(", ")
            )))
        }
    };
    Ok(LemmaValue {
        max,
        argmax,
        samples,
        bound,
    })
}

/// Corpus maxima for the selected lemmas at `depth` and `depth − 1`.
pub fn cmd_lemmas(cfg: &RunConfig, which: &[String]) -> Result<Vec<LemmaRow>> {
    for name in which {
        if !LEMMAS.contains(&name.as_str()) {
            return Err(GwError::Usage(format!(
                "unknown lemma '{name}'; known: {}",
                LEMMAS.join(", ")
            )));
        }
    }
    if which.is_empty() {
        return Ok(Vec::new());
    }
    let specs = corpus(cfg)?;
    let alt_depth = if cfg.depth > 1 { cfg.depth - 1 } else { cfg.depth };
    let mut rows = Vec::new();
    for name in which {
        let main = lemma_value(cfg, name, &specs, cfg.depth)?;
        let alt = lemma_value(cfg, name, &specs, alt_depth)?;
        let pass = main.max.is_finite()
            && match (name.as_str(), main.bound) {
                ("orthogonality", Some(b)) | ("control", Some(b)) => main.max <= b * (1.0 + 1e-12),
                ("goodgain", Some(h)) => h <= main.max,
                _ => true,
            };
        rows.push(LemmaRow {
            lemma: name.clone(),
            depth: cfg.depth,
            max_ratio: main.max,
            argmax: main.argmax,
            samples: main.samples,
            alt_depth,
            alt_max_ratio: alt.max,
            depth_delta: ratio((main.max - alt.max).abs(), main.max),
            bound: main.bound,
            pass,
        });
    }
    Ok(rows)
}

pub fn write_lemmas_csv<W: Write>(rows: &[LemmaRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record([
        "lemma",
        "depth",
        "max_ratio",
        "argmax",
        "samples",
        "alt_depth",
        "alt_max_ratio",
        "depth_delta",
        "bound",
        "pass",
    ])
    .map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            r.lemma.clone(),
            r.depth.to_string(),
            r.max_ratio.to_string(),
            r.argmax.clone().unwrap_or_default(),
            r.samples.to_string(),
            r.alt_depth.to_string(),
            r.alt_max_ratio.to_string(),
            r.depth_delta.to_string(),
            r.bound.map(|b| b.to_string()).unwrap_or_default(),
            r.pass.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| GwError::io("<csv>", e))?;
    Ok(())
}

// ---------------------------------------------------------------- π_good

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiGoodLevel {
    pub level: u32,
    /// Fraction of good cubes, the exact truncated-model probability.
    pub exact: f64,
    pub first: f64,
    pub first_se: f64,
    pub last: f64,
    pub last_se: f64,
    /// `|first − last|` in combined standard errors.
    pub z: f64,
}

pub fn cmd_pi_good(cfg: &RunConfig) -> Result<Vec<PiGoodLevel>> {
    let lattice = cfg.lattice()?;
    let grid = cfg.grid(lattice);
    (0..=lattice.depth())
        .map(|j| {
            let first = grid.level_cubes(j).next().expect("levels are nonempty");
            let last = grid.level_cubes(j).last().expect("levels are nonempty");
            let a = estimate_pi_good(lattice, cfg.r(), cfg.gamma(), first, cfg.pi_good_trials, cfg.seed)?;
            // a different seed keeps the two estimates independent
            let b = estimate_pi_good(lattice, cfg.r(), cfg.gamma(), last, cfg.pi_good_trials, cfg.seed ^ 1)?;
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            let d = (a.estimate - b.estimate).abs();
            Ok(PiGoodLevel {
                level: j,
                exact: pi_good_level(lattice, cfg.r(), cfg.gamma(), j),
                first: a.estimate,
                first_se: a.std_error,
                last: b.estimate,
                last_se: b.std_error,
                z: if se > 0.0 { d / se } else { 0.0 },
            })
        })
        .collect()
}

pub fn cmd_grid(cfg: &RunConfig) -> Result<serde_json::Value> {
    let lattice = cfg.lattice()?;
    let mut rng = trial_rng(cfg.seed, GRID_STREAM);
    let grid = DyadicGrid::random(lattice, &mut rng)
        .with_r(cfg.r())
        .with_gamma(cfg.gamma());
    Ok(grid.dump_json())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `name` under `dir`, creating the directory.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| GwError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| GwError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(depth: u32) -> RunConfig {
        RunConfig {
            depth,
            corpus: CorpusConfig {
                size: 6,
                ..CorpusConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn corpus_is_seed_determined() {
        let cfg = small(5);
        assert_eq!(corpus(&cfg).unwrap(), corpus(&cfg).unwrap());
        let other = RunConfig { seed: 9, ..cfg.clone() };
        assert_ne!(corpus(&cfg).unwrap(), corpus(&other).unwrap());
        assert_eq!(corpus(&cfg).unwrap().len(), 9);
    }

    #[test]
    fn discretized_specs() {
        let l = LatticeSpec::unit(1, 5).unwrap();
        let leb = WeightSpec::Lebesgue { density: 1.0 }.discretize(l).unwrap();
        assert!((leb.total() - 1.0).abs() < 1e-12);
        let c = WeightSpec::Cantor { digits: 3, total: 2.0 }.discretize(l).unwrap();
        assert!((c.total() - 2.0).abs() < 1e-12);
        // the middle third carries nothing
        let centre = l.locate(&[0.5]).unwrap();
        assert_eq!(c.masses()[centre], 0.0);
        let a = WeightSpec::Atoms { atoms: vec![([0.3, 0.0], 0.5), ([0.31, 0.0], 0.25)] }
            .discretize(l)
            .unwrap();
        assert_eq!(a.charged_cells(), vec![9]);
        assert!(WeightSpec::Atoms { atoms: vec![([1.2, 0.0], 1.0)] }.discretize(l).is_err());
        let l2 = LatticeSpec::unit(2, 3).unwrap();
        let b = WeightSpec::Blocks { blocks: 2, values: vec![1.0, 0.0, 0.0, 2.0] }.discretize(l2).unwrap();
        assert!((b.total() - 0.75).abs() < 1e-12);
        assert_eq!(b.masses()[l2.cell_index([7, 0])], 0.0);
    }

    #[test]
    fn identity_all_good_regime_is_exact() {
        let l = LatticeSpec::unit(1, 4).unwrap().whitney_truncation();
        let cfg = small(4);
        let inst = corpus(&cfg).unwrap()[3].build(l).unwrap();
        let fw = inst.sigma.times(&inst.f);
        let kind = TransformKind::Psi(Generator::DtPoisson);
        let s = verify_identity(&fw, &inst.w, l, 5, 0.25, kind, 100, 1).unwrap();
        assert!(s.all_good());
        assert!(s.pass(), "{s:?}");
        let zero = verify_identity(&[], &inst.w, l, 5, 0.25, kind, 100, 1).unwrap();
        assert_eq!((zero.full, zero.mean, zero.z), (0.0, 0.0, 0.0));
        assert!(verify_identity(&fw, &inst.w, l, 5, 0.25, kind, 99, 1).is_err());
        // r·γ ≤ 1 makes every cube bad against its r-th ancestor
        assert!(verify_identity(&fw, &inst.w, l, 2, 0.25, kind, 100, 1).is_err());
    }

    #[test]
    fn identity_holds_in_expectation() {
        let l = LatticeSpec::unit(1, 6).unwrap().whitney_truncation();
        let inst = corpus(&small(6)).unwrap()[2].build(l).unwrap();
        let fw = inst.sigma.times(&inst.f);
        let kind = TransformKind::Psi(Generator::DtPoisson);
        let s = verify_identity(&fw, &inst.w, l, 6, 0.25, kind, 300, 7).unwrap();
        assert!(!s.all_good() && s.std_error > 0.0);
        assert!(s.z.abs() <= Z_LIMIT, "{s:?}");
    }

    #[test]
    fn unknown_lemma_is_a_usage_error() {
        let cfg = small(4);
        assert!(matches!(cmd_lemmas(&cfg, &["nope".into()]), Err(GwError::Usage(_))));
        assert!(cmd_lemmas(&cfg, &[]).unwrap().is_empty());
    }

    #[test]
    fn degenerate_corpus_ratios() {
        let cfg = RunConfig {
            depth: 4,
            corpus: CorpusConfig { size: 0, ..CorpusConfig::default() },
            ..RunConfig::default()
        };
        let run = cmd_equivalence(&cfg).unwrap();
        assert_eq!(run.records.len(), 3);
        for r in &run.records[..2] {
            assert_eq!(r.ratios, Ratios { g_over_n: 0.0, sqrt_a2_over_g: 0.0, t_over_g: 0.0, p_over_n: 0.0 });
        }
        let atom = &run.records[2];
        assert!(atom.ratios.g_over_n > 0.0 && atom.ratios.g_over_n.is_finite());
        assert!(run.summary.pass);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_fields() {
        let cfg = small(5);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"depht": 3}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"depth": 3, "seed": 4}"#).unwrap();
        assert_eq!((partial.depth, partial.seed, partial.dim), (3, 4, 1));
    }
}
