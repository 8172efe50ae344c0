//! Stopping cubes with stopping values `τ`.
//!
//! Roots are the `2ⁿ` children of the base cube with `τ = E^σ|f|`. Inside
//! a stopping cube `S` the stopping children are the maximal cubes `I` at
//! least `r + 1` levels below `S` with either
//!
//! 1. `E_I^σ|f| > θ₁ τ(S)`, or
//! 2. `Σ_{K ∈ 𝒲_I} P(K, 1_S σ)² w(K) ≥ C₀ 𝒫² σ(I)` with a nonzero sum.
//!
//! A σ-null cube satisfies neither. A child gets `τ = E^σ|f|` when that
//! exceeds `θ₂ τ(S)` and inherits `τ(S)` otherwise.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, DyadicGrid, LevelSums};
use crate::error::{GwError, Result};
use crate::kernels::poisson_avg_atoms;
use crate::lattice::{GridFunction, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingParams {
    pub theta1: f64,
    pub theta2: f64,
    pub c0: f64,
    /// Pivotal constant `𝒫` used in condition 2.
    pub pivotal: f64,
}

impl StoppingParams {
    pub fn new(pivotal: f64) -> Self {
        Self {
            theta1: 10.0,
            theta2: 2.0,
            c0: 4.0,
            pivotal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Root,
    Energy,
    Pivotal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingNode {
    pub cube: DyadicCube,
    pub tau: f64,
    pub trigger: Trigger,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingTree {
    pub params: StoppingParams,
    pub nodes: Vec<StoppingNode>,
    pub roots: Vec<usize>,
    index: HashMap<DyadicCube, usize>,
}

struct Ctx<'a> {
    grid: &'a DyadicGrid,
    sigma: &'a Weight,
    sigma_sums: LevelSums,
    abs_sums: LevelSums,
    w_sums: LevelSums,
    params: StoppingParams,
}

impl Ctx<'_> {
    fn mean_abs(&self, q: &DyadicCube) -> f64 {
        let m = self.sigma_sums.get(self.grid, q);
        if m == 0.0 {
            0.0
        } else {
            self.abs_sums.get(self.grid, q) / m
        }
    }

    fn pivotal_sum(&self, i: &DyadicCube, s: &DyadicCube) -> f64 {
        let src = self.sigma.atoms_in(self.grid, s);
        self.grid
            .whitney(i)
            .cubes()
            .map(|k| {
                let wk = self.w_sums.get(self.grid, k);
                if wk == 0.0 {
                    0.0
                } else {
                    poisson_avg_atoms(self.grid, k, &src).powi(2) * wk
                }
            })
            .sum()
    }

    fn trigger(&self, i: &DyadicCube, s: &DyadicCube, tau_s: f64) -> Option<Trigger> {
        let m = self.sigma_sums.get(self.grid, i);
        if m == 0.0 {
            return None;
        }
        if self.mean_abs(i) > self.params.theta1 * tau_s {
            return Some(Trigger::Energy);
        }
        let p = self.params;
        let sum = self.pivotal_sum(i, s);
        (sum > 0.0 && sum >= p.c0 * p.pivotal * p.pivotal * m).then_some(Trigger::Pivotal)
    }
}

pub fn build_tree(
    f: &GridFunction,
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    params: StoppingParams,
) -> Result<StoppingTree> {
    if f.lattice() != grid.lattice() || sigma.lattice() != grid.lattice() || w.lattice() != grid.lattice() {
        return Err(GwError::domain("inputs live on different lattices"));
    }
    let abs: Vec<f64> = f
        .values()
        .iter()
        .zip(sigma.masses())
        .map(|(v, m)| v.abs() * m)
        .collect();
    let ctx = Ctx {
        grid,
        sigma,
        sigma_sums: grid.level_sums(sigma.masses()),
        abs_sums: grid.level_sums(&abs),
        w_sums: grid.level_sums(w.masses()),
        params,
    };
    let mut tree = StoppingTree {
        params,
        nodes: Vec::new(),
        roots: Vec::new(),
        index: HashMap::new(),
    };
    if sigma.is_zero() {
        return Ok(tree);
    }
    let mut queue = Vec::new();
    for root in grid.children(&grid.top())? {
        let id = tree.push(root, ctx.mean_abs(&root), Trigger::Root, None);
        tree.roots.push(id);
        queue.push(id);
    }
    let gap = grid.r() + 1;
    while let Some(sid) = queue.pop() {
        let s = tree.nodes[sid].cube;
        let tau_s = tree.nodes[sid].tau;
        if s.level + gap > grid.depth() {
            continue;
        }
        let mut stack: Vec<DyadicCube> = vec![s];
        let mut found = Vec::new();
        while let Some(q) = stack.pop() {
            if ctx.sigma_sums.get(grid, &q) == 0.0 {
                continue;
            }
            if q.level >= s.level + gap {
                if let Some(trig) = ctx.trigger(&q, &s, tau_s) {
                    found.push((q, trig));
                    continue;
                }
            }
            if q.level < grid.depth() {
                // reversed so that children are visited in index order
                stack.extend(grid.children(&q)?.into_iter().rev());
            }
        }
        found.sort_by_key(|(q, _)| *q);
        for (q, trig) in found {
            let e = ctx.mean_abs(&q);
            let tau = if e > params.theta2 * tau_s { e } else { tau_s };
            let id = tree.push(q, tau, trig, Some(sid));
            tree.nodes[sid].children.push(id);
            queue.push(id);
        }
    }
    Ok(tree)
}

impl StoppingTree {
    fn push(&mut self, cube: DyadicCube, tau: f64, trigger: Trigger, parent: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(StoppingNode {
            cube,
            tau,
            trigger,
            parent,
            children: Vec::new(),
        });
        self.index.insert(cube, id);
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_of(&self, cube: &DyadicCube) -> Option<usize> {
        self.index.get(cube).copied()
    }

    /// `S(I)`: the minimal stopping cube containing `I`, possibly `I`.
    pub fn stopping_parent(&self, grid: &DyadicGrid, cube: &DyadicCube) -> Result<usize> {
        grid.check(cube)?;
        for k in 0..=cube.level {
            let anc = grid.parent(cube, k)?;
            if let Some(id) = self.node_of(&anc) {
                return Ok(id);
            }
        }
        Err(GwError::domain(format!(
            "cube {cube:?} lies outside every stopping root"
        )))
    }

    /// Edges `(S, Ṡ)` of the tree.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| n.children.iter().map(move |&c| (i, c)))
    }

    pub fn to_json(&self, grid: &DyadicGrid) -> serde_json::Value {
        fn node(t: &StoppingTree, g: &DyadicGrid, id: usize) -> serde_json::Value {
            let n = &t.nodes[id];
            serde_json::json!({
                "cube": { "level": n.cube.level, "index": &n.cube.index[..g.lattice().dim()] },
                "side": g.side(&n.cube),
                "tau": n.tau,
                "trigger": n.trigger,
                "children": n.children.iter().map(|&c| node(t, g, c)).collect::<Vec<_>>(),
            })
        }
        serde_json::json!({
            "params": self.params,
            "roots": self.roots.iter().map(|&r| node(self, grid, r)).collect::<Vec<_>>(),
        })
    }
}

/// `Σ_S τ(S)² σ(S) / ‖f‖²_σ`, zero when `f = 0` σ-a.e.
pub fn quasi_orthogonality_ratio(
    tree: &StoppingTree,
    f: &GridFunction,
    sigma: &Weight,
    grid: &DyadicGrid,
) -> f64 {
    let norm2: f64 = f
        .values()
        .iter()
        .zip(sigma.masses())
        .map(|(v, m)| v * v * m)
        .sum();
    if norm2 == 0.0 {
        return 0.0;
    }
    let sums = grid.level_sums(sigma.masses());
    tree.nodes
        .iter()
        .map(|n| n.tau * n.tau * sums.get(grid, &n.cube))
        .sum::<f64>()
        / norm2
}

/// Bound on `|E_I f| / τ(S(I))` forced by the construction for governed
/// cubes: such an `I` either is a stopping cube (ratio ≤ θ₂) or was
/// examined and failed condition 1 (ratio ≤ θ₁).
pub fn control_bound(params: &StoppingParams) -> f64 {
    params.theta1.max(params.theta2).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlReport {
    /// Max over stopping cubes and cubes at least `r + 1` levels below
    /// `S(I)`, the cubes the construction examines.
    pub governed: f64,
    pub governed_argmax: Option<DyadicCube>,
    /// Max over the `r` levels right below each stopping cube, which the
    /// construction never examines.
    pub gap: f64,
}

impl ControlReport {
    pub fn overall(&self) -> f64 {
        self.governed.max(self.gap)
    }
}

pub fn control_by_tau(
    tree: &StoppingTree,
    f: &GridFunction,
    sigma: &Weight,
    grid: &DyadicGrid,
) -> Result<ControlReport> {
    let mut rep = ControlReport {
        governed: 0.0,
        governed_argmax: None,
        gap: 0.0,
    };
    if tree.is_empty() {
        return Ok(rep);
    }
    let fs: Vec<f64> = f
        .values()
        .iter()
        .zip(sigma.masses())
        .map(|(v, m)| v * m)
        .collect();
    let num = grid.level_sums(&fs);
    let den = grid.level_sums(sigma.masses());
    for q in grid.all_cubes().into_iter().filter(|q| q.level >= 1) {
        let m = den.get(grid, &q);
        if m == 0.0 {
            continue;
        }
        let e = (num.get(grid, &q) / m).abs();
        let s = &tree.nodes[tree.stopping_parent(grid, &q)?];
        let ratio = if s.tau == 0.0 {
            if e == 0.0 {
                continue;
            }
            f64::INFINITY
        } else {
            e / s.tau
        };
        let governed = s.cube == q || q.level > s.cube.level + grid.r();
        if governed {
            if ratio > rep.governed {
                rep.governed = ratio;
                rep.governed_argmax = Some(q);
            }
        } else {
            rep.gap = rep.gap.max(ratio);
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ByConstructReport {
    pub checked: usize,
    pub violations: usize,
}

/// For each edge `(S, Ṡ)` whose parent cube `Ṡ^{(1)}` is good and strongly
/// contained in `S`, some member of `𝒲_S` must contain `Ṡ^{(1)}`.
pub fn check_by_construct(tree: &StoppingTree, grid: &DyadicGrid) -> ByConstructReport {
    let mut rep = ByConstructReport {
        checked: 0,
        violations: 0,
    };
    let mut cache: HashMap<DyadicCube, Vec<DyadicCube>> = HashMap::new();
    for (s, c) in tree.edges() {
        let s = tree.nodes[s].cube;
        let up = grid
            .parent(&tree.nodes[c].cube, 1)
            .expect("stopping children lie below the roots");
        if !(grid.is_good(&up) && grid.strongly_contained(&up, &s)) {
            continue;
        }
        rep.checked += 1;
        let members = cache
            .entry(s)
            .or_insert_with(|| grid.whitney(&s).cubes().copied().collect());
        if !members.iter().any(|k| grid.contains(k, &up)) {
            rep.violations += 1;
        }
    }
    rep
}
