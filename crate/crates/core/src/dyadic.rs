//! Shifted dyadic grids on the lattice universe.
//!
//! A grid is fixed by one shift bit vector `β_j ∈ {0,1}^n` per level
//! `1 ≤ j ≤ d`. A cube of level `j` is translated by
//! `Σ_{j' > j} 2^{-j'} β_{j'}` (in units of the base side), which in cell
//! units is an integer, so cube identity is exact. Translated cubes are
//! read periodically: a cube is a set of cells on the discrete torus.
//!
//! Goodness and Whitney collections only need positions of a cube relative
//! to its ancestors, which are well defined on the torus. Physical
//! distances (Poisson averages, `d(Q, R)`) use the pieces a wrapped cube
//! occupies inside the base cube.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::lattice::{LatticeSpec, Point};
use crate::rng::trial_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: [u32; 2],
}

impl DyadicCube {
    pub const fn new(level: u32, index: [u32; 2]) -> Self {
        Self { level, index }
    }
}

/// The cells of a cube: `len` consecutive cells per axis starting at
/// `start`, wrapping modulo the number of cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellBox {
    start: [usize; 2],
    len: usize,
    dim: usize,
    per_axis: usize,
}

impl CellBox {
    pub fn start(&self) -> [usize; 2] {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_count(&self) -> usize {
        self.len.pow(self.dim as u32)
    }

    pub fn contains_coords(&self, c: [usize; 2]) -> bool {
        (0..self.dim).all(|a| (c[a] + self.per_axis - self.start[a]) % self.per_axis < self.len)
    }

    /// Flat lattice indices of the cells.
    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.per_axis;
        (0..self.cell_count()).map(move |b| {
            let c0 = (self.start[0] + b % self.len) % n;
            let c1 = if self.dim == 2 {
                (self.start[1] + b / self.len) % n
            } else {
                0
            };
            c0 + n * c1
        })
    }
}

/// Closed axis-parallel box in physical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysBox {
    pub lo: Point,
    pub hi: Point,
}

impl PhysBox {
    pub fn distance_to_point(&self, y: &Point) -> f64 {
        let mut s = 0.0;
        for a in 0..2 {
            let g = (self.lo[a] - y[a]).max(y[a] - self.hi[a]).max(0.0);
            s += g * g;
        }
        s.sqrt()
    }

    pub fn distance_to_box(&self, other: &PhysBox) -> f64 {
        let mut s = 0.0;
        for a in 0..2 {
            let g = (self.lo[a] - other.hi[a])
                .max(other.lo[a] - self.hi[a])
                .max(0.0);
            s += g * g;
        }
        s.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitneyMember {
    pub cube: DyadicCube,
    pub side: f64,
    pub boundary_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitneyCollection {
    pub parent: DyadicCube,
    pub members: Vec<WhitneyMember>,
}

impl WhitneyCollection {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn cubes(&self) -> impl Iterator<Item = &DyadicCube> {
        self.members.iter().map(|m| &m.cube)
    }
}

/// Shift and goodness parameters of a grid, as recorded in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub r: u32,
    pub gamma: f64,
    /// `β_1, …, β_d`; all zero for the standard grid.
    pub shifts: Vec<[u8; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicGrid {
    lattice: LatticeSpec,
    shifts: Vec<[u8; 2]>,
    offsets: Vec<[usize; 2]>,
    r: u32,
    gamma: f64,
}

/// `γ = 1/(2(n+1))`.
pub fn default_gamma(dim: usize) -> f64 {
    1.0 / (2.0 * (dim as f64 + 1.0))
}

/// Smallest `r` with `2 C √n ≤ 2^{r(1-γ)-1}`.
pub fn r_for_overlap(dim: usize, gamma: f64, c: f64) -> u32 {
    let lhs = 2.0 * c * (dim as f64).sqrt();
    (1..)
        .find(|&r| lhs <= 2f64.powf(r as f64 * (1.0 - gamma) - 1.0))
        .expect("r search is unbounded")
}

/// Default goodness parameter: the overlap condition with `C = 4n`.
pub fn default_r(dim: usize) -> u32 {
    r_for_overlap(dim, default_gamma(dim), 4.0 * dim as f64)
}

impl DyadicGrid {
    pub fn standard(lattice: LatticeSpec) -> Self {
        let d = lattice.depth() as usize;
        Self::build(lattice, vec![[0, 0]; d])
    }

    /// Grid with shifts `β_1..β_d` (entry `j-1` holds `β_j`).
    pub fn shifted(lattice: LatticeSpec, shifts: Vec<[u8; 2]>) -> Result<Self> {
        if shifts.len() != lattice.depth() as usize {
            return Err(GwError::validation(format!(
                "expected {} shift vectors, got {}",
                lattice.depth(),
                shifts.len()
            )));
        }
        for b in &shifts {
            if b.iter().any(|&x| x > 1) || (lattice.dim() == 1 && b[1] != 0) {
                return Err(GwError::validation("shift entries must be bits"));
            }
        }
        Ok(Self::build(lattice, shifts))
    }

    /// Uniformly random shifts.
    pub fn random(lattice: LatticeSpec, rng: &mut ChaCha8Rng) -> Self {
        let shifts = (0..lattice.depth())
            .map(|_| {
                let mut b = [0u8; 2];
                for bit in b.iter_mut().take(lattice.dim()) {
                    *bit = rng.random_range(0..2u8);
                }
                b
            })
            .collect();
        Self::build(lattice, shifts)
    }

    fn build(lattice: LatticeSpec, shifts: Vec<[u8; 2]>) -> Self {
        let d = lattice.depth() as usize;
        let mut offsets = vec![[0usize; 2]; d + 1];
        for j in (0..d).rev() {
            let step = 1usize << (d - j - 1);
            for a in 0..2 {
                offsets[j][a] = offsets[j + 1][a] + step * shifts[j][a] as usize;
            }
        }
        let dim = lattice.dim();
        Self {
            lattice,
            shifts,
            offsets,
            r: default_r(dim),
            gamma: default_gamma(dim),
        }
    }

    pub fn with_r(mut self, r: u32) -> Self {
        self.r = r;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn shifts(&self) -> &[[u8; 2]] {
        &self.shifts
    }

    pub fn params(&self) -> GridParams {
        GridParams {
            r: self.r,
            gamma: self.gamma,
            shifts: self.shifts.clone(),
        }
    }

    pub fn depth(&self) -> u32 {
        self.lattice.depth()
    }

    fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Cells per axis of a level-`j` cube.
    fn cells_per_side(&self, level: u32) -> usize {
        1usize << (self.depth() - level)
    }

    pub fn check(&self, cube: &DyadicCube) -> Result<()> {
        if cube.level > self.depth() {
            return Err(GwError::domain(format!(
                "level {} below lattice depth {}",
                cube.level,
                self.depth()
            )));
        }
        let count = 1u32 << cube.level;
        for a in 0..2 {
            let limit = if a < self.dim() { count } else { 1 };
            if cube.index[a] >= limit {
                return Err(GwError::domain(format!(
                    "index {:?} outside level {}",
                    cube.index, cube.level
                )));
            }
        }
        Ok(())
    }

    pub fn cube(&self, level: u32, index: [u32; 2]) -> Result<DyadicCube> {
        let c = DyadicCube::new(level, index);
        self.check(&c)?;
        Ok(c)
    }

    pub fn top(&self) -> DyadicCube {
        DyadicCube::new(0, [0, 0])
    }

    pub fn level_len(&self, level: u32) -> usize {
        1usize << (level as usize * self.dim())
    }

    pub fn level_cubes(&self, level: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        let per = 1u32 << level;
        let dim = self.dim();
        (0..self.level_len(level)).map(move |f| {
            let f = f as u32;
            if dim == 1 {
                DyadicCube::new(level, [f, 0])
            } else {
                DyadicCube::new(level, [f % per, f / per])
            }
        })
    }

    /// All cubes, coarse to fine.
    pub fn all_cubes(&self) -> Vec<DyadicCube> {
        (0..=self.depth())
            .flat_map(|j| self.level_cubes(j).collect::<Vec<_>>())
            .collect()
    }

    pub fn cube_count(&self) -> usize {
        (0..=self.depth()).map(|j| self.level_len(j)).sum()
    }

    /// Index of the cube within its level.
    pub fn flat(&self, cube: &DyadicCube) -> usize {
        cube.index[0] as usize + ((cube.index[1] as usize) << cube.level)
    }

    /// Position in [`Self::all_cubes`].
    pub fn ordinal(&self, cube: &DyadicCube) -> usize {
        (0..cube.level).map(|j| self.level_len(j)).sum::<usize>() + self.flat(cube)
    }

    /// Side length `l(Q)`.
    pub fn side(&self, cube: &DyadicCube) -> f64 {
        self.lattice.side() / (1u64 << cube.level) as f64
    }

    pub fn volume(&self, cube: &DyadicCube) -> f64 {
        self.side(cube).powi(self.dim() as i32)
    }

    pub fn cell_box(&self, cube: &DyadicCube) -> CellBox {
        let n = self.lattice.per_axis();
        let len = self.cells_per_side(cube.level);
        let off = self.offsets[cube.level as usize];
        let mut start = [0usize; 2];
        for a in 0..self.dim() {
            start[a] = (cube.index[a] as usize * len + off[a]) % n;
        }
        CellBox {
            start,
            len,
            dim: self.dim(),
            per_axis: n,
        }
    }

    /// The level-`level` cube containing the given cell.
    pub fn containing(&self, cell: usize, level: u32) -> DyadicCube {
        let n = self.lattice.per_axis();
        let c = self.lattice.cell_coords(cell);
        let len = self.cells_per_side(level);
        let off = self.offsets[level as usize];
        let mut index = [0u32; 2];
        for a in 0..self.dim() {
            index[a] = (((c[a] + n - off[a]) % n) / len) as u32;
        }
        DyadicCube::new(level, index)
    }

    pub fn children(&self, cube: &DyadicCube) -> Result<Vec<DyadicCube>> {
        self.check(cube)?;
        if cube.level == self.depth() {
            return Err(GwError::domain("cube at the finest level has no children"));
        }
        let j = cube.level + 1;
        let modulus = 1u32 << j;
        let beta = self.shifts[cube.level as usize];
        let dim = self.dim();
        let mut out = Vec::with_capacity(1 << dim);
        for e in 0..(1u32 << dim) {
            let mut index = [0u32; 2];
            for a in 0..dim {
                index[a] = (2 * cube.index[a] + beta[a] as u32 + ((e >> a) & 1)) % modulus;
            }
            out.push(DyadicCube::new(j, index));
        }
        Ok(out)
    }

    /// The `k`-th ancestor `Q^{(k)}`.
    pub fn parent(&self, cube: &DyadicCube, k: u32) -> Result<DyadicCube> {
        self.check(cube)?;
        if k > cube.level {
            return Err(GwError::domain(format!(
                "no ancestor {k} levels above level {}",
                cube.level
            )));
        }
        let mut c = *cube;
        for _ in 0..k {
            let modulus = 1u32 << c.level;
            let beta = self.shifts[c.level as usize - 1];
            let mut index = [0u32; 2];
            for a in 0..self.dim() {
                index[a] = ((c.index[a] + modulus - beta[a] as u32) % modulus) >> 1;
            }
            c = DyadicCube::new(c.level - 1, index);
        }
        Ok(c)
    }

    pub fn contains(&self, outer: &DyadicCube, inner: &DyadicCube) -> bool {
        outer.level <= inner.level
            && self
                .parent(inner, inner.level - outer.level)
                .map(|p| p == *outer)
                .unwrap_or(false)
    }

    /// Position of `inner` within `outer` in cell units, when contained.
    fn relative_position(&self, inner: &DyadicCube, outer: &DyadicCube) -> Option<[usize; 2]> {
        if !self.contains(outer, inner) {
            return None;
        }
        let n = self.lattice.per_axis();
        let bi = self.cell_box(inner);
        let bo = self.cell_box(outer);
        let mut rel = [0usize; 2];
        for a in 0..self.dim() {
            rel[a] = (bi.start[a] + n - bo.start[a]) % n;
        }
        Some(rel)
    }

    /// `dist(inner, ∂outer)` for a contained cube, measured inside `outer`.
    pub fn boundary_distance(&self, inner: &DyadicCube, outer: &DyadicCube) -> Option<f64> {
        let rel = self.relative_position(inner, outer)?;
        let li = self.cells_per_side(inner.level);
        let lo = self.cells_per_side(outer.level);
        let gap = (0..self.dim())
            .map(|a| rel[a].min(lo - rel[a] - li))
            .min()
            .unwrap_or(0);
        Some(gap as f64 * self.lattice.cell_side())
    }

    /// `l(inner)^γ l(outer)^{1-γ}`.
    pub fn goodness_threshold(&self, inner: &DyadicCube, outer: &DyadicCube) -> f64 {
        self.side(inner).powf(self.gamma) * self.side(outer).powf(1.0 - self.gamma)
    }

    /// A cube is bad when some cube at least `2^r` times larger lies within
    /// `l(Q)^γ l(Q̃)^{1-γ}` of its boundary. Only containing ancestors can
    /// witness badness: for a disjoint `Q̃` of the same level the distance
    /// is at least the distance to the boundary of the ancestor.
    pub fn is_good(&self, cube: &DyadicCube) -> bool {
        (self.r..=cube.level).all(|k| {
            let anc = self.parent(cube, k).expect("ancestor within range");
            let d = self
                .boundary_distance(cube, &anc)
                .expect("ancestor contains cube");
            d > self.goodness_threshold(cube, &anc)
        })
    }

    /// `J ⋐ I`: `J ⊂ I` and `2^r l(J) ≤ l(I)`.
    pub fn strongly_contained(&self, j: &DyadicCube, i: &DyadicCube) -> bool {
        self.contains(i, j) && j.level >= i.level + self.r
    }

    /// Maximal `K ⊂ I` with `2^r l(K) ≤ l(I)` and
    /// `dist(K, ∂I) ≥ l(K)^γ l(I)^{1-γ}`.
    pub fn whitney(&self, cube: &DyadicCube) -> WhitneyCollection {
        let mut members = Vec::new();
        let mut stack = vec![*cube];
        let min_level = cube.level + self.r;
        while let Some(k) = stack.pop() {
            if k.level >= min_level {
                let d = self
                    .boundary_distance(&k, cube)
                    .expect("descendant contained");
                if d >= self.goodness_threshold(&k, cube) {
                    members.push(WhitneyMember {
                        cube: k,
                        side: self.side(&k),
                        boundary_distance: d,
                    });
                    continue;
                }
            }
            if k.level < self.depth() {
                stack.extend(self.children(&k).expect("not at finest level"));
            }
        }
        members.sort_by_key(|m| m.cube);
        WhitneyCollection {
            parent: *cube,
            members,
        }
    }

    /// Whitney collections of every cube, indexed by ordinal.
    pub fn whitney_all(&self) -> Vec<WhitneyCollection> {
        self.all_cubes().iter().map(|c| self.whitney(c)).collect()
    }

    /// Maximum over points of `Σ_K 1_{CK}` with closed dilates `CK`.
    pub fn overlap_count(&self, collection: &WhitneyCollection, c: f64) -> usize {
        let boxes: Vec<([f64; 2], [f64; 2])> = collection
            .members
            .iter()
            .map(|m| {
                let rel = self
                    .relative_position(&m.cube, &collection.parent)
                    .expect("member inside parent");
                let len = self.cells_per_side(m.cube.level) as f64;
                let mut lo = [0.0; 2];
                let mut hi = [0.0; 2];
                for a in 0..self.dim() {
                    let center = rel[a] as f64 + len / 2.0;
                    lo[a] = center - c * len / 2.0;
                    hi[a] = center + c * len / 2.0;
                }
                (lo, hi)
            })
            .collect();
        if boxes.is_empty() {
            return 0;
        }
        // The deepest point of a family of closed boxes can be taken with
        // every coordinate equal to some lower edge.
        let eps = 1e-9;
        let xs: Vec<f64> = boxes.iter().map(|b| b.0[0]).collect();
        let ys: Vec<f64> = if self.dim() == 2 {
            boxes.iter().map(|b| b.0[1]).collect()
        } else {
            vec![0.0]
        };
        let mut best = 0;
        for &x in &xs {
            let column: Vec<&([f64; 2], [f64; 2])> = boxes
                .iter()
                .filter(|b| b.0[0] <= x + eps && x <= b.1[0] + eps)
                .collect();
            if column.len() <= best {
                continue;
            }
            for &y in &ys {
                let count = column
                    .iter()
                    .filter(|b| b.0[1] <= y + eps && y <= b.1[1] + eps)
                    .count();
                best = best.max(count);
            }
        }
        best
    }

    /// Physical pieces of a (possibly wrapped) cube.
    pub fn pieces(&self, cube: &DyadicCube) -> Vec<PhysBox> {
        let n = self.lattice.per_axis();
        let h = self.lattice.cell_side();
        let corner = self.lattice.corner();
        let b = self.cell_box(cube);
        let segments = |a: usize| -> Vec<(usize, usize)> {
            if a >= self.dim() {
                return vec![(0, 0)];
            }
            let s = b.start[a];
            if s + b.len <= n {
                vec![(s, s + b.len)]
            } else {
                vec![(s, n), (0, s + b.len - n)]
            }
        };
        let mut out = Vec::new();
        for &(x0, x1) in &segments(0) {
            for &(y0, y1) in &segments(1) {
                let mut lo = [0.0; 2];
                let mut hi = [0.0; 2];
                lo[0] = corner[0] + x0 as f64 * h;
                hi[0] = corner[0] + x1 as f64 * h;
                if self.dim() == 2 {
                    lo[1] = corner[1] + y0 as f64 * h;
                    hi[1] = corner[1] + y1 as f64 * h;
                }
                out.push(PhysBox { lo, hi });
            }
        }
        out
    }

    /// Euclidean distance from `y` to the closed cube.
    pub fn dist_point(&self, cube: &DyadicCube, y: &Point) -> f64 {
        self.pieces(cube)
            .iter()
            .map(|p| p.distance_to_point(y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Euclidean set distance `d(Q, R)` between closed cubes.
    pub fn dist_cubes(&self, q: &DyadicCube, r: &DyadicCube) -> f64 {
        let pq = self.pieces(q);
        let pr = self.pieces(r);
        pq.iter()
            .flat_map(|a| pr.iter().map(move |b| a.distance_to_box(b)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Sums of a cell array over every cube, level by level.
    pub fn level_sums(&self, cell_values: &[f64]) -> LevelSums {
        let d = self.depth();
        let mut levels = vec![Vec::new(); d as usize + 1];
        // At the finest level the offset vanishes and cube index = cell coords.
        levels[d as usize] = cell_values.to_vec();
        for j in (1..=d).rev() {
            let mut coarse = vec![0.0; self.level_len(j - 1)];
            for (f, cube) in self.level_cubes(j).enumerate() {
                let p = self.parent(&cube, 1).expect("level ≥ 1");
                coarse[self.flat(&p)] += levels[j as usize][f];
            }
            levels[j as usize - 1] = coarse;
        }
        LevelSums { levels }
    }

    /// Grid as a JSON tree of cubes with goodness flags.
    pub fn dump_json(&self) -> serde_json::Value {
        fn node(g: &DyadicGrid, c: &DyadicCube) -> serde_json::Value {
            let children = if c.level < g.depth() {
                g.children(c)
                    .expect("not at finest level")
                    .iter()
                    .map(|k| node(g, k))
                    .collect()
            } else {
                Vec::new()
            };
            let b = g.cell_box(c);
            serde_json::json!({
                "level": c.level,
                "index": &c.index[..g.dim()],
                "side": g.side(c),
                "cell_start": &b.start()[..g.dim()],
                "good": g.is_good(c),
                "children": children,
            })
        }
        serde_json::json!({
            "params": self.params(),
            "root": node(self, &self.top()),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LevelSums {
    levels: Vec<Vec<f64>>,
}

impl LevelSums {
    pub fn get(&self, grid: &DyadicGrid, cube: &DyadicCube) -> f64 {
        self.levels[cube.level as usize][grid.flat(cube)]
    }

    pub fn level(&self, level: u32) -> &[f64] {
        &self.levels[level as usize]
    }
}

/// Fraction of good cubes among the level-`level` cubes of the standard
/// grid. The position of a randomly shifted cube inside each of its
/// ancestors is uniformly distributed, so this equals the probability that
/// `Q + β` is good for any `Q` of that level.
pub fn pi_good_level(lattice: LatticeSpec, r: u32, gamma: f64, level: u32) -> f64 {
    let grid = DyadicGrid::standard(lattice).with_r(r).with_gamma(gamma);
    let good = grid.level_cubes(level).filter(|c| grid.is_good(c)).count();
    good as f64 / grid.level_len(level) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PiGoodEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Monte Carlo estimate of `P_β(Q + β is good)` for a cube `Q` of the
/// standard grid.
pub fn estimate_pi_good(
    lattice: LatticeSpec,
    r: u32,
    gamma: f64,
    base: DyadicCube,
    trials: usize,
    seed: u64,
) -> Result<PiGoodEstimate> {
    if trials < 100 {
        return Err(GwError::validation(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    DyadicGrid::standard(lattice).check(&base)?;
    let hits = (0..trials)
        .filter(|&t| {
            let mut rng = trial_rng(seed, t as u64);
            let grid = DyadicGrid::random(lattice, &mut rng)
                .with_r(r)
                .with_gamma(gamma);
            // Q + β carries the same level and index in the shifted grid.
            grid.is_good(&base)
        })
        .count();
    let p = hits as f64 / trials as f64;
    Ok(PiGoodEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1(depth: u32) -> DyadicGrid {
        DyadicGrid::standard(LatticeSpec::unit(1, depth).unwrap())
    }

    #[test]
    fn defaults() {
        assert_eq!(default_gamma(1), 0.25);
        assert_eq!(default_r(1), 6);
        assert_eq!(default_r(2), 7);
        assert_eq!(r_for_overlap(1, 0.25, 3.0), 5);
    }

    #[test]
    fn parent_of_left_half_is_unit_interval() {
        let g = grid1(3);
        let half = g.cube(1, [0, 0]).unwrap();
        assert_eq!(g.parent(&half, 1).unwrap(), g.top());
        assert!(g.parent(&half, 2).is_err());
    }

    #[test]
    fn finest_level_has_no_children() {
        let g = grid1(2);
        assert!(g.children(&g.cube(2, [3, 0]).unwrap()).is_err());
    }

    #[test]
    fn strong_containment_edges() {
        let g = grid1(6).with_r(2);
        let i = g.cube(1, [1, 0]).unwrap();
        assert!(!g.strongly_contained(&i, &i));
        let child = g.children(&i).unwrap()[0];
        assert!(!g.strongly_contained(&child, &i));
        let grandchild = g.children(&child).unwrap()[1];
        assert!(g.strongly_contained(&grandchild, &i));
    }

    #[test]
    fn top_cube_is_good_and_boundary_cube_is_bad() {
        let g = grid1(6).with_r(2);
        assert!(g.is_good(&g.top()));
        // touches the left edge of its 4x larger ancestor
        let q = g.cube(2, [0, 0]).unwrap();
        assert!(!g.is_good(&q));
    }

    #[test]
    fn whitney_examples_n1() {
        let l4 = LatticeSpec::unit(1, 4).unwrap();
        let g = DyadicGrid::standard(l4).with_r(2).with_gamma(0.25);
        assert!(g.whitney(&g.top()).is_empty());

        let l5 = LatticeSpec::unit(1, 5).unwrap();
        let g = DyadicGrid::standard(l5).with_r(2).with_gamma(0.25);
        let w = g.whitney(&g.top());
        let starts: Vec<u32> = w.cubes().map(|c| c.index[0]).collect();
        assert!(w.cubes().all(|c| c.level == 5));
        assert_eq!(starts, vec![14, 15, 16, 17]);
    }

    #[test]
    fn overlap_trivial_cases() {
        let g = grid1(5).with_r(2).with_gamma(0.25);
        let empty = WhitneyCollection {
            parent: g.top(),
            members: vec![],
        };
        assert_eq!(g.overlap_count(&empty, 3.0), 0);
        let mut w = g.whitney(&g.top());
        w.members.truncate(1);
        assert_eq!(g.overlap_count(&w, 3.0), 1);
    }

    #[test]
    fn pi_good_is_one_when_r_exceeds_depth() {
        let l = LatticeSpec::unit(1, 5).unwrap();
        let est = estimate_pi_good(l, 9, 0.25, DyadicCube::new(5, [3, 0]), 200, 1).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert!(estimate_pi_good(l, 9, 0.25, DyadicCube::new(5, [3, 0]), 10, 1).is_err());
    }

    #[test]
    fn level_sums_match_direct() {
        let l = LatticeSpec::unit(2, 3).unwrap();
        let shifts = vec![[1, 0], [0, 1], [1, 1]];
        let g = DyadicGrid::shifted(l, shifts).unwrap();
        let vals: Vec<f64> = (0..64).map(|i| (i * 7 % 11) as f64).collect();
        let sums = g.level_sums(&vals);
        for c in g.all_cubes() {
            let direct: f64 = g.cell_box(&c).cells().map(|i| vals[i]).sum();
            assert_eq!(sums.get(&g, &c), direct);
        }
    }

    #[test]
    fn wrapped_cube_splits_into_pieces() {
        let l = LatticeSpec::unit(1, 2).unwrap();
        let g = DyadicGrid::shifted(l, vec![[0, 0], [1, 0]]).unwrap();
        // level-1 offset is 1 cell: cube 1 covers cells 3 and 0
        let c = g.cube(1, [1, 0]).unwrap();
        assert_eq!(g.cell_box(&c).cells().collect::<Vec<_>>(), vec![3, 0]);
        let pieces = g.pieces(&c);
        assert_eq!(pieces.len(), 2);
        assert_eq!(g.dist_point(&c, &[0.5, 0.0]), 0.25);
    }

    fn arb_grid() -> impl Strategy<Value = DyadicGrid> {
        (1usize..=2, 1u32..=6, any::<u64>()).prop_map(|(dim, depth, seed)| {
            let l = LatticeSpec::unit(dim, depth).unwrap();
            let mut rng = trial_rng(seed, 0);
            DyadicGrid::random(l, &mut rng).with_r(2)
        })
    }

    proptest! {
        #[test]
        fn children_parent_round_trip(g in arb_grid(), pick in any::<u64>()) {
            let cubes = g.all_cubes();
            let q = cubes[(pick % cubes.len() as u64) as usize];
            if q.level < g.depth() {
                for c in g.children(&q).unwrap() {
                    prop_assert_eq!(g.parent(&c, 1).unwrap(), q);
                    prop_assert!(g.contains(&q, &c));
                }
                // the children tile the parent's cells
                let mut cells: Vec<usize> = g.children(&q).unwrap().iter()
                    .flat_map(|c| g.cell_box(c).cells().collect::<Vec<_>>()).collect();
                cells.sort();
                let mut own: Vec<usize> = g.cell_box(&q).cells().collect();
                own.sort();
                prop_assert_eq!(cells, own);
            }
        }

        #[test]
        fn ancestor_matches_cell_containment(g in arb_grid(), pick in any::<u64>(), k in 0u32..7) {
            let cubes = g.all_cubes();
            let q = cubes[(pick % cubes.len() as u64) as usize];
            let k = k.min(q.level);
            let anc = g.parent(&q, k).unwrap();
            // oracle: the ancestor is the cube of that level containing any cell of Q
            let cell = g.cell_box(&q).cells().next().unwrap();
            prop_assert_eq!(anc, g.containing(cell, q.level - k));
        }
    }
}
