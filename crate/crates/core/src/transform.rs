//! Weighted martingale averages `E_Q^σ`, differences `Δ_Q^σ` and the
//! expansion of a function into them.

use serde::Serialize;

use crate::dyadic::{DyadicCube, DyadicGrid, LevelSums};
use crate::error::{GwError, Result};
use crate::lattice::{integrate, mass, GridFunction, Weight};

/// `E_Q^σ f`, zero when `σ(Q) = 0`.
pub fn expectation(
    f: &GridFunction,
    sigma: &Weight,
    grid: &DyadicGrid,
    cube: &DyadicCube,
) -> Result<f64> {
    let m = mass(sigma, grid, cube)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    Ok(integrate(f, sigma, grid, cube)? / m)
}

/// `Δ_Q^σ f = Σ_{Q' ∈ ch(Q)} (E_{Q'}^σ f − E_Q^σ f) 1_{Q'}`.
pub fn delta(
    f: &GridFunction,
    sigma: &Weight,
    grid: &DyadicGrid,
    cube: &DyadicCube,
) -> Result<GridFunction> {
    let children = grid.children(cube)?;
    let parent = expectation(f, sigma, grid, cube)?;
    let mut values = vec![0.0; sigma.lattice().cell_count()];
    for ch in &children {
        // an uncharged child has E = 0 by convention but carries no σ-mass,
        // so it contributes nothing σ-a.e.; keep it at zero
        if mass(sigma, grid, ch)? == 0.0 {
            continue;
        }
        let c = expectation(f, sigma, grid, ch)? - parent;
        for i in grid.cell_box(ch).cells() {
            values[i] = c;
        }
    }
    GridFunction::new(*sigma.lattice(), values)
}

/// `Δ_Q^σ f` stored as one coefficient per charged child.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaComponent {
    pub cube: DyadicCube,
    pub children: Vec<(DyadicCube, f64)>,
}

impl DeltaComponent {
    pub fn is_zero(&self) -> bool {
        self.children.iter().all(|(_, c)| *c == 0.0)
    }

    pub fn to_function(&self, grid: &DyadicGrid) -> GridFunction {
        let lattice = *grid.lattice();
        let mut values = vec![0.0; lattice.cell_count()];
        for (ch, c) in &self.children {
            for i in grid.cell_box(ch).cells() {
                values[i] = *c;
            }
        }
        GridFunction::new(lattice, values).expect("finite coefficients")
    }
}

/// `f = Σ_{l(Q) ≤ l_s} Δ_Q^σ f + Σ_{l(Q) = l_s} (E_Q^σ f) 1_Q` σ-a.e.,
/// with `l_s` the side of level `top_level` cubes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleExpansion {
    pub top_level: u32,
    pub top: Vec<(DyadicCube, f64)>,
    pub components: Vec<DeltaComponent>,
    /// Whether any σ-charged cell exists. Without one the expansion is
    /// the empty sum and reconstruction is vacuous.
    pub charged: bool,
}

struct Averages {
    sigma: LevelSums,
    fsigma: LevelSums,
}

impl Averages {
    fn new(f: &GridFunction, sigma: &Weight, grid: &DyadicGrid) -> Self {
        let fs: Vec<f64> = f
            .values()
            .iter()
            .zip(sigma.masses())
            .map(|(v, m)| v * m)
            .collect();
        Self {
            sigma: grid.level_sums(sigma.masses()),
            fsigma: grid.level_sums(&fs),
        }
    }

    fn mass(&self, grid: &DyadicGrid, q: &DyadicCube) -> f64 {
        self.sigma.get(grid, q)
    }

    fn mean(&self, grid: &DyadicGrid, q: &DyadicCube) -> f64 {
        let m = self.sigma.get(grid, q);
        if m == 0.0 {
            0.0
        } else {
            self.fsigma.get(grid, q) / m
        }
    }
}

pub fn expand(
    f: &GridFunction,
    sigma: &Weight,
    grid: &DyadicGrid,
    top_level: u32,
) -> Result<MartingaleExpansion> {
    if top_level > grid.depth() {
        return Err(GwError::domain(format!(
            "top level {top_level} below lattice depth {}",
            grid.depth()
        )));
    }
    if f.lattice() != sigma.lattice() || sigma.lattice() != grid.lattice() {
        return Err(GwError::domain("function, weight and grid use different lattices"));
    }
    let avg = Averages::new(f, sigma, grid);
    let top = grid
        .level_cubes(top_level)
        .filter(|q| avg.mass(grid, q) > 0.0)
        .map(|q| (q, avg.mean(grid, &q)))
        .collect();
    let mut components = Vec::new();
    for j in top_level..grid.depth() {
        for q in grid.level_cubes(j) {
            if avg.mass(grid, &q) == 0.0 {
                continue;
            }
            let parent = avg.mean(grid, &q);
            let children = grid
                .children(&q)?
                .into_iter()
                .filter(|ch| avg.mass(grid, ch) > 0.0)
                .map(|ch| (ch, avg.mean(grid, &ch) - parent))
                .collect();
            components.push(DeltaComponent { cube: q, children });
        }
    }
    Ok(MartingaleExpansion {
        top_level,
        top,
        components,
        charged: !sigma.is_zero(),
    })
}

impl MartingaleExpansion {
    pub fn reconstruct(&self, grid: &DyadicGrid) -> GridFunction {
        let lattice = *grid.lattice();
        let mut values = vec![0.0; lattice.cell_count()];
        for (q, c) in &self.top {
            for i in grid.cell_box(q).cells() {
                values[i] += c;
            }
        }
        for comp in &self.components {
            for (ch, c) in &comp.children {
                for i in grid.cell_box(ch).cells() {
                    values[i] += c;
                }
            }
        }
        GridFunction::new(lattice, values).expect("finite coefficients")
    }

    /// `(Σ ‖Δ_Q f‖², Σ ‖(E_Q f) 1_Q‖²)` in `L²(σ)`.
    pub fn energy(&self, sigma: &Weight, grid: &DyadicGrid) -> (f64, f64) {
        let sums = grid.level_sums(sigma.masses());
        let diff = self
            .components
            .iter()
            .flat_map(|c| c.children.iter())
            .map(|(ch, c)| c * c * sums.get(grid, ch))
            .sum();
        let top = self
            .top
            .iter()
            .map(|(q, c)| c * c * sums.get(grid, q))
            .sum();
        (diff, top)
    }
}

/// `|‖f‖²_σ − Σ energies| / ‖f‖²_σ`, zero for `‖f‖_σ = 0` with zero energy.
pub fn pythagoras_residual(
    f: &GridFunction,
    sigma: &Weight,
    expansion: &MartingaleExpansion,
    grid: &DyadicGrid,
) -> f64 {
    let norm2: f64 = f
        .values()
        .iter()
        .zip(sigma.masses())
        .map(|(v, m)| v * v * m)
        .sum();
    let (d, t) = expansion.energy(sigma, grid);
    let gap = (norm2 - d - t).abs();
    if norm2 == 0.0 {
        gap
    } else {
        gap / norm2
    }
}

/// Largest `|f − reconstruction|` over σ-charged cells.
pub fn reconstruction_error(
    f: &GridFunction,
    sigma: &Weight,
    expansion: &MartingaleExpansion,
    grid: &DyadicGrid,
) -> f64 {
    let rec = expansion.reconstruct(grid);
    sigma
        .charged_cells()
        .into_iter()
        .map(|i| (f.value(i) - rec.value(i)).abs())
        .fold(0.0, f64::max)
}

/// `⟨f, g⟩_σ`.
pub fn inner(f: &GridFunction, g: &GridFunction, sigma: &Weight) -> f64 {
    f.values()
        .iter()
        .zip(g.values())
        .zip(sigma.masses())
        .map(|((a, b), m)| a * b * m)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::rng::trial_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_instance(seed: u64, dim: usize, depth: u32) -> (GridFunction, Weight, DyadicGrid) {
        let l = LatticeSpec::unit(dim, depth).unwrap();
        let mut rng = trial_rng(seed, 0);
        let n = l.cell_count();
        let masses = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.0..2.0)
                }
            })
            .collect();
        let f = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let grid = DyadicGrid::random(l, &mut rng);
        (
            GridFunction::new(l, f).unwrap(),
            Weight::new(l, masses).unwrap(),
            grid,
        )
    }

    #[test]
    fn expectation_of_centers_is_midpoint() {
        let l = LatticeSpec::unit(1, 10).unwrap();
        let g = DyadicGrid::standard(l);
        let f = GridFunction::from_fn(l, |p| p[0]).unwrap();
        let e = expectation(&f, &Weight::lebesgue(l), &g, &g.top()).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn expectation_on_null_cube_is_zero() {
        let l = LatticeSpec::unit(1, 3).unwrap();
        let g = DyadicGrid::standard(l);
        let sigma = Weight::single_atom(l, 0, 1.0).unwrap();
        let f = GridFunction::constant(l, 5.0);
        let q = g.cube(1, [1, 0]).unwrap();
        assert_eq!(expectation(&f, &sigma, &g, &q).unwrap(), 0.0);
    }

    #[test]
    fn delta_vanishes_when_one_child_is_charged() {
        let l = LatticeSpec::unit(2, 3).unwrap();
        let g = DyadicGrid::standard(l);
        let mut masses = vec![0.0; 64];
        masses[0] = 1.0;
        masses[1] = 3.0;
        masses[8] = 0.5;
        let sigma = Weight::new(l, masses).unwrap();
        let f = GridFunction::from_fn(l, |p| p[0] * 7.0 - p[1]).unwrap();
        let q = g.cube(1, [0, 0]).unwrap();
        let d = delta(&f, &sigma, &g, &q).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_of_constant_is_zero_and_bottom_is_error() {
        let (_, sigma, g) = random_instance(4, 1, 5);
        let f = GridFunction::constant(*sigma.lattice(), 2.5);
        for q in g.all_cubes().iter().filter(|q| q.level < 5) {
            let d = delta(&f, &sigma, &g, q).unwrap();
            assert!(d.values().iter().all(|v| v.abs() < 1e-12));
        }
        assert!(delta(&f, &sigma, &g, &g.cube(5, [3, 0]).unwrap()).is_err());
    }

    #[test]
    fn constant_expands_to_top_coefficients() {
        let (_, sigma, g) = random_instance(5, 2, 4);
        let f = GridFunction::constant(*sigma.lattice(), -1.5);
        let e = expand(&f, &sigma, &g, 1).unwrap();
        assert!(e.components.iter().all(|c| c.children.iter().all(|(_, v)| v.abs() < 1e-12)));
        assert!(e.top.iter().all(|(_, c)| (c + 1.5).abs() < 1e-12));
    }

    #[test]
    fn zero_weight_expansion_is_empty() {
        let l = LatticeSpec::unit(1, 4).unwrap();
        let g = DyadicGrid::standard(l);
        let f = GridFunction::constant(l, 1.0);
        let e = expand(&f, &Weight::zero(l), &g, 0).unwrap();
        assert!(!e.charged && e.top.is_empty() && e.components.is_empty());
        assert_eq!(pythagoras_residual(&f, &Weight::zero(l), &e, &g), 0.0);
    }

    #[test]
    fn components_are_orthogonal() {
        let (f, sigma, g) = random_instance(6, 1, 6);
        let e = expand(&f, &sigma, &g, 0).unwrap();
        let funcs: Vec<GridFunction> = e.components.iter().map(|c| c.to_function(&g)).collect();
        let norm2 = inner(&f, &f, &sigma);
        let mut rng = trial_rng(6, 1);
        for _ in 0..50 {
            let a = rng.random_range(0..funcs.len());
            let b = rng.random_range(0..funcs.len());
            if a == b {
                continue;
            }
            assert!(inner(&funcs[a], &funcs[b], &sigma).abs() <= 1e-10 * norm2);
        }
        for (q, c) in &e.top {
            let top = GridFunction::constant(*g.lattice(), *c).restricted(&g, q);
            for d in &funcs {
                assert!(inner(&top, d, &sigma).abs() <= 1e-10 * norm2);
            }
        }
    }

    #[test]
    fn delta_matches_stored_component() {
        let (f, sigma, g) = random_instance(7, 2, 4);
        let e = expand(&f, &sigma, &g, 0).unwrap();
        for comp in e.components.iter().take(40) {
            let direct = delta(&f, &sigma, &g, &comp.cube).unwrap();
            let stored = comp.to_function(&g);
            for i in sigma.charged_cells() {
                assert!((direct.value(i) - stored.value(i)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pythagoras_and_reconstruction(seed in any::<u64>(), dim in 1usize..=2, depth in 1u32..=5, top in 0u32..=5) {
            let (f, sigma, g) = random_instance(seed, dim, depth);
            let top = top.min(depth);
            let e = expand(&f, &sigma, &g, top).unwrap();
            prop_assert!(pythagoras_residual(&f, &sigma, &e, &g) < 1e-10);
            prop_assert!(reconstruction_error(&f, &sigma, &e, &g) < 1e-10);
        }

        #[test]
        fn delta_has_zero_mean_and_is_idempotent(seed in any::<u64>()) {
            let (f, sigma, g) = random_instance(seed, 1, 5);
            let mut rng = trial_rng(seed, 9);
            let j = rng.random_range(0..5u32);
            let q = g.level_cubes(j).nth(rng.random_range(0..(1usize << j))).unwrap();
            let d = delta(&f, &sigma, &g, &q).unwrap();
            let total = integrate(&d, &sigma, &g, &q).unwrap();
            let scale = integrate(&f.abs(), &sigma, &g, &q).unwrap().max(1.0);
            prop_assert!(total.abs() <= 1e-12 * scale);
            let dd = delta(&d, &sigma, &g, &q).unwrap();
            for i in sigma.charged_cells() {
                prop_assert!((dd.value(i) - d.value(i)).abs() <= 1e-12 * scale);
            }
        }
    }
}
