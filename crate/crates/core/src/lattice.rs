//! Finite lattice over a base cube, atomic weights and grid functions.
//!
//! Every weight is a finite atomic measure with one atom per lattice cell,
//! placed at the cell center. Integrals against a weight are therefore
//! finite sums and are exact up to rounding.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, DyadicGrid};
use crate::error::{GwError, Result};

pub const MAX_DEPTH: u32 = 12;

/// A point of the ambient space. For `n = 1` the second coordinate is zero.
pub type Point = [f64; 2];

/// Euclidean norm of a point difference.
#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    dim: usize,
    corner: Point,
    side: f64,
    depth: u32,
    t_min: f64,
    t_max: f64,
}

impl LatticeSpec {
    /// Lattice with the default truncation `t_min = h/4`, `t_max = 4 s`.
    pub fn new(dim: usize, corner: &[f64], side: f64, depth: u32) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(GwError::validation(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if corner.len() != dim {
            return Err(GwError::validation(format!(
                "corner has {} coordinates, expected {dim}",
                corner.len()
            )));
        }
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(GwError::validation(format!(
                "depth must lie in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        if !(side.is_finite() && side > 0.0) || corner.iter().any(|c| !c.is_finite()) {
            return Err(GwError::validation("base cube must be finite with positive side"));
        }
        let mut c = [0.0; 2];
        c[..dim].copy_from_slice(corner);
        let h = side / (1u64 << depth) as f64;
        Ok(Self {
            dim,
            corner: c,
            side,
            depth,
            t_min: h / 4.0,
            t_max: 4.0 * side,
        })
    }

    /// Unit cube `[0,1)^n` with default truncation.
    pub fn unit(dim: usize, depth: u32) -> Result<Self> {
        Self::new(dim, &vec![0.0; dim], 1.0, depth)
    }

    pub fn with_truncation(mut self, t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(GwError::validation(format!(
                "need 0 < t_min < t_max, got t_min={t_min}, t_max={t_max}"
            )));
        }
        self.t_min = t_min;
        self.t_max = t_max;
        Ok(self)
    }

    /// Truncation matched to the Whitney scales of levels `0..=depth`,
    /// i.e. `(h/2, s]`.
    pub fn whitney_truncation(self) -> Self {
        let h = self.cell_side();
        Self {
            t_min: h / 2.0,
            t_max: self.side,
            ..self
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn corner(&self) -> Point {
        self.corner
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Number of cells along one axis, `2^d`.
    pub fn per_axis(&self) -> usize {
        1usize << self.depth
    }

    pub fn cell_count(&self) -> usize {
        self.per_axis().pow(self.dim as u32)
    }

    pub fn cell_side(&self) -> f64 {
        self.side / self.per_axis() as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_side().powi(self.dim as i32)
    }

    pub fn cell_coords(&self, idx: usize) -> [usize; 2] {
        let n = self.per_axis();
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % n, idx / n]
        }
    }

    pub fn cell_index(&self, coords: [usize; 2]) -> usize {
        coords[0] + self.per_axis() * coords[1]
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let c = self.cell_coords(idx);
        let h = self.cell_side();
        let mut p = [0.0; 2];
        for a in 0..self.dim {
            p[a] = self.corner[a] + (c[a] as f64 + 0.5) * h;
        }
        p
    }

    /// Cell containing `x` under the half-open convention, or `None`
    /// when `x` lies outside the base cube.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        let n = self.per_axis();
        let mut coords = [0usize; 2];
        for a in 0..self.dim {
            let u = (x[a] - self.corner[a]) / self.side;
            if !(0.0..1.0).contains(&u) {
                return None;
            }
            coords[a] = ((u * n as f64).floor() as usize).min(n - 1);
        }
        Some(self.cell_index(coords))
    }
}

/// An atom of a finite measure. `mass` is signed when the atom belongs to
/// a product `f·σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub pos: Point,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    lattice: LatticeSpec,
    masses: Vec<f64>,
}

impl Weight {
    pub fn new(lattice: LatticeSpec, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != lattice.cell_count() {
            return Err(GwError::validation(format!(
                "weight has {} masses, lattice has {} cells",
                masses.len(),
                lattice.cell_count()
            )));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(GwError::validation(format!(
                "mass of cell {i} must be finite and nonnegative, got {m}"
            )));
        }
        Ok(Self { lattice, masses })
    }

    pub fn zero(lattice: LatticeSpec) -> Self {
        Self {
            lattice,
            masses: vec![0.0; lattice.cell_count()],
        }
    }

    /// Each cell carries its own volume.
    pub fn lebesgue(lattice: LatticeSpec) -> Self {
        Self {
            lattice,
            masses: vec![lattice.cell_volume(); lattice.cell_count()],
        }
    }

    pub fn single_atom(lattice: LatticeSpec, cell: usize, mass: f64) -> Result<Self> {
        let mut masses = vec![0.0; lattice.cell_count()];
        *masses
            .get_mut(cell)
            .ok_or_else(|| GwError::domain(format!("cell {cell} outside lattice")))? = mass;
        Self::new(lattice, masses)
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.masses.iter().all(|&m| m == 0.0)
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.lattice,
            self.masses.iter().map(|m| m * lambda).collect(),
        )
    }

    /// Indices of cells with positive mass.
    pub fn charged_cells(&self) -> Vec<usize> {
        (0..self.masses.len())
            .filter(|&i| self.masses[i] > 0.0)
            .collect()
    }

    /// Atoms with positive mass.
    pub fn atoms(&self) -> Vec<Atom> {
        self.charged_cells()
            .into_iter()
            .map(|i| Atom {
                pos: self.lattice.cell_center(i),
                mass: self.masses[i],
            })
            .collect()
    }

    /// Atoms of the restriction to a cube.
    pub fn atoms_in(&self, grid: &DyadicGrid, cube: &DyadicCube) -> Vec<Atom> {
        grid.cell_box(cube)
            .cells()
            .filter(|&i| self.masses[i] > 0.0)
            .map(|i| Atom {
                pos: self.lattice.cell_center(i),
                mass: self.masses[i],
            })
            .collect()
    }

    /// Signed atoms of the measure `f·σ`, skipping null products.
    pub fn times(&self, f: &GridFunction) -> Vec<Atom> {
        debug_assert_eq!(f.values.len(), self.masses.len());
        (0..self.masses.len())
            .filter_map(|i| {
                let m = self.masses[i] * f.values[i];
                (m != 0.0).then(|| Atom {
                    pos: self.lattice.cell_center(i),
                    mass: m,
                })
            })
            .collect()
    }

    pub fn from_csv_reader<R: Read>(lattice: LatticeSpec, reader: R) -> Result<Self> {
        let mut masses = vec![0.0; lattice.cell_count()];
        for (cell, value, _) in read_cell_csv(&lattice, reader, "mass")? {
            masses[cell] += value;
        }
        Self::new(lattice, masses)
    }

    pub fn from_csv_path(lattice: LatticeSpec, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| GwError::io(path, e))?;
        Self::from_csv_reader(lattice, file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_cell_csv(&self.lattice, &self.masses, "mass", writer)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    lattice: LatticeSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lattice: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.cell_count() {
            return Err(GwError::validation(format!(
                "function has {} values, lattice has {} cells",
                values.len(),
                lattice.cell_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GwError::validation("grid function values must be finite"));
        }
        Ok(Self { lattice, values })
    }

    pub fn constant(lattice: LatticeSpec, c: f64) -> Self {
        Self {
            lattice,
            values: vec![c; lattice.cell_count()],
        }
    }

    pub fn zero(lattice: LatticeSpec) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn from_fn(lattice: LatticeSpec, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..lattice.cell_count())
            .map(|i| f(lattice.cell_center(i)))
            .collect();
        Self::new(lattice, values)
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn abs(&self) -> Self {
        Self {
            lattice: self.lattice,
            values: self.values.iter().map(|v| v.abs()).collect(),
        }
    }

    /// `f·1_Q`.
    pub fn restricted(&self, grid: &DyadicGrid, cube: &DyadicCube) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for i in grid.cell_box(cube).cells() {
            values[i] = self.values[i];
        }
        Self {
            lattice: self.lattice,
            values,
        }
    }

    pub fn from_csv_reader<R: Read>(lattice: LatticeSpec, reader: R) -> Result<Self> {
        let mut values = vec![0.0; lattice.cell_count()];
        let mut seen = vec![false; lattice.cell_count()];
        for (cell, value, line) in read_cell_csv(&lattice, reader, "value")? {
            if std::mem::replace(&mut seen[cell], true) {
                return Err(GwError::Parse {
                    line,
                    message: format!("cell {cell} assigned twice"),
                });
            }
            values[cell] = value;
        }
        Self::new(lattice, values)
    }

    pub fn from_csv_path(lattice: LatticeSpec, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| GwError::io(path, e))?;
        Self::from_csv_reader(lattice, file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_cell_csv(&self.lattice, &self.values, "value", writer)
    }
}

fn check_cube(weight_lattice: &LatticeSpec, grid: &DyadicGrid, cube: &DyadicCube) -> Result<()> {
    if grid.lattice() != weight_lattice {
        return Err(GwError::domain("cube and weight live on different lattices"));
    }
    grid.check(cube)
}

/// `σ(Q)`: total mass of atoms in the half-open cube.
pub fn mass(weight: &Weight, grid: &DyadicGrid, cube: &DyadicCube) -> Result<f64> {
    check_cube(&weight.lattice, grid, cube)?;
    Ok(grid
        .cell_box(cube)
        .cells()
        .map(|i| weight.masses[i])
        .sum())
}

/// `∫_Q f dσ`.
pub fn integrate(
    f: &GridFunction,
    weight: &Weight,
    grid: &DyadicGrid,
    cube: &DyadicCube,
) -> Result<f64> {
    check_cube(&weight.lattice, grid, cube)?;
    if f.lattice != weight.lattice {
        return Err(GwError::domain("function and weight live on different lattices"));
    }
    Ok(grid
        .cell_box(cube)
        .cells()
        .map(|i| f.values[i] * weight.masses[i])
        .sum())
}

/// `‖f‖_{L²(σ)}`.
pub fn l2_norm(f: &GridFunction, weight: &Weight) -> f64 {
    f.values
        .iter()
        .zip(&weight.masses)
        .map(|(v, m)| v * v * m)
        .sum::<f64>()
        .sqrt()
}

const AXIS_NAMES: [&str; 2] = ["x1", "x2"];

fn read_cell_csv<R: Read>(
    lattice: &LatticeSpec,
    reader: R,
    value_name: &str,
) -> Result<Vec<(usize, f64, u64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let dim = lattice.dim();
    let expected: Vec<&str> = AXIS_NAMES[..dim]
        .iter()
        .copied()
        .chain(std::iter::once(value_name))
        .collect();
    let headers = rdr.headers().map_err(|e| GwError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(GwError::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| GwError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 1 {
            return Err(GwError::Parse {
                line,
                message: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        let mut nums = [0.0; 3];
        for (k, field) in record.iter().enumerate() {
            nums[k] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| GwError::Parse {
                    line,
                    message: format!("field `{field}` is not a finite number"),
                })?;
        }
        let value = nums[dim];
        if value_name == "mass" && value < 0.0 {
            return Err(GwError::validation(format!(
                "negative mass {value} at line {line}"
            )));
        }
        let cell = lattice.locate(&nums[..dim]).ok_or_else(|| GwError::Parse {
            line,
            message: "coordinates outside the base cube".into(),
        })?;
        out.push((cell, value, line));
    }
    Ok(out)
}

fn write_cell_csv<W: Write>(
    lattice: &LatticeSpec,
    values: &[f64],
    value_name: &str,
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| GwError::validation(format!("csv write failed: {e}"));
    let dim = lattice.dim();
    let mut header: Vec<&str> = AXIS_NAMES[..dim].to_vec();
    header.push(value_name);
    wtr.write_record(&header).map_err(to_err)?;
    for (i, v) in values.iter().enumerate() {
        let c = lattice.cell_center(i);
        let mut row: Vec<String> = c[..dim].iter().map(|x| x.to_string()).collect();
        row.push(v.to_string());
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| GwError::validation(format!("csv flush failed: {e}")))?;
    Ok(())
}
