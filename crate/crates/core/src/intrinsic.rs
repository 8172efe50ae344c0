//! Intrinsic square function over a finite Hölder test family.
//!
//! The supremum over the whole Hölder class is replaced by a maximum over
//! a finite family, so every value here is a lower bound for the
//! intrinsic quantity it stands for.
//!
//! Tensor bumps `A Π_a p_a((u_a − c_a)/w)` on the box `|u_a − c_a| ≤ w`
//! use the profiles `sin(πs)` (odd) and `sin(2π|s|)` (even), both of zero
//! mean on `[-1, 1]` and vanishing at `±1`. With Lipschitz constant `L`
//! and sup `A`, `|φ(x) − φ(y)| ≤ min(L|x−y|, 2A) ≤ L^α (2A)^{1−α} |x−y|^α`,
//! which fixes the amplitude. Rescaled generators `c ψ` use the same
//! bound with `L` and `sup|ψ|` measured on a fine grid; they are not
//! compactly supported.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, DyadicGrid};
use crate::error::{GwError, Result};
use crate::gfun::Quadrature;
use crate::kernels::Generator;
use crate::lattice::{Atom, GridFunction, Point, Weight};
use crate::rng::trial_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Odd,
    Even,
}

impl Profile {
    fn eval(self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            Profile::Odd => (PI * s).sin(),
            Profile::Even => (2.0 * PI * s.abs()).sin(),
        }
    }

    fn lipschitz(self) -> f64 {
        match self {
            Profile::Odd => PI,
            Profile::Even => 2.0 * PI,
        }
    }
}

/// Member description as stored in family files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MemberSpec {
    Bump {
        center: Vec<f64>,
        width: f64,
        profiles: Vec<Profile>,
    },
    Generator {
        generator: Generator,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub dim: usize,
    pub alpha: f64,
    pub members: Vec<MemberSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Member {
    Bump {
        center: Point,
        width: f64,
        profiles: [Profile; 2],
        amplitude: f64,
    },
    Scaled {
        generator: Generator,
        c: f64,
    },
}

impl Member {
    pub fn eval(&self, dim: usize, x: &Point) -> f64 {
        match self {
            Member::Bump {
                center,
                width,
                profiles,
                amplitude,
            } => {
                let mut v = *amplitude;
                for a in 0..dim {
                    v *= profiles[a].eval((x[a] - center[a]) / width);
                }
                v
            }
            Member::Scaled { generator, c } => c * generator.eval(dim, x),
        }
    }

    /// `φ_t(x) = t^{-n} φ(x/t)`.
    #[inline]
    pub fn dilated(&self, dim: usize, x: &Point, t: f64) -> f64 {
        self.eval(dim, &[x[0] / t, x[1] / t]) / t.powi(dim as i32)
    }

    pub fn is_generator(&self) -> bool {
        matches!(self, Member::Scaled { .. })
    }
}

/// Lipschitz constant and sup of a generator, measured on a fine grid
/// around the origin where both are attained, with a 1% margin.
fn generator_bounds(g: Generator, dim: usize) -> (f64, f64) {
    let steps = if dim == 1 { 20_000 } else { 400 };
    let span = 4.0;
    let h = 2.0 * span / steps as f64;
    let mut lip: f64 = 0.0;
    let mut sup: f64 = 0.0;
    let ys: Vec<f64> = if dim == 1 {
        vec![0.0]
    } else {
        (0..=steps).map(|k| -span + k as f64 * h).collect()
    };
    let xs: Vec<f64> = (0..=steps).map(|k| -span + k as f64 * h).collect();
    let e = 1e-6;
    for &y in &ys {
        for &x in &xs {
            let p = [x, y];
            sup = sup.max(g.eval(dim, &p).abs());
            let mut grad2 = 0.0;
            for a in 0..dim {
                let mut hi = p;
                let mut lo = p;
                hi[a] += e;
                lo[a] -= e;
                let d = (g.eval(dim, &hi) - g.eval(dim, &lo)) / (2.0 * e);
                grad2 += d * d;
            }
            lip = lip.max(grad2.sqrt());
        }
    }
    (lip * 1.01, sup * 1.01)
}

/// `c = 1 / (L^α (2M)^{1−α})`, the factor placing `cψ` in the Hölder ball.
pub fn generator_normalization(g: Generator, dim: usize, alpha: f64) -> f64 {
    let (lip, sup) = generator_bounds(g, dim);
    1.0 / (lip.powf(alpha) * (2.0 * sup).powf(1.0 - alpha))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFamily {
    pub dim: usize,
    pub alpha: f64,
    pub members: Vec<Member>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(GwError::validation(format!("α must lie in (0, 1], got {alpha}")))
    }
}

impl TestFamily {
    pub fn from_spec(spec: &FamilySpec) -> Result<Self> {
        check_alpha(spec.alpha)?;
        if !(1..=2).contains(&spec.dim) {
            return Err(GwError::validation("family dimension must be 1 or 2"));
        }
        let dim = spec.dim;
        let mut members = Vec::with_capacity(spec.members.len());
        for m in &spec.members {
            members.push(match m {
                MemberSpec::Bump {
                    center,
                    width,
                    profiles,
                } => {
                    if center.len() != dim || profiles.len() != dim {
                        return Err(GwError::validation("bump center and profiles need one entry per axis"));
                    }
                    let mut c = [0.0; 2];
                    c[..dim].copy_from_slice(center);
                    let reach = c.iter().map(|v| v * v).sum::<f64>().sqrt() + width * (dim as f64).sqrt();
                    if !(*width > 0.0) || reach > 1.0 + 1e-12 {
                        return Err(GwError::validation("bump must lie in the unit ball"));
                    }
                    let mut p = [Profile::Odd; 2];
                    p[..dim].copy_from_slice(profiles);
                    let grad = p[..dim].iter().map(|q| q.lipschitz().powi(2)).sum::<f64>().sqrt() / width;
                    let amplitude = 1.0 / (grad.powf(spec.alpha) * 2f64.powf(1.0 - spec.alpha));
                    Member::Bump {
                        center: c,
                        width: *width,
                        profiles: p,
                        amplitude,
                    }
                }
                MemberSpec::Generator { generator } => Member::Scaled {
                    generator: *generator,
                    c: generator_normalization(*generator, dim, spec.alpha),
                },
            });
        }
        Ok(Self {
            dim,
            alpha: spec.alpha,
            members,
        })
    }

    /// Centered bumps at widths `{1, 1/2, 1/4}/√n` in every profile
    /// orientation, plus the rescaled Poisson generators.
    pub fn default_spec(dim: usize, alpha: f64) -> FamilySpec {
        let mut members = Vec::new();
        for k in 0..3 {
            let width = 0.5f64.powi(k) / (dim as f64).sqrt();
            for o in 0..(1usize << dim) {
                let profiles = (0..dim)
                    .map(|a| if (o >> a) & 1 == 0 { Profile::Odd } else { Profile::Even })
                    .collect();
                members.push(MemberSpec::Bump {
                    center: vec![0.0; dim],
                    width,
                    profiles,
                });
            }
        }
        for g in Generator::all(dim) {
            members.push(MemberSpec::Generator { generator: g });
        }
        FamilySpec { dim, alpha, members }
    }

    pub fn default_family(dim: usize, alpha: f64) -> Result<Self> {
        Self::from_spec(&Self::default_spec(dim, alpha))
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GwError::io(path, e))?;
        let spec: FamilySpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec)
    }

    pub fn singleton(dim: usize, alpha: f64, generator: Generator) -> Result<Self> {
        Self::from_spec(&FamilySpec {
            dim,
            alpha,
            members: vec![MemberSpec::Generator { generator }],
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Sampled checks of the class constraints for one member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemberReport {
    pub support_radius: f64,
    pub integral: f64,
    pub holder_quotient: f64,
}

pub fn member_report(member: &Member, dim: usize, alpha: f64, seed: u64) -> MemberReport {
    use rand::Rng;
    let mut rng = trial_rng(seed, 0);
    let span = 1.5;
    let mut support: f64 = 0.0;
    let mut quotient: f64 = 0.0;
    for k in 0..40_000 {
        let mut x = [0.0; 2];
        let mut y = [0.0; 2];
        let gap = if k % 2 == 0 {
            10f64.powf(rng.random_range(-6.0..0.0))
        } else {
            rng.random_range(0.0..2.0)
        };
        for a in 0..dim {
            x[a] = rng.random_range(-span..span);
            y[a] = x[a] + gap * rng.random_range(-1.0..1.0);
        }
        let fx = member.eval(dim, &x);
        if fx != 0.0 {
            support = support.max((x[0] * x[0] + x[1] * x[1]).sqrt());
        }
        let d = crate::lattice::distance(&x, &y);
        if d > 0.0 {
            quotient = quotient.max((fx - member.eval(dim, &y)).abs() / d.powf(alpha));
        }
    }
    MemberReport {
        support_radius: support,
        integral: member_integral(member, dim),
        holder_quotient: quotient,
    }
}

fn member_integral(member: &Member, dim: usize) -> f64 {
    match member {
        Member::Bump { center, width, .. } => {
            // tensor Gauss–Legendre on the support box, split at the center
            // where the even profile has a kink
            let rule = gauss_quad::legendre::GaussLegendre::new(32.try_into().expect("nonzero"));
            let axis = |a: usize| -> Vec<(f64, f64)> {
                if a >= dim {
                    return vec![(0.0, 1.0)];
                }
                let mut out = Vec::new();
                for (lo, hi) in [(center[a] - width, center[a]), (center[a], center[a] + width)] {
                    let half = (hi - lo) / 2.0;
                    out.extend(rule.iter().map(|(x, w)| (lo + half * (x + 1.0), half * w)));
                }
                out
            };
            let (xa, ya) = (axis(0), axis(1));
            let mut s = 0.0;
            for &(x, wx) in &xa {
                for &(y, wy) in &ya {
                    s += wx * wy * member.eval(dim, &[x, y]);
                }
            }
            s
        }
        Member::Scaled { generator, c } => c * crate::kernels::u11_check(*generator, dim).cancel_residual,
    }
}

fn check_family(family: &TestFamily) -> Result<()> {
    if family.is_empty() {
        Err(GwError::domain("test family is empty"))
    } else {
        Ok(())
    }
}

/// `max_φ |φ_t * μ(y)|` over the family.
pub fn a_alpha(fw: &[Atom], family: &TestFamily, y: &Point, t: f64) -> Result<f64> {
    check_family(family)?;
    if !(t > 0.0) {
        return Err(GwError::domain(format!("t must be positive, got {t}")));
    }
    Ok(a_alpha_raw(fw, family, y, t))
}

fn a_alpha_raw(fw: &[Atom], family: &TestFamily, y: &Point, t: f64) -> f64 {
    let dim = family.dim;
    family
        .members
        .iter()
        .map(|m| {
            fw.iter()
                .map(|a| m.dilated(dim, &[y[0] - a.pos[0], y[1] - a.pos[1]], t) * a.mass)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

fn window_a2(fw: &[Atom], family: &TestFamily, y: &Point, nodes: &[(f64, f64)]) -> f64 {
    nodes
        .iter()
        .map(|&(t, w)| w * a_alpha_raw(fw, family, y, t).powi(2))
        .sum()
}

/// `‖g_α(fσ)‖_{L²(w)}` with `g_α(μ)(x)² = ∫ A_α(μ)(x, t)² dt/t`.
pub fn g_alpha_norm(
    f: &GridFunction,
    sigma: &Weight,
    w: &Weight,
    family: &TestFamily,
    quad: &Quadrature,
) -> Result<f64> {
    check_family(family)?;
    if f.lattice() != sigma.lattice() || sigma.lattice() != w.lattice() {
        return Err(GwError::domain("inputs live on different lattices"));
    }
    let fw = sigma.times(f);
    let nodes = quad.nodes();
    Ok(w.atoms()
        .iter()
        .map(|x| x.mass * window_a2(&fw, family, &x.pos, &nodes))
        .sum::<f64>()
        .sqrt())
}

/// `sup_R ((1/σ(R)) ∬_{R × (0, l(R)]} A_α(1_R σ)² w(dx) dt/t)^{1/2}`.
pub fn intrinsic_testing_constant(
    sigma: &Weight,
    w: &Weight,
    grid: &DyadicGrid,
    family: &TestFamily,
    quad: &Quadrature,
) -> Result<(f64, Option<DyadicCube>)> {
    use rayon::prelude::*;
    check_family(family)?;
    let cubes: Vec<DyadicCube> = grid.all_cubes();
    let vals: Vec<f64> = cubes
        .par_iter()
        .map(|r| {
            let src = sigma.atoms_in(grid, r);
            let m: f64 = src.iter().map(|a| a.mass).sum();
            if m == 0.0 {
                return 0.0;
            }
            let nodes = quad.window(0.0, grid.side(r));
            let e: f64 = w
                .atoms_in(grid, r)
                .iter()
                .map(|x| x.mass * window_a2(&src, family, &x.pos, &nodes))
                .sum();
            (e / m).sqrt()
        })
        .collect();
    let mut best = (0.0, None);
    for (r, v) in cubes.into_iter().zip(vals) {
        if v > best.0 {
            best = (v, Some(r));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfun::{box_integral_kind, g_norm, TransformKind};
    use crate::lattice::LatticeSpec;
    use rand::Rng;

    fn random_weight(l: LatticeSpec, seed: u64) -> Weight {
        let mut rng = trial_rng(seed, 0);
        Weight::new(
            l,
            (0..l.cell_count())
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) * l.cell_volume() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_members_satisfy_class_constraints() {
        for dim in 1..=2 {
            for alpha in [0.5, 1.0] {
                let fam = TestFamily::default_family(dim, alpha).unwrap();
                assert_eq!(fam.len(), 3 * (1 << dim) + dim + 1);
                for (i, m) in fam.members.iter().enumerate() {
                    let rep = member_report(m, dim, alpha, i as u64);
                    assert!(rep.integral.abs() <= 1e-8, "{m:?}: {rep:?}");
                    assert!(rep.holder_quotient <= 1.0 + 1e-6, "{m:?}: {rep:?}");
                    if !m.is_generator() {
                        assert!(rep.support_radius <= 1.0 + 1e-9, "{m:?}: {rep:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn a_alpha_basic_cases() {
        let fam = TestFamily::default_family(1, 0.5).unwrap();
        assert_eq!(a_alpha(&[], &fam, &[0.2, 0.0], 0.3).unwrap(), 0.0);
        let empty = TestFamily { dim: 1, alpha: 0.5, members: Vec::new() };
        assert!(a_alpha(&[], &empty, &[0.2, 0.0], 0.3).is_err());
        let atoms = [Atom { pos: [0.1, 0.0], mass: 0.7 }, Atom { pos: [0.3, 0.0], mass: -0.2 }];
        let one = TestFamily { dim: 1, alpha: 0.5, members: vec![fam.members[1].clone()] };
        let direct: f64 = atoms
            .iter()
            .map(|a| fam.members[1].dilated(1, &[0.25 - a.pos[0], 0.0], 0.3) * a.mass)
            .sum();
        assert_eq!(a_alpha(&atoms, &one, &[0.25, 0.0], 0.3).unwrap(), direct.abs());
        let mut rng = trial_rng(31, 0);
        for _ in 0..200 {
            let y = [rng.random_range(-1.0..1.0), 0.0];
            let t = rng.random_range(0.05..2.0);
            let full = a_alpha(&atoms, &fam, &y, t).unwrap();
            for m in &fam.members {
                let v: f64 = atoms.iter().map(|a| m.dilated(1, &[y[0] - a.pos[0], 0.0], t) * a.mass).sum();
                assert!(full >= v.abs());
            }
            let sub = TestFamily { dim: 1, alpha: 0.5, members: fam.members[..3].to_vec() };
            assert!(a_alpha(&atoms, &sub, &y, t).unwrap() <= full);
        }
    }

    #[test]
    fn dilation_covariance() {
        let fam = TestFamily::default_family(2, 0.7).unwrap();
        let atoms = [Atom { pos: [0.1, 0.2], mass: 0.7 }, Atom { pos: [0.3, -0.4], mass: -0.2 }];
        let doubled: Vec<Atom> = atoms.iter().map(|a| Atom { pos: [2.0 * a.pos[0], 2.0 * a.pos[1]], mass: a.mass }).collect();
        for (y, t) in [([0.0, 0.1], 0.3), ([0.5, -0.2], 1.1)] {
            let a = a_alpha(&atoms, &fam, &y, t).unwrap();
            let b = a_alpha(&doubled, &fam, &[2.0 * y[0], 2.0 * y[1]], 2.0 * t).unwrap();
            assert!((b * 4.0 - a).abs() <= 1e-10 * a.max(1e-300));
        }
    }

    #[test]
    fn generator_members_dominate_the_psi_square_function() {
        let l = LatticeSpec::unit(1, 4).unwrap();
        let q = Quadrature::for_lattice(&l);
        let sigma = random_weight(l, 1);
        let w = random_weight(l, 2);
        let f = GridFunction::from_fn(l, |p| (7.0 * p[0]).sin()).unwrap();
        let alpha = 0.5;
        let fam = TestFamily::singleton(1, alpha, Generator::DtPoisson).unwrap();
        let c = match fam.members[0] {
            Member::Scaled { c, .. } => c,
            _ => unreachable!(),
        };
        let kind = TransformKind::Psi(Generator::DtPoisson);
        let psi = g_norm(&f, &sigma, &w, &q, kind).unwrap();
        let ga = g_alpha_norm(&f, &sigma, &w, &fam, &q).unwrap();
        assert!((ga - c * psi).abs() <= 1e-10 * ga);
        let full = TestFamily::default_family(1, alpha).unwrap();
        assert!(g_alpha_norm(&f, &sigma, &w, &full, &q).unwrap() >= c * psi * (1.0 - 1e-12));
        assert_eq!(g_alpha_norm(&f, &sigma, &Weight::zero(l), &full, &q).unwrap(), 0.0);
        assert_eq!(g_alpha_norm(&GridFunction::zero(l), &sigma, &w, &full, &q).unwrap(), 0.0);
    }

    #[test]
    fn singleton_testing_matches_rescaled_psi_testing() {
        let l = LatticeSpec::unit(1, 4).unwrap();
        let q = Quadrature::for_lattice(&l);
        let g = DyadicGrid::standard(l);
        let sigma = random_weight(l, 3);
        let w = random_weight(l, 4);
        let fam = TestFamily::singleton(1, 0.5, Generator::DtPoisson).unwrap();
        let c = match fam.members[0] {
            Member::Scaled { c, .. } => c,
            _ => unreachable!(),
        };
        let (t, _) = intrinsic_testing_constant(&sigma, &w, &g, &fam, &q).unwrap();
        let kind = TransformKind::Psi(Generator::DtPoisson);
        let psi_t = g
            .all_cubes()
            .iter()
            .filter_map(|r| {
                let m = crate::lattice::mass(&sigma, &g, r).unwrap();
                (m > 0.0).then(|| (box_integral_kind(&g, r, &sigma, &w, &q, kind) / m).sqrt())
            })
            .fold(0.0, f64::max);
        assert!((t - c * psi_t).abs() <= 1e-6 * t);
        let full = TestFamily::default_family(1, 0.5).unwrap();
        assert!(intrinsic_testing_constant(&sigma, &w, &g, &full, &q).unwrap().0 >= t);
        assert_eq!(intrinsic_testing_constant(&sigma, &Weight::zero(l), &g, &full, &q).unwrap().0, 0.0);
    }

    #[test]
    fn family_json_round_trip() {
        let spec = TestFamily::default_spec(2, 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("family.json");
        std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
        let fam = TestFamily::from_json_path(&path).unwrap();
        assert_eq!(fam, TestFamily::from_spec(&spec).unwrap());
        let bad = FamilySpec {
            dim: 1,
            alpha: 0.5,
            members: vec![MemberSpec::Bump { center: vec![0.5], width: 0.6, profiles: vec![Profile::Odd] }],
        };
        assert!(TestFamily::from_spec(&bad).is_err());
        assert!(TestFamily::from_spec(&FamilySpec { alpha: 1.5, ..spec }).is_err());
    }
}
