//! Atomic measures on the torus and bounded symbols on the integer lattice.
//!
//! Fourier convention: `μ̂(χ) = Σ_j a_j e^{-i<χ, τ_j>}`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeFunction;

/// Atoms closer than this (on the torus) are rejected.
pub const MIN_ATOM_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub tau: Vec<f64>,
    pub mass: Complex64,
}

/// Finite atomic measure `Σ a_j δ_{τ_j}` on `T^d = [0, 2π)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct AtomicMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

/// Wrapped distance between two points of the torus.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let r = (x - y).rem_euclid(TAU);
            let w = r.min(TAU - r);
            w * w
        })
        .sum::<f64>()
        .sqrt()
}

impl AtomicMeasure {
    /// Builds a measure, reducing positions into `[0, 2π)^d`.
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("measure dimension must be at least 1"));
        }
        let mut reduced = Vec::with_capacity(atoms.len());
        for atom in atoms {
            if atom.tau.len() != dim {
                return Err(invalid(format!("atom position {:?} is not {dim}-dimensional", atom.tau)));
            }
            if atom.tau.iter().any(|x| !x.is_finite()) || !(atom.mass.re.is_finite() && atom.mass.im.is_finite()) {
                return Err(invalid("atom has a non-finite position or mass"));
            }
            let tau = atom.tau.iter().map(|x| x.rem_euclid(TAU)).collect();
            reduced.push(Atom { tau, mass: atom.mass });
        }
        for (i, a) in reduced.iter().enumerate() {
            for b in &reduced[i + 1..] {
                if torus_distance(&a.tau, &b.tau) <= MIN_ATOM_SEPARATION {
                    return Err(invalid(format!("atoms at {:?} and {:?} coincide", a.tau, b.tau)));
                }
            }
        }
        Ok(AtomicMeasure { dim, atoms: reduced })
    }

    pub fn dirac(tau: Vec<f64>, mass: Complex64) -> Result<Self> {
        let dim = tau.len();
        Self::new(dim, vec![Atom { tau, mass }])
    }

    pub fn zero(dim: usize) -> Self {
        AtomicMeasure { dim, atoms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass.norm()).sum()
    }

    /// `μ̂(χ) = Σ_j a_j e^{-i<χ, τ_j>}`.
    pub fn fourier(&self, chi: &[i64]) -> Complex64 {
        self.atoms
            .iter()
            .map(|a| {
                let phase: f64 = chi.iter().zip(&a.tau).map(|(&c, t)| c as f64 * t).sum();
                a.mass * Complex64::from_polar(1.0, -phase)
            })
            .sum()
    }

    /// Mass of the autocorrelation `μ * μ^♯` at the origin, `Σ_j |a_j|²`.
    pub fn autocorrelation_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass.norm_sqr()).sum()
    }
}

/// Seeded random measure: `n_atoms` atoms in `[0, 2π)^d`, pairwise torus
/// distance at least `min_separation`, masses of modulus in `mass_range`
/// with uniform phase.
pub fn random_atomic_measure(dim: usize, n_atoms: usize, mass_range: (f64, f64), min_separation: f64, seed: u64) -> Result<AtomicMeasure> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut atoms: Vec<Atom> = Vec::with_capacity(n_atoms);
    let mut attempts = 0;
    while atoms.len() < n_atoms {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid("could not place atoms with the requested separation"));
        }
        let tau: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..TAU)).collect();
        if atoms.iter().any(|a| torus_distance(&a.tau, &tau) < min_separation) {
            continue;
        }
        let modulus = rng.gen_range(mass_range.0..=mass_range.1);
        let phase = rng.gen_range(0.0..TAU);
        atoms.push(Atom {
            tau,
            mass: Complex64::from_polar(modulus, phase),
        });
    }
    AtomicMeasure::new(dim, atoms)
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    tau: Vec<f64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    d: usize,
    atoms: Vec<AtomRepr>,
}

impl TryFrom<MeasureRepr> for AtomicMeasure {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        let atoms = repr
            .atoms
            .into_iter()
            .map(|a| Atom {
                tau: a.tau,
                mass: Complex64::new(a.re, a.im),
            })
            .collect();
        AtomicMeasure::new(repr.d, atoms)
    }
}

impl From<AtomicMeasure> for MeasureRepr {
    fn from(m: AtomicMeasure) -> Self {
        MeasureRepr {
            d: m.dim,
            atoms: m
                .atoms
                .into_iter()
                .map(|a| AtomRepr {
                    tau: a.tau,
                    re: a.mass.re,
                    im: a.mass.im,
                })
                .collect(),
        }
    }
}

/// 0-homogeneous scalar functions of the direction `χ/|χ|`, set to 0 at the
/// origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum HomogeneousFn {
    /// `ω_axis`.
    Coordinate { axis: usize },
    /// `ω_i ω_j`.
    CoordinateProduct { i: usize, j: usize },
}

impl HomogeneousFn {
    fn eval(&self, chi: &[i64]) -> Result<f64> {
        let norm2: f64 = chi.iter().map(|&c| (c as f64) * (c as f64)).sum();
        let max_axis = match *self {
            HomogeneousFn::Coordinate { axis } => axis,
            HomogeneousFn::CoordinateProduct { i, j } => i.max(j),
        };
        if max_axis >= chi.len() {
            return Err(invalid(format!("axis {max_axis} out of range for dimension {}", chi.len())));
        }
        if norm2 == 0.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            HomogeneousFn::Coordinate { axis } => chi[axis] as f64 / norm2.sqrt(),
            HomogeneousFn::CoordinateProduct { i, j } => chi[i] as f64 * chi[j] as f64 / norm2,
        })
    }
}

/// Values on an axis-aligned box of the lattice, row-major with the last
/// coordinate fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub lower: Vec<i64>,
    pub shape: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl Table {
    pub fn new(lower: Vec<i64>, shape: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != shape.len() {
            return Err(invalid("table extent must have matching nonempty lower corner and shape"));
        }
        let len = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        if len != Some(values.len()) {
            return Err(invalid(format!("table shape {shape:?} does not match {} values", values.len())));
        }
        Ok(Table { lower, shape, values })
    }

    /// Builds the bounding-box table of the listed entries; unlisted cells
    /// hold zero. The order of `entries` is irrelevant unless a point is
    /// listed twice, in which case the later entry wins.
    pub fn from_entries(entries: &[(Vec<i64>, Complex64)]) -> Result<Self> {
        let first = entries.first().ok_or_else(|| invalid("table needs at least one entry"))?;
        let d = first.0.len();
        let mut lo = first.0.clone();
        let mut hi = first.0.clone();
        for (p, _) in entries {
            if p.len() != d {
                return Err(invalid("table entries of mixed dimension"));
            }
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let shape: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as usize).collect();
        let len = shape.iter().product();
        let mut table = Table {
            lower: lo,
            shape,
            values: vec![Complex64::new(0.0, 0.0); len],
        };
        for (p, v) in entries {
            let idx = table.index(p).expect("inside bounding box");
            table.values[idx] = *v;
        }
        Ok(table)
    }

    fn index(&self, chi: &[i64]) -> Option<usize> {
        if chi.len() != self.lower.len() {
            return None;
        }
        let mut idx = 0usize;
        for ((&c, &lo), &len) in chi.iter().zip(&self.lower).zip(&self.shape) {
            let off = c.checked_sub(lo)?;
            if off < 0 || off as usize >= len {
                return None;
            }
            idx = idx * len + off as usize;
        }
        Some(idx)
    }

    pub fn get(&self, chi: &[i64]) -> Result<Complex64> {
        self.index(chi)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::Domain(format!("point {chi:?} lies outside the tabulated extent")))
    }
}

/// Bounded symbol on `Z^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolSpec {
    /// Fourier transform of an atomic measure.
    Atomic(AtomicMeasure),
    /// Indicator of the closed orthant `{χ : sign_k χ_k >= 0}`.
    Orthant {
        signs: Vec<i8>,
    },
    /// `σ_n` on the band `|<χ, axis>| ∈ [t_n (1-w), t_n (1+w)]`, zero elsewhere.
    Shell {
        sigma: Vec<f64>,
        radii: Vec<f64>,
        axis: Vec<f64>,
        width: f64,
    },
    Homogeneous {
        func: HomogeneousFn,
    },
    Tabulated(Table),
    Product {
        factors: Vec<SymbolSpec>,
    },
    Sum {
        terms: Vec<SymbolSpec>,
    },
    Conj {
        inner: Box<SymbolSpec>,
    },
    Sqmod {
        inner: Box<SymbolSpec>,
    },
}

pub const DEFAULT_SHELL_WIDTH: f64 = 0.1;

impl SymbolSpec {
    /// Constant symbol, realized as the transform of `c δ_0`.
    pub fn constant(dim: usize, c: Complex64) -> Self {
        let measure = AtomicMeasure::new(
            dim,
            vec![Atom {
                tau: vec![0.0; dim],
                mass: c,
            }],
        )
        .expect("single atom");
        SymbolSpec::Atomic(measure)
    }

    pub fn atomic(measure: AtomicMeasure) -> Self {
        SymbolSpec::Atomic(measure)
    }

    /// Indicator of `[0, ∞)^d`.
    pub fn positive_orthant(dim: usize) -> Self {
        SymbolSpec::Orthant { signs: vec![1; dim] }
    }

    pub fn shell(sigma: Vec<f64>, radii: Vec<f64>, axis: Vec<f64>, width: f64) -> Result<Self> {
        let s = SymbolSpec::Shell { sigma, radii, axis, width };
        s.validate()?;
        Ok(s)
    }

    /// The kernel `2 P₊δ₀ - δ₀`, whose symbol is `2·1_{[0,∞)^d} - 1`.
    pub fn counterexample_kernel(dim: usize) -> Self {
        SymbolSpec::Sum {
            terms: vec![
                SymbolSpec::Product {
                    factors: vec![
                        SymbolSpec::constant(dim, Complex64::new(2.0, 0.0)),
                        SymbolSpec::positive_orthant(dim),
                    ],
                },
                SymbolSpec::constant(dim, Complex64::new(-1.0, 0.0)),
            ],
        }
    }

    pub fn scaled(self, c: Complex64) -> Self {
        let dim = self.dim().unwrap_or(1);
        SymbolSpec::Product {
            factors: vec![SymbolSpec::constant(dim, c), self],
        }
    }

    pub fn conj(self) -> Self {
        SymbolSpec::Conj { inner: Box::new(self) }
    }

    pub fn sqmod(self) -> Self {
        SymbolSpec::Sqmod { inner: Box::new(self) }
    }

    /// `χ ↦ s(χ) e^{i<χ, τ>}`, the modulation that moves an atom at `τ` to
    /// the origin.
    pub fn modulated(self, tau: &[f64]) -> Result<Self> {
        let shift = AtomicMeasure::dirac(tau.to_vec(), Complex64::new(1.0, 0.0))?;
        Ok(SymbolSpec::Product {
            factors: vec![self, SymbolSpec::Atomic(shift).conj()],
        })
    }

    /// Lattice dimension, when some leaf fixes it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SymbolSpec::Atomic(m) => Some(m.dim()),
            SymbolSpec::Orthant { signs } => Some(signs.len()),
            SymbolSpec::Shell { axis, .. } => Some(axis.len()),
            SymbolSpec::Homogeneous { .. } => None,
            SymbolSpec::Tabulated(t) => Some(t.lower.len()),
            SymbolSpec::Product { factors: v } | SymbolSpec::Sum { terms: v } => v.iter().find_map(|s| s.dim()),
            SymbolSpec::Conj { inner } | SymbolSpec::Sqmod { inner } => inner.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SymbolSpec::Atomic(_) | SymbolSpec::Homogeneous { .. } | SymbolSpec::Tabulated(_) => Ok(()),
            SymbolSpec::Orthant { signs } => {
                if signs.is_empty() || signs.iter().any(|s| *s != 1 && *s != -1) {
                    Err(invalid("orthant signs must be a nonempty list of +1/-1"))
                } else {
                    Ok(())
                }
            }
            SymbolSpec::Shell { sigma, radii, axis, width } => {
                if sigma.len() != radii.len() {
                    return Err(invalid("shell needs one value per radius"));
                }
                if !(*width >= 0.0 && *width < 1.0) {
                    return Err(invalid(format!("shell width must lie in [0, 1), got {width}")));
                }
                let norm: f64 = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
                if axis.is_empty() || (norm - 1.0).abs() > 1e-12 {
                    return Err(invalid("shell axis must be a unit vector"));
                }
                for w in radii.windows(2) {
                    if w[0] <= 0.0 || w[0] * (1.0 + width) >= w[1] * (1.0 - width) {
                        return Err(invalid("shell bands must be positive, increasing and disjoint"));
                    }
                }
                Ok(())
            }
            SymbolSpec::Product { factors: v } | SymbolSpec::Sum { terms: v } => v.iter().try_for_each(|s| s.validate()),
            SymbolSpec::Conj { inner } | SymbolSpec::Sqmod { inner } => inner.validate(),
        }
    }

    pub fn eval(&self, chi: &[i64]) -> Result<Complex64> {
        Ok(match self {
            SymbolSpec::Atomic(m) => {
                if chi.len() != m.dim() {
                    return Err(dim_mismatch(m.dim(), chi.len()));
                }
                m.fourier(chi)
            }
            SymbolSpec::Orthant { signs } => {
                if chi.len() != signs.len() {
                    return Err(dim_mismatch(signs.len(), chi.len()));
                }
                let inside = chi.iter().zip(signs).all(|(&c, &s)| c * s as i64 >= 0);
                Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
            }
            SymbolSpec::Shell { sigma, radii, axis, width } => {
                if chi.len() != axis.len() {
                    return Err(dim_mismatch(axis.len(), chi.len()));
                }
                let p: f64 = chi.iter().zip(axis).map(|(&c, a)| c as f64 * a).sum::<f64>().abs();
                let i = radii.partition_point(|&t| t * (1.0 + width) < p);
                let value = match radii.get(i) {
                    Some(&t) if p >= t * (1.0 - width) => sigma[i],
                    _ => 0.0,
                };
                Complex64::new(value, 0.0)
            }
            SymbolSpec::Homogeneous { func } => Complex64::new(func.eval(chi)?, 0.0),
            SymbolSpec::Tabulated(t) => t.get(chi)?,
            SymbolSpec::Product { factors } => {
                let mut acc = Complex64::new(1.0, 0.0);
                for f in factors {
                    acc *= f.eval(chi)?;
                }
                acc
            }
            SymbolSpec::Sum { terms } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in terms {
                    acc += t.eval(chi)?;
                }
                acc
            }
            SymbolSpec::Conj { inner } => inner.eval(chi)?.conj(),
            SymbolSpec::Sqmod { inner } => Complex64::new(inner.eval(chi)?.norm_sqr(), 0.0),
        })
    }

    /// Upper bound for `sup_χ |s(χ)|`, combined sub-additively over sums and
    /// multiplicatively over products.
    pub fn sup_bound(&self) -> f64 {
        match self {
            SymbolSpec::Atomic(m) => m.total_variation(),
            SymbolSpec::Orthant { .. } | SymbolSpec::Homogeneous { .. } => 1.0,
            SymbolSpec::Shell { sigma, .. } => sigma.iter().fold(0.0, |m, s| m.max(s.abs())),
            SymbolSpec::Tabulated(t) => t.values.iter().fold(0.0, |m, v| m.max(v.norm())),
            SymbolSpec::Product { factors } => factors.iter().map(|f| f.sup_bound()).product(),
            SymbolSpec::Sum { terms } => terms.iter().map(|t| t.sup_bound()).sum(),
            SymbolSpec::Conj { inner } => inner.sup_bound(),
            SymbolSpec::Sqmod { inner } => inner.sup_bound().powi(2),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SymbolSpec = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

fn dim_mismatch(expected: usize, got: usize) -> Error {
    invalid(format!("symbol is {expected}-dimensional, evaluated at a {got}-dimensional point"))
}

impl LatticeFunction for SymbolSpec {
    fn value_at(&self, chi: &[i64]) -> Result<Complex64> {
        self.eval(chi)
    }
}
