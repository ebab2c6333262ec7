//! Matrix symbols, Decell's pseudoinverse, the projection symbol
//! `P(ω) = I - A⁺(ω)A(ω)` and the obstruction check for projections onto
//! `A(D)`-free fields.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{enumerate_ball, GrowthFunction};
use crate::wiener::{check_unit, LimitChoice};

pub type CMatrix = DMatrix<Complex64>;

/// Relative cutoff on `|c_j|` when choosing `s`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-8;
/// Wording carried by every obstruction report.
pub const SAMPLING_NOTE: &str = "certifies infeasibility over the sampled directions only";

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Frobenius norm.
pub fn fro(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn rel(residual: &CMatrix, scale: f64) -> f64 {
    let r = fro(residual);
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoinverseReport {
    /// `c_0 = 1, c_1, …, c_N` with `det(xI - AA*) = Σ c_j x^{N-j}`.
    pub coefficients: Vec<Complex64>,
    pub s: usize,
    pub pinv: CMatrix,
    /// Relative residuals of `AXA = A`, `XAX = X`, `(AX)* = AX`, `(XA)* = XA`.
    pub penrose: [f64; 4],
    /// `|c_s|` lies within a factor 10 of the cutoff.
    pub ill_conditioned: bool,
}

/// Characteristic polynomial coefficients of `b` by the Faddeev–LeVerrier
/// recursion.
pub fn char_poly(b: &CMatrix) -> Vec<Complex64> {
    let n = b.nrows();
    let mut coeffs = vec![c(1.0)];
    let mut m = CMatrix::identity(n, n);
    for k in 1..=n {
        let bm = b * &m;
        let ck = -bm.trace() / k as f64;
        coeffs.push(ck);
        m = bm + CMatrix::identity(n, n) * ck;
    }
    coeffs
}

/// `A⁺ = -(1/c_s) A* Σ_{j<s} c_j (AA*)^{s-1-j}`.
///
/// The recursion runs on `A / ‖A‖_F` so the cutoff does not depend on the
/// scale of `A`; reported coefficients are those of `AA*` itself.
pub fn decell_pseudoinverse(a: &CMatrix, zero_tol: f64) -> Result<PseudoinverseReport> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(invalid("pseudoinverse expects a nonempty square matrix"));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let scale = fro(a);
    if scale == 0.0 {
        let mut coefficients = vec![c(0.0); n + 1];
        coefficients[0] = c(1.0);
        let pinv = CMatrix::zeros(n, n);
        return Ok(PseudoinverseReport {
            coefficients,
            s: 0,
            penrose: [0.0; 4],
            pinv,
            ill_conditioned: false,
        });
    }
    let an = a / c(scale);
    let b = &an * an.adjoint();
    let cn = char_poly(&b);
    let max = cn.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let cutoff = zero_tol * max;
    let s = (0..=n).rev().find(|&j| cn[j].norm() > cutoff).unwrap_or(0);
    let pinv = if s == 0 {
        CMatrix::zeros(n, n)
    } else {
        // Horner: Σ_{j<s} c_j B^{s-1-j}.
        let mut acc = CMatrix::identity(n, n) * cn[0];
        for cj in &cn[1..s] {
            acc = &b * acc + CMatrix::identity(n, n) * *cj;
        }
        an.adjoint() * acc * (-1.0 / cn[s]) / c(scale)
    };
    let ill_conditioned = s > 0 && cn[s].norm() < 10.0 * cutoff;
    let coefficients = cn.iter().enumerate().map(|(j, z)| z * scale.powi(2 * j as i32)).collect();
    let penrose = penrose_residuals(a, &pinv);
    Ok(PseudoinverseReport {
        coefficients,
        s,
        pinv,
        penrose,
        ill_conditioned,
    })
}

pub fn penrose_residuals(a: &CMatrix, x: &CMatrix) -> [f64; 4] {
    let ax = a * x;
    let xa = x * a;
    [
        rel(&(&ax * a - a), fro(a)),
        rel(&(&xa * x - x), fro(x)),
        rel(&(ax.adjoint() - &ax), fro(&ax)),
        rel(&(xa.adjoint() - &xa), fro(&xa)),
    ]
}

/// `[[Re M, -Im M], [Im M, Re M]]`. Its singular values are those of `M`,
/// each twice. The real SVD is used throughout because the complex one loses
/// accuracy on rank-deficient input.
pub fn real_embedding(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut sv: Vec<f64> = real_embedding(m).svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.into_iter().step_by(2).collect()
}

/// Numerical rank with singular values below `RANK_TOL · σ_max` dropped.
pub fn numerical_rank(m: &CMatrix) -> usize {
    let sv = singular_values(m);
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&x| x > RANK_TOL * top).count()
}

/// Number of singular values above an absolute cutoff.
pub fn rank_above(m: &CMatrix, cutoff: f64) -> usize {
    singular_values(m).iter().filter(|&&x| x > cutoff).count()
}

fn min_singular_value(m: &CMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// `U diag(s) V*` with Haar-like unitary `U`, `V` and `rank` singular values
/// drawn from `[0.5, 2]`.
pub fn random_matrix_with_rank(n: usize, rank: usize, rng: &mut impl Rng) -> CMatrix {
    assert!(rank <= n);
    let unitary = |rng: &mut dyn rand::RngCore| {
        let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(gaussian(rng), gaussian(rng)));
        g.qr().q()
    };
    let u = unitary(rng);
    let v = unitary(rng);
    let mut d = CMatrix::zeros(n, n);
    for i in 0..rank {
        d[(i, i)] = c(rng.gen_range(0.5..2.0));
    }
    u * d * v.adjoint()
}

fn gaussian(rng: &mut dyn rand::RngCore) -> f64 {
    // Box–Muller.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Seeded corpus of `count` matrices with sizes `1..=max_n` and every rank.
pub fn random_corpus(count: usize, max_n: usize, seed: u64) -> Vec<CMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=max_n);
            let rank = rng.gen_range(0..=n);
            random_matrix_with_rank(n, rank, &mut rng)
        })
        .collect()
}

/// A matrix-valued function of a direction.
pub trait DirectionalMatrix: Sync {
    fn size(&self) -> usize;
    fn dim(&self) -> usize;
    /// Value at a unit vector.
    fn at(&self, omega: &[f64]) -> Result<CMatrix>;
}

/// A matrix stored as rows of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRows(pub Vec<Vec<[f64; 2]>>);

impl MatrixRows {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.0.len();
        if n == 0 || self.0.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix rows must form a nonempty square"));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(self.0[i][j][0], self.0[i][j][1])))
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixRows(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }
}

/// Built-in and tabulated 0-homogeneous matrix symbols. Evaluation
/// normalizes its argument, so homogeneity holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSymbol {
    /// `[[-ω₂, ω₁], [0, 0]]`.
    Curl2,
    /// Cross-product matrix `v ↦ ω × v`.
    Curl3Completed,
    /// `I - ωωᵀ` in dimension `d`.
    GradientD {
        d: usize,
    },
    /// `diag(ω₁, ω₁)` in dimension 2.
    DiagOmega1,
    Identity {
        n: usize,
        d: usize,
    },
    Constant {
        d: usize,
        matrix: MatrixRows,
    },
    Scaled {
        factor: [f64; 2],
        inner: Box<MatrixSymbol>,
    },
    /// Nearest-sample lookup on the sphere.
    Tabulated {
        directions: Vec<Vec<f64>>,
        values: Vec<MatrixRows>,
    },
}

pub const BUILTIN_NAMES: [&str; 5] = ["curl2", "curl3_completed", "gradient_d", "diag_omega1", "identity"];

impl MatrixSymbol {
    /// Built-in by registry name; `d` is used by `gradient_d` and `identity`.
    pub fn builtin(name: &str, d: usize) -> Result<Self> {
        Ok(match name {
            "curl2" => MatrixSymbol::Curl2,
            "curl3_completed" => MatrixSymbol::Curl3Completed,
            "gradient_d" => MatrixSymbol::GradientD { d },
            "diag_omega1" => MatrixSymbol::DiagOmega1,
            "identity" => MatrixSymbol::Identity { n: d, d },
            other => {
                return Err(invalid(format!(
                    "unknown matrix symbol {other:?}; known: {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MatrixSymbol = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MatrixSymbol::GradientD { d } | MatrixSymbol::Identity { d, .. } | MatrixSymbol::Constant { d, .. } if *d == 0 => {
                Err(invalid("dimension must be positive"))
            }
            MatrixSymbol::Identity { n: 0, .. } => Err(invalid("matrix size must be positive")),
            MatrixSymbol::Constant { matrix, .. } => matrix.to_matrix().map(|_| ()),
            MatrixSymbol::Scaled { inner, .. } => inner.validate(),
            MatrixSymbol::Tabulated { directions, values } => {
                if directions.is_empty() || directions.len() != values.len() {
                    return Err(invalid("tabulated symbol needs one matrix per direction"));
                }
                let d = directions[0].len();
                let n = values[0].to_matrix()?.nrows();
                for (w, v) in directions.iter().zip(values) {
                    if w.len() != d || d == 0 {
                        return Err(invalid("tabulated directions must share a dimension"));
                    }
                    if w.iter().map(|x| x * x).sum::<f64>() == 0.0 {
                        return Err(invalid("tabulated direction is zero"));
                    }
                    if v.to_matrix()?.nrows() != n {
                        return Err(invalid("tabulated matrices must share a size"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl DirectionalMatrix for MatrixSymbol {
    fn size(&self) -> usize {
        match self {
            MatrixSymbol::Curl2 | MatrixSymbol::DiagOmega1 => 2,
            MatrixSymbol::Curl3Completed => 3,
            MatrixSymbol::GradientD { d } => *d,
            MatrixSymbol::Identity { n, .. } => *n,
            MatrixSymbol::Constant { matrix, .. } => matrix.0.len(),
            MatrixSymbol::Scaled { inner, .. } => inner.size(),
            MatrixSymbol::Tabulated { values, .. } => values[0].0.len(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            MatrixSymbol::Curl2 | MatrixSymbol::DiagOmega1 => 2,
            MatrixSymbol::Curl3Completed => 3,
            MatrixSymbol::GradientD { d } | MatrixSymbol::Identity { d, .. } | MatrixSymbol::Constant { d, .. } => *d,
            MatrixSymbol::Scaled { inner, .. } => inner.dim(),
            MatrixSymbol::Tabulated { directions, .. } => directions[0].len(),
        }
    }

    fn at(&self, omega: &[f64]) -> Result<CMatrix> {
        if omega.len() != self.dim() {
            return Err(invalid(format!(
                "direction has dimension {}, symbol expects {}",
                omega.len(),
                self.dim()
            )));
        }
        let norm = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Domain("matrix symbol is undefined at the origin".into()));
        }
        let w: Vec<f64> = omega.iter().map(|x| x / norm).collect();
        Ok(match self {
            MatrixSymbol::Curl2 => CMatrix::from_row_slice(2, 2, &[c(-w[1]), c(w[0]), c(0.0), c(0.0)]),
            MatrixSymbol::Curl3Completed => CMatrix::from_row_slice(
                3,
                3,
                &[c(0.0), c(-w[2]), c(w[1]), c(w[2]), c(0.0), c(-w[0]), c(-w[1]), c(w[0]), c(0.0)],
            ),
            MatrixSymbol::GradientD { d } => CMatrix::from_fn(*d, *d, |i, j| c(if i == j { 1.0 } else { 0.0 } - w[i] * w[j])),
            MatrixSymbol::DiagOmega1 => CMatrix::from_diagonal_element(2, 2, c(w[0])),
            MatrixSymbol::Identity { n, .. } => CMatrix::identity(*n, *n),
            MatrixSymbol::Constant { matrix, .. } => matrix.to_matrix()?,
            MatrixSymbol::Scaled { factor, inner } => inner.at(&w)? * Complex64::new(factor[0], factor[1]),
            MatrixSymbol::Tabulated { directions, values } => {
                let best = directions
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                        (i, v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / vn)
                    })
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                values[best.0].to_matrix()?
            }
        })
    }
}

/// `P(ω) = I - A⁺(ω)A(ω)` as a directional matrix.
#[derive(Debug, Clone)]
pub struct ProjectionSymbol<'a, A: DirectionalMatrix + ?Sized> {
    pub a: &'a A,
    pub zero_tol: f64,
}

impl<'a, A: DirectionalMatrix + ?Sized> ProjectionSymbol<'a, A> {
    pub fn new(a: &'a A) -> Self {
        ProjectionSymbol {
            a,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

impl<A: DirectionalMatrix + ?Sized> DirectionalMatrix for ProjectionSymbol<'_, A> {
    fn size(&self) -> usize {
        self.a.size()
    }

    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn at(&self, omega: &[f64]) -> Result<CMatrix> {
        projection_symbol(self.a, omega, self.zero_tol)
    }
}

pub fn projection_symbol<A: DirectionalMatrix + ?Sized>(a: &A, omega: &[f64], zero_tol: f64) -> Result<CMatrix> {
    let m = a.at(omega)?;
    let pinv = decell_pseudoinverse(&m, zero_tol)?.pinv;
    let n = m.nrows();
    Ok(CMatrix::identity(n, n) - pinv * m)
}

/// Quasi-uniform directions on `S^{d-1}`: evenly spaced angles for `d = 2`,
/// a Fibonacci lattice for `d = 3`, seeded Gaussian samples otherwise.
pub fn sphere_directions(d: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d == 0 || count == 0 {
        return Err(invalid("sphere sample needs d >= 1 and count >= 1"));
    }
    Ok(match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| loop {
                    let v: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 1e-12 {
                        break v.iter().map(|x| x / n).collect();
                    }
                })
                .collect()
        }
    })
}

/// Sampled points of a region where `A` is numerically singular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularCap {
    /// Indices into the direction sample.
    pub members: Vec<usize>,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub directions: usize,
    pub stacked_rank: usize,
    pub a2_holds: bool,
    pub min_singular_values: Vec<f64>,
    pub cap: Option<SingularCap>,
    pub a3_holds: bool,
    /// `max ‖A(ω) - A(ω′)‖_F` over nearest-neighbor pairs, with the largest
    /// neighbor angle. Advisory only.
    pub continuity_modulus: f64,
    pub neighbor_angle: f64,
}

fn nearest_neighbors(dirs: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    dirs.iter()
        .enumerate()
        .map(|(i, w)| {
            let mut by_dist: Vec<(f64, usize)> = dirs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, v)| (w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            by_dist.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Checks (A2) by the rank of the stacked matrix and (A3) by looking for
/// sampled directions where `σ_min(A) < tol` and the same holds at all
/// `d` nearest sampled neighbors.
pub fn validate_conditions<A: DirectionalMatrix + ?Sized>(a: &A, directions: &[Vec<f64>], tol: f64) -> Result<ConditionReport> {
    if directions.len() < 2 {
        return Err(invalid("condition check needs at least two directions"));
    }
    let n = a.size();
    let values = directions.iter().map(|w| a.at(w)).collect::<Result<Vec<_>>>()?;
    let mut stacked = CMatrix::zeros(n * values.len(), n);
    for (k, v) in values.iter().enumerate() {
        stacked.view_mut((k * n, 0), (n, n)).copy_from(v);
    }
    let stacked_rank = numerical_rank(&stacked);
    let min_singular_values: Vec<f64> = values.iter().map(min_singular_value).collect();
    let k = a.dim().min(directions.len() - 1);
    let neighbors = nearest_neighbors(directions, k);
    let singular: Vec<bool> = min_singular_values.iter().map(|&s| s < tol).collect();
    let members: Vec<usize> = (0..directions.len())
        .filter(|&i| singular[i] && neighbors[i].iter().all(|&j| singular[j]))
        .collect();
    let cap = members.first().map(|&i| SingularCap {
        center: directions[i].clone(),
        members: members.clone(),
    });
    let mut continuity_modulus = 0.0f64;
    let mut neighbor_angle = 0.0f64;
    for (i, nb) in neighbors.iter().enumerate() {
        let j = nb[0];
        continuity_modulus = continuity_modulus.max(fro(&(&values[i] - &values[j])));
        let dot: f64 = directions[i].iter().zip(&directions[j]).map(|(x, y)| x * y).sum();
        neighbor_angle = neighbor_angle.max(dot.clamp(-1.0, 1.0).acos());
    }
    Ok(ConditionReport {
        directions: directions.len(),
        stacked_rank,
        a2_holds: stacked_rank == n,
        min_singular_values,
        a3_holds: cap.is_some(),
        cap,
        continuity_modulus,
        neighbor_angle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSample {
    pub t: f64,
    pub r: f64,
    pub count: usize,
    pub matrix: MatrixRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub direction: Vec<f64>,
    pub eps: f64,
    pub samples: Vec<GammaSample>,
    pub limit: MatrixRows,
}

impl GammaEstimate {
    pub fn limit_matrix(&self) -> CMatrix {
        self.limit.to_matrix().expect("built from a matrix")
    }
}

/// Count-normalized average of `K(χ/|χ|)` over `B_d(t ω, ε t)` (with
/// `K(0) := 0`) for each `t`.
pub fn gamma_estimate<K: DirectionalMatrix + ?Sized>(
    k: &K,
    omega: &[f64],
    eps: f64,
    ts: &[f64],
    choice: LimitChoice,
) -> Result<GammaEstimate> {
    check_unit(omega)?;
    if omega.len() != k.dim() {
        return Err(invalid("direction dimension does not match the symbol"));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid(format!("ε must lie in (0, 1/2), got {eps}")));
    }
    if ts.is_empty() {
        return Err(invalid("Γ estimate needs at least one t"));
    }
    let growth = GrowthFunction::linear(eps)?;
    let n = k.size();
    let mut samples = Vec::with_capacity(ts.len());
    let mut mats = Vec::with_capacity(ts.len());
    for &t in ts {
        let r = growth.eval(t);
        let center: Vec<f64> = omega.iter().map(|w| w * t).collect();
        let ball = enumerate_ball(&center, r)?;
        if ball.is_empty() {
            return Err(Error::EmptyDomain(format!("no lattice points in B(tω, {r})")));
        }
        let sum = ball.sum_by(CMatrix::zeros(n, n), |p| {
            if p.iter().all(|&x| x == 0) {
                return Ok(CMatrix::zeros(n, n));
            }
            let chi: Vec<f64> = p.iter().map(|&x| x as f64).collect();
            k.at(&chi)
        })?;
        let avg = sum / c(ball.count() as f64);
        samples.push(GammaSample {
            t,
            r,
            count: ball.count(),
            matrix: MatrixRows::from_matrix(&avg),
        });
        mats.push(avg);
    }
    let limit = match choice {
        LimitChoice::LastSample => mats.last().cloned().expect("nonempty"),
        LimitChoice::Extrapolated => extrapolate_matrices(&samples.iter().map(|s| s.r).collect::<Vec<_>>(), &mats),
    };
    Ok(GammaEstimate {
        direction: omega.to_vec(),
        eps,
        samples,
        limit: MatrixRows::from_matrix(&limit),
    })
}

fn extrapolate_matrices(rs: &[f64], mats: &[CMatrix]) -> CMatrix {
    let (nr, nc) = mats[0].shape();
    CMatrix::from_fn(nr, nc, |i, j| {
        let ys: Vec<Complex64> = mats.iter().map(|m| m[(i, j)]).collect();
        let xs: Vec<f64> = rs.iter().map(|r| 1.0 / r).collect();
        crate::wiener::fit_inverse_rate(&xs, &ys).0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstructionVerdict {
    Obstructed,
    NotObstructed,
    CannotConclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionSettings {
    /// Sphere sample for (A2), (A3) and the `A(ω)Γ = 0` constraints.
    pub sphere: Vec<Vec<f64>>,
    /// Directions at which `Γ` is estimated from lattice averages.
    pub gamma_directions: Vec<Vec<f64>>,
    pub eps: Vec<f64>,
    pub ts: Vec<f64>,
    /// `σ_min` cutoff for the singular cap.
    pub cap_tol: f64,
    /// Feasibility residual and `Γ` spread tolerance.
    pub tol: f64,
    pub choice: LimitChoice,
}

impl ObstructionSettings {
    pub fn for_dim(d: usize) -> Result<Self> {
        let mut gamma_directions = Vec::new();
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            gamma_directions.push(e);
        }
        Ok(ObstructionSettings {
            sphere: sphere_directions(d, 200, 0)?,
            gamma_directions,
            eps: vec![0.05, 0.1],
            ts: vec![1e3],
            cap_tol: 1e-8,
            tol: 0.1,
            choice: LimitChoice::LastSample,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub conditions: ConditionReport,
    pub gamma: Vec<GammaEstimate>,
    /// Largest `‖Γ(ω) - Γ(ω′)‖_F` at equal `ε`.
    pub direction_spread: f64,
    /// Largest `‖Γ_ε(ω) - Γ_ε′(ω)‖_F` at equal `ω`.
    pub eps_spread: f64,
    pub gamma_direction_dependent: bool,
    /// Dimension of `∩ Ker A(ω_i)` over the sphere sample.
    pub common_kernel_dim: usize,
    /// Best constant `Γ` for the joint system.
    pub gamma_fit: Option<MatrixRows>,
    /// `sqrt(Σ‖ΓP_j - P_j‖² / Σ‖P_j‖²)` over the cap.
    pub feasibility_residual: Option<f64>,
    pub verdict: ObstructionVerdict,
    pub violated: Vec<String>,
    pub note: String,
}

/// Estimates `Γ` for `P = I - A⁺A`, then solves for constant `Γ` with
/// `A(ω_i)Γ = 0` on the whole sample (exactly, through the common kernel)
/// and `ΓP_j = P_j` on the singular cap in the least-squares sense.
pub fn obstruction_check(a: &MatrixSymbol, settings: &ObstructionSettings) -> Result<ObstructionReport> {
    a.validate()?;
    if settings.sphere.len() < 100 {
        return Err(invalid(format!(
            "obstruction check needs at least 100 sphere directions, got {}",
            settings.sphere.len()
        )));
    }
    let conditions = validate_conditions(a, &settings.sphere, settings.cap_tol)?;
    let empty = |conditions: ConditionReport, why: &str| ObstructionReport {
        conditions,
        gamma: Vec::new(),
        direction_spread: 0.0,
        eps_spread: 0.0,
        gamma_direction_dependent: false,
        common_kernel_dim: 0,
        gamma_fit: None,
        feasibility_residual: None,
        verdict: ObstructionVerdict::CannotConclude,
        violated: vec![why.to_string()],
        note: SAMPLING_NOTE.to_string(),
    };
    if !conditions.a3_holds {
        return Ok(empty(conditions, "no singular cap found: A is invertible on the sample"));
    }
    if !conditions.a2_holds {
        return Ok(empty(conditions, "common kernel of A over the sample is nontrivial"));
    }
    let n = a.size();
    let proj = ProjectionSymbol::new(a);

    let mut gamma = Vec::new();
    for &eps in &settings.eps {
        for w in &settings.gamma_directions {
            gamma.push(gamma_estimate(&proj, w, eps, &settings.ts, settings.choice)?);
        }
    }
    let mut direction_spread = 0.0f64;
    let mut eps_spread = 0.0f64;
    for (i, gi) in gamma.iter().enumerate() {
        for gj in &gamma[i + 1..] {
            let diff = fro(&(gi.limit_matrix() - gj.limit_matrix()));
            if gi.eps == gj.eps {
                direction_spread = direction_spread.max(diff);
            }
            if gi.direction == gj.direction {
                eps_spread = eps_spread.max(diff);
            }
        }
    }
    let gamma_direction_dependent = direction_spread > settings.tol;

    // Columns of Γ must lie in the common kernel of the stacked A.
    let values = settings.sphere.iter().map(|w| a.at(w)).collect::<Result<Vec<_>>>()?;
    let mut stacked = CMatrix::zeros(n * values.len(), n);
    for (k, v) in values.iter().enumerate() {
        stacked.view_mut((k * n, 0), (n, n)).copy_from(v);
    }
    let kernel = null_space(&stacked);
    let cap = conditions.cap.as_ref().expect("a3 holds");
    let ps = cap
        .members
        .iter()
        .map(|&i| proj.at(&settings.sphere[i]))
        .collect::<Result<Vec<_>>>()?;
    let (gamma_fit, residual) = fit_gamma(&kernel, &ps)?;

    let mut violated = Vec::new();
    if residual > settings.tol {
        violated.push("Γ(I - A⁺A) = I - A⁺A on the singular cap, given A(ω)Γ = 0 for every sampled ω".to_string());
    }
    if gamma_direction_dependent {
        violated.push("Γ independent of ω".to_string());
    }
    let verdict = if violated.is_empty() {
        ObstructionVerdict::NotObstructed
    } else {
        ObstructionVerdict::Obstructed
    };
    Ok(ObstructionReport {
        conditions,
        gamma,
        direction_spread,
        eps_spread,
        gamma_direction_dependent,
        common_kernel_dim: kernel.ncols(),
        gamma_fit: Some(MatrixRows::from_matrix(&gamma_fit)),
        feasibility_residual: Some(residual),
        verdict,
        violated,
        note: SAMPLING_NOTE.to_string(),
    })
}

/// Orthonormal basis (columns) of the null space of `m`.
pub fn null_space(m: &CMatrix) -> CMatrix {
    let n = m.ncols();
    let e = real_embedding(m);
    // Pad so the SVD returns all 2n right singular vectors.
    let e = if e.nrows() < e.ncols() {
        let extra = e.ncols() - e.nrows();
        let rows = e.nrows();
        e.insert_rows(rows, extra, 0.0)
    } else {
        e
    };
    let svd = e.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let sv = &svd.singular_values;
    let top = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    // Real null vectors [x; y] give complex null vectors x + iy; the pairs
    // [x; y], [-y; x] give the same complex line, so orthonormalize.
    let mut basis: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    for i in 0..2 * n {
        if top == 0.0 || sv[i] <= RANK_TOL * top {
            let mut z = nalgebra::DVector::from_fn(n, |k, _| Complex64::new(v_t[(i, k)], v_t[(i, k + n)]));
            for b in &basis {
                let proj = b.dotc(&z);
                z -= b * proj;
            }
            let norm = z.norm();
            if norm > 0.5 {
                basis.push(z / c(norm));
            }
        }
    }
    if basis.is_empty() {
        CMatrix::zeros(n, 0)
    } else {
        CMatrix::from_columns(&basis)
    }
}

/// Least-squares solution of `l x = b` through the real embedding.
fn least_squares(l: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let k = l.ncols();
    let x = real_embedding(l)
        .svd(true, true)
        .solve(&real_embedding(b).columns(0, 1).into_owned(), 1e-12)
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(CMatrix::from_fn(k, 1, |i, _| Complex64::new(x[i], x[i + k])))
}

/// Least-squares `Γ = K Y` minimizing `Σ‖Γ P_j - P_j‖²`; returns `Γ` and the
/// normalized residual.
fn fit_gamma(kernel: &CMatrix, ps: &[CMatrix]) -> Result<(CMatrix, f64)> {
    let n = kernel.nrows();
    let k = kernel.ncols();
    let total: f64 = ps.iter().map(|p| fro(p).powi(2)).sum();
    let gamma = if k == 0 {
        CMatrix::zeros(n, n)
    } else {
        // vec(K Y P) = (Pᵀ ⊗ K) vec(Y), column-major.
        let mut lhs = CMatrix::zeros(n * n * ps.len(), k * n);
        let mut rhs = CMatrix::zeros(n * n * ps.len(), 1);
        for (j, p) in ps.iter().enumerate() {
            let block = p.transpose().kronecker(kernel);
            lhs.view_mut((j * n * n, 0), (n * n, k * n)).copy_from(&block);
            for (idx, z) in p.iter().enumerate() {
                rhs[(j * n * n + idx, 0)] = *z;
            }
        }
        let y = least_squares(&lhs, &rhs)?;
        let y = CMatrix::from_column_slice(k, n, y.as_slice());
        kernel * y
    };
    let err: f64 = ps.iter().map(|p| fro(&(&gamma * p - p)).powi(2)).sum();
    let residual = if total > 0.0 { (err / total).sqrt() } else { 0.0 };
    Ok((gamma, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        fro(&(a - b)) <= tol
    }

    #[test]
    fn char_poly_of_diag() {
        let b = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]));
        assert_eq!(char_poly(&b), vec![c(1.0), c(-1.0), c(0.0)]);
    }

    #[test]
    fn decell_examples() {
        let i2 = CMatrix::identity(2, 2);
        let r = decell_pseudoinverse(&i2, DEFAULT_ZERO_TOL).unwrap();
        assert!(close(&r.pinv, &i2, 1e-14));
        assert_eq!(r.s, 2);

        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]));
        let r = decell_pseudoinverse(&d, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(r.s, 1);
        assert!((r.coefficients[1] - c(-1.0)).norm() < 1e-15);
        assert!(close(&r.pinv, &d, 1e-14));

        let z = CMatrix::zeros(3, 3);
        let r = decell_pseudoinverse(&z, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(r.s, 0);
        assert_eq!(r.pinv, z);
        assert!(decell_pseudoinverse(&CMatrix::zeros(2, 3), DEFAULT_ZERO_TOL).is_err());
    }

    #[test]
    fn decell_is_scale_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix_with_rank(4, 2, &mut rng);
        let base = decell_pseudoinverse(&a, DEFAULT_ZERO_TOL).unwrap().pinv;
        for s in [1e-6, 1e-3, 10.0, 1e5] {
            let r = decell_pseudoinverse(&(&a * c(s)), DEFAULT_ZERO_TOL).unwrap();
            assert_eq!(r.s, 2);
            assert!(close(&(r.pinv * c(s)), &base, 1e-9));
        }
    }

    #[test]
    fn projections_of_builtins() {
        for k in 0..12 {
            let a = 0.37 + k as f64 * 0.5;
            let w = [a.cos(), a.sin()];
            let p = projection_symbol(&MatrixSymbol::Curl2, &w, DEFAULT_ZERO_TOL).unwrap();
            let expected = CMatrix::from_fn(2, 2, |i, j| c(w[i] * w[j]));
            assert!(close(&p, &expected, 1e-12));
        }
        let w = [0.48, 0.6, 0.64];
        for a in [MatrixSymbol::Curl3Completed, MatrixSymbol::GradientD { d: 3 }] {
            let p = projection_symbol(&a, &w, DEFAULT_ZERO_TOL).unwrap();
            let expected = CMatrix::from_fn(3, 3, |i, j| c(w[i] * w[j]));
            assert!(close(&p, &expected, 1e-12));
        }
        let p = projection_symbol(&MatrixSymbol::Identity { n: 3, d: 2 }, &[0.6, 0.8], DEFAULT_ZERO_TOL).unwrap();
        assert!(close(&p, &CMatrix::zeros(3, 3), 1e-15));
        let zero = MatrixSymbol::Constant {
            d: 2,
            matrix: MatrixRows(vec![vec![[0.0, 0.0]; 2]; 2]),
        };
        let p = projection_symbol(&zero, &[1.0, 0.0], DEFAULT_ZERO_TOL).unwrap();
        assert!(close(&p, &CMatrix::identity(2, 2), 0.0));
    }

    #[test]
    fn symbols_are_homogeneous() {
        let a = MatrixSymbol::Curl2;
        assert_eq!(a.at(&[3.0, 4.0]).unwrap(), a.at(&[0.6, 0.8]).unwrap());
        assert!(a.at(&[0.0, 0.0]).is_err());
        assert!(a.at(&[1.0]).is_err());
    }

    #[test]
    fn registry_and_json() {
        for name in BUILTIN_NAMES {
            let m = MatrixSymbol::builtin(name, 2).unwrap();
            let text = serde_json::to_string(&m).unwrap();
            assert_eq!(MatrixSymbol::from_json(&text).unwrap(), m);
        }
        assert_eq!(MatrixSymbol::from_json(r#"{"kind":"curl2"}"#).unwrap(), MatrixSymbol::Curl2);
        assert!(MatrixSymbol::builtin("div", 2).is_err());
        let tab = MatrixSymbol::Tabulated {
            directions: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            values: vec![MatrixRows(vec![vec![[1.0, 0.0]]]), MatrixRows(vec![vec![[2.0, 0.0]]])],
        };
        tab.validate().unwrap();
        assert_eq!(tab.at(&[0.9, 0.1]).unwrap()[(0, 0)], c(1.0));
        assert_eq!(tab.at(&[0.1, 5.0]).unwrap()[(0, 0)], c(2.0));
    }

    #[test]
    fn condition_examples() {
        let dirs = sphere_directions(2, 120, 0).unwrap();
        let r = validate_conditions(&MatrixSymbol::Curl2, &dirs, 1e-8).unwrap();
        assert!(r.a2_holds && r.stacked_rank == 2);
        assert_eq!(r.cap.unwrap().members.len(), 120);

        let r = validate_conditions(&MatrixSymbol::Identity { n: 2, d: 2 }, &dirs, 1e-8).unwrap();
        assert!(r.a2_holds && !r.a3_holds);

        let r = validate_conditions(&MatrixSymbol::DiagOmega1, &dirs, 0.1).unwrap();
        assert!(r.a2_holds && r.a3_holds);
        for &i in &r.cap.unwrap().members {
            assert!(dirs[i][0].abs() < 0.1);
        }
        assert!(validate_conditions(&MatrixSymbol::Curl2, &dirs[..1], 1e-8).is_err());
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(2.0), c(2.0)]);
        let k = null_space(&m);
        assert_eq!(k.ncols(), 1);
        assert!(fro(&(&m * &k)) < 1e-14);
    }

    #[test]
    fn gamma_of_constant_symbol() {
        let m = MatrixRows(vec![vec![[1.0, 0.5], [0.0, 0.0]], vec![[2.0, 0.0], [-1.0, 0.0]]]);
        let k = MatrixSymbol::Constant { d: 2, matrix: m.clone() };
        let g = gamma_estimate(&k, &[0.6, 0.8], 0.1, &[50.0, 100.0], LimitChoice::LastSample).unwrap();
        assert!(close(&g.limit_matrix(), &m.to_matrix().unwrap(), 1e-12));
        assert!(gamma_estimate(&k, &[0.6, 0.8], 0.5, &[50.0], LimitChoice::LastSample).is_err());
    }
}
