//! Wiener averages of lattice symbols along rays, direction-independence
//! tests, atom recovery and the averaged symbol `m_ε`.
//!
//! A sample at parameter `t` is the count-normalized average of the symbol
//! over `B_d(tω, r(t))`. Limits are extrapolated by fitting
//! `average(t) ≈ L + C / r(t)` in least squares; the fit is a diagnostic
//! and every correctness check in this crate states its own tolerance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{ball_average, enumerate_ball, GrowthFunction, LatticeFunction, Normalization};
use crate::measures::{torus_distance, Atom, AtomicMeasure, SymbolSpec, MIN_ATOM_SEPARATION};

/// Absolute tolerance on the spread of directional limits.
pub const DEFAULT_DIRECTION_TOL: f64 = 0.02;
/// Recovered atoms with smaller modulus are dropped.
pub const DEFAULT_ATOM_THRESHOLD: f64 = 0.05;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerSample {
    pub t: f64,
    pub r: f64,
    pub count: usize,
    pub average: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerEstimate {
    pub direction: Vec<f64>,
    pub growth: GrowthFunction,
    pub samples: Vec<WienerSample>,
    pub extrapolated_limit: Complex64,
    /// Coefficient `C` of the `C / r(t)` term.
    pub rate_coefficient: Complex64,
    /// Root-mean-square residual of the fit.
    pub fit_residual: f64,
    /// Set when fewer than three samples were available; the limit is then
    /// the last sample.
    pub degenerate_fit: bool,
}

impl WienerEstimate {
    pub fn last_sample(&self) -> Complex64 {
        self.samples.last().expect("nonempty samples").average
    }
}

/// Checks `|ω| = 1` within `1e-12`.
pub fn check_unit(omega: &[f64]) -> Result<()> {
    let n: f64 = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
    if omega.is_empty() || (n - 1.0).abs() > UNIT_TOL {
        return Err(invalid(format!("direction {omega:?} is not a unit vector (norm {n})")));
    }
    Ok(())
}

/// Normalizes a nonzero vector.
pub fn unit(v: &[f64]) -> Vec<f64> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Per-sample CSV with columns `direction, t, r, count, re, im`; direction
/// coordinates are joined by `;`.
pub fn samples_csv(estimates: &[WienerEstimate]) -> String {
    let mut out = String::from("direction,t,r,count,re,im\n");
    for e in estimates {
        let dir = e.direction.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for s in &e.samples {
            out.push_str(&format!("{dir},{},{},{},{},{}\n", s.t, s.r, s.count, s.average.re, s.average.im));
        }
    }
    out
}

/// Least-squares fit of `y ≈ L + C x`. Returns `(L, C, rms residual)`.
pub fn fit_inverse_rate(xs: &[f64], ys: &[Complex64]) -> (Complex64, Complex64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<Complex64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let (l, c) = if sxx > 0.0 {
        let sxy: Complex64 = xs.iter().zip(ys).map(|(x, y)| (y - my) * (x - mx)).sum();
        let c = sxy / sxx;
        (my - c * mx, c)
    } else {
        (my, Complex64::new(0.0, 0.0))
    };
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - l - c * x).norm_sqr()).sum();
    (l, c, (rss / n).sqrt())
}

/// Samples of `f` along the ray `tω` with radii `g(t)` for each `t` in
/// `ts`, plus the extrapolated limit.
pub fn wiener_average_sequence<F: LatticeFunction + ?Sized>(
    f: &F,
    omega: &[f64],
    growth: &GrowthFunction,
    ts: &[f64],
) -> Result<WienerEstimate> {
    check_unit(omega)?;
    growth.validate()?;
    if ts.is_empty() {
        return Err(invalid("schedule is empty"));
    }
    let mut samples = Vec::with_capacity(ts.len());
    for &t in ts {
        let r = growth.eval(t);
        let center: Vec<f64> = omega.iter().map(|w| t * w).collect();
        let ball = enumerate_ball(&center, r)?;
        let average = ball_average(f, &ball, Normalization::Count)?;
        samples.push(WienerSample {
            t,
            r,
            count: ball.count(),
            average,
        });
    }
    let degenerate_fit = samples.len() < 3;
    let (extrapolated_limit, rate_coefficient, fit_residual) = if degenerate_fit {
        (samples.last().unwrap().average, Complex64::new(0.0, 0.0), 0.0)
    } else {
        let xs: Vec<f64> = samples.iter().map(|s| 1.0 / s.r).collect();
        let ys: Vec<Complex64> = samples.iter().map(|s| s.average).collect();
        fit_inverse_rate(&xs, &ys)
    };
    Ok(WienerEstimate {
        direction: omega.to_vec(),
        growth: growth.clone(),
        samples,
        extrapolated_limit,
        rate_coefficient,
        fit_residual,
        degenerate_fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    DirectionDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDeviation {
    pub i: usize,
    pub j: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionVerdict {
    pub limits: Vec<Complex64>,
    pub pairwise: Vec<PairDeviation>,
    pub max_deviation: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub estimates: Vec<WienerEstimate>,
}

/// Which value of an estimate stands for the directional limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitChoice {
    Extrapolated,
    #[default]
    LastSample,
}

impl LimitChoice {
    pub fn pick(self, e: &WienerEstimate) -> Complex64 {
        match self {
            LimitChoice::Extrapolated => e.extrapolated_limit,
            LimitChoice::LastSample => e.last_sample(),
        }
    }
}

pub fn direction_dependence_test<F: LatticeFunction + ?Sized>(
    f: &F,
    directions: &[Vec<f64>],
    growth: &GrowthFunction,
    ts: &[f64],
    tol: f64,
    choice: LimitChoice,
) -> Result<DirectionVerdict> {
    if directions.len() < 2 {
        return Err(invalid("direction test needs at least two directions"));
    }
    let estimates = directions
        .iter()
        .map(|w| wiener_average_sequence(f, w, growth, ts))
        .collect::<Result<Vec<_>>>()?;
    let limits: Vec<Complex64> = estimates.iter().map(|e| choice.pick(e)).collect();
    let mut pairwise = Vec::new();
    let mut max_deviation = 0.0f64;
    for i in 0..limits.len() {
        for j in i + 1..limits.len() {
            let deviation = (limits[i] - limits[j]).norm();
            max_deviation = max_deviation.max(deviation);
            pairwise.push(PairDeviation { i, j, deviation });
        }
    }
    let verdict = if max_deviation <= tol {
        Verdict::Consistent
    } else {
        Verdict::DirectionDependent
    };
    Ok(DirectionVerdict {
        limits,
        pairwise,
        max_deviation,
        verdict,
        tolerance: tol,
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub limit: Complex64,
    pub mass: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub estimate: WienerEstimate,
}

/// Compares the Wiener limit of `|μ̂|²` with `Σ_j |a_j|²`.
pub fn wiener_theorem_check(
    measure: &AtomicMeasure,
    omega: &[f64],
    growth: &GrowthFunction,
    ts: &[f64],
    choice: LimitChoice,
) -> Result<TheoremCheck> {
    let symbol = SymbolSpec::atomic(measure.clone()).sqmod();
    let estimate = wiener_average_sequence(&symbol, omega, growth, ts)?;
    let limit = choice.pick(&estimate);
    let mass = measure.autocorrelation_mass();
    let abs_error = (limit - mass).norm();
    let rel_error = if mass > 0.0 { abs_error / mass } else { abs_error };
    Ok(TheoremCheck {
        limit,
        mass,
        abs_error,
        rel_error,
        estimate,
    })
}

/// Wiener limit of `χ ↦ s(χ) e^{i<χ, τ>}`; for `s = μ̂` this is `μ({τ})`.
pub fn atom_mass_recovery(symbol: &SymbolSpec, tau: &[f64], omega: &[f64], growth: &GrowthFunction, ts: &[f64]) -> Result<WienerEstimate> {
    let modulated = symbol.clone().modulated(tau)?;
    wiener_average_sequence(&modulated, omega, growth, ts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMass {
    pub tau: Vec<f64>,
    /// Mean of the directional limits.
    pub mass: Complex64,
    pub per_direction: Vec<Complex64>,
    pub spread: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePart {
    pub measure: AtomicMeasure,
    pub candidates: Vec<CandidateMass>,
    /// Set when some candidate's directional limits spread beyond the
    /// direction tolerance; the discrete part is then not well defined.
    pub direction_dependent: bool,
    /// Mean over directions of the Wiener limit of `|s - μ̂_recovered|²`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings<'a> {
    pub directions: &'a [Vec<f64>],
    pub growth: &'a GrowthFunction,
    pub ts: &'a [f64],
    pub threshold: f64,
    pub direction_tol: f64,
    pub choice: LimitChoice,
}

/// Recovers the atoms of `symbol` located at the candidate positions.
pub fn discrete_part_scan(symbol: &SymbolSpec, candidates: &[Vec<f64>], settings: &ScanSettings<'_>) -> Result<DiscretePart> {
    let dim = symbol
        .dim()
        .or_else(|| candidates.first().map(|c| c.len()))
        .ok_or_else(|| invalid("cannot infer the dimension of the scan"))?;
    if settings.directions.is_empty() {
        return Err(invalid("discrete part scan needs at least one direction"));
    }
    for (i, a) in candidates.iter().enumerate() {
        if a.len() != dim {
            return Err(invalid(format!("candidate {a:?} is not {dim}-dimensional")));
        }
        for b in &candidates[i + 1..] {
            if torus_distance(a, b) < MIN_ATOM_SEPARATION {
                return Err(Error::Consolidation(format!("candidates {a:?} and {b:?} overlap")));
            }
        }
    }

    let mut scanned = Vec::with_capacity(candidates.len());
    for tau in candidates {
        let per_direction = settings
            .directions
            .iter()
            .map(|w| atom_mass_recovery(symbol, tau, w, settings.growth, settings.ts).map(|e| settings.choice.pick(&e)))
            .collect::<Result<Vec<_>>>()?;
        let mass = per_direction.iter().sum::<Complex64>() / per_direction.len() as f64;
        let mut spread = 0.0f64;
        for (i, a) in per_direction.iter().enumerate() {
            for b in &per_direction[i + 1..] {
                spread = spread.max((a - b).norm());
            }
        }
        scanned.push(CandidateMass {
            tau: tau.clone(),
            mass,
            per_direction,
            spread,
            kept: mass.norm() > settings.threshold,
        });
    }

    let atoms: Vec<Atom> = scanned
        .iter()
        .filter(|c| c.kept)
        .map(|c| Atom {
            tau: c.tau.clone(),
            mass: c.mass,
        })
        .collect();
    let measure = AtomicMeasure::new(dim, atoms).map_err(|e| Error::Consolidation(e.to_string()))?;
    let direction_dependent = scanned.iter().any(|c| c.spread > settings.direction_tol);

    let remainder = SymbolSpec::Sum {
        terms: vec![
            symbol.clone(),
            SymbolSpec::atomic(measure.clone()).scaled(Complex64::new(-1.0, 0.0)),
        ],
    }
    .sqmod();
    let mut residual = 0.0;
    for w in settings.directions {
        let e = wiener_average_sequence(&remainder, w, settings.growth, settings.ts)?;
        residual += settings.choice.pick(&e).re;
    }
    residual /= settings.directions.len() as f64;

    Ok(DiscretePart {
        measure,
        candidates: scanned,
        direction_dependent,
        residual,
    })
}

/// `m_ε(ξ)`: count-normalized lattice average of `s` over `B(ξ, ε|ξ|)`.
pub fn averaged_symbol<F: LatticeFunction + ?Sized>(f: &F, eps: f64, xi: &[f64]) -> Result<Complex64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    let norm: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ball = enumerate_ball(xi, eps * norm)?;
    ball_average(f, &ball, Normalization::Count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub eps: f64,
    pub pairs: usize,
    /// `max |m_ε(ξ₁) - m_ε(ξ₂)| · |ξ₁| / |ξ₁ - ξ₂|` over the pairs.
    pub empirical_constant: f64,
    /// `4 · sup|s| / ε`.
    pub reference_bound: f64,
    pub within_reference: bool,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
}

/// Empirical Lipschitz constant of `m_ε` in the scale-invariant form
/// `|Δm| ≤ C |Δξ| / |ξ₁|`.
pub fn lipschitz_certificate(symbol: &SymbolSpec, eps: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<LipschitzReport> {
    let mut best = 0.0f64;
    let mut worst_pair = None;
    for (x1, x2) in pairs {
        if x1.len() != x2.len() {
            return Err(invalid("pair points of different dimensions"));
        }
        let n1: f64 = x1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dx: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if n1 < 1.0 {
            return Err(invalid(format!("certificate needs |ξ₁| >= 1, got {n1}")));
        }
        if dx > eps * n1 / 2.0 {
            return Err(invalid("certificate needs |ξ₁ - ξ₂| <= ε|ξ₁|/2"));
        }
        if dx == 0.0 {
            continue;
        }
        let m1 = averaged_symbol(symbol, eps, x1)?;
        let m2 = averaged_symbol(symbol, eps, x2)?;
        let c = (m1 - m2).norm() * n1 / dx;
        if c > best || worst_pair.is_none() {
            best = best.max(c);
            worst_pair = Some((x1.clone(), x2.clone()));
        }
    }
    let reference_bound = 4.0 * symbol.sup_bound() / eps;
    Ok(LipschitzReport {
        eps,
        pairs: pairs.len(),
        empirical_constant: best,
        reference_bound,
        within_reference: best.is_finite() && best <= reference_bound,
        worst_pair,
    })
}

/// Seeded pairs with `|ξ₁|` uniform in `[min_norm, max_norm]`, uniform
/// direction, and `ξ₂` uniform in the ball `B(ξ₁, ε|ξ₁|/2)`.
pub fn sample_lipschitz_pairs(dim: usize, count: usize, min_norm: f64, max_norm: f64, eps: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dir = random_unit(&mut rng, dim);
            let norm = rng.gen_range(min_norm..=max_norm);
            let x1: Vec<f64> = dir.iter().map(|w| w * norm).collect();
            let step = random_unit(&mut rng, dim);
            let len = eps * norm / 2.0 * rng.gen::<f64>().powf(1.0 / dim as f64);
            let x2 = x1.iter().zip(&step).map(|(x, s)| x + s * len).collect();
            (x1, x2)
        })
        .collect()
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` evenly spaced unit vectors on the circle, starting at `e₁`.
pub fn circle_directions(count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            vec![a.cos(), a.sin()]
        })
        .collect()
}
