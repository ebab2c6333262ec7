//! Greedy σ sequences, lacunary frequency ladders and the trigonometric
//! polynomials obtained from the Riesz products
//!
//! ```text
//! R_N(x) = -1 + Π_n (1 + (i/n) cos<x, a_n>),   G_N(x) = -1 + Π_n (1 + cos<x, a_n>)
//! ```
//!
//! Under normalized torus convolution the coefficient of `R_N * G_N` at
//! `λ = Σ ε_j a_j` is `Π_{ε_j ≠ 0} i/(4j)`. The target polynomial multiplies
//! these by `m(λ)`; the comparison polynomial `Z` multiplies them by `σ_n`,
//! where `n` is the last index with `ε_n ≠ 0`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::SymbolSpec;

/// Largest `N` for which `3^N` sign patterns are enumerated.
pub const PATTERN_GUARD: usize = 16;
/// Ratio between consecutive ladder frequencies.
pub const LADDER_RATIO: i64 = 5;
/// Band half-width of the shell symbol matched to a ladder. Ratio-5 ladders
/// perturb `t_n` by at most `t_n / 4`.
pub const LADDER_SHELL_WIDTH: f64 = 0.3;
/// Largest grid (total points) evaluated by FFT.
pub const GRID_POINT_CAP: usize = 1 << 24;

fn i_unit() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

/// `ln N / (2π)`.
pub fn log_floor(n: usize) -> f64 {
    (n as f64).ln() / TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedySigma {
    pub sigma: Vec<u8>,
    /// `S_1, …, S_N`.
    pub partial_sums: Vec<Complex64>,
    pub floor: f64,
}

impl GreedySigma {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn final_sum(&self) -> Complex64 {
        *self.partial_sums.last().expect("N >= 1")
    }
}

/// `S_N = Σ_n σ_n/(2n) Π_{j<n} (1 + i/(2j))` for an arbitrary 0/1 sequence.
pub fn partial_sum(sigma: &[u8]) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut prod = Complex64::new(1.0, 0.0);
    for (k, &s) in sigma.iter().enumerate() {
        let n = (k + 1) as f64;
        if s != 0 {
            sum += prod / (2.0 * n);
        }
        prod *= Complex64::new(1.0, 1.0 / (2.0 * n));
    }
    sum
}

/// Chooses each `σ_n ∈ {0, 1}` in turn to maximize `|S_n|` (ties keep 0)
/// and verifies `|S_N| >= ln N / (2π)`.
pub fn greedy_sigma(n: usize) -> Result<GreedySigma> {
    if n == 0 {
        return Err(invalid("greedy sequence needs N >= 1"));
    }
    let mut sigma = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut prod = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        let candidate = sum + prod / (2.0 * k as f64);
        if candidate.norm() > sum.norm() {
            sum = candidate;
            sigma.push(1);
        } else {
            sigma.push(0);
        }
        partial_sums.push(sum);
        prod *= Complex64::new(1.0, 1.0 / (2.0 * k as f64));
    }
    let floor = log_floor(n);
    if sum.norm() < floor {
        return Err(Error::Internal(format!(
            "greedy sum |S_N| = {} fell below ln N/(2π) = {floor}",
            sum.norm()
        )));
    }
    Ok(GreedySigma {
        sigma,
        partial_sums,
        floor,
    })
}

/// Sign pattern `(ε_1, …, ε_n)` packed two bits per entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    code: u32,
    len: u8,
}

impl Pattern {
    pub fn from_signs(signs: &[i8]) -> Self {
        assert!(signs.len() <= PATTERN_GUARD);
        let mut code = 0u32;
        for (j, &s) in signs.iter().enumerate() {
            let bits = match s {
                0 => 0,
                1 => 1,
                -1 => 2,
                _ => panic!("sign must be -1, 0 or 1"),
            };
            code |= bits << (2 * j);
        }
        Pattern {
            code,
            len: signs.len() as u8,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sign(&self, j: usize) -> i8 {
        match (self.code >> (2 * j)) & 3 {
            0 => 0,
            1 => 1,
            _ => -1,
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.len()).map(|j| self.sign(j)).collect()
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for j in 0..self.len() {
            f.write_char(match self.sign(j) {
                1 => '+',
                -1 => '-',
                _ => '0',
            })?;
        }
        Ok(())
    }
}

/// Patterns `(ε_1, …, ε_{n-1}, ±1)` for one `n`, indexed by `0..2·3^{n-1}`.
fn pattern_at(n: usize, index: usize) -> Pattern {
    let mut rest = index / 2;
    let mut signs = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        signs.push(match rest % 3 {
            0 => 0,
            1 => 1,
            _ => -1,
        });
        rest /= 3;
    }
    signs.push(if index.is_multiple_of(2) { 1 } else { -1 });
    Pattern::from_signs(&signs)
}

fn patterns_for(n: usize) -> usize {
    2 * 3usize.pow((n - 1) as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszProductSpec {
    pub sigma: Vec<u8>,
    pub frequencies: Vec<Vec<i64>>,
    pub l: u32,
    pub asymmetric: bool,
}

impl RieszProductSpec {
    pub fn new(sigma: Vec<u8>, frequencies: Vec<Vec<i64>>, l: u32, asymmetric: bool) -> Result<Self> {
        let spec = RieszProductSpec {
            sigma,
            frequencies,
            l,
            asymmetric,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sigma.len();
        if n == 0 || self.frequencies.len() != n {
            return Err(invalid("Riesz product needs N >= 1 with one frequency per σ_n"));
        }
        if self.sigma.iter().any(|&s| s > 1) {
            return Err(invalid("σ_n must be 0 or 1"));
        }
        let d = self.frequencies[0].len();
        if d == 0 || self.frequencies.iter().any(|a| a.len() != d) {
            return Err(invalid("frequencies must share a positive dimension"));
        }
        if self.frequencies.iter().any(|a| a[0] == 0) {
            return Err(invalid("every frequency needs a nonzero first coordinate"));
        }
        if !p2_holds(&self.frequencies) {
            return Err(invalid("frequencies violate 4|a_n(1)| < |a_{n+1}(1)|"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn dim(&self) -> usize {
        self.frequencies[0].len()
    }

    fn frequency_of(&self, pattern: &Pattern) -> Vec<i64> {
        let mut lambda = vec![0i64; self.dim()];
        for j in 0..pattern.len() {
            let e = pattern.sign(j) as i64;
            if e != 0 {
                for (l, a) in lambda.iter_mut().zip(&self.frequencies[j]) {
                    *l += e * a;
                }
            }
        }
        lambda
    }

    fn check_guard(&self) -> Result<()> {
        if self.n() > PATTERN_GUARD {
            return Err(Error::ResourceLimit {
                what: format!("3^{} sign patterns", self.n()),
                cap: 3u64.pow(PATTERN_GUARD as u32),
            });
        }
        Ok(())
    }
}

/// `Π_{ε_j ≠ 0} i/(4j)`.
fn riesz_weight(pattern: &Pattern) -> Complex64 {
    let mut w = Complex64::new(1.0, 0.0);
    for j in 0..pattern.len() {
        if pattern.sign(j) != 0 {
            w *= i_unit() / (4.0 * (j + 1) as f64);
        }
    }
    w
}

pub fn p2_holds(frequencies: &[Vec<i64>]) -> bool {
    frequencies
        .windows(2)
        .all(|w| (4 * w[0][0].unsigned_abs() as u128) < (w[1][0].unsigned_abs() as u128))
}

/// Result of checking the structural predicates of a frequency ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateReport {
    pub p2: bool,
    pub p3: bool,
    pub p4: bool,
    /// Indices `n` (1-based) at which P3 or P4 fails.
    pub failing: Vec<usize>,
}

fn p4_term_holds(num: u128, den: u128, l: u32, n_total: usize) -> bool {
    // 4^N (1 + num^l) < den^l
    let lhs = BigUint::from(4u32).pow(n_total as u32) * (BigUint::from(1u32) + BigUint::from(num).pow(l));
    lhs < BigUint::from(den).pow(l)
}

/// Checks P2, P3 and P4 for `frequencies` with smoothness exponent `l >= 1`.
///
/// P3 and P4 are decided by the triangle-inequality bounds when these are
/// conclusive, and by enumeration of `ε_1, …, ε_{n-1}` otherwise.
pub fn check_predicates(frequencies: &[Vec<i64>], l: u32) -> Result<PredicateReport> {
    if l == 0 {
        return Err(invalid("P4 cannot hold for l = 0: its left side is 2 for every pattern"));
    }
    let n_total = frequencies.len();
    let d = frequencies.first().map_or(0, |a| a.len());
    let p2 = p2_holds(frequencies);
    let mut p3 = true;
    let mut p4 = true;
    let mut failing = Vec::new();
    for n in 1..=n_total {
        let an = &frequencies[n - 1];
        let below = &frequencies[..n - 1];
        let tail: Vec<u128> = (0..d).map(|s| below.iter().map(|a| a[s].unsigned_abs() as u128).sum()).collect();
        let head = an[0].unsigned_abs() as u128;
        let den_lower = head.saturating_sub(tail[0]);
        let bounds_p3 = den_lower > 0;
        let bounds_p4 = bounds_p3 && (1..d).all(|s| p4_term_holds(an[s].unsigned_abs() as u128 + tail[s], den_lower, l, n_total));
        let (ok3, ok4) = if bounds_p3 && bounds_p4 {
            (true, true)
        } else {
            if n - 1 > PATTERN_GUARD {
                return Err(Error::ResourceLimit {
                    what: format!("3^{} patterns in the P3/P4 check", n - 1),
                    cap: 3u64.pow(PATTERN_GUARD as u32),
                });
            }
            let mut ok3 = true;
            let mut ok4 = true;
            for idx in 0..3usize.pow((n - 1) as u32) {
                let mut rest = idx;
                let mut v: Vec<i128> = an.iter().map(|&x| x as i128).collect();
                for a in below {
                    let e: i128 = match rest % 3 {
                        0 => 0,
                        1 => 1,
                        _ => -1,
                    };
                    rest /= 3;
                    for (vs, x) in v.iter_mut().zip(a) {
                        *vs += e * *x as i128;
                    }
                }
                let den = v[0].unsigned_abs();
                if den == 0 {
                    ok3 = false;
                    ok4 = false;
                    break;
                }
                if !(1..d).all(|s| p4_term_holds(v[s].unsigned_abs(), den, l, n_total)) {
                    ok4 = false;
                }
            }
            (ok3, ok4)
        };
        if !ok3 || !ok4 {
            failing.push(n);
        }
        p3 &= ok3;
        p4 &= ok4;
    }
    Ok(PredicateReport { p2, p3, p4, failing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLadder {
    /// `t_1, …, t_N`.
    pub ts: Vec<i64>,
    /// `a_n = t_n e_1`.
    pub frequencies: Vec<Vec<i64>>,
    pub report: PredicateReport,
}

/// Smallest integer `t` with `t^l > 4^N`.
fn p4_threshold(n: usize, l: u32) -> Option<i64> {
    let target = BigUint::from(4u32).pow(n as u32);
    let approx = 4f64.powf(n as f64 / l as f64).floor();
    let mut t = if approx > 2.0 { (approx as u128).saturating_sub(2) } else { 1 };
    while BigUint::from(t).pow(l) <= target {
        t += 1;
    }
    i64::try_from(t).ok()
}

/// Ladder `a_n = t_n e_1` with `t_1 = max(base, min{t : t^l > 4^N})` and
/// `t_{n+1} = 5 t_n`, together with its predicate report.
pub fn build_frequencies(n: usize, l: u32, base: i64, dim: usize) -> Result<FrequencyLadder> {
    if n == 0 || dim == 0 {
        return Err(invalid("ladder needs N >= 1 and d >= 1"));
    }
    if base < 2 {
        return Err(invalid(format!("ladder base must be at least 2, got {base}")));
    }
    if l == 0 {
        return Err(invalid("P4 cannot hold for l = 0; use l >= 1"));
    }
    let needs_p4 = dim >= 2;
    let first = if needs_p4 {
        match p4_threshold(n, l) {
            Some(t) => base.max(t),
            None => {
                return Err(Error::UnsatisfiableAtScale {
                    failing: (1..=n).collect(),
                    reason: "t_1 needed for P4 exceeds i64".into(),
                })
            }
        }
    } else {
        base
    };
    let mut ts = Vec::with_capacity(n);
    let mut t = first;
    // Sums Σ ε_j t_j stay below 1.25 t_N; keep headroom for them.
    let limit = i64::MAX / 2;
    for k in 1..=n {
        if t > limit {
            return Err(Error::UnsatisfiableAtScale {
                failing: (k..=n).collect(),
                reason: format!("t_{k} exceeds the 64-bit integer range (t_1 = {first})"),
            });
        }
        ts.push(t);
        if k < n {
            t = t.checked_mul(LADDER_RATIO).unwrap_or(i64::MAX);
        }
    }
    let frequencies: Vec<Vec<i64>> = ts
        .iter()
        .map(|&t| {
            let mut a = vec![0; dim];
            a[0] = t;
            a
        })
        .collect();
    let report = check_predicates(&frequencies, l)?;
    if !(report.p2 && report.p3 && report.p4) {
        return Err(Error::UnsatisfiableAtScale {
            failing: report.failing.clone(),
            reason: "ladder predicates fail".into(),
        });
    }
    Ok(FrequencyLadder { ts, frequencies, report })
}

/// Band symbol on the first axis taking the value `σ_n` near `±t_n`.
pub fn shell_for_ladder(sigma: &[u8], ts: &[i64], dim: usize, width: f64) -> Result<SymbolSpec> {
    let mut axis = vec![0.0; dim];
    axis[0] = 1.0;
    SymbolSpec::shell(
        sigma.iter().map(|&s| s as f64).collect(),
        ts.iter().map(|&t| t as f64).collect(),
        axis,
        width,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Report {
    pub n: usize,
    pub asymmetric: bool,
    pub tolerance: f64,
    pub holds: bool,
    pub worst_deviation: f64,
    pub witness: Option<Vec<i8>>,
    pub patterns_checked: u64,
}

/// Exhaustive check of P1 (or P1′ when `spec.asymmetric`) with strict
/// tolerance `tol` (default `4^{-N}`).
pub fn check_p1(m: &SymbolSpec, spec: &RieszProductSpec, tol: Option<f64>) -> Result<P1Report> {
    spec.validate()?;
    spec.check_guard()?;
    let tol = tol.unwrap_or_else(|| 4f64.powi(-(spec.n() as i32)));
    let mut worst: Option<(f64, Pattern)> = None;
    let mut checked = 0u64;
    for n in 1..=spec.n() {
        let count = patterns_for(n);
        checked += count as u64;
        let local = (0..count)
            .into_par_iter()
            .map(|idx| -> Result<(f64, usize)> {
                let p = pattern_at(n, idx);
                let lambda = spec.frequency_of(&p);
                let sigma = spec.sigma[n - 1] as f64;
                let target = if spec.asymmetric {
                    (1.0 + p.sign(n - 1) as f64) / 2.0 * sigma
                } else {
                    sigma
                };
                Ok(((m.eval(&lambda)? - target).norm(), idx))
            })
            .try_reduce_with(|a, b| Ok(max_first(a, b)));
        if let Some(res) = local {
            let (dev, idx) = res?;
            if worst.is_none_or(|(w, _)| dev > w) {
                worst = Some((dev, pattern_at(n, idx)));
            }
        }
    }
    let (worst_deviation, pattern) = worst.expect("N >= 1");
    let holds = worst_deviation < tol;
    Ok(P1Report {
        n: spec.n(),
        asymmetric: spec.asymmetric,
        tolerance: tol,
        holds,
        worst_deviation,
        witness: if holds { None } else { Some(pattern.signs()) },
        patterns_checked: checked,
    })
}

/// Larger deviation wins; ties go to the earlier pattern.
fn max_first(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Greater) => a,
        Some(Ordering::Less) => b,
        _ => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// Sparse trigonometric polynomial `Σ c_λ e^{i<x, λ>}` with one provenance
/// pattern per coefficient, sorted by `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPolynomial {
    dim: usize,
    freqs: Vec<i64>,
    coeffs: Vec<Complex64>,
    patterns: Vec<Pattern>,
}

impl SpectrumPolynomial {
    fn build(dim: usize, mut terms: Vec<(Vec<i64>, Complex64, Pattern)>) -> Result<Self> {
        terms.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
        for w in terms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvariantViolation(format!(
                    "patterns {} and {} both produce frequency {:?}",
                    w[0].2, w[1].2, w[0].0
                )));
            }
        }
        let mut freqs = Vec::with_capacity(terms.len() * dim);
        let mut coeffs = Vec::with_capacity(terms.len());
        let mut patterns = Vec::with_capacity(terms.len());
        for (f, c, p) in terms {
            freqs.extend_from_slice(&f);
            coeffs.push(c);
            patterns.push(p);
        }
        Ok(SpectrumPolynomial {
            dim,
            freqs,
            coeffs,
            patterns,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn frequency(&self, i: usize) -> &[i64] {
        &self.freqs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64], Complex64, Pattern)> + '_ {
        self.freqs
            .chunks_exact(self.dim)
            .zip(&self.coeffs)
            .zip(&self.patterns)
            .map(|((f, c), p)| (f, *c, *p))
    }

    pub fn coefficient(&self, lambda: &[i64]) -> Complex64 {
        match self.search(lambda) {
            Ok(i) => self.coeffs[i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    fn search(&self, lambda: &[i64]) -> std::result::Result<usize, usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.frequency(mid).cmp(lambda) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Ok(mid),
            }
        }
        Err(lo)
    }

    /// Value at `x = 0`: the sum of all coefficients.
    pub fn value_at_zero(&self) -> Complex64 {
        self.coeffs.iter().sum()
    }

    /// `Σ_λ |a_λ - b_λ|` over the union of supports.
    pub fn l1_distance(&self, other: &SpectrumPolynomial) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut total = 0.0;
        while i < self.len() || j < other.len() {
            let ord = match (i < self.len(), j < other.len()) {
                (true, true) => self.frequency(i).cmp(other.frequency(j)),
                (true, false) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    total += self.coeffs[i].norm();
                    i += 1;
                }
                Ordering::Greater => {
                    total += other.coeffs[j].norm();
                    j += 1;
                }
                Ordering::Equal => {
                    total += (self.coeffs[i] - other.coeffs[j]).norm();
                    i += 1;
                    j += 1;
                }
            }
        }
        total
    }

    /// Value at the grid point `x = 2π k / m`, with the phase reduced
    /// exactly in integer arithmetic.
    pub fn value_at_grid_index(&self, k: &[u64], m: u64) -> Complex64 {
        self.iter()
            .map(|(f, c, _)| {
                let mut acc: u128 = 0;
                for (&fk, &kk) in f.iter().zip(k) {
                    let r = (fk as i128).rem_euclid(m as i128) as u128;
                    acc = (acc + r * (kk as u128 % m as u128)) % m as u128;
                }
                c * Complex64::from_polar(1.0, TAU * acc as f64 / m as f64)
            })
            .sum()
    }

    /// Values on the full grid `{2π k / m : k ∈ [0, m)^d}`, row-major, via an
    /// inverse FFT of the coefficients folded modulo `m`.
    pub fn grid_values(&self, m: usize) -> Result<Vec<Complex64>> {
        if m == 0 {
            return Err(invalid("grid size must be positive"));
        }
        let total = m
            .checked_pow(self.dim as u32)
            .filter(|&t| t <= GRID_POINT_CAP)
            .ok_or_else(|| Error::ResourceLimit {
                what: format!("grid of {m}^{} points", self.dim),
                cap: GRID_POINT_CAP as u64,
            })?;
        let mut grid = vec![Complex64::new(0.0, 0.0); total];
        for (f, c, _) in self.iter() {
            let idx = f.iter().fold(0usize, |acc, &fk| acc * m + fk.rem_euclid(m as i64) as usize);
            grid[idx] += c;
        }
        let fft = FftPlanner::new().plan_fft_inverse(m);
        let mut stride = 1;
        for _axis in 0..self.dim {
            // Lines along this axis: index = outer * m * stride + i * stride + inner.
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            for outer in 0..total / (m * stride) {
                for inner in 0..stride {
                    let base = outer * m * stride + inner;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = grid[base + i * stride];
                    }
                    fft.process(&mut line);
                    for (i, v) in line.iter().enumerate() {
                        grid[base + i * stride] = *v;
                    }
                }
            }
            stride *= m;
        }
        Ok(grid)
    }

    /// `max |p|` over the grid of size `m^d`.
    pub fn grid_sup(&self, m: usize) -> Result<f64> {
        Ok(self.grid_values(m)?.iter().fold(0.0, |acc, v| acc.max(v.norm())))
    }

    /// CSV rows `lambda_1, …, lambda_d, re, im, provenance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim {
            let _ = write!(out, "lambda_{},", k + 1);
        }
        out.push_str("re,im,provenance\n");
        for (f, c, p) in self.iter() {
            for x in f {
                let _ = write!(out, "{x},");
            }
            let _ = writeln!(out, "{},{},{}", c.re, c.im, p);
        }
        out
    }
}

fn all_patterns(spec: &RieszProductSpec) -> Vec<Pattern> {
    (1..=spec.n())
        .flat_map(|n| (0..patterns_for(n)).map(move |idx| pattern_at(n, idx)))
        .collect()
}

/// Coefficients of `m(D)(R_N * G_N)`: `m(λ) Π_{ε_j ≠ 0} i/(4j)` at
/// `λ = Σ ε_j a_j`.
pub fn target_polynomial(m: &SymbolSpec, spec: &RieszProductSpec) -> Result<SpectrumPolynomial> {
    spec.validate()?;
    spec.check_guard()?;
    let terms = all_patterns(spec)
        .into_par_iter()
        .map(|p| {
            let lambda = spec.frequency_of(&p);
            let value = m.eval(&lambda)?;
            Ok((lambda, value * riesz_weight(&p), p))
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumPolynomial::build(spec.dim(), terms)
}

/// Coefficients of `Z` (or `Z′` when `spec.asymmetric`): `σ_n Π i/(4j)`,
/// resp. `(1+ε_n)/2 σ_n Π i/(4j)`.
pub fn comparison_polynomial(spec: &RieszProductSpec) -> Result<SpectrumPolynomial> {
    spec.validate()?;
    spec.check_guard()?;
    let terms = all_patterns(spec)
        .into_par_iter()
        .map(|p| {
            let n = p.len();
            let sigma = spec.sigma[n - 1] as f64;
            let factor = if spec.asymmetric {
                (1.0 + p.sign(n - 1) as f64) / 2.0 * sigma
            } else {
                sigma
            };
            (spec.frequency_of(&p), riesz_weight(&p) * factor, p)
        })
        .collect::<Vec<_>>();
    SpectrumPolynomial::build(spec.dim(), terms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundA {
    /// `Σ_λ |T_m(λ) - Z(λ)|`.
    pub l1_gap: f64,
    /// `3^N 4^{-N}`.
    pub limit: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundB {
    pub z_at_zero: Complex64,
    pub abs_z_at_zero: f64,
    /// `ln N / (2π)`, or `ln N / (4π)` for `Z′`.
    pub floor: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupCertificate {
    pub n: usize,
    pub bound_a: BoundA,
    pub bound_b: BoundB,
    pub target_at_zero: Complex64,
    /// Largest `|T_m|` over the evaluation grid (which contains `x = 0`).
    pub grid_sup: f64,
    pub grid_size: usize,
    /// `floor - 1`.
    pub grid_floor: f64,
    pub grid_holds: bool,
    pub pass: bool,
}

/// Lower-bound certificate for `sup |m(D)(R_N * G_N)|`.
///
/// Refuses unless `p1` is a passing P1 (resp. P1′) report for `spec`.
pub fn blowup_certificate(m: &SymbolSpec, spec: &RieszProductSpec, p1: &P1Report, grid_size: usize) -> Result<BlowupCertificate> {
    if !(p1.holds && p1.n == spec.n() && p1.asymmetric == spec.asymmetric) {
        return Err(Error::PreconditionUnverified(
            "run check_p1 (or check_p1 with an asymmetric spec) and pass its successful report".into(),
        ));
    }
    let n = spec.n();
    let target = target_polynomial(m, spec)?;
    let z = comparison_polynomial(spec)?;
    let l1_gap = target.l1_distance(&z);
    let limit = (0.75f64).powi(n as i32);
    let z_at_zero = z.value_at_zero();
    // Z′(0) = Z(0)/2, so the asymmetric floor is halved.
    let floor = if spec.asymmetric { log_floor(n) / 2.0 } else { log_floor(n) };
    let target_at_zero = target.value_at_zero();
    let grid_sup = target.grid_sup(grid_size)?.max(target_at_zero.norm());
    let grid_floor = floor - 1.0;
    let bound_a = BoundA {
        l1_gap,
        limit,
        holds: l1_gap <= limit,
    };
    let bound_b = BoundB {
        z_at_zero,
        abs_z_at_zero: z_at_zero.norm(),
        floor,
        holds: z_at_zero.norm() >= floor,
    };
    let grid_holds = grid_sup >= grid_floor;
    Ok(BlowupCertificate {
        n,
        pass: bound_a.holds && bound_b.holds && grid_holds,
        bound_a,
        bound_b,
        target_at_zero,
        grid_sup,
        grid_size,
        grid_floor,
        grid_holds,
    })
}

/// Largest `N` accepted by [`expand_products`].
pub const EXPANSION_GUARD: usize = 10;

/// Coefficients of `m(D)(R_N * G_N)` by multiplying out both products
/// factor by factor, independently of the sign-pattern enumeration.
pub fn expand_products(m: &SymbolSpec, spec: &RieszProductSpec) -> Result<BTreeMap<Vec<i64>, Complex64>> {
    spec.validate()?;
    if spec.n() > EXPANSION_GUARD {
        return Err(Error::ResourceLimit {
            what: format!("expansion of {} factors", spec.n()),
            cap: EXPANSION_GUARD as u64,
        });
    }
    let product = |coeff: &dyn Fn(usize) -> Complex64| {
        let mut p: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        p.insert(vec![0; spec.dim()], Complex64::new(1.0, 0.0));
        for (k, a) in spec.frequencies.iter().enumerate() {
            let half = coeff(k + 1) / 2.0;
            let mut next = BTreeMap::new();
            for (f, v) in &p {
                *next.entry(f.clone()).or_insert(Complex64::new(0.0, 0.0)) += *v;
                for sign in [1i64, -1] {
                    let g: Vec<i64> = f.iter().zip(a).map(|(x, y)| x + sign * y).collect();
                    *next.entry(g).or_insert(Complex64::new(0.0, 0.0)) += *v * half;
                }
            }
            p = next;
        }
        *p.get_mut(&vec![0; spec.dim()]).expect("constant term") -= 1.0;
        p
    };
    let r = product(&|n| Complex64::new(0.0, 1.0 / n as f64));
    let g = product(&|_| Complex64::new(1.0, 0.0));
    let mut out = BTreeMap::new();
    for (f, rc) in r {
        if let Some(gc) = g.get(&f) {
            let v = m.eval(&f)? * rc * gc;
            if v != Complex64::new(0.0, 0.0) {
                out.insert(f, v);
            }
        }
    }
    Ok(out)
}

/// `max_λ |p(λ) - q(λ)|` over the union of supports.
pub fn max_coefficient_deviation(p: &SpectrumPolynomial, q: &BTreeMap<Vec<i64>, Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for (f, c, _) in p.iter() {
        worst = worst.max((c - q.get(f).copied().unwrap_or_default()).norm());
    }
    for (f, c) in q {
        if p.search(f).is_err() {
            worst = worst.max(c.norm());
        }
    }
    worst
}

/// Everything produced for one `N` by the symmetric construction: greedy σ,
/// ratio-5 ladder on the first axis, matching band symbol, P1 report and
/// the certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszRun {
    pub greedy: GreedySigma,
    pub ladder: FrequencyLadder,
    pub spec: RieszProductSpec,
    pub symbol: SymbolSpec,
    pub p1: P1Report,
    pub certificate: BlowupCertificate,
    /// `Z(0)` and `i S_N`, which agree.
    pub z_at_zero: Complex64,
    pub i_times_greedy_sum: Complex64,
}

pub fn run_symmetric(n: usize, l: u32, base: i64, dim: usize, grid_size: usize) -> Result<RieszRun> {
    let greedy = greedy_sigma(n)?;
    let ladder = build_frequencies(n, l, base, dim)?;
    let spec = RieszProductSpec::new(greedy.sigma.clone(), ladder.frequencies.clone(), l, false)?;
    let symbol = shell_for_ladder(&greedy.sigma, &ladder.ts, dim, LADDER_SHELL_WIDTH)?;
    let p1 = check_p1(&symbol, &spec, None)?;
    let certificate = blowup_certificate(&symbol, &spec, &p1, grid_size)?;
    Ok(RieszRun {
        z_at_zero: certificate.bound_b.z_at_zero,
        i_times_greedy_sum: i_unit() * greedy.final_sum(),
        greedy,
        ladder,
        spec,
        symbol,
        p1,
        certificate,
    })
}
