//! Extension of a lattice symbol to `R^d` by a compactly supported bump,
//! `K_e(ξ) = Σ_{χ'} σ(χ') Φ̂(χ' - ξ)`, and the comparison of its continuous
//! ball averages with lattice averages of `σ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{ball_average, ball_volume, enumerate_ball, unit_ball_volume, GrowthFunction, Normalization};
use crate::measures::SymbolSpec;
use crate::wiener::check_unit;

/// Fewer quadrature points per unit length leave the bump under-resolved.
pub const MIN_RESOLUTION: usize = 8;
pub const DEFAULT_RESOLUTION: usize = 64;
/// Smallest ball radius accepted by the average check.
pub const MIN_RADIUS: f64 = 10.0;

/// Radial profile equal to 1 on `[0, inner]`, 0 on `[outer, ∞)`, joined by
/// the smooth step `f(x) / (f(x) + f(1-x))` with `f(x) = exp(-1/x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub inner: f64,
    pub outer: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        BumpSpec { inner: 0.125, outer: 0.25 }
    }
}

fn smooth_zero(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

impl BumpSpec {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        // Supports of neighboring bumps must not meet.
        if !(inner > 0.0 && inner < outer && outer <= 0.25) {
            return Err(invalid(format!(
                "bump radii must satisfy 0 < inner < outer <= 1/4, got {inner}, {outer}"
            )));
        }
        Ok(BumpSpec { inner, outer })
    }

    pub fn h(&self, rho: f64) -> f64 {
        if rho <= self.inner {
            1.0
        } else if rho >= self.outer {
            0.0
        } else {
            let x = (self.outer - rho) / (self.outer - self.inner);
            let a = smooth_zero(x);
            a / (a + smooth_zero(1.0 - x))
        }
    }

    /// `∫_{R^d} Φ̂ = |S^{d-1}| ∫_0^outer h(ρ) ρ^{d-1} dρ` by composite Simpson
    /// on the transition, refined until successive values agree to `1e-13`.
    pub fn integral(&self, d: usize) -> f64 {
        let sphere = d as f64 * unit_ball_volume(d);
        let core = self.inner.powi(d as i32) / d as f64;
        let f = |rho: f64| self.h(rho) * rho.powi(d as i32 - 1);
        let (a, b) = (self.inner, self.outer);
        let mut n = 64;
        let mut prev = simpson(&f, a, b, n);
        loop {
            n *= 2;
            let next = simpson(&f, a, b, n);
            if (next - prev).abs() <= 1e-13 * next.abs().max(1e-300) || n >= 1 << 20 {
                return sphere * (core + next);
            }
            prev = next;
        }
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `σ` extended to real arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSymbol {
    pub base: SymbolSpec,
    pub bump: BumpSpec,
}

impl ExtendedSymbol {
    pub fn new(base: SymbolSpec) -> Self {
        ExtendedSymbol {
            base,
            bump: BumpSpec::default(),
        }
    }

    /// `σ(χ') Φ̂(χ' - ξ)` for the nearest lattice point `χ'`; at most one
    /// lattice point lies within `1/4` of `ξ`.
    pub fn eval(&self, xi: &[f64]) -> Result<Complex64> {
        if let Some(d) = self.base.dim().filter(|&d| d != xi.len()) {
            return Err(invalid(format!("point has dimension {}, symbol expects {d}", xi.len())));
        }
        let nearest: Vec<i64> = xi.iter().map(|x| x.round() as i64).collect();
        let rho = xi.iter().zip(&nearest).map(|(x, &n)| (x - n as f64).powi(2)).sum::<f64>().sqrt();
        let h = self.bump.h(rho);
        if h == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.base.eval(&nearest)? * h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferenceReport {
    /// `2^{-d} ∫ Φ̂`, the integral over one corner cube.
    pub c1: f64,
    /// `2^d c1`.
    pub c: f64,
    /// `c · Σ_{χ ∈ B} σ(χ) / |B|`.
    pub lattice_avg: Complex64,
    /// `|B|^{-1} ∫_B K_e` by midpoint quadrature on cells of side `1/q`.
    pub continuous_avg: Complex64,
    pub residual: f64,
    pub t: f64,
    pub r: f64,
    pub resolution: usize,
    pub lattice_points: usize,
    /// Midpoints inside the ball where `K_e` can be nonzero.
    pub quadrature_points: usize,
}

fn distance(chi: &[i64], center: &[f64]) -> f64 {
    chi.iter().zip(center).map(|(&k, c)| (k as f64 - c).powi(2)).sum::<f64>().sqrt()
}

/// Midpoints `(m + 1/2)/q` within `outer` of the origin, with bump weights.
struct Stencil {
    offsets: Vec<Vec<f64>>,
    weights: Vec<f64>,
    total: f64,
}

impl Stencil {
    fn new(bump: &BumpSpec, d: usize, q: usize) -> Self {
        let qf = q as f64;
        let reach = (bump.outer * qf).ceil() as i64 + 1;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![-reach; d];
        loop {
            let off: Vec<f64> = idx.iter().map(|&m| (m as f64 + 0.5) / qf).collect();
            let w = bump.h(off.iter().map(|x| x * x).sum::<f64>().sqrt());
            if w > 0.0 {
                offsets.push(off);
                weights.push(w);
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < reach {
                    break;
                }
                idx[k] = -reach;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        let total = weights.iter().sum();
        Stencil { offsets, weights, total }
    }

    fn inside(off: &[f64], chi: &[i64], center: &[f64], r: f64) -> bool {
        off.iter()
            .zip(chi)
            .zip(center)
            .map(|((o, &k), c)| (k as f64 + o - c).powi(2))
            .sum::<f64>()
            <= r * r
    }

    fn sum_inside(&self, chi: &[i64], center: &[f64], r: f64) -> f64 {
        self.offsets
            .iter()
            .zip(&self.weights)
            .filter(|(o, _)| Self::inside(o, chi, center, r))
            .map(|(_, w)| w)
            .sum()
    }

    fn count_inside(&self, chi: &[i64], center: &[f64], r: f64) -> usize {
        self.offsets.iter().filter(|o| Self::inside(o, chi, center, r)).count()
    }
}

pub fn transference_constants(bump: &BumpSpec, d: usize) -> (f64, f64) {
    let c = bump.integral(d);
    (c / 2f64.powi(d as i32), c)
}

/// Compares `|B|^{-1} ∫_B K_e` with `c |B|^{-1} Σ_{χ ∈ B} σ(χ)` on
/// `B = B(tω, r(t))`. Quadrature cells have side `1/q` and are aligned to
/// the lattice, so every bump is integrated by the same rule.
pub fn transference_average_check(
    sigma: &SymbolSpec,
    omega: &[f64],
    growth: &GrowthFunction,
    t: f64,
    resolution: usize,
) -> Result<TransferenceReport> {
    sigma.validate()?;
    check_unit(omega)?;
    let d = omega.len();
    if sigma.dim().is_some_and(|sd| sd != d) {
        return Err(invalid("direction dimension does not match the symbol"));
    }
    if resolution < MIN_RESOLUTION {
        return Err(invalid(format!(
            "quadrature resolution {resolution} is below {MIN_RESOLUTION} points per unit length"
        )));
    }
    let r = growth.eval(t);
    if r.is_nan() || r < MIN_RADIUS {
        return Err(invalid(format!("r(t) = {r} is below {MIN_RADIUS}; increase t")));
    }
    let ext = ExtendedSymbol::new(sigma.clone());
    let (c1, c) = transference_constants(&ext.bump, d);
    let center: Vec<f64> = omega.iter().map(|w| w * t).collect();

    let ball = enumerate_ball(&center, r)?;
    let lattice_avg = ball_average(sigma, &ball, Normalization::Volume)? * c;

    // Every midpoint where K_e is nonzero lies within `outer` of exactly one
    // lattice point, and the cells are aligned to the lattice, so the
    // midpoint sum is regrouped bump by bump around a fixed stencil.
    let stencil = Stencil::new(&ext.bump, d, resolution);
    let outer = ext.bump.outer;
    let near = enumerate_ball(&center, r + outer)?;
    let quadrature_points = near.sum_by(0usize, |chi| {
        let dist = distance(chi, &center);
        Ok(if dist + outer < r {
            stencil.offsets.len()
        } else {
            stencil.count_inside(chi, &center, r)
        })
    })?;
    let total = near.sum_by(Complex64::new(0.0, 0.0), |chi| {
        let dist = distance(chi, &center);
        let weight = if dist + outer < r {
            stencil.total
        } else {
            stencil.sum_inside(chi, &center, r)
        };
        if weight == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(sigma.eval(chi)? * weight)
    })?;
    let continuous_avg = total / (resolution as f64).powi(d as i32) / ball_volume(d, r);
    Ok(TransferenceReport {
        c1,
        c,
        lattice_avg,
        continuous_avg,
        residual: (continuous_avg - lattice_avg).norm(),
        t,
        r,
        resolution,
        lattice_points: ball.count(),
        quadrature_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_values() {
        let b = BumpSpec::default();
        assert_eq!(b.h(0.0), 1.0);
        assert_eq!(b.h(0.1), 1.0);
        assert_eq!(b.h(0.3), 0.0);
        let mid = b.h(3.0 / 16.0);
        assert!(mid > 0.0 && mid < 1.0);
        assert!((mid - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = b.h(0.125 + 0.125 * k as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
        }
        assert!(BumpSpec::new(0.2, 0.3).is_err());
    }

    #[test]
    fn bump_is_c2_across_the_joins() {
        let b = BumpSpec::default();
        let hstep = 1e-4;
        let d1 = |x: f64| (b.h(x + hstep) - b.h(x - hstep)) / (2.0 * hstep);
        let d2 = |x: f64| (b.h(x + hstep) - 2.0 * b.h(x) + b.h(x - hstep)) / (hstep * hstep);
        for x in [0.125, 0.25] {
            assert!(d1(x).abs() < 1e-6 && d2(x).abs() < 1e-3, "at {x}");
        }
        // No jumps in the first two derivatives along the transition.
        let mut prev = (d1(0.126), d2(0.126));
        for k in 1..200 {
            let x = 0.126 + 0.123 * k as f64 / 200.0;
            let cur = (d1(x), d2(x));
            assert!((cur.0 - prev.0).abs() < 0.5 && (cur.1 - prev.1).abs() < 300.0, "at {x}");
            prev = cur;
        }
    }

    #[test]
    fn constants_agree_with_cartesian_midpoint_quadrature() {
        let b = BumpSpec::default();
        for d in 1..=3 {
            let (c1, c) = transference_constants(&b, d);
            assert!((c - c1 * 2f64.powi(d as i32)).abs() < 1e-15);
            assert!(c1 > 0.0 && c <= 1.0);
            // Midpoint rule on the corner cube [0, 1/4]^d.
            let n = [4000usize, 600, 120][d - 1];
            let step = 0.25 / n as f64;
            let mut sum = 0.0;
            let mut idx = vec![0usize; d];
            loop {
                let rho = idx.iter().map(|&i| ((i as f64 + 0.5) * step).powi(2)).sum::<f64>().sqrt();
                sum += b.h(rho);
                let mut k = 0;
                while k < d {
                    idx[k] += 1;
                    if idx[k] < n {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            let cube = sum * step.powi(d as i32);
            assert!((cube - c1).abs() < 1e-5 * c1, "d = {d}: {cube} vs {c1}");
        }
    }

    #[test]
    fn extended_values() {
        let one = ExtendedSymbol::new(SymbolSpec::constant(2, Complex64::new(1.0, 0.0)));
        assert_eq!(one.eval(&[3.0, -4.0]).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(one.eval(&[3.5, -4.5]).unwrap(), Complex64::new(0.0, 0.0));
        let orth = ExtendedSymbol::new(SymbolSpec::positive_orthant(2));
        let h = BumpSpec::default().h(0.05);
        assert_eq!(orth.eval(&[1000.0, 0.05]).unwrap(), Complex64::new(h, 0.0));
        assert_eq!(orth.eval(&[1000.0, -1.05]).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn values_vanish_before_the_nearest_point_changes() {
        let one = ExtendedSymbol::new(SymbolSpec::constant(2, Complex64::new(1.0, 0.0)));
        for k in 0..=100 {
            let x = 0.25 + 0.5 * k as f64 / 100.0;
            assert_eq!(one.eval(&[x, 0.3]).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    /// Direct midpoint sum over every cell of the ball.
    fn brute_force(sigma: &SymbolSpec, center: &[f64], r: f64, q: usize) -> Complex64 {
        let ext = ExtendedSymbol::new(sigma.clone());
        let qf = q as f64;
        let lo: Vec<i64> = center.iter().map(|c| ((c - r) * qf).floor() as i64 - 1).collect();
        let hi: Vec<i64> = center.iter().map(|c| ((c + r) * qf).ceil() as i64 + 1).collect();
        let mut total = Complex64::new(0.0, 0.0);
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                let xi = [(i as f64 + 0.5) / qf, (j as f64 + 0.5) / qf];
                if (xi[0] - center[0]).powi(2) + (xi[1] - center[1]).powi(2) <= r * r {
                    total += ext.eval(&xi).unwrap();
                }
            }
        }
        total / (qf * qf) / ball_volume(2, r)
    }

    #[test]
    fn regrouped_quadrature_matches_direct_sum() {
        for (sigma, w) in [
            (SymbolSpec::positive_orthant(2), [1.0, 0.0]),
            (SymbolSpec::counterexample_kernel(2), [0.6, -0.8]),
            (SymbolSpec::constant(2, Complex64::new(0.5, 1.0)), [0.28, 0.96]),
        ] {
            for q in [8, 16, 24] {
                let t = 130.0;
                let rep = transference_average_check(&sigma, &w, &GrowthFunction::Sqrt, t, q).unwrap();
                let direct = brute_force(&sigma, &[w[0] * t, w[1] * t], t.sqrt(), q);
                assert!((rep.continuous_avg - direct).norm() < 1e-12, "{} vs {direct}", rep.continuous_avg);
            }
        }
    }

    #[test]
    fn unique_neighbor_property() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let xi: [f64; 2] = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            let mut close = 0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let p = [xi[0].floor() + dx as f64, xi[1].floor() + dy as f64];
                    if ((p[0] - xi[0]).powi(2) + (p[1] - xi[1]).powi(2)).sqrt() < 0.25 {
                        close += 1;
                    }
                }
            }
            assert!(close <= 1);
        }
    }

    #[test]
    fn constant_symbol_matches() {
        let one = SymbolSpec::constant(2, Complex64::new(1.0, 0.0));
        let r = transference_average_check(&one, &[0.6, 0.8], &GrowthFunction::Sqrt, 400.0, DEFAULT_RESOLUTION).unwrap();
        assert!(r.residual <= 1e-3, "{r:?}");
        assert!(transference_average_check(&one, &[1.0, 0.0], &GrowthFunction::Sqrt, 400.0, 4).is_err());
        assert!(transference_average_check(&one, &[1.0, 0.0], &GrowthFunction::Sqrt, 50.0, 16).is_err());
    }
}
