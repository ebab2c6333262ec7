//! Lattice points in Euclidean balls, normalized lattice sums and growth
//! schedules.
//!
//! Balls are closed: a point `χ` belongs to `B_d(c, r)` iff `|χ - c|² <= r²`.
//! Membership is decided in floating point whenever the result is clear by a
//! wide margin, and in exact rational arithmetic otherwise. Every `f64` is a
//! dyadic rational, so the exact path is always available and the boundary
//! decision never depends on the platform.

use std::ops::Add;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on the number of points a single ball may hold.
pub const DEFAULT_POINT_CAP: u64 = 100_000_000;

/// Relative half-width of the band around `|χ - c|² = r²` that is resolved
/// exactly.
const GUARD_BAND: f64 = 1.0 / (1u64 << 40) as f64;

/// Points per reduction chunk. Fixed, so that sums do not depend on the
/// number of worker threads.
const CHUNK: usize = 4096;

/// Radius schedule `t ↦ r(t)` along a ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthFunction {
    /// `r(t) = sqrt(t)`.
    Sqrt,
    /// `r(t) = eps * t` with `eps` in `(0, 1/2)`.
    Linear { eps: f64 },
    /// Piecewise linear interpolation of `(t, r)` knots, constant beyond
    /// the first and last knot.
    Custom { knots: Vec<(f64, f64)> },
}

impl GrowthFunction {
    pub fn linear(eps: f64) -> Result<Self> {
        let g = GrowthFunction::Linear { eps };
        g.validate()?;
        Ok(g)
    }

    pub fn custom(knots: Vec<(f64, f64)>) -> Result<Self> {
        let g = GrowthFunction::Custom { knots };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthFunction::Sqrt => Ok(()),
            GrowthFunction::Linear { eps } => {
                if *eps > 0.0 && *eps < 0.5 {
                    Ok(())
                } else {
                    Err(invalid(format!("linear growth needs eps in (0, 1/2), got {eps}")))
                }
            }
            GrowthFunction::Custom { knots } => {
                if knots.is_empty() {
                    return Err(invalid("custom growth table is empty"));
                }
                for &(t, r) in knots {
                    if !(t.is_finite() && r.is_finite() && t > 0.0 && r > 0.0) {
                        return Err(invalid(format!("custom growth knot ({t}, {r}) is not positive")));
                    }
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(invalid("custom growth knots must have increasing t"));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(invalid("custom growth must be nondecreasing"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GrowthFunction::Sqrt => t.sqrt(),
            GrowthFunction::Linear { eps } => eps * t,
            GrowthFunction::Custom { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|&(tk, _)| tk <= t);
                let (t0, r0) = knots[i - 1];
                let (t1, r1) = knots[i];
                r0 + (r1 - r0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// One point of a geometric schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub t: f64,
    pub r: f64,
}

/// Geometrically spaced `t` values in `[t_min, t_max]`, each paired with
/// `r(t)`. Both endpoints are hit exactly.
pub fn schedule(growth: &GrowthFunction, t_min: f64, t_max: f64, n_steps: usize) -> Result<Vec<SchedulePoint>> {
    growth.validate()?;
    if !(t_min > 0.0 && t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
        return Err(invalid(format!("schedule needs 0 < t_min < t_max, got [{t_min}, {t_max}]")));
    }
    if n_steps < 2 {
        return Err(invalid("schedule needs at least 2 steps"));
    }
    let ratio = t_max / t_min;
    let last = n_steps - 1;
    Ok((0..n_steps)
        .map(|i| {
            let t = match i {
                0 => t_min,
                i if i == last => t_max,
                i => t_min * ratio.powf(i as f64 / last as f64),
            };
            SchedulePoint { t, r: growth.eval(t) }
        })
        .collect())
}

/// `per_decade` geometric steps per decade between `t_min` and `t_max`.
pub fn schedule_per_decade(growth: &GrowthFunction, t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<SchedulePoint>> {
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(invalid(format!("schedule needs 0 < t_min < t_max, got [{t_min}, {t_max}]")));
    }
    let decades = (t_max / t_min).log10();
    let steps = ((decades * per_decade as f64).round() as usize).max(1) + 1;
    schedule(growth, t_min, t_max, steps)
}

/// Default schedule: 8 steps per decade on `[10², 10⁵]`, square-root growth.
pub fn default_schedule() -> Vec<SchedulePoint> {
    schedule_per_decade(&GrowthFunction::Sqrt, 1e2, 1e5, 8).expect("static schedule")
}

/// Normalization of a lattice sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the number of lattice points in the ball.
    #[default]
    Count,
    /// Divide by the Lebesgue volume of the ball.
    Volume,
}

/// Closed discrete ball `B(center, radius) ∩ Z^d`.
///
/// Points are stored flat and in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBall {
    center: Vec<f64>,
    radius: f64,
    points: Vec<i64>,
    continuous_volume: f64,
}

impl LatticeBall {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn count(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn continuous_volume(&self) -> f64 {
        self.continuous_volume
    }

    pub fn point(&self, i: usize) -> &[i64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[i64]> + '_ {
        self.points.chunks_exact(self.dim())
    }

    /// Flat `count * dim` coordinate buffer.
    pub fn raw_points(&self) -> &[i64] {
        &self.points
    }

    /// Deterministic parallel sum of `f` over the points.
    ///
    /// Points are split into fixed-size chunks in lexicographic order; each
    /// chunk is summed sequentially and the chunk sums are folded in order.
    /// The result is bit-identical for any thread count.
    pub fn sum_by<T, F>(&self, zero: T, f: F) -> Result<T>
    where
        T: Add<Output = T> + Clone + Send + Sync,
        F: Fn(&[i64]) -> Result<T> + Sync,
    {
        let d = self.dim();
        let partials: Vec<T> = self
            .points
            .par_chunks(CHUNK * d)
            .map(|chunk| chunk.chunks_exact(d).try_fold(zero.clone(), |acc, p| Ok(acc + f(p)?)))
            .collect::<Result<Vec<T>>>()?;
        Ok(partials.into_iter().fold(zero, |acc, x| acc + x))
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

pub fn ball_volume(d: usize, radius: f64) -> f64 {
    unit_ball_volume(d) * radius.powi(d as i32)
}

/// Enumerates `B(center, radius) ∩ Z^d` with the default point cap.
pub fn enumerate_ball(center: &[f64], radius: f64) -> Result<LatticeBall> {
    enumerate_ball_with_cap(center, radius, DEFAULT_POINT_CAP)
}

pub fn enumerate_ball_with_cap(center: &[f64], radius: f64, cap: u64) -> Result<LatticeBall> {
    let d = center.len();
    if d == 0 {
        return Err(invalid("ball dimension must be at least 1"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(invalid(format!("ball radius must be finite and nonnegative, got {radius}")));
    }
    if let Some(c) = center.iter().find(|c| !c.is_finite()) {
        return Err(invalid(format!("ball center has a non-finite coordinate {c}")));
    }
    if center.iter().any(|c| c.abs() + radius > 4.0e15) {
        return Err(invalid("ball extends beyond the exactly representable integer range"));
    }
    // Lower bound on the count: the ball of radius r - sqrt(d)/2 is covered
    // by the unit cubes of the enumerated points.
    let estimate = ball_volume(d, (radius - (d as f64).sqrt() / 2.0).max(0.0));
    if estimate > cap as f64 {
        return Err(Error::ResourceLimit {
            what: format!("ball of radius {radius} in dimension {d} (about {estimate:.3e} points)"),
            cap,
        });
    }

    let mut walker = Walker {
        center,
        r2: radius * radius,
        exact: None,
        radius,
        chi: vec![0; d],
        out: Vec::new(),
        cap: cap.saturating_mul(d as u64),
    };
    walker.walk(0, 0.0)?;
    Ok(LatticeBall {
        center: center.to_vec(),
        radius,
        points: walker.out,
        continuous_volume: ball_volume(d, radius),
    })
}

struct Walker<'a> {
    center: &'a [f64],
    radius: f64,
    r2: f64,
    exact: Option<(Vec<BigRational>, BigRational)>,
    chi: Vec<i64>,
    out: Vec<i64>,
    cap: u64,
}

impl Walker<'_> {
    fn walk(&mut self, k: usize, partial: f64) -> Result<()> {
        let d = self.center.len();
        let rem = (self.r2 - partial).max(0.0);
        let half = rem.sqrt();
        let c = self.center[k];
        // Widened by one on each side; the membership test below is exact.
        let lo = (c - half).ceil() as i64 - 1;
        let hi = (c + half).floor() as i64 + 1;
        for x in lo..=hi {
            let delta = x as f64 - c;
            let p = partial + delta * delta;
            let guard = GUARD_BAND * (p + self.r2 + 1.0);
            if p - self.r2 > guard {
                continue;
            }
            self.chi[k] = x;
            if k + 1 < d {
                self.walk(k + 1, p)?;
            } else {
                let inside = if self.r2 - p > guard { true } else { self.exact_inside() };
                if inside {
                    self.out.extend_from_slice(&self.chi);
                    if self.out.len() as u64 > self.cap {
                        return Err(Error::ResourceLimit {
                            what: format!("lattice ball of radius {}", self.radius),
                            cap: self.cap / d as u64,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn exact_inside(&mut self) -> bool {
        let (center, r2) = self.exact.get_or_insert_with(|| {
            let center = self.center.iter().map(|&c| exact_rational(c)).collect();
            let r = exact_rational(self.radius);
            (center, &r * &r)
        });
        let mut sum = BigRational::zero();
        for (x, c) in self.chi.iter().zip(center.iter()) {
            let delta = BigRational::from_integer(BigInt::from(*x)) - c;
            sum += &delta * &delta;
        }
        sum <= *r2
    }
}

fn exact_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// A function on the integer lattice.
pub trait LatticeFunction: Sync {
    fn value_at(&self, chi: &[i64]) -> Result<Complex64>;
}

impl<F> LatticeFunction for F
where
    F: Fn(&[i64]) -> Complex64 + Sync,
{
    fn value_at(&self, chi: &[i64]) -> Result<Complex64> {
        Ok(self(chi))
    }
}

/// Normalized lattice sum `Σ_{χ ∈ ball} f(χ) / normalizer`.
pub fn ball_average<F: LatticeFunction + ?Sized>(f: &F, ball: &LatticeBall, norm: Normalization) -> Result<Complex64> {
    let normalizer = match norm {
        Normalization::Count => {
            if ball.is_empty() {
                return Err(Error::EmptyDomain(format!(
                    "ball of radius {} around {:?} contains no lattice point",
                    ball.radius(),
                    ball.center()
                )));
            }
            ball.count() as f64
        }
        Normalization::Volume => {
            if ball.continuous_volume() <= 0.0 {
                return Err(Error::EmptyDomain("ball has zero volume".into()));
            }
            ball.continuous_volume()
        }
    };
    let sum = ball.sum_by(Complex64::zero(), |p| f.value_at(p))?;
    Ok(sum / normalizer)
}
