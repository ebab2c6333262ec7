//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wiener_core::projection::CMatrix;
use wiener_core::SymbolSpec;

pub type Poly = BTreeMap<(i64, i64), Complex64>;

pub fn mul(p: &Poly, q: &Poly) -> Poly {
    let mut out = Poly::new();
    for (&(a0, a1), &x) in p {
        for (&(b0, b1), &y) in q {
            *out.entry((a0 + b0, a1 + b1)).or_default() += x * y;
        }
    }
    out
}

/// `-1 + Π_n (1 + c_n cos<x, a_n>)` as an explicit list of exponentials.
pub fn riesz_product(freqs: &[(i64, i64)], coeff: impl Fn(usize) -> Complex64) -> Poly {
    let mut p = Poly::from([((0, 0), Complex64::new(1.0, 0.0))]);
    for (k, &(a0, a1)) in freqs.iter().enumerate() {
        let c = coeff(k + 1) / 2.0;
        let factor = Poly::from([((0, 0), Complex64::new(1.0, 0.0)), ((a0, a1), c), ((-a0, -a1), c)]);
        p = mul(&p, &factor);
    }
    *p.entry((0, 0)).or_default() -= 1.0;
    p
}

/// Target coefficients by direct expansion: convolution on the torus with
/// normalized Haar measure multiplies Fourier coefficients.
pub fn oracle(m: &SymbolSpec, freqs: &[(i64, i64)]) -> Poly {
    let r = riesz_product(freqs, |n| Complex64::new(0.0, 1.0 / n as f64));
    let g = riesz_product(freqs, |_| Complex64::new(1.0, 0.0));
    let mut out = Poly::new();
    for (k, rc) in r {
        if let Some(gc) = g.get(&k) {
            let v = m.eval(&[k.0, k.1]).unwrap() * rc * gc;
            if v.norm() > 0.0 {
                out.insert(k, v);
            }
        }
    }
    out
}

/// `V Σ⁺ U*` from a full SVD of the real embedding `[[Re A, -Im A], [Im A, Re A]]`,
/// whose pseudoinverse embeds `A⁺`. Singular values below `1e-10 σ_max` are cut.
pub fn svd_pinv(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let e = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = a[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let svd = e.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let top = svd.singular_values.iter().fold(0.0f64, |x, &y| x.max(y));
    let mut p = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * top {
            p += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    CMatrix::from_fn(n, n, |i, j| Complex64::new(p[(i, j)], p[(i + n, j)]))
}

/// Lacunary-ish frequencies with random signs and second coordinates.
pub fn seeded_frequencies(n: usize, rng: &mut ChaCha8Rng) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut t: i64 = rng.gen_range(1..4);
    for _ in 0..n {
        out.push((t * if rng.gen_bool(0.5) { 1 } else { -1 }, rng.gen_range(-7..=7)));
        t = 4 * t + rng.gen_range(1..5);
    }
    out
}
