mod support;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::svd_pinv;
use wiener_core::projection::*;
use wiener_core::wiener::LimitChoice;

#[test]
fn decell_matches_svd_on_random_corpus() {
    let corpus = random_corpus(1000, 6, 42);
    let mut worst_penrose = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for a in &corpus {
        let r = decell_pseudoinverse(a, DEFAULT_ZERO_TOL).unwrap();
        worst_penrose = r.penrose.iter().fold(worst_penrose, |x, &y| x.max(y));
        let oracle = svd_pinv(a);
        let scale = fro(&oracle);
        let diff = fro(&(&r.pinv - &oracle));
        worst_oracle = worst_oracle.max(if scale > 0.0 { diff / scale } else { diff });
        assert_eq!(r.s, numerical_rank(a));
    }
    assert!(worst_penrose <= 1e-10, "penrose {worst_penrose}");
    assert!(worst_oracle <= 1e-8, "oracle {worst_oracle}");
}

#[test]
fn projection_is_orthogonal_projection_on_corpus() {
    let corpus = random_corpus(300, 6, 7);
    for a in &corpus {
        let n = a.nrows();
        let pinv = decell_pseudoinverse(a, DEFAULT_ZERO_TOL).unwrap().pinv;
        let p = CMatrix::identity(n, n) - &pinv * a;
        assert!(fro(&(&p * &p - &p)) < 1e-10);
        assert!(fro(&(p.adjoint() - &p)) < 1e-10);
        assert!(fro(&(a * &p)) < 1e-10 * fro(a).max(1.0));
        assert_eq!(rank_above(&p, 1e-8) + rank_above(&(&pinv * a), 1e-8), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_invariant_under_positive_scaling(seed in 0u64..1000, scale in 0.1f64..10.0, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = (seed as usize) % (n + 1);
        let a = random_matrix_with_rank(n, rank, &mut rng);
        let c = CMatrix::from_fn(1, 1, |_, _| Complex64::new(scale, 0.0))[(0, 0)];
        let p1 = CMatrix::identity(n, n) - decell_pseudoinverse(&a, DEFAULT_ZERO_TOL).unwrap().pinv * &a;
        let ac = &a * c;
        let p2 = CMatrix::identity(n, n) - decell_pseudoinverse(&ac, DEFAULT_ZERO_TOL).unwrap().pinv * &ac;
        prop_assert!(fro(&(p1 - p2)) < 1e-12);
    }

    #[test]
    fn penrose_identities_hold(seed in 0u64..10_000, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = (seed as usize) % (n + 1);
        let a = random_matrix_with_rank(n, rank, &mut rng);
        let r = decell_pseudoinverse(&a, DEFAULT_ZERO_TOL).unwrap();
        for x in r.penrose {
            prop_assert!(x <= 1e-10);
        }
    }
}

#[test]
fn gamma_for_curl_projection() {
    let a = MatrixSymbol::Curl2;
    let p = ProjectionSymbol::new(&a);
    let g1 = gamma_estimate(&p, &[1.0, 0.0], 0.05, &[1e4], LimitChoice::LastSample)
        .unwrap()
        .limit_matrix();
    let g2 = gamma_estimate(&p, &[0.0, 1.0], 0.05, &[1e4], LimitChoice::LastSample)
        .unwrap()
        .limit_matrix();
    assert!(g1[(0, 0)].re >= 0.99 && g1[(1, 1)].re <= 0.01);
    assert!(g2[(0, 0)].re <= 0.01 && g2[(1, 1)].re >= 0.99);
}

#[test]
fn gamma_converges_to_rank_one_projection() {
    let a = MatrixSymbol::Curl2;
    let p = ProjectionSymbol::new(&a);
    let w = [0.6, 0.8];
    let target = CMatrix::from_fn(2, 2, |i, j| Complex64::new(w[i] * w[j], 0.0));
    // ε shrinks with t so the ball-average bias (of order ε²) goes down.
    let e3 = fro(&(gamma_estimate(&p, &w, 0.2, &[1e3], LimitChoice::LastSample).unwrap().limit_matrix() - &target));
    let e4 = fro(&(gamma_estimate(&p, &w, 0.05, &[1e4], LimitChoice::LastSample)
        .unwrap()
        .limit_matrix()
        - &target));
    assert!(e4 < e3, "{e3} -> {e4}");
}

fn quick(d: usize) -> ObstructionSettings {
    let mut s = ObstructionSettings::for_dim(d).unwrap();
    s.ts = vec![200.0];
    s.eps = vec![0.05];
    s
}

#[test]
fn curl_is_obstructed() {
    let r = obstruction_check(&MatrixSymbol::Curl2, &quick(2)).unwrap();
    assert_eq!(r.verdict, ObstructionVerdict::Obstructed);
    assert!(r.feasibility_residual.unwrap() >= 0.9);
    assert_eq!(r.common_kernel_dim, 0);
    assert!(r.gamma_direction_dependent);
    assert_eq!(r.note, SAMPLING_NOTE);
}

#[test]
fn three_dimensional_gradient_symbols_are_obstructed() {
    for a in [MatrixSymbol::Curl3Completed, MatrixSymbol::GradientD { d: 3 }] {
        let r = obstruction_check(&a, &quick(3)).unwrap();
        assert_eq!(r.verdict, ObstructionVerdict::Obstructed, "{a:?}");
        assert!(r.feasibility_residual.unwrap() >= 0.9);
    }
}

#[test]
fn identity_cannot_conclude() {
    let r = obstruction_check(&MatrixSymbol::Identity { n: 2, d: 2 }, &quick(2)).unwrap();
    assert_eq!(r.verdict, ObstructionVerdict::CannotConclude);
    assert!(r.feasibility_residual.is_none());
}

#[test]
fn diag_omega1_with_wide_cap() {
    let mut s = quick(2);
    s.cap_tol = 0.1;
    let r = obstruction_check(&MatrixSymbol::DiagOmega1, &s).unwrap();
    assert!(r.conditions.a3_holds);
    assert_eq!(r.verdict, ObstructionVerdict::Obstructed);
}

#[test]
fn too_few_directions_is_an_error() {
    let mut s = quick(2);
    s.sphere.truncate(50);
    assert!(obstruction_check(&MatrixSymbol::Curl2, &s).is_err());
}
