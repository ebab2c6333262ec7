//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod support;

use std::f64::consts::FRAC_1_SQRT_2;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wiener_core::lattice::GrowthFunction;
use wiener_core::measures::random_atomic_measure;
use wiener_core::projection::*;
use wiener_core::riesz::*;
use wiener_core::transference::{transference_average_check, DEFAULT_RESOLUTION};
use wiener_core::wiener::*;
use wiener_core::SymbolSpec;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, budget: Duration) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, format!("took {took:.2?}, budget {budget:?}"))
}

fn greedy_floor() -> Check {
    let start = Instant::now();
    let expected = [0.3664, 0.7329, 1.0993, 1.4658];
    let mut parts = Vec::new();
    for (k, want) in (1..=4).zip(expected) {
        let n = 10usize.pow(k);
        let floor = log_floor(n);
        // The listed values are truncated to four decimals (and 1.0993 sits one unit
        // below the truncation of 1.09940); the floor itself is computed.
        ensure(
            want <= floor && floor - want < 2e-4,
            format!("floor at N = {n} is {floor}, listed as {want}"),
        )?;
        let s = greedy_sigma(n).map_err(|e| e.to_string())?.final_sum().norm();
        ensure(s >= floor, format!("|S_{n}| = {s} < {floor}"))?;
        parts.push(format!("|S_{n}|={s:.4}>={floor:.4}"));
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "{} in {:.2?} (floors = ln N / 2pi; listed 4-digit values agree to < 2e-4)",
        parts.join(" "),
        start.elapsed()
    ))
}

fn riesz_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let symbols = [
        SymbolSpec::positive_orthant(2),
        SymbolSpec::counterexample_kernel(2),
        SymbolSpec::constant(2, Complex64::new(1.0, 0.0)),
    ];
    let mut worst = 0.0f64;
    for n in 1..=6 {
        for m in &symbols {
            let freqs = support::seeded_frequencies(n, &mut rng);
            let sigma: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let spec =
                RieszProductSpec::new(sigma, freqs.iter().map(|&(a, b)| vec![a, b]).collect(), 1, false).map_err(|e| e.to_string())?;
            let ours = target_polynomial(m, &spec).map_err(|e| e.to_string())?;
            let expected = support::oracle(m, &freqs);
            for (f, c, _) in ours.iter() {
                worst = worst.max((c - expected.get(&(f[0], f[1])).copied().unwrap_or_default()).norm());
            }
            for (k, v) in &expected {
                worst = worst.max((ours.coefficient(&[k.0, k.1]) - v).norm());
            }
        }
    }
    ensure(worst <= 1e-12, format!("oracle deviation {worst:e}"))?;
    let mut z_gap = 0.0f64;
    let mut abs_gap = 0.0f64;
    for n in 1..=6 {
        let run = run_symmetric(n, 1, 10, 2, 64).map_err(|e| e.to_string())?;
        ensure(run.p1.holds, format!("P1 fails at N = {n}"))?;
        let a = &run.certificate.bound_a;
        ensure(
            a.holds && a.l1_gap <= 0.75f64.powi(n as i32),
            format!("coefficient bound fails at N = {n}: {} > {}", a.l1_gap, a.limit),
        )?;
        let s = run.greedy.final_sum();
        z_gap = z_gap.max((run.z_at_zero - Complex64::i() * s).norm());
        abs_gap = abs_gap.max((run.z_at_zero.norm() - s.norm()).abs());
    }
    ensure(z_gap <= 1e-12, format!("Z(0) differs from i S_N by {z_gap:e}"))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "oracle dev {worst:.1e}; l1 gap <= (3/4)^N for N<=6; Z(0) = i*S_N to {z_gap:.1e} (so |Z(0)| = |S_N| to {abs_gap:.1e}, not Z(0) = S_N); {:.2?}",
        start.elapsed()
    ))
}

fn wiener_theorem() -> Check {
    let start = Instant::now();
    let dirs = circle_directions(8);
    let ts = [1e5];
    let mut worst_limit = 0.0f64;
    let mut worst_atom = 0.0f64;
    for seed in 0..3 {
        let n_atoms = 3 + seed as usize;
        let mu = random_atomic_measure(2, n_atoms, (0.2, 1.0), 0.3, seed).map_err(|e| e.to_string())?;
        let symbol = SymbolSpec::atomic(mu.clone());
        for w in &dirs {
            let tc = wiener_theorem_check(&mu, w, &GrowthFunction::Sqrt, &ts, LimitChoice::LastSample).map_err(|e| e.to_string())?;
            worst_limit = worst_limit.max(tc.rel_error);
            for atom in mu.atoms() {
                let e = atom_mass_recovery(&symbol, &atom.tau, w, &GrowthFunction::Sqrt, &ts).map_err(|e| e.to_string())?;
                worst_atom = worst_atom.max((e.last_sample() - atom.mass).norm() / atom.mass.norm());
            }
        }
    }
    ensure(worst_limit <= 0.02, format!("|mu^|^2 average off by {:.3}%", 100.0 * worst_limit))?;
    ensure(worst_atom <= 0.02, format!("atom recovery off by {:.3}%", 100.0 * worst_atom))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "3 measures x 8 directions at t=1e5: max rel error {:.3}% (mass), {:.3}% (atoms); {:.2?}",
        100.0 * worst_limit,
        100.0 * worst_atom,
        start.elapsed()
    ))
}

fn direction_dichotomy() -> Check {
    let orthant = SymbolSpec::positive_orthant(2);
    let d = FRAC_1_SQRT_2;
    let ts = [1e6];
    let v = direction_dependence_test(
        &orthant,
        &[vec![d, d], vec![-d, -d]],
        &GrowthFunction::Sqrt,
        &ts,
        DEFAULT_DIRECTION_TOL,
        LimitChoice::LastSample,
    )
    .map_err(|e| e.to_string())?;
    ensure(v.verdict == Verdict::DirectionDependent, "orthant not flagged")?;
    ensure(
        v.limits[0] == Complex64::new(1.0, 0.0) && v.limits[1] == Complex64::new(0.0, 0.0),
        format!("limits {:?}", v.limits),
    )?;
    let e1 = wiener_average_sequence(&orthant, &[1.0, 0.0], &GrowthFunction::Sqrt, &ts)
        .map_err(|e| e.to_string())?
        .last_sample();
    ensure((e1.re - 0.5).abs() <= 0.01 && e1.im == 0.0, format!("e1 limit {e1}"))?;
    let sq = SymbolSpec::counterexample_kernel(2).sqmod();
    let mut dirs = circle_directions(8);
    dirs.extend([vec![d, d], vec![-d, -d]]);
    let c = direction_dependence_test(
        &sq,
        &dirs,
        &GrowthFunction::Sqrt,
        &ts,
        DEFAULT_DIRECTION_TOL,
        LimitChoice::LastSample,
    )
    .map_err(|e| e.to_string())?;
    ensure(c.verdict == Verdict::Consistent, "squared kernel flagged")?;
    let dev = c.limits.iter().fold(0.0f64, |m, l| m.max((l - 1.0).norm()));
    ensure(dev <= 1e-12, format!("squared kernel limit off by {dev:e}"))?;
    Ok(format!(
        "orthant limits 1 vs 0 on +-diag, {:.4} on e1; |k|^2 consistent, |limit - 1| <= {dev:.0e}",
        e1.re
    ))
}

fn decell() -> Check {
    let start = Instant::now();
    let corpus = random_corpus(1000, 6, 42);
    let mut penrose = 0.0f64;
    let mut oracle = 0.0f64;
    for a in &corpus {
        let r = decell_pseudoinverse(a, DEFAULT_ZERO_TOL).map_err(|e| e.to_string())?;
        penrose = r.penrose.iter().fold(penrose, |m, &x| m.max(x));
        let o = support::svd_pinv(a);
        let scale = fro(&o);
        let diff = fro(&(&r.pinv - &o));
        oracle = oracle.max(if scale > 0.0 { diff / scale } else { diff });
    }
    ensure(penrose <= 1e-10, format!("Penrose residual {penrose:e}"))?;
    ensure(oracle <= 1e-8, format!("SVD oracle deviation {oracle:e}"))?;
    within(start, Duration::from_secs(5))?;
    Ok(format!(
        "1000 matrices: Penrose <= {penrose:.1e}, oracle <= {oracle:.1e}; {:.2?}",
        start.elapsed()
    ))
}

fn obstruction() -> Check {
    let start = Instant::now();
    let curl = MatrixSymbol::Curl2;
    let p = ProjectionSymbol::new(&curl);
    let g1 = gamma_estimate(&p, &[1.0, 0.0], 0.05, &[1e4], LimitChoice::LastSample)
        .map_err(|e| e.to_string())?
        .limit_matrix();
    let g2 = gamma_estimate(&p, &[0.0, 1.0], 0.05, &[1e4], LimitChoice::LastSample)
        .map_err(|e| e.to_string())?
        .limit_matrix();
    ensure(g1[(0, 0)].re >= 0.99, format!("Gamma(e1)_11 = {}", g1[(0, 0)]))?;
    ensure(g2[(0, 0)].re <= 0.01, format!("Gamma(e2)_11 = {}", g2[(0, 0)]))?;
    let r = obstruction_check(&curl, &ObstructionSettings::for_dim(2).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(
        r.verdict == ObstructionVerdict::Obstructed,
        format!("curl2 verdict {:?}", r.verdict),
    )?;
    let res = r.feasibility_residual.unwrap_or(0.0);
    ensure(res >= 0.9, format!("feasibility residual {res}"))?;
    let id = obstruction_check(
        &MatrixSymbol::Identity { n: 2, d: 2 },
        &ObstructionSettings::for_dim(2).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        id.verdict == ObstructionVerdict::CannotConclude,
        format!("identity verdict {:?}", id.verdict),
    )?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "Gamma(e1)_11={:.4}, Gamma(e2)_11={:.4}; curl2 obstructed (residual {res:.3}); identity cannot conclude; {:.2?}",
        g1[(0, 0)].re,
        g2[(0, 0)].re,
        start.elapsed()
    ))
}

fn transference() -> Check {
    let start = Instant::now();
    let orthant = SymbolSpec::positive_orthant(2);
    let r3 =
        transference_average_check(&orthant, &[1.0, 0.0], &GrowthFunction::Sqrt, 1e3, DEFAULT_RESOLUTION).map_err(|e| e.to_string())?;
    let r4 =
        transference_average_check(&orthant, &[1.0, 0.0], &GrowthFunction::Sqrt, 1e4, DEFAULT_RESOLUTION).map_err(|e| e.to_string())?;
    ensure(r4.residual <= 0.02, format!("residual {} at t=1e4", r4.residual))?;
    ensure(r4.residual < r3.residual, format!("residual {} -> {}", r3.residual, r4.residual))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "c={:.6}, residual {:.2e} (t=1e3) -> {:.2e} (t=1e4); {:.2?}",
        r4.c,
        r3.residual,
        r4.residual,
        start.elapsed()
    ))
}

fn lipschitz() -> Check {
    let eps = 0.1;
    let orthant = SymbolSpec::positive_orthant(2);
    let pairs = sample_lipschitz_pairs(2, 1000, 100.0, 1000.0, eps, 8);
    let r = lipschitz_certificate(&orthant, eps, &pairs).map_err(|e| e.to_string())?;
    ensure(r.empirical_constant.is_finite(), "constant is not finite")?;
    ensure(
        r.empirical_constant <= 40.0 * orthant.sup_bound(),
        format!("C = {} > 40", r.empirical_constant),
    )?;
    Ok(format!(
        "C = {:.3} over {} pairs (reference 4/eps = {})",
        r.empirical_constant, r.pairs, r.reference_bound
    ))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Representative outputs of each pipeline, serialized.
fn fingerprint() -> Vec<String> {
    let mu = random_atomic_measure(2, 4, (0.2, 1.0), 0.3, 1).unwrap();
    let orthant = SymbolSpec::positive_orthant(2);
    vec![
        json(&greedy_sigma(1000).unwrap()),
        json(&run_symmetric(8, 1, 10, 2, 128).unwrap()),
        json(&wiener_theorem_check(&mu, &[0.6, 0.8], &GrowthFunction::Sqrt, &[1e3, 1e4, 3e4], LimitChoice::Extrapolated).unwrap()),
        json(
            &direction_dependence_test(
                &orthant,
                &circle_directions(6),
                &GrowthFunction::linear(0.1).unwrap(),
                &[300.0, 3000.0],
                0.02,
                LimitChoice::LastSample,
            )
            .unwrap(),
        ),
        json(
            &random_corpus(50, 6, 3)
                .iter()
                .map(|a| decell_pseudoinverse(a, DEFAULT_ZERO_TOL).unwrap())
                .collect::<Vec<_>>(),
        ),
        json(
            &obstruction_check(
                &MatrixSymbol::Curl2,
                &ObstructionSettings {
                    ts: vec![200.0],
                    eps: vec![0.05],
                    ..ObstructionSettings::for_dim(2).unwrap()
                },
            )
            .unwrap(),
        ),
        json(&transference_average_check(&orthant, &[1.0, 0.0], &GrowthFunction::Sqrt, 3e3, DEFAULT_RESOLUTION).unwrap()),
        json(&lipschitz_certificate(&orthant, 0.1, &sample_lipschitz_pairs(2, 50, 100.0, 300.0, 0.1, 2)).unwrap()),
    ]
}

fn determinism() -> Check {
    let mut reference: Option<Vec<String>> = None;
    for threads in [1, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let out = pool.install(fingerprint);
        match &reference {
            None => reference = Some(out),
            Some(r) => {
                for (i, (a, b)) in r.iter().zip(&out).enumerate() {
                    ensure(a == b, format!("output {i} differs between 1 and {threads} threads"))?;
                }
            }
        }
    }
    let again = fingerprint();
    ensure(reference.as_ref() == Some(&again), "rerun in the global pool differs")?;
    let bytes: usize = again.iter().map(|s| s.len()).sum();
    Ok(format!("8 pipeline outputs ({bytes} bytes of JSON) identical at 1, 2, 4, 8 threads and on rerun; CLI config replay covered by the wiener-cli tests"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("greedy lower bound", greedy_floor),
        ("Riesz oracle equivalence", riesz_oracle),
        ("Wiener theorem at desk scale", wiener_theorem),
        ("direction-dependence dichotomy", direction_dichotomy),
        ("Decell pseudoinverse", decell),
        ("obstruction pipeline", obstruction),
        ("transference identity", transference),
        ("Lipschitz certificate", lipschitz),
        ("determinism", determinism),
    ];
    // Keep panics from a broken criterion on one line of output.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
