use std::fmt::Write as _;

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::{json, Value};
use wiener_core::projection::obstruction_check;
use wiener_core::riesz::{expand_products, max_coefficient_deviation, run_symmetric, target_polynomial, EXPANSION_GUARD, PATTERN_GUARD};
use wiener_core::transference::transference_average_check;
use wiener_core::wiener::{direction_dependence_test, samples_csv, wiener_average_sequence};
use wiener_core::{Complex64, Error, ObstructionVerdict, Verdict};

use crate::config::{AverageConfig, ProjectionConfig, RieszConfig, RunConfig, TransferConfig};

/// How a run ended. Maps onto exit codes 0, 2 and 1.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok,
    CannotConclude(String),
    Failed(String),
}

pub struct Artifacts {
    pub summary: Value,
    /// `(file name, contents)`, written under `--out` in this order.
    pub files: Vec<(String, String)>,
    pub outcome: Outcome,
}

pub fn execute(config: &RunConfig) -> Result<Artifacts> {
    match config {
        RunConfig::Average(c) => average(c),
        RunConfig::RieszDemo(c) => riesz_demo(c),
        RunConfig::ProjectionDemo(c) => projection_demo(c),
        RunConfig::TransferCheck(c) => transfer_check(c),
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn c2(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn average(c: &AverageConfig) -> Result<Artifacts> {
    let (estimates, verdict) = if c.directions.len() >= 2 {
        let v = direction_dependence_test(&c.symbol, &c.directions, &c.growth, &c.ts, c.tol, c.limit)?;
        let estimates = v.estimates.clone();
        (estimates, Some(v))
    } else {
        (vec![wiener_average_sequence(&c.symbol, &c.directions[0], &c.growth, &c.ts)?], None)
    };
    let limits: Vec<Value> = estimates
        .iter()
        .map(|e| {
            json!({
                "direction": e.direction,
                "limit": c2(c.limit.pick(e)),
                "last_sample": c2(e.last_sample()),
                "extrapolated": c2(e.extrapolated_limit),
                "fit_residual": e.fit_residual,
            })
        })
        .collect();
    let mut summary = json!({
        "command": "average",
        "limit_choice": c.limit,
        "limits": limits,
    });
    if let Some(v) = &verdict {
        summary["verdict"] = json!(v.verdict);
        summary["max_deviation"] = json!(v.max_deviation);
        summary["tolerance"] = json!(v.tolerance);
    }
    if c.theorem_check {
        let Some(measure) = &c.measure else {
            bail!("theorem check needs a measure")
        };
        let mass = measure.autocorrelation_mass();
        let rel: Vec<f64> = estimates
            .iter()
            .map(|e| {
                let err = (c.limit.pick(e) - mass).norm();
                if mass > 0.0 {
                    err / mass
                } else {
                    err
                }
            })
            .collect();
        let worst = rel.iter().fold(0.0f64, |m, &x| m.max(x));
        summary["theorem"] = json!({ "mass": mass, "rel_errors": rel, "max_rel_error": worst });
    }
    let outcome = match &verdict {
        Some(v) if c.expect_consistent && v.verdict == Verdict::DirectionDependent => Outcome::Failed(format!(
            "limits depend on the direction (max deviation {:.3e} > {:.3e})",
            v.max_deviation, v.tolerance
        )),
        _ => Outcome::Ok,
    };
    let plot = "set datafile separator ','\nset logscale x\nset key autotitle columnhead\nset xlabel 't'\nset ylabel 'ball average'\n\
                plot 'samples.csv' using 2:5 with points title 'Re', '' using 2:6 with points title 'Im'\n";
    let files = vec![
        ("samples.csv".into(), samples_csv(&estimates)),
        ("summary.json".into(), pretty(&summary)?),
        ("plot.gp".into(), plot.into()),
    ];
    Ok(Artifacts { summary, files, outcome })
}

fn riesz_demo(c: &RieszConfig) -> Result<Artifacts> {
    let mut entries = Vec::new();
    let mut certificates = Vec::new();
    let mut files = Vec::new();
    let mut table = String::from("n,abs_s_n,abs_z0,floor,grid_sup,grid_floor,l1_gap,l1_limit,pass\n");
    for &n in &c.ns {
        if n > PATTERN_GUARD {
            return Err(Error::ResourceLimit {
                what: format!("3^N spectrum terms at N = {n}"),
                cap: 3u64.pow(PATTERN_GUARD as u32),
            }
            .into());
        }
        let run = run_symmetric(n, c.l, c.base, c.d, c.grid)?;
        let cert = &run.certificate;
        let cross_check = if !c.cross_check {
            Value::Null
        } else if n > EXPANSION_GUARD {
            json!({ "skipped": format!("brute-force expansion is limited to N <= {EXPANSION_GUARD}") })
        } else {
            let t = target_polynomial(&run.symbol, &run.spec)?;
            let oracle = expand_products(&run.symbol, &run.spec)?;
            let dev = max_coefficient_deviation(&t, &oracle);
            json!({ "max_deviation": dev, "matches": dev <= 1e-12 })
        };
        if c.spectrum {
            files.push((format!("spectrum_{n}.csv"), target_polynomial(&run.symbol, &run.spec)?.to_csv()));
        }
        let _ = writeln!(
            table,
            "{n},{},{},{},{},{},{},{},{}",
            run.greedy.final_sum().norm(),
            cert.bound_b.abs_z_at_zero,
            cert.bound_b.floor,
            cert.grid_sup,
            cert.grid_floor,
            cert.bound_a.l1_gap,
            cert.bound_a.limit,
            cert.pass
        );
        entries.push(json!({
            "n": n,
            "abs_z0": cert.bound_b.abs_z_at_zero,
            "floor": cert.bound_b.floor,
            "grid_sup": cert.grid_sup,
            "pass": cert.pass,
            "cross_check": cross_check,
        }));
        certificates.push(json!({
            "n": n,
            "sigma": run.greedy.sigma,
            "ladder": run.ladder,
            "p1": run.p1,
            "certificate": run.certificate,
            "z_at_zero": c2(run.z_at_zero),
            "i_times_greedy_sum": c2(run.i_times_greedy_sum),
            "cross_check": cross_check,
        }));
    }
    let abs: Vec<f64> = entries.iter().map(|e| e["abs_z0"].as_f64().unwrap_or(0.0)).collect();
    let monotone = abs.windows(2).all(|w| w[1] >= w[0]);
    let all_pass = entries.iter().all(|e| e["pass"] == json!(true));
    let cross_ok = entries.iter().all(|e| e["cross_check"]["matches"] != json!(false));
    let summary = json!({
        "command": "riesz-demo",
        "all_pass": all_pass,
        "monotone_abs_z0": monotone,
        "entries": entries,
    });
    let outcome = if !cross_ok {
        Outcome::Failed("target coefficients disagree with the brute-force expansion".into())
    } else if !all_pass {
        Outcome::CannotConclude("some certificates did not pass".into())
    } else {
        Outcome::Ok
    };
    let plot = "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'N'\nset logscale x\n\
                plot 'table.csv' using 1:3 with linespoints title '|Z(0)|', '' using 1:4 with lines title 'ln N / 2pi'\n";
    files.splice(
        0..0,
        [
            ("certificates.json".to_string(), pretty(&certificates)?),
            ("table.csv".to_string(), table),
            ("plot.gp".to_string(), plot.to_string()),
        ],
    );
    Ok(Artifacts { summary, files, outcome })
}

fn projection_demo(c: &ProjectionConfig) -> Result<Artifacts> {
    let report = obstruction_check(&c.matrix, &c.settings()?)?;
    let mut csv = String::from("direction,eps,t,r,count,entry,re,im\n");
    for g in &report.gamma {
        let dir = g.direction.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for s in &g.samples {
            let m = s.matrix.to_matrix()?;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let _ = writeln!(
                        csv,
                        "{dir},{},{},{},{},{}{},{},{}",
                        g.eps,
                        s.t,
                        s.r,
                        s.count,
                        i + 1,
                        j + 1,
                        m[(i, j)].re,
                        m[(i, j)].im
                    );
                }
            }
        }
    }
    let summary = json!({
        "command": "projection-demo",
        "verdict": report.verdict,
        "feasibility_residual": report.feasibility_residual,
        "common_kernel_dim": report.common_kernel_dim,
        "gamma_direction_dependent": report.gamma_direction_dependent,
        "violated": report.violated,
        "note": report.note,
    });
    let outcome = match report.verdict {
        ObstructionVerdict::CannotConclude => Outcome::CannotConclude(format!("cannot conclude: {}", report.violated.join("; "))),
        _ => Outcome::Ok,
    };
    let files = vec![("report.json".into(), pretty(&report)?), ("gamma.csv".into(), csv)];
    Ok(Artifacts { summary, files, outcome })
}

fn transfer_check(c: &TransferConfig) -> Result<Artifacts> {
    let mut reports = Vec::new();
    let mut csv = String::from("t,r,lattice_re,lattice_im,continuous_re,continuous_im,residual\n");
    for &t in &c.ts {
        let r = transference_average_check(&c.symbol, &c.direction, &c.growth, t, c.resolution)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.t, r.r, r.lattice_avg.re, r.lattice_avg.im, r.continuous_avg.re, r.continuous_avg.im, r.residual
        );
        reports.push(r);
    }
    let residuals: Vec<f64> = reports.iter().map(|r| r.residual).collect();
    let decreasing = residuals.len() >= 2 && residuals.last() < residuals.first();
    let summary = json!({
        "command": "transfer-check",
        "c1": reports.first().map(|r| r.c1),
        "c": reports.first().map(|r| r.c),
        "ts": c.ts,
        "residuals": residuals,
        "last_below_first": decreasing,
    });
    let plot = "set datafile separator ','\nset key autotitle columnhead\nset logscale xy\nset xlabel 't'\n\
                plot 'trend.csv' using 1:7 with linespoints title 'residual'\n";
    let files = vec![
        ("reports.json".into(), pretty(&reports)?),
        ("trend.csv".into(), csv),
        ("plot.gp".into(), plot.into()),
    ];
    Ok(Artifacts {
        summary,
        files,
        outcome: Outcome::Ok,
    })
}
