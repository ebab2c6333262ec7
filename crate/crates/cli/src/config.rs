//! Resolved run configurations. Every subcommand turns its flags into one of
//! these before doing any work, and the same value is echoed to
//! `config.json`, so `wiener run config.json` replays the run exactly.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wiener_core::lattice::{schedule_per_decade, GrowthFunction};
use wiener_core::projection::{sphere_directions, ObstructionSettings};
use wiener_core::wiener::circle_directions;
use wiener_core::{AtomicMeasure, Complex64, LimitChoice, MatrixSymbol, SymbolSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Average(AverageConfig),
    RieszDemo(RieszConfig),
    ProjectionDemo(ProjectionConfig),
    TransferCheck(TransferConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageConfig {
    pub d: usize,
    /// Symbol whose averages are taken. With `theorem_check` this is `|μ̂|²`.
    pub symbol: SymbolSpec,
    pub measure: Option<AtomicMeasure>,
    pub directions: Vec<Vec<f64>>,
    pub growth: GrowthFunction,
    pub ts: Vec<f64>,
    pub tol: f64,
    pub limit: LimitChoice,
    pub theorem_check: bool,
    pub expect_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszConfig {
    pub ns: Vec<usize>,
    pub l: u32,
    pub base: i64,
    pub d: usize,
    pub grid: usize,
    pub cross_check: bool,
    pub spectrum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub matrix: MatrixSymbol,
    pub d: usize,
    pub sphere_count: usize,
    pub seed: u64,
    pub gamma_directions: Vec<Vec<f64>>,
    pub eps: Vec<f64>,
    pub ts: Vec<f64>,
    pub cap_tol: f64,
    pub tol: f64,
    pub limit: LimitChoice,
}

impl ProjectionConfig {
    pub fn settings(&self) -> Result<ObstructionSettings> {
        Ok(ObstructionSettings {
            sphere: sphere_directions(self.d, self.sphere_count, self.seed)?,
            gamma_directions: self.gamma_directions.clone(),
            eps: self.eps.clone(),
            ts: self.ts.clone(),
            cap_tol: self.cap_tol,
            tol: self.tol,
            choice: self.limit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub symbol: SymbolSpec,
    pub direction: Vec<f64>,
    pub growth: GrowthFunction,
    pub ts: Vec<f64>,
    pub resolution: usize,
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Built-in symbol name, or a path to a JSON symbol.
pub fn resolve_symbol(name: &str, d: usize) -> Result<SymbolSpec> {
    let one = Complex64::new(1.0, 0.0);
    Ok(match name {
        "orthant" => SymbolSpec::positive_orthant(d),
        "counterexample" => SymbolSpec::counterexample_kernel(d),
        "counterexample-sqmod" => SymbolSpec::counterexample_kernel(d).sqmod(),
        "one" => SymbolSpec::constant(d, one),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| {
                format!("{path:?} is neither a built-in symbol (orthant, counterexample, counterexample-sqmod, one) nor a readable file")
            })?;
            SymbolSpec::from_json(&text).with_context(|| format!("parsing symbol file {path}"))?
        }
    })
}

pub fn read_measure(path: &Path) -> Result<AtomicMeasure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing measure file {}", path.display()))
}

/// `gradient_<d>` sets the dimension inline; other names take it from `d`.
pub fn resolve_matrix(name: &str, d: usize) -> Result<(MatrixSymbol, usize)> {
    if let Some(k) = name.strip_prefix("gradient_") {
        if let Ok(k) = k.parse::<usize>() {
            return Ok((MatrixSymbol::GradientD { d: k }, k));
        }
    }
    let m = match name {
        "curl2" | "diag_omega1" => return Ok((MatrixSymbol::builtin(name, 2)?, 2)),
        "curl3_completed" => return Ok((MatrixSymbol::builtin(name, 3)?, 3)),
        _ if Path::new(name).is_file() => {
            let text = std::fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
            MatrixSymbol::from_json(&text).with_context(|| format!("parsing matrix file {name}"))?
        }
        _ => MatrixSymbol::builtin(name, d)?,
    };
    Ok((m, d))
}

/// One direction token: `e<k>`, `-e<k>`, `diag`, `antidiag` (`-(1,…,1)/√d`),
/// `circle<N>` (N equally spaced, d = 2) or explicit coordinates `x:y:…`.
pub fn parse_directions(spec: &[String], d: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for token in spec {
        let token = token.trim();
        let axis = |k: &str, sign: f64| -> Result<Vec<f64>> {
            let k: usize = k.parse().with_context(|| format!("bad axis in {token:?}"))?;
            if k == 0 || k > d {
                bail!("axis {k} out of range for d = {d}");
            }
            let mut e = vec![0.0; d];
            e[k - 1] = sign;
            Ok(e)
        };
        if let Some(k) = token.strip_prefix("-e") {
            out.push(axis(k, -1.0)?);
        } else if let Some(k) = token.strip_prefix('e') {
            out.push(axis(k, 1.0)?);
        } else if token == "diag" || token == "antidiag" {
            let s = if token == "diag" { 1.0 } else { -1.0 };
            let c = if d == 2 { FRAC_1_SQRT_2 } else { 1.0 / (d as f64).sqrt() };
            out.push(vec![s * c; d]);
        } else if let Some(n) = token.strip_prefix("circle") {
            if d != 2 {
                bail!("circle directions need d = 2");
            }
            let n: usize = n.parse().with_context(|| format!("bad count in {token:?}"))?;
            out.extend(circle_directions(n));
        } else {
            let v = token
                .split(':')
                .map(|x| x.parse::<f64>().with_context(|| format!("bad coordinate in {token:?}")))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != d {
                bail!("direction {token:?} has {} coordinates, expected {d}", v.len());
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                bail!("direction {token:?} is zero");
            }
            out.push(v.iter().map(|x| x / norm).collect());
        }
    }
    if out.is_empty() {
        bail!("no directions given");
    }
    Ok(out)
}

/// `sqrt` or `linear:<eps>`.
pub fn parse_growth(s: &str) -> Result<GrowthFunction> {
    if s == "sqrt" {
        return Ok(GrowthFunction::Sqrt);
    }
    if let Some(eps) = s.strip_prefix("linear:") {
        let eps: f64 = eps.parse().with_context(|| format!("bad eps in {s:?}"))?;
        return Ok(GrowthFunction::linear(eps)?);
    }
    bail!("unknown growth {s:?}; use sqrt or linear:<eps>")
}

/// Explicit `ts` win; otherwise a log-spaced schedule.
pub fn resolve_ts(ts: &[f64], growth: &GrowthFunction, t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !ts.is_empty() {
        for &t in ts {
            if !(t.is_finite() && t > 0.0) {
                bail!("schedule entry {t} is not a positive number");
            }
        }
        return Ok(ts.to_vec());
    }
    Ok(schedule_per_decade(growth, t_min, t_max, per_decade)?
        .into_iter()
        .map(|p| p.t)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_tokens() {
        let d = parse_directions(&["e1".into(), "-e2".into(), "antidiag".into(), "3:4".into()], 2).unwrap();
        assert_eq!(d[0], vec![1.0, 0.0]);
        assert_eq!(d[1], vec![0.0, -1.0]);
        assert_eq!(d[2], vec![-FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
        assert_eq!(d[3], vec![0.6, 0.8]);
        assert_eq!(parse_directions(&["circle8".into()], 2).unwrap().len(), 8);
        assert!(parse_directions(&["e3".into()], 2).is_err());
        assert!(parse_directions(&["1:2:3".into()], 2).is_err());
    }

    #[test]
    fn matrix_names() {
        assert_eq!(resolve_matrix("gradient_3", 2).unwrap(), (MatrixSymbol::GradientD { d: 3 }, 3));
        assert_eq!(resolve_matrix("curl2", 5).unwrap().1, 2);
        assert_eq!(resolve_matrix("identity", 3).unwrap().0, MatrixSymbol::Identity { n: 3, d: 3 });
        assert!(resolve_matrix("nope", 2).is_err());
    }

    #[test]
    fn config_round_trips() {
        let c = RunConfig::RieszDemo(RieszConfig {
            ns: vec![4, 5],
            l: 1,
            base: 10,
            d: 2,
            grid: 64,
            cross_check: true,
            spectrum: false,
        });
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.starts_with("{\"command\":\"riesz-demo\""));
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
