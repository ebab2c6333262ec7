mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wiener_core::transference::DEFAULT_RESOLUTION;
use wiener_core::wiener::DEFAULT_DIRECTION_TOL;
use wiener_core::{LimitChoice, SymbolSpec};

use commands::{execute, Outcome};
use config::*;

/// Lattice Wiener averages, Riesz-product blow-up certificates, projection
/// obstructions and continuous-to-lattice transference checks.
///
/// Exit codes: 0 success, 2 cannot conclude, 1 error or failed expectation.
#[derive(Parser)]
#[command(name = "wiener", version)]
struct Cli {
    /// Size of the worker pool. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for config.json, JSON summaries, CSV samples and plot.gp.
    /// Without it only the summary is printed.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ball averages of a symbol along rays tω with radius r(t), compared across directions.
    Average(AverageArgs),
    /// Greedy signs, ratio-5 frequency ladder and the ln N blow-up certificate for each N.
    RieszDemo(RieszArgs),
    /// Pseudoinverse projection symbol, its Wiener limits Γ(ω) and the complementation obstruction.
    ProjectionDemo(ProjectionArgs),
    /// Continuous versus lattice ball averages through a bump-smoothed extension.
    TransferCheck(TransferArgs),
    /// Replay a config.json written by an earlier run.
    Run {
        /// Path to the config echo.
        config: PathBuf,
    },
}

#[derive(Args)]
struct AverageArgs {
    /// Symbol: orthant, counterexample, counterexample-sqmod, one, or a JSON symbol file.
    #[arg(long, conflicts_with = "measure")]
    symbol: Option<String>,
    /// Atomic measure file ({"d": .., "atoms": [{"tau": [..], "re": .., "im": ..}]}); averages its Fourier transform.
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Average |μ̂|² instead and compare the limit with Σ|a_j|².
    #[arg(long, requires = "measure")]
    theorem_check: bool,
    /// Lattice dimension (taken from the measure when one is given).
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Comma-separated directions: e<k>, -e<k>, diag, antidiag, circle<N>, or x:y:...
    #[arg(long, value_delimiter = ',', default_value = "diag,antidiag")]
    dirs: Vec<String>,
    /// Radius growth: sqrt or linear:<eps> with eps in (0, 1/2).
    #[arg(long, default_value = "sqrt")]
    growth: String,
    /// Explicit comma-separated t values; overrides the log-spaced schedule.
    #[arg(long, value_delimiter = ',')]
    ts: Vec<f64>,
    #[arg(long, default_value_t = 1e2)]
    t_min: f64,
    #[arg(long, default_value_t = 1e5)]
    t_max: f64,
    /// Schedule points per decade of t.
    #[arg(long, default_value_t = 8)]
    per_decade: usize,
    /// Largest pairwise gap between directional limits still called consistent.
    #[arg(long, default_value_t = DEFAULT_DIRECTION_TOL)]
    tol: f64,
    /// Directional limit: last (largest-t sample) or extrapolated (fit in 1/r).
    #[arg(long, default_value = "last")]
    limit: String,
    /// Exit 1 when the limits depend on the direction.
    #[arg(long)]
    expect_consistent: bool,
}

#[derive(Args)]
struct RieszArgs {
    /// Comma-separated N values or ranges such as 4..12.
    #[arg(long, default_value = "4..12")]
    n: String,
    /// Exponent l in the separation predicates.
    #[arg(long, default_value_t = 1)]
    l: u32,
    /// Smallest allowed first ladder frequency.
    #[arg(long, default_value_t = 10)]
    base: i64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Evaluation grid points per axis on the torus.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// Compare target coefficients with a brute-force product expansion (N <= 10).
    #[arg(long)]
    cross_check: bool,
    /// Also write spectrum_<N>.csv with every target coefficient.
    #[arg(long)]
    spectrum: bool,
}

#[derive(Args)]
struct ProjectionArgs {
    /// Matrix symbol: curl2, curl3_completed, gradient_<d>, diag_omega1, identity, or a JSON file.
    #[arg(long, default_value = "curl2")]
    matrix: String,
    /// Dimension for identity and file symbols.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Sphere directions used for the rank, continuity and kernel conditions (at least 100).
    #[arg(long, default_value_t = 200)]
    sphere_count: usize,
    /// Seed for the sphere sample when d >= 4.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated directions where Γ is estimated; defaults to the axes.
    #[arg(long, value_delimiter = ',')]
    gamma_dirs: Vec<String>,
    /// Comma-separated radius fractions ε in (0, 1/2).
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    eps: Vec<f64>,
    /// Comma-separated t values for the Γ averages.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    ts: Vec<f64>,
    /// Smallest-singular-value cutoff defining the singular cap.
    #[arg(long, default_value_t = 1e-8)]
    cap_tol: f64,
    /// Feasibility and spread tolerance.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long, default_value = "last")]
    limit: String,
}

#[derive(Args)]
struct TransferArgs {
    /// Symbol: orthant, counterexample, counterexample-sqmod, one, or a JSON symbol file.
    #[arg(long, default_value = "orthant")]
    symbol: String,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Ray direction (same tokens as for average).
    #[arg(long, default_value = "e1")]
    dir: String,
    #[arg(long, default_value = "sqrt")]
    growth: String,
    /// Comma-separated t values.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    ts: Vec<f64>,
    /// Quadrature points per unit length.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
}

fn parse_limit(s: &str) -> Result<LimitChoice> {
    Ok(match s {
        "last" => LimitChoice::LastSample,
        "extrapolated" => LimitChoice::Extrapolated,
        _ => bail!("unknown limit choice {s:?}; use last or extrapolated"),
    })
}

fn parse_ns(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.parse().with_context(|| format!("bad range {part:?}"))?;
            let b: usize = b.parse().with_context(|| format!("bad range {part:?}"))?;
            if a > b {
                bail!("empty range {part:?}");
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().with_context(|| format!("bad N {part:?}"))?);
        }
    }
    Ok(out)
}

fn resolve(command: Command) -> Result<RunConfig> {
    Ok(match command {
        Command::Run { config } => read_config(&config)?,
        Command::Average(a) => {
            let measure = a.measure.as_deref().map(read_measure).transpose()?;
            let d = measure.as_ref().map_or(a.d, |m| m.dim());
            let symbol = match (&measure, &a.symbol) {
                (Some(m), _) if a.theorem_check => SymbolSpec::atomic(m.clone()).sqmod(),
                (Some(m), _) => SymbolSpec::atomic(m.clone()),
                (None, Some(s)) => resolve_symbol(s, d)?,
                (None, None) => bail!("give --symbol or --measure"),
            };
            let growth = parse_growth(&a.growth)?;
            RunConfig::Average(AverageConfig {
                d,
                symbol,
                measure: if a.theorem_check { measure } else { None },
                directions: parse_directions(&a.dirs, d)?,
                ts: resolve_ts(&a.ts, &growth, a.t_min, a.t_max, a.per_decade)?,
                growth,
                tol: a.tol,
                limit: parse_limit(&a.limit)?,
                theorem_check: a.theorem_check,
                expect_consistent: a.expect_consistent,
            })
        }
        Command::RieszDemo(a) => RunConfig::RieszDemo(RieszConfig {
            ns: parse_ns(&a.n)?,
            l: a.l,
            base: a.base,
            d: a.d,
            grid: a.grid,
            cross_check: a.cross_check,
            spectrum: a.spectrum,
        }),
        Command::ProjectionDemo(a) => {
            let (matrix, d) = resolve_matrix(&a.matrix, a.d)?;
            let gamma_directions = if a.gamma_dirs.is_empty() {
                (1..=d)
                    .map(|k| parse_directions(&[format!("e{k}")], d))
                    .collect::<Result<Vec<_>>>()?
                    .concat()
            } else {
                parse_directions(&a.gamma_dirs, d)?
            };
            RunConfig::ProjectionDemo(ProjectionConfig {
                matrix,
                d,
                sphere_count: a.sphere_count,
                seed: a.seed,
                gamma_directions,
                eps: a.eps,
                ts: a.ts,
                cap_tol: a.cap_tol,
                tol: a.tol,
                limit: parse_limit(&a.limit)?,
            })
        }
        Command::TransferCheck(a) => {
            let direction = parse_directions(std::slice::from_ref(&a.dir), a.d)?;
            if direction.len() != 1 {
                bail!("transfer-check takes a single direction");
            }
            RunConfig::TransferCheck(TransferConfig {
                symbol: resolve_symbol(&a.symbol, a.d)?,
                direction: direction.into_iter().next().unwrap_or_default(),
                growth: parse_growth(&a.growth)?,
                ts: a.ts,
                resolution: a.resolution,
            })
        }
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config = resolve(cli.command)?;
    let artifacts = execute(&config)?;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(dir, "config.json", &(serde_json::to_string_pretty(&config)? + "\n"))?;
        for (name, contents) in &artifacts.files {
            write_file(dir, name, contents)?;
        }
    }
    println!("{}", serde_json::to_string_pretty(&artifacts.summary)?);
    Ok(artifacts.outcome)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CannotConclude(why)) => {
            eprintln!("{why}");
            ExitCode::from(2)
        }
        Ok(Outcome::Failed(why)) => {
            eprintln!("{why}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
