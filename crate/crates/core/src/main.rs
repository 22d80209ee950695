use clap::{Parser, Subcommand, ValueEnum};
use lcflow::bvp1d::global_min_1d;
use lcflow::config::RunConfig;
use lcflow::eulerflow::{fixtures, flow_report_with, FlowReport};
use lcflow::io;
use lcflow::pipeline::{Pipeline, Report};
use lcflow::{Error, Mode, ProblemSpec};
use log::info;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lcflow", version, about = "Least-total-curvature Euler flows in a strip")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured mode.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Output directory.
    #[arg(long, global = true, env = "LCFLOW_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reuse checkpoints whose configuration key matches.
    #[arg(long, global = true)]
    resume: bool,
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    Shear,
    Cellular,
}

#[derive(Subcommand)]
enum Command {
    /// Global minimizer of the one-dimensional energy at one coupling.
    Solve1d {
        #[arg(long)]
        lambda: f64,
    },
    /// Critical coupling and minimizer pair on the fine grid.
    LambdaStar,
    /// Heteroclinic minimizer by continuation in the strip length.
    Solve2d,
    /// Velocity, pressure and flow checks.
    Flow,
    /// Runs the pipeline (or a closed-form fixture) and exits 4 on a failed check.
    Verify {
        #[arg(long, value_enum)]
        fixture: Option<Fixture>,
    },
    /// Non-convexity witness for one superlevel set.
    Witness {
        #[arg(long)]
        alpha: f64,
    },
    /// Level curves and streamlines as CSV and SVG.
    PlotData,
    /// Writes report.json from existing checkpoints, computing what is missing.
    Report,
    /// Every stage from scratch (or from checkpoints with --resume).
    Run,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Verification(String),
    Exit(u8, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("plain data"));
}

/// Maps a finished pipeline report to the process outcome.
fn report_outcome(r: &Report, require_verified: bool) -> Result<(), Failure> {
    if let Some(e) = &r.error {
        let msg = format!("stage `{}` failed: {}", e.stage, e.message);
        return Err(Failure::Exit(if e.numerical { 3 } else { 1 }, msg));
    }
    if require_verified && !r.verified {
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}

#[derive(Serialize)]
struct FixtureOutcome {
    fixture: &'static str,
    report: FlowReport,
    pass: bool,
}

fn verify_fixture(f: Fixture, cfg: &RunConfig) -> Result<(), Failure> {
    let hx = cfg.strip2d.hx;
    let ny = cfg.grid.m_2d + 1;
    let margin = cfg.continuation.end_margin;
    let (name, v, mode) = match f {
        Fixture::Shear => ("shear", fixtures::shear(8.0, hx, ny, |y| 1.0 + y), None),
        Fixture::Cellular => ("cellular", fixtures::cellular(8.0, hx, ny, margin), Some(Mode::Zero)),
    };
    let report = flow_report_with(&v, mode, &cfg.flow);
    let t = &cfg.verify;
    // The curvature identity needs shear limits at both ends, so it only
    // applies to the shear fixture.
    let pass = report.is_well_formed()
        && report.divergence <= t.max_divergence
        && report.slip <= t.max_slip
        && report.euler_residual_scaled <= t.max_euler_residual_scaled
        && (matches!(f, Fixture::Cellular)
            || (report.curvature_relative_gap <= t.max_curvature_gap
                && report.balancing_defect_relative <= t.max_balancing_defect));
    print_json(&FixtureOutcome { fixture: name, report, pass });
    if pass {
        Ok(())
    } else {
        Err(Failure::Verification(format!("fixture `{name}` failed its checks")))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::for_mode(cli.mode.unwrap_or(Mode::Ramp)),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m;
        cfg.validate()?;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Command::Verify { fixture: Some(f) } = cli.command {
        return verify_fixture(f, &cfg);
    }
    let downstream = !matches!(cli.command, Command::Run | Command::Solve1d { .. } | Command::LambdaStar);
    let mut p = Pipeline::new(cfg.clone(), cli.out.clone(), cli.resume || downstream);
    std::fs::create_dir_all(&p.out).map_err(Error::from)?;
    info!("output directory {}", p.out.display());
    let result = match cli.command {
        Command::Solve1d { lambda } => {
            if !lambda.is_finite() {
                return Err(Failure::Usage("--lambda must be finite".into()));
            }
            let spec = ProblemSpec::new(cfg.mode, lambda);
            let g = global_min_1d(&spec, &cfg.bvp1d)?;
            let path = p.path(&format!("solve1d_{lambda}.csv"));
            io::write_atomic(&path, &io::profile_csv(&g.argmin))?;
            print_json(&serde_json::json!({
                "lambda": lambda,
                "m_lambda": g.m_lambda,
                "sup_norm": g.argmin.sup_norm(),
                "basins": g.basins.iter().map(|b| serde_json::json!({
                    "energy": b.energy, "sup_norm": b.sup_norm, "trivial": b.trivial
                })).collect::<Vec<_>>(),
                "failed_starts": g.failed_starts,
                "profile": path,
            }));
            Ok(())
        }
        Command::LambdaStar => {
            print_json(&p.stage_bvp1d()?);
            Ok(())
        }
        Command::Solve2d => {
            let pair = p.stage_pair()?;
            print_json(&p.stage_strip(&pair)?.1);
            Ok(())
        }
        Command::Flow => {
            let pair = p.stage_pair()?;
            let (u, _) = p.stage_strip(&pair)?;
            let (_, report, sign) = p.stage_flow(&u, pair.lambda_used)?;
            print_json(&serde_json::json!({ "flow": report, "sign_pattern": sign }));
            Ok(())
        }
        Command::Witness { alpha } => {
            if !(alpha > 0.0) {
                return Err(Failure::Usage("--alpha must be positive".into()));
            }
            let pair = p.stage_pair()?;
            let (u, _) = p.stage_strip(&pair)?;
            let entries = p.stage_witness(&u, &[alpha])?;
            print_json(&entries);
            Ok(())
        }
        Command::PlotData => {
            let pair = p.stage_pair()?;
            let (u, _) = p.stage_strip(&pair)?;
            let (v, _, _) = p.stage_flow(&u, pair.lambda_used)?;
            print_json(&p.stage_plot(&u, &v)?);
            Ok(())
        }
        Command::Verify { .. } | Command::Report | Command::Run => {
            let verify = matches!(cli.command, Command::Verify { .. });
            let out = p.run();
            print_json(&out.report);
            report_outcome(&out.report, verify)
        }
    };
    let _ = p.write_timings();
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(4)
        }
        Err(Failure::Exit(code, m)) => {
            eprintln!("error: {m}");
            ExitCode::from(code)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            let code = match e.root() {
                Error::Config(_) | Error::InvalidArgument(_) => 2,
                _ if e.is_numerical() => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
