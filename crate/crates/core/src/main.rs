use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use csdswitch::csd::recovery_trials;
use csdswitch::io::{DesignFile, ExperimentConfig};
use csdswitch::linalg::{eigenvalues, Matrix};
use csdswitch::sim::{circle_points, integrate, lyapunov_trace, phase_portrait};
use csdswitch::switching::{check_coverage, quadratic_terms, SwitchingDesign};
use csdswitch::Error;

/// Final-state norm below which a trajectory counts as converged.
const CONVERGED_NORM: f64 = 1e-2;
const RECOVERY_TOL: f64 = 1e-6;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SYNTHESIS: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "csdswitch",
    version,
    about = "Switching stabilization with sparsified compressive-sensing feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a switching design from an experiment config.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "design.json")]
        out: PathBuf,
    },
    /// Simulate the switched loop and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Check that the switching regions cover the unit sphere.
    Check {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo sparse recovery statistics for the sensing device.
    CsdDemo {
        #[arg(long = "n", default_value_t = 50)]
        n: usize,
        #[arg(long = "m", default_value_t = 20)]
        m: usize,
        #[arg(long = "k", default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use a square orthogonal sensing matrix (requires M = N).
        #[arg(long)]
        orthonormal: bool,
        #[arg(long, default_value = "csd_trials.csv")]
        out: PathBuf,
    },
    /// Trajectories from points on a circle, for phase portraits.
    Portrait {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value = "portrait.csv")]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(e: Error) -> Self {
        Self::new(EXIT_CONFIG, e.to_string())
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

fn fmt_matrix(m: &Matrix) -> String {
    m.row_iter()
        .map(|r| {
            format!(
                "  [{}]",
                r.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn fmt_region(r: &Matrix) -> String {
    quadratic_terms(r)
        .iter()
        .map(|t| {
            if t.i == t.j {
                format!("{:+.6} x{}^2", t.coef, t.i + 1)
            } else {
                format!("{:+.6} x{}x{}", t.coef, t.i + 1, t.j + 1)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn load_design(path: &Path) -> Result<SwitchingDesign, Failure> {
    DesignFile::load(path).map_err(Failure::config)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn synthesize(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(Failure::config)?;
    cfg.validate().map_err(Failure::config)?;
    let design = cfg
        .synthesize()
        .map_err(|e| Failure::new(EXIT_SYNTHESIS, format!("synthesis failed: {e}")))?;
    let file = DesignFile::from_design(&design).map_err(|e| Failure::new(EXIT_SYNTHESIS, e.to_string()))?;
    std::fs::write(out, file.to_json() + "\n").map_err(|e| Failure::io(out, e))?;

    println!(
        "modes: {} (sparsity budget {})",
        design.mode_count(),
        design.class.budget()
    );
    println!("alphas: {:?}", design.alphas);
    println!("gains: {:?}", design.class.gains());
    println!("K:\n{}", fmt_matrix(&design.k));
    println!("Ktilde:\n{}", fmt_matrix(&design.ktilde));
    let eig = eigenvalues(&design.abar).map_err(|e| Failure::new(EXIT_SYNTHESIS, e.to_string()))?;
    let eig: Vec<String> = eig.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
    println!("eig(Abar): {}", eig.join(", "));
    println!("P:\n{}", fmt_matrix(&design.p));
    for (i, r) in design.regions.iter().enumerate() {
        println!("region {}: {} < 0", i + 1, fmt_region(r));
    }
    println!("design written to {}", out.display());
    Ok(())
}

fn simulate(design: &Path, config: &Path, out: &Path) -> Result<(), Failure> {
    let design = load_design(design)?;
    let cfg = ExperimentConfig::load(config).map_err(Failure::config)?;
    if cfg.sim.x0.len() != design.n() {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!("sim.x0 must have {} entries, got {}", design.n(), cfg.sim.x0.len()),
        ));
    }
    let traj = match integrate(&design, &cfg.sim) {
        Ok(t) => t,
        Err(Error::Diverged { time, norm, partial }) => {
            let mut w = create(out)?;
            partial.write_csv(&mut w).map_err(|e| Failure::io(out, e))?;
            return Err(Failure::new(
                EXIT_DIVERGENCE,
                format!("diverged at t = {time} with |x| = {norm:.3e}"),
            ));
        }
        Err(e) => return Err(Failure::config(e)),
    };
    let mut w = create(out)?;
    traj.write_csv(&mut w).map_err(|e| Failure::io(out, e))?;
    w.flush().map_err(|e| Failure::io(out, e))?;
    let trace = lyapunov_trace(&traj, &design.p);
    let final_norm = traj.final_norm();
    println!(
        "converged={} final_norm={} switches={} lyapunov_monotone={}",
        final_norm < CONVERGED_NORM,
        final_norm,
        traj.switch_count,
        trace.monotone
    );
    Ok(())
}

fn check(design: &Path, samples: usize, seed: u64) -> Result<bool, Failure> {
    let design = load_design(design)?;
    let report = check_coverage(&design, samples, seed);
    println!(
        "samples={} max_min_margin={:e} pass={}",
        report.samples, report.min_over_sphere, report.pass
    );
    println!("worst_point={:?}", report.worst_point);
    Ok(report.pass)
}

#[allow(clippy::too_many_arguments)]
fn csd_demo(
    n: usize,
    m: usize,
    k: usize,
    trials: u64,
    seed: u64,
    orthonormal: bool,
    out: &Path,
) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::new(EXIT_CONFIG, "trials must be positive"));
    }
    let records = recovery_trials(n, m, k, trials, seed, orthonormal, RECOVERY_TOL).map_err(Failure::config)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    for r in &records {
        w.serialize(r).map_err(|e| Failure::io(out, e))?;
    }
    w.flush().map_err(|e| Failure::io(out, e))?;
    let successes = records.iter().filter(|r| r.success).count();
    println!(
        "N={n} M={m} K={k} trials={trials} successes={successes} success_rate={}",
        successes as f64 / trials as f64
    );
    Ok(())
}

fn portrait(design: &Path, config: &Path, points: usize, radius: f64, out: &Path) -> Result<(), Failure> {
    let design = load_design(design)?;
    if design.n() != 2 {
        return Err(Failure::new(EXIT_CONFIG, "portrait requires a two-state design"));
    }
    let cfg = ExperimentConfig::load(config).map_err(Failure::config)?;
    let trajs = match phase_portrait(&design, &circle_points(points, radius), &cfg.sim) {
        Ok(t) => t,
        Err(e @ Error::Diverged { .. }) => return Err(Failure::new(EXIT_DIVERGENCE, e.to_string())),
        Err(e) => return Err(Failure::config(e)),
    };
    let mut w = create(out)?;
    writeln!(w, "traj,t,x1,x2,mode,V").map_err(|e| Failure::io(out, e))?;
    for (id, traj) in trajs.iter().enumerate() {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).map_err(|e| Failure::io(out, e))?;
        for line in String::from_utf8_lossy(&buf).lines().skip(1) {
            writeln!(w, "{},{line}", id + 1).map_err(|e| Failure::io(out, e))?;
        }
    }
    w.flush().map_err(|e| Failure::io(out, e))?;
    let converged = trajs.iter().filter(|t| t.final_norm() < CONVERGED_NORM).count();
    println!("trajectories={} converged={converged}", trajs.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize { config, out } => synthesize(&config, &out),
        Command::Simulate { design, config, out } => simulate(&design, &config, &out),
        Command::Check { design, samples, seed } => match check(&design, samples, seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_IO),
            Err(e) => Err(e),
        },
        Command::CsdDemo {
            n,
            m,
            k,
            trials,
            seed,
            orthonormal,
            out,
        } => csd_demo(n, m, k, trials, seed, orthonormal, &out),
        Command::Portrait {
            design,
            config,
            points,
            radius,
            out,
        } => portrait(&design, &config, points, radius, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
