//! Problem files in, reports out: run the check suite, or query
//! residuals and Legendre images at chosen points.

use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fieldtriple::dynamics::{
    el_residual, hdw_residual_transported, hessian_regularity, induced_hamiltonian, legendre_ext,
    legendre_red, DynError,
};
use fieldtriple::geometry::PointJ1;
use fieldtriple::problem::ProblemFile;
use fieldtriple::verify::{full_suite, reports_to_json, CheckStatus, ProblemSpec};

#[derive(Parser)]
#[command(name = "fieldtriple", version, about = "Field-theory problem files in, certified check reports out")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every check against a problem file.
    Check(CheckArgs),
    /// Print field-equation residuals for a named section at a base point.
    Residual(ResidualArgs),
    /// Print the Legendre images and Hessian regularity at a jet point.
    Legendre(LegendreArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Problem file (JSON, schema 1).
    path: PathBuf,
    /// Also write the reports as a JSON array to this path.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Override the file's sample seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the file's sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the equality and field-equation tolerances.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ResidualArgs {
    /// Problem file (JSON, schema 1).
    path: PathBuf,
    /// Name of a section from the problem file.
    #[arg(long)]
    section: String,
    /// Base point, comma-separated: "x1,x2,...".
    #[arg(long)]
    at: String,
}

#[derive(Args)]
struct LegendreArgs {
    /// Problem file (JSON, schema 1).
    path: PathBuf,
    /// Jet point, comma-separated: base coordinates, fibre coordinates,
    /// then the jet entries row by row.
    #[arg(long)]
    at: String,
}

fn main() -> ExitCode {
    // Die quietly when the read end of a pipe closes, like other
    // line-oriented tools, instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Check(args) => cmd_check(args),
        Cmd::Residual(args) => cmd_residual(args),
        Cmd::Legendre(args) => cmd_legendre(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn load_spec(path: &Path) -> Result<ProblemSpec, Box<dyn Error>> {
    Ok(ProblemFile::from_path(path)?.into_spec()?)
}

fn parse_point(src: &str, expected: usize, what: &str) -> Result<Vec<f64>, Box<dyn Error>> {
    let coords: Vec<f64> = src
        .split(',')
        .map(|part| part.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("cannot parse {what} {src:?}: {e}"))?;
    if coords.len() != expected {
        return Err(format!("{what} needs {expected} coordinates, got {}", coords.len()).into());
    }
    Ok(coords)
}

fn status_str(status: CheckStatus) -> &'static str {
    match status {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "fail",
        CheckStatus::Skipped => "skipped",
    }
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode, Box<dyn Error>> {
    let mut spec = load_spec(&args.path)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(samples) = args.samples {
        spec.sample_count = samples;
    }
    if let Some(tol) = args.tol {
        spec.tolerances.tau_eq = tol;
        spec.tolerances.tau_pde = tol;
    }

    let reports = full_suite(&spec);
    let name_w = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    println!("{:<name_w$}  {:<7}  {:<10}  {:<10}  location", "name", "status", "violation", "tolerance");
    let mut passed = 0;
    let mut failed = 0;
    let mut skipped = 0;
    let mut seconds = 0.0;
    for r in &reports {
        println!(
            "{:<name_w$}  {:<7}  {:<10.3e}  {:<10.3e}  {}",
            r.name,
            status_str(r.status),
            r.violation,
            r.tolerance,
            r.location
        );
        seconds += r.seconds;
        match r.status {
            CheckStatus::Pass => passed += 1,
            CheckStatus::Fail => failed += 1,
            CheckStatus::Skipped => skipped += 1,
        }
    }
    println!("{passed} passed, {failed} failed, {skipped} skipped in {seconds:.2}s");

    if let Some(path) = &args.json {
        std::fs::write(path, reports_to_json(&reports))
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }

    if reports.iter().any(|r| r.name == "configuration") {
        return Ok(ExitCode::from(2));
    }
    if failed > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_residual(args: ResidualArgs) -> Result<ExitCode, Box<dyn Error>> {
    let spec = load_spec(&args.path)?;
    let x = parse_point(&args.at, spec.dims.m, "base point")?;
    let Some((_, phi)) = spec.sections.iter().find(|(name, _)| *name == args.section) else {
        let known: Vec<&str> = spec.sections.iter().map(|(n, _)| n.as_str()).collect();
        return Err(format!(
            "unknown section {:?}; the file defines: {}",
            args.section,
            if known.is_empty() { "(none)".into() } else { known.join(", ") }
        )
        .into());
    };

    let Some(lag) = &spec.lagrangian else {
        return Err("residuals need a lagrangian in the problem file".into());
    };

    let el = el_residual(lag, phi, &x)?;
    println!("euler-lagrange residual:");
    for (a, v) in el.iter().enumerate() {
        println!("  u{}: {:.16e}", a + 1, v);
    }

    let ham = match &spec.hamiltonian {
        Some(h) => Some(h.clone()),
        None => Some(induced_hamiltonian(lag)),
    };
    if let Some(ham) = &ham {
        match hdw_residual_transported(lag, ham, phi, &x) {
            Ok(hdw) => {
                let (m, n) = (spec.dims.m, spec.dims.n);
                println!("hamilton-de donder-weyl residual:");
                for a in 0..n {
                    for i in 0..m {
                        println!("  u{}_{}: {:.16e}", a + 1, i + 1, hdw[a * m + i]);
                    }
                }
                for a in 0..n {
                    println!("  p{}: {:.16e}", a + 1, hdw[n * m + a]);
                }
            }
            Err(DynError::SingularHessian { .. }) => {
                println!("hamilton-de donder-weyl residual: skipped (momenta are not invertible at this jet)");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_legendre(args: LegendreArgs) -> Result<ExitCode, Box<dyn Error>> {
    let spec = load_spec(&args.path)?;
    let Some(lag) = &spec.lagrangian else {
        return Err("the legendre map needs a lagrangian in the problem file".into());
    };
    let (m, n) = (spec.dims.m, spec.dims.n);
    let coords = parse_point(&args.at, m + n + n * m, "jet point")?;
    let z = PointJ1 {
        x: coords[..m].to_vec(),
        u: coords[m..m + n].to_vec(),
        ujet: (0..n).map(|a| coords[m + n + a * m..m + n + (a + 1) * m].to_vec()).collect(),
    };

    let ext = legendre_ext(lag, &z)?;
    println!("extended legendre image:");
    println!("  p: {:.16e}", ext.p);
    for a in 0..n {
        for i in 0..m {
            println!("  p{}_{}: {:.16e}", a + 1, i + 1, ext.pmom[a][i]);
        }
    }

    let red = legendre_red(lag, &z)?;
    println!("reduced legendre image:");
    for a in 0..n {
        for i in 0..m {
            println!("  p{}_{}: {:.16e}", a + 1, i + 1, red.pmom[a][i]);
        }
    }

    let reg = hessian_regularity(lag, &z)?;
    if reg.regular {
        println!(
            "regularity: regular (singular values {:.3e} .. {:.3e})",
            reg.min_singular_value, reg.max_singular_value
        );
    } else {
        println!(
            "regularity: singular (singular values {:.3e} .. {:.3e})",
            reg.min_singular_value, reg.max_singular_value
        );
    }
    Ok(ExitCode::SUCCESS)
}
