use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hpdg::analysis::DEFAULT_PLATEAU;
use hpdg::study::{fit_command, format_fit_table, parse_config_text, run_study, solve_once, SolveOutputs, StudyConfig};
use hpdg::{Error, Result};

/// hp-graded discontinuous Galerkin eigenvalue solver for singular potentials.
#[derive(Parser)]
#[command(name = "hpdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep over refinement levels and fit exponential rates.
    Study {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Output CSV.
        #[arg(long, default_value = "study.csv")]
        out: PathBuf,
    },
    /// Fit rates to an existing study CSV.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_PLATEAU)]
        plateau: f64,
        /// Append the table to the CSV as `# fit:` lines.
        #[arg(long)]
        append: bool,
    },
    /// Solve at one level and optionally dump the field, mesh and matrices.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Sampled eigenfunction CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid points per direction for the sampled field.
        #[arg(long, default_value_t = 65)]
        grid: usize,
        /// Which eigenpair (1-based) to sample and dump.
        #[arg(long, default_value_t = 1)]
        mode: usize,
        #[arg(long)]
        mesh_out: Option<PathBuf>,
        #[arg(long)]
        matrix_out: Option<PathBuf>,
        #[arg(long)]
        mass_out: Option<PathBuf>,
        #[arg(long)]
        coefficients_out: Option<PathBuf>,
    },
}

/// Problem flags; each overrides the same key from `--config`.
#[derive(Args)]
struct ProblemArgs {
    /// `key = value` file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<String>,
    /// Potential exponent, e.g. `1`, `1/2` or `1.5`.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    slope: Option<String>,
    #[arg(long)]
    p0: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    quad_extra: Option<String>,
    #[arg(long)]
    shells: Option<String>,
    /// `A..B` or a single level.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    ref_levels: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    potential_shift: Option<String>,
}

impl ProblemArgs {
    fn resolve(&self) -> Result<StudyConfig> {
        let mut cfg = StudyConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply(&parse_config_text(&text)?)?;
        }
        let flags = [
            ("dim", &self.dim),
            ("alpha", &self.alpha),
            ("slope", &self.slope),
            ("p0", &self.p0),
            ("sigma", &self.sigma),
            ("theta", &self.theta),
            ("penalty", &self.penalty),
            ("quad_extra", &self.quad_extra),
            ("shells", &self.shells),
            ("levels", &self.levels),
            ("k", &self.k),
            ("tol", &self.tol),
            ("ref_levels", &self.ref_levels),
            ("seed", &self.seed),
            ("potential_shift", &self.potential_shift),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Study { problem, out } => {
            let cfg = problem.resolve()?;
            let summary = run_study(&cfg, &out, &mut std::io::stderr())?;
            println!("wrote {} rows to {}", summary.records.len(), out.display());
            print!("{}", format_fit_table(&summary.fits));
        }
        Command::Fit { csv, dim, plateau, append } => {
            let fits = fit_command(&csv, dim, plateau, append)?;
            print!("{}", format_fit_table(&fits));
        }
        Command::Solve { problem, out, grid, mode, mesh_out, matrix_out, mass_out, coefficients_out } => {
            let cfg = problem.resolve()?;
            let outputs = SolveOutputs {
                field: out,
                grid,
                mode,
                mesh: mesh_out,
                matrix: matrix_out,
                mass: mass_out,
                coefficients: coefficients_out,
            };
            let s = solve_once(&cfg, &outputs)?;
            println!("N = {}", s.n);
            for (i, (l, r)) in s.lambdas.iter().zip(&s.residuals).enumerate() {
                println!("lambda_{} = {l:.16e}  residual = {r:.3e}", i + 1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
