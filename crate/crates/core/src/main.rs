use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ocpfem::problems::BcOption;
use ocpfem::study::{run_study, OutputFormat, StudyConfig};
use ocpfem::{Error, Mesh};

#[derive(Parser, Debug)]
#[command(name = "ocpfem", version, about = "Convergence studies for finite element optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a convergence study and write the table.
    Study(StudyArgs),
    /// Write a structured mesh of the unit square/cube as text.
    ExportMesh {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        level: usize,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct StudyArgs {
    /// key = value file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Inclusive range `a..b` or list `a,b,c`.
    #[arg(long)]
    levels: Option<String>,
    /// Comma-separated subset of control_L2, control_weightedL2, control_l2vec, state_Linf, state_L2.
    #[arg(long)]
    norms: Option<String>,
    #[arg(long)]
    format: Option<String>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bc: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Relative residual tolerance of the linear solver.
    #[arg(long)]
    rtol: Option<f64>,
}

fn study_config(args: &StudyArgs) -> Result<StudyConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => StudyConfig::from_file(path)?,
        None => StudyConfig::default(),
    };
    if let Some(p) = &args.problem {
        cfg.set("problem", p)?;
    }
    if let Some(l) = &args.levels {
        cfg.set("levels", l)?;
    }
    if let Some(n) = &args.norms {
        cfg.set("norms", n)?;
    }
    if let Some(f) = &args.format {
        cfg.format = f.parse::<OutputFormat>()?;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(b) = &args.bc {
        cfg.build.bc = b.parse::<BcOption>()?;
    }
    if let Some(l) = args.lambda {
        cfg.build.lambda = l;
    }
    if let Some(a) = args.alpha {
        cfg.build.alpha = a;
    }
    if let Some(r) = args.rtol {
        cfg.solver.linear_rtol = r;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Study(args) => {
            let cfg = study_config(&args)?;
            match run_study(&cfg) {
                Ok(table) => {
                    if cfg.out.is_none() {
                        print!("{}", table.render(cfg.format));
                    }
                    Ok(())
                }
                Err(Error::StudyAborted { level, partial, source }) => {
                    eprint!("{}", partial.render(cfg.format));
                    Err(Error::StudyAborted { level, partial, source })
                }
                Err(e) => Err(e),
            }
        }
        Command::ExportMesh { dim, level, out } => {
            let mesh = Mesh::unit(dim, level)?;
            match out {
                Some(path) => mesh.write_text(BufWriter::new(File::create(path)?)),
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    mesh.write_text(&mut lock)?;
                    lock.flush()?;
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
