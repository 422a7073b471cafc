use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use shrinker_lab::report::{
    self, CmdError, OutputFormat, RunConfig, RunOutcome,
};
use shrinker_lab::stability::VerdictTolerances;

/// Numerical laboratory for closed Lagrangian self-shrinkers: verification,
/// drift-Laplacian spectra, stability verdicts, variations, entropy.
#[derive(Parser)]
#[command(name = "shrinker-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the model against its defining equations and the weighted
    /// integral identities.
    Verify(Common),
    /// Low spectrum of the drift Laplacian with cluster structure.
    Spectrum(Common),
    /// Hamiltonian and Lagrangian stability verdicts.
    Stability(Common),
    /// Second variation of the Gaussian area for a chosen variation field.
    #[command(name = "second-variation")]
    SecondVariation {
        #[command(flatten)]
        common: Common,
        /// Variation spec: `meanCurvature`, `form:<coeffs>`, or
        /// `function:<trig expr>`.
        variation: String,
    },
    /// Entropy search over Gaussian centers and scales.
    Entropy(Common),
}

#[derive(Args)]
struct Common {
    /// Model spec, e.g. `circle`, `clifford:n=2`, `al:p=2,q=3`,
    /// `product(al:p=2,q=3;circle)`.
    #[arg(long)]
    model: String,
    /// Scalar grid resolutions (comma separated for a refinement study);
    /// defaults to the model's own.
    #[arg(long, value_delimiter = ',')]
    res: Vec<usize>,
    /// How many eigenvalues above the zero mode to compute.
    #[arg(long, default_value_t = 12)]
    eigs: usize,
    /// Eigenvalue tolerance entering the stability verdicts.
    #[arg(long = "tol-eig", default_value_t = 5e-3)]
    tol_eig: f64,
    /// Subspace-angle tolerance entering the stability verdicts.
    #[arg(long = "tol-sub", default_value_t = 5e-3)]
    tol_sub: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json, or csv (spectrum only).
    #[arg(long, default_value = "json")]
    format: String,
    /// Seed for every randomized probe in the run.
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Treat inconclusive verdicts as failures.
    #[arg(long)]
    strict: bool,
}

fn config_from(common: &Common) -> Result<RunConfig, CmdError> {
    Ok(RunConfig {
        model: common.model.clone(),
        resolutions: common.res.clone(),
        eigs: common.eigs,
        tol: VerdictTolerances {
            tol_eig: common.tol_eig,
            tol_sub: common.tol_sub,
        },
        seed: common.seed,
        strict: common.strict,
        format: OutputFormat::parse(&common.format)?,
    })
}

fn run(cmd: &Cmd) -> Result<(RunConfig, RunOutcome), CmdError> {
    let (common, outcome) = match cmd {
        Cmd::Verify(c) => (c, report::run_verify(&config_from(c)?)?),
        Cmd::Spectrum(c) => (c, report::run_spectrum(&config_from(c)?)?),
        Cmd::Stability(c) => (c, report::run_stability(&config_from(c)?)?),
        Cmd::SecondVariation { common, variation } => (
            common,
            report::run_second_variation(&config_from(common)?, variation)?,
        ),
        Cmd::Entropy(c) => (c, report::run_entropy(&config_from(c)?)?),
    };
    Ok((config_from(common)?, outcome))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                exit(0);
            }
            eprintln!("{e}");
            exit(1);
        }
    };

    match run(&cli.cmd) {
        Ok((cfg, outcome)) => {
            let rendered = match report::render(&outcome, cfg.format) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    exit(e.exit_code());
                }
            };
            let target = match &cli.cmd {
                Cmd::Verify(c)
                | Cmd::Spectrum(c)
                | Cmd::Stability(c)
                | Cmd::Entropy(c)
                | Cmd::SecondVariation { common: c, .. } => c.out.as_ref(),
            };
            match target {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &rendered) {
                        eprintln!("cannot write {}: {e}", path.display());
                        exit(1);
                    }
                }
                None => print!("{rendered}"),
            }
            if !outcome.passed {
                for f in &outcome.failures {
                    eprintln!("fail: {f}");
                }
                exit(3);
            }
        }
        Err(e) => {
            eprintln!("{e}");
            exit(e.exit_code());
        }
    }
}
