use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use closeeval_core::harness::{
    exit_code, fit_rows, read_csv, run_error_map, run_hg_study, write_hg_outputs, write_outputs,
    write_summary, EpsSpec, FitSummary, Problem, StudyConfig,
};
use closeeval_core::{Error, Result};

#[derive(Parser)]
#[command(name = "closeeval", version, about = "Close-evaluation error studies for double-layer potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a 2D or 3D error study described by a JSON config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Directory for cached 3D densities.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Fit orders of accuracy to an existing results CSV.
    Fit {
        results: PathBuf,
        /// Fit window as lo:hi:per-decade (per-decade is ignored).
        #[arg(long, value_name = "LO:HI:PER-DECADE")]
        eps_range: Option<String>,
        /// Write summary.json here instead of only printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the scattering operator with its asymptotic expansion.
    Hg {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Solver resolution.
    #[arg(long)]
    n: Option<usize>,
    /// Sweep eps from hi down to lo with a fixed count per decade.
    #[arg(long, value_name = "LO:HI:PER-DECADE")]
    eps_range: Option<String>,
    /// Comma-separated methods, e.g. ptr,sub,asym2,asym3.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, config: &mut StudyConfig) -> Result<()> {
        if let Some(n) = self.n {
            config.n = Some(n);
        }
        if let Some(range) = self.eps_range {
            config.eps = Some(EpsSpec::parse_range(&range)?);
        }
        if let Some(methods) = self.methods {
            config.methods = Some(methods.into_iter().filter(|m| !m.is_empty()).collect());
        }
        if let Some(out) = self.out {
            config.output_dir = Some(out);
        }
        Ok(())
    }
}

fn print_fits(fits: &[FitSummary]) {
    for f in fits {
        println!(
            "{:>24}  {:>6}  slope {:7.3}  over [{:.1e}, {:.1e}] ({} points)",
            f.target, f.method, f.slope, f.fit_lo, f.fit_hi, f.n_points
        );
    }
}

fn run(config: &Path, overrides: Overrides, cache: Option<PathBuf>) -> Result<()> {
    let mut config = StudyConfig::from_file(config)?;
    overrides.apply(&mut config)?;
    if cache.is_some() {
        config.cache_dir = cache;
    }
    if config.problem == Problem::Hg {
        return hg_with(config);
    }
    let result = run_error_map(&config)?;
    println!(
        "{} rows, {} rejected, solve residual {:.2e}",
        result.rows.len(),
        result.rejections.len(),
        result.residual
    );
    print_fits(&result.fits);
    if let Some(dir) = &config.output_dir {
        write_outputs(&result, &config.method_names()?, dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn hg_with(config: StudyConfig) -> Result<()> {
    let result = run_hg_study(&config)?;
    for r in &result.rows {
        println!("eps {:.3e}  residual {:.3e}", r.eps, r.abs_error);
    }
    match &result.fit {
        Some(f) => print_fits(std::slice::from_ref(f)),
        None => println!("no slope: fewer than 4 residuals above the error floor"),
    }
    if let Some(dir) = &config.output_dir {
        write_hg_outputs(&result, dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn fit(results: &Path, eps_range: Option<String>, out: Option<PathBuf>) -> Result<()> {
    let rows = read_csv(results)?;
    let (lo, hi) = match eps_range.map(|r| EpsSpec::parse_range(&r)).transpose()? {
        Some(EpsSpec::Range { lo, hi, .. }) if lo > 0.0 && hi >= lo => (lo, hi),
        Some(_) => return Err(Error::Config("fit window needs 0 < lo <= hi".into())),
        None => (1e-6, 1e-2),
    };
    let fits = fit_rows(&rows, lo, hi);
    println!("{}", serde_json::to_string_pretty(&fits)?);
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        write_summary(&fits, &dir.join("summary.json"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            overrides,
            cache,
        } => run(&config, overrides, cache),
        Command::Fit {
            results,
            eps_range,
            out,
        } => fit(&results, eps_range, out),
        Command::Hg { config, overrides } => StudyConfig::from_file(&config).and_then(|mut c| {
            overrides.apply(&mut c)?;
            if c.problem != Problem::Hg {
                return Err(Error::Config("`closeeval hg` needs a config with problem \"hg\"".into()));
            }
            hg_with(c)
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
