use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dielectric_core::config::RunConfig;
use dielectric_core::pipeline::{self, json_output, write_outputs, Header, Output};
use dielectric_core::verify;
use dielectric_core::Error;

#[derive(Parser)]
#[command(name = "dielectric", version, about = "Dielectric response of a periodic crystal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band structure on the configured k-grid
    Bands(Common),
    /// Permittivity tensor at the configured frequencies
    Epsilon(Common),
    /// Driven Maxwell modes for the configured sources
    Maxwell(Common),
    /// Time-domain kernel trace and its Fourier cross-check
    Kernels(Common),
    /// Acceptance suite; exit status 0 iff every criterion passes
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Proceed when the spectrum has no gap
    #[arg(long)]
    override_gap_check: bool,
    /// Broadening of the sampled frequencies (overrides the config)
    #[arg(long, value_name = "X")]
    gamma: Option<f64>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(g) = self.gamma {
            if g.is_nan() || g < 0.0 {
                return Err(Error::InvalidFrequency(format!("broadening must be non-negative, got {g}")));
            }
            if let Some(f) = cfg.frequencies.as_mut() {
                f.set_gamma(g);
            }
        }
        Ok(cfg)
    }

    fn output_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.output
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let common = match &cli.command {
        Command::Bands(c) | Command::Epsilon(c) | Command::Maxwell(c) | Command::Kernels(c) | Command::Verify(c) => c,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = common.load()?;
    let gap = common.override_gap_check;
    let (outputs, ok): (Vec<Output>, bool) = match &cli.command {
        Command::Bands(_) => (pipeline::run_bands(&cfg, gap)?, true),
        Command::Epsilon(_) => (pipeline::run_epsilon(&cfg, gap)?, true),
        Command::Maxwell(_) => (pipeline::run_maxwell(&cfg, gap)?, true),
        Command::Kernels(_) => (pipeline::run_kernels(&cfg, gap)?, true),
        Command::Verify(_) => {
            let results = verify::run_all(&cfg);
            for r in &results {
                println!("{}", r.line());
            }
            let ok = results.iter().all(|r| r.passed);
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria passed", results.len());
            (vec![json_output("verify.json", &Header::new(&cfg), &results)?], ok)
        }
    };
    let dir = common.output_dir(&cfg);
    write_outputs(&dir, &outputs)?;
    for o in &outputs {
        log::info!("wrote {}", dir.join(&o.name).display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
