use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coldq::error::{Error, Result};
use coldq::exec::Exec;
use coldq::harness::{self, artifacts, plot, presets, ExperimentReport, HarnessConfig};

#[derive(Parser)]
#[command(name = "coldq", version, about = "Run, verify and summarize COLDQ experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// JSON config file; `-` or omitted reads stdin.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config (see `coldq presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output root; overrides the config's `output_dir`.
    #[arg(long, env = harness::OUT_ENV)]
    out: Option<PathBuf>,
    /// Run (seed, T) pairs one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, T) of a config and write its artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Print derived parameters and write nothing.
        #[arg(long)]
        dry_run: bool,
        /// Force verification on.
        #[arg(long, conflicts_with = "no_verify")]
        verify: bool,
        /// Force verification off.
        #[arg(long)]
        no_verify: bool,
    },
    /// Re-check the artifacts of a previous run.
    Verify {
        #[command(flatten)]
        source: Source,
    },
    /// Aggregate trace CSVs into long-format `t,series,value` data.
    Plotdata {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// List presets, or print one as JSON.
    Presets { name: Option<String> },
}

fn load_config(source: &Source) -> Result<HarnessConfig> {
    if let Some(name) = &source.preset {
        return presets::load(name);
    }
    let text = match &source.config {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    HarnessConfig::from_json(&text)
}

fn exec_for(source: &Source) -> Exec {
    if source.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn report(rep: &ExperimentReport) -> ExitCode {
    for run in &rep.runs {
        let m = &run.metrics;
        println!(
            "{}: cum_loss={} reg_d={} vio_h={} vio_s={}",
            run.stem, m.cum_loss, m.reg_d, m.vio_h, m.vio_s
        );
        for c in run.checks.iter().flat_map(|c| &c.checks) {
            println!("  {}", c.summary());
        }
    }
    for c in &rep.scaling {
        println!("{}", c.summary());
    }
    if rep.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("one or more checks failed");
        ExitCode::from(1)
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            source,
            dry_run,
            verify,
            no_verify,
        } => {
            let mut cfg = load_config(&source)?;
            if verify {
                cfg.verify = true;
            }
            if no_verify {
                cfg.verify = false;
            }
            if dry_run {
                let doc = serde_json::json!({
                    "config": cfg,
                    "config_hash": cfg.hash(),
                    "derived": harness::derive(&cfg)?,
                });
                println!("{}", serde_json::to_string_pretty(&doc)?);
                return Ok(ExitCode::SUCCESS);
            }
            let out = cfg.output_root(source.out.as_deref());
            let rep = harness::run_experiment(&cfg, &out, exec_for(&source))?;
            Ok(report(&rep))
        }
        Command::Verify { source } => {
            let cfg = load_config(&source)?;
            let out = cfg.output_root(source.out.as_deref());
            let rep = harness::verify_experiment(&cfg, &out, exec_for(&source))?;
            Ok(report(&rep))
        }
        Command::Plotdata { out, traces } => {
            let data = plot::plot_data(&traces)?;
            match out {
                Some(p) => artifacts::write_atomic(&p, data.as_bytes())?,
                None => print!("{data}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name: None } => {
            for p in presets::PRESETS {
                println!("{:8} {}", p.name, p.summary);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name: Some(name) } => {
            print!("{}", presets::find(&name)?.json);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
