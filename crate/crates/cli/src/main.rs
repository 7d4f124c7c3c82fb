use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridts_cli::commands::{self, InputKind, SynthOptions};
use gridts_cli::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "gridts", version, about = "Grid-partitioned Takagi-Sugeno fuzzy regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train grid-partitioned models from a config file.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Predict with a trained model.
    Predict {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Append one contribution column per rule.
        #[arg(long)]
        explain: bool,
        /// Input is a raw membrane table to be engineered first.
        #[arg(long)]
        raw: bool,
    },
    /// Fit the grid model and the clustering baseline side by side.
    Compare {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Print the rules of a model and export membership curves.
    Report {
        #[arg(short, long)]
        model: PathBuf,
        /// Directory for the per-feature membership CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a planted model.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        skew: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use this model file as the truth.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also save the truth as a model file.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = PipelineConfig::load(&config)?;
            for o in commands::cmd_train(&cfg)? {
                let m = &o.report.metrics;
                println!(
                    "{}: {} of {} rules, lambda {:.4}, test MAE {:.4} ({:.2}% of range)",
                    o.model_path.display(),
                    m.n_rules,
                    o.report.initial_rules,
                    o.report.lambda,
                    m.mae,
                    m.mape_range
                );
            }
        }
        Command::Predict {
            model,
            input,
            output,
            explain,
            raw,
        } => {
            let kind = if raw { InputKind::Raw } else { InputKind::Columns };
            match output {
                Some(path) => {
                    let mut buf = Vec::new();
                    commands::cmd_predict(&model, &input, kind, explain, &mut buf)?;
                    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
                    let name = path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
                    commands::write_outputs(dir, &[(name, buf)])?;
                }
                None => {
                    commands::cmd_predict(&model, &input, kind, explain, std::io::stdout().lock())?;
                }
            }
        }
        Command::Compare { config } => {
            let cfg = PipelineConfig::load(&config)?;
            for r in commands::cmd_compare(&cfg)? {
                let show = |b: &commands::BranchReport| match (&b.metrics, &b.error) {
                    (Some(m), _) => format!("MAE {:.4}, {} rules, {} parameters", m.mae, m.n_rules, m.n_parameters),
                    (None, Some(e)) => format!("failed: {e}"),
                    (None, None) => "no result".to_string(),
                };
                let key = r.config_key.map(|(a, b)| format!("MT{a} MO{b}: ")).unwrap_or_default();
                println!("{key}grid: {}", show(&r.grid));
                println!("{key}cluster: {}", show(&r.cluster));
            }
        }
        Command::Report { model, out_dir } => {
            for line in commands::cmd_report(&model, out_dir.as_deref())? {
                println!("{line}");
            }
        }
        Command::Synth {
            output,
            n,
            skew,
            noise,
            seed,
            model,
            truth_out,
        } => {
            let (data, truth) = commands::cmd_synth(&SynthOptions {
                n,
                skew,
                noise_std: noise,
                seed,
                model,
            })?;
            commands::write_dataset(&data, &output)?;
            if let Some(path) = truth_out {
                std::fs::write(&path, truth.to_json())
                    .map_err(|e| CliError::data(gridts_cli::Stage::Write, format!("{}: {e}", path.display())))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed stdout (e.g. piped into `head`) is not a failure.
        Err(e) if e.message.contains("Broken pipe") => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
