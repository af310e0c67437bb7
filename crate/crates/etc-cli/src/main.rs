//! `etc` — command-line harness for the routing domain-adaptation
//! toolkit: train a cell and save it, sweep injection layers, compare
//! ablation modes, classify new samples with a saved bundle, and
//! generate synthetic domain pairs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use etc_core::config::ExperimentConfig;
use etc_core::data::{write_csv, Domain};
use etc_core::error::StageExt;
use etc_core::experiment::{build_pair, route_samples, run_ablation, run_sweep, run_training};
use etc_core::persist::{load_bundle, save_bundle};
use etc_core::report::{emit_report, Ablation, EvalSplit, ExperimentReport};
use etc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "etc", version, about = "Domain-adaptation experiments with per-sample routing")]
struct Cli {
    /// Flat key-value experiment config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed; replaces the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports and artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "etc-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one cell at the configured layer; save bundle and report.
    Train,
    /// Sweep injection layers and lambda grid; emit the full report.
    Sweep,
    /// Evaluate full routing against the two single-head modes.
    Ablate,
    /// Classify a CSV of feature rows with a saved bundle.
    Route {
        /// Bundle file produced by `train`.
        #[arg(long, value_name = "PATH")]
        bundle: PathBuf,
        /// CSV whose rows are feature vectors (no label column).
        input: PathBuf,
        /// Skip the first input line as a header.
        #[arg(long)]
        header: bool,
    },
    /// Generate the configured domain pair as labeled CSV files.
    GenData,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train => {
            let config = load_config(&cli)?;
            let (bundle, report) = run_training(&config)?;
            fs::create_dir_all(&cli.out).map_err(|e| io_error(&cli.out, e))?;
            let bundle_path = cli.out.join("bundle.json");
            save_bundle(&bundle, &bundle_path)?;
            emit_report(&report, &cli.out)?;
            println!("trained layer {} -> {}", bundle.models.layer_index, bundle_path.display());
            print_test_table(&report);
            Ok(())
        }
        Command::Sweep => {
            let config = load_config(&cli)?;
            let outcome = run_sweep(&config)?;
            emit_report(&outcome.report, &cli.out)?;
            println!("layer  best-lambda  mean-val-macro-f1");
            let mut by_layer: Vec<(usize, f64, f64)> = Vec::new();
            for cell in &outcome.report.sweep {
                match by_layer.iter_mut().find(|(l, _, _)| *l == cell.layer_index) {
                    Some(entry) if cell.mean_val_macro_f1 > entry.2 => {
                        entry.1 = cell.lambda;
                        entry.2 = cell.mean_val_macro_f1;
                    }
                    Some(_) => {}
                    None => by_layer.push((cell.layer_index, cell.lambda, cell.mean_val_macro_f1)),
                }
            }
            for (layer, lambda, f1) in by_layer {
                println!("{layer:>5}  {lambda:>11}  {f1:.4}");
            }
            println!(
                "winner: layer {} lambda {} (val macro-F1 {:.4})",
                outcome.best.layer_index, outcome.best.lambda, outcome.best.mean_val_macro_f1
            );
            print_test_table(&outcome.report);
            Ok(())
        }
        Command::Ablate => {
            let config = load_config(&cli)?;
            let report = run_ablation(&config)?;
            emit_report(&report, &cli.out)?;
            print_test_table(&report);
            Ok(())
        }
        Command::Route { bundle, input, header } => {
            let bundle = load_bundle(&bundle)?;
            let samples = etc_core::data::load_unlabeled_csv(&input, header)?;
            let routed = route_samples(&bundle, &samples)?;
            fs::create_dir_all(&cli.out).map_err(|e| io_error(&cli.out, e))?;
            let out_path = cli.out.join("routes.csv");
            let mut w = csv_writer(&out_path)?;
            w.push_str("index,predicted,branch,m_source,m_target,tie_broken\n");
            let mut source_count = 0usize;
            for (i, (label, route)) in routed.iter().enumerate() {
                if route.branch == Domain::Source {
                    source_count += 1;
                }
                w.push_str(&format!(
                    "{i},{label},{},{},{},{}\n",
                    branch_name(route.branch), route.m_source, route.m_target, route.tie_broken
                ));
            }
            fs::write(&out_path, w).map_err(|e| io_error(&out_path, e))?;
            println!(
                "routed {} samples: {} -> source branch, {} -> target branch ({})",
                routed.len(),
                source_count,
                routed.len() - source_count,
                out_path.display()
            );
            Ok(())
        }
        Command::GenData => {
            let config = load_config(&cli)?;
            let seed = config.seeds[0];
            let pair = build_pair(&config, seed).stage("data")?;
            fs::create_dir_all(&cli.out).map_err(|e| io_error(&cli.out, e))?;
            let source_path = cli.out.join("source.csv");
            let target_path = cli.out.join("target.csv");
            write_csv(&pair.source, &source_path, false)?;
            write_csv(&pair.target, &target_path, false)?;
            println!(
                "wrote {} source and {} target samples ({} classes) to {} and {}",
                pair.source.len(),
                pair.target.len(),
                pair.source.class_count,
                source_path.display(),
                target_path.display()
            );
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| {
        Error::InvalidParameter("--config is required for this command".to_string())
    })?;
    let mut config = ExperimentConfig::load(path).stage("config")?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

/// Prints mixed-test rows of the report as a small table.
fn print_test_table(report: &ExperimentReport) {
    let mut rows: Vec<_> = report
        .runs
        .iter()
        .filter(|r| r.split == EvalSplit::Test)
        .collect();
    if rows.is_empty() {
        return;
    }
    rows.sort_by_key(|r| (r.seed, ablation_order(r.ablation)));
    println!("seed  mode              accuracy  macro-f1  routing");
    for r in rows {
        let routing = r
            .metrics
            .routing_accuracy
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{:>4}  {:<16}  {:>8.4}  {:>8.4}  {routing:>7}",
            r.seed,
            r.ablation.name(),
            r.metrics.accuracy,
            r.metrics.macro_f1
        );
    }
}

fn ablation_order(a: Ablation) -> usize {
    match a {
        Ablation::Full => 0,
        Ablation::OnlySourceHead => 1,
        Ablation::OnlyTargetHead => 2,
    }
}

fn branch_name(d: Domain) -> &'static str {
    match d {
        Domain::Source => "source",
        Domain::Target => "target",
    }
}

fn csv_writer(path: &Path) -> Result<String> {
    // Pre-flight the parent directory so failures name the path.
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(path, e))?;
    }
    Ok(String::new())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}
