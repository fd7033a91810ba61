use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hexbench::harness::{self, HarnessError, RunConfig};
use hexbench::tuning::{run_search, SearchPlan};

#[derive(Parser)]
#[command(name = "hexbench", version, about = "MAP-Elites vs PPO on a kinematic hexapod")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run from a config file.
    Run { config: PathBuf },
    /// Two-phase hyper-parameter search from a plan file; resumes if interrupted.
    Search { plan: PathBuf },
    /// Quartile curves, paired Wilcoxon test and outperform counts for two run sets.
    Compare {
        /// Side A run directories (or parents of run directories).
        #[arg(long = "a", num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        /// Side B run directories (or parents of run directories).
        #[arg(long = "b", num_args = 1.., required = true)]
        b: Vec<PathBuf>,
        /// Directory for the report CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate a stored archive or checkpoint and check its fitness.
    Replay {
        artifact: PathBuf,
        #[arg(long)]
        cell: Option<usize>,
    },
    /// Print a run's curve as `frames,performance` rows.
    DumpCurves { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = harness::workers_from_env() {
        if let Err(e) = harness::set_global_workers(n) {
            eprintln!("warning: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            let code = err.downcast_ref::<HarnessError>().map_or(3, HarnessError::exit_code);
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}

fn read(path: &PathBuf) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config } => {
            let mut cfg = RunConfig::parse(&read(&config)?).map_err(HarnessError::from)?;
            harness::apply_env_overrides(&mut cfg);
            let dir = cfg.output_dir.join(cfg.run_name());
            let record = harness::run(&cfg)?;
            println!("run dir           {}", dir.display());
            println!("frames            {}", record.frames);
            println!("final performance {}", record.final_performance);
            println!("wall clock        {:.1}s", record.wall_clock_seconds);
        }
        Command::Search { plan } => {
            let mut plan = SearchPlan::parse(&read(&plan)?).map_err(HarnessError::from)?;
            harness::apply_env_overrides(&mut plan.base);
            let report = run_search(&plan, harness::workers_from_env())?;
            println!("phase 1 ranking (config, median final):");
            for r in &report.phase1_ranking {
                println!("  {:>4}  {}", r.config, r.median);
            }
            if !report.phase2_ranking.is_empty() {
                println!("phase 2 ranking (config, median final):");
                for r in &report.phase2_ranking {
                    println!("  {:>4}  {}", r.config, r.median);
                }
            }
            println!("winner            config {}", report.winner);
            println!("runs              {} executed, {} reused", report.executed, report.reused);
            println!("frames            phase 1 {}, phase 2 {}", report.phase1_frames, report.phase2_frames);
            let failed = report.runs.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                println!("failed runs       {failed}");
            }
        }
        Command::Compare { a, b, out } => {
            let report = harness::compare(&a, &b, out.as_deref())?;
            let ma = median(&report.finals_a);
            let mb = median(&report.finals_b);
            println!("side A            {} runs, median final {ma}", report.finals_a.len());
            println!("side B            {} runs, median final {mb}", report.finals_b.len());
            if let Some(last) = report.outperform.as_ref().and_then(|p| p.last()) {
                println!("outperform count  median {} (threshold {})", last.median, last.threshold);
            }
            match report.wilcoxon {
                Ok(w) => println!(
                    "wilcoxon          W = {}, p = {}, n = {} ({})",
                    w.statistic,
                    w.p_value,
                    w.n_effective,
                    w.method.as_str()
                ),
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(e.exit_code() as u8));
                }
            }
        }
        Command::Replay { artifact, cell } => {
            let report = harness::replay(&artifact, cell)?;
            println!("{} checked, {} mismatches ({})", report.checked, report.mismatches.len(), report.kind);
            for (cell, stored, replayed) in &report.mismatches {
                let at = cell.map(|c| format!("cell {c}")).unwrap_or_else(|| "policy".into());
                println!("  {at}: stored {stored}, replayed {replayed}");
            }
            if !report.ok() {
                return Ok(ExitCode::from(3));
            }
        }
        Command::DumpCurves { run_dir } => {
            let rows = harness::load_curve(&run_dir)?;
            let mut out = std::io::BufWriter::new(std::io::stdout().lock());
            let written = (|| {
                writeln!(out, "frames,performance_meters")?;
                for (f, v) in rows {
                    writeln!(out, "{f},{v}")?;
                }
                out.flush()
            })();
            match written {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn median(xs: &[f64]) -> f64 {
    hexbench::stats::median(xs).unwrap_or(f64::NAN)
}
