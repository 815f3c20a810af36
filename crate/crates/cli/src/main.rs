//! Benchmark CLI for collaborative top-m arm identification.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use topm::bench::{
    sweep, trial_transcript, write_aggregate_csv, write_transcript_jsonl, write_trial_csv,
    AggregateRow, FlatConfig, InstanceSource,
};
use topm::calibrate::calibrate_best_arm;
use topm::props::{
    hard_family_suite, lemma_far_arm_suite, lemma_pivot_shift_suite, lemma_sandwich_suite,
    PropReport,
};

#[derive(Parser)]
#[command(
    name = "topm",
    about = "Collaborative top-m arm identification benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance (plus sidecar annotation for structured
    /// families) and write it as JSON.
    Gen {
        /// Generator spec: random:..., hard:..., bias:... (see README).
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Sidecar annotation JSON path (structured families only).
        #[arg(long)]
        annotation: Option<PathBuf>,
    },
    /// Run one experiment point and report per-trial plus aggregate stats.
    Run {
        /// Flat key=value config file; CLI flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Instance source (file path or generator spec).
        #[arg(long)]
        instance: Option<String>,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        budget: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-trial table output (.csv or .json by extension).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Aggregate row output (.csv or .json by extension).
        #[arg(long)]
        aggregate: Option<PathBuf>,
        /// Dump trial 0's transcript as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Cross-product sweep over algos/ks/budgets, resumable by row hash.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (appended atomically row by row).
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe where the verified best-arm search flips between refusal and
    /// success and report the implied budget constants.
    Calibrate {
        /// Instance source; defaults to a three-arm staircase.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the randomized property suites over the complexity calculus and
    /// the hard instance family.
    VerifyProps {
        /// all | sandwich | pivot-shift | far-arm | hard
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        hard_max_n: usize,
    },
}

fn load_config(
    path: &Option<PathBuf>,
    overrides: &[(&str, Option<String>)],
) -> Result<FlatConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            FlatConfig::parse(&text)?
        }
        None => FlatConfig::default(),
    };
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.0.insert((*key).to_string(), v.clone());
        }
    }
    Ok(cfg)
}

fn print_prop(report: &PropReport) -> bool {
    println!(
        "{:<16} cases={:<6} violations={} {}",
        report.name,
        report.cases,
        report.violations,
        if report.ok() { "PASS" } else { "FAIL" }
    );
    if let Some(first) = &report.first_failure {
        println!("  first failure: {first}");
    }
    report.ok()
}

fn write_rows(path: &PathBuf, rows: &[AggregateRow]) -> Result<()> {
    let json = path.extension().is_some_and(|e| e == "json");
    let mut f = std::fs::File::create(path)?;
    if json {
        serde_json::to_writer_pretty(&mut f, rows)?;
        writeln!(f)?;
    } else {
        write_aggregate_csv(&mut f, rows)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen {
            source,
            seed,
            out,
            annotation,
        } => {
            let src = InstanceSource::parse(&source)?;
            let (inst, m, sidecar) = src.materialize(seed)?;
            let file = inst.to_file(m);
            std::fs::write(&out, serde_json::to_string(&file)?)?;
            println!("wrote {} arms (m={m}) to {}", inst.len(), out.display());
            match (annotation, sidecar) {
                (Some(path), Some(side)) => {
                    std::fs::write(&path, serde_json::to_string_pretty(&side)?)?;
                    println!("wrote annotation to {}", path.display());
                }
                (Some(_), None) => bail!("source {source:?} has no annotation"),
                _ => {}
            }
        }
        Cmd::Run {
            config,
            instance,
            algo,
            k,
            budget,
            trials,
            seed,
            out,
            aggregate,
            transcript,
        } => {
            let cfg = load_config(
                &config,
                &[
                    ("instance", instance),
                    ("algo", algo),
                    ("k", k.map(|v| v.to_string())),
                    ("budget", budget),
                    ("trials", trials.map(|v| v.to_string())),
                    ("seed", seed.map(|v| v.to_string())),
                ],
            )?;
            let Some(source) = cfg.get("instance") else {
                bail!("no instance source (set instance= in the config or pass --instance)");
            };
            let src = InstanceSource::parse(source)?;
            let exp = cfg.experiment()?;
            let (inst, m, _) = src.materialize(exp.master_seed)?;
            let (reports, row) = topm::bench::run_experiment(&inst, m, &exp)?;
            println!(
                "{} on n={} m={} K={} {}: success {}/{} ({:.3} [{:.3}, {:.3}]), \
                 rounds mean {:.2} max {}, time mean {:.1} max {}, speedup {:.3}",
                row.algo,
                row.n,
                row.m,
                row.k,
                row.budget,
                row.successes,
                row.trials,
                row.success_rate,
                row.wilson_lo,
                row.wilson_hi,
                row.mean_rounds,
                row.max_rounds,
                row.mean_time,
                row.max_time,
                row.speedup
            );
            if let Some(path) = out {
                if path.extension().is_some_and(|e| e == "json") {
                    let mut f = std::fs::File::create(&path)?;
                    serde_json::to_writer_pretty(&mut f, &reports)?;
                    writeln!(f)?;
                } else {
                    write_trial_csv(std::fs::File::create(&path)?, &reports)?;
                }
                println!("wrote trials to {}", path.display());
            }
            if let Some(path) = aggregate {
                write_rows(&path, std::slice::from_ref(&row))?;
                println!("wrote aggregate to {}", path.display());
            }
            if let Some(path) = transcript {
                let records = trial_transcript(&inst, m, &exp, 0)?;
                write_transcript_jsonl(std::fs::File::create(&path)?, &records)?;
                println!("wrote trial-0 transcript to {}", path.display());
            }
        }
        Cmd::Sweep { config, out } => {
            let cfg = load_config(&Some(config), &[])?;
            let Some(source) = cfg.get("instance") else {
                bail!("sweep config needs instance=");
            };
            let src = InstanceSource::parse(source)?;
            let exp = cfg.experiment()?;
            let grid = cfg.sweep_grid()?;
            let (inst, m, _) = src.materialize(exp.master_seed)?;
            let rows = sweep(&inst, m, &exp, &grid, &out)?;
            println!(
                "swept {} new point(s) ({} total in grid) into {}",
                rows.len(),
                grid.points().len(),
                out.display()
            );
        }
        Cmd::Calibrate {
            instance,
            k,
            delta,
            trials,
            seed,
        } => {
            let src = InstanceSource::parse(
                instance.as_deref().unwrap_or("random:n=3,m=1,gap_min=0.3"),
            )?;
            let (inst, _, _) = src.materialize(seed)?;
            let consts = topm::Constants::default();
            let rep = calibrate_best_arm(&inst, &consts, k, delta, trials)?;
            println!(
                "K={} trials={}: success from eta={}, refusal up to eta={}",
                rep.k, rep.trials, rep.eta_success, rep.eta_refuse
            );
            println!(
                "implied constants: C_f ~ {:.4} (default {}), C_g ~ {:.4} (default {})",
                rep.implied_c_f, consts.c_f, rep.implied_c_g, consts.c_g
            );
        }
        Cmd::VerifyProps {
            suite,
            cases,
            seed,
            hard_max_n,
        } => {
            let mut all_ok = true;
            let run = |name: &str| suite == "all" || suite == name;
            if run("sandwich") {
                all_ok &= print_prop(&lemma_sandwich_suite(cases, seed));
            }
            if run("pivot-shift") {
                all_ok &= print_prop(&lemma_pivot_shift_suite(cases, seed));
            }
            if run("far-arm") {
                all_ok &= print_prop(&lemma_far_arm_suite(cases, seed));
            }
            if run("hard") {
                all_ok &= print_prop(&hard_family_suite(seed, hard_max_n));
            }
            if !all_ok {
                bail!("property suite failed");
            }
        }
    }
    Ok(())
}
