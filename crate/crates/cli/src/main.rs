//! `commsim`: train, evaluate, sweep and self-check from scenario files.
//!
//! Exit codes: 0 success, 1 invalid input or runtime error, 2 a verification
//! suite failed.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use commsim_core::agent::Networks;
use commsim_core::config::{ScenarioConfig, ThresholdSetting};
use commsim_core::experiment::{
    evaluate_episodes, eval_seeds, select_entropy_threshold, sweep, train_scenario, EvalSummary, SweepAxis,
    SweepRow,
};
use commsim_core::simulator::{run_episodes, Mode, SimConfig};
use commsim_core::verify;
use commsim_core::{Error, Result};

/// Version of the metrics JSONL and CSV layouts written by this tool.
const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "commsim", version, about = "Latency-aware multi-agent communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML file; the built-in Predator-Prey scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Episode worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train networks and write metrics, checkpoints and a run manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write a checkpoint every N iterations.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Evaluate a checkpoint and write a one-row summary CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Evaluate under a different mode than the config names.
        #[arg(long)]
        mode: Option<Mode>,
        /// Also write every episode trace as JSONL.
        #[arg(long)]
        traces: bool,
    },
    /// Evaluate along one axis and write a per-point table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// bandwidth, power, pathloss, maxwait or entropy_threshold.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated absolute values; the axis default grid when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// `MODE=PATH` pairs. Without any, each mode in `--modes` is trained
        /// once from the config before sweeping.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<String>,
        /// Modes to evaluate at every grid point.
        #[arg(long, value_delimiter = ',', default_value = "vil2c,avg,fc")]
        modes: Vec<Mode>,
        /// Evaluation episodes per grid point and mode.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Train fresh networks at every grid point instead of sweeping fixed
        /// checkpoints.
        #[arg(long)]
        train_per_point: bool,
    },
    /// Run a self-check suite; exits with status 2 on failure.
    Verify {
        suite: Suite,
        /// Seed of the random instances.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the suite's CSV.
        #[arg(long, default_value = "runs/verify")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Alloc,
    Theory,
    Gradients,
}

fn main() -> ExitCode {
    // Usage errors exit with 1 so that 2 always means a failed suite.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train {
            common,
            checkpoint_every,
        } => cmd_train(&common, checkpoint_every).map(|_| true),
        Command::Eval {
            common,
            checkpoint,
            episodes,
            mode,
            traces,
        } => cmd_eval(&common, &checkpoint, episodes, mode, traces).map(|_| true),
        Command::Sweep {
            common,
            axis,
            grid,
            checkpoints,
            modes,
            episodes,
            train_per_point,
        } => cmd_sweep(&common, axis, grid, &checkpoints, &modes, episodes, train_per_point).map(|_| true),
        Command::Verify { suite, seed, out } => cmd_verify(suite, seed, &out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.workers == 0 {
        return Err(Error::Config("--workers must be >= 1".into()));
    }
    cfg.train.workers = common.workers;
    Ok(cfg)
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the resolved config and a manifest naming its hash, the seed and
/// the tool version.
fn write_manifest(out: &Path, command: &str, cfg: &ScenarioConfig, extra: serde_json::Value) -> Result<()> {
    let text = cfg.to_toml_string()?;
    write_text(&out.join("config.toml"), &text)?;
    let manifest = json!({
        "schema": "commsim-manifest",
        "version": OUTPUT_SCHEMA_VERSION,
        "tool": env!("CARGO_PKG_NAME"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.seed,
        "config_file": "config.toml",
        "config_sha256": sha256_hex(&text),
        "details": extra,
    });
    let pretty = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("manifest.json"), &(pretty + "\n"))
}

fn save_checkpoint(nets: &Networks, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    nets.write_checkpoint(&mut f)?;
    f.flush().map_err(io_err(path))
}

fn load_checkpoint(cfg: &ScenarioConfig, path: &Path) -> Result<Networks> {
    let mut nets = cfg.init_networks(cfg.seed);
    let f = File::open(path).map_err(io_err(path))?;
    nets.load_checkpoint(BufReader::new(f))
        .map_err(|e| Error::Config(format!("checkpoint {} does not fit the config: {e}", path.display())))?;
    Ok(nets)
}

fn cmd_train(common: &Common, checkpoint_every: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let out = &common.out;
    write_manifest(out, "train", &cfg, json!({ "mode": cfg.mode.name() }))?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = create(&metrics_path)?;
    let header = json!({ "schema": "commsim-metrics", "version": OUTPUT_SCHEMA_VERSION, "seed": cfg.seed, "mode": cfg.mode.name() });
    writeln!(metrics, "{header}").map_err(io_err(&metrics_path))?;
    let (nets, _) = train_scenario(&cfg, cfg.seed, |m, nets| {
        let line = serde_json::to_string(m).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(metrics, "{line}").map_err(io_err(&metrics_path))?;
        eprintln!(
            "iter {:4}  return {:9.3} +- {:7.3}  wait {:.3}  entropy {:.3} bits",
            m.iteration, m.return_mean, m.return_std, m.wait_mean, m.entropy
        );
        if let Some(k) = checkpoint_every.filter(|&k| k > 0) {
            if (m.iteration + 1) % k == 0 {
                save_checkpoint(nets, &out.join(format!("checkpoints/iter_{:05}.ckpt", m.iteration + 1)))?;
            }
        }
        Ok(())
    })?;
    metrics.flush().map_err(io_err(&metrics_path))?;
    save_checkpoint(&nets, &out.join("checkpoint.ckpt"))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// Resolves a `"grid"` entropy threshold on the selection seeds.
fn resolve_threshold(cfg: &ScenarioConfig, sim: &mut SimConfig, nets: &Networks, episodes: usize, workers: usize) -> Result<Option<f64>> {
    if sim.mode != Mode::Vil2c {
        return Ok(None);
    }
    if let ThresholdSetting::Search(_) = cfg.reception.entropy_threshold {
        let (best, _) = select_entropy_threshold(sim, nets, episodes, cfg.seed, workers)?;
        sim.entropy_threshold = best;
        return Ok(Some(best));
    }
    Ok(None)
}

fn cmd_eval(common: &Common, checkpoint: &Path, episodes: usize, mode: Option<Mode>, traces: bool) -> Result<()> {
    if episodes == 0 {
        return Err(Error::Config("--episodes must be >= 1".into()));
    }
    let mut cfg = load_config(common)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let nets = load_checkpoint(&cfg, checkpoint)?;
    let mut sim = cfg.sim_config();
    let chosen = resolve_threshold(&cfg, &mut sim, &nets, episodes, common.workers)?;
    let out = &common.out;
    write_manifest(
        out,
        "eval",
        &cfg,
        json!({ "checkpoint": checkpoint.display().to_string(), "episodes": episodes, "entropy_threshold": sim.entropy_threshold, "threshold_selected": chosen.is_some() }),
    )?;
    let seeds = eval_seeds(cfg.seed, episodes);
    let summary = if traces {
        let mut run_cfg = sim.clone();
        run_cfg.compute_importance = false;
        let runs = run_episodes(&run_cfg, &nets, &seeds, common.workers)?;
        let path = out.join("traces.jsonl");
        let mut f = create(&path)?;
        for r in &runs {
            r.trace.write_jsonl(&mut f)?;
        }
        f.flush().map_err(io_err(&path))?;
        let eps: Vec<_> = runs.into_iter().map(|r| r.trace.summary).collect();
        EvalSummary::from_episodes(sim.mode, &eps)
    } else {
        EvalSummary::from_episodes(sim.mode, &evaluate_episodes(&sim, &nets, &seeds, common.workers)?)
    };
    let csv = format!("{}\n{}\n", EvalSummary::CSV_HEADER, summary.csv_row());
    write_text(&out.join("summary.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn parse_checkpoint_arg(arg: &str) -> Result<(Mode, PathBuf)> {
    let (mode, path) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--checkpoint expects MODE=PATH, got {arg:?}")))?;
    Ok((mode.parse()?, PathBuf::from(path)))
}

fn cmd_sweep(
    common: &Common,
    axis: SweepAxis,
    grid: Option<Vec<f64>>,
    checkpoints: &[String],
    modes: &[Mode],
    episodes: usize,
    train_per_point: bool,
) -> Result<()> {
    let cfg = load_config(common)?;
    let grid = grid.unwrap_or_else(|| axis.default_grid(&cfg.sim_config()));
    if grid.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let mut runs: Vec<(ScenarioConfig, Networks)> = Vec::new();
    if !checkpoints.is_empty() {
        for arg in checkpoints {
            let (mode, path) = parse_checkpoint_arg(arg)?;
            let mut c = cfg.clone();
            c.mode = mode;
            let nets = load_checkpoint(&c, &path)?;
            runs.push((c, nets));
        }
    } else if !train_per_point {
        for &mode in modes {
            let mut c = cfg.clone();
            c.mode = mode;
            eprintln!("training {} ...", mode.name());
            let (nets, _) = train_scenario(&c, c.seed, |_, _| Ok(()))?;
            runs.push((c, nets));
        }
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    if train_per_point {
        for &value in &grid {
            for &mode in modes {
                let mut c = cfg.clone();
                c.mode = mode;
                let base = c.sim_config();
                let point = axis.apply(&base, value)?;
                c.budgets.bandwidth = point.bandwidth_budget;
                c.budgets.power = point.power_budget;
                c.channel = point.channel;
                c.clock = point.clock;
                if axis == SweepAxis::EntropyThreshold {
                    c.reception.entropy_threshold = ThresholdSetting::Bits(value);
                }
                eprintln!("training {} at {}={value} ...", mode.name(), axis.name());
                let (nets, _) = train_scenario(&c, c.seed, |_, _| Ok(()))?;
                let sim = c.sim_config();
                rows.extend(sweep(axis, &[value], &[(&sim, &nets)], episodes, cfg.seed, common.workers)?);
            }
        }
        rows.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| a.summary.mode.name().cmp(b.summary.mode.name())));
    } else {
        let mut sims = Vec::with_capacity(runs.len());
        for (c, nets) in &runs {
            let mut sim = c.sim_config();
            resolve_threshold(c, &mut sim, nets, episodes, common.workers)?;
            sims.push(sim);
        }
        let entries: Vec<(&SimConfig, &Networks)> = sims.iter().zip(runs.iter().map(|(_, n)| n)).collect();
        rows = sweep(axis, &grid, &entries, episodes, cfg.seed, common.workers)?;
    }
    write_manifest(
        &common.out,
        "sweep",
        &cfg,
        json!({ "axis": axis.name(), "grid": grid, "episodes": episodes, "checkpoints": checkpoints, "train_per_point": train_per_point }),
    )?;
    let mut csv = format!("{}\n", SweepRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_text(&common.out.join(format!("sweep_{}.csv", axis.name())), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_verify(suite: Suite, seed: u64, out: &Path) -> Result<bool> {
    match suite {
        Suite::Alloc => {
            let oracle = verify::oracle_agreement(100, 200, 1e-3, seed)?;
            let ordering = verify::allocation_ordering(1000, 1e-9, seed)?;
            let kkt = verify::kkt_construction(200, commsim_core::allocator::KktVariant::AsPrinted, seed)?;
            let kkt_pass = kkt < 1e-8;
            let csv = format!(
                "check,passed,detail\noracle_agreement,{},max_relative_gap={} seconds={:.2}\nallocation_ordering,{},min_optimal_margin={} min_proportional_margin={}\nkkt_construction,{},max_residual={}\n",
                oracle.passes(),
                oracle.max_relative_gap,
                oracle.seconds,
                ordering.passes(),
                ordering.min_optimal_margin,
                ordering.min_proportional_margin,
                kkt_pass,
                kkt
            );
            write_text(&out.join("verify_alloc.csv"), &csv)?;
            print!("{csv}");
            Ok(oracle.passes() && ordering.passes() && kkt_pass)
        }
        Suite::Theory => {
            let report = verify::theory_suite(100_000, seed)?;
            let mut csv = String::from("check,samples,gap,covariance,mc_error,z,passed\n");
            for r in &report.rows {
                csv.push_str(&format!("{},{},{},{},{},{},{}\n", r.check, r.samples, r.gap, r.covariance, r.mc_error, r.z, r.passed));
            }
            csv.push_str(&format!(
                "identity,,{},,,,{}\n",
                report.identity_max_error,
                report.identity_max_error <= 1e-12
            ));
            write_text(&out.join("verify_theory.csv"), &csv)?;
            print!("{csv}");
            for r in &report.rows {
                println!("{:<20} gap {:+.5e}  ({:.1} sigma)  {}", r.check, r.gap, r.z, if r.passed { "ok" } else { "FAILED" });
            }
            println!("identity max error {:.3e}; {:.1} s", report.identity_max_error, report.seconds);
            Ok(report.passes())
        }
        Suite::Gradients => {
            let rows = verify::gradient_suite(20, 200, seed)?;
            let mut csv = String::from("target,seeds,checked,max_rel_error,passed\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{},{},{}\n", r.target, r.seeds, r.checked, r.max_rel_error, r.passes()));
            }
            write_text(&out.join("verify_gradients.csv"), &csv)?;
            print!("{csv}");
            Ok(rows.iter().all(|r| r.passes()))
        }
    }
}
