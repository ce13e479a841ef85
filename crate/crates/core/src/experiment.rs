//! Evaluation summaries and one-axis sweeps over trained checkpoints. Every
//! grid point replays the same episode seeds, so points differ only through
//! the swept setting.

use serde::{Deserialize, Serialize};

use crate::agent::Networks;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::seeds;
use crate::simulator::{run_episodes, EpisodeSummary, Mode, SimConfig};
use crate::stats;
use crate::trainer::{train, IterationMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: Mode,
    pub episodes: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub return_se: f64,
    pub wait_mean: f64,
    /// Mean over episodes that recorded any finite latency.
    pub latency_mean: Option<f64>,
    pub delivered_fraction: f64,
}

impl EvalSummary {
    pub fn from_episodes(mode: Mode, episodes: &[EpisodeSummary]) -> Self {
        let returns: Vec<f64> = episodes.iter().map(|e| e.discounted_return).collect();
        let waits: Vec<f64> = episodes.iter().map(|e| e.mean_wait).collect();
        let delivered: Vec<f64> = episodes.iter().map(|e| e.delivered_fraction).collect();
        let lat: Vec<f64> = episodes.iter().filter_map(|e| e.mean_latency).collect();
        Self {
            mode,
            episodes: episodes.len(),
            return_mean: stats::mean(&returns),
            return_std: stats::std_dev(&returns),
            return_se: stats::std_error(&returns),
            wait_mean: stats::mean(&waits),
            latency_mean: (!lat.is_empty()).then(|| stats::mean(&lat)),
            delivered_fraction: stats::mean(&delivered),
        }
    }

    pub const CSV_HEADER: &'static str =
        "mode,episodes,return_mean,return_std,return_se,wait_mean,latency_mean,delivered_fraction";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.mode.name(),
            self.episodes,
            self.return_mean,
            self.return_std,
            self.return_se,
            self.wait_mean,
            self.latency_mean.map(|v| v.to_string()).unwrap_or_default(),
            self.delivered_fraction
        )
    }
}

/// Trains fresh networks for `sc` from `seed`.
pub fn train_scenario(
    sc: &ScenarioConfig,
    seed: u64,
    observer: impl FnMut(&IterationMetrics, &Networks) -> Result<()>,
) -> Result<(Networks, Vec<IterationMetrics>)> {
    let mut nets = sc.init_networks(seed);
    let metrics = train(&sc.sim_config(), &sc.train, seed, &mut nets, observer)?;
    Ok((nets, metrics))
}

/// Seeds of the evaluation stream. Index 0 is for reporting; index 1 is
/// reserved for selecting the entropy threshold.
pub fn eval_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    seeds::episode_seeds(seed, seeds::stream::EVAL, 0, episodes)
}

pub fn selection_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    seeds::episode_seeds(seed, seeds::stream::EVAL, 1, episodes)
}

pub fn evaluate_episodes(
    sim: &SimConfig,
    nets: &Networks,
    episode_seeds: &[u64],
    workers: usize,
) -> Result<Vec<EpisodeSummary>> {
    let mut cfg = sim.clone();
    cfg.compute_importance = false;
    Ok(run_episodes(&cfg, nets, episode_seeds, workers)?
        .into_iter()
        .map(|r| r.trace.summary)
        .collect())
}

pub fn evaluate(sim: &SimConfig, nets: &Networks, episodes: usize, seed: u64, workers: usize) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let runs = evaluate_episodes(sim, nets, &eval_seeds(seed, episodes), workers)?;
    Ok(EvalSummary::from_episodes(sim.mode, &runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Bandwidth,
    Power,
    Pathloss,
    Maxwait,
    EntropyThreshold,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::Power => "power",
            SweepAxis::Pathloss => "pathloss",
            SweepAxis::Maxwait => "maxwait",
            SweepAxis::EntropyThreshold => "entropy_threshold",
        }
    }

    /// Absolute grid values for this axis around the settings in `sim`.
    pub fn default_grid(self, sim: &SimConfig) -> Vec<f64> {
        match self {
            SweepAxis::Bandwidth => BUDGET_FRACTIONS.iter().map(|f| f * sim.bandwidth_budget).collect(),
            SweepAxis::Power => BUDGET_FRACTIONS.iter().map(|f| f * sim.power_budget).collect(),
            SweepAxis::Pathloss => vec![2.0, 2.5, 3.0, 3.67],
            SweepAxis::Maxwait => MAXWAIT_FRACTIONS
                .iter()
                .map(|f| f * sim.clock.step_duration)
                .collect(),
            SweepAxis::EntropyThreshold => {
                let max = (crate::envs::N_ACTIONS as f64).log2();
                (0..9).map(|k| max * k as f64 / 8.0).collect()
            }
        }
    }

    /// `sim` with this axis set to `value`.
    pub fn apply(self, sim: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut cfg = sim.clone();
        match self {
            SweepAxis::Bandwidth => cfg.bandwidth_budget = value,
            SweepAxis::Power => cfg.power_budget = value,
            SweepAxis::Pathloss => cfg.channel.path_loss_exponent = value,
            SweepAxis::Maxwait => cfg.clock.max_wait = value,
            SweepAxis::EntropyThreshold => cfg.entropy_threshold = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandwidth" => Ok(SweepAxis::Bandwidth),
            "power" => Ok(SweepAxis::Power),
            "pathloss" => Ok(SweepAxis::Pathloss),
            "maxwait" => Ok(SweepAxis::Maxwait),
            "entropy_threshold" => Ok(SweepAxis::EntropyThreshold),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?}; expected bandwidth, power, pathloss, maxwait or entropy_threshold"
            ))),
        }
    }
}

/// Budget grid as fractions of the configured budget.
pub const BUDGET_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Max-wait grid as fractions of the step duration.
pub const MAXWAIT_FRACTIONS: [f64; 7] = [0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub summary: EvalSummary,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "axis,value,mode,episodes,return_mean,return_std,return_se,wait_mean,latency_mean,delivered_fraction";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.axis.name(), self.value, self.summary.csv_row())
    }
}

/// Evaluates each (config, networks) entry at every grid value. Rows are
/// ordered by value, then mode.
pub fn sweep(
    axis: SweepAxis,
    grid: &[f64],
    entries: &[(&SimConfig, &Networks)],
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config(format!("empty grid for sweep axis {}", axis.name())));
    }
    let mut rows = Vec::with_capacity(grid.len() * entries.len());
    for &value in grid {
        for (sim, nets) in entries {
            let cfg = axis.apply(sim, value)?;
            rows.push(SweepRow {
                axis,
                value,
                summary: evaluate(&cfg, nets, episodes, seed, workers)?,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then_with(|| a.summary.mode.name().cmp(b.summary.mode.name()))
    });
    Ok(rows)
}

/// Picks the entropy threshold with the best mean return over the 9-point
/// grid, on the selection seed stream. Ties go to the lower threshold.
pub fn select_entropy_threshold(
    sim: &SimConfig,
    nets: &Networks,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let seeds = selection_seeds(seed, episodes);
    let mut table = Vec::new();
    for value in SweepAxis::EntropyThreshold.default_grid(sim) {
        let cfg = SweepAxis::EntropyThreshold.apply(sim, value)?;
        let runs = evaluate_episodes(&cfg, nets, &seeds, workers)?;
        let returns: Vec<f64> = runs.iter().map(|e| e.discounted_return).collect();
        table.push((value, stats::mean(&returns)));
    }
    let best = table
        .iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, &(v, j)| if j > acc.1 { (v, j) } else { acc });
    Ok((best.0, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn small() -> (SimConfig, Networks) {
        let mut sc = ScenarioConfig::default();
        sc.env.episode_length = 4;
        (sc.sim_config(), sc.init_networks(1))
    }

    #[test]
    fn grids() {
        let (sim, _) = small();
        let e = SweepAxis::EntropyThreshold.default_grid(&sim);
        assert_eq!(e.len(), 9);
        assert_eq!(e[0], 0.0);
        assert!((e[8] - 5f64.log2()).abs() < 1e-12);
        let p = SweepAxis::Pathloss.default_grid(&sim);
        assert!(p.contains(&2.0) && p.contains(&3.67));
        assert!(SweepAxis::Maxwait.default_grid(&sim).len() >= 5);
        assert_eq!(SweepAxis::Power.default_grid(&sim).len(), 4);
    }

    #[test]
    fn sweep_rows_are_canonical_and_reproducible() {
        let (sim, nets) = small();
        let mut avg = sim.clone();
        avg.mode = Mode::Avg;
        let entries = [(&sim, &nets), (&avg, &nets)];
        let grid = [1.0, 0.5];
        let a = sweep(SweepAxis::Power, &grid, &entries, 3, 7, 1).unwrap();
        let b = sweep(SweepAxis::Power, &grid, &entries, 3, 7, 1).unwrap();
        assert_eq!(a, b);
        let keys: Vec<_> = a.iter().map(|r| (r.value, r.summary.mode.name())).collect();
        assert_eq!(keys, vec![(0.5, "avg"), (0.5, "vil2c"), (1.0, "avg"), (1.0, "vil2c")]);
        assert!(sweep(SweepAxis::Power, &[], &entries, 3, 7, 1).is_err());
    }

    #[test]
    fn single_episode_eval_is_reproducible() {
        let (sim, nets) = small();
        let a = evaluate(&sim, &nets, 1, 3, 1).unwrap();
        assert_eq!(a.csv_row(), evaluate(&sim, &nets, 1, 3, 1).unwrap().csv_row());
        assert_eq!(a.episodes, 1);
        assert!(evaluate(&sim, &nets, 0, 3, 1).is_err());
    }

    #[test]
    fn axis_names_parse() {
        for a in [
            SweepAxis::Bandwidth,
            SweepAxis::Power,
            SweepAxis::Pathloss,
            SweepAxis::Maxwait,
            SweepAxis::EntropyThreshold,
        ] {
            assert_eq!(a.name().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("latency".parse::<SweepAxis>().is_err());
    }
}
