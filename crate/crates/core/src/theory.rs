//! Monte-Carlo checks of the latency results: the covariance gap between
//! latency-discounted and undiscounted returns, and an empirical latency
//! sensitivity constant from injected-latency sweeps.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::Networks;
use crate::allocator::{allocate_equal, allocate_optimal, AllocationProblem, SolverOptions};
use crate::channel::{ResourceAllocation, LinkState};
use crate::error::{Error, Result};
use crate::seeds;
use crate::simulator::{run_episodes, SimConfig};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRewardSample {
    pub reward: f64,
    /// Seconds.
    pub mean_latency: f64,
    /// Per second.
    pub discount_rate: f64,
}

impl LatencyRewardSample {
    pub fn new(reward: f64, mean_latency: f64, discount_rate: f64) -> Result<Self> {
        if !reward.is_finite() {
            return Err(Error::Domain(format!("reward must be finite, got {reward}")));
        }
        if !(mean_latency >= 0.0) || !(discount_rate >= 0.0) {
            return Err(Error::Domain(format!(
                "latency and discount rate must be >= 0, got {mean_latency} and {discount_rate}"
            )));
        }
        Ok(Self {
            reward,
            mean_latency,
            discount_rate,
        })
    }

    pub fn discount(&self) -> f64 {
        (-self.discount_rate * self.mean_latency).exp()
    }
}

/// Mean of `R exp(-lambda tau)`.
pub fn effective_return(samples: &[LatencyRewardSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("effective_return needs at least one sample".into()));
    }
    Ok(stats::mean(&samples.iter().map(|s| s.reward * s.discount()).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceGap {
    /// `mean(R d) - mean(R) mean(d)` with `d = exp(-lambda tau)`; the
    /// population (1/n) covariance.
    pub gap: f64,
    /// Sample covariance with the 1/(n-1) normalization.
    pub covariance: f64,
    /// Delta-method standard error of `gap`.
    pub mc_error: f64,
    pub samples: usize,
}

impl CovarianceGap {
    /// `gap / mc_error`, infinite for a nonzero gap with zero error.
    pub fn z_score(&self) -> f64 {
        if self.mc_error > 0.0 {
            self.gap / self.mc_error
        } else if self.gap == 0.0 {
            0.0
        } else {
            self.gap.signum() * f64::INFINITY
        }
    }
}

pub fn covariance_gap(samples: &[LatencyRewardSample]) -> Result<CovarianceGap> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Domain(format!("covariance_gap needs at least 2 samples, got {n}")));
    }
    let r: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    let d: Vec<f64> = samples.iter().map(|s| s.discount()).collect();
    let rd: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a * b).collect();
    let (mr, md) = (stats::mean(&r), stats::mean(&d));
    let gap = stats::mean(&rd) - mr * md;
    let centered: Vec<f64> = r.iter().zip(&d).map(|(a, b)| (a - mr) * (b - md)).collect();
    let covariance = centered.iter().sum::<f64>() / (n - 1) as f64;
    // Influence function of the plug-in covariance: (R - mR)(d - md) - gap.
    let var_psi = centered.iter().map(|c| (c - gap).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(CovarianceGap {
        gap,
        covariance,
        mc_error: (var_psi / n as f64).sqrt(),
        samples: n,
    })
}

/// Randomly re-pairs rewards with latencies, destroying any association.
pub fn shuffle_pairing(samples: &[LatencyRewardSample], rng: &mut impl Rng) -> Vec<LatencyRewardSample> {
    let mut latencies: Vec<f64> = samples.iter().map(|s| s.mean_latency).collect();
    latencies.shuffle(rng);
    samples
        .iter()
        .zip(latencies)
        .map(|(s, t)| LatencyRewardSample {
            mean_latency: t,
            ..*s
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingPolicy {
    /// Importance-weighted optimal allocation.
    VoiAware,
    /// Equal split, so latency follows the channel alone.
    Inherent,
}

/// Joint distribution of per-step channels and importance. Every link has a
/// base importance; one uniformly chosen link additionally carries a stake
/// drawn from `stake_range`, and the step's reward is the total importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingScenario {
    pub n_links: usize,
    /// Meters, drawn uniformly per link.
    pub distance_range: (f64, f64),
    pub path_loss_exponent: f64,
    pub path_loss_offset: f64,
    pub noise_density: f64,
    pub bandwidth_budget: f64,
    pub power_budget: f64,
    pub message_bits: f64,
    pub base_importance: f64,
    pub stake_range: (f64, f64),
    pub discount_rate: f64,
    /// Latency charged to a link that cannot deliver within the step.
    pub latency_cap: f64,
}

impl PairingScenario {
    pub fn heterogeneous() -> Self {
        Self {
            n_links: 3,
            distance_range: (5.0, 150.0),
            path_loss_exponent: 2.0,
            path_loss_offset: 40.0,
            noise_density: 1e-11,
            bandwidth_budget: 2500.0,
            power_budget: 1.0,
            message_bits: 256.0,
            base_importance: 0.2,
            stake_range: (0.0, 3.0),
            discount_rate: 2.0,
            latency_cap: 1.0,
        }
    }

    /// Identical channels and importance every step.
    pub fn degenerate() -> Self {
        Self {
            distance_range: (50.0, 50.0),
            stake_range: (0.0, 0.0),
            ..Self::heterogeneous()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d0, d1) = self.distance_range;
        let (s0, s1) = self.stake_range;
        if self.n_links == 0 || !(d0 >= 0.0 && d1 >= d0) || !(s0 >= 0.0 && s1 >= s0) {
            return Err(Error::Config("pairing scenario: bad link count or ranges".into()));
        }
        if !(self.base_importance > 0.0 && self.latency_cap > 0.0 && self.discount_rate >= 0.0) {
            return Err(Error::Config(
                "pairing scenario: base importance and latency cap must be > 0".into(),
            ));
        }
        Ok(())
    }
}

fn draw_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Importance-weighted mean latency of an allocation, with undeliverable or
/// slower-than-cap links charged the cap.
fn weighted_latency(problem_links: &[LinkState], alloc: &ResourceAllocation, importance: &[f64], bits: f64, cap: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, link) in problem_links.iter().enumerate() {
        let rate = link.rate(alloc.bandwidth[j], alloc.power[j]);
        let tau = if rate > 0.0 { (bits / rate).min(cap) } else { cap };
        num += importance[j] * tau;
        den += importance[j];
    }
    num / den
}

pub fn simulate_allocation_pairing(
    scenario: &PairingScenario,
    policy: PairingPolicy,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<LatencyRewardSample>> {
    scenario.validate()?;
    let base = seeds::derive_seed(seed, seeds::stream::THEORY);
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::rng(seeds::derive_seed(base, i as u64));
            let n = scenario.n_links;
            let links = (0..n)
                .map(|j| {
                    LinkState::new(
                        0,
                        j + 1,
                        draw_range(&mut rng, scenario.distance_range),
                        scenario.path_loss_exponent,
                        scenario.path_loss_offset,
                        scenario.noise_density,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let mut importance = vec![scenario.base_importance; n];
            let critical = rng.gen_range(0..n);
            importance[critical] += draw_range(&mut rng, scenario.stake_range);
            let problem = AllocationProblem::new(
                importance.clone(),
                vec![scenario.message_bits; n],
                links.clone(),
                scenario.bandwidth_budget,
                scenario.power_budget,
            )?;
            let alloc = match policy {
                PairingPolicy::VoiAware => {
                    let opts = SolverOptions {
                        seed: seeds::derive_seed(base, !(i as u64)),
                        ..SolverOptions::default()
                    };
                    allocate_optimal(&problem, &opts).allocation
                }
                PairingPolicy::Inherent => allocate_equal(&problem),
            };
            let tau = weighted_latency(&links, &alloc, &importance, scenario.message_bits, scenario.latency_cap);
            LatencyRewardSample::new(importance.iter().sum(), tau, scenario.discount_rate)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySweepPoint {
    pub injected_latency: f64,
    pub mean_return: f64,
    pub std_error: f64,
    pub mean_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySweep {
    pub points: Vec<LatencySweepPoint>,
    /// Smallest C with `J(tau) >= J(0) - C tau` on the grid.
    pub sensitivity: f64,
    /// Rank correlation of return against injected latency.
    pub spearman: f64,
}

/// Evaluates with every link latency replaced by each grid value; the same
/// episode seeds are used at every point.
pub fn latency_bound_sweep(
    sim: &SimConfig,
    nets: &Networks,
    tau_grid: &[f64],
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<LatencySweep> {
    if tau_grid.first() != Some(&0.0) || tau_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "latency grid must start at 0 and be strictly ascending".into(),
        ));
    }
    if episodes == 0 {
        return Err(Error::Config("latency sweep needs at least one episode".into()));
    }
    let episode_seeds = seeds::episode_seeds(seed, seeds::stream::EVAL, 0, episodes);
    let mut points = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let mut cfg = sim.clone();
        cfg.injected_latency = Some(tau);
        cfg.compute_importance = false;
        let runs = run_episodes(&cfg, nets, &episode_seeds, workers)?;
        let returns: Vec<f64> = runs.iter().map(|r| r.trace.summary.discounted_return).collect();
        let waits: Vec<f64> = runs.iter().map(|r| r.trace.summary.mean_wait).collect();
        points.push(LatencySweepPoint {
            injected_latency: tau,
            mean_return: stats::mean(&returns),
            std_error: stats::std_error(&returns),
            mean_wait: stats::mean(&waits),
        });
    }
    let j0 = points[0].mean_return;
    let sensitivity = points[1..]
        .iter()
        .map(|p| (j0 - p.mean_return) / p.injected_latency)
        .fold(f64::NEG_INFINITY, f64::max);
    let taus: Vec<f64> = points.iter().map(|p| p.injected_latency).collect();
    let js: Vec<f64> = points.iter().map(|p| p.mean_return).collect();
    Ok(LatencySweep {
        sensitivity,
        spearman: stats::spearman(&taus, &js),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(r: f64, t: f64, l: f64) -> LatencyRewardSample {
        LatencyRewardSample::new(r, t, l).unwrap()
    }

    #[test]
    fn effective_return_examples() {
        let v = [s(1.0, 0.3, 0.0), s(3.0, 2.0, 0.0)];
        assert_eq!(effective_return(&v).unwrap(), 2.0);
        let v = [s(1.0, 0.0, 0.7), s(3.0, 0.0, 1.1)];
        assert_eq!(effective_return(&v).unwrap(), 2.0);
        let one = effective_return(&[s(2.0, 1.0, std::f64::consts::LN_2)]).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
        assert!(effective_return(&[]).is_err());
    }

    #[test]
    fn covariance_gap_examples() {
        let c = covariance_gap(&[s(2.0, 0.1, 1.0), s(2.0, 0.7, 1.0), s(2.0, 3.0, 1.0)]).unwrap();
        assert!(c.gap.abs() < 1e-15 && c.covariance.abs() < 1e-15);
        // Two points: population covariance is (x1 - x2)(y1 - y2) / 4.
        let two = covariance_gap(&[s(1.0, 1.0, 1.0), s(2.0, 0.0, 1.0)]).unwrap();
        let by_hand = (1.0 - 2.0) * ((-1.0f64).exp() - 1.0) / 4.0;
        assert!((two.gap - by_hand).abs() < 1e-15);
        assert!((two.gap - two.covariance / 2.0).abs() < 1e-15);
        assert!(covariance_gap(&[s(1.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn degenerate_pairing_has_no_gap() {
        for p in [PairingPolicy::VoiAware, PairingPolicy::Inherent] {
            let v = simulate_allocation_pairing(&PairingScenario::degenerate(), p, 50, 1).unwrap();
            let g = covariance_gap(&v).unwrap();
            assert!(g.gap.abs() < 1e-12, "{p:?}: {}", g.gap);
        }
    }

    #[test]
    fn pairing_is_deterministic() {
        let sc = PairingScenario::heterogeneous();
        let a = simulate_allocation_pairing(&sc, PairingPolicy::VoiAware, 40, 5).unwrap();
        let b = simulate_allocation_pairing(&sc, PairingPolicy::VoiAware, 40, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn latency_grid_must_start_at_zero() {
        let sim_err = |grid: &[f64]| grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0]));
        assert!(sim_err(&[0.1, 0.2]));
        assert!(sim_err(&[0.0, 0.2, 0.2]));
        assert!(!sim_err(&[0.0, 0.2]));
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn samples() -> impl Strategy<Value = Vec<LatencyRewardSample>> {
        prop::collection::vec((-50.0..50.0f64, 0.0..5.0f64, 0.0..3.0f64), 2..60).prop_map(|v| {
            v.into_iter()
                .map(|(r, t, l)| LatencyRewardSample::new(r, t, l).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn gap_is_scaled_sample_covariance(v in samples()) {
            let g = covariance_gap(&v).unwrap();
            let n = v.len() as f64;
            let scale = v.iter().map(|s| s.reward.abs()).fold(1.0, f64::max);
            prop_assert!((g.gap - g.covariance * (n - 1.0) / n).abs() <= 1e-13 * scale);
        }

        #[test]
        fn effective_return_nonincreasing_in_discount_rate(
            v in prop::collection::vec((0.0..50.0f64, 0.0..5.0f64), 1..40),
            l1 in 0.0..3.0f64,
            dl in 0.0..3.0f64,
        ) {
            let at = |l: f64| {
                let s: Vec<_> = v.iter().map(|&(r, t)| LatencyRewardSample::new(r, t, l).unwrap()).collect();
                effective_return(&s).unwrap()
            };
            prop_assert!(at(l1 + dl) <= at(l1) + 1e-12);
        }
    }

    #[test]
    fn shuffled_pairing_has_no_gap() {
        let v = simulate_allocation_pairing(&PairingScenario::heterogeneous(), PairingPolicy::VoiAware, 20_000, 9).unwrap();
        let mut rng = seeds::rng(11);
        let g = covariance_gap(&shuffle_pairing(&v, &mut rng)).unwrap();
        assert!(g.gap.abs() < 3.0 * g.mc_error, "{g:?}");
    }
}
