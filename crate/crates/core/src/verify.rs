//! Self-check suites shared by the CLI `verify` subcommand and the test
//! targets: allocator oracle agreement, allocation ordering, KKT
//! construction, finite-difference gradient checks and the latency theory
//! checks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocator::{
    allocate_equal, allocate_optimal, allocate_proportional, brute_force_oracle, kkt_residuals,
    total_voi, AllocationProblem, KktVariant, SolverOptions,
};
use crate::channel::{LinkState, ResourceAllocation};
use crate::agent::{NetworkConfig, Networks};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::seeds;
use crate::simulator::{run_episode, Mode};
use crate::theory::{
    covariance_gap, shuffle_pairing, simulate_allocation_pairing, CovarianceGap, LatencyRewardSample,
    PairingPolicy, PairingScenario,
};
use crate::trainer::{
    actor_loss_graph, compute_advantages, critic_loss_graph, resonet_loss_graph, Credit, ResonetObjective,
    RolloutBatch,
};
use commsim_nn::gradcheck::check_params;
use commsim_nn::{Graph, ParamId, ParamSet, Tensor, Var};

/// Random instance with SNRs spanning roughly 1e-2 to 1e3 at an equal split.
pub fn random_problem(n: usize, rng: &mut impl Rng) -> AllocationProblem {
    let noise_density = 1e-9;
    let links = (0..n)
        .map(|j| {
            LinkState::new(
                0,
                j + 1,
                rng.gen_range(1.0..3.0),
                rng.gen_range(2.0..4.0),
                rng.gen_range(30.0..50.0),
                noise_density,
            )
            .expect("valid random link")
        })
        .collect();
    AllocationProblem::new(
        (0..n).map(|_| rng.gen_range(0.05..5.0)).collect(),
        (0..n).map(|_| rng.gen_range(64.0..1024.0)).collect(),
        links,
        rng.gen_range(1e3..1e5),
        rng.gen_range(0.1..2.0),
    )
    .expect("valid random problem")
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleAgreementReport {
    pub instances: usize,
    pub grid_resolution: usize,
    pub max_relative_gap: f64,
    /// Instances where the solver trails the oracle by more than the tolerance.
    pub failures: usize,
    pub unconverged: usize,
    pub seconds: f64,
}

impl OracleAgreementReport {
    pub fn passes(&self) -> bool {
        self.failures == 0
    }
}

/// Compares [`allocate_optimal`] with the grid oracle on random 2-link
/// instances. A solver result above the grid optimum counts as agreement.
pub fn oracle_agreement(instances: usize, grid_resolution: usize, tolerance: f64, seed: u64) -> Result<OracleAgreementReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = 0.0f64;
    let mut failures = 0;
    let mut unconverged = 0;
    for i in 0..instances {
        let problem = random_problem(2, &mut rng);
        let opts = SolverOptions {
            seed: seed.wrapping_add(i as u64),
            ..SolverOptions::default()
        };
        let solved = allocate_optimal(&problem, &opts);
        let (_, oracle) = brute_force_oracle(&problem, grid_resolution)?;
        let gap = (oracle - solved.objective) / oracle.abs().max(f64::MIN_POSITIVE);
        max_gap = max_gap.max(gap);
        if gap > tolerance {
            failures += 1;
        }
        if !solved.converged {
            unconverged += 1;
        }
    }
    Ok(OracleAgreementReport {
        instances,
        grid_resolution,
        max_relative_gap: max_gap,
        failures,
        unconverged,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub instances: usize,
    /// Random channels: optimal below either baseline.
    pub optimal_violations: usize,
    /// Identical channels per transmitter: proportional below equal.
    pub proportional_violations: usize,
    /// Random channels where proportional scores below equal (informational).
    pub proportional_below_equal_random: usize,
    pub min_optimal_margin: f64,
    pub min_proportional_margin: f64,
    pub infeasible_outputs: usize,
}

impl OrderingReport {
    pub fn passes(&self) -> bool {
        self.optimal_violations == 0 && self.proportional_violations == 0 && self.infeasible_outputs == 0
    }
}

/// Checks the ordering `optimal >= proportional >= equal - slack` on random
/// instances with 2 to 6 links.
///
/// The optimum is compared with both baselines on fully random channels.
/// Proportional beats equal only when the links share one channel and message
/// size (it can lose otherwise), so that half of the chain is checked on a
/// companion instance with the first link's channel copied to every link.
pub fn allocation_ordering(instances: usize, slack: f64, seed: u64) -> Result<OrderingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OrderingReport {
        instances,
        optimal_violations: 0,
        proportional_violations: 0,
        proportional_below_equal_random: 0,
        min_optimal_margin: f64::INFINITY,
        min_proportional_margin: f64::INFINITY,
        infeasible_outputs: 0,
    };
    for i in 0..instances {
        let n = rng.gen_range(2..=6);
        let problem = random_problem(n, &mut rng);
        let opts = SolverOptions {
            seed: seed.wrapping_add(i as u64),
            ..SolverOptions::default()
        };
        let optimal = allocate_optimal(&problem, &opts);
        if optimal.allocation.validate().is_err() {
            report.infeasible_outputs += 1;
        }
        let eq = total_voi(&problem, &allocate_equal(&problem))?;
        let prop = total_voi(&problem, &allocate_proportional(&problem))?;
        let opt = total_voi(&problem, &optimal.allocation)?;
        let margin = opt - prop.max(eq);
        report.min_optimal_margin = report.min_optimal_margin.min(margin);
        if margin < -slack {
            report.optimal_violations += 1;
        }
        if prop < eq {
            report.proportional_below_equal_random += 1;
        }

        let mut symmetric = problem.clone();
        for j in 0..n {
            symmetric.links[j] = LinkState {
                recipient_id: j + 1,
                ..problem.links[0]
            };
            symmetric.message_bits[j] = problem.message_bits[0];
        }
        let eq = total_voi(&symmetric, &allocate_equal(&symmetric))?;
        let prop = total_voi(&symmetric, &allocate_proportional(&symmetric))?;
        let opt = allocate_optimal(&symmetric, &opts).objective;
        report.min_proportional_margin = report.min_proportional_margin.min(prop - eq);
        if prop < eq - slack || opt < prop - slack {
            report.proportional_violations += 1;
        }
    }
    Ok(report)
}

/// Builds an interior allocation that satisfies the stationarity equations
/// of `variant` exactly, by fixing multipliers and per-link SNRs and
/// back-solving importances, powers and path losses.
pub fn synthetic_kkt_instance(
    n: usize,
    variant: KktVariant,
    rng: &mut impl Rng,
) -> (AllocationProblem, ResourceAllocation) {
    let ln2 = match variant {
        KktVariant::AsPrinted => 1.0,
        KktVariant::Ln2Corrected => std::f64::consts::LN_2,
    };
    let noise_density = 1e-9;
    let lambda = rng.gen_range(0.1..2.0);
    let mu = rng.gen_range(0.1..2.0);
    let mut importances = Vec::with_capacity(n);
    let mut message_bits = Vec::with_capacity(n);
    let mut links = Vec::with_capacity(n);
    let mut bandwidth = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for j in 0..n {
        let gamma: f64 = rng.gen_range(0.05..50.0);
        let bits = rng.gen_range(64.0..1024.0);
        let b = rng.gen_range(0.5..2.0);
        let weight = lambda / ((1.0 + gamma).log2() - gamma / ((1.0 + gamma) * ln2));
        let p = weight * gamma * b / (mu * (1.0 + gamma) * ln2);
        let gain = p / (gamma * b * noise_density);
        let distance = rng.gen_range(1.0..50.0);
        let exponent = 2.0;
        let offset = 10.0 * gain.log10() - 10.0 * exponent * f64::log10(distance);
        importances.push(weight * bits);
        message_bits.push(bits);
        links.push(LinkState::new(0, j + 1, distance, exponent, offset, noise_density).expect("valid link"));
        bandwidth.push(b);
        power.push(p);
    }
    // Slightly larger budgets keep every link strictly interior.
    let bandwidth_budget = bandwidth.iter().sum::<f64>() * 1.5;
    let power_budget = power.iter().sum::<f64>() * 1.5;
    let problem = AllocationProblem::new(importances, message_bits, links, bandwidth_budget, power_budget)
        .expect("valid synthetic problem");
    let alloc = ResourceAllocation {
        bandwidth,
        power,
        bandwidth_budget,
        power_budget,
    };
    (problem, alloc)
}

/// Largest residual over `instances` synthetic constructions with 2 to 6
/// links.
pub fn kkt_construction(instances: usize, variant: KktVariant, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.gen_range(2..=6);
        let (problem, alloc) = synthetic_kkt_instance(n, variant, &mut rng);
        let diag = kkt_residuals(&problem, &alloc, variant)?;
        worst = worst.max(diag.max_residual());
    }
    Ok(worst)
}

pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradientRow {
    pub target: &'static str,
    pub seeds: usize,
    pub checked: usize,
    pub max_rel_error: f64,
}

impl GradientRow {
    pub fn passes(&self) -> bool {
        self.max_rel_error <= GRADIENT_TOLERANCE
    }
}

/// Every network and every loss the trainer differentiates.
pub const GRADIENT_TARGETS: [&str; 8] = [
    "encoder",
    "aggregator",
    "actor_trunk",
    "critic",
    "resonet",
    "actor_loss",
    "critic_loss",
    "resonet_loss",
];

fn small_scenario() -> ScenarioConfig {
    let mut sc = ScenarioConfig::default();
    sc.env.episode_length = 3;
    sc.network = NetworkConfig {
        message_width: 4,
        bits_per_element: 64.0,
        hidden_width: 6,
        key_width: 4,
        attention_width: 5,
    };
    sc
}

fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn with_params(nets: &Networks, p: &ParamSet) -> Networks {
    let mut n = nets.clone();
    n.params = p.clone();
    n
}

/// `sum(y * target)` for a fixed random target.
fn project(g: &mut Graph, y: Var, target: &Tensor) -> Var {
    let t = g.input(target.clone());
    let m = g.mul(y, t);
    g.sum_all(m)
}

/// Central finite differences on `target` over `seeds` random points, each
/// with fresh parameters, inputs and (for losses) a fresh short rollout.
pub fn gradient_check(target: &str, seeds: usize, max_entries: usize, root: u64) -> Result<GradientRow> {
    let name = GRADIENT_TARGETS
        .iter()
        .copied()
        .find(|t| *t == target)
        .ok_or_else(|| crate::Error::Config(format!("unknown gradient target {target:?}")))?;
    let mut row = GradientRow {
        target: name,
        seeds,
        checked: 0,
        max_rel_error: 0.0,
    };
    for s in 0..seeds as u64 {
        let seed = seeds::derive_seed(root, s);
        let mut rng = seeds::rng(seed);
        let sc = small_scenario();
        let nets = sc.init_networks(seed);
        let d = nets.dims;
        let w = nets.config.message_width;
        let k = d.n_peers();
        let rows = 3;
        let report = match name {
            "encoder" => {
                let obs = random_tensor(rows, d.obs_width, &mut rng);
                let tgt = random_tensor(rows, w, &mut rng);
                check(&nets, &nets.encoder_ids(), &mut rng, max_entries, |g, n| {
                    let x = g.input(obs.clone());
                    let y = n.encode_graph(g, x)?;
                    Ok(project(g, y, &tgt))
                })?
            }
            "aggregator" => {
                let own = random_tensor(rows, w, &mut rng);
                let slots: Vec<Tensor> = (0..k).map(|_| random_tensor(rows, w, &mut rng)).collect();
                let mask = Tensor::from_vec(rows, k, (0..rows * k).map(|i| ((i * 7 + s as usize) % 3 != 0) as u8 as f64).collect());
                let tgt = random_tensor(rows, nets.config.attention_width, &mut rng);
                check(&nets, &nets.attention_ids(), &mut rng, max_entries, |g, n| {
                    let o = g.input(own.clone());
                    let sl: Vec<Var> = slots.iter().map(|t| g.input(t.clone())).collect();
                    let y = n.aggregate_graph(g, o, &sl, &mask)?;
                    Ok(project(g, y, &tgt))
                })?
            }
            "actor_trunk" => {
                let own = random_tensor(rows, w, &mut rng);
                let slots: Vec<Tensor> = (0..k).map(|_| random_tensor(rows, w, &mut rng)).collect();
                let mask = Tensor::from_vec(rows, k, vec![1.0; rows * k]);
                let tgt = random_tensor(rows, d.n_actions, &mut rng);
                check(&nets, &nets.trunk_ids(), &mut rng, max_entries, |g, n| {
                    let o = g.input(own.clone());
                    let sl: Vec<Var> = slots.iter().map(|t| g.input(t.clone())).collect();
                    let y = n.act_graph(g, o, &sl, &mask)?;
                    Ok(project(g, y, &tgt))
                })?
            }
            "critic" => {
                let x = random_tensor(rows, d.state_width, &mut rng);
                let tgt = random_tensor(rows, 1, &mut rng);
                check(&nets, &nets.critic_ids(), &mut rng, max_entries, |g, n| {
                    let xi = g.input(x.clone());
                    let y = n.critic_graph(g, xi)?;
                    Ok(project(g, y, &tgt))
                })?
            }
            "resonet" => {
                let x = random_tensor(rows, d.obs_width + k, &mut rng);
                let tb = random_tensor(rows, k, &mut rng);
                let tp = random_tensor(rows, k, &mut rng);
                check(&nets, &nets.resonet_ids(), &mut rng, max_entries, |g, n| {
                    let xi = g.input(x.clone());
                    let (b, p) = n.resonet_graph(g, xi)?;
                    let lb = project(g, b, &tb);
                    let lp = project(g, p, &tp);
                    Ok(g.add(lb, lp))
                })?
            }
            _ => {
                let mut sim = sc.sim_config();
                sim.mode = Mode::Vil2c;
                sim.compute_importance = true;
                let rollout = run_episode(&sim, &nets, seed)?;
                let mut batch = RolloutBatch::from_rollouts(std::slice::from_ref(&rollout), Credit::Agent)?;
                compute_advantages(&mut batch, &nets, sim.mdp_discount, 0.95, 0.1)?;
                match name {
                    "actor_loss" => {
                        // Shift the stored log-probs so ratios sit on both
                        // sides of the clip range, away from its kinks.
                        for lp in batch.old_log_probs.iter_mut() {
                            *lp += [0.5, 0.05, -0.05, -0.5][rng.gen_range(0..4)];
                        }
                        let adv = batch.advantages.clone();
                        check(&nets, &nets.policy_ids(), &mut rng, max_entries, |g, n| {
                            Ok(actor_loss_graph(g, n, &batch, &adv, 0.2, 0.01)?.loss)
                        })?
                    }
                    "critic_loss" => {
                        let targets = batch.returns.clone();
                        check(&nets, &nets.critic_ids(), &mut rng, max_entries, |g, n| {
                            critic_loss_graph(g, n, &batch.critic_inputs, &targets)
                        })?
                    }
                    _ => {
                        let xi = batch
                            .importance
                            .clone()
                            .unwrap_or_else(|| Tensor::from_vec(batch.rows(), k, vec![1.0; batch.rows() * k]));
                        check(&nets, &nets.resonet_ids(), &mut rng, max_entries, |g, n| {
                            resonet_loss_graph(g, n, &batch, &xi, sim.bandwidth_budget, sim.power_budget, ResonetObjective::PerStep)
                        })?
                    }
                }
            }
        };
        row.checked += report.checked;
        row.max_rel_error = row.max_rel_error.max(report.max_rel_error);
    }
    Ok(row)
}

fn check<F>(nets: &Networks, ids: &[ParamId], rng: &mut impl Rng, max_entries: usize, build: F) -> Result<commsim_nn::gradcheck::GradCheckReport>
where
    F: Fn(&mut Graph, &Networks) -> Result<Var>,
{
    let wrapped = |g: &mut Graph, p: &ParamSet| -> commsim_nn::Result<Var> {
        build(g, &with_params(nets, p)).map_err(|e| match e {
            crate::Error::Nn(inner) => inner,
            other => commsim_nn::NnError::Io(std::io::Error::other(other.to_string())),
        })
    };
    Ok(check_params(&nets.params, ids, wrapped, GRADIENT_STEP, max_entries, rng)?)
}

pub fn gradient_suite(seeds: usize, max_entries: usize, root: u64) -> Result<Vec<GradientRow>> {
    GRADIENT_TARGETS
        .iter()
        .map(|t| gradient_check(t, seeds, max_entries, root))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryRow {
    pub check: &'static str,
    pub samples: usize,
    pub gap: f64,
    pub covariance: f64,
    pub mc_error: f64,
    pub z: f64,
    pub passed: bool,
}

impl TheoryRow {
    fn new(check: &'static str, g: &CovarianceGap, passed: bool) -> Self {
        Self {
            check,
            samples: g.samples,
            gap: g.gap,
            covariance: g.covariance,
            mc_error: g.mc_error,
            z: g.z_score(),
            passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    /// Largest `|gap - (n-1)/n cov|` relative to the sample scale over the
    /// random identity sets.
    pub identity_max_error: f64,
    pub rows: Vec<TheoryRow>,
    pub seconds: f64,
}

impl TheoryReport {
    pub fn passes(&self) -> bool {
        self.identity_max_error <= 1e-12 && self.rows.iter().all(|r| r.passed)
    }
}

/// Covariance-gap checks: the identity on arbitrary sample sets, the
/// shuffled-pairing null, the importance-aware allocation scenario and the
/// equal-split control. The control is reported, not asserted.
pub fn theory_suite(samples: usize, seed: u64) -> Result<TheoryReport> {
    let start = Instant::now();
    let mut rng = seeds::rng(seeds::derive_seed(seed, seeds::stream::THEORY));
    let mut identity_max_error = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..200);
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let v = (0..n)
            .map(|_| {
                LatencyRewardSample::new(
                    scale * rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..3.0),
                    rng.gen_range(0.0..2.0),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let g = covariance_gap(&v)?;
        let err = (g.gap - g.covariance * (n as f64 - 1.0) / n as f64).abs() / scale;
        identity_max_error = identity_max_error.max(err);
    }
    let scenario = PairingScenario::heterogeneous();
    let aware = simulate_allocation_pairing(&scenario, PairingPolicy::VoiAware, samples, seed)?;
    let inherent = simulate_allocation_pairing(&scenario, PairingPolicy::Inherent, samples, seed)?;
    let shuffled = covariance_gap(&shuffle_pairing(&aware, &mut rng))?;
    let aware = covariance_gap(&aware)?;
    let inherent = covariance_gap(&inherent)?;
    let rows = vec![
        TheoryRow::new("shuffled_null", &shuffled, shuffled.gap.abs() < 3.0 * shuffled.mc_error),
        TheoryRow::new("voi_aware_positive", &aware, aware.gap > 3.0 * aware.mc_error),
        TheoryRow::new("inherent_control", &inherent, true),
    ];
    Ok(TheoryReport {
        identity_max_error,
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}
