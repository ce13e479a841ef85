//! Centralized training: clipped-surrogate policy updates, critic
//! regression on the global state, then a ResoNet update that ascends the
//! total value of information of the links it allocated.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use commsim_nn::{Adam, Graph, Tensor, Var};

use crate::agent::Networks;
use crate::envs;
use crate::error::{Error, Result};
use crate::seeds;
use crate::simulator::{run_episodes, EpisodeRollout, Mode, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonetObjective {
    /// Mean over steps of the per-step VoI sum.
    #[default]
    PerStep,
    /// Mean over episodes of the episode VoI sum.
    PerEpisode,
}

/// Which reward each agent's advantage is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Credit {
    /// The shared team reward.
    Team,
    /// The agent's own share of the team reward.
    #[default]
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub epochs: usize,
    /// Minibatches per epoch, split by step.
    pub minibatches: usize,
    pub resonet_epochs: usize,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub resonet_lr: f64,
    pub max_grad_norm: f64,
    /// Multiplies rewards before advantage and value estimation.
    pub reward_scale: f64,
    pub resonet_objective: ResonetObjective,
    pub credit: Credit,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 80,
            episodes_per_iteration: 32,
            epochs: 8,
            minibatches: 8,
            resonet_epochs: 2,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            actor_lr: 3e-3,
            critic_lr: 3e-3,
            resonet_lr: 3e-3,
            max_grad_norm: 1.0,
            reward_scale: 0.1,
            resonet_objective: ResonetObjective::PerStep,
            credit: Credit::Agent,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.clip_epsilon > 0.0) {
            return fail("clip_epsilon must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if self.episodes_per_iteration == 0 {
            return fail("episodes_per_iteration must be >= 1");
        }
        for (name, lr) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("resonet_lr", self.resonet_lr),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("train: {name} must be finite and >= 0")));
            }
        }
        if !(self.entropy_coef >= 0.0 && self.max_grad_norm > 0.0 && self.reward_scale > 0.0) {
            return fail("entropy_coef >= 0, max_grad_norm > 0 and reward_scale > 0 required");
        }
        Ok(())
    }
}

/// Flattened rollouts. Rows are `step * n_agents + agent` over the
/// concatenated steps of all episodes.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub n_agents: usize,
    pub env_obs: Tensor,
    /// `slot_rows[s][r]`: row whose message fills peer slot `s` of row `r`.
    pub slot_rows: Vec<Vec<Option<usize>>>,
    pub mask: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    /// Global state, normalized time and one-hot agent id per row.
    pub critic_inputs: Tensor,
    pub rewards: Vec<f64>,
    /// Step count of each episode, in order.
    pub episode_lengths: Vec<usize>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub resonet_inputs: Tensor,
    pub link_noise: Tensor,
    pub importance: Option<Tensor>,
}

impl RolloutBatch {
    pub fn from_rollouts(rollouts: &[EpisodeRollout], credit: Credit) -> Result<Self> {
        let samples: Vec<_> = rollouts.iter().flat_map(|r| &r.samples).collect();
        let first = samples
            .first()
            .ok_or_else(|| Error::Domain("rollout batch needs at least one step".into()))?;
        let n = first.actions.len();
        let k = n - 1;
        let rows = samples.len() * n;
        let mut env_obs = Vec::with_capacity(rows);
        let mut res_in = Vec::with_capacity(rows);
        let mut noise = Vec::with_capacity(rows);
        let mut xi = Vec::with_capacity(rows);
        let mut mask = Tensor::zeros(rows, k);
        let mut slot_rows = vec![vec![None; rows]; k];
        let mut actions = Vec::with_capacity(rows);
        let mut old = Vec::with_capacity(rows);
        let mut critic_inputs = Vec::with_capacity(rows);
        let mut rewards = Vec::with_capacity(rows);
        let has_xi = samples.iter().all(|s| s.importance.is_some());
        for (t, s) in samples.iter().enumerate() {
            for j in 0..n {
                let r = t * n + j;
                env_obs.push(s.env_obs[j].clone());
                res_in.push(s.resonet_inputs[j].clone());
                noise.push(s.link_noise[j].clone());
                if has_xi {
                    xi.push(s.importance.as_ref().unwrap()[j].clone());
                }
                for (slot, p) in envs::peers(n, j).enumerate() {
                    slot_rows[slot][r] = Some(t * n + p);
                    if s.masks[j][slot] {
                        mask.set(r, slot, 1.0);
                    }
                }
                actions.push(s.actions[j]);
                old.push(s.log_probs[j]);
                let mut c = s.state.clone();
                c.extend((0..n).map(|i| if i == j { 1.0 } else { 0.0 }));
                critic_inputs.push(c);
                rewards.push(match credit {
                    Credit::Team => s.reward,
                    Credit::Agent => s.agent_rewards[j],
                });
            }
        }
        Ok(Self {
            n_agents: n,
            env_obs: Tensor::from_rows(&env_obs),
            slot_rows,
            mask,
            actions,
            old_log_probs: old,
            critic_inputs: Tensor::from_rows(&critic_inputs),
            rewards,
            episode_lengths: rollouts.iter().map(|r| r.samples.len()).collect(),
            values: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            resonet_inputs: Tensor::from_rows(&res_in),
            link_noise: Tensor::from_rows(&noise),
            importance: has_xi.then(|| Tensor::from_rows(&xi)),
        })
    }

    pub fn steps(&self) -> usize {
        self.actions.len() / self.n_agents
    }

    /// Sub-batch of the given global steps, treated as one episode.
    pub fn select_steps(&self, steps: &[usize]) -> Self {
        let n = self.n_agents;
        let k = n - 1;
        let rows: Vec<usize> = steps.iter().flat_map(|&t| t * n..(t + 1) * n).collect();
        let take = |t: &Tensor, idx: &[usize]| {
            let mut out = Tensor::zeros(idx.len(), t.cols());
            for (r, &i) in idx.iter().enumerate() {
                out.row_mut(r).copy_from_slice(t.row(i));
            }
            out
        };
        let mut slot_rows = vec![vec![None; rows.len()]; k];
        for (new_t, _) in steps.iter().enumerate() {
            for j in 0..n {
                for (slot, p) in envs::peers(n, j).enumerate() {
                    slot_rows[slot][new_t * n + j] = Some(new_t * n + p);
                }
            }
        }
        let pick = |v: &[f64]| -> Vec<f64> {
            if v.is_empty() {
                Vec::new()
            } else {
                rows.iter().map(|&r| v[r]).collect()
            }
        };
        Self {
            n_agents: n,
            env_obs: take(&self.env_obs, &rows),
            slot_rows,
            mask: take(&self.mask, &rows),
            actions: rows.iter().map(|&r| self.actions[r]).collect(),
            old_log_probs: rows.iter().map(|&r| self.old_log_probs[r]).collect(),
            critic_inputs: take(&self.critic_inputs, &rows),
            rewards: pick(&self.rewards),
            episode_lengths: vec![steps.len()],
            values: pick(&self.values),
            advantages: pick(&self.advantages),
            returns: pick(&self.returns),
            resonet_inputs: take(&self.resonet_inputs, &rows),
            link_noise: take(&self.link_noise, &rows),
            importance: self.importance.as_ref().map(|t| take(t, &rows)),
        }
    }

    pub fn rows(&self) -> usize {
        self.actions.len()
    }
}

/// Generalized advantage estimation over one trajectory; `bootstrap` is the
/// value after the last step (0 for a terminal state).
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "gae: rewards and values differ in length");
    let mut adv = vec![0.0; rewards.len()];
    let mut next_value = bootstrap;
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
        next_value = values[t];
    }
    adv
}

/// Fills values, advantages and return targets (advantages + values) per
/// row; every episode ends in a terminal state.
pub fn compute_advantages(batch: &mut RolloutBatch, nets: &Networks, gamma: f64, lambda: f64, reward_scale: f64) -> Result<()> {
    let n = batch.n_agents;
    let inputs: Vec<Vec<f64>> = (0..batch.critic_inputs.rows())
        .map(|r| batch.critic_inputs.row(r).to_vec())
        .collect();
    batch.values = if inputs.is_empty() { Vec::new() } else { nets.critic_values(&inputs)? };
    let mut adv = vec![0.0; batch.rows()];
    let mut start = 0;
    for &len in &batch.episode_lengths {
        for j in 0..n {
            let rows: Vec<usize> = (start..start + len).map(|t| t * n + j).collect();
            let r: Vec<f64> = rows.iter().map(|&i| batch.rewards[i] * reward_scale).collect();
            let v: Vec<f64> = rows.iter().map(|&i| batch.values[i]).collect();
            for (i, a) in rows.iter().zip(gae(&r, &v, 0.0, gamma, lambda)) {
                adv[*i] = a;
            }
        }
        start += len;
    }
    if adv.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("advantages".into()));
    }
    batch.returns = adv.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
    batch.advantages = adv;
    Ok(())
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Mean clipped surrogate; the policy ascends this value.
pub fn mappo_actor_loss(ratios: &[f64], advantages: &[f64], eps: f64) -> Result<f64> {
    if ratios.len() != advantages.len() || ratios.is_empty() {
        return Err(Error::Domain(format!(
            "{} ratios for {} advantages",
            ratios.len(),
            advantages.len()
        )));
    }
    if let Some(i) = ratios.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("probability ratio at row {i} is {}", ratios[i])));
    }
    Ok(ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clipped_surrogate(r, a, eps))
        .sum::<f64>()
        / ratios.len() as f64)
}

/// Mean squared error.
pub fn critic_loss(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len(), "critic_loss length mismatch");
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / predictions.len() as f64
}

pub struct ActorGraph {
    pub loss: Var,
    pub surrogate: Var,
    pub entropy: Var,
}

/// Negated clipped surrogate minus the entropy bonus.
pub fn actor_loss_graph(
    g: &mut Graph,
    nets: &Networks,
    batch: &RolloutBatch,
    advantages: &[f64],
    eps: f64,
    entropy_coef: f64,
) -> Result<ActorGraph> {
    let rows = batch.rows();
    let n_actions = nets.dims.n_actions;
    let obs = g.input(batch.env_obs.clone());
    let logp = nets.policy_graph(g, obs, &batch.slot_rows, &batch.mask)?;
    let mut onehot = Tensor::zeros(rows, n_actions);
    for (r, &a) in batch.actions.iter().enumerate() {
        onehot.set(r, a, 1.0);
    }
    let onehot = g.input(onehot);
    let chosen = g.row_dot(logp, onehot);
    let old = Tensor::from_vec(rows, 1, batch.old_log_probs.iter().map(|v| -v).collect());
    let diff = g.add_const(chosen, &old);
    let ratio = g.exp(diff);
    let adv = Tensor::from_vec(rows, 1, advantages.to_vec());
    let unclipped = g.mul_const(ratio, adv.clone());
    let clipped = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
    let clipped = g.mul_const(clipped, adv);
    let surr = g.minimum(unclipped, clipped);
    let surrogate = g.mean_all(surr);
    let p = g.exp(logp);
    let plogp = g.row_dot(p, logp);
    let neg_entropy = g.mean_all(plogp);
    let bonus = g.scale(neg_entropy, entropy_coef);
    let neg_surr = g.scale(surrogate, -1.0);
    let loss = g.add(neg_surr, bonus);
    let entropy = g.scale(neg_entropy, -1.0);
    Ok(ActorGraph { loss, surrogate, entropy })
}

pub fn critic_loss_graph(g: &mut Graph, nets: &Networks, inputs: &Tensor, targets: &[f64]) -> Result<Var> {
    let x = g.input(inputs.clone());
    let v = nets.critic_graph(g, x)?;
    let neg = Tensor::from_vec(targets.len(), 1, targets.iter().map(|t| -t).collect());
    let err = g.add_const(v, &neg);
    let sq = g.square(err);
    Ok(g.mean_all(sq))
}

/// `-sum xi * rate(B, P) / L`, averaged per step or per episode. The
/// importance enters as a constant.
pub fn resonet_loss_graph(
    g: &mut Graph,
    nets: &Networks,
    batch: &RolloutBatch,
    importance: &Tensor,
    bandwidth_budget: f64,
    power_budget: f64,
    objective: ResonetObjective,
) -> Result<Var> {
    let x = g.input(batch.resonet_inputs.clone());
    let (fb, fp) = nets.resonet_graph(g, x)?;
    let b = g.scale(fb, bandwidth_budget);
    let p = g.scale(fp, power_budget);
    let bn = g.mul_const(b, batch.link_noise.clone());
    let snr = g.div(p, bn);
    let snr1 = g.add_scalar(snr, 1.0);
    let ln = g.ln(snr1);
    let rate = g.mul(b, ln);
    let weights = importance.map(|xi| xi / (nets.message_bits() * std::f64::consts::LN_2));
    let voi = g.mul_const(rate, weights);
    let total = g.sum_all(voi);
    let denom = match objective {
        ResonetObjective::PerStep => batch.steps(),
        ResonetObjective::PerEpisode => batch.episode_lengths.len(),
    };
    Ok(g.scale(total, -1.0 / denom.max(1) as f64))
}

pub fn resonet_loss(
    nets: &Networks,
    batch: &RolloutBatch,
    importance: &Tensor,
    bandwidth_budget: f64,
    power_budget: f64,
    objective: ResonetObjective,
) -> Result<f64> {
    let mut g = Graph::new();
    let l = resonet_loss_graph(&mut g, nets, batch, importance, bandwidth_budget, power_budget, objective)?;
    Ok(g.value(l).item())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub wait_mean: f64,
    pub mean_latency: Option<f64>,
    pub total_voi: Option<f64>,
    pub actor_objective: f64,
    /// Mean policy entropy in bits.
    pub entropy: f64,
    pub critic_loss: f64,
    pub resonet_loss: Option<f64>,
}

pub struct Trainer {
    pub sim: SimConfig,
    pub config: TrainConfig,
    pub seed: u64,
    policy_opt: Adam,
    critic_opt: Adam,
    resonet_opt: Adam,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let (m, s) = mean_std(v);
    v.iter().map(|x| (x - m) / (s + 1e-8)).collect()
}

impl Trainer {
    pub fn new(sim: SimConfig, config: TrainConfig, seed: u64, nets: &Networks) -> Result<Self> {
        sim.validate()?;
        config.validate()?;
        let opt = |ids, lr| {
            let mut o = Adam::new(&nets.params, ids, lr);
            o.max_grad_norm = Some(config.max_grad_norm);
            o
        };
        Ok(Self {
            policy_opt: opt(nets.policy_ids(), config.actor_lr),
            critic_opt: opt(nets.critic_ids(), config.critic_lr),
            resonet_opt: opt(nets.resonet_ids(), config.resonet_lr),
            sim,
            config,
            seed,
        })
    }

    /// Collects one iteration of rollouts and applies the policy, critic and
    /// ResoNet updates in that order.
    pub fn iteration(&mut self, nets: &mut Networks, iteration: usize) -> Result<IterationMetrics> {
        let mut sim = self.sim.clone();
        sim.compute_importance = sim.mode == Mode::Vil2c;
        let seeds = seeds::episode_seeds(
            self.seed,
            seeds::stream::TRAIN,
            iteration as u64,
            self.config.episodes_per_iteration,
        );
        let rollouts = run_episodes(&sim, nets, &seeds, self.config.workers)?;
        let returns: Vec<f64> = rollouts.iter().map(|r| r.trace.summary.discounted_return).collect();
        let (return_mean, return_std) = mean_std(&returns);
        if !return_mean.is_finite() {
            return Err(Error::NonFinite(format!("mean return at iteration {iteration}")));
        }
        let summaries: Vec<_> = rollouts.iter().map(|r| &r.trace.summary).collect();
        let wait_mean = mean_std(&summaries.iter().map(|s| s.mean_wait).collect::<Vec<_>>()).0;
        let lat: Vec<f64> = summaries.iter().filter_map(|s| s.mean_latency).collect();
        let voi: Vec<f64> = summaries.iter().filter_map(|s| s.mean_total_voi).collect();

        let mut metrics = IterationMetrics {
            iteration,
            return_mean,
            return_std,
            wait_mean,
            mean_latency: (!lat.is_empty()).then(|| mean_std(&lat).0),
            total_voi: (!voi.is_empty()).then(|| mean_std(&voi).0),
            actor_objective: 0.0,
            entropy: 0.0,
            critic_loss: 0.0,
            resonet_loss: None,
        };
        if rollouts.iter().all(|r| r.samples.is_empty()) {
            return Ok(metrics);
        }

        let mut batch = RolloutBatch::from_rollouts(&rollouts, self.config.credit)?;
        compute_advantages(
            &mut batch,
            nets,
            sim.mdp_discount,
            self.config.gae_lambda,
            self.config.reward_scale,
        )?;
        batch.advantages = normalize(&batch.advantages);
        let mut rng = seeds::rng(seeds::derive_seed(
            seeds::derive_seed(self.seed, seeds::stream::MINIBATCH),
            iteration as u64,
        ));
        let mut order: Vec<usize> = (0..batch.steps()).collect();
        let chunk = batch.steps().div_ceil(self.config.minibatches.max(1));
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            for part in order.chunks(chunk) {
                let mb = batch.select_steps(part);
                let mut g = Graph::new();
                let a = actor_loss_graph(
                    &mut g,
                    nets,
                    &mb,
                    &mb.advantages,
                    self.config.clip_epsilon,
                    self.config.entropy_coef,
                )?;
                metrics.actor_objective = g.value(a.surrogate).item();
                metrics.entropy = g.value(a.entropy).item() / std::f64::consts::LN_2;
                if !g.value(a.loss).is_finite() {
                    return Err(Error::NonFinite(format!("actor loss at iteration {iteration}")));
                }
                let grads = g.backward(a.loss)?.param_grads(&nets.params);
                self.policy_opt.step(&mut nets.params, &grads);

                let mut g = Graph::new();
                let c = critic_loss_graph(&mut g, nets, &mb.critic_inputs, &mb.returns)?;
                metrics.critic_loss = g.value(c).item();
                let grads = g.backward(c)?.param_grads(&nets.params);
                self.critic_opt.step(&mut nets.params, &grads);
            }
        }
        if let Some(xi) = batch.importance.clone() {
            for _ in 0..self.config.resonet_epochs {
                let mut g = Graph::new();
                let l = resonet_loss_graph(
                    &mut g,
                    nets,
                    &batch,
                    &xi,
                    sim.bandwidth_budget,
                    sim.power_budget,
                    self.config.resonet_objective,
                )?;
                metrics.resonet_loss = Some(g.value(l).item());
                let grads = g.backward(l)?.param_grads(&nets.params);
                self.resonet_opt.step(&mut nets.params, &grads);
            }
        }
        Ok(metrics)
    }
}

/// Runs `config.iterations` iterations; `observer` sees the metrics and the
/// updated networks after each one.
pub fn train(
    sim: &SimConfig,
    config: &TrainConfig,
    seed: u64,
    nets: &mut Networks,
    mut observer: impl FnMut(&IterationMetrics, &Networks) -> Result<()>,
) -> Result<Vec<IterationMetrics>> {
    let mut trainer = Trainer::new(sim.clone(), config.clone(), seed, nets)?;
    let mut all = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let m = trainer.iteration(nets, it)?;
        observer(&m, nets)?;
        all.push(m);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_examples() {
        let eps = 0.2;
        assert_eq!(mappo_actor_loss(&[1.0, 1.0], &[2.0, -1.0], eps).unwrap(), 0.5);
        assert!((clipped_surrogate(1.0 + 2.0 * eps, 3.0, eps) - 1.2 * 3.0).abs() < 1e-12);
        assert_eq!(mappo_actor_loss(&[0.5, 1.7], &[0.0, 0.0], eps).unwrap(), 0.0);
        assert!(matches!(
            mappo_actor_loss(&[f64::NAN], &[1.0], eps),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn critic_loss_examples() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((critic_loss(&[1.5, 2.5], &[1.0, 2.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gae_degenerate_cases() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2];
        let g = 0.9;
        let td = gae(&r, &v, 0.7, g, 0.0);
        assert!((td[0] - (1.0 + g * 0.1 - 0.3)).abs() < 1e-15);
        assert!((td[2] - (2.0 + g * 0.7 + 0.2)).abs() < 1e-15);
        let mc = gae(&r, &v, 0.0, 1.0, 1.0);
        assert!((mc[0] - (2.5 - 0.3)).abs() < 1e-12);
        assert!((mc[1] - (1.5 - 0.1)).abs() < 1e-12);
        let c = 0.4;
        let gamma = 0.99;
        let vc = c / (1.0 - gamma);
        let flat = gae(&[c; 50], &[vc; 50], vc, gamma, 0.95);
        assert!(flat.iter().all(|a| a.abs() < 1e-9));
    }
}
