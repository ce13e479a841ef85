//! Discrete-event engine for one MARL timestep and whole episodes.
//!
//! Within a step every agent observes, encodes a message and dispatches it
//! to every peer at local time 0. Messages arrive after their link latency
//! and are processed in global time order (ties broken by sender id, then
//! recipient id). Each recipient re-evaluates its action distribution per
//! arrival and stops waiting once the entropy falls to the threshold or the
//! maximum wait elapses; on termination its pending messages are cancelled.
//! During the wait the previous action keeps driving the agent.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use commsim_nn::Tensor;

use crate::agent::{reception_step, Message, Networks, ReceptionState, ReceptionStatus};
use crate::channel::{latency, LinkState};
use crate::envs::{self, AgentObservation, ChannelConfig, EnvConfig, EnvKind, WorldState, ACTION_DIRECTIONS};
use crate::error::{Error, Result};
use crate::seeds;
use crate::voi::{entropy, kl_importance, ActionDistribution};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// ResoNet allocation, progressive reception with entropy gating.
    Vil2c,
    /// Full communication without latency.
    Fc,
    /// Equal allocation and a fixed wait.
    Avg,
    /// No transmissions.
    Nocomm,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Vil2c => "vil2c",
            Mode::Fc => "fc",
            Mode::Avg => "avg",
            Mode::Nocomm => "nocomm",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vil2c" => Ok(Mode::Vil2c),
            "fc" => Ok(Mode::Fc),
            "avg" => Ok(Mode::Avg),
            "nocomm" => Ok(Mode::Nocomm),
            other => Err(Error::Config(format!("unknown mode {other:?} (vil2c, fc, avg, nocomm)"))),
        }
    }
}

/// Which buffer the importance of a candidate message is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceBuffer {
    /// The recipient's buffer at termination, with the candidate removed.
    #[default]
    Current,
    /// The recipient's own message only.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimestepClock {
    /// Seconds per MARL step.
    pub step_duration: f64,
    /// Maximum wait before acting, at most `step_duration`.
    pub max_wait: f64,
}

impl TimestepClock {
    pub fn new(step_duration: f64, max_wait: f64) -> Result<Self> {
        let c = Self {
            step_duration,
            max_wait,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_duration > 0.0 && self.max_wait > 0.0 && self.max_wait <= self.step_duration) {
            return Err(Error::Config(format!(
                "clock: need 0 < max_wait <= step_duration, got max_wait {} and step {}",
                self.max_wait, self.step_duration
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub env: EnvConfig,
    pub channel: ChannelConfig,
    pub mode: Mode,
    pub bandwidth_budget: f64,
    pub power_budget: f64,
    pub clock: TimestepClock,
    /// Bits; reception stops once the action entropy is at most this.
    pub entropy_threshold: f64,
    /// Fixed wait of the equal-allocation baseline, as a fraction of a step.
    pub avg_wait_fraction: f64,
    /// Replaces every link latency with this constant (seconds).
    pub injected_latency: Option<f64>,
    pub importance_buffer: ImportanceBuffer,
    /// Record per-link importance (needed for ResoNet training).
    pub compute_importance: bool,
    pub mdp_discount: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.channel.validate()?;
        self.clock.validate()?;
        if !(self.bandwidth_budget >= 0.0 && self.power_budget >= 0.0) {
            return Err(Error::Config("budgets must be >= 0".into()));
        }
        if !(self.entropy_threshold >= 0.0) {
            return Err(Error::Config("entropy_threshold must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.avg_wait_fraction) {
            return Err(Error::Config("avg_wait_fraction must lie in [0, 1]".into()));
        }
        if let Some(t) = self.injected_latency {
            if !(t >= 0.0) {
                return Err(Error::Config("injected latency must be >= 0".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.mdp_discount) {
            return Err(Error::Config("mdp_discount must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAllocation {
    pub bandwidth: Vec<f64>,
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub sender: usize,
    pub recipient: usize,
    /// Dispatch time plus latency.
    pub time: f64,
}

/// One serialized step of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Per sender, per peer (ascending id). Empty when no allocation is made.
    pub allocations: Vec<AgentAllocation>,
    /// Per sender, per peer; `None` for undeliverable or absent links.
    pub latencies: Vec<Vec<Option<f64>>>,
    pub deliveries: Vec<Delivery>,
    pub cancelled: usize,
    pub dropped: usize,
    pub waits: Vec<f64>,
    /// Sender ids in arrival order at termination.
    pub buffers: Vec<Vec<usize>>,
    pub actions: Vec<usize>,
    pub entropies: Vec<f64>,
    pub reward: f64,
    /// Per sender, per peer, in bits.
    pub importance: Option<Vec<Vec<f64>>>,
    pub total_voi: Option<f64>,
    pub mean_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub discounted_return: f64,
    pub total_reward: f64,
    /// Mean of every finite link latency recorded in the episode.
    pub mean_latency: Option<f64>,
    pub mean_wait: f64,
    /// Delivered messages over transmitted messages.
    pub delivered_fraction: f64,
    pub mean_total_voi: Option<f64>,
    /// Cooperative Navigation coverage at the final step.
    pub success: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub mode: Mode,
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeTrace {
    /// Header line, one line per step, then the summary.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let header = serde_json::json!({
            "schema": "commsim-trace",
            "version": TRACE_SCHEMA_VERSION,
            "seed": self.seed,
            "mode": self.mode,
        });
        let io = |e| Error::io("trace", e);
        writeln!(out, "{header}").map_err(io)?;
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r)?).map_err(io)?;
        }
        writeln!(out, "{}", serde_json::json!({ "summary": self.summary })).map_err(io)?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
    }
}

/// Training data for one step; not serialized.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub env_obs: Vec<Vec<f64>>,
    pub resonet_inputs: Vec<Vec<f64>>,
    /// Global state with the normalized time appended.
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    /// Per recipient, per peer slot: whether that peer's message was fused.
    pub masks: Vec<Vec<bool>>,
    pub reward: f64,
    /// Split of `reward` per agent.
    pub agent_rewards: Vec<f64>,
    /// Per sender, per peer: `10^(PL/10) * N0`.
    pub link_noise: Vec<Vec<f64>>,
    pub importance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct EpisodeRollout {
    pub trace: EpisodeTrace,
    pub samples: Vec<StepSample>,
    /// World state at the start of each step.
    pub worlds: Vec<WorldState>,
}

/// Messages, allocations and latencies of one step before reception.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub observations: Vec<AgentObservation>,
    pub messages: Vec<Message>,
    pub resonet_inputs: Vec<Vec<f64>>,
    pub links: Vec<Vec<LinkState>>,
    pub allocations: Vec<AgentAllocation>,
    pub latencies: Vec<Vec<Option<f64>>>,
}

/// Outcome of the reception phase for every agent.
#[derive(Debug, Clone)]
pub struct Reception {
    pub distributions: Vec<ActionDistribution>,
    pub waits: Vec<f64>,
    pub buffers: Vec<Vec<usize>>,
    pub deliveries: Vec<Delivery>,
    pub cancelled: usize,
    pub dropped: usize,
    pub transmitted: usize,
}

fn peer_slot(agent: usize, peer: usize) -> usize {
    if peer < agent {
        peer
    } else {
        peer - 1
    }
}

pub fn transmit(cfg: &SimConfig, nets: &Networks, world: &WorldState) -> Result<Transmission> {
    let n = cfg.env.n_agents;
    let observations: Vec<AgentObservation> =
        (0..n).map(|i| envs::observe(&cfg.env, &cfg.channel, world, i)).collect();
    let rows: Vec<&[f64]> = observations.iter().map(|o| o.env_obs.as_slice()).collect();
    let payloads = nets.encode_batch(&rows)?;
    let bits = nets.message_bits();
    let messages: Vec<Message> = (0..n)
        .map(|i| Message {
            sender_id: i,
            payload: payloads.row(i).to_vec(),
            size_bits: bits,
            dispatch_time: 0.0,
        })
        .collect();
    let resonet_inputs: Vec<Vec<f64>> = observations.iter().map(|o| nets.resonet_input(o)).collect();
    let links: Vec<Vec<LinkState>> = (0..n)
        .map(|i| envs::peers(n, i).map(|j| cfg.channel.link(i, j, world)).collect())
        .collect();
    let k = n - 1;
    let allocations: Vec<AgentAllocation> = match cfg.mode {
        Mode::Vil2c => {
            let (fb, fp) = nets.resonet_fractions(&resonet_inputs)?;
            (0..n)
                .map(|i| AgentAllocation {
                    bandwidth: fb.row(i).iter().map(|f| f * cfg.bandwidth_budget).collect(),
                    power: fp.row(i).iter().map(|f| f * cfg.power_budget).collect(),
                })
                .collect()
        }
        Mode::Avg => (0..n)
            .map(|_| AgentAllocation {
                bandwidth: vec![cfg.bandwidth_budget / k as f64; k],
                power: vec![cfg.power_budget / k as f64; k],
            })
            .collect(),
        Mode::Fc | Mode::Nocomm => Vec::new(),
    };
    let latencies: Vec<Vec<Option<f64>>> = match cfg.mode {
        Mode::Fc => vec![vec![Some(0.0); k]; n],
        Mode::Nocomm => vec![vec![None; k]; n],
        Mode::Vil2c | Mode::Avg => (0..n)
            .map(|i| {
                (0..k)
                    .map(|s| match cfg.injected_latency {
                        Some(t) => Ok(Some(t)),
                        None => {
                            let a = &allocations[i];
                            let rate = links[i][s].rate(a.bandwidth[s], a.power[s]);
                            Ok(latency(bits, rate)?.seconds())
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?,
    };
    Ok(Transmission {
        observations,
        messages,
        resonet_inputs,
        links,
        allocations,
        latencies,
    })
}

/// Deliverable `(time, sender, recipient)` events in processing order.
fn delivery_events(tx: &Transmission) -> Vec<(f64, usize, usize)> {
    let n = tx.messages.len();
    let mut events: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| envs::peers(n, i).enumerate().map(move |(s, j)| (i, s, j)))
        .filter_map(|(i, s, j)| tx.latencies[i][s].map(|t| (t, i, j)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    events
}

/// Removes every pending delivery addressed to `recipient`; returns how many
/// were removed.
pub fn cancel_on_ack(pending: &mut Vec<(f64, usize, usize)>, recipient: usize) -> usize {
    let before = pending.len();
    pending.retain(|e| e.2 != recipient);
    before - pending.len()
}

/// Runs the reception phase of one step under `entropy_threshold`.
pub fn receive(cfg: &SimConfig, nets: &Networks, tx: &Transmission, entropy_threshold: f64) -> Result<Reception> {
    let n = tx.messages.len();
    let events = delivery_events(tx);
    let transmitted = match cfg.mode {
        Mode::Nocomm => 0,
        _ => n * (n - 1),
    };
    let undeliverable = transmitted - events.len();
    let mut deliveries = Vec::new();
    let mut cancelled = 0;
    let mut dropped = undeliverable;
    let (distributions, waits, buffers) = match cfg.mode {
        Mode::Nocomm => {
            let d = (0..n)
                .map(|j| nets.fuse_and_act(&tx.messages[j], &[]))
                .collect::<Result<Vec<_>>>()?;
            (d, vec![0.0; n], vec![Vec::new(); n])
        }
        Mode::Fc | Mode::Avg => {
            let wait = if cfg.mode == Mode::Fc {
                0.0
            } else {
                cfg.avg_wait_fraction * cfg.clock.step_duration
            };
            let mut buffers: Vec<Vec<usize>> = vec![Vec::new(); n];
            for &(t, i, j) in &events {
                if t <= wait {
                    buffers[j].push(i);
                    deliveries.push(Delivery {
                        sender: i,
                        recipient: j,
                        time: t,
                    });
                } else {
                    dropped += 1;
                }
            }
            let d = (0..n)
                .map(|j| {
                    let buf: Vec<Message> = buffers[j].iter().map(|&i| tx.messages[i].clone()).collect();
                    nets.fuse_and_act(&tx.messages[j], &buf)
                })
                .collect::<Result<Vec<_>>>()?;
            (d, vec![wait; n], buffers)
        }
        Mode::Vil2c => {
            let max_wait = cfg.clock.max_wait;
            let mut states: Vec<ReceptionState> =
                (0..n).map(|_| ReceptionState::new(entropy_threshold, max_wait)).collect();
            let mut pending = events;
            pending.reverse();
            while let Some((t, i, j)) = pending.pop() {
                if t > max_wait {
                    dropped += 1 + pending.len();
                    break;
                }
                let own = &tx.messages[j];
                let state = std::mem::replace(&mut states[j], ReceptionState::new(0.0, 0.0));
                let next = reception_step(state, Some(tx.messages[i].clone()), t, |buf| nets.fuse_and_act(own, buf))?;
                deliveries.push(Delivery {
                    sender: i,
                    recipient: j,
                    time: t,
                });
                if next.ack {
                    cancelled += cancel_on_ack(&mut pending, j);
                }
                states[j] = next;
            }
            let mut dists = Vec::with_capacity(n);
            let mut waits = Vec::with_capacity(n);
            let mut buffers = Vec::with_capacity(n);
            for (j, state) in states.into_iter().enumerate() {
                let state = if state.is_terminated() {
                    state
                } else {
                    let own = &tx.messages[j];
                    reception_step(state, None, max_wait, |buf| nets.fuse_and_act(own, buf))?
                };
                let ReceptionStatus::Terminated { at, distribution } = state.status else {
                    unreachable!("reception ends by the maximum wait");
                };
                buffers.push(state.buffer.iter().map(|m| m.sender_id).collect());
                dists.push(distribution);
                waits.push(at);
            }
            (dists, waits, buffers)
        }
    };
    Ok(Reception {
        distributions,
        waits,
        buffers,
        deliveries,
        cancelled,
        dropped,
        transmitted,
    })
}

/// Per-link importance `[sender][peer slot]` given the buffers at
/// termination.
pub fn link_importance(
    nets: &Networks,
    tx: &Transmission,
    buffers: &[Vec<usize>],
    mode: ImportanceBuffer,
) -> Result<Vec<Vec<f64>>> {
    let n = tx.messages.len();
    let k = n - 1;
    let w = tx.messages[0].payload.len();
    let mut rows = Vec::new();
    for j in 0..n {
        for i in envs::peers(n, j) {
            let base: Vec<usize> = match mode {
                ImportanceBuffer::Current => buffers[j].iter().copied().filter(|&s| s != i).collect(),
                ImportanceBuffer::Empty => Vec::new(),
            };
            let mut with = base.clone();
            with.push(i);
            rows.push((j, with));
            rows.push((j, base));
        }
    }
    let r = rows.len();
    let mut own = Tensor::zeros(r, w);
    let mut slots = vec![Tensor::zeros(r, w); k];
    let mut mask = Tensor::zeros(r, k);
    for (row, (j, set)) in rows.iter().enumerate() {
        own.row_mut(row).copy_from_slice(&tx.messages[*j].payload);
        for (s, p) in envs::peers(n, *j).enumerate() {
            slots[s].row_mut(row).copy_from_slice(&tx.messages[p].payload);
            if set.contains(&p) {
                mask.set(row, s, 1.0);
            }
        }
    }
    let dists = nets.act_batch(&own, &slots, &mask)?;
    let mut xi = vec![vec![0.0; k]; n];
    let mut row = 0;
    for j in 0..n {
        for i in envs::peers(n, j) {
            xi[i][peer_slot(i, j)] = kl_importance(&dists[row], &dists[row + 1])?.bits;
            row += 2;
        }
    }
    Ok(xi)
}

/// Termination times of every agent under each threshold, for the same
/// world and messages.
pub fn termination_times(
    cfg: &SimConfig,
    nets: &Networks,
    world: &WorldState,
    thresholds: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let tx = transmit(cfg, nets, world)?;
    thresholds
        .iter()
        .map(|&th| Ok(receive(cfg, nets, &tx, th)?.waits))
        .collect()
}

pub struct StepOutcome {
    pub record: StepRecord,
    pub sample: StepSample,
    pub next_world: WorldState,
}

/// Displacement under the wait/execute split of one step.
pub fn blended_displacement(speed: f64, wait_fraction: f64, previous: usize, new: usize) -> [f64; 2] {
    let (a, b) = (ACTION_DIRECTIONS[previous], ACTION_DIRECTIONS[new]);
    let f = wait_fraction.clamp(0.0, 1.0);
    [speed * (f * a[0] + (1.0 - f) * b[0]), speed * (f * a[1] + (1.0 - f) * b[1])]
}

pub fn run_timestep(
    cfg: &SimConfig,
    nets: &Networks,
    world: &WorldState,
    previous_actions: &[usize],
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome> {
    let n = cfg.env.n_agents;
    let draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let tx = transmit(cfg, nets, world)?;
    let rx = receive(cfg, nets, &tx, cfg.entropy_threshold)?;

    let actions: Vec<usize> = rx.distributions.iter().zip(&draws).map(|(d, &u)| d.sample_with(u)).collect();
    let log_probs: Vec<f64> = rx
        .distributions
        .iter()
        .zip(&actions)
        .map(|(d, &a)| d.probabilities()[a].ln())
        .collect();
    let entropies: Vec<f64> = rx.distributions.iter().map(entropy).collect();

    let displacements: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            blended_displacement(
                cfg.env.agent_speed,
                rx.waits[i] / cfg.clock.step_duration,
                previous_actions[i],
                actions[i],
            )
        })
        .collect();
    let (next_world, reward) = envs::step(&cfg.env, world, &displacements);

    let importance = if cfg.compute_importance && cfg.mode == Mode::Vil2c {
        Some(link_importance(nets, &tx, &rx.buffers, cfg.importance_buffer)?)
    } else {
        None
    };
    let total_voi = importance.as_ref().map(|xi| {
        (0..n)
            .map(|i| {
                (0..n - 1)
                    .map(|s| {
                        let a = &tx.allocations[i];
                        xi[i][s] * tx.links[i][s].rate(a.bandwidth[s], a.power[s]) / nets.message_bits()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
    });
    let finite: Vec<f64> = tx.latencies.iter().flatten().flatten().copied().collect();
    let mean_latency = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);

    let mut state = envs::global_state(&cfg.env, world);
    state.push(t as f64 / cfg.env.episode_length.max(1) as f64);
    let masks: Vec<Vec<bool>> = (0..n)
        .map(|j| envs::peers(n, j).map(|p| rx.buffers[j].contains(&p)).collect())
        .collect();
    let link_noise: Vec<Vec<f64>> = tx
        .links
        .iter()
        .map(|row| row.iter().map(|l| 10f64.powf(l.path_loss() / 10.0) * l.noise_density).collect())
        .collect();

    let record = StepRecord {
        t,
        allocations: tx.allocations.clone(),
        latencies: tx.latencies.clone(),
        deliveries: rx.deliveries.clone(),
        cancelled: rx.cancelled,
        dropped: rx.dropped,
        waits: rx.waits.clone(),
        buffers: rx.buffers.clone(),
        actions: actions.clone(),
        entropies,
        reward,
        importance: importance.clone(),
        total_voi,
        mean_latency,
    };
    let sample = StepSample {
        env_obs: tx.observations.iter().map(|o| o.env_obs.clone()).collect(),
        resonet_inputs: tx.resonet_inputs.clone(),
        state,
        actions,
        log_probs,
        masks,
        reward,
        agent_rewards: envs::agent_rewards(&cfg.env, &next_world),
        link_noise,
        importance,
    };
    Ok(StepOutcome {
        record,
        sample,
        next_world,
    })
}

pub fn run_episode(cfg: &SimConfig, nets: &Networks, seed: u64) -> Result<EpisodeRollout> {
    let mut rng = seeds::rng(seed);
    let mut world = envs::reset(&cfg.env, &mut rng);
    let n = cfg.env.n_agents;
    let mut previous = vec![0usize; n];
    let mut records = Vec::with_capacity(cfg.env.episode_length);
    let mut samples = Vec::with_capacity(cfg.env.episode_length);
    let mut worlds = Vec::with_capacity(cfg.env.episode_length);
    for t in 0..cfg.env.episode_length {
        let out = run_timestep(cfg, nets, &world, &previous, t, &mut rng)?;
        if !out.record.reward.is_finite() {
            return Err(Error::NonFinite(format!("reward at step {t}")));
        }
        previous.clone_from(&out.record.actions);
        worlds.push(std::mem::replace(&mut world, out.next_world));
        records.push(out.record);
        samples.push(out.sample);
    }
    let summary = summarize(cfg, &records, &world);
    Ok(EpisodeRollout {
        trace: EpisodeTrace {
            seed,
            mode: cfg.mode,
            records,
            summary,
        },
        samples,
        worlds,
    })
}

fn summarize(cfg: &SimConfig, records: &[StepRecord], final_world: &WorldState) -> EpisodeSummary {
    let mut discounted = 0.0;
    let mut factor = 1.0;
    for r in records {
        discounted += factor * r.reward;
        factor *= cfg.mdp_discount;
    }
    let latencies: Vec<f64> = records
        .iter()
        .flat_map(|r| r.latencies.iter().flatten().flatten().copied())
        .collect();
    let waits: Vec<f64> = records.iter().flat_map(|r| r.waits.iter().copied()).collect();
    let n = cfg.env.n_agents;
    let transmitted = match cfg.mode {
        Mode::Nocomm => 0,
        _ => records.len() * n * (n - 1),
    };
    let delivered: usize = records.iter().map(|r| r.deliveries.len()).sum();
    let vois: Vec<f64> = records.iter().filter_map(|r| r.total_voi).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    EpisodeSummary {
        steps: records.len(),
        discounted_return: discounted,
        total_reward: records.iter().map(|r| r.reward).sum(),
        mean_latency: mean(&latencies),
        mean_wait: mean(&waits).unwrap_or(0.0),
        delivered_fraction: if transmitted == 0 {
            0.0
        } else {
            delivered as f64 / transmitted as f64
        },
        mean_total_voi: mean(&vois),
        success: (cfg.env.kind == EnvKind::Cn).then(|| envs::cn_success(&cfg.env, final_world)),
    }
}

/// Runs one episode per seed, in parallel over `workers` threads; output
/// order follows `seeds` regardless of scheduling.
pub fn run_episodes(cfg: &SimConfig, nets: &Networks, seeds: &[u64], workers: usize) -> Result<Vec<EpisodeRollout>> {
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| run_episode(cfg, nets, s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| run_episode(cfg, nets, s)).collect())
}
