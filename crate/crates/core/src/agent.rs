//! Per-agent networks and the progressive reception controller.
//!
//! All agents share one set of parameters (encoder, attention aggregator,
//! actor trunk and head, ResoNet, centralized critic); agents differ only in
//! their observations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use commsim_nn::{Activation, AttentionBlock, CategoricalHead, Graph, Mlp, ParamId, ParamSet, Tensor, Var};

use crate::channel::ResourceAllocation;
use crate::envs::AgentObservation;
use crate::error::{Error, Result};
use crate::voi::{entropy, kl_importance, ActionDistribution};

/// Channel observations (dB) are divided by this before entering ResoNet.
pub const CHANNEL_OBS_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub message_width: usize,
    pub bits_per_element: f64,
    pub hidden_width: usize,
    pub key_width: usize,
    pub attention_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            message_width: 8,
            bits_per_element: 32.0,
            hidden_width: 64,
            key_width: 16,
            attention_width: 16,
        }
    }
}

impl NetworkConfig {
    pub fn message_bits(&self) -> f64 {
        self.message_width as f64 * self.bits_per_element
    }

    pub fn validate(&self) -> Result<()> {
        if self.message_width == 0 || self.hidden_width == 0 || self.key_width == 0 || self.attention_width == 0 {
            return Err(Error::Config("network: widths must be >= 1".into()));
        }
        if !(self.bits_per_element > 0.0) {
            return Err(Error::Config("network: bits_per_element must be > 0".into()));
        }
        Ok(())
    }
}

/// Widths fixed by the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub obs_width: usize,
    /// Critic input width: global state, time feature and one-hot agent id.
    pub state_width: usize,
    pub n_agents: usize,
    pub n_actions: usize,
}

impl Dims {
    /// Widths for an environment; the critic sees the global state, the
    /// normalized time and a one-hot agent id.
    pub fn for_env(env: &crate::envs::EnvConfig) -> Self {
        Self {
            obs_width: env.obs_width(),
            state_width: env.state_width() + 1 + env.n_agents,
            n_agents: env.n_agents,
            n_actions: crate::envs::N_ACTIONS,
        }
    }

    pub fn n_peers(&self) -> usize {
        self.n_agents - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender_id: usize,
    pub payload: Vec<f64>,
    pub size_bits: f64,
    /// Seconds since the start of the step.
    pub dispatch_time: f64,
}

#[derive(Debug, Clone)]
pub struct Networks {
    pub config: NetworkConfig,
    pub dims: Dims,
    pub params: ParamSet,
    encoder: Mlp,
    attention: AttentionBlock,
    trunk: Mlp,
    head: CategoricalHead,
    resonet: Mlp,
    critic: Mlp,
}

impl Networks {
    pub fn new(config: NetworkConfig, dims: Dims, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let (h, w) = (config.hidden_width, config.message_width);
        let encoder = Mlp::new(&mut params, "encoder", &[dims.obs_width, h, w], Activation::Tanh, Activation::Tanh, rng);
        let attention = AttentionBlock::new(
            &mut params,
            "attention",
            w,
            config.key_width,
            config.attention_width,
            config.attention_width,
            rng,
        );
        let trunk = Mlp::new(
            &mut params,
            "trunk",
            &[config.attention_width + w, h, h],
            Activation::Tanh,
            Activation::Tanh,
            rng,
        );
        let head = CategoricalHead::new(&mut params, "actor_head", h, dims.n_actions, rng);
        let resonet = Mlp::new(
            &mut params,
            "resonet",
            &[dims.obs_width + dims.n_peers(), h, 2 * dims.n_peers()],
            Activation::Tanh,
            Activation::Linear,
            rng,
        );
        let critic = Mlp::new(&mut params, "critic", &[dims.state_width, h, h, 1], Activation::Tanh, Activation::Linear, rng);
        // Near-uniform initial policy and allocation.
        for id in head.param_ids().into_iter().chain(resonet.layers.last().unwrap().param_ids()) {
            *params.get_mut(id) = params.get(id).map(|v| 0.01 * v);
        }
        Self {
            config,
            dims,
            params,
            encoder,
            attention,
            trunk,
            head,
            resonet,
            critic,
        }
    }

    pub fn encoder_ids(&self) -> Vec<ParamId> {
        self.encoder.param_ids()
    }

    pub fn attention_ids(&self) -> Vec<ParamId> {
        self.attention.param_ids()
    }

    pub fn trunk_ids(&self) -> Vec<ParamId> {
        let mut ids = self.trunk.param_ids();
        ids.extend(self.head.param_ids());
        ids
    }

    /// Everything the actor loss updates: encoder, aggregator, trunk, head.
    pub fn policy_ids(&self) -> Vec<ParamId> {
        let mut ids = self.encoder_ids();
        ids.extend(self.attention_ids());
        ids.extend(self.trunk_ids());
        ids
    }

    pub fn resonet_ids(&self) -> Vec<ParamId> {
        self.resonet.param_ids()
    }

    pub fn critic_ids(&self) -> Vec<ParamId> {
        self.critic.param_ids()
    }

    pub fn message_bits(&self) -> f64 {
        self.config.message_bits()
    }

    // Graph builders.

    pub fn encode_graph(&self, g: &mut Graph, env_obs: Var) -> Result<Var> {
        Ok(self.encoder.forward(g, &self.params, env_obs)?)
    }

    pub fn aggregate_graph(&self, g: &mut Graph, own: Var, slots: &[Var], mask: &Tensor) -> Result<Var> {
        Ok(self.attention.aggregate(g, &self.params, own, slots, mask)?)
    }

    /// Action log-probabilities from own messages and masked buffer slots.
    pub fn act_graph(&self, g: &mut Graph, own: Var, slots: &[Var], mask: &Tensor) -> Result<Var> {
        let agg = self.aggregate_graph(g, own, slots, mask)?;
        let fused = g.concat_cols(&[agg, own]);
        let h = self.trunk.forward(g, &self.params, fused)?;
        Ok(self.head.log_probs(g, &self.params, h)?)
    }

    /// Budget fractions `(bandwidth, power)`, each `rows x n_peers` with rows
    /// summing to one.
    pub fn resonet_graph(&self, g: &mut Graph, input: Var) -> Result<(Var, Var)> {
        let logits = self.resonet.forward(g, &self.params, input)?;
        let k = self.dims.n_peers();
        let b = g.slice_cols(logits, 0, k);
        let p = g.slice_cols(logits, k, k);
        Ok((g.softmax_rows(b), g.softmax_rows(p)))
    }

    pub fn critic_graph(&self, g: &mut Graph, state: Var) -> Result<Var> {
        Ok(self.critic.forward(g, &self.params, state)?)
    }

    /// Batched policy over `rows = steps x agents` observations where each
    /// row's slots gather peer messages from the same step: `slot_rows[k][r]`
    /// is the row whose message fills slot `k` of row `r`.
    pub fn policy_graph(
        &self,
        g: &mut Graph,
        env_obs: Var,
        slot_rows: &[Vec<Option<usize>>],
        mask: &Tensor,
    ) -> Result<Var> {
        let messages = self.encode_graph(g, env_obs)?;
        let slots: Vec<Var> = slot_rows.iter().map(|idx| g.gather_rows(messages, idx.clone())).collect();
        self.act_graph(g, messages, &slots, mask)
    }

    // Inference helpers.

    pub fn encode_batch(&self, observations: &[&[f64]]) -> Result<Tensor> {
        let mut g = Graph::new();
        let rows: Vec<Vec<f64>> = observations.iter().map(|o| o.to_vec()).collect();
        let x = g.input(Tensor::from_rows(&rows));
        let m = self.encode_graph(&mut g, x)?;
        Ok(g.value(m).clone())
    }

    pub fn encode(&self, sender_id: usize, obs: &AgentObservation) -> Result<Message> {
        let payload = self.encode_batch(&[&obs.env_obs])?.into_vec();
        Ok(Message {
            sender_id,
            payload,
            size_bits: self.message_bits(),
            dispatch_time: 0.0,
        })
    }

    /// Batched action distributions; `own` is `R x w`, each slot `R x w`.
    pub fn act_batch(&self, own: &Tensor, slots: &[Tensor], mask: &Tensor) -> Result<Vec<ActionDistribution>> {
        let mut g = Graph::new();
        let own = g.input(own.clone());
        let slots: Vec<Var> = slots.iter().map(|s| g.input(s.clone())).collect();
        let logp = self.act_graph(&mut g, own, &slots, mask)?;
        let lp = g.value(logp);
        (0..lp.rows())
            .map(|r| {
                let p: Vec<f64> = lp.row(r).iter().map(|v| v.exp()).collect();
                let s: f64 = p.iter().sum();
                ActionDistribution::new(p.iter().map(|v| v / s).collect())
            })
            .collect()
    }

    pub fn fuse_and_act(&self, own: &Message, buffer: &[Message]) -> Result<ActionDistribution> {
        let own_t = Tensor::row_vector(&own.payload);
        let slots: Vec<Tensor> = buffer.iter().map(|m| Tensor::row_vector(&m.payload)).collect();
        let mask = Tensor::filled(1, slots.len(), 1.0);
        Ok(self.act_batch(&own_t, &slots, &mask)?.remove(0))
    }

    pub fn resonet_input(&self, obs: &AgentObservation) -> Vec<f64> {
        let mut x = obs.env_obs.clone();
        x.extend(obs.channel_obs.iter().map(|pl| pl / CHANNEL_OBS_SCALE));
        x
    }

    /// Budget fractions for a batch of ResoNet inputs.
    pub fn resonet_fractions(&self, inputs: &[Vec<f64>]) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_rows(inputs));
        let (b, p) = self.resonet_graph(&mut g, x)?;
        Ok((g.value(b).clone(), g.value(p).clone()))
    }

    pub fn resonet_forward(
        &self,
        obs: &AgentObservation,
        bandwidth_budget: f64,
        power_budget: f64,
    ) -> Result<ResourceAllocation> {
        if obs.channel_obs.len() != self.dims.n_peers() {
            return Err(Error::Domain(format!(
                "channel observation has {} peers, network expects {}",
                obs.channel_obs.len(),
                self.dims.n_peers()
            )));
        }
        let (b, p) = self.resonet_fractions(&[self.resonet_input(obs)])?;
        Ok(ResourceAllocation {
            bandwidth: b.row(0).iter().map(|f| f * bandwidth_budget).collect(),
            power: p.row(0).iter().map(|f| f * power_budget).collect(),
            bandwidth_budget,
            power_budget,
        })
    }

    /// `KL(pi(own, buffer + candidate) || pi(own, buffer))` in bits.
    pub fn compute_importance(&self, own: &Message, buffer: &[Message], candidate: &Message) -> Result<f64> {
        let without = self.fuse_and_act(own, buffer)?;
        let mut with_buffer = buffer.to_vec();
        with_buffer.push(candidate.clone());
        let with = self.fuse_and_act(own, &with_buffer)?;
        Ok(kl_importance(&with, &without)?.bits)
    }

    pub fn critic_values(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_rows(states));
        let v = self.critic_graph(&mut g, x)?;
        Ok(g.value(v).data().to_vec())
    }

    pub fn write_checkpoint(&self, out: impl std::io::Write) -> Result<()> {
        Ok(self.params.write_checkpoint(out)?)
    }

    /// Replaces parameters from a checkpoint; every layer must match by name
    /// and shape.
    pub fn load_checkpoint(&mut self, input: impl std::io::BufRead) -> Result<()> {
        let loaded = ParamSet::read_checkpoint(input)?;
        self.params.load_from(&loaded)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReceptionStatus {
    Waiting,
    Terminated { at: f64, distribution: ActionDistribution },
}

/// Progressive reception of one agent within one step.
#[derive(Debug, Clone)]
pub struct ReceptionState {
    pub buffer: Vec<Message>,
    pub elapsed_wait: f64,
    pub entropy_threshold: f64,
    pub max_wait: f64,
    pub status: ReceptionStatus,
    /// Distribution after the most recent arrival.
    pub latest: Option<ActionDistribution>,
    /// Raised on termination; in-flight messages to this agent are cancelled.
    pub ack: bool,
}

impl ReceptionState {
    pub fn new(entropy_threshold: f64, max_wait: f64) -> Self {
        Self {
            buffer: Vec::new(),
            elapsed_wait: 0.0,
            entropy_threshold,
            max_wait,
            status: ReceptionStatus::Waiting,
            latest: None,
            ack: false,
        }
    }

    pub fn is_terminated(&self) -> bool {
        matches!(self.status, ReceptionStatus::Terminated { .. })
    }
}

/// Advances reception to time `now`.
///
/// With an arrival, the message joins the buffer, the distribution is
/// recomputed with `act_fn` and reception ends if its entropy is at most the
/// threshold. Without one, reception ends once `now` reaches the maximum
/// wait, using the latest distribution or, if none arrived, `act_fn(&[])`.
pub fn reception_step(
    mut state: ReceptionState,
    arrival: Option<Message>,
    now: f64,
    mut act_fn: impl FnMut(&[Message]) -> Result<ActionDistribution>,
) -> Result<ReceptionState> {
    if state.is_terminated() {
        return Err(Error::Domain("reception_step on a terminated reception".into()));
    }
    if now < state.elapsed_wait {
        return Err(Error::Domain(format!(
            "reception time went backwards ({now} < {})",
            state.elapsed_wait
        )));
    }
    state.elapsed_wait = now.min(state.max_wait);
    match arrival {
        Some(message) => {
            state.buffer.push(message);
            let dist = act_fn(&state.buffer)?;
            if entropy(&dist) <= state.entropy_threshold {
                state.status = ReceptionStatus::Terminated {
                    at: state.elapsed_wait,
                    distribution: dist.clone(),
                };
                state.ack = true;
            }
            state.latest = Some(dist);
        }
        None => {
            if now >= state.max_wait {
                let dist = match state.latest.clone() {
                    Some(d) => d,
                    None => act_fn(&state.buffer)?,
                };
                state.status = ReceptionStatus::Terminated {
                    at: state.max_wait,
                    distribution: dist,
                };
                state.ack = true;
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> Dims {
        Dims {
            obs_width: 6,
            state_width: 9,
            n_agents: 3,
            n_actions: 5,
        }
    }

    fn nets(seed: u64) -> Networks {
        Networks::new(NetworkConfig::default(), dims(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn obs(v: f64) -> AgentObservation {
        AgentObservation {
            env_obs: vec![v, -v, 0.5, 0.1, 0.0, 1.0],
            channel_obs: vec![40.0, 55.0],
        }
    }

    #[test]
    fn encode_is_deterministic_and_sized() {
        let n = nets(1);
        let a = n.encode(0, &obs(0.3)).unwrap();
        let b = n.encode(0, &obs(0.3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.payload.len(), 8);
        assert_eq!(a.size_bits, 256.0);
    }

    #[test]
    fn zero_encoder_emits_activation_of_zero() {
        let mut n = nets(1);
        for id in n.encoder_ids() {
            let t = n.params.get(id);
            *n.params.get_mut(id) = Tensor::zeros(t.rows(), t.cols());
        }
        let m = n.encode(0, &obs(0.7)).unwrap();
        assert!(m.payload.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resonet_zero_logits_split_evenly() {
        let mut n = nets(2);
        for id in n.resonet_ids() {
            let t = n.params.get(id);
            *n.params.get_mut(id) = Tensor::zeros(t.rows(), t.cols());
        }
        let a = n.resonet_forward(&obs(0.1), 4.0, 2.0).unwrap();
        assert_eq!(a.bandwidth, vec![2.0, 2.0]);
        assert_eq!(a.power, vec![1.0, 1.0]);
    }

    #[test]
    fn resonet_output_is_budget_feasible() {
        for seed in 0..20 {
            let n = nets(seed);
            let a = n.resonet_forward(&obs(seed as f64 * 0.1), 1e4, 1.0).unwrap();
            assert!((a.bandwidth.iter().sum::<f64>() - 1e4).abs() < 1e-9);
            assert!((a.power.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(a.validate().is_ok());
        }
    }

    #[test]
    fn resonet_rejects_wrong_peer_count() {
        let n = nets(2);
        let mut o = obs(0.1);
        o.channel_obs.push(3.0);
        assert!(n.resonet_forward(&o, 1.0, 1.0).is_err());
    }

    #[test]
    fn fuse_and_act_properties() {
        let n = nets(3);
        let own = n.encode(0, &obs(0.2)).unwrap();
        let m1 = n.encode(1, &obs(-0.4)).unwrap();
        let m2 = n.encode(2, &obs(0.9)).unwrap();
        let a = n.fuse_and_act(&own, &[m1.clone(), m2.clone()]).unwrap();
        let b = n.fuse_and_act(&own, &[m2.clone(), m1.clone()]).unwrap();
        for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
            assert!((x - y).abs() < 1e-12);
        }
        let dup = n.fuse_and_act(&own, &[m1.clone(), m1.clone(), m2]).unwrap();
        assert!((dup.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let empty = n.fuse_and_act(&own, &[]).unwrap();
        assert!(empty.probabilities().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn importance_is_zero_without_value_path() {
        let mut n = nets(4);
        for id in n.attention.value.param_ids() {
            let t = n.params.get(id);
            *n.params.get_mut(id) = Tensor::zeros(t.rows(), t.cols());
        }
        let own = n.encode(0, &obs(0.2)).unwrap();
        let m1 = n.encode(1, &obs(-0.4)).unwrap();
        let m2 = n.encode(2, &obs(0.8)).unwrap();
        // With an empty buffer the aggregate jumps from exactly zero to the
        // output bias, so compare against a non-empty buffer instead.
        let xi = n.compute_importance(&own, &[m1], &m2).unwrap();
        assert!(xi.abs() < 1e-12, "{xi}");
    }

    #[test]
    fn importance_of_duplicate_message_is_small() {
        let n = nets(5);
        let own = n.encode(0, &obs(0.2)).unwrap();
        let m1 = n.encode(1, &obs(-0.4)).unwrap();
        let xi = n.compute_importance(&own, &[m1.clone()], &m1).unwrap();
        // Duplicate keys split the same attention weight: the aggregate is
        // unchanged, so the distributions coincide.
        assert!(xi.abs() < 1e-12, "{xi}");
        for seed in 0..10 {
            let c = n.encode(2, &obs(seed as f64 * 0.3 - 1.0)).unwrap();
            assert!(n.compute_importance(&own, &[m1.clone()], &c).unwrap() >= 0.0);
        }
    }

    fn uniform_act(_: &[Message]) -> Result<ActionDistribution> {
        Ok(ActionDistribution::uniform(4))
    }

    fn peaked_act(_: &[Message]) -> Result<ActionDistribution> {
        ActionDistribution::new(vec![0.99, 0.0033, 0.0033, 0.0034])
    }

    fn msg(sender: usize) -> Message {
        Message {
            sender_id: sender,
            payload: vec![0.0; 8],
            size_bits: 256.0,
            dispatch_time: 0.0,
        }
    }

    #[test]
    fn reception_examples() {
        let s = ReceptionState::new(0.5, 0.6);
        let s = reception_step(s, Some(msg(1)), 0.1, uniform_act).unwrap();
        assert_eq!(s.status, ReceptionStatus::Waiting);
        let s = reception_step(s, Some(msg(2)), 0.2, peaked_act).unwrap();
        assert!(s.is_terminated() && s.ack);
        assert!(reception_step(s, None, 0.3, uniform_act).is_err());

        let s = ReceptionState::new(0.5, 0.6);
        let s = reception_step(s, None, 0.6, uniform_act).unwrap();
        match s.status {
            ReceptionStatus::Terminated { at, distribution } => {
                assert_eq!(at, 0.6);
                assert_eq!(distribution, ActionDistribution::uniform(4));
            }
            ReceptionStatus::Waiting => panic!("should terminate at max wait"),
        }
    }

    #[test]
    fn raising_threshold_never_delays_termination() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let k = rng.gen_range(0..5);
            let mut times: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.8)).collect();
            times.sort_by(f64::total_cmp);
            let ents: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
            let lo = rng.gen_range(0.0..2.0);
            let hi = lo + rng.gen_range(0.0..1.0);
            let run = |threshold: f64| {
                let mut s = ReceptionState::new(threshold, 0.6);
                for (i, &t) in times.iter().enumerate() {
                    if t > 0.6 || s.is_terminated() {
                        break;
                    }
                    let e = ents[i];
                    s = reception_step(s, Some(msg(i)), t, |_| {
                        // Two-point distribution with entropy e/2 .. bounded by 1 bit.
                        let p = entropy_to_p(e / 2.0);
                        ActionDistribution::new(vec![p, 1.0 - p])
                    })
                    .unwrap();
                }
                if !s.is_terminated() {
                    s = reception_step(s, None, 0.6, uniform_act).unwrap();
                }
                match s.status {
                    ReceptionStatus::Terminated { at, .. } => at,
                    ReceptionStatus::Waiting => unreachable!(),
                }
            };
            assert!(run(hi) <= run(lo));
        }
    }

    /// Inverts the binary entropy function on `[0, 0.5]` by bisection.
    fn entropy_to_p(h: f64) -> f64 {
        let h = h.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let e = if mid <= 0.0 { 0.0 } else { -(mid * mid.log2() + (1.0 - mid) * (1.0 - mid).log2()) };
            if e < h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let a = nets(7);
        let mut buf = Vec::new();
        a.write_checkpoint(&mut buf).unwrap();
        let mut b = nets(8);
        b.load_checkpoint(buf.as_slice()).unwrap();
        for id in a.params.ids() {
            assert_eq!(a.params.get(id), b.params.get(id));
        }
        let mut wide = Networks::new(
            NetworkConfig {
                hidden_width: 32,
                ..NetworkConfig::default()
            },
            dims(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let err = wide.load_checkpoint(buf.as_slice()).unwrap_err().to_string();
        assert!(err.contains("encoder.0"), "{err}");
    }
}
