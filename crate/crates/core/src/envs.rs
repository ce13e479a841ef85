//! Desk-scale particle environments: Predator-Prey (learned predators chase
//! scripted, faster preys around obstacle landmarks) and Cooperative
//! Navigation (agents cover fixed landmarks).
//!
//! Positions live in an arena `[-h, h]^2` in abstract units; the channel
//! model converts distances to meters via `meters_per_unit`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, MIN_DISTANCE_M};
use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

/// Unit directions for the discrete action set.
pub const ACTION_DIRECTIONS: [Vec2; 5] = [[0.0, 0.0], [0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]];
pub const N_ACTIONS: usize = ACTION_DIRECTIONS.len();
pub const ACTION_NAMES: [&str; 5] = ["stay", "up", "down", "left", "right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Pp,
    Cn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub n_agents: usize,
    pub n_preys: usize,
    pub n_landmarks: usize,
    pub arena_half_width: f64,
    /// Displacement per step at full speed.
    pub agent_speed: f64,
    pub prey_speed: f64,
    pub agent_radius: f64,
    pub landmark_radius: f64,
    pub collision_penalty: f64,
    /// Cooperative Navigation: a landmark counts as covered within this range.
    pub capture_radius: f64,
    /// One observation radius per agent, in arena units.
    pub observation_radii: Vec<f64>,
    /// Scripted preys flee the nearest predator; disabled, they stand still.
    pub prey_evasion: bool,
    /// Predator-Prey: also count landmarks as chase targets in the reward.
    pub landmarks_as_targets: bool,
    pub episode_length: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::predator_prey()
    }
}

impl EnvConfig {
    pub fn predator_prey() -> Self {
        Self {
            kind: EnvKind::Pp,
            n_agents: 4,
            n_preys: 2,
            n_landmarks: 2,
            arena_half_width: 1.0,
            agent_speed: 0.3,
            prey_speed: 0.35,
            agent_radius: 0.05,
            landmark_radius: 0.1,
            collision_penalty: 0.5,
            capture_radius: 0.1,
            // One wide-range scout and three increasingly short-sighted
            // predators, so messages carry information the recipient lacks.
            observation_radii: vec![2.5, 0.4, 0.3, 0.2],
            prey_evasion: true,
            landmarks_as_targets: false,
            episode_length: 25,
        }
    }

    pub fn cooperative_navigation() -> Self {
        Self {
            kind: EnvKind::Cn,
            n_agents: 4,
            n_preys: 0,
            n_landmarks: 4,
            arena_half_width: 1.0,
            agent_speed: 0.3,
            prey_speed: 0.0,
            agent_radius: 0.05,
            landmark_radius: 0.05,
            collision_penalty: 0.5,
            capture_radius: 0.1,
            observation_radii: vec![0.5, 0.5, 0.5, 0.5],
            prey_evasion: false,
            landmarks_as_targets: false,
            episode_length: 25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("env: {m}")));
        if self.n_agents < 2 {
            return fail(format!("need at least 2 agents, got {}", self.n_agents));
        }
        if self.observation_radii.len() != self.n_agents {
            return fail(format!(
                "{} observation radii for {} agents",
                self.observation_radii.len(),
                self.n_agents
            ));
        }
        if self.observation_radii.iter().any(|r| !(*r >= 0.0)) {
            return fail("observation radii must be >= 0".into());
        }
        if !(self.arena_half_width > 0.0) {
            return fail("arena_half_width must be > 0".into());
        }
        if self.agent_speed < 0.0 || self.prey_speed < 0.0 {
            return fail("speeds must be >= 0".into());
        }
        if self.kind == EnvKind::Pp {
            if self.n_preys == 0 {
                return fail("predator-prey needs at least one prey".into());
            }
            if self.prey_speed <= self.agent_speed {
                return fail("preys must be faster than predators".into());
            }
        }
        if self.kind == EnvKind::Cn && self.n_landmarks == 0 {
            return fail("cooperative navigation needs landmarks".into());
        }
        Ok(())
    }

    pub fn obs_width(&self) -> usize {
        let peers = self.n_agents - 1;
        let prey_block = if self.kind == EnvKind::Pp { 5 * self.n_preys } else { 0 };
        4 + 3 * self.n_landmarks + 3 * peers + prey_block
    }

    /// Global state width (critic input, without the time feature).
    pub fn state_width(&self) -> usize {
        let preys = if self.kind == EnvKind::Pp { self.n_preys } else { 0 };
        4 * self.n_agents + 4 * preys + 2 * self.n_landmarks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: Vec<Vec2>,
    /// Last per-step displacement of each agent.
    pub agent_velocities: Vec<Vec2>,
    pub preys: Vec<Vec2>,
    pub prey_velocities: Vec<Vec2>,
    pub landmarks: Vec<Vec2>,
    pub bounds: f64,
}

/// Agent-local observation: environment features and per-peer path loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub env_obs: Vec<f64>,
    /// Path loss in dB to each peer, peers in ascending id order.
    pub channel_obs: Vec<f64>,
}

/// Converts arena distances to meters and evaluates path loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub path_loss_exponent: f64,
    /// dB.
    pub path_loss_offset: f64,
    /// W/Hz.
    pub noise_density: f64,
    pub meters_per_unit: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            path_loss_offset: 40.0,
            noise_density: 1e-11,
            meters_per_unit: 50.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_density > 0.0) {
            return Err(Error::Config("channel: noise_density must be > 0".into()));
        }
        if !(self.path_loss_exponent >= 0.0) {
            return Err(Error::Config("channel: path_loss_exponent must be >= 0".into()));
        }
        if !(self.meters_per_unit > 0.0) {
            return Err(Error::Config("channel: meters_per_unit must be > 0".into()));
        }
        Ok(())
    }

    pub fn distance_m(&self, a: Vec2, b: Vec2) -> f64 {
        (dist(a, b) * self.meters_per_unit).max(MIN_DISTANCE_M)
    }

    pub fn link(&self, sender: usize, recipient: usize, state: &WorldState) -> channel::LinkState {
        channel::LinkState::new(
            sender,
            recipient,
            self.distance_m(state.agents[sender], state.agents[recipient]),
            self.path_loss_exponent,
            self.path_loss_offset,
            self.noise_density,
        )
        .expect("validated channel config")
    }
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn clamp_to_bounds(p: Vec2, h: f64) -> Vec2 {
    [p[0].clamp(-h, h), p[1].clamp(-h, h)]
}

/// Peers of `agent` in ascending id order.
pub fn peers(n_agents: usize, agent: usize) -> impl Iterator<Item = usize> {
    (0..n_agents).filter(move |&j| j != agent)
}

fn random_point(h: f64, rng: &mut impl Rng) -> Vec2 {
    [rng.gen_range(-h..=h), rng.gen_range(-h..=h)]
}

pub fn pp_reset(config: &EnvConfig, rng: &mut impl Rng) -> WorldState {
    let h = config.arena_half_width;
    let agents = (0..config.n_agents).map(|_| random_point(h, rng)).collect();
    let preys = (0..config.n_preys).map(|_| random_point(h, rng)).collect();
    let landmarks = (0..config.n_landmarks).map(|_| random_point(0.8 * h, rng)).collect();
    WorldState {
        agents,
        agent_velocities: vec![[0.0; 2]; config.n_agents],
        preys,
        prey_velocities: vec![[0.0; 2]; config.n_preys],
        landmarks,
        bounds: h,
    }
}

pub fn cn_reset(config: &EnvConfig, rng: &mut impl Rng) -> WorldState {
    let h = config.arena_half_width;
    let agents = (0..config.n_agents).map(|_| random_point(h, rng)).collect();
    let landmarks = (0..config.n_landmarks).map(|_| random_point(0.8 * h, rng)).collect();
    WorldState {
        agents,
        agent_velocities: vec![[0.0; 2]; config.n_agents],
        preys: Vec::new(),
        prey_velocities: Vec::new(),
        landmarks,
        bounds: h,
    }
}

/// Moves a point out of any landmark disc it ended up inside.
fn push_out_of_landmarks(mut p: Vec2, radius: f64, landmarks: &[Vec2], landmark_radius: f64) -> Vec2 {
    for l in landmarks {
        let min = radius + landmark_radius;
        let d = dist(p, *l);
        if d < min {
            let dir = if d > 1e-12 {
                [(p[0] - l[0]) / d, (p[1] - l[1]) / d]
            } else {
                [1.0, 0.0]
            };
            p = [l[0] + dir[0] * min, l[1] + dir[1] * min];
        }
    }
    p
}

fn move_agents(config: &EnvConfig, state: &mut WorldState, displacements: &[Vec2], block_landmarks: bool) {
    let h = state.bounds;
    for (i, d) in displacements.iter().enumerate() {
        let old = state.agents[i];
        let mut p = clamp_to_bounds([old[0] + d[0], old[1] + d[1]], h);
        if block_landmarks {
            p = clamp_to_bounds(
                push_out_of_landmarks(p, config.agent_radius, &state.landmarks, config.landmark_radius),
                h,
            );
        }
        state.agent_velocities[i] = [p[0] - old[0], p[1] - old[1]];
        state.agents[i] = p;
    }
}

/// Number of agents overlapping at least one other agent.
fn colliding_agents(config: &EnvConfig, agents: &[Vec2]) -> usize {
    (0..agents.len())
        .filter(|&i| (0..agents.len()).any(|j| j != i && dist(agents[i], agents[j]) < 2.0 * config.agent_radius))
        .count()
}

pub fn pp_reward(config: &EnvConfig, state: &WorldState) -> f64 {
    let chase: f64 = state
        .agents
        .iter()
        .map(|a| {
            let targets = state
                .preys
                .iter()
                .chain(if config.landmarks_as_targets { state.landmarks.iter() } else { [].iter() });
            targets.map(|t| dist(*a, *t)).fold(f64::INFINITY, f64::min)
        })
        .sum();
    -chase - config.collision_penalty * colliding_agents(config, &state.agents) as f64
}

/// Applies predator displacements, then prey evasion. Returns the new state
/// and the team reward.
pub fn pp_step(config: &EnvConfig, state: &WorldState, displacements: &[Vec2]) -> (WorldState, f64) {
    let mut next = state.clone();
    move_agents(config, &mut next, displacements, true);
    let h = next.bounds;
    for k in 0..next.preys.len() {
        let old = next.preys[k];
        let mut p = old;
        if config.prey_evasion {
            let nearest = next
                .agents
                .iter()
                .min_by(|a, b| dist(**a, old).total_cmp(&dist(**b, old)))
                .copied();
            if let Some(threat) = nearest {
                let d = dist(old, threat);
                if d > 1e-12 {
                    let s = config.prey_speed / d;
                    p = [old[0] + (old[0] - threat[0]) * s, old[1] + (old[1] - threat[1]) * s];
                }
            }
            p = clamp_to_bounds(p, h);
            p = clamp_to_bounds(
                push_out_of_landmarks(p, config.agent_radius, &next.landmarks, config.landmark_radius),
                h,
            );
        }
        next.prey_velocities[k] = [p[0] - old[0], p[1] - old[1]];
        next.preys[k] = p;
    }
    let reward = pp_reward(config, &next);
    (next, reward)
}

pub fn cn_reward(config: &EnvConfig, state: &WorldState) -> f64 {
    let cover: f64 = state
        .landmarks
        .iter()
        .map(|l| state.agents.iter().map(|a| dist(*a, *l)).fold(f64::INFINITY, f64::min))
        .sum();
    -cover - config.collision_penalty * colliding_agents(config, &state.agents) as f64
}

/// Per-agent split of the team reward: each agent's distance to its
/// nearest prey (Predator-Prey) or the landmarks it is nearest to
/// (Cooperative Navigation), plus its own collision penalty. Sums to the
/// team reward.
pub fn agent_rewards(config: &EnvConfig, state: &WorldState) -> Vec<f64> {
    let n = state.agents.len();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let hit = (0..n).any(|j| j != i && dist(state.agents[i], state.agents[j]) < 2.0 * config.agent_radius);
            if hit {
                -config.collision_penalty
            } else {
                0.0
            }
        })
        .collect();
    match config.kind {
        EnvKind::Pp => {
            for (i, a) in state.agents.iter().enumerate() {
                let targets = state
                    .preys
                    .iter()
                    .chain(if config.landmarks_as_targets { state.landmarks.iter() } else { [].iter() });
                out[i] -= targets.map(|t| dist(*a, *t)).fold(f64::INFINITY, f64::min);
            }
        }
        EnvKind::Cn => {
            for l in &state.landmarks {
                let (i, d) = state
                    .agents
                    .iter()
                    .map(|a| dist(*a, *l))
                    .enumerate()
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .expect("at least one agent");
                out[i] -= d;
            }
        }
    }
    out
}

pub fn cn_step(config: &EnvConfig, state: &WorldState, displacements: &[Vec2]) -> (WorldState, f64) {
    let mut next = state.clone();
    move_agents(config, &mut next, displacements, false);
    let reward = cn_reward(config, &next);
    (next, reward)
}

/// Fraction of landmarks with an agent within the capture radius.
pub fn cn_success(config: &EnvConfig, state: &WorldState) -> f64 {
    let covered = state
        .landmarks
        .iter()
        .filter(|l| state.agents.iter().any(|a| dist(*a, **l) <= config.capture_radius))
        .count();
    covered as f64 / state.landmarks.len().max(1) as f64
}

pub fn reset(config: &EnvConfig, rng: &mut impl Rng) -> WorldState {
    match config.kind {
        EnvKind::Pp => pp_reset(config, rng),
        EnvKind::Cn => cn_reset(config, rng),
    }
}

pub fn step(config: &EnvConfig, state: &WorldState, displacements: &[Vec2]) -> (WorldState, f64) {
    match config.kind {
        EnvKind::Pp => pp_step(config, state, displacements),
        EnvKind::Cn => cn_step(config, state, displacements),
    }
}

fn push_entity(out: &mut Vec<f64>, me: Vec2, other: Vec2, velocity: Option<Vec2>, radius: f64) {
    let rel = [other[0] - me[0], other[1] - me[1]];
    let visible = rel[0].hypot(rel[1]) <= radius;
    if visible {
        out.extend_from_slice(&rel);
        if let Some(v) = velocity {
            out.extend_from_slice(&v);
        }
        out.push(1.0);
    } else {
        let width = if velocity.is_some() { 5 } else { 3 };
        out.extend(std::iter::repeat_n(0.0, width));
    }
}

/// Environment features of `agent`: own position and velocity, then
/// landmarks, peers and (Predator-Prey) preys as relative positions with a
/// visibility flag. Entities beyond the agent's radius are zeroed.
pub fn env_observation(config: &EnvConfig, state: &WorldState, agent: usize) -> Vec<f64> {
    let me = state.agents[agent];
    let radius = config.observation_radii[agent];
    let mut out = Vec::with_capacity(config.obs_width());
    out.extend_from_slice(&me);
    out.extend_from_slice(&state.agent_velocities[agent]);
    for l in &state.landmarks {
        push_entity(&mut out, me, *l, None, radius);
    }
    for j in peers(config.n_agents, agent) {
        push_entity(&mut out, me, state.agents[j], None, radius);
    }
    if config.kind == EnvKind::Pp {
        for (p, v) in state.preys.iter().zip(&state.prey_velocities) {
            push_entity(&mut out, me, *p, Some(*v), radius);
        }
    }
    debug_assert_eq!(out.len(), config.obs_width());
    out
}

pub fn observe(config: &EnvConfig, channel: &ChannelConfig, state: &WorldState, agent: usize) -> AgentObservation {
    let channel_obs = peers(config.n_agents, agent)
        .map(|j| channel.link(agent, j, state).path_loss())
        .collect();
    AgentObservation {
        env_obs: env_observation(config, state, agent),
        channel_obs,
    }
}

/// Centralized state: every position and velocity, no masking.
pub fn global_state(config: &EnvConfig, state: &WorldState) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.state_width());
    for (p, v) in state.agents.iter().zip(&state.agent_velocities) {
        out.extend_from_slice(p);
        out.extend_from_slice(v);
    }
    if config.kind == EnvKind::Pp {
        for (p, v) in state.preys.iter().zip(&state.prey_velocities) {
            out.extend_from_slice(p);
            out.extend_from_slice(v);
        }
    }
    for l in &state.landmarks {
        out.extend_from_slice(l);
    }
    out
}
