//! Double deep Q-network agent for the offloading decision.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::env::ObservationState;
use crate::error::{invalid, Error, Result};
use crate::nn::QNetwork;
use crate::rng::{derive_seed, rng_from_seed, SimRng};

pub const STATE_DIM: usize = 4;
pub type State = [f64; STATE_DIM];

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub terminal: bool,
}

/// FIFO experience replay.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    /// Uniform sample of `n` distinct entries, or `None` if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if n == 0 || self.entries.len() < n {
            return None;
        }
        Some(
            index::sample(rng, self.entries.len(), n)
                .into_iter()
                .map(|i| &self.entries[i])
                .collect(),
        )
    }
}

/// Scales raw observations to O(1) network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateScale {
    pub bandwidth: f64,
    pub objects: f64,
    pub streak_horizon: f64,
}

impl Default for StateScale {
    fn default() -> Self {
        Self {
            bandwidth: 10.0,
            objects: 12.0,
            streak_horizon: 20.0,
        }
    }
}

impl StateScale {
    pub fn encode(&self, obs: &ObservationState) -> State {
        [
            obs.similarity,
            obs.bandwidth / self.bandwidth,
            f64::from(obs.complexity) / self.objects,
            (f64::from(obs.streak) / self.streak_horizon).min(1.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdqnHyper {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Target network sync period, in environment steps.
    pub sync_period: u64,
    pub epsilon: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub scale: StateScale,
}

impl Default for DdqnHyper {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 1e-3,
            batch_size: 32,
            sync_period: 100,
            epsilon: 0.3,
            buffer_capacity: 10_000,
            hidden: vec![64, 64],
            scale: StateScale::default(),
        }
    }
}

impl DdqnHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(
                "ddqn.gamma",
                format!("gamma must be in [0,1) (got {})", self.gamma),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("ddqn.learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(invalid("ddqn.batch_size", "must be >= 1"));
        }
        if self.sync_period == 0 {
            return Err(invalid("ddqn.sync_period", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid("ddqn.epsilon", "must be in [0,1]"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(invalid("ddqn.buffer_capacity", "must be >= batch_size"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("ddqn.hidden", "layer widths must be >= 1"));
        }
        let s = &self.scale;
        if !(s.bandwidth > 0.0 && s.objects > 0.0 && s.streak_horizon > 0.0) {
            return Err(invalid("ddqn.scale", "normalization constants must be > 0"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, actions: usize) -> Vec<usize> {
        std::iter::once(STATE_DIM)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(actions))
            .collect()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: one uniform draw decides the branch, a second picks the random
/// action when exploring.
pub fn select_action<R: Rng + ?Sized>(net: &QNetwork, state: &State, epsilon: f64, rng: &mut R) -> usize {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        rng.random_range(0..net.output_dim())
    } else {
        argmax(&net.forward(state))
    }
}

/// Double-DQN targets: the online network picks the next action, the target
/// network scores it.
pub fn td_targets(batch: &[&Transition], net: &QNetwork, target: &QNetwork, gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                let next = argmax(&net.forward(&t.next_state));
                t.reward + gamma * target.forward(&t.next_state)[next]
            }
        })
        .collect()
}

/// One gradient-descent update on a sampled batch. Returns the pre-update
/// batch loss, or `None` when the buffer holds fewer than a batch.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut QNetwork,
    target: &QNetwork,
    buffer: &ReplayBuffer,
    hyper: &DdqnHyper,
    rng: &mut R,
) -> Result<Option<f64>> {
    let Some(batch) = buffer.sample(hyper.batch_size, rng) else {
        return Ok(None);
    };
    let targets = td_targets(&batch, net, target, hyper.gamma);
    let samples: Vec<(&[f64], usize, f64)> = batch
        .iter()
        .zip(&targets)
        .map(|(t, y)| (&t.state[..], t.action, *y))
        .collect();
    let (loss, grads) = net.loss_and_gradient(&samples);
    if !loss.is_finite() {
        return Err(Error::NonFinite("ddqn loss".into()));
    }
    net.apply_gradients(&grads, hyper.learning_rate);
    if !net.is_finite() {
        return Err(Error::NonFinite("ddqn parameters".into()));
    }
    Ok(Some(loss))
}

pub fn sync_target(net: &QNetwork, target: &mut QNetwork) {
    target.clone_from(net);
}

/// Online and target networks with their replay buffer and step counter.
#[derive(Debug, Clone)]
pub struct DdqnAgent {
    pub online: QNetwork,
    pub target: QNetwork,
    pub buffer: ReplayBuffer,
    pub hyper: DdqnHyper,
    steps: u64,
}

impl DdqnAgent {
    pub fn new(hyper: DdqnHyper, actions: usize, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = rng_from_seed(derive_seed(seed, "ddqn-init"));
        let online = QNetwork::new(&hyper.layer_sizes(actions), &mut rng);
        Ok(Self::from_network(online, hyper))
    }

    pub fn from_network(online: QNetwork, hyper: DdqnHyper) -> Self {
        Self {
            target: online.clone(),
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            online,
            hyper,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &State, epsilon: f64, rng: &mut R) -> usize {
        select_action(&self.online, state, epsilon, rng)
    }

    pub fn greedy(&self, state: &State) -> usize {
        argmax(&self.online.forward(state))
    }

    /// Stores the transition, trains once, and syncs the target every
    /// `sync_period` steps.
    pub fn observe<R: Rng + ?Sized>(&mut self, transition: Transition, rng: &mut R) -> Result<Option<f64>> {
        self.buffer.push(transition);
        self.steps += 1;
        let loss = train_step(&mut self.online, &self.target, &self.buffer, &self.hyper, rng)?;
        if self.steps.is_multiple_of(self.hyper.sync_period) {
            sync_target(&self.online, &mut self.target);
        }
        Ok(loss)
    }
}

/// Minimal episodic environment for [`run_algorithm1`].
pub trait Environment {
    fn num_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut SimRng) -> Result<State>;
    /// Returns `(reward, next_state, done)`.
    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<(f64, State, bool)>;
}

/// Trains a fresh agent for `loops` episodes; returns it with the per-episode
/// total reward.
pub fn run_algorithm1<E: Environment>(
    env: &mut E,
    hyper: &DdqnHyper,
    loops: usize,
    seed: u64,
) -> Result<(DdqnAgent, Vec<f64>)> {
    let mut agent = DdqnAgent::new(hyper.clone(), env.num_actions(), seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, "ddqn-run"));
    let mut log = Vec::with_capacity(loops);
    for _ in 0..loops {
        let mut state = env.reset(&mut rng)?;
        let mut total = 0.0;
        loop {
            let action = agent.act(&state, hyper.epsilon, &mut rng);
            let (reward, next_state, done) = env.step(action, &mut rng)?;
            total += reward;
            agent.observe(
                Transition {
                    state,
                    action,
                    reward,
                    next_state,
                    terminal: done,
                },
                &mut rng,
            )?;
            state = next_state;
            if done {
                break;
            }
        }
        log.push(total);
    }
    Ok((agent, log))
}
