//! A from-scratch DDPG learner: simplex-headed actor, scalar critic, target
//! networks with soft updates, Adam, and a ring replay buffer.

mod nn;
mod replay;

pub use nn::{
    adam_step, adam_update_slice, soft_update, softmax, softmax_backward, Activation, AdamSlice,
    AdamState, Dense, ForwardCache, Mlp, MlpGrad, NnError,
};
pub use replay::{ReplayBuffer, Transition};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint decode: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("checkpoint version {0} unsupported")]
    BadVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Actor step size; also the critic's unless overridden below.
    pub learning_rate: f64,
    /// Critic step size; `None` reuses `learning_rate`.
    pub critic_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub discount_gamma: f64,
    pub soft_update_tau: f64,
    pub buffer_capacity: usize,
    pub hidden_width: usize,
    /// Multiplier applied to rewards inside the TD target, keeping Q values
    /// near O(1) so the critic spends its budget on shape, not offset.
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            critic_learning_rate: None,
            batch_size: 256,
            discount_gamma: 0.95,
            soft_update_tau: 0.005,
            buffer_capacity: 100_000,
            hidden_width: 256,
            reward_scale: 1.0,
        }
    }
}

/// Result of one learning update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

pub struct DdpgAgent {
    pub config: AgentConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub buffer: ReplayBuffer,
    rng: ChaCha8Rng,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: AgentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_width;
        // Zero final actor layer: the initial policy is exactly uniform.
        let actor = Mlp::new(&[state_dim, h, h, action_dim], Activation::Relu, true, &mut rng);
        let critic = Mlp::new(
            &[state_dim + action_dim, h, h, 1],
            Activation::Relu,
            false,
            &mut rng,
        );
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = AdamState::zeros_like(&actor);
        let critic_opt = AdamState::zeros_like(&critic);
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Self {
            config,
            state_dim,
            action_dim,
            actor,
            actor_target,
            critic,
            critic_target,
            actor_opt,
            critic_opt,
            buffer,
            rng,
        }
    }

    /// Deterministic policy: two ReLU layers, exponential-normalization
    /// head, so the action is strictly positive and sums to one.
    pub fn actor_forward(actor: &Mlp, state: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(softmax(&actor.forward(state)?.output))
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>, NnError> {
        Self::actor_forward(&self.actor, state)
    }

    pub fn critic_forward(critic: &Mlp, state: &[f64], action: &[f64]) -> Result<f64, NnError> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        Ok(critic.forward(&input)?.output[0])
    }

    pub fn push(&mut self, transition: Transition) {
        self.buffer.push(transition);
    }

    /// One DDPG update from a sampled batch; `None` while the buffer holds
    /// fewer than `batch_size` transitions.
    pub fn train_step(&mut self) -> Result<Option<TrainStats>, AgentError> {
        let batch_size = self.config.batch_size;
        let Some(batch) = self.buffer.sample(batch_size, &mut self.rng) else {
            return Ok(None);
        };
        let batch: Vec<Transition> = batch.into_iter().cloned().collect();
        let gamma = self.config.discount_gamma;
        let lr = self.config.learning_rate;
        let critic_lr = self.config.critic_learning_rate.unwrap_or(lr);
        let scale = self.config.reward_scale;
        let inv_b = 1.0 / batch_size as f64;

        // Critic regression toward y = r + gamma * Q'(s', pi'(s')).
        let mut critic_grads = MlpGrad::zeros_like(&self.critic);
        let mut critic_loss = 0.0;
        for t in &batch {
            let next_action = Self::actor_forward(&self.actor_target, &t.next_state)?;
            let q_next = Self::critic_forward(&self.critic_target, &t.next_state, &next_action)?;
            let y = scale * t.reward + gamma * q_next;

            let mut input = t.state.clone();
            input.extend_from_slice(&t.action);
            let cache = self.critic.forward(&input)?;
            let q = cache.output[0];
            let err = q - y;
            critic_loss += err * err * inv_b;
            self.critic.backward(&cache, &[2.0 * err * inv_b], &mut critic_grads);
        }
        adam_step(&mut self.critic, &critic_grads, &mut self.critic_opt, critic_lr)?;

        // Actor ascends mean Q(s, pi(s)) through the (updated) critic.
        let mut actor_grads = MlpGrad::zeros_like(&self.actor);
        let mut critic_scratch = MlpGrad::zeros_like(&self.critic);
        let mut actor_objective = 0.0;
        for t in &batch {
            let actor_cache = self.actor.forward(&t.state)?;
            let action = softmax(&actor_cache.output);
            let mut input = t.state.clone();
            input.extend_from_slice(&action);
            let critic_cache = self.critic.forward(&input)?;
            actor_objective += critic_cache.output[0] * inv_b;
            // Minimize -Q: input gradient of the critic, action block only.
            let input_grad = self
                .critic
                .backward(&critic_cache, &[-inv_b], &mut critic_scratch);
            let action_grad = &input_grad[self.state_dim..];
            let logit_grad = softmax_backward(&action, action_grad);
            self.actor.backward(&actor_cache, &logit_grad, &mut actor_grads);
        }
        adam_step(&mut self.actor, &actor_grads, &mut self.actor_opt, lr)?;

        soft_update(&mut self.actor_target, &self.actor, self.config.soft_update_tau);
        soft_update(&mut self.critic_target, &self.critic, self.config.soft_update_tau);

        Ok(Some(TrainStats {
            critic_loss,
            actor_objective,
        }))
    }

    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<(), AgentError> {
        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            actor: self.actor.clone(),
            actor_target: self.actor_target.clone(),
            critic: self.critic.clone(),
            critic_target: self.critic_target.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            buffer_len: self.buffer.len(),
            buffer_capacity: self.buffer.capacity(),
        };
        std::fs::write(path, serde_json::to_vec(&checkpoint)?)?;
        Ok(())
    }

    /// Restore parameters and optimizer moments; the replay buffer restarts
    /// empty (its metadata is kept for inspection only).
    pub fn load_checkpoint(path: &std::path::Path, seed: u64) -> Result<Self, AgentError> {
        let bytes = std::fs::read(path)?;
        let checkpoint: Checkpoint = serde_json::from_slice(&bytes)?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(AgentError::BadVersion(checkpoint.version));
        }
        let buffer = ReplayBuffer::new(checkpoint.buffer_capacity);
        Ok(Self {
            config: checkpoint.config,
            state_dim: checkpoint.state_dim,
            action_dim: checkpoint.action_dim,
            actor: checkpoint.actor,
            actor_target: checkpoint.actor_target,
            critic: checkpoint.critic,
            critic_target: checkpoint.critic_target,
            actor_opt: checkpoint.actor_opt,
            critic_opt: checkpoint.critic_opt,
            buffer,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    actor_target: Mlp,
    critic: Mlp,
    critic_target: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    buffer_len: usize,
    buffer_capacity: usize,
}
