//! Advantage actor-critic engine.
//!
//! The actor is a softmax policy network, the critic a scalar state-value
//! network. Both learn online from single transitions: the critic takes a
//! semi-gradient TD(0) step on the squared TD error, and the actor ascends
//! `log pi(a | o)` scaled by the same TD error, which serves as the one-step
//! advantage estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::A2cError;
use crate::nn::{softmax, Activation, FeedForwardNet};

/// Encoded agent input. Entries are finite; the encoders in this crate keep
/// them in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(features: Vec<f64>) -> Result<Self, A2cError> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(A2cError::InvalidConfig("observation contains non-finite features".into()));
        }
        Ok(Self(features))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Sample,
    Greedy,
}

/// Probability vector over a discrete action set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, A2cError> {
        if probs.is_empty() {
            return Err(A2cError::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(A2cError::InvalidDistribution(format!("bad entries {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(A2cError::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Greedy picks the argmax (lowest index on ties); sample draws one
    /// uniform variate from `rng` and inverts the CDF.
    pub fn select<R: Rng + ?Sized>(&self, mode: SelectionMode, rng: &mut R) -> usize {
        match mode {
            SelectionMode::Greedy => {
                let mut best = 0;
                for (i, &p) in self.probs.iter().enumerate() {
                    if p > self.probs[best] {
                        best = i;
                    }
                }
                best
            }
            SelectionMode::Sample => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, &p) in self.probs.iter().enumerate() {
                    if p > 0.0 {
                        last_positive = i;
                        acc += p;
                        if u < acc {
                            return i;
                        }
                    }
                }
                // rounding left u above the accumulated mass
                last_positive
            }
        }
    }
}

/// One step of experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
    /// Valid actions when the policy was masked; `None` means all valid.
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A2cConfig {
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Global L2 cap on each update's gradient; `None` disables clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lr_actor: 0.01,
            lr_critic: 0.05,
            grad_clip: Some(10.0),
        }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<(), A2cError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(A2cError::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        for (name, lr) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic)] {
            if !(lr > 0.0 && lr <= 1.0) {
                return Err(A2cError::InvalidConfig(format!("{name} {lr} outside (0, 1]")));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(A2cError::InvalidConfig(format!("grad_clip {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Widths of the two networks. Each net is input -> one hidden layer -> output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentShape {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2cAgent {
    actor: FeedForwardNet,
    critic: FeedForwardNet,
    config: A2cConfig,
}

impl A2cAgent {
    pub fn new<R: Rng + ?Sized>(shape: AgentShape, config: A2cConfig, rng: &mut R) -> Result<Self, A2cError> {
        let actor = FeedForwardNet::new(
            &[shape.obs_dim, shape.actor_hidden, shape.n_actions],
            Activation::Tanh,
            Activation::Softmax,
            rng,
        )?;
        let critic = FeedForwardNet::new(
            &[shape.obs_dim, shape.critic_hidden, 1],
            Activation::Tanh,
            Activation::Identity,
            rng,
        )?;
        Self::from_nets(actor, critic, config)
    }

    pub fn from_nets(actor: FeedForwardNet, critic: FeedForwardNet, config: A2cConfig) -> Result<Self, A2cError> {
        config.validate()?;
        if actor.output_activation() != Activation::Softmax {
            return Err(A2cError::InvalidLayout("actor output must be softmax".into()));
        }
        if critic.output_dim() != 1 {
            return Err(A2cError::InvalidLayout(format!(
                "critic must emit one value, not {}",
                critic.output_dim()
            )));
        }
        if actor.input_dim() != critic.input_dim() {
            return Err(A2cError::InvalidLayout("actor and critic input widths differ".into()));
        }
        Ok(Self { actor, critic, config })
    }

    pub fn actor(&self) -> &FeedForwardNet {
        &self.actor
    }

    pub fn critic(&self) -> &FeedForwardNet {
        &self.critic
    }

    pub fn config(&self) -> &A2cConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn forward_actor(&self, obs: &Observation) -> Result<ActionDistribution, A2cError> {
        ActionDistribution::new(self.actor.forward(obs.as_slice())?)
    }

    /// Policy restricted to `mask`: softmax renormalized over valid actions,
    /// exactly zero elsewhere.
    pub fn policy(&self, obs: &Observation, mask: Option<&[bool]>) -> Result<ActionDistribution, A2cError> {
        match mask {
            None => self.forward_actor(obs),
            Some(mask) => {
                let trace = self.actor.trace(obs.as_slice())?;
                ActionDistribution::new(masked_softmax(trace.logits(), mask)?)
            }
        }
    }

    pub fn critic_value(&self, obs: &Observation) -> Result<f64, A2cError> {
        let v = self.critic.forward(obs.as_slice())?[0];
        if !v.is_finite() {
            return Err(A2cError::NonFinite("critic output"));
        }
        Ok(v)
    }

    /// `R + gamma * V(next) - V(obs)`, with `V(next) = 0` on terminal steps.
    pub fn td_error(&self, t: &TransitionRecord) -> Result<f64, A2cError> {
        let next = if t.terminal {
            0.0
        } else {
            self.critic_value(&t.next_obs)?
        };
        Ok(td_error(t.reward, self.config.gamma, next, self.critic_value(&t.obs)?, t.terminal))
    }

    /// Semi-gradient step on `delta^2`: `w += lr_critic * delta * grad V(obs)`.
    /// Returns the TD error computed before the step.
    pub fn update_critic(&mut self, t: &TransitionRecord) -> Result<f64, A2cError> {
        let delta = self.td_error(t)?;
        if delta == 0.0 {
            return Ok(delta);
        }
        let mut grads = self.critic.gradients(t.obs.as_slice(), &[1.0])?;
        grads.scale(delta);
        if !grads.is_finite() {
            return Err(A2cError::NonFinite("critic"));
        }
        if let Some(c) = self.config.grad_clip {
            grads.clip_norm(c);
        }
        self.critic.apply(&grads, self.config.lr_critic);
        Ok(delta)
    }

    /// Policy-gradient step: `theta += lr_actor * delta * grad log pi(a | obs)`.
    pub fn update_actor(&mut self, t: &TransitionRecord, delta: f64) -> Result<(), A2cError> {
        if t.action >= self.n_actions() {
            return Err(A2cError::InvalidAction {
                index: t.action,
                size: self.n_actions(),
            });
        }
        if delta == 0.0 {
            return Ok(());
        }
        if !delta.is_finite() {
            return Err(A2cError::NonFinite("actor"));
        }
        let mut grads = self.log_prob_gradient(t)?;
        grads.scale(delta);
        if !grads.is_finite() {
            return Err(A2cError::NonFinite("actor"));
        }
        if let Some(c) = self.config.grad_clip {
            grads.clip_norm(c);
        }
        self.actor.apply(&grads, self.config.lr_actor);
        Ok(())
    }

    /// `grad_theta log pi(a | obs)` under the transition's mask.
    pub fn log_prob_gradient(&self, t: &TransitionRecord) -> Result<crate::nn::Gradients, A2cError> {
        let trace = self.actor.trace(t.obs.as_slice())?;
        let probs = match &t.mask {
            Some(mask) => {
                if !mask.get(t.action).copied().unwrap_or(false) {
                    return Err(A2cError::InvalidAction {
                        index: t.action,
                        size: self.n_actions(),
                    });
                }
                masked_softmax(trace.logits(), mask)?
            }
            None => softmax(trace.logits()),
        };
        let grad_z: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == t.action { 1.0 - p } else { -p })
            .collect();
        Ok(self.actor.backward_from_logits(&trace, &grad_z))
    }

    /// Critic step then actor step on the same transition. Returns the TD error.
    pub fn learn(&mut self, t: &TransitionRecord) -> Result<f64, A2cError> {
        let delta = self.update_critic(t)?;
        self.update_actor(t, delta)?;
        Ok(delta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("agent parameters serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, A2cError> {
        let raw: Self = serde_json::from_str(s).map_err(|e| A2cError::InvalidLayout(e.to_string()))?;
        let actor = FeedForwardNet::from_layers(raw.actor.layers().to_vec())?;
        let critic = FeedForwardNet::from_layers(raw.critic.layers().to_vec())?;
        Self::from_nets(actor, critic, raw.config)
    }
}

/// TD(0) error from already-evaluated values.
pub fn td_error(reward: f64, gamma: f64, next_value: f64, value: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * next_value };
    reward + bootstrap - value
}

fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, A2cError> {
    if mask.len() != logits.len() {
        return Err(A2cError::DimensionMismatch {
            expected: logits.len(),
            got: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(A2cError::InvalidDistribution("every action is masked".into()));
    }
    let exps: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&z, &ok)| if ok { (z - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(v: &[f64]) -> Observation {
        Observation::new(v.to_vec()).unwrap()
    }

    fn small_agent(seed: u64) -> A2cAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = AgentShape {
            obs_dim: 4,
            n_actions: 3,
            actor_hidden: 8,
            critic_hidden: 6,
        };
        A2cAgent::new(shape, A2cConfig::default(), &mut rng).unwrap()
    }

    fn zero_agent(obs_dim: usize, n_actions: usize) -> A2cAgent {
        let actor = FeedForwardNet::zeroed(&[obs_dim, 5, n_actions], Activation::Tanh, Activation::Softmax).unwrap();
        let critic = FeedForwardNet::zeroed(&[obs_dim, 5, 1], Activation::Tanh, Activation::Identity).unwrap();
        A2cAgent::from_nets(actor, critic, A2cConfig::default()).unwrap()
    }

    /// Critic with identity activations: V(o) = w2 . (W1 o + b1) + b2.
    fn agent_with_critic_value(next_v: f64, cur_v: f64, gamma: f64) -> A2cAgent {
        let actor = FeedForwardNet::zeroed(&[2, 2, 2], Activation::Tanh, Activation::Softmax).unwrap();
        let mut critic = FeedForwardNet::zeroed(&[2, 1], Activation::Identity, Activation::Identity).unwrap();
        critic.layers_mut()[0].weights = vec![cur_v, next_v];
        A2cAgent::from_nets(
            actor,
            critic,
            A2cConfig {
                gamma,
                ..A2cConfig::default()
            },
        )
        .unwrap()
    }

    fn transition(reward: f64, terminal: bool) -> TransitionRecord {
        TransitionRecord {
            obs: obs(&[1.0, 0.0]),
            action: 0,
            reward,
            next_obs: obs(&[0.0, 1.0]),
            terminal,
            mask: None,
        }
    }

    #[test]
    fn zero_net_is_uniform() {
        let agent = zero_agent(3, 4);
        let d = agent.forward_actor(&obs(&[0.3, 0.9, 0.1])).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(agent.critic_value(&obs(&[0.3, 0.9, 0.1])).unwrap(), 0.0);
    }

    #[test]
    fn two_action_closed_form() {
        let mut actor = FeedForwardNet::zeroed(&[1, 1, 2], Activation::Identity, Activation::Softmax).unwrap();
        actor.layers_mut()[1].biases = vec![0.7, 0.7 + 3f64.ln()];
        let critic = FeedForwardNet::zeroed(&[1, 1, 1], Activation::Tanh, Activation::Identity).unwrap();
        let agent = A2cAgent::from_nets(actor, critic, A2cConfig::default()).unwrap();
        let p = agent.forward_actor(&obs(&[0.5])).unwrap();
        assert!((p.probs()[0] - 0.25).abs() < 1e-12);
        assert!((p.probs()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let agent = small_agent(1);
        assert!(matches!(
            agent.forward_actor(&obs(&[0.0; 3])),
            Err(A2cError::DimensionMismatch { expected: 4, got: 3 })
        ));
        assert!(agent.critic_value(&obs(&[0.0; 5])).is_err());
    }

    #[test]
    fn greedy_and_degenerate_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = ActionDistribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(d.select(SelectionMode::Greedy, &mut rng), 0);
        for _ in 0..100 {
            assert_eq!(d.select(SelectionMode::Sample, &mut rng), 0);
        }
        let tie = ActionDistribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(tie.select(SelectionMode::Greedy, &mut rng), 0);
    }

    #[test]
    fn sampling_frequency_follows_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = ActionDistribution::new(vec![0.25, 0.75]).unwrap();
        let n = 100_000;
        let ones = (0..n).filter(|_| d.select(SelectionMode::Sample, &mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(ActionDistribution::new(vec![]).is_err());
        assert!(ActionDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ActionDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ActionDistribution::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn td_error_arithmetic() {
        let agent = agent_with_critic_value(0.5, 0.2, 0.9);
        assert!((agent.td_error(&transition(1.0, false)).unwrap() - 1.25).abs() < 1e-12);

        let agent = agent_with_critic_value(123.0, 1.0, 0.5);
        assert_eq!(agent.td_error(&transition(1.0, true)).unwrap(), 0.0);

        // fixed point of the bootstrap with gamma = 1
        assert_eq!(td_error(0.0, 1.0, 0.37, 0.37, false), 0.0);
    }

    #[test]
    fn zero_delta_leaves_parameters_bitwise_unchanged() {
        let mut agent = agent_with_critic_value(0.5, 0.95, 0.9);
        // 0.5 + 0.9 * 0.5 - 0.95 = 0
        let t = transition(0.5, false);
        let before = agent.clone();
        let delta = agent.update_critic(&t).unwrap();
        assert_eq!(delta, 0.0);
        agent.update_actor(&t, delta).unwrap();
        assert_eq!(agent.to_json(), before.to_json());
    }

    #[test]
    fn linear_critic_update_matches_closed_form() {
        // V(o) = w . o + b with identity activations; grad wrt w is o, wrt b is 1.
        let actor = FeedForwardNet::zeroed(&[3, 2, 2], Activation::Tanh, Activation::Softmax).unwrap();
        let mut critic = FeedForwardNet::zeroed(&[3, 1], Activation::Identity, Activation::Identity).unwrap();
        critic.layers_mut()[0].weights = vec![0.1, -0.2, 0.3];
        critic.layers_mut()[0].biases = vec![0.05];
        let config = A2cConfig {
            gamma: 0.9,
            lr_actor: 0.01,
            lr_critic: 0.05,
            grad_clip: None,
        };
        let mut agent = A2cAgent::from_nets(actor, critic, config).unwrap();
        let o = [0.5, 1.0, -0.25];
        let o2 = [0.0, 0.3, 0.7];
        let t = TransitionRecord {
            obs: obs(&o),
            action: 1,
            reward: 0.4,
            next_obs: obs(&o2),
            terminal: false,
            mask: None,
        };
        let v = 0.1 * 0.5 - 0.2 * 1.0 + 0.3 * -0.25 + 0.05;
        let v2 = 0.1 * 0.0 - 0.2 * 0.3 + 0.3 * 0.7 + 0.05;
        let delta = 0.4 + 0.9 * v2 - v;
        assert!((agent.update_critic(&t).unwrap() - delta).abs() < 1e-12);
        let layer = &agent.critic().layers()[0];
        let expected = [0.1 + 0.05 * delta * 0.5, -0.2 + 0.05 * delta, 0.3 - 0.05 * delta * 0.25];
        for (w, e) in layer.weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-12);
        }
        assert!((layer.biases[0] - (0.05 + 0.05 * delta)).abs() < 1e-12);
    }

    #[test]
    fn positive_advantage_raises_taken_action_probability() {
        let mut agent = small_agent(7);
        let o = obs(&[0.2, 0.8, 0.5, 0.1]);
        let t = TransitionRecord {
            obs: o.clone(),
            action: 2,
            reward: 1.0,
            next_obs: o.clone(),
            terminal: true,
            mask: None,
        };
        let mut prev = agent.forward_actor(&o).unwrap().probs()[2];
        for _ in 0..20 {
            agent.update_actor(&t, 0.5).unwrap();
            let p = agent.forward_actor(&o).unwrap().probs()[2];
            assert!(p > prev, "{p} <= {prev}");
            prev = p;
        }
    }

    #[test]
    fn negative_advantage_lowers_taken_action_probability() {
        let mut agent = small_agent(8);
        let o = obs(&[0.9, 0.1, 0.4, 0.6]);
        let t = TransitionRecord {
            obs: o.clone(),
            action: 0,
            reward: 0.0,
            next_obs: o.clone(),
            terminal: true,
            mask: None,
        };
        let before = agent.forward_actor(&o).unwrap().probs()[0];
        agent.update_actor(&t, -0.7).unwrap();
        assert!(agent.forward_actor(&o).unwrap().probs()[0] <= before);
    }

    #[test]
    fn masked_policy_zeroes_invalid_actions() {
        let agent = small_agent(3);
        let o = obs(&[0.1, 0.2, 0.3, 0.4]);
        let d = agent.policy(&o, Some(&[true, false, true])).unwrap();
        assert_eq!(d.probs()[1], 0.0);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(agent.policy(&o, Some(&[false, false, false])).is_err());
    }

    #[test]
    fn rejects_bad_hyperparameters_and_actions() {
        let bad = A2cConfig {
            gamma: 1.0,
            ..A2cConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = A2cConfig {
            lr_actor: 0.0,
            ..A2cConfig::default()
        };
        assert!(bad.validate().is_err());
        let mut agent = small_agent(2);
        let mut t = transition(1.0, true);
        t.obs = obs(&[0.0; 4]);
        t.next_obs = obs(&[0.0; 4]);
        t.action = 3;
        assert!(matches!(agent.update_actor(&t, 1.0), Err(A2cError::InvalidAction { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = small_agent(21);
        let restored = A2cAgent::from_json(&agent.to_json()).unwrap();
        assert_eq!(restored, agent);
    }
}
