//! Semi-gradient TD(0) with a linear critic on one-hot states is tabular
//! TD, so it must settle on the exact Bellman values.

use dscd_core::a2c::{A2cAgent, A2cConfig, Observation, TransitionRecord};
use dscd_core::nn::{Activation, FeedForwardNet};

#[test]
fn two_state_cycle_converges_to_bellman_values() {
    let gamma = 0.9;
    let (r0, r1) = (1.0, -0.5);
    // s0 -> s1 pays r0, s1 -> s0 pays r1.
    let v0 = (r0 + gamma * r1) / (1.0 - gamma * gamma);
    let v1 = (r1 + gamma * r0) / (1.0 - gamma * gamma);

    let actor = FeedForwardNet::zeroed(&[2, 2], Activation::Identity, Activation::Softmax).unwrap();
    let critic = FeedForwardNet::zeroed(&[2, 1], Activation::Identity, Activation::Identity).unwrap();
    let config = A2cConfig {
        gamma,
        lr_actor: 0.01,
        lr_critic: 0.05,
        grad_clip: None,
    };
    let mut agent = A2cAgent::from_nets(actor, critic, config).unwrap();
    let s = [Observation::new(vec![1.0, 0.0]).unwrap(), Observation::new(vec![0.0, 1.0]).unwrap()];
    let step = |from: usize, reward: f64| TransitionRecord {
        obs: s[from].clone(),
        action: 0,
        reward,
        next_obs: s[1 - from].clone(),
        terminal: false,
        mask: None,
    };
    for i in 0..100_000 {
        let t = if i % 2 == 0 { step(0, r0) } else { step(1, r1) };
        agent.update_critic(&t).unwrap();
    }
    let got0 = agent.critic_value(&s[0]).unwrap();
    let got1 = agent.critic_value(&s[1]).unwrap();
    assert!((got0 - v0).abs() < 1e-2, "{got0} vs {v0}");
    assert!((got1 - v1).abs() < 1e-2, "{got1} vs {v1}");
}
