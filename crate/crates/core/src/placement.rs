//! Placement of the scheduler function at the DU or the CU.
//!
//! At every epoch boundary a single shared actor-critic agent picks a
//! location for each DU. Running at the DU avoids midhaul latency; running
//! at the CU lets the scheduler see the other CU-attached cells' RBG maps.
//! The reward for an epoch averages `tau * U * D + lambda * R3` over the
//! packets that left the DU's queues during it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::a2c::{A2cAgent, Observation, SelectionMode, TransitionRecord};
use crate::error::{A2cError, ConfigError};
use crate::traffic::TrafficClass;

pub const PLACEMENT_FEATURES: usize = 8;
pub const PLACEMENT_ACTIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Du,
    Cu,
}

impl Location {
    pub fn from_action(a: usize) -> Self {
        if a == 0 {
            Location::Du
        } else {
            Location::Cu
        }
    }

    pub fn action(self) -> usize {
        match self {
            Location::Du => 0,
            Location::Cu => 1,
        }
    }

    pub fn is_du(self) -> bool {
        self == Location::Du
    }
}

/// One location per DU for the coming epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementAction {
    pub locations: Vec<Location>,
}

impl PlacementAction {
    pub fn uniform(n_du: usize, loc: Location) -> Self {
        Self {
            locations: vec![loc; n_du],
        }
    }

    pub fn cu_count(&self) -> usize {
        self.locations.iter().filter(|l| **l == Location::Cu).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    /// Added to every packet's age while its scheduler runs at the CU.
    pub cu_extra_delay_ms: f64,
    /// Whether CU-placed schedulers coordinate RBG usage.
    pub interference_coordination: bool,
    pub epoch_length: u64,
    pub tau: f64,
    pub lambda: f64,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    /// Queued bits at which the queue-depth feature saturates.
    pub queue_norm_bits: f64,
    pub train: bool,
    /// Overrides the learned choice with a fixed location in `dscd` mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin: Option<Location>,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            cu_extra_delay_ms: 2.0,
            interference_coordination: true,
            epoch_length: 10,
            tau: 0.5,
            lambda: 0.5,
            actor_hidden: 900,
            critic_hidden: 100,
            queue_norm_bits: 100_000.0,
            train: true,
            pin: None,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.cu_extra_delay_ms >= 0.0 && self.cu_extra_delay_ms.is_finite()) {
            return Err(ConfigError::new("placement.cu_extra_delay_ms", "must be finite and >= 0"));
        }
        if self.epoch_length < 1 {
            return Err(ConfigError::new("placement.epoch_length", "must be >= 1"));
        }
        for (key, v) in [("placement.tau", self.tau), ("placement.lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::new(key, "must be finite and >= 0"));
            }
        }
        if self.actor_hidden == 0 {
            return Err(ConfigError::new("placement.actor_hidden", "must be >= 1"));
        }
        if self.critic_hidden == 0 {
            return Err(ConfigError::new("placement.critic_hidden", "must be >= 1"));
        }
        if !(self.queue_norm_bits > 0.0 && self.queue_norm_bits.is_finite()) {
            return Err(ConfigError::new("placement.queue_norm_bits", "must be > 0"));
        }
        Ok(())
    }

    pub fn extra_delay_ms(&self, loc: Location) -> f64 {
        match loc {
            Location::Du => 0.0,
            Location::Cu => self.cu_extra_delay_ms,
        }
    }
}

/// `tau * U * D + lambda * R3` for one packet.
pub fn dscd_reward(urllc: bool, at_du: bool, r3: f64, tau: f64, lambda: f64) -> f64 {
    let u = if urllc { 1.0 } else { 0.0 };
    let d = if at_du { 1.0 } else { 0.0 };
    tau * u * d + lambda * r3
}

/// A packet that left a DU's queues during the epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    pub class: TrafficClass,
    /// Within-budget indicator for the packet (delivered vs dropped).
    pub r3: f64,
}

/// Mean per-packet reward over an epoch; `None` when nothing left the
/// queues.
pub fn epoch_reward(samples: &[RewardSample], loc: Location, cfg: &PlacementConfig) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let sum: f64 = samples
        .iter()
        .map(|s| dscd_reward(s.class.is_urllc(), loc.is_du(), s.r3, cfg.tau, cfg.lambda))
        .sum();
    Some(sum / samples.len() as f64)
}

/// What the placement agent sees of one DU at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DuSnapshot {
    /// URLLC packets as a share of all queued packets.
    pub urllc_share: f64,
    /// Mean HoL/budget ratio per class over the DU's backlogged UEs.
    pub hol_ratio: [f64; 3],
    pub queued_bits: u64,
    pub location: Location,
    /// Share of this DU's granted RBGs that collided during the last epoch.
    pub interfered_share: f64,
}

pub fn placement_observation(du: &DuSnapshot, cu_load: f64, cfg: &PlacementConfig) -> Observation {
    let mut f = Vec::with_capacity(PLACEMENT_FEATURES);
    f.push(du.urllc_share.clamp(0.0, 1.0));
    for r in du.hol_ratio {
        f.push(r.clamp(0.0, 2.0) / 2.0);
    }
    f.push((du.queued_bits as f64 / cfg.queue_norm_bits).min(1.0));
    f.push(if du.location == Location::Cu { 1.0 } else { 0.0 });
    f.push(cu_load.clamp(0.0, 1.0));
    f.push(du.interfered_share.clamp(0.0, 1.0));
    debug_assert_eq!(f.len(), PLACEMENT_FEATURES);
    Observation::new(f).expect("finite features")
}

/// Who decides the location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementPolicy {
    Learned,
    /// The agent still observes and samples, but its choice is overridden.
    Pinned(Location),
}

/// Outcome of one epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDecision {
    pub action: PlacementAction,
    pub observations: Vec<Observation>,
    /// Transitions closing the previous epoch, one per DU that had samples.
    pub transitions: Vec<TransitionRecord>,
}

/// State the placement agent carries across epochs for one DU.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingDecision {
    pub obs: Observation,
    pub location: Location,
}

/// Closes the previous epoch (learning from its reward when `train`) and
/// picks each DU's location for the next one.
#[allow(clippy::too_many_arguments)]
pub fn placement_epoch<R: Rng + ?Sized>(
    agent: &mut A2cAgent,
    snapshots: &[DuSnapshot],
    pending: &[Option<PendingDecision>],
    samples: &[Vec<RewardSample>],
    cfg: &PlacementConfig,
    policy: PlacementPolicy,
    selection: SelectionMode,
    train: bool,
    rng: &mut R,
) -> Result<EpochDecision, A2cError> {
    let n = snapshots.len();
    if pending.len() != n || samples.len() != n {
        return Err(A2cError::DimensionMismatch {
            expected: n,
            got: pending.len().min(samples.len()),
        });
    }
    let cu_load = if n == 0 {
        0.0
    } else {
        snapshots.iter().filter(|s| s.location == Location::Cu).count() as f64 / n as f64
    };
    let observations: Vec<Observation> = snapshots
        .iter()
        .map(|s| placement_observation(s, cu_load, cfg))
        .collect();

    let mut transitions = Vec::new();
    for du in 0..n {
        let Some(prev) = &pending[du] else { continue };
        let Some(reward) = epoch_reward(&samples[du], prev.location, cfg) else {
            continue;
        };
        transitions.push(TransitionRecord {
            obs: prev.obs.clone(),
            action: prev.location.action(),
            reward,
            next_obs: observations[du].clone(),
            terminal: false,
            mask: None,
        });
    }
    if train {
        for t in &transitions {
            agent.learn(t)?;
        }
    }

    let mut locations = Vec::with_capacity(n);
    for obs in &observations {
        let dist = agent.policy(obs, None)?;
        let chosen = Location::from_action(dist.select(selection, rng));
        locations.push(match policy {
            PlacementPolicy::Learned => chosen,
            PlacementPolicy::Pinned(loc) => loc,
        });
    }

    Ok(EpochDecision {
        action: PlacementAction { locations },
        observations,
        transitions,
    })
}

/// Fraction of placement decisions at the DU and at the CU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelocationRatio {
    pub du: f64,
    pub cu: f64,
}

/// `None` when no decisions were counted.
pub fn relocation_ratio(du_count: u64, cu_count: u64) -> Option<RelocationRatio> {
    let total = du_count + cu_count;
    if total == 0 {
        return None;
    }
    let du = du_count as f64 / total as f64;
    Some(RelocationRatio { du, cu: 1.0 - du })
}
