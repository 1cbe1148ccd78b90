//! Actor-critic RBG scheduler.
//!
//! Each TTI the scheduler walks a cell's RBGs in index order and, for each
//! one, asks the actor to pick a UE slot. The reward for a choice is the sum
//! of three binary terms: above-average channel quality, URLLC traffic, and
//! a head-of-line packet still inside its delay budget. Within a TTI the
//! next RBG's observation bootstraps the previous decision; the last
//! decision of the TTI is terminal.

use rand::Rng;

use crate::a2c::{A2cAgent, Observation, SelectionMode, TransitionRecord};
use crate::error::A2cError;
use crate::ran::{rbg_capacity, ChannelParams, RbgAllocation, UeId};
use crate::traffic::TrafficClass;

pub const FEATURES_PER_SLOT: usize = 5;

/// HoL/budget ratios are capped here before scaling to [0, 1].
const HOL_RATIO_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerParams {
    pub slots: usize,
    pub buffer_norm_bits: f64,
    /// Renormalize the policy over UEs that can actually take the RBG.
    pub masking: bool,
    pub train: bool,
    pub selection: SelectionMode,
    pub rbs_per_rbg: u32,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self {
            slots: 16,
            buffer_norm_bits: 20_000.0,
            masking: true,
            train: true,
            selection: SelectionMode::Sample,
            rbs_per_rbg: 1,
        }
    }
}

impl SchedulerParams {
    pub fn obs_dim(&self) -> usize {
        self.slots * FEATURES_PER_SLOT
    }
}

/// What the scheduler sees of one UE attached to the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub ue: UeId,
    pub class: TrafficClass,
    /// CQI per RBG as observed from the scheduler's location.
    pub cqi: Vec<u8>,
    /// CQI per RBG without inter-cell interference.
    pub base_cqi: Vec<u8>,
    /// Effective HoL delay; `None` when the queue is empty.
    pub hol_ms: Option<f64>,
    pub queued_bits: u64,
}

/// An RBG already granted by a cell coordinated through the same CU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Claim {
    pub priority: u32,
    /// Interference-free CQI of the UE holding the RBG.
    pub cqi: u8,
}

/// CU-side knowledge of the other coordinated cells' RBG maps this TTI.
#[derive(Debug, Clone)]
pub struct Coordination<'a> {
    /// `claims[rbg]` lists every earlier grant of that RBG.
    pub claims: &'a [Vec<Claim>],
    pub channel: &'a ChannelParams,
}

impl Coordination<'_> {
    /// A candidate is kept off an RBG when a coordinated cell already holds
    /// it for a UE of equal or higher priority and sharing the RBG would
    /// carry fewer bits in total than leaving it to that UE alone.
    pub fn blocks(&self, rbg: usize, priority: u32, base_cqi: u8, rbs_per_rbg: u32) -> bool {
        let Some(claims) = self.claims.get(rbg) else {
            return false;
        };
        claims.iter().any(|claim| {
            if claim.priority > priority {
                return false;
            }
            let cap = |c| rbg_capacity(c, rbs_per_rbg).unwrap_or(0);
            let shared = cap(self.channel.penalized(claim.cqi)) + cap(self.channel.penalized(base_cqi));
            shared < cap(claim.cqi)
        })
    }
}

/// Input to one cell's scheduling pass.
#[derive(Debug, Clone)]
pub struct CellState<'a> {
    pub cell: usize,
    pub n_rbg: usize,
    pub candidates: Vec<Candidate>,
    pub coordination: Option<Coordination<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParts {
    pub channel: f64,
    pub urllc: f64,
    pub in_budget: f64,
}

impl RewardParts {
    pub const ZERO: RewardParts = RewardParts {
        channel: 0.0,
        urllc: 0.0,
        in_budget: 0.0,
    };

    pub fn total(&self) -> f64 {
        scheduler_reward(self.channel, self.urllc, self.in_budget)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub rbg: usize,
    /// `None` when the chosen slot could not take the RBG (masking off).
    pub ue: Option<UeId>,
    pub reward: RewardParts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtiSchedule {
    pub allocation: RbgAllocation,
    pub decisions: Vec<Decision>,
    pub transitions: Vec<TransitionRecord>,
}

impl TtiSchedule {
    pub fn total_reward(&self) -> f64 {
        self.decisions.iter().map(|d| d.reward.total()).sum()
    }
}

/// `max(sgn(cqi_k - mean(cqi)), 0)` over the backlogged candidates.
pub fn reward_r1(cqi_k: u8, candidates: &[u8]) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    let sum: u64 = candidates.iter().map(|&c| c as u64).sum();
    if cqi_k as u64 * candidates.len() as u64 > sum {
        1.0
    } else {
        0.0
    }
}

/// 1 for URLLC packets, 0 otherwise (unknown QCIs included).
pub fn reward_r2(qci: u8) -> f64 {
    match TrafficClass::from_qci(qci) {
        Some(c) if c.is_urllc() => 1.0,
        _ => 0.0,
    }
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `sinc(pi * floor(delay / budget))`. The argument is a whole multiple of
/// pi, where sinc is exactly 1 at zero and exactly 0 elsewhere; the zeros are
/// returned exactly rather than as rounding residue of `sin`.
pub fn reward_r3(delay_ms: f64, budget_ms: f64) -> f64 {
    debug_assert!(budget_ms > 0.0);
    let periods = (delay_ms / budget_ms).floor();
    if periods == 0.0 {
        sinc(0.0)
    } else {
        0.0
    }
}

pub fn scheduler_reward(r1: f64, r2: f64, r3: f64) -> f64 {
    r1 + r2 + r3
}

/// Picks which candidates get an observation slot and in what order.
///
/// Backlogged UEs come first, then by priority (most important first), then
/// by longest HoL. The kept set is laid out in ascending UE id.
pub fn assign_slots(candidates: &[Candidate], slots: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        (cb.queued_bits > 0)
            .cmp(&(ca.queued_bits > 0))
            .then(ca.class.priority().cmp(&cb.class.priority()))
            .then(
                cb.hol_ms
                    .unwrap_or(0.0)
                    .partial_cmp(&ca.hol_ms.unwrap_or(0.0))
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(ca.ue.cmp(&cb.ue))
    });
    order.truncate(slots);
    order.sort_by_key(|&i| candidates[i].ue);
    order
}

/// Encodes the cell for one RBG decision. `pending[i]` is the unserved
/// backlog of `slotted[i]`; slots with nothing pending or no UE are zero.
pub fn build_observation(
    candidates: &[Candidate],
    slotted: &[usize],
    pending: &[u64],
    rbg: usize,
    params: &SchedulerParams,
) -> Observation {
    let mut features = vec![0.0; params.obs_dim()];
    for (slot, (&ci, &left)) in slotted.iter().zip(pending).enumerate() {
        if left == 0 {
            continue;
        }
        let c = &candidates[ci];
        let budget = c.class.delay_budget_ms() as f64;
        let hol = c.hol_ms.unwrap_or(0.0);
        let f = &mut features[slot * FEATURES_PER_SLOT..(slot + 1) * FEATURES_PER_SLOT];
        f[0] = c.cqi[rbg] as f64 / 15.0;
        f[1] = (hol / budget).min(HOL_RATIO_CAP) / HOL_RATIO_CAP;
        f[2] = 1.0 - c.class.priority() as f64 / 100.0;
        f[3] = if c.class.is_urllc() { 1.0 } else { 0.0 };
        f[4] = (left as f64 / params.buffer_norm_bits).min(1.0);
    }
    Observation::new(features).expect("finite features")
}

/// Runs one TTI of scheduling for a cell and, when training, learns from
/// every decision it made.
pub fn schedule_tti<R: Rng + ?Sized>(
    agent: &mut A2cAgent,
    cell: &CellState<'_>,
    params: &SchedulerParams,
    rng: &mut R,
) -> Result<TtiSchedule, A2cError> {
    if agent.obs_dim() != params.obs_dim() || agent.n_actions() != params.slots {
        return Err(A2cError::DimensionMismatch {
            expected: params.obs_dim(),
            got: agent.obs_dim(),
        });
    }
    let candidates = &cell.candidates;
    let slotted = assign_slots(candidates, params.slots);
    let mut pending: Vec<u64> = slotted.iter().map(|&i| candidates[i].queued_bits).collect();
    let backlogged: Vec<usize> = slotted
        .iter()
        .copied()
        .filter(|&i| candidates[i].queued_bits > 0)
        .collect();

    let mut allocation = RbgAllocation::empty(cell.cell, cell.n_rbg);
    let mut decisions = Vec::new();
    let mut steps: Vec<(Observation, usize, f64, Option<Vec<bool>>)> = Vec::new();

    for rbg in 0..cell.n_rbg {
        let valid: Vec<bool> = slotted
            .iter()
            .zip(&pending)
            .map(|(&ci, &left)| {
                let c = &candidates[ci];
                left > 0
                    && !cell
                        .coordination
                        .as_ref()
                        .is_some_and(|co| co.blocks(rbg, c.class.priority(), c.base_cqi[rbg], params.rbs_per_rbg))
            })
            .collect();
        if !valid.iter().any(|&v| v) {
            continue;
        }
        let mut mask = valid.clone();
        mask.resize(params.slots, false);
        let obs = build_observation(candidates, &slotted, &pending, rbg, params);
        let dist = agent.policy(&obs, params.masking.then_some(mask.as_slice()))?;
        let action = dist.select(params.selection, rng);

        let (ue, reward) = if valid.get(action).copied().unwrap_or(false) {
            let c = &candidates[slotted[action]];
            let k_cqi: Vec<u8> = backlogged.iter().map(|&i| candidates[i].cqi[rbg]).collect();
            let reward = RewardParts {
                channel: reward_r1(c.cqi[rbg], &k_cqi),
                urllc: reward_r2(c.class.qci()),
                in_budget: reward_r3(c.hol_ms.unwrap_or(0.0), c.class.delay_budget_ms() as f64),
            };
            let granted = rbg_capacity(c.cqi[rbg], params.rbs_per_rbg).unwrap_or(0);
            pending[action] = pending[action].saturating_sub(granted);
            allocation.rbgs[rbg] = Some(c.ue);
            (Some(c.ue), reward)
        } else {
            (None, RewardParts::ZERO)
        };
        decisions.push(Decision { rbg, ue, reward });
        steps.push((obs, action, reward.total(), params.masking.then_some(mask)));
    }

    let mut transitions = Vec::with_capacity(steps.len());
    let n = steps.len();
    let mut iter = steps.into_iter().peekable();
    while let Some((obs, action, reward, mask)) = iter.next() {
        let (next_obs, terminal) = match iter.peek() {
            Some((next, ..)) => (next.clone(), false),
            None => (Observation::zeros(obs.len()), true),
        };
        transitions.push(TransitionRecord {
            obs,
            action,
            reward,
            next_obs,
            terminal,
            mask,
        });
    }
    debug_assert_eq!(transitions.len(), n);

    if params.train {
        for t in &transitions {
            agent.learn(t)?;
        }
    }

    Ok(TtiSchedule {
        allocation,
        decisions,
        transitions,
    })
}
