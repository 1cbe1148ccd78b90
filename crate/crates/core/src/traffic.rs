//! QCI-classed downlink traffic, per-UE RLC queues and delay-budget
//! enforcement.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Flows whose delay budget is at most this many ms count as URLLC.
pub const URLLC_BUDGET_MS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    /// Live stream video, QCI 2.
    Video,
    /// Augmented reality, QCI 80.
    Ar,
    /// Vehicle-to-everything, QCI 75.
    V2x,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceType {
    Gbr,
    NonGbr,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass::Video, TrafficClass::Ar, TrafficClass::V2x];

    pub fn qci(self) -> u8 {
        match self {
            TrafficClass::Video => 2,
            TrafficClass::Ar => 80,
            TrafficClass::V2x => 75,
        }
    }

    pub fn resource_type(self) -> ResourceType {
        match self {
            TrafficClass::Video | TrafficClass::V2x => ResourceType::Gbr,
            TrafficClass::Ar => ResourceType::NonGbr,
        }
    }

    /// Lower is more important.
    pub fn priority(self) -> u32 {
        match self {
            TrafficClass::Video => 40,
            TrafficClass::Ar => 68,
            TrafficClass::V2x => 25,
        }
    }

    pub fn delay_budget_ms(self) -> u64 {
        match self {
            TrafficClass::Video => 150,
            TrafficClass::Ar => 10,
            TrafficClass::V2x => 20,
        }
    }

    pub fn is_urllc(self) -> bool {
        self.delay_budget_ms() <= URLLC_BUDGET_MS
    }

    pub fn from_qci(qci: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.qci() == qci)
    }

    pub fn label(self) -> &'static str {
        match self {
            TrafficClass::Video => "video",
            TrafficClass::Ar => "ar",
            TrafficClass::V2x => "v2x",
        }
    }

    pub fn index(self) -> usize {
        match self {
            TrafficClass::Video => 0,
            TrafficClass::Ar => 1,
            TrafficClass::V2x => 2,
        }
    }
}

impl std::fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for TrafficClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| format!("unknown traffic class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub class: TrafficClass,
    pub qci: u8,
    pub resource_type: ResourceType,
    pub priority: u32,
    pub delay_budget_ms: u64,
    pub mean_rate_bps: f64,
    pub packet_size_bits: u64,
    pub is_urllc: bool,
}

impl FlowSpec {
    pub fn new(class: TrafficClass, mean_rate_bps: f64, packet_size_bits: u64) -> Self {
        Self {
            class,
            qci: class.qci(),
            resource_type: class.resource_type(),
            priority: class.priority(),
            delay_budget_ms: class.delay_budget_ms(),
            mean_rate_bps,
            packet_size_bits,
            is_urllc: class.is_urllc(),
        }
    }

    pub fn validate(&self, max_rate_bps: f64) -> Result<(), String> {
        if self.delay_budget_ms == 0 {
            return Err("delay budget must be positive".into());
        }
        if self.packet_size_bits == 0 {
            return Err("packet size must be positive".into());
        }
        if !(self.mean_rate_bps >= 0.0 && self.mean_rate_bps <= max_rate_bps) {
            return Err(format!(
                "mean rate {} bps outside [0, {max_rate_bps}]",
                self.mean_rate_bps
            ));
        }
        Ok(())
    }

    /// Expected packet arrivals per TTI.
    pub fn packets_per_tti(&self, tti_ms: f64) -> f64 {
        self.mean_rate_bps * tti_ms / 1000.0 / self.packet_size_bits as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub size: u64,
    pub arrival_tti: u64,
    pub class: TrafficClass,
    pub remaining: u64,
}

impl Packet {
    pub fn new(size: u64, arrival_tti: u64, class: TrafficClass) -> Self {
        Self {
            size,
            arrival_tti,
            class,
            remaining: size,
        }
    }

    pub fn qci(&self) -> u8 {
        self.class.qci()
    }

    /// Age in ms at `now`, including any extra scheduling latency.
    pub fn age_ms(&self, now: u64, tti_ms: f64, extra_ms: f64) -> f64 {
        now.saturating_sub(self.arrival_tti) as f64 * tti_ms + extra_ms
    }

    pub fn is_expired(&self, now: u64, tti_ms: f64, extra_ms: f64) -> bool {
        self.age_ms(now, tti_ms, extra_ms) > self.class.delay_budget_ms() as f64
    }
}

/// Poisson packet arrivals for one TTI at the flow's mean rate.
pub fn generate_arrivals<R: Rng + ?Sized>(flow: &FlowSpec, tti: u64, tti_ms: f64, rng: &mut R) -> Vec<Packet> {
    let lambda = flow.packets_per_tti(tti_ms);
    if lambda <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(lambda).expect("positive rate").sample(rng) as usize;
    (0..n)
        .map(|_| Packet::new(flow.packet_size_bits, tti, flow.class))
        .collect()
}

/// A packet leaving the queue by completing transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub packet: Packet,
    /// Effective head-of-line age at completion.
    pub age_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServeOutcome {
    pub delivered: Vec<Delivery>,
    /// Head packets found past their budget; removed without service.
    pub expired: Vec<Packet>,
    pub bits_used: u64,
}

/// Per-UE FIFO RLC buffer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RlcQueue {
    packets: VecDeque<Packet>,
}

impl RlcQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, p: Packet) {
        debug_assert!(self.packets.back().is_none_or(|b| b.arrival_tti <= p.arrival_tti));
        self.packets.push_back(p);
    }

    pub fn extend(&mut self, ps: impl IntoIterator<Item = Packet>) {
        for p in ps {
            self.push(p);
        }
    }

    pub fn head(&self) -> Option<&Packet> {
        self.packets.front()
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }

    /// Bits still to send, counting partial progress on the head.
    pub fn pending_bits(&self) -> u64 {
        self.packets.iter().map(|p| p.remaining).sum()
    }

    /// Effective HoL delay in ms; `None` for an empty queue.
    pub fn hol_delay_ms(&self, now: u64, tti_ms: f64, extra_ms: f64) -> Option<f64> {
        self.head().map(|p| p.age_ms(now, tti_ms, extra_ms))
    }

    /// Removes every packet whose effective age is strictly above its budget.
    pub fn drop_expired(&mut self, now: u64, tti_ms: f64, extra_ms: f64) -> Vec<Packet> {
        let mut dropped = Vec::new();
        let mut kept = VecDeque::with_capacity(self.packets.len());
        for p in self.packets.drain(..) {
            if p.is_expired(now, tti_ms, extra_ms) {
                dropped.push(p);
            } else {
                kept.push_back(p);
            }
        }
        self.packets = kept;
        dropped
    }

    /// Drains up to `budget_bits` from the head in FIFO order. Partially sent
    /// packets stay at the head with reduced `remaining`.
    pub fn serve(&mut self, budget_bits: u64, now: u64, tti_ms: f64, extra_ms: f64) -> ServeOutcome {
        let mut out = ServeOutcome::default();
        let mut budget = budget_bits;
        while budget > 0 {
            let Some(head) = self.packets.front_mut() else {
                break;
            };
            if head.is_expired(now, tti_ms, extra_ms) {
                out.expired.push(self.packets.pop_front().expect("head exists"));
                continue;
            }
            let sent = head.remaining.min(budget);
            head.remaining -= sent;
            budget -= sent;
            out.bits_used += sent;
            if head.remaining == 0 {
                let packet = self.packets.pop_front().expect("head exists");
                let age_ms = packet.age_ms(now, tti_ms, extra_ms);
                out.delivered.push(Delivery { packet, age_ms });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn queue_of(arrivals: &[u64], class: TrafficClass, size: u64) -> RlcQueue {
        let mut q = RlcQueue::new();
        q.extend(arrivals.iter().map(|&t| Packet::new(size, t, class)));
        q
    }

    #[test]
    fn class_table() {
        assert_eq!(TrafficClass::Video.qci(), 2);
        assert_eq!(TrafficClass::Video.priority(), 40);
        assert_eq!(TrafficClass::Video.delay_budget_ms(), 150);
        assert_eq!(TrafficClass::Video.resource_type(), ResourceType::Gbr);
        assert_eq!(TrafficClass::Ar.qci(), 80);
        assert_eq!(TrafficClass::Ar.priority(), 68);
        assert_eq!(TrafficClass::Ar.delay_budget_ms(), 10);
        assert_eq!(TrafficClass::Ar.resource_type(), ResourceType::NonGbr);
        assert_eq!(TrafficClass::V2x.qci(), 75);
        assert_eq!(TrafficClass::V2x.priority(), 25);
        assert_eq!(TrafficClass::V2x.delay_budget_ms(), 20);
        assert!(!TrafficClass::Video.is_urllc());
        assert!(TrafficClass::Ar.is_urllc());
        assert!(TrafficClass::V2x.is_urllc());
        assert_eq!(TrafficClass::from_qci(75), Some(TrafficClass::V2x));
        assert_eq!("ar".parse::<TrafficClass>().unwrap(), TrafficClass::Ar);
    }

    #[test]
    fn flow_rate_capped() {
        assert!(FlowSpec::new(TrafficClass::Ar, 256_000.0, 1000).validate(256_000.0).is_ok());
        assert!(FlowSpec::new(TrafficClass::Ar, 300_000.0, 1000).validate(256_000.0).is_err());
    }

    #[test]
    fn zero_rate_never_arrives() {
        let flow = FlowSpec::new(TrafficClass::Video, 0.0, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|t| generate_arrivals(&flow, t, 1.0, &mut rng).is_empty()));
    }

    #[test]
    fn long_run_rate_matches_mean() {
        let flow = FlowSpec::new(TrafficClass::Ar, 256_000.0, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000u64;
        let bits: u64 = (0..n)
            .flat_map(|t| generate_arrivals(&flow, t, 1.0, &mut rng))
            .map(|p| p.size)
            .sum();
        let rate = bits as f64 / (n as f64 * 1e-3);
        assert!((rate / 256_000.0 - 1.0).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn arrivals_deterministic_under_seed() {
        let flow = FlowSpec::new(TrafficClass::V2x, 200_000.0, 800);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..500).flat_map(|t| generate_arrivals(&flow, t, 1.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn drop_boundaries() {
        let mut q = RlcQueue::new();
        assert!(q.drop_expired(100, 1.0, 0.0).is_empty());

        // AR budget is 10 ms
        let mut q = queue_of(&[0], TrafficClass::Ar, 1000);
        assert!(q.drop_expired(10, 1.0, 0.0).is_empty());
        assert_eq!(q.drop_expired(11, 1.0, 0.0).len(), 1);
        assert!(q.is_empty());
    }

    #[test]
    fn extra_delay_pushes_over_budget() {
        // aged 8 ms with 3 ms of added latency -> 11 > 10
        let mut q = queue_of(&[2], TrafficClass::Ar, 1000);
        assert_eq!(q.drop_expired(10, 1.0, 3.0).len(), 1);
        let mut q = queue_of(&[2], TrafficClass::Ar, 1000);
        assert!(q.drop_expired(10, 1.0, 0.0).is_empty());
    }

    #[test]
    fn survivors_keep_order() {
        let mut q = queue_of(&[0, 1, 5, 6, 7], TrafficClass::Ar, 100);
        let dropped = q.drop_expired(16, 1.0, 0.0);
        assert_eq!(dropped.iter().map(|p| p.arrival_tti).collect::<Vec<_>>(), vec![0, 1, 5]);
        assert_eq!(q.iter().map(|p| p.arrival_tti).collect::<Vec<_>>(), vec![6, 7]);
    }

    #[test]
    fn serve_cases() {
        let mut q = queue_of(&[0, 1, 2], TrafficClass::Video, 500);
        let out = q.serve(10_000, 3, 1.0, 0.0);
        assert!(q.is_empty());
        assert_eq!(out.delivered.len(), 3);
        assert_eq!(out.bits_used, 1500);

        let mut q = queue_of(&[0], TrafficClass::Video, 500);
        let before = q.clone();
        let out = q.serve(0, 1, 1.0, 0.0);
        assert_eq!(q, before);
        assert_eq!(out, ServeOutcome::default());

        let mut q = queue_of(&[0], TrafficClass::Video, 1000);
        let first = q.serve(600, 1, 1.0, 0.0);
        assert!(first.delivered.is_empty());
        assert_eq!(q.head().unwrap().remaining, 400);
        let second = q.serve(600, 2, 1.0, 0.0);
        assert_eq!(second.delivered.len(), 1);
        assert_eq!(second.bits_used, 400);
        assert_eq!(600 - second.bits_used, 200);
    }

    #[test]
    fn serve_skips_late_heads() {
        let mut q = queue_of(&[0, 5], TrafficClass::Ar, 100);
        let out = q.serve(1_000, 11, 1.0, 0.0);
        assert_eq!(out.expired.len(), 1);
        assert_eq!(out.delivered.len(), 1);
        assert_eq!(out.delivered[0].age_ms, 6.0);
    }

    #[test]
    fn hol_delay() {
        let q = queue_of(&[3, 4], TrafficClass::Video, 100);
        assert_eq!(q.hol_delay_ms(10, 1.0, 0.0), Some(7.0));
        assert_eq!(q.hol_delay_ms(10, 1.0, 2.0), Some(9.0));
        assert_eq!(RlcQueue::new().hol_delay_ms(10, 1.0, 0.0), None);
    }
}
