//! The TTI loop.
//!
//! Each TTI runs: mobility, arrivals, placement (on epoch boundaries),
//! per-cell scheduling in cell-id order, interference resolution, service,
//! expiry, then the per-TTI audits. Every source of randomness draws from
//! its own named stream of the run seed, so a change in one module's draw
//! count leaves the others untouched.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::a2c::{A2cAgent, AgentShape, SelectionMode};
use crate::config::{Mode, SimConfig};
use crate::error::SimError;
use crate::metrics::{aggregate_rows, summarize, MetricsLedger, Summary, WindowRow};
use crate::placement::{
    placement_epoch, DuSnapshot, Location, PendingDecision, PlacementPolicy, RewardSample, PLACEMENT_ACTIONS,
    PLACEMENT_FEATURES,
};
use crate::ran::{
    build_interference_view, grid_topology, nearest_cell, rbg_capacity, step_mobility, Arena, Cell, InterferenceView,
    RbgAllocation, Ue,
};
use crate::scheduler::{schedule_tti, Candidate, CellState, Claim, Coordination, SchedulerParams, FEATURES_PER_SLOT};
use crate::traffic::{generate_arrivals, FlowSpec, Packet, RlcQueue, TrafficClass};

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 0,
    Mobility = 1,
    Channel = 2,
    Traffic = 3,
    Scheduler = 4,
    Placement = 5,
    SchedulerInit = 6,
    PlacementInit = 7,
}

pub fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// URLLC share of a DU's offered load above which the DU counts as
/// URLLC-dominated. Offered load rather than queue contents, since how
/// queues drain depends on the placement being measured.
const URLLC_DOMINANCE: f64 = 0.5;

/// What happened in one TTI, for callers that inspect the radio side.
#[derive(Debug, Clone, PartialEq)]
pub struct TtiReport {
    pub tti: u64,
    pub allocations: Vec<RbgAllocation>,
    pub interfered_rbgs: usize,
    pub locations: Vec<Location>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Totals {
    arrivals: u64,
    arrival_bits: u64,
    delivered: u64,
    delivered_bits: u64,
    dropped: u64,
    dropped_bits: u64,
}

pub struct Simulation {
    cfg: SimConfig,
    seed: u64,
    cells: Vec<Cell>,
    arena: Arena,
    ues: Vec<Ue>,
    flows: Vec<FlowSpec>,
    queues: Vec<RlcQueue>,
    schedulers: Vec<A2cAgent>,
    placement_agent: Option<A2cAgent>,
    locations: Vec<Location>,
    pending: Vec<Option<PendingDecision>>,
    samples: Vec<Vec<RewardSample>>,
    /// Granted and collided RBGs per DU since the last epoch boundary.
    epoch_rbgs: Vec<(u64, u64)>,
    prev_allocations: Vec<RbgAllocation>,
    prev_view: InterferenceView,
    mobility_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    traffic_rng: ChaCha8Rng,
    scheduler_rng: ChaCha8Rng,
    placement_rng: ChaCha8Rng,
    totals: [Totals; 3],
    ledger: MetricsLedger,
    tti: u64,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let (cells, arena) = grid_topology(cfg.n_cells, cfg.n_rbg, cfg.cell_spacing_m);

        let mut topo = stream(seed, Stream::Topology);
        let mut ues = Vec::with_capacity(cfg.n_ues);
        for (class, n) in cfg.class_counts() {
            for _ in 0..n {
                let position = arena.sample(&mut topo);
                ues.push(Ue {
                    id: ues.len(),
                    position,
                    serving_cell: nearest_cell(&cells, &position),
                    speed: if class == TrafficClass::V2x { cfg.vehicle_speed_mps } else { 0.0 },
                    waypoint: None,
                    class,
                    cqi: vec![crate::ran::CQI_MIN; cfg.n_rbg],
                });
            }
        }
        let flows = ues.iter().map(|u| cfg.traffic.flow(u.class)).collect();

        let a2c = cfg.a2c.a2c();
        let sched_shape = AgentShape {
            obs_dim: cfg.scheduler.slots * FEATURES_PER_SLOT,
            n_actions: cfg.scheduler.slots,
            actor_hidden: cfg.scheduler.actor_hidden,
            critic_hidden: cfg.scheduler.critic_hidden,
        };
        let mut init = stream(seed, Stream::SchedulerInit);
        let schedulers = cells
            .iter()
            .map(|_| A2cAgent::new(sched_shape, a2c, &mut init))
            .collect::<Result<Vec<_>, _>>()?;
        let placement_agent = if cfg.mode == Mode::Dscd {
            let shape = AgentShape {
                obs_dim: PLACEMENT_FEATURES,
                n_actions: PLACEMENT_ACTIONS,
                actor_hidden: cfg.placement.actor_hidden,
                critic_hidden: cfg.placement.critic_hidden,
            };
            Some(A2cAgent::new(shape, a2c, &mut stream(seed, Stream::PlacementInit))?)
        } else {
            None
        };
        let start = match cfg.mode {
            Mode::NfCu => Location::Cu,
            Mode::Dscd | Mode::NfDu => Location::Du,
        };
        let n_du = cells.len();

        Ok(Self {
            seed,
            queues: vec![RlcQueue::new(); ues.len()],
            locations: vec![start; n_du],
            pending: vec![None; n_du],
            samples: vec![Vec::new(); n_du],
            epoch_rbgs: vec![(0, 0); n_du],
            prev_allocations: cells.iter().map(|c| RbgAllocation::empty(c.id, c.n_rbg)).collect(),
            prev_view: InterferenceView::empty(&cells),
            mobility_rng: stream(seed, Stream::Mobility),
            channel_rng: stream(seed, Stream::Channel),
            traffic_rng: stream(seed, Stream::Traffic),
            scheduler_rng: stream(seed, Stream::Scheduler),
            placement_rng: stream(seed, Stream::Placement),
            totals: [Totals::default(); 3],
            ledger: MetricsLedger::new(cfg.window_ttis, cfg.tti_ms),
            tti: 0,
            cells,
            arena,
            ues,
            flows,
            schedulers,
            placement_agent,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn ues(&self) -> &[Ue] {
        &self.ues
    }

    pub fn queues(&self) -> &[RlcQueue] {
        &self.queues
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> MetricsLedger {
        self.ledger
    }

    pub fn schedulers(&self) -> &[A2cAgent] {
        &self.schedulers
    }

    pub fn placement_agent(&self) -> Option<&A2cAgent> {
        self.placement_agent.as_ref()
    }

    /// Runs until `cfg.ttis` TTIs have elapsed.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.tti < self.cfg.ttis {
            self.step()?;
        }
        Ok(())
    }

    fn extra_ms(&self, cell: usize) -> f64 {
        self.cfg.placement.extra_delay_ms(self.locations[self.cells[cell].du_id])
    }

    pub fn step(&mut self) -> Result<TtiReport, SimError> {
        let now = self.tti;
        let tti_ms = self.cfg.tti_ms;
        let dt_s = tti_ms / 1000.0;

        for ue in &mut self.ues {
            step_mobility(ue, dt_s, &self.arena, &self.cells, &mut self.mobility_rng);
        }

        for (i, ue) in self.ues.iter().enumerate() {
            let packets = generate_arrivals(&self.flows[i], now, tti_ms, &mut self.traffic_rng);
            let bits: u64 = packets.iter().map(|p| p.size).sum();
            let t = &mut self.totals[ue.class.index()];
            t.arrivals += packets.len() as u64;
            t.arrival_bits += bits;
            let c = self.ledger.window_mut(now).class_mut(ue.class);
            c.arrivals += packets.len() as u64;
            c.arrival_bits += bits;
            self.queues[i].extend(packets);
        }

        if now.is_multiple_of(self.cfg.placement.epoch_length) {
            self.placement_boundary()?;
        }
        for ue in &self.ues {
            let loc = self.locations[self.cells[ue.serving_cell].du_id];
            let c = self.ledger.window_mut(now).class_mut(ue.class);
            match loc {
                Location::Du => c.ue_ttis_du += 1,
                Location::Cu => c.ue_ttis_cu += 1,
            }
        }

        for ue in &mut self.ues {
            let cell = &self.cells[ue.serving_cell];
            ue.cqi = self
                .cfg
                .channel
                .base_cqi(ue.position.distance(&cell.position), cell.n_rbg, &mut self.channel_rng);
        }

        let allocations = self.schedule_cells()?;
        let view = build_interference_view(&allocations);
        self.audit_allocations(&allocations)?;

        let window = self.ledger.window_mut(now);
        window.ttis += 1;
        for alloc in &allocations {
            let du = self.cells[alloc.cell].du_id;
            let granted = alloc.assigned().count() as u64;
            let hit = alloc.assigned().filter(|(r, _)| view.is_interfered(alloc.cell, *r)).count() as u64;
            window.granted_rbgs += granted;
            window.interfered_rbgs += hit;
            self.epoch_rbgs[du].0 += granted;
            self.epoch_rbgs[du].1 += hit;
        }

        self.serve(&allocations, &view)?;
        self.expire();
        self.audit_conservation()?;

        let report = TtiReport {
            tti: now,
            interfered_rbgs: allocations
                .iter()
                .map(|a| a.assigned().filter(|(r, _)| view.is_interfered(a.cell, *r)).count())
                .sum(),
            allocations: allocations.clone(),
            locations: self.locations.clone(),
        };
        self.prev_allocations = allocations;
        self.prev_view = view;
        self.tti += 1;
        Ok(report)
    }

    fn du_snapshot(&self, du: usize) -> DuSnapshot {
        let now = self.tti;
        let loc = self.locations[du];
        let extra = self.cfg.placement.extra_delay_ms(loc);
        let mut queued = 0u64;
        let mut urllc = 0u64;
        let mut bits = 0u64;
        let mut ratio_sum = [0.0; 3];
        let mut ratio_n = [0usize; 3];
        for (ue, q) in self.ues.iter().zip(&self.queues) {
            if self.cells[ue.serving_cell].du_id != du {
                continue;
            }
            queued += q.len() as u64;
            if ue.class.is_urllc() {
                urllc += q.len() as u64;
            }
            bits += q.pending_bits();
            if let Some(hol) = q.hol_delay_ms(now, self.cfg.tti_ms, extra) {
                ratio_sum[ue.class.index()] += hol / ue.class.delay_budget_ms() as f64;
                ratio_n[ue.class.index()] += 1;
            }
        }
        let (granted, hit) = self.epoch_rbgs[du];
        DuSnapshot {
            urllc_share: if queued > 0 { urllc as f64 / queued as f64 } else { 0.0 },
            hol_ratio: std::array::from_fn(|i| {
                if ratio_n[i] > 0 {
                    ratio_sum[i] / ratio_n[i] as f64
                } else {
                    0.0
                }
            }),
            queued_bits: bits,
            location: loc,
            interfered_share: if granted > 0 { hit as f64 / granted as f64 } else { 0.0 },
        }
    }

    fn placement_boundary(&mut self) -> Result<(), SimError> {
        let n_du = self.cells.len();
        let snapshots: Vec<DuSnapshot> = (0..n_du).map(|du| self.du_snapshot(du)).collect();
        if let Some(agent) = self.placement_agent.as_mut() {
            let policy = match self.cfg.placement.pin {
                Some(loc) => PlacementPolicy::Pinned(loc),
                None => PlacementPolicy::Learned,
            };
            let decision = placement_epoch(
                agent,
                &snapshots,
                &self.pending,
                &self.samples,
                &self.cfg.placement,
                policy,
                SelectionMode::Sample,
                self.cfg.placement.train,
                &mut self.placement_rng,
            )?;
            self.pending = decision
                .observations
                .into_iter()
                .zip(&decision.action.locations)
                .map(|(obs, &location)| Some(PendingDecision { obs, location }))
                .collect();
            self.locations = decision.action.locations;
        }
        let mut offered = vec![(0.0, 0.0); n_du];
        for (ue, flow) in self.ues.iter().zip(&self.flows) {
            let o = &mut offered[self.cells[ue.serving_cell].du_id];
            o.1 += flow.mean_rate_bps;
            if flow.is_urllc {
                o.0 += flow.mean_rate_bps;
            }
        }
        let window = self.ledger.window_mut(self.tti);
        for (du, &(urllc, total)) in offered.iter().enumerate() {
            window.record_decision(self.locations[du], total > 0.0 && urllc / total > URLLC_DOMINANCE);
        }
        for s in &mut self.samples {
            s.clear();
        }
        self.epoch_rbgs.iter_mut().for_each(|e| *e = (0, 0));
        Ok(())
    }

    fn schedule_cells(&mut self) -> Result<Vec<RbgAllocation>, SimError> {
        let now = self.tti;
        let n_rbg = self.cfg.n_rbg;
        let channel = self.cfg.channel;
        let coordination = self.cfg.placement.interference_coordination;
        let params = SchedulerParams {
            slots: self.cfg.scheduler.slots,
            buffer_norm_bits: self.cfg.scheduler.buffer_norm_bits,
            masking: self.cfg.scheduler.masking,
            train: self.cfg.scheduler.train,
            selection: SelectionMode::Sample,
            rbs_per_rbg: self.cfg.rbs_per_rbg,
        };

        // A CU-hosted scheduler sees every RU's RBG map. DU-hosted cells
        // decide independently this TTI, so their previous TTI's grants stand
        // in as claims; CU-hosted cells add theirs as they are decided.
        let mut claims: Vec<Vec<Claim>> = vec![Vec::new(); n_rbg];
        if coordination {
            for a in &self.prev_allocations {
                if self.locations[self.cells[a.cell].du_id] == Location::Du {
                    for (r, ue) in a.assigned() {
                        claims[r].push(Claim {
                            priority: self.ues[ue].class.priority(),
                            cqi: self.ues[ue].cqi[r],
                        });
                    }
                }
            }
        }
        let mut allocations = Vec::with_capacity(self.cells.len());
        for ci in 0..self.cells.len() {
            let cell_id = self.cells[ci].id;
            let loc = self.locations[self.cells[ci].du_id];
            let extra = self.extra_ms(ci);
            let coordinated = loc == Location::Cu && coordination;
            let candidates: Vec<Candidate> = self
                .ues
                .iter()
                .zip(&self.queues)
                .filter(|(ue, _)| ue.serving_cell == cell_id)
                .map(|(ue, q)| {
                    let cqi = if coordinated {
                        (0..n_rbg)
                            .map(|r| {
                                if !claims[r].is_empty() {
                                    channel.penalized(ue.cqi[r])
                                } else {
                                    ue.cqi[r]
                                }
                            })
                            .collect()
                    } else {
                        crate::ran::apply_interference(&ue.cqi, cell_id, &self.prev_view, &channel)
                    };
                    Candidate {
                        ue: ue.id,
                        class: ue.class,
                        cqi,
                        base_cqi: ue.cqi.clone(),
                        hol_ms: q.hol_delay_ms(now, self.cfg.tti_ms, extra),
                        queued_bits: q.pending_bits(),
                    }
                })
                .collect();
            let state = CellState {
                cell: cell_id,
                n_rbg,
                candidates,
                coordination: coordinated.then_some(Coordination {
                    claims: &claims,
                    channel: &channel,
                }),
            };
            let out = schedule_tti(&mut self.schedulers[ci], &state, &params, &mut self.scheduler_rng)?;
            if coordinated {
                for (r, ue) in out.allocation.assigned() {
                    claims[r].push(Claim {
                        priority: self.ues[ue].class.priority(),
                        cqi: self.ues[ue].cqi[r],
                    });
                }
            }
            allocations.push(out.allocation);
        }
        Ok(allocations)
    }

    fn audit_allocations(&self, allocations: &[RbgAllocation]) -> Result<(), SimError> {
        for a in allocations {
            if a.rbgs.len() != self.cfg.n_rbg {
                return Err(self.violation(format!("cell {} has {} RBG entries", a.cell, a.rbgs.len())));
            }
            for (r, ue) in a.assigned() {
                if self.ues.get(ue).is_none_or(|u| u.serving_cell != a.cell) {
                    return Err(self.violation(format!("cell {} RBG {r} granted to foreign UE {ue}", a.cell)));
                }
                if self.queues[ue].is_empty() {
                    return Err(self.violation(format!("cell {} RBG {r} granted to idle UE {ue}", a.cell)));
                }
            }
        }
        Ok(())
    }

    fn serve(&mut self, allocations: &[RbgAllocation], view: &InterferenceView) -> Result<(), SimError> {
        let now = self.tti;
        let tti_ms = self.cfg.tti_ms;
        let mut grant = vec![0u64; self.ues.len()];
        for a in allocations {
            for (r, ue) in a.assigned() {
                let base = self.ues[ue].cqi[r];
                let cqi = if view.is_interfered(a.cell, r) {
                    self.cfg.channel.penalized(base)
                } else {
                    base
                };
                grant[ue] += rbg_capacity(cqi, self.cfg.rbs_per_rbg).map_err(|e| self.violation(e))?;
            }
        }
        for (i, &bits) in grant.iter().enumerate() {
            if bits == 0 {
                continue;
            }
            let cell = self.ues[i].serving_cell;
            let extra = self.extra_ms(cell);
            let out = self.queues[i].serve(bits, now, tti_ms, extra);
            let class = self.ues[i].class;
            let budget = class.delay_budget_ms() as f64;
            for d in &out.delivered {
                if d.age_ms > budget {
                    return Err(self.violation(format!(
                        "UE {i} delivered a {class} packet at {} ms, budget {budget} ms",
                        d.age_ms
                    )));
                }
            }
            let du = self.cells[cell].du_id;
            self.record_departures(i, du, &out.delivered.iter().map(|d| (d.packet.size, d.age_ms)).collect::<Vec<_>>(), &out.expired, extra);
        }
        Ok(())
    }

    fn expire(&mut self) {
        let now = self.tti;
        for i in 0..self.queues.len() {
            let cell = self.ues[i].serving_cell;
            let extra = self.extra_ms(cell);
            let dropped = self.queues[i].drop_expired(now, self.cfg.tti_ms, extra);
            if !dropped.is_empty() {
                let du = self.cells[cell].du_id;
                self.record_departures(i, du, &[], &dropped, extra);
            }
        }
    }

    fn record_departures(&mut self, ue: usize, du: usize, delivered: &[(u64, f64)], dropped: &[Packet], extra: f64) {
        let now = self.tti;
        let class = self.ues[ue].class;
        let budget = class.delay_budget_ms() as f64;
        let track = self.placement_agent.is_some();
        let t = &mut self.totals[class.index()];
        let c = self.ledger.window_mut(now).class_mut(class);
        for &(size, age) in delivered {
            t.delivered += 1;
            t.delivered_bits += size;
            c.delivered += 1;
            c.delivered_bits += size;
            c.hol_sum_ms += age;
            if track {
                self.samples[du].push(RewardSample {
                    class,
                    r3: crate::scheduler::reward_r3(age, budget),
                });
            }
        }
        for p in dropped {
            t.dropped += 1;
            t.dropped_bits += p.size;
            c.dropped += 1;
            c.dropped_bits += p.size;
            if track {
                let age = p.age_ms(now, self.cfg.tti_ms, extra);
                self.samples[du].push(RewardSample {
                    class,
                    r3: crate::scheduler::reward_r3(age, budget),
                });
            }
        }
    }

    fn audit_conservation(&self) -> Result<(), SimError> {
        let mut queued = [(0u64, 0u64); 3];
        for (ue, q) in self.ues.iter().zip(&self.queues) {
            let e = &mut queued[ue.class.index()];
            e.0 += q.len() as u64;
            e.1 += q.iter().map(|p| p.size).sum::<u64>();
        }
        for class in TrafficClass::ALL {
            let t = &self.totals[class.index()];
            let (qn, qb) = queued[class.index()];
            if t.arrivals != t.delivered + t.dropped + qn || t.arrival_bits != t.delivered_bits + t.dropped_bits + qb {
                return Err(self.violation(format!(
                    "{class}: arrivals {} / {} bits != delivered {} + dropped {} + queued {} ({} + {} + {} bits)",
                    t.arrivals, t.arrival_bits, t.delivered, t.dropped, qn, t.delivered_bits, t.dropped_bits, qb
                )));
            }
        }
        Ok(())
    }

    fn violation(&self, what: impl Into<String>) -> SimError {
        SimError::Invariant {
            tti: self.tti,
            what: what.into(),
        }
    }
}

/// One run's ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub index: usize,
    pub seed: u64,
    pub ledger: MetricsLedger,
}

/// All runs of a batch plus the cross-run aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub runs: Vec<RunOutput>,
    pub aggregate: Vec<WindowRow>,
    pub summary: Summary,
}

pub fn run_once(cfg: &SimConfig, index: usize) -> Result<RunOutput, SimError> {
    let seed = cfg.run_seed(index);
    let mut sim = Simulation::new(cfg, seed)?;
    sim.run_to_end()?;
    Ok(RunOutput {
        index,
        seed,
        ledger: sim.into_ledger(),
    })
}

/// Runs `cfg.runs` independent simulations with seeds `seed + i`, spread
/// over up to `threads` workers. Results are reduced in run-index order, so
/// the output does not depend on the thread count.
pub fn run_batch(cfg: &SimConfig, threads: usize) -> Result<BatchOutput, SimError> {
    cfg.validate()?;
    let n = cfg.runs;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunOutput, SimError>>>> = Mutex::new(vec![None; n]);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = run_once(cfg, i);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    let runs = slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every run executed"))
        .collect::<Result<Vec<_>, _>>()?;
    let ledgers: Vec<MetricsLedger> = runs.iter().map(|r| r.ledger.clone()).collect();
    Ok(BatchOutput {
        aggregate: aggregate_rows(&ledgers),
        summary: summarize(&ledgers, cfg.tail_fraction),
        runs,
    })
}

/// Run with one worker per available core.
pub fn run(cfg: &SimConfig) -> Result<BatchOutput, SimError> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    run_batch(cfg, threads)
}
