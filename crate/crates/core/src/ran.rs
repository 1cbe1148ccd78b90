//! Abstract radio model: cell grid, distance-based CQI, an inter-cell
//! interference penalty, RBG capacity and random-waypoint mobility.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::traffic::TrafficClass;

pub type CellId = usize;
pub type UeId = usize;

pub const CQI_MIN: u8 = 1;
pub const CQI_MAX: u8 = 15;

/// Bits carried by one resource block in one TTI for CQI 1..=15.
///
/// Spectral efficiencies of the 4-bit CQI table (QPSK through 64QAM) times
/// 12 subcarriers x 14 symbols, rounded to the nearest bit.
pub const CQI_BITS_PER_RB: [u32; 15] = [26, 39, 63, 101, 147, 198, 248, 322, 404, 459, 558, 656, 760, 859, 933];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min: Position,
    pub max: Position,
}

impl Arena {
    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        Position::new(
            rng.random_range(self.min.x..=self.max.x),
            rng.random_range(self.min.y..=self.max.y),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub position: Position,
    pub n_rbg: usize,
    /// Every cell hangs off its own DU, so DU ids coincide with cell ids.
    pub du_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ue {
    pub id: UeId,
    pub position: Position,
    pub serving_cell: CellId,
    /// m/s; zero for static UEs.
    pub speed: f64,
    pub waypoint: Option<Position>,
    pub class: TrafficClass,
    /// Last reported CQI per RBG of the serving cell.
    pub cqi: Vec<u8>,
}

impl Ue {
    /// Current velocity vector in m/s.
    pub fn velocity(&self) -> (f64, f64) {
        match self.waypoint {
            Some(w) if self.speed > 0.0 => {
                let d = self.position.distance(&w);
                if d == 0.0 {
                    (0.0, 0.0)
                } else {
                    (self.speed * (w.x - self.position.x) / d, self.speed * (w.y - self.position.y) / d)
                }
            }
            _ => (0.0, 0.0),
        }
    }
}

/// Cell sites on a square-ish grid with `spacing` metres between
/// neighbours, each site centred in its own `spacing x spacing` tile.
pub fn grid_topology(n_cells: usize, n_rbg: usize, spacing: f64) -> (Vec<Cell>, Arena) {
    let cols = (n_cells as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n_cells.div_ceil(cols).max(1);
    let cells = (0..n_cells)
        .map(|id| Cell {
            id,
            position: Position::new(spacing * (0.5 + (id % cols) as f64), spacing * (0.5 + (id / cols) as f64)),
            n_rbg,
            du_id: id,
        })
        .collect();
    let arena = Arena {
        min: Position::new(0.0, 0.0),
        max: Position::new(spacing * cols as f64, spacing * rows as f64),
    };
    (cells, arena)
}

/// Nearest cell, lowest id on ties.
pub fn nearest_cell(cells: &[Cell], p: &Position) -> CellId {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for cell in cells {
        let d = cell.position.distance(p);
        if d < best_d {
            best = cell.id;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    /// At or below this distance a UE reports CQI 15 (absent shadowing).
    pub near_distance_m: f64,
    /// At or beyond this distance a UE reports CQI 1.
    pub max_radius_m: f64,
    /// Log-normal shadowing standard deviation; 0 disables it.
    pub shadowing_sigma_db: f64,
    /// CQI steps lost on an RBG that a neighbouring cell also uses.
    pub interference_penalty: u8,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.5,
            near_distance_m: 20.0,
            max_radius_m: 400.0,
            shadowing_sigma_db: 4.0,
            interference_penalty: 3,
        }
    }
}

impl ChannelParams {
    fn snr_db(&self, distance: f64) -> f64 {
        -10.0 * self.path_loss_exponent * distance.max(self.near_distance_m).log10()
    }

    /// Maps an SNR (same reference as [`Self::snr_db`]) linearly onto 1..=15.
    fn cqi_from_snr(&self, snr: f64) -> u8 {
        let near = self.snr_db(self.near_distance_m);
        let far = self.snr_db(self.max_radius_m);
        let level = 1.0 + 14.0 * (snr - far) / (near - far);
        level.round().clamp(CQI_MIN as f64, CQI_MAX as f64) as u8
    }

    /// Interference-free CQI per RBG at `distance`, with independent
    /// shadowing per RBG drawn from `rng` when enabled.
    pub fn base_cqi<R: Rng + ?Sized>(&self, distance: f64, n_rbg: usize, rng: &mut R) -> Vec<u8> {
        let snr = self.snr_db(distance);
        if self.shadowing_sigma_db > 0.0 {
            let normal = Normal::new(0.0, self.shadowing_sigma_db).expect("positive sigma");
            (0..n_rbg).map(|_| self.cqi_from_snr(snr + normal.sample(rng))).collect()
        } else {
            vec![self.cqi_from_snr(snr); n_rbg]
        }
    }

    pub fn penalized(&self, cqi: u8) -> u8 {
        cqi.saturating_sub(self.interference_penalty).max(CQI_MIN)
    }
}

/// Per-RBG CQI reported by `ue` to `cell` given the interference pattern in
/// `view`.
pub fn compute_cqi<R: Rng + ?Sized>(
    ue: &Ue,
    cell: &Cell,
    view: &InterferenceView,
    channel: &ChannelParams,
    rng: &mut R,
) -> Vec<u8> {
    let base = channel.base_cqi(ue.position.distance(&cell.position), cell.n_rbg, rng);
    apply_interference(&base, cell.id, view, channel)
}

pub fn apply_interference(base: &[u8], cell: CellId, view: &InterferenceView, channel: &ChannelParams) -> Vec<u8> {
    base.iter()
        .enumerate()
        .map(|(rbg, &c)| {
            if view.is_interfered(cell, rbg) {
                channel.penalized(c)
            } else {
                c
            }
        })
        .collect()
}

/// Bits deliverable on one RBG of `rbs_per_rbg` resource blocks at `cqi`.
pub fn rbg_capacity(cqi: u8, rbs_per_rbg: u32) -> Result<u64, String> {
    if !(CQI_MIN..=CQI_MAX).contains(&cqi) {
        return Err(format!("cqi {cqi} outside 1..=15"));
    }
    Ok(CQI_BITS_PER_RB[(cqi - 1) as usize] as u64 * rbs_per_rbg as u64)
}

/// Advances a UE by `dt_s` seconds of random-waypoint motion and re-attaches
/// it to the nearest cell. Static UEs are left untouched.
pub fn step_mobility<R: Rng + ?Sized>(ue: &mut Ue, dt_s: f64, arena: &Arena, cells: &[Cell], rng: &mut R) {
    if ue.speed <= 0.0 {
        return;
    }
    let mut budget = ue.speed * dt_s;
    while budget > 0.0 {
        let target = match ue.waypoint {
            Some(w) => w,
            None => {
                let w = arena.sample(rng);
                ue.waypoint = Some(w);
                w
            }
        };
        let d = ue.position.distance(&target);
        if d <= budget {
            ue.position = target;
            ue.waypoint = None;
            budget -= d;
            if d == 0.0 {
                // zero-length leg: pick a fresh waypoint next step
                break;
            }
        } else {
            let f = budget / d;
            ue.position.x += f * (target.x - ue.position.x);
            ue.position.y += f * (target.y - ue.position.y);
            budget = 0.0;
        }
    }
    ue.position.x = ue.position.x.clamp(arena.min.x, arena.max.x);
    ue.position.y = ue.position.y.clamp(arena.min.y, arena.max.y);
    ue.serving_cell = nearest_cell(cells, &ue.position);
}

/// One cell's RBG map for one TTI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbgAllocation {
    pub cell: CellId,
    pub rbgs: Vec<Option<UeId>>,
}

impl RbgAllocation {
    pub fn empty(cell: CellId, n_rbg: usize) -> Self {
        Self {
            cell,
            rbgs: vec![None; n_rbg],
        }
    }

    pub fn assigned(&self) -> impl Iterator<Item = (usize, UeId)> + '_ {
        self.rbgs.iter().enumerate().filter_map(|(r, u)| u.map(|u| (r, u)))
    }

    pub fn uses(&self, rbg: usize) -> bool {
        self.rbgs.get(rbg).is_some_and(Option::is_some)
    }
}

/// For every (cell, rbg): the other cells using that RBG in the same TTI.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterferenceView {
    by_cell: Vec<Vec<Vec<CellId>>>,
}

impl InterferenceView {
    pub fn empty(cells: &[Cell]) -> Self {
        Self {
            by_cell: cells.iter().map(|c| vec![Vec::new(); c.n_rbg]).collect(),
        }
    }

    pub fn interferers(&self, cell: CellId, rbg: usize) -> &[CellId] {
        self.by_cell
            .get(cell)
            .and_then(|v| v.get(rbg))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_interfered(&self, cell: CellId, rbg: usize) -> bool {
        !self.interferers(cell, rbg).is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.by_cell.iter().flatten().all(Vec::is_empty)
    }

    /// Number of (cell, rbg) pairs that carry an assignment and collide.
    pub fn interfered_count(&self) -> usize {
        self.by_cell.iter().flatten().filter(|v| !v.is_empty()).count()
    }
}

/// Collects, for each cell and RBG, every other cell that assigned the same
/// RBG. Allocations must all belong to the same TTI.
pub fn build_interference_view(allocations: &[RbgAllocation]) -> InterferenceView {
    let n_cells = allocations.iter().map(|a| a.cell + 1).max().unwrap_or(0);
    let mut by_cell: Vec<Vec<Vec<CellId>>> = vec![Vec::new(); n_cells];
    for a in allocations {
        by_cell[a.cell] = vec![Vec::new(); a.rbgs.len()];
    }
    for a in allocations {
        for b in allocations {
            if a.cell == b.cell {
                continue;
            }
            for (r, slot) in by_cell[a.cell].iter_mut().enumerate() {
                if a.uses(r) && b.uses(r) {
                    slot.push(b.cell);
                }
            }
        }
    }
    InterferenceView { by_cell }
}
