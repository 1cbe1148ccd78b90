//! Per-window, per-class counters and the metrics derived from them.

use serde::{Deserialize, Serialize};

use crate::placement::{relocation_ratio, Location, RelocationRatio};
use crate::traffic::TrafficClass;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounters {
    pub arrivals: u64,
    pub arrival_bits: u64,
    pub delivered: u64,
    pub delivered_bits: u64,
    pub dropped: u64,
    pub dropped_bits: u64,
    /// Sum of HoL ages at delivery.
    pub hol_sum_ms: f64,
    /// UE-TTIs spent with the serving scheduler at each location.
    pub ue_ttis_du: u64,
    pub ue_ttis_cu: u64,
}

impl ClassCounters {
    pub fn add(&mut self, o: &ClassCounters) {
        self.arrivals += o.arrivals;
        self.arrival_bits += o.arrival_bits;
        self.delivered += o.delivered;
        self.delivered_bits += o.delivered_bits;
        self.dropped += o.dropped;
        self.dropped_bits += o.dropped_bits;
        self.hol_sum_ms += o.hol_sum_ms;
        self.ue_ttis_du += o.ue_ttis_du;
        self.ue_ttis_cu += o.ue_ttis_cu;
    }

    /// delivered / (delivered + dropped); absent without arrivals or
    /// without any packet leaving the queues.
    pub fn pdr(&self) -> Option<f64> {
        let done = self.delivered + self.dropped;
        if self.arrivals == 0 || done == 0 {
            return None;
        }
        Some(self.delivered as f64 / done as f64)
    }

    /// Mean HoL age at delivery; absent when nothing was delivered.
    pub fn mean_hol_ms(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.hol_sum_ms / self.delivered as f64)
    }

    /// Delivered bits per ms, i.e. kbit/s.
    pub fn throughput_kbps(&self, duration_ms: f64) -> Option<f64> {
        (duration_ms > 0.0).then(|| self.delivered_bits as f64 / duration_ms)
    }

    pub fn relocation(&self) -> Option<RelocationRatio> {
        relocation_ratio(self.ue_ttis_du, self.ue_ttis_cu)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_tti: u64,
    pub ttis: u64,
    /// Indexed by [`TrafficClass::index`].
    pub classes: [ClassCounters; 3],
    pub granted_rbgs: u64,
    pub interfered_rbgs: u64,
    /// Placement decisions, one per DU per epoch.
    pub decisions_du: u64,
    pub decisions_cu: u64,
    /// Decisions taken for DUs whose offered load was mostly URLLC.
    pub urllc_dominated_du: u64,
    pub urllc_dominated_cu: u64,
}

impl Window {
    pub fn new(start_tti: u64) -> Self {
        Self {
            start_tti,
            ..Self::default()
        }
    }

    pub fn class(&self, c: TrafficClass) -> &ClassCounters {
        &self.classes[c.index()]
    }

    pub fn class_mut(&mut self, c: TrafficClass) -> &mut ClassCounters {
        &mut self.classes[c.index()]
    }

    pub fn add(&mut self, o: &Window) {
        self.ttis += o.ttis;
        for (a, b) in self.classes.iter_mut().zip(&o.classes) {
            a.add(b);
        }
        self.granted_rbgs += o.granted_rbgs;
        self.interfered_rbgs += o.interfered_rbgs;
        self.decisions_du += o.decisions_du;
        self.decisions_cu += o.decisions_cu;
        self.urllc_dominated_du += o.urllc_dominated_du;
        self.urllc_dominated_cu += o.urllc_dominated_cu;
    }

    pub fn record_decision(&mut self, loc: Location, urllc_dominated: bool) {
        match (loc, urllc_dominated) {
            (Location::Du, d) => {
                self.decisions_du += 1;
                self.urllc_dominated_du += d as u64;
            }
            (Location::Cu, d) => {
                self.decisions_cu += 1;
                self.urllc_dominated_cu += d as u64;
            }
        }
    }

    pub fn decision_ratio(&self) -> Option<RelocationRatio> {
        relocation_ratio(self.decisions_du, self.decisions_cu)
    }

    pub fn urllc_dominated_ratio(&self) -> Option<RelocationRatio> {
        relocation_ratio(self.urllc_dominated_du, self.urllc_dominated_cu)
    }
}

/// Counters for one run, split into fixed-length TTI windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLedger {
    pub window_ttis: u64,
    pub tti_ms: f64,
    pub windows: Vec<Window>,
}

impl MetricsLedger {
    pub fn new(window_ttis: u64, tti_ms: f64) -> Self {
        assert!(window_ttis > 0);
        Self {
            window_ttis,
            tti_ms,
            windows: Vec::new(),
        }
    }

    /// Window holding `tti`, opening new windows as time advances.
    pub fn window_mut(&mut self, tti: u64) -> &mut Window {
        let idx = (tti / self.window_ttis) as usize;
        while self.windows.len() <= idx {
            let start = self.windows.len() as u64 * self.window_ttis;
            self.windows.push(Window::new(start));
        }
        &mut self.windows[idx]
    }

    pub fn total_ttis(&self) -> u64 {
        self.windows.iter().map(|w| w.ttis).sum()
    }

    /// Sum of every window starting at or after `from_tti`.
    pub fn merged_from(&self, from_tti: u64) -> Window {
        let mut out = Window::new(from_tti);
        for w in self.windows.iter().filter(|w| w.start_tti >= from_tti) {
            out.add(w);
        }
        out
    }

    /// First TTI of the trailing `fraction` of the run, rounded down to a
    /// window boundary.
    pub fn tail_start(&self, fraction: f64) -> u64 {
        let total = self.total_ttis();
        let skip = ((1.0 - fraction) * total as f64).round() as u64;
        skip / self.window_ttis * self.window_ttis
    }

    pub fn tail(&self, fraction: f64) -> Window {
        self.merged_from(self.tail_start(fraction))
    }

    pub fn pdr(&self, class: TrafficClass, window: usize) -> Option<f64> {
        self.windows.get(window)?.class(class).pdr()
    }

    pub fn mean_hol(&self, class: TrafficClass, window: usize) -> Option<f64> {
        self.windows.get(window)?.class(class).mean_hol_ms()
    }

    pub fn throughput_kbps(&self, class: TrafficClass, window: usize) -> Option<f64> {
        let w = self.windows.get(window)?;
        w.class(class).throughput_kbps(w.ttis as f64 * self.tti_ms)
    }
}

/// Derived metrics for one class over one span of TTIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: TrafficClass,
    pub mean_hol_ms: Option<f64>,
    pub pdr: Option<f64>,
    pub throughput_kbps: Option<f64>,
    pub du_ratio: Option<f64>,
    pub cu_ratio: Option<f64>,
}

impl ClassMetrics {
    pub fn from_window(w: &Window, class: TrafficClass, tti_ms: f64) -> Self {
        let c = w.class(class);
        let reloc = c.relocation();
        Self {
            class,
            mean_hol_ms: c.mean_hol_ms(),
            pdr: c.pdr(),
            throughput_kbps: c.throughput_kbps(w.ttis as f64 * tti_ms),
            du_ratio: reloc.map(|r| r.du),
            cu_ratio: reloc.map(|r| r.cu),
        }
    }
}

/// Metric row keyed by window start and class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_start_tti: u64,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

/// Rows ordered by window, then class.
pub fn window_rows(ledger: &MetricsLedger) -> Vec<WindowRow> {
    ledger
        .windows
        .iter()
        .flat_map(|w| {
            TrafficClass::ALL.into_iter().map(move |class| WindowRow {
                window_start_tti: w.start_tti,
                metrics: ClassMetrics::from_window(w, class, ledger.tti_ms),
            })
        })
        .collect()
}

/// Mean of the present values; absent when none are.
pub fn mean_present(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn mean_metrics(class: TrafficClass, items: &[ClassMetrics]) -> ClassMetrics {
    ClassMetrics {
        class,
        mean_hol_ms: mean_present(items.iter().map(|m| m.mean_hol_ms)),
        pdr: mean_present(items.iter().map(|m| m.pdr)),
        throughput_kbps: mean_present(items.iter().map(|m| m.throughput_kbps)),
        du_ratio: mean_present(items.iter().map(|m| m.du_ratio)),
        cu_ratio: mean_present(items.iter().map(|m| m.cu_ratio)),
    }
}

/// Per-window, per-class mean across runs, folded in run order.
pub fn aggregate_rows(ledgers: &[MetricsLedger]) -> Vec<WindowRow> {
    let per_run: Vec<Vec<WindowRow>> = ledgers.iter().map(window_rows).collect();
    let n_rows = per_run.iter().map(Vec::len).max().unwrap_or(0);
    (0..n_rows)
        .map(|i| {
            let present: Vec<&WindowRow> = per_run.iter().filter_map(|rows| rows.get(i)).collect();
            let items: Vec<ClassMetrics> = present.iter().map(|r| r.metrics).collect();
            WindowRow {
                window_start_tti: present[0].window_start_tti,
                metrics: mean_metrics(present[0].metrics.class, &items),
            }
        })
        .collect()
}

/// Trailing-fraction metrics per class, averaged across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tail_fraction: f64,
    pub classes: Vec<ClassMetrics>,
    /// Share of placement decisions at the DU / CU.
    pub decision_du_ratio: Option<f64>,
    pub decision_cu_ratio: Option<f64>,
    /// Same, restricted to DUs whose offered load was mostly URLLC.
    pub urllc_dominated_du_ratio: Option<f64>,
    pub urllc_dominated_cu_ratio: Option<f64>,
    pub interfered_rbg_share: Option<f64>,
}

impl Summary {
    pub fn class(&self, c: TrafficClass) -> &ClassMetrics {
        self.classes.iter().find(|m| m.class == c).expect("every class summarized")
    }
}

pub fn summarize(ledgers: &[MetricsLedger], tail_fraction: f64) -> Summary {
    let tails: Vec<(Window, f64)> = ledgers.iter().map(|l| (l.tail(tail_fraction), l.tti_ms)).collect();
    let classes = TrafficClass::ALL
        .into_iter()
        .map(|class| {
            let items: Vec<ClassMetrics> = tails
                .iter()
                .map(|(w, tti_ms)| ClassMetrics::from_window(w, class, *tti_ms))
                .collect();
            mean_metrics(class, &items)
        })
        .collect();
    let decisions: Vec<Option<RelocationRatio>> = tails.iter().map(|(w, _)| w.decision_ratio()).collect();
    let dominated: Vec<Option<RelocationRatio>> = tails.iter().map(|(w, _)| w.urllc_dominated_ratio()).collect();
    Summary {
        tail_fraction,
        classes,
        decision_du_ratio: mean_present(decisions.iter().map(|r| r.map(|r| r.du))),
        decision_cu_ratio: mean_present(decisions.iter().map(|r| r.map(|r| r.cu))),
        urllc_dominated_du_ratio: mean_present(dominated.iter().map(|r| r.map(|r| r.du))),
        urllc_dominated_cu_ratio: mean_present(dominated.iter().map(|r| r.map(|r| r.cu))),
        interfered_rbg_share: mean_present(tails.iter().map(|(w, _)| {
            (w.granted_rbgs > 0).then(|| w.interfered_rbgs as f64 / w.granted_rbgs as f64)
        })),
    }
}
