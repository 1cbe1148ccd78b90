//! Run configuration with defaults for every field.

use serde::{Deserialize, Serialize};

use crate::a2c::A2cConfig;
use crate::error::ConfigError;
use crate::placement::PlacementConfig;
use crate::ran::ChannelParams;
use crate::traffic::{FlowSpec, TrafficClass};

/// Range of URLLC UE density accepted without `allow_out_of_envelope`.
pub const URLLC_DENSITY_RANGE: (f64, f64) = (0.1, 0.3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "dscd")]
    Dscd,
    #[serde(rename = "nf-du")]
    NfDu,
    #[serde(rename = "nf-cu")]
    NfCu,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Dscd, Mode::NfDu, Mode::NfCu];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Dscd => "dscd",
            Mode::NfDu => "nf-du",
            Mode::NfCu => "nf-cu",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| ConfigError::new("mode", format!("unknown mode `{s}` (expected dscd, nf-du or nf-cu)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Static UEs with video and AR traffic.
    Fixed,
    /// Adds moving vehicles carrying V2X traffic.
    Mobile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Global gradient L2 cap; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        let a = A2cConfig::default();
        Self {
            gamma: a.gamma,
            lr_actor: a.lr_actor,
            lr_critic: a.lr_critic,
            grad_clip: a.grad_clip.unwrap_or(0.0),
        }
    }
}

impl LearningConfig {
    pub fn a2c(&self) -> A2cConfig {
        A2cConfig {
            gamma: self.gamma,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub slots: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    /// Queued bits at which the buffer feature saturates.
    pub buffer_norm_bits: f64,
    pub masking: bool,
    pub train: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            slots: 16,
            actor_hidden: 900,
            critic_hidden: 100,
            buffer_norm_bits: 20_000.0,
            masking: true,
            train: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub packet_size_bits: u64,
    pub max_rate_bps: f64,
    pub video_rate_bps: f64,
    pub ar_rate_bps: f64,
    pub v2x_rate_bps: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            packet_size_bits: 1000,
            max_rate_bps: 256_000.0,
            video_rate_bps: 256_000.0,
            ar_rate_bps: 256_000.0,
            v2x_rate_bps: 256_000.0,
        }
    }
}

impl TrafficConfig {
    pub fn flow(&self, class: TrafficClass) -> FlowSpec {
        let rate = match class {
            TrafficClass::Video => self.video_rate_bps,
            TrafficClass::Ar => self.ar_rate_bps,
            TrafficClass::V2x => self.v2x_rate_bps,
        };
        FlowSpec::new(class, rate, self.packet_size_bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub runs: usize,
    pub ttis: u64,
    pub mode: Mode,
    pub scenario: Scenario,
    pub n_cells: usize,
    pub n_ues: usize,
    pub n_rbg: usize,
    pub rbs_per_rbg: u32,
    pub tti_ms: f64,
    pub cell_spacing_m: f64,
    /// Fraction of UEs carrying AR traffic.
    pub urllc_density: f64,
    /// Fraction of UEs that are V2X vehicles in the mobile scenario.
    pub vehicle_share: f64,
    pub vehicle_speed_mps: f64,
    /// Accept values outside the documented envelopes.
    pub allow_out_of_envelope: bool,
    /// TTIs per metrics window.
    pub window_ttis: u64,
    /// Trailing fraction of the run used for summary figures.
    pub tail_fraction: f64,
    pub a2c: LearningConfig,
    pub scheduler: SchedulerConfig,
    pub placement: PlacementConfig,
    pub traffic: TrafficConfig,
    pub channel: ChannelParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 10,
            ttis: 5000,
            mode: Mode::Dscd,
            scenario: Scenario::Fixed,
            n_cells: 4,
            n_ues: 40,
            n_rbg: 8,
            rbs_per_rbg: 4,
            tti_ms: 1.0,
            cell_spacing_m: 500.0,
            urllc_density: 0.2,
            vehicle_share: 0.3,
            vehicle_speed_mps: 15.0,
            allow_out_of_envelope: false,
            window_ttis: 100,
            tail_fraction: 0.5,
            a2c: LearningConfig::default(),
            scheduler: SchedulerConfig::default(),
            placement: PlacementConfig::default(),
            traffic: TrafficConfig::default(),
            channel: ChannelParams::default(),
        }
    }
}

fn positive<T: PartialOrd + Default + Copy>(key: &str, v: T) -> Result<(), ConfigError> {
    if v > T::default() {
        Ok(())
    } else {
        Err(ConfigError::new(key, "must be positive"))
    }
}

fn finite_positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("{v} must be finite and positive")))
    }
}

fn fraction(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("{v} outside [0, 1]")))
    }
}

impl SimConfig {
    /// Checks every field; the first offending key is reported.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("runs", self.runs)?;
        positive("n_cells", self.n_cells)?;
        positive("n_ues", self.n_ues)?;
        positive("n_rbg", self.n_rbg)?;
        positive("rbs_per_rbg", self.rbs_per_rbg)?;
        finite_positive("tti_ms", self.tti_ms)?;
        finite_positive("cell_spacing_m", self.cell_spacing_m)?;
        fraction("urllc_density", self.urllc_density)?;
        let (lo, hi) = URLLC_DENSITY_RANGE;
        if !self.allow_out_of_envelope && !(lo..=hi).contains(&self.urllc_density) {
            return Err(ConfigError::new(
                "urllc_density",
                format!("{} outside [{lo}, {hi}]; pass --override to allow", self.urllc_density),
            ));
        }
        fraction("vehicle_share", self.vehicle_share)?;
        if self.scenario == Scenario::Mobile && self.vehicle_share + self.urllc_density > 1.0 {
            return Err(ConfigError::new(
                "vehicle_share",
                "vehicle_share + urllc_density exceeds 1",
            ));
        }
        if !(self.vehicle_speed_mps >= 0.0 && self.vehicle_speed_mps.is_finite()) {
            return Err(ConfigError::new("vehicle_speed_mps", "must be finite and >= 0"));
        }
        positive("window_ttis", self.window_ttis)?;
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(ConfigError::new("tail_fraction", "must be in (0, 1]"));
        }

        let a = &self.a2c;
        if !(0.0..1.0).contains(&a.gamma) {
            return Err(ConfigError::new("a2c.gamma", format!("{} outside [0, 1)", a.gamma)));
        }
        for (key, lr) in [("a2c.lr_actor", a.lr_actor), ("a2c.lr_critic", a.lr_critic)] {
            if !(lr > 0.0 && lr <= 1.0) {
                return Err(ConfigError::new(key, format!("{lr} outside (0, 1]")));
            }
        }
        if !(a.grad_clip >= 0.0 && a.grad_clip.is_finite()) {
            return Err(ConfigError::new("a2c.grad_clip", "must be finite and >= 0"));
        }

        let s = &self.scheduler;
        positive("scheduler.slots", s.slots)?;
        positive("scheduler.actor_hidden", s.actor_hidden)?;
        positive("scheduler.critic_hidden", s.critic_hidden)?;
        finite_positive("scheduler.buffer_norm_bits", s.buffer_norm_bits)?;

        self.placement.validate()?;

        let t = &self.traffic;
        positive("traffic.packet_size_bits", t.packet_size_bits)?;
        finite_positive("traffic.max_rate_bps", t.max_rate_bps)?;
        for (key, class) in [
            ("traffic.video_rate_bps", TrafficClass::Video),
            ("traffic.ar_rate_bps", TrafficClass::Ar),
            ("traffic.v2x_rate_bps", TrafficClass::V2x),
        ] {
            t.flow(class)
                .validate(t.max_rate_bps)
                .map_err(|reason| ConfigError::new(key, reason))?;
        }

        let c = &self.channel;
        finite_positive("channel.path_loss_exponent", c.path_loss_exponent)?;
        finite_positive("channel.near_distance_m", c.near_distance_m)?;
        if !(c.max_radius_m.is_finite() && c.max_radius_m > c.near_distance_m) {
            return Err(ConfigError::new("channel.max_radius_m", "must exceed channel.near_distance_m"));
        }
        if !(c.shadowing_sigma_db >= 0.0 && c.shadowing_sigma_db.is_finite()) {
            return Err(ConfigError::new("channel.shadowing_sigma_db", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Number of UEs per class, in the order V2X, AR, video.
    pub fn class_counts(&self) -> [(TrafficClass, usize); 3] {
        let vehicles = match self.scenario {
            Scenario::Fixed => 0,
            Scenario::Mobile => (self.vehicle_share * self.n_ues as f64).round() as usize,
        };
        let ar = ((self.urllc_density * self.n_ues as f64).round() as usize).min(self.n_ues - vehicles);
        [
            (TrafficClass::V2x, vehicles),
            (TrafficClass::Ar, ar),
            (TrafficClass::Video, self.n_ues - vehicles - ar),
        ]
    }

    /// Seed of run `i`.
    pub fn run_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| toml_error(&e))
    }
}

/// Names the offending key when the parser reports one.
fn toml_error(e: &toml::de::Error) -> ConfigError {
    let msg = e.message().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.starts_with("unknown field"))
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string());
    ConfigError::new(key, msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::Location;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_toml_gives_defaults() {
        assert_eq!(SimConfig::from_toml("").unwrap(), SimConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = SimConfig::default();
        c.placement.pin = Some(Location::Cu);
        c.mode = Mode::NfCu;
        c.traffic.ar_rate_bps = 1234.5678901234;
        assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = SimConfig::from_toml("bogus = 1").unwrap_err();
        assert_eq!(e.key, "bogus");
        let e = SimConfig::from_toml("[a2c]\nalpha = 1").unwrap_err();
        assert_eq!(e.key, "alpha");
    }

    #[test]
    fn density_envelope() {
        let mut c = SimConfig {
            urllc_density: 0.5,
            ..SimConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().key, "urllc_density");
        c.allow_out_of_envelope = true;
        c.validate().unwrap();
    }

    #[test]
    fn rate_cap_enforced() {
        let mut c = SimConfig::default();
        c.traffic.video_rate_bps = 300_000.0;
        assert_eq!(c.validate().unwrap_err().key, "traffic.video_rate_bps");
    }

    #[test]
    fn class_counts_sum_to_ues() {
        let mut c = SimConfig {
            n_ues: 12,
            ..SimConfig::default()
        };
        assert_eq!(c.class_counts().map(|(_, n)| n), [0, 2, 10]);
        c.scenario = Scenario::Mobile;
        assert_eq!(c.class_counts().map(|(_, n)| n), [4, 2, 6]);
    }
}
