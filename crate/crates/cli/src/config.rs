use std::path::Path;

use dscd_core::config::{Mode, SimConfig};
use dscd_core::ConfigError;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFlags {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub ttis: Option<u64>,
    /// Unlocks values outside the documented envelopes.
    pub allow_out_of_envelope: bool,
}

/// Reads the optional TOML file, applies flag overrides, and validates.
pub fn parse_config(path: Option<&Path>, flags: &ConfigFlags) -> Result<SimConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", p.display())))?;
            SimConfig::from_toml(&text)?
        }
        None => SimConfig::default(),
    };
    apply_flags(&mut cfg, flags);
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_flags(cfg: &mut SimConfig, flags: &ConfigFlags) {
    if let Some(m) = flags.mode {
        cfg.mode = m;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(r) = flags.runs {
        cfg.runs = r;
    }
    if let Some(t) = flags.ttis {
        cfg.ttis = t;
    }
    if flags.allow_out_of_envelope {
        cfg.allow_out_of_envelope = true;
    }
}
