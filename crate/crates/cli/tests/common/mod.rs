#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small, fast config: two cells, narrow nets.
pub const SMALL_TOML: &str = r#"
n_cells = 2
n_ues = 8
ttis = 300
runs = 2
window_ttis = 50

[scheduler]
actor_hidden = 16
critic_hidden = 8

[placement]
actor_hidden = 16
critic_hidden = 8
"#;

/// A fresh, empty scratch directory under the system temp dir.
pub fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dscd-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn dscd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dscd"))
        .args(args)
        .env_remove("DSCD_OUT_DIR")
        .output()
        .expect("binary runs")
}
