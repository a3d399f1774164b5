//! Plain-text run manifest. It is itself a valid config file: provenance sits
//! in comments and every resolved setting is a `key = value` line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{Context, Result};

pub const COMMAND_KEY: &str = "command";

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn render(command: &str, settings: &BTreeMap<String, String>, outputs: &[PathBuf], wall_secs: f64) -> String {
    let mut s = String::from("# simbias run manifest\n");
    let _ = writeln!(s, "# version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# git_describe = {}", git_describe());
    let _ = writeln!(s, "# wall_time_s = {wall_secs:.3}");
    for o in outputs {
        let _ = writeln!(s, "# output = {}", o.display());
    }
    let _ = writeln!(s, "{COMMAND_KEY} = {command}");
    for (k, v) in settings {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("{}: cannot write manifest", path.display()))
}

/// `runs/x` → `runs/x/manifest.txt`; `data.csv` → `data.manifest.txt`.
pub fn path_for(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.txt")
    } else {
        out.with_extension("manifest.txt")
    }
}
