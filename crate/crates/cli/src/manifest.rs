//! The run.txt written last into every output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use histoxai_core::network::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use histoxai_core::rng::{self, stream};
use sha2::{Digest, Sha256};

use crate::fail::{Failure, Kind};
use crate::settings::Settings;

pub const FILE: &str = "run.txt";

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Resolved config, seed sub-streams, versions and output checksums. The
/// file can be passed back through --config to repeat the run.
pub fn write(out: &Path, command: &str, settings: &Settings, outputs: &[PathBuf]) -> Result<PathBuf, Failure> {
    let mut text = String::new();
    let _ = writeln!(text, "# histoxai run manifest\n");
    let _ = writeln!(text, "[manifest]\ncommand = {command}\n");
    text.push_str(&settings.render(&["run", "data", "model", "train", "evaluate", "explain", "stats", "audit"]));

    let seed: u64 = settings.get("run.seed")?;
    let _ = writeln!(text, "[seeds]");
    for name in [stream::DATA, stream::INIT, stream::SHUFFLE, stream::SPLIT] {
        let _ = writeln!(text, "{name} = {}", rng::substream_seed(seed, name));
    }
    let _ = writeln!(text, "\n[versions]");
    let _ = writeln!(text, "histoxai = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "checkpoint = {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}");

    let mut rel: Vec<(String, &PathBuf)> = outputs
        .iter()
        .map(|p| (p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/"), p))
        .collect();
    rel.sort();
    let _ = writeln!(text, "\n[outputs]");
    for (name, path) in rel {
        let _ = writeln!(text, "{name} = {}", sha256_file(path)?);
    }
    let path = out.join(FILE);
    fs::write(&path, text).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
    Ok(path)
}
