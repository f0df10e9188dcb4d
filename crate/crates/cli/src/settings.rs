//! Layered run configuration: built-in defaults, then the --config file,
//! then command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use histoxai_core::kv::KvFile;

use crate::fail::{Failure, Kind};

/// Every recognised key with its default ("" = no default).
const KEYS: &[(&str, &str)] = &[
    ("run.seed", "7"),
    ("data.dir", ""),
    ("data.n", "520"),
    ("data.train_fraction", "0.8"),
    ("model.family", "mini-vgg"),
    ("model.widths", ""),
    ("model.seed", ""),
    ("model.checkpoint", ""),
    ("train.lr", "0.01"),
    ("train.epochs", "30"),
    ("train.batch_size", "16"),
    ("evaluate.split", "test"),
    ("evaluate.history", ""),
    ("explain.input", ""),
    ("explain.target", "predicted"),
    ("explain.alpha", "0.4"),
    ("explain.layer", ""),
    ("stats.survey", ""),
    ("stats.ttest", "pooled"),
    ("stats.experience_cut", "4"),
    ("stats.reverse", ""),
    ("stats.scale_min", "1"),
    ("stats.scale_max", "7"),
    ("audit.records", ""),
];

/// Manifest sections that a config loader skips, so a run.txt can be fed
/// back through --config.
const INFORMATIONAL: &[&str] = &["manifest", "seeds", "versions", "outputs"];

#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Keys set from command-line flags; bad values there are usage errors.
    from_flags: BTreeSet<String>,
}

impl Settings {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Settings {
            values,
            from_flags: BTreeSet::new(),
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let kind = if e.kind() == std::io::ErrorKind::NotFound { Kind::MissingInput } else { Kind::Io };
            Failure::new(kind, format!("config {}: {e}", path.display()))
        })?;
        let file = KvFile::parse(&text).map_err(|e| Failure::new(Kind::Config, format!("{}: {e}", path.display())))?;
        for sec in &file.sections {
            if INFORMATIONAL.contains(&sec.name.as_str()) {
                continue;
            }
            for e in &sec.entries {
                let key = if sec.name.is_empty() { format!("run.{}", e.key) } else { format!("{}.{}", sec.name, e.key) };
                if !KEYS.iter().any(|(k, _)| *k == key) {
                    return Err(Failure::new(
                        Kind::Config,
                        format!("{}: line {}: unknown setting {key}", path.display(), e.line),
                    ));
                }
                self.from_flags.remove(&key);
                self.values.insert(key, e.value.clone());
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.iter().any(|(k, _)| *k == key), "{key}");
        self.values.insert(key.to_string(), value.to_string());
        self.from_flags.insert(key.to_string());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// Failure kind for a bad value of `key`, by where the value came from.
    pub fn bad_value_kind(&self, key: &str) -> Kind {
        if self.from_flags.contains(key) {
            Kind::Usage
        } else {
            Kind::Config
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .raw(key)
            .ok_or_else(|| Failure::new(Kind::Usage, format!("missing setting {key}")))?;
        let kind = self.bad_value_kind(key);
        raw.parse()
            .map_err(|e| Failure::new(kind, format!("setting {key} = {raw:?}: {e}")))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.raw(key)
            .map(PathBuf::from)
            .ok_or_else(|| Failure::new(Kind::Usage, format!("missing setting {key}")))
    }

    /// Input path that must exist.
    pub fn input(&self, key: &str) -> Result<PathBuf, Failure> {
        let p = self.path(key)?;
        if !p.exists() {
            return Err(Failure::new(Kind::MissingInput, format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// `[section]` blocks for the given sections, in key order.
    pub fn render(&self, sections: &[&str]) -> String {
        let mut out = String::new();
        for sec in sections {
            let prefix = format!("{sec}.");
            let entries: Vec<(&String, &String)> =
                self.values.iter().filter(|(k, v)| k.starts_with(&prefix) && !v.is_empty()).collect();
            if entries.is_empty() {
                continue;
            }
            let _ = writeln!(out, "[{sec}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{} = {v}", &k[prefix.len()..]);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "seed = 3\n[train]\nepochs = 5\n[outputs]\nx = 1\n").unwrap();
        let mut s = Settings::defaults();
        s.load_file(&p).unwrap();
        assert_eq!(s.get::<u64>("run.seed").unwrap(), 3);
        s.set("train.epochs", 9);
        assert_eq!(s.get::<usize>("train.epochs").unwrap(), 9);
        assert_eq!(s.get::<f64>("train.lr").unwrap(), 0.01);
        let text = s.render(&["run", "train"]);
        assert!(text.contains("[train]\nbatch_size = 16\nepochs = 9\nlr = 0.01\n"));
    }

    #[test]
    fn unknown_key_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "[train]\nepochz = 5\n").unwrap();
        let err = Settings::defaults().load_file(&p).unwrap_err();
        assert_eq!(err.kind, Kind::Config);
    }
}
