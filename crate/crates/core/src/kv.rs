//! Flat `key = value` text with `[section]` headers.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Entries before
//! the first header belong to the unnamed root section.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvFile {
    pub sections: Vec<Section>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = vec![Section {
            name: String::new(),
            line: 0,
            entries: Vec::new(),
        }];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .ok_or_else(|| Error::Parse { line, msg: format!("unterminated section header {s:?}") })?;
                if !valid_name(name) {
                    return Err(Error::Parse { line, msg: format!("bad section name {name:?}") });
                }
                if sections.iter().any(|sec| sec.name == name) {
                    return Err(Error::Parse { line, msg: format!("duplicate section [{name}]") });
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, msg: format!("expected key = value, got {s:?}") })?;
            let key = key.trim();
            if !valid_name(key) {
                return Err(Error::Parse { line, msg: format!("bad key {key:?}") });
            }
            let sec = sections.last_mut().expect("root section");
            if sec.entry(key).is_some() {
                return Err(Error::Parse { line, msg: format!("duplicate key {key:?}") });
            }
            sec.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        if sections[0].entries.is_empty() {
            sections.remove(0);
        }
        Ok(KvFile { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}
