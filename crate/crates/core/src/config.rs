//! Run configuration: line-oriented `key = value` text grouped in
//! `[section]` blocks.
//!
//! ```text
//! format_version = 1
//!
//! [did]
//! panel = fixtures/calibrated_panel.csv
//! treated = CAM
//! ```
//!
//! Keys before the first section header live in the unnamed section. `#`
//! starts a comment line. Serialisation is canonical (sorted sections and
//! keys), so the digest of a parsed config does not depend on layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Keys whose values name files that must exist.
pub const PATH_KEYS: &[&str] = &["panel", "records", "scenario", "baseline", "alternative"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config has no format_version")]
    MissingFormatVersion,
    #[error("unsupported config format_version {0}")]
    UnsupportedVersion(u32),
    #[error("[{section}] {key}: path '{path}' does not exist")]
    MissingPath {
        section: String,
        key: String,
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub format_version: u32,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            sections: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        let mut version = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(ConfigError::Parse {
                        line: line_no,
                        message: format!("bad section name '{name}'"),
                    });
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: "expected 'key = value'".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("bad key '{key}'"),
                });
            }
            if current.is_empty() && key == "format_version" {
                let v: u32 = value.parse().map_err(|_| ConfigError::Parse {
                    line: line_no,
                    message: format!("format_version must be an integer, got '{value}'"),
                })?;
                version = Some(v);
                continue;
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        let format_version = version.ok_or(ConfigError::MissingFormatVersion)?;
        if format_version != FORMAT_VERSION {
            return Err(ConfigError::UnsupportedVersion(format_version));
        }
        Ok(Self {
            format_version,
            sections,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("format_version = {}\n", self.format_version);
        for (name, keys) in &self.sections {
            if !name.is_empty() {
                let _ = write!(out, "\n[{name}]\n");
            }
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    pub fn section(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Hex SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    /// Checks that every path-valued key in `section` names an existing file.
    /// Relative paths resolve against `base`.
    pub fn validate_paths(&self, section: &str, base: &Path) -> Result<(), ConfigError> {
        for (key, value) in self.section(section) {
            if PATH_KEYS.contains(&key) && !base.join(value).exists() {
                return Err(ConfigError::MissingPath {
                    section: section.to_string(),
                    key: key.to_string(),
                    path: value.to_string(),
                });
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment
format_version = 1
seed = 7

[did]
treated = CAM
panel = data/panel.csv
[bootstrap]
replications = 999
";

    #[test]
    fn parse_and_lookup() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.get("", "seed"), Some("7"));
        assert_eq!(c.get("did", "treated"), Some("CAM"));
        assert_eq!(c.get("bootstrap", "replications"), Some("999"));
        assert_eq!(c.get("did", "missing"), None);
    }

    #[test]
    fn round_trip_is_identity() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_text(), again.to_text());
        assert_eq!(c.digest(), again.digest());
    }

    #[test]
    fn errors() {
        assert_eq!(RunConfig::parse("seed = 1\n"), Err(ConfigError::MissingFormatVersion));
        assert_eq!(RunConfig::parse("format_version = 9\n"), Err(ConfigError::UnsupportedVersion(9)));
        assert!(matches!(
            RunConfig::parse("format_version = 1\n[did\n"),
            Err(ConfigError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            RunConfig::parse("format_version = 1\na = 1\na = 2\n"),
            Err(ConfigError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            RunConfig::parse("format_version = 1\njust words\n"),
            Err(ConfigError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn missing_path_detected() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        let err = c.validate_paths("did", Path::new("/nonexistent-base")).unwrap_err();
        assert!(matches!(err, ConfigError::MissingPath { ref key, .. } if key == "panel"));
        assert!(c.validate_paths("bootstrap", Path::new("/")).is_ok());
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
