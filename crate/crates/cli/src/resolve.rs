//! Merges command-line flags with configuration-file values.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vacancy_core::config::RunConfig;

use crate::error::CliError;

/// Looks values up by flag first, then `[section] key`, then the unnamed
/// section of the config.
pub struct Resolver<'a> {
    config: Option<&'a RunConfig>,
    /// Directory relative config paths resolve against.
    base: PathBuf,
    section: &'a str,
}

impl<'a> Resolver<'a> {
    pub fn new(config: Option<&'a RunConfig>, base: &Path, section: &'a str) -> Self {
        Self {
            config,
            base: base.to_path_buf(),
            section,
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        let cfg = self.config?;
        cfg.get(self.section, key).or_else(|| cfg.get("", key))
    }

    pub fn opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config [{}] {key} = {v}: {e}", self.section))),
        }
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn req<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.opt(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("{} requires --{}", self.section, key.replace('_', "-"))))
    }

    /// Path from the flag (as given) or the config (relative to the config
    /// file's directory).
    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.raw(key).map(|v| self.base.join(v)))
    }

    pub fn req_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.path(flag, key)
            .ok_or_else(|| CliError::Usage(format!("{} requires --{}", self.section, key.replace('_', "-"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_section_beats_global() {
        let cfg = RunConfig::parse("format_version = 1\nseed = 1\nyears = 5\n[bootstrap]\nseed = 2\n").unwrap();
        let r = Resolver::new(Some(&cfg), Path::new("/cfg"), "bootstrap");
        assert_eq!(r.opt(Some(3u64), "seed").unwrap(), Some(3));
        assert_eq!(r.opt(None::<u64>, "seed").unwrap(), Some(2));
        assert_eq!(r.opt(None::<u32>, "years").unwrap(), Some(5));
        assert_eq!(r.opt(None::<u32>, "absent").unwrap(), None);
        assert!(matches!(r.req(None::<u32>, "absent"), Err(CliError::Usage(_))));
        assert_eq!(r.path(None, "seed"), Some(PathBuf::from("/cfg/2")));
    }

    #[test]
    fn bad_config_value_is_usage_error() {
        let cfg = RunConfig::parse("format_version = 1\n[did]\npolicy_year = soon\n").unwrap();
        let r = Resolver::new(Some(&cfg), Path::new("."), "did");
        assert!(matches!(r.opt(None::<u32>, "policy_year"), Err(CliError::Usage(_))));
    }
}
