//! Layered run configuration.
//!
//! Every flag resolves through four layers, weakest first: built-in default,
//! `--config` file (plain `key=value` lines), environment variable
//! (`HUBNET_<KEY>` with the key upper-snake-cased), then the command-line
//! flag itself. The resolved configuration is echoed as `run_config.json`
//! into every output directory, so a run can be reproduced from its
//! artifacts alone.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use hubnet::error::{Error, Result};

/// Config-file plus environment lookups for one run.
#[derive(Debug, Default, Clone)]
pub struct Layers {
    file: BTreeMap<String, String>,
}

pub const ENV_PREFIX: &str = "HUBNET_";

impl Layers {
    /// Loads a `key=value` config file; `#` starts a comment.
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected key=value, got {raw:?}"),
                })?;
                file.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Layers { file })
    }

    fn env_key(key: &str) -> String {
        format!("{ENV_PREFIX}{}", key.to_uppercase().replace('-', "_"))
    }

    fn lookup(&self, key: &str) -> Option<(String, &'static str)> {
        if let Ok(v) = std::env::var(Self::env_key(key)) {
            return Some((v, "environment"));
        }
        self.file.get(key).map(|v| (v.clone(), "config file"))
    }

    /// Resolves one value: flag wins, then environment, then config file,
    /// then the default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some((raw, source)) => raw.parse().map_err(|e| {
                Error::InvalidParameter(format!("{key} from {source}: {e} (value {raw:?})"))
            }),
            None => Ok(default),
        }
    }

    /// Like [`Self::resolve`] but the value stays optional.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some((raw, source)) => raw
                .parse()
                .map(Some)
                .map_err(|e| {
                    Error::InvalidParameter(format!(
                        "{key} from {source}: {e} (value {raw:?})"
                    ))
                }),
            None => Ok(None),
        }
    }
}

/// Writes the effective configuration next to the artifacts it produced.
pub fn echo_config<C: serde::Serialize>(config: &C, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(config)?;
    std::fs::write(dir.join("run_config.json"), json + "\n")?;
    Ok(())
}

/// Runs `build` against a staging directory and renames it into place only
/// on success, so the output directory never exists half-written.
pub fn with_staged_dir(out: &Path, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if out.exists() {
        return Err(Error::InvalidParameter(format!(
            "output directory {} already exists",
            out.display()
        )));
    }
    let name = out
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("bad output path {}", out.display())))?
        .to_string_lossy()
        .to_string();
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let stage = parent.join(format!(".{name}.tmp.{}", std::process::id()));
    if stage.exists() {
        std::fs::remove_dir_all(&stage)?;
    }
    std::fs::create_dir_all(&stage)?;
    match build(&stage) {
        Ok(()) => {
            std::fs::rename(&stage, out)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&stage);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_env_file_default() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "h0 = 3\n# comment\nwindow = 24\n").unwrap();
        let layers = Layers::from_file(Some(&cfg)).unwrap();
        // File beats default.
        assert_eq!(layers.resolve::<usize>(None, "h0", 1).unwrap(), 3);
        // Absent everywhere: default.
        assert_eq!(layers.resolve::<usize>(None, "step", 12).unwrap(), 12);
        // Flag beats file.
        assert_eq!(layers.resolve(Some(5usize), "h0", 1).unwrap(), 5);
        // Environment beats file. Key is unique to avoid cross-test races.
        std::env::set_var("HUBNET_WINDOW", "48");
        assert_eq!(layers.resolve::<usize>(None, "window", 60).unwrap(), 48);
        std::env::remove_var("HUBNET_WINDOW");
    }

    #[test]
    fn bad_values_carry_their_source() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "h0=banana\n").unwrap();
        let layers = Layers::from_file(Some(&cfg)).unwrap();
        let err = layers.resolve::<usize>(None, "h0", 1).unwrap_err();
        assert!(err.to_string().contains("config file"));
    }

    #[test]
    fn staged_dir_discards_failures() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("result");
        let err = with_staged_dir(&out, |stage| {
            std::fs::write(stage.join("partial.txt"), "x")?;
            Err(Error::InvalidParameter("boom".into()))
        });
        assert!(err.is_err());
        assert!(!out.exists());
        // No stray staging directory either.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        with_staged_dir(&out, |stage| {
            std::fs::write(stage.join("done.txt"), "x")?;
            Ok(())
        })
        .unwrap();
        assert!(out.join("done.txt").exists());
        // Existing output is refused.
        assert!(with_staged_dir(&out, |_| Ok(())).is_err());
    }
}
