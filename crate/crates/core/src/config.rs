//! `key=value` configuration files.
//!
//! One assignment per line; `#` starts a comment; keys are case-insensitive
//! and `-` and `_` are interchangeable. Used both for CLI defaults and for
//! simulator truth specifications.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::inference::ModelParams;

/// Parsed assignments with their source line numbers.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    source: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

fn normalise_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

impl KeyValues {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                path: source.to_path_buf(),
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            entries.insert(normalise_key(k), (v.trim().to_owned(), i + 1));
        }
        Ok(Self { source: source.to_path_buf(), entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?, path)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalise_key(key)).map(|(v, _)| v.as_str())
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(&normalise_key(key)) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Config {
                path: self.source.clone(),
                line: *line,
                message: format!("cannot parse value {v:?} for {key}"),
            }),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Ground truth for the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub params: ModelParams,
    pub innings: usize,
    pub players: usize,
    pub censor_fraction: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            params: ModelParams {
                c: 0.3,
                d: 0.12,
                lambda: 40.0,
                sigma: 0.2,
                ell: 20.0,
                alpha: 1.5,
                psi: 1.2,
                phi: 1.1,
                z: Vec::new(),
            },
            innings: 200,
            players: 1,
            censor_fraction: 0.1,
        }
    }
}

impl TruthSpec {
    /// Reads a truth spec; unspecified keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut t = Self::default();
        let p = &mut t.params;
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(p.c, "c");
        set!(p.d, "d");
        set!(p.lambda, "lambda");
        set!(p.sigma, "sigma");
        set!(p.ell, "ell");
        set!(p.alpha, "alpha");
        set!(p.psi, "psi");
        set!(p.phi, "phi");
        set!(t.innings, "innings");
        set!(t.players, "players");
        set!(t.censor_fraction, "censor_fraction");
        if t.innings == 0 {
            return Err(Error::InvalidParameter("innings must be positive".into()));
        }
        if !(0.0..=1.0).contains(&t.censor_fraction) {
            return Err(Error::InvalidParameter("censor_fraction must lie in [0, 1]".into()));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignments() {
        let kv = KeyValues::parse("# truth\nlambda = 40\nSIGMA=0.2 # comment\nmh-steps=50\n", Path::new("x")).unwrap();
        assert_eq!(kv.get::<f64>("lambda").unwrap(), Some(40.0));
        assert_eq!(kv.get::<f64>("sigma").unwrap(), Some(0.2));
        assert_eq!(kv.get::<usize>("mh_steps").unwrap(), Some(50));
        assert_eq!(kv.get::<f64>("ell").unwrap(), None);
        assert!(KeyValues::parse("oops\n", Path::new("x")).is_err());
        assert!(kv.get::<usize>("lambda").unwrap() == Some(40));
    }

    #[test]
    fn truth_defaults_and_overrides() {
        let kv = KeyValues::parse("sigma=0\ninnings=30\n", Path::new("t")).unwrap();
        let t = TruthSpec::from_key_values(&kv).unwrap();
        assert_eq!(t.params.sigma, 0.0);
        assert_eq!(t.innings, 30);
        assert_eq!(t.params.lambda, 40.0);
    }
}
