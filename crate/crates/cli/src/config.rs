//! Flat `key = value` run configuration with `include` directives.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Every key a run configuration may set, with its desk-profile default.
pub const KEYS: &[(&str, &str)] = &[
    ("profile", "desk"),
    ("precision", "f32"),
    // data
    ("corpus.train", "train.txt"),
    ("corpus.valid", "valid.txt"),
    ("corpus.test", "test.txt"),
    ("sentence_separator", "</s>"),
    ("stop_list", ""),
    ("min_count", "1"),
    ("top_frac", "0.001"),
    ("min_doc_frac", "0.01"),
    // language model
    ("conditioning", "document"),
    ("layers", "1"),
    ("hidden", "128"),
    ("embed", "64"),
    ("dropout", "0.4"),
    // topic components
    ("k", "10"),
    ("enc_hidden", "200"),
    ("stop_hidden", "200"),
    ("window", "30"),
    ("top_m", "0"),
    // training
    ("seq_len", "30"),
    ("batch_size", "16"),
    ("max_epochs", "15"),
    ("patience", "5"),
    ("optimizer", "adam"),
    ("lr", "0.003"),
    ("lr_divisor", "4"),
    ("clip_norm", "5"),
    // lda
    ("lda.alpha", "50"),
    ("lda.beta", "0.01"),
    ("lda.iterations", "1000"),
    ("lda.predict_burnin", "50"),
    ("lda.predict_samples", "10"),
    ("lda.predict_spacing", "5"),
    // evaluation
    ("npmi_window", "10"),
    ("probe.chunk", "30"),
    ("probe.ridge", "1e-4"),
    ("probe.solver", "ridge"),
];

/// Values the `paper` profile changes relative to the desk defaults.
const PAPER_PROFILE: &[(&str, &str)] = &[
    ("min_count", "10"),
    ("hidden", "600"),
    ("embed", "300"),
    ("k", "50"),
    ("batch_size", "64"),
    ("max_epochs", "40"),
    ("optimizer", "sgd"),
    ("lr", "20"),
];

/// Keys that describe where or how often to run, not what is computed; they stay out of
/// the config hash.
const UNHASHED: &[&str] = &["corpus.train", "corpus.valid", "corpus.test", "stop_list"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn parse_line(line: &str) -> Option<(&str, &str)> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) => (k.trim(), v.trim()),
        None => (line, ""),
    })
}

impl RunConfig {
    /// Reads `path`; `include = other` lines splice in another file (relative to the
    /// including file) at that point, so later lines override included ones.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.load_into(path, &mut Vec::new())?;
        Ok(cfg)
    }

    fn load_into(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> CliResult<()> {
        let canon = path.canonicalize().map_err(|e| CliError::io(path, e))?;
        if stack.contains(&canon) {
            return Err(CliError::Usage(format!("include cycle through {}", path.display())));
        }
        stack.push(canon);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        for (n, raw) in text.lines().enumerate() {
            let Some((key, value)) = parse_line(raw) else {
                continue;
            };
            if key == "include" {
                let base = path.parent().unwrap_or(Path::new("."));
                self.load_into(&base.join(value), stack)?;
            } else {
                self.set(key, value)
                    .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), n + 1)))?;
            }
        }
        stack.pop();
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Usage(format!("unknown config key '{key}'")));
        }
        if key == "profile" && !matches!(value, "desk" | "paper") {
            return Err(CliError::Usage(format!("unknown profile '{value}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides (from the command line).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> CliResult<()> {
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override '{p}' is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Effective value: explicit setting, then the profile, then the desk default.
    pub fn get(&self, key: &str) -> &str {
        if let Some(v) = self.values.get(key) {
            return v;
        }
        if self.get_explicit("profile") == Some("paper") {
            if let Some((_, v)) = PAPER_PROFILE.iter().find(|(k, _)| *k == key) {
                return v;
            }
        }
        KEYS.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("unregistered config key {key}"))
    }

    pub fn get_explicit(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| CliError::Usage(format!("config key '{key}' has invalid value '{v}'")))
    }

    /// All keys with their effective values, sorted.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<_> = KEYS.iter().map(|(k, _)| (*k, self.get(k).to_string())).collect();
        out.sort();
        out
    }

    /// Digest of the effective settings (file locations excluded) under a scope such
    /// as the model name, 16 hex digits.
    pub fn hash(&self, scope: &str) -> String {
        let mut h = Sha256::new();
        h.update(format!("scope={scope}\n").as_bytes());
        for (k, v) in self.resolved() {
            if !UNHASHED.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex16(&h.finalize())
    }

    /// The effective configuration as `key=value` lines.
    pub fn to_text(&self) -> String {
        self.resolved().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
