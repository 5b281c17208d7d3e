//! INI-style run configuration with a fixed schema.
//!
//! Every section and key must appear in [`SCHEMA`]; anything else is an
//! error. Missing keys take the schema default. `;` or `#` after
//! whitespace starts an inline comment. Keys outside the global
//! section (`[run]`) cannot be given twice.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::CliError;

/// (section, key, default). An empty default means "not set".
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("run", "seed", "2024"),
    ("run", "tol", ""),
    ("dims", "n", "3"),
    ("dims", "mmax", "4"),
    ("harmdecomp", "n", "3"),
    ("harmdecomp", "m", "4"),
    ("harmdecomp", "poly", ""),
    ("check-divtype", "family", "dstar-tracefree"),
    ("check-divtype", "n", "3"),
    ("check-divtype", "m", "2"),
    ("check-divtype", "r", "2"),
    ("check-divtype", "k", "1"),
    ("check-divtype", "samples", "96"),
    ("commutator-factor", "r", "3"),
    ("commutator-factor", "matrix", ""),
    ("torus", "n", "3"),
    ("torus", "cutoff", "1"),
    ("torus", "m", "0"),
    ("torus", "r", "1"),
    ("torus", "bundle", "vector"),
    ("torus", "connection", "zero"),
    ("eject", "direction", "ejection-vector"),
    ("eject", "s_max", "0.04"),
    ("eject", "points", "9"),
    ("eject", "radius", ""),
    ("kato", "size", "12"),
    ("kato", "kernel", "2"),
    ("kato", "kind", "skew"),
    ("kato", "radius", "0.25"),
    ("holonomy", "connection", "diagonal"),
    ("holonomy", "loops", "8"),
    ("holonomy", "length", "5.0"),
    ("holonomy", "steps", "200"),
];

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<(String, String), String>,
    base_dir: PathBuf,
}

/// Drops a trailing `; ...` or `# ...` that follows whitespace.
fn strip_comment(v: &str) -> &str {
    let cut = v
        .char_indices()
        .find(|&(i, c)| (c == ';' || c == '#') && v[..i].ends_with(char::is_whitespace))
        .map_or(v.len(), |(i, _)| i);
    v[..cut].trim()
}

fn known(section: &str, key: &str) -> bool {
    SCHEMA.iter().any(|(s, k, _)| *s == section && *k == key)
}

impl Config {
    pub fn defaults() -> Self {
        let values = SCHEMA.iter().map(|(s, k, d)| ((s.to_string(), k.to_string()), d.to_string())).collect();
        Config { values, base_dir: PathBuf::from(".") }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| CliError::Config(format!("line {}: {}", e.line, e.msg)))?;
        let mut cfg = Config::defaults();
        cfg.base_dir = base_dir.to_path_buf();
        let mut seen = std::collections::BTreeSet::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key '{k}' appears before any section")));
                }
                continue;
            };
            if !SCHEMA.iter().any(|(s, _, _)| *s == section) {
                return Err(CliError::Config(format!("unknown section [{section}]")));
            }
            for (k, v) in props.iter() {
                if !known(section, k) {
                    return Err(CliError::Config(format!("unknown key '{k}' in [{section}]")));
                }
                if !seen.insert((section.to_string(), k.to_string())) {
                    return Err(CliError::Config(format!("key '{k}' given twice in [{section}]")));
                }
                cfg.values.insert((section.to_string(), k.to_string()), strip_comment(v).to_string());
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set(&mut self, section: &str, key: &str, value: String) {
        debug_assert!(known(section, key));
        self.values.insert((section.to_string(), key.to_string()), value);
    }

    pub fn raw(&self, section: &str, key: &str) -> &str {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        let v = self.raw(section, key);
        v.parse().map_err(|_| CliError::Config(format!("[{section}] {key} = {v:?} is not valid")))
    }

    pub fn opt<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        if self.raw(section, key).is_empty() {
            Ok(None)
        } else {
            self.get(section, key).map(Some)
        }
    }

    /// Paths in the config are relative to the config file.
    pub fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        let v = self.raw(section, key);
        (!v.is_empty()).then(|| self.base_dir.join(v))
    }

    /// `key = value` lines of the given sections, sorted.
    pub fn canonical(&self, sections: &[&str]) -> String {
        let mut out = String::new();
        for ((s, k), v) in &self.values {
            if s == "run" || sections.contains(&s.as_str()) {
                out.push_str(&format!("{s}.{k}={v}\n"));
            }
        }
        out
    }
}
