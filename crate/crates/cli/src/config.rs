//! Line-oriented experiment configuration.
//!
//! ```text
//! seed = 42
//! profile = Q(1)
//! g = 2
//!
//! [verify-cones]
//! n_samples = 1000000
//! ```
//!
//! Top-level keys come before the first `[section]`. Blank lines and `#`
//! comments are ignored. Unknown sections, unknown keys and repeated keys
//! are errors that carry the line number.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pingpong_core::WallMotion;

use crate::error::{CliError, Result};

pub const GLOBAL: &str = "";

const SCHEMA: &[(&str, &[&str])] = &[
    (GLOBAL, &["seed", "profile", "g", "threads", "out"]),
    (
        "simulate",
        &["t0", "v0", "n_steps", "map", "escape_velocity"],
    ),
    ("verify-cones", &["n_samples", "family", "sigma_samples"]),
    (
        "fragmentation",
        &[
            "n_max",
            "n_trials",
            "n0_trials",
            "curve_length",
            "growth_n",
            "growth_trials",
            "growth_length",
            "delta2",
        ],
    ),
    (
        "stats",
        &[
            "experiments",
            "observable",
            "gamma_samples",
            "gamma_k_se",
            "birkhoff_steps",
            "birkhoff_tol",
            "corr_ensemble",
            "max_lag",
            "corr_lag_lo",
            "corr_ratio",
            "clt_n",
            "clt_ensembles",
            "clt_corr_ensemble",
            "clt_max_lag",
            "ks_tol",
            "variance_tol",
            "rec_v_lo",
            "rec_v_hi",
            "rec_epsilon",
            "rec_horizon",
            "rec_orbits",
            "rec_min_fraction",
            "esc_v_lo",
            "esc_v_hi",
            "esc_multiplier",
            "esc_horizon",
            "esc_window",
            "esc_orbits",
            "mix_v_center",
            "mix_heights",
            "mix_steps",
            "mix_samples",
            "mix_phi1",
            "mix_phi2",
            "approx_v_lo",
            "approx_v_hi",
            "approx_levels",
            "approx_samples",
            "approx_slope_tol",
        ],
    ),
    ("singularities", &["kind", "generations", "resolution"]),
];

/// Section names in the order `report` runs them.
pub fn section_names() -> impl Iterator<Item = &'static str> {
    SCHEMA.iter().map(|(s, _)| *s).filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    /// Directory that relative profile paths are resolved against.
    base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current = GLOBAL.to_string();
        sections.insert(current.clone(), BTreeMap::new());
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(name) = s.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        CliError::config(line, format!("unterminated section header '{s}'"))
                    })?
                    .trim();
                if name.is_empty() || !section_names().any(|n| n == name) {
                    return Err(CliError::config(line, format!("unknown section [{name}]")));
                }
                if sections.contains_key(name) {
                    return Err(CliError::config(
                        line,
                        format!("section [{name}] given twice"),
                    ));
                }
                current = name.to_string();
                sections.insert(current.clone(), BTreeMap::new());
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| {
                CliError::config(line, format!("expected 'key = value', got '{s}'"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let allowed = SCHEMA
                .iter()
                .find(|(n, _)| *n == current)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                let place = if current.is_empty() {
                    "at top level".to_string()
                } else {
                    format!("in [{current}]")
                };
                return Err(CliError::config(
                    line,
                    format!("unknown key '{key}' {place}"),
                ));
            }
            if value.is_empty() {
                return Err(CliError::config(line, format!("empty value for '{key}'")));
            }
            let section = sections.get_mut(&current).expect("inserted above");
            if section
                .insert(
                    key.to_string(),
                    Entry {
                        line,
                        value: value.to_string(),
                    },
                )
                .is_some()
            {
                return Err(CliError::config(line, format!("key '{key}' given twice")));
            }
        }
        Ok(Self {
            sections,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    /// Typed view of one section; absent sections read as all defaults.
    pub fn section(&self, name: &'static str) -> Section<'_> {
        Section {
            name,
            entries: self.sections.get(name),
        }
    }

    pub fn global(&self) -> Section<'_> {
        self.section(GLOBAL)
    }

    /// Sets a top-level key, as a command-line override does.
    pub fn set_global(&mut self, key: &str, value: String) {
        self.sections
            .entry(GLOBAL.to_string())
            .or_default()
            .insert(key.to_string(), Entry { line: 0, value });
    }

    pub fn seed(&self) -> Result<u64> {
        self.global().get::<u64>("seed")?.ok_or_else(|| {
            CliError::config(0, "missing 'seed' (set it in the config or pass --seed)")
        })
    }

    /// The wall named by `profile`: a built-in such as `Q(1)` (with `g`,
    /// default 2) or a profile file path relative to the config.
    pub fn wall(&self) -> Result<(String, WallMotion)> {
        let global = self.global();
        let name = global.string("profile", "Q(1)");
        let g = global.get::<f64>("g")?;
        if let Some(w) = WallMotion::builtin(&name, g.unwrap_or(2.0)) {
            w.validate()
                .is_valid()
                .then_some(())
                .ok_or_else(|| CliError::Usage(format!("invalid profile {name}")))?;
            return Ok((name, w));
        }
        if name.contains('(') {
            return Err(CliError::config(
                global.line("profile"),
                format!("unknown built-in profile '{name}'"),
            ));
        }
        if g.is_some() {
            return Err(CliError::config(
                global.line("g"),
                "'g' comes from the profile file and cannot be set here",
            ));
        }
        let path = self.base_dir.join(&name);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read profile {}: {e}", path.display())))?;
        Ok((name, WallMotion::parse_profile(&text)?))
    }

    /// Canonical `section.key = value` lines used for the config hash.
    /// Output location and thread count do not affect results and are left out.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (section, entries) in &self.sections {
            for (key, e) in entries {
                if section.is_empty() && (key == "out" || key == "threads") {
                    continue;
                }
                let value = e
                    .value
                    .split(',')
                    .map(str::trim)
                    .collect::<Vec<_>>()
                    .join(",");
                if section.is_empty() {
                    out.push_str(&format!("{key} = {value}\n"));
                } else {
                    out.push_str(&format!("{section}.{key} = {value}\n"));
                }
            }
        }
        out
    }
}

pub struct Section<'a> {
    name: &'static str,
    entries: Option<&'a BTreeMap<String, Entry>>,
}

impl Section<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        debug_assert!(
            SCHEMA
                .iter()
                .any(|(n, keys)| *n == self.name && keys.contains(&key)),
            "key {key} missing from schema of [{}]",
            self.name
        );
        self.entries.and_then(|e| e.get(key))
    }

    fn line(&self, key: &str) -> usize {
        self.entry(key).map(|e| e.line).unwrap_or(0)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| {
                CliError::config(e.line, format!("bad value '{}' for '{key}'", e.value))
            }),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get::<f64>(key)?.unwrap_or(default);
        if !v.is_finite() {
            return Err(CliError::config(
                self.line(key),
                format!("'{key}' must be finite"),
            ));
        }
        Ok(v)
    }

    /// A size; must be at least 1.
    pub fn size(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get::<usize>(key)?.unwrap_or(default);
        if v == 0 {
            return Err(CliError::config(
                self.line(key),
                format!("'{key}' must be at least 1"),
            ));
        }
        Ok(v)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.entry(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string())
    }

    /// One of a fixed set of words.
    pub fn choice(&self, key: &str, options: &[&str], default: &str) -> Result<String> {
        let v = self.string(key, default);
        if options.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(CliError::config(
                self.line(key),
                format!("'{key}' must be one of {}", options.join(", ")),
            ))
        }
    }

    pub fn list<T: std::str::FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        let Some(e) = self.entry(key) else {
            return Ok(default.to_vec());
        };
        e.value
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<T>().map_err(|_| {
                    CliError::config(e.line, format!("bad list item '{s}' for '{key}'"))
                })
            })
            .collect()
    }
}
