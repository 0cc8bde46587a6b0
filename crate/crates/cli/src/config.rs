//! Run configuration: an INI-style file with `[model]`, `[run]` and
//! `[tolerances]` sections, overridden by command-line flags.
//!
//! ```text
//! [model]
//! kind = synth1        # synth1 | fe8 | table
//! j = 100
//!
//! [run]
//! energy = -6.5
//! out = results
//! seed = 7
//!
//! [tolerances]
//! phi2_threshold = 0.1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Parsed sections, keys lower-cased, values trimmed.
pub type Ini = BTreeMap<String, BTreeMap<String, String>>;

const SECTIONS: [&str; 3] = ["model", "run", "tolerances"];

pub fn parse_ini(text: &str, origin: &str) -> Result<Ini, ConfigError> {
    let mut out = Ini::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Syntax {
            path: origin.to_string(),
            line: idx + 1,
            msg,
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
            let name = name.trim().to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(err(format!("unknown section [{name}]")));
            }
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let section = current.as_ref().ok_or_else(|| err("key outside of any section".into()))?;
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(err("empty key".into()));
        }
        let table = out.get_mut(section).expect("section inserted on header");
        if table.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(err(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let cut = line.find(['#', ';']).unwrap_or(line.len());
    &line[..cut]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Synth1,
    Fe8,
    Table,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "synth1" => Ok(Self::Synth1),
            "fe8" => Ok(Self::Fe8),
            "table" => Ok(Self::Table),
            other => Err(format!("unknown model `{other}` (expected fe8, table or synth1)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Synth1 { j: f64 },
    Fe8 { j: f64, k1: f64, k2: f64, hx: f64, hz: f64 },
    Table { path: PathBuf, j: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Energies {
    Single { energy: f64 },
    Grid { start: f64, stop: f64, count: usize },
}

impl Energies {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Energies::Single { energy } => vec![energy],
            Energies::Grid { start, stop, count } => {
                if count == 1 {
                    return vec![start];
                }
                (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect()
            }
        }
    }
}

/// `a:b:n` with `n ≥ 1`.
pub fn parse_grid(s: &str) -> Result<Energies, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("energy grid `{s}` is not of the form a:b:n"));
    }
    let start = parse_f64(parts[0])?;
    let stop = parse_f64(parts[1])?;
    let count: usize = parts[2].trim().parse().map_err(|_| format!("grid count `{}` is not a positive integer", parts[2]))?;
    if count == 0 {
        return Err("grid count must be at least 1".into());
    }
    Ok(Energies::Grid { start, stop, count })
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Branch used by `wavefunction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "selector", rename_all = "lowercase")]
pub enum BranchSpec {
    Cos { sigma1: i8, sign: i8, center: f64 },
    Complex { sigma2: i8, conj: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative tolerance of the adaptive quadrature.
    pub quad_rel: f64,
    pub phi2_threshold: f64,
    pub qdot_over_v2: f64,
    /// Minimum distance (sites) to a neighbouring turning point.
    pub proximity_sites: f64,
    /// Central zone `|m − m_c| ≤ J^x`.
    pub matching_exponent: f64,
    pub identity_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            quad_rel: 1e-10,
            phi2_threshold: 0.1,
            qdot_over_v2: 0.1,
            proximity_sites: 5.0,
            matching_exponent: 0.5,
            identity_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub energies: Option<Energies>,
    pub m_range: Option<(f64, f64)>,
    /// Samples per unit `m` on continuum grids.
    pub samples_per_site: usize,
    pub branch: BranchSpec,
    /// Not part of the recorded configuration: reports must not depend on
    /// where they are written.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub tolerances: Tolerances,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<ModelKind>,
    pub out: Option<PathBuf>,
    pub energies: Option<Energies>,
    pub seed: Option<u64>,
    pub j: Option<f64>,
    pub table: Option<PathBuf>,
}

struct Section<'a> {
    name: &'static str,
    map: Option<&'a BTreeMap<String, String>>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(ini: &'a Ini, name: &'static str) -> Self {
        Self {
            name,
            map: ini.get(name),
            used: Vec::new(),
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a str> {
        self.used.push(key);
        self.map.and_then(|m| m.get(key)).map(String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.map.is_some_and(|m| m.contains_key(key))
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.name.into(),
            key: key.into(),
            msg: msg.into(),
        }
    }

    fn f64(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => parse_f64(v).map(Some).map_err(|m| self.err(key, m)),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &'static str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.err(key, format!("`{v}` is not {what}"))),
        }
    }

    fn sign(&mut self, key: &'static str, default: i8) -> Result<i8, ConfigError> {
        match self.parsed::<i8>(key, "±1")? {
            None => Ok(default),
            Some(s @ (1 | -1)) => Ok(s),
            Some(s) => Err(self.err(key, format!("{s} is not ±1"))),
        }
    }

    fn finish(&self) -> Result<(), ConfigError> {
        if let Some(m) = self.map {
            if let Some(k) = m.keys().find(|k| !self.used.contains(&k.as_str())) {
                return Err(self.err(k, "unknown key"));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, ConfigError> {
        let ini = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                parse_ini(&text, &p.display().to_string())?
            }
            None => Ini::new(),
        };
        let base = path.and_then(Path::parent).unwrap_or(Path::new(""));
        Self::from_ini(&ini, base, ov)
    }

    /// `base` resolves relative table paths given in the file.
    pub fn from_ini(ini: &Ini, base: &Path, ov: &Overrides) -> Result<Self, ConfigError> {
        let mut model = Section::new(ini, "model");
        let kind = match (ov.model, model.raw("kind")) {
            (Some(k), _) => k,
            (None, Some(v)) => v.parse().map_err(|m: String| model.err("kind", m))?,
            (None, None) => return Err(ConfigError::Invalid("no model source: set [model] kind or pass --model".into())),
        };
        let j = match ov.j {
            Some(j) => Some(j),
            None => model.f64("j")?,
        };
        let fe8_keys = ["k1", "k2", "hx", "hz"];
        let table_key = ov.table.is_some() || model.has("table");
        let spec = match kind {
            ModelKind::Synth1 => {
                if table_key || fe8_keys.iter().any(|k| model.has(k)) {
                    return Err(ConfigError::Invalid("synth1 takes only `j`; remove table/fe8 keys (exactly one model source)".into()));
                }
                ModelSpec::Synth1 {
                    j: j.ok_or_else(|| model.err("j", "required for synth1"))?,
                }
            }
            ModelKind::Fe8 => {
                if table_key {
                    return Err(ConfigError::Invalid("fe8 model given together with a table (exactly one model source)".into()));
                }
                ModelSpec::Fe8 {
                    j: j.unwrap_or(10.0),
                    k1: model.f64("k1")?.unwrap_or(0.33),
                    k2: model.f64("k2")?.unwrap_or(0.22),
                    hx: model.f64("hx")?.unwrap_or(0.0),
                    hz: model.f64("hz")?.unwrap_or(0.0),
                }
            }
            ModelKind::Table => {
                if fe8_keys.iter().any(|k| model.has(k)) {
                    return Err(ConfigError::Invalid("table model given together with fe8 parameters (exactly one model source)".into()));
                }
                let path = match &ov.table {
                    Some(p) => p.clone(),
                    None => base.join(model.raw("table").ok_or_else(|| model.err("table", "required for the table model"))?),
                };
                ModelSpec::Table {
                    path,
                    j: j.ok_or_else(|| model.err("j", "large parameter J required for the table model"))?,
                }
            }
        };
        // Mark keys consumed by the other model kinds as seen so that the
        // conflict messages above take precedence over "unknown key".
        for k in fe8_keys {
            model.raw(k);
        }
        model.raw("table");
        model.finish()?;
        let j_value = match &spec {
            ModelSpec::Synth1 { j } | ModelSpec::Fe8 { j, .. } | ModelSpec::Table { j, .. } => *j,
        };
        if !(j_value > 0.0) {
            return Err(ConfigError::Invalid(format!("J must be positive, got {j_value}")));
        }

        let mut run = Section::new(ini, "run");
        let file_energies = match (run.raw("energy"), run.raw("energy_grid")) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("[run] sets both energy and energy_grid".into())),
            (Some(v), None) => Some(Energies::Single {
                energy: parse_f64(v).map_err(|m| run.err("energy", m))?,
            }),
            (None, Some(g)) => Some(parse_grid(g).map_err(|m| run.err("energy_grid", m))?),
            (None, None) => None,
        };
        let energies = ov.energies.or(file_energies);
        let m_range = match (run.f64("m_min")?, run.f64("m_max")?) {
            (Some(a), Some(b)) if b > a => Some((a, b)),
            (Some(a), Some(b)) => return Err(ConfigError::Invalid(format!("empty m range [{a}, {b}]"))),
            (None, None) => None,
            _ => return Err(ConfigError::Invalid("set both m_min and m_max or neither".into())),
        };
        let samples_per_site = run.parsed::<usize>("samples_per_site", "a positive integer")?.unwrap_or(4);
        if samples_per_site == 0 {
            return Err(run.err("samples_per_site", "must be at least 1"));
        }
        let branch = match run.raw("branch").unwrap_or("cos") {
            "cos" => BranchSpec::Cos {
                sigma1: run.sign("sigma1", -1)?,
                sign: run.sign("sign", 1)?,
                center: run.f64("center")?.unwrap_or(0.0),
            },
            "complex" => BranchSpec::Complex {
                sigma2: run.sign("sigma2", 1)?,
                conj: run.parsed::<bool>("conj", "true or false")?.unwrap_or(false),
            },
            other => return Err(run.err("branch", format!("`{other}` is not cos or complex"))),
        };
        for k in ["sigma1", "sign", "center", "sigma2", "conj"] {
            run.raw(k);
        }
        let file_out = run.raw("out").map(|p| base.join(p));
        let out = ov.out.clone().or(file_out).unwrap_or_else(|| PathBuf::from("dpi-out"));
        let file_seed = run.parsed::<u64>("seed", "a non-negative integer")?;
        let seed = ov.seed.or(file_seed).unwrap_or(0);
        run.finish()?;

        let mut tol = Section::new(ini, "tolerances");
        let d = Tolerances::default();
        let tolerances = Tolerances {
            quad_rel: tol.f64("quad_rel")?.unwrap_or(d.quad_rel),
            phi2_threshold: tol.f64("phi2_threshold")?.unwrap_or(d.phi2_threshold),
            qdot_over_v2: tol.f64("qdot_over_v2")?.unwrap_or(d.qdot_over_v2),
            proximity_sites: tol.f64("proximity_sites")?.unwrap_or(d.proximity_sites),
            matching_exponent: tol.f64("matching_exponent")?.unwrap_or(d.matching_exponent),
            identity_tol: tol.f64("identity_tol")?.unwrap_or(d.identity_tol),
        };
        tol.finish()?;
        let named = [
            ("quad_rel", tolerances.quad_rel),
            ("phi2_threshold", tolerances.phi2_threshold),
            ("qdot_over_v2", tolerances.qdot_over_v2),
            ("proximity_sites", tolerances.proximity_sites),
            ("matching_exponent", tolerances.matching_exponent),
            ("identity_tol", tolerances.identity_tol),
        ];
        if let Some((k, v)) = named.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(ConfigError::Value {
                section: "tolerances".into(),
                key: (*k).into(),
                msg: format!("must be positive, got {v}"),
            });
        }
        Ok(Self {
            model: spec,
            energies,
            m_range,
            samples_per_site,
            branch,
            out,
            seed,
            tolerances,
        })
    }

    pub fn j(&self) -> f64 {
        match &self.model {
            ModelSpec::Synth1 { j } | ModelSpec::Fe8 { j, .. } | ModelSpec::Table { j, .. } => *j,
        }
    }

    pub fn energy_values(&self) -> Result<Vec<f64>, ConfigError> {
        self.energies
            .map(|e| e.values())
            .ok_or_else(|| ConfigError::Invalid("this subcommand needs --energy or --energy-grid".into()))
    }
}
