//! Plain-text `key = value` scenario files.

use crate::error::{ConfigError, Error, Result};
use crate::profiles::{make_bump, BumpProfile, InitialData};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::PathBuf;

/// Bump shape as written in the file, before the `delta` scaling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BumpSpec<const D: usize> {
    #[serde(with = "serde_arrays")]
    pub center: [f64; D],
    pub radius: f64,
    pub amplitude: f64,
    pub k: u32,
}

mod serde_arrays {
    use serde::Serializer;

    pub fn serialize<S: Serializer, const D: usize>(a: &[f64; D], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(a.iter())
    }
}

impl<const D: usize> BumpSpec<D> {
    fn build(&self) -> Result<BumpProfile<D>> {
        make_bump(self.center, self.radius, self.amplitude, self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Eta {
    /// Twice the largest FSC ratio measured up to `eta_time`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub radius: f64,
    pub delta: f64,
    pub f_in: BumpSpec<6>,
    pub phi0_in: BumpSpec<3>,
    pub phi1_in: BumpSpec<3>,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_x: usize,
    pub n_p: usize,
    pub coupling: bool,
    pub pad: f64,
    /// Steps between CSV rows.
    pub record_every: usize,
    /// Interior probe shells as fractions of `R + t`.
    pub probe_shells: Vec<f64>,
    pub spread_cell: f64,
    pub fit_window: (f64, f64),
    pub k_fit_window: (f64, f64),
    pub beta: f64,
    pub eta: Eta,
    pub eta_time: f64,
    /// Steps between stored field snapshots; 0 keeps none.
    pub history_stride: usize,
    /// Number of pointwise end-of-run checks of `f` and of characteristics.
    pub validation_samples: usize,
    /// Not part of the hash: moving a run does not change its results.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub threads: usize,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub memory_budget_mb: f64,
}

const KEYS: &[&str] = &[
    "R",
    "delta",
    "f_center",
    "f_radius",
    "f_amplitude",
    "f_k",
    "phi0_center",
    "phi0_radius",
    "phi0_amplitude",
    "phi0_k",
    "phi1_center",
    "phi1_radius",
    "phi1_amplitude",
    "phi1_k",
    "h",
    "dt",
    "t_end",
    "n_per_dim",
    "n_x",
    "n_p",
    "coupling",
    "pad",
    "record_every",
    "probe_shells",
    "spread_cell",
    "fit_window",
    "k_fit_window",
    "beta",
    "eta",
    "eta_time",
    "history_stride",
    "validation_samples",
    "output_dir",
    "threads",
    "checkpoint_every",
    "memory_budget_mb",
];

const REQUIRED: &[&str] = &["R", "h", "dt", "t_end"];

struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::at(line_no, format!("expected `key = value`, got {line:?}")));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::at(line_no, format!("unknown key {k:?}")));
            }
            if v.is_empty() {
                return Err(ConfigError::at(line_no, format!("empty value for {k}")));
            }
            if let Some((prev, _)) = map.insert(k.to_string(), (line_no, v.to_string())) {
                return Err(ConfigError::at(line_no, format!("{k} already set on line {prev}")));
            }
        }
        for k in REQUIRED {
            if !map.contains_key(*k) {
                return Err(ConfigError::global(format!("missing required key {k}")));
            }
        }
        Ok(Self { map })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.0)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        match self.line(key) {
            Some(l) => ConfigError::at(l, msg),
            None => ConfigError::global(msg),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::at(*line, format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| ConfigError::at(*line, format!("cannot parse {key} = {v:?} as a list of numbers"))),
        }
    }

    fn array<const D: usize>(&self, key: &str) -> Result<[f64; D], ConfigError> {
        match self.list(key)? {
            None => Ok([0.0; D]),
            Some(v) => v
                .try_into()
                .map_err(|_| self.err(key, format!("{key} needs {D} comma-separated values"))),
        }
    }

    fn pair(&self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(self.err(key, format!("{key} needs two values `t_lo, t_hi`"))),
        }
    }

    fn bump<const D: usize>(&self, prefix: &str, radius: f64, k: u32) -> Result<BumpSpec<D>, ConfigError> {
        Ok(BumpSpec {
            center: self.array(&format!("{prefix}_center"))?,
            radius: self.or(&format!("{prefix}_radius"), radius)?,
            amplitude: self.or(&format!("{prefix}_amplitude"), 0.0)?,
            k: self.or(&format!("{prefix}_k"), k)?,
        })
    }
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_inner(text).map_err(Error::Config)
    }

    fn parse_inner(text: &str) -> Result<Self, ConfigError> {
        let e = Entries::parse(text)?;
        let radius: f64 = e.or("R", 0.0)?;
        let h: f64 = e.or("h", 0.0)?;
        let t_end: f64 = e.or("t_end", 0.0)?;
        let n = e.or("n_per_dim", 8usize)?;
        let window = e.pair("fit_window")?.unwrap_or((t_end / 8.0, t_end));
        let cfg = Self {
            radius,
            delta: e.or("delta", 1.0)?,
            f_in: e.bump("f", radius, 1)?,
            phi0_in: e.bump("phi0", radius, 3)?,
            phi1_in: e.bump("phi1", radius, 2)?,
            h,
            dt: e.or("dt", 0.0)?,
            t_end,
            n_x: e.or("n_x", n)?,
            n_p: e.or("n_p", n)?,
            coupling: e.or("coupling", true)?,
            pad: e.or("pad", (4.0 * h).max(1.0))?,
            record_every: e.or("record_every", 1)?,
            probe_shells: e.list("probe_shells")?.unwrap_or_else(|| vec![0.25, 0.5, 0.75]),
            spread_cell: e.or("spread_cell", 1.0)?,
            fit_window: window,
            k_fit_window: e.pair("k_fit_window")?.unwrap_or(window),
            beta: e.or("beta", 0.6)?,
            eta: match e.map.get("eta") {
                None => Eta::Auto,
                Some((_, v)) if v == "auto" => Eta::Auto,
                Some(_) => Eta::Fixed(e.or("eta", 0.0)?),
            },
            eta_time: e.or("eta_time", t_end.min(2.0))?,
            history_stride: e.or("history_stride", 0)?,
            validation_samples: e.or("validation_samples", 0)?,
            output_dir: PathBuf::from(e.or("output_dir", "out".to_string())?),
            threads: e.or("threads", 1)?,
            checkpoint_every: e.or("checkpoint_every", 0)?,
            memory_budget_mb: e.or("memory_budget_mb", 4096.0)?,
        };
        cfg.validate(&e)?;
        Ok(cfg)
    }

    fn validate(&self, e: &Entries) -> Result<(), ConfigError> {
        let positive = [
            ("R", self.radius),
            ("h", self.h),
            ("t_end", self.t_end),
            ("spread_cell", self.spread_cell),
            ("memory_budget_mb", self.memory_budget_mb),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(e.err(k, format!("{k} must be positive, got {v}")));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(e.err("delta", format!("delta must be non-negative, got {}", self.delta)));
        }
        let limit = self.h / 3f64.sqrt();
        if !(self.dt > 0.0) || self.dt > limit * (1.0 + 1e-12) {
            return Err(e.err(
                "dt",
                format!("CFL condition violated: dt = {} must satisfy 0 < dt <= h/sqrt(3) = {limit}", self.dt),
            ));
        }
        if !(self.beta > 0.5 && self.beta < 0.75) {
            return Err(e.err(
                "beta",
                format!("beta = {} must lie in the open interval (1/2, 3/4)", self.beta),
            ));
        }
        if let Eta::Fixed(v) = self.eta {
            if !(v > 0.0) {
                return Err(e.err("eta", format!("eta must be positive or `auto`, got {v}")));
            }
        }
        if !(self.eta_time >= 0.0 && self.eta_time <= self.t_end) {
            return Err(e.err("eta_time", "eta_time must lie in [0, t_end]"));
        }
        if self.n_x < 2 || self.n_p < 2 {
            let key = if e.line("n_x").is_some() || e.line("n_p").is_some() { "n_x" } else { "n_per_dim" };
            return Err(e.err(key, "need at least 2 sampling cells per axis"));
        }
        if e.line("n_per_dim").is_some() && self.n_x == self.n_p && self.n_x < 4 {
            return Err(e.err("n_per_dim", "n_per_dim must be at least 4"));
        }
        if self.pad < 3.0 * self.h {
            return Err(e.err("pad", format!("pad must be at least 3 h = {}", 3.0 * self.h)));
        }
        if self.record_every == 0 || self.threads == 0 {
            let key = if self.threads == 0 { "threads" } else { "record_every" };
            return Err(e.err(key, format!("{key} must be at least 1")));
        }
        if self.probe_shells.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return Err(e.err("probe_shells", "probe shells must lie in (0, 1)"));
        }
        for (key, (lo, hi)) in [("fit_window", self.fit_window), ("k_fit_window", self.k_fit_window)] {
            if !(lo >= 0.0 && hi <= self.t_end + 1e-9 && hi >= 4.0 * lo && hi > lo) {
                return Err(e.err(
                    key,
                    format!("{key} = [{lo}, {hi}] must lie in [0, t_end] with t_hi >= 4 t_lo"),
                ));
            }
        }
        let data = self.initial_data().map_err(|err| ConfigError::global(err.to_string()))?;
        let checks = [
            ("f_radius", data.f_in.support_within(self.radius), "f_in"),
            ("phi0_radius", data.phi0_in.support_within(self.radius), "phi0_in"),
            ("phi1_radius", data.phi1_in.support_within(self.radius), "phi1_in"),
        ];
        for (key, ok, name) in checks {
            if !ok {
                return Err(e.err(key, format!("support of {name} is not inside the ball of radius R")));
            }
        }
        let needed = self.memory_estimate_mb();
        if needed > self.memory_budget_mb {
            return Err(e.err(
                "memory_budget_mb",
                format!("estimated memory {needed:.0} MB exceeds the budget of {:.0} MB", self.memory_budget_mb),
            ));
        }
        Ok(())
    }

    /// Initial data after the `delta` scaling.
    pub fn initial_data(&self) -> Result<InitialData> {
        Ok(InitialData {
            f_in: self.f_in.build()?,
            phi0_in: self.phi0_in.build()?,
            phi1_in: self.phi1_in.build()?,
            support_radius: self.radius,
        }
        .scaled(self.delta))
    }

    /// Key = value form that parses back to an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("R", self.radius.to_string());
        put("delta", self.delta.to_string());
        put("f_center", join(&self.f_in.center));
        put("f_radius", self.f_in.radius.to_string());
        put("f_amplitude", self.f_in.amplitude.to_string());
        put("f_k", self.f_in.k.to_string());
        for (name, b) in [("phi0", &self.phi0_in), ("phi1", &self.phi1_in)] {
            put(&format!("{name}_center"), join(&b.center));
            put(&format!("{name}_radius"), b.radius.to_string());
            put(&format!("{name}_amplitude"), b.amplitude.to_string());
            put(&format!("{name}_k"), b.k.to_string());
        }
        put("h", self.h.to_string());
        put("dt", self.dt.to_string());
        put("t_end", self.t_end.to_string());
        put("n_x", self.n_x.to_string());
        put("n_p", self.n_p.to_string());
        put("coupling", self.coupling.to_string());
        put("pad", self.pad.to_string());
        put("record_every", self.record_every.to_string());
        put("probe_shells", join(&self.probe_shells));
        put("spread_cell", self.spread_cell.to_string());
        put("fit_window", join(&[self.fit_window.0, self.fit_window.1]));
        put("k_fit_window", join(&[self.k_fit_window.0, self.k_fit_window.1]));
        put("beta", self.beta.to_string());
        put(
            "eta",
            match self.eta {
                Eta::Auto => "auto".into(),
                Eta::Fixed(v) => v.to_string(),
            },
        );
        put("eta_time", self.eta_time.to_string());
        put("history_stride", self.history_stride.to_string());
        put("validation_samples", self.validation_samples.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("threads", self.threads.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("memory_budget_mb", self.memory_budget_mb.to_string());
        out
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn steps(&self) -> u64 {
        ((self.t_end / self.dt) - 1e-9).ceil() as u64
    }

    /// Upper estimate of the working set: particles, four grid levels plus
    /// temporaries at the final extent, and the stored snapshots.
    pub fn memory_estimate_mb(&self) -> f64 {
        let nodes_at = |t: f64| {
            let extent = self.radius + t + 2.0 * self.dt + self.pad + crate::wavefield::grid::precursor_width(t, self.h);
            let m = (extent / self.h).ceil() + 3.0;
            let m = m + (m / 8.0).max(4.0);
            (2.0 * m + 1.0).powi(3)
        };
        let grid = 7.0 * 8.0 * nodes_at(self.t_end);
        let snapshots = if self.history_stride == 0 {
            0.0
        } else {
            let stride = self.history_stride as u64;
            (0..=self.steps())
                .step_by(stride as usize)
                .map(|s| 16.0 * nodes_at(s as f64 * self.dt))
                .sum()
        };
        let ball6 = std::f64::consts::PI.powi(3) / 6.0 / 64.0;
        let particles = if self.f_in.amplitude * self.delta == 0.0 {
            0.0
        } else {
            // Sampling briefly holds a second copy.
            2.0 * 160.0 * 1.1 * ball6 * (self.n_x as f64).powi(3) * (self.n_p as f64).powi(3)
        };
        (grid + snapshots + particles) / (1024.0 * 1024.0)
    }

    /// Canonical JSON form, the input of [`hash`](Self::hash).
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
