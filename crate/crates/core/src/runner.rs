//! Scenario runs: the coupled loop with per-step diagnostics, CSV series,
//! JSON summaries, checkpoints and amplitude sweeps.

use crate::config::{Eta, SimConfig};
use crate::diagnostics::{
    check_fsc, dispersion_check, fit_decay, fsc_ratios, jacobian_bound, max_momentum_spread,
    momentum_support, probe_set, spatial_support, sup_mu, ConeWeight, DecayFit,
    DispersionReport, DispersionSample, FscReport, FscSample, JacobianBound, ProbeKind,
};
use crate::characteristics::{FieldView, ZeroField};
use crate::error::{Error, Result};
use crate::profiles::{initial_norm, validate_membership, InitialData};
use crate::vlasov_pic::{evaluate_f, sample_particles_with, CoupledState, LoopOptions};
use crate::wavefield::grid::{read_f64s, read_line, write_f64s};
use crate::wavefield::{FieldGrid, SnapshotSeries};
use nalgebra::Vector3;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const COLUMNS: [&str; 19] = [
    "t",
    "sup_mu",
    "mu_outside_cone",
    "momentum_support",
    "spatial_support",
    "max_momentum_spread",
    "k_origin",
    "k_cone",
    "k_max",
    "l_origin",
    "l_max",
    "fsc_k_ratio",
    "fsc_l_ratio",
    "k_cone_weighted",
    "mass_like",
    "max_abs_phi",
    "total_weight",
    "k_origin_smoothed",
    "l_origin_smoothed",
];

/// One CSV row. The FSC columns are `K / w_K` and `L / w_L` maximised over
/// probes, so the margin is the ratio divided by `eta`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Row {
    pub t: f64,
    pub sup_mu: f64,
    /// Largest `mu` on nodes with `|x| > R + t + h`.
    pub mu_outside_cone: f64,
    pub momentum_support: f64,
    pub spatial_support: f64,
    pub max_momentum_spread: f64,
    pub k_origin: f64,
    pub k_cone: f64,
    pub k_max: f64,
    pub l_origin: f64,
    pub l_max: f64,
    pub fsc_k_ratio: f64,
    pub fsc_l_ratio: f64,
    /// `K (1 + R + t + |x|)(1 + R + t - |x|)` maximised over probes.
    pub k_cone_weighted: f64,
    pub mass_like: f64,
    pub max_abs_phi: f64,
    pub total_weight: f64,
    /// K and L at the origin after the `[1, 2, 1]` lattice filter.
    pub k_origin_smoothed: f64,
    pub l_origin_smoothed: f64,
}

impl Row {
    pub fn values(&self) -> [f64; 19] {
        [
            self.t,
            self.sup_mu,
            self.mu_outside_cone,
            self.momentum_support,
            self.spatial_support,
            self.max_momentum_spread,
            self.k_origin,
            self.k_cone,
            self.k_max,
            self.l_origin,
            self.l_max,
            self.fsc_k_ratio,
            self.fsc_l_ratio,
            self.k_cone_weighted,
            self.mass_like,
            self.max_abs_phi,
            self.total_weight,
            self.k_origin_smoothed,
            self.l_origin_smoothed,
        ]
    }

    pub fn from_values(v: &[f64]) -> Self {
        Self {
            t: v[0],
            sup_mu: v[1],
            mu_outside_cone: v[2],
            momentum_support: v[3],
            spatial_support: v[4],
            max_momentum_spread: v[5],
            k_origin: v[6],
            k_cone: v[7],
            k_max: v[8],
            l_origin: v[9],
            l_max: v[10],
            fsc_k_ratio: v[11],
            fsc_l_ratio: v[12],
            k_cone_weighted: v[13],
            mass_like: v[14],
            max_abs_phi: v[15],
            total_weight: v[16],
            k_origin_smoothed: v[17],
            l_origin_smoothed: v[18],
        }
    }

    pub fn csv_line(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn write_series(w: &mut impl Write, hash: &str, rows: &[Row]) -> Result<()> {
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "{}", COLUMNS.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Reads a series file back, returning its config hash and rows.
pub fn read_series(path: &Path) -> Result<(String, Vec<Row>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .ok_or_else(|| Error::Format(format!("{} has no config hash line", path.display())))?
        .to_string();
    if lines.next() != Some(COLUMNS.join(",").as_str()) {
        return Err(Error::Format(format!("{} has an unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for l in lines {
        let v: Vec<f64> = l
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad row {l:?}")))?;
        if v.len() != COLUMNS.len() {
            return Err(Error::Format(format!("row has {} columns", v.len())));
        }
        rows.push(Row::from_values(&v));
    }
    Ok((hash, rows))
}

/// Concatenates series in time order; all must carry the same config hash.
pub fn merge_series(parts: &[(String, Vec<Row>)]) -> Result<Vec<Row>> {
    let Some((first, _)) = parts.first() else {
        return Ok(Vec::new());
    };
    if let Some((other, _)) = parts.iter().find(|(h, _)| h != first) {
        return Err(Error::InvalidArgument(format!(
            "refusing to mix series from configs {first} and {other}"
        )));
    }
    let mut rows: Vec<Row> = parts.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    rows.dedup_by(|a, b| a.t == b.t);
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitOutcome {
    pub fit: Option<DecayFit>,
    pub error: Option<String>,
}

impl FitOutcome {
    fn from(r: Result<DecayFit>) -> Self {
        match r {
            Ok(fit) => Self {
                fit: Some(fit),
                error: None,
            },
            Err(e) => Self {
                fit: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Pointwise checks at the final time against the stored field history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Validation {
    pub samples: usize,
    /// `max |evaluate_f(0, x, p) - f_in(x, p)|`.
    pub f_at_zero_error: f64,
    /// Largest `evaluate_f` at points with `|x| > R + t + h`.
    pub f_outside_cone: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// `||f_in|| exp(4 (max |phi| + ||phi0_in||))`.
    pub f_bound: f64,
    pub dispersion: Option<DispersionReport>,
    pub jacobian: Option<JacobianBound>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub delta: f64,
    pub t_end: f64,
    pub steps: u64,
    pub particles: usize,
    pub initial_norm: f64,
    pub in_admissible_class: bool,
    pub eta: f64,
    pub fsc: FscReport,
    pub fits: BTreeMap<String, FitOutcome>,
    pub max_momentum_support: f64,
    pub momentum_support_ok: bool,
    /// `2R / sqrt(1 + 4 R^2)`.
    pub support_speed: f64,
    /// Largest `spatial_support - (R + support_speed t + h)` over rows.
    pub spatial_support_excess: f64,
    pub max_mu_outside_cone: f64,
    pub max_abs_phi: f64,
    pub max_k_cone_weighted: f64,
    pub validation: Option<Validation>,
}

/// A run in progress.
pub struct Run {
    pub cfg: SimConfig,
    pub state: CoupledState,
    pub rows: Vec<Row>,
    /// Worst-K and worst-L probe of each row.
    pub fsc_samples: Vec<FscSample>,
    pub last_checkpoint: Option<PathBuf>,
    csv: Option<BufWriter<File>>,
}

impl Run {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        let data = cfg.initial_data()?;
        let ens = sample_particles_with(&data, cfg.n_x, cfg.n_p)?;
        let opts = LoopOptions {
            h: cfg.h,
            dt: cfg.dt,
            pad: cfg.pad,
            coupling: cfg.coupling,
            history_stride: cfg.history_stride,
            keep_source: false,
        };
        let state = CoupledState::new(data, ens, opts)?;
        let mut run = Self {
            cfg,
            state,
            rows: Vec::new(),
            fsc_samples: Vec::new(),
            last_checkpoint: None,
            csv: None,
        };
        run.record()?;
        Ok(run)
    }

    pub fn series_path(&self) -> PathBuf {
        self.cfg.output_dir.join("series.csv")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.cfg.output_dir.join("summary.json")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.cfg.output_dir.join("checkpoint.vnck")
    }

    fn measure(&self) -> Result<(Row, [FscSample; 2])> {
        let s = &self.state;
        let (t, grid, radius) = (s.t(), &s.grid, self.cfg.radius);
        let h = grid.h();
        let lat = grid.lattice();
        let reach = radius + t + h;
        let mu = grid.mu();
        let mu_outside = (0..lat.len())
            .filter(|&i| {
                let [a, b, c] = lat.unflatten(i);
                lat.node(a, b, c).norm() > reach
            })
            .fold(0.0f64, |m, i| m.max(mu[i].abs()));
        let mut row = Row {
            t,
            sup_mu: sup_mu(grid),
            mu_outside_cone: mu_outside,
            momentum_support: momentum_support(&s.ens),
            spatial_support: spatial_support(&s.ens),
            max_momentum_spread: max_momentum_spread(&s.ens, self.cfg.spread_cell),
            mass_like: s.ens.mass_like(),
            max_abs_phi: grid.max_abs_phi(),
            total_weight: s.ens.total_weight(),
            ..Row::default()
        };
        let d = grid.field_derivatives_smoothed(&Vector3::zeros())?;
        row.k_origin_smoothed = d.dt.abs() + d.grad.norm();
        row.l_origin_smoothed = d.dtt.abs() + d.grad_dt.norm() + d.hess.abs().max();
        let cone = ConeWeight::new(radius, -1.0, -1.0);
        let mut worst = [FscSample { t, x: Vector3::zeros(), k: 0.0, l: 0.0 }; 2];
        let mut worst_ratio = [-1.0f64; 2];
        for p in probe_set(radius, t, h, &self.cfg.probe_shells) {
            let d = grid.field_derivatives(&p.x)?;
            let k = d.dt.abs() + d.grad.norm();
            let l = d.dtt.abs() + d.grad_dt.norm() + d.hess.abs().max();
            match p.kind {
                ProbeKind::Origin => {
                    row.k_origin = k;
                    row.l_origin = l;
                }
                ProbeKind::Cone => row.k_cone = row.k_cone.max(k),
                ProbeKind::Interior => {}
            }
            row.k_max = row.k_max.max(k);
            row.l_max = row.l_max.max(l);
            row.k_cone_weighted = row.k_cone_weighted.max(k / cone.eval(t, &p.x));
            let sample = FscSample { t, x: p.x, k, l };
            let (rk, rl) = fsc_ratios(&sample, self.cfg.beta, radius);
            for (slot, r) in [rk, rl].into_iter().enumerate() {
                if r > worst_ratio[slot] {
                    worst_ratio[slot] = r;
                    worst[slot] = sample;
                }
            }
        }
        row.fsc_k_ratio = worst_ratio[0];
        row.fsc_l_ratio = worst_ratio[1];
        if row.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "diagnostics".into(),
                t,
                checkpoint: None,
            });
        }
        Ok((row, worst))
    }

    fn record(&mut self) -> Result<()> {
        let (row, worst) = self.measure()?;
        self.rows.push(row);
        self.fsc_samples.extend_from_slice(&worst);
        if let Some(w) = self.csv.as_mut() {
            writeln!(w, "{}", row.csv_line())?;
        }
        Ok(())
    }

    fn attach_checkpoint(&self, e: Error) -> Error {
        match e {
            Error::NonFinite { what, t, .. } => Error::NonFinite {
                what,
                t,
                checkpoint: Some(
                    self.last_checkpoint
                        .as_ref()
                        .map_or_else(|| "none".to_string(), |p| p.display().to_string()),
                ),
            },
            other => other,
        }
    }

    /// Opens the series file and writes the rows recorded so far.
    pub fn open_output(&mut self) -> Result<()> {
        fs::create_dir_all(&self.cfg.output_dir)?;
        let mut w = BufWriter::new(File::create(self.series_path())?);
        write_series(&mut w, &self.cfg.hash(), &self.rows)?;
        self.csv = Some(w);
        Ok(())
    }

    pub fn done(&self) -> bool {
        self.state.steps() >= self.cfg.steps()
    }

    /// One loop step, recording and checkpointing when due.
    pub fn step(&mut self) -> Result<()> {
        self.state.step().map_err(|e| self.attach_checkpoint(e))?;
        let steps = self.state.steps();
        if steps.is_multiple_of(self.cfg.record_every as u64) || steps == self.cfg.steps() {
            self.record().map_err(|e| self.attach_checkpoint(e))?;
        }
        let every = self.cfg.checkpoint_every as u64;
        if every > 0 && steps.is_multiple_of(every) && steps < self.cfg.steps() {
            self.write_checkpoint()?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.done() {
            self.step()?;
        }
        if let Some(w) = self.csv.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        match self.cfg.eta {
            Eta::Fixed(v) => v,
            Eta::Auto => {
                let early = self
                    .rows
                    .iter()
                    .filter(|r| r.t <= self.cfg.eta_time + 1e-9)
                    .map(|r| r.fsc_k_ratio.max(r.fsc_l_ratio))
                    .fold(0.0, f64::max);
                (2.0 * early).max(f64::MIN_POSITIVE)
            }
        }
    }

    /// Final diagnostics. Needs the field history for the pointwise checks.
    pub fn summarize(&mut self) -> Result<Summary> {
        let cfg = &self.cfg;
        let radius = cfg.radius;
        let data = self.state.data;
        let norm = initial_norm(&data, min_radius(&data) / 16.0)?;
        let series = |f: fn(&Row) -> f64| -> Vec<(f64, f64)> { self.rows.iter().map(|r| (r.t, f(r))).collect() };
        let mut fits = BTreeMap::new();
        fits.insert("sup_mu".into(), FitOutcome::from(fit_decay(&series(|r| r.sup_mu), cfg.fit_window)));
        fits.insert(
            "max_momentum_spread".into(),
            FitOutcome::from(fit_decay(&series(|r| r.max_momentum_spread), cfg.fit_window)),
        );
        fits.insert("k_origin".into(), FitOutcome::from(fit_decay(&series(|r| r.k_origin), cfg.k_fit_window)));
        fits.insert("l_origin".into(), FitOutcome::from(fit_decay(&series(|r| r.l_origin), cfg.k_fit_window)));
        fits.insert(
            "k_origin_smoothed".into(),
            FitOutcome::from(fit_decay(&series(|r| r.k_origin_smoothed), cfg.k_fit_window)),
        );
        fits.insert(
            "l_origin_smoothed".into(),
            FitOutcome::from(fit_decay(&series(|r| r.l_origin_smoothed), cfg.k_fit_window)),
        );
        let eta = self.eta();
        let fsc = check_fsc(&self.fsc_samples, cfg.beta, eta, radius)?;
        let speed = 2.0 * radius / (1.0 + 4.0 * radius * radius).sqrt();
        let max_p = self.rows.iter().map(|r| r.momentum_support).fold(0.0, f64::max);
        let validation = if cfg.validation_samples > 0 && !cfg.coupling {
            let mut free = self.state.data;
            free.phi0_in.amplitude = 0.0;
            free.phi1_in.amplitude = 0.0;
            Some(self.validate(&free, &ZeroField)?)
        } else if cfg.validation_samples > 0 && cfg.history_stride > 0 {
            self.state.close_history()?;
            let data = self.state.data;
            Some(self.validate(&data, &self.state.history)?)
        } else {
            None
        };
        let cfg = &self.cfg;
        Ok(Summary {
            config_hash: cfg.hash(),
            delta: cfg.delta,
            t_end: self.state.t(),
            steps: self.state.steps(),
            particles: self.state.ens.len(),
            initial_norm: norm.total,
            in_admissible_class: validate_membership(&data).passed(),
            eta,
            fsc,
            fits,
            max_momentum_support: max_p,
            momentum_support_ok: max_p <= 2.0 * radius,
            support_speed: speed,
            spatial_support_excess: self
                .rows
                .iter()
                .filter(|r| r.spatial_support > 0.0)
                .map(|r| r.spatial_support - (radius + speed * r.t + cfg.h))
                .fold(f64::NEG_INFINITY, f64::max),
            max_mu_outside_cone: self.rows.iter().map(|r| r.mu_outside_cone).fold(0.0, f64::max),
            max_abs_phi: self.rows.iter().map(|r| r.max_abs_phi).fold(0.0, f64::max),
            max_k_cone_weighted: self.rows.iter().map(|r| r.k_cone_weighted).fold(0.0, f64::max),
            validation,
        })
    }

    fn validate(&self, data: &InitialData, field: &(impl FieldView + ?Sized)) -> Result<Validation> {
        let s = &self.state;
        let (t, dt) = (s.t(), self.cfg.dt);
        let n = self.cfg.validation_samples;
        let picks: Vec<usize> = if s.ens.is_empty() {
            Vec::new()
        } else {
            (0..n).map(|i| i * s.ens.len() / n).collect()
        };
        let max_phi = if self.cfg.coupling {
            self.rows.iter().map(|r| r.max_abs_phi).fold(0.0, f64::max)
        } else {
            0.0
        };
        let mut v = Validation {
            samples: picks.len(),
            f_at_zero_error: 0.0,
            f_outside_cone: 0.0,
            f_min: f64::INFINITY,
            f_max: 0.0,
            f_bound: data.f_sup() * (4.0 * (max_phi + data.phi0_sup())).exp(),
            dispersion: None,
            jacobian: None,
        };
        let dirs = crate::diagnostics::probe_directions();
        let mut disp = Vec::new();
        let mut jac = Vec::new();
        for (j, &i) in picks.iter().enumerate() {
            let q = &s.ens.particles[i];
            let f0 = evaluate_f(0.0, &q.x0, &q.p0, data, field, dt)?;
            v.f_at_zero_error = v.f_at_zero_error.max((f0 - data.f_value(&q.x0, &q.p0)).abs());
            let f = evaluate_f(t, &q.x, &q.p, data, field, dt)?;
            v.f_min = v.f_min.min(f);
            v.f_max = v.f_max.max(f);
            let far = dirs[j % dirs.len()] * (self.cfg.radius + t + 2.0 * self.cfg.h);
            v.f_outside_cone = v.f_outside_cone.max(evaluate_f(t, &far, &q.p, data, field, dt)?.abs());
            let kick = dirs[(j + 3) % dirs.len()] * (0.25 * data.f_in.radius);
            disp.push(DispersionSample { t, x: q.x, p1: q.p, p2: q.p + kick });
            jac.push((t, q.x, q.p));
        }
        if !disp.is_empty() && t >= 1.0 {
            v.dispersion = Some(dispersion_check(field, &disp, dt)?);
            v.jacobian = Some(jacobian_bound(field, &jac, dt)?);
        }
        if v.samples == 0 {
            v.f_min = 0.0;
        }
        Ok(v)
    }

    pub fn write_summary(&self, summary: &Summary) -> Result<()> {
        fs::create_dir_all(&self.cfg.output_dir)?;
        let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(self.summary_path(), text + "\n")?;
        Ok(())
    }

    pub fn write_checkpoint(&mut self) -> Result<()> {
        fs::create_dir_all(&self.cfg.output_dir)?;
        let path = self.checkpoint_path();
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_checkpoint_to(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        if let Some(w) = self.csv.as_mut() {
            w.flush()?;
        }
        self.last_checkpoint = Some(path);
        Ok(())
    }

    pub fn write_checkpoint_to(&self, w: &mut impl Write) -> Result<()> {
        let s = &self.state;
        let text = self.cfg.to_text();
        writeln!(w, "vnsim-checkpoint 1")?;
        writeln!(w, "config_hash={}", self.cfg.hash())?;
        writeln!(
            w,
            "t={:e} steps={} particles={} grid_m={} grid_h={:e}",
            s.t(),
            s.steps(),
            s.ens.len(),
            s.grid.lattice().m,
            s.grid.h()
        )?;
        writeln!(w, "config_bytes={}", text.len())?;
        w.write_all(text.as_bytes())?;
        writeln!(w, "rows={}", self.rows.len())?;
        let flat: Vec<f64> = self.rows.iter().flat_map(|r| r.values()).collect();
        write_f64s(w, &flat)?;
        writeln!(w, "fsc_samples={}", self.fsc_samples.len())?;
        let flat: Vec<f64> = self
            .fsc_samples
            .iter()
            .flat_map(|f| [f.t, f.x.x, f.x.y, f.x.z, f.k, f.l])
            .collect();
        write_f64s(w, &flat)?;
        s.ens.write_to(w)?;
        s.grid.write_to(w)?;
        s.history.write_to(w)
    }

    /// Restores a run; the series file is rewritten up to the checkpoint on
    /// [`open_output`](Self::open_output).
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut run = Self::read_checkpoint(&mut r)?;
        run.last_checkpoint = Some(path.to_path_buf());
        Ok(run)
    }

    pub fn read_checkpoint(r: &mut impl BufRead) -> Result<Self> {
        if read_line(r)? != "vnsim-checkpoint 1" {
            return Err(Error::Format("not a vnsim checkpoint".into()));
        }
        let hash = read_line(r)?
            .strip_prefix("config_hash=")
            .ok_or_else(|| Error::Format("missing config hash".into()))?
            .to_string();
        let _descriptor = read_line(r)?;
        let count = header_count(&read_line(r)?, "config_bytes=")?;
        let mut text = vec![0u8; count];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|e| Error::Format(e.to_string()))?;
        let cfg = SimConfig::parse(&text)?;
        if cfg.hash() != hash {
            return Err(Error::Format("checkpoint config does not match its hash".into()));
        }
        let nrows = header_count(&read_line(r)?, "rows=")?;
        let rows = read_f64s(r, nrows * COLUMNS.len())?
            .chunks_exact(COLUMNS.len())
            .map(Row::from_values)
            .collect();
        let nfsc = header_count(&read_line(r)?, "fsc_samples=")?;
        let fsc_samples = read_f64s(r, nfsc * 6)?
            .chunks_exact(6)
            .map(|c| FscSample {
                t: c[0],
                x: Vector3::new(c[1], c[2], c[3]),
                k: c[4],
                l: c[5],
            })
            .collect();
        let ens = crate::vlasov_pic::ParticleEnsemble::read_from(r)?;
        let grid = FieldGrid::read_from(r)?;
        let history = SnapshotSeries::read_from(r)?;
        let state = CoupledState {
            data: cfg.initial_data()?,
            ens,
            grid,
            history,
            source: Default::default(),
            opts: LoopOptions {
                h: cfg.h,
                dt: cfg.dt,
                pad: cfg.pad,
                coupling: cfg.coupling,
                history_stride: cfg.history_stride,
                keep_source: false,
            },
        };
        Ok(Self {
            cfg,
            state,
            rows,
            fsc_samples,
            last_checkpoint: None,
            csv: None,
        })
    }
}

fn header_count(line: &str, key: &str) -> Result<usize> {
    line.strip_prefix(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("expected {key}N, got {line:?}")))
}

fn min_radius(data: &crate::profiles::InitialData) -> f64 {
    [
        (!data.f_in.is_zero(), data.f_in.radius),
        (!data.phi0_in.is_zero(), data.phi0_in.radius),
        (!data.phi1_in.is_zero(), data.phi1_in.radius),
    ]
    .iter()
    .filter(|(on, _)| *on)
    .map(|(_, r)| *r)
    .fold(data.support_radius, f64::min)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .install(f)
}

fn finish(mut run: Run) -> Result<Summary> {
    run.open_output()?;
    run.run_to_end()?;
    let summary = run.summarize()?;
    run.write_summary(&summary)?;
    Ok(summary)
}

/// Runs a scenario to `t_end`, writing `series.csv` and `summary.json`.
pub fn run_scenario(cfg: &SimConfig) -> Result<Summary> {
    let cfg = cfg.clone();
    in_pool(cfg.threads, move || finish(Run::new(cfg)?))
}

/// Continues a checkpointed run to its `t_end`.
pub fn resume(checkpoint: &Path) -> Result<Summary> {
    let run = Run::from_checkpoint(checkpoint)?;
    in_pool(run.cfg.threads, move || finish(run))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub initial_norm: f64,
    pub completed: bool,
    pub fsc_satisfied: bool,
    pub first_violation_t: Option<f64>,
    pub max_momentum_support: f64,
    pub momentum_support_ok: bool,
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: &str =
    "delta,initial_norm,completed,fsc_satisfied,first_violation_t,max_momentum_support,momentum_support_ok,error";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.16e},{:.16e},{},{},{},{:.16e},{},{}",
            self.delta,
            self.initial_norm,
            self.completed,
            self.fsc_satisfied,
            self.first_violation_t.map(|t| format!("{t:.16e}")).unwrap_or_default(),
            self.max_momentum_support,
            self.momentum_support_ok,
            self.error.as_deref().unwrap_or("").replace(',', ";")
        )
    }
}

/// One run per `delta` in `output_dir/delta_<i>`; writes `sweep.csv`.
/// Numerical aborts become table rows, configuration errors are returned.
pub fn sweep(cfg: &SimConfig, deltas: &[f64]) -> Result<Vec<SweepRow>> {
    let mut table = Vec::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let mut c = cfg.with_delta(delta);
        c.output_dir = cfg.output_dir.join(format!("delta_{i}"));
        let text = c.to_text();
        let c = SimConfig::parse(&text)?;
        let norm = {
            let data = c.initial_data()?;
            initial_norm(&data, min_radius(&data) / 16.0)?.total
        };
        let row = match run_scenario(&c) {
            Ok(s) => SweepRow {
                delta,
                initial_norm: norm,
                completed: true,
                fsc_satisfied: s.fsc.satisfied,
                first_violation_t: s.fsc.first_violation.map(|v| v.0),
                max_momentum_support: s.max_momentum_support,
                momentum_support_ok: s.momentum_support_ok,
                error: None,
            },
            Err(e) if e.exit_code() == 3 => SweepRow {
                delta,
                initial_norm: norm,
                completed: false,
                fsc_satisfied: false,
                first_violation_t: None,
                max_momentum_support: f64::NAN,
                momentum_support_ok: false,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        table.push(row);
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let mut w = BufWriter::new(File::create(cfg.output_dir.join("sweep.csv"))?);
    writeln!(w, "# config_hash={}", cfg.hash())?;
    writeln!(w, "{SWEEP_COLUMNS}")?;
    for r in &table {
        writeln!(w, "{}", r.csv_line())?;
    }
    w.flush()?;
    Ok(table)
}
