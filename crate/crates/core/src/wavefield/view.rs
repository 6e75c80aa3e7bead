//! Stored field levels and time interpolation between them.

use super::grid::{lerp_sample, lerp_second, read_f64s, read_line, write_f64s, FieldGrid, Lattice};
use crate::characteristics::{FieldSample, FieldSecond, FieldView};
use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::io::{BufRead, Write};

/// `phi` and `dt phi` on a lattice at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub lat: Lattice,
    pub phi: Vec<f64>,
    pub dt_phi: Vec<f64>,
}

impl FieldSnapshot {
    /// Current level of a grid with the centered time derivative.
    pub fn from_grid(g: &FieldGrid) -> Self {
        let dt = g.dt();
        Self {
            t: g.t(),
            lat: g.lattice(),
            phi: g.curr().to_vec(),
            dt_phi: g
                .next()
                .iter()
                .zip(g.prev())
                .map(|(n, p)| (n - p) / (2.0 * dt))
                .collect(),
        }
    }

    pub fn sample(&self, x: &Vector3<f64>) -> FieldSample {
        self.lat.sample_with(|i| self.phi[i], |i| self.dt_phi[i], x)
    }

    pub fn second(&self, x: &Vector3<f64>) -> FieldSecond {
        self.lat.second_with(|i| self.phi[i], |i| self.dt_phi[i], x)
    }

    pub fn memory_bytes(&self) -> usize {
        16 * self.phi.len()
    }
}

/// Snapshots at increasing times, linear in time between neighbours.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnapshotSeries {
    snaps: Vec<FieldSnapshot>,
}

impl SnapshotSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, snap: FieldSnapshot) -> Result<()> {
        if let Some(last) = self.snaps.last() {
            if snap.t <= last.t {
                return Err(Error::InvalidArgument(format!(
                    "snapshot at t = {} does not follow t = {}",
                    snap.t, last.t
                )));
            }
        }
        self.snaps.push(snap);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn snapshots(&self) -> &[FieldSnapshot] {
        &self.snaps
    }

    pub fn memory_bytes(&self) -> usize {
        self.snaps.iter().map(FieldSnapshot::memory_bytes).sum()
    }

    /// Maximum of `|phi|` over all stored nodes.
    pub fn max_abs_phi(&self) -> f64 {
        self.snaps
            .iter()
            .flat_map(|s| s.phi.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Bracketing pair and interpolation fraction for time `t`.
    fn locate(&self, t: f64) -> Result<(usize, usize, f64)> {
        self.check_time(t)?;
        let k = self.snaps.partition_point(|s| s.t < t);
        if k == 0 {
            return Ok((0, 0, 0.0));
        }
        if k == self.snaps.len() {
            let last = self.snaps.len() - 1;
            return Ok((last, last, 0.0));
        }
        if self.snaps[k].t == t {
            return Ok((k, k, 0.0));
        }
        let (a, b) = (&self.snaps[k - 1], &self.snaps[k]);
        Ok((k - 1, k, (t - a.t) / (b.t - a.t)))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "snapshots={}", self.snaps.len())?;
        for s in &self.snaps {
            writeln!(w, "t={:e} h={:e} m={}", s.t, s.lat.h, s.lat.m)?;
            write_f64s(w, &s.phi)?;
            write_f64s(w, &s.dt_phi)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let head = read_line(r)?;
        let count: usize = head
            .strip_prefix("snapshots=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad snapshot header {head:?}")))?;
        let mut out = Self::new();
        for _ in 0..count {
            let line = read_line(r)?;
            let field = |key: &str| -> Result<f64> {
                line.split_whitespace()
                    .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad snapshot line {line:?}")))
            };
            let lat = Lattice {
                h: field("h")?,
                m: field("m")? as usize,
            };
            let t = field("t")?;
            let phi = read_f64s(r, lat.len())?;
            let dt_phi = read_f64s(r, lat.len())?;
            out.push(FieldSnapshot { t, lat, phi, dt_phi })?;
        }
        Ok(out)
    }
}

impl FieldView for SnapshotSeries {
    fn time_range(&self) -> (f64, f64) {
        match (self.snaps.first(), self.snaps.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (f64::NAN, f64::NAN),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (start, end) = self.time_range();
        let slack = 1e-9 * (1.0 + end.abs());
        if self.snaps.is_empty() || t < start - slack || t > end + slack {
            return Err(Error::OutOfHistory { t, start, end });
        }
        Ok(())
    }

    fn sample(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSample> {
        let (a, b, s) = self.locate(t)?;
        let first = self.snaps[a].sample(x);
        if a == b {
            return Ok(first);
        }
        Ok(lerp_sample(first, self.snaps[b].sample(x), s))
    }

    fn second(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSecond> {
        let (a, b, s) = self.locate(t)?;
        let first = self.snaps[a].second(x);
        if a == b {
            return Ok(first);
        }
        Ok(lerp_second(first, self.snaps[b].second(x), s))
    }
}
