//! Leapfrog solver for `dtt phi - lap phi = -mu` on an expanding cube with
//! zero boundary values.

use crate::characteristics::{FieldSample, FieldSecond, FieldView};
use crate::error::{Error, Result};
use crate::profiles::InitialData;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use std::io::{BufRead, Read, Write};

/// Values below this are flushed to zero so the far field stays exactly zero.
const FLUSH: f64 = 1e-250;
/// Relative size above which a value near the boundary counts as activation.
const ACTIVATION: f64 = 1e-9;

/// Cubic node lattice `x = (i - m) h`, `i = 0..=2m` per axis, `x` fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub h: f64,
    pub m: usize,
}

impl Lattice {
    pub fn n(&self) -> usize {
        2 * self.m + 1
    }

    pub fn len(&self) -> usize {
        self.n().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_width(&self) -> f64 {
        self.m as f64 * self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.n();
        (k * n + j) * n + i
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.m as f64) * self.h
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(self.coord(i), self.coord(j), self.coord(k))
    }

    /// Node triple of a flat index.
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n();
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    /// Lower corner of the cell containing `x` and the fractional offsets.
    pub fn cell_of(&self, x: &Vector3<f64>) -> Option<([usize; 3], [f64; 3])> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = x[a] / self.h + self.m as f64;
            if !(u >= 0.0) || u > (2 * self.m) as f64 {
                return None;
            }
            let b = (u.floor() as usize).min(2 * self.m - 1);
            base[a] = b;
            frac[a] = u - b as f64;
        }
        Some((base, frac))
    }

    /// Copies `v` into the center of a lattice with the same spacing and larger `m`.
    pub fn embed(&self, v: &[f64], larger: &Lattice) -> Vec<f64> {
        let off = larger.m - self.m;
        let n = self.n();
        let mut out = vec![0.0; larger.len()];
        for k in 0..n {
            for j in 0..n {
                let src = self.idx(0, j, k);
                let dst = larger.idx(off, j + off, k + off);
                out[dst..dst + n].copy_from_slice(&v[src..src + n]);
            }
        }
        out
    }

    /// Trilinear weights and flat indices of the eight corners of a cell.
    fn corners(&self, base: [usize; 3], frac: [f64; 3]) -> [(usize, [usize; 3], f64); 8] {
        let mut out = [(0, [0; 3], 0.0); 8];
        for (c, slot) in out.iter_mut().enumerate() {
            let d = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let node = [base[0] + d[0], base[1] + d[1], base[2] + d[2]];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if d[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            *slot = (self.idx(node[0], node[1], node[2]), node, w);
        }
        out
    }

    fn stride(&self, axis: usize) -> usize {
        self.n().pow(axis as u32)
    }

    fn node_gradient(&self, g: &impl Fn(usize) -> f64, idx: usize) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for a in 0..3 {
            let s = self.stride(a);
            out[a] = (g(idx + s) - g(idx - s)) / (2.0 * self.h);
        }
        out
    }

    fn node_hessian(&self, g: &impl Fn(usize) -> f64, idx: usize) -> Matrix3<f64> {
        let h2 = self.h * self.h;
        let mut out = Matrix3::zeros();
        let c = g(idx);
        for a in 0..3 {
            let sa = self.stride(a);
            out[(a, a)] = (g(idx + sa) - 2.0 * c + g(idx - sa)) / h2;
            for b in (a + 1)..3 {
                let sb = self.stride(b);
                let v = (g(idx + sa + sb) - g(idx + sa - sb) - g(idx - sa + sb) + g(idx - sa - sb))
                    / (4.0 * h2);
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }

    /// Cell containing `x` whose corners all have a full stencil of neighbours.
    fn interior_cell(&self, x: &Vector3<f64>, margin: usize) -> Option<([usize; 3], [f64; 3])> {
        let (base, frac) = self.cell_of(x)?;
        let ok = base
            .iter()
            .all(|&b| b >= margin && b + 1 + margin <= 2 * self.m);
        ok.then_some((base, frac))
    }

    /// Interpolated value, time derivative and gradient; zero outside the stencil range.
    pub fn sample_with(
        &self,
        phi: impl Fn(usize) -> f64,
        dt_phi: impl Fn(usize) -> f64,
        x: &Vector3<f64>,
    ) -> FieldSample {
        let Some((base, frac)) = self.interior_cell(x, 1) else {
            return FieldSample::default();
        };
        let mut s = FieldSample::default();
        for (idx, _, w) in self.corners(base, frac) {
            s.phi += w * phi(idx);
            s.dt_phi += w * dt_phi(idx);
            s.grad += self.node_gradient(&phi, idx) * w;
        }
        s
    }

    pub fn second_with(
        &self,
        phi: impl Fn(usize) -> f64,
        dt_phi: impl Fn(usize) -> f64,
        x: &Vector3<f64>,
    ) -> FieldSecond {
        let Some((base, frac)) = self.interior_cell(x, 1) else {
            return FieldSecond::default();
        };
        let mut s = FieldSecond::default();
        for (idx, _, w) in self.corners(base, frac) {
            s.grad_dt += self.node_gradient(&dt_phi, idx) * w;
            s.hess += self.node_hessian(&phi, idx) * w;
        }
        s
    }
}

/// All derivatives of `phi` up to second order at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldDerivatives {
    pub phi: f64,
    pub dt: f64,
    pub grad: Vector3<f64>,
    pub dtt: f64,
    pub grad_dt: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

/// Discretized `phi` at times `t - dt`, `t`, `t + dt`, plus the source at `t`.
#[derive(Clone, Debug)]
pub struct FieldGrid {
    lat: Lattice,
    dt: f64,
    t0: f64,
    steps: u64,
    radius: f64,
    pad: f64,
    prev: Vec<f64>,
    curr: Vec<f64>,
    next: Vec<f64>,
    mu: Vec<f64>,
}

/// Distance the leapfrog precursor runs ahead of the light cone at the
/// activation threshold; the front widens like `(t h^2)^(1/3)`.
pub fn precursor_width(t: f64, h: f64) -> f64 {
    4.0 * (t.max(0.0) * h * h).cbrt()
}

pub fn check_cfl(h: f64, dt: f64) -> Result<()> {
    let limit = h / 3f64.sqrt();
    if !(h > 0.0) || !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

impl FieldGrid {
    /// Zero grid at `t = 0` covering `R + 2 dt + pad`.
    pub fn new(h: f64, dt: f64, radius: f64, pad: f64) -> Result<Self> {
        check_cfl(h, dt)?;
        if !(radius > 0.0) || !(pad >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs radius > 0 and pad >= 0, got {radius} and {pad}"
            )));
        }
        let m = Self::cells_for(radius + 2.0 * dt + pad, h);
        let lat = Lattice { h, m };
        let len = lat.len();
        Ok(Self {
            lat,
            dt,
            t0: 0.0,
            steps: 0,
            radius,
            pad,
            prev: vec![0.0; len],
            curr: vec![0.0; len],
            next: vec![0.0; len],
            mu: vec![0.0; len],
        })
    }

    fn cells_for(extent: f64, h: f64) -> usize {
        (extent / h).ceil() as usize + 3
    }

    /// Fills the three levels from initial data and the source at `t = 0`.
    /// The level at `-dt` comes from a Taylor expansion, the level at `dt`
    /// from one leapfrog step.
    pub fn start(&mut self, data: &InitialData, mu0: &[f64]) -> Result<()> {
        if mu0.len() != self.lat.len() {
            return Err(Error::InvalidArgument("source level has wrong size".into()));
        }
        let lat = self.lat;
        let dt = self.dt;
        let n = lat.n();
        let fill = |v: &mut Vec<f64>, f: &(dyn Fn(&Vector3<f64>, usize) -> f64 + Sync)| {
            v.par_chunks_mut(n * n).enumerate().for_each(|(k, plane)| {
                for j in 0..n {
                    for i in 0..n {
                        let idx = lat.idx(i, j, k);
                        plane[j * n + i] = f(&lat.node(i, j, k), idx);
                    }
                }
            });
        };
        let mut curr = vec![0.0; lat.len()];
        fill(&mut curr, &|x, _| data.phi0(x));
        let mut prev = vec![0.0; lat.len()];
        fill(&mut prev, &|x, idx| {
            let lap0 = data.phi0_in.laplacian(&arr(x));
            let lap1 = data.phi1_in.laplacian(&arr(x));
            data.phi0(x) - dt * data.phi1(x) + 0.5 * dt * dt * (lap0 - mu0[idx])
                - dt * dt * dt / 6.0 * lap1
        });
        self.curr = curr;
        self.prev = prev;
        self.mu = mu0.to_vec();
        self.t0 = 0.0;
        self.steps = 0;
        self.next = self.leapfrog(&self.prev, &self.curr, &self.mu)?;
        Ok(())
    }

    /// Grid holding `f(t - dt)`, `f(t)`, `f(t + dt)` on a lattice of half-width `m` cells.
    pub fn from_fn(
        h: f64,
        dt: f64,
        m: usize,
        t: f64,
        f: impl Fn(f64, &Vector3<f64>) -> f64,
    ) -> Result<Self> {
        check_cfl(h, dt)?;
        let lat = Lattice { h, m };
        let n = lat.n();
        let level = |s: f64| {
            let mut v = vec![0.0; lat.len()];
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        v[lat.idx(i, j, k)] = f(s, &lat.node(i, j, k));
                    }
                }
            }
            v
        };
        Ok(Self {
            lat,
            dt,
            t0: t,
            steps: 0,
            radius: 0.0,
            pad: 0.0,
            prev: level(t - dt),
            curr: level(t),
            next: level(t + dt),
            mu: vec![0.0; lat.len()],
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lat
    }

    pub fn h(&self) -> f64 {
        self.lat.h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of the current level, `t0 + steps dt`.
    pub fn t(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn pad(&self) -> f64 {
        self.pad
    }

    pub fn prev(&self) -> &[f64] {
        &self.prev
    }

    pub fn curr(&self) -> &[f64] {
        &self.curr
    }

    pub fn next(&self) -> &[f64] {
        &self.next
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Bytes held by the four levels.
    pub fn memory_bytes(&self) -> usize {
        4 * self.lat.len() * std::mem::size_of::<f64>()
    }

    /// Lattice needed so that a step reaching `t_new` keeps `R + t_new + pad`
    /// and the dispersive precursor of the scheme inside.
    fn lattice_for(&self, t_new: f64) -> Lattice {
        let need = Self::cells_for(self.radius + t_new + self.pad + precursor_width(t_new, self.lat.h), self.lat.h);
        if need <= self.lat.m {
            return self.lat;
        }
        let grow = (self.lat.m / 8).max(4);
        Lattice {
            h: self.lat.h,
            m: need.max(self.lat.m + grow),
        }
    }

    /// Lattice after the next step; a source for that step must live on it.
    pub fn lattice_for_next_step(&self) -> Lattice {
        self.lattice_for(self.t() + 2.0 * self.dt)
    }

    fn expand_to(&mut self, larger: Lattice) {
        if larger == self.lat {
            return;
        }
        let old = self.lat;
        self.prev = old.embed(&self.prev, &larger);
        self.curr = old.embed(&self.curr, &larger);
        self.next = old.embed(&self.next, &larger);
        self.mu = old.embed(&self.mu, &larger);
        self.lat = larger;
    }

    /// `2 b - a + dt^2 (lap b - mu)` with zero boundary values.
    fn leapfrog(&self, a: &[f64], b: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        let lat = self.lat;
        let n = lat.n();
        let dt2 = self.dt * self.dt;
        let inv_h2 = 1.0 / (lat.h * lat.h);
        let mut out = vec![0.0; lat.len()];
        out.par_chunks_mut(n * n)
            .enumerate()
            .filter(|(k, _)| *k > 0 && *k < n - 1)
            .for_each(|(k, plane)| {
                for j in 1..n - 1 {
                    for i in 1..n - 1 {
                        let c = lat.idx(i, j, k);
                        let lap = (b[c + 1] + b[c - 1] + b[c + n] + b[c - n] + b[c + n * n]
                            + b[c - n * n]
                            - 6.0 * b[c])
                            * inv_h2;
                        let v = 2.0 * b[c] - a[c] + dt2 * (lap - mu[c]);
                        plane[j * n + i] = if v.abs() < FLUSH { 0.0 } else { v };
                    }
                }
            });
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field".into(),
                t: self.t() + 2.0 * self.dt,
                checkpoint: None,
            });
        }
        Ok(out)
    }

    /// Advances one step. `mu_next` is the source at `t + dt` on
    /// [`lattice_for_next_step`](Self::lattice_for_next_step) or on the current lattice.
    pub fn fdtd_step(&mut self, mu_next: &[f64]) -> Result<()> {
        let target = self.lattice_for_next_step();
        let mu = if mu_next.len() == target.len() {
            mu_next.to_vec()
        } else if mu_next.len() == self.lat.len() {
            self.lat.embed(mu_next, &target)
        } else {
            return Err(Error::InvalidArgument("source level has wrong size".into()));
        };
        self.expand_to(target);
        let new = self.leapfrog(&self.curr, &self.next, &mu)?;
        self.check_activation(&new)?;
        self.prev = std::mem::take(&mut self.curr);
        self.curr = std::mem::replace(&mut self.next, new);
        self.mu = mu;
        self.steps += 1;
        Ok(())
    }

    fn check_activation(&self, level: &[f64]) -> Result<()> {
        let lat = self.lat;
        let n = lat.n();
        let peak = level.par_iter().fold(|| 0.0f64, |a, v| a.max(v.abs())).reduce(|| 0.0, f64::max);
        if peak == 0.0 {
            return Ok(());
        }
        let near = |i: usize| i < 3 || i + 3 >= n;
        let edge: Vec<usize> = (0..3).chain(n - 3..n).collect();
        let all: Vec<usize> = (0..n).collect();
        for k in 0..n {
            for j in 0..n {
                let cols = if near(k) || near(j) { &all } else { &edge };
                for &i in cols {
                    if level[lat.idx(i, j, k)].abs() > ACTIVATION * peak {
                        return Err(Error::DomainTooSmall(format!(
                            "field reached the boundary at t = {} (half-width {})",
                            self.t() + 2.0 * self.dt,
                            lat.half_width()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Centered differences at time `t`, interpolated trilinearly in space.
    pub fn field_derivatives(&self, x: &Vector3<f64>) -> Result<FieldDerivatives> {
        let lat = self.lat;
        let (base, frac) = lat.interior_cell(x, 2).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "point {:?} is within two cells of the grid boundary",
                [x.x, x.y, x.z]
            ))
        })?;
        let dt = self.dt;
        let phi = |i: usize| self.curr[i];
        let dphi = |i: usize| (self.next[i] - self.prev[i]) / (2.0 * dt);
        let mut out = FieldDerivatives::default();
        for (idx, _, w) in lat.corners(base, frac) {
            out.phi += w * phi(idx);
            out.dt += w * dphi(idx);
            out.dtt += w * (self.next[idx] - 2.0 * self.curr[idx] + self.prev[idx]) / (dt * dt);
            out.grad += lat.node_gradient(&phi, idx) * w;
            out.grad_dt += lat.node_gradient(&dphi, idx) * w;
            out.hess += lat.node_hessian(&phi, idx) * w;
        }
        Ok(out)
    }

    /// [`field_derivatives`](Self::field_derivatives) after a `[1, 2, 1] / 4`
    /// filter along each axis. The filter removes the checkerboard modes that
    /// the lattice leaves ringing behind a pulse and is exact on quadratics.
    pub fn field_derivatives_smoothed(&self, x: &Vector3<f64>) -> Result<FieldDerivatives> {
        let h = self.lat.h;
        let mut out = FieldDerivatives::default();
        for c in 0..27 {
            let o = [c % 3, (c / 3) % 3, c / 9];
            let w: f64 = o.iter().map(|&a| if a == 1 { 0.5 } else { 0.25 }).product();
            let y = x + Vector3::new(o[0] as f64 - 1.0, o[1] as f64 - 1.0, o[2] as f64 - 1.0) * h;
            let d = self.field_derivatives(&y)?;
            out.phi += w * d.phi;
            out.dt += w * d.dt;
            out.dtt += w * d.dtt;
            out.grad += d.grad * w;
            out.grad_dt += d.grad_dt * w;
            out.hess += d.hess * w;
        }
        Ok(out)
    }

    /// View of `phi` on `[t, t + dt]`, linear in time between the two levels.
    pub fn window(&self) -> GridWindow<'_> {
        GridWindow { grid: self }
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.curr.par_iter().fold(|| 0.0f64, |a, v| a.max(v.abs())).reduce(|| 0.0, f64::max)
    }

    /// Leapfrog energy of the level pair `(t, t + dt)`; exactly conserved when `mu = 0`.
    pub fn discrete_energy(&self) -> f64 {
        let lat = self.lat;
        let n = lat.n();
        let (a, b) = (&self.curr, &self.next);
        let inv_h2 = 1.0 / (lat.h * lat.h);
        let mut e = 0.0;
        for k in 1..n - 1 {
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let c = lat.idx(i, j, k);
                    let v = (b[c] - a[c]) / self.dt;
                    let lap = (a[c + 1] + a[c - 1] + a[c + n] + a[c - n] + a[c + n * n]
                        + a[c - n * n]
                        - 6.0 * a[c])
                        * inv_h2;
                    e += v * v - b[c] * lap;
                }
            }
        }
        0.5 * e * lat.h.powi(3)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "vnsim-field 1")?;
        writeln!(
            w,
            "m={} h={:e} dt={:e} t0={:e} steps={} radius={:e} pad={:e}",
            self.lat.m, self.lat.h, self.dt, self.t0, self.steps, self.radius, self.pad
        )?;
        writeln!(w, "levels=prev,curr,next,mu")?;
        for level in [&self.prev, &self.curr, &self.next, &self.mu] {
            write_f64s(w, level)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let magic = read_line(r)?;
        if magic != "vnsim-field 1" {
            return Err(Error::Format(format!("unexpected field header {magic:?}")));
        }
        let desc = read_line(r)?;
        let get = |key: &str| -> Result<f64> {
            desc.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Format(format!("missing {key} in field header")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad {key}: {e}")))
        };
        let lat = Lattice {
            h: get("h")?,
            m: get("m")? as usize,
        };
        let (dt, t0, radius, pad) = (get("dt")?, get("t0")?, get("radius")?, get("pad")?);
        let steps = get("steps")? as u64;
        read_line(r)?;
        let len = lat.len();
        Ok(Self {
            lat,
            dt,
            t0,
            steps,
            radius,
            pad,
            prev: read_f64s(r, len)?,
            curr: read_f64s(r, len)?,
            next: read_f64s(r, len)?,
            mu: read_f64s(r, len)?,
        })
    }
}

fn arr(x: &Vector3<f64>) -> [f64; 3] {
    [x.x, x.y, x.z]
}

pub(crate) fn read_line(r: &mut impl BufRead) -> Result<String> {
    let mut s = String::new();
    if r.read_line(&mut s)? == 0 {
        return Err(Error::Format("unexpected end of file".into()));
    }
    Ok(s.trim_end_matches(['\n', '\r']).to_string())
}

pub(crate) fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Borrowed view of a grid over `[t, t + dt]`.
pub struct GridWindow<'a> {
    grid: &'a FieldGrid,
}

impl GridWindow<'_> {
    /// Fraction of the way from the current to the next level.
    fn fraction(&self, t: f64) -> f64 {
        ((t - self.grid.t()) / self.grid.dt).clamp(0.0, 1.0)
    }
}

/// Linear blend `a (1 - s) + b s`.
pub(crate) fn lerp_sample(a: FieldSample, b: FieldSample, s: f64) -> FieldSample {
    FieldSample {
        phi: a.phi * (1.0 - s) + b.phi * s,
        dt_phi: a.dt_phi * (1.0 - s) + b.dt_phi * s,
        grad: a.grad * (1.0 - s) + b.grad * s,
    }
}

pub(crate) fn lerp_second(a: FieldSecond, b: FieldSecond, s: f64) -> FieldSecond {
    FieldSecond {
        grad_dt: a.grad_dt * (1.0 - s) + b.grad_dt * s,
        hess: a.hess * (1.0 - s) + b.hess * s,
    }
}

impl FieldView for GridWindow<'_> {
    fn time_range(&self) -> (f64, f64) {
        (self.grid.t(), self.grid.t() + self.grid.dt)
    }

    fn sample(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSample> {
        self.check_time(t)?;
        let g = self.grid;
        let dt = g.dt;
        let s = self.fraction(t);
        let at_curr = || g.lat.sample_with(|i| g.curr[i], |i| (g.next[i] - g.prev[i]) / (2.0 * dt), x);
        let at_next = || {
            g.lat.sample_with(
                |i| g.next[i],
                |i| (3.0 * g.next[i] - 4.0 * g.curr[i] + g.prev[i]) / (2.0 * dt),
                x,
            )
        };
        Ok(match s {
            0.0 => at_curr(),
            1.0 => at_next(),
            _ => lerp_sample(at_curr(), at_next(), s),
        })
    }

    fn second(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSecond> {
        self.check_time(t)?;
        let g = self.grid;
        let dt = g.dt;
        let s = self.fraction(t);
        let at_curr = || g.lat.second_with(|i| g.curr[i], |i| (g.next[i] - g.prev[i]) / (2.0 * dt), x);
        let at_next = || {
            g.lat.second_with(
                |i| g.next[i],
                |i| (3.0 * g.next[i] - 4.0 * g.curr[i] + g.prev[i]) / (2.0 * dt),
                x,
            )
        };
        Ok(match s {
            0.0 => at_curr(),
            1.0 => at_next(),
            _ => lerp_second(at_curr(), at_next(), s),
        })
    }
}

/// Angular frequency of the standing mode `cos(2 pi x)` under leapfrog on a
/// periodic box of unit length with `cells` cells and `dt = courant * h`,
/// estimated from zero crossings over `periods` periods.
pub fn periodic_mode_frequency(cells: usize, courant: f64, periods: f64) -> f64 {
    let h = 1.0 / cells as f64;
    let dt = courant * h;
    let k = 2.0 * std::f64::consts::PI;
    // One transverse node: neighbours wrap onto themselves and drop out of the Laplacian.
    let (nx, ny, nz) = (cells, 1usize, 1usize);
    let len = nx * ny * nz;
    let idx = |i: usize, j: usize, l: usize| (l * ny + j) * nx + i;
    let mut prev: Vec<f64> = (0..len).map(|c| (k * (c % nx) as f64 * h).cos() * (k * dt).cos()).collect();
    let mut curr: Vec<f64> = (0..len).map(|c| (k * (c % nx) as f64 * h).cos()).collect();
    let steps = (periods / dt).ceil() as usize;
    let mut crossings = Vec::new();
    let mut last = curr[0];
    for step in 1..=steps {
        let mut next = vec![0.0; len];
        for l in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = idx(i, j, l);
                    let xp = idx((i + 1) % nx, j, l);
                    let xm = idx((i + nx - 1) % nx, j, l);
                    let yp = idx(i, (j + 1) % ny, l);
                    let ym = idx(i, (j + ny - 1) % ny, l);
                    let zp = idx(i, j, (l + 1) % nz);
                    let zm = idx(i, j, (l + nz - 1) % nz);
                    let lap = (curr[xp] + curr[xm] + curr[yp] + curr[ym] + curr[zp] + curr[zm]
                        - 6.0 * curr[c])
                        / (h * h);
                    next[c] = 2.0 * curr[c] - prev[c] + dt * dt * lap;
                }
            }
        }
        prev = std::mem::replace(&mut curr, next);
        let v = curr[0];
        if last != 0.0 && v.signum() != last.signum() {
            let s = last / (last - v);
            crossings.push((step as f64 - 1.0 + s) * dt);
        }
        last = v;
    }
    let n = crossings.len();
    assert!(n >= 2, "too few zero crossings");
    std::f64::consts::PI * (n - 1) as f64 / (crossings[n - 1] - crossings[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::make_bump;
    use approx::assert_relative_eq;

    #[test]
    fn cfl_is_enforced() {
        assert!(matches!(FieldGrid::new(0.5, 0.5, 1.0, 1.0), Err(Error::Cfl { .. })));
        assert!(FieldGrid::new(0.5, 0.5 / 3f64.sqrt(), 1.0, 1.0).is_ok());
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut g = FieldGrid::new(0.5, 0.25, 1.0, 1.0).unwrap();
        let zeros = vec![0.0; g.lattice().len()];
        g.start(&InitialData::zero(1.0), &zeros).unwrap();
        for _ in 0..20 {
            let mu = vec![0.0; g.lattice().len()];
            g.fdtd_step(&mu).unwrap();
        }
        assert!(g.curr().iter().all(|&v| v == 0.0));
        assert_relative_eq!(g.t(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn single_step_bounded_by_source() {
        let mut g = FieldGrid::new(0.5, 0.25, 1.0, 1.0).unwrap();
        let mut mu = vec![0.0; g.lattice().len()];
        let c = g.lattice().idx(g.lattice().m, g.lattice().m, g.lattice().m);
        mu[c] = 3.0;
        g.start(&InitialData::zero(1.0), &mu).unwrap();
        let peak = g.next().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak <= g.dt() * g.dt() * 3.0 + 1e-15);
    }

    #[test]
    fn domain_expands_with_time() {
        let mut g = FieldGrid::new(1.0, 0.5, 1.0, 2.0).unwrap();
        g.start(&InitialData::zero(1.0), &vec![0.0; g.lattice().len()]).unwrap();
        let m0 = g.lattice().m;
        for _ in 0..40 {
            let mu = vec![0.0; g.lattice_for_next_step().len()];
            g.fdtd_step(&mu).unwrap();
            assert!(g.lattice().half_width() >= g.radius() + g.t() + g.dt() + g.pad());
        }
        assert!(g.lattice().m > m0);
    }

    #[test]
    fn embed_keeps_node_positions() {
        let small = Lattice { h: 0.5, m: 2 };
        let big = Lattice { h: 0.5, m: 5 };
        let v: Vec<f64> = (0..small.len()).map(|i| i as f64).collect();
        let e = small.embed(&v, &big);
        for idx in 0..small.len() {
            let [i, j, k] = small.unflatten(idx);
            let x = small.node(i, j, k);
            let (b, f) = big.cell_of(&x).unwrap();
            assert!(f.iter().all(|&u| u.abs() < 1e-12));
            assert_eq!(e[big.idx(b[0], b[1], b[2])], v[idx]);
        }
        assert_eq!(e.iter().sum::<f64>(), v.iter().sum::<f64>());
    }

    #[test]
    fn derivatives_of_polynomials_are_exact() {
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |t, _| t * t).unwrap();
        let d = g.field_derivatives(&Vector3::new(0.3, -0.2, 0.7)).unwrap();
        assert_relative_eq!(d.dtt, 2.0, epsilon = 1e-12);
        assert_relative_eq!(d.dt, 2.0, epsilon = 1e-12);
        assert!(d.grad.norm() < 1e-12 && d.hess.norm() < 1e-12 && d.grad_dt.norm() < 1e-12);

        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |t, x| t + 3.0 * x.x - x.y * x.z + x.x * x.x).unwrap();
        let x = Vector3::new(0.3, -0.2, 0.7);
        let d = g.field_derivatives(&x).unwrap();
        assert_relative_eq!(d.dt, 1.0, epsilon = 1e-12);
        assert!((d.hess - Matrix3::new(2.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, -1.0, 0.0)).norm() < 1e-12);
        assert_relative_eq!(d.grad.x, 3.0 + 2.0 * x.x, epsilon = 1e-12);

        let zero = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |_, _| 0.0).unwrap();
        assert_eq!(zero.field_derivatives(&x).unwrap(), FieldDerivatives::default());
    }

    #[test]
    fn smoothing_keeps_quadratic_derivatives_and_drops_checkerboards() {
        let g = FieldGrid::from_fn(0.5, 0.25, 8, 1.0, |t, x| t * t + 3.0 * x.x - x.y * x.z + x.x * x.x).unwrap();
        let x = Vector3::new(0.3, -0.2, 0.7);
        let (a, b) = (g.field_derivatives(&x).unwrap(), g.field_derivatives_smoothed(&x).unwrap());
        assert_relative_eq!(a.dt, b.dt, epsilon = 1e-12);
        assert_relative_eq!(a.dtt, b.dtt, epsilon = 1e-12);
        assert!((a.grad - b.grad).norm() < 1e-12 && (a.hess - b.hess).norm() < 1e-12);

        let h = 0.5;
        let g = FieldGrid::from_fn(h, 0.25, 8, 1.0, |t, x| t * (std::f64::consts::PI * x.x / h).cos()).unwrap();
        assert!(g.field_derivatives(&Vector3::zeros()).unwrap().dt.abs() > 0.9);
        assert!(g.field_derivatives_smoothed(&Vector3::zeros()).unwrap().dt.abs() < 1e-12);
    }

    #[test]
    fn derivatives_near_boundary_are_rejected() {
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 0.0, |_, _| 0.0).unwrap();
        assert!(matches!(
            g.field_derivatives(&Vector3::new(2.6, 0.0, 0.0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let x = Vector3::new(0.25, 0.1, -0.3);
        let err = |h: f64| {
            let m = (2.0 / h) as usize;
            let g = FieldGrid::from_fn(h, h / 2.0, m, 0.0, |_, x| x.x.sin()).unwrap();
            // Probe at a node so only the stencil error remains.
            let d = g.field_derivatives(&Vector3::new(x.x, 0.0, 0.0)).unwrap();
            (d.grad.x - x.x.cos()).abs()
        };
        let (e1, e2) = (err(0.25), err(0.125));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn window_interpolates_in_time() {
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |t, x| 2.0 * t + x.y).unwrap();
        let w = g.window();
        let s = w.sample(1.1, &Vector3::new(0.1, 0.2, 0.3)).unwrap();
        assert_relative_eq!(s.phi, 2.2 + 0.2, epsilon = 1e-12);
        assert_relative_eq!(s.dt_phi, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.grad.y, 1.0, epsilon = 1e-12);
        assert!(w.sample(1.5, &Vector3::zeros()).is_err());
        // Outside the stencil range the view is zero.
        assert_eq!(w.sample(1.0, &Vector3::new(10.0, 0.0, 0.0)).unwrap(), FieldSample::default());
    }

    #[test]
    fn energy_is_conserved_without_source() {
        let data = InitialData {
            phi0_in: make_bump([0.0; 3], 1.0, 0.2, 4).unwrap(),
            ..InitialData::zero(1.0)
        };
        let mut g = FieldGrid::new(0.2, 0.1, 1.0, 3.0).unwrap();
        g.start(&data, &vec![0.0; g.lattice().len()]).unwrap();
        let e0 = g.discrete_energy();
        for _ in 0..15 {
            let mu = vec![0.0; g.lattice().len()];
            g.fdtd_step(&mu).unwrap();
        }
        assert!(e0 > 0.0);
        assert_relative_eq!(g.discrete_energy(), e0, max_relative = 1e-10);
    }

    #[test]
    fn standing_mode_dispersion_is_second_order() {
        let omega = 2.0 * std::f64::consts::PI;
        let e1 = (periodic_mode_frequency(16, 0.5, 6.0) - omega).abs();
        let e2 = (periodic_mode_frequency(32, 0.5, 6.0) - omega).abs();
        // von Neumann: sin(w dt / 2) / dt = sin(k h / 2) / h.
        let h = 1.0 / 16.0;
        let dt = 0.5 * h;
        let exact = 2.0 / dt * ((dt / h) * (omega * h / 2.0).sin()).asin();
        assert_relative_eq!(periodic_mode_frequency(16, 0.5, 6.0), exact, max_relative = 1e-4);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn dump_round_trip() {
        let g = FieldGrid::from_fn(0.5, 0.25, 3, 2.0, |t, x| t * x.x + x.z).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let back = FieldGrid::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.curr(), g.curr());
        assert_eq!(back.prev(), g.prev());
        assert_eq!(back.t(), g.t());
        assert_eq!(back.lattice(), g.lattice());
        assert!(FieldGrid::read_from(&mut &b"garbage\n"[..]).is_err());
    }
}
