//! Particle representation of `f` with the exact exponential weight law, CIC
//! deposition of `mu`, and the coupled particle/field time loop.

use crate::characteristics::{backward_trace, push, FieldView, PhaseState, ZeroField};
use crate::error::{Error, Result};
use crate::profiles::InitialData;
use crate::wavefield::grid::{read_f64s, read_line, write_f64s};
use crate::wavefield::{FieldGrid, FieldSnapshot, GridSourceHistory, Lattice, SnapshotSeries};
use nalgebra::Vector3;
use rayon::prelude::*;
use std::io::{BufRead, Write};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub x: Vector3<f64>,
    pub p: Vector3<f64>,
    pub w: f64,
    pub w0: f64,
    pub x0: Vector3<f64>,
    pub p0: Vector3<f64>,
}

impl Particle {
    pub fn new(x: Vector3<f64>, p: Vector3<f64>, w: f64) -> Self {
        Self {
            x,
            p,
            w,
            w0: w,
            x0: x,
            p0: p,
        }
    }

    fn to_array(self) -> [f64; 20] {
        let mut a = [0.0; 20];
        for i in 0..3 {
            a[i] = self.x[i];
            a[3 + i] = self.p[i];
            a[8 + i] = self.x0[i];
            a[11 + i] = self.p0[i];
        }
        a[6] = self.w;
        a[7] = self.w0;
        a
    }

    fn from_slice(a: &[f64]) -> Self {
        let v = |o: usize| Vector3::new(a[o], a[o + 1], a[o + 2]);
        Self {
            x: v(0),
            p: v(3),
            w: a[6],
            w0: a[7],
            x0: v(8),
            p0: v(11),
        }
    }
}

/// Weighted particles with the phase-space volume of one sampling cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    pub cell_volume: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|q| q.w).sum()
    }

    /// `sum w / sqrt(1 + p^2)`, the discrete integral of `mu`.
    pub fn mass_like(&self) -> f64 {
        self.particles
            .iter()
            .map(|q| q.w / (1.0 + q.p.norm_squared()).sqrt())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.particles.iter().all(|q| {
            q.w.is_finite() && q.x.iter().chain(q.p.iter()).all(|v| v.is_finite())
        })
    }

    pub fn memory_bytes(&self) -> usize {
        self.particles.len() * std::mem::size_of::<Particle>()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "particles={} cell_volume={:e}", self.len(), self.cell_volume)?;
        let mut flat = Vec::with_capacity(self.len() * 20);
        for q in &self.particles {
            flat.extend_from_slice(&q.to_array());
        }
        write_f64s(w, &flat)
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let head = read_line(r)?;
        let mut count = None;
        let mut cell_volume = None;
        for kv in head.split_whitespace() {
            if let Some(v) = kv.strip_prefix("particles=") {
                count = v.parse::<usize>().ok();
            } else if let Some(v) = kv.strip_prefix("cell_volume=") {
                cell_volume = v.parse::<f64>().ok();
            }
        }
        let (Some(count), Some(cell_volume)) = (count, cell_volume) else {
            return Err(Error::Format(format!("bad particle header {head:?}")));
        };
        let flat = read_f64s(r, count * 20)?;
        Ok(Self {
            particles: flat.chunks_exact(20).map(Particle::from_slice).collect(),
            cell_volume,
        })
    }
}

/// Quiet start with the same number of lattice cells per dimension in x and p.
pub fn sample_particles(data: &InitialData, n_per_dim: usize) -> Result<ParticleEnsemble> {
    if n_per_dim < 4 {
        return Err(Error::InvalidArgument(format!(
            "n_per_dim must be at least 4, got {n_per_dim}"
        )));
    }
    sample_particles_with(data, n_per_dim, n_per_dim)
}

/// Quiet start on the bounding box of `supp f_in` with `n_x` cells per
/// position axis and `n_p` per momentum axis; one particle per cell centre.
pub fn sample_particles_with(data: &InitialData, n_x: usize, n_p: usize) -> Result<ParticleEnsemble> {
    if n_x < 2 || n_p < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 cells per axis, got {n_x} and {n_p}"
        )));
    }
    let b = &data.f_in;
    let r = b.radius;
    let (dx, dp) = (2.0 * r / n_x as f64, 2.0 * r / n_p as f64);
    let cell_volume = dx.powi(3) * dp.powi(3);
    if b.is_zero() {
        return Ok(ParticleEnsemble {
            particles: Vec::new(),
            cell_volume,
        });
    }
    let c = b.center;
    let centers = |n: usize, step: f64, c: f64| -> Vec<f64> {
        (0..n).map(|i| c - r + (i as f64 + 0.5) * step).collect()
    };
    let xs: Vec<[f64; 3]> = {
        let (a, bb, cc) = (centers(n_x, dx, c[0]), centers(n_x, dx, c[1]), centers(n_x, dx, c[2]));
        let mut v = Vec::new();
        for z in &cc {
            for y in &bb {
                for x in &a {
                    v.push([*x, *y, *z]);
                }
            }
        }
        v
    };
    let (p1, p2, p3) = (centers(n_p, dp, c[3]), centers(n_p, dp, c[4]), centers(n_p, dp, c[5]));
    let per_x: Vec<Vec<Particle>> = xs
        .par_iter()
        .map(|x| {
            let sx: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
            let mut out = Vec::new();
            if sx >= r * r {
                return out;
            }
            let rest = r * r - sx;
            for pz in &p3 {
                let sz = (pz - c[5]).powi(2);
                if sz >= rest {
                    continue;
                }
                for py in &p2 {
                    let sy = (py - c[4]).powi(2);
                    if sz + sy >= rest {
                        continue;
                    }
                    for px in &p1 {
                        let w = b.value(&[x[0], x[1], x[2], *px, *py, *pz]) * cell_volume;
                        if w > 0.0 {
                            out.push(Particle::new(
                                Vector3::new(x[0], x[1], x[2]),
                                Vector3::new(*px, *py, *pz),
                                w,
                            ));
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(ParticleEnsemble {
        particles: per_x.into_iter().flatten().collect(),
        cell_volume,
    })
}

/// CIC base cell of a particle, or an error when its cell is not on the lattice.
fn cic_cell(lat: &Lattice, x: &Vector3<f64>) -> Result<([usize; 3], [f64; 3])> {
    lat.cell_of(x).ok_or_else(|| {
        Error::DomainTooSmall(format!(
            "particle at {:?} lies outside the grid half-width {}",
            [x.x, x.y, x.z],
            lat.half_width()
        ))
    })
}

/// Cloud-in-cell deposition of `mu = sum w / sqrt(1 + p^2) / h^3`.
///
/// Particles are binned by the z-plane of their cell; each output plane adds
/// the bin below it and then its own bin, in particle order, so the result
/// does not depend on the number of threads.
pub fn deposit_mu(ens: &ParticleEnsemble, lat: &Lattice) -> Result<Vec<f64>> {
    let n = lat.n();
    let mut mu = vec![0.0; lat.len()];
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, q) in ens.particles.iter().enumerate() {
        if q.w == 0.0 {
            continue;
        }
        let (base, _) = cic_cell(lat, &q.x)?;
        bins[base[2]].push(i as u32);
    }
    let inv_vol = 1.0 / lat.h.powi(3);
    mu.par_chunks_mut(n * n).enumerate().for_each(|(k, plane)| {
        let mut add = |bin: &[u32], upper: bool| {
            for &i in bin {
                let q = &ens.particles[i as usize];
                let (base, f) = lat.cell_of(&q.x).expect("binned particle is on the lattice");
                let charge = q.w / (1.0 + q.p.norm_squared()).sqrt() * inv_vol;
                let wz = if upper { f[2] } else { 1.0 - f[2] };
                for dy in 0..2 {
                    let wy = if dy == 1 { f[1] } else { 1.0 - f[1] };
                    for dx in 0..2 {
                        let wx = if dx == 1 { f[0] } else { 1.0 - f[0] };
                        plane[(base[1] + dy) * n + base[0] + dx] += charge * wx * wy * wz;
                    }
                }
            }
        };
        if k > 0 {
            add(&bins[k - 1], true);
        }
        if k < n - 1 {
            add(&bins[k], false);
        }
    });
    Ok(mu)
}

/// Advances every particle by one RK4 step from time `t`.
pub fn push_all(
    ens: &mut ParticleEnsemble,
    field: &(impl FieldView + ?Sized),
    t: f64,
    dt: f64,
) -> Result<()> {
    ens.particles.par_iter_mut().try_for_each(|q| {
        let s = push(&PhaseState::new(q.x, q.p, t), dt, field)?;
        q.x = s.x;
        q.p = s.p;
        Ok(())
    })
}

/// `w = w0 exp(4 (phi(t, x) - phi0_in(x0)))` for every particle.
pub fn update_weights(
    ens: &mut ParticleEnsemble,
    field: &(impl FieldView + ?Sized),
    t: f64,
    data: &InitialData,
) -> Result<()> {
    ens.particles.par_iter_mut().try_for_each(|q| {
        let phi = field.sample(t, &q.x)?.phi;
        q.w = q.w0 * (4.0 * (phi - data.phi0(&q.x0))).exp();
        Ok(())
    })
}

/// `f(t, x, p)` by tracing the characteristic back to `t = 0`.
pub fn evaluate_f(
    t: f64,
    x: &Vector3<f64>,
    p: &Vector3<f64>,
    data: &InitialData,
    field: &(impl FieldView + ?Sized),
    dt: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(data.f_value(x, p));
    }
    let (x0, p0) = backward_trace(t, x, p, field, dt)?;
    let f0 = data.f_value(&x0, &p0);
    if f0 == 0.0 {
        return Ok(0.0);
    }
    let phi = field.sample(t, x)?.phi;
    Ok(f0 * (4.0 * (phi - data.phi0(&x0))).exp())
}

/// Options of the coupled loop.
#[derive(Clone, Debug)]
pub struct LoopOptions {
    pub h: f64,
    pub dt: f64,
    pub pad: f64,
    /// When false particles stream freely and keep their weights; the field
    /// is still advanced with the deposited source.
    pub coupling: bool,
    /// Keep a field snapshot every this many steps (0 disables).
    pub history_stride: usize,
    /// Keep every deposited source level.
    pub keep_source: bool,
}

/// Particles, field and histories at a common time.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub data: InitialData,
    pub ens: ParticleEnsemble,
    pub grid: FieldGrid,
    pub history: SnapshotSeries,
    pub source: GridSourceHistory,
    pub opts: LoopOptions,
}

impl CoupledState {
    pub fn new(data: InitialData, ens: ParticleEnsemble, opts: LoopOptions) -> Result<Self> {
        let mut grid = FieldGrid::new(opts.h, opts.dt, data.support_radius, opts.pad)?;
        let mu0 = deposit_mu(&ens, &grid.lattice())?;
        grid.start(&data, &mu0)?;
        let mut state = Self {
            data,
            ens,
            grid,
            history: SnapshotSeries::new(),
            source: GridSourceHistory::new(),
            opts,
        };
        state.record_histories(mu0)?;
        Ok(state)
    }

    pub fn t(&self) -> f64 {
        self.grid.t()
    }

    pub fn steps(&self) -> u64 {
        self.grid.steps()
    }

    fn record_histories(&mut self, mu: Vec<f64>) -> Result<()> {
        let stride = self.opts.history_stride as u64;
        if stride > 0 && self.grid.steps().is_multiple_of(stride) {
            self.history.push(FieldSnapshot::from_grid(&self.grid))?;
        }
        if self.opts.keep_source {
            self.source.push(self.grid.t(), self.grid.lattice(), mu)?;
        }
        Ok(())
    }

    /// Push, reweight, deposit, advance the field, record.
    pub fn step(&mut self) -> Result<()> {
        let (t, dt) = (self.grid.t(), self.grid.dt());
        if self.opts.coupling {
            let window = self.grid.window();
            push_all(&mut self.ens, &window, t, dt)?;
            update_weights(&mut self.ens, &window, t + dt, &self.data)?;
        } else {
            push_all(&mut self.ens, &ZeroField, t, dt)?;
        }
        if !self.ens.is_finite() {
            return Err(Error::NonFinite {
                what: "particles".into(),
                t: t + dt,
                checkpoint: None,
            });
        }
        let lat = self.grid.lattice_for_next_step();
        let mu = deposit_mu(&self.ens, &lat)?;
        self.grid.fdtd_step(&mu)?;
        let mu = if self.opts.keep_source {
            self.grid.mu().to_vec()
        } else {
            Vec::new()
        };
        self.record_histories(mu)
    }

    /// Adds a snapshot at the current time if the stride skipped it.
    pub fn close_history(&mut self) -> Result<()> {
        if self.opts.history_stride == 0 {
            return Ok(());
        }
        if self.history.snapshots().last().map(|s| s.t) != Some(self.t()) {
            self.history.push(FieldSnapshot::from_grid(&self.grid))?;
        }
        Ok(())
    }
}
