//! Measured quantities of a run: field derivative sizes K and L, the source
//! sup norm, momentum support and spread, free-streaming margins, decay fits
//! and properties of the characteristic flow.

use crate::characteristics::{backward_trace, flow_jacobian, rel_velocity, FieldView};
use crate::error::{Error, Result};
use crate::vlasov_pic::ParticleEnsemble;
use crate::wavefield::FieldGrid;
use nalgebra::Vector3;
use serde::Serialize;
use std::collections::HashMap;

/// `(1 + R + t + |x|)^a (1 + R + t - |x|)^b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeWeight {
    pub radius: f64,
    pub a: f64,
    pub b: f64,
}

impl ConeWeight {
    pub fn new(radius: f64, a: f64, b: f64) -> Self {
        Self { radius, a, b }
    }

    pub fn eval(&self, t: f64, x: &Vector3<f64>) -> f64 {
        let r = x.norm();
        let s = 1.0 + self.radius + t;
        (s + r).powf(self.a) * (s - r).powf(self.b)
    }
}

/// `|dt phi| + |grad phi|` at each probe.
pub fn measure_k(grid: &FieldGrid, probes: &[Vector3<f64>]) -> Result<Vec<f64>> {
    probes
        .iter()
        .map(|x| {
            let d = grid.field_derivatives(x)?;
            Ok(d.dt.abs() + d.grad.norm())
        })
        .collect()
}

/// `|dtt phi| + |grad dt phi| + max_ij |d_ij phi|` at each probe.
pub fn measure_l(grid: &FieldGrid, probes: &[Vector3<f64>]) -> Result<Vec<f64>> {
    probes
        .iter()
        .map(|x| {
            let d = grid.field_derivatives(x)?;
            Ok(d.dtt.abs() + d.grad_dt.norm() + d.hess.abs().max())
        })
        .collect()
}

pub fn sup_mu(grid: &FieldGrid) -> f64 {
    grid.mu().iter().fold(0.0f64, |a, v| a.max(*v))
}

/// Largest `|p|` over particles with positive weight.
pub fn momentum_support(ens: &ParticleEnsemble) -> f64 {
    ens.particles
        .iter()
        .filter(|q| q.w > 0.0)
        .map(|q| q.p.norm())
        .fold(0.0, f64::max)
}

/// Largest `|x|` over particles with positive weight.
pub fn spatial_support(ens: &ParticleEnsemble) -> f64 {
    ens.particles
        .iter()
        .filter(|q| q.w > 0.0)
        .map(|q| q.x.norm())
        .fold(0.0, f64::max)
}

/// Axis-aligned spatial box `lo <= x < hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialCell {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl SpatialCell {
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        (0..3).all(|a| x[a] >= self.lo[a] && x[a] < self.hi[a])
    }
}

#[derive(Clone, Copy, Debug)]
struct MomentumBox {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    count: usize,
}

impl MomentumBox {
    fn new(p: &Vector3<f64>) -> Self {
        Self {
            lo: *p,
            hi: *p,
            count: 1,
        }
    }

    fn add(&mut self, p: &Vector3<f64>) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
        self.count += 1;
    }

    fn volume(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let d = self.hi - self.lo;
        d.x * d.y * d.z
    }
}

/// Volume of the bounding box of the momenta of weighted particles in `cell`.
pub fn momentum_spread(ens: &ParticleEnsemble, cell: &SpatialCell) -> f64 {
    let mut acc: Option<MomentumBox> = None;
    for q in ens.particles.iter().filter(|q| q.w > 0.0 && cell.contains(&q.x)) {
        match acc.as_mut() {
            Some(b) => b.add(&q.p),
            None => acc = Some(MomentumBox::new(&q.p)),
        }
    }
    acc.map_or(0.0, |b| b.volume())
}

/// Maximum of [`momentum_spread`] over the cubic cells of side `cell_size`
/// aligned with the origin.
pub fn max_momentum_spread(ens: &ParticleEnsemble, cell_size: f64) -> f64 {
    let mut boxes: HashMap<[i64; 3], MomentumBox> = HashMap::new();
    for q in ens.particles.iter().filter(|q| q.w > 0.0) {
        let key = [0, 1, 2].map(|a| (q.x[a] / cell_size).floor() as i64);
        boxes
            .entry(key)
            .and_modify(|b| b.add(&q.p))
            .or_insert_with(|| MomentumBox::new(&q.p));
    }
    boxes.values().map(MomentumBox::volume).fold(0.0, f64::max)
}

/// One measurement of K and L at a space-time point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FscSample {
    pub t: f64,
    pub x: Vector3<f64>,
    pub k: f64,
    pub l: f64,
}

/// K and L divided by their free-streaming weights, without the factor `eta`.
pub fn fsc_ratios(s: &FscSample, beta: f64, radius: f64) -> (f64, f64) {
    let wk = ConeWeight::new(radius, -beta, -beta).eval(s.t, &s.x);
    let wl = ConeWeight::new(radius, -beta, -beta - 1.0).eval(s.t, &s.x);
    (s.k / wk, s.l / wl)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FscReport {
    pub beta: f64,
    pub eta: f64,
    pub worst_k: f64,
    pub worst_l: f64,
    pub satisfied: bool,
    /// `(t, [x, y, z])` of the first sample with a margin above one.
    pub first_violation: Option<(f64, [f64; 3])>,
}

pub fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.5 && beta < 0.75) {
        return Err(Error::InvalidArgument(format!(
            "beta = {beta} is outside the open interval (1/2, 3/4)"
        )));
    }
    Ok(())
}

/// Margins `K / (eta w_K)` and `L / (eta w_L)` over all samples, in order.
pub fn check_fsc(samples: &[FscSample], beta: f64, eta: f64, radius: f64) -> Result<FscReport> {
    check_beta(beta)?;
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let mut report = FscReport {
        beta,
        eta,
        worst_k: 0.0,
        worst_l: 0.0,
        satisfied: true,
        first_violation: None,
    };
    for s in samples {
        let (rk, rl) = fsc_ratios(s, beta, radius);
        let (mk, ml) = (rk / eta, rl / eta);
        report.worst_k = report.worst_k.max(mk);
        report.worst_l = report.worst_l.max(ml);
        if (mk > 1.0 || ml > 1.0) && report.first_violation.is_none() {
            report.satisfied = false;
            report.first_violation = Some((s.t, [s.x.x, s.x.y, s.x.z]));
        }
    }
    Ok(report)
}

/// Least-squares line through `(log(1 + t), log value)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo >= 0.0) || !(hi >= 4.0 * lo) || !(hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "fit window [{lo}, {hi}] must satisfy t_hi >= 4 t_lo"
        )));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .copied()
        .collect();
    if pts.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "fit needs at least 8 points in the window, got {}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive value {v} at t = {t}")));
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|(t, v)| ((1.0 + t).ln(), v.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xy
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(DecayFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        slope_stderr: (ss / (n - 2.0) / sxx).sqrt(),
        window,
        points: xy.len(),
    })
}

/// Pair of characteristics through the same point with different momenta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersionSample {
    pub t: f64,
    pub x: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub p2: Vector3<f64>,
}

/// `|p_hat1 - p_hat2| / |p1 - p2|`, the dispersion ratio of free flow.
pub fn free_dispersion_ratio(p1: &Vector3<f64>, p2: &Vector3<f64>) -> f64 {
    (rel_velocity(p1) - rel_velocity(p2)).norm() / (p1 - p2).norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DispersionReport {
    /// Minimum of `|X1(0) - X2(0)| / (|p1 - p2| t)`.
    pub min_ratio: f64,
    /// Minimum of that ratio divided by its free-flow value.
    pub min_relative: f64,
    pub samples: usize,
}

/// Dispersion of backward characteristics; samples with `t < 1` are skipped.
pub fn dispersion_check(
    field: &(impl FieldView + ?Sized),
    samples: &[DispersionSample],
    dt: f64,
) -> Result<DispersionReport> {
    let mut report = DispersionReport {
        min_ratio: f64::INFINITY,
        min_relative: f64::INFINITY,
        samples: 0,
    };
    for s in samples.iter().filter(|s| s.t >= 1.0) {
        let dp = (s.p1 - s.p2).norm();
        if dp == 0.0 {
            return Err(Error::InvalidArgument("dispersion sample with p1 = p2".into()));
        }
        let (x1, _) = backward_trace(s.t, &s.x, &s.p1, field, dt)?;
        let (x2, _) = backward_trace(s.t, &s.x, &s.p2, field, dt)?;
        let ratio = (x1 - x2).norm() / (dp * s.t);
        report.min_ratio = report.min_ratio.min(ratio);
        report.min_relative = report
            .min_relative
            .min(ratio / free_dispersion_ratio(&s.p1, &s.p2));
        report.samples += 1;
    }
    if report.samples == 0 {
        return Err(Error::InvalidArgument("no dispersion samples with t >= 1".into()));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JacobianBound {
    /// Largest entry of the columns `d/dx` (derivatives of X and P in x).
    pub x_block: f64,
    pub full: f64,
}

pub fn jacobian_bound(
    field: &(impl FieldView + ?Sized),
    samples: &[(f64, Vector3<f64>, Vector3<f64>)],
    dt: f64,
) -> Result<JacobianBound> {
    let mut out = JacobianBound {
        x_block: 0.0,
        full: 0.0,
    };
    for (t, x, p) in samples {
        let j = flow_jacobian(*t, x, p, field, dt)?;
        out.x_block = out.x_block.max(j.columns(0, 3).abs().max());
        out.full = out.full.max(j.abs().max());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ProbeKind {
    Origin,
    Interior,
    Cone,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub kind: ProbeKind,
    pub x: Vector3<f64>,
}

/// Axis and diagonal unit directions.
pub fn probe_directions() -> Vec<Vector3<f64>> {
    let mut dirs = Vec::with_capacity(14);
    for a in 0..3 {
        for s in [1.0, -1.0] {
            let mut v = Vector3::zeros();
            v[a] = s;
            dirs.push(v);
        }
    }
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                dirs.push(Vector3::new(sx, sy, sz) / 3f64.sqrt());
            }
        }
    }
    dirs
}

/// Origin, interior shells at the given fractions of `R + t`, and the cone
/// shell `|x| = R + t - h`, each along the axis and diagonal directions.
pub fn probe_set(radius: f64, t: f64, h: f64, shells: &[f64]) -> Vec<Probe> {
    let reach = radius + t;
    let mut out = vec![Probe {
        kind: ProbeKind::Origin,
        x: Vector3::zeros(),
    }];
    let dirs = probe_directions();
    for frac in shells {
        for d in &dirs {
            out.push(Probe {
                kind: ProbeKind::Interior,
                x: d * (frac * reach),
            });
        }
    }
    for d in &dirs {
        out.push(Probe {
            kind: ProbeKind::Cone,
            x: d * (reach - h).max(0.0),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::ZeroField;
    use crate::vlasov_pic::Particle;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn particles(ps: &[([f64; 3], [f64; 3])]) -> ParticleEnsemble {
        ParticleEnsemble {
            particles: ps
                .iter()
                .map(|(x, p)| Particle::new(Vector3::from(*x), Vector3::from(*p), 1.0))
                .collect(),
            cell_volume: 1.0,
        }
    }

    #[test]
    fn cone_weight_values() {
        let w = ConeWeight::new(1.0, -1.0, -1.0);
        assert_relative_eq!(w.eval(2.0, &Vector3::new(1.0, 0.0, 0.0)), 1.0 / (5.0 * 3.0));
        assert!(w.eval(2.0, &Vector3::new(3.0, 0.0, 0.0)) > 0.0);
    }

    #[test]
    fn k_and_l_on_manufactured_fields() {
        let probes = [Vector3::new(0.3, 0.1, -0.2), Vector3::zeros()];
        let zero = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |_, _| 0.0).unwrap();
        assert_eq!(measure_k(&zero, &probes).unwrap(), vec![0.0, 0.0]);
        assert_eq!(measure_l(&zero, &probes).unwrap(), vec![0.0, 0.0]);
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |t, _| t).unwrap();
        for k in measure_k(&g, &probes).unwrap() {
            assert_relative_eq!(k, 1.0, epsilon = 1e-12);
        }
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |t, x| t + x.x).unwrap();
        for k in measure_k(&g, &probes).unwrap() {
            assert_relative_eq!(k, 2.0, epsilon = 1e-12);
        }
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |t, _| t * t).unwrap();
        for l in measure_l(&g, &probes).unwrap() {
            assert_relative_eq!(l, 2.0, epsilon = 1e-12);
        }
        let g = FieldGrid::from_fn(0.5, 0.25, 6, 1.0, |_, x| x.x * x.x).unwrap();
        for l in measure_l(&g, &probes).unwrap() {
            assert_relative_eq!(l, 2.0, epsilon = 1e-12);
        }
        assert!(measure_k(&g, &[Vector3::new(2.9, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn momentum_support_and_spread_basics() {
        let empty = ParticleEnsemble::default();
        assert_eq!(momentum_support(&empty), 0.0);
        assert_eq!(max_momentum_spread(&empty, 1.0), 0.0);
        let cell = SpatialCell {
            lo: Vector3::zeros(),
            hi: Vector3::repeat(1.0),
        };
        let one = particles(&[([0.5; 3], [1.0, 2.0, 2.0])]);
        assert_eq!(momentum_support(&one), 3.0);
        assert_eq!(momentum_spread(&one, &cell), 0.0);
        let two = particles(&[([0.5; 3], [0.0; 3]), ([0.2; 3], [1.0, 2.0, 3.0]), ([5.0; 3], [9.0; 3])]);
        assert_relative_eq!(momentum_spread(&two, &cell), 6.0);
        assert_relative_eq!(max_momentum_spread(&two, 1.0), 6.0);
    }

    #[test]
    fn zero_weight_particles_are_ignored() {
        let mut e = particles(&[([0.5; 3], [1.0, 0.0, 0.0]), ([0.5; 3], [5.0, 5.0, 5.0])]);
        e.particles[1].w = 0.0;
        assert_eq!(momentum_support(&e), 1.0);
    }

    #[test]
    fn fsc_examples() {
        let beta = 0.6;
        let x = Vector3::new(1.0, 0.0, 0.0);
        let t = 2.0;
        let wk = ConeWeight::new(1.0, -beta, -beta).eval(t, &x);
        let wl = ConeWeight::new(1.0, -beta, -beta - 1.0).eval(t, &x);
        let zero = check_fsc(&[FscSample { t, x, k: 0.0, l: 0.0 }], beta, 0.1, 1.0).unwrap();
        assert!(zero.satisfied && zero.worst_k == 0.0);
        let edge = check_fsc(&[FscSample { t, x, k: 0.1 * wk, l: 0.1 * wl }], beta, 0.1, 1.0).unwrap();
        assert!(edge.satisfied);
        assert_relative_eq!(edge.worst_k, 1.0, max_relative = 1e-14);
        let over = check_fsc(&[FscSample { t, x, k: 0.2 * wk, l: 0.0 }], beta, 0.1, 1.0).unwrap();
        assert!(!over.satisfied);
        assert_relative_eq!(over.worst_k, 2.0, max_relative = 1e-14);
        assert_eq!(over.first_violation, Some((t, [1.0, 0.0, 0.0])));
        assert!(check_fsc(&[], 0.8, 0.1, 1.0).is_err());
        assert!(check_fsc(&[], 0.6, 0.0, 1.0).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let series: Vec<(f64, f64)> = (10..=100).map(|t| (t as f64, (1.0 + t as f64).powi(-3))).collect();
        let fit = fit_decay(&series, (10.0, 100.0)).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        let flat: Vec<(f64, f64)> = (10..=100).map(|t| (t as f64, 4.0)).collect();
        assert!(fit_decay(&flat, (10.0, 100.0)).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn fit_of_perturbed_series() {
        let series: Vec<(f64, f64)> = (0..=900)
            .map(|i| {
                let t = 10.0 + i as f64 * 0.1;
                (t, 5.0 * (1.0 + t).powi(-2) * (1.0 + 0.01 * t.sin()))
            })
            .collect();
        let fit = fit_decay(&series, (10.0, 100.0)).unwrap();
        assert!((fit.slope + 2.0).abs() < 0.02);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let few: Vec<(f64, f64)> = (10..15).map(|t| (t as f64, 1.0)).collect();
        assert!(fit_decay(&few, (10.0, 100.0)).is_err());
        let mut neg: Vec<(f64, f64)> = (10..=100).map(|t| (t as f64, 1.0)).collect();
        neg[3].1 = 0.0;
        assert!(fit_decay(&neg, (10.0, 100.0)).is_err());
        assert!(fit_decay(&neg, (10.0, 30.0)).is_err());
    }

    #[test]
    fn free_flow_dispersion_is_analytic() {
        let s = DispersionSample {
            t: 3.0,
            x: Vector3::new(0.2, 0.0, 0.0),
            p1: Vector3::new(0.5, 0.0, 0.0),
            p2: Vector3::new(-0.25, 0.0, 0.0),
        };
        let r = dispersion_check(&ZeroField, &[s], 0.1).unwrap();
        let expect = (0.5 / 1.25f64.sqrt() + 0.25 / 1.0625f64.sqrt()) / 0.75;
        assert_relative_eq!(r.min_ratio, expect, max_relative = 1e-12);
        assert_relative_eq!(r.min_relative, 1.0, max_relative = 1e-12);
        let early = DispersionSample { t: 0.5, ..s };
        assert!(dispersion_check(&ZeroField, &[early], 0.1).is_err());
    }

    #[test]
    fn jacobian_bound_examples() {
        let x = Vector3::new(0.1, 0.0, 0.0);
        let p = Vector3::new(0.3, 0.0, 0.0);
        let b = jacobian_bound(&ZeroField, &[(0.0, x, p)], 0.1).unwrap();
        assert_eq!(b.full, 1.0);
        let t = 5.0;
        let b = jacobian_bound(&ZeroField, &[(t, x, p)], 0.1).unwrap();
        assert_relative_eq!(b.x_block, 1.0, max_relative = 1e-12);
        assert_relative_eq!(b.full, t / 1.09f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn probes_stay_inside_the_reach() {
        let ps = probe_set(1.0, 4.0, 0.5, &[0.25, 0.5, 0.75]);
        assert_eq!(ps.len(), 1 + 3 * 14 + 14);
        for p in &ps {
            assert!(p.x.norm() <= 5.0 - 0.5 + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fsc_is_monotone_in_scaling(k in 0.0f64..1.0, l in 0.0f64..1.0, lambda in 1.0f64..10.0,
                                      t in 0.0f64..20.0, r in 0.0f64..1.0) {
            let x = Vector3::new(r * (1.0 + t), 0.0, 0.0);
            let base = check_fsc(&[FscSample { t, x, k, l }], 0.6, 0.3, 1.0).unwrap();
            let scaled = check_fsc(&[FscSample { t, x, k: k * lambda, l: l * lambda }], 0.6, 0.3, 1.0).unwrap();
            prop_assert!(!( !base.satisfied && scaled.satisfied));
        }

        #[test]
        fn spread_is_permutation_invariant_and_monotone(
            ps in proptest::collection::vec((0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..30),
            extra in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        ) {
            let pts: Vec<([f64; 3], [f64; 3])> = ps.iter().map(|(x, a, b, c)| ([*x, 0.5, 0.5], [*a, *b, *c])).collect();
            let cell = SpatialCell { lo: Vector3::zeros(), hi: Vector3::repeat(1.0) };
            let e = particles(&pts);
            let mut rev = pts.clone();
            rev.reverse();
            let v = momentum_spread(&e, &cell);
            prop_assert_eq!(v, momentum_spread(&particles(&rev), &cell));
            let mut more = pts.clone();
            more.push(([0.5; 3], [extra.0, extra.1, extra.2]));
            prop_assert!(momentum_spread(&particles(&more), &cell) >= v);
            let mut inside = pts.clone();
            inside.push(([0.5; 3], pts[0].1));
            prop_assert_eq!(momentum_spread(&particles(&inside), &cell), v);
        }
    }
}
