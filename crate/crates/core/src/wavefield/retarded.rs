//! Retarded potential of the source over the backward light cone.

use super::grid::Lattice;
use crate::error::{Error, Result};
use crate::quadrature::SphereRule;
use nalgebra::Vector3;
use std::f64::consts::PI;

/// Source `mu(s, y)` over a time interval.
pub trait SourceHistory: Sync {
    fn time_range(&self) -> (f64, f64);

    fn mu(&self, s: f64, y: &Vector3<f64>) -> Result<f64>;
}

/// Source given by a closure, defined for all `s >= 0`.
pub struct FnSource<F>(pub F);

impl<F: Fn(f64, &Vector3<f64>) -> f64 + Sync> SourceHistory for FnSource<F> {
    fn time_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn mu(&self, s: f64, y: &Vector3<f64>) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::OutOfHistory {
                t: s,
                start: 0.0,
                end: f64::INFINITY,
            });
        }
        Ok((self.0)(s, y))
    }
}

/// Deposited source levels, trilinear in space and linear in time.
#[derive(Clone, Debug, Default)]
pub struct GridSourceHistory {
    levels: Vec<(f64, Lattice, Vec<f64>)>,
}

impl GridSourceHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, lat: Lattice, mu: Vec<f64>) -> Result<()> {
        if mu.len() != lat.len() {
            return Err(Error::InvalidArgument("source level has wrong size".into()));
        }
        if self.levels.last().is_some_and(|l| l.0 >= t) {
            return Err(Error::InvalidArgument(format!("source level at t = {t} out of order")));
        }
        self.levels.push((t, lat, mu));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn memory_bytes(&self) -> usize {
        self.levels.iter().map(|l| 8 * l.2.len()).sum()
    }

    fn spatial(lat: &Lattice, mu: &[f64], y: &Vector3<f64>) -> f64 {
        let Some((base, frac)) = lat.cell_of(y) else {
            return 0.0;
        };
        let mut v = 0.0;
        for c in 0..8 {
            let d = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if d[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                v += w * mu[lat.idx(base[0] + d[0], base[1] + d[1], base[2] + d[2])];
            }
        }
        v
    }
}

impl SourceHistory for GridSourceHistory {
    fn time_range(&self) -> (f64, f64) {
        match (self.levels.first(), self.levels.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => (f64::NAN, f64::NAN),
        }
    }

    fn mu(&self, s: f64, y: &Vector3<f64>) -> Result<f64> {
        let (start, end) = self.time_range();
        let slack = 1e-9 * (1.0 + end.abs());
        if self.levels.is_empty() || s < start - slack || s > end + slack {
            return Err(Error::OutOfHistory { t: s, start, end });
        }
        let k = self.levels.partition_point(|l| l.0 < s);
        if k == 0 || self.levels[k.min(self.levels.len() - 1)].0 == s || k == self.levels.len() {
            let l = &self.levels[k.min(self.levels.len() - 1)];
            return Ok(Self::spatial(&l.1, &l.2, y));
        }
        let (a, b) = (&self.levels[k - 1], &self.levels[k]);
        let frac = (s - a.0) / (b.0 - a.0);
        Ok((1.0 - frac) * Self::spatial(&a.1, &a.2, y) + frac * Self::spatial(&b.1, &b.2, y))
    }
}

/// `-(1/4 pi) int_{|x - y| <= t} mu(t - |x - y|, y) / |x - y| dy`, by midpoint
/// shells of width at most `shell_width` and `sphere` on each shell.
pub fn retarded_potential(
    t: f64,
    x: &Vector3<f64>,
    hist: &(impl SourceHistory + ?Sized),
    shell_width: f64,
    sphere: &SphereRule,
) -> Result<f64> {
    if t < 0.0 || !(shell_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t >= 0 and a positive shell width, got {t} and {shell_width}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let n = ((t / shell_width) - 1e-9).ceil().max(1.0) as usize;
    let dr = t / n as f64;
    let mut total = 0.0;
    for j in 0..n {
        let r = (j as f64 + 0.5) * dr;
        let mut shell = 0.0;
        for (w, weight) in sphere.directions.iter().zip(&sphere.weights) {
            shell += weight * hist.mu(t - r, &(x + w * r))?;
        }
        total += dr * r * shell;
    }
    Ok(-total / (4.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_source() {
        let src = FnSource(|_s, _y: &Vector3<f64>| 0.0);
        let v = retarded_potential(2.0, &Vector3::zeros(), &src, 0.1, &SphereRule::new(4, 8)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn static_ball_at_center() {
        let src = FnSource(|_s, y: &Vector3<f64>| if y.norm() <= 1.0 { 1.0 } else { 0.0 });
        let sphere = SphereRule::new(4, 8);
        for t in [1.0, 1.5, 3.0] {
            let v = retarded_potential(t, &Vector3::zeros(), &src, 0.05, &sphere).unwrap();
            assert_relative_eq!(v, -0.5, max_relative = 0.01);
        }
    }

    #[test]
    fn pulse_arrives_at_light_speed() {
        // Compact pulse of radius a emitted during s in [0, tau].
        let (a, tau, d, width) = (0.3, 0.1, 3.0, 0.02);
        let src = FnSource(move |s: f64, y: &Vector3<f64>| {
            let r2 = y.norm_squared() / (a * a);
            if s <= tau && r2 < 1.0 {
                (1.0 - r2).powi(3)
            } else {
                0.0
            }
        });
        let sphere = SphereRule::new(64, 128);
        let x = Vector3::new(0.0, d, 0.0);
        let before = retarded_potential(d - a - 2.0 * width, &x, &src, width, &sphere).unwrap();
        let during = retarded_potential(d + 0.5 * tau, &x, &src, width, &sphere).unwrap();
        let after = retarded_potential(d + a + tau + 2.0 * width, &x, &src, width, &sphere).unwrap();
        assert_eq!(before, 0.0);
        assert!(during < 0.0);
        assert_eq!(after, 0.0);
    }

    #[test]
    fn grid_history_interpolates() {
        let lat = Lattice { h: 0.5, m: 4 };
        let level = |c: f64| -> Vec<f64> {
            (0..lat.len())
                .map(|i| {
                    let [a, b, k] = lat.unflatten(i);
                    c + lat.node(a, b, k).x
                })
                .collect()
        };
        let mut hist = GridSourceHistory::new();
        hist.push(0.0, lat, level(1.0)).unwrap();
        hist.push(1.0, lat, level(3.0)).unwrap();
        assert!(hist.push(0.5, lat, level(0.0)).is_err());
        let y = Vector3::new(0.3, 0.2, -0.1);
        assert_relative_eq!(hist.mu(0.25, &y).unwrap(), 1.5 + 0.3, epsilon = 1e-12);
        assert_relative_eq!(hist.mu(1.0, &y).unwrap(), 3.3, epsilon = 1e-12);
        assert_eq!(hist.mu(0.5, &Vector3::new(9.0, 0.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(hist.mu(1.5, &y), Err(Error::OutOfHistory { .. })));
        let empty = GridSourceHistory::new();
        assert!(empty.mu(0.0, &y).is_err());
    }

    #[test]
    fn history_gap_is_reported() {
        let mut hist = GridSourceHistory::new();
        let lat = Lattice { h: 0.5, m: 2 };
        hist.push(0.5, lat, vec![0.0; lat.len()]).unwrap();
        hist.push(1.0, lat, vec![0.0; lat.len()]).unwrap();
        let r = retarded_potential(1.0, &Vector3::zeros(), &hist, 0.1, &SphereRule::new(2, 4));
        assert!(matches!(r, Err(Error::OutOfHistory { .. })));
    }
}
