//! Gauss-Legendre rules and product quadrature on the unit sphere.

use nalgebra::Vector3;
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)`,
/// trapezoid in azimuth. Weights sum to `4 pi`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub directions: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        cap_nodes(&Vector3::z(), -1.0, n_theta, n_phi, |d, w| {
            directions.push(d);
            weights.push(w);
        });
        Self {
            directions,
            weights,
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(&Vector3<f64>) -> f64) -> f64 {
        self.directions
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * f(d))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Two unit vectors completing `axis` to an orthonormal frame.
pub fn orthonormal_frame(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Visits nodes of a product rule over the cap `{w : w . axis >= cos_min}`.
pub fn cap_nodes(
    axis: &Vector3<f64>,
    cos_min: f64,
    n_theta: usize,
    n_phi: usize,
    mut visit: impl FnMut(Vector3<f64>, f64),
) {
    let cos_min = cos_min.clamp(-1.0, 1.0);
    if cos_min >= 1.0 {
        return;
    }
    let (e1, e2) = orthonormal_frame(axis);
    let (xi, wi) = gauss_legendre(n_theta);
    let half = 0.5 * (1.0 - cos_min);
    let dphi = 2.0 * PI / n_phi as f64;
    for (x, w) in xi.iter().zip(&wi) {
        let c = cos_min + half * (x + 1.0);
        let s = (1.0 - c * c).max(0.0).sqrt();
        for j in 0..n_phi {
            let ph = (j as f64 + 0.5) * dphi;
            let dir = axis * c + (e1 * ph.cos() + e2 * ph.sin()) * s;
            visit(dir, w * half * dphi);
        }
    }
}

/// Cosine of the half-angle of the cap of directions `w` for which
/// `x + t w` lies inside the ball `|y - center| <= radius`, together with the
/// cap axis. `None` when the sphere misses the ball.
pub fn sphere_ball_cap(
    x: &Vector3<f64>,
    t: f64,
    center: &Vector3<f64>,
    radius: f64,
) -> Option<(Vector3<f64>, f64)> {
    let offset = center - x;
    let d = offset.norm();
    if d < 1e-14 * (1.0 + radius) {
        return if t < radius {
            Some((Vector3::z(), -1.0))
        } else {
            None
        };
    }
    let cos_min = (t * t + d * d - radius * radius) / (2.0 * t * d);
    if cos_min >= 1.0 {
        None
    } else {
        Some((offset / d, cos_min.max(-1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(integral, 2.0 / 13.0, max_relative = 1e-13);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        let (x, w) = gauss_legendre(64);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * (3.0 * x).cos()).sum();
        assert_relative_eq!(integral, 2.0 * 3f64.sin() / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn sphere_rule_moments() {
        let rule = SphereRule::new(12, 24);
        assert_relative_eq!(rule.integrate(|_| 1.0), 4.0 * PI, max_relative = 1e-13);
        assert_relative_eq!(rule.integrate(|d| d.x * d.x), 4.0 * PI / 3.0, max_relative = 1e-12);
        assert!(rule.integrate(|d| d.y).abs() < 1e-13);
    }

    #[test]
    fn cap_area() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let mut area = 0.0;
        cap_nodes(&axis, 0.3, 8, 16, |_, w| area += w);
        assert_relative_eq!(area, 2.0 * PI * 0.7, max_relative = 1e-13);
    }

    #[test]
    fn cap_of_sphere_ball_intersection() {
        let x = Vector3::zeros();
        let c = Vector3::new(3.0, 0.0, 0.0);
        assert!(sphere_ball_cap(&x, 1.0, &c, 1.0).is_none());
        assert!(sphere_ball_cap(&x, 5.0, &c, 1.0).is_none());
        let (axis, cmin) = sphere_ball_cap(&x, 3.0, &c, 1.0).unwrap();
        assert_relative_eq!(axis.x, 1.0);
        // Boundary point of the cap lies on the ball surface.
        let s = (1.0 - cmin * cmin).sqrt();
        let y = Vector3::new(3.0 * cmin, 3.0 * s, 0.0);
        assert_relative_eq!((y - c).norm(), 1.0, max_relative = 1e-12);
        let (_, full) = sphere_ball_cap(&c, 0.5, &c, 1.0).unwrap();
        assert_eq!(full, -1.0);
    }
}
