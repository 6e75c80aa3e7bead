//! Pointwise sphere-mean formulas for the field generated by the initial data.
//!
//! All integrals are written over unit directions `w` with `y = x + t w`, so
//! the `1/t` prefactors of the surface form are absorbed into `dS_y = t^2 dw`.

use crate::error::{Error, Result};
use crate::profiles::{BumpProfile, InitialData};
use crate::quadrature::{cap_nodes, gauss_legendre, sphere_ball_cap, SphereRule};
use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

/// Quadrature orders for the sphere-mean formulas.
#[derive(Clone, Debug)]
pub struct KirchhoffRule {
    /// Gauss-Legendre nodes in `cos(theta)` over the intersected cap.
    pub n_theta: usize,
    pub n_phi: usize,
    /// Radial nodes of the momentum ball.
    pub n_radial: usize,
    /// Angular rule of the momentum ball.
    pub momentum_theta: usize,
    pub momentum_phi: usize,
    /// Below this time the Taylor expansion in `t` is used instead.
    pub taylor_below: f64,
}

impl Default for KirchhoffRule {
    fn default() -> Self {
        Self {
            n_theta: 24,
            n_phi: 32,
            n_radial: 12,
            momentum_theta: 8,
            momentum_phi: 16,
            taylor_below: 1e-9,
        }
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn a3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn m3(h: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| h[i][j])
}

/// Sum over cap nodes of the sphere `|y - x| = t` meeting the support of `b`.
fn over_cap(
    b: &BumpProfile<3>,
    t: f64,
    x: &Vector3<f64>,
    rule: &KirchhoffRule,
    mut integrand: impl FnMut(&Vector3<f64>, &Vector3<f64>) -> f64,
) -> f64 {
    if b.is_zero() {
        return 0.0;
    }
    let Some((axis, cos_min)) = sphere_ball_cap(x, t, &v3(b.center), b.radius) else {
        return 0.0;
    };
    let mut sum = 0.0;
    cap_nodes(&axis, cos_min, rule.n_theta, rule.n_phi, |w, weight| {
        sum += weight * integrand(&(x + w * t), &w);
    });
    sum
}

/// Solution of the homogeneous wave equation with data `(phi0_in, phi1_in)`.
pub fn kirchhoff_homogeneous(
    t: f64,
    x: &Vector3<f64>,
    data: &InitialData,
    rule: &KirchhoffRule,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    let (b0, b1) = (&data.phi0_in, &data.phi1_in);
    if t < rule.taylor_below {
        let y = a3(x);
        return Ok(b0.value(&y)
            + t * b1.value(&y)
            + 0.5 * t * t * b0.laplacian(&y)
            + t * t * t / 6.0 * b1.laplacian(&y));
    }
    let from_phi0 = over_cap(b0, t, x, rule, |y, w| {
        let y = a3(y);
        b0.value(&y) + t * v3(b0.gradient(&y)).dot(w)
    });
    let from_phi1 = over_cap(b1, t, x, rule, |y, _| b1.value(&a3(y)));
    Ok((from_phi0 + t * from_phi1) / (4.0 * PI))
}

/// The three pieces of the explicit data part of `dt phi`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DataTerm {
    /// Term carried by `f_in` through the kernel `1 / (1 + w . p_hat)`.
    pub f_term: f64,
    pub phi1_term: f64,
    pub phi0_term: f64,
}

impl DataTerm {
    pub fn total(&self) -> f64 {
        self.f_term + self.phi1_term + self.phi0_term
    }
}

/// Momentum integral of `f_in(y, p) / ((1 + w . p_hat) sqrt(1 + p^2))`.
fn momentum_integral(
    data: &InitialData,
    y: &Vector3<f64>,
    w: &Vector3<f64>,
    radial: &(Vec<f64>, Vec<f64>),
    sphere: &SphereRule,
) -> f64 {
    let (cx, r) = data.f_position_ball();
    let s2 = (y - cx).norm_squared();
    let rho2 = r * r - s2;
    if rho2 <= 0.0 {
        return 0.0;
    }
    let rho = rho2.sqrt();
    let cp = data.f_momentum_center();
    let mut sum = 0.0;
    for (u, wu) in radial.0.iter().zip(&radial.1) {
        let q = 0.5 * rho * (u + 1.0);
        let radial_weight = 0.5 * rho * wu * q * q;
        for (d, wd) in sphere.directions.iter().zip(&sphere.weights) {
            let p = cp + d * q;
            let gamma = (1.0 + p.norm_squared()).sqrt();
            let kernel = 1.0 / ((1.0 + w.dot(&(p / gamma))) * gamma);
            sum += radial_weight * wd * data.f_value(y, &p) * kernel;
        }
    }
    sum
}

/// Explicit data part of `dt phi` at `(t, x)`.
pub fn data_term_dt_phi(
    t: f64,
    x: &Vector3<f64>,
    data: &InitialData,
    rule: &KirchhoffRule,
) -> Result<DataTerm> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    let (b0, b1) = (&data.phi0_in, &data.phi1_in);

    let mut f_term = 0.0;
    if !data.f_in.is_zero() {
        let (cx, r) = data.f_position_ball();
        if let Some((axis, cos_min)) = sphere_ball_cap(x, t, &cx, r) {
            let radial = gauss_legendre(rule.n_radial);
            let sphere = SphereRule::new(rule.momentum_theta, rule.momentum_phi);
            cap_nodes(&axis, cos_min, rule.n_theta, rule.n_phi, |w, weight| {
                f_term += weight * momentum_integral(data, &(x + w * t), &w, &radial, &sphere);
            });
        }
        f_term *= -t;
    }

    let phi1_term = over_cap(b1, t, x, rule, |y, w| {
        let y = a3(y);
        b1.value(&y) + t * v3(b1.gradient(&y)).dot(w)
    }) / (4.0 * PI);
    let phi0_term = over_cap(b0, t, x, rule, |y, w| {
        let y = a3(y);
        2.0 * v3(b0.gradient(&y)).dot(w) + t * w.dot(&(m3(b0.hessian(&y)) * w))
    }) / (4.0 * PI);
    Ok(DataTerm {
        f_term,
        phi1_term,
        phi0_term,
    })
}
