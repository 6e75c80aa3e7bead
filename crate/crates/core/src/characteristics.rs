//! Characteristic flow of the Vlasov equation,
//! `dx/ds = p_hat`, `dp/ds = -(S phi) p - (1 + p^2)^(-1/2) grad phi`,
//! with `S phi = dt phi + p_hat . grad phi`, integrated by classical RK4.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix6, Vector3};

/// Field value and first derivatives at one space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub phi: f64,
    pub dt_phi: f64,
    pub grad: Vector3<f64>,
}

/// Mixed and spatial second derivatives used by the variational equations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSecond {
    pub grad_dt: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

/// Read-only access to `phi` and its derivatives over a time slab.
pub trait FieldView: Sync {
    /// Closed interval of times at which the view can be evaluated.
    fn time_range(&self) -> (f64, f64);

    fn sample(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSample>;

    fn second(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSecond>;

    fn check_time(&self, t: f64) -> Result<()> {
        let (start, end) = self.time_range();
        let slack = 1e-9 * (1.0 + end.abs());
        if t < start - slack || t > end + slack {
            Err(Error::OutOfHistory { t, start, end })
        } else {
            Ok(())
        }
    }
}

/// `phi = 0` everywhere and at all times.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl FieldView for ZeroField {
    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn sample(&self, _t: f64, _x: &Vector3<f64>) -> Result<FieldSample> {
        Ok(FieldSample::default())
    }

    fn second(&self, _t: f64, _x: &Vector3<f64>) -> Result<FieldSecond> {
        Ok(FieldSecond::default())
    }
}

/// Field given in closed form by a closure returning all derivatives.
pub struct AnalyticField<F> {
    f: F,
    range: (f64, f64),
}

impl<F> AnalyticField<F>
where
    F: Fn(f64, &Vector3<f64>) -> (FieldSample, FieldSecond) + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            range: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn with_time_range(f: F, start: f64, end: f64) -> Self {
        Self {
            f,
            range: (start, end),
        }
    }
}

impl<F> FieldView for AnalyticField<F>
where
    F: Fn(f64, &Vector3<f64>) -> (FieldSample, FieldSecond) + Sync,
{
    fn time_range(&self) -> (f64, f64) {
        self.range
    }

    fn sample(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSample> {
        self.check_time(t)?;
        Ok((self.f)(t, x).0)
    }

    fn second(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSecond> {
        self.check_time(t)?;
        Ok((self.f)(t, x).1)
    }
}

/// Smooth manufactured field `a sin(omega t) exp(-|x - c|^2 / w^2)`.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedField {
    pub amplitude: f64,
    pub omega: f64,
    pub width: f64,
    pub center: Vector3<f64>,
}

impl ManufacturedField {
    /// Spatial envelope with its gradient and Hessian.
    fn envelope(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let z = x - self.center;
        let w2 = self.width * self.width;
        let g = (-z.norm_squared() / w2).exp();
        let grad = -z * (2.0 / w2) * g;
        let hess = (z * z.transpose() * (4.0 / (w2 * w2)) - Matrix3::identity() * (2.0 / w2)) * g;
        (g, grad, hess)
    }
}

impl FieldView for ManufacturedField {
    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn sample(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSample> {
        let (g, grad_g, _) = self.envelope(x);
        let (s, c) = (self.omega * t).sin_cos();
        Ok(FieldSample {
            phi: self.amplitude * s * g,
            dt_phi: self.amplitude * self.omega * c * g,
            grad: grad_g * (self.amplitude * s),
        })
    }

    fn second(&self, t: f64, x: &Vector3<f64>) -> Result<FieldSecond> {
        let (_, grad_g, hess_g) = self.envelope(x);
        let (s, c) = (self.omega * t).sin_cos();
        Ok(FieldSecond {
            grad_dt: grad_g * (self.amplitude * self.omega * c),
            hess: hess_g * (self.amplitude * s),
        })
    }
}

/// Point in phase space at a given time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub x: Vector3<f64>,
    pub p: Vector3<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: Vector3<f64>, p: Vector3<f64>, t: f64) -> Self {
        Self { x, p, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// Relativistic velocity `p / sqrt(1 + |p|^2)`.
#[inline]
pub fn rel_velocity(p: &Vector3<f64>) -> Vector3<f64> {
    p / (1.0 + p.norm_squared()).sqrt()
}

/// `d p_hat / d p = (1 + p^2)^(-1/2) (I - p_hat p_hat^T)`.
pub fn velocity_jacobian(p: &Vector3<f64>) -> Matrix3<f64> {
    let inv_gamma = 1.0 / (1.0 + p.norm_squared()).sqrt();
    let v = p * inv_gamma;
    (Matrix3::identity() - v * v.transpose()) * inv_gamma
}

/// Momentum rate for a given field sample.
#[inline]
pub fn force_from_sample(sample: &FieldSample, p: &Vector3<f64>) -> Vector3<f64> {
    let inv_gamma = 1.0 / (1.0 + p.norm_squared()).sqrt();
    let v = p * inv_gamma;
    let s_phi = sample.dt_phi + v.dot(&sample.grad);
    -p * s_phi - sample.grad * inv_gamma
}

pub fn force(state: &PhaseState, field: &(impl FieldView + ?Sized)) -> Result<Vector3<f64>> {
    let s = field.sample(state.t, &state.x)?;
    Ok(force_from_sample(&s, &state.p))
}

/// One classical RK4 step of length `dt` (negative for backward steps).
pub fn push(state: &PhaseState, dt: f64, field: &(impl FieldView + ?Sized)) -> Result<PhaseState> {
    if dt == 0.0 {
        return Err(Error::InvalidArgument("push requires dt != 0".into()));
    }
    let PhaseState { x, p, t } = *state;
    let rhs = |tt: f64, xx: &Vector3<f64>, pp: &Vector3<f64>| -> Result<(Vector3<f64>, Vector3<f64>)> {
        let s = field.sample(tt, xx)?;
        Ok((rel_velocity(pp), force_from_sample(&s, pp)))
    };
    let (k1x, k1p) = rhs(t, &x, &p)?;
    let (k2x, k2p) = rhs(t + 0.5 * dt, &(x + k1x * (0.5 * dt)), &(p + k1p * (0.5 * dt)))?;
    let (k3x, k3p) = rhs(t + 0.5 * dt, &(x + k2x * (0.5 * dt)), &(p + k2p * (0.5 * dt)))?;
    let (k4x, k4p) = rhs(t + dt, &(x + k3x * dt), &(p + k3p * dt))?;
    Ok(PhaseState {
        x: x + (k1x + (k2x + k3x) * 2.0 + k4x) * (dt / 6.0),
        p: p + (k1p + (k2p + k3p) * 2.0 + k4p) * (dt / 6.0),
        t: t + dt,
    })
}

/// Uniform step count and length covering `[0, t]` with steps no longer than `dt`.
fn step_plan(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let n = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, t / n as f64))
}

/// Integrates the characteristic through `(t, x, p)` back to `s = 0`.
pub fn backward_trace(
    t: f64,
    x: &Vector3<f64>,
    p: &Vector3<f64>,
    field: &(impl FieldView + ?Sized),
    dt: f64,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    if t == 0.0 {
        return Ok((*x, *p));
    }
    let (n, h) = step_plan(t, dt)?;
    let mut state = PhaseState::new(*x, *p, t);
    for i in 0..n {
        state = push(&state, -h, field)?;
        // Re-anchor the clock to avoid drifting below zero.
        state.t = t - (i + 1) as f64 * h;
    }
    Ok((state.x, state.p))
}

fn variational_rhs(
    field: &(impl FieldView + ?Sized),
    t: f64,
    x: &Vector3<f64>,
    p: &Vector3<f64>,
    jac: &Matrix6<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>, Matrix6<f64>)> {
    let s = field.sample(t, x)?;
    let sec = field.second(t, x)?;
    let inv_gamma = 1.0 / (1.0 + p.norm_squared()).sqrt();
    let v = p * inv_gamma;
    let m = velocity_jacobian(p);
    let s_phi = s.dt_phi + v.dot(&s.grad);
    let fx = -(p * (sec.grad_dt + sec.hess * v).transpose()) - sec.hess * inv_gamma;
    let fp = -(p * (m * s.grad).transpose()) - Matrix3::identity() * s_phi
        + s.grad * p.transpose() * inv_gamma.powi(3);
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&m);
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&fx);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&fp);
    Ok((v, -p * s_phi - s.grad * inv_gamma, a * jac))
}

/// Derivative of `(X(0), P(0))` with respect to `(x, p)` at time `t`,
/// from the variational equations integrated alongside the characteristic.
pub fn flow_jacobian(
    t: f64,
    x: &Vector3<f64>,
    p: &Vector3<f64>,
    field: &(impl FieldView + ?Sized),
    dt: f64,
) -> Result<Matrix6<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    let mut jac = Matrix6::identity();
    if t == 0.0 {
        return Ok(jac);
    }
    let (n, step) = step_plan(t, dt)?;
    let h = -step;
    let (mut xs, mut ps) = (*x, *p);
    for i in 0..n {
        let s0 = t - i as f64 * step;
        let (k1x, k1p, k1j) = variational_rhs(field, s0, &xs, &ps, &jac)?;
        let (k2x, k2p, k2j) = variational_rhs(
            field,
            s0 + 0.5 * h,
            &(xs + k1x * (0.5 * h)),
            &(ps + k1p * (0.5 * h)),
            &(jac + k1j * (0.5 * h)),
        )?;
        let (k3x, k3p, k3j) = variational_rhs(
            field,
            s0 + 0.5 * h,
            &(xs + k2x * (0.5 * h)),
            &(ps + k2p * (0.5 * h)),
            &(jac + k2j * (0.5 * h)),
        )?;
        let (k4x, k4p, k4j) = variational_rhs(
            field,
            s0 + h,
            &(xs + k3x * h),
            &(ps + k3p * h),
            &(jac + k3j * h),
        )?;
        xs += (k1x + (k2x + k3x) * 2.0 + k4x) * (h / 6.0);
        ps += (k1p + (k2p + k3p) * 2.0 + k4p) * (h / 6.0);
        jac += (k1j + (k2j + k3j) * 2.0 + k4j) * (h / 6.0);
    }
    Ok(jac)
}
