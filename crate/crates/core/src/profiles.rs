//! Compactly supported initial data.
//!
//! Every datum is a radial polynomial bump `A (1 - |y - c|^2 / r^2)^(k+1)`,
//! which is exactly `C^k` across the boundary of its support ball and has
//! closed-form derivatives of every order. The initial norm
//! `||f||_{1,inf} + ||phi0||_{3,inf} + ||phi1||_{2,inf}` is assembled from
//! those closed forms.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use serde::Serialize;

/// Radial polynomial bump in `R^D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpProfile<const D: usize> {
    pub center: [f64; D],
    pub radius: f64,
    pub amplitude: f64,
    pub smoothness: u32,
}

/// Builds a bump, validating its parameters.
pub fn make_bump<const D: usize>(
    center: [f64; D],
    radius: f64,
    amplitude: f64,
    k: u32,
) -> Result<BumpProfile<D>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bump radius must be positive, got {radius}"
        )));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bump amplitude must be non-negative, got {amplitude}"
        )));
    }
    if k < 1 {
        return Err(Error::InvalidArgument(
            "bump smoothness order must be at least 1".into(),
        ));
    }
    if center.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("bump center must be finite".into()));
    }
    Ok(BumpProfile {
        center,
        radius,
        amplitude,
        smoothness: k,
    })
}

/// `m (m-1) ... (m-j+1) u^(m-j)`, returning 0 whenever the falling factorial vanishes.
fn falling_pow(m: i32, j: i32, u: f64) -> f64 {
    let mut coef = 1.0;
    for i in 0..j {
        coef *= (m - i) as f64;
    }
    if coef == 0.0 {
        0.0
    } else {
        coef * u.powi(m - j)
    }
}

impl<const D: usize> BumpProfile<D> {
    pub fn zero(radius: f64, smoothness: u32) -> Self {
        Self {
            center: [0.0; D],
            radius,
            amplitude: 0.0,
            smoothness,
        }
    }

    fn power(&self) -> i32 {
        self.smoothness as i32 + 1
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            amplitude: self.amplitude * factor,
            ..*self
        }
    }

    /// Offset from the center and the normalized squared radius `|z|^2 / r^2`.
    fn local(&self, y: &[f64; D]) -> ([f64; D], f64) {
        let mut z = [0.0; D];
        let mut s = 0.0;
        for i in 0..D {
            z[i] = y[i] - self.center[i];
            s += z[i] * z[i];
        }
        (z, s / (self.radius * self.radius))
    }

    pub fn value(&self, y: &[f64; D]) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let (_, s) = self.local(y);
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - s).powi(self.power())
        }
    }

    pub fn gradient(&self, y: &[f64; D]) -> [f64; D] {
        let mut g = [0.0; D];
        if self.is_zero() {
            return g;
        }
        let (z, s) = self.local(y);
        if s >= 1.0 {
            return g;
        }
        let u = 1.0 - s;
        let r2 = self.radius * self.radius;
        let c = -self.amplitude * falling_pow(self.power(), 1, u) * 2.0 / r2;
        for i in 0..D {
            g[i] = c * z[i];
        }
        g
    }

    pub fn hessian(&self, y: &[f64; D]) -> [[f64; D]; D] {
        let mut h = [[0.0; D]; D];
        if self.is_zero() {
            return h;
        }
        let (z, s) = self.local(y);
        if s >= 1.0 {
            return h;
        }
        let u = 1.0 - s;
        let m = self.power();
        let r2 = self.radius * self.radius;
        let a2 = self.amplitude * falling_pow(m, 2, u) * 4.0 / (r2 * r2);
        let a1 = self.amplitude * falling_pow(m, 1, u) * 2.0 / r2;
        for i in 0..D {
            for j in 0..D {
                h[i][j] = a2 * z[i] * z[j] - if i == j { a1 } else { 0.0 };
            }
        }
        h
    }

    pub fn laplacian(&self, y: &[f64; D]) -> f64 {
        let h = self.hessian(y);
        (0..D).map(|i| h[i][i]).sum()
    }

    /// True when the support lies inside the closed ball `B_R(0)`; empty supports always pass.
    pub fn support_within(&self, support_radius: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        let c = self.center.iter().map(|v| v * v).sum::<f64>().sqrt();
        c + self.radius <= support_radius * (1.0 + 1e-12)
    }

    /// Frobenius norm of the order-`order` derivative tensor at normalized radius `rho = |z|/r`.
    ///
    /// The profile is radial, so the norm depends on `rho` only; it is evaluated
    /// along the first coordinate axis. Orders 0 through 3 are supported.
    pub fn radial_derivative_norm(&self, order: usize, rho: f64) -> f64 {
        if self.is_zero() || rho >= 1.0 {
            return 0.0;
        }
        let amp = self.amplitude;
        let m = self.power();
        let r = self.radius;
        let u = 1.0 - rho * rho;
        // Derivatives of s = |z|^2/r^2 along e1: first = a e1, second = b I.
        let a = 2.0 * rho / r;
        let b = 2.0 / (r * r);
        let rest = (D - 1) as f64;
        match order {
            0 => amp * u.powi(m),
            1 => amp * falling_pow(m, 1, u) * a,
            2 => {
                let h11 = amp * (falling_pow(m, 2, u) * a * a - falling_pow(m, 1, u) * b);
                let h22 = -amp * falling_pow(m, 1, u) * b;
                (h11 * h11 + rest * h22 * h22).sqrt()
            }
            3 => {
                let t111 =
                    amp * (-falling_pow(m, 3, u) * a * a * a + 3.0 * falling_pow(m, 2, u) * b * a);
                let t1ii = amp * falling_pow(m, 2, u) * b * a;
                (t111 * t111 + 3.0 * rest * t1ii * t1ii).sqrt()
            }
            _ => panic!("derivative norms are implemented up to order 3"),
        }
    }

    /// Supremum over the support of the order-`order` derivative norm.
    ///
    /// Samples `rho` uniformly at `spacing / radius` and refines each sampled
    /// local maximum by golden-section search. Returns the supremum and the
    /// largest jump between neighbouring samples as its tolerance.
    pub fn sup_derivative_norm(&self, order: usize, spacing: f64) -> (f64, f64) {
        if self.is_zero() {
            return (0.0, 0.0);
        }
        let n = (self.radius / spacing).ceil().max(1.0) as usize;
        let step = 1.0 / n as f64;
        let samples: Vec<f64> = (0..=n)
            .map(|i| self.radial_derivative_norm(order, i as f64 * step))
            .collect();
        let modulus = samples
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        let mut best = samples.iter().cloned().fold(0.0, f64::max);
        for i in 0..=n {
            let left = if i == 0 { 0.0 } else { samples[i - 1] };
            let right = if i == n { 0.0 } else { samples[i + 1] };
            if samples[i] >= left && samples[i] >= right {
                let lo = (i as f64 - 1.0).max(0.0) * step;
                let hi = ((i + 1) as f64 * step).min(1.0);
                let refined = golden_max(|rho| self.radial_derivative_norm(order, rho), lo, hi);
                best = best.max(refined);
            }
        }
        // Order 1 has the closed-form critical point rho^2 = 1/(2m-1).
        if order == 1 {
            let m = self.power() as f64;
            best = best.max(self.radial_derivative_norm(1, (1.0 / (2.0 * m - 1.0)).sqrt()));
        }
        (best, modulus)
    }

    /// `sum_{j <= order} sup |D^j g|` with its accumulated sampling tolerance.
    pub fn sup_norm_up_to(&self, order: usize, spacing: f64) -> (f64, f64) {
        (0..=order).fold((0.0, 0.0), |(v, t), j| {
            let (sv, st) = self.sup_derivative_norm(j, spacing);
            (v + sv, t + st)
        })
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    f(lo).max(f(hi)).max(fc).max(fd)
}

/// The initial triple `(f_in, phi0_in, phi1_in)` together with the support radius `R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialData {
    pub f_in: BumpProfile<6>,
    pub phi0_in: BumpProfile<3>,
    pub phi1_in: BumpProfile<3>,
    pub support_radius: f64,
}

impl InitialData {
    pub fn zero(support_radius: f64) -> Self {
        Self {
            f_in: BumpProfile::zero(support_radius, 1),
            phi0_in: BumpProfile::zero(support_radius, 3),
            phi1_in: BumpProfile::zero(support_radius, 2),
            support_radius,
        }
    }

    /// Multiplies all three amplitudes by `delta`.
    pub fn scaled(&self, delta: f64) -> Self {
        Self {
            f_in: self.f_in.scaled(delta),
            phi0_in: self.phi0_in.scaled(delta),
            phi1_in: self.phi1_in.scaled(delta),
            support_radius: self.support_radius,
        }
    }

    pub fn f_value(&self, x: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
        self.f_in.value(&[x[0], x[1], x[2], p[0], p[1], p[2]])
    }

    pub fn phi0(&self, x: &Vector3<f64>) -> f64 {
        self.phi0_in.value(&[x[0], x[1], x[2]])
    }

    pub fn phi1(&self, x: &Vector3<f64>) -> f64 {
        self.phi1_in.value(&[x[0], x[1], x[2]])
    }

    pub fn phi0_grad(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from(self.phi0_in.gradient(&[x[0], x[1], x[2]]))
    }

    pub fn phi1_grad(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from(self.phi1_in.gradient(&[x[0], x[1], x[2]]))
    }

    pub fn phi0_hessian(&self, x: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
        let h = self.phi0_in.hessian(&[x[0], x[1], x[2]]);
        nalgebra::Matrix3::from_fn(|i, j| h[i][j])
    }

    /// `||f_in||_inf`, attained at the bump center.
    pub fn f_sup(&self) -> f64 {
        self.f_in.amplitude
    }

    pub fn phi0_sup(&self) -> f64 {
        self.phi0_in.amplitude
    }

    /// Position-space center and radius of the projection of `supp f_in`.
    pub fn f_position_ball(&self) -> (Vector3<f64>, f64) {
        let c = &self.f_in.center;
        (Vector3::new(c[0], c[1], c[2]), self.f_in.radius)
    }

    pub fn f_momentum_center(&self) -> Vector3<f64> {
        let c = &self.f_in.center;
        Vector3::new(c[3], c[4], c[5])
    }
}

/// The initial norm and its per-datum breakdown.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InitialNorm {
    pub total: f64,
    pub f_term: f64,
    pub phi0_term: f64,
    pub phi1_term: f64,
    /// Sampling modulus of continuity summed over all terms.
    pub tolerance: f64,
}

/// Computes `||f_in||_{1,inf} + ||phi0_in||_{3,inf} + ||phi1_in||_{2,inf}`.
///
/// Derivative tensors are measured in the Frobenius norm.
pub fn initial_norm(data: &InitialData, sample_spacing: f64) -> Result<InitialNorm> {
    if !(sample_spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample spacing must be positive, got {sample_spacing}"
        )));
    }
    let radii = [
        (!data.f_in.is_zero(), data.f_in.radius),
        (!data.phi0_in.is_zero(), data.phi0_in.radius),
        (!data.phi1_in.is_zero(), data.phi1_in.radius),
    ];
    for (active, r) in radii {
        if active && r / sample_spacing < 8.0 {
            return Err(Error::InvalidArgument(format!(
                "sample spacing {sample_spacing} gives fewer than 8 points across radius {r}"
            )));
        }
    }
    let (f_term, tf) = data.f_in.sup_norm_up_to(1, sample_spacing);
    let (phi0_term, t0) = data.phi0_in.sup_norm_up_to(3, sample_spacing);
    let (phi1_term, t1) = data.phi1_in.sup_norm_up_to(2, sample_spacing);
    Ok(InitialNorm {
        total: f_term + phi0_term + phi1_term,
        f_term,
        phi0_term,
        phi1_term,
        tolerance: tf + t0 + t1,
    })
}

/// Result of checking that initial data lie in the admissible class.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MembershipReport {
    pub f_support: bool,
    pub phi0_support: bool,
    pub phi1_support: bool,
    pub regularity: bool,
    pub nonnegative: bool,
    pub norm_at_most_one: bool,
    pub norm: f64,
}

impl MembershipReport {
    pub fn passed(&self) -> bool {
        self.f_support
            && self.phi0_support
            && self.phi1_support
            && self.regularity
            && self.nonnegative
            && self.norm_at_most_one
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.f_support {
            out.push("supp f_in not inside B_R(0) in R^6");
        }
        if !self.phi0_support {
            out.push("supp phi0_in not inside B_R(0)");
        }
        if !self.phi1_support {
            out.push("supp phi1_in not inside B_R(0)");
        }
        if !self.regularity {
            out.push("smoothness orders below (1, 3, 2)");
        }
        if !self.nonnegative {
            out.push("f_in negative");
        }
        if !self.norm_at_most_one {
            out.push("initial norm exceeds 1");
        }
        out
    }
}

pub fn validate_membership(data: &InitialData) -> MembershipReport {
    let min_radius = [&data.f_in.radius, &data.phi0_in.radius, &data.phi1_in.radius]
        .into_iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let spacing = min_radius / 256.0;
    let norm = initial_norm(data, spacing).map(|n| n.total).unwrap_or(f64::NAN);
    MembershipReport {
        f_support: data.f_in.support_within(data.support_radius),
        phi0_support: data.phi0_in.support_within(data.support_radius),
        phi1_support: data.phi1_in.support_within(data.support_radius),
        regularity: data.f_in.smoothness >= 1
            && data.phi0_in.smoothness >= 3
            && data.phi1_in.smoothness >= 2,
        nonnegative: data.f_in.amplitude >= 0.0,
        norm_at_most_one: norm <= 1.0,
        norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit3(k: u32) -> BumpProfile<3> {
        make_bump([0.0; 3], 1.0, 1.0, k).unwrap()
    }

    #[test]
    fn bump_values() {
        let b = unit3(3);
        assert_eq!(b.value(&[0.0; 3]), 1.0);
        assert_eq!(b.value(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(b.value(&[0.8, 0.8, 0.0]), 0.0);
        assert_relative_eq!(b.value(&[0.5, 0.0, 0.0]), 0.31640625, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_bump([0.0; 3], 0.0, 1.0, 3).is_err());
        assert!(make_bump([0.0; 3], -1.0, 1.0, 3).is_err());
        assert!(make_bump([0.0; 3], 1.0, -1.0, 3).is_err());
        assert!(make_bump([0.0; 3], 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn gradient_sup_matches_dense_radial_oracle() {
        // Independent oracle: dense maximization of 8 r (1 - r^2)^3.
        let oracle = (0..=1_000_000)
            .map(|i| {
                let r = i as f64 / 1e6;
                8.0 * r * (1.0 - r * r).powi(3)
            })
            .fold(0.0, f64::max);
        let (sup, _) = unit3(3).sup_derivative_norm(1, 1.0 / 64.0);
        assert_relative_eq!(sup, oracle, max_relative = 1e-10);
        assert_relative_eq!(
            unit3(3).radial_derivative_norm(1, 1.0 / 7f64.sqrt()),
            oracle,
            max_relative = 1e-10
        );
    }

    #[test]
    fn closed_form_derivatives_match_finite_differences() {
        let b = make_bump([0.1, -0.2, 0.3], 1.3, 0.7, 3).unwrap();
        let y = [0.4, 0.1, -0.2];
        let e = 1e-5;
        let g = b.gradient(&y);
        let h = b.hessian(&y);
        for i in 0..3 {
            let mut yp = y;
            let mut ym = y;
            yp[i] += e;
            ym[i] -= e;
            let fd = (b.value(&yp) - b.value(&ym)) / (2.0 * e);
            assert_relative_eq!(g[i], fd, max_relative = 1e-8);
            let gp = b.gradient(&yp);
            let gm = b.gradient(&ym);
            for j in 0..3 {
                assert_relative_eq!(h[j][i], (gp[j] - gm[j]) / (2.0 * e), epsilon = 1e-7);
            }
        }
        // Radial norms agree with the Cartesian tensors on the first axis.
        let on_axis = [0.1 + 0.5 * 1.3, -0.2, 0.3];
        let gn: f64 = b.gradient(&on_axis).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(b.radial_derivative_norm(1, 0.5), gn, max_relative = 1e-12);
        let hn: f64 = b
            .hessian(&on_axis)
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(b.radial_derivative_norm(2, 0.5), hn, max_relative = 1e-12);
    }

    #[test]
    fn third_derivative_norm_matches_finite_differences_of_hessian() {
        let b = make_bump([0.0; 3], 1.0, 1.0, 3).unwrap();
        let rho = 0.37;
        let y = [rho, 0.0, 0.0];
        let e = 1e-5;
        let mut sum = 0.0;
        for k in 0..3 {
            let mut yp = y;
            let mut ym = y;
            yp[k] += e;
            ym[k] -= e;
            let hp = b.hessian(&yp);
            let hm = b.hessian(&ym);
            for i in 0..3 {
                for j in 0..3 {
                    let d = (hp[i][j] - hm[i][j]) / (2.0 * e);
                    sum += d * d;
                }
            }
        }
        assert_relative_eq!(b.radial_derivative_norm(3, rho), sum.sqrt(), max_relative = 1e-7);
    }

    #[test]
    fn derivatives_vanish_at_support_boundary() {
        // k = 3: the third derivative vanishes linearly at the rim.
        let b = unit3(3);
        let norms: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|s| b.radial_derivative_norm(3, 1.0 - s))
            .collect();
        for w in norms.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
        }
        assert_eq!(b.radial_derivative_norm(3, 1.0), 0.0);
        assert!(b.radial_derivative_norm(2, 1.0 - 1e-3) < 1e-3);
    }

    #[test]
    fn zero_data_norm_is_zero() {
        let d = InitialData::zero(1.0);
        assert_eq!(initial_norm(&d, 0.01).unwrap().total, 0.0);
        assert!(validate_membership(&d).passed());
    }

    #[test]
    fn norm_of_f_alone_at_least_amplitude() {
        let mut d = InitialData::zero(1.0);
        d.f_in = make_bump([0.0; 6], 1.0, 0.2, 1).unwrap();
        let n = initial_norm(&d, 1.0 / 64.0).unwrap();
        assert!(n.total >= 0.2);
        assert_eq!(n.phi0_term, 0.0);
    }

    #[test]
    fn coarse_spacing_rejected() {
        let mut d = InitialData::zero(1.0);
        d.phi0_in = unit3(3);
        assert!(initial_norm(&d, 0.2).is_err());
        assert!(initial_norm(&d, 0.0).is_err());
        assert!(initial_norm(&d, 0.125).is_ok());
    }

    #[test]
    fn membership_failures() {
        let mut d = InitialData::zero(1.0);
        d.phi0_in = make_bump([0.0; 3], 2.0, 0.01, 3).unwrap();
        let r = validate_membership(&d);
        assert!(!r.phi0_support);
        assert!(!r.passed());

        // Scale a single datum so the norm is exactly 1.5.
        let mut d = InitialData::zero(1.0);
        d.phi1_in = unit3(2);
        let unit = initial_norm(&d, 1.0 / 256.0).unwrap().total;
        d.phi1_in.amplitude = 1.5 / unit;
        let r = validate_membership(&d);
        assert_relative_eq!(r.norm, 1.5, max_relative = 1e-9);
        assert!(!r.norm_at_most_one);
        assert!(r.phi1_support);
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous(scale in 0.01f64..10.0, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let d = InitialData {
                f_in: make_bump([0.0; 6], 1.0, a, 1).unwrap(),
                phi0_in: make_bump([0.1, 0.0, 0.0], 0.8, b, 3).unwrap(),
                phi1_in: make_bump([0.0, 0.2, 0.0], 0.7, c, 2).unwrap(),
                support_radius: 1.0,
            };
            let n1 = initial_norm(&d, 1.0 / 64.0).unwrap().total;
            let n2 = initial_norm(&d.scaled(scale), 1.0 / 64.0).unwrap().total;
            prop_assert!((n2 - scale * n1).abs() <= 1e-12 * (1.0 + n2.abs()));
        }

        #[test]
        fn bump_bounded_by_amplitude(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
            let b = make_bump([0.2, 0.0, -0.1], 1.1, 0.6, 3).unwrap();
            let v = b.value(&[x, y, z]);
            prop_assert!((0.0..=0.6).contains(&v));
        }
    }
}
