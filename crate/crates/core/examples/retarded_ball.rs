//! Retarded potential of a constant source in the unit ball.
//! Inside the ball and once the whole ball is in the past cone, the value at
//! distance r from the centre is -(3 - r^2) / 6.

use nalgebra::Vector3;
use vnsim::quadrature::SphereRule;
use vnsim::wavefield::{retarded_potential, FnSource};

fn main() -> vnsim::Result<()> {
    let src = FnSource(|_s, y: &Vector3<f64>| if y.norm() <= 1.0 { 1.0 } else { 0.0 });
    let sphere = SphereRule::new(16, 32);
    for r in [0.0, 0.25, 0.5] {
        let x = Vector3::new(r, 0.0, 0.0);
        for width in [0.1, 0.05, 0.02] {
            let v = retarded_potential(3.0, &x, &src, width, &sphere)?;
            println!("r = {r}, shell {width}: {v:.6} (closed form {:.6})", -(3.0 - r * r) / 6.0);
        }
    }
    Ok(())
}
