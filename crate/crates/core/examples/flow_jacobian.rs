//! Backward characteristics through a manufactured field: Jacobian against
//! finite differences, and dispersion of nearby momenta.

use nalgebra::Vector3;
use vnsim::characteristics::{backward_trace, flow_jacobian, ManufacturedField};
use vnsim::diagnostics::{dispersion_check, DispersionSample};

fn main() -> vnsim::Result<()> {
    let field = ManufacturedField {
        amplitude: 0.05,
        omega: 0.7,
        width: 1.5,
        center: Vector3::new(0.3, -0.2, 0.1),
    };
    let (t, dt) = (4.0, 0.02);
    let x = Vector3::new(0.5, -0.4, 0.2);
    let p = Vector3::new(0.2, 0.3, -0.4);
    let j = flow_jacobian(t, &x, &p, &field, dt)?;
    println!("Jacobian at t = {t}:{j:.5}");
    let e = 1e-5;
    let mut worst = 0.0f64;
    for col in 0..6 {
        let mut dx = [Vector3::zeros(), Vector3::zeros()];
        dx[col / 3][col % 3] = e;
        let (a1, b1) = backward_trace(t, &(x + dx[0]), &(p + dx[1]), &field, dt)?;
        let (a2, b2) = backward_trace(t, &(x - dx[0]), &(p - dx[1]), &field, dt)?;
        let fd = [a1 - a2, b1 - b2].map(|v| v / (2.0 * e));
        for row in 0..6 {
            worst = worst.max((j[(row, col)] - fd[row / 3][row % 3]).abs());
        }
    }
    println!("largest difference from central differences {worst:.2e}");
    let samples: Vec<_> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&k| DispersionSample { t, x, p1: p, p2: p + Vector3::new(k, 0.0, 0.0) })
        .collect();
    let d = dispersion_check(&field, &samples, dt)?;
    println!("dispersion ratio {:.4}, relative to free flow {:.4}", d.min_ratio, d.min_relative);
    Ok(())
}
