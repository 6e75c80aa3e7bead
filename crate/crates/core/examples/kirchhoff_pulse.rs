//! Leapfrog solution of the free wave equation against the Kirchhoff formula.

use nalgebra::Vector3;
use vnsim::profiles::{make_bump, InitialData};
use vnsim::wavefield::{kirchhoff_homogeneous, FieldGrid, KirchhoffRule};

fn main() -> vnsim::Result<()> {
    let mut data = InitialData::zero(3.5);
    data.phi0_in = make_bump([0.0, 0.0, 0.0], 3.0, 1.0, 4)?;
    data.phi1_in = make_bump([0.2, 0.0, 0.0], 2.4, 0.5, 4)?;
    let t = 2.0;
    let probes = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.5, 0.0),
        Vector3::new(-2.0, 0.0, 1.0),
        Vector3::new(0.0, 3.0, 0.0),
    ];
    let rule = KirchhoffRule::default();
    for h in [0.5, 0.25, 0.125] {
        let dt = 0.5 * h;
        let mut g = FieldGrid::new(h, dt, data.support_radius, 1.0)?;
        g.start(&data, &vec![0.0; g.lattice().len()])?;
        while g.steps() < (t / dt).round() as u64 {
            let len = g.lattice_for_next_step().len();
            g.fdtd_step(&vec![0.0; len])?;
        }
        println!("h = {h}, {} nodes", g.lattice().len());
        for x in &probes {
            let exact = kirchhoff_homogeneous(t, x, &data, &rule)?;
            let grid = g.field_derivatives(x)?.phi;
            println!("  x = {:?}: grid {grid:+.6e} exact {exact:+.6e}", [x.x, x.y, x.z]);
        }
    }
    Ok(())
}
