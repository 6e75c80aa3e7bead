//! Bump profiles, membership in the admissible class and the initial norm.

use vnsim::profiles::{initial_norm, make_bump, validate_membership, InitialData};

fn main() -> vnsim::Result<()> {
    let mut data = InitialData::zero(1.0);
    data.f_in = make_bump([0.0, 0.0, 0.0, 0.1, 0.0, 0.0], 0.5, 0.0125, 1)?;
    data.phi0_in = make_bump([0.0, 0.0, 0.0], 0.8, 0.0025, 3)?;
    data.phi1_in = make_bump([0.0, 0.0, 0.0], 0.8, 0.0025, 2)?;
    let report = validate_membership(&data);
    println!("admissible: {}", report.passed());
    for delta in [0.5, 1.0, 2.0] {
        let n = initial_norm(&data.scaled(delta), 0.05)?;
        println!("delta {delta}: norm {:.5e} +- {:.1e}", n.total, n.tolerance);
    }

    // A phi0 bump poking out of the ball of radius R fails the check.
    data.phi0_in = make_bump([0.5, 0.0, 0.0], 0.8, 0.0025, 3)?;
    println!("shifted phi0: failures {:?}", validate_membership(&data).failures());
    Ok(())
}
