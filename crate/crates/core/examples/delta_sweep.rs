//! One short coupled run per amplitude multiplier, collected into sweep.csv.

use vnsim::config::SimConfig;
use vnsim::runner::{sweep, SWEEP_COLUMNS};

fn main() -> vnsim::Result<()> {
    let out = std::env::temp_dir().join("vnsim-sweep");
    let cfg = SimConfig::parse(&format!(
        "R = 1\nf_radius = 0.5\nf_amplitude = 0.05\nphi1_amplitude = 0.01\n\
         h = 1\ndt = 0.5\nt_end = 8\nn_x = 3\nn_p = 12\nfit_window = 2, 8\n\
         k_fit_window = 2, 8\noutput_dir = {}\n",
        out.display()
    ))?;
    let rows = sweep(&cfg, &[0.5, 1.0, 4.0, 16.0, 400.0])?;
    println!("{SWEEP_COLUMNS}");
    for r in rows {
        println!("{}", r.csv_line());
    }
    println!("per-delta output under {}", out.display());
    Ok(())
}
