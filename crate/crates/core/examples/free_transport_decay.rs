//! Free streaming of a particle bump, with decay fits of sup mu and of the
//! momentum spread. A reduced version of configs/free_transport.conf.

use vnsim::config::SimConfig;
use vnsim::runner::run_scenario;

fn main() -> vnsim::Result<()> {
    let out = std::env::temp_dir().join("vnsim-free-transport");
    let cfg = SimConfig::parse(&format!(
        "R = 1\nf_radius = 0.5\nf_amplitude = 0.05\ncoupling = false\n\
         h = 1\ndt = 0.5\nt_end = 30\nn_x = 3\nn_p = 32\nspread_cell = 4\n\
         fit_window = 6, 30\nvalidation_samples = 50\noutput_dir = {}\n",
        out.display()
    ))?;
    let s = run_scenario(&cfg)?;
    println!("{} particles, series in {}", s.particles, out.display());
    for name in ["sup_mu", "max_momentum_spread"] {
        if let Some(f) = &s.fits[name].fit {
            println!("{name}: slope {:.3} +- {:.3}", f.slope, f.slope_stderr);
        }
    }
    Ok(())
}
