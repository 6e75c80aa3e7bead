//! Small coupled run: field solve, weight law, support and field decay checks.

use vnsim::config::SimConfig;
use vnsim::runner::run_scenario;

fn main() -> vnsim::Result<()> {
    let out = std::env::temp_dir().join("vnsim-coupled");
    let cfg = SimConfig::parse(&format!(
        "R = 1\nf_radius = 0.5\nf_amplitude = 0.05\nphi0_amplitude = 0.005\n\
         h = 1\ndt = 0.5\nt_end = 16\nn_x = 3\nn_p = 24\n\
         fit_window = 4, 16\nk_fit_window = 4, 16\nhistory_stride = 4\n\
         validation_samples = 50\noutput_dir = {}\n",
        out.display()
    ))?;
    let s = run_scenario(&cfg)?;
    println!("{} particles, max |phi| {:.3e}", s.particles, s.max_abs_phi);
    println!(
        "fsc: eta {:.3e}, worst K margin {:.3}, worst L margin {:.3}, satisfied {}",
        s.eta, s.fsc.worst_k, s.fsc.worst_l, s.fsc.satisfied
    );
    println!("max |p| {:.4}, support excess {:.3}", s.max_momentum_support, s.spatial_support_excess);
    for (name, fit) in &s.fits {
        if let Some(f) = &fit.fit {
            println!("{name}: slope {:.3}", f.slope);
        }
    }
    if let Some(v) = &s.validation {
        println!("f at t = 0 off by {:.1e}, f <= {:.3e} (bound {:.3e})", v.f_at_zero_error, v.f_max, v.f_bound);
    }
    Ok(())
}
