//! Stops a run halfway, resumes it from the checkpoint and compares the series
//! with an uninterrupted run.

use vnsim::config::SimConfig;
use vnsim::runner::{resume, run_scenario, Run};

fn config(dir: &std::path::Path) -> vnsim::Result<SimConfig> {
    SimConfig::parse(&format!(
        "R = 1\nf_radius = 0.5\nf_amplitude = 0.05\nphi0_amplitude = 0.01\n\
         h = 1\ndt = 0.5\nt_end = 6\nn_x = 3\nn_p = 12\nfit_window = 1, 6\n\
         k_fit_window = 1, 6\nhistory_stride = 2\noutput_dir = {}\n",
        dir.display()
    ))
}

fn main() -> vnsim::Result<()> {
    let base = std::env::temp_dir().join("vnsim-resume");
    let (a, b) = (base.join("full"), base.join("split"));
    run_scenario(&config(&a)?)?;

    let mut run = Run::new(config(&b)?)?;
    run.open_output()?;
    for _ in 0..5 {
        run.step()?;
    }
    run.write_checkpoint()?;
    let ckpt = run.checkpoint_path();
    drop(run);
    println!("checkpoint written to {}", ckpt.display());
    resume(&ckpt)?;

    let full = std::fs::read(a.join("series.csv"))?;
    let split = std::fs::read(b.join("series.csv"))?;
    println!("series identical: {}", full == split);
    Ok(())
}
