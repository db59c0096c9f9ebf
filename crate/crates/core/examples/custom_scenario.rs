//! Build a scenario from TOML text, apply overrides, and export the trace.

use biphoton_sim::pipeline::simulate;
use biphoton_sim::scheme::{builtin, Scenario};

fn main() -> biphoton_sim::Result<()> {
    let text = builtin("off_resonant")?.to_config_string()?;
    let s = Scenario::from_config_str(&text)?
        .with_overrides(&["name=\"warm_cell_od4\"".into(), "filter.od=4".into(), "detector_bin_ns=0.5".into()])?;
    let sim = simulate(&s)?;
    let mut out = std::io::stdout().lock();
    let mut trace = sim.trace.clone();
    let keep: Vec<usize> = (0..trace.delays_ns.len()).filter(|&i| (-2.0..20.0).contains(&trace.delays_ns[i])).collect();
    trace.delays_ns = keep.iter().map(|&i| trace.delays_ns[i]).collect();
    trace.values = keep.iter().map(|&i| trace.values[i]).collect();
    trace.write_csv(&mut out, &format!("scenario {}", s.name))?;
    Ok(())
}
