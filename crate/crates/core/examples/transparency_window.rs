//! Probe transmission of the pumped vee system with and without the pump.

use biphoton_sim::filter::build_transmission;
use biphoton_sim::scheme::builtin;

fn main() -> biphoton_sim::Result<()> {
    let s = builtin("on_resonant")?;
    let mut dark = s.filter.clone();
    if let Some(d) = dark.driven.as_mut() {
        d.pump.rabi_mhz = 0.0;
    }
    let pumped = build_transmission(&s.filter, &s.grid)?.intensity();
    let bare = build_transmission(&dark, &s.grid)?.intensity();
    println!("{:>10} {:>12} {:>12}", "detuning", "pumped", "no pump");
    for d in [-600.0, -300.0, -120.6, -60.0, 0.0, 60.0, 300.0, 600.0] {
        let k = s.grid.detunings().iter().position(|x| (x - d).abs() <= 0.5 * s.grid.resolution_mhz()).unwrap_or(0);
        println!("{:>10.1} {:>12.4e} {:>12.4e}", d, pumped[k], bare[k]);
    }
    Ok(())
}
