//! Unfiltered single-path correlation: a pure exponential at the natural lifetime.

use biphoton_sim::analysis::fit_exponential_decay;
use biphoton_sim::filter::FilterSpec;
use biphoton_sim::pipeline::{natural_tau_ns, simulate};
use biphoton_sim::scheme::builtin;

fn main() -> biphoton_sim::Result<()> {
    let mut s = builtin("off_resonant")?;
    s.filter = FilterSpec::none();
    let sim = simulate(&s)?;
    let (tau, amp) = fit_exponential_decay(&sim.trace, (5.0, 150.0))?;
    println!("fitted decay {tau:.3} ns (amplitude {amp:.4}), expected {:.3} ns", natural_tau_ns(&s));
    println!("equivalent width {:.2} ns", sim.trace.equivalent_width_ns());
    Ok(())
}
