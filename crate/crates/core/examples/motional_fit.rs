//! Free-decay fit versus a natural decay with motional dephasing, on the
//! resonant-pump trace.

use biphoton_sim::pipeline::simulate;
use biphoton_sim::scheme::builtin;

fn main() -> biphoton_sim::Result<()> {
    let sim = simulate(&builtin("on_resonant")?)?;
    let r = sim.report();
    if let Some(f) = &r.fit {
        println!(
            "free fit: tau = {:.2} +/- {:.2} ns, f = {:.2} MHz, reduced chi2 {:.3e}",
            f.tau_ns, f.param_uncertainties[5], f.f_mhz, f.reduced_chi2
        );
    }
    if let Some(m) = &r.motional_fit {
        println!(
            "motional fit: v_t = {:.2} +/- {:.2} m/s at tau_n = {:.2} ns, reduced chi2 {:.3e}",
            m.v_t_mps, m.v_t_uncertainty_mps, m.natural_tau_ns, m.reduced_chi2
        );
    }
    Ok(())
}
