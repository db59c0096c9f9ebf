//! Source-cell optical depth pushes the transmitted photon off resonance and
//! shortens the correlation.

use biphoton_sim::analysis::scan_od;
use biphoton_sim::scheme::builtin;

fn main() -> biphoton_sim::Result<()> {
    let s = builtin("od_scan")?;
    let ods = s.scan.as_ref().map(|sc| sc.values.clone()).unwrap_or_default();
    println!("{:>6} {:>12} {:>12}", "od", "width_ns", "in_1ns");
    for p in scan_od(&s, &ods)? {
        println!("{:>6} {:>12.3} {:>12.3}", p.od, p.equivalent_width_ns, p.energy_within_1ns);
    }
    Ok(())
}
