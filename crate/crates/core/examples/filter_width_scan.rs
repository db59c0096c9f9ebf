//! Zero-delay coincidences behind an extra filter cell of increasing width.

use biphoton_sim::analysis::scan_filter_width;
use biphoton_sim::filter::filter_width_mhz;
use biphoton_sim::scheme::builtin;

fn main() -> biphoton_sim::Result<()> {
    let s = builtin("filter_width_scan")?;
    println!("source-cell absorption width {:.0} MHz", filter_width_mhz(&s.filter, &s.grid)?);
    let widths = s.scan.as_ref().map(|sc| sc.values.clone()).unwrap_or_default();
    println!("{:>8} {:>8} {:>10} {:>12}", "width", "cell_od", "reachable", "zero_delay");
    for p in scan_filter_width(&s, &widths)? {
        println!("{:>8.0} {:>8.2} {:>10} {:>12.5}", p.width_mhz, p.filter_od, p.reachable, p.zero_delay);
    }
    Ok(())
}
