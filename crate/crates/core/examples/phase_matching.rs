//! Direction of the generated 780-nm photon and the grating washout time.

use std::f64::consts::PI;

use biphoton_sim::biphoton::{grating_intensity, phase_match, velocity_class_width};
use biphoton_sim::scheme::BeamGeometry;

fn main() -> biphoton_sim::Result<()> {
    let geom = BeamGeometry::default();
    let pm = phase_match(&geom);
    println!("k4 at {:.3} deg, |k4| mismatch {:.3e} rad/m", pm.k4_angle_deg, pm.mismatch_radpm);

    let dv = velocity_class_width(5.0, 500.0)?;
    println!("velocity class width {dv:.2} m/s");

    let k = 2.0 * PI / 780e-9;
    for t in [0.0, 10.0, 18.81, 30.0] {
        let i = grating_intensity(1000, k, 6.6, t)?;
        println!("t = {t:5.2} ns: forward intensity / N^2 = {:.4}", i / 1e6);
    }
    Ok(())
}
