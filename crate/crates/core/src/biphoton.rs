//! Two-photon source amplitude, filtering, cross-correlation and geometry.
//!
//! The conditional amplitude of the lower (780-nm) photon after the upper
//! photon is a sum of decaying exponentials, one per intermediate hyperfine
//! path: `psi(tau) = sum_j A_j exp(-(i 2 pi delta_j + pi Gamma_j) tau)` for
//! `tau > 0`. Its spectrum is multiplied by the filter transmission and
//! transformed back to the delay axis.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::filter::FilterTransmission;
use crate::io::fmt_f64;
use crate::response::{Pole, PoleSet};
use crate::scheme::{BeamGeometry, FrequencyGrid, PumpField, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPath {
    pub center_detuning_mhz: f64,
    pub amplitude: Complex64,
    /// Population linewidth of the intermediate level (MHz).
    pub linewidth_mhz: f64,
}

impl DecayPath {
    fn pole(&self) -> Pole {
        // -2 pi c exp(-2 pi (g + i f) t) with -2 pi c = A.
        Pole {
            residue: -self.amplitude / (2.0 * PI),
            center_mhz: self.center_detuning_mhz,
            half_width_mhz: 0.5 * self.linewidth_mhz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiphotonSpec {
    pub paths: Vec<DecayPath>,
    /// Population linewidth of the doubly excited level (MHz).
    pub upper_linewidth_mhz: f64,
    pub two_photon_detuning_mhz: f64,
    pub lower_pump: PumpField,
    pub upper_pump: PumpField,
}

impl BiphotonSpec {
    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        if self.paths.is_empty() {
            out.push(Violation::new(
                format!("{path}.paths"),
                "at least one decay path required",
            ));
        }
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.linewidth_mhz > 0.0 && p.linewidth_mhz.is_finite()) {
                out.push(Violation::new(
                    format!("{path}.paths[{i}].linewidth_mhz"),
                    "linewidth must be positive",
                ));
            }
            if !p.center_detuning_mhz.is_finite() {
                out.push(Violation::new(
                    format!("{path}.paths[{i}].center_detuning_mhz"),
                    "must be finite",
                ));
            }
            if !(p.amplitude.re.is_finite() && p.amplitude.im.is_finite()) {
                out.push(Violation::new(
                    format!("{path}.paths[{i}].amplitude"),
                    "must be finite",
                ));
            }
        }
        if !(self.upper_linewidth_mhz > 0.0 && self.upper_linewidth_mhz.is_finite()) {
            out.push(Violation::new(
                format!("{path}.upper_linewidth_mhz"),
                "linewidth must be positive",
            ));
        }
        if !self.two_photon_detuning_mhz.is_finite() {
            out.push(Violation::new(
                format!("{path}.two_photon_detuning_mhz"),
                "must be finite",
            ));
        }
        self.lower_pump.check(&format!("{path}.lower_pump"), out);
        self.upper_pump.check(&format!("{path}.upper_pump"), out);
    }

    /// Sum of the path amplitudes, the height of the jump of `psi` at zero delay.
    pub fn total_amplitude(&self) -> Complex64 {
        self.paths.iter().map(|p| p.amplitude).sum()
    }

    fn poles(&self) -> PoleSet {
        PoleSet {
            poles: self.paths.iter().map(DecayPath::pole).collect(),
        }
    }

    /// Closed form of the unfiltered conditional amplitude at delay `tau_ns`,
    /// taking the midpoint of the jump at zero.
    pub fn free_amplitude(&self, tau_ns: f64) -> Complex64 {
        if tau_ns < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let t_us = tau_ns * 1e-3;
        let sum: Complex64 = self
            .paths
            .iter()
            .map(|p| {
                let rate = Complex64::new(PI * p.linewidth_mhz, 2.0 * PI * p.center_detuning_mhz);
                p.amplitude * (-rate * t_us).exp()
            })
            .sum();
        if tau_ns == 0.0 {
            0.5 * sum
        } else {
            sum
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionalParams {
    pub v_t_mps: f64,
    pub wavelength_nm: f64,
}

impl MotionalParams {
    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        if !(self.v_t_mps >= 0.0 && self.v_t_mps.is_finite()) {
            out.push(Violation::new(
                format!("{path}.v_t_mps"),
                "must be finite and >= 0",
            ));
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            out.push(Violation::new(
                format!("{path}.wavelength_nm"),
                "must be positive",
            ));
        }
    }

    /// `exp(-(k v_t tau)^2 / 2)`.
    pub fn suppression(&self, tau_ns: f64) -> f64 {
        let x = 2.0 * PI * self.v_t_mps * tau_ns / self.wavelength_nm;
        (-0.5 * x * x).exp()
    }

    /// `1/(k v_t)` in ns; infinite when the atoms are at rest.
    pub fn dephasing_time_ns(&self) -> f64 {
        self.wavelength_nm / (2.0 * PI * self.v_t_mps)
    }
}

/// Source spectrum: exact values and the discrete-time (periodized) values
/// whose inverse transform is the sampled causal amplitude.
#[derive(Debug, Clone)]
pub struct SourceSpectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
    pub periodized: Vec<Complex64>,
}

/// `Phi_0(nu) = sum_j A_j / (2 pi (Gamma_j/2 - i (nu - delta_j)))` in 1/MHz,
/// the transform of the causal amplitude with `psi(0+) = sum_j A_j`.
pub fn source_spectrum(spec: &BiphotonSpec, grid: &FrequencyGrid) -> SourceSpectrum {
    let s = spec.poles().synthesize(grid);
    SourceSpectrum {
        grid: *grid,
        values: s.exact,
        periodized: s.periodized,
    }
}

/// Filtered conditional amplitude on the FFT-ordered delay axis.
#[derive(Debug, Clone)]
pub struct PairAmplitude {
    pub grid: FrequencyGrid,
    pub samples: Vec<Complex64>,
    /// `psi(0+)`. The sample at zero delay holds the discrete midpoint of the
    /// jump, and `psi(0-)` is zero.
    pub jump: Complex64,
}

impl PairAmplitude {
    /// `(delay_ns, psi)` in increasing delay.
    pub fn time_ordered(&self) -> Vec<(f64, Complex64)> {
        let n = self.grid.n_points;
        (0..n)
            .map(|j| {
                let idx = (j + n / 2) % n;
                (self.grid.fft_time_ns(idx), self.samples[idx])
            })
            .collect()
    }

    /// Linear interpolation in delay; zero outside the window.
    pub fn at_ns(&self, tau_ns: f64) -> Complex64 {
        let n = self.grid.n_points;
        let dt = self.grid.dt_ns();
        let x = tau_ns / dt + (n / 2) as f64;
        if !(x >= 0.0 && x <= (n - 1) as f64) {
            return Complex64::new(0.0, 0.0);
        }
        let j = (x.floor() as usize).min(n - 2);
        let f = x - j as f64;
        let at = |j: usize| self.samples[(j + n / 2) % n];
        let (mut a, mut b) = (at(j), at(j + 1));
        // Use the one-sided limits next to the jump.
        if j == n / 2 {
            a = self.jump;
        }
        if j + 1 == n / 2 {
            b = Complex64::new(0.0, 0.0);
        }
        if f == 0.0 {
            return at(j);
        }
        a + f * (b - a)
    }
}

/// `psi = inverse transform of Phi_0 t`.
pub fn pair_amplitude(spec: &BiphotonSpec, filt: &FilterTransmission) -> Result<PairAmplitude> {
    pair_amplitude_on(spec, &filt.grid, filt)
}

/// As [`pair_amplitude`], checking that `grid` is the filter's grid.
pub fn pair_amplitude_on(
    spec: &BiphotonSpec,
    grid: &FrequencyGrid,
    filt: &FilterTransmission,
) -> Result<PairAmplitude> {
    if !grid.same_as(&filt.grid) {
        return Err(Error::GridMismatch {
            source_points: grid.n_points,
            source_span: grid.span_mhz,
            filter_points: filt.grid.n_points,
            filter_span: filt.grid.span_mhz,
        });
    }
    let phi = source_spectrum(spec, grid);
    let product: Vec<Complex64> = phi
        .periodized
        .iter()
        .zip(&filt.t_values)
        .map(|(p, t)| p * t)
        .collect();
    // The filter tends to its band-edge value at high frequency, which sets
    // the instantaneous part of its kernel.
    let jump = spec.total_amplitude() * filt.t_values[0];
    Ok(PairAmplitude {
        grid: *grid,
        samples: fft::freq_to_time(&product, grid),
        jump,
    })
}

/// Two-time amplitude `theta(t1) exp(-(i 2 pi delta + pi Gamma_a) t1) psi(t2 - t1)`.
pub fn joint_amplitude(
    spec: &BiphotonSpec,
    psi: &PairAmplitude,
    t1_ns: f64,
    t2_ns: f64,
) -> Complex64 {
    if t1_ns < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let rate = Complex64::new(
        PI * spec.upper_linewidth_mhz,
        2.0 * PI * spec.two_photon_detuning_mhz,
    ) * 1e-3;
    (-rate * t1_ns).exp() * psi.at_ns(t2_ns - t1_ns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTrace {
    pub bin_ns: f64,
    pub delays_ns: Vec<f64>,
    pub values: Vec<f64>,
}

impl CorrelationTrace {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of the bin containing `delay_ns`.
    pub fn bin_of(&self, delay_ns: f64) -> Option<usize> {
        let first = *self.delays_ns.first()? - 0.5 * self.bin_ns;
        let i = ((delay_ns - first) / self.bin_ns).floor();
        (i >= 0.0 && (i as usize) < self.values.len()).then_some(i as usize)
    }

    /// Bins whose centers lie in `[lo_ns, hi_ns]`.
    pub fn window(&self, lo_ns: f64, hi_ns: f64) -> CorrelationTrace {
        let keep: Vec<usize> = (0..self.values.len())
            .filter(|&i| self.delays_ns[i] >= lo_ns && self.delays_ns[i] <= hi_ns)
            .collect();
        CorrelationTrace {
            bin_ns: self.bin_ns,
            delays_ns: keep.iter().map(|&i| self.delays_ns[i]).collect(),
            values: keep.iter().map(|&i| self.values[i]).collect(),
        }
    }

    /// `total / peak * bin`, the width of a rectangle with the same area.
    pub fn equivalent_width_ns(&self) -> f64 {
        let p = self.peak();
        if p > 0.0 {
            self.total() / p * self.bin_ns
        } else {
            0.0
        }
    }

    pub fn normalized(&self) -> CorrelationTrace {
        let p = self.peak();
        let mut t = self.clone();
        if p > 0.0 {
            t.values.iter_mut().for_each(|v| *v /= p);
        }
        t
    }

    /// Writes `#`-prefixed header lines then `delay_ns,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> std::io::Result<()> {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "delay_ns,value")?;
        for (d, v) in self.delays_ns.iter().zip(&self.values) {
            writeln!(w, "{},{}", fmt_f64(*d), fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Cumulative integral of a piecewise-linear function given on sorted
/// abscissae (repeated abscissae encode jumps).
struct PiecewiseLinear {
    t: Vec<f64>,
    y: Vec<f64>,
    cum: Vec<f64>,
}

impl PiecewiseLinear {
    fn new(t: Vec<f64>, y: Vec<f64>) -> Self {
        let mut cum = vec![0.0; t.len()];
        for i in 1..t.len() {
            cum[i] = cum[i - 1] + 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
        }
        Self { t, y, cum }
    }

    fn integral_to(&self, x: f64) -> f64 {
        let n = self.t.len();
        if x <= self.t[0] {
            return 0.0;
        }
        if x >= self.t[n - 1] {
            return self.cum[n - 1];
        }
        let i = self.t.partition_point(|&ti| ti <= x) - 1;
        let h = self.t[i + 1] - self.t[i];
        let u = x - self.t[i];
        let slope = if h > 0.0 {
            (self.y[i + 1] - self.y[i]) / h
        } else {
            0.0
        };
        self.cum[i] + u * (self.y[i] + 0.5 * slope * u)
    }
}

/// `|psi|^2` times the motional suppression, integrated over detector bins with
/// edges at multiples of `bin_ns`, covering the delay window.
pub fn ccf(
    psi: &PairAmplitude,
    motional: &MotionalParams,
    bin_ns: f64,
) -> Result<CorrelationTrace> {
    if !(bin_ns > 0.0 && bin_ns.is_finite()) {
        return Err(Error::Domain(format!(
            "bin width must be positive, got {bin_ns}"
        )));
    }
    let ordered = psi.time_ordered();
    let mut t = Vec::with_capacity(ordered.len() + 1);
    let mut y = Vec::with_capacity(ordered.len() + 1);
    let intensity = |tau: f64, a: Complex64| a.norm_sqr() * motional.suppression(tau);
    for (tau, a) in ordered {
        if tau == 0.0 {
            // Replace the midpoint sample by both one-sided limits.
            t.push(0.0);
            y.push(0.0);
            t.push(0.0);
            y.push(intensity(0.0, psi.jump));
        } else {
            t.push(tau);
            y.push(intensity(tau, a));
        }
    }
    let (lo, hi) = (t[0], *t.last().expect("non-empty"));
    let first = (lo / bin_ns).ceil() as i64;
    let last = (hi / bin_ns).floor() as i64;
    if last <= first {
        return Err(Error::WindowTooShort {
            bins: 0,
            required: 1,
        });
    }
    let f = PiecewiseLinear::new(t, y);
    let mut delays = Vec::with_capacity((last - first) as usize);
    let mut values = Vec::with_capacity((last - first) as usize);
    let mut prev = f.integral_to(first as f64 * bin_ns);
    for m in first..last {
        let next = f.integral_to((m + 1) as f64 * bin_ns);
        delays.push((m as f64 + 0.5) * bin_ns);
        values.push((next - prev).max(0.0));
        prev = next;
    }
    Ok(CorrelationTrace {
        bin_ns,
        delays_ns: delays,
        values,
    })
}

/// Result of the phase-matching construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatch {
    pub k4_direction: [f64; 3],
    /// Angle of `k4` from the z axis in the x-z plane (degrees, positive towards +x).
    pub k4_angle_deg: f64,
    /// `| |k1 + k2 - k3| - 2 pi / lambda4 |` in rad/m.
    pub mismatch_radpm: f64,
}

fn wave_vector(wavelength_nm: f64, angle_deg: f64) -> [f64; 3] {
    let k = 2.0 * PI / (wavelength_nm * 1e-9);
    let a = angle_deg.to_radians();
    [k * a.sin(), 0.0, k * a.cos()]
}

/// `k4 = k1 + k2 - k3` with coplanar beams in the x-z plane: k1 at `+theta1`,
/// k2 at `-theta2`, k3 at `-theta3` from the z axis.
pub fn phase_match(geom: &BeamGeometry) -> PhaseMatch {
    let [l1, l2, l3, l4] = geom.wavelengths_nm;
    let k1 = wave_vector(l1, geom.theta1_deg);
    let k2 = wave_vector(l2, -geom.theta2_deg);
    let k3 = wave_vector(l3, -geom.theta3_deg);
    let k4: Vec<f64> = (0..3).map(|i| k1[i] + k2[i] - k3[i]).collect();
    let norm = k4.iter().map(|x| x * x).sum::<f64>().sqrt();
    PhaseMatch {
        k4_direction: [k4[0] / norm, k4[1] / norm, k4[2] / norm],
        k4_angle_deg: k4[0].atan2(k4[2]).to_degrees(),
        mismatch_radpm: (norm - 2.0 * PI / (l4 * 1e-9)).abs(),
    }
}

/// `N + (N^2 - N) exp(-(k v_t t)^2 / 2)` for a phased ensemble of `n_atoms`.
pub fn grating_intensity(n_atoms: u64, k_radpm: f64, v_t_mps: f64, t_ns: f64) -> Result<f64> {
    if n_atoms < 1 {
        return Err(Error::Domain("n_atoms must be >= 1".into()));
    }
    let n = n_atoms as f64;
    let x = k_radpm * v_t_mps * t_ns * 1e-9;
    Ok(n + (n * n - n) * (-0.5 * x * x).exp())
}

/// Velocity spread `Gamma lambda` (m/s) of atoms contributing within a
/// two-photon linewidth.
pub fn velocity_class_width(
    two_photon_linewidth_mhz: f64,
    two_photon_wavelength_nm: f64,
) -> Result<f64> {
    if !(two_photon_linewidth_mhz > 0.0 && two_photon_wavelength_nm > 0.0) {
        return Err(Error::Domain(
            "linewidth and wavelength must be positive".into(),
        ));
    }
    Ok(two_photon_linewidth_mhz * 1e6 * two_photon_wavelength_nm * 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{build_transmission, FilterSpec};
    use crate::scheme::builtin;

    fn small_grid() -> FrequencyGrid {
        FrequencyGrid {
            span_mhz: 8192.0,
            n_points: 1 << 15,
        }
    }

    #[test]
    fn unfiltered_amplitude_matches_closed_form() {
        let grid = small_grid();
        let spec = builtin("on_resonant").unwrap().source;
        let filt = build_transmission(&FilterSpec::none(), &grid).unwrap();
        let psi = pair_amplitude(&spec, &filt).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (tau, a) in psi.time_ordered() {
            if (0.0..=200.0).contains(&tau) {
                let want = spec.free_amplitude(tau);
                num += (a - want).norm_sqr();
                den += want.norm_sqr();
            }
        }
        assert!((num / den).sqrt() < 1e-6, "{}", (num / den).sqrt());
    }

    #[test]
    fn interpolation_uses_one_sided_limits() {
        let grid = small_grid();
        let spec = builtin("off_resonant").unwrap().source;
        let filt = build_transmission(&FilterSpec::none(), &grid).unwrap();
        let psi = pair_amplitude(&spec, &filt).unwrap();
        let dt = grid.dt_ns();
        assert!((psi.at_ns(0.5 * dt) - spec.free_amplitude(0.5 * dt)).norm() < 1e-4);
        assert!(psi.at_ns(-0.5 * dt).norm() < 1e-4);
        assert!(psi.at_ns(1e9).norm() == 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let spec = builtin("off_resonant").unwrap().source;
        let filt = build_transmission(&FilterSpec::none(), &small_grid()).unwrap();
        let other = FrequencyGrid {
            span_mhz: 4096.0,
            n_points: 1 << 15,
        };
        assert!(matches!(
            pair_amplitude_on(&spec, &other, &filt),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn binning_integrates_exactly() {
        // Unfiltered single path: bins integrate exp(-tau/tau_nat).
        let grid = small_grid();
        let spec = builtin("off_resonant").unwrap().source;
        let filt = build_transmission(&FilterSpec::none(), &grid).unwrap();
        let psi = pair_amplitude(&spec, &filt).unwrap();
        let motional = MotionalParams {
            v_t_mps: 0.0,
            wavelength_nm: 780.0,
        };
        let trace = ccf(&psi, &motional, 1.0).unwrap();
        let tau = 1e3 / (2.0 * PI * 6.05);
        for m in [0usize, 1, 5, 30] {
            let i = trace.bin_of(m as f64 + 0.5).unwrap();
            let want = tau * ((-(m as f64) / tau).exp() - (-((m + 1) as f64) / tau).exp());
            assert!((trace.values[i] / want - 1.0).abs() < 1e-5, "bin {m}");
        }
        assert!(trace.values[trace.bin_of(-0.5).unwrap()] < 1e-8);
    }

    #[test]
    fn suppression_at_dephasing_time() {
        let m = MotionalParams {
            v_t_mps: 6.6,
            wavelength_nm: 780.0,
        };
        assert!((m.dephasing_time_ns() - 18.81).abs() < 0.01);
        assert!((m.suppression(m.dephasing_time_ns()) - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(
            MotionalParams {
                v_t_mps: 0.0,
                wavelength_nm: 780.0
            }
            .suppression(50.0),
            1.0
        );
    }

    #[test]
    fn grating_limits() {
        let k = 2.0 * PI / 780e-9;
        assert_eq!(grating_intensity(50, k, 6.6, 0.0).unwrap(), 2500.0);
        assert!((grating_intensity(50, k, 6.6, 1e6).unwrap() - 50.0).abs() < 1e-9);
        for t in [0.0, 3.0, 100.0] {
            assert_eq!(grating_intensity(1, k, 6.6, t).unwrap(), 1.0);
        }
        assert!(grating_intensity(0, k, 6.6, 1.0).is_err());
    }

    #[test]
    fn velocity_class_examples() {
        assert!((velocity_class_width(5.0, 500.0).unwrap() - 2.5).abs() < 1e-12);
        assert!((velocity_class_width(10.0, 500.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((velocity_class_width(5.0, 1000.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(velocity_class_width(0.0, 500.0).is_err());
    }

    #[test]
    fn collinear_mismatch_is_energy_bookkeeping() {
        let geom = BeamGeometry {
            theta1_deg: 0.0,
            theta2_deg: 0.0,
            theta3_deg: 0.0,
            ..BeamGeometry::default()
        };
        let pm = phase_match(&geom);
        let k = |l: f64| 2.0 * PI / (l * 1e-9);
        let want = (k(795.0) + k(1324.0) - k(1367.0) - k(780.0)).abs();
        assert!((pm.mismatch_radpm - want).abs() < 1e-6 * k(780.0));
        assert!(pm.k4_direction[0].abs() < 1e-12 && (pm.k4_direction[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirrored_geometry_mirrors_k4() {
        let geom = BeamGeometry::default();
        let pm = phase_match(&geom);
        assert!(pm.k4_direction[1] == 0.0);
        let flipped = BeamGeometry {
            theta1_deg: -geom.theta1_deg,
            theta2_deg: -geom.theta2_deg,
            theta3_deg: -geom.theta3_deg,
            ..geom
        };
        let pf = phase_match(&flipped);
        assert!((pf.k4_direction[0] + pm.k4_direction[0]).abs() < 1e-12);
        assert!((pf.k4_direction[2] - pm.k4_direction[2]).abs() < 1e-12);
        assert!((pf.k4_angle_deg + pm.k4_angle_deg).abs() < 1e-9);
    }
}
