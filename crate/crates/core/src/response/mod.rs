//! Linear response of the filter medium: single velocity-class Lorentzians,
//! thermal (Doppler) averaging, and the probe response of a strongly driven
//! multilevel atom.
//!
//! Responses are expressed in units of 1/MHz, in the form `1/(i delta - g)`
//! with `g` the amplitude half-width (half the population linewidth).

mod driven;
mod poles;

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::scheme::FrequencyGrid;

pub use driven::{
    driven_steady_state, probe_response, probe_response_poles, DensityMatrix, DrivenSystemSpec,
};
pub use poles::{Pole, PoleSet, SynthesizedSpectrum};

/// Complex response on a grid.
///
/// `values` are the physical response. `periodized` holds the discrete-time
/// counterpart (the sum over periodic images of the grid span), which is what
/// downstream FFT filtering consumes so that causal responses stay causal on
/// the discrete time axis. When no pole representation exists the two are
/// identical.
#[derive(Debug, Clone)]
pub struct SusceptibilityProfile {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
    pub periodized: Vec<Complex64>,
}

impl SusceptibilityProfile {
    pub fn from_values(grid: FrequencyGrid, values: Vec<Complex64>) -> Self {
        Self {
            grid,
            periodized: values.clone(),
            values,
        }
    }

    pub fn from_poles(grid: FrequencyGrid, poles: &PoleSet) -> Self {
        let s = poles.synthesize(&grid);
        Self {
            grid,
            values: s.exact,
            periodized: s.periodized,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .chain(&self.periodized)
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Writes `detuning_mhz, re_chi, im_chi`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "detuning_mhz,re_chi,im_chi")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.grid.detuning(k)),
                fmt_f64(v.re),
                fmt_f64(v.im)
            )?;
        }
        Ok(())
    }
}

/// `1/(i delta - gamma)`, with `gamma_mhz` the amplitude half-width.
pub fn lorentzian_chi(detuning_mhz: f64, gamma_mhz: f64) -> Result<Complex64> {
    if !(gamma_mhz > 0.0) {
        return Err(Error::Domain(format!(
            "lorentzian half-width must be positive, got {gamma_mhz}"
        )));
    }
    Ok(1.0 / Complex64::new(-gamma_mhz, detuning_mhz))
}

/// Half-width of the velocity range covered, in units of `v_t`.
const VELOCITY_RANGE: f64 = 4.5;

/// One-dimensional Maxwell-Boltzmann distribution with weight
/// `exp(-v^2/v_t^2)`, sampled on a uniform grid of odd size.
///
/// The uniform (trapezoid) rule converges geometrically for Lorentzian
/// integrands once the node spacing, expressed as a Doppler shift, is a
/// fraction of the line half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalDistribution {
    pub v_t: f64,
    pub n_classes: usize,
}

impl ThermalDistribution {
    pub fn new(v_t: f64, n_classes: usize) -> Result<Self> {
        if !(v_t >= 0.0 && v_t.is_finite()) {
            return Err(Error::Domain(format!(
                "thermal speed must be >= 0, got {v_t}"
            )));
        }
        if n_classes == 0 || n_classes % 2 == 0 {
            return Err(Error::Domain(format!(
                "n_classes must be odd and >= 1, got {n_classes}"
            )));
        }
        Ok(Self { v_t, n_classes })
    }

    /// Node count whose Doppler-shift spacing is a third of `half_width_mhz`.
    pub fn resolving(v_t: f64, wavelength_nm: f64, half_width_mhz: f64) -> Self {
        if v_t == 0.0 {
            return Self { v_t, n_classes: 1 };
        }
        let max_shift = VELOCITY_RANGE * doppler_shift_mhz(v_t, wavelength_nm);
        let spacing = half_width_mhz / 3.0;
        let half = (max_shift / spacing).ceil() as usize;
        Self {
            v_t,
            n_classes: 2 * half.max(1) + 1,
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            v_t: self.v_t,
            n_classes: 2 * self.n_classes - 1,
        }
    }

    /// `(velocity m/s, normalized weight)` pairs in increasing velocity.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        if self.v_t == 0.0 || self.n_classes == 1 {
            return vec![(0.0, 1.0)];
        }
        let half = (self.n_classes / 2) as f64;
        let dv = VELOCITY_RANGE * self.v_t / half;
        let raw: Vec<(f64, f64)> = (0..self.n_classes)
            .map(|j| {
                let v = (j as f64 - half) * dv;
                (v, (-(v / self.v_t).powi(2)).exp())
            })
            .collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(v, w)| (v, w / total)).collect()
    }
}

/// First-order Doppler shift `v / lambda` in MHz.
pub fn doppler_shift_mhz(velocity_mps: f64, wavelength_nm: f64) -> f64 {
    velocity_mps * 1e3 / wavelength_nm
}

/// Thermal average of an arbitrary single-class response. Class `v` sees the
/// grid detuning shifted by `v/lambda`; `chi_single` receives the shifted
/// detuning and the velocity.
///
/// Evaluated directly (classes x grid points). Prefer [`doppler_lorentzian`]
/// for Lorentzian lines on large grids.
pub fn doppler_average<F>(
    chi_single: F,
    dist: &ThermalDistribution,
    wavelength_nm: f64,
    grid: &FrequencyGrid,
) -> SusceptibilityProfile
where
    F: Fn(f64, f64) -> Complex64,
{
    let nodes = dist.nodes();
    let values = grid
        .detunings()
        .iter()
        .map(|&nu| {
            nodes
                .iter()
                .map(|&(v, w)| w * chi_single(nu - doppler_shift_mhz(v, wavelength_nm), v))
                .sum()
        })
        .collect();
    SusceptibilityProfile::from_values(*grid, values)
}

/// Pole set of a thermally averaged Lorentzian line.
pub fn doppler_lorentzian_poles(
    center_mhz: f64,
    gamma_mhz: f64,
    dist: &ThermalDistribution,
    wavelength_nm: f64,
) -> Result<PoleSet> {
    if !(gamma_mhz > 0.0) {
        return Err(Error::Domain(format!(
            "lorentzian half-width must be positive, got {gamma_mhz}"
        )));
    }
    Ok(PoleSet {
        poles: dist
            .nodes()
            .into_iter()
            .map(|(v, w)| Pole {
                residue: w.into(),
                center_mhz: center_mhz + doppler_shift_mhz(v, wavelength_nm),
                half_width_mhz: gamma_mhz,
            })
            .collect(),
    })
}

/// Thermally averaged two-level response `<1/(i(delta - kv/2pi) - gamma)>`.
pub fn doppler_lorentzian(
    center_mhz: f64,
    gamma_mhz: f64,
    dist: &ThermalDistribution,
    wavelength_nm: f64,
    grid: &FrequencyGrid,
) -> Result<SusceptibilityProfile> {
    let poles = doppler_lorentzian_poles(center_mhz, gamma_mhz, dist, wavelength_nm)?;
    Ok(SusceptibilityProfile::from_poles(*grid, &poles))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn lorentzian_examples() {
        assert!(close(
            lorentzian_chi(0.0, 3.0).unwrap(),
            Complex64::new(-1.0 / 3.0, 0.0),
            1e-15
        ));
        assert!(close(
            lorentzian_chi(3.0, 3.0).unwrap(),
            Complex64::new(-1.0, -1.0) / 6.0,
            1e-15
        ));
        for d in [-50.0, -3.3, 0.7, 12.0] {
            assert!(close(
                lorentzian_chi(-d, 3.0).unwrap(),
                lorentzian_chi(d, 3.0).unwrap().conj(),
                1e-15
            ));
        }
        assert!(lorentzian_chi(1.0, 0.0).is_err());
        assert!(lorentzian_chi(1.0, -1.0).is_err());
    }

    #[test]
    fn zero_speed_average_is_the_single_class() {
        let grid = FrequencyGrid {
            span_mhz: 2048.0,
            n_points: 1 << 14,
        };
        let dist = ThermalDistribution::new(0.0, 1).unwrap();
        let p = doppler_average(|d, _| lorentzian_chi(d, 3.0).unwrap(), &dist, 780.0, &grid);
        for k in (0..grid.n_points).step_by(211) {
            assert_eq!(p.values[k], lorentzian_chi(grid.detuning(k), 3.0).unwrap());
        }
    }

    #[test]
    fn nodes_are_symmetric_and_normalized() {
        let dist = ThermalDistribution::resolving(270.0, 780.0, 3.0);
        assert_eq!(dist.n_classes % 2, 1);
        let nodes = dist.nodes();
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let n = nodes.len();
        for j in 0..n {
            assert!((nodes[j].0 + nodes[n - 1 - j].0).abs() < 1e-9);
            assert_eq!(nodes[j].1, nodes[n - 1 - j].1);
        }
    }

    #[test]
    fn fast_and_direct_averages_agree() {
        let grid = FrequencyGrid {
            span_mhz: 4096.0,
            n_points: 1 << 14,
        };
        let dist = ThermalDistribution::resolving(270.0, 780.0, 3.0);
        let fast = doppler_lorentzian(0.0, 3.0, &dist, 780.0, &grid).unwrap();
        let direct = doppler_average(|d, _| lorentzian_chi(d, 3.0).unwrap(), &dist, 780.0, &grid);
        let scale = fast.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = fast
            .values
            .iter()
            .zip(&direct.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10 * scale, "{err}");
    }

    #[test]
    fn averaged_profile_keeps_conjugate_symmetry() {
        let grid = FrequencyGrid {
            span_mhz: 4096.0,
            n_points: 1 << 14,
        };
        let dist = ThermalDistribution::resolving(270.0, 780.0, 3.0);
        let p = doppler_lorentzian(0.0, 3.0, &dist, 780.0, &grid).unwrap();
        let scale = p.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for k in (1..grid.n_points).step_by(37) {
            let m = grid.mirror_index(k).unwrap();
            assert!((p.values[m] - p.values[k].conj()).norm() < 1e-10 * scale);
            assert!((p.periodized[m] - p.periodized[k].conj()).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(ThermalDistribution::new(-1.0, 3).is_err());
        assert!(ThermalDistribution::new(10.0, 4).is_err());
        assert!(ThermalDistribution::new(10.0, 0).is_err());
    }
}
