//! The filter cell as a frequency-dependent beamsplitter: amplitude
//! transmission `t(nu)` from a normalized response and an optical depth, and
//! the matching time-domain kernel.
//!
//! `t(nu) = exp(-(od/2) a(nu))`, where `a` is the medium response scaled so
//! that the undriven absorption peak has `Re a = 1`. The intensity
//! transmission at that peak is then exactly `exp(-od)`.
//!
//! The kernel is `T_n = (1/N) sum_k t_k exp(-i 2 pi nu_k t_n)`, so a flat
//! `t = 1` gives a unit impulse and `sum |T_n|^2 = (1/N) sum |t_k|^2`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::io::fmt_f64;
use crate::response::{
    doppler_lorentzian_poles, probe_response_poles, DrivenSystemSpec, PoleSet,
    SusceptibilityProfile, ThermalDistribution,
};
use crate::scheme::{FrequencyGrid, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterModel {
    None,
    TwoLevelDoppler,
    DrivenMultilevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub model: FilterModel,
    /// Intensity optical depth at the undriven absorption peak.
    pub od: f64,
    /// Population linewidth of the filter line (MHz).
    pub linewidth_mhz: f64,
    pub v_t_mps: f64,
    pub wavelength_nm: f64,
    pub center_detuning_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driven: Option<DrivenSystemSpec>,
}

impl FilterSpec {
    pub fn none() -> Self {
        Self {
            model: FilterModel::None,
            od: 0.0,
            linewidth_mhz: 0.0,
            v_t_mps: 0.0,
            wavelength_nm: 780.0,
            center_detuning_mhz: 0.0,
            driven: None,
        }
    }

    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        if !(self.od >= 0.0 && self.od.is_finite()) {
            out.push(Violation::new(
                format!("{path}.od"),
                "optical depth must be finite and >= 0",
            ));
        }
        if self.model != FilterModel::None
            && !(self.linewidth_mhz > 0.0 && self.linewidth_mhz.is_finite())
        {
            out.push(Violation::new(
                format!("{path}.linewidth_mhz"),
                "linewidth must be positive",
            ));
        }
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
        if !self.center_detuning_mhz.is_finite() {
            out.push(Violation::new(
                format!("{path}.center_detuning_mhz"),
                "must be finite",
            ));
        }
        match (self.model, &self.driven) {
            (FilterModel::DrivenMultilevel, None) => out.push(Violation::new(
                format!("{path}.driven"),
                "driven_multilevel requires a driven system",
            )),
            (FilterModel::DrivenMultilevel, Some(d)) => d.check(&format!("{path}.driven"), out),
            (_, Some(_)) => out.push(Violation::new(
                format!("{path}.driven"),
                "driven system given but model is not driven_multilevel",
            )),
            _ => {}
        }
    }

    fn validated(&self) -> Result<()> {
        let mut v = Vec::new();
        self.check("filter", &mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }
}

/// Medium response normalized to unit peak absorption, on the discrete-time
/// (periodized) spectrum so that its kernel is exactly causal.
#[derive(Debug, Clone)]
pub struct NormalizedResponse {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
}

impl NormalizedResponse {
    fn flat(grid: FrequencyGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n_points],
        }
    }

    pub fn transmission(&self, od: f64) -> FilterTransmission {
        let t_values: Vec<Complex64> = self.values.iter().map(|a| (-0.5 * od * a).exp()).collect();
        FilterTransmission::from_values(self.grid, t_values)
    }

    /// Intensity transmission `exp(-od Re a)`.
    pub fn intensity(&self, od: f64) -> Vec<f64> {
        self.values.iter().map(|a| (-od * a.re).exp()).collect()
    }

    pub fn width_at_od(&self, od: f64) -> f64 {
        half_transmission_width(&self.grid, &self.intensity(od))
    }
}

fn response_poles(spec: &FilterSpec, driven: &DrivenSystemSpec) -> Result<PoleSet> {
    let dist = ThermalDistribution::resolving(
        spec.v_t_mps,
        driven.probe_wavelength_nm(),
        0.5 * spec.linewidth_mhz,
    );
    probe_response_poles(driven, &dist)
}

/// Normalized response of the medium described by `spec` (independent of `od`).
pub fn normalized_response(spec: &FilterSpec, grid: &FrequencyGrid) -> Result<NormalizedResponse> {
    spec.validated()?;
    match spec.model {
        FilterModel::None => Ok(NormalizedResponse::flat(*grid)),
        FilterModel::TwoLevelDoppler => {
            let g = 0.5 * spec.linewidth_mhz;
            let dist = ThermalDistribution::resolving(spec.v_t_mps, spec.wavelength_nm, g);
            let poles =
                doppler_lorentzian_poles(spec.center_detuning_mhz, g, &dist, spec.wavelength_nm)?;
            normalize(SusceptibilityProfile::from_poles(*grid, &poles), None)
        }
        FilterModel::DrivenMultilevel => {
            let driven = spec.driven.as_ref().expect("validated");
            let shifted = |p: PoleSet| PoleSet {
                poles: p
                    .poles
                    .into_iter()
                    .map(|mut q| {
                        q.center_mhz += spec.center_detuning_mhz;
                        q
                    })
                    .collect(),
            };
            let driven_profile =
                SusceptibilityProfile::from_poles(*grid, &shifted(response_poles(spec, driven)?));
            let reference = SusceptibilityProfile::from_poles(
                *grid,
                &shifted(response_poles(spec, &driven.undriven())?),
            );
            normalize(driven_profile, Some(&reference))
        }
    }
}

/// Scales `profile` by the peak of `-Re chi` of the reference (or of the
/// profile itself), giving `a = -chi / peak`.
fn normalize(
    profile: SusceptibilityProfile,
    reference: Option<&SusceptibilityProfile>,
) -> Result<NormalizedResponse> {
    let r = reference.unwrap_or(&profile);
    if !profile.is_finite() || !r.is_finite() {
        return Err(Error::Domain("filter response is not finite".into()));
    }
    let peak = r
        .periodized
        .iter()
        .map(|c| -c.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Domain(
            "undriven filter response has no absorption on the grid".into(),
        ));
    }
    Ok(NormalizedResponse {
        grid: profile.grid,
        values: profile.periodized.iter().map(|c| -c / peak).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct FilterTransmission {
    pub grid: FrequencyGrid,
    pub t_values: Vec<Complex64>,
    /// FFT-ordered time samples, spacing `grid.dt_ns()`.
    pub kernel: Vec<Complex64>,
    pub bandwidth_50pct_mhz: f64,
}

impl FilterTransmission {
    /// Builds the transmission from values and fills the kernel.
    pub fn from_values(grid: FrequencyGrid, t_values: Vec<Complex64>) -> Self {
        let intensity: Vec<f64> = t_values.iter().map(|t| t.norm_sqr()).collect();
        let bandwidth_50pct_mhz = half_transmission_width(&grid, &intensity);
        time_kernel(Self {
            grid,
            t_values,
            kernel: Vec::new(),
            bandwidth_50pct_mhz,
        })
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.t_values.iter().map(|t| t.norm_sqr()).collect()
    }

    /// Largest `|t|`; above 1 the medium amplifies.
    pub fn max_modulus(&self) -> f64 {
        self.t_values.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    /// Detunings (MHz) where `|t| > 1 + 1e-9`.
    pub fn gain_detunings(&self) -> Vec<f64> {
        self.t_values
            .iter()
            .enumerate()
            .filter(|(_, t)| t.norm() > 1.0 + 1e-9)
            .map(|(k, _)| self.grid.detuning(k))
            .collect()
    }

    /// Cascade of two filters on the same grid.
    pub fn compose(&self, other: &FilterTransmission) -> Result<FilterTransmission> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch {
                source_points: self.grid.n_points,
                source_span: self.grid.span_mhz,
                filter_points: other.grid.n_points,
                filter_span: other.grid.span_mhz,
            });
        }
        let t = self
            .t_values
            .iter()
            .zip(&other.t_values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(FilterTransmission::from_values(self.grid, t))
    }

    /// Writes `detuning_mhz, re_t, im_t, intensity_transmission`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "detuning_mhz,re_t,im_t,intensity_transmission")?;
        for (k, t) in self.t_values.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(self.grid.detuning(k)),
                fmt_f64(t.re),
                fmt_f64(t.im),
                fmt_f64(t.norm_sqr())
            )?;
        }
        Ok(())
    }

    /// Writes `time_ns, re_kernel, im_kernel` in increasing time.
    pub fn write_kernel_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_ns,re_kernel,im_kernel")?;
        let n = self.grid.n_points;
        for j in 0..n {
            let idx = (j + n / 2) % n;
            let k = self.kernel[idx];
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.grid.fft_time_ns(idx)),
                fmt_f64(k.re),
                fmt_f64(k.im)
            )?;
        }
        Ok(())
    }
}

pub fn build_transmission(spec: &FilterSpec, grid: &FrequencyGrid) -> Result<FilterTransmission> {
    if spec.model == FilterModel::None {
        spec.validated()?;
        return Ok(FilterTransmission::from_values(
            *grid,
            vec![Complex64::new(1.0, 0.0); grid.n_points],
        ));
    }
    Ok(normalized_response(spec, grid)?.transmission(spec.od))
}

/// Fills `kernel` from `t_values`.
pub fn time_kernel(mut t: FilterTransmission) -> FilterTransmission {
    let scale = 1.0 / t.grid.span_mhz;
    t.kernel = fft::freq_to_time(&t.t_values, &t.grid)
        .into_iter()
        .map(|v| v * scale)
        .collect();
    t
}

/// Full width (MHz) between the outermost crossings of 50% intensity
/// transmission, linearly interpolated; 0 when transmission stays above 50%.
pub fn half_transmission_width(grid: &FrequencyGrid, intensity: &[f64]) -> f64 {
    let below = |k: usize| intensity[k] < 0.5;
    let Some(first) = (0..intensity.len()).find(|&k| below(k)) else {
        return 0.0;
    };
    let last = (0..intensity.len())
        .rev()
        .find(|&k| below(k))
        .expect("exists");
    let crossing = |inside: usize, outside: Option<usize>| match outside {
        Some(o) => {
            let (yi, yo) = (intensity[inside], intensity[o]);
            let f = (0.5 - yi) / (yo - yi);
            grid.detuning(inside) + f * (grid.detuning(o) - grid.detuning(inside))
        }
        None => grid.detuning(inside),
    };
    let lo = crossing(first, first.checked_sub(1));
    let hi = crossing(last, (last + 1 < intensity.len()).then_some(last + 1));
    hi - lo
}

pub fn filter_width_mhz(spec: &FilterSpec, grid: &FrequencyGrid) -> Result<f64> {
    Ok(build_transmission(spec, grid)?.bandwidth_50pct_mhz)
}
