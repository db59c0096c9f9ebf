//! The full forward model for one scenario: filter, pair amplitude,
//! correlation trace and the standard analyses of it.

use serde::Serialize;

use crate::analysis::{
    beat_spectrum, fit_decaying_beat, fit_motional, BeatSpectrum, FitOptions, FitResult,
    MotionalFit,
};
use crate::biphoton::{ccf, pair_amplitude, CorrelationTrace, PairAmplitude};
use crate::error::Result;
use crate::filter::{build_transmission, FilterTransmission};
use crate::scheme::Scenario;

pub struct Simulation {
    pub scenario: Scenario,
    pub transmission: FilterTransmission,
    pub amplitude: PairAmplitude,
    pub trace: CorrelationTrace,
}

/// Analyses of the trace over the scenario's fit window. Failures are
/// recorded rather than raised: a trace without beats has no beat fit.
#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub fit_window_ns: [f64; 2],
    pub equivalent_width_ns: f64,
    pub zero_delay_bin: f64,
    pub beat_peak_mhz: Option<f64>,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    pub motional_fit: Option<MotionalFit>,
    pub motional_fit_error: Option<String>,
    /// Gain (|t| > 1) anywhere in the filter.
    pub filter_max_modulus: f64,
    pub filter_width_mhz: f64,
}

/// Natural decay time (ns) of the intensity for the first path carrying amplitude.
pub fn natural_tau_ns(scenario: &Scenario) -> f64 {
    let lw = scenario
        .source
        .paths
        .iter()
        .find(|p| p.amplitude.norm() > 0.0)
        .or(scenario.source.paths.first())
        .map(|p| p.linewidth_mhz)
        .unwrap_or(f64::NAN);
    1e3 / (2.0 * std::f64::consts::PI * lw)
}

pub fn simulate(scenario: &Scenario) -> Result<Simulation> {
    scenario.validate()?;
    let transmission = build_transmission(&scenario.filter, &scenario.grid)?;
    let amplitude = pair_amplitude(&scenario.source, &transmission)?;
    let trace = ccf(&amplitude, &scenario.motional, scenario.detector_bin_ns)?;
    Ok(Simulation {
        scenario: scenario.clone(),
        transmission,
        amplitude,
        trace,
    })
}

impl Simulation {
    pub fn window(&self) -> (f64, f64) {
        (
            self.scenario.fit_window_ns[0],
            self.scenario.fit_window_ns[1],
        )
    }

    pub fn beat_spectrum(&self) -> Result<BeatSpectrum> {
        beat_spectrum(&self.trace, self.window())
    }

    pub fn report(&self) -> TraceReport {
        let window = self.window();
        let options = FitOptions::default();
        let fit = fit_decaying_beat(&self.trace, window, &options);
        let motional = fit_motional(
            &self.trace,
            window,
            natural_tau_ns(&self.scenario),
            self.scenario.motional.wavelength_nm,
            &options,
        );
        let zero = self
            .trace
            .bin_of(0.5 * self.trace.bin_ns)
            .map(|i| self.trace.values[i])
            .unwrap_or(0.0);
        TraceReport {
            fit_window_ns: self.scenario.fit_window_ns,
            equivalent_width_ns: self.trace.equivalent_width_ns(),
            zero_delay_bin: zero,
            beat_peak_mhz: self.beat_spectrum().ok().map(|s| s.peak_freq_mhz),
            fit_error: fit.as_ref().err().map(|e| e.to_string()),
            fit: fit.ok(),
            motional_fit_error: motional.as_ref().err().map(|e| e.to_string()),
            motional_fit: motional.ok(),
            filter_max_modulus: self.transmission.max_modulus(),
            filter_width_mhz: self.transmission.bandwidth_50pct_mhz,
        }
    }
}
