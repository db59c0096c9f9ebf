//! Reading traces: beat spectra, decaying-oscillation fits, motional fits and
//! the two parameter scans.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::biphoton::{ccf, pair_amplitude, CorrelationTrace};
use crate::error::{Error, Result};
use crate::filter::{
    build_transmission, normalized_response, FilterModel, FilterSpec, FilterTransmission,
};
use crate::scheme::Scenario;

/// Minimum number of bins for a beat spectrum.
pub const MIN_SPECTRUM_BINS: usize = 16;
/// Minimum number of bins for a six-parameter fit.
pub const MIN_FIT_BINS: usize = 7;
/// Largest filter-cell optical depth tried when realizing a width.
pub const FILTER_CELL_OD_CAP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSpectrum {
    pub freqs_mhz: Vec<f64>,
    pub power: Vec<f64>,
    pub peak_freq_mhz: f64,
    pub peak_power: f64,
}

impl BeatSpectrum {
    pub fn resolution_mhz(&self) -> f64 {
        self.freqs_mhz.get(1).copied().unwrap_or(0.0)
    }

    /// Power in the bin nearest `freq_mhz`.
    pub fn power_at(&self, freq_mhz: f64) -> f64 {
        let k = (freq_mhz / self.resolution_mhz()).round() as usize;
        self.power.get(k).copied().unwrap_or(0.0)
    }
}

fn window_indices(trace: &CorrelationTrace, window: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::DegenerateWindow(format!(
            "window [{lo}, {hi}] ns is empty"
        )));
    }
    let (Some(first), Some(last)) = (trace.delays_ns.first(), trace.delays_ns.last()) else {
        return Err(Error::DegenerateWindow("trace has no bins".into()));
    };
    if lo < first - 0.5 * trace.bin_ns || hi > last + 0.5 * trace.bin_ns {
        return Err(Error::DegenerateWindow(format!(
            "window [{lo}, {hi}] ns outside trace range [{first}, {last}] ns"
        )));
    }
    Ok((0..trace.values.len())
        .filter(|&i| trace.delays_ns[i] >= lo && trace.delays_ns[i] <= hi)
        .collect())
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// One-sided power spectrum of a uniformly sampled real series after mean
/// subtraction and a Hann window. `sum(power) = mean(z^2)` for the windowed
/// series `z`.
fn power_spectrum(y: &[f64], bin_ns: f64) -> BeatSpectrum {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let w = hann(n);
    let mut buf: Vec<Complex64> = y
        .iter()
        .zip(&w)
        .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let norm = 1.0 / (n as f64 * n as f64);
    let power: Vec<f64> = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let freqs_mhz: Vec<f64> = (0..=half)
        .map(|k| k as f64 * 1e3 / (n as f64 * bin_ns))
        .collect();
    // Skip the low-frequency lobe left by the trace's overall trend: the run of
    // decreasing power that starts next to zero frequency.
    let mut start = 1.min(half);
    while start < half && power[start + 1] <= power[start] {
        start += 1;
    }
    if start == half {
        start = 1.min(half);
    }
    let (mut peak_k, mut peak_power) = (start, 0.0);
    for k in start..=half {
        if power[k] > peak_power {
            peak_power = power[k];
            peak_k = k;
        }
    }
    BeatSpectrum {
        peak_freq_mhz: freqs_mhz[peak_k],
        peak_power,
        freqs_mhz,
        power,
    }
}

/// Power spectrum of the trace restricted to `window` (ns). Resolution is the
/// inverse window length. The reported peak ignores zero frequency and the
/// decaying lobe around it.
pub fn beat_spectrum(trace: &CorrelationTrace, window: (f64, f64)) -> Result<BeatSpectrum> {
    let idx = window_indices(trace, window)?;
    if idx.len() < MIN_SPECTRUM_BINS {
        return Err(Error::WindowTooShort {
            bins: idx.len(),
            required: MIN_SPECTRUM_BINS,
        });
    }
    let y: Vec<f64> = idx.iter().map(|&i| trace.values[i]).collect();
    Ok(power_spectrum(&y, trace.bin_ns))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// `1/max(y, 1)`, for count histograms.
    Poisson,
}

/// Parameters of `y0 + (a1 + a2 sin^2(pi f t + phi)) exp(-t/tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatParams {
    pub y0: f64,
    pub a1: f64,
    pub a2: f64,
    pub f_mhz: f64,
    pub phi_rad: f64,
    pub tau_ns: f64,
}

impl BeatParams {
    fn to_array(self) -> [f64; 6] {
        [
            self.y0,
            self.a1,
            self.a2,
            self.f_mhz,
            self.phi_rad,
            self.tau_ns,
        ]
    }

    fn from_array(p: [f64; 6]) -> Self {
        Self {
            y0: p[0],
            a1: p[1],
            a2: p[2],
            f_mhz: p[3],
            phi_rad: p[4],
            tau_ns: p[5],
        }
    }

    pub fn eval(&self, t_ns: f64) -> f64 {
        beat_model(&self.to_array(), t_ns).0
    }

    /// Equivalent parameters with `a2 >= 0` and `phi` in `[0, pi)`.
    fn normalized(mut self) -> Self {
        if self.a2 < 0.0 {
            // a2 sin^2(x) = a2 - a2 sin^2(x + pi/2)
            self.a1 += self.a2;
            self.a2 = -self.a2;
            self.phi_rad += 0.5 * PI;
        }
        self.phi_rad = self.phi_rad.rem_euclid(PI);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub y0: f64,
    pub a1: f64,
    pub a2: f64,
    pub f_mhz: f64,
    pub phi_rad: f64,
    pub tau_ns: f64,
    /// One-sigma uncertainties in the order `y0, a1, a2, f_mhz, phi_rad, tau_ns`.
    pub param_uncertainties: [f64; 6],
    pub reduced_chi2: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

impl FitResult {
    pub fn params(&self) -> BeatParams {
        BeatParams {
            y0: self.y0,
            a1: self.a1,
            a2: self.a2,
            f_mhz: self.f_mhz,
            phi_rad: self.phi_rad,
            tau_ns: self.tau_ns,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub initial_guess: Option<BeatParams>,
    pub weighting: Weighting,
}

/// Value and gradient of the decaying-beat model.
fn beat_model(p: &[f64; 6], t: f64) -> (f64, [f64; 6]) {
    let [_, a1, a2, f, phi, tau] = *p;
    let e = (-t / tau).exp();
    let theta = PI * f * t * 1e-3 + phi;
    let s2 = theta.sin().powi(2);
    let sin2 = (2.0 * theta).sin();
    let env = a1 + a2 * s2;
    (
        p[0] + env * e,
        [
            1.0,
            e,
            s2 * e,
            a2 * sin2 * PI * t * 1e-3 * e,
            a2 * sin2 * e,
            env * e * t / (tau * tau),
        ],
    )
}

struct LmOutcome {
    params: [f64; 6],
    covariance: Option<Matrix6<f64>>,
    chi2: f64,
    converged: bool,
    iterations: usize,
}

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-8;

/// Damped Gauss-Newton with multiplicative damping updates.
fn levenberg_marquardt<F>(
    t: &[f64],
    y: &[f64],
    w: &[f64],
    p0: [f64; 6],
    scales: [f64; 6],
    model: F,
) -> LmOutcome
where
    F: Fn(&[f64; 6], f64) -> (f64, [f64; 6]),
{
    let cost = |p: &[f64; 6]| -> f64 {
        t.iter()
            .zip(y)
            .zip(w)
            .map(|((&t, &y), &w)| w * (y - model(p, t).0).powi(2))
            .sum()
    };
    let normal = |p: &[f64; 6]| -> (Matrix6<f64>, Vector6<f64>) {
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for ((&t, &y), &w) in t.iter().zip(y).zip(w) {
            let (v, g) = model(p, t);
            let g = Vector6::from_column_slice(&g);
            jtj += w * g * g.transpose();
            jtr += w * (y - v) * g;
        }
        (jtj, jtr)
    };

    let mut p = p0;
    let mut chi2 = cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal(&p);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..6 {
                trial[i] += step[i];
            }
            let c = cost(&trial);
            if c.is_finite() && c <= chi2 {
                let small =
                    (0..6).all(|i| step[i].abs() <= STEP_TOLERANCE * (trial[i].abs() + scales[i]));
                p = trial;
                chi2 = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !improved {
            // No descent direction at machine precision: a stationary point.
            converged = true;
            break;
        }
    }
    let (jtj, _) = normal(&p);
    LmOutcome {
        params: p,
        covariance: jtj.try_inverse(),
        chi2,
        converged,
        iterations,
    }
}

struct FitData {
    t: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

fn fit_data(trace: &CorrelationTrace, window: (f64, f64), weighting: Weighting) -> Result<FitData> {
    let idx = window_indices(trace, window)?;
    if idx.len() < MIN_FIT_BINS {
        return Err(Error::WindowTooShort {
            bins: idx.len(),
            required: MIN_FIT_BINS,
        });
    }
    let t: Vec<f64> = idx.iter().map(|&i| trace.delays_ns[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| trace.values[i]).collect();
    let w = match weighting {
        Weighting::Uniform => vec![1.0; y.len()],
        Weighting::Poisson => y.iter().map(|v| 1.0 / v.max(1.0)).collect(),
    };
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateWindow(
            "trace is constant over the window".into(),
        ));
    }
    Ok(FitData { t, y, w })
}

/// Weighted linear least squares on the basis `{1, E, E cos, E sin}` at fixed
/// `(f, tau)`; returns the parameters and the residual sum of squares.
fn linear_beat_fit(d: &FitData, f_mhz: f64, tau_ns: f64) -> Option<(BeatParams, f64)> {
    let n = d.t.len();
    let basis = DMatrix::from_fn(n, 4, |i, j| {
        let t = d.t[i];
        let e = (-t / tau_ns).exp();
        let x = 2.0 * PI * f_mhz * t * 1e-3;
        let s = d.w[i].sqrt();
        s * match j {
            0 => 1.0,
            1 => e,
            2 => e * x.cos(),
            _ => e * x.sin(),
        }
    });
    let rhs = DVector::from_fn(n, |i, _| d.w[i].sqrt() * d.y[i]);
    let svd = basis.clone().svd(true, true);
    let c = svd.solve(&rhs, 1e-12).ok()?;
    let rss = (&basis * &c - &rhs).norm_squared();
    // c2 E cos(x) + c3 E sin(x) = -(a2/2) E cos(x + 2 phi)
    let half_a2 = c[2].hypot(c[3]);
    let phi = 0.5 * c[3].atan2(-c[2]);
    let params = BeatParams {
        y0: c[0],
        a1: c[1] - half_a2,
        a2: 2.0 * half_a2,
        f_mhz,
        phi_rad: phi,
        tau_ns,
    };
    Some((params.normalized(), rss))
}

/// Decay constant from a log-linear fit of the local maxima above the floor.
fn envelope_tau(d: &FitData) -> f64 {
    let floor = d.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = d.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - floor;
    let n = d.y.len();
    let mut pts: Vec<(f64, f64)> = (1..n - 1)
        .filter(|&i| d.y[i] > d.y[i - 1] && d.y[i] >= d.y[i + 1])
        .map(|i| (d.t[i], d.y[i] - floor))
        .filter(|&(_, v)| v > 1e-9 * span)
        .collect();
    if pts.len() < 2 {
        pts =
            d.t.iter()
                .zip(&d.y)
                .map(|(&t, &y)| (t, y - floor))
                .filter(|&(_, v)| v > 1e-9 * span)
                .collect();
    }
    let window = d.t[n - 1] - d.t[0];
    if pts.len() < 2 {
        return window;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y.ln() - my), b + (x - mx).powi(2))
    });
    let slope = sxy / sxx;
    if slope < 0.0 && slope.is_finite() {
        (-1.0 / slope).clamp(0.05 * window, 20.0 * window)
    } else {
        window
    }
}

fn initial_beat_guess(d: &FitData, bin_ns: f64) -> BeatParams {
    let tau0 = envelope_tau(d);
    // Remove the non-oscillating part, then locate the beat in the spectrum.
    let n = d.t.len();
    let basis = DMatrix::from_fn(
        n,
        2,
        |i, j| if j == 0 { 1.0 } else { (-d.t[i] / tau0).exp() },
    );
    let rhs = DVector::from_column_slice(&d.y);
    let detrended: Vec<f64> = match basis.clone().svd(true, true).solve(&rhs, 1e-12) {
        Ok(c) => (&rhs - &basis * c).iter().copied().collect(),
        Err(_) => d.y.clone(),
    };
    let spectrum = power_spectrum(&detrended, bin_ns);
    let df = spectrum.resolution_mhz();
    let mut best: Option<(BeatParams, f64)> = None;
    for i in 0..41 {
        let f = (spectrum.peak_freq_mhz + df * (i as f64 - 20.0) / 20.0).max(0.0);
        for j in 0..41 {
            let tau = tau0 * 4f64.powf((j as f64 - 20.0) / 20.0);
            if let Some((p, rss)) = linear_beat_fit(d, f, tau) {
                if best.as_ref().map_or(true, |b| rss < b.1) {
                    best = Some((p, rss));
                }
            }
        }
    }
    best.map(|b| b.0).unwrap_or(BeatParams {
        y0: 0.0,
        a1: 0.0,
        a2: 0.0,
        f_mhz: spectrum.peak_freq_mhz,
        phi_rad: 0.0,
        tau_ns: tau0,
    })
}

fn scales_for(d: &FitData, f_scale: f64, last_scale: f64) -> [f64; 6] {
    let amp =
        d.y.iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
    [amp, amp, amp, f_scale, 1.0, last_scale]
}

fn finish(d: &FitData, lm: &LmOutcome) -> ([f64; 6], f64) {
    let dof = d.t.len().saturating_sub(6).max(1) as f64;
    let reduced = lm.chi2 / dof;
    let sig = match &lm.covariance {
        Some(c) => {
            let mut s = [0.0; 6];
            for i in 0..6 {
                s[i] = (c[(i, i)] * reduced).max(0.0).sqrt();
            }
            s
        }
        None => [f64::NAN; 6],
    };
    (sig, reduced)
}

/// Six-parameter fit of `y0 + (a1 + a2 sin^2(pi f t + phi)) exp(-t/tau)` over
/// the bins whose centers lie in `window` (ns).
pub fn fit_decaying_beat(
    trace: &CorrelationTrace,
    window: (f64, f64),
    options: &FitOptions,
) -> Result<FitResult> {
    let d = fit_data(trace, window, options.weighting)?;
    let guess = options
        .initial_guess
        .unwrap_or_else(|| initial_beat_guess(&d, trace.bin_ns));
    let p0 = guess.to_array();
    let lm = levenberg_marquardt(
        &d.t,
        &d.y,
        &d.w,
        p0,
        scales_for(&d, p0[3].abs().max(1.0), p0[5].abs()),
        beat_model,
    );
    let (sig, reduced) = finish(&d, &lm);
    let p = BeatParams::from_array(lm.params);
    let flipped = p.a2 < 0.0;
    let p = p.normalized();
    let mut sig = sig;
    if flipped {
        // a1' = a1 + a2 mixes the two amplitude uncertainties.
        sig[1] = (sig[1].powi(2) + sig[2].powi(2)).sqrt();
    }
    Ok(FitResult {
        y0: p.y0,
        a1: p.a1,
        a2: p.a2,
        f_mhz: p.f_mhz,
        phi_rad: p.phi_rad,
        tau_ns: p.tau_ns,
        param_uncertainties: sig,
        reduced_chi2: reduced,
        converged: lm.converged && p.tau_ns > 0.0,
        n_iterations: lm.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionalFit {
    pub v_t_mps: f64,
    pub v_t_uncertainty_mps: f64,
    pub reduced_chi2: f64,
    pub natural_tau_ns: f64,
    pub wavelength_nm: f64,
    pub y0: f64,
    pub a1: f64,
    pub a2: f64,
    pub f_mhz: f64,
    pub phi_rad: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

/// Beat model with fixed natural decay and a Gaussian motional factor; the last
/// parameter is `q = v_t^2`.
fn motional_model(tau_n: f64, kappa: f64) -> impl Fn(&[f64; 6], f64) -> (f64, [f64; 6]) {
    move |p: &[f64; 6], t: f64| {
        let [_, a1, a2, f, phi, q] = *p;
        let kt2 = (kappa * t).powi(2);
        let e = (-t / tau_n - 0.5 * q * kt2).exp();
        let theta = PI * f * t * 1e-3 + phi;
        let s2 = theta.sin().powi(2);
        let sin2 = (2.0 * theta).sin();
        let env = a1 + a2 * s2;
        (
            p[0] + env * e,
            [
                1.0,
                e,
                s2 * e,
                a2 * sin2 * PI * t * 1e-3 * e,
                a2 * sin2 * e,
                -0.5 * kt2 * env * e,
            ],
        )
    }
}

/// Fits the beat model with `tau` pinned to `natural_tau_ns` and the envelope
/// multiplied by `exp(-(k v_t t)^2 / 2)`, `k = 2 pi / wavelength`.
pub fn fit_motional(
    trace: &CorrelationTrace,
    window: (f64, f64),
    natural_tau_ns: f64,
    wavelength_nm: f64,
    options: &FitOptions,
) -> Result<MotionalFit> {
    if !(natural_tau_ns > 0.0 && wavelength_nm > 0.0) {
        return Err(Error::Domain(
            "natural decay time and wavelength must be positive".into(),
        ));
    }
    let d = fit_data(trace, window, options.weighting)?;
    // kappa in 1/ns per (m/s): k v t = 2 pi v t / lambda with t in ns, lambda in nm.
    let kappa = 2.0 * PI / wavelength_nm;
    let free = fit_decaying_beat(trace, window, options)?;
    let t_mid = 0.5 * (d.t[0] + d.t[d.t.len() - 1]);
    let excess = (1.0 / free.tau_ns - 1.0 / natural_tau_ns).max(0.0);
    let q0 = excess / (kappa * kappa * t_mid.max(1e-9));
    let p0 = [free.y0, free.a1, free.a2, free.f_mhz, free.phi_rad, q0];
    let q_scale = 1.0 / (kappa * kappa * t_mid.max(1e-9) * natural_tau_ns);
    let model = motional_model(natural_tau_ns, kappa);
    let lm = levenberg_marquardt(
        &d.t,
        &d.y,
        &d.w,
        p0,
        scales_for(&d, free.f_mhz.abs().max(1.0), q_scale),
        &model,
    );
    let (sig, reduced) = finish(&d, &lm);
    let q = lm.params[5];
    let v = q.max(0.0).sqrt();
    let v_sigma = if v > 0.0 {
        sig[5] / (2.0 * v)
    } else {
        sig[5].sqrt()
    };
    let p = BeatParams::from_array([
        lm.params[0],
        lm.params[1],
        lm.params[2],
        lm.params[3],
        lm.params[4],
        natural_tau_ns,
    ])
    .normalized();
    Ok(MotionalFit {
        v_t_mps: v,
        v_t_uncertainty_mps: v_sigma,
        reduced_chi2: reduced,
        natural_tau_ns,
        wavelength_nm,
        y0: p.y0,
        a1: p.a1,
        a2: p.a2,
        f_mhz: p.f_mhz,
        phi_rad: p.phi_rad,
        converged: lm.converged,
        n_iterations: lm.iterations,
    })
}

/// Log-linear fit of `A exp(-t/tau)` to the positive bins in `window`;
/// returns `(tau_ns, amplitude)`.
pub fn fit_exponential_decay(trace: &CorrelationTrace, window: (f64, f64)) -> Result<(f64, f64)> {
    let idx = window_indices(trace, window)?;
    let pts: Vec<(f64, f64)> = idx
        .iter()
        .filter(|&&i| trace.values[i] > 0.0)
        .map(|&i| (trace.delays_ns[i], trace.values[i].ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::WindowTooShort {
            bins: pts.len(),
            required: 2,
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::Domain("trace does not decay over the window".into()));
    }
    Ok((-1.0 / slope, (my - slope * mx).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdScanPoint {
    pub od: f64,
    pub equivalent_width_ns: f64,
    /// Fraction of the trace inside `|tau| < 1 ns`.
    pub energy_within_1ns: f64,
    pub trace: CorrelationTrace,
}

/// Equivalent width of the correlation trace for each source-cell optical depth.
pub fn scan_od(base: &Scenario, ods: &[f64]) -> Result<Vec<OdScanPoint>> {
    if base.filter.model != FilterModel::TwoLevelDoppler {
        return Err(Error::Config(
            "od scan needs a two_level_doppler filter".into(),
        ));
    }
    if ods.iter().any(|od| !(*od >= 0.0 && od.is_finite())) {
        return Err(Error::Config(
            "optical depths must be finite and >= 0".into(),
        ));
    }
    let response = normalized_response(&base.filter, &base.grid)?;
    ods.par_iter()
        .map(|&od| {
            let t = response.transmission(od);
            let psi = pair_amplitude(&base.source, &t)?;
            let trace = ccf(&psi, &base.motional, base.detector_bin_ns)?;
            Ok(OdScanPoint {
                od,
                equivalent_width_ns: trace.equivalent_width_ns(),
                energy_within_1ns: energy_within(&trace, 1.0),
                trace,
            })
        })
        .collect()
}

/// Fraction of the trace total in bins lying entirely inside `|tau| < limit_ns`.
pub fn energy_within(trace: &CorrelationTrace, limit_ns: f64) -> f64 {
    let total = trace.total();
    if total <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * trace.bin_ns;
    let inside: f64 = trace
        .delays_ns
        .iter()
        .zip(&trace.values)
        .filter(|(d, _)| d.abs() + h <= limit_ns + 1e-12)
        .map(|(_, v)| v)
        .sum();
    inside / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthScanPoint {
    pub width_mhz: f64,
    /// Filter-cell optical depth realizing the width (the cap when unreachable).
    pub filter_od: f64,
    pub realized_width_mhz: f64,
    pub reachable: bool,
    pub zero_delay: f64,
    pub trace: CorrelationTrace,
}

/// The filter cell: a two-level Doppler line with the source cell's parameters.
fn filter_cell_spec(base: &FilterSpec) -> FilterSpec {
    FilterSpec {
        model: FilterModel::TwoLevelDoppler,
        od: 1.0,
        linewidth_mhz: base.linewidth_mhz,
        v_t_mps: base.v_t_mps,
        wavelength_nm: base.wavelength_nm,
        center_detuning_mhz: base.center_detuning_mhz,
        driven: None,
    }
}

fn zero_delay_bin(trace: &CorrelationTrace) -> f64 {
    trace
        .bin_of(0.5 * trace.bin_ns)
        .map(|i| trace.values[i])
        .unwrap_or(0.0)
}

/// Zero-delay coincidences with an extra filter cell whose optical depth is
/// chosen (by bisection) to give each requested 50%-transmission width.
pub fn scan_filter_width(base: &Scenario, widths_mhz: &[f64]) -> Result<Vec<WidthScanPoint>> {
    if widths_mhz.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Config("widths must be finite and >= 0".into()));
    }
    let source_cell = build_transmission(&base.filter, &base.grid)?;
    let cell = normalized_response(&filter_cell_spec(&base.filter), &base.grid)?;
    let evaluate = |t: &FilterTransmission| -> Result<CorrelationTrace> {
        let psi = pair_amplitude(&base.source, t)?;
        ccf(&psi, &base.motional, base.detector_bin_ns)
    };
    widths_mhz
        .par_iter()
        .map(|&width| {
            if width == 0.0 {
                let trace = evaluate(&source_cell)?;
                return Ok(WidthScanPoint {
                    width_mhz: 0.0,
                    filter_od: 0.0,
                    realized_width_mhz: 0.0,
                    reachable: true,
                    zero_delay: zero_delay_bin(&trace),
                    trace,
                });
            }
            let cap_width = cell.width_at_od(FILTER_CELL_OD_CAP);
            let (od, reachable) = if cap_width < width {
                (FILTER_CELL_OD_CAP, false)
            } else {
                let (mut lo, mut hi) = (0.0, FILTER_CELL_OD_CAP);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if cell.width_at_od(mid) < width {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-10 * hi {
                        break;
                    }
                }
                (hi, true)
            };
            let t = source_cell.compose(&cell.transmission(od))?;
            let trace = evaluate(&t)?;
            Ok(WidthScanPoint {
                width_mhz: width,
                filter_od: od,
                realized_width_mhz: cell.width_at_od(od),
                reachable,
                zero_delay: zero_delay_bin(&trace),
                trace,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_from(f: impl Fn(f64) -> f64, n: usize, bin: f64) -> CorrelationTrace {
        let delays: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * bin).collect();
        CorrelationTrace {
            bin_ns: bin,
            values: delays.iter().map(|&t| f(t)).collect(),
            delays_ns: delays,
        }
    }

    #[test]
    fn synthetic_beat_peak() {
        let f = 120.6;
        let tr = trace_from(
            |t| (PI * f * t * 1e-3).sin().powi(2) * (-t / 40.0).exp(),
            256,
            1.0,
        );
        let s = beat_spectrum(&tr, (0.0, 256.0)).unwrap();
        assert!((s.resolution_mhz() - 1e3 / 256.0).abs() < 1e-12);
        assert!(
            (s.peak_freq_mhz - f).abs() <= s.resolution_mhz(),
            "{}",
            s.peak_freq_mhz
        );
    }

    #[test]
    fn constant_trace_has_no_peak() {
        let tr = trace_from(|_| 3.0, 64, 1.0);
        let s = beat_spectrum(&tr, (0.0, 64.0)).unwrap();
        assert!(s.peak_power < 1e-12 * 9.0);
    }

    #[test]
    fn spectrum_parseval() {
        let tr = trace_from(|t| (0.3 * t).sin() + 0.01 * t * t, 100, 1.0);
        let s = beat_spectrum(&tr, (0.0, 100.0)).unwrap();
        let mean = tr.values.iter().sum::<f64>() / 100.0;
        let w = hann(100);
        let ms: f64 = tr
            .values
            .iter()
            .zip(&w)
            .map(|(v, w)| ((v - mean) * w).powi(2))
            .sum::<f64>()
            / 100.0;
        let total: f64 = s.power.iter().sum();
        assert!((total / ms - 1.0).abs() < 1e-9);
    }

    #[test]
    fn short_window_rejected() {
        let tr = trace_from(|t| t, 64, 1.0);
        assert!(matches!(
            beat_spectrum(&tr, (0.0, 10.0)),
            Err(Error::WindowTooShort { .. })
        ));
        assert!(matches!(
            beat_spectrum(&tr, (10.0, 5.0)),
            Err(Error::DegenerateWindow(_))
        ));
        assert!(matches!(
            fit_decaying_beat(
                &trace_from(|_| 1.0, 64, 1.0),
                (0.0, 60.0),
                &FitOptions::default()
            ),
            Err(Error::DegenerateWindow(_))
        ));
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let truth = BeatParams {
            y0: 0.01,
            a1: 0.2,
            a2: 1.0,
            f_mhz: 120.6,
            phi_rad: 0.4,
            tau_ns: 12.0,
        };
        let tr = trace_from(|t| truth.eval(t), 200, 1.0);
        let fit = fit_decaying_beat(&tr, (0.0, 120.0), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let got = fit.params().to_array();
        for (g, w) in got.iter().zip(truth.to_array()) {
            assert!((g - w).abs() <= 1e-3 * w.abs(), "{got:?}");
        }
        assert!(fit.reduced_chi2 < 1e-20);
    }

    #[test]
    fn exponential_fit_is_exact_on_binned_exponential() {
        let tr = trace_from(|t| 5.0 * (-t / 26.3).exp(), 200, 1.0);
        let (tau, a) = fit_exponential_decay(&tr, (0.0, 150.0)).unwrap();
        assert!((tau - 26.3).abs() < 1e-9 && (a - 5.0).abs() < 1e-9);
    }

    #[test]
    fn motional_fit_recovers_speed() {
        let kappa = 2.0 * PI / 780.0;
        for v in [6.6, 0.0] {
            let tr = trace_from(
                |t| {
                    let e = (-t / 26.3 - 0.5 * (kappa * v * t).powi(2)).exp();
                    0.002 + (0.1 + (PI * 120.6 * t * 1e-3 + 0.3).sin().powi(2)) * e
                },
                100,
                1.0,
            );
            let m = fit_motional(&tr, (3.0, 45.0), 26.3, 780.0, &FitOptions::default()).unwrap();
            if v > 0.0 {
                assert!((m.v_t_mps / v - 1.0).abs() < 0.03, "{}", m.v_t_mps);
            } else {
                assert!(m.v_t_mps < 0.5, "{}", m.v_t_mps);
            }
        }
    }
}
