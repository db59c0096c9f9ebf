//! Sums of complex Lorentzian poles and their evaluation on a frequency grid.
//!
//! A pole `c / (i (nu - f) - g)` is the spectrum of the causal response
//! `-2 pi c exp(-2 pi (g + i f) t)`. Evaluating large pole sums directly costs
//! `poles x grid points`; instead the time-domain response is accumulated,
//! transformed with one FFT, and the result is corrected for the periodic
//! images of the discrete transform. The correction is smooth across the grid
//! and is interpolated from Chebyshev nodes.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fft;
use crate::scheme::FrequencyGrid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub residue: Complex64,
    pub center_mhz: f64,
    pub half_width_mhz: f64,
}

impl Pole {
    pub fn eval(&self, nu: f64) -> Complex64 {
        self.residue / Complex64::new(-self.half_width_mhz, nu - self.center_mhz)
    }

    /// Exponent of the time response in rad/us.
    fn rate(&self) -> Complex64 {
        Complex64::new(-2.0 * PI * self.half_width_mhz, -2.0 * PI * self.center_mhz)
    }
}

/// Pole-sum spectrum on a grid: the exact values, and the values of the
/// discrete-time (periodized) spectrum whose inverse DFT is exactly the
/// sampled causal response.
#[derive(Debug, Clone)]
pub struct SynthesizedSpectrum {
    pub exact: Vec<Complex64>,
    pub periodized: Vec<Complex64>,
}

#[derive(Debug, Clone, Default)]
pub struct PoleSet {
    pub poles: Vec<Pole>,
}

/// Above this many poles the FFT route replaces direct evaluation.
const DIRECT_LIMIT: usize = 48;
const CHEBYSHEV_NODES: usize = 257;

impl PoleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pole: Pole) {
        self.poles.push(pole);
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn eval(&self, nu: f64) -> Complex64 {
        self.poles.iter().map(|p| p.eval(nu)).sum()
    }

    /// Periodized spectrum at `nu`: the sum over all images `nu + m * span`.
    pub fn eval_periodized(&self, nu: f64, span_mhz: f64) -> Complex64 {
        self.poles
            .iter()
            .map(|p| {
                let y = p.rate() + I * (2.0 * PI * nu);
                // sum_m 1/(y + i 2 pi m S) = coth(y / 2S) / 2S
                let a = -2.0 * PI * p.residue;
                -a * coth(y / (2.0 * span_mhz)) / (2.0 * span_mhz)
            })
            .sum()
    }

    pub fn synthesize(&self, grid: &FrequencyGrid) -> SynthesizedSpectrum {
        if self.poles.len() <= DIRECT_LIMIT {
            let nus = grid.detunings();
            SynthesizedSpectrum {
                exact: nus.iter().map(|&nu| self.eval(nu)).collect(),
                periodized: nus
                    .iter()
                    .map(|&nu| self.eval_periodized(nu, grid.span_mhz))
                    .collect(),
            }
        } else {
            self.synthesize_fft(grid)
        }
    }

    /// FFT route, exposed separately so it can be checked against direct
    /// evaluation.
    pub fn synthesize_fft(&self, grid: &FrequencyGrid) -> SynthesizedSpectrum {
        let n = grid.n_points;
        let dt = 1.0 / grid.span_mhz;
        let window = n as f64 * dt;
        let mut samples = vec![Complex64::new(0.0, 0.0); n];
        for p in &self.poles {
            let a = -2.0 * PI * p.residue;
            let rate = p.rate();
            // Fold the tail beyond the window back onto it: sum_j q^j = 1/(1-q).
            let wrap = 1.0 / (1.0 - (rate * window).exp());
            let step = (rate * dt).exp();
            let decay_per_sample = step.norm();
            let mut z = a * wrap;
            let limit = if decay_per_sample < 1.0 {
                let needed = (1e-18f64.ln() / decay_per_sample.ln()).ceil();
                (needed as usize).min(n)
            } else {
                n
            };
            samples[0] += z * 0.5;
            for s in samples.iter_mut().take(limit).skip(1) {
                z *= step;
                *s += z;
            }
        }
        let periodized = fft::time_to_freq(&samples, grid);

        // exact = periodized - correction, correction = -sum a E(y),
        // E(y) = coth(y/2S)/2S - 1/y.
        let lo = grid.detuning(0);
        let hi = grid.detuning(n - 1);
        let m = CHEBYSHEV_NODES;
        let nodes: Vec<f64> = (0..m)
            .map(|j| {
                let x = (PI * j as f64 / (m - 1) as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            })
            .collect();
        let s = grid.span_mhz;
        let corr_at_nodes: Vec<Complex64> = nodes
            .iter()
            .map(|&nu| {
                self.poles
                    .iter()
                    .map(|p| {
                        let a = -2.0 * PI * p.residue;
                        let y = p.rate() + I * (2.0 * PI * nu);
                        -a * image_excess(y, s)
                    })
                    .sum()
            })
            .collect();
        let exact = grid
            .detunings()
            .iter()
            .zip(&periodized)
            .map(|(&nu, per)| per - barycentric(&nodes, &corr_at_nodes, nu))
            .collect();
        SynthesizedSpectrum { exact, periodized }
    }
}

fn coth(z: Complex64) -> Complex64 {
    1.0 / z.tanh()
}

/// `coth(y/2S)/2S - 1/y`, analytic at `y = 0`.
fn image_excess(y: Complex64, span: f64) -> Complex64 {
    let u = y / (2.0 * span);
    let bracket = if u.norm() < 1e-2 {
        // coth u - 1/u = u/3 - u^3/45 + 2u^5/945 - u^7/4725
        let u2 = u * u;
        u * (1.0 / 3.0 + u2 * (-1.0 / 45.0 + u2 * (2.0 / 945.0 - u2 / 4725.0)))
    } else {
        coth(u) - 1.0 / u
    };
    bracket / (2.0 * span)
}

/// Barycentric interpolation on Chebyshev points of the second kind.
fn barycentric(nodes: &[f64], values: &[Complex64], x: f64) -> Complex64 {
    let m = nodes.len();
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for j in 0..m {
        let d = x - nodes[j];
        if d == 0.0 {
            return values[j];
        }
        let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
        if j == 0 || j == m - 1 {
            w *= 0.5;
        }
        let c = w / d;
        num += values[j] * c;
        den += c;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set(n: usize) -> PoleSet {
        let mut set = PoleSet::new();
        for j in 0..n {
            let x = j as f64 / n as f64;
            set.push(Pole {
                residue: Complex64::new(1.0 + x, 0.3 * x),
                center_mhz: -900.0 + 1800.0 * x,
                half_width_mhz: 2.5 + 3.0 * x,
            });
        }
        set
    }

    #[test]
    fn fft_route_matches_direct_evaluation() {
        let grid = FrequencyGrid {
            span_mhz: 8192.0,
            n_points: 1 << 15,
        };
        let set = sample_set(80);
        let fast = set.synthesize_fft(&grid);
        let nus = grid.detunings();
        let scale = nus
            .iter()
            .step_by(7)
            .map(|&nu| set.eval(nu).norm())
            .fold(0.0, f64::max);
        for k in (0..grid.n_points).step_by(97) {
            let nu = nus[k];
            let e = (fast.exact[k] - set.eval(nu)).norm();
            let p = (fast.periodized[k] - set.eval_periodized(nu, grid.span_mhz)).norm();
            assert!(e < 1e-11 * scale, "exact k={k}: {e}");
            assert!(p < 1e-11 * scale, "periodized k={k}: {p}");
        }
    }

    #[test]
    fn periodized_lorentzian_is_close_to_exact_near_line() {
        let set = PoleSet {
            poles: vec![Pole {
                residue: 1.0.into(),
                center_mhz: 0.0,
                half_width_mhz: 3.0,
            }],
        };
        let per = set.eval_periodized(0.0, 16384.0);
        let ex = set.eval(0.0);
        assert!(((per - ex) / ex).norm() < 1e-6);
    }

    #[test]
    fn image_excess_series_matches_closed_form() {
        let span = 1000.0;
        for y in [Complex64::new(-30.0, 15.0), Complex64::new(-5.0, -19.0)] {
            let u = y / (2.0 * span);
            let direct = (coth(u) - 1.0 / u) / (2.0 * span);
            assert!((image_excess(y, span) - direct).norm() < 1e-14);
        }
    }
}
