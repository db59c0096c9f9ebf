//! Transforms between the centered detuning grid and the FFT-ordered time
//! axis.
//!
//! Conventions: positive-frequency fields evolve as `exp(-i 2 pi nu t)`, so a
//! causal response `x(t)` has spectrum `X(nu) = int x(t) exp(+i 2 pi nu t) dt`.
//! Frequencies are in MHz and times in microseconds inside this module.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::scheme::FrequencyGrid;

fn alternate_sign(values: &mut [Complex64]) {
    for v in values.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

/// `X_k = dt * sum_n x_n exp(+i 2 pi nu_k t_n)` for FFT-ordered samples `x_n`.
pub fn time_to_freq(samples: &[Complex64], grid: &FrequencyGrid) -> Vec<Complex64> {
    assert_eq!(samples.len(), grid.n_points);
    let mut buf = samples.to_vec();
    alternate_sign(&mut buf);
    FftPlanner::new()
        .plan_fft_inverse(buf.len())
        .process(&mut buf);
    let dt_us = 1.0 / grid.span_mhz;
    buf.iter_mut().for_each(|v| *v *= dt_us);
    buf
}

/// `y_n = dnu * sum_k X_k exp(-i 2 pi nu_k t_n)`, returned in FFT order.
pub fn freq_to_time(values: &[Complex64], grid: &FrequencyGrid) -> Vec<Complex64> {
    assert_eq!(values.len(), grid.n_points);
    let mut buf = values.to_vec();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    alternate_sign(&mut buf);
    let dnu = grid.resolution_mhz();
    buf.iter_mut().for_each(|v| *v *= dnu);
    buf
}

/// Reorders an FFT-ordered time series so that time increases monotonically,
/// starting at `-window/2`.
pub fn to_time_order<T: Copy>(fft_ordered: &[T]) -> Vec<T> {
    let half = fft_ordered.len() / 2;
    fft_ordered[half..]
        .iter()
        .chain(fft_ordered[..half].iter())
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let grid = FrequencyGrid {
            span_mhz: 1024.0,
            n_points: 1 << 14,
        };
        let x: Vec<Complex64> = (0..grid.n_points)
            .map(|n| Complex64::new((n as f64 * 0.37).sin(), (n as f64 * 0.11).cos()))
            .collect();
        let back = freq_to_time(&time_to_freq(&x, &grid), &grid);
        let err = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn time_order_puts_negative_times_first() {
        let grid = FrequencyGrid {
            span_mhz: 1024.0,
            n_points: 1 << 14,
        };
        let times: Vec<f64> = (0..grid.n_points).map(|n| grid.fft_time_ns(n)).collect();
        let ordered = to_time_order(&times);
        assert!(ordered.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(ordered[grid.n_points / 2], 0.0);
    }
}
