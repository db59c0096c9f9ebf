//! Probe response of a multilevel atom driven by one strong pump.
//!
//! The pump is treated exactly through the steady state of the optical Bloch
//! (Lindblad) equations in the rotating-wave approximation. The weak probe is
//! treated to first order: the coherences it drives form a closed block of the
//! Liouvillian, whose eigenvalues become the poles of the response. One Schur
//! factorization per velocity class gives the response at every detuning.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{doppler_shift_mhz, Pole, PoleSet, SusceptibilityProfile, ThermalDistribution};
use crate::error::{Error, Result};
use crate::scheme::{FrequencyGrid, LevelScheme, PumpField, Violation};

pub type DensityMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivenSystemSpec {
    pub scheme: LevelScheme,
    pub pump: PumpField,
    /// `[upper, lower]` labels of the transition the pump detuning refers to.
    pub pump_transition: [String; 2],
    /// `[upper, lower]` labels of the transition the probe detuning refers to.
    pub probe_transition: [String; 2],
    pub pump_k_over_probe_k: f64,
    /// Relaxation of every level back to the stable levels (transit through the
    /// beam), as a rate in MHz.
    pub transit_rate_mhz: f64,
}

impl DrivenSystemSpec {
    pub fn probe_wavelength_nm(&self) -> f64 {
        self.pump.wavelength_nm * self.pump_k_over_probe_k
    }

    /// Same system with the pump switched off.
    pub fn undriven(&self) -> Self {
        let mut s = self.clone();
        s.pump.rabi_mhz = 0.0;
        s
    }

    fn manifold_of(&self, label: &str) -> Option<&str> {
        self.scheme
            .levels
            .iter()
            .find(|l| l.label == label)
            .map(|l| l.manifold.as_str())
    }

    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        self.scheme.check(&format!("{path}.scheme"), out);
        self.pump.check(&format!("{path}.pump"), out);
        let [pu, pl] = &self.pump_transition;
        let [qu, ql] = &self.probe_transition;
        if self.scheme.find_transition(pu, pl).is_none() {
            out.push(Violation::new(
                format!("{path}.pump_transition"),
                format!("no transition {pu} -> {pl}"),
            ));
        }
        if self.scheme.find_transition(qu, ql).is_none() {
            out.push(Violation::new(
                format!("{path}.probe_transition"),
                format!("no transition {qu} -> {ql}"),
            ));
        }
        if let (Some(mpu), Some(mpl), Some(mqu), Some(mql)) = (
            self.manifold_of(pu),
            self.manifold_of(pl),
            self.manifold_of(qu),
            self.manifold_of(ql),
        ) {
            if (mpu, mpl) == (mqu, mql) {
                out.push(Violation::new(
                    format!("{path}.probe_transition"),
                    "probe and pump must address different lines",
                ));
            }
            if mqu == mpu || mqu == mpl || mqu == mql {
                out.push(Violation::new(
                    format!("{path}.probe_transition"),
                    "probe upper manifold must not be pump coupled",
                ));
            }
        }
        if !(self.pump_k_over_probe_k > 0.0 && self.pump_k_over_probe_k.is_finite()) {
            out.push(Violation::new(
                format!("{path}.pump_k_over_probe_k"),
                "must be positive",
            ));
        }
        if !(self.transit_rate_mhz >= 0.0 && self.transit_rate_mhz.is_finite()) {
            out.push(Violation::new(
                format!("{path}.transit_rate_mhz"),
                "must be finite and >= 0",
            ));
        }
    }

    fn validated(&self) -> Result<()> {
        let mut v = Vec::new();
        self.check("driven", &mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDrivenSystem(
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}

/// Rotating-frame model of one velocity class, rates in rad/us.
struct ClassModel {
    n: usize,
    hamiltonian: DMatrix<Complex64>,
    /// `(to, from, rate)` for jump operators `sqrt(rate) |to><from|`.
    jumps: Vec<(usize, usize, f64)>,
    probe_upper: Vec<usize>,
    /// `(upper, lower, relative dipole)` for every probe-coupled transition.
    probe_couplings: Vec<(usize, usize, f64)>,
}

fn build_model(spec: &DrivenSystemSpec, velocity: f64) -> Result<ClassModel> {
    let scheme = &spec.scheme;
    let n = scheme.levels.len();
    let idx = |label: &str| scheme.index_of(label).expect("validated label");
    let manifold = |i: usize| scheme.levels[i].manifold.as_str();
    let offset = |i: usize| scheme.levels[i].energy_offset_mhz;

    let (pu, pl) = (idx(&spec.pump_transition[0]), idx(&spec.pump_transition[1]));
    let (qu, ql) = (
        idx(&spec.probe_transition[0]),
        idx(&spec.probe_transition[1]),
    );
    let pump_shift = doppler_shift_mhz(velocity, spec.pump.wavelength_nm);
    let pump_detuning = spec.pump.detuning_mhz - pump_shift;

    // Frame frequency (MHz) of each level. A line (upper, lower, reference
    // transition, laser detuning) fixes upper relative to lower.
    let lines = [(qu, ql, 0.0), (pu, pl, pump_detuning)];
    let members = |m: &str| -> Vec<usize> { (0..n).filter(|&i| manifold(i) == m).collect() };
    let mut diag = vec![f64::NAN; n];
    for i in members(manifold(ql)) {
        diag[i] = offset(i);
    }
    for _ in 0..lines.len() {
        for &(u0, l0, det) in &lines {
            let (mu, ml) = (manifold(u0), manifold(l0));
            if diag[l0].is_finite() && !diag[u0].is_finite() {
                for i in members(mu) {
                    diag[i] = offset(i) - offset(u0) + diag[l0] - det;
                }
            } else if diag[u0].is_finite() && !diag[l0].is_finite() {
                for i in members(ml) {
                    diag[i] = offset(i) - offset(l0) + diag[u0] + det;
                }
            }
        }
    }
    for i in 0..n {
        if !diag[i].is_finite() {
            diag[i] = offset(i);
        }
    }

    let mut h = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        h[(i, i)] = Complex64::new(2.0 * PI * diag[i], 0.0);
    }
    let pump_ref = scheme
        .find_transition(&spec.pump_transition[0], &spec.pump_transition[1])
        .expect("validated")
        .dipole;
    let (mpu, mpl) = (manifold(pu), manifold(pl));
    for t in &scheme.transitions {
        let (u, l) = (idx(&t.upper), idx(&t.lower));
        if manifold(u) == mpu && manifold(l) == mpl && pump_ref != 0.0 {
            let coupling = 2.0 * PI * 0.5 * spec.pump.rabi_mhz * t.dipole / pump_ref;
            h[(u, l)] += coupling;
            h[(l, u)] += coupling;
        }
    }

    let mut jumps = Vec::new();
    for (u, level) in scheme.levels.iter().enumerate() {
        if level.population_decay_rate_mhz == 0.0 {
            continue;
        }
        let channels: Vec<(usize, f64)> = scheme
            .transitions
            .iter()
            .filter(|t| t.upper == level.label)
            .map(|t| (idx(&t.lower), t.dipole * t.dipole))
            .collect();
        let total: f64 = channels.iter().map(|c| c.1).sum();
        for (l, w) in channels {
            if w > 0.0 {
                jumps.push((l, u, 2.0 * PI * level.population_decay_rate_mhz * w / total));
            }
        }
    }
    let stable = scheme.stable_levels();
    if spec.transit_rate_mhz > 0.0 && !stable.is_empty() {
        let rate = 2.0 * PI * spec.transit_rate_mhz / stable.len() as f64;
        for k in 0..n {
            for &g in &stable {
                jumps.push((g, k, rate));
            }
        }
    }

    let probe_ref = scheme
        .find_transition(&spec.probe_transition[0], &spec.probe_transition[1])
        .expect("validated")
        .dipole;
    let (mqu, mql) = (manifold(qu), manifold(ql));
    let probe_couplings = scheme
        .transitions
        .iter()
        .filter(|t| manifold(idx(&t.upper)) == mqu && manifold(idx(&t.lower)) == mql)
        .map(|t| (idx(&t.upper), idx(&t.lower), t.dipole / probe_ref))
        .collect();
    let probe_upper = members(mqu);

    Ok(ClassModel {
        n,
        hamiltonian: h,
        jumps,
        probe_upper,
        probe_couplings,
    })
}

fn liouvillian(model: &ClassModel) -> DMatrix<Complex64> {
    let n = model.n;
    let idx = |i: usize, j: usize| i * n + j;
    let h = &model.hamiltonian;
    let mut m = DMatrix::from_element(n * n, n * n, ZERO);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                // -i (H rho - rho H)
                m[(idx(i, j), idx(k, j))] += -I * h[(i, k)];
                m[(idx(i, j), idx(i, k))] += I * h[(k, j)];
            }
        }
    }
    for &(to, from, rate) in &model.jumps {
        m[(idx(to, to), idx(from, from))] += rate;
        for j in 0..n {
            m[(idx(from, j), idx(from, j))] -= 0.5 * rate;
            m[(idx(j, from), idx(j, from))] -= 0.5 * rate;
        }
    }
    m
}

fn solve_steady_state(
    spec: &DrivenSystemSpec,
    model: &ClassModel,
    lindblad: &DMatrix<Complex64>,
) -> Result<DensityMatrix> {
    let n = model.n;
    let mut a = lindblad.clone();
    let mut rhs = DVector::from_element(n * n, ZERO);
    for c in 0..n * n {
        a[(0, c)] = ZERO;
    }
    for k in 0..n {
        a[(0, k * n + k)] = Complex64::new(1.0, 0.0);
    }
    rhs[0] = Complex64::new(1.0, 0.0);

    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n * n).map(|i| u[(i, i)].norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    let smallest = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12 * largest) {
        return Err(Error::SingularSteadyState {
            scheme: spec.scheme.label.clone(),
            reason: format!("pivot ratio {:.3e}", smallest / largest),
        });
    }
    let x = lu.solve(&rhs).ok_or_else(|| Error::SingularSteadyState {
        scheme: spec.scheme.label.clone(),
        reason: "linear solve failed".into(),
    })?;
    let mut rho = DMatrix::from_fn(n, n, |i, j| x[i * n + j]);
    // Symmetrize away rounding; the exact solution is Hermitian.
    rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(rho)
}

/// Steady state of the pump-only dynamics for atoms moving at `velocity` (m/s)
/// along the pump.
pub fn driven_steady_state(spec: &DrivenSystemSpec, velocity: f64) -> Result<DensityMatrix> {
    spec.validated()?;
    let model = build_model(spec, velocity)?;
    let l = liouvillian(&model);
    solve_steady_state(spec, &model, &l)
}

/// Right and left eigenvectors of an upper-triangular matrix, normalized so
/// that `left_k . right_k = 1`.
fn triangular_eigenvectors(
    t: &DMatrix<Complex64>,
) -> (Vec<DVector<Complex64>>, Vec<DVector<Complex64>>) {
    let m = t.nrows();
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    let guard = |d: Complex64| {
        if d.norm() < 1e-14 * scale {
            Complex64::new(1e-14 * scale, 0.0)
        } else {
            d
        }
    };
    let mut rights = Vec::with_capacity(m);
    let mut lefts = Vec::with_capacity(m);
    for k in 0..m {
        let lam = t[(k, k)];
        let mut x = DVector::from_element(m, ZERO);
        x[k] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let s: Complex64 = (j + 1..=k).map(|l| t[(j, l)] * x[l]).sum();
            x[j] = -s / guard(t[(j, j)] - lam);
        }
        let mut y = DVector::from_element(m, ZERO);
        y[k] = Complex64::new(1.0, 0.0);
        for j in k + 1..m {
            let s: Complex64 = (k..j).map(|l| y[l] * t[(l, j)]).sum();
            y[j] = -s / guard(t[(j, j)] - lam);
        }
        rights.push(x);
        lefts.push(y);
    }
    (rights, lefts)
}

/// Appends the weighted probe-response poles of one velocity class.
fn class_poles(
    spec: &DrivenSystemSpec,
    velocity: f64,
    weight: f64,
    out: &mut PoleSet,
) -> Result<()> {
    let model = build_model(spec, velocity)?;
    let n = model.n;
    let lindblad = liouvillian(&model);
    let rho = solve_steady_state(spec, &model, &lindblad)?;

    let upper: BTreeSet<usize> = model.probe_upper.iter().copied().collect();
    let sector: Vec<(usize, usize)> = model
        .probe_upper
        .iter()
        .flat_map(|&a| (0..n).filter(|y| !upper.contains(y)).map(move |y| (a, y)))
        .collect();
    let dim = sector.len();
    let block = DMatrix::from_fn(dim, dim, |p, q| {
        let (a, y) = sector[p];
        let (b, z) = sector[q];
        lindblad[(a * n + y, b * n + z)]
    });

    // V+ = pi sum_w |a><l|; source b = i [V+, rho]; observable o.
    let mut vplus = DMatrix::from_element(n, n, ZERO);
    for &(a, l, w) in &model.probe_couplings {
        vplus[(a, l)] += Complex64::new(PI * w, 0.0);
    }
    let comm = &vplus * &rho - &rho * &vplus;
    let source = DVector::from_fn(dim, |p, _| {
        let (a, y) = sector[p];
        I * comm[(a, y)]
    });
    let observable = DVector::from_fn(dim, |p, _| {
        let (a, y) = sector[p];
        model
            .probe_couplings
            .iter()
            .filter(|c| c.0 == a && c.1 == y)
            .map(|c| Complex64::new(c.2, 0.0))
            .sum::<Complex64>()
    });

    let (q, t) = nalgebra::linalg::Schur::new(block).unpack();
    let (rights, lefts) = triangular_eigenvectors(&t);
    let o_q = observable.transpose() * &q;
    let qb = q.adjoint() * &source;
    let probe_shift = doppler_shift_mhz(velocity, spec.probe_wavelength_nm());
    for k in 0..dim {
        let lam = t[(k, k)];
        let r = -2.0 * I * (o_q.row(0) * &rights[k])[0] * (lefts[k].transpose() * &qb)[0];
        if r == ZERO {
            continue;
        }
        out.push(Pole {
            residue: weight * r / (2.0 * PI),
            center_mhz: -lam.im / (2.0 * PI) + probe_shift,
            half_width_mhz: -lam.re / (2.0 * PI),
        });
    }
    Ok(())
}

/// Poles of the thermally averaged probe response.
pub fn probe_response_poles(
    spec: &DrivenSystemSpec,
    dist: &ThermalDistribution,
) -> Result<PoleSet> {
    spec.validated()?;
    let per_class: Vec<PoleSet> = dist
        .nodes()
        .par_iter()
        .map(|&(v, w)| {
            let mut set = PoleSet::new();
            class_poles(spec, v, w, &mut set).map(|_| set)
        })
        .collect::<Result<_>>()?;
    Ok(PoleSet {
        poles: per_class.into_iter().flat_map(|s| s.poles).collect(),
    })
}

/// First-order probe susceptibility, thermally averaged with co-propagating
/// pump and probe Doppler shifts.
pub fn probe_response(
    spec: &DrivenSystemSpec,
    dist: &ThermalDistribution,
    grid: &FrequencyGrid,
) -> Result<SusceptibilityProfile> {
    let poles = probe_response_poles(spec, dist)?;
    Ok(SusceptibilityProfile::from_poles(*grid, &poles))
}
