//! Scenario description: grids, level schemes, pump fields, beam geometry,
//! and the bundled scenario that ties a source, a filter and the detector
//! together.
//!
//! All frequencies at this level are ordinary frequencies in MHz and all
//! linewidths are population-decay FWHM values. Conversion to angular units
//! happens inside the numeric kernels only.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::biphoton::{BiphotonSpec, DecayPath, MotionalParams};
use crate::error::{Error, Result};
use crate::filter::{FilterModel, FilterSpec};
use crate::response::DrivenSystemSpec;

/// Version tag required in every scenario config file.
pub const FORMAT_VERSION: u32 = 1;

pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;
pub const RB85_MASS_U: f64 = 84.911_789_738;

/// Hyperfine splitting between F'=4 and F'=3 of the 85Rb 5P3/2 manifold.
pub const RB85_P32_F3_F4_SPLITTING_MHZ: f64 = 120.6;
/// Ground-state hyperfine splitting of 85Rb. Config value, not fitted.
pub const RB85_GROUND_SPLITTING_MHZ: f64 = 3035.7;
/// Linewidth whose intensity decay time 1/(2 pi linewidth) is 26.3 ns.
pub const INTERMEDIATE_LINEWIDTH_MHZ: f64 = 6.05;
pub const RB85_D1_LINEWIDTH_MHZ: f64 = 5.75;
/// 6S1/2 linewidth (45.6 ns lifetime).
pub const RB85_6S_LINEWIDTH_MHZ: f64 = 3.49;
pub const VAPOR_TEMPERATURE_K: f64 = 373.15;
/// Motional dephasing speed obtained from the on-resonant decay fit.
pub const FITTED_MOTIONAL_SPEED_MPS: f64 = 6.6;

/// Most probable 1D speed sqrt(2 k T / m) of a thermal vapor.
pub fn most_probable_speed(temperature_k: f64, mass_u: f64) -> f64 {
    (2.0 * BOLTZMANN_J_PER_K * temperature_k / (mass_u * ATOMIC_MASS_KG)).sqrt()
}

/// A single invariant violation, located by a dotted path into the scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Uniform detuning axis used for every spectral quantity.
///
/// Sample `k` sits at `(k - n/2) * resolution`, so zero detuning is a grid
/// point and the grid is symmetric about it apart from the single unpaired
/// sample at `-span/2`. The conjugate time axis has spacing `1/span` and
/// covers `n/span`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub span_mhz: f64,
    pub n_points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            span_mhz: 16384.0,
            n_points: 1 << 17,
        }
    }
}

impl FrequencyGrid {
    pub const MIN_POINTS: usize = 1 << 14;

    pub fn new(span_mhz: f64, n_points: usize) -> Result<Self> {
        let grid = Self { span_mhz, n_points };
        let mut v = Vec::new();
        grid.check("grid", &mut v);
        if v.is_empty() {
            Ok(grid)
        } else {
            Err(Error::InvalidScenario(v))
        }
    }

    pub fn resolution_mhz(&self) -> f64 {
        self.span_mhz / self.n_points as f64
    }

    /// Time step in ns.
    pub fn dt_ns(&self) -> f64 {
        1e3 / self.span_mhz
    }

    /// Length of the conjugate time window in ns.
    pub fn window_ns(&self) -> f64 {
        self.n_points as f64 * self.dt_ns()
    }

    pub fn detuning(&self, k: usize) -> f64 {
        (k as f64 - (self.n_points / 2) as f64) * self.resolution_mhz()
    }

    pub fn detunings(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.detuning(k)).collect()
    }

    /// Index of the sample mirrored about zero detuning (`None` for the
    /// unpaired edge sample).
    pub fn mirror_index(&self, k: usize) -> Option<usize> {
        if k == 0 {
            None
        } else {
            Some(self.n_points - k)
        }
    }

    /// Time of FFT-ordered sample `n` in ns; the upper half wraps to negative
    /// times.
    pub fn fft_time_ns(&self, n: usize) -> f64 {
        let n = if n < self.n_points / 2 {
            n as f64
        } else {
            n as f64 - self.n_points as f64
        };
        n * self.dt_ns()
    }

    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        if !self.n_points.is_power_of_two() || self.n_points < Self::MIN_POINTS {
            out.push(Violation::new(
                format!("{path}.n_points"),
                format!(
                    "must be a power of two >= {}, got {}",
                    Self::MIN_POINTS,
                    self.n_points
                ),
            ));
        }
        if !(self.span_mhz > 0.0 && self.span_mhz.is_finite()) {
            out.push(Violation::new(
                format!("{path}.span_mhz"),
                "must be positive and finite",
            ));
        }
    }

    pub fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.n_points == other.n_points && self.span_mhz == other.span_mhz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    /// Group of levels addressed by the same optical line (e.g. a fine-structure
    /// manifold). Offsets are measured within the manifold.
    pub manifold: String,
    pub energy_offset_mhz: f64,
    pub population_decay_rate_mhz: f64,
}

impl Level {
    pub fn new(
        label: &str,
        manifold: &str,
        energy_offset_mhz: f64,
        population_decay_rate_mhz: f64,
    ) -> Self {
        Self {
            label: label.into(),
            manifold: manifold.into(),
            energy_offset_mhz,
            population_decay_rate_mhz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub upper: String,
    pub lower: String,
    /// Relative dipole amplitude; spontaneous branching follows its square.
    pub dipole: f64,
}

impl Transition {
    pub fn new(upper: &str, lower: &str, dipole: f64) -> Self {
        Self {
            upper: upper.into(),
            lower: lower.into(),
            dipole,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub label: String,
    pub levels: Vec<Level>,
    pub transitions: Vec<Transition>,
}

impl LevelScheme {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    pub fn find_transition(&self, upper: &str, lower: &str) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.upper == upper && t.lower == lower)
    }

    /// Levels that never decay.
    pub fn stable_levels(&self) -> Vec<usize> {
        (0..self.levels.len())
            .filter(|&i| self.levels[i].population_decay_rate_mhz == 0.0)
            .collect()
    }

    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        if self.levels.is_empty() {
            out.push(Violation::new(format!("{path}.levels"), "no levels"));
        }
        for (i, l) in self.levels.iter().enumerate() {
            if !(l.population_decay_rate_mhz >= 0.0 && l.population_decay_rate_mhz.is_finite()) {
                out.push(Violation::new(
                    format!("{path}.levels[{i}].population_decay_rate_mhz"),
                    "must be finite and >= 0",
                ));
            }
            if !l.energy_offset_mhz.is_finite() {
                out.push(Violation::new(
                    format!("{path}.levels[{i}].energy_offset_mhz"),
                    "must be finite",
                ));
            }
            if self.levels[..i].iter().any(|o| o.label == l.label) {
                out.push(Violation::new(
                    format!("{path}.levels[{i}].label"),
                    format!("duplicate label `{}`", l.label),
                ));
            }
        }
        if self.transitions.is_empty() {
            out.push(Violation::new(
                format!("{path}.transitions"),
                "at least one transition required",
            ));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            for (field, label) in [("upper", &t.upper), ("lower", &t.lower)] {
                if self.index_of(label).is_none() {
                    out.push(Violation::new(
                        format!("{path}.transitions[{i}].{field}"),
                        format!("unknown level `{label}`"),
                    ));
                }
            }
            if !t.dipole.is_finite() {
                out.push(Violation::new(
                    format!("{path}.transitions[{i}].dipole"),
                    "must be finite",
                ));
            }
        }
        for (i, l) in self.levels.iter().enumerate() {
            let has_channel = self
                .transitions
                .iter()
                .any(|t| t.upper == l.label && t.dipole != 0.0);
            if l.population_decay_rate_mhz > 0.0 && !has_channel {
                out.push(Violation::new(
                    format!("{path}.levels[{i}]"),
                    format!("level `{}` decays but has no decay channel", l.label),
                ));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpField {
    pub detuning_mhz: f64,
    pub rabi_mhz: f64,
    pub wavelength_nm: f64,
    pub direction: [f64; 3],
}

impl PumpField {
    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        if !(self.rabi_mhz >= 0.0 && self.rabi_mhz.is_finite()) {
            out.push(Violation::new(
                format!("{path}.rabi_mhz"),
                "must be finite and >= 0",
            ));
        }
        if !self.detuning_mhz.is_finite() {
            out.push(Violation::new(
                format!("{path}.detuning_mhz"),
                "must be finite",
            ));
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            out.push(Violation::new(
                format!("{path}.wavelength_nm"),
                "must be positive",
            ));
        }
        let norm = self.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            out.push(Violation::new(
                format!("{path}.direction"),
                format!("must be a unit vector, |d| = {norm}"),
            ));
        }
    }
}

/// Coplanar beam angles and the wavelengths of the two pumps (k1, k2), the
/// upper-transition photon (k3) and the lower-transition photon (k4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    pub theta3_deg: f64,
    pub wavelengths_nm: [f64; 4],
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self {
            theta1_deg: 2.0,
            theta2_deg: 0.7,
            theta3_deg: 2.7,
            wavelengths_nm: [795.0, 1324.0, 1367.0, 780.0],
        }
    }
}

impl BeamGeometry {
    pub(crate) fn check(&self, path: &str, out: &mut Vec<Violation>) {
        for (name, a) in [
            ("theta1_deg", self.theta1_deg),
            ("theta2_deg", self.theta2_deg),
            ("theta3_deg", self.theta3_deg),
        ] {
            if !(a.abs() < 90.0) {
                out.push(Violation::new(
                    format!("{path}.{name}"),
                    "angle must lie in (-90, 90) degrees",
                ));
            }
        }
        if self
            .wavelengths_nm
            .iter()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            out.push(Violation::new(
                format!("{path}.wavelengths_nm"),
                "wavelengths must be positive",
            ));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Od,
    FilterWidth,
}

impl std::str::FromStr for ScanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "od" => Ok(ScanKind::Od),
            "filter_width" => Ok(ScanKind::FilterWidth),
            other => Err(Error::Parse(format!(
                "unknown scan kind `{other}` (expected od|filter_width)"
            ))),
        }
    }
}

/// Default parameter sweep attached to a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub kind: ScanKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub grid: FrequencyGrid,
    pub geometry: BeamGeometry,
    pub source: BiphotonSpec,
    pub filter: FilterSpec,
    pub motional: MotionalParams,
    pub detector_bin_ns: f64,
    pub fit_window_ns: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
}

/// Returns one entry per violated invariant; empty means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.name.trim().is_empty() {
        out.push(Violation::new("name", "must not be empty"));
    }
    s.grid.check("grid", &mut out);
    s.geometry.check("geometry", &mut out);
    s.source.check("source", &mut out);
    s.filter.check("filter", &mut out);
    s.motional.check("motional", &mut out);
    if !(s.detector_bin_ns > 0.0 && s.detector_bin_ns.is_finite()) {
        out.push(Violation::new(
            "detector_bin_ns",
            "bin width must be positive",
        ));
    }
    let [a, b] = s.fit_window_ns;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        out.push(Violation::new(
            "fit_window_ns",
            "window start must be below window end",
        ));
    }
    if let Some(scan) = &s.scan {
        if scan.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push(Violation::new(
                "scan.values",
                "scan values must be finite and >= 0",
            ));
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format_version: u32,
    #[serde(flatten)]
    scenario: Scenario,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let v = validate_scenario(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }

    /// Serializes to the TOML config format.
    pub fn to_config_string(&self) -> Result<String> {
        let file = ScenarioFile {
            format_version: FORMAT_VERSION,
            scenario: self.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let value: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config_value(value)
    }

    pub fn to_config_value(&self) -> Result<toml::Value> {
        let file = ScenarioFile {
            format_version: FORMAT_VERSION,
            scenario: self.clone(),
        };
        toml::Value::try_from(&file).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_config_value(value: toml::Value) -> Result<Self> {
        match value.get("format_version").and_then(|v| v.as_integer()) {
            Some(v) if v == FORMAT_VERSION as i64 => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "unsupported format_version {v}, expected {FORMAT_VERSION}"
                )))
            }
            None => {
                return Err(Error::Config(
                    "missing mandatory key `format_version`".into(),
                ))
            }
        }
        let file: ScenarioFile = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(file.scenario)
    }

    /// Applies a dotted-path override such as `motional.v_t_mps=0`.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        self.with_overrides(&[assignment.to_string()])
    }

    pub fn with_overrides(&self, assignments: &[String]) -> Result<Self> {
        let mut value = self.to_config_value()?;
        for a in assignments {
            apply_override(&mut value, a)?;
        }
        Self::from_config_value(value)
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    // Reuse the TOML grammar for numbers, booleans, arrays and quoted strings.
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut node = root;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    let mut v = parse_override_value(raw);
                    // Keep float fields float when given an integer literal.
                    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) =
                        (t.get(*key), &v)
                    {
                        v = toml::Value::Float(*i as f64);
                    }
                    t.insert(key.to_string(), v);
                    return Ok(());
                }
                t.get_mut(*key).ok_or_else(|| {
                    Error::Config(format!("override path `{path}`: no key `{key}`"))
                })?
            }
            toml::Value::Array(arr) => {
                let idx: usize = key.parse().map_err(|_| {
                    Error::Config(format!("override path `{path}`: `{key}` is not an index"))
                })?;
                let len = arr.len();
                let slot = arr.get_mut(idx).ok_or_else(|| {
                    Error::Config(format!(
                        "override path `{path}`: index {idx} out of range ({len})"
                    ))
                })?;
                if last {
                    let mut v = parse_override_value(raw);
                    if let (toml::Value::Float(_), toml::Value::Integer(i)) = (&*slot, &v) {
                        v = toml::Value::Float(*i as f64);
                    }
                    *slot = v;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "override path `{path}`: `{key}` is not a table"
                )))
            }
        };
    }
    Ok(())
}

/// The hyperfine level structure used for the on-resonant filter: two ground
/// manifolds, the 795-nm pump upper level and the two 780-nm upper levels
/// split by the F'=3/F'=4 interval. Dipole amplitudes are relative weights.
pub fn rb85_vee_scheme() -> LevelScheme {
    LevelScheme {
        label: "rb85_vee".into(),
        levels: vec![
            Level::new("g3", "5S1/2", 0.0, 0.0),
            Level::new("g2", "5S1/2", -RB85_GROUND_SPLITTING_MHZ, 0.0),
            Level::new("p12", "5P1/2", 0.0, RB85_D1_LINEWIDTH_MHZ),
            Level::new("b4", "5P3/2", 0.0, INTERMEDIATE_LINEWIDTH_MHZ),
            Level::new(
                "b3",
                "5P3/2",
                -RB85_P32_F3_F4_SPLITTING_MHZ,
                INTERMEDIATE_LINEWIDTH_MHZ,
            ),
        ],
        transitions: vec![
            Transition::new("b4", "g3", 1.0),
            Transition::new("b3", "g3", 0.6),
            Transition::new("b3", "g2", 0.6),
            Transition::new("p12", "g3", 1.0),
            Transition::new("p12", "g2", 0.8),
        ],
    }
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn off_resonant() -> Scenario {
    let v_t = most_probable_speed(VAPOR_TEMPERATURE_K, RB85_MASS_U);
    Scenario {
        name: "off_resonant".into(),
        grid: FrequencyGrid::default(),
        geometry: BeamGeometry::default(),
        source: BiphotonSpec {
            paths: vec![DecayPath {
                center_detuning_mhz: 0.0,
                amplitude: Complex64::new(1.0, 0.0),
                linewidth_mhz: INTERMEDIATE_LINEWIDTH_MHZ,
            }],
            upper_linewidth_mhz: RB85_6S_LINEWIDTH_MHZ,
            two_photon_detuning_mhz: 0.0,
            lower_pump: PumpField {
                detuning_mhz: -1500.0,
                rabi_mhz: 50.0,
                wavelength_nm: 795.0,
                direction: z_axis(),
            },
            upper_pump: PumpField {
                detuning_mhz: 0.0,
                rabi_mhz: 20.0,
                wavelength_nm: 1324.0,
                direction: z_axis(),
            },
        },
        filter: FilterSpec {
            model: FilterModel::TwoLevelDoppler,
            od: 10.0,
            linewidth_mhz: INTERMEDIATE_LINEWIDTH_MHZ,
            v_t_mps: v_t,
            wavelength_nm: 780.0,
            center_detuning_mhz: 0.0,
            driven: None,
        },
        motional: MotionalParams {
            v_t_mps: 0.0,
            wavelength_nm: 780.0,
        },
        detector_bin_ns: 1.0,
        fit_window_ns: [3.0, 45.0],
        scan: None,
    }
}

fn on_resonant() -> Scenario {
    let v_t = most_probable_speed(VAPOR_TEMPERATURE_K, RB85_MASS_U);
    let pump = PumpField {
        detuning_mhz: 0.0,
        rabi_mhz: 300.0,
        wavelength_nm: 795.0,
        direction: z_axis(),
    };
    Scenario {
        name: "on_resonant".into(),
        grid: FrequencyGrid::default(),
        geometry: BeamGeometry::default(),
        source: BiphotonSpec {
            paths: vec![
                DecayPath {
                    center_detuning_mhz: 0.0,
                    amplitude: Complex64::new(1.0, 0.0),
                    linewidth_mhz: INTERMEDIATE_LINEWIDTH_MHZ,
                },
                DecayPath {
                    center_detuning_mhz: -RB85_P32_F3_F4_SPLITTING_MHZ,
                    amplitude: Complex64::new(1.0, 0.0),
                    linewidth_mhz: INTERMEDIATE_LINEWIDTH_MHZ,
                },
            ],
            upper_linewidth_mhz: RB85_6S_LINEWIDTH_MHZ,
            two_photon_detuning_mhz: 100.0,
            lower_pump: pump.clone(),
            upper_pump: PumpField {
                detuning_mhz: 100.0,
                rabi_mhz: 20.0,
                wavelength_nm: 1324.0,
                direction: z_axis(),
            },
        },
        filter: FilterSpec {
            model: FilterModel::DrivenMultilevel,
            od: 10.0,
            linewidth_mhz: INTERMEDIATE_LINEWIDTH_MHZ,
            v_t_mps: v_t,
            wavelength_nm: 780.0,
            center_detuning_mhz: 0.0,
            driven: Some(DrivenSystemSpec {
                scheme: rb85_vee_scheme(),
                pump,
                pump_transition: ["p12".into(), "g3".into()],
                probe_transition: ["b4".into(), "g3".into()],
                pump_k_over_probe_k: 780.0 / 795.0,
                transit_rate_mhz: 0.2,
            }),
        },
        motional: MotionalParams {
            v_t_mps: FITTED_MOTIONAL_SPEED_MPS,
            wavelength_nm: 780.0,
        },
        detector_bin_ns: 1.0,
        fit_window_ns: [3.0, 45.0],
        scan: None,
    }
}

/// Named scenarios covering both pumping regimes and the two parameter scans.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let off = off_resonant();
    let on = on_resonant();

    let mut on_776 = on.clone();
    on_776.name = "on_resonant_776".into();
    // The coupler removes the F'=4 decay path from the pair process.
    on_776.source.paths[0].amplitude = Complex64::new(0.0, 0.0);

    let mut width_scan = off.clone();
    width_scan.name = "filter_width_scan".into();
    width_scan.scan = Some(ScanSpec {
        kind: ScanKind::FilterWidth,
        values: vec![0.0, 100.0, 200.0, 300.0, 400.0, 600.0, 800.0, 1200.0],
    });

    let mut od_scan = off.clone();
    od_scan.name = "od_scan".into();
    od_scan.scan = Some(ScanSpec {
        kind: ScanKind::Od,
        values: vec![0.1, 1.0, 10.0, 20.0],
    });

    vec![off, on, on_776, width_scan, od_scan]
}

pub fn builtin_names() -> Vec<String> {
    builtin_scenarios().into_iter().map(|s| s.name).collect()
}

pub fn builtin(name: &str) -> Result<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario {
            name: name.into(),
            available: builtin_names(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for s in builtin_scenarios() {
            assert!(
                validate_scenario(&s).is_empty(),
                "{}: {:?}",
                s.name,
                validate_scenario(&s)
            );
        }
    }

    #[test]
    fn builtin_names_and_content() {
        let names = builtin_names();
        for n in [
            "off_resonant",
            "on_resonant",
            "on_resonant_776",
            "filter_width_scan",
            "od_scan",
        ] {
            assert!(names.iter().any(|x| x == n), "{n}");
        }
        assert_eq!(
            builtin("off_resonant")
                .unwrap()
                .source
                .lower_pump
                .detuning_mhz,
            -1500.0
        );
        let on = builtin("on_resonant").unwrap();
        assert_eq!(on.source.paths.len(), 2);
        let split =
            (on.source.paths[0].center_detuning_mhz - on.source.paths[1].center_detuning_mhz).abs();
        assert!((split - 120.6).abs() < 1e-12);
        let on776 = builtin("on_resonant_776").unwrap();
        assert_eq!(
            on776
                .source
                .paths
                .iter()
                .filter(|p| p.amplitude.norm() > 0.0)
                .count(),
            1
        );
    }

    #[test]
    fn thermal_speed_of_hot_cell() {
        let v = most_probable_speed(VAPOR_TEMPERATURE_K, RB85_MASS_U);
        assert!((v - 270.3).abs() < 0.5, "{v}");
    }

    #[test]
    fn non_power_of_two_grid_is_one_violation() {
        let mut s = builtin("off_resonant").unwrap();
        s.grid.n_points = 1000;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].path.starts_with("grid"));
    }

    #[test]
    fn negative_bin_is_one_violation() {
        let mut s = builtin("off_resonant").unwrap();
        s.detector_bin_ns = -1.0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "detector_bin_ns");
    }

    #[test]
    fn builtins_round_trip_through_config() {
        for s in builtin_scenarios() {
            let text = s.to_config_string().unwrap();
            assert!(text.contains("format_version = 1"));
            let back = Scenario::from_config_str(&text).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn config_requires_version() {
        let s = builtin("off_resonant").unwrap();
        let text = s
            .to_config_string()
            .unwrap()
            .replace("format_version = 1", "");
        assert!(matches!(
            Scenario::from_config_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overrides_apply_dotted_paths() {
        let s = builtin("on_resonant").unwrap();
        let o = s.with_override("motional.v_t_mps=0").unwrap();
        assert_eq!(o.motional.v_t_mps, 0.0);
        let o = s.with_override("source.paths.1.linewidth_mhz=3.5").unwrap();
        assert_eq!(o.source.paths[1].linewidth_mhz, 3.5);
        assert!(s.with_override("motional.nope.x=1").is_err());
        assert!(s.with_override("no_equals").is_err());
    }

    #[test]
    fn grid_axes() {
        let g = FrequencyGrid::default();
        assert_eq!(g.resolution_mhz(), 0.125);
        assert!((g.window_ns() - 8000.0).abs() < 1e-9);
        assert_eq!(g.detuning(g.n_points / 2), 0.0);
        let k = 12345;
        assert_eq!(g.detuning(k), -g.detuning(g.mirror_index(k).unwrap()));
        assert!(g.fft_time_ns(g.n_points - 1) < 0.0);
    }
}
