//! Single-mode lumped model of a piezoelectric cantilever under base excitation.
//!
//! The beam is reduced to an effective mass `M = m_eff + tip_mass`, a spring `k`,
//! a viscous damper `c = 2·zeta·sqrt(k·M)` and a piezoelectric element with
//! coupling `theta` and clamped capacitance `c_p`:
//!
//! ```text
//! M·x'' + c·x' + k·x + theta·v = -M·a(t)
//! c_p·v' + v/R               = theta·x'
//! ```
//!
//! `x` is the tip displacement relative to the base, `v` the terminal voltage and
//! `a(t)` the base acceleration. All quantities are SI.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure, Error, Result};

/// Effective-mass fraction of the bare beam used when only the beam mass is known.
///
/// Anchored to the 100 Hz / 90 Hz resonance pair of the unimorph device, whose
/// 2 g beam has a 1.1316 g modal mass.
pub const EFFECTIVE_MASS_FRACTION: f64 = 0.5658;

/// Base acceleration used when none is configured (1 g).
pub const DEFAULT_ACCEL: f64 = 9.81;
pub const DEFAULT_ZETA: f64 = 0.02;
pub const DEFAULT_THETA: f64 = 1e-4;
pub const DEFAULT_CP: f64 = 100e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamKind {
    Unimorph,
    Bimorph,
}

/// Cantilever geometry and mass. Lengths in meters, mass in kilograms.
///
/// Carried as device metadata; the dynamics are driven by [`LumpedParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub kind: BeamKind,
    pub total_length: f64,
    pub width: f64,
    pub thickness: f64,
    pub piezo_length: f64,
    pub piezo_width: f64,
    pub piezo_thickness: f64,
    pub beam_mass: f64,
}

impl BeamSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("total_length", self.total_length),
            ("width", self.width),
            ("thickness", self.thickness),
            ("piezo_length", self.piezo_length),
            ("piezo_width", self.piezo_width),
            ("piezo_thickness", self.piezo_thickness),
            ("beam_mass", self.beam_mass),
        ];
        for (name, value) in dims {
            ensure(value.is_finite() && value > 0.0, || {
                format!("{name} must be strictly positive, got {value}")
            })?;
        }
        ensure(self.piezo_length <= self.total_length, || {
            "piezo_length exceeds total_length".into()
        })?;
        ensure(self.piezo_width <= self.width, || {
            "piezo_width exceeds width".into()
        })?;
        ensure(self.piezo_thickness <= self.thickness, || {
            "piezo_thickness exceeds thickness".into()
        })?;
        Ok(())
    }

    /// Modal mass of the bare beam.
    pub fn effective_mass(&self) -> f64 {
        EFFECTIVE_MASS_FRACTION * self.beam_mass
    }
}

/// Parameter vector of the lumped model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedParams {
    /// Effective modal mass of the beam, excluding the tip mass (kg).
    pub m_eff: f64,
    /// Effective stiffness (N/m).
    pub k_eff: f64,
    /// Mechanical damping ratio.
    pub zeta: f64,
    /// Electromechanical coupling (N/V, equivalently A·s/m).
    pub theta: f64,
    /// Clamped capacitance of the piezo element (F).
    pub c_p: f64,
    /// Mass attached at the free end (kg).
    pub tip_mass: f64,
}

impl LumpedParams {
    pub fn new(
        m_eff: f64,
        k_eff: f64,
        zeta: f64,
        theta: f64,
        c_p: f64,
        tip_mass: f64,
    ) -> Result<Self> {
        let p = Self {
            m_eff,
            k_eff,
            zeta,
            theta,
            c_p,
            tip_mass,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.m_eff,
            self.k_eff,
            self.zeta,
            self.theta,
            self.c_p,
            self.tip_mass,
        ]
        .iter()
        .all(|v| v.is_finite());
        ensure(finite, || "parameters must be finite".into())?;
        ensure(self.m_eff > 0.0, || {
            format!("m_eff must be > 0, got {}", self.m_eff)
        })?;
        ensure(self.k_eff > 0.0, || {
            format!("k_eff must be > 0, got {}", self.k_eff)
        })?;
        ensure(self.c_p > 0.0, || {
            format!("c_p must be > 0, got {}", self.c_p)
        })?;
        ensure(self.theta >= 0.0, || {
            format!("theta must be >= 0, got {}", self.theta)
        })?;
        ensure(self.tip_mass >= 0.0, || {
            format!("tip_mass must be >= 0, got {}", self.tip_mass)
        })?;
        ensure(self.zeta > 0.0 && self.zeta < 1.0, || {
            format!("zeta must lie in (0, 1), got {}", self.zeta)
        })?;
        Ok(())
    }

    pub fn with_tip_mass(self, tip_mass: f64) -> Self {
        Self { tip_mass, ..self }
    }

    /// Oscillating mass `m_eff + tip_mass`.
    pub fn total_mass(&self) -> f64 {
        self.m_eff + self.tip_mass
    }

    /// Viscous damping coefficient `2·zeta·sqrt(k·M)`.
    pub fn damping(&self) -> f64 {
        2.0 * self.zeta * (self.k_eff * self.total_mass()).sqrt()
    }
}

/// Sinusoidal base excitation `a(t) = accel_amplitude·cos(2π·frequency·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub accel_amplitude: f64,
    pub frequency: f64,
}

impl DriveSpec {
    pub fn new(accel_amplitude: f64, frequency: f64) -> Result<Self> {
        let d = Self {
            accel_amplitude,
            frequency,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.accel_amplitude.is_finite() && self.accel_amplitude >= 0.0,
            || format!("accel_amplitude must be >= 0, got {}", self.accel_amplitude),
        )?;
        ensure(self.frequency.is_finite() && self.frequency > 0.0, || {
            format!("frequency must be > 0, got {}", self.frequency)
        })
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }
}

/// Electrical load across the piezo terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadSpec {
    OpenCircuit,
    Resistive(f64),
}

impl LoadSpec {
    pub fn resistive(ohms: f64) -> Result<Self> {
        let load = LoadSpec::Resistive(ohms);
        load.validate()?;
        Ok(load)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LoadSpec::OpenCircuit => Ok(()),
            LoadSpec::Resistive(r) => ensure(r.is_finite() && r > 0.0, || {
                format!("load resistance must be > 0, got {r}")
            }),
        }
    }

    fn conductance(&self) -> f64 {
        match *self {
            LoadSpec::OpenCircuit => 0.0,
            LoadSpec::Resistive(r) => 1.0 / r,
        }
    }
}

/// Steady-state response. Phases are relative to the base acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorResponse {
    pub disp_amplitude: f64,
    pub disp_phase: f64,
    pub volt_amplitude: f64,
    pub volt_phase: f64,
    pub avg_power: f64,
}

impl PhasorResponse {
    const ZERO: PhasorResponse = PhasorResponse {
        disp_amplitude: 0.0,
        disp_phase: 0.0,
        volt_amplitude: 0.0,
        volt_phase: 0.0,
        avg_power: 0.0,
    };
}

/// Two tip-mass / resonance observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonancePoint {
    pub tip_mass: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BimorphWiring {
    Series,
    Parallel,
}

/// Scales a value given in milli-units (mm, g, mA) to SI, rounding as if the
/// decimal literal had been written with an `e-3` suffix.
pub fn milli(v: f64) -> f64 {
    format!("{v}e-3").parse().unwrap_or(v / 1000.0)
}

/// Short-circuit mechanical natural frequency in hertz.
pub fn natural_frequency(params: &LumpedParams) -> f64 {
    (params.k_eff / params.total_mass()).sqrt() / (2.0 * PI)
}

/// Solves `f_i = sqrt(k / (m_eff + m_i)) / 2π` for `(m_eff, k_eff)` from two observations.
pub fn lumped_from_resonance_pair(p1: ResonancePoint, p2: ResonancePoint) -> Result<(f64, f64)> {
    for p in [p1, p2] {
        if !(p.frequency.is_finite() && p.frequency > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resonance frequency must be > 0, got {}",
                p.frequency
            )));
        }
        if !(p.tip_mass.is_finite() && p.tip_mass >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tip mass must be >= 0, got {}",
                p.tip_mass
            )));
        }
    }
    if p1.tip_mass == p2.tip_mass {
        return Err(Error::Degenerate(
            "both observations use the same tip mass".into(),
        ));
    }
    let ratio = (p1.frequency / p2.frequency).powi(2);
    if ratio == 1.0 {
        return Err(Error::Infeasible(
            "equal frequencies at different tip masses imply unbounded effective mass".into(),
        ));
    }
    let m_eff = (p2.tip_mass - ratio * p1.tip_mass) / (ratio - 1.0);
    let omega1 = 2.0 * PI * p1.frequency;
    let k_eff = omega1 * omega1 * (m_eff + p1.tip_mass);
    if !(m_eff > 0.0 && m_eff.is_finite()) {
        return Err(Error::Infeasible(format!(
            "observations imply non-positive effective mass ({m_eff:e} kg)"
        )));
    }
    if !(k_eff > 0.0 && k_eff.is_finite()) {
        return Err(Error::Infeasible(format!(
            "observations imply non-positive stiffness ({k_eff:e} N/m)"
        )));
    }
    Ok((m_eff, k_eff))
}

/// Solves `A·z = b` for a 2×2 complex system by Cramer's rule.
fn solve_2x2(a: [[Complex64; 2]; 2], b: [Complex64; 2]) -> [Complex64; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        (b[0] * a[1][1] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - b[0] * a[1][0]) / det,
    ]
}

/// Steady-state sinusoidal response at the drive frequency.
pub fn solve_phasor(params: &LumpedParams, drive: &DriveSpec, load: &LoadSpec) -> PhasorResponse {
    if drive.accel_amplitude == 0.0 {
        return PhasorResponse::ZERO;
    }
    let w = drive.omega();
    let mass = params.total_mass();
    let j = Complex64::i();

    let mech = Complex64::new(params.k_eff - w * w * mass, w * params.damping());
    let elec = Complex64::new(load.conductance(), w * params.c_p);
    let theta = Complex64::from(params.theta);
    let system = [[mech, theta], [-j * w * theta, elec]];
    let forcing = [
        Complex64::from(-mass * drive.accel_amplitude),
        Complex64::from(0.0),
    ];
    let [disp, volt] = solve_2x2(system, forcing);

    let mut resp = PhasorResponse {
        disp_amplitude: disp.norm(),
        disp_phase: disp.arg(),
        volt_amplitude: volt.norm(),
        volt_phase: volt.arg(),
        avg_power: 0.0,
    };
    resp.avg_power = average_power(&resp, load);
    resp
}

/// Mean electrical power dissipated in the load.
pub fn average_power(resp: &PhasorResponse, load: &LoadSpec) -> f64 {
    match *load {
        LoadSpec::OpenCircuit => 0.0,
        LoadSpec::Resistive(r) => resp.volt_amplitude * resp.volt_amplitude / (2.0 * r),
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Load resistance maximizing the mean power delivered at `frequency`.
///
/// Golden-section search over `ln R`, seeded at the capacitive impedance
/// `1/(ω·c_p)`. With `theta == 0` the power is identically zero and the seed is
/// returned; it is the argmax of the voltage-divider power in that limit.
pub fn optimal_load(params: &LumpedParams, frequency: f64) -> f64 {
    let w = 2.0 * PI * frequency;
    let seed = 1.0 / (w * params.c_p);
    if params.theta == 0.0 {
        return seed;
    }
    // Unit drive: the argmax does not depend on the excitation level.
    let drive = DriveSpec {
        accel_amplitude: 1.0,
        frequency,
    };
    let power =
        |log_r: f64| solve_phasor(params, &drive, &LoadSpec::Resistive(log_r.exp())).avg_power;

    let span = 3.0 * std::f64::consts::LN_10;
    let (mut lo, mut hi) = (seed.ln() - span, seed.ln() + span);
    let mut best = seed.ln();
    for _ in 0..16 {
        best = golden_max(&power, lo, hi, 1e-10);
        let edge = 1e-6 * (hi - lo);
        if best - lo < edge {
            hi = lo + 0.5 * span;
            lo -= 2.0 * span;
        } else if hi - best < edge {
            lo = hi - 0.5 * span;
            hi += 2.0 * span;
        } else {
            break;
        }
    }
    best.exp()
}

/// Maximizes a unimodal function on `[lo, hi]`; ties keep the lower sub-interval.
fn golden_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Equivalent single-element parameters of a two-layer beam built from identical layers.
///
/// Series wiring halves the capacitance at unchanged coupling; parallel wiring
/// doubles both. Mechanical fields are untouched.
pub fn bimorph_adjust(single_layer: &LumpedParams, wiring: BimorphWiring) -> LumpedParams {
    match wiring {
        BimorphWiring::Series => LumpedParams {
            c_p: single_layer.c_p / 2.0,
            ..*single_layer
        },
        BimorphWiring::Parallel => LumpedParams {
            c_p: single_layer.c_p * 2.0,
            theta: single_layer.theta * 2.0,
            ..*single_layer
        },
    }
}
