//! Behavioral model of the harvesting power-management chain: full-wave bridge
//! rectifier into an input capacitor, hysteretic undervoltage lockout, an averaged
//! buck regulator with selectable output, and output-side storage.
//!
//! Every function here is a pure state transition. Energy is tracked in a
//! [`StageLedger`] so that, per step,
//! `harvested_in = diode_loss + converter_loss + delivered_to_load + Δstored`.

use crate::error::{ensure, Error, Result};

/// Selectable regulated output voltages.
pub const OUTPUT_SETPOINTS: [f64; 4] = [1.8, 2.5, 3.3, 3.6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifierSpec {
    /// Forward drop of one conducting diode; two conduct per half-cycle.
    pub diode_drop: f64,
}

impl Default for RectifierSpec {
    fn default() -> Self {
        Self { diode_drop: 0.4 }
    }
}

impl RectifierSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.diode_drop.is_finite() && self.diode_drop >= 0.0,
            || format!("diode_drop must be >= 0, got {}", self.diode_drop),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvloSpec {
    pub rising_threshold: f64,
    pub falling_threshold: f64,
}

impl Default for UvloSpec {
    fn default() -> Self {
        Self {
            rising_threshold: 4.04,
            falling_threshold: 3.67,
        }
    }
}

impl UvloSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.falling_threshold > 0.0, || {
            format!(
                "falling threshold must be > 0, got {}",
                self.falling_threshold
            )
        })?;
        ensure(self.rising_threshold > self.falling_threshold, || {
            format!(
                "rising threshold ({}) must exceed falling threshold ({})",
                self.rising_threshold, self.falling_threshold
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuckSpec {
    pub output_setpoint: f64,
    pub max_output_current: f64,
    pub input_min: f64,
    pub input_max: f64,
    pub efficiency: f64,
}

impl BuckSpec {
    /// Regulator with the given setpoint and default limits (100 mA, 2.7–20 V, 85 %).
    pub fn with_setpoint(output_setpoint: f64) -> Result<Self> {
        let spec = Self {
            output_setpoint,
            max_output_current: 0.1,
            input_min: 2.7,
            input_max: 20.0,
            efficiency: 0.85,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(OUTPUT_SETPOINTS.contains(&self.output_setpoint), || {
            format!(
                "output_setpoint must be one of 1.8, 2.5, 3.3, 3.6 V, got {}",
                self.output_setpoint
            )
        })?;
        ensure(self.efficiency > 0.0 && self.efficiency <= 1.0, || {
            format!("efficiency must lie in (0, 1], got {}", self.efficiency)
        })?;
        ensure(self.max_output_current > 0.0, || {
            "max_output_current must be > 0".into()
        })?;
        ensure(
            self.input_min > 0.0 && self.input_min < self.input_max,
            || {
                format!(
                    "input range must satisfy 0 < input_min < input_max, got {}..{}",
                    self.input_min, self.input_max
                )
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageSpec {
    pub input_cap: f64,
    pub output_cap: f64,
    /// Ideal supercapacitor in parallel with the output capacitor; 0 disables it.
    pub supercap: f64,
}

impl StorageSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.input_cap > 0.0, || "input_cap must be > 0".into())?;
        ensure(self.output_cap > 0.0, || "output_cap must be > 0".into())?;
        ensure(self.supercap >= 0.0, || "supercap must be >= 0".into())
    }

    /// Total capacitance on the regulated output node.
    pub fn output_total(&self) -> f64 {
        self.output_cap + self.supercap
    }
}

/// Complete configuration of the conditioning chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStageSpec {
    pub rectifier: RectifierSpec,
    pub uvlo: UvloSpec,
    pub buck: BuckSpec,
    pub storage: StorageSpec,
}

impl PowerStageSpec {
    pub fn validate(&self) -> Result<()> {
        self.rectifier.validate()?;
        self.uvlo.validate()?;
        self.buck.validate()?;
        self.storage.validate()
    }

    fn stored_energy(&self, v_in: f64, v_out: f64) -> f64 {
        0.5 * self.storage.input_cap * v_in * v_in
            + 0.5 * self.storage.output_total() * v_out * v_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Converter off, input capacitor accumulating charge.
    UvloSleep,
    /// Converter on and moving energy toward the output.
    Transfer,
    /// Converter on, output held at its setpoint.
    RegulatedIdle,
}

impl Mode {
    pub fn is_awake(self) -> bool {
        !matches!(self, Mode::UvloSleep)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::UvloSleep => "UVLO_SLEEP",
            Mode::Transfer => "TRANSFER",
            Mode::RegulatedIdle => "REGULATED_IDLE",
        }
    }
}

/// Running energy totals of the chain, in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageLedger {
    pub harvested_in: f64,
    pub diode_loss: f64,
    pub converter_loss: f64,
    pub delivered_to_load: f64,
    /// Energy currently held in the input and output capacitors.
    pub stored: f64,
    /// Value of `stored` when the ledger was opened.
    pub stored_at_start: f64,
}

impl StageLedger {
    /// `harvested_in − (losses + delivered + Δstored)`; zero for exact accounting.
    pub fn residual(&self) -> f64 {
        self.harvested_in
            - (self.diode_loss
                + self.converter_loss
                + self.delivered_to_load
                + (self.stored - self.stored_at_start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStageState {
    pub mode: Mode,
    pub v_input_cap: f64,
    pub v_output: f64,
    pub ledger: StageLedger,
}

impl PowerStageState {
    /// Opens a fresh ledger at the given capacitor voltages.
    pub fn new(spec: &PowerStageSpec, mode: Mode, v_input_cap: f64, v_output: f64) -> Result<Self> {
        ensure(v_input_cap >= 0.0 && v_output >= 0.0, || {
            "capacitor voltages must be >= 0".into()
        })?;
        ensure(v_output <= spec.buck.output_setpoint, || {
            format!(
                "initial output {v_output} V exceeds the {} V setpoint",
                spec.buck.output_setpoint
            )
        })?;
        let stored = spec.stored_energy(v_input_cap, v_output);
        Ok(Self {
            mode,
            v_input_cap,
            v_output,
            ledger: StageLedger {
                stored,
                stored_at_start: stored,
                ..StageLedger::default()
            },
        })
    }

    /// Discharged capacitors, converter asleep.
    pub fn at_rest(spec: &PowerStageSpec) -> Self {
        Self::new(spec, Mode::UvloSleep, 0.0, 0.0).expect("zero state is always valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conduction {
    Blocked,
    Conducting(Polarity),
}

/// Bridge conduction state for a piezo voltage against the input capacitor.
pub fn rectifier_step(v_piezo: f64, v_input_cap: f64, spec: &RectifierSpec) -> Conduction {
    if v_piezo.abs() > v_input_cap + 2.0 * spec.diode_drop {
        if v_piezo > 0.0 {
            Conduction::Conducting(Polarity::Positive)
        } else {
            Conduction::Conducting(Polarity::Negative)
        }
    } else {
        Conduction::Blocked
    }
}

/// Hysteretic undervoltage lockout.
///
/// Sleep wakes at or above the rising threshold; an awake converter sleeps at or
/// below the falling threshold. Inside the window the mode is kept.
pub fn uvlo_step(mode: Mode, v_input_cap: f64, spec: &UvloSpec) -> Mode {
    match mode {
        Mode::UvloSleep if v_input_cap >= spec.rising_threshold => Mode::Transfer,
        Mode::Transfer | Mode::RegulatedIdle if v_input_cap <= spec.falling_threshold => {
            Mode::UvloSleep
        }
        m => m,
    }
}

/// Deposits rectified current into the input capacitor for one step.
///
/// Negative current is treated as zero: the bridge cannot discharge the capacitor.
/// The ledger receives the capacitor energy gain plus the bridge drop loss.
pub fn charge_input_cap(
    state: &PowerStageState,
    i_rect: f64,
    dt: f64,
    spec: &PowerStageSpec,
) -> Result<PowerStageState> {
    check_dt(dt)?;
    let i = i_rect.max(0.0);
    if i == 0.0 {
        return Ok(*state);
    }
    let v0 = state.v_input_cap;
    let v1 = v0 + i * dt / spec.storage.input_cap;
    let cap_energy = i * dt * 0.5 * (v0 + v1);
    let drop_energy = 2.0 * spec.rectifier.diode_drop * i * dt;

    let mut next = *state;
    next.v_input_cap = v1;
    next.ledger.harvested_in += cap_energy + drop_energy;
    next.ledger.diode_loss += drop_energy;
    next.ledger.stored = spec.stored_energy(v1, state.v_output);
    Ok(next)
}

/// Averaged buck regulator and output load over one step.
///
/// The output node discharges through the load (exact exponential decay), then,
/// while awake and with the input inside its operating range, the converter
/// refills it toward the setpoint. Transfer is bounded by the energy available
/// above the lockout floor, by the output current limit and by efficiency.
pub fn buck_step(
    state: &PowerStageState,
    spec: &PowerStageSpec,
    load_resistance: f64,
    dt: f64,
) -> Result<PowerStageState> {
    check_dt(dt)?;
    if !(load_resistance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "load resistance must be > 0, got {load_resistance}"
        )));
    }
    let c_in = spec.storage.input_cap;
    let c_out = spec.storage.output_total();
    let buck = &spec.buck;
    let setpoint = buck.output_setpoint;

    let v_out_sq = state.v_output * state.v_output;
    let decayed_sq = v_out_sq * (-2.0 * dt / (load_resistance * c_out)).exp();
    let load_energy = 0.5 * c_out * (v_out_sq - decayed_sq);

    let mut v_in_sq = state.v_input_cap * state.v_input_cap;
    let mut out_sq = decayed_sq;
    let mut converter_loss = 0.0;
    let mut mode = state.mode;

    let in_range = state.v_input_cap >= buck.input_min && state.v_input_cap <= buck.input_max;
    if state.mode.is_awake() && in_range {
        let floor = buck.input_min.max(spec.uvlo.falling_threshold);
        let available = (0.5 * c_in * (v_in_sq - floor * floor)).max(0.0);
        let demand = (0.5 * c_out * (setpoint * setpoint - decayed_sq)).max(0.0);
        let current_limited = buck.max_output_current * setpoint * dt;
        let out_energy = demand.min(current_limited).min(buck.efficiency * available);
        let drawn = out_energy / buck.efficiency;

        v_in_sq = (v_in_sq - 2.0 * drawn / c_in).max(0.0);
        out_sq = (decayed_sq + 2.0 * out_energy / c_out).min(setpoint * setpoint);
        converter_loss = drawn - out_energy;
        mode = if out_sq >= setpoint * setpoint * (1.0 - 1e-9) {
            Mode::RegulatedIdle
        } else {
            Mode::Transfer
        };
    }

    let mut next = *state;
    next.mode = mode;
    next.v_input_cap = v_in_sq.sqrt();
    next.v_output = out_sq.sqrt();
    next.ledger.converter_loss += converter_loss;
    next.ledger.delivered_to_load += load_energy;
    next.ledger.stored = 0.5 * c_in * v_in_sq + 0.5 * c_out * out_sq;
    Ok(next)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "time step must be > 0, got {dt}"
        )))
    }
}
