//! Fixed-step time-domain co-simulation of the harvester and its electrical load.
//!
//! The harvester state `(x, x', v_piezo)` advances with classical RK4. With a
//! power stage attached, the bridge is evaluated at each step boundary: when it
//! conducts, the excess piezo charge is shared into the input capacitor so the
//! terminal sits one bridge drop above it. The regulator and lockout then update
//! the stage capacitors. Energy flows are integrated alongside the state so the
//! trace can be audited.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::harvester::{DriveSpec, LumpedParams};
use crate::power_stage::{
    buck_step, charge_input_cap, rectifier_step, uvlo_step, Conduction, Mode, PowerStageSpec,
    PowerStageState,
};

/// Smallest number of steps per drive period accepted by [`run_transient`].
pub const MIN_STEPS_PER_PERIOD: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    /// Store every Nth step.
    pub record_stride: usize,
}

impl SimConfig {
    /// 1000 steps per period for 300 periods, every step recorded.
    pub fn for_drive(drive: &DriveSpec) -> Self {
        let period = drive.period();
        Self {
            dt: period / 1000.0,
            duration: 300.0 * period,
            record_stride: 1,
        }
    }

    pub fn validate(&self, drive: &DriveSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) {
            return Err(Error::Config(format!(
                "duration {} s is shorter than dt {} s",
                self.duration, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        let limit = 1.0 / (MIN_STEPS_PER_PERIOD * drive.frequency);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt {:e} s exceeds the limit 1/(200·f) = {:e} s for a {} Hz drive",
                self.dt, limit, drive.frequency
            )));
        }
        Ok(())
    }
}

/// What the piezo terminals are connected to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chain {
    /// Plain resistor across the piezo element.
    Resistive(f64),
    /// Rectifier, lockout, regulator and storage feeding a resistive load.
    PowerStage {
        spec: PowerStageSpec,
        load_resistance: f64,
    },
}

/// Node whose voltage the load sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadNode {
    Piezo,
    RegulatedOutput,
}

/// One recorded point.
///
/// Power fields are mean powers over the interval ending at `t` (zero for the
/// first sample); `stored` is the instantaneous stored energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub x: f64,
    pub xdot: f64,
    pub v_piezo: f64,
    pub v_input_cap: f64,
    pub v_output: f64,
    pub mode: Option<Mode>,
    pub p_input: f64,
    pub p_mech_loss: f64,
    pub p_diode: f64,
    pub p_converter: f64,
    pub p_delivered: f64,
    pub stored: f64,
}

/// Columnar simulation record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub load_node: LoadNode,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub v_piezo: Vec<f64>,
    pub v_input_cap: Vec<f64>,
    pub v_output: Vec<f64>,
    pub mode: Vec<Option<Mode>>,
    pub p_input: Vec<f64>,
    pub p_mech_loss: Vec<f64>,
    pub p_diode: Vec<f64>,
    pub p_converter: Vec<f64>,
    pub p_delivered: Vec<f64>,
    pub stored: Vec<f64>,
}

impl Trace {
    pub fn new(load_node: LoadNode) -> Self {
        Self {
            load_node,
            t: Vec::new(),
            x: Vec::new(),
            xdot: Vec::new(),
            v_piezo: Vec::new(),
            v_input_cap: Vec::new(),
            v_output: Vec::new(),
            mode: Vec::new(),
            p_input: Vec::new(),
            p_mech_loss: Vec::new(),
            p_diode: Vec::new(),
            p_converter: Vec::new(),
            p_delivered: Vec::new(),
            stored: Vec::new(),
        }
    }

    pub fn push(&mut self, s: &TraceSample) {
        self.t.push(s.t);
        self.x.push(s.x);
        self.xdot.push(s.xdot);
        self.v_piezo.push(s.v_piezo);
        self.v_input_cap.push(s.v_input_cap);
        self.v_output.push(s.v_output);
        self.mode.push(s.mode);
        self.p_input.push(s.p_input);
        self.p_mech_loss.push(s.p_mech_loss);
        self.p_diode.push(s.p_diode);
        self.p_converter.push(s.p_converter);
        self.p_delivered.push(s.p_delivered);
        self.stored.push(s.stored);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Voltage across the load.
    pub fn load_voltage(&self) -> &[f64] {
        match self.load_node {
            LoadNode::Piezo => &self.v_piezo,
            LoadNode::RegulatedOutput => &self.v_output,
        }
    }

    pub fn sample(&self, i: usize) -> TraceSample {
        TraceSample {
            t: self.t[i],
            x: self.x[i],
            xdot: self.xdot[i],
            v_piezo: self.v_piezo[i],
            v_input_cap: self.v_input_cap[i],
            v_output: self.v_output[i],
            mode: self.mode[i],
            p_input: self.p_input[i],
            p_mech_loss: self.p_mech_loss[i],
            p_diode: self.p_diode[i],
            p_converter: self.p_converter[i],
            p_delivered: self.p_delivered[i],
            stored: self.stored[i],
        }
    }
}

/// Energy totals of a run, in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    pub input_work: f64,
    pub mech_dissipated: f64,
    pub diode_loss: f64,
    pub converter_loss: f64,
    pub delivered: f64,
    pub stored_initial: f64,
    pub stored_final: f64,
    /// `input_work − (sinks + Δstored)`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub v_rms: f64,
    pub p_avg: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Harvester {
    x: f64,
    xdot: f64,
    v: f64,
}

/// Right-hand side of the harvester ODE plus the three energy accumulators
/// (input work, mechanical dissipation, resistive load).
struct Dynamics {
    mass: f64,
    k: f64,
    c: f64,
    theta: f64,
    c_p: f64,
    conductance: f64,
    accel: f64,
    omega: f64,
}

impl Dynamics {
    fn eval(&self, t: f64, s: [f64; 3]) -> [f64; 6] {
        let [x, u, v] = s;
        let base = self.accel * (self.omega * t).cos();
        let force = -self.mass * base;
        [
            u,
            (force - self.c * u - self.k * x - self.theta * v) / self.mass,
            (self.theta * u - self.conductance * v) / self.c_p,
            force * u,
            self.c * u * u,
            self.conductance * v * v,
        ]
    }

    /// One RK4 step; returns the new state and the step energies.
    fn rk4(&self, t: f64, h: f64, s: [f64; 3]) -> ([f64; 3], [f64; 3]) {
        let add =
            |s: [f64; 3], k: &[f64; 6], f: f64| [s[0] + f * k[0], s[1] + f * k[1], s[2] + f * k[2]];
        let k1 = self.eval(t, s);
        let k2 = self.eval(t + 0.5 * h, add(s, &k1, 0.5 * h));
        let k3 = self.eval(t + 0.5 * h, add(s, &k2, 0.5 * h));
        let k4 = self.eval(t + h, add(s, &k3, h));
        let mut next = [0.0; 3];
        let mut energy = [0.0; 3];
        for i in 0..3 {
            next[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            energy[i] = h / 6.0 * (k1[i + 3] + 2.0 * k2[i + 3] + 2.0 * k3[i + 3] + k4[i + 3]);
        }
        (next, energy)
    }
}

#[derive(Default)]
struct Window {
    input: f64,
    mech: f64,
    diode: f64,
    converter: f64,
    delivered: f64,
}

/// Integrates the coupled system from rest.
pub fn run_transient(
    params: &LumpedParams,
    chain: &Chain,
    drive: &DriveSpec,
    cfg: &SimConfig,
) -> Result<Trace> {
    params.validate()?;
    drive.validate()?;
    cfg.validate(drive)?;

    let (conductance, stage_spec, load_node) = match *chain {
        Chain::Resistive(r) => {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "load resistance must be > 0, got {r}"
                )));
            }
            (1.0 / r, None, LoadNode::Piezo)
        }
        Chain::PowerStage {
            spec,
            load_resistance,
        } => {
            spec.validate()?;
            if !(load_resistance > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "load resistance must be > 0, got {load_resistance}"
                )));
            }
            (
                0.0,
                Some((spec, load_resistance)),
                LoadNode::RegulatedOutput,
            )
        }
    };
    // RK4 is stable for h·λ up to about 2.78 on the electrical pole.
    let rc_limit = 2.5 * params.c_p / conductance.max(f64::MIN_POSITIVE);
    if cfg.dt > rc_limit {
        return Err(Error::Config(format!(
            "dt {:e} s exceeds the stability limit {:e} s set by the load time constant",
            cfg.dt, rc_limit
        )));
    }

    let dyn_ = Dynamics {
        mass: params.total_mass(),
        k: params.k_eff,
        c: params.damping(),
        theta: params.theta,
        c_p: params.c_p,
        conductance,
        accel: drive.accel_amplitude,
        omega: 2.0 * PI * drive.frequency,
    };
    let mech_energy = |h: &Harvester| {
        0.5 * dyn_.mass * h.xdot * h.xdot + 0.5 * dyn_.k * h.x * h.x + 0.5 * dyn_.c_p * h.v * h.v
    };

    let steps = (cfg.duration / cfg.dt).round().max(1.0) as usize;
    let mut trace = Trace::new(load_node);
    let mut h = Harvester::default();
    let mut stage = stage_spec.map(|(spec, _)| PowerStageState::at_rest(&spec));

    let sample = |t: f64, h: &Harvester, stage: &Option<PowerStageState>, w: &Window, span: f64| {
        let inv = if span > 0.0 { 1.0 / span } else { 0.0 };
        TraceSample {
            t,
            x: h.x,
            xdot: h.xdot,
            v_piezo: h.v,
            v_input_cap: stage.map_or(0.0, |s| s.v_input_cap),
            v_output: stage.map_or(0.0, |s| s.v_output),
            mode: stage.map(|s| s.mode),
            p_input: w.input * inv,
            p_mech_loss: w.mech * inv,
            p_diode: w.diode * inv,
            p_converter: w.converter * inv,
            p_delivered: w.delivered * inv,
            stored: mech_energy(h) + stage.map_or(0.0, |s| s.ledger.stored),
        }
    };

    trace.push(&sample(0.0, &h, &stage, &Window::default(), 0.0));
    let mut window = Window::default();
    let mut last_recorded = 0.0;

    for n in 0..steps {
        let t = n as f64 * cfg.dt;
        let (next, energy) = dyn_.rk4(t, cfg.dt, [h.x, h.xdot, h.v]);
        h = Harvester {
            x: next[0],
            xdot: next[1],
            v: next[2],
        };
        window.input += energy[0];
        window.mech += energy[1];
        window.delivered += energy[2];

        if let (Some(st), Some((spec, load))) = (stage.as_mut(), stage_spec) {
            let before = st.ledger;
            let drop = spec.rectifier.diode_drop;
            if let Conduction::Conducting(_) = rectifier_step(h.v, st.v_input_cap, &spec.rectifier)
            {
                let sign = h.v.signum();
                let c_in = spec.storage.input_cap;
                let shared = (params.c_p * (h.v.abs() - 2.0 * drop) + c_in * st.v_input_cap)
                    / (params.c_p + c_in);
                let charge = c_in * (shared - st.v_input_cap);
                let v_new = sign * (shared + 2.0 * drop);
                let released = 0.5 * params.c_p * (h.v * h.v - v_new * v_new);
                *st = charge_input_cap(st, charge / cfg.dt, cfg.dt, &spec)?;
                // Charge redistribution between the two capacitors dissipates in the bridge.
                let accepted = st.ledger.harvested_in - before.harvested_in;
                window.diode += released - accepted;
                h.v = v_new;
            }
            *st = buck_step(st, &spec, load, cfg.dt)?;
            st.mode = uvlo_step(st.mode, st.v_input_cap, &spec.uvlo);
            window.diode += st.ledger.diode_loss - before.diode_loss;
            window.converter += st.ledger.converter_loss - before.converter_loss;
            window.delivered += st.ledger.delivered_to_load - before.delivered_to_load;
        }

        if !(h.x.is_finite() && h.xdot.is_finite() && h.v.is_finite()) {
            return Err(Error::Numeric(format!("state diverged at t = {t:e} s")));
        }
        if (n + 1) % cfg.record_stride == 0 || n + 1 == steps {
            let t_next = (n + 1) as f64 * cfg.dt;
            trace.push(&sample(t_next, &h, &stage, &window, t_next - last_recorded));
            last_recorded = t_next;
            window = Window::default();
        }
    }
    Ok(trace)
}

/// Each power sample is the mean over the interval ending at that sample.
fn interval_sum(t: &[f64], p: &[f64]) -> f64 {
    t.windows(2)
        .zip(&p[1..])
        .map(|(tw, pw)| pw * (tw[1] - tw[0]))
        .sum()
}

/// Integrates each power channel of a trace and reports the balance residual.
pub fn energy_audit(trace: &Trace) -> Result<EnergyLedger> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("cannot audit an empty trace".into()));
    }
    let t = &trace.t;
    let mut l = EnergyLedger {
        input_work: interval_sum(t, &trace.p_input),
        mech_dissipated: interval_sum(t, &trace.p_mech_loss),
        diode_loss: interval_sum(t, &trace.p_diode),
        converter_loss: interval_sum(t, &trace.p_converter),
        delivered: interval_sum(t, &trace.p_delivered),
        stored_initial: trace.stored[0],
        stored_final: *trace.stored.last().expect("non-empty"),
        residual: 0.0,
    };
    l.residual = l.input_work
        - (l.mech_dissipated
            + l.diode_loss
            + l.converter_loss
            + l.delivered
            + (l.stored_final - l.stored_initial));
    Ok(l)
}

/// RMS load voltage and mean delivered power over the last `n_cycles` drive periods.
pub fn steady_state_metrics(
    trace: &Trace,
    n_cycles: usize,
    drive_freq: f64,
) -> Result<SteadyState> {
    if n_cycles == 0 {
        return Err(Error::InvalidArgument("n_cycles must be >= 1".into()));
    }
    if !(drive_freq > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "drive frequency must be > 0, got {drive_freq}"
        )));
    }
    let window = n_cycles as f64 / drive_freq;
    let required = 2.0 * window;
    let span = match (trace.t.first(), trace.t.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    if trace.len() < 2 || span < required * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "trace spans {span:e} s but {n_cycles} cycles at {drive_freq} Hz need at least {required:e} s"
        )));
    }
    let t_end = *trace.t.last().expect("non-empty");
    let start = t_end - window;
    // Index of the sample closest to the window start.
    let i0 = match trace.t.binary_search_by(|t| t.total_cmp(&start)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) => {
            if (trace.t[i] - start).abs() < (start - trace.t[i - 1]).abs() {
                i
            } else {
                i - 1
            }
        }
    };
    let v = trace.load_voltage();
    let (mut sq, mut energy, mut duration) = (0.0, 0.0, 0.0);
    for i in i0 + 1..trace.len() {
        let dt = trace.t[i] - trace.t[i - 1];
        sq += v[i] * v[i] * dt;
        energy += trace.p_delivered[i] * dt;
        duration += dt;
    }
    Ok(SteadyState {
        v_rms: (sq / duration).sqrt(),
        p_avg: energy / duration,
    })
}
