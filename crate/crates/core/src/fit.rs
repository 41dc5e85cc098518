//! Least-squares estimation of lumped parameters from measured targets.
//!
//! The objective is the weighted sum of squared relative errors between model
//! predictions and observations. It is minimized with a Nelder–Mead simplex in
//! coordinates normalized to the parameter bounds; trial points are projected
//! back into the box.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harvester::{natural_frequency, solve_phasor, DriveSpec, LoadSpec, LumpedParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreeParam {
    MEff,
    KEff,
    Zeta,
    Theta,
    CP,
    AccelAmplitude,
}

impl FreeParam {
    pub const ALL: [FreeParam; 6] = [
        FreeParam::MEff,
        FreeParam::KEff,
        FreeParam::Zeta,
        FreeParam::Theta,
        FreeParam::CP,
        FreeParam::AccelAmplitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FreeParam::MEff => "m_eff",
            FreeParam::KEff => "k_eff",
            FreeParam::Zeta => "zeta",
            FreeParam::Theta => "theta",
            FreeParam::CP => "c_p",
            FreeParam::AccelAmplitude => "accel_amplitude",
        }
    }

    fn get(self, p: &LumpedParams, accel: f64) -> f64 {
        match self {
            FreeParam::MEff => p.m_eff,
            FreeParam::KEff => p.k_eff,
            FreeParam::Zeta => p.zeta,
            FreeParam::Theta => p.theta,
            FreeParam::CP => p.c_p,
            FreeParam::AccelAmplitude => accel,
        }
    }

    fn set(self, p: &mut LumpedParams, accel: &mut f64, value: f64) {
        match self {
            FreeParam::MEff => p.m_eff = value,
            FreeParam::KEff => p.k_eff = value,
            FreeParam::Zeta => p.zeta = value,
            FreeParam::Theta => p.theta = value,
            FreeParam::CP => p.c_p = value,
            FreeParam::AccelAmplitude => *accel = value,
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreeParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FreeParam::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown parameter '{s}', expected one of m_eff, k_eff, zeta, theta, c_p, accel_amplitude"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetKind {
    /// Short-circuit natural frequency with the given tip mass (Hz).
    ResonantFreqAtMass { tip_mass: f64 },
    /// Open-circuit voltage amplitude when driven at the natural frequency (V).
    PeakVoltageAtMass { tip_mass: f64 },
    /// Mean power into a resistor at a given drive frequency (W).
    PowerAtLoad {
        tip_mass: f64,
        frequency: f64,
        resistance: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTarget {
    pub kind: TargetKind,
    pub observed: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBound {
    pub param: FreeParam,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub targets: Vec<FitTarget>,
    pub free: Vec<ParamBound>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_evaluations: usize,
    /// Simplex diameter, relative to the best vertex, at which the search stops.
    pub xtol: f64,
    /// Initial simplex edge as a fraction of each parameter's starting value.
    pub initial_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            xtol: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: LumpedParams,
    pub accel_amplitude: f64,
    /// Weighted RMS of the relative errors at `params`.
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidArgument("fit problem has no targets".into()));
        }
        if self.free.is_empty() {
            return Err(Error::InvalidArgument(
                "fit problem has no free parameters".into(),
            ));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "target {i}: weight must be > 0"
                )));
            }
            if !(t.observed.is_finite() && t.observed != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "target {i}: observed value must be finite and non-zero"
                )));
            }
            let (m, extra) = match t.kind {
                TargetKind::ResonantFreqAtMass { tip_mass }
                | TargetKind::PeakVoltageAtMass { tip_mass } => (tip_mass, true),
                TargetKind::PowerAtLoad {
                    tip_mass,
                    frequency,
                    resistance,
                } => (tip_mass, frequency > 0.0 && resistance > 0.0),
            };
            if !(m >= 0.0 && m.is_finite() && extra) {
                return Err(Error::InvalidArgument(format!(
                    "target {i}: invalid operating point"
                )));
            }
        }
        for (i, b) in self.free.iter().enumerate() {
            if self.free[..i].iter().any(|o| o.param == b.param) {
                return Err(Error::InvalidArgument(format!("{} listed twice", b.param)));
            }
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(Error::InvalidArgument(format!(
                    "{}: bounds must be finite with lower < upper",
                    b.param
                )));
            }
            let ok = match b.param {
                FreeParam::Theta => b.lower >= 0.0,
                FreeParam::Zeta => b.lower > 0.0 && b.upper < 1.0,
                _ => b.lower > 0.0,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "{}: bounds [{}, {}] admit invalid values",
                    b.param, b.lower, b.upper
                )));
            }
        }
        let is_free = |p| self.free.iter().any(|b| b.param == p);
        let has_power = self
            .targets
            .iter()
            .any(|t| matches!(t.kind, TargetKind::PowerAtLoad { .. }));
        if is_free(FreeParam::Theta) && is_free(FreeParam::AccelAmplitude) && !has_power {
            return Err(Error::InvalidArgument(
                "theta and accel_amplitude cannot both be free without power targets: \
                 voltage data only constrains their product"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Model prediction for one target.
pub fn predict(kind: &TargetKind, params: &LumpedParams, accel_amplitude: f64) -> f64 {
    match *kind {
        TargetKind::ResonantFreqAtMass { tip_mass } => {
            natural_frequency(&params.with_tip_mass(tip_mass))
        }
        TargetKind::PeakVoltageAtMass { tip_mass } => {
            let p = params.with_tip_mass(tip_mass);
            let drive = DriveSpec {
                accel_amplitude,
                frequency: natural_frequency(&p),
            };
            solve_phasor(&p, &drive, &LoadSpec::OpenCircuit).volt_amplitude
        }
        TargetKind::PowerAtLoad {
            tip_mass,
            frequency,
            resistance,
        } => {
            let drive = DriveSpec {
                accel_amplitude,
                frequency,
            };
            solve_phasor(
                &params.with_tip_mass(tip_mass),
                &drive,
                &LoadSpec::Resistive(resistance),
            )
            .avg_power
        }
    }
}

/// Weighted sum of squared relative errors.
pub fn objective(targets: &[FitTarget], params: &LumpedParams, accel_amplitude: f64) -> f64 {
    targets
        .iter()
        .map(|t| {
            let rel = (predict(&t.kind, params, accel_amplitude) - t.observed) / t.observed;
            t.weight * rel * rel
        })
        .sum()
}

struct Problem<'a> {
    targets: &'a [FitTarget],
    free: &'a [ParamBound],
    base: LumpedParams,
    base_accel: f64,
    evaluations: usize,
}

impl Problem<'_> {
    fn decode(&self, u: &[f64]) -> (LumpedParams, f64) {
        let mut p = self.base;
        let mut accel = self.base_accel;
        for (b, &ui) in self.free.iter().zip(u) {
            b.param
                .set(&mut p, &mut accel, b.lower + ui * (b.upper - b.lower));
        }
        (p, accel)
    }

    fn eval(&mut self, u: &[f64]) -> f64 {
        self.evaluations += 1;
        let (p, accel) = self.decode(u);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        let f = objective(self.targets, &p, accel);
        if f.is_nan() {
            f64::INFINITY
        } else {
            f
        }
    }
}

fn project(u: &mut [f64]) {
    for v in u {
        *v = v.clamp(0.0, 1.0);
    }
}

fn combine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t·(b − a)
    let mut out: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
    project(&mut out);
    out
}

/// Fits the free parameters of `problem`, starting from `init` and `init_accel`.
pub fn fit_params(
    problem: &FitProblem,
    init: &LumpedParams,
    init_accel: f64,
    options: &FitOptions,
) -> Result<FitResult> {
    problem.validate()?;
    init.validate()?;
    if !(init_accel >= 0.0 && init_accel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial drive amplitude must be >= 0, got {init_accel}"
        )));
    }
    for b in &problem.free {
        let v = b.param.get(init, init_accel);
        if v < b.lower || v > b.upper {
            return Err(Error::InvalidArgument(format!(
                "initial {} = {v} lies outside [{}, {}]",
                b.param, b.lower, b.upper
            )));
        }
    }

    let n = problem.free.len();
    let mut prob = Problem {
        targets: &problem.targets,
        free: &problem.free,
        base: *init,
        base_accel: init_accel,
        evaluations: 0,
    };
    let u0: Vec<f64> = problem
        .free
        .iter()
        .map(|b| (b.param.get(init, init_accel) - b.lower) / (b.upper - b.lower))
        .collect();

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = prob.eval(&u0);
    let initial_residual = residual_of(f0, &problem.targets);
    simplex.push((u0.clone(), f0));
    for (i, b) in problem.free.iter().enumerate() {
        let value = b.param.get(init, init_accel);
        let mut step = options.initial_step * value.abs() / (b.upper - b.lower);
        if step == 0.0 {
            step = options.initial_step;
        }
        step = step.min(0.5);
        let mut u = u0.clone();
        u[i] = if u0[i] + step <= 1.0 {
            u0[i] + step
        } else {
            u0[i] - step
        };
        let f = prob.eval(&u);
        simplex.push((u, f));
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex, &prob) < options.xtol {
            converged = true;
            break;
        }
        if prob.evaluations >= options.max_evaluations {
            break;
        }
        iterations += 1;

        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64)
            .collect();

        let reflected = combine(&centroid, &worst.0, -1.0);
        let fr = prob.eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst.0, -2.0);
            let fe = prob.eval(&expanded);
            simplex[n] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst.1 {
                let c = combine(&centroid, &reflected, 0.5);
                let fc = prob.eval(&c);
                (c, fc)
            } else {
                let c = combine(&centroid, &worst.0, 0.5);
                let fc = prob.eval(&c);
                (c, fc)
            };
            if fc < fr.min(worst.1) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    v.0 = combine(&best, &v.0, 0.5);
                    v.1 = prob.eval(&v.0);
                }
            }
        }
        history.push(simplex.iter().map(|v| v.1).fold(f64::INFINITY, f64::min));
    }

    let (best_u, best_f) = simplex
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("simplex is never empty");
    if !best_f.is_finite() {
        return Err(Error::Numeric(
            "objective is not finite anywhere in the simplex".into(),
        ));
    }
    let (params, accel_amplitude) = prob.decode(&best_u);
    Ok(FitResult {
        params,
        accel_amplitude,
        residual: residual_of(best_f, &problem.targets),
        initial_residual,
        iterations,
        evaluations: prob.evaluations,
        converged,
        history,
    })
}

fn residual_of(objective: f64, targets: &[FitTarget]) -> f64 {
    let weights: f64 = targets.iter().map(|t| t.weight).sum();
    (objective / weights).sqrt()
}

/// Largest relative distance of any vertex from the best one, in parameter units.
fn diameter(simplex: &[(Vec<f64>, f64)], prob: &Problem<'_>) -> f64 {
    let best = &simplex[0].0;
    let mut d: f64 = 0.0;
    for (j, b) in prob.free.iter().enumerate() {
        let width = b.upper - b.lower;
        let center = b.lower + best[j] * width;
        let scale = center.abs().max(1e-12 * width);
        for v in &simplex[1..] {
            d = d.max((v.0[j] - best[j]).abs() * width / scale);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn init() -> LumpedParams {
        LumpedParams::new(1.5e-3, 1000.0, 0.02, 1e-4, 100e-9, 0.0).unwrap()
    }

    fn resonance_targets() -> Vec<FitTarget> {
        vec![
            FitTarget {
                kind: TargetKind::ResonantFreqAtMass { tip_mass: 1.0e-3 },
                observed: 100.0,
                weight: 1.0,
            },
            FitTarget {
                kind: TargetKind::ResonantFreqAtMass { tip_mass: 1.5e-3 },
                observed: 90.0,
                weight: 1.0,
            },
        ]
    }

    fn mass_and_stiffness() -> Vec<ParamBound> {
        vec![
            ParamBound {
                param: FreeParam::MEff,
                lower: 0.1e-3,
                upper: 5e-3,
            },
            ParamBound {
                param: FreeParam::KEff,
                lower: 100.0,
                upper: 5000.0,
            },
        ]
    }

    #[test]
    fn parses_param_names() {
        assert_eq!("m_eff".parse::<FreeParam>().unwrap(), FreeParam::MEff);
        assert_eq!(
            " accel_amplitude".parse::<FreeParam>().unwrap(),
            FreeParam::AccelAmplitude
        );
        assert!("mass".parse::<FreeParam>().is_err());
    }

    #[test]
    fn rejects_empty_problems() {
        let p = FitProblem {
            targets: vec![],
            free: mass_and_stiffness(),
        };
        assert!(fit_params(&p, &init(), 9.81, &FitOptions::default()).is_err());
        let p = FitProblem {
            targets: resonance_targets(),
            free: vec![],
        };
        assert!(fit_params(&p, &init(), 9.81, &FitOptions::default()).is_err());
    }

    #[test]
    fn rejects_unidentifiable_pair() {
        let p = FitProblem {
            targets: vec![FitTarget {
                kind: TargetKind::PeakVoltageAtMass { tip_mass: 1e-3 },
                observed: 26.9,
                weight: 1.0,
            }],
            free: vec![
                ParamBound {
                    param: FreeParam::Theta,
                    lower: 0.0,
                    upper: 1e-2,
                },
                ParamBound {
                    param: FreeParam::AccelAmplitude,
                    lower: 1.0,
                    upper: 100.0,
                },
            ],
        };
        let err = fit_params(&p, &init(), 9.81, &FitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("product"));
    }

    #[test]
    fn rejects_init_outside_bounds() {
        let mut free = mass_and_stiffness();
        free[1].upper = 900.0;
        let p = FitProblem {
            targets: resonance_targets(),
            free,
        };
        assert!(fit_params(&p, &init(), 9.81, &FitOptions::default()).is_err());
    }

    #[test]
    fn resonance_pair_fit_is_exact() {
        let p = FitProblem {
            targets: resonance_targets(),
            free: mass_and_stiffness(),
        };
        let r = fit_params(&p, &init(), 9.81, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.residual < 1e-6, "{}", r.residual);
        assert!((r.params.m_eff - 1.1316e-3).abs() / 1.1316e-3 < 5e-3);
        assert!((r.params.k_eff - 841.5).abs() / 841.5 < 5e-3);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.residual <= r.initial_residual);
    }

    #[test]
    fn contradictory_targets_converge_with_residual() {
        let mut targets = resonance_targets();
        targets[1].kind = TargetKind::ResonantFreqAtMass { tip_mass: 1.0e-3 };
        let p = FitProblem {
            targets,
            free: mass_and_stiffness(),
        };
        let r = fit_params(&p, &init(), 9.81, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.residual > 1e-3);
    }

    #[test]
    fn deterministic() {
        let p = FitProblem {
            targets: resonance_targets(),
            free: mass_and_stiffness(),
        };
        let a = fit_params(&p, &init(), 9.81, &FitOptions::default()).unwrap();
        let b = fit_params(&p, &init(), 9.81, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
