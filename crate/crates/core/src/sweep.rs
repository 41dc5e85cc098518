//! Frequency, load and tip-mass sweeps over the phasor model, and peak location.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harvester::{natural_frequency, solve_phasor, DriveSpec, LoadSpec, LumpedParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbscissaKind {
    FrequencyHz,
    ResistanceOhm,
    TipMassKg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    VoltAmplitude,
    AvgPower,
    ResonantFreq,
}

/// Ordered samples of one swept quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub abscissa_kind: AbscissaKind,
    pub value_kind: ValueKind,
    pub points: Vec<(f64, f64)>,
}

impl SweepCurve {
    pub fn new(
        abscissa_kind: AbscissaKind,
        value_kind: ValueKind,
        points: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let curve = Self {
            abscissa_kind,
            value_kind,
            points,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("curve has no points".into()));
        }
        if let Some((i, _)) = self
            .points
            .iter()
            .enumerate()
            .find(|(_, (x, y))| !(x.is_finite() && y.is_finite()))
        {
            return Err(Error::InvalidArgument(format!("point {i} is not finite")));
        }
        if let Some(i) = self.points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(format!(
                "abscissa not strictly increasing at point {}",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn abscissae(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

/// Uniform frequency grid `f_min, f_min + step, ...` up to `f_max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub step: f64,
}

impl FrequencyGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "frequency grid needs 0 < f_min < f_max, got {}..{}",
                self.f_min, self.f_max
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid step must be > 0, got {}",
                self.step
            )));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = ((self.f_max - self.f_min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.f_min + i as f64 * self.step).collect()
    }
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Response over a frequency grid: voltage amplitude for an open circuit, mean
/// power for a resistive load.
pub fn frequency_sweep(
    params: &LumpedParams,
    accel_amplitude: f64,
    grid: &FrequencyGrid,
    load: &LoadSpec,
) -> Result<SweepCurve> {
    params.validate()?;
    grid.validate()?;
    load.validate()?;
    DriveSpec::new(accel_amplitude, grid.f_min)?;
    let value_kind = match load {
        LoadSpec::OpenCircuit => ValueKind::VoltAmplitude,
        LoadSpec::Resistive(_) => ValueKind::AvgPower,
    };
    let points = grid
        .frequencies()
        .into_par_iter()
        .map(|f| {
            let drive = DriveSpec {
                accel_amplitude,
                frequency: f,
            };
            let r = solve_phasor(params, &drive, load);
            let value = match value_kind {
                ValueKind::VoltAmplitude => r.volt_amplitude,
                _ => r.avg_power,
            };
            (f, value)
        })
        .collect();
    SweepCurve::new(AbscissaKind::FrequencyHz, value_kind, points)
}

/// Located maximum of a response curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub frequency: f64,
    pub value: f64,
    /// The sampled maximum sits on the first or last point.
    pub at_boundary: bool,
}

/// Frequency of the curve maximum, refined by a parabola through the peak sample
/// and its two neighbours. Ties go to the lower frequency.
pub fn find_resonance(curve: &SweepCurve) -> Result<Resonance> {
    curve.validate()?;
    if curve.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 points to locate a resonance, got {}",
            curve.len()
        )));
    }
    if curve.value_kind == ValueKind::ResonantFreq {
        return Err(Error::InvalidArgument(
            "resonance search needs a voltage or power curve".into(),
        ));
    }
    let pts = &curve.points;
    let mut best = 0;
    for (i, p) in pts.iter().enumerate() {
        if p.1 > pts[best].1 {
            best = i;
        }
    }
    if best == 0 || best == pts.len() - 1 {
        return Ok(Resonance {
            frequency: pts[best].0,
            value: pts[best].1,
            at_boundary: true,
        });
    }
    let (x0, y0) = pts[best - 1];
    let (x1, y1) = pts[best];
    let (x2, y2) = pts[best + 1];
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    let (frequency, value) = if den == 0.0 {
        (x1, y1)
    } else {
        let xv = (x1 - 0.5 * num / den).clamp(x0, x2);
        // Parabola through the three samples, evaluated at its vertex.
        let yv = y0 * (xv - x1) * (xv - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (xv - x0) * (xv - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (xv - x0) * (xv - x1) / ((x2 - x0) * (x2 - x1));
        (xv, yv)
    };
    Ok(Resonance {
        frequency,
        value,
        at_boundary: false,
    })
}

/// Mean power per load resistance at a fixed drive.
pub fn load_sweep(
    params: &LumpedParams,
    drive: &DriveSpec,
    resistances: &[f64],
) -> Result<SweepCurve> {
    params.validate()?;
    drive.validate()?;
    if resistances.is_empty() {
        return Err(Error::InvalidArgument("no resistances given".into()));
    }
    if let Some(r) = resistances.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "resistance must be > 0, got {r}"
        )));
    }
    if resistances.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "resistances must be strictly increasing".into(),
        ));
    }
    let points = resistances
        .par_iter()
        .map(|&r| {
            (
                r,
                solve_phasor(params, drive, &LoadSpec::Resistive(r)).avg_power,
            )
        })
        .collect();
    SweepCurve::new(AbscissaKind::ResistanceOhm, ValueKind::AvgPower, points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassStudyRow {
    pub tip_mass: f64,
    pub resonant_freq: f64,
    /// Open-circuit voltage amplitude when driven at `resonant_freq`.
    pub peak_voltage: f64,
}

/// Natural frequency and open-circuit voltage at that frequency for each tip
/// mass. Rows are returned in ascending mass order.
pub fn tip_mass_study(
    params: &LumpedParams,
    masses: &[f64],
    accel_amplitude: f64,
) -> Result<Vec<MassStudyRow>> {
    params.validate()?;
    if masses.is_empty() {
        return Err(Error::InvalidArgument("no tip masses given".into()));
    }
    if let Some(m) = masses.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "tip mass must be >= 0, got {m}"
        )));
    }
    let mut sorted = masses.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("tip masses must be distinct".into()));
    }
    sorted
        .into_par_iter()
        .map(|m| {
            let p = params.with_tip_mass(m);
            let f = natural_frequency(&p);
            let drive = DriveSpec::new(accel_amplitude, f)?;
            let v = solve_phasor(&p, &drive, &LoadSpec::OpenCircuit).volt_amplitude;
            Ok(MassStudyRow {
                tip_mass: m,
                resonant_freq: f,
                peak_voltage: v,
            })
        })
        .collect()
}

/// Tip mass → resonant frequency curve of a study.
pub fn mass_study_curve(rows: &[MassStudyRow]) -> Result<SweepCurve> {
    SweepCurve::new(
        AbscissaKind::TipMassKg,
        ValueKind::ResonantFreq,
        rows.iter().map(|r| (r.tip_mass, r.resonant_freq)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s128() -> LumpedParams {
        LumpedParams::new(1.1316e-3, 841.5, 0.02, 1e-4, 100e-9, 1.0e-3).unwrap()
    }

    fn curve(points: Vec<(f64, f64)>) -> SweepCurve {
        SweepCurve::new(AbscissaKind::FrequencyHz, ValueKind::VoltAmplitude, points).unwrap()
    }

    #[test]
    fn grid_point_count() {
        let g = FrequencyGrid {
            f_min: 16.0,
            f_max: 500.0,
            step: 2.0,
        };
        let f = g.frequencies();
        assert_eq!(f.len(), 243);
        assert_eq!(*f.last().unwrap(), 500.0);
    }

    #[test]
    fn invalid_grid() {
        let g = FrequencyGrid {
            f_min: 100.0,
            f_max: 50.0,
            step: 2.0,
        };
        assert!(frequency_sweep(&s128(), 9.81, &g, &LoadSpec::OpenCircuit).is_err());
        let g = FrequencyGrid {
            f_min: 10.0,
            f_max: 50.0,
            step: 0.0,
        };
        assert!(frequency_sweep(&s128(), 9.81, &g, &LoadSpec::OpenCircuit).is_err());
    }

    #[test]
    fn s128_sweep_peaks_at_100hz() {
        let g = FrequencyGrid {
            f_min: 16.0,
            f_max: 500.0,
            step: 2.0,
        };
        let c = frequency_sweep(&s128(), 9.81, &g, &LoadSpec::OpenCircuit).unwrap();
        let r = find_resonance(&c).unwrap();
        assert!((r.frequency - 100.0).abs() <= 2.0, "{r:?}");
        assert!(!r.at_boundary);

        let doubled = frequency_sweep(&s128(), 2.0 * 9.81, &g, &LoadSpec::OpenCircuit).unwrap();
        for (a, b) in c.values().zip(doubled.values()) {
            assert!((b - 2.0 * a).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn resonance_errors_and_boundaries() {
        assert!(find_resonance(&curve(vec![(1.0, 1.0), (2.0, 2.0)])).is_err());
        let rising = curve((1..10).map(|i| (i as f64, i as f64)).collect());
        let r = find_resonance(&rising).unwrap();
        assert!(r.at_boundary);
        assert_eq!(r.frequency, 9.0);
        let freq_curve = SweepCurve::new(
            AbscissaKind::TipMassKg,
            ValueKind::ResonantFreq,
            vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.0)],
        )
        .unwrap();
        assert!(find_resonance(&freq_curve).is_err());
    }

    #[test]
    fn resonance_ties_go_low() {
        let flat = curve(vec![
            (1.0, 0.0),
            (2.0, 1.0),
            (3.0, 0.0),
            (4.0, 1.0),
            (5.0, 0.0),
        ]);
        let r = find_resonance(&flat).unwrap();
        assert!((r.frequency - 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_parabola_vertex_is_exact() {
        let c = curve(
            (0..11)
                .map(|i| {
                    let x = 170.0 + 2.0 * i as f64;
                    (x, 10.0 - (x - 176.7).powi(2))
                })
                .collect(),
        );
        let r = find_resonance(&c).unwrap();
        assert!((r.frequency - 176.7).abs() < 1e-9);
        assert!((r.value - 10.0).abs() < 1e-9);
    }

    #[test]
    fn load_sweep_validation() {
        let d = DriveSpec::new(9.81, 100.0).unwrap();
        assert!(load_sweep(&s128(), &d, &[1e3, 1e3]).is_err());
        assert!(load_sweep(&s128(), &d, &[-1.0, 1e3]).is_err());
        assert!(load_sweep(&s128(), &d, &[2e3, 1e3]).is_err());
        let one = load_sweep(&s128(), &d, &[1e4]).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn mass_study_trends() {
        let rows = tip_mass_study(&s128(), &[1.5e-3, 0.0, 0.6e-3, 1.0e-3], 9.81).unwrap();
        assert_eq!(rows[0].tip_mass, 0.0);
        assert!(rows
            .windows(2)
            .all(|w| w[1].resonant_freq < w[0].resonant_freq));
        assert!(rows
            .windows(2)
            .all(|w| w[1].peak_voltage > w[0].peak_voltage));
        assert!(tip_mass_study(&s128(), &[1e-3, 1e-3], 9.81).is_err());
        assert!(tip_mass_study(&s128(), &[-1e-3], 9.81).is_err());
    }

    #[test]
    fn log_spacing_endpoints() {
        let v = log_spaced(1e2, 1e6, 5);
        assert_eq!(v.len(), 5);
        assert!((v[2] - 1e4).abs() < 1e-6);
        assert!((v[4] - 1e6).abs() < 1e-6);
    }
}
