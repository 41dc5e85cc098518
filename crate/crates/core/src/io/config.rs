//! Flat `section.key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. Lengths are given in mm,
//! masses in g and capacitances in the unit named by the key suffix; everything
//! is converted to SI here. See the README for the full key list.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::harvester::{
    milli, natural_frequency, BeamKind, BeamSpec, BimorphWiring, DriveSpec, LumpedParams,
    DEFAULT_ACCEL, DEFAULT_CP, DEFAULT_THETA, DEFAULT_ZETA,
};
use crate::power_stage::{
    BuckSpec, PowerStageSpec, RectifierSpec, StorageSpec, UvloSpec, OUTPUT_SETPOINTS,
};
use crate::presets;
use crate::sweep::FrequencyGrid;
use crate::transient::SimConfig;

const KEYS: &[&str] = &[
    "beam.preset",
    "beam.kind",
    "beam.wiring",
    "beam.total_length_mm",
    "beam.width_mm",
    "beam.thickness_mm",
    "beam.piezo_length_mm",
    "beam.piezo_width_mm",
    "beam.piezo_thickness_mm",
    "beam.mass_g",
    "model.m_eff_g",
    "model.k_eff_n_per_m",
    "model.zeta",
    "model.theta_n_per_v",
    "model.c_p_nf",
    "model.tip_mass_g",
    "drive.accel_m_s2",
    "drive.frequency_hz",
    "load.kind",
    "load.resistance_ohm",
    "rectifier.diode_drop_v",
    "uvlo.rising_v",
    "uvlo.falling_v",
    "buck.output_setpoint_v",
    "buck.max_output_current_ma",
    "buck.input_min_v",
    "buck.input_max_v",
    "buck.efficiency",
    "storage.input_cap_uf",
    "storage.output_cap_uf",
    "storage.supercap_f",
    "sim.dt_s",
    "sim.duration_s",
    "sim.record_stride",
    "sweep.f_min_hz",
    "sweep.f_max_hz",
    "sweep.step_hz",
    "sweep.r_min_ohm",
    "sweep.r_max_ohm",
    "sweep.r_points",
    "study.tip_masses_g",
];

/// What the harvester output drives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadChoice {
    Open,
    Resistive(f64),
    /// Full conditioning chain feeding a resistor on its regulated output.
    PowerStage(f64),
}

/// Resistance grid for load sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub preset: Option<String>,
    pub beam: Option<BeamSpec>,
    pub wiring: BimorphWiring,
    pub params: LumpedParams,
    pub drive: DriveSpec,
    pub load: LoadChoice,
    pub rectifier: RectifierSpec,
    pub uvlo: UvloSpec,
    pub buck: BuckSpec,
    /// Required when the load is the power stage.
    pub storage: Option<StorageSpec>,
    pub sim: SimConfig,
    pub sweep: FrequencyGrid,
    pub load_grid: LoadGrid,
    pub tip_masses: Vec<f64>,
}

impl SystemConfig {
    /// Assembled power-stage spec, if storage is configured.
    pub fn power_stage(&self) -> Option<PowerStageSpec> {
        self.storage.map(|storage| PowerStageSpec {
            rectifier: self.rectifier,
            uvlo: self.uvlo,
            buck: self.buck,
            storage,
        })
    }

    /// Label of the configured device, for provenance metadata.
    pub fn device_label(&self) -> String {
        self.preset.clone().unwrap_or_else(|| "custom".into())
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        load_config("beam.preset = S128-H5FR-1107YB\n").expect("built-in preset parses")
    }
}

struct Entries {
    map: BTreeMap<&'static str, (String, usize)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.map.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.1)
    }

    /// Last line among `keys`, for errors about a group of settings.
    fn last_line(&self, keys: &[&str]) -> usize {
        keys.iter().map(|k| self.line(k)).max().unwrap_or(0)
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(parse_err(line, format!("{key}: '{v}' is not a number"))),
            },
        }
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        match self.num(key)? {
            Some(x) if x <= 0.0 => Err(parse_err(
                self.line(key),
                format!("{key} must be > 0, got {x}"),
            )),
            other => Ok(other),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(parse_err(
                    line,
                    format!("{key}: '{v}' is not a positive integer"),
                )),
            },
        }
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|(_, t)| Some(*t))
                .ok_or_else(|| {
                    let legal: Vec<&str> = options.iter().map(|o| o.0).collect();
                    parse_err(
                        line,
                        format!(
                            "{key}: invalid choice '{v}', expected one of {}",
                            legal.join(", ")
                        ),
                    )
                }),
        }
    }
}

/// Located error; line 0 means the problem is a missing key.
fn parse_err(line: usize, message: String) -> Error {
    if line == 0 {
        Error::Config(message)
    } else {
        Error::Parse { line, message }
    }
}

fn at(line: usize, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::InvalidParameter(m) | Error::InvalidArgument(m) | Error::Config(m) => {
            parse_err(line, m)
        }
        other => other,
    })
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| parse_err(line, format!("unknown key '{key}'")))?;
        if value.is_empty() {
            return Err(parse_err(line, format!("{key}: missing value")));
        }
        if map.insert(*known, (value.to_string(), line)).is_some() {
            return Err(parse_err(line, format!("duplicate key '{key}'")));
        }
    }
    Ok(Entries { map })
}

/// Parses a configuration text into a fully validated [`SystemConfig`].
pub fn load_config(text: &str) -> Result<SystemConfig> {
    let e = tokenize(text)?;

    let preset = match e.raw("beam.preset") {
        None => None,
        Some((name, line)) => {
            if presets::beam(name).is_none() {
                return Err(parse_err(
                    line,
                    format!(
                        "beam.preset: unknown device '{name}', expected one of {}",
                        presets::names().join(", ")
                    ),
                ));
            }
            Some(name.to_string())
        }
    };
    let wiring = e
        .choice(
            "beam.wiring",
            &[
                ("series", BimorphWiring::Series),
                ("parallel", BimorphWiring::Parallel),
            ],
        )?
        .unwrap_or(BimorphWiring::Series);

    // Beam geometry: preset values overridden by explicit keys.
    let beam_keys = [
        "beam.kind",
        "beam.total_length_mm",
        "beam.width_mm",
        "beam.thickness_mm",
        "beam.piezo_length_mm",
        "beam.piezo_width_mm",
        "beam.piezo_thickness_mm",
        "beam.mass_g",
    ];
    let base_beam = preset.as_deref().and_then(presets::beam);
    let any_beam_key = beam_keys.iter().any(|k| e.raw(k).is_some());
    let beam = if base_beam.is_some() || any_beam_key {
        let b0 = base_beam;
        let dim = |key: &str, from_preset: Option<f64>| -> Result<f64> {
            match e.num(key)? {
                Some(v) => Ok(milli(v)),
                None => from_preset.ok_or_else(|| {
                    parse_err(
                        e.last_line(&beam_keys),
                        format!("{key} is required without a preset"),
                    )
                }),
            }
        };
        let kind = e
            .choice(
                "beam.kind",
                &[
                    ("unimorph", BeamKind::Unimorph),
                    ("bimorph", BeamKind::Bimorph),
                ],
            )?
            .or(b0.map(|b| b.kind))
            .unwrap_or(BeamKind::Unimorph);
        let b = BeamSpec {
            kind,
            total_length: dim("beam.total_length_mm", b0.map(|b| b.total_length))?,
            width: dim("beam.width_mm", b0.map(|b| b.width))?,
            thickness: dim("beam.thickness_mm", b0.map(|b| b.thickness))?,
            piezo_length: dim("beam.piezo_length_mm", b0.map(|b| b.piezo_length))?,
            piezo_width: dim("beam.piezo_width_mm", b0.map(|b| b.piezo_width))?,
            piezo_thickness: dim("beam.piezo_thickness_mm", b0.map(|b| b.piezo_thickness))?,
            beam_mass: dim("beam.mass_g", b0.map(|b| b.beam_mass))?,
        };
        at(e.last_line(&beam_keys), b.validate())?;
        Some(b)
    } else {
        None
    };

    // Lumped parameters: preset defaults, then beam-derived mass, then overrides.
    let model_keys = [
        "model.m_eff_g",
        "model.k_eff_n_per_m",
        "model.zeta",
        "model.theta_n_per_v",
        "model.c_p_nf",
        "model.tip_mass_g",
    ];
    let base = preset.as_deref().and_then(|p| presets::lumped(p, wiring));
    let m_eff = match e.num("model.m_eff_g")? {
        Some(g) => milli(g),
        None => match (base, beam) {
            (Some(p), _) if !any_beam_key => p.m_eff,
            (_, Some(b)) => b.effective_mass(),
            _ => {
                return Err(parse_err(
                    0,
                    "model.m_eff_g (or beam.mass_g or beam.preset) is required".into(),
                ))
            }
        },
    };
    let k_eff = match (e.num("model.k_eff_n_per_m")?, base) {
        (Some(k), _) => k,
        (None, Some(p)) => p.k_eff,
        (None, None) => {
            return Err(parse_err(
                0,
                "model.k_eff_n_per_m is required without a preset".into(),
            ))
        }
    };
    let params = LumpedParams {
        m_eff,
        k_eff,
        zeta: e.num_or("model.zeta", base.map_or(DEFAULT_ZETA, |p| p.zeta))?,
        theta: e.num_or(
            "model.theta_n_per_v",
            base.map_or(DEFAULT_THETA, |p| p.theta),
        )?,
        c_p: e
            .num("model.c_p_nf")?
            .map_or(base.map_or(DEFAULT_CP, |p| p.c_p), |nf| nf * 1e-9),
        tip_mass: milli(e.num_or("model.tip_mass_g", 0.0)?),
    };
    at(e.last_line(&model_keys), params.validate())?;

    let drive = DriveSpec {
        accel_amplitude: e.num_or("drive.accel_m_s2", DEFAULT_ACCEL)?,
        frequency: e.num_or("drive.frequency_hz", natural_frequency(&params))?,
    };
    at(
        e.last_line(&["drive.accel_m_s2", "drive.frequency_hz"]),
        drive.validate(),
    )?;

    let kind = e
        .choice(
            "load.kind",
            &[("open", 0u8), ("resistive", 1u8), ("power_stage", 2u8)],
        )?
        .unwrap_or(if e.raw("load.resistance_ohm").is_some() {
            1
        } else {
            0
        });
    let resistance = e.positive("load.resistance_ohm")?;
    let need_r = |r: Option<f64>| {
        r.ok_or_else(|| {
            parse_err(
                e.line("load.kind"),
                "load.resistance_ohm is required for this load".into(),
            )
        })
    };
    let load = match kind {
        0 => LoadChoice::Open,
        1 => LoadChoice::Resistive(need_r(resistance)?),
        _ => LoadChoice::PowerStage(need_r(resistance)?),
    };

    let rectifier = RectifierSpec {
        diode_drop: e.num_or(
            "rectifier.diode_drop_v",
            RectifierSpec::default().diode_drop,
        )?,
    };
    at(e.line("rectifier.diode_drop_v"), rectifier.validate())?;
    let uvlo = UvloSpec {
        rising_threshold: e.num_or("uvlo.rising_v", UvloSpec::default().rising_threshold)?,
        falling_threshold: e.num_or("uvlo.falling_v", UvloSpec::default().falling_threshold)?,
    };
    at(
        e.last_line(&["uvlo.rising_v", "uvlo.falling_v"]),
        uvlo.validate(),
    )?;

    let setpoint = e.num_or("buck.output_setpoint_v", 3.6)?;
    if !OUTPUT_SETPOINTS.contains(&setpoint) {
        return Err(parse_err(
            e.line("buck.output_setpoint_v"),
            format!("buck.output_setpoint_v: invalid choice {setpoint}, expected one of 1.8, 2.5, 3.3, 3.6"),
        ));
    }
    let mut buck = BuckSpec::with_setpoint(setpoint)?;
    buck.max_output_current = e
        .num("buck.max_output_current_ma")?
        .map_or(buck.max_output_current, milli);
    buck.input_min = e.num_or("buck.input_min_v", buck.input_min)?;
    buck.input_max = e.num_or("buck.input_max_v", buck.input_max)?;
    buck.efficiency = e.num_or("buck.efficiency", buck.efficiency)?;
    at(
        e.last_line(&[
            "buck.output_setpoint_v",
            "buck.max_output_current_ma",
            "buck.input_min_v",
            "buck.input_max_v",
            "buck.efficiency",
        ]),
        buck.validate(),
    )?;

    let storage_keys = [
        "storage.input_cap_uf",
        "storage.output_cap_uf",
        "storage.supercap_f",
    ];
    let storage = match (
        e.num("storage.input_cap_uf")?,
        e.num("storage.output_cap_uf")?,
    ) {
        (Some(cin), Some(cout)) => {
            let s = StorageSpec {
                input_cap: cin * 1e-6,
                output_cap: cout * 1e-6,
                supercap: e.num_or("storage.supercap_f", 0.0)?,
            };
            at(e.last_line(&storage_keys), s.validate())?;
            Some(s)
        }
        (None, None) if e.raw("storage.supercap_f").is_none() => None,
        _ => {
            return Err(parse_err(
                e.last_line(&storage_keys),
                "storage.input_cap_uf and storage.output_cap_uf must be given together".into(),
            ))
        }
    };
    if matches!(load, LoadChoice::PowerStage(_)) && storage.is_none() {
        return Err(parse_err(
            e.line("load.kind"),
            "load.kind = power_stage requires storage.input_cap_uf and storage.output_cap_uf"
                .into(),
        ));
    }

    let default_sim = SimConfig::for_drive(&drive);
    let sim = SimConfig {
        dt: e.num_or("sim.dt_s", default_sim.dt)?,
        duration: e.num_or("sim.duration_s", default_sim.duration)?,
        record_stride: e.count("sim.record_stride", 1)?,
    };
    at(
        e.last_line(&["sim.dt_s", "sim.duration_s", "sim.record_stride"]),
        sim.validate(&drive),
    )?;

    let sweep = FrequencyGrid {
        f_min: e.num_or("sweep.f_min_hz", 16.0)?,
        f_max: e.num_or("sweep.f_max_hz", 500.0)?,
        step: e.num_or("sweep.step_hz", 2.0)?,
    };
    at(
        e.last_line(&["sweep.f_min_hz", "sweep.f_max_hz", "sweep.step_hz"]),
        sweep.validate(),
    )?;

    let load_grid = LoadGrid {
        r_min: e.num_or("sweep.r_min_ohm", 100.0)?,
        r_max: e.num_or("sweep.r_max_ohm", 1e7)?,
        points: e.count("sweep.r_points", 200)?,
    };
    if !(load_grid.r_min > 0.0 && load_grid.r_min < load_grid.r_max) {
        return Err(parse_err(
            e.last_line(&["sweep.r_min_ohm", "sweep.r_max_ohm"]),
            "load grid needs 0 < sweep.r_min_ohm < sweep.r_max_ohm".into(),
        ));
    }

    let tip_masses = match e.raw("study.tip_masses_g") {
        None => vec![0.0, 0.6e-3, 1.0e-3, 1.5e-3],
        Some((v, line)) => {
            let mut out = Vec::new();
            for item in v.split(',') {
                let g: f64 = item.trim().parse().map_err(|_| {
                    parse_err(
                        line,
                        format!("study.tip_masses_g: '{}' is not a number", item.trim()),
                    )
                })?;
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(parse_err(
                        line,
                        format!("study.tip_masses_g: {g} must be >= 0"),
                    ));
                }
                out.push(milli(g));
            }
            out
        }
    };

    Ok(SystemConfig {
        preset,
        beam,
        wiring,
        params,
        drive,
        load,
        rectifier,
        uvlo,
        buck,
        storage,
        sim,
        sweep,
        load_grid,
        tip_masses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s128_preset_dimensions() {
        let c = load_config("beam.preset = S128-H5FR-1107YB").unwrap();
        let b = c.beam.unwrap();
        assert_eq!(b.kind, BeamKind::Unimorph);
        assert_eq!(
            (b.total_length, b.width, b.thickness),
            (53.0e-3, 20.8e-3, 0.71e-3)
        );
        assert_eq!(
            (b.piezo_length, b.piezo_width, b.piezo_thickness),
            (27.8e-3, 18.0e-3, 0.19e-3)
        );
        assert_eq!(b.beam_mass, 2.0e-3);
        assert_eq!(c.load, LoadChoice::Open);
        assert_eq!(c.buck.output_setpoint, 3.6);
    }

    #[test]
    fn negative_thickness_rejected() {
        let err =
            load_config("beam.preset = S128-H5FR-1107YB\nbeam.thickness_mm = -1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn setpoint_choices() {
        let ok =
            load_config("beam.preset = S128-H5FR-1107YB\nbuck.output_setpoint_v = 3.6\n").unwrap();
        assert_eq!(ok.buck.output_setpoint, 3.6);
        let err = load_config("beam.preset = S128-H5FR-1107YB\nbuck.output_setpoint_v = 3.0\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("line 2"), "{msg}");
        for v in ["1.8", "2.5", "3.3", "3.6"] {
            assert!(msg.contains(v), "{msg}");
        }
    }

    #[test]
    fn unknown_and_malformed_lines() {
        let err = load_config("# header\nbeam.colour = red\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = load_config("beam.preset = S128-H5FR-1107YB\nmodel.zeta = lots\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = load_config("beam.preset S128\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = load_config("model.zeta = 0.1\nmodel.zeta = 0.2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn units_converted() {
        let text = "\
model.m_eff_g = 1.5      # grams
model.k_eff_n_per_m = 1000
model.c_p_nf = 47
model.tip_mass_g = 0.6
storage.input_cap_uf = 10
storage.output_cap_uf = 100
buck.max_output_current_ma = 50
";
        let c = load_config(text).unwrap();
        assert!((c.params.m_eff - 1.5e-3).abs() < 1e-15);
        assert!((c.params.c_p - 47e-9).abs() < 1e-20);
        assert!((c.params.tip_mass - 0.6e-3).abs() < 1e-15);
        assert!((c.storage.unwrap().input_cap - 10e-6).abs() < 1e-18);
        assert!((c.buck.max_output_current - 0.05).abs() < 1e-15);
        assert!(c.beam.is_none());
        assert!((c.drive.frequency - natural_frequency(&c.params)).abs() < 1e-12);
    }

    #[test]
    fn power_stage_needs_storage() {
        let err = load_config("beam.preset = S128-H5FR-1107YB\nload.kind = power_stage\nload.resistance_ohm = 22000\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_stiffness_without_preset() {
        assert!(load_config("model.m_eff_g = 1.0\n").is_err());
    }

    #[test]
    fn bimorph_preset_wiring() {
        let series = load_config("beam.preset = S233-H5FR-1107XB\n").unwrap();
        let parallel =
            load_config("beam.preset = S233-H5FR-1107XB\nbeam.wiring = parallel\n").unwrap();
        assert_eq!(series.params.c_p, 50e-9);
        assert_eq!(parallel.params.c_p, 200e-9);
        assert_eq!(parallel.params.theta, 2e-4);
    }

    #[test]
    fn sim_dt_limit_reported_with_line() {
        let err = load_config(
            "beam.preset = S128-H5FR-1107YB\ndrive.frequency_hz = 100\nsim.dt_s = 1e-3\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }
}
