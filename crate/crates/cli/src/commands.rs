use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use piezo_supply::fit::{
    fit_params, FitOptions, FitProblem, FitTarget, FreeParam, ParamBound, TargetKind,
};
use piezo_supply::harvester::{
    natural_frequency, optimal_load, solve_phasor, LoadSpec, LumpedParams,
};
use piezo_supply::io::{
    emit_measured_csv, emit_trace_csv, format_sig, load_config, parse_sweep_csv, render_svg,
    LoadChoice, MeasuredSweep, SystemConfig,
};
use piezo_supply::sweep::{
    find_resonance, frequency_sweep, load_sweep, log_spaced, mass_study_curve, tip_mass_study,
    AbscissaKind, SweepCurve, ValueKind,
};
use piezo_supply::transient::{energy_audit, run_transient, steady_state_metrics, Chain};

use crate::{Common, Failure, FitArgs, Format};

const GENERATED_BY: &str = concat!("piezo-supply ", env!("CARGO_PKG_VERSION"));

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn config(common: &Common) -> Result<SystemConfig, Failure> {
    match &common.config {
        None => Ok(SystemConfig::default()),
        Some(path) => {
            load_config(&read(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
        }
    }
}

fn format_of(common: &Common) -> Format {
    common.format.unwrap_or_else(|| match &common.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg")) => Format::Svg,
        _ => Format::Csv,
    })
}

fn write_out(common: &Common, text: &str) -> CmdResult {
    match &common.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Prints a summary line when the data itself went to a file.
fn note(common: &Common, line: &str) {
    if common.out.is_some() {
        println!("{line}");
    }
}

fn emit(
    common: &Common,
    cfg: &SystemConfig,
    curve: SweepCurve,
    extra: &[(&str, String)],
) -> CmdResult {
    let text = match format_of(common) {
        Format::Svg => render_svg(&curve)?,
        Format::Csv => {
            let mut metadata = vec![
                ("generated_by".to_string(), GENERATED_BY.to_string()),
                ("device".to_string(), cfg.device_label()),
            ];
            metadata.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
            emit_measured_csv(&MeasuredSweep { curve, metadata })?
        }
    };
    write_out(common, &text)
}

fn grams(kg: f64) -> String {
    format_sig(kg * 1e3, 9)
}

pub fn sweep_freq(common: &Common) -> CmdResult {
    let cfg = config(common)?;
    let (load, extra) = match cfg.load {
        LoadChoice::Open => (LoadSpec::OpenCircuit, vec![]),
        LoadChoice::Resistive(r) => (
            LoadSpec::Resistive(r),
            vec![("resistance_ohm", format_sig(r, 9))],
        ),
        LoadChoice::PowerStage(_) => {
            return Err(Failure::Data(
                "sweep-freq needs load.kind = open or resistive".into(),
            ))
        }
    };
    let mut extra = extra;
    extra.push(("tip_mass_g", grams(cfg.params.tip_mass)));
    extra.push(("accel_m_s2", format_sig(cfg.drive.accel_amplitude, 9)));
    let curve = frequency_sweep(&cfg.params, cfg.drive.accel_amplitude, &cfg.sweep, &load)?;
    if curve.len() >= 3 {
        let res = find_resonance(&curve)?;
        let edge = if res.at_boundary {
            " (at grid edge)"
        } else {
            ""
        };
        note(common, &format!("peak at {:.2} Hz{edge}", res.frequency));
    }
    emit(common, &cfg, curve, &extra)
}

pub fn sweep_load(common: &Common) -> CmdResult {
    let cfg = config(common)?;
    let g = cfg.load_grid;
    let rs = log_spaced(g.r_min, g.r_max, g.points);
    let curve = load_sweep(&cfg.params, &cfg.drive, &rs)?;
    let r_star = optimal_load(&cfg.params, cfg.drive.frequency);
    note(
        common,
        &format!(
            "optimal load {} ohm at {} Hz",
            format_sig(r_star, 6),
            format_sig(cfg.drive.frequency, 6)
        ),
    );
    let extra = [
        ("tip_mass_g", grams(cfg.params.tip_mass)),
        ("frequency_hz", format_sig(cfg.drive.frequency, 9)),
        ("accel_m_s2", format_sig(cfg.drive.accel_amplitude, 9)),
    ];
    emit(common, &cfg, curve, &extra)
}

pub fn mass_study(common: &Common) -> CmdResult {
    let cfg = config(common)?;
    let rows = tip_mass_study(&cfg.params, &cfg.tip_masses, cfg.drive.accel_amplitude)?;
    if common.out.is_some() {
        println!("tip_mass_g  frequency_hz  peak_voltage_v");
        for r in &rows {
            println!(
                "{:>10}  {:>12}  {:>14}",
                grams(r.tip_mass),
                format_sig(r.resonant_freq, 6),
                format_sig(r.peak_voltage, 6)
            );
        }
    }
    let extra = [("accel_m_s2", format_sig(cfg.drive.accel_amplitude, 9))];
    emit(common, &cfg, mass_study_curve(&rows)?, &extra)
}

pub fn transient(common: &Common) -> CmdResult {
    if common.format == Some(Format::Svg) {
        return Err(Failure::Usage("transient writes CSV only".into()));
    }
    let cfg = config(common)?;
    let chain = match cfg.load {
        LoadChoice::Resistive(r) => Chain::Resistive(r),
        LoadChoice::PowerStage(r) => Chain::PowerStage {
            spec: cfg.power_stage().expect("validated with the load"),
            load_resistance: r,
        },
        LoadChoice::Open => {
            return Err(Failure::Data(
                "transient needs load.kind = resistive or power_stage".into(),
            ))
        }
    };
    let trace = run_transient(&cfg.params, &chain, &cfg.drive, &cfg.sim)?;
    let audit = energy_audit(&trace)?;
    let mut summary = format!(
        "{} samples, energy residual {} of input work",
        trace.len(),
        format_sig(
            audit.residual / audit.input_work.abs().max(f64::MIN_POSITIVE),
            3
        )
    );
    if let Ok(ss) = steady_state_metrics(&trace, 20, cfg.drive.frequency) {
        let _ = write!(
            summary,
            "; last 20 cycles: {} V rms, {} W",
            format_sig(ss.v_rms, 6),
            format_sig(ss.p_avg, 6)
        );
    }
    note(common, &summary);
    let mut text = format!(
        "# generated_by: {GENERATED_BY}\n# device: {}\n",
        cfg.device_label()
    );
    text.push_str(&emit_trace_csv(&trace));
    write_out(common, &text)
}

fn targets_from(sweep: &MeasuredSweep, name: &str) -> Result<Vec<FitTarget>, Failure> {
    let meta_num = |key: &str| -> Result<f64, Failure> {
        let raw = sweep
            .meta(key)
            .ok_or_else(|| Failure::Data(format!("{name}: missing '# {key}:' metadata line")))?;
        raw.trim()
            .parse::<f64>()
            .map_err(|_| Failure::Data(format!("{name}: metadata {key} '{raw}' is not a number")))
    };
    let tip = || -> Result<f64, Failure> {
        sweep
            .tip_mass()?
            .ok_or_else(|| Failure::Data(format!("{name}: missing '# tip_mass_g:' metadata line")))
    };
    let curve = &sweep.curve;
    let target = |kind, observed| FitTarget {
        kind,
        observed,
        weight: 1.0,
    };
    Ok(match (curve.abscissa_kind, curve.value_kind) {
        (AbscissaKind::TipMassKg, ValueKind::ResonantFreq) => curve
            .points
            .iter()
            .map(|&(m, f)| target(TargetKind::ResonantFreqAtMass { tip_mass: m }, f))
            .collect(),
        (AbscissaKind::FrequencyHz, ValueKind::VoltAmplitude) => {
            let peak = if curve.len() >= 3 {
                find_resonance(curve)?.value
            } else {
                curve.values().fold(f64::NEG_INFINITY, f64::max)
            };
            vec![target(
                TargetKind::PeakVoltageAtMass { tip_mass: tip()? },
                peak,
            )]
        }
        (AbscissaKind::ResistanceOhm, ValueKind::AvgPower) => {
            let (tip_mass, frequency) = (tip()?, meta_num("frequency_hz")?);
            curve
                .points
                .iter()
                .map(|&(r, p)| {
                    target(
                        TargetKind::PowerAtLoad {
                            tip_mass,
                            frequency,
                            resistance: r,
                        },
                        p,
                    )
                })
                .collect()
        }
        (AbscissaKind::FrequencyHz, ValueKind::AvgPower) => {
            let (tip_mass, resistance) = (tip()?, meta_num("resistance_ohm")?);
            curve
                .points
                .iter()
                .map(|&(f, p)| {
                    target(
                        TargetKind::PowerAtLoad {
                            tip_mass,
                            frequency: f,
                            resistance,
                        },
                        p,
                    )
                })
                .collect()
        }
        other => {
            return Err(Failure::Data(format!(
                "{name}: cannot fit against {other:?}"
            )))
        }
    })
}

/// Search box around the starting value.
fn bound(param: FreeParam, init: f64) -> ParamBound {
    let (lower, upper) = match param {
        FreeParam::Zeta => (init / 10.0, (init * 10.0).min(0.99)),
        FreeParam::Theta if init == 0.0 => (0.0, 1e-2),
        FreeParam::AccelAmplitude if init == 0.0 => (0.0, 100.0),
        _ => (init / 10.0, init * 10.0),
    };
    ParamBound {
        param,
        lower,
        upper,
    }
}

fn model_lines(p: &LumpedParams, accel: f64, free: &[FreeParam]) -> String {
    let mark = |f: FreeParam| if free.contains(&f) { "  # fitted" } else { "" };
    let rows = [
        (
            "model.m_eff_g",
            format_sig(p.m_eff * 1e3, 6),
            FreeParam::MEff,
        ),
        (
            "model.k_eff_n_per_m",
            format_sig(p.k_eff, 6),
            FreeParam::KEff,
        ),
        ("model.zeta", format_sig(p.zeta, 6), FreeParam::Zeta),
        (
            "model.theta_n_per_v",
            format_sig(p.theta, 6),
            FreeParam::Theta,
        ),
        ("model.c_p_nf", format_sig(p.c_p * 1e9, 6), FreeParam::CP),
        (
            "drive.accel_m_s2",
            format_sig(accel, 6),
            FreeParam::AccelAmplitude,
        ),
    ];
    let mut out = String::new();
    for (key, value, param) in rows {
        let _ = writeln!(out, "{key} = {value}{}", mark(param));
    }
    out
}

pub fn fit(args: &FitArgs) -> CmdResult {
    if args.common.format.is_some() {
        return Err(Failure::Usage(
            "fit writes a configuration fragment; --format does not apply".into(),
        ));
    }
    let mut free = Vec::new();
    for name in &args.free {
        let p: FreeParam = name
            .parse()
            .map_err(|e: piezo_supply::Error| Failure::Usage(e.to_string()))?;
        if free.contains(&p) {
            return Err(Failure::Usage(format!("{p} listed twice in --free")));
        }
        free.push(p);
    }
    let cfg = config(&args.common)?;
    let mut targets = Vec::new();
    for path in &args.data {
        let name = path.display().to_string();
        let parsed =
            parse_sweep_csv(&read(path)?).map_err(|e| Failure::Data(format!("{name}: {e}")))?;
        for w in &parsed.warnings {
            eprintln!("warning: {name}: {w}");
        }
        targets.extend(targets_from(&parsed.sweep, &name)?);
    }
    let init = cfg.params.with_tip_mass(0.0);
    let accel = cfg.drive.accel_amplitude;
    let bounds = free
        .iter()
        .map(|&p| {
            let v = match p {
                FreeParam::MEff => init.m_eff,
                FreeParam::KEff => init.k_eff,
                FreeParam::Zeta => init.zeta,
                FreeParam::Theta => init.theta,
                FreeParam::CP => init.c_p,
                FreeParam::AccelAmplitude => accel,
            };
            bound(p, v)
        })
        .collect();
    let problem = FitProblem {
        targets,
        free: bounds,
    };
    let options = FitOptions {
        max_evaluations: args.max_evaluations,
        ..FitOptions::default()
    };
    let result = fit_params(&problem, &init, accel, &options)?;

    let mut text = format!(
        "# {} targets, residual {} (initial {}), {} iterations, {} evaluations\n",
        problem.targets.len(),
        format_sig(result.residual, 3),
        format_sig(result.initial_residual, 3),
        result.iterations,
        result.evaluations
    );
    text.push_str(&model_lines(&result.params, result.accel_amplitude, &free));
    print!("{text}");
    if args.common.out.is_some() {
        write_out(&args.common, &text)?;
    }
    if !result.converged {
        return Err(Failure::Numeric(format!(
            "fit did not converge within {} evaluations",
            result.evaluations
        )));
    }
    Ok(())
}

pub fn report(common: &Common) -> CmdResult {
    if common.format == Some(Format::Svg) {
        return Err(Failure::Usage("report writes text only".into()));
    }
    let cfg = config(common)?;
    let p = &cfg.params;
    let d = cfg.drive;
    let mut s = String::new();
    let _ = writeln!(s, "device: {}", cfg.device_label());
    let _ = writeln!(
        s,
        "model: m_eff {} g, k_eff {} N/m, zeta {}, theta {} N/V, C_p {} nF, tip {} g",
        format_sig(p.m_eff * 1e3, 5),
        format_sig(p.k_eff, 5),
        format_sig(p.zeta, 4),
        format_sig(p.theta, 4),
        format_sig(p.c_p * 1e9, 4),
        grams(p.tip_mass)
    );
    let _ = writeln!(
        s,
        "natural frequency: {} Hz",
        format_sig(natural_frequency(p), 6)
    );
    let _ = writeln!(
        s,
        "drive: {} m/s^2 at {} Hz",
        format_sig(d.accel_amplitude, 4),
        format_sig(d.frequency, 6)
    );
    let oc = solve_phasor(p, &d, &LoadSpec::OpenCircuit);
    let _ = writeln!(
        s,
        "open-circuit voltage: {} V amplitude",
        format_sig(oc.volt_amplitude, 5)
    );
    let r_star = optimal_load(p, d.frequency);
    let matched = solve_phasor(p, &d, &LoadSpec::Resistive(r_star));
    let _ = writeln!(
        s,
        "optimal load: {} ohm, {} W",
        format_sig(r_star, 5),
        format_sig(matched.avg_power, 5)
    );
    if let LoadChoice::Resistive(r) = cfg.load {
        let at = solve_phasor(p, &d, &LoadSpec::Resistive(r));
        let _ = writeln!(
            s,
            "configured load: {} ohm, {} W",
            format_sig(r, 5),
            format_sig(at.avg_power, 5)
        );
    }
    if let Some(ps) = cfg.power_stage() {
        let _ = writeln!(
            s,
            "power stage: {} V setpoint, UVLO {}/{} V, efficiency {}",
            format_sig(ps.buck.output_setpoint, 3),
            format_sig(ps.uvlo.rising_threshold, 4),
            format_sig(ps.uvlo.falling_threshold, 4),
            format_sig(ps.buck.efficiency, 3)
        );
    }
    let rows = tip_mass_study(p, &cfg.tip_masses, d.accel_amplitude)?;
    let _ = writeln!(s, "tip mass study:");
    for r in rows {
        let _ = writeln!(
            s,
            "  {} g: {} Hz, {} V",
            grams(r.tip_mass),
            format_sig(r.resonant_freq, 5),
            format_sig(r.peak_voltage, 5)
        );
    }
    write_out(common, &s)
}
