//! Two-column sweep CSV files.
//!
//! Supported headers:
//!
//! | header                    | abscissa       | value              |
//! |---------------------------|----------------|--------------------|
//! | `frequency_hz,voltage_v`  | frequency      | voltage amplitude  |
//! | `frequency_hz,power_w`    | frequency      | mean power         |
//! | `resistance_ohm,power_w`  | load resistance| mean power         |
//! | `tip_mass_g,frequency_hz` | tip mass (g)   | resonant frequency |
//!
//! Lines before the header that start with `#` carry `key: value` metadata.
//! Numbers are written with 9 significant digits, extended when a value needs
//! more to read back exactly.

use crate::error::{Error, Result};
use crate::harvester::milli;
use crate::sweep::{AbscissaKind, SweepCurve, ValueKind};
use crate::transient::Trace;

const SCHEMAS: [(&str, AbscissaKind, ValueKind); 4] = [
    (
        "frequency_hz,voltage_v",
        AbscissaKind::FrequencyHz,
        ValueKind::VoltAmplitude,
    ),
    (
        "frequency_hz,power_w",
        AbscissaKind::FrequencyHz,
        ValueKind::AvgPower,
    ),
    (
        "resistance_ohm,power_w",
        AbscissaKind::ResistanceOhm,
        ValueKind::AvgPower,
    ),
    (
        "tip_mass_g,frequency_hz",
        AbscissaKind::TipMassKg,
        ValueKind::ResonantFreq,
    ),
];

/// A measured (or generated) curve with free-text provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSweep {
    pub curve: SweepCurve,
    pub metadata: Vec<(String, String)>,
}

impl MeasuredSweep {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Tip mass in kg from the `tip_mass_g` metadata entry.
    pub fn tip_mass(&self) -> Result<Option<f64>> {
        match self.meta("tip_mass_g") {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|g| *g >= 0.0 && g.is_finite())
                .map(|g| Some(milli(g)))
                .ok_or_else(|| Error::Format(format!("metadata tip_mass_g: '{v}' is not a mass"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSweep {
    pub sweep: MeasuredSweep,
    pub warnings: Vec<String>,
}

fn schema_for(curve: &SweepCurve) -> Result<&'static str> {
    SCHEMAS
        .iter()
        .find(|(_, a, v)| *a == curve.abscissa_kind && *v == curve.value_kind)
        .map(|s| s.0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no CSV schema for {:?} against {:?}",
                curve.value_kind, curve.abscissa_kind
            ))
        })
}

/// Decimal shift from SI to file units.
fn file_shift(kind: AbscissaKind) -> i32 {
    match kind {
        AbscissaKind::TipMassKg => 3,
        _ => 0,
    }
}

/// Parses a file cell into SI, shifting the decimal point in the text so the
/// result is the double nearest to the written decimal value.
fn parse_si(kind: AbscissaKind, cell: &str) -> Option<f64> {
    let shift = file_shift(kind);
    let text = if shift == 0 {
        cell.to_string()
    } else {
        match cell.split_once(['e', 'E']) {
            Some((mantissa, exp)) => format!("{mantissa}e{}", exp.parse::<i32>().ok()? - shift),
            None => format!("{cell}e{}", -shift),
        }
    };
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Decimal digits and exponent of `|v|` rounded to `digits` significant digits.
fn sig_parts(v: f64, digits: usize) -> (String, i32) {
    let sci = format!("{:.*e}", digits.saturating_sub(1), v.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let mut d: String = mantissa.chars().filter(|c| *c != '.').collect();
    while d.len() > 1 && d.ends_with('0') {
        d.pop();
    }
    (d, exp.parse().expect("integer exponent"))
}

fn render(negative: bool, digits: &str, exp: i32) -> String {
    let sign = if negative { "-" } else { "" };
    let n = digits.len() as i32;
    let body = if (-5..15).contains(&exp) {
        if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else if exp + 1 >= n {
            format!("{}{}", digits, "0".repeat((exp + 1 - n) as usize))
        } else {
            let (int, frac) = digits.split_at((exp + 1) as usize);
            format!("{int}.{frac}")
        }
    } else {
        let (lead, rest) = digits.split_at(1);
        if rest.is_empty() {
            format!("{lead}e{exp}")
        } else {
            format!("{lead}.{rest}e{exp}")
        }
    };
    format!("{sign}{body}")
}

/// Formats `v` with `digits` significant digits, trailing zeros removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0".into()
        } else {
            format!("{v}")
        };
    }
    let (d, exp) = sig_parts(v, digits);
    render(v < 0.0, &d, exp)
}

/// 9 significant digits, or more when needed to read back the identical value.
/// `shift` moves the decimal point (3 writes kilograms as grams).
fn format_cell(v: f64, shift: i32) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mut parts = sig_parts(v, 17);
    for digits in 9..17 {
        let (d, exp) = sig_parts(v, digits);
        if render(v < 0.0, &d, exp).parse::<f64>() == Ok(v) {
            parts = (d, exp);
            break;
        }
    }
    render(v < 0.0, &parts.0, parts.1 + shift)
}

/// Header line plus one row per point.
pub fn emit_csv(curve: &SweepCurve) -> Result<String> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("cannot emit an empty curve".into()));
    }
    curve.validate()?;
    let header = schema_for(curve)?;
    let mut out = String::with_capacity(24 * (curve.len() + 1));
    out.push_str(header);
    out.push('\n');
    for &(x, y) in &curve.points {
        out.push_str(&format_cell(x, file_shift(curve.abscissa_kind)));
        out.push(',');
        out.push_str(&format_cell(y, 0));
        out.push('\n');
    }
    Ok(out)
}

/// Metadata comment lines followed by the curve.
pub fn emit_measured_csv(sweep: &MeasuredSweep) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &sweep.metadata {
        if k.contains(':') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidArgument(format!(
                "metadata entry '{k}' cannot be written"
            )));
        }
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(&emit_csv(&sweep.curve)?);
    Ok(out)
}

/// Reads a sweep CSV. Rows out of abscissa order are sorted with a warning.
pub fn parse_sweep_csv(text: &str) -> Result<ParsedSweep> {
    let mut metadata = Vec::new();
    let mut schema = None;
    let mut points = Vec::new();
    let mut rows = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if schema.is_none() {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once(':') {
                    metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let normalized: String = line.split(',').map(str::trim).collect::<Vec<_>>().join(",");
            let found = SCHEMAS.iter().find(|s| s.0 == normalized);
            match found {
                Some(s) => {
                    schema = Some(*s);
                    continue;
                }
                None => {
                    let expected: Vec<&str> = SCHEMAS.iter().map(|s| s.0).collect();
                    return Err(Error::Format(format!(
                        "row {line_no}: missing or unknown header '{line}', expected one of: {}",
                        expected.join(" | ")
                    )));
                }
            }
        }
        let (_, akind, _) = schema.expect("header seen");
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(Error::Format(format!(
                "row {line_no}: expected 2 cells, found {}",
                cells.len()
            )));
        }
        let not_number =
            |cell: &str| Error::Format(format!("row {line_no}: '{cell}' is not a number"));
        let x = parse_si(akind, cells[0]).ok_or_else(|| not_number(cells[0]))?;
        let y =
            parse_si(AbscissaKind::FrequencyHz, cells[1]).ok_or_else(|| not_number(cells[1]))?;
        points.push((x, y));
        rows.push(line_no);
    }

    let (_, akind, vkind) = schema.ok_or_else(|| Error::Format("missing header row".into()))?;
    if points.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let mut warnings = Vec::new();
    let mut order: Vec<usize> = (0..points.len()).collect();
    if points.windows(2).any(|w| w[1].0 < w[0].0) {
        order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));
        warnings.push("rows were not in increasing order and have been sorted".to_string());
    }
    for w in order.windows(2) {
        if points[w[0]].0 == points[w[1]].0 {
            return Err(Error::Format(format!(
                "rows {} and {}: duplicate abscissa {}",
                rows[w[0]].min(rows[w[1]]),
                rows[w[0]].max(rows[w[1]]),
                format_cell(points[w[0]].0, file_shift(akind))
            )));
        }
    }
    let sorted = order.into_iter().map(|i| points[i]).collect();
    let curve = SweepCurve::new(akind, vkind, sorted).map_err(|e| Error::Format(e.to_string()))?;
    Ok(ParsedSweep {
        sweep: MeasuredSweep { curve, metadata },
        warnings,
    })
}

/// Full trace as CSV, one row per recorded sample.
pub fn emit_trace_csv(trace: &Trace) -> String {
    let mut out = String::from(
        "t_s,x_m,xdot_m_s,v_piezo_v,v_input_cap_v,v_output_v,mode,p_input_w,p_mech_loss_w,p_diode_w,p_converter_w,p_delivered_w,stored_j\n",
    );
    for i in 0..trace.len() {
        let s = trace.sample(i);
        let mode = s.mode.map_or("-", |m| m.as_str());
        let cells = [
            format_sig(s.t, 9),
            format_sig(s.x, 9),
            format_sig(s.xdot, 9),
            format_sig(s.v_piezo, 9),
            format_sig(s.v_input_cap, 9),
            format_sig(s.v_output, 9),
            mode.to_string(),
            format_sig(s.p_input, 9),
            format_sig(s.p_mech_loss, 9),
            format_sig(s.p_diode, 9),
            format_sig(s.p_converter, 9),
            format_sig(s.p_delivered, 9),
            format_sig(s.stored, 9),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(26.9, 9), "26.9");
        assert_eq!(format_sig(100.0, 9), "100");
        assert_eq!(format_sig(0.0002, 9), "0.0002");
        assert_eq!(format_sig(-1.5e-3, 9), "-0.0015");
        assert_eq!(format_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_sig(1e-9, 9), "1e-9");
        assert_eq!(format_sig(1.25e20, 9), "1.25e20");
        assert_eq!(format_sig(123456789012.0, 9), "123456789000");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn parses_voltage_sweep() {
        let p = parse_sweep_csv("frequency_hz,voltage_v\n100,26.9\n110,20.0").unwrap();
        let c = &p.sweep.curve;
        assert_eq!(c.points, vec![(100.0, 26.9), (110.0, 20.0)]);
        assert_eq!(c.value_kind, ValueKind::VoltAmplitude);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn parses_single_point_load_curve() {
        let p = parse_sweep_csv("resistance_ohm,power_w\n10000,0.0002").unwrap();
        assert_eq!(p.sweep.curve.abscissa_kind, AbscissaKind::ResistanceOhm);
        assert_eq!(p.sweep.curve.points, vec![(10000.0, 0.0002)]);
    }

    #[test]
    fn format_errors() {
        assert!(matches!(
            parse_sweep_csv("freq,volt\n1,2\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_sweep_csv("100,26.9\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(parse_sweep_csv(""), Err(Error::Format(_))));
        let err = parse_sweep_csv("frequency_hz,voltage_v\n100,26.9\n110,abc\n").unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
        let err = parse_sweep_csv("frequency_hz,voltage_v\n100,26.9\n100,20\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn unsorted_rows_are_sorted_with_warning() {
        let p = parse_sweep_csv("tip_mass_g,frequency_hz\n1.5,90\n1.0,100\n").unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.sweep.curve.points, vec![(1.0e-3, 100.0), (1.5e-3, 90.0)]);
    }

    #[test]
    fn metadata_lines() {
        let text = "# device: S233-H5FR-1107XB\n# tip_mass_g: 1.5\nfrequency_hz,voltage_v\n90,12\n";
        let p = parse_sweep_csv(text).unwrap();
        assert_eq!(p.sweep.meta("device"), Some("S233-H5FR-1107XB"));
        assert_eq!(p.sweep.tip_mass().unwrap(), Some(1.5e-3));
        assert_eq!(emit_measured_csv(&p.sweep).unwrap(), text);
    }

    #[test]
    fn three_points_four_lines() {
        let c = SweepCurve::new(
            AbscissaKind::FrequencyHz,
            ValueKind::VoltAmplitude,
            vec![(1.0, 2.0), (2.0, 3.0), (3.0, 4.0)],
        )
        .unwrap();
        let text = emit_csv(&c).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn empty_curve_rejected() {
        let c = SweepCurve {
            abscissa_kind: AbscissaKind::FrequencyHz,
            value_kind: ValueKind::VoltAmplitude,
            points: vec![],
        };
        assert!(emit_csv(&c).is_err());
    }

    fn nine_digit() -> impl Strategy<Value = f64> {
        (100_000_000i64..999_999_999, -12i32..12)
            .prop_map(|(m, e)| format!("{m}e{}", e - 8).parse::<f64>().unwrap())
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_identity(
            kind in 0usize..4,
            mut xs in prop::collection::vec(1e-9..1e9f64, 1..40),
            ys in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 40),
        ) {
            let (_, akind, vkind) = SCHEMAS[kind];
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let points: Vec<(f64, f64)> = xs.iter().zip(&ys).map(|(&x, &y)| (x, y)).collect();
            let curve = SweepCurve::new(akind, vkind, points).unwrap();
            let back = parse_sweep_csv(&emit_csv(&curve).unwrap()).unwrap();
            prop_assert!(back.warnings.is_empty());
            prop_assert_eq!(back.sweep.curve, curve);
        }

        #[test]
        fn nine_digit_values_survive_formatting(v in nine_digit()) {
            prop_assert_eq!(format_sig(v, 9).parse::<f64>().unwrap(), v);
            prop_assert_eq!(format_cell(v, 0), format_sig(v, 9));
        }

        #[test]
        fn gram_cells_read_back_exactly(x in 1e-9..1.0f64) {
            let cell = format_cell(x, 3);
            prop_assert_eq!(parse_si(AbscissaKind::TipMassKg, &cell), Some(x));
        }
    }
}
