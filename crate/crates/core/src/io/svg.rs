//! Minimal deterministic SVG line plots.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::sweep::{AbscissaKind, SweepCurve, ValueKind};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 70.0;
const TICKS: usize = 5;

fn axis_label(kind: AbscissaKind) -> (&'static str, f64) {
    match kind {
        AbscissaKind::FrequencyHz => ("Frequency (Hz)", 1.0),
        AbscissaKind::ResistanceOhm => ("Load resistance (ohm)", 1.0),
        AbscissaKind::TipMassKg => ("Tip mass (g)", 1000.0),
    }
}

fn value_label(kind: ValueKind) -> &'static str {
    match kind {
        ValueKind::VoltAmplitude => "Voltage amplitude (V)",
        ValueKind::AvgPower => "Average power (W)",
        ValueKind::ResonantFreq => "Resonant frequency (Hz)",
    }
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    super::csv::format_sig(v, 4)
}

/// Renders `curve` as a single polyline with labelled axes.
pub fn render_svg(curve: &SweepCurve) -> Result<String> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("cannot plot an empty curve".into()));
    }
    curve.validate()?;
    let (x_label, x_scale) = axis_label(curve.abscissa_kind);
    let xs: Vec<f64> = curve.abscissae().map(|x| x * x_scale).collect();
    let ys: Vec<f64> = curve.values().collect();
    let (x0, x1) = span(xs[0], xs[xs.len() - 1]);
    let (y0, y1) = span(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + plot_h,
            TOP + plot_h + 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 22.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{LEFT:.2}" y2="{ty:.2}" stroke="black"/>"#,
            LEFT - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            LEFT - 10.0,
            ty + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        value_label(curve.value_kind)
    );
    let points: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> SweepCurve {
        SweepCurve::new(
            AbscissaKind::FrequencyHz,
            ValueKind::VoltAmplitude,
            vec![(90.0, 1.0), (100.0, 3.0), (110.0, 2.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_polyline_with_axes() {
        let svg = render_svg(&curve()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("viewBox=\"0 0 800 600\""));
        assert!(svg.contains("Frequency (Hz)"));
        assert!(svg.contains("Voltage amplitude (V)"));
        assert_eq!(svg, render_svg(&curve()).unwrap());
    }

    #[test]
    fn single_point_and_flat_curves_are_finite() {
        let c = SweepCurve::new(
            AbscissaKind::ResistanceOhm,
            ValueKind::AvgPower,
            vec![(1e4, 2e-4)],
        )
        .unwrap();
        let svg = render_svg(&c).unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
