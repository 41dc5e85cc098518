//! Configuration files, sweep CSV and SVG output.

pub mod config;
pub mod csv;
pub mod svg;

pub use config::{load_config, LoadChoice, LoadGrid, SystemConfig};
pub use csv::{
    emit_csv, emit_measured_csv, emit_trace_csv, format_sig, parse_sweep_csv, MeasuredSweep,
    ParsedSweep,
};
pub use svg::render_svg;

use crate::error::Result;
use crate::sweep::SweepCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
}

/// Serializes a curve in the requested format.
pub fn emit_curve(curve: &SweepCurve, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => emit_csv(curve),
        OutputFormat::Svg => render_svg(curve),
    }
}
