//! Built-in device presets for the two commercial cantilevers.

use crate::harvester::{
    bimorph_adjust, milli, BeamKind, BeamSpec, BimorphWiring, LumpedParams, DEFAULT_CP,
    DEFAULT_THETA, DEFAULT_ZETA,
};

pub const S128: &str = "S128-H5FR-1107YB";
pub const S233: &str = "S233-H5FR-1107XB";

/// Stiffness matching a 100 Hz resonance with a 1.0 g tip and 90 Hz with 1.5 g.
pub const S128_K_EFF: f64 = 841.5;

pub fn names() -> [&'static str; 2] {
    [S128, S233]
}

fn mm(v: f64) -> f64 {
    milli(v)
}

fn grams(v: f64) -> f64 {
    milli(v)
}

/// Beam geometry of a named device.
///
/// The bimorph reuses the unimorph's footprint and mass; only its layer count differs.
pub fn beam(name: &str) -> Option<BeamSpec> {
    let kind = match name {
        S128 => BeamKind::Unimorph,
        S233 => BeamKind::Bimorph,
        _ => return None,
    };
    Some(BeamSpec {
        kind,
        total_length: mm(53.0),
        width: mm(20.8),
        thickness: mm(0.71),
        piezo_length: mm(27.8),
        piezo_width: mm(18.0),
        piezo_thickness: mm(0.19),
        beam_mass: grams(2.0),
    })
}

/// Default lumped parameters of a named device, without tip mass.
pub fn lumped(name: &str, wiring: BimorphWiring) -> Option<LumpedParams> {
    let b = beam(name)?;
    let single = LumpedParams {
        m_eff: b.effective_mass(),
        k_eff: S128_K_EFF,
        zeta: DEFAULT_ZETA,
        theta: DEFAULT_THETA,
        c_p: DEFAULT_CP,
        tip_mass: 0.0,
    };
    Some(match b.kind {
        BeamKind::Unimorph => single,
        BeamKind::Bimorph => bimorph_adjust(&single, wiring),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harvester::natural_frequency;

    #[test]
    fn s128_preset_hits_reported_resonances() {
        let p = lumped(S128, BimorphWiring::Series).unwrap();
        assert!((p.m_eff - 1.1316e-3).abs() < 1e-7);
        assert!((natural_frequency(&p.with_tip_mass(1.0e-3)) - 100.0).abs() < 0.1);
        assert!((natural_frequency(&p.with_tip_mass(1.5e-3)) - 90.0).abs() < 0.1);
    }

    #[test]
    fn bimorph_preset_is_series_adjusted() {
        let p = lumped(S233, BimorphWiring::Series).unwrap();
        assert_eq!(p.c_p, DEFAULT_CP / 2.0);
        assert_eq!(beam(S233).unwrap().kind, BeamKind::Bimorph);
        assert!(beam("S999").is_none());
    }
}
