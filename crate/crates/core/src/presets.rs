//! Named, versioned systems used by the CLI and the acceptance tests.

use crate::error::{Error, Result};
use crate::linstab::CoefficientMap;
use crate::num::{cdiag_real, cmat_from_real, CMat, Real};
use crate::timescale::{Component, EpochRule, Tail, TimeScale};

pub const PRESET_NAMES: [&str; 6] =
    ["example46", "integers", "reals", "perron-switched", "strongly-stable-demo", "strongly-unstable-demo"];

/// Bumped whenever a preset's data changes.
pub const PRESET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PresetParams {
    /// Continuous fraction `p/q` of the glued scale.
    pub p: u32,
    pub q: u32,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self { p: 1, q: 3 }
    }
}

#[derive(Clone, Debug)]
pub struct Preset<R: Real> {
    pub name: &'static str,
    pub version: u32,
    pub scale: TimeScale<R>,
    pub coefficient: CoefficientMap<R>,
    /// The matrix when the coefficient is constant.
    pub constant: Option<CMat<R>>,
}

pub fn preset<R: Real>(name: &str, params: PresetParams) -> Result<Preset<R>> {
    let r = |x: f64| R::from_f64(x).expect("representable literal");
    let (name, scale, coefficient) = match name {
        "example46" => (
            "example46",
            TimeScale::example46(params.p, params.q, EpochRule::Power(2))?,
            CoefficientMap::diagonal(&[r(-2.0), r(-0.5)]),
        ),
        "integers" => ("integers", TimeScale::integers(), CoefficientMap::diagonal(&[r(-0.5)])),
        "reals" => ("reals", TimeScale::reals(), CoefficientMap::diagonal(&[r(-1.0)])),
        "perron-switched" => (
            "perron-switched",
            TimeScale::reals(),
            CoefficientMap::alternating(EpochRule::Power(2), cdiag_real(&[r(-1.0), r(1.0)]), cdiag_real(&[r(1.0), r(-1.0)]))?,
        ),
        "strongly-stable-demo" => (
            "strongly-stable-demo",
            half_gapped(r(0.5))?,
            CoefficientMap::constant(cmat_from_real(2, 2, &[r(-1.0), r(0.5), r(0.0), r(-1.5)])),
        ),
        "strongly-unstable-demo" => (
            "strongly-unstable-demo",
            half_gapped(r(0.5))?,
            CoefficientMap::constant(cmat_from_real(2, 2, &[r(1.0), r(0.3), r(0.0), r(-1.0)])),
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let constant = coefficient.as_constant().cloned();
    Ok(Preset { name, version: PRESET_VERSION, scale, coefficient, constant })
}

/// Unit-period scale `[k, k + len] ∪ …` with gaps `1 − len`.
fn half_gapped<R: Real>(len: R) -> Result<TimeScale<R>> {
    TimeScale::new(vec![], Tail::Periodic { period: R::one(), pattern: vec![Component::Interval { start: R::zero(), end: len }] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linstab::{is_strongly_stable, is_strongly_unstable};

    #[test]
    fn every_name_resolves() {
        for n in PRESET_NAMES {
            let p = preset::<f64>(n, PresetParams::default()).unwrap();
            assert_eq!(p.name, n);
            assert!(p.scale.contains(0.0));
        }
        assert!(matches!(preset::<f64>("nope", PresetParams::default()), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn demos_have_their_verdicts() {
        let s = preset::<f64>("strongly-stable-demo", PresetParams::default()).unwrap();
        let prof = s.scale.grain_profile(10.0);
        assert!(is_strongly_stable(s.constant.as_ref().unwrap(), &prof).unwrap().holds);
        let u = preset::<f64>("strongly-unstable-demo", PresetParams::default()).unwrap();
        assert!(is_strongly_unstable(u.constant.as_ref().unwrap(), &prof).unwrap().holds);
    }
}
