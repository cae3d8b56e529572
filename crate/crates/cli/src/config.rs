//! JSON job configuration.
//!
//! ```json
//! {
//!   "system": {
//!     "class": "TQ",
//!     "domain": [0, 5],
//!     "coeffs": { "h": {"kind": "constant", "c": 0.1}, "h2": {"kind": "constant", "c": 0.5} }
//!   },
//!   "target": "restricted",
//!   "grid_n": 2001
//! }
//! ```
//!
//! Omitted coefficients are zero, except the TM mass `f`, which is
//! required. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use qxform::systems::{AnySystem, TMSystem, TOSystem, TQSystem, Window};
use qxform::timefn::{TimeFunction, TimeMap};
use qxform::transforms::{GaugeTarget, GaugeTriple};
use qxform::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    TQ,
    TM,
    TO,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub class: Class,
    pub domain: [f64; 2],
    #[serde(default)]
    pub coeffs: BTreeMap<String, TimeFunction>,
}

impl SystemSpec {
    pub fn to_system(&self) -> Result<AnySystem> {
        let window = Window::new(self.domain[0], self.domain[1])?;
        let names: &[&str] = match self.class {
            Class::TQ => &TQSystem::coefficient_names(),
            Class::TM => &TMSystem::coefficient_names(),
            Class::TO => &TOSystem::coefficient_names(),
        };
        if let Some(bad) = self.coeffs.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "unknown {:?} coefficient {bad:?}; expected one of {names:?}",
                self.class
            )));
        }
        let get = |n: &str| self.coeffs.get(n).cloned().unwrap_or_else(TimeFunction::zero);
        Ok(match self.class {
            Class::TQ => AnySystem::Tq(TQSystem::new(window, get("k"), get("h"), get("g"), get("h2"), get("h1"), get("h0"))?),
            Class::TM => {
                let f = self
                    .coeffs
                    .get("f")
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument("TM system needs the mass coefficient f".into()))?;
                AnySystem::Tm(TMSystem::new(window, f, get("f2"), get("f1"), get("f0"))?)
            }
            Class::TO => AnySystem::To(TOSystem::new(window, get("g2"), get("g1"), get("g0"))?),
        })
    }

    pub fn from_system(s: &AnySystem) -> Self {
        let (class, window, names, coeffs): (Class, Window, Vec<&str>, Vec<&TimeFunction>) = match s {
            AnySystem::Tq(s) => (Class::TQ, s.window, TQSystem::coefficient_names().to_vec(), s.coefficients().to_vec()),
            AnySystem::Tm(s) => (Class::TM, s.window, TMSystem::coefficient_names().to_vec(), s.coefficients().to_vec()),
            AnySystem::To(s) => (Class::TO, s.window, TOSystem::coefficient_names().to_vec(), s.coefficients().to_vec()),
        };
        Self {
            class,
            domain: [window.lo, window.hi],
            coeffs: names
                .into_iter()
                .zip(coeffs)
                .map(|(n, f)| (n.to_string(), f.clone()))
                .collect(),
        }
    }
}

/// What a TQ system is carried into.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `f = e^{−2ν}`
    Restricted,
    /// `f ≡ 1`
    To,
    /// A prescribed mass.
    Tm(TimeFunction),
}

impl TargetSpec {
    pub fn to_target(&self) -> GaugeTarget {
        match self {
            TargetSpec::Restricted => GaugeTarget::TmRestricted,
            TargetSpec::To => GaugeTarget::To,
            TargetSpec::Tm(f) => GaugeTarget::Tm(f.clone()),
        }
    }
}

/// A closed-form gauge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    #[serde(default = "TimeFunction::zero")]
    pub kappa: TimeFunction,
    #[serde(default = "TimeFunction::zero")]
    pub mu: TimeFunction,
    #[serde(default = "TimeFunction::zero")]
    pub nu: TimeFunction,
}

impl GaugeSpec {
    pub fn to_gauge(&self, window: Window) -> Result<GaugeTriple> {
        GaugeTriple::from_closed_form(window, self.kappa.clone(), self.mu.clone(), self.nu.clone())
    }
}

/// A time map `t → t'`; the inverse is computed when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub forward: TimeFunction,
    #[serde(default)]
    pub inverse: Option<TimeFunction>,
    pub t0: f64,
    pub t0_prime: f64,
}

impl MapSpec {
    pub fn to_map(&self) -> Result<TimeMap> {
        match &self.inverse {
            Some(inv) => TimeMap::new(self.forward.clone(), inv.clone(), self.t0, self.t0_prime),
            None => TimeMap::from_forward(self.forward.clone(), self.t0, self.t0_prime),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            x0: 0.0,
            p0: 0.0,
            sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSpec {
    /// The box is `[−half_width, half_width)`.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    /// Propagation ends here; defaults to the end of the system domain.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub initial: GaussianSpec,
    /// Keep every n-th state.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_half_width() -> f64 {
    12.0
}

fn default_record_every() -> usize {
    1
}

impl Default for PropagationSpec {
    fn default() -> Self {
        Self {
            half_width: default_half_width(),
            t_end: None,
            initial: GaussianSpec::default(),
            record_every: default_record_every(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub gauge: Option<GaugeSpec>,
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub t0_prime: Option<f64>,
    #[serde(default)]
    pub propagation: Option<PropagationSpec>,
    #[serde(default)]
    pub grid_n: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub a_values: Option<Vec<f64>>,
}

impl JobConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn system(&self) -> Result<AnySystem> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("config has no system".into()))?
            .to_system()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tq_spec(h: f64, k: f64) -> SystemSpec {
        let mut coeffs = BTreeMap::new();
        coeffs.insert("h".to_string(), TimeFunction::constant(h));
        coeffs.insert("k".to_string(), TimeFunction::poly(vec![k, 0.1]));
        SystemSpec {
            class: Class::TQ,
            domain: [0.0, 2.0],
            coeffs,
        }
    }

    #[test]
    fn missing_coefficients_are_zero() {
        let s = tq_spec(0.3, 0.0).to_system().unwrap();
        let AnySystem::Tq(tq) = s else { panic!() };
        assert!(tq.g.is_zero() && tq.h0.is_zero());
    }

    #[test]
    fn unknown_coefficient_and_missing_mass_rejected() {
        let mut s = tq_spec(0.3, 0.0);
        s.coeffs.insert("f".into(), TimeFunction::constant(1.0));
        assert!(matches!(s.to_system(), Err(Error::InvalidArgument(_))));
        let tm = SystemSpec {
            class: Class::TM,
            domain: [0.0, 1.0],
            coeffs: BTreeMap::new(),
        };
        assert!(matches!(tm.to_system(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(JobConfig::parse(r#"{"grid": 3}"#).is_err());
        assert!(JobConfig::parse(r#"{"system": {"class": "TO", "domain": [0, 1], "extra": 1}}"#).is_err());
        assert!(JobConfig::parse(r#"{"target": "sideways"}"#).is_err());
        assert!(JobConfig::parse(r#"{"propagation": {"initial": {"x0": 1, "y0": 2}}}"#).is_err());
    }

    #[test]
    fn target_forms() {
        let c = JobConfig::parse(r#"{"target": {"tm": {"kind": "constant", "c": 2}}}"#).unwrap();
        assert_eq!(c.target, Some(TargetSpec::Tm(TimeFunction::constant(2.0))));
        let c = JobConfig::parse(r#"{"target": "to"}"#).unwrap();
        assert_eq!(c.target, Some(TargetSpec::To));
    }

    #[test]
    fn system_spec_roundtrips_through_system() {
        let spec = tq_spec(0.2, 0.1);
        let back = SystemSpec::from_system(&spec.to_system().unwrap());
        assert_eq!(back.to_system().unwrap(), spec.to_system().unwrap());
    }

    proptest! {
        #[test]
        fn config_json_roundtrip(
            h in -2.0..2.0f64,
            k in -0.5..0.5f64,
            grid_n in proptest::option::of(5usize..10_000),
            dt in proptest::option::of(1e-5..1.0f64),
            seed in proptest::option::of(any::<u64>()),
            half_width in 1.0..50.0f64,
            x0 in -3.0..3.0f64,
            target in 0usize..3,
        ) {
            let cfg = JobConfig {
                system: Some(tq_spec(h, k)),
                target: Some(match target {
                    0 => TargetSpec::Restricted,
                    1 => TargetSpec::To,
                    _ => TargetSpec::Tm(TimeFunction::exp(1.0, k, 0.0)),
                }),
                gauge: Some(GaugeSpec {
                    kappa: TimeFunction::zero(),
                    mu: TimeFunction::constant(h),
                    nu: TimeFunction::poly(vec![0.0, k]),
                }),
                map: None,
                t0_prime: Some(h),
                propagation: Some(PropagationSpec {
                    half_width,
                    t_end: None,
                    initial: GaussianSpec { x0, p0: h, sigma: 1.0 },
                    record_every: 3,
                }),
                grid_n,
                dt,
                tol: None,
                seed,
                a_values: Some(vec![h, k]),
            };
            let text = serde_json::to_string(&cfg).unwrap();
            let back = JobConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }
}
