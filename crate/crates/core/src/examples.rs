//! Closed-form example systems.
//!
//! * Example 1, exponential mass: `f = e^{Υ(t−t₀)}`, `f₂ = ½ω² e^{−Υ(t−t₀)}`.
//! * Example 2, power-law mass: `f = (t₀/t)ᵃ`, `f₂ = ½ω² (t/t₀)ᵇ`.
//!
//! Each constructor returns the TQ partner, the TM system, the gauge that
//! connects them, the time map and the TO image, all in closed form.

use serde::{Deserialize, Serialize};

use crate::systems::{TMSystem, TOSystem, TQSystem, Window};
use crate::timefn::{uniform_grid, Domain, TimeFunction, TimeMap};
use crate::transforms::{
    solve_gauge, time_map_from_f, tm_to_to, tq_to_tm, GaugeTarget, GaugeTriple,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub upsilon: f64,
    pub omega: f64,
    pub t0: f64,
    #[serde(default)]
    pub t0_prime: f64,
    /// Length of the working window `[t0, t0 + span]`.
    #[serde(default = "default_span")]
    pub span: f64,
}

fn default_span() -> f64 {
    5.0
}

impl Example1Params {
    pub fn new(upsilon: f64, omega: f64, t0: f64) -> Self {
        Self {
            upsilon,
            omega,
            t0,
            t0_prime: 0.0,
            span: default_span(),
        }
    }

    fn validate(&self) -> Result<()> {
        check_omega(self.omega)?;
        if !(self.upsilon.is_finite() && self.t0.is_finite() && self.t0_prime.is_finite()) {
            return Err(Error::InvalidArgument("example 1 parameters must be finite".into()));
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err(Error::InvalidArgument(format!("span must be positive, got {}", self.span)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example2Params {
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    pub t0: f64,
    #[serde(default)]
    pub t0_prime: f64,
    /// End of the working window; `10 t0` when absent.
    #[serde(default)]
    pub t_end: Option<f64>,
}

impl Example2Params {
    pub fn new(a: f64, b: f64, omega: f64, t0: f64) -> Self {
        Self {
            a,
            b,
            omega,
            t0,
            t0_prime: 0.0,
            t_end: None,
        }
    }

    pub fn window(&self) -> Result<Window> {
        Window::new(self.t0, self.t_end.unwrap_or(10.0 * self.t0))
    }

    fn validate(&self) -> Result<()> {
        check_omega(self.omega)?;
        if self.a == 0.0 {
            return Err(Error::Unsupported("example 2 is not defined for a = 0".into()));
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.t0_prime.is_finite()) {
            return Err(Error::InvalidArgument("example 2 parameters must be finite".into()));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidArgument(format!("t0 must be positive, got {}", self.t0)));
        }
        self.window().map(|_| ())
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    Ok(())
}

/// All pieces of one example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleSystems {
    pub tq: TQSystem,
    pub tm: TMSystem,
    pub to: TOSystem,
    pub gauge: GaugeTriple,
    pub map: TimeMap,
}

/// `[lo, hi)` with `hi` possibly infinite.
fn half_open(lo: f64, hi: f64) -> Domain {
    Domain {
        lo,
        hi,
        open_lo: false,
        open_hi: true,
    }
}

fn from(lo: f64) -> Domain {
    Domain {
        lo,
        hi: f64::INFINITY,
        open_lo: false,
        open_hi: true,
    }
}

pub fn example1_systems(p: Example1Params) -> Result<ExampleSystems> {
    p.validate()?;
    let Example1Params {
        upsilon: ups,
        omega,
        t0,
        t0_prime,
        span,
    } = p;
    let w2 = 0.5 * omega * omega;
    let window = Window::new(t0, t0 + span)?;
    let c = TimeFunction::constant;

    let tq = TQSystem::new(window, TimeFunction::zero(), c(ups), TimeFunction::zero(), c(w2), TimeFunction::zero(), TimeFunction::zero())?;
    let tm = TMSystem::new(
        window,
        TimeFunction::exp(1.0, ups, t0),
        TimeFunction::exp(w2, -ups, t0),
        TimeFunction::zero(),
        TimeFunction::zero(),
    )?;
    let gauge = GaugeTriple::from_closed_form(
        window,
        TimeFunction::zero(),
        TimeFunction::zero(),
        TimeFunction::poly(vec![0.5 * ups * t0, -0.5 * ups]),
    )?;

    let (forward, inverse, g2) = if ups == 0.0 {
        let id = TimeFunction::poly(vec![0.0, 1.0]);
        (
            TimeFunction::sum(vec![id.clone(), c(-t0), c(t0_prime)]),
            TimeFunction::sum(vec![id, c(-t0_prime), c(t0)]),
            c(w2),
        )
    } else {
        (
            TimeFunction::sum(vec![TimeFunction::exp(1.0 / ups, ups, t0), c(-1.0 / ups), c(t0_prime)]),
            TimeFunction::sum(vec![TimeFunction::log(1.0 / ups, t0_prime, ups), c(t0)]),
            TimeFunction::affine_power(w2, t0_prime, ups, -2.0),
        )
    };
    let prime_hi = if ups < 0.0 { t0_prime + 1.0 / ups.abs() } else { f64::INFINITY };
    let map = TimeMap::new(
        forward.restricted(from(t0)),
        inverse.restricted(half_open(t0_prime, prime_hi)),
        t0,
        t0_prime,
    )?;
    let to_window = Window::new(t0_prime, map.to_prime(window.hi)?)?;
    let to = TOSystem::new(to_window, g2, TimeFunction::zero(), TimeFunction::zero())?;
    Ok(ExampleSystems { tq, tm, to, gauge, map })
}

pub fn example2_systems(p: Example2Params) -> Result<ExampleSystems> {
    p.validate()?;
    let Example2Params {
        a,
        b,
        omega,
        t0,
        t0_prime,
        ..
    } = p;
    let w2 = 0.5 * omega * omega;
    let window = p.window()?;
    let c = TimeFunction::constant;

    let tq = TQSystem::new(
        window,
        TimeFunction::zero(),
        TimeFunction::power(-a / t0, t0, -1.0),
        TimeFunction::zero(),
        TimeFunction::power(w2, t0, b - a),
        TimeFunction::zero(),
        TimeFunction::zero(),
    )?;
    let tm = TMSystem::new(
        window,
        TimeFunction::power(1.0, t0, -a),
        TimeFunction::power(w2, t0, b),
        TimeFunction::zero(),
        TimeFunction::zero(),
    )?;
    let gauge = GaugeTriple::from_closed_form(
        window,
        TimeFunction::zero(),
        TimeFunction::zero(),
        TimeFunction::log(0.5 * a, t0, 1.0 / t0),
    )?;

    let (forward, inverse, g2, prime_hi) = if a == 1.0 {
        (
            TimeFunction::sum(vec![TimeFunction::log(t0, t0, 1.0 / t0), c(t0_prime)]),
            TimeFunction::exp(t0, 1.0 / t0, t0_prime),
            TimeFunction::exp(w2, (1.0 + b) / t0, t0_prime),
            f64::INFINITY,
        )
    } else {
        let cc = t0 / (1.0 - a);
        let slope = (1.0 - a) / t0;
        (
            TimeFunction::sum(vec![TimeFunction::power(cc, t0, 1.0 - a), c(-cc), c(t0_prime)]),
            TimeFunction::affine_power(t0, t0_prime, slope, 1.0 / (1.0 - a)),
            TimeFunction::affine_power(w2, t0_prime, slope, (a + b) / (1.0 - a)),
            if a > 1.0 { t0_prime + t0 / (a - 1.0) } else { f64::INFINITY },
        )
    };
    let map = TimeMap::new(
        forward.restricted(from(t0)),
        inverse.restricted(half_open(t0_prime, prime_hi)),
        t0,
        t0_prime,
    )?;
    let to_window = Window::new(t0_prime, map.to_prime(window.hi)?)?;
    let to = TOSystem::new(to_window, g2, TimeFunction::zero(), TimeFunction::zero())?;
    Ok(ExampleSystems { tq, tm, to, gauge, map })
}

/// Runs the generic pipeline (restricted gauge, TM, time map, TO) on a TQ
/// system, starting at the window's lower end.
pub fn pipeline_from_tq(tq: &TQSystem, t0_prime: f64, n: usize) -> Result<ExampleSystems> {
    let grid = tq.window.grid(n);
    let gauge = solve_gauge(tq, &GaugeTarget::TmRestricted, grid[0], &grid)?;
    let tm = tq_to_tm(tq, &gauge)?;
    let map = time_map_from_f(&tm.f, grid[0], t0_prime, &grid)?;
    let to = tm_to_to(&tm, &map)?;
    Ok(ExampleSystems {
        tq: tq.clone(),
        tm,
        to,
        gauge,
        map,
    })
}

/// Samples used by [`example2_degeneracy_check`] along each pipeline.
pub const DEGENERACY_PIPELINE_SAMPLES: usize = 1801;
/// Probe points on the common `t'` range.
pub const DEGENERACY_PROBES: usize = 101;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyCurve {
    pub a: f64,
    pub g2: Vec<f64>,
    /// `max |g₂ − ½ω²|` on the probes.
    pub deviation_from_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub omega: f64,
    pub t0: f64,
    /// Probe points in `t'`, shared by all curves.
    pub t_prime: Vec<f64>,
    pub curves: Vec<DegeneracyCurve>,
    /// Largest `|g₂(a) − g₂(a')|` over all pairs and probes.
    pub max_pairwise_deviation: f64,
}

/// Example 2 with `b = −a` for every `a`: all TO images coincide.
pub fn example2_degeneracy_check(a_values: &[f64], omega: f64, t0: f64) -> Result<DegeneracyReport> {
    if a_values.is_empty() {
        return Err(Error::InvalidArgument("no a values given".into()));
    }
    if let Some(a) = a_values.iter().find(|&&a| a == 0.0 || a == 1.0) {
        return Err(Error::Unsupported(format!("degeneracy check needs a outside {{0, 1}}, got {a}")));
    }
    let mut images = Vec::with_capacity(a_values.len());
    for &a in a_values {
        let ex = example2_systems(Example2Params::new(a, -a, omega, t0))?;
        let piped = pipeline_from_tq(&ex.tq, 0.0, DEGENERACY_PIPELINE_SAMPLES)?;
        images.push((a, piped.to));
    }
    let lo = images.iter().map(|(_, to)| to.window.lo).fold(f64::NEG_INFINITY, f64::max);
    let hi = images.iter().map(|(_, to)| to.window.hi).fold(f64::INFINITY, f64::min);
    let probes = uniform_grid(lo, hi, DEGENERACY_PROBES);
    let w2 = 0.5 * omega * omega;
    let mut curves = Vec::with_capacity(images.len());
    for (a, to) in &images {
        let g2 = probes.iter().map(|&t| to.g2.eval(t)).collect::<Result<Vec<_>>>()?;
        let deviation_from_constant = g2.iter().map(|v| (v - w2).abs()).fold(0.0, f64::max);
        curves.push(DegeneracyCurve {
            a: *a,
            g2,
            deviation_from_constant,
        });
    }
    let mut worst = 0.0_f64;
    for (i, ci) in curves.iter().enumerate() {
        for cj in &curves[i + 1..] {
            for (x, y) in ci.g2.iter().zip(&cj.g2) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(DegeneracyReport {
        omega,
        t0,
        t_prime: probes,
        curves,
        max_pairwise_deviation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{conjugate_tq, max_deviation};

    #[test]
    fn example1_forward_map_value() {
        let ex = example1_systems(Example1Params::new(1.0, 1.0, 0.0)).unwrap();
        assert!((ex.map.to_prime(2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        assert!((ex.map.from_prime(1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn example1_negative_upsilon_bounds_the_map() {
        let ex = example1_systems(Example1Params::new(-1.0, 1.0, 0.0)).unwrap();
        let d = ex.map.prime_domain();
        assert_eq!(d.hi, 1.0);
        assert!(d.open_hi);
        assert!(ex.map.from_prime(0.999).is_ok());
        assert!(matches!(ex.map.from_prime(1.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(ex.map.from_prime(1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn example1_to_at_start() {
        for ups in [-0.5, 0.0, 0.7] {
            let mut p = Example1Params::new(ups, 2.0, 1.0);
            p.t0_prime = 3.0;
            let ex = example1_systems(p).unwrap();
            assert_eq!(ex.to.g2.eval(3.0).unwrap(), 2.0);
            assert_eq!(ex.map.to_prime(1.0).unwrap(), 3.0);
        }
    }

    #[test]
    fn example1_gauge_carries_tq_to_tm() {
        let ex = example1_systems(Example1Params::new(0.4, 1.5, 0.5)).unwrap();
        let c = conjugate_tq(&ex.tq, &ex.gauge).unwrap();
        let grid = ex.tq.window.grid(41);
        for &t in &grid {
            assert!(c.h.eval(t).unwrap().abs() < 1e-14);
            assert!((1.0 + c.k.eval(t).unwrap() - ex.tm.f.eval(t).unwrap()).abs() < 1e-13);
        }
        assert!(max_deviation(&c.h2, &ex.tm.f2, &grid).unwrap() < 1e-13);
    }

    #[test]
    fn example1_to_is_tm_ratio_along_the_map() {
        let ex = example1_systems(Example1Params::new(-0.3, 1.0, 0.0)).unwrap();
        for t in ex.tm.window.grid(21) {
            let tp = ex.map.to_prime(t).unwrap();
            let want = ex.tm.f2.eval(t).unwrap() / ex.tm.f.eval(t).unwrap();
            assert!((ex.to.g2.eval(tp).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn example2_a1_map_value() {
        let ex = example2_systems(Example2Params::new(1.0, 0.3, 1.0, 1.0)).unwrap();
        assert!((ex.map.to_prime(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn example2_a2_map() {
        let ex = example2_systems(Example2Params::new(2.0, 0.0, 1.0, 1.0)).unwrap();
        for t in [1.0, 2.0, 5.0, 10.0] {
            assert!((ex.map.to_prime(t).unwrap() - (1.0 - 1.0 / t)).abs() < 1e-15);
        }
        assert_eq!(ex.map.prime_domain().hi, 1.0);
        assert!(matches!(ex.map.from_prime(1.0), Err(Error::OutOfDomain { .. })));
        assert!((ex.map.from_prime(0.5).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn example2_b_equals_minus_a_is_constant() {
        let ex = example2_systems(Example2Params::new(0.5, -0.5, 1.3, 1.0)).unwrap();
        let w = ex.to.window;
        for tp in w.grid(21) {
            assert!((ex.to.g2.eval(tp).unwrap() - 0.5 * 1.69).abs() < 1e-14);
        }
    }

    #[test]
    fn example2_rejects_a_zero_and_bad_omega() {
        assert!(matches!(
            example2_systems(Example2Params::new(0.0, 1.0, 1.0, 1.0)),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            example2_systems(Example2Params::new(1.0, 1.0, -1.0, 1.0)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(example1_systems(Example1Params::new(1.0, 0.0, 0.0)).is_err());
        assert!(example2_systems(Example2Params::new(1.0, 1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn example2_to_is_tm_ratio_along_the_map() {
        for a in [-1.0, 0.5, 1.0, 2.0] {
            let ex = example2_systems(Example2Params::new(a, 0.4, 1.0, 2.0)).unwrap();
            for t in ex.tm.window.grid(21) {
                let tp = ex.map.to_prime(t).unwrap();
                let want = ex.tm.f2.eval(t).unwrap() / ex.tm.f.eval(t).unwrap();
                let got = ex.to.g2.eval(tp).unwrap();
                assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "a={a} t={t}");
                assert!((ex.map.from_prime(tp).unwrap() - t).abs() < 1e-12 * t);
            }
        }
    }

    #[test]
    fn example2_branches_join_at_a_one() {
        let base = example2_systems(Example2Params::new(1.0, 0.2, 1.0, 1.0)).unwrap();
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            let near = example2_systems(Example2Params::new(a, 0.2, 1.0, 1.0)).unwrap();
            for t in uniform_grid(1.0, 2.0, 21) {
                let d = (near.map.to_prime(t).unwrap() - base.map.to_prime(t).unwrap()).abs();
                assert!(d < 1e-3, "a={a} t={t} d={d}");
            }
        }
    }

    #[test]
    fn pipeline_reproduces_example1() {
        let ex = example1_systems(Example1Params::new(0.3, 1.0, 0.0)).unwrap();
        let piped = pipeline_from_tq(&ex.tq, 0.0, 1001).unwrap();
        let grid = ex.tq.window.grid(101);
        assert!(max_deviation(&piped.gauge.nu, &ex.gauge.nu, &grid).unwrap() < 1e-8);
        assert!(max_deviation(&piped.tm.f, &ex.tm.f, &grid).unwrap() < 1e-8);
        assert!(max_deviation(&piped.map.forward, &ex.map.forward, &grid).unwrap() < 1e-8);
        let tp = ex.to.window.grid(101);
        assert!(max_deviation(&piped.to.g2, &ex.to.g2, &tp).unwrap() < 1e-7);
    }

    #[test]
    fn degeneracy_of_b_minus_a() {
        let r = example2_degeneracy_check(&[0.5, 2.0, -1.0], 1.0, 1.0).unwrap();
        assert!(r.max_pairwise_deviation < 1e-7, "{}", r.max_pairwise_deviation);
        assert!((r.t_prime.last().unwrap() - 0.9).abs() < 1e-9);
        let single = example2_degeneracy_check(&[0.5], 1.0, 1.0).unwrap();
        assert_eq!(single.max_pairwise_deviation, 0.0);
        assert!(example2_degeneracy_check(&[0.5, 0.0], 1.0, 1.0).is_err());
        assert!(example2_degeneracy_check(&[1.0], 1.0, 1.0).is_err());
    }
}
