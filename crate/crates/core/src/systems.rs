//! The three classes of Schrödinger equations, stored in operator form:
//!
//! ```text
//! TQ:  −(1+k)P² + 2T + hD + gP − 2h₂X² − 2h₁X − 2h₀     (time t)
//! TM:  −f P²    + 2T           − 2f₂X² − 2f₁X − 2f₀     (time t)
//! TO:  −P²      + 2T'          − 2g₂X² − 2g₁X − 2g₀     (time t')
//! ```
//!
//! with `T = i∂ₜ`. Each operator annihilating `Φ` is equivalent to
//! `i∂ₜΦ = HΦ`; [`HamiltonianCoeffs`] gives `H` on the operator basis.

use serde::{Deserialize, Serialize};

use crate::timefn::{uniform_grid, Domain, Expr, TimeFunction};
use crate::{Error, Result};

/// A finite working interval `[lo, hi]` shared by all coefficients of a
/// system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "window [{lo}, {hi}] must be finite and non-empty"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn domain(&self) -> Domain {
        Domain::closed(self.lo, self.hi)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.domain().contains(t)
    }

    pub fn check(&self, t: f64) -> Result<()> {
        self.domain().check(t)
    }

    pub fn grid(&self, n: usize) -> Vec<f64> {
        uniform_grid(self.lo, self.hi, n)
    }
}

const POSITIVITY_SAMPLES: usize = 257;

fn check_covers(window: Window, named: &[(&str, &TimeFunction)]) -> Result<()> {
    for (name, f) in named {
        if !f.domain.covers(window.lo, window.hi) {
            return Err(Error::InvalidArgument(format!(
                "coefficient {name} is not defined on [{}, {}]",
                window.lo, window.hi
            )));
        }
    }
    Ok(())
}

/// Checks `offset + f > 0` on a uniform probe of the window and at any
/// knots of `f` inside it.
fn check_positive(window: Window, name: &str, f: &TimeFunction, offset: f64) -> Result<()> {
    let mut probe = window.grid(POSITIVITY_SAMPLES);
    if let Some(k) = f.knots() {
        probe.extend(k.into_iter().filter(|t| window.contains(*t)));
    }
    for t in probe {
        let v = offset + f.eval(t)?;
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must stay positive; got {v} at t = {t}"
            )));
        }
    }
    Ok(())
}

/// Hamiltonian `H = kinetic·P² + dilation·D + drift·P + x2·X² + x1·X + x0`
/// with `i∂ₜΦ = HΦ`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct HamiltonianCoeffs {
    pub kinetic: f64,
    pub dilation: f64,
    pub drift: f64,
    pub x2: f64,
    pub x1: f64,
    pub x0: f64,
}

/// Anything that defines a quadratic Schrödinger evolution.
pub trait Schrodinger {
    fn window(&self) -> Window;
    fn hamiltonian_coeffs(&self, t: f64) -> Result<HamiltonianCoeffs>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TQSystem {
    pub window: Window,
    pub k: TimeFunction,
    pub h: TimeFunction,
    pub g: TimeFunction,
    pub h2: TimeFunction,
    pub h1: TimeFunction,
    pub h0: TimeFunction,
}

impl TQSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        window: Window,
        k: TimeFunction,
        h: TimeFunction,
        g: TimeFunction,
        h2: TimeFunction,
        h1: TimeFunction,
        h0: TimeFunction,
    ) -> Result<Self> {
        check_covers(
            window,
            &[("k", &k), ("h", &h), ("g", &g), ("h2", &h2), ("h1", &h1), ("h0", &h0)],
        )?;
        check_positive(window, "1 + k", &k, 1.0)?;
        Ok(Self {
            window,
            k,
            h,
            g,
            h2,
            h1,
            h0,
        })
    }

    /// Free particle: every coefficient zero.
    pub fn free(window: Window) -> Self {
        let z = TimeFunction::zero;
        Self {
            window,
            k: z(),
            h: z(),
            g: z(),
            h2: z(),
            h1: z(),
            h0: z(),
        }
    }

    pub fn coefficient_names() -> [&'static str; 6] {
        ["k", "h", "g", "h2", "h1", "h0"]
    }

    pub fn coefficients(&self) -> [&TimeFunction; 6] {
        [&self.k, &self.h, &self.g, &self.h2, &self.h1, &self.h0]
    }

    /// Reads the system back as TM when the dilation and drift terms are
    /// identically zero.
    pub fn as_tm(&self) -> Option<TMSystem> {
        if !(self.h.is_zero() && self.g.is_zero()) {
            return None;
        }
        let f = match &self.k.spec {
            Expr::Sum { terms }
                if terms.len() == 2 && terms[1].spec == (Expr::Constant { c: -1.0 }) =>
            {
                terms[0].clone()
            }
            _ => TimeFunction::sum(vec![self.k.clone(), TimeFunction::constant(1.0)]),
        };
        Some(TMSystem {
            window: self.window,
            f,
            f2: self.h2.clone(),
            f1: self.h1.clone(),
            f0: self.h0.clone(),
        })
    }

    /// Reads the system back as TO when only the potential terms remain.
    pub fn as_to(&self) -> Option<TOSystem> {
        if !(self.k.is_zero() && self.h.is_zero() && self.g.is_zero()) {
            return None;
        }
        Some(TOSystem {
            window: self.window,
            g2: self.h2.clone(),
            g1: self.h1.clone(),
            g0: self.h0.clone(),
        })
    }
}

impl Schrodinger for TQSystem {
    fn window(&self) -> Window {
        self.window
    }

    fn hamiltonian_coeffs(&self, t: f64) -> Result<HamiltonianCoeffs> {
        self.window.check(t)?;
        Ok(HamiltonianCoeffs {
            kinetic: 0.5 * (1.0 + self.k.eval(t)?),
            dilation: -0.5 * self.h.eval(t)?,
            drift: -0.5 * self.g.eval(t)?,
            x2: self.h2.eval(t)?,
            x1: self.h1.eval(t)?,
            x0: self.h0.eval(t)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TMSystem {
    pub window: Window,
    pub f: TimeFunction,
    pub f2: TimeFunction,
    pub f1: TimeFunction,
    pub f0: TimeFunction,
}

impl TMSystem {
    pub fn new(
        window: Window,
        f: TimeFunction,
        f2: TimeFunction,
        f1: TimeFunction,
        f0: TimeFunction,
    ) -> Result<Self> {
        check_covers(window, &[("f", &f), ("f2", &f2), ("f1", &f1), ("f0", &f0)])?;
        check_positive(window, "f", &f, 0.0)?;
        Ok(Self {
            window,
            f,
            f2,
            f1,
            f0,
        })
    }

    pub fn coefficient_names() -> [&'static str; 4] {
        ["f", "f2", "f1", "f0"]
    }

    pub fn coefficients(&self) -> [&TimeFunction; 4] {
        [&self.f, &self.f2, &self.f1, &self.f0]
    }
}

impl Schrodinger for TMSystem {
    fn window(&self) -> Window {
        self.window
    }

    fn hamiltonian_coeffs(&self, t: f64) -> Result<HamiltonianCoeffs> {
        self.window.check(t)?;
        Ok(HamiltonianCoeffs {
            kinetic: 0.5 * self.f.eval(t)?,
            x2: self.f2.eval(t)?,
            x1: self.f1.eval(t)?,
            x0: self.f0.eval(t)?,
            ..Default::default()
        })
    }
}

/// Coefficients are functions of the primed time `t'`; `window` is a `t'`
/// interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TOSystem {
    pub window: Window,
    pub g2: TimeFunction,
    pub g1: TimeFunction,
    pub g0: TimeFunction,
}

impl TOSystem {
    pub fn new(window: Window, g2: TimeFunction, g1: TimeFunction, g0: TimeFunction) -> Result<Self> {
        check_covers(window, &[("g2", &g2), ("g1", &g1), ("g0", &g0)])?;
        Ok(Self { window, g2, g1, g0 })
    }

    /// `H = P²/2 + ω²X²/2`.
    pub fn harmonic(window: Window, omega: f64) -> Self {
        Self {
            window,
            g2: TimeFunction::constant(0.5 * omega * omega),
            g1: TimeFunction::zero(),
            g0: TimeFunction::zero(),
        }
    }

    pub fn coefficient_names() -> [&'static str; 3] {
        ["g2", "g1", "g0"]
    }

    pub fn coefficients(&self) -> [&TimeFunction; 3] {
        [&self.g2, &self.g1, &self.g0]
    }
}

impl Schrodinger for TOSystem {
    fn window(&self) -> Window {
        self.window
    }

    fn hamiltonian_coeffs(&self, t: f64) -> Result<HamiltonianCoeffs> {
        self.window.check(t)?;
        Ok(HamiltonianCoeffs {
            kinetic: 0.5,
            x2: self.g2.eval(t)?,
            x1: self.g1.eval(t)?,
            x0: self.g0.eval(t)?,
            ..Default::default()
        })
    }
}

/// Any of the three classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum AnySystem {
    #[serde(rename = "TQ")]
    Tq(TQSystem),
    #[serde(rename = "TM")]
    Tm(TMSystem),
    #[serde(rename = "TO")]
    To(TOSystem),
}

impl AnySystem {
    pub fn class_name(&self) -> &'static str {
        match self {
            AnySystem::Tq(_) => "TQ",
            AnySystem::Tm(_) => "TM",
            AnySystem::To(_) => "TO",
        }
    }

    /// The equivalent TQ system.
    pub fn to_tq(&self) -> TQSystem {
        match self {
            AnySystem::Tq(s) => s.clone(),
            AnySystem::Tm(s) => embed_tm_in_tq(s),
            AnySystem::To(s) => embed_to_in_tq(s),
        }
    }
}

impl Schrodinger for AnySystem {
    fn window(&self) -> Window {
        match self {
            AnySystem::Tq(s) => s.window(),
            AnySystem::Tm(s) => s.window(),
            AnySystem::To(s) => s.window(),
        }
    }

    fn hamiltonian_coeffs(&self, t: f64) -> Result<HamiltonianCoeffs> {
        match self {
            AnySystem::Tq(s) => s.hamiltonian_coeffs(t),
            AnySystem::Tm(s) => s.hamiltonian_coeffs(t),
            AnySystem::To(s) => s.hamiltonian_coeffs(t),
        }
    }
}

/// TM as a TQ system: `k = f − 1`, `h = g = 0`, `hⱼ = fⱼ`.
pub fn embed_tm_in_tq(s: &TMSystem) -> TQSystem {
    TQSystem {
        window: s.window,
        k: TimeFunction::sum(vec![s.f.clone(), TimeFunction::constant(-1.0)]),
        h: TimeFunction::zero(),
        g: TimeFunction::zero(),
        h2: s.f2.clone(),
        h1: s.f1.clone(),
        h0: s.f0.clone(),
    }
}

/// TO as a TQ system, reading `t'` as `t`.
pub fn embed_to_in_tq(s: &TOSystem) -> TQSystem {
    TQSystem {
        window: s.window,
        k: TimeFunction::zero(),
        h: TimeFunction::zero(),
        g: TimeFunction::zero(),
        h2: s.g2.clone(),
        h1: s.g1.clone(),
        h0: s.g0.clone(),
    }
}

pub fn hamiltonian_coeffs(s: &TQSystem, t: f64) -> Result<HamiltonianCoeffs> {
    s.hamiltonian_coeffs(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> Window {
        Window::new(0.0, 5.0).unwrap()
    }

    fn example1_tm(ups: f64, omega: f64) -> TMSystem {
        TMSystem::new(
            w(),
            TimeFunction::exp(1.0, ups, 0.0),
            TimeFunction::exp(0.5 * omega * omega, -ups, 0.0),
            TimeFunction::zero(),
            TimeFunction::zero(),
        )
        .unwrap()
    }

    #[test]
    fn free_tm_embeds_as_free_tq() {
        let tm = TMSystem::new(
            w(),
            TimeFunction::constant(1.0),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
        )
        .unwrap();
        let tq = embed_tm_in_tq(&tm);
        for t in [0.0, 1.3, 5.0] {
            assert_eq!(tq.k.eval(t).unwrap(), 0.0);
            let hc = tq.hamiltonian_coeffs(t).unwrap();
            assert_eq!(
                hc,
                HamiltonianCoeffs {
                    kinetic: 0.5,
                    ..Default::default()
                }
            );
        }
    }

    #[test]
    fn example1_tm_embedding() {
        let (ups, omega) = (0.3, 1.2);
        let tq = embed_tm_in_tq(&example1_tm(ups, omega));
        for t in [0.0, 0.7, 4.0] {
            let k = tq.k.eval(t).unwrap();
            assert!((k - ((ups * t).exp() - 1.0)).abs() < 1e-14);
        }
        let hc = tq.hamiltonian_coeffs(0.0).unwrap();
        assert_eq!(hc.kinetic, 0.5);
        assert!((hc.x2 - 0.5 * omega * omega).abs() < 1e-15);
    }

    #[test]
    fn constant_f0_passes_through() {
        let mut tm = example1_tm(0.1, 1.0);
        tm.f0 = TimeFunction::constant(0.75);
        assert_eq!(embed_tm_in_tq(&tm).h0.eval(2.0).unwrap(), 0.75);
    }

    #[test]
    fn to_embedding() {
        let to = TOSystem::harmonic(w(), 2.0);
        let tq = embed_to_in_tq(&to);
        let hc = tq.hamiltonian_coeffs(1.0).unwrap();
        assert_eq!(
            hc,
            HamiltonianCoeffs {
                kinetic: 0.5,
                x2: 2.0,
                ..Default::default()
            }
        );

        let forced = TOSystem::new(w(), TimeFunction::zero(), TimeFunction::constant(-0.4), TimeFunction::zero())
            .unwrap();
        assert_eq!(embed_to_in_tq(&forced).h1.eval(3.0).unwrap(), -0.4);

        // Example 1 TO image: g2 = ω²/2 / [1 + Υ t']²
        let (ups, omega) = (0.2, 1.5);
        let g2 = TimeFunction::affine_power(0.5 * omega * omega, 0.0, ups, -2.0);
        let to = TOSystem::new(w(), g2, TimeFunction::zero(), TimeFunction::zero()).unwrap();
        let tq = embed_to_in_tq(&to);
        for t in [0.0, 1.0, 4.5] {
            let want = 0.5 * omega * omega / (1.0 + ups * t).powi(2);
            assert!((tq.h2.eval(t).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn example1_tq_hamiltonian() {
        // −P² + 2T + ΥD − ω²X²  ⇔  H = P²/2 − (Υ/2)D + ω²X²/2
        let (ups, omega) = (0.4, 1.1);
        let tq = TQSystem::new(
            w(),
            TimeFunction::zero(),
            TimeFunction::constant(ups),
            TimeFunction::zero(),
            TimeFunction::constant(0.5 * omega * omega),
            TimeFunction::zero(),
            TimeFunction::zero(),
        )
        .unwrap();
        let hc = hamiltonian_coeffs(&tq, 2.0).unwrap();
        assert_eq!(hc.kinetic, 0.5);
        assert_eq!(hc.dilation, -0.5 * ups);
        assert_eq!(hc.drift, 0.0);
        assert_eq!(hc.x2, 0.5 * omega * omega);
    }

    #[test]
    fn embedding_read_back_is_exact() {
        let tm = example1_tm(-0.4, 0.9);
        let back = embed_tm_in_tq(&tm).as_tm().unwrap();
        assert_eq!(back, tm);

        let to = TOSystem::harmonic(w(), 1.3);
        assert_eq!(embed_to_in_tq(&to).as_to().unwrap(), to);
        assert!(embed_tm_in_tq(&tm).as_to().is_none());
    }

    #[test]
    fn hamiltonian_coefficients_are_real_and_finite() {
        let tq = embed_tm_in_tq(&example1_tm(0.5, 1.0));
        for i in 0..50 {
            let t = 0.1 * i as f64;
            let hc = tq.hamiltonian_coeffs(t).unwrap();
            for v in [hc.kinetic, hc.dilation, hc.drift, hc.x2, hc.x1, hc.x0] {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn rejects_non_positive_mass() {
        let bad = TMSystem::new(
            w(),
            TimeFunction::poly(vec![1.0, -0.5]),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
        );
        assert!(matches!(bad, Err(Error::InvalidArgument(_))));

        let bad_tq = TQSystem::new(
            w(),
            TimeFunction::constant(-1.0),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
        );
        assert!(bad_tq.is_err());
    }

    #[test]
    fn rejects_coefficients_undefined_on_window() {
        let tab = crate::timefn::Table::monotone(vec![0.0, 1.0, 2.0, 3.0], vec![1.0; 4]).unwrap();
        let bad = TOSystem::new(w(), TimeFunction::table(tab), TimeFunction::zero(), TimeFunction::zero());
        assert!(bad.is_err());
    }

    #[test]
    fn hamiltonian_outside_window_errors() {
        let to = TOSystem::harmonic(w(), 1.0);
        assert!(matches!(to.hamiltonian_coeffs(5.5), Err(Error::OutOfDomain { .. })));
    }
}
