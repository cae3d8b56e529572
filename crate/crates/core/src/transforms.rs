//! Coefficient transformations between the TQ, TM and TO classes.
//!
//! * [`conjugate_tq`]: conjugation of a TQ operator by a time-dependent gauge
//!   `R(μ(t), ν(t), κ(t))`, including the `RTR⁻¹` derivative terms.
//! * [`solve_gauge`]: integrates the connecting ODEs for `(κ, ν, μ)` so that
//!   the conjugated operator has no dilation or drift term and the requested
//!   kinetic factor.
//! * [`tq_to_tm`], [`tm_to_tq`]: the unitary step in both directions.
//! * [`time_map_from_f`], [`tm_to_to`], [`to_to_tm`]: the change of time.
//!
//! Derived tables are computed with [`Dual`] arithmetic so that every sample
//! carries an exact slope.

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::algebra::GaugeParams;
use crate::systems::{TMSystem, TOSystem, TQSystem, Window};
use crate::timefn::{integrate_cumulative, invert_monotone, Dual, Table, TimeFunction, TimeMap};
use crate::{Error, Result};

const DEFAULT_SAMPLES: usize = 2049;

/// Default bound on `|κ|` before a Riccati solution is declared escaped.
pub const DEFAULT_ESCAPE_BOUND: f64 = 1e6;

/// Default tolerance on `|g̃|`, `|h̃|` accepted by [`tq_to_tm`].
pub const DEFAULT_GAUGE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemClass {
    TQ,
    TM,
    TO,
}

/// Trajectories of the gauge parameters and their time derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeTriple {
    pub window: Window,
    pub kappa: TimeFunction,
    pub mu: TimeFunction,
    pub nu: TimeFunction,
    pub dkappa: TimeFunction,
    pub dmu: TimeFunction,
    pub dnu: TimeFunction,
    /// Richardson estimate of the integration error (zero for closed forms).
    #[serde(default)]
    pub step_error: f64,
}

#[derive(Clone, Copy, Debug)]
struct GaugeDuals {
    kappa: Dual,
    mu: Dual,
    nu: Dual,
    dkappa: Dual,
    dmu: Dual,
    dnu: Dual,
}

impl GaugeTriple {
    /// `κ = μ = ν = 0`: the identity map.
    pub fn identity(window: Window) -> Self {
        let z = TimeFunction::zero;
        Self {
            window,
            kappa: z(),
            mu: z(),
            nu: z(),
            dkappa: z(),
            dmu: z(),
            dnu: z(),
            step_error: 0.0,
        }
    }

    /// Gauge from closed-form `κ, μ, ν`; derivatives are taken analytically.
    pub fn from_closed_form(
        window: Window,
        kappa: TimeFunction,
        mu: TimeFunction,
        nu: TimeFunction,
    ) -> Result<Self> {
        for (name, f) in [("kappa", &kappa), ("mu", &mu), ("nu", &nu)] {
            if !f.domain.covers(window.lo, window.hi) {
                return Err(Error::InvalidArgument(format!(
                    "gauge {name} is not defined on [{}, {}]",
                    window.lo, window.hi
                )));
            }
        }
        Ok(Self {
            window,
            dkappa: kappa.derivative()?,
            dmu: mu.derivative()?,
            dnu: nu.derivative()?,
            kappa,
            mu,
            nu,
            step_error: 0.0,
        })
    }

    pub fn params_at(&self, t: f64) -> Result<GaugeParams> {
        self.window.check(t)?;
        Ok(GaugeParams {
            mu: self.mu.eval(t)?,
            nu: self.nu.eval(t)?,
            kappa: self.kappa.eval(t)?,
        })
    }

    fn duals(&self, t: f64) -> Result<GaugeDuals> {
        Ok(GaugeDuals {
            kappa: self.kappa.dual(t)?,
            mu: self.mu.dual(t)?,
            nu: self.nu.dual(t)?,
            dkappa: self.dkappa.dual(t)?,
            dmu: self.dmu.dual(t)?,
            dnu: self.dnu.dual(t)?,
        })
    }

    /// Sample times of a solved gauge, `None` for closed forms.
    pub fn knots(&self) -> Option<Vec<f64>> {
        self.nu.knots()
    }

    /// Largest `|κ|`, `|μ|`, `|ν|` over `grid`.
    pub fn max_abs(&self, grid: &[f64]) -> Result<[f64; 3]> {
        let mut out = [0.0_f64; 3];
        for &t in grid {
            let p = self.params_at(t)?;
            out[0] = out[0].max(p.kappa.abs());
            out[1] = out[1].max(p.mu.abs());
            out[2] = out[2].max(p.nu.abs());
        }
        Ok(out)
    }
}

fn tq_duals(s: &TQSystem, t: f64) -> Result<[Dual; 6]> {
    Ok([
        s.k.dual(t)?,
        s.h.dual(t)?,
        s.g.dual(t)?,
        s.h2.dual(t)?,
        s.h1.dual(t)?,
        s.h0.dual(t)?,
    ])
}

/// The conjugated coefficients `[1+k̃, h̃, g̃, h̃₂, h̃₁, h̃₀]`.
fn tilde_at(c: [Dual; 6], gd: GaugeDuals) -> [Dual; 6] {
    let [k, h, g, h2, h1, h0] = c;
    let GaugeDuals {
        kappa,
        mu,
        nu,
        dkappa,
        dmu,
        dnu,
    } = gd;
    let e1 = nu.exp();
    let e2 = (nu * 2.0).exp();
    let em1 = (-nu).exp();
    let em2 = (nu * -2.0).exp();
    let h_t = dnu * 2.0 + h - h2 * kappa * 8.0;
    let g_t = dmu * 2.0 + em1 * (g - h1 * kappa * 4.0) + mu * h_t;
    let mass = (dkappa * -2.0 - h * kappa * 2.0 + h2 * kappa * kappa * 8.0 + k + 1.0) * em2;
    let h2_t = h2 * e2;
    let h1_t = h1 * e1 + h2 * e2 * mu * 2.0;
    let h0_t = h0 + h1 * e1 * mu + h2 * e2 * mu * mu;
    [mass, h_t, g_t, h2_t, h1_t, h0_t]
}

fn common_window(a: Window, b: Window) -> Result<Window> {
    Window::new(a.lo.max(b.lo), a.hi.min(b.hi))
        .map_err(|_| Error::GridMismatch(format!("windows [{}, {}] and [{}, {}] do not overlap", a.lo, a.hi, b.lo, b.hi)))
}

/// Gauge knots inside `window`, or a uniform grid when the gauge is closed
/// form.
fn working_grid(knots: Option<Vec<f64>>, window: Window) -> Result<Vec<f64>> {
    match knots {
        Some(k) => {
            let inside: Vec<f64> = k.into_iter().filter(|t| window.contains(*t)).collect();
            if inside.len() < crate::timefn::MIN_TABLE_SAMPLES {
                return Err(Error::GridMismatch(format!(
                    "only {} samples inside [{}, {}]",
                    inside.len(),
                    window.lo,
                    window.hi
                )));
            }
            Ok(inside)
        }
        None => Ok(window.grid(DEFAULT_SAMPLES)),
    }
}

/// Tables of `[1+k̃, h̃, g̃, h̃₂, h̃₁, h̃₀]` on the gauge grid.
fn conjugate_tables(s: &TQSystem, gauge: &GaugeTriple) -> Result<(Window, [Table; 6])> {
    let window = common_window(s.window, gauge.window)?;
    let grid = working_grid(gauge.knots(), window)?;
    let mut columns: [Vec<Dual>; 6] = Default::default();
    for &t in &grid {
        let out = tilde_at(tq_duals(s, t)?, gauge.duals(t)?);
        for (col, d) in columns.iter_mut().zip(out) {
            col.push(d);
        }
    }
    let build = |col: &Vec<Dual>| {
        Table::with_slopes(
            grid.clone(),
            col.iter().map(|d| d.v).collect(),
            col.iter().map(|d| d.d).collect(),
        )
    };
    Ok((
        Window::new(grid[0], *grid.last().unwrap())?,
        [
            build(&columns[0])?,
            build(&columns[1])?,
            build(&columns[2])?,
            build(&columns[3])?,
            build(&columns[4])?,
            build(&columns[5])?,
        ],
    ))
}

fn shifted(table: &Table, by: f64) -> Result<Table> {
    Table::with_slopes(
        table.times().to_vec(),
        table.values().iter().map(|v| v + by).collect(),
        table.slopes().to_vec(),
    )
}

/// `R S R⁻¹` for a time-dependent gauge, tabulated on the gauge grid.
pub fn conjugate_tq(s: &TQSystem, gauge: &GaugeTriple) -> Result<TQSystem> {
    let (window, [mass, h, g, h2, h1, h0]) = conjugate_tables(s, gauge)?;
    TQSystem::new(
        window,
        TimeFunction::table(shifted(&mass, -1.0)?),
        TimeFunction::table(h),
        TimeFunction::table(g),
        TimeFunction::table(h2),
        TimeFunction::table(h1),
        TimeFunction::table(h0),
    )
}

/// Which class the gauge should carry a TQ system into.
#[derive(Clone, Debug, PartialEq)]
pub enum GaugeTarget {
    /// TM with a prescribed mass function `f`.
    Tm(TimeFunction),
    /// TM with `f = e^{−2ν}`; the `κ` equation becomes a Riccati equation
    /// with source `k/2`.
    TmRestricted,
    /// TO directly: `f ≡ 1`.
    To,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeOptions {
    pub escape_bound: f64,
    /// Re-integrate with halved steps to estimate the step error.
    pub richardson: bool,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        Self {
            escape_bound: DEFAULT_ESCAPE_BOUND,
            richardson: true,
        }
    }
}

/// State order: `[κ, ν, μ]`.
struct GaugeOde<'a> {
    s: &'a TQSystem,
    target: &'a GaugeTarget,
}

impl GaugeOde<'_> {
    /// Right-hand side in dual arithmetic: with state duals `(y, ẏ)` the
    /// derivative parts give `ÿ`.
    fn rhs_dual(&self, t: f64, y: [Dual; 3]) -> Result<[Dual; 3]> {
        let [k, h, g, h2, h1, _] = tq_duals(self.s, t)?;
        let [kappa, nu, _mu] = y;
        let dnu = h2 * kappa * 4.0 - h * 0.5;
        let dmu = (-nu).exp() * (g - h1 * kappa * 4.0) * -0.5;
        let source = match self.target {
            GaugeTarget::TmRestricted => k * 0.5,
            GaugeTarget::To => (k + 1.0) * 0.5 - (nu * 2.0).exp() * 0.5,
            GaugeTarget::Tm(f) => (k + 1.0) * 0.5 - f.dual(t)? * (nu * 2.0).exp() * 0.5,
        };
        let dkappa = -(h * kappa) + h2 * kappa * kappa * 4.0 + source;
        Ok([dkappa, dnu, dmu])
    }

    fn rhs(&self, t: f64, y: [f64; 3]) -> Result<[f64; 3]> {
        let d = self.rhs_dual(t, y.map(Dual::constant))?;
        Ok(d.map(|x| x.v))
    }

    fn rk4_step(&self, t: f64, y: [f64; 3], dt: f64) -> Result<[f64; 3]> {
        let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        let k1 = self.rhs(t, y)?;
        let k2 = self.rhs(t + 0.5 * dt, add(y, k1, 0.5 * dt))?;
        let k3 = self.rhs(t + 0.5 * dt, add(y, k2, 0.5 * dt))?;
        let k4 = self.rhs(t + dt, add(y, k3, dt))?;
        Ok([
            y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            y[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ])
    }

    /// Fixed-step RK4 through `grid`, `substeps` steps per interval.
    fn integrate(&self, grid: &[f64], substeps: usize, bound: f64) -> Result<Vec<[f64; 3]>> {
        let mut y = [0.0; 3];
        let mut out = Vec::with_capacity(grid.len());
        out.push(y);
        for w in grid.windows(2) {
            let dt = (w[1] - w[0]) / substeps as f64;
            for j in 0..substeps {
                let t = w[0] + dt * j as f64;
                y = self.rk4_step(t, y, dt)?;
                if !(y[0].abs() <= bound) || !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::FiniteEscape { t: t + dt, bound });
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}

/// Solves the connecting ODEs for `(κ, ν, μ)` from `R(t₀) = I` along `grid`.
pub fn solve_gauge(s: &TQSystem, target: &GaugeTarget, t0: f64, grid: &[f64]) -> Result<GaugeTriple> {
    solve_gauge_with(s, target, t0, grid, GaugeOptions::default())
}

pub fn solve_gauge_with(
    s: &TQSystem,
    target: &GaugeTarget,
    t0: f64,
    grid: &[f64],
    opts: GaugeOptions,
) -> Result<GaugeTriple> {
    if grid.len() < crate::timefn::MIN_TABLE_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "gauge grid needs at least {} points",
            crate::timefn::MIN_TABLE_SAMPLES
        )));
    }
    if grid[0] != t0 {
        return Err(Error::InvalidArgument(format!(
            "gauge grid starts at {} instead of t0 = {t0}",
            grid[0]
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "gauge grid not increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    let window = Window::new(grid[0], *grid.last().unwrap())?;
    if !(s.window.contains(window.lo) && s.window.contains(window.hi)) {
        return Err(Error::OutOfDomain {
            t: if s.window.contains(window.lo) { window.hi } else { window.lo },
            lo: s.window.lo,
            hi: s.window.hi,
        });
    }
    if let GaugeTarget::Tm(f) = target {
        for &t in grid {
            let v = f.eval(t)?;
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "target mass f must be positive; f({t}) = {v}"
                )));
            }
        }
    }

    let ode = GaugeOde { s, target };
    let ys = ode.integrate(grid, 1, opts.escape_bound)?;
    let step_error = if opts.richardson {
        let fine = ode.integrate(grid, 2, opts.escape_bound)?;
        ys.iter()
            .zip(&fine)
            .flat_map(|(a, b)| (0..3).map(move |i| (a[i] - b[i]).abs()))
            .fold(0.0, f64::max)
            / 15.0
    } else {
        0.0
    };
    debug!("solve_gauge: {} nodes, Richardson error estimate {step_error:e}", grid.len());

    // Node derivatives from the right-hand side, second derivatives from
    // its dual evaluation.
    let n = grid.len();
    let mut vals = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut firsts = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut seconds = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for (&t, y) in grid.iter().zip(&ys) {
        let d1 = ode.rhs(t, *y)?;
        let duals = [
            Dual::new(y[0], d1[0]),
            Dual::new(y[1], d1[1]),
            Dual::new(y[2], d1[2]),
        ];
        let d2 = ode.rhs_dual(t, duals)?;
        for i in 0..3 {
            vals[i].push(y[i]);
            firsts[i].push(d1[i]);
            seconds[i].push(d2[i].d);
        }
    }
    let [kv, nv, mv] = vals;
    let [kd, nd, md] = firsts;
    let [kdd, ndd, mdd] = seconds;
    let tab = |v: Vec<f64>, d: Vec<f64>| -> Result<TimeFunction> {
        Ok(TimeFunction::table(Table::with_slopes(grid.to_vec(), v, d)?))
    };
    Ok(GaugeTriple {
        window,
        kappa: tab(kv, kd.clone())?,
        nu: tab(nv, nd.clone())?,
        mu: tab(mv, md.clone())?,
        dkappa: tab(kd, kdd)?,
        dnu: tab(nd, ndd)?,
        dmu: tab(md, mdd)?,
        step_error,
    })
}

/// Largest deviations of a conjugated system from the target class.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct GaugeResiduals {
    /// `max |h̃|`
    pub dilation: f64,
    /// `max |g̃|`
    pub drift: f64,
    /// `max |(1+k̃) − f|` when a target mass is known.
    pub mass: f64,
}

impl GaugeResiduals {
    pub fn max(&self) -> f64 {
        self.dilation.max(self.drift).max(self.mass)
    }
}

/// Residuals of `conjugate_tq(s, gauge)` at the gauge samples. `target`
/// gives the expected `1 + k̃`; for [`GaugeTarget::TmRestricted`] it is
/// `e^{−2ν}`.
pub fn gauge_residuals(s: &TQSystem, gauge: &GaugeTriple, target: &GaugeTarget) -> Result<GaugeResiduals> {
    let (_, [mass, h, g, ..]) = conjugate_tables(s, gauge)?;
    let mut r = GaugeResiduals::default();
    for (i, &t) in mass.times().iter().enumerate() {
        r.dilation = r.dilation.max(h.values()[i].abs());
        r.drift = r.drift.max(g.values()[i].abs());
        let want = match target {
            GaugeTarget::Tm(f) => f.eval(t)?,
            GaugeTarget::TmRestricted => (-2.0 * gauge.nu.eval(t)?).exp(),
            GaugeTarget::To => 1.0,
        };
        r.mass = r.mass.max((mass.values()[i] - want).abs());
    }
    Ok(r)
}

/// TQ → TM with a gauge solving the connecting equations.
pub fn tq_to_tm(s: &TQSystem, gauge: &GaugeTriple) -> Result<TMSystem> {
    tq_to_tm_with_tol(s, gauge, DEFAULT_GAUGE_TOL)
}

pub fn tq_to_tm_with_tol(s: &TQSystem, gauge: &GaugeTriple, tol: f64) -> Result<TMSystem> {
    let (window, [mass, h, g, h2, h1, h0]) = conjugate_tables(s, gauge)?;
    let residual = h
        .values()
        .iter()
        .chain(g.values())
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if !(residual <= tol) {
        return Err(Error::InvalidGauge { residual, tol });
    }
    TMSystem::new(
        window,
        TimeFunction::table(mass),
        TimeFunction::table(h2),
        TimeFunction::table(h1),
        TimeFunction::table(h0),
    )
}

/// `t' = t0' + ∫_{t0}^{t} f`, with a numerical inverse.
pub fn time_map_from_f(f: &TimeFunction, t0: f64, t0_prime: f64, grid: &[f64]) -> Result<TimeMap> {
    for &t in grid {
        let v = f.eval(t)?;
        if !(v > 0.0) {
            return Err(Error::NotInvertible {
                t,
                reason: format!("mass function f = {v} is not positive"),
            });
        }
    }
    let integral = integrate_cumulative(f, t0, grid)?;
    let table = match &integral.spec {
        crate::timefn::Expr::Table(tab) => shifted(tab, t0_prime)?,
        _ => unreachable!("integrate_cumulative returns a table"),
    };
    let forward = TimeFunction::table(table);
    let inverse = invert_monotone(&forward)?;
    TimeMap::new(forward, inverse, t0, t0_prime)
}

/// Grid in `t` for the change of time: the forward map's knots inside
/// `window`, or uniform samples.
fn map_grid(m: &TimeMap, window: Window) -> Result<Vec<f64>> {
    working_grid(m.forward.knots(), window)
}

/// TM → TO: `gⱼ(t') = (fⱼ / f)(t(t'))`.
///
/// `m` must be the map built from `s.f`; its slope is compared with `f` at
/// every sample.
pub fn tm_to_to(s: &TMSystem, m: &TimeMap) -> Result<TOSystem> {
    let grid = map_grid(m, s.window)?;
    let mut tp = Vec::with_capacity(grid.len());
    let mut cols: [Vec<Dual>; 3] = Default::default();
    for &t in &grid {
        let fwd = m.forward.dual(t)?;
        let f = s.f.dual(t)?;
        if (fwd.d - f.v).abs() > 1e-8 * f.v.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "time map slope {} differs from f = {} at t = {t}",
                fwd.d, f.v
            )));
        }
        tp.push(fwd.v);
        for (col, fj) in cols.iter_mut().zip([&s.f2, &s.f1, &s.f0]) {
            let q = fj.dual(t)? / f;
            // d/dt' = (1/f) d/dt
            col.push(Dual::new(q.v, q.d / fwd.d));
        }
    }
    let build = |col: &Vec<Dual>| -> Result<TimeFunction> {
        Ok(TimeFunction::table(Table::with_slopes(
            tp.clone(),
            col.iter().map(|d| d.v).collect(),
            col.iter().map(|d| d.d).collect(),
        )?))
    };
    TOSystem::new(
        Window::new(tp[0], *tp.last().unwrap())?,
        build(&cols[0])?,
        build(&cols[1])?,
        build(&cols[2])?,
    )
}

/// TO → TM: `f = ∂t'/∂t`, `fⱼ(t) = f(t) gⱼ(t'(t))`.
pub fn to_to_tm(s: &TOSystem, m: &TimeMap) -> Result<TMSystem> {
    let window = Window::new(m.from_prime(s.window.lo)?, m.from_prime(s.window.hi)?)?;
    let f = m.forward.derivative()?;
    let grid = map_grid(m, window)?;
    let mut cols: [Vec<Dual>; 3] = Default::default();
    for &t in &grid {
        let fd = f.dual(t)?;
        if !(fd.v > 0.0) {
            return Err(Error::NotInvertible {
                t,
                reason: format!("time map slope {} is not positive", fd.v),
            });
        }
        let tp = m.to_prime(t)?;
        for (col, gj) in cols.iter_mut().zip([&s.g2, &s.g1, &s.g0]) {
            let g = gj.dual(tp)?;
            // d/dt [f · g(t'(t))] = f' g + f² g'
            col.push(Dual::new(fd.v * g.v, fd.d * g.v + fd.v * fd.v * g.d));
        }
    }
    let build = |col: &Vec<Dual>| -> Result<TimeFunction> {
        Ok(TimeFunction::table(Table::with_slopes(
            grid.clone(),
            col.iter().map(|d| d.v).collect(),
            col.iter().map(|d| d.d).collect(),
        )?))
    };
    let window = Window::new(grid[0], *grid.last().unwrap())?;
    TMSystem::new(
        window,
        f.restricted(window.domain()),
        build(&cols[0])?,
        build(&cols[1])?,
        build(&cols[2])?,
    )
}

/// `[1+k, h, g, h₂, h₁, h₀]` of the TQ system that the gauge carries onto
/// the TM system with coefficients `[f, f₂, f₁, f₀]`.
fn tm_to_tq_at(tm: [Dual; 4], gd: GaugeDuals) -> [Dual; 6] {
    let [f, f2, f1, f0] = tm;
    let GaugeDuals {
        kappa,
        mu,
        nu,
        dkappa,
        dmu,
        dnu,
    } = gd;
    let e1 = nu.exp();
    let e2 = (nu * 2.0).exp();
    let em1 = (-nu).exp();
    let em2 = (nu * -2.0).exp();
    let h2 = f2 * em2;
    let h1 = (f1 - f2 * mu * 2.0) * em1;
    let h0 = f0 - f1 * mu + f2 * mu * mu;
    let h = dnu * -2.0 + h2 * kappa * 8.0;
    let mass = f * e2 + dkappa * 2.0 + h * kappa * 2.0 - h2 * kappa * kappa * 8.0;
    let g = dmu * e1 * -2.0 + h1 * kappa * 4.0;
    [mass, h, g, h2, h1, h0]
}

/// The printed closed forms for `1+k` and `g`, kept for comparison.
fn tm_to_tq_printed_at(tm: [Dual; 4], gd: GaugeDuals) -> (Dual, Dual) {
    let [f, f2, f1, _] = tm;
    let GaugeDuals {
        kappa,
        mu,
        nu,
        dkappa,
        dmu,
        dnu,
    } = gd;
    let e1 = nu.exp();
    let e2 = (nu * 2.0).exp();
    let em1 = (-nu).exp();
    let em2 = (nu * -2.0).exp();
    let mass = (dkappa - kappa * dnu * 2.0) * 2.0 + f2 * kappa * em2 * 8.0 + f * e2;
    let g = dmu * e1 * -2.0 - f2 * kappa * mu * em1 * 8.0 + f1 * kappa * em1;
    (mass, g)
}

fn tm_duals(s: &TMSystem, t: f64) -> Result<[Dual; 4]> {
    Ok([s.f.dual(t)?, s.f2.dual(t)?, s.f1.dual(t)?, s.f0.dual(t)?])
}

fn tq_from_columns(grid: &[f64], cols: &[Vec<Dual>; 6]) -> Result<TQSystem> {
    let build = |col: &Vec<Dual>, shift: f64| -> Result<TimeFunction> {
        Ok(TimeFunction::table(Table::with_slopes(
            grid.to_vec(),
            col.iter().map(|d| d.v + shift).collect(),
            col.iter().map(|d| d.d).collect(),
        )?))
    };
    TQSystem::new(
        Window::new(grid[0], *grid.last().unwrap())?,
        build(&cols[0], -1.0)?,
        build(&cols[1], 0.0)?,
        build(&cols[2], 0.0)?,
        build(&cols[3], 0.0)?,
        build(&cols[4], 0.0)?,
        build(&cols[5], 0.0)?,
    )
}

/// TM → TQ: the TQ system `S₁` with `R S₁ R⁻¹ = S₂`.
///
/// All six coefficients follow from requiring that conjugation by the
/// gauge returns the TM operator, so `conjugate_tq(tm_to_tq(s, g), g)`
/// reproduces `s`.
pub fn tm_to_tq(s: &TMSystem, gauge: &GaugeTriple) -> Result<TQSystem> {
    let window = common_window(s.window, gauge.window)?;
    let grid = working_grid(gauge.knots(), window)?;
    let mut cols: [Vec<Dual>; 6] = Default::default();
    for &t in &grid {
        let out = tm_to_tq_at(tm_duals(s, t)?, gauge.duals(t)?);
        for (col, d) in cols.iter_mut().zip(out) {
            col.push(d);
        }
    }
    tq_from_columns(&grid, &cols)
}

/// Deviation of one closed-form TM → TQ coefficient from the
/// inverse-consistent value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// `"g"` or `"1+k"`.
    pub coefficient: String,
    pub printed_form: String,
    pub derived_form: String,
    /// Largest deviation of the conjugated printed-form system from the TM
    /// target (`|g̃|` or `|(1+k̃) − f|`).
    pub printed_deviation: f64,
    /// The same measure for the inverse-consistent form.
    pub derived_deviation: f64,
}

/// Compares the printed TM → TQ forms of `g` and `1+k` with the forms
/// implemented by [`tm_to_tq`], by conjugating each back to TM.
pub fn printed_formula_discrepancies(s: &TMSystem, gauge: &GaugeTriple) -> Result<Vec<Discrepancy>> {
    let derived = tm_to_tq(s, gauge)?;
    let grid = working_grid(derived.k.knots(), derived.window)?;

    let mut g_printed = Vec::with_capacity(grid.len());
    let mut m_printed = Vec::with_capacity(grid.len());
    for &t in &grid {
        let (m, g) = tm_to_tq_printed_at(tm_duals(s, t)?, gauge.duals(t)?);
        m_printed.push(m);
        g_printed.push(g);
    }
    let table = |col: &[Dual], shift: f64| -> Result<TimeFunction> {
        Ok(TimeFunction::table(Table::with_slopes(
            grid.clone(),
            col.iter().map(|d| d.v + shift).collect(),
            col.iter().map(|d| d.d).collect(),
        )?))
    };
    let with_g = TQSystem {
        g: table(&g_printed, 0.0)?,
        ..derived.clone()
    };
    let with_mass = TQSystem {
        k: table(&m_printed, -1.0)?,
        ..derived.clone()
    };

    let deviations = |tq: &TQSystem| -> Result<(f64, f64)> {
        let (_, [mass, _, g, ..]) = conjugate_tables(tq, gauge)?;
        let mut drift = 0.0_f64;
        let mut m_dev = 0.0_f64;
        for (i, &t) in mass.times().iter().enumerate() {
            drift = drift.max(g.values()[i].abs());
            m_dev = m_dev.max((mass.values()[i] - s.f.eval(t)?).abs());
        }
        Ok((drift, m_dev))
    };
    let (derived_drift, derived_mass) = deviations(&derived)?;
    let (printed_drift, _) = deviations(&with_g)?;
    let (_, printed_mass) = deviations(&with_mass)?;

    Ok(vec![
        Discrepancy {
            coefficient: "g".into(),
            printed_form: "-2 dmu/dt e^nu - 8 f2 kappa mu e^-nu + f1 kappa e^-nu".into(),
            derived_form: "-2 dmu/dt e^nu - 8 f2 kappa mu e^-nu + 4 f1 kappa e^-nu".into(),
            printed_deviation: printed_drift,
            derived_deviation: derived_drift,
        },
        Discrepancy {
            coefficient: "1+k".into(),
            printed_form: "2(dkappa/dt - 2 kappa dnu/dt) + 8 f2 kappa e^-2nu + f e^2nu".into(),
            derived_form: "2(dkappa/dt - 2 kappa dnu/dt) + 8 f2 kappa^2 e^-2nu + f e^2nu".into(),
            printed_deviation: printed_mass,
            derived_deviation: derived_mass,
        },
    ])
}

/// TO coefficients `[g₂, g₁, g₀]` at `t'` written through the gauge history
/// of the TQ source (`ȟ`, `ν̌`, `μ̌` are the source quantities at `t(t')`,
/// `f` the TM mass). Used as an independent check of [`tm_to_to`].
pub fn to_coefficients_via_gauge(
    tq: &TQSystem,
    gauge: &GaugeTriple,
    f: &TimeFunction,
    m: &TimeMap,
    t_prime: f64,
) -> Result<[f64; 3]> {
    let t = m.from_prime(t_prime)?;
    let p = gauge.params_at(t)?;
    let (h2, h1, h0) = (tq.h2.eval(t)?, tq.h1.eval(t)?, tq.h0.eval(t)?);
    let fc = f.eval(t)?;
    let (e1, e2) = (p.nu.exp(), (2.0 * p.nu).exp());
    Ok([
        h2 * e2 / fc,
        (2.0 * p.mu * h2 * e2 + h1 * e1) / fc,
        (h0 + h1 * e1 * p.mu + h2 * e2 * p.mu * p.mu) / fc,
    ])
}

/// Largest `|a − b|` over `grid`.
pub fn max_deviation(a: &TimeFunction, b: &TimeFunction, grid: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &t in grid {
        worst = worst.max((a.eval(t)? - b.eval(t)?).abs());
    }
    Ok(worst)
}

/// Largest coefficient deviation between two TQ systems over `grid`.
pub fn tq_deviation(a: &TQSystem, b: &TQSystem, grid: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (x, y) in a.coefficients().into_iter().zip(b.coefficients()) {
        worst = worst.max(max_deviation(x, y, grid)?);
    }
    Ok(worst)
}

pub fn tm_deviation(a: &TMSystem, b: &TMSystem, grid: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (x, y) in a.coefficients().into_iter().zip(b.coefficients()) {
        worst = worst.max(max_deviation(x, y, grid)?);
    }
    Ok(worst)
}

pub fn to_deviation(a: &TOSystem, b: &TOSystem, grid: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (x, y) in a.coefficients().into_iter().zip(b.coefficients()) {
        worst = worst.max(max_deviation(x, y, grid)?);
    }
    Ok(worst)
}

/// Outcome of a transformation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    pub source: SystemClass,
    pub target: SystemClass,
    pub gauge: Option<GaugeTriple>,
    pub time_map: Option<TimeMap>,
    /// Named nonnegative diagnostics (max deviations).
    pub residuals: BTreeMap<String, f64>,
    pub discrepancies: Vec<Discrepancy>,
}

impl TransformReport {
    pub fn new(source: SystemClass, target: SystemClass) -> Self {
        Self {
            source,
            target,
            gauge: None,
            time_map: None,
            residuals: BTreeMap::new(),
            discrepancies: Vec::new(),
        }
    }

    pub fn record(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.to_string(), value.abs());
    }
}

/// TQ → TM along `grid` (which starts at `t0`).
pub fn run_tq_to_tm(
    s: &TQSystem,
    target: &GaugeTarget,
    grid: &[f64],
    tol: f64,
) -> Result<(TMSystem, TransformReport)> {
    let gauge = solve_gauge(s, target, grid[0], grid)?;
    let tm = tq_to_tm_with_tol(s, &gauge, tol)?;
    let res = gauge_residuals(s, &gauge, target)?;
    let mut report = TransformReport::new(SystemClass::TQ, SystemClass::TM);
    report.record("gauge_dilation", res.dilation);
    report.record("gauge_drift", res.drift);
    report.record("gauge_mass", res.mass);
    report.record("gauge_step_error", gauge.step_error);
    report.discrepancies = printed_formula_discrepancies(&tm, &gauge)?;
    report.gauge = Some(gauge);
    Ok((tm, report))
}

/// TQ → TM → TO along `grid`; the TO time starts at `t0_prime`.
pub fn run_tq_to_to(
    s: &TQSystem,
    target: &GaugeTarget,
    grid: &[f64],
    t0_prime: f64,
    tol: f64,
) -> Result<(TMSystem, TOSystem, TransformReport)> {
    let (tm, mut report) = run_tq_to_tm(s, target, grid, tol)?;
    let map = time_map_from_f(&tm.f, grid[0], t0_prime, grid)?;
    let to = tm_to_to(&tm, &map)?;
    report.target = SystemClass::TO;
    report.record("map_roundtrip", map.roundtrip_error(grid)?);
    if let Some(gauge) = &report.gauge {
        let mut worst = 0.0_f64;
        for &t in grid {
            let tp = map.to_prime(t)?;
            let via = to_coefficients_via_gauge(s, gauge, &tm.f, &map, tp)?;
            for (g, v) in to.coefficients().iter().zip(via) {
                worst = worst.max((g.eval(tp)? - v).abs());
            }
        }
        report.record("to_gauge_crosscheck", worst);
    }
    report.time_map = Some(map);
    Ok((tm, to, report))
}
