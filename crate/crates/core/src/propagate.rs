//! Wavefunctions on a uniform 1-D grid.
//!
//! [`propagate`] integrates `i∂ₜψ = Hψ` for any [`Schrodinger`] system with
//! Crank–Nicolson. `H` is discretized as a Hermitian tridiagonal matrix:
//!
//! * `P²` by the second difference, `P` by the central difference,
//! * `D` in the symmetrized form `½(X P_c + P_c X)`,
//! * potentials on the diagonal,
//!
//! with Dirichlet walls at both ends. [`apply_r`] applies the gauge map
//! `R = e^{iμP} e^{iνD} e^{iκP²}`, [`retime_trajectory`] changes time
//! labels, and [`residual`] measures how well a trajectory solves a given
//! equation.

use std::io::Write;
use std::sync::Arc;

use log::warn;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, BasisOp, GaugeParams};
use crate::systems::{HamiltonianCoeffs, Schrodinger};
use crate::timefn::TimeMap;
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Edge/peak amplitude ratio above which a state counts as touching the
/// walls.
pub const CONTAINMENT_RATIO: f64 = 1e-8;
/// Ratio at which propagation gives up.
pub const REFLECTION_RATIO: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, dx: f64, n: usize) -> Result<Self> {
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid size must be a power of two >= 64, got {n}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite() && x_min.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad grid spacing {dx}")));
        }
        Ok(Self { x_min, dx, n })
    }

    /// `n` points on `[−half_width, half_width)`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, 2.0 * half_width / n as f64, n)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is negative.
    pub fn momenta(&self) -> Vec<f64> {
        let dk = 2.0 * std::f64::consts::PI / (self.n as f64 * self.dx);
        (0..self.n)
            .map(|j| {
                let m = if j < self.n / 2 { j as f64 } else { j as f64 - self.n as f64 };
                m * dk
            })
            .collect()
    }
}

struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            n,
        }
    }

    fn forward(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut buf = v.to_vec();
        self.fwd.process(&mut buf);
        buf
    }

    fn inverse(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut buf = c.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    /// `IFFT(m(k) · FFT(v))`
    fn multiply(&self, v: &[Complex64], k: &[f64], m: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let mut c = self.forward(v);
        for (z, &kk) in c.iter_mut().zip(k) {
            *z *= m(kk);
        }
        self.inverse(&c)
    }
}

/// Norm, means and widths of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub norm: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub dx: f64,
    pub dp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub grid: SpatialGrid,
    pub amps: Vec<Complex64>,
    pub t: f64,
}

impl WaveState {
    pub fn new(grid: SpatialGrid, amps: Vec<Complex64>, t: f64) -> Result<Self> {
        if amps.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {}",
                amps.len(),
                grid.n
            )));
        }
        Ok(Self { grid, amps, t })
    }

    pub fn from_fn(grid: SpatialGrid, t: f64, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            amps: grid.points().into_iter().map(f).collect(),
            grid,
            t,
        }
    }

    /// `(πσ²)^{−1/4} exp(−(x−x₀)²/2σ² + i p₀ x)`
    pub fn gaussian(grid: SpatialGrid, x0: f64, p0: f64, sigma: f64, t: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("gaussian width must be positive, got {sigma}")));
        }
        let a = (std::f64::consts::PI * sigma * sigma).powf(-0.25);
        Ok(Self::from_fn(grid, t, |x| {
            let u = (x - x0) / sigma;
            Complex64::from_polar(a * (-0.5 * u * u).exp(), p0 * x)
        }))
    }

    pub fn norm(&self) -> f64 {
        (self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx).sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|z| *z /= n);
        }
        self
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &WaveState) -> Result<Complex64> {
        self.same_grid(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.dx)
    }

    /// `‖self − other‖`
    pub fn distance(&self, other: &WaveState) -> Result<f64> {
        self.same_grid(other)?;
        Ok((self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.dx)
            .sqrt())
    }

    fn same_grid(&self, other: &WaveState) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Larger edge amplitude over the peak amplitude.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        self.amps[0].norm().max(self.amps[self.grid.n - 1].norm()) / peak
    }

    pub fn observables(&self) -> Observables {
        let xs = self.grid.points();
        let w: Vec<f64> = self.amps.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = w.iter().sum();
        let norm = (total * self.grid.dx).sqrt();
        let moments = |v: &[f64], p: &[f64]| {
            let s: f64 = p.iter().sum();
            let m1 = v.iter().zip(p).map(|(x, w)| x * w).sum::<f64>() / s;
            let m2 = v.iter().zip(p).map(|(x, w)| (x - m1) * (x - m1) * w).sum::<f64>() / s;
            (m1, m2.max(0.0).sqrt())
        };
        let (mean_x, dx) = moments(&xs, &w);
        let c = Spectral::new(self.grid.n).forward(&self.amps);
        let pw: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let (mean_p, dp) = moments(&self.grid.momenta(), &pw);
        Observables {
            norm,
            mean_x,
            mean_p,
            dx,
            dp,
        }
    }

    /// `A ψ` for an algebra element, with spectral derivatives.
    pub fn apply_element(&self, a: &AlgebraElement) -> Vec<Complex64> {
        let sp = Spectral::new(self.grid.n);
        let k = self.grid.momenta();
        let xs = self.grid.points();
        let psi = &self.amps;
        let p = sp.multiply(psi, &k, |k| Complex64::new(k, 0.0));
        let p2 = sp.multiply(psi, &k, |k| Complex64::new(k * k, 0.0));
        let xpsi: Vec<Complex64> = psi.iter().zip(&xs).map(|(z, x)| z * x).collect();
        let pxpsi = sp.multiply(&xpsi, &k, |k| Complex64::new(k, 0.0));
        (0..self.grid.n)
            .map(|j| {
                let x = xs[j];
                let d = 0.5 * (x * p[j] + pxpsi[j]);
                a[BasisOp::I] * psi[j]
                    + a[BasisOp::X] * x * psi[j]
                    + a[BasisOp::P] * p[j]
                    + a[BasisOp::X2] * x * x * psi[j]
                    + a[BasisOp::P2] * p2[j]
                    + a[BasisOp::D] * d
            })
            .collect()
    }

    /// `⟨ψ|A|ψ⟩ / ⟨ψ|ψ⟩`
    pub fn expectation(&self, a: &AlgebraElement) -> Complex64 {
        let av = self.apply_element(a);
        let num: Complex64 = self.amps.iter().zip(&av).map(|(p, q)| p.conj() * q).sum();
        let den: f64 = self.amps.iter().map(|z| z.norm_sqr()).sum();
        num / den
    }
}

/// Hermitian tridiagonal matrix: `lower[j] = H[j][j−1]`,
/// `upper[j] = H[j][j+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    pub upper: Vec<Complex64>,
}

impl Tridiagonal {
    /// The discrete Hamiltonian on `grid`.
    pub fn hamiltonian(grid: &SpatialGrid, h: &HamiltonianCoeffs) -> Self {
        let n = grid.n;
        let dx = grid.dx;
        let kin = h.kinetic / (dx * dx);
        let mut lower = vec![Complex64::new(0.0, 0.0); n];
        let mut diag = vec![Complex64::new(0.0, 0.0); n];
        let mut upper = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let x = grid.x(j);
            diag[j] = Complex64::new(2.0 * kin + h.x2 * x * x + h.x1 * x + h.x0, 0.0);
            if j + 1 < n {
                let xm = x + grid.x(j + 1);
                // drift·P_c + dilation·½(X P_c + P_c X), entry (j, j+1)
                let u = -I * (h.drift / (2.0 * dx) + h.dilation * xm / (4.0 * dx)) - kin;
                upper[j] = u;
                lower[j + 1] = u.conj();
            }
        }
        Self { lower, diag, upper }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j] * v[j];
                if j > 0 {
                    s += self.lower[j] * v[j - 1];
                }
                if j + 1 < n {
                    s += self.upper[j] * v[j + 1];
                }
                s
            })
            .collect()
    }

    /// `α I + β M`
    pub fn affine(&self, alpha: Complex64, beta: Complex64) -> Self {
        Self {
            lower: self.lower.iter().map(|z| beta * z).collect(),
            diag: self.diag.iter().map(|z| alpha + beta * z).collect(),
            upper: self.upper.iter().map(|z| beta * z).collect(),
        }
    }

    /// Thomas algorithm.
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = rhs.len();
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        let mut pivot = self.diag[0];
        for j in 0..n {
            if j > 0 {
                pivot = self.diag[j] - self.lower[j] * c[j - 1];
            }
            if !(pivot.norm() > 1e-300) || !pivot.is_finite() {
                return Err(Error::Numerical(format!("tridiagonal solve broke down at row {j}")));
            }
            c[j] = self.upper[j] / pivot;
            d[j] = if j > 0 {
                (rhs[j] - self.lower[j] * d[j - 1]) / pivot
            } else {
                rhs[0] / pivot
            };
        }
        for j in (0..n - 1).rev() {
            let next = d[j + 1];
            d[j] -= c[j] * next;
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<WaveState>,
    pub observables: Vec<Observables>,
}

impl Trajectory {
    pub fn new(states: Vec<WaveState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        for w in states.windows(2) {
            if w[1].grid != w[0].grid {
                return Err(Error::GridMismatch("states on different grids".into()));
            }
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidArgument(format!(
                    "time stamps not increasing: {} then {}",
                    w[0].t, w[1].t
                )));
            }
        }
        let observables = states.iter().map(WaveState::observables).collect();
        Ok(Self { states, observables })
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &WaveState {
        self.states.last().expect("non-empty")
    }

    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.observables[0].norm;
        self.observables.iter().map(|o| (o.norm - n0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,norm,mean_x,mean_p,dx,dp\n");
        for (s, o) in self.states.iter().zip(&self.observables) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.t, o.norm, o.mean_x, o.mean_p, o.dx, o.dp
            ));
        }
        out
    }

    /// Amplitudes as little-endian `complex64` (two `f32`), state by state.
    pub fn write_amplitudes<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.states {
            for z in &s.amps {
                w.write_all(&(z.re as f32).to_le_bytes())?;
                w.write_all(&(z.im as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagateOptions {
    /// Keep every `record_every`-th state (the last state is always kept).
    pub record_every: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { record_every: 1 }
    }
}

/// Crank–Nicolson from `psi0.t` to `t_end` in `n_steps` equal steps.
pub fn propagate<S: Schrodinger + ?Sized>(s: &S, psi0: &WaveState, t_end: f64, n_steps: usize) -> Result<Trajectory> {
    propagate_with(s, psi0, t_end, n_steps, PropagateOptions::default())
}

pub fn propagate_with<S: Schrodinger + ?Sized>(
    s: &S,
    psi0: &WaveState,
    t_end: f64,
    n_steps: usize,
    opts: PropagateOptions,
) -> Result<Trajectory> {
    if n_steps == 0 || !(t_end > psi0.t) {
        return Err(Error::InvalidArgument(format!(
            "need t_end > {} and at least one step",
            psi0.t
        )));
    }
    let w = s.window();
    w.check(psi0.t)?;
    w.check(t_end)?;
    let ratio = psi0.boundary_ratio();
    if ratio > CONTAINMENT_RATIO {
        return Err(Error::InvalidArgument(format!(
            "initial state touches the walls: edge/peak ratio {ratio:e}"
        )));
    }
    let every = opts.record_every.max(1);
    let dt = (t_end - psi0.t) / n_steps as f64;
    let t0 = psi0.t;
    let mut psi = psi0.amps.clone();
    let mut states = vec![psi0.clone()];
    let mut warned = false;
    for step in 0..n_steps {
        let t = t0 + dt * step as f64;
        let t_next = if step + 1 == n_steps { t_end } else { t0 + dt * (step + 1) as f64 };
        let h = Tridiagonal::hamiltonian(&psi0.grid, &s.hamiltonian_coeffs(0.5 * (t + t_next))?);
        let half = I * (0.5 * (t_next - t));
        let rhs = h.affine(Complex64::new(1.0, 0.0), -half).apply(&psi);
        psi = h.affine(Complex64::new(1.0, 0.0), half).solve(&rhs)?;
        let state = WaveState {
            grid: psi0.grid,
            amps: psi.clone(),
            t: t_next,
        };
        let ratio = state.boundary_ratio();
        if ratio > REFLECTION_RATIO {
            return Err(Error::BoundaryReflection { t: t_next, ratio });
        }
        if ratio > CONTAINMENT_RATIO && !warned {
            warn!("state reaches the walls at t = {t_next}: edge/peak ratio {ratio:e}");
            warned = true;
        }
        if (step + 1) % every == 0 || step + 1 == n_steps {
            states.push(state);
        }
    }
    Trajectory::new(states)
}

/// Band-limited interpolation of `amps` at the points `targets`; zero
/// outside the grid.
fn interpolate(grid: &SpatialGrid, coeffs: &[Complex64], targets: &[f64]) -> Vec<Complex64> {
    let n = grid.n;
    let half = n / 2;
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * grid.dx);
    let hi = grid.x_max();
    let scale = 1.0 / n as f64;
    targets
        .iter()
        .map(|&y| {
            if y < grid.x_min || y > hi {
                return Complex64::new(0.0, 0.0);
            }
            let s = y - grid.x_min;
            let w = Complex64::from_polar(1.0, dk * s);
            let wc = w.conj();
            let mut acc = coeffs[0];
            let mut up = w;
            let mut down = wc;
            for m in 1..half {
                acc += coeffs[m] * up + coeffs[n - m] * down;
                up *= w;
                down *= wc;
            }
            acc += coeffs[half] * (dk * half as f64 * s).cos();
            acc * scale
        })
        .collect()
}

/// Spectral weight above `|k| > k_cut` relative to the peak.
fn spectral_tail(grid: &SpatialGrid, coeffs: &[Complex64], k_cut: f64) -> f64 {
    let peak = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    grid.momenta()
        .iter()
        .zip(coeffs)
        .filter(|(k, _)| k.abs() > k_cut)
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max)
        / peak
}

/// `R(μ, ν, κ) ψ`, innermost factor first.
pub fn apply_r(psi: &WaveState, g: GaugeParams) -> Result<WaveState> {
    let grid = psi.grid;
    if psi.boundary_ratio() > CONTAINMENT_RATIO {
        return Err(Error::Headroom(format!(
            "state touches the walls: edge/peak ratio {:e}",
            psi.boundary_ratio()
        )));
    }
    let sp = Spectral::new(grid.n);
    let k = grid.momenta();
    let mut amps = psi.amps.clone();

    if g.kappa != 0.0 {
        amps = sp.multiply(&amps, &k, |k| Complex64::from_polar(1.0, g.kappa * k * k));
    }

    if g.nu != 0.0 {
        let s = g.nu.exp();
        let coeffs = sp.forward(&amps);
        let k_nyq = std::f64::consts::PI / grid.dx;
        let tail = spectral_tail(&grid, &coeffs, k_nyq / s);
        if s > 1.0 && tail > CONTAINMENT_RATIO {
            return Err(Error::Headroom(format!(
                "dilation by e^{} pushes momenta past the grid cutoff (tail {tail:e})",
                g.nu
            )));
        }
        if s < 1.0 {
            // Parts of ψ beyond e^ν times the box end up outside it.
            let (lo, hi) = (grid.x_min * s, grid.x_max() * s);
            let peak = amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let lost = grid
                .points()
                .iter()
                .zip(&amps)
                .filter(|(x, _)| **x < lo || **x > hi)
                .map(|(_, z)| z.norm())
                .fold(0.0, f64::max);
            if lost > CONTAINMENT_RATIO * peak {
                return Err(Error::Headroom(format!(
                    "dilation by e^{} pushes the state off the grid",
                    g.nu
                )));
            }
        }
        let targets: Vec<f64> = grid.points().iter().map(|x| s * x).collect();
        let amp = (0.5 * g.nu).exp();
        amps = interpolate(&grid, &coeffs, &targets)
            .into_iter()
            .map(|z| z * amp)
            .collect();
    }

    if g.mu != 0.0 {
        amps = sp.multiply(&amps, &k, |k| Complex64::from_polar(1.0, g.mu * k));
    }

    let out = WaveState {
        grid,
        amps,
        t: psi.t,
    };
    let ratio = out.boundary_ratio();
    if ratio > CONTAINMENT_RATIO {
        return Err(Error::Headroom(format!(
            "transformed state reaches the walls: edge/peak ratio {ratio:e}"
        )));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetimeDirection {
    /// `t → t'`
    Forward,
    /// `t' → t`
    Inverse,
}

/// Relabels every state through the map; amplitudes are untouched.
pub fn retime_trajectory(traj: &Trajectory, m: &TimeMap, direction: RetimeDirection) -> Result<Trajectory> {
    let mut states = traj.states.clone();
    for s in &mut states {
        s.t = match direction {
            RetimeDirection::Forward => m.to_prime(s.t)?,
            RetimeDirection::Inverse => m.from_prime(s.t)?,
        };
    }
    for w in states.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::NotInvertible {
                t: w[0].t,
                reason: "retimed stamps are not increasing".into(),
            });
        }
    }
    Ok(Trajectory {
        states,
        observables: traj.observables.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max ‖Sψ‖ / ‖ψ‖` over interior states.
    pub max: f64,
    pub dt_max: f64,
    pub dx: f64,
    /// `max / (dt_max² + dx²)`
    pub constant: f64,
}

/// `max ‖2(i∂ₜ − H)ψ‖ / ‖ψ‖` over interior states, `∂ₜ` by three-point
/// differences in the trajectory's own time labels.
pub fn residual<S: Schrodinger + ?Sized>(s: &S, traj: &Trajectory) -> Result<f64> {
    Ok(residual_report(s, traj)?.max)
}

pub fn residual_report<S: Schrodinger + ?Sized>(s: &S, traj: &Trajectory) -> Result<ResidualReport> {
    let st = &traj.states;
    if st.len() < 3 {
        return Err(Error::InvalidArgument("residual needs at least three states".into()));
    }
    let grid = st[0].grid;
    if st.iter().any(|x| x.grid != grid) {
        return Err(Error::GridMismatch("states on different grids".into()));
    }
    let mut worst = 0.0_f64;
    let mut dt_max = 0.0_f64;
    for i in 1..st.len() - 1 {
        let (a, b, c) = (&st[i - 1], &st[i], &st[i + 1]);
        let h1 = b.t - a.t;
        let h2 = c.t - b.t;
        dt_max = dt_max.max(h1).max(h2);
        let wa = -h2 / (h1 * (h1 + h2));
        let wb = (h2 - h1) / (h1 * h2);
        let wc = h1 / (h2 * (h1 + h2));
        let hmat = Tridiagonal::hamiltonian(&grid, &s.hamiltonian_coeffs(b.t)?);
        let hpsi = hmat.apply(&b.amps);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..grid.n {
            let dpsi = wa * a.amps[j] + wb * b.amps[j] + wc * c.amps[j];
            let r = 2.0 * (I * dpsi - hpsi[j]);
            num += r.norm_sqr();
            den += b.amps[j].norm_sqr();
        }
        worst = worst.max((num / den).sqrt());
    }
    Ok(ResidualReport {
        max: worst,
        dt_max,
        dx: grid.dx,
        constant: worst / (dt_max * dt_max + grid.dx * grid.dx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::conjugate_element;
    use crate::systems::{TOSystem, TQSystem, Window};
    use crate::timefn::TimeFunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> SpatialGrid {
        SpatialGrid::symmetric(12.0, n).unwrap()
    }

    fn unit_gaussian(n: usize) -> WaveState {
        WaveState::gaussian(grid(n), 0.0, 0.0, 1.0, 0.0).unwrap()
    }

    fn free(t1: f64) -> TQSystem {
        TQSystem::free(Window::new(0.0, t1).unwrap())
    }

    fn second_moment(s: &WaveState) -> f64 {
        s.grid
            .points()
            .iter()
            .zip(&s.amps)
            .map(|(x, z)| x * x * z.norm_sqr())
            .sum::<f64>()
            * s.grid.dx
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(SpatialGrid::new(0.0, 0.1, 32).is_err());
        assert!(SpatialGrid::new(0.0, 0.1, 100).is_err());
        assert!(SpatialGrid::new(0.0, 0.0, 64).is_err());
        let g = grid(64);
        assert_eq!(g.x(0), -12.0);
        assert!((g.x_max() - (12.0 - 24.0 / 64.0)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_is_normalized() {
        let s = unit_gaussian(256);
        assert!((s.norm() - 1.0).abs() < 1e-12);
        let o = s.observables();
        assert!(o.mean_x.abs() < 1e-14 && o.mean_p.abs() < 1e-12);
        assert!((o.dx - 0.5f64.sqrt()).abs() < 1e-10);
        assert!((o.dp - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn discrete_hamiltonian_is_hermitian() {
        let h = HamiltonianCoeffs {
            kinetic: 0.7,
            dilation: 0.3,
            drift: -0.2,
            x2: 0.5,
            x1: 0.1,
            x0: 0.2,
        };
        let m = Tridiagonal::hamiltonian(&grid(64), &h);
        for j in 1..64 {
            assert_eq!(m.lower[j], m.upper[j - 1].conj());
            assert_eq!(m.diag[j].im, 0.0);
        }
    }

    #[test]
    fn thomas_solve_inverts_apply() {
        let h = HamiltonianCoeffs {
            kinetic: 0.5,
            dilation: 0.2,
            drift: 0.1,
            x2: 0.3,
            ..Default::default()
        };
        let m = Tridiagonal::hamiltonian(&grid(128), &h).affine(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.01));
        let v = unit_gaussian(128).amps;
        let back = m.solve(&m.apply(&v)).unwrap();
        let err = back.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn free_spreading() {
        let traj = propagate(&free(1.0), &unit_gaussian(2048), 1.0, 1000).unwrap();
        let x2 = second_moment(traj.last());
        assert!((x2 - 1.0).abs() < 1e-4, "<x^2>(1) = {x2}");
        assert!(traj.max_norm_drift() < 1e-8);
    }

    #[test]
    fn one_small_step_is_consistent() {
        let psi = unit_gaussian(256);
        let s = free(1.0);
        let mut prev = f64::INFINITY;
        for dt in [1e-2, 1e-3, 1e-4] {
            let traj = propagate(&s, &psi, dt, 1).unwrap();
            let d = traj.last().distance(&psi).unwrap();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn second_order_in_time() {
        let s = TQSystem::new(
            Window::new(0.0, 1.0).unwrap(),
            TimeFunction::poly(vec![0.0, 0.3]),
            TimeFunction::constant(0.2),
            TimeFunction::constant(0.1),
            TimeFunction::poly(vec![0.5, -0.2]),
            TimeFunction::zero(),
            TimeFunction::zero(),
        )
        .unwrap();
        let psi = WaveState::gaussian(grid(256), 0.5, 0.3, 1.0, 0.0).unwrap();
        let run = |n| propagate(&s, &psi, 1.0, n).unwrap().last().clone();
        let (a, b, c) = (run(25), run(50), run(100));
        let ratio = a.distance(&b).unwrap() / b.distance(&c).unwrap();
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn coherent_state_oscillates() {
        let to = TOSystem::harmonic(Window::new(0.0, 7.0).unwrap(), 1.0);
        let x0 = 1.5;
        // second differences shift the frequency by O(dx²); n = 4096 keeps
        // the accumulated phase error below 1e-4 over a period
        let psi = WaveState::gaussian(grid(4096), x0, 0.0, 1.0, 0.0).unwrap();
        let period = 2.0 * std::f64::consts::PI;
        let traj = propagate_with(&to, &psi, period, 4000, PropagateOptions { record_every: 40 }).unwrap();
        let worst = traj
            .states
            .iter()
            .zip(&traj.observables)
            .map(|(s, o)| (o.mean_x - x0 * s.t.cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst:e}");
    }

    #[test]
    fn reflection_is_an_error() {
        let psi = WaveState::gaussian(SpatialGrid::symmetric(6.0, 128).unwrap(), 0.0, 8.0, 0.5, 0.0).unwrap();
        let err = propagate(&free(2.0), &psi, 2.0, 200).unwrap_err();
        assert!(matches!(err, Error::BoundaryReflection { .. }), "{err:?}");
        let edge = WaveState::gaussian(grid(128), 11.0, 0.0, 1.0, 0.0).unwrap();
        assert!(propagate(&free(1.0), &edge, 1.0, 10).is_err());
    }

    #[test]
    fn apply_r_identity() {
        let psi = WaveState::gaussian(grid(256), 0.3, 0.2, 1.1, 0.0).unwrap();
        let out = apply_r(&psi, GaugeParams::identity()).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn apply_r_dilation_of_gaussian() {
        let psi = unit_gaussian(512);
        let nu: f64 = 0.3;
        let out = apply_r(&psi, GaugeParams::new(0.0, nu, 0.0)).unwrap();
        let e2 = (2.0 * nu).exp();
        let pref = (0.5 * nu).exp() * std::f64::consts::PI.powf(-0.25);
        for (x, z) in psi.grid.points().iter().zip(&out.amps) {
            let want = pref * (-0.5 * e2 * x * x).exp();
            assert!((z - want).norm() < 1e-6, "x={x}");
        }
        assert!((out.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn apply_r_shift_and_chirp() {
        let psi = unit_gaussian(512);
        let out = apply_r(&psi, GaugeParams::new(0.7, 0.0, 0.0)).unwrap();
        let want = WaveState::gaussian(psi.grid, -0.7, 0.0, 1.0, 0.0).unwrap();
        assert!(out.distance(&want).unwrap() < 1e-10);
        // e^{iκP²} is free evolution for time −2κ
        let chirped = apply_r(&psi, GaugeParams::new(0.0, 0.0, 0.25)).unwrap();
        let sigma2 = second_moment(&chirped);
        assert!((sigma2 - 0.5 * (1.0 + 0.25)).abs() < 1e-10);
    }

    #[test]
    fn apply_r_headroom() {
        let wide = WaveState::gaussian(grid(256), 0.0, 0.0, 2.0, 0.0).unwrap();
        assert!(matches!(
            apply_r(&wide, GaugeParams::new(0.0, -1.0, 0.0)),
            Err(Error::Headroom(_))
        ));
        let sharp = WaveState::gaussian(grid(64), 0.0, 0.0, 0.5, 0.0).unwrap();
        assert!(matches!(
            apply_r(&sharp, GaugeParams::new(0.0, 2.0, 0.0)),
            Err(Error::Headroom(_))
        ));
    }

    #[test]
    fn apply_r_matches_conjugation_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // room for the κ spreading and a ν = −0.5 contraction of the box
        let g = SpatialGrid::symmetric(40.0, 2048).unwrap();
        for _ in 0..100 {
            let psi = WaveState::gaussian(
                g,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.8..1.3),
                0.0,
            )
            .unwrap();
            let params = GaugeParams::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-1.0..1.0),
            );
            let r = apply_r(&psi, params).unwrap();
            assert!((r.norm() - psi.norm()).abs() < 1e-6);
            for op in [BasisOp::X, BasisOp::P, BasisOp::X2, BasisOp::P2, BasisOp::D] {
                let a = AlgebraElement::basis(op);
                let before = psi.expectation(&a);
                let after = r.expectation(&conjugate_element(&a, params));
                assert!((before - after).norm() < 1e-6, "{op:?} {params:?}: {before} vs {after}");
            }
        }
    }

    #[test]
    fn retime_round_trip() {
        let traj = propagate(&free(1.0), &unit_gaussian(128), 1.0, 10).unwrap();
        let same = retime_trajectory(&traj, &TimeMap::identity(), RetimeDirection::Forward).unwrap();
        assert_eq!(same, traj);
        let m = TimeMap::new(
            TimeFunction::sum(vec![TimeFunction::exp(1.0, 1.0, 0.0), TimeFunction::constant(-1.0)]),
            TimeFunction::log(1.0, 0.0, 1.0),
            0.0,
            0.0,
        )
        .unwrap();
        let fwd = retime_trajectory(&traj, &m, RetimeDirection::Forward).unwrap();
        let back = retime_trajectory(&fwd, &m, RetimeDirection::Inverse).unwrap();
        for (a, b) in back.states.iter().zip(&traj.states) {
            assert!((a.t - b.t).abs() < 1e-9);
        }
        assert_eq!(back.observables, traj.observables);
    }

    #[test]
    fn residual_of_propagated_trajectory_is_small() {
        let to = TOSystem::harmonic(Window::new(0.0, 1.0).unwrap(), 1.0);
        let psi = WaveState::gaussian(grid(256), 1.0, 0.0, 0.9, 0.0).unwrap();
        let coarse = residual_report(&to, &propagate(&to, &psi, 1.0, 100).unwrap()).unwrap();
        let fine = residual_report(&to, &propagate(&to, &psi, 1.0, 200).unwrap()).unwrap();
        assert!(coarse.max < 1e-3, "{coarse:?}");
        assert!(coarse.max / fine.max > 3.0);
        // measured against the wrong equation it is large
        let wrong = free(1.0);
        assert!(residual(&wrong, &propagate(&to, &psi, 1.0, 100).unwrap()).unwrap() > 0.1);
    }

    #[test]
    fn csv_and_amplitude_dump() {
        let traj = propagate(&free(1.0), &unit_gaussian(64), 0.5, 2).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,norm,mean_x,mean_p,dx,dp\n"));
        assert_eq!(csv.lines().count(), 4);
        let mut buf = Vec::new();
        traj.write_amplitudes(&mut buf).unwrap();
        assert_eq!(buf.len(), 3 * 64 * 8);
    }
}
