//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; the page parses it and draws on a
//! canvas.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qxform::examples::{
    example1_systems, example2_degeneracy_check, example2_systems, DegeneracyReport, Example1Params, Example2Params,
    ExampleSystems,
};
use qxform::propagate::{apply_r, propagate_with, PropagateOptions, SpatialGrid, WaveState};
use qxform::Result;

/// Time-map and coefficient curves sampled along the TQ window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curves {
    pub t: Vec<f64>,
    pub t_prime: Vec<f64>,
    pub nu: Vec<f64>,
    pub f: Vec<f64>,
    /// `g₂` at `t'(t)`.
    pub g2: Vec<f64>,
}

fn curves(ex: &ExampleSystems, n: usize) -> Result<Curves> {
    let t = ex.tq.window.grid(n.max(2));
    let mut c = Curves {
        t: t.clone(),
        t_prime: Vec::with_capacity(t.len()),
        nu: Vec::with_capacity(t.len()),
        f: Vec::with_capacity(t.len()),
        g2: Vec::with_capacity(t.len()),
    };
    for &s in &t {
        let tp = ex.map.to_prime(s)?;
        c.t_prime.push(tp);
        c.nu.push(ex.gauge.nu.eval(s)?);
        c.f.push(ex.tm.f.eval(s)?);
        c.g2.push(ex.to.g2.eval(tp.min(ex.to.window.hi))?);
    }
    Ok(c)
}

pub fn example1_curves(upsilon: f64, omega: f64, n: usize) -> Result<Curves> {
    let mut p = Example1Params::new(upsilon, omega, 0.0);
    if upsilon < 0.0 {
        // stay clear of the end of the map's range
        p.span = p.span.min(0.95 / upsilon.abs());
    }
    curves(&example1_systems(p)?, n)
}

pub fn example2_curves(a: f64, b: f64, omega: f64, t0: f64, n: usize) -> Result<Curves> {
    curves(&example2_systems(Example2Params::new(a, b, omega, t0))?, n)
}

pub fn degeneracy(a_values: &[f64], omega: f64, t0: f64) -> Result<DegeneracyReport> {
    example2_degeneracy_check(a_values, omega, t0)
}

/// Densities of `R Φ` (Φ evolved under TQ) and of Θ (evolved under TM).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityFrames {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub tq: Vec<Vec<f64>>,
    pub tm: Vec<Vec<f64>>,
    /// `‖RΦ − Θ‖` per frame.
    pub l2: Vec<f64>,
}

const DEMO_POINTS: usize = 512;
const DEMO_HALF_WIDTH: f64 = 12.0;
const STEPS_PER_UNIT: f64 = 400.0;

pub fn density_evolution(upsilon: f64, omega: f64, x0: f64, t_end: f64, frames: usize) -> Result<DensityFrames> {
    let ex = example1_systems(Example1Params::new(upsilon, omega, 0.0))?;
    let grid = SpatialGrid::symmetric(DEMO_HALF_WIDTH, DEMO_POINTS)?;
    let psi0 = WaveState::gaussian(grid, x0, 0.0, 1.0, 0.0)?;
    let steps = ((t_end * STEPS_PER_UNIT).ceil() as usize).max(1);
    let frames = frames.clamp(1, steps);
    let opts = PropagateOptions {
        record_every: (steps / frames).max(1),
    };
    let phi = propagate_with(&ex.tq, &psi0, t_end, steps, opts)?;
    let theta = propagate_with(&ex.tm, &psi0, t_end, steps, opts)?;
    let density = |s: &WaveState| s.amps.iter().map(|z| z.norm_sqr()).collect::<Vec<f64>>();
    let mut out = DensityFrames {
        x: grid.points(),
        times: Vec::new(),
        tq: Vec::new(),
        tm: Vec::new(),
        l2: Vec::new(),
    };
    for (p, q) in phi.states.iter().zip(&theta.states) {
        let r_phi = apply_r(p, ex.gauge.params_at(p.t)?)?;
        out.times.push(p.t);
        out.l2.push(r_phi.distance(q)?);
        out.tq.push(density(&r_phi));
        out.tm.push(density(q));
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = example1Curves)]
pub fn example1_curves_js(upsilon: f64, omega: f64, n: usize) -> std::result::Result<String, JsError> {
    to_js(example1_curves(upsilon, omega, n))
}

#[wasm_bindgen(js_name = example2Curves)]
pub fn example2_curves_js(a: f64, b: f64, omega: f64, t0: f64, n: usize) -> std::result::Result<String, JsError> {
    to_js(example2_curves(a, b, omega, t0, n))
}

#[wasm_bindgen(js_name = degeneracy)]
pub fn degeneracy_js(a_values: Vec<f64>, omega: f64, t0: f64) -> std::result::Result<String, JsError> {
    to_js(degeneracy(&a_values, omega, t0))
}

#[wasm_bindgen(js_name = densityEvolution)]
pub fn density_evolution_js(
    upsilon: f64,
    omega: f64,
    x0: f64,
    t_end: f64,
    frames: usize,
) -> std::result::Result<String, JsError> {
    to_js(density_evolution(upsilon, omega, x0, t_end, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_map_starts_at_zero_and_increases() {
        let c = example1_curves(0.1, 1.0, 50).unwrap();
        assert_eq!(c.t_prime[0], 0.0);
        assert!(c.t_prime.windows(2).all(|w| w[1] > w[0]));
        assert!((c.g2[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn example1_negative_upsilon_stays_in_range() {
        let c = example1_curves(-0.5, 1.0, 50).unwrap();
        assert!(*c.t_prime.last().unwrap() < 2.0);
    }

    #[test]
    fn example2_curves_have_matching_lengths() {
        let c = example2_curves(2.0, -2.0, 1.0, 1.0, 40).unwrap();
        assert_eq!(c.t.len(), 40);
        assert_eq!(c.g2.len(), 40);
        assert!(c.g2.iter().all(|g| (g - 0.5).abs() < 1e-9));
    }

    #[test]
    fn degeneracy_curves_coincide() {
        let r = degeneracy(&[0.5, 2.0], 1.0, 1.0).unwrap();
        assert!(r.max_pairwise_deviation < 1e-7);
        assert!(degeneracy(&[], 1.0, 1.0).is_err());
    }

    #[test]
    fn densities_agree_after_gauge() {
        let d = density_evolution(0.1, 1.0, 1.0, 0.5, 5).unwrap();
        assert_eq!(d.tq.len(), d.times.len());
        assert_eq!(d.x.len(), DEMO_POINTS);
        assert!(d.l2.iter().all(|e| *e < 1e-2), "{:?}", d.l2);
    }

    #[test]
    fn invalid_parameters_are_errors() {
        assert!(example2_curves(0.0, 1.0, 1.0, 1.0, 10).is_err());
        assert!(example1_curves(0.1, -1.0, 10).is_err());
    }
}
