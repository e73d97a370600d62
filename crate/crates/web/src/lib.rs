//! Browser bindings for the wavemap solver.
//!
//! The plain functions are ordinary Rust and are tested natively; the
//! `#[wasm_bindgen]` items are thin wrappers that convert errors for JS.

use wasm_bindgen::prelude::*;
use wavemap_core::harness::{ControllerParams, Mode, Store};
use wavemap_core::{run, RunConfig, Strategy, Trajectory, VecField};

/// Largest grid the page will ask for; keeps a click under a second.
pub const MAX_CELLS: usize = 64;

fn base_config(cells: usize, t_end: f64) -> Result<RunConfig, String> {
    if !(4..=MAX_CELLS).contains(&cells) {
        return Err(format!("grid must be between 4 and {MAX_CELLS} cells"));
    }
    Ok(RunConfig {
        cells,
        t_end,
        snapshots: Some(Vec::new()),
        ..RunConfig::default()
    })
}

fn checked_run(cfg: &RunConfig) -> Result<Trajectory, String> {
    cfg.validate().map_err(|e| e.to_string())?;
    run(cfg).map_err(|e| e.to_string())
}

/// Colour for a unit vector: the components mapped from [-1, 1] to [0, 255].
pub fn colour(v: [f64; 3]) -> [u8; 3] {
    v.map(|c| (127.5 * (c.clamp(-1.0, 1.0) + 1.0)).round() as u8)
}

/// RGBA image of a field, one pixel per node, row 0 at the top (largest y).
pub fn render(u: &VecField, nodes: usize) -> Vec<u8> {
    let mut px = Vec::with_capacity(4 * nodes * nodes);
    for row in 0..nodes {
        let j = nodes - 1 - row;
        for i in 0..nodes {
            let [r, g, b] = colour(u[j * nodes + i]);
            px.extend_from_slice(&[r, g, b, 255]);
        }
    }
    px
}

/// A fixed-step bubble simulation with every accepted state kept.
pub struct Movie {
    nodes: usize,
    times: Vec<f64>,
    frames: Vec<VecField>,
}

impl Movie {
    pub fn simulate(cells: usize, tau: f64, t_end: f64) -> Result<Self, String> {
        let cfg = RunConfig {
            mode: Mode::FixedTau(tau),
            store: Store::All,
            estimate: false,
            ..base_config(cells, t_end)?
        };
        let traj = checked_run(&cfg)?;
        Ok(Self {
            nodes: cells + 1,
            times: traj.states.iter().map(|s| s.t).collect(),
            frames: traj.states.into_iter().map(|s| s.u).collect(),
        })
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k.min(self.times.len() - 1)]
    }

    pub fn rgba(&self, k: usize) -> Vec<u8> {
        render(&self.frames[k.min(self.frames.len() - 1)], self.nodes)
    }
}

/// Estimator history of a fixed-step run as `(t, cumulative int alpha, B)`
/// triples, flattened.
pub fn estimator_curve(cells: usize, tau: f64, t_end: f64) -> Result<Vec<f64>, String> {
    let cfg = RunConfig {
        mode: Mode::FixedTau(tau),
        ..base_config(cells, t_end)?
    };
    let traj = checked_run(&cfg)?;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(3 * traj.estimator.history.len());
    for e in &traj.estimator.history {
        acc += e.int_alpha;
        out.extend_from_slice(&[e.t, acc, e.bound]);
    }
    Ok(out)
}

/// Controller trace of an adaptive run as `(t, tau, accepted)` triples,
/// flattened; `accepted` is 1 or 0.
pub fn adaptive_trace(
    cells: usize,
    strategy: &str,
    tol0: f64,
    t_end: f64,
) -> Result<Vec<f64>, String> {
    let strategy: Strategy = strategy
        .parse()
        .map_err(|e: wavemap_core::Error| e.to_string())?;
    let cfg = RunConfig {
        mode: Mode::Adaptive(ControllerParams::new(strategy, tol0)),
        ..base_config(cells, t_end)?
    };
    let traj = checked_run(&cfg)?;
    let mut out = Vec::with_capacity(3 * traj.trace.len());
    for e in &traj.trace {
        let ok = if e.verdict.as_str() == "accept" {
            1.0
        } else {
            0.0
        };
        out.extend_from_slice(&[e.t, e.tau, ok]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct Simulation(Movie);

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(cells: usize, tau: f64, t_end: f64) -> Result<Simulation, JsError> {
        Movie::simulate(cells, tau, t_end)
            .map(Simulation)
            .map_err(|e| JsError::new(&e))
    }

    pub fn frames(&self) -> usize {
        self.0.frames()
    }

    pub fn nodes(&self) -> usize {
        self.0.nodes
    }

    pub fn time(&self, k: usize) -> f64 {
        self.0.time(k)
    }

    pub fn rgba(&self, k: usize) -> Vec<u8> {
        self.0.rgba(k)
    }
}

#[wasm_bindgen(js_name = estimatorCurve)]
pub fn estimator_curve_js(cells: usize, tau: f64, t_end: f64) -> Result<Vec<f64>, JsError> {
    estimator_curve(cells, tau, t_end).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = adaptiveTrace)]
pub fn adaptive_trace_js(
    cells: usize,
    strategy: &str,
    tol0: f64,
    t_end: f64,
) -> Result<Vec<f64>, JsError> {
    adaptive_trace(cells, strategy, tol0, t_end).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colours_span_the_range() {
        assert_eq!(colour([-1.0, 0.0, 1.0]), [0, 128, 255]);
        assert_eq!(colour([-3.0, 0.0, 3.0]), [0, 128, 255]);
    }

    #[test]
    fn movie_frames() {
        let m = Movie::simulate(8, 0.01, 0.05).unwrap();
        assert_eq!(m.frames(), 6);
        assert_eq!(m.time(0), 0.0);
        assert!((m.time(99) - 0.05).abs() < 1e-12);
        let px = m.rgba(0);
        assert_eq!(px.len(), 4 * 81);
        // the bubble points down (u3 = -1) at the corners
        assert_eq!(&px[..4], &[128, 128, 0, 255]);
    }

    #[test]
    fn estimator_curve_is_monotone() {
        let c = estimator_curve(8, 0.01, 0.05).unwrap();
        assert_eq!(c.len(), 15);
        // one row per step, stamped with the step's end time
        assert!((c[0] - 0.01).abs() < 1e-15);
        assert!((c[12] - 0.05).abs() < 1e-12);
        for k in 1..5 {
            assert!(c[3 * k] > c[3 * (k - 1)]);
            assert!(c[3 * k + 1] >= c[3 * (k - 1) + 1]);
            assert!(c[3 * k + 2] >= c[3 * (k - 1) + 2]);
        }
    }

    #[test]
    fn adaptive_trace_reaches_end() {
        let t = adaptive_trace(8, "updated", 1e-3, 0.02).unwrap();
        assert_eq!(t.len() % 3, 0);
        let last = &t[t.len() - 3..];
        // accepted steps are stamped with their end time
        assert!((last[0] - 0.02).abs() < 1e-12, "{}", last[0]);
        assert_eq!(last[2], 1.0);
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(Movie::simulate(2, 0.01, 0.1).is_err());
        assert!(Movie::simulate(8, -0.01, 0.1).is_err());
        assert!(adaptive_trace(8, "sometimes", 1e-3, 0.1).is_err());
    }
}
