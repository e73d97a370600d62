//! Simulation driver, run configuration and convergence studies.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::adapt::{write_trace_csv, AdaptiveController, Decision, Strategy, TraceEntry, Verdict};
use crate::error::{Error, Result};
use crate::estimator::{estimate_step, EstimatorState, StepEstimate};
use crate::grid::{Grid2D, MomentumField, SphereField, VecField};
use crate::io;
use crate::reconstruct::eval_residuals;
use crate::scheme::{constraint_defects, energy, step, InitialData, SolverConfig, StepRecord};

/// Times of the bubble snapshot figure; scaled into `[0, t_end]` when no
/// explicit schedule is given.
const SNAPSHOT_TIMES: [f64; 8] = [0.0, 0.049, 0.098, 0.147, 0.205, 0.254, 0.303, 0.352];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub strategy: Strategy,
    pub tol0: f64,
    pub grow: f64,
    pub shrink: f64,
    pub safety: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_init: f64,
}

impl ControllerParams {
    pub fn new(strategy: Strategy, tol0: f64) -> Self {
        let c = AdaptiveController::new(strategy, tol0);
        Self {
            strategy,
            tol0,
            grow: c.grow,
            shrink: c.shrink,
            safety: c.safety,
            tau_min: c.tau_min,
            tau_max: c.tau_max,
            tau_init: 2f64.powi(-10),
        }
    }

    pub fn controller(&self) -> AdaptiveController {
        let mut c = AdaptiveController::new(self.strategy, self.tol0);
        c.grow = self.grow;
        c.shrink = self.shrink;
        c.safety = self.safety;
        c.tau_min = self.tau_min;
        c.tau_max = self.tau_max;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    FixedTau(f64),
    Adaptive(ControllerParams),
}

/// Which accepted states a run keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Store {
    /// Every accepted state.
    All,
    /// States whose time is an integer multiple of the stride.
    Every(f64),
    /// Initial and final state only.
    Ends,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cells: usize,
    pub mode: Mode,
    pub t_end: f64,
    pub solver: SolverConfig,
    /// Initial error bound `B_0`.
    pub b0: f64,
    pub data: InitialData,
    pub out_dir: Option<PathBuf>,
    /// Snapshot times; `None` uses the default schedule scaled to `t_end`.
    pub snapshots: Option<Vec<f64>>,
    pub store: Store,
    /// Evaluate the error estimator on every step.
    pub estimate: bool,
    /// Dump residual fields of the step containing this time.
    pub dump_residuals: Option<f64>,
    /// Smallest sub-step allowed when a fixed step has to be subdivided.
    pub tau_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cells: 32,
            mode: Mode::FixedTau(2f64.powi(-9)),
            t_end: 0.2,
            solver: SolverConfig::default(),
            b0: 0.0,
            data: InitialData::Bubble,
            out_dir: None,
            snapshots: None,
            store: Store::Ends,
            estimate: true,
            dump_residuals: None,
            tau_floor: 2f64.powi(-20),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 cells, got {}",
                self.cells
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "tend must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.b0 >= 0.0) {
            return Err(Error::Config(format!(
                "b0 must be nonnegative, got {}",
                self.b0
            )));
        }
        self.solver.validate()?;
        match self.mode {
            Mode::FixedTau(tau) => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::Config(format!("tau must be positive, got {tau}")));
                }
            }
            Mode::Adaptive(p) => {
                p.controller().validate()?;
                if !(p.tau_init > 0.0) {
                    return Err(Error::Config("tau_init must be positive".into()));
                }
            }
        }
        if let Store::Every(s) = self.store {
            if !(s > 0.0) {
                return Err(Error::Config("store stride must be positive".into()));
            }
        }
        Ok(())
    }

    fn snapshot_times(&self) -> Vec<f64> {
        let mut v = match &self.snapshots {
            Some(v) => v.clone(),
            None => {
                let last = SNAPSHOT_TIMES[SNAPSHOT_TIMES.len() - 1];
                SNAPSHOT_TIMES
                    .iter()
                    .map(|s| s / last * self.t_end)
                    .collect()
            }
        };
        v.sort_by(f64::total_cmp);
        v
    }

    /// Builds a config from `key = value` pairs; later pairs win.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut mode = "fixed".to_string();
        let mut tau: Option<f64> = None;
        let mut strategy = Strategy::UpdatedTolerance;
        let mut tol0: Option<f64> = None;
        let mut ctl: Vec<(&str, f64)> = Vec::new();

        for (key, value) in pairs {
            let key = key.trim();
            let value = value.trim();
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("{key}: '{value}' is not a number")))
            };
            match key {
                "grid" | "M" => {
                    cfg.cells = value
                        .parse()
                        .map_err(|_| Error::Config(format!("grid: '{value}' is not an integer")))?
                }
                "mode" => mode = value.to_ascii_lowercase(),
                "tau" => tau = Some(num()?),
                "tend" => cfg.t_end = num()?,
                "strategy" => strategy = value.parse()?,
                "tol0" => tol0 = Some(num()?),
                "grow" | "shrink" | "safety" | "tau_min" | "tau_max" | "tau_init" => {
                    ctl.push((key_static(key), num()?))
                }
                "fp_tol" => cfg.solver.fp_tol = num()?,
                "fp_max_iter" => {
                    cfg.solver.fp_max_iter = value
                        .parse()
                        .map_err(|_| Error::Config(format!("fp_max_iter: '{value}'")))?
                }
                "unit_tol" => cfg.solver.unit_tol = num()?,
                "c_q" => cfg.solver.c_q = num()?,
                "p_exp" => cfg.solver.p_exp = num()?,
                "b0" => cfg.b0 = num()?,
                "data" => cfg.data = parse_data(value)?,
                "out" => cfg.out_dir = Some(PathBuf::from(value)),
                "snapshots" => cfg.snapshots = Some(parse_list(value)?),
                "store_every" => cfg.store = Store::Every(num()?),
                "store" => {
                    cfg.store = match value {
                        "all" => Store::All,
                        "ends" => Store::Ends,
                        _ => Store::Every(num()?),
                    }
                }
                "estimate" => {
                    cfg.estimate = value
                        .parse()
                        .map_err(|_| Error::Config(format!("estimate: '{value}'")))?
                }
                "dump_residuals" => cfg.dump_residuals = Some(num()?),
                "tau_floor" => cfg.tau_floor = num()?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }

        cfg.mode = match mode.as_str() {
            "fixed" => Mode::FixedTau(tau.unwrap_or(2f64.powi(-9))),
            "adaptive" => {
                let tol0 = tol0.unwrap_or(match strategy {
                    Strategy::Equidistribute => 1e-4,
                    Strategy::UpdatedTolerance => 1e-6,
                });
                let mut p = ControllerParams::new(strategy, tol0);
                if let Some(t) = tau {
                    p.tau_init = t;
                }
                for (k, v) in ctl {
                    match k {
                        "grow" => p.grow = v,
                        "shrink" => p.shrink = v,
                        "safety" => p.safety = v,
                        "tau_min" => p.tau_min = v,
                        "tau_max" => p.tau_max = v,
                        _ => p.tau_init = v,
                    }
                }
                Mode::Adaptive(p)
            }
            other => return Err(Error::Config(format!("unknown mode '{other}'"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn key_static(k: &str) -> &'static str {
    match k {
        "grow" => "grow",
        "shrink" => "shrink",
        "safety" => "safety",
        "tau_min" => "tau_min",
        "tau_max" => "tau_max",
        _ => "tau_init",
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.eq_ignore_ascii_case("none") || s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number '{t}' in list")))
        })
        .collect()
}

fn parse_data(s: &str) -> Result<InitialData> {
    match s.to_ascii_lowercase().as_str() {
        "bubble" => Ok(InitialData::Bubble),
        "constant" => Ok(InitialData::Constant([0.0, 0.0, 1.0])),
        "rotation" => Ok(InitialData::Rotation {
            u: [1.0, 0.0, 0.0],
            w: [0.0, 0.0, 1.0],
        }),
        other => Err(Error::Config(format!("unknown initial data '{other}'"))),
    }
}

/// Parses the flat `key = value` format. Blank lines and `#` comments are
/// skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: VecField,
    pub w: VecField,
}

/// Per-step health numbers of the scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub tau: f64,
    pub energy: f64,
    pub unit_defect: f64,
    pub orth_defect: f64,
    pub iters: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid2D,
    pub t_end: f64,
    pub states: Vec<State>,
    pub estimator: EstimatorState,
    pub trace: Vec<TraceEntry>,
    /// Row 0 is the initial state.
    pub diagnostics: Vec<Diagnostics>,
    /// First step start at which the bounds stopped being applicable
    /// (fixed-step runs only; adaptive runs reject such steps instead).
    pub estimator_stopped: Option<f64>,
    pub final_tol: Option<f64>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.diagnostics.last().map_or(0.0, |d| d.t)
    }

    pub fn accepted_steps(&self) -> usize {
        self.diagnostics.len() - 1
    }

    pub fn rejected_steps(&self) -> usize {
        self.trace
            .iter()
            .filter(|e| e.verdict != Verdict::Accept)
            .count()
    }

    pub fn max_unit_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.unit_defect)
            .fold(0.0, f64::max)
    }

    /// Largest `|E(t) - E(0)| / E(0)` over the run.
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.diagnostics[0].energy;
        let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
        self.diagnostics
            .iter()
            .map(|d| (d.energy - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn write_diagnostics_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "tau", "energy", "unit_defect", "orth_defect", "iters"])?;
        for d in &self.diagnostics {
            w.write_record([
                format!("{:e}", d.t),
                format!("{:e}", d.tau),
                format!("{:e}", d.energy),
                format!("{:e}", d.unit_defect),
                format!("{:e}", d.orth_defect),
                d.iters.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

struct Driver<'a> {
    cfg: &'a RunConfig,
    g: Grid2D,
    u: SphereField,
    w: MomentumField,
    lap_u: VecField,
    t: f64,
    estimator: EstimatorState,
    trace: Vec<TraceEntry>,
    diagnostics: Vec<Diagnostics>,
    states: Vec<State>,
    estimator_stopped: Option<f64>,
    snapshots: Vec<f64>,
    next_snapshot: usize,
    residuals_dumped: bool,
}

impl<'a> Driver<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let g = Grid2D::new(cfg.cells)?;
        let (u, w) = cfg.data.build(&g)?;
        if let Some(dir) = &cfg.out_dir {
            fs::create_dir_all(dir.join("snapshots"))?;
        }
        let lap_u = g.laplacian(&u);
        let (ud, od) = constraint_defects(&u, &w);
        let diag = Diagnostics {
            t: 0.0,
            tau: 0.0,
            energy: energy(&u, &w, &g),
            unit_defect: ud,
            orth_defect: od,
            iters: 0,
        };
        let mut d = Self {
            cfg,
            states: vec![State {
                t: 0.0,
                u: (*u).clone(),
                w: (*w).clone(),
            }],
            g,
            u,
            w,
            lap_u,
            t: 0.0,
            estimator: EstimatorState::new(cfg.b0),
            trace: Vec::new(),
            diagnostics: vec![diag],
            estimator_stopped: None,
            snapshots: cfg.snapshot_times(),
            next_snapshot: 0,
            residuals_dumped: false,
        };
        d.take_snapshots(0.0)?;
        Ok(d)
    }

    fn try_step(&self, tau: f64) -> Result<Option<crate::scheme::StepOutcome>> {
        match step(&self.u, &self.w, tau, &self.cfg.solver, &self.g) {
            Ok(o) => Ok(Some(o)),
            Err(Error::NonConvergence(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn record(&self, tau: f64, u: SphereField, w: MomentumField) -> StepRecord {
        StepRecord::with_lap_n(
            &self.g,
            self.t,
            tau,
            self.u.clone(),
            self.w.clone(),
            self.lap_u.clone(),
            u,
            w,
        )
    }

    fn accept(&mut self, rec: StepRecord, est: Option<&StepEstimate>, iters: usize) -> Result<()> {
        if let Some(e) = est {
            self.estimator
                .push(rec.t_np1, rec.tau, e.alpha_hat, e.delta_hat);
        }
        if let (Some(td), false) = (self.cfg.dump_residuals, self.residuals_dumped) {
            if rec.t_n <= td && td <= rec.t_np1 {
                self.dump_residuals(&rec, td)?;
                self.residuals_dumped = true;
            }
        }
        let tau = rec.tau;
        self.t = rec.t_np1;
        self.u = rec.u_np1;
        self.w = rec.w_np1;
        self.lap_u = rec.lap_u_np1;
        let (ud, od) = constraint_defects(&self.u, &self.w);
        self.diagnostics.push(Diagnostics {
            t: self.t,
            tau,
            energy: energy(&self.u, &self.w, &self.g),
            unit_defect: ud,
            orth_defect: od,
            iters,
        });
        let keep = match self.cfg.store {
            Store::All => true,
            Store::Every(s) => {
                let q = self.t / s;
                (q - q.round()).abs() < 1e-9
            }
            Store::Ends => false,
        };
        if keep {
            self.store_current();
        }
        self.take_snapshots(tau)
    }

    fn store_current(&mut self) {
        self.states.push(State {
            t: self.t,
            u: (*self.u).clone(),
            w: (*self.w).clone(),
        });
    }

    fn take_snapshots(&mut self, tau: f64) -> Result<()> {
        while self.next_snapshot < self.snapshots.len()
            && self.snapshots[self.next_snapshot] <= self.t + 1e-12
        {
            if let Some(dir) = &self.cfg.out_dir {
                let stem = dir
                    .join("snapshots")
                    .join(format!("snap_{:02}", self.next_snapshot));
                self.write_checkpoint(&stem, tau)?;
            }
            self.next_snapshot += 1;
        }
        Ok(())
    }

    fn write_checkpoint(&self, stem: &Path, tau: f64) -> Result<()> {
        let with = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        io::save_field(&with("_u.wmf"), &self.g, &self.u)?;
        io::save_field(&with("_w.wmf"), &self.g, &self.w)?;
        io::write_field_csv(
            &self.g,
            &self.u,
            BufWriter::new(fs::File::create(with("_u.csv"))?),
        )?;
        fs::write(with(".txt"), io::sidecar_line(self.t, tau) + "\n")?;
        Ok(())
    }

    fn dump_residuals(&self, rec: &StepRecord, t: f64) -> Result<()> {
        let Some(dir) = &self.cfg.out_dir else {
            return Ok(());
        };
        let dir = dir.join("residuals");
        fs::create_dir_all(&dir)?;
        let s = eval_residuals(rec, t, &self.g)?;
        let grads = VecField::from_values(
            &self.g,
            (0..self.g.len())
                .map(|k| [s.grad_r_u1[k], s.grad_r_u2[k], s.grad_r_u3[k]])
                .collect(),
        )?;
        let grad_total = VecField::from_values(
            &self.g,
            (0..self.g.len())
                .map(|k| [s.grad_r_u[k], 0.0, 0.0])
                .collect(),
        )?;
        let fields: [(&str, &VecField); 9] = [
            ("r_u1", &s.r_u1),
            ("r_u2", &s.r_u2),
            ("r_u3", &s.r_u3),
            ("r_w", &s.r_w),
            ("r_g", &s.r_g),
            ("grad_r_u_parts", &grads),
            ("grad_r_u", &grad_total),
            ("utilde", &s.utilde),
            ("wtilde", &s.wtilde),
        ];
        for (name, f) in fields {
            let file = fs::File::create(dir.join(format!("{name}.csv")))?;
            io::write_field_csv(&self.g, f, BufWriter::new(file))?;
        }
        fs::write(dir.join("sample.txt"), io::sidecar_line(t, rec.tau) + "\n")?;
        Ok(())
    }

    /// Covers `[t, t + tau]`, halving on solver failure so that the end
    /// point stays on the nominal grid.
    fn advance_fixed(&mut self, tau: f64) -> Result<()> {
        let mut pending = vec![tau];
        while let Some(h) = pending.pop() {
            let Some(out) = self.try_step(h)? else {
                let half = 0.5 * h;
                if half < self.cfg.tau_floor {
                    return Err(Error::StepFloor {
                        tau: half,
                        tau_min: self.cfg.tau_floor,
                    });
                }
                pending.push(half);
                pending.push(half);
                continue;
            };
            let rec = self.record(h, out.u, out.w);
            let est = if self.cfg.estimate && self.estimator_stopped.is_none() {
                match estimate_step(&rec, &self.cfg.solver, &self.g) {
                    Ok(e) => Some(e),
                    Err(Error::SmallnessViolated { .. }) => {
                        self.estimator_stopped = Some(self.t);
                        None
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            self.accept(rec, est.as_ref(), out.iters)?;
        }
        Ok(())
    }

    fn run_fixed(&mut self, tau: f64) -> Result<()> {
        let n = (self.cfg.t_end / tau - 1e-9).ceil().max(1.0) as usize;
        for _ in 0..n {
            self.advance_fixed(tau)?;
        }
        Ok(())
    }

    fn run_adaptive(&mut self, p: &ControllerParams) -> Result<f64> {
        let mut ctrl = p.controller();
        let t_end = self.cfg.t_end;
        let mut tau = p.tau_init.clamp(p.tau_min, p.tau_max);
        while self.t < t_end && !same_time(self.t, t_end) {
            let h = tau.min(t_end - self.t);
            let t_n = self.t;
            let Some(out) = self.try_step(h)? else {
                tau = retry(ctrl.decide(h, 0.0, 0.0, false)?);
                self.trace.push(entry(t_n, h, &ctrl, f64::NAN));
                continue;
            };
            let rec = self.record(h, out.u, out.w);
            let est = match estimate_step(&rec, &self.cfg.solver, &self.g) {
                Ok(e) => e,
                Err(Error::SmallnessViolated { .. }) => {
                    tau = retry(ctrl.reject_smallness(h)?);
                    self.trace.push(entry(t_n, h, &ctrl, f64::NAN));
                    continue;
                }
                Err(e) => return Err(e),
            };
            match ctrl.decide(h, est.alpha_hat, est.delta_hat, true)? {
                Decision::Accept(next) => {
                    self.trace.push(entry(t_n + h, h, &ctrl, est.alpha_hat));
                    self.accept(rec, Some(&est), out.iters)?;
                    tau = next;
                }
                Decision::Reject(r) => {
                    self.trace.push(entry(t_n, h, &ctrl, est.alpha_hat));
                    tau = r;
                }
            }
        }
        Ok(ctrl.current_tol)
    }

    fn finish(mut self, final_tol: Option<f64>) -> Result<Trajectory> {
        if self.states.last().is_none_or(|s| !same_time(s.t, self.t)) {
            self.store_current();
        }
        let traj = Trajectory {
            grid: self.g,
            t_end: self.cfg.t_end,
            states: self.states,
            estimator: self.estimator,
            trace: self.trace,
            diagnostics: self.diagnostics,
            estimator_stopped: self.estimator_stopped,
            final_tol,
        };
        if let Some(dir) = &self.cfg.out_dir {
            let create = |name: &str| -> Result<BufWriter<fs::File>> {
                Ok(BufWriter::new(fs::File::create(dir.join(name))?))
            };
            traj.estimator.write_csv(create("estimator.csv")?)?;
            if matches!(self.cfg.mode, Mode::Adaptive(_)) {
                write_trace_csv(&traj.trace, create("controller.csv")?)?;
            }
            traj.write_diagnostics_csv(create("diagnostics.csv")?)?;
            let last = traj.states.last().expect("final state stored");
            let tau = traj.diagnostics.last().map_or(0.0, |d| d.tau);
            io::save_field(&dir.join("final_u.wmf"), &traj.grid, &last.u)?;
            io::save_field(&dir.join("final_w.wmf"), &traj.grid, &last.w)?;
            fs::write(dir.join("final.txt"), io::sidecar_line(last.t, tau) + "\n")?;
        }
        Ok(traj)
    }
}

fn retry(d: Decision) -> f64 {
    match d {
        Decision::Accept(t) | Decision::Reject(t) => t,
    }
}

fn entry(t: f64, tau: f64, ctrl: &AdaptiveController, density: f64) -> TraceEntry {
    TraceEntry {
        t,
        tau,
        verdict: ctrl.last_verdict(),
        current_tol: ctrl.current_tol,
        density,
    }
}

/// Runs the simulation described by `cfg`.
pub fn run(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut d = Driver::new(cfg)?;
    let final_tol = match cfg.mode {
        Mode::FixedTau(tau) => {
            d.run_fixed(tau)?;
            None
        }
        Mode::Adaptive(p) => Some(d.run_adaptive(&p)?),
    };
    d.finish(final_tol)
}

/// Max over shared times of `|w - w_ref|_{L^2}` and `|grad(u - u_ref)|_{L^2}`.
///
/// Every stored coarse time up to the end of both runs must also be a
/// stored reference time.
pub fn energy_norm_error(
    coarse: &Trajectory,
    reference: &Trajectory,
    g: &Grid2D,
) -> Result<(f64, f64)> {
    if coarse.grid.cells() != g.cells() || reference.grid.cells() != g.cells() {
        return Err(Error::TimeMismatch(format!(
            "grids differ: {} / {} / {} cells",
            coarse.grid.cells(),
            reference.grid.cells(),
            g.cells()
        )));
    }
    let horizon = coarse.t_end.min(reference.final_time());
    let mut err_w = 0.0f64;
    let mut err_gu = 0.0f64;
    let mut shared = 0;
    let mut r = reference.states.iter().peekable();
    for s in coarse.states.iter().filter(|s| s.t <= horizon + 1e-12) {
        while r.peek().is_some_and(|x| x.t < s.t && !same_time(x.t, s.t)) {
            r.next();
        }
        let Some(x) = r.peek().filter(|x| same_time(x.t, s.t)) else {
            return Err(Error::TimeMismatch(format!(
                "coarse time {} is not a stored reference time",
                s.t
            )));
        };
        err_w = err_w.max(g.lp_norm_vec(&s.w.sub(&x.w), 2.0));
        let du = s.u.sub(&x.u);
        err_gu = err_gu.max(g.integrate(&g.gradient_sq(&du)).max(0.0).sqrt());
        shared += 1;
    }
    if shared == 0 {
        return Err(Error::TimeMismatch("no shared times".into()));
    }
    Ok((err_w, err_gu))
}

/// Experimental order `log2(e(tau) / e(tau/2))`.
pub fn eoc(e_coarse: f64, e_fine: f64) -> Result<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0) {
        return Err(Error::NonPositiveError(e_coarse, e_fine));
    }
    Ok((e_coarse / e_fine).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EocRow {
    pub tau: f64,
    pub err_w: f64,
    pub eoc_w: Option<f64>,
    pub err_gu: f64,
    pub eoc_gu: Option<f64>,
}

/// Fixed-step self-convergence study on the grid and data of `base`.
///
/// `taus` must be dyadically nested with `tau_ref`; rows come out in the
/// order given, the order columns comparing each row with the previous one.
pub fn eoc_study(base: &RunConfig, taus: &[f64], tau_ref: f64) -> Result<Vec<EocRow>> {
    let finest = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let mut cfg = base.clone();
    cfg.estimate = false;
    cfg.out_dir = None;
    cfg.dump_residuals = None;
    cfg.mode = Mode::FixedTau(tau_ref);
    cfg.store = Store::Every(finest);
    let reference = run(&cfg)?;
    let g = reference.grid;

    let mut rows: Vec<EocRow> = Vec::new();
    for &tau in taus {
        cfg.mode = Mode::FixedTau(tau);
        cfg.store = Store::All;
        let coarse = run(&cfg)?;
        let (err_w, err_gu) = energy_norm_error(&coarse, &reference, &g)?;
        let (eoc_w, eoc_gu) = match rows.last() {
            Some(p) => (Some(eoc(p.err_w, err_w)?), Some(eoc(p.err_gu, err_gu)?)),
            None => (None, None),
        };
        rows.push(EocRow {
            tau,
            err_w,
            eoc_w,
            err_gu,
            eoc_gu,
        });
    }
    Ok(rows)
}

pub fn write_eoc_csv<W: std::io::Write>(rows: &[EocRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "err_w", "eoc_w", "err_gu", "eoc_gu"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    for r in rows {
        w.write_record([
            format!("{:e}", r.tau),
            format!("{:e}", r.err_w),
            opt(r.eoc_w),
            format!("{:e}", r.err_gu),
            opt(r.eoc_gu),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_examples() {
        assert!((eoc(6.19e-5, 1.28e-5).unwrap() - 2.27).abs() < 5e-3);
        assert_eq!(eoc(4.0 * 3.7e-6, 3.7e-6).unwrap(), 2.0);
        assert!((eoc(2.13e-4, 6.19e-5).unwrap() - 1.78).abs() < 5e-3);
        assert!(matches!(eoc(0.0, 1.0), Err(Error::NonPositiveError(..))));
        assert!(matches!(eoc(1.0, -1.0), Err(Error::NonPositiveError(..))));
    }

    #[test]
    fn config_text() {
        let text =
            "# comment\n grid = 16 \n\nmode = adaptive # trailing\nstrategy=equidistribute\n";
        let pairs = parse_config_text(text).unwrap();
        assert_eq!(pairs.len(), 3);
        let cfg =
            RunConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(cfg.cells, 16);
        match cfg.mode {
            Mode::Adaptive(p) => {
                assert_eq!(p.strategy, Strategy::Equidistribute);
                assert_eq!(p.tol0, 1e-4);
            }
            _ => panic!("expected adaptive mode"),
        }
        assert!(parse_config_text("just words").is_err());
        assert!(RunConfig::from_pairs([("nonsense", "1")]).is_err());
        assert!(RunConfig::from_pairs([("tend", "-1")]).is_err());
        assert!(RunConfig::from_pairs([("tau", "x")]).is_err());
    }

    #[test]
    fn later_pairs_override() {
        let cfg = RunConfig::from_pairs([("tau", "0.01"), ("grid", "8"), ("tau", "0.02")]).unwrap();
        assert_eq!(cfg.mode, Mode::FixedTau(0.02));
        assert_eq!(cfg.cells, 8);
    }

    #[test]
    fn default_snapshots_scaled() {
        let cfg = RunConfig {
            t_end: 0.1,
            ..RunConfig::default()
        };
        let s = cfg.snapshot_times();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], 0.0);
        assert!((s[7] - 0.1).abs() < 1e-15);
    }

    fn small(data: InitialData, tau: f64, steps: usize) -> RunConfig {
        RunConfig {
            cells: 8,
            mode: Mode::FixedTau(tau),
            t_end: tau * steps as f64,
            data,
            store: Store::All,
            ..RunConfig::default()
        }
    }

    #[test]
    fn constant_data_has_zero_bound() {
        let traj = run(&small(InitialData::Constant([0.0, 1.0, 0.0]), 0.01, 10)).unwrap();
        assert_eq!(traj.accepted_steps(), 10);
        assert_eq!(traj.estimator.bound, 0.0);
        assert!(traj.estimator.history.iter().all(|e| e.alpha_hat == 0.0));
    }

    #[test]
    fn self_error_is_zero() {
        let traj = run(&small(InitialData::Bubble, 2f64.powi(-8), 4)).unwrap();
        let g = traj.grid;
        assert_eq!(energy_norm_error(&traj, &traj, &g).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn constant_offset_error() {
        let traj = run(&small(InitialData::Constant([0.0, 0.0, 1.0]), 0.5, 1)).unwrap();
        let g = traj.grid;
        let mut other = traj.clone();
        for s in &mut other.states {
            s.w = s.w.map(|v| [v[0] + 0.3, v[1], v[2]]);
        }
        let (ew, eg) = energy_norm_error(&traj, &other, &g).unwrap();
        assert!((ew - 0.3).abs() < 1e-15);
        assert_eq!(eg, 0.0);
    }

    #[test]
    fn non_nested_times_rejected() {
        let a = run(&small(InitialData::Bubble, 2f64.powi(-8), 3)).unwrap();
        let mut cfg = small(InitialData::Bubble, 3.0 * 2f64.powi(-8), 1);
        cfg.t_end = a.t_end;
        let b = run(&cfg).unwrap();
        let g = a.grid;
        assert!(matches!(
            energy_norm_error(&a, &b, &g),
            Err(Error::TimeMismatch(_))
        ));
        let other = Grid2D::new(4).unwrap();
        assert!(matches!(
            energy_norm_error(&a, &a, &other),
            Err(Error::TimeMismatch(_))
        ));
    }

    #[test]
    fn adaptive_lands_on_t_end() {
        let mut p = ControllerParams::new(Strategy::Equidistribute, 1e-2);
        p.tau_init = 0.003;
        let cfg = RunConfig {
            cells: 8,
            mode: Mode::Adaptive(p),
            t_end: 0.05,
            ..RunConfig::default()
        };
        let traj = run(&cfg).unwrap();
        assert!(same_time(traj.final_time(), 0.05));
        let times: Vec<f64> = traj.diagnostics.iter().map(|d| d.t).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.estimator.history.len(), traj.accepted_steps());
    }
}
