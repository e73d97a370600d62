//! Time-step control from the residual-rate bound.
//!
//! Two strategies are supported. `Equidistribute` keeps the per-step density
//! `alpha_hat` below a fixed tolerance. `UpdatedTolerance` starts from a small
//! tolerance and multiplies it by `exp(tau delta_hat / 2)` after every
//! accepted step, so that late steps, whose errors are amplified less by the
//! Gronwall factor, are allowed a larger residual.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Equidistribute,
    UpdatedTolerance,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equidistribute" | "equi" | "fixed" => Ok(Strategy::Equidistribute),
            "updated" | "updated-tolerance" | "updatedtolerance" => Ok(Strategy::UpdatedTolerance),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Equidistribute => f.write_str("equidistribute"),
            Strategy::UpdatedTolerance => f.write_str("updated"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Accept(f64),
    Reject(f64),
}

/// Why a step was accepted or rejected; written to the controller trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    /// Fixed-point solver did not converge.
    RejectSolver,
    /// Smallness precondition of the residual bounds failed.
    RejectSmallness,
    /// Density above the current tolerance.
    RejectTolerance,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::RejectSolver => "reject_solver",
            Verdict::RejectSmallness => "reject_smallness",
            Verdict::RejectTolerance => "reject_tolerance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveController {
    pub strategy: Strategy,
    pub tol0: f64,
    pub current_tol: f64,
    pub grow: f64,
    pub shrink: f64,
    pub safety: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    last: Verdict,
}

impl AdaptiveController {
    /// Controller with the default constants: grow 1.2, shrink 0.5,
    /// safety 0.4, `tau` clamped to `[2^-20, 2^-6]`.
    pub fn new(strategy: Strategy, tol0: f64) -> Self {
        Self {
            strategy,
            tol0,
            current_tol: tol0,
            grow: 1.2,
            shrink: 0.5,
            safety: 0.4,
            tau_min: 2f64.powi(-20),
            tau_max: 2f64.powi(-6),
            last: Verdict::Accept,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol0 > 0.0) {
            return Err(Error::Config(format!(
                "tol0 must be positive, got {}",
                self.tol0
            )));
        }
        if !(0.0 < self.shrink && self.shrink < 1.0 && 1.0 < self.grow) {
            return Err(Error::Config(format!(
                "need 0 < shrink < 1 < grow, got shrink = {}, grow = {}",
                self.shrink, self.grow
            )));
        }
        if !(0.0 < self.safety && self.safety < 1.0) {
            return Err(Error::Config(format!(
                "safety must be in (0, 1), got {}",
                self.safety
            )));
        }
        if !(0.0 < self.tau_min && self.tau_min <= self.tau_max) {
            return Err(Error::Config(format!(
                "need 0 < tau_min <= tau_max, got {} and {}",
                self.tau_min, self.tau_max
            )));
        }
        Ok(())
    }

    /// Verdict of the most recent decision.
    pub fn last_verdict(&self) -> Verdict {
        self.last
    }

    fn reject(&mut self, tau: f64, why: Verdict) -> Result<Decision> {
        let retry = tau * self.shrink;
        if retry < self.tau_min {
            return Err(Error::StepFloor {
                tau: retry,
                tau_min: self.tau_min,
            });
        }
        self.last = why;
        Ok(Decision::Reject(retry))
    }

    /// Decide on a step of size `tau` with rates `alpha_hat`, `delta_hat`.
    pub fn decide(
        &mut self,
        tau: f64,
        alpha_hat: f64,
        delta_hat: f64,
        fp_converged: bool,
    ) -> Result<Decision> {
        if !fp_converged {
            return self.reject(tau, Verdict::RejectSolver);
        }
        let density = alpha_hat;
        if density > self.current_tol {
            return self.reject(tau, Verdict::RejectTolerance);
        }
        let next = if density < self.safety * self.current_tol {
            (tau * self.grow).min(self.tau_max)
        } else {
            tau.min(self.tau_max)
        };
        if self.strategy == Strategy::UpdatedTolerance {
            self.current_tol *= (0.5 * tau * delta_hat).exp();
        }
        self.last = Verdict::Accept;
        Ok(Decision::Accept(next))
    }

    /// Reject because the residual bounds are not applicable at this `tau`.
    pub fn reject_smallness(&mut self, tau: f64) -> Result<Decision> {
        self.reject(tau, Verdict::RejectSmallness)
    }
}

/// One line of the controller trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub t: f64,
    pub tau: f64,
    pub verdict: Verdict,
    pub current_tol: f64,
    pub density: f64,
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_j", "tau_j", "decision", "current_tol", "density"])?;
    for e in trace {
        w.write_record([
            format!("{:e}", e.t),
            format!("{:e}", e.tau),
            e.verdict.as_str().to_string(),
            format!("{:e}", e.current_tol),
            format!("{:e}", e.density),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_failure_halves() {
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        assert_eq!(
            c.decide(0.01, 0.0, 1.0, false).unwrap(),
            Decision::Reject(0.005)
        );
        assert_eq!(c.last_verdict(), Verdict::RejectSolver);
    }

    #[test]
    fn zero_density_grows() {
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        assert_eq!(
            c.decide(0.001, 0.0, 1.0, true).unwrap(),
            Decision::Accept(0.0012)
        );
        let tmax = c.tau_max;
        assert_eq!(
            c.decide(tmax, 0.0, 1.0, true).unwrap(),
            Decision::Accept(tmax)
        );
    }

    #[test]
    fn middle_band_keeps_tau() {
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        assert_eq!(
            c.decide(0.001, 0.5e-4, 1.0, true).unwrap(),
            Decision::Accept(0.001)
        );
        assert_eq!(
            c.decide(0.001, 2e-4, 1.0, true).unwrap(),
            Decision::Reject(0.0005)
        );
        assert_eq!(c.last_verdict(), Verdict::RejectTolerance);
    }

    #[test]
    fn updated_tolerance_doubles() {
        let mut c = AdaptiveController::new(Strategy::UpdatedTolerance, 1e-6);
        let tau = 0.01;
        let delta = 2.0 * 2f64.ln() / tau;
        c.decide(tau, 0.0, delta, true).unwrap();
        assert!((c.current_tol - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn equidistribute_tolerance_constant() {
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        for _ in 0..5 {
            c.decide(0.001, 1e-5, 50.0, true).unwrap();
        }
        assert_eq!(c.current_tol, 1e-4);
    }

    #[test]
    fn floor_is_an_error() {
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        let t = c.tau_min;
        assert!(matches!(
            c.decide(t, 1.0, 1.0, true),
            Err(Error::StepFloor { .. })
        ));
        assert!(matches!(
            c.reject_smallness(t),
            Err(Error::StepFloor { .. })
        ));
    }

    #[test]
    fn validation() {
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        assert!(c.validate().is_ok());
        c.grow = 0.9;
        assert!(c.validate().is_err());
        let mut c = AdaptiveController::new(Strategy::Equidistribute, 1e-4);
        c.tau_min = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "updated".parse::<Strategy>().unwrap(),
            Strategy::UpdatedTolerance
        );
        assert_eq!(
            "Equidistribute".parse::<Strategy>().unwrap(),
            Strategy::Equidistribute
        );
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(
            &[TraceEntry {
                t: 0.0,
                tau: 0.1,
                verdict: Verdict::Accept,
                current_tol: 1e-4,
                density: 0.0,
            }],
            &mut buf,
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t_j,tau_j,decision,current_tol,density\n"));
        assert!(s.contains(",accept,"));
    }
}
