//! Angular-momentum midpoint scheme
//!
//! ```text
//! (u^{k+1} - u^k) / tau = u^{k+1/2} x w^{k+1/2}
//! (w^{k+1} - w^k) / tau = Lap u^{k+1/2} x u^{k+1/2}
//! ```
//!
//! solved per step by a Jacobi-style fixed-point iteration. The scheme keeps
//! `|u| = 1` and `u . w = 0` at every node and conserves the discrete energy
//! built from the five-point Laplacian.

use crate::error::{Error, Result};
use crate::grid::{
    cross3, dot3, max_orthogonality_defect, norm3, scale3, sub3, Grid2D, MomentumField,
    SphereField, Vec3, VecField,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the max-node change of both fields falls below this.
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Tolerance for the unit-length and orthogonality constraints.
    pub unit_tol: f64,
    /// Squared Sobolev embedding constant entering the Gronwall rate.
    pub c_q: f64,
    /// Integrability exponent `p > 2` used in the Gronwall rate.
    pub p_exp: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            fp_tol: 1e-12,
            fp_max_iter: 200,
            unit_tol: 1e-8,
            c_q: 4.0,
            p_exp: 4.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) {
            return Err(Error::Config(format!(
                "fp_tol must be positive, got {}",
                self.fp_tol
            )));
        }
        if self.fp_max_iter == 0 {
            return Err(Error::Config("fp_max_iter must be at least 1".into()));
        }
        if !(self.unit_tol > 0.0) {
            return Err(Error::Config("unit_tol must be positive".into()));
        }
        if !(self.c_q > 0.0) {
            return Err(Error::Config(format!(
                "c_q must be positive, got {}",
                self.c_q
            )));
        }
        if !(self.p_exp > 2.0) {
            return Err(Error::Config(format!(
                "p_exp must exceed 2, got {}",
                self.p_exp
            )));
        }
        Ok(())
    }
}

/// Endpoint data of one time interval `[t_n, t_{n+1}]`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t_n: f64,
    pub t_np1: f64,
    pub tau: f64,
    pub u_n: SphereField,
    pub u_np1: SphereField,
    pub w_n: MomentumField,
    pub w_np1: MomentumField,
    pub lap_u_n: VecField,
    pub lap_u_np1: VecField,
}

impl StepRecord {
    pub fn new(
        g: &Grid2D,
        t_n: f64,
        tau: f64,
        u_n: SphereField,
        w_n: MomentumField,
        u_np1: SphereField,
        w_np1: MomentumField,
    ) -> Self {
        assert!(tau > 0.0, "step record needs tau > 0");
        let lap_u_n = g.laplacian(&u_n);
        let lap_u_np1 = g.laplacian(&u_np1);
        Self {
            t_n,
            t_np1: t_n + tau,
            tau,
            u_n,
            u_np1,
            w_n,
            w_np1,
            lap_u_n,
            lap_u_np1,
        }
    }

    /// Same as [`StepRecord::new`] but reuses an already computed laplacian
    /// of `u_n`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_lap_n(
        g: &Grid2D,
        t_n: f64,
        tau: f64,
        u_n: SphereField,
        w_n: MomentumField,
        lap_u_n: VecField,
        u_np1: SphereField,
        w_np1: MomentumField,
    ) -> Self {
        let lap_u_np1 = g.laplacian(&u_np1);
        Self {
            t_n,
            t_np1: t_n + tau,
            tau,
            u_n,
            u_np1,
            w_n,
            w_np1,
            lap_u_n,
            lap_u_np1,
        }
    }
}

/// Initial data families accepted by the driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// Smooth bubble that develops a gradient singularity shortly after
    /// `t = 0.2`; zero initial velocity.
    Bubble,
    /// Spatially constant `u`, zero momentum. Stationary.
    Constant(Vec3),
    /// Spatially constant `u` and `w` with `u . w = 0`: a rigid rotation.
    Rotation { u: Vec3, w: Vec3 },
}

impl InitialData {
    pub fn build(&self, g: &Grid2D) -> Result<(SphereField, MomentumField)> {
        match *self {
            InitialData::Bubble => Ok(initial_data(g)),
            InitialData::Constant(u) => {
                let n = norm3(u);
                if n == 0.0 {
                    return Err(Error::Config("constant data must be nonzero".into()));
                }
                let u = SphereField::new_unchecked(VecField::constant(g, scale3(1.0 / n, u)));
                let w = MomentumField::new_unchecked(VecField::zeros(g));
                Ok((u, w))
            }
            InitialData::Rotation { u, w } => {
                let n = norm3(u);
                if n == 0.0 {
                    return Err(Error::Config("rotation data needs nonzero u".into()));
                }
                let u = scale3(1.0 / n, u);
                // keep only the part of w orthogonal to u
                let w = sub3(w, scale3(dot3(u, w), u));
                Ok((
                    SphereField::new_unchecked(VecField::constant(g, u)),
                    MomentumField::new_unchecked(VecField::constant(g, w)),
                ))
            }
        }
    }
}

/// Bubble initial data: inside the disc `|x| <= 1/2`
/// `u = (2 a x_1, 2 a x_2, a^2 - |x|^2) / (a^2 + |x|^2)` with
/// `a = (1 - 2|x|)^4`, and `u = (0, 0, -1)` outside; `w = 0`.
///
/// The third component uses `a^2 - |x|^2` (inverse stereographic form), which
/// gives `|u| = 1` and matches the outer branch continuously.
pub fn initial_data(g: &Grid2D) -> (SphereField, MomentumField) {
    let u = VecField::from_xy(g, bubble);
    (
        SphereField::new_unchecked(u),
        MomentumField::new_unchecked(VecField::zeros(g)),
    )
}

pub(crate) fn bubble(x: f64, y: f64) -> Vec3 {
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r >= 0.5 {
        return [0.0, 0.0, -1.0];
    }
    let a = (1.0 - 2.0 * r).powi(4);
    let d = a * a + r2;
    [2.0 * a * x / d, 2.0 * a * y / d, (a * a - r2) / d]
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u: SphereField,
    pub w: MomentumField,
    pub iters: usize,
}

/// One midpoint step of size `tau` (negative `tau` steps backwards).
///
/// Returns [`Error::NonConvergence`] when the fixed-point iteration does not
/// settle within `fp_max_iter` sweeps; the caller is expected to retry with a
/// smaller step.
pub fn step(
    u_n: &SphereField,
    w_n: &MomentumField,
    tau: f64,
    cfg: &SolverConfig,
    g: &Grid2D,
) -> Result<StepOutcome> {
    let len = g.len();
    let mut u: Vec<Vec3> = u_n.values.clone();
    let mut w: Vec<Vec3> = w_n.values.clone();
    let mut mid_u = VecField::zeros(g);

    for iter in 1..=cfg.fp_max_iter {
        for ((m, &a), &b) in mid_u.values.iter_mut().zip(&u_n.values).zip(&u) {
            *m = mid(a, b);
        }
        let lap = g.laplacian(&mid_u);
        let mut du = 0.0f64;
        let mut dw = 0.0f64;
        for k in 0..len {
            let mu = mid_u.values[k];
            let mw = mid(w_n.values[k], w[k]);
            let du_k = cross3(mu, mw);
            let dw_k = cross3(lap.values[k], mu);
            let un = u_n.values[k];
            let wn = w_n.values[k];
            let new_u = [
                un[0] + tau * du_k[0],
                un[1] + tau * du_k[1],
                un[2] + tau * du_k[2],
            ];
            let new_w = [
                wn[0] + tau * dw_k[0],
                wn[1] + tau * dw_k[1],
                wn[2] + tau * dw_k[2],
            ];
            du = du.max(norm3(sub3(new_u, u[k])));
            dw = dw.max(norm3(sub3(new_w, w[k])));
            u[k] = new_u;
            w[k] = new_w;
        }
        if !(du.is_finite() && dw.is_finite()) {
            return Err(Error::NonConvergence(iter));
        }
        if du <= cfg.fp_tol && dw <= cfg.fp_tol {
            return Ok(StepOutcome {
                u: SphereField::new_unchecked(VecField::from_values(g, u)?),
                w: MomentumField::new_unchecked(VecField::from_values(g, w)?),
                iters: iter,
            });
        }
    }
    Err(Error::NonConvergence(cfg.fp_max_iter))
}

#[inline]
fn mid(a: Vec3, b: Vec3) -> Vec3 {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ]
}

/// Discrete energy `1/2 (|w|^2_{L^2} + D(u))`, with `D` the Dirichlet form of
/// the five-point Laplacian (see [`Grid2D::dirichlet_density`]).
pub fn energy(u: &VecField, w: &VecField, g: &Grid2D) -> f64 {
    let kinetic = g.integrate(&w.dot(w));
    let potential = g.integrate(&g.dirichlet_density(u));
    0.5 * (kinetic + potential)
}

/// Same energy but with centred-difference gradients.
pub fn energy_centered(u: &VecField, w: &VecField, g: &Grid2D) -> f64 {
    0.5 * (g.integrate(&w.dot(w)) + g.integrate(&g.gradient_sq(u)))
}

/// Max-node defects `(| |u| - 1 |, |u . w|)`.
pub fn constraint_defects(u: &VecField, w: &VecField) -> (f64, f64) {
    (u.max_unit_defect(), max_orthogonality_defect(u, w))
}
