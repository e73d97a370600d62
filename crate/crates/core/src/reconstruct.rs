//! Time reconstructions of a computed step and the residuals by which they
//! miss the exact angular-momentum system.
//!
//! On `[t_n, t_{n+1}]` with `s = t - t_n` and `q(t) = s (tau - s) / tau`:
//!
//! ```text
//! u*(t) = u_hat(t) - q/2 (u^{n+1} x w^{n+1} - u^n x w^n)
//! w~(t) = w_hat(t) - q/2 (Lap u^{n+1} x u^{n+1} - Lap u^n x u^n)
//! u~(t) = u*(t) / |u*(t)|
//! ```
//!
//! where `u_hat`, `w_hat` are the linear interpolants. These are the closed
//! forms of integrating the linear interpolant of `u_hat x w_hat` (resp.
//! `Lap u_hat x u_hat`) minus the constant midpoint correction, for records
//! produced by the midpoint scheme.

use crate::error::{Error, Result};
use crate::grid::{cross3, dot3, norm3, scale3, Grid2D, ScalarField, SphereField, Vec3, VecField};
use crate::scheme::StepRecord;

/// Interior sample offsets, as fractions of the step, used wherever a bound is
/// checked against sampled residuals.
pub const SAMPLE_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// `|u*|` below this is treated as a broken reconstruction.
pub const DEGENERATE_NORM: f64 = 0.25;

/// Midpoint-rule correction terms
/// `a_u = (du/2) x (dw/2)` and `a_w = (dLap u/2) x (du/2)`.
pub fn a_terms(rec: &StepRecord) -> (VecField, VecField) {
    let du = rec.u_np1.sub(&rec.u_n);
    let dw = rec.w_np1.sub(&rec.w_n);
    let dlap = rec.lap_u_np1.sub(&rec.lap_u_n);
    let a_u = du.zip_with(&dw, |a, b| scale3(0.25, cross3(a, b)));
    let a_w = dlap.zip_with(&du, |a, b| scale3(0.25, cross3(a, b)));
    (a_u, a_w)
}

/// Endpoint differences of the two nonlinear fluxes:
/// `u^{n+1} x w^{n+1} - u^n x w^n` and `Lap u^{n+1} x u^{n+1} - Lap u^n x u^n`.
pub fn flux_jumps(rec: &StepRecord) -> (VecField, VecField) {
    let fu_n = rec.u_n.cross(&rec.w_n);
    let fu_np1 = rec.u_np1.cross(&rec.w_np1);
    let fw_n = rec.lap_u_n.cross(&rec.u_n);
    let fw_np1 = rec.lap_u_np1.cross(&rec.u_np1);
    (fu_np1.sub(&fu_n), fw_np1.sub(&fw_n))
}

struct Weights {
    l0: f64,
    l1: f64,
    /// `q(t) = s (tau - s) / tau`
    q: f64,
    /// `dq/dt = (tau - 2 s) / tau`
    dq: f64,
}

fn weights(rec: &StepRecord, t: f64) -> Weights {
    let tau = rec.tau;
    let s = t - rec.t_n;
    Weights {
        l0: (rec.t_np1 - t) / tau,
        l1: s / tau,
        q: s * (tau - s) / tau,
        dq: (tau - 2.0 * s) / tau,
    }
}

fn lerp(a: &VecField, b: &VecField, l0: f64, l1: f64) -> VecField {
    a.zip_with(b, |x, y| {
        [
            l0 * x[0] + l1 * y[0],
            l0 * x[1] + l1 * y[1],
            l0 * x[2] + l1 * y[2],
        ]
    })
}

/// The quadratic reconstructions `(u*, w~)` at time `t`.
pub fn eval_ustar_wtilde(rec: &StepRecord, t: f64) -> (VecField, VecField) {
    let (ju, jw) = flux_jumps(rec);
    ustar_wtilde_with(rec, t, &ju, &jw)
}

fn ustar_wtilde_with(
    rec: &StepRecord,
    t: f64,
    ju: &VecField,
    jw: &VecField,
) -> (VecField, VecField) {
    let wt = weights(rec, t);
    let u_hat = lerp(&rec.u_n, &rec.u_np1, wt.l0, wt.l1);
    let w_hat = lerp(&rec.w_n, &rec.w_np1, wt.l0, wt.l1);
    (u_hat.axpy(-0.5 * wt.q, ju), w_hat.axpy(-0.5 * wt.q, jw))
}

/// Time derivative of `u*` (a linear function of `t`).
pub fn eval_dt_ustar(rec: &StepRecord, t: f64) -> VecField {
    let (ju, _) = flux_jumps(rec);
    dt_ustar_with(rec, t, &ju)
}

fn dt_ustar_with(rec: &StepRecord, t: f64, ju: &VecField) -> VecField {
    let wt = weights(rec, t);
    rec.u_np1
        .sub(&rec.u_n)
        .scale(1.0 / rec.tau)
        .axpy(-0.5 * wt.dq, ju)
}

fn project(ustar: &VecField) -> Result<SphereField> {
    let min_norm = ustar
        .values
        .iter()
        .map(|&v| norm3(v))
        .fold(f64::INFINITY, f64::min);
    if min_norm < DEGENERATE_NORM {
        return Err(Error::DegenerateNorm { min_norm });
    }
    Ok(SphereField::new_unchecked(
        ustar.map(|v| scale3(1.0 / norm3(v), v)),
    ))
}

/// The projected reconstruction `u~ = u* / |u*|`.
pub fn eval_utilde(rec: &StepRecord, t: f64) -> Result<SphereField> {
    let (ustar, _) = eval_ustar_wtilde(rec, t);
    project(&ustar)
}

/// Residual parts sampled at one time inside a step.
///
/// The parts follow the usual decomposition
/// `r_u1 = u~ x w~ - I1(u~ x w~)`, `r_u2 = a_u`,
/// `r_u3 = d_t u* - d_t u~`, `r_w = Lap u~ x u~ - I1[Lap u~ x u~] + a_w`,
/// `r_g = (u~ . w~) w~ - (u~ . w~)^2 u~`. With these signs the perturbed
/// system reads `d_t u~ = u~ x w~ - (r_u1 + r_u2 + r_u3)` and
/// `d_t w~ = Lap u~ x u~ - r_w`; see [`ResidualSample::r_u`].
#[derive(Debug, Clone)]
pub struct ResidualSample {
    pub t: f64,
    pub r_u1: VecField,
    pub r_u2: VecField,
    pub r_u3: VecField,
    pub r_w: VecField,
    pub r_g: VecField,
    /// `|grad r_u|` of the assembled residual, centred differences.
    pub grad_r_u: ScalarField,
    pub grad_r_u1: ScalarField,
    pub grad_r_u2: ScalarField,
    pub grad_r_u3: ScalarField,
    pub utilde: SphereField,
    pub wtilde: VecField,
}

impl ResidualSample {
    /// Residual `r_u` with `d_t u~ = u~ x w~ + r_u`.
    pub fn r_u(&self) -> VecField {
        self.r_u1.add(&self.r_u2).add(&self.r_u3).scale(-1.0)
    }

    /// Residual with `d_t w~ = Lap u~ x u~ + r`.
    pub fn r_w_signed(&self) -> VecField {
        self.r_w.scale(-1.0)
    }
}

/// Evaluate every residual part at `t`, with `t` inside the step.
pub fn eval_residuals(rec: &StepRecord, t: f64, g: &Grid2D) -> Result<ResidualSample> {
    let (ju, jw) = flux_jumps(rec);
    let (ustar, wtilde) = ustar_wtilde_with(rec, t, &ju, &jw);
    let utilde = project(&ustar)?;
    let dt_ustar = dt_ustar_with(rec, t, &ju);
    let wt = weights(rec, t);
    let (a_u, a_w) = a_terms(rec);

    let fu_n = rec.u_n.cross(&rec.w_n);
    let fu_np1 = rec.u_np1.cross(&rec.w_np1);
    let i1_fu = lerp(&fu_n, &fu_np1, wt.l0, wt.l1);
    let r_u1 = utilde.cross(&wtilde).sub(&i1_fu);

    let r_u3 = dt_ustar.zip_with(&ustar, r_u3_point);

    let lap_ut = g.laplacian(&utilde);
    let fw_n = rec.lap_u_n.cross(&rec.u_n);
    let fw_np1 = rec.lap_u_np1.cross(&rec.u_np1);
    let i1_fw = lerp(&fw_n, &fw_np1, wt.l0, wt.l1);
    let r_w = lap_ut.cross(&utilde).sub(&i1_fw).add(&a_w);

    let r_g = utilde.zip_with(&wtilde, |u, w| {
        let s = dot3(u, w);
        [
            s * w[0] - s * s * u[0],
            s * w[1] - s * s * u[1],
            s * w[2] - s * s * u[2],
        ]
    });

    let r_u2 = a_u;
    let assembled = r_u1.add(&r_u2).add(&r_u3);
    Ok(ResidualSample {
        t,
        grad_r_u: g.gradient_norm(&assembled),
        grad_r_u1: g.gradient_norm(&r_u1),
        grad_r_u2: g.gradient_norm(&r_u2),
        grad_r_u3: g.gradient_norm(&r_u3),
        r_u1,
        r_u2,
        r_u3,
        r_w,
        r_g,
        utilde,
        wtilde,
    })
}

/// `d - d/|u| + (d . u) u / |u|^3`
#[inline]
fn r_u3_point(d: Vec3, us: Vec3) -> Vec3 {
    let n = norm3(us);
    let inv = 1.0 / n;
    let c = dot3(d, us) * inv * inv * inv;
    [
        d[0] - d[0] * inv + c * us[0],
        d[1] - d[1] * inv + c * us[1],
        d[2] - d[2] * inv + c * us[2],
    ]
}

/// Sample times `t_n + f tau` for the standard interior fractions.
pub fn sample_times(rec: &StepRecord) -> impl Iterator<Item = f64> + '_ {
    SAMPLE_FRACTIONS.iter().map(move |f| rec.t_n + f * rec.tau)
}
