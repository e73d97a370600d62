//! Computable residual bounds, the Gronwall rates built from them, and the
//! running accumulation of the total error bound.
//!
//! Every bound is a pointwise expression in the endpoint data of one step
//! and holds uniformly on the open interval, so the time integral of a rate
//! over a step is simply `tau` times its value.

use crate::error::{Error, Result};
use crate::grid::{norm3, Grid2D, ScalarField};
use crate::reconstruct::flux_jumps;
use crate::scheme::{SolverConfig, StepRecord};

/// Pointwise magnitudes of endpoint differences (`A`), flux jumps (`B`) and
/// endpoint maxima (`C`) on one step.
#[derive(Debug, Clone)]
pub struct LocalBounds {
    pub a_u: ScalarField,
    pub a_u_x: ScalarField,
    pub a_u_xx: ScalarField,
    pub a_w: ScalarField,
    pub a_w_x: ScalarField,
    pub b_u: ScalarField,
    pub b_u_x: ScalarField,
    pub b_u_xx: ScalarField,
    pub b_w: ScalarField,
    pub b_w_x: ScalarField,
    pub c_w: ScalarField,
    pub c_u_x: ScalarField,
    pub c_w_x: ScalarField,
    pub c_u_xx: ScalarField,
}

impl LocalBounds {
    fn fields(&self) -> [&ScalarField; 14] {
        [
            &self.a_u,
            &self.a_u_x,
            &self.a_u_xx,
            &self.a_w,
            &self.a_w_x,
            &self.b_u,
            &self.b_u_x,
            &self.b_u_xx,
            &self.b_w,
            &self.b_w_x,
            &self.c_w,
            &self.c_u_x,
            &self.c_w_x,
            &self.c_u_xx,
        ]
    }

    pub fn is_nonnegative(&self) -> bool {
        self.fields()
            .iter()
            .all(|f| f.values.iter().all(|&v| v >= 0.0))
    }

    pub fn len(&self) -> usize {
        self.a_u.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_u.values.is_empty()
    }

    /// Node-local view of every quantity.
    pub fn at(&self, k: usize) -> NodeBounds {
        NodeBounds {
            a_u: self.a_u[k],
            a_u_x: self.a_u_x[k],
            a_u_xx: self.a_u_xx[k],
            a_w: self.a_w[k],
            a_w_x: self.a_w_x[k],
            b_u: self.b_u[k],
            b_u_x: self.b_u_x[k],
            b_u_xx: self.b_u_xx[k],
            b_w: self.b_w[k],
            b_w_x: self.b_w_x[k],
            c_w: self.c_w[k],
            c_u_x: self.c_u_x[k],
            c_w_x: self.c_w_x[k],
            c_u_xx: self.c_u_xx[k],
        }
    }

    /// All-zero bounds on `g`.
    pub fn zeros(g: &Grid2D) -> Self {
        let z = ScalarField::zeros(g);
        Self {
            a_u: z.clone(),
            a_u_x: z.clone(),
            a_u_xx: z.clone(),
            a_w: z.clone(),
            a_w_x: z.clone(),
            b_u: z.clone(),
            b_u_x: z.clone(),
            b_u_xx: z.clone(),
            b_w: z.clone(),
            b_w_x: z.clone(),
            c_w: z.clone(),
            c_u_x: z.clone(),
            c_w_x: z.clone(),
            c_u_xx: z,
        }
    }
}

/// The local quantities at a single node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeBounds {
    pub a_u: f64,
    pub a_u_x: f64,
    pub a_u_xx: f64,
    pub a_w: f64,
    pub a_w_x: f64,
    pub b_u: f64,
    pub b_u_x: f64,
    pub b_u_xx: f64,
    pub b_w: f64,
    pub b_w_x: f64,
    pub c_w: f64,
    pub c_u_x: f64,
    pub c_w_x: f64,
    pub c_u_xx: f64,
}

/// Pointwise residual bounds at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeResidualBounds {
    pub ru1: f64,
    pub grad_ru1: f64,
    pub ru2: f64,
    pub grad_ru2: f64,
    pub ru3: f64,
    pub grad_ru3: f64,
    pub rw: f64,
    pub rg: f64,
}

impl NodeBounds {
    /// `(A^u)^2 + tau B^u`; the bounds need this below 1/4.
    pub fn smallness(&self, tau: f64) -> f64 {
        self.a_u * self.a_u + tau * self.b_u
    }

    /// Pointwise majorant of `|w~|`.
    pub fn w_majorant(&self, tau: f64) -> f64 {
        self.c_w + tau * self.b_w
    }

    /// Pointwise majorant of `|grad u~|`.
    pub fn grad_u_majorant(&self, tau: f64) -> f64 {
        2.0 * (self.c_u_x + tau * self.b_u_x)
    }

    pub fn residual_bounds(&self, tau: f64) -> NodeResidualBounds {
        let NodeBounds {
            a_u: a,
            a_u_x: ax,
            a_u_xx: axx,
            a_w: b,
            a_w_x: bx,
            b_u: bu,
            b_u_x: bux,
            b_u_xx: buxx,
            b_w: bw,
            b_w_x: bwx,
            c_w: c,
            c_u_x: cx,
            c_w_x: cwx,
            c_u_xx: cxx,
        } = *self;
        let t = tau;
        let a2 = a * a;
        let ab = a * b;

        let ru1 = t * bw + c * a2 + c * t * bu + 0.25 * ab;

        let grad_ru1 = (cx + t * bux) * (t * bw + c * a2)
            + t * bwx
            + c * (ax * a + t * bux + cx * t * bu + t * t * bu * bux)
            + a2 * cwx
            + t * bux * c
            + t * bu * cwx
            + ax * b
            + a * bx;

        let ru2 = 0.25 * ab;
        let grad_ru2 = 0.25 * (ax * b + a * bx);

        let inv_norm = 4.0 / 3.0 * a2 + 8.0 / 3.0 * t * bu;
        let ru3 = (c + 0.25 * ab) * inv_norm + 4.0 * ab * (2.0 + t * bu) + 4.0 * c * t * bu;

        let grad_inv_norm = ax * a + t * bux + cx * t * bu + t * t * bux * bu;
        let grad_ru3 = (cx * c + cwx + 0.25 * ax * b + 0.25 * a * bx) * inv_norm
            + 1.5 * ax * b
            + 2.0 * a * cx * b
            + 1.5 * a * bx
            + (cx * c + cwx) * t * bu
            + c * t * bux
            + 8.0 * (c + 0.25 * ab) * grad_inv_norm;

        // The trailing `t * buxx` bounds (Lap u* - Lap u_hat) x u~; without it the
        // estimate does not dominate r_w.
        let rw = (cxx + t * buxx) * (7.0 / 3.0 * a2 + 11.0 / 3.0 * t * bu)
            + 2.25 * axx * a
            + ax * ax
            + (cx + t * bux) * 2.0 * (ax * a + t * bux + (1.0 + cx) * t * bu + t * t * bux * bu)
            + t * buxx;

        let x = t * bw + c * (a2 + t * bu) + ab;
        let rg = (c + t * bw) * x + x * x;

        NodeResidualBounds {
            ru1,
            grad_ru1,
            ru2,
            grad_ru2,
            ru3,
            grad_ru3,
            rw,
            rg,
        }
    }
}

/// Residual bound fields over the grid.
#[derive(Debug, Clone)]
pub struct ResidualBoundFields {
    pub ru1: ScalarField,
    pub grad_ru1: ScalarField,
    pub ru2: ScalarField,
    pub grad_ru2: ScalarField,
    pub ru3: ScalarField,
    pub grad_ru3: ScalarField,
    pub rw: ScalarField,
    pub rg: ScalarField,
    /// `ru1 + ru2 + ru3`
    pub ru: ScalarField,
    /// `grad_ru1 + grad_ru2 + grad_ru3`
    pub grad_ru: ScalarField,
}

/// Computes the `A`, `B`, `C` quantities of a step.
pub fn local_quantities(rec: &StepRecord, g: &Grid2D) -> LocalBounds {
    let du = rec.u_np1.sub(&rec.u_n);
    let dw = rec.w_np1.sub(&rec.w_n);
    let dlap = rec.lap_u_np1.sub(&rec.lap_u_n);
    let (ju, jw) = flux_jumps(rec);

    let max2 = |a: ScalarField, b: ScalarField| a.zip_with(&b, f64::max);

    LocalBounds {
        a_u: du.magnitude(),
        a_u_x: g.gradient_norm(&du),
        a_u_xx: dlap.magnitude(),
        a_w: dw.magnitude(),
        a_w_x: g.gradient_norm(&dw),
        b_u: ju.magnitude(),
        b_u_x: g.gradient_norm(&ju),
        b_u_xx: g.laplacian(&ju).magnitude(),
        b_w: jw.magnitude(),
        b_w_x: g.gradient_norm(&jw),
        c_w: max2(rec.w_n.magnitude(), rec.w_np1.magnitude()),
        c_u_x: max2(g.gradient_norm(&rec.u_n), g.gradient_norm(&rec.u_np1)),
        c_w_x: max2(g.gradient_norm(&rec.w_n), g.gradient_norm(&rec.w_np1)),
        c_u_xx: max2(rec.lap_u_n.magnitude(), rec.lap_u_np1.magnitude()),
    }
}

/// Largest value of `(A^u)^2 + tau B^u` over the grid.
pub fn smallness_margin(lb: &LocalBounds, tau: f64) -> f64 {
    lb.a_u
        .values
        .iter()
        .zip(&lb.b_u.values)
        .map(|(&a, &b)| a * a + tau * b)
        .fold(0.0, f64::max)
}

/// True iff `(A^u)^2 + tau B^u < 1/4` at every node.
pub fn check_smallness(lb: &LocalBounds, tau: f64) -> bool {
    smallness_margin(lb, tau) < 0.25
}

/// All residual bounds, pointwise. Requires the smallness condition.
pub fn residual_bounds(lb: &LocalBounds, tau: f64) -> Result<ResidualBoundFields> {
    let worst = smallness_margin(lb, tau);
    if !(worst < 0.25) {
        return Err(Error::SmallnessViolated { worst });
    }
    Ok(residual_bounds_unchecked(lb, tau))
}

fn residual_bounds_unchecked(lb: &LocalBounds, tau: f64) -> ResidualBoundFields {
    let n = lb.len();
    let cells = lb.a_u.cells;
    let mut cols: [Vec<f64>; 8] = Default::default();
    for c in cols.iter_mut() {
        c.reserve(n);
    }
    for k in 0..n {
        let r = lb.at(k).residual_bounds(tau);
        for (c, v) in cols.iter_mut().zip([
            r.ru1, r.grad_ru1, r.ru2, r.grad_ru2, r.ru3, r.grad_ru3, r.rw, r.rg,
        ]) {
            c.push(v);
        }
    }
    let [ru1, grad_ru1, ru2, grad_ru2, ru3, grad_ru3, rw, rg] =
        cols.map(|values| ScalarField { cells, values });
    let ru = ScalarField {
        cells,
        values: (0..n).map(|k| ru1[k] + ru2[k] + ru3[k]).collect(),
    };
    let grad_ru = ScalarField {
        cells,
        values: (0..n)
            .map(|k| grad_ru1[k] + grad_ru2[k] + grad_ru3[k])
            .collect(),
    };
    ResidualBoundFields {
        ru1,
        grad_ru1,
        ru2,
        grad_ru2,
        ru3,
        grad_ru3,
        rw,
        rg,
        ru,
        grad_ru,
    }
}

fn w_majorant(lb: &LocalBounds, tau: f64) -> ScalarField {
    lb.c_w.zip_with(&lb.b_w, |c, b| c + tau * b)
}

/// Upper bound for the residual rate:
/// `|rg + ru W + rw|_2 + |ru|_2 + |grad ru|_2`, with `W = C^w + tau B^w`
/// majorising `|w~|`.
pub fn alpha_hat(rbf: &ResidualBoundFields, lb: &LocalBounds, tau: f64, g: &Grid2D) -> f64 {
    let w = w_majorant(lb, tau);
    let n = lb.len();
    let combined = ScalarField {
        cells: lb.a_u.cells,
        values: (0..n)
            .map(|k| rbf.rg[k] + rbf.ru[k] * w[k] + rbf.rw[k])
            .collect(),
    };
    g.lp_norm(&combined, 2.0) + g.lp_norm(&rbf.ru, 2.0) + g.lp_norm(&rbf.grad_ru, 2.0)
}

/// Upper bound for the Gronwall rate:
/// `1 + c_q |G^2 + W^2|_p + 2 c_q |W|_{2p}^2 + 2 c_q |G|_{2p} |W|_{2p} + 4 |W|_inf`
/// with `W` majorising `|u~ x w~|` and `G = 2 (C^u_x + tau B^u_x)` majorising
/// `|grad u~|`.
pub fn delta_hat(lb: &LocalBounds, tau: f64, cfg: &SolverConfig, g: &Grid2D) -> f64 {
    let w = w_majorant(lb, tau);
    let gr = lb.c_u_x.zip_with(&lb.b_u_x, |c, b| 2.0 * (c + tau * b));
    delta_from_majorants(&w, &gr, cfg.c_q, cfg.p_exp, g)
}

pub(crate) fn delta_from_majorants(
    w: &ScalarField,
    gr: &ScalarField,
    c_q: f64,
    p: f64,
    g: &Grid2D,
) -> f64 {
    let a = gr.zip_with(w, |x, y| x * x + y * y);
    let w2p = g.lp_norm(w, 2.0 * p);
    let g2p = g.lp_norm(gr, 2.0 * p);
    1.0 + c_q * g.lp_norm(&a, p)
        + 2.0 * c_q * w2p * w2p
        + 2.0 * c_q * g2p * w2p
        + 4.0 * g.lp_norm(w, f64::INFINITY)
}

/// Everything the estimator derives from one step.
#[derive(Debug, Clone)]
pub struct StepEstimate {
    pub alpha_hat: f64,
    pub delta_hat: f64,
    pub smallness: f64,
    pub local: LocalBounds,
    pub bounds: ResidualBoundFields,
}

impl StepEstimate {
    pub fn int_alpha(&self, tau: f64) -> f64 {
        tau * self.alpha_hat
    }

    pub fn int_delta(&self, tau: f64) -> f64 {
        tau * self.delta_hat
    }
}

/// Local quantities, smallness check, bounds and both rates for one step.
pub fn estimate_step(rec: &StepRecord, cfg: &SolverConfig, g: &Grid2D) -> Result<StepEstimate> {
    let local = local_quantities(rec, g);
    let smallness = smallness_margin(&local, rec.tau);
    let bounds = residual_bounds(&local, rec.tau)?;
    Ok(StepEstimate {
        alpha_hat: alpha_hat(&bounds, &local, rec.tau, g),
        delta_hat: delta_hat(&local, rec.tau, cfg, g),
        smallness,
        local,
        bounds,
    })
}

/// One accepted step in the estimator history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorEntry {
    pub t: f64,
    pub tau: f64,
    pub alpha_hat: f64,
    pub delta_hat: f64,
    pub int_alpha: f64,
    pub int_delta: f64,
    pub bound: f64,
}

/// Running Gronwall accumulator
/// `B_j = (B_{j-1} + int alpha_j) exp(int delta_j / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub j: usize,
    pub bound: f64,
    pub delta_total: f64,
    pub history: Vec<EstimatorEntry>,
}

impl EstimatorState {
    pub fn new(b0: f64) -> Self {
        Self {
            j: 0,
            bound: b0,
            delta_total: 0.0,
            history: Vec::new(),
        }
    }

    pub fn accumulate(&mut self, int_alpha: f64, int_delta: f64) -> f64 {
        debug_assert!(int_alpha >= 0.0 && int_delta >= 0.0);
        self.bound = (self.bound + int_alpha) * (0.5 * int_delta).exp();
        self.delta_total += int_delta;
        self.j += 1;
        self.bound
    }

    /// Accumulates one step and records it in the history.
    pub fn push(&mut self, t: f64, tau: f64, alpha_hat: f64, delta_hat: f64) -> f64 {
        let int_alpha = tau * alpha_hat;
        let int_delta = tau * delta_hat;
        let bound = self.accumulate(int_alpha, int_delta);
        self.history.push(EstimatorEntry {
            t,
            tau,
            alpha_hat,
            delta_hat,
            int_alpha,
            int_delta,
            bound,
        });
        bound
    }

    /// Cumulative `int alpha` over the recorded history up to time `t`.
    pub fn integrated_alpha_until(&self, t: f64) -> f64 {
        self.history
            .iter()
            .take_while(|e| e.t <= t + 1e-12)
            .map(|e| e.int_alpha)
            .sum()
    }

    pub fn integrated_delta_until(&self, t: f64) -> f64 {
        self.history
            .iter()
            .take_while(|e| e.t <= t + 1e-12)
            .map(|e| e.int_delta)
            .sum()
    }

    pub fn bound_at(&self, t: f64) -> f64 {
        self.history
            .iter()
            .take_while(|e| e.t <= t + 1e-12)
            .last()
            .map_or(self.bound_initial(), |e| e.bound)
    }

    fn bound_initial(&self) -> f64 {
        // invert the recorded history to recover B_0
        match self.history.first() {
            None => self.bound,
            Some(e) => e.bound * (-0.5 * e.int_delta).exp() - e.int_alpha,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t_j",
            "tau_j",
            "alpha_hat",
            "delta_hat",
            "int_alpha",
            "int_delta",
            "B_j",
        ])?;
        for e in &self.history {
            w.write_record(
                [
                    e.t,
                    e.tau,
                    e.alpha_hat,
                    e.delta_hat,
                    e.int_alpha,
                    e.int_delta,
                    e.bound,
                ]
                .map(|v| format!("{v:e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pointwise `|a x b|` check used by tests: `B^u <= A^u C^w + A^w max|u|`.
#[doc(hidden)]
pub fn cross_jump_majorant(rec: &StepRecord) -> ScalarField {
    let du = rec.u_np1.sub(&rec.u_n);
    let dw = rec.w_np1.sub(&rec.w_n);
    let cw = rec
        .w_n
        .magnitude()
        .zip_with(&rec.w_np1.magnitude(), f64::max);
    let umax = rec
        .u_n
        .magnitude()
        .zip_with(&rec.u_np1.magnitude(), f64::max);
    let v: Vec<f64> = (0..du.len())
        .map(|k| norm3(du[k]) * cw[k] + norm3(dw[k]) * umax[k])
        .collect();
    ScalarField {
        cells: du.cells(),
        values: v,
    }
}
