//! Shared helpers for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wavemap_core::estimator::{check_smallness, local_quantities};
use wavemap_core::grid::{dot3, norm3, scale3, sub3};
use wavemap_core::scheme::{step, SolverConfig};
use wavemap_core::{Grid2D, MomentumField, SphereField, StepRecord, Vec3, VecField};

/// Random smooth vector field built from Neumann-compatible cosine modes
/// `cos(k pi (x + 1/2)) cos(l pi (y + 1/2))`, `k, l < modes`.
pub fn smooth_field(g: &Grid2D, rng: &mut ChaCha8Rng, modes: usize, amp: f64) -> VecField {
    let mut coeffs: Vec<(usize, usize, Vec3)> = Vec::new();
    for k in 0..modes {
        for l in 0..modes {
            let decay = 1.0 / (1.0 + (k * k + l * l) as f64);
            let c = [
                rng.gen_range(-1.0..1.0) * amp * decay,
                rng.gen_range(-1.0..1.0) * amp * decay,
                rng.gen_range(-1.0..1.0) * amp * decay,
            ];
            coeffs.push((k, l, c));
        }
    }
    let pi = std::f64::consts::PI;
    VecField::from_xy(g, |x, y| {
        let mut v = [0.0; 3];
        for &(k, l, c) in &coeffs {
            let b = (k as f64 * pi * (x + 0.5)).cos() * (l as f64 * pi * (y + 0.5)).cos();
            for i in 0..3 {
                v[i] += b * c[i];
            }
        }
        v
    })
}

/// A random smooth state: unit `u`, `w` orthogonal to `u`.
///
/// `u` is a smooth field normalised pointwise. Draws where that field comes
/// close to zero are discarded, since normalising there creates features on
/// the scale of the mesh.
pub fn smooth_state(g: &Grid2D, rng: &mut ChaCha8Rng, w_amp: f64) -> (SphereField, MomentumField) {
    let lifted = loop {
        let base: Vec3 = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let raw = smooth_field(g, rng, 3, 0.8);
        let lifted = raw.map(|v| {
            [
                v[0] + base[0] * 1.5,
                v[1] + base[1] * 1.5,
                v[2] + base[2] * 1.5 + 0.1,
            ]
        });
        if lifted.magnitude().values.iter().all(|&m| m >= MIN_LIFT) {
            break lifted;
        }
    };
    let u = lifted.map(|s| scale3(1.0 / norm3(s), s));
    let wr = smooth_field(g, rng, 3, w_amp);
    let w = u.zip_with(&wr, |a, b| sub3(b, scale3(dot3(a, b), a)));
    (
        SphereField::new_unchecked(u),
        MomentumField::new_unchecked(w),
    )
}

/// Smallest admissible length of the field that gets normalised into `u`.
pub const MIN_LIFT: f64 = 0.5;

/// A step record produced by one midpoint step from a random smooth state,
/// with the step size halved until the smallness condition holds.
pub fn random_record(g: &Grid2D, rng: &mut ChaCha8Rng, cfg: &SolverConfig) -> StepRecord {
    loop {
        let w_amp = rng.gen_range(0.0..4.0);
        let (u, w) = smooth_state(g, rng, w_amp);
        let mut tau = 2f64.powf(-rng.gen_range(6.0..10.0));
        for _ in 0..8 {
            if let Ok(o) = step(&u, &w, tau, cfg, g) {
                let rec = StepRecord::new(g, 0.0, tau, u.clone(), w.clone(), o.u, o.w);
                if check_smallness(&local_quantities(&rec, g), tau) {
                    return rec;
                }
            }
            tau *= 0.5;
        }
    }
}

/// Additive slack per unit mesh width for the bounds that involve discrete
/// spatial derivatives (`r_w` and the gradient parts of `r_u`). Checked
/// against a refinement study in `dominance_calibration.rs`.
pub const KAPPA: f64 = 1e-3;

/// Relative slack for the purely pointwise bounds.
pub const REL_SLACK: f64 = 1e-8;

#[derive(Debug, Default, Clone, Copy)]
pub struct Dominance {
    /// Node checks performed.
    pub checks: usize,
    /// Pointwise bounds violated beyond the relative slack.
    pub pointwise_failures: usize,
    /// Smallest `kappa` that makes the derivative bounds hold.
    pub kappa_needed: f64,
}

impl Dominance {
    pub fn merge(&mut self, o: Dominance) {
        self.checks += o.checks;
        self.pointwise_failures += o.pointwise_failures;
        self.kappa_needed = self.kappa_needed.max(o.kappa_needed);
    }
}

/// Compares every residual bound with the sampled residuals of `rec`.
pub fn dominance(rec: &StepRecord, g: &Grid2D) -> Dominance {
    use wavemap_core::estimator::residual_bounds;
    use wavemap_core::reconstruct::{eval_residuals, sample_times};

    let lb = local_quantities(rec, g);
    let b = residual_bounds(&lb, rec.tau).expect("record satisfies smallness");
    let mut d = Dominance::default();
    for t in sample_times(rec) {
        let r = eval_residuals(rec, t, g).expect("reconstruction is nondegenerate");
        for k in 0..g.len() {
            let pointwise = [
                (norm3(r.r_u1[k]), b.ru1[k]),
                (norm3(r.r_u2[k]), b.ru2[k]),
                (norm3(r.r_u3[k]), b.ru3[k]),
                (norm3(r.r_g[k]), b.rg[k]),
            ];
            for (v, bd) in pointwise {
                d.checks += 1;
                if bd < v * (1.0 - REL_SLACK) {
                    d.pointwise_failures += 1;
                }
            }
            let derivative = [
                (norm3(r.r_w[k]), b.rw[k]),
                (r.grad_r_u1[k], b.grad_ru1[k]),
                (r.grad_r_u2[k], b.grad_ru2[k]),
                (r.grad_r_u3[k], b.grad_ru3[k]),
            ];
            for (v, bd) in derivative {
                d.checks += 1;
                d.kappa_needed = d.kappa_needed.max((v - bd) / g.h());
            }
        }
    }
    d
}
