//! Iterative reference solver for the safety-filter QP.
//!
//! A textbook primal-dual interior-point method on
//! `min ½‖u - u_nom‖²  s.t.  g·u - s = b, s ≥ 0` with `b = -γh`. It shares
//! nothing with the closed-form projection beyond the problem data and is
//! only meant for cross-checking it.

use super::CbfError;
use crate::geometry::Vec3;
use nalgebra::{SMatrix, SVector};

const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-13;

/// Solves `argmin ‖u - u_nominal‖ s.t. gradient·u ≥ -gamma·h` iteratively.
pub fn qp_oracle(u_nominal: &Vec3, gradient: &Vec3, h: f64, gamma: f64) -> Result<Vec3, CbfError> {
    let g_norm = gradient.norm();
    if !(g_norm > 0.0) {
        return Err(CbfError::ZeroGradient);
    }
    let b = -gamma * h;
    let scale = 1.0 + u_nominal.norm() + b.abs() / g_norm;

    let mut u = *u_nominal;
    let mut lambda = 1.0;
    let mut s = (gradient.dot(&u) - b).max(1.0);

    for _ in 0..MAX_ITERATIONS {
        let r_dual = (u - u_nominal) - gradient * lambda;
        let r_primal = gradient.dot(&u) - s - b;
        let mu = s * lambda;
        if r_dual.norm() <= TOLERANCE * scale
            && r_primal.abs() <= TOLERANCE * scale * g_norm
            && mu <= TOLERANCE * TOLERANCE * scale
        {
            return Ok(u);
        }

        // affine-scaling predictor followed by a centred corrector
        let kkt = kkt_matrix(gradient, s, lambda);
        let lu = kkt.lu();
        let predictor = lu
            .solve(&rhs(&r_dual, r_primal, -s * lambda))
            .ok_or(CbfError::NonConvergence(0))?;
        let (alpha_p, alpha_d) = step_lengths(s, lambda, predictor[4], predictor[3], 1.0);
        let mu_aff = (s + alpha_p * predictor[4]) * (lambda + alpha_d * predictor[3]);
        let sigma = (mu_aff / mu).powi(3).min(1.0);
        let corrector_rhs = -s * lambda - predictor[4] * predictor[3] + sigma * mu;
        let step = lu
            .solve(&rhs(&r_dual, r_primal, corrector_rhs))
            .ok_or(CbfError::NonConvergence(0))?;
        let (alpha_p, alpha_d) = step_lengths(s, lambda, step[4], step[3], 0.995);

        u += alpha_p * Vec3::new(step[0], step[1], step[2]);
        s += alpha_p * step[4];
        lambda += alpha_d * step[3];
    }
    Err(CbfError::NonConvergence(MAX_ITERATIONS))
}

/// Unknowns ordered `(du, dλ, ds)`.
fn kkt_matrix(g: &Vec3, s: f64, lambda: f64) -> SMatrix<f64, 5, 5> {
    let mut m = SMatrix::<f64, 5, 5>::zeros();
    for i in 0..3 {
        m[(i, i)] = 1.0;
        m[(i, 3)] = -g[i];
        m[(3, i)] = g[i];
    }
    m[(3, 4)] = -1.0;
    m[(4, 3)] = s;
    m[(4, 4)] = lambda;
    m
}

fn rhs(r_dual: &Vec3, r_primal: f64, complementarity: f64) -> SVector<f64, 5> {
    SVector::<f64, 5>::new(-r_dual.x, -r_dual.y, -r_dual.z, -r_primal, complementarity)
}

fn step_lengths(s: f64, lambda: f64, ds: f64, dlambda: f64, fraction: f64) -> (f64, f64) {
    let limit = |v: f64, dv: f64| {
        if dv < 0.0 {
            (fraction * -v / dv).min(1.0)
        } else {
            1.0
        }
    };
    (limit(s, ds), limit(lambda, dlambda))
}
