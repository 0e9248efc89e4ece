//! Funnel-shaped control barrier function and the velocity safety filter.
//!
//! The safe set is the paraboloid of revolution around the target's +x axis
//!
//! ```text
//! h(x, y, z) = x - a * sqrt(l),   l = sqrt(y² + z²)
//! ```
//!
//! which narrows to a point at the target origin (the contact point). With
//! single-integrator kinematics `ṗ = u` the filter solves
//!
//! ```text
//! min_u ‖u - u_nom‖²   s.t.   ∇h · u ≥ -γ h
//! ```
//!
//! A single affine constraint admits a closed-form projection, so no solver
//! is needed at run time. [`reference::qp_oracle`] solves the same problem
//! iteratively and exists to cross-check the closed form.

pub mod reference;

use crate::geometry::{RelativePosition, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reference::qp_oracle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("invalid barrier parameters: {0}")]
    InvalidParams(&'static str),
    #[error("lateral distance {l:e} m is inside the axis singularity (l_eps = {l_eps:e} m)")]
    AxisSingularity { l: f64, l_eps: f64 },
    #[error("non-finite relative position")]
    NonFinite,
    #[error("reference QP did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("constraint gradient has zero norm")]
    ZeroGradient,
}

/// Shape and gain of the funnel barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    /// Funnel shape, m^(1/2). Larger values narrow the funnel.
    pub a: f64,
    /// Linear class-K gain, ω(h) = γ·h, 1/s.
    pub gamma: f64,
    /// Below this lateral distance (m) the gradient is treated as singular.
    pub l_eps: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            a: 3.0,
            gamma: 1.0,
            l_eps: 1e-3,
        }
    }
}

impl BarrierParams {
    pub fn new(a: f64, gamma: f64, l_eps: f64) -> Result<Self, CbfError> {
        let p = Self { a, gamma, l_eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CbfError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(CbfError::InvalidParams("a must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CbfError::InvalidParams("gamma must be positive"));
        }
        if !(self.l_eps > 0.0 && self.l_eps.is_finite()) {
            return Err(CbfError::InvalidParams("l_eps must be positive"));
        }
        Ok(())
    }

    /// Class-K bound on the barrier's decay rate.
    pub fn omega(&self, h: f64) -> f64 {
        self.gamma * h
    }
}

/// Barrier value and gradient at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierEvaluation {
    pub h: f64,
    /// `(1, ∂h/∂y, ∂h/∂z)` off-axis; `(1, 0, 0)` on-axis where the true
    /// gradient is unbounded.
    pub gradient: Vec3,
    pub on_axis: bool,
}

/// `h = x - a·(y² + z²)^(1/4)`: positive inside the funnel, negative outside.
pub fn barrier_value(rel: &RelativePosition, params: &BarrierParams) -> f64 {
    rel.x - params.a * rel.lateral().sqrt()
}

/// `∇h = (1, -a·y / (2 l^(3/2)), -a·z / (2 l^(3/2)))`.
pub fn barrier_gradient(rel: &RelativePosition, params: &BarrierParams) -> Result<Vec3, CbfError> {
    let l = rel.lateral();
    if l < params.l_eps {
        return Err(CbfError::AxisSingularity {
            l,
            l_eps: params.l_eps,
        });
    }
    let scale = -params.a / (2.0 * l * l.sqrt());
    Ok(Vec3::new(1.0, scale * rel.y, scale * rel.z))
}

pub fn evaluate(rel: &RelativePosition, params: &BarrierParams) -> BarrierEvaluation {
    let h = barrier_value(rel, params);
    match barrier_gradient(rel, params) {
        Ok(gradient) => BarrierEvaluation {
            h,
            gradient,
            on_axis: false,
        },
        Err(_) => BarrierEvaluation {
            h,
            gradient: Vec3::new(1.0, 0.0, 0.0),
            on_axis: true,
        },
    }
}

/// Euclidean projection of `u_nominal` onto the half-space
/// `{u : gradient·u ≥ -gamma·h}`.
///
/// Returns the input bit-for-bit when it is already feasible.
pub fn project_onto_constraint(u_nominal: &Vec3, gradient: &Vec3, h: f64, gamma: f64) -> Vec3 {
    let rhs = -gamma * h;
    let slack = gradient.dot(u_nominal) - rhs;
    if slack >= 0.0 {
        return *u_nominal;
    }
    let lambda = -slack / gradient.norm_squared();
    u_nominal + lambda * gradient
}

/// Minimally invasive modification of `u_nominal` (target frame) so that
/// `∇h·u ≥ -γh`. Fails inside the axis singularity, where the caller is
/// expected to use the nominal command directly.
pub fn safety_filter(
    u_nominal: &Vec3,
    rel: &RelativePosition,
    params: &BarrierParams,
) -> Result<Vec3, CbfError> {
    if !rel.is_finite() {
        return Err(CbfError::NonFinite);
    }
    let gradient = barrier_gradient(rel, params)?;
    let h = barrier_value(rel, params);
    Ok(project_onto_constraint(
        u_nominal,
        &gradient,
        h,
        params.gamma,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(a: f64) -> BarrierParams {
        BarrierParams::new(a, 1.0, 1e-3).unwrap()
    }

    #[test]
    fn value_examples() {
        assert_eq!(
            barrier_value(&RelativePosition::new(2.0, 0.0, 0.0), &params(3.0)),
            2.0
        );
        assert!(
            (barrier_value(&RelativePosition::new(1.0, 1.0, 0.0), &params(3.0)) + 2.0).abs()
                < 1e-15
        );
        let p = params(1.7);
        let a = barrier_value(&RelativePosition::new(0.3, 0.4, -0.9), &p);
        let b = barrier_value(&RelativePosition::new(0.3, -0.4, 0.9), &p);
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_example() {
        let g = barrier_gradient(&RelativePosition::new(5.0, 1.0, 0.0), &params(3.0)).unwrap();
        assert_eq!(g, Vec3::new(1.0, -1.5, 0.0));
    }

    #[test]
    fn gradient_on_axis_is_an_error() {
        let err =
            barrier_gradient(&RelativePosition::new(1.0, 1e-4, 0.0), &params(3.0)).unwrap_err();
        assert!(matches!(err, CbfError::AxisSingularity { .. }));
        let ev = evaluate(&RelativePosition::new(1.0, 0.0, 0.0), &params(3.0));
        assert!(ev.on_axis);
        assert_eq!(ev.h, 1.0);
        let ev = evaluate(&RelativePosition::new(1.0, 0.5, 0.0), &params(3.0));
        assert!(!ev.on_axis);
        assert_eq!(ev.gradient.x, 1.0);
    }

    #[test]
    fn invalid_params() {
        assert!(BarrierParams::new(0.0, 1.0, 1e-3).is_err());
        assert!(BarrierParams::new(3.0, -1.0, 1e-3).is_err());
        assert!(BarrierParams::new(3.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn inactive_constraint_returns_nominal() {
        let rel = RelativePosition::new(2.0, 0.1, 0.0);
        let p = params(3.0);
        assert!(barrier_value(&rel, &p) > 0.0);
        let u = Vec3::new(-0.1, 0.0, 0.0);
        assert_eq!(safety_filter(&u, &rel, &p).unwrap(), u);
    }

    #[test]
    fn violated_constraint_projects() {
        let rel = RelativePosition::new(1.0, 1.0, 0.0);
        let out = safety_filter(&Vec3::zeros(), &rel, &params(3.0)).unwrap();
        // λ = 2 / 3.25 along ∇h = (1, -1.5, 0)
        let expected = Vec3::new(2.0 / 3.25, -3.0 / 3.25, 0.0);
        assert!((out - expected).norm() < 1e-15);
        assert!((out - Vec3::new(0.6154, -0.9231, 0.0)).norm() < 1e-4);
        let oracle = qp_oracle(&Vec3::zeros(), &Vec3::new(1.0, -1.5, 0.0), -2.0, 1.0).unwrap();
        assert!((oracle - expected).norm() < 1e-8);
    }

    #[test]
    fn violated_projection_is_grid_minimal() {
        let rel = RelativePosition::new(0.5, 0.3, -0.2);
        let p = params(2.0);
        let u_nom = Vec3::new(-1.0, 0.4, 0.1);
        let g = barrier_gradient(&rel, &p).unwrap();
        let h = barrier_value(&rel, &p);
        assert!(g.dot(&u_nom) < -p.gamma * h);
        let out = safety_filter(&u_nom, &rel, &p).unwrap();
        let best = (out - u_nom).norm();
        let n = 40;
        let span = 4.0;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let step = |s: i32| -span + 2.0 * span * s as f64 / n as f64;
                    let cand = u_nom + Vec3::new(step(i), step(j), step(k));
                    if g.dot(&cand) >= -p.gamma * h {
                        assert!((cand - u_nom).norm() >= best - 1e-12);
                    }
                }
            }
        }
    }

    fn off_axis_rel() -> impl Strategy<Value = RelativePosition> {
        (-5.0f64..5.0, 0.1f64..3.0, 0.0f64..std::f64::consts::TAU)
            .prop_map(|(x, l, th)| RelativePosition::new(x, l * th.cos(), l * th.sin()))
    }

    proptest! {
        #[test]
        fn filter_satisfies_constraint_and_is_idempotent(
            rel in off_axis_rel(),
            u in prop::array::uniform3(-3.0f64..3.0),
            a in 0.5f64..5.0,
            gamma in 0.1f64..5.0,
        ) {
            let p = BarrierParams::new(a, gamma, 1e-3).unwrap();
            let u = Vec3::from(u);
            let once = safety_filter(&u, &rel, &p).unwrap();
            let g = barrier_gradient(&rel, &p).unwrap();
            let h = barrier_value(&rel, &p);
            prop_assert!(g.dot(&once) + gamma * h >= -1e-9);
            let twice = safety_filter(&once, &rel, &p).unwrap();
            prop_assert!((twice - once).norm() <= 1e-9);
            if g.dot(&u) >= -gamma * h {
                prop_assert_eq!(once, u);
            }
        }

        #[test]
        fn level_sets_are_axisymmetric(rel in off_axis_rel(), a in 0.5f64..5.0) {
            let p = params(a);
            let r = rel.lateral();
            let h1 = barrier_value(&rel, &p);
            let h2 = barrier_value(&RelativePosition::new(rel.x, r, 0.0), &p);
            prop_assert!((h1 - h2).abs() <= 1e-12);
        }

        #[test]
        fn gradient_lateral_components_are_odd(rel in off_axis_rel()) {
            let p = params(3.0);
            let g = barrier_gradient(&rel, &p).unwrap();
            let gy = barrier_gradient(&RelativePosition::new(rel.x, -rel.y, rel.z), &p).unwrap();
            let gz = barrier_gradient(&RelativePosition::new(rel.x, rel.y, -rel.z), &p).unwrap();
            prop_assert_eq!(gy.y, -g.y);
            prop_assert_eq!(gz.z, -g.z);
        }
    }
}
