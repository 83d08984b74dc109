//! Target-logit transforms and the planar decision-boundary geometry of
//! the margin.
//!
//! `psi_a_softmax` is the piecewise multiplicative-margin transform with
//! its annealing weight lambda, `psi_am` the additive transform on the
//! cosine, and the boundary solvers locate the points where (modified)
//! class scores tie on the unit circle.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};
use crate::fp;

use core::f64::consts::PI;

/// Multiplicative-margin transform on the angle:
/// `((-1)^k cos(m theta) - 2k + lambda cos theta) / (1 + lambda)` with
/// `k = floor(m theta / pi)` clamped to `[0, m-1]`.
///
/// Continuous on `[0, pi]`; the clamp keeps the branch index in range
/// when rounding lands `theta = pi` a hair past the last boundary.
pub fn psi_a_softmax(theta: f64, m_mult: u32, lambda: f64) -> CoreResult<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(CoreError::OutOfDomain {
            what: "theta",
            value: theta,
            min: 0.0,
            max: PI,
        });
    }
    if m_mult < 1 {
        return Err(CoreError::InvalidConfig("m_mult must be at least 1"));
    }
    if lambda < 0.0 {
        return Err(CoreError::OutOfDomain {
            what: "lambda",
            value: lambda,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let m = m_mult as f64;
    let k = fp::floor(m * theta / PI).clamp(0.0, m - 1.0);
    let sign = if (k as u64) % 2 == 0 { 1.0 } else { -1.0 };
    Ok((sign * fp::cos(m * theta) - 2.0 * k + lambda * fp::cos(theta)) / (1.0 + lambda))
}

/// Additive-margin transform on the cosine: `cos_theta - m_add`.
///
/// Inputs within 1e-9 of the `[-1, 1]` interval are clamped first; the
/// derivative with respect to `cos_theta` is exactly 1.
pub fn psi_am(cos_theta: f64, m_add: f64) -> CoreResult<f64> {
    const BAND: f64 = 1e-9;
    if !(-1.0 - BAND..=1.0 + BAND).contains(&cos_theta) {
        return Err(CoreError::OutOfDomain {
            what: "cos_theta",
            value: cos_theta,
            min: -1.0,
            max: 1.0,
        });
    }
    Ok(cos_theta.clamp(-1.0, 1.0) - m_add)
}

/// Annealing schedule `lambda(t) = max(lambda_min, lambda_base (1 + gamma t)^-power)`.
///
/// Non-increasing in `t` and bounded below by `lambda_min`. The defaults
/// decay from 1000 down to the floor of 5.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSchedule {
    pub lambda_base: f64,
    pub lambda_min: f64,
    pub gamma: f64,
    pub power: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule {
            lambda_base: 1000.0,
            lambda_min: 5.0,
            gamma: 0.12,
            power: 1.0,
        }
    }
}

impl LambdaSchedule {
    /// Constant schedule, for configurations that want lambda pinned.
    pub fn constant(lambda: f64) -> Self {
        LambdaSchedule {
            lambda_base: lambda,
            lambda_min: lambda,
            gamma: 1.0,
            power: 1.0,
        }
    }

    pub fn validate(&self) -> CoreResult<()> {
        if self.lambda_base < 0.0 || self.lambda_min < 0.0 {
            return Err(CoreError::InvalidConfig("lambda values must be non-negative"));
        }
        if self.gamma <= 0.0 || self.power <= 0.0 {
            return Err(CoreError::InvalidConfig("gamma and power must be positive"));
        }
        Ok(())
    }

    pub fn lambda_at(&self, iteration: u64) -> f64 {
        let decayed = self.lambda_base * fp::powf(1.0 + self.gamma * iteration as f64, -self.power);
        decayed.max(self.lambda_min)
    }
}

/// Angular margin equivalent to subtracting `m_add` from the cosine at
/// operating angle `theta`: `arccos(cos theta - m_add) - theta`.
pub fn cosine_to_angular_margin(theta: f64, m_add: f64) -> CoreResult<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(CoreError::OutOfDomain {
            what: "theta",
            value: theta,
            min: 0.0,
            max: PI,
        });
    }
    let shifted = fp::cos(theta) - m_add;
    if shifted < -1.0 {
        return Err(CoreError::MarginTooLarge {
            m: m_add,
            max: fp::cos(theta) + 1.0,
        });
    }
    Ok(fp::acos(shifted.min(1.0)) - theta)
}

fn unit2(v: [f64; 2], what: &'static str) -> CoreResult<[f64; 2]> {
    let norm = fp::sqrt(v[0] * v[0] + v[1] * v[1]);
    if norm <= 1e-12 {
        return Err(CoreError::NonFinite { what });
    }
    Ok([v[0] / norm, v[1] / norm])
}

/// Decision boundary of the unmodified softmax for a class pair: the
/// unit vector on the short arc with `w1^T p0 = w2^T p0`.
///
/// Inputs are normalized internally; parallel or antiparallel weights
/// are rejected.
pub fn softmax_boundary(w1: [f64; 2], w2: [f64; 2]) -> CoreResult<[f64; 2]> {
    let a = unit2(w1, "w1")?;
    let b = unit2(w2, "w2")?;
    let cross = a[0] * b[1] - a[1] * b[0];
    if fp::abs(cross) < 1e-12 {
        return Err(CoreError::ParallelWeights);
    }
    unit2([a[0] + b[0], a[1] + b[1]], "boundary bisector")
}

/// Boundary vectors for a class pair under the additive margin.
///
/// `p1` solves `w1^T p1 - m = w2^T p1`, `p2` the mirrored equation, and
/// `margin_width_rad` is the angle between them. All three vectors are
/// unit and lie on the short arc between the class weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGeometry {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub margin_width_rad: f64,
}

/// Solves the additive-margin boundary equations by bisection along the
/// arc (tolerance 1e-12 radians; the objective is monotone there).
pub fn am_boundary(w1: [f64; 2], w2: [f64; 2], m_add: f64) -> CoreResult<BoundaryGeometry> {
    if m_add < 0.0 {
        return Err(CoreError::OutOfDomain {
            what: "m_add",
            value: m_add,
            min: 0.0,
            max: 2.0,
        });
    }
    let a = unit2(w1, "w1")?;
    let b = unit2(w2, "w2")?;
    let cross = a[0] * b[1] - a[1] * b[0];
    if fp::abs(cross) < 1e-12 {
        return Err(CoreError::ParallelWeights);
    }
    let delta = fp::acos((a[0] * b[0] + a[1] * b[1]).clamp(-1.0, 1.0));
    let max_m = 1.0 - fp::cos(delta);
    if m_add > max_m {
        return Err(CoreError::MarginTooLarge { m: m_add, max: max_m });
    }

    // Point at angle alpha from w1 along the short arc toward w2.
    let at = |alpha: f64| -> [f64; 2] {
        let s = fp::sin(delta);
        let c1 = fp::sin(delta - alpha) / s;
        let c2 = fp::sin(alpha) / s;
        [c1 * a[0] + c2 * b[0], c1 * a[1] + c2 * b[1]]
    };
    // cos(angle to w1) - cos(angle to w2) - m, strictly decreasing in alpha.
    let objective = |alpha: f64| fp::cos(alpha) - fp::cos(delta - alpha) - m_add;

    let mut lo = 0.0;
    let mut hi = delta / 2.0;
    let mut iter = 0;
    while hi - lo > 1e-12 && iter < 200 {
        let mid = 0.5 * (lo + hi);
        if objective(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
    }
    let alpha = 0.5 * (lo + hi);

    let p0 = softmax_boundary(w1, w2)?;
    let p1 = unit2(at(alpha), "p1")?;
    let p2 = unit2(at(delta - alpha), "p2")?;
    Ok(BoundaryGeometry {
        p0,
        p1,
        p2,
        margin_width_rad: (delta - 2.0 * alpha).max(0.0),
    })
}

/// One column of the psi-curve table: the transform applied to the
/// target logit for a given loss flavor.
#[derive(Clone, Debug, PartialEq)]
pub enum PsiParams {
    /// Unmodified target logit `cos theta`.
    Softmax,
    /// Multiplicative margin with annealing weight.
    ASoftmax { m_mult: u32, lambda: f64 },
    /// Additive margin on the cosine.
    AmSoftmax { m_add: f64 },
}

impl PsiParams {
    pub fn name(&self) -> String {
        match self {
            PsiParams::Softmax => String::from("softmax"),
            PsiParams::ASoftmax { m_mult, lambda } => {
                format!("a_softmax_m{m_mult}_lambda{lambda}")
            }
            PsiParams::AmSoftmax { m_add } => format!("am_softmax_m{m_add}"),
        }
    }

    pub fn eval(&self, theta: f64) -> CoreResult<f64> {
        match *self {
            PsiParams::Softmax => {
                if !(0.0..=PI).contains(&theta) {
                    return Err(CoreError::OutOfDomain {
                        what: "theta",
                        value: theta,
                        min: 0.0,
                        max: PI,
                    });
                }
                Ok(fp::cos(theta))
            }
            PsiParams::ASoftmax { m_mult, lambda } => psi_a_softmax(theta, m_mult, lambda),
            PsiParams::AmSoftmax { m_add } => psi_am(fp::cos(theta), m_add),
        }
    }
}

/// The curve roster plotted throughout: softmax, three multiplicative
/// parameter sets, and the additive margin at 0.35.
pub fn default_psi_roster() -> Vec<PsiParams> {
    alloc::vec![
        PsiParams::Softmax,
        PsiParams::ASoftmax { m_mult: 2, lambda: 0.0 },
        PsiParams::ASoftmax { m_mult: 4, lambda: 5.0 },
        PsiParams::ASoftmax { m_mult: 4, lambda: 0.0 },
        PsiParams::AmSoftmax { m_add: 0.35 },
    ]
}

/// Psi transforms tabulated on a uniform degree grid over `[0, 180]`.
#[derive(Clone, Debug)]
pub struct PsiCurve {
    pub theta_deg: Vec<f64>,
    /// Column name plus one value per grid point.
    pub columns: Vec<(String, Vec<f64>)>,
}

pub fn psi_curve(configs: &[PsiParams], grid_points: usize) -> CoreResult<PsiCurve> {
    if grid_points < 2 {
        return Err(CoreError::InvalidConfig("grid_points must be at least 2"));
    }
    if configs.is_empty() {
        return Err(CoreError::EmptyInput("psi configs"));
    }
    let theta_deg: Vec<f64> = (0..grid_points)
        .map(|i| 180.0 * i as f64 / (grid_points - 1) as f64)
        .collect();
    let mut columns = Vec::with_capacity(configs.len());
    for config in configs {
        let mut values = Vec::with_capacity(grid_points);
        for &deg in &theta_deg {
            values.push(config.eval(deg.to_radians().min(PI))?);
        }
        columns.push((config.name(), values));
    }
    Ok(PsiCurve { theta_deg, columns })
}
