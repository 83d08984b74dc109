//! L2 normalization with the exact Jacobian backward pass, and the
//! feature-gradient-norm analysis it implies.
//!
//! Dividing by the norm gives the backward pass a `1/norm` factor, so
//! under feature normalization small-norm inputs receive much larger
//! gradients. `gradnorm_curve` tabulates that effect against the
//! unnormalized loss; the two curves cross near the scale `s`.

use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};
use crate::loss::{loss_forward_backward, Batch, ClassifierHead, LossConfig, LossVariant};
use crate::numeric::{dot, vec_norm, Matrix};

/// Default norm floor; inputs at or below it are rejected rather than
/// clamped, since tiny norms explode the backward pass.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Forward values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct NormCache {
    input: Vec<f64>,
    norm: f64,
    output: Vec<f64>,
}

impl NormCache {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Projects `v` onto the unit sphere, returning the unit vector and the
/// cache for the backward pass.
pub fn l2_normalize(v: &[f64], eps: f64) -> CoreResult<(Vec<f64>, NormCache)> {
    if v.is_empty() {
        return Err(CoreError::EmptyInput("l2_normalize input"));
    }
    let norm = vec_norm(v);
    if norm <= eps {
        return Err(CoreError::DegenerateNorm { norm, eps });
    }
    let output: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let cache = NormCache {
        input: v.to_vec(),
        norm,
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Backward pass of the normalization: `(I - y y^T) upstream / norm`
/// with `y` the cached unit output. The radial component of the
/// upstream gradient is annihilated.
pub fn l2_normalize_backward(cache: &NormCache, upstream: &[f64]) -> CoreResult<Vec<f64>> {
    if upstream.len() != cache.output.len() {
        return Err(CoreError::LengthMismatch {
            what: "l2_normalize_backward upstream",
            left: cache.output.len(),
            right: upstream.len(),
        });
    }
    let radial = dot(upstream, &cache.output);
    Ok(upstream
        .iter()
        .zip(&cache.output)
        .map(|(u, y)| (u - radial * y) / cache.norm)
        .collect())
}

/// One row of the gradient-norm table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradNormPoint {
    /// The feature norm the gradients were evaluated at.
    pub feature_norm: f64,
    /// Gradient norm of the feature-normalized loss at scale `s`.
    pub grad_fn: f64,
    /// Gradient norm of the plain softmax loss on raw logits.
    pub grad_plain: f64,
}

/// Direction used for the gradient-norm analysis: the normalized mean
/// of the target class weight and its nearest other class weight.
pub fn gradnorm_direction(head: &ClassifierHead, target: usize) -> CoreResult<Vec<f64>> {
    let c = head.class_count();
    if target >= c {
        return Err(CoreError::LabelOutOfRange {
            label: target,
            classes: c,
        });
    }
    if c < 2 {
        return Err(CoreError::InsufficientClasses {
            needed: 2,
            available: c,
        });
    }
    let (w_t, _) = l2_normalize(head.weights().row(target), DEFAULT_EPS)?;
    let mut nearest = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for j in 0..c {
        if j == target {
            continue;
        }
        let (w_j, _) = l2_normalize(head.weights().row(j), DEFAULT_EPS)?;
        let score = dot(&w_t, &w_j);
        if score > best {
            best = score;
            nearest = j;
        }
    }
    let (w_n, _) = l2_normalize(head.weights().row(nearest), DEFAULT_EPS)?;
    let mean: Vec<f64> = w_t.iter().zip(&w_n).map(|(a, b)| a + b).collect();
    let (dir, _) = l2_normalize(&mean, DEFAULT_EPS)?;
    Ok(dir)
}

/// Feature-gradient norms of the normalized loss (scale `s`, no margin)
/// and of the plain softmax loss, evaluated at `norm * direction` for
/// every requested norm, with the direction built by
/// [`gradnorm_direction`] and the sample labeled `target`.
pub fn gradnorm_curve(
    head: &ClassifierHead,
    target: usize,
    norms: &[f64],
    s: f64,
) -> CoreResult<Vec<GradNormPoint>> {
    if norms.is_empty() {
        return Err(CoreError::EmptyInput("feature norms"));
    }
    for &a in norms {
        if !(a > 0.0 && a.is_finite()) {
            return Err(CoreError::OutOfDomain {
                what: "feature norm",
                value: a,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
    }
    let direction = gradnorm_direction(head, target)?;
    let normalized_cfg = LossConfig::new(LossVariant::NormFace).with_s(s);
    let plain_cfg = LossConfig::new(LossVariant::Softmax);

    let mut points = Vec::with_capacity(norms.len());
    for &a in norms {
        let scaled: Vec<f64> = direction.iter().map(|x| a * x).collect();
        let features = Matrix::from_vec(1, scaled.len(), scaled)?;
        let batch = Batch::new(features, alloc::vec![target])?;
        let grad_fn = vec_norm(
            loss_forward_backward(&batch, head, &normalized_cfg, 0)?
                .grad_features
                .row(0),
        );
        let grad_plain = vec_norm(
            loss_forward_backward(&batch, head, &plain_cfg, 0)?
                .grad_features
                .row(0),
        );
        points.push(GradNormPoint {
            feature_norm: a,
            grad_fn,
            grad_plain,
        });
    }
    Ok(points)
}
