//! Forward and backward passes for the four loss variants, cosine
//! prediction, and the finite-difference gradient checker.
//!
//! All variants share one code path: features and class weights are
//! optionally projected to the unit sphere, the target cosine runs
//! through the variant's transform, logits are scaled (by the fixed `s`
//! or by the per-sample feature norm), and a numerically stable softmax
//! produces the loss. Gradients are exact derivatives of that
//! expression, including through both normalizations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};
use crate::fp;
use crate::margin::LambdaSchedule;
use crate::numeric::{dot, stable_logsumexp, vec_norm, Matrix, Rng};

/// Norm floor below which a feature or weight row is degenerate.
pub const NORM_EPS: f64 = 1e-12;

/// Cosines are clamped inside this band before `acos`, bounding the
/// derivative `1/sqrt(1 - x^2)`.
const ACOS_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossVariant {
    /// Raw inner-product logits, no normalization.
    Softmax,
    /// Both normalizations, fixed scale, no margin.
    NormFace,
    /// Weight normalization only; multiplicative angular margin with
    /// annealing, scaled by the per-sample feature norm.
    ASoftmax,
    /// Both normalizations (feature side optional for the no-FN
    /// ablation), fixed scale, additive cosine margin.
    AmSoftmax,
}

impl LossVariant {
    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::Softmax => "softmax",
            LossVariant::NormFace => "normface",
            LossVariant::ASoftmax => "a_softmax",
            LossVariant::AmSoftmax => "am_softmax",
        }
    }
}

/// Hyper-parameters for every loss variant.
///
/// Fields a variant does not use are ignored: `softmax` reads none of
/// them, `normface` reads only `s`, `a_softmax` reads `m_mult` and the
/// schedule, `am_softmax` reads `s` and `m_add`. The scale is a fixed
/// constant, never learned.
#[derive(Clone, Debug)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub s: f64,
    pub m_add: f64,
    pub m_mult: u32,
    pub lambda_schedule: LambdaSchedule,
    pub feature_norm: bool,
    pub weight_norm: bool,
}

impl LossConfig {
    /// Defaults for a variant, with the normalization flags the variant
    /// implies (`am_softmax` may flip `feature_norm` off afterwards for
    /// the no-FN ablation).
    pub fn new(variant: LossVariant) -> LossConfig {
        let (feature_norm, weight_norm) = match variant {
            LossVariant::Softmax => (false, false),
            LossVariant::NormFace => (true, true),
            LossVariant::ASoftmax => (false, true),
            LossVariant::AmSoftmax => (true, true),
        };
        LossConfig {
            variant,
            s: 30.0,
            m_add: 0.35,
            m_mult: 4,
            lambda_schedule: LambdaSchedule::default(),
            feature_norm,
            weight_norm,
        }
    }

    pub fn with_s(mut self, s: f64) -> LossConfig {
        self.s = s;
        self
    }

    pub fn with_m_add(mut self, m_add: f64) -> LossConfig {
        self.m_add = m_add;
        self
    }

    pub fn validate(&self) -> CoreResult<()> {
        match self.variant {
            LossVariant::Softmax => {
                if self.feature_norm || self.weight_norm {
                    return Err(CoreError::InvalidLossConfig(
                        "softmax uses raw logits and admits no normalization",
                    ));
                }
            }
            LossVariant::NormFace => {
                if !self.feature_norm || !self.weight_norm {
                    return Err(CoreError::InvalidLossConfig(
                        "normface requires feature and weight normalization",
                    ));
                }
            }
            LossVariant::ASoftmax => {
                if self.feature_norm || !self.weight_norm {
                    return Err(CoreError::InvalidLossConfig(
                        "a_softmax normalizes weights only and scales by the feature norm",
                    ));
                }
                if self.m_mult < 1 {
                    return Err(CoreError::InvalidLossConfig("m_mult must be at least 1"));
                }
                self.lambda_schedule.validate()?;
            }
            LossVariant::AmSoftmax => {
                if !self.weight_norm {
                    return Err(CoreError::InvalidLossConfig(
                        "am_softmax requires weight normalization",
                    ));
                }
                if !(0.0..1.0).contains(&self.m_add) {
                    return Err(CoreError::InvalidLossConfig("m_add must lie in [0, 1)"));
                }
            }
        }
        let uses_s = matches!(self.variant, LossVariant::NormFace | LossVariant::AmSoftmax)
            && self.feature_norm;
        if uses_s && !(self.s > 0.0 && self.s.is_finite()) {
            return Err(CoreError::InvalidLossConfig("scale s must be positive"));
        }
        Ok(())
    }

    /// The margin actually applied to the target cosine.
    fn effective_m_add(&self) -> f64 {
        match self.variant {
            LossVariant::AmSoftmax => self.m_add,
            _ => 0.0,
        }
    }
}

/// The `c x d` matrix of class weight vectors, one class per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    weights: Matrix,
}

impl ClassifierHead {
    pub fn new(weights: Matrix) -> CoreResult<ClassifierHead> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(CoreError::EmptyInput("classifier weights"));
        }
        Ok(ClassifierHead { weights })
    }

    /// Head with rows drawn uniformly on the unit sphere.
    pub fn random_unit(classes: usize, dim: usize, rng: &mut Rng) -> CoreResult<ClassifierHead> {
        let mut weights = Matrix::zeros(classes, dim);
        for j in 0..classes {
            let row = rng.unit_vector(dim)?;
            weights.row_mut(j).copy_from_slice(&row);
        }
        ClassifierHead::new(weights)
    }

    pub fn class_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    /// Rescales every row to unit norm; called after optimizer steps
    /// when weight normalization is active.
    pub fn normalize_rows(&mut self) -> CoreResult<()> {
        for j in 0..self.weights.rows() {
            let row = self.weights.row_mut(j);
            let norm = vec_norm(row);
            if norm <= NORM_EPS {
                return Err(CoreError::DegenerateNorm {
                    norm,
                    eps: NORM_EPS,
                });
            }
            for v in row {
                *v /= norm;
            }
        }
        Ok(())
    }
}

/// A batch of features (one sample per row) with integer labels.
#[derive(Clone, Debug)]
pub struct Batch {
    features: Matrix,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> CoreResult<Batch> {
        if features.rows() == 0 {
            return Err(CoreError::EmptyInput("batch features"));
        }
        if features.rows() != labels.len() {
            return Err(CoreError::LengthMismatch {
                what: "batch features vs labels",
                left: features.rows(),
                right: labels.len(),
            });
        }
        Ok(Batch { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Loss value with exact gradients and per-sample diagnostics.
#[derive(Clone, Debug)]
pub struct LossOutput {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Gradient with respect to the raw input features, `n x d`.
    pub grad_features: Matrix,
    /// Gradient with respect to the raw head weights, `c x d`.
    pub grad_weights: Matrix,
    /// Pre-softmax score of each sample's true class.
    pub target_logits: Vec<f64>,
    /// Softmax probabilities, `n x c`; rows sum to one.
    pub probabilities: Matrix,
}

fn check_labels(labels: &[usize], classes: usize) -> CoreResult<()> {
    for &y in labels {
        if y >= classes {
            return Err(CoreError::LabelOutOfRange { label: y, classes });
        }
    }
    Ok(())
}

/// Mean loss and analytic gradients for the configured variant.
///
/// `iteration` drives the lambda annealing of `a_softmax` and is ignored
/// by the other variants.
pub fn loss_forward_backward(
    batch: &Batch,
    head: &ClassifierHead,
    config: &LossConfig,
    iteration: u64,
) -> CoreResult<LossOutput> {
    config.validate()?;
    let c = head.class_count();
    let d = head.embed_dim();
    if batch.features().cols() != d {
        return Err(CoreError::ShapeMismatch {
            op: "loss_forward_backward",
            left: (batch.features().rows(), batch.features().cols()),
            right: (c, d),
        });
    }
    check_labels(batch.labels(), c)?;

    if config.variant == LossVariant::Softmax {
        return raw_softmax(batch, head);
    }
    cosine_family(batch, head, config, iteration)
}

/// Plain softmax on raw inner-product logits.
fn raw_softmax(batch: &Batch, head: &ClassifierHead) -> CoreResult<LossOutput> {
    let n = batch.len();
    let c = head.class_count();
    let logits = batch.features().matmul(&head.weights().transpose())?;

    let mut probabilities = Matrix::zeros(n, c);
    let mut grad_logits = Matrix::zeros(n, c);
    let mut target_logits = Vec::with_capacity(n);
    let mut loss = 0.0;
    for i in 0..n {
        let y = batch.labels()[i];
        let row = logits.row(i);
        let lse = stable_logsumexp(row)?;
        loss += lse - row[y];
        target_logits.push(row[y]);
        for j in 0..c {
            let p = fp::exp(row[j] - lse);
            probabilities.set(i, j, p);
            let indicator = if j == y { 1.0 } else { 0.0 };
            grad_logits.set(i, j, (p - indicator) / n as f64);
        }
    }
    loss /= n as f64;

    let grad_features = grad_logits.matmul(head.weights())?;
    let grad_weights = grad_logits.transpose().matmul(batch.features())?;
    Ok(LossOutput {
        loss,
        grad_features,
        grad_weights,
        target_logits,
        probabilities,
    })
}

/// Target-cosine transform: value and derivative with respect to the
/// cosine.
fn target_transform(config: &LossConfig, cos_target: f64, iteration: u64) -> (f64, f64) {
    match config.variant {
        LossVariant::Softmax => unreachable!("raw softmax handled separately"),
        LossVariant::NormFace => (cos_target, 1.0),
        LossVariant::AmSoftmax => (cos_target - config.effective_m_add(), 1.0),
        LossVariant::ASoftmax => {
            let lambda = config.lambda_schedule.lambda_at(iteration);
            let m = config.m_mult as f64;
            let clamped = fp::abs(cos_target) > 1.0 - ACOS_CLAMP;
            let x = cos_target.clamp(-1.0 + ACOS_CLAMP, 1.0 - ACOS_CLAMP);
            let theta = fp::acos(x);
            let k = fp::floor(m * theta / core::f64::consts::PI).clamp(0.0, m - 1.0);
            let sign = if (k as u64) % 2 == 0 { 1.0 } else { -1.0 };
            let psi = (sign * fp::cos(m * theta) - 2.0 * k + lambda * x) / (1.0 + lambda);
            if clamped {
                // The forward value is constant inside the clamp band.
                return (psi, 0.0);
            }
            let dpsi = (sign * m * fp::sin(m * theta) / fp::sqrt(1.0 - x * x) + lambda)
                / (1.0 + lambda);
            (psi, dpsi)
        }
    }
}

/// Shared path for the three cosine-logit variants.
fn cosine_family(
    batch: &Batch,
    head: &ClassifierHead,
    config: &LossConfig,
    iteration: u64,
) -> CoreResult<LossOutput> {
    let n = batch.len();
    let c = head.class_count();
    let d = head.embed_dim();

    let mut feat_norms = Vec::with_capacity(n);
    let mut feat_unit = Matrix::zeros(n, d);
    for i in 0..n {
        let row = batch.features().row(i);
        let norm = vec_norm(row);
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        feat_norms.push(norm);
        for (k, &v) in row.iter().enumerate() {
            feat_unit.set(i, k, v / norm);
        }
    }
    let mut weight_norms = Vec::with_capacity(c);
    let mut weight_unit = Matrix::zeros(c, d);
    for j in 0..c {
        let row = head.weights().row(j);
        let norm = vec_norm(row);
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        weight_norms.push(norm);
        for (k, &v) in row.iter().enumerate() {
            weight_unit.set(j, k, v / norm);
        }
    }

    let cosines = feat_unit.matmul(&weight_unit.transpose())?;

    let mut probabilities = Matrix::zeros(n, c);
    let mut target_logits = Vec::with_capacity(n);
    let mut grad_cos = Matrix::zeros(n, c);
    let mut loss = 0.0;
    // Gradient flowing into the per-sample scale; only populated when
    // the scale is the feature norm itself.
    let mut grad_scale = vec![0.0; n];

    let mut logits_row = vec![0.0; c];
    for i in 0..n {
        let y = batch.labels()[i];
        let scale = if config.feature_norm {
            config.s
        } else {
            feat_norms[i]
        };
        let (psi, dpsi) = target_transform(config, cosines.get(i, y), iteration);
        for j in 0..c {
            logits_row[j] = scale * cosines.get(i, j);
        }
        logits_row[y] = scale * psi;
        let lse = stable_logsumexp(&logits_row)?;
        loss += lse - logits_row[y];
        target_logits.push(logits_row[y]);

        for j in 0..c {
            let p = fp::exp(logits_row[j] - lse);
            probabilities.set(i, j, p);
            let indicator = if j == y { 1.0 } else { 0.0 };
            let g = (p - indicator) / n as f64;
            if j == y {
                grad_cos.set(i, j, g * scale * dpsi);
                if !config.feature_norm {
                    grad_scale[i] += g * psi;
                }
            } else {
                grad_cos.set(i, j, g * scale);
                if !config.feature_norm {
                    grad_scale[i] += g * cosines.get(i, j);
                }
            }
        }
    }
    loss /= n as f64;

    // Back through the cosine layer.
    let grad_feat_unit = grad_cos.matmul(&weight_unit)?;
    let grad_weight_unit = grad_cos.transpose().matmul(&feat_unit)?;

    // Back through the normalizations: the unit-vector Jacobian projects
    // out the radial component and divides by the norm; an unnormalized
    // scale adds its radial term back.
    let mut grad_features = Matrix::zeros(n, d);
    for i in 0..n {
        let unit = feat_unit.row(i);
        let g = grad_feat_unit.row(i);
        let radial = dot(g, unit);
        let out = grad_features.row_mut(i);
        for k in 0..d {
            out[k] = (g[k] - radial * unit[k]) / feat_norms[i] + grad_scale[i] * unit[k];
        }
    }
    let mut grad_weights = Matrix::zeros(c, d);
    for j in 0..c {
        let unit = weight_unit.row(j);
        let g = grad_weight_unit.row(j);
        let radial = dot(g, unit);
        let out = grad_weights.row_mut(j);
        for k in 0..d {
            out[k] = (g[k] - radial * unit[k]) / weight_norms[j];
        }
    }

    Ok(LossOutput {
        loss,
        grad_features,
        grad_weights,
        target_logits,
        probabilities,
    })
}

/// Cosine-similarity argmax per feature row; ties break to the lowest
/// class index. The margin is train-time only, so prediction always
/// measures the plain cosine.
pub fn predict(features: &Matrix, head: &ClassifierHead) -> CoreResult<Vec<usize>> {
    if features.cols() != head.embed_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "predict",
            left: (features.rows(), features.cols()),
            right: (head.class_count(), head.embed_dim()),
        });
    }
    let c = head.class_count();
    let mut unit_rows = Vec::with_capacity(c);
    for j in 0..c {
        let row = head.weights().row(j);
        let norm = vec_norm(row);
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        unit_rows.push(row.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    let mut labels = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let feat = features.row(i);
        let norm = vec_norm(feat);
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (j, w) in unit_rows.iter().enumerate() {
            let score = dot(feat, w) / norm;
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

/// Iteration fed to the gradient checker; late enough that the default
/// lambda schedule sits at its floor.
const GRAD_CHECK_ITERATION: u64 = 1_000_000;

/// Central-difference step of the gradient checker.
const GRAD_CHECK_STEP: f64 = 1e-5;

/// Random instance with cosines in a moderate band: all vectors cluster
/// around a common hub direction so no class is driven into vanishing
/// probability, which would push true gradient entries below what
/// central differences can resolve.
fn random_instance(
    config: &LossConfig,
    c: usize,
    d: usize,
    n: usize,
    rng: &mut Rng,
) -> CoreResult<(Batch, ClassifierHead)> {
    let hub = rng.unit_vector(d)?;
    let jitter = |rng: &mut Rng, scale: f64| -> CoreResult<Vec<f64>> {
        let mut v = Vec::with_capacity(d);
        for &h in &hub {
            v.push(h + scale * rng.gaussian(0.0, 1.0)?);
        }
        let norm = vec_norm(&v);
        Ok(v.into_iter().map(|x| x / norm).collect())
    };

    let mut weights = Matrix::zeros(c, d);
    for j in 0..c {
        let row = jitter(rng, 0.25)?;
        weights.row_mut(j).copy_from_slice(&row);
    }
    let head = ClassifierHead::new(weights)?;

    let mut labels = Vec::with_capacity(n);
    let mut features = Matrix::zeros(n, d);
    for i in 0..n {
        let y = rng.below(c);
        labels.push(y);
        // For a_softmax, resample until the target angle is clear of the
        // psi branch boundaries (and of the acos clamp at theta = 0).
        let mut attempts = 0;
        loop {
            let dir = jitter(rng, 0.25)?;
            let radius = 0.8 + 0.8 * rng.uniform();
            let keep = if config.variant == LossVariant::ASoftmax {
                let cos_t = dot(&dir, head.weights().row(y));
                let theta = fp::acos(cos_t.clamp(-1.0, 1.0));
                let m = config.m_mult as f64;
                let nearest_boundary = (0..=config.m_mult)
                    .map(|k| fp::abs(theta - k as f64 * core::f64::consts::PI / m))
                    .fold(f64::INFINITY, f64::min);
                nearest_boundary > 0.05
            } else {
                true
            };
            if keep || attempts > 100 {
                for (k, v) in dir.iter().enumerate() {
                    features.set(i, k, radius * v);
                }
                break;
            }
            attempts += 1;
        }
    }
    Ok((Batch::new(features, labels)?, head))
}

fn relative_error(a: f64, b: f64) -> f64 {
    fp::abs(a - b) / fp::abs(a).max(fp::abs(b)).max(1e-8)
}

/// Compares analytic gradients against central finite differences
/// (step 1e-5) on a random instance and returns the maximum relative
/// error, with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check(config: &LossConfig, c: usize, d: usize, n: usize, seed: u64) -> CoreResult<f64> {
    grad_check_corrupted(config, c, d, n, seed, 0.0)
}

/// Gradient check with a perturbation added to one analytic entry; a
/// non-zero `delta` must trip the check (negative control).
pub fn grad_check_corrupted(
    config: &LossConfig,
    c: usize,
    d: usize,
    n: usize,
    seed: u64,
    delta: f64,
) -> CoreResult<f64> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let (batch, head) = random_instance(config, c, d, n, &mut rng)?;
    let analytic = loss_forward_backward(&batch, &head, config, GRAD_CHECK_ITERATION)?;

    let h = GRAD_CHECK_STEP;
    let mut max_err = 0.0f64;

    let mut features = batch.features().clone();
    for i in 0..n {
        for k in 0..d {
            let saved = features.get(i, k);
            features.set(i, k, saved + h);
            let plus = loss_forward_backward(
                &Batch::new(features.clone(), batch.labels().to_vec())?,
                &head,
                config,
                GRAD_CHECK_ITERATION,
            )?
            .loss;
            features.set(i, k, saved - h);
            let minus = loss_forward_backward(
                &Batch::new(features.clone(), batch.labels().to_vec())?,
                &head,
                config,
                GRAD_CHECK_ITERATION,
            )?
            .loss;
            features.set(i, k, saved);
            let numeric = (plus - minus) / (2.0 * h);
            let mut a = analytic.grad_features.get(i, k);
            if i == 0 && k == 0 {
                a += delta;
            }
            max_err = max_err.max(relative_error(a, numeric));
        }
    }

    let mut weights = head.weights().clone();
    for j in 0..c {
        for k in 0..d {
            let saved = weights.get(j, k);
            weights.set(j, k, saved + h);
            let plus = loss_forward_backward(
                &batch,
                &ClassifierHead::new(weights.clone())?,
                config,
                GRAD_CHECK_ITERATION,
            )?
            .loss;
            weights.set(j, k, saved - h);
            let minus = loss_forward_backward(
                &batch,
                &ClassifierHead::new(weights.clone())?,
                config,
                GRAD_CHECK_ITERATION,
            )?
            .loss;
            weights.set(j, k, saved);
            let numeric = (plus - minus) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic.grad_weights.get(j, k), numeric));
        }
    }

    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn two_class_head() -> ClassifierHead {
        ClassifierHead::new(Matrix::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn symmetric_two_class_loss_is_ln_two() {
        let head = two_class_head();
        let z = (1.0f64 - 2.0 * 0.25).sqrt();
        let feat = Matrix::from_vec(1, 3, vec![0.5, 0.5, z]).unwrap();
        let batch = Batch::new(feat, vec![0]).unwrap();
        for s in [1.0, 7.0, 30.0] {
            let config = LossConfig::new(LossVariant::AmSoftmax)
                .with_s(s)
                .with_m_add(0.0);
            let out = loss_forward_backward(&batch, &head, &config, 0).unwrap();
            assert_close(out.loss, core::f64::consts::LN_2, 1e-12);
        }
    }

    #[test]
    fn balanced_c_class_loss_is_ln_c() {
        // Feature equidistant from four orthogonal class weights.
        let head = ClassifierHead::new(Matrix::identity(4)).unwrap();
        let feat = Matrix::from_vec(1, 4, vec![0.5; 4]).unwrap();
        let batch = Batch::new(feat, vec![2]).unwrap();
        let config = LossConfig::new(LossVariant::NormFace).with_s(11.0);
        let out = loss_forward_backward(&batch, &head, &config, 0).unwrap();
        assert_close(out.loss, (4.0f64).ln(), 1e-12);
    }

    // Scalar oracle: z_target = 30 (0.85 - 0.35) = 15, z_other = 3,
    // so the loss is ln(1 + e^-12).
    #[test]
    fn am_softmax_two_class_scalar_value() {
        let head = two_class_head();
        let z = (1.0f64 - 0.85 * 0.85 - 0.01).sqrt();
        let feat = Matrix::from_vec(1, 3, vec![0.85, 0.1, z]).unwrap();
        let batch = Batch::new(feat, vec![0]).unwrap();
        let config = LossConfig::new(LossVariant::AmSoftmax);
        let out = loss_forward_backward(&batch, &head, &config, 0).unwrap();
        assert_close(out.loss, 6.144193477747432e-6, 1e-14);
        assert_close(out.target_logits[0], 15.0, 1e-10);
    }

    #[test]
    fn am_softmax_zero_margin_equals_normface_exactly() {
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let config_am = LossConfig::new(LossVariant::AmSoftmax).with_m_add(0.0);
            let config_nf = LossConfig::new(LossVariant::NormFace);
            let (batch, head) = random_instance(&config_am, 5, 6, 7, &mut rng).unwrap();
            let am = loss_forward_backward(&batch, &head, &config_am, 0).unwrap();
            let nf = loss_forward_backward(&batch, &head, &config_nf, 0).unwrap();
            assert_close(am.loss, nf.loss, 1e-12);
            assert!(am.grad_features.max_abs_diff(&nf.grad_features).unwrap() < 1e-12);
            assert!(am.grad_weights.max_abs_diff(&nf.grad_weights).unwrap() < 1e-12);
        }
    }

    #[test]
    fn loss_is_mean_negative_log_target_probability() {
        let mut rng = Rng::new(4);
        let config = LossConfig::new(LossVariant::AmSoftmax);
        let (batch, head) = random_instance(&config, 4, 5, 6, &mut rng).unwrap();
        let out = loss_forward_backward(&batch, &head, &config, 0).unwrap();
        let mut recomputed = 0.0;
        for (i, &y) in batch.labels().iter().enumerate() {
            recomputed -= crate::fp::ln(out.probabilities.get(i, y));
        }
        recomputed /= batch.len() as f64;
        assert_close(out.loss, recomputed, 1e-12);
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let mut rng = Rng::new(8);
        for variant in [
            LossVariant::Softmax,
            LossVariant::NormFace,
            LossVariant::ASoftmax,
            LossVariant::AmSoftmax,
        ] {
            let config = LossConfig::new(variant);
            let (batch, head) = random_instance(&config, 5, 4, 6, &mut rng).unwrap();
            let out = loss_forward_backward(&batch, &head, &config, 0).unwrap();
            for i in 0..batch.len() {
                let sum: f64 = (0..5).map(|j| out.probabilities.get(i, j)).sum();
                assert_close(sum, 1.0, 1e-9);
            }
        }
    }

    #[test]
    fn loss_monotone_in_margin() {
        let mut rng = Rng::new(17);
        for _ in 0..20 {
            let base = LossConfig::new(LossVariant::AmSoftmax);
            let (batch, head) = random_instance(&base, 6, 5, 8, &mut rng).unwrap();
            let mut prev = -1.0;
            for &m in &[0.0, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5] {
                let config = base.clone().with_m_add(m);
                let loss = loss_forward_backward(&batch, &head, &config, 0)
                    .unwrap()
                    .loss;
                assert!(loss > prev, "loss not increasing at m={m}");
                prev = loss;
            }
        }
    }

    #[test]
    fn feature_norm_makes_loss_scale_invariant() {
        let mut rng = Rng::new(21);
        let config = LossConfig::new(LossVariant::AmSoftmax);
        let (batch, head) = random_instance(&config, 4, 6, 5, &mut rng).unwrap();
        let base = loss_forward_backward(&batch, &head, &config, 0).unwrap().loss;
        let mut scaled = batch.features().clone();
        for i in 0..scaled.rows() {
            let factor = 0.5 + 3.0 * rng.uniform();
            for k in 0..scaled.cols() {
                scaled.set(i, k, scaled.get(i, k) * factor);
            }
        }
        let rescaled = Batch::new(scaled, batch.labels().to_vec()).unwrap();
        let loss = loss_forward_backward(&rescaled, &head, &config, 0)
            .unwrap()
            .loss;
        assert_close(loss, base, 1e-12);
    }

    #[test]
    fn weight_norm_makes_loss_row_scale_invariant() {
        let mut rng = Rng::new(22);
        let config = LossConfig::new(LossVariant::NormFace);
        let (batch, head) = random_instance(&config, 5, 6, 5, &mut rng).unwrap();
        let base = loss_forward_backward(&batch, &head, &config, 0).unwrap().loss;
        let mut scaled = head.weights().clone();
        for j in 0..scaled.rows() {
            let factor = 0.25 + 5.0 * rng.uniform();
            for k in 0..scaled.cols() {
                scaled.set(j, k, scaled.get(j, k) * factor);
            }
        }
        let head2 = ClassifierHead::new(scaled).unwrap();
        let loss = loss_forward_backward(&batch, &head2, &config, 0)
            .unwrap()
            .loss;
        assert_close(loss, base, 1e-12);
    }

    #[test]
    fn larger_scale_sharpens_correct_batch() {
        // Correctly classified by a clear margin: raising s lowers loss.
        let head = two_class_head();
        let feat = Matrix::from_vec(2, 3, vec![0.9, 0.1, 0.3, 0.1, 0.95, 0.2]).unwrap();
        let batch = Batch::new(feat, vec![0, 1]).unwrap();
        let mut prev = f64::INFINITY;
        for s in [5.0, 10.0, 20.0, 40.0] {
            let config = LossConfig::new(LossVariant::AmSoftmax)
                .with_s(s)
                .with_m_add(0.2);
            let loss = loss_forward_backward(&batch, &head, &config, 0).unwrap().loss;
            assert!(loss < prev, "loss did not shrink at s={s}");
            prev = loss;
        }
    }

    #[test]
    fn feature_norm_gradient_has_no_radial_component() {
        let mut rng = Rng::new(31);
        let config = LossConfig::new(LossVariant::AmSoftmax);
        let (batch, head) = random_instance(&config, 5, 6, 6, &mut rng).unwrap();
        let out = loss_forward_backward(&batch, &head, &config, 0).unwrap();
        for i in 0..batch.len() {
            let f = batch.features().row(i);
            let g = out.grad_features.row(i);
            let radial = dot(f, g).abs();
            let bound = 1e-9 * vec_norm(f) * vec_norm(g);
            assert!(radial <= bound.max(1e-15), "radial leak {radial}");
        }
    }

    #[test]
    fn rejects_label_out_of_range() {
        let head = two_class_head();
        let feat = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let batch = Batch::new(feat, vec![2]).unwrap();
        let config = LossConfig::new(LossVariant::NormFace);
        assert!(matches!(
            loss_forward_backward(&batch, &head, &config, 0),
            Err(CoreError::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn rejects_degenerate_feature_under_normalization() {
        let head = two_class_head();
        let feat = Matrix::from_vec(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        let batch = Batch::new(feat, vec![0]).unwrap();
        let config = LossConfig::new(LossVariant::AmSoftmax);
        assert!(matches!(
            loss_forward_backward(&batch, &head, &config, 0),
            Err(CoreError::DegenerateNorm { .. })
        ));
    }

    #[test]
    fn rejects_inconsistent_config() {
        let mut config = LossConfig::new(LossVariant::Softmax);
        config.feature_norm = true;
        assert!(config.validate().is_err());
        let mut config = LossConfig::new(LossVariant::ASoftmax);
        config.feature_norm = true;
        assert!(config.validate().is_err());
        let mut config = LossConfig::new(LossVariant::AmSoftmax);
        config.weight_norm = false;
        assert!(config.validate().is_err());
    }

    #[test]
    fn predict_recovers_matching_weight() {
        let head = two_class_head();
        let feat = Matrix::from_vec(2, 3, vec![0.0, 2.5, 0.0, 0.7, 0.0, 0.1]).unwrap();
        let labels = predict(&feat, &head).unwrap();
        assert_eq!(labels, vec![1, 0]);
    }

    #[test]
    fn predict_tie_breaks_to_lower_index() {
        let head = two_class_head();
        let feat = Matrix::from_vec(1, 3, vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(predict(&feat, &head).unwrap(), vec![0]);
    }

    #[test]
    fn predict_is_scale_invariant() {
        let mut rng = Rng::new(41);
        let config = LossConfig::new(LossVariant::NormFace);
        let (batch, head) = random_instance(&config, 6, 5, 10, &mut rng).unwrap();
        let base = predict(batch.features(), &head).unwrap();
        let mut scaled = batch.features().clone();
        for i in 0..scaled.rows() {
            for k in 0..scaled.cols() {
                scaled.set(i, k, scaled.get(i, k) * 37.5);
            }
        }
        assert_eq!(predict(&scaled, &head).unwrap(), base);
    }

    #[test]
    fn grad_check_all_variants() {
        for variant in [
            LossVariant::Softmax,
            LossVariant::NormFace,
            LossVariant::ASoftmax,
            LossVariant::AmSoftmax,
        ] {
            let config = LossConfig::new(variant);
            let err = grad_check(&config, 6, 8, 8, 1).unwrap();
            assert!(err < 1e-4, "{} grad check failed: {err:e}", variant.name());
        }
    }

    #[test]
    fn grad_check_am_softmax_without_feature_norm() {
        let mut config = LossConfig::new(LossVariant::AmSoftmax);
        config.feature_norm = false;
        let err = grad_check(&config, 6, 8, 8, 2).unwrap();
        assert!(err < 1e-4, "w/o FN grad check failed: {err:e}");
    }

    #[test]
    fn corrupted_gradient_trips_the_check() {
        let config = LossConfig::new(LossVariant::NormFace);
        let err = grad_check_corrupted(&config, 6, 8, 8, 1, 0.05).unwrap();
        assert!(err > 1e-3, "corruption went unnoticed: {err:e}");
    }
}
