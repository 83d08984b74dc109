//! A small fully-connected embedding network and a deterministic SGD
//! training loop.
//!
//! The network is ReLU hidden layers with a linear embedding output,
//! He-normal initialized from the seeded generator. The optimizer is
//! momentum SGD with weight decay on linear weights and the head (not
//! biases), a step-decay learning rate, and head rows re-normalized
//! after every update when weight normalization is active. Everything
//! is bit-deterministic per seed.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{CoreError, CoreResult};
use crate::fp;
use crate::loss::{loss_forward_backward, predict, Batch, ClassifierHead, LossConfig};
use crate::numeric::{Matrix, Rng};

/// Layer widths from input through hidden layers to the embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub layer_widths: Vec<usize>,
}

impl MlpConfig {
    /// Requires at least one hidden layer and an embedding of dimension
    /// two or more.
    pub fn new(layer_widths: Vec<usize>) -> CoreResult<MlpConfig> {
        if layer_widths.len() < 3 {
            return Err(CoreError::InvalidConfig(
                "layer_widths needs input, at least one hidden layer, and the embedding",
            ));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidConfig("layer widths must be positive"));
        }
        if *layer_widths.last().unwrap() < 2 {
            return Err(CoreError::InvalidConfig("embedding dimension must be at least 2"));
        }
        Ok(MlpConfig { layer_widths })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn embed_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

/// One fully-connected layer; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// ReLU MLP with a linear final layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// He-normal initialization (stddev `sqrt(2 / fan_in)`), biases
    /// zero, weights filled row-major from the generator.
    pub fn init(config: &MlpConfig, rng: &mut Rng) -> CoreResult<Mlp> {
        let widths = &config.layer_widths;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let fan_in = widths[l];
            let fan_out = widths[l + 1];
            let stddev = fp::sqrt(2.0 / fan_in as f64);
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for o in 0..fan_out {
                for i in 0..fan_in {
                    weight.set(o, i, rng.gaussian(0.0, stddev)?);
                }
            }
            layers.push(Linear {
                weight,
                bias: vec![0.0; fan_out],
            });
        }
        Ok(Mlp { layers })
    }

    /// Builds a network from explicit layers, checking the width chain.
    pub fn from_layers(layers: Vec<Linear>) -> CoreResult<Mlp> {
        if layers.is_empty() {
            return Err(CoreError::EmptyInput("mlp layers"));
        }
        for layer in &layers {
            if layer.bias.len() != layer.weight.rows() {
                return Err(CoreError::LengthMismatch {
                    what: "layer bias vs weight rows",
                    left: layer.weight.rows(),
                    right: layer.bias.len(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[1].weight.cols() != pair[0].weight.rows() {
                return Err(CoreError::ShapeMismatch {
                    op: "mlp layer chain",
                    left: (pair[0].weight.rows(), pair[0].weight.cols()),
                    right: (pair[1].weight.rows(), pair[1].weight.cols()),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    /// Deterministic forward pass; ReLU on every layer except the last.
    pub fn forward(&self, inputs: &Matrix) -> CoreResult<Matrix> {
        Ok(self.forward_cached(inputs)?.0)
    }

    fn forward_cached(&self, inputs: &Matrix) -> CoreResult<(Matrix, ForwardCache)> {
        if inputs.cols() != self.input_dim() {
            return Err(CoreError::ShapeMismatch {
                op: "mlp forward",
                left: (inputs.rows(), inputs.cols()),
                right: (self.layers[0].weight.rows(), self.layers[0].weight.cols()),
            });
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = inputs.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = current.matmul(&layer.weight.transpose())?;
            for r in 0..pre.rows() {
                let row = pre.row_mut(r);
                for (v, b) in row.iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            layer_inputs.push(current);
            pre_activations.push(pre.clone());
            if l < last {
                for v in pre.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            current = pre;
        }
        Ok((
            current,
            ForwardCache {
                layer_inputs,
                pre_activations,
            },
        ))
    }

    /// Parameter gradients given the gradient at the embedding output.
    fn backward(&self, cache: &ForwardCache, grad_embed: &Matrix) -> CoreResult<Vec<LayerGrads>> {
        let last = self.layers.len() - 1;
        let mut grads = vec![
            LayerGrads {
                weight: Matrix::zeros(0, 0),
                bias: Vec::new(),
            };
            self.layers.len()
        ];
        let mut grad_pre = grad_embed.clone();
        for l in (0..=last).rev() {
            if l < last {
                // Up to here grad_pre is the gradient at this layer's
                // ReLU output; gate it by the pre-activation sign.
                let pre = &cache.pre_activations[l];
                for r in 0..grad_pre.rows() {
                    for c in 0..grad_pre.cols() {
                        if pre.get(r, c) <= 0.0 {
                            grad_pre.set(r, c, 0.0);
                        }
                    }
                }
            }
            let weight_grad = grad_pre.transpose().matmul(&cache.layer_inputs[l])?;
            let mut bias_grad = vec![0.0; self.layers[l].weight.rows()];
            for r in 0..grad_pre.rows() {
                for (bg, v) in bias_grad.iter_mut().zip(grad_pre.row(r)) {
                    *bg += v;
                }
            }
            if l > 0 {
                grad_pre = grad_pre.matmul(&self.layers[l].weight)?;
            }
            grads[l] = LayerGrads {
                weight: weight_grad,
                bias: bias_grad,
            };
        }
        Ok(grads)
    }
}

struct ForwardCache {
    layer_inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

#[derive(Clone)]
struct LayerGrads {
    weight: Matrix,
    bias: Vec<f64>,
}

/// Deterministic forward pass of a trained network.
pub fn embed(net: &Mlp, inputs: &Matrix) -> CoreResult<Matrix> {
    net.forward(inputs)
}

/// Optimizer schedule: step-decayed momentum SGD with weight decay.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr_base: f64,
    /// Iterations at which the learning rate is multiplied by the decay
    /// factor; strictly increasing and below `total_iters`.
    pub lr_decay_iters: Vec<u64>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub total_iters: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_base: 0.1,
            lr_decay_iters: Vec::new(),
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            total_iters: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> CoreResult<()> {
        if !(self.lr_base > 0.0 && self.lr_base.is_finite()) {
            return Err(CoreError::InvalidConfig("lr_base must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(CoreError::InvalidConfig("lr_decay_factor must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::InvalidConfig("momentum must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(CoreError::InvalidConfig("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 || self.total_iters == 0 {
            return Err(CoreError::InvalidConfig("batch_size and total_iters must be positive"));
        }
        for pair in self.lr_decay_iters.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CoreError::InvalidConfig(
                    "lr_decay_iters must be strictly increasing",
                ));
            }
        }
        if let Some(&last) = self.lr_decay_iters.last() {
            if last >= self.total_iters {
                return Err(CoreError::InvalidConfig(
                    "lr_decay_iters must stay below total_iters",
                ));
            }
        }
        Ok(())
    }

    /// Learning rate in effect at `iteration`: the base rate decayed
    /// once per schedule entry already reached.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        let decays = self
            .lr_decay_iters
            .iter()
            .filter(|&&at| iteration >= at)
            .count();
        self.lr_base * fp::powf(self.lr_decay_factor, decays as f64)
    }
}

/// One momentum-SGD update:
/// `v = momentum v - lr (grad + weight_decay param); param += v`.
pub fn sgd_step(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> CoreResult<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(CoreError::LengthMismatch {
            what: "sgd_step buffers",
            left: param.len(),
            right: grad.len().min(velocity.len()),
        });
    }
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * (g + weight_decay * *p);
        *p += *v;
    }
    Ok(())
}

/// Everything a run produced: per-iteration curves, per-epoch accuracy,
/// and the final parameters.
#[derive(Clone, Debug)]
pub struct TrainHistory {
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Training accuracy measured at the end of each completed pass
    /// over the dataset.
    pub epoch_accuracy: Vec<f64>,
    pub mlp: Mlp,
    pub head: ClassifierHead,
}

/// Trains an embedding network and classifier head on the dataset.
///
/// Mini-batches come from a seeded shuffle each epoch, the lambda
/// annealing advances per iteration, and a non-finite loss aborts with
/// the iteration index.
pub fn train(
    dataset: &LabeledDataset,
    mlp_config: &MlpConfig,
    loss_config: &LossConfig,
    opt: &TrainConfig,
) -> CoreResult<TrainHistory> {
    opt.validate()?;
    loss_config.validate()?;
    if dataset.is_empty() {
        return Err(CoreError::EmptyInput("training dataset"));
    }
    if mlp_config.input_dim() != dataset.dim() {
        return Err(CoreError::ShapeMismatch {
            op: "train input width",
            left: (dataset.len(), dataset.dim()),
            right: (1, mlp_config.input_dim()),
        });
    }

    let mut rng = Rng::new(opt.seed);
    let mut mlp = Mlp::init(mlp_config, &mut rng)?;
    let mut head = ClassifierHead::random_unit(dataset.class_count, mlp_config.embed_dim(), &mut rng)?;

    let mut weight_vel: Vec<Vec<f64>> = mlp
        .layers
        .iter()
        .map(|l| vec![0.0; l.weight.data().len()])
        .collect();
    let mut bias_vel: Vec<Vec<f64>> = mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
    let mut head_vel = vec![0.0; head.weights().data().len()];

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut history = TrainHistory {
        losses: Vec::with_capacity(opt.total_iters as usize),
        lrs: Vec::with_capacity(opt.total_iters as usize),
        lambdas: Vec::with_capacity(opt.total_iters as usize),
        epoch_accuracy: Vec::new(),
        mlp: mlp.clone(),
        head: head.clone(),
    };

    for iteration in 0..opt.total_iters {
        if cursor >= n {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let take = opt.batch_size.min(n - cursor);
        let mut inputs = Matrix::zeros(take, dataset.dim());
        let mut labels = Vec::with_capacity(take);
        for (r, &idx) in order[cursor..cursor + take].iter().enumerate() {
            inputs.row_mut(r).copy_from_slice(dataset.inputs.row(idx));
            labels.push(dataset.labels[idx]);
        }
        cursor += take;

        let (features, cache) = mlp.forward_cached(&inputs)?;
        let batch = Batch::new(features, labels)?;
        let out = match loss_forward_backward(&batch, &head, loss_config, iteration) {
            Ok(out) => out,
            Err(CoreError::NonFinite { .. }) | Err(CoreError::DegenerateNorm { .. }) => {
                return Err(CoreError::Diverged { iteration });
            }
            Err(e) => return Err(e),
        };
        if !out.loss.is_finite() {
            return Err(CoreError::Diverged { iteration });
        }

        let layer_grads = mlp.backward(&cache, &out.grad_features)?;
        let lr = opt.lr_at(iteration);
        for (l, grads) in layer_grads.iter().enumerate() {
            sgd_step(
                mlp.layers[l].weight.data_mut(),
                grads.weight.data(),
                &mut weight_vel[l],
                lr,
                opt.momentum,
                opt.weight_decay,
            )?;
            sgd_step(
                &mut mlp.layers[l].bias,
                &grads.bias,
                &mut bias_vel[l],
                lr,
                opt.momentum,
                0.0,
            )?;
        }
        sgd_step(
            head.weights_mut().data_mut(),
            out.grad_weights.data(),
            &mut head_vel,
            lr,
            opt.momentum,
            opt.weight_decay,
        )?;
        if loss_config.weight_norm {
            head.normalize_rows()?;
        }

        history.losses.push(out.loss);
        history.lrs.push(lr);
        history
            .lambdas
            .push(loss_config.lambda_schedule.lambda_at(iteration));

        if cursor >= n {
            let features = mlp.forward(&dataset.inputs)?;
            let predicted = predict(&features, &head)?;
            let correct = predicted
                .iter()
                .zip(&dataset.labels)
                .filter(|(a, b)| a == b)
                .count();
            history.epoch_accuracy.push(correct as f64 / n as f64);
        }
    }

    history.mlp = mlp;
    history.head = head;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::loss::LossVariant;
    use crate::numeric::vec_norm;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn zero_network_embeds_to_zero() {
        let config = MlpConfig::new(vec![4, 3, 2]).unwrap();
        let mut rng = Rng::new(1);
        let mut mlp = Mlp::init(&config, &mut rng).unwrap();
        for layer in &mut mlp.layers {
            for v in layer.weight.data_mut() {
                *v = 0.0;
            }
        }
        let inputs = Matrix::from_vec(2, 4, vec![1.0; 8]).unwrap();
        let out = embed(&mlp, &inputs).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_is_bitwise_deterministic() {
        let config = MlpConfig::new(vec![5, 8, 3]).unwrap();
        let mut rng = Rng::new(3);
        let mlp = Mlp::init(&config, &mut rng).unwrap();
        let inputs = synth_blobs(3, 5, 4, 0.3, 9).unwrap().inputs;
        let a = embed(&mlp, &inputs).unwrap();
        let b = embed(&mlp, &inputs).unwrap();
        assert_eq!(a, b);
    }

    // Hand forward pass: W0 = [[1,-1],[0.5,2]], b0 = (0.1,-0.2), ReLU,
    // then an identity output layer. x = (-2, 1) gives pre-activations
    // (-2.9, 0.8), so the embedding is (0, 0.8).
    #[test]
    fn single_relu_layer_hand_value() {
        let relu_layer = Linear {
            weight: Matrix::from_vec(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap(),
            bias: vec![0.1, -0.2],
        };
        let identity = Linear {
            weight: Matrix::identity(2),
            bias: vec![0.0, 0.0],
        };
        let mlp = Mlp::from_layers(vec![relu_layer, identity]).unwrap();
        let out = embed(&mlp, &Matrix::from_vec(1, 2, vec![-2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.8]);
    }

    #[test]
    fn embed_rejects_width_mismatch() {
        let config = MlpConfig::new(vec![4, 3, 2]).unwrap();
        let mut rng = Rng::new(1);
        let mlp = Mlp::init(&config, &mut rng).unwrap();
        let inputs = Matrix::zeros(2, 5);
        assert!(matches!(
            embed(&mlp, &inputs),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sgd_vanilla_reduces_to_plain_descent() {
        let mut p = [1.0, -2.0];
        let g = [0.5, 0.25];
        let mut v = [0.0, 0.0];
        sgd_step(&mut p, &g, &mut v, 0.1, 0.0, 0.0).unwrap();
        assert_close(p[0], 0.95, 1e-15);
        assert_close(p[1], -2.025, 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_fixed_point() {
        let mut p = [1.5];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p[0], 1.5);
    }

    // Scalar recurrence by hand: v1 = -0.05, p1 = 0.95; then
    // v2 = 0.9 (-0.05) - 0.05 = -0.095, p2 = 0.855.
    #[test]
    fn sgd_momentum_two_steps_hand_value() {
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.5], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_close(p[0], 0.95, 1e-15);
        sgd_step(&mut p, &[0.5], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_close(p[0], 0.855, 1e-15);
    }

    #[test]
    fn sgd_rejects_shape_mismatch() {
        let mut p = [1.0];
        let mut v = [0.0, 0.0];
        assert!(sgd_step(&mut p, &[0.5], &mut v, 0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn lr_schedule_matches_hand_value() {
        let opt = TrainConfig {
            lr_decay_iters: vec![16, 24, 28],
            total_iters: 30,
            ..TrainConfig::default()
        };
        assert_close(opt.lr_at(0), 0.1, 1e-15);
        assert_close(opt.lr_at(15), 0.1, 1e-15);
        assert_close(opt.lr_at(16), 0.01, 1e-15);
        assert_close(opt.lr_at(25), 0.001, 1e-12);
        assert_close(opt.lr_at(29), 0.0001, 1e-12);
    }

    #[test]
    fn train_config_rejects_bad_schedules() {
        let mut opt = TrainConfig::default();
        opt.lr_decay_iters = vec![10, 10];
        assert!(opt.validate().is_err());
        opt.lr_decay_iters = vec![400];
        assert!(opt.validate().is_err());
    }

    fn smoke_dataset() -> LabeledDataset {
        synth_blobs(2, 8, 40, 0.1, 100).unwrap()
    }

    fn smoke_mlp() -> MlpConfig {
        MlpConfig::new(vec![8, 32, 3]).unwrap()
    }

    #[test]
    fn separable_softmax_run_reaches_full_accuracy() {
        let dataset = smoke_dataset();
        let opt = TrainConfig {
            batch_size: 16,
            total_iters: 200,
            seed: 7,
            ..TrainConfig::default()
        };
        let config = LossConfig::new(LossVariant::Softmax);
        let history = train(&dataset, &smoke_mlp(), &config, &opt).unwrap();
        assert_close(*history.epoch_accuracy.last().unwrap(), 1.0, 0.0);
        assert!(*history.losses.last().unwrap() < 0.01);
    }

    #[test]
    fn separable_am_softmax_run_reaches_low_loss() {
        let dataset = smoke_dataset();
        let opt = TrainConfig {
            batch_size: 16,
            total_iters: 400,
            seed: 7,
            ..TrainConfig::default()
        };
        let config = LossConfig::new(LossVariant::AmSoftmax)
            .with_s(10.0)
            .with_m_add(0.2);
        let history = train(&dataset, &smoke_mlp(), &config, &opt).unwrap();
        assert_close(*history.epoch_accuracy.last().unwrap(), 1.0, 0.0);
        assert!(*history.losses.last().unwrap() < 0.01);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let dataset = smoke_dataset();
        let opt = TrainConfig {
            batch_size: 16,
            total_iters: 60,
            seed: 11,
            ..TrainConfig::default()
        };
        let config = LossConfig::new(LossVariant::AmSoftmax).with_s(10.0).with_m_add(0.2);
        let a = train(&dataset, &smoke_mlp(), &config, &opt).unwrap();
        let b = train(&dataset, &smoke_mlp(), &config, &opt).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.epoch_accuracy, b.epoch_accuracy);
        assert_eq!(a.head.weights(), b.head.weights());
        assert_eq!(a.mlp, b.mlp);
    }

    #[test]
    fn head_rows_stay_unit_under_weight_norm() {
        let dataset = smoke_dataset();
        let opt = TrainConfig {
            batch_size: 16,
            total_iters: 40,
            seed: 13,
            ..TrainConfig::default()
        };
        let config = LossConfig::new(LossVariant::AmSoftmax).with_s(10.0).with_m_add(0.2);
        let history = train(&dataset, &smoke_mlp(), &config, &opt).unwrap();
        for j in 0..history.head.class_count() {
            assert_close(vec_norm(history.head.weights().row(j)), 1.0, 1e-10);
        }
    }

    #[test]
    fn initial_loss_near_ln_c_for_softmax() {
        let dataset = synth_blobs(10, 16, 20, 0.2, 55).unwrap();
        let opt = TrainConfig {
            batch_size: 200,
            total_iters: 1,
            seed: 5,
            ..TrainConfig::default()
        };
        let config = LossConfig::new(LossVariant::Softmax);
        let mlp = MlpConfig::new(vec![16, 64, 64, 3]).unwrap();
        let history = train(&dataset, &mlp, &config, &opt).unwrap();
        let ln_c = (10.0f64).ln();
        assert!(
            (history.losses[0] - ln_c).abs() / ln_c < 0.2,
            "initial loss {} too far from ln 10",
            history.losses[0]
        );
    }

    #[test]
    fn history_lengths_match_schedule() {
        let dataset = smoke_dataset();
        let opt = TrainConfig {
            batch_size: 30,
            total_iters: 17,
            seed: 3,
            ..TrainConfig::default()
        };
        let config = LossConfig::new(LossVariant::NormFace).with_s(10.0);
        let history = train(&dataset, &smoke_mlp(), &config, &opt).unwrap();
        assert_eq!(history.losses.len(), 17);
        assert_eq!(history.lrs.len(), 17);
        assert_eq!(history.lambdas.len(), 17);
        // 80 samples, batch 30: epochs complete at iterations 3, 6, ...
        assert_eq!(history.epoch_accuracy.len(), 17 / 3);
    }
}
