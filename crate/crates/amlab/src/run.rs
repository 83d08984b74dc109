//! Command implementations behind the CLI: train, eval, the three data
//! exports, and the gradient check. Each returns structured results;
//! the binary maps errors to exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use amlab_core::data::{make_identification_protocol, make_verification_pairs, LabeledDataset};
use amlab_core::loss::{grad_check_corrupted, ClassifierHead, LossConfig, LossVariant};
use amlab_core::margin::{default_psi_roster, psi_curve};
use amlab_core::metrics::{
    cmc, cosine_similarity, dir_at_far, feature_stats, normalized_rows, roc, vr_at_far,
};
use amlab_core::norm::gradnorm_curve;
use amlab_core::train::{embed, train};
use amlab_core::{Matrix, Rng};

use crate::checkpoint::{load_model, save_model};
use crate::config::{ProtocolSection, RunConfig, Split};
use crate::error::Error;
use crate::export::{
    features_csv, gradnorm_csv, history_csv, psi_curve_csv, MetricsReport, VrAtFarEntry,
};

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn gather_rows(features: &Matrix, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), features.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(features.row(i));
    }
    out
}

/// Verification, identification, and distribution metrics over a set of
/// embedded features.
pub fn evaluate_embeddings(
    dataset: &LabeledDataset,
    features: &Matrix,
    protocol: &ProtocolSection,
    seed: u64,
) -> Result<MetricsReport, Error> {
    let pairs = make_verification_pairs(dataset, protocol.pair_count, seed)?;
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for &(a, b, same) in &pairs.pairs {
        let score = cosine_similarity(features.row(a), features.row(b))?;
        if same {
            genuine.push(score);
        } else {
            impostor.push(score);
        }
    }
    let curve = roc(&genuine, &impostor)?;
    let vr_entries = protocol
        .far_targets
        .iter()
        .map(|&far| VrAtFarEntry {
            far,
            vr: vr_at_far(&curve, far),
        })
        .collect();

    let ident = make_identification_protocol(
        dataset,
        protocol.gallery_per_class,
        protocol.probe_per_class,
        protocol.distractor_classes,
        seed,
    )?;
    let gallery = gather_rows(features, &ident.gallery);
    let probes = gather_rows(features, &ident.probes);
    let distractors = gather_rows(features, &ident.distractors);
    let cmc_curve = cmc(&probes, &gallery, &distractors, &ident.probe_truth)?;
    let rank1 = cmc_curve.at_rank(1);

    // Open-set identification uses the distractor samples as impostor
    // probes; with none, the report stays closed-set.
    let dir = if ident.distractors.is_empty() {
        None
    } else {
        let mut open_probes = ident.probes.clone();
        open_probes.extend_from_slice(&ident.distractors);
        let mut truth: Vec<Option<usize>> = ident.probe_truth.iter().map(|&t| Some(t)).collect();
        truth.extend(std::iter::repeat(None).take(ident.distractors.len()));
        let open_features = gather_rows(features, &open_probes);
        Some(dir_at_far(
            &open_features,
            &gallery,
            &truth,
            protocol.dir_far_target,
        )?)
    };

    let stats = feature_stats(features, &dataset.labels)?;
    Ok(MetricsReport {
        vr_at_far: vr_entries,
        dir_at_far: dir,
        rank1,
        mean_intra_angle_deg: stats.mean_intra_class_angle_rad.to_degrees(),
        min_inter_center_angle_deg: stats.min_inter_center_angle_rad.to_degrees(),
    })
}

/// Artifacts a training run leaves on disk.
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub metrics: PathBuf,
    pub final_loss: f64,
}

/// Trains per the config and writes checkpoint, history, and train-split
/// metrics into `out_dir`.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts, Error> {
    let dataset = config.build_dataset(Split::Train)?;
    let mlp_config = config.mlp_config(dataset.dim())?;
    let loss_config = config.loss_config()?;
    let train_config = config.train_config();
    let history = train(&dataset, &mlp_config, &loss_config, &train_config)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint = out_dir.join("model.amlb");
    save_model(&checkpoint, &history.mlp, &history.head)?;
    let history_path = out_dir.join("history.csv");
    write_file(&history_path, &history_csv(&history))?;

    let features = embed(&history.mlp, &dataset.inputs)?;
    let report = evaluate_embeddings(&dataset, &features, &config.protocol, config.seed)?;
    let metrics_path = out_dir.join("metrics.json");
    write_file(&metrics_path, &report.to_json())?;

    Ok(TrainArtifacts {
        checkpoint,
        history: history_path,
        metrics: metrics_path,
        final_loss: *history.losses.last().unwrap(),
    })
}

/// Embeds the eval split with a checkpoint and reports metrics.
pub fn cmd_eval(checkpoint: &Path, config: &RunConfig) -> Result<MetricsReport, Error> {
    let (mlp, head) = load_model(checkpoint)?;
    let dataset = config.build_dataset(Split::Eval)?;
    if mlp.input_dim() != dataset.dim() {
        return Err(Error::Config(format!(
            "checkpoint expects input width {}, dataset provides {}",
            mlp.input_dim(),
            dataset.dim()
        )));
    }
    let _ = head; // prediction metrics here are protocol-based; the head rides along in the file
    let features = embed(&mlp, &dataset.inputs)?;
    evaluate_embeddings(&dataset, &features, &config.protocol, config.seed)
}

/// Writes the psi-transform table for the default curve roster.
pub fn cmd_export_psi(grid_points: usize, out: &Path) -> Result<(), Error> {
    let curve = psi_curve(&default_psi_roster(), grid_points)?;
    write_file(out, &psi_curve_csv(&curve))
}

/// Embeds the eval split and writes unit-normalized features.
pub fn cmd_export_features(checkpoint: &Path, config: &RunConfig, out: &Path) -> Result<(), Error> {
    let (mlp, _) = load_model(checkpoint)?;
    let dataset = config.build_dataset(Split::Eval)?;
    if mlp.input_dim() != dataset.dim() {
        return Err(Error::Config(format!(
            "checkpoint expects input width {}, dataset provides {}",
            mlp.input_dim(),
            dataset.dim()
        )));
    }
    let features = embed(&mlp, &dataset.inputs)?;
    let unit = normalized_rows(&features)?;
    write_file(out, &features_csv(&unit, &dataset.labels))
}

/// Writes the feature-gradient-norm table for a seeded synthetic head.
pub fn cmd_export_gradnorm(
    s: f64,
    classes: usize,
    dim: usize,
    seed: u64,
    out: &Path,
) -> Result<(), Error> {
    let mut rng = Rng::new(seed);
    let head = ClassifierHead::random_unit(classes, dim, &mut rng)?;
    // 60 points per decade-pair over [1, 100], log-spaced.
    let norms: Vec<f64> = (0..=60)
        .map(|i| 10f64.powf(i as f64 * 2.0 / 60.0))
        .collect();
    let points = gradnorm_curve(&head, 0, &norms, s)?;
    write_file(out, &gradnorm_csv(&points))
}

/// Threshold the gradient check reports against.
pub const GRAD_CHECK_BUDGET: f64 = 1e-4;

/// Gradient-check sizes (kept small; the check is O(params^2)).
const GRAD_CHECK_DIMS: (usize, usize, usize) = (6, 8, 8);

pub fn parse_variant(name: &str) -> Result<LossVariant, Error> {
    match name {
        "softmax" => Ok(LossVariant::Softmax),
        "normface" => Ok(LossVariant::NormFace),
        "a_softmax" => Ok(LossVariant::ASoftmax),
        "am_softmax" => Ok(LossVariant::AmSoftmax),
        other => Err(Error::Config(format!("unknown loss variant `{other}`"))),
    }
}

pub const ALL_VARIANTS: [LossVariant; 4] = [
    LossVariant::Softmax,
    LossVariant::NormFace,
    LossVariant::ASoftmax,
    LossVariant::AmSoftmax,
];

/// Runs the checker for each variant across `runs` seeds starting at
/// `seed`; returns the printable report and whether everything passed.
pub fn cmd_gradcheck(
    variants: &[LossVariant],
    seed: u64,
    runs: u64,
    corrupt: f64,
) -> Result<(String, bool), Error> {
    let (c, d, n) = GRAD_CHECK_DIMS;
    let mut report = String::new();
    let mut all_ok = true;
    for &variant in variants {
        let config = LossConfig::new(variant);
        let mut worst: f64 = 0.0;
        for offset in 0..runs.max(1) {
            let err = grad_check_corrupted(&config, c, d, n, seed + offset, corrupt)?;
            worst = worst.max(err);
        }
        let ok = worst < GRAD_CHECK_BUDGET;
        all_ok &= ok;
        writeln!(
            report,
            "{:<12} max relative error {:.3e}  {}",
            variant.name(),
            worst,
            if ok { "ok" } else { "FAIL" }
        )
        .expect("writing to String");
    }
    Ok((report, all_ok))
}
