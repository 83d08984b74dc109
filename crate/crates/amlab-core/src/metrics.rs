//! Cosine-similarity verification and identification metrics.
//!
//! Threshold semantics are exact and enumeration-testable: a comparison
//! is accepted iff its score is `>=` the threshold, thresholds sit at
//! the distinct observed scores, and reading a metric off a curve never
//! interpolates. CMC ranks count strictly-greater competitors, so ties
//! favor the mate.

use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};
use crate::fp;
use crate::numeric::{dot, vec_norm, Matrix};

const NORM_EPS: f64 = 1e-12;

/// `<f1, f2> / (|f1| |f2|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(f1: &[f64], f2: &[f64]) -> CoreResult<f64> {
    if f1.len() != f2.len() {
        return Err(CoreError::LengthMismatch {
            what: "cosine_similarity",
            left: f1.len(),
            right: f2.len(),
        });
    }
    let n1 = vec_norm(f1);
    let n2 = vec_norm(f2);
    if n1 <= NORM_EPS || n2 <= NORM_EPS {
        return Err(CoreError::DegenerateNorm {
            norm: n1.min(n2),
            eps: NORM_EPS,
        });
    }
    Ok((dot(f1, f2) / (n1 * n2)).clamp(-1.0, 1.0))
}

/// One ROC operating point: accept iff `score >= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    /// Accepted impostors over all impostors.
    pub far: f64,
    /// Accepted genuines over all genuines.
    pub vr: f64,
}

/// Operating points at every distinct score, sorted by ascending
/// threshold; `far` and `vr` are non-increasing along the curve.
#[derive(Clone, Debug)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }
}

pub fn roc(genuine_scores: &[f64], impostor_scores: &[f64]) -> CoreResult<RocCurve> {
    if genuine_scores.is_empty() {
        return Err(CoreError::EmptyInput("genuine scores"));
    }
    if impostor_scores.is_empty() {
        return Err(CoreError::EmptyInput("impostor scores"));
    }
    let mut thresholds: Vec<f64> = genuine_scores
        .iter()
        .chain(impostor_scores)
        .copied()
        .collect();
    if thresholds.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite { what: "scores" });
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut genuine = genuine_scores.to_vec();
    let mut impostor = impostor_scores.to_vec();
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);

    // Accepted count = elements >= t = len - partition_point(< t).
    let accepted = |sorted: &[f64], t: f64| -> usize {
        sorted.len() - sorted.partition_point(|&s| s < t)
    };

    let points = thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            far: accepted(&impostor, t) as f64 / impostor.len() as f64,
            vr: accepted(&genuine, t) as f64 / genuine.len() as f64,
        })
        .collect();
    Ok(RocCurve { points })
}

/// Verification rate at the smallest threshold whose FAR does not
/// exceed `far_target`; 0 when only accept-none qualifies. No
/// interpolation.
pub fn vr_at_far(curve: &RocCurve, far_target: f64) -> f64 {
    for point in &curve.points {
        if point.far <= far_target {
            return point.vr;
        }
    }
    0.0
}

/// Rank-k accuracies; index k-1 holds the fraction of probes whose mate
/// ranks within the top k.
#[derive(Clone, Debug)]
pub struct CmcCurve {
    rank_accuracies: Vec<f64>,
}

impl CmcCurve {
    pub fn rank_accuracies(&self) -> &[f64] {
        &self.rank_accuracies
    }

    /// Rank-k accuracy (1-indexed).
    pub fn at_rank(&self, k: usize) -> f64 {
        self.rank_accuracies[k - 1]
    }
}

/// Cumulative match characteristic over gallery plus distractors.
///
/// A probe's rank is one plus the number of non-mated entries scoring
/// strictly above its mated gallery entry; ties leave the rank
/// unchanged.
pub fn cmc(
    probe_features: &Matrix,
    gallery_features: &Matrix,
    distractor_features: &Matrix,
    probe_truth: &[usize],
) -> CoreResult<CmcCurve> {
    if probe_features.rows() == 0 {
        return Err(CoreError::EmptyInput("probe features"));
    }
    if probe_features.rows() != probe_truth.len() {
        return Err(CoreError::LengthMismatch {
            what: "probes vs probe_truth",
            left: probe_features.rows(),
            right: probe_truth.len(),
        });
    }
    let d = probe_features.cols();
    if gallery_features.cols() != d
        || (distractor_features.rows() > 0 && distractor_features.cols() != d)
    {
        return Err(CoreError::ShapeMismatch {
            op: "cmc",
            left: (probe_features.rows(), d),
            right: (gallery_features.rows(), gallery_features.cols()),
        });
    }
    for &truth in probe_truth {
        if truth >= gallery_features.rows() {
            return Err(CoreError::LabelOutOfRange {
                label: truth,
                classes: gallery_features.rows(),
            });
        }
    }

    let total = gallery_features.rows() + distractor_features.rows();
    let mut rank_hits = alloc::vec![0usize; total];
    for (i, &truth) in probe_truth.iter().enumerate() {
        let probe = probe_features.row(i);
        let mate = cosine_similarity(probe, gallery_features.row(truth))?;
        let mut beaten = 0usize;
        for j in 0..gallery_features.rows() {
            if j != truth && cosine_similarity(probe, gallery_features.row(j))? > mate {
                beaten += 1;
            }
        }
        for j in 0..distractor_features.rows() {
            if cosine_similarity(probe, distractor_features.row(j))? > mate {
                beaten += 1;
            }
        }
        rank_hits[beaten] += 1;
    }

    let n = probe_truth.len() as f64;
    let mut cumulative = 0usize;
    let rank_accuracies = rank_hits
        .into_iter()
        .map(|h| {
            cumulative += h;
            cumulative as f64 / n
        })
        .collect();
    Ok(CmcCurve { rank_accuracies })
}

/// Detection-and-identification rate for open-set identification.
///
/// `probe_truth[i] = None` marks an impostor probe. The threshold is
/// the smallest observed top-score at which the fraction of accepted
/// impostor probes stays within `far_target`; DIR is the fraction of
/// mated probes whose top match is correct and at or above it.
pub fn dir_at_far(
    probe_features: &Matrix,
    gallery_features: &Matrix,
    probe_truth: &[Option<usize>],
    far_target: f64,
) -> CoreResult<f64> {
    if probe_features.rows() != probe_truth.len() {
        return Err(CoreError::LengthMismatch {
            what: "probes vs probe_truth",
            left: probe_features.rows(),
            right: probe_truth.len(),
        });
    }
    if gallery_features.rows() == 0 {
        return Err(CoreError::EmptyInput("gallery features"));
    }
    let mated_count = probe_truth.iter().filter(|t| t.is_some()).count();
    let impostor_count = probe_truth.len() - mated_count;
    if impostor_count == 0 {
        return Err(CoreError::NoImpostorProbes);
    }
    if mated_count == 0 {
        return Err(CoreError::EmptyInput("mated probes"));
    }
    for truth in probe_truth.iter().flatten() {
        if *truth >= gallery_features.rows() {
            return Err(CoreError::LabelOutOfRange {
                label: *truth,
                classes: gallery_features.rows(),
            });
        }
    }

    // Top gallery match per probe; ties resolve to the lowest index.
    let mut impostor_tops = Vec::with_capacity(impostor_count);
    let mut mated = Vec::with_capacity(mated_count);
    for (i, truth) in probe_truth.iter().enumerate() {
        let probe = probe_features.row(i);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..gallery_features.rows() {
            let score = cosine_similarity(probe, gallery_features.row(j))?;
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        match truth {
            Some(t) => mated.push((best_score, best == *t)),
            None => impostor_tops.push(best_score),
        }
    }

    let mut thresholds: Vec<f64> = impostor_tops
        .iter()
        .copied()
        .chain(mated.iter().map(|&(s, _)| s))
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let far_of = |t: f64| {
        impostor_tops.iter().filter(|&&s| s >= t).count() as f64 / impostor_count as f64
    };
    for t in thresholds {
        if far_of(t) <= far_target {
            let detected = mated
                .iter()
                .filter(|&&(score, correct)| correct && score >= t)
                .count();
            return Ok(detected as f64 / mated_count as f64);
        }
    }
    Ok(0.0)
}

/// Quantitative surrogate for a feature-distribution plot: angular
/// compactness within classes and separation between class centers.
#[derive(Clone, Debug)]
pub struct FeatureStats {
    pub mean_intra_class_angle_rad: f64,
    pub min_inter_center_angle_rad: f64,
    /// Unit class centers, one per row.
    pub centers: Matrix,
}

/// Class center = normalized mean of the normalized features; intra
/// angle is measured sample-to-center, inter angle center-to-center.
pub fn feature_stats(features: &Matrix, labels: &[usize]) -> CoreResult<FeatureStats> {
    if features.rows() == 0 {
        return Err(CoreError::EmptyInput("features"));
    }
    if features.rows() != labels.len() {
        return Err(CoreError::LengthMismatch {
            what: "features vs labels",
            left: features.rows(),
            right: labels.len(),
        });
    }
    let class_count = labels.iter().copied().max().unwrap() + 1;
    if class_count < 2 {
        return Err(CoreError::InsufficientClasses {
            needed: 2,
            available: class_count,
        });
    }
    let d = features.cols();

    let mut sums = Matrix::zeros(class_count, d);
    let mut counts = alloc::vec![0usize; class_count];
    let mut unit = Matrix::zeros(features.rows(), d);
    for i in 0..features.rows() {
        let row = features.row(i);
        let norm = vec_norm(row);
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        let y = labels[i];
        counts[y] += 1;
        for (k, &v) in row.iter().enumerate() {
            unit.set(i, k, v / norm);
            sums.set(y, k, sums.get(y, k) + v / norm);
        }
    }
    let mut centers = Matrix::zeros(class_count, d);
    for y in 0..class_count {
        if counts[y] == 0 {
            return Err(CoreError::InsufficientSamples {
                what: "class samples for feature stats",
                needed: 1,
                available: 0,
            });
        }
        let norm = vec_norm(sums.row(y));
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        for k in 0..d {
            centers.set(y, k, sums.get(y, k) / norm);
        }
    }

    let mut intra = 0.0;
    for i in 0..features.rows() {
        let cos = dot(unit.row(i), centers.row(labels[i])).clamp(-1.0, 1.0);
        intra += fp::acos(cos);
    }
    intra /= features.rows() as f64;

    let mut min_inter = f64::INFINITY;
    for a in 0..class_count {
        for b in (a + 1)..class_count {
            let cos = dot(centers.row(a), centers.row(b)).clamp(-1.0, 1.0);
            min_inter = min_inter.min(fp::acos(cos));
        }
    }

    Ok(FeatureStats {
        mean_intra_class_angle_rad: intra,
        min_inter_center_angle_rad: min_inter,
        centers,
    })
}

/// Features projected row-wise onto the unit sphere (the form exported
/// for distribution plots).
pub fn normalized_rows(features: &Matrix) -> CoreResult<Matrix> {
    let mut out = Matrix::zeros(features.rows(), features.cols());
    for i in 0..features.rows() {
        let row = features.row(i);
        let norm = vec_norm(row);
        if norm <= NORM_EPS {
            return Err(CoreError::DegenerateNorm {
                norm,
                eps: NORM_EPS,
            });
        }
        for (k, &v) in row.iter().enumerate() {
            out.set(i, k, v / norm);
        }
    }
    Ok(out)
}
