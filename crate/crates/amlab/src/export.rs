//! Deterministic CSV and JSON rendering. All files use LF line endings,
//! six significant digits for tabulated reals, and contain no
//! timestamps or absolute paths, so byte-identical reruns are the norm.

use serde::Serialize;

use amlab_core::margin::PsiCurve;
use amlab_core::norm::GradNormPoint;
use amlab_core::train::TrainHistory;
use amlab_core::Matrix;

/// Formats with `sig` significant digits in positional notation.
pub fn format_sig(x: f64, sig: u32) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return format!("{:.*}", sig as usize - 1, 0.0);
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

fn sig6(x: f64) -> String {
    format_sig(x, 6)
}

/// `theta_deg` plus one column per transform.
pub fn psi_curve_csv(curve: &PsiCurve) -> String {
    let mut out = String::from("theta_deg");
    for (name, _) in &curve.columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, &deg) in curve.theta_deg.iter().enumerate() {
        out.push_str(&sig6(deg));
        for (_, values) in &curve.columns {
            out.push(',');
            out.push_str(&sig6(values[i]));
        }
        out.push('\n');
    }
    out
}

/// `feature_norm,grad_fn,grad_plain` table.
pub fn gradnorm_csv(points: &[GradNormPoint]) -> String {
    let mut out = String::from("feature_norm,grad_fn,grad_plain\n");
    for p in points {
        out.push_str(&sig6(p.feature_norm));
        out.push(',');
        out.push_str(&sig6(p.grad_fn));
        out.push(',');
        out.push_str(&sig6(p.grad_plain));
        out.push('\n');
    }
    out
}

/// Unit-normalized feature rows with labels; `x,y,z,label` for
/// three-dimensional embeddings, `x0..x{d-1},label` otherwise.
pub fn features_csv(unit_features: &Matrix, labels: &[usize]) -> String {
    let d = unit_features.cols();
    let mut out = String::new();
    if d == 3 {
        out.push_str("x,y,z,label\n");
    } else {
        for k in 0..d {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format!("x{k}"));
        }
        out.push_str(",label\n");
    }
    for i in 0..unit_features.rows() {
        for (k, v) in unit_features.row(i).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&sig6(*v));
        }
        out.push_str(&format!(",{}\n", labels[i]));
    }
    out
}

/// `iter,loss,lr,lambda` per training iteration.
pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("iter,loss,lr,lambda\n");
    for i in 0..history.losses.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            sig6(history.losses[i]),
            sig6(history.lrs[i]),
            sig6(history.lambdas[i]),
        ));
    }
    out
}

/// One verification-rate reading from the ROC.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VrAtFarEntry {
    pub far: f64,
    pub vr: f64,
}

/// The metric report emitted by training and evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub vr_at_far: Vec<VrAtFarEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir_at_far: Option<f64>,
    pub rank1: f64,
    pub mean_intra_angle_deg: f64,
    pub min_inter_center_angle_deg: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
