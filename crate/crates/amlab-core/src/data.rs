//! Synthetic datasets and verification/identification protocol
//! construction. All constructors are deterministic per seed.

use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};
use crate::numeric::{Matrix, Rng};

/// Input vectors (one sample per row) with integer labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, class_count: usize) -> CoreResult<LabeledDataset> {
        if inputs.rows() == 0 {
            return Err(CoreError::EmptyInput("dataset"));
        }
        if inputs.rows() != labels.len() {
            return Err(CoreError::LengthMismatch {
                what: "dataset inputs vs labels",
                left: inputs.rows(),
                right: labels.len(),
            });
        }
        for &y in &labels {
            if y >= class_count {
                return Err(CoreError::LabelOutOfRange {
                    label: y,
                    classes: class_count,
                });
            }
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Sample indices of each class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = alloc::vec![Vec::new(); self.class_count];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }
}

/// Gaussian blobs around class centers drawn uniformly on the unit
/// sphere in `R^dim`. Samples are stored class-major.
pub fn synth_blobs(
    class_count: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> CoreResult<LabeledDataset> {
    synth_blobs_split(class_count, dim, samples_per_class, spread, seed, seed)
}

/// Blob generation with the class centers and the sample noise seeded
/// separately, so train and eval splits can share classes while drawing
/// disjoint samples.
pub fn synth_blobs_split(
    class_count: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    center_seed: u64,
    sample_seed: u64,
) -> CoreResult<LabeledDataset> {
    if class_count < 2 {
        return Err(CoreError::InsufficientClasses {
            needed: 2,
            available: class_count,
        });
    }
    if dim == 0 || samples_per_class == 0 {
        return Err(CoreError::InvalidConfig("dim and samples_per_class must be positive"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(CoreError::OutOfDomain {
            what: "spread",
            value: spread,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let mut center_rng = Rng::new(center_seed);
    let mut centers = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        centers.push(center_rng.unit_vector(dim)?);
    }
    let mut rng = Rng::new(sample_seed);
    let n = class_count * samples_per_class;
    let mut inputs = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..samples_per_class {
            for (k, &c) in center.iter().enumerate() {
                inputs.set(row, k, rng.gaussian(c, spread)?);
            }
            labels.push(class);
            row += 1;
        }
    }
    LabeledDataset::new(inputs, labels, class_count)
}

/// Same/different sample pairs for verification testing.
#[derive(Clone, Debug)]
pub struct VerificationProtocol {
    /// `(index_a, index_b, same_class)`; no duplicate unordered pairs.
    pub pairs: Vec<(usize, usize, bool)>,
}

/// Draws `pair_count / 2` genuine and `pair_count / 2` impostor pairs,
/// seeded, without duplicate unordered pairs.
pub fn make_verification_pairs(
    dataset: &LabeledDataset,
    pair_count: usize,
    seed: u64,
) -> CoreResult<VerificationProtocol> {
    if pair_count == 0 || pair_count % 2 != 0 {
        return Err(CoreError::InvalidConfig("pair_count must be even and positive"));
    }
    let by_class = dataset.indices_by_class();
    for members in &by_class {
        if members.len() < 2 {
            return Err(CoreError::InsufficientSamples {
                what: "verification pairs per class",
                needed: 2,
                available: members.len(),
            });
        }
    }
    let same_available: usize = by_class
        .iter()
        .map(|m| m.len() * (m.len() - 1) / 2)
        .sum();
    let half = pair_count / 2;
    if same_available < half {
        return Err(CoreError::InsufficientSamples {
            what: "distinct genuine pairs",
            needed: half,
            available: same_available,
        });
    }

    let mut rng = Rng::new(seed);
    let mut seen = alloc::collections::BTreeSet::new();
    let mut pairs = Vec::with_capacity(pair_count);

    let push_unique = |a: usize, b: usize, same: bool,
                           seen: &mut alloc::collections::BTreeSet<(usize, usize)>,
                           pairs: &mut Vec<(usize, usize, bool)>| {
        let key = (a.min(b), a.max(b));
        if a != b && seen.insert(key) {
            pairs.push((a, b, same));
            true
        } else {
            false
        }
    };

    let mut genuine = 0;
    let mut attempts = 0usize;
    while genuine < half {
        let class = rng.below(dataset.class_count);
        let members = &by_class[class];
        let a = members[rng.below(members.len())];
        let b = members[rng.below(members.len())];
        if push_unique(a, b, true, &mut seen, &mut pairs) {
            genuine += 1;
        }
        attempts += 1;
        if attempts > 1000 * pair_count {
            return Err(CoreError::InsufficientSamples {
                what: "genuine pair sampling",
                needed: half,
                available: genuine,
            });
        }
    }

    let mut impostor = 0;
    attempts = 0;
    while impostor < half {
        let ca = rng.below(dataset.class_count);
        let cb = rng.below(dataset.class_count);
        if ca == cb {
            continue;
        }
        let a = by_class[ca][rng.below(by_class[ca].len())];
        let b = by_class[cb][rng.below(by_class[cb].len())];
        if push_unique(a, b, false, &mut seen, &mut pairs) {
            impostor += 1;
        }
        attempts += 1;
        if attempts > 1000 * pair_count {
            return Err(CoreError::InsufficientSamples {
                what: "impostor pair sampling",
                needed: half,
                available: impostor,
            });
        }
    }

    Ok(VerificationProtocol { pairs })
}

/// Gallery/probe/distractor split for identification testing.
///
/// Gallery and probe indices come from identity classes; distractor
/// indices come from classes with no probes, so they share no label
/// with any probe. All index sets are pairwise disjoint.
#[derive(Clone, Debug)]
pub struct IdentificationProtocol {
    pub gallery: Vec<usize>,
    pub probes: Vec<usize>,
    /// Position in `gallery` of each probe's mated entry.
    pub probe_truth: Vec<usize>,
    pub distractors: Vec<usize>,
}

pub fn make_identification_protocol(
    dataset: &LabeledDataset,
    gallery_per_class: usize,
    probe_per_class: usize,
    distractor_classes: usize,
    seed: u64,
) -> CoreResult<IdentificationProtocol> {
    if gallery_per_class == 0 || probe_per_class == 0 {
        return Err(CoreError::InvalidConfig(
            "gallery_per_class and probe_per_class must be positive",
        ));
    }
    if distractor_classes + 1 > dataset.class_count {
        return Err(CoreError::InsufficientClasses {
            needed: distractor_classes + 1,
            available: dataset.class_count,
        });
    }
    let mut rng = Rng::new(seed);
    let mut class_order: Vec<usize> = (0..dataset.class_count).collect();
    rng.shuffle(&mut class_order);
    let (distractor_ids, identity_ids) = class_order.split_at(distractor_classes);

    let by_class = dataset.indices_by_class();
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    let mut probe_truth = Vec::new();
    let mut distractors = Vec::new();

    for &class in identity_ids {
        let mut members = by_class[class].clone();
        let needed = gallery_per_class + probe_per_class;
        if members.len() < needed {
            return Err(CoreError::InsufficientSamples {
                what: "identity class samples",
                needed,
                available: members.len(),
            });
        }
        rng.shuffle(&mut members);
        let first_gallery_pos = gallery.len();
        gallery.extend_from_slice(&members[..gallery_per_class]);
        for &probe in &members[gallery_per_class..needed] {
            probes.push(probe);
            probe_truth.push(first_gallery_pos);
        }
    }
    for &class in distractor_ids {
        let mut members = by_class[class].clone();
        if members.len() < gallery_per_class {
            return Err(CoreError::InsufficientSamples {
                what: "distractor class samples",
                needed: gallery_per_class,
                available: members.len(),
            });
        }
        rng.shuffle(&mut members);
        distractors.extend_from_slice(&members[..gallery_per_class]);
    }

    Ok(IdentificationProtocol {
        gallery,
        probes,
        probe_truth,
        distractors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_counts_and_determinism() {
        let a = synth_blobs(4, 8, 5, 0.2, 7).unwrap();
        let b = synth_blobs(4, 8, 5, 0.2, 7).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.class_count, 4);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
        let c = synth_blobs(4, 8, 5, 0.2, 8).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let ds = synth_blobs(3, 5, 4, 0.0, 11).unwrap();
        for class in 0..3 {
            let first = ds.inputs.row(class * 4).to_vec();
            for s in 1..4 {
                assert_eq!(ds.inputs.row(class * 4 + s), &first[..]);
            }
        }
    }

    #[test]
    fn blobs_reject_single_class() {
        assert!(matches!(
            synth_blobs(1, 4, 3, 0.1, 0),
            Err(CoreError::InsufficientClasses { .. })
        ));
    }

    #[test]
    fn verification_pairs_balanced_and_valid() {
        let ds = synth_blobs(2, 4, 2, 0.1, 3).unwrap();
        let proto = make_verification_pairs(&ds, 4, 5).unwrap();
        assert_eq!(proto.pairs.len(), 4);
        let same = proto.pairs.iter().filter(|p| p.2).count();
        assert_eq!(same, 2);
        for &(a, b, same) in &proto.pairs {
            assert!(a < ds.len() && b < ds.len() && a != b);
            assert_eq!(ds.labels[a] == ds.labels[b], same);
        }
    }

    #[test]
    fn verification_pairs_unique_and_deterministic() {
        let ds = synth_blobs(5, 4, 10, 0.1, 3).unwrap();
        let p1 = make_verification_pairs(&ds, 60, 9).unwrap();
        let p2 = make_verification_pairs(&ds, 60, 9).unwrap();
        assert_eq!(p1.pairs, p2.pairs);
        let mut keys: Vec<(usize, usize)> = p1
            .pairs
            .iter()
            .map(|&(a, b, _)| (a.min(b), a.max(b)))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 60);
    }

    #[test]
    fn verification_pairs_reject_undersized_classes() {
        let ds = LabeledDataset::new(
            Matrix::from_vec(3, 2, alloc::vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap(),
            alloc::vec![0, 0, 1],
            2,
        )
        .unwrap();
        assert!(make_verification_pairs(&ds, 4, 0).is_err());
    }

    #[test]
    fn identification_roles_are_disjoint() {
        let ds = synth_blobs(8, 4, 6, 0.1, 13).unwrap();
        let proto = make_identification_protocol(&ds, 2, 2, 3, 17).unwrap();
        let mut all: Vec<usize> = proto
            .gallery
            .iter()
            .chain(&proto.probes)
            .chain(&proto.distractors)
            .copied()
            .collect();
        let before = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(before, all.len(), "roles overlap");
        assert_eq!(proto.gallery.len(), 5 * 2);
        assert_eq!(proto.probes.len(), 5 * 2);
        assert_eq!(proto.distractors.len(), 3 * 2);
    }

    #[test]
    fn identification_distractors_share_no_probe_label() {
        let ds = synth_blobs(6, 4, 5, 0.1, 21).unwrap();
        let proto = make_identification_protocol(&ds, 1, 2, 2, 23).unwrap();
        let probe_labels: alloc::collections::BTreeSet<usize> =
            proto.probes.iter().map(|&i| ds.labels[i]).collect();
        for &i in &proto.distractors {
            assert!(!probe_labels.contains(&ds.labels[i]));
        }
        // Every probe's identity appears in the gallery.
        for (p, &truth) in proto.probes.iter().zip(&proto.probe_truth) {
            assert_eq!(ds.labels[*p], ds.labels[proto.gallery[truth]]);
        }
    }

    #[test]
    fn identification_closed_set_has_no_distractors() {
        let ds = synth_blobs(4, 4, 4, 0.1, 29).unwrap();
        let proto = make_identification_protocol(&ds, 1, 1, 0, 31).unwrap();
        assert!(proto.distractors.is_empty());
        assert_eq!(proto.gallery.len(), 4);
    }

    #[test]
    fn identification_deterministic() {
        let ds = synth_blobs(6, 4, 5, 0.1, 37).unwrap();
        let a = make_identification_protocol(&ds, 1, 2, 2, 41).unwrap();
        let b = make_identification_protocol(&ds, 1, 2, 2, 41).unwrap();
        assert_eq!(a.gallery, b.gallery);
        assert_eq!(a.probes, b.probes);
        assert_eq!(a.probe_truth, b.probe_truth);
        assert_eq!(a.distractors, b.distractors);
    }

    #[test]
    fn identification_rejects_too_many_distractor_classes() {
        let ds = synth_blobs(3, 4, 4, 0.1, 43).unwrap();
        assert!(matches!(
            make_identification_protocol(&ds, 1, 1, 3, 47),
            Err(CoreError::InsufficientClasses { .. })
        ));
    }
}
