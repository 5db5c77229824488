use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::audio::DatasetManifest;
use crate::audio::Label;
use crate::util::rng_for;

/// One subject-disjoint holdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// 1-based.
    pub iteration: usize,
    pub train_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
    /// Seed for everything random inside this iteration (init, shuffling).
    pub seed: u64,
}

fn subject_labels(manifest: &DatasetManifest) -> Result<BTreeMap<String, Label>, TrainError> {
    let mut out = BTreeMap::new();
    for e in &manifest.entries {
        if let Some(&prev) = out.get(&e.subject) {
            if prev != e.label {
                return Err(TrainError::InconsistentSubject(e.subject.clone()));
            }
        }
        out.insert(e.subject.clone(), e.label);
    }
    Ok(out)
}

/// Test subjects per class: nearest-integer share, at least one, leaving at
/// least one for training.
fn test_count(n: usize, test_frac: f64) -> usize {
    ((n as f64 * test_frac).round() as usize).clamp(1, n - 1)
}

/// `iterations` independent stratified subject-level splits.
pub fn make_splits(
    manifest: &DatasetManifest,
    iterations: usize,
    test_frac: f64,
    seed: u64,
) -> Result<Vec<SplitPlan>, TrainError> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(TrainError::InvalidHyper(format!("test_frac {test_frac} outside (0, 1)")));
    }
    let labels = subject_labels(manifest)?;
    let by_class: Vec<Vec<String>> = [Label::HC, Label::PD]
        .iter()
        .map(|&l| labels.iter().filter(|(_, &x)| x == l).map(|(s, _)| s.clone()).collect())
        .collect();
    for (l, subjects) in [Label::HC, Label::PD].iter().zip(&by_class) {
        if subjects.len() < 2 {
            return Err(TrainError::TooFewSubjects {
                label: l.to_string(),
                found: subjects.len(),
            });
        }
    }

    let mut plans = Vec::with_capacity(iterations);
    for it in 1..=iterations {
        let mut rng = rng_for(seed, 0x5_0000 + it as u64);
        let mut test = BTreeSet::new();
        let mut train = BTreeSet::new();
        for subjects in &by_class {
            let mut order = subjects.clone();
            order.shuffle(&mut rng);
            let k = test_count(order.len(), test_frac);
            test.extend(order[..k].iter().cloned());
            train.extend(order[k..].iter().cloned());
        }
        let iter_seed = rand::Rng::gen(&mut rng);
        plans.push(SplitPlan {
            iteration: it,
            train_subjects: train,
            test_subjects: test,
            seed: iter_seed,
        });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::ManifestEntry;
    use crate::audio::RecordingKind;

    fn manifest(hc: usize, pd: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        for (label, n, tag) in [(Label::HC, hc, "h"), (Label::PD, pd, "p")] {
            for i in 0..n {
                for r in 0..2 {
                    entries.push(ManifestEntry {
                        path: format!("{tag}{i}_{r}.wav"),
                        subject: format!("{tag}{i}"),
                        label,
                        kind: RecordingKind::Text,
                        timestamps: None,
                    });
                }
            }
        }
        DatasetManifest::new(entries, 16_000, ".").unwrap()
    }

    #[test]
    fn six_and_four_gives_one_each() {
        let plans = make_splits(&manifest(6, 4), 9, 0.2, 1).unwrap();
        assert_eq!(plans.len(), 9);
        for p in &plans {
            let hc = p.test_subjects.iter().filter(|s| s.starts_with('h')).count();
            let pd = p.test_subjects.iter().filter(|s| s.starts_with('p')).count();
            assert_eq!((hc, pd), (1, 1));
            assert!(p.train_subjects.is_disjoint(&p.test_subjects));
            assert_eq!(p.train_subjects.len() + p.test_subjects.len(), 10);
        }
    }

    #[test]
    fn test_count_enumeration() {
        // independent enumeration: the smallest k minimizing |k - n f| over 1..n-1
        for n in 2..40 {
            for f in [0.1, 0.2, 0.25, 0.3, 0.5, 0.75, 0.9] {
                let best = (1..n)
                    .min_by(|&a, &b| {
                        let da = (a as f64 - n as f64 * f).abs();
                        let db = (b as f64 - n as f64 * f).abs();
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                let exact_half = (n as f64 * f).fract() == 0.5;
                if !exact_half {
                    assert_eq!(test_count(n, f), best, "n={n} f={f}");
                }
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let m = manifest(10, 10);
        assert_eq!(make_splits(&m, 9, 0.2, 7).unwrap(), make_splits(&m, 9, 0.2, 7).unwrap());
        assert_ne!(make_splits(&m, 9, 0.2, 7).unwrap(), make_splits(&m, 9, 0.2, 8).unwrap());
    }

    #[test]
    fn too_few_subjects() {
        assert!(matches!(
            make_splits(&manifest(3, 1), 9, 0.2, 0),
            Err(TrainError::TooFewSubjects { found: 1, .. })
        ));
    }

    #[test]
    fn inconsistent_subject_rejected() {
        let mut m = manifest(2, 2);
        m.entries[0].label = Label::PD;
        assert!(matches!(make_splits(&m, 1, 0.2, 0), Err(TrainError::InconsistentSubject(_))));
    }
}
