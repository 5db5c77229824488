use std::path::Path;

use pdcam::audio::Label;
use pdcam::pipeline::{merge_run, model_path, run_experiment, segment_manifest, Experiment};
use pdcam::synth::{generate, SynthConfig};
use pdcam::train::Hyper;
use pdcam::{Error, PdNet, RunConfig};

fn small_run(dir: &Path) -> Experiment {
    let synth = SynthConfig {
        n_subjects: 3,
        recordings_per_subject: 1,
        words_per_recording: 6,
        seed: 5,
        ..SynthConfig::default()
    };
    let corpus = generate(&synth).unwrap();
    let data = dir.join("data");
    let manifest = corpus.write(&data).unwrap();
    let cfg = RunConfig {
        working_rate: synth.sample_rate,
        chunk_len: 32,
        iterations: 2,
        train: Hyper {
            epochs: 2,
            ..Hyper::default()
        },
        ..RunConfig::default()
    };
    let chunks = segment_manifest(&manifest, &cfg).unwrap();
    run_experiment(&manifest, &chunks, &cfg, Some(&corpus.ground_truth()), &dir.join("run")).unwrap()
}

#[test]
fn small_pipeline_is_deterministic_leak_free_and_mergeable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ea = small_run(a.path());
    let eb = small_run(b.path());

    let ra = std::fs::read(a.path().join("run/report.json")).unwrap();
    let rb = std::fs::read(b.path().join("run/report.json")).unwrap();
    assert_eq!(ra, rb);
    for it in 1..=2 {
        let ma = std::fs::read(model_path(&a.path().join("run"), it)).unwrap();
        let mb = std::fs::read(model_path(&b.path().join("run"), it)).unwrap();
        assert_eq!(ma, mb);
    }

    // leakage audit over the recorded splits
    let report = &ea.report;
    assert_eq!(report, &eb.report);
    assert_eq!(report.splits.len(), 2);
    for plan in &report.splits {
        assert!(plan.train_subjects.is_disjoint(&plan.test_subjects));
        for label in ["hc", "pd"] {
            assert!(plan.test_subjects.iter().any(|s| s.starts_with(label)));
            assert!(plan.train_subjects.iter().any(|s| s.starts_with(label)));
        }
    }
    for rec in &report.iterations {
        assert!(rec.epochs_run >= 1 && rec.epochs_run <= 2);
        assert!(rec.test_chunks > 0);
    }
    assert_eq!(report.explain.target_class, Label::PD);
    assert!(report.explain.localization.is_some());

    let run = a.path().join("run");
    for f in ["table1.csv", "word_frequency.csv", "class_average.svg", "explain/iter_01/attributions.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let merged = merge_run(&run).unwrap();
    assert_eq!(merged.models_checked, 2);
    assert_eq!(merged.table1_columns, ["Model", "Level", "Accuracy", "Precision", "Recall", "F1-Score"]);
    assert_eq!(merged.table1_rows.len(), 6);
    assert!(run.join("summary.json").is_file());
    assert!(run.join("table2.csv").is_file());

    // a model from a different configuration is refused
    let mp = model_path(&run, 2);
    let mut net = PdNet::load(&mp).unwrap();
    net.provenance.config_hash = "0000".into();
    net.save(&mp).unwrap();
    assert!(matches!(merge_run(&run), Err(Error::ArtifactMismatch(_))));
}
