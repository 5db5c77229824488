//! End-to-end experiment: segmentation, repeated subject-disjoint holdout
//! training of the CNN and the KNN baseline, Grad-CAM selection and the
//! report artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{AudioRecording, DatasetManifest, Label, ManifestEntry, RecordingKind};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gradcam::{
    chunk_score, class_averaged_map, class_pair_svg, grad_cam_batch, normalize_per_recording,
    recording_heatmap_svg, select_top_decile, word_frequency_report, write_attribution_csv, GradCamResult,
    SegmentImportance, WordFrequencyReport,
};
use crate::knn::KnnBaseline;
use crate::model::{PdNet, Provenance};
use crate::segment::{fit_chunk, read_timestamps, segment, SpeechChunk, Strategy};
use crate::synth::GroundTruth;
use crate::train::{
    aggregate, make_splits, predict, recording_votes, train, Confusion, EvalReport, Level, MetricName, Metrics,
    SplitPlan,
};
use crate::util::csv_field;
use crate::TOOL_VERSION;

pub const REPORT_FORMAT: &str = "pdcam-report";
pub const EXPLAIN_FORMAT: &str = "pdcam-explain";

/// Stamp carried by every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Stamp {
    pub fn for_config(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    write_file(path, s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Load, resample and segment every manifest entry. Chunks keep their raw
/// length; [`fit_all`] brings them to the network's input size.
pub fn segment_manifest(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<SpeechChunk>> {
    let s = &cfg.segment;
    let mut out = Vec::new();
    for entry in &manifest.entries {
        let rec = AudioRecording::load(entry, &manifest.base_dir, cfg.working_rate)?;
        let ts = match (&entry.timestamps, s.strategy) {
            (_, Strategy::Silence) => None,
            (Some(t), _) => Some(read_timestamps(&manifest.resolve(t))?),
            (None, _) => {
                return Err(Error::parse(
                    manifest.resolve(&entry.path),
                    format!("strategy {:?} needs word timestamps", s.strategy),
                ))
            }
        };
        out.extend(segment(
            &rec,
            s.strategy,
            ts.as_deref(),
            s.words_per_chunk,
            &s.envelope,
            s.snap_tolerance_s,
        )?);
    }
    Ok(out)
}

/// Manifest-shaped view of a chunk set (one entry per recording), enough
/// for subject-level splitting when only a chunk dump is available.
pub fn manifest_from_chunks(chunks: &[SpeechChunk], working_rate: u32) -> Result<DatasetManifest> {
    let mut recs: BTreeMap<&str, &SpeechChunk> = BTreeMap::new();
    for c in chunks {
        recs.entry(&c.recording_ref).or_insert(c);
    }
    let entries = recs
        .into_values()
        .map(|c| ManifestEntry {
            path: c.recording_ref.clone(),
            subject: c.subject_id.clone(),
            label: c.label,
            kind: RecordingKind::Text,
            timestamps: None,
        })
        .collect();
    Ok(DatasetManifest::new(entries, working_rate, ".")?)
}

pub fn fit_all(chunks: &[SpeechChunk], chunk_len: usize) -> Result<Vec<SpeechChunk>> {
    Ok(chunks
        .iter()
        .map(|c| fit_chunk(c, chunk_len))
        .collect::<Result<_, _>>()?)
}

/// Chunk-level and recording-level metrics for one model in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub chunk: Metrics,
    pub recording: Metrics,
}

fn level_metrics(test: &[&SpeechChunk], preds: &[Label]) -> Result<LevelMetrics> {
    let chunk = Metrics::from_confusion(Confusion::from_pairs(test.iter().map(|c| c.label).zip(preds.iter().copied())))?;
    let owned: Vec<SpeechChunk> = test.iter().map(|c| (*c).clone()).collect();
    let votes = recording_votes(&owned, preds);
    let recording = Metrics::from_confusion(Confusion::from_pairs(votes.iter().map(|v| (v.truth, v.predicted))))?;
    Ok(LevelMetrics { chunk, recording })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub train_chunks: usize,
    pub val_chunks: usize,
    pub test_chunks: usize,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub cnn: LevelMetrics,
    pub knn: LevelMetrics,
    /// Selected chunks in this iteration's explanation and how many were planted bursts.
    pub selected_chunks: usize,
    pub selected_in_bursts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResults {
    pub chunk: EvalReport,
    pub recording: EvalReport,
}

impl ModelResults {
    fn from_records(records: &[IterationRecord], pick: impl Fn(&IterationRecord) -> &LevelMetrics) -> Result<Self> {
        let chunk: Vec<Metrics> = records.iter().map(|r| pick(r).chunk).collect();
        let recording: Vec<Metrics> = records.iter().map(|r| pick(r).recording).collect();
        Ok(Self {
            chunk: aggregate(&chunk)?,
            recording: aggregate(&recording)?,
        })
    }

    pub fn level(&self, level: Level) -> &EvalReport {
        match level {
            Level::Chunk => &self.chunk,
            Level::Recording => &self.recording,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub target_class: Label,
    pub explained_recordings: usize,
    pub selected_chunks: usize,
    /// Share of selected chunks that carry a planted burst (synthetic corpora only).
    pub localization: Option<f64>,
    pub word_frequency: WordFrequencyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub recordings: usize,
    pub chunks: usize,
    pub subjects: BTreeMap<Label, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub stamp: Stamp,
    pub config: RunConfig,
    pub corpus: CorpusSummary,
    pub splits: Vec<SplitPlan>,
    pub iterations: Vec<IterationRecord>,
    /// Ours; `p_values` compare against the KNN baseline on the same splits.
    pub cnn: ModelResults,
    pub knn: ModelResults,
    pub explain: ExplainSummary,
}

impl RunReport {
    pub fn table1_csv(&self) -> String {
        let mut s = String::from("Model,Level,Accuracy,Precision,Recall,F1-Score\n");
        for level in [Level::Chunk, Level::Recording] {
            for (name, r) in [("KNN", &self.knn), ("Ours", &self.cnn)] {
                let rep = r.level(level);
                let cells: Vec<String> = MetricName::ALL.iter().map(|&m| rep.cell(m)).collect();
                let _ = writeln!(s, "{name},{level},{}", cells.join(","));
            }
            let rep = self.cnn.level(level);
            let ps: Vec<String> = MetricName::ALL
                .iter()
                .map(|m| rep.p_values.get(m).map_or(String::from("n/a"), |p| format_p(p.p_value)))
                .collect();
            let _ = writeln!(s, "p (Ours vs KNN),{level},{}", ps.join(","));
        }
        s
    }
}

fn format_p(p: f64) -> String {
    if p < 1e-12 {
        "<1e-12".into()
    } else {
        format!("{p:.4e}")
    }
}

pub fn word_frequency_csv(report: &WordFrequencyReport) -> String {
    let mut s = String::from("Word,Freq.\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{}", csv_field(&r.word), r.count);
    }
    s
}

/// Grad-CAM toward `class_id` for every chunk, grouped by recording (sorted),
/// each recording normalized and thresholded at its 90th percentile.
pub fn explain_chunks(net: &PdNet, chunks: &[SpeechChunk], class_id: usize) -> Result<Vec<SegmentImportance>> {
    let cams = grad_cam_batch(net, chunks, class_id)?;
    let mut by_rec: BTreeMap<&str, Vec<SegmentImportance>> = BTreeMap::new();
    for (c, cam) in chunks.iter().zip(&cams) {
        let raw = chunk_score(&cam.map);
        by_rec.entry(&c.recording_ref).or_default().push(SegmentImportance {
            recording: c.recording_ref.clone(),
            chunk_index: c.index,
            start_s: c.start_s,
            end_s: c.end_s,
            words: c.words.clone(),
            raw_score: raw,
            score: raw,
            selected: false,
        });
    }
    let mut out = Vec::with_capacity(chunks.len());
    for (_, mut rows) in by_rec {
        rows.sort_by_key(|r| r.chunk_index);
        normalize_per_recording(&mut rows)?;
        select_top_decile(&mut rows)?;
        out.extend(rows);
    }
    Ok(out)
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Attribution CSV plus one heatmap per recording under `dir`.
pub fn write_explanations(dir: &Path, rows: &[SegmentImportance]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_attribution_csv(&dir.join("attributions.csv"), rows)?;
    let mut by_rec: BTreeMap<&str, Vec<SegmentImportance>> = BTreeMap::new();
    for r in rows {
        by_rec.entry(&r.recording).or_default().push(r.clone());
    }
    for (rec, rs) in by_rec {
        let duration = rs.iter().map(|r| r.end_s).fold(0.0, f64::max);
        let svg = recording_heatmap_svg(rec, &rs, duration);
        write_file(&dir.join("heatmaps").join(format!("{}.svg", safe_name(rec))), svg)?;
    }
    Ok(())
}

fn burst_hits(rows: &[SegmentImportance], truth: &GroundTruth) -> usize {
    rows.iter()
        .filter(|r| r.selected)
        .filter(|r| {
            truth
                .burst_chunks
                .get(&r.recording)
                .is_some_and(|b| b.contains(&r.chunk_index))
        })
        .count()
}

/// Everything a run produces in memory; [`run_experiment`] also writes it out.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    pub models: Vec<PdNet>,
}

pub fn model_path(out: &Path, iteration: usize) -> PathBuf {
    out.join("models").join(format!("iter_{iteration:02}.pdn"))
}

/// Run the full holdout experiment on already segmented (raw-length) chunks
/// and write `report.json`, `table1.csv`, `word_frequency.csv`, models,
/// attributions and heatmaps under `out`.
pub fn run_experiment(
    manifest: &DatasetManifest,
    raw_chunks: &[SpeechChunk],
    cfg: &RunConfig,
    truth: Option<&GroundTruth>,
    out: &Path,
) -> Result<Experiment> {
    cfg.validate()?;
    let stamp = Stamp::for_config(cfg);
    let fitted = fit_all(raw_chunks, cfg.chunk_len)?;
    let plans = make_splits(manifest, cfg.iterations, cfg.test_frac, cfg.seed)?;

    let mut records = Vec::with_capacity(plans.len());
    let mut models = Vec::with_capacity(plans.len());
    let mut all_selected: Vec<SegmentImportance> = Vec::new();
    let mut class_cams: [Vec<GradCamResult>; 2] = [Vec::new(), Vec::new()];
    let mut explained = BTreeSet::new();

    for plan in &plans {
        let mut net = PdNet::init(cfg.chunk_len, plan.seed)?;
        net.provenance = Provenance {
            config_hash: stamp.config_hash.clone(),
            tool_version: TOOL_VERSION.to_string(),
        };
        let outcome = train(&mut net, &fitted, plan, &cfg.train)?;

        let test_idx: Vec<usize> = (0..fitted.len())
            .filter(|&i| plan.test_subjects.contains(&fitted[i].subject_id))
            .collect();
        let test: Vec<SpeechChunk> = test_idx.iter().map(|&i| fitted[i].clone()).collect();
        let test_refs: Vec<&SpeechChunk> = test.iter().collect();
        let cnn = level_metrics(&test_refs, &predict(&net, &test)?)?;

        let knn_train: Vec<&SpeechChunk> = raw_chunks
            .iter()
            .filter(|c| plan.train_subjects.contains(&c.subject_id))
            .collect();
        let knn_test: Vec<&SpeechChunk> = test_idx.iter().map(|&i| &raw_chunks[i]).collect();
        let baseline = KnnBaseline::fit(&knn_train, cfg.working_rate, cfg.knn_k)?;
        let knn = level_metrics(&knn_test, &baseline.predict(&knn_test)?)?;

        // attributions toward PD on the PD test recordings
        let pd_test: Vec<SpeechChunk> = test.iter().filter(|c| c.label == Label::PD).cloned().collect();
        let rows = explain_chunks(&net, &pd_test, Label::PD.index())?;
        write_explanations(&out.join("explain").join(format!("iter_{:02}", plan.iteration)), &rows)?;
        explained.extend(rows.iter().map(|r| (plan.iteration, r.recording.clone())));
        let selected: Vec<SegmentImportance> = rows.into_iter().filter(|r| r.selected).collect();
        let hits = truth.map(|t| burst_hits(&selected, t));

        for (class, cams) in class_cams.iter_mut().enumerate() {
            let own: Vec<SpeechChunk> = test.iter().filter(|c| c.label.index() == class).cloned().collect();
            cams.extend(grad_cam_batch(&net, &own, class)?);
        }

        let mp = model_path(out, plan.iteration);
        write_file(&mp, net.to_bytes())?;
        records.push(IterationRecord {
            iteration: plan.iteration,
            seed: plan.seed,
            train_chunks: outcome.train_chunks,
            val_chunks: outcome.val_chunks,
            test_chunks: test.len(),
            epochs_run: outcome.losses.len(),
            best_epoch: outcome.best_epoch,
            train_losses: outcome.losses,
            val_losses: outcome.val_losses,
            cnn,
            knn,
            selected_chunks: selected.len(),
            selected_in_bursts: hits,
        });
        all_selected.extend(selected);
        models.push(net);
    }

    let mut cnn = ModelResults::from_records(&records, |r| &r.cnn)?;
    let knn = ModelResults::from_records(&records, |r| &r.knn)?;
    cnn.chunk.compare_to(&knn.chunk)?;
    cnn.recording.compare_to(&knn.recording)?;

    let localization = truth.and_then(|t| {
        (!all_selected.is_empty()).then(|| burst_hits(&all_selected, t) as f64 / all_selected.len() as f64)
    });
    let word_frequency = word_frequency_report(&all_selected, cfg.top_words);

    let maps: Vec<Vec<f64>> = class_cams
        .iter()
        .enumerate()
        .map(|(c, cams)| {
            if cams.is_empty() {
                Ok(vec![0.0; cfg.chunk_len])
            } else {
                class_averaged_map(cams, c)
            }
        })
        .collect::<Result<_, _>>()?;
    write_file(&out.join("class_average.svg"), class_pair_svg(&maps[0], &maps[1]))?;

    let mut subjects: BTreeMap<Label, usize> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for e in &manifest.entries {
        if seen.insert(&e.subject) {
            *subjects.entry(e.label).or_default() += 1;
        }
    }
    let report = RunReport {
        format: REPORT_FORMAT.into(),
        stamp,
        config: cfg.clone(),
        corpus: CorpusSummary {
            recordings: manifest.entries.len(),
            chunks: raw_chunks.len(),
            subjects,
        },
        splits: plans,
        iterations: records,
        cnn,
        knn,
        explain: ExplainSummary {
            target_class: Label::PD,
            explained_recordings: explained.len(),
            selected_chunks: all_selected.len(),
            localization,
            word_frequency,
        },
    };
    write_json(&out.join("report.json"), &report)?;
    write_file(&out.join("table1.csv"), report.table1_csv())?;
    write_file(&out.join("word_frequency.csv"), word_frequency_csv(&report.explain.word_frequency))?;
    Ok(Experiment { report, models })
}

/// Stand-alone explanation of one model over fitted chunks (the `explain` command).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub format: String,
    pub model_config_hash: String,
    pub chunks_config_hash: String,
    pub tool_version: String,
    pub target_class: Label,
    pub recordings: usize,
    pub selected_chunks: usize,
    pub word_frequency: WordFrequencyReport,
}

pub fn explain_model(
    net: &PdNet,
    chunks: &[SpeechChunk],
    chunks_config_hash: &str,
    top_words: usize,
    out: &Path,
) -> Result<ExplainReport> {
    let fitted = fit_all(chunks, net.chunk_len())?;
    let pd: Vec<SpeechChunk> = fitted.iter().filter(|c| c.label == Label::PD).cloned().collect();
    let rows = explain_chunks(net, &pd, Label::PD.index())?;
    write_explanations(out, &rows)?;

    let mut cams = Vec::new();
    for class in 0..2 {
        let own: Vec<SpeechChunk> = fitted.iter().filter(|c| c.label.index() == class).cloned().collect();
        cams.push(if own.is_empty() {
            vec![0.0; net.chunk_len()]
        } else {
            class_averaged_map(&grad_cam_batch(net, &own, class)?, class)?
        });
    }
    write_file(&out.join("class_average.svg"), class_pair_svg(&cams[0], &cams[1]))?;

    let word_frequency = word_frequency_report(&rows, top_words);
    write_file(&out.join("word_frequency.csv"), word_frequency_csv(&word_frequency))?;
    let report = ExplainReport {
        format: EXPLAIN_FORMAT.into(),
        model_config_hash: net.provenance.config_hash.clone(),
        chunks_config_hash: chunks_config_hash.to_string(),
        tool_version: TOOL_VERSION.into(),
        target_class: Label::PD,
        recordings: rows.iter().map(|r| &r.recording).collect::<BTreeSet<_>>().len(),
        selected_chunks: rows.iter().filter(|r| r.selected).count(),
        word_frequency,
    };
    write_json(&out.join("explain.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub models_checked: usize,
    pub explain_reports: usize,
    /// Column headers in Table 1 order, then one row per model and level.
    pub table1_columns: Vec<String>,
    pub table1_rows: Vec<Vec<String>>,
    pub table2: WordFrequencyReport,
}

/// Merge a run directory into `summary.json`, `table1.csv` and `table2.csv`.
/// Every model file and explanation found must carry the report's config hash.
pub fn merge_run(run_dir: &Path) -> Result<MergedReport> {
    let report: RunReport = read_json(&run_dir.join("report.json"))?;
    let hash = &report.stamp.config_hash;
    if &report.config.hash() != hash {
        return Err(Error::ArtifactMismatch(format!(
            "report.json config hashes to {}, stamped {hash}",
            report.config.hash()
        )));
    }
    let mut models_checked = 0;
    let models_dir = run_dir.join("models");
    if models_dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&models_dir)
            .map_err(|e| Error::io(&models_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pdn"))
            .collect();
        paths.sort();
        for p in paths {
            let net = PdNet::load(&p)?;
            if &net.provenance.config_hash != hash {
                return Err(Error::ArtifactMismatch(format!(
                    "{} was produced under config {}, report under {hash}",
                    p.display(),
                    net.provenance.config_hash
                )));
            }
            models_checked += 1;
        }
    }
    let mut explain_reports = 0;
    let mut table2 = report.explain.word_frequency.clone();
    let mut candidates = vec![run_dir.join("explain.json")];
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    candidates.extend(subdirs.into_iter().map(|d| d.join("explain.json")));
    for path in candidates.into_iter().filter(|p| p.is_file()) {
        let ex: ExplainReport = read_json(&path)?;
        if &ex.model_config_hash != hash {
            return Err(Error::ArtifactMismatch(format!(
                "{} used a model from config {}, report is {hash}",
                path.display(),
                ex.model_config_hash
            )));
        }
        explain_reports += 1;
        table2 = ex.word_frequency;
    }

    let csv = report.table1_csv();
    let mut lines = csv.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let table1_columns = lines.next().unwrap_or_default();
    let table1_rows = lines.collect();
    let merged = MergedReport {
        format: "pdcam-summary".into(),
        config_hash: hash.clone(),
        seed: report.stamp.seed,
        tool_version: report.stamp.tool_version.clone(),
        models_checked,
        explain_reports,
        table1_columns,
        table1_rows,
        table2,
    };
    write_json(&run_dir.join("summary.json"), &merged)?;
    write_file(&run_dir.join("table1.csv"), csv)?;
    write_file(&run_dir.join("table2.csv"), word_frequency_csv(&merged.table2))?;
    Ok(merged)
}
