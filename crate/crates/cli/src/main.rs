//! `pdcam`: synthesize, segment, train, explain and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdcam::audio::DatasetManifest;
use pdcam::config::RunConfig;
use pdcam::pipeline::{explain_model, manifest_from_chunks, merge_run, read_json, run_experiment, segment_manifest};
use pdcam::segment::{read_chunk_dump, write_chunk_dump, ChunkDumpHeader, Strategy};
use pdcam::synth::{generate, GroundTruth, SynthConfig};
use pdcam::{Error, ErrorKind, PdNet, Result};

#[derive(Parser)]
#[command(name = "pdcam", version, about = "Interpretable speech-based PD screening pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Synth config (JSON or TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Remove every class difference (no tremor, no bursts).
        #[arg(long)]
        null: bool,
    },
    /// Segment a manifest's recordings into a chunk dump.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        /// Chunk index file to write; samples go to a sibling `.f32` file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Repeated holdout training and evaluation.
    Train {
        #[arg(long, conflicts_with = "chunks", required_unless_present = "chunks")]
        manifest: Option<PathBuf>,
        /// Train from a chunk dump instead of segmenting a manifest.
        #[arg(long)]
        chunks: Option<PathBuf>,
        /// Synthetic ground truth, enables the localization score.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grad-CAM attributions of one model over a chunk dump.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_words: usize,
    },
    /// Merge a run directory into Table 1 / Table 2 style outputs.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

/// Configuration file plus flag overrides; flags win.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    working_rate: Option<u32>,
    #[arg(long)]
    chunk_len: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.strategy {
            cfg.segment.strategy = v;
        }
        if let Some(v) = self.working_rate {
            cfg.working_rate = v;
        }
        if let Some(v) = self.chunk_len {
            cfg.chunk_len = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Build a directory's contents in a sibling staging directory and move it
/// into place only on success, so failures leave no partial output.
fn staged<T>(out: &Path, build: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if out.exists() && std::fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some() {
        return Err(Error::Config(format!("{} exists and is not empty", out.display())));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let stage = parent.join(format!(
        ".{}.partial",
        out.file_name().map_or("pdcam-out".into(), |n| n.to_string_lossy().into_owned())
    ));
    if stage.exists() {
        std::fs::remove_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    }
    std::fs::create_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    match build(&stage) {
        Ok(v) => {
            if out.exists() {
                std::fs::remove_dir(out).map_err(|e| Error::io(out, e))?;
            }
            std::fs::rename(&stage, out).map_err(|e| Error::io(out, e))?;
            Ok(v)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&stage);
            Err(e)
        }
    }
}

fn load_manifest(path: &Path, cfg: &RunConfig) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(path, cfg.working_rate)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, config, seed, null } => {
            let mut cfg = match config {
                Some(p) => SynthConfig::load(&p)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if null {
                cfg = cfg.null_control();
            }
            let corpus = generate(&cfg)?;
            staged(&out, |dir| Ok(corpus.write(dir)?))?;
            eprintln!("wrote {} recordings to {}", corpus.recordings.len(), out.display());
        }
        Command::Segment { manifest, out, run } => {
            let cfg = run.resolve()?;
            let m = load_manifest(&manifest, &cfg)?;
            let chunks = segment_manifest(&m, &cfg)?;
            let header = ChunkDumpHeader::new(cfg.working_rate, cfg.hash(), cfg.seed);
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_chunk_dump(&out, &header, &chunks)?;
            eprintln!("wrote {} chunks to {}", chunks.len(), out.display());
        }
        Command::Train {
            manifest,
            chunks,
            ground_truth,
            out,
            run,
        } => {
            let cfg = run.resolve()?;
            let (m, raw) = match (manifest, chunks) {
                (Some(p), _) => {
                    let m = load_manifest(&p, &cfg)?;
                    let raw = segment_manifest(&m, &cfg)?;
                    (m, raw)
                }
                (None, Some(p)) => {
                    let (header, raw) = read_chunk_dump(&p)?;
                    if header.sample_rate != cfg.working_rate {
                        return Err(Error::Config(format!(
                            "chunks are at {} Hz, config working_rate is {} Hz",
                            header.sample_rate, cfg.working_rate
                        )));
                    }
                    (manifest_from_chunks(&raw, cfg.working_rate)?, raw)
                }
                (None, None) => unreachable!("clap requires one of --manifest / --chunks"),
            };
            let truth: Option<GroundTruth> = ground_truth.map(|p| read_json(&p)).transpose()?;
            let exp = staged(&out, |dir| run_experiment(&m, &raw, &cfg, truth.as_ref(), dir))?;
            eprint!("{}", exp.report.table1_csv());
            if let Some(l) = exp.report.explain.localization {
                eprintln!("localization: {:.1}% of selected chunks are planted bursts", 100.0 * l);
            }
        }
        Command::Explain {
            model,
            chunks,
            out,
            top_words,
        } => {
            let net = PdNet::load(&model)?;
            let (header, raw) = read_chunk_dump(&chunks)?;
            let rep = staged(&out, |dir| explain_model(&net, &raw, &header.config_hash, top_words, dir))?;
            eprintln!(
                "{} selected chunks over {} PD recordings",
                rep.selected_chunks, rep.recordings
            );
        }
        Command::Report { run } => {
            let merged = merge_run(&run)?;
            eprintln!(
                "merged run {} ({} model files checked)",
                merged.config_hash, merged.models_checked
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Config => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}
