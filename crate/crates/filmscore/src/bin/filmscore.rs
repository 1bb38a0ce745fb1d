//! Command-line surface: `curate`, `train`, `generate`, `evaluate`.
//!
//! Exit codes: 0 success, 1 runtime failure (with stage attribution),
//! 2 usage errors (bad arguments, missing input files).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use filmscore::checkpoint::{load_checkpoint, save_checkpoint};
use filmscore::codec::{read_wav, write_wav, Waveform};
use filmscore::config::RunConfig;
use filmscore::curation::AvEmbedder;
use filmscore::curation::{
    run_pipeline_file, Adapters, BandEnergyTagger, BandStopSeparator, CurateConfig,
    HashProjectionAv, Split,
};
use filmscore::error::Error;
use filmscore::frontend::{encode_frames, sample_frames};
use filmscore::inference::{generate_long, plan_windows, GenerateOptions};
use filmscore::metrics::extractors::{
    AudioClassifier, AudioEmbedder, HashProjectionClassifier, HashProjectionEmbedder,
};
use filmscore::metrics::{
    alignment_score, density_coverage, frechet, metric_ranks, prediction_kl, EmbeddingSet,
    MethodMetrics, MetricReport, PredictionSet, SourceTag, METRIC_COLUMNS,
};
use filmscore::training::{append_log, build_batch, Batch, FrontendConfig, Trainer};

const ENV_DATA_ROOT: &str = "FILMSCORE_DATA_ROOT";

// Fixed stub-extractor seeds so every invocation embeds identically.
const FAD_EMBED_SEED: u64 = 101;
const FD_EMBED_SEED: u64 = 202;
const MANIFOLD_EMBED_SEED: u64 = 303;
const TAGGER_SEED: u64 = 404;
const AV_EMBED_SEED: u64 = 505;

/// Decode bound (seconds) for training clips; generation decodes full length.
const TRAIN_CLIP_CAP_S: f64 = 600.0;

#[derive(Parser)]
#[command(name = "filmscore", version, about = "Video-to-music generation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and rank a media manifest into dataset splits.
    Curate {
        /// Input JSONL manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Output JSONL manifest.
        #[arg(long)]
        out: PathBuf,
        /// Curation thresholds (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reuse per-stage verdicts already present in the manifest.
        #[arg(long)]
        resume: bool,
        /// Root for relative media paths (default: $FILMSCORE_DATA_ROOT).
        #[arg(long)]
        media_root: Option<PathBuf>,
    },
    /// Train fusion + decoder on a manifest of video/audio pairs.
    Train {
        /// JSONL manifest of records with video and audio paths.
        #[arg(long)]
        manifest: PathBuf,
        /// Run configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoint, log, and resolved config.
        #[arg(long)]
        out_dir: PathBuf,
        /// Only train on records with this split (e.g. finetune).
        #[arg(long)]
        split: Option<String>,
        /// Override the configured total step count.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        media_root: Option<PathBuf>,
    },
    /// Generate music for a video with a trained checkpoint.
    Generate {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output WAV path; a JSON sidecar and token stream sit next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score generated audio directories against a reference directory.
    Evaluate {
        /// Reference WAV directory.
        #[arg(long)]
        reference: PathBuf,
        /// Repeated `name=dir` entries, one per method.
        #[arg(long = "pred", value_name = "NAME=DIR")]
        preds: Vec<String>,
        /// Optional JSONL pairing file: {"pred": .., "ref": .., "video": ..}.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Output prefix; writes <out>.csv, <out>.json, <out>.ranks.csv.
        #[arg(long)]
        out: PathBuf,
        /// Neighbourhood size for density/coverage.
        #[arg(long, default_value_t = 5)]
        knn: usize,
    },
}

enum CliError {
    /// Bad arguments or missing inputs; exit code 2.
    Usage(String),
    /// A pipeline stage failed; exit code 1.
    Runtime(String, Error),
}

impl CliError {
    fn runtime(stage: &str) -> impl Fn(Error) -> CliError + '_ {
        move |e| CliError::Runtime(stage.to_string(), e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(stage, e)) => {
            eprintln!("error in {stage}: {e}");
            ExitCode::from(1)
        }
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn media_root(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var(ENV_DATA_ROOT).ok().map(PathBuf::from))
}

fn load_run_config(path: &Option<PathBuf>) -> CliResult<RunConfig> {
    match path {
        Some(p) => {
            require_file(p, "config file")?;
            RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Curate {
            manifest,
            out,
            config,
            resume,
            media_root: root,
        } => cmd_curate(&manifest, &out, config.as_deref(), resume, media_root(root)),
        Command::Train {
            manifest,
            config,
            out_dir,
            split,
            steps,
            media_root: root,
        } => cmd_train(
            &manifest,
            &config,
            &out_dir,
            split.as_deref(),
            steps,
            media_root(root),
        ),
        Command::Generate {
            video,
            checkpoint,
            out,
            config,
            seed,
        } => cmd_generate(&video, &checkpoint, &out, &config, seed),
        Command::Evaluate {
            reference,
            preds,
            pairs,
            out,
            knn,
        } => cmd_evaluate(&reference, &preds, pairs.as_deref(), &out, knn),
    }
}

fn cmd_curate(
    manifest: &Path,
    out: &Path,
    config: Option<&Path>,
    resume: bool,
    root: Option<PathBuf>,
) -> CliResult<()> {
    require_file(manifest, "manifest")?;
    let cfg = match config {
        Some(p) => {
            require_file(p, "curate config")?;
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            CurateConfig::from_toml(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => CurateConfig::default(),
    };
    let tagger = BandEnergyTagger::default();
    let separator = BandStopSeparator::default();
    let av = HashProjectionAv::new(8, AV_EMBED_SEED);
    let adapters = Adapters {
        tagger: &tagger,
        separator: &separator,
        av_embedder: &av,
    };
    let outcome = run_pipeline_file(manifest, out, &cfg, &adapters, resume, root.as_deref())
        .map_err(CliError::runtime("curate"))?;
    let mut by_split: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rejected = 0usize;
    for rec in &outcome.records {
        match rec.split {
            Some(Split::Pretrain) => *by_split.entry("pretrain").or_default() += 1,
            Some(Split::Finetune) => *by_split.entry("finetune").or_default() += 1,
            Some(Split::BenchCandidate) => *by_split.entry("bench_candidate").or_default() += 1,
            Some(Split::Bench) => *by_split.entry("bench").or_default() += 1,
            None => rejected += 1,
        }
    }
    println!(
        "curated {} records ({} rejected, {} quarantined rows)",
        outcome.records.len(),
        rejected,
        outcome.quarantined.len()
    );
    for (name, count) in by_split {
        println!("  {name}: {count}");
    }
    Ok(())
}

#[derive(Deserialize)]
struct PairRow {
    pred: String,
    #[serde(rename = "ref")]
    reference: String,
    #[serde(default)]
    video: Option<String>,
}

fn cmd_train(
    manifest: &Path,
    config: &Option<PathBuf>,
    out_dir: &Path,
    split: Option<&str>,
    steps_override: Option<usize>,
    root: Option<PathBuf>,
) -> CliResult<()> {
    require_file(manifest, "manifest")?;
    let mut cfg = load_run_config(config)?;
    if let Some(steps) = steps_override {
        cfg.training.total_steps = steps;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }

    let mut manifests = vec![manifest.to_path_buf()];
    if let Some(extra) = &cfg.training.extra_manifest {
        manifests.push(resolve(root.as_deref(), extra));
    }
    let mut pairs = Vec::new();
    for path in &manifests {
        require_file(path, "manifest")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let (records, _) = filmscore::curation::parse_manifest(&text);
        for rec in records {
            if let Some(want) = split {
                let have = match rec.split {
                    Some(Split::Pretrain) => "pretrain",
                    Some(Split::Finetune) => "finetune",
                    Some(Split::BenchCandidate) => "bench_candidate",
                    Some(Split::Bench) => "bench",
                    None => "",
                };
                if have != want {
                    continue;
                }
            }
            let (Some(video), Some(audio)) = (rec.video.clone(), rec.audio.clone()) else {
                continue;
            };
            let vpath = resolve(root.as_deref(), &video);
            let apath = resolve(root.as_deref(), &audio);
            let clip = sample_frames(&vpath, cfg.frontend.fps, TRAIN_CLIP_CAP_S)
                .map_err(CliError::runtime("train:load-video"))?;
            let wave = read_wav(&apath).map_err(CliError::runtime("train:load-audio"))?;
            pairs.push((clip, wave));
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Usage("no trainable pairs in manifest".into()));
    }

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime("train".into(), e.into()))?;
    let codec = cfg.build_codec().map_err(CliError::runtime("train"))?;
    let channels = pairs[0].0.channels();
    let encoder = cfg.build_encoder(channels);
    let fusion = filmscore::fusion::FusionParams::init(cfg.fusion_config(), cfg.seed)
        .map_err(CliError::runtime("train"))?;
    let decoder =
        filmscore::decoder::DecoderParams::init(cfg.decoder_config(), cfg.seed.wrapping_add(1))
            .map_err(CliError::runtime("train"))?;
    let mut trainer = Trainer::new(fusion, decoder, cfg.pattern(), cfg.train_config())
        .map_err(CliError::runtime("train"))?;

    let frontend = FrontendConfig {
        fps: cfg.frontend.fps,
        n_long_cap: cfg.frontend.n_long_cap,
        segment_s: cfg.frontend.segment_s,
    };
    let log_path = out_dir.join("train_log.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let total = cfg.training.total_steps;
    for step in 0..total {
        let selected: Vec<_> = (0..cfg.training.batch_size)
            .map(|_| {
                let i = rng.random_range(0..pairs.len());
                (pairs[i].0.clone(), pairs[i].1.clone())
            })
            .collect();
        let batch: Batch = build_batch(&selected, &codec, encoder.as_ref(), &frontend, &mut rng)
            .map_err(CliError::runtime("train:batch"))?;
        let stats = trainer
            .train_step(&batch)
            .map_err(CliError::runtime("train:step"))?;
        append_log(&log_path, step, stats.loss, stats.lr)
            .map_err(CliError::runtime("train:log"))?;
        if step % 50 == 0 || step + 1 == total {
            println!("step {step}: loss {:.4} lr {:.2e}", stats.loss, stats.lr);
        }
    }

    let ck_path = out_dir.join("model.fsar");
    save_checkpoint(&ck_path, &trainer.fusion, &trainer.decoder, Some(&trainer.ema))
        .map_err(CliError::runtime("train:checkpoint"))?;
    std::fs::write(out_dir.join("run_config.toml"), cfg.to_toml())
        .map_err(|e| CliError::Runtime("train".into(), e.into()))?;
    println!("checkpoint written to {}", ck_path.display());
    Ok(())
}

fn resolve(root: Option<&Path>, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    match root {
        Some(root) if !p.is_absolute() => root.join(p),
        _ => p.to_path_buf(),
    }
}

fn cmd_generate(
    video: &Path,
    checkpoint: &Path,
    out: &Path,
    config: &Option<PathBuf>,
    seed_override: Option<u64>,
) -> CliResult<()> {
    require_file(video, "video")?;
    require_file(checkpoint, "checkpoint")?;
    let mut cfg = load_run_config(config)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let (fusion, decoder) = load_checkpoint(checkpoint, cfg.fusion_config(), cfg.decoder_config())
        .map_err(CliError::runtime("generate:checkpoint"))?;
    let codec = cfg.build_codec().map_err(CliError::runtime("generate"))?;

    let clip = sample_frames(video, cfg.frontend.fps, f64::INFINITY)
        .map_err(CliError::runtime("generate:video"))?;
    let encoder = cfg.build_encoder(clip.channels());
    let features = encode_frames(&clip, encoder.as_ref())
        .map_err(CliError::runtime("generate:frontend"))?;
    let schedule = plan_windows(clip.duration_s, cfg.inference.window_s, cfg.inference.overlap_s)
        .map_err(CliError::runtime("generate:plan"))?;
    let opts = GenerateOptions {
        top_k: cfg.sampling.top_k,
        temperature: cfg.sampling.temperature,
        seed: cfg.seed,
        n_long_cap: cfg.frontend.n_long_cap,
    };
    let (tokens, wave) = generate_long(
        &features,
        cfg.frontend.fps,
        &fusion,
        &decoder,
        cfg.pattern(),
        &codec,
        &schedule,
        &opts,
    )
    .map_err(CliError::runtime("generate:decode"))?;

    write_wav(out, &wave).map_err(CliError::runtime("generate:wav"))?;
    std::fs::write(out.with_extension("fstm"), tokens.to_bytes(cfg.pattern()))
        .map_err(|e| CliError::Runtime("generate".into(), e.into()))?;
    let sidecar = serde_json::json!({
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "video": video.display().to_string(),
        "duration_s": clip.duration_s,
        "token_steps": tokens.steps(),
        "sample_rate": wave.sample_rate,
        "windows": schedule.windows,
        "resolved_config": cfg.to_toml(),
    });
    std::fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| CliError::Runtime("generate".into(), e.into()))?;
    println!(
        "wrote {} ({:.1} s, {} windows)",
        out.display(),
        wave.duration_s(),
        schedule.windows.len()
    );
    Ok(())
}

fn wav_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "directory not found: {}",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .collect();
    files.sort();
    Ok(files)
}

struct EvalStack {
    fad: HashProjectionEmbedder,
    fd: HashProjectionEmbedder,
    manifold: HashProjectionEmbedder,
    tagger: HashProjectionClassifier,
    av: HashProjectionAv,
}

impl EvalStack {
    fn new() -> Self {
        EvalStack {
            fad: HashProjectionEmbedder::new(16, FAD_EMBED_SEED),
            fd: HashProjectionEmbedder::new(32, FD_EMBED_SEED),
            manifold: HashProjectionEmbedder::new(24, MANIFOLD_EMBED_SEED),
            tagger: HashProjectionClassifier::new(16, TAGGER_SEED),
            av: HashProjectionAv::new(8, AV_EMBED_SEED),
        }
    }
}

fn embed_dir(files: &[PathBuf], embedder: &HashProjectionEmbedder) -> Result<Array2<f64>, Error> {
    let mut rows = Vec::with_capacity(files.len());
    for f in files {
        let wave = read_wav(f)?;
        rows.push(embedder.embed(&wave)?);
    }
    let d = embedder.dim();
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

fn cmd_evaluate(
    reference: &Path,
    preds: &[String],
    pairs: Option<&Path>,
    out: &Path,
    knn: usize,
) -> CliResult<()> {
    if preds.is_empty() {
        return Err(CliError::Usage(
            "at least one --pred NAME=DIR required".into(),
        ));
    }
    let ref_files = wav_files(reference)?;
    if ref_files.is_empty() {
        return Err(CliError::Usage(format!(
            "no .wav files in reference dir {}",
            reference.display()
        )));
    }
    let pair_rows: Vec<PairRow> = match pairs {
        Some(p) => {
            require_file(p, "pairs file")?;
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("pairs file: {e}")))?
        }
        None => Vec::new(),
    };

    let stack = EvalStack::new();
    let ref_fad = embed_dir(&ref_files, &stack.fad).map_err(CliError::runtime("evaluate"))?;
    let ref_fd = embed_dir(&ref_files, &stack.fd).map_err(CliError::runtime("evaluate"))?;
    let ref_manifold =
        embed_dir(&ref_files, &stack.manifold).map_err(CliError::runtime("evaluate"))?;
    let ref_by_name: BTreeMap<String, usize> = ref_files
        .iter()
        .enumerate()
        .map(|(i, p)| (file_name(p), i))
        .collect();

    let mut rows = Vec::new();
    for spec in preds {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--pred must be NAME=DIR, got '{spec}'")))?;
        let pred_files = wav_files(Path::new(dir))?;
        let row = evaluate_method(
            name,
            &pred_files,
            &ref_files,
            &ref_by_name,
            (&ref_fad, &ref_fd, &ref_manifold),
            &pair_rows,
            &stack,
            knn,
        )
        .map_err(CliError::runtime("evaluate"))?;
        rows.push(row);
    }

    let report = MetricReport {
        rows,
        average_rank: None,
    }
    .with_average_rank();

    std::fs::write(out.with_extension("csv"), report.to_csv())
        .map_err(|e| CliError::Runtime("evaluate".into(), e.into()))?;
    std::fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| CliError::Runtime("evaluate".into(), e.into()))?;
    write_rank_table(&report, &out.with_extension("ranks.csv"))
        .map_err(|e| CliError::Runtime("evaluate".into(), e))?;
    println!("{}", report.to_csv().trim_end());
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().unwrap_or_default().to_string_lossy().to_string()
}

#[allow(clippy::too_many_arguments)]
fn evaluate_method(
    name: &str,
    pred_files: &[PathBuf],
    ref_files: &[PathBuf],
    ref_by_name: &BTreeMap<String, usize>,
    ref_embeds: (&Array2<f64>, &Array2<f64>, &Array2<f64>),
    pair_rows: &[PairRow],
    stack: &EvalStack,
    knn: usize,
) -> Result<MethodMetrics, Error> {
    let (ref_fad, ref_fd, ref_manifold) = ref_embeds;
    // Resolve pairs: explicit rows first, filename match otherwise.
    let explicit: BTreeMap<&str, &PairRow> =
        pair_rows.iter().map(|r| (r.pred.as_str(), r)).collect();
    let mut paired: Vec<(usize, usize, Option<String>)> = Vec::new();
    let mut unpaired = Vec::new();
    for (i, pf) in pred_files.iter().enumerate() {
        let pname = file_name(pf);
        let (ref_name, video) = match explicit.get(pname.as_str()) {
            Some(row) => (row.reference.clone(), row.video.clone()),
            None => (pname.clone(), None),
        };
        match ref_by_name.get(&ref_name) {
            Some(&ri) => paired.push((i, ri, video)),
            None => unpaired.push(pname),
        }
    }

    let pred_fad = embed_dir(pred_files, &stack.fad)?;
    let pred_fd = embed_dir(pred_files, &stack.fd)?;
    let pred_manifold = embed_dir(pred_files, &stack.manifold)?;

    let gen_fad = EmbeddingSet::new(pred_fad, SourceTag::Generated)?;
    let ref_fad_set = EmbeddingSet::new(ref_fad.clone(), SourceTag::Reference)?;
    let fad = frechet(&gen_fad, &ref_fad_set).ok();
    let gen_fd = EmbeddingSet::new(pred_fd, SourceTag::Generated)?;
    let ref_fd_set = EmbeddingSet::new(ref_fd.clone(), SourceTag::Reference)?;
    let fd = frechet(&gen_fd, &ref_fd_set).ok();
    let gen_m = EmbeddingSet::new(pred_manifold, SourceTag::Generated)?;
    let ref_m = EmbeddingSet::new(ref_manifold.clone(), SourceTag::Reference)?;
    let (density, coverage) = match density_coverage(&gen_m, &ref_m, knn) {
        Ok((d, c)) => (Some(d), Some(c)),
        Err(_) => (None, None),
    };

    // Paired KL over tagger predictions.
    let kl = if paired.is_empty() {
        None
    } else {
        let mut gen_rows = Vec::new();
        let mut ref_rows = Vec::new();
        for (pi, ri, _) in &paired {
            gen_rows.push(stack.tagger.predict(&read_wav(&pred_files[*pi])?)?);
            ref_rows.push(stack.tagger.predict(&read_wav(&ref_files[*ri])?)?);
        }
        let c = stack.tagger.n_classes();
        let gen = PredictionSet::new(Array2::from_shape_fn((gen_rows.len(), c), |(i, j)| {
            gen_rows[i][j]
        }))?;
        let reference = PredictionSet::new(Array2::from_shape_fn(
            (ref_rows.len(), c),
            |(i, j)| ref_rows[i][j],
        ))?;
        prediction_kl(&gen, &reference).ok()
    };

    // Alignment over pairs that carry a video path.
    let with_video: Vec<&(usize, usize, Option<String>)> =
        paired.iter().filter(|(_, _, v)| v.is_some()).collect();
    let alignment = if with_video.is_empty() {
        None
    } else {
        let mut audio_rows = Vec::new();
        let mut video_rows = Vec::new();
        for (pi, _, video) in &with_video {
            let wave: Waveform = read_wav(&pred_files[*pi])?;
            audio_rows.push(stack.av.embed_audio(&wave)?);
            let clip = sample_frames(Path::new(video.as_ref().unwrap()), 2.0, 481.0)?;
            video_rows.push(stack.av.embed_video(&clip)?);
        }
        let d = stack.av.dim();
        let audio = Array2::from_shape_fn((audio_rows.len(), d), |(i, j)| audio_rows[i][j]);
        let video = Array2::from_shape_fn((video_rows.len(), d), |(i, j)| video_rows[i][j]);
        alignment_score(&audio, &video).ok()
    };

    Ok(MethodMetrics {
        method: name.to_string(),
        kl,
        fd,
        fad,
        density,
        coverage,
        alignment,
        unpaired,
    })
}

fn write_rank_table(report: &MetricReport, path: &Path) -> Result<(), Error> {
    if report.rows.len() < 2 {
        std::fs::write(path, "method\n")?;
        return Ok(());
    }
    // Rank only over columns present for every method.
    let metric_of = |row: &MethodMetrics, idx: usize| -> Option<f64> {
        [row.kl, row.fd, row.fad, row.density, row.coverage, row.alignment][idx]
    };
    let mut cols = Vec::new();
    let mut dirs = Vec::new();
    for (idx, (name, dir)) in METRIC_COLUMNS.iter().enumerate() {
        if report.rows.iter().all(|r| metric_of(r, idx).is_some()) {
            cols.push((idx, *name));
            dirs.push(*dir);
        }
    }
    let table = Array2::from_shape_fn((report.rows.len(), cols.len()), |(r, c)| {
        metric_of(&report.rows[r], cols[c].0).unwrap()
    });
    let ranks = metric_ranks(&table, &dirs)?;
    let mut text = String::from("method");
    for (_, name) in &cols {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (r, row) in report.rows.iter().enumerate() {
        text.push_str(&row.method);
        for c in 0..cols.len() {
            text.push_str(&format!(",{:.1}", ranks[[r, c]]));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
