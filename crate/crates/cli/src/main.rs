use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use spatial_diar::alignment::{align, AlignMethod};
use spatial_diar::diarization::{diarization_from_rttm, write_posterior_csv, write_rttm};
use spatial_diar::directional::{write_feature_csv, DirectionalStatistic};
use spatial_diar::dmm::{InitStrategy, ModelFile};
use spatial_diar::pipeline::{diarize_features, extract_features, AlignKind, PipelineConfig};
use spatial_diar::scoring::{score_der, DerResult, ReferenceAnnotation};
use spatial_diar::signal_io::{load_wav, resample, write_wav};
use spatial_diar::simulator::{render, SceneSpec};
use spatial_diar::Recording;

const EXIT_INPUT: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "spatial-diar", version, about = "Speaker diarization from spatial cues of ad-hoc microphone devices")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diarize a set of device recordings.
    Diarize(DiarizeArgs),
    /// Render a synthetic scene to WAV files and a reference RTTM.
    Simulate(SimulateArgs),
    /// Score a hypothesis RTTM against a reference.
    Score(ScoreArgs),
    /// Dump per-device directional statistics (and posteriors when --sources is given).
    PlotFeatures(PlotArgs),
    /// Report the alignment offsets that would be applied.
    AlignCheck(AlignCheckArgs),
}

#[derive(Copy, Clone, ValueEnum)]
enum AlignArg {
    Event,
    Fixed,
    None,
}

#[derive(Copy, Clone, ValueEnum)]
enum InitArg {
    PeakKmeans,
    Random,
}

#[derive(Args)]
struct CommonArgs {
    /// One multichannel WAV per device; the first defines the output timeline.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// TOML file overriding pipeline defaults; flags override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    align: Option<AlignArg>,
    /// Event search window START,END in seconds.
    #[arg(long, value_parser = parse_pair)]
    align_window: Option<(f64, f64)>,
    /// Per-device clock origins o1,o2,... in seconds (fixed mode).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offsets: Option<Vec<f64>>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
}

#[derive(Args)]
struct DiarizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Number of sources.
    #[arg(long, required = true)]
    sources: usize,
    /// Reference annotation (RTTM or start,end,speaker CSV).
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    collar: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Recording id written in the RTTM.
    #[arg(long, default_value = "rec")]
    rec_id: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
    /// Scoring region START,END in seconds (default: reference extent).
    #[arg(long, value_parser = parse_pair)]
    uem: Option<(f64, f64)>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    sources: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AlignCheckArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected START,END")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a >= b {
        return Err("START must be below END".into());
    }
    Ok((a, b))
}

/// Defaults, then the config file, then command-line flags.
fn build_config(common: &CommonArgs, fit: Option<&FitArgs>) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::from_toml(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(a) = common.align {
        cfg.align.mode = match a {
            AlignArg::Event => AlignKind::Event,
            AlignArg::Fixed => AlignKind::Fixed,
            AlignArg::None => AlignKind::None,
        };
    }
    if let Some(w) = common.align_window {
        cfg.align.window_s = w;
    }
    if let Some(o) = &common.offsets {
        cfg.align.offsets_s = o.clone();
    }
    if cfg.align.mode == AlignKind::Fixed && cfg.align.offsets_s.len() != common.inputs.len() {
        return Err(spatial_diar::Error::InvalidParameter(format!(
            "fixed alignment needs one offset per input ({} given, {} inputs)",
            cfg.align.offsets_s.len(),
            common.inputs.len()
        ))
        .into());
    }
    if let Some(f) = fit {
        if let Some(v) = f.max_iters {
            cfg.dmm.max_iters = v;
        }
        if let Some(v) = f.tol {
            cfg.dmm.tol = v;
        }
        if let Some(v) = f.seed {
            cfg.dmm.seed = v;
        }
        if let Some(v) = f.init {
            cfg.dmm.init = match v {
                InitArg::PeakKmeans => InitStrategy::PeakKmeans,
                InitArg::Random => InitStrategy::Random,
            };
        }
    }
    Ok(cfg)
}

fn load_inputs(paths: &[PathBuf]) -> Result<Vec<Recording>> {
    paths
        .iter()
        .enumerate()
        .map(|(p, path)| {
            let mut rec: Recording = load_wav(path)?;
            rec.device_id = p;
            Ok(rec)
        })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: Vec<String>,
    inputs: Vec<InputEntry>,
    config_sha256: String,
    config: serde_json::Value,
    threads: usize,
    outputs: Vec<String>,
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    inputs: &[PathBuf],
    config: serde_json::Value,
    outputs: &[PathBuf],
) -> Result<()> {
    let config_text = serde_json::to_string(&config)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        args: std::env::args().skip(1).collect(),
        inputs: inputs
            .iter()
            .map(|p| {
                Ok(InputEntry {
                    path: p.display().to_string(),
                    sha256: sha256_hex(&fs::read(p)?),
                })
            })
            .collect::<Result<_>>()?,
        config_sha256: sha256_hex(config_text.as_bytes()),
        config,
        threads: rayon::current_num_threads(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct FitReportJson {
    sources: usize,
    frames: usize,
    iterations_run: usize,
    converged: bool,
    log_likelihood_trace: Vec<f64>,
    reinitialized: Vec<(usize, usize)>,
    pi: Vec<f64>,
    alignment_method: AlignMethod,
    alignment_offset_samples: Vec<i64>,
}

#[derive(Serialize)]
struct DerReportJson<'a> {
    collar_s: f64,
    der: f64,
    miss: f64,
    false_alarm: f64,
    speaker_error: f64,
    scored_time_s: f64,
    mapping: &'a std::collections::BTreeMap<usize, String>,
}

fn der_report(r: &DerResult, collar_s: f64) -> DerReportJson<'_> {
    DerReportJson {
        collar_s,
        der: r.der,
        miss: r.miss,
        false_alarm: r.false_alarm,
        speaker_error: r.speaker_error,
        scored_time_s: r.scored_time_s,
        mapping: &r.mapping,
    }
}

fn print_der(r: &DerResult, collar_s: f64) {
    println!(
        "DER {:.2}% (miss {:.2}%, false alarm {:.2}%, confusion {:.2}%) collar {collar_s} s, scored {:.2} s",
        100.0 * r.der,
        100.0 * r.miss,
        100.0 * r.false_alarm,
        100.0 * r.speaker_error,
        r.scored_time_s
    );
}

fn diarize(args: &DiarizeArgs) -> Result<()> {
    if args.sources == 0 {
        bail!(spatial_diar::Error::InvalidParameter("--sources must be at least 1".into()));
    }
    let mut cfg = build_config(&args.common, Some(&args.fit))?;
    if let Some(c) = args.collar {
        cfg.collar_s = c;
    }
    let reference = args.reference.as_deref().map(ReferenceAnnotation::load).transpose()?;
    let recs = load_inputs(&args.common.inputs)?;
    let stage = extract_features(&recs, &cfg)?;
    let out = diarize_features(stage, args.sources, &cfg)?;

    fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    let mut outputs = Vec::new();

    let rttm = write_rttm(&out.diarization, &args.rec_id);
    let rttm_path = dir.join("hyp.rttm");
    fs::write(&rttm_path, &rttm)?;
    outputs.push(rttm_path);

    let post_path = dir.join("posteriors.csv");
    write_posterior_csv(BufWriter::new(File::create(&post_path)?), &out.diarization, &out.report.responsibilities)?;
    outputs.push(post_path);

    let report = FitReportJson {
        sources: args.sources,
        frames: out.stage.features.num_frames(),
        iterations_run: out.report.iterations_run,
        converged: out.report.converged,
        log_likelihood_trace: out.report.log_likelihood_trace.clone(),
        reinitialized: out.report.reinitialized.clone(),
        pi: out.report.params.pi().to_vec(),
        alignment_method: out.stage.alignment.method,
        alignment_offset_samples: out.stage.alignment.offset_samples.clone(),
    };
    let report_path = dir.join("fit_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    outputs.push(report_path);

    let config_json = serde_json::to_value(&cfg)?;
    let model_path = dir.join("model.json");
    ModelFile::from_params(&out.report.params, config_json.clone()).save(&model_path)?;
    outputs.push(model_path);

    print!("{rttm}");
    if let Some(reference) = &reference {
        let der = score_der(reference, &out.diarization, cfg.collar_s, None)?;
        let der_path = dir.join("der.json");
        fs::write(&der_path, serde_json::to_string_pretty(&der_report(&der, cfg.collar_s))? + "\n")?;
        outputs.push(der_path);
        print_der(&der, cfg.collar_s);
    }

    let mut inputs = args.common.inputs.clone();
    inputs.extend(args.reference.iter().cloned());
    inputs.extend(args.common.config.iter().cloned());
    write_manifest(dir, "diarize", &inputs, config_json, &outputs)
}

fn reference_rttm(reference: &ReferenceAnnotation, rec_id: &str) -> String {
    let mut out = String::new();
    for s in &reference.segments {
        let _ = writeln!(
            out,
            "SPEAKER {rec_id} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            s.start_s,
            s.end_s - s.start_s,
            s.speaker
        );
    }
    out
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = SceneSpec::load(&args.spec)?;
    let (recs, reference) = render(&spec, args.seed)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    for (p, rec) in recs.iter().enumerate() {
        let path = args.out_dir.join(format!("device_{}.wav", p + 1));
        write_wav(rec, &path)?;
        outputs.push(path);
    }
    let ref_path = args.out_dir.join("ref.rttm");
    fs::write(&ref_path, reference_rttm(&reference, "sim"))?;
    outputs.push(ref_path);
    for p in &outputs {
        println!("{}", p.display());
    }
    let config = serde_json::json!({ "scene": spec, "seed": args.seed });
    write_manifest(&args.out_dir, "simulate", std::slice::from_ref(&args.spec), config, &outputs)
}

fn score(args: &ScoreArgs) -> Result<()> {
    let reference = ReferenceAnnotation::load(&args.reference)?;
    let text = fs::read_to_string(&args.hyp).with_context(|| format!("reading {}", args.hyp.display()))?;
    let hyp = diarization_from_rttm(&text)?;
    let der = score_der(&reference, &hyp, args.collar, args.uem)?;
    print_der(&der, args.collar);
    for (h, r) in &der.mapping {
        println!("spk{h} -> {r}");
    }
    Ok(())
}

fn plot_features(args: &PlotArgs) -> Result<()> {
    let cfg = build_config(&args.common, Some(&args.fit))?;
    let recs = load_inputs(&args.common.inputs)?;
    let stage = extract_features(&recs, &cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    let grid = cfg.directional.grid::<f64>()?;
    let mut outputs = Vec::new();
    for p in 0..stage.features.num_devices() {
        let stats: Vec<DirectionalStatistic<f64>> = (0..stage.features.num_frames())
            .map(|n| DirectionalStatistic {
                values: stage.features.values(p, n).to_vec(),
                frame_index: n,
                device_id: p,
            })
            .collect();
        let path = args.out_dir.join(format!("features_device_{}.csv", p + 1));
        write_feature_csv(BufWriter::new(File::create(&path)?), &stats, &grid, &stage.frame_times_s)?;
        outputs.push(path);
    }
    if let Some(s) = args.sources {
        let out = diarize_features(stage, s, &cfg)?;
        let path = args.out_dir.join("posteriors.csv");
        write_posterior_csv(BufWriter::new(File::create(&path)?), &out.diarization, &out.report.responsibilities)?;
        outputs.push(path);
    }
    for p in &outputs {
        println!("{}", p.display());
    }
    write_manifest(&args.out_dir, "plot-features", &args.common.inputs, serde_json::to_value(&cfg)?, &outputs)
}

fn align_check(args: &AlignCheckArgs) -> Result<()> {
    let cfg = build_config(&args.common, None)?;
    let recs = load_inputs(&args.common.inputs)?
        .iter()
        .map(|r| resample(r, cfg.sample_rate_hz))
        .collect::<spatial_diar::Result<Vec<_>>>()?;
    let result = align(&recs, &cfg.align.mode(), &cfg.align.detector)?;
    let rate = cfg.sample_rate_hz as f64;
    println!("method: {:?}", result.method);
    println!("device,offset_samples,offset_s,event_s");
    for (p, off) in result.offset_samples.iter().enumerate() {
        let event = result
            .event_samples
            .as_ref()
            .map_or("".to_string(), |e| format!("{:.4}", e[p] as f64 / rate));
        println!("{},{off},{:.4},{event}", p + 1, *off as f64 / rate);
    }
    println!("overlap_s: {:.3}", result.overlap_samples as f64 / rate);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<spatial_diar::Error>() {
            return if e.is_input_error() { EXIT_INPUT } else { EXIT_RUNTIME };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_INPUT;
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let result = match &cli.command {
        Command::Diarize(a) => diarize(a),
        Command::Simulate(a) => simulate(a),
        Command::Score(a) => score(a),
        Command::PlotFeatures(a) => plot_features(a),
        Command::AlignCheck(a) => align_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

