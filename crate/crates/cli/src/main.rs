use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use echolocate::actuate::PadEventLog;
use echolocate::bss::{
    assign_sources, fast_ica, nmf_separate, pca_whiten, write_sources, IcaOptions, Retain,
};
use echolocate::classify::{centroid_train, default_features, Classifier};
use echolocate::denoise::benchmark_denoisers;
use echolocate::localize::{estimate_tdoa, localize, LocalizeOptions, MicArrayGeometry};
use echolocate::pipeline::{
    emit_commands, load_classifier, loudest_channel, resolve_seed, ClassifierChoice, Pipeline,
    PipelineConfig,
};
use echolocate::scene::{render_scene, write_scene, SceneSpec};
use echolocate::signal::{read_wav, write_wav, AudioBuffer, FrameParams, WavEncoding};

#[derive(Parser)]
#[command(name = "echolocate", version, about = "Sound localisation and haptic cueing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a multi-channel WAV.
    Process {
        #[arg(long)]
        input: PathBuf,
        /// Array geometry (TOML); overrides the config.
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Pipeline config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report destination; overrides the config. Printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write pad commands as JSON lines.
        #[arg(long)]
        commands: Option<PathBuf>,
        /// Process blocks one after another on a single thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Compare every denoiser's PSNR against a clean reference.
    BenchDenoise {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        /// Noise-only recording for the profile-based baselines.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a scene file to a WAV plus a ground-truth sidecar.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate delays, direction and distance for a whole recording.
    Localize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        geometry: Option<PathBuf>,
    },
    /// Classify a recording (loudest channel).
    Classify {
        #[arg(long)]
        input: PathBuf,
        /// Centroid model (JSON).
        #[arg(long, conflicts_with = "weights")]
        centroid: Option<PathBuf>,
        /// Transformer weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Label list for the transformer, one per line.
        #[arg(long, requires = "weights")]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        heads: usize,
    },
    /// Separate a recording into sources.
    Separate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = SeparationMethod::Ica)]
        method: SeparationMethod,
        /// Number of sources; defaults to the channel count (ICA) or 2 (NMF).
        #[arg(long)]
        sources: Option<usize>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Directory for source_<k>.wav files.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a centroid classifier from labelled clips.
    TrainCentroid {
        /// `label=path.wav`, repeatable.
        #[arg(long = "example", required = true)]
        examples: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SeparationMethod {
    Ica,
    Nmf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out).expect("serialisable output");
            // A closed pipe (e.g. `| head`) is not a failure of the command.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let record = json!({ "error": { "message": e.to_string(), "causes": chain } });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn read_input(path: &Path) -> Result<AudioBuffer> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn geometry(path: Option<&Path>) -> Result<MicArrayGeometry> {
    match path {
        Some(p) => MicArrayGeometry::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(MicArrayGeometry::default_square()),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::Process {
            input,
            geometry: geometry_path,
            config,
            report,
            commands,
            sequential,
        } => {
            let mut cfg = match &config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            if geometry_path.is_some() {
                cfg.geometry = geometry_path;
            }
            if report.is_some() {
                cfg.report = report;
            }
            cfg.ica.seed = resolve_seed(cfg.ica.seed);
            let pipeline = Pipeline::from_config(cfg)?;
            let buf = read_input(&input)?;
            let out = if sequential {
                pipeline.run_sequential(&buf)?
            } else {
                pipeline.run(&buf)?
            };
            let emitted = match &commands {
                Some(p) => {
                    let file = std::fs::File::create(p)
                        .with_context(|| format!("creating {}", p.display()))?;
                    let mut log = PadEventLog::new(std::io::BufWriter::new(file));
                    emit_commands(&out, &mut log)?
                }
                None => out.commands().count(),
            };
            match &pipeline.config().report {
                Some(p) => {
                    write_json(p, &serde_json::to_value(&out)?)?;
                    Ok(json!({
                        "report": p,
                        "blocks": out.blocks.len(),
                        "commands": emitted,
                        "block_errors": out.blocks.iter().map(|b| b.errors.len()).sum::<usize>(),
                        "mean_block_ms": out.mean_block_ms(),
                    }))
                }
                None => Ok(serde_json::to_value(&out)?),
            }
        }
        Command::BenchDenoise {
            clean,
            noisy,
            noise,
            out,
        } => {
            let clean = read_input(&clean)?;
            let noisy = read_input(&noisy)?;
            let noise = noise.as_deref().map(read_input).transpose()?;
            let report = benchmark_denoisers(&clean, &noisy, noise.as_ref())?;
            let value = serde_json::to_value(&report)?;
            if let Some(p) = &out {
                write_json(p, &value)?;
            }
            Ok(value)
        }
        Command::Simulate { scene, out } => {
            let mut spec = SceneSpec::load(&scene)?;
            spec.seed = resolve_seed(spec.seed);
            let (buf, truth) = render_scene(&spec)?;
            let sidecar = write_scene(&out, &buf, &truth)?;
            Ok(json!({
                "wav": out,
                "truth": sidecar,
                "channels": buf.num_channels(),
                "frames": buf.num_frames(),
                "seed": spec.seed,
            }))
        }
        Command::Localize { input, geometry: g } => {
            let geom = geometry(g.as_deref())?;
            let buf = read_input(&input)?;
            let est = localize(&buf, &geom, &LocalizeOptions::default())?;
            Ok(serde_json::to_value(&est)?)
        }
        Command::Classify {
            input,
            centroid,
            weights,
            labels,
            heads,
        } => {
            let choice = match (centroid, weights) {
                (Some(model), None) => ClassifierChoice::Centroid { model },
                (None, Some(weights)) => ClassifierChoice::Transformer {
                    weights,
                    labels,
                    heads,
                },
                _ => bail!("pass either --centroid or --weights"),
            };
            let classifier: Classifier =
                load_classifier(&choice)?.context("no classifier configured")?;
            let buf = read_input(&input)?;
            let scores = classifier.classify(&loudest_channel(&buf)?)?;
            Ok(serde_json::to_value(&scores)?)
        }
        Command::Separate {
            input,
            method,
            sources,
            geometry: g,
            out_dir,
            seed,
        } => {
            let buf = read_input(&input)?;
            let seed = resolve_seed(seed);
            match method {
                SeparationMethod::Ica => {
                    let n = sources.unwrap_or(buf.num_channels());
                    let white = pca_whiten(&buf, Retain::Count(n))?;
                    let mut sep = fast_ica(
                        &white,
                        IcaOptions {
                            seed,
                            ..IcaOptions::default()
                        },
                    )?;
                    let geom = geometry(g.as_deref())?;
                    if geom.num_mics() == buf.num_channels() {
                        let tdoa = estimate_tdoa(&buf, &geom, Default::default())?;
                        sep = assign_sources(sep, &buf, &tdoa)?;
                    }
                    let files = match &out_dir {
                        Some(d) => write_sources(d, &sep, buf.sample_rate())?,
                        None => Vec::new(),
                    };
                    Ok(json!({
                        "method": "ica",
                        "sources": sep.num_sources(),
                        "converged": sep.converged,
                        "iterations": sep.iterations,
                        "low_confidence": sep.low_confidence,
                        "non_gaussianity": sep.non_gaussianity,
                        "assignment": sep.assignment,
                        "scores": sep.scores,
                        "files": files,
                        "warnings": white.warnings,
                    }))
                }
                SeparationMethod::Nmf => {
                    let mono = loudest_channel(&buf)?;
                    let params = FrameParams::speech_default(mono.sample_rate());
                    let rank = sources.unwrap_or(2);
                    let (parts, factors) = nmf_separate(&mono, &params, rank, 200, seed)?;
                    let mut files = Vec::new();
                    if let Some(d) = &out_dir {
                        std::fs::create_dir_all(d)?;
                        for (k, part) in parts.iter().enumerate() {
                            let path = d.join(format!("source_{k}.wav"));
                            write_wav(&path, part, WavEncoding::Float32)?;
                            files.push(path);
                        }
                    }
                    Ok(json!({
                        "method": "nmf",
                        "sources": parts.len(),
                        "objective": factors.objective,
                        "files": files,
                    }))
                }
            }
        }
        Command::TrainCentroid { examples, out } => {
            let mut data = Vec::new();
            for ex in &examples {
                let (label, path) = ex
                    .split_once('=')
                    .with_context(|| format!("expected label=path, got {ex:?}"))?;
                let buf = read_input(Path::new(path))?;
                data.push((default_features(&loudest_channel(&buf)?)?, label.to_string()));
            }
            let model = centroid_train(&data)?;
            model.save(&out)?;
            Ok(json!({ "model": out, "labels": model.labels, "examples": data.len() }))
        }
    }
}
