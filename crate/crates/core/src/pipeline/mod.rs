//! Block-by-block processing of a multi-channel capture: localise on raw
//! channels, denoise, optionally separate, classify and emit pad commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuate::{command_for, PadCommand, PadEventLog, PadLayout};
use crate::bss::{assign_sources, BssError, fast_ica, pca_whiten, IcaOptions, Retain, SeparatedSources};
use crate::classify::{
    load_labels, esc50_labels, AstConfig, AstModel, AstWeights, CentroidModel, ClassScores,
    Classifier, ClassifyError,
};
use crate::denoise::{denoise_buffer, DenoiseMethod};
use crate::localize::{localize, LocalizeError, LocalizeOptions, MicArrayGeometry, SourceEstimate};
use crate::signal::{AudioBuffer, FrameParams, SignalError, AST_MEL_BANDS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Capture length per processed block, seconds.
pub const DEFAULT_BLOCK_S: f64 = 0.205;

/// Environment variable that overrides every fixture and algorithm seed.
pub const SEED_ENV: &str = "ECHOLOCATE_SEED";

/// The seed from [`SEED_ENV`] when set and parseable, else `default`.
pub fn resolve_seed(default: u64) -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(default)
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input has {channels} channels, geometry has {mics} microphones")]
    ChannelMismatch { channels: usize, mics: usize },
    #[error("input of {frames} frames is shorter than one {block_frames}-frame block")]
    TooShort { frames: usize, block_frames: usize },
    #[error("{path}: {source}")]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Bss(#[from] BssError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierChoice {
    Transformer {
        weights: PathBuf,
        /// One label per line; the ESC-50 list when absent.
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default = "default_heads")]
        heads: usize,
    },
    Centroid {
        model: PathBuf,
    },
    #[default]
    None,
}

fn default_heads() -> usize {
    AstConfig::default().heads
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub block_s: f64,
    /// Array description; the default square array when absent.
    pub geometry: Option<PathBuf>,
    pub pads: PadLayout,
    pub denoise: DenoiseMethod,
    pub classifier: ClassifierChoice,
    pub report: Option<PathBuf>,
    /// Separation runs when two or more sources are expected.
    pub expected_sources: usize,
    pub localize: LocalizeOptions,
    pub ica: IcaOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            block_s: DEFAULT_BLOCK_S,
            geometry: None,
            pads: PadLayout::default(),
            denoise: DenoiseMethod::Otsu,
            classifier: ClassifierChoice::None,
            report: None,
            expected_sources: 1,
            localize: LocalizeOptions::default(),
            ica: IcaOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::MissingFile {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(g) = cfg.geometry.as_mut() {
            fix(g);
        }
        if let Some(r) = cfg.report.as_mut() {
            fix(r);
        }
        match &mut cfg.classifier {
            ClassifierChoice::Transformer { weights, labels, .. } => {
                fix(weights);
                if let Some(l) = labels.as_mut() {
                    fix(l);
                }
            }
            ClassifierChoice::Centroid { model } => fix(model),
            ClassifierChoice::None => {}
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.block_s.is_finite() && self.block_s > 0.0) {
            return Err(PipelineError::Config(format!(
                "block length {} s must be positive",
                self.block_s
            )));
        }
        self.pads
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.expected_sources == 0 {
            return Err(PipelineError::Config("expected_sources must be at least 1".into()));
        }
        Ok(())
    }
}

fn require_file(path: &Path) -> Result<(), PipelineError> {
    std::fs::metadata(path)
        .map(|_| ())
        .map_err(|source| PipelineError::MissingFile {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads the configured classifier, checking its files exist.
pub fn load_classifier(choice: &ClassifierChoice) -> Result<Option<Classifier>, PipelineError> {
    Ok(match choice {
        ClassifierChoice::None => None,
        ClassifierChoice::Centroid { model } => {
            require_file(model)?;
            Some(Classifier::Centroid(CentroidModel::load(model)?))
        }
        ClassifierChoice::Transformer {
            weights,
            labels,
            heads,
        } => {
            require_file(weights)?;
            let labels = match labels {
                Some(p) => {
                    require_file(p)?;
                    load_labels(p)?
                }
                None => esc50_labels(),
            };
            let w = AstWeights::load(weights)?;
            let cfg = AstConfig::from_weights(&w, AST_MEL_BANDS, *heads, labels)?;
            Some(Classifier::Transformer(Box::new(AstModel::new(cfg, &w)?)))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTimings {
    pub localize_ms: f64,
    pub denoise_ms: f64,
    pub separate_ms: f64,
    pub classify_ms: f64,
    pub actuate_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSummary {
    pub sources: usize,
    pub converged: bool,
    pub low_confidence: bool,
    pub assignment: Vec<Option<usize>>,
    pub scores: Vec<Vec<f64>>,
    /// Source passed to the classifier.
    pub dominant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub index: usize,
    pub timestamp_s: f64,
    pub source: Option<SourceEstimate>,
    pub direction_indeterminate: bool,
    pub separation: Option<SeparationSummary>,
    pub classification: Option<ClassScores>,
    pub commands: Vec<PadCommand>,
    pub warnings: Vec<String>,
    pub errors: Vec<StageError>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub block_s: f64,
    pub sample_rate: u32,
    pub channels: usize,
    pub blocks: Vec<BlockReport>,
}

impl PipelineReport {
    pub fn commands(&self) -> impl Iterator<Item = &PadCommand> {
        self.blocks.iter().flat_map(|b| b.commands.iter())
    }

    pub fn mean_block_ms(&self) -> f64 {
        if self.blocks.is_empty() {
            return 0.0;
        }
        self.blocks.iter().map(|b| b.timings.total_ms).sum::<f64>() / self.blocks.len() as f64
    }
}

/// Ready-to-run pipeline with files loaded and options validated.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    geometry: MicArrayGeometry,
    classifier: Option<Classifier>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        geometry: MicArrayGeometry,
        classifier: Option<Classifier>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            config,
            geometry,
            classifier,
        })
    }

    /// Loads geometry and classifier from the paths in the config.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        let geometry = match &config.geometry {
            Some(p) => {
                require_file(p)?;
                MicArrayGeometry::load(p)?
            }
            None => MicArrayGeometry::default_square(),
        };
        let classifier = load_classifier(&config.classifier)?;
        Self::new(config, geometry, classifier)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn geometry(&self) -> &MicArrayGeometry {
        &self.geometry
    }

    pub fn block_frames(&self, sample_rate: u32) -> usize {
        (self.config.block_s * sample_rate as f64).round() as usize
    }

    /// Processes one block. Stage failures are recorded in the report and
    /// the remaining stages carry on.
    pub fn process_block(&self, index: usize, block: &AudioBuffer) -> BlockReport {
        let start = Instant::now();
        let timestamp_s = index as f64 * self.config.block_s;
        let mut timings = StageTimings::default();
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let mut fail = |stage: &str, e: &dyn std::fmt::Display| {
            errors.push(StageError {
                stage: stage.into(),
                message: e.to_string(),
            })
        };

        let t = Instant::now();
        let source = match localize(block, &self.geometry, &self.config.localize) {
            Ok(s) => Some(s),
            Err(e) => {
                fail("localize", &e);
                None
            }
        };
        timings.localize_ms = ms_since(t);

        let t = Instant::now();
        let params = FrameParams::speech_default(block.sample_rate());
        let denoised = match denoise_buffer(block, self.config.denoise, None, &params) {
            Ok(d) => {
                warnings.extend(d.warnings);
                d.audio
            }
            Err(e) => {
                fail("denoise", &e);
                block.clone()
            }
        };
        timings.denoise_ms = ms_since(t);

        let t = Instant::now();
        let mut separation = None;
        let mut dominant_audio = None;
        if self.config.expected_sources >= 2 {
            match self.separate(&denoised, source.as_ref()) {
                Ok((summary, audio)) => {
                    separation = Some(summary);
                    dominant_audio = Some(audio);
                }
                Err(e) => fail("separate", &e),
            }
        }
        timings.separate_ms = ms_since(t);

        let t = Instant::now();
        let classification = match &self.classifier {
            Some(c) => {
                let audio = match dominant_audio {
                    Some(a) => a,
                    None => loudest_channel(&denoised),
                };
                match audio.and_then(|a| c.classify(&a)) {
                    Ok(s) => Some(s.with_timestamp(timestamp_s)),
                    Err(e) => {
                        fail("classify", &e);
                        None
                    }
                }
            }
            None => None,
        };
        timings.classify_ms = ms_since(t);

        let t = Instant::now();
        let mut commands = Vec::new();
        if let Some(s) = &source {
            let label = classification.as_ref().map(|c| c.label.clone());
            match command_for(s, &self.config.pads, timestamp_s, label) {
                Ok(Some(cmd)) => commands.push(cmd),
                Ok(None) => {}
                Err(e) => fail("actuate", &e),
            }
        }
        timings.actuate_ms = ms_since(t);
        timings.total_ms = ms_since(start);

        BlockReport {
            index,
            timestamp_s,
            direction_indeterminate: source.is_none(),
            source,
            separation,
            classification,
            commands,
            warnings,
            errors,
            timings,
        }
    }

    fn separate(
        &self,
        denoised: &AudioBuffer,
        source: Option<&SourceEstimate>,
    ) -> Result<(SeparationSummary, Result<AudioBuffer, ClassifyError>), PipelineError> {
        let retain = Retain::Count(self.config.expected_sources.min(denoised.num_channels()));
        let white = pca_whiten(denoised, retain)?;
        let ica = IcaOptions {
            seed: resolve_seed(self.config.ica.seed),
            ..self.config.ica
        };
        let mut sep = fast_ica(&white, ica)?;
        if let Some(s) = source {
            sep = assign_sources(sep, denoised, &s.tdoa)?;
        }
        let (dominant, audio) = dominant_source(&sep, denoised.sample_rate());
        Ok((
            SeparationSummary {
                sources: sep.num_sources(),
                converged: sep.converged,
                low_confidence: sep.low_confidence,
                assignment: sep.assignment.clone(),
                scores: sep.scores.clone(),
                dominant,
            },
            audio,
        ))
    }

    /// Splits the capture into whole blocks and processes them. Blocks are
    /// independent, so they run in parallel; reports come back in order.
    pub fn run(&self, input: &AudioBuffer) -> Result<PipelineReport, PipelineError> {
        let (blocks, block_frames) = self.blocks(input)?;
        let reports = (0..blocks)
            .into_par_iter()
            .map(|k| self.process_block(k, &input.slice_frames(k * block_frames, (k + 1) * block_frames)))
            .collect();
        Ok(self.report(input, reports))
    }

    /// Like [`Pipeline::run`], one block at a time on the calling thread.
    pub fn run_sequential(&self, input: &AudioBuffer) -> Result<PipelineReport, PipelineError> {
        let (blocks, block_frames) = self.blocks(input)?;
        let reports = (0..blocks)
            .map(|k| self.process_block(k, &input.slice_frames(k * block_frames, (k + 1) * block_frames)))
            .collect();
        Ok(self.report(input, reports))
    }

    fn blocks(&self, input: &AudioBuffer) -> Result<(usize, usize), PipelineError> {
        if input.num_channels() != self.geometry.num_mics() {
            return Err(PipelineError::ChannelMismatch {
                channels: input.num_channels(),
                mics: self.geometry.num_mics(),
            });
        }
        let block_frames = self.block_frames(input.sample_rate());
        if block_frames == 0 || input.num_frames() < block_frames {
            return Err(PipelineError::TooShort {
                frames: input.num_frames(),
                block_frames,
            });
        }
        Ok((input.num_frames() / block_frames, block_frames))
    }

    fn report(&self, input: &AudioBuffer, blocks: Vec<BlockReport>) -> PipelineReport {
        PipelineReport {
            schema_version: REPORT_SCHEMA_VERSION,
            block_s: self.config.block_s,
            sample_rate: input.sample_rate(),
            channels: input.num_channels(),
            blocks,
        }
    }
}

/// Mono copy of the channel with the most energy.
pub fn loudest_channel(buf: &AudioBuffer) -> Result<AudioBuffer, ClassifyError> {
    let best = (0..buf.num_channels())
        .map(|c| (c, buf.channel(c).iter().map(|v| v * v).sum::<f64>()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(c, _)| c);
    Ok(buf.extract_channel(best)?)
}

/// The separated source carrying the most power across the array, rescaled
/// to its mixing gain.
fn dominant_source(
    sep: &SeparatedSources,
    sample_rate: u32,
) -> (usize, Result<AudioBuffer, ClassifyError>) {
    let mixing: DMatrix<f64> = sep
        .unmixing
        .clone()
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(sep.unmixing.ncols(), sep.unmixing.nrows()));
    let power: Vec<f64> = mixing.column_iter().map(|c| c.norm_squared()).collect();
    let k = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(k, _)| k);
    let gain = power.get(k).copied().unwrap_or(0.0).sqrt();
    let samples = sep.sources.row(k).iter().map(|v| v * gain).collect();
    (k, AudioBuffer::mono(samples, sample_rate).map_err(Into::into))
}

/// Streams every command in the report to `log`, in block order.
pub fn emit_commands<W: std::io::Write>(
    report: &PipelineReport,
    log: &mut PadEventLog<W>,
) -> std::io::Result<usize> {
    let mut n = 0;
    for cmd in report.commands() {
        log.emit(cmd)?;
        n += 1;
    }
    Ok(n)
}

/// Runs and optionally writes the report.
pub fn run_pipeline(input: &AudioBuffer, pipeline: &Pipeline) -> Result<PipelineReport, PipelineError> {
    let report = pipeline.run(input)?;
    if let Some(path) = &pipeline.config.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
