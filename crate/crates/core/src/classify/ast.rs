use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{esc50_labels, AstWeights, ClassScores, ClassifyError};
use crate::signal::{MelSpectrogram, AST_MEL_BANDS};

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AstConfig {
    pub n_mels: usize,
    pub patch_freq: usize,
    pub patch_time: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// MLP hidden width as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
    /// Longest input, in time patches, the positional table covers.
    pub max_time_patches: usize,
    pub labels: Vec<String>,
}

impl Default for AstConfig {
    fn default() -> Self {
        Self {
            n_mels: AST_MEL_BANDS,
            patch_freq: 16,
            patch_time: 16,
            embed_dim: 192,
            layers: 2,
            heads: 3,
            mlp_ratio: 4,
            max_time_patches: 32,
            labels: esc50_labels(),
        }
    }
}

impl AstConfig {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn freq_groups(&self) -> usize {
        self.n_mels / self.patch_freq
    }

    pub fn patch_len(&self) -> usize {
        self.patch_freq * self.patch_time
    }

    pub fn max_tokens(&self) -> usize {
        1 + self.freq_groups() * self.max_time_patches
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: String| Err(ClassifyError::InvalidConfig(m));
        if self.patch_freq == 0 || self.patch_time == 0 {
            return bad("patch size must be positive".into());
        }
        if self.n_mels == 0 || !self.n_mels.is_multiple_of(self.patch_freq) {
            return bad(format!(
                "{} Mel bands do not tile into {}-band patches",
                self.n_mels, self.patch_freq
            ));
        }
        if self.heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if self.mlp_ratio == 0 || self.max_time_patches == 0 {
            return bad("mlp_ratio and max_time_patches must be positive".into());
        }
        if self.labels.is_empty() {
            return bad("no labels".into());
        }
        Ok(())
    }

    /// Expected tensors in declaration order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let hidden = d * self.mlp_ratio;
        let mut v = vec![
            ("patch_embed.weight".to_string(), vec![d, self.patch_len()]),
            ("patch_embed.bias".to_string(), vec![d]),
            ("cls_token".to_string(), vec![d]),
            ("pos_embed".to_string(), vec![self.max_tokens(), d]),
        ];
        for l in 0..self.layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            v.extend([
                (p("norm1.weight"), vec![d]),
                (p("norm1.bias"), vec![d]),
                (p("attn.qkv.weight"), vec![3 * d, d]),
                (p("attn.qkv.bias"), vec![3 * d]),
                (p("attn.proj.weight"), vec![d, d]),
                (p("attn.proj.bias"), vec![d]),
                (p("norm2.weight"), vec![d]),
                (p("norm2.bias"), vec![d]),
                (p("mlp.fc1.weight"), vec![hidden, d]),
                (p("mlp.fc1.bias"), vec![hidden]),
                (p("mlp.fc2.weight"), vec![d, hidden]),
                (p("mlp.fc2.bias"), vec![d]),
            ]);
        }
        v.extend([
            ("norm.weight".to_string(), vec![d]),
            ("norm.bias".to_string(), vec![d]),
            ("head.weight".to_string(), vec![self.n_classes(), d]),
            ("head.bias".to_string(), vec![self.n_classes()]),
        ]);
        v
    }

    /// Reads dimensions off a weight file. Square patches and `n_mels`
    /// bands are assumed; the head count cannot be recovered from shapes.
    pub fn from_weights(
        weights: &AstWeights,
        n_mels: usize,
        heads: usize,
        labels: Vec<String>,
    ) -> Result<Self, ClassifyError> {
        let shape = |n: &str| {
            weights
                .get(n)
                .map(|t| t.shape.clone())
                .ok_or_else(|| ClassifyError::MissingTensor(n.to_string()))
        };
        let patch = shape("patch_embed.weight")?;
        let side = (patch[1] as f64).sqrt().round() as usize;
        let embed_dim = patch[0];
        let layers = (0..)
            .take_while(|l| weights.get(&format!("blocks.{l}.norm1.weight")).is_some())
            .count();
        let hidden = if layers > 0 { shape("blocks.0.mlp.fc1.weight")?[0] } else { embed_dim };
        let tokens = shape("pos_embed")?[0];
        let cfg = Self {
            n_mels,
            patch_freq: side,
            patch_time: side,
            embed_dim,
            layers,
            heads,
            mlp_ratio: hidden / embed_dim.max(1),
            max_time_patches: tokens.saturating_sub(1) / (n_mels / side.max(1)).max(1),
            labels,
        };
        cfg.validate()?;
        weights.validate(&cfg)?;
        Ok(cfg)
    }
}

/// Patch sequence, one flattened patch per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub data: DMatrix<f64>,
    pub freq_groups: usize,
    pub time_groups: usize,
}

impl Patches {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// Cuts a Mel spectrogram into non-overlapping patches, frequency group
/// outermost. Each patch is flattened band-major. The last time group is
/// zero-padded, and inputs shorter than one patch give a single padded
/// column.
pub fn patchify(mel: &MelSpectrogram, cfg: &AstConfig) -> Result<Patches, ClassifyError> {
    cfg.validate()?;
    if mel.n_mels() != cfg.n_mels {
        return Err(ClassifyError::BandMismatch {
            expected: cfg.n_mels,
            found: mel.n_mels(),
        });
    }
    let (pf, pt) = (cfg.patch_freq, cfg.patch_time);
    let frames = mel.num_frames();
    let fg = cfg.freq_groups();
    let tg = frames.div_ceil(pt).max(1);
    let mut data = DMatrix::zeros(fg * tg, pf * pt);
    for f in 0..fg {
        for t in 0..tg {
            let row = f * tg + t;
            for i in 0..pf {
                for j in 0..pt {
                    let frame = t * pt + j;
                    if frame < frames {
                        data[(row, i * pt + j)] = mel.get(f * pf + i, frame);
                    }
                }
            }
        }
    }
    Ok(Patches {
        data,
        freq_groups: fg,
        time_groups: tg,
    })
}

fn matrix(weights: &AstWeights, name: &str) -> DMatrix<f64> {
    let t = weights.get(name).expect("validated");
    DMatrix::from_row_slice(t.shape[0], t.shape[1], &t.data)
}

fn vector(weights: &AstWeights, name: &str) -> DVector<f64> {
    DVector::from_column_slice(&weights.get(name).expect("validated").data)
}

#[derive(Debug, Clone)]
struct Linear {
    /// Stored transposed, `in × out`, so rows of activations multiply directly.
    wt: DMatrix<f64>,
    b: DVector<f64>,
}

impl Linear {
    fn load(weights: &AstWeights, prefix: &str) -> Self {
        Self {
            wt: matrix(weights, &format!("{prefix}.weight")).transpose(),
            b: vector(weights, &format!("{prefix}.bias")),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.wt;
        for mut row in y.row_iter_mut() {
            row += self.b.transpose();
        }
        y
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    w: DVector<f64>,
    b: DVector<f64>,
}

impl LayerNorm {
    fn load(weights: &AstWeights, prefix: &str) -> Self {
        Self {
            w: vector(weights, &format!("{prefix}.weight")),
            b: vector(weights, &format!("{prefix}.bias")),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = x.ncols() as f64;
        let mut y = x.clone();
        for mut row in y.row_iter_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.w[c] + self.b[c];
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
struct Block {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Validated transformer ready for inference; immutable and shareable.
#[derive(Debug, Clone)]
pub struct AstModel {
    cfg: AstConfig,
    patch_embed: Linear,
    cls: DVector<f64>,
    pos: DMatrix<f64>,
    blocks: Vec<Block>,
    norm: LayerNorm,
    head: Linear,
}

impl AstModel {
    /// Rejects any mismatch between the weights and the configuration.
    pub fn new(cfg: AstConfig, weights: &AstWeights) -> Result<Self, ClassifyError> {
        cfg.validate()?;
        weights.validate(&cfg)?;
        let blocks = (0..cfg.layers)
            .map(|l| {
                let p = |s: &str| format!("blocks.{l}.{s}");
                Block {
                    norm1: LayerNorm::load(weights, &p("norm1")),
                    qkv: Linear::load(weights, &p("attn.qkv")),
                    proj: Linear::load(weights, &p("attn.proj")),
                    norm2: LayerNorm::load(weights, &p("norm2")),
                    fc1: Linear::load(weights, &p("mlp.fc1")),
                    fc2: Linear::load(weights, &p("mlp.fc2")),
                }
            })
            .collect();
        Ok(Self {
            patch_embed: Linear::load(weights, "patch_embed"),
            cls: vector(weights, "cls_token"),
            pos: matrix(weights, "pos_embed"),
            blocks,
            norm: LayerNorm::load(weights, "norm"),
            head: Linear::load(weights, "head"),
            cfg,
        })
    }

    pub fn config(&self) -> &AstConfig {
        &self.cfg
    }

    pub fn classify(&self, mel: &MelSpectrogram) -> Result<ClassScores, ClassifyError> {
        self.forward(&patchify(mel, &self.cfg)?)
    }

    pub fn forward(&self, patches: &Patches) -> Result<ClassScores, ClassifyError> {
        Ok(self.run(patches, false)?.0)
    }

    /// Forward pass that also returns every attention matrix, layer by
    /// layer and head by head.
    pub fn forward_with_attention(
        &self,
        patches: &Patches,
    ) -> Result<(ClassScores, Vec<DMatrix<f64>>), ClassifyError> {
        self.run(patches, true)
    }

    fn run(
        &self,
        patches: &Patches,
        keep_attention: bool,
    ) -> Result<(ClassScores, Vec<DMatrix<f64>>), ClassifyError> {
        let d = self.cfg.embed_dim;
        if patches.data.ncols() != self.cfg.patch_len() {
            return Err(ClassifyError::InvalidConfig(format!(
                "patches have {} values, model expects {}",
                patches.data.ncols(),
                self.cfg.patch_len()
            )));
        }
        let tokens = patches.len() + 1;
        if tokens > self.pos.nrows() {
            return Err(ClassifyError::InputTooLong {
                needed: patches.len(),
                available: self.pos.nrows() - 1,
            });
        }
        let embedded = self.patch_embed.apply(&patches.data);
        let mut x = DMatrix::zeros(tokens, d);
        x.row_mut(0).copy_from(&self.cls.transpose());
        x.rows_mut(1, tokens - 1).copy_from(&embedded);
        x += self.pos.rows(0, tokens);

        let heads = self.cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attention = Vec::new();
        for block in &self.blocks {
            let qkv = block.qkv.apply(&block.norm1.apply(&x));
            let mut merged = DMatrix::zeros(tokens, d);
            for h in 0..heads {
                let q = qkv.columns(h * dh, dh);
                let k = qkv.columns(d + h * dh, dh);
                let v = qkv.columns(2 * d + h * dh, dh);
                let mut a = q * k.transpose() * scale;
                softmax_rows(&mut a);
                merged.columns_mut(h * dh, dh).copy_from(&(&a * v));
                if keep_attention {
                    attention.push(a);
                }
            }
            x += block.proj.apply(&merged);
            let hidden = block.fc1.apply(&block.norm2.apply(&x)).map(gelu);
            x += block.fc2.apply(&hidden);
        }
        let cls = self.norm.apply(&x.rows(0, 1).into_owned());
        let logits: Vec<f64> = self.head.apply(&cls).iter().copied().collect();
        let scores: Vec<f64> = logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
        Ok((
            ClassScores::from_parts(&self.cfg.labels, &logits, &scores),
            attention,
        ))
    }
}
