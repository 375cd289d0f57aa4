//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use echolocate::actuate::{
    command_for, perceived_stimulation, IntensityLevels, PadLayout, MAX_INTENSITY,
};
use echolocate::bss::{fast_ica, nmf, nmf_objective, nmf_update, pca_whiten_matrix, IcaOptions, Retain};
use echolocate::classify::{
    centroid_train, patchify, AstConfig, AstModel, AstWeights, Patches, Tensor,
};
use echolocate::denoise::{benchmark_denoisers, otsu_threshold, MagnitudeHistogram};
use echolocate::localize::{
    gcc_phat_slices, localize, Distance, LocalizeOptions, MicArrayGeometry,
    SourceEstimate, TdoaSet,
};
use echolocate::pipeline::{resolve_seed, Pipeline, PipelineConfig};
use echolocate::scene::{render_scene, SceneSpec, SignalKind, SourceSpec};
use echolocate::signal::{mel_features, AudioBuffer, MelSpectrogram};

const RATE: u32 = 16_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(base: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(resolve_seed(base))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

// 1. Otsu against a direct within-class-variance minimiser.

fn otsu_oracle(counts: &[u64]) -> usize {
    let stats = |range: &[u64], offset: usize| {
        let n: f64 = range.iter().map(|&c| c as f64).sum();
        if n == 0.0 {
            return None;
        }
        let mean = range
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + offset) as f64 * c as f64)
            .sum::<f64>()
            / n;
        let var = range
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * ((i + offset) as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        Some((n, var))
    };
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut best: Option<(usize, f64)> = None;
    for k in 0..counts.len() - 1 {
        let (Some((n0, v0)), Some((n1, v1))) = (stats(&counts[..=k], 0), stats(&counts[k + 1..], k + 1))
        else {
            continue;
        };
        let within = (n0 * v0 + n1 * v1) / total;
        if best.is_none_or(|(_, b)| within < b) {
            best = Some((k, within));
        }
    }
    best.expect("two non-empty bins").0
}

fn criterion_otsu() -> Outcome {
    let mut rng = rng(1);
    let mut agree = 0;
    let mut histograms = Vec::new();
    for _ in 0..1000 {
        let sparsity = rng.random_range(0.0..0.8);
        let peak = rng.random_range(1..10_000u64);
        let mut counts: Vec<u64> = (0..256)
            .map(|_| {
                if rng.random::<f64>() < sparsity {
                    0
                } else {
                    rng.random_range(0..=peak)
                }
            })
            .collect();
        counts[rng.random_range(0..128)] += 1;
        counts[rng.random_range(128..256)] += 1;
        histograms.push(counts);
    }
    let start = Instant::now();
    let picks: Vec<usize> = histograms
        .iter()
        .map(|c| {
            otsu_threshold(&MagnitudeHistogram::from_counts(c.clone(), -100.0, 0.0))
                .expect("two non-empty bins")
                .bin
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    for (c, &pick) in histograms.iter().zip(&picks) {
        if pick == otsu_oracle(c) {
            agree += 1;
        }
    }
    outcome(
        agree == 1000 && elapsed < 5.0,
        format!("{agree}/1000 match the exhaustive minimiser, {elapsed:.3} s total"),
    )
}

// 2. GCC-PHAT on integer shifts of white noise.

fn criterion_gcc() -> Outcome {
    let geom = MicArrayGeometry::default_square();
    let max_lag_s = geom.aperture() / geom.speed_of_sound();
    let bound = (max_lag_s * RATE as f64).floor() as i64;
    let n = 3280;
    let mut rng = rng(2);
    let mut within = 0;
    let mut slowest = 0.0f64;
    for _ in 0..500 {
        let d = rng.random_range(-bound..=bound);
        let x = gaussian(&mut rng, n + 2 * bound as usize);
        let pad = bound as usize;
        let a = &x[pad..pad + n];
        let b: Vec<f64> = (0..n).map(|i| x[(pad as i64 + i as i64 - d) as usize]).collect();
        let start = Instant::now();
        let est = gcc_phat_slices(a, &b, RATE, max_lag_s).expect("valid input");
        slowest = slowest.max(start.elapsed().as_secs_f64());
        if (est.delay_s * RATE as f64 - d as f64).abs() < 0.5 {
            within += 1;
        }
    }
    outcome(
        within >= 495 && slowest < 0.010,
        format!(
            "{within}/500 within half a sample (delays up to ±{bound}), slowest {:.2} ms",
            slowest * 1e3
        ),
    )
}

// 3. Localisation over a grid of simulated scenes.

fn azimuth_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

fn criterion_localization() -> Outcome {
    let geom = MicArrayGeometry::default_square();
    let opts = LocalizeOptions::default();
    let cells: Vec<(f64, f64)> = [1.0, 2.0, 4.0]
        .iter()
        .flat_map(|&r| (0..36).map(move |k| (r, k as f64 * 10.0)))
        .collect();
    let run = |snr: Option<f64>, seed: u64| -> Vec<(f64, Option<f64>)> {
        cells
            .iter()
            .enumerate()
            .map(|(idx, &(r, az))| {
                let mut spec = SceneSpec::new(geom.clone(), 0.205, RATE)
                    .with_source(SourceSpec::polar(&geom, r, az, SignalKind::WhiteNoise))
                    .with_seed(resolve_seed(seed) + idx as u64);
                spec.noise_snr_db = snr;
                let (buf, _) = render_scene(&spec).expect("valid scene");
                match localize(&buf, &geom, &opts) {
                    Ok(est) => (
                        azimuth_gap(est.azimuth_deg, az),
                        est.distance.meters().map(|d| (d - r).abs() / r),
                    ),
                    Err(_) => (180.0, None),
                }
            })
            .collect()
    };
    let clean = run(None, 300);
    let good_clean = clean
        .iter()
        .filter(|(a, d)| *a <= 5.0 && d.is_some_and(|d| d <= 0.15))
        .count();
    let noisy = run(Some(10.0), 3000);
    let good_noisy = noisy.iter().filter(|(a, _)| *a <= 10.0).count();
    let per_range = |r_idx: usize| {
        clean[r_idx * 36..(r_idx + 1) * 36]
            .iter()
            .filter(|(a, d)| *a <= 5.0 && d.is_some_and(|d| d <= 0.15))
            .count()
    };
    let n = cells.len() as f64;
    outcome(
        good_clean as f64 / n >= 0.95 && good_noisy as f64 / n >= 0.90,
        format!(
            "noiseless {good_clean}/108 (1 m {}, 2 m {}, 4 m {}); 10 dB azimuth {good_noisy}/108",
            per_range(0),
            per_range(1),
            per_range(2)
        ),
    )
}

// 4. Every denoiser improves PSNR on tone-plus-noise fixtures.

fn criterion_denoise() -> Outcome {
    let n = RATE as usize;
    let mut rng = rng(4);
    let mut improvements: Vec<(String, f64, Vec<f64>)> = Vec::new();
    let mut all_improve = true;
    for k in 0..20 {
        let snr_db = 20.0 * k as f64 / 19.0;
        let f = 300.0 + 100.0 * k as f64;
        let clean: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / RATE as f64;
                0.5 * (2.0 * PI * f * t).sin() + 0.2 * (2.0 * PI * 2.3 * f * t).sin()
            })
            .collect();
        let noise = gaussian(&mut rng, n);
        let p_signal = clean.iter().map(|v| v * v).sum::<f64>();
        let p_noise = noise.iter().map(|v| v * v).sum::<f64>();
        let scale = (p_signal / p_noise / 10f64.powf(snr_db / 10.0)).sqrt();
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, e)| c + scale * e).collect();
        let clean = AudioBuffer::mono(clean, RATE).unwrap();
        let noisy = AudioBuffer::mono(noisy, RATE).unwrap();
        let report = benchmark_denoisers(&clean, &noisy, None).expect("benchmark runs");
        for e in &report.entries {
            let gain = e.psnr_db.map_or(f64::NEG_INFINITY, |p| p - report.noisy_psnr_db);
            if gain.is_nan() || gain <= 0.0 {
                all_improve = false;
            }
            match improvements.iter_mut().find(|(name, _, _)| *name == e.algorithm) {
                Some(slot) => slot.2.push(gain),
                None => improvements.push((e.algorithm.clone(), e.reference_db, vec![gain])),
            }
        }
    }
    improvements.sort_by(|a, b| a.0.cmp(&b.0));
    println!("  algorithm          mean gain (dB)   min gain (dB)   reference PSNR (dB)");
    for (name, reference, gains) in &improvements {
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        let min = gains.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("  {name:<18} {mean:>14.3} {min:>15.3} {reference:>21.3}");
    }
    outcome(
        all_improve && improvements.len() == 4,
        format!("20 fixtures at 0-20 dB SNR, {} denoisers, all strictly improve: {all_improve}", improvements.len()),
    )
}

// 5. NMF objective never increases, and exact products are recovered.

fn criterion_nmf() -> Outcome {
    let mut rng = rng(5);
    let mut monotone = 0;
    let mut worst_rise = 0.0f64;
    for _ in 0..100 {
        let rows = rng.random_range(4..30);
        let cols = rng.random_range(4..30);
        let rank = rng.random_range(1..rows.min(cols));
        let v = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
        let mut w = DMatrix::from_fn(rows, rank, |_, _| rng.random::<f64>() + 1e-3);
        let mut h = DMatrix::from_fn(rank, cols, |_, _| rng.random::<f64>() + 1e-3);
        let mut prev = nmf_objective(&v, &w, &h);
        let mut ok = true;
        for _ in 0..200 {
            nmf_update(&v, &mut w, &mut h);
            let obj = nmf_objective(&v, &w, &h);
            if obj > prev * (1.0 + 1e-12) {
                ok = false;
                worst_rise = worst_rise.max((obj - prev) / prev);
            }
            prev = obj;
        }
        if ok {
            monotone += 1;
        }
    }
    let w = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>());
    let h = DMatrix::from_fn(3, 30, |_, _| rng.random::<f64>());
    let v = &w * &h;
    let fit = nmf(&v, 3, 5000, resolve_seed(55)).expect("valid rank");
    let rel = fit.objective.last().copied().unwrap_or(f64::INFINITY) / v.norm_squared();
    outcome(
        monotone == 100 && rel < 1e-6,
        format!("{monotone}/100 monotone over 200 iterations (worst rise {worst_rise:.1e}); recovery objective {rel:.2e}·‖V‖²"),
    )
}

// 6. FastICA on uniform plus Laplacian mixtures.

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn criterion_ica() -> Outcome {
    let mut rng = rng(6);
    let n = 5000;
    let mut separated = 0;
    for trial in 0..50 {
        let uniform: Vec<f64> = (0..n).map(|_| rng.random_range(-3f64.sqrt()..3f64.sqrt())).collect();
        let laplace: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
            })
            .collect();
        let a = loop {
            let m = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0f64..1.0));
            if m.determinant().abs() > 0.2 {
                break m;
            }
        };
        let s = DMatrix::from_fn(2, n, |r, c| if r == 0 { uniform[c] } else { laplace[c] });
        let x = &a * &s;
        let white = pca_whiten_matrix(&x, Retain::Count(2)).expect("full rank");
        let sep = fast_ica(
            &white,
            IcaOptions {
                seed: resolve_seed(600) + trial,
                ..IcaOptions::default()
            },
        )
        .expect("separation runs");
        let est: Vec<Vec<f64>> = sep.sources.row_iter().map(|r| r.iter().copied().collect()).collect();
        let c = |i: usize, truth: &[f64]| correlation(&est[i], truth).abs();
        let straight = c(0, &uniform).min(c(1, &laplace));
        let swapped = c(1, &uniform).min(c(0, &laplace));
        if straight.max(swapped) >= 0.95 {
            separated += 1;
        }
    }
    outcome(
        separated >= 45,
        format!("{separated}/50 trials with both |r| ≥ 0.95"),
    )
}

// 7. Transformer forward checks and the centroid baseline.

mod reference {
    use super::*;

    type Mat = Vec<Vec<f64>>;

    fn t<'a>(w: &'a AstWeights, n: &str) -> &'a Tensor {
        w.get(n).expect("tensor present")
    }

    fn linear(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
        let (out, inp) = (w.shape[0], w.shape[1]);
        x.iter()
            .map(|row| {
                (0..out)
                    .map(|o| b.data[o] + (0..inp).map(|i| w.data[o * inp + i] * row[i]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    fn layer_norm(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mu = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                row.iter()
                    .enumerate()
                    .map(|(i, v)| (v - mu) / (var + 1e-6).sqrt() * w.data[i] + b.data[i])
                    .collect()
            })
            .collect()
    }

    fn add(x: &mut Mat, y: &Mat) {
        for (a, b) in x.iter_mut().zip(y) {
            for (p, q) in a.iter_mut().zip(b) {
                *p += q;
            }
        }
    }

    pub fn forward(cfg: &AstConfig, w: &AstWeights, patches: &Mat) -> Vec<f64> {
        let d = cfg.embed_dim;
        let mut x: Mat = vec![t(w, "cls_token").data.clone()];
        x.extend(linear(patches, t(w, "patch_embed.weight"), t(w, "patch_embed.bias")));
        let pos = t(w, "pos_embed");
        for (r, row) in x.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += pos.data[r * d + c];
            }
        }
        let n = x.len();
        let dh = d / cfg.heads;
        for l in 0..cfg.layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            let y = layer_norm(&x, t(w, &p("norm1.weight")), t(w, &p("norm1.bias")));
            let qkv = linear(&y, t(w, &p("attn.qkv.weight")), t(w, &p("attn.qkv.bias")));
            let mut merged = vec![vec![0.0; d]; n];
            for h in 0..cfg.heads {
                for i in 0..n {
                    let logits: Vec<f64> = (0..n)
                        .map(|j| {
                            (0..dh).map(|e| qkv[i][h * dh + e] * qkv[j][d + h * dh + e]).sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let ex: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
                    let z: f64 = ex.iter().sum();
                    for e in 0..dh {
                        merged[i][h * dh + e] =
                            (0..n).map(|j| ex[j] / z * qkv[j][2 * d + h * dh + e]).sum::<f64>();
                    }
                }
            }
            add(&mut x, &linear(&merged, t(w, &p("attn.proj.weight")), t(w, &p("attn.proj.bias"))));
            let y = layer_norm(&x, t(w, &p("norm2.weight")), t(w, &p("norm2.bias")));
            let hidden: Mat = linear(&y, t(w, &p("mlp.fc1.weight")), t(w, &p("mlp.fc1.bias")))
                .into_iter()
                .map(|r| r.into_iter().map(|v| 0.5 * v * (1.0 + erf(v / 2f64.sqrt()))).collect())
                .collect();
            add(&mut x, &linear(&hidden, t(w, &p("mlp.fc2.weight")), t(w, &p("mlp.fc2.bias"))));
        }
        let cls = layer_norm(&vec![x[0].clone()], t(w, "norm.weight"), t(w, "norm.bias"));
        linear(&cls, t(w, "head.weight"), t(w, "head.bias"))[0]
            .iter()
            .map(|z| 1.0 / (1.0 + (-z).exp()))
            .collect()
    }

    /// Maclaurin series near zero, continued fraction for erfc beyond 3.
    fn erf(x: f64) -> f64 {
        let a = x.abs();
        let value = if a < 3.0 {
            let mut term = a;
            let mut sum = a;
            let mut k = 0.0;
            while term.abs() > 1e-17 * sum.abs() {
                k += 1.0;
                term *= -a * a / k;
                sum += term / (2.0 * k + 1.0);
            }
            2.0 / PI.sqrt() * sum
        } else {
            // erfc(a) = exp(-a²)/√π · 1/(a + 1/2/(a + 1/(a + 3/2/(a + ...))))
            let mut frac = 0.0;
            for k in (1..60).rev() {
                frac = (k as f64 / 2.0) / (a + frac);
            }
            1.0 - (-a * a).exp() / PI.sqrt() / (a + frac)
        };
        value.copysign(x)
    }
}

fn random_mel(frames: usize, seed: u64) -> MelSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MelSpectrogram::from_values(
        (0..128)
            .map(|_| (0..frames).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect(),
    )
    .unwrap()
}

fn scaled_weights(cfg: &AstConfig, seed: u64) -> AstWeights {
    let mut w = AstWeights::random(cfg, seed);
    let names: Vec<String> = w.entries().iter().map(|(n, _)| n.clone()).collect();
    for n in names.iter().filter(|n| !n.contains("norm")) {
        for v in &mut w.get_mut(n).unwrap().data {
            *v *= 10.0;
        }
    }
    w
}

fn permuted(p: &Patches, order: &[usize]) -> Patches {
    let mut data = p.data.clone();
    for (dst, &src) in order.iter().enumerate() {
        data.row_mut(dst).copy_from(&p.data.row(src));
    }
    Patches { data, ..p.clone() }
}

fn synthetic_clip(kind: usize, seed: u64) -> MelSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let level = 0.2 + 0.8 * (seed % 7) as f64 / 7.0;
    let phase = seed as f64 * 0.37;
    let x: Vec<f64> = (0..3280)
        .map(|i| {
            let t = i as f64 / RATE as f64;
            let background = 0.02 * noise.sample(&mut rng);
            level
                * match kind {
                    0 => (2.0 * PI * 440.0 * t + phase).sin(),
                    1 => (2.0 * PI * 2000.0 * t + phase).sin(),
                    _ => 0.5 * noise.sample(&mut rng),
                }
                + background
        })
        .collect();
    mel_features(&AudioBuffer::mono(x, RATE).unwrap(), 128).unwrap()
}

fn criterion_transformer() -> Outcome {
    let cfg = AstConfig {
        labels: vec!["tone".into(), "chirp".into(), "noise".into()],
        max_time_patches: 8,
        ..AstConfig::default()
    };
    let mut notes = Vec::new();

    let zero = AstModel::new(cfg.clone(), &AstWeights::zeros(&cfg)).unwrap();
    let zero_ok = zero
        .classify(&random_mel(50, 1))
        .unwrap()
        .scores
        .iter()
        .all(|s| s.score == 0.5);
    notes.push(format!("zero weights 0.5: {zero_ok}"));

    let seed = resolve_seed(7);
    let w = scaled_weights(&cfg, seed);
    let model = AstModel::new(cfg.clone(), &w).unwrap();
    let p = patchify(&random_mel(37, seed + 1), &cfg).unwrap();
    let got = model.forward(&p).unwrap();
    let rows: Vec<Vec<f64>> = p.data.row_iter().map(|r| r.iter().copied().collect()).collect();
    let want = reference::forward(&cfg, &w, &rows);
    let max_diff = got
        .scores
        .iter()
        .zip(&want)
        .map(|(g, r)| (g.score - r).abs())
        .fold(0.0, f64::max);
    let spread = want.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    let reference_ok = max_diff < 1e-5 && spread > 0.05;
    notes.push(format!("reference max diff {max_diff:.1e}"));

    let reversed: Vec<usize> = (0..p.len()).rev().collect();
    let moved = model
        .forward(&permuted(&p, &reversed))
        .unwrap()
        .scores
        .iter()
        .zip(&got.scores)
        .map(|(a, b)| (a.score - b.score).abs())
        .fold(0.0, f64::max);
    let mut flat = w.clone();
    flat.get_mut("pos_embed").unwrap().data.fill(0.0);
    let flat_model = AstModel::new(cfg.clone(), &flat).unwrap();
    let base = flat_model.forward(&p).unwrap();
    let invariant = flat_model
        .forward(&permuted(&p, &reversed))
        .unwrap()
        .scores
        .iter()
        .zip(&base.scores)
        .map(|(a, b)| (a.score - b.score).abs())
        .fold(0.0, f64::max);
    let permutation_ok = moved > 1e-6 && invariant < 1e-12;
    notes.push(format!(
        "reordering moves scores by {moved:.1e} with positions, {invariant:.1e} without"
    ));

    let names = ["tone_440", "tone_2k", "white_noise"];
    let examples: Vec<(MelSpectrogram, String)> = (0..3)
        .flat_map(|k| (0..5).map(move |s| (synthetic_clip(k, 100 + s), names[k].to_string())))
        .collect();
    let centroid = centroid_train(&examples).unwrap();
    let mut correct = 0;
    for (k, name) in names.iter().enumerate() {
        for s in 0..20 {
            if centroid.classify(&synthetic_clip(k, resolve_seed(1000) + s)).unwrap().label == *name {
                correct += 1;
            }
        }
    }
    notes.push(format!("centroid {correct}/60"));
    outcome(
        zero_ok && reference_ok && permutation_ok && correct as f64 / 60.0 >= 0.95,
        notes.join("; "),
    )
}

// 8. Actuation never exceeds the current limit.

fn random_distance(rng: &mut ChaCha8Rng) -> Distance {
    match rng.random_range(0..8) {
        0 => Distance::FarField,
        1 => Distance::Meters(f64::NAN),
        2 => Distance::Meters(if rng.random() { f64::INFINITY } else { f64::NEG_INFINITY }),
        3 => Distance::Meters(-rng.random_range(0.0..10.0)),
        4 => Distance::Meters(rng.random_range(0.0..1e-6)),
        5 => Distance::Meters(10f64.powf(rng.random_range(-12.0..12.0))),
        _ => Distance::Meters(rng.random_range(0.0..8.0)),
    }
}

fn criterion_actuation() -> Outcome {
    let mut rng = rng(8);
    let mut commands = 0u64;
    let mut violations = 0u64;
    for _ in 0..1_000_000 {
        let layout = PadLayout {
            pads: rng.random_range(1..=16),
            offset_deg: rng.random_range(-720.0..720.0),
            levels: if rng.random() {
                IntensityLevels::Discrete
            } else {
                IntensityLevels::Continuous
            },
            reference_m: match rng.random_range(0..10) {
                0 => rng.random_range(-1.0..1e-3),
                _ => rng.random_range(0.1..10.0),
            },
        };
        let azimuth_deg = match rng.random_range(0..20) {
            0 => f64::NAN,
            1 => -1e9,
            _ => rng.random_range(-1000.0..1000.0),
        };
        let estimate = SourceEstimate {
            azimuth_deg,
            distance: random_distance(&mut rng),
            tdoa: TdoaSet {
                pairs: Vec::new(),
                sample_rate: RATE,
            },
            residual_s: 0.0,
            plane_wave_residual_s: 0.0,
            low_confidence: rng.random(),
        };
        if let Ok(Some(cmd)) = command_for(&estimate, &layout, 0.0, None) {
            commands += 1;
            if !(cmd.intensity.is_finite() && (0.0..=MAX_INTENSITY).contains(&cmd.intensity))
                || cmd.pad >= layout.pads
            {
                violations += 1;
            }
        }
    }
    let anchors = [(0.0, 0.0), (6.0, 5.0), (12.5, 10.0)];
    let anchors_ok = anchors
        .iter()
        .all(|&(current, level)| perceived_stimulation(current).is_ok_and(|v| v == level));
    outcome(
        violations == 0 && anchors_ok && commands > 0,
        format!("{commands} commands from 10^6 estimates, {violations} out of range; anchors exact: {anchors_ok}"),
    )
}

// 9. Real-time budget over a minute of four-channel audio.

fn criterion_realtime() -> Outcome {
    let geom = MicArrayGeometry::default_square();
    let seed = resolve_seed(9);
    let spec = SceneSpec::new(geom.clone(), 60.0, RATE)
        .with_source(SourceSpec::polar(&geom, 2.0, 135.0, SignalKind::Tone { freq_hz: 440.0 }))
        .with_source(SourceSpec::polar(&geom, 3.0, 290.0, SignalKind::WhiteNoise).with_level(0.3))
        .with_noise(20.0)
        .with_seed(seed);
    let (stream, _) = render_scene(&spec).expect("valid scene");
    let names = ["tone_440", "tone_2k", "white_noise"];
    let examples: Vec<(MelSpectrogram, String)> = (0..3)
        .flat_map(|k| (0..5).map(move |s| (synthetic_clip(k, 100 + s), names[k].to_string())))
        .collect();
    let classifier = echolocate::classify::Classifier::Centroid(centroid_train(&examples).unwrap());
    let pipeline = Pipeline::new(PipelineConfig::default(), geom, Some(classifier)).unwrap();
    let start = Instant::now();
    let report = pipeline.run_sequential(&stream).expect("pipeline runs");
    let wall = start.elapsed().as_secs_f64();
    let per_block = wall / report.blocks.len() as f64;
    let errors: usize = report.blocks.iter().map(|b| b.errors.len()).sum();
    outcome(
        per_block < 0.205 && report.blocks.len() == 292,
        format!(
            "{} blocks, mean {:.1} ms per block (stage sum {:.1} ms), {errors} stage errors",
            report.blocks.len(),
            per_block * 1e3,
            report.mean_block_ms()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("otsu threshold matches exhaustive oracle", criterion_otsu),
        ("gcc-phat integer delays", criterion_gcc),
        ("localization on simulated scenes", criterion_localization),
        ("denoisers improve psnr", criterion_denoise),
        ("nmf monotone and exact", criterion_nmf),
        ("ica separation", criterion_ica),
        ("transformer checks and centroid baseline", criterion_transformer),
        ("actuation safety", criterion_actuation),
        ("real-time budget", criterion_realtime),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {}: {name} ({}) [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{}/9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
