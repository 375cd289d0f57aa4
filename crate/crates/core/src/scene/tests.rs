use super::*;
use crate::localize::{estimate_tdoa, TdoaOptions, DEFAULT_ARRAY_SIDE};

fn square() -> MicArrayGeometry {
    MicArrayGeometry::default_square()
}

fn noise_scene(position: Point) -> SceneSpec {
    SceneSpec::new(square(), 0.25, 16_000)
        .with_source(SourceSpec {
            position,
            signal: SignalKind::WhiteNoise,
            level: 1.0,
        })
        .with_seed(11)
}

#[test]
fn equidistant_source_gives_identical_channels() {
    let (buf, _) = render_scene(&noise_scene([0.0, 0.0, 1.0])).unwrap();
    for m in 1..4 {
        let diff = buf
            .channel(0)
            .iter()
            .zip(buf.channel(m))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "channel {m}: {diff}");
    }
}

#[test]
fn delays_match_hand_computed_paths() {
    let spec = SceneSpec::new(square(), 0.1, 16_000).with_source(SourceSpec::polar(
        &square(),
        2.0,
        45.0,
        SignalKind::Tone { freq_hz: 440.0 },
    ));
    let (_, truth) = render_scene(&spec).unwrap();
    let h = DEFAULT_ARRAY_SIDE / 2.0;
    // mic 0 sits on the 45° ray, mic 2 opposite, mics 1 and 3 perpendicular
    let along = 2.0_f64.sqrt() * h;
    let side = (4.0 + 2.0 * h * h).sqrt();
    let expected = [(2.0 - along), side, (2.0 + along), side].map(|d| d / 343.0);
    for (got, want) in truth.sources[0].delays_s.iter().zip(expected) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
    assert!((truth.sources[0].azimuth_deg - 45.0).abs() < 1e-9);
    assert!((truth.sources[0].distance_m - 2.0).abs() < 1e-12);
    for (g, d) in truth.sources[0].gains.iter().zip(expected) {
        assert!((g * d * 343.0 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn noise_hits_requested_snr() {
    let geom = square();
    let clean_spec = SceneSpec::new(geom.clone(), 1.0, 16_000)
        .with_source(SourceSpec::polar(&geom, 1.5, 30.0, SignalKind::Tone { freq_hz: 600.0 }))
        .with_seed(3);
    let (clean, _) = render_scene(&clean_spec).unwrap();
    let (noisy, _) = render_scene(&clean_spec.clone().with_noise(10.0)).unwrap();
    for m in 0..4 {
        let s: f64 = clean.channel(m).iter().map(|v| v * v).sum();
        let n: f64 = noisy
            .channel(m)
            .iter()
            .zip(clean.channel(m))
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let snr = 10.0 * (s / n).log10();
        assert!((snr - 10.0).abs() < 0.5, "channel {m}: {snr}");
    }
}

#[test]
fn rendering_is_deterministic() {
    let spec = noise_scene([1.0, -0.5, 0.0]).with_noise(5.0);
    let (a, ta) = render_scene(&spec).unwrap();
    let (b, tb) = render_scene(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let (c, _) = render_scene(&spec.clone().with_seed(12)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn delays_approach_plane_wave_as_distance_grows() {
    let g = square();
    let az = 70.0_f64.to_radians();
    let u = [az.cos(), az.sin(), 0.0];
    let mut last = f64::INFINITY;
    for k in 0..8 {
        let r = 0.2 * 2f64.powi(k);
        let spec = SceneSpec::new(g.clone(), 0.01, 16_000).with_source(SourceSpec::polar(
            &g,
            r,
            70.0,
            SignalKind::WhiteNoise,
        ));
        let truth = GroundTruth::from_spec(&spec).tdoa(0);
        let gap = truth
            .pairs
            .iter()
            .map(|p| (p.delay_s - g.plane_wave_delay(&u, p.i, p.j)).abs())
            .fold(0.0, f64::max);
        assert!(gap < last, "r = {r}: {gap} !< {last}");
        last = gap;
    }
}

#[test]
fn localizer_recovers_rendered_delays() {
    let g = square();
    for (r, az) in [(1.0, 0.0), (2.0, 135.0), (0.5, 250.0), (3.0, 310.0)] {
        let spec = noise_scene(SourceSpec::polar(&g, r, az, SignalKind::WhiteNoise).position);
        let (buf, truth) = render_scene(&spec).unwrap();
        let est = estimate_tdoa(&buf, &g, TdoaOptions::default()).unwrap();
        for (e, t) in est.pairs.iter().zip(truth.tdoa(0).pairs) {
            assert!(
                (e.delay_s - t.delay_s).abs() < 1.0 / 16_000.0,
                "{r} m {az}°: pair ({}, {})",
                t.i,
                t.j
            );
        }
    }
}

#[test]
fn fractional_delay_matches_analytic_shift() {
    let n = 256;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).sin())
        .collect();
    let y = fractional_delay(&x, 2.3, n);
    for (i, v) in y.iter().enumerate() {
        let want = (2.0 * std::f64::consts::PI * 5.0 * (i as f64 - 2.3) / n as f64).sin();
        assert!((v - want).abs() < 1e-12);
    }
    let imp: Vec<f64> = (0..16).map(|i| if i == 3 { 1.0 } else { 0.0 }).collect();
    let shifted = fractional_delay(&imp, 4.0, 16);
    for (i, v) in shifted.iter().enumerate() {
        assert!((v - if i == 7 { 1.0 } else { 0.0 }).abs() < 1e-12);
    }
}

#[test]
fn tone_path_agrees_with_spectral_path() {
    // a tone with a whole number of cycles is periodic, so circular delay is exact
    let dir = tempfile::tempdir().unwrap();
    let fs = 16_000;
    let n = 1600;
    let f = 500.0;
    let tone: Vec<f64> = (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / fs as f64).sin())
        .collect();
    let path = dir.path().join("tone.wav");
    write_wav(&path, &AudioBuffer::mono(tone, fs).unwrap(), WavEncoding::Float32).unwrap();
    let g = square();
    let pos = SourceSpec::polar(&g, 1.2, 80.0, SignalKind::WhiteNoise).position;
    let wav_spec = SceneSpec::new(g.clone(), 0.1, fs).with_source(SourceSpec {
        position: pos,
        signal: SignalKind::Wav { path },
        level: 2.0,
    });
    let tone_spec = SceneSpec::new(g, 0.1, fs).with_source(SourceSpec {
        position: pos,
        signal: SignalKind::Tone { freq_hz: f },
        level: 1.0,
    });
    let (a, _) = render_scene(&wav_spec).unwrap();
    let (b, _) = render_scene(&tone_spec).unwrap();
    // the clip edges ring as 1/distance after a fractional shift, so compare
    // away from them
    for m in 0..4 {
        for i in 200..n - 200 {
            let (x, y) = (a.channel(m)[i], b.channel(m)[i]);
            assert!((x - y).abs() < 1e-3, "mic {m} sample {i}: {x} vs {y}");
        }
    }
}

#[test]
fn rejects_bad_specs() {
    let g = square();
    let at_mic = SceneSpec::new(g.clone(), 1.0, 16_000).with_source(SourceSpec {
        position: *g.position(2),
        signal: SignalKind::WhiteNoise,
        level: 1.0,
    });
    assert!(matches!(
        render_scene(&at_mic),
        Err(SceneError::CoLocated { source_index: 0, mic: 2 })
    ));
    assert!(render_scene(&SceneSpec::new(g.clone(), 0.0, 16_000)).is_err());
    let above_nyquist = SceneSpec::new(g.clone(), 1.0, 16_000).with_source(SourceSpec::polar(
        &g,
        1.0,
        0.0,
        SignalKind::Tone { freq_hz: 9000.0 },
    ));
    assert!(render_scene(&above_nyquist).is_err());
    let negative = SceneSpec::new(g.clone(), 1.0, 16_000)
        .with_source(SourceSpec::polar(&g, 1.0, 0.0, SignalKind::WhiteNoise).with_level(-1.0));
    assert!(render_scene(&negative).is_err());
}

#[test]
fn scene_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(
        dir.path().join("clip.wav"),
        &AudioBuffer::mono(vec![0.1; 800], 16_000).unwrap(),
        WavEncoding::Pcm16,
    )
    .unwrap();
    let text = r#"
        duration_s = 0.05
        seed = 4
        noise_snr_db = 20.0

        [[sources]]
        position = [1.0, 1.0]
        signal = { kind = "tone", freq_hz = 440.0 }

        [[sources]]
        position = [-2.0, 0.5, 0.3]
        level = 0.5
        signal = { kind = "wav", path = "clip.wav" }
    "#;
    let scene_path = dir.path().join("scene.toml");
    std::fs::write(&scene_path, text).unwrap();
    let spec = SceneSpec::load(&scene_path).unwrap();
    assert_eq!(spec.sample_rate, 16_000);
    assert_eq!(spec.geometry, square());
    assert_eq!(spec.sources[0].position, [1.0, 1.0, 0.0]);
    let (buf, truth) = render_scene(&spec).unwrap();
    assert_eq!(buf.num_channels(), 4);
    assert_eq!(buf.num_frames(), 800);
    let out = dir.path().join("capture.wav");
    let sidecar = write_scene(&out, &buf, &truth).unwrap();
    assert_eq!(sidecar, dir.path().join("capture.truth.json"));
    let back: GroundTruth = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!(back, truth);
    assert_eq!(read_wav(&out).unwrap().num_channels(), 4);

    let bad = "duration_s = 1.0\n[[sources]]\nposition = [1.0]\nsignal = { kind = \"white_noise\" }\n";
    assert!(SceneSpec::from_toml_str(bad).is_err());
}
