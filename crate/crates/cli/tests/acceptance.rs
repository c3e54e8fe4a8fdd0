//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.
//!
//! Reference values come from brute-force oracles written here, not from
//! the library under test.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anomaly_cli::commands::{self, ModelKind, PipelinePaths};
use anomaly_cli::PipelineConfig;
use anomaly_core::dsp;
use anomaly_core::eval::{self, EvaluationReport};
use anomaly_core::features::{self, ClipFeatureExtractor, MfccConfig};
use anomaly_core::models::{feature_importance, train_forest, ForestParams};
use anomaly_core::preprocess::{self, SubtractionParams};
use anomaly_core::synthgen::{generate_clip, CorpusSpec};
use anomaly_core::{AudioBuffer, FeatureSchema, FeatureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn gaussian(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

// ---------------------------------------------------------------------------
// Brute-force MFCC oracle.

struct Oracle {
    sr: f64,
    frame_len: usize,
    hop: usize,
    n_fft: usize,
    n_mels: usize,
    n_coeffs: usize,
    pre: f64,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    bank: Vec<Vec<f64>>,
}

impl Oracle {
    fn new() -> Self {
        let (sr, n_fft, n_mels) = (16000.0, 512usize, 26usize);
        let cos_table = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).cos()).collect();
        let sin_table = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).sin()).collect();

        // Mel-spaced points between 0 Hz and Nyquist, mapped to FFT bins.
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel(sr / 2.0);
        let bins: Vec<usize> = (0..n_mels + 2)
            .map(|i| {
                let hz = inv(top * i as f64 / (n_mels + 1) as f64);
                (((n_fft + 1) as f64 * hz / sr).floor() as usize).min(n_fft / 2)
            })
            .collect();
        let bank = (0..n_mels)
            .map(|m| {
                let (l, c, r) = (bins[m] as f64, bins[m + 1] as f64, bins[m + 2] as f64);
                (0..=n_fft / 2)
                    .map(|k| {
                        let k = k as f64;
                        if k < l || k > r {
                            0.0
                        } else if k <= c {
                            (k - l) / (c - l)
                        } else {
                            (r - k) / (r - c)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            sr,
            frame_len: 400,
            hop: 160,
            n_fft,
            n_mels,
            n_coeffs: 13,
            pre: 0.97,
            cos_table,
            sin_table,
            bank,
        }
    }

    fn mfcc(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let y: Vec<f64> = (0..x.len())
            .map(|n| if n == 0 { x[0] } else { x[n] - self.pre * x[n - 1] })
            .collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start + self.frame_len <= y.len() {
            let frame: Vec<f64> = (0..self.frame_len)
                .map(|n| {
                    let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / self.frame_len as f64).cos();
                    y[start + n] * w
                })
                .collect();
            let power: Vec<f64> = (0..=self.n_fft / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in frame.iter().enumerate() {
                        let idx = (k * n) % self.n_fft;
                        re += v * self.cos_table[idx];
                        im -= v * self.sin_table[idx];
                    }
                    re * re + im * im
                })
                .collect();
            let loge: Vec<f64> = self
                .bank
                .iter()
                .map(|row| (row.iter().zip(&power).map(|(a, b)| a * b).sum::<f64>() + 1e-10).ln())
                .collect();
            let nm = self.n_mels as f64;
            let ceps = (0..self.n_coeffs)
                .map(|k| {
                    let s: f64 = (0..self.n_mels)
                        .map(|i| loge[i] * (PI * k as f64 * (i as f64 + 0.5) / nm).cos())
                        .sum();
                    s * if k == 0 { (1.0 / nm).sqrt() } else { (2.0 / nm).sqrt() }
                })
                .collect();
            out.push(ceps);
            start += self.hop;
        }
        out
    }
}

fn c1_mfcc_oracle() -> Outcome {
    let oracle = Oracle::new();
    let cfg = MfccConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(16000, &mut rng);
        let got = features::mfcc(&AudioBuffer::new(x.clone(), oracle.sr as u32), &cfg)
            .map_err(|e| e.to_string())?;
        let want = oracle.mfcc(&x);
        check(got.len() == want.len(), format!("seed {seed}: {} vs {} frames", got.len(), want.len()))?;
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max(max_abs_diff(g, w));
        }
    }
    check(worst <= 1e-6, format!("max abs diff {worst:e} > 1e-6"))?;
    Ok(format!("max abs diff {worst:.2e} over 10 clips"))
}

// ---------------------------------------------------------------------------

fn c2_dft() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n_fft = 512;
    let (mut parseval, mut linear, mut sym, mut round) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let len = rng.random_range(2..=n_fft);
        let x = uniform(len, &mut rng);
        let y = uniform(len, &mut rng);
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let xf = dsp::dft(&x, n_fft).map_err(|e| e.to_string())?;
        let yf = dsp::dft(&y, n_fft).map_err(|e| e.to_string())?;

        let time_e: f64 = x.iter().map(|v| v * v).sum();
        let freq_e: f64 = xf.iter().map(|c| c.norm_sqr()).sum::<f64>() / n_fft as f64;
        parseval = parseval.max((time_e - freq_e).abs() / time_e);

        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let mf = dsp::dft(&mix, n_fft).map_err(|e| e.to_string())?;
        for k in 0..n_fft {
            let want = xf[k] * a + yf[k] * b;
            linear = linear.max((mf[k] - want).norm());
        }
        for k in 1..n_fft {
            sym = sym.max((xf[k] - xf[n_fft - k].conj()).norm());
        }
        let back = dsp::idft(&xf).map_err(|e| e.to_string())?;
        for (n, c) in back.iter().enumerate() {
            let want = if n < len { x[n] } else { 0.0 };
            round = round.max((c.re - want).abs()).max(c.im.abs());
        }
    }
    check(parseval <= 1e-6, format!("Parseval rel err {parseval:e}"))?;
    check(linear <= 1e-9, format!("linearity err {linear:e}"))?;
    check(sym <= 1e-9, format!("conjugate symmetry err {sym:e}"))?;
    check(round <= 1e-9, format!("round-trip err {round:e}"))?;

    // cos(2 pi n / 8) has X[1] = X[7] = 4 and nothing elsewhere.
    let c: Vec<f64> = (0..8).map(|n| (2.0 * PI * n as f64 / 8.0).cos()).collect();
    let cf = dsp::dft(&c, 8).map_err(|e| e.to_string())?;
    let mut cos_err = 0.0f64;
    for (k, v) in cf.iter().enumerate() {
        let want = if k == 1 || k == 7 { 4.0 } else { 0.0 };
        cos_err = cos_err.max((v.re - want).abs()).max(v.im.abs());
    }
    let p = dsp::power_spectrum(&c, 8).map_err(|e| e.to_string())?;
    cos_err = cos_err.max((p[1] - 16.0).abs());
    check(cos_err <= 1e-9, format!("cosine case err {cos_err:e}"))?;
    Ok(format!(
        "parseval {parseval:.1e}, linearity {linear:.1e}, symmetry {sym:.1e}, round-trip {round:.1e}, cosine {cos_err:.1e}"
    ))
}

// ---------------------------------------------------------------------------

fn snr_db(clean: &[f64], observed: &[f64]) -> f64 {
    let s: f64 = clean.iter().map(|v| v * v).sum();
    let e: f64 = clean.iter().zip(observed).map(|(c, o)| (o - c) * (o - c)).sum();
    10.0 * (s / e).log10()
}

fn c3_spectral_subtraction() -> Outcome {
    let sr = 16000u32;
    let (lead, body) = (4000usize, 16000usize);
    let amp = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Tone power amp^2/2 equals noise power: 0 dB.
    let noise = gaussian(lead + body, amp / 2f64.sqrt(), &mut rng);
    let mut clean = vec![0.0; lead + body];
    for (n, c) in clean[lead..].iter_mut().enumerate() {
        *c = amp * (2.0 * PI * 1000.0 * n as f64 / sr as f64).sin();
    }
    let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, v)| c + v).collect();
    let buf = AudioBuffer::new(noisy.clone(), sr);
    let params = SubtractionParams {
        alpha: 2.0,
        beta: 0.01,
        n_fft: 512,
    };
    let profile = preprocess::estimate_noise_profile(&buf, 250.0, params.n_fft).map_err(|e| e.to_string())?;
    let mut floor_violations = 0usize;
    let mut frames = 0usize;
    let out = preprocess::spectral_subtract_observed(&buf, &profile, params, |before, after| {
        frames += 1;
        floor_violations += before
            .iter()
            .zip(after)
            .filter(|(m, o)| **o < params.beta * **m)
            .count();
    })
    .map_err(|e| e.to_string())?;
    let before = snr_db(&clean[lead..], &noisy[lead..]);
    let after = snr_db(&clean[lead..], &out.samples[lead..]);
    check(frames > 0, "no frames observed")?;
    check(floor_violations == 0, format!("{floor_violations} bins below the floor"))?;
    check(after - before >= 5.0, format!("SNR {before:.2} -> {after:.2} dB"))?;
    Ok(format!(
        "SNR {before:.2} -> {after:.2} dB (+{:.2}), floor held on {frames} frames",
        after - before
    ))
}

// ---------------------------------------------------------------------------

fn c4_nlms() -> Outcome {
    let n = 5000;
    let mut results = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let h = gaussian(8, 0.5, &mut rng);
        let r = gaussian(n, 1.0, &mut rng);
        // d[t] = sum_j h[j] r[t - j]
        let d: Vec<f64> = (0..n)
            .map(|t| (0..8).filter(|&j| j <= t).map(|j| h[j] * r[t - j]).sum())
            .collect();
        let (_, state) = preprocess::nlms_cancel(&AudioBuffer::new(d, 16000), &AudioBuffer::new(r, 16000), 0.5, 8)
            .map_err(|e| e.to_string())?;
        let err: f64 = state.weights.iter().zip(&h).map(|(w, t)| (w - t).powi(2)).sum();
        let norm: f64 = h.iter().map(|t| t * t).sum();
        // Exact convergence gives err = 0; report it as -300 dB.
        results.push(10.0 * (err / norm).max(1e-30).log10());
    }
    results.sort_by(f64::total_cmp);
    let median = (results[9] + results[10]) / 2.0;
    check(median < -20.0, format!("median misalignment {median:.1} dB"))?;
    Ok(format!("median misalignment {median:.1} dB over 20 seeds"))
}

// ---------------------------------------------------------------------------

fn run_pipeline(cfg: &PipelineConfig, dir: &Path, threads: usize) -> Result<Vec<EvaluationReport>, String> {
    commands::with_threads(threads, || commands::pipeline(cfg, dir)).map_err(|e| e.to_string())
}

fn c5_end_to_end(dir: &Path) -> Outcome {
    let cfg = PipelineConfig::default();
    check(cfg.n_per_class == 100 && cfg.seed == 42 && cfg.n_trees == 100, "unexpected defaults")?;
    check((cfg.test_frac - 0.3).abs() < 1e-12, "test fraction is not 0.3")?;
    let start = Instant::now();
    let reports = run_pipeline(&cfg, dir, 1)?;
    let elapsed = start.elapsed();
    let acc: BTreeMap<&str, f64> = reports.iter().map(|r| (r.model_kind.as_str(), r.metrics.accuracy)).collect();
    let (forest, svm, ens) = (acc["forest"], acc["svm"], acc["ensemble"]);

    let p = PipelinePaths { root: dir.to_path_buf() };
    let doc = anomaly_core::models::ModelDocument::load(p.model(ModelKind::Forest)).map_err(|e| e.to_string())?;
    let mtry = doc.model.forest().map(|f| f.mtry).unwrap_or(0);
    check(mtry == 5, format!("forest mtry {mtry}, expected round(sqrt(30)) = 5"))?;
    check(forest >= 0.95, format!("forest accuracy {forest:.4} < 0.95"))?;
    check(ens >= forest.max(svm) - 0.02, format!("ensemble {ens:.4} vs forest {forest:.4} / svm {svm:.4}"))?;
    check(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;

    let text = fs::read_to_string(p.report(ModelKind::Ensemble)).map_err(|e| e.to_string())?;
    for key in ["\"confusion_matrix\"", "\"per_class\"", "\"precision\"", "\"recall\"", "\"importance_top10\"", "\"config\""] {
        check(text.contains(key), format!("report lacks {key}"))?;
    }
    let report = eval::read_report(p.report(ModelKind::Ensemble)).map_err(|e| e.to_string())?;
    let top = report.importance_top10.ok_or("no importances in report")?;
    check(top.entries.len() == 10, format!("{} importance entries", top.entries.len()))?;
    check(report.confusion.total() == 60, format!("test set of {}", report.confusion.total()))?;
    check(report.metrics.per_class.len() == 2, "per-class metrics missing")?;
    Ok(format!(
        "forest {forest:.4}, svm {svm:.4}, ensemble {ens:.4}, {:.1} s single-threaded",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------

fn c6_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_identity = 0.0f64;
    for trial in 0..1000 {
        let k = [2usize, 3, 4][trial % 3];
        let n = rng.random_range(1..=60);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let cm = eval::confusion_matrix(&truth, &pred, &names).map_err(|e| e.to_string())?;
        let m = eval::metrics(&cm).map_err(|e| e.to_string())?;

        let count = |t: usize, p: usize| truth.iter().zip(&pred).filter(|(a, b)| **a == t && **b == p).count();
        let correct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        let mut prec_sum = 0.0;
        let mut rec_sum = 0.0;
        for c in 0..k {
            for p in 0..k {
                check(cm.counts[c][p] as usize == count(c, p), format!("trial {trial}: cell ({c},{p})"))?;
            }
            let predicted = pred.iter().filter(|&&p| p == c).count();
            let actual = truth.iter().filter(|&&t| t == c).count();
            let tp = count(c, c);
            let prec = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let rec = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
            let pc = &m.per_class[c];
            check(pc.precision == prec && pc.recall == rec, format!("trial {trial}: class {c} precision/recall"))?;
            check(
                pc.precision_undefined == (predicted == 0) && pc.recall_undefined == (actual == 0),
                format!("trial {trial}: class {c} undefined flags"),
            )?;
            check(pc.support as usize == actual, format!("trial {trial}: support"))?;
            prec_sum += prec;
            rec_sum += rec;
        }
        let acc = correct as f64 / n as f64;
        check(m.accuracy == acc, format!("trial {trial}: accuracy"))?;
        check((m.macro_precision - prec_sum / k as f64).abs() < 1e-15, format!("trial {trial}: macro precision"))?;
        check((m.macro_recall - rec_sum / k as f64).abs() < 1e-15, format!("trial {trial}: macro recall"))?;
        let weighted: f64 = (0..k)
            .map(|c| {
                let row: u64 = cm.counts[c].iter().sum();
                m.per_class[c].recall * row as f64 / n as f64
            })
            .sum();
        worst_identity = worst_identity.max((m.accuracy - weighted).abs());
    }
    check(worst_identity <= 1e-12, format!("weighted-recall identity off by {worst_identity:e}"))?;
    Ok(format!("1000 trials, identity error {worst_identity:.1e}"))
}

// ---------------------------------------------------------------------------

fn tree_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c7_determinism(single: &Path, scratch: &Path) -> Outcome {
    let cfg = PipelineConfig::default();
    let a = scratch.join("a");
    let b = scratch.join("b");
    run_pipeline(&cfg, &a, 0)?;
    run_pipeline(&cfg, &b, 0)?;
    let files = tree_files(single);
    for other in [&a, &b] {
        check(tree_files(other) == files, "runs produced different file sets")?;
    }
    let mut compared = 0;
    for f in &files {
        let reference = fs::read(single.join(f)).unwrap();
        for other in [&a, &b] {
            check(fs::read(other.join(f)).unwrap() == reference, format!("{} differs", f.display()))?;
        }
        compared += 1;
    }
    let must_have = ["reports/forest.json", "models/ensemble.json", "features.csv", "test.csv"];
    for m in must_have {
        check(files.iter().any(|f| f == Path::new(m)), format!("{m} missing"))?;
    }
    Ok(format!("{compared} files byte-identical across 3 runs (one single-threaded)"))
}

// ---------------------------------------------------------------------------

fn c8_importance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = 30;
    let names: Vec<String> = (0..p).map(|i| format!("f{i:02}")).collect();
    let mut rows = Vec::new();
    for _ in 0..200 {
        let x = uniform(p, &mut rng);
        let label = usize::from(x[0] > 0.1);
        rows.push((x, label));
    }
    let data = FeatureSet::from_rows(FeatureSchema::new(names), vec!["lo".into(), "hi".into()], rows);
    let forest = train_forest(&data, ForestParams::default()).map_err(|e| e.to_string())?;
    let ranking = feature_importance(&forest);
    let total: f64 = ranking.entries.iter().map(|e| e.1).sum();
    let (first, share) = ranking.entries[0].clone();
    check(first == "f00", format!("top feature is {first}"))?;
    check((total - 1.0).abs() <= 1e-9, format!("importances sum to {total}"))?;
    check(ranking.entries.iter().all(|e| e.1 >= 0.0), "negative importance")?;
    Ok(format!("f00 ranks first with {share:.3}, sum {total:.12}"))
}

// ---------------------------------------------------------------------------

/// Clips for the gain test. `full_band` clips keep every mel band far above
/// the log floor, where the MFCC shift is exactly `ln g^2` on coefficient 1.
fn loudness_clips(spec: &CorpusSpec) -> Vec<(AudioBuffer, bool)> {
    let mut clips = Vec::new();
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let noise = uniform(16000, &mut rng);
        let f = rng.random_range(100.0..4000.0);
        let samples = noise
            .iter()
            .enumerate()
            .map(|(n, v)| 0.2 * v + 0.3 * (2.0 * PI * f * n as f64 / 16000.0).sin())
            .collect();
        clips.push((AudioBuffer::new(samples, 16000), true));
    }
    for index in [0usize, 1, 150, 199] {
        let base = generate_clip(spec, index);
        let x = AudioBuffer::new(base.samples.iter().map(|s| s * 0.5).collect(), base.sample_rate);
        clips.push((x, false));
    }
    clips
}

fn c9_loudness() -> Outcome {
    let cfg = MfccConfig::default();
    let spec = CorpusSpec::default();
    let extractor = ClipFeatureExtractor::new(cfg.clone(), spec.sample_rate).map_err(|e| e.to_string())?;
    let (mut mfcc_err, mut feat_err) = (0.0f64, 0.0f64);
    let mut c1_shift = Vec::new();
    for (x, full_band) in loudness_clips(&spec) {
        let m0 = features::mfcc(&x, &cfg).map_err(|e| e.to_string())?;
        let f0 = extractor.extract(&x, "x", None).map_err(|e| e.to_string())?;
        for g in [0.5, 2.0] {
            let y = AudioBuffer::new(x.samples.iter().map(|s| s * g).collect(), x.sample_rate);
            if full_band {
                let m1 = features::mfcc(&y, &cfg).map_err(|e| e.to_string())?;
                for (a, b) in m0.iter().zip(&m1) {
                    mfcc_err = mfcc_err.max(max_abs_diff(&a[1..], &b[1..]));
                    c1_shift.push(b[0] - a[0]);
                }
            }
            let f1 = extractor.extract(&y, "y", None).map_err(|e| e.to_string())?;
            for name in ["ZCR_mean", "ZCR_std", "Centroid_mean", "Centroid_std"] {
                let i = f0.schema.index_of(name).unwrap();
                feat_err = feat_err.max((f0.values[i] - f1.values[i]).abs());
            }
            // Per-frame values as well.
            let raw0 = dsp::frame_signal(&x, cfg.frame_len, cfg.hop, false).map_err(|e| e.to_string())?;
            let raw1 = dsp::frame_signal(&y, cfg.frame_len, cfg.hop, false).map_err(|e| e.to_string())?;
            let win0 = dsp::frame_signal(&x, cfg.frame_len, cfg.hop, true).map_err(|e| e.to_string())?;
            let win1 = dsp::frame_signal(&y, cfg.frame_len, cfg.hop, true).map_err(|e| e.to_string())?;
            for i in 0..raw0.num_frames {
                let z0 = features::zero_crossing_rate(raw0.frame(i)).map_err(|e| e.to_string())?;
                let z1 = features::zero_crossing_rate(raw1.frame(i)).map_err(|e| e.to_string())?;
                let p0 = dsp::power_spectrum(win0.frame(i), cfg.n_fft).map_err(|e| e.to_string())?;
                let p1 = dsp::power_spectrum(win1.frame(i), cfg.n_fft).map_err(|e| e.to_string())?;
                let c0 = features::spectral_centroid(&p0, spec.sample_rate, cfg.n_fft).hz;
                let c1 = features::spectral_centroid(&p1, spec.sample_rate, cfg.n_fft).hz;
                feat_err = feat_err.max((z0 - z1).abs()).max((c0 - c1).abs());
            }
        }
    }
    check(mfcc_err <= 1e-6, format!("MFCC 2..13 moved by {mfcc_err:e}"))?;
    check(feat_err <= 1e-9, format!("ZCR/centroid moved by {feat_err:e}"))?;
    // Coefficient 1 moves by sqrt(n_mels) * ln(g^2).
    let expected = (cfg.n_mels as f64).sqrt() * 4f64.ln();
    let c1_err = c1_shift.iter().map(|d| (d.abs() - expected).abs()).fold(0.0, f64::max);
    check(c1_err <= 1e-6, format!("coefficient 1 shift off by {c1_err:e}"))?;
    Ok(format!("MFCC 2..13 max diff {mfcc_err:.1e}, ZCR/centroid max diff {feat_err:.1e}"))
}

// ---------------------------------------------------------------------------

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let single = tmp.path().join("single");
    let criteria: Vec<Criterion> = vec![
        ("1 MFCC oracle equivalence", Box::new(c1_mfcc_oracle)),
        ("2 DFT conformance", Box::new(c2_dft)),
        ("3 spectral subtraction efficacy", Box::new(c3_spectral_subtraction)),
        ("4 NLMS convergence", Box::new(c4_nlms)),
        ("5 end-to-end separability", Box::new(|| c5_end_to_end(&single))),
        ("6 metrics correctness", Box::new(c6_metrics)),
        ("7 determinism", Box::new(|| c7_determinism(&single, tmp.path()))),
        ("8 importance sanity", Box::new(c8_importance)),
        ("9 loudness invariance", Box::new(c9_loudness)),
    ];
    let limits = [30u64, 10, 10, 10, 120, 60, 600, 60, 60];
    let mut failed = 0;
    for ((name, run), limit) in criteria.iter().zip(limits) {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|msg| {
            if secs < limit as f64 {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {secs:.1} s, limit {limit} s"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} ({secs:.2} s)"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} ({secs:.2} s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
