//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use actseg::classify::{predict_proba, scores_to_proba, LinearSvmModel, ModelDoc, PlattParams, VocabRef};
use actseg::encode::{fisher_encode, Encoder};
use actseg::features::{optical_flow, FEATURE_DIM};
use actseg::json;
use actseg::pipeline::*;
use actseg::segment::{integrate, WindowPlan};
use actseg::video_io::Frame;
use actseg::vocab::{gmm_fit, Codebook, EmParams, GmmVocabulary, Standardizer, TrainingPool, Vocabulary, VocabDoc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_gmm(rng: &mut ChaCha8Rng, k: usize, d: usize) -> GmmVocabulary<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    GmmVocabulary::new(
        raw.iter().map(|w| w / total).collect(),
        (0..k).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect(),
        (0..k).map(|_| (0..d).map(|_| rng.random_range(0.3..2.0)).collect()).collect(),
    )
    .unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect()).collect()
}

/// Posteriors by direct density evaluation, normalized with a max shift.
fn oracle_posterior(g: &GmmVocabulary<f64>, x: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = (0..g.k())
        .map(|k| {
            let mut l = g.weights[k].ln();
            for j in 0..x.len() {
                let v = g.vars[k][j];
                l += -0.5 * (2.0 * PI * v).ln() - (x[j] - g.means[k][j]).powi(2) / (2.0 * v);
            }
            l
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Double loop over components and features of the gradient formulas.
fn oracle_fisher(g: &GmmVocabulary<f64>, xs: &[Vec<f64>]) -> Vec<f64> {
    let (k, d, n) = (g.k(), g.dim(), xs.len() as f64);
    let mut mu = vec![0.0; k * d];
    let mut sig = vec![0.0; k * d];
    for x in xs {
        let gamma = oracle_posterior(g, x);
        for c in 0..k {
            for j in 0..d {
                let s = g.vars[c][j].sqrt();
                let z = (x[j] - g.means[c][j]) / s;
                mu[c * d + j] += gamma[c] * z / (n * g.weights[c].sqrt());
                sig[c * d + j] += gamma[c] * (z * z - 1.0) / (n * (2.0 * g.weights[c]).sqrt());
            }
        }
    }
    mu.extend(sig);
    mu
}

fn c1_dimensionality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = Vec::new();
    for (k, expect) in [(64, 1792), (128, 3584), (256, 7168)] {
        let g = random_gmm(&mut rng, k, FEATURE_DIM);
        let xs = random_points(&mut rng, 20, FEATURE_DIM, 2.0);
        let fv = fisher_encode(&g, &xs).map_err(|e| e.to_string())?;
        let enc = Encoder::new(Vocabulary::Gmm(g), Some(0.5)).map_err(|e| e.to_string())?;
        ensure(fv.values.len() == expect && enc.output_dim() == expect, || {
            format!("K={k}: length {} (expected {expect})", fv.values.len())
        })?;
        seen.push(fv.values.len());
    }
    Ok(format!("lengths {seen:?}"))
}

fn c2_fisher_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = rng.random_range(1..=8);
        let n = rng.random_range(1..=100);
        let g = random_gmm(&mut rng, k, FEATURE_DIM);
        let xs = random_points(&mut rng, n, FEATURE_DIM, 4.0);
        let fv = fisher_encode(&g, &xs).map_err(|e| e.to_string())?;
        let oracle = oracle_fisher(&g, &xs);
        for (a, b) in fv.values.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("max deviation {worst:.3e} over 50 instances"))
}

fn c3_analytic() -> Outcome {
    let d = FEATURE_DIM;
    let means: Vec<Vec<f64>> = (0..4).map(|k| vec![100.0 * k as f64; d]).collect();
    let g = GmmVocabulary::new(vec![0.25; 4], means.clone(), vec![vec![1.0; d]; 4])
        .map_err(|e| e.to_string())?;
    let target = 2;
    let fv = fisher_encode(&g, &[means[target].clone()]).map_err(|e| e.to_string())?;
    let mu = &fv.values[target * d..(target + 1) * d];
    let sig = &fv.values[4 * d + target * d..4 * d + (target + 1) * d];
    let max_mu = mu.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let max_sig_err = sig.iter().map(|v| (v + 1.41421).abs()).fold(0.0, f64::max);
    ensure(max_mu < 1e-6, || format!("|G_mu| up to {max_mu:.3e}"))?;
    ensure(max_sig_err <= 1e-4, || format!("G_sigma off by {max_sig_err:.3e}"))?;
    Ok(format!("max |G_mu| {max_mu:.1e}, G_sigma = {:.6}", sig[0]))
}

fn c4_expected_zero() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = random_gmm(&mut rng, 3, FEATURE_DIM);
    let xs: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            let u: f64 = rng.random();
            let mut c = 0;
            let mut acc = g.weights[0];
            while u > acc && c + 1 < g.k() {
                c += 1;
                acc += g.weights[c];
            }
            (0..FEATURE_DIM)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    g.means[c][j] + g.vars[c][j].sqrt() * z
                })
                .collect()
        })
        .collect();
    let fv = fisher_encode(&g, &xs).map_err(|e| e.to_string())?;
    let worst = fv.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    ensure(!fv.normalized && worst < 0.05, || format!("max |coordinate| {worst:.4}"))?;
    Ok(format!("max |coordinate| {worst:.4} over {} coordinates", fv.values.len()))
}

fn c5_posteriors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=16);
        let d = rng.random_range(1..=FEATURE_DIM);
        let g = random_gmm(&mut rng, k, d);
        let x = random_points(&mut rng, 1, d, 10.0).remove(0);
        let gamma = g.posterior(&x).map_err(|e| e.to_string())?;
        worst = worst.max((gamma.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= 1e-9, || format!("sum deviates by {worst:.3e}"))?;
    let g = GmmVocabulary::<f64>::new(vec![0.5, 0.5], vec![vec![0.0], vec![4.0]], vec![vec![1.0], vec![1.0]])
        .map_err(|e| e.to_string())?;
    let gamma = g.posterior(&[1.0]).map_err(|e| e.to_string())?;
    ensure((gamma[0] - 0.98201).abs() <= 1e-4, || format!("hand case gamma_1 = {}", gamma[0]))?;
    Ok(format!("max |sum - 1| {worst:.1e}; hand case gamma_1 = {:.5}", gamma[0]))
}

fn c6_em() -> Outcome {
    let mut worst_drop = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let k = rng.random_range(2..=6);
        let truth = random_gmm(&mut rng, k, 4);
        let pts: Vec<Vec<f64>> = (0..1500)
            .map(|i| {
                let c = i % k;
                (0..4)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        truth.means[c][j] + truth.vars[c][j].sqrt() * z
                    })
                    .collect()
            })
            .collect();
        let pool = TrainingPool::from_raw(&pts).map_err(|e| e.to_string())?;
        let fit = gmm_fit(&pool, k, seed, EmParams { max_iter: 60, rel_tol: 0.0 })
            .map_err(|e| e.to_string())?;
        for w in fit.log_likelihood.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    ensure(worst_drop <= 1e-8, || format!("log-likelihood dropped by {worst_drop:.3e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let normal = Normal::new(2.0, 3.0).unwrap();
    let pts: Vec<Vec<f64>> = (0..500).map(|_| (0..5).map(|_| normal.sample(&mut rng)).collect()).collect();
    let pool = TrainingPool::from_raw(&pts).map_err(|e| e.to_string())?;
    let fit = gmm_fit(&pool, 1, 3, EmParams::default()).map_err(|e| e.to_string())?;
    let n = pool.len() as f64;
    let mut worst = (fit.vocab.weights[0] - 1.0).abs();
    for j in 0..pool.dim() {
        let mean: f64 = pool.vectors.iter().map(|p| p[j]).sum::<f64>() / n;
        let var: f64 = pool.vectors.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        worst = worst.max((fit.vocab.means[0][j] - mean).abs());
        worst = worst.max((fit.vocab.vars[0][j] - var).abs());
    }
    ensure(worst <= 1e-10, || format!("K=1 deviates from closed form by {worst:.3e}"))?;
    Ok(format!("max drop {worst_drop:.1e} over 20 runs; K=1 deviation {worst:.1e}"))
}

fn c7_integration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(1..=150);
        let l = rng.random_range(1..=40);
        let a = rng.random_range(2..=6);
        let plan = WindowPlan::with_frames(t, l, 25.0).map_err(|e| e.to_string())?;
        let q: Vec<Option<Vec<f64>>> = (0..plan.len())
            .map(|_| Some((0..a).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let track = integrate(&q, &plan, a).map_err(|e| e.to_string())?;
        for frame in 1..=t {
            for c in 0..a {
                let mut sum = 0.0;
                for (s, w) in plan.windows.iter().enumerate() {
                    let indicator = frame >= w.start && frame < w.start + w.len;
                    if indicator {
                        sum += q[s].as_ref().unwrap()[c];
                    }
                }
                worst = worst.max((track.totals[frame - 1][c] - sum).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    let cov = WindowPlan::with_frames(5, 3, 25.0).map_err(|e| e.to_string())?.coverage();
    ensure(cov == vec![1, 2, 3, 2, 1], || format!("coverage {cov:?}"))?;
    Ok(format!("max deviation {worst:.1e}; coverage {cov:?}"))
}

fn c8_simplex() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = rng.random_range(2..=8);
        let dim = rng.random_range(1..=20);
        let model = LinearSvmModel::new(
            random_points(&mut rng, a, dim, 3.0),
            (0..a).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let platt = PlattParams {
            a: (0..a).map(|_| rng.random_range(-8.0..-0.1)).collect(),
            b: (0..a).map(|_| rng.random_range(-3.0..3.0)).collect(),
        };
        let x = random_points(&mut rng, 1, dim, 5.0).remove(0);
        let p = predict_proba(&model, &platt, &x).map_err(|e| e.to_string())?;
        ensure(p.iter().all(|v| (0.0..=1.0).contains(v)), || format!("entry outside [0,1]: {p:?}"))?;
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        let scores = model.scores(&x).map_err(|e| e.to_string())?;
        let sig: Vec<f64> =
            scores.iter().enumerate().map(|(l, s)| 1.0 / (1.0 + (platt.a[l] * s + platt.b[l]).exp())).collect();
        let arg = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        ensure(arg(&sig) == arg(&p), || format!("argmax changed: {sig:?} vs {p:?}"))?;
        ensure(scores_to_proba(&platt, &scores) == p, || "probabilities not a function of scores".into())?;
    }
    ensure(worst <= 1e-6, || format!("sum deviates by {worst:.3e}"))?;
    Ok(format!("max |sum - 1| {worst:.1e} over 1000 pairs; argmax preserved"))
}

/// Periodic white noise smoothed with a wrapped Gaussian, scaled to [0.1, 0.9].
fn periodic_texture(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..rows * cols).map(|_| rng.random()).collect();
    let sigma: f64 = 2.0;
    let radius = 6isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = (-radius..=radius)
                .map(|o| kernel[(o + radius) as usize] * noise[r * cols + wrap(c as isize + o, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = (-radius..=radius)
                .map(|o| kernel[(o + radius) as usize] * tmp[wrap(r as isize + o, rows) * cols + c])
                .sum();
        }
    }
    let lo = out.iter().cloned().fold(f64::MAX, f64::min);
    let hi = out.iter().cloned().fold(f64::MIN, f64::max);
    out.iter().map(|v| 0.1 + 0.8 * (v - lo) / (hi - lo)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c9_flow() -> Outcome {
    let (rows, cols) = (64, 64);
    let tex = periodic_texture(rows, cols, 9);
    let a = Frame::new(rows, cols, tex.clone()).map_err(|e| e.to_string())?;
    // content moves one pixel towards larger column indices
    let b = Frame::from_fn(rows, cols, |r, c| tex[r * cols + (c + cols - 1) % cols]).map_err(|e| e.to_string())?;
    let flow = optical_flow(&a, &b).map_err(|e| e.to_string())?;
    let margin = 8;
    let mut us = Vec::new();
    let mut vs = Vec::new();
    for r in margin..rows - margin {
        for c in margin..cols - margin {
            us.push(flow.u.get(r, c));
            vs.push(flow.v.get(r, c));
        }
    }
    let (mu, mv) = (median(us), median(vs));
    ensure((0.7..=1.3).contains(&mu) && (-0.3..=0.3).contains(&mv), || {
        format!("median flow ({mu:.3}, {mv:.3})")
    })?;
    let still = optical_flow(&a, &a).map_err(|e| e.to_string())?;
    let zero = still.u.data().iter().chain(still.v.data()).all(|&x| x == 0.0);
    ensure(zero, || "identical frames gave non-zero flow".into())?;
    Ok(format!("median interior flow ({mu:.3}, {mv:.3}); identical frames give zero flow"))
}

struct Benchmark {
    root: PathBuf,
    fv_accuracy: Option<f64>,
}

fn benchmark_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn train_and_score(root: &Path, encoder: EncoderKind, out: &str) -> Result<f64, String> {
    let cfg = PipelineConfig { encoder, ..PipelineConfig::default() };
    let manifest = root.join(MANIFEST_FILE);
    let dir = root.join(out);
    cmd_train(&manifest, &cfg, &dir).map_err(|e| e.to_string())?;
    let artifacts = Artifacts::load(&dir.join(VOCAB_FILE), &dir.join(MODEL_FILE), &cfg)
        .map_err(|e| e.to_string())?;
    test_split_accuracy(&manifest, &artifacts, &cfg).map_err(|e| e.to_string())
}

fn c10_end_to_end(bench: &mut Benchmark) -> Outcome {
    let _ = fs::remove_dir_all(&bench.root);
    let m = cmd_synth(&bench.root, 8, 4, 2024, &SynthOptions::default()).map_err(|e| e.to_string())?;
    ensure(m.class_names.len() == 6, || "expected six action kinds".into())?;
    let acc = train_and_score(&bench.root, EncoderKind::Fv, "fv")?;
    bench.fv_accuracy = Some(acc);
    ensure(acc >= 0.90, || format!("frame accuracy {acc:.4}"))?;
    Ok(format!("frame accuracy {acc:.4} (tau 40, K 64, L 1s)"))
}

fn c11_variant_order(bench: &Benchmark) -> Outcome {
    let fv = bench.fv_accuracy.ok_or("FV benchmark did not run")?;
    let bow = train_and_score(&bench.root, EncoderKind::Bow, "bow")?;
    ensure(fv >= bow, || format!("FV {fv:.4} < BoW {bow:.4}"))?;
    Ok(format!("FV {fv:.4} >= BoW {bow:.4}"))
}

fn c12_determinism(bench: &Benchmark) -> Outcome {
    let cfg = PipelineConfig::default();
    let manifest = bench.root.join(MANIFEST_FILE);
    let first = bench.root.join("fv");
    let second = bench.root.join("fv_again");
    cmd_train(&manifest, &cfg, &second).map_err(|e| e.to_string())?;
    for f in [VOCAB_FILE, MODEL_FILE] {
        let a = fs::read(first.join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    let video = bench.root.join("test/video_000");
    let mut csvs = Vec::new();
    for (i, dir) in [&first, &second].into_iter().enumerate() {
        let out = bench.root.join(format!("seg_{i}.csv"));
        cmd_segment(&video, &dir.join(VOCAB_FILE), &dir.join(MODEL_FILE), &cfg, &out)
            .map_err(|e| e.to_string())?;
        csvs.push(fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(csvs[0] == csvs[1], || "segmentation CSVs differ".into())?;
    Ok("vocab.json, model.json and segmentation CSV identical across runs".into())
}

fn c13_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dir = benchmark_root().join("round_trip");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let d = FEATURE_DIM;
    let standardizer = Standardizer {
        mean: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        std: (0..d).map(|_| rng.random_range(0.1..3.0)).collect(),
    };
    let mut g = random_gmm(&mut rng, 5, d);
    g.standardizer = standardizer.clone();
    let codebook = Codebook { centers: random_points(&mut rng, 7, d, 2.0), standardizer };
    let mut checked = 0;
    for (vocab, power, a) in [(Vocabulary::Gmm(g), Some(0.5), 4), (Vocabulary::Codebook(codebook), None, 3)] {
        let enc = Encoder::new(vocab.clone(), power).map_err(|e| e.to_string())?;
        let dim = enc.output_dim();
        let model = LinearSvmModel::new(
            random_points(&mut rng, a, dim, 1.0),
            (0..a).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let platt = PlattParams {
            a: (0..a).map(|_| rng.random_range(-5.0..-0.5)).collect(),
            b: (0..a).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let vpath = dir.join(VOCAB_FILE);
        let mpath = dir.join(MODEL_FILE);
        json::write_file(&vpath, &vocab.to_doc()).map_err(|e| e.to_string())?;
        let vocab_ref = VocabRef {
            encoder: if power.is_some() { "fv" } else { "bow" }.into(),
            k: vocab.k(),
            d,
            fv_power: power,
            digest: String::new(),
        };
        let names = (0..a).map(|i| format!("class_{i}")).collect();
        json::write_file(&mpath, &ModelDoc::new(&model, &platt, names, vocab_ref)).map_err(|e| e.to_string())?;

        let vdoc: VocabDoc = json::read_file(&vpath).map_err(|e| e.to_string())?;
        let vocab2 = Vocabulary::<f64>::from_doc(&vdoc).map_err(|e| e.to_string())?;
        ensure(vocab2 == vocab, || "vocabulary changed in round trip".into())?;
        let mdoc: ModelDoc = json::read_file(&mpath).map_err(|e| e.to_string())?;
        let (model2, platt2) = mdoc.to_model::<f64>().map_err(|e| e.to_string())?;
        let enc2 = Encoder::new(vocab2, power).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let n = rng.random_range(1..40);
            let feats: Vec<[f64; FEATURE_DIM]> =
                (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
            let p1 = predict_proba(&model, &platt, &enc.encode(&feats).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let p2 = predict_proba(&model2, &platt2, &enc2.encode(&feats).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            ensure(p1 == p2, || format!("prediction changed: {p1:?} vs {p2:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} predictions bit-identical after reload (GMM and codebook)"))
}

fn main() {
    let mut bench = Benchmark { root: benchmark_root().join("benchmark"), fv_accuracy: None };
    let mut failures = 0;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {id:>2} PASS  {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {msg} [{secs:.1}s]");
            }
        }
    };
    report(1, "Fisher vector dimensionality", &mut c1_dimensionality);
    report(2, "Fisher vector oracle equivalence", &mut c2_fisher_oracle);
    report(3, "Fisher vector analytic case", &mut c3_analytic);
    report(4, "expected-zero score", &mut c4_expected_zero);
    report(5, "posterior normalization", &mut c5_posteriors);
    report(6, "EM monotonicity", &mut c6_em);
    report(7, "integration oracle", &mut c7_integration);
    report(8, "probability simplex", &mut c8_simplex);
    report(9, "flow sanity", &mut c9_flow);
    report(10, "end-to-end synthetic Fisher pipeline", &mut || c10_end_to_end(&mut bench));
    report(11, "Fisher vs bag-of-words ordering", &mut || c11_variant_order(&bench));
    report(12, "determinism", &mut || c12_determinism(&bench));
    report(13, "serialization round trip", &mut c13_round_trip);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 13 acceptance criteria passed");
}
