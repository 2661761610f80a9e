//! End-to-end commands: synthesize a dataset, train the vocabulary and
//! classifier, segment a video and score a segmentation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    predict_proba, train_calibrated, LinearSvmModel, ModelDoc, PlattParams, SvmParams, VocabRef,
};
use crate::encode::Encoder;
use crate::error::{Error, Result};
use crate::features::{extract_video_features, ExtractionParams, FrameFeatures, HornSchunck};
use crate::json;
use crate::segment::{encode_windows, evaluate, integrate, plan_windows, write_segmentation, EvalReport};
use crate::synthgen::{segment_seed, stitch, ActionKind, StitchSpec, SYNTH_FRAME_RATE};
use crate::video_io::{load_labels, load_sequence, read_labels, write_labels, write_sequence, FrameSequence, LabelTrack};
use crate::vocab::{build_pool, gmm_fit, kmeans_fit, EmParams, VocabDoc, Vocabulary};

pub const VOCAB_FILE: &str = "vocab.json";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLATT_MAX_ITER: usize = 100;
const FV_POWER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Fv,
    Bow,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Fv => "fv",
            EncoderKind::Bow => "bow",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fv" => Ok(EncoderKind::Fv),
            "bow" => Ok(EncoderKind::Bow),
            other => Err(Error::arg(format!("unknown encoder `{other}` (expected fv or bow)"))),
        }
    }
}

/// Every tunable of the pipeline. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub window_seconds: f64,
    pub frame_sample_stride: usize,
    pub encoder: EncoderKind,
    pub fv_norm: bool,
    pub svm_c: f64,
    pub seed: u64,
    pub rescale: Option<(usize, usize)>,
    /// Total number of feature vectors sampled for vocabulary fitting.
    pub pool_cap: usize,
    pub em_max_iter: usize,
    /// Frame rate assumed for frame directories.
    pub frame_rate: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 40.0,
            k: 64,
            window_seconds: 1.0,
            frame_sample_stride: 2,
            encoder: EncoderKind::Fv,
            fv_norm: true,
            svm_c: 1.0,
            seed: 42,
            rescale: None,
            pool_cap: 100_000,
            em_max_iter: 100,
            frame_rate: SYNTH_FRAME_RATE,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = json::read_file(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau) {
            return Err(Error::arg("tau must be positive"));
        }
        if !positive(self.window_seconds) {
            return Err(Error::arg("window length must be positive"));
        }
        if !positive(self.svm_c) {
            return Err(Error::arg("SVM C must be positive"));
        }
        if !positive(self.frame_rate) {
            return Err(Error::arg("frame rate must be positive"));
        }
        if self.k == 0 || self.frame_sample_stride == 0 || self.pool_cap == 0 || self.em_max_iter == 0
        {
            return Err(Error::arg("K, frame stride, pool cap and EM iterations must be positive"));
        }
        if let Some((r, c)) = self.rescale {
            if r < 3 || c < 3 {
                return Err(Error::arg("rescale target must be at least 3x3"));
            }
        }
        Ok(())
    }

    pub fn extraction(&self) -> ExtractionParams {
        ExtractionParams {
            tau: self.tau,
            frame_stride: self.frame_sample_stride,
            flow: HornSchunck::default(),
        }
    }

    pub fn fv_power(&self) -> Option<f64> {
        (self.encoder == EncoderKind::Fv && self.fv_norm).then_some(FV_POWER)
    }

    /// Window length in frames.
    pub fn window_frames(&self) -> usize {
        ((self.window_seconds * self.frame_rate).round() as usize).max(1)
    }

    pub fn load_video(&self, dir: &Path) -> Result<FrameSequence<f64>> {
        let seq = load_sequence(dir, self.frame_rate)?;
        match self.rescale {
            Some((r, c)) => seq.rescale(r, c),
            None => Ok(seq),
        }
    }
}

/// One video of a dataset; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frames: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
    pub frame_rate: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let m: Self = json::read_file(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }
}

/// Video appearance for synthesized datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub rows: usize,
    pub cols: usize,
    pub noise_sigma: f64,
    pub min_duration: usize,
    pub max_duration: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            rows: 48,
            cols: 64,
            noise_sigma: 0.02,
            min_duration: 60,
            max_duration: 100,
        }
    }
}

/// Writes `n_train + n_test` stitched six-action videos, their label files
/// and a manifest under `out_dir`.
pub fn cmd_synth(
    out_dir: &Path,
    n_train: usize,
    n_test: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Manifest> {
    if n_train == 0 {
        return Err(Error::arg("at least one training video is required"));
    }
    if opts.min_duration > opts.max_duration {
        return Err(Error::arg("minimum segment duration exceeds maximum"));
    }
    let mut manifest = Manifest {
        train: Vec::new(),
        test: Vec::new(),
        class_names: ActionKind::names(),
        frame_rate: SYNTH_FRAME_RATE,
    };
    for (split, count) in [("train", n_train), ("test", n_test)] {
        let split_seed = segment_seed(seed, usize::from(split == "test"));
        let split_dir = out_dir.join(split);
        fs::create_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
        for i in 0..count {
            let spec = StitchSpec::alternating(
                opts.min_duration..=opts.max_duration,
                opts.noise_sigma,
                segment_seed(split_seed, i),
            )?;
            let (seq, track) = stitch::<f64>(&spec, opts.rows, opts.cols)?;
            let name = format!("video_{i:03}");
            write_sequence(&seq, &split_dir.join(&name))?;
            write_labels(&track, &split_dir.join(format!("{name}.csv")))?;
            let entry = ManifestEntry {
                frames: format!("{split}/{name}"),
                labels: format!("{split}/{name}.csv"),
            };
            if split == "train" {
                manifest.train.push(entry);
            } else {
                manifest.test.push(entry);
            }
        }
    }
    json::write_file(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads every video of a split with labels re-expressed against `class_names`.
fn load_split(
    entries: &[ManifestEntry],
    base: &Path,
    class_names: &mut Vec<String>,
    config: &PipelineConfig,
) -> Result<Vec<(FrameSequence<f64>, LabelTrack)>> {
    entries
        .iter()
        .map(|e| {
            let seq = config.load_video(&base.join(&e.frames))?;
            let track = load_labels(&base.join(&e.labels), seq.len())?.remap(class_names);
            Ok((seq, track))
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub class_names: Vec<String>,
    pub samples: usize,
    pub pool_size: usize,
    pub dim: usize,
}

/// Fits the vocabulary on features pooled across training actions, encodes
/// every single-action training segment and trains the calibrated classifier.
///
/// Segments are cut into consecutive chunks one window long (a shorter
/// remainder joins the last chunk), and each chunk is one training sample.
pub fn cmd_train(manifest_path: &Path, config: &PipelineConfig, out_dir: &Path) -> Result<TrainSummary> {
    config.validate()?;
    let (manifest, base) = Manifest::load(manifest_path)?;
    let mut names = manifest.class_names.clone();
    let videos = load_split(&manifest.train, &base, &mut names, config)?;
    if videos.is_empty() {
        return Err(Error::arg("manifest lists no training videos"));
    }

    // keep only classes that occur in training, in manifest order
    let mut present = vec![false; names.len()];
    for (_, track) in &videos {
        for &l in track.labels() {
            present[l] = true;
        }
    }
    let class_names: Vec<String> =
        names.iter().zip(&present).filter(|(_, &p)| p).map(|(n, _)| n.clone()).collect();
    if class_names.len() < 2 {
        return Err(Error::arg("training data must contain at least two classes"));
    }
    let reindex: Vec<Option<usize>> = present
        .iter()
        .scan(0, |next, &p| {
            Some(p.then(|| {
                *next += 1;
                *next - 1
            }))
        })
        .collect();

    let params = config.extraction();
    let features: Vec<Vec<FrameFeatures<f64>>> = videos
        .iter()
        .map(|(seq, _)| extract_video_features(seq, &params))
        .collect::<Result<_>>()?;

    let mut by_action: BTreeMap<String, Vec<&[f64; 14]>> = BTreeMap::new();
    for ((_, track), feats) in videos.iter().zip(&features) {
        for f in feats {
            let name = track.name_of(f.frame_index - 1);
            by_action.entry(name.to_string()).or_default().extend(f.vectors.iter());
        }
    }
    let per_action_cap = config.pool_cap.div_ceil(class_names.len());
    let pool = build_pool(&by_action, per_action_cap, config.seed)?;
    let vocab = match config.encoder {
        EncoderKind::Fv => {
            let em = EmParams {
                max_iter: config.em_max_iter,
                ..EmParams::default()
            };
            Vocabulary::Gmm(gmm_fit(&pool, config.k, config.seed, em)?.vocab)
        }
        EncoderKind::Bow => Vocabulary::Codebook(kmeans_fit(&pool, config.k, config.seed)?.codebook),
    };
    let encoder = Encoder::new(vocab, config.fv_power())?;

    let chunk = config.window_frames();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<usize> = Vec::new();
    for ((_, track), feats) in videos.iter().zip(&features) {
        for (start, end, label) in track.runs() {
            let n_chunks = ((end - start) / chunk).max(1);
            for c in 0..n_chunks {
                let lo = start + c * chunk;
                let hi = if c + 1 == n_chunks { end } else { lo + chunk };
                let mut acc = encoder.empty();
                for f in feats.iter().filter(|f| f.frame_index > lo && f.frame_index <= hi) {
                    acc.merge(&encoder.accumulate(&f.vectors)?);
                }
                if acc.count() == 0 {
                    continue;
                }
                xs.push(encoder.finish(&acc)?);
                ys.push(reindex[label].expect("label present in training"));
            }
        }
    }

    let svm = SvmParams {
        c: config.svm_c,
        seed: config.seed,
        ..SvmParams::default()
    };
    let (model, platt) = train_calibrated(&xs, &ys, class_names.len(), &svm, PLATT_MAX_ITER)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let vocab_path = out_dir.join(VOCAB_FILE);
    json::write_file(&vocab_path, &encoder.vocab().to_doc())?;
    let bytes = fs::read(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab_ref = VocabRef {
        encoder: config.encoder.name().to_string(),
        k: encoder.vocab().k(),
        d: encoder.vocab().dim(),
        fv_power: config.fv_power(),
        digest: sha256_hex(&bytes),
    };
    let doc = ModelDoc::new(&model, &platt, class_names.clone(), vocab_ref);
    json::write_file(&out_dir.join(MODEL_FILE), &doc)?;
    Ok(TrainSummary {
        class_names,
        samples: xs.len(),
        pool_size: pool.len(),
        dim: model.dim(),
    })
}

/// A loaded, mutually consistent vocabulary and classifier.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub encoder: Encoder<f64>,
    pub model: LinearSvmModel<f64>,
    pub platt: PlattParams<f64>,
    pub class_names: Vec<String>,
}

impl Artifacts {
    /// Loads both files and checks them against each other and the config.
    pub fn load(vocab_path: &Path, model_path: &Path, config: &PipelineConfig) -> Result<Self> {
        let bytes = fs::read(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let doc: VocabDoc = serde_json::from_slice(&bytes)?;
        let vocab = Vocabulary::from_doc(&doc)?;
        let model_doc: ModelDoc = json::read_file(model_path)?;
        let r = &model_doc.vocab_ref;
        let incompatible = |what: String| Err(Error::Compatibility(what));
        if r.digest != sha256_hex(&bytes) {
            return incompatible("model was trained against a different vocabulary file".into());
        }
        let kind = match vocab {
            Vocabulary::Gmm(_) => EncoderKind::Fv,
            Vocabulary::Codebook(_) => EncoderKind::Bow,
        };
        if r.encoder != kind.name() || kind != config.encoder {
            return incompatible(format!(
                "encoder mismatch: model `{}`, vocabulary `{}`, config `{}`",
                r.encoder,
                kind.name(),
                config.encoder.name()
            ));
        }
        if r.k != vocab.k() || r.k != config.k || r.d != vocab.dim() {
            return incompatible(format!(
                "vocabulary size mismatch: model K={}, vocabulary K={}, config K={}",
                r.k,
                vocab.k(),
                config.k
            ));
        }
        if r.fv_power != config.fv_power() {
            return incompatible("Fisher vector normalization differs from the model".into());
        }
        let encoder = Encoder::new(vocab, r.fv_power)?;
        let (model, platt) = model_doc.to_model::<f64>()?;
        if model.dim() != encoder.output_dim() {
            return incompatible(format!(
                "model dimension {} differs from encoding dimension {}",
                model.dim(),
                encoder.output_dim()
            ));
        }
        Ok(Self {
            encoder,
            model,
            platt,
            class_names: model_doc.class_names,
        })
    }
}

/// Per-frame labels and the winning class's share of the accumulated probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub track: LabelTrack,
    pub max_prob: Vec<f64>,
}

pub fn segment_sequence(
    seq: &FrameSequence<f64>,
    artifacts: &Artifacts,
    config: &PipelineConfig,
) -> Result<Segmentation> {
    let feats = extract_video_features(seq, &config.extraction())?;
    let plan = plan_windows(seq.len(), seq.frame_rate(), config.window_seconds)?;
    let codes = encode_windows(&plan, &feats, &artifacts.encoder)?;
    let probs: Vec<Option<Vec<f64>>> = codes
        .iter()
        .map(|c| {
            c.as_ref()
                .map(|v| predict_proba(&artifacts.model, &artifacts.platt, v))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let integrated = integrate(&probs, &plan, artifacts.class_names.len())?;
    Ok(Segmentation {
        max_prob: integrated.max_prob(),
        track: LabelTrack::new(integrated.labels, artifacts.class_names.clone())?,
    })
}

/// Labels every frame of the video in `video_dir` and writes the
/// `frame,label,maxprob` CSV.
pub fn cmd_segment(
    video_dir: &Path,
    vocab_path: &Path,
    model_path: &Path,
    config: &PipelineConfig,
    out_csv: &Path,
) -> Result<Segmentation> {
    config.validate()?;
    let artifacts = Artifacts::load(vocab_path, model_path, config)?;
    let seq = config.load_video(video_dir)?;
    let seg = segment_sequence(&seq, &artifacts, config)?;
    write_segmentation(out_csv, seg.track.labels(), seg.track.class_names(), &seg.max_prob)?;
    Ok(seg)
}

/// Scores a predicted label file against ground truth and writes the report.
pub fn cmd_eval(pred_csv: &Path, truth_csv: &Path, out_json: Option<&Path>) -> Result<EvalReport> {
    let truth = read_labels(truth_csv)?;
    let pred = read_labels(pred_csv)?;
    let mut names = truth.class_names().to_vec();
    let pred = pred.remap(&mut names);
    let truth = truth.remap(&mut names);
    let report = evaluate(&pred, &truth)?;
    if let Some(p) = out_json {
        json::write_file(p, &report)?;
    }
    Ok(report)
}

/// Pooled frame accuracy of the trained artifacts over a manifest's test split.
pub fn test_split_accuracy(
    manifest_path: &Path,
    artifacts: &Artifacts,
    config: &PipelineConfig,
) -> Result<f64> {
    let (manifest, base) = Manifest::load(manifest_path)?;
    let mut names = artifacts.class_names.clone();
    let videos = load_split(&manifest.test, &base, &mut names, config)?;
    let (mut hits, mut total) = (0usize, 0usize);
    for (seq, truth) in &videos {
        let seg = segment_sequence(seq, artifacts, config)?;
        let pred = seg.track.remap(&mut names);
        hits += pred.labels().iter().zip(truth.labels()).filter(|(a, b)| a == b).count();
        total += truth.len();
    }
    if total == 0 {
        return Err(Error::arg("manifest lists no test frames"));
    }
    Ok(hits as f64 / total as f64)
}
