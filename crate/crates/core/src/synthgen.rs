//! Synthetic labeled action clips: a textured blob moving over a faint
//! textured background, and stitched multi-action sequences.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::video_io::{Frame, FrameSequence, LabelTrack};

pub const SYNTH_FRAME_RATE: f64 = 25.0;
/// Period in frames of the oscillating kinds.
pub const OSCILLATION_PERIOD: usize = 24;
pub const MIN_SIDE: usize = 32;
pub const MIN_DURATION: usize = 8;
pub const MAX_NOISE: f64 = 0.1;

const FLICKER_PERIOD: usize = 8;
const BLOB_RADIUS: f64 = 9.0;
const OSC_AMPLITUDE: f64 = 4.0;
const MAX_DRIFT_SPEED: f64 = 0.8;
const STRIPE_PERIOD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    OscillateHorizontal,
    OscillateVertical,
    ExpandContract,
    DriftRight,
    DriftLeft,
    Flicker,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::OscillateHorizontal,
        ActionKind::OscillateVertical,
        ActionKind::ExpandContract,
        ActionKind::DriftRight,
        ActionKind::DriftLeft,
        ActionKind::Flicker,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::OscillateHorizontal => "oscillate_horizontal",
            ActionKind::OscillateVertical => "oscillate_vertical",
            ActionKind::ExpandContract => "expand_contract",
            ActionKind::DriftRight => "drift_right",
            ActionKind::DriftLeft => "drift_left",
            ActionKind::Flicker => "flicker",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn id(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    /// Kinds are split into two groups of three for alternating stitching.
    pub fn family(self) -> usize {
        usize::from(self.id() >= 3)
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|k| k.name().to_string()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub duration_frames: usize,
    pub noise_sigma: f64,
}

impl ActionSpec {
    pub fn new(kind: ActionKind, duration_frames: usize, noise_sigma: f64) -> Result<Self> {
        let s = Self {
            kind,
            duration_frames,
            noise_sigma,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.duration_frames < MIN_DURATION {
            return Err(Error::arg(format!(
                "clip duration {} is below {MIN_DURATION} frames",
                self.duration_frames
            )));
        }
        if !(0.0..=MAX_NOISE).contains(&self.noise_sigma) {
            return Err(Error::arg(format!(
                "noise sigma {} outside [0, {MAX_NOISE}]",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchSpec {
    pub segments: Vec<ActionSpec>,
    pub seed: u64,
}

impl StitchSpec {
    /// All six kinds once each, alternating between the two families,
    /// with durations drawn uniformly from `durations`.
    pub fn alternating(
        durations: std::ops::RangeInclusive<usize>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut groups: [Vec<ActionKind>; 2] = [
            ActionKind::ALL[..3].to_vec(),
            ActionKind::ALL[3..].to_vec(),
        ];
        groups[0].shuffle(&mut rng);
        groups[1].shuffle(&mut rng);
        let first = rng.random_range(0..2usize);
        let mut segments = Vec::with_capacity(6);
        for i in 0..6 {
            let kind = groups[(first + i) % 2][i / 2];
            let d = rng.random_range(durations.clone());
            segments.push(ActionSpec::new(kind, d, noise_sigma)?);
        }
        Ok(Self {
            segments,
            seed: rng.random(),
        })
    }
}

/// Per-clip random appearance, fixed for the whole clip.
struct Scene {
    background: Vec<(f64, f64, f64, f64)>,
    texture_phase: (f64, f64),
    motion_phase: f64,
    jitter: (f64, f64),
}

impl Scene {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let background = (0..4)
            .map(|_| {
                let wavelength = rng.random_range(10.0..24.0);
                let angle: f64 = rng.random_range(0.0..TAU);
                let k = TAU / wavelength;
                (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..TAU), 0.012)
            })
            .collect();
        Self {
            background,
            texture_phase: (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)),
            motion_phase: rng.random_range(0.0..TAU),
            jitter: (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        }
    }

    fn background(&self, r: f64, c: f64) -> f64 {
        0.15 + self
            .background
            .iter()
            .map(|&(kx, ky, p, a)| a * (kx * c + ky * r + p).sin())
            .sum::<f64>()
    }
}

/// Blob placement for one frame.
struct Pose {
    row: f64,
    col: f64,
    scale: f64,
    level: f64,
    contrast: f64,
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn pose(kind: ActionKind, t: usize, duration: usize, rows: usize, cols: usize, s: &Scene) -> Pose {
    let cr = (rows as f64 - 1.0) / 2.0 + s.jitter.0;
    let cc = (cols as f64 - 1.0) / 2.0 + s.jitter.1;
    let osc = (TAU * t as f64 / OSCILLATION_PERIOD as f64 + s.motion_phase).sin();
    let mut p = Pose {
        row: cr,
        col: cc,
        scale: 1.0,
        level: 0.55,
        contrast: 0.35,
    };
    match kind {
        ActionKind::OscillateHorizontal => p.col += OSC_AMPLITUDE * osc,
        ActionKind::OscillateVertical => p.row += OSC_AMPLITUDE * osc,
        ActionKind::ExpandContract => {
            p.scale = 1.0 + 0.3 * osc;
            p.contrast = 0.45;
        }
        ActionKind::DriftRight | ActionKind::DriftLeft => {
            let margin = BLOB_RADIUS + 3.0;
            let travel = cols as f64 - 1.0 - 2.0 * margin;
            let speed = (travel / (duration - 1) as f64).min(MAX_DRIFT_SPEED);
            let offset = speed * (t as f64 - (duration - 1) as f64 / 2.0);
            p.col = (cols as f64 - 1.0) / 2.0
                + if kind == ActionKind::DriftRight { offset } else { -offset };
        }
        ActionKind::Flicker => {
            let f = (TAU * t as f64 / FLICKER_PERIOD as f64 + s.motion_phase).sin();
            p.level = 0.5 + 0.15 * f;
            p.contrast = 0.22 + 0.08 * f;
        }
    }
    p
}

fn texture(kind: ActionKind, dr: f64, dc: f64, s: &Scene) -> f64 {
    let (pa, pb) = s.texture_phase;
    let k = TAU / STRIPE_PERIOD;
    match kind {
        ActionKind::OscillateHorizontal => (k * dc + pa).sin(),
        ActionKind::OscillateVertical => (k * dr + pa).sin(),
        ActionKind::ExpandContract => (TAU / 4.5 * (dr * dr + dc * dc).sqrt() + pa).cos(),
        ActionKind::DriftRight | ActionKind::DriftLeft => {
            let k = TAU / 7.0;
            (k * dc + pa).sin() * (k * dr + pb).sin() * 1.4
        }
        ActionKind::Flicker => {
            let k = TAU / 8.0;
            ((k * (dc + dr) + pa).sin() + (k * (dc - dr) + pb).sin()) * 0.6
        }
    }
}

fn render<T: Real>(
    kind: ActionKind,
    pose: &Pose,
    scene: &Scene,
    rows: usize,
    cols: usize,
    noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>,
) -> Result<Frame<T>> {
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (rf, cf) = (r as f64, c as f64);
            let dr = (rf - pose.row) / pose.scale;
            let dc = (cf - pose.col) / pose.scale;
            let rho = (dr * dr + dc * dc).sqrt();
            let mask = 1.0 - smoothstep(BLOB_RADIUS - 1.5, BLOB_RADIUS + 0.5, rho);
            let fg = pose.level + pose.contrast * texture(kind, dr, dc, scene).clamp(-1.0, 1.0);
            let bg = scene.background(rf, cf);
            values.push(bg + mask * (fg - bg));
        }
    }
    if let Some((dist, rng)) = noise {
        for v in &mut values {
            *v += dist.sample(rng);
        }
    }
    Frame::new(
        rows,
        cols,
        values.into_iter().map(|v| T::lit(v.clamp(0.0, 1.0))).collect(),
    )
}

/// Renders one single-action clip at the synthetic frame rate.
pub fn generate_clip<T: Real>(
    spec: &ActionSpec,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<FrameSequence<T>> {
    spec.validate()?;
    if rows < MIN_SIDE || cols < MIN_SIDE {
        return Err(Error::arg(format!(
            "synthetic frames must be at least {MIN_SIDE}x{MIN_SIDE}, got {rows}x{cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::sample(&mut rng);
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::arg(e.to_string()))?)
    } else {
        None
    };
    let frames = (0..spec.duration_frames)
        .map(|t| {
            let p = pose(spec.kind, t, spec.duration_frames, rows, cols, &scene);
            render(spec.kind, &p, &scene, rows, cols, noise.as_ref().map(|n| (n, &mut rng)))
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, SYNTH_FRAME_RATE)
}

/// Seed used for segment `index` of a stitched sequence.
pub fn segment_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Concatenates the clips of every segment. Labels index [`ActionKind::ALL`].
pub fn stitch<T: Real>(
    spec: &StitchSpec,
    rows: usize,
    cols: usize,
) -> Result<(FrameSequence<T>, LabelTrack)> {
    if spec.segments.len() < 2 {
        return Err(Error::arg("a stitched sequence needs at least two segments"));
    }
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for (i, seg) in spec.segments.iter().enumerate() {
        let clip = generate_clip::<T>(seg, rows, cols, segment_seed(spec.seed, i))?;
        frames.extend(clip.frames().iter().cloned());
        labels.extend(std::iter::repeat_n(seg.kind.id(), seg.duration_frames));
    }
    Ok((
        FrameSequence::new(frames, SYNTH_FRAME_RATE)?,
        LabelTrack::new(labels, ActionKind::names())?,
    ))
}
