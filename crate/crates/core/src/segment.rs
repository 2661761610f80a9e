//! Overlapping temporal windows, per-frame integration of window class
//! probabilities, and frame-level evaluation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{Accumulator, Encoder};
use crate::error::{Error, Result};
use crate::features::FrameFeatures;
use crate::scalar::{argmax, CompensatedSum, Real};
use crate::video_io::{csv_field, LabelTrack};

/// Frames `start ..= start + len - 1` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalWindow {
    pub start: usize,
    pub len: usize,
}

impl TemporalWindow {
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t <= self.end()
    }
}

/// Windows one frame apart covering a video of `total_frames` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub windows: Vec<TemporalWindow>,
    pub l_seconds: f64,
    pub l_frames: usize,
    pub total_frames: usize,
}

impl WindowPlan {
    /// Plan with the window length given directly in frames, clamped to `[1, T]`.
    pub fn with_frames(total_frames: usize, l_frames: usize, frame_rate: f64) -> Result<Self> {
        if total_frames == 0 || l_frames == 0 {
            return Err(Error::arg("video length and window length must be positive"));
        }
        let l = l_frames.min(total_frames);
        let windows = (1..=total_frames - l + 1)
            .map(|start| TemporalWindow { start, len: l })
            .collect();
        Ok(Self {
            windows,
            l_seconds: l as f64 / frame_rate,
            l_frames: l,
            total_frames,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Number of windows containing each frame.
    pub fn coverage(&self) -> Vec<usize> {
        let mut c = vec![0; self.total_frames];
        for w in &self.windows {
            for t in w.start..=w.end() {
                c[t - 1] += 1;
            }
        }
        c
    }

    /// Indices (0-based) of the windows containing frame `t` (1-based).
    fn covering(&self, t: usize) -> std::ops::Range<usize> {
        let first = t.saturating_sub(self.l_frames - 1).max(1);
        let last = t.min(self.windows.len());
        first - 1..last
    }
}

/// Windows of `round(l_seconds * frame_rate)` frames.
pub fn plan_windows(total_frames: usize, frame_rate: f64, l_seconds: f64) -> Result<WindowPlan> {
    if !(frame_rate > 0.0 && frame_rate.is_finite()) || !(l_seconds > 0.0 && l_seconds.is_finite())
    {
        return Err(Error::arg("frame rate and window length must be positive"));
    }
    let l_frames = ((l_seconds * frame_rate).round() as usize).max(1);
    let mut plan = WindowPlan::with_frames(total_frames, l_frames, frame_rate)?;
    plan.l_seconds = l_seconds;
    Ok(plan)
}

/// Encodes one window by pooling the features of every sampled frame inside
/// it. `None` marks a window without any features.
pub fn encode_window<T: Real>(
    window: &TemporalWindow,
    frames: &[FrameFeatures<T>],
    encoder: &Encoder<T>,
) -> Result<Option<Vec<T>>> {
    let pooled: Vec<&[T]> = frames
        .iter()
        .filter(|f| window.contains(f.frame_index))
        .flat_map(|f| f.vectors.iter().map(|v| &v[..]))
        .collect();
    if pooled.is_empty() {
        return Ok(None);
    }
    encoder.encode(&pooled).map(Some)
}

/// Encodes every window of a plan. Each frame's features are accumulated
/// once and merged into all windows that contain the frame.
pub fn encode_windows<T: Real>(
    plan: &WindowPlan,
    frames: &[FrameFeatures<T>],
    encoder: &Encoder<T>,
) -> Result<Vec<Option<Vec<T>>>> {
    let per_frame: Vec<(usize, Accumulator<T>)> = frames
        .par_iter()
        .map(|f| Ok((f.frame_index, encoder.accumulate(&f.vectors)?)))
        .collect::<Result<_>>()?;
    plan.windows
        .par_iter()
        .map(|w| {
            let mut acc = encoder.empty();
            for (_, a) in per_frame.iter().filter(|(t, _)| w.contains(*t)) {
                acc.merge(a);
            }
            if acc.count() == 0 {
                Ok(None)
            } else {
                encoder.finish(&acc).map(Some)
            }
        })
        .collect()
}

/// Per-frame accumulated class probabilities and the resulting labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTrack<T> {
    /// Sum of the probability vectors of all windows containing each frame.
    pub totals: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    /// Whether any non-empty window contains the frame.
    pub covered: Vec<bool>,
}

impl<T: Real> ProbTrack<T> {
    /// Share of the winning class in each frame's total, 0 for uncovered frames.
    pub fn max_prob(&self) -> Vec<T> {
        self.totals
            .iter()
            .zip(&self.labels)
            .map(|(q, &l)| {
                let s: T = q.iter().copied().sum();
                if s > T::zero() {
                    q[l] / s
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

/// Sums window probability vectors per frame and labels each frame with its
/// argmax (ties to the lowest class). Empty windows contribute nothing;
/// frames left without any contribution copy the label of the nearest
/// covered frame, preferring the earlier one.
pub fn integrate<T: Real>(
    probs: &[Option<Vec<T>>],
    plan: &WindowPlan,
    classes: usize,
) -> Result<ProbTrack<T>> {
    if probs.len() != plan.len() {
        return Err(Error::LengthMismatch {
            expected: plan.len(),
            found: probs.len(),
        });
    }
    if probs.iter().flatten().any(|q| q.len() != classes) {
        return Err(Error::arg("probability vector length differs from class count"));
    }
    let n = plan.total_frames;
    let mut totals = Vec::with_capacity(n);
    let mut covered = Vec::with_capacity(n);
    for t in 1..=n {
        let mut acc = vec![CompensatedSum::new(); classes];
        let mut any = false;
        for q in probs[plan.covering(t)].iter().flatten() {
            any = true;
            for (a, &p) in acc.iter_mut().zip(q) {
                a.add(p);
            }
        }
        totals.push(acc.iter().map(CompensatedSum::value).collect::<Vec<T>>());
        covered.push(any);
    }
    let mut labels: Vec<usize> = totals.iter().map(|q| argmax(q)).collect();

    let covered_idx: Vec<usize> = (0..n).filter(|&t| covered[t]).collect();
    if covered_idx.len() < n {
        for t in 0..n {
            if covered[t] {
                continue;
            }
            let after = covered_idx.partition_point(|&c| c < t);
            let before = after.checked_sub(1).map(|i| covered_idx[i]);
            let next = covered_idx.get(after).copied();
            labels[t] = match (before, next) {
                (Some(b), Some(a)) => {
                    if t - b <= a - t {
                        labels[b]
                    } else {
                        labels[a]
                    }
                }
                (Some(b), None) => labels[b],
                (None, Some(a)) => labels[a],
                (None, None) => 0,
            };
        }
    }
    Ok(ProbTrack {
        totals,
        labels,
        covered,
    })
}

/// Frame accuracy and row-normalized confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frame_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[i][j]`: fraction of true class `i` frames labeled `j`.
    pub confusion: Vec<Vec<f64>>,
    pub class_names: Vec<String>,
}

pub fn evaluate(pred: &LabelTrack, truth: &LabelTrack) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.class_names() != truth.class_names() {
        return Err(Error::arg("predicted and true tracks use different class lists"));
    }
    if truth.is_empty() {
        return Err(Error::arg("cannot evaluate empty tracks"));
    }
    let a = truth.class_names().len();
    let mut counts = vec![vec![0usize; a]; a];
    let mut matched = 0;
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        counts[t][p] += 1;
        matched += usize::from(p == t);
    }
    let confusion: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter()
                .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(EvalReport {
        frame_accuracy: matched as f64 / truth.len() as f64,
        per_class_accuracy: (0..a).map(|i| confusion[i][i]).collect(),
        confusion,
        class_names: truth.class_names().to_vec(),
    })
}

/// Writes `frame,label,maxprob` rows.
pub fn write_segmentation<T: Real>(
    path: &Path,
    labels: &[usize],
    class_names: &[String],
    max_prob: &[T],
) -> Result<()> {
    if labels.len() != max_prob.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: max_prob.len(),
        });
    }
    let mut out = String::from("frame,label,maxprob\n");
    for (t, (&l, &p)) in labels.iter().zip(max_prob).enumerate() {
        out.push_str(&format!(
            "{},{},{:.6}\n",
            t + 1,
            csv_field(&class_names[l]),
            p.widen()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::fisher_encode;
    use crate::features::FEATURE_DIM;
    use crate::vocab::{GmmVocabulary, Standardizer, Vocabulary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plan_cases() {
        let p = WindowPlan::with_frames(5, 3, 25.0).unwrap();
        let spans: Vec<(usize, usize)> = p.windows.iter().map(|w| (w.start, w.end())).collect();
        assert_eq!(spans, vec![(1, 3), (2, 4), (3, 5)]);
        assert_eq!(p.coverage(), vec![1, 2, 3, 2, 1]);

        let p = WindowPlan::with_frames(2, 10, 25.0).unwrap();
        assert_eq!(p.windows, vec![TemporalWindow { start: 1, len: 2 }]);

        let p = plan_windows(100, 25.0, 1.0).unwrap();
        assert_eq!(p.l_frames, 25);
        assert_eq!(p.len(), 76);
        assert_eq!(plan_windows(100, 25.0, 0.01).unwrap().l_frames, 1);
        assert!(plan_windows(0, 25.0, 1.0).is_err());
        assert!(plan_windows(10, 25.0, 0.0).is_err());
        assert!(plan_windows(10, -1.0, 1.0).is_err());
    }

    #[test]
    fn plan_covers_every_frame() {
        for t in 1..40 {
            for l in 1..45 {
                let p = WindowPlan::with_frames(t, l, 25.0).unwrap();
                assert_eq!(p.len(), (t as isize - l as isize + 1).max(1) as usize);
                assert!(p.coverage().iter().all(|&c| c >= 1));
                assert!(p.windows.iter().all(|w| w.len == l.min(t)));
                for f in 1..=t {
                    let r = p.covering(f);
                    let brute: Vec<usize> =
                        (0..p.len()).filter(|&s| p.windows[s].contains(f)).collect();
                    assert_eq!(r.collect::<Vec<_>>(), brute);
                }
            }
        }
    }

    #[test]
    fn hand_integration() {
        let plan = WindowPlan::with_frames(5, 3, 25.0).unwrap();
        let q = vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0]), Some(vec![0.0, 1.0])];
        let track = integrate(&q, &plan, 2).unwrap();
        assert_eq!(track.totals[2], vec![1.0, 2.0]);
        assert_eq!(track.totals[0], vec![1.0, 0.0]);
        assert_eq!(track.labels, vec![0, 0, 1, 1, 1]);
        // frame 2: [1, 1] -> tie to lowest index
        assert_eq!(track.totals[1], vec![1.0, 1.0]);

        let same = vec![Some(vec![0.2, 0.5, 0.3]); 3];
        assert_eq!(integrate(&same, &plan, 3).unwrap().labels, vec![1; 5]);
        assert!(integrate(&same[..2], &plan, 3).is_err());
    }

    #[test]
    fn empty_windows_fill_from_nearest_frame() {
        let plan = WindowPlan::with_frames(8, 2, 25.0).unwrap();
        // windows: 1-2,2-3,...,7-8
        let q = vec![
            None,
            None,
            Some(vec![0.9, 0.1]),
            None,
            None,
            None,
            Some(vec![0.2, 0.8]),
        ];
        let t = integrate(&q, &plan, 2).unwrap();
        assert_eq!(t.covered, vec![false, false, true, true, false, false, true, true]);
        // frame 5 is nearer frame 4, frame 6 nearer frame 7
        assert_eq!(t.labels, vec![0, 0, 0, 0, 0, 1, 1, 1]);
        // equidistant gap resolves to the earlier frame
        let unit = WindowPlan::with_frames(5, 1, 25.0).unwrap();
        let q = vec![Some(vec![0.9, 0.1]), None, None, None, Some(vec![0.2, 0.8])];
        assert_eq!(integrate(&q, &unit, 2).unwrap().labels, vec![0, 0, 0, 1, 1]);
        let all_empty = vec![None::<Vec<f64>>; 7];
        assert_eq!(integrate(&all_empty, &plan, 2).unwrap().labels, vec![0; 8]);
    }

    #[test]
    fn integration_matches_indicator_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let l = rng.random_range(1..40);
            let a = rng.random_range(1..7);
            let plan = WindowPlan::with_frames(n, l, 25.0).unwrap();
            let q: Vec<Option<Vec<f64>>> = (0..plan.len())
                .map(|_| {
                    let v: Vec<f64> = (0..a).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = v.iter().sum();
                    Some(v.into_iter().map(|x| x / s).collect())
                })
                .collect();
            let track = integrate(&q, &plan, a).unwrap();
            for t in 1..=n {
                let mut oracle = vec![0.0; a];
                for (s, w) in plan.windows.iter().enumerate() {
                    if t >= w.start && t < w.start + w.len {
                        for c in 0..a {
                            oracle[c] += q[s].as_ref().unwrap()[c];
                        }
                    }
                }
                for c in 0..a {
                    assert!((track.totals[t - 1][c] - oracle[c]).abs() < 1e-12);
                }
                let mut best = 0;
                for c in 1..a {
                    if oracle[c] > oracle[best] {
                        best = c;
                    }
                }
                assert_eq!(track.labels[t - 1], best);
            }
            // common positive scaling keeps labels
            let scaled: Vec<Option<Vec<f64>>> = q
                .iter()
                .map(|v| v.as_ref().map(|v| v.iter().map(|x| x * 3.5).collect()))
                .collect();
            assert_eq!(integrate(&scaled, &plan, a).unwrap().labels, track.labels);
        }
    }

    #[test]
    fn evaluation_cases() {
        let names = vec!["a".to_string(), "b".to_string()];
        let truth = LabelTrack::new(vec![0, 0, 1, 1], names.clone()).unwrap();
        let r = evaluate(&truth, &truth).unwrap();
        assert_eq!(r.frame_accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let pred = LabelTrack::new(vec![1, 0, 0, 1], names.clone()).unwrap();
        let r = evaluate(&pred, &truth).unwrap();
        assert_eq!(r.frame_accuracy, 0.5);
        assert_eq!(r.confusion, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);

        let short = LabelTrack::new(vec![0], names.clone()).unwrap();
        assert!(matches!(evaluate(&short, &truth), Err(Error::LengthMismatch { .. })));

        let three = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let truth3 = LabelTrack::new(vec![0, 0, 1], three.clone()).unwrap();
        let pred3 = LabelTrack::new(vec![0, 1, 1], three).unwrap();
        let r = evaluate(&pred3, &truth3).unwrap();
        assert_eq!(r.confusion[2], vec![0.0, 0.0, 0.0]);
        assert_eq!(r.per_class_accuracy, vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn evaluation_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        for _ in 0..20 {
            let n = rng.random_range(1..300);
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let r = evaluate(
                &LabelTrack::new(p.clone(), names.clone()).unwrap(),
                &LabelTrack::new(t.clone(), names.clone()).unwrap(),
            )
            .unwrap();
            let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
            assert_eq!(r.frame_accuracy, hits as f64 / n as f64);
            for i in 0..4 {
                let row_n = t.iter().filter(|&&x| x == i).count();
                let s: f64 = r.confusion[i].iter().sum();
                if row_n == 0 {
                    assert_eq!(s, 0.0);
                } else {
                    assert!((s - 1.0).abs() < 1e-9);
                    for j in 0..4 {
                        let c = p.iter().zip(&t).filter(|(a, b)| **a == j && **b == i).count();
                        assert_eq!(r.confusion[i][j], c as f64 / row_n as f64);
                    }
                }
            }
        }
    }

    fn frame_feats(index: usize, n: usize, rng: &mut ChaCha8Rng) -> FrameFeatures<f64> {
        FrameFeatures {
            frame_index: index,
            vectors: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
                .collect(),
        }
    }

    fn small_encoder(rng: &mut ChaCha8Rng) -> Encoder<f64> {
        let k = 3;
        let gmm = GmmVocabulary::with_standardizer(
            vec![0.2, 0.3, 0.5],
            (0..k).map(|_| (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            vec![vec![1.0; FEATURE_DIM]; k],
            Standardizer { mean: vec![0.1; FEATURE_DIM], std: vec![1.3; FEATURE_DIM] },
        )
        .unwrap();
        Encoder::new(Vocabulary::Gmm(gmm), None).unwrap()
    }

    #[test]
    fn window_pooling() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let enc = small_encoder(&mut rng);
        let frames = vec![
            frame_feats(1, 5, &mut rng),
            frame_feats(3, 0, &mut rng),
            frame_feats(5, 7, &mut rng),
            frame_feats(7, 4, &mut rng),
        ];
        let w = TemporalWindow { start: 1, len: 5 };
        let v = encode_window(&w, &frames, &enc).unwrap().unwrap();
        let pooled: Vec<Vec<f64>> = frames[..3]
            .iter()
            .flat_map(|f| f.vectors.iter())
            .map(|v| match enc.vocab() {
                Vocabulary::Gmm(g) => g.standardizer.apply(v),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(pooled.len(), 12);
        let Vocabulary::Gmm(g) = enc.vocab() else { unreachable!() };
        let oracle = fisher_encode(g, &pooled).unwrap();
        for (a, b) in v.iter().zip(&oracle.values) {
            assert!((a - b).abs() < 1e-12);
        }

        let empty = [frame_feats(3, 0, &mut rng)];
        assert_eq!(encode_window(&TemporalWindow { start: 2, len: 3 }, &empty, &enc).unwrap(), None);
    }

    #[test]
    fn shared_accumulation_matches_direct_pooling() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let enc = small_encoder(&mut rng);
        let frames: Vec<_> = (0..15)
            .map(|i| {
                let n = if i % 4 == 1 { 0 } else { rng.random_range(0..6) };
                frame_feats(2 * i + 1, n, &mut rng)
            })
            .collect();
        let plan = WindowPlan::with_frames(30, 6, 25.0).unwrap();
        let fast = encode_windows(&plan, &frames, &enc).unwrap();
        for (w, f) in plan.windows.iter().zip(&fast) {
            let direct = encode_window(w, &frames, &enc).unwrap();
            match (direct, f) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    for (x, y) in a.iter().zip(b) {
                        assert!((x - y).abs() < 1e-10);
                    }
                }
                other => panic!("empty marker disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn segmentation_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("seg.csv");
        write_segmentation(&p, &[0, 1], &["walk".into(), "run".into()], &[0.75f64, 0.5]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "frame,label,maxprob\n1,walk,0.750000\n2,run,0.500000\n"
        );
        let back = crate::video_io::load_labels(&p, 2).unwrap();
        assert_eq!(back.labels(), &[0, 1]);
    }

    proptest::proptest! {
        #[test]
        fn totals_follow_coverage(
            n in 1usize..120,
            l in 1usize..30,
            a in 1usize..6,
            scale in 0.01f64..100.0,
            seed in 0u64..1000,
        ) {
            let plan = WindowPlan::with_frames(n, l, 25.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q: Vec<Option<Vec<f64>>> = (0..plan.len())
                .map(|_| {
                    let v: Vec<f64> = (0..a).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let s: f64 = v.iter().sum();
                    Some(v.into_iter().map(|x| x / s).collect())
                })
                .collect();
            let track = integrate(&q, &plan, a).unwrap();
            for (q_t, &c) in track.totals.iter().zip(&plan.coverage()) {
                proptest::prop_assert!((q_t.iter().sum::<f64>() - c as f64).abs() < 1e-9);
            }
            proptest::prop_assert!(track.max_prob().iter().all(|&p| p > 0.0 && p <= 1.0 + 1e-12));
            let scaled: Vec<Option<Vec<f64>>> = q
                .iter()
                .map(|v| v.as_ref().map(|v| v.iter().map(|x| x * scale).collect()))
                .collect();
            proptest::prop_assert_eq!(integrate(&scaled, &plan, a).unwrap().labels, track.labels);
        }
    }
}
