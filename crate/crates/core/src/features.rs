//! Per-pixel spatio-temporal descriptors.
//!
//! Every pixel whose spatial gradient magnitude exceeds a threshold yields a
//! 14-dimensional vector laid out as
//!
//! ```text
//! [x, y, |Jx|, |Jy|, |Jyy|, |Jxx|, mag, orient, u, v, du/dt, dv/dt, div, vort]
//! ```
//!
//! where `x`, `y` are 1-based pixel coordinates, `J*` are first and second
//! order intensity derivatives, `mag = sqrt(Jx² + Jy²)`,
//! `orient = atan(|Jy| / |Jx|)`, `(u, v)` is the dense optical flow into the
//! frame, and the last four terms are its temporal derivative, divergence and
//! vorticity. All spatial derivatives use central differences with replicated
//! borders.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::video_io::{Frame, FrameSequence};

pub const FEATURE_DIM: usize = 14;

/// One descriptor, ordered as documented at module level.
pub type FeatureVector<T> = [T; FEATURE_DIM];

/// Positions inside a [`FeatureVector`].
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const ABS_JX: usize = 2;
    pub const ABS_JY: usize = 3;
    pub const ABS_JYY: usize = 4;
    pub const ABS_JXX: usize = 5;
    pub const MAG: usize = 6;
    pub const ORIENT: usize = 7;
    pub const U: usize = 8;
    pub const V: usize = 9;
    pub const DU_DT: usize = 10;
    pub const DV_DT: usize = 11;
    pub const DIV: usize = 12;
    pub const VORT: usize = 13;
}

/// Row-major real raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Raster<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for y in 0..rows {
            for x in 0..cols {
                data.push(f(y, x));
            }
        }
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    /// Value at a possibly out-of-range position, replicating the border.
    #[inline]
    fn clamped(&self, row: isize, col: isize) -> T {
        let r = row.clamp(0, self.rows as isize - 1) as usize;
        let c = col.clamp(0, self.cols as isize - 1) as usize;
        self.get(r, c)
    }

    fn map2(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Central first difference along columns.
    pub fn d_dx(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |y, x| {
            let (y, x) = (y as isize, x as isize);
            (self.clamped(y, x + 1) - self.clamped(y, x - 1)) * half
        })
    }

    /// Central first difference along rows.
    pub fn d_dy(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |y, x| {
            let (y, x) = (y as isize, x as isize);
            (self.clamped(y + 1, x) - self.clamped(y - 1, x)) * half
        })
    }

    pub fn d2_dx2(&self) -> Self {
        let two = T::lit(2.0);
        Self::from_fn(self.rows, self.cols, |y, x| {
            let (y, x) = (y as isize, x as isize);
            self.clamped(y, x + 1) - two * self.clamped(y, x) + self.clamped(y, x - 1)
        })
    }

    pub fn d2_dy2(&self) -> Self {
        let two = T::lit(2.0);
        Self::from_fn(self.rows, self.cols, |y, x| {
            let (y, x) = (y as isize, x as isize);
            self.clamped(y + 1, x) - two * self.clamped(y, x) + self.clamped(y - 1, x)
        })
    }
}

impl<T: Real> From<&Frame<T>> for Raster<T> {
    fn from(f: &Frame<T>) -> Self {
        Self {
            rows: f.rows(),
            cols: f.cols(),
            data: f.pixels().to_vec(),
        }
    }
}

/// First and second order intensity derivatives of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    pub jx: Raster<T>,
    pub jy: Raster<T>,
    pub jxx: Raster<T>,
    pub jyy: Raster<T>,
}

/// Dense optical flow in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    pub u: Raster<T>,
    pub v: Raster<T>,
}

impl<T: Real> FlowField<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            u: Raster::zeros(rows, cols),
            v: Raster::zeros(rows, cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.u.shape()
    }
}

/// The interesting-pixel descriptors of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures<T> {
    /// 1-based index of the frame in its video.
    pub frame_index: usize,
    pub vectors: Vec<FeatureVector<T>>,
}

fn require_min_shape(shape: (usize, usize), what: &str) -> Result<()> {
    if shape.0 < 3 || shape.1 < 3 {
        return Err(Error::arg(format!(
            "{what} of shape {}x{} is smaller than 3x3",
            shape.0, shape.1
        )));
    }
    Ok(())
}

fn require_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::arg(format!("shape mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

pub fn spatial_gradients<T: Real>(frame: &Frame<T>) -> Result<GradientField<T>> {
    require_min_shape(frame.shape(), "frame")?;
    let img = Raster::from(frame);
    Ok(GradientField {
        jx: img.d_dx(),
        jy: img.d_dy(),
        jxx: img.d2_dx2(),
        jyy: img.d2_dy2(),
    })
}

/// Horn–Schunck solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HornSchunck {
    /// Smoothness weight, expressed in 8-bit intensity units.
    pub alpha: f64,
    pub max_iter: usize,
    /// Stop once no flow component moves more than this (pixels/frame).
    pub tol: f64,
}

impl Default for HornSchunck {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iter: 100,
            tol: 1e-4,
        }
    }
}

impl HornSchunck {
    /// Dense flow carrying `prev` onto `next`.
    pub fn flow<T: Real>(&self, prev: &Frame<T>, next: &Frame<T>) -> Result<FlowField<T>> {
        require_same_shape(prev.shape(), next.shape())?;
        require_min_shape(prev.shape(), "frame")?;
        let (rows, cols) = prev.shape();
        let p = Raster::from(prev);
        let n = Raster::from(next);
        let half = T::lit(0.5);
        let mean = p.map2(&n, |a, b| (a + b) * half);
        let ix = mean.d_dx();
        let iy = mean.d_dy();
        let it = n.map2(&p, |a, b| a - b);

        // intensities are normalized, so rescale the 8-bit smoothness weight
        let alpha = T::lit(self.alpha / 255.0);
        let alpha2 = alpha * alpha;
        let denom: Vec<T> = ix
            .data
            .iter()
            .zip(&iy.data)
            .map(|(&gx, &gy)| alpha2 + gx * gx + gy * gy)
            .collect();

        let tol = T::lit(self.tol);
        let mut u = Raster::zeros(rows, cols);
        let mut v = Raster::zeros(rows, cols);
        for _ in 0..self.max_iter {
            let ubar = neighbourhood_mean(&u);
            let vbar = neighbourhood_mean(&v);
            let mut max_step = T::zero();
            for i in 0..rows * cols {
                let (gx, gy) = (ix.data[i], iy.data[i]);
                let d = denom[i];
                let residual = if d > T::zero() {
                    (gx * ubar.data[i] + gy * vbar.data[i] + it.data[i]) / d
                } else {
                    T::zero()
                };
                let nu = ubar.data[i] - gx * residual;
                let nv = vbar.data[i] - gy * residual;
                max_step = max_step
                    .max((nu - u.data[i]).abs())
                    .max((nv - v.data[i]).abs());
                u.data[i] = nu;
                v.data[i] = nv;
            }
            if !max_step.is_finite() {
                return Err(Error::Numerical("optical flow diverged".into()));
            }
            if max_step < tol {
                break;
            }
        }
        Ok(FlowField { u, v })
    }
}

/// Horn–Schunck neighbourhood average: 1/6 for edge neighbours, 1/12 for
/// diagonal ones, replicated borders.
fn neighbourhood_mean<T: Real>(r: &Raster<T>) -> Raster<T> {
    let edge = T::lit(1.0 / 6.0);
    let diag = T::lit(1.0 / 12.0);
    Raster::from_fn(r.rows, r.cols, |y, x| {
        let (y, x) = (y as isize, x as isize);
        edge * (r.clamped(y - 1, x) + r.clamped(y + 1, x) + r.clamped(y, x - 1) + r.clamped(y, x + 1))
            + diag
                * (r.clamped(y - 1, x - 1)
                    + r.clamped(y - 1, x + 1)
                    + r.clamped(y + 1, x - 1)
                    + r.clamped(y + 1, x + 1))
    })
}

/// Horn–Schunck flow with the default settings.
pub fn optical_flow<T: Real>(prev: &Frame<T>, next: &Frame<T>) -> Result<FlowField<T>> {
    HornSchunck::default().flow(prev, next)
}

/// Backward difference `flow_cur - flow_prev`.
pub fn flow_temporal_derivative<T: Real>(
    flow_prev: &FlowField<T>,
    flow_cur: &FlowField<T>,
) -> Result<FlowField<T>> {
    require_same_shape(flow_prev.shape(), flow_cur.shape())?;
    Ok(FlowField {
        u: flow_cur.u.map2(&flow_prev.u, |a, b| a - b),
        v: flow_cur.v.map2(&flow_prev.v, |a, b| a - b),
    })
}

/// Divergence `du/dx + dv/dy` and vorticity `dv/dx - du/dy`.
pub fn flow_spatial_terms<T: Real>(flow: &FlowField<T>) -> Result<(Raster<T>, Raster<T>)> {
    require_min_shape(flow.shape(), "flow field")?;
    let du_dx = flow.u.d_dx();
    let du_dy = flow.u.d_dy();
    let dv_dx = flow.v.d_dx();
    let dv_dy = flow.v.d_dy();
    Ok((
        du_dx.map2(&dv_dy, |a, b| a + b),
        dv_dx.map2(&du_dy, |a, b| a - b),
    ))
}

/// Gradient orientation folded into `[0, pi/2]`.
#[inline]
pub fn orientation<T: Real>(jx: T, jy: T) -> T {
    let (ax, ay) = (jx.abs(), jy.abs());
    if ax == T::zero() {
        if ay == T::zero() {
            T::zero()
        } else {
            T::FRAC_PI_2()
        }
    } else {
        (ay / ax).atan()
    }
}

/// Collects the descriptor of every pixel whose gradient magnitude exceeds
/// `tau / 255` (`tau` is given in 8-bit intensity units).
pub fn extract_frame_features<T: Real>(
    frame_index: usize,
    frame: &Frame<T>,
    grads: &GradientField<T>,
    flow: &FlowField<T>,
    dflow: &FlowField<T>,
    tau: f64,
) -> Result<FrameFeatures<T>> {
    if !(tau >= 0.0) {
        return Err(Error::arg(format!("threshold {tau} must be non-negative")));
    }
    let shape = frame.shape();
    for s in [
        grads.jx.shape(),
        grads.jy.shape(),
        grads.jxx.shape(),
        grads.jyy.shape(),
        flow.shape(),
        dflow.shape(),
    ] {
        require_same_shape(shape, s)?;
    }
    let (div, vort) = flow_spatial_terms(flow)?;
    let threshold = T::lit(tau / 255.0);
    let (rows, cols) = shape;
    let mut vectors = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            let jx = grads.jx.get(y, x);
            let jy = grads.jy.get(y, x);
            let mag = (jx * jx + jy * jy).sqrt();
            if !(mag > threshold) {
                continue;
            }
            vectors.push([
                T::from_count(x + 1),
                T::from_count(y + 1),
                jx.abs(),
                jy.abs(),
                grads.jyy.get(y, x).abs(),
                grads.jxx.get(y, x).abs(),
                mag,
                orientation(jx, jy),
                flow.u.get(y, x),
                flow.v.get(y, x),
                dflow.u.get(y, x),
                dflow.v.get(y, x),
                div.get(y, x),
                vort.get(y, x),
            ]);
        }
    }
    Ok(FrameFeatures {
        frame_index,
        vectors,
    })
}

/// Settings for whole-video feature extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    /// Gradient magnitude threshold in 8-bit units.
    pub tau: f64,
    /// Only frames `1, 1 + stride, 1 + 2 * stride, ...` contribute features.
    pub frame_stride: usize,
    pub flow: HornSchunck,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            tau: 40.0,
            frame_stride: 2,
            flow: HornSchunck::default(),
        }
    }
}

impl ExtractionParams {
    /// 1-based indices of the frames that contribute features.
    pub fn sampled_frames(&self, frames: usize) -> impl Iterator<Item = usize> {
        (1..=frames).step_by(self.frame_stride.max(1))
    }
}

/// Extracts features for every sampled frame of a video.
///
/// The flow into frame `t` is estimated from frame `t - 1`; frame 1 gets a
/// zero field, and its temporal flow derivative is taken against zero.
pub fn extract_video_features<T: Real>(
    seq: &FrameSequence<T>,
    params: &ExtractionParams,
) -> Result<Vec<FrameFeatures<T>>> {
    if params.frame_stride == 0 {
        return Err(Error::arg("frame stride must be at least 1"));
    }
    let frames = seq.frames();
    let (rows, cols) = seq.shape();
    require_min_shape((rows, cols), "frame")?;
    let sampled: Vec<usize> = params.sampled_frames(frames.len()).collect();

    // flow index t (1-based) = flow from frame t-1 into frame t
    let mut needed = vec![false; frames.len() + 1];
    for &t in &sampled {
        needed[t] = true;
        needed[t - 1] = true;
    }
    let flows: Vec<Option<FlowField<T>>> = (0..=frames.len())
        .into_par_iter()
        .map(|t| {
            if !needed[t] {
                return Ok(None);
            }
            if t <= 1 {
                return Ok(Some(FlowField::zeros(rows, cols)));
            }
            params.flow.flow(&frames[t - 2], &frames[t - 1]).map(Some)
        })
        .collect::<Result<_>>()?;

    sampled
        .par_iter()
        .map(|&t| {
            let frame = &frames[t - 1];
            let flow = flows[t].as_ref().expect("flow computed for sampled frame");
            let prev = flows[t - 1].as_ref().expect("flow computed before sampled frame");
            let dflow = flow_temporal_derivative(prev, flow)?;
            let grads = spatial_gradients(frame)?;
            extract_frame_features(t, frame, &grads, flow, &dflow, params.tau)
        })
        .collect()
}
