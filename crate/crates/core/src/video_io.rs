//! Grayscale frame sequences stored as directories of binary PGM files, and
//! per-frame label tracks stored as `frame,label` CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A grayscale raster, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    rows: usize,
    cols: usize,
    pixels: Vec<T>,
}

impl<T: Real> Frame<T> {
    pub fn new(rows: usize, cols: usize, pixels: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("frame dimensions must be positive"));
        }
        if pixels.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
            return Err(Error::arg(format!("intensity {p} outside [0, 1]")));
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Builds a frame from a function of `(row, col)`, clamping into `[0, 1]`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut pixels = Vec::with_capacity(rows * cols);
        for y in 0..rows {
            for x in 0..cols {
                pixels.push(f(y, x).max(T::zero()).min(T::one()));
            }
        }
        Self::new(rows, cols, pixels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.cols + col]
    }

    /// Bilinear resampling with pixel-center alignment and clamped edges.
    pub fn rescale(&self, new_rows: usize, new_cols: usize) -> Result<Self> {
        if new_rows < 2 || new_cols < 2 {
            return Err(Error::arg(format!(
                "rescale target {new_rows}x{new_cols} below 2x2"
            )));
        }
        let src_coord = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, T) {
            let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
            let s = s.clamp(0.0, (src_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, T::lit(s - lo as f64))
        };
        let cols: Vec<_> = (0..new_cols)
            .map(|x| src_coord(x, self.cols, new_cols))
            .collect();
        let mut pixels = Vec::with_capacity(new_rows * new_cols);
        for y in 0..new_rows {
            let (y0, y1, fy) = src_coord(y, self.rows, new_rows);
            for &(x0, x1, fx) in &cols {
                let top = self.get(y0, x0) * (T::one() - fx) + self.get(y0, x1) * fx;
                let bottom = self.get(y1, x0) * (T::one() - fx) + self.get(y1, x1) * fx;
                let v = top * (T::one() - fy) + bottom * fy;
                pixels.push(v.max(T::zero()).min(T::one()));
            }
        }
        Self::new(new_rows, new_cols, pixels)
    }
}

/// An ordered, non-empty list of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<T> {
    frames: Vec<Frame<T>>,
    frame_rate: f64,
}

impl<T: Real> FrameSequence<T> {
    pub fn new(frames: Vec<Frame<T>>, frame_rate: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::arg("frame sequence must contain at least one frame"))?;
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::arg(format!("frame rate {frame_rate} must be positive")));
        }
        let shape = first.shape();
        if let Some(f) = frames.iter().find(|f| f.shape() != shape) {
            return Err(Error::format(format!(
                "frame shape {:?} differs from first frame {:?}",
                f.shape(),
                shape
            )));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }

    pub fn rescale(&self, rows: usize, cols: usize) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|f| f.rescale(rows, cols))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames, self.frame_rate)
    }

    /// Appends the frames of `other`; shapes must agree.
    pub fn concat(mut self, other: FrameSequence<T>) -> Result<Self> {
        if other.shape() != self.shape() {
            return Err(Error::format("cannot concatenate sequences of different shape"));
        }
        self.frames.extend(other.frames);
        Ok(self)
    }
}

/// File name of the `index`-th frame (1-based).
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

fn parse_frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Loads `frame_000001.pgm`, `frame_000002.pgm`, ... from `dir`.
pub fn load_sequence<T: Real>(dir: &Path, frame_rate: f64) -> Result<FrameSequence<T>> {
    let mut indices = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(i) = entry.file_name().to_str().and_then(parse_frame_index) {
            indices.push(i);
        }
    }
    indices.sort_unstable();
    for (pos, &i) in indices.iter().enumerate() {
        if i != pos + 1 {
            return Err(Error::SequenceGap {
                dir: dir.to_path_buf(),
                expected: pos + 1,
            });
        }
    }
    if indices.is_empty() {
        return Err(Error::SequenceGap {
            dir: dir.to_path_buf(),
            expected: 1,
        });
    }
    let frames = indices
        .iter()
        .map(|&i| {
            let path = dir.join(frame_file_name(i));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            decode_pgm(&bytes).map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, frame_rate)
}

/// Writes the sequence as a PGM directory, creating `dir` if needed.
pub fn write_sequence<T: Real>(seq: &FrameSequence<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(i + 1));
        fs::write(&path, encode_pgm(frame)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("PGM header: bad {what}")))
    }
}

/// Decodes a binary (P5) PGM with maxval at most 255.
pub fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<Frame<T>> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format("not a binary P5 PGM"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(format!(
            "PGM maxval {maxval} unsupported (8-bit only)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("PGM with zero dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("PGM header not terminated by whitespace"));
    }
    let data = &bytes[cur.pos + 1..];
    let n = width * height;
    if data.len() < n {
        return Err(Error::format(format!(
            "PGM raster truncated: {} of {n} bytes",
            data.len()
        )));
    }
    let scale = T::from_count(maxval as usize);
    let mut pixels = Vec::with_capacity(n);
    for &b in &data[..n] {
        if u32::from(b) > maxval {
            return Err(Error::format("PGM sample exceeds maxval"));
        }
        pixels.push(T::from_count(b as usize) / scale);
    }
    Frame::new(height, width, pixels)
}

/// Encodes a frame as P5 PGM with maxval 255.
pub fn encode_pgm<T: Real>(frame: &Frame<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.cols(), frame.rows()).into_bytes();
    out.extend(frame.pixels().iter().map(|&p| {
        let v = (p.widen() * 255.0).round().clamp(0.0, 255.0);
        v as u8
    }));
    out
}

/// Per-frame class labels. Labels are 0-based indices into `class_names`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTrack {
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabelTrack {
    pub fn new(labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::arg(format!(
                "label {l} out of range for {} classes",
                class_names.len()
            )));
        }
        if class_names.iter().any(String::is_empty) {
            return Err(Error::format("empty class name"));
        }
        Ok(Self {
            labels,
            class_names,
        })
    }

    /// Maps label strings to ids in order of first appearance.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut class_names: Vec<String> = Vec::new();
        let mut labels = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            if name.is_empty() {
                return Err(Error::format("empty label string"));
            }
            let id = match class_names.iter().position(|c| c == name) {
                Some(id) => id,
                None => {
                    class_names.push(name.to_owned());
                    class_names.len() - 1
                }
            };
            labels.push(id);
        }
        Self::new(labels, class_names)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name_of(&self, frame: usize) -> &str {
        &self.class_names[self.labels[frame]]
    }

    /// Re-expresses the track against another class list, appending unknown
    /// names to it.
    pub fn remap(&self, class_names: &mut Vec<String>) -> LabelTrack {
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let name = &self.class_names[l];
                match class_names.iter().position(|c| c == name) {
                    Some(i) => i,
                    None => {
                        class_names.push(name.clone());
                        class_names.len() - 1
                    }
                }
            })
            .collect();
        LabelTrack {
            labels,
            class_names: class_names.clone(),
        }
    }

    /// Maximal runs of equal labels as `(start, end_exclusive, label)`.
    pub fn runs(&self) -> Vec<(usize, usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for t in 1..=self.labels.len() {
            if t == self.labels.len() || self.labels[t] != self.labels[start] {
                runs.push((start, t, self.labels[start]));
                start = t;
            }
        }
        runs
    }
}

/// Reads a `frame,label` CSV (extra trailing columns are ignored).
pub fn read_labels(csv_path: &Path) -> Result<LabelTrack> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(csv_path)
        .map_err(|e| csv_error(csv_path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(csv_path, e))?;
    if headers.get(0) != Some("frame") || headers.get(1) != Some("label") {
        return Err(Error::format(format!(
            "{}: header must start with `frame,label`",
            csv_path.display()
        )));
    }
    let mut names = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(csv_path, e))?;
        let row = i + 1;
        let frame: usize = record
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::format(format!("row {row}: unparsable frame index")))?;
        if frame != row {
            return Err(Error::format(format!(
                "row {row}: frame index {frame} out of sequence"
            )));
        }
        let label = record.get(1).unwrap_or("");
        if label.trim().is_empty() {
            return Err(Error::format(format!("row {row}: empty label")));
        }
        names.push(label.to_owned());
    }
    LabelTrack::from_names(&names)
}

/// Reads a label CSV that must describe exactly `frames` frames.
pub fn load_labels(csv_path: &Path, frames: usize) -> Result<LabelTrack> {
    let track = read_labels(csv_path)?;
    if track.len() != frames {
        return Err(Error::LengthMismatch {
            expected: frames,
            found: track.len(),
        });
    }
    Ok(track)
}

pub fn write_labels(track: &LabelTrack, csv_path: &Path) -> Result<()> {
    if track.is_empty() {
        return Err(Error::format("refusing to write an empty label track"));
    }
    let mut out = String::from("frame,label\n");
    for t in 0..track.len() {
        out.push_str(&format!("{},{}\n", t + 1, csv_field(track.name_of(t))));
    }
    let mut file = fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(csv_path, e))
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(format!("{}: {e}", path.display()))
    }
}
