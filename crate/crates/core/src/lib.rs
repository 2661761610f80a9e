pub mod classify;
pub mod encode;
pub mod error;
pub mod features;
pub mod json;
pub mod pipeline;
pub mod scalar;
pub mod segment;
pub mod synthgen;
pub mod video_io;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations of the generic types.
pub type Frame = video_io::Frame<f64>;
pub type FrameSequence = video_io::FrameSequence<f64>;
pub type GmmVocabulary = vocab::GmmVocabulary<f64>;
pub type Codebook = vocab::Codebook<f64>;
pub type Encoder = encode::Encoder<f64>;
pub type LinearSvmModel = classify::LinearSvmModel<f64>;
pub type PlattParams = classify::PlattParams<f64>;
