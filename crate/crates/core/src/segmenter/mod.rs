//! Promptable segmenters: the query interface used by the hypothesis
//! generator, a stochastic oracle built on simulator ground truth, and a
//! line-protocol client/server for out-of-process backends.

pub mod bridge;
mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{OracleSegmenter, OracleStats};

use crate::mask::{Mask, MaskError, Pixel};
use crate::scene::{FrameHandle, Observation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmenterError {
    #[error("stale frame: {0}")]
    StaleFrame(String),
    #[error("pixel ({row}, {col}) outside the frame")]
    PixelOutOfRange { row: usize, col: usize },
    /// The connection to a remote backend failed; the request may be retried
    /// on a fresh connection.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The backend answered with something that violates the protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The backend reported an error for a well-formed request.
    #[error("segmenter error: {0}")]
    Remote(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

impl SegmenterError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, SegmenterError::Transport(_))
    }
}

/// The three segmentation queries. Every query takes an explicit `seed`
/// that fully determines any randomness it uses, so identical calls give
/// identical masks and concurrent callers need no shared rng.
pub trait Segmenter: Send + Sync {
    /// Makes a frame available to later queries. Loading the same frame
    /// twice is a no-op.
    fn load_frame(&self, obs: &Observation) -> Result<(), SegmenterError>;

    /// Drops per-frame state; later queries on the handle fail as stale.
    fn release_frame(&self, _frame: FrameHandle) {}

    /// Dense bottom-up seeding ("segment everything").
    fn seed_all(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError>;

    /// Bottom-up mask for a point prompt. The result always contains `pixel`.
    fn prompt_point(
        &self,
        frame: FrameHandle,
        pixel: Pixel,
        seed: u64,
    ) -> Result<Mask, SegmenterError>;

    /// Top-down, high-precision object masks.
    fn high_precision(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError>;
}

impl<S: Segmenter + ?Sized> Segmenter for &S {
    fn load_frame(&self, obs: &Observation) -> Result<(), SegmenterError> {
        (**self).load_frame(obs)
    }
    fn release_frame(&self, frame: FrameHandle) {
        (**self).release_frame(frame)
    }
    fn seed_all(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError> {
        (**self).seed_all(frame, seed)
    }
    fn prompt_point(
        &self,
        frame: FrameHandle,
        pixel: Pixel,
        seed: u64,
    ) -> Result<Mask, SegmenterError> {
        (**self).prompt_point(frame, pixel, seed)
    }
    fn high_precision(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError> {
        (**self).high_precision(frame, seed)
    }
}

/// Failure-mode parameters of the oracle segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Probability a point prompt returns only the prompted part.
    pub p_part: f64,
    /// Probability a point prompt returns the body merged with one touching
    /// neighbour.
    pub p_merge: f64,
    /// Largest morphological dilation/erosion radius, pixels.
    pub boundary_noise: usize,
    /// Probability each body appears in the high-precision output.
    pub td_recall: f64,
    /// Probability a high-precision mask is replaced by a merged pair.
    pub td_merge: f64,
    /// Point prompts per visible body in dense seeding.
    pub seeds_per_body: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            p_part: 0.2,
            p_merge: 0.3,
            boundary_noise: 1,
            td_recall: 0.8,
            td_merge: 0.1,
            seeds_per_body: 4,
        }
    }
}

impl OracleConfig {
    /// Every failure mode switched off.
    pub fn noise_free() -> Self {
        Self {
            p_part: 0.0,
            p_merge: 0.0,
            boundary_noise: 0,
            td_recall: 1.0,
            td_merge: 0.0,
            seeds_per_body: 4,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("p_part", self.p_part),
            ("p_merge", self.p_merge),
            ("td_recall", self.td_recall),
            ("td_merge", self.td_merge),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        if self.p_part + self.p_merge > 1.0 {
            return Err("p_part + p_merge exceeds 1".into());
        }
        if self.seeds_per_body == 0 {
            return Err("seeds_per_body must be at least 1".into());
        }
        Ok(())
    }
}
