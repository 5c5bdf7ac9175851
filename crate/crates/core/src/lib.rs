//! Scale-aware attention decoding, pyramid planning, and mask-guided convolution.
//!
//! The crate is organized as a pipeline:
//!
//! * [`geometry`] derives scale-consistent face boxes from 5-point landmarks
//!   via a least-squares similarity fit.
//! * [`scalemap`] maps face sizes to logarithmic scale bins and computes the
//!   zoom target that re-centers a face onto the detector anchor.
//! * [`labels`] renders ground-truth attention maps from boxes and scores
//!   predictions with a sigmoid cross-entropy loss.
//! * [`decode`] turns attention maps into scale proposals, face regions,
//!   spatial masks, and a resize plan for the image pyramid.
//! * [`maskconv`] implements dense and mask-guided convolution through patch
//!   matrix assembly, with exact FLOP accounting.
//! * [`toynet`] is a minimal trainable convolutional network producing the
//!   attention logits, used to exercise the full pipeline end to end.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only switches the float math to the platform intrinsics.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod decode;
pub mod error;
pub mod geometry;
pub mod labels;
pub mod maskconv;
mod math;
pub mod scalemap;
pub mod toynet;

pub use error::Error;

/// Half-width of the scale neighborhood shared by label spreading, location
/// decoding, and the default 1-D NMS radius: a face at bin `b` influences
/// bins `b - 4 ..= b + 4`.
pub const SCALE_NEIGHBORHOOD: usize = 4;
