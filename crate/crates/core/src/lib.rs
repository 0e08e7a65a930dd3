//! Topic identification for untranscribed speech.
//!
//! The crate covers the full zero-resource pipeline: speech utterances arrive
//! as acoustic feature matrices, are tokenized into discovered word-like terms
//! ([`utd`]) or phoneme-like units ([`aud`]), turned into document
//! representations ([`bow`], [`embed`], [`cnn`]), and classified with linear
//! SVMs ([`svm`]) or the CNN head, under fixed cross-validation protocols
//! ([`eval`]).
//!
//! All randomized components take explicit seeds and produce identical results
//! for identical seeds; parallel sections reduce in a fixed order so results
//! do not depend on the worker count.

pub mod aud;
pub mod bow;
pub mod cnn;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod svm;
pub mod utd;
pub mod util;

mod error;

pub use error::{Error, Result};
