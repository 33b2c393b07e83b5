//! Pianist identification from expressive MIDI performances.
//!
//! The pipeline parses performance and score MIDI files ([`midi`]), aligns
//! them note by note ([`align`]), turns matched notes into expressive
//! feature sequences ([`features`]), splits and synthesizes corpora
//! ([`dataset`]), and trains a one-dimensional convolutional classifier
//! built on a small reverse-mode differentiation engine ([`neural`]).
//! [`experiment`] holds the training loop, metrics and study harnesses.

pub mod align;
pub mod dataset;
pub mod experiment;
pub mod features;
pub mod midi;
pub mod neural;
