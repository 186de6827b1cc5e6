//! Generation, scoring and evaluation of odd-one-out grid stimuli.
//!
//! A stimulus is a rows×cols grid of identical icons in which exactly one
//! cell differs in color, size, rotation or position (or a combination).

pub mod color;
pub mod curriculum;
pub mod evalkit;
pub mod gridsynth;
pub mod icon_store;
pub mod perturb;
pub mod reward;
pub mod rng;
