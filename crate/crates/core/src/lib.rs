#![cfg_attr(not(feature = "std"), no_std)]

//! Test-time self-supervised fine-tuning for image inpainting networks.
//!
//! A pre-trained inpainting generator first restores the masked input once.
//! That restoration is then frozen and repeatedly corrupted with random masks;
//! the generator is adapted to the single image by learning to undo those
//! corruptions, with a loss that ignores the original hole. An internal
//! patch-feature Fréchet distance decides when to stop.
//!
//! This crate is `no_std` (with `alloc`). Everything that touches the file
//! system, configuration files or the command line lives in the `selfex`
//! companion crate.

extern crate alloc;

pub mod error;
pub mod finetune;
pub mod image;
pub mod maskgen;
pub mod model;
pub mod pretrain;
pub mod quality;
pub mod seed;
mod train;

pub use error::{Error, Result};
pub use image::{apply_mask, composite, Image, Mask, Transform};
