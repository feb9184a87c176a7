use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::fnv1a;
use crate::error::{Error, Result};

/// Bounded nonlinearity on the generator's last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum OutputActivation {
    #[default]
    Sigmoid,
    /// Identity on `[0, 1]`, saturating outside (zero gradient there).
    Clamp,
}

/// Architecture of the reference generator (and its discriminator).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelSpec {
    /// Side length of the square input, pixels.
    pub input_size: usize,
    pub base_channels: usize,
    /// Number of stride-2 encoder stages (and matching upsampling stages).
    pub depth: usize,
    /// One middle block per entry, at the bottleneck resolution.
    pub dilations: Vec<usize>,
    pub gated: bool,
    pub use_discriminator: bool,
    pub kernel: usize,
    pub output: OutputActivation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            input_size: 64,
            base_channels: 32,
            depth: 2,
            dilations: vec![2, 4],
            gated: true,
            use_discriminator: false,
            kernel: 3,
            output: OutputActivation::Sigmoid,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.base_channels == 0 {
            return Err(Error::Spec(format!(
                "input_size and base_channels must be positive: {self:?}"
            )));
        }
        if self.depth >= usize::BITS as usize || self.input_size % (1usize << self.depth) != 0 {
            return Err(Error::Spec(format!(
                "input_size {} is not divisible by 2^{}",
                self.input_size, self.depth
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Spec(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Spec("dilations must be positive".into()));
        }
        Ok(())
    }

    /// Hash of every architectural field; weights carry it to guard against
    /// being loaded into a different network.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "selfex-generator/1;size={};base={};depth={};dil={:?};gated={};kernel={};out={:?}",
            self.input_size,
            self.base_channels,
            self.depth,
            self.dilations,
            self.gated,
            self.kernel,
            self.output
        );
        fnv1a(text.bytes())
    }

    pub fn disc_fingerprint(&self) -> u64 {
        let text = format!(
            "selfex-discriminator/1;size={};base={}",
            self.input_size, self.base_channels
        );
        fnv1a(text.bytes())
    }
}
