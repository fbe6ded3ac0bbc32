use serde::{Deserialize, Serialize};

use crate::arch::backbone::BackboneProfile;
use crate::error::{Error, Result};
use crate::nn::layers::compressed_depth;

pub const DEFAULT_PPM_BINS: [usize; 4] = [1, 2, 3, 6];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Compression ratio `r`.
    pub ratio: usize,
    /// Global feature depth `d_g`; `None` means `d_5 / r`.
    pub global_depth: Option<usize>,
    pub ppm_bins: Vec<usize>,
    /// Number of topmost side features that get shortcut paths (0..=4).
    pub pcsp_count: usize,
    pub ppm_enabled: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            ratio: 4,
            global_depth: None,
            ppm_bins: DEFAULT_PPM_BINS.to_vec(),
            pcsp_count: 4,
            ppm_enabled: true,
        }
    }
}

impl DecoderConfig {
    pub fn with_ratio(ratio: usize) -> Self {
        DecoderConfig {
            ratio,
            ..Self::default()
        }
    }

    pub fn validate(&self, profile: &BackboneProfile) -> Result<()> {
        profile.validate()?;
        if self.ratio == 0 {
            return Err(Error::Config("compression ratio must be positive".into()));
        }
        if self.pcsp_count > 4 {
            return Err(Error::Config(format!("pcsp_count {} exceeds 4", self.pcsp_count)));
        }
        if let Some(i) = (1..=5).find(|&i| profile.depth(i) < self.ratio) {
            return Err(Error::Config(format!(
                "compression ratio {} leaves stage {i} of '{}' (depth {}) with less than one channel",
                self.ratio,
                profile.name,
                profile.depth(i)
            )));
        }
        if self.global_depth == Some(0) {
            return Err(Error::Config("global depth must be positive".into()));
        }
        Ok(())
    }

    /// `d_i / r` for side feature `F_i`.
    pub fn side_depth(&self, profile: &BackboneProfile, stage: usize) -> usize {
        compressed_depth(profile.depth(stage), self.ratio)
    }

    pub fn global_depth(&self, profile: &BackboneProfile) -> usize {
        self.global_depth.unwrap_or_else(|| self.side_depth(profile, 5))
    }
}
