//! Network assemblies: the MRI-to-PET generator, the conditional PatchGAN
//! discriminator, and the downstream diagnosis classifier.

mod classifier;
mod discriminator;
mod generator;

pub use classifier::{predicted_label, Classifier};
pub use discriminator::Discriminator;
pub use generator::{Generator, GeneratorOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator hyperparameters, including the ablation flags.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub image_size: usize,
    pub in_channels: usize,
    /// Stem width plus the three downsampling-stage widths.
    pub channel_ladder: Vec<usize>,
    /// Residual blocks per side when `use_resblocks` is on; a minimal spine
    /// of two blocks per side is retained when it is off.
    pub n_res_blocks: usize,
    pub codebook_k: usize,
    pub codebook_d: usize,
    pub use_multiscale: bool,
    pub use_resblocks: bool,
    pub use_cbam: bool,
    pub dropout_p: f64,
    pub cbam_reduction: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            image_size: 256,
            in_channels: 1,
            channel_ladder: vec![64, 128, 256, 512],
            n_res_blocks: 6,
            codebook_k: 1024,
            codebook_d: 512,
            use_multiscale: true,
            use_resblocks: true,
            use_cbam: true,
            dropout_p: 0.5,
            cbam_reduction: 16,
        }
    }
}

impl GeneratorConfig {
    /// CPU-friendly configuration for gradient checks and overfit tests.
    pub fn tiny() -> Self {
        GeneratorConfig {
            image_size: 32,
            in_channels: 1,
            channel_ladder: vec![4, 8, 16, 32],
            n_res_blocks: 2,
            codebook_k: 16,
            codebook_d: 8,
            use_multiscale: true,
            use_resblocks: true,
            use_cbam: true,
            dropout_p: 0.5,
            cbam_reduction: 2,
        }
    }

    pub fn base_channels(&self) -> usize {
        self.channel_ladder[0]
    }

    pub fn latent_channels(&self) -> usize {
        *self.channel_ladder.last().unwrap()
    }

    /// Residual blocks actually built per side.
    pub fn effective_res_blocks(&self) -> usize {
        if self.use_resblocks {
            self.n_res_blocks
        } else {
            self.n_res_blocks.min(2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_ladder.len() != 4 {
            return Err(Error::Config(format!(
                "channel_ladder must list 4 widths (stem + 3 stages), got {:?}",
                self.channel_ladder
            )));
        }
        if self.image_size % 8 != 0 || self.image_size < 8 {
            return Err(Error::Config(format!(
                "image_size must be a positive multiple of 8, got {}",
                self.image_size
            )));
        }
        if self.codebook_k == 0 || self.codebook_d == 0 {
            return Err(Error::Config("codebook dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p out of [0,1): {}", self.dropout_p)));
        }
        Ok(())
    }

    /// Spatial size of the latent grid (three stride-2 stages).
    pub fn latent_size(&self) -> usize {
        self.image_size / 8
    }

    pub fn with_flags(mut self, multiscale: bool, resblocks: bool, cbam: bool) -> Self {
        self.use_multiscale = multiscale;
        self.use_resblocks = resblocks;
        self.use_cbam = cbam;
        self
    }
}

/// The four ablation rows: standard VQGAN, +multi-scale convs,
/// +residual stacks, and the full model with CBAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Vqgan,
    VqganMc,
    VqganMcRb,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Vqgan,
        AblationVariant::VqganMc,
        AblationVariant::VqganMcRb,
        AblationVariant::Full,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "vqgan" => Ok(AblationVariant::Vqgan),
            "vqgan_mc" => Ok(AblationVariant::VqganMc),
            "vqgan_mc_rb" => Ok(AblationVariant::VqganMcRb),
            "full" => Ok(AblationVariant::Full),
            other => Err(Error::Config(format!(
                "unknown ablation variant '{other}' (expected vqgan, vqgan_mc, vqgan_mc_rb, full)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::Vqgan => "vqgan",
            AblationVariant::VqganMc => "vqgan_mc",
            AblationVariant::VqganMcRb => "vqgan_mc_rb",
            AblationVariant::Full => "full",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            AblationVariant::Vqgan => "Standard VQGAN",
            AblationVariant::VqganMc => "VQGAN + Multi-Conv",
            AblationVariant::VqganMcRb => "VQGAN + Multi-Conv + ResNet Blocks",
            AblationVariant::Full => "MCR-VQGAN (Full)",
        }
    }

    pub fn flags(&self) -> (bool, bool, bool) {
        match self {
            AblationVariant::Vqgan => (false, false, false),
            AblationVariant::VqganMc => (true, false, false),
            AblationVariant::VqganMcRb => (true, true, false),
            AblationVariant::Full => (true, true, true),
        }
    }
}

/// Apply an ablation row's flags to a base configuration.
pub fn build_ablation_variant(base: &GeneratorConfig, variant: AblationVariant) -> GeneratorConfig {
    let (mc, rb, cbam) = variant.flags();
    base.clone().with_flags(mc, rb, cbam)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// MRI + PET concatenated on the channel axis.
    pub in_channels: usize,
    pub channel_ladder: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            in_channels: 2,
            channel_ladder: vec![64, 128, 256],
            leaky_slope: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    pub fn tiny() -> Self {
        DiscriminatorConfig {
            in_channels: 2,
            channel_ladder: vec![4, 8, 16],
            leaky_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_ladder.is_empty() {
            return Err(Error::Config("discriminator ladder must be nonempty".into()));
        }
        Ok(())
    }

    /// Patch-logit map size for a square input: three stride-2 4x4 convs
    /// then a stride-1 4x4 head.
    pub fn patch_map_size(&self, mut s: usize) -> usize {
        for _ in 0..self.channel_ladder.len() {
            s = (s + 2 - 4) / 2 + 1;
        }
        s + 2 - 4 + 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub in_channels: usize,
    /// Five conv blocks, two 3x3 convs each; max-pool after the first four.
    pub channel_ladder: Vec<usize>,
    pub hidden: Vec<usize>,
    pub dropout_p: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            in_channels: 1,
            channel_ladder: vec![16, 32, 64, 128, 256],
            hidden: vec![128, 64],
            dropout_p: 0.3,
        }
    }
}

impl ClassifierConfig {
    pub fn tiny() -> Self {
        ClassifierConfig {
            in_channels: 1,
            channel_ladder: vec![4, 8, 16, 32, 64],
            hidden: vec![16, 8],
            dropout_p: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_ladder.len() != 5 {
            return Err(Error::Config(format!(
                "classifier ladder must list 5 block widths, got {:?}",
                self.channel_ladder
            )));
        }
        if self.hidden.len() != 2 {
            return Err(Error::Config("classifier needs exactly 2 hidden sizes".into()));
        }
        Ok(())
    }
}
