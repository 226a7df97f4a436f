//! Conditional PatchGAN discriminator over (MRI, PET) channel pairs:
//! three stride-2 4x4 convolutions with instance norm and LeakyReLU,
//! then a stride-1 4x4 single-channel head of patch logits.

use mcr_autodiff::Var;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Ctx, InstanceNorm2d, NetBuilder, VarStore};
use super::DiscriminatorConfig;

pub struct Discriminator {
    pub config: DiscriminatorConfig,
    convs: Vec<(Conv2d, InstanceNorm2d)>,
    head: Conv2d,
}

impl Discriminator {
    pub fn build(config: &DiscriminatorConfig, seed: u64) -> Result<(Discriminator, VarStore)> {
        config.validate()?;
        let mut vs = VarStore::new();
        let mut nb = NetBuilder::new(&mut vs, seed);
        let mut convs = Vec::new();
        let mut in_c = config.in_channels;
        for (i, &out_c) in config.channel_ladder.iter().enumerate() {
            let conv = Conv2d::new(&mut nb, &format!("disc.conv{i}"), in_c, out_c, 4, 2, 1, true);
            let norm = InstanceNorm2d::new(&mut nb, &format!("disc.norm{i}"), out_c);
            convs.push((conv, norm));
            in_c = out_c;
        }
        let head = Conv2d::new(&mut nb, "disc.head", in_c, 1, 4, 1, 1, true);
        Ok((
            Discriminator {
                config: config.clone(),
                convs,
                head,
            },
            vs,
        ))
    }

    /// Patch logits for an (mri, pet) pair, both [n, 1, h, w].
    pub fn forward(&self, ctx: &Ctx, mri: &Var, pet: &Var) -> Result<Var> {
        if mri.shape() != pet.shape() {
            return Err(Error::Shape(format!(
                "discriminator inputs differ: {:?} vs {:?}",
                mri.shape(),
                pet.shape()
            )));
        }
        let sh = mri.shape();
        if sh.len() != 4 || sh[1] * 2 != self.config.in_channels {
            return Err(Error::Shape(format!(
                "discriminator expects two [n, {}, h, w] inputs, got {:?}",
                self.config.in_channels / 2,
                sh
            )));
        }
        let mut x = mri.concat(pet, 1);
        for (conv, norm) in &self.convs {
            x = norm
                .forward(ctx, &conv.forward(ctx, &x))
                .leaky_relu(self.config.leaky_slope);
        }
        Ok(self.head.forward(ctx, &x))
    }
}
