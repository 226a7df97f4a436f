//! The MRI-to-PET generator: encoder -> vector quantization -> decoder.
//!
//! Encoder: 7x7 stem, three stride-2 stages (multi-scale convolutions with
//! CBAM in the full model), then the encoding residual stack. A 1x1
//! projection maps into the codebook space; quantized vectors map back
//! through a second 1x1 before the decoding residual stack, three
//! transposed-conv upsampling stages and a 7x7 tanh head.

use mcr_autodiff::Var;
use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::{
    Cbam, Codebook, Conv2d, ConvMode, ConvTranspose2d, Ctx, InstanceNorm2d, MultiScaleConv,
    NetBuilder, ResBlock, VarStore,
};
use crate::nn::straight_through;
use super::GeneratorConfig;

struct EncStage {
    conv_ms: Option<MultiScaleConv>,
    conv_std: Option<Conv2d>,
    norm: InstanceNorm2d,
    cbam: Option<Cbam>,
}

struct DecStage {
    up: ConvTranspose2d,
    conv: Conv2d,
    norm: InstanceNorm2d,
    cbam: Option<Cbam>,
}

pub struct Generator {
    pub config: GeneratorConfig,
    stem: Conv2d,
    stem_norm: InstanceNorm2d,
    stages: Vec<EncStage>,
    enc_res: Vec<ResBlock>,
    pre_quant: Conv2d,
    post_quant: Conv2d,
    dec_res: Vec<ResBlock>,
    ups: Vec<DecStage>,
    head: Conv2d,
}

/// Forward products: the synthesized slice plus what the VQ objective needs.
pub struct GeneratorOutput {
    pub pet_hat: Var,
    /// Encoder vectors in codebook space, [n*latent*latent, D].
    pub encoder_out: Var,
    /// Quantized vectors (constant node), same shape.
    pub z_q: Var,
    pub indices: Vec<usize>,
}

impl Generator {
    pub fn build(config: &GeneratorConfig, seed: u64) -> Result<(Generator, VarStore)> {
        config.validate()?;
        let mut vs = VarStore::new();
        let mut nb = NetBuilder::new(&mut vs, seed);
        let lad = &config.channel_ladder;
        let cbam_r = config.use_cbam.then_some(config.cbam_reduction);

        let stem = Conv2d::new(&mut nb, "enc.stem", config.in_channels, lad[0], 7, 1, 3, true);
        let stem_norm = InstanceNorm2d::new(&mut nb, "enc.stem_norm", lad[0]);

        let mut stages = Vec::new();
        for i in 0..3 {
            let (in_c, out_c) = (lad[i], lad[i + 1]);
            let name = format!("enc.stage{i}");
            let (conv_ms, conv_std) = if config.use_multiscale {
                (
                    Some(MultiScaleConv::new(&mut nb, &format!("{name}.conv"), in_c, out_c, 2, None)),
                    None,
                )
            } else {
                (
                    None,
                    Some(Conv2d::new(&mut nb, &format!("{name}.conv"), in_c, out_c, 3, 2, 1, true)),
                )
            };
            let norm = InstanceNorm2d::new(&mut nb, &format!("{name}.norm"), out_c);
            let cbam = match cbam_r {
                Some(r) => Some(Cbam::new(&mut nb, &format!("{name}.cbam"), out_c, r)?),
                None => None,
            };
            stages.push(EncStage {
                conv_ms,
                conv_std,
                norm,
                cbam,
            });
        }

        let latent_c = config.latent_channels();
        let enc_mode = if config.use_multiscale {
            ConvMode::MultiScale
        } else {
            ConvMode::Standard3x3
        };
        let mut enc_res = Vec::new();
        for i in 0..config.effective_res_blocks() {
            enc_res.push(ResBlock::new(
                &mut nb,
                &format!("enc.res{i}"),
                latent_c,
                enc_mode,
                config.dropout_p,
                cbam_r,
            )?);
        }

        let pre_quant = Conv2d::new(&mut nb, "vq.pre", latent_c, config.codebook_d, 1, 1, 0, true);
        let post_quant = Conv2d::new(&mut nb, "vq.post", config.codebook_d, latent_c, 1, 1, 0, true);

        let mut dec_res = Vec::new();
        for i in 0..config.effective_res_blocks() {
            dec_res.push(ResBlock::new(
                &mut nb,
                &format!("dec.res{i}"),
                latent_c,
                ConvMode::Standard3x3,
                config.dropout_p,
                cbam_r,
            )?);
        }

        let mut ups = Vec::new();
        for i in 0..3 {
            let (in_c, out_c) = (lad[3 - i], lad[2 - i]);
            let name = format!("dec.up{i}");
            let up = ConvTranspose2d::new(&mut nb, &format!("{name}.up"), in_c, out_c, 4, 2, 1, true);
            let conv = Conv2d::new(&mut nb, &format!("{name}.conv"), out_c, out_c, 3, 1, 1, true);
            let norm = InstanceNorm2d::new(&mut nb, &format!("{name}.norm"), out_c);
            let cbam = match cbam_r {
                Some(r) => Some(Cbam::new(&mut nb, &format!("{name}.cbam"), out_c, r)?),
                None => None,
            };
            ups.push(DecStage { up, conv, norm, cbam });
        }

        let head = Conv2d::new(&mut nb, "dec.head", lad[0], config.in_channels, 7, 1, 3, true);

        Ok((
            Generator {
                config: config.clone(),
                stem,
                stem_norm,
                stages,
                enc_res,
                pre_quant,
                post_quant,
                dec_res,
                ups,
                head,
            },
            vs,
        ))
    }

    /// Full forward pass. `frozen_indices` replaces the nearest-neighbor
    /// assignment (used to hold quantization fixed in gradient checks).
    pub fn forward(
        &self,
        ctx: &Ctx,
        mri: &Var,
        codebook: &Codebook,
        frozen_indices: Option<&[usize]>,
    ) -> Result<GeneratorOutput> {
        let sh = mri.shape();
        if sh.len() != 4 || sh[1] != self.config.in_channels || sh[2] != sh[3] || sh[2] % 8 != 0 {
            return Err(Error::Shape(format!(
                "generator expects [n, {}, s, s] with s divisible by 8, got {:?}",
                self.config.in_channels, sh
            )));
        }
        let n = sh[0];

        let mut x = self.stem_norm.forward(ctx, &self.stem.forward(ctx, mri)).relu();
        for stage in &self.stages {
            let y = match (&stage.conv_ms, &stage.conv_std) {
                (Some(ms), _) => ms.forward(ctx, &x),
                (_, Some(c)) => c.forward(ctx, &x),
                _ => unreachable!(),
            };
            x = stage.norm.forward(ctx, &y).relu();
            if let Some(cbam) = &stage.cbam {
                x = cbam.forward(ctx, &x);
            }
        }
        for block in &self.enc_res {
            x = block.forward(ctx, &x);
        }

        let z_map = self.pre_quant.forward(ctx, &x); // [n, D, hs, ws]
        let zs = z_map.shape();
        let (d, hs, ws) = (zs[1], zs[2], zs[3]);
        let n_vec = n * hs * ws;
        let encoder_out = z_map.permute(&[0, 2, 3, 1]).reshape(&[n_vec, d]);

        let z_value = encoder_out.value();
        let z2 = z_value.into_dimensionality::<ndarray::Ix2>().unwrap();
        let (zq_arr, indices) = match frozen_indices {
            Some(fixed) => {
                if fixed.len() != n_vec {
                    return Err(Error::Shape(format!(
                        "frozen indices: {} given, {} latent vectors",
                        fixed.len(),
                        n_vec
                    )));
                }
                let mut zq = Array2::<f64>::zeros((n_vec, d));
                for (i, &k) in fixed.iter().enumerate() {
                    zq.row_mut(i).assign(&codebook.embeddings.row(k));
                }
                (zq, fixed.to_vec())
            }
            None => codebook.lookup(z2.view())?,
        };
        let z_q = ctx
            .tape
            .constant(ArrayD::from_shape_vec(IxDyn(&[n_vec, d]), zq_arr.into_raw_vec_and_offset().0).unwrap());

        let st = straight_through(&encoder_out, &z_q)?;
        let mut y = self
            .post_quant
            .forward(ctx, &st.reshape(&[n, hs, ws, d]).permute(&[0, 3, 1, 2]));

        for block in &self.dec_res {
            y = block.forward(ctx, &y);
        }
        for stage in &self.ups {
            y = stage.up.forward(ctx, &y);
            y = stage.norm.forward(ctx, &stage.conv.forward(ctx, &y)).relu();
            if let Some(cbam) = &stage.cbam {
                y = cbam.forward(ctx, &y);
            }
        }
        let pet_hat = self.head.forward(ctx, &y).tanh();

        Ok(GeneratorOutput {
            pet_hat,
            encoder_out,
            z_q,
            indices,
        })
    }
}
