//! Downstream diagnosis classifier: five double-conv blocks with batch norm,
//! max-pooling after the first four, global average pooling and a two-layer
//! fully connected head with dropout, ending in one sigmoid probability
//! (CN group vs MCI/AD group, threshold 0.5).

use mcr_autodiff::Var;

use crate::error::{Error, Result};
use crate::nn::{global_avg_pool, max_pool2, BatchNorm2d, Conv2d, Ctx, Linear, NetBuilder, VarStore};
use super::ClassifierConfig;

pub struct Classifier {
    pub config: ClassifierConfig,
    blocks: Vec<ClassifierBlock>,
    fc1: Linear,
    fc2: Linear,
    out: Linear,
}

struct ClassifierBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    pool: bool,
}

impl Classifier {
    pub fn build(config: &ClassifierConfig, seed: u64) -> Result<(Classifier, VarStore)> {
        config.validate()?;
        let mut vs = VarStore::new();
        let mut nb = NetBuilder::new(&mut vs, seed);
        let mut blocks = Vec::new();
        let mut in_c = config.in_channels;
        for (i, &out_c) in config.channel_ladder.iter().enumerate() {
            blocks.push(ClassifierBlock {
                conv1: Conv2d::new(&mut nb, &format!("cls.b{i}.conv1"), in_c, out_c, 3, 1, 1, true),
                bn1: BatchNorm2d::new(&mut nb, &format!("cls.b{i}.bn1"), out_c),
                conv2: Conv2d::new(&mut nb, &format!("cls.b{i}.conv2"), out_c, out_c, 3, 1, 1, true),
                bn2: BatchNorm2d::new(&mut nb, &format!("cls.b{i}.bn2"), out_c),
                pool: i < 4,
            });
            in_c = out_c;
        }
        let fc1 = Linear::new(&mut nb, "cls.fc1", in_c, config.hidden[0]);
        let fc2 = Linear::new(&mut nb, "cls.fc2", config.hidden[0], config.hidden[1]);
        let out = Linear::new(&mut nb, "cls.out", config.hidden[1], 1);
        Ok((
            Classifier {
                config: config.clone(),
                blocks,
                fc1,
                fc2,
                out,
            },
            vs,
        ))
    }

    /// Probabilities in [0, 1], one per batch row; input [n, 1, s, s].
    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let sh = x.shape();
        if sh.len() != 4 || sh[1] != self.config.in_channels {
            return Err(Error::Shape(format!(
                "classifier expects [n, {}, s, s], got {:?}",
                self.config.in_channels, sh
            )));
        }
        if sh[2] % 16 != 0 || sh[3] % 16 != 0 {
            return Err(Error::Shape(format!(
                "classifier input must be divisible by 16 for four pooling stages, got {:?}",
                &sh[2..]
            )));
        }
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.bn1.forward(ctx, &b.conv1.forward(ctx, &h)).relu();
            h = b.bn2.forward(ctx, &b.conv2.forward(ctx, &h)).relu();
            if b.pool {
                h = max_pool2(&h);
            }
        }
        let mut v = global_avg_pool(&h); // [n, c]
        v = ctx.dropout(&self.fc1.forward(ctx, &v).relu(), self.config.dropout_p);
        v = ctx.dropout(&self.fc2.forward(ctx, &v).relu(), self.config.dropout_p);
        let logits = self.out.forward(ctx, &v); // [n, 1]
        Ok(logits.reshape(&[sh[0]]).sigmoid())
    }
}

/// Threshold rule shared by training accuracy and evaluation.
pub fn predicted_label(prob: f64) -> u8 {
    if prob > 0.5 {
        1
    } else {
        0
    }
}
