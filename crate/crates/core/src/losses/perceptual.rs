//! Feature extractors behind the perceptual loss.
//!
//! Two backends share one interface: a seeded `fixed_random` stack that
//! ships with the repository (tests and phantom runs need no downloaded
//! weights), and a VGG16 backend that loads pretrained convolution weights
//! from a checkpoint-format file and taps the relu1_2 / relu2_2 / relu3_3 /
//! relu4_3 activations.

use std::path::{Path, PathBuf};

use mcr_autodiff::{conv2d, ConvSpec, Var};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::checkpoint::load_checkpoint;
use crate::nn::max_pool2;
use crate::seeds;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "backend")]
pub enum PerceptualBackend {
    /// Seeded random convolution stack; deterministic and self-contained.
    FixedRandom { seed: u64 },
    /// Pretrained VGG16 convolution weights loaded from `weights`.
    Vgg16 { weights: PathBuf },
}

impl Default for PerceptualBackend {
    fn default() -> Self {
        PerceptualBackend::FixedRandom { seed: 0 }
    }
}

enum Step {
    /// Convolution (weight index into `weights`), 3x3 pad 1, plus ReLU.
    ConvRelu,
    /// 2x2 max pool.
    Pool,
    /// Emit the current activation as a feature layer.
    Tap,
}

/// Deterministic feature extractor: same input, same features.
pub struct FeatureExtractor {
    steps: Vec<Step>,
    weights: Vec<(ArrayD<f64>, ArrayD<f64>)>, // (w [out, in*9], bias [out])
    mean: [f64; 3],
    std: [f64; 3],
}

impl FeatureExtractor {
    pub fn from_backend(backend: &PerceptualBackend) -> Result<Self> {
        match backend {
            PerceptualBackend::FixedRandom { seed } => Ok(Self::fixed_random(*seed)),
            PerceptualBackend::Vgg16 { weights } => Self::vgg16(weights),
        }
    }

    /// Three-tap random stack: conv(3->8), pool, conv(8->16), pool,
    /// conv(16->16); a feature layer after each ReLU.
    pub fn fixed_random(seed: u64) -> Self {
        let mut rng = seeds::rng_from(seed, &["fixed-random-extractor"]);
        let mut weights = Vec::new();
        let mut mk = |in_c: usize, out_c: usize| {
            let std = (2.0 / (in_c as f64 * 9.0)).sqrt();
            let w = ArrayD::from_shape_vec(
                IxDyn(&[out_c, in_c * 9]),
                (0..out_c * in_c * 9).map(|_| seeds::randn(&mut rng) * std).collect(),
            )
            .unwrap();
            let b = ArrayD::zeros(IxDyn(&[out_c]));
            (w, b)
        };
        weights.push(mk(3, 8));
        weights.push(mk(8, 16));
        weights.push(mk(16, 16));
        use Step::*;
        FeatureExtractor {
            steps: vec![ConvRelu, Tap, Pool, ConvRelu, Tap, Pool, ConvRelu, Tap],
            weights,
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }

    /// VGG16 features through relu4_3. The weights file is a checkpoint
    /// with tensors `conv0.w`/`conv0.b` .. `conv9.w`/`conv9.b` in VGG16
    /// convolution order (widths 64,64,128,128,256,256,256,512,512,512).
    pub fn vgg16(path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path).map_err(|e| {
            Error::Config(format!(
                "perceptual backend vgg16: cannot load weights from {}: {e}",
                path.display()
            ))
        })?;
        let map = ckpt.tensor_map();
        let widths = [64usize, 64, 128, 128, 256, 256, 256, 512, 512, 512];
        let mut in_c = 3usize;
        let mut weights = Vec::new();
        for (i, &out_c) in widths.iter().enumerate() {
            let w = map
                .get(&format!("conv{i}.w"))
                .ok_or_else(|| Error::Config(format!("vgg16 weights missing conv{i}.w")))?;
            let b = map
                .get(&format!("conv{i}.b"))
                .ok_or_else(|| Error::Config(format!("vgg16 weights missing conv{i}.b")))?;
            if w.shape() != [out_c, in_c * 9] || b.shape() != [out_c] {
                return Err(Error::Config(format!(
                    "vgg16 conv{i} has shape {:?}, expected [{out_c}, {}]",
                    w.shape(),
                    in_c * 9
                )));
            }
            weights.push((w.clone(), b.clone()));
            in_c = out_c;
        }
        use Step::*;
        // conv1_1 conv1_2 | pool | conv2_1 conv2_2 | pool | conv3_1..3 | pool | conv4_1..3
        let steps = vec![
            ConvRelu, ConvRelu, Tap, Pool, // relu1_2
            ConvRelu, ConvRelu, Tap, Pool, // relu2_2
            ConvRelu, ConvRelu, ConvRelu, Tap, Pool, // relu3_3
            ConvRelu, ConvRelu, ConvRelu, Tap, // relu4_3
        ];
        Ok(FeatureExtractor {
            steps,
            weights,
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        })
    }

    pub fn n_layers(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Tap)).count()
    }

    /// Feature maps for a [-1, 1] single-channel batch [n, 1, h, w]:
    /// remapped to [0, 1], replicated to three channels, normalized with the
    /// backend statistics, then run through the stack.
    pub fn features(&self, x: &Var) -> Result<Vec<Var>> {
        let sh = x.shape();
        if sh.len() != 4 || sh[1] != 1 {
            return Err(Error::Shape(format!(
                "feature extractor expects [n, 1, h, w], got {:?}",
                sh
            )));
        }
        let tape = x.tape();
        let (n, h, w) = (sh[0], sh[2], sh[3]);
        let x01 = x.add_scalar(1.0).mul_scalar(0.5);
        let mut chans: Option<Var> = None;
        for c in 0..3 {
            let ch = x01.add_scalar(-self.mean[c]).mul_scalar(1.0 / self.std[c]);
            chans = Some(match chans {
                Some(prev) => prev.concat(&ch, 1),
                None => ch,
            });
        }
        let mut cur = chans.unwrap();
        debug_assert_eq!(cur.shape(), vec![n, 3, h, w]);

        let spec = ConvSpec::square(3, 1, 1);
        let mut taps = Vec::new();
        let mut wi = 0usize;
        for step in &self.steps {
            match step {
                Step::ConvRelu => {
                    let (w, b) = &self.weights[wi];
                    wi += 1;
                    let wv = tape.constant(w.clone());
                    let bv = tape.constant(b.clone());
                    cur = conv2d(&cur, &wv, Some(&bv), spec).relu();
                }
                Step::Pool => cur = max_pool2(&cur),
                Step::Tap => taps.push(cur.clone()),
            }
        }
        Ok(taps)
    }
}
