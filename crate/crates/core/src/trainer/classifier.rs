//! Classifier training (focal loss, Adam, exponential decay, augmentations)
//! and the subject-level aggregation rule.

use std::collections::HashMap;
use std::path::Path;

use mcr_autodiff::Tape;
use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint, verify_compat, Checkpoint};
use crate::losses::focal_loss;
use crate::networks::Classifier;
use crate::nn::{Ctx, VarStore};
use crate::seeds;
use super::augment::{augment_slice, AugmentRanges};
use super::optimizer::AdamW;
use super::schedules::exp_lr;

/// Majority vote over slice probabilities: label 1 when strictly more than
/// half the slices exceed 0.5; ties resolve by the mean probability, with
/// an exact 0.5 mean mapping to label 0.
pub fn aggregate_subject_prediction(slice_probs: &[f64]) -> Result<(u8, f64)> {
    if slice_probs.is_empty() {
        return Err(Error::Data("no slice probabilities to aggregate".into()));
    }
    let n = slice_probs.len();
    let positives = slice_probs.iter().filter(|&&p| p > 0.5).count();
    let mean = slice_probs.iter().sum::<f64>() / n as f64;
    let label = if 2 * positives > n {
        1
    } else if 2 * positives < n {
        0
    } else {
        u8::from(mean > 0.5)
    };
    Ok((label, mean))
}

/// One labeled training slice (label 0 = CN group, 1 = MCI/AD group).
#[derive(Debug, Clone)]
pub struct LabeledSlice {
    pub image: Array2<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierEpochLog {
    pub epoch: u64,
    pub lr: f64,
    pub loss: f64,
    pub train_accuracy: f64,
}

pub struct ClassifierTrainer {
    pub cfg: RunConfig,
    pub cls: Classifier,
    pub vs: VarStore,
    pub opt: AdamW,
    pub epoch: u64,
}

impl ClassifierTrainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (cls, vs) = Classifier::build(
            &cfg.classifier,
            seeds::derive_seed(cfg.run.seed, &["classifier-init"]),
        )?;
        Ok(ClassifierTrainer {
            cfg: cfg.clone(),
            cls,
            vs,
            // the published classifier recipe uses plain Adam
            opt: AdamW::new(0.9, 0.999, 0.0),
            epoch: 0,
        })
    }

    fn batch_array(slices: &[&Array2<f64>]) -> ArrayD<f64> {
        let (h, w) = slices[0].dim();
        let mut out = ArrayD::zeros(IxDyn(&[slices.len(), 1, h, w]));
        for (i, s) in slices.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    out[[i, 0, y, x]] = s[[y, x]];
                }
            }
        }
        out
    }

    /// Train until `cfg.classifier_train.epochs`.
    pub fn train(
        &mut self,
        dataset: &[LabeledSlice],
        mut on_epoch: impl FnMut(&ClassifierEpochLog),
    ) -> Result<Vec<ClassifierEpochLog>> {
        if dataset.is_empty() {
            return Err(Error::Data("empty classifier dataset".into()));
        }
        if dataset.iter().all(|s| s.label == 0) || dataset.iter().all(|s| s.label == 1) {
            return Err(Error::Data("classifier dataset has a single class".into()));
        }
        let seed = self.cfg.run.seed;
        let tcfg = self.cfg.classifier_train.clone();
        let ranges = AugmentRanges::default();
        let mut logs = Vec::new();
        while self.epoch < tcfg.epochs {
            let epoch = self.epoch;
            let lr = exp_lr(epoch, tcfg.lr_init, tcfg.gamma);
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            let mut order_rng = seeds::rng_indexed(seed, &["cls-order"], &[epoch]);
            order.shuffle(&mut order_rng);

            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            let mut steps = 0usize;
            for (bi, chunk) in order.chunks(tcfg.batch_size).enumerate() {
                let mut aug_rng = seeds::rng_indexed(seed, &["cls-aug"], &[epoch, bi as u64]);
                let augmented: Vec<Array2<f64>> = chunk
                    .iter()
                    .map(|&i| {
                        if tcfg.augment {
                            augment_slice(&dataset[i].image, &ranges, &mut aug_rng)
                        } else {
                            dataset[i].image.clone()
                        }
                    })
                    .collect();
                let refs: Vec<&Array2<f64>> = augmented.iter().collect();
                let labels: Vec<f64> = chunk.iter().map(|&i| dataset[i].label as f64).collect();

                let tape = Tape::new();
                let ctx = Ctx::new(tape.clone(), &self.vs, true).with_dropout_seed(
                    seeds::derive_seed_indexed(seed, &["cls-dropout"], &[epoch, bi as u64]),
                );
                let x = tape.constant(Self::batch_array(&refs));
                let probs = self.cls.forward(&ctx, &x)?;
                let label_t = tape.constant(
                    ArrayD::from_shape_vec(IxDyn(&[labels.len()]), labels.clone()).unwrap(),
                );
                let loss = focal_loss(
                    &probs,
                    &label_t,
                    self.cfg.loss.focal_alpha,
                    self.cfg.loss.focal_gamma,
                )?;
                let grads = tape.backward(&loss);
                let pairs: Vec<(String, ArrayD<f64>)> = ctx
                    .bound_params()
                    .into_iter()
                    .map(|(n, v)| (n, grads.value_or_zero(&v)))
                    .collect();
                let buffer_updates = ctx.take_buffer_updates();
                drop(ctx);
                self.opt.step(&mut self.vs, &pairs, lr);
                for (name, value) in buffer_updates {
                    self.vs.set(&name, value);
                }

                let pv = probs.value();
                for (p, l) in pv.iter().zip(labels.iter()) {
                    if (crate::networks::predicted_label(*p) as f64 - l).abs() < 0.5 {
                        correct += 1;
                    }
                }
                loss_sum += loss.scalar_value();
                steps += 1;
                if !loss_sum.is_finite() {
                    return Err(Error::Divergence(format!(
                        "classifier loss non-finite at epoch {epoch} batch {bi}"
                    )));
                }
            }
            let log = ClassifierEpochLog {
                epoch,
                lr,
                loss: loss_sum / steps.max(1) as f64,
                train_accuracy: correct as f64 / dataset.len() as f64,
            };
            on_epoch(&log);
            logs.push(log);
            self.epoch += 1;
        }
        Ok(logs)
    }

    /// Eval-mode probability for one slice.
    pub fn predict(&self, slice: &Array2<f64>) -> Result<f64> {
        let tape = Tape::new();
        let ctx = Ctx::frozen(tape.clone(), &self.vs, false);
        let x = tape.constant(Self::batch_array(&[slice]));
        Ok(self.cls.forward(&ctx, &x)?.value()[[0]])
    }

    /// Eval-mode accuracy over labeled slices.
    pub fn evaluate_accuracy(&self, dataset: &[LabeledSlice]) -> Result<f64> {
        let mut correct = 0usize;
        for s in dataset {
            let p = self.predict(&s.image)?;
            if crate::networks::predicted_label(p) == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, ArrayD<f64>)> = Vec::new();
        for (name, _, arr) in self.vs.iter() {
            tensors.push((format!("cls/{name}"), arr.clone()));
        }
        tensors.extend(self.opt.export_state("opt"));
        Checkpoint {
            kind: "classifier".into(),
            config_hash: self.cfg.classifier_hash(),
            epoch: self.epoch,
            root_seed: self.cfg.run.seed,
            tensors,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load_checkpoint_file(cfg: &RunConfig, path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        verify_compat(&ckpt, "classifier", &cfg.classifier_hash())?;
        let mut t = Self::new(cfg)?;
        t.vs.load_from(&ckpt.tensors_with_prefix("cls"))?;
        let map: HashMap<String, ArrayD<f64>> = ckpt.tensor_map();
        t.opt.import_state("opt", &map);
        t.epoch = ckpt.epoch;
        Ok(t)
    }
}
