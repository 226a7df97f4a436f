//! Adversarial training loop: one discriminator update (BCE with smoothed
//! real labels plus the R1 penalty on real inputs, noise-perturbed fakes),
//! then one generator update (the weighted four-term objective), then the
//! codebook EMA update. All per-step randomness derives from
//! (seed, epoch, step), so a resumed run replays the uninterrupted one.

use std::collections::HashMap;
use std::path::Path;

use mcr_autodiff::Tape;
use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::datamodel::SlicePair;
use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint, verify_compat, Checkpoint};
use crate::losses::{
    adv_loss_g, disc_loss, generator_total, perceptual_loss, r1_penalty, rec_loss, vq_loss,
    FeatureExtractor,
};
use crate::networks::{Discriminator, Generator};
use crate::nn::{Codebook, Ctx, VarStore};
use crate::seeds;
use super::optimizer::AdamW;
use super::schedules::{cosine_lr, noise_sigma_sq, smooth_real_labels};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub loss_d: f64,
    pub d_bce: f64,
    pub r1: f64,
    pub loss_g: f64,
    pub adv: f64,
    pub rec: f64,
    pub perc: f64,
    pub vq: f64,
    pub perplexity: f64,
}

impl StepReport {
    pub fn all_finite(&self) -> bool {
        [
            self.loss_d, self.d_bce, self.r1, self.loss_g, self.adv, self.rec, self.perc,
            self.vq, self.perplexity,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// One JSON line per epoch in the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub lr: f64,
    pub sigma_sq: f64,
    pub loss_d: f64,
    pub d_bce: f64,
    pub r1: f64,
    pub loss_g: f64,
    pub adv: f64,
    pub rec: f64,
    pub perc: f64,
    pub vq: f64,
    pub perplexity: f64,
    /// Hash of the batch sequence; equal across runs seeing identical data.
    pub batch_hash: String,
}

pub struct GanTrainer {
    pub cfg: RunConfig,
    pub gen: Generator,
    pub gen_vs: VarStore,
    pub disc: Discriminator,
    pub disc_vs: VarStore,
    pub codebook: Codebook,
    pub opt_g: AdamW,
    pub opt_d: AdamW,
    extractor: FeatureExtractor,
    /// Next epoch to run (0-based).
    pub epoch: u64,
}

impl GanTrainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.run.seed;
        let (gen, gen_vs) = Generator::build(&cfg.model, seeds::derive_seed(seed, &["gen-init"]))?;
        let (disc, disc_vs) =
            Discriminator::build(&cfg.disc, seeds::derive_seed(seed, &["disc-init"]))?;
        let mut cb_rng = seeds::rng_from(seed, &["codebook-init"]);
        let codebook = Codebook::new(cfg.model.codebook_k, cfg.model.codebook_d, &mut cb_rng);
        let extractor = FeatureExtractor::from_backend(&cfg.perceptual)?;
        Ok(GanTrainer {
            cfg: cfg.clone(),
            gen,
            gen_vs,
            disc,
            disc_vs,
            codebook,
            opt_g: AdamW::new(cfg.train.beta1, cfg.train.beta2, cfg.train.weight_decay),
            opt_d: AdamW::new(cfg.train.beta1, cfg.train.beta2, cfg.train.weight_decay),
            extractor,
            epoch: 0,
        })
    }

    fn batch_to_array(slices: &[&SlicePair], field: impl Fn(&SlicePair) -> &Array2<f64>) -> ArrayD<f64> {
        let (h, w) = field(slices[0]).dim();
        let mut out = ArrayD::zeros(IxDyn(&[slices.len(), 1, h, w]));
        for (i, s) in slices.iter().enumerate() {
            let src = field(s);
            for y in 0..h {
                for x in 0..w {
                    out[[i, 0, y, x]] = src[[y, x]];
                }
            }
        }
        out
    }

    fn gaussian_noise(shape: &[usize], sigma_sq: f64, seed: u64) -> ArrayD<f64> {
        if sigma_sq <= 0.0 {
            return ArrayD::zeros(IxDyn(shape));
        }
        let sigma = sigma_sq.sqrt();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        ArrayD::from_shape_simple_fn(IxDyn(shape), || seeds::randn(&mut rng) * sigma)
    }

    /// One alternating update on a batch.
    pub fn train_step(&mut self, batch: &[&SlicePair], epoch: u64, step: u64) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Data("empty training batch".into()));
        }
        let seed = self.cfg.run.seed;
        let total_epochs = self.cfg.train.epochs;
        let lr = cosine_lr(epoch, total_epochs, self.cfg.train.lr_init)?;
        let sigma_sq = noise_sigma_sq(epoch, total_epochs, self.cfg.train.noise_sigma0)?;

        let mri_arr = Self::batch_to_array(batch, |s| &s.mri);
        let pet_arr = Self::batch_to_array(batch, |s| &s.pet);

        // ---- generator forward (shared by both updates) ----
        let tape_g = Tape::new();
        let ctx_g = Ctx::new(tape_g.clone(), &self.gen_vs, true).with_dropout_seed(
            seeds::derive_seed_indexed(seed, &["gen-dropout"], &[epoch, step]),
        );
        let mri_g = tape_g.constant(mri_arr.clone());
        let out = self.gen.forward(&ctx_g, &mri_g, &self.codebook, None)?;
        let fake_value = out.pet_hat.value();
        let encoder_vectors = out
            .encoder_out
            .value()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();

        // ---- discriminator update ----
        let tape_d = Tape::new();
        let ctx_d = Ctx::new(tape_d.clone(), &self.disc_vs, true);
        let mri_d = tape_d.constant(mri_arr.clone());
        let pet_real_d = tape_d.leaf(pet_arr.clone());
        let noise_d = Self::gaussian_noise(
            fake_value.shape(),
            sigma_sq,
            seeds::derive_seed_indexed(seed, &["noise-d"], &[epoch, step]),
        );
        let fake_d = tape_d.constant(&fake_value + &noise_d);
        let logits_real = self.disc.forward(&ctx_d, &mri_d, &pet_real_d)?;
        let logits_fake_d = self.disc.forward(&ctx_d, &mri_d, &fake_d)?;
        let mut label_rng = seeds::rng_indexed(seed, &["labels"], &[epoch, step]);
        let targets = tape_d.constant(smooth_real_labels(
            &logits_real.shape(),
            self.cfg.train.label_smooth_lo,
            self.cfg.train.label_smooth_hi,
            &mut label_rng,
        ));
        let d_bce = disc_loss(&logits_real, &logits_fake_d, &targets)?;
        let r1 = r1_penalty(&tape_d, &logits_real, &pet_real_d, self.cfg.loss.r1_gamma)?;
        let loss_d = d_bce.add(&r1);
        let grads_d = tape_d.backward(&loss_d);
        let pairs_d: Vec<(String, ArrayD<f64>)> = ctx_d
            .bound_params()
            .into_iter()
            .map(|(n, v)| {
                let g = grads_d.value_or_zero(&v);
                (n, g)
            })
            .collect();
        self.opt_d.step(&mut self.disc_vs, &pairs_d, lr);

        // ---- generator update against the updated discriminator ----
        let ctx_d_frozen = Ctx::frozen(tape_g.clone(), &self.disc_vs, true);
        let noise_g = tape_g.constant(Self::gaussian_noise(
            fake_value.shape(),
            sigma_sq,
            seeds::derive_seed_indexed(seed, &["noise-g"], &[epoch, step]),
        ));
        let fake_g = out.pet_hat.add(&noise_g);
        let logits_fake_g = self.disc.forward(&ctx_d_frozen, &mri_g, &fake_g)?;
        let adv = adv_loss_g(&logits_fake_g);
        let pet_real_g = tape_g.constant(pet_arr);
        let rec = rec_loss(&pet_real_g, &out.pet_hat)?;
        let perc = perceptual_loss(&pet_real_g, &out.pet_hat, &self.extractor)?;
        let vq = vq_loss(&out.encoder_out, &out.z_q, self.cfg.loss.commitment_beta)?;
        let loss_g = generator_total(&adv, &rec, &perc, &vq, &self.cfg.loss);
        let grads_g = tape_g.backward(&loss_g);
        let pairs_g: Vec<(String, ArrayD<f64>)> = ctx_g
            .bound_params()
            .into_iter()
            .map(|(n, v)| {
                let g = grads_g.value_or_zero(&v);
                (n, g)
            })
            .collect();
        self.opt_g.step(&mut self.gen_vs, &pairs_g, lr);

        // ---- codebook EMA update on this batch's encoder outputs ----
        self.codebook.ema_update(encoder_vectors.view(), &out.indices)?;
        let perplexity = self.codebook.perplexity(&out.indices);

        let report = StepReport {
            loss_d: loss_d.scalar_value(),
            d_bce: d_bce.scalar_value(),
            r1: r1.scalar_value(),
            loss_g: loss_g.scalar_value(),
            adv: adv.scalar_value(),
            rec: rec.scalar_value(),
            perc: perc.scalar_value(),
            vq: vq.scalar_value(),
            perplexity,
        };
        if !report.all_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss at epoch {epoch} step {step}: {}",
                serde_json::to_string(&report).unwrap_or_default()
            )));
        }
        Ok(report)
    }

    /// Deterministic epoch ordering: a seeded shuffle of slice indices.
    pub fn epoch_order(&self, n: usize, epoch: u64) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seeds::rng_indexed(self.cfg.run.seed, &["batch-order"], &[epoch]);
        order.shuffle(&mut rng);
        order
    }

    /// Train up to `cfg.train.epochs`, checkpointing every
    /// `cfg.train.checkpoint_every` epochs into `ckpt_dir` when given.
    /// Returns the per-epoch logs for epochs run in this call.
    pub fn train(
        &mut self,
        dataset: &[SlicePair],
        ckpt_dir: Option<&Path>,
        on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>> {
        let remaining = self.cfg.train.epochs.saturating_sub(self.epoch);
        self.train_epochs(dataset, ckpt_dir, remaining, on_epoch)
    }

    /// Run at most `n_epochs` more epochs (schedules still span the full
    /// `cfg.train.epochs`), e.g. to stop for an interruption test.
    pub fn train_epochs(
        &mut self,
        dataset: &[SlicePair],
        ckpt_dir: Option<&Path>,
        n_epochs: u64,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>> {
        if dataset.is_empty() {
            return Err(Error::Data("empty training dataset".into()));
        }
        let total = self.cfg.train.epochs.min(self.epoch + n_epochs);
        let mut logs = Vec::new();
        let mut rec_epoch1 = f64::NAN;
        let mut bad_epochs = 0usize;
        while self.epoch < total {
            let epoch = self.epoch;
            let order = self.epoch_order(dataset.len(), epoch);
            let mut hasher = Sha256::new();
            let mut sums = StepSums::default();
            let mut step = 0u64;
            for chunk in order.chunks(self.cfg.train.batch_size) {
                let batch: Vec<&SlicePair> = chunk.iter().map(|&i| &dataset[i]).collect();
                for s in &batch {
                    for v in s.mri.iter().chain(s.pet.iter()) {
                        hasher.update(v.to_le_bytes());
                    }
                }
                let report = self.train_step(&batch, epoch, step)?;
                sums.add(&report);
                step += 1;
            }
            let lr = cosine_lr(epoch, self.cfg.train.epochs, self.cfg.train.lr_init)?;
            let sigma_sq = noise_sigma_sq(epoch, self.cfg.train.epochs, self.cfg.train.noise_sigma0)?;
            let log = sums.into_log(epoch, lr, sigma_sq, format!("{:x}", hasher.finalize()));
            if epoch == 0 {
                rec_epoch1 = log.rec;
            }
            if rec_epoch1.is_finite() && log.rec > 10.0 * rec_epoch1 {
                bad_epochs += 1;
                if bad_epochs >= 3 {
                    return Err(Error::Divergence(format!(
                        "reconstruction loss {{ epoch {}: {:.6} }} exceeded 10x its first-epoch mean {:.6} for 3 consecutive epochs",
                        epoch, log.rec, rec_epoch1
                    )));
                }
            } else {
                bad_epochs = 0;
            }
            on_epoch(&log);
            logs.push(log);
            self.epoch += 1;
            let is_last = self.epoch == total;
            if let Some(dir) = ckpt_dir {
                if self.epoch % self.cfg.train.checkpoint_every == 0 || is_last {
                    let path = dir.join(format!("gan-epoch{:05}.ckpt", self.epoch));
                    save_checkpoint(&path, &self.to_checkpoint())?;
                }
            }
        }
        Ok(logs)
    }

    /// Synthesize a PET slice from a normalized MRI slice (eval mode, no
    /// noise, no dropout).
    pub fn synthesize(&self, mri: &Array2<f64>) -> Result<Array2<f64>> {
        let (h, w) = mri.dim();
        let tape = Tape::new();
        let ctx = Ctx::frozen(tape.clone(), &self.gen_vs, false);
        let input = tape.constant(
            ArrayD::from_shape_vec(IxDyn(&[1, 1, h, w]), mri.iter().cloned().collect()).unwrap(),
        );
        let out = self.gen.forward(&ctx, &input, &self.codebook, None)?;
        let v = out.pet_hat.value();
        Ok(Array2::from_shape_fn((h, w), |(y, x)| v[[0, 0, y, x]]))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, ArrayD<f64>)> = Vec::new();
        for (name, _, arr) in self.gen_vs.iter() {
            tensors.push((format!("gen/{name}"), arr.clone()));
        }
        for (name, _, arr) in self.disc_vs.iter() {
            tensors.push((format!("disc/{name}"), arr.clone()));
        }
        tensors.push(("codebook/embeddings".into(), self.codebook.embeddings.clone().into_dyn()));
        tensors.push((
            "codebook/cluster_size".into(),
            self.codebook.ema_cluster_size.clone().into_dyn(),
        ));
        tensors.push(("codebook/embed_sum".into(), self.codebook.ema_embed_sum.clone().into_dyn()));
        tensors.extend(self.opt_g.export_state("opt_g"));
        tensors.extend(self.opt_d.export_state("opt_d"));
        Checkpoint {
            kind: "gan".into(),
            config_hash: self.cfg.model_hash(),
            epoch: self.epoch,
            root_seed: self.cfg.run.seed,
            tensors,
        }
    }

    pub fn load_checkpoint_file(cfg: &RunConfig, path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        verify_compat(&ckpt, "gan", &cfg.model_hash())?;
        let mut t = Self::new(cfg)?;
        let map: HashMap<String, ArrayD<f64>> = ckpt.tensor_map();
        t.gen_vs.load_from(&ckpt.tensors_with_prefix("gen"))?;
        t.disc_vs.load_from(&ckpt.tensors_with_prefix("disc"))?;
        let get2 = |name: &str| -> Result<ndarray::Array2<f64>> {
            map.get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?
                .clone()
                .into_dimensionality::<ndarray::Ix2>()
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
        };
        let get1 = |name: &str| -> Result<ndarray::Array1<f64>> {
            map.get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?
                .clone()
                .into_dimensionality::<ndarray::Ix1>()
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
        };
        t.codebook.embeddings = get2("codebook/embeddings")?;
        t.codebook.ema_cluster_size = get1("codebook/cluster_size")?;
        t.codebook.ema_embed_sum = get2("codebook/embed_sum")?;
        t.opt_g.import_state("opt_g", &map);
        t.opt_d.import_state("opt_d", &map);
        t.epoch = ckpt.epoch;
        Ok(t)
    }
}

use rand::SeedableRng;

#[derive(Default)]
struct StepSums {
    n: usize,
    loss_d: f64,
    d_bce: f64,
    r1: f64,
    loss_g: f64,
    adv: f64,
    rec: f64,
    perc: f64,
    vq: f64,
    perplexity: f64,
}

impl StepSums {
    fn add(&mut self, r: &StepReport) {
        self.n += 1;
        self.loss_d += r.loss_d;
        self.d_bce += r.d_bce;
        self.r1 += r.r1;
        self.loss_g += r.loss_g;
        self.adv += r.adv;
        self.rec += r.rec;
        self.perc += r.perc;
        self.vq += r.vq;
        self.perplexity += r.perplexity;
    }

    fn into_log(self, epoch: u64, lr: f64, sigma_sq: f64, batch_hash: String) -> EpochLog {
        let n = self.n.max(1) as f64;
        EpochLog {
            epoch,
            lr,
            sigma_sq,
            loss_d: self.loss_d / n,
            d_bce: self.d_bce / n,
            r1: self.r1 / n,
            loss_g: self.loss_g / n,
            adv: self.adv / n,
            rec: self.rec / n,
            perc: self.perc / n,
            vq: self.vq / n,
            perplexity: self.perplexity / n,
            batch_hash,
        }
    }
}
