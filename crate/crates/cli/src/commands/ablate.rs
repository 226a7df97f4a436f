//! Ablation matrix: train and evaluate the four variants under identical
//! seed and data, then emit the comparison table (CSV + aligned text).

use std::io::Write;
use std::path::Path;

use mcr_core::config::RunConfig;
use mcr_core::datamodel::SlicePair;
use mcr_core::metrics::{evaluate_synthesis, EvalSlice, MeanStd};
use mcr_core::networks::{build_ablation_variant, AblationVariant};
use mcr_core::trainer::GanTrainer;
use mcr_core::{Error, Result};

use crate::runcfg::{write_run_manifest, RunDir};

struct VariantRow {
    variant: AblationVariant,
    mse: MeanStd,
    psnr: MeanStd,
    ssim: MeanStd,
}

pub fn run(cfg: RunConfig, force: bool) -> Result<()> {
    let dataset = super::resolve_training_data(&cfg)?;
    // held-out phantom pairs when no manifest is configured
    let eval_pairs: Vec<SlicePair> = match &cfg.data.manifest {
        Some(_) => Vec::new(),
        None => super::phantom_pair_dataset(&cfg, 2, 1)?,
    };
    let dir = RunDir::create(Path::new(&cfg.run.out_dir), force)?;
    write_run_manifest(&dir, "ablate", &cfg, cfg.data.manifest.as_deref().map(Path::new))?;

    let mut rows = Vec::new();
    let mut batch_hashes: Vec<Vec<String>> = Vec::new();
    for variant in AblationVariant::ALL {
        let mut vcfg = cfg.clone();
        vcfg.model = build_ablation_variant(&cfg.model, variant);
        let mut trainer = GanTrainer::new(&vcfg)?;
        let logs = trainer.train(&dataset, None, |_| {})?;
        batch_hashes.push(logs.iter().map(|l| l.batch_hash.clone()).collect());

        let eval_slices: Vec<EvalSlice> = match &cfg.data.manifest {
            Some(m) => {
                let subjects = super::load_subjects(Path::new(m), true)?;
                let mut out = Vec::new();
                for s in &subjects {
                    out.extend(mcr_core::datamodel::pipeline::eval_slices(
                        &s.mri,
                        s.pet.as_ref(),
                        vcfg.eval.slice_set,
                        vcfg.model.image_size,
                    )?);
                }
                out
            }
            None => eval_pairs
                .iter()
                .map(|p| EvalSlice {
                    subject_id: p.subject_id.clone(),
                    diagnosis: p.diagnosis,
                    slice_index: p.slice_index,
                    mri: p.mri.clone(),
                    pet: Some(p.pet.clone()),
                })
                .collect(),
        };
        let mut generate = |mri: &ndarray::Array2<f64>| trainer.synthesize(mri);
        let report = evaluate_synthesis(&mut generate, &eval_slices)?;
        let all = report
            .group("ALL")
            .ok_or_else(|| Error::Data("missing ALL aggregate".into()))?;
        eprintln!(
            "{:<12} mse {:.4} psnr {:.2} ssim {:.4}",
            variant.as_str(),
            all.mse.mean,
            all.psnr_db.mean,
            all.ssim.mean
        );
        rows.push(VariantRow {
            variant,
            mse: all.mse,
            psnr: all.psnr_db,
            ssim: all.ssim,
        });
    }

    // every variant must have consumed the identical batch sequence
    for h in &batch_hashes[1..] {
        if h != &batch_hashes[0] {
            return Err(Error::Data(
                "ablation variants saw different batch sequences".into(),
            ));
        }
    }

    let csv_path = dir.join("ablation.csv");
    let mut csv = std::fs::File::create(&csv_path)?;
    writeln!(csv, "variant,mse_mean,mse_std,psnr_db_mean,psnr_db_std,ssim_mean,ssim_std")?;
    for r in &rows {
        writeln!(
            csv,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.variant.as_str(),
            r.mse.mean,
            r.mse.std,
            r.psnr.mean,
            r.psnr.std,
            r.ssim.mean,
            r.ssim.std
        )?;
    }

    let txt_path = dir.join("ablation.txt");
    let mut txt = std::fs::File::create(&txt_path)?;
    writeln!(
        txt,
        "{:<36} {:>20} {:>20} {:>20}",
        "Method", "MSE", "PSNR (dB)", "SSIM"
    )?;
    for r in &rows {
        writeln!(
            txt,
            "{:<36} {:>9.4} ± {:<8.4} {:>9.2} ± {:<8.2} {:>9.4} ± {:<8.4}",
            r.variant.display_name(),
            r.mse.mean,
            r.mse.std,
            r.psnr.mean,
            r.psnr.std,
            r.ssim.mean,
            r.ssim.std
        )?;
    }
    println!("ablation table -> {}", txt_path.display());
    Ok(())
}
