//! Classifier training on real PET slices and the dual real/synthetic
//! evaluation producing the six-count tally report.

use std::io::Write;
use std::path::Path;

use mcr_core::config::RunConfig;
use mcr_core::datamodel::pipeline;
use mcr_core::metrics::{evaluate_classifier, SubjectSlices};
use mcr_core::trainer::{ClassifierTrainer, GanTrainer, LabeledSlice};
use mcr_core::{Error, Result};

use crate::runcfg::{write_run_manifest, RunDir};

pub fn train(cfg: RunConfig, manifest: &Path, force: bool) -> Result<()> {
    let subjects = super::load_subjects(manifest, true)?;
    let mut dataset: Vec<LabeledSlice> = Vec::new();
    for s in &subjects {
        dataset.extend(pipeline::classifier_slices(
            s.pet.as_ref().unwrap(),
            cfg.model.image_size,
        )?);
    }
    if dataset.iter().all(|s| s.label == 0) || dataset.iter().all(|s| s.label == 1) {
        return Err(Error::Data(
            "classifier training needs both CN-group and MCI/AD-group subjects".into(),
        ));
    }
    let dir = RunDir::create(Path::new(&cfg.run.out_dir), force)?;
    write_run_manifest(&dir, "classify-train", &cfg, Some(manifest))?;

    let log_path = dir.join("classifier-log.jsonl");
    let mut log_file = std::fs::File::create(&log_path)?;
    let mut trainer = ClassifierTrainer::new(&cfg)?;
    trainer.train(&dataset, |log| {
        let _ = writeln!(log_file, "{}", serde_json::to_string(log).unwrap());
        if log.epoch % 20 == 0 {
            eprintln!(
                "classifier epoch {:>4} lr {:.3e} loss {:.5} train-acc {:.3}",
                log.epoch, log.lr, log.loss, log.train_accuracy
            );
        }
    })?;
    let ckpt = dir.join("classifier.ckpt");
    trainer.save(&ckpt)?;
    println!(
        "classifier trained on {} slices from {} subjects -> {}",
        dataset.len(),
        subjects.len(),
        ckpt.display()
    );
    Ok(())
}

pub fn eval(
    cfg: RunConfig,
    classifier_ckpt: &Path,
    generator_ckpt: &Path,
    manifest: &Path,
    out: &Path,
    force: bool,
) -> Result<()> {
    let classifier = ClassifierTrainer::load_checkpoint_file(&cfg, classifier_ckpt)?;
    let generator = GanTrainer::load_checkpoint_file(&cfg, generator_ckpt)?;
    let subjects = super::load_subjects(manifest, true)?;
    let dir = RunDir::create(out, force)?;
    write_run_manifest(&dir, "classify-eval", &cfg, Some(manifest))?;

    // real source: classifier slice sampling over the real PET volume;
    // synthetic source: the same MRI slices translated by the generator.
    let mut real_subjects = Vec::new();
    let mut synth_subjects = Vec::new();
    for s in &subjects {
        let indices = mcr_core::datamodel::select_classifier_slices(s.mri.depth(), s.entry.diagnosis)?;
        let pet = s.pet.as_ref().unwrap();
        let pet_slices = pipeline::eval_slices(
            &s.mri,
            Some(pet),
            mcr_core::config::SliceSet::Central100,
            cfg.model.image_size,
        )?;
        let by_index: std::collections::HashMap<usize, &mcr_core::metrics::EvalSlice> =
            pet_slices.iter().map(|e| (e.slice_index, e)).collect();
        let mut real = Vec::new();
        let mut synth = Vec::new();
        for idx in indices {
            let e = by_index
                .get(&idx)
                .ok_or_else(|| Error::Data(format!("slice {idx} missing for {}", s.entry.subject_id)))?;
            real.push(e.pet.clone().expect("pet required"));
            synth.push(generator.synthesize(&e.mri)?);
        }
        real_subjects.push(SubjectSlices {
            subject_id: s.entry.subject_id.clone(),
            diagnosis: s.entry.diagnosis,
            slices: real,
        });
        synth_subjects.push(SubjectSlices {
            subject_id: s.entry.subject_id.clone(),
            diagnosis: s.entry.diagnosis,
            slices: synth,
        });
    }

    let mut predict = |slice: &ndarray::Array2<f64>| classifier.predict(slice);
    let real = evaluate_classifier(&mut predict, &real_subjects, "real")?;
    let synth = evaluate_classifier(&mut predict, &synth_subjects, "synthetic")?;

    let report = serde_json::json!({
        "schema_version": mcr_core::metrics::REPORT_SCHEMA_VERSION,
        "per_slice": [],
        "aggregates": [],
        "classification": [real, synth],
    });
    std::fs::write(
        dir.join("classification.json"),
        serde_json::to_string_pretty(&report).unwrap() + "\n",
    )?;

    for t in [&real, &synth] {
        println!(
            "{:<9} overall {}/{} ({:.2}%)  CN {}/{}  MCI/AD {}/{}",
            t.source,
            t.overall.correct,
            t.overall.total,
            100.0 * t.overall.accuracy(),
            t.cn_group.correct,
            t.cn_group.total,
            t.mci_ad_group.correct,
            t.mci_ad_group.total
        );
    }
    println!("report -> {}", dir.join("classification.json").display());
    Ok(())
}
