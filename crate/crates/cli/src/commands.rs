use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fuse_core::chem::{read_jsonl_strict, write_jsonl, write_sdf, AtomVocab, Pocket, ValidityConfig};
use fuse_core::dataset::{derive_from_jsonl, generate_records, DualInstance, MockConfig};
use fuse_core::eval::{evaluate_samples, verify_symmetries, SymmetryTolerances};
use fuse_core::sample::{generate, AtomCount, GeneratedSample, SampleConfig};
use fuse_core::train::{fit, write_loss_curve_csv, Checkpoint, TrainConfig};
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{CliError, DeriveArgs, EvalArgs, MockArgs, SampleArgs, SymmetryArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(fuse_core::Error::from)?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs `body` between the two manifest writes.
fn run(mut manifest: RunManifest, body: impl FnOnce(&mut RunManifest) -> Result<()>) -> Result<()> {
    let outcome = body(&mut manifest);
    manifest.finish(&outcome)?;
    outcome
}

pub fn mock_data(a: MockArgs) -> Result<()> {
    let cfg = MockConfig {
        ligands: a.ligands,
        targets: a.targets,
        targets_per_ligand: a.targets_per_ligand.unwrap_or(usize::MAX),
        min_atoms: a.min_atoms,
        max_atoms: a.max_atoms,
        seed: a.seed.unwrap_or(0),
        ..MockConfig::default()
    };
    let manifest = RunManifest::begin(
        with_suffix(&a.out, ".manifest.json"),
        "mock-data",
        serde_json::to_value(&cfg).map_err(fuse_core::Error::from)?,
        Some(cfg.seed),
        &[],
    )?;
    run(manifest, |m| {
        let records = generate_records(&cfg)?;
        let mut w = create(&a.out)?;
        write_jsonl(&mut w, &records)?;
        w.flush().map_err(|e| CliError::io(&a.out, e))?;
        m.artifact(&a.out);
        println!(
            "wrote {} records ({} ligands x {} targets, {} expected tuples) to {}",
            records.len(),
            cfg.ligands,
            cfg.targets,
            cfg.expected_pairs(),
            a.out.display()
        );
        Ok(())
    })
}

pub fn derive_dataset(a: DeriveArgs) -> Result<()> {
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    let manifest = RunManifest::begin(
        with_suffix(&a.out, ".manifest.json"),
        "derive-dataset",
        json!({ "cutoff": a.cutoff }),
        None,
        &[&a.records],
    )?;
    run(manifest, |m| {
        let (pairs, report) = derive_from_jsonl(open(&a.records)?, a.cutoff)?;
        let mut w = create(&a.out)?;
        write_jsonl(&mut w, &pairs)?;
        w.flush().map_err(|e| CliError::io(&a.out, e))?;
        write_json(&report_path, &report)?;
        m.artifact(&a.out);
        m.artifact(&report_path);
        println!(
            "{} records, {} ligands, {} multi-target, {} tuples -> {}",
            report.records_read,
            report.total_ligands,
            report.multi_target_ligands,
            report.tuples,
            a.out.display()
        );
        Ok(())
    })
}

fn read_dataset(path: &Path) -> Result<Vec<DualInstance>> {
    Ok(read_jsonl_strict(open(path)?)?)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.no_bond_gen |= a.no_bond_gen;
    cfg.no_dlcf |= a.no_dlcf;
    cfg.validate()?;
    let curve_path = a.loss_curve.clone().unwrap_or_else(|| with_suffix(&a.out, ".loss.csv"));
    let mut inputs: Vec<&Path> = vec![&a.data];
    if let Some(p) = &a.config {
        inputs.push(p);
    }
    let manifest = RunManifest::begin(
        with_suffix(&a.out, ".manifest.json"),
        "train",
        serde_json::to_value(&cfg).map_err(fuse_core::Error::from)?,
        Some(cfg.seed),
        &inputs,
    )?;
    run(manifest, |m| {
        let data = read_dataset(&a.data)?;
        if let Some(dir) = &a.checkpoint_dir {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let out = fit(&data, &cfg, a.checkpoint_dir.as_deref())?;
        if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        out.checkpoint.save(&a.out)?;
        let mut w = create(&curve_path)?;
        write_loss_curve_csv(&mut w, &out.curve)?;
        w.flush().map_err(|e| CliError::io(&curve_path, e))?;
        m.artifact(&a.out);
        m.artifact(&curve_path);
        if let Some(last) = out.curve.last() {
            println!(
                "step {}: total {:.4} (position {:.4}, atom {:.4}, bond {:.4}, bond length {:.4}) -> {}",
                last.step,
                last.loss.total,
                last.loss.position,
                last.loss.atom_kl,
                last.loss.bond_kl,
                last.loss.bond_length,
                a.out.display()
            );
        }
        Ok(())
    })
}

/// Two pockets from either a pocket file or a dataset file.
fn read_pockets(path: &Path, index: usize) -> Result<Vec<Pocket>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if let Ok(p) = read_jsonl_strict::<Pocket>(text.as_bytes()) {
        if p.len() < 2 {
            return Err(CliError::Usage(format!("{}: need two pockets, found {}", path.display(), p.len())));
        }
        return Ok(p[..2].to_vec());
    }
    let data: Vec<DualInstance> = read_jsonl_strict(text.as_bytes())?;
    let m = data.get(index).ok_or_else(|| {
        CliError::Usage(format!("{}: no instance {index} (file has {})", path.display(), data.len()))
    })?;
    if m.pockets.len() != 2 {
        return Err(CliError::Usage(format!("instance {index} has {} pockets, need 2", m.pockets.len())));
    }
    Ok(m.pockets.clone())
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let cfg = SampleConfig {
        n_atoms: match a.n_atoms {
            Some(n) => AtomCount::Fixed(n),
            None => AtomCount::Histogram(ckpt.meta.n_atoms_histogram.clone()),
        },
        steps: a.steps.unwrap_or(ckpt.meta.schedule_steps),
        seed: a.seed.unwrap_or(0),
        count: a.count,
        mode: a.mode,
    };
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let manifest = RunManifest::begin(
        a.out.join("manifest.json"),
        "sample",
        serde_json::to_value(&cfg).map_err(fuse_core::Error::from)?,
        Some(cfg.seed),
        &[&a.ckpt, &a.pockets],
    )?;
    run(manifest, |m| {
        let pockets = read_pockets(&a.pockets, a.index)?;
        let samples = generate(&pockets, &ckpt, &cfg)?;
        let jsonl = a.out.join("samples.jsonl");
        let mut w = create(&jsonl)?;
        write_jsonl(&mut w, &samples)?;
        w.flush().map_err(|e| CliError::io(&jsonl, e))?;
        m.artifact(&jsonl);
        let sdf_dir = a.out.join("sdf");
        fs::create_dir_all(&sdf_dir).map_err(|e| CliError::io(&sdf_dir, e))?;
        let vocab = AtomVocab::default();
        for s in &samples {
            let p = sdf_dir.join(format!("sample_{:04}.sdf", s.index));
            let mut w = create(&p)?;
            write_sdf(&mut w, &format!("sample {} ({})", s.index, s.mode), &s.graph, &s.poses, &vocab)?;
            w.flush().map_err(|e| CliError::io(&p, e))?;
        }
        m.artifact(&sdf_dir);
        println!("wrote {} samples ({} mode) to {}", samples.len(), cfg.mode, a.out.display());
        Ok(())
    })
}

fn read_samples(path: &Path) -> Result<Vec<GeneratedSample>> {
    Ok(read_jsonl_strict(open(path)?)?)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let manifest = RunManifest::begin(with_suffix(&a.report, ".manifest.json"), "eval", json!({}), None, &[&a.samples])?;
    run(manifest, |m| {
        let samples = read_samples(&a.samples)?;
        let report = evaluate_samples(&samples, &ValidityConfig::default())?;
        write_json(&a.report, &report)?;
        m.artifact(&a.report);
        println!(
            "{} samples: dual validity {:.3}, diversity {}, mean rules satisfied {:.2}",
            report.n_samples,
            report.dual_validity,
            report.diversity.map_or("n/a".to_string(), |d| format!("{d:.3}")),
            report.mean_rules_satisfied
        );
        Ok(())
    })
}

pub fn check_symmetry(a: SymmetryArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    let manifest_path = match &a.report {
        Some(r) => with_suffix(r, ".manifest.json"),
        None => with_suffix(&a.ckpt, ".symmetry.manifest.json"),
    };
    let mut inputs: Vec<&Path> = vec![&a.ckpt];
    if let Some(s) = &a.samples {
        inputs.push(s);
    }
    let manifest = RunManifest::begin(manifest_path, "check-symmetry", json!({ "trials": a.trials }), Some(seed), &inputs)?;
    run(manifest, |m| {
        let ckpt = Checkpoint::load(&a.ckpt)?;
        let samples = a.samples.as_deref().map(read_samples).transpose()?;
        let tol = SymmetryTolerances::default();
        let report = verify_symmetries(&ckpt.model, ckpt.meta.schedule_steps, a.trials, &tol, seed, samples.as_deref())?;
        match &a.report {
            Some(p) => {
                write_json(p, &report)?;
                m.artifact(p);
            }
            None => println!("{}", serde_json::to_string_pretty(&report).map_err(fuse_core::Error::from)?),
        }
        let line = |name: &str, pass: bool, detail: String| println!("{name}: {} ({detail})", if pass { "pass" } else { "FAIL" });
        line("R1 swap", report.r1_pass, format!("max dev {:.2e}", report.r1_max_dev));
        line(
            "R2 rigid motion",
            report.r2_pass,
            format!("coord {:.2e}, types {:.2e}", report.r2_coord_max_dev, report.r2_type_max_dev),
        );
        line("R3 coupling", report.r3_pass, format!("{:.2} of trials, min effect {:.2e}", report.r3_fraction, report.r3_min_effect));
        if let (Some(r4), Some(pass)) = (&report.r4, report.r4_pass) {
            line("R4 non-rigid", pass, format!("fraction above {:.2}", r4.fraction_above));
        }
        let all = report.r1_pass && report.r2_pass && report.r3_pass && report.r4_pass.unwrap_or(true);
        if all {
            Ok(())
        } else {
            Err(CliError::CheckFailed("one or more symmetry checks failed".into()))
        }
    })
}
