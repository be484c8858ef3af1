use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tiloss::affinity::{fuse_tensor, prior_margin_table, read_margin_cache, write_margin_cache, PriorMarginTable};
use tiloss::export::write_matrix_csv;
use tiloss::features::{build_tensor, FeatureRegistry};
use tiloss::glyphs::{load_template_set, synth_template_set, TemplateSet};
use tiloss::loss::{gradient_check, GradCheckOp, GradCheckReport, LossKind, MarginBackprop, GRADCHECK_THRESHOLD};
use tiloss::trainer::{
    export_embeddings, load_idx_dataset, synth_digits, train as train_network, write_idx_images, write_idx_labels,
    Dataset, TrainConfig, TrainReport,
};

use crate::config::RunConfig;
use crate::{at, CliError};

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "test-images-idx3-ubyte";
pub const TEST_LABELS: &str = "test-labels-idx1-ubyte";

/// Offset between the training and test digit seeds.
const TEST_SEED_OFFSET: u64 = 1;

fn create_dir(stage: &'static str, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Stage {
        stage,
        source: tiloss::Error::Io {
            path: dir.to_path_buf(),
            source,
        },
    })
}

fn write_file(stage: &'static str, path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Stage {
        stage,
        source: tiloss::Error::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

fn write_json(stage: &'static str, path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    write_file(stage, path, text)
}

pub fn synth(cfg: &RunConfig, digits: bool) -> Result<(), CliError> {
    let s = &cfg.synth;
    let set = synth_template_set(cfg.seed, s.templates, s.fonts, s.side).map_err(at("synth: templates"))?;
    let manifest = set
        .write_to_dir(&cfg.out.join("templates"))
        .map_err(at("synth: writing templates"))?;
    println!(
        "wrote {} templates x {} fonts to {}",
        set.num_templates(),
        set.num_fonts(),
        manifest.display()
    );
    if digits {
        let dir = cfg.out.join("digits");
        create_dir("synth: digits", &dir)?;
        let d = &s.digits;
        for (seed, count, images, labels) in [
            (cfg.seed, d.train, TRAIN_IMAGES, TRAIN_LABELS),
            (
                cfg.seed.wrapping_add(TEST_SEED_OFFSET),
                d.test,
                TEST_IMAGES,
                TEST_LABELS,
            ),
        ] {
            let (img, lab) = synth_digits(seed, count, d.side).map_err(at("synth: digits"))?;
            write_idx_images(&dir.join(images), &img).map_err(at("synth: writing digits"))?;
            write_idx_labels(&dir.join(labels), &lab).map_err(at("synth: writing digits"))?;
        }
        println!(
            "wrote {} train and {} test digits to {}",
            d.train,
            d.test,
            dir.display()
        );
    }
    Ok(())
}

fn template_set(cfg: &RunConfig) -> Result<TemplateSet, CliError> {
    let a = &cfg.affinity;
    match &a.manifest {
        Some(manifest) => {
            let root = a
                .root
                .clone()
                .or_else(|| manifest.parent().map(Path::to_path_buf))
                .unwrap_or_default();
            load_template_set(&root, manifest, a.side).map_err(at("affinity: loading templates"))
        }
        None => {
            let s = &cfg.synth;
            synth_template_set(cfg.seed, s.templates, s.fonts, s.side).map_err(at("affinity: synthesizing templates"))
        }
    }
}

pub fn margin_cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("affinity").join("margins.bin")
}

pub fn affinity(cfg: &RunConfig) -> Result<(), CliError> {
    let a = &cfg.affinity;
    if a.features.is_empty() {
        return Err(CliError::Usage("affinity: no features selected".into()));
    }
    let set = template_set(cfg)?;
    let registry = FeatureRegistry::subset(&a.feature_config, &a.features);
    let tensor = build_tensor(&set, &registry).map_err(at("affinity: features"))?;
    let affinity = fuse_tensor(&tensor).map_err(at("affinity: fusion"))?;
    let margins = prior_margin_table(&affinity, a.margins);

    let dir = cfg.out.join("affinity");
    let feature_dir = dir.join("features");
    create_dir("affinity: output", &feature_dir)?;
    let ids = set.template_ids();
    for (id, m) in tensor.matrices() {
        write_matrix_csv(&feature_dir.join(format!("{id}.csv")), ids, m).map_err(at("affinity: writing features"))?;
    }
    write_matrix_csv(&dir.join("affinity.csv"), ids, affinity.matrix()).map_err(at("affinity: writing affinity"))?;
    write_matrix_csv(&dir.join("margins.csv"), ids, margins.matrix()).map_err(at("affinity: writing margins"))?;
    write_margin_cache(&margin_cache_path(cfg), &margins).map_err(at("affinity: writing margins"))?;
    println!(
        "{} templates, {} features -> {}",
        set.num_templates(),
        tensor.k(),
        dir.display()
    );
    Ok(())
}

pub fn margins(path: &Path) -> Result<(), CliError> {
    let table = read_margin_cache(path).map_err(at("margins: reading cache"))?;
    print!("{}", format_table(&table));
    Ok(())
}

fn format_table(table: &PriorMarginTable) -> String {
    let n = table.n();
    let mut out = format!("prior margins, {n} classes\n     ");
    for j in 0..n {
        out.push_str(&format!(" {j:>8}"));
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&format!("{i:>5}"));
        for v in table.row(i) {
            out.push_str(&format!(" {v:>8.5}"));
        }
        out.push('\n');
    }
    out
}

fn load_pair(stage: &'static str, images: &Path, labels: &Path, classes: Option<usize>) -> Result<Dataset, CliError> {
    load_idx_dataset(images, labels, classes).map_err(at(stage))
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    alpha_max: f64,
    loss: LossKind,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
    min_inter_class_angle: f64,
    mean_intra_class_angular_std: f64,
}

pub fn train(cfg: &RunConfig, sweep: bool) -> Result<(), CliError> {
    let t = &cfg.train;
    let digits = cfg.out.join("digits");
    let path_or = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| digits.join(name));
    let train_set = load_pair(
        "train: loading training set",
        &path_or(&t.train_images, TRAIN_IMAGES),
        &path_or(&t.train_labels, TRAIN_LABELS),
        t.classes,
    )?;
    let test_set = match (&t.test_images, &t.test_labels) {
        (Some(i), Some(l)) => Some(load_pair("train: loading test set", i, l, Some(train_set.classes()))?),
        (None, None) => {
            // The default test files are optional.
            let (i, l) = (digits.join(TEST_IMAGES), digits.join(TEST_LABELS));
            if i.exists() && l.exists() {
                Some(load_pair("train: loading test set", &i, &l, Some(train_set.classes()))?)
            } else {
                None
            }
        }
        _ => {
            return Err(CliError::Usage(
                "train: test_images and test_labels must be given together".into(),
            ))
        }
    };
    let margins = match &t.margins {
        Some(p) => Some(read_margin_cache(p).map_err(at("train: reading margins"))?),
        None => None,
    };
    let base = TrainConfig {
        seed: cfg.seed,
        ..t.config.clone()
    };
    let dir = cfg.out.join("train");
    let run = |c: &TrainConfig, sub: &str| -> Result<TrainReport, CliError> {
        let run_dir = dir.join(sub);
        create_dir("train: output", &run_dir)?;
        let outcome = train_network(&train_set, test_set.as_ref(), c, margins.as_ref()).map_err(at("train"))?;
        let mut report = outcome.report;
        if t.embeddings {
            if c.feature_dim == 2 {
                export_embeddings(&outcome.network, &train_set, &run_dir.join("embeddings.csv"))
                    .map_err(at("train: writing embeddings"))?;
                report.embeddings = Some("embeddings.csv".into());
            } else {
                eprintln!("note: embeddings need a 2-D feature layer; skipped");
            }
        }
        write_json("train: writing report", &run_dir.join("report.json"), &report)?;
        println!(
            "{sub}: loss {} train accuracy {:.4}{} min weight angle {:.4}",
            c.loss,
            report.train.accuracy,
            report
                .test
                .as_ref()
                .map(|e| format!(" test accuracy {:.4}", e.accuracy))
                .unwrap_or_default(),
            report.train.min_inter_class_angle
        );
        Ok(report)
    };

    if !sweep {
        run(&base, base.loss.name())?;
        return Ok(());
    }
    let mut summary = Vec::with_capacity(t.sweep_alpha.len());
    for &alpha in &t.sweep_alpha {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(CliError::Failed {
                stage: "train",
                message: format!("sweep value {alpha} is not a nonnegative number"),
            });
        }
        let mut c = base.clone();
        c.loss = if alpha == 0.0 {
            LossKind::Softmax
        } else {
            LossKind::TemplateInstance
        };
        c.loss_config.alpha_max = alpha;
        let report = run(&c, &format!("alpha_{alpha}"))?;
        summary.push(SweepEntry {
            alpha_max: alpha,
            loss: c.loss,
            train_accuracy: report.train.accuracy,
            test_accuracy: report.test.as_ref().map(|e| e.accuracy),
            min_inter_class_angle: report.train.min_inter_class_angle,
            mean_intra_class_angular_std: report.train.mean_intra_class_angular_std,
        });
    }
    write_json("train: writing sweep summary", &dir.join("sweep.json"), &summary)
}

#[derive(Debug, Serialize)]
struct GradCheckSummary {
    threshold: f64,
    corrupted: bool,
    passed: bool,
    reports: Vec<GradCheckReport>,
}

pub fn gradcheck(cfg: &RunConfig, modes: &[MarginBackprop], corrupt: bool) -> Result<(), CliError> {
    let g = &cfg.gradcheck;
    let mut reports = Vec::new();
    for kind in LossKind::ALL {
        for &mode in modes {
            for &n in &g.classes {
                let op = GradCheckOp {
                    kind,
                    mode,
                    batch_size: g.batch_size,
                    n,
                    batches: g.batches,
                    corrupt: corrupt.then_some(1e-3),
                };
                let r = gradient_check(&op, &g.loss, cfg.seed).map_err(at("gradcheck"))?;
                println!(
                    "{:<18} {:<14} n={:<3} max_rel_error={:.3e} {}",
                    kind.name(),
                    format!("{mode:?}").to_lowercase(),
                    n,
                    r.max_rel_error,
                    if r.passed() { "ok" } else { "FAIL" }
                );
                reports.push(r);
            }
        }
    }
    let failures = reports.iter().filter(|r| !r.passed()).count();
    let dir = cfg.out.join("gradcheck");
    create_dir("gradcheck: output", &dir)?;
    let summary = GradCheckSummary {
        threshold: GRADCHECK_THRESHOLD,
        corrupted: corrupt,
        passed: failures == 0,
        reports,
    };
    write_json("gradcheck: writing report", &dir.join("report.json"), &summary)?;
    if failures > 0 {
        return Err(CliError::Failed {
            stage: "gradcheck",
            message: format!("{failures} checks exceeded {GRADCHECK_THRESHOLD:e}"),
        });
    }
    Ok(())
}
