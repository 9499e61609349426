//! The subcommands. Each returns its report as text so callers decide where
//! it goes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use cmunext::complexity::{count_macs, DEFAULT_SIZE};
use cmunext::data::{
    bench_fps, generate_synthetic, load_corpus, split, write_corpus, write_mask_png, CorpusOptions, SegmentationSample,
    SplitSpec, SyntheticSpec,
};
use cmunext::model::Model;
use cmunext::train::{evaluate, predict, train_with, TrainConfig};
use cmunext::weights::WeightContainer;
use cmunext::{Error, Result};

use crate::config::{EvalSet, RunConfig};

struct Dataset {
    samples: Vec<SegmentationSample>,
    synthetic: bool,
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.data, cfg.synthetic) {
        (Some(_), Some(_)) => Err(Error::Config {
            field: "data".into(),
            reason: "give either a data directory or a synthetic spec, not both".into(),
        }),
        (None, None) => Err(Error::Config {
            field: "data".into(),
            reason: "no dataset: pass --data <dir> or --synthetic n=..,size=..".into(),
        }),
        (Some(dir), None) => {
            let opts = CorpusOptions {
                target_size: cfg.size,
                in_channels: cfg.in_channels,
                prefixes: cfg.prefixes.clone(),
            };
            let samples = load_corpus(&dir.join("images"), &dir.join("masks"), &opts)?;
            if samples.is_empty() {
                return Err(Error::Validation(format!(
                    "no PNG images found in {}",
                    dir.join("images").display()
                )));
            }
            Ok(Dataset {
                samples,
                synthetic: false,
            })
        }
        (None, Some(s)) => {
            let spec = SyntheticSpec {
                n: s.n,
                size: s.size,
                seed: s.seed.unwrap_or(cfg.seed),
                in_channels: cfg.in_channels,
            };
            Ok(Dataset {
                samples: spec.generate()?,
                synthetic: true,
            })
        }
    }
}

fn resolve_eval_set(cfg: &RunConfig, ds: &Dataset) -> EvalSet {
    match cfg.eval_set {
        EvalSet::Auto if ds.synthetic => EvalSet::Train,
        EvalSet::Auto => EvalSet::Split,
        other => other,
    }
}

fn split_path(cfg: &RunConfig) -> PathBuf {
    cfg.split_file.clone().unwrap_or_else(|| cfg.out_dir.join("split.txt"))
}

type SeededSplit = (u64, Vec<SegmentationSample>, Vec<SegmentationSample>);

/// Splits for `seeds`, reusing a stored assignment when one exists.
fn seeded_splits(cfg: &RunConfig, ds: &Dataset, seeds: &[u64]) -> Result<Vec<SeededSplit>> {
    let path = split_path(cfg);
    let mut spec = if path.is_file() {
        SplitSpec::load(&path)?
    } else {
        SplitSpec::default()
    };
    spec.seeds = seeds.to_vec();
    let pairs = split(&ds.samples, &mut spec)?;
    ensure_dir(path.parent().unwrap_or(Path::new(".")))?;
    // keep assignments for seeds not requested this time
    spec.seeds = spec.assignment.iter().map(|a| a.seed).collect();
    spec.save(&path)?;
    Ok(seeds.iter().copied().zip(pairs).map(|(s, (t, v))| (s, t, v)).collect())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.as_os_str().is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn build_model(cfg: &RunConfig) -> Result<Model> {
    Model::build(cfg.variant_config()?, cfg.architecture(), cfg.seed)
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        power: cfg.power,
        seed: cfg.seed,
        augment: cfg.augment,
        metric_mode: cfg.metric_mode,
    }
}

/// Trains and writes `weights.bin`, `train_log.csv`, `model_card.txt` and
/// `config.txt` to the output directory. Progress goes to `progress`.
pub fn cmd_train(cfg: &RunConfig, progress: &mut dyn Write) -> Result<String> {
    let mut model = build_model(cfg)?;
    let ds = load_dataset(cfg)?;
    let (train_set, val_set) = match resolve_eval_set(cfg, &ds) {
        EvalSet::Split => {
            let (_, t, v) = seeded_splits(cfg, &ds, &[cfg.seed])?.remove(0);
            (t, v)
        }
        _ => (ds.samples.clone(), ds.samples),
    };
    ensure_dir(&cfg.out_dir)?;
    let tc = train_config(cfg);
    let record = train_with(&mut model, &train_set, &val_set, &tc, |e| {
        let _ = writeln!(
            progress,
            "epoch {}/{}: train_loss={:.5} val_loss={:.5} val_iou={:.4} val_f1={:.4} lr={:.6}",
            e.epoch, tc.epochs, e.train_loss, e.val_loss, e.val_iou, e.val_f1, e.lr
        );
    })?;

    let weights = cfg.out_dir.join("weights.bin");
    WeightContainer::from_model(&model).write(&weights)?;
    record.write_csv(&cfg.out_dir.join("train_log.csv"))?;
    let report = count_macs(&model, [1, cfg.in_channels, DEFAULT_SIZE, DEFAULT_SIZE])?;
    let mut card = model.card().render(&report);
    let last = record.last().expect("at least one epoch");
    let _ = writeln!(
        card,
        "training: {} train / {} val samples",
        train_set.len(),
        val_set.len()
    );
    let _ = writeln!(
        card,
        "final epoch {}: train_loss={} val_loss={} val_iou={} val_f1={}",
        last.epoch, last.train_loss, last.val_loss, last.val_iou, last.val_f1
    );
    let _ = writeln!(card, "wall_clock_secs: {:.1}", record.wall_clock_secs);
    write_file(&cfg.out_dir.join("model_card.txt"), card.as_bytes())?;
    write_file(&cfg.out_dir.join("config.txt"), cfg.to_text().as_bytes())?;

    Ok(format!(
        "epochs={} train_loss={} val_loss={} val_iou={} val_f1={} out_dir={}\n",
        last.epoch,
        last.train_loss,
        last.val_loss,
        last.val_iou,
        last.val_f1,
        cfg.out_dir.display()
    ))
}

/// Loads weights, then reports IoU/F1 per split seed (or on every sample)
/// and their mean.
pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let mut model = build_model(cfg)?;
    let weights = cfg.weights.clone().unwrap_or_else(|| cfg.out_dir.join("weights.bin"));
    WeightContainer::read(&weights)?.load_into(&mut model)?;
    let ds = load_dataset(cfg)?;
    let sets: Vec<(String, Vec<SegmentationSample>)> = match resolve_eval_set(cfg, &ds) {
        EvalSet::Split => seeded_splits(cfg, &ds, &cfg.seeds)?
            .into_iter()
            .map(|(s, _, v)| (format!("seed={s}"), v))
            .collect(),
        _ => vec![("all".to_string(), ds.samples)],
    };
    let mut out = String::new();
    let (mut iou_sum, mut f1_sum) = (0.0, 0.0);
    for (label, samples) in &sets {
        let e = evaluate(&mut model, samples, cfg.batch_size, cfg.metric_mode)?;
        let _ = writeln!(
            out,
            "{label} images={} loss={} iou={} f1={}",
            e.images, e.loss, e.metrics.iou, e.metrics.f1
        );
        iou_sum += e.metrics.iou;
        f1_sum += e.metrics.f1;
        if cfg.dump_masks {
            let dir = cfg.out_dir.join("pred_masks").join(label.replace('=', ""));
            ensure_dir(&dir)?;
            for (s, p) in samples.iter().zip(predict(&mut model, samples, cfg.batch_size)?) {
                write_mask_png(&p, &dir.join(format!("{}.png", s.id)))?;
            }
        }
    }
    let n = sets.len() as f64;
    let _ = writeln!(out, "mean iou={} f1={}", iou_sum / n, f1_sum / n);
    Ok(out)
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 || !size.is_multiple_of(16) {
        return Err(Error::Config {
            field: "size".into(),
            reason: format!("input size must be a positive multiple of 16, got {size}"),
        });
    }
    Ok(())
}

/// Per-layer complexity table (or key-value lines) at `size`×`size`.
pub fn cmd_inspect(cfg: &RunConfig) -> Result<String> {
    check_size(cfg.size)?;
    let model = build_model(cfg)?;
    let report = count_macs(&model, [1, cfg.in_channels, cfg.size, cfg.size])?;
    let mut out = if cfg.format == "kv" {
        report.to_key_values()
    } else {
        report.to_table()
    };
    let convention = if cfg.two_per_mac {
        cmunext::complexity::FlopConvention::TwoPerMac
    } else {
        cmunext::complexity::FlopConvention::MacAsFlop
    };
    if cfg.format != "kv" {
        let _ = writeln!(out, "GFLOPs: {:.4}", report.gflops(convention));
    }
    Ok(out)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<String> {
    check_size(cfg.size)?;
    let mut model = build_model(cfg)?;
    let r = bench_fps(
        &mut model,
        [1, cfg.in_channels, cfg.size, cfg.size],
        cfg.warmup,
        cfg.iters,
    )?;
    Ok(format!(
        "variant={} size={} fps={:.3} median_ms={:.3} iters={}\nhardware: {}\n",
        model.config().name,
        cfg.size,
        r.fps,
        r.median_secs * 1e3,
        r.iters,
        r.hardware
    ))
}

/// Writes a synthetic corpus as PNG files under the output directory.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<String> {
    let s = cfg.synthetic.ok_or_else(|| Error::Config {
        field: "synthetic".into(),
        reason: "gen-data needs --synthetic n=..,size=..".into(),
    })?;
    let samples = generate_synthetic(s.n, s.size, s.seed.unwrap_or(cfg.seed))?;
    write_corpus(&samples, &cfg.out_dir)?;
    Ok(format!(
        "wrote {} samples to {}\n",
        samples.len(),
        cfg.out_dir.display()
    ))
}
