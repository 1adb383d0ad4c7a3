use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use disc::data::{generate_synthetic, load_dataset, load_gray, load_mask, load_rgb, save_gray, Split};
use disc::eval::{evaluate, pr_csv_path};
use disc::model::{
    build_sr_map, disc_infer, fine_tune, load_checkpoint, save_checkpoint, train_coarse, train_fine, DiscModel,
    EpochLog, TrainContext,
};
use disc::parallel::Executor;
use serde_json::json;

use crate::config::RunConfig;
use crate::{CliError, Phase};

pub fn gen_data(seed: u64, count: usize, side: usize, out: &Path) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let ds = generate_synthetic(seed, count, side)?;
    ds.save(out)?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

/// Appends each epoch as one JSON line.
struct LogWriter {
    file: File,
    error: Option<std::io::Error>,
    last: Option<EpochLog>,
    first: Option<EpochLog>,
}

impl LogWriter {
    fn open(path: &Path) -> Result<Self, CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::usage(format!("cannot open log {}: {e}", path.display())))?;
        Ok(LogWriter {
            file,
            error: None,
            last: None,
            first: None,
        })
    }

    fn record(&mut self, e: &EpochLog) {
        let line = serde_json::to_string(e).expect("log entry serializes");
        if let Err(err) = writeln!(self.file, "{line}") {
            self.error.get_or_insert(err);
        }
        self.first.get_or_insert_with(|| e.clone());
        self.last = Some(e.clone());
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(e) = self.error {
            return Err(CliError::usage(format!("writing training log: {e}")));
        }
        if let (Some(f), Some(l)) = (&self.first, &self.last) {
            println!(
                "{}: loss {:.6} (epoch {}) -> {:.6} (epoch {})",
                l.stage, f.mean_loss, f.epoch, l.mean_loss, l.epoch
            );
        }
        Ok(())
    }
}

fn log_path(cfg: &RunConfig, out_ckpt: &Path) -> PathBuf {
    cfg.paths.log.clone().unwrap_or_else(|| out_ckpt.with_extension("log.jsonl"))
}

fn load_train_set(cfg: &RunConfig) -> Result<disc::data::Dataset, CliError> {
    for dir in [&cfg.paths.images, &cfg.paths.masks] {
        if !dir.is_dir() {
            return Err(CliError::usage(format!("dataset directory {} does not exist", dir.display())));
        }
    }
    let loaded = load_dataset(&cfg.paths.images, &cfg.paths.masks, Split::Train)?;
    for o in &loaded.orphans {
        eprintln!("warning: unpaired file {}", o.display());
    }
    Ok(loaded.dataset)
}

fn echo(cfg: &RunConfig, phase: &str) -> serde_json::Value {
    json!({ "phase": phase, "run": cfg })
}

fn train_with_log(
    cfg: &RunConfig,
    out_ckpt: &Path,
    f: impl FnOnce(&mut TrainContext<'_>) -> disc::Result<()>,
) -> Result<(), CliError> {
    let executor = Executor::from_env();
    let mut log = LogWriter::open(&log_path(cfg, out_ckpt))?;
    let mut sink = |e: &EpochLog| log.record(e);
    let mut ctx = TrainContext {
        executor: &executor,
        seed: cfg.seed,
        on_epoch: &mut sink,
    };
    let result = f(&mut ctx);
    log.finish()?;
    Ok(result?)
}

pub fn train(config: &Path, phase: Phase, out_ckpt: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    if dry_run {
        let coarse = cfg.profile.coarse_spec(cfg.flags.coarse_channels());
        let fine = cfg.profile.fine_spec(cfg.flags.fine_channels());
        let shapes = json!({
            "coarse": coarse.shape_chain()?,
            "fine": fine.shape_chain()?,
        });
        println!("config ok; layer output shapes: {shapes}");
        return Ok(());
    }
    let out_ckpt = out_ckpt.ok_or_else(|| CliError::usage("--out-ckpt is required unless --dry-run"))?;
    match phase {
        Phase::Coarse => {
            let data = load_train_set(&cfg)?;
            let sr = build_sr_map(data.masks(), cfg.profile.input_side())?;
            let mut model = DiscModel::new(cfg.profile, cfg.flags, cfg.slci, cfg.loss, sr, cfg.init, cfg.seed)?;
            train_with_log(&cfg, out_ckpt, |ctx| {
                train_coarse(
                    &mut model,
                    data.samples(),
                    cfg.epochs.coarse_stage1,
                    cfg.epochs.coarse_stage2,
                    &cfg.coarse_sgd(),
                    ctx,
                )
            })?;
            save_checkpoint(&model, &echo(&cfg, "coarse"), out_ckpt)?;
        }
        Phase::Fine => {
            let base = cfg
                .paths
                .coarse_checkpoint
                .as_ref()
                .ok_or_else(|| CliError::usage("fine phase needs paths.coarse_checkpoint"))?;
            if !base.is_file() {
                return Err(CliError::usage(format!("coarse checkpoint {} not found", base.display())));
            }
            let (mut model, _) = load_checkpoint(base)?;
            if model.flags.use_sr != cfg.flags.use_sr || model.flags.use_slci != cfg.flags.use_slci {
                return Err(CliError::usage("use_sr/use_slci differ from the coarse checkpoint"));
            }
            model.flags.use_guidance = cfg.flags.use_guidance;
            let data = load_train_set(&cfg)?;
            train_with_log(&cfg, out_ckpt, |ctx| {
                train_fine(&mut model, data.samples(), cfg.epochs.fine, &cfg.fine_sgd(), ctx)
            })?;
            save_checkpoint(&model, &echo(&cfg, "fine"), out_ckpt)?;
        }
    }
    println!("wrote {}", out_ckpt.display());
    Ok(())
}

fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn load_model(ckpt: &Path) -> Result<DiscModel, CliError> {
    if !ckpt.is_file() {
        return Err(CliError::usage(format!("checkpoint {} not found", ckpt.display())));
    }
    Ok(load_checkpoint(ckpt)?.0)
}

pub fn infer(ckpt: &Path, images: &Path, out: &Path) -> Result<(), CliError> {
    let model = load_model(ckpt)?;
    let files: Vec<PathBuf> = png_files(images)?.into_values().collect();
    if files.is_empty() {
        return Err(CliError::usage(format!("no PNG images in {}", images.display())));
    }
    fs::create_dir_all(out).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    let executor = Executor::from_env();
    let results = executor.map(&files, |path| -> disc::Result<()> {
        let map = disc_infer(&model, &load_rgb(path)?)?;
        save_gray(&map, &out.join(path.file_name().expect("listed file has a name")))
    });
    for r in results {
        r?;
    }
    println!("wrote {} saliency maps to {}", files.len(), out.display());
    Ok(())
}

pub fn eval(maps: &Path, masks: &Path, report: &Path) -> Result<(), CliError> {
    let map_files = png_files(maps)?;
    let mut mask_files = png_files(masks)?;
    if map_files.is_empty() {
        return Err(CliError::usage(format!("no saliency maps in {}", maps.display())));
    }
    let mut orphans = Vec::new();
    let mut pairs = Vec::new();
    for (stem, m) in map_files {
        match mask_files.remove(&stem) {
            Some(k) => pairs.push((stem, m, k)),
            None => orphans.push(m),
        }
    }
    orphans.extend(mask_files.into_values());
    if !orphans.is_empty() {
        let list: Vec<String> = orphans.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::usage(format!("unpaired files: {}", list.join(", "))));
    }
    let mut ids = Vec::new();
    let mut smaps = Vec::new();
    let mut gts = Vec::new();
    for (stem, m, k) in pairs {
        ids.push(stem);
        smaps.push(load_gray(&m)?);
        gts.push(load_mask(&k)?);
    }
    let config = json!({ "maps": maps, "masks": masks });
    let r = evaluate(&ids, &smaps, &gts, config)?;
    r.write(report)?;
    println!(
        "{} images: precision {:.4} recall {:.4} F {:.4} MAE {:.4}; wrote {} and {}",
        ids.len(),
        r.precision,
        r.recall,
        r.f_measure,
        r.mae,
        report.display(),
        pr_csv_path(report).display()
    );
    Ok(())
}

pub fn finetune(ckpt: &Path, config: &Path, out_ckpt: &Path) -> Result<(), CliError> {
    let mut model = load_model(ckpt)?;
    let cfg = RunConfig::load(config)?;
    let data = load_train_set(&cfg)?;
    let tune = cfg.fine_tune();
    train_with_log(&cfg, out_ckpt, |ctx| fine_tune(&mut model, data.samples(), &tune, ctx))?;
    save_checkpoint(&model, &echo(&cfg, "finetune"), out_ckpt)?;
    println!("wrote {}", out_ckpt.display());
    Ok(())
}
