use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pmri_core::checkpoint::{load_checkpoint, save_checkpoint};
use pmri_core::clear::{clear_reconstruct, ClearConfig};
use pmri_core::fourier::apply_adjoint;
use pmri_core::metrics::{snr_db, ssim, tissue_dice, EvalReport, EvalRow};
use pmri_core::phantom::{generate_dataset, AcquisitionConfig, PhantomSpec};
use pmri_core::tensor_io::{load, save, RealImage};
use pmri_core::train::{train as train_model, EpochStats, TrainConfig};
use pmri_core::unrolled::{infer, Mode, UnrolledModel};
use pmri_core::{
    load_config, ComplexImage, Dataset, KSpaceData, LabelMap, MultiCoilImage, RunConfig, SamplingMask, NUM_CLASSES,
};

use crate::args::{CompareArgs, EvaluateArgs, GenerateArgs, Method, ReconstructArgs, TrainArgs, TrainMode};
use crate::image_out::{min_max, write_gray_png, write_label_png};
use crate::manifest::{
    read_manifest, write_manifest, DatasetEntry, EvaluateManifest, GenerateManifest, Manifest, ReconEntry,
    ReconstructManifest, TrainManifest, MANIFEST_VERSION,
};
use crate::report::{parse_report, summary_table};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.pmri";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_FILE: &str = "report.csv";

pub fn dataset_id(seed: u64) -> String {
    format!("ds{seed:06}")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs `f` over `items`, in parallel unless `deterministic`; results keep input order.
fn map_items<I, T, F>(items: &[I], deterministic: bool, f: F) -> Result<Vec<T>, CliError>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T, CliError> + Sync + Send,
{
    if deterministic {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

fn resolve_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

// ---------------------------------------------------------------- generate

pub fn generate(args: &GenerateArgs, deterministic: bool) -> Result<GenerateManifest, CliError> {
    if args.count == 0 {
        return Err(CliError::data("--count must be at least 1"));
    }
    if !(args.accel >= 1.0) {
        return Err(CliError::data(format!("--accel must be at least 1, got {}", args.accel)));
    }
    let spec = PhantomSpec::new(args.size, args.size);
    let acq = AcquisitionConfig {
        coils: args.coils,
        noise_sigma: args.noise,
        accel: args.accel,
        center_fraction: args.center_fraction,
        ..AcquisitionConfig::default()
    };
    spec.validate()?;
    acq.validate()?;
    create_dir(&args.out)?;

    let seeds: Vec<u64> = (0..args.count as u64)
        .map(|i| args.seed.checked_add(i).ok_or_else(|| CliError::data("seed range overflows")))
        .collect::<Result<_, _>>()?;
    let datasets = map_items(&seeds, deterministic, |&seed| {
        let ds = generate_dataset(&spec, &acq, seed)?;
        let id = dataset_id(seed);
        write_dataset(&args.out.join(&id), &ds)?;
        Ok(DatasetEntry {
            id,
            seed,
            height: ds.mask.height,
            width: ds.mask.width,
            coils: ds.kspace.coils,
            accel: ds.mask.accel,
            sampled_fraction: ds.mask.sampled_fraction(),
        })
    })?;
    let manifest = GenerateManifest {
        version: MANIFEST_VERSION,
        args: args.clone(),
        phantom: spec,
        acquisition: acq,
        datasets,
    };
    write_manifest(&args.out, &Manifest::Generate(manifest.clone()))?;
    Ok(manifest)
}

fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), CliError> {
    create_dir(dir)?;
    save(dir.join("kspace.pmri"), &ds.kspace)?;
    save(dir.join("mask.pmri"), &ds.mask)?;
    save(dir.join("sens.pmri"), &ds.sens)?;
    save(dir.join("reference.pmri"), &ds.reference)?;
    let mag = ds.reference.magnitude();
    let (lo, hi) = min_max(&mag);
    write_gray_png(&dir.join("reference.png"), &mag, ds.mask.height, ds.mask.width, lo, hi)?;
    if let Some(labels) = &ds.labels {
        save(dir.join("labels.pmri"), labels)?;
        write_label_png(&dir.join("labels.png"), labels)?;
    }
    Ok(())
}

/// A data directory loaded into memory.
pub struct LoadedData {
    pub manifest: GenerateManifest,
    pub datasets: Vec<(DatasetEntry, Dataset)>,
}

impl LoadedData {
    pub fn ids(&self) -> Vec<String> {
        self.manifest.datasets.iter().map(|d| d.id.clone()).collect()
    }
}

pub fn load_dataset(dir: &Path, entry: &DatasetEntry) -> Result<Dataset, CliError> {
    let base = dir.join(&entry.id);
    let mut mask: SamplingMask = load(base.join("mask.pmri"))?;
    mask.accel = entry.accel;
    let raw: KSpaceData = load(base.join("kspace.pmri"))?;
    let kspace = KSpaceData::new(raw.coils, raw.height, raw.width, raw.data, &mask)?;
    let sens: MultiCoilImage = load(base.join("sens.pmri"))?;
    let reference: ComplexImage = load(base.join("reference.pmri"))?;
    let labels_path = base.join("labels.pmri");
    let labels = if labels_path.exists() { Some(load::<LabelMap>(&labels_path)?) } else { None };
    let ds = Dataset { kspace, mask, sens, reference, labels, seed: entry.seed };
    ds.validate()?;
    if (ds.mask.height, ds.mask.width, ds.kspace.coils) != (entry.height, entry.width, entry.coils) {
        return Err(CliError::data(format!("dataset {} does not match its manifest entry", entry.id)));
    }
    Ok(ds)
}

pub fn load_data(dir: &Path) -> Result<LoadedData, CliError> {
    let manifest = match read_manifest(dir)? {
        Manifest::Generate(m) => m,
        _ => return Err(CliError::data(format!("{} is not a data directory", dir.display()))),
    };
    let datasets = manifest
        .datasets
        .iter()
        .map(|e| Ok((e.clone(), load_dataset(dir, e)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(LoadedData { manifest, datasets })
}

// ------------------------------------------------------------- reconstruct

struct ReconResult {
    sos: Vec<f64>,
    labels: Option<LabelMap>,
    cg_unconverged: Option<usize>,
}

pub fn reconstruct(args: &ReconstructArgs, deterministic: bool) -> Result<ReconstructManifest, CliError> {
    let model = match (args.method, &args.checkpoint) {
        (Method::Idslr, Some(path)) => Some(load_checkpoint(path)?),
        (Method::Idslr, None) => return Err(CliError::data("--checkpoint is required for --method idslr")),
        (_, Some(_)) => return Err(CliError::data("--checkpoint is only accepted with --method idslr")),
        (_, None) => None,
    };
    let cfg = resolve_config(args.config.as_ref())?;
    let data = load_data(&args.data)?;
    let tag = match (&args.tag, &model) {
        (Some(t), _) => t.clone(),
        (None, Some(m)) => format!("idslr-{}", m.mode.name()),
        (None, None) => args.method.name().to_string(),
    };
    create_dir(&args.out)?;

    let clear_cfg = ClearConfig::from_run(&cfg);
    let entries = map_items(&data.datasets, deterministic, |(entry, ds)| {
        let res = run_method(args.method, ds, &cfg, &clear_cfg, model.as_ref())?;
        let reference = ds.reference.magnitude();
        let snr = snr_db(&res.sos, &reference)?;
        eprintln!("{} {}: SNR {:.3} dB", tag, entry.id, snr);
        let dir = args.out.join(&entry.id);
        create_dir(&dir)?;
        let (h, w) = (ds.mask.height, ds.mask.width);
        save(dir.join("sos.pmri"), &RealImage { height: h, width: w, data: res.sos.clone() })?;
        let (lo, hi) = min_max(&reference);
        write_gray_png(&dir.join("sos.png"), &res.sos, h, w, lo, hi)?;
        if let Some(labels) = &res.labels {
            save(dir.join("labels.pmri"), labels)?;
            write_label_png(&dir.join("labels.png"), labels)?;
        }
        Ok(ReconEntry {
            id: entry.id.clone(),
            snr_db: snr,
            segmented: res.labels.is_some(),
            cg_unconverged: res.cg_unconverged,
        })
    })?;

    let manifest = ReconstructManifest {
        version: MANIFEST_VERSION,
        args: args.clone(),
        method: tag,
        config: cfg.to_json(),
        datasets: entries,
    };
    write_manifest(&args.out, &Manifest::Reconstruct(manifest.clone()))?;
    Ok(manifest)
}

fn run_method(
    method: Method,
    ds: &Dataset,
    cfg: &RunConfig,
    clear_cfg: &ClearConfig,
    model: Option<&UnrolledModel<f64>>,
) -> Result<ReconResult, CliError> {
    Ok(match method {
        Method::ZeroFilled => ReconResult {
            sos: apply_adjoint(&ds.kspace, &ds.mask)?.sos(),
            labels: None,
            cg_unconverged: None,
        },
        Method::Clear => {
            let (gamma, state) = clear_reconstruct(&ds.kspace, &ds.mask, cfg.clear_lambda, clear_cfg, cfg.irls_iters)?;
            ReconResult { sos: gamma.sos(), labels: None, cg_unconverged: Some(state.cg_unconverged) }
        }
        Method::Idslr => {
            let model = model.expect("checkpoint loaded for idslr");
            let (gamma, probs) = infer(model, ds)?;
            ReconResult {
                sos: gamma.sos(),
                labels: probs.map(|p| p.argmax()),
                cg_unconverged: None,
            }
        }
    })
}

// ------------------------------------------------------------------- train

pub fn core_mode(mode: TrainMode) -> Mode {
    match mode {
        TrainMode::Joint => Mode::Joint,
        TrainMode::ReconOnly => Mode::ReconOnly,
        TrainMode::Cascade => Mode::Cascade,
    }
}

/// Config file plus command-line overrides.
pub fn train_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = resolve_config(args.config.as_ref())?;
    if let Some(f) = args.labelled_fraction {
        cfg.labelled_fraction = f;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn loss_csv(epochs: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,rec,seg\n");
    for e in epochs {
        s.push_str(&format!("{},{:e},{:e},{:e}\n", e.epoch, e.loss, e.rec, e.seg));
    }
    s
}

/// Trains in single precision; the checkpoint stores the weights widened to f64.
pub fn train(args: &TrainArgs) -> Result<TrainManifest, CliError> {
    let cfg = train_config(args)?;
    let data = load_data(&args.data)?;
    let first = data.datasets.first().ok_or_else(|| CliError::data("no datasets"))?;
    let coils = first.1.kspace.coils;
    if data.datasets.iter().any(|(_, d)| d.kspace.coils != coils) {
        return Err(CliError::data("all training datasets must have the same number of coils"));
    }
    let mode = core_mode(args.mode);
    let mut model =
        UnrolledModel::<f32>::new(mode, coils, NUM_CLASSES, cfg.widths, cfg.unroll, cfg.lambda, cfg.seed)?;
    let datasets: Vec<Dataset> = data.datasets.iter().map(|(_, d)| d.clone()).collect();
    let report = train_model(&datasets, &mut model, &TrainConfig::from_run(&cfg), |e| {
        eprintln!("epoch {:>4}  loss {:.6e}  rec {:.6e}  seg {:.6e}", e.epoch, e.loss, e.rec, e.seg)
    })?;

    create_dir(&args.out)?;
    save_checkpoint(args.out.join(CHECKPOINT_FILE), &model)?;
    let loss_path = args.out.join(LOSS_FILE);
    fs::write(&loss_path, loss_csv(&report.epochs)).map_err(|e| CliError::io(&loss_path, e))?;
    let ids = data.ids();
    let manifest = TrainManifest {
        version: MANIFEST_VERSION,
        args: args.clone(),
        mode: mode.name().into(),
        precision: "f32".into(),
        config: cfg.to_json(),
        param_count: model.param_count(),
        labelled: report.labelled.iter().map(|&i| ids[i].clone()).collect(),
        datasets: ids,
        final_loss: report.epochs.last().map_or(0.0, |e| e.loss),
    };
    write_manifest(&args.out, &Manifest::Train(manifest.clone()))?;
    Ok(manifest)
}

// ---------------------------------------------------------------- evaluate

fn same_ids(a: &[String], b: &[String], what: &str) -> Result<(), CliError> {
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    if sa != sb || sa.len() != a.len() || sb.len() != b.len() {
        let only_a: Vec<&&String> = sa.difference(&sb).collect();
        let only_b: Vec<&&String> = sb.difference(&sa).collect();
        return Err(CliError::data(format!(
            "dataset IDs differ ({what}): only in first {only_a:?}, only in second {only_b:?}"
        )));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, deterministic: bool) -> Result<EvalReport, CliError> {
    let data = load_data(&args.data)?;
    let recon = read_manifest(&args.recon)?;
    let method = match &recon {
        Manifest::Reconstruct(m) => m.method.clone(),
        Manifest::Generate(_) => "reference".to_string(),
        _ => return Err(CliError::data(format!("{} holds no images", args.recon.display()))),
    };
    same_ids(&recon.dataset_ids(), &data.ids(), "reconstruction vs data")?;

    let rows = map_items(&data.datasets, deterministic, |(entry, ds)| {
        let dir = args.recon.join(&entry.id);
        let image: Vec<f64> = if dir.join("sos.pmri").exists() {
            load::<RealImage>(dir.join("sos.pmri"))?.data
        } else {
            load::<ComplexImage>(dir.join("reference.pmri"))?.magnitude()
        };
        let reference = ds.reference.magnitude();
        let (h, w) = (ds.mask.height, ds.mask.width);
        if image.len() != h * w {
            return Err(CliError::data(format!("{}: image size does not match the data", entry.id)));
        }
        let dice = if args.seg {
            let truth = ds
                .labels
                .as_ref()
                .ok_or_else(|| CliError::data(format!("{}: data has no labels", entry.id)))?;
            let path = dir.join("labels.pmri");
            if !path.exists() {
                return Err(CliError::data(format!("{}: reconstruction has no segmentation", entry.id)));
            }
            Some(tissue_dice(&load::<LabelMap>(&path)?, truth)?)
        } else {
            None
        };
        Ok(EvalRow {
            dataset_id: entry.id.clone(),
            method: method.clone(),
            snr_db: snr_db(&image, &reference)?,
            ssim: ssim(&image, &reference, h, w)?,
            dice,
        })
    })?;
    let report = EvalReport { rows };

    create_dir(&args.out)?;
    let path = args.out.join(REPORT_FILE);
    fs::write(&path, report.to_csv()).map_err(|e| CliError::io(&path, e))?;
    let manifest = EvaluateManifest {
        version: MANIFEST_VERSION,
        args: args.clone(),
        method,
        datasets: data.ids(),
    };
    write_manifest(&args.out, &Manifest::Evaluate(manifest))?;
    print!("{}", summary_table(&report));
    Ok(report)
}

// ----------------------------------------------------------------- compare

pub fn compare(args: &CompareArgs) -> Result<EvalReport, CliError> {
    let mut merged = EvalReport::default();
    let mut first_ids: Option<Vec<String>> = None;
    for path in &args.reports {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let report = parse_report(&text).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.message)))?;
        for m in report.methods() {
            let ids: Vec<String> = report
                .rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.dataset_id.clone())
                .collect();
            match &first_ids {
                None => first_ids = Some(ids),
                Some(f) => same_ids(f, &ids, &format!("{} method {m}", path.display()))?,
            }
        }
        merged.rows.extend(report.rows);
    }
    if let Some(out) = &args.out {
        fs::write(out, merged.to_csv()).map_err(|e| CliError::io(out, e))?;
    }
    print!("{}", summary_table(&merged));
    Ok(merged)
}
