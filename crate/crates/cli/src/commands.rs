use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Component, Path, PathBuf};

use fundus_core::dataset::{
    assemble_manifest, generate_synthetic_fundus, read_manifest, ImageEntry, Split, SplitCounts, SynthParams,
};
use fundus_core::evaluate::{
    evaluate_subset, reports_to_csv, threshold_label, DetectionRecord, EvalConfig, EvalReport,
};
use fundus_core::instances::{build_annotations, Connectivity, LesionClass};
use fundus_core::modelconfig::{default_train_config, write_config};
use fundus_core::preprocess::{preprocess_pair, PreprocessConfig};
use fundus_core::rng::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::imageio::{list_pngs, png_dimensions, read_mask, read_raster, stem, write_mask, write_raster};

pub fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(e.to_string()).at(path))
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::internal(format!("cannot start worker pool: {e}")))
}

/// `target` relative to directory `base`, with `/` separators.
pub fn relative_path(target: &Path, base: &Path) -> String {
    let t: Vec<Component> = target.components().collect();
    let b: Vec<Component> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut parts: Vec<String> = vec!["..".to_owned(); b.len() - common];
    parts.extend(t[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    parts.join("/")
}

// ------------------------------------------------------------------- prep

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    image: PathBuf,
    mask: PathBuf,
}

pub struct PrepArgs<'a> {
    pub in_dir: &'a Path,
    pub mask_dir: &'a Path,
    pub out_dir: &'a Path,
    pub config: Option<&'a Path>,
    pub pairs: Option<&'a Path>,
    pub jobs: usize,
}

/// Image/mask pairs by file stem, or from an explicit pairing list whose
/// paths are relative to the image and mask directories.
fn collect_pairs(args: &PrepArgs) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    if let Some(list) = args.pairs {
        let entries: Vec<PairEntry> = read_json(list)?;
        if entries.is_empty() {
            return Err(CliError::validation("pairing list is empty").at(list));
        }
        return Ok(entries.into_iter().map(|p| (args.in_dir.join(p.image), args.mask_dir.join(p.mask))).collect());
    }
    let images = list_pngs(args.in_dir)?;
    if images.is_empty() {
        return Err(CliError::validation("no PNG images found").at(args.in_dir));
    }
    let masks: BTreeMap<String, PathBuf> = list_pngs(args.mask_dir)?.into_iter().map(|p| (stem(&p), p)).collect();
    let mut pairs = Vec::new();
    let mut used = HashSet::new();
    for img in images {
        match masks.get(&stem(&img)) {
            Some(m) => {
                used.insert(stem(&img));
                pairs.push((img, m.clone()));
            }
            None => warn(format!("{}: no mask with the same name, skipped", img.display())),
        }
    }
    for (s, m) in &masks {
        if !used.contains(s) {
            warn(format!("{}: no image with the same name, skipped", m.display()));
        }
    }
    Ok(pairs)
}

fn prep_one(img_path: &Path, mask_path: &Path, out: &Path, cfg: &PreprocessConfig) -> CliResult<()> {
    let img = read_raster(img_path)?;
    let mask = read_mask(mask_path)?;
    if (img.width(), img.height()) != (mask.width(), mask.height()) {
        return Err(CliError::validation(format!(
            "image {} is {}x{} but mask {} is {}x{}",
            img_path.display(),
            img.width(),
            img.height(),
            mask_path.display(),
            mask.width(),
            mask.height()
        )));
    }
    let (out_img, out_mask, transform) =
        preprocess_pair(&img, &mask, cfg).map_err(|e| CliError::from(e).at(img_path))?;
    let name = stem(img_path);
    write_raster(&out.join("images").join(format!("{name}.png")), &out_img)?;
    write_mask(&out.join("masks").join(format!("{name}.png")), &out_mask)?;
    write_json(&out.join("transforms").join(format!("{name}.json")), &transform)
}

pub fn prep(args: PrepArgs) -> CliResult<usize> {
    let cfg: PreprocessConfig = match args.config {
        Some(p) => read_json(p)?,
        None => PreprocessConfig::default(),
    };
    cfg.validate()?;
    let pairs = collect_pairs(&args)?;
    for sub in ["images", "masks", "transforms"] {
        create_dir(&args.out_dir.join(sub))?;
    }
    let results: Vec<CliResult<()>> =
        thread_pool(args.jobs)?.install(|| pairs.par_iter().map(|(i, m)| prep_one(i, m, args.out_dir, &cfg)).collect());
    results.into_iter().collect::<CliResult<Vec<()>>>()?;
    Ok(pairs.len())
}

// ------------------------------------------------------------------ build

pub struct BuildArgs<'a> {
    pub prep_dirs: &'a [PathBuf],
    pub class_ids: &'a [u32],
    pub seed: u64,
    pub counts: SplitCounts,
    pub connectivity: Connectivity,
    pub out: &'a Path,
}

pub fn build(args: BuildArgs) -> CliResult<(usize, usize)> {
    if args.prep_dirs.is_empty() {
        return Err(CliError::validation("at least one prepared directory is required"));
    }
    let classes: Vec<LesionClass> = match args.class_ids.len() {
        1 => vec![LesionClass::try_from(args.class_ids[0])?; args.prep_dirs.len()],
        n if n == args.prep_dirs.len() => {
            args.class_ids.iter().map(|&c| LesionClass::try_from(c)).collect::<Result<_, _>>()?
        }
        n => {
            return Err(CliError::validation(format!(
                "{n} class ids given for {} directories; give one, or one per directory",
                args.prep_dirs.len()
            )))
        }
    };
    let out_dir = match args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    };
    create_dir(&out_dir)?;
    let base = out_dir.canonicalize().map_err(|e| CliError::io(&out_dir, e))?;

    let mut jobs = Vec::new();
    let mut seen = HashSet::new();
    for (dir, &class) in args.prep_dirs.iter().zip(&classes) {
        let images = list_pngs(&dir.join("images"))?;
        if images.is_empty() {
            return Err(CliError::validation("no prepared images found").at(&dir.join("images")));
        }
        for img in images {
            let id = stem(&img);
            if !seen.insert(id.clone()) {
                return Err(CliError::validation(format!("image id {id:?} appears in more than one directory")));
            }
            let mask = dir.join("masks").join(format!("{id}.png"));
            jobs.push((id, img, mask, class));
        }
    }
    if jobs.len() != args.counts.total() {
        return Err(CliError::validation(format!(
            "split counts {}+{}+{} do not add up to the {} images found",
            args.counts.train,
            args.counts.val,
            args.counts.test,
            jobs.len()
        )));
    }

    let per_image: Vec<CliResult<_>> = jobs
        .par_iter()
        .map(|(id, img, mask_path, class)| {
            let (w, h) = png_dimensions(img)?;
            let mask = read_mask(mask_path)?;
            if (mask.width(), mask.height()) != (w as usize, h as usize) {
                return Err(CliError::validation(format!("mask size differs from image {}", img.display())));
            }
            let abs = img.canonicalize().map_err(|e| CliError::io(img, e))?;
            let entry = ImageEntry {
                image_id: id.clone(),
                file_name: relative_path(&abs, &base),
                width: w,
                height: h,
                source_class_hint: *class,
                split: Split::Train,
            };
            Ok((entry, build_annotations(&mask, *class, id, args.connectivity)))
        })
        .collect();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for r in per_image {
        let (entry, anns) = r?;
        if anns.is_empty() {
            warn(format!("{}: mask has no lesions", entry.image_id));
        }
        images.push(entry);
        annotations.extend(anns);
    }
    let manifest = assemble_manifest(images, annotations, args.seed, args.counts)?;
    write_text(args.out, &manifest.to_json()?)?;
    Ok((manifest.images.len(), manifest.annotations.len()))
}

// ------------------------------------------------------------------- eval

#[derive(Debug, Serialize)]
struct FullReport {
    overall: EvalReport,
    splits: BTreeMap<Split, EvalReport>,
}

pub struct EvalArgs<'a> {
    pub manifest: &'a Path,
    pub predictions: &'a Path,
    pub out: &'a Path,
    pub config: EvalConfig,
}

/// Writes `out` (JSON) and `out` with a `.csv` extension; returns the
/// overall mAP per threshold.
pub fn eval(args: EvalArgs) -> CliResult<Vec<(String, f64)>> {
    args.config.validate()?;
    let manifest = read_manifest(args.manifest).map_err(|e| CliError::from(e).at(args.manifest))?;
    let preds: Vec<DetectionRecord> = read_json(args.predictions)?;
    let overall = evaluate_subset(&manifest, &preds, &args.config, None)?;
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        if manifest.split_len(split) > 0 {
            splits.insert(split, evaluate_subset(&manifest, &preds, &args.config, Some(split))?);
        }
    }
    let mut rows = vec![("all".to_owned(), &overall)];
    rows.extend(splits.iter().map(|(s, r)| (s.to_string(), r)));
    let csv = reports_to_csv(&rows);
    let summary =
        overall.thresholds.iter().map(|&t| threshold_label(t)).zip(overall.map_per_threshold.clone()).collect();
    write_json(args.out, &FullReport { overall, splits })?;
    write_text(&args.out.with_extension("csv"), &csv)?;
    Ok(summary)
}

// ------------------------------------------------------------------ synth

pub fn synth(seed: u64, n_images: usize, params: &SynthParams, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    if n_images == 0 {
        return Ok(());
    }
    let dirs = ["images", "masks_exudate", "masks_microaneurysm"].map(|d| out.join(d));
    for d in &dirs {
        create_dir(d)?;
    }
    (0..n_images)
        .into_par_iter()
        .map(|i| {
            let image_seed = SplitMix64::for_stream(seed, i as u64).next_u64();
            let s = generate_synthetic_fundus(image_seed, params)?;
            let name = format!("synth_{i:04}.png");
            write_raster(&dirs[0].join(&name), &s.image)?;
            write_mask(&dirs[1].join(&name), &s.exudates)?;
            write_mask(&dirs[2].join(&name), &s.microaneurysms)
        })
        .collect::<CliResult<Vec<()>>>()?;
    Ok(())
}

pub fn emit_config(out: &Path) -> CliResult<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_config(&default_train_config(), out)?;
    Ok(())
}
