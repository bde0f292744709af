use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clutter::geo::{
    build_inventory, clean, footprint_points, label_trees, parse_building_geojson, read_detections_file,
    read_points_file, safe_file_stem, spatial_join_buildings, BuildingTypeMap, GreennessDetector, Inventory,
    InventoryRecord, ManifestEntry, ReviewItem, SampleManifest, SampleStatus, SpeciesMap,
};
use clutter::net::{center_crop, gradsuite, normalize, ClutterLabel, ImagePatch, ModelKind};
use clutter::pipeline::{
    classify_grid, cross_validate, derive_seed, evaluate_independent, load_fold_models, save_fold_models, synth_city,
    synth_dataset, train_model, BoundingBox, Dataset, Ensemble, FoldModels, SynthCityConfig,
};
use clutter::stats::render_report;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetSource, RunConfig};
use crate::results::{read_json, read_optional, write_json, CvSummary, IndependentResults, CV_RESULTS, INDEPENDENT_RESULTS};
use crate::{CheckFailed, Command};

pub fn run(command: Command, parallel: bool) -> Result<()> {
    match command {
        Command::BuildInventory {
            trees,
            species_column,
            species_map,
            buildings,
            building_points,
            building_types,
            other,
            config,
            out,
            review,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let mut species = SpeciesMap::default();
            if let Some(p) = &species_map {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                species.extend_from_csv(f).map_err(|e| e.in_file(p))?;
            }
            let (tree_records, mut review_items) =
                label_trees(read_points_file(&trees)?, "trees", &species_column, &species);
            let text = std::fs::read_to_string(&buildings).with_context(|| format!("reading {}", buildings.display()))?;
            let (polygons, diagnostics) = parse_building_geojson(&text).map_err(|e| e.in_file(&buildings))?;
            for d in &diagnostics {
                log::warn!("{}: feature {}: {}", buildings.display(), d.feature_index, d.message);
            }
            let types = match &building_types {
                Some(p) => BuildingTypeMap::from_csv_file(p)?,
                None => BuildingTypeMap::default(),
            };
            let points = match &building_points {
                Some(p) => read_points_file(p)?,
                None => footprint_points(&polygons),
            };
            let (building_records, building_review) =
                spatial_join_buildings(points, &polygons, &types, cfg.max_join_distance_m, "buildings")
                    .map_err(|e| e.in_file(&buildings))?;
            review_items.extend(building_review);
            let others: Vec<InventoryRecord> = read_points_file(&other)?
                .into_iter()
                .map(|p| InventoryRecord { id: p.id, point: p.point, label: ClutterLabel::Other, source: "other".into(), attributes: p.attributes })
                .collect();
            let inventory = build_inventory(tree_records, building_records, others)?;
            inventory.write(&out)?;
            if let Some(p) = &review {
                write_review(p, &review_items)?;
            }
            print_histogram(&inventory);
            if !review_items.is_empty() {
                println!("needs review: {}", review_items.len());
            }
            Ok(())
        }
        Command::Fetch { inventory, config, images_dir, out } => {
            let cfg = RunConfig::load(&config)?;
            let inv = Inventory::read(&inventory)?;
            let provider = cfg.provider()?;
            let items: Vec<_> = inv.records().iter().map(|r| (r.id.clone(), r.point)).collect();
            let entries =
                clutter::geo::fetch_all(&items, provider.as_ref(), &images_dir, cfg.fetch_image_side, cfg.fetch_parallelism)
                    .with_context(|| format!("writing into {}", images_dir.display()))?;
            let manifest = SampleManifest::new(entries);
            manifest.write(&out)?;
            let ok = manifest.kept().count();
            println!("fetched {ok} of {}", manifest.entries.len());
            Ok(())
        }
        Command::Clean { inventory, images, detections, config, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let inv = Inventory::read(&inventory)?;
            let manifest = if images.is_dir() { manifest_from_dir(&inv, &images)? } else { read_manifest(&images)? };
            let mut decoded = HashMap::new();
            for e in manifest.kept() {
                let path = e.image_path.as_ref().ok_or_else(|| anyhow!("kept entry `{}` has no image path", e.id))?;
                let img = ImagePatch::open(path).map_err(|err| anyhow!("unreadable image {}: {err}", path.display()))?;
                decoded.insert(e.id.clone(), img);
            }
            let dets = match &detections {
                Some(p) => read_detections_file(p, cfg.cleaning.image_side)?,
                None => {
                    let detector = GreennessDetector::default();
                    let trees: HashMap<&str, bool> = inv.records().iter().map(|r| (r.id.as_str(), r.label.is_tree())).collect();
                    decoded
                        .iter()
                        .filter(|(id, _)| trees.get(id.as_str()).copied().unwrap_or(false))
                        .map(|(id, img)| (id.clone(), detector.detect(id, img)))
                        .collect()
                }
            };
            let cleaned = clean(&inv, &manifest, &dets, &cfg.cleaning)?;
            cleaned.write(&out)?;
            println!("kept: {}", cleaned.kept().count());
            for (reason, n) in cleaned.drop_counts() {
                println!("dropped ({}): {n}", reason.as_str());
            }
            Ok(())
        }
        Command::CrossValidate { config, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            let side = cfg.cv.net.input_side;
            let source = cfg.dataset.as_ref().ok_or_else(|| anyhow!("the configuration has no `dataset`"))?;
            let dataset = load_source(source, side)?;
            log::info!("{} samples", dataset.len());
            let cv = cross_validate(&dataset, &cfg.cv_config(parallel))?;
            for s in &cv.skipped {
                eprintln!("warning: fold {} skipped: {}", s.fold, s.reason);
            }
            let models = cv.fold_models();
            save_fold_models(&out_dir.join("checkpoints"), &models)?;
            let summary = CvSummary::from_results(&cv);
            write_json(&out_dir.join(CV_RESULTS), &summary)?;
            let independent = match &cfg.independent {
                Some(src) => {
                    let data = load_source(src, side)?;
                    let ev = evaluate_independent(&models, &data.samples().iter().collect::<Vec<_>>(), cfg.direction_policy)?;
                    write_json(&out_dir.join(INDEPENDENT_RESULTS), &ev)?;
                    Some(ev)
                }
                None => None,
            };
            let report = full_report(Some(&summary), independent.as_ref());
            report.write_to(&out_dir)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Train { kind, config, out } => {
            let kind = parse_kind(&kind)?;
            let cfg = RunConfig::load(&config)?;
            let source = cfg.dataset.as_ref().ok_or_else(|| anyhow!("the configuration has no `dataset`"))?;
            let dataset = load_source(source, cfg.cv.net.input_side)?;
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train-split", 0)));
            let n_val = (dataset.len() as f64 * clutter::pipeline::VALIDATION_FRACTION).round() as usize;
            let (val, train) = order.split_at(n_val);
            let seed = derive_seed(cfg.seed, kind.as_str(), u64::MAX);
            let m = train_model(kind, &dataset.subset(train), &dataset.subset(val), &cfg.cv.train, &cfg.net_for(kind), seed)?;
            m.checkpoint.save(&out).with_context(|| format!("writing {}", out.display()))?;
            let acc = m.checkpoint.metadata.final_validation_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"));
            println!("{kind}: best epoch {} validation accuracy {acc}", m.best_epoch);
            Ok(())
        }
        Command::TestEnsemble { checkpoints, dataset, config, out_dir } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let models = load_fold_models(&checkpoints)?;
            let side = models[0].pipeline.stage1().config().input_side;
            let source = read_source(&dataset)?;
            let data = load_source(&source, side)?;
            let ev = evaluate_independent(&models, &data.samples().iter().collect::<Vec<_>>(), cfg.direction_policy)?;
            write_json(&out_dir.join(INDEPENDENT_RESULTS), &ev)?;
            let report = full_report(None, Some(&ev));
            report.write_to(&out_dir)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Classify { checkpoint_set, image, single_stage } => {
            let models = load_fold_models(&checkpoint_set)?;
            let ensemble = ensemble_of(models, single_stage)?;
            let img = ImagePatch::open(&image).map_err(|e| anyhow!("{}: {e}", image.display()))?;
            let img = center_crop(&img, ensemble.input_side())?;
            let d = ensemble.classify(&normalize(&img))?;
            println!("label: {}", d.label);
            for (i, t) in d.traces.iter().enumerate() {
                let s2 = t.stage2_probabilities.as_ref().map_or("-".into(), |p| format!("{p:.3?}"));
                println!(
                    "member {i}: stage1 {} {:.3?} stage2 {s2} -> {} (confidence {:.3})",
                    t.stage1, t.stage1_probabilities, t.label, t.confidence
                );
            }
            if d.traces.is_empty() {
                for (i, v) in d.votes.iter().enumerate() {
                    println!("member {i}: {} ({:.3})", v.label, v.probability);
                }
            }
            Ok(())
        }
        Command::Map { checkpoint_set, bbox, pixel_size, config, out } => {
            let cfg = RunConfig::load(&config)?;
            let [min_lat, min_lon, max_lat, max_lon] = bbox[..] else {
                bail!("--bbox needs min_lat,min_lon,max_lat,max_lon, got {} values", bbox.len());
            };
            let bbox = BoundingBox::new(min_lat, min_lon, max_lat, max_lon)?;
            let ensemble = ensemble_of(load_fold_models(&checkpoint_set)?, false)?;
            let provider = cfg.provider()?;
            let threads = if parallel { cfg.fetch_parallelism } else { 1 };
            let raster = classify_grid(&bbox, pixel_size, &ensemble, provider.as_ref(), threads)?;
            raster.write(&out).with_context(|| format!("writing {}", out.display()))?;
            let unknown = raster.cells.iter().filter(|c| c.is_none()).count();
            println!("{}x{} cells, {unknown} unknown", raster.width, raster.height);
            Ok(())
        }
        Command::Report { results, out_dir } => {
            let cv: Option<CvSummary> = read_optional(&results.join(CV_RESULTS))?;
            let ev: Option<IndependentResults> = read_optional(&results.join(INDEPENDENT_RESULTS))?;
            if cv.is_none() && ev.is_none() {
                bail!("no {CV_RESULTS} or {INDEPENDENT_RESULTS} in {}", results.display());
            }
            let report = full_report(cv.as_ref(), ev.as_ref());
            report.write_to(out_dir.as_deref().unwrap_or(&results))?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::ParamCount { kind, config } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let kind = parse_kind(&kind)?;
            println!("{}", cfg.net_for(kind).count_parameters()?);
            Ok(())
        }
        Command::GradCheck { seed } => {
            let results = gradsuite::gradient_suite(seed)?;
            let mut worst = 0.0f64;
            for r in &results {
                let at = r.worst.as_ref().map_or(String::new(), |w| {
                    format!(" at {}[{}] analytic {:.6e} numeric {:.6e}", w.tensor, w.index, w.analytic, w.numeric)
                });
                println!(
                    "{:<28} coords {:>5} kinks {:>3} max relative error {:.3e}{at}",
                    r.case, r.checked, r.kinks, r.max_rel_error
                );
                worst = worst.max(r.max_rel_error);
            }
            if worst > 1e-4 {
                return Err(CheckFailed(format!("max relative error {worst:.3e} exceeds 1e-4")).into());
            }
            println!("ok: {} networks, max relative error {worst:.3e}", results.len());
            Ok(())
        }
        Command::Synth { config, out_dir } => {
            let cfg: SynthCityConfig = match &config {
                Some(p) => read_json(p)?,
                None => SynthCityConfig::default(),
            };
            let (inv, images) = synth_city(&cfg)?;
            let mut entries = Vec::with_capacity(images.len());
            for (r, img) in inv.records().iter().zip(&images) {
                let rel = PathBuf::from("images").join(format!("{}.png", safe_file_stem(&r.id)));
                let bytes = img.encode_png()?;
                clutter::io::write_atomic(&out_dir.join(&rel), &bytes)?;
                entries.push(ManifestEntry {
                    id: r.id.clone(),
                    image_path: Some(rel),
                    byte_size: Some(bytes.len() as u64),
                    fetched_at: None,
                    status: SampleStatus::Kept,
                    reason: None,
                });
            }
            inv.write(&out_dir.join("inventory.csv"))?;
            SampleManifest::new(entries).write(&out_dir.join("manifest.csv"))?;
            print_histogram(&inv);
            Ok(())
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind> {
    ModelKind::parse(s).ok_or_else(|| anyhow!("unknown model kind `{s}` (stage1, stage2_tree, stage2_building, single_stage)"))
}

fn print_histogram(inv: &Inventory) {
    let h = inv.histogram();
    for l in ClutterLabel::ALL {
        println!("{:<16} {}", l.display_name(), h.get(&l).copied().unwrap_or(0));
    }
    println!("{:<16} {}", "Total", inv.len());
}

fn write_review(path: &Path, items: &[ReviewItem]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "id", "reason"])?;
    for r in items {
        w.write_record([&r.source, &r.id, &r.reason])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    clutter::io::write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

/// A manifest with relative image paths resolved against its directory.
fn read_manifest(path: &Path) -> Result<SampleManifest> {
    let mut m = SampleManifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut m.entries {
        if let Some(p) = &mut e.image_path {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(m)
}

/// One entry per inventory record, pointing at `<dir>/<id>.png|jpg|jpeg`.
fn manifest_from_dir(inv: &Inventory, dir: &Path) -> Result<SampleManifest> {
    let mut entries = Vec::with_capacity(inv.len());
    for r in inv.records() {
        let stem = safe_file_stem(&r.id);
        let found = ["png", "jpg", "jpeg"].iter().map(|ext| dir.join(format!("{stem}.{ext}"))).find(|p| p.is_file());
        entries.push(match found {
            Some(p) => {
                let size = std::fs::metadata(&p).with_context(|| format!("reading {}", p.display()))?.len();
                ManifestEntry {
                    id: r.id.clone(),
                    image_path: Some(p),
                    byte_size: Some(size),
                    fetched_at: None,
                    status: SampleStatus::Kept,
                    reason: None,
                }
            }
            None => ManifestEntry {
                id: r.id.clone(),
                image_path: None,
                byte_size: None,
                fetched_at: None,
                status: SampleStatus::FetchFailed,
                reason: Some(format!("no image file {stem}.png|jpg in {}", dir.display())),
            },
        });
    }
    Ok(SampleManifest::new(entries))
}

fn read_source(path: &Path) -> Result<DatasetSource> {
    let mut s: DatasetSource = read_json(path)?;
    if let DatasetSource::Files { inventory, manifest } = &mut s {
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [inventory, manifest] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(s)
}

fn load_source(source: &DatasetSource, side: usize) -> Result<Dataset> {
    Ok(match source {
        DatasetSource::Files { inventory, manifest } => {
            let inv = Inventory::read(inventory)?;
            Dataset::load(&inv, &read_manifest(manifest)?, side)?
        }
        DatasetSource::Synth(cfg) => synth_dataset(cfg, side)?,
    })
}

fn ensemble_of(models: Vec<FoldModels>, single_stage: bool) -> Result<Ensemble> {
    Ok(if single_stage {
        Ensemble::single_stage(models.into_iter().map(|m| m.single).collect())?
    } else {
        Ensemble::two_stage(models.into_iter().map(|m| m.pipeline).collect())?
    })
}

fn full_report(cv: Option<&CvSummary>, ev: Option<&IndependentResults>) -> clutter::stats::Report {
    render_report(
        cv.map(|c| c.stage_rows.clone()),
        cv.map(|c| c.combined_rows.clone()),
        ev.map(|e| e.stages.clone()),
        ev.map(|e| e.combined.clone()),
        ev.map(|e| e.f1.clone()),
    )
}

