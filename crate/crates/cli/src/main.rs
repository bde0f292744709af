//! `clutter`: command-line front end of the clutter classification pipeline.

mod commands;
mod config;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Returned by subcommands whose check did not pass (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

#[derive(Parser, Debug)]
#[command(name = "clutter", version, about = "Two-stage CNN clutter classification from overhead imagery")]
struct Cli {
    /// Worker threads; 1 makes every output bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Merge tree, building and open-area sources into one inventory.
    BuildInventory {
        /// Tree points CSV (id, lat, lon, species...).
        #[arg(long)]
        trees: PathBuf,
        /// Column of the tree CSV holding the species name.
        #[arg(long, default_value = "species")]
        species_column: String,
        /// Extra species mappings (species,label).
        #[arg(long)]
        species_map: Option<PathBuf>,
        /// Building footprints GeoJSON with a `type` property.
        #[arg(long)]
        buildings: PathBuf,
        /// Building points CSV joined to the footprints; defaults to one
        /// point per footprint.
        #[arg(long)]
        building_points: Option<PathBuf>,
        /// Building type mapping CSV (type,label); built-in lists otherwise.
        #[arg(long)]
        building_types: Option<PathBuf>,
        /// Open-area points CSV (id, lat, lon).
        #[arg(long)]
        other: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inventory CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Where to write records that need manual review.
        #[arg(long)]
        review: Option<PathBuf>,
    },
    /// Fetch one image per inventory record through the configured provider.
    Fetch {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Directory for the image files.
        #[arg(long)]
        images_dir: PathBuf,
        /// Manifest CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop low-detail images, detector mismatches and co-located records.
    Clean {
        #[arg(long)]
        inventory: PathBuf,
        /// A manifest CSV, or a directory of `<id>.png|jpg` images.
        #[arg(long)]
        images: PathBuf,
        /// Tree detections CSV (image_id,xmin,ymin,xmax,ymax,score); the
        /// built-in greenness detector runs when omitted.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cleaned manifest CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Geographic k-fold cross-validation of all four model kinds.
    CrossValidate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one model on the whole dataset (20% held out for validation).
    Train {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the fold ensembles on an independent dataset.
    TestEnsemble {
        /// Directory of `fold{i}_{kind}.cltr` checkpoints.
        #[arg(long)]
        checkpoints: PathBuf,
        /// Dataset description (JSON, same form as the config's `dataset`).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Classify one image with the two-stage ensemble.
    Classify {
        #[arg(long)]
        checkpoint_set: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Use the single-stage models instead.
        #[arg(long)]
        single_stage: bool,
    },
    /// Classify a grid over a bounding box and write an indexed PNG map.
    Map {
        #[arg(long)]
        checkpoint_set: PathBuf,
        /// min_lat,min_lon,max_lat,max_lon
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        bbox: Vec<f64>,
        /// Cell size in metres.
        #[arg(long)]
        pixel_size: f64,
        #[arg(long)]
        config: PathBuf,
        /// PNG to write; the sidecar goes next to it as `.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the report tables from saved results.
    Report {
        /// Directory holding cv_results.json and/or independent_results.json.
        #[arg(long)]
        results: PathBuf,
        /// Where to write the tables; defaults to the results directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print the learnable parameter count of a model kind.
    ParamCount {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference gradient suite; fails when any relative error > 1e-4.
    GradCheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Write a synthetic city: inventory, images and manifest.
    Synth {
        /// Synthetic city settings (JSON); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let parallel = cli.threads != Some(1);
    match commands::run(cli.command, parallel) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<CheckFailed>().is_some() => {
            eprintln!("check failed: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
