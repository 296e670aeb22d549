use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use ccnet::augment::PatchSpec;
use ccnet::clustering::{kmeans_angular, ClusterModel, KMeansConfig};
use ccnet::dataset::{load_manifest, make_folds, read_image, write_image, FoldScheme};
use ccnet::estimator::estimate_with;
use ccnet::eval::{
    evaluate_folds, k_sweep, load_images, load_run, save_run, synth, train_folds, write_sweep_csv, Profile,
    RunConfig,
};
use ccnet::imaging::normalize_to_canonical;
use ccnet::network;
use ccnet::{Error, Result};

#[derive(Parser)]
#[command(name = "ccnet", version, about = "Illuminant estimation by clustered illuminant classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relight base scenes under a list of illuminants.
    Synth {
        #[arg(long)]
        bases: PathBuf,
        /// JSON array of [r, g, b] triples.
        #[arg(long)]
        lights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster the ground-truth illuminants of a manifest.
    Cluster {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per cross-validation fold.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// random:F[:SEED] or clip:F
        #[arg(long)]
        folds: String,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = ["paper", "toy"], default_value = "toy")]
        profile: String,
        /// JSON run configuration; the other flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a trained run and baselines on the held-out folds.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
        /// Comma-separated: cnn, cnn_argmax or baseline names.
        #[arg(long, value_delimiter = ',', default_value = "cnn,grey_world")]
        methods: Vec<String>,
        /// Per-sample CSV; the aggregate JSON is written next to it.
        #[arg(long)]
        report: PathBuf,
        /// Write corrected images of the cnn method to this directory.
        #[arg(long)]
        dump_corrected: Option<PathBuf>,
    },
    /// Median validation error for several cluster counts.
    SweepK {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// White-balance one image with a trained model.
    Correct {
        #[arg(long)]
        image: PathBuf,
        /// A fold directory of a trained run, or the run directory itself
        /// (fold 0 is used).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { bases, lights, out } => {
            let bases = synth::load_bases(&bases)?;
            let lights = synth::load_lights(&lights)?;
            let res = synth::synth_dataset(&bases, &lights, &out)?;
            println!("{} samples, manifest {}", res.dataset.len(), res.manifest.display());
        }
        Command::Cluster { manifest, k, seed, out } => {
            let ds = load_manifest(&manifest)?;
            let gts: Vec<_> = ds.samples().iter().map(|s| s.ground_truth).collect();
            let fit = kmeans_angular(&gts, &KMeansConfig::new(k, seed))?;
            fit.model.save(&out)?;
            println!("K = {k}, inertia {} rad, restart {}", fit.inertia, fit.restart);
        }
        Command::Train { manifest, folds, k, profile, config, out_dir } => {
            let scheme = FoldScheme::parse(&folds)?;
            let mut cfg = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::new(&manifest, scheme, k),
            };
            cfg.manifest = manifest;
            cfg.folds = scheme;
            cfg.k = k;
            cfg.profile = Profile::parse(&profile)?;
            cfg.run_dir = Some(out_dir.clone());
            if !cfg.needs_cnn() {
                cfg.methods.insert(0, "cnn".into());
            }
            cfg.validate()?;
            cfg.check_files()?;
            let ds = load_manifest(&cfg.manifest)?;
            let images = load_images(&ds)?;
            let plan = make_folds(&ds, cfg.folds)?;
            let models = train_folds(&ds, &images, &plan, &cfg)?;
            save_run(&out_dir, &cfg, &plan, &models)?;
            println!("trained {} folds into {}", models.len(), out_dir.display());
        }
        Command::Evaluate { manifest, run_dir, methods, report, dump_corrected } => {
            let run = load_run(&run_dir)?;
            let mut cfg = run.config;
            cfg.manifest = manifest;
            cfg.methods = methods;
            cfg.report = Some(report.clone());
            cfg.dump_corrected = dump_corrected;
            cfg.validate()?;
            let ds = load_manifest(&cfg.manifest)?;
            let images = load_images(&ds)?;
            let rep = evaluate_folds(&ds, &images, &run.plan, &run.models, &cfg)?;
            let json = rep.save(&report)?;
            for a in rep.aggregates.iter().filter(|a| a.camera_id.is_none()) {
                println!(
                    "{:<20} mean {:.3} median {:.3} trimean {:.3} best25 {:.3} worst25 {:.3}",
                    a.method, a.stats.mean, a.stats.median, a.stats.trimean, a.stats.best25, a.stats.worst25
                );
            }
            info!("wrote {} and {}", report.display(), json.display());
        }
        Command::SweepK { manifest, k_list, config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.manifest = manifest;
            cfg.check_files()?;
            let ds = load_manifest(&cfg.manifest)?;
            let images = load_images(&ds)?;
            let rows = k_sweep(&ds, &images, &cfg, &k_list)?;
            write_sweep_csv(&rows, &out)?;
            for r in &rows {
                println!("K = {:>3}: median {:.3} deg, inertia {:.6}", r.k, r.median, r.inertia);
            }
        }
        Command::Correct { image, model, out, seed } => {
            let (clusters, net, spec) = load_model_dir(&model)?;
            let img = read_image(&image)?;
            let est = estimate_with(&img, &net, &clusters, &spec, seed, Default::default())?;
            let corrected = normalize_to_canonical(&img, &est.illuminant)?;
            write_image(&corrected, &out)?;
            let rgb = est.illuminant.rgb();
            println!("illuminant {:.6} {:.6} {:.6}", rgb[0], rgb[1], rgb[2]);
        }
    }
    Ok(())
}

fn load_model_dir(dir: &Path) -> Result<(ClusterModel, network::TrainedNetwork, PatchSpec)> {
    let fold_dir = if dir.join("network.ccnn").is_file() {
        dir.to_path_buf()
    } else {
        warn!("{} is not a fold directory; using fold_00", dir.display());
        dir.join("fold_00")
    };
    let clusters = ClusterModel::load(fold_dir.join("clusters.json"))?;
    let net = network::io::load(fold_dir.join("network.ccnn"))?;
    let spec = [fold_dir.join("config.json"), fold_dir.join("..").join("config.json")]
        .iter()
        .find(|p| p.is_file())
        .map(|p| RunConfig::load(p).map(|c| c.patch_spec()))
        .transpose()?
        .unwrap_or_else(|| PatchSpec {
            net_input_side: net.spec().input_side,
            ..PatchSpec::toy()
        });
    if spec.net_input_side != net.spec().input_side {
        return Err(Error::Config("patch side does not match the network input".into()));
    }
    Ok((clusters, net, spec))
}
