//! `ctxf`: search-and-compare image forensics from the command line.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forensics_core::comparators::{compare, Method};
use forensics_core::evaluation::synth::{read_jsonl, write_dataset, GalleryRecord};
use forensics_core::evaluation::{perturb_hsv, perturb_poisson, perturb_rotate, synthesize_splices};
use forensics_core::evaluation::{ProceduralCorpus, SynthConfig};
use forensics_core::features::detect_and_describe;
use forensics_core::image::warp_affine;
use forensics_core::index::ForestIndex;
use forensics_core::pipeline::{index_gallery, roc_from_reports, IndexGallery, ManifestProbes, Perturbation, Pipeline};
use forensics_core::registration::{register, MsacConfig};
use forensics_core::{io, Error, Result};
use log::{info, warn};

use config::FileConfig;

#[derive(Parser)]
#[command(name = "ctxf", version, about = "Search-and-compare image forensics")]
struct Cli {
    /// TOML configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic splice dataset with its gallery.
    Synth(SynthArgs),
    /// Build or query a descriptor index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Compare a probe with a (registered) candidate and write the heat map.
    Compare(CompareArgs),
    /// Run the full pipeline over a splice manifest.
    Run(RunArgs),
    /// Evaluation over written reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Apply a gallery perturbation to one image.
    Perturb(PerturbArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    /// Size of the host corpus splices are drawn from.
    #[arg(long)]
    hosts: Option<usize>,
    /// Host and probe side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    distractor_size: Option<usize>,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Index every image of a gallery manifest (JSON lines of `{id, path}`).
    Build {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        leaf_size: Option<usize>,
    },
    /// Rank gallery images for one probe image.
    Query {
        image: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(short = 'n', long)]
        retrieve: Option<usize>,
        #[arg(long)]
        checks: Option<usize>,
    },
}

#[derive(Args)]
struct CompareArgs {
    probe: PathBuf,
    candidate: PathBuf,
    #[arg(long)]
    method: Method,
    /// Register the candidate onto the probe first.
    #[arg(long)]
    register: bool,
    /// Heat-map PNG; a `.thm` sidecar with the exact scores is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbKind {
    Hsv,
    Poisson,
    Rotate,
}

#[derive(Args)]
struct RunArgs {
    manifest: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated comparator names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(short = 'n', long)]
    retrieve: Option<usize>,
    #[arg(long)]
    rfn_floor: Option<f64>,
    /// Perturb gallery candidates with the default strength of this family.
    #[arg(long)]
    perturb: Option<PerturbKind>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Pooled ROC per comparator from a `reports.jsonl`.
    Roc {
        reports: PathBuf,
        /// Directory for `roc_<method>.csv`; defaults to the reports' directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PerturbArgs {
    kind: PerturbKind,
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long, default_value_t = 50.0)]
    peak_min: f64,
    #[arg(long, default_value_t = 500.0)]
    peak_max: f64,
    #[arg(long, default_value_t = 15.0)]
    max_deg: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    cfg.apply_seed(cli.seed);
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Index(IndexCommand::Build {
            manifest,
            out,
            trees,
            leaf_size,
        }) => {
            let mut forest = cfg.forest;
            forest.trees = trees.unwrap_or(forest.trees);
            forest.leaf_size = leaf_size.unwrap_or(forest.leaf_size);
            let records: Vec<GalleryRecord> = read_jsonl(&manifest)?;
            let index = index_gallery(&records, parent(&manifest), &cfg.pipeline.surf, &forest)?;
            index.save(&out)?;
            println!("indexed {} images, {} descriptors", index.image_table().len(), index.record_count());
            Ok(ExitCode::SUCCESS)
        }
        Command::Index(IndexCommand::Query {
            image,
            index,
            retrieve,
            checks,
        }) => {
            let index = load_index(index.as_deref().or(cfg.pipeline.index.as_deref()))?;
            let mut q = cfg.pipeline.query;
            q.checks = checks.unwrap_or(q.checks);
            let img = io::load_image(&image)?;
            let descs = detect_and_describe(&img, u64::MAX, &cfg.pipeline.surf)?;
            let result = index.query_images(&descs, retrieve.unwrap_or(cfg.pipeline.retrieve), &q)?;
            for r in &result.ranked {
                println!(
                    "{}",
                    serde_json::json!({
                        "image_id": r.image_id,
                        "votes": r.votes,
                        "path": index.image_path(r.image_id),
                    })
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare(a) => compare_cmd(&cfg, a),
        Command::Run(a) => run(cfg, a),
        Command::Eval(EvalCommand::Roc { reports, out }) => {
            let curves = roc_from_reports(&reports)?;
            let dir = out.unwrap_or_else(|| parent(&reports).to_path_buf());
            std::fs::create_dir_all(&dir)?;
            for (method, curve) in &curves {
                std::fs::write(dir.join(format!("roc_{method}.csv")), curve.to_csv())?;
                println!("{method},{}", curve.auc);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Perturb(a) => {
            let img = io::load_image(&a.input)?;
            let seed = cfg.seed();
            let out = match a.kind {
                PerturbKind::Hsv => perturb_hsv(&img, a.delta, seed)?,
                PerturbKind::Poisson => perturb_poisson(&img, (a.peak_min, a.peak_max), seed)?,
                PerturbKind::Rotate => perturb_rotate(&img, a.max_deg, seed)?,
            };
            io::save_image(&out, &a.output)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parent(p: &Path) -> &Path {
    p.parent().unwrap_or(Path::new("."))
}

fn load_index(path: Option<&Path>) -> Result<ForestIndex> {
    let path = path.ok_or_else(|| Error::Config("no index given (--index or pipeline.index)".into()))?;
    if !path.exists() {
        return Err(Error::Config(format!("index {} does not exist", path.display())));
    }
    ForestIndex::load(path)
}

fn synth(cfg: &FileConfig, a: SynthArgs) -> Result<ExitCode> {
    let s = &cfg.synth;
    let (count, distractors) = (a.count.unwrap_or(s.count), a.distractors.unwrap_or(s.distractors));
    let size = a.size.unwrap_or(s.size);
    let dsize = a.distractor_size.unwrap_or(s.distractor_size);
    let seed = cfg.seed();
    let hosts = ProceduralCorpus::new("hosts", size, size, a.hosts.unwrap_or(s.hosts), seed);
    let others = ProceduralCorpus::new("distractors", dsize, dsize, distractors, seed);
    let sc = SynthConfig {
        count,
        distractors,
        seed,
        ..SynthConfig::default()
    };
    let ds = synthesize_splices(&hosts, &hosts, &others, &sc)?;
    let (splices, gallery) = write_dataset(&ds, &a.out)?;
    info!("wrote {} and {}", splices.display(), gallery.display());
    println!("{} probes, {} gallery images", ds.samples.len(), ds.gallery.len());
    Ok(ExitCode::SUCCESS)
}

fn compare_cmd(cfg: &FileConfig, a: CompareArgs) -> Result<ExitCode> {
    let probe = io::load_image(&a.probe)?;
    let mut cand = io::load_image(&a.candidate)?;
    if a.register {
        let surf = &cfg.pipeline.surf;
        let pd = detect_and_describe(&probe, 0, surf)?;
        let cd = detect_and_describe(&cand, 1, surf)?;
        let msac = MsacConfig {
            seed: cfg.seed(),
            ..cfg.pipeline.msac
        };
        let reg = register(&pd, &cd, 1, &msac)?;
        info!("registered with rfn {} ({} inliers)", reg.rfn, reg.inlier_count);
        cand = warp_affine(&cand, &reg.transform, probe.width(), probe.height())?;
    } else if !probe.same_dims(&cand) {
        return Err(Error::Parameter("probe and candidate differ in size; pass --register".into()));
    }
    let ccfg = forensics_core::comparators::ComparatorConfig {
        seed: cfg.seed(),
        ..cfg.pipeline.comparator.clone()
    };
    let hm = compare(a.method, &probe, &cand, &ccfg)?;
    io::write_heatmap_png(&hm, &a.out)?;
    io::write_heatmap_sidecar(&hm, a.out.with_extension("thm"))?;
    let mean = hm.valid_scores().sum::<f64>() / hm.valid_count().max(1) as f64;
    println!("{},{},{}", a.method, hm.valid_count(), mean);
    Ok(ExitCode::SUCCESS)
}

fn run(mut cfg: FileConfig, a: RunArgs) -> Result<ExitCode> {
    let p = &mut cfg.pipeline;
    if let Some(i) = a.index {
        p.index = Some(i);
    }
    if let Some(o) = a.out {
        p.output = Some(o);
    }
    if let Some(m) = a.methods {
        p.methods = m;
    }
    p.retrieve = a.retrieve.unwrap_or(p.retrieve);
    p.rfn_floor = a.rfn_floor.unwrap_or(p.rfn_floor);
    if let Some(k) = a.perturb {
        p.perturbation = Some(match k {
            PerturbKind::Hsv => Perturbation::hsv(),
            PerturbKind::Poisson => Perturbation::poisson(),
            PerturbKind::Rotate => Perturbation::rotate(),
        });
    }
    let out = p
        .output
        .clone()
        .ok_or_else(|| Error::Config("no output directory (--out or pipeline.output)".into()))?;
    p.validate()?;
    let index = load_index(p.index.as_deref())?;
    let probes = ManifestProbes::open(&a.manifest)?;
    let gallery = IndexGallery { index: &index };
    let pipeline = Pipeline::new(cfg.pipeline.clone(), &index, &gallery)?;
    let summary = pipeline.run_batch(&probes)?;
    let (reports, csv) = summary.write(&out)?;
    info!("wrote {} and {}", reports.display(), csv.display());
    print!("{}", summary.to_csv());
    if summary.all_failed() {
        warn!("every probe failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
