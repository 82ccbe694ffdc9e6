//! Search → rank → warp → compare, for one probe or a whole manifest.
//!
//! A probe is described, the forest returns the `N` best-voted gallery images,
//! each is registered against the probe with MSAC, the best-conditioned
//! transform (highest RFN) is used to warp its image onto the probe grid, and
//! every requested comparator produces a normalized heat map. When nothing in
//! the gallery registers well enough the probe is reported as having no
//! context and no heat map is produced.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{compare, ComparatorConfig, Method};
use crate::error::{Error, Result};
use crate::evaluation::synth::read_jsonl;
use crate::evaluation::{perturb_hsv, perturb_poisson, perturb_rotate, RocPool, SpliceRecord};
use crate::features::{detect_and_describe, Descriptor, SurfConfig};
use crate::image::{warp_affine, HeatMap, Image};
use crate::index::{ForestIndex, QueryConfig, QueryResult};
use crate::io;
use crate::registration::{register, select_best, MsacConfig, RankedCandidate};
use crate::seed;

/// Gallery-side perturbation applied during a run. Colour and noise
/// perturbations hit the candidate image before it is warped; rotation hits the
/// warped candidate, simulating a registration error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Perturbation {
    Hsv { delta: f64 },
    Poisson { peak_min: f64, peak_max: f64 },
    Rotate { max_deg: f64 },
}

impl Perturbation {
    pub fn hsv() -> Self {
        Self::Hsv { delta: 0.2 }
    }

    pub fn poisson() -> Self {
        Self::Poisson {
            peak_min: 50.0,
            peak_max: 500.0,
        }
    }

    pub fn rotate() -> Self {
        Self::Rotate { max_deg: 15.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Hsv { .. } => "hsv",
            Self::Poisson { .. } => "poisson",
            Self::Rotate { .. } => "rotate",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub index: Option<PathBuf>,
    /// Gallery images retrieved per probe.
    pub retrieve: usize,
    pub methods: Vec<Method>,
    pub comparator: ComparatorConfig,
    /// Best RFN below this means the probe has no usable context.
    pub rfn_floor: f64,
    /// A registration needs at least this many MSAC inliers to count.
    pub min_inliers: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub surf: SurfConfig,
    pub query: QueryConfig,
    pub msac: MsacConfig,
    pub perturbation: Option<Perturbation>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            index: None,
            retrieve: 100,
            methods: Method::ALL.to_vec(),
            comparator: ComparatorConfig::default(),
            rfn_floor: 1e-3,
            min_inliers: 3,
            output: None,
            seed: 0,
            surf: SurfConfig::default(),
            query: QueryConfig::default(),
            msac: MsacConfig::default(),
            perturbation: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retrieve == 0 {
            return Err(Error::Config("retrieve (N) must be at least 1".into()));
        }
        if !(self.rfn_floor > 0.0 && self.rfn_floor < 1.0 / 3.0) {
            return Err(Error::Config(format!("rfn_floor must lie in (0, 1/3), got {}", self.rfn_floor)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no comparator requested".into()));
        }
        if self.min_inliers < 3 {
            return Err(Error::Config("min_inliers must be at least 3".into()));
        }
        self.comparator.validate()
    }
}

/// Source of gallery images by id.
pub trait Gallery: Sync {
    fn load(&self, image_id: u64) -> Result<Image>;
}

impl<F> Gallery for F
where
    F: Fn(u64) -> Result<Image> + Sync,
{
    fn load(&self, image_id: u64) -> Result<Image> {
        self(image_id)
    }
}

/// Loads gallery images from the paths recorded in the index.
pub struct IndexGallery<'a> {
    pub index: &'a ForestIndex,
}

impl Gallery for IndexGallery<'_> {
    fn load(&self, image_id: u64) -> Result<Image> {
        match self.index.image_path(image_id) {
            Some(p) if !p.is_empty() => io::load_image(p),
            _ => Err(Error::Config(format!("index has no path for image {image_id}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeStatus {
    Ok,
    NoContext,
    Degenerate,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub status: ProbeStatus,
    pub retrieved: usize,
    pub candidate: Option<u64>,
    /// Candidate → probe, row-major.
    pub transform: Option<[f64; 9]>,
    pub rfn: Option<f64>,
    pub inliers: Option<usize>,
    /// Comparator name → heat-map sidecar path, relative to the output directory.
    pub heatmaps: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ProbeReport {
    fn empty(probe: &str, status: ProbeStatus) -> Self {
        Self {
            probe: probe.to_string(),
            mask: None,
            status,
            retrieved: 0,
            candidate: None,
            transform: None,
            rfn: None,
            inliers: None,
            heatmaps: BTreeMap::new(),
            error: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub report: ProbeReport,
    pub query: Option<QueryResult>,
    pub candidates: Vec<RankedCandidate>,
    /// Normalized heat maps, in the order of `PipelineConfig::methods`.
    pub heatmaps: Vec<(Method, HeatMap)>,
}

pub struct Pipeline<'a> {
    cfg: PipelineConfig,
    index: &'a ForestIndex,
    gallery: &'a dyn Gallery,
    by_image: HashMap<u64, Vec<u32>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: PipelineConfig, index: &'a ForestIndex, gallery: &'a dyn Gallery) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            by_image: index.records_by_image(),
            cfg,
            index,
            gallery,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn candidate_descriptors(&self, image_id: u64) -> Vec<Descriptor> {
        self.by_image
            .get(&image_id)
            .map(|ids| ids.iter().map(|&i| self.index.record(i).clone()).collect())
            .unwrap_or_default()
    }

    /// Registers every retrieved image; returns the usable registrations and
    /// how many failed on degenerate geometry.
    pub fn register_candidates(
        &self,
        probe: &[Descriptor],
        query: &QueryResult,
        probe_seed: u64,
    ) -> (Vec<RankedCandidate>, usize) {
        let results: Vec<Result<RankedCandidate>> = query
            .ranked
            .par_iter()
            .map(|r| {
                let cand = self.candidate_descriptors(r.image_id);
                let msac = MsacConfig {
                    seed: seed::derive(probe_seed, "msac", r.image_id),
                    ..self.cfg.msac
                };
                register(probe, &cand, r.image_id, &msac)
            })
            .collect();
        let mut degenerate = 0;
        let mut ok = Vec::new();
        for r in results {
            match r {
                Ok(c) if c.inlier_count >= self.cfg.min_inliers => ok.push(c),
                Ok(_) | Err(Error::RegistrationInfeasible(_)) => {}
                Err(Error::DegenerateGeometry(_)) => degenerate += 1,
                Err(e) => debug!("registration error: {e}"),
            }
        }
        (ok, degenerate)
    }

    /// Runs one probe. `probe_index` selects the probe's random sub-stream, so a
    /// probe gives the same result alone or inside a batch.
    pub fn run_probe(&self, probe: &Image, probe_id: &str, probe_index: u64) -> Result<ProbeOutcome> {
        let probe_seed = seed::derive(self.cfg.seed, "probe", probe_index);
        let descs = detect_and_describe(probe, u64::MAX, &self.cfg.surf)?;
        let mut outcome = ProbeOutcome {
            report: ProbeReport::empty(probe_id, ProbeStatus::NoContext),
            query: None,
            candidates: Vec::new(),
            heatmaps: Vec::new(),
        };
        if descs.is_empty() {
            outcome.report.error = Some("probe has no features".into());
            return Ok(outcome);
        }
        let query = self.index.query_images(&descs, self.cfg.retrieve, &self.cfg.query)?;
        outcome.report.retrieved = query.ranked.len();
        let (candidates, degenerate) = self.register_candidates(&descs, &query, probe_seed);
        outcome.query = Some(query);
        outcome.candidates = candidates;

        let best = match select_best(&outcome.candidates) {
            Ok(b) => b.clone(),
            Err(_) => {
                if degenerate > 0 {
                    outcome.report.status = ProbeStatus::Degenerate;
                }
                return Ok(outcome);
            }
        };
        outcome.report.candidate = Some(best.image_id);
        outcome.report.transform = Some(best.transform.to_row_major());
        outcome.report.rfn = Some(best.rfn);
        outcome.report.inliers = Some(best.inlier_count);
        if best.rfn < self.cfg.rfn_floor {
            return Ok(outcome);
        }

        let mut cand = self.gallery.load(best.image_id)?;
        let perturb_seed = seed::derive(probe_seed, "perturb", 0);
        cand = match self.cfg.perturbation {
            Some(Perturbation::Hsv { delta }) => perturb_hsv(&cand, delta, perturb_seed)?,
            Some(Perturbation::Poisson { peak_min, peak_max }) => {
                perturb_poisson(&cand, (peak_min, peak_max), perturb_seed)?
            }
            _ => cand,
        };
        let mut warped = warp_affine(&cand, &best.transform, probe.width(), probe.height())?;
        if let Some(Perturbation::Rotate { max_deg }) = self.cfg.perturbation {
            warped = perturb_rotate(&warped, max_deg, perturb_seed)?;
        }

        let ccfg = ComparatorConfig {
            seed: probe_seed,
            ..self.cfg.comparator.clone()
        };
        for &method in &self.cfg.methods {
            match compare(method, probe, &warped, &ccfg) {
                Ok(hm) => outcome.heatmaps.push((method, hm)),
                Err(e) => {
                    // Usually an overlap too small for the comparator.
                    outcome.heatmaps.clear();
                    outcome.report.status = ProbeStatus::Degenerate;
                    outcome.report.error = Some(format!("{method}: {e}"));
                    return Ok(outcome);
                }
            }
        }
        if let Some(dir) = &self.cfg.output {
            let sub = dir.join("heatmaps");
            fs::create_dir_all(&sub)?;
            let stem = sanitize(probe_id);
            for (method, hm) in &outcome.heatmaps {
                let rel = format!("heatmaps/{stem}.{method}.thm");
                io::write_heatmap_sidecar(hm, dir.join(&rel))?;
                io::write_heatmap_png(hm, sub.join(format!("{stem}.{method}.png")))?;
                outcome.report.heatmaps.insert(method.name().to_string(), rel);
            }
        }
        outcome.report.status = ProbeStatus::Ok;
        Ok(outcome)
    }

    /// Runs every probe (in parallel) and pools the heat maps of probes that
    /// carry a ground-truth mask into one ROC per comparator.
    pub fn run_batch(&self, probes: &dyn ProbeSet) -> Result<BatchSummary> {
        if probes.is_empty() {
            warn!("empty manifest: nothing to run");
        }
        let per_probe: Vec<(ProbeReport, Vec<(Method, RocPool)>)> = (0..probes.len())
            .into_par_iter()
            .map(|i| self.run_entry(probes, i))
            .collect();
        let mut pools: BTreeMap<Method, RocPool> = BTreeMap::new();
        let mut reports = Vec::with_capacity(per_probe.len());
        for (report, probe_pools) in per_probe {
            for (m, p) in probe_pools {
                pools.entry(m).or_default().merge(p);
            }
            reports.push(report);
        }
        let rows = if reports.is_empty() {
            Vec::new()
        } else {
            self.cfg
                .methods
                .iter()
                .map(|&m| {
                    let ok = reports.iter().filter(|r| r.heatmaps.contains_key(m.name())).count();
                    let pool = pools.remove(&m).unwrap_or_default();
                    SummaryRow::from_pool(m, ok, reports.len(), pool)
                })
                .collect()
        };
        Ok(BatchSummary { reports, rows })
    }

    fn run_entry(&self, probes: &dyn ProbeSet, i: usize) -> (ProbeReport, Vec<(Method, RocPool)>) {
        let entry = match probes.entry(i) {
            Ok(e) => e,
            Err(e) => {
                let mut r = ProbeReport::empty(&format!("#{i}"), ProbeStatus::Failed);
                r.error = Some(e.to_string());
                return (r, Vec::new());
            }
        };
        let mut outcome = match self.run_probe(&entry.image, &entry.id, i as u64) {
            Ok(o) => o,
            Err(e) => {
                warn!("probe {} failed: {e}", entry.id);
                let mut r = ProbeReport::empty(&entry.id, ProbeStatus::Failed);
                r.mask = entry.mask_path;
                r.error = Some(e.to_string());
                return (r, Vec::new());
            }
        };
        outcome.report.mask = entry.mask_path;
        let mut pools = Vec::new();
        if let Some(mask) = &entry.mask {
            for (m, hm) in &outcome.heatmaps {
                let mut pool = RocPool::new();
                match pool.add(hm, mask) {
                    Ok(()) => pools.push((*m, pool)),
                    Err(e) => warn!("probe {}: {m} not scored: {e}", entry.id),
                }
            }
        }
        (outcome.report, pools)
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// One probe of a batch.
pub struct ProbeEntry {
    pub id: String,
    pub image: Image,
    pub mask: Option<Vec<bool>>,
    pub mask_path: Option<String>,
}

/// Lazily loaded batch of probes.
pub trait ProbeSet: Sync {
    fn len(&self) -> usize;
    fn entry(&self, i: usize) -> Result<ProbeEntry>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Probes listed in a splice manifest; paths resolve against the manifest's
/// directory.
pub struct ManifestProbes {
    pub root: PathBuf,
    pub records: Vec<SpliceRecord>,
}

impl ManifestProbes {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let records = read_jsonl(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, records })
    }
}

impl ProbeSet for ManifestProbes {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn entry(&self, i: usize) -> Result<ProbeEntry> {
        let rec = &self.records[i];
        let image = io::load_image(self.root.join(&rec.probe))?;
        let mask_path = self.root.join(&rec.mask);
        let (mask, w, h) = io::load_mask(&mask_path)?;
        if (w, h) != (image.width(), image.height()) {
            return Err(Error::Format(format!("mask {} does not match its probe", rec.mask)));
        }
        let id = Path::new(&rec.probe)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("probe_{i:05}"));
        Ok(ProbeEntry {
            id,
            image,
            mask: Some(mask),
            mask_path: Some(mask_path.to_string_lossy().into_owned()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    /// Probes that produced this heat map.
    pub probes_ok: usize,
    pub probes_total: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Missing when the pool lacks positives or negatives.
    pub auc: Option<f64>,
}

impl SummaryRow {
    fn from_pool(method: Method, probes_ok: usize, probes_total: usize, pool: RocPool) -> Self {
        let (positives, negatives) = pool.counts();
        let auc = if positives > 0 && negatives > 0 {
            pool.curve().ok().map(|c| c.auc)
        } else {
            None
        };
        Self {
            method,
            probes_ok,
            probes_total,
            positives,
            negatives,
            auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub reports: Vec<ProbeReport>,
    pub rows: Vec<SummaryRow>,
}

impl BatchSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,probes_ok,probes_total,positives,negatives,auc\n");
        for r in &self.rows {
            let auc = r.auc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method, r.probes_ok, r.probes_total, r.positives, r.negatives, auc
            );
        }
        s
    }

    pub fn reports_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.reports {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    /// Writes `reports.jsonl` and `summary.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let reports = dir.join("reports.jsonl");
        let summary = dir.join("summary.csv");
        fs::write(&reports, self.reports_jsonl()?)?;
        fs::write(&summary, self.to_csv())?;
        Ok((reports, summary))
    }

    pub fn auc(&self, method: Method) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).and_then(|r| r.auc)
    }

    /// Every probe failed outright (no-context answers are not failures).
    pub fn all_failed(&self) -> bool {
        !self.reports.is_empty() && self.reports.iter().all(|r| r.status == ProbeStatus::Failed)
    }
}

/// Re-pools the heat maps listed in a `reports.jsonl` against their masks.
/// Heat-map paths resolve against the reports file's directory.
pub fn roc_from_reports(path: impl AsRef<Path>) -> Result<BTreeMap<Method, crate::evaluation::RocCurve>> {
    let path = path.as_ref();
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let reports: Vec<ProbeReport> = read_jsonl(path)?;
    let mut pools: BTreeMap<Method, RocPool> = BTreeMap::new();
    for r in &reports {
        let Some(mask_path) = &r.mask else { continue };
        if r.heatmaps.is_empty() {
            continue;
        }
        let (mask, _, _) = io::load_mask(mask_path)?;
        for (name, rel) in &r.heatmaps {
            let method: Method = name.parse()?;
            let hm = io::read_heatmap_sidecar(root.join(rel))?;
            pools.entry(method).or_default().add(&hm, &mask)?;
        }
    }
    if pools.is_empty() {
        return Err(Error::Evaluation("no scored heat maps in reports".into()));
    }
    pools.into_iter().map(|(m, p)| Ok((m, p.curve()?))).collect()
}

/// Describes every image of a gallery manifest (paths relative to `root`) and
/// builds the forest. Stored paths are the resolved ones.
pub fn index_gallery(
    records: &[crate::evaluation::synth::GalleryRecord],
    root: impl AsRef<Path>,
    surf: &SurfConfig,
    forest: &crate::index::ForestConfig,
) -> Result<ForestIndex> {
    let root = root.as_ref();
    let described: Vec<(u64, String, Vec<Descriptor>)> = records
        .par_iter()
        .map(|r| {
            let path = root.join(&r.path);
            let img = io::load_image(&path)?;
            let d = detect_and_describe(&img, r.id, surf)?;
            Ok((r.id, path.to_string_lossy().into_owned(), d))
        })
        .collect::<Result<_>>()?;
    let mut builder = crate::index::IndexBuilder::new();
    for (id, path, d) in described {
        if d.is_empty() {
            warn!("gallery image {id} ({path}) has no features");
        }
        builder.add_image(id, path, d);
    }
    builder.build(forest)
}
