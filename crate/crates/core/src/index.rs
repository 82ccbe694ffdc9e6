//! Randomized KD-tree forest over 64-d descriptors, with image-level voting.
//!
//! Each tree splits at the median of a dimension drawn uniformly from the five
//! highest-variance dimensions of the node's subset. Queries run best-bin-first
//! over all trees at once: one priority queue holds the unexplored branches of
//! every tree, and the search stops after a fixed number of distinct records
//! have been checked.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{l2_sq, Descriptor, DESCRIPTOR_LEN, RECORD_BYTES};
use crate::seed;

pub const INDEX_MAGIC: &[u8; 4] = b"KDF1";
pub const INDEX_VERSION: u16 = 1;
const TOP_VARIANCE_DIMS: usize = 5;
const VARIANCE_SAMPLES: usize = 128;
/// Neighbors fetched per probe descriptor when looking for the second-nearest
/// record from a different image.
const VOTE_NEIGHBORS: usize = 16;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub leaf_size: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 8,
            leaf_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub checks: usize,
    /// Lowe ratio: nearest / second-nearest (other image) must be below this.
    pub ratio: f32,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            checks: 256,
            ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Split { dim: u32, value: f32, left: u32, right: u32 },
    Leaf { start: u32, end: u32 },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    /// Record ids, permuted so every leaf owns a contiguous range.
    order: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub path: String,
    pub descriptor_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestIndex {
    leaf_size: usize,
    records: Vec<Descriptor>,
    trees: Vec<Tree>,
    image_table: BTreeMap<u64, ImageEntry>,
}

/// Image-level result: `(image_id, votes)` descending by votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub ranked: Vec<RankedImage>,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image_id: u64,
    pub votes: u32,
    /// Sum of the winning match distances; lower breaks vote ties.
    pub distance_sum: f64,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<u64> {
        self.ranked.iter().map(|r| r.image_id).collect()
    }

    /// 1-based rank of `id`, if returned.
    pub fn rank_of(&self, id: u64) -> Option<usize> {
        self.ranked.iter().position(|r| r.image_id == id).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub record: u32,
    pub distance: f32,
}

/// Collects gallery images and their descriptors before building the forest.
#[derive(Debug, Default)]
pub struct IndexBuilder {
    records: Vec<Descriptor>,
    image_table: BTreeMap<u64, ImageEntry>,
}

impl IndexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an image; descriptors are re-tagged with `image_id`.
    pub fn add_image(&mut self, image_id: u64, path: impl Into<String>, descriptors: Vec<Descriptor>) {
        let entry = self.image_table.entry(image_id).or_insert_with(|| ImageEntry {
            path: String::new(),
            descriptor_count: 0,
        });
        entry.path = path.into();
        entry.descriptor_count += descriptors.len() as u32;
        self.records.extend(descriptors.into_iter().map(|mut d| {
            d.image_id = image_id;
            d
        }));
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn build(self, cfg: &ForestConfig) -> Result<ForestIndex> {
        ForestIndex::from_parts(self.records, self.image_table, cfg)
    }
}

struct OrdF32(f32);

impl PartialEq for OrdF32 {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for OrdF32 {}
impl PartialOrd for OrdF32 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF32 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Subtrees at most this large are built from a private contiguous copy of their
/// rows (512 KiB), so the deep levels never leave the cache.
const LOCAL_BLOCK: usize = 2048;

/// Column-major copy of the descriptor vectors: `cols[d * n + i]`. Median
/// selection near the root reads one dimension of a scattered subset, which
/// stays in cache this way.
fn transpose(records: &[Descriptor]) -> Vec<f32> {
    let n = records.len();
    let mut cols = vec![0f32; DESCRIPTOR_LEN * n];
    for (i, r) in records.iter().enumerate() {
        for d in 0..DESCRIPTOR_LEN {
            cols[d * n + i] = r.vector[d];
        }
    }
    cols
}

fn build_tree(records: &[Descriptor], cols: &[f32], leaf_size: usize, rng: &mut seed::Rng) -> Tree {
    let n = records.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut keyed: Vec<(f32, u32)> = Vec::new();
    let mut nodes = vec![Node::Leaf { start: 0, end: 0 }];
    // Explicit stack: (node slot, start, end).
    let mut stack = vec![(0usize, 0usize, n)];
    while let Some((slot, start, end)) = stack.pop() {
        let len = end - start;
        if len <= LOCAL_BLOCK.max(leaf_size) {
            build_local(records, &mut order[start..end], start, slot, leaf_size, &mut nodes, rng);
            continue;
        }
        let subset = &mut order[start..end];
        let dim = pick_split_dim(|i| &records[i as usize].vector, subset, rng);
        let col = &cols[dim * n..(dim + 1) * n];
        keyed.clear();
        keyed.extend(subset.iter().map(|&id| (col[id as usize], id)));
        let (value, mid) = split_keys(&mut keyed, subset);
        let (left, right) = push_split(&mut nodes, slot, dim, value);
        stack.push((right, start + mid, end));
        stack.push((left, start, start + mid));
    }
    Tree { nodes, order }
}

/// Median split of `(key, id)` pairs; `ids` receives the partitioned order.
fn split_keys(keyed: &mut [(f32, u32)], ids: &mut [u32]) -> (f32, usize) {
    let mid = keyed.len() / 2;
    keyed.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (o, k) in ids.iter_mut().zip(keyed.iter()) {
        *o = k.1;
    }
    (keyed[mid].0, mid)
}

fn push_split(nodes: &mut Vec<Node>, slot: usize, dim: usize, value: f32) -> (usize, usize) {
    let left = nodes.len();
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let right = nodes.len();
    nodes.push(Node::Leaf { start: 0, end: 0 });
    nodes[slot] = Node::Split {
        dim: dim as u32,
        value,
        left: left as u32,
        right: right as u32,
    };
    (left, right)
}

/// Builds the subtree rooted at `slot` over `ids` (which sit at `base` in the
/// tree's order) from a local copy of their rows.
fn build_local(
    records: &[Descriptor],
    ids: &mut [u32],
    base: usize,
    slot: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
    rng: &mut seed::Rng,
) {
    let rows: Vec<[f32; DESCRIPTOR_LEN]> = ids.iter().map(|&i| records[i as usize].vector).collect();
    let mut local: Vec<u32> = (0..ids.len() as u32).collect();
    let mut keyed: Vec<(f32, u32)> = Vec::with_capacity(ids.len());
    let mut stack = vec![(slot, 0usize, ids.len())];
    while let Some((slot, start, end)) = stack.pop() {
        if end - start <= leaf_size {
            nodes[slot] = Node::Leaf {
                start: (base + start) as u32,
                end: (base + end) as u32,
            };
            continue;
        }
        let subset = &mut local[start..end];
        let dim = pick_split_dim(|i| &rows[i as usize], subset, rng);
        keyed.clear();
        keyed.extend(subset.iter().map(|&i| (rows[i as usize][dim], i)));
        let (value, mid) = split_keys(&mut keyed, subset);
        let (left, right) = push_split(nodes, slot, dim, value);
        stack.push((right, start + mid, end));
        stack.push((left, start, start + mid));
    }
    let global: Vec<u32> = local.iter().map(|&i| ids[i as usize]).collect();
    ids.copy_from_slice(&global);
}

fn pick_split_dim<'a>(row: impl Fn(u32) -> &'a [f32; DESCRIPTOR_LEN], subset: &[u32], rng: &mut seed::Rng) -> usize {
    let stride = (subset.len() / VARIANCE_SAMPLES).max(1);
    let mut mean = [0f64; DESCRIPTOR_LEN];
    let mut sq = [0f64; DESCRIPTOR_LEN];
    let mut n = 0.0;
    for &id in subset.iter().step_by(stride) {
        let v = row(id);
        for d in 0..DESCRIPTOR_LEN {
            let x = v[d] as f64;
            mean[d] += x;
            sq[d] += x * x;
        }
        n += 1.0;
    }
    let mut dims: Vec<(f64, usize)> = (0..DESCRIPTOR_LEN)
        .map(|d| {
            let m = mean[d] / n;
            (sq[d] / n - m * m, d)
        })
        .collect();
    let by_variance = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    dims.select_nth_unstable_by(TOP_VARIANCE_DIMS - 1, by_variance);
    dims[..TOP_VARIANCE_DIMS].sort_by(by_variance);
    dims[rng.gen_range(0..TOP_VARIANCE_DIMS)].1
}

impl ForestIndex {
    /// Builds directly from descriptors; image paths are left empty.
    pub fn build(descriptors: impl IntoIterator<Item = Descriptor>, cfg: &ForestConfig) -> Result<Self> {
        let records: Vec<Descriptor> = descriptors.into_iter().collect();
        let mut image_table: BTreeMap<u64, ImageEntry> = BTreeMap::new();
        for d in &records {
            image_table
                .entry(d.image_id)
                .or_insert_with(|| ImageEntry {
                    path: String::new(),
                    descriptor_count: 0,
                })
                .descriptor_count += 1;
        }
        Self::from_parts(records, image_table, cfg)
    }

    fn from_parts(
        records: Vec<Descriptor>,
        image_table: BTreeMap<u64, ImageEntry>,
        cfg: &ForestConfig,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Index("no descriptors to index".into()));
        }
        if cfg.trees == 0 || cfg.leaf_size == 0 {
            return Err(Error::Parameter("trees and leaf size must be positive".into()));
        }
        if records.len() > u32::MAX as usize {
            return Err(Error::Index("more than 2^32 records".into()));
        }
        let cols = transpose(&records);
        let trees = (0..cfg.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(cfg.seed, "forest-tree", t as u64);
                build_tree(&records, &cols, cfg.leaf_size, &mut rng)
            })
            .collect();
        Ok(Self {
            leaf_size: cfg.leaf_size,
            records,
            trees,
            image_table,
        })
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn record(&self, id: u32) -> &Descriptor {
        &self.records[id as usize]
    }

    pub fn records(&self) -> &[Descriptor] {
        &self.records
    }

    pub fn image_table(&self) -> &BTreeMap<u64, ImageEntry> {
        &self.image_table
    }

    pub fn image_path(&self, id: u64) -> Option<&str> {
        self.image_table.get(&id).map(|e| e.path.as_str())
    }

    /// Record ids grouped by image, each list ascending.
    pub fn records_by_image(&self) -> HashMap<u64, Vec<u32>> {
        let mut out: HashMap<u64, Vec<u32>> = HashMap::with_capacity(self.image_table.len());
        for (i, d) in self.records.iter().enumerate() {
            out.entry(d.image_id).or_default().push(i as u32);
        }
        out
    }

    /// Record ids reachable by walking every leaf of tree `t` (each exactly once).
    pub fn tree_records(&self, t: usize) -> Vec<u32> {
        let tree = &self.trees[t];
        let mut out = Vec::new();
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            match tree.nodes[n as usize] {
                Node::Leaf { start, end } => out.extend_from_slice(&tree.order[start as usize..end as usize]),
                Node::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    /// Number of nodes in tree `t`; single-leaf trees have one.
    pub fn tree_node_count(&self, t: usize) -> usize {
        self.trees[t].nodes.len()
    }

    /// Approximate k nearest records, ascending by distance (ties by record id).
    pub fn knn(&self, query: &[f32; DESCRIPTOR_LEN], k: usize, checks: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        let mut visited = vec![0u64; self.records.len().div_ceil(64)];
        let mut branches: BinaryHeap<Reverse<(OrdF32, u32, u32)>> = BinaryHeap::new();
        // Max-heap of the current best k by (distance², record).
        let mut best: BinaryHeap<(OrdF32, u32)> = BinaryHeap::with_capacity(k + 1);
        let mut checked = 0usize;

        let mut descend = |tree_idx: usize,
                           mut node: u32,
                           mindist: f32,
                           branches: &mut BinaryHeap<Reverse<(OrdF32, u32, u32)>>,
                           best: &mut BinaryHeap<(OrdF32, u32)>,
                           checked: &mut usize| {
            let tree = &self.trees[tree_idx];
            loop {
                match tree.nodes[node as usize] {
                    Node::Leaf { start, end } => {
                        if *checked >= checks && best.len() >= k {
                            return;
                        }
                        for &rec in &tree.order[start as usize..end as usize] {
                            let (word, bit) = (rec as usize / 64, rec % 64);
                            if visited[word] & (1 << bit) != 0 {
                                continue;
                            }
                            visited[word] |= 1 << bit;
                            *checked += 1;
                            let d = l2_sq(query, &self.records[rec as usize].vector);
                            let entry = (OrdF32(d), rec);
                            if best.len() < k {
                                best.push(entry);
                            } else if entry < *best.peek().unwrap() {
                                best.pop();
                                best.push(entry);
                            }
                        }
                        return;
                    }
                    Node::Split { dim, value, left, right } => {
                        let diff = query[dim as usize] - value;
                        let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                        branches.push(Reverse((OrdF32(mindist + diff * diff), tree_idx as u32, far)));
                        node = near;
                    }
                }
            }
        };

        for t in 0..self.trees.len() {
            descend(t, 0, 0.0, &mut branches, &mut best, &mut checked);
        }
        while let Some(Reverse((OrdF32(mindist), t, node))) = branches.pop() {
            if checked >= checks && best.len() >= k {
                break;
            }
            descend(t as usize, node, mindist, &mut branches, &mut best, &mut checked);
        }

        let mut out: Vec<Neighbor> = best
            .into_iter()
            .map(|(d, record)| Neighbor {
                record,
                distance: d.0.sqrt(),
            })
            .collect();
        out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.record.cmp(&b.record)));
        Ok(out)
    }

    /// Nearest record plus the distance to the nearest record from a different
    /// image, if one is among the fetched neighbors.
    fn vote_for(&self, d: &Descriptor, cfg: &QueryConfig) -> Result<Option<(u64, f32)>> {
        let nn = self.knn(&d.vector, VOTE_NEIGHBORS.min(self.records.len()), cfg.checks)?;
        let Some(first) = nn.first() else {
            return Ok(None);
        };
        let first_image = self.records[first.record as usize].image_id;
        let Some(second) = nn
            .iter()
            .find(|n| self.records[n.record as usize].image_id != first_image)
        else {
            return Ok(None);
        };
        if second.distance > 0.0 && first.distance / second.distance < cfg.ratio {
            Ok(Some((first_image, first.distance)))
        } else {
            Ok(None)
        }
    }

    /// Ranks gallery images by ratio-test votes from the probe's descriptors.
    /// Ties go to the smaller summed match distance, then the smaller id.
    pub fn query_images(&self, probe: &[Descriptor], n: usize, cfg: &QueryConfig) -> Result<QueryResult> {
        if probe.is_empty() {
            return Err(Error::Query("probe has no descriptors".into()));
        }
        if n == 0 {
            return Err(Error::Parameter("N must be at least 1".into()));
        }
        let votes: Vec<Option<(u64, f32)>> = probe
            .par_iter()
            .map(|d| self.vote_for(d, cfg))
            .collect::<Result<_>>()?;
        let mut tally: BTreeMap<u64, (u32, f64)> = BTreeMap::new();
        for (id, dist) in votes.into_iter().flatten() {
            let e = tally.entry(id).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += dist as f64;
        }
        let mut ranked: Vec<RankedImage> = tally
            .into_iter()
            .map(|(image_id, (votes, distance_sum))| RankedImage {
                image_id,
                votes,
                distance_sum,
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.votes
                .cmp(&a.votes)
                .then(a.distance_sum.total_cmp(&b.distance_sum))
                .then(a.image_id.cmp(&b.image_id))
        });
        ranked.truncate(n);
        Ok(QueryResult { ranked, requested: n })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.records.len() * (RECORD_BYTES + 4 * self.trees.len()));
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.leaf_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            r.write_record(&mut out);
        }
        out.extend_from_slice(&(self.image_table.len() as u64).to_le_bytes());
        for (id, entry) in &self.image_table {
            out.extend_from_slice(&id.to_le_bytes());
            out.extend_from_slice(&entry.descriptor_count.to_le_bytes());
            out.extend_from_slice(&(entry.path.len() as u32).to_le_bytes());
            out.extend_from_slice(entry.path.as_bytes());
        }
        for tree in &self.trees {
            out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
            for node in &tree.nodes {
                match *node {
                    Node::Leaf { start, end } => {
                        out.push(0);
                        out.extend_from_slice(&start.to_le_bytes());
                        out.extend_from_slice(&end.to_le_bytes());
                    }
                    Node::Split { dim, value, left, right } => {
                        out.push(1);
                        out.extend_from_slice(&dim.to_le_bytes());
                        out.extend_from_slice(&value.to_le_bytes());
                        out.extend_from_slice(&left.to_le_bytes());
                        out.extend_from_slice(&right.to_le_bytes());
                    }
                }
            }
            for id in &tree.order {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(Error::Format("not a KDF1 index file".into()));
        }
        let version = r.u16()?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "index version mismatch: expected {INDEX_VERSION}, found {version}"
            )));
        }
        let trees = r.u32()? as usize;
        let leaf_size = r.u32()? as usize;
        let count = r.u64()? as usize;
        if count == 0 || trees == 0 || leaf_size == 0 {
            return Err(Error::Format("empty index header".into()));
        }
        if count.saturating_mul(RECORD_BYTES) > bytes.len() {
            return Err(Error::Format("truncated descriptor block".into()));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            records.push(Descriptor::read_record(r.take(RECORD_BYTES)?)?);
        }
        let images = r.u64()? as usize;
        let mut image_table = BTreeMap::new();
        for _ in 0..images {
            let id = r.u64()?;
            let descriptor_count = r.u32()?;
            let len = r.u32()? as usize;
            let path = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("image path is not UTF-8".into()))?;
            image_table.insert(id, ImageEntry { path, descriptor_count });
        }
        let mut forest = Vec::with_capacity(trees);
        for _ in 0..trees {
            let n_nodes = r.u32()? as usize;
            if n_nodes == 0 || n_nodes > 2 * count + 1 {
                return Err(Error::Format(format!("implausible node count {n_nodes}")));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let node = match r.take(1)?[0] {
                    0 => Node::Leaf {
                        start: r.u32()?,
                        end: r.u32()?,
                    },
                    1 => Node::Split {
                        dim: r.u32()?,
                        value: f32::from_le_bytes(r.take(4)?.try_into().unwrap()),
                        left: r.u32()?,
                        right: r.u32()?,
                    },
                    t => return Err(Error::Format(format!("unknown node tag {t}"))),
                };
                match node {
                    Node::Leaf { start, end } if start > end || end as usize > count => {
                        return Err(Error::Format("leaf range out of bounds".into()))
                    }
                    Node::Split { dim, left, right, .. }
                        if dim as usize >= DESCRIPTOR_LEN || left as usize >= n_nodes || right as usize >= n_nodes =>
                    {
                        return Err(Error::Format("split node out of bounds".into()))
                    }
                    _ => {}
                }
                nodes.push(node);
            }
            let mut order = Vec::with_capacity(count);
            for _ in 0..count {
                let id = r.u32()?;
                if id as usize >= count {
                    return Err(Error::Format("record id out of bounds".into()));
                }
                order.push(id);
            }
            forest.push(Tree { nodes, order });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after index".into()));
        }
        Ok(Self {
            leaf_size,
            records,
            trees: forest,
            image_table,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path.as_ref())?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path.as_ref())?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated index: needed {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
