//! Sub-space databases and exact cosine retrieval.
//!
//! Five databases are built from per-paper sub-space vectors: three node
//! databases holding unit-normalized embeddings, and two transition
//! databases holding `method - problem` and `findings - method`.
//!
//! Rows are stored as `f32` (the on-disk format) with `f64` norms cached at
//! build time; similarities are accumulated in `f64`. Search is an
//! exhaustive scan, split into row blocks when running in parallel. All
//! rankings break similarity ties by ascending `paper_id`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kernel::{self, EmbeddingVector, KernelError};
use crate::par::{self, Execution};
use crate::subspace::{DbKind, Dimension};

pub const INDEX_MAGIC: &[u8; 8] = b"IDSPIDX\0";
pub const INDEX_VERSION: u32 = 1;
const SCAN_BLOCK: usize = 2048;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, found {found}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DimensionMismatch { expected: usize, found: usize, context: Option<String> },
    #[error("zero-norm query vector")]
    ZeroQuery,
    #[error("zero-norm {dimension} vector for paper `{paper_id}`")]
    ZeroVector { paper_id: String, dimension: Dimension },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("query is missing sub-space vector(s): {}", .0.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(", "))]
    MissingQueryDimensions(Vec<Dimension>),
    #[error("expected a {expected} database, got {found}")]
    WrongKind { expected: DbKind, found: DbKind },
    #[error("duplicate {dimension} vector for paper `{paper_id}`")]
    DuplicateVector { paper_id: String, dimension: Dimension },
    #[error("corrupt index file: {0}")]
    Corruption(String),
    #[error("invalid embedding record on line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-paper sub-space embeddings; absent dimensions stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceVectors {
    pub paper_id: String,
    pub problem: Option<EmbeddingVector>,
    pub method: Option<EmbeddingVector>,
    pub findings: Option<EmbeddingVector>,
}

impl SubspaceVectors {
    pub fn new(paper_id: impl Into<String>) -> Self {
        SubspaceVectors { paper_id: paper_id.into(), problem: None, method: None, findings: None }
    }

    pub fn get(&self, dim: Dimension) -> Option<&EmbeddingVector> {
        match dim {
            Dimension::Problem => self.problem.as_ref(),
            Dimension::Method => self.method.as_ref(),
            Dimension::Findings => self.findings.as_ref(),
        }
    }

    pub fn slot_mut(&mut self, dim: Dimension) -> &mut Option<EmbeddingVector> {
        match dim {
            Dimension::Problem => &mut self.problem,
            Dimension::Method => &mut self.method,
            Dimension::Findings => &mut self.findings,
        }
    }

    pub fn with(mut self, dim: Dimension, v: EmbeddingVector) -> Self {
        *self.slot_mut(dim) = Some(v);
        self
    }

    fn dimension(&self) -> Result<Option<usize>, IndexError> {
        let mut d = None;
        for dim in Dimension::ALL {
            if let Some(v) = self.get(dim) {
                match d {
                    None => d = Some(v.dim()),
                    Some(e) if e != v.dim() => {
                        return Err(IndexError::DimensionMismatch {
                            expected: e,
                            found: v.dim(),
                            context: Some(format!("paper `{}` {dim}", self.paper_id)),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(d)
    }

    /// The stored form of a node vector: unit-normalized, rounded to `f32`.
    pub fn unit(&self, dim: Dimension) -> Result<Option<Vec<f64>>, IndexError> {
        self.get(dim)
            .map(|v| {
                unit_f32(v.as_slice()).ok_or_else(|| IndexError::ZeroVector {
                    paper_id: self.paper_id.clone(),
                    dimension: dim,
                })
            })
            .transpose()
    }
}

/// Normalizes in `f64` and rounds each component to `f32`.
fn unit_f32(v: &[f64]) -> Option<Vec<f64>> {
    let n = kernel::norm(v);
    if n == 0.0 {
        return None;
    }
    Some(v.iter().map(|x| (x / n) as f32 as f64).collect())
}

/// Problem→method and method→findings transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionVectors {
    pub paper_id: String,
    pub t_pm: Option<EmbeddingVector>,
    pub t_mf: Option<EmbeddingVector>,
}

/// Differences of the stored (unit, `f32`-rounded) parents, computed in `f64`.
///
/// Differences of two `f32` values are exact in `f64` for the component
/// ranges unit vectors produce, so `t_pm + problem == method` and
/// `t_pm + t_mf == findings - problem` hold bitwise.
pub fn transition_vectors(sv: &SubspaceVectors) -> Result<TransitionVectors, IndexError> {
    sv.dimension()?;
    let p = sv.unit(Dimension::Problem)?;
    let m = sv.unit(Dimension::Method)?;
    let f = sv.unit(Dimension::Findings)?;
    let diff = |to: &Option<Vec<f64>>, from: &Option<Vec<f64>>| -> Option<EmbeddingVector> {
        match (to, from) {
            (Some(t), Some(s)) => Some(
                EmbeddingVector::new(t.iter().zip(s).map(|(a, b)| a - b).collect()).expect("finite difference"),
            ),
            _ => None,
        }
    };
    Ok(TransitionVectors { paper_id: sv.paper_id.clone(), t_pm: diff(&m, &p), t_mf: diff(&f, &m) })
}

/// One immutable retrieval database. Ids are kept in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    kind: DbKind,
    dim: usize,
    ids: Vec<String>,
    rows: Vec<f32>,
    norms_sq: Vec<f64>,
}

impl Database {
    /// Builds from `(paper_id, vector)` entries stored as given (rounded to f32).
    pub fn from_entries(kind: DbKind, dim: usize, entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, IndexError> {
        let mut map = BTreeMap::new();
        for (id, v) in entries {
            if v.len() != dim {
                return Err(IndexError::DimensionMismatch { expected: dim, found: v.len(), context: Some(format!("{kind} entry `{id}`")) });
            }
            map.insert(id, v);
        }
        let mut ids = Vec::with_capacity(map.len());
        let mut rows = Vec::with_capacity(map.len() * dim);
        for (id, v) in map {
            ids.push(id);
            rows.extend(v.iter().map(|x| *x as f32));
        }
        Ok(Self::from_parts(kind, dim, ids, rows))
    }

    fn from_parts(kind: DbKind, dim: usize, ids: Vec<String>, rows: Vec<f32>) -> Self {
        let norms_sq = if dim == 0 {
            vec![0.0; ids.len()]
        } else {
            rows.chunks_exact(dim).map(row_norm_sq).collect()
        };
        Database { kind, dim, ids, rows, norms_sq }
    }

    pub fn empty(kind: DbKind, dim: usize) -> Self {
        Self::from_parts(kind, dim, vec![], vec![])
    }

    pub fn kind(&self) -> DbKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|p| p.as_str().cmp(id)).ok()
    }

    pub fn row(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row_at(i))
    }

    fn row_at(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Stored vector widened to `f64`.
    pub fn vector(&self, id: &str) -> Option<Vec<f64>> {
        self.row(id).map(|r| r.iter().map(|&x| x as f64).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.rows.chunks_exact(self.dim.max(1)))
    }

    /// Cosine of `query` against row `i`; zero-norm rows score 0.
    fn similarity(&self, i: usize, query: &[f64], query_norm_sq: f64) -> f64 {
        let rr = self.norms_sq[i];
        if rr == 0.0 {
            return 0.0;
        }
        let dot: f64 = query.iter().zip(self.row_at(i)).map(|(&q, &r)| q * r as f64).sum();
        kernel::cosine_from_parts(dot, query_norm_sq, rr)
    }
}

fn row_norm_sq(row: &[f32]) -> f64 {
    row.iter().map(|&x| x as f64 * x as f64).sum::<f64>()
}

/// The five databases built from one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Databases {
    pub problem: Database,
    pub method: Database,
    pub findings: Database,
    pub p2m: Database,
    pub m2k: Database,
}

impl Databases {
    pub fn get(&self, kind: DbKind) -> &Database {
        match kind {
            DbKind::Problem => &self.problem,
            DbKind::Method => &self.method,
            DbKind::Findings => &self.findings,
            DbKind::P2m => &self.p2m,
            DbKind::M2k => &self.m2k,
        }
    }

    pub fn node(&self, dim: Dimension) -> &Database {
        self.get(dim.db_kind())
    }

    pub fn all(&self) -> [&Database; 5] {
        [&self.problem, &self.method, &self.findings, &self.p2m, &self.m2k]
    }

    pub fn empty(dim: usize) -> Self {
        Databases {
            problem: Database::empty(DbKind::Problem, dim),
            method: Database::empty(DbKind::Method, dim),
            findings: Database::empty(DbKind::Findings, dim),
            p2m: Database::empty(DbKind::P2m, dim),
            m2k: Database::empty(DbKind::M2k, dim),
        }
    }

    pub fn counts(&self) -> BTreeMap<DbKind, usize> {
        self.all().iter().map(|db| (db.kind(), db.len())).collect()
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }
}

/// Builds all five databases. Papers lacking a dimension are left out of
/// that dimension's database (and of any transition that needs it).
pub fn build_databases(corpus_vectors: &[SubspaceVectors], exec: Execution) -> Result<Databases, IndexError> {
    let mut dim = None;
    let mut seen = HashSet::new();
    for sv in corpus_vectors {
        if let Some(d) = sv.dimension()? {
            match dim {
                None => dim = Some(d),
                Some(e) if e != d => {
                    return Err(IndexError::DimensionMismatch { expected: e, found: d, context: Some(format!("paper `{}`", sv.paper_id)) })
                }
                _ => {}
            }
        }
        if !seen.insert(sv.paper_id.as_str()) {
            return Err(IndexError::Corruption(format!("paper `{}` appears twice in vector input", sv.paper_id)));
        }
    }
    let dim = dim.unwrap_or(0);

    struct Derived {
        id: String,
        nodes: [Option<Vec<f64>>; 3],
        t_pm: Option<Vec<f64>>,
        t_mf: Option<Vec<f64>>,
    }
    let derived = par::map_slice(corpus_vectors, exec, |sv| -> Result<Derived, IndexError> {
        let nodes = [sv.unit(Dimension::Problem)?, sv.unit(Dimension::Method)?, sv.unit(Dimension::Findings)?];
        let t = transition_vectors(sv)?;
        Ok(Derived {
            id: sv.paper_id.clone(),
            nodes,
            t_pm: t.t_pm.map(EmbeddingVector::into_inner),
            t_mf: t.t_mf.map(EmbeddingVector::into_inner),
        })
    });
    let derived = derived.into_iter().collect::<Result<Vec<_>, _>>()?;

    let node_db = |dim_: Dimension| {
        Database::from_entries(
            dim_.db_kind(),
            dim,
            derived.iter().filter_map(|d| d.nodes[dim_.index()].clone().map(|v| (d.id.clone(), v))),
        )
    };
    let dbs = Databases {
        problem: node_db(Dimension::Problem)?,
        method: node_db(Dimension::Method)?,
        findings: node_db(Dimension::Findings)?,
        p2m: Database::from_entries(DbKind::P2m, dim, derived.iter().filter_map(|d| d.t_pm.clone().map(|v| (d.id.clone(), v))))?,
        m2k: Database::from_entries(DbKind::M2k, dim, derived.iter().filter_map(|d| d.t_mf.clone().map(|v| (d.id.clone(), v))))?,
    };
    log::info!("built databases: {:?}", dbs.counts());
    Ok(dbs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub paper_id: String,
    pub similarity: f64,
    pub rank: usize,
    pub source: DbKind,
}

/// Descending similarity, then ascending row index (= ascending id).
fn hit_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn keep_top(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, hit_order);
        cands.truncate(k);
    }
    cands.sort_by(hit_order);
    cands
}

fn check_query(db: &Database, query: &[f64], k: usize) -> Result<f64, IndexError> {
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    if query.len() != db.dim && !db.is_empty() {
        return Err(IndexError::DimensionMismatch { expected: db.dim, found: query.len(), context: Some(format!("{} query", db.kind)) });
    }
    let qq = kernel::dot(query, query);
    if qq == 0.0 || !qq.is_finite() {
        return Err(IndexError::ZeroQuery);
    }
    Ok(qq)
}

/// Exact top-K by cosine similarity.
pub fn search(db: &Database, query: &[f64], k: usize) -> Result<Vec<RankedHit>, IndexError> {
    search_with(db, query, k, None, Execution::default())
}

/// [`search`] with an optional excluded id (typically the query paper
/// itself) and an explicit execution mode.
pub fn search_with(db: &Database, query: &[f64], k: usize, exclude: Option<&str>, exec: Execution) -> Result<Vec<RankedHit>, IndexError> {
    let qn = check_query(db, query, k)?;
    let skip = exclude.and_then(|id| db.position(id));
    let blocks = par::map_chunks(db.len(), SCAN_BLOCK, exec, |range| {
        let cands = range
            .filter(|&i| Some(i) != skip)
            .map(|i| (db.similarity(i, query, qn), i))
            .collect();
        keep_top(cands, k)
    });
    let top = keep_top(blocks.into_iter().flatten().collect(), k);
    Ok(top
        .into_iter()
        .enumerate()
        .map(|(r, (sim, i))| RankedHit { paper_id: db.ids[i].clone(), similarity: sim, rank: r + 1, source: db.kind })
        .collect())
}

/// Many independent queries; parallel across queries, each scan sequential.
pub fn search_many(db: &Database, queries: &[Vec<f64>], k: usize, exec: Execution) -> Result<Vec<Vec<RankedHit>>, IndexError> {
    par::map_slice(queries, exec, |q| search_with(db, q, k, None, Execution::Sequential))
        .into_iter()
        .collect()
}

/// How the three node result lists are pooled into one ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// problem, method, findings at rank 1, then rank 2, ...; first
    /// occurrence of a paper wins.
    #[default]
    RoundRobin,
    /// Union ranked by each paper's best similarity.
    MaxSimilarity,
}

/// Pools per-database hits. Each input list must already be rank-ordered.
pub fn pool_hits(lists: &[Vec<RankedHit>], mode: PoolingMode) -> Vec<RankedHit> {
    let mut out: Vec<RankedHit> = Vec::new();
    match mode {
        PoolingMode::RoundRobin => {
            let mut seen = HashSet::new();
            let depth = lists.iter().map(Vec::len).max().unwrap_or(0);
            for r in 0..depth {
                for list in lists {
                    if let Some(h) = list.get(r) {
                        if seen.insert(h.paper_id.clone()) {
                            out.push(h.clone());
                        }
                    }
                }
            }
        }
        PoolingMode::MaxSimilarity => {
            let mut best: BTreeMap<&str, &RankedHit> = BTreeMap::new();
            for h in lists.iter().flatten() {
                let e = best.entry(&h.paper_id).or_insert(h);
                if h.similarity > e.similarity {
                    *e = h;
                }
            }
            out = best.into_values().cloned().collect();
            out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.paper_id.cmp(&b.paper_id)));
        }
    }
    for (i, h) in out.iter_mut().enumerate() {
        h.rank = i + 1;
    }
    out
}

/// Pooled "whole ideation space" retrieval over the three node databases.
pub fn merged_search(
    dbs: &Databases,
    query: &SubspaceVectors,
    per_db_k: usize,
    mode: PoolingMode,
    exclude: Option<&str>,
) -> Result<Vec<RankedHit>, IndexError> {
    let missing: Vec<Dimension> = Dimension::ALL.into_iter().filter(|d| query.get(*d).is_none()).collect();
    if !missing.is_empty() {
        return Err(IndexError::MissingQueryDimensions(missing));
    }
    let lists = Dimension::ALL
        .iter()
        .map(|&d| search_with(dbs.node(d), query.get(d).expect("checked").as_slice(), per_db_k, exclude, Execution::default()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pool_hits(&lists, mode))
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 8 + 8;

fn payload_checksum(kind: DbKind, dim: u32, count: u64, rows: &[u8], ids: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(kind.code().to_le_bytes());
    h.update(dim.to_le_bytes());
    h.update(count.to_le_bytes());
    h.update(rows);
    h.update(ids);
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Layout: magic, version, kind, dimension, count, checksum, then
/// `count * dim` little-endian `f32` rows, then the id table
/// (`u32` byte length + UTF-8 per id).
pub fn write_database(db: &Database, mut out: impl Write) -> Result<(), IndexError> {
    let mut rows = Vec::with_capacity(db.rows.len() * 4);
    for x in &db.rows {
        rows.extend_from_slice(&x.to_le_bytes());
    }
    let mut ids = Vec::new();
    for id in &db.ids {
        ids.extend_from_slice(&(id.len() as u32).to_le_bytes());
        ids.extend_from_slice(id.as_bytes());
    }
    let dim = db.dim as u32;
    let count = db.len() as u64;
    out.write_all(INDEX_MAGIC)?;
    out.write_all(&INDEX_VERSION.to_le_bytes())?;
    out.write_all(&db.kind.code().to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    out.write_all(&payload_checksum(db.kind, dim, count, &rows, &ids).to_le_bytes())?;
    out.write_all(&rows)?;
    out.write_all(&ids)?;
    out.flush()?;
    Ok(())
}

pub fn read_database(mut input: impl Read) -> Result<Database, IndexError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let corrupt = |m: &str| IndexError::Corruption(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("file shorter than header"));
    }
    if &bytes[..8] != INDEX_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != INDEX_VERSION {
        return Err(IndexError::Corruption(format!("unsupported version {version}")));
    }
    let kind = DbKind::from_code(u32_at(12)).ok_or_else(|| corrupt("unknown database kind"))?;
    let dim = u32_at(16);
    let count = u64_at(20);
    let checksum = u64_at(28);
    let body = &bytes[HEADER_LEN..];
    let rows_len = (count as usize)
        .checked_mul(dim as usize)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("row table size overflows"))?;
    if body.len() < rows_len {
        return Err(corrupt("truncated row table"));
    }
    let (rows_bytes, id_bytes) = body.split_at(rows_len);
    if payload_checksum(kind, dim, count, rows_bytes, id_bytes) != checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let rows: Vec<f32> = rows_bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let mut ids = Vec::with_capacity(count as usize);
    let mut off = 0;
    while off < id_bytes.len() {
        if off + 4 > id_bytes.len() {
            return Err(corrupt("truncated id table"));
        }
        let len = u32::from_le_bytes(id_bytes[off..off + 4].try_into().expect("4 bytes")) as usize;
        off += 4;
        let s = id_bytes.get(off..off + len).ok_or_else(|| corrupt("truncated id"))?;
        ids.push(String::from_utf8(s.to_vec()).map_err(|_| corrupt("id is not UTF-8"))?);
        off += len;
    }
    if ids.len() as u64 != count {
        return Err(corrupt("id count does not match header"));
    }
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(corrupt("ids not strictly ascending"));
    }
    Ok(Database::from_parts(kind, dim as usize, ids, rows))
}

pub fn index_file_name(kind: DbKind) -> String {
    format!("{}.idx", kind.as_str())
}

/// Writes one file per database into `dir`.
pub fn save_index(dbs: &Databases, dir: impl AsRef<Path>) -> Result<(), IndexError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for db in dbs.all() {
        let file = File::create(dir.join(index_file_name(db.kind())))?;
        write_database(db, BufWriter::new(file))?;
    }
    Ok(())
}

pub fn load_index(dir: impl AsRef<Path>) -> Result<Databases, IndexError> {
    let dir = dir.as_ref();
    let load = |kind: DbKind| -> Result<Database, IndexError> {
        let db = read_database(BufReader::new(File::open(dir.join(index_file_name(kind)))?))?;
        if db.kind() != kind {
            return Err(IndexError::WrongKind { expected: kind, found: db.kind() });
        }
        Ok(db)
    };
    let dbs = Databases {
        problem: load(DbKind::Problem)?,
        method: load(DbKind::Method)?,
        findings: load(DbKind::Findings)?,
        p2m: load(DbKind::P2m)?,
        m2k: load(DbKind::M2k)?,
    };
    let dims: HashSet<usize> = dbs.all().iter().filter(|d| !d.is_empty()).map(|d| d.dim()).collect();
    if dims.len() > 1 {
        return Err(IndexError::Corruption(format!("databases disagree on dimension: {dims:?}")));
    }
    Ok(dbs)
}

// ---------------------------------------------------------------------------
// Embedding import
// ---------------------------------------------------------------------------

/// One line of the embedding import format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub paper_id: String,
    pub subspace: Dimension,
    pub vector: EmbeddingVector,
}

/// Groups embedding records by paper (ascending id), enforcing one vector
/// per (paper, sub-space) and a single dimension.
pub fn group_embeddings(records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Vec<SubspaceVectors>, IndexError> {
    let mut by_paper: BTreeMap<String, SubspaceVectors> = BTreeMap::new();
    let mut dim = None;
    for rec in records {
        match dim {
            None => dim = Some(rec.vector.dim()),
            Some(d) if d != rec.vector.dim() => {
                return Err(IndexError::DimensionMismatch { expected: d, found: rec.vector.dim(), context: Some(format!("paper `{}` {}", rec.paper_id, rec.subspace)) })
            }
            _ => {}
        }
        let sv = by_paper.entry(rec.paper_id.clone()).or_insert_with(|| SubspaceVectors::new(rec.paper_id.clone()));
        let slot = sv.slot_mut(rec.subspace);
        if slot.is_some() {
            return Err(IndexError::DuplicateVector { paper_id: rec.paper_id, dimension: rec.subspace });
        }
        *slot = Some(rec.vector);
    }
    Ok(by_paper.into_values().collect())
}

pub fn read_embedding_records(reader: impl BufRead) -> Result<Vec<EmbeddingRecord>, IndexError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || crate::is_header_line(&line) {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| IndexError::BadRecord { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Inverse of [`group_embeddings`]: one record per present vector, sorted.
pub fn flatten_embeddings(vectors: &[SubspaceVectors]) -> Vec<EmbeddingRecord> {
    let mut out: Vec<EmbeddingRecord> = vectors
        .iter()
        .flat_map(|sv| {
            Dimension::ALL.into_iter().filter_map(move |d| {
                sv.get(d).map(|v| EmbeddingRecord { paper_id: sv.paper_id.clone(), subspace: d, vector: v.clone() })
            })
        })
        .collect();
    out.sort_by(|a, b| a.paper_id.cmp(&b.paper_id).then(a.subspace.cmp(&b.subspace)));
    out
}

/// Reads sub-space vectors back out of packed node databases.
pub fn vectors_from_databases(dbs: &Databases) -> Vec<SubspaceVectors> {
    let mut by_paper: BTreeMap<String, SubspaceVectors> = BTreeMap::new();
    for dim in Dimension::ALL {
        for (id, row) in dbs.node(dim).iter() {
            let v = EmbeddingVector::new(row.iter().map(|&x| x as f64).collect()).expect("stored rows are finite");
            *by_paper.entry(id.to_string()).or_insert_with(|| SubspaceVectors::new(id)).slot_mut(dim) = Some(v);
        }
    }
    by_paper.into_values().collect()
}
