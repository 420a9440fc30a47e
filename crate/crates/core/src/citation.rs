//! Citation-graph mining: structural candidate pairs, function
//! classification, multi-label sub-graphs and negative sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusHandle;
use crate::par::{map_slice, Execution};
use crate::provider::{classify_citation, CitationClassifier, CitationRequest, FunctionScores};
use crate::subspace::Dimension;

#[derive(Debug, Error)]
pub enum CitationError {
    #[error("unknown paper `{0}`")]
    UnknownPaper(String),
    #[error("pair members must differ (got `{0}` twice)")]
    SamePaper(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Unordered pair, stored with the smaller id first.
pub type PairKey = (String, String);

pub fn pair_key(a: &str, b: &str) -> PairKey {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CitationGraph {
    out_edges: BTreeMap<String, BTreeSet<String>>,
    in_edges: BTreeMap<String, BTreeSet<String>>,
    dangling: usize,
}

/// Every corpus paper becomes a node; references outside the corpus are
/// dropped and counted.
pub fn build_citation_graph(corpus: &CorpusHandle) -> CitationGraph {
    let mut g = CitationGraph::default();
    for id in corpus.ids() {
        g.out_edges.insert(id.to_string(), BTreeSet::new());
        g.in_edges.insert(id.to_string(), BTreeSet::new());
    }
    for p in corpus.iter() {
        for r in &p.references {
            if r == &p.paper_id {
                continue;
            }
            if !corpus.contains(r) {
                g.dangling += 1;
                continue;
            }
            g.out_edges.get_mut(&p.paper_id).unwrap().insert(r.clone());
            g.in_edges.get_mut(r).unwrap().insert(p.paper_id.clone());
        }
    }
    g
}

impl CitationGraph {
    /// Builds a graph from explicit edges; endpoints become nodes.
    pub fn from_edges<'a>(nodes: impl IntoIterator<Item = &'a str>, edges: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut g = CitationGraph::default();
        for n in nodes {
            g.out_edges.entry(n.to_string()).or_default();
            g.in_edges.entry(n.to_string()).or_default();
        }
        for (a, b) in edges {
            if a == b {
                continue;
            }
            g.out_edges.entry(a.to_string()).or_default().insert(b.to_string());
            g.in_edges.entry(b.to_string()).or_default().insert(a.to_string());
            g.out_edges.entry(b.to_string()).or_default();
            g.in_edges.entry(a.to_string()).or_default();
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.out_edges.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.values().map(BTreeSet::len).sum()
    }

    pub fn dangling_count(&self) -> usize {
        self.dangling
    }

    pub fn contains(&self, id: &str) -> bool {
        self.out_edges.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.out_edges.keys().map(String::as_str)
    }

    pub fn out_edges(&self, id: &str) -> Result<&BTreeSet<String>, CitationError> {
        self.out_edges.get(id).ok_or_else(|| CitationError::UnknownPaper(id.to_string()))
    }

    pub fn in_edges(&self, id: &str) -> Result<&BTreeSet<String>, CitationError> {
        self.in_edges.get(id).ok_or_else(|| CitationError::UnknownPaper(id.to_string()))
    }

    pub fn cites(&self, a: &str, b: &str) -> bool {
        self.out_edges.get(a).is_some_and(|s| s.contains(b))
    }

    pub fn has_direct_citation(&self, a: &str, b: &str) -> bool {
        self.cites(a, b) || self.cites(b, a)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.out_edges.iter().flat_map(|(a, bs)| bs.iter().map(move |b| (a.as_str(), b.as_str())))
    }
}

fn intersection_size(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|x| large.contains(*x)).count()
}

fn check_pair(g: &CitationGraph, a: &str, b: &str) -> Result<(), CitationError> {
    if a == b {
        return Err(CitationError::SamePaper(a.to_string()));
    }
    for id in [a, b] {
        if !g.contains(id) {
            return Err(CitationError::UnknownPaper(id.to_string()));
        }
    }
    Ok(())
}

/// Number of references shared by `a` and `b`.
pub fn bibliographic_coupling(g: &CitationGraph, a: &str, b: &str) -> Result<usize, CitationError> {
    check_pair(g, a, b)?;
    Ok(intersection_size(&g.out_edges[a], &g.out_edges[b]))
}

/// Number of papers citing both `a` and `b`.
pub fn co_citation_count(g: &CitationGraph, a: &str, b: &str) -> Result<usize, CitationError> {
    check_pair(g, a, b)?;
    Ok(intersection_size(&g.in_edges[a], &g.in_edges[b]))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: String,
    pub b: String,
    pub has_direct_citation: bool,
    pub coupling_count: usize,
    pub cocitation_count: usize,
    pub year_gap: u32,
}

impl CandidatePair {
    pub fn key(&self) -> PairKey {
        (self.a.clone(), self.b.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningThresholds {
    pub window_years: u32,
    pub coupling_min: usize,
    pub cocite_min: usize,
}

impl Default for MiningThresholds {
    fn default() -> Self {
        MiningThresholds { window_years: 5, coupling_min: 10, cocite_min: 10 }
    }
}

impl MiningThresholds {
    pub fn validate(&self) -> Result<(), CitationError> {
        if self.coupling_min == 0 || self.cocite_min == 0 {
            return Err(CitationError::InvalidThreshold("coupling_min and cocite_min must be at least 1".into()));
        }
        Ok(())
    }
}

/// Directly linked pairs inside the year window that share enough
/// references or co-citations. Sorted by pair key.
pub fn identify_candidate_pairs(g: &CitationGraph, corpus: &CorpusHandle, th: &MiningThresholds, exec: Execution) -> Result<Vec<CandidatePair>, CitationError> {
    th.validate()?;
    let year = |id: &str| corpus.get(id).map(|p| p.year).ok_or_else(|| CitationError::UnknownPaper(id.to_string()));
    let mut linked = BTreeSet::new();
    for (a, b) in g.edges() {
        let gap = year(a)?.abs_diff(year(b)?);
        if gap <= th.window_years {
            linked.insert((pair_key(a, b), gap));
        }
    }
    let linked: Vec<(PairKey, u32)> = linked.into_iter().collect();
    let scored = map_slice(&linked, exec, |((a, b), gap)| {
        let coupling = intersection_size(&g.out_edges[a], &g.out_edges[b]);
        let cocite = intersection_size(&g.in_edges[a], &g.in_edges[b]);
        (coupling >= th.coupling_min || cocite >= th.cocite_min).then(|| CandidatePair {
            a: a.clone(),
            b: b.clone(),
            has_direct_citation: true,
            coupling_count: coupling,
            cocitation_count: cocite,
            year_gap: *gap,
        })
    });
    Ok(scored.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub a: String,
    pub b: String,
    pub scores: FunctionScores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub a: String,
    pub b: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Classification {
    pub scored: BTreeMap<PairKey, FunctionScores>,
    pub failures: Vec<PairFailure>,
    pub warnings: Vec<String>,
}

impl Classification {
    pub fn scored_pairs(&self) -> Vec<ScoredPair> {
        self.scored.iter().map(|((a, b), s)| ScoredPair { a: a.clone(), b: b.clone(), scores: s.clone() }).collect()
    }
}

/// Citing side first: the paper whose reference list holds the other.
pub fn citation_request(corpus: &CorpusHandle, g: &CitationGraph, a: &str, b: &str) -> Result<CitationRequest, CitationError> {
    let (citing, cited) = if g.cites(a, b) || !g.cites(b, a) { (a, b) } else { (b, a) };
    let citing = corpus.get(citing).ok_or_else(|| CitationError::UnknownPaper(citing.to_string()))?;
    let cited = corpus.get(cited).ok_or_else(|| CitationError::UnknownPaper(cited.to_string()))?;
    Ok(CitationRequest {
        citing_title: citing.title.clone(),
        citing_rq: citing.problem_text.clone(),
        citing_method: citing.method_text.clone(),
        citing_findings: citing.findings_text.clone(),
        cited_title: cited.title.clone(),
        cited_rq: cited.problem_text.clone(),
        cited_method: cited.method_text.clone(),
        cited_findings: cited.findings_text.clone(),
    })
}

/// One classifier call per pair; failures are recorded, not fatal.
pub fn classify_pairs(client: &dyn CitationClassifier, pairs: &[CandidatePair], corpus: &CorpusHandle, g: &CitationGraph, exec: Execution) -> Classification {
    let outcomes = map_slice(pairs, exec, |p| -> Result<(FunctionScores, Vec<String>), String> {
        let req = citation_request(corpus, g, &p.a, &p.b).map_err(|e| e.to_string())?;
        if req.citing_title.trim().is_empty() || req.cited_title.trim().is_empty() {
            return Err("pair member has an empty title".into());
        }
        classify_citation(client, &req).map_err(|e| e.to_string())
    });
    let mut out = Classification::default();
    for (p, r) in pairs.iter().zip(outcomes) {
        match r {
            Ok((scores, warnings)) => {
                out.warnings.extend(warnings.into_iter().map(|w| format!("{}/{}: {w}", p.a, p.b)));
                out.scored.insert(p.key(), scores);
            }
            Err(error) => out.failures.push(PairFailure { a: p.a.clone(), b: p.b.clone(), error }),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGraphs {
    pub problem_pairs: BTreeSet<PairKey>,
    pub method_pairs: BTreeSet<PairKey>,
    pub findings_pairs: BTreeSet<PairKey>,
    pub irrelevant_pairs: BTreeSet<PairKey>,
}

impl SubGraphs {
    pub fn get(&self, dim: Dimension) -> &BTreeSet<PairKey> {
        match dim {
            Dimension::Problem => &self.problem_pairs,
            Dimension::Method => &self.method_pairs,
            Dimension::Findings => &self.findings_pairs,
        }
    }

    fn get_mut(&mut self, dim: Dimension) -> &mut BTreeSet<PairKey> {
        match dim {
            Dimension::Problem => &mut self.problem_pairs,
            Dimension::Method => &mut self.method_pairs,
            Dimension::Findings => &mut self.findings_pairs,
        }
    }
}

pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.6;

/// Multi-label assignment: a pair joins every dimension scoring at least
/// `accept_threshold`; pairs joining none are irrelevant.
pub fn assign_subgraphs(scored: &BTreeMap<PairKey, FunctionScores>, accept_threshold: f64) -> SubGraphs {
    let mut sg = SubGraphs::default();
    for (key, s) in scored {
        let mut any = false;
        for dim in Dimension::ALL {
            if s.get(dim) >= accept_threshold {
                sg.get_mut(dim).insert(key.clone());
                any = true;
            }
        }
        if !any {
            sg.irrelevant_pairs.insert(key.clone());
        }
    }
    sg
}

/// True when `a` and `b` share no citation, co-citation or coupling.
pub fn structurally_unrelated(g: &CitationGraph, a: &str, b: &str) -> bool {
    if a == b || !g.contains(a) || !g.contains(b) {
        return false;
    }
    !g.has_direct_citation(a, b)
        && intersection_size(&g.in_edges[a], &g.in_edges[b]) == 0
        && intersection_size(&g.out_edges[a], &g.out_edges[b]) == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NegativeSample {
    pub ids: Vec<String>,
    pub shortfall: bool,
}

fn draw(mut pool: Vec<String>, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    if pool.len() <= n {
        pool.shuffle(rng);
        return pool;
    }
    sample(rng, pool.len(), n).into_iter().map(|i| std::mem::take(&mut pool[i])).collect()
}

/// Seeded draw without replacement from batch members structurally
/// unrelated to `anchor`.
pub fn sample_in_batch_negatives(batch: &[String], anchor: &str, g: &CitationGraph, n: usize, rng_seed: u64) -> NegativeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    in_batch_with(batch, anchor, g, n, &BTreeSet::new(), &mut rng)
}

fn in_batch_with(batch: &[String], anchor: &str, g: &CitationGraph, n: usize, exclude: &BTreeSet<&str>, rng: &mut ChaCha8Rng) -> NegativeSample {
    let mut seen = BTreeSet::new();
    let pool: Vec<String> = batch
        .iter()
        .filter(|id| seen.insert(id.as_str()))
        .filter(|id| !exclude.contains(id.as_str()) && structurally_unrelated(g, anchor, id))
        .cloned()
        .collect();
    let shortfall = pool.len() < n;
    NegativeSample { ids: draw(pool, n, rng), shortfall }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardNegativeThresholds {
    pub high: f64,
    pub low: f64,
}

impl Default for HardNegativeThresholds {
    fn default() -> Self {
        HardNegativeThresholds { high: 0.8, low: 0.2 }
    }
}

/// Pairs scored low in `target` and high in some other dimension.
pub fn eligible_hard_pairs(scored: &BTreeMap<PairKey, FunctionScores>, target: Dimension, th: &HardNegativeThresholds) -> Vec<PairKey> {
    scored
        .iter()
        .filter(|(_, s)| s.get(target) <= th.low && Dimension::ALL.iter().any(|&d| d != target && s.get(d) >= th.high))
        .map(|(k, _)| k.clone())
        .collect()
}

fn hard_partners(scored: &BTreeMap<PairKey, FunctionScores>, anchor: &str, target: Dimension, th: &HardNegativeThresholds) -> Vec<String> {
    eligible_hard_pairs(scored, target, th)
        .into_iter()
        .filter_map(|(a, b)| {
            if a == anchor {
                Some(b)
            } else if b == anchor {
                Some(a)
            } else {
                None
            }
        })
        .collect()
}

/// Seeded draw of `anchor`'s partners in eligible hard pairs.
pub fn sample_hard_negatives(scored: &BTreeMap<PairKey, FunctionScores>, anchor: &str, target: Dimension, th: &HardNegativeThresholds, n: usize, rng_seed: u64) -> NegativeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pool = hard_partners(scored, anchor, target, th);
    let shortfall = pool.len() < n;
    NegativeSample { ids: draw(pool, n, &mut rng), shortfall }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    InBatch,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negative {
    pub paper_id: String,
    pub kind: NegativeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub anchor: String,
    pub positives: Vec<String>,
    pub negatives: Vec<Negative>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub hard: HardNegativeThresholds,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig { batch_size: 32, n_pos: 2, n_neg: 8, hard: HardNegativeThresholds::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrainingSet {
    pub dimension: Option<Dimension>,
    pub batches: Vec<Vec<TrainingExample>>,
    pub dropped_anchors: usize,
    pub shortfalls: usize,
}

impl TrainingSet {
    pub fn examples(&self) -> impl Iterator<Item = &TrainingExample> {
        self.batches.iter().flatten()
    }
}

/// Groups anchors from one dimension's pair set into seeded batches.
///
/// Anchors with fewer than `n_pos` partners are dropped. Negatives come
/// from the batch first and are topped up with hard negatives when
/// `scored` is given.
pub fn build_training_batches(
    pairs: &BTreeSet<PairKey>,
    dim: Dimension,
    corpus: &CorpusHandle,
    g: &CitationGraph,
    scored: Option<&BTreeMap<PairKey, FunctionScores>>,
    cfg: &BatchConfig,
    rng_seed: u64,
) -> TrainingSet {
    let usable = |id: &str| corpus.get(id).is_some_and(|p| p.has_dimension(dim));
    let mut partners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (a, b) in pairs {
        if a == b || !usable(a) || !usable(b) {
            continue;
        }
        partners.entry(a).or_default().insert(b);
        partners.entry(b).or_default().insert(a);
    }
    let mut set = TrainingSet { dimension: Some(dim), ..Default::default() };
    let mut anchors: Vec<&str> = Vec::new();
    for (a, ps) in &partners {
        if ps.len() < cfg.n_pos.max(1) {
            set.dropped_anchors += 1;
        } else {
            anchors.push(a);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    anchors.shuffle(&mut rng);
    for chunk in anchors.chunks(cfg.batch_size.max(1)) {
        let chosen: Vec<Vec<String>> = chunk
            .iter()
            .map(|a| {
                let pool: Vec<String> = partners[a].iter().map(|s| s.to_string()).collect();
                draw(pool, cfg.n_pos, &mut rng)
            })
            .collect();
        let mut members: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        for (a, ps) in chunk.iter().zip(&chosen) {
            for id in std::iter::once(a.to_string()).chain(ps.iter().cloned()) {
                if seen.insert(id.clone()) {
                    members.push(id);
                }
            }
        }
        let mut batch = Vec::with_capacity(chunk.len());
        for (a, positives) in chunk.iter().zip(chosen) {
            let mut exclude: BTreeSet<&str> = partners[a].iter().copied().collect();
            exclude.insert(a);
            let in_batch = in_batch_with(&members, a, g, cfg.n_neg, &exclude, &mut rng);
            let mut negatives: Vec<Negative> = in_batch.ids.into_iter().map(|paper_id| Negative { paper_id, kind: NegativeKind::InBatch }).collect();
            if negatives.len() < cfg.n_neg {
                if let Some(scored) = scored {
                    let taken: BTreeSet<String> = negatives.iter().map(|n| n.paper_id.clone()).collect();
                    let pool: Vec<String> = hard_partners(scored, a, dim, &cfg.hard)
                        .into_iter()
                        .filter(|id| !taken.contains(id) && !exclude.contains(id.as_str()) && usable(id))
                        .collect();
                    let need = cfg.n_neg - negatives.len();
                    negatives.extend(draw(pool, need, &mut rng).into_iter().map(|paper_id| Negative { paper_id, kind: NegativeKind::Hard }));
                }
            }
            let shortfall = negatives.len() < cfg.n_neg;
            set.shortfalls += usize::from(shortfall);
            batch.push(TrainingExample { anchor: a.to_string(), positives, negatives, shortfall });
        }
        set.batches.push(batch);
    }
    set
}

pub fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>, mut out: impl Write) -> Result<(), CitationError> {
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGraphRecord {
    pub a: String,
    pub b: String,
    pub labels: Vec<String>,
}

/// One record per scored pair with its dimension labels (or `irrelevant`).
pub fn subgraph_records(sg: &SubGraphs) -> Vec<SubGraphRecord> {
    let mut labels: BTreeMap<&PairKey, Vec<String>> = BTreeMap::new();
    for dim in Dimension::ALL {
        for k in sg.get(dim) {
            labels.entry(k).or_default().push(dim.as_str().to_string());
        }
    }
    for k in &sg.irrelevant_pairs {
        labels.entry(k).or_default().push("irrelevant".into());
    }
    labels.into_iter().map(|((a, b), labels)| SubGraphRecord { a: a.clone(), b: b.clone(), labels }).collect()
}
