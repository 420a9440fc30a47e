//! Decomposed novelty assessment over a reasoning graph.
//!
//! Each node is matched against its sub-space database; the maximum
//! similarity s(v) is weighted by node centrality and aggregated as
//! `N = 1 - Σ s(v)·w̃(v) / Σ w̃(v)`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{extract_graph, node_subspace, GraphError, ReasoningGraph, Role};
use crate::index::{search_with, Databases, IndexError, RankedHit};
use crate::par::{map_slice, Execution};
use crate::provider::{Embedder, GraphExtractor, ProviderError};
use crate::subspace::Dimension;

pub const RESCALE_LOW: f64 = 0.5;
pub const RESCALE_HIGH: f64 = 2.0;
pub const CLAMP_POLICY: &str = "max-similarity clamped to [0, 1]";

#[derive(Debug, Error)]
pub enum NoveltyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("weight/similarity maps do not cover the graph: missing [{}], unknown [{}]", missing.join(", "), unknown.join(", "))]
    Coverage { missing: Vec<String>, unknown: Vec<String> },
    #[error("cannot rescale an empty weight map")]
    EmptyWeights,
    #[error("node `{0}`: similarity {1} outside [0, 1]")]
    InvalidSimilarity(String, f64),
    #[error("node `{0}`: weight {1} is not positive and finite")]
    InvalidWeight(String, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralityView {
    #[default]
    Undirected,
    Directed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoveltyConfig {
    pub k: usize,
    pub view: CentralityView,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig { k: 10, view: CentralityView::Undirected }
    }
}

/// Distinct-neighbor degree of every node over `|V| - 1`. Edge direction
/// is ignored in both views.
pub fn degree_all(g: &ReasoningGraph) -> Vec<f64> {
    let n = g.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    g.undirected_adjacency().iter().map(|nb| nb.len() as f64 / (n - 1) as f64).collect()
}

/// Brandes shortest-path counting. Undirected view sums unordered pairs.
pub fn betweenness_all(g: &ReasoningGraph, view: CentralityView) -> Vec<f64> {
    let adj: Vec<Vec<usize>> = match view {
        CentralityView::Undirected => g.undirected_adjacency(),
        CentralityView::Directed => g.directed_adjacency(),
    }
    .into_iter()
    .map(|s| s.into_iter().collect())
    .collect();
    let n = adj.len();
    let mut cb = vec![0.0f64; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    if view == CentralityView::Undirected {
        for c in &mut cb {
            *c /= 2.0;
        }
    }
    cb
}

pub fn degree_centrality(g: &ReasoningGraph, v: &str) -> Result<f64, GraphError> {
    let i = g.node_index(v)?;
    Ok(degree_all(g)[i])
}

pub fn betweenness_centrality(g: &ReasoningGraph, v: &str, view: CentralityView) -> Result<f64, GraphError> {
    let i = g.node_index(v)?;
    Ok(betweenness_all(g, view)[i])
}

/// Raw importance `½(degree + betweenness)` per node.
pub fn importance_weights(g: &ReasoningGraph, view: CentralityView) -> BTreeMap<String, f64> {
    let deg = degree_all(g);
    let bet = betweenness_all(g, view);
    g.nodes().iter().enumerate().map(|(i, n)| (n.node_id.clone(), 0.5 * (deg[i] + bet[i]))).collect()
}

/// Min-max map onto [0.5, 2.0]; all-equal input maps to 1.0.
pub fn rescale_weights(raw: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, NoveltyError> {
    if raw.is_empty() {
        return Err(NoveltyError::EmptyWeights);
    }
    if let Some((id, &w)) = raw.iter().find(|(_, w)| !w.is_finite()) {
        return Err(NoveltyError::InvalidWeight(id.clone(), w));
    }
    let lo = raw.values().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(raw.keys().map(|k| (k.clone(), 1.0)).collect());
    }
    let span = RESCALE_HIGH - RESCALE_LOW;
    Ok(raw.iter().map(|(k, &w)| (k.clone(), RESCALE_LOW + span * (w - lo) / (hi - lo))).collect())
}

fn check_coverage(g: &ReasoningGraph, maps: &[&BTreeMap<String, f64>]) -> Result<(), NoveltyError> {
    let mut missing = Vec::new();
    let mut unknown = Vec::new();
    for m in maps {
        for n in g.nodes() {
            if !m.contains_key(&n.node_id) && !missing.contains(&n.node_id) {
                missing.push(n.node_id.clone());
            }
        }
        for k in m.keys() {
            if g.node_index(k).is_err() && !unknown.contains(k) {
                unknown.push(k.clone());
            }
        }
    }
    if missing.is_empty() && unknown.is_empty() {
        Ok(())
    } else {
        Err(NoveltyError::Coverage { missing, unknown })
    }
}

/// Aggregate score, computed as `Σ w̃(1 - s) / Σ w̃`.
pub fn novelty_score(g: &ReasoningGraph, similarities: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> Result<f64, NoveltyError> {
    check_coverage(g, &[similarities, weights])?;
    let mut num = 0.0;
    let mut den = 0.0;
    for n in g.nodes() {
        let s = similarities[&n.node_id];
        let w = weights[&n.node_id];
        if !(0.0..=1.0).contains(&s) {
            return Err(NoveltyError::InvalidSimilarity(n.node_id.clone(), s));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(NoveltyError::InvalidWeight(n.node_id.clone(), w));
        }
        num += w * (1.0 - s);
        den += w;
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvidence {
    pub node_id: String,
    pub retrieved: Vec<RankedHit>,
    /// Highest similarity before clamping; `None` when nothing was retrieved.
    pub raw_max: Option<f64>,
    pub s_v: f64,
}

impl NodeEvidence {
    pub fn from_hits(node_id: impl Into<String>, retrieved: Vec<RankedHit>) -> Self {
        let raw_max = retrieved.iter().map(|h| h.similarity).reduce(f64::max);
        let s_v = raw_max.map_or(0.0, |m| m.clamp(0.0, 1.0));
        NodeEvidence { node_id: node_id.into(), retrieved, raw_max, s_v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceHit {
    pub paper_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node_id: String,
    pub role: Role,
    pub subspace: Dimension,
    pub text: String,
    pub raw_similarity: Option<f64>,
    pub s_v: f64,
    pub raw_weight: f64,
    pub rescaled_weight: f64,
    pub evidence: Vec<EvidenceHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub score: f64,
    pub k: usize,
    pub centrality_view: CentralityView,
    pub clamp_policy: String,
    pub per_node: Vec<NodeReport>,
    pub warnings: Vec<String>,
}

/// Assembles a report from per-node evidence (one entry per graph node).
pub fn compose_report(g: &ReasoningGraph, evidence: Vec<NodeEvidence>, cfg: &NoveltyConfig, mut warnings: Vec<String>) -> Result<NoveltyReport, NoveltyError> {
    let by_id: BTreeMap<String, NodeEvidence> = evidence.into_iter().map(|e| (e.node_id.clone(), e)).collect();
    let sims: BTreeMap<String, f64> = by_id.iter().map(|(k, e)| (k.clone(), e.s_v)).collect();
    check_coverage(g, &[&sims])?;
    let raw = importance_weights(g, cfg.view);
    let rescaled = rescale_weights(&raw)?;
    let score = novelty_score(g, &sims, &rescaled)?;
    let per_node = g
        .nodes()
        .iter()
        .map(|n| {
            let e = &by_id[&n.node_id];
            if let Some(m) = e.raw_max.filter(|m| *m < 0.0 || *m > 1.0) {
                warnings.push(format!("node `{}`: similarity {m} clamped to {}", n.node_id, e.s_v));
            }
            NodeReport {
                node_id: n.node_id.clone(),
                role: n.role,
                subspace: node_subspace(n.role),
                text: n.text.clone(),
                raw_similarity: e.raw_max,
                s_v: e.s_v,
                raw_weight: raw[&n.node_id],
                rescaled_weight: rescaled[&n.node_id],
                evidence: e.retrieved.iter().map(|h| EvidenceHit { paper_id: h.paper_id.clone(), similarity: h.similarity }).collect(),
            }
        })
        .collect();
    Ok(NoveltyReport { score, k: cfg.k, centrality_view: cfg.view, clamp_policy: CLAMP_POLICY.into(), per_node, warnings })
}

/// Embeds every node and retrieves its top-K neighbors from the node's
/// sub-space database.
pub fn assess_graph(g: &ReasoningGraph, dbs: &Databases, embedder: &dyn Embedder, cfg: &NoveltyConfig, exec: Execution) -> Result<NoveltyReport, NoveltyError> {
    let results = map_slice(g.nodes(), exec, |n| -> Result<(NodeEvidence, Option<String>), NoveltyError> {
        let dim = node_subspace(n.role);
        let db = dbs.node(dim);
        if db.is_empty() {
            let w = format!("node `{}`: {} database is empty; similarity set to 0", n.node_id, dim);
            return Ok((NodeEvidence::from_hits(&n.node_id, Vec::new()), Some(w)));
        }
        let q = embedder.embed_text(&n.text, dim)?;
        let hits = search_with(db, q.as_slice(), cfg.k, None, Execution::Sequential)?;
        Ok((NodeEvidence::from_hits(&n.node_id, hits), None))
    });
    let mut evidence = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for r in results {
        let (e, w) = r?;
        evidence.push(e);
        warnings.extend(w);
    }
    compose_report(g, evidence, cfg, warnings)
}

/// Extract, validate, retrieve, weight and score one idea.
pub fn assess<C>(idea_text: &str, dbs: &Databases, client: &C, cfg: &NoveltyConfig, exec: Execution) -> Result<(ReasoningGraph, NoveltyReport), NoveltyError>
where
    C: GraphExtractor + Embedder,
{
    let g = extract_graph(client, idea_text)?;
    let mut report = assess_graph(&g, dbs, client, cfg, exec)?;
    let mut diags: Vec<String> = crate::graph::validate_graph(&g).into_iter().map(|d| d.to_string()).collect();
    diags.append(&mut report.warnings);
    report.warnings = diags;
    Ok((g, report))
}
