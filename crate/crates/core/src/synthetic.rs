//! Seeded synthetic corpora with planted clusters, plus matching provider
//! fixtures. Cluster mates get near-duplicate sub-space vectors, cite each
//! other and share a block of references.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::citation::{citation_request, CandidatePair, CitationGraph};
use crate::corpus::{CorpusHandle, PaperRecord};
use crate::eval::QueryTruth;
use crate::graph::{node_subspace, EdgePayload, GraphPayload, NodePayload, Role};
use crate::index::{EmbeddingRecord, SubspaceVectors};
use crate::kernel::EmbeddingVector;
use crate::provider::{build_request, embed_payload, graph_payload, Fixture, ProviderError, OP_CLASSIFY, OP_EMBED, OP_GRAPH};
use crate::subspace::Dimension;

const WORDS: &[&str] = &[
    "sparse", "graph", "attention", "retrieval", "contrastive", "latent", "causal", "federated", "robust", "adaptive", "kernel", "token",
    "diffusion", "prior", "reward", "agent", "spectral", "memory", "benchmark", "transfer", "pruning", "alignment", "embedding", "solver",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub papers: usize,
    pub clusters: usize,
    pub cluster_size: usize,
    pub dim: usize,
    pub noise: f64,
    pub shared_refs: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { papers: 200, clusters: 10, cluster_size: 8, dim: 32, noise: 1e-3, shared_refs: 12, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub records: Vec<PaperRecord>,
    pub vectors: Vec<SubspaceVectors>,
    pub clusters: Vec<Vec<String>>,
    /// Per cluster, the problem/method/findings centers.
    pub centers: Vec<[Vec<f64>; 3]>,
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn jitter(rng: &mut ChaCha8Rng, v: &[f64], noise: f64) -> Vec<f64> {
    v.iter().map(|x| x + rng.random_range(-noise..noise)).collect()
}

fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Papers `c{cc}-m{m}` form the clusters; `b{nnn}` are background papers.
/// Background papers are split into per-cluster reference blocks.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    assert!(cfg.clusters * cfg.cluster_size <= cfg.papers, "clusters do not fit in the corpus");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_background = cfg.papers - cfg.clusters * cfg.cluster_size;
    let background: Vec<String> = (0..n_background).map(|i| format!("b{i:03}")).collect();
    let mut records = Vec::with_capacity(cfg.papers);
    let mut vectors = Vec::with_capacity(cfg.papers);
    for id in &background {
        let topic = phrase(&mut rng, 3);
        records.push(PaperRecord {
            paper_id: id.clone(),
            title: format!("On {topic}"),
            abstract_text: format!("We revisit {topic}."),
            year: rng.random_range(2000..=2010),
            categories: ["cs.LG".to_string()].into(),
            problem_text: format!("How to handle {}?", phrase(&mut rng, 4)),
            method_text: format!("We apply {}.", phrase(&mut rng, 4)),
            findings_text: format!("Results show {}.", phrase(&mut rng, 4)),
            references: Vec::new(),
        });
        let mut sv = SubspaceVectors::new(id.clone());
        for dim in Dimension::ALL {
            sv = sv.with(dim, EmbeddingVector::new(random_vec(&mut rng, cfg.dim)).unwrap());
        }
        vectors.push(sv);
    }
    let mut clusters = Vec::new();
    let mut centers = Vec::new();
    for c in 0..cfg.clusters {
        let center = [random_vec(&mut rng, cfg.dim), random_vec(&mut rng, cfg.dim), random_vec(&mut rng, cfg.dim)];
        let topic = phrase(&mut rng, 3);
        let block: Vec<String> = if n_background == 0 {
            Vec::new()
        } else {
            (0..cfg.shared_refs).map(|j| background[(c * cfg.shared_refs + j) % n_background].clone()).collect()
        };
        let members: Vec<String> = (0..cfg.cluster_size).map(|m| format!("c{c:02}-m{m}")).collect();
        for (m, id) in members.iter().enumerate() {
            let mut refs = block.clone();
            refs.extend(members[..m].iter().cloned());
            records.push(PaperRecord {
                paper_id: id.clone(),
                title: format!("{topic} study {m}"),
                abstract_text: format!("A study of {topic}, variant {m}."),
                year: 2018 + (m % 5) as i32,
                categories: ["cs.AI".to_string(), format!("cluster.{c:02}")].into(),
                problem_text: format!("How can {topic} scale (variant {m})?"),
                method_text: format!("We propose {topic} with {}.", phrase(&mut rng, 2)),
                findings_text: format!("{topic} improves {} accuracy.", phrase(&mut rng, 1)),
                references: refs,
            });
            let mut sv = SubspaceVectors::new(id.clone());
            for (d, dim) in Dimension::ALL.into_iter().enumerate() {
                sv = sv.with(dim, EmbeddingVector::new(jitter(&mut rng, &center[d], cfg.noise)).unwrap());
            }
            vectors.push(sv);
        }
        clusters.push(members);
        centers.push(center);
    }
    records.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    vectors.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    SyntheticCorpus { config: cfg.clone(), records, vectors, clusters, centers }
}

impl SyntheticCorpus {
    pub fn handle(&self) -> CorpusHandle {
        CorpusHandle::from_records(self.records.clone()).expect("generated records are valid")
    }

    pub fn embedding_records(&self) -> Vec<EmbeddingRecord> {
        crate::index::flatten_embeddings(&self.vectors)
    }

    /// Every clustered paper is a query whose relevant set, in all five
    /// databases, is its cluster mates.
    pub fn ground_truth(&self) -> Vec<QueryTruth> {
        let mut out = Vec::new();
        for members in &self.clusters {
            for q in members {
                let mates: BTreeSet<String> = members.iter().filter(|m| *m != q).cloned().collect();
                out.push(QueryTruth {
                    query_id: q.clone(),
                    problem: mates.clone(),
                    method: mates.clone(),
                    findings: mates.clone(),
                    p2m: mates.clone(),
                    m2k: mates,
                });
            }
        }
        out.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        out
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.clusters.iter().position(|m| m.iter().any(|x| x == id))
    }
}

/// Classifier fixture for mined pairs with seeded scores on the 0.2 grid.
pub fn classifier_fixture(corpus: &CorpusHandle, g: &CitationGraph, pairs: &[CandidatePair], model: &str, seed: u64) -> Result<Fixture, ProviderError> {
    let grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fx = Fixture::new();
    for p in pairs {
        let req = citation_request(corpus, g, &p.a, &p.b).map_err(|e| ProviderError::InvalidInput(e.to_string()))?;
        let mut scores = [0.0f64; 3];
        for s in &mut scores {
            *s = grid[rng.random_range(0..grid.len())];
        }
        let body = json!({
            "research_problem_score": scores[0],
            "method_approach_score": scores[1],
            "key_findings_score": scores[2],
            "reasoning": format!("{} and {} address related questions", p.a, p.b),
        });
        fx.insert(build_request(OP_CLASSIFY, model, serde_json::to_value(&req).unwrap(), 0), body.to_string())?;
    }
    Ok(fx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIdea {
    pub idea_id: String,
    pub text: String,
    pub graph: GraphPayload,
    pub node_vectors: BTreeMap<String, Vec<f64>>,
    /// Fraction of each node vector drawn from noise rather than the
    /// source cluster center.
    pub mix: f64,
    pub expert_score: f64,
}

/// Ideas derived from cluster centers with increasing amounts of noise.
pub fn ideas(sc: &SyntheticCorpus, n: usize, seed: u64) -> Vec<SyntheticIdea> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape: [(&str, Role); 5] = [("bg", Role::BG), ("rp", Role::RP), ("ri", Role::RI), ("pa", Role::PA), ("co", Role::CO)];
    let edges = [("bg", "rp"), ("rp", "ri"), ("ri", "pa"), ("pa", "co")];
    (0..n)
        .map(|i| {
            let idea_id = format!("idea-{i:02}");
            let mix = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let c = rng.random_range(0..sc.centers.len().max(1));
            let topic = phrase(&mut rng, 3);
            let mut nodes = Vec::new();
            let mut node_vectors = BTreeMap::new();
            for (suffix, role) in shape {
                let id = format!("{idea_id}-{suffix}");
                let center = &sc.centers[c][node_subspace(role).index()];
                let noise = random_vec(&mut rng, sc.config.dim);
                let v: Vec<f64> = center.iter().zip(&noise).map(|(a, b)| (1.0 - mix) * a + mix * b).collect();
                nodes.push(NodePayload { id: id.clone(), role: role.as_str().into(), text: format!("{idea_id} {} step on {topic}", role.as_str()) });
                node_vectors.insert(id, v);
            }
            let graph = GraphPayload {
                nodes,
                edges: edges.iter().map(|(a, b)| EdgePayload { src: format!("{idea_id}-{a}"), dst: format!("{idea_id}-{b}") }).collect(),
            };
            let expert_score = (mix + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
            SyntheticIdea { idea_id, text: format!("Idea {i}: combine {topic} in a new way."), graph, node_vectors, mix, expert_score }
        })
        .collect()
}

/// Graph-extraction and node-embedding responses for the given ideas.
pub fn idea_fixture(ideas: &[SyntheticIdea], model: &str) -> Result<Fixture, ProviderError> {
    let mut fx = Fixture::new();
    for idea in ideas {
        fx.insert(build_request(OP_GRAPH, model, graph_payload(&idea.text), 0), serde_json::to_string(&idea.graph).unwrap())?;
        for node in &idea.graph.nodes {
            let role: Role = node.role.parse().expect("generated roles are valid");
            let body = json!({ "vector": idea.node_vectors[&node.id] });
            fx.insert(build_request(OP_EMBED, model, embed_payload(&node.text, node_subspace(role)), 0), body.to_string())?;
        }
    }
    Ok(fx)
}

/// Merges fixtures; later entries with an existing digest are ignored.
pub fn merge_fixtures(parts: impl IntoIterator<Item = Fixture>) -> Result<Fixture, ProviderError> {
    let mut out = Fixture::new();
    for part in parts {
        for e in part.entries() {
            out.insert(e.request.clone(), e.response.clone())?;
        }
    }
    Ok(out)
}
