//! Typed reasoning graphs for research ideas.
//!
//! Nodes carry one of five argumentative roles; edges are directed logical
//! dependencies. The wire/export shape is
//! `{"nodes":[{"id","type","text"}], "edges":[{"src","dst"}]}`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{GraphExtractor, ProviderError};
use crate::subspace::Dimension;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Background context: established facts.
    BG,
    /// Research problem: the limitation being addressed.
    RP,
    /// Reasoning insight: intermediate reasoning step.
    RI,
    /// Proposed approach: concrete methodology.
    PA,
    /// Intended contribution: expected outcome.
    CO,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::BG, Role::RP, Role::RI, Role::PA, Role::CO];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::BG => "BG",
            Role::RP => "RP",
            Role::RI => "RI",
            Role::PA => "PA",
            Role::CO => "CO",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// Sub-space whose database a node is matched against.
pub fn node_subspace(role: Role) -> Dimension {
    match role {
        Role::BG | Role::RP => Dimension::Problem,
        Role::RI | Role::PA => Dimension::Method,
        Role::CO => Dimension::Findings,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePayload {
    pub id: String,
    #[serde(rename = "type")]
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgePayload {
    pub src: String,
    pub dst: String,
}

/// Unvalidated graph as exchanged with the extraction provider.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphPayload {
    pub nodes: Vec<NodePayload>,
    #[serde(default)]
    pub edges: Vec<EdgePayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: String) -> Self {
        Diagnostic { severity: Severity::Error, message }
    }

    fn warning(message: String) -> Self {
        Diagnostic { severity: Severity::Warning, message }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid reasoning graph: {}", .0.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<Diagnostic>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("idea text is empty")]
    EmptyIdea,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaNode {
    pub node_id: String,
    pub role: Role,
    pub text: String,
}

/// A validated reasoning graph. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningGraph {
    nodes: Vec<IdeaNode>,
    edges: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

/// Errors and warnings for a payload. Errors: empty node set, duplicate
/// ids, unknown roles, empty text, dangling edges, self-loops, duplicate
/// edges. Warnings: disconnected components, no PA node.
pub fn validate_payload(p: &GraphPayload) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if p.nodes.is_empty() {
        out.push(Diagnostic::error("graph has no nodes".into()));
        return out;
    }
    let mut ids = HashSet::new();
    for n in &p.nodes {
        if !ids.insert(n.id.as_str()) {
            out.push(Diagnostic::error(format!("duplicate node id `{}`", n.id)));
        }
        if n.role.parse::<Role>().is_err() {
            out.push(Diagnostic::error(format!("node `{}`: unknown role `{}`", n.id, n.role)));
        }
        if n.text.trim().is_empty() {
            out.push(Diagnostic::error(format!("node `{}`: empty text", n.id)));
        }
    }
    let mut seen_edges = HashSet::new();
    for e in &p.edges {
        for end in [&e.src, &e.dst] {
            if !ids.contains(end.as_str()) {
                out.push(Diagnostic::error(format!("dangling edge {} -> {}: node `{end}` does not exist", e.src, e.dst)));
            }
        }
        if e.src == e.dst {
            out.push(Diagnostic::error(format!("self-loop on node `{}`", e.src)));
        }
        if !seen_edges.insert((&e.src, &e.dst)) {
            out.push(Diagnostic::error(format!("duplicate edge {} -> {}", e.src, e.dst)));
        }
    }
    if out.iter().any(Diagnostic::is_error) {
        return out;
    }
    if !p.nodes.iter().any(|n| n.role == "PA") {
        out.push(Diagnostic::warning("graph has no PA (proposed approach) node".into()));
    }
    let components = count_components(p);
    if components > 1 {
        out.push(Diagnostic::warning(format!("graph is disconnected ({components} components)")));
    }
    out
}

fn count_components(p: &GraphPayload) -> usize {
    let pos: HashMap<&str, usize> = p.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..p.nodes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &p.edges {
        let (a, b) = (find(&mut parent, pos[e.src.as_str()]), find(&mut parent, pos[e.dst.as_str()]));
        parent[a] = b;
    }
    (0..p.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
}

impl ReasoningGraph {
    pub fn from_payload(p: &GraphPayload) -> Result<Self, GraphError> {
        let diags = validate_payload(p);
        let errors: Vec<Diagnostic> = diags.into_iter().filter(Diagnostic::is_error).collect();
        if !errors.is_empty() {
            return Err(GraphError::Schema(errors));
        }
        let nodes: Vec<IdeaNode> = p
            .nodes
            .iter()
            .map(|n| IdeaNode { node_id: n.id.clone(), role: n.role.parse().expect("validated"), text: n.text.clone() })
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.node_id.clone(), i)).collect();
        let edges = p.edges.iter().map(|e| (e.src.clone(), e.dst.clone())).collect();
        Ok(ReasoningGraph { nodes, edges, index })
    }

    pub fn new(nodes: Vec<IdeaNode>, edges: Vec<(String, String)>) -> Result<Self, GraphError> {
        let payload = GraphPayload {
            nodes: nodes.into_iter().map(|n| NodePayload { id: n.node_id, role: n.role.as_str().into(), text: n.text }).collect(),
            edges: edges.into_iter().map(|(src, dst)| EdgePayload { src, dst }).collect(),
        };
        Self::from_payload(&payload)
    }

    pub fn to_payload(&self) -> GraphPayload {
        GraphPayload {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodePayload { id: n.node_id.clone(), role: n.role.as_str().into(), text: n.text.clone() })
                .collect(),
            edges: self.edges.iter().map(|(s, d)| EdgePayload { src: s.clone(), dst: d.clone() }).collect(),
        }
    }

    pub fn nodes(&self) -> &[IdeaNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, id: &str) -> Result<usize, GraphError> {
        self.index.get(id).copied().ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn node(&self, id: &str) -> Result<&IdeaNode, GraphError> {
        Ok(&self.nodes[self.node_index(id)?])
    }

    /// Distinct neighbors of each node, ignoring edge direction.
    pub fn undirected_adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for (s, d) in &self.edges {
            let (a, b) = (self.index[s], self.index[d]);
            adj[a].insert(b);
            adj[b].insert(a);
        }
        adj
    }

    /// Successors of each node along edge direction.
    pub fn directed_adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for (s, d) in &self.edges {
            adj[self.index[s]].insert(self.index[d]);
        }
        adj
    }
}

impl Serialize for ReasoningGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_payload().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReasoningGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let p = GraphPayload::deserialize(d)?;
        ReasoningGraph::from_payload(&p).map_err(serde::de::Error::custom)
    }
}

pub fn validate_graph(g: &ReasoningGraph) -> Vec<Diagnostic> {
    validate_payload(&g.to_payload())
}

/// Requests a graph from the extraction provider; one re-request on an
/// invalid payload, then the validation error is returned.
pub fn extract_graph(client: &dyn GraphExtractor, idea_text: &str) -> Result<ReasoningGraph, GraphError> {
    if idea_text.trim().is_empty() {
        return Err(GraphError::EmptyIdea);
    }
    let first = match client.extract_reasoning_graph(idea_text, 0) {
        Ok(p) => ReasoningGraph::from_payload(&p),
        Err(e @ (ProviderError::Parse { .. } | ProviderError::Schema(_))) => Err(GraphError::Provider(e)),
        Err(e) => return Err(e.into()),
    };
    let err = match first {
        Ok(g) => return Ok(g),
        Err(e) => e,
    };
    log::warn!("reasoning graph rejected ({err}); re-requesting once");
    match client.extract_reasoning_graph(idea_text, 1) {
        Ok(p) => ReasoningGraph::from_payload(&p),
        Err(ProviderError::FixtureMiss { .. }) => Err(err),
        Err(e) => Err(e.into()),
    }
}
