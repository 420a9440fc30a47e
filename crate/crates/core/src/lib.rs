//! Decomposed "ideation space" toolkit for scientific papers.
//!
//! Papers live in three conceptual sub-spaces (problem, method, findings)
//! plus two transition spaces (problem→method, method→findings). The crate
//! covers the full offline pipeline around those representations:
//!
//! - [`corpus`]: load, validate and export the paper corpus.
//! - [`citation`]: citation graph, candidate pair mining, sub-graph
//!   assignment and negative sampling for contrastive training.
//! - [`kernel`]: cosine similarity, the hard-negative weighted contrastive
//!   loss with analytic gradients, margin statistics.
//! - [`index`]: per-sub-space databases with exact top-K cosine search.
//! - [`graph`]: typed reasoning graphs for research ideas.
//! - [`novelty`]: centrality-weighted novelty scoring against retrieved
//!   evidence.
//! - [`eval`]: retrieval metrics and correlation meta-evaluation.
//! - [`provider`]: embedding / classification / extraction clients with
//!   recorded-fixture replay.
//! - [`synthetic`]: seeded corpora with planted clusters and matching
//!   fixtures.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod citation;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod index;
pub mod kernel;
pub mod novelty;
pub mod par;
pub mod provider;
pub mod subspace;
pub mod synthetic;

pub use subspace::{DbKind, Dimension};

/// Key of the provenance record that may lead a line-delimited artifact.
pub const HEADER_KEY: &str = "_header";

/// True for a `{"_header": ...}` line; readers skip these.
pub fn is_header_line(line: &str) -> bool {
    line.trim_start().strip_prefix('{').is_some_and(|rest| rest.trim_start().starts_with("\"_header\""))
}
