//! Retrieval metrics and novelty correlation against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::subspace::DbKind;

pub const POOLED: &str = "pooled";
pub const NDCG_CONVENTION: &str = "binary gain, discount 1/log2(rank+1)";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("relevant set is empty")]
    EmptyRelevant,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("only {0} ideas overlap between predicted and expert scores (need 3)")]
    InsufficientOverlap(usize),
    #[error("query `{query}`: {message}")]
    InvalidRecord { query: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn check(relevant: &BTreeSet<String>, k: usize) -> Result<(), EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevant);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    Ok(())
}

/// Fraction of the relevant set found in the top `k`.
pub fn recall_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    check(relevant, k)?;
    let found = ranked.iter().take(k).filter(|id| relevant.contains(*id)).count();
    Ok(found as f64 / relevant.len() as f64)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain NDCG at `k`.
pub fn ndcg_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    check(relevant, k)?;
    let dcg: f64 = ranked.iter().take(k).enumerate().filter(|(_, id)| relevant.contains(*id)).map(|(i, _)| discount(i + 1)).sum();
    let ideal: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Ok(dcg / ideal)
}

/// 1 if anything relevant appears in the top `k`, else 0.
pub fn hit_rate_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    check(relevant, k)?;
    Ok(if ranked.iter().take(k).any(|id| relevant.contains(id)) { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

fn p_value(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn validate_pair(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(EvalError::TooFew(xs.len()));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("xs"));
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("ys"));
    }
    Ok(())
}

fn product_moment(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(EvalError::ZeroVariance("ys"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation, EvalError> {
    validate_pair(xs, ys)?;
    let r = product_moment(xs, ys)?;
    Ok(Correlation { coefficient: r, p_value: p_value(r, xs.len()), n: xs.len() })
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation, EvalError> {
    validate_pair(xs, ys)?;
    let r = product_moment(&average_ranks(xs), &average_ranks(ys))?;
    Ok(Correlation { coefficient: r, p_value: p_value(r, xs.len()), n: xs.len() })
}

/// Relevant ids per database for one query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryTruth {
    pub query_id: String,
    #[serde(default)]
    pub problem: BTreeSet<String>,
    #[serde(default)]
    pub method: BTreeSet<String>,
    #[serde(default)]
    pub findings: BTreeSet<String>,
    #[serde(default)]
    pub p2m: BTreeSet<String>,
    #[serde(default)]
    pub m2k: BTreeSet<String>,
}

impl QueryTruth {
    pub fn get(&self, kind: DbKind) -> &BTreeSet<String> {
        match kind {
            DbKind::Problem => &self.problem,
            DbKind::Method => &self.method,
            DbKind::Findings => &self.findings,
            DbKind::P2m => &self.p2m,
            DbKind::M2k => &self.m2k,
        }
    }

    /// Relevant set for a run list name (`pooled` is the node-space union).
    pub fn for_list(&self, list: &str) -> Option<BTreeSet<String>> {
        if list == POOLED {
            return Some(self.problem.iter().chain(&self.method).chain(&self.findings).cloned().collect());
        }
        list.parse::<DbKind>().ok().map(|k| self.get(k).clone())
    }

    fn validate(&self) -> Result<(), EvalError> {
        for kind in DbKind::ALL {
            if self.get(kind).contains(&self.query_id) {
                return Err(EvalError::InvalidRecord { query: self.query_id.clone(), message: format!("{kind} relevant set contains the query itself") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub queries: BTreeMap<String, QueryTruth>,
}

impl GroundTruth {
    pub fn from_records(records: impl IntoIterator<Item = QueryTruth>) -> Result<Self, EvalError> {
        let mut queries = BTreeMap::new();
        for r in records {
            r.validate()?;
            let id = r.query_id.clone();
            if queries.insert(id.clone(), r).is_some() {
                return Err(EvalError::InvalidRecord { query: id, message: "duplicate ground-truth record".into() });
            }
        }
        Ok(GroundTruth { queries })
    }

    pub fn read(reader: impl BufRead) -> Result<Self, EvalError> {
        Self::from_records(read_jsonl::<QueryTruth>(reader)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertScore {
    pub idea_id: String,
    pub expert_score: f64,
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || crate::is_header_line(&line) {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

/// Ranked lists for one query, keyed by database name or `pooled`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRun {
    pub query_id: String,
    pub lists: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    #[serde(default)]
    pub config: serde_json::Value,
    pub queries: Vec<QueryRun>,
}

impl RunResult {
    pub fn validate(&self) -> Result<(), EvalError> {
        for q in &self.queries {
            for (name, list) in &q.lists {
                let mut seen = BTreeSet::new();
                if let Some(dup) = list.iter().find(|id| !seen.insert(*id)) {
                    return Err(EvalError::InvalidRecord { query: q.query_id.clone(), message: format!("list `{name}` repeats `{dup}`") });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub effective_k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub list: String,
    pub included: usize,
    pub excluded: usize,
    pub metrics: Vec<MetricsAtK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub convention: String,
    pub pooled_k_multiplier: usize,
    pub rows: Vec<MetricRow>,
    pub diagnostics: Vec<String>,
}

fn list_order(name: &str) -> (usize, &str) {
    let pos = DbKind::ALL.iter().position(|k| k.as_str() == name).unwrap_or(if name == POOLED { 5 } else { 6 });
    (pos, name)
}

/// Per-list, per-K means over queries with a non-empty relevant set.
/// The pooled list is scored at `pooled_multiplier * K`.
pub fn evaluate_retrieval(run: &RunResult, gt: &GroundTruth, ks: &[usize], pooled_multiplier: usize) -> Result<RetrievalReport, EvalError> {
    run.validate()?;
    if ks.contains(&0) || pooled_multiplier == 0 {
        return Err(EvalError::ZeroK);
    }
    let mut by_query: BTreeMap<&str, &QueryRun> = BTreeMap::new();
    for q in &run.queries {
        by_query.insert(&q.query_id, q);
    }
    let mut names: Vec<&str> = run.queries.iter().flat_map(|q| q.lists.keys().map(String::as_str)).collect::<BTreeSet<_>>().into_iter().collect();
    names.sort_by_key(|n| list_order(n));
    let mut diagnostics = Vec::new();
    let mut rows = Vec::new();
    for name in names {
        let mut included: Vec<(&Vec<String>, BTreeSet<String>)> = Vec::new();
        let mut excluded = 0;
        for (qid, q) in &by_query {
            let Some(list) = q.lists.get(name) else { continue };
            match gt.queries.get(*qid).and_then(|t| t.for_list(name)) {
                Some(rel) if !rel.is_empty() => included.push((list, rel)),
                Some(_) => {
                    excluded += 1;
                    diagnostics.push(format!("{name}: query `{qid}` excluded (empty relevant set)"));
                }
                None => {
                    excluded += 1;
                    diagnostics.push(format!("{name}: query `{qid}` excluded (no ground truth)"));
                }
            }
        }
        if included.is_empty() {
            diagnostics.push(format!("{name}: no evaluable queries"));
            continue;
        }
        let mult = if name == POOLED { pooled_multiplier } else { 1 };
        let n = included.len() as f64;
        let mut metrics = Vec::new();
        for &k in ks {
            let ek = k * mult;
            let (mut r, mut d, mut h) = (0.0, 0.0, 0.0);
            for (list, rel) in &included {
                r += recall_at_k(list, rel, ek)?;
                d += ndcg_at_k(list, rel, ek)?;
                h += hit_rate_at_k(list, rel, ek)?;
            }
            metrics.push(MetricsAtK { k, effective_k: ek, recall: r / n, ndcg: d / n, hit_rate: h / n });
        }
        rows.push(MetricRow { list: name.to_string(), included: included.len(), excluded, metrics });
    }
    Ok(RetrievalReport { convention: NDCG_CONVENTION.into(), pooled_k_multiplier: pooled_multiplier, rows, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyCorrelation {
    pub pearson: Correlation,
    pub spearman: Correlation,
    pub n: usize,
    pub missing_predictions: Vec<String>,
}

/// Correlations over ideas scored by both sides.
pub fn evaluate_novelty(predicted: &BTreeMap<String, f64>, expert: &BTreeMap<String, f64>) -> Result<NoveltyCorrelation, EvalError> {
    let common: Vec<&String> = expert.keys().filter(|k| predicted.contains_key(*k)).collect();
    if common.len() < 3 {
        return Err(EvalError::InsufficientOverlap(common.len()));
    }
    let xs: Vec<f64> = common.iter().map(|k| predicted[*k]).collect();
    let ys: Vec<f64> = common.iter().map(|k| expert[*k]).collect();
    Ok(NoveltyCorrelation {
        pearson: pearson(&xs, &ys)?,
        spearman: spearman(&xs, &ys)?,
        n: common.len(),
        missing_predictions: expert.keys().filter(|k| !predicted.contains_key(*k)).cloned().collect(),
    })
}
