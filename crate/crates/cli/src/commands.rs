use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ideaspace::citation::{
    assign_subgraphs, build_citation_graph, build_training_batches, classify_pairs, identify_candidate_pairs, subgraph_records, Negative,
    TrainingExample,
};
use ideaspace::corpus::{corpus_stats, ingest_corpus, write_corpus, CorpusFormat, CorpusHandle};
use ideaspace::eval::{evaluate_novelty, evaluate_retrieval, ExpertScore, GroundTruth, QueryRun, RunResult, POOLED};
use ideaspace::index::{
    build_databases, flatten_embeddings, group_embeddings, load_index, merged_search, read_embedding_records, save_index, search_with,
    Databases, RankedHit, SubspaceVectors,
};
use ideaspace::kernel::{batch_loss, cosine, margin_statistics, EmbeddingVector, LossInputs};
use ideaspace::novelty::{assess as assess_idea, NoveltyReport};
use ideaspace::par::{map_slice, Execution};
use ideaspace::provider::{NoNetwork, ProviderClient, ProviderMode, Transport};
use ideaspace::{DbKind, Dimension};

use crate::config::RunConfig;
use crate::output::{emit, read_json, read_records, table, write_json, JsonlWriter};

pub struct Context {
    pub cfg: RunConfig,
    pub pretty: bool,
    pub exec: Execution,
}

impl Context {
    pub fn new(cfg: RunConfig, pretty: bool) -> Result<Self> {
        let exec = match cfg.jobs {
            Some(1) => Execution::Sequential,
            _ => Execution::Parallel,
        };
        #[cfg(feature = "parallel")]
        if let Some(n) = cfg.jobs {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
        }
        Ok(Context { cfg, pretty, exec })
    }

    fn corpus_path(&self) -> Result<&Path> {
        self.cfg.corpus.as_deref().ok_or_else(|| anyhow!("no corpus given (use --corpus or `corpus` in the config)"))
    }

    fn index_path(&self) -> Result<&Path> {
        self.cfg.index.as_deref().ok_or_else(|| anyhow!("no index directory given (use --index or `index` in the config)"))
    }

    /// Stage-specific seed derived from the master seed.
    fn stage_seed(&self, stage: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in stage.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
        let mut z = self.cfg.seed ^ h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn load_corpus(&self, path: &Path) -> Result<CorpusHandle> {
        let report = ingest_corpus(path, CorpusFormat::LinesOfRecords)?;
        for d in &report.skipped {
            eprintln!("warning: {}: skipped {d}", path.display());
        }
        Ok(report.handle)
    }

    fn client(&self) -> Result<ProviderClient> {
        let transport: Box<dyn Transport> = match self.cfg.provider.mode {
            ProviderMode::Replay => Box::new(NoNetwork::new()),
            ProviderMode::Live | ProviderMode::Record => live_transport(&self.cfg)?,
        };
        Ok(ProviderClient::new(self.cfg.provider.clone(), transport)?)
    }
}

#[cfg(feature = "http")]
fn live_transport(cfg: &RunConfig) -> Result<Box<dyn Transport>> {
    Ok(Box::new(ideaspace::provider::HttpTransport::new(cfg.provider.timeout())))
}

#[cfg(not(feature = "http"))]
fn live_transport(_cfg: &RunConfig) -> Result<Box<dyn Transport>> {
    bail!("live and record provider modes need a build with the `http` feature")
}

pub fn ingest(ctx: &Context, output: Option<&Path>) -> Result<()> {
    let path = ctx.corpus_path()?;
    let report = ingest_corpus(path, CorpusFormat::LinesOfRecords)?;
    for d in &report.skipped {
        eprintln!("warning: {}: skipped {d}", path.display());
    }
    if let Some(out) = output {
        let mut w = JsonlWriter::create(out, "ingest", &ctx.cfg)?;
        write_corpus(&report.handle, w.inner())?;
        w.finish()?;
    }
    let stats = corpus_stats(&report.handle);
    if ctx.pretty {
        let (lo, hi) = stats.year_range.unwrap_or((0, 0));
        println!(
            "{}",
            table(
                &["papers", "skipped", "years", "problem", "method", "findings"],
                &[vec![
                    stats.paper_count.to_string(),
                    report.skipped.len().to_string(),
                    format!("{lo}-{hi}"),
                    format!("{:.3}", stats.coverage.problem),
                    format!("{:.3}", stats.coverage.method),
                    format!("{:.3}", stats.coverage.findings),
                ]]
            )
        );
    } else {
        emit(&json!({ "command": "ingest", "skipped": report.skipped.len(), "stats": stats }))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BatchRecord<'a> {
    batch: usize,
    #[serde(flatten)]
    example: &'a TrainingExample,
}

#[derive(Deserialize)]
struct BatchLine {
    anchor: String,
    positives: Vec<String>,
    negatives: Vec<Negative>,
}

pub fn mine_pairs(ctx: &Context, out_dir: &Path) -> Result<()> {
    let cfg = &ctx.cfg;
    let corpus = ctx.load_corpus(ctx.corpus_path()?)?;
    let g = build_citation_graph(&corpus);
    let pairs = identify_candidate_pairs(&g, &corpus, &cfg.mining.thresholds(), ctx.exec)?;
    let client = ctx.client()?;
    let classification = classify_pairs(&client, &pairs, &corpus, &g, ctx.exec);
    client.flush()?;
    for w in &classification.warnings {
        eprintln!("warning: {w}");
    }
    for f in &classification.failures {
        eprintln!("warning: classification failed for {}/{}: {}", f.a, f.b, f.error);
    }
    if !pairs.is_empty() && classification.scored.is_empty() {
        bail!("all {} classifications failed; first error: {}", pairs.len(), classification.failures[0].error);
    }
    let sg = assign_subgraphs(&classification.scored, cfg.mining.accept_threshold);

    let mut w = JsonlWriter::create(&out_dir.join("candidates.jsonl"), "mine-pairs", cfg)?;
    for p in &pairs {
        w.write(p)?;
    }
    w.finish()?;
    let mut w = JsonlWriter::create(&out_dir.join("scored.jsonl"), "mine-pairs", cfg)?;
    for s in classification.scored_pairs() {
        w.write(&s)?;
    }
    w.finish()?;
    let mut w = JsonlWriter::create(&out_dir.join("failures.jsonl"), "mine-pairs", cfg)?;
    for f in &classification.failures {
        w.write(f)?;
    }
    w.finish()?;
    let mut w = JsonlWriter::create(&out_dir.join("subgraphs.jsonl"), "mine-pairs", cfg)?;
    for r in subgraph_records(&sg) {
        w.write(&r)?;
    }
    w.finish()?;

    let mut per_dim = BTreeMap::new();
    for dim in Dimension::ALL {
        let set = build_training_batches(sg.get(dim), dim, &corpus, &g, Some(&classification.scored), &cfg.batch_config(), ctx.stage_seed(&format!("batches/{dim}")));
        let mut w = JsonlWriter::create(&out_dir.join(format!("batches-{dim}.jsonl")), "mine-pairs", cfg)?;
        for (i, batch) in set.batches.iter().enumerate() {
            for example in batch {
                w.write(&BatchRecord { batch: i, example })?;
            }
        }
        let examples = w.finish()?;
        per_dim.insert(
            dim.as_str(),
            json!({
                "pairs": sg.get(dim).len(),
                "batches": set.batches.len(),
                "examples": examples,
                "dropped_anchors": set.dropped_anchors,
                "shortfalls": set.shortfalls,
            }),
        );
    }
    let summary = json!({
        "papers": corpus.len(),
        "citation_edges": g.edge_count(),
        "dangling_references": g.dangling_count(),
        "candidates": pairs.len(),
        "scored": classification.scored.len(),
        "failures": classification.failures.len(),
        "grid_warnings": classification.warnings.len(),
        "irrelevant": sg.irrelevant_pairs.len(),
        "dimensions": per_dim,
    });
    write_json(&out_dir.join("summary.json"), "mine-pairs", cfg, &summary)?;
    if ctx.pretty {
        let rows = Dimension::ALL
            .iter()
            .map(|d| {
                let v = &summary["dimensions"][d.as_str()];
                vec![d.to_string(), v["pairs"].to_string(), v["examples"].to_string(), v["dropped_anchors"].to_string(), v["shortfalls"].to_string()]
            })
            .collect::<Vec<_>>();
        println!("candidates {}  scored {}  failures {}", pairs.len(), classification.scored.len(), classification.failures.len());
        println!("{}", table(&["dimension", "pairs", "examples", "dropped", "shortfalls"], &rows));
    } else {
        emit(&json!({ "command": "mine-pairs", "summary": summary }))?;
    }
    Ok(())
}

pub fn import_embeddings(ctx: &Context, input: &Path, output: &Path) -> Result<()> {
    let f = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let records = read_embedding_records(BufReader::new(f))?;
    let vectors = group_embeddings(records)?;
    let mut missing = BTreeMap::new();
    if let Some(path) = ctx.cfg.corpus.as_deref() {
        let corpus = ctx.load_corpus(path)?;
        let unknown: Vec<&str> = vectors.iter().map(|v| v.paper_id.as_str()).filter(|id| !corpus.contains(id)).collect();
        if !unknown.is_empty() {
            bail!("{} embedded paper(s) are not in the corpus, e.g. `{}`", unknown.len(), unknown[0]);
        }
        let by_id: BTreeMap<&str, &SubspaceVectors> = vectors.iter().map(|v| (v.paper_id.as_str(), v)).collect();
        for dim in Dimension::ALL {
            let n = corpus.iter().filter(|p| by_id.get(p.paper_id.as_str()).is_none_or(|v| v.get(dim).is_none())).count();
            missing.insert(dim.as_str(), n);
        }
    }
    let flat = flatten_embeddings(&vectors);
    let mut w = JsonlWriter::create(output, "import-embeddings", &ctx.cfg)?;
    for r in &flat {
        w.write(r)?;
    }
    w.finish()?;
    let counts: BTreeMap<&str, usize> = Dimension::ALL.iter().map(|d| (d.as_str(), vectors.iter().filter(|v| v.get(*d).is_some()).count())).collect();
    let dim = flat.first().map_or(0, |r| r.vector.dim());
    if ctx.pretty {
        println!("papers {}  dimension {dim}", vectors.len());
        println!("{}", table(&["subspace", "vectors"], &counts.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect::<Vec<_>>()));
    } else {
        emit(&json!({ "command": "import-embeddings", "papers": vectors.len(), "dim": dim, "vectors": counts, "missing_in_corpus": missing }))?;
    }
    Ok(())
}

pub fn build_index(ctx: &Context, embeddings: &Path) -> Result<()> {
    let dir = ctx.index_path()?;
    let f = std::fs::File::open(embeddings).with_context(|| format!("opening {}", embeddings.display()))?;
    let vectors = group_embeddings(read_embedding_records(BufReader::new(f))?)?;
    let dbs = build_databases(&vectors, ctx.exec)?;
    save_index(&dbs, dir)?;
    let counts: BTreeMap<&str, usize> = dbs.all().iter().map(|d| (d.kind().as_str(), d.len())).collect();
    let manifest = json!({ "dim": dbs.dim(), "counts": counts });
    write_json(&dir.join("manifest.json"), "build-index", &ctx.cfg, &manifest)?;
    if ctx.pretty {
        println!("dimension {}", dbs.dim());
        println!("{}", table(&["database", "rows"], &counts.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect::<Vec<_>>()));
    } else {
        emit(&json!({ "command": "build-index", "manifest": manifest }))?;
    }
    Ok(())
}

pub struct SearchRequest<'a> {
    pub db: &'a str,
    pub query_id: Option<&'a str>,
    pub query_ids: Option<&'a Path>,
    pub include_self: bool,
    pub out: Option<&'a Path>,
}

fn query_vectors(dbs: &Databases, id: &str) -> Result<SubspaceVectors> {
    let mut sv = SubspaceVectors::new(id);
    for dim in Dimension::ALL {
        if let Some(v) = dbs.node(dim).vector(id) {
            sv = sv.with(dim, EmbeddingVector::new(v)?);
        }
    }
    Ok(sv)
}

fn search_one(ctx: &Context, dbs: &Databases, list: &str, id: &str, k: usize, include_self: bool) -> Result<Vec<RankedHit>> {
    let exclude = (!include_self).then_some(id);
    if list == POOLED {
        let sv = query_vectors(dbs, id)?;
        return Ok(merged_search(dbs, &sv, k, ctx.cfg.retrieval.pooling, exclude)?);
    }
    let kind: DbKind = list.parse().map_err(|e| anyhow!("{e}"))?;
    let db = dbs.get(kind);
    let q = db.vector(id).ok_or_else(|| anyhow!("query `{id}` is not in the {kind} database"))?;
    Ok(search_with(db, &q, k, exclude, Execution::Sequential)?)
}

pub fn search(ctx: &Context, req: &SearchRequest) -> Result<()> {
    let dbs = load_index(ctx.index_path()?)?;
    let k = *ctx.cfg.retrieval.ks.iter().max().expect("validated non-empty");
    if req.db != POOLED && req.db.parse::<DbKind>().is_err() {
        bail!("unknown database `{}` (expected problem, method, findings, p2m, m2k or pooled)", req.db);
    }
    if let Some(id) = req.query_id {
        let hits = search_one(ctx, &dbs, req.db, id, k, req.include_self)?;
        if let Some(out) = req.out {
            let mut w = JsonlWriter::create(out, "search", &ctx.cfg)?;
            for h in &hits {
                w.write(h)?;
            }
            w.finish()?;
        }
        if ctx.pretty {
            let rows: Vec<Vec<String>> = hits.iter().map(|h| vec![h.rank.to_string(), h.paper_id.clone(), format!("{:.6}", h.similarity), h.source.to_string()]).collect();
            println!("{}", table(&["rank", "paper_id", "similarity", "source"], &rows));
        } else {
            for h in &hits {
                emit(h)?;
            }
        }
        return Ok(());
    }
    let Some(list_path) = req.query_ids else { bail!("give --query-id or --query-ids") };
    let out = req.out.ok_or_else(|| anyhow!("--query-ids needs --out"))?;
    let text = std::fs::read_to_string(list_path).with_context(|| format!("reading {}", list_path.display()))?;
    let ids: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    let lists: Vec<&str> = DbKind::ALL.iter().map(|k| k.as_str()).chain([POOLED]).collect();
    let runs = map_slice(&ids, ctx.exec, |id| -> Result<QueryRun> {
        let mut out = BTreeMap::new();
        for list in &lists {
            match search_one(ctx, &dbs, list, id, k, req.include_self) {
                Ok(hits) => {
                    out.insert(list.to_string(), hits.into_iter().map(|h| h.paper_id).collect());
                }
                Err(e) => log::warn!("query `{id}` skipped for {list}: {e}"),
            }
        }
        Ok(QueryRun { query_id: id.clone(), lists: out })
    });
    let run = RunResult { config: serde_json::to_value(&ctx.cfg)?, queries: runs.into_iter().collect::<Result<_>>()? };
    write_json(out, "search", &ctx.cfg, &run)?;
    if ctx.pretty {
        println!("{} queries, depth {k}, written to {}", run.queries.len(), out.display());
    } else {
        emit(&json!({ "command": "search", "queries": run.queries.len(), "k": k, "lists": lists }))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct IdeaRecord {
    idea_id: String,
    text: String,
}

#[derive(Serialize)]
struct AssessRecord<'a> {
    idea_id: &'a str,
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    graph: Option<&'a ideaspace::graph::ReasoningGraph>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a NoveltyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn assess(ctx: &Context, idea: Option<&str>, ideas: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let dbs = load_index(ctx.index_path()?)?;
    let items: Vec<IdeaRecord> = match (idea, ideas) {
        (Some(text), _) => vec![IdeaRecord { idea_id: "idea".into(), text: text.into() }],
        (None, Some(path)) => read_records(path)?,
        (None, None) => bail!("give --idea or --ideas"),
    };
    let titles: BTreeMap<String, String> = match ctx.cfg.corpus.as_deref() {
        Some(p) if ctx.pretty => ctx.load_corpus(p)?.iter().map(|r| (r.paper_id.clone(), r.title.clone())).collect(),
        _ => BTreeMap::new(),
    };
    let client = ctx.client()?;
    let results: Vec<_> = items.iter().map(|it| assess_idea(&it.text, &dbs, &client, &ctx.cfg.novelty, ctx.exec)).collect();
    client.flush()?;
    let mut writer = out.map(|p| JsonlWriter::create(p, "assess", &ctx.cfg)).transpose()?;
    let mut failed = 0;
    for (it, r) in items.iter().zip(&results) {
        let rec = match r {
            Ok((g, rep)) => AssessRecord { idea_id: &it.idea_id, score: Some(rep.score), graph: Some(g), report: Some(rep), error: None },
            Err(e) => {
                failed += 1;
                eprintln!("error: idea `{}`: {e}", it.idea_id);
                AssessRecord { idea_id: &it.idea_id, score: None, graph: None, report: None, error: Some(e.to_string()) }
            }
        };
        if let Some(w) = writer.as_mut() {
            w.write(&rec)?;
        }
        if let Some(rep) = rec.report {
            for w in &rep.warnings {
                eprintln!("warning: idea `{}`: {w}", it.idea_id);
            }
        }
        if ctx.pretty {
            print_report(&it.idea_id, rec.report, &titles);
        } else {
            emit(&json!({ "idea_id": it.idea_id, "score": rec.score, "nodes": rec.report.map(|r| r.per_node.len()), "warnings": rec.report.map_or(0, |r| r.warnings.len()), "error": rec.error }))?;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    if failed > 0 {
        bail!("{failed} of {} idea(s) could not be assessed", items.len());
    }
    Ok(())
}

fn print_report(idea_id: &str, report: Option<&NoveltyReport>, titles: &BTreeMap<String, String>) {
    let Some(rep) = report else { return };
    println!("{idea_id}: novelty {:.4}", rep.score);
    let rows: Vec<Vec<String>> = rep
        .per_node
        .iter()
        .map(|n| {
            let top = n.evidence.iter().take(3).map(|e| titles.get(&e.paper_id).cloned().unwrap_or_else(|| e.paper_id.clone())).collect::<Vec<_>>().join("; ");
            vec![n.node_id.clone(), n.role.to_string(), format!("{:.4}", n.s_v), format!("{:.4}", n.rescaled_weight), top]
        })
        .collect();
    println!("{}\n", table(&["node", "role", "s_v", "weight", "top evidence"], &rows));
}

#[derive(Deserialize)]
struct PredictedScore {
    idea_id: String,
    score: Option<f64>,
}

pub fn evaluate(ctx: &Context, retrieval: Option<(&Path, &Path)>, novelty: Option<(&Path, &Path)>, out: Option<&Path>) -> Result<()> {
    if retrieval.is_none() && novelty.is_none() {
        bail!("nothing to evaluate: give --run/--gt and/or --predicted/--expert");
    }
    let mut result = serde_json::Map::new();
    if let Some((run_path, gt_path)) = retrieval {
        let doc = read_json(run_path)?;
        let run: RunResult = serde_json::from_value(doc.get("result").cloned().unwrap_or(doc)).context("run file")?;
        let f = std::fs::File::open(gt_path).with_context(|| format!("opening {}", gt_path.display()))?;
        let gt = GroundTruth::read(BufReader::new(f))?;
        let report = evaluate_retrieval(&run, &gt, &ctx.cfg.retrieval.ks, ctx.cfg.retrieval.pooled_k_multiplier)?;
        for d in &report.diagnostics {
            log::info!("{d}");
        }
        if ctx.pretty {
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .flat_map(|r| {
                    r.metrics.iter().map(move |m| {
                        vec![r.list.clone(), m.k.to_string(), m.effective_k.to_string(), format!("{:.4}", m.recall), format!("{:.4}", m.ndcg), format!("{:.4}", m.hit_rate), r.included.to_string()]
                    })
                })
                .collect();
            println!("{}", table(&["list", "K", "cutoff", "recall", "ndcg", "hit_rate", "queries"], &rows));
        } else {
            for r in &report.rows {
                emit(&json!({ "command": "evaluate", "list": r.list, "included": r.included, "excluded": r.excluded, "metrics": r.metrics }))?;
            }
        }
        result.insert("retrieval".into(), serde_json::to_value(&report)?);
    }
    if let Some((pred_path, expert_path)) = novelty {
        let predicted: BTreeMap<String, f64> = read_records::<PredictedScore>(pred_path)?.into_iter().filter_map(|p| p.score.map(|s| (p.idea_id, s))).collect();
        let expert: BTreeMap<String, f64> = read_records::<ExpertScore>(expert_path)?.into_iter().map(|e| (e.idea_id, e.expert_score)).collect();
        let corr = evaluate_novelty(&predicted, &expert)?;
        if ctx.pretty {
            println!(
                "{}",
                table(
                    &["statistic", "coefficient", "p_value", "n"],
                    &[
                        vec!["pearson".into(), format!("{:.4}", corr.pearson.coefficient), format!("{:.4}", corr.pearson.p_value), corr.n.to_string()],
                        vec!["spearman".into(), format!("{:.4}", corr.spearman.coefficient), format!("{:.4}", corr.spearman.p_value), corr.n.to_string()],
                    ]
                )
            );
        } else {
            emit(&json!({ "command": "evaluate", "novelty": corr }))?;
        }
        result.insert("novelty".into(), serde_json::to_value(&corr)?);
    }
    if let Some(out) = out {
        write_json(out, "evaluate", &ctx.cfg, &Value::Object(result))?;
    }
    Ok(())
}

pub fn margin_stats(ctx: &Context, mined: &Path, out: Option<&Path>) -> Result<()> {
    let dbs = load_index(ctx.index_path()?)?;
    let loss_cfg = ctx.cfg.loss_config();
    let mut rows = Vec::new();
    for dim in Dimension::ALL {
        let path = mined.join(format!("batches-{dim}.jsonl"));
        let lines: Vec<BatchLine> = read_records(&path)?;
        let db = dbs.node(dim);
        let fetch = |id: &str| db.vector(id).map(|v| EmbeddingVector::new(v).expect("stored rows are finite"));
        let (mut pos, mut neg, mut inputs, mut skipped) = (Vec::new(), Vec::new(), Vec::new(), 0usize);
        for l in &lines {
            let a = fetch(&l.anchor);
            let ps: Option<Vec<EmbeddingVector>> = l.positives.iter().map(|p| fetch(p)).collect();
            let ns: Option<Vec<EmbeddingVector>> = l.negatives.iter().map(|n| fetch(&n.paper_id)).collect();
            let (Some(a), Some(ps), Some(ns)) = (a, ps, ns) else {
                skipped += 1;
                continue;
            };
            for p in &ps {
                pos.push(cosine(a.as_slice(), p.as_slice())?);
            }
            for n in &ns {
                neg.push(cosine(a.as_slice(), n.as_slice())?);
            }
            inputs.push(LossInputs { anchor: a, positives: ps, negatives: ns, config: loss_cfg });
        }
        if skipped > 0 {
            eprintln!("warning: {dim}: {skipped} example(s) reference papers missing from the index");
        }
        let stats = margin_statistics(&pos, &neg).ok();
        let mean_loss = if inputs.is_empty() { None } else { Some(batch_loss(&inputs, ctx.exec)?) };
        if stats.is_none() {
            eprintln!("warning: {dim}: not enough positive/negative pairs for a margin");
        }
        rows.push(json!({
            "dimension": dim,
            "examples": inputs.len(),
            "positive_pairs": pos.len(),
            "negative_pairs": neg.len(),
            "pos_mean": stats.map(|s| s.pos_mean),
            "neg_mean": stats.map(|s| s.neg_mean),
            "margin": stats.map(|s| s.margin),
            "mean_loss": mean_loss,
        }));
    }
    if let Some(out) = out {
        write_json(out, "margin-stats", &ctx.cfg, &rows)?;
    }
    if ctx.pretty {
        let fmt = |v: &Value| v.as_f64().map_or("-".to_string(), |x| format!("{x:.4}"));
        let table_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r["dimension"].as_str().unwrap_or("").to_string(), r["examples"].to_string(), fmt(&r["pos_mean"]), fmt(&r["neg_mean"]), fmt(&r["margin"]), fmt(&r["mean_loss"])])
            .collect();
        println!("{}", table(&["dimension", "examples", "pos_mean", "neg_mean", "margin", "loss"], &table_rows));
    } else {
        for r in &rows {
            emit(&json!({ "command": "margin-stats", "row": r }))?;
        }
    }
    Ok(())
}

fn artifact_content(path: &Path) -> Result<Value> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    if !is_jsonl {
        return read_json(path);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut header = Value::Null;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if ideaspace::is_header_line(line) {
            header = v[ideaspace::HEADER_KEY].clone();
        } else {
            records.push(v);
        }
    }
    Ok(json!({ "provenance": header, "records": records }))
}

fn markdown(doc: &Value) -> String {
    let mut s = String::from("# ideaspace report\n");
    for section in doc["sections"].as_array().into_iter().flatten() {
        s.push_str(&format!("\n## {}\n\n", section["source"].as_str().unwrap_or("?")));
        let content = &section["content"];
        let command = content["command"].as_str().or(content["provenance"]["command"].as_str()).unwrap_or("");
        match command {
            "evaluate" => {
                for row in content["result"]["retrieval"]["rows"].as_array().into_iter().flatten() {
                    for m in row["metrics"].as_array().into_iter().flatten() {
                        s.push_str(&format!(
                            "- {} @{} (cutoff {}): recall {:.4}, ndcg {:.4}, hit rate {:.4}\n",
                            row["list"].as_str().unwrap_or(""),
                            m["k"],
                            m["effective_k"],
                            m["recall"].as_f64().unwrap_or(f64::NAN),
                            m["ndcg"].as_f64().unwrap_or(f64::NAN),
                            m["hit_rate"].as_f64().unwrap_or(f64::NAN),
                        ));
                    }
                }
                if let Some(n) = content["result"].get("novelty") {
                    s.push_str(&format!(
                        "- novelty: pearson {:.4} (p {:.4}), spearman {:.4} (p {:.4}), n = {}\n",
                        n["pearson"]["coefficient"].as_f64().unwrap_or(f64::NAN),
                        n["pearson"]["p_value"].as_f64().unwrap_or(f64::NAN),
                        n["spearman"]["coefficient"].as_f64().unwrap_or(f64::NAN),
                        n["spearman"]["p_value"].as_f64().unwrap_or(f64::NAN),
                        n["n"],
                    ));
                }
            }
            "margin-stats" => {
                for r in content["result"].as_array().into_iter().flatten() {
                    s.push_str(&format!("- {}: margin {}, mean loss {}\n", r["dimension"].as_str().unwrap_or(""), r["margin"], r["mean_loss"]));
                }
            }
            _ => {
                s.push_str("```json\n");
                s.push_str(&serde_json::to_string_pretty(content.get("result").unwrap_or(content)).unwrap_or_default());
                s.push_str("\n```\n");
            }
        }
    }
    s
}

pub fn export_report(ctx: &Context, inputs: &[PathBuf], out: &Path, as_markdown: bool) -> Result<()> {
    let mut sections = Vec::new();
    for p in inputs {
        sections.push(json!({ "source": p.display().to_string(), "content": artifact_content(p)? }));
    }
    let doc = json!({ "sections": sections });
    if as_markdown {
        let mut f = crate::output::create(out)?;
        std::io::Write::write_all(&mut f, markdown(&doc).as_bytes())?;
        std::io::Write::flush(&mut f)?;
    } else {
        write_json(out, "export-report", &ctx.cfg, &doc)?;
    }
    if ctx.pretty {
        println!("report with {} section(s) written to {}", inputs.len(), out.display());
    } else {
        emit(&json!({ "command": "export-report", "sections": inputs.len(), "out": out.display().to_string() }))?;
    }
    Ok(())
}
