//! Independent oracles shared by the integration tests and the acceptance
//! harness. Each `check_*` returns a short summary on success.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ideaspace::citation::{
    bibliographic_coupling, build_citation_graph, build_training_batches, co_citation_count, identify_candidate_pairs, pair_key,
    sample_in_batch_negatives, BatchConfig, CandidatePair, MiningThresholds, NegativeKind,
};
use ideaspace::corpus::{CorpusHandle, PaperRecord};
use ideaspace::eval::{hit_rate_at_k, ndcg_at_k, pearson, recall_at_k, spearman};
use ideaspace::graph::{IdeaNode, ReasoningGraph, Role};
use ideaspace::index::{build_databases, merged_search, search, transition_vectors, Database, Databases, PoolingMode, RankedHit, SubspaceVectors};
use ideaspace::kernel::{contrastive_loss, loss_gradient, EmbeddingVector, LossConfig, LossInputs};
use ideaspace::novelty::{betweenness_all, degree_all, importance_weights, novelty_score, rescale_weights, CentralityView};
use ideaspace::par::Execution;
use ideaspace::{DbKind, Dimension};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {took:?} (limit {limit:?})");
    Ok(took)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn ev(v: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector::new(v).unwrap()
}

// ---------------------------------------------------------------------------
// Double-double arithmetic
// ---------------------------------------------------------------------------

/// Unevaluated sum `hi + lo` with roughly 106 bits of precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        Self::renorm(s.hi, s.lo + self.lo + o.lo)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = Self::two_prod(self.hi, o.hi);
        Self::renorm(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::from(q1).add(Dd::from(q2)).add(Dd::from(q3))
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = Dd::from(self.hi.sqrt());
        // one Newton step in double-double
        x.add(self.div(x)).mul(Dd::from(0.5))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

pub fn dd_dot(u: &[f64], v: &[f64]) -> Dd {
    u.iter().zip(v).fold(Dd::ZERO, |acc, (a, b)| acc.add(Dd::from(*a).mul(Dd::from(*b))))
}

pub fn dd_cosine(u: &[f64], v: &[f64]) -> f64 {
    dd_dot(u, v).div(dd_dot(u, u).mul(dd_dot(v, v)).sqrt()).to_f64()
}

/// Pearson coefficient evaluated entirely in double-double.
pub fn dd_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = Dd::from(xs.len() as f64);
    let mx = xs.iter().fold(Dd::ZERO, |a, x| a.add(Dd::from(*x))).div(n);
    let my = ys.iter().fold(Dd::ZERO, |a, y| a.add(Dd::from(*y))).div(n);
    let (mut sxy, mut sxx, mut syy) = (Dd::ZERO, Dd::ZERO, Dd::ZERO);
    for (x, y) in xs.iter().zip(ys) {
        let dx = Dd::from(*x).sub(mx);
        let dy = Dd::from(*y).sub(my);
        sxy = sxy.add(dx.mul(dy));
        sxx = sxx.add(dx.mul(dx));
        syy = syy.add(dy.mul(dy));
    }
    sxy.div(sxx.mul(syy).sqrt()).to_f64()
}

/// Mid-ranks by counting: rank(x) = #{y < x} + (#{y == x} + 1) / 2.
pub fn counting_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Contrastive kernel
// ---------------------------------------------------------------------------

/// Direct evaluation: exponentials without shifting, weights multiplied in
/// rather than added as logs, denominators summed in double-double.
pub fn naive_loss(inputs: &LossInputs) -> f64 {
    let a = inputs.anchor.as_slice();
    let LossConfig { tau, gamma } = inputs.config;
    let pos: Vec<f64> = inputs.positives.iter().map(|p| (dd_cosine(a, p.as_slice()) / tau).exp()).collect();
    let mut den = pos.iter().fold(Dd::ZERO, |acc, e| acc.add(Dd::from(*e)));
    for n in &inputs.negatives {
        let s = dd_cosine(a, n.as_slice());
        let w = ((s + 1.0) / 2.0).powf(gamma).max(1e-12);
        den = den.add(Dd::from(w).mul(Dd::from((s / tau).exp())));
    }
    let total: f64 = pos.iter().map(|e| -(Dd::from(*e).div(den).to_f64()).ln()).sum();
    total / pos.len() as f64
}

pub fn random_inputs(rng: &mut ChaCha8Rng, d: usize, n_pos: usize, n_neg: usize, cfg: LossConfig) -> LossInputs {
    LossInputs {
        anchor: ev(rand_vec(rng, d)),
        positives: (0..n_pos).map(|_| ev(rand_vec(rng, d))).collect(),
        negatives: (0..n_neg).map(|_| ev(rand_vec(rng, d))).collect(),
        config: cfg,
    }
}

fn with_component(inputs: &LossInputs, which: usize, k: usize, value: f64) -> LossInputs {
    let mut out = inputs.clone();
    let n_pos = inputs.positives.len();
    let slot = match which {
        0 => &mut out.anchor,
        i if i <= n_pos => &mut out.positives[i - 1],
        i => &mut out.negatives[i - 1 - n_pos],
    };
    let mut v = slot.as_slice().to_vec();
    v[k] = value;
    *slot = ev(v);
    out
}

/// Relative error `|fd - g| / max(|fd|, |g|)` between `loss_gradient` and
/// central differences, over the concatenated gradient of all vectors.
pub fn finite_difference_error(inputs: &LossInputs, h: f64) -> f64 {
    let g = loss_gradient(inputs).unwrap();
    let analytic: Vec<&Vec<f64>> = std::iter::once(&g.anchor).chain(&g.positives).chain(&g.negatives).collect();
    let vectors: Vec<&EmbeddingVector> = std::iter::once(&inputs.anchor).chain(&inputs.positives).chain(&inputs.negatives).collect();
    let (mut diff_sq, mut an_sq, mut fd_sq) = (0.0, 0.0, 0.0);
    for (which, (v, an)) in vectors.iter().zip(&analytic).enumerate() {
        for k in 0..v.dim() {
            let x = v.as_slice()[k];
            let up = contrastive_loss(&with_component(inputs, which, k, x + h)).unwrap();
            let down = contrastive_loss(&with_component(inputs, which, k, x - h)).unwrap();
            let fd = (up - down) / (2.0 * h);
            diff_sq += (fd - an[k]).powi(2);
            an_sq += an[k].powi(2);
            fd_sq += fd * fd;
        }
    }
    diff_sq.sqrt() / an_sq.sqrt().max(fd_sq.sqrt()).max(1e-12)
}

pub fn check_gradient_fidelity() -> Check {
    let start = Instant::now();
    let cfg = LossConfig { tau: 0.1, gamma: 2.0 };
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = random_inputs(&mut rng, 8, 2, 8, cfg);
        let err = finite_difference_error(&inputs, 1e-5);
        ensure!(err < 1e-4, "seed {seed}: relative gradient error {err:.3e}");
        worst = worst.max(err);
    }
    let took = within(start, Duration::from_secs(5), "gradient check")?;
    Ok(format!("100 seeds, worst relative error {worst:.2e}, {took:.2?}"))
}

pub fn check_loss_identities() -> Check {
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let single = random_inputs(&mut rng, 8, 1, 0, cfg);
        let l = contrastive_loss(&single).unwrap();
        ensure!(l == 0.0, "single positive without negatives gave {l:e}");
    }
    let mut worst_scale: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let base = random_inputs(&mut rng, 8, 3, 6, cfg);
        let l0 = contrastive_loss(&base).unwrap();
        for which in 0..10 {
            let factor = 10f64.powf(rng.random_range(-3.0..3.0));
            let mut scaled = base.clone();
            match which {
                0 => scaled.anchor = scaled.anchor.scaled(factor),
                1..=3 => scaled.positives[which - 1] = scaled.positives[which - 1].scaled(factor),
                _ => scaled.negatives[which - 4] = scaled.negatives[which - 4].scaled(factor),
            }
            let d = (contrastive_loss(&scaled).unwrap() - l0).abs();
            ensure!(d <= 1e-9, "seed {seed}: rescaling vector {which} by {factor} moved the loss by {d:e}");
            worst_scale = worst_scale.max(d);
        }
        for _ in 0..5 {
            let mut perm = base.clone();
            perm.positives.shuffle(&mut rng);
            perm.negatives.shuffle(&mut rng);
            let l = contrastive_loss(&perm).unwrap();
            ensure!(l == l0, "seed {seed}: permutation changed the loss {l0} -> {l}");
        }
    }
    Ok(format!("single-positive loss exactly 0; worst rescale drift {worst_scale:.1e}; permutations bit-identical"))
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

/// Exhaustive scan over stored rows with a full sort.
pub fn scan_oracle(db: &Database, q: &[f64], k: usize, exclude: Option<&str>) -> Vec<(String, f64)> {
    let mut qq = 0.0;
    for x in q {
        qq += x * x;
    }
    let mut all: Vec<(String, f64)> = Vec::new();
    for (id, row) in db.iter() {
        if Some(id) == exclude {
            continue;
        }
        let mut rr = 0.0;
        let mut dot = 0.0;
        for (a, b) in q.iter().zip(row) {
            let b = f64::from(*b);
            rr += b * b;
            dot += a * b;
        }
        let s = if rr == 0.0 { 0.0 } else { (dot / (qq * rr).sqrt()).clamp(-1.0, 1.0) };
        all.push((id.to_string(), s));
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn pool_oracle(lists: &[Vec<(String, f64)>], mode: PoolingMode) -> Vec<(String, f64)> {
    match mode {
        PoolingMode::RoundRobin => {
            let mut out: Vec<(String, f64)> = Vec::new();
            let depth = lists.iter().map(Vec::len).max().unwrap_or(0);
            for r in 0..depth {
                for l in lists {
                    if let Some(h) = l.get(r) {
                        if !out.iter().any(|o| o.0 == h.0) {
                            out.push(h.clone());
                        }
                    }
                }
            }
            out
        }
        PoolingMode::MaxSimilarity => {
            let mut best: BTreeMap<String, f64> = BTreeMap::new();
            for (id, s) in lists.iter().flatten() {
                let e = best.entry(id.clone()).or_insert(*s);
                if *s > *e {
                    *e = *s;
                }
            }
            let mut out: Vec<(String, f64)> = best.into_iter().collect();
            out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            out
        }
    }
}

fn same_hits(got: &[RankedHit], want: &[(String, f64)]) -> Result<(), String> {
    ensure!(got.len() == want.len(), "length {} vs oracle {}", got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        ensure!(g.rank == i + 1, "rank {} at position {i}", g.rank);
        ensure!(g.paper_id == w.0, "position {i}: {} vs oracle {}", g.paper_id, w.0);
        ensure!(g.similarity.to_bits() == w.1.to_bits(), "position {i}: similarity {} vs oracle {}", g.similarity, w.1);
    }
    Ok(())
}

/// 1000 papers; every tenth repeats an earlier vector to force ties.
pub fn retrieval_fixture(n: usize, d: usize, seed: u64) -> Vec<SubspaceVectors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<SubspaceVectors> = Vec::with_capacity(n);
    for i in 0..n {
        let mut sv = SubspaceVectors::new(format!("p{i:04}"));
        for dim in Dimension::ALL {
            let v = if i % 10 == 9 { out[i - 5].get(dim).unwrap().clone() } else { ev(rand_vec(&mut rng, d)) };
            sv = sv.with(dim, v);
        }
        out.push(sv);
    }
    out
}

pub fn check_retrieval_exactness() -> Check {
    let start = Instant::now();
    let vectors = retrieval_fixture(1000, 24, 5);
    let dbs: Databases = build_databases(&vectors, Execution::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut compared = 0usize;
    for qi in 0..50 {
        // every fifth query is a stored paper, so exact ties with duplicates occur
        let query = if qi % 5 == 0 {
            vectors[rng.random_range(0..vectors.len())].clone()
        } else {
            let mut sv = SubspaceVectors::new(format!("q{qi}"));
            for dim in Dimension::ALL {
                sv = sv.with(dim, ev(rand_vec(&mut rng, 24)));
            }
            sv
        };
        for k in [3, 10, 30] {
            for kind in DbKind::ALL {
                let q: Vec<f64> = match kind.dimension() {
                    Some(dim) => query.get(dim).unwrap().as_slice().to_vec(),
                    None => rand_vec(&mut rng, 24),
                };
                let got = search(dbs.get(kind), &q, k).map_err(|e| e.to_string())?;
                same_hits(&got, &scan_oracle(dbs.get(kind), &q, k, None)).map_err(|e| format!("query {qi} {kind} K={k}: {e}"))?;
                compared += 1;
            }
            for mode in [PoolingMode::RoundRobin, PoolingMode::MaxSimilarity] {
                let got = merged_search(&dbs, &query, k, mode, None).map_err(|e| e.to_string())?;
                let lists: Vec<_> = Dimension::ALL.iter().map(|&d| scan_oracle(dbs.node(d), query.get(d).unwrap().as_slice(), k, None)).collect();
                same_hits(&got, &pool_oracle(&lists, mode)).map_err(|e| format!("query {qi} pooled {mode:?} K={k}: {e}"))?;
                compared += 1;
            }
        }
    }
    let took = within(start, Duration::from_secs(10), "retrieval check")?;
    Ok(format!("{compared} ranked lists identical to the exhaustive scan, {took:.2?}"))
}

pub fn check_transition_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut papers = 0;
    for i in 0..500 {
        let d = rng.random_range(2..40);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let p: Vec<f64> = rand_vec(&mut rng, d).iter().map(|x| x * scale).collect();
        let m = if i % 7 == 0 { p.clone() } else { rand_vec(&mut rng, d) };
        let f = rand_vec(&mut rng, d);
        let sv = SubspaceVectors::new(format!("t{i}"))
            .with(Dimension::Problem, ev(p))
            .with(Dimension::Method, ev(m))
            .with(Dimension::Findings, ev(f));
        let t = transition_vectors(&sv).map_err(|e| e.to_string())?;
        let (t_pm, t_mf) = (t.t_pm.unwrap(), t.t_mf.unwrap());
        let up = sv.unit(Dimension::Problem).unwrap().unwrap();
        let uf = sv.unit(Dimension::Findings).unwrap().unwrap();
        for k in 0..d {
            let lhs = t_pm.as_slice()[k] + t_mf.as_slice()[k];
            let rhs = uf[k] - up[k];
            ensure!(lhs.to_bits() == rhs.to_bits(), "paper {i} component {k}: {lhs} != {rhs}");
        }
        if i % 7 == 0 {
            ensure!(t_pm.as_slice().iter().all(|x| *x == 0.0), "paper {i}: coinciding parents gave a non-zero transition");
        }
        papers += 1;
    }
    Ok(format!("{papers} papers, identity exact, coinciding parents give the zero vector"))
}

// ---------------------------------------------------------------------------
// Centrality and novelty
// ---------------------------------------------------------------------------

pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> ReasoningGraph {
    let nodes = (0..n).map(|i| IdeaNode { node_id: format!("v{i}"), role: Role::ALL[i % 5], text: format!("node {i}") }).collect();
    let edges = edges.iter().map(|(a, b)| (format!("v{a}"), format!("v{b}"))).collect();
    ReasoningGraph::new(nodes, edges).unwrap()
}

/// All shortest paths between `s` and `t` by exhaustive simple-path search.
fn shortest_paths(adj: &[Vec<bool>], s: usize, t: usize) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut stack = vec![vec![s]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == t {
            found.push(path);
            continue;
        }
        for w in 0..n {
            if adj[last][w] && !path.contains(&w) {
                let mut p = path.clone();
                p.push(w);
                stack.push(p);
            }
        }
    }
    let best = found.iter().map(Vec::len).min().unwrap_or(0);
    found.retain(|p| p.len() == best);
    found
}

/// Betweenness by enumeration. Undirected counts unordered pairs.
pub fn betweenness_oracle(adj: &[Vec<bool>], directed: bool) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || (!directed && t < s) {
                continue;
            }
            let paths = shortest_paths(adj, s, t);
            if paths.is_empty() {
                continue;
            }
            for (v, c) in cb.iter_mut().enumerate() {
                if v != s && v != t {
                    *c += paths.iter().filter(|p| p.contains(&v)).count() as f64 / paths.len() as f64;
                }
            }
        }
    }
    cb
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

pub fn check_centrality_exactness() -> Check {
    let mut graphs = 0usize;
    let mut disconnected = 0usize;
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
            let mut adj = vec![vec![false; n]; n];
            for &(a, b) in &edges {
                adj[a][b] = true;
                adj[b][a] = true;
            }
            let g = graph_from_edges(n, &edges);
            let deg = degree_all(&g);
            for v in 0..n {
                let want = if n == 1 { 0.0 } else { adj[v].iter().filter(|x| **x).count() as f64 / (n - 1) as f64 };
                ensure!(deg[v] == want, "n={n} mask={mask}: degree of v{v} {} vs {want}", deg[v]);
            }
            let bet = betweenness_all(&g, CentralityView::Undirected);
            let want = betweenness_oracle(&adj, false);
            for v in 0..n {
                ensure!(close(bet[v], want[v]), "n={n} mask={mask}: betweenness of v{v} {} vs {}", bet[v], want[v]);
            }
            disconnected += usize::from(!connected(&g.undirected_adjacency()));
            graphs += 1;
        }
    }
    // directed view: every orientation pattern on up to 4 nodes
    let mut directed = 0usize;
    for n in 2..=4usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        for code in 0u32..4u32.pow(pairs.len() as u32) {
            let mut edges = Vec::new();
            let mut adj = vec![vec![false; n]; n];
            for (i, &(a, b)) in pairs.iter().enumerate() {
                let s = code / 4u32.pow(i as u32) % 4;
                if s & 1 == 1 {
                    edges.push((a, b));
                    adj[a][b] = true;
                }
                if s & 2 == 2 {
                    edges.push((b, a));
                    adj[b][a] = true;
                }
            }
            let g = graph_from_edges(n, &edges);
            let bet = betweenness_all(&g, CentralityView::Directed);
            let want = betweenness_oracle(&adj, true);
            for v in 0..n {
                ensure!(close(bet[v], want[v]), "directed n={n} code={code}: v{v} {} vs {}", bet[v], want[v]);
            }
            directed += 1;
        }
    }
    for k in 1..=40usize {
        let edges: Vec<(usize, usize)> = (1..=k).map(|i| (0, i)).collect();
        let g = graph_from_edges(k + 1, &edges);
        let bet = betweenness_all(&g, CentralityView::Undirected);
        let want = (k * (k - 1) / 2) as f64;
        ensure!(bet[0] == want, "star with {k} leaves: center {} vs {want}", bet[0]);
    }
    Ok(format!("{graphs} undirected graphs ({disconnected} disconnected), {directed} directed graphs, stars up to 40 leaves"))
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> ReasoningGraph {
    let n = rng.random_range(1..=max_nodes);
    let p = rng.random_range(0.0..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a < b && rng.random_bool(p) {
                edges.push(if rng.random_bool(0.5) { (a, b) } else { (b, a) });
            }
        }
    }
    graph_from_edges(n, &edges)
}

pub fn check_novelty_bounds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..1000 {
        let g = random_graph(&mut rng, 20);
        let view = if i % 2 == 0 { CentralityView::Undirected } else { CentralityView::Directed };
        let w = rescale_weights(&importance_weights(&g, view)).map_err(|e| e.to_string())?;
        let sims: BTreeMap<String, f64> = g.nodes().iter().map(|n| (n.node_id.clone(), rng.random_range(-0.3f64..1.3).clamp(0.0, 1.0))).collect();
        let score = novelty_score(&g, &sims, &w).map_err(|e| e.to_string())?;
        ensure!((0.0..=1.0).contains(&score), "graph {i}: score {score} outside [0, 1]");
        lo = lo.min(score);
        hi = hi.max(score);
        let zeros: BTreeMap<String, f64> = sims.keys().map(|k| (k.clone(), 0.0)).collect();
        let ones: BTreeMap<String, f64> = sims.keys().map(|k| (k.clone(), 1.0)).collect();
        let s0 = novelty_score(&g, &zeros, &w).map_err(|e| e.to_string())?;
        let s1 = novelty_score(&g, &ones, &w).map_err(|e| e.to_string())?;
        ensure!(s0 == 1.0 && s1 == 0.0, "graph {i}: anchors gave {s0} and {s1}");
    }
    let g = graph_from_edges(2, &[(0, 1)]);
    let sims = BTreeMap::from([("v0".to_string(), 0.2), ("v1".to_string(), 0.8)]);
    let w = BTreeMap::from([("v0".to_string(), 2.0), ("v1".to_string(), 0.5)]);
    let worked = novelty_score(&g, &sims, &w).map_err(|e| e.to_string())?;
    ensure!(worked == 0.68, "worked example gave {worked:?}, expected 0.68");
    Ok(format!("1000 graphs, scores in [{lo:.3}, {hi:.3}], anchors exact, worked example {worked}"))
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub struct MetricCase {
    pub ranked: Vec<String>,
    pub relevant: BTreeSet<String>,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hit: f64,
}

/// Five queries with hand-derived values.
pub fn metric_fixture() -> Vec<MetricCase> {
    let l2 = |x: f64| x.log2();
    vec![
        // single relevant item at rank 2
        MetricCase { ranked: ids(&["a", "b", "c", "d", "e"]), relevant: set(&["b"]), k: 2, recall: 1.0, ndcg: 1.0 / l2(3.0), hit: 1.0 },
        // two relevant at ranks 1 and 3
        MetricCase {
            ranked: ids(&["x", "y", "z"]),
            relevant: set(&["x", "z"]),
            k: 3,
            recall: 1.0,
            ndcg: (1.0 + 1.0 / l2(4.0)) / (1.0 + 1.0 / l2(3.0)),
            hit: 1.0,
        },
        // nothing relevant retrieved
        MetricCase { ranked: ids(&["p", "q"]), relevant: set(&["r"]), k: 5, recall: 0.0, ndcg: 0.0, hit: 0.0 },
        // more relevant items than K; top three all relevant
        MetricCase {
            ranked: ids(&["m1", "m2", "m3", "m4", "m5"]),
            relevant: set(&["m1", "m2", "m3", "m4", "m5", "m6"]),
            k: 3,
            recall: 0.5,
            ndcg: 1.0,
            hit: 1.0,
        },
        // relevant at ranks 2 and 4 of four, three relevant in total
        MetricCase {
            ranked: ids(&["n1", "r1", "n2", "r2"]),
            relevant: set(&["r1", "r2", "r3"]),
            k: 4,
            recall: 2.0 / 3.0,
            ndcg: (1.0 / l2(3.0) + 1.0 / l2(5.0)) / (1.0 + 1.0 / l2(3.0) + 1.0 / l2(4.0)),
            hit: 1.0,
        },
    ]
}

pub fn check_metric_correctness() -> Check {
    for (i, c) in metric_fixture().iter().enumerate() {
        let r = recall_at_k(&c.ranked, &c.relevant, c.k).map_err(|e| e.to_string())?;
        let n = ndcg_at_k(&c.ranked, &c.relevant, c.k).map_err(|e| e.to_string())?;
        let h = hit_rate_at_k(&c.ranked, &c.relevant, c.k).map_err(|e| e.to_string())?;
        ensure!((r - c.recall).abs() <= 1e-12, "query {i}: recall {r} vs {}", c.recall);
        ensure!((n - c.ndcg).abs() <= 1e-12, "query {i}: ndcg {n} vs {}", c.ndcg);
        ensure!((h - c.hit).abs() <= 1e-12, "query {i}: hit rate {h} vs {}", c.hit);
    }
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ties = seed % 2 == 1;
        let draw = |rng: &mut ChaCha8Rng| if ties { f64::from(rng.random_range(0..6)) } else { rng.random_range(-5.0..5.0) };
        let xs: Vec<f64> = (0..20).map(|_| draw(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.4 * x + draw(&mut rng)).collect();
        let p = pearson(&xs, &ys).map_err(|e| e.to_string())?.coefficient;
        let s = spearman(&xs, &ys).map_err(|e| e.to_string())?.coefficient;
        let po = dd_pearson(&xs, &ys);
        let so = dd_pearson(&counting_ranks(&xs), &counting_ranks(&ys));
        ensure!((p - po).abs() <= 1e-10, "seed {seed}: pearson {p} vs oracle {po}");
        ensure!((s - so).abs() <= 1e-10, "seed {seed}: spearman {s} vs oracle {so}");
        worst = worst.max((p - po).abs()).max((s - so).abs());
    }
    Ok(format!("5 fixture queries to 1e-12; 50 correlation samples, worst deviation {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Mining
// ---------------------------------------------------------------------------

pub fn paper(id: &str, year: i32, refs: Vec<String>) -> PaperRecord {
    PaperRecord {
        paper_id: id.to_string(),
        title: format!("Paper {id}"),
        abstract_text: format!("Abstract of {id}."),
        year,
        categories: BTreeSet::new(),
        problem_text: format!("Problem of {id}"),
        method_text: format!("Method of {id}"),
        findings_text: format!("Findings of {id}"),
        references: refs,
    }
}

/// Random citation corpus with a few dense groups so that thresholds bite.
pub fn random_citation_corpus(n: usize, seed: u64) -> CorpusHandle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("r{i:02}")).collect();
    let groups = 3;
    let mut records = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let year = 2000 + rng.random_range(0..12);
        let mut refs = Vec::new();
        for (j, other) in ids.iter().enumerate() {
            if i == j {
                continue;
            }
            let p = if i % groups == j % groups { 0.45 } else { 0.08 };
            if rng.random_bool(p) {
                refs.push(other.clone());
            }
        }
        if rng.random_bool(0.3) {
            refs.push(format!("outside-{i}"));
        }
        records.push(paper(id, year, refs));
    }
    CorpusHandle::from_records(records).unwrap()
}

pub struct RawCounts {
    pub direct: bool,
    pub coupling: usize,
    pub cocite: usize,
    pub gap: u32,
}

/// Counts from the raw reference lists of the corpus.
pub fn raw_counts(corpus: &CorpusHandle, a: &str, b: &str) -> RawCounts {
    let refs = |id: &str| -> BTreeSet<String> {
        corpus.get(id).unwrap().references.iter().filter(|r| corpus.contains(r) && r.as_str() != id).cloned().collect()
    };
    let (ra, rb) = (refs(a), refs(b));
    let cocite = corpus.iter().filter(|p| {
        let r = refs(&p.paper_id);
        r.contains(a) && r.contains(b)
    });
    RawCounts {
        direct: ra.contains(b) || rb.contains(a),
        coupling: ra.intersection(&rb).count(),
        cocite: cocite.count(),
        gap: corpus.get(a).unwrap().year.abs_diff(corpus.get(b).unwrap().year),
    }
}

pub fn exhaustive_candidates(corpus: &CorpusHandle, th: &MiningThresholds) -> Vec<CandidatePair> {
    let ids: Vec<&str> = corpus.ids().collect();
    let mut out = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let c = raw_counts(corpus, ids[i], ids[j]);
            if c.direct && c.gap <= th.window_years && (c.coupling >= th.coupling_min || c.cocite >= th.cocite_min) {
                let (a, b) = pair_key(ids[i], ids[j]);
                out.push(CandidatePair { a, b, has_direct_citation: true, coupling_count: c.coupling, cocitation_count: c.cocite, year_gap: c.gap });
            }
        }
    }
    out.sort();
    out
}

fn relabel(corpus: &CorpusHandle, map: &BTreeMap<String, String>) -> CorpusHandle {
    let rename = |id: &String| map.get(id).cloned().unwrap_or_else(|| id.clone());
    CorpusHandle::from_records(corpus.iter().map(|p| {
        let mut q = p.clone();
        q.paper_id = rename(&p.paper_id);
        q.references = p.references.iter().map(rename).collect();
        q
    }))
    .unwrap()
}

pub fn check_mining_correctness() -> Check {
    let mut total_pairs = 0usize;
    let mut checked_negatives = 0usize;
    for seed in 0..8u64 {
        let corpus = random_citation_corpus(30, seed);
        let g = build_citation_graph(&corpus);
        let ids: Vec<&str> = corpus.ids().collect();
        for a in &ids {
            for b in &ids {
                if a != b {
                    let c = raw_counts(&corpus, a, b);
                    ensure!(bibliographic_coupling(&g, a, b).unwrap() == c.coupling, "seed {seed}: coupling {a}/{b}");
                    ensure!(co_citation_count(&g, a, b).unwrap() == c.cocite, "seed {seed}: co-citation {a}/{b}");
                }
            }
        }
        for th in [
            MiningThresholds { window_years: 5, coupling_min: 2, cocite_min: 2 },
            MiningThresholds { window_years: 3, coupling_min: 3, cocite_min: 1 },
            MiningThresholds { window_years: 11, coupling_min: 1, cocite_min: 4 },
        ] {
            let got = identify_candidate_pairs(&g, &corpus, &th, Execution::default()).map_err(|e| e.to_string())?;
            let want = exhaustive_candidates(&corpus, &th);
            ensure!(got == want, "seed {seed} {th:?}: {} pairs vs oracle {}", got.len(), want.len());
            total_pairs += got.len();

            // relabeling ids in reverse order must map the result one-to-one
            let map: BTreeMap<String, String> = ids.iter().enumerate().map(|(i, id)| (id.to_string(), format!("z{:02}", ids.len() - i))).collect();
            let renamed = relabel(&corpus, &map);
            let got2 = identify_candidate_pairs(&build_citation_graph(&renamed), &renamed, &th, Execution::Sequential).map_err(|e| e.to_string())?;
            let mapped: BTreeSet<(String, String, usize, usize)> = got
                .iter()
                .map(|p| {
                    let (a, b) = pair_key(&map[&p.a], &map[&p.b]);
                    (a, b, p.coupling_count, p.cocitation_count)
                })
                .collect();
            let direct: BTreeSet<(String, String, usize, usize)> = got2.iter().map(|p| (p.a.clone(), p.b.clone(), p.coupling_count, p.cocitation_count)).collect();
            ensure!(mapped == direct, "seed {seed}: relabeling changed the candidate set");
        }

        // in-batch negatives from random batches and from built training sets
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for round in 0..40 {
            let mut batch: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
            batch.shuffle(&mut rng);
            batch.truncate(rng.random_range(2..ids.len()));
            let anchor = batch[0].clone();
            let s = sample_in_batch_negatives(&batch, &anchor, &g, 8, seed * 1000 + round);
            for neg in &s.ids {
                let c = raw_counts(&corpus, &anchor, neg);
                ensure!(neg != &anchor && batch.contains(neg), "negative {neg} not drawn from the batch");
                ensure!(!c.direct && c.coupling == 0 && c.cocite == 0, "seed {seed}: negative {neg} related to {anchor}");
                checked_negatives += 1;
            }
        }
        let pairs: BTreeSet<(String, String)> = identify_candidate_pairs(&g, &corpus, &MiningThresholds { window_years: 11, coupling_min: 1, cocite_min: 1 }, Execution::default())
            .unwrap()
            .iter()
            .map(|p| p.key())
            .collect();
        let set = build_training_batches(&pairs, Dimension::Method, &corpus, &g, None, &BatchConfig { batch_size: 8, n_pos: 1, n_neg: 4, ..Default::default() }, seed);
        for ex in set.examples() {
            for n in ex.negatives.iter().filter(|n| n.kind == NegativeKind::InBatch) {
                let c = raw_counts(&corpus, &ex.anchor, &n.paper_id);
                ensure!(!c.direct && c.coupling == 0 && c.cocite == 0, "seed {seed}: batch negative {} related to {}", n.paper_id, ex.anchor);
                checked_negatives += 1;
            }
        }
    }
    Ok(format!("8 corpora of 30 papers, {total_pairs} candidate pairs match the exhaustive filter, {checked_negatives} negatives verified"))
}

/// BFS reachability, used to label generated graphs.
pub fn connected(adj: &[BTreeSet<usize>]) -> bool {
    if adj.is_empty() {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut q = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                q.push_back(w);
            }
        }
    }
    seen.into_iter().all(|x| x)
}
