mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use proptest::prelude::*;

use ideaspace::citation::{
    assign_subgraphs, bibliographic_coupling, build_citation_graph, build_training_batches, classify_pairs, co_citation_count, eligible_hard_pairs,
    identify_candidate_pairs, pair_key, sample_hard_negatives, sample_in_batch_negatives, BatchConfig, HardNegativeThresholds, MiningThresholds, NegativeKind,
    PairKey,
};
use ideaspace::par::Execution;
use ideaspace::provider::{FunctionScores, ProviderClient};
use ideaspace::synthetic::{classifier_fixture, generate, SyntheticConfig};
use ideaspace::Dimension;

#[test]
fn mining_matches_exhaustive_filter() {
    println!("{}", check_mining_correctness().unwrap());
}

#[test]
fn overlap_counts_are_symmetric_and_match_brute_force() {
    let corpus = random_citation_corpus(20, 77);
    let g = build_citation_graph(&corpus);
    let ids: Vec<&str> = corpus.ids().collect();
    for a in &ids {
        for b in &ids {
            if a == b {
                continue;
            }
            let c = raw_counts(&corpus, a, b);
            assert_eq!(bibliographic_coupling(&g, a, b).unwrap(), c.coupling);
            assert_eq!(bibliographic_coupling(&g, b, a).unwrap(), c.coupling);
            assert_eq!(co_citation_count(&g, a, b).unwrap(), c.cocite);
            assert_eq!(co_citation_count(&g, b, a).unwrap(), c.cocite);
        }
    }
    assert!(bibliographic_coupling(&g, "missing", ids[0]).is_err());
}

#[test]
fn in_edges_are_the_transpose_of_references() {
    for seed in 0..5 {
        let corpus = random_citation_corpus(25, seed);
        let g = build_citation_graph(&corpus);
        let mut transpose: BTreeMap<String, BTreeSet<String>> = corpus.ids().map(|id| (id.to_string(), BTreeSet::new())).collect();
        for p in corpus.iter() {
            for r in p.references.iter().filter(|r| corpus.contains(r)) {
                transpose.get_mut(r).unwrap().insert(p.paper_id.clone());
            }
        }
        for (id, cited_by) in &transpose {
            assert_eq!(g.in_edges(id).unwrap(), cited_by, "seed {seed}: {id}");
        }
        assert_eq!(g.edge_count(), transpose.values().map(BTreeSet::len).sum::<usize>());
    }
}

#[test]
fn one_transport_failure_in_ten_is_isolated() {
    use ideaspace::provider::{FnTransport, ProviderConfig, ProviderError, ProviderMode};
    let corpus = random_citation_corpus(40, 9);
    let g = build_citation_graph(&corpus);
    let pairs: Vec<_> = identify_candidate_pairs(&g, &corpus, &MiningThresholds { window_years: 11, coupling_min: 1, cocite_min: 1 }, Execution::Sequential)
        .unwrap()
        .into_iter()
        .take(10)
        .collect();
    assert_eq!(pairs.len(), 10);
    let victim = serde_json::to_value(ideaspace::citation::citation_request(&corpus, &g, &pairs[4].a, &pairs[4].b).unwrap()).unwrap();
    let transport = FnTransport::new(move |req: &serde_json::Value| {
        if req["payload"] == victim {
            return Err(ProviderError::Transport("connection reset".into()));
        }
        Ok(br#"{"research_problem_score":0.8,"method_approach_score":0.2,"key_findings_score":0.4,"reasoning":"r"}"#.to_vec())
    });
    let cfg = ProviderConfig { mode: ProviderMode::Live, max_retries: 0, ..Default::default() };
    let client = ProviderClient::with_fixture(cfg, Box::new(transport), Default::default());
    let got = classify_pairs(&client, &pairs, &corpus, &g, Execution::default());
    assert_eq!(got.scored.len(), 9);
    assert_eq!(got.failures.len(), 1);
    assert_eq!((got.failures[0].a.as_str(), got.failures[0].b.as_str()), (pairs[4].a.as_str(), pairs[4].b.as_str()));
    assert!(got.failures[0].error.contains("connection reset"));
}

#[test]
fn candidate_search_is_the_same_either_path() {
    let corpus = random_citation_corpus(60, 3);
    let g = build_citation_graph(&corpus);
    let th = MiningThresholds { window_years: 6, coupling_min: 2, cocite_min: 2 };
    assert_eq!(
        identify_candidate_pairs(&g, &corpus, &th, Execution::Sequential).unwrap(),
        identify_candidate_pairs(&g, &corpus, &th, Execution::Parallel).unwrap()
    );
    assert!(identify_candidate_pairs(&g, &corpus, &MiningThresholds { coupling_min: 0, ..th }, Execution::Sequential).is_err());
}

#[test]
fn replayed_classifier_scores_every_synthetic_pair() {
    let sc = generate(&SyntheticConfig { papers: 60, clusters: 4, cluster_size: 6, dim: 8, ..Default::default() });
    let corpus = sc.handle();
    let g = build_citation_graph(&corpus);
    let pairs = identify_candidate_pairs(&g, &corpus, &MiningThresholds { window_years: 5, coupling_min: 3, cocite_min: 3 }, Execution::default()).unwrap();
    assert!(!pairs.is_empty());
    let fixture = classifier_fixture(&corpus, &g, &pairs, "default", 5).unwrap();
    let client = ProviderClient::replay(fixture);
    let got = classify_pairs(&client, &pairs, &corpus, &g, Execution::default());
    assert!(got.failures.is_empty(), "{:?}", got.failures);
    assert_eq!(got.scored.len(), pairs.len());
    assert!(got.warnings.is_empty());
    for s in got.scored.values() {
        assert!(s.check().unwrap().is_empty());
    }
    assert_eq!(got, classify_pairs(&client, &pairs, &corpus, &g, Execution::Sequential));

    // a pair missing from the fixture is recorded as a failure, not scored
    let partial = ProviderClient::replay(classifier_fixture(&corpus, &g, &pairs[1..], "default", 5).unwrap());
    let miss = classify_pairs(&partial, &pairs, &corpus, &g, Execution::default());
    assert_eq!(miss.scored.len(), pairs.len() - 1);
    assert_eq!((miss.failures[0].a.as_str(), miss.failures[0].b.as_str()), (pairs[0].a.as_str(), pairs[0].b.as_str()));
}

const GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

fn scored_strategy() -> impl Strategy<Value = BTreeMap<PairKey, FunctionScores>> {
    prop::collection::btree_map((0u8..12, 0u8..12), (0usize..6, 0usize..6, 0usize..6), 0..40).prop_map(|m| {
        m.into_iter()
            .filter(|((a, b), _)| a != b)
            .map(|((a, b), (p, q, r))| (pair_key(&format!("p{a:02}"), &format!("p{b:02}")), FunctionScores::new(GRID[p], GRID[q], GRID[r])))
            .collect()
    })
}

fn dim_strategy() -> impl Strategy<Value = Dimension> {
    prop::sample::select(Dimension::ALL.to_vec())
}

proptest! {
    #[test]
    fn subgraphs_partition_scored_pairs(scored in scored_strategy(), accept in prop::sample::select(vec![0.2, 0.6, 0.8, 1.0])) {
        let sg = assign_subgraphs(&scored, accept);
        let mut union: BTreeSet<PairKey> = sg.irrelevant_pairs.clone();
        for d in Dimension::ALL {
            prop_assert!(sg.get(d).is_disjoint(&sg.irrelevant_pairs));
            for k in sg.get(d) {
                prop_assert!(scored[k].get(d) >= accept);
            }
            union.extend(sg.get(d).iter().cloned());
        }
        prop_assert_eq!(union, scored.keys().cloned().collect::<BTreeSet<_>>());
        for k in &sg.irrelevant_pairs {
            prop_assert!(Dimension::ALL.iter().all(|&d| scored[k].get(d) < accept));
        }
    }

    #[test]
    fn hard_negatives_follow_the_high_low_pattern(scored in scored_strategy(), dim in dim_strategy(), anchor in 0u8..12, seed in any::<u64>()) {
        let th = HardNegativeThresholds::default();
        let anchor = format!("p{anchor:02}");
        for (a, b) in eligible_hard_pairs(&scored, dim, &th) {
            let s = &scored[&(a, b)];
            prop_assert!(s.get(dim) <= th.low);
            prop_assert!(Dimension::ALL.iter().any(|&d| d != dim && s.get(d) >= th.high));
        }
        let draw = sample_hard_negatives(&scored, &anchor, dim, &th, 3, seed);
        prop_assert_eq!(&draw, &sample_hard_negatives(&scored, &anchor, dim, &th, 3, seed));
        prop_assert!(draw.ids.len() <= 3);
        prop_assert_eq!(draw.shortfall, draw.ids.len() < 3);
        for id in &draw.ids {
            prop_assert!(id != &anchor);
            prop_assert!(eligible_hard_pairs(&scored, dim, &th).contains(&pair_key(&anchor, id)));
        }
    }

    #[test]
    fn in_batch_negatives_are_unrelated_and_deterministic(seed in 0u64..200, size in 2usize..30, n in 0usize..10) {
        let corpus = random_citation_corpus(30, seed % 16);
        let g = build_citation_graph(&corpus);
        let batch: Vec<String> = corpus.ids().skip((seed as usize) % 5).take(size).map(String::from).collect();
        let anchor = batch[0].clone();
        let s = sample_in_batch_negatives(&batch, &anchor, &g, n, seed);
        prop_assert_eq!(&s, &sample_in_batch_negatives(&batch, &anchor, &g, n, seed));
        prop_assert!(s.ids.len() <= n);
        let distinct: BTreeSet<&String> = s.ids.iter().collect();
        prop_assert_eq!(distinct.len(), s.ids.len());
        for id in &s.ids {
            let c = raw_counts(&corpus, &anchor, id);
            prop_assert!(id != &anchor && batch.contains(id));
            prop_assert!(!c.direct && c.coupling == 0 && c.cocite == 0);
        }
    }

    #[test]
    fn training_examples_are_well_formed(seed in 0u64..64, dim in dim_strategy(), with_hard in any::<bool>()) {
        let corpus = random_citation_corpus(40, seed % 8);
        let g = build_citation_graph(&corpus);
        let mined: BTreeSet<PairKey> = identify_candidate_pairs(&g, &corpus, &MiningThresholds { window_years: 11, coupling_min: 1, cocite_min: 1 }, Execution::Sequential)
            .unwrap()
            .into_iter()
            .map(|p| p.key())
            .collect();
        let scored: BTreeMap<PairKey, FunctionScores> = mined.iter().enumerate().map(|(i, k)| (k.clone(), FunctionScores::new(GRID[i % 6], GRID[(i / 6) % 6], GRID[(i / 2) % 6]))).collect();
        let pairs = assign_subgraphs(&scored, 0.6).get(dim).clone();
        let cfg = BatchConfig { batch_size: 6, ..Default::default() };
        prop_assert_eq!((cfg.n_pos, cfg.n_neg), (2, 8));
        let hard = with_hard.then_some(&scored);
        let set = build_training_batches(&pairs, dim, &corpus, &g, hard, &cfg, seed);
        prop_assert_eq!(&set, &build_training_batches(&pairs, dim, &corpus, &g, hard, &cfg, seed));
        let mut shortfalls = 0;
        for batch in &set.batches {
            prop_assert!(batch.len() <= cfg.batch_size);
        }
        for ex in set.examples() {
            prop_assert_eq!(ex.positives.len(), cfg.n_pos);
            prop_assert!(ex.negatives.len() <= cfg.n_neg);
            prop_assert_eq!(ex.shortfall, ex.negatives.len() < cfg.n_neg);
            shortfalls += usize::from(ex.shortfall);
            let pos: BTreeSet<&str> = ex.positives.iter().map(String::as_str).collect();
            for p in &pos {
                prop_assert!(pairs.contains(&pair_key(&ex.anchor, p)));
            }
            let mut seen = BTreeSet::new();
            for n in &ex.negatives {
                prop_assert!(seen.insert(n.paper_id.as_str()));
                prop_assert!(n.paper_id != ex.anchor && !pos.contains(n.paper_id.as_str()));
                prop_assert!(!pairs.contains(&pair_key(&ex.anchor, &n.paper_id)));
                match n.kind {
                    NegativeKind::InBatch => {
                        let c = raw_counts(&corpus, &ex.anchor, &n.paper_id);
                        prop_assert!(!c.direct && c.coupling == 0 && c.cocite == 0);
                    }
                    NegativeKind::Hard => {
                        prop_assert!(with_hard);
                        prop_assert!(eligible_hard_pairs(&scored, dim, &cfg.hard).contains(&pair_key(&ex.anchor, &n.paper_id)));
                    }
                }
            }
        }
        prop_assert_eq!(shortfalls, set.shortfalls);
    }
}
