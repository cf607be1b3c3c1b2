use std::collections::HashSet;

use oasis_core::corpus::CorpusStore;
use oasis_core::dedup::*;
use oasis_core::fixtures;
use oasis_core::{Document, Silent};
use rayon::prelude::*;

const UNION: usize = 100;

/// Fraction of pairs at Jaccard `shared / UNION` that share a band key in
/// at least one of `passes` passes.
fn empirical_rate(shared: usize, b: usize, r: usize, passes: u32, trials: u64, seed: u64) -> f64 {
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (x, y) = fixtures::shingle_pair(shared, UNION, seed ^ (i * 7919));
            let found = (0..passes).any(|p| {
                let s = pass_seed(seed.wrapping_add(i), p);
                let kx = band_keys(&minhash(&x, b * r, s).unwrap(), b);
                let ky = band_keys(&minhash(&y, b * r, s).unwrap(), b);
                kx.iter().zip(&ky).any(|(a, b)| a == b)
            });
            found as u64
        })
        .sum();
    hits as f64 / trials as f64
}

#[test]
fn per_pass_collision_rate_follows_the_formula() {
    let rate = empirical_rate(80, 8, 16, 1, 10_000, 1);
    let p = collision_probability(0.8, 8, 16);
    assert!((rate - p).abs() <= 0.03, "{rate} vs {p}");
}

#[test]
fn multi_pass_recall_follows_the_formula() {
    let p = collision_probability(0.8, 8, 4);
    let rate = empirical_rate(80, 8, 4, 2, 10_000, 2);
    let want = multi_pass_recall(p, 2);
    assert!((rate - want).abs() <= 0.03, "{rate} vs {want}");
}

#[test]
fn minhash_estimates_jaccard_without_bias() {
    let (a, b) = fixtures::shingle_pair(50, 100, 3);
    assert_eq!(jaccard(&a, &b), 0.5);
    let mean: f64 = (0..100u64)
        .map(|seed| estimated_jaccard(&minhash(&a, 128, seed).unwrap(), &minhash(&b, 128, seed).unwrap()))
        .sum::<f64>()
        / 100.0;
    assert!((mean - 0.5).abs() <= 0.1, "{mean}");

    let (c, _) = fixtures::shingle_pair(0, 200, 4);
    let (_, d) = fixtures::shingle_pair(0, 200, 5);
    let m = estimated_jaccard(&minhash(&c, 128, 0).unwrap(), &minhash(&d, 128, 0).unwrap());
    assert!(m < 0.05, "{m}");
}

#[test]
fn one_word_edit_matches_string_oracle() {
    let base = fixtures::random_words(100, 50, 9);
    let mut words: Vec<&str> = base.split(' ').collect();
    words[50] = "edited";
    let edited = words.join(" ");
    let grams = |t: &str| -> HashSet<String> {
        let w: Vec<&str> = t.split(' ').collect();
        w.windows(5).map(|g| g.join(" ")).collect()
    };
    let (ga, gb) = (grams(&base), grams(&edited));
    let oracle = ga.intersection(&gb).count() as f64 / ga.union(&gb).count() as f64;
    let got = jaccard(&shingle(&base, 5).unwrap(), &shingle(&edited, 5).unwrap());
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    assert!(oracle < 1.0);
}

fn store_with(docs: &[Document], shard: u64) -> (tempfile::TempDir, CorpusStore) {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, fixtures::to_jsonl(docs)).unwrap();
    let store = CorpusStore::open(dir.path().join("data")).unwrap();
    store.ingest(input.to_str().unwrap(), "raw", shard).unwrap();
    (dir, store)
}

fn plan_for(n: u64, bands: usize) -> DedupPlan {
    let mut req = PlanRequest::new(n, estimated_bytes(bands, n));
    req.seed = 17;
    plan(&req).unwrap()
}

#[test]
fn unrelated_documents_are_untouched() {
    let docs: Vec<Document> = (0..50)
        .map(|i| Document::new(format!("u{i}"), fixtures::random_words(40, 1_000_000, i)))
        .collect();
    let (_t, store) = store_with(&docs, 2000);
    let run = run_dedup(&store, "raw", &plan_for(50, 16), "dd", &Silent).unwrap();
    assert_eq!(run.removal_rate, 0.0);
    assert!(run.graph.is_empty());
    assert_eq!(run.corpus.doc_count, 50);
    assert_eq!(load_graph(&store, "raw").unwrap(), DuplicateGraph::default());
}

#[test]
fn exact_duplicates_keep_the_first() {
    let text = fixtures::random_words(60, 1000, 5);
    let mut docs = vec![
        Document::new("x0", fixtures::random_words(60, 1000, 6)),
        Document::new("a", text.clone()),
        Document::new("b", text.clone()),
        Document::new("x1", fixtures::random_words(60, 1000, 7)),
        Document::new("c", text),
    ];
    docs[3].source = "other".into();
    let (_t, store) = store_with(&docs, 1 << 20);
    let run = run_dedup(&store, "raw", &plan_for(5, 8), "dd", &Silent).unwrap();
    assert_eq!(run.removed, 2);
    assert_eq!(run.graph.clusters(), vec![vec!["a".to_string(), "b".into(), "c".into()]]);
    let kept: Vec<String> = store.load_all(&run.corpus).unwrap().into_iter().map(|d| d.id).collect();
    assert_eq!(kept, ["x0", "a", "x1"]);
    assert_eq!(load_graph(&store, "dd").unwrap(), run.graph);
    assert_eq!(run.corpus.lineage.as_ref().unwrap().op, "dedup");

    let mut keep_two = plan_for(5, 8);
    keep_two.keep_per_cluster = 2;
    let run = run_dedup(&store, "raw", &keep_two, "dd2", &Silent).unwrap();
    assert_eq!(run.removed, 1);
    assert!(matches!(
        run_dedup(&store, "raw", &keep_two, "dd2", &Silent),
        Err(oasis_core::Error::NameTaken(_))
    ));
}

#[test]
fn planted_pairs_are_recovered() {
    let (docs, planted) = fixtures::near_duplicate_corpus(1000, 50, 200, 42);
    // exhaustive oracle: exactly the planted pairs are at Jaccard >= 0.8
    let sets: Vec<Vec<u64>> = docs.par_iter().map(|d| shingle(&d.text, 5).unwrap()).collect();
    let truth: HashSet<(usize, usize)> = (0..sets.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let sets = &sets;
            (i + 1..sets.len())
                .filter(move |&j| jaccard(&sets[i], &sets[j]) >= 0.8)
                .map(move |j| (i, j))
        })
        .collect();
    let planted_set: HashSet<(usize, usize)> = planted.iter().copied().collect();
    assert_eq!(truth, planted_set);

    let (_t, store) = store_with(&docs, 64 * 1024);
    let mut req = PlanRequest::new(1000, estimated_bytes(4, 1000));
    req.seed = 3;
    let p = plan(&req).unwrap();
    assert_eq!(p.r, 4);
    assert!(p.passes > 1);
    let run = run_dedup(&store, "raw", &p, "dd", &Silent).unwrap();
    let index: std::collections::HashMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let found: HashSet<(usize, usize)> = run.graph.edges.iter().map(|e| (index[e.a.as_str()], index[e.b.as_str()])).collect();
    let recovered = planted_set.intersection(&found).count() as f64 / planted.len() as f64;
    assert!(recovered >= p.predicted_recall - 0.05, "{recovered} vs {}", p.predicted_recall);
    // every pass stored exactly r entries per document
    assert!(run.passes.iter().all(|s| s.bands.entries == 4 * 1000));

    // same plan and seed again: same removals
    let again = run_dedup(&store, "raw", &p, "dd-again", &Silent).unwrap();
    assert_eq!(again.graph, run.graph);
}

#[test]
fn band_tables_match_the_memory_model() {
    let n: u64 = 20_000;
    let r = 16;
    let mut rng = oasis_core::text::rng(8);
    let keys: Vec<u64> = (0..n * r as u64).map(|_| rand::Rng::random(&mut rng)).collect();
    let (_, stats) = candidate_pairs(&keys, r);
    assert_eq!(stats.entries, r as u64 * n);
    let est = estimated_bytes(r, n) as f64;
    assert!((stats.table_bytes as f64 - est).abs() / (stats.table_bytes as f64) <= 0.10);
}
