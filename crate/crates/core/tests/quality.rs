use std::collections::{HashMap, HashSet};

use oasis_core::assess::llm::{append_records, EvalStatus, LlmEvalRecord};
use oasis_core::assess::ratings::{Rating, RatingRecord, RatingStore};
use oasis_core::corpus::CorpusStore;
use oasis_core::fixtures::{self, Style};
use oasis_core::lm::{write_scores, DocScore};
use oasis_core::quality::classifier::{auc, ClassifierModel, Example, Hyperparams};
use oasis_core::quality::contaminate::{contaminate, contamination_seed, ContaminationRule, DonorPool, Op, Unit};
use oasis_core::quality::recipe::{build_dataset, load_dataset, Origin, QualityRecipe, SplitName};
use oasis_core::quality::{filter, score_corpus, QualityScorer};
use oasis_core::{Document, Error, Silent};
use rand::{Rng, SeedableRng};

fn store_with(sets: &[(&str, &[Document])]) -> (tempfile::TempDir, CorpusStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = CorpusStore::open(dir.path().join("data")).unwrap();
    for (name, docs) in sets {
        let input = dir.path().join(format!("{name}.jsonl"));
        std::fs::write(&input, fixtures::to_jsonl(docs)).unwrap();
        store.ingest(input.to_str().unwrap(), name, 256 * 1024).unwrap();
    }
    (dir, store)
}

fn shuffle_recipe(name: &str, corpus: &str, target: usize) -> QualityRecipe {
    serde_json::from_value(serde_json::json!({
        "name": name,
        "positive_sources": [{"corpus": corpus, "weight": 1.0}],
        "negatives": {"contaminated": [{"rule": {"unit": "word", "op": "shuffle", "intensity": 1.0}, "weight": 1.0}]},
        "target_size": target,
        "seed": 11
    }))
    .unwrap()
}

/// Fisher-Yates as usually written, driven by a ChaCha8 stream seeded from
/// SplitMix-style seed mixing over (seed_mix, xxh3(id), attempt).
fn reference_shuffle(words: &[&str], seed_mix: u64, id: &str, attempt: u64) -> Vec<String> {
    fn splitmix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    const G: u64 = 0x9e3779b97f4a7c15;
    let parts = [seed_mix, xxhash_rust::xxh3::xxh3_64(id.as_bytes()), attempt];
    let seed = parts.iter().fold(G, |acc, &p| splitmix(acc ^ p.wrapping_add(G)));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<String> = words.iter().map(|s| s.to_string()).collect();
    let mut i = v.len() - 1;
    while i > 0 {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
        i -= 1;
    }
    v
}

#[test]
fn word_shuffle_matches_reference_trace() {
    let words = ["the", "quick", "brown", "fox"];
    for seed_mix in [0u64, 7, 0xdead_beef] {
        let doc = Document::new("doc-1", words.join(" "));
        let mut rule = ContaminationRule::new(Unit::Word, Op::Shuffle, 1.0);
        rule.seed_mix = seed_mix;
        let out = contaminate(&doc, &rule, &DonorPool::default()).unwrap();
        // the first draw that is not the identity is the one kept
        let attempt = (0..).find(|&a| reference_shuffle(&words, seed_mix, "doc-1", a) != words).unwrap();
        let expect = reference_shuffle(&words, seed_mix, "doc-1", attempt).join(" ");
        assert_eq!(out.text, expect, "seed_mix {seed_mix}");
        assert_eq!(
            out.id,
            format!("doc-1#word-shuffle-{:016x}", contamination_seed(seed_mix, "doc-1", attempt as u32))
        );
        let again = contaminate(&doc, &rule, &DonorPool::default()).unwrap();
        assert_eq!(again, out);
    }
}

#[test]
fn every_rule_changes_text_and_is_deterministic() {
    let docs = fixtures::documents(Style::Web, 20, 3, "w");
    let donors = DonorPool::new(fixtures::documents(Style::Forum, 10, 4, "f").into_iter().map(|d| d.text).collect());
    for unit in [Unit::Word, Unit::Span, Unit::Sentence] {
        for op in [Op::Shuffle, Op::Replace, Op::Insert, Op::Delete] {
            let rule = ContaminationRule::new(unit, op, 0.3);
            for d in &docs {
                let a = contaminate(d, &rule, &donors).unwrap();
                assert_ne!(a.text, d.text, "{} on {}", rule.label(), d.id);
                assert_eq!(a, contaminate(d, &rule, &donors).unwrap());
                assert_eq!(a.meta["parent"], d.id);
            }
        }
    }
}

#[test]
fn contaminated_only_recipe_composition() {
    let docs = fixtures::documents(Style::Encyclopedia, 600, 1, "e");
    let (_t, store) = store_with(&[("enc", &docs)]);
    let ds = build_dataset(&store, &shuffle_recipe("ds", "enc", 1000), &Silent).unwrap();
    assert_eq!(ds.summary.positives, 500);
    assert_eq!(ds.summary.negatives, 500);
    assert!(ds.summary.shortfall.is_empty());
    let source_ids: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    for m in ds.manifest.iter().filter(|m| m.label == 0) {
        match &m.origin {
            Origin::Contaminated { parent, rule, .. } => {
                assert_eq!(rule, "word-shuffle");
                assert!(source_ids.contains(parent.as_str()));
                assert!(m.doc_id.starts_with(&format!("{parent}#")));
            }
            o => panic!("unexpected origin {o:?}"),
        }
    }

    // split disjoint by id and by parent group
    let train: HashSet<&str> = ds.train.iter().map(|r| r.doc_id.as_str()).collect();
    assert!(ds.valid.iter().all(|r| !train.contains(r.doc_id.as_str())));
    let group = |m: &oasis_core::quality::recipe::ManifestEntry| match &m.origin {
        Origin::Contaminated { parent, .. } => parent.clone(),
        _ => m.doc_id.clone(),
    };
    let mut side: HashMap<String, SplitName> = HashMap::new();
    for m in &ds.manifest {
        assert_eq!(*side.entry(group(m)).or_insert(m.split), m.split);
    }

    // same recipe and seed: identical manifest
    let again = build_dataset(&store, &shuffle_recipe("ds2", "enc", 1000), &Silent).unwrap();
    assert_eq!(again.manifest, ds.manifest);
    let loaded = load_dataset(&store, "ds").unwrap();
    assert_eq!(loaded.manifest, ds.manifest);
    assert_eq!(loaded.train, ds.train);
    assert!(matches!(
        build_dataset(&store, &shuffle_recipe("ds", "enc", 1000), &Silent),
        Err(Error::NameTaken(_))
    ));
}

#[test]
fn shortfall_is_reported() {
    let docs = fixtures::documents(Style::Web, 30, 2, "w");
    let (_t, store) = store_with(&[("web", &docs)]);
    let ds = build_dataset(&store, &shuffle_recipe("big", "web", 100), &Silent).unwrap();
    assert_eq!(ds.summary.positives, 30);
    assert_eq!(ds.summary.negatives, 30);
    assert_eq!(ds.summary.shortfall.len(), 2);
    assert!(ds.summary.shortfall.iter().all(|s| s.requested == 50 && s.built == 30));
}

#[test]
fn perplexity_tail_pool_counts_the_quantile() {
    let docs = fixtures::documents(Style::Web, 1000, 5, "w");
    let (_t, store) = store_with(&[("web", &docs)]);
    let mut rng = oasis_core::text::rng(9);
    let scores: Vec<DocScore> = docs
        .iter()
        .map(|d| DocScore {
            doc_id: d.id.clone(),
            ppl: rng.random_range(10.0..5000.0),
            token_count: 10,
        })
        .collect();
    write_scores(&store.root().join("scores/web.jsonl"), &scores).unwrap();
    // oracle: the 850th smallest is the boundary; count what lies above it
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.ppl).collect();
    sorted.sort_by(f64::total_cmp);
    let boundary = sorted[849];
    let above: HashSet<&str> = scores.iter().filter(|s| s.ppl > boundary).map(|s| s.doc_id.as_str()).collect();
    assert_eq!(above.len(), 150);

    let recipe: QualityRecipe = serde_json::from_value(serde_json::json!({
        "name": "tail",
        "positive_sources": [{"corpus": "web"}],
        "negatives": {"ppl_tail": {"scores": "scores/web.jsonl", "quantile": 0.85}},
        "target_size": 200,
    }))
    .unwrap();
    let ds = build_dataset(&store, &recipe, &Silent).unwrap();
    assert_eq!(ds.summary.ppl_tail_pool, Some(150));
    assert_eq!(ds.summary.ppl_boundary, Some(boundary));
    for m in &ds.manifest {
        match m.origin {
            Origin::PplTail { .. } => assert!(above.contains(m.doc_id.as_str())),
            Origin::Positive { .. } => assert!(!above.contains(m.doc_id.as_str())),
            _ => unreachable!(),
        }
    }
    assert_eq!(ds.summary.negatives, 100);
}

#[test]
fn rated_low_documents_become_negatives() {
    let docs = fixtures::documents(Style::Forum, 40, 6, "f");
    let (_t, store) = store_with(&[("forum", &docs)]);
    let ratings = RatingStore::for_store(&store).unwrap();
    let rate = |id: &str, rating| {
        ratings
            .record(
                &store,
                RatingRecord {
                    doc_id: id.into(),
                    corpus: "forum".into(),
                    rating,
                    rater: "ann".into(),
                    timestamp: String::new(),
                },
            )
            .unwrap();
    };
    rate("f-00001", Rating::Low);
    rate("f-00002", Rating::Low);
    rate("f-00002", Rating::High); // later rating wins
    let judged = |id: &str, score| LlmEvalRecord {
        doc_id: id.into(),
        corpus: "forum".into(),
        prompt_id: "p".into(),
        raw_response: format!("Score: {score}"),
        score: Some(score),
        model: "m".into(),
        cost_tokens: 1,
        status: EvalStatus::Scored,
        error: None,
    };
    append_records(&store, "forum", &[judged("f-00003", 1), judged("f-00004", 4)]).unwrap();

    let recipe: QualityRecipe = serde_json::from_value(serde_json::json!({
        "name": "rated",
        "positive_sources": [{"corpus": "forum"}],
        "negatives": {"rated_low": {"weight": 1.0}},
        "target_size": 20,
    }))
    .unwrap();
    let ds = build_dataset(&store, &recipe, &Silent).unwrap();
    let low: HashSet<(&str, &str)> = ds
        .manifest
        .iter()
        .filter_map(|m| match &m.origin {
            Origin::RatedLow { by, .. } => Some((m.doc_id.as_str(), by.as_str())),
            _ => None,
        })
        .collect();
    assert_eq!(low, HashSet::from([("f-00001", "human"), ("f-00003", "llm")]));
    assert!(ds
        .manifest
        .iter()
        .filter(|m| m.label == 1)
        .all(|m| m.doc_id != "f-00001" && m.doc_id != "f-00003"));
}

/// Brute-force AUC: fraction of (positive, negative) pairs ranked correctly.
fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in pos {
        for n in neg {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

fn train_shuffle_classifier(store: &CorpusStore, corpus: &str, name: &str) -> (ClassifierModel, oasis_core::quality::Dataset) {
    let ds = build_dataset(store, &shuffle_recipe(name, corpus, 1000), &Silent).unwrap();
    let hp = Hyperparams {
        seed: 5,
        ..Default::default()
    };
    let m = ClassifierModel::train(&ds.train_examples(), &ds.valid_examples(), &hp).unwrap();
    (m, ds)
}

#[test]
fn clean_versus_shuffled_auc() {
    let docs = fixtures::documents(Style::Encyclopedia, 600, 21, "e");
    let (_t, store) = store_with(&[("enc", &docs)]);
    let (model, ds) = train_shuffle_classifier(&store, "enc", "ds");
    let valid = ds.valid_examples();
    let scores: Vec<f64> = valid.iter().map(|e| model.score(&e.text)).collect();
    let pos: Vec<f64> = scores.iter().zip(&valid).filter(|(_, e)| e.label == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(&valid).filter(|(_, e)| e.label == 0).map(|(s, _)| *s).collect();
    let brute = pairwise_auc(&pos, &neg);
    assert!(brute >= 0.95, "valid AUC {brute}");
    let labels: Vec<u8> = valid.iter().map(|e| e.label).collect();
    assert!((auc(&scores, &labels).unwrap() - brute).abs() < 1e-12);
    assert!((model.meta.valid_auc - brute).abs() < 1e-12);

    // split means
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let train = ds.train_examples();
    let t_pos: Vec<f64> = train.iter().filter(|e| e.label == 1).map(|e| model.score(&e.text)).collect();
    let t_neg: Vec<f64> = train.iter().filter(|e| e.label == 0).map(|e| model.score(&e.text)).collect();
    assert!(mean(&t_pos) > mean(&t_neg));

    // paired comparison on unseen documents
    let fresh = fixtures::documents(Style::Encyclopedia, 100, 99, "x");
    let wins = fresh
        .iter()
        .enumerate()
        .filter(|(i, d)| model.score(&d.text) > model.score(&fixtures::shuffle_words(&d.text, *i as u64)))
        .count();
    assert!(wins >= 90, "{wins}/100");

    // purity
    assert_eq!(model.score(&fresh[0].text), model.score(&fresh[0].text));

    // deterministic per seed, and the file round trip keeps scores
    let again = ClassifierModel::train(
        &ds.train_examples(),
        &ds.valid_examples(),
        &Hyperparams {
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(again, model);
    let path = store.root().join("models/q.bin");
    model.save(&path).unwrap();
    let loaded = ClassifierModel::load(&path).unwrap();
    assert_eq!(loaded.score(&fresh[1].text), model.score(&fresh[1].text));
}

#[test]
fn filter_thresholds() {
    let train_docs = fixtures::documents(Style::Web, 400, 31, "t");
    let mut mixed = fixtures::documents(Style::Web, 201, 32, "m");
    for (i, d) in mixed.iter_mut().enumerate().filter(|(i, _)| i % 3 == 0) {
        d.text = fixtures::shuffle_words(&d.text, i as u64);
    }
    let (_t, store) = store_with(&[("train", &train_docs), ("mixed", &mixed)]);
    let ds = build_dataset(&store, &shuffle_recipe("ds", "train", 600), &Silent).unwrap();
    let model = ClassifierModel::train(&ds.train_examples(), &ds.valid_examples(), &Hyperparams::default()).unwrap();

    let all = filter(&store, "mixed", &model, 0.0, "q0", "h", &Silent).unwrap();
    let input_docs = store.load_all(&store.get("mixed").unwrap()).unwrap();
    assert_eq!(store.load_all(&all.corpus).unwrap(), input_docs);
    assert_eq!(all.histogram.total, 201);
    assert_eq!(all.histogram.counts.len(), 100);

    let top = filter(&store, "mixed", &model, 1.0, "q1", "h", &Silent).unwrap();
    let ones = input_docs.iter().filter(|d| model.score(&d.text) == 1.0).count() as u64;
    assert_eq!(top.kept, ones);

    let scores = oasis_core::quality::filter::read_scores(&store.root().join("quality/q0/scores.jsonl")).unwrap();
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.score).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let half = filter(&store, "mixed", &model, median, "qm", "h", &Silent).unwrap();
    assert!(
        (half.corpus.doc_count as f64 - 201.0 / 2.0).abs() <= 1.0,
        "{}",
        half.corpus.doc_count
    );

    let mut last = u64::MAX;
    for (i, t) in [0.1, 0.3, 0.5, 0.7, 0.9].into_iter().enumerate() {
        let run = filter(&store, "mixed", &model, t, &format!("mono{i}"), "h", &Silent).unwrap();
        assert!(run.kept <= last);
        assert_eq!(run.kept, run.corpus.doc_count);
        last = run.kept;
    }
    assert!(matches!(
        filter(&store, "mixed", &model, 0.5, "q0", "h", &Silent),
        Err(Error::NameTaken(_))
    ));
    assert!(filter(&store, "mixed", &model, 1.5, "bad", "h", &Silent).is_err());
    assert_eq!(score_corpus(&store, "mixed", &model, &Silent).unwrap(), scores);
}

fn mean_score(m: &dyn QualityScorer, docs: &[Document]) -> f64 {
    docs.iter().map(|d| m.score(&d.text)).sum::<f64>() / docs.len() as f64
}

#[test]
fn negative_centric_training_narrows_the_source_gap() {
    let a = fixtures::documents(Style::Web, 500, 41, "a");
    let reference = fixtures::documents(Style::Encyclopedia, 500, 42, "r");
    let (_t, store) = store_with(&[("a", &a), ("ref", &reference)]);
    let neg = build_dataset(&store, &shuffle_recipe("neg", "a", 800), &Silent).unwrap();
    let hp = Hyperparams::default();
    let c_neg = ClassifierModel::train(&neg.train_examples(), &neg.valid_examples(), &hp).unwrap();

    // same negatives, but positives from the reference corpus
    let ref_pos: Vec<Example> = reference
        .iter()
        .take(400)
        .map(|d| Example {
            text: d.text.clone(),
            label: 1,
        })
        .collect();
    let only_neg = |xs: Vec<Example>| xs.into_iter().filter(|e| e.label == 0).collect::<Vec<_>>();
    let mut wiki_train = ref_pos.clone();
    wiki_train.extend(only_neg(neg.train_examples()));
    let mut wiki_valid: Vec<Example> = reference[400..]
        .iter()
        .map(|d| Example {
            text: d.text.clone(),
            label: 1,
        })
        .collect();
    wiki_valid.extend(only_neg(neg.valid_examples()));
    let c_wiki = ClassifierModel::train(&wiki_train, &wiki_valid, &hp).unwrap();

    let held_a = fixtures::documents(Style::Web, 100, 43, "ha");
    let held_b = fixtures::documents(Style::Forum, 100, 44, "hb");
    let gap = |m: &ClassifierModel| (mean_score(m, &held_a) - mean_score(m, &held_b)).abs();
    let (g_neg, g_wiki) = (gap(&c_neg), gap(&c_wiki));
    assert!(g_neg < g_wiki, "negative-centric gap {g_neg} vs reference-positive gap {g_wiki}");
}
