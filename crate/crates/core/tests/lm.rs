use oasis_core::fixtures::{self, Style};
use oasis_core::lm::{LmConfig, NGramModel, Smoothing};
use rand::seq::IndexedRandom;

fn reference_texts(n: usize, seed: u64) -> Vec<String> {
    fixtures::documents(Style::Encyclopedia, n, seed, "ref")
        .into_iter()
        .map(|d| d.text)
        .collect()
}

/// Interpolated KN for a bigram model, written out from raw counts.
/// `top` holds bigram counts keyed by (context, word).
fn kn_bigram_oracle(top: &[((&str, &str), f64)], predictable: &[&str], context: &str, w: &str) -> f64 {
    let d2 = {
        let n1 = top.iter().filter(|(_, c)| *c == 1.0).count() as f64;
        let n2 = top.iter().filter(|(_, c)| *c == 2.0).count() as f64;
        (n1 / (n1 + 2.0 * n2)).clamp(0.05, 0.95)
    };
    // continuation count of x = number of distinct left neighbours
    let cont = |x: &str| top.iter().filter(|((_, b), _)| *b == x).count() as f64;
    let cont_types: Vec<f64> = predictable.iter().map(|x| cont(x)).filter(|&c| c > 0.0).collect();
    let cont_total: f64 = cont_types.iter().sum();
    let d1 = {
        let n1 = cont_types.iter().filter(|&&c| c == 1.0).count() as f64;
        let n2 = cont_types.iter().filter(|&&c| c == 2.0).count() as f64;
        (n1 / (n1 + 2.0 * n2)).clamp(0.05, 0.95)
    };
    let uniform = 1.0 / predictable.len() as f64;
    let p1 = ((cont(w) - d1).max(0.0) + d1 * cont_types.len() as f64 * uniform) / cont_total;
    let row: Vec<&((&str, &str), f64)> = top.iter().filter(|((a, _), _)| *a == context).collect();
    if row.is_empty() {
        return p1;
    }
    let total: f64 = row.iter().map(|(_, c)| c).sum();
    let c = row.iter().find(|((_, b), _)| *b == w).map_or(0.0, |(_, c)| *c);
    ((c - d2).max(0.0) + d2 * row.len() as f64 * p1) / total
}

#[test]
fn bigram_kn_matches_hand_table() {
    let m = NGramModel::train(&["a b a b a b a"], LmConfig::with_order(2)).unwrap();
    // padded stream: <s> a b a b a b a
    let top = [(("<s>", "a"), 1.0), (("a", "b"), 3.0), (("b", "a"), 3.0)];
    let predictable = ["<unk>", "a", "b"];
    let id = |t: &str| m.token_id(t);
    for ctx in ["<s>", "a", "b", "<unk>"] {
        for w in predictable {
            let want = kn_bigram_oracle(&top, &predictable, ctx, w);
            let got = m.prob(&[id(ctx)], id(w));
            assert!((got - want).abs() < 1e-12, "P({w}|{ctx}) = {got}, oracle {want}");
        }
    }
    // the maximum-likelihood transitions dominate
    for (ctx, next) in [("a", "b"), ("b", "a")] {
        let p = m.prob(&[id(ctx)], id(next));
        assert!(p > 0.5);
        assert!(predictable.iter().all(|w| *w == next || m.prob(&[id(ctx)], id(w)) < p));
    }

    let seq = ["<s>", "a", "b", "a", "b"];
    let log_sum: f64 = seq.windows(2).map(|w| kn_bigram_oracle(&top, &predictable, w[0], w[1]).ln()).sum();
    let want = (-log_sum / 4.0).exp();
    let got = m.perplexity("a b a b");
    assert_eq!(got.token_count, 4);
    assert!((got.ppl - want).abs() < 1e-9, "{} vs {want}", got.ppl);

    // the hand numbers themselves: D2 clamps to 0.95, D1 = 1/3, P1(a) = 17/27
    let p_a_start = 0.05 + 0.95 * 17.0 / 27.0;
    assert!((m.prob(&[id("<s>")], id("a")) - p_a_start).abs() < 1e-12);
}

#[test]
fn sampled_contexts_are_normalized() {
    let texts = reference_texts(200, 11);
    let mut rng = oasis_core::text::rng(3);
    for order in 1..=5 {
        for smoothing in [Smoothing::InterpolatedKneserNey, Smoothing::AddK { k: 0.1 }] {
            let cfg = LmConfig {
                order,
                smoothing,
                ..Default::default()
            };
            let m = NGramModel::train(&texts, cfg).unwrap();
            let ctxs = m.contexts();
            let mut sampled: Vec<Vec<u32>> = (0..100).map(|_| ctxs.choose(&mut rng).unwrap().clone()).collect();
            // unseen contexts back off and must normalize too
            sampled.push(vec![0; order - 1]);
            for ctx in &sampled {
                let mass = m.mass(ctx);
                assert!((mass - 1.0).abs() < 1e-6, "order {order} {smoothing:?}: mass {mass}");
                for w in m.predictable_ids() {
                    let p = m.prob(ctx, w);
                    assert!(p > 0.0 && p <= 1.0);
                }
            }
        }
    }
}

#[test]
fn training_text_beats_its_shuffle() {
    let texts = reference_texts(20, 21);
    let m = NGramModel::train(&texts, LmConfig::default()).unwrap();
    for (i, t) in texts.iter().enumerate() {
        let clean = m.perplexity(t).ppl;
        let shuffled = m.perplexity(&fixtures::shuffle_words(t, i as u64)).ppl;
        assert!(clean >= 1.0);
        assert!(clean < shuffled, "doc {i}: {clean} vs {shuffled}");
    }
}

#[test]
fn in_domain_beats_out_of_domain() {
    let texts = reference_texts(300, 31);
    let m = NGramModel::train(&texts, LmConfig::default()).unwrap();
    let mean = |v: &[String]| v.iter().map(|t| m.perplexity(t).ppl).sum::<f64>() / v.len() as f64;
    let held_out = reference_texts(50, 32);
    let web: Vec<String> = fixtures::documents(Style::Web, 50, 33, "w").into_iter().map(|d| d.text).collect();
    assert!(mean(&held_out) < mean(&web));

    // a training sentence vs an unrelated one
    let sentence = oasis_core::text::sentences(&texts[0])[0].to_string();
    let other = fixtures::paragraph(Style::Forum, 1, 5);
    assert!(m.perplexity(&sentence).ppl < m.perplexity(&other).ppl);
}

#[test]
fn higher_order_fits_training_data_at_least_as_well() {
    let texts = reference_texts(100, 41);
    let joined = texts.join(" ");
    let mut prev = f64::INFINITY;
    for order in 1..=5 {
        let m = NGramModel::train(&texts, LmConfig::with_order(order)).unwrap();
        let ppl = texts.iter().map(|t| m.perplexity(t).ppl.ln()).sum::<f64>();
        assert!(ppl <= prev, "order {order}: {ppl} > {prev}");
        prev = ppl;
        assert!(m.perplexity(&joined).ppl.is_finite());
    }
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let texts = reference_texts(150, 51);
    let a = NGramModel::train(&texts, LmConfig::default()).unwrap().to_bytes();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| NGramModel::train(&texts, LmConfig::default()).unwrap().to_bytes());
    assert_eq!(a, b);
}

#[test]
fn corpus_training_matches_in_memory_training() {
    let dir = tempfile::tempdir().unwrap();
    let docs = fixtures::documents(Style::Encyclopedia, 120, 61, "r");
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, fixtures::to_jsonl(&docs)).unwrap();
    let store = oasis_core::CorpusStore::open(dir.path().join("data")).unwrap();
    let handle = store.ingest(input.to_str().unwrap(), "ref", 4096).unwrap().corpus;
    assert!(handle.shards.len() > 1);
    let cfg = LmConfig::with_order(3);
    let from_store = NGramModel::train_corpus(&store, &handle, cfg, &oasis_core::Silent).unwrap();
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let in_memory = NGramModel::train(&texts, cfg).unwrap();
    assert_eq!(from_store.to_bytes(), in_memory.to_bytes());
}
