use oasis_core::corpus::reservoir;
use oasis_core::dedup::{collision_probability, estimated_jaccard, jaccard, minhash, multi_pass_recall, shingle};
use oasis_core::hist::{BinSpec, Histogram};
use oasis_core::quality::{contaminate, ContaminationRule, DonorPool, Op, Unit};
use oasis_core::Document;
use proptest::prelude::*;

fn sorted_words(t: &str) -> Vec<&str> {
    let mut v: Vec<&str> = t.split_whitespace().collect();
    v.sort_unstable();
    v
}

fn text_of(words: &[u16]) -> String {
    words.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ")
}

proptest! {
    #[test]
    fn histogram_total_is_value_count(values in prop::collection::vec(-10.0f64..300.0, 0..500), bins in 1usize..60) {
        let h = Histogram::from_values(BinSpec::linear(0.0, 200.0, bins), values.iter().copied()).unwrap();
        prop_assert_eq!(h.total, values.len() as u64);
        prop_assert_eq!(h.counts.iter().sum::<u64>(), h.total);
        prop_assert_eq!(h.edges.len(), bins + 1);
        let coarse = h.rebin(BinSpec::linear(0.0, 200.0, (bins / 3).max(1))).unwrap();
        prop_assert_eq!(coarse.counts.iter().sum::<u64>(), h.total);
    }

    #[test]
    fn log_histogram_total(values in prop::collection::vec(0.5f64..1e6, 0..300)) {
        let h = Histogram::from_values(BinSpec::logarithmic(1.0, 1e5, 25), values.iter().copied()).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), values.len() as u64);
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in prop::collection::vec(0u16..50, 5..60), b in prop::collection::vec(0u16..50, 5..60)) {
        let (sa, sb) = (shingle(&text_of(&a), 2).unwrap(), shingle(&text_of(&b), 2).unwrap());
        let j = jaccard(&sa, &sb);
        prop_assert_eq!(j, jaccard(&sb, &sa));
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(jaccard(&sa, &sa), 1.0);
        let (ma, mb) = (minhash(&sa, 64, 3).unwrap(), minhash(&sb, 64, 3).unwrap());
        let e = estimated_jaccard(&ma, &mb);
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert_eq!(e, estimated_jaccard(&mb, &ma));
    }

    #[test]
    fn collision_probability_is_monotone(s1 in 0.0f64..1.0, s2 in 0.0f64..1.0, b in 1usize..16, r in 1usize..64, t in 1u32..8) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let (p_lo, p_hi) = (collision_probability(lo, b, r), collision_probability(hi, b, r));
        prop_assert!(p_lo <= p_hi);
        prop_assert!(collision_probability(hi, b, r + 1) >= p_hi);
        prop_assert!(multi_pass_recall(p_hi, t + 1) >= multi_pass_recall(p_hi, t));
        prop_assert!((0.0..=1.0).contains(&multi_pass_recall(p_lo, t)));
    }

    #[test]
    fn word_shuffle_keeps_the_multiset(words in prop::collection::vec(0u16..40, 4..80), seed in any::<u64>(), intensity in 0.05f64..1.0) {
        let doc = Document::new("d", text_of(&words));
        let mut rule = ContaminationRule::new(Unit::Word, Op::Shuffle, intensity);
        rule.seed_mix = seed;
        let out = contaminate(&doc, &rule, &DonorPool::default()).unwrap();
        prop_assert_eq!(sorted_words(&out.text), sorted_words(&doc.text));
        let again = contaminate(&doc, &rule, &DonorPool::default()).unwrap();
        prop_assert_eq!(&again, &out);
        prop_assert_ne!(&out.id, &doc.id);
    }

    #[test]
    fn word_delete_only_removes(words in prop::collection::vec(0u16..40, 4..80), seed in any::<u64>()) {
        let doc = Document::new("d", text_of(&words));
        let mut rule = ContaminationRule::new(Unit::Word, Op::Delete, 0.3);
        rule.seed_mix = seed;
        let out = contaminate(&doc, &rule, &DonorPool::default()).unwrap();
        let n_out = out.text.split_whitespace().count();
        prop_assert!(n_out < words.len());
        // the survivors appear in their original order
        let src: Vec<&str> = doc.text.split_whitespace().collect();
        let mut i = 0;
        for w in out.text.split_whitespace() {
            while i < src.len() && src[i] != w {
                i += 1;
            }
            prop_assert!(i < src.len());
            i += 1;
        }
    }

    #[test]
    fn reservoir_returns_min_n_len(len in 0usize..200, n in 0usize..50, seed in any::<u64>()) {
        let got = reservoir((0..len).map(Ok), n, seed).unwrap();
        prop_assert_eq!(got.len(), n.min(len));
        let mut dedup = got.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), got.len());
    }
}
