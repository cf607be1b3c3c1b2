//! Deterministic synthetic text for tests, benchmarks and demos.
//!
//! Every [`Style`] shares one small English grammar but draws content words
//! from its own vocabulary, so styles behave like distinct sources: same
//! syntax, different topics. All text here is generated and free of
//! third-party rights.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::Document;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Style {
    /// Encyclopedic prose; the stand-in reference corpus.
    Encyclopedia,
    /// Consumer web pages.
    Web,
    /// Cooking and sports forum posts.
    Forum,
}

struct Lexicon {
    nouns: &'static [&'static str],
    verbs: &'static [&'static str],
    adjectives: &'static [&'static str],
    adverbs: &'static [&'static str],
    places: &'static [&'static str],
    names: &'static [&'static str],
}

const ENCYCLOPEDIA: Lexicon = Lexicon {
    nouns: &[
        "empire",
        "river",
        "treaty",
        "species",
        "mountain",
        "theory",
        "dynasty",
        "province",
        "glacier",
        "cathedral",
        "manuscript",
        "volcano",
        "senate",
        "harbor",
        "monastery",
        "comet",
        "fossil",
        "language",
        "kingdom",
        "census",
        "archipelago",
        "observatory",
        "parliament",
        "reform",
        "basin",
        "crater",
        "migration",
        "alliance",
        "delta",
        "plateau",
        "chronicle",
        "settlement",
        "frontier",
        "mineral",
        "orbit",
        "tribe",
        "canal",
        "fortress",
        "council",
        "expedition",
    ],
    verbs: &[
        "founded",
        "described",
        "surrounded",
        "divided",
        "governed",
        "documented",
        "crossed",
        "annexed",
        "measured",
        "influenced",
        "preserved",
        "named",
        "formed",
        "replaced",
        "recorded",
        "explored",
        "established",
        "defended",
        "studied",
        "mapped",
        "inherited",
        "restored",
        "classified",
        "abolished",
    ],
    adjectives: &[
        "ancient",
        "northern",
        "medieval",
        "volcanic",
        "coastal",
        "imperial",
        "extinct",
        "vast",
        "fertile",
        "eastern",
        "royal",
        "sacred",
        "arid",
        "colonial",
        "western",
        "early",
        "prominent",
        "tropical",
        "remote",
        "classical",
    ],
    adverbs: &[
        "gradually",
        "eventually",
        "formally",
        "largely",
        "historically",
        "briefly",
        "officially",
        "primarily",
        "later",
        "widely",
    ],
    places: &[
        "the Lower Valley",
        "the Iron Coast",
        "the Northern Isles",
        "the Red Steppe",
        "the Old Capital",
        "the Southern Plain",
        "the Silver Delta",
        "the High Pass",
    ],
    names: &[
        "Aurelia Voss",
        "Tomas Brandt",
        "Ingrid Halvor",
        "Casimir Lund",
        "Helena Marek",
        "Osric Vale",
        "Lucia Ferrant",
        "Anselm Roth",
    ],
};

const WEB: Lexicon = Lexicon {
    nouns: &[
        "website",
        "customer",
        "product",
        "update",
        "account",
        "phone",
        "software",
        "price",
        "order",
        "download",
        "subscription",
        "browser",
        "password",
        "device",
        "app",
        "discount",
        "delivery",
        "checkout",
        "laptop",
        "charger",
        "warranty",
        "newsletter",
        "cart",
        "review",
        "screen",
        "router",
        "battery",
        "plugin",
        "server",
        "coupon",
        "tablet",
        "headset",
        "backup",
        "dashboard",
        "login",
        "camera",
        "speaker",
        "profile",
        "upgrade",
        "refund",
    ],
    verbs: &[
        "installed",
        "ordered",
        "updated",
        "shipped",
        "downloaded",
        "cancelled",
        "reset",
        "upgraded",
        "connected",
        "tested",
        "purchased",
        "returned",
        "configured",
        "synced",
        "charged",
        "logged",
        "activated",
        "rated",
        "replaced",
        "streamed",
        "backed",
        "launched",
        "booked",
        "scanned",
    ],
    adjectives: &[
        "wireless",
        "new",
        "cheap",
        "fast",
        "premium",
        "free",
        "secure",
        "digital",
        "portable",
        "smart",
        "online",
        "latest",
        "compact",
        "affordable",
        "reliable",
        "mobile",
        "exclusive",
        "refurbished",
        "instant",
        "unlimited",
    ],
    adverbs: &[
        "quickly",
        "easily",
        "instantly",
        "automatically",
        "securely",
        "online",
        "today",
        "finally",
        "directly",
        "again",
    ],
    places: &[
        "the online store",
        "the help center",
        "the app store",
        "the main menu",
        "the support page",
        "the checkout page",
        "the settings panel",
        "the user forum",
    ],
    names: &[
        "Jordan Miles",
        "Priya Nair",
        "Kevin Ortiz",
        "Sophie Laurent",
        "Daniel Kim",
        "Maya Collins",
        "Ethan Brooks",
        "Nora Patel",
    ],
};

const FORUM: Lexicon = Lexicon {
    nouns: &[
        "recipe",
        "oven",
        "sauce",
        "team",
        "match",
        "coach",
        "garden",
        "bread",
        "dough",
        "season",
        "goalkeeper",
        "kitchen",
        "tomato",
        "striker",
        "soup",
        "referee",
        "pan",
        "league",
        "butter",
        "stadium",
        "garlic",
        "pitch",
        "onion",
        "tournament",
        "cake",
        "jersey",
        "flour",
        "midfield",
        "salad",
        "trophy",
        "spoon",
        "fixture",
        "cheese",
        "rival",
        "pepper",
        "penalty",
        "crust",
        "supporter",
        "lemon",
        "derby",
    ],
    verbs: &[
        "baked", "stirred", "scored", "coached", "tasted", "roasted", "defended", "chopped", "won", "seasoned", "passed", "simmered",
        "trained", "grilled", "tackled", "kneaded", "watched", "mixed", "cheered", "served", "blocked", "melted", "drafted", "whisked",
    ],
    adjectives: &[
        "crispy",
        "spicy",
        "home",
        "young",
        "fresh",
        "golden",
        "tactical",
        "sweet",
        "defensive",
        "creamy",
        "local",
        "savory",
        "rival",
        "warm",
        "veteran",
        "tender",
        "brave",
        "rustic",
        "quick",
        "seasonal",
    ],
    adverbs: &[
        "slowly",
        "perfectly",
        "bravely",
        "gently",
        "loudly",
        "twice",
        "carefully",
        "happily",
        "overnight",
        "early",
    ],
    places: &[
        "the home ground",
        "the back garden",
        "the village bakery",
        "the training camp",
        "the farmers market",
        "the away end",
        "the test kitchen",
        "the county league",
    ],
    names: &[
        "Rosa Delgado",
        "Frank Mills",
        "Greta Holm",
        "Samir Haddad",
        "Lily Warren",
        "Victor Cole",
        "Agnes Pratt",
        "Hugo Reyes",
    ],
};

impl Style {
    fn lexicon(self) -> &'static Lexicon {
        match self {
            Style::Encyclopedia => &ENCYCLOPEDIA,
            Style::Web => &WEB,
            Style::Forum => &FORUM,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Style::Encyclopedia => "encyclopedia",
            Style::Web => "web",
            Style::Forum => "forum",
        }
    }

    /// Multi-token proper names the style uses; handy as a gazetteer.
    pub fn names(self) -> &'static [&'static str] {
        self.lexicon().names
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn sentence<R: Rng>(lex: &Lexicon, rng: &mut R) -> String {
    let n = |rng: &mut R| *lex.nouns.choose(rng).unwrap();
    let v = |rng: &mut R| *lex.verbs.choose(rng).unwrap();
    let a = |rng: &mut R| *lex.adjectives.choose(rng).unwrap();
    let adv = |rng: &mut R| *lex.adverbs.choose(rng).unwrap();
    let p = |rng: &mut R| *lex.places.choose(rng).unwrap();
    let name = |rng: &mut R| *lex.names.choose(rng).unwrap();
    let s = match rng.random_range(0..8) {
        0 => format!("the {} {} {} the {} {}", a(rng), n(rng), v(rng), n(rng), adv(rng)),
        1 => format!("in {}, the {} {} {}", p(rng), n(rng), v(rng), adv(rng)),
        2 => format!("a {} of the {} {} {} near the {}", n(rng), a(rng), n(rng), v(rng), n(rng)),
        3 => format!("{} {} that the {} was {}", name(rng), v(rng), n(rng), a(rng)),
        4 => format!(
            "during the {}, {} {} the {} {} and the {}",
            n(rng),
            name(rng),
            v(rng),
            a(rng),
            n(rng),
            n(rng)
        ),
        5 => format!("many {}s {} the {} because the {} was {}", n(rng), v(rng), n(rng), n(rng), a(rng)),
        6 => format!("it is {} that the {} {} with the {} in {}", a(rng), n(rng), v(rng), n(rng), p(rng)),
        _ => format!("the {} and the {} were {} {} by {}", n(rng), n(rng), adv(rng), v(rng), name(rng)),
    };
    format!("{}.", capitalize(&s))
}

/// One document of `sentences` sentences in `style`, deterministic in `seed`.
pub fn paragraph(style: Style, sentences: usize, seed: u64) -> String {
    let mut rng = text::rng(seed);
    let lex = style.lexicon();
    (0..sentences).map(|_| sentence(lex, &mut rng)).collect::<Vec<_>>().join(" ")
}

/// `n` documents of 6–12 sentences each, ids `<prefix>-<i>`.
pub fn documents(style: Style, n: usize, seed: u64, prefix: &str) -> Vec<Document> {
    let mut rng = text::rng(seed);
    (0..n)
        .map(|i| {
            let sentences = rng.random_range(6..=12);
            let mut d = Document::new(format!("{prefix}-{i:05}"), paragraph(style, sentences, rng.random()));
            d.source = style.label().to_string();
            d.lang = "en".into();
            d
        })
        .collect()
}

/// Seeded Fisher-Yates shuffle of the whitespace tokens of `text`.
pub fn shuffle_words(text: &str, seed: u64) -> String {
    use rand::seq::SliceRandom;
    let mut toks: Vec<&str> = text.split_whitespace().collect();
    toks.shuffle(&mut text::rng(seed));
    toks.join(" ")
}

/// Text of `len` tokens drawn uniformly from a `vocab`-word synthetic
/// vocabulary (`w0`, `w1`, ...). Unrelated draws share almost no k-grams.
pub fn random_words(len: usize, vocab: u32, seed: u64) -> String {
    let mut rng = text::rng(seed);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Two random shingle sets with exact Jaccard `shared / union`: `shared`
/// common elements and the remaining `union - shared` split between the sides.
pub fn shingle_pair(shared: usize, union: usize, seed: u64) -> (Vec<u64>, Vec<u64>) {
    assert!(shared <= union);
    let mut rng = text::rng(seed);
    let mut all: Vec<u64> = Vec::with_capacity(union);
    let mut seen = std::collections::HashSet::with_capacity(union);
    while all.len() < union {
        let x: u64 = rng.random();
        if seen.insert(x) {
            all.push(x);
        }
    }
    let a_only = (union - shared) / 2;
    let mut a: Vec<u64> = all[..shared + a_only].to_vec();
    let mut b: Vec<u64> = all[..shared].iter().chain(&all[shared + a_only..]).copied().collect();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// `n` documents of `len` random words in which `pairs` documents are copies
/// of other documents with 1 to 3 words substituted. Returns the documents
/// (ids `d-<i>`) and the planted `(original, copy)` index pairs.
pub fn near_duplicate_corpus(n: usize, pairs: usize, len: usize, seed: u64) -> (Vec<Document>, Vec<(usize, usize)>) {
    use rand::seq::SliceRandom;
    assert!(pairs * 2 <= n);
    let mut rng = text::rng(seed);
    let mut texts: Vec<String> = (0..n - pairs).map(|_| random_words(len, 1_000_000, rng.random())).collect();
    let mut originals: Vec<usize> = (0..texts.len()).collect();
    originals.shuffle(&mut rng);
    originals.truncate(pairs);
    let mut planted = Vec::with_capacity(pairs);
    for &o in &originals {
        let mut words: Vec<String> = texts[o].split(' ').map(str::to_string).collect();
        for _ in 0..rng.random_range(1..=3) {
            let at = rng.random_range(0..words.len());
            words[at] = format!("edit{}", rng.random::<u32>());
        }
        texts.push(words.join(" "));
        planted.push((o, texts.len() - 1));
    }
    let docs = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("d-{i:05}"), t))
        .collect();
    (docs, planted)
}

/// Serializes documents as line-delimited JSON records for ingestion.
pub fn to_jsonl(docs: &[Document]) -> String {
    let mut s = String::new();
    for d in docs {
        s.push_str(&serde_json::to_string(d).expect("document serializes"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_styled() {
        assert_eq!(paragraph(Style::Web, 5, 3), paragraph(Style::Web, 5, 3));
        assert_ne!(paragraph(Style::Web, 5, 3), paragraph(Style::Web, 5, 4));
        let docs = documents(Style::Forum, 3, 1, "f");
        assert_eq!(docs[2].id, "f-00002");
        assert!(docs.iter().all(|d| text::sentences(&d.text).len() >= 6));
    }

    #[test]
    fn shingle_pair_has_exact_overlap() {
        let (a, b) = shingle_pair(80, 100, 1);
        assert_eq!((a.len(), b.len()), (90, 90));
        let inter = a.iter().filter(|x| b.binary_search(x).is_ok()).count();
        assert_eq!(inter, 80);
    }
}
