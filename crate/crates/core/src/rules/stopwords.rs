//! Compact stopword lists used by stopword-fraction and language-coverage cells.

pub const EN: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "because", "been", "but", "by", "can", "could",
    "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "just", "more", "most", "no", "not", "of", "on", "one", "only", "or", "other", "our", "out", "she", "so", "some", "such", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "to", "up", "was", "we", "were", "what", "when", "which",
    "while", "who", "will", "with", "would", "you", "your",
];

pub const DE: &[&str] = &[
    "aber", "als", "am", "an", "auch", "auf", "aus", "bei", "bin", "bis", "da", "das", "dass", "dem", "den", "der", "des", "die", "doch",
    "du", "durch", "ein", "eine", "einem", "einen", "einer", "er", "es", "für", "hat", "ich", "ihr", "im", "in", "ist", "mit", "nach",
    "nicht", "noch", "nur", "oder", "sich", "sie", "sind", "so", "über", "um", "und", "uns", "von", "vor", "war", "was", "wenn", "wie",
    "wir", "wird", "zu", "zum", "zur",
];

pub const FR: &[&str] = &[
    "au", "aux", "avec", "ce", "ces", "dans", "de", "des", "du", "elle", "en", "est", "et", "eux", "il", "ils", "je", "la", "le", "les",
    "leur", "lui", "ma", "mais", "me", "même", "mes", "moi", "mon", "ne", "nos", "notre", "nous", "on", "ou", "par", "pas", "pour", "qu",
    "que", "qui", "sa", "se", "ses", "son", "sont", "sur", "ta", "te", "tes", "toi", "ton", "tu", "un", "une", "vos", "votre", "vous",
];

pub const ES: &[&str] = &[
    "al", "algo", "como", "con", "de", "del", "el", "ella", "ellos", "en", "entre", "era", "es", "esta", "este", "fue", "ha", "hay", "la",
    "las", "le", "lo", "los", "más", "me", "mi", "muy", "no", "nos", "o", "para", "pero", "por", "porque", "que", "se", "sin", "sobre",
    "su", "sus", "también", "te", "todo", "tu", "un", "una", "uno", "y", "ya", "yo",
];

pub const LANGS: &[(&str, &[&str])] = &[("en", EN), ("de", DE), ("fr", FR), ("es", ES)];

pub fn for_lang(lang: &str) -> Option<&'static [&'static str]> {
    LANGS.iter().find(|(l, _)| *l == lang).map(|(_, w)| *w)
}
