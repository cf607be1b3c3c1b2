//! Shared inputs for the criterion benches under `benches/`.

use oasis_core::fixtures::{self, Style};

/// `n` fixture paragraphs of roughly `sentences` sentences each.
pub fn texts(style: Style, n: usize, sentences: usize) -> Vec<String> {
    (0..n as u64).map(|i| fixtures::paragraph(style, sentences, i)).collect()
}
