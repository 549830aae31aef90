//! Word-run tokenization shared by chunking, counting and the hash embedder.

use std::ops::Range;

/// Word delimiters: any whitespace, `=` and `/`.
#[inline]
pub fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || c == '=' || c == '/'
}

/// Number of maximal runs of non-delimiter characters in `text`.
pub fn count_words(text: &str) -> usize {
    word_spans(text).count()
}

/// Byte ranges of every word in `text`, in order.
pub fn word_spans(text: &str) -> WordSpans<'_> {
    WordSpans {
        text,
        chars: text.char_indices(),
    }
}

/// Iterator over the words of `text` as string slices.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    word_spans(text).map(move |r| &text[r])
}

pub struct WordSpans<'a> {
    text: &'a str,
    chars: std::str::CharIndices<'a>,
}

impl Iterator for WordSpans<'_> {
    type Item = Range<usize>;

    fn next(&mut self) -> Option<Range<usize>> {
        let start = loop {
            let (i, c) = self.chars.next()?;
            if !is_delimiter(c) {
                break i;
            }
        };
        for (i, c) in self.chars.by_ref() {
            if is_delimiter(c) {
                return Some(start..i);
            }
        }
        Some(start..self.text.len())
    }
}
