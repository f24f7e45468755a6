//! Word-level tokenisation and the stop-word list used by corpus statistics
//! and the TF-IDF baseline.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

/// Anything that splits text into tokens.
pub trait TextTokenizer {
    fn tokens(&self, text: &str) -> Vec<String>;
}

/// Case-preserving tokenizer for social-media style text: URLs, @mentions
/// and #hashtags stay whole, words keep inner apostrophes and hyphens,
/// every other non-space character is its own token.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

fn casual_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            https?://\S+
            | [@\#][\p{L}\p{N}_]+
            | [\p{L}\p{N}_]+(?:['’\-][\p{L}\p{N}_]+)*
            | \.{2,}
            | \S",
        )
        .expect("valid tokenizer pattern")
    })
}

impl TextTokenizer for WordTokenizer {
    fn tokens(&self, text: &str) -> Vec<String> {
        casual_pattern()
            .find_iter(text)
            .map(|m| m.as_str().to_string())
            .collect()
    }
}

/// Fixed English stop-word list (lowercase).
pub const STOP_WORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
    "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
    "wouldn't",
];

fn stop_word_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOP_WORDS.iter().copied().collect())
}

/// Stop-word membership, compared case-insensitively.
pub fn is_stop_word(token: &str) -> bool {
    let set = stop_word_set();
    set.contains(token) || set.contains(token.to_lowercase().as_str())
}
