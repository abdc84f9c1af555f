//! Fallback token accounting for backends that do not report counts.
//!
//! A proxy token is a maximal run of word characters (alphanumerics and `_`)
//! or a single punctuation character. Whitespace is never counted.

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Counts proxy tokens in `text`.
pub fn proxy_token_count(text: &str) -> u64 {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if is_word(c) {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Longest prefix of `text` holding at most `max_tokens` proxy tokens.
/// Trailing whitespace after the last kept token is dropped.
pub fn truncate_to_tokens(text: &str, max_tokens: u64) -> &str {
    let mut count = 0;
    let mut in_word = false;
    let mut end = 0;
    for (i, c) in text.char_indices() {
        if is_word(c) {
            if !in_word {
                if count == max_tokens {
                    return &text[..end];
                }
                count += 1;
                in_word = true;
            }
            end = i + c.len_utf8();
        } else {
            in_word = false;
            if !c.is_whitespace() {
                if count == max_tokens {
                    return &text[..end];
                }
                count += 1;
                end = i + c.len_utf8();
            }
        }
    }
    text
}
