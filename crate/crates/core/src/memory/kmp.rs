//! Knuth–Morris–Pratt substring search over label bytes.
//!
//! Matching is byte-wise, which is exact for UTF-8 because no character's
//! encoding occurs inside another's. An empty pattern matches nowhere.

/// `fail[i]` is the length of the longest proper border of `pattern[..=i]`.
pub fn failure_function(pattern: &[u8]) -> Vec<usize> {
    let mut fail = vec![0usize; pattern.len()];
    let mut k = 0;
    for i in 1..pattern.len() {
        while k > 0 && pattern[i] != pattern[k] {
            k = fail[k - 1];
        }
        if pattern[i] == pattern[k] {
            k += 1;
        }
        fail[i] = k;
    }
    fail
}

/// Start offsets (in bytes) of every occurrence of `pattern` in `text`,
/// overlapping occurrences included.
pub fn find_all(text: &str, pattern: &str) -> Vec<usize> {
    let (t, p) = (text.as_bytes(), pattern.as_bytes());
    if p.is_empty() || p.len() > t.len() {
        return Vec::new();
    }
    let fail = failure_function(p);
    let mut out = Vec::new();
    let mut k = 0;
    for (i, &b) in t.iter().enumerate() {
        while k > 0 && b != p[k] {
            k = fail[k - 1];
        }
        if b == p[k] {
            k += 1;
        }
        if k == p.len() {
            out.push(i + 1 - p.len());
            k = fail[k - 1];
        }
    }
    out
}

pub fn contains(text: &str, pattern: &str) -> bool {
    !find_all(text, pattern).is_empty()
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b >= 0x80
}

/// True if `pattern` occurs in `text` starting and ending on token boundaries.
pub fn contains_word(text: &str, pattern: &str) -> bool {
    let t = text.as_bytes();
    let n = pattern.len();
    find_all(text, pattern).into_iter().any(|s| {
        let before = s == 0 || !is_word_byte(t[s - 1]);
        let after = s + n == t.len() || !is_word_byte(t[s + n]);
        before && after
    })
}
