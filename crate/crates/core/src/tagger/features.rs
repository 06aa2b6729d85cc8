//! Emission feature templates of the linear scorer.

use crate::corpus::Sentence;

pub const FEATURE_TEMPLATE_VERSION: &str = "linear-v1";

/// Capitalization shape class of a token.
pub fn shape(token: &str) -> &'static str {
    let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        if token.chars().any(|c| c.is_ascii_digit()) { "digit" } else { "punct" }
    } else if letters.iter().all(|c| c.is_lowercase()) {
        "lower"
    } else if letters.iter().all(|c| c.is_uppercase()) {
        "upper"
    } else if letters[0].is_uppercase() && letters[1..].iter().all(|c| c.is_lowercase()) {
        "title"
    } else {
        "mixed"
    }
}

fn context(sentence: &Sentence, t: usize, offset: isize) -> String {
    let idx = t as isize + offset;
    if idx < 0 {
        "<s>".to_string()
    } else if idx as usize >= sentence.len() {
        "</s>".to_string()
    } else {
        sentence.tokens[idx as usize].to_lowercase()
    }
}

/// Feature names active at position `t`: bias, token identity, lowercased
/// token, POS, shape, two tokens of context on each side, and prefixes and
/// suffixes up to length three.
pub fn extract(sentence: &Sentence, t: usize) -> Vec<String> {
    let token = &sentence.tokens[t];
    let lower = token.to_lowercase();
    let mut out = vec![
        "bias".to_string(),
        format!("token={token}"),
        format!("lower={lower}"),
        format!("pos={}", sentence.pos_tags[t]),
        format!("shape={}", shape(token)),
    ];
    for offset in [-2isize, -1, 1, 2] {
        out.push(format!("w[{offset:+}]={}", context(sentence, t, offset)));
    }
    let chars: Vec<char> = lower.chars().collect();
    for k in 1..=3.min(chars.len()) {
        out.push(format!("prefix{k}={}", chars[..k].iter().collect::<String>()));
        out.push(format!("suffix{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
    }
    out
}
