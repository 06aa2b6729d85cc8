use crate::corpus::{Sentence, Span};

/// Whole-token rewrites applied after case folding.
const SUFFIX_FAMILY: &[(&str, &str)] = &[
    ("tagger", "tag"),
    ("taggers", "tag"),
    ("tagging", "tag"),
    ("parser", "pars"),
    ("parsers", "pars"),
    ("parsing", "pars"),
];

const STOPWORDS: &[&str] = &["a", "an", "and", "at", "by", "for", "from", "in", "of", "on", "the", "to", "via", "with"];

fn normalize_token(token: &str) -> String {
    if let Some((_, to)) = SUFFIX_FAMILY.iter().find(|(from, _)| *from == token) {
        return (*to).to_string();
    }
    if token.chars().count() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        return token[..token.len() - 1].to_string();
    }
    token.to_string()
}

/// Linking key of a surface form: case-folded, `-`/`_` read as spaces,
/// whitespace collapsed, plural `s` dropped from tokens longer than three
/// characters and the tagger/parser suffix families merged.
pub fn normalize(surface: &str) -> String {
    let folded = surface.to_lowercase().replace(['-', '_'], " ");
    folded.split_whitespace().map(normalize_token).collect::<Vec<_>>().join(" ")
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == '-' || c == '_' || c == '/')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn initials<'a>(ws: impl Iterator<Item = &'a String>) -> String {
    ws.filter_map(|w| w.chars().next()).collect()
}

/// Whether `acronym` spells the initials of `long_form`, with or without its
/// stop-words, ignoring case and a trailing plural `s` on the acronym.
pub fn is_acronym_of(acronym: &str, long_form: &str) -> bool {
    let letters: String = acronym.chars().filter(|c| !matches!(c, '.' | '-' | '&')).collect();
    if letters.chars().count() < 2 || !letters.chars().all(char::is_alphabetic) {
        return false;
    }
    let ws = words(long_form);
    if ws.len() < 2 {
        return false;
    }
    let mut candidates = vec![letters.to_lowercase()];
    if letters.ends_with('s') && letters.chars().count() > 2 {
        candidates.push(letters[..letters.len() - 1].to_lowercase());
    }
    let all = initials(ws.iter());
    let content = initials(ws.iter().filter(|w| !STOPWORDS.contains(&w.as_str())));
    candidates.iter().any(|c| *c == all || *c == content)
}

/// `(long form, acronym)` pairs where one tagged span is immediately followed
/// by another in parentheses and one of the two abbreviates the other.
pub fn detect_acronym(sentence: &Sentence, spans: &[Span]) -> Vec<(String, String)> {
    let mut sorted: Vec<&Span> = spans.iter().filter(|s| s.end <= sentence.len() && s.start < s.end).collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut pairs = Vec::new();
    for outer in &sorted {
        for inner in &sorted {
            let wrapped = inner.start == outer.end + 1
                && sentence.tokens[outer.end] == "("
                && sentence.tokens.get(inner.end).map(String::as_str) == Some(")");
            if !wrapped {
                continue;
            }
            let first = sentence.surface(outer.start, outer.end);
            let second = sentence.surface(inner.start, inner.end);
            if is_acronym_of(&second, &first) {
                pairs.push((first, second));
            } else if is_acronym_of(&first, &second) {
                pairs.push((second, first));
            }
        }
    }
    pairs
}
