/// POS inventory for the one-hot POS feature block: the 36 Penn Treebank
/// word tags plus seven punctuation tags.
pub const POS_TAGS: [&str; 43] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ",", ".", ":", "(", ")", "''", "``",
];

fn is_joiner(c: char) -> bool {
    c == '-' || c == '_'
}

/// Splits on whitespace and punctuation. Hyphenated compounds
/// ("part-of-speech") and decimal numbers stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            let inner = |p: Option<char>, n: Option<char>| {
                p.is_some_and(|p| p.is_alphanumeric()) && n.is_some_and(|n| n.is_alphanumeric())
            };
            let keep = c.is_alphanumeric()
                || (is_joiner(c) && inner(prev, next))
                || (c == '.' && prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit()))
                || (c == '\'' && inner(prev, next));
            if keep {
                current.push(c);
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Tokenizes and splits after sentence-final punctuation.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for token in tokenize(text) {
        let end = matches!(token.as_str(), "." | "!" | "?");
        current.push(token);
        if end {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

fn closed_class(lower: &str) -> Option<&'static str> {
    Some(match lower {
        "the" | "a" | "an" | "this" | "these" | "that" | "those" | "each" | "every" | "some" | "all" | "no" => "DT",
        "of" | "in" | "for" | "with" | "on" | "by" | "from" | "at" | "into" | "via" | "over" | "under" | "between" | "through" | "as" | "than" | "while" | "because" => "IN",
        "to" => "TO",
        "and" | "or" | "but" | "nor" => "CC",
        "we" | "it" | "they" | "i" | "you" | "he" | "she" | "them" | "us" => "PRP",
        "our" | "its" | "their" | "my" | "your" | "his" | "her" => "PRP$",
        "is" | "has" | "does" => "VBZ",
        "are" | "have" | "do" => "VBP",
        "was" | "were" | "had" | "did" => "VBD",
        "be" => "VB",
        "been" => "VBN",
        "can" | "could" | "will" | "would" | "may" | "might" | "should" | "must" | "shall" => "MD",
        "not" | "also" | "very" | "often" | "then" | "here" | "however" => "RB",
        "which" | "whose" => "WDT",
        "who" | "what" => "WP",
        "how" | "when" | "where" | "why" => "WRB",
        "there" => "EX",
        "propose" | "present" | "introduce" | "show" | "use" | "apply" | "study" | "describe" | "improve" | "solve" => "VBP",
        "proposes" | "presents" | "introduces" | "shows" | "uses" | "applies" | "studies" | "describes" | "improves" | "solves" | "outperforms" | "achieves" => "VBZ",
        _ => return None,
    })
}

/// Heuristic POS guesser used when a corpus carries no POS column.
/// Output tags are drawn from [`POS_TAGS`].
pub fn guess_pos(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let lower = tok.to_lowercase();
            let tag = match tok.as_str() {
                "," => ",",
                "." | "!" | "?" => ".",
                ":" | ";" => ":",
                "(" | "[" | "{" => "(",
                ")" | "]" | "}" => ")",
                "\"" | "''" => "''",
                "``" => "``",
                _ if tok.chars().all(|c| c.is_ascii_digit() || c == '.') => "CD",
                _ if !tok.chars().any(char::is_alphanumeric) => "SYM",
                _ => {
                    if let Some(tag) = closed_class(&lower) {
                        tag
                    } else if i > 0 && tok.chars().next().is_some_and(char::is_uppercase) {
                        "NNP"
                    } else if lower.ends_with("ing") && lower.len() > 4 {
                        "VBG"
                    } else if lower.ends_with("ed") && lower.len() > 3 {
                        "VBN"
                    } else if lower.ends_with("ly") && lower.len() > 3 {
                        "RB"
                    } else if ["ive", "al", "ous", "ic", "able", "ible", "ful"].iter().any(|s| lower.ends_with(s)) && lower.len() > 4 {
                        "JJ"
                    } else if lower.ends_with('s') && !lower.ends_with("ss") && lower.len() > 3 {
                        "NNS"
                    } else {
                        "NN"
                    }
                }
            };
            tag.to_string()
        })
        .collect()
}
