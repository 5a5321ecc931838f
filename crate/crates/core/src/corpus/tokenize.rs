use std::collections::HashMap;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Default cap on learned (non-reserved) tokens.
pub const MAX_VOCAB: usize = 8192;

/// Splits text into lowercase word and punctuation tokens.
///
/// Runs of alphanumerics are words; underscores separate words and are
/// dropped; camelCase humps start a new word (`HTTPServer` gives `http`,
/// `server`). Every other non-whitespace character is its own token.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word: Vec<char> = Vec::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        flush_word(&mut word, &mut out);
        if ch.is_whitespace() || ch == '_' {
            continue;
        }
        out.push(ch.to_string());
    }
    flush_word(&mut word, &mut out);
    out
}

fn flush_word(word: &mut Vec<char>, out: &mut Vec<String>) {
    if word.is_empty() {
        return;
    }
    let mut start = 0;
    for i in 1..word.len() {
        let prev = word[i - 1];
        let cur = word[i];
        let next_lower = word.get(i + 1).is_some_and(|c| c.is_lowercase());
        let hump = cur.is_uppercase()
            && (prev.is_lowercase() || prev.is_numeric() || (prev.is_uppercase() && next_lower));
        if hump {
            out.push(word[start..i].iter().collect::<String>().to_lowercase());
            start = i;
        }
    }
    out.push(word[start..].iter().collect::<String>().to_lowercase());
    word.clear();
}

/// Token to id mapping with the four reserved ids in front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens; ties go to the
    /// lexicographically smaller token.
    pub fn build<'a, I, S>(documents: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<str> + 'a + ?Sized,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            for tok in tokenize_words(doc.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !RESERVED.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size);
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize_words(text).iter().map(|t| self.id(t)).collect()
    }
}

/// Numeric token ids when a vocabulary is supplied, otherwise the raw
/// tokens themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tokens {
    Words(Vec<String>),
    Ids(Vec<u32>),
}

pub fn tokenize_text(text: &str, vocab: Option<&Vocabulary>) -> Tokens {
    match vocab {
        Some(v) => Tokens::Ids(v.encode(text)),
        None => Tokens::Words(tokenize_words(text)),
    }
}
