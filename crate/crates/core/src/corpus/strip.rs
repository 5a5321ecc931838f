use super::Language;

/// Result of removing documentation from a code sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub code: String,
    /// A block comment or docstring ran to end of input.
    pub unterminated: bool,
}

struct Rules {
    slash_line: bool,
    hash_line: bool,
    block: bool,
    backtick: bool,
    python_docstrings: bool,
    ruby_blocks: bool,
}

fn rules(language: Language) -> Rules {
    use Language::*;
    Rules {
        slash_line: matches!(language, Go | Java | JavaScript | Php | Other),
        hash_line: matches!(language, Python | Ruby | Php),
        block: matches!(language, Go | Java | JavaScript | Php | Other),
        backtick: matches!(language, Go | JavaScript),
        python_docstrings: language == Python,
        ruby_blocks: language == Ruby,
    }
}

/// Removes comments and docstrings, keeps ordinary string literals, then
/// drops trailing whitespace and blank lines.
pub fn strip_documentation(code: &str, language: Language) -> String {
    strip_documentation_checked(code, language).code
}

pub fn strip_documentation_checked(code: &str, language: Language) -> Stripped {
    let rules = rules(language);
    let src: Vec<char> = code.chars().collect();
    let n = src.len();
    let mut out = String::with_capacity(code.len());
    let mut unterminated = false;
    let mut line_has_code = false;
    let mut i = 0;

    let starts = |i: usize, pat: &str| -> bool {
        let pat: Vec<char> = pat.chars().collect();
        i + pat.len() <= n && src[i..i + pat.len()] == pat[..]
    };

    while i < n {
        let c = src[i];

        if c == '\n' {
            out.push(c);
            line_has_code = false;
            i += 1;
            continue;
        }

        if rules.ruby_blocks && !line_has_code && at_line_start(&src, i) && starts(i, "=begin") {
            match find_line_starting(&src, i, "=end") {
                Some(end_line) => {
                    i = skip_to_eol(&src, end_line);
                }
                None => {
                    unterminated = true;
                    i = n;
                }
            }
            continue;
        }

        if rules.python_docstrings && !line_has_code {
            let prefix = string_prefix_len(&src, i);
            let q = i + prefix;
            if starts(q, "\"\"\"") || starts(q, "'''") {
                let delim: String = src[q..q + 3].iter().collect();
                match find_from(&src, q + 3, &delim) {
                    Some(end) => i = end + 3,
                    None => {
                        unterminated = true;
                        i = n;
                    }
                }
                continue;
            }
        }

        if (rules.slash_line && starts(i, "//")) || (rules.hash_line && c == '#') {
            i = skip_to_eol(&src, i);
            continue;
        }

        if rules.block && starts(i, "/*") {
            match find_from(&src, i + 2, "*/") {
                Some(end) => {
                    i = end + 2;
                    // keep tokens on either side of an inline comment apart
                    if !out.ends_with(char::is_whitespace) && !out.is_empty() {
                        out.push(' ');
                    }
                }
                None => {
                    unterminated = true;
                    i = n;
                }
            }
            continue;
        }

        if rules.python_docstrings && (starts(i, "\"\"\"") || starts(i, "'''")) {
            let delim: String = src[i..i + 3].iter().collect();
            let end = find_from(&src, i + 3, &delim).map(|e| e + 3).unwrap_or(n);
            out.extend(&src[i..end]);
            line_has_code = true;
            i = end;
            continue;
        }

        if c == '"' || c == '\'' || (rules.backtick && c == '`') {
            let end = string_end(&src, i, c, language);
            out.extend(&src[i..end]);
            line_has_code = true;
            i = end;
            continue;
        }

        if !c.is_whitespace() {
            line_has_code = true;
        }
        out.push(c);
        i += 1;
    }

    Stripped {
        code: normalize_whitespace(&out),
        unterminated,
    }
}

/// Trims trailing whitespace on every line and removes blank lines.
pub fn normalize_whitespace(text: &str) -> String {
    text.lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn at_line_start(src: &[char], i: usize) -> bool {
    i == 0 || src[i - 1] == '\n'
}

fn skip_to_eol(src: &[char], mut i: usize) -> usize {
    while i < src.len() && src[i] != '\n' {
        i += 1;
    }
    i
}

fn find_from(src: &[char], from: usize, pat: &str) -> Option<usize> {
    let pat: Vec<char> = pat.chars().collect();
    if src.len() < pat.len() {
        return None;
    }
    (from..=src.len() - pat.len()).find(|&j| src[j..j + pat.len()] == pat[..])
}

fn find_line_starting(src: &[char], from: usize, pat: &str) -> Option<usize> {
    let pat: Vec<char> = pat.chars().collect();
    let mut j = skip_to_eol(src, from);
    while j < src.len() {
        j += 1;
        if src[j..].starts_with(&pat) {
            return Some(j);
        }
        j = skip_to_eol(src, j);
    }
    None
}

/// Length of a Python string prefix such as `r`, `b`, `rb` before a quote.
fn string_prefix_len(src: &[char], i: usize) -> usize {
    let mut j = i;
    while j < src.len() && j - i < 2 && "rRuUbBfF".contains(src[j]) {
        j += 1;
    }
    if j > i && j < src.len() && (src[j] == '"' || src[j] == '\'') {
        j - i
    } else {
        0
    }
}

/// Index one past the closing quote. Single-line literals stop at newline
/// when unterminated.
fn string_end(src: &[char], start: usize, quote: char, language: Language) -> usize {
    let raw = quote == '`' && language == Language::Go;
    let multiline = quote == '`';
    let mut j = start + 1;
    while j < src.len() {
        let c = src[j];
        if c == '\\' && !raw {
            j += 2;
            continue;
        }
        if c == quote {
            return j + 1;
        }
        if c == '\n' && !multiline {
            return j;
        }
        j += 1;
    }
    src.len()
}
