//! Rule tokenizer: whitespace split, then leading/trailing punctuation
//! peeled off as single-character tokens. Offsets are byte ranges into
//! the source, so `&text[t.lo..t.hi]` always reproduces the surface.

/// Half-open byte range of one token in its source string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub lo: usize,
    pub hi: usize,
}

impl Token {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.lo..self.hi]
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let bytes_len = text.len();
    let mut chunk_start = None;
    let push_chunk = |lo: usize, hi: usize, tokens: &mut Vec<Token>| {
        let mut a = lo;
        let mut b = hi;
        let mut head = Vec::new();
        let mut tail = Vec::new();
        loop {
            let rest = &text[a..b];
            let Some(c) = rest.chars().next() else { break };
            if is_punct(c) {
                head.push(Token {
                    lo: a,
                    hi: a + c.len_utf8(),
                });
                a += c.len_utf8();
                continue;
            }
            let last = rest.chars().next_back().unwrap();
            if is_punct(last) {
                tail.push(Token {
                    lo: b - last.len_utf8(),
                    hi: b,
                });
                b -= last.len_utf8();
                continue;
            }
            break;
        }
        tokens.extend(head);
        if a < b {
            tokens.push(Token { lo: a, hi: b });
        }
        tokens.extend(tail.into_iter().rev());
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                push_chunk(s, i, &mut tokens);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        push_chunk(s, bytes_len, &mut tokens);
    }
    tokens
}

/// Why a character span could not be mapped onto tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlignError {
    EmptyAnswer,
    StartOutsideTokens { char_start: usize },
    EndOutsideTokens { char_end: usize },
}

impl std::fmt::Display for AlignError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlignError::EmptyAnswer => write!(f, "empty answer text"),
            AlignError::StartOutsideTokens { char_start } => {
                write!(f, "answer start {char_start} falls outside every token")
            }
            AlignError::EndOutsideTokens { char_end } => {
                write!(f, "answer end {char_end} falls outside every token")
            }
        }
    }
}

/// Smallest token interval `(a, b)` covering the byte span
/// `[char_start, char_start + answer_text.len())`.
pub fn align_char_span(
    tokens: &[Token],
    char_start: usize,
    answer_text: &str,
) -> Result<(usize, usize), AlignError> {
    if answer_text.is_empty() {
        return Err(AlignError::EmptyAnswer);
    }
    let char_end = char_start + answer_text.len();
    let a = tokens
        .iter()
        .position(|t| t.lo <= char_start && char_start < t.hi)
        .ok_or(AlignError::StartOutsideTokens { char_start })?;
    let b = tokens
        .iter()
        .position(|t| t.lo < char_end && char_end <= t.hi)
        .ok_or(AlignError::EndOutsideTokens { char_end })?;
    debug_assert!(a <= b);
    Ok((a, b))
}
