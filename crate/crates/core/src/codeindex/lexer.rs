//! Token stream for C-family sources. Comments and preprocessor lines are
//! dropped; string and character literals become single tokens.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Str,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    pub line: u32,
    /// Byte offset of the first character.
    pub offset: usize,
}

impl Token {
    pub fn is_ident(&self) -> bool {
        self.kind == TokKind::Ident
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub reason: String,
}

const PUNCTS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->*", "::", "->", "++", "--", "<<", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", ">>",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexOptions {
    pub preprocessor: bool,
    pub text_blocks: bool,
    pub template_literals: bool,
}

pub fn tokenize(src: &str, opts: LexOptions) -> Result<Vec<Token>, LexError> {
    let b = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = true;

    while i < b.len() {
        let c = b[i];
        if c == b'\n' {
            line += 1;
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if opts.preprocessor && line_start && c == b'#' {
            // to end of line, honouring backslash continuations
            while i < b.len() && b[i] != b'\n' {
                if b[i] == b'\\' && i + 1 < b.len() && b[i + 1] == b'\n' {
                    line += 1;
                    i += 2;
                    continue;
                }
                if b[i] == b'\\' && i + 2 < b.len() && b[i + 1] == b'\r' && b[i + 2] == b'\n' {
                    line += 1;
                    i += 3;
                    continue;
                }
                i += 1;
            }
            continue;
        }
        line_start = false;
        if c == b'/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && b.get(i + 1) == Some(&b'*') {
            let start_line = line;
            i += 2;
            loop {
                if i + 1 >= b.len() {
                    return Err(LexError { line: start_line, reason: "unterminated block comment".into() });
                }
                if b[i] == b'*' && b[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                if b[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        let start_line = line;
        if c == b'"' && opts.text_blocks && src[i..].starts_with("\"\"\"") {
            i += 3;
            loop {
                if i + 2 >= b.len() {
                    return Err(LexError { line: start_line, reason: "unterminated text block".into() });
                }
                if b[i] == b'\\' {
                    i += 2;
                    continue;
                }
                if src[i..].starts_with("\"\"\"") {
                    i += 3;
                    break;
                }
                if b[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            toks.push(Token { kind: TokKind::Str, text: src[start..i].to_string(), line: start_line, offset: start });
            continue;
        }
        if c == b'`' && opts.template_literals {
            i += 1;
            loop {
                if i >= b.len() {
                    return Err(LexError { line: start_line, reason: "unterminated template literal".into() });
                }
                match b[i] {
                    b'\\' => i += 2,
                    b'`' => {
                        i += 1;
                        break;
                    }
                    b'\n' => {
                        line += 1;
                        i += 1;
                    }
                    _ => i += 1,
                }
            }
            toks.push(Token { kind: TokKind::Str, text: src[start..i].to_string(), line: start_line, offset: start });
            continue;
        }
        if c == b'"' || c == b'\'' {
            i = quoted(b, i, c).map_err(|reason| LexError { line, reason })?;
            toks.push(Token { kind: TokKind::Str, text: src[start..i].to_string(), line, offset: start });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < b.len() {
                let d = b[i];
                let more = d.is_ascii_alphanumeric()
                    || d == b'_'
                    || d == b'.'
                    // digit separators and exponent signs
                    || (d == b'\'' && b.get(i + 1).is_some_and(u8::is_ascii_alphanumeric))
                    || ((d == b'+' || d == b'-') && matches!(b[i - 1], b'e' | b'E' | b'p' | b'P'));
                if !more {
                    break;
                }
                i += 1;
            }
            toks.push(Token { kind: TokKind::Number, text: src[start..i].to_string(), line, offset: start });
            continue;
        }
        if is_ident_start(c) {
            i += 1;
            while i < b.len() && is_ident_continue(b[i]) {
                i += 1;
            }
            let word = &src[start..i];
            if b.get(i) == Some(&b'"') && opts.preprocessor && matches!(word, "R" | "LR" | "uR" | "UR" | "u8R") {
                i = raw_string(src, i).map_err(|reason| LexError { line, reason })?;
                line += src[start..i].matches('\n').count() as u32;
                toks.push(Token { kind: TokKind::Str, text: src[start..i].to_string(), line: start_line, offset: start });
                continue;
            }
            if b.get(i).is_some_and(|q| *q == b'"' || *q == b'\'') && matches!(word, "L" | "u" | "U" | "u8") {
                let q = b[i];
                i = quoted(b, i, q).map_err(|reason| LexError { line, reason })?;
                toks.push(Token { kind: TokKind::Str, text: src[start..i].to_string(), line, offset: start });
                continue;
            }
            toks.push(Token { kind: TokKind::Ident, text: word.to_string(), line, offset: start });
            continue;
        }
        if c >= 0x80 {
            // stray non-ASCII outside literals: skip the whole scalar
            let ch = src[i..].chars().next().map_or(1, char::len_utf8);
            i += ch;
            continue;
        }
        let text = PUNCTS
            .iter()
            .find(|p| src[i..].starts_with(**p))
            .map_or_else(|| (c as char).to_string(), |p| p.to_string());
        i += text.len();
        toks.push(Token { kind: TokKind::Punct, text, line, offset: start });
    }
    Ok(toks)
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'$'
}

fn is_ident_continue(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

fn quoted(b: &[u8], mut i: usize, q: u8) -> Result<usize, String> {
    i += 1;
    while i < b.len() {
        match b[i] {
            b'\\' => i += 2,
            b'\n' => return Err("unterminated literal".into()),
            x if x == q => return Ok(i + 1),
            _ => i += 1,
        }
    }
    Err("unterminated literal".into())
}

fn raw_string(src: &str, quote: usize) -> Result<usize, String> {
    let rest = &src[quote + 1..];
    let open = rest.find('(').ok_or("malformed raw string")?;
    let delim = &rest[..open];
    let close = format!("){delim}\"");
    let end = rest[open..].find(&close).ok_or("unterminated raw string")?;
    Ok(quote + 1 + open + end + close.len())
}
