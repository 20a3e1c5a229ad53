//! A closed conjunctive query language over the index.
//!
//! ```text
//! kind=call AND callee_name=mem*
//! kind=function AND (file="src/*.c" AND line in 10..40)
//! ```
//!
//! The grammar is written out in `docs/query.md`.

use serde::{Deserialize, Serialize};

use super::{wildcard_match, CallSite, CodeIndex, FunctionDef, IndexError, UsageSite};

/// Compact grammar summary shown to the context agent.
pub const QUERY_GRAMMAR: &str = "query := clause { AND clause } ; clause := kind=function|call|usage | field=glob | line in N..M | ( query )
fields: function: name, file; call: name, callee_name, file, caller; usage: name, symbol, file, caller, usage_kind
exactly one kind= clause; globs use * and ?; quote values containing spaces";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Function,
    Call,
    Usage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryField {
    Name,
    CalleeName,
    File,
    Caller,
    Symbol,
    UsageKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Glob { field: QueryField, pattern: String },
    Lines { start: u32, end: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub kind: QueryKind,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum QueryMatch {
    Function(FunctionDef),
    Call(CallSite),
    Usage(UsageSite),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub matches: Vec<QueryMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Quoted(String),
    Eq,
    LParen,
    RParen,
    DotDot,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, IndexError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '=' => {
                out.push((pos, Tok::Eq));
                i += 1;
            }
            '(' => {
                out.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::RParen));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(malformed(text.len(), "closing `\"`")),
                        Some((_, '\\')) if chars.get(i + 1).is_some() => {
                            s.push(chars[i + 1].1);
                            i += 2;
                        }
                        Some((_, '"')) => {
                            i += 1;
                            break;
                        }
                        Some((_, ch)) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                out.push((pos, Tok::Quoted(s)));
            }
            '.' if chars.get(i + 1).map(|x| x.1) == Some('.') => {
                out.push((pos, Tok::DotDot));
                i += 2;
            }
            _ => {
                let mut s = String::new();
                while let Some(&(_, ch)) = chars.get(i) {
                    if ch.is_whitespace() || matches!(ch, '=' | '(' | ')' | '"') {
                        break;
                    }
                    if ch == '.' && chars.get(i + 1).map(|x| x.1) == Some('.') && s.chars().all(|d| d.is_ascii_digit())
                    {
                        break;
                    }
                    s.push(ch);
                    i += 1;
                }
                out.push((pos, Tok::Word(s)));
            }
        }
    }
    Ok(out)
}

fn malformed(position: usize, expected: &str) -> IndexError {
    IndexError::MalformedQuery { position, expected: expected.to_string() }
}

struct P<'a> {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
    kinds: Vec<(usize, QueryKind)>,
    preds: Vec<(usize, Predicate)>,
    _src: &'a str,
}

impl P<'_> {
    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.1)
    }

    fn conj(&mut self) -> Result<(), IndexError> {
        self.term()?;
        while matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case("AND")) {
            self.i += 1;
            self.term()?;
        }
        Ok(())
    }

    fn term(&mut self) -> Result<(), IndexError> {
        if self.peek() == Some(&Tok::LParen) {
            self.i += 1;
            self.conj()?;
            if self.peek() != Some(&Tok::RParen) {
                return Err(malformed(self.pos(), "`)` or `AND`"));
            }
            self.i += 1;
            return Ok(());
        }
        let at = self.pos();
        let field = match self.peek() {
            Some(Tok::Word(w)) => w.clone(),
            _ => return Err(malformed(at, "a predicate or `(`")),
        };
        self.i += 1;
        if field == "line" {
            if !matches!(self.peek(), Some(Tok::Word(w)) if w == "in") {
                return Err(malformed(self.pos(), "`in`"));
            }
            self.i += 1;
            let start = self.number()?;
            if self.peek() != Some(&Tok::DotDot) {
                return Err(malformed(self.pos(), "`..`"));
            }
            self.i += 1;
            let end = self.number()?;
            if start > end {
                return Err(malformed(at, "a range with start <= end"));
            }
            self.preds.push((at, Predicate::Lines { start, end }));
            return Ok(());
        }
        if self.peek() != Some(&Tok::Eq) {
            return Err(malformed(self.pos(), "`=`"));
        }
        self.i += 1;
        let vpos = self.pos();
        let value = match self.peek() {
            Some(Tok::Word(w)) if !w.eq_ignore_ascii_case("AND") => w.clone(),
            Some(Tok::Quoted(q)) => q.clone(),
            _ => return Err(malformed(vpos, "a value")),
        };
        self.i += 1;
        if field == "kind" {
            let k = match value.as_str() {
                "function" => QueryKind::Function,
                "call" => QueryKind::Call,
                "usage" => QueryKind::Usage,
                _ => return Err(malformed(vpos, "one of function, call, usage")),
            };
            self.kinds.push((at, k));
            return Ok(());
        }
        let f = match field.as_str() {
            "name" => QueryField::Name,
            "callee_name" => QueryField::CalleeName,
            "file" => QueryField::File,
            "caller" => QueryField::Caller,
            "symbol" => QueryField::Symbol,
            "usage_kind" => QueryField::UsageKind,
            _ => return Err(malformed(at, "a field: kind, name, callee_name, file, caller, symbol, usage_kind, line")),
        };
        self.preds.push((at, Predicate::Glob { field: f, pattern: value }));
        Ok(())
    }

    fn number(&mut self) -> Result<u32, IndexError> {
        let at = self.pos();
        match self.peek() {
            Some(Tok::Word(w)) => {
                let n = w.parse().map_err(|_| malformed(at, "a line number"))?;
                self.i += 1;
                Ok(n)
            }
            _ => Err(malformed(at, "a line number")),
        }
    }
}

fn field_allowed(kind: QueryKind, field: QueryField) -> bool {
    use QueryField::*;
    match kind {
        QueryKind::Function => matches!(field, Name | File),
        QueryKind::Call => matches!(field, Name | CalleeName | File | Caller),
        QueryKind::Usage => matches!(field, Name | Symbol | File | Caller | UsageKind),
    }
}

pub fn parse_query(text: &str) -> Result<QuerySpec, IndexError> {
    let toks = lex(text)?;
    let mut p = P { toks, i: 0, end: text.len(), kinds: Vec::new(), preds: Vec::new(), _src: text };
    p.conj()?;
    if p.i < p.toks.len() {
        return Err(malformed(p.pos(), "`AND` or end of query"));
    }
    let kind = match p.kinds.as_slice() {
        [(_, k)] => *k,
        [] => return Err(malformed(text.len(), "a `kind=` clause")),
        [_, (at, _), ..] => return Err(malformed(*at, "exactly one `kind=` clause")),
    };
    for (at, pred) in &p.preds {
        if let Predicate::Glob { field, .. } = pred {
            if !field_allowed(kind, *field) {
                return Err(malformed(*at, "a field valid for this kind"));
            }
        }
    }
    Ok(QuerySpec { kind, predicates: p.preds.into_iter().map(|(_, q)| q).collect() })
}

impl QuerySpec {
    fn check_function(&self, f: &FunctionDef) -> bool {
        self.predicates.iter().all(|p| match p {
            Predicate::Glob { field: QueryField::File, pattern } => wildcard_match(pattern, &f.file),
            Predicate::Glob { pattern, .. } => {
                wildcard_match(pattern, &f.name) || wildcard_match(pattern, &f.qualified_name)
            }
            Predicate::Lines { start, end } => f.start_line <= *end && *start <= f.end_line,
        })
    }

    fn check_call(&self, c: &CallSite) -> bool {
        self.predicates.iter().all(|p| match p {
            Predicate::Glob { field: QueryField::File, pattern } => wildcard_match(pattern, &c.file),
            Predicate::Glob { field: QueryField::Caller, pattern } => wildcard_match(pattern, &c.caller),
            Predicate::Glob { pattern, .. } => wildcard_match(pattern, &c.callee_name),
            Predicate::Lines { start, end } => (*start..=*end).contains(&c.line),
        })
    }

    fn check_usage(&self, u: &UsageSite) -> bool {
        self.predicates.iter().all(|p| match p {
            Predicate::Glob { field: QueryField::File, pattern } => wildcard_match(pattern, &u.file),
            Predicate::Glob { field: QueryField::Caller, pattern } => {
                u.enclosing_function.as_deref().is_some_and(|f| wildcard_match(pattern, f))
            }
            Predicate::Glob { field: QueryField::UsageKind, pattern } => wildcard_match(pattern, u.kind.as_str()),
            Predicate::Glob { pattern, .. } => wildcard_match(pattern, &u.symbol),
            Predicate::Lines { start, end } => (*start..=*end).contains(&u.line),
        })
    }
}

impl CodeIndex {
    pub fn query_info(&self, spec: &QuerySpec) -> QueryResult {
        let matches = match spec.kind {
            QueryKind::Function => self
                .all_functions()
                .into_iter()
                .filter(|f| spec.check_function(f))
                .map(|f| QueryMatch::Function(f.clone()))
                .collect(),
            QueryKind::Call => {
                let mut v: Vec<_> = self.all_calls().filter(|c| spec.check_call(c)).cloned().collect();
                v.sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
                v.into_iter().map(QueryMatch::Call).collect()
            }
            QueryKind::Usage => {
                let mut v: Vec<_> = self.all_usages().filter(|u| spec.check_usage(u)).cloned().collect();
                v.sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
                v.into_iter().map(QueryMatch::Usage).collect()
            }
        };
        QueryResult { matches }
    }

    pub fn render_query(&self, query: &str, result: &QueryResult) -> String {
        if result.matches.is_empty() {
            return format!("query `{query}` matched nothing\n");
        }
        let mut out = String::new();
        for m in &result.matches {
            let line = match m {
                QueryMatch::Function(f) => {
                    format!("function {} {}:{}-{}: {}", f.qualified_name, f.file, f.start_line, f.end_line, f.signature)
                }
                QueryMatch::Call(c) => {
                    let src = self.files.get(&c.file).map_or("", |f| f.line(c.line)).trim();
                    format!("call {} in {} {}:{}: {}", c.callee_name, c.caller, c.file, c.line, src)
                }
                QueryMatch::Usage(u) => {
                    let src = self.files.get(&u.file).map_or("", |f| f.line(u.line)).trim();
                    format!("usage {} {} {}:{}: {}", u.kind.as_str(), u.symbol, u.file, u.line, src)
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        super::cap_lines(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_spec_examples() {
        let q = parse_query("kind=call AND callee_name=memcpy").unwrap();
        assert_eq!(q.kind, QueryKind::Call);
        assert_eq!(q.predicates, vec![Predicate::Glob { field: QueryField::CalleeName, pattern: "memcpy".into() }]);
        let q = parse_query("(kind = function) and (file=\"src/*.c\" AND line in 3..40)").unwrap();
        assert_eq!(q.kind, QueryKind::Function);
        assert_eq!(q.predicates.len(), 2);
        assert!(matches!(q.predicates[1], Predicate::Lines { start: 3, end: 40 }));
    }

    #[test]
    fn malformed_queries_report_position() {
        let cases = [
            ("kind=call AND (callee_name=x", 28, "`)`"),
            ("kind=call AND", 13, "a predicate"),
            ("callee_name=x", 13, "a `kind=`"),
            ("kind=call AND kind=usage", 14, "exactly one"),
            ("kind=call AND usage_kind=read", 14, "valid for this kind"),
            ("kind=call AND colour=red", 14, "a field"),
            ("kind=call line in 5..", 10, "`AND`"),
            ("kind=usage AND line in 9..2", 15, "start <= end"),
            ("kind=thing", 5, "one of"),
        ];
        for (q, pos, expect) in cases {
            match parse_query(q) {
                Err(IndexError::MalformedQuery { position, expected }) => {
                    assert_eq!(position, pos, "{q}: {expected}");
                    assert!(expected.contains(expect), "{q}: {expected}");
                }
                other => panic!("{q}: {other:?}"),
            }
        }
    }
}
