//! Brute-force text scan used as the reference for call and usage sites.
//!
//! It works on a blanked copy of each file (comments, literals and
//! preprocessor lines replaced by spaces) with regular expressions and brace
//! counting, and shares no code with the index. It relies on the fixture
//! style: function headers end right before their `{`, declarations start a
//! statement, parameters contain no function pointers and there are no
//! multi-line macros.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OCall {
    pub caller: String,
    pub callee: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OUse {
    pub symbol: String,
    pub kind: &'static str,
    pub file: String,
    pub line: u32,
    pub enclosing: Option<String>,
    pub field: Option<String>,
    pub base: Option<String>,
}

#[derive(Debug, Default)]
pub struct Oracle {
    pub calls: Vec<OCall>,
    pub uses: Vec<OUse>,
    /// (qualified name, file)
    pub functions: Vec<(String, String)>,
    /// Declared variable names (params, locals, globals).
    pub variables: Vec<String>,
    /// (owner, field) pairs from struct and class bodies.
    pub fields: Vec<(String, String)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Lang {
    C,
    Cpp,
    Java,
}

const KEYWORDS_C: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "bool",
    "true", "false", "NULL",
];
const KEYWORDS_CPP_EXTRA: &[&str] = &[
    "catch", "class", "constexpr", "delete", "explicit", "friend", "mutable", "namespace", "new", "noexcept",
    "nullptr", "operator", "private", "protected", "public", "template", "this", "throw", "try", "typename",
    "using", "virtual", "override", "final",
];
const KEYWORDS_JAVA: &[&str] = &[
    "abstract", "boolean", "break", "byte", "case", "catch", "char", "class", "continue", "default", "do",
    "double", "else", "enum", "extends", "final", "finally", "float", "for", "if", "implements", "import",
    "instanceof", "int", "interface", "long", "new", "package", "private", "protected", "public", "return",
    "short", "static", "super", "switch", "synchronized", "this", "throw", "throws", "try", "void", "while",
    "true", "false", "null",
];
const PRIMITIVE: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "bool", "boolean", "byte", "signed", "unsigned",
];

fn keyword(lang: Lang, w: &str) -> bool {
    match lang {
        Lang::C => KEYWORDS_C.contains(&w),
        Lang::Cpp => KEYWORDS_C.contains(&w) || KEYWORDS_CPP_EXTRA.contains(&w),
        Lang::Java => KEYWORDS_JAVA.contains(&w),
    }
}

fn lang_of(path: &str) -> Option<Lang> {
    match path.rsplit_once('.')?.1 {
        "c" | "h" => Some(Lang::C),
        "cpp" | "hpp" | "cc" => Some(Lang::Cpp),
        "java" => Some(Lang::Java),
        _ => None,
    }
}

/// Same length as `src`; comments, literal contents and directives become spaces.
fn blank(src: &str, lang: Lang) -> String {
    let b = src.as_bytes();
    let mut out = b.to_vec();
    let mut i = 0;
    let mut at_line_start = true;
    let wipe = |out: &mut Vec<u8>, k: usize| {
        if out[k] != b'\n' {
            out[k] = b' ';
        }
    };
    while i < b.len() {
        let c = b[i];
        if c == b'\n' {
            at_line_start = true;
            i += 1;
            continue;
        }
        if c == b' ' || c == b'\t' || c == b'\r' {
            i += 1;
            continue;
        }
        if at_line_start && c == b'#' && lang != Lang::Java {
            while i < b.len() && b[i] != b'\n' {
                wipe(&mut out, i);
                i += 1;
            }
            continue;
        }
        at_line_start = false;
        if c == b'/' && i + 1 < b.len() && b[i + 1] == b'/' {
            while i < b.len() && b[i] != b'\n' {
                wipe(&mut out, i);
                i += 1;
            }
        } else if c == b'/' && i + 1 < b.len() && b[i + 1] == b'*' {
            let end = src[i + 2..].find("*/").map(|e| i + 2 + e + 2).unwrap_or(b.len());
            for k in i..end {
                wipe(&mut out, k);
            }
            i = end;
        } else if c == b'"' || c == b'\'' {
            let mut k = i + 1;
            while k < b.len() && b[k] != c {
                if b[k] == b'\\' {
                    wipe(&mut out, k);
                    k += 1;
                }
                wipe(&mut out, k);
                k += 1;
            }
            i = k + 1;
        } else {
            i += 1;
        }
    }
    String::from_utf8(out).expect("ascii replacements keep utf-8")
}

struct Re {
    ident: Regex,
    call: Regex,
    namespace: Regex,
    class: Regex,
    enum_: Regex,
    func: Regex,
    decl: Regex,
    next_decl: Regex,
    param_decl: Regex,
    access: Regex,
    typedef_named: Regex,
    typedef_tail: Regex,
}

impl Re {
    fn new() -> Re {
        Re {
            ident: Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").unwrap(),
            call: Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap(),
            namespace: Regex::new(r"^\s*namespace\s+(\w+)\s*$").unwrap(),
            class: Regex::new(r"\b(?:struct|class|union|interface)\b\s*(\w+)?[^;(){}=]*$").unwrap(),
            enum_: Regex::new(r"\benum\b").unwrap(),
            func: Regex::new(
                r"(~?[A-Za-z_]\w*(?:\s*::\s*~?[A-Za-z_]\w*)*)\s*\(([^()]*)\)\s*(?:const\s*)?(?:throws\s+[\w\s,.]+)?$",
            )
            .unwrap(),
            decl: Regex::new(concat!(
                r"^\s*(?:@\w+\s+)*",
                r"(?:(?:const|static|volatile|register|extern|final|public|private|protected|transient|unsigned|signed|long|short|inline)\s+)*",
                r"(?:(?:struct|union|enum|class)\s+)?",
                r"([A-Za-z_]\w*(?:\s*::\s*[A-Za-z_]\w*)*)",
                r"(?:\s*<[\w\s,<>?]*>)?",
                r"(?:\s*\[\s*\])*",
                r"(?:\s*[\*&]+\s*|\s+)(?:const\s+)?",
                r"([A-Za-z_]\w*)\s*(==|=|;|,|\[|:|\)|$)",
            ))
            .unwrap(),
            next_decl: Regex::new(r"^\s*[\*&]*\s*([A-Za-z_]\w*)\s*(==|=|;|,|\[|\)|$)").unwrap(),
            param_decl: Regex::new(r"([A-Za-z_]\w*)\s*(?:\[\s*\]\s*)*$").unwrap(),
            access: Regex::new(r"^\s*(?:public|private|protected)\s*:").unwrap(),
            typedef_named: Regex::new(r"^\s*typedef\b").unwrap(),
            typedef_tail: Regex::new(r"^\s*(\w+)\s*;").unwrap(),
        }
    }
}

struct Func {
    qual: String,
    class: Option<String>,
    params: (usize, usize),
    body: (usize, usize),
}

#[derive(Clone)]
struct Decl {
    owner: Option<String>,
    name: String,
    ty: String,
    pos: usize,
    init: bool,
}

enum FrameKind {
    Func(usize),
    Class(String),
    Namespace(String),
    Block,
}

struct Frame {
    kind: FrameKind,
    stmt_start: usize,
    restore: bool,
}

struct FileScan {
    rel: String,
    lang: Lang,
    text: String,
    line_of: Vec<u32>,
    funcs: Vec<Func>,
    decls: Vec<Decl>,
    aliases: Vec<(String, String)>,
}

fn skip_group(b: &[u8], mut k: usize) -> usize {
    let mut depth = 0i32;
    while k < b.len() {
        match b[k] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return k + 1;
                }
            }
            _ => {}
        }
        k += 1;
    }
    k
}

/// Declarations introduced by the statement starting at `start`.
/// Returns (type name, type range end, [(declarator pos, has initializer)]).
fn statement_decls(
    re: &Re,
    lang: Lang,
    text: &str,
    start: usize,
    paren_ctx: bool,
) -> Option<(String, usize, Vec<(usize, bool)>)> {
    let b = text.as_bytes();
    let seg_end = text[start..].find([';', '{', '}']).map_or(text.len(), |e| start + e);
    let seg = &text[start..seg_end];
    let caps = re.decl.captures(seg)?;
    let term = caps.get(3).unwrap();
    let ty_full = caps.get(1).unwrap().as_str();
    let ty = ty_full.rsplit("::").next().unwrap().trim().to_string();
    let decl = caps.get(2).unwrap();
    if keyword(lang, decl.as_str()) || (keyword(lang, &ty) && !PRIMITIVE.contains(&ty.as_str())) {
        return None;
    }
    match term.as_str() {
        "==" => return None,
        ")" if !paren_ctx => return None,
        "" if seg_end >= b.len() || b[seg_end] != b';' => return None,
        _ => {}
    }
    let mut out = Vec::new();
    let mut d = start + decl.start();
    let type_end = d;
    loop {
        let mut k = d + text[d..].find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(0);
        while k < b.len() && b[k].is_ascii_whitespace() {
            k += 1;
        }
        while k < b.len() && b[k] == b'[' {
            k = skip_group(b, k);
            while k < b.len() && b[k].is_ascii_whitespace() {
                k += 1;
            }
        }
        let init = b.get(k) == Some(&b'=') && b.get(k + 1) != Some(&b'=');
        if init {
            k += 1;
            while k < b.len() {
                match b[k] {
                    b'(' | b'[' | b'{' => k = skip_group(b, k),
                    b',' | b';' => break,
                    b')' if paren_ctx => break,
                    _ => k += 1,
                }
            }
        }
        out.push((d, init));
        if b.get(k) != Some(&b',') {
            break;
        }
        let rest_end = text[k + 1..].find([';', '{', '}']).map_or(text.len(), |e| k + 1 + e);
        let Some(c) = re.next_decl.captures(&text[k + 1..rest_end]) else { break };
        let name = c.get(1).unwrap();
        if keyword(lang, name.as_str()) || c.get(2).unwrap().as_str() == "==" {
            break;
        }
        d = k + 1 + name.start();
    }
    Some((ty, type_end, out))
}

fn scan_file(re: &Re, rel: &str, lang: Lang, src: &str) -> FileScan {
    let text = blank(src, lang);
    let b = text.as_bytes();
    let mut line_of = Vec::with_capacity(b.len() + 1);
    let mut line = 1u32;
    for &c in b {
        line_of.push(line);
        if c == b'\n' {
            line += 1;
        }
    }
    line_of.push(line);
    let mut fs = FileScan {
        rel: rel.to_string(),
        lang,
        text: text.clone(),
        line_of,
        funcs: Vec::new(),
        decls: Vec::new(),
        aliases: Vec::new(),
    };
    let sep = if lang == Lang::Java { "." } else { "::" };
    let mut stack: Vec<Frame> = Vec::new();
    let mut stmt_start = 0usize;
    let mut anon = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'{' => {
                let mut pre_start = stmt_start;
                if let Some(m) = re.access.find(&text[stmt_start..i]) {
                    pre_start = stmt_start + m.end();
                }
                let pre = &text[pre_start..i];
                let in_func = stack.iter().any(|f| matches!(f.kind, FrameKind::Func(_)));
                let path: Vec<String> = stack
                    .iter()
                    .filter_map(|f| match &f.kind {
                        FrameKind::Class(n) | FrameKind::Namespace(n) => Some(n.clone()),
                        _ => None,
                    })
                    .collect();
                let enclosing_class = stack.iter().rev().find_map(|f| match &f.kind {
                    FrameKind::Class(n) => Some(n.clone()),
                    _ => None,
                });
                let kind = if in_func || pre.contains('=') {
                    FrameKind::Block
                } else if let Some(c) = re.namespace.captures(pre) {
                    FrameKind::Namespace(c[1].to_string())
                } else if re.enum_.is_match(pre) {
                    FrameKind::Block
                } else if let Some(c) = re.class.captures(pre).filter(|_| !pre.contains('(')) {
                    match c.get(1) {
                        Some(n) => FrameKind::Class(n.as_str().to_string()),
                        None => {
                            anon += 1;
                            FrameKind::Class(format!("<anon{anon}>"))
                        }
                    }
                } else if let Some(c) = re.func.captures(pre) {
                    let head = c.get(1).unwrap().as_str();
                    let segs: Vec<String> = head.split("::").map(|s| s.trim().to_string()).collect();
                    let name = segs.last().unwrap().trim_start_matches('~');
                    if keyword(lang, name) || ["if", "for", "while", "switch", "catch", "return", "sizeof"].contains(&name) {
                        FrameKind::Block
                    } else {
                        let mut parts = path.clone();
                        parts.extend(segs.iter().cloned());
                        let class = if segs.len() > 1 { Some(segs[segs.len() - 2].clone()) } else { enclosing_class };
                        let p = c.get(2).unwrap();
                        fs.funcs.push(Func {
                            qual: parts.join(sep),
                            class,
                            params: (pre_start + p.start(), pre_start + p.end()),
                            body: (i, 0),
                        });
                        FrameKind::Func(fs.funcs.len() - 1)
                    }
                } else {
                    FrameKind::Block
                };
                stack.push(Frame { kind, stmt_start, restore: pre.contains('=') });
                stmt_start = i + 1;
            }
            b'}' => {
                let frame = stack.pop().expect("balanced fixture");
                stmt_start = i + 1;
                match frame.kind {
                    FrameKind::Func(k) => fs.funcs[k].body.1 = i,
                    FrameKind::Block if frame.restore => stmt_start = frame.stmt_start,
                    FrameKind::Class(name) => {
                        let pre = &text[frame.stmt_start..];
                        if re.typedef_named.is_match(pre) {
                            if let Some(c) = re.typedef_tail.captures(&text[i + 1..]) {
                                let alias = c[1].to_string();
                                if name.starts_with("<anon") {
                                    for d in &mut fs.decls {
                                        if d.owner.as_deref() == Some(name.as_str()) {
                                            d.owner = Some(alias.clone());
                                        }
                                    }
                                } else {
                                    fs.aliases.push((alias, name));
                                }
                                let skip = c.get(0).unwrap().end();
                                i += 1 + skip;
                                stmt_start = i;
                                continue;
                            }
                        }
                        // a following `;` closes the definition itself
                        let rest = &text[i + 1..];
                        if let Some(off) = rest.find(|c: char| !c.is_whitespace()) {
                            if rest.as_bytes()[off] == b';' {
                                i += 1 + off + 1;
                                stmt_start = i;
                                continue;
                            }
                        }
                    }
                    _ => {}
                }
            }
            b';' => {
                let top_is_scope = match stack.last() {
                    None => true,
                    Some(f) => matches!(f.kind, FrameKind::Class(_) | FrameKind::Namespace(_)),
                };
                if top_is_scope {
                    let mut s = stmt_start;
                    if let Some(m) = re.access.find(&text[stmt_start..i]) {
                        s = stmt_start + m.end();
                    }
                    let stmt = &text[s..i];
                    let owner = match stack.last().map(|f| &f.kind) {
                        Some(FrameKind::Class(n)) => Some(n.clone()),
                        _ => None,
                    };
                    if re.typedef_named.is_match(stmt) {
                        let words: Vec<&str> = re.ident.find_iter(stmt).map(|m| m.as_str()).collect();
                        if words.len() >= 3 {
                            fs.aliases.push((words[words.len() - 1].to_string(), words[words.len() - 2].to_string()));
                        }
                    } else if let Some((ty, _, ds)) = statement_decls(re, lang, &text, s, false) {
                        for (d, init) in ds {
                            let name = re.ident.find(&text[d..]).unwrap().as_str().to_string();
                            fs.decls.push(Decl { owner: owner.clone(), name, ty: ty.clone(), pos: d, init });
                        }
                    }
                }
                stmt_start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    fs
}

struct Tables {
    field_types: HashMap<(String, String), String>,
    class_fields: HashMap<String, HashSet<String>>,
    globals: HashMap<String, String>,
    aliases: HashMap<String, String>,
}

impl Tables {
    fn canon(&self, t: &str) -> String {
        let mut cur = t.to_string();
        for _ in 0..8 {
            match self.aliases.get(&cur) {
                Some(n) => cur = n.clone(),
                None => break,
            }
        }
        cur
    }
}

fn prev_nonspace(b: &[u8], pos: usize) -> usize {
    let mut k = pos;
    while k > 0 && b[k - 1].is_ascii_whitespace() {
        k -= 1;
    }
    k
}

fn next_nonspace(b: &[u8], pos: usize) -> usize {
    let mut k = pos;
    while k < b.len() && b[k].is_ascii_whitespace() {
        k += 1;
    }
    k
}

fn is_word(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// Start of the identifier ending at `end`.
fn word_start(b: &[u8], end: usize) -> usize {
    let mut k = end;
    while k > 0 && is_word(b[k - 1]) {
        k -= 1;
    }
    k
}

fn ends_with_member_op(b: &[u8], k: usize) -> Option<usize> {
    if k >= 1 && b[k - 1] == b'.' && !(k >= 2 && b[k - 2] == b'.') {
        return Some(k - 1);
    }
    if k >= 2 && b[k - 2] == b'-' && b[k - 1] == b'>' {
        return Some(k - 2);
    }
    None
}

fn matching_open(b: &[u8], close: usize) -> usize {
    let mut depth = 0i32;
    let mut k = close + 1;
    while k > 0 {
        k -= 1;
        match b[k] {
            b')' | b']' | b'}' => depth += 1,
            b'(' | b'[' | b'{' => {
                depth -= 1;
                if depth == 0 {
                    return k;
                }
            }
            _ => {}
        }
    }
    0
}

struct FnCtx<'a> {
    fs: &'a FileScan,
    f: &'a Func,
    locals: HashMap<String, String>,
    tables: &'a Tables,
    file_globals: HashMap<String, String>,
}

impl FnCtx<'_> {
    /// Base identifier position (or None) of the expression ending at `end`.
    fn base_ident(&self, end: usize) -> Option<usize> {
        let b = self.fs.text.as_bytes();
        let mut k = prev_nonspace(b, end);
        if k > 0 && b[k - 1] == b']' {
            k = prev_nonspace(b, matching_open(b, k - 1));
        }
        if k > 0 && is_word(b[k - 1]) {
            Some(word_start(b, k))
        } else {
            None
        }
    }

    fn owner(&self, base: usize) -> Option<String> {
        let b = self.fs.text.as_bytes();
        let name = self.word(base);
        if name == "this" {
            return self.f.class.clone();
        }
        let k = prev_nonspace(b, base);
        let ty = if let Some(op) = ends_with_member_op(b, k) {
            let parent = self.owner(self.base_ident(op)?)?;
            self.tables.field_types.get(&(self.tables.canon(&parent), name.to_string())).cloned()
        } else if let Some(t) = self.locals.get(name) {
            Some(t.clone())
        } else if let Some(t) =
            self.f.class.as_ref().and_then(|c| self.tables.field_types.get(&(c.clone(), name.to_string())))
        {
            Some(t.clone())
        } else {
            self.file_globals.get(name).or_else(|| self.tables.globals.get(name)).cloned()
        };
        ty.filter(|t| !t.is_empty()).map(|t| self.tables.canon(&t))
    }

    fn word(&self, pos: usize) -> &str {
        let b = self.fs.text.as_bytes();
        let mut e = pos;
        while e < b.len() && is_word(b[e]) {
            e += 1;
        }
        &self.fs.text[pos..e]
    }

    fn chain_start(&self, pos: usize) -> usize {
        let b = self.fs.text.as_bytes();
        let mut j = pos;
        loop {
            let k = prev_nonspace(b, j);
            let Some(op) = ends_with_member_op(b, k) else { return j };
            let mut e = prev_nonspace(b, op);
            if e > 0 && (b[e - 1] == b']' || b[e - 1] == b')') {
                let open = matching_open(b, e - 1);
                let before = prev_nonspace(b, open);
                j = if before > 0 && is_word(b[before - 1]) { word_start(b, before) } else { open };
                continue;
            }
            e = word_start(b, e);
            j = e;
        }
    }

    fn kind(&self, pos: usize, len: usize, chain_start: usize, otherwise: &'static str) -> &'static str {
        let b = self.fs.text.as_bytes();
        let mut a = next_nonspace(b, pos + len);
        while a < b.len() && b[a] == b'[' {
            a = next_nonspace(b, skip_group(b, a));
        }
        let after = &self.fs.text[a..];
        let bk = prev_nonspace(b, chain_start);
        let before = &self.fs.text[..bk];
        if after.starts_with("++") || after.starts_with("--") || before.ends_with("++") || before.ends_with("--") {
            return "write";
        }
        if before.ends_with('*') {
            let bb = prev_nonspace(b, bk - 1);
            let unary = bb == 0 || {
                let c = b[bb - 1];
                if is_word(c) {
                    keyword(self.fs.lang, &self.fs.text[word_start(b, bb)..bb])
                } else {
                    c != b')' && c != b']'
                }
            };
            if unary {
                return otherwise;
            }
        }
        for op in ["<<=", ">>=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^="] {
            if after.starts_with(op) {
                return "write";
            }
        }
        if after.starts_with('=') && !after.starts_with("==") {
            return "write";
        }
        otherwise
    }
}

impl Oracle {
    pub fn scan(root: &Path) -> Oracle {
        let re = Re::new();
        let mut files = Vec::new();
        collect(root, root, &mut files);
        files.sort();
        let scans: Vec<FileScan> = files
            .iter()
            .filter_map(|rel| {
                let lang = lang_of(rel)?;
                let src = fs::read_to_string(root.join(rel)).ok()?;
                Some(scan_file(&re, rel, lang, &src))
            })
            .collect();

        let mut tables = Tables {
            field_types: HashMap::new(),
            class_fields: HashMap::new(),
            globals: HashMap::new(),
            aliases: HashMap::new(),
        };
        let mut oracle = Oracle::default();
        for fs in &scans {
            for d in &fs.decls {
                match &d.owner {
                    Some(o) => {
                        tables.field_types.insert((o.clone(), d.name.clone()), d.ty.clone());
                        tables.class_fields.entry(o.clone()).or_default().insert(d.name.clone());
                        oracle.fields.push((o.clone(), d.name.clone()));
                    }
                    None => {
                        tables.globals.entry(d.name.clone()).or_insert_with(|| d.ty.clone());
                        oracle.variables.push(d.name.clone());
                    }
                }
            }
            for (a, t) in &fs.aliases {
                if a != t {
                    tables.aliases.entry(a.clone()).or_insert_with(|| t.clone());
                }
            }
        }

        for fs in &scans {
            let b = fs.text.as_bytes();
            for d in &fs.decls {
                let (symbol, field) = match &d.owner {
                    Some(o) => (format!("{o}.{}", d.name), Some(d.name.clone())),
                    None => (d.name.clone(), None),
                };
                let mk = |kind| OUse {
                    symbol: symbol.clone(),
                    kind,
                    file: fs.rel.clone(),
                    line: fs.line_of[d.pos],
                    enclosing: None,
                    field: field.clone(),
                    base: None,
                };
                oracle.uses.push(mk("definition"));
                if d.init {
                    oracle.uses.push(mk("initialization"));
                }
            }
            let file_globals: HashMap<String, String> =
                fs.decls.iter().filter(|d| d.owner.is_none()).map(|d| (d.name.clone(), d.ty.clone())).collect();
            for f in &fs.funcs {
                oracle.functions.push((f.qual.clone(), fs.rel.clone()));
                // calls
                let body = &fs.text[f.body.0 + 1..f.body.1];
                for c in re.call.captures_iter(body) {
                    let m = c.get(1).unwrap();
                    let abs = f.body.0 + 1 + m.start();
                    if abs > 0 && (is_word(b[abs - 1]) || b[abs - 1] == b'@') {
                        continue;
                    }
                    if keyword(fs.lang, m.as_str()) {
                        continue;
                    }
                    oracle.calls.push(OCall {
                        caller: f.qual.clone(),
                        callee: m.as_str().to_string(),
                        file: fs.rel.clone(),
                        line: fs.line_of[abs],
                    });
                }

                // declarations: params, then statement starts in the body
                let mut decl_at: HashMap<usize, bool> = HashMap::new();
                let mut type_ranges: Vec<(usize, usize)> = Vec::new();
                let mut locals: HashMap<String, String> = HashMap::new();
                let (p0, p1) = f.params;
                let mut segs = Vec::new();
                let (mut depth, mut seg_start) = (0i32, p0);
                for k in p0..p1 {
                    match b[k] {
                        b'<' | b'(' | b'[' => depth += 1,
                        b'>' | b')' | b']' => depth -= 1,
                        b',' if depth == 0 => {
                            segs.push((seg_start, k));
                            seg_start = k + 1;
                        }
                        _ => {}
                    }
                }
                segs.push((seg_start, p1));
                for (s, e) in segs {
                    let stop = fs.text[s..e].find('=').map_or(e, |x| s + x);
                    let seg = &fs.text[s..stop];
                    let decl = re.param_decl.captures(seg).and_then(|c| {
                        let m = c.get(1).unwrap();
                        let before = seg[..m.start()].trim_end();
                        let ok = !before.is_empty()
                            && (before.ends_with(|ch: char| ch.is_alphanumeric() || ch == '_')
                                || before.ends_with(['*', '&', '>', ']', '.']))
                            && !keyword(fs.lang, m.as_str());
                        ok.then_some((s + m.start(), m.as_str().to_string(), before.to_string()))
                    });
                    match decl {
                        Some((pos, name, before)) => {
                            let ty = re
                                .ident
                                .find_iter(&before)
                                .map(|m| m.as_str())
                                .filter(|w| {
                                    !["const", "struct", "union", "enum", "class", "final", "volatile", "unsigned", "signed"]
                                        .contains(w)
                                })
                                .last()
                                .unwrap_or("")
                                .to_string();
                            type_ranges.push((s, pos));
                            type_ranges.push((pos + name.len(), stop));
                            decl_at.insert(pos, false);
                            locals.insert(name, ty);
                        }
                        None => type_ranges.push((s, stop)),
                    }
                }
                let (b0, b1) = f.body;
                let mut k = b0 + 1;
                while k < b1 {
                    let c = b[k - 1];
                    let boundary = matches!(c, b';' | b'{' | b'}');
                    let paren = c == b'(' && {
                        let pk = prev_nonspace(b, k - 1);
                        let w = &fs.text[word_start(b, pk)..pk];
                        matches!(w, "for" | "catch" | "try")
                    };
                    if (boundary || paren) && !decl_at.keys().any(|&d| d >= k && type_ranges.iter().any(|r| r.0 == k)) {
                        if let Some((ty, type_end, ds)) = statement_decls(&re, fs.lang, &fs.text, k, paren) {
                            type_ranges.push((k, type_end));
                            for (d, init) in ds {
                                let name = re.ident.find(&fs.text[d..]).unwrap().as_str().to_string();
                                decl_at.insert(d, init);
                                locals.insert(name, ty.clone());
                            }
                        }
                    }
                    k += 1;
                }

                let ctx = FnCtx { fs, f, locals, tables: &tables, file_globals: file_globals.clone() };
                let mut found: Vec<(usize, OUse)> = Vec::new();
                for (lo, hi) in [(p0, p1), (b0 + 1, b1)] {
                    for m in re.ident.find_iter(&fs.text[lo..hi]) {
                        let pos = lo + m.start();
                        let w = m.as_str();
                        if pos > 0 && is_word(b[pos - 1]) || w.as_bytes()[0].is_ascii_digit() {
                            continue;
                        }
                        if keyword(fs.lang, w) || type_ranges.iter().any(|&(s, e)| s <= pos && pos < e) {
                            continue;
                        }
                        let mk = |symbol: String, kind: &'static str, field: Option<String>, base: Option<String>| OUse {
                            symbol,
                            kind,
                            file: fs.rel.clone(),
                            line: fs.line_of[pos],
                            enclosing: Some(f.qual.clone()),
                            field,
                            base,
                        };
                        if let Some(&init) = decl_at.get(&pos) {
                            found.push((pos, mk(w.to_string(), "definition", None, None)));
                            if init {
                                found.push((pos, mk(w.to_string(), "initialization", None, None)));
                            }
                            continue;
                        }
                        let pk = prev_nonspace(b, pos);
                        let before = &fs.text[..pk];
                        let an = next_nonspace(b, pos + w.len());
                        let after = &fs.text[an..];
                        if before.ends_with('@') {
                            continue;
                        }
                        let prev_word = &fs.text[word_start(b, pk)..pk];
                        if pk > 0 && is_word(b[pk - 1]) && ["struct", "union", "enum", "class"].contains(&prev_word)
                            && keyword(fs.lang, prev_word)
                        {
                            continue;
                        }
                        if after.starts_with('(') {
                            continue;
                        }
                        if after.starts_with("::") || before.ends_with("::") {
                            continue;
                        }
                        if let Some(op) = ends_with_member_op(b, pk) {
                            let base_pos = ctx.base_ident(op);
                            let base = base_pos.map_or("?".to_string(), |p| ctx.word(p).to_string());
                            let owner = base_pos.and_then(|p| ctx.owner(p));
                            let symbol = format!("{}.{w}", owner.as_deref().unwrap_or(&base));
                            let kind = ctx.kind(pos, w.len(), ctx.chain_start(pos), "member_access");
                            found.push((pos, mk(symbol, kind, Some(w.to_string()), Some(base))));
                            continue;
                        }
                        if !ctx.locals.contains_key(w) {
                            if let Some(class) = &f.class {
                                if tables.class_fields.get(class).is_some_and(|s| s.contains(w)) {
                                    let kind = ctx.kind(pos, w.len(), pos, "member_access");
                                    found.push((
                                        pos,
                                        mk(format!("{class}.{w}"), kind, Some(w.to_string()), Some("this".into())),
                                    ));
                                    continue;
                                }
                            }
                        }
                        let kind = ctx.kind(pos, w.len(), pos, "read");
                        found.push((pos, mk(w.to_string(), kind, None, None)));
                    }
                }
                for name in ctx.locals.keys() {
                    oracle.variables.push(name.clone());
                }
                found.sort_by_key(|x| x.0);
                oracle.uses.extend(found.into_iter().map(|x| x.1));
            }
        }
        oracle.variables.sort();
        oracle.variables.dedup();
        oracle.fields.sort();
        oracle.fields.dedup();
        oracle
    }

    /// Call sites of `name`, sorted.
    pub fn callers(&self, name: &str) -> Vec<OCall> {
        let mut v: Vec<_> = self.calls.iter().filter(|c| c.callee == name).cloned().collect();
        v.sort();
        v
    }

    pub fn variable_uses(&self, name: &str) -> Vec<OUse> {
        let mut v: Vec<_> = self.uses.iter().filter(|u| u.field.is_none() && u.symbol == name).cloned().collect();
        v.sort();
        v
    }

    /// Member sites for `Owner.field`: keyed by the resolved owner or the base text.
    pub fn member_uses(&self, owner: &str, field: &str) -> Vec<OUse> {
        let key = format!("{owner}.{field}");
        let mut v: Vec<_> = self
            .uses
            .iter()
            .filter(|u| u.field.as_deref() == Some(field) && (u.symbol == key || u.base.as_deref() == Some(owner)))
            .cloned()
            .collect();
        v.sort();
        v
    }

    /// Names called anywhere plus every defined function's short name.
    pub fn callee_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.calls.iter().map(|c| c.callee.clone()).collect();
        v.extend(self.functions.iter().map(|(q, _)| {
            let s = q.rsplit("::").next().unwrap();
            s.rsplit('.').next().unwrap().to_string()
        }));
        v.sort();
        v.dedup();
        v
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.file_name().unwrap().to_string_lossy().starts_with('.') {
            continue;
        }
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

/// Groups and counts, handy for assertion messages.
pub fn summarize(o: &Oracle) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    m.insert("functions", o.functions.len());
    m.insert("calls", o.calls.len());
    m.insert("uses", o.uses.len());
    m
}
