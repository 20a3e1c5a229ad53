//! Structural parse of one C-family file.
//!
//! The first pass walks file, namespace and class scopes and finds function
//! definitions, struct/class fields, global variables and typedef aliases.
//! The second pass runs per function once every file's first pass is done,
//! because member owners may be declared in another file; it emits call
//! sites and usage sites.

use std::collections::{HashMap, HashSet};

use super::lexer::{tokenize, LexOptions, TokKind, Token};
use super::{CallSite, SrcLang, UsageKind, UsageSite};

#[derive(Debug, Clone)]
pub(crate) struct FnSyntax {
    pub name: String,
    pub qualified_name: String,
    pub class: Option<String>,
    pub params_open: usize,
    pub params_close: usize,
    pub body_open: usize,
    pub body_close: usize,
    pub start_line: u32,
    pub end_line: u32,
    pub signature: String,
}

#[derive(Debug, Clone)]
pub(crate) struct VarDecl {
    pub owner: Option<String>,
    pub name: String,
    pub ty: String,
    pub line: u32,
    pub offset: usize,
    pub init: bool,
}

#[derive(Debug, Default)]
pub(crate) struct FileSyntax {
    pub functions: Vec<FnSyntax>,
    /// Struct/class fields (`owner` set) and file-scope variables.
    pub decls: Vec<VarDecl>,
    pub aliases: Vec<(String, String)>,
}

/// Declarations visible across files.
#[derive(Debug, Default)]
pub(crate) struct Tables {
    pub field_types: HashMap<(String, String), String>,
    pub class_fields: HashMap<String, HashSet<String>>,
    pub globals: HashMap<String, String>,
    pub aliases: HashMap<String, String>,
}

impl Tables {
    pub fn absorb(&mut self, syn: &FileSyntax) {
        for d in &syn.decls {
            match &d.owner {
                Some(o) => {
                    self.field_types.insert((o.clone(), d.name.clone()), d.ty.clone());
                    self.class_fields.entry(o.clone()).or_default().insert(d.name.clone());
                }
                None => {
                    self.globals.entry(d.name.clone()).or_insert_with(|| d.ty.clone());
                }
            }
        }
        for (alias, target) in &syn.aliases {
            if alias != target {
                self.aliases.entry(alias.clone()).or_insert_with(|| target.clone());
            }
        }
    }

    fn canon(&self, ty: &str) -> String {
        let mut cur = ty.to_string();
        for _ in 0..8 {
            match self.aliases.get(&cur) {
                Some(next) => cur = next.clone(),
                None => break,
            }
        }
        cur
    }
}

pub(crate) struct Parsed {
    pub tokens: Vec<Token>,
    pub pairs: Vec<usize>,
    pub syntax: FileSyntax,
}

pub(crate) fn parse_file(src: &str, lang: SrcLang) -> Result<Parsed, String> {
    let opts = LexOptions {
        preprocessor: matches!(lang, SrcLang::C | SrcLang::Cpp | SrcLang::CSharp),
        text_blocks: matches!(lang, SrcLang::Java | SrcLang::CSharp),
        template_literals: matches!(lang, SrcLang::JavaScript | SrcLang::TypeScript),
    };
    let tokens = tokenize(src, opts).map_err(|e| format!("line {}: {}", e.line, e.reason))?;
    let pairs = match_pairs(&tokens)?;
    let mut sc = Scanner { t: &tokens, pairs: &pairs, src, lang, out: FileSyntax::default(), anon: 0 };
    sc.scan_scope(0, tokens.len(), &Scope::default());
    let syntax = sc.out;
    Ok(Parsed { tokens, pairs, syntax })
}

fn match_pairs(toks: &[Token]) -> Result<Vec<usize>, String> {
    let mut pairs = vec![usize::MAX; toks.len()];
    let mut stack: Vec<usize> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokKind::Punct {
            continue;
        }
        let want = match t.text.as_str() {
            "(" | "[" | "{" => {
                stack.push(i);
                continue;
            }
            ")" => "(",
            "]" => "[",
            "}" => "{",
            _ => continue,
        };
        match stack.pop() {
            Some(o) if toks[o].text == want => {
                pairs[o] = i;
                pairs[i] = o;
            }
            Some(o) => {
                return Err(format!(
                    "line {}: `{}` closed by `{}` on line {}",
                    toks[o].line, toks[o].text, t.text, t.line
                ))
            }
            None => return Err(format!("line {}: unbalanced `{}`", t.line, t.text)),
        }
    }
    if let Some(o) = stack.pop() {
        return Err(format!("line {}: unclosed `{}`", toks[o].line, toks[o].text));
    }
    Ok(pairs)
}

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool",
    "bool", "true", "false", "NULL", "__restrict", "__inline", "__attribute__", "_Alignof", "_Static_assert",
];

const CPP_KEYWORDS: &[&str] = &[
    "alignas", "alignof", "asm", "catch", "class", "const_cast", "constexpr", "decltype", "delete", "dynamic_cast",
    "explicit", "export", "friend", "mutable", "namespace", "new", "noexcept", "nullptr", "operator", "private",
    "protected", "public", "reinterpret_cast", "static_assert", "static_cast", "template", "this", "thread_local",
    "throw", "try", "typeid", "typename", "using", "virtual", "override", "final", "wchar_t", "char16_t",
    "char32_t",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const", "continue",
    "default", "do", "double", "else", "enum", "extends", "final", "finally", "float", "for", "goto", "if",
    "implements", "import", "instanceof", "int", "interface", "long", "native", "new", "package", "private",
    "protected", "public", "return", "short", "static", "strictfp", "super", "switch", "synchronized", "this",
    "throw", "throws", "transient", "try", "void", "volatile", "while", "true", "false", "null",
];

const SCRIPT_KEYWORDS: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete", "do", "else",
    "export", "extends", "finally", "for", "function", "if", "import", "in", "instanceof", "let", "new", "null",
    "return", "super", "switch", "this", "throw", "try", "typeof", "var", "void", "while", "with", "yield",
    "async", "await", "of", "true", "false", "undefined", "interface", "type", "enum", "implements", "private",
    "public", "protected", "readonly", "static",
];

const CSHARP_KEYWORDS: &[&str] = &[
    "abstract", "as", "base", "bool", "break", "byte", "case", "catch", "char", "checked", "class", "const",
    "continue", "decimal", "default", "delegate", "do", "double", "else", "enum", "event", "explicit", "extern",
    "false", "finally", "fixed", "float", "for", "foreach", "goto", "if", "implicit", "in", "int", "interface",
    "internal", "is", "lock", "long", "namespace", "new", "null", "object", "operator", "out", "override",
    "params", "private", "protected", "public", "readonly", "ref", "return", "sbyte", "sealed", "short", "sizeof",
    "static", "string", "struct", "switch", "this", "throw", "true", "try", "typeof", "uint", "ulong", "unchecked",
    "unsafe", "ushort", "using", "virtual", "void", "volatile", "while",
];

const PRIMITIVES: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "bool", "_Bool", "boolean",
    "byte", "auto", "wchar_t", "char16_t", "char32_t", "decimal", "object", "string", "sbyte", "uint", "ulong",
    "ushort",
];

const INT_MODIFIERS: &[&str] = &["signed", "unsigned", "short", "long"];

const QUALIFIERS: &[&str] = &[
    "const", "static", "volatile", "register", "extern", "final", "inline", "mutable", "constexpr", "public",
    "private", "protected", "transient", "synchronized", "abstract", "native", "thread_local", "typename",
    "restrict", "__restrict", "virtual", "explicit", "friend", "readonly", "internal", "sealed", "unsafe", "let",
    "var", "__inline",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="];

const NOT_FUNCTION_NAMES: &[&str] = &[
    "if", "for", "while", "switch", "catch", "return", "sizeof", "synchronized", "using", "foreach", "lock",
    "typeof", "alignof", "decltype",
];

pub(crate) fn is_keyword(lang: SrcLang, w: &str) -> bool {
    match lang {
        SrcLang::C => C_KEYWORDS.contains(&w),
        SrcLang::Cpp => C_KEYWORDS.contains(&w) || CPP_KEYWORDS.contains(&w),
        SrcLang::Java => JAVA_KEYWORDS.contains(&w),
        SrcLang::JavaScript | SrcLang::TypeScript => SCRIPT_KEYWORDS.contains(&w),
        SrcLang::CSharp => CSHARP_KEYWORDS.contains(&w),
    }
}

fn is_qualifier(lang: SrcLang, w: &str) -> bool {
    QUALIFIERS.contains(&w) && (is_keyword(lang, w) || matches!(w, "let" | "var") && lang.is_script())
}

fn is_primitive(lang: SrcLang, w: &str) -> bool {
    PRIMITIVES.contains(&w) && is_keyword(lang, w)
}

#[derive(Debug, Clone, Default)]
struct Scope {
    path: Vec<String>,
    class: Option<String>,
}

impl Scope {
    fn nested(&self, name: &str, is_class: bool) -> Scope {
        let mut path = self.path.clone();
        path.push(name.to_string());
        Scope { path, class: if is_class { Some(name.to_string()) } else { self.class.clone() } }
    }

    fn in_class(&self) -> bool {
        self.class.is_some()
    }
}

struct Decl {
    type_name: String,
    type_end: usize,
    declarators: Vec<(usize, bool)>,
}

/// Token-slice helpers shared by both passes.
trait TokView {
    fn toks(&self) -> &[Token];
    fn pair(&self, i: usize) -> usize;
    fn lang(&self) -> SrcLang;

    fn tx(&self, i: usize) -> &str {
        self.toks().get(i).map_or("", |t| if t.kind == TokKind::Str { "\"" } else { t.text.as_str() })
    }

    fn ident_at(&self, i: usize) -> bool {
        self.toks().get(i).is_some_and(|t| t.kind == TokKind::Ident && !is_keyword(self.lang(), &t.text))
    }

    /// Index just past a balanced `<...>` starting at `i`, if it reads as a
    /// type argument list.
    fn skip_generic(&self, i: usize) -> Option<usize> {
        let mut depth = 0i32;
        let mut j = i;
        while j < self.toks().len() {
            match self.tx(j) {
                "<" => depth += 1,
                ">" => depth -= 1,
                ">>" => depth -= 2,
                ">>>" => depth -= 3,
                "::" | "," | "*" | "&" | "." | "?" | "[" | "]" => {}
                "" => return None,
                _ if self.toks()[j].kind == TokKind::Ident || self.toks()[j].kind == TokKind::Number => {}
                _ => return None,
            }
            j += 1;
            if depth == 0 {
                return Some(j);
            }
            if depth < 0 {
                return None;
            }
        }
        None
    }

    /// Declaration starting at `i`: `[qualifiers] type [*&[]] name [= init] {, name}`.
    fn parse_decl(&self, i: usize, end: usize, paren_close_ok: bool) -> Option<Decl> {
        let lang = self.lang();
        let mut j = i;
        loop {
            let w = self.tx(j);
            if w == "@" && self.toks().get(j + 1).is_some_and(Token::is_ident) {
                j += 2;
                if self.tx(j) == "(" {
                    j = self.pair(j) + 1;
                }
            } else if is_qualifier(lang, w) {
                j += 1;
            } else {
                break;
            }
        }
        let type_name;
        let w = self.tx(j);
        if matches!(w, "struct" | "union" | "enum" | "class") && is_keyword(lang, w) {
            if !self.ident_at(j + 1) {
                return None;
            }
            type_name = self.tx(j + 1).to_string();
            j += 2;
        } else if is_primitive(lang, w) {
            let mut last = w.to_string();
            let mut only_modifiers = INT_MODIFIERS.contains(&w);
            j += 1;
            loop {
                let w = self.tx(j);
                if is_primitive(lang, w) {
                    only_modifiers &= INT_MODIFIERS.contains(&w);
                    if !INT_MODIFIERS.contains(&w) || only_modifiers {
                        last = w.to_string();
                    }
                    j += 1;
                } else if is_qualifier(lang, w) {
                    j += 1;
                } else {
                    break;
                }
            }
            type_name = last;
        } else if self.ident_at(j) {
            type_name = {
                let mut last = self.tx(j).to_string();
                j += 1;
                while self.tx(j) == "::" && self.ident_at(j + 1) {
                    last = self.tx(j + 1).to_string();
                    j += 2;
                }
                last
            };
            if self.tx(j) == "<" {
                j = self.skip_generic(j)?;
            }
        } else {
            return None;
        }
        // pointer/reference/array/const decorations
        loop {
            match self.tx(j) {
                "*" | "&" | "&&" | "..." => j += 1,
                "[" if self.tx(j + 1) == "]" => j += 2,
                w if is_qualifier(lang, w) => j += 1,
                _ => break,
            }
        }
        let type_end = j;
        let is_terminator = |k: usize| match self.tx(k) {
            "=" | ";" | "," | "[" | ":" => true,
            ")" => paren_close_ok,
            _ => false,
        };
        if !self.ident_at(j) || !is_terminator(j + 1) || j >= end {
            return None;
        }
        let mut declarators = Vec::new();
        let mut d = j;
        loop {
            let mut k = d + 1;
            while self.tx(k) == "[" {
                k = self.pair(k) + 1;
            }
            let init = self.tx(k) == "=";
            if init {
                k += 1;
                while k < end {
                    match self.tx(k) {
                        "(" | "[" | "{" => k = self.pair(k) + 1,
                        "," | ";" => break,
                        ")" if paren_close_ok => break,
                        _ => k += 1,
                    }
                }
            }
            declarators.push((d, init));
            if self.tx(k) != "," {
                break;
            }
            k += 1;
            while matches!(self.tx(k), "*" | "&" | "&&") {
                k += 1;
            }
            if self.ident_at(k) && is_terminator(k + 1) {
                d = k;
            } else {
                break;
            }
        }
        Some(Decl { type_name, type_end, declarators })
    }
}

struct Scanner<'a> {
    t: &'a [Token],
    pairs: &'a [usize],
    src: &'a str,
    lang: SrcLang,
    out: FileSyntax,
    anon: usize,
}

impl TokView for Scanner<'_> {
    fn toks(&self) -> &[Token] {
        self.t
    }
    fn pair(&self, i: usize) -> usize {
        self.pairs[i]
    }
    fn lang(&self) -> SrcLang {
        self.lang
    }
}

impl Scanner<'_> {
    fn scan_scope(&mut self, mut i: usize, end: usize, scope: &Scope) {
        let mut decl_start = i;
        let mut in_init = false;
        while i < end {
            let tok = &self.t[i];
            if tok.kind == TokKind::Punct {
                match tok.text.as_str() {
                    ";" => {
                        self.statement(decl_start, i, scope);
                        i += 1;
                        decl_start = i;
                        in_init = false;
                    }
                    "=" => {
                        in_init = true;
                        i += 1;
                    }
                    "(" | "[" => i = self.pairs[i] + 1,
                    "{" => {
                        i = self.pairs[i] + 1;
                        if !in_init {
                            decl_start = i;
                        }
                    }
                    ":" if scope.in_class()
                        && i == decl_start + 1
                        && matches!(self.tx(decl_start), "public" | "private" | "protected") =>
                    {
                        i += 1;
                        decl_start = i;
                    }
                    _ => i += 1,
                }
                continue;
            }
            if tok.kind != TokKind::Ident || in_init {
                i += 1;
                continue;
            }
            let word = tok.text.as_str();
            if word == "namespace" && is_keyword(self.lang, word) {
                let mut j = i + 1;
                let mut name = Vec::new();
                while self.ident_at(j) || self.tx(j) == "::" {
                    if self.tx(j) != "::" {
                        name.push(self.tx(j).to_string());
                    }
                    j += 1;
                }
                if self.tx(j) == "{" {
                    let close = self.pairs[j];
                    let mut inner = scope.clone();
                    inner.path.extend(name);
                    self.scan_scope(j + 1, close, &inner);
                    i = close + 1;
                    decl_start = i;
                    continue;
                }
            }
            if word == "extern" && self.t.get(i + 1).is_some_and(|t| t.kind == TokKind::Str) && self.tx(i + 2) == "{" {
                let close = self.pairs[i + 2];
                self.scan_scope(i + 3, close, scope);
                i = close + 1;
                decl_start = i;
                continue;
            }
            if matches!(word, "struct" | "class" | "union" | "interface" | "enum" | "record")
                && (is_keyword(self.lang, word) || word == "record" && self.lang == SrcLang::Java)
            {
                if let Some(next) = self.type_definition(i, decl_start, scope) {
                    i = next;
                    decl_start = i;
                    continue;
                }
            }
            if word == "operator" && matches!(self.lang, SrcLang::Cpp | SrcLang::CSharp) {
                let mut j = i + 1;
                if self.tx(j) == "(" && self.tx(j + 1) == ")" {
                    j += 2;
                }
                while j < end && self.tx(j) != "(" && self.tx(j) != ";" && self.tx(j) != "{" {
                    j += 1;
                }
                if self.tx(j) == "(" {
                    let name: String = self.t[i..j].iter().map(|t| t.text.as_str()).collect();
                    if let Some(f) = self.function_at(i, name, j, decl_start, scope) {
                        i = f.body_close + 1;
                        self.out.functions.push(f);
                        decl_start = i;
                        continue;
                    }
                }
            }
            if self.tx(i + 1) == "(" && !is_keyword(self.lang, word) && !NOT_FUNCTION_NAMES.contains(&word) {
                let name = if i > 0 && self.tx(i - 1) == "~" { format!("~{word}") } else { word.to_string() };
                if let Some(f) = self.function_at(i, name, i + 1, decl_start, scope) {
                    i = f.body_close + 1;
                    self.out.functions.push(f);
                    decl_start = i;
                    continue;
                }
            }
            i += 1;
        }
    }

    /// `struct|class|union|interface|enum [Name] [bases] { ... } [declarators];`
    /// Returns the index after the construct.
    fn type_definition(&mut self, kw: usize, decl_start: usize, scope: &Scope) -> Option<usize> {
        let mut j = kw + 1;
        while self.tx(j) == "@" || self.tx(j) == "__attribute__" || self.tx(j) == "alignas" {
            j += if self.tx(j) == "@" { 2 } else { 1 };
            if self.tx(j) == "(" {
                j = self.pairs[j] + 1;
            }
        }
        let name = if self.ident_at(j) {
            j += 1;
            Some(self.tx(j - 1).to_string())
        } else {
            None
        };
        if matches!(self.tx(j), ">" | "," | "=" | ")") {
            return None;
        }
        let mut k = j;
        loop {
            match self.tx(k) {
                "{" => break,
                ";" | "(" | "=" | ")" | "}" | "" => return None,
                _ => k += 1,
            }
        }
        let close = self.pairs[k];
        let is_enum = self.tx(kw) == "enum";
        let owner = match &name {
            Some(n) => n.clone(),
            None => {
                self.anon += 1;
                format!("<anon{}>", self.anon)
            }
        };
        if !is_enum {
            let inner = scope.nested(&owner, true);
            self.scan_scope(k + 1, close, &inner);
        }
        let mut after = close + 1;
        let typedef = self.tx(decl_start) == "typedef";
        // trailing declarators: `} a, *b;`
        let mut first_name: Option<String> = None;
        // only C and C++ put declarators after a type body
        while matches!(self.lang, SrcLang::C | SrcLang::Cpp) {
            while matches!(self.tx(after), "*" | "&") {
                after += 1;
            }
            if !self.ident_at(after) {
                break;
            }
            let n = self.tx(after).to_string();
            let tok = &self.t[after];
            let (line, offset) = (tok.line, tok.offset);
            after += 1;
            while self.tx(after) == "[" {
                after = self.pairs[after] + 1;
            }
            let init = self.tx(after) == "=";
            if init {
                after += 1;
                while !matches!(self.tx(after), "," | ";" | "") {
                    after = if matches!(self.tx(after), "(" | "[" | "{") { self.pairs[after] + 1 } else { after + 1 };
                }
            }
            if typedef {
                self.out.aliases.push((n.clone(), owner.clone()));
            } else if !is_enum {
                self.out.decls.push(VarDecl {
                    owner: scope.class.clone(),
                    name: n.clone(),
                    ty: owner.clone(),
                    line,
                    offset,
                    init,
                });
            }
            first_name.get_or_insert(n);
            if self.tx(after) == "," {
                after += 1;
            } else {
                break;
            }
        }
        if name.is_none() && typedef {
            if let Some(alias) = first_name {
                for d in &mut self.out.decls {
                    if d.owner.as_deref() == Some(owner.as_str()) {
                        d.owner = Some(alias.clone());
                    }
                }
                for f in &mut self.out.functions {
                    if f.class.as_deref() == Some(owner.as_str()) {
                        f.class = Some(alias.clone());
                    }
                }
                self.out.aliases.retain(|(a, _)| a != &alias);
            }
        }
        if self.tx(after) == ";" {
            after += 1;
        }
        Some(after)
    }

    fn function_at(
        &self,
        name_idx: usize,
        name: String,
        paren: usize,
        decl_start: usize,
        scope: &Scope,
    ) -> Option<FnSyntax> {
        let close = self.pairs[paren];
        let mut k = close + 1;
        let body_open = loop {
            match self.tx(k) {
                "{" => break k,
                "const" | "noexcept" | "override" | "final" | "volatile" | "mutable" | "&" | "&&" => {
                    k += 1;
                    if self.tx(k) == "(" {
                        k = self.pairs[k] + 1;
                    }
                }
                "__attribute__" => {
                    k += 1;
                    if self.tx(k) == "(" {
                        k = self.pairs[k] + 1;
                    }
                }
                "throws" => {
                    k += 1;
                    while self.ident_at(k) || matches!(self.tx(k), "," | "." | "::") {
                        k += 1;
                    }
                }
                "->" => {
                    k += 1;
                    while !matches!(self.tx(k), "{" | ";" | "=" | "") {
                        k += 1;
                    }
                }
                ":" if matches!(self.lang, SrcLang::Cpp | SrcLang::CSharp) => {
                    k += 1;
                    loop {
                        while self.ident_at(k) || matches!(self.tx(k), "::" | "this" | "base") {
                            k += 1;
                        }
                        if self.tx(k) == "<" {
                            k = self.skip_generic(k)?;
                        }
                        if !matches!(self.tx(k), "(" | "{") {
                            return None;
                        }
                        k = self.pairs[k] + 1;
                        match self.tx(k) {
                            "," => k += 1,
                            "{" => break,
                            _ => return None,
                        }
                    }
                }
                _ => return None,
            }
        };
        let body_close = self.pairs[body_open];

        let mut prefix = Vec::new();
        let mut j = if self.tx(name_idx.wrapping_sub(1)) == "~" { name_idx - 1 } else { name_idx };
        while j >= 2 && self.tx(j - 1) == "::" && self.ident_at(j - 2) {
            prefix.push(self.tx(j - 2).to_string());
            j -= 2;
        }
        prefix.reverse();
        let class = prefix.last().cloned().or_else(|| scope.class.clone());
        let sep = self.lang.scope_separator();
        let mut parts = scope.path.clone();
        parts.extend(prefix);
        parts.push(name.clone());
        let qualified_name = parts.join(sep);

        let start = decl_start.min(j);
        let sig_bytes = &self.src[self.t[start].offset..self.t[body_open].offset];
        let signature = sig_bytes.split_whitespace().collect::<Vec<_>>().join(" ");
        Some(FnSyntax {
            name,
            qualified_name,
            class,
            params_open: paren,
            params_close: close,
            body_open,
            body_close,
            start_line: self.t[start].line,
            end_line: self.t[body_close].line,
            signature,
        })
    }

    fn statement(&mut self, start: usize, end: usize, scope: &Scope) {
        if start >= end {
            return;
        }
        if self.tx(start) == "typedef" {
            // typedef <type> <alias>;
            let alias = (start..end).rev().find(|&k| self.ident_at(k));
            let target = alias.and_then(|a| (start + 1..a).rev().find(|&k| self.t[k].kind == TokKind::Ident));
            if let (Some(a), Some(t)) = (alias, target) {
                self.out.aliases.push((self.tx(a).to_string(), self.tx(t).to_string()));
            }
            return;
        }
        if let Some(decl) = self.parse_decl(start, end + 1, false) {
            for (d, init) in decl.declarators {
                let tok = &self.t[d];
                self.out.decls.push(VarDecl {
                    owner: scope.class.clone(),
                    name: tok.text.clone(),
                    ty: decl.type_name.clone(),
                    line: tok.line,
                    offset: tok.offset,
                    init,
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Type,
    Decl { init: bool },
}

/// Second pass over one function: calls and usage sites.
pub(crate) struct FnAnalyzer<'a> {
    pub toks: &'a [Token],
    pub pairs: &'a [usize],
    pub lang: SrcLang,
    pub file: &'a str,
    pub tables: &'a Tables,
    pub file_globals: &'a HashMap<String, String>,
}

impl TokView for FnAnalyzer<'_> {
    fn toks(&self) -> &[Token] {
        self.toks
    }
    fn pair(&self, i: usize) -> usize {
        self.pairs[i]
    }
    fn lang(&self) -> SrcLang {
        self.lang
    }
}

/// Sites with the byte offset they were found at, for stable ordering.
pub(crate) type Ordered<T> = Vec<(usize, T)>;

impl FnAnalyzer<'_> {
    pub fn analyze(&self, f: &FnSyntax) -> (Ordered<CallSite>, Ordered<UsageSite>) {
        let mut roles: HashMap<usize, Role> = HashMap::new();
        let mut locals: HashMap<String, String> = HashMap::new();
        self.mark_params(f, &mut roles, &mut locals);
        self.mark_body_decls(f, &mut roles, &mut locals);

        let mut calls = Vec::new();
        let mut usages = Vec::new();
        let ranges = [(f.params_open + 1, f.params_close), (f.body_open + 1, f.body_close)];
        for (lo, hi) in ranges {
            for idx in lo..hi {
                self.classify(idx, f, &roles, &locals, &mut calls, &mut usages);
            }
        }
        (calls, usages)
    }

    fn mark_params(&self, f: &FnSyntax, roles: &mut HashMap<usize, Role>, locals: &mut HashMap<String, String>) {
        let (lo, hi) = (f.params_open + 1, f.params_close);
        let mut seg_start = lo;
        let mut k = lo;
        while k <= hi {
            if k == hi || self.tx(k) == "," {
                self.mark_param(seg_start, k, roles, locals);
                seg_start = k + 1;
                k += 1;
                continue;
            }
            if matches!(self.tx(k), "(" | "[" | "{") {
                k = self.pairs[k] + 1;
                continue;
            }
            if self.tx(k) == "<" {
                if let Some(n) = self.skip_generic(k) {
                    k = n;
                    continue;
                }
            }
            k += 1;
        }
    }

    fn mark_param(&self, lo: usize, hi: usize, roles: &mut HashMap<usize, Role>, locals: &mut HashMap<String, String>) {
        if lo >= hi {
            return;
        }
        let stop = (lo..hi).find(|&k| self.tx(k) == "=").unwrap_or(hi);
        let mut declarator = None;
        // function pointer: `ret (*name)(args)`
        for k in lo..stop {
            if self.tx(k) == "(" && self.tx(k + 1) == "*" && self.ident_at(k + 2) && self.tx(k + 3) == ")" {
                declarator = Some(k + 2);
            }
        }
        if declarator.is_none() {
            let mut k = stop;
            while k > lo && self.tx(k - 1) == "]" {
                k = self.pairs[k - 1];
            }
            if k > lo + 1 && self.ident_at(k - 1) {
                let before = self.tx(k - 2);
                let typeish = self.toks[k - 2].kind == TokKind::Ident
                    || matches!(before, "*" | "&" | "&&" | ">" | ">>" | "]" | "...");
                if typeish {
                    declarator = Some(k - 1);
                }
            }
        }
        let Some(d) = declarator else {
            for k in lo..stop {
                roles.insert(k, Role::Type);
            }
            return;
        };
        let ty = (lo..d)
            .rev()
            .filter(|&k| self.toks[k].kind == TokKind::Ident)
            .map(|k| self.tx(k))
            .find(|w| !is_qualifier(self.lang, w) && !matches!(*w, "struct" | "union" | "enum" | "class"))
            .unwrap_or("")
            .to_string();
        for k in lo..stop {
            if k != d {
                roles.insert(k, Role::Type);
            }
        }
        roles.insert(d, Role::Decl { init: false });
        locals.insert(self.tx(d).to_string(), ty);
    }

    fn mark_body_decls(&self, f: &FnSyntax, roles: &mut HashMap<usize, Role>, locals: &mut HashMap<String, String>) {
        let (lo, hi) = (f.body_open + 1, f.body_close);
        for i in lo..hi {
            let prev = self.tx(i - 1);
            let start = matches!(prev, ";" | "{" | "}");
            let paren_start = prev == "(" && matches!(self.tx(i.wrapping_sub(2)), "for" | "catch" | "try" | "foreach");
            if !(start || paren_start) || roles.contains_key(&i) {
                continue;
            }
            let Some(decl) = self.parse_decl(i, hi, paren_start) else {
                continue;
            };
            for k in i..decl.type_end {
                roles.insert(k, Role::Type);
            }
            for (d, init) in decl.declarators {
                roles.insert(d, Role::Decl { init });
                locals.insert(self.tx(d).to_string(), decl.type_name.clone());
            }
        }
    }

    fn classify(
        &self,
        idx: usize,
        f: &FnSyntax,
        roles: &HashMap<usize, Role>,
        locals: &HashMap<String, String>,
        calls: &mut Ordered<CallSite>,
        usages: &mut Ordered<UsageSite>,
    ) {
        let tok = &self.toks[idx];
        if tok.kind != TokKind::Ident || is_keyword(self.lang, &tok.text) {
            return;
        }
        let site = |symbol: String, kind: UsageKind, field: Option<String>, base: Option<String>| UsageSite {
            symbol,
            kind,
            file: self.file.to_string(),
            line: tok.line,
            enclosing_function: Some(f.qualified_name.clone()),
            field,
            base,
        };
        match roles.get(&idx) {
            Some(Role::Type) => return,
            Some(Role::Decl { init }) => {
                usages.push((tok.offset, site(tok.text.clone(), UsageKind::Definition, None, None)));
                if *init {
                    usages.push((tok.offset, site(tok.text.clone(), UsageKind::Initialization, None, None)));
                }
                return;
            }
            None => {}
        }
        let prev = self.tx(idx.wrapping_sub(1));
        let next = self.tx(idx + 1);
        if prev == "@" || (matches!(prev, "struct" | "union" | "enum" | "class") && is_keyword(self.lang, prev)) {
            return;
        }
        if next == "(" {
            calls.push((
                tok.offset,
                CallSite {
                    caller: f.qualified_name.clone(),
                    callee_name: tok.text.clone(),
                    file: self.file.to_string(),
                    line: tok.line,
                },
            ));
            return;
        }
        if next == "::" || prev == "::" {
            return;
        }
        if matches!(prev, "." | "->") {
            let (base, owner) = self.member_base(idx - 2, f, locals);
            let symbol = format!("{}.{}", owner.as_deref().unwrap_or(&base), tok.text);
            let kind = self.access_kind(idx, self.chain_start(idx), UsageKind::MemberAccess);
            usages.push((tok.offset, site(symbol, kind, Some(tok.text.clone()), Some(base))));
            return;
        }
        if !locals.contains_key(&tok.text) {
            if let Some(class) = &f.class {
                if self.tables.class_fields.get(class).is_some_and(|s| s.contains(&tok.text)) {
                    let kind = self.access_kind(idx, idx, UsageKind::MemberAccess);
                    let symbol = format!("{class}.{}", tok.text);
                    usages.push((tok.offset, site(symbol, kind, Some(tok.text.clone()), Some("this".into()))));
                    return;
                }
            }
        }
        let kind = self.access_kind(idx, idx, UsageKind::Read);
        usages.push((tok.offset, site(tok.text.clone(), kind, None, None)));
    }

    fn access_kind(&self, idx: usize, chain_start: usize, otherwise: UsageKind) -> UsageKind {
        let mut after = idx + 1;
        while self.tx(after) == "[" {
            after = self.pairs[after] + 1;
        }
        let before = chain_start.wrapping_sub(1);
        if matches!(self.tx(after), "++" | "--") || matches!(self.tx(before), "++" | "--") {
            return UsageKind::Write;
        }
        if self.tx(before) == "*" && self.is_unary(before) {
            return otherwise;
        }
        if ASSIGN_OPS.contains(&self.tx(after)) {
            return UsageKind::Write;
        }
        otherwise
    }

    fn is_unary(&self, op: usize) -> bool {
        match self.toks.get(op.wrapping_sub(1)) {
            None => true,
            Some(t) => match t.kind {
                TokKind::Number | TokKind::Str => false,
                TokKind::Ident => is_keyword(self.lang, &t.text) && !matches!(t.text.as_str(), "this" | "true" | "false"),
                TokKind::Punct => !matches!(t.text.as_str(), ")" | "]"),
            },
        }
    }

    /// First token of a postfix chain such as `a[i].b->c`.
    fn chain_start(&self, idx: usize) -> usize {
        let mut j = idx;
        while j >= 2 && matches!(self.tx(j - 1), "." | "->") {
            let mut b = j - 2;
            if matches!(self.tx(b), "]" | ")") {
                b = self.pairs[b];
                if b > 0 && self.toks[b - 1].kind == TokKind::Ident {
                    b -= 1;
                }
            }
            j = b;
        }
        j
    }

    /// Base text and resolved owner type of the expression ending at `b`.
    fn member_base(&self, b: usize, f: &FnSyntax, locals: &HashMap<String, String>) -> (String, Option<String>) {
        let mut b = b;
        if self.tx(b) == "]" {
            b = self.pairs[b].wrapping_sub(1);
        }
        let Some(tok) = self.toks.get(b).filter(|t| t.kind == TokKind::Ident) else {
            return ("?".into(), None);
        };
        (tok.text.clone(), self.owner_of(b, f, locals))
    }

    fn owner_of(&self, b: usize, f: &FnSyntax, locals: &HashMap<String, String>) -> Option<String> {
        let name = self.tx(b);
        if name == "this" {
            return f.class.clone();
        }
        let ty = if b >= 2 && matches!(self.tx(b - 1), "." | "->") {
            let (_, parent) = self.member_base(b - 2, f, locals);
            let parent = self.tables.canon(&parent?);
            self.tables.field_types.get(&(parent, name.to_string())).cloned()
        } else if let Some(t) = locals.get(name) {
            Some(t.clone())
        } else if let Some(t) = f
            .class
            .as_ref()
            .and_then(|c| self.tables.field_types.get(&(c.clone(), name.to_string())))
        {
            Some(t.clone())
        } else {
            self.file_globals.get(name).or_else(|| self.tables.globals.get(name)).cloned()
        };
        ty.filter(|t| !t.is_empty()).map(|t| self.tables.canon(&t))
    }
}

/// File-scope variables and fields as usage sites.
pub(crate) fn decl_sites(file: &str, syn: &FileSyntax) -> Ordered<UsageSite> {
    let mut out = Vec::new();
    for d in &syn.decls {
        let (symbol, field) = match &d.owner {
            Some(o) => (format!("{o}.{}", d.name), Some(d.name.clone())),
            None => (d.name.clone(), None),
        };
        let mk = |kind| UsageSite {
            symbol: symbol.clone(),
            kind,
            file: file.to_string(),
            line: d.line,
            enclosing_function: None,
            field: field.clone(),
            base: None,
        };
        out.push((d.offset, mk(UsageKind::Definition)));
        if d.init {
            out.push((d.offset, mk(UsageKind::Initialization)));
        }
    }
    out
}
