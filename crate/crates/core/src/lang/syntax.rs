//! Tokens, syntax trees, the parser, and the printer for the surface
//! language.
//!
//! A program is a sequence of declarations, each starting in column 1;
//! continuation lines are indented. `--` starts a line comment.

use std::fmt;

use thiserror::Error;

use crate::operators::{self, Assoc};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Lower(String),
    Upper(String),
    Int(i64),
    Op(String),
    Equals,
    Bar,
    Semi,
    LParen,
    RParen,
    Underscore,
    Data,
    Where,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Lower(s) | Tok::Upper(s) | Tok::Op(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Equals => f.write_str("`=`"),
            Tok::Bar => f.write_str("`|`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Underscore => f.write_str("`_`"),
            Tok::Data => f.write_str("`data`"),
            Tok::Where => f.write_str("`where`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (line, col) = (ln + 1, i + 1);
            let err = |message: String| ParseError { line, col, message };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '-' && chars.get(i + 1) == Some(&'-') {
                break;
            }
            let start = i;
            let tok = if c.is_ascii_digit() {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                Tok::Int(digits.parse().map_err(|_| err(format!("integer literal `{digits}` is too large")))?)
            } else if c.is_alphabetic() || c == '_' {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match word.as_str() {
                    "_" => Tok::Underscore,
                    "data" => Tok::Data,
                    "where" => Tok::Where,
                    "let" | "in" | "case" | "of" | "if" | "then" | "else" | "import" | "module" => {
                        return Err(err(format!("`{word}` is not supported")));
                    }
                    _ if c.is_uppercase() => Tok::Upper(word),
                    _ => Tok::Lower(word),
                }
            } else {
                i += 1;
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ';' => Tok::Semi,
                    '|' if chars.get(i) == Some(&'|') => {
                        i += 1;
                        Tok::Op("||".into())
                    }
                    '|' => Tok::Bar,
                    '&' if chars.get(i) == Some(&'&') => {
                        i += 1;
                        Tok::Op("&&".into())
                    }
                    '=' if chars.get(i) == Some(&'=') => {
                        i += 1;
                        Tok::Op("==".into())
                    }
                    '=' => Tok::Equals,
                    '+' | '-' | '*' | '/' | '^' | '<' | '>' | '?' => Tok::Op(c.to_string()),
                    _ => return Err(err(format!("unexpected character `{c}`"))),
                }
            };
            out.push(Token { tok, line, col });
        }
    }
    let line = text.lines().count() + 1;
    out.push(Token { tok: Tok::Eof, line, col: 1 });
    Ok(out)
}

/// Surface expression. Names are unresolved: a head may turn out to be an
/// operation, a constructor, or a variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprAst {
    Int(i64),
    Wildcard,
    /// A name or operator applied to its arguments (possibly none).
    Apply(String, Vec<ExprAst>),
}

impl ExprAst {
    pub fn name(name: &str) -> Self {
        ExprAst::Apply(name.to_string(), Vec::new())
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Apply(head, args) if args.len() == 2 => match operators::infix(head) {
                Some((p, _)) => p,
                None => operators::APPLICATION,
            },
            ExprAst::Apply(_, args) if !args.is_empty() => operators::APPLICATION,
            _ => u8::MAX,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, context: u8) -> fmt::Result {
        let paren = self.precedence() < context;
        if paren {
            f.write_str("(")?;
        }
        match self {
            ExprAst::Int(v) if *v < 0 => write!(f, "({v})")?,
            ExprAst::Int(v) => write!(f, "{v}")?,
            ExprAst::Wildcard => f.write_str("_")?,
            ExprAst::Apply(head, args) => match operators::infix(head) {
                Some((p, assoc)) if args.len() == 2 => {
                    let (lc, rc) = operators::operand_contexts(p, assoc);
                    args[0].write(f, lc)?;
                    write!(f, " {head} ")?;
                    args[1].write(f, rc)?;
                }
                _ => {
                    f.write_str(head)?;
                    for a in args {
                        f.write_str(" ")?;
                        a.write(f, operators::APPLICATION + 1)?;
                    }
                }
            },
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

/// An expression with optional `where` bindings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scoped {
    pub body: ExprAst,
    pub locals: Vec<(String, ExprAst)>,
}

impl fmt::Display for Scoped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body)?;
        for (i, (name, e)) in self.locals.iter().enumerate() {
            let sep = if i == 0 { " where " } else { "; " };
            write!(f, "{sep}{name} = {e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataDecl {
    pub name: String,
    pub params: Vec<String>,
    /// Constructor names with the source text of each field type.
    pub constructors: Vec<(String, Vec<String>)>,
    pub line: usize,
}

impl fmt::Display for DataDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "data {}", self.name)?;
        for p in &self.params {
            write!(f, " {p}")?;
        }
        for (i, (c, fields)) in self.constructors.iter().enumerate() {
            write!(f, "{}{c}", if i == 0 { " = " } else { " | " })?;
            for t in fields {
                write!(f, " {t}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for RuleDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decl::Data(d) => d.fmt(f),
            Decl::Rule(r) => r.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleDecl {
    pub lhs: ExprAst,
    pub rhs: Scoped,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decl {
    Data(DataDecl),
    Rule(RuleDecl),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Whether a token in column 1 starts a new declaration.
    layout: bool,
    /// Index of the first token of the current declaration.
    decl_start: usize,
    /// Inside `where` bindings, `name =` starts the next binding.
    in_where: bool,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError { line: t.line, col: t.col, message: message.into() }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let t = self.peek();
        self.error_here(format!("expected {wanted}, found {}", t.tok))
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok && !self.at_boundary() {
            Ok(self.bump())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    /// The current token starts a new declaration (or input ended).
    fn at_boundary(&self) -> bool {
        let t = self.peek();
        t.tok == Tok::Eof || (self.layout && t.col == 1 && self.pos != self.decl_start)
    }

    /// `free` at offset `k` ends a `where x free` declaration. `free` is
    /// otherwise an ordinary name.
    fn free_declaration(&self, k: usize) -> bool {
        if *self.peek_at(k) != Tok::Lower("free".into()) {
            return false;
        }
        let next = &self.toks[(self.pos + k + 1).min(self.toks.len() - 1)];
        next.tok == Tok::Eof
            || next.tok == Tok::Semi
            || (self.layout && next.col == 1)
            || (matches!(next.tok, Tok::Lower(_)) && *self.peek_at(k + 2) == Tok::Equals)
    }

    fn starts_atom(&self) -> bool {
        !self.at_boundary()
            && match self.peek_at(0) {
                Tok::Lower(_) => !self.in_where || !(*self.peek_at(1) == Tok::Equals || self.free_declaration(1)),
                Tok::Upper(_) | Tok::Int(_) | Tok::LParen | Tok::Underscore => true,
                _ => false,
            }
    }

    fn program(&mut self) -> Result<Vec<Decl>, ParseError> {
        let mut decls = Vec::new();
        while self.peek().tok != Tok::Eof {
            if self.peek().col != 1 {
                return Err(self.error_here("declarations start in column 1; indent only continuation lines"));
            }
            self.decl_start = self.pos;
            if self.peek().tok == Tok::Data {
                decls.push(Decl::Data(self.data()?));
            } else {
                decls.push(Decl::Rule(self.rule()?));
            }
        }
        Ok(decls)
    }

    fn data(&mut self) -> Result<DataDecl, ParseError> {
        let line = self.bump().line;
        let name = match self.bump().tok {
            Tok::Upper(n) => n,
            _ => {
                self.pos -= 1;
                return Err(self.unexpected("a type name"));
            }
        };
        let mut params = Vec::new();
        while let Tok::Lower(p) = &self.peek().tok {
            if self.at_boundary() {
                break;
            }
            params.push(p.clone());
            self.bump();
        }
        self.expect(Tok::Equals, "`=`")?;
        let mut constructors = Vec::new();
        loop {
            let cname = match &self.peek().tok {
                Tok::Upper(n) if !self.at_boundary() => n.clone(),
                _ => return Err(self.unexpected("a constructor name")),
            };
            self.bump();
            let mut fields = Vec::new();
            while !self.at_boundary() {
                match &self.peek().tok {
                    Tok::Upper(t) | Tok::Lower(t) => {
                        fields.push(t.clone());
                        self.bump();
                    }
                    Tok::LParen => fields.push(self.type_group()?),
                    _ => break,
                }
            }
            constructors.push((cname, fields));
            if self.peek().tok == Tok::Bar && !self.at_boundary() {
                self.bump();
            } else {
                break;
            }
        }
        if !self.at_boundary() {
            return Err(self.unexpected("`|` or a new declaration"));
        }
        Ok(DataDecl { name, params, constructors, line })
    }

    /// A parenthesized field type, returned as normalized source text.
    fn type_group(&mut self) -> Result<String, ParseError> {
        let mut depth = 0;
        let mut text = String::new();
        loop {
            if self.at_boundary() {
                return Err(self.unexpected("`)`"));
            }
            let t = self.bump().tok;
            match &t {
                Tok::LParen => {
                    if !text.is_empty() && !text.ends_with('(') {
                        text.push(' ');
                    }
                    text.push('(');
                    depth += 1;
                }
                Tok::RParen => {
                    text.push(')');
                    depth -= 1;
                    if depth == 0 {
                        return Ok(text);
                    }
                }
                Tok::Upper(w) | Tok::Lower(w) => {
                    if !text.ends_with('(') {
                        text.push(' ');
                    }
                    text.push_str(w);
                }
                _ => {
                    return Err(ParseError {
                        line: self.toks[self.pos - 1].line,
                        col: self.toks[self.pos - 1].col,
                        message: format!("unexpected {t} in a type"),
                    })
                }
            }
        }
    }

    fn rule(&mut self) -> Result<RuleDecl, ParseError> {
        let line = self.peek().line;
        let lhs = self.expr()?;
        self.expect(Tok::Equals, "`=`")?;
        let rhs = self.scoped()?;
        if !self.at_boundary() {
            return Err(self.unexpected("end of declaration"));
        }
        Ok(RuleDecl { lhs, rhs, line })
    }

    fn scoped(&mut self) -> Result<Scoped, ParseError> {
        let body = self.expr()?;
        let mut locals = Vec::new();
        if self.peek().tok == Tok::Where && !self.at_boundary() {
            self.bump();
            loop {
                let name = match &self.peek().tok {
                    Tok::Lower(n) if !self.at_boundary() => n.clone(),
                    _ => return Err(self.unexpected("a local binding")),
                };
                self.bump();
                if self.free_declaration(0) {
                    return Err(self.error_here(format!(
                        "free variable `{name}`: logic variables are not supported; \
                         express the search space with `?` instead"
                    )));
                }
                self.expect(Tok::Equals, "`=`")?;
                self.in_where = true;
                let e = self.expr();
                self.in_where = false;
                locals.push((name, e?));
                if self.peek().tok == Tok::Semi && !self.at_boundary() {
                    self.bump();
                    continue;
                }
                if !self.at_boundary() && matches!(self.peek().tok, Tok::Lower(_)) && *self.peek_at(1) == Tok::Equals {
                    continue;
                }
                if !self.at_boundary() && matches!(self.peek().tok, Tok::Lower(_)) && self.free_declaration(1) {
                    continue;
                }
                break;
            }
        }
        Ok(Scoped { body, locals })
    }

    fn expr(&mut self) -> Result<ExprAst, ParseError> {
        self.infix(0)
    }

    fn infix(&mut self, min: u8) -> Result<ExprAst, ParseError> {
        let mut lhs = self.application()?;
        let mut last_nonassoc: Option<u8> = None;
        loop {
            if self.at_boundary() {
                break;
            }
            let op = match &self.peek().tok {
                Tok::Op(op) => op.clone(),
                _ => break,
            };
            let (prec, assoc) = operators::infix(&op).expect("lexer only produces known operators");
            if prec < min {
                break;
            }
            if assoc == Assoc::None && last_nonassoc == Some(prec) {
                return Err(self.error_here(format!("`{op}` is non-associative; add parentheses")));
            }
            self.bump();
            let next_min = match assoc {
                Assoc::Left | Assoc::None => prec + 1,
                Assoc::Right => prec,
            };
            let rhs = self.infix(next_min)?;
            lhs = ExprAst::Apply(op, vec![lhs, rhs]);
            last_nonassoc = (assoc == Assoc::None).then_some(prec);
        }
        Ok(lhs)
    }

    fn application(&mut self) -> Result<ExprAst, ParseError> {
        if !self.starts_atom() {
            return Err(self.unexpected("an expression"));
        }
        let head_tok = self.peek().clone();
        let head = self.atom()?;
        let mut args = Vec::new();
        while self.starts_atom() {
            args.push(self.atom()?);
        }
        if args.is_empty() {
            return Ok(head);
        }
        match head {
            ExprAst::Apply(name, existing) if existing.is_empty() && !is_operator(&name) => {
                Ok(ExprAst::Apply(name, args))
            }
            _ => Err(ParseError {
                line: head_tok.line,
                col: head_tok.col,
                message: "only named operations and constructors can be applied".into(),
            }),
        }
    }

    fn atom(&mut self) -> Result<ExprAst, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Int(v) => Ok(ExprAst::Int(v)),
            Tok::Underscore => Ok(ExprAst::Wildcard),
            Tok::Lower(n) | Tok::Upper(n) => Ok(ExprAst::Apply(n, Vec::new())),
            Tok::LParen => {
                if *self.peek_at(0) == Tok::Op("-".into()) {
                    if let Tok::Int(v) = *self.peek_at(1) {
                        if *self.peek_at(2) == Tok::RParen {
                            self.bump();
                            self.bump();
                            self.bump();
                            return Ok(ExprAst::Int(-v));
                        }
                    }
                }
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => {
                self.pos -= 1;
                Err(self.unexpected("an expression"))
            }
        }
    }
}

fn is_operator(name: &str) -> bool {
    operators::infix(name).is_some()
}

/// Parses a program into declarations without resolving names.
pub fn parse_decls(text: &str) -> Result<Vec<Decl>, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, layout: true, decl_start: 0, in_where: false };
    p.program()
}

/// Parses a top-level expression with optional `where` bindings.
pub fn parse_scoped(text: &str) -> Result<Scoped, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, layout: false, decl_start: 0, in_where: false };
    let e = p.scoped()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}
