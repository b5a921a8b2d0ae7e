//! The named-variable surface language and its elaboration into kernel
//! combinators.
//!
//! A `.gat` file is a `;`-terminated list of declarations with `--` line
//! comments:
//!
//! ```text
//! theory monoid;
//! sort M;
//! op e : M;
//! op mul (x : M, y : M) : M;
//! eq lunit (y : M) : mul(e, y) = y : M;
//! eq[rl] some_rule (x : M) : … ;      -- right-to-left orientation
//! ```
//!
//! Elaboration turns telescopes into iterated comprehensions, variables
//! into `q[p]…[p]` chains, applications `f(t₁,…,tₖ)` into
//! `f[⟨…⟨⟨⟩,t₁'⟩…,tₖ'⟩]`, and weakens point constants by the empty
//! substitution. Types weaken through `p`-chains, matching the combinator
//! forms the worked examples use.
//!
//! The combinator notation printed by `print_expr` is parsed back here
//! (`parse_*_expr`), so canonical printing round-trips structurally.

use crate::checker::{self, CheckError};
use crate::signature::{self, Declaration, Orientation, SigError, Signature};
use crate::syntax::*;
use std::fmt;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LAngle,
    RAngle,
    Bang, // ⟨⟩
    Comma,
    Colon,
    Semi,
    Dot,
    Eq,
    Turnstile,
    Comp,
    Under,
    One,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Keyword(k) => write!(f, "`{k}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{{`"),
            Tok::RBrace => f.write_str("`}}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LAngle => f.write_str("`⟨`"),
            Tok::RAngle => f.write_str("`⟩`"),
            Tok::Bang => f.write_str("`⟨⟩`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Turnstile => f.write_str("`|-`"),
            Tok::Comp => f.write_str("`∘`"),
            Tok::Under => f.write_str("`_`"),
            Tok::One => f.write_str("`1`"),
        }
    }
}

/// Source position, 1-based.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
#[error("syntax error at {span}: expected {expected}")]
pub struct ParseError {
    pub span: Span,
    pub expected: String,
}

const KEYWORDS: [&str; 5] = ["theory", "sort", "op", "eq", "model"];

fn lex(text: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let span = Span { line, col };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(ParseError {
                        span,
                        expected: "`--` comment".into(),
                    });
                }
            }
            '(' => {
                bump!();
                out.push((Tok::LParen, span));
            }
            ')' => {
                bump!();
                out.push((Tok::RParen, span));
            }
            '{' => {
                bump!();
                out.push((Tok::LBrace, span));
            }
            '}' => {
                bump!();
                out.push((Tok::RBrace, span));
            }
            '[' => {
                bump!();
                out.push((Tok::LBracket, span));
            }
            ']' => {
                bump!();
                out.push((Tok::RBracket, span));
            }
            '⟨' | '<' => {
                let open = c;
                bump!();
                let close = if open == '⟨' { '⟩' } else { '>' };
                if chars.peek() == Some(&close) {
                    bump!();
                    out.push((Tok::Bang, span));
                } else {
                    out.push((Tok::LAngle, span));
                }
            }
            '⟩' | '>' => {
                bump!();
                out.push((Tok::RAngle, span));
            }
            ',' => {
                bump!();
                out.push((Tok::Comma, span));
            }
            ':' => {
                bump!();
                out.push((Tok::Colon, span));
            }
            ';' => {
                bump!();
                out.push((Tok::Semi, span));
            }
            '.' => {
                bump!();
                out.push((Tok::Dot, span));
            }
            '=' => {
                bump!();
                out.push((Tok::Eq, span));
            }
            '∘' => {
                bump!();
                out.push((Tok::Comp, span));
            }
            '⊢' => {
                bump!();
                out.push((Tok::Turnstile, span));
            }
            '|' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    bump!();
                    out.push((Tok::Turnstile, span));
                } else {
                    return Err(ParseError {
                        span,
                        expected: "`|-`".into(),
                    });
                }
            }
            '_' => {
                bump!();
                out.push((Tok::Under, span));
            }
            '1' => {
                bump!();
                out.push((Tok::One, span));
            }
            c if c.is_alphanumeric() || c == '*' || c == '∗' || c == '\'' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '*' || c == '∗' || c == '\'' || c == '-' {
                        // A `--` inside an identifier would be a comment.
                        if c == '-' {
                            break;
                        }
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                if let Some(kw) = KEYWORDS.iter().find(|k| **k == s) {
                    out.push((Tok::Keyword(kw), span));
                } else {
                    out.push((Tok::Ident(s), span));
                }
            }
            _ => {
                return Err(ParseError {
                    span,
                    expected: format!("a token, found `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Surface syntax
// ---------------------------------------------------------------------------

/// A named-variable application tree. Types and terms share this shape.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SurfaceTerm {
    pub head: String,
    pub args: Vec<SurfaceTerm>,
    pub span: Span,
}

impl SurfaceTerm {
    pub fn var(head: impl Into<String>) -> Self {
        SurfaceTerm {
            head: head.into(),
            args: vec![],
            span: Span { line: 0, col: 0 },
        }
    }

    pub fn app(head: impl Into<String>, args: Vec<SurfaceTerm>) -> Self {
        SurfaceTerm {
            head: head.into(),
            args,
            span: Span { line: 0, col: 0 },
        }
    }
}

impl fmt::Display for SurfaceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.head)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

pub type SurfaceType = SurfaceTerm;

/// An ordered list of named bindings.
pub type Telescope = Vec<(String, SurfaceType)>;

/// One declaration as written by the user.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SurfaceDecl {
    Theory {
        name: String,
    },
    Sort {
        name: String,
        telescope: Telescope,
    },
    Op {
        name: String,
        telescope: Telescope,
        ty: SurfaceType,
    },
    Eq {
        label: String,
        telescope: Telescope,
        lhs: SurfaceTerm,
        rhs: SurfaceTerm,
        ty: SurfaceType,
        orient: Orientation,
    },
}

// ---------------------------------------------------------------------------
// The parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, s)| *s)
            .unwrap_or(Span { line: 1, col: 1 })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.err(format!("{tok}")))
        }
    }

    fn err(&self, expected: impl Into<String>) -> ParseError {
        ParseError {
            span: self.span(),
            expected: expected.into(),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.next() {
                Some(Tok::Ident(s)) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.err("an identifier")),
        }
    }

    // -- surface declarations ------------------------------------------------

    fn decls(&mut self) -> Result<Vec<SurfaceDecl>, ParseError> {
        let mut out = Vec::new();
        while self.peek().is_some() {
            out.push(self.decl()?);
        }
        Ok(out)
    }

    fn decl(&mut self) -> Result<SurfaceDecl, ParseError> {
        let d = match self.peek() {
            Some(Tok::Keyword("theory")) => {
                self.next();
                SurfaceDecl::Theory {
                    name: self.ident()?,
                }
            }
            Some(Tok::Keyword("sort")) => {
                self.next();
                let name = self.ident()?;
                let telescope = self.telescope()?;
                SurfaceDecl::Sort { name, telescope }
            }
            Some(Tok::Keyword("op")) => {
                self.next();
                let name = self.ident()?;
                let telescope = self.telescope()?;
                self.expect(Tok::Colon)?;
                let ty = self.surface_term()?;
                SurfaceDecl::Op {
                    name,
                    telescope,
                    ty,
                }
            }
            Some(Tok::Keyword("eq")) => {
                self.next();
                let orient = if self.eat(&Tok::LBracket) {
                    let o = match self.next() {
                        Some(Tok::Ident(s)) if s == "lr" => Orientation::LeftToRight,
                        Some(Tok::Ident(s)) if s == "rl" => Orientation::RightToLeft,
                        Some(Tok::Ident(s)) if s == "none" => Orientation::Unoriented,
                        _ => return Err(self.err("`lr`, `rl`, or `none`")),
                    };
                    self.expect(Tok::RBracket)?;
                    o
                } else {
                    Orientation::LeftToRight
                };
                let label = self.ident()?;
                let telescope = self.telescope()?;
                self.expect(Tok::Colon)?;
                let lhs = self.surface_term()?;
                self.expect(Tok::Eq)?;
                let rhs = self.surface_term()?;
                self.expect(Tok::Colon)?;
                let ty = self.surface_term()?;
                SurfaceDecl::Eq {
                    label,
                    telescope,
                    lhs,
                    rhs,
                    ty,
                    orient,
                }
            }
            _ => return Err(self.err("`theory`, `sort`, `op`, or `eq`")),
        };
        self.expect(Tok::Semi)?;
        Ok(d)
    }

    /// `(x, y : M, z : N)`: comma-separated groups of names sharing a type.
    /// Names collect until the group's colon, so both `x, y : M` and
    /// `x : M, y : M` read as expected.
    fn telescope(&mut self) -> Result<Telescope, ParseError> {
        if !self.eat(&Tok::LParen) {
            return Ok(vec![]);
        }
        let mut out = Vec::new();
        loop {
            let mut names = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                names.push(self.ident()?);
            }
            self.expect(Tok::Colon)?;
            let ty = self.surface_term()?;
            for n in names {
                out.push((n, ty.clone()));
            }
            if self.eat(&Tok::RParen) {
                break;
            }
            self.expect(Tok::Comma)?;
        }
        Ok(out)
    }

    fn surface_term(&mut self) -> Result<SurfaceTerm, ParseError> {
        let span = self.span();
        let head = match self.peek() {
            Some(Tok::Ident(_)) => self.ident()?,
            _ => return Err(self.err("an identifier")),
        };
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                args.push(self.surface_term()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(SurfaceTerm { head, args, span })
    }

    // -- combinator expressions ----------------------------------------------

    fn ctx_expr(&mut self) -> Result<CtxExpr, ParseError> {
        let mut cur = match self.peek() {
            Some(Tok::One) => {
                self.next();
                CtxExpr::Empty
            }
            Some(Tok::LParen) => {
                self.next();
                let c = self.ctx_expr()?;
                self.expect(Tok::RParen)?;
                c
            }
            _ => return Err(self.err("`1` or `(`")),
        };
        while self.eat(&Tok::Dot) {
            let t = self.ty_expr()?;
            cur = ext(cur, t);
        }
        Ok(cur)
    }

    fn ctx_subscript(&mut self) -> Result<CtxExpr, ParseError> {
        self.expect(Tok::Under)?;
        match self.peek() {
            Some(Tok::One) => {
                self.next();
                Ok(CtxExpr::Empty)
            }
            Some(Tok::LBrace) => {
                self.next();
                let c = self.ctx_expr()?;
                self.expect(Tok::RBrace)?;
                Ok(c)
            }
            _ => Err(self.err("`1` or `{ctx}` subscript")),
        }
    }

    fn ty_subscript(&mut self) -> Result<TyExpr, ParseError> {
        self.expect(Tok::Under)?;
        match self.peek() {
            Some(Tok::Ident(_)) => Ok(TyExpr::Sort(SymbolName::new(self.ident()?))),
            Some(Tok::LBrace) => {
                self.next();
                let t = self.ty_expr()?;
                self.expect(Tok::RBrace)?;
                Ok(t)
            }
            _ => Err(self.err("a sort name or `{ty}` subscript")),
        }
    }

    fn sub_expr(&mut self) -> Result<SubExpr, ParseError> {
        let head = self.sub_atom()?;
        // Composition is written infix and associates to the right; a bare
        // `o` identifier in operator position also reads as composition.
        let is_comp = match self.peek() {
            Some(Tok::Comp) => true,
            Some(Tok::Ident(s)) if s == "o" => true,
            _ => false,
        };
        if is_comp {
            self.next();
            let rest = self.sub_expr()?;
            Ok(comp(head, rest))
        } else {
            Ok(head)
        }
    }

    fn sub_atom(&mut self) -> Result<SubExpr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) if s == "id" => {
                self.next();
                Ok(id(self.ctx_subscript()?))
            }
            Some(Tok::Ident(s)) if s == "p" => {
                self.next();
                Ok(proj(self.ty_subscript()?))
            }
            Some(Tok::Bang) => {
                self.next();
                Ok(bang(self.ctx_subscript()?))
            }
            Some(Tok::LAngle) => {
                self.next();
                let s = self.sub_expr()?;
                self.expect(Tok::Comma)?;
                let t = self.tm_expr()?;
                self.expect(Tok::RAngle)?;
                Ok(pair(s, t, self.ty_subscript()?))
            }
            Some(Tok::LParen) => {
                self.next();
                let s = self.sub_expr()?;
                self.expect(Tok::RParen)?;
                Ok(s)
            }
            _ => Err(self.err("a substitution")),
        }
    }

    fn ty_expr(&mut self) -> Result<TyExpr, ParseError> {
        let mut cur = match self.peek() {
            Some(Tok::Ident(_)) => TyExpr::Sort(SymbolName::new(self.ident()?)),
            Some(Tok::LParen) => {
                self.next();
                let t = self.ty_expr()?;
                self.expect(Tok::RParen)?;
                t
            }
            _ => return Err(self.err("a type")),
        };
        while self.eat(&Tok::LBracket) {
            let s = self.sub_expr()?;
            self.expect(Tok::RBracket)?;
            cur = ty_subst(cur, s);
        }
        Ok(cur)
    }

    fn tm_expr(&mut self) -> Result<TmExpr, ParseError> {
        let mut cur = match self.peek().cloned() {
            Some(Tok::Ident(s)) if s == "q" => {
                self.next();
                q(self.ty_subscript()?)
            }
            Some(Tok::Ident(_)) => TmExpr::Op(SymbolName::new(self.ident()?)),
            Some(Tok::LParen) => {
                self.next();
                let t = self.tm_expr()?;
                self.expect(Tok::RParen)?;
                t
            }
            _ => return Err(self.err("a term")),
        };
        while self.eat(&Tok::LBracket) {
            let s = self.sub_expr()?;
            self.expect(Tok::RBracket)?;
            cur = tm_subst(cur, s);
        }
        Ok(cur)
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.err("end of input"))
        }
    }
}

fn parser(text: &str) -> Result<Parser, ParseError> {
    Ok(Parser {
        toks: lex(text)?,
        pos: 0,
    })
}

/// Parse a `.gat` source into surface declarations.
pub fn parse(text: &str) -> Result<Vec<SurfaceDecl>, ParseError> {
    let mut p = parser(text)?;
    p.decls()
}

/// Parse canonical combinator notation for each class.
pub fn parse_ctx_expr(text: &str) -> Result<CtxExpr, ParseError> {
    let mut p = parser(text)?;
    let c = p.ctx_expr()?;
    p.end()?;
    Ok(c)
}

pub fn parse_sub_expr(text: &str) -> Result<SubExpr, ParseError> {
    let mut p = parser(text)?;
    let s = p.sub_expr()?;
    p.end()?;
    Ok(s)
}

pub fn parse_ty_expr(text: &str) -> Result<TyExpr, ParseError> {
    let mut p = parser(text)?;
    let t = p.ty_expr()?;
    p.end()?;
    Ok(t)
}

pub fn parse_tm_expr(text: &str) -> Result<TmExpr, ParseError> {
    let mut p = parser(text)?;
    let t = p.tm_expr()?;
    p.end()?;
    Ok(t)
}

// ---------------------------------------------------------------------------
// Elaboration
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ElabError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("unknown symbol `{name}` at {span}")]
    UnknownSymbol { name: String, span: Span },
    #[error("`{name}` expects {expected} arguments, got {got} (at {span})")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
        span: Span,
    },
    #[error("argument of `{name}` at {span} has the wrong type: {detail}")]
    ArgumentTypeMismatch {
        name: String,
        span: Span,
        #[source]
        detail: Box<CheckError>,
    },
    #[error("`{name}` at {span} is a sort, not a term former")]
    SortInTermPosition { name: String, span: Span },
    #[error("`{name}` at {span} is not a sort")]
    NotASort { name: String, span: Span },
    #[error("variable `{name}` at {span} takes no arguments")]
    VariableApplied { name: String, span: Span },
    #[error("duplicate telescope name `{name}`")]
    DuplicateVar { name: String },
    #[error("signature error: {0}")]
    Sig(#[from] SigError),
}

/// A telescope turned into kernel data: the context and, per entry, its
/// name and elaborated type (each type lives over the preceding prefix).
pub struct ElabEnv {
    pub ctx: CtxExpr,
    pub entries: Vec<(String, TyExpr)>,
}

impl ElabEnv {
    pub fn empty() -> Self {
        ElabEnv {
            ctx: CtxExpr::Empty,
            entries: vec![],
        }
    }

    /// The variable chain `q[p]…[p]` for entry `i` (0-based).
    pub fn var(&self, i: usize) -> TmExpr {
        let n = self.entries.len();
        let mut t = q(self.entries[i].1.clone());
        for (_, entry_ty) in self.entries.iter().take(n).skip(i + 1) {
            t = tm_subst(t, proj(entry_ty.clone()));
        }
        t
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }
}

/// Elaborate a telescope into a context.
pub fn elab_telescope(sig: &Signature, tel: &Telescope) -> Result<ElabEnv, ElabError> {
    let mut env = ElabEnv::empty();
    for (name, sty) in tel {
        if env.lookup(name).is_some() {
            return Err(ElabError::DuplicateVar { name: name.clone() });
        }
        let ty = elab_ty(sig, &env, sty)?;
        env.ctx = ext(env.ctx.clone(), ty.clone());
        env.entries.push((name.clone(), ty));
    }
    Ok(env)
}

/// Weakening of a closed type by the full `p`-chain of the environment.
fn weaken_ty_by_ps(env: &ElabEnv, ty: TyExpr) -> TyExpr {
    let mut cur = ty;
    for (_, entry_ty) in &env.entries {
        cur = ty_subst(cur, proj(entry_ty.clone()));
    }
    cur
}

/// Build the argument spine `⟨…⟨⟨⟩,t₁'⟩…,tₖ'⟩` into a declared telescope
/// context, checking each argument against its instantiated entry type.
fn elab_spine(
    sig: &Signature,
    env: &ElabEnv,
    head: &str,
    span: Span,
    decl_ctx: &CtxExpr,
    args: &[SurfaceTerm],
) -> Result<SubExpr, ElabError> {
    let entries: Vec<TyExpr> = decl_ctx.entries().into_iter().cloned().collect();
    if entries.len() != args.len() {
        return Err(ElabError::ArityMismatch {
            name: head.to_string(),
            expected: entries.len(),
            got: args.len(),
            span,
        });
    }
    let mut spine = bang(env.ctx.clone());
    for (entry, arg) in entries.iter().zip(args) {
        let tm = elab_tm(sig, env, arg)?;
        let expected = ty_subst(entry.clone(), spine.clone());
        checker::check_tm_quick(sig, &env.ctx, &tm, &expected).map_err(|detail| {
            ElabError::ArgumentTypeMismatch {
                name: head.to_string(),
                span: arg.span,
                detail: Box::new(detail),
            }
        })?;
        spine = pair(spine, tm, entry.clone());
    }
    Ok(spine)
}

/// Elaborate a surface type in the given environment.
pub fn elab_ty(sig: &Signature, env: &ElabEnv, sty: &SurfaceType) -> Result<TyExpr, ElabError> {
    if env.lookup(&sty.head).is_some() {
        return Err(ElabError::NotASort {
            name: sty.head.clone(),
            span: sty.span,
        });
    }
    let name = SymbolName::new(sty.head.clone());
    let Some(decl_ctx) = sig.lookup_sort(&name) else {
        return Err(if sig.lookup(&name).is_ok() {
            ElabError::NotASort {
                name: sty.head.clone(),
                span: sty.span,
            }
        } else {
            ElabError::UnknownSymbol {
                name: sty.head.clone(),
                span: sty.span,
            }
        });
    };
    let decl_ctx = decl_ctx.clone();
    if decl_ctx.is_empty() && sty.args.is_empty() {
        // A point sort weakens through the telescope's p-chain.
        return Ok(weaken_ty_by_ps(env, TyExpr::Sort(name)));
    }
    let spine = elab_spine(sig, env, &sty.head, sty.span, &decl_ctx, &sty.args)?;
    Ok(ty_subst(TyExpr::Sort(name), spine))
}

/// Elaborate a surface term in the given environment.
pub fn elab_tm(sig: &Signature, env: &ElabEnv, stm: &SurfaceTerm) -> Result<TmExpr, ElabError> {
    if let Some(i) = env.lookup(&stm.head) {
        if !stm.args.is_empty() {
            return Err(ElabError::VariableApplied {
                name: stm.head.clone(),
                span: stm.span,
            });
        }
        return Ok(env.var(i));
    }
    let name = SymbolName::new(stm.head.clone());
    let Some((decl_ctx, _)) = sig.lookup_operator(&name) else {
        return Err(match sig.lookup(&name) {
            Ok(Declaration::Sort { .. }) => ElabError::SortInTermPosition {
                name: stm.head.clone(),
                span: stm.span,
            },
            _ => ElabError::UnknownSymbol {
                name: stm.head.clone(),
                span: stm.span,
            },
        });
    };
    let decl_ctx = decl_ctx.clone();
    if decl_ctx.is_empty() && stm.args.is_empty() {
        // A point constant is used bare at its own context and weakened by
        // the empty substitution elsewhere.
        return Ok(if env.ctx.is_empty() {
            TmExpr::Op(name)
        } else {
            tm_subst(TmExpr::Op(name), bang(env.ctx.clone()))
        });
    }
    let spine = elab_spine(sig, env, &stm.head, stm.span, &decl_ctx, &stm.args)?;
    Ok(tm_subst(TmExpr::Op(name), spine))
}

/// Elaborate one surface declaration against the signature so far.
pub fn elaborate(sig: &Signature, decl: &SurfaceDecl) -> Result<Option<Declaration>, ElabError> {
    match decl {
        SurfaceDecl::Theory { .. } => Ok(None),
        SurfaceDecl::Sort { name, telescope } => {
            let env = elab_telescope(sig, telescope)?;
            Ok(Some(Declaration::Sort {
                name: SymbolName::new(name.clone()),
                ctx: env.ctx,
            }))
        }
        SurfaceDecl::Op {
            name,
            telescope,
            ty,
        } => {
            let env = elab_telescope(sig, telescope)?;
            let ty = elab_ty(sig, &env, ty)?;
            Ok(Some(Declaration::Operator {
                name: SymbolName::new(name.clone()),
                ctx: env.ctx,
                ty,
            }))
        }
        SurfaceDecl::Eq {
            label,
            telescope,
            lhs,
            rhs,
            ty,
            orient,
        } => {
            let env = elab_telescope(sig, telescope)?;
            let ty = elab_ty(sig, &env, ty)?;
            let lhs = elab_tm(sig, &env, lhs)?;
            let rhs = elab_tm(sig, &env, rhs)?;
            Ok(Some(Declaration::Equation {
                label: SymbolName::new(label.clone()),
                ctx: env.ctx,
                ty,
                lhs,
                rhs,
                orient: *orient,
            }))
        }
    }
}

/// Elaborate and validate a whole surface file into a signature.
pub fn load_signature(text: &str) -> Result<(Option<String>, Signature), ElabError> {
    let decls = parse(text)?;
    build_signature(&decls)
}

/// Elaborate and validate pre-parsed declarations into a signature.
pub fn build_signature(
    decls: &[SurfaceDecl],
) -> Result<(Option<String>, Signature), ElabError> {
    let mut theory = None;
    let mut sig = signature::empty_signature();
    for d in decls {
        if let SurfaceDecl::Theory { name } = d {
            theory = Some(name.clone());
            continue;
        }
        let Some(decl) = elaborate(&sig, d)? else {
            continue;
        };
        sig = match decl {
            Declaration::Sort { name, ctx } => signature::add_sort(&sig, name, ctx)?,
            Declaration::Operator { name, ctx, ty } => {
                signature::add_operator(&sig, name, ctx, ty)?
            }
            Declaration::Equation {
                label,
                ctx,
                ty,
                lhs,
                rhs,
                orient,
            } => signature::add_equation(&sig, label, ctx, ty, lhs, rhs, orient)?,
        };
    }
    Ok((theory, sig))
}

// ---------------------------------------------------------------------------
// Printing back to named notation
// ---------------------------------------------------------------------------

/// Best-effort named rendering of a kernel expression against a context
/// with chosen variable names. Falls back to combinator notation.
pub fn print_surface(sig: &Signature, expr: &Expr, ctx: &CtxExpr, names: &[&str]) -> String {
    let entries: Vec<TyExpr> = ctx.entries().into_iter().cloned().collect();
    let env = ElabEnv {
        ctx: ctx.clone(),
        entries: names
            .iter()
            .zip(entries.iter())
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect(),
    };
    match expr {
        Expr::Tm(t) => render_tm(sig, &env, t).unwrap_or_else(|| print_compact(expr)),
        Expr::Ty(t) => render_ty(sig, &env, t).unwrap_or_else(|| print_compact(expr)),
        _ => print_compact(expr),
    }
}

fn unspine(sub: &SubExpr, k: usize) -> Option<Vec<&TmExpr>> {
    let mut args = Vec::with_capacity(k);
    let mut cur = sub;
    for _ in 0..k {
        match cur {
            SubExpr::Pair(s, m, _) => {
                args.push(m.as_ref());
                cur = s;
            }
            _ => return None,
        }
    }
    args.reverse();
    Some(args)
}

fn render_tm(sig: &Signature, env: &ElabEnv, t: &TmExpr) -> Option<String> {
    for i in 0..env.entries.len() {
        if env.var(i) == *t {
            return Some(env.entries[i].0.clone());
        }
    }
    match t {
        TmExpr::Op(f) => Some(f.to_string()),
        TmExpr::Subst(head, sub) => {
            let TmExpr::Op(f) = head.as_ref() else {
                return None;
            };
            let (decl_ctx, _) = sig.lookup_operator(f)?;
            let k = decl_ctx.len();
            if k == 0 {
                // A weakened constant renders bare.
                return Some(f.to_string());
            }
            let args = unspine(sub, k)?;
            let rendered: Option<Vec<String>> =
                args.iter().map(|a| render_tm(sig, env, a)).collect();
            Some(format!("{f}({})", rendered?.join(", ")))
        }
        TmExpr::Q(_) => None,
    }
}

fn render_ty(sig: &Signature, env: &ElabEnv, t: &TyExpr) -> Option<String> {
    match t {
        TyExpr::Sort(s) => Some(s.to_string()),
        TyExpr::Subst(head, sub) => {
            let TyExpr::Sort(s) = head.as_ref() else {
                return None;
            };
            let decl_ctx = sig.lookup_sort(s)?;
            let k = decl_ctx.len();
            if k == 0 {
                return Some(s.to_string());
            }
            let args = unspine(sub, k)?;
            let rendered: Option<Vec<String>> =
                args.iter().map(|a| render_tm(sig, env, a)).collect();
            Some(format!("{s}({})", rendered?.join(", ")))
        }
    }
}

// ---------------------------------------------------------------------------
// Goals
// ---------------------------------------------------------------------------

/// A judgment goal as written on the command line.
#[derive(Clone, Debug)]
pub enum Goal {
    /// `Γ ⊢ a : A`
    Tm(CtxExpr, TmExpr, TyExpr),
    /// `Γ ⊢ a = a' : A`
    TmEq(CtxExpr, TmExpr, TmExpr, TyExpr),
}

/// Parse a named-telescope goal: `x : M, y : M |- mul(x,y) = mul(y,x) : M`
/// (the telescope may be empty, parentheses optional).
pub fn parse_goal(sig: &Signature, text: &str) -> Result<Goal, ElabError> {
    let mut p = parser(text)?;
    let mut tel: Telescope = Vec::new();
    if p.peek() != Some(&Tok::Turnstile) {
        if p.peek() == Some(&Tok::LParen) {
            tel = p.telescope()?;
        } else {
            loop {
                let name = p.ident()?;
                p.expect(Tok::Colon)?;
                let ty = p.surface_term()?;
                tel.push((name, ty));
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
        }
    }
    p.expect(Tok::Turnstile)?;
    let lhs = p.surface_term()?;
    let rhs = if p.eat(&Tok::Eq) {
        Some(p.surface_term()?)
    } else {
        None
    };
    p.expect(Tok::Colon)?;
    let ty = p.surface_term()?;
    p.end()?;
    let env = elab_telescope(sig, &tel)?;
    let ty = elab_ty(sig, &env, &ty)?;
    let lhs = elab_tm(sig, &env, &lhs)?;
    match rhs {
        None => Ok(Goal::Tm(env.ctx, lhs, ty)),
        Some(r) => {
            let r = elab_tm(sig, &env, &r)?;
            Ok(Goal::TmEq(env.ctx, lhs, r, ty))
        }
    }
}

/// Parse a raw combinator goal: `CTX |- TM = TM : TY` or `CTX |- TM : TY`.
pub fn parse_raw_goal(text: &str) -> Result<Goal, ParseError> {
    let mut p = parser(text)?;
    let ctx = p.ctx_expr()?;
    p.expect(Tok::Turnstile)?;
    let lhs = p.tm_expr()?;
    let rhs = if p.eat(&Tok::Eq) {
        Some(p.tm_expr()?)
    } else {
        None
    };
    p.expect(Tok::Colon)?;
    let ty = p.ty_expr()?;
    p.end()?;
    Ok(match rhs {
        None => Goal::Tm(ctx, lhs, ty),
        Some(r) => Goal::TmEq(ctx, lhs, r, ty),
    })
}
