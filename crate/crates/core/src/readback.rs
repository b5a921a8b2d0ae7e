//! Annotation readback: syntactic computation of the context of a type, the
//! source and target of a substitution, and the type of a term.
//!
//! Because every combinator carries its grammar annotation, these are
//! partial functions on raw syntax needing only the signature's declaration
//! table, no typing derivations. On well-typed input they return the
//! canonical representative used throughout checking and trace replay; on
//! ill-typed input they may fail (unknown symbol) or return junk, which is
//! fine for the untyped rewriter that consults them.

use crate::signature::Signature;
use crate::syntax::*;

/// Readback failed: a symbol is not declared in the signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownSymbol(pub SymbolName);

/// Context a type expression lives in.
pub fn ctx_of_ty(sig: &Signature, ty: &TyExpr) -> Result<CtxExpr, UnknownSymbol> {
    match ty {
        TyExpr::Sort(name) => sig
            .lookup_sort(name)
            .cloned()
            .ok_or_else(|| UnknownSymbol(name.clone())),
        TyExpr::Subst(_, sub) => sub_src(sig, sub),
    }
}

/// Source context of a substitution expression.
pub fn sub_src(sig: &Signature, sub: &SubExpr) -> Result<CtxExpr, UnknownSymbol> {
    match sub {
        SubExpr::Comp(_, g) => sub_src(sig, g),
        SubExpr::Id(c) | SubExpr::Bang(c) => Ok((**c).clone()),
        SubExpr::P(a) => Ok(ext(ctx_of_ty(sig, a)?, (**a).clone())),
        SubExpr::Pair(g, _, _) => sub_src(sig, g),
    }
}

/// Target context of a substitution expression.
pub fn sub_tgt(sig: &Signature, sub: &SubExpr) -> Result<CtxExpr, UnknownSymbol> {
    match sub {
        SubExpr::Comp(f, _) => sub_tgt(sig, f),
        SubExpr::Id(c) => Ok((**c).clone()),
        SubExpr::Bang(_) => Ok(CtxExpr::Empty),
        SubExpr::P(a) => ctx_of_ty(sig, a),
        SubExpr::Pair(g, _, a) => Ok(ext(sub_tgt(sig, g)?, (**a).clone())),
    }
}

/// Context a term expression lives in.
pub fn ctx_of_tm(sig: &Signature, tm: &TmExpr) -> Result<CtxExpr, UnknownSymbol> {
    match tm {
        TmExpr::Op(name) => sig
            .lookup_operator(name)
            .map(|(c, _)| c.clone())
            .ok_or_else(|| UnknownSymbol(name.clone())),
        TmExpr::Q(a) => Ok(ext(ctx_of_ty(sig, a)?, (**a).clone())),
        TmExpr::Subst(_, sub) => sub_src(sig, sub),
    }
}

/// Type of a term expression, in its readback context.
pub fn ty_of_tm(sig: &Signature, tm: &TmExpr) -> Result<TyExpr, UnknownSymbol> {
    match tm {
        TmExpr::Op(name) => sig
            .lookup_operator(name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| UnknownSymbol(name.clone())),
        TmExpr::Q(a) => Ok(ty_subst((**a).clone(), proj((**a).clone()))),
        TmExpr::Subst(t, sub) => Ok(ty_subst(ty_of_tm(sig, t)?, (**sub).clone())),
    }
}

/// Whether the target of `sub` reads back as the terminal context, without
/// building it. `None` when readback fails.
pub fn tgt_is_empty(sig: &Signature, sub: &SubExpr) -> Option<bool> {
    match sub {
        SubExpr::Comp(f, _) => tgt_is_empty(sig, f),
        SubExpr::Id(c) => Some(matches!(**c, CtxExpr::Empty)),
        SubExpr::Bang(_) => Some(true),
        SubExpr::P(a) => ty_ctx_is_empty(sig, a),
        SubExpr::Pair(..) => Some(false),
    }
}

/// Whether the source of `sub` reads back as the terminal context.
pub fn src_is_empty(sig: &Signature, sub: &SubExpr) -> Option<bool> {
    match sub {
        SubExpr::Comp(_, g) => src_is_empty(sig, g),
        SubExpr::Id(c) | SubExpr::Bang(c) => Some(matches!(**c, CtxExpr::Empty)),
        SubExpr::P(_) => Some(false),
        SubExpr::Pair(g, _, _) => src_is_empty(sig, g),
    }
}

fn ty_ctx_is_empty(sig: &Signature, ty: &TyExpr) -> Option<bool> {
    match ty {
        TyExpr::Sort(name) => sig
            .lookup_sort(name)
            .map(|c| matches!(c, CtxExpr::Empty)),
        TyExpr::Subst(_, sub) => src_is_empty(sig, sub),
    }
}

/// The source context of `sub` when it is syntactically at hand, without
/// expanding through projections. `None` means recovering it would require
/// building new context material.
pub fn src_shallow(sub: &SubExpr) -> Option<CtxExpr> {
    match sub {
        SubExpr::Comp(_, g) => src_shallow(g),
        SubExpr::Id(c) | SubExpr::Bang(c) => Some((**c).clone()),
        SubExpr::P(_) => None,
        SubExpr::Pair(g, _, _) => src_shallow(g),
    }
}
