//! The inference system: judgments, derivations, syntax-directed checking,
//! and bounded conversion.
//!
//! `check_derivation` is the trusted path. It recomputes every node's
//! conclusion from its rule and premises by structural matching alone and
//! never calls the rewriter. Everything else — the syntax-directed checker
//! and the normalize-and-compare conversion — is convenience machinery that
//! must only ever produce derivations `check_derivation` accepts.
//!
//! Equality is a bounded semi-decision: conversion failure distinguishes
//! "normal forms differ" from "fuel exhausted", and neither is a proof of
//! inequality.

use crate::readback;
use crate::rewrite::{self, LawTag, RewriteRule, RuleOrigin, Strategy, Trace};
use crate::signature::{Declaration, Orientation, Signature};
use crate::syntax::*;
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::fmt;
use thiserror::Error;

/// Default rewrite-step budget for conversion checking.
pub const DEFAULT_FUEL: u64 = rewrite::DEFAULT_FUEL;

/// Recursion guard for the conversion machinery.
const MAX_CONV_DEPTH: u32 = 256;

// ---------------------------------------------------------------------------
// Judgments
// ---------------------------------------------------------------------------

/// The eight judgment forms. The plain forms are the reflexive instances of
/// the equality forms; they are kept separate so formation derivations stay
/// first-order.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Judgment {
    /// `Γ ⊢`
    Ctx(CtxExpr),
    /// `Γ = Γ' ⊢`
    CtxEq(CtxExpr, CtxExpr),
    /// `Γ ⊢ A`
    Ty(CtxExpr, TyExpr),
    /// `Γ ⊢ A = A'`
    TyEq(CtxExpr, TyExpr, TyExpr),
    /// `Δ ⊢ γ : Γ`
    Sub(CtxExpr, SubExpr, CtxExpr),
    /// `Δ ⊢ γ = γ' : Γ`
    SubEq(CtxExpr, SubExpr, SubExpr, CtxExpr),
    /// `Γ ⊢ a : A`
    Tm(CtxExpr, TmExpr, TyExpr),
    /// `Γ ⊢ a = a' : A`
    TmEq(CtxExpr, TmExpr, TmExpr, TyExpr),
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Judgment::Ctx(g) => write!(f, "{g} ⊢"),
            Judgment::CtxEq(g, h) => write!(f, "{g} = {h} ⊢"),
            Judgment::Ty(g, a) => write!(f, "{g} ⊢ {a}"),
            Judgment::TyEq(g, a, b) => write!(f, "{g} ⊢ {a} = {b}"),
            Judgment::Sub(d, s, g) => write!(f, "{d} ⊢ {s} : {g}"),
            Judgment::SubEq(d, s, t, g) => write!(f, "{d} ⊢ {s} = {t} : {g}"),
            Judgment::Tm(g, a, t) => write!(f, "{g} ⊢ {a} : {t}"),
            Judgment::TmEq(g, a, b, t) => write!(f, "{g} ⊢ {a} = {b} : {t}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

/// The thirteen conversion axiom schemas.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ConvLaw {
    /// `A[id_Γ] = A`
    TySubId,
    /// `a[id_Γ] = a : A`
    TmSubId,
    /// `A[γ∘δ] = A[γ][δ]`
    TySubComp,
    /// `a[γ∘δ] = a[γ][δ] : A[γ∘δ]`
    TmSubComp,
    /// `id_Γ ∘ γ = γ`
    IdL,
    /// `γ ∘ id_Δ = γ`
    IdR,
    /// `(γ∘δ)∘ξ = γ∘(δ∘ξ)`
    Assoc,
    /// `id_1 = ⟨⟩_1`
    IdBangOne,
    /// `⟨⟩_Γ ∘ γ = ⟨⟩_Δ`
    BangComp,
    /// `p_A ∘ ⟨γ,a⟩_A = γ`
    PPair,
    /// `q_A[⟨γ,a⟩_A] = a : A[γ]`
    QPair,
    /// `⟨γ,a⟩_A ∘ δ = ⟨γ∘δ,a[δ]⟩_A`
    PairComp,
    /// `id_{Γ.A} = ⟨p_A,q_A⟩_A`
    SurjPair,
}

pub const ALL_CONV_LAWS: [ConvLaw; 13] = [
    ConvLaw::TySubId,
    ConvLaw::TmSubId,
    ConvLaw::TySubComp,
    ConvLaw::TmSubComp,
    ConvLaw::IdL,
    ConvLaw::IdR,
    ConvLaw::Assoc,
    ConvLaw::IdBangOne,
    ConvLaw::BangComp,
    ConvLaw::PPair,
    ConvLaw::QPair,
    ConvLaw::PairComp,
    ConvLaw::SurjPair,
];

/// Inference rule tags.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Rule {
    // Formation.
    FormEmpty,
    FormExt,
    FormId,
    FormBang,
    FormP,
    FormComp,
    FormPair,
    FormTySubst,
    FormTmSubst,
    FormQ,
    // Introductions pinned to signature declarations.
    SortIntro(SymbolName),
    OpIntro(SymbolName),
    EqAxiom(SymbolName),
    // Plain judgments are reflexive instances.
    ReflCtx,
    ReflTy,
    ReflSub,
    ReflTm,
    // Per rules.
    SymCtx,
    SymTy,
    SymSub,
    SymTm,
    TransCtx,
    TransTy,
    TransSub,
    TransTm,
    // Preservation on plain judgments.
    ConvTmTy,
    ConvTmCtx,
    ConvTyCtx,
    ConvSubSrc,
    ConvSubTgt,
    // Preservation on equality judgments.
    ConvTmTyEq,
    ConvTmCtxEq,
    ConvTyCtxEq,
    ConvSubSrcEq,
    ConvSubTgtEq,
    // Congruence, one per constructor.
    CongExt,
    CongId,
    CongBang,
    CongP,
    CongComp,
    CongPair,
    CongTySubst,
    CongTmSubst,
    CongQ,
    // Conversion axioms.
    Law(ConvLaw),
}

/// A proof tree. `conclusion` is stored and re-verified by
/// [`check_derivation`].
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: Rule,
    pub premises: std::sync::Arc<Vec<Derivation>>,
    pub conclusion: Judgment,
}

impl Derivation {
    fn node(rule: Rule, premises: Vec<Derivation>, conclusion: Judgment) -> Self {
        Derivation {
            rule,
            premises: std::sync::Arc::new(premises),
            conclusion,
        }
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("ill-formed `{expr}`: {reason}")]
    IllFormed { expr: Expr, reason: String },
    #[error("context mismatch: expected `{expected}`, got `{got}`")]
    ContextMismatch { expected: CtxExpr, got: CtxExpr },
    #[error("type mismatch: synthesized `{synthesized}`, expected `{expected}` ({detail})")]
    TypeMismatch {
        synthesized: TyExpr,
        expected: TyExpr,
        detail: ConvError,
    },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(SymbolName),
    #[error("bad inference at premise path {path:?} ({rule}): {reason}")]
    BadInference {
        path: Vec<usize>,
        rule: String,
        reason: String,
    },
    #[error("conversion failed: {0}")]
    Conv(#[from] ConvError),
}

/// Conversion failure. Neither of the first two variants proves the sides
/// unequal; the third reports an input that violates the precondition that
/// both sides check.
#[derive(Debug, Error)]
pub enum ConvError {
    #[error("normal forms differ: `{left_nf}` vs `{right_nf}`")]
    NormalFormsDiffer { left_nf: Expr, right_nf: Expr },
    #[error("fuel exhausted (limit {limit})")]
    FuelExhausted { limit: u64 },
    #[error("ill-formed input: {detail}")]
    IllFormedInput { detail: String },
}

// ---------------------------------------------------------------------------
// check_derivation: the trusted verifier
// ---------------------------------------------------------------------------

struct BadRule(String);

impl From<&str> for BadRule {
    fn from(s: &str) -> Self {
        BadRule(s.to_string())
    }
}

impl From<String> for BadRule {
    fn from(s: String) -> Self {
        BadRule(s)
    }
}

/// Verify a derivation bottom-up and return its conclusion.
pub fn check_derivation(sig: &Signature, d: &Derivation) -> Result<Judgment, CheckError> {
    check_derivation_at(sig, d, &mut Vec::new())
}

fn check_derivation_at(
    sig: &Signature,
    d: &Derivation,
    path: &mut Vec<usize>,
) -> Result<Judgment, CheckError> {
    let mut prem = Vec::with_capacity(d.premises.len());
    for (i, p) in d.premises.iter().enumerate() {
        path.push(i);
        prem.push(check_derivation_at(sig, p, path)?);
        path.pop();
    }
    let expected = expected_conclusion(sig, &d.rule, &prem).map_err(|BadRule(reason)| {
        CheckError::BadInference {
            path: path.clone(),
            rule: format!("{:?}", d.rule),
            reason,
        }
    })?;
    if expected != d.conclusion {
        return Err(CheckError::BadInference {
            path: path.clone(),
            rule: format!("{:?}", d.rule),
            reason: format!(
                "stated conclusion `{}` differs from derived `{}`",
                d.conclusion, expected
            ),
        });
    }
    Ok(expected)
}

fn arity(prem: &[Judgment], n: usize) -> Result<(), BadRule> {
    if prem.len() == n {
        Ok(())
    } else {
        Err(format!("expected {n} premises, got {}", prem.len()).into())
    }
}

fn expected_conclusion(
    sig: &Signature,
    rule: &Rule,
    prem: &[Judgment],
) -> Result<Judgment, BadRule> {
    use Judgment::*;
    let want_ctx = |j: &Judgment| -> Result<CtxExpr, BadRule> {
        match j {
            Ctx(g) => Ok(g.clone()),
            _ => Err("context judgment expected".into()),
        }
    };
    let want_ty = |j: &Judgment| -> Result<(CtxExpr, TyExpr), BadRule> {
        match j {
            Ty(g, a) => Ok((g.clone(), a.clone())),
            _ => Err("type judgment expected".into()),
        }
    };
    let want_sub = |j: &Judgment| -> Result<(CtxExpr, SubExpr, CtxExpr), BadRule> {
        match j {
            Sub(d, s, g) => Ok((d.clone(), s.clone(), g.clone())),
            _ => Err("substitution judgment expected".into()),
        }
    };
    let want_tm = |j: &Judgment| -> Result<(CtxExpr, TmExpr, TyExpr), BadRule> {
        match j {
            Tm(g, a, t) => Ok((g.clone(), a.clone(), t.clone())),
            _ => Err("term judgment expected".into()),
        }
    };
    let same_ctx = |x: &CtxExpr, y: &CtxExpr, what: &str| -> Result<(), BadRule> {
        if x == y {
            Ok(())
        } else {
            Err(format!("{what}: `{x}` and `{y}` differ").into())
        }
    };
    match rule {
        Rule::FormEmpty => {
            arity(prem, 0)?;
            Ok(Ctx(CtxExpr::Empty))
        }
        Rule::FormExt => {
            arity(prem, 2)?;
            let g = want_ctx(&prem[0])?;
            let (g2, a) = want_ty(&prem[1])?;
            same_ctx(&g, &g2, "extension base")?;
            Ok(Ctx(ext(g, a)))
        }
        Rule::FormId => {
            arity(prem, 1)?;
            let g = want_ctx(&prem[0])?;
            Ok(Sub(g.clone(), id(g.clone()), g))
        }
        Rule::FormBang => {
            arity(prem, 1)?;
            let g = want_ctx(&prem[0])?;
            Ok(Sub(g.clone(), bang(g), CtxExpr::Empty))
        }
        Rule::FormP => {
            arity(prem, 1)?;
            let (g, a) = want_ty(&prem[0])?;
            Ok(Sub(ext(g.clone(), a.clone()), proj(a), g))
        }
        Rule::FormComp => {
            arity(prem, 2)?;
            let (th, f, g) = want_sub(&prem[0])?;
            let (d, gg, th2) = want_sub(&prem[1])?;
            same_ctx(&th, &th2, "composition middle")?;
            Ok(Sub(d, comp(f, gg), g))
        }
        Rule::FormPair => {
            arity(prem, 3)?;
            let (d, g0, g) = want_sub(&prem[0])?;
            let (g2, a) = want_ty(&prem[1])?;
            same_ctx(&g, &g2, "pair target")?;
            let (d2, t, ty) = want_tm(&prem[2])?;
            same_ctx(&d, &d2, "pair source")?;
            if ty != ty_subst(a.clone(), g0.clone()) {
                return Err(format!(
                    "pair component type `{ty}` is not the instantiated entry type"
                )
                .into());
            }
            Ok(Sub(d, pair(g0, t, a.clone()), ext(g, a)))
        }
        Rule::FormTySubst => {
            arity(prem, 2)?;
            let (g, a) = want_ty(&prem[0])?;
            let (d, s, g2) = want_sub(&prem[1])?;
            same_ctx(&g, &g2, "substitution target")?;
            Ok(Ty(d, ty_subst(a, s)))
        }
        Rule::FormTmSubst => {
            arity(prem, 2)?;
            let (g, a, t) = want_tm(&prem[0])?;
            let (d, s, g2) = want_sub(&prem[1])?;
            same_ctx(&g, &g2, "substitution target")?;
            Ok(Tm(d, tm_subst(a, s.clone()), ty_subst(t, s)))
        }
        Rule::FormQ => {
            arity(prem, 1)?;
            let (g, a) = want_ty(&prem[0])?;
            Ok(Tm(
                ext(g, a.clone()),
                q(a.clone()),
                ty_subst(a.clone(), proj(a)),
            ))
        }
        Rule::SortIntro(name) => {
            arity(prem, 0)?;
            match sig.lookup(name) {
                Ok(Declaration::Sort { ctx, .. }) => {
                    Ok(Ty(ctx.clone(), TyExpr::Sort(name.clone())))
                }
                _ => Err(format!("`{name}` is not a declared sort").into()),
            }
        }
        Rule::OpIntro(name) => {
            arity(prem, 0)?;
            match sig.lookup(name) {
                Ok(Declaration::Operator { ctx, ty, .. }) => {
                    Ok(Tm(ctx.clone(), TmExpr::Op(name.clone()), ty.clone()))
                }
                _ => Err(format!("`{name}` is not a declared operator").into()),
            }
        }
        Rule::EqAxiom(label) => {
            arity(prem, 0)?;
            match sig.lookup(label) {
                Ok(Declaration::Equation {
                    ctx, ty, lhs, rhs, ..
                }) => Ok(TmEq(ctx.clone(), lhs.clone(), rhs.clone(), ty.clone())),
                _ => Err(format!("`{label}` is not a declared equation").into()),
            }
        }
        Rule::ReflCtx => {
            arity(prem, 1)?;
            let g = want_ctx(&prem[0])?;
            Ok(CtxEq(g.clone(), g))
        }
        Rule::ReflTy => {
            arity(prem, 1)?;
            let (g, a) = want_ty(&prem[0])?;
            Ok(TyEq(g, a.clone(), a))
        }
        Rule::ReflSub => {
            arity(prem, 1)?;
            let (d, s, g) = want_sub(&prem[0])?;
            Ok(SubEq(d, s.clone(), s, g))
        }
        Rule::ReflTm => {
            arity(prem, 1)?;
            let (g, a, t) = want_tm(&prem[0])?;
            Ok(TmEq(g, a.clone(), a, t))
        }
        Rule::SymCtx => {
            arity(prem, 1)?;
            match &prem[0] {
                CtxEq(g, h) => Ok(CtxEq(h.clone(), g.clone())),
                _ => Err("context equality expected".into()),
            }
        }
        Rule::SymTy => {
            arity(prem, 1)?;
            match &prem[0] {
                TyEq(g, a, b) => Ok(TyEq(g.clone(), b.clone(), a.clone())),
                _ => Err("type equality expected".into()),
            }
        }
        Rule::SymSub => {
            arity(prem, 1)?;
            match &prem[0] {
                SubEq(d, s, t, g) => Ok(SubEq(d.clone(), t.clone(), s.clone(), g.clone())),
                _ => Err("substitution equality expected".into()),
            }
        }
        Rule::SymTm => {
            arity(prem, 1)?;
            match &prem[0] {
                TmEq(g, a, b, t) => Ok(TmEq(g.clone(), b.clone(), a.clone(), t.clone())),
                _ => Err("term equality expected".into()),
            }
        }
        Rule::TransCtx => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (CtxEq(g, h), CtxEq(h2, k)) if h == h2 => Ok(CtxEq(g.clone(), k.clone())),
                _ => Err("middle contexts differ".into()),
            }
        }
        Rule::TransTy => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TyEq(g, a, b), TyEq(g2, b2, c)) if g == g2 && b == b2 => {
                    Ok(TyEq(g.clone(), a.clone(), c.clone()))
                }
                _ => Err("middle types or contexts differ".into()),
            }
        }
        Rule::TransSub => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (SubEq(d, s, t, g), SubEq(d2, t2, u, g2))
                    if d == d2 && t == t2 && g == g2 =>
                {
                    Ok(SubEq(d.clone(), s.clone(), u.clone(), g.clone()))
                }
                _ => Err("middle substitutions or contexts differ".into()),
            }
        }
        Rule::TransTm => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TmEq(g, a, b, t), TmEq(g2, b2, c, t2))
                    if g == g2 && b == b2 && t == t2 =>
                {
                    Ok(TmEq(g.clone(), a.clone(), c.clone(), t.clone()))
                }
                _ => Err("middle terms, contexts, or types differ".into()),
            }
        }
        Rule::ConvTmTy => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (Tm(g, a, t), TyEq(g2, t2, u)) if g == g2 && t == t2 => {
                    Ok(Tm(g.clone(), a.clone(), u.clone()))
                }
                _ => Err("type equality does not apply".into()),
            }
        }
        Rule::ConvTmCtx => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (Tm(g, a, t), CtxEq(g2, h)) if g == g2 => {
                    Ok(Tm(h.clone(), a.clone(), t.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvTyCtx => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (Ty(g, a), CtxEq(g2, h)) if g == g2 => Ok(Ty(h.clone(), a.clone())),
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvSubSrc => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (Sub(d, s, g), CtxEq(d2, e)) if d == d2 => {
                    Ok(Sub(e.clone(), s.clone(), g.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvSubTgt => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (Sub(d, s, g), CtxEq(g2, h)) if g == g2 => {
                    Ok(Sub(d.clone(), s.clone(), h.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvTmTyEq => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TmEq(g, a, b, t), TyEq(g2, t2, u)) if g == g2 && t == t2 => {
                    Ok(TmEq(g.clone(), a.clone(), b.clone(), u.clone()))
                }
                _ => Err("type equality does not apply".into()),
            }
        }
        Rule::ConvTmCtxEq => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TmEq(g, a, b, t), CtxEq(g2, h)) if g == g2 => {
                    Ok(TmEq(h.clone(), a.clone(), b.clone(), t.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvTyCtxEq => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TyEq(g, a, b), CtxEq(g2, h)) if g == g2 => {
                    Ok(TyEq(h.clone(), a.clone(), b.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvSubSrcEq => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (SubEq(d, s, t, g), CtxEq(d2, e)) if d == d2 => {
                    Ok(SubEq(e.clone(), s.clone(), t.clone(), g.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::ConvSubTgtEq => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (SubEq(d, s, t, g), CtxEq(g2, h)) if g == g2 => {
                    Ok(SubEq(d.clone(), s.clone(), t.clone(), h.clone()))
                }
                _ => Err("context equality does not apply".into()),
            }
        }
        Rule::CongExt => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (CtxEq(g, h), TyEq(g2, a, b)) if g == g2 => {
                    Ok(CtxEq(ext(g.clone(), a.clone()), ext(h.clone(), b.clone())))
                }
                _ => Err("congruence premises do not line up".into()),
            }
        }
        Rule::CongId => {
            arity(prem, 1)?;
            match &prem[0] {
                CtxEq(g, h) => Ok(SubEq(g.clone(), id(g.clone()), id(h.clone()), g.clone())),
                _ => Err("context equality expected".into()),
            }
        }
        Rule::CongBang => {
            arity(prem, 1)?;
            match &prem[0] {
                CtxEq(g, h) => Ok(SubEq(
                    g.clone(),
                    bang(g.clone()),
                    bang(h.clone()),
                    CtxExpr::Empty,
                )),
                _ => Err("context equality expected".into()),
            }
        }
        Rule::CongP => {
            arity(prem, 1)?;
            match &prem[0] {
                TyEq(g, a, b) => Ok(SubEq(
                    ext(g.clone(), a.clone()),
                    proj(a.clone()),
                    proj(b.clone()),
                    g.clone(),
                )),
                _ => Err("type equality expected".into()),
            }
        }
        Rule::CongComp => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (SubEq(th, f, f2, g), SubEq(d, gg, gg2, th2)) if th == th2 => Ok(SubEq(
                    d.clone(),
                    comp(f.clone(), gg.clone()),
                    comp(f2.clone(), gg2.clone()),
                    g.clone(),
                )),
                _ => Err("composition middles differ".into()),
            }
        }
        Rule::CongPair => {
            arity(prem, 3)?;
            match (&prem[0], &prem[1], &prem[2]) {
                (SubEq(d, g0, g1, g), TyEq(g2, a, b), TmEq(d2, t0, t1, ty))
                    if g == g2 && d == d2 =>
                {
                    if *ty != ty_subst(a.clone(), g0.clone()) {
                        return Err(format!(
                            "pair component type `{ty}` is not the instantiated entry type"
                        )
                        .into());
                    }
                    Ok(SubEq(
                        d.clone(),
                        pair(g0.clone(), t0.clone(), a.clone()),
                        pair(g1.clone(), t1.clone(), b.clone()),
                        ext(g.clone(), a.clone()),
                    ))
                }
                _ => Err("congruence premises do not line up".into()),
            }
        }
        Rule::CongTySubst => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TyEq(g, a, b), SubEq(d, s, t, g2)) if g == g2 => Ok(TyEq(
                    d.clone(),
                    ty_subst(a.clone(), s.clone()),
                    ty_subst(b.clone(), t.clone()),
                )),
                _ => Err("congruence premises do not line up".into()),
            }
        }
        Rule::CongTmSubst => {
            arity(prem, 2)?;
            match (&prem[0], &prem[1]) {
                (TmEq(g, a, b, ty), SubEq(d, s, t, g2)) if g == g2 => Ok(TmEq(
                    d.clone(),
                    tm_subst(a.clone(), s.clone()),
                    tm_subst(b.clone(), t.clone()),
                    ty_subst(ty.clone(), s.clone()),
                )),
                _ => Err("congruence premises do not line up".into()),
            }
        }
        Rule::CongQ => {
            arity(prem, 1)?;
            match &prem[0] {
                TyEq(g, a, b) => Ok(TmEq(
                    ext(g.clone(), a.clone()),
                    q(a.clone()),
                    q(b.clone()),
                    ty_subst(a.clone(), proj(a.clone())),
                )),
                _ => Err("type equality expected".into()),
            }
        }
        Rule::Law(law) => law_conclusion(*law, prem),
    }
}

fn law_conclusion(law: ConvLaw, prem: &[Judgment]) -> Result<Judgment, BadRule> {
    use Judgment::*;
    match law {
        ConvLaw::TySubId => {
            arity(prem, 1)?;
            match &prem[0] {
                Ty(g, a) => Ok(TyEq(
                    g.clone(),
                    ty_subst(a.clone(), id(g.clone())),
                    a.clone(),
                )),
                _ => Err("type judgment expected".into()),
            }
        }
        ConvLaw::TmSubId => {
            arity(prem, 1)?;
            match &prem[0] {
                Tm(g, a, t) => Ok(TmEq(
                    g.clone(),
                    tm_subst(a.clone(), id(g.clone())),
                    a.clone(),
                    t.clone(),
                )),
                _ => Err("term judgment expected".into()),
            }
        }
        ConvLaw::TySubComp => {
            arity(prem, 3)?;
            match (&prem[0], &prem[1], &prem[2]) {
                (Ty(g, a), Sub(d, s, g2), Sub(x, t, d2)) if g == g2 && d == d2 => Ok(TyEq(
                    x.clone(),
                    ty_subst(a.clone(), comp(s.clone(), t.clone())),
                    ty_subst(ty_subst(a.clone(), s.clone()), t.clone()),
                )),
                _ => Err("substitution chain does not line up".into()),
            }
        }
        ConvLaw::TmSubComp => {
            arity(prem, 3)?;
            match (&prem[0], &prem[1], &prem[2]) {
                (Tm(g, a, ty), Sub(d, s, g2), Sub(x, t, d2)) if g == g2 && d == d2 => {
                    Ok(TmEq(
                        x.clone(),
                        tm_subst(a.clone(), comp(s.clone(), t.clone())),
                        tm_subst(tm_subst(a.clone(), s.clone()), t.clone()),
                        ty_subst(ty.clone(), comp(s.clone(), t.clone())),
                    ))
                }
                _ => Err("substitution chain does not line up".into()),
            }
        }
        ConvLaw::IdL => {
            arity(prem, 1)?;
            match &prem[0] {
                Sub(d, s, g) => Ok(SubEq(
                    d.clone(),
                    comp(id(g.clone()), s.clone()),
                    s.clone(),
                    g.clone(),
                )),
                _ => Err("substitution judgment expected".into()),
            }
        }
        ConvLaw::IdR => {
            arity(prem, 1)?;
            match &prem[0] {
                Sub(d, s, g) => Ok(SubEq(
                    d.clone(),
                    comp(s.clone(), id(d.clone())),
                    s.clone(),
                    g.clone(),
                )),
                _ => Err("substitution judgment expected".into()),
            }
        }
        ConvLaw::Assoc => {
            arity(prem, 3)?;
            match (&prem[0], &prem[1], &prem[2]) {
                (Sub(d, s, g), Sub(x, t, d2), Sub(th, u, x2)) if d == d2 && x == x2 => {
                    Ok(SubEq(
                        th.clone(),
                        comp(comp(s.clone(), t.clone()), u.clone()),
                        comp(s.clone(), comp(t.clone(), u.clone())),
                        g.clone(),
                    ))
                }
                _ => Err("composition chain does not line up".into()),
            }
        }
        ConvLaw::IdBangOne => {
            arity(prem, 0)?;
            Ok(SubEq(
                CtxExpr::Empty,
                id(CtxExpr::Empty),
                bang(CtxExpr::Empty),
                CtxExpr::Empty,
            ))
        }
        ConvLaw::BangComp => {
            arity(prem, 1)?;
            match &prem[0] {
                Sub(d, s, g) => Ok(SubEq(
                    d.clone(),
                    comp(bang(g.clone()), s.clone()),
                    bang(d.clone()),
                    CtxExpr::Empty,
                )),
                _ => Err("substitution judgment expected".into()),
            }
        }
        ConvLaw::PPair | ConvLaw::QPair => {
            arity(prem, 3)?;
            match (&prem[0], &prem[1], &prem[2]) {
                (Sub(d, g0, g), Ty(g2, a), Tm(d2, t, ty)) if g == g2 && d == d2 => {
                    if *ty != ty_subst(a.clone(), g0.clone()) {
                        return Err("pair component type mismatch".into());
                    }
                    let pr = pair(g0.clone(), t.clone(), a.clone());
                    if law == ConvLaw::PPair {
                        Ok(SubEq(
                            d.clone(),
                            comp(proj(a.clone()), pr),
                            g0.clone(),
                            g.clone(),
                        ))
                    } else {
                        Ok(TmEq(
                            d.clone(),
                            tm_subst(q(a.clone()), pr),
                            t.clone(),
                            ty_subst(a.clone(), g0.clone()),
                        ))
                    }
                }
                _ => Err("pair premises do not line up".into()),
            }
        }
        ConvLaw::PairComp => {
            arity(prem, 4)?;
            match (&prem[0], &prem[1], &prem[2], &prem[3]) {
                (Sub(d, g0, g), Ty(g2, a), Tm(d2, t, ty), Sub(x, dl, d3))
                    if g == g2 && d == d2 && d == d3 =>
                {
                    if *ty != ty_subst(a.clone(), g0.clone()) {
                        return Err("pair component type mismatch".into());
                    }
                    let pr = pair(g0.clone(), t.clone(), a.clone());
                    Ok(SubEq(
                        x.clone(),
                        comp(pr, dl.clone()),
                        pair(
                            comp(g0.clone(), dl.clone()),
                            tm_subst(t.clone(), dl.clone()),
                            a.clone(),
                        ),
                        ext(g.clone(), a.clone()),
                    ))
                }
                _ => Err("pair premises do not line up".into()),
            }
        }
        ConvLaw::SurjPair => {
            arity(prem, 1)?;
            match &prem[0] {
                Ty(g, a) => {
                    let ga = ext(g.clone(), a.clone());
                    Ok(SubEq(
                        ga.clone(),
                        id(ga.clone()),
                        pair(proj(a.clone()), q(a.clone()), a.clone()),
                        ga,
                    ))
                }
                _ => Err("type judgment expected".into()),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Syntax-directed checking
// ---------------------------------------------------------------------------

fn ill<T>(expr: Expr, reason: impl Into<String>) -> Result<T, CheckError> {
    Err(CheckError::IllFormed {
        expr,
        reason: reason.into(),
    })
}

/// Derive `Γ ⊢`.
pub fn check_ctx(sig: &Signature, ctx: &CtxExpr) -> Result<Derivation, CheckError> {
    check_ctx_in(&Cx::new(sig, DEFAULT_FUEL), ctx)
}

/// Derive `Γ ⊢ A`.
pub fn check_ty(sig: &Signature, ctx: &CtxExpr, ty: &TyExpr) -> Result<Derivation, CheckError> {
    check_ty_in(&Cx::new(sig, DEFAULT_FUEL), ctx, ty)
}

/// Synthesize the target of `Δ ⊢ γ : ?` and its derivation.
pub fn infer_sub(
    sig: &Signature,
    src: &CtxExpr,
    sub: &SubExpr,
) -> Result<(CtxExpr, Derivation), CheckError> {
    infer_sub_in(&Cx::new(sig, DEFAULT_FUEL), src, sub)
}

/// Synthesize the type of `Γ ⊢ a : ?` and its derivation.
pub fn infer_tm(
    sig: &Signature,
    ctx: &CtxExpr,
    tm: &TmExpr,
) -> Result<(TyExpr, Derivation), CheckError> {
    infer_tm_in(&Cx::new(sig, DEFAULT_FUEL), ctx, tm)
}

/// Derive `Γ ⊢ a : A`, synthesizing and converting the type.
pub fn check_tm(
    sig: &Signature,
    ctx: &CtxExpr,
    tm: &TmExpr,
    ty: &TyExpr,
) -> Result<Derivation, CheckError> {
    check_tm_in(&Cx::new(sig, DEFAULT_FUEL), ctx, tm, ty)
}

fn check_ctx_in(cx: &Cx, ctx: &CtxExpr) -> Result<Derivation, CheckError> {
    let key = MemoKey::CheckCtx(ctx.clone());
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    let d = match ctx {
        CtxExpr::Empty => Derivation::node(
            Rule::FormEmpty,
            vec![],
            Judgment::Ctx(CtxExpr::Empty),
        ),
        CtxExpr::Ext(base, ty) => {
            let d_base = check_ctx_in(cx, base)?;
            let d_ty = check_ty_in(cx, base, ty)?;
            Derivation::node(
                Rule::FormExt,
                vec![d_base, d_ty],
                Judgment::Ctx(ctx.clone()),
            )
        }
    };
    cx.memo_put(key, &d);
    Ok(d)
}

fn check_ty_in(cx: &Cx, ctx: &CtxExpr, ty: &TyExpr) -> Result<Derivation, CheckError> {
    let key = MemoKey::CheckTy(ctx.clone(), ty.clone());
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    let d = match ty {
        TyExpr::Sort(name) => {
            let Some(decl_ctx) = cx.sig.lookup_sort(name) else {
                return ill(
                    Expr::Ty(ty.clone()),
                    format!("sort `{name}` is not declared"),
                );
            };
            let decl_ctx = decl_ctx.clone();
            let intro = Derivation::node(
                Rule::SortIntro(name.clone()),
                vec![],
                Judgment::Ty(decl_ctx.clone(), ty.clone()),
            );
            if decl_ctx == *ctx {
                intro
            } else {
                let eq = prove_ctx_eq(cx, true, &decl_ctx, ctx).map_err(|_| {
                    CheckError::ContextMismatch {
                        expected: decl_ctx.clone(),
                        got: ctx.clone(),
                    }
                })?;
                Derivation::node(
                    Rule::ConvTyCtx,
                    vec![intro, eq],
                    Judgment::Ty(ctx.clone(), ty.clone()),
                )
            }
        }
        TyExpr::Subst(inner, sub) => {
            let (target, d_sub) = infer_sub_in(cx, ctx, sub)?;
            let d_ty = check_ty_in(cx, &target, inner)?;
            Derivation::node(
                Rule::FormTySubst,
                vec![d_ty, d_sub],
                Judgment::Ty(ctx.clone(), ty.clone()),
            )
        }
    };
    cx.memo_put(key, &d);
    Ok(d)
}

fn infer_sub_in(
    cx: &Cx,
    src: &CtxExpr,
    sub: &SubExpr,
) -> Result<(CtxExpr, Derivation), CheckError> {
    let key = MemoKey::InferSub(src.clone(), sub.clone());
    if let Some(d) = cx.memo_get(&key) {
        let Judgment::Sub(_, _, tgt) = &d.conclusion else {
            unreachable!()
        };
        return Ok((tgt.clone(), d));
    }
    let (tgt, d) = match sub {
        SubExpr::Id(at) => {
            let d_at = check_ctx_in(cx, at)?;
            let base = Derivation::node(
                Rule::FormId,
                vec![d_at],
                Judgment::Sub((**at).clone(), sub.clone(), (**at).clone()),
            );
            let aligned = align_sub_src(cx, base, src)?;
            ((**at).clone(), aligned)
        }
        SubExpr::Bang(from) => {
            let d_from = check_ctx_in(cx, from)?;
            let base = Derivation::node(
                Rule::FormBang,
                vec![d_from],
                Judgment::Sub((**from).clone(), sub.clone(), CtxExpr::Empty),
            );
            let aligned = align_sub_src(cx, base, src)?;
            (CtxExpr::Empty, aligned)
        }
        SubExpr::P(over) => {
            let CtxExpr::Ext(base_ctx, _) = src else {
                return ill(
                    Expr::Sub(sub.clone()),
                    "a projection needs an extended source context",
                );
            };
            let d_over = check_ty_in(cx, base_ctx, over)?;
            let formed = Derivation::node(
                Rule::FormP,
                vec![d_over],
                Judgment::Sub(
                    ext((**base_ctx).clone(), (**over).clone()),
                    sub.clone(),
                    (**base_ctx).clone(),
                ),
            );
            let aligned = align_sub_src(cx, formed, src)?;
            ((**base_ctx).clone(), aligned)
        }
        SubExpr::Comp(f, g) => {
            let (mid, d_g) = infer_sub_in(cx, src, g)?;
            let (tgt, d_f) = infer_sub_in(cx, &mid, f)?;
            (
                tgt.clone(),
                Derivation::node(
                    Rule::FormComp,
                    vec![d_f, d_g],
                    Judgment::Sub(src.clone(), sub.clone(), tgt),
                ),
            )
        }
        SubExpr::Pair(g0, tm, at) => {
            let (tgt, d_g) = infer_sub_in(cx, src, g0)?;
            let d_at = check_ty_in(cx, &tgt, at)?;
            let expected = ty_subst((**at).clone(), (**g0).clone());
            let d_tm = check_tm_in(cx, src, tm, &expected)?;
            let full = ext(tgt, (**at).clone());
            (
                full.clone(),
                Derivation::node(
                    Rule::FormPair,
                    vec![d_g, d_at, d_tm],
                    Judgment::Sub(src.clone(), sub.clone(), full),
                ),
            )
        }
    };
    cx.memo_put(key, &d);
    Ok((tgt, d))
}

fn infer_tm_in(cx: &Cx, ctx: &CtxExpr, tm: &TmExpr) -> Result<(TyExpr, Derivation), CheckError> {
    let key = MemoKey::InferTm(ctx.clone(), tm.clone());
    if let Some(d) = cx.memo_get(&key) {
        let Judgment::Tm(_, _, ty) = &d.conclusion else {
            unreachable!()
        };
        return Ok((ty.clone(), d));
    }
    let (ty, d) = match tm {
        TmExpr::Op(name) => {
            let Some((decl_ctx, decl_ty)) = cx.sig.lookup_operator(name) else {
                return ill(
                    Expr::Tm(tm.clone()),
                    format!("operator `{name}` is not declared"),
                );
            };
            let (decl_ctx, decl_ty) = (decl_ctx.clone(), decl_ty.clone());
            let intro = Derivation::node(
                Rule::OpIntro(name.clone()),
                vec![],
                Judgment::Tm(decl_ctx, tm.clone(), decl_ty.clone()),
            );
            let aligned = align_tm_ctx(cx, intro, ctx)?;
            (decl_ty, aligned)
        }
        TmExpr::Q(over) => {
            let CtxExpr::Ext(base_ctx, _) = ctx else {
                return ill(
                    Expr::Tm(tm.clone()),
                    "q only makes sense in an extended context",
                );
            };
            let d_over = check_ty_in(cx, base_ctx, over)?;
            let ty = ty_subst((**over).clone(), proj((**over).clone()));
            let formed = Derivation::node(
                Rule::FormQ,
                vec![d_over],
                Judgment::Tm(
                    ext((**base_ctx).clone(), (**over).clone()),
                    tm.clone(),
                    ty.clone(),
                ),
            );
            let aligned = align_tm_ctx(cx, formed, ctx)?;
            (ty, aligned)
        }
        TmExpr::Subst(inner, sub) => {
            let (target, d_sub) = infer_sub_in(cx, ctx, sub)?;
            let (inner_ty, d_tm) = infer_tm_in(cx, &target, inner)?;
            let ty = ty_subst(inner_ty, (**sub).clone());
            (
                ty.clone(),
                Derivation::node(
                    Rule::FormTmSubst,
                    vec![d_tm, d_sub],
                    Judgment::Tm(ctx.clone(), tm.clone(), ty),
                ),
            )
        }
    };
    cx.memo_put(key, &d);
    Ok((ty, d))
}

fn check_tm_in(
    cx: &Cx,
    ctx: &CtxExpr,
    tm: &TmExpr,
    ty: &TyExpr,
) -> Result<Derivation, CheckError> {
    let key = MemoKey::CheckTm(ctx.clone(), tm.clone(), ty.clone());
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    let (synth, d) = infer_tm_in(cx, ctx, tm)?;
    let out = if synth == *ty {
        d
    } else {
        let eq = prove_ty_eq(cx, true, ctx, &synth, ty).map_err(|detail| {
            CheckError::TypeMismatch {
                synthesized: synth.clone(),
                expected: ty.clone(),
                detail,
            }
        })?;
        Derivation::node(
            Rule::ConvTmTy,
            vec![d, eq],
            Judgment::Tm(ctx.clone(), tm.clone(), ty.clone()),
        )
    };
    cx.memo_put(key, &out);
    Ok(out)
}

/// Restate a plain substitution judgment at another (convertible) source.
fn align_sub_src(cx: &Cx, d: Derivation, want_src: &CtxExpr) -> Result<Derivation, CheckError> {
    let Judgment::Sub(src, sub, tgt) = d.conclusion.clone() else {
        unreachable!("align_sub_src on a non-substitution judgment");
    };
    if src == *want_src {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, true, &src, want_src).map_err(|_| CheckError::ContextMismatch {
        expected: src.clone(),
        got: want_src.clone(),
    })?;
    Ok(Derivation::node(
        Rule::ConvSubSrc,
        vec![d, eq],
        Judgment::Sub(want_src.clone(), sub, tgt),
    ))
}

/// Restate a plain substitution judgment at another (convertible) target.
fn align_sub_tgt_in(cx: &Cx, d: Derivation, want_tgt: &CtxExpr) -> Result<Derivation, CheckError> {
    let Judgment::Sub(src, sub, tgt) = d.conclusion.clone() else {
        unreachable!("align_sub_tgt on a non-substitution judgment");
    };
    if tgt == *want_tgt {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, true, &tgt, want_tgt).map_err(|_| CheckError::ContextMismatch {
        expected: tgt.clone(),
        got: want_tgt.clone(),
    })?;
    Ok(Derivation::node(
        Rule::ConvSubTgt,
        vec![d, eq],
        Judgment::Sub(src, sub, want_tgt.clone()),
    ))
}

/// Restate a plain term judgment at another (convertible) context.
fn align_tm_ctx(cx: &Cx, d: Derivation, want_ctx: &CtxExpr) -> Result<Derivation, CheckError> {
    let Judgment::Tm(ctx, tm, ty) = d.conclusion.clone() else {
        unreachable!("align_tm_ctx on a non-term judgment");
    };
    if ctx == *want_ctx {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, true, &ctx, want_ctx).map_err(|_| CheckError::ContextMismatch {
        expected: ctx.clone(),
        got: want_ctx.clone(),
    })?;
    Ok(Derivation::node(
        Rule::ConvTmCtx,
        vec![d, eq],
        Judgment::Tm(want_ctx.clone(), tm, ty),
    ))
}

// ---------------------------------------------------------------------------
// Conversion
// ---------------------------------------------------------------------------

struct Cx<'a> {
    sig: &'a Signature,
    rules_full: std::cell::OnceCell<Vec<RewriteRule>>,
    rules_cwf: std::cell::OnceCell<Vec<RewriteRule>>,
    fuel: Cell<u64>,
    depth: Cell<u32>,
    limit: u64,
    /// Equations whose own rewrite rule is suspended while a step of theirs
    /// is being justified, to keep replay well-founded.
    excluded: std::cell::RefCell<Vec<SymbolName>>,
    /// Successful checks and conversions, shared across one operation.
    memo: std::cell::RefCell<std::collections::HashMap<MemoKey, Derivation>>,
    /// Conversion goals currently on the stack; re-entering one means the
    /// only route is circular, so that branch fails fast.
    in_progress: std::cell::RefCell<std::collections::HashSet<MemoKey>>,
    /// Normal forms already computed in this operation.
    norm_memo: std::cell::RefCell<std::collections::HashMap<(bool, Expr), std::rc::Rc<(Expr, Trace)>>>,
    /// Goals already decided by the proof-free checker.
    quick_memo: std::cell::RefCell<std::collections::HashMap<MemoKey, QuickHit>>,
}

/// Cached result of a proof-free query.
#[derive(Clone)]
enum QuickHit {
    Ok,
    Sub(CtxExpr),
    Tm(TyExpr),
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum MemoKey {
    CheckCtx(CtxExpr),
    CheckTy(CtxExpr, TyExpr),
    InferSub(CtxExpr, SubExpr),
    InferTm(CtxExpr, TmExpr),
    CheckTm(CtxExpr, TmExpr, TyExpr),
    ConvCtx(bool, CtxExpr, CtxExpr),
    ConvTy(bool, CtxExpr, TyExpr, TyExpr),
    ConvSub(bool, CtxExpr, CtxExpr, SubExpr, SubExpr),
    ConvTm(bool, CtxExpr, TyExpr, TmExpr, TmExpr),
}

struct DepthGuard<'a>(&'a Cell<u32>);

impl Drop for DepthGuard<'_> {
    fn drop(&mut self) {
        self.0.set(self.0.get() - 1);
    }
}

impl<'a> Cx<'a> {
    fn new(sig: &'a Signature, fuel: u64) -> Self {
        Cx {
            sig,
            rules_full: std::cell::OnceCell::new(),
            rules_cwf: std::cell::OnceCell::new(),
            fuel: Cell::new(fuel),
            depth: Cell::new(0),
            limit: fuel,
            excluded: std::cell::RefCell::new(Vec::new()),
            memo: std::cell::RefCell::new(std::collections::HashMap::new()),
            in_progress: std::cell::RefCell::new(std::collections::HashSet::new()),
            norm_memo: std::cell::RefCell::new(std::collections::HashMap::new()),
            quick_memo: std::cell::RefCell::new(std::collections::HashMap::new()),
        }
    }

    fn quick_get(&self, key: &MemoKey) -> Option<QuickHit> {
        if !self.excluded.borrow().is_empty() {
            return None;
        }
        self.quick_memo.borrow().get(key).cloned()
    }

    fn quick_put(&self, key: MemoKey, hit: QuickHit) {
        if self.excluded.borrow().is_empty() {
            self.quick_memo.borrow_mut().insert(key, hit);
        }
    }

    fn enter_goal(&self, key: &MemoKey) -> Result<(), ConvError> {
        if !self.in_progress.borrow_mut().insert(key.clone()) {
            return Err(ConvError::FuelExhausted { limit: self.limit });
        }
        Ok(())
    }

    fn leave_goal(&self, key: &MemoKey) {
        self.in_progress.borrow_mut().remove(key);
    }

    fn memo_get(&self, key: &MemoKey) -> Option<Derivation> {
        if !self.excluded.borrow().is_empty() {
            return None;
        }
        self.memo.borrow().get(key).cloned()
    }

    fn memo_put(&self, key: MemoKey, d: &Derivation) {
        if self.excluded.borrow().is_empty() {
            self.memo.borrow_mut().insert(key, d.clone());
        }
    }

    fn guard(&self) -> Result<DepthGuard<'_>, ConvError> {
        if self.depth.get() >= MAX_CONV_DEPTH {
            return Err(ConvError::FuelExhausted { limit: self.limit });
        }
        self.depth.set(self.depth.get() + 1);
        Ok(DepthGuard(&self.depth))
    }

    fn rules(&self, sig_on: bool) -> &[RewriteRule] {
        if sig_on {
            self.rules_full.get_or_init(|| rewrite::rules_for(self.sig))
        } else {
            self.rules_cwf.get_or_init(rewrite::cwf_rules)
        }
    }

    /// Normalize with the active rule set. The fuel limit applies to each
    /// normalization; the surrounding search is bounded by the depth guard.
    fn normalize(&self, sig_on: bool, expr: &Expr) -> Result<(Expr, Trace), ConvError> {
        let memo_ok = self.excluded.borrow().is_empty();
        if memo_ok {
            if let Some(hit) = self.norm_memo.borrow().get(&(sig_on, expr.clone())) {
                return Ok((**hit).clone());
            }
        }
        let out = self.normalize_uncached(sig_on, expr)?;
        if memo_ok {
            self.norm_memo
                .borrow_mut()
                .insert((sig_on, expr.clone()), std::rc::Rc::new(out.clone()));
        }
        Ok(out)
    }

    fn normalize_uncached(&self, sig_on: bool, expr: &Expr) -> Result<(Expr, Trace), ConvError> {
        let excluded = self.excluded.borrow();
        let filtered: Vec<RewriteRule>;
        let rules: &[RewriteRule] = if excluded.is_empty() {
            self.rules(sig_on)
        } else {
            filtered = self
                .rules(sig_on)
                .iter()
                .filter(|r| match &r.origin {
                    RuleOrigin::SigEquation(l) => !excluded.contains(l),
                    _ => true,
                })
                .cloned()
                .collect();
            &filtered
        };
        let dbg = std::env::var("GAT_DEBUG_NORM").is_ok();
        let t0 = std::time::Instant::now();
        match rewrite::normalize_with(
            self.sig,
            rules,
            expr,
            self.limit,
            Strategy::LeftmostOutermost,
        ) {
            Ok(out) => {
                if dbg {
                    eprintln!(
                        "norm: nodes={} steps={} {:?}",
                        crate::syntax::total_nodes(expr),
                        out.1.len(),
                        t0.elapsed()
                    );
                }
                Ok(out)
            }
            Err(rewrite::RewriteError::FuelExhausted { .. }) => {
                Err(ConvError::FuelExhausted { limit: self.limit })
            }
        }
    }
}

fn cerr(e: CheckError) -> ConvError {
    match e {
        CheckError::Conv(c) => c,
        other => ConvError::IllFormedInput {
            detail: other.to_string(),
        },
    }
}

fn rb<T>(r: Result<T, readback::UnknownSymbol>) -> Result<T, ConvError> {
    r.map_err(|readback::UnknownSymbol(name)| ConvError::IllFormedInput {
        detail: format!("unknown symbol `{name}` during readback"),
    })
}

// Checker bridges.
fn chk_ctx(cx: &Cx, c: &CtxExpr) -> Result<Derivation, ConvError> {
    check_ctx_in(cx, c).map_err(cerr)
}
fn chk_ty(cx: &Cx, ctx: &CtxExpr, t: &TyExpr) -> Result<Derivation, ConvError> {
    check_ty_in(cx, ctx, t).map_err(cerr)
}
fn chk_tm(cx: &Cx, ctx: &CtxExpr, t: &TmExpr, ty: &TyExpr) -> Result<Derivation, ConvError> {
    check_tm_in(cx, ctx, t, ty).map_err(cerr)
}
fn inf_tm(cx: &Cx, ctx: &CtxExpr, t: &TmExpr) -> Result<(TyExpr, Derivation), ConvError> {
    infer_tm_in(cx, ctx, t).map_err(cerr)
}

/// Plain substitution judgment at a given source, target aligned.
fn derive_sub(
    cx: &Cx,
    src: &CtxExpr,
    want_tgt: &CtxExpr,
    s: &SubExpr,
) -> Result<Derivation, ConvError> {
    let (_, d) = infer_sub_in(cx, src, s).map_err(cerr)?;
    align_sub_tgt_in(cx, d, want_tgt).map_err(cerr)
}

// Smart equality constructors.

fn eq_sides_equal(j: &Judgment) -> bool {
    match j {
        Judgment::CtxEq(a, b) => a == b,
        Judgment::TyEq(_, a, b) => a == b,
        Judgment::SubEq(_, a, b, _) => a == b,
        Judgment::TmEq(_, a, b, _) => a == b,
        _ => false,
    }
}

fn d_sym(d: Derivation) -> Derivation {
    if eq_sides_equal(&d.conclusion) {
        return d;
    }
    let (rule, conclusion) = match &d.conclusion {
        Judgment::CtxEq(a, b) => (Rule::SymCtx, Judgment::CtxEq(b.clone(), a.clone())),
        Judgment::TyEq(g, a, b) => (
            Rule::SymTy,
            Judgment::TyEq(g.clone(), b.clone(), a.clone()),
        ),
        Judgment::SubEq(s, a, b, t) => (
            Rule::SymSub,
            Judgment::SubEq(s.clone(), b.clone(), a.clone(), t.clone()),
        ),
        Judgment::TmEq(g, a, b, t) => (
            Rule::SymTm,
            Judgment::TmEq(g.clone(), b.clone(), a.clone(), t.clone()),
        ),
        _ => unreachable!("sym of a non-equality judgment"),
    };
    Derivation::node(rule, vec![d], conclusion)
}

fn d_trans(d1: Derivation, d2: Derivation) -> Derivation {
    if eq_sides_equal(&d1.conclusion) {
        return d2;
    }
    if eq_sides_equal(&d2.conclusion) {
        return d1;
    }
    let (rule, conclusion) = match (&d1.conclusion, &d2.conclusion) {
        (Judgment::CtxEq(a, _), Judgment::CtxEq(_, c)) => {
            (Rule::TransCtx, Judgment::CtxEq(a.clone(), c.clone()))
        }
        (Judgment::TyEq(g, a, _), Judgment::TyEq(_, _, c)) => (
            Rule::TransTy,
            Judgment::TyEq(g.clone(), a.clone(), c.clone()),
        ),
        (Judgment::SubEq(s, a, _, t), Judgment::SubEq(_, _, c, _)) => (
            Rule::TransSub,
            Judgment::SubEq(s.clone(), a.clone(), c.clone(), t.clone()),
        ),
        (Judgment::TmEq(g, a, _, t), Judgment::TmEq(_, _, c, _)) => (
            Rule::TransTm,
            Judgment::TmEq(g.clone(), a.clone(), c.clone(), t.clone()),
        ),
        _ => unreachable!("trans of mismatched judgments"),
    };
    Derivation::node(rule, vec![d1, d2], conclusion)
}

fn d_refl(plain: Derivation) -> Derivation {
    let (rule, conclusion) = match &plain.conclusion {
        Judgment::Ctx(g) => (Rule::ReflCtx, Judgment::CtxEq(g.clone(), g.clone())),
        Judgment::Ty(g, a) => (
            Rule::ReflTy,
            Judgment::TyEq(g.clone(), a.clone(), a.clone()),
        ),
        Judgment::Sub(s, x, t) => (
            Rule::ReflSub,
            Judgment::SubEq(s.clone(), x.clone(), x.clone(), t.clone()),
        ),
        Judgment::Tm(g, x, t) => (
            Rule::ReflTm,
            Judgment::TmEq(g.clone(), x.clone(), x.clone(), t.clone()),
        ),
        _ => unreachable!("refl of an equality judgment"),
    };
    Derivation::node(rule, vec![plain], conclusion)
}

// Alignment of equality judgments to requested frames.

fn align_ty_eq_ctx(
    cx: &Cx,
    sig_on: bool,
    d: Derivation,
    want: &CtxExpr,
) -> Result<Derivation, ConvError> {
    let Judgment::TyEq(g, a, b) = d.conclusion.clone() else {
        unreachable!()
    };
    if g == *want {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, sig_on, &g, want)?;
    Ok(Derivation::node(
        Rule::ConvTyCtxEq,
        vec![d, eq],
        Judgment::TyEq(want.clone(), a, b),
    ))
}

fn align_tm_eq_ctx(
    cx: &Cx,
    sig_on: bool,
    d: Derivation,
    want: &CtxExpr,
) -> Result<Derivation, ConvError> {
    let Judgment::TmEq(g, a, b, t) = d.conclusion.clone() else {
        unreachable!()
    };
    if g == *want {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, sig_on, &g, want)?;
    Ok(Derivation::node(
        Rule::ConvTmCtxEq,
        vec![d, eq],
        Judgment::TmEq(want.clone(), a, b, t),
    ))
}

fn align_tm_eq_ty(
    cx: &Cx,
    sig_on: bool,
    d: Derivation,
    want: &TyExpr,
) -> Result<Derivation, ConvError> {
    let Judgment::TmEq(g, a, b, t) = d.conclusion.clone() else {
        unreachable!()
    };
    if t == *want {
        return Ok(d);
    }
    let eq = prove_ty_eq(cx, sig_on, &g, &t, want)?;
    Ok(Derivation::node(
        Rule::ConvTmTyEq,
        vec![d, eq],
        Judgment::TmEq(g, a, b, want.clone()),
    ))
}

fn align_sub_eq_src(
    cx: &Cx,
    sig_on: bool,
    d: Derivation,
    want: &CtxExpr,
) -> Result<Derivation, ConvError> {
    let Judgment::SubEq(s, a, b, t) = d.conclusion.clone() else {
        unreachable!()
    };
    if s == *want {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, sig_on, &s, want)?;
    Ok(Derivation::node(
        Rule::ConvSubSrcEq,
        vec![d, eq],
        Judgment::SubEq(want.clone(), a, b, t),
    ))
}

fn align_sub_eq_tgt(
    cx: &Cx,
    sig_on: bool,
    d: Derivation,
    want: &CtxExpr,
) -> Result<Derivation, ConvError> {
    let Judgment::SubEq(s, a, b, t) = d.conclusion.clone() else {
        unreachable!()
    };
    if t == *want {
        return Ok(d);
    }
    let eq = prove_ctx_eq(cx, sig_on, &t, want)?;
    Ok(Derivation::node(
        Rule::ConvSubTgtEq,
        vec![d, eq],
        Judgment::SubEq(s, a, b, want.clone()),
    ))
}

// Frames: the canonical judgment slots computed by annotation readback.

fn ty_frame(cx: &Cx, t: &TyExpr) -> Result<CtxExpr, ConvError> {
    rb(readback::ctx_of_ty(cx.sig, t))
}

fn tm_frame(cx: &Cx, t: &TmExpr) -> Result<(CtxExpr, TyExpr), ConvError> {
    Ok((
        rb(readback::ctx_of_tm(cx.sig, t))?,
        rb(readback::ty_of_tm(cx.sig, t))?,
    ))
}

fn sub_frame(cx: &Cx, s: &SubExpr) -> Result<(CtxExpr, CtxExpr), ConvError> {
    Ok((
        rb(readback::sub_src(cx.sig, s))?,
        rb(readback::sub_tgt(cx.sig, s))?,
    ))
}

// ---------------------------------------------------------------------------
// The provers
// ---------------------------------------------------------------------------

fn prove_ctx_eq(
    cx: &Cx,
    sig_on: bool,
    a: &CtxExpr,
    b: &CtxExpr,
) -> Result<Derivation, ConvError> {
    let key = MemoKey::ConvCtx(sig_on, a.clone(), b.clone());
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    // Decide cheaply first; only then build the proof.
    q_conv_ctx(cx, sig_on, a, b)?;
    cx.enter_goal(&key)?;
    let d = prove_ctx_eq_inner(cx, sig_on, a, b);
    cx.leave_goal(&key);
    let d = d?;
    cx.memo_put(key, &d);
    Ok(d)
}

fn prove_ctx_eq_inner(
    cx: &Cx,
    sig_on: bool,
    a: &CtxExpr,
    b: &CtxExpr,
) -> Result<Derivation, ConvError> {
    let _g = cx.guard()?;
    if a == b {
        return Ok(d_refl(chk_ctx(cx, a)?));
    }
    match (a, b) {
        (CtxExpr::Ext(ba, ta), CtxExpr::Ext(bb, tb)) => {
            let d_base = prove_ctx_eq(cx, sig_on, ba, bb)?;
            let d_ty = prove_ty_eq(cx, sig_on, ba, ta, tb)?;
            Ok(Derivation::node(
                Rule::CongExt,
                vec![d_base, d_ty],
                Judgment::CtxEq(a.clone(), b.clone()),
            ))
        }
        _ => Err(ConvError::NormalFormsDiffer {
            left_nf: Expr::Ctx(a.clone()),
            right_nf: Expr::Ctx(b.clone()),
        }),
    }
}

fn prove_ty_eq(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    a: &TyExpr,
    b: &TyExpr,
) -> Result<Derivation, ConvError> {
    let key = MemoKey::ConvTy(sig_on, ambient.clone(), a.clone(), b.clone());
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    // Decide cheaply first; only then build the proof.
    q_conv_ty(cx, sig_on, a, b)?;
    cx.enter_goal(&key)?;
    let d = prove_ty_eq_inner(cx, sig_on, ambient, a, b);
    cx.leave_goal(&key);
    let d = d?;
    cx.memo_put(key, &d);
    Ok(d)
}

fn prove_ty_eq_inner(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    a: &TyExpr,
    b: &TyExpr,
) -> Result<Derivation, ConvError> {
    let _g = cx.guard()?;
    if a == b {
        return Ok(d_refl(chk_ty(cx, ambient, a)?));
    }
    let (na, ta) = cx.normalize(sig_on, &Expr::Ty(a.clone()))?;
    let (nb, tb) = cx.normalize(sig_on, &Expr::Ty(b.clone()))?;
    let (Expr::Ty(na), Expr::Ty(nb)) = (&na, &nb) else {
        unreachable!()
    };
    let da = align_ty_eq_ctx(cx, sig_on, replay_eq(cx, sig_on, &ta)?, ambient)?;
    let db = align_ty_eq_ctx(cx, sig_on, replay_eq(cx, sig_on, &tb)?, ambient)?;
    if na == nb {
        return Ok(d_trans(da, d_sym(db)));
    }
    let dm = ty_mid(cx, sig_on, ambient, na, nb)?;
    Ok(d_trans(d_trans(da, dm), d_sym(db)))
}

/// Equality of two distinct normal types, by congruence or identity
/// collapse.
fn ty_mid(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    na: &TyExpr,
    nb: &TyExpr,
) -> Result<Derivation, ConvError> {
    match (na, nb) {
        (TyExpr::Subst(a0, s), TyExpr::Subst(b0, t)) => {
            let tgt = rb(readback::sub_tgt(cx.sig, s))?;
            let d_ty = prove_ty_eq(cx, sig_on, &tgt, a0, b0)?;
            let d_sub = prove_sub_eq(cx, sig_on, ambient, &tgt, s, t)?;
            Ok(Derivation::node(
                Rule::CongTySubst,
                vec![d_ty, d_sub],
                Judgment::TyEq(ambient.clone(), na.clone(), nb.clone()),
            ))
        }
        (TyExpr::Subst(..), _) => {
            let d = ty_id_collapse(cx, sig_on, ambient, na, nb)?;
            Ok(d)
        }
        (_, TyExpr::Subst(..)) => {
            let d = ty_id_collapse(cx, sig_on, ambient, nb, na)?;
            Ok(d_sym(d))
        }
        _ => Err(ConvError::NormalFormsDiffer {
            left_nf: Expr::Ty(na.clone()),
            right_nf: Expr::Ty(nb.clone()),
        }),
    }
}

/// `A[γ] = B` via `γ = id`. Only sound when γ's source and target agree up
/// to conversion; the recursive sub-equality establishes exactly that.
fn ty_id_collapse(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    sub_side: &TyExpr,
    other: &TyExpr,
) -> Result<Derivation, ConvError> {
    let TyExpr::Subst(a0, s) = sub_side else {
        unreachable!()
    };
    let tgt = rb(readback::sub_tgt(cx.sig, s))?;
    let d_s_id = prove_sub_eq(cx, sig_on, ambient, &tgt, s, &id(tgt.clone()))?;
    let d_a0 = chk_ty(cx, &tgt, a0)?;
    // A[γ] = A[id] = A = B, all restated at the ambient context.
    let c1 = Derivation::node(
        Rule::CongTySubst,
        vec![d_refl(d_a0.clone()), d_s_id],
        Judgment::TyEq(
            ambient.clone(),
            sub_side.clone(),
            ty_subst((**a0).clone(), id(tgt.clone())),
        ),
    );
    let c2 = Derivation::node(
        Rule::Law(ConvLaw::TySubId),
        vec![d_a0],
        Judgment::TyEq(
            tgt.clone(),
            ty_subst((**a0).clone(), id(tgt.clone())),
            (**a0).clone(),
        ),
    );
    let c2 = align_ty_eq_ctx(cx, sig_on, c2, ambient)?;
    let c3 = prove_ty_eq(cx, sig_on, ambient, a0, other)?;
    Ok(d_trans(d_trans(c1, c2), c3))
}

fn prove_sub_eq(
    cx: &Cx,
    sig_on: bool,
    amb_src: &CtxExpr,
    amb_tgt: &CtxExpr,
    a: &SubExpr,
    b: &SubExpr,
) -> Result<Derivation, ConvError> {
    let key = MemoKey::ConvSub(
        sig_on,
        amb_src.clone(),
        amb_tgt.clone(),
        a.clone(),
        b.clone(),
    );
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    // Decide cheaply first; only then build the proof.
    q_conv_sub(cx, sig_on, a, b)?;
    cx.enter_goal(&key)?;
    let d = prove_sub_eq_inner(cx, sig_on, amb_src, amb_tgt, a, b);
    cx.leave_goal(&key);
    let d = d?;
    cx.memo_put(key, &d);
    Ok(d)
}

fn prove_sub_eq_inner(
    cx: &Cx,
    sig_on: bool,
    amb_src: &CtxExpr,
    amb_tgt: &CtxExpr,
    a: &SubExpr,
    b: &SubExpr,
) -> Result<Derivation, ConvError> {
    let _g = cx.guard()?;
    if a == b {
        let d = derive_sub(cx, amb_src, amb_tgt, a)?;
        return Ok(d_refl(d));
    }
    let (na, ta) = cx.normalize(sig_on, &Expr::Sub(a.clone()))?;
    let (nb, tb) = cx.normalize(sig_on, &Expr::Sub(b.clone()))?;
    let (Expr::Sub(na), Expr::Sub(nb)) = (&na, &nb) else {
        unreachable!()
    };
    let da = replay_eq(cx, sig_on, &ta)?;
    let da = align_sub_eq_src(cx, sig_on, da, amb_src)?;
    let da = align_sub_eq_tgt(cx, sig_on, da, amb_tgt)?;
    let db = replay_eq(cx, sig_on, &tb)?;
    let db = align_sub_eq_src(cx, sig_on, db, amb_src)?;
    let db = align_sub_eq_tgt(cx, sig_on, db, amb_tgt)?;
    if na == nb {
        return Ok(d_trans(da, d_sym(db)));
    }
    let dm = sub_mid(cx, sig_on, amb_src, amb_tgt, na, nb)?;
    Ok(d_trans(d_trans(da, dm), d_sym(db)))
}

/// Equality of distinct normal substitutions: uniqueness into the terminal
/// context, congruence when the head constructors agree, and otherwise eta
/// comparison into `Γ.A`.
fn sub_mid(
    cx: &Cx,
    sig_on: bool,
    amb_src: &CtxExpr,
    amb_tgt: &CtxExpr,
    na: &SubExpr,
    nb: &SubExpr,
) -> Result<Derivation, ConvError> {
    // Matching stuck heads decompose; eta on them would only re-ask the
    // same goal through their q-components.
    match (na, nb) {
        (SubExpr::P(ta), SubExpr::P(tb)) => {
            let g0 = rb(readback::ctx_of_ty(cx.sig, ta))?;
            let d_ty = prove_ty_eq(cx, sig_on, &g0, ta, tb)?;
            let d = Derivation::node(
                Rule::CongP,
                vec![d_ty],
                Judgment::SubEq(
                    ext(g0.clone(), (**ta).clone()),
                    na.clone(),
                    nb.clone(),
                    g0,
                ),
            );
            let d = align_sub_eq_src(cx, sig_on, d, amb_src)?;
            return align_sub_eq_tgt(cx, sig_on, d, amb_tgt);
        }
        (SubExpr::Id(ca), SubExpr::Id(cb)) => {
            let d_ctx = prove_ctx_eq(cx, sig_on, ca, cb)?;
            let d = Derivation::node(
                Rule::CongId,
                vec![d_ctx],
                Judgment::SubEq((**ca).clone(), na.clone(), nb.clone(), (**ca).clone()),
            );
            let d = align_sub_eq_src(cx, sig_on, d, amb_src)?;
            return align_sub_eq_tgt(cx, sig_on, d, amb_tgt);
        }
        (SubExpr::Comp(fa, ga), SubExpr::Comp(fb, gb)) => {
            let attempt = (|| -> Result<Derivation, ConvError> {
                let f_src = rb(readback::sub_src(cx.sig, fa))?;
                let f_tgt = rb(readback::sub_tgt(cx.sig, fa))?;
                let d_f = prove_sub_eq(cx, sig_on, &f_src, &f_tgt, fa, fb)?;
                let g_src = rb(readback::sub_src(cx.sig, ga))?;
                let d_g = prove_sub_eq(cx, sig_on, &g_src, &f_src, ga, gb)?;
                let d = Derivation::node(
                    Rule::CongComp,
                    vec![d_f, d_g],
                    Judgment::SubEq(g_src, na.clone(), nb.clone(), f_tgt),
                );
                let d = align_sub_eq_src(cx, sig_on, d, amb_src)?;
                align_sub_eq_tgt(cx, sig_on, d, amb_tgt)
            })();
            if let Ok(d) = attempt {
                return Ok(d);
            }
            // Fall through: componentwise comparison can fail where the
            // composites still agree extensionally.
        }
        _ => {}
    }
    match amb_tgt {
        CtxExpr::Empty => {
            // Uniqueness into the terminal context: route both sides
            // through their empty substitutions.
            let da = terminal_chain(cx, na)?;
            let db = terminal_chain(cx, nb)?;
            let (Judgment::SubEq(src_a, ..), Judgment::SubEq(src_b, ..)) =
                (&da.conclusion, &db.conclusion)
            else {
                unreachable!()
            };
            let (src_a, src_b) = (src_a.clone(), src_b.clone());
            let bridge = Derivation::node(
                Rule::CongBang,
                vec![prove_ctx_eq(cx, sig_on, &src_a, &src_b)?],
                Judgment::SubEq(
                    src_a.clone(),
                    bang(src_a.clone()),
                    bang(src_b),
                    CtxExpr::Empty,
                ),
            );
            let da = align_sub_eq_src(cx, sig_on, da, amb_src)?;
            let bridge = align_sub_eq_src(cx, sig_on, bridge, amb_src)?;
            let db = align_sub_eq_src(cx, sig_on, db, amb_src)?;
            Ok(d_trans(d_trans(da, bridge), d_sym(db)))
        }
        CtxExpr::Ext(g0, a) => {
            let g0 = (**g0).clone();
            let a = (**a).clone();
            let d_p = prove_sub_eq(
                cx,
                sig_on,
                amb_src,
                &g0,
                &comp(proj(a.clone()), na.clone()),
                &comp(proj(a.clone()), nb.clone()),
            )?;
            let q_ty = ty_subst(a.clone(), comp(proj(a.clone()), na.clone()));
            let d_q = prove_tm_eq(
                cx,
                sig_on,
                amb_src,
                &q_ty,
                &tm_subst(q(a.clone()), na.clone()),
                &tm_subst(q(a.clone()), nb.clone()),
            )?;
            eta_chain(cx, sig_on, amb_src, amb_tgt, &g0, &a, na, nb, d_p, d_q)
        }
    }
}

/// `γ = id∘γ = ⟨p,q⟩∘γ = ⟨p∘γ, q[γ]⟩ = ⟨p∘γ', q[γ']⟩ = … = γ'`.
#[allow(clippy::too_many_arguments)]
fn eta_chain(
    cx: &Cx,
    sig_on: bool,
    amb_src: &CtxExpr,
    amb_tgt: &CtxExpr,
    g0: &CtxExpr,
    a: &TyExpr,
    na: &SubExpr,
    nb: &SubExpr,
    d_p: Derivation,
    d_q: Derivation,
) -> Result<Derivation, ConvError> {
    let d_a = chk_ty(cx, g0, a)?;
    let surj = Derivation::node(
        Rule::Law(ConvLaw::SurjPair),
        vec![d_a.clone()],
        Judgment::SubEq(
            amb_tgt.clone(),
            id(amb_tgt.clone()),
            pair(proj(a.clone()), q(a.clone()), a.clone()),
            amb_tgt.clone(),
        ),
    );
    let half = |n: &SubExpr, d_comp: Derivation| -> Result<Derivation, ConvError> {
        // n = id∘n = ⟨p,q⟩∘n = ⟨p∘n, q[n]⟩
        let d_n = derive_sub(cx, amb_src, amb_tgt, n)?;
        let e1 = d_sym(Derivation::node(
            Rule::Law(ConvLaw::IdL),
            vec![d_n.clone()],
            Judgment::SubEq(
                amb_src.clone(),
                comp(id(amb_tgt.clone()), n.clone()),
                n.clone(),
                amb_tgt.clone(),
            ),
        ));
        let e2 = Derivation::node(
            Rule::CongComp,
            vec![surj.clone(), d_refl(d_n.clone())],
            Judgment::SubEq(
                amb_src.clone(),
                comp(id(amb_tgt.clone()), n.clone()),
                comp(pair(proj(a.clone()), q(a.clone()), a.clone()), n.clone()),
                amb_tgt.clone(),
            ),
        );
        let d_pa = Derivation::node(
            Rule::FormP,
            vec![d_a.clone()],
            Judgment::Sub(amb_tgt.clone(), proj(a.clone()), g0.clone()),
        );
        let d_qa = Derivation::node(
            Rule::FormQ,
            vec![d_a.clone()],
            Judgment::Tm(
                amb_tgt.clone(),
                q(a.clone()),
                ty_subst(a.clone(), proj(a.clone())),
            ),
        );
        let e3 = Derivation::node(
            Rule::Law(ConvLaw::PairComp),
            vec![d_pa, d_a.clone(), d_qa, d_n],
            Judgment::SubEq(
                amb_src.clone(),
                comp(pair(proj(a.clone()), q(a.clone()), a.clone()), n.clone()),
                pair(
                    comp(proj(a.clone()), n.clone()),
                    tm_subst(q(a.clone()), n.clone()),
                    a.clone(),
                ),
                amb_tgt.clone(),
            ),
        );
        let _ = d_comp;
        Ok(d_trans(d_trans(e1, e2), e3))
    };
    let left = half(na, d_p.clone())?;
    let right = half(nb, d_p.clone())?;
    // Middle: congruence of the pair on the compared projections.
    let d_q = align_tm_eq_ty(
        cx,
        sig_on,
        d_q,
        &ty_subst(a.clone(), comp(proj(a.clone()), na.clone())),
    )?;
    let mid = Derivation::node(
        Rule::CongPair,
        vec![d_p, d_refl(d_a), d_q],
        Judgment::SubEq(
            amb_src.clone(),
            pair(
                comp(proj(a.clone()), na.clone()),
                tm_subst(q(a.clone()), na.clone()),
                a.clone(),
            ),
            pair(
                comp(proj(a.clone()), nb.clone()),
                tm_subst(q(a.clone()), nb.clone()),
                a.clone(),
            ),
            ext(g0.clone(), a.clone()),
        ),
    );
    let mid = align_sub_eq_tgt(cx, sig_on, mid, amb_tgt)?;
    Ok(d_trans(d_trans(left, mid), d_sym(right)))
}

fn prove_tm_eq(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    amb_ty: &TyExpr,
    a: &TmExpr,
    b: &TmExpr,
) -> Result<Derivation, ConvError> {
    let key = MemoKey::ConvTm(
        sig_on,
        ambient.clone(),
        amb_ty.clone(),
        a.clone(),
        b.clone(),
    );
    if let Some(d) = cx.memo_get(&key) {
        return Ok(d);
    }
    // Decide cheaply first; only then build the proof.
    q_conv_tm(cx, sig_on, a, b)?;
    cx.enter_goal(&key)?;
    let d = prove_tm_eq_inner(cx, sig_on, ambient, amb_ty, a, b);
    cx.leave_goal(&key);
    let d = d?;
    cx.memo_put(key, &d);
    Ok(d)
}

fn prove_tm_eq_inner(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    amb_ty: &TyExpr,
    a: &TmExpr,
    b: &TmExpr,
) -> Result<Derivation, ConvError> {
    let _g = cx.guard()?;
    if a == b {
        return Ok(d_refl(chk_tm(cx, ambient, a, amb_ty)?));
    }
    let (na, ta) = cx.normalize(sig_on, &Expr::Tm(a.clone()))?;
    let (nb, tb) = cx.normalize(sig_on, &Expr::Tm(b.clone()))?;
    let (Expr::Tm(na), Expr::Tm(nb)) = (&na, &nb) else {
        unreachable!()
    };
    let da = replay_eq(cx, sig_on, &ta)?;
    let da = align_tm_eq_ctx(cx, sig_on, da, ambient)?;
    let da = align_tm_eq_ty(cx, sig_on, da, amb_ty)?;
    let db = replay_eq(cx, sig_on, &tb)?;
    let db = align_tm_eq_ctx(cx, sig_on, db, ambient)?;
    let db = align_tm_eq_ty(cx, sig_on, db, amb_ty)?;
    if na == nb {
        return Ok(d_trans(da, d_sym(db)));
    }
    let dm = tm_mid(cx, sig_on, ambient, amb_ty, na, nb)?;
    Ok(d_trans(d_trans(da, dm), d_sym(db)))
}

fn tm_mid(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    amb_ty: &TyExpr,
    na: &TmExpr,
    nb: &TmExpr,
) -> Result<Derivation, ConvError> {
    match (na, nb) {
        (TmExpr::Subst(a0, s), TmExpr::Subst(b0, t)) => {
            let tgt = rb(readback::sub_tgt(cx.sig, s))?;
            let (ty0, _) = inf_tm(cx, &tgt, a0)?;
            let d_tm = prove_tm_eq(cx, sig_on, &tgt, &ty0, a0, b0)?;
            let d_sub = prove_sub_eq(cx, sig_on, ambient, &tgt, s, t)?;
            let d = Derivation::node(
                Rule::CongTmSubst,
                vec![d_tm, d_sub],
                Judgment::TmEq(
                    ambient.clone(),
                    na.clone(),
                    nb.clone(),
                    ty_subst(ty0, (**s).clone()),
                ),
            );
            align_tm_eq_ty(cx, sig_on, d, amb_ty)
        }
        (TmExpr::Q(ta0), TmExpr::Q(tb0)) => {
            let g0 = rb(readback::ctx_of_ty(cx.sig, ta0))?;
            let d_ty = prove_ty_eq(cx, sig_on, &g0, ta0, tb0)?;
            let d = Derivation::node(
                Rule::CongQ,
                vec![d_ty],
                Judgment::TmEq(
                    ext(g0, (**ta0).clone()),
                    na.clone(),
                    nb.clone(),
                    ty_subst((**ta0).clone(), proj((**ta0).clone())),
                ),
            );
            let d = align_tm_eq_ctx(cx, sig_on, d, ambient)?;
            align_tm_eq_ty(cx, sig_on, d, amb_ty)
        }
        (TmExpr::Subst(..), _) => tm_id_collapse(cx, sig_on, ambient, amb_ty, na, nb),
        (_, TmExpr::Subst(..)) => {
            let d = tm_id_collapse(cx, sig_on, ambient, amb_ty, nb, na)?;
            Ok(d_sym(d))
        }
        _ => Err(ConvError::NormalFormsDiffer {
            left_nf: Expr::Tm(na.clone()),
            right_nf: Expr::Tm(nb.clone()),
        }),
    }
}

/// `a[γ] = b` via `γ = id`.
fn tm_id_collapse(
    cx: &Cx,
    sig_on: bool,
    ambient: &CtxExpr,
    amb_ty: &TyExpr,
    sub_side: &TmExpr,
    other: &TmExpr,
) -> Result<Derivation, ConvError> {
    let TmExpr::Subst(a0, s) = sub_side else {
        unreachable!()
    };
    let tgt = rb(readback::sub_tgt(cx.sig, s))?;
    let d_s_id = prove_sub_eq(cx, sig_on, ambient, &tgt, s, &id(tgt.clone()))?;
    let (ty0, d_a0) = inf_tm(cx, &tgt, a0)?;
    let c1 = Derivation::node(
        Rule::CongTmSubst,
        vec![d_refl(d_a0.clone()), d_s_id],
        Judgment::TmEq(
            ambient.clone(),
            sub_side.clone(),
            tm_subst((**a0).clone(), id(tgt.clone())),
            ty_subst(ty0.clone(), (**s).clone()),
        ),
    );
    let c1 = align_tm_eq_ty(cx, sig_on, c1, amb_ty)?;
    let c2 = Derivation::node(
        Rule::Law(ConvLaw::TmSubId),
        vec![d_a0],
        Judgment::TmEq(
            tgt.clone(),
            tm_subst((**a0).clone(), id(tgt.clone())),
            (**a0).clone(),
            ty0,
        ),
    );
    let c2 = align_tm_eq_ctx(cx, sig_on, c2, ambient)?;
    let c2 = align_tm_eq_ty(cx, sig_on, c2, amb_ty)?;
    let c3 = prove_tm_eq(cx, sig_on, ambient, amb_ty, a0, other)?;
    Ok(d_trans(d_trans(c1, c2), c3))
}

// ---------------------------------------------------------------------------
// Trace replay: every rewrite step becomes a derivation
// ---------------------------------------------------------------------------

/// Derivation for one whole-expression rewrite step, stated at the frame of
/// the expression before the step.
fn step_eq(
    cx: &Cx,
    sig_on: bool,
    node: &Expr,
    path: &[usize],
    origin: &RuleOrigin,
    new_redex: &Expr,
) -> Result<Derivation, ConvError> {
    if path.is_empty() {
        return redex_eq(cx, sig_on, node, origin, new_redex);
    }
    let i = path[0];
    let rest = &path[1..];
    let rec = |cx: &Cx, child: &Expr| step_eq(cx, sig_on, child, rest, origin, new_redex);
    match (node, i) {
        (Expr::Ctx(CtxExpr::Ext(base, ty)), 0) => {
            let d = rec(cx, &Expr::Ctx((**base).clone()))?;
            let d_ty = d_refl(chk_ty(cx, base, ty)?);
            let Judgment::CtxEq(b_old, b_new) = d.conclusion.clone() else {
                unreachable!()
            };
            Ok(Derivation::node(
                Rule::CongExt,
                vec![d, d_ty],
                Judgment::CtxEq(
                    ext(b_old, (**ty).clone()),
                    ext(b_new, (**ty).clone()),
                ),
            ))
        }
        (Expr::Ctx(CtxExpr::Ext(base, ty)), 1) => {
            let d = rec(cx, &Expr::Ty((**ty).clone()))?;
            let d = align_ty_eq_ctx(cx, sig_on, d, base)?;
            let d_base = d_refl(chk_ctx(cx, base)?);
            let Judgment::TyEq(_, t_old, t_new) = d.conclusion.clone() else {
                unreachable!()
            };
            Ok(Derivation::node(
                Rule::CongExt,
                vec![d_base, d],
                Judgment::CtxEq(
                    ext((**base).clone(), t_old),
                    ext((**base).clone(), t_new),
                ),
            ))
        }
        (Expr::Sub(SubExpr::Comp(f, g)), 0) => {
            let d = rec(cx, &Expr::Sub((**f).clone()))?;
            let Judgment::SubEq(f_src, f_old, f_new, f_tgt) = d.conclusion.clone() else {
                unreachable!()
            };
            let d_g = derive_sub(cx, &rb(readback::sub_src(cx.sig, g))?, &f_src, g)?;
            let g_src = match &d_g.conclusion {
                Judgment::Sub(s, ..) => s.clone(),
                _ => unreachable!(),
            };
            Ok(Derivation::node(
                Rule::CongComp,
                vec![d, d_refl(d_g)],
                Judgment::SubEq(
                    g_src,
                    comp(f_old, (**g).clone()),
                    comp(f_new, (**g).clone()),
                    f_tgt,
                ),
            ))
        }
        (Expr::Sub(SubExpr::Comp(f, g)), 1) => {
            let d = rec(cx, &Expr::Sub((**g).clone()))?;
            let Judgment::SubEq(g_src, g_old, g_new, g_tgt) = d.conclusion.clone() else {
                unreachable!()
            };
            let (f_tgt, d_f) = infer_sub_in(cx, &g_tgt, f).map_err(cerr)?;
            Ok(Derivation::node(
                Rule::CongComp,
                vec![d_refl(d_f), d],
                Judgment::SubEq(
                    g_src,
                    comp((**f).clone(), g_old),
                    comp((**f).clone(), g_new),
                    f_tgt,
                ),
            ))
        }
        (Expr::Sub(SubExpr::Id(c)), 0) => {
            let d = rec(cx, &Expr::Ctx((**c).clone()))?;
            let Judgment::CtxEq(c_old, c_new) = d.conclusion.clone() else {
                unreachable!()
            };
            Ok(Derivation::node(
                Rule::CongId,
                vec![d],
                Judgment::SubEq(c_old.clone(), id(c_old.clone()), id(c_new), c_old),
            ))
        }
        (Expr::Sub(SubExpr::Bang(c)), 0) => {
            let d = rec(cx, &Expr::Ctx((**c).clone()))?;
            let Judgment::CtxEq(c_old, c_new) = d.conclusion.clone() else {
                unreachable!()
            };
            Ok(Derivation::node(
                Rule::CongBang,
                vec![d],
                Judgment::SubEq(c_old.clone(), bang(c_old), bang(c_new), CtxExpr::Empty),
            ))
        }
        (Expr::Sub(SubExpr::P(t)), 0) => {
            let d = rec(cx, &Expr::Ty((**t).clone()))?;
            let g0 = rb(readback::ctx_of_ty(cx.sig, t))?;
            let d = align_ty_eq_ctx(cx, sig_on, d, &g0)?;
            let Judgment::TyEq(_, t_old, t_new) = d.conclusion.clone() else {
                unreachable!()
            };
            Ok(Derivation::node(
                Rule::CongP,
                vec![d],
                Judgment::SubEq(ext(g0.clone(), t_old.clone()), proj(t_old), proj(t_new), g0),
            ))
        }
        (Expr::Sub(SubExpr::Pair(g0, a, at)), idx @ (0 | 1 | 2)) => {
            let src = rb(readback::sub_src(cx.sig, g0))?;
            let tgt = rb(readback::sub_tgt(cx.sig, g0))?;
            match idx {
                0 => {
                    let d = rec(cx, &Expr::Sub((**g0).clone()))?;
                    let d = align_sub_eq_src(cx, sig_on, d, &src)?;
                    let d = align_sub_eq_tgt(cx, sig_on, d, &tgt)?;
                    let Judgment::SubEq(_, s_old, s_new, _) = d.conclusion.clone() else {
                        unreachable!()
                    };
                    let d_at = d_refl(chk_ty(cx, &tgt, at)?);
                    let d_a = d_refl(chk_tm(
                        cx,
                        &src,
                        a,
                        &ty_subst((**at).clone(), s_old.clone()),
                    )?);
                    Ok(Derivation::node(
                        Rule::CongPair,
                        vec![d, d_at, d_a],
                        Judgment::SubEq(
                            src,
                            pair(s_old, (**a).clone(), (**at).clone()),
                            pair(s_new, (**a).clone(), (**at).clone()),
                            ext(tgt, (**at).clone()),
                        ),
                    ))
                }
                1 => {
                    let d = rec(cx, &Expr::Tm((**a).clone()))?;
                    let d = align_tm_eq_ctx(cx, sig_on, d, &src)?;
                    let d = align_tm_eq_ty(
                        cx,
                        sig_on,
                        d,
                        &ty_subst((**at).clone(), (**g0).clone()),
                    )?;
                    let Judgment::TmEq(_, a_old, a_new, _) = d.conclusion.clone() else {
                        unreachable!()
                    };
                    let d_g = d_refl(derive_sub(cx, &src, &tgt, g0)?);
                    let d_at = d_refl(chk_ty(cx, &tgt, at)?);
                    Ok(Derivation::node(
                        Rule::CongPair,
                        vec![d_g, d_at, d],
                        Judgment::SubEq(
                            src,
                            pair((**g0).clone(), a_old, (**at).clone()),
                            pair((**g0).clone(), a_new, (**at).clone()),
                            ext(tgt, (**at).clone()),
                        ),
                    ))
                }
                _ => {
                    let d = rec(cx, &Expr::Ty((**at).clone()))?;
                    let d = align_ty_eq_ctx(cx, sig_on, d, &tgt)?;
                    let Judgment::TyEq(_, at_old, at_new) = d.conclusion.clone() else {
                        unreachable!()
                    };
                    let d_g = d_refl(derive_sub(cx, &src, &tgt, g0)?);
                    let d_a = d_refl(chk_tm(
                        cx,
                        &src,
                        a,
                        &ty_subst(at_old.clone(), (**g0).clone()),
                    )?);
                    Ok(Derivation::node(
                        Rule::CongPair,
                        vec![d_g, d, d_a],
                        Judgment::SubEq(
                            src,
                            pair((**g0).clone(), (**a).clone(), at_old.clone()),
                            pair((**g0).clone(), (**a).clone(), at_new),
                            ext(tgt, at_old),
                        ),
                    ))
                }
            }
        }
        (Expr::Ty(TyExpr::Subst(t, s)), 0) => {
            let tgt = rb(readback::sub_tgt(cx.sig, s))?;
            let src = rb(readback::sub_src(cx.sig, s))?;
            let d = rec(cx, &Expr::Ty((**t).clone()))?;
            let d = align_ty_eq_ctx(cx, sig_on, d, &tgt)?;
            let Judgment::TyEq(_, t_old, t_new) = d.conclusion.clone() else {
                unreachable!()
            };
            let d_s = d_refl(derive_sub(cx, &src, &tgt, s)?);
            Ok(Derivation::node(
                Rule::CongTySubst,
                vec![d, d_s],
                Judgment::TyEq(
                    src,
                    ty_subst(t_old, (**s).clone()),
                    ty_subst(t_new, (**s).clone()),
                ),
            ))
        }
        (Expr::Ty(TyExpr::Subst(t, s)), 1) => {
            let tgt = rb(readback::sub_tgt(cx.sig, s))?;
            let src = rb(readback::sub_src(cx.sig, s))?;
            let d = rec(cx, &Expr::Sub((**s).clone()))?;
            let d = align_sub_eq_src(cx, sig_on, d, &src)?;
            let d = align_sub_eq_tgt(cx, sig_on, d, &tgt)?;
            let Judgment::SubEq(_, s_old, s_new, _) = d.conclusion.clone() else {
                unreachable!()
            };
            let d_t = d_refl(chk_ty(cx, &tgt, t)?);
            Ok(Derivation::node(
                Rule::CongTySubst,
                vec![d_t, d],
                Judgment::TyEq(
                    src,
                    ty_subst((**t).clone(), s_old),
                    ty_subst((**t).clone(), s_new),
                ),
            ))
        }
        (Expr::Tm(TmExpr::Subst(t, s)), 0) => {
            let tgt = rb(readback::sub_tgt(cx.sig, s))?;
            let src = rb(readback::sub_src(cx.sig, s))?;
            let d = rec(cx, &Expr::Tm((**t).clone()))?;
            let d = align_tm_eq_ctx(cx, sig_on, d, &tgt)?;
            let Judgment::TmEq(_, t_old, t_new, t_ty) = d.conclusion.clone() else {
                unreachable!()
            };
            let d_s = d_refl(derive_sub(cx, &src, &tgt, s)?);
            Ok(Derivation::node(
                Rule::CongTmSubst,
                vec![d, d_s],
                Judgment::TmEq(
                    src,
                    tm_subst(t_old, (**s).clone()),
                    tm_subst(t_new, (**s).clone()),
                    ty_subst(t_ty, (**s).clone()),
                ),
            ))
        }
        (Expr::Tm(TmExpr::Subst(t, s)), 1) => {
            let tgt = rb(readback::sub_tgt(cx.sig, s))?;
            let src = rb(readback::sub_src(cx.sig, s))?;
            let d = rec(cx, &Expr::Sub((**s).clone()))?;
            let d = align_sub_eq_src(cx, sig_on, d, &src)?;
            let d = align_sub_eq_tgt(cx, sig_on, d, &tgt)?;
            let Judgment::SubEq(_, s_old, s_new, _) = d.conclusion.clone() else {
                unreachable!()
            };
            let (t_ty, d_t) = inf_tm(cx, &tgt, t)?;
            Ok(Derivation::node(
                Rule::CongTmSubst,
                vec![d_refl(d_t), d],
                Judgment::TmEq(
                    src,
                    tm_subst((**t).clone(), s_old.clone()),
                    tm_subst((**t).clone(), s_new),
                    ty_subst(t_ty, s_old),
                ),
            ))
        }
        (Expr::Tm(TmExpr::Q(t)), 0) => {
            let d = rec(cx, &Expr::Ty((**t).clone()))?;
            let g0 = rb(readback::ctx_of_ty(cx.sig, t))?;
            let d = align_ty_eq_ctx(cx, sig_on, d, &g0)?;
            let Judgment::TyEq(_, t_old, t_new) = d.conclusion.clone() else {
                unreachable!()
            };
            Ok(Derivation::node(
                Rule::CongQ,
                vec![d],
                Judgment::TmEq(
                    ext(g0, t_old.clone()),
                    q(t_old.clone()),
                    q(t_new),
                    ty_subst(t_old.clone(), proj(t_old)),
                ),
            ))
        }
        _ => Err(ConvError::IllFormedInput {
            detail: format!("invalid rewrite path into `{node}`"),
        }),
    }
}


fn id_bang_one() -> Derivation {
    Derivation::node(
        Rule::Law(ConvLaw::IdBangOne),
        vec![],
        Judgment::SubEq(
            CtxExpr::Empty,
            id(CtxExpr::Empty),
            bang(CtxExpr::Empty),
            CtxExpr::Empty,
        ),
    )
}

/// `s = ⟨⟩_Δ : 1` for any substitution with readback target `1`, through
/// `s = id_1∘s = ⟨⟩_1∘s = ⟨⟩_Δ`.
fn terminal_chain(cx: &Cx, s: &SubExpr) -> Result<Derivation, ConvError> {
    let src = rb(readback::sub_src(cx.sig, s))?;
    let d_s = derive_sub(cx, &src, &CtxExpr::Empty, s)?;
    let e1 = d_sym(Derivation::node(
        Rule::Law(ConvLaw::IdL),
        vec![d_s.clone()],
        Judgment::SubEq(
            src.clone(),
            comp(id(CtxExpr::Empty), s.clone()),
            s.clone(),
            CtxExpr::Empty,
        ),
    ));
    let e3 = Derivation::node(
        Rule::CongComp,
        vec![id_bang_one(), d_refl(d_s.clone())],
        Judgment::SubEq(
            src.clone(),
            comp(id(CtxExpr::Empty), s.clone()),
            comp(bang(CtxExpr::Empty), s.clone()),
            CtxExpr::Empty,
        ),
    );
    let e4 = Derivation::node(
        Rule::Law(ConvLaw::BangComp),
        vec![d_s],
        Judgment::SubEq(
            src.clone(),
            comp(bang(CtxExpr::Empty), s.clone()),
            bang(src),
            CtxExpr::Empty,
        ),
    );
    Ok(d_trans(d_trans(e1, e3), e4))
}

/// Law instance for `p∘⟨γ,a⟩ = γ`, `q[⟨γ,a⟩] = a`, or `⟨γ,a⟩∘δ = …`,
/// stated at the readback frame of the pair.
fn pair_law(
    cx: &Cx,
    which: ConvLaw,
    g0: &SubExpr,
    a: &TmExpr,
    ann: &TyExpr,
    extra_dl: Option<&SubExpr>,
) -> Result<Derivation, ConvError> {
    let src = rb(readback::sub_src(cx.sig, g0))?;
    let tgt = rb(readback::sub_tgt(cx.sig, g0))?;
    let d_g = derive_sub(cx, &src, &tgt, g0)?;
    let d_ann = chk_ty(cx, &tgt, ann)?;
    let d_a = chk_tm(cx, &src, a, &ty_subst(ann.clone(), g0.clone()))?;
    let pr = pair(g0.clone(), a.clone(), ann.clone());
    match which {
        ConvLaw::PPair => Ok(Derivation::node(
            Rule::Law(ConvLaw::PPair),
            vec![d_g, d_ann, d_a],
            Judgment::SubEq(src, comp(proj(ann.clone()), pr), g0.clone(), tgt),
        )),
        ConvLaw::QPair => Ok(Derivation::node(
            Rule::Law(ConvLaw::QPair),
            vec![d_g, d_ann, d_a],
            Judgment::TmEq(
                src,
                tm_subst(q(ann.clone()), pr),
                a.clone(),
                ty_subst(ann.clone(), g0.clone()),
            ),
        )),
        ConvLaw::PairComp => {
            let dl = extra_dl.expect("PairComp needs the outer substitution");
            let src_dl = rb(readback::sub_src(cx.sig, dl))?;
            let d_dl = derive_sub(cx, &src_dl, &src, dl)?;
            Ok(Derivation::node(
                Rule::Law(ConvLaw::PairComp),
                vec![d_g, d_ann, d_a, d_dl],
                Judgment::SubEq(
                    src_dl,
                    comp(pr, dl.clone()),
                    pair(
                        comp(g0.clone(), dl.clone()),
                        tm_subst(a.clone(), dl.clone()),
                        ann.clone(),
                    ),
                    ext(tgt, ann.clone()),
                ),
            ))
        }
        _ => unreachable!("pair_law on a non-pair law"),
    }
}

/// Derivation for a root redex contraction, stated at the redex's readback
/// frame.
fn redex_eq(
    cx: &Cx,
    sig_on: bool,
    redex: &Expr,
    origin: &RuleOrigin,
    new_redex: &Expr,
) -> Result<Derivation, ConvError> {
    let bad = || ConvError::IllFormedInput {
        detail: format!("redex `{redex}` does not fit rule {origin}"),
    };
    match origin {
        RuleOrigin::SigEquation(label) => sig_step_eq(cx, redex, label, new_redex),
        RuleOrigin::CwfLaw(tag) => match (tag, redex) {
            (LawTag::TySubId, Expr::Ty(TyExpr::Subst(a, s))) => {
                let SubExpr::Id(g) = s.as_ref() else {
                    return Err(bad());
                };
                let d_a = chk_ty(cx, g, a)?;
                Ok(Derivation::node(
                    Rule::Law(ConvLaw::TySubId),
                    vec![d_a],
                    Judgment::TyEq(
                        (**g).clone(),
                        ty_subst((**a).clone(), id((**g).clone())),
                        (**a).clone(),
                    ),
                ))
            }
            (LawTag::TmSubId, Expr::Tm(TmExpr::Subst(a, s))) => {
                let SubExpr::Id(g) = s.as_ref() else {
                    return Err(bad());
                };
                let (ty, d_a) = inf_tm(cx, g, a)?;
                Ok(Derivation::node(
                    Rule::Law(ConvLaw::TmSubId),
                    vec![d_a],
                    Judgment::TmEq(
                        (**g).clone(),
                        tm_subst((**a).clone(), id((**g).clone())),
                        (**a).clone(),
                        ty,
                    ),
                ))
            }
            (LawTag::TySubFuse, Expr::Ty(TyExpr::Subst(inner, dl))) => {
                let TyExpr::Subst(a, g) = inner.as_ref() else {
                    return Err(bad());
                };
                let tgt_g = rb(readback::sub_tgt(cx.sig, g))?;
                let src_g = rb(readback::sub_src(cx.sig, g))?;
                let src_d = rb(readback::sub_src(cx.sig, dl))?;
                let d_a = chk_ty(cx, &tgt_g, a)?;
                let d_g = derive_sub(cx, &src_g, &tgt_g, g)?;
                let d_d = derive_sub(cx, &src_d, &src_g, dl)?;
                let law = Derivation::node(
                    Rule::Law(ConvLaw::TySubComp),
                    vec![d_a, d_g, d_d],
                    Judgment::TyEq(
                        src_d,
                        ty_subst((**a).clone(), comp((**g).clone(), (**dl).clone())),
                        ty_subst(ty_subst((**a).clone(), (**g).clone()), (**dl).clone()),
                    ),
                );
                Ok(d_sym(law))
            }
            (LawTag::TmSubFuse, Expr::Tm(TmExpr::Subst(inner, dl))) => {
                let TmExpr::Subst(a, g) = inner.as_ref() else {
                    return Err(bad());
                };
                let tgt_g = rb(readback::sub_tgt(cx.sig, g))?;
                let src_g = rb(readback::sub_src(cx.sig, g))?;
                let src_d = rb(readback::sub_src(cx.sig, dl))?;
                let (ty, d_a) = inf_tm(cx, &tgt_g, a)?;
                let d_g = derive_sub(cx, &src_g, &tgt_g, g)?;
                let d_d = derive_sub(cx, &src_d, &src_g, dl)?;
                let law = Derivation::node(
                    Rule::Law(ConvLaw::TmSubComp),
                    vec![d_a, d_g, d_d],
                    Judgment::TmEq(
                        src_d,
                        tm_subst((**a).clone(), comp((**g).clone(), (**dl).clone())),
                        tm_subst(tm_subst((**a).clone(), (**g).clone()), (**dl).clone()),
                        ty_subst(ty, comp((**g).clone(), (**dl).clone())),
                    ),
                );
                Ok(d_sym(law))
            }
            (LawTag::IdL, Expr::Sub(SubExpr::Comp(f, g))) => {
                let SubExpr::Id(at) = f.as_ref() else {
                    return Err(bad());
                };
                let src = rb(readback::sub_src(cx.sig, g))?;
                let d_g = derive_sub(cx, &src, at, g)?;
                Ok(Derivation::node(
                    Rule::Law(ConvLaw::IdL),
                    vec![d_g],
                    Judgment::SubEq(
                        src,
                        comp(id((**at).clone()), (**g).clone()),
                        (**g).clone(),
                        (**at).clone(),
                    ),
                ))
            }
            (LawTag::IdR, Expr::Sub(SubExpr::Comp(f, g))) => {
                let SubExpr::Id(at) = g.as_ref() else {
                    return Err(bad());
                };
                let (tgt, d_f) = infer_sub_in(cx, at, f).map_err(cerr)?;
                Ok(Derivation::node(
                    Rule::Law(ConvLaw::IdR),
                    vec![d_f],
                    Judgment::SubEq(
                        (**at).clone(),
                        comp((**f).clone(), id((**at).clone())),
                        (**f).clone(),
                        tgt,
                    ),
                ))
            }
            (LawTag::Assoc, Expr::Sub(SubExpr::Comp(fg, xi))) => {
                let SubExpr::Comp(f, g) = fg.as_ref() else {
                    return Err(bad());
                };
                let src_f = rb(readback::sub_src(cx.sig, f))?;
                let src_g = rb(readback::sub_src(cx.sig, g))?;
                let src_x = rb(readback::sub_src(cx.sig, xi))?;
                let (tgt_f, d_f) = infer_sub_in(cx, &src_f, f).map_err(cerr)?;
                let d_g = derive_sub(cx, &src_g, &src_f, g)?;
                let d_x = derive_sub(cx, &src_x, &src_g, xi)?;
                Ok(Derivation::node(
                    Rule::Law(ConvLaw::Assoc),
                    vec![d_f, d_g, d_x],
                    Judgment::SubEq(
                        src_x,
                        comp(comp((**f).clone(), (**g).clone()), (**xi).clone()),
                        comp((**f).clone(), comp((**g).clone(), (**xi).clone())),
                        tgt_f,
                    ),
                ))
            }
            (LawTag::PPair, Expr::Sub(SubExpr::Comp(p0, prs))) => {
                let SubExpr::P(annp) = p0.as_ref() else {
                    return Err(bad());
                };
                let SubExpr::Pair(g0, a, annb) = prs.as_ref() else {
                    return Err(bad());
                };
                let law = pair_law(cx, ConvLaw::PPair, g0, a, annb, None)?;
                if annp == annb {
                    return Ok(law);
                }
                // p_A∘⟨γ,a⟩_B  =  p_B∘⟨γ,a⟩_B  =  γ     (A and B convertible)
                let g_ann = rb(readback::ctx_of_ty(cx.sig, annp))?;
                let d_ann = prove_ty_eq(cx, sig_on, &g_ann, annp, annb)?;
                let d_congp = Derivation::node(
                    Rule::CongP,
                    vec![d_ann],
                    Judgment::SubEq(
                        ext(g_ann.clone(), (**annp).clone()),
                        proj((**annp).clone()),
                        proj((**annb).clone()),
                        g_ann.clone(),
                    ),
                );
                let src_pr = rb(readback::sub_src(cx.sig, prs))?;
                let d_pr = derive_sub(cx, &src_pr, &ext(g_ann.clone(), (**annp).clone()), prs)?;
                let pre = Derivation::node(
                    Rule::CongComp,
                    vec![d_congp, d_refl(d_pr)],
                    Judgment::SubEq(
                        src_pr,
                        comp(proj((**annp).clone()), (**prs).clone()),
                        comp(proj((**annb).clone()), (**prs).clone()),
                        g_ann,
                    ),
                );
                let tgt_law = match &law.conclusion {
                    Judgment::SubEq(_, _, _, t) => t.clone(),
                    _ => unreachable!(),
                };
                let pre = align_sub_eq_tgt(cx, sig_on, pre, &tgt_law)?;
                Ok(d_trans(pre, law))
            }
            (LawTag::QPair, Expr::Tm(TmExpr::Subst(q0, prs))) => {
                let TmExpr::Q(annq) = q0.as_ref() else {
                    return Err(bad());
                };
                let SubExpr::Pair(g0, a, annb) = prs.as_ref() else {
                    return Err(bad());
                };
                let law = pair_law(cx, ConvLaw::QPair, g0, a, annb, None)?;
                if annq == annb {
                    return Ok(law);
                }
                let g_ann = rb(readback::ctx_of_ty(cx.sig, annq))?;
                let d_ann = prove_ty_eq(cx, sig_on, &g_ann, annq, annb)?;
                let d_congq = Derivation::node(
                    Rule::CongQ,
                    vec![d_ann],
                    Judgment::TmEq(
                        ext(g_ann.clone(), (**annq).clone()),
                        q((**annq).clone()),
                        q((**annb).clone()),
                        ty_subst((**annq).clone(), proj((**annq).clone())),
                    ),
                );
                let src_pr = rb(readback::sub_src(cx.sig, prs))?;
                let d_pr = derive_sub(cx, &src_pr, &ext(g_ann.clone(), (**annq).clone()), prs)?;
                let pre = Derivation::node(
                    Rule::CongTmSubst,
                    vec![d_congq, d_refl(d_pr)],
                    Judgment::TmEq(
                        src_pr.clone(),
                        tm_subst(q((**annq).clone()), (**prs).clone()),
                        tm_subst(q((**annb).clone()), (**prs).clone()),
                        ty_subst(
                            ty_subst((**annq).clone(), proj((**annq).clone())),
                            (**prs).clone(),
                        ),
                    ),
                );
                let ty_law = match &law.conclusion {
                    Judgment::TmEq(_, _, _, t) => t.clone(),
                    _ => unreachable!(),
                };
                let pre = align_tm_eq_ctx(cx, sig_on, pre, &src_pr)?;
                let pre = align_tm_eq_ty(cx, sig_on, pre, &ty_law)?;
                let law = align_tm_eq_ctx(cx, sig_on, law, &src_pr)?;
                Ok(d_trans(pre, law))
            }
            (LawTag::PairComp, Expr::Sub(SubExpr::Comp(prs, dl))) => {
                let SubExpr::Pair(g0, a, ann) = prs.as_ref() else {
                    return Err(bad());
                };
                pair_law(cx, ConvLaw::PairComp, g0, a, ann, Some(dl))
            }
            (LawTag::IdBangOne, Expr::Sub(SubExpr::Id(c))) => {
                if !matches!(**c, CtxExpr::Empty) {
                    return Err(bad());
                }
                Ok(id_bang_one())
            }
            (LawTag::BangComp, Expr::Sub(SubExpr::Comp(f, g))) => {
                let SubExpr::Bang(gamma) = f.as_ref() else {
                    return Err(bad());
                };
                let src = rb(readback::sub_src(cx.sig, g))?;
                let d_g = derive_sub(cx, &src, gamma, g)?;
                Ok(Derivation::node(
                    Rule::Law(ConvLaw::BangComp),
                    vec![d_g],
                    Judgment::SubEq(
                        src.clone(),
                        comp(bang((**gamma).clone()), (**g).clone()),
                        bang(src),
                        CtxExpr::Empty,
                    ),
                ))
            }
            (LawTag::LeftUnitBang, Expr::Sub(SubExpr::Comp(f, g))) => {
                if !matches!(f.as_ref(), SubExpr::Bang(c) if matches!(**c, CtxExpr::Empty)) {
                    return Err(bad());
                }
                let src = rb(readback::sub_src(cx.sig, g))?;
                let d_g = derive_sub(cx, &src, &CtxExpr::Empty, g)?;
                let e1 = Derivation::node(
                    Rule::CongComp,
                    vec![d_sym(id_bang_one()), d_refl(d_g.clone())],
                    Judgment::SubEq(
                        src.clone(),
                        comp(bang(CtxExpr::Empty), (**g).clone()),
                        comp(id(CtxExpr::Empty), (**g).clone()),
                        CtxExpr::Empty,
                    ),
                );
                let e2 = Derivation::node(
                    Rule::Law(ConvLaw::IdL),
                    vec![d_g],
                    Judgment::SubEq(
                        src,
                        comp(id(CtxExpr::Empty), (**g).clone()),
                        (**g).clone(),
                        CtxExpr::Empty,
                    ),
                );
                Ok(d_trans(e1, e2))
            }
            (LawTag::RightUnitBang, Expr::Sub(SubExpr::Comp(f, g))) => {
                if !matches!(g.as_ref(), SubExpr::Bang(c) if matches!(**c, CtxExpr::Empty)) {
                    return Err(bad());
                }
                let (tgt, d_f) = infer_sub_in(cx, &CtxExpr::Empty, f).map_err(cerr)?;
                let e1 = Derivation::node(
                    Rule::CongComp,
                    vec![d_refl(d_f.clone()), d_sym(id_bang_one())],
                    Judgment::SubEq(
                        CtxExpr::Empty,
                        comp((**f).clone(), bang(CtxExpr::Empty)),
                        comp((**f).clone(), id(CtxExpr::Empty)),
                        tgt.clone(),
                    ),
                );
                let e2 = Derivation::node(
                    Rule::Law(ConvLaw::IdR),
                    vec![d_f],
                    Judgment::SubEq(
                        CtxExpr::Empty,
                        comp((**f).clone(), id(CtxExpr::Empty)),
                        (**f).clone(),
                        tgt,
                    ),
                );
                Ok(d_trans(e1, e2))
            }
            (LawTag::UnitElimTy, Expr::Ty(TyExpr::Subst(a, s))) => {
                let d_s_id = prove_sub_eq(
                    cx,
                    sig_on,
                    &CtxExpr::Empty,
                    &CtxExpr::Empty,
                    s,
                    &id(CtxExpr::Empty),
                )?;
                let d_a = chk_ty(cx, &CtxExpr::Empty, a)?;
                let c1 = Derivation::node(
                    Rule::CongTySubst,
                    vec![d_refl(d_a.clone()), d_s_id],
                    Judgment::TyEq(
                        CtxExpr::Empty,
                        ty_subst((**a).clone(), (**s).clone()),
                        ty_subst((**a).clone(), id(CtxExpr::Empty)),
                    ),
                );
                let c2 = Derivation::node(
                    Rule::Law(ConvLaw::TySubId),
                    vec![d_a],
                    Judgment::TyEq(
                        CtxExpr::Empty,
                        ty_subst((**a).clone(), id(CtxExpr::Empty)),
                        (**a).clone(),
                    ),
                );
                Ok(d_trans(c1, c2))
            }
            (LawTag::UnitElimTm, Expr::Tm(TmExpr::Subst(a, s))) => {
                let d_s_id = prove_sub_eq(
                    cx,
                    sig_on,
                    &CtxExpr::Empty,
                    &CtxExpr::Empty,
                    s,
                    &id(CtxExpr::Empty),
                )?;
                let (ty, d_a) = inf_tm(cx, &CtxExpr::Empty, a)?;
                let c1 = Derivation::node(
                    Rule::CongTmSubst,
                    vec![d_refl(d_a.clone()), d_s_id],
                    Judgment::TmEq(
                        CtxExpr::Empty,
                        tm_subst((**a).clone(), (**s).clone()),
                        tm_subst((**a).clone(), id(CtxExpr::Empty)),
                        ty_subst(ty.clone(), (**s).clone()),
                    ),
                );
                let c2 = Derivation::node(
                    Rule::Law(ConvLaw::TmSubId),
                    vec![d_a],
                    Judgment::TmEq(
                        CtxExpr::Empty,
                        tm_subst((**a).clone(), id(CtxExpr::Empty)),
                        (**a).clone(),
                        ty,
                    ),
                );
                // Restate the identity law at the type of c1's conclusion.
                let want = match &c1.conclusion {
                    Judgment::TmEq(_, _, _, t) => t.clone(),
                    _ => unreachable!(),
                };
                let c2 = align_tm_eq_ty(cx, sig_on, c2, &want)?;
                Ok(d_trans(c1, c2))
            }
            _ => Err(bad()),
        },
    }
}

/// Justify one signature-equation rewrite step: instantiate the axiom along
/// the matched argument substitution and bridge the structural gaps with
/// cwf-law conversion only.
fn sig_step_eq(
    cx: &Cx,
    redex: &Expr,
    label: &SymbolName,
    new_redex: &Expr,
) -> Result<Derivation, ConvError> {
    let decl = cx.sig.lookup(label).map_err(|e| ConvError::IllFormedInput {
        detail: e.to_string(),
    })?;
    let Declaration::Equation {
        ctx: eq_ctx,
        ty: eq_ty,
        lhs,
        rhs,
        orient,
        ..
    } = decl.clone()
    else {
        return Err(ConvError::IllFormedInput {
            detail: format!("`{label}` is not an equation"),
        });
    };
    let (from, to) = match orient {
        Orientation::RightToLeft => (rhs.clone(), lhs.clone()),
        _ => (lhs.clone(), rhs.clone()),
    };
    let axiom = Derivation::node(
        Rule::EqAxiom(label.clone()),
        vec![],
        Judgment::TmEq(eq_ctx.clone(), lhs.clone(), rhs.clone(), eq_ty.clone()),
    );
    let axiom = match orient {
        Orientation::RightToLeft => d_sym(axiom),
        _ => axiom,
    };
    let (Expr::Tm(redex_tm), Expr::Tm(result_tm)) = (redex, new_redex) else {
        return Err(ConvError::IllFormedInput {
            detail: "signature equations rewrite terms".into(),
        });
    };
    // Ground instance at the declared context.
    if *redex_tm == from && *result_tm == to {
        return Ok(axiom);
    }
    // General instance: recover the argument bindings by re-matching.
    let rule = rewrite::sig_rule(cx.sig, &decl).ok_or_else(|| ConvError::IllFormedInput {
        detail: format!("equation `{label}` yields no rewrite rule"),
    })?;
    let (bindings, _) =
        rewrite::match_rule(cx.sig, &rule, redex).ok_or_else(|| ConvError::IllFormedInput {
            detail: format!("redex `{redex}` no longer matches equation `{label}`"),
        })?;
    let inst_ctx = rb(readback::ctx_of_tm(cx.sig, redex_tm))?;
    let entries: Vec<TyExpr> = eq_ctx.entries().into_iter().cloned().collect();
    let mut w = bang(inst_ctx.clone());
    for (i, entry) in entries.iter().enumerate() {
        let Some(Expr::Tm(arg)) = bindings.get(&format!("x{}", i + 1)) else {
            return Err(ConvError::IllFormedInput {
                detail: format!(
                    "equation `{label}` leaves telescope variable {} unbound",
                    i + 1
                ),
            });
        };
        w = pair(w, arg.clone(), entry.clone());
    }
    let (w_tgt, d_w) = infer_sub_in(cx, &inst_ctx, &w).map_err(cerr)?;
    let d_w = align_sub_tgt_in(cx, d_w, &eq_ctx).map_err(cerr)?;
    let _ = w_tgt;
    let inst = Derivation::node(
        Rule::CongTmSubst,
        vec![axiom, d_refl(d_w)],
        Judgment::TmEq(
            inst_ctx.clone(),
            tm_subst(from.clone(), w.clone()),
            tm_subst(to.clone(), w.clone()),
            ty_subst(eq_ty.clone(), w.clone()),
        ),
    );
    let amb_ty = rb(readback::ty_of_tm(cx.sig, redex_tm))?;
    // The matched redex and the literal instance differ only up to
    // conversion that never needs this equation again (weakening forms,
    // annotations, forced arguments); suspend its rule while bridging.
    cx.excluded.borrow_mut().push(label.clone());
    let bridged = (|| {
        let inst = align_tm_eq_ty(cx, true, inst, &amb_ty)?;
        let link_l = prove_tm_eq(
            cx,
            true,
            &inst_ctx,
            &amb_ty,
            redex_tm,
            &tm_subst(from, w.clone()),
        )?;
        let link_r = prove_tm_eq(cx, true, &inst_ctx, &amb_ty, &tm_subst(to, w), result_tm)?;
        Ok(d_trans(d_trans(link_l, inst), link_r))
    })();
    cx.excluded.borrow_mut().pop();
    bridged
}

/// Build the equality `start = end` for a whole trace, stated at the
/// readback frame of the start expression.
fn replay_eq(cx: &Cx, sig_on: bool, trace: &Trace) -> Result<Derivation, ConvError> {
    let _g = cx.guard()?;
    let start = &trace.start;
    if trace.steps.is_empty() {
        return refl_at_frame(cx, start);
    }
    let mut acc: Option<Derivation> = None;
    let f0 = frame(cx, start)?;
    for (i, step) in trace.steps.iter().enumerate() {
        let before = trace.before(i);
        let new_redex = at_path(&step.result, &step.path).ok_or_else(|| {
            ConvError::IllFormedInput {
                detail: "trace step path runs off the expression".into(),
            }
        })?;
        let e = step_eq(cx, sig_on, before, &step.path, &step.origin, &new_redex)?;
        let e = align_to_frame(cx, sig_on, e, &f0)?;
        acc = Some(match acc {
            None => e,
            Some(d) => d_trans(d, e),
        });
    }
    Ok(acc.expect("nonempty trace"))
}

enum Frame {
    Ty(CtxExpr),
    Tm(CtxExpr, TyExpr),
    Sub(CtxExpr, CtxExpr),
}

fn frame(cx: &Cx, e: &Expr) -> Result<Frame, ConvError> {
    match e {
        Expr::Ty(t) => Ok(Frame::Ty(ty_frame(cx, t)?)),
        Expr::Tm(t) => {
            let (c, ty) = tm_frame(cx, t)?;
            Ok(Frame::Tm(c, ty))
        }
        Expr::Sub(s) => {
            let (src, tgt) = sub_frame(cx, s)?;
            Ok(Frame::Sub(src, tgt))
        }
        Expr::Ctx(_) => Err(ConvError::IllFormedInput {
            detail: "contexts are compared structurally, not rewritten".into(),
        }),
    }
}

fn refl_at_frame(cx: &Cx, e: &Expr) -> Result<Derivation, ConvError> {
    match frame(cx, e)? {
        Frame::Ty(c) => match e {
            Expr::Ty(t) => Ok(d_refl(chk_ty(cx, &c, t)?)),
            _ => unreachable!(),
        },
        Frame::Tm(c, ty) => match e {
            Expr::Tm(t) => Ok(d_refl(chk_tm(cx, &c, t, &ty)?)),
            _ => unreachable!(),
        },
        Frame::Sub(src, tgt) => match e {
            Expr::Sub(s) => Ok(d_refl(derive_sub(cx, &src, &tgt, s)?)),
            _ => unreachable!(),
        },
    }
}

fn align_to_frame(
    cx: &Cx,
    sig_on: bool,
    d: Derivation,
    f: &Frame,
) -> Result<Derivation, ConvError> {
    match f {
        Frame::Ty(c) => align_ty_eq_ctx(cx, sig_on, d, c),
        Frame::Tm(c, ty) => {
            let d = align_tm_eq_ctx(cx, sig_on, d, c)?;
            align_tm_eq_ty(cx, sig_on, d, ty)
        }
        Frame::Sub(src, tgt) => {
            let d = align_sub_eq_src(cx, sig_on, d, src)?;
            align_sub_eq_tgt(cx, sig_on, d, tgt)
        }
    }
}

// ---------------------------------------------------------------------------
// Public conversion API
// ---------------------------------------------------------------------------

/// Derive `Γ = Γ' ⊢`, or report why the bounded procedure could not.
pub fn conv_ctx(
    sig: &Signature,
    a: &CtxExpr,
    b: &CtxExpr,
    fuel: u64,
) -> Result<Derivation, ConvError> {
    let cx = Cx::new(sig, fuel);
    prove_ctx_eq(&cx, true, a, b)
}

/// Derive `Γ ⊢ A = A'`.
pub fn conv_ty(
    sig: &Signature,
    ctx: &CtxExpr,
    a: &TyExpr,
    b: &TyExpr,
    fuel: u64,
) -> Result<Derivation, ConvError> {
    let cx = Cx::new(sig, fuel);
    prove_ty_eq(&cx, true, ctx, a, b)
}

/// Derive `Δ ⊢ γ = γ' : Γ`.
pub fn conv_sub(
    sig: &Signature,
    src: &CtxExpr,
    tgt: &CtxExpr,
    a: &SubExpr,
    b: &SubExpr,
    fuel: u64,
) -> Result<Derivation, ConvError> {
    let cx = Cx::new(sig, fuel);
    prove_sub_eq(&cx, true, src, tgt, a, b)
}

/// Derive `Γ ⊢ a = a' : A`.
pub fn conv_tm(
    sig: &Signature,
    ctx: &CtxExpr,
    ty: &TyExpr,
    a: &TmExpr,
    b: &TmExpr,
    fuel: u64,
) -> Result<Derivation, ConvError> {
    let cx = Cx::new(sig, fuel);
    prove_tm_eq(&cx, true, ctx, ty, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::{add_equation, add_operator, add_sort, empty_signature};

    fn m() -> TyExpr {
        sort("M")
    }

    fn c1m() -> CtxExpr {
        ext(empty(), m())
    }

    /// 1.M ⊢ M[p]
    fn m_wk() -> TyExpr {
        ty_subst(m(), proj(m()))
    }

    /// ∗[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩]
    fn lunit_lhs() -> TmExpr {
        let inner = pair(bang(c1m()), tm_subst(op("e"), bang(c1m())), m());
        let outer = pair(inner, q(m()), m_wk());
        tm_subst(op("*"), outer)
    }

    fn sigma3() -> Signature {
        let s = empty_signature();
        let s = add_sort(&s, "M".into(), empty()).unwrap();
        let s = add_operator(&s, "e".into(), empty(), m()).unwrap();
        let mul_ctx = ext(c1m(), m_wk());
        let mul_ty = ty_subst(m_wk(), proj(m_wk()));
        add_operator(&s, "*".into(), mul_ctx, mul_ty).unwrap()
    }

    fn sigma4() -> Signature {
        add_equation(
            &sigma3(),
            "lunit".into(),
            c1m(),
            m_wk(),
            lunit_lhs(),
            q(m()),
            Orientation::LeftToRight,
        )
        .unwrap()
    }

    #[test]
    fn monoid_contexts_check() {
        let sig = sigma3();
        assert!(check_ctx(&sig, &empty()).is_ok());
        assert!(check_ctx(&sig, &c1m()).is_ok());
        assert!(check_ctx(&sig, &ext(c1m(), m_wk())).is_ok());
        // M undeclared over the empty signature.
        assert!(check_ctx(&empty_signature(), &c1m()).is_err());
    }

    #[test]
    fn monoid_terms_check() {
        let sig = sigma3();
        // 1 ⊢ e : M
        assert!(check_tm(&sig, &empty(), &op("e"), &m()).is_ok());
        // 1.M ⊢ q : M[p] but not : M
        assert!(check_tm(&sig, &c1m(), &q(m()), &m_wk()).is_ok());
        assert!(matches!(
            check_tm(&sig, &c1m(), &q(m()), &m()),
            Err(CheckError::TypeMismatch { .. })
        ));
        // 1.M ⊢ ∗[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩] : M[p]
        let d = check_tm(&sig, &c1m(), &lunit_lhs(), &m_wk()).unwrap();
        let j = check_derivation(&sig, &d).unwrap();
        assert_eq!(
            j,
            Judgment::Tm(c1m(), lunit_lhs(), m_wk())
        );
    }

    #[test]
    fn sigma4_builds_and_lunit_converts() {
        let sig = sigma4();
        // ⊢ ∗[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩] = q : M[p] by the axiom.
        let d = conv_tm(&sig, &c1m(), &m_wk(), &lunit_lhs(), &q(m()), DEFAULT_FUEL).unwrap();
        let j = check_derivation(&sig, &d).unwrap();
        assert_eq!(j, Judgment::TmEq(c1m(), lunit_lhs(), q(m()), m_wk()));
    }

    #[test]
    fn terminal_substitutions_convert() {
        let sig = sigma3();
        // M[p] = M[⟨⟩] in 1.M.
        let a = m_wk();
        let b = ty_subst(m(), bang(c1m()));
        let d = conv_ty(&sig, &c1m(), &a, &b, DEFAULT_FUEL).unwrap();
        check_derivation(&sig, &d).unwrap();
        // id_1 = ⟨⟩_1.
        let d = conv_sub(
            &sig,
            &empty(),
            &empty(),
            &id(empty()),
            &bang(empty()),
            DEFAULT_FUEL,
        )
        .unwrap();
        check_derivation(&sig, &d).unwrap();
    }

    #[test]
    fn surjective_pairing_converts_by_eta() {
        let sig = sigma3();
        let ga = c1m();
        let d = conv_sub(
            &sig,
            &ga,
            &ga,
            &id(ga.clone()),
            &pair(proj(m()), q(m()), m()),
            DEFAULT_FUEL,
        )
        .unwrap();
        check_derivation(&sig, &d).unwrap();
    }

    #[test]
    fn weakened_instances_convert_through_the_axiom() {
        // 1 ⊢ ∗[⟨⟨⟨⟩,e⟩,e⟩] = e : M, the left-identity law instantiated at e.
        let sig = sigma4();
        let t = tm_subst(
            op("*"),
            pair(pair(bang(empty()), op("e"), m()), op("e"), m_wk()),
        );
        let d = conv_tm(&sig, &empty(), &m(), &t, &op("e"), DEFAULT_FUEL).unwrap();
        let j = check_derivation(&sig, &d).unwrap();
        assert_eq!(j, Judgment::TmEq(empty(), t, op("e"), m()));
    }

    #[test]
    fn normalizer_computes_the_axiom_instance() {
        // ∗[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩][⟨⟨⟩,e⟩] → e over Σ₄.
        let sig = sigma4();
        let w = pair(bang(empty()), op("e"), m());
        let t = tm_subst(lunit_lhs(), w);
        let (nf, _) =
            rewrite::normalize(&sig, &Expr::Tm(t), rewrite::DEFAULT_FUEL).unwrap();
        assert_eq!(nf, Expr::Tm(op("e")));
    }

    #[test]
    fn distinct_constants_do_not_convert() {
        let sig = sigma4();
        let e = conv_tm(&sig, &empty(), &m(), &op("e"), &op("*"), DEFAULT_FUEL);
        assert!(matches!(
            e,
            Err(ConvError::NormalFormsDiffer { .. }) | Err(ConvError::IllFormedInput { .. })
        ));
    }
}

// ---------------------------------------------------------------------------
// Proof-free checking and conversion
// ---------------------------------------------------------------------------
//
// Signature validation and elaboration only need to know whether a
// judgment holds; building the full derivation there would repeat the
// proof work of every side condition. These mirror the proof-producing
// routines exactly, so anything they accept the derivation builders can
// justify on demand.

fn q_check_ctx(cx: &Cx, ctx: &CtxExpr) -> Result<(), CheckError> {
    let key = MemoKey::CheckCtx(ctx.clone());
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    match ctx {
        CtxExpr::Empty => {}
        CtxExpr::Ext(base, ty) => {
            q_check_ctx(cx, base)?;
            q_check_ty(cx, base, ty)?;
        }
    }
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_check_ty(cx: &Cx, ctx: &CtxExpr, ty: &TyExpr) -> Result<(), CheckError> {
    let key = MemoKey::CheckTy(ctx.clone(), ty.clone());
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    match ty {
        TyExpr::Sort(name) => {
            let Some(decl_ctx) = cx.sig.lookup_sort(name) else {
                return ill(
                    Expr::Ty(ty.clone()),
                    format!("sort `{name}` is not declared"),
                );
            };
            let decl_ctx = decl_ctx.clone();
            if decl_ctx != *ctx {
                q_conv_ctx(cx, true, &decl_ctx, ctx).map_err(|_| {
                    CheckError::ContextMismatch {
                        expected: decl_ctx,
                        got: ctx.clone(),
                    }
                })?;
            }
        }
        TyExpr::Subst(inner, sub) => {
            let target = q_infer_sub(cx, ctx, sub)?;
            q_check_ty(cx, &target, inner)?;
        }
    }
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_infer_sub(cx: &Cx, src: &CtxExpr, sub: &SubExpr) -> Result<CtxExpr, CheckError> {
    let key = MemoKey::InferSub(src.clone(), sub.clone());
    if let Some(QuickHit::Sub(t)) = cx.quick_get(&key) {
        return Ok(t);
    }
    let tgt = match sub {
        SubExpr::Id(at) => {
            q_check_ctx(cx, at)?;
            q_src_fits(cx, src, at)?;
            (**at).clone()
        }
        SubExpr::Bang(from) => {
            q_check_ctx(cx, from)?;
            q_src_fits(cx, src, from)?;
            CtxExpr::Empty
        }
        SubExpr::P(over) => {
            let CtxExpr::Ext(base_ctx, entry) = src else {
                return ill(
                    Expr::Sub(sub.clone()),
                    "a projection needs an extended source context",
                );
            };
            q_check_ty(cx, base_ctx, over)?;
            if over != entry {
                q_conv_ty(cx, true, over, entry).map_err(CheckError::Conv)?;
            }
            (**base_ctx).clone()
        }
        SubExpr::Comp(f, g) => {
            let mid = q_infer_sub(cx, src, g)?;
            q_infer_sub(cx, &mid, f)?
        }
        SubExpr::Pair(g0, tm, at) => {
            let tgt = q_infer_sub(cx, src, g0)?;
            q_check_ty(cx, &tgt, at)?;
            let expected = ty_subst((**at).clone(), (**g0).clone());
            q_check_tm(cx, src, tm, &expected)?;
            ext(tgt, (**at).clone())
        }
    };
    cx.quick_put(key, QuickHit::Sub(tgt.clone()));
    Ok(tgt)
}

fn q_src_fits(cx: &Cx, src: &CtxExpr, annotated: &CtxExpr) -> Result<(), CheckError> {
    if src == annotated {
        return Ok(());
    }
    q_conv_ctx(cx, true, annotated, src).map_err(|_| CheckError::ContextMismatch {
        expected: annotated.clone(),
        got: src.clone(),
    })
}

fn q_infer_tm(cx: &Cx, ctx: &CtxExpr, tm: &TmExpr) -> Result<TyExpr, CheckError> {
    let key = MemoKey::InferTm(ctx.clone(), tm.clone());
    if let Some(QuickHit::Tm(t)) = cx.quick_get(&key) {
        return Ok(t);
    }
    let ty = match tm {
        TmExpr::Op(name) => {
            let Some((decl_ctx, decl_ty)) = cx.sig.lookup_operator(name) else {
                return ill(
                    Expr::Tm(tm.clone()),
                    format!("operator `{name}` is not declared"),
                );
            };
            let (decl_ctx, decl_ty) = (decl_ctx.clone(), decl_ty.clone());
            if decl_ctx != *ctx {
                q_conv_ctx(cx, true, &decl_ctx, ctx).map_err(|_| {
                    CheckError::ContextMismatch {
                        expected: decl_ctx,
                        got: ctx.clone(),
                    }
                })?;
            }
            decl_ty
        }
        TmExpr::Q(over) => {
            let CtxExpr::Ext(base_ctx, entry) = ctx else {
                return ill(
                    Expr::Tm(tm.clone()),
                    "q only makes sense in an extended context",
                );
            };
            q_check_ty(cx, base_ctx, over)?;
            if over != entry {
                q_conv_ty(cx, true, over, entry).map_err(CheckError::Conv)?;
            }
            ty_subst((**over).clone(), proj((**over).clone()))
        }
        TmExpr::Subst(inner, sub) => {
            let target = q_infer_sub(cx, ctx, sub)?;
            let inner_ty = q_infer_tm(cx, &target, inner)?;
            ty_subst(inner_ty, (**sub).clone())
        }
    };
    cx.quick_put(key, QuickHit::Tm(ty.clone()));
    Ok(ty)
}

fn q_check_tm(cx: &Cx, ctx: &CtxExpr, tm: &TmExpr, ty: &TyExpr) -> Result<(), CheckError> {
    let key = MemoKey::CheckTm(ctx.clone(), tm.clone(), ty.clone());
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    let synth = q_infer_tm(cx, ctx, tm)?;
    if synth != *ty {
        q_conv_ty(cx, true, &synth, ty).map_err(|detail| CheckError::TypeMismatch {
            synthesized: synth.clone(),
            expected: ty.clone(),
            detail,
        })?;
    }
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_conv_ctx(cx: &Cx, sig_on: bool, a: &CtxExpr, b: &CtxExpr) -> Result<(), ConvError> {
    if a == b {
        return Ok(());
    }
    let key = MemoKey::ConvCtx(sig_on, a.clone(), b.clone());
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    cx.enter_goal(&key)?;
    let out = (|| match (a, b) {
        (CtxExpr::Ext(ba, ta), CtxExpr::Ext(bb, tb)) => {
            q_conv_ctx(cx, sig_on, ba, bb)?;
            q_conv_ty(cx, sig_on, ta, tb)
        }
        _ => Err(ConvError::NormalFormsDiffer {
            left_nf: Expr::Ctx(a.clone()),
            right_nf: Expr::Ctx(b.clone()),
        }),
    })();
    cx.leave_goal(&key);
    out?;
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_conv_ty(cx: &Cx, sig_on: bool, a: &TyExpr, b: &TyExpr) -> Result<(), ConvError> {
    if a == b {
        return Ok(());
    }
    if std::env::var("GAT_DEBUG_CONV").is_ok() {
        eprintln!("q_conv_ty:\n  A={a}\n  B={b}");
    }
    let key = MemoKey::ConvTy(sig_on, CtxExpr::Empty, a.clone(), b.clone());
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    cx.enter_goal(&key)?;
    let out = (|| {
        let _g = cx.guard()?;
        let (na, _) = cx.normalize(sig_on, &Expr::Ty(a.clone()))?;
        let (nb, _) = cx.normalize(sig_on, &Expr::Ty(b.clone()))?;
        let (Expr::Ty(na), Expr::Ty(nb)) = (&na, &nb) else {
            unreachable!()
        };
        if na == nb {
            return Ok(());
        }
        match (na, nb) {
            (TyExpr::Subst(a0, s), TyExpr::Subst(b0, t)) => {
                q_conv_ty(cx, sig_on, a0, b0)?;
                q_conv_sub(cx, sig_on, s, t)
            }
            (TyExpr::Subst(a0, s), _) => q_ty_id_collapse(cx, sig_on, a0, s, nb),
            (_, TyExpr::Subst(b0, t)) => q_ty_id_collapse(cx, sig_on, b0, t, na),
            _ => Err(ConvError::NormalFormsDiffer {
                left_nf: Expr::Ty(na.clone()),
                right_nf: Expr::Ty(nb.clone()),
            }),
        }
    })();
    cx.leave_goal(&key);
    out?;
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_ty_id_collapse(
    cx: &Cx,
    sig_on: bool,
    a0: &TyExpr,
    s: &SubExpr,
    other: &TyExpr,
) -> Result<(), ConvError> {
    let tgt = rb(readback::sub_tgt(cx.sig, s))?;
    q_conv_sub(cx, sig_on, s, &id(tgt))?;
    q_conv_ty(cx, sig_on, a0, other)
}

fn q_conv_sub(cx: &Cx, sig_on: bool, a: &SubExpr, b: &SubExpr) -> Result<(), ConvError> {
    if a == b {
        return Ok(());
    }
    let key = MemoKey::ConvSub(
        sig_on,
        CtxExpr::Empty,
        CtxExpr::Empty,
        a.clone(),
        b.clone(),
    );
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    cx.enter_goal(&key)?;
    let out = (|| {
        let _g = cx.guard()?;
        let (na, _) = cx.normalize(sig_on, &Expr::Sub(a.clone()))?;
        let (nb, _) = cx.normalize(sig_on, &Expr::Sub(b.clone()))?;
        let (Expr::Sub(na), Expr::Sub(nb)) = (&na, &nb) else {
            unreachable!()
        };
        if na == nb {
            return Ok(());
        }
        match (na, nb) {
            (SubExpr::Bang(ca), SubExpr::Bang(cb)) => {
                return q_conv_ctx(cx, sig_on, ca, cb);
            }
            (SubExpr::P(ta), SubExpr::P(tb)) => {
                return q_conv_ty(cx, sig_on, ta, tb);
            }
            (SubExpr::Id(ca), SubExpr::Id(cb)) => {
                return q_conv_ctx(cx, sig_on, ca, cb);
            }
            (SubExpr::Comp(fa, ga), SubExpr::Comp(fb, gb)) => {
                if q_conv_sub(cx, sig_on, fa, fb).is_ok()
                    && q_conv_sub(cx, sig_on, ga, gb).is_ok()
                {
                    return Ok(());
                }
            }
            (SubExpr::Pair(sa, ma, _), SubExpr::Pair(sb, mb, _)) => {
                // Equal prefixes and components make equal pairs; the
                // annotations are forced on well-typed input.
                if q_conv_sub(cx, sig_on, sa, sb).is_ok()
                    && q_conv_tm(cx, sig_on, ma, mb).is_ok()
                {
                    return Ok(());
                }
            }
            _ => {}
        }
        // Typed fallbacks by the readback target.
        if readback::tgt_is_empty(cx.sig, na) == Some(true) {
            return if readback::tgt_is_empty(cx.sig, nb) == Some(true) {
                Ok(())
            } else {
                Err(ConvError::NormalFormsDiffer {
                    left_nf: Expr::Sub(na.clone()),
                    right_nf: Expr::Sub(nb.clone()),
                })
            };
        }
        let tgt = rb(readback::sub_tgt(cx.sig, na))?;
        match tgt {
            CtxExpr::Empty => Err(ConvError::NormalFormsDiffer {
                left_nf: Expr::Sub(na.clone()),
                right_nf: Expr::Sub(nb.clone()),
            }),
            CtxExpr::Ext(_, a_entry) => {
                let a_entry = (*a_entry).clone();
                q_conv_sub(
                    cx,
                    sig_on,
                    &comp(proj(a_entry.clone()), na.clone()),
                    &comp(proj(a_entry.clone()), nb.clone()),
                )?;
                q_conv_tm(
                    cx,
                    sig_on,
                    &tm_subst(q(a_entry.clone()), na.clone()),
                    &tm_subst(q(a_entry), nb.clone()),
                )
            }
        }
    })();
    cx.leave_goal(&key);
    out?;
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_conv_tm(cx: &Cx, sig_on: bool, a: &TmExpr, b: &TmExpr) -> Result<(), ConvError> {
    if a == b {
        return Ok(());
    }
    let key = MemoKey::ConvTm(
        sig_on,
        CtxExpr::Empty,
        TyExpr::Sort(SymbolName::new("#")),
        a.clone(),
        b.clone(),
    );
    if cx.quick_get(&key).is_some() {
        return Ok(());
    }
    cx.enter_goal(&key)?;
    let out = (|| {
        let _g = cx.guard()?;
        let (na, _) = cx.normalize(sig_on, &Expr::Tm(a.clone()))?;
        let (nb, _) = cx.normalize(sig_on, &Expr::Tm(b.clone()))?;
        let (Expr::Tm(na), Expr::Tm(nb)) = (&na, &nb) else {
            unreachable!()
        };
        if na == nb {
            return Ok(());
        }
        match (na, nb) {
            (TmExpr::Subst(a0, s), TmExpr::Subst(b0, t)) => {
                q_conv_tm(cx, sig_on, a0, b0)?;
                q_conv_sub(cx, sig_on, s, t)
            }
            (TmExpr::Q(ta), TmExpr::Q(tb)) => q_conv_ty(cx, sig_on, ta, tb),
            (TmExpr::Subst(a0, s), _) => q_tm_id_collapse(cx, sig_on, a0, s, nb),
            (_, TmExpr::Subst(b0, t)) => q_tm_id_collapse(cx, sig_on, b0, t, na),
            _ => Err(ConvError::NormalFormsDiffer {
                left_nf: Expr::Tm(na.clone()),
                right_nf: Expr::Tm(nb.clone()),
            }),
        }
    })();
    cx.leave_goal(&key);
    out?;
    cx.quick_put(key, QuickHit::Ok);
    Ok(())
}

fn q_tm_id_collapse(
    cx: &Cx,
    sig_on: bool,
    a0: &TmExpr,
    s: &SubExpr,
    other: &TmExpr,
) -> Result<(), ConvError> {
    let tgt = rb(readback::sub_tgt(cx.sig, s))?;
    q_conv_sub(cx, sig_on, s, &id(tgt))?;
    q_conv_tm(cx, sig_on, a0, other)
}

/// Proof-free validation of `Γ ⊢`.
pub fn check_ctx_quick(sig: &Signature, ctx: &CtxExpr) -> Result<(), CheckError> {
    q_check_ctx(&Cx::new(sig, DEFAULT_FUEL), ctx)
}

/// Proof-free validation of `Γ ⊢ A`.
pub fn check_ty_quick(sig: &Signature, ctx: &CtxExpr, ty: &TyExpr) -> Result<(), CheckError> {
    let cx = Cx::new(sig, DEFAULT_FUEL);
    q_check_ctx(&cx, ctx)?;
    q_check_ty(&cx, ctx, ty)
}

/// Proof-free validation of `Γ ⊢ a : A`.
pub fn check_tm_quick(
    sig: &Signature,
    ctx: &CtxExpr,
    tm: &TmExpr,
    ty: &TyExpr,
) -> Result<(), CheckError> {
    let cx = Cx::new(sig, DEFAULT_FUEL);
    q_check_ctx(&cx, ctx)?;
    q_check_ty(&cx, ctx, ty)?;
    q_check_tm(&cx, ctx, tm, ty)
}
