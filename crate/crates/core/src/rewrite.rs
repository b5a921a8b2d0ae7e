//! Untyped rewriting over cwf-combinator expressions.
//!
//! The fixed rule set orients the cwf conversion laws: substitutions fuse
//! (`A[γ][δ] → A[γ∘δ]`), pairs distribute (`⟨γ,a⟩∘δ → ⟨γ∘δ,a[δ]⟩`), `∘`
//! reassociates to the right, and projections compute. Surjective pairing
//! is not a rewrite rule (its left side is a lone variable once oriented
//! for rewriting); the checker recovers it by a typed eta comparison.
//! Terminal-object uniqueness is built in by collapsing any substitution
//! whose annotation readback gives target `1` to the empty substitution,
//! which keeps the system confluent across strategies on well-typed terms.
//!
//! Signature equations extend the rule set: an oriented equation over a
//! telescope becomes a first-order rule whose telescope variables are
//! metavariables and whose weakened constants match both their bare and
//! substituted forms.

use crate::readback::sub_src;
use crate::signature::{Declaration, Orientation, Signature};
use crate::syntax::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Default step budget for normalization.
pub const DEFAULT_FUEL: u64 = 10_000;

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatCtx {
    Meta(String),
    Empty,
    Ext(Box<PatCtx>, Box<PatTy>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatSub {
    Meta(String),
    Comp(Box<PatSub>, Box<PatSub>),
    Id(Box<PatCtx>),
    Bang(Box<PatCtx>),
    P(Box<PatTy>),
    Pair(Box<PatSub>, Box<PatTm>, Box<PatTy>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatTy {
    Meta(String),
    Subst(Box<PatTy>, Box<PatSub>),
    Sort(SymbolName),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatTm {
    Meta(String),
    Subst(Box<PatTm>, Box<PatSub>),
    Q(Box<PatTy>),
    Op(SymbolName),
    /// A point constant, matching `f` as well as `f[σ]`; the substitution,
    /// when present, is captured under the named metavariable.
    WeakConst { name: SymbolName, weakening: String },
    /// An operator applied through a pair spine `f[⟨…⟨base,t₁⟩…,tₖ⟩]`.
    /// Pair annotations are not constrained when matching; instantiation
    /// re-annotates the spine with the operator's declared telescope types.
    App {
        name: SymbolName,
        base: String,
        args: Vec<PatTm>,
        anns: Vec<TyExpr>,
    },
}

/// A class-tagged pattern.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Pat {
    Ctx(PatCtx),
    Sub(PatSub),
    Ty(PatTy),
    Tm(PatTm),
}

/// Where a rewrite rule comes from.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum RuleOrigin {
    CwfLaw(LawTag),
    SigEquation(SymbolName),
}

impl fmt::Display for RuleOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleOrigin::CwfLaw(t) => write!(f, "{t:?}"),
            RuleOrigin::SigEquation(l) => write!(f, "eq:{l}"),
        }
    }
}

/// Tags for the built-in rules.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum LawTag {
    /// `A[id_Γ] → A`
    TySubId,
    /// `a[id_Γ] → a`
    TmSubId,
    /// `A[γ][δ] → A[γ∘δ]`
    TySubFuse,
    /// `a[γ][δ] → a[γ∘δ]`
    TmSubFuse,
    /// `id_Γ ∘ γ → γ`
    IdL,
    /// `γ ∘ id_Γ → γ`
    IdR,
    /// `(γ∘δ)∘ξ → γ∘(δ∘ξ)`
    Assoc,
    /// `p_A ∘ ⟨γ,a⟩ → γ`
    PPair,
    /// `q_A[⟨γ,a⟩] → a`
    QPair,
    /// `⟨γ,a⟩∘δ → ⟨γ∘δ,a[δ]⟩`
    PairComp,
    /// `id_1 → ⟨⟩_1`
    IdBangOne,
    /// `⟨⟩_Γ ∘ γ → ⟨⟩_Δ`, when the source `Δ` is syntactically at hand.
    BangComp,
    /// `⟨⟩_1 ∘ γ → γ`; the composite forces `γ` into the terminal context.
    LeftUnitBang,
    /// `γ ∘ ⟨⟩_1 → γ`.
    RightUnitBang,
    /// `A[γ] → A` when `γ` reads back as an endosubstitution of `1`.
    UnitElimTy,
    /// `a[γ] → a` when `γ` reads back as an endosubstitution of `1`.
    UnitElimTm,
}

#[derive(Clone, Debug)]
pub enum RuleKind {
    Pattern { lhs: Pat, rhs: Pat },
    BangComp,
    UnitElimTy,
    UnitElimTm,
}

/// One rewrite rule.
#[derive(Clone, Debug)]
pub struct RewriteRule {
    pub origin: RuleOrigin,
    pub kind: RuleKind,
    /// First pair-spine base captured on the left, used to re-weaken point
    /// constants appearing on the right.
    pub base_meta: Option<String>,
}

impl RewriteRule {
    fn pattern(origin: RuleOrigin, lhs: Pat, rhs: Pat) -> Self {
        debug_assert!(rhs_metas_covered(&lhs, &rhs));
        RewriteRule {
            origin,
            kind: RuleKind::Pattern { lhs, rhs },
            base_meta: None,
        }
    }
}

fn pat_metas(p: &Pat, out: &mut Vec<String>) {
    fn ctx(p: &PatCtx, out: &mut Vec<String>) {
        match p {
            PatCtx::Meta(m) => out.push(m.clone()),
            PatCtx::Empty => {}
            PatCtx::Ext(b, t) => {
                ctx(b, out);
                ty(t, out);
            }
        }
    }
    fn sub(p: &PatSub, out: &mut Vec<String>) {
        match p {
            PatSub::Meta(m) => out.push(m.clone()),
            PatSub::Comp(f, g) => {
                sub(f, out);
                sub(g, out);
            }
            PatSub::Id(c) | PatSub::Bang(c) => ctx(c, out),
            PatSub::P(t) => ty(t, out),
            PatSub::Pair(s, m, t) => {
                sub(s, out);
                tm(m, out);
                ty(t, out);
            }
        }
    }
    fn ty(p: &PatTy, out: &mut Vec<String>) {
        match p {
            PatTy::Meta(m) => out.push(m.clone()),
            PatTy::Subst(t, s) => {
                ty(t, out);
                sub(s, out);
            }
            PatTy::Sort(_) => {}
        }
    }
    fn tm(p: &PatTm, out: &mut Vec<String>) {
        match p {
            PatTm::Meta(m) => out.push(m.clone()),
            PatTm::Subst(t, s) => {
                tm(t, out);
                sub(s, out);
            }
            PatTm::Q(t) => ty(t, out),
            PatTm::Op(_) => {}
            PatTm::WeakConst { weakening, .. } => out.push(weakening.clone()),
            PatTm::App { base, args, .. } => {
                out.push(base.clone());
                for a in args {
                    tm(a, out);
                }
            }
        }
    }
    match p {
        Pat::Ctx(c) => ctx(c, out),
        Pat::Sub(s) => sub(s, out),
        Pat::Ty(t) => ty(t, out),
        Pat::Tm(t) => tm(t, out),
    }
}

fn rhs_metas_covered(lhs: &Pat, rhs: &Pat) -> bool {
    let mut l = Vec::new();
    let mut r = Vec::new();
    pat_metas(lhs, &mut l);
    pat_metas(rhs, &mut r);
    r.iter().all(|m| l.contains(m))
}

// ---------------------------------------------------------------------------
// The cwf rule set
// ---------------------------------------------------------------------------

fn m_ctx(n: &str) -> PatCtx {
    PatCtx::Meta(n.into())
}
fn m_sub(n: &str) -> PatSub {
    PatSub::Meta(n.into())
}
fn m_ty(n: &str) -> PatTy {
    PatTy::Meta(n.into())
}
fn m_tm(n: &str) -> PatTm {
    PatTm::Meta(n.into())
}

/// The built-in rules for the cwf laws.
pub fn cwf_rules() -> Vec<RewriteRule> {
    use LawTag::*;
    let p_comp = |f: PatSub, g: PatSub| PatSub::Comp(Box::new(f), Box::new(g));
    let p_id = |c: PatCtx| PatSub::Id(Box::new(c));
    let p_pair =
        |s: PatSub, m: PatTm, t: PatTy| PatSub::Pair(Box::new(s), Box::new(m), Box::new(t));
    let p_tysub = |t: PatTy, s: PatSub| PatTy::Subst(Box::new(t), Box::new(s));
    let p_tmsub = |t: PatTm, s: PatSub| PatTm::Subst(Box::new(t), Box::new(s));
    vec![
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(TySubId),
            Pat::Ty(p_tysub(m_ty("A"), p_id(m_ctx("Γ")))),
            Pat::Ty(m_ty("A")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(TmSubId),
            Pat::Tm(p_tmsub(m_tm("a"), p_id(m_ctx("Γ")))),
            Pat::Tm(m_tm("a")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(TySubFuse),
            Pat::Ty(p_tysub(p_tysub(m_ty("A"), m_sub("γ")), m_sub("δ"))),
            Pat::Ty(p_tysub(m_ty("A"), p_comp(m_sub("γ"), m_sub("δ")))),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(TmSubFuse),
            Pat::Tm(p_tmsub(p_tmsub(m_tm("a"), m_sub("γ")), m_sub("δ"))),
            Pat::Tm(p_tmsub(m_tm("a"), p_comp(m_sub("γ"), m_sub("δ")))),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(IdL),
            Pat::Sub(p_comp(p_id(m_ctx("Γ")), m_sub("γ"))),
            Pat::Sub(m_sub("γ")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(IdR),
            Pat::Sub(p_comp(m_sub("γ"), p_id(m_ctx("Γ")))),
            Pat::Sub(m_sub("γ")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(Assoc),
            Pat::Sub(p_comp(p_comp(m_sub("γ"), m_sub("δ")), m_sub("ξ"))),
            Pat::Sub(p_comp(m_sub("γ"), p_comp(m_sub("δ"), m_sub("ξ")))),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(PPair),
            Pat::Sub(p_comp(
                PatSub::P(Box::new(m_ty("A"))),
                p_pair(m_sub("γ"), m_tm("a"), m_ty("B")),
            )),
            Pat::Sub(m_sub("γ")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(QPair),
            Pat::Tm(p_tmsub(
                PatTm::Q(Box::new(m_ty("A"))),
                p_pair(m_sub("γ"), m_tm("a"), m_ty("B")),
            )),
            Pat::Tm(m_tm("a")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(PairComp),
            Pat::Sub(p_comp(
                p_pair(m_sub("γ"), m_tm("a"), m_ty("A")),
                m_sub("δ"),
            )),
            Pat::Sub(p_pair(
                p_comp(m_sub("γ"), m_sub("δ")),
                p_tmsub(m_tm("a"), m_sub("δ")),
                m_ty("A"),
            )),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(IdBangOne),
            Pat::Sub(PatSub::Id(Box::new(PatCtx::Empty))),
            Pat::Sub(PatSub::Bang(Box::new(PatCtx::Empty))),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(LeftUnitBang),
            Pat::Sub(p_comp(PatSub::Bang(Box::new(PatCtx::Empty)), m_sub("γ"))),
            Pat::Sub(m_sub("γ")),
        ),
        RewriteRule::pattern(
            RuleOrigin::CwfLaw(RightUnitBang),
            Pat::Sub(p_comp(m_sub("γ"), PatSub::Bang(Box::new(PatCtx::Empty)))),
            Pat::Sub(m_sub("γ")),
        ),
        RewriteRule {
            origin: RuleOrigin::CwfLaw(BangComp),
            kind: RuleKind::BangComp,
            base_meta: None,
        },
        RewriteRule {
            origin: RuleOrigin::CwfLaw(UnitElimTy),
            kind: RuleKind::UnitElimTy,
            base_meta: None,
        },
        RewriteRule {
            origin: RuleOrigin::CwfLaw(UnitElimTm),
            kind: RuleKind::UnitElimTm,
            base_meta: None,
        },
    ]
}

// ---------------------------------------------------------------------------
// Signature equations as rules
// ---------------------------------------------------------------------------

/// Variable chains `q_{Aᵢ}[p_{Aᵢ₊₁}]…[p_{Aₙ}]` of a telescope context.
pub fn telescope_vars(ctx: &CtxExpr) -> Vec<TmExpr> {
    let entries: Vec<TyExpr> = ctx.entries().into_iter().cloned().collect();
    let n = entries.len();
    (0..n)
        .map(|i| {
            let mut t = q(entries[i].clone());
            for entry in entries.iter().take(n).skip(i + 1) {
                t = tm_subst(t, proj(entry.clone()));
            }
            t
        })
        .collect()
}

/// The direct spine components of an elaborated type: the terms paired
/// into its sort-application substitutions, at every weakening layer.
fn direct_components(ty: &TyExpr) -> Vec<&TmExpr> {
    let mut out = Vec::new();
    let mut cur = ty;
    while let TyExpr::Subst(head, sub) = cur {
        let mut s = sub.as_ref();
        while let SubExpr::Pair(rest, tm, _) = s {
            out.push(tm.as_ref());
            s = rest;
        }
        cur = head;
    }
    out
}

/// Argument positions of an operator that are forced by typing: entry `j`
/// is forced when its variable appears as a direct index of another
/// entry's type, so any well-typed use determines it up to conversion.
/// Forced positions are matched loosely in signature rules, mirroring how
/// such arguments are customarily suppressed in writing. An occurrence
/// buried deeper than one application does not force the entry.
pub fn forced_positions(decl_ctx: &CtxExpr) -> Vec<bool> {
    let entries: Vec<TyExpr> = decl_ctx.entries().into_iter().cloned().collect();
    let n = entries.len();
    let mut forced = vec![false; n];
    for k in 1..n {
        // Variables of the prefix context, as seen from entry k's context.
        let mut prefix = CtxExpr::Empty;
        for e in entries.iter().take(k) {
            prefix = ext(prefix, e.clone());
        }
        let vars = telescope_vars(&prefix);
        for component in direct_components(&entries[k]) {
            for (j, var) in vars.iter().enumerate() {
                if component == var {
                    forced[j] = true;
                }
            }
        }
    }
    forced
}

struct SigRuleBuilder<'a> {
    sig: &'a Signature,
    vars: Vec<TmExpr>,
    fresh: u32,
    base_meta: Option<String>,
}

impl<'a> SigRuleBuilder<'a> {
    fn fresh(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}#{}", self.fresh)
    }

    fn const_ctx_len(&self, name: &SymbolName) -> Option<usize> {
        self.sig.lookup_operator(name).map(|(c, _)| c.len())
    }

    /// Unwrap a pair spine of exactly `k` pairs; returns (base, args).
    fn unspine(sub: &SubExpr, k: usize) -> Option<(SubExpr, Vec<TmExpr>)> {
        let mut args = Vec::with_capacity(k);
        let mut cur = sub;
        for _ in 0..k {
            match cur {
                SubExpr::Pair(s, m, _) => {
                    args.push((**m).clone());
                    cur = s;
                }
                _ => return None,
            }
        }
        args.reverse();
        Some((cur.clone(), args))
    }

    fn tm(&mut self, t: &TmExpr, lhs: bool) -> PatTm {
        if let Some(i) = self.vars.iter().position(|v| v == t) {
            return PatTm::Meta(format!("x{}", i + 1));
        }
        match t {
            TmExpr::Op(f) if self.const_ctx_len(f) == Some(0) => PatTm::WeakConst {
                name: f.clone(),
                weakening: self.fresh("w"),
            },
            TmExpr::Subst(head, sub) => {
                if let TmExpr::Op(f) = head.as_ref() {
                    match self.const_ctx_len(f) {
                        Some(0) => {
                            return PatTm::WeakConst {
                                name: f.clone(),
                                weakening: self.fresh("w"),
                            }
                        }
                        Some(k) => {
                            if let Some((_, args)) = Self::unspine(sub, k) {
                                let base_name = self.fresh("b");
                                if lhs && self.base_meta.is_none() {
                                    self.base_meta = Some(base_name.clone());
                                }
                                let args =
                                    args.iter().map(|a| self.tm(a, lhs)).collect::<Vec<_>>();
                                let anns = self
                                    .sig
                                    .lookup_operator(f)
                                    .map(|(c, _)| {
                                        c.entries().into_iter().cloned().collect::<Vec<_>>()
                                    })
                                    .unwrap_or_default();
                                return PatTm::App {
                                    name: f.clone(),
                                    base: base_name,
                                    args,
                                    anns,
                                };
                            }
                        }
                        None => {}
                    }
                }
                PatTm::Subst(Box::new(self.tm(head, lhs)), Box::new(self.sub(sub, lhs)))
            }
            TmExpr::Q(a) => PatTm::Q(Box::new(self.ty(a, lhs))),
            TmExpr::Op(f) => PatTm::Op(f.clone()),
        }
    }

    fn ty(&mut self, t: &TyExpr, lhs: bool) -> PatTy {
        match t {
            TyExpr::Sort(s) => PatTy::Sort(s.clone()),
            TyExpr::Subst(ty, sub) => {
                PatTy::Subst(Box::new(self.ty(ty, lhs)), Box::new(self.sub(sub, lhs)))
            }
        }
    }

    fn sub(&mut self, s: &SubExpr, lhs: bool) -> PatSub {
        match s {
            SubExpr::Comp(f, g) => {
                PatSub::Comp(Box::new(self.sub(f, lhs)), Box::new(self.sub(g, lhs)))
            }
            SubExpr::Id(c) if lhs => PatSub::Id(Box::new(PatCtx::Meta(self.fresh("c")))),
            SubExpr::Bang(c) if lhs => PatSub::Bang(Box::new(PatCtx::Meta(self.fresh("c")))),
            SubExpr::Id(c) => PatSub::Id(Box::new(Self::ctx_concrete(c))),
            SubExpr::Bang(c) => PatSub::Bang(Box::new(Self::ctx_concrete(c))),
            SubExpr::P(a) => PatSub::P(Box::new(self.ty(a, lhs))),
            SubExpr::Pair(sub, tm, ann) => {
                let ann = if lhs {
                    PatTy::Meta(self.fresh("t"))
                } else {
                    self.ty(ann, lhs)
                };
                PatSub::Pair(
                    Box::new(self.sub(sub, lhs)),
                    Box::new(self.tm(tm, lhs)),
                    Box::new(ann),
                )
            }
        }
    }

    fn ctx_concrete(c: &CtxExpr) -> PatCtx {
        match c {
            CtxExpr::Empty => PatCtx::Empty,
            CtxExpr::Ext(b, t) => PatCtx::Ext(
                Box::new(Self::ctx_concrete(b)),
                // Entry types of concrete contexts are kept verbatim.
                Box::new(ty_concrete(t)),
            ),
        }
    }
}

fn ty_concrete(t: &TyExpr) -> PatTy {
    match t {
        TyExpr::Sort(s) => PatTy::Sort(s.clone()),
        TyExpr::Subst(ty, sub) => {
            PatTy::Subst(Box::new(ty_concrete(ty)), Box::new(sub_concrete(sub)))
        }
    }
}

fn sub_concrete(s: &SubExpr) -> PatSub {
    match s {
        SubExpr::Comp(f, g) => PatSub::Comp(Box::new(sub_concrete(f)), Box::new(sub_concrete(g))),
        SubExpr::Id(c) => PatSub::Id(Box::new(SigRuleBuilder::ctx_concrete(c))),
        SubExpr::Bang(c) => PatSub::Bang(Box::new(SigRuleBuilder::ctx_concrete(c))),
        SubExpr::P(a) => PatSub::P(Box::new(ty_concrete(a))),
        SubExpr::Pair(sub, tm, ann) => PatSub::Pair(
            Box::new(sub_concrete(sub)),
            Box::new(tm_concrete(tm)),
            Box::new(ty_concrete(ann)),
        ),
    }
}

fn tm_concrete(t: &TmExpr) -> PatTm {
    match t {
        TmExpr::Op(f) => PatTm::Op(f.clone()),
        TmExpr::Q(a) => PatTm::Q(Box::new(ty_concrete(a))),
        TmExpr::Subst(tm, sub) => {
            PatTm::Subst(Box::new(tm_concrete(tm)), Box::new(sub_concrete(sub)))
        }
    }
}

fn named_metas_tm(p: &PatTm, out: &mut Vec<String>) {
    match p {
        PatTm::Meta(m) => out.push(m.clone()),
        PatTm::Subst(t, s) => {
            named_metas_tm(t, out);
            named_metas_sub(s, out);
        }
        PatTm::Q(t) => named_metas_ty(t, out),
        PatTm::Op(_) => {}
        PatTm::WeakConst { weakening, .. } => out.push(weakening.clone()),
        PatTm::App { base, args, .. } => {
            out.push(base.clone());
            for a in args {
                named_metas_tm(a, out);
            }
        }
    }
}

fn named_metas_sub(p: &PatSub, out: &mut Vec<String>) {
    match p {
        PatSub::Meta(m) => out.push(m.clone()),
        PatSub::Comp(f, g) => {
            named_metas_sub(f, out);
            named_metas_sub(g, out);
        }
        PatSub::Id(c) | PatSub::Bang(c) => named_metas_ctx(c, out),
        PatSub::P(t) => named_metas_ty(t, out),
        PatSub::Pair(s, m, t) => {
            named_metas_sub(s, out);
            named_metas_tm(m, out);
            named_metas_ty(t, out);
        }
    }
}

fn named_metas_ty(p: &PatTy, out: &mut Vec<String>) {
    match p {
        PatTy::Meta(m) => out.push(m.clone()),
        PatTy::Subst(t, s) => {
            named_metas_ty(t, out);
            named_metas_sub(s, out);
        }
        PatTy::Sort(_) => {}
    }
}

fn named_metas_ctx(p: &PatCtx, out: &mut Vec<String>) {
    match p {
        PatCtx::Meta(m) => out.push(m.clone()),
        PatCtx::Empty => {}
        PatCtx::Ext(b, t) => {
            named_metas_ctx(b, out);
            named_metas_ty(t, out);
        }
    }
}

/// Replace the `n`-th eligible application argument (forced position,
/// structured pattern) with a fresh wildcard. `n` counts down; on success
/// it is left negative.
fn wildcard_nth(sig: &Signature, p: &PatTm, n: &mut isize, fresh: &mut u32) -> PatTm {
    match p {
        PatTm::App {
            name,
            base,
            args,
            anns,
        } => {
            let forced = sig
                .lookup_operator(name)
                .map(|(c, _)| forced_positions(c))
                .unwrap_or_default();
            let mut new_args = Vec::with_capacity(args.len());
            for (j, a) in args.iter().enumerate() {
                let eligible = forced.get(j).copied().unwrap_or(false)
                    && !matches!(a, PatTm::Meta(_));
                if eligible && *n == 0 {
                    *n -= 1;
                    *fresh += 1;
                    new_args.push(PatTm::Meta(format!("_#{fresh}")));
                    continue;
                }
                if eligible {
                    *n -= 1;
                }
                new_args.push(wildcard_nth(sig, a, n, fresh));
            }
            PatTm::App {
                name: name.clone(),
                base: base.clone(),
                args: new_args,
                anns: anns.clone(),
            }
        }
        PatTm::Subst(t, s) => PatTm::Subst(
            Box::new(wildcard_nth(sig, t, n, fresh)),
            Box::new(wildcard_nth_sub(sig, s, n, fresh)),
        ),
        PatTm::Q(_) | PatTm::Op(_) | PatTm::Meta(_) | PatTm::WeakConst { .. } => p.clone(),
    }
}

fn wildcard_nth_sub(sig: &Signature, p: &PatSub, n: &mut isize, fresh: &mut u32) -> PatSub {
    match p {
        PatSub::Comp(f, g) => PatSub::Comp(
            Box::new(wildcard_nth_sub(sig, f, n, fresh)),
            Box::new(wildcard_nth_sub(sig, g, n, fresh)),
        ),
        PatSub::Pair(s, m, t) => PatSub::Pair(
            Box::new(wildcard_nth_sub(sig, s, n, fresh)),
            Box::new(wildcard_nth(sig, m, n, fresh)),
            Box::new(t.as_ref().clone()),
        ),
        _ => p.clone(),
    }
}

/// Loosen the left pattern at forced argument positions while keeping
/// every metavariable the right side needs bound somewhere.
fn loosen_forced(
    sig: &Signature,
    mut lhs: PatTm,
    needed: &[String],
    fresh: &mut u32,
) -> PatTm {
    loop {
        let mut committed = false;
        let mut i = 0isize;
        loop {
            let mut n = i;
            let cand = wildcard_nth(sig, &lhs, &mut n, fresh);
            if n >= 0 {
                // Fewer than i eligible positions remain.
                break;
            }
            if cand != lhs {
                let mut metas = Vec::new();
                named_metas_tm(&cand, &mut metas);
                if needed.iter().all(|m| metas.contains(m)) {
                    lhs = cand;
                    committed = true;
                    break;
                }
            }
            i += 1;
        }
        if !committed {
            return lhs;
        }
    }
}

/// Build the rewrite rule for one oriented signature equation, if usable.
pub fn sig_rule(sig: &Signature, decl: &Declaration) -> Option<RewriteRule> {
    let Declaration::Equation {
        label,
        ctx,
        lhs,
        rhs,
        orient,
        ..
    } = decl
    else {
        return None;
    };
    let (from, to) = match orient {
        Orientation::LeftToRight => (lhs, rhs),
        Orientation::RightToLeft => (rhs, lhs),
        Orientation::Unoriented => return None,
    };
    let mut b = SigRuleBuilder {
        sig,
        vars: telescope_vars(ctx),
        fresh: 0,
        base_meta: None,
    };
    let lhs_pat = b.tm(from, true);
    let rhs_pat = b.tm(to, false);
    let mut fresh = b.fresh;
    // Telescope variables the right side consumes must stay bound.
    let mut rhs_metas = Vec::new();
    named_metas_tm(&rhs_pat, &mut rhs_metas);
    let needed: Vec<String> = rhs_metas
        .iter()
        .filter(|m| m.starts_with('x'))
        .cloned()
        .collect();
    let lhs_pat = loosen_forced(sig, lhs_pat, &needed, &mut fresh);
    // A rule whose right side needs metavariables the left never binds can
    // never fire; drop it.
    let mut lhs_metas = Vec::new();
    named_metas_tm(&lhs_pat, &mut lhs_metas);
    if needed.iter().any(|m| !lhs_metas.contains(m)) {
        return None;
    }
    Some(RewriteRule {
        origin: RuleOrigin::SigEquation(label.clone()),
        kind: RuleKind::Pattern {
            lhs: Pat::Tm(lhs_pat),
            rhs: Pat::Tm(rhs_pat),
        },
        base_meta: b.base_meta,
    })
}

/// The active rule set for a signature: oriented equations first (in
/// declaration order), then the cwf laws.
pub fn rules_for(sig: &Signature) -> Vec<RewriteRule> {
    let mut rules: Vec<RewriteRule> = sig
        .decls()
        .iter()
        .filter_map(|d| sig_rule(sig, d))
        .collect();
    rules.extend(cwf_rules());
    rules
}

// ---------------------------------------------------------------------------
// Matching and instantiation
// ---------------------------------------------------------------------------

pub type Bindings = HashMap<String, Expr>;

fn bind(bindings: &mut Bindings, name: &str, value: Expr) -> bool {
    match bindings.get(name) {
        Some(prev) => *prev == value,
        None => {
            bindings.insert(name.to_string(), value);
            true
        }
    }
}

fn match_ctx(p: &PatCtx, e: &CtxExpr, b: &mut Bindings) -> bool {
    match (p, e) {
        (PatCtx::Meta(m), _) => bind(b, m, Expr::Ctx(e.clone())),
        (PatCtx::Empty, CtxExpr::Empty) => true,
        (PatCtx::Ext(pb, pt), CtxExpr::Ext(eb, et)) => {
            match_ctx(pb, eb, b) && match_ty(pt, et, b)
        }
        _ => false,
    }
}

fn match_sub(p: &PatSub, e: &SubExpr, b: &mut Bindings) -> bool {
    match (p, e) {
        (PatSub::Meta(m), _) => bind(b, m, Expr::Sub(e.clone())),
        (PatSub::Comp(pf, pg), SubExpr::Comp(ef, eg)) => {
            match_sub(pf, ef, b) && match_sub(pg, eg, b)
        }
        (PatSub::Id(pc), SubExpr::Id(ec)) => match_ctx(pc, ec, b),
        (PatSub::Bang(pc), SubExpr::Bang(ec)) => match_ctx(pc, ec, b),
        (PatSub::P(pt), SubExpr::P(et)) => match_ty(pt, et, b),
        (PatSub::Pair(ps, pm, pt), SubExpr::Pair(es, em, et)) => {
            match_sub(ps, es, b) && match_tm(pm, em, b) && match_ty(pt, et, b)
        }
        _ => false,
    }
}

fn match_ty(p: &PatTy, e: &TyExpr, b: &mut Bindings) -> bool {
    match (p, e) {
        (PatTy::Meta(m), _) => bind(b, m, Expr::Ty(e.clone())),
        (PatTy::Subst(pt, ps), TyExpr::Subst(et, es)) => {
            match_ty(pt, et, b) && match_sub(ps, es, b)
        }
        (PatTy::Sort(pn), TyExpr::Sort(en)) => pn == en,
        _ => false,
    }
}

fn match_tm(p: &PatTm, e: &TmExpr, b: &mut Bindings) -> bool {
    match (p, e) {
        (PatTm::Meta(m), _) => bind(b, m, Expr::Tm(e.clone())),
        (PatTm::WeakConst { name, .. }, TmExpr::Op(en)) => name == en,
        (PatTm::WeakConst { name, weakening }, TmExpr::Subst(head, sub)) => {
            matches!(head.as_ref(), TmExpr::Op(en) if en == name)
                && bind(b, weakening, Expr::Sub((**sub).clone()))
        }
        (PatTm::App { name, base, args, .. }, TmExpr::Subst(head, sub)) => {
            if !matches!(head.as_ref(), TmExpr::Op(en) if en == name) {
                return false;
            }
            let Some((spine_base, spine_args)) = SigRuleBuilder::unspine(sub, args.len()) else {
                return false;
            };
            if !bind(b, base, Expr::Sub(spine_base)) {
                return false;
            }
            args.iter()
                .zip(spine_args.iter())
                .all(|(pa, ea)| match_tm(pa, ea, b))
        }
        (PatTm::Subst(pt, ps), TmExpr::Subst(et, es)) => {
            match_tm(pt, et, b) && match_sub(ps, es, b)
        }
        (PatTm::Q(pt), TmExpr::Q(et)) => match_ty(pt, et, b),
        (PatTm::Op(pn), TmExpr::Op(en)) => pn == en,
        _ => false,
    }
}

fn match_pat(p: &Pat, e: &Expr, b: &mut Bindings) -> bool {
    match (p, e) {
        (Pat::Ctx(p), Expr::Ctx(e)) => match_ctx(p, e, b),
        (Pat::Sub(p), Expr::Sub(e)) => match_sub(p, e, b),
        (Pat::Ty(p), Expr::Ty(e)) => match_ty(p, e, b),
        (Pat::Tm(p), Expr::Tm(e)) => match_tm(p, e, b),
        _ => false,
    }
}

struct InstEnv<'a> {
    bindings: &'a Bindings,
    /// Spine base captured on the left, for re-weakening constants.
    fallback_base: Option<SubExpr>,
}

fn inst_ctx(p: &PatCtx, env: &InstEnv) -> Option<CtxExpr> {
    match p {
        PatCtx::Meta(m) => match env.bindings.get(m) {
            Some(Expr::Ctx(c)) => Some(c.clone()),
            _ => None,
        },
        PatCtx::Empty => Some(CtxExpr::Empty),
        PatCtx::Ext(b, t) => Some(ext(inst_ctx(b, env)?, inst_ty(t, env)?)),
    }
}

fn inst_sub(p: &PatSub, env: &InstEnv) -> Option<SubExpr> {
    match p {
        PatSub::Meta(m) => match env.bindings.get(m) {
            Some(Expr::Sub(s)) => Some(s.clone()),
            _ => None,
        },
        PatSub::Comp(f, g) => Some(comp(inst_sub(f, env)?, inst_sub(g, env)?)),
        PatSub::Id(c) => Some(id(inst_ctx(c, env)?)),
        PatSub::Bang(c) => Some(bang(inst_ctx(c, env)?)),
        PatSub::P(t) => Some(proj(inst_ty(t, env)?)),
        PatSub::Pair(s, m, t) => Some(pair(
            inst_sub(s, env)?,
            inst_tm(m, env)?,
            inst_ty(t, env)?,
        )),
    }
}

fn inst_ty(p: &PatTy, env: &InstEnv) -> Option<TyExpr> {
    match p {
        PatTy::Meta(m) => match env.bindings.get(m) {
            Some(Expr::Ty(t)) => Some(t.clone()),
            _ => None,
        },
        PatTy::Subst(t, s) => Some(ty_subst(inst_ty(t, env)?, inst_sub(s, env)?)),
        PatTy::Sort(n) => Some(TyExpr::Sort(n.clone())),
    }
}

fn inst_tm(p: &PatTm, env: &InstEnv) -> Option<TmExpr> {
    match p {
        PatTm::Meta(m) => match env.bindings.get(m) {
            Some(Expr::Tm(t)) => Some(t.clone()),
            _ => None,
        },
        PatTm::Subst(t, s) => Some(tm_subst(inst_tm(t, env)?, inst_sub(s, env)?)),
        PatTm::Q(t) => Some(q(inst_ty(t, env)?)),
        PatTm::Op(n) => Some(TmExpr::Op(n.clone())),
        PatTm::WeakConst { name, weakening } => match env.bindings.get(weakening) {
            Some(Expr::Sub(s)) => Some(tm_subst(TmExpr::Op(name.clone()), s.clone())),
            _ => match &env.fallback_base {
                Some(base) => Some(tm_subst(TmExpr::Op(name.clone()), base.clone())),
                None => Some(TmExpr::Op(name.clone())),
            },
        },
        PatTm::App {
            name,
            base,
            args,
            anns,
        } => {
            let base_sub = match env.bindings.get(base) {
                Some(Expr::Sub(s)) => s.clone(),
                _ => env.fallback_base.clone()?,
            };
            let args = args
                .iter()
                .map(|a| inst_tm(a, env))
                .collect::<Option<Vec<_>>>()?;
            if args.len() != anns.len() {
                return None;
            }
            let mut cur = base_sub;
            for (a, ann) in args.into_iter().zip(anns.iter()) {
                cur = pair(cur, a, ann.clone());
            }
            Some(tm_subst(TmExpr::Op(name.clone()), cur))
        }
    }
}

fn inst_pat(p: &Pat, env: &InstEnv) -> Option<Expr> {
    match p {
        Pat::Ctx(c) => inst_ctx(c, env).map(Expr::Ctx),
        Pat::Sub(s) => inst_sub(s, env).map(Expr::Sub),
        Pat::Ty(t) => inst_ty(t, env).map(Expr::Ty),
        Pat::Tm(t) => inst_tm(t, env).map(Expr::Tm),
    }
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

/// Redex selection order. Rules are always tried in priority order at a
/// candidate position (signature equations first, then the cwf laws); the
/// strategy only picks the position.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Strategy {
    #[default]
    LeftmostOutermost,
    LeftmostInnermost,
    RightmostOutermost,
    RightmostInnermost,
    /// Uniformly random redex, deterministic in the seed.
    Random(u64),
}

/// One rewrite step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceStep {
    pub path: Path,
    pub origin: RuleOrigin,
    #[serde(skip_serializing_if = "HashMap::is_empty", default)]
    pub bindings: HashMap<String, Expr>,
    /// The whole expression after this step.
    pub result: Expr,
}

/// A replayable rewrite: `start` together with every intermediate result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub start: Expr,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(start: Expr) -> Self {
        Trace {
            start,
            steps: Vec::new(),
        }
    }

    pub fn end(&self) -> &Expr {
        self.steps.last().map(|s| &s.result).unwrap_or(&self.start)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The expression before step `i`.
    pub fn before(&self, i: usize) -> &Expr {
        if i == 0 {
            &self.start
        } else {
            &self.steps[i - 1].result
        }
    }
}

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("fuel exhausted after {limit} rewrite steps")]
    FuelExhausted { limit: u64, partial: Trace },
}

/// Borrowed view of an expression node, for allocation-free scanning.
#[derive(Clone, Copy)]
enum ExprRef<'a> {
    Ctx(&'a CtxExpr),
    Sub(&'a SubExpr),
    Ty(&'a TyExpr),
    Tm(&'a TmExpr),
}

impl ExprRef<'_> {
    fn to_owned(self) -> Expr {
        match self {
            ExprRef::Ctx(c) => Expr::Ctx(c.clone()),
            ExprRef::Sub(s) => Expr::Sub(s.clone()),
            ExprRef::Ty(t) => Expr::Ty(t.clone()),
            ExprRef::Tm(t) => Expr::Tm(t.clone()),
        }
    }
}

fn ref_children<'a>(e: ExprRef<'a>) -> Vec<ExprRef<'a>> {
    match e {
        ExprRef::Ctx(CtxExpr::Empty) => vec![],
        ExprRef::Ctx(CtxExpr::Ext(b, t)) => vec![ExprRef::Ctx(b), ExprRef::Ty(t)],
        ExprRef::Sub(SubExpr::Comp(f, g)) => vec![ExprRef::Sub(f), ExprRef::Sub(g)],
        ExprRef::Sub(SubExpr::Id(c)) | ExprRef::Sub(SubExpr::Bang(c)) => {
            vec![ExprRef::Ctx(c)]
        }
        ExprRef::Sub(SubExpr::P(t)) => vec![ExprRef::Ty(t)],
        ExprRef::Sub(SubExpr::Pair(s, m, t)) => {
            vec![ExprRef::Sub(s), ExprRef::Tm(m), ExprRef::Ty(t)]
        }
        ExprRef::Ty(TyExpr::Subst(t, s)) => vec![ExprRef::Ty(t), ExprRef::Sub(s)],
        ExprRef::Ty(TyExpr::Sort(_)) => vec![],
        ExprRef::Tm(TmExpr::Subst(m, s)) => vec![ExprRef::Tm(m), ExprRef::Sub(s)],
        ExprRef::Tm(TmExpr::Q(t)) => vec![ExprRef::Ty(t)],
        ExprRef::Tm(TmExpr::Op(_)) => vec![],
    }
}

fn try_rule_at_ref(
    sig: &Signature,
    rule: &RewriteRule,
    expr: ExprRef<'_>,
) -> Option<(Bindings, Expr)> {
    match &rule.kind {
        RuleKind::Pattern { lhs, rhs } => {
            let mut b = Bindings::new();
            let matched = match (lhs, expr) {
                (Pat::Ctx(p), ExprRef::Ctx(e)) => match_ctx(p, e, &mut b),
                (Pat::Sub(p), ExprRef::Sub(e)) => match_sub(p, e, &mut b),
                (Pat::Ty(p), ExprRef::Ty(e)) => match_ty(p, e, &mut b),
                (Pat::Tm(p), ExprRef::Tm(e)) => match_tm(p, e, &mut b),
                _ => false,
            };
            if !matched {
                return None;
            }
            let fallback_base = rule.base_meta.as_ref().and_then(|m| match b.get(m) {
                Some(Expr::Sub(s)) => Some(s.clone()),
                _ => None,
            });
            let env = InstEnv {
                bindings: &b,
                fallback_base,
            };
            let out = inst_pat(rhs, &env)?;
            Some((b, out))
        }
        RuleKind::BangComp => {
            let ExprRef::Sub(SubExpr::Comp(f, g)) = expr else {
                return None;
            };
            if !matches!(f.as_ref(), SubExpr::Bang(c) if !matches!(**c, CtxExpr::Empty)) {
                return None;
            }
            let src = crate::readback::src_shallow(g)?;
            Some((Bindings::new(), Expr::Sub(bang(src))))
        }
        RuleKind::UnitElimTy => {
            let ExprRef::Ty(TyExpr::Subst(t, s)) = expr else {
                return None;
            };
            if crate::readback::tgt_is_empty(sig, s) == Some(true)
                && crate::readback::src_is_empty(sig, s) == Some(true)
            {
                Some((Bindings::new(), Expr::Ty((**t).clone())))
            } else {
                None
            }
        }
        RuleKind::UnitElimTm => {
            let ExprRef::Tm(TmExpr::Subst(t, s)) = expr else {
                return None;
            };
            if crate::readback::tgt_is_empty(sig, s) == Some(true)
                && crate::readback::src_is_empty(sig, s) == Some(true)
            {
                Some((Bindings::new(), Expr::Tm((**t).clone())))
            } else {
                None
            }
        }
    }
}

fn try_rule_at(sig: &Signature, rule: &RewriteRule, expr: &Expr) -> Option<(Bindings, Expr)> {
    match &rule.kind {
        RuleKind::Pattern { lhs, rhs } => {
            let mut b = Bindings::new();
            if !match_pat(lhs, expr, &mut b) {
                return None;
            }
            let fallback_base = rule.base_meta.as_ref().and_then(|m| match b.get(m) {
                Some(Expr::Sub(s)) => Some(s.clone()),
                _ => None,
            });
            let env = InstEnv {
                bindings: &b,
                fallback_base,
            };
            let out = inst_pat(rhs, &env)?;
            Some((b, out))
        }
        RuleKind::BangComp => {
            let Expr::Sub(SubExpr::Comp(f, g)) = expr else {
                return None;
            };
            if !matches!(f.as_ref(), SubExpr::Bang(c) if !matches!(**c, CtxExpr::Empty)) {
                return None;
            }
            let src = crate::readback::src_shallow(g)?;
            Some((Bindings::new(), Expr::Sub(bang(src))))
        }
        RuleKind::UnitElimTy => {
            let Expr::Ty(TyExpr::Subst(t, s)) = expr else {
                return None;
            };
            if crate::readback::tgt_is_empty(sig, s) == Some(true)
                && crate::readback::src_is_empty(sig, s) == Some(true)
            {
                Some((Bindings::new(), Expr::Ty((**t).clone())))
            } else {
                None
            }
        }
        RuleKind::UnitElimTm => {
            let Expr::Tm(TmExpr::Subst(t, s)) = expr else {
                return None;
            };
            if crate::readback::tgt_is_empty(sig, s) == Some(true)
                && crate::readback::src_is_empty(sig, s) == Some(true)
            {
                Some((Bindings::new(), Expr::Tm((**t).clone())))
            } else {
                None
            }
        }
    }
}

/// Try one rule at the root of `expr`, returning the bindings and the
/// contractum. Used by trace replay to recover rule instantiations.
pub fn match_rule(
    sig: &Signature,
    rule: &RewriteRule,
    expr: &Expr,
) -> Option<(Bindings, Expr)> {
    try_rule_at(sig, rule, expr)
}

fn first_rule_at<'r>(
    sig: &Signature,
    rules: &'r [RewriteRule],
    expr: ExprRef<'_>,
) -> Option<(&'r RewriteRule, Bindings, Expr)> {
    for rule in rules {
        if let Some((b, out)) = try_rule_at_ref(sig, rule, expr) {
            return Some((rule, b, out));
        }
    }
    None
}

type Hit<'r> = (Path, &'r RewriteRule, Bindings, Expr);

fn find_outer<'r>(
    sig: &Signature,
    rules: &'r [RewriteRule],
    expr: ExprRef<'_>,
    path: &mut Path,
    right: bool,
) -> Option<Hit<'r>> {
    if let Some((rule, b, out)) = first_rule_at(sig, rules, expr) {
        return Some((path.clone(), rule, b, out));
    }
    let kids = ref_children(expr);
    let order: Vec<usize> = if right {
        (0..kids.len()).rev().collect()
    } else {
        (0..kids.len()).collect()
    };
    for i in order {
        path.push(i);
        if let Some(hit) = find_outer(sig, rules, kids[i], path, right) {
            return Some(hit);
        }
        path.pop();
    }
    None
}

fn find_inner<'r>(
    sig: &Signature,
    rules: &'r [RewriteRule],
    expr: ExprRef<'_>,
    path: &mut Path,
    right: bool,
) -> Option<Hit<'r>> {
    let kids = ref_children(expr);
    let order: Vec<usize> = if right {
        (0..kids.len()).rev().collect()
    } else {
        (0..kids.len()).collect()
    };
    for i in order {
        path.push(i);
        if let Some(hit) = find_inner(sig, rules, kids[i], path, right) {
            return Some(hit);
        }
        path.pop();
    }
    first_rule_at(sig, rules, expr).map(|(rule, b, out)| (path.clone(), rule, b, out))
}

fn collect_hits<'r>(
    sig: &Signature,
    rules: &'r [RewriteRule],
    expr: ExprRef<'_>,
    path: &mut Path,
    out: &mut Vec<Hit<'r>>,
) {
    if let Some((rule, b, res)) = first_rule_at(sig, rules, expr) {
        out.push((path.clone(), rule, b, res));
    }
    for (i, kid) in ref_children(expr).into_iter().enumerate() {
        path.push(i);
        collect_hits(sig, rules, kid, path, out);
        path.pop();
    }
}

fn xorshift(state: &mut u64) -> u64 {
    let mut x = *state;
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    *state = x;
    x
}

/// Normalize with an explicit rule set.
pub fn normalize_with(
    sig: &Signature,
    rules: &[RewriteRule],
    expr: &Expr,
    fuel: u64,
    strategy: Strategy,
) -> Result<(Expr, Trace), RewriteError> {
    let mut trace = Trace::new(expr.clone());
    let mut cur = expr.clone();
    let mut rng = match strategy {
        Strategy::Random(seed) => seed | 1,
        _ => 0,
    };
    let mut used = 0u64;
    loop {
        let cur_ref = match &cur {
            Expr::Ctx(c) => ExprRef::Ctx(c),
            Expr::Sub(s) => ExprRef::Sub(s),
            Expr::Ty(t) => ExprRef::Ty(t),
            Expr::Tm(t) => ExprRef::Tm(t),
        };
        let hit = match strategy {
            Strategy::LeftmostOutermost => find_outer(sig, rules, cur_ref, &mut Vec::new(), false),
            Strategy::RightmostOutermost => find_outer(sig, rules, cur_ref, &mut Vec::new(), true),
            Strategy::LeftmostInnermost => find_inner(sig, rules, cur_ref, &mut Vec::new(), false),
            Strategy::RightmostInnermost => find_inner(sig, rules, cur_ref, &mut Vec::new(), true),
            Strategy::Random(_) => {
                let mut hits = Vec::new();
                collect_hits(sig, rules, cur_ref, &mut Vec::new(), &mut hits);
                if hits.is_empty() {
                    None
                } else {
                    let i = (xorshift(&mut rng) % hits.len() as u64) as usize;
                    Some(hits.swap_remove(i))
                }
            }
        };
        let Some((path, rule, bindings, new_sub)) = hit else {
            return Ok((cur, trace));
        };
        if used >= fuel {
            return Err(RewriteError::FuelExhausted {
                limit: fuel,
                partial: trace,
            });
        }
        used += 1;
        cur = replace_at(&cur, &path, new_sub);
        trace.steps.push(TraceStep {
            path,
            origin: rule.origin.clone(),
            bindings,
            result: cur.clone(),
        });
    }
}

/// Normalize under the signature's active rule set (leftmost-outermost).
pub fn normalize(
    sig: &Signature,
    expr: &Expr,
    fuel: u64,
) -> Result<(Expr, Trace), RewriteError> {
    let rules = rules_for(sig);
    normalize_with(sig, &rules, expr, fuel, Strategy::LeftmostOutermost)
}

/// Outcome of a joinability test.
#[derive(Debug)]
pub enum JoinResult {
    /// Both sides rewrite to one normal form.
    Joined { left: Trace, right: Trace },
    /// Distinct normal forms. Not a disproof of convertibility.
    Differ {
        left_nf: Expr,
        right_nf: Expr,
        left: Trace,
        right: Trace,
    },
}

/// Normalize both sides and compare normal forms structurally.
pub fn joinable(
    sig: &Signature,
    x: &Expr,
    y: &Expr,
    fuel: u64,
) -> Result<JoinResult, RewriteError> {
    let rules = rules_for(sig);
    let (nx, tx) = normalize_with(sig, &rules, x, fuel, Strategy::LeftmostOutermost)?;
    let (ny, ty) = normalize_with(sig, &rules, y, fuel, Strategy::LeftmostOutermost)?;
    if nx == ny {
        Ok(JoinResult::Joined {
            left: tx,
            right: ty,
        })
    } else {
        Ok(JoinResult::Differ {
            left_nf: nx,
            right_nf: ny,
            left: tx,
            right: ty,
        })
    }
}

// ---------------------------------------------------------------------------
// Critical pairs
// ---------------------------------------------------------------------------

/// An overlap between two rule left sides.
#[derive(Clone, Debug)]
pub struct CriticalPair {
    pub outer: RuleOrigin,
    pub inner: RuleOrigin,
    /// Position in the outer left side where the inner rule overlaps.
    pub pos: Path,
    pub peak: Pat,
    pub left_reduct: Pat,
    pub right_reduct: Pat,
}

/// Expand matcher sugar into plain constructors for unification: a weak
/// constant becomes `f[σ?]` in its general substituted form, an application
/// spine becomes nested pairs with unconstrained annotations.
fn expand_tm(p: &PatTm, fresh: &mut u32) -> PatTm {
    match p {
        PatTm::WeakConst { name, weakening } => PatTm::Subst(
            Box::new(PatTm::Op(name.clone())),
            Box::new(PatSub::Meta(weakening.clone())),
        ),
        PatTm::App {
            name, base, args, ..
        } => {
            let mut spine = PatSub::Meta(base.clone());
            for a in args {
                *fresh += 1;
                spine = PatSub::Pair(
                    Box::new(spine),
                    Box::new(expand_tm(a, fresh)),
                    Box::new(PatTy::Meta(format!("ann#{fresh}"))),
                );
            }
            PatTm::Subst(Box::new(PatTm::Op(name.clone())), Box::new(spine))
        }
        PatTm::Subst(t, s) => PatTm::Subst(
            Box::new(expand_tm(t, fresh)),
            Box::new(expand_sub(s, fresh)),
        ),
        PatTm::Q(t) => PatTm::Q(Box::new(expand_ty(t, fresh))),
        PatTm::Meta(_) | PatTm::Op(_) => p.clone(),
    }
}

fn expand_ctx(p: &PatCtx, fresh: &mut u32) -> PatCtx {
    match p {
        PatCtx::Ext(b, t) => PatCtx::Ext(
            Box::new(expand_ctx(b, fresh)),
            Box::new(expand_ty(t, fresh)),
        ),
        PatCtx::Meta(_) | PatCtx::Empty => p.clone(),
    }
}

fn expand_sub(p: &PatSub, fresh: &mut u32) -> PatSub {
    match p {
        PatSub::Comp(f, g) => PatSub::Comp(
            Box::new(expand_sub(f, fresh)),
            Box::new(expand_sub(g, fresh)),
        ),
        PatSub::Id(c) => PatSub::Id(Box::new(expand_ctx(c, fresh))),
        PatSub::Bang(c) => PatSub::Bang(Box::new(expand_ctx(c, fresh))),
        PatSub::P(t) => PatSub::P(Box::new(expand_ty(t, fresh))),
        PatSub::Pair(s, m, t) => PatSub::Pair(
            Box::new(expand_sub(s, fresh)),
            Box::new(expand_tm(m, fresh)),
            Box::new(expand_ty(t, fresh)),
        ),
        PatSub::Meta(_) => p.clone(),
    }
}

fn expand_ty(p: &PatTy, fresh: &mut u32) -> PatTy {
    match p {
        PatTy::Subst(t, s) => PatTy::Subst(
            Box::new(expand_ty(t, fresh)),
            Box::new(expand_sub(s, fresh)),
        ),
        PatTy::Meta(_) | PatTy::Sort(_) => p.clone(),
    }
}

fn expand_pat(p: &Pat, fresh: &mut u32) -> Pat {
    match p {
        Pat::Ctx(c) => Pat::Ctx(expand_ctx(c, fresh)),
        Pat::Sub(s) => Pat::Sub(expand_sub(s, fresh)),
        Pat::Ty(t) => Pat::Ty(expand_ty(t, fresh)),
        Pat::Tm(t) => Pat::Tm(expand_tm(t, fresh)),
    }
}

fn rename_pat(p: &Pat, prefix: &str) -> Pat {
    fn ctx(p: &PatCtx, pre: &str) -> PatCtx {
        match p {
            PatCtx::Meta(m) => PatCtx::Meta(format!("{pre}{m}")),
            PatCtx::Empty => PatCtx::Empty,
            PatCtx::Ext(b, t) => PatCtx::Ext(Box::new(ctx(b, pre)), Box::new(ty(t, pre))),
        }
    }
    fn sub(p: &PatSub, pre: &str) -> PatSub {
        match p {
            PatSub::Meta(m) => PatSub::Meta(format!("{pre}{m}")),
            PatSub::Comp(f, g) => PatSub::Comp(Box::new(sub(f, pre)), Box::new(sub(g, pre))),
            PatSub::Id(c) => PatSub::Id(Box::new(ctx(c, pre))),
            PatSub::Bang(c) => PatSub::Bang(Box::new(ctx(c, pre))),
            PatSub::P(t) => PatSub::P(Box::new(ty(t, pre))),
            PatSub::Pair(s, m, t) => PatSub::Pair(
                Box::new(sub(s, pre)),
                Box::new(tm(m, pre)),
                Box::new(ty(t, pre)),
            ),
        }
    }
    fn ty(p: &PatTy, pre: &str) -> PatTy {
        match p {
            PatTy::Meta(m) => PatTy::Meta(format!("{pre}{m}")),
            PatTy::Subst(t, s) => PatTy::Subst(Box::new(ty(t, pre)), Box::new(sub(s, pre))),
            PatTy::Sort(n) => PatTy::Sort(n.clone()),
        }
    }
    fn tm(p: &PatTm, pre: &str) -> PatTm {
        match p {
            PatTm::Meta(m) => PatTm::Meta(format!("{pre}{m}")),
            PatTm::Subst(t, s) => PatTm::Subst(Box::new(tm(t, pre)), Box::new(sub(s, pre))),
            PatTm::Q(t) => PatTm::Q(Box::new(ty(t, pre))),
            PatTm::Op(n) => PatTm::Op(n.clone()),
            PatTm::WeakConst { name, weakening } => PatTm::WeakConst {
                name: name.clone(),
                weakening: format!("{pre}{weakening}"),
            },
            PatTm::App {
                name,
                base,
                args,
                anns,
            } => PatTm::App {
                name: name.clone(),
                base: format!("{pre}{base}"),
                args: args.iter().map(|a| tm(a, pre)).collect(),
                anns: anns.clone(),
            },
        }
    }
    match p {
        Pat::Ctx(c) => Pat::Ctx(ctx(c, prefix)),
        Pat::Sub(s) => Pat::Sub(sub(s, prefix)),
        Pat::Ty(t) => Pat::Ty(ty(t, prefix)),
        Pat::Tm(t) => Pat::Tm(tm(t, prefix)),
    }
}

fn pat_children(p: &Pat) -> Vec<Pat> {
    match p {
        Pat::Ctx(PatCtx::Meta(_)) | Pat::Ctx(PatCtx::Empty) => vec![],
        Pat::Ctx(PatCtx::Ext(b, t)) => vec![Pat::Ctx((**b).clone()), Pat::Ty((**t).clone())],
        Pat::Sub(PatSub::Meta(_)) => vec![],
        Pat::Sub(PatSub::Comp(f, g)) => {
            vec![Pat::Sub((**f).clone()), Pat::Sub((**g).clone())]
        }
        Pat::Sub(PatSub::Id(c)) | Pat::Sub(PatSub::Bang(c)) => vec![Pat::Ctx((**c).clone())],
        Pat::Sub(PatSub::P(t)) => vec![Pat::Ty((**t).clone())],
        Pat::Sub(PatSub::Pair(s, m, t)) => vec![
            Pat::Sub((**s).clone()),
            Pat::Tm((**m).clone()),
            Pat::Ty((**t).clone()),
        ],
        Pat::Ty(PatTy::Meta(_)) | Pat::Ty(PatTy::Sort(_)) => vec![],
        Pat::Ty(PatTy::Subst(t, s)) => {
            vec![Pat::Ty((**t).clone()), Pat::Sub((**s).clone())]
        }
        Pat::Tm(PatTm::Meta(_)) | Pat::Tm(PatTm::Op(_)) => vec![],
        Pat::Tm(PatTm::Subst(t, s)) => {
            vec![Pat::Tm((**t).clone()), Pat::Sub((**s).clone())]
        }
        Pat::Tm(PatTm::Q(t)) => vec![Pat::Ty((**t).clone())],
        Pat::Tm(PatTm::WeakConst { .. }) | Pat::Tm(PatTm::App { .. }) => {
            unreachable!("patterns are expanded before traversal")
        }
    }
}

fn pat_replace(p: &Pat, path: &[usize], new: Pat) -> Pat {
    if path.is_empty() {
        return new;
    }
    let kids = pat_children(p);
    let i = path[0];
    let newkid = pat_replace(&kids[i], &path[1..], new);
    let mut kids = kids;
    kids[i] = newkid;
    match p {
        Pat::Ctx(PatCtx::Ext(..)) => match (&kids[0], &kids[1]) {
            (Pat::Ctx(b), Pat::Ty(t)) => {
                Pat::Ctx(PatCtx::Ext(Box::new(b.clone()), Box::new(t.clone())))
            }
            _ => unreachable!(),
        },
        Pat::Sub(PatSub::Comp(..)) => match (&kids[0], &kids[1]) {
            (Pat::Sub(f), Pat::Sub(g)) => {
                Pat::Sub(PatSub::Comp(Box::new(f.clone()), Box::new(g.clone())))
            }
            _ => unreachable!(),
        },
        Pat::Sub(PatSub::Id(_)) => match &kids[0] {
            Pat::Ctx(c) => Pat::Sub(PatSub::Id(Box::new(c.clone()))),
            _ => unreachable!(),
        },
        Pat::Sub(PatSub::Bang(_)) => match &kids[0] {
            Pat::Ctx(c) => Pat::Sub(PatSub::Bang(Box::new(c.clone()))),
            _ => unreachable!(),
        },
        Pat::Sub(PatSub::P(_)) => match &kids[0] {
            Pat::Ty(t) => Pat::Sub(PatSub::P(Box::new(t.clone()))),
            _ => unreachable!(),
        },
        Pat::Sub(PatSub::Pair(..)) => match (&kids[0], &kids[1], &kids[2]) {
            (Pat::Sub(s), Pat::Tm(m), Pat::Ty(t)) => Pat::Sub(PatSub::Pair(
                Box::new(s.clone()),
                Box::new(m.clone()),
                Box::new(t.clone()),
            )),
            _ => unreachable!(),
        },
        Pat::Ty(PatTy::Subst(..)) => match (&kids[0], &kids[1]) {
            (Pat::Ty(t), Pat::Sub(s)) => {
                Pat::Ty(PatTy::Subst(Box::new(t.clone()), Box::new(s.clone())))
            }
            _ => unreachable!(),
        },
        Pat::Tm(PatTm::Subst(..)) => match (&kids[0], &kids[1]) {
            (Pat::Tm(t), Pat::Sub(s)) => {
                Pat::Tm(PatTm::Subst(Box::new(t.clone()), Box::new(s.clone())))
            }
            _ => unreachable!(),
        },
        Pat::Tm(PatTm::Q(_)) => match &kids[0] {
            Pat::Ty(t) => Pat::Tm(PatTm::Q(Box::new(t.clone()))),
            _ => unreachable!(),
        },
        _ => unreachable!(),
    }
}

fn is_meta(p: &Pat) -> bool {
    matches!(
        p,
        Pat::Ctx(PatCtx::Meta(_))
            | Pat::Sub(PatSub::Meta(_))
            | Pat::Ty(PatTy::Meta(_))
            | Pat::Tm(PatTm::Meta(_))
    )
}

type PSubst = HashMap<String, Pat>;

fn meta_name(p: &Pat) -> Option<&str> {
    match p {
        Pat::Ctx(PatCtx::Meta(m))
        | Pat::Sub(PatSub::Meta(m))
        | Pat::Ty(PatTy::Meta(m))
        | Pat::Tm(PatTm::Meta(m)) => Some(m),
        _ => None,
    }
}

fn walk(p: &Pat, s: &PSubst) -> Pat {
    let mut cur = p.clone();
    while let Some(m) = meta_name(&cur) {
        match s.get(m) {
            Some(next) => cur = next.clone(),
            None => break,
        }
    }
    cur
}

fn occurs(m: &str, p: &Pat, s: &PSubst) -> bool {
    let p = walk(p, s);
    if meta_name(&p) == Some(m) {
        return true;
    }
    pat_children(&p).iter().any(|k| occurs(m, k, s))
}

fn punify(a: &Pat, b: &Pat, s: &mut PSubst) -> bool {
    let a = walk(a, s);
    let b = walk(b, s);
    if a == b {
        return true;
    }
    if let Some(m) = meta_name(&a) {
        if occurs(m, &b, s) {
            return false;
        }
        s.insert(m.to_string(), b);
        return true;
    }
    if let Some(m) = meta_name(&b) {
        if occurs(m, &a, s) {
            return false;
        }
        s.insert(m.to_string(), a);
        return true;
    }
    if std::mem::discriminant(&a) != std::mem::discriminant(&b) {
        return false;
    }
    let same_head = match (&a, &b) {
        (Pat::Ctx(x), Pat::Ctx(y)) => std::mem::discriminant(x) == std::mem::discriminant(y),
        (Pat::Sub(x), Pat::Sub(y)) => std::mem::discriminant(x) == std::mem::discriminant(y),
        (Pat::Ty(x), Pat::Ty(y)) => {
            std::mem::discriminant(x) == std::mem::discriminant(y)
                && match (x, y) {
                    (PatTy::Sort(nx), PatTy::Sort(ny)) => nx == ny,
                    _ => true,
                }
        }
        (Pat::Tm(x), Pat::Tm(y)) => {
            std::mem::discriminant(x) == std::mem::discriminant(y)
                && match (x, y) {
                    (PatTm::Op(nx), PatTm::Op(ny)) => nx == ny,
                    _ => true,
                }
        }
        _ => false,
    };
    if !same_head {
        return false;
    }
    let ka = pat_children(&a);
    let kb = pat_children(&b);
    if ka.len() != kb.len() {
        return false;
    }
    ka.iter().zip(kb.iter()).all(|(x, y)| punify(x, y, s))
}

fn presolve(p: &Pat, s: &PSubst) -> Pat {
    let p = walk(p, s);
    if is_meta(&p) {
        return p;
    }
    let kids: Vec<Pat> = pat_children(&p).iter().map(|k| presolve(k, s)).collect();
    let mut out = p.clone();
    for (i, k) in kids.into_iter().enumerate() {
        out = pat_replace(&out, &[i], k);
    }
    out
}

fn nonvar_positions(p: &Pat) -> Vec<Path> {
    fn go(p: &Pat, path: &mut Path, out: &mut Vec<Path>) {
        if is_meta(p) {
            return;
        }
        out.push(path.clone());
        for (i, k) in pat_children(p).iter().enumerate() {
            path.push(i);
            go(k, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(p, &mut Vec::new(), &mut out);
    out
}

fn pat_at(p: &Pat, path: &[usize]) -> Pat {
    let mut cur = p.clone();
    for &i in path {
        cur = pat_children(&cur)[i].clone();
    }
    cur
}

/// All overlaps between left sides of the given pattern rules.
///
/// Built-in readback rules have no pattern and are not considered. Root
/// overlaps of a rule with itself are trivial and skipped; root overlaps of
/// distinct rules are reported once per unordered pair.
pub fn critical_pairs(rules: &[RewriteRule]) -> Vec<CriticalPair> {
    let mut fresh = 0u32;
    let expanded: Vec<(RuleOrigin, Pat, Pat)> = rules
        .iter()
        .filter_map(|r| match &r.kind {
            RuleKind::Pattern { lhs, rhs } => Some((
                r.origin.clone(),
                expand_pat(lhs, &mut fresh),
                expand_pat(rhs, &mut fresh),
            )),
            _ => None,
        })
        .collect();
    let mut out = Vec::new();
    for (i, (oi, li, ri)) in expanded.iter().enumerate() {
        let li = rename_pat(li, "o:");
        let ri = rename_pat(ri, "o:");
        for (j, (oj, lj, rj)) in expanded.iter().enumerate() {
            let lj = rename_pat(lj, "i:");
            let rj = rename_pat(rj, "i:");
            for pos in nonvar_positions(&li) {
                if pos.is_empty() && (i == j || i > j) {
                    continue;
                }
                let subterm = pat_at(&li, &pos);
                let mut s = PSubst::new();
                if punify(&subterm, &lj, &mut s) {
                    let peak = presolve(&li, &s);
                    let right_reduct = presolve(&ri, &s);
                    let left_reduct = presolve(&pat_replace(&li, &pos, rj.clone()), &s);
                    out.push(CriticalPair {
                        outer: oi.clone(),
                        inner: oj.clone(),
                        pos,
                        peak,
                        left_reduct,
                        right_reduct,
                    });
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Pattern display
// ---------------------------------------------------------------------------

impl fmt::Display for Pat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn ctx(p: &PatCtx, out: &mut String) {
            match p {
                PatCtx::Meta(m) => {
                    out.push('?');
                    out.push_str(m);
                }
                PatCtx::Empty => out.push('1'),
                PatCtx::Ext(b, t) => {
                    ctx(b, out);
                    out.push('.');
                    ty(t, out);
                }
            }
        }
        fn sub(p: &PatSub, out: &mut String) {
            match p {
                PatSub::Meta(m) => {
                    out.push('?');
                    out.push_str(m);
                }
                PatSub::Comp(a, b) => {
                    if matches!(**a, PatSub::Comp(..)) {
                        out.push('(');
                        sub(a, out);
                        out.push(')');
                    } else {
                        sub(a, out);
                    }
                    out.push_str(" ∘ ");
                    sub(b, out);
                }
                PatSub::Id(c) => {
                    out.push_str("id_{");
                    ctx(c, out);
                    out.push('}');
                }
                PatSub::Bang(c) => {
                    out.push_str("⟨⟩_{");
                    ctx(c, out);
                    out.push('}');
                }
                PatSub::P(t) => {
                    out.push_str("p_{");
                    ty(t, out);
                    out.push('}');
                }
                PatSub::Pair(s, m, _) => {
                    out.push('⟨');
                    sub(s, out);
                    out.push(',');
                    tm(m, out);
                    out.push('⟩');
                }
            }
        }
        fn ty(p: &PatTy, out: &mut String) {
            match p {
                PatTy::Meta(m) => {
                    out.push('?');
                    out.push_str(m);
                }
                PatTy::Subst(t, s) => {
                    ty(t, out);
                    out.push('[');
                    sub(s, out);
                    out.push(']');
                }
                PatTy::Sort(n) => out.push_str(n.as_str()),
            }
        }
        fn tm(p: &PatTm, out: &mut String) {
            match p {
                PatTm::Meta(m) => {
                    out.push('?');
                    out.push_str(m);
                }
                PatTm::Subst(t, s) => {
                    tm(t, out);
                    out.push('[');
                    sub(s, out);
                    out.push(']');
                }
                PatTm::Q(t) => {
                    out.push_str("q_{");
                    ty(t, out);
                    out.push('}');
                }
                PatTm::Op(n) => out.push_str(n.as_str()),
                PatTm::WeakConst { name, .. } => {
                    out.push_str(name.as_str());
                    out.push_str("⟨~⟩");
                }
                PatTm::App { name, args, .. } => {
                    out.push_str(name.as_str());
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        tm(a, out);
                    }
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        match self {
            Pat::Ctx(c) => ctx(c, &mut s),
            Pat::Sub(x) => sub(x, &mut s),
            Pat::Ty(t) => ty(t, &mut s),
            Pat::Tm(t) => tm(t, &mut s),
        }
        f.write_str(&s)
    }
}
