//! Finite set-based models: a cwf of finite environment sets together with
//! tables interpreting each declared sort and operator, and the partial
//! interpretation of raw syntax into such a model.
//!
//! Contexts are extensional lists of environments (tuples of atoms), types
//! are fiber tables, substitutions are index maps, terms are sections.
//! Everything is finite, so equality is decidable and equation checking is
//! exhaustive.

use crate::checker::Judgment;
use crate::readback;
use crate::signature::{Declaration, Signature};
use crate::syntax::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Opaque atom. Small integers under the hood.
pub type Value = u32;

/// One environment: a tuple of values, ordered by context extension.
pub type Env = Vec<Value>;

/// A semantic context: its finite set of environments, in a fixed order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SemCtx {
    pub envs: Vec<Env>,
}

impl SemCtx {
    pub fn terminal() -> Self {
        SemCtx { envs: vec![vec![]] }
    }

    fn index_of(&self, env: &Env) -> Option<usize> {
        self.envs.iter().position(|e| e == env)
    }
}

/// A type over a context: a fiber of values per environment, aligned with
/// the context's environment order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SemTy {
    pub ctx: SemCtx,
    pub fibers: Vec<Vec<Value>>,
}

/// A substitution: an environment map, as target indices per source
/// environment.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SemSub {
    pub src: SemCtx,
    pub tgt: SemCtx,
    pub map: Vec<usize>,
}

/// A term of some type: one fiber value per environment.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SemTm {
    pub ctx: SemCtx,
    pub values: Vec<Value>,
}

/// Class-tagged semantic value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SemValue {
    Ctx(SemCtx),
    Sub(SemSub),
    Ty(SemTy),
    Tm(SemTm),
}

#[derive(Debug, Error)]
pub enum SemError {
    #[error("interpretation undefined at `{expr}`: {reason}")]
    Undefined { expr: Expr, reason: String },
    #[error("model does not fit the signature: {0}")]
    ShapeMismatch(String),
}

fn undef<T>(expr: Expr, reason: impl Into<String>) -> Result<T, SemError> {
    Err(SemError::Undefined {
        expr,
        reason: reason.into(),
    })
}

// ---------------------------------------------------------------------------
// The cwf operations on finite data
// ---------------------------------------------------------------------------

/// `Γ.A`: dependent pairs `(ρ, v)` with `v` in `A`'s fiber over `ρ`.
pub fn comprehension(ctx: &SemCtx, ty: &SemTy) -> SemCtx {
    let mut envs = Vec::new();
    for (i, env) in ctx.envs.iter().enumerate() {
        for v in &ty.fibers[i] {
            let mut e = env.clone();
            e.push(*v);
            envs.push(e);
        }
    }
    SemCtx { envs }
}

/// First projection of a comprehension.
pub fn proj_p(ctx: &SemCtx, ty: &SemTy) -> SemSub {
    let comp = comprehension(ctx, ty);
    let mut map = Vec::with_capacity(comp.envs.len());
    for (i, _) in ctx.envs.iter().enumerate() {
        for _ in &ty.fibers[i] {
            map.push(i);
        }
    }
    SemSub {
        src: comp,
        tgt: ctx.clone(),
        map,
    }
}

/// Second projection of a comprehension.
pub fn proj_q(ctx: &SemCtx, ty: &SemTy) -> SemTm {
    let comp = comprehension(ctx, ty);
    let values = comp.envs.iter().map(|e| *e.last().unwrap()).collect();
    SemTm { ctx: comp, values }
}

/// `⟨γ, a⟩` into the comprehension of `(tgt γ, A)`.
pub fn pairing(sub: &SemSub, tm: &SemTm, ty: &SemTy) -> Option<SemSub> {
    let comp = comprehension(&sub.tgt, ty);
    let mut map = Vec::with_capacity(sub.src.envs.len());
    for (i, ti) in sub.map.iter().enumerate() {
        let mut env = sub.tgt.envs[*ti].clone();
        env.push(tm.values[i]);
        map.push(comp.index_of(&env)?);
    }
    Some(SemSub {
        src: sub.src.clone(),
        tgt: comp,
        map,
    })
}

/// Reindex a type along a substitution.
pub fn subst_ty(ty: &SemTy, sub: &SemSub) -> SemTy {
    SemTy {
        ctx: sub.src.clone(),
        fibers: sub.map.iter().map(|i| ty.fibers[*i].clone()).collect(),
    }
}

/// Reindex a term along a substitution.
pub fn subst_tm(tm: &SemTm, sub: &SemSub) -> SemTm {
    SemTm {
        ctx: sub.src.clone(),
        values: sub.map.iter().map(|i| tm.values[*i]).collect(),
    }
}

/// Compose `f ∘ g` (apply `g` first).
pub fn compose(f: &SemSub, g: &SemSub) -> SemSub {
    SemSub {
        src: g.src.clone(),
        tgt: f.tgt.clone(),
        map: g.map.iter().map(|i| f.map[*i]).collect(),
    }
}

pub fn identity(ctx: &SemCtx) -> SemSub {
    SemSub {
        src: ctx.clone(),
        tgt: ctx.clone(),
        map: (0..ctx.envs.len()).collect(),
    }
}

pub fn terminal_map(ctx: &SemCtx) -> SemSub {
    SemSub {
        src: ctx.clone(),
        tgt: SemCtx::terminal(),
        map: vec![0; ctx.envs.len()],
    }
}

// ---------------------------------------------------------------------------
// Models: a signature's sorts and operators as tables
// ---------------------------------------------------------------------------

/// Raw sort table: fiber per environment of the declared context.
pub type SortTable = Vec<(Env, Vec<Value>)>;
/// Raw operator table: result value per environment.
pub type OpTable = Vec<(Env, Value)>;

/// A finite cwf with a Σ-structure.
#[derive(Clone, Debug, Default)]
pub struct Model {
    pub name: String,
    sorts: HashMap<SymbolName, SortTable>,
    ops: HashMap<SymbolName, OpTable>,
}

fn lookup_env<'t, T>(table: &'t [(Env, T)], env: &Env) -> Option<&'t T> {
    table.iter().find(|(e, _)| e == env).map(|(_, v)| v)
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Model {
            name: name.into(),
            sorts: HashMap::new(),
            ops: HashMap::new(),
        }
    }

    pub fn with_sort(mut self, name: impl Into<String>, table: SortTable) -> Self {
        self.sorts.insert(SymbolName::new(name), table);
        self
    }

    pub fn with_op(mut self, name: impl Into<String>, table: OpTable) -> Self {
        self.ops.insert(SymbolName::new(name), table);
        self
    }

    /// Check the tables fit the declarations: every sort and operator is
    /// covered, each table covers the interpreted declared context, and
    /// operator values land in their fibers.
    pub fn validate(&self, sig: &Signature) -> Result<(), SemError> {
        for decl in sig.decls() {
            match decl {
                Declaration::Sort { name, ctx } => {
                    let sem_ctx = interp_ctx(sig, self, ctx)?;
                    let Some(table) = self.sorts.get(name) else {
                        return Err(SemError::ShapeMismatch(format!(
                            "no table for sort `{name}`"
                        )));
                    };
                    for env in &sem_ctx.envs {
                        if lookup_env(table, env).is_none() {
                            return Err(SemError::ShapeMismatch(format!(
                                "sort `{name}` has no fiber for environment {env:?}"
                            )));
                        }
                    }
                }
                Declaration::Operator { name, ctx, ty } => {
                    let sem_ctx = interp_ctx(sig, self, ctx)?;
                    let sem_ty = interp_ty(sig, self, ty)?;
                    let Some(table) = self.ops.get(name) else {
                        return Err(SemError::ShapeMismatch(format!(
                            "no table for operator `{name}`"
                        )));
                    };
                    for (i, env) in sem_ctx.envs.iter().enumerate() {
                        let Some(v) = lookup_env(table, env) else {
                            return Err(SemError::ShapeMismatch(format!(
                                "operator `{name}` has no value for environment {env:?}"
                            )));
                        };
                        if !sem_ty.fibers[i].contains(v) {
                            return Err(SemError::ShapeMismatch(format!(
                                "operator `{name}` maps {env:?} to {v}, outside its fiber"
                            )));
                        }
                    }
                }
                Declaration::Equation { .. } => {}
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Interpretation
// ---------------------------------------------------------------------------

/// The interpretation morphism as a partial function on raw syntax.
///
/// Defined by induction on the expression; undefined exactly where the
/// induction cannot proceed, which on checked input never happens.
pub fn interpret(sig: &Signature, model: &Model, expr: &Expr) -> Result<SemValue, SemError> {
    match expr {
        Expr::Ctx(c) => interp_ctx(sig, model, c).map(SemValue::Ctx),
        Expr::Sub(s) => interp_sub(sig, model, s).map(SemValue::Sub),
        Expr::Ty(t) => interp_ty(sig, model, t).map(SemValue::Ty),
        Expr::Tm(t) => interp_tm(sig, model, t).map(SemValue::Tm),
    }
}

pub fn interp_ctx(sig: &Signature, model: &Model, c: &CtxExpr) -> Result<SemCtx, SemError> {
    match c {
        CtxExpr::Empty => Ok(SemCtx::terminal()),
        CtxExpr::Ext(base, ty) => {
            let b = interp_ctx(sig, model, base)?;
            let t = interp_ty(sig, model, ty)?;
            if t.ctx != b {
                return undef(Expr::Ctx(c.clone()), "entry type lives over another context");
            }
            Ok(comprehension(&b, &t))
        }
    }
}

pub fn interp_ty(sig: &Signature, model: &Model, t: &TyExpr) -> Result<SemTy, SemError> {
    match t {
        TyExpr::Sort(name) => {
            let Some(decl_ctx) = sig.lookup_sort(name) else {
                return undef(Expr::Ty(t.clone()), "sort not declared");
            };
            let decl_ctx = decl_ctx.clone();
            let ctx = interp_ctx(sig, model, &decl_ctx)?;
            let Some(table) = model.sorts.get(name) else {
                return undef(Expr::Ty(t.clone()), "no sort table in the model");
            };
            let mut fibers = Vec::with_capacity(ctx.envs.len());
            for env in &ctx.envs {
                match lookup_env(table, env) {
                    Some(f) => fibers.push(f.clone()),
                    None => {
                        return undef(
                            Expr::Ty(t.clone()),
                            format!("no fiber for environment {env:?}"),
                        )
                    }
                }
            }
            Ok(SemTy { ctx, fibers })
        }
        TyExpr::Subst(inner, sub) => {
            let a = interp_ty(sig, model, inner)?;
            let s = interp_sub(sig, model, sub)?;
            if s.tgt != a.ctx {
                return undef(Expr::Ty(t.clone()), "substitution target mismatch");
            }
            Ok(subst_ty(&a, &s))
        }
    }
}

pub fn interp_sub(sig: &Signature, model: &Model, s: &SubExpr) -> Result<SemSub, SemError> {
    match s {
        SubExpr::Id(c) => Ok(identity(&interp_ctx(sig, model, c)?)),
        SubExpr::Bang(c) => Ok(terminal_map(&interp_ctx(sig, model, c)?)),
        SubExpr::Comp(f, g) => {
            let sf = interp_sub(sig, model, f)?;
            let sg = interp_sub(sig, model, g)?;
            if sg.tgt != sf.src {
                return undef(Expr::Sub(s.clone()), "composition shapes do not meet");
            }
            Ok(compose(&sf, &sg))
        }
        SubExpr::P(over) => {
            let base = readback::ctx_of_ty(sig, over).map_err(|e| SemError::Undefined {
                expr: Expr::Sub(s.clone()),
                reason: format!("unknown symbol `{}`", e.0),
            })?;
            let ctx = interp_ctx(sig, model, &base)?;
            let ty = interp_ty(sig, model, over)?;
            if ty.ctx != ctx {
                return undef(Expr::Sub(s.clone()), "projection type context mismatch");
            }
            Ok(proj_p(&ctx, &ty))
        }
        SubExpr::Pair(g0, a, at) => {
            let sg = interp_sub(sig, model, g0)?;
            let sa = interp_tm(sig, model, a)?;
            let ty = interp_ty(sig, model, at)?;
            if sa.ctx != sg.src || ty.ctx != sg.tgt {
                return undef(Expr::Sub(s.clone()), "pairing shapes do not meet");
            }
            let reindexed = subst_ty(&ty, &sg);
            for (i, v) in sa.values.iter().enumerate() {
                if !reindexed.fibers[i].contains(v) {
                    return undef(
                        Expr::Sub(s.clone()),
                        format!("component value {v} outside its fiber"),
                    );
                }
            }
            pairing(&sg, &sa, &ty).ok_or_else(|| SemError::Undefined {
                expr: Expr::Sub(s.clone()),
                reason: "extended environment not found".into(),
            })
        }
    }
}

pub fn interp_tm(sig: &Signature, model: &Model, t: &TmExpr) -> Result<SemTm, SemError> {
    match t {
        TmExpr::Op(name) => {
            let Some((decl_ctx, _)) = sig.lookup_operator(name) else {
                return undef(Expr::Tm(t.clone()), "operator not declared");
            };
            let decl_ctx = decl_ctx.clone();
            let ctx = interp_ctx(sig, model, &decl_ctx)?;
            let Some(table) = model.ops.get(name) else {
                return undef(Expr::Tm(t.clone()), "no operator table in the model");
            };
            let mut values = Vec::with_capacity(ctx.envs.len());
            for env in &ctx.envs {
                match lookup_env(table, env) {
                    Some(v) => values.push(*v),
                    None => {
                        return undef(
                            Expr::Tm(t.clone()),
                            format!("no value for environment {env:?}"),
                        )
                    }
                }
            }
            Ok(SemTm { ctx, values })
        }
        TmExpr::Q(over) => {
            let base = readback::ctx_of_ty(sig, over).map_err(|e| SemError::Undefined {
                expr: Expr::Tm(t.clone()),
                reason: format!("unknown symbol `{}`", e.0),
            })?;
            let ctx = interp_ctx(sig, model, &base)?;
            let ty = interp_ty(sig, model, over)?;
            if ty.ctx != ctx {
                return undef(Expr::Tm(t.clone()), "projection type context mismatch");
            }
            Ok(proj_q(&ctx, &ty))
        }
        TmExpr::Subst(inner, sub) => {
            let a = interp_tm(sig, model, inner)?;
            let s = interp_sub(sig, model, sub)?;
            if s.tgt != a.ctx {
                return undef(Expr::Tm(t.clone()), "substitution target mismatch");
            }
            Ok(subst_tm(&a, &s))
        }
    }
}

// ---------------------------------------------------------------------------
// Equation checking and soundness
// ---------------------------------------------------------------------------

/// Result of checking one equation in a model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquationReport {
    pub label: SymbolName,
    pub holds: bool,
    /// A witnessing environment when the equation fails.
    pub witness: Option<Env>,
}

/// Result of checking a whole model.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModelReport {
    pub equations: Vec<EquationReport>,
}

impl ModelReport {
    pub fn all_hold(&self) -> bool {
        self.equations.iter().all(|e| e.holds)
    }
}

impl fmt::Display for ModelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let held = self.equations.iter().filter(|e| e.holds).count();
        writeln!(f, "{}/{} equations hold", held, self.equations.len())?;
        for e in &self.equations {
            if e.holds {
                writeln!(f, "  ok   {}", e.label)?;
            } else {
                writeln!(f, "  FAIL {} (witness {:?})", e.label, e.witness)?;
            }
        }
        Ok(())
    }
}

/// Interpret both sides of every equation and compare pointwise over all
/// environments.
pub fn check_model(sig: &Signature, model: &Model) -> Result<ModelReport, SemError> {
    model.validate(sig)?;
    let mut report = ModelReport::default();
    for decl in sig.decls() {
        let Declaration::Equation {
            label,
            ctx,
            lhs,
            rhs,
            ..
        } = decl
        else {
            continue;
        };
        let sem_ctx = interp_ctx(sig, model, ctx)?;
        let l = interp_tm(sig, model, lhs)?;
        let r = interp_tm(sig, model, rhs)?;
        let mut witness = None;
        for (i, env) in sem_ctx.envs.iter().enumerate() {
            if l.values.get(i) != r.values.get(i) {
                witness = Some(env.clone());
                break;
            }
        }
        report.equations.push(EquationReport {
            label: label.clone(),
            holds: witness.is_none(),
            witness,
        });
    }
    Ok(report)
}

/// If the judgment is an equality, both sides must interpret to identical
/// tables. A failure indicates a kernel bug, never a model bug.
pub fn soundness_test(
    sig: &Signature,
    model: &Model,
    conclusion: &Judgment,
) -> Result<bool, SemError> {
    let (a, b) = match conclusion {
        Judgment::CtxEq(a, b) => (Expr::Ctx(a.clone()), Expr::Ctx(b.clone())),
        Judgment::TyEq(_, a, b) => (Expr::Ty(a.clone()), Expr::Ty(b.clone())),
        Judgment::SubEq(_, a, b, _) => (Expr::Sub(a.clone()), Expr::Sub(b.clone())),
        Judgment::TmEq(_, a, b, _) => (Expr::Tm(a.clone()), Expr::Tm(b.clone())),
        _ => return Ok(true),
    };
    Ok(interpret(sig, model, &a)? == interpret(sig, model, &b)?)
}

/// One failed strict-morphism law.
#[derive(Clone, Debug)]
pub struct PreservationFailure {
    pub expr: Expr,
    pub law: String,
}

/// Check that interpretation commutes with the cwf operations on the given
/// (well-typed) expressions, against independently constructed tables,
/// including both universal-property equations of comprehension and
/// uniqueness into the terminal context.
pub fn preservation_test(
    sig: &Signature,
    model: &Model,
    exprs: &[Expr],
) -> Result<Vec<PreservationFailure>, SemError> {
    let mut failures = Vec::new();
    for expr in exprs {
        let fail = |law: &str| PreservationFailure {
            expr: expr.clone(),
            law: law.to_string(),
        };
        match expr {
            Expr::Ctx(CtxExpr::Ext(base, ty)) => {
                let whole = interp_ctx(sig, model, &CtxExpr::Ext(base.clone(), ty.clone()))?;
                let b = interp_ctx(sig, model, base)?;
                let t = interp_ty(sig, model, ty)?;
                if whole != comprehension(&b, &t) {
                    failures.push(fail("F(Γ.A) = F(Γ).F(A)"));
                }
            }
            Expr::Ty(TyExpr::Subst(a, s)) => {
                let whole = interp_ty(sig, model, &ty_subst((**a).clone(), (**s).clone()))?;
                let sa = interp_ty(sig, model, a)?;
                let ss = interp_sub(sig, model, s)?;
                if whole != subst_ty(&sa, &ss) {
                    failures.push(fail("F(A[γ]) = F(A)[F(γ)]"));
                }
            }
            Expr::Tm(TmExpr::Subst(a, s)) => {
                let whole = interp_tm(sig, model, &tm_subst((**a).clone(), (**s).clone()))?;
                let sa = interp_tm(sig, model, a)?;
                let ss = interp_sub(sig, model, s)?;
                if whole != subst_tm(&sa, &ss) {
                    failures.push(fail("F(a[γ]) = F(a)[F(γ)]"));
                }
            }
            Expr::Sub(sub) => {
                let whole = interp_sub(sig, model, sub)?;
                match sub {
                    SubExpr::Id(c) => {
                        let sc = interp_ctx(sig, model, c)?;
                        if whole != identity(&sc) {
                            failures.push(fail("F(id) = id"));
                        }
                    }
                    SubExpr::Comp(f, g) => {
                        let sf = interp_sub(sig, model, f)?;
                        let sg = interp_sub(sig, model, g)?;
                        if whole != compose(&sf, &sg) {
                            failures.push(fail("F(γ∘δ) = F(γ)∘F(δ)"));
                        }
                    }
                    SubExpr::Bang(c) => {
                        let sc = interp_ctx(sig, model, c)?;
                        if whole != terminal_map(&sc) {
                            failures.push(fail("F(⟨⟩) = ⟨⟩"));
                        }
                    }
                    SubExpr::Pair(g0, a, at) => {
                        let sg = interp_sub(sig, model, g0)?;
                        let sa = interp_tm(sig, model, a)?;
                        let st = interp_ty(sig, model, at)?;
                        match pairing(&sg, &sa, &st) {
                            Some(p) if p == whole => {
                                let pp = proj_p(&sg.tgt, &st);
                                if compose(&pp, &p) != sg {
                                    failures.push(fail("p∘⟨γ,a⟩ = γ"));
                                }
                                let qq = proj_q(&sg.tgt, &st);
                                if subst_tm(&qq, &p) != sa {
                                    failures.push(fail("q[⟨γ,a⟩] = a"));
                                }
                            }
                            _ => failures.push(fail("F(⟨γ,a⟩) = ⟨F(γ),F(a)⟩")),
                        }
                    }
                    SubExpr::P(_) => {}
                }
                if whole.tgt == SemCtx::terminal() && whole != terminal_map(&whole.src) {
                    failures.push(fail("uniqueness of ⟨⟩"));
                }
            }
            _ => {}
        }
    }
    Ok(failures)
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SortEntry {
    env: Env,
    fiber: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
struct OpEntry {
    env: Env,
    value: Value,
}

/// On-disk model format: sort fibers as value lists per environment,
/// operators as result tables.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    sorts: HashMap<String, Vec<SortEntry>>,
    operators: HashMap<String, Vec<OpEntry>>,
}

impl ModelFile {
    pub fn to_model(&self) -> Model {
        let mut m = Model::new(self.name.clone());
        for (name, entries) in &self.sorts {
            m.sorts.insert(
                SymbolName::new(name.clone()),
                entries
                    .iter()
                    .map(|e| (e.env.clone(), e.fiber.clone()))
                    .collect(),
            );
        }
        for (name, entries) in &self.operators {
            m.ops.insert(
                SymbolName::new(name.clone()),
                entries.iter().map(|e| (e.env.clone(), e.value)).collect(),
            );
        }
        m
    }

    pub fn from_model(m: &Model) -> Self {
        ModelFile {
            name: m.name.clone(),
            sorts: m
                .sorts
                .iter()
                .map(|(k, v)| {
                    (
                        k.to_string(),
                        v.iter()
                            .map(|(env, fiber)| SortEntry {
                                env: env.clone(),
                                fiber: fiber.clone(),
                            })
                            .collect(),
                    )
                })
                .collect(),
            operators: m
                .ops
                .iter()
                .map(|(k, v)| {
                    (
                        k.to_string(),
                        v.iter()
                            .map(|(env, value)| OpEntry {
                                env: env.clone(),
                                value: *value,
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }
}

/// Load a model from JSON and shape-check it against the signature.
pub fn load_model(sig: &Signature, json: &str) -> Result<Model, SemError> {
    let file: ModelFile = serde_json::from_str(json)
        .map_err(|e| SemError::ShapeMismatch(format!("model file: {e}")))?;
    let model = file.to_model();
    model.validate(sig)?;
    Ok(model)
}

/// Serialize a model to JSON.
pub fn save_model(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes")
}
