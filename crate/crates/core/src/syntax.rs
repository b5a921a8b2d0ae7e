//! Raw cwf-combinator syntax: the four mutually defined expression classes.
//!
//! Expressions are immutable trees. Every combinator carries its grammar
//! annotation (`id_Γ`, `⟨⟩_Γ`, `p_A`, `q_A`, `⟨γ,a⟩_A`) as an ordinary
//! subtree, so structural equality includes annotations and type inference
//! stays syntax-directed. There are no variables and no binders.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Name of a declared sort, operator, or equation label.
///
/// Names are unique within one signature across all three kinds.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolName(pub String);

impl SymbolName {
    pub fn new(text: impl Into<String>) -> Self {
        SymbolName(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SymbolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for SymbolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<&str> for SymbolName {
    fn from(s: &str) -> Self {
        SymbolName(s.to_string())
    }
}

/// Context expressions: `1` or `Γ.A`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CtxExpr {
    /// The terminal (empty) context `1`.
    Empty,
    /// Context comprehension `Γ.A`.
    Ext(Box<CtxExpr>, Box<TyExpr>),
}

/// Substitution expressions: `γ ∘ δ | id_Γ | ⟨⟩_Γ | p_A | ⟨γ,a⟩_A`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubExpr {
    /// Composition `f ∘ g` (apply `g` first).
    Comp(Box<SubExpr>, Box<SubExpr>),
    /// Identity `id_Γ`.
    Id(Box<CtxExpr>),
    /// The empty substitution `⟨⟩_Γ : Γ → 1`.
    Bang(Box<CtxExpr>),
    /// First projection `p_A : Γ.A → Γ` where `Γ ⊢ A`.
    P(Box<TyExpr>),
    /// Extended substitution `⟨γ,a⟩_A : Δ → Γ.A`.
    Pair(Box<SubExpr>, Box<TmExpr>, Box<TyExpr>),
}

/// Type expressions: `A[γ]` or a declared sort symbol.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TyExpr {
    /// Substitution in types `A[γ]`.
    Subst(Box<TyExpr>, Box<SubExpr>),
    /// A declared sort symbol.
    Sort(SymbolName),
}

/// Term expressions: `a[γ]`, `q_A`, or a declared operator symbol.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TmExpr {
    /// Substitution in terms `a[γ]`.
    Subst(Box<TmExpr>, Box<SubExpr>),
    /// Second projection `q_A ∈ Tm(Γ.A, A[p_A])`.
    Q(Box<TyExpr>),
    /// A declared operator symbol.
    Op(SymbolName),
}

/// A class-tagged expression, for operations generic over the four classes.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Ctx(CtxExpr),
    Sub(SubExpr),
    Ty(TyExpr),
    Tm(TmExpr),
}

/// The syntactic class of an [`Expr`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ExprClass {
    Ctx,
    Sub,
    Ty,
    Tm,
}

impl Expr {
    pub fn class(&self) -> ExprClass {
        match self {
            Expr::Ctx(_) => ExprClass::Ctx,
            Expr::Sub(_) => ExprClass::Sub,
            Expr::Ty(_) => ExprClass::Ty,
            Expr::Tm(_) => ExprClass::Tm,
        }
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

pub fn empty() -> CtxExpr {
    CtxExpr::Empty
}

pub fn ext(base: CtxExpr, ty: TyExpr) -> CtxExpr {
    CtxExpr::Ext(Box::new(base), Box::new(ty))
}

pub fn comp(f: SubExpr, g: SubExpr) -> SubExpr {
    SubExpr::Comp(Box::new(f), Box::new(g))
}

pub fn id(at: CtxExpr) -> SubExpr {
    SubExpr::Id(Box::new(at))
}

pub fn bang(from: CtxExpr) -> SubExpr {
    SubExpr::Bang(Box::new(from))
}

pub fn proj(over: TyExpr) -> SubExpr {
    SubExpr::P(Box::new(over))
}

pub fn pair(sub: SubExpr, tm: TmExpr, at: TyExpr) -> SubExpr {
    SubExpr::Pair(Box::new(sub), Box::new(tm), Box::new(at))
}

pub fn ty_subst(ty: TyExpr, sub: SubExpr) -> TyExpr {
    TyExpr::Subst(Box::new(ty), Box::new(sub))
}

pub fn sort(name: impl Into<String>) -> TyExpr {
    TyExpr::Sort(SymbolName::new(name))
}

pub fn tm_subst(tm: TmExpr, sub: SubExpr) -> TmExpr {
    TmExpr::Subst(Box::new(tm), Box::new(sub))
}

pub fn q(over: TyExpr) -> TmExpr {
    TmExpr::Q(Box::new(over))
}

pub fn op(name: impl Into<String>) -> TmExpr {
    TmExpr::Op(SymbolName::new(name))
}

impl CtxExpr {
    /// Context length: the number of comprehension steps.
    pub fn len(&self) -> usize {
        match self {
            CtxExpr::Empty => 0,
            CtxExpr::Ext(base, _) => base.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, CtxExpr::Empty)
    }

    /// The telescope of entry types, innermost first.
    pub fn entries(&self) -> Vec<&TyExpr> {
        let mut out = Vec::new();
        let mut cur = self;
        while let CtxExpr::Ext(base, ty) = cur {
            out.push(ty.as_ref());
            cur = base;
        }
        out.reverse();
        out
    }
}

// ---------------------------------------------------------------------------
// Structural equality
// ---------------------------------------------------------------------------

/// Structural identity of raw expressions, annotations included.
///
/// This is the relation the derivable equality judgments are quotients of;
/// it refines every conversion relation of the checker.
pub fn struct_eq(x: &Expr, y: &Expr) -> bool {
    x == y
}

// ---------------------------------------------------------------------------
// Measure
// ---------------------------------------------------------------------------

/// Node count and tree height of an expression.
///
/// Counting convention: every constructor contributes one node, but the
/// grammar annotations (`id_Γ`, `⟨⟩_Γ`, `p_A`, `q_A`, the type on `⟨γ,a⟩_A`,
/// and the entry type of `Γ.A`) are opaque — an annotated combinator is a
/// leaf unless it has proper sub-expression children. Under this convention
/// `1` is (1,1), `1.M` is (2,2), and `M[p][p]` is (5,3).
pub fn measure(expr: &Expr) -> (usize, usize) {
    fn go_ctx(c: &CtxExpr) -> (usize, usize) {
        match c {
            CtxExpr::Empty => (1, 1),
            CtxExpr::Ext(base, _) => {
                let (s, d) = go_ctx(base);
                (s + 1, d + 1)
            }
        }
    }
    fn go_sub(s: &SubExpr) -> (usize, usize) {
        match s {
            SubExpr::Comp(f, g) => join(go_sub(f), go_sub(g)),
            SubExpr::Id(_) | SubExpr::Bang(_) | SubExpr::P(_) => (1, 1),
            SubExpr::Pair(sub, tm, _) => join(go_sub(sub), go_tm(tm)),
        }
    }
    fn go_ty(t: &TyExpr) -> (usize, usize) {
        match t {
            TyExpr::Subst(ty, sub) => join(go_ty(ty), go_sub(sub)),
            TyExpr::Sort(_) => (1, 1),
        }
    }
    fn go_tm(t: &TmExpr) -> (usize, usize) {
        match t {
            TmExpr::Subst(tm, sub) => join(go_tm(tm), go_sub(sub)),
            TmExpr::Q(_) | TmExpr::Op(_) => (1, 1),
        }
    }
    fn join(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
        (a.0 + b.0 + 1, a.1.max(b.1) + 1)
    }
    match expr {
        Expr::Ctx(c) => go_ctx(c),
        Expr::Sub(s) => go_sub(s),
        Expr::Ty(t) => go_ty(t),
        Expr::Tm(t) => go_tm(t),
    }
}

/// Total node count over the full tree, annotations included.
///
/// Used where a finite enumeration bound is needed: under [`measure`] the
/// annotations are free, so `q_A` has size 1 for every `A` and size-bounded
/// sets of well-typed terms are infinite.
pub fn total_nodes(expr: &Expr) -> usize {
    1 + children(expr).iter().map(total_nodes).sum::<usize>()
}

// ---------------------------------------------------------------------------
// Traversal
// ---------------------------------------------------------------------------

/// All immediate children, annotations included, in a fixed order.
pub fn children(expr: &Expr) -> Vec<Expr> {
    match expr {
        Expr::Ctx(CtxExpr::Empty) => vec![],
        Expr::Ctx(CtxExpr::Ext(b, t)) => {
            vec![Expr::Ctx((**b).clone()), Expr::Ty((**t).clone())]
        }
        Expr::Sub(SubExpr::Comp(f, g)) => {
            vec![Expr::Sub((**f).clone()), Expr::Sub((**g).clone())]
        }
        Expr::Sub(SubExpr::Id(c)) | Expr::Sub(SubExpr::Bang(c)) => {
            vec![Expr::Ctx((**c).clone())]
        }
        Expr::Sub(SubExpr::P(t)) => vec![Expr::Ty((**t).clone())],
        Expr::Sub(SubExpr::Pair(s, m, t)) => vec![
            Expr::Sub((**s).clone()),
            Expr::Tm((**m).clone()),
            Expr::Ty((**t).clone()),
        ],
        Expr::Ty(TyExpr::Subst(t, s)) => {
            vec![Expr::Ty((**t).clone()), Expr::Sub((**s).clone())]
        }
        Expr::Ty(TyExpr::Sort(_)) => vec![],
        Expr::Tm(TmExpr::Subst(m, s)) => {
            vec![Expr::Tm((**m).clone()), Expr::Sub((**s).clone())]
        }
        Expr::Tm(TmExpr::Q(t)) => vec![Expr::Ty((**t).clone())],
        Expr::Tm(TmExpr::Op(_)) => vec![],
    }
}

/// Rebuild `expr` with new children (must match `children`'s arity/classes).
pub fn rebuild(expr: &Expr, kids: Vec<Expr>) -> Expr {
    let mut it = kids.into_iter();
    let mut next_ctx = || match it.next() {
        Some(Expr::Ctx(c)) => c,
        _ => unreachable!("rebuild: context child expected"),
    };
    match expr {
        Expr::Ctx(CtxExpr::Empty) => Expr::Ctx(CtxExpr::Empty),
        Expr::Ctx(CtxExpr::Ext(..)) => {
            let b = next_ctx();
            match it.next() {
                Some(Expr::Ty(t)) => Expr::Ctx(ext(b, t)),
                _ => unreachable!(),
            }
        }
        Expr::Sub(SubExpr::Comp(..)) => match (it.next(), it.next()) {
            (Some(Expr::Sub(f)), Some(Expr::Sub(g))) => Expr::Sub(comp(f, g)),
            _ => unreachable!(),
        },
        Expr::Sub(SubExpr::Id(_)) => Expr::Sub(id(next_ctx())),
        Expr::Sub(SubExpr::Bang(_)) => Expr::Sub(bang(next_ctx())),
        Expr::Sub(SubExpr::P(_)) => match it.next() {
            Some(Expr::Ty(t)) => Expr::Sub(proj(t)),
            _ => unreachable!(),
        },
        Expr::Sub(SubExpr::Pair(..)) => match (it.next(), it.next(), it.next()) {
            (Some(Expr::Sub(s)), Some(Expr::Tm(m)), Some(Expr::Ty(t))) => {
                Expr::Sub(pair(s, m, t))
            }
            _ => unreachable!(),
        },
        Expr::Ty(TyExpr::Subst(..)) => match (it.next(), it.next()) {
            (Some(Expr::Ty(t)), Some(Expr::Sub(s))) => Expr::Ty(ty_subst(t, s)),
            _ => unreachable!(),
        },
        Expr::Ty(TyExpr::Sort(n)) => Expr::Ty(TyExpr::Sort(n.clone())),
        Expr::Tm(TmExpr::Subst(..)) => match (it.next(), it.next()) {
            (Some(Expr::Tm(m)), Some(Expr::Sub(s))) => Expr::Tm(tm_subst(m, s)),
            _ => unreachable!(),
        },
        Expr::Tm(TmExpr::Q(_)) => match it.next() {
            Some(Expr::Ty(t)) => Expr::Tm(q(t)),
            _ => unreachable!(),
        },
        Expr::Tm(TmExpr::Op(n)) => Expr::Tm(TmExpr::Op(n.clone())),
    }
}

/// Whether `needle` occurs as a subtree of `hay` (annotations included).
pub fn occurs_in(needle: &Expr, hay: &Expr) -> bool {
    if needle == hay {
        return true;
    }
    children(hay).iter().any(|k| occurs_in(needle, k))
}

/// Path to a subterm: child indices from the root, per `children` order.
pub type Path = Vec<usize>;

/// The subterm at `path`, or `None` if the path runs off the tree.
pub fn at_path(expr: &Expr, path: &[usize]) -> Option<Expr> {
    let mut cur = expr.clone();
    for &i in path {
        let kids = children(&cur);
        cur = kids.get(i)?.clone();
    }
    Some(cur)
}

/// Replace the subterm at `path` with `new`.
pub fn replace_at(expr: &Expr, path: &[usize], new: Expr) -> Expr {
    if path.is_empty() {
        return new;
    }
    let mut kids = children(expr);
    let i = path[0];
    kids[i] = replace_at(&kids[i], &path[1..], new);
    rebuild(expr, kids)
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// How to render annotations.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Style {
    /// Full subscripts everywhere; `parse ∘ print` is the identity.
    Canonical,
    /// Paper style: `p`, `q`, `⟨⟩`, and pair annotations are suppressed.
    Compact,
}

fn fmt_ctx(c: &CtxExpr, st: Style, out: &mut String) {
    match c {
        CtxExpr::Empty => out.push('1'),
        CtxExpr::Ext(b, t) => {
            fmt_ctx(b, st, out);
            out.push('.');
            fmt_ty(t, st, out);
        }
    }
}

fn subscript_ctx(c: &CtxExpr, st: Style, out: &mut String) {
    out.push('_');
    if matches!(c, CtxExpr::Empty) {
        out.push('1');
    } else {
        out.push('{');
        fmt_ctx(c, st, out);
        out.push('}');
    }
}

fn subscript_ty(t: &TyExpr, st: Style, out: &mut String) {
    out.push('_');
    if let TyExpr::Sort(n) = t {
        out.push_str(n.as_str());
    } else {
        out.push('{');
        fmt_ty(t, st, out);
        out.push('}');
    }
}

fn fmt_sub(s: &SubExpr, st: Style, out: &mut String) {
    match s {
        SubExpr::Comp(f, g) => {
            // ∘ is printed right-associatively; parenthesize a left Comp.
            if matches!(**f, SubExpr::Comp(..)) {
                out.push('(');
                fmt_sub(f, st, out);
                out.push(')');
            } else {
                fmt_sub(f, st, out);
            }
            out.push_str(" ∘ ");
            fmt_sub(g, st, out);
        }
        SubExpr::Id(c) => {
            out.push_str("id");
            subscript_ctx(c, st, out);
        }
        SubExpr::Bang(c) => {
            out.push_str("⟨⟩");
            if st == Style::Canonical {
                subscript_ctx(c, st, out);
            }
        }
        SubExpr::P(t) => {
            out.push('p');
            if st == Style::Canonical {
                subscript_ty(t, st, out);
            }
        }
        SubExpr::Pair(sub, tm, t) => {
            out.push('⟨');
            fmt_sub(sub, st, out);
            out.push(',');
            fmt_tm(tm, st, out);
            out.push('⟩');
            if st == Style::Canonical {
                subscript_ty(t, st, out);
            }
        }
    }
}

fn fmt_ty(t: &TyExpr, st: Style, out: &mut String) {
    match t {
        TyExpr::Subst(ty, sub) => {
            fmt_ty(ty, st, out);
            out.push('[');
            fmt_sub(sub, st, out);
            out.push(']');
        }
        TyExpr::Sort(n) => out.push_str(n.as_str()),
    }
}

fn fmt_tm(t: &TmExpr, st: Style, out: &mut String) {
    match t {
        TmExpr::Subst(tm, sub) => {
            fmt_tm(tm, st, out);
            out.push('[');
            fmt_sub(sub, st, out);
            out.push(']');
        }
        TmExpr::Q(ty) => {
            out.push('q');
            if st == Style::Canonical {
                subscript_ty(ty, st, out);
            }
        }
        TmExpr::Op(n) => out.push_str(n.as_str()),
    }
}

fn render(expr: &Expr, st: Style) -> String {
    let mut out = String::new();
    match expr {
        Expr::Ctx(c) => fmt_ctx(c, st, &mut out),
        Expr::Sub(s) => fmt_sub(s, st, &mut out),
        Expr::Ty(t) => fmt_ty(t, st, &mut out),
        Expr::Tm(t) => fmt_tm(t, st, &mut out),
    }
    out
}

/// Canonical notation with full annotation subscripts.
///
/// Injective on structurally distinct expressions; the combinator parser
/// inverts it exactly.
pub fn print_expr(expr: &Expr) -> String {
    render(expr, Style::Canonical)
}

/// Paper-style display: annotations on `p`, `q`, `⟨⟩`, and pairs suppressed.
pub fn print_compact(expr: &Expr) -> String {
    render(expr, Style::Compact)
}

macro_rules! display_via_compact {
    ($t:ty, $wrap:expr) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&print_compact(&$wrap(self.clone())))
            }
        }
        impl fmt::Debug for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&print_expr(&$wrap(self.clone())))
            }
        }
    };
}

display_via_compact!(CtxExpr, Expr::Ctx);
display_via_compact!(SubExpr, Expr::Sub);
display_via_compact!(TyExpr, Expr::Ty);
display_via_compact!(TmExpr, Expr::Tm);

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_compact(self))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> TyExpr {
        sort("M")
    }

    /// 1.M
    fn ctx_1m() -> CtxExpr {
        ext(empty(), m())
    }

    #[test]
    fn struct_eq_distinguishes_annotations() {
        let a = Expr::Ctx(empty());
        assert!(struct_eq(&a, &a.clone()));
        // 1.M vs 1.M[id_1]: convertible, structurally distinct.
        let x = Expr::Ctx(ctx_1m());
        let y = Expr::Ctx(ext(empty(), ty_subst(m(), id(empty()))));
        assert!(!struct_eq(&x, &y));
        // q_M vs q_{M[p_M]}: annotations differ.
        let q1 = Expr::Tm(q(m()));
        let q2 = Expr::Tm(q(ty_subst(m(), proj(m()))));
        assert!(!struct_eq(&q1, &q2));
    }

    #[test]
    fn measure_examples() {
        assert_eq!(measure(&Expr::Ctx(empty())), (1, 1));
        assert_eq!(measure(&Expr::Ctx(ctx_1m())), (2, 2));
        // M[p][p]: SortApp, two Subst, two annotated p leaves.
        let mp = ty_subst(m(), proj(m()));
        let mpp = ty_subst(mp.clone(), proj(mp));
        assert_eq!(measure(&Expr::Ty(mpp)), (5, 3));
    }

    #[test]
    fn printing_examples() {
        assert_eq!(print_expr(&Expr::Ctx(ctx_1m())), "1.M");
        assert_eq!(print_expr(&Expr::Sub(id(empty()))), "id_1");
        // ∗[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩] in compact style.
        let c = ctx_1m();
        let inner = pair(bang(c.clone()), tm_subst(op("e"), bang(c.clone())), m());
        let outer = pair(inner, q(m()), ty_subst(m(), proj(m())));
        let lhs = tm_subst(op("*"), outer);
        assert_eq!(print_compact(&Expr::Tm(lhs)), "*[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩]");
    }

    #[test]
    fn paths_round_trip() {
        let c = ctx_1m();
        let e = Expr::Sub(pair(bang(c.clone()), q(m()), m()));
        let sub = at_path(&e, &[1]).unwrap();
        assert_eq!(sub, Expr::Tm(q(m())));
        let e2 = replace_at(&e, &[1], Expr::Tm(op("e")));
        assert_eq!(e2, Expr::Sub(pair(bang(c), op("e"), m())));
    }
}
