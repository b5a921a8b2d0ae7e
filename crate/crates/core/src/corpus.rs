//! Built-in example theories and models: the monoid, category, internal
//! cwf, and internal cwf with Π, N, and a first universe, together with
//! small finite models for the algebraic ones.
//!
//! Each example carries its surface declarations (also shipped as `.gat`
//! files), the validated signature, models, a few golden judgments, and
//! the audited symbol counts.

use crate::checker::Judgment;
use crate::semantics::Model;
use crate::signature::{Declaration, Orientation, Signature};
use crate::surface::{build_signature, SurfaceDecl, SurfaceTerm, Telescope};
use crate::syntax::*;
use thiserror::Error;

/// A registered worked example.
pub struct NamedExample {
    pub name: &'static str,
    pub description: &'static str,
    pub decls: Vec<SurfaceDecl>,
    pub signature: Signature,
    pub models: Vec<Model>,
    /// Judgments the example is expected to satisfy, including hand-frozen
    /// combinator forms.
    pub golden: Vec<Judgment>,
    /// Audited (sorts, operators, equations) counts.
    pub counts: (usize, usize, usize),
}

#[derive(Debug, Error)]
#[error("unknown example `{0}`")]
pub struct UnknownExample(pub String);

/// Names of all registered examples.
pub fn list() -> Vec<&'static str> {
    vec!["monoid", "category", "internal-cwf", "cwf-pi-n-u0"]
}

/// Build and validate one example.
pub fn build(name: &str) -> Result<NamedExample, UnknownExample> {
    match name {
        "monoid" => Ok(monoid()),
        "category" => Ok(category()),
        "internal-cwf" => Ok(internal_cwf()),
        "cwf-pi-n-u0" => Ok(cwf_pi_n_u0()),
        other => Err(UnknownExample(other.to_string())),
    }
}

// -- surface construction helpers -------------------------------------------

fn sv(h: &str) -> SurfaceTerm {
    SurfaceTerm::var(h)
}

fn sa(h: &str, args: &[SurfaceTerm]) -> SurfaceTerm {
    SurfaceTerm::app(h, args.to_vec())
}

fn tel(bindings: &[(&str, SurfaceTerm)]) -> Telescope {
    bindings
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect()
}

fn d_sort(name: &str, telescope: Telescope) -> SurfaceDecl {
    SurfaceDecl::Sort {
        name: name.to_string(),
        telescope,
    }
}

fn d_op(name: &str, telescope: Telescope, ty: SurfaceTerm) -> SurfaceDecl {
    SurfaceDecl::Op {
        name: name.to_string(),
        telescope,
        ty,
    }
}

fn d_eq(
    label: &str,
    telescope: Telescope,
    lhs: SurfaceTerm,
    rhs: SurfaceTerm,
    ty: SurfaceTerm,
    orient: Orientation,
) -> SurfaceDecl {
    SurfaceDecl::Eq {
        label: label.to_string(),
        telescope,
        lhs,
        rhs,
        ty,
        orient,
    }
}

fn finish(
    name: &'static str,
    description: &'static str,
    decls: Vec<SurfaceDecl>,
    models: Vec<Model>,
    golden: Vec<Judgment>,
) -> NamedExample {
    let (_, signature) =
        build_signature(&decls).unwrap_or_else(|e| panic!("example `{name}` is broken: {e}"));
    let counts = audit_counts(&signature);
    NamedExample {
        name,
        description,
        decls,
        signature,
        models,
        golden,
        counts,
    }
}

fn audit_counts(sig: &Signature) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for d in sig.decls() {
        match d {
            Declaration::Sort { .. } => c.0 += 1,
            Declaration::Operator { .. } => c.1 += 1,
            Declaration::Equation { .. } => c.2 += 1,
        }
    }
    c
}

// ---------------------------------------------------------------------------
// Monoid
// ---------------------------------------------------------------------------

/// One sort, two operators, and the identity and associativity laws.
pub fn monoid_decls() -> Vec<SurfaceDecl> {
    let m = sv("M");
    vec![
        SurfaceDecl::Theory {
            name: "monoid".into(),
        },
        d_sort("M", vec![]),
        d_op("e", vec![], m.clone()),
        d_op("mul", tel(&[("x", m.clone()), ("y", m.clone())]), m.clone()),
        d_eq(
            "lunit",
            tel(&[("y", m.clone())]),
            sa("mul", &[sv("e"), sv("y")]),
            sv("y"),
            m.clone(),
            Orientation::LeftToRight,
        ),
        d_eq(
            "runit",
            tel(&[("x", m.clone())]),
            sa("mul", &[sv("x"), sv("e")]),
            sv("x"),
            m.clone(),
            Orientation::LeftToRight,
        ),
        d_eq(
            "assoc",
            tel(&[("x", m.clone()), ("y", m.clone()), ("z", m.clone())]),
            sa("mul", &[sa("mul", &[sv("x"), sv("y")]), sv("z")]),
            sa("mul", &[sv("x"), sa("mul", &[sv("y"), sv("z")])]),
            m,
            Orientation::LeftToRight,
        ),
    ]
}

/// The two-element monoid under exclusive or.
pub fn z2_model() -> Model {
    Model::new("z2")
        .with_sort("M", vec![(vec![], vec![0, 1])])
        .with_op("e", vec![(vec![], 0)])
        .with_op("mul", {
            let mut t = Vec::new();
            for x in 0..2u32 {
                for y in 0..2u32 {
                    t.push((vec![x, y], x ^ y));
                }
            }
            t
        })
}

/// The three-element monoid under addition mod 3.
pub fn z3_model() -> Model {
    Model::new("z3")
        .with_sort("M", vec![(vec![], vec![0, 1, 2])])
        .with_op("e", vec![(vec![], 0)])
        .with_op("mul", {
            let mut t = Vec::new();
            for x in 0..3u32 {
                for y in 0..3u32 {
                    t.push((vec![x, y], (x + y) % 3));
                }
            }
            t
        })
}

/// A deliberately broken ℤ₂ model: composition constantly 1, so the left
/// identity law fails at the witness 0.
pub fn broken_z2_model() -> Model {
    Model::new("broken-z2")
        .with_sort("M", vec![(vec![], vec![0, 1])])
        .with_op("e", vec![(vec![], 0)])
        .with_op("mul", {
            let mut t = Vec::new();
            for x in 0..2u32 {
                for y in 0..2u32 {
                    t.push((vec![x, y], 1));
                }
            }
            t
        })
}

/// The left identity law in the combinator form the initial-model
/// construction derives: `1.M ⊢ ∗[⟨⟨⟨⟩,e[⟨⟩]⟩,q⟩] = q : M[p]`.
pub fn monoid_lunit_combinator() -> Judgment {
    let m = sort("M");
    let c1m = ext(empty(), m.clone());
    let m_wk = ty_subst(m.clone(), proj(m.clone()));
    let inner = pair(
        bang(c1m.clone()),
        tm_subst(op("e"), bang(c1m.clone())),
        m.clone(),
    );
    let outer = pair(inner, q(m.clone()), m_wk.clone());
    Judgment::TmEq(c1m, tm_subst(op("mul"), outer), q(m), m_wk)
}

fn monoid() -> NamedExample {
    finish(
        "monoid",
        "one-sorted theory of monoids: unit, composition, unit laws, associativity",
        monoid_decls(),
        vec![z2_model(), z3_model()],
        vec![monoid_lunit_combinator()],
    )
}

// ---------------------------------------------------------------------------
// Category
// ---------------------------------------------------------------------------

pub fn category_decls() -> Vec<SurfaceDecl> {
    let obj = sv("obj");
    let hom = |a: &SurfaceTerm, b: &SurfaceTerm| sa("hom", &[a.clone(), b.clone()]);
    let comp = |x: &SurfaceTerm, d: &SurfaceTerm, g: &SurfaceTerm, f: &SurfaceTerm, s: &SurfaceTerm| {
        sa("comp", &[x.clone(), d.clone(), g.clone(), f.clone(), s.clone()])
    };
    let (gv, dv, xv, tv) = (sv("G"), sv("D"), sv("X"), sv("T"));
    vec![
        SurfaceDecl::Theory {
            name: "category".into(),
        },
        d_sort("obj", vec![]),
        d_sort("hom", tel(&[("D", obj.clone()), ("G", obj.clone())])),
        d_op("idm", tel(&[("G", obj.clone())]), hom(&gv, &gv)),
        d_op(
            "comp",
            tel(&[
                ("X", obj.clone()),
                ("D", obj.clone()),
                ("G", obj.clone()),
                ("g", hom(&dv, &gv)),
                ("d", hom(&xv, &dv)),
            ]),
            hom(&xv, &gv),
        ),
        d_eq(
            "idl",
            tel(&[("D", obj.clone()), ("G", obj.clone()), ("g", hom(&dv, &gv))]),
            comp(&dv, &gv, &gv, &sa("idm", &[gv.clone()]), &sv("g")),
            sv("g"),
            hom(&dv, &gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "idr",
            tel(&[("D", obj.clone()), ("G", obj.clone()), ("g", hom(&dv, &gv))]),
            comp(&dv, &dv, &gv, &sv("g"), &sa("idm", &[dv.clone()])),
            sv("g"),
            hom(&dv, &gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "assoc",
            tel(&[
                ("T", obj.clone()),
                ("X", obj.clone()),
                ("D", obj.clone()),
                ("G", obj.clone()),
                ("g", hom(&dv, &gv)),
                ("d", hom(&xv, &dv)),
                ("x", hom(&tv, &xv)),
            ]),
            comp(
                &tv,
                &xv,
                &gv,
                &comp(&xv, &dv, &gv, &sv("g"), &sv("d")),
                &sv("x"),
            ),
            comp(
                &tv,
                &dv,
                &gv,
                &sv("g"),
                &comp(&tv, &xv, &dv, &sv("d"), &sv("x")),
            ),
            hom(&tv, &gv),
            Orientation::LeftToRight,
        ),
    ]
}

/// The arrow category `0 → 1`: singleton homs except none from 1 to 0.
pub fn cat2_model() -> Model {
    Model::new("cat2")
        .with_sort("obj", vec![(vec![], vec![0, 1])])
        .with_sort(
            "hom",
            vec![
                (vec![0, 0], vec![0]),
                (vec![0, 1], vec![0]),
                (vec![1, 0], vec![]),
                (vec![1, 1], vec![0]),
            ],
        )
        .with_op("idm", vec![(vec![0], 0), (vec![1], 0)])
        .with_op(
            "comp",
            vec![
                (vec![0, 0, 0, 0, 0], 0),
                (vec![0, 0, 1, 0, 0], 0),
                (vec![0, 1, 1, 0, 0], 0),
                (vec![1, 1, 1, 0, 0], 0),
            ],
        )
}

/// `1.obj.obj[p] ⊢ hom`: the second sort's formation judgment in
/// combinator form.
pub fn category_hom_judgment() -> Judgment {
    let obj = sort("obj");
    let c = ext(
        ext(empty(), obj.clone()),
        ty_subst(obj.clone(), proj(obj)),
    );
    Judgment::Ty(c, sort("hom"))
}

fn category() -> NamedExample {
    finish(
        "category",
        "objects, dependent homs, identity, five-argument composition, category laws",
        category_decls(),
        vec![cat2_model()],
        vec![category_hom_judgment()],
    )
}

// ---------------------------------------------------------------------------
// Internal cwfs
// ---------------------------------------------------------------------------

// Shared shorthands for the cwf theories. Composition and the two
// substitution operators carry their full telescopes; `comp(X,D,G,g,d)`
// is `g ∘ d : hom(X,G)` for `g : hom(D,G)`, `d : hom(X,D)`.

fn i_hom(a: &SurfaceTerm, b: &SurfaceTerm) -> SurfaceTerm {
    sa("hom", &[a.clone(), b.clone()])
}

fn i_ty(g: &SurfaceTerm) -> SurfaceTerm {
    sa("ty", &[g.clone()])
}

fn i_tm(g: &SurfaceTerm, a: &SurfaceTerm) -> SurfaceTerm {
    sa("tm", &[g.clone(), a.clone()])
}

fn i_comp(
    x: &SurfaceTerm,
    d: &SurfaceTerm,
    g: &SurfaceTerm,
    f: &SurfaceTerm,
    s: &SurfaceTerm,
) -> SurfaceTerm {
    sa(
        "comp",
        &[x.clone(), d.clone(), g.clone(), f.clone(), s.clone()],
    )
}

fn i_idm(g: &SurfaceTerm) -> SurfaceTerm {
    sa("idm", &[g.clone()])
}

/// `A[g] : ty(D)` for `A : ty(G)`, `g : hom(D,G)`.
fn i_subt_ty(
    g: &SurfaceTerm,
    d: &SurfaceTerm,
    a: &SurfaceTerm,
    s: &SurfaceTerm,
) -> SurfaceTerm {
    sa("subT", &[g.clone(), d.clone(), a.clone(), s.clone()])
}

/// `a[g] : tm(D, A[g])`.
fn i_subt_tm(
    g: &SurfaceTerm,
    d: &SurfaceTerm,
    a: &SurfaceTerm,
    s: &SurfaceTerm,
    t: &SurfaceTerm,
) -> SurfaceTerm {
    sa(
        "subt",
        &[g.clone(), d.clone(), a.clone(), s.clone(), t.clone()],
    )
}

fn i_ext(g: &SurfaceTerm, a: &SurfaceTerm) -> SurfaceTerm {
    sa("ext", &[g.clone(), a.clone()])
}

fn i_pair(
    g: &SurfaceTerm,
    d: &SurfaceTerm,
    a: &SurfaceTerm,
    s: &SurfaceTerm,
    t: &SurfaceTerm,
) -> SurfaceTerm {
    sa(
        "pair",
        &[g.clone(), d.clone(), a.clone(), s.clone(), t.clone()],
    )
}

fn i_fst(g: &SurfaceTerm, a: &SurfaceTerm) -> SurfaceTerm {
    sa("fst", &[g.clone(), a.clone()])
}

fn i_snd(g: &SurfaceTerm, a: &SurfaceTerm) -> SurfaceTerm {
    sa("snd", &[g.clone(), a.clone()])
}

/// The lifting `g⁺ = ⟨g∘p, q⟩ : hom(ext(D, A[g]), ext(G, A))` of
/// `g : hom(D,G)` along `A : ty(G)`. A corpus-level macro expanded before
/// elaboration.
fn i_lift(g_obj: &SurfaceTerm, d_obj: &SurfaceTerm, a: &SurfaceTerm, g: &SurfaceTerm) -> SurfaceTerm {
    let a_sub = i_subt_ty(g_obj, d_obj, a, g);
    let ext_d = i_ext(d_obj, &a_sub);
    i_pair(
        g_obj,
        &ext_d,
        a,
        &i_comp(&ext_d, d_obj, g_obj, g, &i_fst(d_obj, &a_sub)),
        &i_snd(d_obj, &a_sub),
    )
}

/// The codomain context of `i_lift`: `ext(D, A[g])`.
fn i_lift_src(g_obj: &SurfaceTerm, d_obj: &SurfaceTerm, a: &SurfaceTerm, g: &SurfaceTerm) -> SurfaceTerm {
    i_ext(d_obj, &i_subt_ty(g_obj, d_obj, a, g))
}

/// Sorts, operators, and equations of the internal cwf: a category of
/// internal contexts, a family-valued functor, a terminal object, and
/// context comprehension. Substitution-composition laws are oriented
/// toward fusion and surjective pairing toward the identity, which keeps
/// the other declarations' typing conversions inside the rewriter's reach.
pub fn internal_cwf_decls() -> Vec<SurfaceDecl> {
    let ctx = sv("ctx");
    let (gv, dv, xv, tv) = (sv("G"), sv("D"), sv("X"), sv("T"));
    let av = sv("A");
    let mut out = vec![
        SurfaceDecl::Theory {
            name: "internal-cwf".into(),
        },
        // -- the category of internal contexts
        d_sort("ctx", vec![]),
        d_sort("hom", tel(&[("D", ctx.clone()), ("G", ctx.clone())])),
        d_op("idm", tel(&[("G", ctx.clone())]), i_hom(&gv, &gv)),
        d_op(
            "comp",
            tel(&[
                ("X", ctx.clone()),
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("g", i_hom(&dv, &gv)),
                ("d", i_hom(&xv, &dv)),
            ]),
            i_hom(&xv, &gv),
        ),
        d_eq(
            "idl",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_comp(&dv, &gv, &gv, &i_idm(&gv), &sv("g")),
            sv("g"),
            i_hom(&dv, &gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "idr",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_comp(&dv, &dv, &gv, &sv("g"), &i_idm(&dv)),
            sv("g"),
            i_hom(&dv, &gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "assoc",
            tel(&[
                ("T", ctx.clone()),
                ("X", ctx.clone()),
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("g", i_hom(&dv, &gv)),
                ("d", i_hom(&xv, &dv)),
                ("x", i_hom(&tv, &xv)),
            ]),
            i_comp(
                &tv,
                &xv,
                &gv,
                &i_comp(&xv, &dv, &gv, &sv("g"), &sv("d")),
                &sv("x"),
            ),
            i_comp(
                &tv,
                &dv,
                &gv,
                &sv("g"),
                &i_comp(&tv, &xv, &dv, &sv("d"), &sv("x")),
            ),
            i_hom(&tv, &gv),
            Orientation::LeftToRight,
        ),
        // -- the family-valued functor
        d_sort("ty", tel(&[("G", ctx.clone())])),
        d_sort("tm", tel(&[("G", ctx.clone()), ("A", i_ty(&gv))])),
        d_op(
            "subT",
            tel(&[
                ("G", ctx.clone()),
                ("D", ctx.clone()),
                ("A", i_ty(&gv)),
                ("g", i_hom(&dv, &gv)),
            ]),
            i_ty(&dv),
        ),
        d_op(
            "subt",
            tel(&[
                ("G", ctx.clone()),
                ("D", ctx.clone()),
                ("A", i_ty(&gv)),
                ("g", i_hom(&dv, &gv)),
                ("a", i_tm(&gv, &av)),
            ]),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &av, &sv("g"))),
        ),
        d_eq(
            "subT_id",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv))]),
            i_subt_ty(&gv, &gv, &av, &i_idm(&gv)),
            av.clone(),
            i_ty(&gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "subt_id",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv)), ("a", i_tm(&gv, &av))]),
            i_subt_tm(&gv, &gv, &av, &i_idm(&gv), &sv("a")),
            sv("a"),
            i_tm(&gv, &av),
            Orientation::LeftToRight,
        ),
        d_eq(
            "subT_comp",
            tel(&[
                ("X", ctx.clone()),
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("d", i_hom(&xv, &dv)),
                ("g", i_hom(&dv, &gv)),
                ("A", i_ty(&gv)),
            ]),
            i_subt_ty(&gv, &xv, &av, &i_comp(&xv, &dv, &gv, &sv("g"), &sv("d"))),
            i_subt_ty(&dv, &xv, &i_subt_ty(&gv, &dv, &av, &sv("g")), &sv("d")),
            i_ty(&xv),
            Orientation::RightToLeft,
        ),
        d_eq(
            "subt_comp",
            tel(&[
                ("X", ctx.clone()),
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("d", i_hom(&xv, &dv)),
                ("g", i_hom(&dv, &gv)),
                ("A", i_ty(&gv)),
                ("a", i_tm(&gv, &av)),
            ]),
            i_subt_tm(
                &gv,
                &xv,
                &av,
                &i_comp(&xv, &dv, &gv, &sv("g"), &sv("d")),
                &sv("a"),
            ),
            i_subt_tm(
                &dv,
                &xv,
                &i_subt_ty(&gv, &dv, &av, &sv("g")),
                &sv("d"),
                &i_subt_tm(&gv, &dv, &av, &sv("g"), &sv("a")),
            ),
            i_tm(
                &xv,
                &i_subt_ty(&gv, &xv, &av, &i_comp(&xv, &dv, &gv, &sv("g"), &sv("d"))),
            ),
            Orientation::RightToLeft,
        ),
        // -- the terminal internal context
        d_op("unit", vec![], ctx.clone()),
        d_op(
            "bang",
            tel(&[("G", ctx.clone())]),
            i_hom(&gv, &sv("unit")),
        ),
        d_eq(
            "bang_id",
            vec![],
            i_idm(&sv("unit")),
            sa("bang", &[sv("unit")]),
            i_hom(&sv("unit"), &sv("unit")),
            Orientation::LeftToRight,
        ),
        d_eq(
            "bang_comp",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_comp(&dv, &gv, &sv("unit"), &sa("bang", &[gv.clone()]), &sv("g")),
            sa("bang", &[dv.clone()]),
            i_hom(&dv, &sv("unit")),
            Orientation::LeftToRight,
        ),
        // -- context comprehension
        d_op(
            "ext",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv))]),
            ctx.clone(),
        ),
        d_op(
            "pair",
            tel(&[
                ("G", ctx.clone()),
                ("D", ctx.clone()),
                ("A", i_ty(&gv)),
                ("g", i_hom(&dv, &gv)),
                ("a", i_tm(&dv, &i_subt_ty(&gv, &dv, &av, &sv("g")))),
            ]),
            i_hom(&dv, &i_ext(&gv, &av)),
        ),
        d_op(
            "fst",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv))]),
            i_hom(&i_ext(&gv, &av), &gv),
        ),
        d_op(
            "snd",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv))]),
            i_tm(
                &i_ext(&gv, &av),
                &i_subt_ty(&gv, &i_ext(&gv, &av), &av, &i_fst(&gv, &av)),
            ),
        ),
    ];
    let pair_tel = tel(&[
        ("G", ctx.clone()),
        ("D", ctx.clone()),
        ("A", i_ty(&gv)),
        ("g", i_hom(&dv, &gv)),
        ("a", i_tm(&dv, &i_subt_ty(&gv, &dv, &av, &sv("g")))),
    ]);
    let the_pair = i_pair(&gv, &dv, &av, &sv("g"), &sv("a"));
    out.extend([
        d_eq(
            "fst_pair",
            pair_tel.clone(),
            i_comp(&dv, &i_ext(&gv, &av), &gv, &i_fst(&gv, &av), &the_pair),
            sv("g"),
            i_hom(&dv, &gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "snd_pair",
            pair_tel.clone(),
            i_subt_tm(
                &i_ext(&gv, &av),
                &dv,
                &i_subt_ty(&gv, &i_ext(&gv, &av), &av, &i_fst(&gv, &av)),
                &the_pair,
                &i_snd(&gv, &av),
            ),
            sv("a"),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &av, &sv("g"))),
            Orientation::LeftToRight,
        ),
        d_eq(
            "pair_comp",
            tel(&[
                ("G", ctx.clone()),
                ("D", ctx.clone()),
                ("X", ctx.clone()),
                ("A", i_ty(&gv)),
                ("g", i_hom(&dv, &gv)),
                ("a", i_tm(&dv, &i_subt_ty(&gv, &dv, &av, &sv("g")))),
                ("d", i_hom(&xv, &dv)),
            ]),
            i_comp(&xv, &dv, &i_ext(&gv, &av), &the_pair, &sv("d")),
            i_pair(
                &gv,
                &xv,
                &av,
                &i_comp(&xv, &dv, &gv, &sv("g"), &sv("d")),
                &i_subt_tm(
                    &dv,
                    &xv,
                    &i_subt_ty(&gv, &dv, &av, &sv("g")),
                    &sv("d"),
                    &sv("a"),
                ),
            ),
            i_hom(&xv, &i_ext(&gv, &av)),
            Orientation::LeftToRight,
        ),
        d_eq(
            "surj_pair",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv))]),
            i_idm(&i_ext(&gv, &av)),
            i_pair(
                &gv,
                &i_ext(&gv, &av),
                &av,
                &i_fst(&gv, &av),
                &i_snd(&gv, &av),
            ),
            i_hom(&i_ext(&gv, &av), &i_ext(&gv, &av)),
            Orientation::RightToLeft,
        ),
    ]);
    out
}

fn internal_cwf() -> NamedExample {
    finish(
        "internal-cwf",
        "internal categories with families: category, family functor, terminal object, comprehension",
        internal_cwf_decls(),
        vec![],
        vec![],
    )
}

// ---------------------------------------------------------------------------
// Internal cwfs with Π, N, and U₀
// ---------------------------------------------------------------------------

/// The internal cwf extended with Π-types, natural numbers, and a first
/// universe closed under both.
///
/// The recursor `R` is a reconstruction: its step argument lives in the
/// doubly extended context `Γ.N.C` rather than under internal Π, and only
/// the two computation laws plus the substitution laws for `N`, `zero`,
/// and `suc` are stipulated.
pub fn cwf_pi_n_u0_decls() -> Vec<SurfaceDecl> {
    let ctx = sv("ctx");
    let (gv, dv) = (sv("G"), sv("D"));
    let (av, bv) = (sv("A"), sv("B"));
    let mut out = internal_cwf_decls();
    if let Some(SurfaceDecl::Theory { name }) = out.first_mut() {
        *name = "cwf-pi-n-u0".into();
    }

    // -- Π-types
    let ext_ga = i_ext(&gv, &av);
    out.extend([
        d_op(
            "Pi",
            tel(&[("G", ctx.clone()), ("A", i_ty(&gv)), ("B", i_ty(&ext_ga))]),
            i_ty(&gv),
        ),
        d_op(
            "lam",
            tel(&[
                ("G", ctx.clone()),
                ("A", i_ty(&gv)),
                ("B", i_ty(&ext_ga)),
                ("b", i_tm(&ext_ga, &bv)),
            ]),
            i_tm(&gv, &sa("Pi", &[gv.clone(), av.clone(), bv.clone()])),
        ),
        d_op(
            "app",
            tel(&[
                ("G", ctx.clone()),
                ("A", i_ty(&gv)),
                ("B", i_ty(&ext_ga)),
                ("c", i_tm(&gv, &sa("Pi", &[gv.clone(), av.clone(), bv.clone()]))),
                ("a", i_tm(&gv, &av)),
            ]),
            i_tm(
                &gv,
                &i_subt_ty(
                    &ext_ga,
                    &gv,
                    &bv,
                    &i_pair(&gv, &gv, &av, &i_idm(&gv), &sv("a")),
                ),
            ),
        ),
    ]);

    // Substitution laws first: the β/η declarations need them to check.
    let pi_gab = sa("Pi", &[gv.clone(), av.clone(), bv.clone()]);
    let sub_tel = tel(&[
        ("D", ctx.clone()),
        ("G", ctx.clone()),
        ("g", i_hom(&dv, &gv)),
        ("A", i_ty(&gv)),
        ("B", i_ty(&ext_ga)),
    ]);
    let a_sub = i_subt_ty(&gv, &dv, &av, &sv("g"));
    let b_lift = i_subt_ty(
        &ext_ga,
        &i_lift_src(&gv, &dv, &av, &sv("g")),
        &bv,
        &i_lift(&gv, &dv, &av, &sv("g")),
    );
    out.extend([
        d_eq(
            "pi_sub",
            sub_tel.clone(),
            i_subt_ty(&gv, &dv, &pi_gab, &sv("g")),
            sa("Pi", &[dv.clone(), a_sub.clone(), b_lift.clone()]),
            i_ty(&dv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "lam_sub",
            {
                let mut t = sub_tel.clone();
                t.push(("b".into(), i_tm(&ext_ga, &bv)));
                t
            },
            i_subt_tm(
                &gv,
                &dv,
                &pi_gab,
                &sv("g"),
                &sa("lam", &[gv.clone(), av.clone(), bv.clone(), sv("b")]),
            ),
            sa(
                "lam",
                &[
                    dv.clone(),
                    a_sub.clone(),
                    b_lift.clone(),
                    i_subt_tm(
                        &ext_ga,
                        &i_lift_src(&gv, &dv, &av, &sv("g")),
                        &bv,
                        &i_lift(&gv, &dv, &av, &sv("g")),
                        &sv("b"),
                    ),
                ],
            ),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &pi_gab, &sv("g"))),
            Orientation::LeftToRight,
        ),
        d_eq(
            "app_sub",
            {
                let mut t = sub_tel.clone();
                t.push(("c".into(), i_tm(&gv, &pi_gab)));
                t.push(("a".into(), i_tm(&gv, &av)));
                t
            },
            i_subt_tm(
                &gv,
                &dv,
                &i_subt_ty(
                    &ext_ga,
                    &gv,
                    &bv,
                    &i_pair(&gv, &gv, &av, &i_idm(&gv), &sv("a")),
                ),
                &sv("g"),
                &sa(
                    "app",
                    &[gv.clone(), av.clone(), bv.clone(), sv("c"), sv("a")],
                ),
            ),
            sa(
                "app",
                &[
                    dv.clone(),
                    a_sub.clone(),
                    b_lift.clone(),
                    i_subt_tm(&gv, &dv, &pi_gab, &sv("g"), &sv("c")),
                    i_subt_tm(&gv, &dv, &av, &sv("g"), &sv("a")),
                ],
            ),
            i_tm(
                &dv,
                &i_subt_ty(
                    &gv,
                    &dv,
                    &i_subt_ty(
                        &ext_ga,
                        &gv,
                        &bv,
                        &i_pair(&gv, &gv, &av, &i_idm(&gv), &sv("a")),
                    ),
                    &sv("g"),
                ),
            ),
            Orientation::LeftToRight,
        ),
        d_eq(
            "beta",
            tel(&[
                ("G", ctx.clone()),
                ("A", i_ty(&gv)),
                ("B", i_ty(&ext_ga)),
                ("b", i_tm(&ext_ga, &bv)),
                ("a", i_tm(&gv, &av)),
            ]),
            sa(
                "app",
                &[
                    gv.clone(),
                    av.clone(),
                    bv.clone(),
                    sa("lam", &[gv.clone(), av.clone(), bv.clone(), sv("b")]),
                    sv("a"),
                ],
            ),
            i_subt_tm(
                &ext_ga,
                &gv,
                &bv,
                &i_pair(&gv, &gv, &av, &i_idm(&gv), &sv("a")),
                &sv("b"),
            ),
            i_tm(
                &gv,
                &i_subt_ty(
                    &ext_ga,
                    &gv,
                    &bv,
                    &i_pair(&gv, &gv, &av, &i_idm(&gv), &sv("a")),
                ),
            ),
            Orientation::LeftToRight,
        ),
    ]);

    // η: λ(app(c[p], q)) = c, with the weakened pieces spelled out.
    let p0 = i_fst(&gv, &av);
    let a_wk = i_subt_ty(&gv, &ext_ga, &av, &p0);
    let b_wk = i_subt_ty(
        &ext_ga,
        &i_lift_src(&gv, &ext_ga, &av, &p0),
        &bv,
        &i_lift(&gv, &ext_ga, &av, &p0),
    );
    out.push(d_eq(
        "eta",
        tel(&[
            ("G", ctx.clone()),
            ("A", i_ty(&gv)),
            ("B", i_ty(&ext_ga)),
            ("c", i_tm(&gv, &pi_gab)),
        ]),
        sa(
            "lam",
            &[
                gv.clone(),
                av.clone(),
                bv.clone(),
                sa(
                    "app",
                    &[
                        ext_ga.clone(),
                        a_wk.clone(),
                        b_wk.clone(),
                        i_subt_tm(&gv, &ext_ga, &pi_gab, &p0, &sv("c")),
                        i_snd(&gv, &av),
                    ],
                ),
            ],
        ),
        sv("c"),
        i_tm(&gv, &pi_gab),
        Orientation::LeftToRight,
    ));

    // -- natural numbers
    let n_g = sa("N", &[gv.clone()]);
    let n_d = sa("N", &[dv.clone()]);
    out.extend([
        d_op("N", tel(&[("G", ctx.clone())]), i_ty(&gv)),
        d_op("zero", tel(&[("G", ctx.clone())]), i_tm(&gv, &n_g)),
        d_op(
            "suc",
            tel(&[("G", ctx.clone()), ("n", i_tm(&gv, &n_g))]),
            i_tm(&gv, &n_g),
        ),
        d_eq(
            "n_sub",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_subt_ty(&gv, &dv, &n_g, &sv("g")),
            n_d.clone(),
            i_ty(&dv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "zero_sub",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_subt_tm(&gv, &dv, &n_g, &sv("g"), &sa("zero", &[gv.clone()])),
            sa("zero", &[dv.clone()]),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &n_g, &sv("g"))),
            Orientation::LeftToRight,
        ),
        d_eq(
            "suc_sub",
            tel(&[
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("g", i_hom(&dv, &gv)),
                ("n", i_tm(&gv, &n_g)),
            ]),
            i_subt_tm(
                &gv,
                &dv,
                &n_g,
                &sv("g"),
                &sa("suc", &[gv.clone(), sv("n")]),
            ),
            sa(
                "suc",
                &[dv.clone(), i_subt_tm(&gv, &dv, &n_g, &sv("g"), &sv("n"))],
            ),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &n_g, &sv("g"))),
            Orientation::LeftToRight,
        ),
    ]);

    // The recursor. `gn` is Γ.N, `gnc` is Γ.N.C, `step` is the map
    // Γ.N.C → Γ.N sending (ρ, n, c) to (ρ, suc n).
    let cv = sv("C");
    let gn = i_ext(&gv, &n_g);
    let gnc = i_ext(&gn, &cv);
    let p_n = i_fst(&gv, &n_g);
    let p_c = i_fst(&gn, &cv);
    let n_wk = i_subt_ty(&gv, &gn, &n_g, &p_n);
    let q_n = i_snd(&gv, &n_g);
    let q_n_up = i_subt_tm(&gn, &gnc, &n_wk, &p_c, &q_n);
    let pp = i_comp(&gnc, &gn, &gv, &p_n, &p_c);
    let step = i_pair(
        &gv,
        &gnc,
        &n_g,
        &pp,
        &sa("suc", &[gnc.clone(), q_n_up.clone()]),
    );
    let c_at = |t: &SurfaceTerm| i_subt_ty(&gn, &gv, &cv, &i_pair(&gv, &gv, &n_g, &i_idm(&gv), t));
    let r_tel = tel(&[
        ("G", ctx.clone()),
        ("C", i_ty(&gn)),
        ("z", i_tm(&gv, &c_at(&sa("zero", &[gv.clone()])))),
        ("s", i_tm(&gnc, &i_subt_ty(&gn, &gnc, &cv, &step))),
        ("n", i_tm(&gv, &n_g)),
    ]);
    let r_call = |n: &SurfaceTerm| {
        sa(
            "R",
            &[gv.clone(), cv.clone(), sv("z"), sv("s"), n.clone()],
        )
    };
    out.extend([
        d_op("R", r_tel.clone(), i_tm(&gv, &c_at(&sv("n")))),
        d_eq(
            "r_zero",
            {
                let mut t = r_tel.clone();
                t.pop();
                t
            },
            sa(
                "R",
                &[
                    gv.clone(),
                    cv.clone(),
                    sv("z"),
                    sv("s"),
                    sa("zero", &[gv.clone()]),
                ],
            ),
            sv("z"),
            i_tm(&gv, &c_at(&sa("zero", &[gv.clone()]))),
            Orientation::LeftToRight,
        ),
        d_eq(
            "r_suc",
            r_tel.clone(),
            r_call(&sa("suc", &[gv.clone(), sv("n")])),
            i_subt_tm(
                &gnc,
                &gv,
                &i_subt_ty(&gn, &gnc, &cv, &step),
                &i_pair(
                    &gn,
                    &gv,
                    &cv,
                    &i_pair(&gv, &gv, &n_g, &i_idm(&gv), &sv("n")),
                    &r_call(&sv("n")),
                ),
                &sv("s"),
            ),
            i_tm(&gv, &c_at(&sa("suc", &[gv.clone(), sv("n")]))),
            Orientation::LeftToRight,
        ),
    ]);

    // -- the first universe, closed under Π and N
    let u_g = sa("U0", &[gv.clone()]);
    let u_d = sa("U0", &[dv.clone()]);
    let t0_a = sa("T0", &[gv.clone(), sv("a")]);
    let ext_t0 = i_ext(&gv, &t0_a);
    out.extend([
        d_op("U0", tel(&[("G", ctx.clone())]), i_ty(&gv)),
        d_op(
            "T0",
            tel(&[("G", ctx.clone()), ("a", i_tm(&gv, &u_g))]),
            i_ty(&gv),
        ),
        d_op("N0", tel(&[("G", ctx.clone())]), i_tm(&gv, &u_g)),
        d_op(
            "Pi0",
            tel(&[
                ("G", ctx.clone()),
                ("a", i_tm(&gv, &u_g)),
                ("b", i_tm(&ext_t0, &sa("U0", &[ext_t0.clone()]))),
            ]),
            i_tm(&gv, &u_g),
        ),
        d_eq(
            "u0_sub",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_subt_ty(&gv, &dv, &u_g, &sv("g")),
            u_d.clone(),
            i_ty(&dv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "t0_sub",
            tel(&[
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("g", i_hom(&dv, &gv)),
                ("a", i_tm(&gv, &u_g)),
            ]),
            i_subt_ty(&gv, &dv, &t0_a, &sv("g")),
            sa(
                "T0",
                &[dv.clone(), i_subt_tm(&gv, &dv, &u_g, &sv("g"), &sv("a"))],
            ),
            i_ty(&dv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "n0_sub",
            tel(&[("D", ctx.clone()), ("G", ctx.clone()), ("g", i_hom(&dv, &gv))]),
            i_subt_tm(&gv, &dv, &u_g, &sv("g"), &sa("N0", &[gv.clone()])),
            sa("N0", &[dv.clone()]),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &u_g, &sv("g"))),
            Orientation::LeftToRight,
        ),
        d_eq(
            "pi0_sub",
            tel(&[
                ("D", ctx.clone()),
                ("G", ctx.clone()),
                ("g", i_hom(&dv, &gv)),
                ("a", i_tm(&gv, &u_g)),
                ("b", i_tm(&ext_t0, &sa("U0", &[ext_t0.clone()]))),
            ]),
            i_subt_tm(
                &gv,
                &dv,
                &u_g,
                &sv("g"),
                &sa("Pi0", &[gv.clone(), sv("a"), sv("b")]),
            ),
            sa(
                "Pi0",
                &[
                    dv.clone(),
                    i_subt_tm(&gv, &dv, &u_g, &sv("g"), &sv("a")),
                    i_subt_tm(
                        &ext_t0,
                        &i_lift_src(&gv, &dv, &t0_a, &sv("g")),
                        &sa("U0", &[ext_t0.clone()]),
                        &i_lift(&gv, &dv, &t0_a, &sv("g")),
                        &sv("b"),
                    ),
                ],
            ),
            i_tm(&dv, &i_subt_ty(&gv, &dv, &u_g, &sv("g"))),
            Orientation::LeftToRight,
        ),
        d_eq(
            "decode_n",
            tel(&[("G", ctx.clone())]),
            sa("T0", &[gv.clone(), sa("N0", &[gv.clone()])]),
            n_g.clone(),
            i_ty(&gv),
            Orientation::LeftToRight,
        ),
        d_eq(
            "decode_pi",
            tel(&[
                ("G", ctx.clone()),
                ("a", i_tm(&gv, &u_g)),
                ("b", i_tm(&ext_t0, &sa("U0", &[ext_t0.clone()]))),
            ]),
            sa("T0", &[gv.clone(), sa("Pi0", &[gv.clone(), sv("a"), sv("b")])]),
            sa(
                "Pi",
                &[
                    gv.clone(),
                    t0_a.clone(),
                    sa("T0", &[ext_t0.clone(), sv("b")]),
                ],
            ),
            i_ty(&gv),
            Orientation::LeftToRight,
        ),
    ]);
    out
}

fn cwf_pi_n_u0() -> NamedExample {
    let decls = cwf_pi_n_u0_decls();
    // The universe's decoding equations, pinned as golden judgments.
    let (_, sig) = build_signature(&decls)
        .unwrap_or_else(|e| panic!("example `cwf-pi-n-u0` is broken: {e}"));
    let golden = ["decode_n", "decode_pi"]
        .iter()
        .filter_map(|l| match sig.lookup(&SymbolName::new(*l)) {
            Ok(Declaration::Equation {
                ctx, ty, lhs, rhs, ..
            }) => Some(Judgment::TmEq(
                ctx.clone(),
                lhs.clone(),
                rhs.clone(),
                ty.clone(),
            )),
            _ => None,
        })
        .collect();
    finish(
        "cwf-pi-n-u0",
        "internal cwfs with Π-types, natural numbers with a recursor, and a universe closed under both",
        decls,
        vec![],
        golden,
    )
}

// ---------------------------------------------------------------------------
// Rendering examples back to `.gat` text
// ---------------------------------------------------------------------------

fn gat_term(t: &SurfaceTerm, out: &mut String) {
    out.push_str(&t.head);
    if !t.args.is_empty() {
        out.push('(');
        for (i, a) in t.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            gat_term(a, out);
        }
        out.push(')');
    }
}

fn gat_telescope(tel: &Telescope, out: &mut String) {
    if tel.is_empty() {
        return;
    }
    out.push_str(" (");
    let mut i = 0;
    while i < tel.len() {
        // Group adjacent bindings with one shared type.
        let mut j = i;
        while j + 1 < tel.len() && tel[j + 1].1 == tel[i].1 {
            j += 1;
        }
        if i > 0 {
            out.push_str(", ");
        }
        for (k, (name, _)) in tel[i..=j].iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            out.push_str(name);
        }
        out.push_str(" : ");
        gat_term(&tel[i].1, out);
        i = j + 1;
    }
    out.push(')');
}

/// Render surface declarations as `.gat` source.
pub fn to_gat_text(decls: &[SurfaceDecl]) -> String {
    let mut out = String::new();
    for d in decls {
        match d {
            SurfaceDecl::Theory { name } => {
                out.push_str(&format!("theory {name};\n\n"));
            }
            SurfaceDecl::Sort { name, telescope } => {
                out.push_str("sort ");
                out.push_str(name);
                gat_telescope(telescope, &mut out);
                out.push_str(";\n");
            }
            SurfaceDecl::Op {
                name,
                telescope,
                ty,
            } => {
                out.push_str("op ");
                out.push_str(name);
                gat_telescope(telescope, &mut out);
                out.push_str(" : ");
                gat_term(ty, &mut out);
                out.push_str(";\n");
            }
            SurfaceDecl::Eq {
                label,
                telescope,
                lhs,
                rhs,
                ty,
                orient,
            } => {
                out.push_str("eq");
                match orient {
                    Orientation::LeftToRight => {}
                    Orientation::RightToLeft => out.push_str("[rl]"),
                    Orientation::Unoriented => out.push_str("[none]"),
                }
                out.push(' ');
                out.push_str(label);
                gat_telescope(telescope, &mut out);
                out.push_str(" : ");
                gat_term(lhs, &mut out);
                out.push_str(" = ");
                gat_term(rhs, &mut out);
                out.push_str(" : ");
                gat_term(ty, &mut out);
                out.push_str(";\n");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::check_model;

    #[test]
    fn monoid_builds_and_models_hold() {
        let ex = build("monoid").unwrap();
        assert_eq!(ex.counts, (1, 2, 3));
        for m in &ex.models {
            let report = check_model(&ex.signature, m).unwrap();
            assert!(report.all_hold(), "{}:\n{report}", m.name);
        }
    }

    #[test]
    fn monoid_elaborates_to_the_combinator_forms() {
        let ex = build("monoid").unwrap();
        let Judgment::TmEq(ctx, lhs, rhs, ty) = monoid_lunit_combinator() else {
            unreachable!()
        };
        match ex.signature.lookup(&SymbolName::new("lunit")).unwrap() {
            Declaration::Equation {
                ctx: c,
                ty: t,
                lhs: l,
                rhs: r,
                ..
            } => {
                assert_eq!(*c, ctx);
                assert_eq!(*t, ty);
                assert_eq!(*l, lhs);
                assert_eq!(*r, rhs);
            }
            _ => panic!("lunit is not an equation"),
        }
    }

    #[test]
    fn category_builds_and_model_holds() {
        let ex = build("category").unwrap();
        assert_eq!(ex.counts, (2, 2, 3));
        let report = check_model(&ex.signature, &ex.models[0]).unwrap();
        assert!(report.all_hold(), "{report}");
        // The dependent sort's declared context matches the combinator form.
        let Judgment::Ty(c, _) = category_hom_judgment() else {
            unreachable!()
        };
        assert_eq!(ex.signature.lookup_sort(&SymbolName::new("hom")), Some(&c));
    }

    #[test]
    fn internal_cwf_builds() {
        let ex = build("internal-cwf").unwrap();
        assert_eq!(ex.counts, (4, 10, 13));
    }

    #[test]
    fn cwf_pi_n_u0_builds() {
        let ex = build("cwf-pi-n-u0").unwrap();
        assert_eq!(ex.counts, (4, 21, 29));
    }

    #[test]
    fn gat_text_round_trips() {
        for name in list() {
            let ex = build(name).unwrap();
            let text = to_gat_text(&ex.decls);
            let reparsed = crate::surface::parse(&text)
                .unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
            let (_, sig) = crate::surface::build_signature(&reparsed)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(sig, ex.signature, "{name} round-trip changed the signature");
        }
    }
}
