use gat_core::rewrite::{normalize_with, rules_for, RewriteError, Strategy};
use gat_core::surface::{load_signature, parse_ty_expr};
use gat_core::syntax::*;

fn main() {
    let (_, sig) = load_signature(
        "sort obj; sort hom (D, G : obj); op idm (G : obj) : hom(G, G);",
    )
    .unwrap();
    let rules = rules_for(&sig);
    for text in [
        "hom[⟨⟨⟨⟩_{1.obj},q_obj[p_{obj[p_obj]}]⟩_obj,q_{obj[p_obj]}⟩_{obj[p_obj]}][p_{X1}][p_{X2}][p_{X3}]",
    ] {
        // Build the problem expression programmatically instead: the hom entry weakened thrice.
        let _ = text;
    }
    // comp's 5th entry scenario: hom(D,G) elaborated in the 4-entry prefix,
    // i.e. hom[⟨⟨⟨⟩,q[p]⟩,q⟩] over 1.obj.obj[p], weakened by three ps.
    let obj = || sort("obj");
    let obj_p = || ty_subst(obj(), proj(obj()));
    let c2 = ext(ext(empty(), obj()), obj_p()); // 1.obj.obj[p]
    let spine = pair(
        pair(bang(c2.clone()), tm_subst(q(obj()), proj(obj_p())), obj()),
        q(obj_p()),
        obj_p(),
    );
    let hom_dg = ty_subst(sort("hom"), spine); // hom(D,G) over 1.obj.obj[p]
    // entry types of the growing telescope
    let a3 = ty_subst(obj_p(), proj(obj_p())); // obj[p][p]
    let c3 = ext(c2.clone(), a3.clone());
    let a4 = {
        // hom(D,G) weakened once: over c3
        ty_subst(hom_dg.clone(), proj(a3.clone()))
    };
    let _c4 = ext(c3.clone(), a4.clone());
    let weak3 = ty_subst(
        ty_subst(ty_subst(hom_dg.clone(), proj(a3.clone())), proj(a4.clone())),
        proj(ty_subst(hom_dg.clone(), proj(a3))),
    );
    let t0 = std::time::Instant::now();
    match normalize_with(&sig, &rules, &Expr::Ty(weak3), 20000, Strategy::LeftmostOutermost) {
        Ok((nf, tr)) => println!("steps={} {:?} nf_nodes={}", tr.len(), t0.elapsed(), total_nodes(&nf)),
        Err(RewriteError::FuelExhausted { partial, .. }) => {
            println!("FUEL OUT after {:?}; sizes of last results:", t0.elapsed());
            for s in partial.steps.iter().rev().take(5) {
                println!("  {:?} size={}", s.origin, total_nodes(&s.result));
            }
        }
    }
}
