use gat_core::rewrite::{normalize_with, rules_for, Strategy};
use gat_core::syntax::*;
use gat_core::{add_sort, empty_signature};

fn main() {
    let sig = empty_signature();
    let sig = add_sort(&sig, "obj".into(), empty()).unwrap();
    let c1 = ext(empty(), sort("obj"));
    let hom_ctx = ext(c1.clone(), ty_subst(sort("obj"), proj(sort("obj"))));
    let sig = add_sort(&sig, "hom".into(), hom_ctx).unwrap();
    // the elaborated type of idm: hom[⟨⟨⟨⟩_{1.obj}, q_obj⟩_obj, q_obj⟩_{obj[p_obj]}]
    let spine = pair(
        pair(bang(c1.clone()), q(sort("obj")), sort("obj")),
        q(sort("obj")),
        ty_subst(sort("obj"), proj(sort("obj"))),
    );
    let t = ty_subst(sort("hom"), spine);
    let rules = rules_for(&sig);
    match normalize_with(&sig, &rules, &Expr::Ty(t), 60, Strategy::LeftmostOutermost) {
        Ok((nf, tr)) => println!("nf after {} steps: {}", tr.len(), nf),
        Err(gat_core::rewrite::RewriteError::FuelExhausted { partial, .. }) => {
            println!("LOOP. last steps:");
            for s in partial.steps.iter().rev().take(6).rev() {
                println!("  {:?} at {:?} -> {}", s.origin, s.path, s.result);
            }
        }
    }
}
