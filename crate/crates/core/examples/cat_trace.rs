fn main() {
    let decls = gat_core::corpus::category_decls();
    for d in &decls {
        let name = match d {
            gat_core::surface::SurfaceDecl::Theory { name } => format!("theory {name}"),
            gat_core::surface::SurfaceDecl::Sort { name, .. } => format!("sort {name}"),
            gat_core::surface::SurfaceDecl::Op { name, .. } => format!("op {name}"),
            gat_core::surface::SurfaceDecl::Eq { label, .. } => format!("eq {label}"),
        };
        eprintln!("== {name}");
    }
    eprintln!("building incrementally…");
    let t0 = std::time::Instant::now();
    let mut sig = gat_core::empty_signature();
    for d in &decls {
        let tn = std::time::Instant::now();
        if let Some(decl) = gat_core::surface::elaborate(&sig, d).unwrap() {
            sig = match decl {
                gat_core::Declaration::Sort { name, ctx } => gat_core::add_sort(&sig, name, ctx).unwrap(),
                gat_core::Declaration::Operator { name, ctx, ty } => gat_core::add_operator(&sig, name, ctx, ty).unwrap(),
                gat_core::Declaration::Equation { label, ctx, ty, lhs, rhs, orient } => gat_core::add_equation(&sig, label, ctx, ty, lhs, rhs, orient).unwrap(),
            };
        }
        eprintln!("  took {:?} (total {:?})", tn.elapsed(), t0.elapsed());
    }
}
