//! Incremental signature construction.
//!
//! A signature is an ordered list of declarations, each validated against
//! the theory generated by its strict prefix: a sort needs a derivable
//! context, an operator a derivable type, an equation two terms checking at
//! a common type. The empty signature is valid.

use crate::checker::{self, CheckError};
use crate::syntax::{CtxExpr, SymbolName, TmExpr, TyExpr};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Rewrite orientation chosen for an equation.
///
/// The checker treats every equation symmetrically; orientation only feeds
/// the rewriter.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub enum Orientation {
    #[default]
    LeftToRight,
    RightToLeft,
    Unoriented,
}

/// One signature entry.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Declaration {
    Sort {
        name: SymbolName,
        ctx: CtxExpr,
    },
    Operator {
        name: SymbolName,
        ctx: CtxExpr,
        ty: TyExpr,
    },
    Equation {
        label: SymbolName,
        ctx: CtxExpr,
        ty: TyExpr,
        lhs: TmExpr,
        rhs: TmExpr,
        orient: Orientation,
    },
}

impl Declaration {
    pub fn name(&self) -> &SymbolName {
        match self {
            Declaration::Sort { name, .. } => name,
            Declaration::Operator { name, .. } => name,
            Declaration::Equation { label, .. } => label,
        }
    }
}

/// A validated, ordered list of declarations.
///
/// Extension returns a new value; signatures are immutable once built.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Signature {
    decls: Vec<Declaration>,
}

#[derive(Debug, Error)]
pub enum SigError {
    #[error("duplicate name `{0}`")]
    DuplicateName(SymbolName),
    #[error("invalid context: {0}")]
    InvalidContext(#[source] CheckError),
    #[error("invalid type: {0}")]
    InvalidType(#[source] CheckError),
    #[error("{side} side fails to check: {reason}")]
    SideFailsToCheck {
        side: EqSide,
        #[source]
        reason: CheckError,
    },
    #[error("the two sides have different types: left `{lhs_ty}`, right `{rhs_ty}`")]
    TypeMismatchBetweenSides { lhs_ty: TyExpr, rhs_ty: TyExpr },
    #[error("name `{0}` not found")]
    NotFound(SymbolName),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EqSide {
    Left,
    Right,
}

impl fmt::Display for EqSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EqSide::Left => f.write_str("left"),
            EqSide::Right => f.write_str("right"),
        }
    }
}

/// The empty signature.
pub fn empty_signature() -> Signature {
    Signature::default()
}

impl Signature {
    pub fn decls(&self) -> &[Declaration] {
        &self.decls
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    /// The unique declaration named `name`.
    pub fn lookup(&self, name: &SymbolName) -> Result<&Declaration, SigError> {
        self.decls
            .iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| SigError::NotFound(name.clone()))
    }

    pub fn lookup_sort(&self, name: &SymbolName) -> Option<&CtxExpr> {
        match self.lookup(name) {
            Ok(Declaration::Sort { ctx, .. }) => Some(ctx),
            _ => None,
        }
    }

    pub fn lookup_operator(&self, name: &SymbolName) -> Option<(&CtxExpr, &TyExpr)> {
        match self.lookup(name) {
            Ok(Declaration::Operator { ctx, ty, .. }) => Some((ctx, ty)),
            _ => None,
        }
    }

    /// All equations, in declaration order.
    pub fn equations(&self) -> impl Iterator<Item = &Declaration> {
        self.decls
            .iter()
            .filter(|d| matches!(d, Declaration::Equation { .. }))
    }

    fn check_fresh(&self, name: &SymbolName) -> Result<(), SigError> {
        if self.decls.iter().any(|d| d.name() == name) {
            Err(SigError::DuplicateName(name.clone()))
        } else {
            Ok(())
        }
    }

    fn extended(&self, decl: Declaration) -> Signature {
        let mut decls = self.decls.clone();
        decls.push(decl);
        Signature { decls }
    }
}

/// Extend with a sort symbol declared over a derivable context.
pub fn add_sort(
    sig: &Signature,
    name: SymbolName,
    ctx: CtxExpr,
) -> Result<Signature, SigError> {
    sig.check_fresh(&name)?;
    checker::check_ctx_quick(sig, &ctx).map_err(SigError::InvalidContext)?;
    Ok(sig.extended(Declaration::Sort { name, ctx }))
}

/// Extend with an operator symbol of a derivable type.
pub fn add_operator(
    sig: &Signature,
    name: SymbolName,
    ctx: CtxExpr,
    ty: TyExpr,
) -> Result<Signature, SigError> {
    sig.check_fresh(&name)?;
    checker::check_ctx_quick(sig, &ctx).map_err(SigError::InvalidContext)?;
    checker::check_ty_quick(sig, &ctx, &ty).map_err(SigError::InvalidType)?;
    Ok(sig.extended(Declaration::Operator { name, ctx, ty }))
}

/// Extend with an equation between two terms of a common type.
pub fn add_equation(
    sig: &Signature,
    label: SymbolName,
    ctx: CtxExpr,
    ty: TyExpr,
    lhs: TmExpr,
    rhs: TmExpr,
    orient: Orientation,
) -> Result<Signature, SigError> {
    sig.check_fresh(&label)?;
    checker::check_ctx_quick(sig, &ctx).map_err(SigError::InvalidContext)?;
    checker::check_ty_quick(sig, &ctx, &ty).map_err(SigError::InvalidType)?;
    checker::check_tm_quick(sig, &ctx, &lhs, &ty).map_err(|reason| {
        SigError::SideFailsToCheck {
            side: EqSide::Left,
            reason,
        }
    })?;
    if let Err(reason) = checker::check_tm_quick(sig, &ctx, &rhs, &ty) {
        // A right side that is well-formed on its own but sits at another
        // type is a mismatch between the sides, not an ill-formed term.
        return match reason {
            CheckError::TypeMismatch {
                synthesized,
                expected,
                ..
            } => Err(SigError::TypeMismatchBetweenSides {
                lhs_ty: expected,
                rhs_ty: synthesized,
            }),
            reason => Err(SigError::SideFailsToCheck {
                side: EqSide::Right,
                reason,
            }),
        };
    }
    Ok(sig.extended(Declaration::Equation {
        label,
        ctx,
        ty,
        lhs,
        rhs,
        orient,
    }))
}
