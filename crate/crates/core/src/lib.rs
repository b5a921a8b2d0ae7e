//! A kernel, checker, and evaluator for finitely presented generalized
//! algebraic theories over cwf combinators.
//!
//! The crate is organized around a small trusted core:
//!
//! - [`syntax`]: the variable-free expression trees (contexts,
//!   substitutions, types, terms) with mandatory annotations;
//! - [`signature`]: incremental signature construction, one validated
//!   declaration at a time;
//! - [`checker`]: the inference system — syntax-directed checking, bounded
//!   conversion, and the trusted derivation verifier;
//! - [`rewrite`]: the oriented law rewriter with replayable traces;
//! - [`semantics`]: finite set-based models and the interpretation of raw
//!   syntax into them;
//! - [`surface`]: the named-variable declaration language and its
//!   elaboration into kernel syntax;
//! - [`corpus`]: built-in example theories and models.

pub mod checker;
pub mod corpus;
pub mod readback;
pub mod rewrite;
pub mod semantics;
pub mod signature;
pub mod surface;
pub mod syntax;

pub use checker::{check_ctx, check_derivation, check_tm, check_ty, infer_sub, infer_tm};
pub use checker::{conv_ctx, conv_sub, conv_tm, conv_ty};
pub use checker::{CheckError, ConvError, Derivation, Judgment, Rule};
pub use signature::{add_equation, add_operator, add_sort, empty_signature};
pub use signature::{Declaration, Orientation, SigError, Signature};
pub use syntax::{CtxExpr, Expr, SubExpr, SymbolName, TmExpr, TyExpr};
