//! The surface language: parsing, name resolution, restriction checks and
//! conversion of expressions to graphs.

pub mod lois;
pub mod program;
pub mod syntax;

pub use lois::{DefTree, Diagnostic, DiagnosticKind};
pub use program::{parse_program, Builtin, LoadError, Operation, Program};
pub use syntax::{parse_scoped, ExprAst, ParseError, Scoped};

use crate::graph::Graph;

/// Restriction violations of a loaded program.
pub fn check_lois(program: &Program) -> Vec<Diagnostic> {
    program.diagnostics().to_vec()
}

/// Parses a top-level expression against `program` and builds its graph.
pub fn parse_expr(program: &Program, text: &str) -> Result<Graph, LoadError> {
    program.parse_expr(text)
}

/// Builds the graph of an already parsed expression.
pub fn to_graph(program: &Program, expr: &Scoped) -> Result<Graph, LoadError> {
    program.to_graph(expr)
}
