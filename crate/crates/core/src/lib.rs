pub mod bubbling;
pub mod dominance;
pub mod evaluator;
pub mod graph;
pub mod lang;
pub mod operators;
pub mod rewrite;
