//! Rule-system restrictions required by the evaluator, and the definitional
//! trees that drive its demand strategy.
//!
//! Every operation other than `?` must be left-linear, constructor-based and
//! inductively sequential. The last property is witnessed by a definitional
//! tree, built here by searching for an inductive position at each branch.

use std::collections::BTreeSet;
use std::fmt;

use crate::graph::Symbol;
use crate::rewrite::{Pattern, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagnosticKind {
    NonLeftLinear,
    NotConstructorBased,
    Overlapping,
    NotInductivelySequential,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::NonLeftLinear => "non-left-linear",
            DiagnosticKind::NotConstructorBased => "not constructor-based",
            DiagnosticKind::Overlapping => "overlapping",
            DiagnosticKind::NotInductivelySequential => "not inductively sequential",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub operation: String,
    pub line: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: `{}` is {}: {}", self.line, self.operation, self.kind, self.message)
    }
}

/// Decision tree over the rules of one operation. Positions are paths of
/// argument indices starting at the operation node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DefTree {
    /// Apply the rule with this index.
    Rule(usize),
    /// Inspect the node at `position`; an operation or choice there is
    /// demanded, a constructor selects a child, and any other constructor
    /// means no rule applies.
    Branch { position: Vec<usize>, children: Vec<(Symbol, DefTree)> },
}

impl DefTree {
    /// Rule indices reachable in this tree, in order.
    pub fn rules(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        match self {
            DefTree::Rule(i) => out.push(*i),
            DefTree::Branch { children, .. } => children.iter().for_each(|(_, t)| t.collect(out)),
        }
    }
}

/// Pattern under construction: constructors fixed so far, holes elsewhere.
#[derive(Clone, Debug)]
enum Shape {
    Hole,
    Cons(Vec<Shape>),
}

fn holes(shapes: &[Shape], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    for (i, s) in shapes.iter().enumerate() {
        prefix.push(i);
        match s {
            Shape::Hole => out.push(prefix.clone()),
            Shape::Cons(args) => holes(args, prefix, out),
        }
        prefix.pop();
    }
}

fn fill(shapes: &mut [Shape], path: &[usize], sym: &Symbol) {
    let slot = &mut shapes[path[0]];
    if path.len() == 1 {
        *slot = Shape::Cons(vec![Shape::Hole; sym.arity()]);
    } else if let Shape::Cons(args) = slot {
        fill(args, &path[1..], sym);
    }
}

fn pattern_at<'a>(args: &'a [Pattern], path: &[usize]) -> Option<&'a Pattern> {
    let p = args.get(path[0])?;
    if path.len() == 1 {
        return Some(p);
    }
    match p {
        Pattern::Apply(_, sub) => pattern_at(sub, &path[1..]),
        _ => None,
    }
}

fn constructor_at<'a>(rule: &'a Rule, path: &[usize]) -> Option<&'a Symbol> {
    match pattern_at(&rule.args, path) {
        Some(Pattern::Apply(sym, _)) if sym.is_constructor() => Some(sym),
        _ => None,
    }
}

/// Why no definitional tree exists; rule indices refer to the input slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeError {
    Overlap(usize, usize),
    NotSequential(Vec<usize>),
}

fn build(shape: &[Shape], rules: &[usize], all: &[Rule]) -> Result<DefTree, TreeError> {
    let mut hs = Vec::new();
    holes(shape, &mut Vec::new(), &mut hs);
    let inductive: Vec<&Vec<usize>> =
        hs.iter().filter(|u| rules.iter().all(|&r| constructor_at(&all[r], u).is_some())).collect();
    if inductive.is_empty() {
        if let [only] = rules {
            return Ok(DefTree::Rule(*only));
        }
        let general = rules.iter().find(|&&r| hs.iter().all(|u| constructor_at(&all[r], u).is_none()));
        return Err(match general {
            Some(&g) => TreeError::Overlap(*rules.iter().find(|&&r| r != g).expect("at least two rules"), g),
            None => TreeError::NotSequential(rules.to_vec()),
        });
    }
    let mut first_error = None;
    for u in inductive {
        let mut groups: Vec<(Symbol, Vec<usize>)> = Vec::new();
        for &r in rules {
            let sym = constructor_at(&all[r], u).expect("inductive position");
            match groups.iter_mut().find(|(s, _)| s == sym) {
                Some((_, rs)) => rs.push(r),
                None => groups.push((sym.clone(), vec![r])),
            }
        }
        let attempt: Result<Vec<(Symbol, DefTree)>, TreeError> = groups
            .into_iter()
            .map(|(sym, rs)| {
                let mut next = shape.to_vec();
                fill(&mut next, u, &sym);
                build(&next, &rs, all).map(|t| (sym, t))
            })
            .collect();
        match attempt {
            Ok(children) => return Ok(DefTree::Branch { position: u.clone(), children }),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    Err(first_error.expect("some position was tried"))
}

/// Builds a definitional tree for the rules of one operation.
pub fn definitional_tree(rules: &[Rule]) -> Result<DefTree, TreeError> {
    let arity = rules.first().map_or(0, |r| r.args.len());
    let indices: Vec<usize> = (0..rules.len()).collect();
    if indices.is_empty() {
        return Err(TreeError::NotSequential(indices));
    }
    build(&vec![Shape::Hole; arity], &indices, rules)
}

/// Checks the rules of one operation, returning its tree if it qualifies.
/// `lines` gives the source line of each rule.
pub fn check_operation(name: &str, rules: &[Rule], lines: &[usize]) -> (Option<DefTree>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let diag = |line: usize, kind, message: String| Diagnostic { operation: name.to_string(), line, kind, message };
    for (rule, &line) in rules.iter().zip(lines) {
        let mut seen = BTreeSet::new();
        for v in rule.lhs_vars() {
            if !seen.insert(v) {
                diags.push(diag(line, DiagnosticKind::NonLeftLinear, format!("variable `{v}` occurs more than once")));
            }
        }
        let mut ops = Vec::new();
        rule.args.iter().for_each(|p| non_constructors(p, &mut ops));
        for sym in ops {
            diags.push(diag(
                line,
                DiagnosticKind::NotConstructorBased,
                format!("`{}` in a pattern is not a constructor", sym.name()),
            ));
        }
    }
    if !diags.is_empty() {
        return (None, diags);
    }
    match definitional_tree(rules) {
        Ok(t) => (Some(t), diags),
        Err(TreeError::Overlap(a, b)) => {
            let (a, b) = (a.min(b), a.max(b));
            diags.push(diag(
                lines[b],
                DiagnosticKind::Overlapping,
                format!("rules at lines {} and {} match the same calls", lines[a], lines[b]),
            ));
            (None, diags)
        }
        Err(TreeError::NotSequential(rs)) => {
            let ls: Vec<String> = rs.iter().map(|&r| lines[r].to_string()).collect();
            diags.push(diag(
                lines[rs.first().copied().unwrap_or(0).min(lines.len().saturating_sub(1))],
                DiagnosticKind::NotInductivelySequential,
                format!("no argument position is demanded by all of the rules at lines {}", ls.join(", ")),
            ));
            (None, diags)
        }
    }
}

fn non_constructors<'a>(p: &'a Pattern, out: &mut Vec<&'a Symbol>) {
    if let Pattern::Apply(sym, args) = p {
        if !sym.is_constructor() {
            out.push(sym);
        }
        args.iter().for_each(|a| non_constructors(a, out));
    }
}
