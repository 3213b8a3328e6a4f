//! Name resolution and the loaded form of a program.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::lois::{self, DefTree, Diagnostic};
use super::syntax::{self, Decl, ExprAst, ParseError, RuleDecl, Scoped};
use crate::dominance;
use crate::graph::{Graph, Symbol, CHOICE};
use crate::rewrite::{build_contractum, Pattern, Rhs, Rule, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoadError {
    #[error("{0}")]
    Syntax(#[from] ParseError),
    #[error("{line}: {message}")]
    Semantic { line: usize, message: String },
}

fn semantic<T>(line: usize, message: impl Into<String>) -> Result<T, LoadError> {
    Err(LoadError::Semantic { line, message: message.into() })
}

/// Operations evaluated natively on integer (and nullary constructor)
/// arguments. Both arguments are demanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Gt,
    Lt,
    Eq,
}

impl Builtin {
    pub const ALL: [Builtin; 8] =
        [Builtin::Add, Builtin::Sub, Builtin::Mul, Builtin::Div, Builtin::Pow, Builtin::Gt, Builtin::Lt, Builtin::Eq];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Add => "+",
            Builtin::Sub => "-",
            Builtin::Mul => "*",
            Builtin::Div => "/",
            Builtin::Pow => "^",
            Builtin::Gt => ">",
            Builtin::Lt => "<",
            Builtin::Eq => "==",
        }
    }

    /// Result for two constructor arguments, or `None` when the computation
    /// fails (type mismatch, overflow, division by zero, negative exponent).
    pub fn apply(self, a: &Symbol, b: &Symbol) -> Option<Symbol> {
        if self == Builtin::Eq && a.arity() == 0 && b.arity() == 0 && a.as_int().is_none() && b.as_int().is_none() {
            return Some(Symbol::boolean(a.name() == b.name()));
        }
        let (x, y) = (a.as_int()?, b.as_int()?);
        let int = |v: Option<i64>| v.map(Symbol::int);
        match self {
            Builtin::Add => int(x.checked_add(y)),
            Builtin::Sub => int(x.checked_sub(y)),
            Builtin::Mul => int(x.checked_mul(y)),
            Builtin::Div => int(floor_div(x, y)),
            Builtin::Pow => int(u32::try_from(y).ok().and_then(|e| x.checked_pow(e))),
            Builtin::Gt => Some(Symbol::boolean(x > y)),
            Builtin::Lt => Some(Symbol::boolean(x < y)),
            Builtin::Eq => Some(Symbol::boolean(x == y)),
        }
    }
}

/// Division rounding toward negative infinity.
fn floor_div(x: i64, y: i64) -> Option<i64> {
    let q = x.checked_div(y)?;
    Some(if x % y != 0 && (x < 0) != (y < 0) { q - 1 } else { q })
}

const PRELUDE: &str = "\
True || _ = True
False || x = x
True && x = x
False && _ = False
";

#[derive(Clone, Debug)]
pub struct Operation {
    pub symbol: Symbol,
    pub rules: Vec<Rule>,
    /// Source line of each rule; zero for predefined rules.
    pub lines: Vec<usize>,
    /// Present when the rules satisfy every restriction.
    pub tree: Option<DefTree>,
    pub builtin: Option<Builtin>,
}

#[derive(Clone, Debug)]
pub struct Program {
    constructors: BTreeMap<String, Symbol>,
    types: BTreeMap<String, Vec<String>>,
    operations: BTreeMap<String, Operation>,
    diagnostics: Vec<Diagnostic>,
    decls: Vec<Decl>,
}

struct Scope<'a> {
    vars: &'a BTreeSet<String>,
    line: usize,
}

impl Program {
    fn empty() -> Self {
        let mut p = Program {
            constructors: BTreeMap::new(),
            types: BTreeMap::new(),
            operations: BTreeMap::new(),
            diagnostics: Vec::new(),
            decls: Vec::new(),
        };
        for b in [false, true] {
            let s = Symbol::boolean(b);
            p.constructors.insert(s.name().to_string(), s);
        }
        p.types.insert("Bool".into(), vec!["False".into(), "True".into()]);
        for b in Builtin::ALL {
            p.operations.insert(
                b.name().to_string(),
                Operation {
                    symbol: Symbol::operation(b.name(), 2),
                    rules: Vec::new(),
                    lines: Vec::new(),
                    tree: None,
                    builtin: Some(b),
                },
            );
        }
        p
    }

    pub fn constructor(&self, name: &str) -> Option<&Symbol> {
        self.constructors.get(name)
    }

    pub fn constructors(&self) -> impl Iterator<Item = &Symbol> {
        self.constructors.values()
    }

    /// Constructor names of each declared data type, including `Bool`.
    pub fn types(&self) -> &BTreeMap<String, Vec<String>> {
        &self.types
    }

    pub fn operation(&self, name: &str) -> Option<&Operation> {
        self.operations.get(name)
    }

    pub fn operations(&self) -> impl Iterator<Item = &Operation> {
        self.operations.values()
    }

    /// Restriction violations found while loading; empty when every
    /// operation has a definitional tree.
    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// The declarations of the user program, in source order.
    pub fn declarations(&self) -> &[Decl] {
        &self.decls
    }

    /// The two rules of `?`: `x ? _ = x` and `_ ? y = y`. The evaluator never
    /// fires them; they are the leaf-level meaning used by whole-graph
    /// copying.
    pub fn choice_rules() -> [Rule; 2] {
        let rule = |args: Vec<Pattern>, v: &str| Rule {
            operation: Symbol::choice(),
            args,
            rhs: Rhs::plain(Term::Var(v.into())),
        };
        [
            rule(vec![Pattern::Var("x".into()), Pattern::Wildcard], "x"),
            rule(vec![Pattern::Wildcard, Pattern::Var("y".into())], "y"),
        ]
    }

    fn load(&mut self, decls: Vec<Decl>, predefined: bool) -> Result<(), LoadError> {
        let line_of = |line: usize| if predefined { 0 } else { line };
        // Constructors first, so rules may mention types declared later.
        for d in &decls {
            if let Decl::Data(data) = d {
                let line = line_of(data.line);
                if self.types.contains_key(&data.name) {
                    return semantic(line, format!("type `{}` is already defined", data.name));
                }
                let mut names = Vec::new();
                for (c, fields) in &data.constructors {
                    if self.constructors.contains_key(c) {
                        return semantic(line, format!("constructor `{c}` is already defined"));
                    }
                    self.constructors.insert(c.clone(), Symbol::constructor(c, fields.len()));
                    names.push(c.clone());
                }
                self.types.insert(data.name.clone(), names);
            }
        }
        // Operation heads and arities.
        let mut fresh: Vec<String> = Vec::new();
        for d in &decls {
            let Decl::Rule(r) = d else { continue };
            let line = line_of(r.line);
            let (head, arity) = match &r.lhs {
                ExprAst::Apply(h, args) => (h.clone(), args.len()),
                ExprAst::Int(_) | ExprAst::Wildcard => {
                    return semantic(line, "a rule must start with an operation name")
                }
            };
            if head == CHOICE {
                return semantic(line, "`?` is predefined and cannot be redefined");
            }
            if head.starts_with(|c: char| c.is_uppercase()) {
                return semantic(line, format!("`{head}` is a constructor and cannot be defined by a rule"));
            }
            match self.operations.get(&head) {
                Some(op) if !fresh.contains(&head) => {
                    let what = if op.builtin.is_some() { "built in" } else { "predefined" };
                    return semantic(line, format!("`{head}` is {what} and cannot be redefined"));
                }
                Some(op) if op.symbol.arity() != arity => {
                    return semantic(
                        line,
                        format!(
                            "`{head}` is defined with {} arguments here but {} elsewhere",
                            arity,
                            op.symbol.arity()
                        ),
                    );
                }
                Some(_) => {}
                None => {
                    fresh.push(head.clone());
                    self.operations.insert(
                        head.clone(),
                        Operation {
                            symbol: Symbol::operation(&head, arity),
                            rules: Vec::new(),
                            lines: Vec::new(),
                            tree: None,
                            builtin: None,
                        },
                    );
                }
            }
        }
        for d in &decls {
            let Decl::Rule(r) = d else { continue };
            let line = line_of(r.line);
            let rule = self.resolve_rule(r, line)?;
            let op = self.operations.get_mut(rule.operation.name()).expect("registered above");
            op.rules.push(rule);
            op.lines.push(line);
        }
        for name in fresh {
            let op = self.operations.get_mut(&name).expect("registered above");
            let (tree, diags) = lois::check_operation(&name, &op.rules, &op.lines);
            op.tree = tree;
            self.diagnostics.extend(diags);
        }
        Ok(())
    }

    fn resolve_rule(&self, r: &RuleDecl, line: usize) -> Result<Rule, LoadError> {
        let ExprAst::Apply(head, args) = &r.lhs else { unreachable!("checked by the caller") };
        let operation = self.operations[head].symbol.clone();
        let args = args.iter().map(|a| self.pattern(a, line)).collect::<Result<Vec<_>, _>>()?;
        let mut vars = BTreeSet::new();
        for p in &args {
            let mut vs = Vec::new();
            p.vars(&mut vs);
            vars.extend(vs.into_iter().map(String::from));
        }
        let rhs = self.scoped(&r.rhs, vars, line)?;
        Ok(Rule { operation, args, rhs })
    }

    fn pattern(&self, e: &ExprAst, line: usize) -> Result<Pattern, LoadError> {
        match e {
            ExprAst::Int(v) => Ok(Pattern::Apply(Symbol::int(*v), Vec::new())),
            ExprAst::Wildcard => Ok(Pattern::Wildcard),
            ExprAst::Apply(name, args) if args.is_empty() && name.starts_with(|c: char| c.is_lowercase()) => {
                Ok(Pattern::Var(name.clone()))
            }
            ExprAst::Apply(name, args) => {
                let sym = self.symbol(name, args.len(), line)?;
                let sub = args.iter().map(|a| self.pattern(a, line)).collect::<Result<Vec<_>, _>>()?;
                Ok(Pattern::Apply(sym, sub))
            }
        }
    }

    /// Symbol for a non-variable name applied to `given` arguments.
    fn symbol(&self, name: &str, given: usize, line: usize) -> Result<Symbol, LoadError> {
        let sym = if name == CHOICE {
            Symbol::choice()
        } else if let Some(c) = self.constructors.get(name) {
            c.clone()
        } else if let Some(op) = self.operations.get(name) {
            op.symbol.clone()
        } else if name.starts_with(|c: char| c.is_uppercase()) {
            return semantic(line, format!("unknown constructor `{name}`"));
        } else {
            return semantic(line, format!("unknown name `{name}`"));
        };
        let arity = sym.arity();
        if given < arity {
            return semantic(
                line,
                format!("partial application of `{name}` (expects {arity} arguments, given {given}); functions are not values"),
            );
        }
        if given > arity {
            return semantic(line, format!("`{name}` expects {arity} arguments but is given {given}"));
        }
        Ok(sym)
    }

    fn scoped(&self, s: &Scoped, mut vars: BTreeSet<String>, line: usize) -> Result<Rhs, LoadError> {
        let mut names = BTreeSet::new();
        for (name, _) in &s.locals {
            if vars.contains(name) {
                return semantic(line, format!("local `{name}` shadows a pattern variable"));
            }
            if !names.insert(name.clone()) {
                return semantic(line, format!("local `{name}` is bound twice"));
            }
        }
        vars.extend(names.iter().cloned());
        let scope = Scope { vars: &vars, line };
        let locals = s
            .locals
            .iter()
            .map(|(n, e)| Ok((n.clone(), self.term(e, &scope)?)))
            .collect::<Result<Vec<_>, LoadError>>()?;
        let body = self.term(&s.body, &scope)?;
        check_acyclic_locals(&locals, line)?;
        Ok(Rhs { body, locals })
    }

    fn term(&self, e: &ExprAst, scope: &Scope<'_>) -> Result<Term, LoadError> {
        match e {
            ExprAst::Int(v) => Ok(Term::Apply(Symbol::int(*v), Vec::new())),
            ExprAst::Wildcard => semantic(scope.line, "`_` is only allowed in patterns"),
            ExprAst::Apply(name, args) if scope.vars.contains(name) => {
                if args.is_empty() {
                    Ok(Term::Var(name.clone()))
                } else {
                    semantic(scope.line, format!("variable `{name}` cannot be applied; functions are not values"))
                }
            }
            ExprAst::Apply(name, args) => {
                let sym = self.symbol(name, args.len(), scope.line)?;
                let args = args.iter().map(|a| self.term(a, scope)).collect::<Result<Vec<_>, _>>()?;
                Ok(Term::Apply(sym, args))
            }
        }
    }

    /// Resolves a top-level expression against this program.
    pub fn resolve_expr(&self, s: &Scoped) -> Result<Rhs, LoadError> {
        self.scoped(s, BTreeSet::new(), 1)
    }

    /// Builds the graph of a top-level expression, with immediate
    /// dominators stored.
    pub fn to_graph(&self, s: &Scoped) -> Result<Graph, LoadError> {
        let rhs = self.resolve_expr(s)?;
        let mut g = Graph::new();
        let c = build_contractum(&mut g, &BTreeMap::new(), &rhs)
            .map_err(|e| LoadError::Semantic { line: 1, message: e.to_string() })?;
        g.set_root(c.root).expect("freshly built node");
        g.gc();
        dominance::initialize(&mut g);
        Ok(g)
    }

    /// Parses and builds a top-level expression.
    pub fn parse_expr(&self, text: &str) -> Result<Graph, LoadError> {
        self.to_graph(&syntax::parse_scoped(text)?)
    }
}

fn check_acyclic_locals(locals: &[(String, Term)], line: usize) -> Result<(), LoadError> {
    fn visit<'a>(
        name: &'a str,
        locals: &'a [(String, Term)],
        state: &mut BTreeMap<&'a str, bool>,
        line: usize,
    ) -> Result<(), LoadError> {
        match state.get(name) {
            Some(true) => return Ok(()),
            Some(false) => {
                return semantic(
                    line,
                    format!("local `{name}` is defined in terms of itself; recursive bindings are not supported"),
                )
            }
            None => {}
        }
        let Some((_, t)) = locals.iter().find(|(n, _)| n == name) else { return Ok(()) };
        state.insert(name, false);
        let mut vs = Vec::new();
        t.vars(&mut vs);
        for v in vs {
            visit(v, locals, state, line)?;
        }
        state.insert(name, true);
        Ok(())
    }
    let mut state = BTreeMap::new();
    for (n, _) in locals {
        visit(n, locals, &mut state, line)?;
    }
    Ok(())
}

/// Parses and loads a program. Restriction violations do not fail loading;
/// they are reported by [`Program::diagnostics`].
pub fn parse_program(text: &str) -> Result<Program, LoadError> {
    let mut p = Program::empty();
    p.load(syntax::parse_decls(PRELUDE).expect("prelude parses"), true)?;
    let decls = syntax::parse_decls(text)?;
    p.load(decls.clone(), false)?;
    p.decls = decls;
    Ok(p)
}
