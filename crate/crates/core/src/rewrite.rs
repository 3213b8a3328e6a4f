//! Rule matching and the dominator-preserving rewrite step.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::dominance::{chain_meet, OracleError};
use crate::graph::{Graph, GraphError, NodeId, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewriteError {
    #[error("node {node} is labeled `{found}`, rule defines `{expected}`")]
    OperationMismatch { node: NodeId, expected: String, found: String },
    #[error("choice node {0} is reduced by bubbling, not by rewriting")]
    ChoiceRedex(NodeId),
    #[error("right-hand side uses unbound variable `{0}`")]
    Unbound(String),
    #[error("dominator attribute is broken: {0}")]
    Dominators(#[from] OracleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Left-hand side argument pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pattern {
    Var(String),
    Wildcard,
    /// A symbol applied to sub-patterns. Constructor-based rules only use
    /// constructors here; anything else is reported by the LOIS check.
    Apply(Symbol, Vec<Pattern>),
}

impl Pattern {
    pub fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Pattern::Var(v) => out.push(v),
            Pattern::Wildcard => {}
            Pattern::Apply(_, ps) => ps.iter().for_each(|p| p.vars(out)),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(v) => f.write_str(v),
            Pattern::Wildcard => f.write_str("_"),
            Pattern::Apply(s, ps) if ps.is_empty() => match s.as_int() {
                Some(v) if v < 0 => write!(f, "({v})"),
                _ => write!(f, "{s}"),
            },
            Pattern::Apply(s, ps) => {
                write!(f, "({s}")?;
                for p in ps {
                    write!(f, " {p}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Right-hand side expression. A `Var` names either a left-hand side
/// variable or a local binding of the enclosing [`Rhs`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Var(String),
    Apply(Symbol, Vec<Term>),
}

impl Term {
    pub fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Apply(_, ts) => ts.iter().for_each(|t| t.vars(out)),
        }
    }
}

/// A right-hand side with `where`-bound locals; each local becomes one
/// shared node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rhs {
    pub body: Term,
    pub locals: Vec<(String, Term)>,
}

impl Rhs {
    pub fn plain(body: Term) -> Self {
        Rhs { body, locals: Vec::new() }
    }

    fn local(&self, name: &str) -> Option<&Term> {
        self.locals.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub operation: Symbol,
    pub args: Vec<Pattern>,
    pub rhs: Rhs,
}

impl Rule {
    /// Whether the right-hand side is (an alias of) a bare left-hand side
    /// variable, so that a step creates no node.
    pub fn is_collapsing(&self) -> bool {
        let mut t = &self.rhs.body;
        let mut hops = 0;
        while let Term::Var(v) = t {
            match self.rhs.local(v) {
                Some(next) if hops <= self.rhs.locals.len() => {
                    t = next;
                    hops += 1;
                }
                Some(_) => return false,
                None => return true,
            }
        }
        false
    }

    pub fn lhs_vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.args.iter().for_each(|p| p.vars(&mut out));
        out
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.operation)?;
        for p in &self.args {
            write!(f, " {p}")?;
        }
        f.write_str(" = ...")
    }
}

/// A successful match: variable bindings and the nodes matched by the
/// non-variable part of the left-hand side (the redex pattern).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Match {
    pub bindings: BTreeMap<String, NodeId>,
    pub redex: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MatchResult {
    Match(Match),
    NoMatch,
    /// The pattern needs a constructor where the graph has an operation or a
    /// choice; the named node must be evaluated first.
    Demand(NodeId),
}

/// Matches `rule` at node `f`.
///
/// Any constructor clash yields `NoMatch`, even when another position would
/// demand evaluation.
pub fn match_rule(g: &Graph, f: NodeId, rule: &Rule) -> Result<MatchResult, RewriteError> {
    let label = g.label(f);
    if *label != rule.operation {
        return Err(RewriteError::OperationMismatch {
            node: f,
            expected: rule.operation.name().to_string(),
            found: label.name().to_string(),
        });
    }
    let mut m = Match { bindings: BTreeMap::new(), redex: vec![f] };
    let mut demand = None;
    let mut clash = false;
    let succ = g.successors(f).to_vec();
    let mut work: Vec<(NodeId, &Pattern)> = succ.into_iter().zip(&rule.args).rev().collect();
    while let Some((n, p)) = work.pop() {
        match p {
            Pattern::Var(v) => {
                m.bindings.insert(v.clone(), n);
            }
            Pattern::Wildcard => {}
            Pattern::Apply(sym, ps) => {
                let label = g.label(n);
                if !label.is_constructor() {
                    demand.get_or_insert(n);
                } else if label.name() != sym.name() || label.arity() != ps.len() {
                    clash = true;
                } else {
                    if !m.redex.contains(&n) {
                        m.redex.push(n);
                    }
                    let succ = g.successors(n).to_vec();
                    work.extend(succ.into_iter().zip(ps).rev());
                }
            }
        }
    }
    Ok(match (clash, demand) {
        (true, _) => MatchResult::NoMatch,
        (false, Some(n)) => MatchResult::Demand(n),
        (false, None) => MatchResult::Match(m),
    })
}

/// Nodes allocated for a right-hand side instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contractum {
    /// Root of the instance; a pre-existing bound node for collapsing rules.
    pub root: NodeId,
    /// Freshly allocated nodes, in allocation order.
    pub fresh: Vec<NodeId>,
}

/// Allocates the right-hand side instance under `bindings`. Each local
/// binding is built at most once, and only if referenced.
pub fn build_contractum(
    g: &mut Graph,
    bindings: &BTreeMap<String, NodeId>,
    rhs: &Rhs,
) -> Result<Contractum, RewriteError> {
    struct Builder<'a> {
        rhs: &'a Rhs,
        bindings: &'a BTreeMap<String, NodeId>,
        locals: HashMap<&'a str, NodeId>,
        active: BTreeSet<&'a str>,
        fresh: Vec<NodeId>,
    }

    impl<'a> Builder<'a> {
        fn build(&mut self, g: &mut Graph, t: &'a Term) -> Result<NodeId, RewriteError> {
            match t {
                Term::Var(v) => {
                    if let Some(&n) = self.locals.get(v.as_str()) {
                        return Ok(n);
                    }
                    if let Some((name, body)) = self.rhs.locals.iter().find(|(n, _)| n == v) {
                        if !self.active.insert(name) {
                            return Err(RewriteError::Unbound(v.clone()));
                        }
                        let n = self.build(g, body)?;
                        self.active.remove(name.as_str());
                        self.locals.insert(name, n);
                        return Ok(n);
                    }
                    self.bindings.get(v).copied().ok_or_else(|| RewriteError::Unbound(v.clone()))
                }
                Term::Apply(sym, args) => {
                    let mut succ = Vec::with_capacity(args.len());
                    for a in args {
                        succ.push(self.build(g, a)?);
                    }
                    let n = g.add_node(sym.clone(), &succ)?;
                    self.fresh.push(n);
                    Ok(n)
                }
            }
        }
    }

    let mut b = Builder { rhs, bindings, locals: HashMap::new(), active: BTreeSet::new(), fresh: Vec::new() };
    let root = b.build(g, &rhs.body)?;
    Ok(Contractum { root, fresh: b.fresh })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteOutcome {
    pub redex_root: NodeId,
    pub contractum: Contractum,
    /// Nodes removed because the step made them unreachable.
    pub erased: Vec<NodeId>,
}

impl RewriteOutcome {
    pub fn collapsing(&self) -> bool {
        self.contractum.fresh.is_empty()
    }
}

/// Rewrites the redex at `f` with `rule` and repairs stored dominators.
pub fn rewrite_at(g: &mut Graph, f: NodeId, rule: &Rule, m: &Match) -> Result<RewriteOutcome, RewriteError> {
    let label = g.label(f);
    if label.is_choice() {
        return Err(RewriteError::ChoiceRedex(f));
    }
    if *label != rule.operation {
        return Err(RewriteError::OperationMismatch {
            node: f,
            expected: rule.operation.name().to_string(),
            found: label.name().to_string(),
        });
    }
    contract(g, f, &m.redex, &m.bindings, &rule.rhs)
}

/// Replaces the redex rooted at `f` by an instance of `rhs` and updates the
/// dominator attribute. `pattern` lists the redex pattern nodes, parents
/// before children, starting with `f`.
///
/// 1. nodes whose stored dominator was erased get the contractum root `e`;
/// 2. fresh nodes other than `e` get `e`;
/// 3. `e` gets the former dominator of `f`. When `e` is a pre-existing node
///    (collapsing rule) it gets the meet of its old chain with the chain of
///    `f`'s dominator, since it stays reachable along its old paths;
/// 4. nodes whose stored dominator is a pattern node that survived (it is
///    shared, or bound by a variable elsewhere in the left-hand side) get
///    the meet of that node's chain with `e`'s chain: the contractum may
///    reach them without passing the pattern node;
/// 5. everything else keeps its dominator.
pub fn contract(
    g: &mut Graph,
    f: NodeId,
    pattern: &[NodeId],
    bindings: &BTreeMap<String, NodeId>,
    rhs: &Rhs,
) -> Result<RewriteOutcome, RewriteError> {
    let was_root = g.root() == f;
    let redex_dom = g.dominator(f);
    let contractum = build_contractum(g, bindings, rhs)?;
    let e = contractum.root;
    let collapsing = contractum.fresh.is_empty();

    let meet = match (collapsing, redex_dom) {
        (true, Some(df)) => {
            let de = g.dominator(e).ok_or(OracleError::Root(e))?;
            Some(chain_meet(g, de, df)?)
        }
        _ => None,
    };

    g.replace(f, e)?;
    let released = g.reclaim(f);

    for w in &released {
        for &z in &w.dominated {
            if g.contains(z) {
                g.set_dominator(z, Some(e));
            }
        }
    }
    for &c in &contractum.fresh {
        if c != e {
            g.set_dominator(c, Some(e));
        }
    }
    if was_root {
        g.set_dominator(e, None);
    } else if collapsing {
        g.set_dominator(e, meet);
    } else {
        g.set_dominator(e, redex_dom);
    }
    for &d in pattern {
        if d == f || !g.contains(d) {
            continue;
        }
        let dominated: Vec<NodeId> = g.dominated(d).iter().copied().filter(|&z| z != e).collect();
        if dominated.is_empty() {
            continue;
        }
        let m = chain_meet(g, d, e)?;
        for z in dominated {
            g.set_dominator(z, Some(m));
        }
    }

    Ok(RewriteOutcome { redex_root: f, contractum, erased: released.into_iter().map(|r| r.id).collect() })
}
