//! Demand-driven evaluation with fair enumeration of values.
//!
//! Each computation owns its graph. A step locates the outermost demanded
//! node by descending from the root: through constructors left to right
//! (values are constructor normal forms), through defined operations along
//! their definitional trees, and through builtins, which demand both
//! arguments. What it finds decides the step:
//!
//! * an operation redex is rewritten;
//! * a demanded choice is bubbled to its stored dominator (bubbling) or
//!   resolved by copying the whole graph twice (copying);
//! * a choice at the root splits the computation in two;
//! * a constructor that no rule expects fails the computation.
//!
//! The driver runs computations round-robin, one step per turn.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::bubbling::{self, BubbleError, BubbleStats};
use crate::dominance::{self, DominatorReport};
use crate::graph::{Graph, GraphError, NodeId, Side, Symbol, WriteCounters};
use crate::lang::{DefTree, Program};
use crate::rewrite::{self, match_rule, MatchResult, RewriteError, Rhs, Term};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    #[default]
    Bubbling,
    Copying,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Bubbling => "bubbling",
            Strategy::Copying => "copying",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalConfig {
    pub strategy: Strategy,
    /// Stop after this many distinct values.
    pub max_values: usize,
    /// Total step budget across all computations.
    pub max_steps: u64,
    /// Check structure and dominator soundness after every step.
    pub validate: bool,
    /// Computations stepped in parallel per round. Results are applied in
    /// queue order, so output does not depend on this.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { strategy: Strategy::Bubbling, max_values: 16, max_steps: 100_000, validate: false, jobs: 1 }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("`{0}` has no definitional tree; run `check` for details")]
    NotLois(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Bubble(#[from] BubbleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("step {step} left computation {computation} with unsound dominators:\n{report}")]
    Unsound { step: u64, computation: u64, report: DominatorReport },
    #[error("step {step} left computation {computation} malformed: {error}")]
    Malformed { step: u64, computation: u64, error: GraphError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Value,
    Failed,
}

#[derive(Clone, Debug)]
pub struct Computation {
    pub id: u64,
    pub graph: Graph,
    pub status: Status,
    /// Steps performed on this computation and its ancestors.
    pub steps: u64,
    /// Nodes created by cloning for this computation and its ancestors.
    pub clones: u64,
}

impl Computation {
    pub fn new(id: u64, graph: Graph) -> Self {
        Computation { id, graph, status: Status::Running, steps: 0, clones: 0 }
    }

    fn child(&self, id: u64, graph: Graph, clones: u64) -> Self {
        Computation { id, graph, status: Status::Running, steps: self.steps, clones: self.clones + clones }
    }
}

/// What a step found and did.
#[derive(Clone, Debug)]
pub enum StepOutcome {
    /// The graph is a constructor normal form; no step was taken.
    Value(String),
    Rewrite {
        redex: NodeId,
        rule: String,
        replacement: NodeId,
        fresh: usize,
        erased: usize,
    },
    Bubble(Box<BubbleStats>),
    /// The computation is replaced by two, one per alternative of `choice`.
    Split {
        choice: NodeId,
        copied: bool,
        graphs: Box<[Graph; 2]>,
    },
    Fail(NodeId),
}

impl StepOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            StepOutcome::Value(_) => "value",
            StepOutcome::Rewrite { .. } => "rewrite",
            StepOutcome::Bubble(_) => "bubble",
            StepOutcome::Split { .. } => "split",
            StepOutcome::Fail(_) => "fail",
        }
    }
}

enum Target {
    Normal,
    Redex(NodeId, usize),
    Builtin(NodeId, Symbol),
    Choice(NodeId),
    Fail(NodeId),
}

struct Locator<'a> {
    program: &'a Program,
    g: &'a Graph,
    normal: BTreeSet<NodeId>,
}

impl Locator<'_> {
    /// Demand for the constructor normal form of `n`.
    fn normal_form(&mut self, n: NodeId) -> Result<Target, EvalError> {
        if self.normal.contains(&n) {
            return Ok(Target::Normal);
        }
        let label = self.g.label(n);
        if label.is_constructor() {
            for &s in self.g.successors(n) {
                let t = self.normal_form(s)?;
                if !matches!(t, Target::Normal) {
                    return Ok(t);
                }
            }
            self.normal.insert(n);
            return Ok(Target::Normal);
        }
        self.head(n)
    }

    /// Demand for the head normal form of `n`, which is not a constructor.
    fn head(&mut self, n: NodeId) -> Result<Target, EvalError> {
        let label = self.g.label(n);
        if label.is_choice() {
            return Ok(Target::Choice(n));
        }
        let op = self.program.operation(label.name()).ok_or_else(|| EvalError::NotLois(label.name().to_string()))?;
        if let Some(b) = op.builtin {
            let args = self.g.successors(n);
            for &a in args {
                if !self.g.label(a).is_constructor() {
                    return self.head(a);
                }
            }
            return Ok(match b.apply(self.g.label(args[0]), self.g.label(args[1])) {
                Some(result) => Target::Builtin(n, result),
                None => Target::Fail(n),
            });
        }
        let tree = op.tree.as_ref().ok_or_else(|| EvalError::NotLois(label.name().to_string()))?;
        let mut t = tree;
        loop {
            match t {
                DefTree::Rule(i) => {
                    return Ok(match match_rule(self.g, n, &op.rules[*i])? {
                        MatchResult::Match(_) => Target::Redex(n, *i),
                        MatchResult::NoMatch => Target::Fail(n),
                        MatchResult::Demand(d) => self.head(d)?,
                    });
                }
                DefTree::Branch { position, children } => {
                    let m = position.iter().fold(n, |m, &i| self.g.successors(m)[i]);
                    let l = self.g.label(m);
                    if !l.is_constructor() {
                        return self.head(m);
                    }
                    match children.iter().find(|(s, _)| s == l) {
                        Some((_, child)) => t = child,
                        None => return Ok(Target::Fail(n)),
                    }
                }
            }
        }
    }
}

/// Canonical printed form of a value graph.
pub fn value_text(g: &Graph) -> String {
    g.show(g.root())
}

/// Two copies of `g`, each with `choice` replaced by one alternative using
/// the rules of `?`, and dominators recomputed from scratch.
fn copy_alternatives(g: &Graph, choice: NodeId) -> Result<[Graph; 2], EvalError> {
    let rules = Program::choice_rules();
    let one = |side: Side| -> Result<Graph, EvalError> {
        let mut h = g.clone();
        let rule = &rules[side.index()];
        let MatchResult::Match(m) = match_rule(&h, choice, rule)? else {
            unreachable!("the rules of `?` match every choice")
        };
        rewrite::contract(&mut h, choice, &m.redex, &m.bindings, &rule.rhs)?;
        dominance::initialize(&mut h);
        Ok(h)
    };
    Ok([one(Side::Left)?, one(Side::Right)?])
}

/// Performs one step of `c` (or reports that it is a value).
pub fn step(program: &Program, c: &mut Computation, strategy: Strategy) -> Result<StepOutcome, EvalError> {
    let target = Locator { program, g: &c.graph, normal: BTreeSet::new() }.normal_form(c.graph.root())?;
    let outcome = match target {
        Target::Normal => {
            c.status = Status::Value;
            return Ok(StepOutcome::Value(value_text(&c.graph)));
        }
        Target::Redex(n, i) => {
            let op = program.operation(c.graph.label(n).name()).expect("located through the program");
            let rule = &op.rules[i];
            let MatchResult::Match(m) = match_rule(&c.graph, n, rule)? else { unreachable!("located as a redex") };
            let out = rewrite::rewrite_at(&mut c.graph, n, rule, &m)?;
            let line = op.lines[i];
            let rule_name = if line == 0 {
                format!("{}#{}", rule.operation.name(), i + 1)
            } else {
                format!("{}@{line}", rule.operation.name())
            };
            StepOutcome::Rewrite {
                redex: n,
                rule: rule_name,
                replacement: out.contractum.root,
                fresh: out.contractum.fresh.len(),
                erased: out.erased.len(),
            }
        }
        Target::Builtin(n, result) => {
            let name = c.graph.label(n).name().to_string();
            let out = rewrite::contract(
                &mut c.graph,
                n,
                &[n],
                &BTreeMap::new(),
                &Rhs::plain(Term::Apply(result, Vec::new())),
            )?;
            StepOutcome::Rewrite {
                redex: n,
                rule: name,
                replacement: out.contractum.root,
                fresh: 1,
                erased: out.erased.len(),
            }
        }
        Target::Choice(ch) if strategy == Strategy::Copying => {
            let graphs = copy_alternatives(&c.graph, ch)?;
            StepOutcome::Split { choice: ch, copied: true, graphs: Box::new(graphs) }
        }
        Target::Choice(ch) if ch == c.graph.root() => {
            let graphs = [c.graph.extract_alternative(Side::Left)?, c.graph.extract_alternative(Side::Right)?];
            StepOutcome::Split { choice: ch, copied: false, graphs: Box::new(graphs) }
        }
        Target::Choice(ch) => {
            let (_, stats) = bubbling::bubble(&mut c.graph, ch)?;
            c.clones += stats.surviving_fresh() as u64;
            StepOutcome::Bubble(Box::new(stats))
        }
        Target::Fail(n) => {
            c.status = Status::Failed;
            StepOutcome::Fail(n)
        }
    };
    c.steps += 1;
    Ok(outcome)
}

/// Steps a single computation until it is a value, fails, splits, or the
/// budget runs out. Returns the last outcome.
pub fn normalize(program: &Program, c: &mut Computation, cfg: &EvalConfig) -> Result<StepOutcome, EvalError> {
    let start = c.steps;
    loop {
        let out = step(program, c, cfg.strategy)?;
        if cfg.validate {
            validate(&c.graph, c.steps, c.id)?;
        }
        match out {
            StepOutcome::Rewrite { .. } | StepOutcome::Bubble(_) if c.steps - start < cfg.max_steps => {}
            other => return Ok(other),
        }
    }
}

fn validate(g: &Graph, step: u64, computation: u64) -> Result<(), EvalError> {
    g.check_structure().map_err(|error| EvalError::Malformed { step, computation, error })?;
    let report = dominance::validate_attribute(g);
    if report.is_sound() {
        Ok(())
    } else {
        Err(EvalError::Unsound { step, computation, report })
    }
}

/// Distinct values in order of discovery, with multiplicities.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValueSet {
    order: Vec<String>,
    counts: BTreeMap<String, usize>,
    /// Every computation finished within the budgets.
    pub exhausted: bool,
}

impl ValueSet {
    fn insert(&mut self, v: String) {
        let n = self.counts.entry(v.clone()).or_insert(0);
        if *n == 0 {
            self.order.push(v);
        }
        *n += 1;
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Values in the order they were found.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn contains(&self, v: &str) -> bool {
        self.counts.contains_key(v)
    }

    pub fn count(&self, v: &str) -> usize {
        self.counts.get(v).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.counts
    }

    /// The values as a sorted set, for comparisons that ignore order and
    /// multiplicity.
    pub fn set(&self) -> BTreeSet<&str> {
        self.order.iter().map(String::as_str).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub steps: u64,
    pub rewrites: u64,
    pub bubbles: u64,
    pub splits: u64,
    pub failures: u64,
    /// Values found, counting duplicates.
    pub values: u64,
    /// Surviving fresh nodes created by bubbling.
    pub bubble_clones: u64,
    /// Nodes in graphs created by whole-graph copying.
    pub copied_nodes: u64,
    /// Attribute writes performed by rewrite steps.
    pub rewrite_writes: WriteCounters,
    /// Attribute writes performed by bubbling steps.
    pub bubble_writes: WriteCounters,
    pub max_queue: usize,
}

impl EvalStats {
    /// Writes per node if only labels and successors were stored, against
    /// writes with predecessors and dominators maintained as well.
    pub fn attribute_overhead(&self) -> Option<f64> {
        let mut all = self.rewrite_writes;
        all.add(&self.bubble_writes);
        let base = all.nodes_allocated + all.successor_writes;
        (base > 0).then(|| (base + all.predecessor_writes + all.dominator_writes) as f64 / base as f64)
    }
}

impl fmt::Display for EvalStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "steps             {}", self.steps)?;
        writeln!(f, "rewrites          {}", self.rewrites)?;
        writeln!(f, "bubbles           {}", self.bubbles)?;
        writeln!(f, "splits            {}", self.splits)?;
        writeln!(f, "failures          {}", self.failures)?;
        writeln!(f, "values            {}", self.values)?;
        writeln!(f, "bubble clones     {}", self.bubble_clones)?;
        writeln!(f, "copied nodes      {}", self.copied_nodes)?;
        writeln!(f, "max queue         {}", self.max_queue)?;
        for (name, w) in [("rewrite", &self.rewrite_writes), ("bubble", &self.bubble_writes)] {
            writeln!(
                f,
                "{name:<7} writes    alloc {} succ {} pred {} dom {} freed {}",
                w.nodes_allocated, w.successor_writes, w.predecessor_writes, w.dominator_writes, w.nodes_released
            )?;
        }
        match self.attribute_overhead() {
            Some(r) => write!(f, "attribute overhead {r:.3}"),
            None => write!(f, "attribute overhead n/a"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub values: ValueSet,
    pub stats: EvalStats,
}

/// One step as seen by an [`Observer`].
#[derive(Clone, Debug)]
pub struct StepEvent {
    /// Global step number, starting at 1.
    pub index: u64,
    pub computation: u64,
    pub kind: &'static str,
    pub nodes: Vec<NodeId>,
    pub detail: String,
    /// Computations created by a split.
    pub children: Vec<u64>,
    pub totals: EvalStats,
}

impl StepEvent {
    /// Tab-separated trace line.
    pub fn trace_line(&self) -> String {
        let nodes: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        let t = &self.totals;
        format!(
            "{}\tc{}\t{}\t{}\t{}\trewrites={}\tbubbles={}\tsplits={}\tfailures={}\tvalues={}",
            self.index,
            self.computation,
            self.kind,
            if nodes.is_empty() { "-".to_string() } else { nodes.join(",") },
            if self.detail.is_empty() { "-" } else { &self.detail },
            t.rewrites,
            t.bubbles,
            t.splits,
            t.failures,
            t.values
        )
    }
}

/// Receives evaluation events in schedule order.
pub trait Observer {
    fn start(&mut self, _c: &Computation) {}
    /// Called after each step with the graphs it produced: the stepped
    /// graph, or both children of a split.
    fn step(&mut self, _event: &StepEvent, _graphs: &[&Graph]) {}
    fn value(&mut self, _computation: u64, _value: &str) {}
}

impl Observer for () {}

struct Driver<'a> {
    cfg: &'a EvalConfig,
    queue: VecDeque<Computation>,
    next_id: u64,
    result: Evaluation,
}

impl Driver<'_> {
    /// Applies one step result. Returns false when the value budget is met.
    fn apply(
        &mut self,
        mut c: Computation,
        outcome: StepOutcome,
        writes: WriteCounters,
        observer: &mut dyn Observer,
    ) -> Result<bool, EvalError> {
        if let StepOutcome::Value(v) = outcome {
            observer.value(c.id, &v);
            self.result.stats.values += 1;
            self.result.values.insert(v);
            return Ok(self.result.values.len() < self.cfg.max_values);
        }
        let stats = &mut self.result.stats;
        stats.steps += 1;
        let index = stats.steps;
        let mut children = Vec::new();
        let (nodes, detail) = match &outcome {
            StepOutcome::Rewrite { redex, rule, replacement, fresh, erased } => {
                stats.rewrites += 1;
                stats.rewrite_writes.add(&writes);
                (vec![*redex, *replacement], format!("{rule} fresh={fresh} erased={erased}"))
            }
            StepOutcome::Bubble(b) => {
                stats.bubbles += 1;
                stats.bubble_clones += b.surviving_fresh() as u64;
                stats.bubble_writes.add(&writes);
                (
                    vec![b.origin, b.destination, b.replacement],
                    format!("path={} clones={}", b.path_nodes, b.surviving_fresh()),
                )
            }
            StepOutcome::Split { choice, copied, graphs } => {
                stats.splits += 1;
                if *copied {
                    stats.copied_nodes += graphs.iter().map(|g| g.len() as u64).sum::<u64>();
                }
                (vec![*choice], if *copied { "copy".to_string() } else { "root".to_string() })
            }
            StepOutcome::Fail(n) => {
                stats.failures += 1;
                (vec![*n], String::new())
            }
            StepOutcome::Value(_) => unreachable!(),
        };
        let mut event = StepEvent {
            index,
            computation: c.id,
            kind: outcome.kind(),
            nodes,
            detail,
            children: Vec::new(),
            totals: EvalStats::default(),
        };
        match outcome {
            StepOutcome::Split { copied, graphs, .. } => {
                let [l, r] = *graphs;
                let mut kids = Vec::with_capacity(2);
                for g in [l, r] {
                    let clones = if copied { g.len() as u64 } else { 0 };
                    let kid = c.child(self.next_id, g, clones);
                    self.next_id += 1;
                    if self.cfg.validate {
                        validate(&kid.graph, index, kid.id)?;
                    }
                    children.push(kid.id);
                    kids.push(kid);
                }
                event.children = children;
                event.totals = self.result.stats.clone();
                observer.step(&event, &[&kids[0].graph, &kids[1].graph]);
                self.queue.extend(kids);
            }
            StepOutcome::Fail(_) => {
                event.totals = self.result.stats.clone();
                observer.step(&event, &[&c.graph]);
            }
            _ => {
                if self.cfg.validate {
                    validate(&c.graph, index, c.id)?;
                }
                event.totals = self.result.stats.clone();
                observer.step(&event, &[&c.graph]);
                c.status = Status::Running;
                self.queue.push_back(c);
            }
        }
        self.result.stats.max_queue = self.result.stats.max_queue.max(self.queue.len());
        Ok(true)
    }
}

fn run_one(
    program: &Program,
    c: &mut Computation,
    strategy: Strategy,
) -> Result<(StepOutcome, WriteCounters), EvalError> {
    let before = c.graph.counters();
    let out = step(program, c, strategy)?;
    Ok((out, c.graph.counters().since(&before)))
}

/// Enumerates the values of `g` with fair round-robin scheduling.
pub fn compute_values(program: &Program, g: Graph, cfg: &EvalConfig) -> Result<Evaluation, EvalError> {
    compute_values_observed(program, g, cfg, &mut ())
}

pub fn compute_values_observed(
    program: &Program,
    g: Graph,
    cfg: &EvalConfig,
    observer: &mut dyn Observer,
) -> Result<Evaluation, EvalError> {
    if cfg.max_values == 0 || cfg.max_steps == 0 || cfg.jobs == 0 {
        return Err(EvalError::Config("budgets and job count must be positive".into()));
    }
    let first = Computation::new(0, g);
    if cfg.validate {
        validate(&first.graph, 0, 0)?;
    }
    observer.start(&first);
    let mut d = Driver { cfg, queue: VecDeque::from([first]), next_id: 1, result: Evaluation::default() };
    d.result.stats.max_queue = 1;
    let pool = if cfg.jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .map_err(|e| EvalError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    loop {
        if d.queue.is_empty() {
            d.result.values.exhausted = true;
            break;
        }
        let remaining = cfg.max_steps - d.result.stats.steps;
        let width = if remaining == 0 { 1 } else { cfg.jobs.min(d.queue.len()).min(remaining as usize) };
        let mut batch: Vec<Computation> = d.queue.drain(..width).collect();
        let results: Vec<Result<(StepOutcome, WriteCounters), EvalError>> = if remaining == 0 {
            // Out of steps: only values can still be reported.
            let c = &mut batch[0];
            let target = Locator { program, g: &c.graph, normal: BTreeSet::new() }.normal_form(c.graph.root())?;
            if !matches!(target, Target::Normal) {
                d.queue.push_front(batch.pop().expect("one computation"));
                break;
            }
            vec![Ok((StepOutcome::Value(value_text(&c.graph)), WriteCounters::default()))]
        } else if let Some(pool) = &pool {
            pool.install(|| batch.par_iter_mut().map(|c| run_one(program, c, cfg.strategy)).collect())
        } else {
            batch.iter_mut().map(|c| run_one(program, c, cfg.strategy)).collect()
        };
        let mut more = true;
        for (c, r) in batch.into_iter().zip(results) {
            let (out, writes) = r?;
            if !d.apply(c, out, writes, observer)? {
                more = false;
                break;
            }
        }
        if !more {
            d.result.values.exhausted = d.queue.is_empty();
            break;
        }
    }
    Ok(d.result)
}
