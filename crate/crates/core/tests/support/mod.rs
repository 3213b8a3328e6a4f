//! Independent oracles, random generators and corpus loading shared by the
//! integration tests. Nothing here calls the dominance module or the
//! bubbling implementation, so it can judge both.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use bubbly_core::graph::{Graph, NodeId, Symbol};
use bubbly_core::rewrite::{Pattern, Rhs, Rule, Term};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Base seed for randomized tests; `BUBBLY_SEED` overrides it.
pub fn base_seed() -> u64 {
    std::env::var("BUBBLY_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x5eed_b0bb)
}

pub fn rng_for(trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed().wrapping_add(trial.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

// ---------------------------------------------------------------------------
// Reachability and dominance oracles

/// Nodes reachable from the root by breadth-first search.
pub fn bfs_reachable(g: &Graph) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([g.root()]);
    let mut queue = std::collections::VecDeque::from([g.root()]);
    while let Some(n) = queue.pop_front() {
        for &s in g.successors(n) {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
    }
    seen
}

/// Proper dominator sets by iterating `Dom(n) = {n} ∪ ⋂ Dom(p)` over
/// predecessors to a fixed point, on reachable nodes only.
pub fn dataflow_dominators(g: &Graph) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let live = bfs_reachable(g);
    let root = g.root();
    let mut dom: BTreeMap<NodeId, BTreeSet<NodeId>> =
        live.iter().map(|&n| (n, if n == root { BTreeSet::from([n]) } else { live.clone() })).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &n in &live {
            if n == root {
                continue;
            }
            let mut acc: Option<BTreeSet<NodeId>> = None;
            for &(p, _) in g.predecessors(n) {
                if !live.contains(&p) {
                    continue;
                }
                acc = Some(match acc {
                    None => dom[&p].clone(),
                    Some(a) => a.intersection(&dom[&p]).copied().collect(),
                });
            }
            let mut next = acc.unwrap_or_default();
            next.insert(n);
            if next != dom[&n] {
                dom.insert(n, next);
                changed = true;
            }
        }
    }
    for (n, set) in dom.iter_mut() {
        set.remove(n);
    }
    dom
}

/// Whether every root-to-`n` path passes through `d`, by enumerating paths.
/// Exponential; only for small graphs.
pub fn path_dominates(g: &Graph, d: NodeId, n: NodeId) -> bool {
    if d == n {
        return false;
    }
    // Search for a path avoiding d, enumerating paths explicitly.
    fn avoid(g: &Graph, at: NodeId, d: NodeId, n: NodeId, path: &mut Vec<NodeId>) -> bool {
        if at == d {
            return false;
        }
        if at == n {
            return true;
        }
        path.push(at);
        let found = g.successors(at).iter().any(|&s| avoid(g, s, d, n, path));
        path.pop();
        found
    }
    !avoid(g, g.root(), d, n, &mut Vec::new())
}

/// Nodes whose stored dominator is missing or does not dominate them,
/// judged by the dataflow oracle.
pub fn unsound_dominators(g: &Graph) -> Vec<NodeId> {
    let dom = dataflow_dominators(g);
    let root = g.root();
    dom.iter()
        .filter(|(&n, set)| n != root && !g.dominator(n).is_some_and(|d| set.contains(&d)))
        .map(|(&n, _)| n)
        .collect()
}

/// Structural check plus dominator soundness under the dataflow oracle.
pub fn assert_valid(g: &Graph, context: &str) {
    if let Err(e) = g.check_structure() {
        panic!("{context}: malformed graph: {e}\n{}", g.to_dot());
    }
    assert_eq!(bfs_reachable(g), g.node_ids().collect(), "{context}: unreachable nodes retained");
    let bad = unsound_dominators(g);
    assert!(bad.is_empty(), "{context}: unsound dominators at {bad:?}\n{}", g.to_dot());
}

/// Nodes on some path from `d` to `c`, both included.
pub fn path_nodes(g: &Graph, d: NodeId, c: NodeId) -> BTreeSet<NodeId> {
    let mut from_d = BTreeSet::new();
    let mut stack = vec![d];
    while let Some(n) = stack.pop() {
        if from_d.insert(n) {
            stack.extend(g.successors(n).iter().copied());
        }
    }
    let mut to_c = BTreeSet::new();
    let mut stack = vec![c];
    while let Some(n) = stack.pop() {
        if to_c.insert(n) {
            stack.extend(g.predecessors(n).iter().map(|&(p, _)| p));
        }
    }
    from_d.intersection(&to_c).copied().collect()
}

/// Builds the result of bubbling choice `c` to `d` from its definition: the
/// nodes on paths from `d` to `c` are copied twice, the copy of `c` in the
/// i-th renaming is the i-th alternative, the two copies of `d` become the
/// alternatives of a new choice, and that choice takes the place of `d`.
/// The result is a fresh graph holding only reachable nodes.
pub fn literal_bubble(g: &Graph, c: NodeId, d: NodeId) -> Graph {
    let np = path_nodes(g, d, c);
    let alts = [g.successors(c)[0], g.successors(c)[1]];
    struct Builder<'a> {
        g: &'a Graph,
        np: &'a BTreeSet<NodeId>,
        c: NodeId,
        d: NodeId,
        alts: [NodeId; 2],
        out: Graph,
        shared: HashMap<NodeId, NodeId>,
        copies: [HashMap<NodeId, NodeId>; 2],
        r: Option<NodeId>,
    }
    impl Builder<'_> {
        fn shared(&mut self, n: NodeId) -> NodeId {
            if n == self.d {
                return self.replacement();
            }
            if let Some(&m) = self.shared.get(&n) {
                return m;
            }
            assert!(!self.np.contains(&n), "edge into the path region bypassing the destination");
            let succ: Vec<NodeId> = self.g.successors(n).to_vec().into_iter().map(|s| self.shared(s)).collect();
            let m = self.out.add_node(self.g.label(n).clone(), &succ).unwrap();
            self.shared.insert(n, m);
            m
        }

        fn copy(&mut self, i: usize, n: NodeId) -> NodeId {
            if n == self.c {
                return self.shared(self.alts[i]);
            }
            if let Some(&m) = self.copies[i].get(&n) {
                return m;
            }
            let succ: Vec<NodeId> = self
                .g
                .successors(n)
                .to_vec()
                .into_iter()
                .map(|s| if self.np.contains(&s) { self.copy(i, s) } else { self.shared(s) })
                .collect();
            let m = self.out.add_node(self.g.label(n).clone(), &succ).unwrap();
            self.copies[i].insert(n, m);
            m
        }

        fn replacement(&mut self) -> NodeId {
            if let Some(r) = self.r {
                return r;
            }
            let l = self.copy(0, self.d);
            let r = self.copy(1, self.d);
            let r = self.out.add_node(Symbol::choice(), &[l, r]).unwrap();
            self.r = Some(r);
            r
        }
    }
    let mut b = Builder {
        g,
        np: &np,
        c,
        d,
        alts,
        out: Graph::new(),
        shared: HashMap::new(),
        copies: [HashMap::new(), HashMap::new()],
        r: None,
    };
    let root = b.shared(g.root());
    let mut out = b.out;
    out.set_root(root).unwrap();
    out.gc();
    out
}

// ---------------------------------------------------------------------------
// Random graphs

/// A random rooted DAG of at most `max_nodes` nodes mixing constructors,
/// operations and choices, with immediate dominators stored. Returns `None`
/// if the reachable part has no non-root choice.
pub fn random_dag(rng: &mut impl Rng, max_nodes: usize) -> Graph {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let mut g = Graph::new();
    let mut ids: Vec<NodeId> = Vec::new();
    for i in 0..n {
        let last = i + 1 == n;
        let label = if i == 0 {
            Symbol::int(rng.gen_range(0..3))
        } else {
            match rng.gen_range(0..10) {
                0..=2 => Symbol::choice(),
                3..=5 => {
                    let a = rng.gen_range(0..=3usize);
                    Symbol::operation(["k", "f", "g", "h"][a], a)
                }
                6 if !last => Symbol::int(rng.gen_range(0..3)),
                _ => {
                    let a = rng.gen_range(1..=2usize);
                    Symbol::constructor(["A", "B", "C"][a], a)
                }
            }
        };
        // Prefer recent nodes so the graph is deep rather than flat.
        let succ: Vec<NodeId> = (0..label.arity())
            .map(|_| {
                let lo = ids.len().saturating_sub(6);
                let k = if rng.gen_bool(0.75) { rng.gen_range(lo..ids.len()) } else { rng.gen_range(0..ids.len()) };
                ids[k]
            })
            .collect();
        ids.push(g.add_node(label, &succ).unwrap());
    }
    g.set_root(*ids.last().unwrap()).unwrap();
    g.gc();
    bubbly_core::dominance::initialize(&mut g);
    g
}

/// Replaces some stored dominators by random proper dominators higher up,
/// keeping the attribute sound but not immediate.
pub fn weaken_dominators(g: &mut Graph, rng: &mut impl Rng, probability: f64) {
    let dom = dataflow_dominators(g);
    for (n, set) in dom {
        if n != g.root() && rng.gen_bool(probability) {
            let choices: Vec<NodeId> = set.into_iter().collect();
            g.set_dominator(n, Some(*choices.choose(rng).unwrap()));
        }
    }
}

pub fn non_root_choices(g: &Graph) -> Vec<NodeId> {
    g.node_ids().filter(|&n| n != g.root() && g.label(n).is_choice()).collect()
}

// ---------------------------------------------------------------------------
// Random rule systems

/// A random left-linear, constructor-based, inductively sequential rule
/// system over a fixed signature, keyed by operation name.
pub struct RandomProgram {
    pub constructors: Vec<Symbol>,
    pub operations: Vec<Symbol>,
    pub rules: BTreeMap<String, Vec<Rule>>,
}

impl RandomProgram {
    pub fn rules_for(&self, op: &Symbol) -> &[Rule] {
        self.rules.get(op.name()).map_or(&[], Vec::as_slice)
    }
}

pub fn random_program(rng: &mut impl Rng) -> RandomProgram {
    let constructors = vec![
        Symbol::constructor("Z", 0),
        Symbol::constructor("O", 0),
        Symbol::constructor("S", 1),
        Symbol::constructor("P", 2),
    ];
    let n_ops = rng.gen_range(2..=4);
    let operations: Vec<Symbol> =
        (0..n_ops).map(|i| Symbol::operation(&format!("op{i}"), rng.gen_range(0..=2))).collect();
    let mut rules = BTreeMap::new();
    for op in &operations {
        let mut counter = 0;
        let args: Vec<Pattern> = (0..op.arity()).map(|_| fresh_var(&mut counter)).collect();
        let mut out = Vec::new();
        split_patterns(rng, &constructors, &operations, op, args, &mut counter, 0, &mut out);
        rules.insert(op.name().to_string(), out);
    }
    RandomProgram { constructors, operations, rules }
}

fn fresh_var(counter: &mut usize) -> Pattern {
    *counter += 1;
    Pattern::Var(format!("v{counter}"))
}

fn var_paths(ps: &[Pattern], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    for (i, p) in ps.iter().enumerate() {
        prefix.push(i);
        match p {
            Pattern::Var(_) => out.push(prefix.clone()),
            Pattern::Apply(_, sub) => var_paths(sub, prefix, out),
            Pattern::Wildcard => {}
        }
        prefix.pop();
    }
}

fn substitute(ps: &mut [Pattern], path: &[usize], with: Pattern) {
    if path.len() == 1 {
        ps[path[0]] = with;
    } else if let Pattern::Apply(_, sub) = &mut ps[path[0]] {
        substitute(sub, &path[1..], with);
    }
}

/// Grows a definitional tree at random and emits one rule per leaf; some
/// constructors are left without a branch so that failures occur.
#[allow(clippy::too_many_arguments)]
fn split_patterns(
    rng: &mut impl Rng,
    constructors: &[Symbol],
    operations: &[Symbol],
    op: &Symbol,
    args: Vec<Pattern>,
    counter: &mut usize,
    depth: usize,
    out: &mut Vec<Rule>,
) {
    let mut paths = Vec::new();
    var_paths(&args, &mut Vec::new(), &mut paths);
    if paths.is_empty() || depth >= 2 || rng.gen_bool(0.35) {
        let rhs = random_rhs(rng, constructors, operations, &args);
        out.push(Rule { operation: op.clone(), args, rhs });
        return;
    }
    let path = paths.choose(rng).unwrap().clone();
    for c in constructors {
        if rng.gen_bool(0.2) {
            continue;
        }
        let mut next = args.clone();
        let sub = (0..c.arity()).map(|_| fresh_var(counter)).collect();
        substitute(&mut next, &path, Pattern::Apply(c.clone(), sub));
        split_patterns(rng, constructors, operations, op, next, counter, depth + 1, out);
    }
}

fn random_rhs(rng: &mut impl Rng, constructors: &[Symbol], operations: &[Symbol], args: &[Pattern]) -> Rhs {
    let mut vars = Vec::new();
    args.iter().for_each(|p| p.vars(&mut vars));
    let vars: Vec<String> = vars.into_iter().map(String::from).collect();
    let mut locals = Vec::new();
    let mut scope = vars.clone();
    if rng.gen_bool(0.3) {
        let t = random_term(rng, constructors, operations, &scope, 2);
        locals.push(("w".to_string(), t));
        scope.push("w".to_string());
    }
    let body = if !vars.is_empty() && rng.gen_bool(0.25) {
        Term::Var(vars.choose(rng).unwrap().clone())
    } else {
        random_term(rng, constructors, operations, &scope, 3)
    };
    Rhs { body, locals }
}

pub fn random_term(
    rng: &mut impl Rng,
    constructors: &[Symbol],
    operations: &[Symbol],
    vars: &[String],
    depth: usize,
) -> Term {
    if !vars.is_empty() && (depth == 0 || rng.gen_bool(0.3)) {
        return Term::Var(vars.choose(rng).unwrap().clone());
    }
    let pick = rng.gen_range(0..10);
    let sym = if depth == 0 {
        constructors.iter().filter(|c| c.arity() == 0).collect::<Vec<_>>().choose(rng).copied().unwrap().clone()
    } else if pick < 2 {
        Symbol::choice()
    } else if pick < 5 {
        operations.choose(rng).unwrap().clone()
    } else {
        constructors.choose(rng).unwrap().clone()
    };
    let args =
        (0..sym.arity()).map(|_| random_term(rng, constructors, operations, vars, depth.saturating_sub(1))).collect();
    Term::Apply(sym, args)
}

/// A random closed expression graph over the program's signature, with
/// some subterms shared, and immediate dominators stored.
pub fn random_expression(rng: &mut impl Rng, p: &RandomProgram, max_nodes: usize) -> Graph {
    loop {
        let mut locals = Vec::new();
        let mut scope = Vec::new();
        for i in 0..rng.gen_range(0..=2) {
            let t = random_term(rng, &p.constructors, &p.operations, &scope, 2);
            let name = format!("s{i}");
            locals.push((name.clone(), t));
            scope.push(name);
        }
        let body = random_term(rng, &p.constructors, &p.operations, &scope, 4);
        let rhs = Rhs { body, locals };
        let mut g = Graph::new();
        let c = bubbly_core::rewrite::build_contractum(&mut g, &BTreeMap::new(), &rhs).unwrap();
        g.set_root(c.root).unwrap();
        g.gc();
        if g.len() <= max_nodes {
            bubbly_core::dominance::initialize(&mut g);
            return g;
        }
    }
}

// ---------------------------------------------------------------------------
// Corpus

pub struct CorpusEval {
    pub expr: String,
    pub expect: Option<BTreeSet<String>>,
    pub line: usize,
}

pub struct CorpusProgram {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub evals: Vec<CorpusEval>,
}

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Every `.fl` file in the corpus, with its `-- eval:` lines and the
/// `-- expect:` line following each (values separated by `;`).
pub fn corpus() -> Vec<CorpusProgram> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "fl"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|path| {
            let source = std::fs::read_to_string(&path).unwrap();
            let mut evals: Vec<CorpusEval> = Vec::new();
            for (i, line) in source.lines().enumerate() {
                if let Some(e) = line.strip_prefix("-- eval:") {
                    evals.push(CorpusEval { expr: e.trim().to_string(), expect: None, line: i + 1 });
                } else if let Some(v) = line.strip_prefix("-- expect:") {
                    let last = evals.last_mut().expect("expect follows an eval line");
                    last.expect =
                        Some(v.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect());
                }
            }
            CorpusProgram { name: path.file_stem().unwrap().to_string_lossy().into_owned(), path, source, evals }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Randomized trials shared by the property and acceptance suites

/// What one trial exercised.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrialCount {
    pub steps: usize,
    pub max_nodes: usize,
}

fn dataflow_failure(g: &Graph) -> Option<String> {
    if let Err(e) = g.check_structure() {
        return Some(format!("malformed: {e}"));
    }
    let bad = unsound_dominators(g);
    (!bad.is_empty()).then(|| format!("dataflow oracle rejects dominators of {bad:?}"))
}

/// Random rewrites anywhere in a random expression over a random rule
/// system; after each, the attribute must be sound. Graphs stay at or below
/// `max_nodes` nodes.
pub fn rewrite_trial(trial: u64, max_nodes: usize) -> Result<TrialCount, String> {
    use bubbly_core::dominance::validate_attribute;
    use bubbly_core::rewrite::{match_rule, rewrite_at, Match, MatchResult};
    fn redexes<'a>(g: &Graph, p: &'a RandomProgram) -> Result<Vec<(NodeId, &'a Rule, Match)>, String> {
        let mut out = Vec::new();
        for n in g.node_ids() {
            let label = g.label(n).clone();
            if !label.is_operation() {
                continue;
            }
            for rule in p.rules_for(&label) {
                if let MatchResult::Match(m) = match_rule(g, n, rule).map_err(|e| e.to_string())? {
                    out.push((n, rule, m));
                }
            }
        }
        Ok(out)
    }
    let mut rng = rng_for(trial);
    // Resample until there is something to rewrite.
    let (p, mut g) = loop {
        let p = random_program(&mut rng);
        let g = random_expression(&mut rng, &p, max_nodes);
        if !redexes(&g, &p)?.is_empty() {
            break (p, g);
        }
    };
    let mut count = TrialCount { steps: 0, max_nodes: g.len() };
    for _ in 0..12 {
        let candidates = redexes(&g, &p)?;
        let Some((n, rule, m)) = candidates.choose(&mut rng) else { break };
        let before = g.show(g.root());
        let mut next = g.clone();
        rewrite_at(&mut next, *n, rule, m).map_err(|e| format!("rewrite at {n} of {before}: {e}"))?;
        if next.len() > max_nodes {
            break;
        }
        g = next;
        count.steps += 1;
        let report = validate_attribute(&g);
        if !report.is_sound() {
            return Err(format!("trial {trial}: rewrite of {before} at {n} by {rule}\n{report}"));
        }
        if let Some(why) = dataflow_failure(&g) {
            return Err(format!("trial {trial}: rewrite of {before} at {n}: {why}"));
        }
        count.max_nodes = count.max_nodes.max(g.len());
    }
    Ok(count)
}

/// Random bubbles on a random graph with a randomly weakened (sound, not
/// necessarily immediate) attribute. After each bubble the attribute must
/// be sound and the graph isomorphic to the literal construction.
pub fn bubble_trial(trial: u64, max_nodes: usize) -> Result<TrialCount, String> {
    use bubbly_core::bubbling::bubble;
    use bubbly_core::dominance::validate_attribute;
    let mut rng = rng_for(trial);
    // Resample until there is something to bubble.
    let mut g = loop {
        let g = if trial.is_multiple_of(2) {
            random_dag(&mut rng, max_nodes)
        } else {
            let p = random_program(&mut rng);
            random_expression(&mut rng, &p, max_nodes)
        };
        if !non_root_choices(&g).is_empty() {
            break g;
        }
    };
    weaken_dominators(&mut g, &mut rng, 0.3);
    let mut count = TrialCount { steps: 0, max_nodes: g.len() };
    for _ in 0..4 {
        let choices = non_root_choices(&g);
        let Some(&c) = choices.choose(&mut rng) else { break };
        let d = g.dominator(c).expect("non-root node");
        let expected = literal_bubble(&g, c, d);
        let before = g.to_dot();
        bubble(&mut g, c).map_err(|e| format!("trial {trial}: bubble {c} to {d}: {e}\n{before}"))?;
        count.steps += 1;
        let report = validate_attribute(&g);
        if !report.is_sound() {
            return Err(format!(
                "trial {trial}: bubble {c} to {d}\n{report}\nbefore:\n{before}\nafter:\n{}",
                g.to_dot()
            ));
        }
        if let Some(why) = dataflow_failure(&g) {
            return Err(format!("trial {trial}: bubble {c} to {d}: {why}\n{before}"));
        }
        if !g.isomorphic(&expected) {
            return Err(format!(
                "trial {trial}: bubble {c} to {d} differs from the literal construction\nbefore:\n{before}\ngot:\n{}\nexpected:\n{}",
                g.to_dot(),
                expected.to_dot()
            ));
        }
        count.max_nodes = count.max_nodes.max(g.len());
        if g.len() > 2 * max_nodes {
            break;
        }
    }
    Ok(count)
}

/// Source text of a random rule system, loadable by the parser.
pub fn program_text(p: &RandomProgram) -> String {
    fn pat(p: &Pattern) -> String {
        match p {
            Pattern::Var(v) => v.clone(),
            Pattern::Wildcard => "_".into(),
            Pattern::Apply(s, a) if a.is_empty() => s.name().to_string(),
            Pattern::Apply(s, a) => format!("({} {})", s.name(), a.iter().map(pat).collect::<Vec<_>>().join(" ")),
        }
    }
    fn term(t: &Term) -> String {
        match t {
            Term::Var(v) => v.clone(),
            Term::Apply(s, a) if a.is_empty() => s.name().to_string(),
            Term::Apply(s, a) if s.is_choice() => format!("({} ? {})", term(&a[0]), term(&a[1])),
            Term::Apply(s, a) => format!("({} {})", s.name(), a.iter().map(term).collect::<Vec<_>>().join(" ")),
        }
    }
    let mut out = String::from("data T = Z | O | S T | P T T\n");
    for rules in p.rules.values() {
        for r in rules {
            out.push_str(r.operation.name());
            for a in &r.args {
                out.push(' ');
                out.push_str(&pat(a));
            }
            out.push_str(" = ");
            out.push_str(&term(&r.rhs.body));
            for (i, (n, t)) in r.rhs.locals.iter().enumerate() {
                out.push_str(if i == 0 { " where " } else { "; " });
                out.push_str(&format!("{n} = {}", term(t)));
            }
            out.push('\n');
        }
    }
    out
}
