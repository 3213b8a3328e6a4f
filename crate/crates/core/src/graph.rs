//! Rooted term graphs with a stored dominator per node.
//!
//! Every node records its label, its ordered successors, the multiset of
//! `(predecessor, argument index)` edges pointing at it, and a dominator
//! attribute. The attribute is kept bidirectionally: each node also knows the
//! set of nodes whose stored dominator it is.
//!
//! Graphs are acyclic. Node identifiers are never reused within one graph.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::operators;

/// Name of the predeclared choice operation.
pub const CHOICE: &str = "?";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Constructor,
    Operation,
    Choice,
}

/// A node label: a name together with its kind and arity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Symbol {
    name: Arc<str>,
    kind: SymbolKind,
    arity: usize,
}

impl Symbol {
    pub fn constructor(name: &str, arity: usize) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Constructor, arity }
    }

    pub fn operation(name: &str, arity: usize) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Operation, arity }
    }

    pub fn choice() -> Self {
        Symbol { name: CHOICE.into(), kind: SymbolKind::Choice, arity: 2 }
    }

    /// Integer literals are nullary constructors named by their decimal text.
    pub fn int(value: i64) -> Self {
        Symbol::constructor(&value.to_string(), 0)
    }

    pub fn boolean(value: bool) -> Self {
        Symbol::constructor(if value { "True" } else { "False" }, 0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_choice(&self) -> bool {
        self.kind == SymbolKind::Choice
    }

    pub fn is_constructor(&self) -> bool {
        self.kind == SymbolKind::Constructor
    }

    pub fn is_operation(&self) -> bool {
        self.kind == SymbolKind::Operation
    }

    pub fn as_int(&self) -> Option<i64> {
        if self.kind == SymbolKind::Constructor && self.arity == 0 {
            self.name.parse().ok()
        } else {
            None
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("`{symbol}` takes {expected} arguments, got {found}")]
    Arity { symbol: String, expected: usize, found: usize },
    #[error("cannot replace {0} with itself")]
    SelfReplace(NodeId),
    #[error("replacing {from} with {to} would create a cycle")]
    Cycle { from: NodeId, to: NodeId },
    #[error("root {0} is not labeled by a choice")]
    RootNotChoice(NodeId),
    #[error("graph has no root")]
    NoRoot,
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Which alternative of a choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    label: Symbol,
    successors: Vec<NodeId>,
    predecessors: Vec<(NodeId, usize)>,
    dominator: Option<NodeId>,
    dominated: BTreeSet<NodeId>,
}

impl Node {
    pub fn label(&self) -> &Symbol {
        &self.label
    }

    pub fn successors(&self) -> &[NodeId] {
        &self.successors
    }

    /// Incoming edges as `(predecessor, argument index)`; one entry per edge.
    pub fn predecessors(&self) -> &[(NodeId, usize)] {
        &self.predecessors
    }

    pub fn dominator(&self) -> Option<NodeId> {
        self.dominator
    }

    /// Nodes whose stored dominator is this node.
    pub fn dominated(&self) -> &BTreeSet<NodeId> {
        &self.dominated
    }
}

/// Running totals of attribute writes, used for overhead reporting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WriteCounters {
    pub nodes_allocated: u64,
    pub nodes_released: u64,
    pub successor_writes: u64,
    pub predecessor_writes: u64,
    pub dominator_writes: u64,
}

impl WriteCounters {
    pub fn since(&self, earlier: &WriteCounters) -> WriteCounters {
        WriteCounters {
            nodes_allocated: self.nodes_allocated - earlier.nodes_allocated,
            nodes_released: self.nodes_released - earlier.nodes_released,
            successor_writes: self.successor_writes - earlier.successor_writes,
            predecessor_writes: self.predecessor_writes - earlier.predecessor_writes,
            dominator_writes: self.dominator_writes - earlier.dominator_writes,
        }
    }

    pub fn add(&mut self, other: &WriteCounters) {
        self.nodes_allocated += other.nodes_allocated;
        self.nodes_released += other.nodes_released;
        self.successor_writes += other.successor_writes;
        self.predecessor_writes += other.predecessor_writes;
        self.dominator_writes += other.dominator_writes;
    }
}

/// Summary of the node records read or written while a probe was active.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessLog {
    pub touched: BTreeSet<NodeId>,
    pub accesses: u64,
}

#[derive(Debug, Default)]
struct Probe {
    enabled: Cell<bool>,
    accesses: Cell<u64>,
    touched: RefCell<BTreeSet<NodeId>>,
}

/// A node released by [`Graph::reclaim`], with its record at removal time.
#[derive(Clone, Debug)]
pub struct Released {
    pub id: NodeId,
    pub label: Symbol,
    pub dominated: BTreeSet<NodeId>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: BTreeMap<NodeId, Node>,
    root: Option<NodeId>,
    next: u32,
    counters: WriteCounters,
    probe: Probe,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        Graph {
            nodes: self.nodes.clone(),
            root: self.root,
            next: self.next,
            counters: self.counters,
            probe: Probe::default(),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root.expect("graph has no root")
    }

    pub fn try_root(&self) -> Option<NodeId> {
        self.root
    }

    /// Makes `n` the root; clears its stored dominator.
    pub fn set_root(&mut self, n: NodeId) -> Result<(), GraphError> {
        self.check(n)?;
        self.set_dominator(n, None);
        self.root = Some(n);
        Ok(())
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains_key(&n)
    }

    /// Identifier the next allocated node will receive. Every node allocated
    /// after this call has an id at or above the returned watermark.
    pub fn watermark(&self) -> NodeId {
        NodeId(self.next)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn counters(&self) -> WriteCounters {
        self.counters
    }

    // --- access instrumentation -------------------------------------------

    pub fn start_probe(&self) {
        self.probe.enabled.set(true);
        self.probe.accesses.set(0);
        self.probe.touched.borrow_mut().clear();
    }

    pub fn finish_probe(&self) -> AccessLog {
        self.probe.enabled.set(false);
        AccessLog {
            touched: std::mem::take(&mut *self.probe.touched.borrow_mut()),
            accesses: self.probe.accesses.replace(0),
        }
    }

    #[inline]
    fn touch(&self, n: NodeId) {
        if self.probe.enabled.get() {
            self.probe.accesses.set(self.probe.accesses.get() + 1);
            self.probe.touched.borrow_mut().insert(n);
        }
    }

    fn check(&self, n: NodeId) -> Result<(), GraphError> {
        if self.nodes.contains_key(&n) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(n))
        }
    }

    // --- reads ------------------------------------------------------------

    pub fn node(&self, n: NodeId) -> &Node {
        self.touch(n);
        match self.nodes.get(&n) {
            Some(node) => node,
            None => panic!("unknown node {n}"),
        }
    }

    fn node_mut(&mut self, n: NodeId) -> &mut Node {
        self.touch(n);
        match self.nodes.get_mut(&n) {
            Some(node) => node,
            None => panic!("unknown node {n}"),
        }
    }

    pub fn get(&self, n: NodeId) -> Option<&Node> {
        self.touch(n);
        self.nodes.get(&n)
    }

    pub fn label(&self, n: NodeId) -> &Symbol {
        &self.node(n).label
    }

    pub fn successors(&self, n: NodeId) -> &[NodeId] {
        &self.node(n).successors
    }

    pub fn predecessors(&self, n: NodeId) -> &[(NodeId, usize)] {
        &self.node(n).predecessors
    }

    pub fn dominator(&self, n: NodeId) -> Option<NodeId> {
        self.node(n).dominator
    }

    pub fn dominated(&self, n: NodeId) -> &BTreeSet<NodeId> {
        &self.node(n).dominated
    }

    // --- construction -----------------------------------------------------

    /// Adds a node whose successors already exist. The dominator attribute is
    /// left unset.
    pub fn add_node(&mut self, label: Symbol, successors: &[NodeId]) -> Result<NodeId, GraphError> {
        if successors.len() != label.arity() {
            return Err(GraphError::Arity {
                symbol: label.name().to_string(),
                expected: label.arity(),
                found: successors.len(),
            });
        }
        for &s in successors {
            self.check(s)?;
        }
        let id = self.alloc(label);
        for &s in successors {
            self.push_successor(id, s);
        }
        Ok(id)
    }

    /// Allocates a node with no successors yet; callers fill them with
    /// [`Graph::push_successor`] up to the label's arity.
    pub(crate) fn alloc(&mut self, label: Symbol) -> NodeId {
        let id = NodeId(self.next);
        self.next += 1;
        self.counters.nodes_allocated += 1;
        self.touch(id);
        self.nodes.insert(
            id,
            Node {
                successors: Vec::with_capacity(label.arity()),
                label,
                predecessors: Vec::new(),
                dominator: None,
                dominated: BTreeSet::new(),
            },
        );
        id
    }

    /// Allocates a node with the label and successors of `original`.
    pub(crate) fn clone_node(&mut self, original: NodeId) -> NodeId {
        let (label, succ) = {
            let node = self.node(original);
            (node.label.clone(), node.successors.clone())
        };
        let id = self.alloc(label);
        for s in succ {
            self.push_successor(id, s);
        }
        id
    }

    pub(crate) fn push_successor(&mut self, n: NodeId, s: NodeId) {
        let idx = {
            let node = self.node_mut(n);
            node.successors.push(s);
            node.successors.len() - 1
        };
        self.node_mut(s).predecessors.push((n, idx));
        self.counters.successor_writes += 1;
        self.counters.predecessor_writes += 1;
    }

    /// Points argument `idx` of `n` at `s`, keeping predecessor lists exact.
    pub(crate) fn set_successor(&mut self, n: NodeId, idx: usize, s: NodeId) {
        let old = std::mem::replace(&mut self.node_mut(n).successors[idx], s);
        self.remove_pred_edge(old, n, idx);
        self.node_mut(s).predecessors.push((n, idx));
        self.counters.successor_writes += 1;
        self.counters.predecessor_writes += 2;
    }

    fn remove_pred_edge(&mut self, target: NodeId, pred: NodeId, idx: usize) {
        let preds = &mut self.node_mut(target).predecessors;
        let pos = preds.iter().position(|&e| e == (pred, idx)).expect("predecessor list out of sync with successors");
        preds.swap_remove(pos);
    }

    /// Sets (or clears) the stored dominator of `n`, maintaining the inverse
    /// index.
    pub fn set_dominator(&mut self, n: NodeId, d: Option<NodeId>) {
        let old = std::mem::replace(&mut self.node_mut(n).dominator, d);
        if old == d {
            return;
        }
        self.counters.dominator_writes += 1;
        if let Some(o) = old {
            self.touch(o);
            if let Some(node) = self.nodes.get_mut(&o) {
                node.dominated.remove(&n);
            }
        }
        if let Some(d) = d {
            self.node_mut(d).dominated.insert(n);
        }
    }

    // --- redirection and collection ----------------------------------------

    /// Redirects every edge into `p` to `q`. The stored dominator of `q`
    /// becomes the former dominator of `p`; if `p` was the root, `q` becomes
    /// the root. `p` keeps its outgoing edges.
    pub fn replace(&mut self, p: NodeId, q: NodeId) -> Result<(), GraphError> {
        self.check(p)?;
        self.check(q)?;
        if p == q {
            return Err(GraphError::SelfReplace(p));
        }
        debug_assert!(!self.reaches(q, p), "replacing {p} with {q} would create a cycle");
        let incoming = std::mem::take(&mut self.node_mut(p).predecessors);
        for &(pred, idx) in &incoming {
            self.node_mut(pred).successors[idx] = q;
            self.counters.successor_writes += 1;
        }
        self.counters.predecessor_writes += incoming.len() as u64;
        self.node_mut(q).predecessors.extend(incoming);
        if self.root == Some(p) {
            self.root = Some(q);
            self.set_dominator(q, None);
        } else {
            let d = self.dominator(p);
            self.set_dominator(q, d);
        }
        Ok(())
    }

    /// Like [`Graph::replace`], but refuses a redirection that would close a
    /// cycle instead of only checking in debug builds.
    pub fn replace_checked(&mut self, p: NodeId, q: NodeId) -> Result<(), GraphError> {
        self.check(p)?;
        self.check(q)?;
        if p != q && self.reaches(q, p) {
            return Err(GraphError::Cycle { from: p, to: q });
        }
        self.replace(p, q)
    }

    /// Removes `start` if it has no incoming edges and is not the root, then
    /// cascades to successors that lose their last incoming edge.
    ///
    /// On an acyclic graph whose nodes were all reachable before some edges
    /// were redirected, this removes exactly the nodes that became
    /// unreachable, while touching only those nodes and their successors.
    pub fn reclaim(&mut self, start: NodeId) -> Vec<Released> {
        let mut released = Vec::new();
        let mut work = vec![start];
        while let Some(n) = work.pop() {
            if Some(n) == self.root || !self.contains(n) || !self.node(n).predecessors.is_empty() {
                continue;
            }
            let node = self.nodes.remove(&n).expect("checked above");
            self.counters.nodes_released += 1;
            for (idx, &s) in node.successors.iter().enumerate() {
                self.remove_pred_edge(s, n, idx);
                self.counters.predecessor_writes += 1;
                if self.node(s).predecessors.is_empty() {
                    work.push(s);
                }
            }
            if let Some(d) = node.dominator {
                if let Some(dn) = self.nodes.get_mut(&d) {
                    dn.dominated.remove(&n);
                }
                self.touch(d);
            }
            released.push(Released { id: n, label: node.label, dominated: node.dominated });
        }
        released
    }

    /// Removes every node unreachable from the root and returns the removed
    /// set.
    pub fn gc(&mut self) -> BTreeSet<NodeId> {
        let live = self.reachable();
        let dead: BTreeSet<NodeId> = self.nodes.keys().filter(|n| !live.contains(n)).copied().collect();
        for &n in &dead {
            let node = self.nodes.remove(&n).expect("listed above");
            self.counters.nodes_released += 1;
            for (idx, &s) in node.successors.iter().enumerate() {
                if let Some(sn) = self.nodes.get_mut(&s) {
                    if let Some(pos) = sn.predecessors.iter().position(|&e| e == (n, idx)) {
                        sn.predecessors.swap_remove(pos);
                    }
                }
            }
            if let Some(d) = node.dominator {
                if let Some(dn) = self.nodes.get_mut(&d) {
                    dn.dominated.remove(&n);
                }
            }
        }
        dead
    }

    /// Nodes reachable from the root (the root included).
    pub fn reachable(&self) -> BTreeSet<NodeId> {
        match self.root {
            Some(r) => self.reachable_from(r),
            None => BTreeSet::new(),
        }
    }

    pub fn reachable_from(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.nodes[&n].successors.iter().copied());
            }
        }
        seen
    }

    /// Whether a (possibly empty) path leads from `from` to `to`.
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.nodes[&n].successors.iter().copied());
            }
        }
        false
    }

    /// A new graph rooted at one alternative of the root choice, holding only
    /// the nodes reachable from it. Surviving nodes keep their stored
    /// dominator when it survives too; otherwise the new root takes over.
    pub fn extract_alternative(&self, side: Side) -> Result<Graph, GraphError> {
        let root = self.root.ok_or(GraphError::NoRoot)?;
        if !self.node(root).label.is_choice() {
            return Err(GraphError::RootNotChoice(root));
        }
        let alt = self.node(root).successors[side.index()];
        let mut g = self.clone();
        g.set_dominator(alt, None);
        g.root = Some(alt);
        g.gc();
        let orphaned: Vec<NodeId> = g
            .nodes
            .iter()
            .filter(|(&n, node)| n != alt && node.dominator.is_none_or(|d| !g.nodes.contains_key(&d)))
            .map(|(&n, _)| n)
            .collect();
        for n in orphaned {
            g.set_dominator(n, Some(alt));
        }
        Ok(g)
    }

    /// Checks the structural invariants: bidirectional edges, arities,
    /// reachability, acyclicity, and consistency of the dominator index.
    /// Soundness of the stored dominators is checked separately by the
    /// dominance oracle.
    pub fn check_structure(&self) -> Result<(), GraphError> {
        let root = self.root.ok_or(GraphError::NoRoot)?;
        if !self.nodes.contains_key(&root) {
            return Err(GraphError::Invariant(format!("root {root} is not a node")));
        }
        let mut expected: HashMap<NodeId, Vec<(NodeId, usize)>> = HashMap::new();
        for (&n, node) in &self.nodes {
            if node.successors.len() != node.label.arity() {
                return Err(GraphError::Invariant(format!(
                    "{n} labeled `{}` has {} successors",
                    node.label,
                    node.successors.len()
                )));
            }
            for (idx, &s) in node.successors.iter().enumerate() {
                if !self.nodes.contains_key(&s) {
                    return Err(GraphError::Invariant(format!("{n} points at missing {s}")));
                }
                expected.entry(s).or_default().push((n, idx));
            }
        }
        for (&n, node) in &self.nodes {
            let mut want = expected.remove(&n).unwrap_or_default();
            let mut have = node.predecessors.clone();
            want.sort();
            have.sort();
            if want != have {
                return Err(GraphError::Invariant(format!("predecessors of {n} are {have:?}, edges say {want:?}")));
            }
            match (n == root, node.dominator) {
                (true, Some(d)) => {
                    return Err(GraphError::Invariant(format!("root {n} has dominator {d}")));
                }
                (false, None) => {
                    return Err(GraphError::Invariant(format!("{n} has no dominator")));
                }
                (false, Some(d)) => match self.nodes.get(&d) {
                    None => return Err(GraphError::Invariant(format!("{n} dominated by missing {d}"))),
                    Some(dn) if !dn.dominated.contains(&n) => {
                        return Err(GraphError::Invariant(format!("{d} does not list {n} as dominated")));
                    }
                    _ => {}
                },
                (true, None) => {}
            }
            for &z in &node.dominated {
                if self.nodes.get(&z).and_then(|zn| zn.dominator) != Some(n) {
                    return Err(GraphError::Invariant(format!("{n} lists {z} as dominated")));
                }
            }
        }
        let live = self.reachable();
        if live.len() != self.nodes.len() {
            let dead: Vec<_> = self.nodes.keys().filter(|n| !live.contains(n)).collect();
            return Err(GraphError::Invariant(format!("unreachable nodes {dead:?}")));
        }
        if let Some(n) = self.find_cycle() {
            return Err(GraphError::Invariant(format!("cycle through {n}")));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<NodeId> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: HashMap<NodeId, Mark> = HashMap::new();
        for &start in self.nodes.keys() {
            if marks.contains_key(&start) {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            marks.insert(start, Mark::Open);
            while let Some(top) = stack.last_mut() {
                let (n, i) = *top;
                let succ = &self.nodes[&n].successors;
                if i < succ.len() {
                    let s = succ[i];
                    top.1 += 1;
                    match marks.get(&s) {
                        Some(Mark::Open) => return Some(s),
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(s, Mark::Open);
                            stack.push((s, 0));
                        }
                    }
                } else {
                    marks.insert(n, Mark::Done);
                    stack.pop();
                }
            }
        }
        None
    }

    // --- comparison and rendering -----------------------------------------

    /// Whether the two graphs are equal up to a renaming of nodes that
    /// respects the root, labels, and successor order. Stored dominators are
    /// ignored.
    pub fn isomorphic(&self, other: &Graph) -> bool {
        self.correspondence(other).is_some()
    }

    /// Like [`Graph::isomorphic`], and the renaming also maps every stored
    /// dominator onto the corresponding stored dominator.
    pub fn isomorphic_with_dominators(&self, other: &Graph) -> bool {
        match self.correspondence(other) {
            None => false,
            Some(map) => {
                map.iter().all(|(&a, &b)| self.nodes[&a].dominator.map(|d| map[&d]) == other.nodes[&b].dominator)
            }
        }
    }

    /// The node bijection witnessing isomorphism, if there is one.
    pub fn correspondence(&self, other: &Graph) -> Option<HashMap<NodeId, NodeId>> {
        let (ra, rb) = (self.root?, other.root?);
        if self.nodes.len() != other.nodes.len() {
            return None;
        }
        let mut fwd: HashMap<NodeId, NodeId> = HashMap::new();
        let mut back: HashMap<NodeId, NodeId> = HashMap::new();
        let mut stack = vec![(ra, rb)];
        while let Some((a, b)) = stack.pop() {
            match (fwd.get(&a), back.get(&b)) {
                (Some(&x), _) if x != b => return None,
                (_, Some(&y)) if y != a => return None,
                (Some(_), Some(_)) => continue,
                _ => {}
            }
            let (na, nb) = (&self.nodes[&a], &other.nodes[&b]);
            if na.label != nb.label || na.successors.len() != nb.successors.len() {
                return None;
            }
            fwd.insert(a, b);
            back.insert(b, a);
            stack.extend(na.successors.iter().copied().zip(nb.successors.iter().copied()));
        }
        (fwd.len() == self.nodes.len()).then_some(fwd)
    }

    /// Renders the subgraph at `n` as a term, unfolding sharing.
    pub fn show(&self, n: NodeId) -> String {
        let mut out = String::new();
        self.show_into(n, 0, &mut out);
        out
    }

    fn show_into(&self, n: NodeId, context: u8, out: &mut String) {
        let node = &self.nodes[&n];
        let label = &node.label;
        if let Some(v) = label.as_int() {
            if v < 0 {
                out.push_str(&format!("({v})"));
            } else {
                out.push_str(label.name());
            }
            return;
        }
        if node.successors.is_empty() {
            out.push_str(label.name());
            return;
        }
        let (prec, operands) = match operators::infix(label.name()) {
            Some((p, assoc)) if node.successors.len() == 2 => (p, Some(operators::operand_contexts(p, assoc))),
            _ => (operators::APPLICATION, None),
        };
        let paren = prec < context;
        if paren {
            out.push('(');
        }
        if let Some((lc, rc)) = operands {
            self.show_into(node.successors[0], lc, out);
            out.push(' ');
            out.push_str(label.name());
            out.push(' ');
            self.show_into(node.successors[1], rc, out);
        } else {
            out.push_str(label.name());
            for &s in &node.successors {
                out.push(' ');
                self.show_into(s, operators::APPLICATION + 1, out);
            }
        }
        if paren {
            out.push(')');
        }
    }

    /// Graphviz rendering: one record per node, numbered argument edges, and
    /// stored dominators as dashed gray edges.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph g {\n");
        for (&n, node) in &self.nodes {
            let label = node.label.name().replace('\\', "\\\\").replace('"', "\\\"");
            if Some(n) == self.root {
                out.push_str(&format!("  {n} [label=\"{label}\", peripheries=2];\n"));
            } else {
                out.push_str(&format!("  {n} [label=\"{label}\"];\n"));
            }
        }
        for (&n, node) in &self.nodes {
            for (idx, &s) in node.successors.iter().enumerate() {
                out.push_str(&format!("  {n} -> {s} [label=\"{idx}\"];\n"));
            }
        }
        for (&n, node) in &self.nodes {
            if let Some(d) = node.dominator {
                out.push_str(&format!("  {n} -> {d} [style=dashed, color=gray];\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}
