//! Reference dominance computations.
//!
//! Everything here works by deleting a node and re-running reachability from
//! the root, which is quadratic but obviously correct. The evaluator never
//! calls into this module on its hot path: it is used to seed the attribute of
//! fresh graphs, to validate the attribute after steps, and as a test oracle.
//!
//! Dominance is proper throughout: no node dominates itself.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::graph::{Graph, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{0} is the root and has no dominator")]
    Root(NodeId),
    #[error("dominator chains from {0} and {1} do not meet")]
    ChainsDisjoint(NodeId, NodeId),
}

fn known(g: &Graph, n: NodeId) -> Result<(), OracleError> {
    if g.contains(n) {
        Ok(())
    } else {
        Err(OracleError::UnknownNode(n))
    }
}

/// Nodes reachable from the root when `removed` is deleted.
fn reachable_without(g: &Graph, removed: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let root = g.root();
    if root == removed {
        return seen;
    }
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if n != removed && seen.insert(n) {
            stack.extend(g.successors(n).iter().copied());
        }
    }
    seen
}

/// Whether `d` properly dominates `n`: `d != n` and every path from the root
/// to `n` passes through `d`.
pub fn dominates(g: &Graph, d: NodeId, n: NodeId) -> Result<bool, OracleError> {
    known(g, d)?;
    known(g, n)?;
    Ok(d != n && !reachable_without(g, d).contains(&n))
}

/// Proper dominators of every node.
pub fn dominator_sets(g: &Graph) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut sets: BTreeMap<NodeId, BTreeSet<NodeId>> = g.node_ids().map(|n| (n, BTreeSet::new())).collect();
    for d in g.node_ids() {
        let live = reachable_without(g, d);
        for (&n, set) in sets.iter_mut() {
            if n != d && !live.contains(&n) {
                set.insert(d);
            }
        }
    }
    sets
}

/// The immediate dominator of each non-root node.
pub fn immediate_dominators(g: &Graph) -> BTreeMap<NodeId, NodeId> {
    let sets = dominator_sets(g);
    let root = g.root();
    sets.iter()
        .filter(|(&n, _)| n != root)
        .map(|(&n, doms)| {
            // Dominators of one node form a chain; the deepest has the most
            // dominators of its own.
            let idom = doms
                .iter()
                .copied()
                .max_by_key(|d| sets[d].len())
                .expect("every non-root node is dominated by the root");
            (n, idom)
        })
        .collect()
}

pub fn immediate_dominator(g: &Graph, n: NodeId) -> Result<NodeId, OracleError> {
    known(g, n)?;
    if n == g.root() {
        return Err(OracleError::Root(n));
    }
    Ok(immediate_dominators(g)[&n])
}

/// Stores the immediate dominator of every node as its attribute.
pub fn initialize(g: &mut Graph) {
    let root = g.root();
    g.set_dominator(root, None);
    for (n, d) in immediate_dominators(g) {
        g.set_dominator(n, Some(d));
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DominatorEntry {
    pub node: NodeId,
    pub label: String,
    pub stored: Option<NodeId>,
    pub immediate: NodeId,
    pub sound: bool,
}

/// Stored versus immediate dominator for every non-root node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DominatorReport {
    pub root: Option<NodeId>,
    pub entries: Vec<DominatorEntry>,
}

impl DominatorReport {
    pub fn is_sound(&self) -> bool {
        self.entries.iter().all(|e| e.sound)
    }

    pub fn failures(&self) -> impl Iterator<Item = &DominatorEntry> {
        self.entries.iter().filter(|e| !e.sound)
    }

    pub fn entry(&self, n: NodeId) -> Option<&DominatorEntry> {
        self.entries.iter().find(|e| e.node == n)
    }
}

impl fmt::Display for DominatorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:<12} {:<8} {:<10} status", "node", "label", "stored", "immediate")?;
        if let Some(r) = self.root {
            writeln!(f, "{:<8} {:<12} {:<8} {:<10} root", r.to_string(), "", "-", "-")?;
        }
        for e in &self.entries {
            let stored = e.stored.map_or_else(|| "-".to_string(), |d| d.to_string());
            let status = match (e.sound, e.stored == Some(e.immediate)) {
                (false, _) => "UNSOUND",
                (true, true) => "immediate",
                (true, false) => "sound",
            };
            writeln!(
                f,
                "{:<8} {:<12} {:<8} {:<10} {}",
                e.node.to_string(),
                e.label,
                stored,
                e.immediate.to_string(),
                status
            )?;
        }
        Ok(())
    }
}

/// Checks every stored dominator against the oracle.
pub fn validate_attribute(g: &Graph) -> DominatorReport {
    let sets = dominator_sets(g);
    let idoms = immediate_dominators(g);
    let entries = idoms
        .iter()
        .map(|(&n, &immediate)| {
            let stored = g.dominator(n);
            DominatorEntry {
                node: n,
                label: g.label(n).name().to_string(),
                stored,
                immediate,
                sound: stored.is_some_and(|d| sets[&n].contains(&d)),
            }
        })
        .collect();
    DominatorReport { root: g.try_root(), entries }
}

/// First node shared by the stored dominator chains of `a` and `b`
/// (each chain starts at the node itself and ends at the root).
///
/// The chains are walked alternately, so the cost is proportional to the
/// distance to the meeting point rather than to the depth of the graph.
/// With a sound attribute the result dominates or equals both inputs.
pub fn chain_meet(g: &Graph, a: NodeId, b: NodeId) -> Result<NodeId, OracleError> {
    known(g, a)?;
    known(g, b)?;
    let mut seen = [BTreeSet::new(), BTreeSet::new()];
    let mut cur = [Some(a), Some(b)];
    while cur[0].is_some() || cur[1].is_some() {
        for side in 0..2 {
            let Some(n) = cur[side] else { continue };
            if seen[1 - side].contains(&n) {
                return Ok(n);
            }
            cur[side] = if seen[side].insert(n) { g.dominator(n).filter(|d| g.contains(*d)) } else { None };
        }
    }
    Err(OracleError::ChainsDisjoint(a, b))
}
