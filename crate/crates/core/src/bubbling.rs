//! Bubbling steps that read only the neighbourhood of the moved choice.
//!
//! A step at choice `c` moves `c` up to its stored dominator `d`. Every node
//! on a path from `d` down to `c` is cloned once per alternative; the clone of
//! `c` is then replaced by that alternative, and a fresh choice `r` over the
//! two clones of `d` takes `d`'s place. Because `d` is stored on `c`, the
//! step never searches the context above `d`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId, Side, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BubbleError {
    #[error("{0} is not labeled by a choice")]
    NotAChoice(NodeId),
    #[error("choice {0} is the root; root choices are split, not bubbled")]
    RootChoice(NodeId),
    #[error("{choice} has no stored dominator")]
    NoDominator { choice: NodeId },
    #[error("stored dominator {dominator} of {choice} does not dominate it (reached {stray})")]
    UnsoundDominator { choice: NodeId, dominator: NodeId, stray: NodeId },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Original node to clone, for one side of a step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CloneMap {
    map: BTreeMap<NodeId, NodeId>,
}

impl CloneMap {
    pub fn get(&self, n: NodeId) -> Option<NodeId> {
        self.map.get(&n).copied()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.map.contains_key(&n)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.map.iter().map(|(&a, &b)| (a, b))
    }

    fn insert(&mut self, original: NodeId, clone: NodeId) {
        self.map.insert(original, clone);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BubbleStats {
    pub origin: NodeId,
    pub destination: NodeId,
    /// The fresh choice that replaced the destination.
    pub replacement: NodeId,
    /// Nodes on some path from destination to origin, both included.
    pub path_nodes: usize,
    /// Clones allocated on each side (left, right).
    pub cloned: [usize; 2],
    /// The clone maps of both sides, as they stood after traversal.
    pub maps: [CloneMap; 2],
}

impl BubbleStats {
    /// Fresh nodes left in the graph: both spines minus the discarded clones
    /// of the origin, plus the new choice.
    pub fn surviving_fresh(&self) -> usize {
        self.cloned.iter().map(|n| n - 1).sum::<usize>() + 1
    }
}

/// State for the traversal of one side.
struct Traversal<'a> {
    destination: NodeId,
    choice: NodeId,
    /// Nodes allocated during this step have ids at or above this.
    watermark: NodeId,
    map: &'a mut CloneMap,
    /// Nodes whose stored dominator was cloned; they are re-dominated by the
    /// new choice if they end up outside the cloned region.
    redirect: Vec<NodeId>,
}

/// Clones every node on a path from the destination down to `x`, walking
/// predecessors depth first. Each clone gets its original's label; edges from
/// cloned predecessors are pointed at the clone, and the clone's stored
/// dominator is the clone of the original's.
pub fn traverse(g: &mut Graph, x: NodeId, destination: NodeId, map: &mut CloneMap) -> Result<Vec<NodeId>, BubbleError> {
    let choice = x;
    let watermark = g.watermark();
    let mut t = Traversal { destination, choice, watermark, map, redirect: Vec::new() };
    t.run(g, x)?;
    Ok(t.redirect)
}

impl Traversal<'_> {
    fn run(&mut self, g: &mut Graph, start: NodeId) -> Result<(), BubbleError> {
        struct Frame {
            original: NodeId,
            clone: NodeId,
            preds: Vec<(NodeId, usize)>,
            next: usize,
        }

        let mut stack: Vec<Frame> = Vec::new();
        if let Some(frame) = self.enter(g, start)? {
            stack.push(frame_of(frame));
        }

        fn frame_of((original, clone, preds): (NodeId, NodeId, Vec<(NodeId, usize)>)) -> Frame {
            Frame { original, clone, preds, next: 0 }
        }

        while let Some(top) = stack.last_mut() {
            if top.next > 0 {
                // The predecessor visited last is mapped now; hook up its edge.
                let (y, idx) = top.preds[top.next - 1];
                let y_clone = self.map.get(y).expect("visited predecessor is mapped");
                g.set_successor(y_clone, idx, top.clone);
            }
            if top.next < top.preds.len() {
                let (y, _) = top.preds[top.next];
                top.next += 1;
                if let Some(frame) = self.enter(g, y)? {
                    stack.push(frame_of(frame));
                }
                continue;
            }
            let Frame { original, clone, .. } = stack.pop().expect("non-empty");
            self.leave(g, original, clone);
        }
        Ok(())
    }

    /// Clones `x` if not yet mapped. Returns the work left for `x`: its
    /// incoming edges from original nodes (none for the destination).
    #[allow(clippy::type_complexity)]
    fn enter(
        &mut self,
        g: &mut Graph,
        x: NodeId,
    ) -> Result<Option<(NodeId, NodeId, Vec<(NodeId, usize)>)>, BubbleError> {
        if self.map.contains(x) {
            return Ok(None);
        }
        let clone = g.clone_node(x);
        self.map.insert(x, clone);
        if x == self.destination {
            self.leave(g, x, clone);
            return Ok(None);
        }
        let preds: Vec<(NodeId, usize)> =
            g.predecessors(x).iter().copied().filter(|&(p, _)| p < self.watermark).collect();
        if preds.is_empty() {
            return Err(BubbleError::UnsoundDominator { choice: self.choice, dominator: self.destination, stray: x });
        }
        Ok(Some((x, clone, preds)))
    }

    fn leave(&mut self, g: &mut Graph, x: NodeId, clone: NodeId) {
        if x != self.destination {
            // A stored dominator above the destination has no clone; the
            // destination's clone dominates the whole cloned region.
            let d = g.dominator(x).expect("non-root node has a dominator");
            let cd = self.map.get(d).or_else(|| self.map.get(self.destination));
            g.set_dominator(clone, cd);
        }
        self.redirect.extend(g.dominated(x).iter().copied());
    }
}

/// Executes a bubbling step at choice `c` towards its stored dominator and
/// returns the fresh choice that replaced the dominator.
pub fn bubble(g: &mut Graph, c: NodeId) -> Result<(NodeId, BubbleStats), BubbleError> {
    if !g.label(c).is_choice() {
        return Err(BubbleError::NotAChoice(c));
    }
    if g.root() == c {
        return Err(BubbleError::RootChoice(c));
    }
    let d = g.dominator(c).ok_or(BubbleError::NoDominator { choice: c })?;
    let alternatives = [g.successors(c)[0], g.successors(c)[1]];
    // An alternative reached only through `c` lives entirely inside one
    // side after the step, so the replace-assigned dominator is exact for
    // it. Any other alternative keeps what it had before the replace.
    let exclusive =
        alternatives.map(|a| alternatives[0] != alternatives[1] && g.predecessors(a).iter().all(|&(p, _)| p == c));

    let r = g.alloc(Symbol::choice());
    let mut maps: [CloneMap; 2] = Default::default();
    for side in Side::BOTH {
        let map = &mut maps[side.index()];
        let redirect = traverse(g, c, d, map)?;
        for z in redirect {
            if !map.contains(z) && g.contains(z) {
                g.set_dominator(z, Some(r));
            }
        }
        let top = map.get(d).expect("destination is cloned");
        g.push_successor(r, top);
        g.set_dominator(top, Some(r));

        let alt = alternatives[side.index()];
        let clone_c = map.get(c).expect("origin is cloned");
        let before = g.dominator(alt);
        g.replace(clone_c, alt)?;
        if !exclusive[side.index()] {
            g.set_dominator(alt, before);
        }
        g.reclaim(clone_c);
    }
    let dd = g.dominator(d);
    g.set_dominator(r, dd);
    g.replace(d, r)?;
    g.reclaim(d);

    let cloned = [maps[0].len(), maps[1].len()];
    Ok((r, BubbleStats { origin: c, destination: d, replacement: r, path_nodes: cloned[0], cloned, maps }))
}
