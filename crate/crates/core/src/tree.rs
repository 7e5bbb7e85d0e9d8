//! Unified node-pool representation for the search trees handled by this
//! crate: binary tries for IP lookup and multi-way decision trees for
//! packet classification.
//!
//! A [`SearchTree`] owns a flat pool of [`Node`]s reachable from a single
//! root. Child links are stored densely per branching cell; a trie node has
//! two cells (one per key bit), a decision-tree node has one cell per cut
//! partition. A cell may be `None` only in intermediate build stages (a
//! uni-bit trie before leaf-pushing); finished trees are dense, with
//! explicit [`NodeKind::Null`] leaves marking empty regions.

use crate::dtree::CutSpec;

/// Index into a [`SearchTree`] (or forest) node pool.
pub type NodeId = usize;

/// Role of a node within its tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Has children and carries no payload.
    Internal,
    /// Terminal node carrying a payload.
    Leaf,
    /// Terminal node for a region with no matching entry.
    Null,
}

/// Terminal value attached to a leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// No payload (internal and null nodes).
    None,
    /// Next-hop id of the longest matching prefix (trie leaves).
    NextHop(u32),
    /// Rule ids intersecting the leaf region, in priority order
    /// (decision-tree leaves).
    Rules(Vec<u32>),
}

impl Payload {
    pub fn is_none(&self) -> bool {
        matches!(self, Payload::None)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    /// Child per branching cell. `None` cells only appear in tries that
    /// have not been leaf-pushed yet.
    pub children: Vec<Option<NodeId>>,
    pub payload: Payload,
    /// Branching function of an internal decision-tree node; `None` for
    /// trie nodes, whose branch is always the next key bit.
    pub cut: Option<CutSpec>,
    /// Distance from the root of the containing tree (or subtree).
    pub depth: usize,
    /// Maximum distance to a descendant leaf.
    pub height: usize,
}

impl Node {
    pub fn new(kind: NodeKind) -> Self {
        Node {
            kind,
            parent: None,
            children: Vec::new(),
            payload: Payload::None,
            cut: None,
            depth: 0,
            height: 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }

    /// Children that are present, ignoring empty cells.
    pub fn child_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.children.iter().filter_map(|c| *c)
    }
}

/// Per-level census of a tree, used for balance baselines and shape checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeStats {
    pub total_nodes: usize,
    /// Maximum leaf depth; equals the height of the root.
    pub depth: usize,
    /// `by_depth[d]` = number of nodes at depth `d`.
    pub by_depth: Vec<usize>,
    /// `by_height[h]` = number of nodes at height `h`.
    pub by_height: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<Node>,
    root: NodeId,
}

impl SearchTree {
    /// Creates a tree containing only a root of the given kind.
    pub fn with_root(kind: NodeKind) -> Self {
        SearchTree {
            nodes: vec![Node::new(kind)],
            root: 0,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn push_node(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Appends a fresh node and links it into `parent` at `cell`, growing
    /// the parent's cell vector as needed.
    pub fn add_child(&mut self, parent: NodeId, cell: usize, kind: NodeKind) -> NodeId {
        let id = self.push_node(Node::new(kind));
        self.nodes[id].parent = Some(parent);
        let slots = &mut self.nodes[parent].children;
        if slots.len() <= cell {
            slots.resize(cell + 1, None);
        }
        slots[cell] = Some(id);
        id
    }

    /// Recomputes `depth` and `height` for every reachable node.
    pub fn refresh_levels(&mut self) {
        // Depths via preorder, heights via the reversed order.
        let order = self.preorder();
        for &id in &order {
            let d = match self.nodes[id].parent {
                Some(p) => self.nodes[p].depth + 1,
                None => 0,
            };
            self.nodes[id].depth = d;
        }
        for &id in order.iter().rev() {
            let h = self.nodes[id]
                .child_ids()
                .map(|c| self.nodes[c].height + 1)
                .max()
                .unwrap_or(0);
            self.nodes[id].height = h;
        }
    }

    /// Preorder traversal from the root.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            // Reverse push keeps cell order in the output.
            let node = &self.nodes[id];
            for c in node.children.iter().rev().filter_map(|c| *c) {
                stack.push(c);
            }
        }
        order
    }

    /// Per-level node counts by depth and by height, total size and tree
    /// depth.
    pub fn stats(&self) -> TreeStats {
        let order = self.preorder();
        let mut by_depth = Vec::new();
        let mut by_height = Vec::new();
        for &id in &order {
            let n = &self.nodes[id];
            if by_depth.len() <= n.depth {
                by_depth.resize(n.depth + 1, 0);
            }
            by_depth[n.depth] += 1;
            if by_height.len() <= n.height {
                by_height.resize(n.height + 1, 0);
            }
            by_height[n.height] += 1;
        }
        TreeStats {
            total_nodes: order.len(),
            depth: self.nodes[self.root].height,
            by_depth,
            by_height,
        }
    }
}
