//! Tree partitioning: initial-bit expansion for tries, first-cut for
//! decision trees.

use crate::dtree::{CutSpec, DecisionTree};
use crate::tree::{Node, NodeId, NodeKind, SearchTree};

use super::{Forest, MappingError, PartitionIndex, PartitionSet};

/// Copies the subtree under `src_root` into `forest`, rebasing depths so
/// the copied root has depth 0. Returns the new root id.
pub(crate) fn copy_subtree(forest: &mut Forest, src: &SearchTree, src_root: NodeId) -> NodeId {
    let new_root = forest.nodes.len();
    // (source node, destination parent and cell)
    let mut stack: Vec<(NodeId, Option<(NodeId, usize)>)> = vec![(src_root, None)];
    while let Some((s, link)) = stack.pop() {
        let sn = src.node(s);
        let d = forest.nodes.len();
        forest.nodes.push(Node {
            kind: sn.kind,
            parent: link.map(|(p, _)| p),
            children: vec![None; sn.children.len()],
            payload: sn.payload.clone(),
            cut: sn.cut.clone(),
            depth: link.map(|(p, _)| forest.nodes[p].depth + 1).unwrap_or(0),
            height: sn.height,
        });
        if let Some((p, cell)) = link {
            forest.nodes[p].children[cell] = Some(d);
        }
        for (cell, c) in sn.children.iter().enumerate() {
            if let Some(c) = *c {
                stack.push((c, Some((d, cell))));
            }
        }
    }
    new_root
}

/// Appends a single-node subtree replicating `src` (payload only).
fn replicate_leaf(forest: &mut Forest, src: &Node) -> NodeId {
    let id = forest.nodes.len();
    forest.nodes.push(Node {
        kind: src.kind,
        parent: None,
        children: Vec::new(),
        payload: src.payload.clone(),
        cut: None,
        depth: 0,
        height: 0,
    });
    id
}

/// Partitions a leaf-pushed trie using the first `initial_bits` key bits
/// as a direct index. Each depth-`initial_bits` node roots a subtree;
/// leaves above that depth are expanded by replicating their payload into
/// every cell they cover; cells covered by a null leaf (or nothing) route
/// to no subtree at all.
pub fn partition_trie(tree: &SearchTree, initial_bits: u8) -> Result<PartitionSet, MappingError> {
    if initial_bits > 16 {
        return Err(MappingError::InitialBits { bits: initial_bits });
    }
    for id in 0..tree.len() {
        let n = tree.node(id);
        if n.kind == NodeKind::Internal
            && (n.children.len() != 2 || n.child_ids().count() != 2)
        {
            return Err(MappingError::NotLeafPushed { node: id });
        }
    }

    let mut forest = Forest {
        nodes: Vec::new(),
        roots: Vec::new(),
    };
    let cell_count = 1usize << initial_bits;
    let mut cells = Vec::with_capacity(cell_count);
    for cell in 0..cell_count {
        // descend along the cell's bit pattern
        let mut at = tree.root();
        let mut depth = 0usize;
        let hit_leaf = loop {
            if depth == initial_bits as usize {
                break false;
            }
            let n = tree.node(at);
            if n.is_terminal() {
                break true;
            }
            let bit = (cell >> (initial_bits as usize - 1 - depth)) & 1;
            at = n.children[bit].expect("leaf-pushed trie is dense");
            depth += 1;
        };
        let node = tree.node(at);
        let entry = if hit_leaf {
            match node.kind {
                NodeKind::Leaf => {
                    let root = replicate_leaf(&mut forest, node);
                    forest.roots.push(root);
                    Some(forest.roots.len() - 1)
                }
                _ => None,
            }
        } else if node.kind == NodeKind::Null {
            None
        } else {
            let root = copy_subtree(&mut forest, tree, at);
            forest.roots.push(root);
            Some(forest.roots.len() - 1)
        };
        cells.push(entry);
    }
    Ok(PartitionSet {
        forest,
        index: PartitionIndex::InitialBits {
            bits: initial_bits,
            cells,
        },
    })
}

/// Partitions a decision tree by its root cut: every non-null child of
/// the root becomes a subtree and the root's cut function is the index.
/// A single-leaf tree yields one subtree behind an everything-to-cell-0
/// index.
pub fn partition_dtree(dt: &DecisionTree) -> PartitionSet {
    let tree = &dt.tree;
    let root = tree.node(tree.root());
    let mut forest = Forest {
        nodes: Vec::new(),
        roots: Vec::new(),
    };
    match root.kind {
        NodeKind::Internal => {
            let cut = root.cut.clone().expect("internal dtree node has a cut");
            let mut cells = Vec::with_capacity(root.children.len());
            for child in root.children.iter() {
                let child = child.expect("dense child block");
                if tree.node(child).kind == NodeKind::Null {
                    cells.push(None);
                } else {
                    let r = copy_subtree(&mut forest, tree, child);
                    forest.roots.push(r);
                    cells.push(Some(forest.roots.len() - 1));
                }
            }
            PartitionSet {
                forest,
                index: PartitionIndex::FirstCut { cut, cells },
            }
        }
        _ => {
            let r = copy_subtree(&mut forest, tree, tree.root());
            forest.roots.push(r);
            PartitionSet {
                forest,
                index: PartitionIndex::FirstCut {
                    cut: CutSpec { dims: Vec::new() },
                    cells: vec![Some(0)],
                },
            }
        }
    }
}
