//! Expanded branching trees of scale at most two, their decorations and the
//! multilinear forms attached to them.
//!
//! Nodes are stored in pre-order: the root first, then its children from
//! left to right (a branching child is followed by its own children), and the
//! root's partner leaf last.

mod decoration;
mod forms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decoration::{
    check_decoration, for_each_decoration, quasi_order, Decoration, DecorationBounds, DyadicProfile, Pairing,
    DEFAULT_DECORATION_BUDGET,
};
pub use forms::{
    cancellation_check, cancellation_on, cut_paired_leaves, psi_weight, remainder_form, singular_set_member,
    singular_sum, tree_energy_form, tree_energy_form_enumerated, CancellationReport, SignConfiguration,
    SingularParams, SingularSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn from_value(v: i32) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Root,
    Branch,
    Leaf,
    Partner,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub sign: Sign,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Shape of a tree to build: the number of root children and, for scale two,
/// the position and child count of the single non-root branching node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub root_children: usize,
    pub branch: Option<BranchSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub position: usize,
    pub children: usize,
}

impl TreeShape {
    /// Scale-one tree whose root has `children` leaves.
    pub fn scale_one(children: usize) -> Self {
        TreeShape { root_children: children, branch: None }
    }

    /// Scale-two tree with `n0` children at both levels and the branching
    /// node at `position`.
    pub fn scale_two(n0: usize, position: usize) -> Self {
        TreeShape { root_children: n0, branch: Some(BranchSpec { position, children: n0 }) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingTree {
    nodes: Vec<Node>,
    partner: usize,
    branch: Option<usize>,
}

fn alternating(start: Sign, len: usize) -> Vec<Sign> {
    (0..len).map(|j| if j % 2 == 0 { start } else { start.flip() }).collect()
}

/// Builds the expanded tree with alternating signs: root children start at
/// `+`, the branching node's children start at the branching node's sign.
pub fn build_tree(shape: &TreeShape) -> Result<BranchingTree> {
    if shape.root_children % 2 == 0 {
        return Err(Error::InvalidTree(format!(
            "the root needs an odd number of children, got {}",
            shape.root_children
        )));
    }
    let root_signs = alternating(Sign::Plus, shape.root_children);
    let mut nodes = vec![Node { kind: NodeKind::Root, sign: Sign::Plus, parent: None, children: vec![] }];
    let mut branch = None;
    for (j, &sg) in root_signs.iter().enumerate() {
        let id = nodes.len();
        nodes[0].children.push(id);
        match shape.branch {
            Some(b) if b.position == j => {
                if b.children % 2 == 0 {
                    return Err(Error::InvalidTree(format!(
                        "a branching node needs an odd number of children, got {}",
                        b.children
                    )));
                }
                nodes.push(Node { kind: NodeKind::Branch, sign: sg, parent: Some(0), children: vec![] });
                branch = Some(id);
                for csg in alternating(sg, b.children) {
                    let cid = nodes.len();
                    nodes[id].children.push(cid);
                    nodes.push(Node { kind: NodeKind::Leaf, sign: csg, parent: Some(id), children: vec![] });
                }
            }
            _ => nodes.push(Node { kind: NodeKind::Leaf, sign: sg, parent: Some(0), children: vec![] }),
        }
    }
    if let Some(b) = shape.branch {
        if b.position >= shape.root_children {
            return Err(Error::InvalidTree(format!(
                "branch position {} exceeds the {} root children",
                b.position, shape.root_children
            )));
        }
    }
    let partner = nodes.len();
    nodes.push(Node { kind: NodeKind::Partner, sign: Sign::Minus, parent: None, children: vec![] });
    BranchingTree::from_nodes(nodes).map(|t| {
        debug_assert_eq!(t.branch, branch);
        debug_assert_eq!(t.partner, partner);
        t
    })
}

impl BranchingTree {
    /// Validates an explicit node list.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidTree(msg));
        let roots: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].kind == NodeKind::Root).collect();
        if roots.len() != 1 {
            return bad(format!("expected exactly one root, found {}", roots.len()));
        }
        if roots[0] != 0 || nodes[0].parent.is_some() || nodes[0].sign != Sign::Plus {
            return bad("the root must come first, have no parent and sign +".into());
        }
        let partners: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].kind == NodeKind::Partner).collect();
        if partners.len() != 1 {
            return bad(format!("expected exactly one partner leaf, found {}", partners.len()));
        }
        let partner = partners[0];
        if partner != nodes.len() - 1 || nodes[partner].parent.is_some() || nodes[partner].sign != Sign::Minus {
            return bad("the partner leaf must come last, have no parent and sign -".into());
        }
        let branches: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].kind == NodeKind::Branch).collect();
        if branches.len() > 1 {
            return bad(format!("scale above two: {} non-root branching nodes", branches.len()));
        }
        for (id, node) in nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Leaf | NodeKind::Partner => {
                    if !node.children.is_empty() {
                        return bad(format!("leaf {id} has children"));
                    }
                }
                NodeKind::Root | NodeKind::Branch => {
                    if node.children.len() % 2 == 0 {
                        return bad(format!("node {id} has an even number ({}) of children", node.children.len()));
                    }
                    let total: i32 = node.children.iter().filter(|&&c| c < nodes.len()).map(|&c| nodes[c].sign.value()).sum();
                    if total != node.sign.value() {
                        return bad(format!("children of node {id} do not balance its sign"));
                    }
                }
            }
            if node.kind == NodeKind::Branch && node.parent != Some(0) {
                return bad(format!("branching node {id} is not a child of the root"));
            }
            if let Some(p) = node.parent {
                if p >= nodes.len() || !nodes[p].children.contains(&id) {
                    return bad(format!("node {id} is not listed among its parent's children"));
                }
            } else if id != 0 && id != partner {
                return bad(format!("node {id} is detached"));
            }
            for &c in &node.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return bad(format!("child {c} of node {id} does not point back"));
                }
            }
        }
        let mut order = Vec::new();
        preorder(&nodes, 0, &mut order);
        if order.len() + 1 != nodes.len() || order.iter().enumerate().any(|(i, &n)| i != n) {
            return bad("nodes are not in pre-order".into());
        }
        Ok(BranchingTree { nodes, partner, branch: branches.first().copied() })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn partner(&self) -> usize {
        self.partner
    }

    /// The non-root branching node, if the tree has scale two.
    pub fn branch(&self) -> Option<usize> {
        self.branch
    }

    pub fn scale(&self) -> usize {
        if self.branch.is_some() {
            2
        } else {
            1
        }
    }

    pub fn sign(&self, id: usize) -> i32 {
        self.nodes[id].sign.value()
    }

    /// All leaves, including the partner, in pre-order.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Leaf | NodeKind::Partner))
            .collect()
    }

    /// Number of leaves (the size of the tree).
    pub fn size(&self) -> usize {
        self.leaves().len()
    }

    /// Children of the root followed by the partner: the nodes entering
    /// `Omega(k_r)` and `psi_{2s}(k_r)`.
    pub fn root_generation(&self) -> Vec<usize> {
        let mut g = self.nodes[0].children.clone();
        g.push(self.partner);
        g
    }

    /// `L_r`: leaf children of the root and the partner.
    pub fn root_leaves(&self) -> Vec<usize> {
        self.root_generation()
            .into_iter()
            .filter(|&i| self.nodes[i].kind != NodeKind::Branch)
            .collect()
    }

    /// `L_{n0}`: children of the branching node (empty at scale one).
    pub fn branch_leaves(&self) -> Vec<usize> {
        self.branch.map_or_else(Vec::new, |b| self.nodes[b].children.clone())
    }

    /// 1 for leaves in `L_r`, 2 for leaves below the branching node.
    pub fn generation(&self, id: usize) -> usize {
        match self.nodes[id].parent {
            Some(p) if p != 0 => 2,
            _ => 1,
        }
    }

    /// Leaves in the same generation as `id`.
    pub fn generation_of(&self, id: usize) -> Vec<usize> {
        if self.generation(id) == 1 {
            self.root_leaves()
        } else {
            self.branch_leaves()
        }
    }
}

fn preorder(nodes: &[Node], id: usize, out: &mut Vec<usize>) {
    out.push(id);
    for &c in &nodes[id].children {
        preorder(nodes, c, out);
    }
}
