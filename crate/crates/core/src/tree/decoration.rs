use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use super::{BranchingTree, NodeKind};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, Mode};

/// Default cap on the number of candidate assignments visited by
/// [`for_each_decoration`].
pub const DEFAULT_DECORATION_BUDGET: f64 = 5e8;

/// Frequencies `k_n` for every node, indexed like [`BranchingTree::nodes`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decoration {
    pub modes: Vec<Mode>,
}

/// Checks `iota_n k_n = sum_children iota_c k_c` at every branching node and
/// `k_partner = k_root`.
pub fn check_decoration(tree: &BranchingTree, dec: &Decoration) -> Result<()> {
    if dec.modes.len() != tree.len() {
        return Err(Error::InvalidDecoration(format!(
            "expected {} frequencies, found {}",
            tree.len(),
            dec.modes.len()
        )));
    }
    for (id, node) in tree.nodes().iter().enumerate() {
        if matches!(node.kind, NodeKind::Root | NodeKind::Branch) {
            let sum = node
                .children
                .iter()
                .fold(Mode::ZERO, |acc, &c| acc + dec.modes[c].scaled(tree.sign(c)));
            if sum != dec.modes[id].scaled(tree.sign(id)) {
                return Err(Error::InvalidDecoration(format!("momentum is not conserved at node {id}")));
            }
        }
    }
    if dec.modes[tree.partner()] != dec.modes[0] {
        return Err(Error::InvalidDecoration("partner and root frequencies differ".into()));
    }
    Ok(())
}

/// Dyadic sizes `N_n` attached to nodes; `None` leaves a node unconstrained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicProfile {
    pub sizes: Vec<Option<u32>>,
}

impl DyadicProfile {
    pub fn new(sizes: Vec<Option<u32>>) -> Result<Self> {
        for n in sizes.iter().flatten() {
            if *n == 0 || !n.is_power_of_two() {
                return Err(invalid("profile", format!("{n} is not a dyadic size 1, 2, 4, ...")));
            }
        }
        Ok(DyadicProfile { sizes })
    }

    /// Profile prescribing sizes on the leaves (in pre-order, partner last).
    pub fn on_leaves(tree: &BranchingTree, leaf_sizes: &[u32]) -> Result<Self> {
        let leaves = tree.leaves();
        if leaves.len() != leaf_sizes.len() {
            return Err(invalid(
                "profile",
                format!("{} leaf sizes given for {} leaves", leaf_sizes.len(), leaves.len()),
            ));
        }
        let mut sizes = vec![None; tree.len()];
        for (&l, &n) in leaves.iter().zip(leaf_sizes) {
            sizes[l] = Some(n);
        }
        Self::new(sizes)
    }

    pub fn size(&self, node: usize) -> Option<u32> {
        self.sizes.get(node).copied().flatten()
    }

    /// `N <= |k| < 2N`, or true for unconstrained nodes.
    pub fn admits(&self, node: usize, k: Mode) -> bool {
        match self.size(node) {
            None => true,
            Some(n) => {
                let (n2, k2) = ((n as i64) * (n as i64), k.norm_sq());
                n2 <= k2 && k2 < 4 * n2
            }
        }
    }

    pub fn is_adapted(&self, dec: &Decoration) -> bool {
        dec.modes.iter().enumerate().all(|(i, &k)| self.admits(i, k))
    }
}

/// Leaves sorted by decreasing dyadic size, ties broken by generation and
/// then by left-to-right position.
pub fn quasi_order(tree: &BranchingTree, profile: &DyadicProfile) -> Result<Vec<usize>> {
    let leaves = tree.leaves();
    for &l in &leaves {
        if profile.size(l).is_none() {
            return Err(invalid("profile", format!("leaf {l} has no dyadic size")));
        }
    }
    let mut order = leaves;
    order.sort_by_key(|&l| (Reverse(profile.size(l)), tree.generation(l), l));
    Ok(order)
}

/// A set of disjoint leaf pairs inside one generation with opposite signs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn new(tree: &BranchingTree, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut used = vec![false; tree.len()];
        for &(a, b) in &pairs {
            for x in [a, b] {
                if x >= tree.len() || !matches!(tree.node(x).kind, NodeKind::Leaf | NodeKind::Partner) {
                    return Err(invalid("pairing", format!("node {x} is not a leaf")));
                }
                if used[x] {
                    return Err(invalid("pairing", format!("leaf {x} appears twice")));
                }
                used[x] = true;
            }
            if a == b || tree.sign(a) + tree.sign(b) != 0 {
                return Err(invalid("pairing", format!("leaves {a} and {b} do not have opposite signs")));
            }
            if tree.generation(a) != tree.generation(b) {
                return Err(invalid("pairing", format!("leaves {a} and {b} lie in different generations")));
            }
        }
        Ok(Pairing { pairs })
    }

    /// Whether every pair carries equal frequencies in `dec`.
    pub fn holds(&self, dec: &Decoration) -> bool {
        self.pairs.iter().all(|&(a, b)| dec.modes[a] == dec.modes[b])
    }
}

/// Restrictions on decorations: every node in the ball `|k| <= cutoff` and
/// every profiled node in its dyadic shell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecorationBounds {
    pub cutoff: Option<u32>,
    pub profile: Option<DyadicProfile>,
}

impl DecorationBounds {
    pub fn ball(cutoff: u32) -> Self {
        DecorationBounds { cutoff: Some(cutoff), profile: None }
    }

    pub fn profile(profile: DyadicProfile) -> Self {
        DecorationBounds { cutoff: None, profile: Some(profile) }
    }

    pub fn admits(&self, node: usize, k: Mode) -> bool {
        if let Some(n) = self.cutoff {
            if k.norm_sq() > (n as i64) * (n as i64) {
                return false;
            }
        }
        self.profile.as_ref().map_or(true, |p| p.admits(node, k))
    }

    /// Finite candidate list for a leaf, or `None` if it is unbounded.
    pub(crate) fn candidates(&self, node: usize) -> Option<Vec<Mode>> {
        let shell = self.profile.as_ref().and_then(|p| p.size(node));
        let radius = match (self.cutoff, shell) {
            (Some(n), Some(d)) => n.min(2 * d),
            (Some(n), None) => n,
            (None, Some(d)) => 2 * d,
            (None, None) => return None,
        };
        Some(
            Ball::new(radius)
                .modes()
                .iter()
                .copied()
                .filter(|&k| self.admits(node, k))
                .collect(),
        )
    }
}

enum Step {
    Leaf(usize),
    Close(usize),
}

struct Walker<'a> {
    tree: &'a BranchingTree,
    bounds: &'a DecorationBounds,
    steps: Vec<Step>,
    cands: Vec<Vec<Mode>>,
    modes: Vec<Mode>,
    visited: u64,
}

impl Walker<'_> {
    fn go(&mut self, step: usize, f: &mut dyn FnMut(&[Mode])) {
        if step == self.steps.len() {
            let tree = self.tree;
            let root = tree.node(0).children.iter().fold(Mode::ZERO, |acc, &c| acc + self.modes[c].scaled(tree.sign(c)));
            let partner = tree.partner();
            if self.bounds.admits(0, root) && self.bounds.admits(partner, root) {
                self.modes[0] = root;
                self.modes[partner] = root;
                self.visited += 1;
                f(&self.modes);
            }
            return;
        }
        match self.steps[step] {
            Step::Leaf(id) => {
                for i in 0..self.cands[id].len() {
                    self.modes[id] = self.cands[id][i];
                    self.go(step + 1, f);
                }
            }
            Step::Close(b) => {
                let tree = self.tree;
                let sum = tree.node(b).children.iter().fold(Mode::ZERO, |acc, &c| acc + self.modes[c].scaled(tree.sign(c)));
                let k = sum.scaled(tree.sign(b));
                if self.bounds.admits(b, k) {
                    self.modes[b] = k;
                    self.go(step + 1, f);
                }
            }
        }
    }
}

/// Calls `f` on every decoration satisfying the tree constraints and the
/// bounds. Returns the number of decorations visited.
pub fn for_each_decoration(
    tree: &BranchingTree,
    bounds: &DecorationBounds,
    budget: f64,
    mut f: impl FnMut(&[Mode]),
) -> Result<u64> {
    let mut cands = vec![Vec::new(); tree.len()];
    let mut steps = Vec::new();
    let mut work = 1.0f64;
    for (id, node) in tree.nodes().iter().enumerate() {
        if node.kind == NodeKind::Leaf {
            let c = bounds
                .candidates(id)
                .ok_or_else(|| invalid("bounds", format!("leaf {id} has an unbounded frequency range")))?;
            work *= c.len() as f64;
            cands[id] = c;
            steps.push(Step::Leaf(id));
            if let Some(p) = node.parent {
                if p != 0 && tree.node(p).children.last() == Some(&id) {
                    steps.push(Step::Close(p));
                }
            }
        }
    }
    if work > budget {
        return Err(Error::BudgetExceeded { requested: work, budget });
    }
    let mut walker = Walker { tree, bounds, steps, cands, modes: vec![Mode::ZERO; tree.len()], visited: 0 };
    walker.go(0, &mut f);
    Ok(walker.visited)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_tree, TreeShape};

    #[test]
    fn enumerated_decorations_satisfy_constraints() {
        let tree = build_tree(&TreeShape::scale_two(3, 1)).unwrap();
        let mut n = 0;
        for_each_decoration(&tree, &DecorationBounds::ball(1), 1e8, |m| {
            check_decoration(&tree, &Decoration { modes: m.to_vec() }).unwrap();
            n += 1;
        })
        .unwrap();
        assert!(n > 0);
    }

    #[test]
    fn unbounded_enumeration_is_rejected() {
        let tree = build_tree(&TreeShape::scale_one(3)).unwrap();
        assert!(for_each_decoration(&tree, &DecorationBounds::default(), 1e9, |_| {}).is_err());
    }

    #[test]
    fn quasi_order_breaks_ties_by_generation_then_position() {
        let tree = build_tree(&TreeShape::scale_two(3, 0)).unwrap();
        // Leaves in pre-order: three below the branching node, two root leaves, the partner.
        let leaves = tree.leaves();
        let profile = DyadicProfile::on_leaves(&tree, &[4, 4, 1, 4, 2, 1]).unwrap();
        let order = quasi_order(&tree, &profile).unwrap();
        assert_eq!(order, vec![leaves[3], leaves[0], leaves[1], leaves[4], leaves[5], leaves[2]]);
    }

    #[test]
    fn pairings_must_stay_in_one_generation() {
        let tree = build_tree(&TreeShape::scale_two(3, 0)).unwrap();
        let leaves = tree.leaves();
        assert!(Pairing::new(&tree, vec![(leaves[0], leaves[1])]).is_ok());
        assert!(Pairing::new(&tree, vec![(leaves[0], leaves[3])]).is_err());
        assert!(Pairing::new(&tree, vec![(leaves[0], leaves[2])]).is_err());
    }
}
