//! Index arithmetic on the infinite dyadic tree.
//!
//! A node is addressed by its scale `s` (depth, root at 0) and its 1-based
//! index `h` within the scale, `1 <= h <= 2^s`. The left child of `(s, h)` is
//! `(s + 1, 2h - 1)` and the right child is `(s + 1, 2h)`.
//!
//! Dense per-node storage uses the breadth-first position
//! `2^s - 1 + (h - 1)`; see [`NodeId::flat_index`].

use crate::error::{Error, Result};

/// Deepest scale whose within-scale index range `1..=2^s` fits in a `u64`.
pub const MAX_SCALE: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    s: u32,
    h: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
}

/// One edge of a root-to-node path: the ancestor and the branch taken out of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathStep {
    pub node: NodeId,
    pub direction: Direction,
}

/// Number of nodes at scale `s`, or an overflow error.
pub fn width(s: u32) -> Result<u64> {
    if s > MAX_SCALE {
        return Err(Error::ScaleOverflow(s));
    }
    Ok(1u64 << s)
}

/// Number of nodes in a tree truncated at depth `max_depth` (inclusive).
pub fn node_count(max_depth: u32) -> usize {
    (1usize << (max_depth + 1)) - 1
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { s: 0, h: 1 };

    pub fn new(s: u32, h: u64) -> Result<Self> {
        let w = width(s)?;
        if h == 0 || h > w {
            return Err(Error::InvalidNode { s, h });
        }
        Ok(NodeId { s, h })
    }

    #[inline]
    pub fn scale(self) -> u32 {
        self.s
    }

    #[inline]
    pub fn index(self) -> u64 {
        self.h
    }

    /// Breadth-first position of the node in a dense array.
    #[inline]
    pub fn flat_index(self) -> usize {
        ((1usize << self.s) - 1) + (self.h as usize - 1)
    }

    /// Inverse of [`NodeId::flat_index`].
    pub fn from_flat_index(idx: usize) -> NodeId {
        let s = usize::BITS - 1 - (idx + 1).leading_zeros();
        let h = (idx + 1 - (1usize << s)) as u64 + 1;
        NodeId { s, h }
    }

    /// Ancestor at scale `r`, i.e. `(r, ceil(h * 2^(r - s)))`.
    pub fn ancestor(self, r: u32) -> Result<NodeId> {
        if r > self.s {
            return Err(Error::AncestorOutOfRange { r, s: self.s });
        }
        // ceil(h / 2^k) == ((h - 1) >> k) + 1 for h >= 1
        let k = self.s - r;
        Ok(NodeId {
            s: r,
            h: ((self.h - 1) >> k) + 1,
        })
    }

    pub fn parent(self) -> Option<NodeId> {
        if self.s == 0 {
            None
        } else {
            Some(NodeId {
                s: self.s - 1,
                h: self.h.div_ceil(2),
            })
        }
    }

    /// `(left, right)` children.
    pub fn children(self) -> Result<(NodeId, NodeId)> {
        if self.s >= MAX_SCALE {
            return Err(Error::ScaleOverflow(self.s + 1));
        }
        let s = self.s + 1;
        Ok((
            NodeId { s, h: 2 * self.h - 1 },
            NodeId { s, h: 2 * self.h },
        ))
    }

    pub fn child(self, direction: Direction) -> Result<NodeId> {
        let (l, r) = self.children()?;
        Ok(match direction {
            Direction::Left => l,
            Direction::Right => r,
        })
    }

    /// Which side of its parent this node hangs on; `None` for the root.
    pub fn side(self) -> Option<Direction> {
        if self.s == 0 {
            None
        } else if self.h.is_multiple_of(2) {
            Some(Direction::Right)
        } else {
            Some(Direction::Left)
        }
    }

    /// The `s` steps from the root down to this node, root first.
    pub fn path(self) -> Vec<PathStep> {
        (0..self.s)
            .map(|r| {
                let node = NodeId {
                    s: r,
                    h: ((self.h - 1) >> (self.s - r)) + 1,
                };
                // bit (s - r - 1) of (h - 1) selects the branch out of `node`
                let bit = ((self.h - 1) >> (self.s - r - 1)) & 1;
                let direction = if bit == 1 {
                    Direction::Right
                } else {
                    Direction::Left
                };
                PathStep { node, direction }
            })
            .collect()
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.s, self.h)
    }
}

/// All nodes of the tree truncated at `max_depth`, in breadth-first order.
pub fn nodes(max_depth: u32) -> impl Iterator<Item = NodeId> {
    (0..node_count(max_depth)).map(NodeId::from_flat_index)
}
