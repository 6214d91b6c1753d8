//! Dynamic encoding tree: a root with `2^K` one-bit children refined by
//! binary single-dimension splits, plus the interval and distance-bound math
//! used to prune range queries.

use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::ops::ControlFlow;

use crate::encoder::{BreakpointTable, EncodedDataset};
use crate::error::{ensure, Result};

pub type NodeId = u32;

const EMPTY_SLOT: NodeId = NodeId::MAX;
/// Root fanout `2^K` is materialized, so K is capped.
pub const MAX_TREE_DIMS: usize = 24;

/// Per-dimension iSAX prefix: how many high bits of the symbol are fixed and their value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodePrefix {
    // [bits_used; K] followed by [value; K]
    data: Box<[u8]>,
}

impl NodePrefix {
    /// Prefix with no bits fixed in any of `dims` dimensions.
    pub fn unconstrained(dims: usize) -> Self {
        NodePrefix { data: vec![0; 2 * dims].into_boxed_slice() }
    }

    /// First-layer prefix for root slot `slot`: one bit per dimension,
    /// dimension 0 taken from the slot's most significant bit.
    pub fn first_layer(slot: u32, dims: usize) -> Self {
        let mut data = vec![1u8; 2 * dims];
        for j in 0..dims {
            data[dims + j] = ((slot >> (dims - 1 - j)) & 1) as u8;
        }
        NodePrefix { data: data.into_boxed_slice() }
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.data.len() / 2
    }

    #[inline]
    pub fn bits_used(&self, dim: usize) -> u8 {
        self.data[dim]
    }

    #[inline]
    pub fn value(&self, dim: usize) -> u8 {
        self.data[self.dims() + dim]
    }

    /// The child prefix obtained by appending `bit` to dimension `dim`.
    pub fn extend(&self, dim: usize, bit: u8) -> Self {
        let dims = self.dims();
        let mut data = self.data.clone();
        data[dim] += 1;
        data[dims + dim] = (data[dims + dim] << 1) | (bit & 1);
        NodePrefix { data }
    }

    /// Whether every symbol agrees with this prefix's fixed bits.
    pub fn matches(&self, symbols: &[u8], bits: u8) -> bool {
        symbols.iter().enumerate().all(|(j, &s)| {
            let b = self.bits_used(j);
            b == 0 || (s >> (bits - b)) == self.value(j)
        })
    }

    /// The bit of `symbol` right after this prefix in dimension `dim`.
    #[inline]
    pub fn next_bit(&self, symbol: u8, dim: usize, bits: u8) -> u8 {
        (symbol >> (bits - 1 - self.bits_used(dim))) & 1
    }

    pub fn is_exhausted(&self, bits: u8) -> bool {
        (0..self.dims()).all(|j| self.bits_used(j) >= bits)
    }
}

/// Leaf contents: positions and their K-symbol representations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeafEntries {
    dims: usize,
    positions: Vec<u32>,
    symbols: Vec<u8>,
}

impl LeafEntries {
    pub fn new(dims: usize) -> Self {
        LeafEntries { dims, positions: Vec::new(), symbols: Vec::new() }
    }

    pub fn from_parts(dims: usize, positions: Vec<u32>, symbols: Vec<u8>) -> Result<Self> {
        ensure(symbols.len() == positions.len() * dims, "leaf symbol count must equal entries * K")?;
        Ok(LeafEntries { dims, positions, symbols })
    }

    pub fn push(&mut self, symbols: &[u8], position: u32) {
        debug_assert_eq!(symbols.len(), self.dims);
        self.positions.push(position);
        self.symbols.extend_from_slice(symbols);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    #[inline]
    pub fn symbols(&self, i: usize) -> &[u8] {
        &self.symbols[i * self.dims..(i + 1) * self.dims]
    }

    pub fn all_symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u32)> + '_ {
        self.symbols.chunks_exact(self.dims.max(1)).zip(self.positions.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Leaf(LeafEntries),
    /// `children[0]` continues with bit 0 in `split_dim`, `children[1]` with bit 1.
    Internal {
        split_dim: usize,
        children: [NodeId; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    prefix: NodePrefix,
    kind: NodeKind,
}

impl Node {
    pub fn leaf(prefix: NodePrefix, entries: LeafEntries) -> Self {
        Node { prefix, kind: NodeKind::Leaf(entries) }
    }

    pub fn internal(prefix: NodePrefix, split_dim: usize, children: [NodeId; 2]) -> Self {
        Node { prefix, kind: NodeKind::Internal { split_dim, children } }
    }

    pub fn prefix(&self) -> &NodePrefix {
        &self.prefix
    }

    pub fn kind(&self) -> &NodeKind {
        &self.kind
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    pub fn entries(&self) -> Option<&LeafEntries> {
        match &self.kind {
            NodeKind::Leaf(e) => Some(e),
            NodeKind::Internal { .. } => None,
        }
    }

    pub fn children(&self) -> Option<[NodeId; 2]> {
        match self.kind {
            NodeKind::Internal { children, .. } => Some(children),
            NodeKind::Leaf(_) => None,
        }
    }

    pub fn split_dim(&self) -> Option<usize> {
        match self.kind {
            NodeKind::Internal { split_dim, .. } => Some(split_dim),
            NodeKind::Leaf(_) => None,
        }
    }
}

/// The dimension whose next bit splits `entries` most evenly; ties go to the
/// lowest index. `None` when every dimension's prefix is exhausted.
pub fn choose_split_dim(prefix: &NodePrefix, entries: &LeafEntries, bits: u8) -> Option<usize> {
    let n = entries.len();
    let mut best: Option<(usize, usize)> = None;
    for dim in 0..prefix.dims() {
        if prefix.bits_used(dim) >= bits {
            continue;
        }
        let ones = (0..n).filter(|&i| prefix.next_bit(entries.symbols(i)[dim], dim, bits) == 1).count();
        let imbalance = n.abs_diff(2 * ones);
        if best.is_none_or(|(_, b)| imbalance < b) {
            best = Some((dim, imbalance));
        }
    }
    best.map(|(dim, _)| dim)
}

/// Result of splitting a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub dim: usize,
    pub left: (NodePrefix, LeafEntries),
    pub right: (NodePrefix, LeafEntries),
}

/// Splits a leaf on [`choose_split_dim`], or hands the entries back when the
/// prefix has no bits left to refine.
pub fn split_leaf(prefix: &NodePrefix, entries: LeafEntries, bits: u8) -> core::result::Result<Split, LeafEntries> {
    let Some(dim) = choose_split_dim(prefix, &entries, bits) else {
        return Err(entries);
    };
    let mut left = LeafEntries::new(entries.dims);
    let mut right = LeafEntries::new(entries.dims);
    for (symbols, pos) in entries.iter() {
        if prefix.next_bit(symbols[dim], dim, bits) == 0 {
            left.push(symbols, pos);
        } else {
            right.push(symbols, pos);
        }
    }
    Ok(Split { dim, left: (prefix.extend(dim, 0), left), right: (prefix.extend(dim, 1), right) })
}

/// Interval covered by `prefix` in dimension `dim`, given that dimension's
/// breakpoint row. Edges touching the first or last region are infinite
/// because clamped points may lie beyond the sampled extremes.
pub fn node_interval(prefix: &NodePrefix, dim: usize, row: &[f64], bits: u8) -> (f64, f64) {
    let b = prefix.bits_used(dim);
    if b == 0 {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let n_regions = row.len() - 1;
    let shift = bits - b;
    let p = usize::from(prefix.value(dim));
    let first = p << shift;
    let last = ((p + 1) << shift) - 1;
    let lo = if first == 0 { f64::NEG_INFINITY } else { row[first] };
    let hi = if last >= n_regions - 1 { f64::INFINITY } else { row[last + 1] };
    (lo, hi)
}

fn mindist_sq(q: &[f64], prefix: &NodePrefix, table: &BreakpointTable, space: usize) -> f64 {
    let bits = table.symbol_bits();
    q.iter()
        .enumerate()
        .map(|(j, &x)| {
            let (lo, hi) = node_interval(prefix, j, table.row(space, j), bits);
            near_gap_sq(x, lo, hi)
        })
        .sum()
}

fn maxdist_sq(q: &[f64], prefix: &NodePrefix, table: &BreakpointTable, space: usize) -> f64 {
    let bits = table.symbol_bits();
    q.iter()
        .enumerate()
        .map(|(j, &x)| {
            let (lo, hi) = node_interval(prefix, j, table.row(space, j), bits);
            far_gap_sq(x, lo, hi)
        })
        .sum()
}

/// Lower bound on the distance from `q` to any point under `prefix` in `space`.
pub fn mindist(q: &[f64], prefix: &NodePrefix, table: &BreakpointTable, space: usize) -> f64 {
    libm::sqrt(mindist_sq(q, prefix, table, space))
}

/// Upper bound on that distance; `+inf` if any interval edge is infinite.
pub fn maxdist(q: &[f64], prefix: &NodePrefix, table: &BreakpointTable, space: usize) -> f64 {
    libm::sqrt(maxdist_sq(q, prefix, table, space))
}

/// Per-query lookup tables of squared per-dimension gaps, so node bounds
/// cost one table read per dimension. Values equal those of [`mindist`] and
/// [`maxdist`].
#[derive(Debug, Clone)]
pub struct QueryBounds {
    query: Vec<f64>,
    stride: usize,
    near: Vec<f64>,
    far: Vec<f64>,
}

impl QueryBounds {
    pub fn new(q: &[f64], table: &BreakpointTable, space: usize) -> Self {
        let bits = table.symbol_bits();
        let stride = (1usize << (bits + 1)) - 1;
        let mut near = vec![0.0; q.len() * stride];
        let mut far = vec![0.0; q.len() * stride];
        let mut prefix = NodePrefix::unconstrained(1);
        for (j, &x) in q.iter().enumerate() {
            let row = table.row(space, j);
            for b in 0..=bits {
                prefix.data[0] = b;
                for p in 0..1usize << b {
                    prefix.data[1] = p as u8;
                    let (lo, hi) = node_interval(&prefix, 0, row, bits);
                    let at = j * stride + (1 << b) - 1 + p;
                    near[at] = near_gap_sq(x, lo, hi);
                    far[at] = far_gap_sq(x, lo, hi);
                }
            }
        }
        QueryBounds { query: q.to_vec(), stride, near, far }
    }

    pub fn query(&self) -> &[f64] {
        &self.query
    }

    #[inline]
    fn slot_of(bits_used: u8, value: u8) -> u16 {
        ((1u16 << bits_used) - 1) + u16::from(value)
    }

    #[inline]
    fn slot(&self, prefix: &NodePrefix, j: usize) -> usize {
        j * self.stride + usize::from(Self::slot_of(prefix.bits_used(j), prefix.value(j)))
    }

    #[inline]
    fn mindist_sq_slots(&self, slots: &[u16]) -> f64 {
        slots.iter().zip(self.near.chunks_exact(self.stride)).map(|(&s, row)| row[usize::from(s)]).sum()
    }

    #[inline]
    pub fn mindist_sq(&self, prefix: &NodePrefix) -> f64 {
        (0..self.query.len()).map(|j| self.near[self.slot(prefix, j)]).sum()
    }

    #[inline]
    pub fn maxdist_sq(&self, prefix: &NodePrefix) -> f64 {
        (0..self.query.len()).map(|j| self.far[self.slot(prefix, j)]).sum()
    }
}

#[inline]
fn near_gap_sq(x: f64, lo: f64, hi: f64) -> f64 {
    let gap = if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    };
    gap * gap
}

#[inline]
fn far_gap_sq(x: f64, lo: f64, hi: f64) -> f64 {
    if lo.is_infinite() || hi.is_infinite() {
        return f64::INFINITY;
    }
    let far = (x - lo).abs().max((x - hi).abs());
    far * far
}

/// Receives whole leaves from [`DeTree::range_query_optimized`].
pub trait CandidateSink {
    /// Returning `Break` ends the traversal after this leaf.
    fn accept_leaf(&mut self, positions: &[u32]) -> ControlFlow<()>;
}

impl<F: FnMut(&[u32]) -> ControlFlow<()>> CandidateSink for F {
    fn accept_leaf(&mut self, positions: &[u32]) -> ControlFlow<()> {
        self(positions)
    }
}

#[derive(Debug, Clone, Copy)]
struct QueuedLeaf {
    mindist_sq: f64,
    order: u32,
    node: NodeId,
}

impl PartialEq for QueuedLeaf {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueuedLeaf {}

impl PartialOrd for QueuedLeaf {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedLeaf {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mindist_sq.total_cmp(&other.mindist_sq).then(self.order.cmp(&other.order))
    }
}

/// One DE-Tree over the symbols of a single projected space.
#[derive(Debug, Clone, PartialEq)]
pub struct DeTree {
    space: usize,
    dims: usize,
    bits: u8,
    max_size: usize,
    directory: Vec<NodeId>,
    occupied: Vec<u32>,
    nodes: Vec<Node>,
    /// Per node, per dimension: index of its prefix in a [`QueryBounds`] row.
    bound_slots: Vec<u16>,
    len: usize,
}

/// Builds the tree of `space` from the encoded dataset.
pub fn build_tree(encoded: &EncodedDataset, space: usize, max_size: usize) -> Result<DeTree> {
    ensure(space < encoded.spaces(), "space index out of range")?;
    DeTree::from_symbols(space, encoded.dims(), encoded.symbol_bits(), max_size, encoded.space(space))
}

impl DeTree {
    /// Inserts `symbols` (`[point][dim]`, K per point) in order; point `z`
    /// gets position `z`.
    pub fn from_symbols(space: usize, dims: usize, bits: u8, max_size: usize, symbols: &[u8]) -> Result<Self> {
        let mut tree = DeTree::empty(space, dims, bits, max_size)?;
        ensure(symbols.len().is_multiple_of(dims), "symbol buffer is not a multiple of K")?;
        ensure(symbols.len() / dims <= u32::MAX as usize, "too many points")?;
        for (z, sym) in symbols.chunks_exact(dims).enumerate() {
            tree.insert(sym, z as u32);
        }
        tree.occupied.sort_unstable();
        tree.finalize();
        Ok(tree)
    }

    /// Renumbers nodes in depth-first order (roots by slot, left before
    /// right), so equal trees have equal node ids, and fills the bound slots.
    fn finalize(&mut self) {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = Vec::new();
        for &slot in &self.occupied {
            stack.push(self.directory[slot as usize]);
            while let Some(id) = stack.pop() {
                order.push(id);
                if let Some([l, r]) = self.nodes[id as usize].children() {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        let mut new_id = vec![EMPTY_SLOT; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old as usize] = new as NodeId;
        }
        let mut old_nodes: Vec<Option<Node>> = core::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        self.nodes = order
            .iter()
            .map(|&old| {
                let mut node = old_nodes[old as usize].take().expect("each node visited once");
                if let NodeKind::Internal { children, .. } = &mut node.kind {
                    *children = children.map(|c| new_id[c as usize]);
                }
                node
            })
            .collect();
        for &slot in &self.occupied {
            let d = &mut self.directory[slot as usize];
            *d = new_id[*d as usize];
        }
        self.bound_slots = self
            .nodes
            .iter()
            .flat_map(|n| (0..self.dims).map(|j| QueryBounds::slot_of(n.prefix.bits_used(j), n.prefix.value(j))))
            .collect();
    }

    #[inline]
    fn node_mindist_sq(&self, bounds: &QueryBounds, id: NodeId) -> f64 {
        let at = id as usize * self.dims;
        bounds.mindist_sq_slots(&self.bound_slots[at..at + self.dims])
    }

    fn empty(space: usize, dims: usize, bits: u8, max_size: usize) -> Result<Self> {
        ensure(dims >= 1, "K must be positive")?;
        ensure(dims <= MAX_TREE_DIMS, "K too large to materialize the root fanout")?;
        ensure((1..=8).contains(&bits), "symbol width must be 1..=8 bits")?;
        ensure(max_size >= 1, "leaf capacity must be positive")?;
        Ok(DeTree {
            space,
            dims,
            bits,
            max_size,
            directory: vec![EMPTY_SLOT; 1 << dims],
            occupied: Vec::new(),
            nodes: Vec::new(),
            bound_slots: Vec::new(),
            len: 0,
        })
    }

    /// Reassembles a tree from its nodes, e.g. after deserialization. Checks
    /// child links, prefix consistency, and that positions are not repeated.
    pub fn from_parts(
        space: usize,
        dims: usize,
        bits: u8,
        max_size: usize,
        roots: Vec<(u32, NodeId)>,
        nodes: Vec<Node>,
    ) -> Result<Self> {
        let mut tree = DeTree::empty(space, dims, bits, max_size)?;
        let mut seen_child = vec![false; nodes.len()];
        for (slot, id) in &roots {
            ensure((*slot as usize) < tree.directory.len(), "root slot out of range")?;
            ensure((*id as usize) < nodes.len(), "root node out of range")?;
            ensure(tree.directory[*slot as usize] == EMPTY_SLOT, "duplicate root slot")?;
            ensure(nodes[*id as usize].prefix == NodePrefix::first_layer(*slot, dims), "root prefix mismatch")?;
            ensure(!core::mem::replace(&mut seen_child[*id as usize], true), "node reachable twice")?;
            tree.directory[*slot as usize] = *id;
            tree.occupied.push(*slot);
        }
        let mut len = 0;
        for node in &nodes {
            ensure(node.prefix.dims() == dims, "prefix width mismatch")?;
            match &node.kind {
                NodeKind::Internal { split_dim, children } => {
                    ensure(*split_dim < dims, "split dimension out of range")?;
                    for (bit, &child) in children.iter().enumerate() {
                        ensure((child as usize) < nodes.len(), "child node out of range")?;
                        ensure(!core::mem::replace(&mut seen_child[child as usize], true), "node reachable twice")?;
                        ensure(
                            nodes[child as usize].prefix == node.prefix.extend(*split_dim, bit as u8),
                            "child prefix does not extend its parent",
                        )?;
                    }
                }
                NodeKind::Leaf(entries) => {
                    ensure(entries.dims == dims, "leaf symbol width mismatch")?;
                    ensure(
                        entries
                            .iter()
                            .all(|(s, _)| node.prefix.matches(s, bits) && s.iter().all(|&x| u16::from(x) < 1 << bits)),
                        "leaf entry does not match its prefix",
                    )?;
                    len += entries.len();
                }
            }
        }
        ensure(seen_child.iter().all(|&s| s), "unreachable node")?;
        tree.occupied.sort_unstable();
        tree.nodes = nodes;
        tree.len = len;
        tree.finalize();
        let mut positions: Vec<u32> =
            tree.leaves().flat_map(|id| tree.leaf_entries(id).positions().iter().copied()).collect();
        positions.sort_unstable();
        ensure(positions.windows(2).all(|w| w[0] != w[1]), "position stored twice")?;
        Ok(tree)
    }

    fn root_slot(&self, symbols: &[u8]) -> u32 {
        symbols.iter().fold(0u32, |slot, &s| (slot << 1) | u32::from((s >> (self.bits - 1)) & 1))
    }

    fn insert(&mut self, symbols: &[u8], position: u32) {
        let slot = self.root_slot(symbols);
        let mut id = self.directory[slot as usize];
        if id == EMPTY_SLOT {
            id = self.push_node(Node::leaf(NodePrefix::first_layer(slot, self.dims), LeafEntries::new(self.dims)));
            self.directory[slot as usize] = id;
            self.occupied.push(slot);
        }
        loop {
            match &self.nodes[id as usize].kind {
                NodeKind::Internal { split_dim, children } => {
                    let bit = self.nodes[id as usize].prefix.next_bit(symbols[*split_dim], *split_dim, self.bits);
                    id = children[usize::from(bit)];
                }
                NodeKind::Leaf(entries) if entries.len() >= self.max_size => {
                    if !self.split(id) {
                        break;
                    }
                }
                NodeKind::Leaf(_) => break,
            }
        }
        if let NodeKind::Leaf(entries) = &mut self.nodes[id as usize].kind {
            entries.push(symbols, position);
        }
        self.len += 1;
    }

    /// Splits leaf `id` in place; `false` if it cannot be refined further.
    fn split(&mut self, id: NodeId) -> bool {
        let node = &mut self.nodes[id as usize];
        let NodeKind::Leaf(entries) = core::mem::replace(&mut node.kind, NodeKind::Leaf(LeafEntries::new(0))) else {
            unreachable!("split called on an internal node");
        };
        match split_leaf(&node.prefix, entries, self.bits) {
            Err(entries) => {
                node.kind = NodeKind::Leaf(entries);
                false
            }
            Ok(Split { dim, left, right }) => {
                let l = self.push_node(Node::leaf(left.0, left.1));
                let r = self.push_node(Node::leaf(right.0, right.1));
                self.nodes[id as usize].kind = NodeKind::Internal { split_dim: dim, children: [l, r] };
                true
            }
        }
    }

    fn push_node(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        (self.nodes.len() - 1) as NodeId
    }

    pub fn space(&self) -> usize {
        self.space
    }

    /// Projected dimension K.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn symbol_bits(&self) -> u8 {
        self.bits
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Approximate heap footprint of the directory and nodes.
    pub fn heap_bytes(&self) -> usize {
        let nodes: usize = self
            .nodes
            .iter()
            .map(|n| {
                core::mem::size_of::<Node>()
                    + n.prefix.data.len()
                    + n.entries().map_or(0, |e| e.positions.capacity() * 4 + e.symbols.capacity())
            })
            .sum();
        self.directory.len() * 4 + self.occupied.len() * 4 + self.bound_slots.len() * 2 + nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Instantiated first-layer nodes in slot order.
    pub fn roots(&self) -> impl ExactSizeIterator<Item = (u32, NodeId)> + '_ {
        self.occupied.iter().map(|&slot| (slot, self.directory[slot as usize]))
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as NodeId).filter(|&id| self.nodes[id as usize].is_leaf())
    }

    fn leaf_entries(&self, id: NodeId) -> &LeafEntries {
        self.nodes[id as usize].entries().expect("leaf")
    }

    /// Every position stored below `id`.
    pub fn subtree_positions(&self, id: NodeId) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(id) = stack.pop() {
            match &self.nodes[id as usize].kind {
                NodeKind::Leaf(e) => out.extend_from_slice(e.positions()),
                NodeKind::Internal { children, .. } => stack.extend_from_slice(children),
            }
        }
        out
    }

    pub fn mindist(&self, q: &[f64], id: NodeId, table: &BreakpointTable) -> f64 {
        mindist(q, &self.nodes[id as usize].prefix, table, self.space)
    }

    pub fn maxdist(&self, q: &[f64], id: NodeId, table: &BreakpointTable) -> f64 {
        maxdist(q, &self.nodes[id as usize].prefix, table, self.space)
    }

    /// All positions whose projected point lies within `radius` of `q`.
    ///
    /// Subtrees with a lower bound above the radius are pruned, leaves whose
    /// upper bound fits are taken whole, and remaining leaves are checked
    /// point by point with coordinates supplied by `lookup(position, out)`.
    pub fn range_query_exact<F>(&self, table: &BreakpointTable, q: &[f64], radius: f64, lookup: F) -> Vec<u32>
    where
        F: FnMut(u32, &mut [f64]),
    {
        self.range_query_exact_with(&QueryBounds::new(q, table, self.space), radius, lookup)
    }

    /// [`DeTree::range_query_exact`] with precomputed bounds for this tree's space.
    pub fn range_query_exact_with<F>(&self, bounds: &QueryBounds, radius: f64, mut lookup: F) -> Vec<u32>
    where
        F: FnMut(u32, &mut [f64]),
    {
        let q = bounds.query();
        debug_assert_eq!(q.len(), self.dims);
        let r_sq = radius * radius;
        let mut out = Vec::new();
        let mut coords = vec![0.0; self.dims];
        let mut stack: Vec<NodeId> = self.roots().map(|(_, id)| id).collect();
        stack.reverse();
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if self.node_mindist_sq(bounds, id) > r_sq {
                continue;
            }
            match &node.kind {
                NodeKind::Internal { children, .. } => {
                    stack.push(children[1]);
                    stack.push(children[0]);
                }
                NodeKind::Leaf(entries) => {
                    if bounds.maxdist_sq(&node.prefix) <= r_sq {
                        out.extend_from_slice(entries.positions());
                        continue;
                    }
                    for &pos in entries.positions() {
                        lookup(pos, &mut coords);
                        if crate::dataset::squared_distance_f64(q, &coords) <= r_sq {
                            out.push(pos);
                        }
                    }
                }
            }
        }
        out
    }

    /// Relaxed range query: every non-empty leaf with lower bound within
    /// `radius` is handed whole to `sink`, nearest lower bound first.
    /// Returns `Break` if the sink stopped the traversal.
    pub fn range_query_optimized<S>(
        &self,
        table: &BreakpointTable,
        q: &[f64],
        radius: f64,
        sink: &mut S,
    ) -> ControlFlow<()>
    where
        S: CandidateSink + ?Sized,
    {
        self.range_query_optimized_with(&QueryBounds::new(q, table, self.space), radius, sink)
    }

    /// [`DeTree::range_query_optimized`] with precomputed bounds for this tree's space.
    pub fn range_query_optimized_with<S>(&self, bounds: &QueryBounds, radius: f64, sink: &mut S) -> ControlFlow<()>
    where
        S: CandidateSink + ?Sized,
    {
        debug_assert_eq!(bounds.query().len(), self.dims);
        let r_sq = radius * radius;
        let mut queued = Vec::new();
        let mut stack: Vec<(NodeId, f64)> = Vec::new();
        let mut order = 0u32;
        for (_, root) in self.roots() {
            stack.push((root, self.node_mindist_sq(bounds, root)));
            while let Some((id, dist_sq)) = stack.pop() {
                if dist_sq > r_sq {
                    continue;
                }
                match &self.nodes[id as usize].kind {
                    NodeKind::Leaf(entries) => {
                        if !entries.is_empty() {
                            queued.push(Reverse(QueuedLeaf { mindist_sq: dist_sq, order, node: id }));
                            order += 1;
                        }
                    }
                    NodeKind::Internal { children, .. } => {
                        for &child in children.iter().rev() {
                            let d = self.node_mindist_sq(bounds, child);
                            stack.push((child, d));
                        }
                    }
                }
            }
        }
        let mut heap = BinaryHeap::from(queued);
        while let Some(Reverse(leaf)) = heap.pop() {
            sink.accept_leaf(self.leaf_entries(leaf.node).positions())?;
        }
        ControlFlow::Continue(())
    }
}
