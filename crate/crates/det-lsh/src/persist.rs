//! Binary index files.
//!
//! Layout (little-endian): magic `DETL`, `u32` version, parameters,
//! projector (hash-family seed and shape, or PAA shape), `r_min`, breakpoint
//! tables, each tree as a preorder node stream under its root slots, and
//! finally the dataset fingerprint. Original points are not stored; loading
//! takes the dataset and checks it against the fingerprint.

use std::fs;
use std::path::Path;

use det_lsh_core::tree::{LeafEntries, Node, NodeId, NodeKind, NodePrefix};
use det_lsh_core::{BreakpointTable, Dataset, DeTree, DetIndex, HashFamily, LshParams, Projector};

use crate::error::{io_error, HarnessError, Result};
use crate::fingerprint::dataset_fingerprint;

pub const MAGIC: [u8; 4] = *b"DETL";
pub const FORMAT_VERSION: u32 = 1;

const PROJECTOR_SEEDED: u8 = 0;
const PROJECTOR_EXPLICIT: u8 = 1;
const PROJECTOR_PAA: u8 = 2;
const NODE_LEAF: u8 = 0;
const NODE_INTERNAL: u8 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("length fits in u32"));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(HarnessError::Truncated(format!("index ends inside {what} at byte {}", self.at)));
        };
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn len(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }
}

fn format_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format(msg.into())
}

/// Serializes `index` to bytes.
pub fn index_to_bytes(index: &DetIndex) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(&MAGIC);
    w.u32(FORMAT_VERSION);

    let p = index.params();
    w.len(p.hashes);
    w.len(p.trees);
    w.f64(p.c);
    w.f64(p.beta);
    w.f64(p.epsilon);
    w.f64(p.alpha1);
    w.f64(p.alpha2);
    w.len(p.n_regions);
    w.f64(p.sample_fraction);
    w.len(p.leaf_capacity);
    match p.r_min {
        Some(r) => {
            w.u8(1);
            w.f64(r);
        }
        None => {
            w.u8(0);
            w.f64(0.0);
        }
    }
    w.len(p.k);
    w.u64(p.seed);

    match index.projector() {
        Projector::Lsh(family) => {
            match family.seed() {
                Some(seed) => {
                    w.u8(PROJECTOR_SEEDED);
                    w.u64(seed);
                }
                None => w.u8(PROJECTOR_EXPLICIT),
            }
            w.len(family.dim());
            w.len(family.hashes());
            w.len(family.spaces());
            if family.seed().is_none() {
                family.coefficients().iter().for_each(|&c| w.f64(c));
            }
        }
        Projector::Paa { dim, segments } => {
            w.u8(PROJECTOR_PAA);
            w.len(*dim);
            w.len(*segments);
        }
    }
    w.f64(index.r_min());

    let t = index.table();
    w.len(t.spaces());
    w.len(t.dims());
    w.len(t.n_regions());
    w.u64(t.sample_size() as u64);
    t.as_slice().iter().for_each(|&b| w.f64(b));

    w.len(index.trees().len());
    for tree in index.trees() {
        w.len(tree.space());
        w.len(tree.dims());
        w.u8(tree.symbol_bits());
        w.len(tree.max_size());
        w.len(tree.roots().len());
        for (slot, root) in tree.roots() {
            w.u32(slot);
            write_subtree(&mut w, tree, root);
        }
    }

    w.u64(dataset_fingerprint(index.data()));
    w.buf
}

fn write_subtree(w: &mut Writer, tree: &DeTree, root: NodeId) {
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        match tree.node(id).kind() {
            NodeKind::Leaf(entries) => {
                w.u8(NODE_LEAF);
                w.len(entries.len());
                entries.positions().iter().for_each(|&p| w.u32(p));
                w.buf.extend_from_slice(entries.all_symbols());
            }
            NodeKind::Internal { split_dim, children } => {
                w.u8(NODE_INTERNAL);
                w.u16(*split_dim as u16);
                stack.push(children[1]);
                stack.push(children[0]);
            }
        }
    }
}

/// Rebuilds an index from bytes and the dataset it was built on.
pub fn index_from_bytes(bytes: &[u8], data: Dataset) -> Result<DetIndex> {
    let mut r = Reader { bytes, at: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(HarnessError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(HarnessError::Version { found: version, expected: FORMAT_VERSION });
    }

    let hashes = r.len("params")?;
    let trees = r.len("params")?;
    let c = r.f64("params")?;
    let beta = r.f64("params")?;
    let epsilon = r.f64("params")?;
    let alpha1 = r.f64("params")?;
    let alpha2 = r.f64("params")?;
    let n_regions = r.len("params")?;
    let sample_fraction = r.f64("params")?;
    let leaf_capacity = r.len("params")?;
    let has_r_min = r.u8("params")?;
    let r_min_param = r.f64("params")?;
    let k = r.len("params")?;
    let seed = r.u64("params")?;
    let params = LshParams {
        hashes,
        trees,
        c,
        beta,
        epsilon,
        alpha1,
        alpha2,
        n_regions,
        sample_fraction,
        leaf_capacity,
        r_min: (has_r_min != 0).then_some(r_min_param),
        k,
        seed,
    };
    params.validate()?;

    let projector = match r.u8("projector")? {
        kind @ (PROJECTOR_SEEDED | PROJECTOR_EXPLICIT) => {
            let family_seed = if kind == PROJECTOR_SEEDED { Some(r.u64("projector")?) } else { None };
            let dim = r.len("projector")?;
            let hashes = r.len("projector")?;
            let spaces = r.len("projector")?;
            let family = match family_seed {
                Some(s) => HashFamily::sample(dim, hashes, spaces, s)?,
                None => {
                    let count = dim
                        .checked_mul(hashes)
                        .and_then(|x| x.checked_mul(spaces))
                        .ok_or_else(|| format_err("hash family shape overflows"))?;
                    let raw =
                        r.take(count.checked_mul(8).ok_or_else(|| format_err("hash family too large"))?, "projector")?;
                    let coefficients = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
                    HashFamily::from_coefficients(dim, hashes, spaces, coefficients)?
                }
            };
            Projector::Lsh(family)
        }
        PROJECTOR_PAA => {
            let dim = r.len("projector")?;
            let segments = r.len("projector")?;
            Projector::Paa { dim, segments }
        }
        other => return Err(format_err(format!("unknown projector kind {other}"))),
    };
    let r_min = r.f64("r_min")?;

    let spaces = r.len("breakpoints")?;
    let dims = r.len("breakpoints")?;
    let table_regions = r.len("breakpoints")?;
    let sample_size = r.u64("breakpoints")? as usize;
    let count = spaces
        .checked_mul(dims)
        .and_then(|x| x.checked_mul(table_regions.checked_add(1)?))
        .ok_or_else(|| format_err("breakpoint table shape overflows"))?;
    let raw = r.take(count.checked_mul(8).ok_or_else(|| format_err("breakpoint table too large"))?, "breakpoints")?;
    let boundaries = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let table = BreakpointTable::from_boundaries(spaces, dims, table_regions, sample_size, boundaries)?;

    let tree_count = r.len("trees")?;
    if tree_count != params.trees {
        return Err(format_err(format!("{tree_count} trees stored but L = {}", params.trees)));
    }
    let mut forest = Vec::with_capacity(tree_count);
    for _ in 0..tree_count {
        let space = r.len("tree header")?;
        let dims = r.len("tree header")?;
        let bits = r.u8("tree header")?;
        let max_size = r.len("tree header")?;
        let root_count = r.len("tree header")?;
        if dims == 0 || dims > det_lsh_core::tree::MAX_TREE_DIMS || bits == 0 || bits > 8 {
            return Err(format_err("tree header out of range"));
        }
        if root_count > 1 << dims {
            return Err(format_err("more roots than slots"));
        }
        let mut nodes = Vec::new();
        let mut roots = Vec::with_capacity(root_count);
        for _ in 0..root_count {
            let slot = r.u32("root slot")?;
            if slot >= 1 << dims {
                return Err(format_err("root slot out of range"));
            }
            let id = read_subtree(&mut r, NodePrefix::first_layer(slot, dims), dims, bits, &mut nodes)?;
            roots.push((slot, id));
        }
        forest.push(DeTree::from_parts(space, dims, bits, max_size, roots, nodes)?);
    }

    let stored = r.u64("fingerprint")?;
    if r.at != bytes.len() {
        return Err(format_err(format!("{} unexpected trailing bytes", bytes.len() - r.at)));
    }
    let found = dataset_fingerprint(&data);
    if stored != found {
        return Err(HarnessError::Fingerprint { expected: stored, found });
    }
    Ok(DetIndex::from_parts(params, projector, table, forest, data, r_min)?)
}

fn read_subtree(
    r: &mut Reader<'_>,
    prefix: NodePrefix,
    dims: usize,
    bits: u8,
    nodes: &mut Vec<Node>,
) -> Result<NodeId> {
    let id = nodes.len() as NodeId;
    match r.u8("node tag")? {
        NODE_LEAF => {
            let count = r.len("leaf")?;
            let positions = r.take(count * 4, "leaf positions")?;
            let positions = positions.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
            let symbols = r.take(count * dims, "leaf symbols")?.to_vec();
            nodes.push(Node::leaf(prefix, LeafEntries::from_parts(dims, positions, symbols)?));
        }
        NODE_INTERNAL => {
            let split_dim = usize::from(r.u16("split dimension")?);
            if split_dim >= dims || prefix.bits_used(split_dim) >= bits {
                return Err(format_err("split dimension out of range"));
            }
            nodes.push(Node::leaf(prefix.clone(), LeafEntries::new(dims)));
            let left = read_subtree(r, prefix.extend(split_dim, 0), dims, bits, nodes)?;
            let right = read_subtree(r, prefix.extend(split_dim, 1), dims, bits, nodes)?;
            nodes[id as usize] = Node::internal(prefix, split_dim, [left, right]);
        }
        other => return Err(format_err(format!("unknown node tag {other}"))),
    }
    Ok(id)
}

pub fn save_index(index: &DetIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, index_to_bytes(index)).map_err(io_error(path))
}

pub fn load_index(path: impl AsRef<Path>, data: Dataset) -> Result<DetIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_error(path))?;
    index_from_bytes(&bytes, data)
}
