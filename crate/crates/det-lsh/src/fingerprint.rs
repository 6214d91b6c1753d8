use std::hash::Hasher;

use det_lsh_core::Dataset;
use fnv::FnvHasher;

/// 64-bit FNV-1a hash of a dataset's shape and little-endian `f32` contents.
pub fn dataset_fingerprint(data: &Dataset) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&(data.dim() as u64).to_le_bytes());
    h.write(&(data.len() as u64).to_le_bytes());
    let mut buf = Vec::with_capacity(4096);
    for chunk in data.as_slice().chunks(1024) {
        buf.clear();
        buf.extend(chunk.iter().flat_map(|v| v.to_le_bytes()));
        h.write(&buf);
    }
    h.finish()
}
