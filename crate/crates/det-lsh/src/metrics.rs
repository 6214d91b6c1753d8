//! Accuracy measures against exact neighbors.

/// `|R ∩ R*| / k`, comparing positions.
pub fn recall(result: &[u32], truth: &[u32], k: usize) -> f64 {
    let hits = result.iter().filter(|p| truth.contains(p)).count();
    hits as f64 / k as f64
}

/// Mean rank-wise ratio of returned to exact distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverallRatio {
    /// `None` when every term was excluded.
    pub value: Option<f64>,
    /// Ranks whose exact distance is zero but returned distance is not;
    /// they cannot form a ratio and are left out of the mean.
    pub excluded: usize,
}

/// Ranks where both distances are zero count as ratio 1.
pub fn overall_ratio(result: &[f64], truth: &[f64]) -> OverallRatio {
    let mut sum = 0.0;
    let mut terms = 0usize;
    let mut excluded = 0usize;
    for (&got, &best) in result.iter().zip(truth) {
        if best > 0.0 {
            sum += got / best;
            terms += 1;
        } else if got == 0.0 {
            sum += 1.0;
            terms += 1;
        } else {
            excluded += 1;
        }
    }
    OverallRatio { value: (terms > 0).then(|| sum / terms as f64), excluded }
}
