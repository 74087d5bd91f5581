//! Quantile bin edges.
//!
//! Edges are always actual data values, so bin assignment depends only on the
//! rank order of a column. A value `x` lands in bin `b` when
//! `edges[b-1] < x <= edges[b]`, which makes "bin ≤ b" equivalent to
//! "x ≤ edges[b]" and lets trained trees predict on raw values.

use alloc::vec::Vec;

/// Strictly increasing edges for one column, yielding at most `n_bins` bins.
/// A constant column has no edges (a single bin).
pub fn compute_edges(column: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut unique = sorted.clone();
    unique.dedup();
    if unique.len() <= 1 {
        return Vec::new();
    }
    if unique.len() <= n_bins {
        unique.pop();
        return unique;
    }

    let n = sorted.len();
    let top = *unique.last().unwrap();
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for i in 1..n_bins {
        let rank = (i * n).div_ceil(n_bins).max(1) - 1;
        let e = sorted[rank];
        if e < top && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

/// Bin index of `x`: the number of edges strictly below it.
pub fn bin_of(x: f64, edges: &[f64]) -> u8 {
    edges.partition_point(|&e| e < x) as u8
}
