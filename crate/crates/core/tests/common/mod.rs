//! Helpers shared across integration test binaries.
#![allow(dead_code)]

use hypack::CostMatrix;

/// Minimum assignment cost by exhaustive permutation search (Heap's
/// algorithm), totals computed by the same summation as the solver's.
pub fn brute_force_min(cost: &CostMatrix) -> f64 {
    let n = cost.size();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = cost.total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost.total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}
