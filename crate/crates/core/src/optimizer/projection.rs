//! Euclidean projections onto the feasible sets of the offer problems.

/// Entrywise clamp to `[lo, hi]`.
pub fn project_box(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    project_box_in_place(&mut out, lo, hi);
    out
}

pub fn project_box_in_place(x: &mut [f64], lo: f64, hi: f64) {
    for v in x {
        *v = v.clamp(lo, hi);
    }
}

/// Projection onto `{0 ≤ q ≤ cap, Σ q ≤ cap}`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    project_capped_simplex_in_place(&mut out, cap);
    out
}

/// If clamping to the box already satisfies the sum constraint that is the
/// projection; otherwise the sum constraint is active and the answer is the
/// projection onto `{q ≥ 0, Σ q = cap}` (whose entries are automatically ≤ cap),
/// found by sorting and thresholding.
pub fn project_capped_simplex_in_place(v: &mut [f64], cap: f64) {
    let clipped_sum: f64 = v.iter().map(|x| x.clamp(0.0, cap)).sum();
    if clipped_sum <= cap {
        project_box_in_place(v, 0.0, cap);
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - cap) / (k + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - threshold).max(0.0);
    }
}
