//! O(n log n) Kendall concordance counting (Knight's merge-sort algorithm).
//!
//! All routines return the integer numerator
//! `S = sum_{i<i'} sign(a_i - a_i') * sign(b_i - b_i')`, so ties in either
//! argument contribute zero and the result is exactly the brute-force pair sum.

use std::cmp::Ordering;

#[inline]
fn cmp(a: f64, b: f64) -> Ordering {
    // Inputs are finite; partial_cmp treats -0.0 == 0.0, matching the sign
    // of the difference.
    a.partial_cmp(&b).expect("finite inputs")
}

fn tied_pairs_in_sorted<T: Copy>(keys: &[T], eq: impl Fn(T, T) -> bool) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in keys.windows(2) {
        if eq(w[0], w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending and returns the number of strict inversions removed.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(v[j], v[i]) == Ordering::Less {
            // v[j] jumps ahead of every remaining left element.
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall numerator `S = C - D` between two equal-length finite slices.
pub fn concordance_numerator(a: &[f64], b: &[f64]) -> i64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| cmp(a[p], a[q]).then_with(|| cmp(b[p], b[q])));

    let sorted_a: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let sorted_ab: Vec<(f64, f64)> = order.iter().map(|&i| (a[i], b[i])).collect();
    let tied_a = tied_pairs_in_sorted(&sorted_a, |p, q| p == q);
    let tied_ab = tied_pairs_in_sorted(&sorted_ab, |p, q| p.0 == q.0 && p.1 == q.1);

    let mut by_b: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut by_b, &mut buf);
    let tied_b = tied_pairs_in_sorted(&by_b, |p, q| p == q);

    let total = (n as i64) * (n as i64 - 1) / 2;
    total - tied_a - tied_b + tied_ab - 2 * swaps
}

/// Number of pairs `n(n-1)/2`.
pub fn pair_count(n: usize) -> i64 {
    (n as i64) * (n as i64 - 1) / 2
}

/// Kendall tau-a: `S / (n choose 2)`.
pub fn tau_a(a: &[f64], b: &[f64]) -> f64 {
    concordance_numerator(a, b) as f64 / pair_count(a.len()) as f64
}

#[cfg(test)]
pub(crate) fn brute_force_numerator(a: &[f64], b: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..a.len() {
        for k in i + 1..a.len() {
            let sa = (a[i] - a[k]).partial_cmp(&0.0).unwrap() as i64;
            let sb = (b[i] - b[k]).partial_cmp(&0.0).unwrap() as i64;
            s += sa * sb;
        }
    }
    s
}
