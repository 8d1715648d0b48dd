//! Rank correlations: Kendall tau-b (definitional and merge-sort paths) and
//! Spearman's rho as the Pearson correlation of mid-ranks. Both return `None`
//! when a vector is entirely tied.

use std::cmp::Ordering;

use crate::error::{Error, Result};

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "correlation inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::validation(
            "correlation needs at least two observations",
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::validation("correlation inputs contain NaN"));
    }
    Ok(())
}

fn tau_from_counts(n: usize, n1: i64, n2: i64, s: i64) -> Option<f64> {
    let n0 = (n * (n - 1) / 2) as i64;
    let den = ((n0 - n1) as f64) * ((n0 - n2) as f64);
    if den == 0.0 {
        return None;
    }
    Some(s as f64 / den.sqrt())
}

fn sign(o: Ordering) -> i64 {
    match o {
        Ordering::Less => -1,
        Ordering::Equal => 0,
        Ordering::Greater => 1,
    }
}

/// Number of pairs tied within runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Tau-b by enumerating all pairs.
pub fn kendall_tau_naive(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    let n = x.len();
    let (mut s, mut n1, mut n2) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = sign(x[i].total_cmp(&x[j]));
            let b = sign(y[i].total_cmp(&y[j]));
            s += a * b;
            n1 += (a == 0) as i64;
            n2 += (b == 0) as i64;
        }
    }
    Ok(tau_from_counts(n, n1, n2, s))
}

/// Tau-b in O(n log n): sort by `(x, y)`, then count discordant pairs as the
/// exchanges of a merge sort on `y`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    let n = x.len();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let key = |p: &(f64, f64)| (p.0.to_bits(), p.1.to_bits());
    let xs: Vec<u64> = pairs.iter().map(|p| p.0.to_bits()).collect();
    let joint: Vec<(u64, u64)> = pairs.iter().map(key).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&joint);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);
    let ybits: Vec<u64> = ys.iter().map(|v| v.to_bits()).collect();
    let n2 = tied_pairs(&ybits);
    let n0 = (n * (n - 1) / 2) as i64;
    let s = n0 - n1 - n2 + n3 - 2 * swaps;
    Ok(tau_from_counts(n, n1, n2, s))
}

/// Sorts `v` ascending and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            count += (mid - i) as i64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
    count
}

/// 1-based ranks with ties replaced by the mean of the ranks they span.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]].total_cmp(&v[idx[i]]) == Ordering::Equal {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    pearson(&mid_ranks(x), &mid_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0];
        for f in [kendall_tau, kendall_tau_naive] {
            assert!((f(&x, &y).unwrap().unwrap() - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(f(&x, &x).unwrap(), Some(1.0));
            assert_eq!(f(&x, &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        }
        assert!((spearman_rho(&x, &y).unwrap().unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(spearman_rho(&x, &x).unwrap(), Some(1.0));
        assert_eq!(spearman_rho(&x, &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
    }

    #[test]
    fn ties_and_errors() {
        assert_eq!(mid_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(kendall_tau(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        assert_eq!(spearman_rho(&[1.0, 2.0], &[4.0, 4.0]).unwrap(), None);
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
        // Tie-corrected value checked against the textbook formula.
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 2.0, 3.0];
        let t = kendall_tau(&x, &y).unwrap().unwrap();
        assert!((t - 4.0 / 5.0).abs() < 1e-15, "{t}");
    }
}
