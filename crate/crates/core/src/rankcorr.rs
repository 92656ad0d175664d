//! Kendall's tau-b rank correlation.
//!
//! `tau = (n_c - n_d) / sqrt((n_p - n_a)(n_p - n_b))` over all `n_p = K(K-1)/2`
//! unordered pairs. A pair tied in `a` counts toward `n_a`, a pair tied in
//! `b` toward `n_b`; a pair tied in both counts toward both.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("observation {0} is NaN")]
    NotANumber(usize),
    #[error("tau is undefined: every pair is tied in one component")]
    Undefined,
    #[error("tie tolerance {0} must be finite and non-negative")]
    BadTolerance(f64),
}

/// Observations `(a_k, b_k)`, `K >= 2`, no NaNs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSeries {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, RankError> {
        if a.len() != b.len() {
            return Err(RankError::LengthMismatch(a.len(), b.len()));
        }
        if a.len() < 2 {
            return Err(RankError::TooShort(a.len()));
        }
        if let Some(k) = a.iter().zip(&b).position(|(x, y)| x.is_nan() || y.is_nan()) {
            return Err(RankError::NotANumber(k));
        }
        // fold -0.0 into 0.0 so sorting and equality agree
        let clean = |v: Vec<f64>| v.into_iter().map(|x| x + 0.0).collect();
        Ok(Self {
            a: clean(a),
            b: clean(b),
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau: f64,
    pub n_c: u64,
    pub n_d: u64,
    pub n_a: u64,
    pub n_b: u64,
    pub n_p: u64,
}

impl TauResult {
    fn from_counts(n_c: u64, n_d: u64, n_a: u64, n_b: u64, n_p: u64) -> Result<Self, RankError> {
        if n_a == n_p || n_b == n_p {
            return Err(RankError::Undefined);
        }
        let num = n_c as f64 - n_d as f64;
        let den = (((n_p - n_a) as f64) * ((n_p - n_b) as f64)).sqrt();
        Ok(Self {
            tau: (num / den).clamp(-1.0, 1.0),
            n_c,
            n_d,
            n_a,
            n_b,
            n_p,
        })
    }

    /// `n_c - n_d`.
    pub fn numerator(&self) -> i64 {
        self.n_c as i64 - self.n_d as i64
    }

    /// `(n_p - n_a)(n_p - n_b)`, the square of the denominator.
    pub fn denominator_squared(&self) -> u64 {
        (self.n_p - self.n_a) * (self.n_p - self.n_b)
    }
}

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Sum of `t(t-1)/2` over runs of equal consecutive elements.
fn tied_pairs<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    total + pairs(run)
}

/// Sorts `v` and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        // equal keys come from the left half: not an inversion
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Tau-b in `O(K log K)` (Knight's algorithm), with exact tie detection.
pub fn kendall_tau(series: &PairedSeries) -> Result<TauResult, RankError> {
    let k = series.len();
    let mut obs: Vec<(f64, f64)> = series.a.iter().copied().zip(series.b.iter().copied()).collect();
    obs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let n_p = pairs(k as u64);
    let n_a = tied_pairs(&obs, |x, y| x.0 == y.0);
    let n_ab = tied_pairs(&obs, |x, y| x == y);

    let mut b: Vec<f64> = obs.iter().map(|o| o.1).collect();
    let n_d = merge_count(&mut b, &mut Vec::with_capacity(k));
    let n_b = tied_pairs(&b, |x, y| x == y);

    // inclusion-exclusion over the tie classes
    let n_c = n_p + n_ab - n_a - n_b - n_d;
    TauResult::from_counts(n_c, n_d, n_a, n_b, n_p)
}

/// Tau-b by explicit enumeration of all pairs. Values within `tolerance`
/// of each other count as tied.
pub fn kendall_tau_with_tolerance(series: &PairedSeries, tolerance: f64) -> Result<TauResult, RankError> {
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(RankError::BadTolerance(tolerance));
    }
    let cmp = |x: f64, y: f64| {
        if (x - y).abs() <= tolerance {
            Ordering::Equal
        } else if x < y {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    };
    let (a, b) = (&series.a, &series.b);
    let (mut n_c, mut n_d, mut n_a, mut n_b) = (0, 0, 0, 0);
    for k in 0..a.len() {
        for l in k + 1..a.len() {
            let (oa, ob) = (cmp(a[k], a[l]), cmp(b[k], b[l]));
            if oa == Ordering::Equal {
                n_a += 1;
            }
            if ob == Ordering::Equal {
                n_b += 1;
            }
            if oa != Ordering::Equal && ob != Ordering::Equal {
                if oa == ob {
                    n_c += 1;
                } else {
                    n_d += 1;
                }
            }
        }
    }
    TauResult::from_counts(n_c, n_d, n_a, n_b, pairs(a.len() as u64))
}

/// `O(K^2)` reference implementation with exact tie detection.
pub fn kendall_tau_bruteforce(series: &PairedSeries) -> Result<TauResult, RankError> {
    kendall_tau_with_tolerance(series, 0.0)
}
