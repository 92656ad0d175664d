//! Earth mover's distance between PSNR histograms.
//!
//! The general route solves the flow problem as a transportation LP with
//! ground distance `|mu - nu|` between bin indices and tolerates unequal
//! total masses, in which case exactly `min(sum P, sum Q)` is moved. For two
//! normalized 1-D histograms the optimum has the closed form
//! `sum_k |CDF_P(k) - CDF_Q(k)|`, which is what [`dm_metric`] uses. Distances
//! are reported in dB by scaling the bin-index distance by the bin width.

pub mod simplex;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{HistogramError, PerformanceHistogram};
use simplex::{InitialBasis, SolveError};

/// Absolute tolerance on the total mass of a normalized input.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("input has no positive mass")]
    ZeroMass,
    #[error("input is empty")]
    Empty,
    #[error("mass vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("mass {0} at bin {1} is negative or not finite")]
    InvalidMass(f64, usize),
    #[error("input is not normalized: total mass {0}")]
    NotNormalized(f64),
    #[error("bin width {0} must be positive and finite")]
    InvalidWidth(f64),
    #[error("transport solver hit its iteration limit ({0} pivots)")]
    IterationLimit(usize),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lp,
    ClosedForm,
}

/// Optimal flows `f[mu][nu]` between source bins (rows) and target bins
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    rows: usize,
    cols: usize,
    flows: Vec<f64>,
}

impl FlowMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, mu: usize, nu: usize) -> f64 {
        self.flows[mu * self.cols + nu]
    }

    pub fn total(&self) -> f64 {
        self.flows.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flows.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|nu| (0..self.rows).map(|mu| self.get(mu, nu)).sum())
            .collect()
    }

    /// `sum f[mu][nu] * |mu - nu|`.
    pub fn work(&self) -> f64 {
        (0..self.rows)
            .flat_map(|mu| (0..self.cols).map(move |nu| (mu, nu)))
            .map(|(mu, nu)| self.get(mu, nu) * mu.abs_diff(nu) as f64)
            .sum()
    }

    /// Writes non-zero flows as `mu,nu,flow` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "mu,nu,flow")?;
        for mu in 0..self.rows {
            for nu in 0..self.cols {
                let f = self.get(mu, nu);
                if f > 0.0 {
                    writeln!(w, "{mu},{nu},{f}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmResult {
    pub dm_db: f64,
    pub flow: Option<FlowMatrix>,
    pub method: Method,
}

fn check_masses(v: &[f64]) -> Result<f64, TransportError> {
    if v.is_empty() {
        return Err(TransportError::Empty);
    }
    if let Some((i, &m)) = v.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
        return Err(TransportError::InvalidMass(m, i));
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Err(TransportError::ZeroMass);
    }
    Ok(total)
}

fn check_width(width_db: f64) -> Result<(), TransportError> {
    if width_db > 0.0 && width_db.is_finite() {
        Ok(())
    } else {
        Err(TransportError::InvalidWidth(width_db))
    }
}

/// Solves the flow problem between `p` and `q` exactly as a transportation
/// LP and returns the flow-normalized work times `width_db`.
///
/// Unequal totals are handled by a zero-cost slack bin on the lighter side,
/// so exactly `min(sum p, sum q)` is transported between real bins.
pub fn emd_lp(p: &[f64], q: &[f64], width_db: f64) -> Result<DmResult, TransportError> {
    emd_lp_with(p, q, width_db, InitialBasis::LeastCost)
}

pub fn emd_lp_with(p: &[f64], q: &[f64], width_db: f64, init: InitialBasis) -> Result<DmResult, TransportError> {
    check_width(width_db)?;
    let total_p = check_masses(p)?;
    let total_q = check_masses(q)?;
    let (m, n) = (p.len(), q.len());

    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    if total_p > total_q {
        demand.push(total_p - total_q);
    } else if total_q > total_p {
        supply.push(total_q - total_p);
    }
    let cost = |r: usize, c: usize| {
        if r >= m || c >= n {
            0.0
        } else {
            r.abs_diff(c) as f64
        }
    };
    let sol = simplex::solve(&supply, &demand, &cost, init).map_err(|e| match e {
        SolveError::Empty => TransportError::Empty,
        SolveError::IterationLimit(k) => TransportError::IterationLimit(k),
    })?;

    let flows: Vec<f64> = (0..m)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| sol.flow[r * sol.cols + c])
        .collect();
    let flow = FlowMatrix {
        rows: m,
        cols: n,
        flows,
    };
    let moved = flow.total();
    let dm_db = if moved > 0.0 {
        flow.work() / moved * width_db
    } else {
        0.0
    };
    Ok(DmResult {
        dm_db: dm_db.max(0.0),
        flow: Some(flow),
        method: Method::Lp,
    })
}

/// Closed-form EMD of two normalized 1-D histograms on a common grid:
/// `width_db * sum_k |CDF_p(k) - CDF_q(k)|`.
pub fn emd_1d(p: &[f64], q: &[f64], width_db: f64) -> Result<DmResult, TransportError> {
    check_width(width_db)?;
    if p.len() != q.len() {
        return Err(TransportError::LengthMismatch(p.len(), q.len()));
    }
    for v in [p, q] {
        let total = check_masses(v)?;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(TransportError::NotNormalized(total));
        }
    }
    let (mut cdf_p, mut cdf_q, mut sum) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q) {
        cdf_p += a;
        cdf_q += b;
        sum += f64::abs(cdf_p - cdf_q);
    }
    Ok(DmResult {
        dm_db: sum * width_db,
        flow: None,
        method: Method::ClosedForm,
    })
}

/// Closed-form EMD straight from integer counts.
///
/// `sum_k |C_p(k) N_q - C_q(k) N_p|` is accumulated exactly in integers and
/// divided once by `N_p N_q`, so identical histograms give exactly 0 and a
/// histogram shifted by `j` bins gives exactly `j`.
fn emd_counts(p: &[u64], q: &[u64]) -> f64 {
    let n_p: u128 = p.iter().map(|&c| u128::from(c)).sum();
    let n_q: u128 = q.iter().map(|&c| u128::from(c)).sum();
    let (mut cp, mut cq, mut acc) = (0u128, 0u128, 0u128);
    for (&a, &b) in p.iter().zip(q) {
        cp += u128::from(a);
        cq += u128::from(b);
        acc += (cp * n_q).abs_diff(cq * n_p);
    }
    acc as f64 / (n_p * n_q) as f64
}

/// How [`dm_metric_with`] compares two histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportMode {
    /// Compare normalized distributions (sample-size independent).
    #[default]
    Normalized,
    /// Transport raw counts; only `min(N_p, N_q)` mass moves.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DmOptions {
    pub mode: TransportMode,
    /// Solve the LP and retain its optimal flow.
    pub keep_flow: bool,
}

/// Domain mismatch between a source and a target histogram, in dB.
pub fn dm_metric(source: &PerformanceHistogram, target: &PerformanceHistogram) -> Result<DmResult, TransportError> {
    dm_metric_with(source, target, DmOptions::default())
}

pub fn dm_metric_with(
    source: &PerformanceHistogram,
    target: &PerformanceHistogram,
    opts: DmOptions,
) -> Result<DmResult, TransportError> {
    if source.binning() != target.binning() {
        return Err(HistogramError::BinningMismatch(*source.binning(), *target.binning()).into());
    }
    if source.is_empty() || target.is_empty() {
        return Err(HistogramError::Empty.into());
    }
    let width = source.binning().width_db();
    match opts.mode {
        TransportMode::Normalized if !opts.keep_flow => Ok(DmResult {
            dm_db: emd_counts(source.counts(), target.counts()) * width,
            flow: None,
            method: Method::ClosedForm,
        }),
        TransportMode::Normalized => emd_lp(&source.masses()?, &target.masses()?, width),
        TransportMode::Partial => {
            let as_f64 = |h: &PerformanceHistogram| h.counts().iter().map(|&c| c as f64).collect::<Vec<_>>();
            emd_lp(&as_f64(source), &as_f64(target), width)
        }
    }
}
