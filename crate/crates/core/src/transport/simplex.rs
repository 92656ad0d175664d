//! Transportation simplex for balanced supply/demand problems.
//!
//! The basis is kept as a spanning tree over row and column nodes with
//! exactly `rows + cols - 1` cells, zero-flow cells included. Entering and
//! leaving cells follow Bland's rule (lowest row-major index), which rules
//! out cycling on degenerate problems.

use std::collections::VecDeque;

/// Reduced costs above `-EPS` are treated as non-negative.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialBasis {
    /// Staircase allocation from the top-left cell.
    NorthWest,
    /// Repeatedly fill the cheapest remaining cell.
    LeastCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub rows: usize,
    pub cols: usize,
    /// Row-major flows.
    pub flow: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveError {
    Empty,
    IterationLimit(usize),
}

struct Basis {
    rows: usize,
    cols: usize,
    flow: Vec<f64>,
    is_basic: Vec<bool>,
    cells: Vec<(usize, usize)>,
}

impl Basis {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            flow: vec![0.0; rows * cols],
            is_basic: vec![false; rows * cols],
            cells: Vec::with_capacity(rows + cols - 1),
        }
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    fn insert(&mut self, r: usize, c: usize, x: f64) {
        let i = self.idx(r, c);
        debug_assert!(!self.is_basic[i]);
        self.is_basic[i] = true;
        self.flow[i] = x;
        self.cells.push((r, c));
    }

    fn remove(&mut self, r: usize, c: usize) {
        let i = self.idx(r, c);
        self.is_basic[i] = false;
        self.flow[i] = 0.0;
        let pos = self.cells.iter().position(|&rc| rc == (r, c)).expect("cell is basic");
        self.cells.swap_remove(pos);
    }

    /// Adjacency over nodes `0..rows` (rows) and `rows..rows+cols` (columns).
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for &(r, c) in &self.cells {
            adj[r].push(self.rows + c);
            adj[self.rows + c].push(r);
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<usize>], cost: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.rows + self.cols;
        let mut pot = vec![f64::NAN; n];
        let mut queue = VecDeque::new();
        pot[0] = 0.0;
        queue.push_back(0);
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if !pot[b].is_nan() {
                    continue;
                }
                // u_r + v_c = cost(r, c) on every basic cell
                let (r, c) = if a < self.rows {
                    (a, b - self.rows)
                } else {
                    (b, a - self.rows)
                };
                pot[b] = cost(r, c) - pot[a];
                queue.push_back(b);
            }
        }
        debug_assert!(pot.iter().all(|p| !p.is_nan()), "basis is not spanning");
        let v = pot.split_off(self.rows);
        (pot, v)
    }

    /// Tree path from row node `r` to column node `c`, as the basic cells
    /// along it, starting next to row `r`.
    fn path(&self, adj: &[Vec<usize>], r: usize, c: usize) -> Vec<(usize, usize)> {
        let n = self.rows + self.cols;
        let target = self.rows + c;
        let mut parent = vec![usize::MAX; n];
        parent[r] = r;
        let mut queue = VecDeque::from([r]);
        while let Some(a) = queue.pop_front() {
            if a == target {
                break;
            }
            for &b in &adj[a] {
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != r {
            let prev = parent[node];
            let cell = if prev < self.rows {
                (prev, node - self.rows)
            } else {
                (node, prev - self.rows)
            };
            cells.push(cell);
            node = prev;
        }
        cells.reverse();
        cells
    }
}

fn north_west(supply: &mut [f64], demand: &mut [f64], basis: &mut Basis) {
    let (m, n) = (supply.len(), demand.len());
    let (mut r, mut c) = (0, 0);
    loop {
        let x = supply[r].min(demand[c]);
        basis.insert(r, c, x);
        supply[r] -= x;
        demand[c] -= x;
        if r == m - 1 && c == n - 1 {
            break;
        }
        if (supply[r] <= demand[c] && r < m - 1) || c == n - 1 {
            r += 1;
        } else {
            c += 1;
        }
    }
}

fn least_cost(supply: &mut [f64], demand: &mut [f64], basis: &mut Basis, cost: &dyn Fn(usize, usize) -> f64) {
    let (m, n) = (supply.len(), demand.len());
    let mut row_alive = vec![true; m];
    let mut col_alive = vec![true; n];
    let (mut rows_left, mut cols_left) = (m, n);
    for step in 0..m + n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for r in (0..m).filter(|&r| row_alive[r]) {
            for c in (0..n).filter(|&c| col_alive[c]) {
                let k = cost(r, c);
                if best.is_none_or(|(_, _, b)| k < b) {
                    best = Some((r, c, k));
                }
            }
        }
        let (r, c, _) = best.expect("a live row and column remain");
        let x = supply[r].min(demand[c]);
        basis.insert(r, c, x);
        supply[r] -= x;
        demand[c] -= x;
        if step == m + n - 2 {
            break;
        }
        // retire exactly one line per allocation
        let retire_row = (supply[r] <= demand[c] && rows_left > 1) || cols_left == 1;
        if retire_row {
            row_alive[r] = false;
            rows_left -= 1;
        } else {
            col_alive[c] = false;
            cols_left -= 1;
        }
    }
}

/// Minimizes `sum flow[r][c] * cost(r, c)` subject to row sums equal to
/// `supply` and column sums equal to `demand`. The two totals must agree up
/// to rounding.
pub fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
    init: InitialBasis,
) -> Result<Solution, SolveError> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(SolveError::Empty);
    }
    let mut basis = Basis::new(m, n);
    let (mut s, mut d) = (supply.to_vec(), demand.to_vec());
    match init {
        InitialBasis::NorthWest => north_west(&mut s, &mut d, &mut basis),
        InitialBasis::LeastCost => least_cost(&mut s, &mut d, &mut basis, cost),
    }
    debug_assert_eq!(basis.cells.len(), m + n - 1);

    let limit = 50 * (m + n) * (m + n) + 1000;
    let mut pivots = 0;
    loop {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(&adj, cost);
        let entering = (0..m)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .find(|&(r, c)| !basis.is_basic[basis.idx(r, c)] && cost(r, c) - u[r] - v[c] < -EPS);
        let Some((er, ec)) = entering else { break };
        if pivots == limit {
            return Err(SolveError::IterationLimit(limit));
        }
        pivots += 1;

        // path cells alternate, starting with a donor next to the entering row
        let path = basis.path(&adj, er, ec);
        let donors = path.iter().enumerate().filter(|(t, _)| t % 2 == 0).map(|(_, &rc)| rc);
        let theta = donors
            .clone()
            .map(|(r, c)| basis.flow[basis.idx(r, c)])
            .fold(f64::INFINITY, f64::min);
        let leaving = donors
            .filter(|&(r, c)| basis.flow[basis.idx(r, c)] == theta)
            .min()
            .expect("cycle has a donor");
        for (t, &(r, c)) in path.iter().enumerate() {
            let i = basis.idx(r, c);
            if t % 2 == 0 {
                basis.flow[i] -= theta;
            } else {
                basis.flow[i] += theta;
            }
        }
        basis.remove(leaving.0, leaving.1);
        basis.insert(er, ec, theta);
    }

    let cost_total = (0..m)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| basis.flow[basis.idx(r, c)] * cost(r, c))
        .sum();
    Ok(Solution {
        rows: m,
        cols: n,
        flow: basis.flow,
        cost: cost_total,
        pivots,
    })
}
