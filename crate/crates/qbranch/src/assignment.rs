//! Minimum-cost assignment for small dense square matrices.
//!
//! Shortest-augmenting-path Hungarian method with dual potentials, O(n³).
//! Costs are plain `f64`; the tuple sizes appearing in practice are tiny
//! (Q ≤ 6 in every experiment), so the buffers are reused rather than
//! micro-optimized further.

/// Reusable solver state.
#[derive(Debug, Default, Clone)]
pub struct AssignmentSolver {
    u: Vec<f64>,
    v: Vec<f64>,
    p: Vec<usize>,
    way: Vec<usize>,
    minv: Vec<f64>,
    used: Vec<bool>,
}

impl AssignmentSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Minimum-cost perfect matching of the `n`x`n` row-major matrix `cost`.
    ///
    /// Returns `perm` with row `i` assigned to column `perm[i]`.
    pub fn solve(&mut self, cost: &[f64], n: usize) -> Vec<usize> {
        assert_eq!(cost.len(), n * n, "cost matrix must be square");
        if n == 0 {
            return Vec::new();
        }
        self.u.clear();
        self.u.resize(n + 1, 0.0);
        self.v.clear();
        self.v.resize(n + 1, 0.0);
        self.p.clear();
        self.p.resize(n + 1, 0);
        self.way.clear();
        self.way.resize(n + 1, 0);

        for i in 1..=n {
            self.p[0] = i;
            let mut j0 = 0usize;
            self.minv.clear();
            self.minv.resize(n + 1, f64::INFINITY);
            self.used.clear();
            self.used.resize(n + 1, false);
            loop {
                self.used[j0] = true;
                let i0 = self.p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if !self.used[j] {
                        let cur = cost[(i0 - 1) * n + (j - 1)] - self.u[i0] - self.v[j];
                        if cur < self.minv[j] {
                            self.minv[j] = cur;
                            self.way[j] = j0;
                        }
                        if self.minv[j] < delta {
                            delta = self.minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=n {
                    if self.used[j] {
                        self.u[self.p[j]] += delta;
                        self.v[j] -= delta;
                    } else {
                        self.minv[j] -= delta;
                    }
                }
                j0 = j1;
                if self.p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = self.way[j0];
                self.p[j0] = self.p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }

        let mut perm = vec![0usize; n];
        for j in 1..=n {
            if self.p[j] != 0 {
                perm[self.p[j] - 1] = j - 1;
            }
        }
        perm
    }
}

/// One-shot convenience wrapper around [`AssignmentSolver::solve`].
pub fn solve(cost: &[f64], n: usize) -> Vec<usize> {
    AssignmentSolver::new().solve(cost, n)
}

/// Cost of `perm` on the matrix, accumulated in ascending row order.
///
/// The fixed summation order keeps the value bit-comparable across callers.
pub fn cost_of(cost: &[f64], n: usize, perm: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        s += cost[i * n + j];
    }
    s
}
