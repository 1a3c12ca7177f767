//! Finite-difference weights on arbitrary node sets (Fornberg's recursion).

/// Number of nodes in each stencil. Seven points give sixth-order accuracy
/// for the first and second derivative on smooth data.
pub const WIDTH: usize = 7;
pub const HALF: usize = WIDTH / 2;

/// Weights `c[k][j]` such that `sum_j c[k][j] * f(x[j])` approximates the
/// k-th derivative of f at `x0`, for k = 0..=m.
pub fn fornberg(x0: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Per-node differentiation weights for orders 1 and 2.
#[derive(Debug, Clone)]
pub struct Stencils {
    pub start: Vec<usize>,
    pub d1: Vec<[f64; WIDTH]>,
    pub d2: Vec<[f64; WIDTH]>,
}

impl Stencils {
    pub fn build(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let mut start = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            let lo = i.saturating_sub(HALF).min(n - WIDTH);
            let w = fornberg(nodes[i], &nodes[lo..lo + WIDTH], 2);
            let mut a = [0.0; WIDTH];
            let mut b = [0.0; WIDTH];
            a.copy_from_slice(&w[1]);
            b.copy_from_slice(&w[2]);
            start.push(lo);
            d1.push(a);
            d2.push(b);
        }
        Stencils { start, d1, d2 }
    }

    /// Weights and first column for derivative `order` at node `i`.
    pub fn row(&self, order: usize, i: usize) -> (usize, &[f64; WIDTH]) {
        match order {
            1 => (self.start[i], &self.d1[i]),
            _ => (self.start[i], &self.d2[i]),
        }
    }

    /// Derivative at node i. The weights of a derivative stencil sum to zero,
    /// so differences v_j − v_i are used: it removes the cancellation between
    /// huge weights and an O(1) offset in v.
    pub fn apply(&self, order: usize, v: &[f64], i: usize) -> f64 {
        let (lo, w) = self.row(order, i);
        let vi = v[i];
        w.iter()
            .zip(&v[lo..lo + WIDTH])
            .map(|(a, b)| a * (b - vi))
            .sum()
    }
}
