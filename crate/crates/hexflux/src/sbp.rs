//! Diagonal-norm summation-by-parts operators on Legendre-Gauss-Lobatto nodes.
//!
//! A degree-`p` operator lives on `n = p + 1` LGL nodes of `[-1, 1]` and
//! consists of the quadrature weights `P` (diagonal norm), the differentiation
//! matrix `D = P^{-1} Q`, and the boundary matrix `E = diag(-1, 0, .., 0, 1)`.
//! The defining properties, enforced by tests up to `p = 13`:
//!
//! * `D x^k = k x^{k-1}` exactly for `k <= p` (degree exactness),
//! * `Q + Q^T = E` (summation by parts),
//! * `P` integrates polynomials of degree `<= 2p - 1` exactly.
//!
//! Nodes are found by Newton iteration from Chebyshev-Gauss-Lobatto initial
//! guesses to a residual below 1e-15; `D` is assembled from barycentric
//! weights, which is the numerically stable route at these orders.

use nalgebra::DMatrix;

/// Convergence tolerance for the Newton node solves.
const NODE_TOL: f64 = 1e-15;

/// One-dimensional diagonal-norm SBP operator (LGL collocation).
#[derive(Debug, Clone)]
pub struct Operator1d {
    /// Polynomial degree `p`.
    pub degree: usize,
    /// Node count `n = p + 1`.
    pub n: usize,
    /// LGL nodes on `[-1, 1]`, ascending.
    pub nodes: Vec<f64>,
    /// LGL quadrature weights (the diagonal of `P`).
    pub weights: Vec<f64>,
    /// Barycentric weights of the node set (for interpolation elsewhere).
    pub bary: Vec<f64>,
    /// Differentiation matrix `D`, row-major `n x n`.
    pub d: DMatrix<f64>,
    /// `Q = P D`.
    pub q: DMatrix<f64>,
}

/// Legendre polynomial value and first derivative at `x` (recurrence).
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut pm, mut p) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let pn = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * pm) / kf;
        pm = p;
        p = pn;
    }
    // (1 - x^2) P_n' = n (P_{n-1} - x P_n)
    let dp = if (1.0 - x * x).abs() > 1e-300 {
        n as f64 * (pm - x * p) / (1.0 - x * x)
    } else {
        // At the endpoints P_n'(+-1) = (+-1)^{n-1} n(n+1)/2.
        let sign = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 - 1) };
        sign * (n * (n + 1)) as f64 / 2.0
    };
    (p, dp)
}

/// LGL nodes and weights for `n >= 2` points.
///
/// Interior nodes are the roots of `P'_{n-1}`; weights are
/// `2 / (n (n-1) P_{n-1}(x_i)^2)`.
pub fn lgl_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "LGL rule needs at least 2 nodes");
    let m = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[m] = 1.0;
    for i in 1..m {
        // Chebyshev-Gauss-Lobatto initial guess, then Newton on P'_{n-1}.
        let mut x = -(std::f64::consts::PI * i as f64 / m as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, x);
            // P''_{m} from the Legendre ODE: (1-x^2) P'' = 2x P' - m(m+1) P.
            let d2p = (2.0 * x * dp - (m * (m + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / d2p;
            x -= dx;
            if dx.abs() < NODE_TOL {
                break;
            }
        }
        nodes[i] = x;
    }
    // Enforce exact symmetry (the rule is symmetric about 0).
    for i in 0..n / 2 {
        let s = 0.5 * (nodes[i] - nodes[m - i]);
        nodes[i] = s;
        nodes[m - i] = -s;
    }
    let scale = 2.0 / (n * m) as f64;
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre(m, x);
            scale / (p * p)
        })
        .collect();
    (nodes, weights)
}

/// Gauss-Legendre nodes and weights for `n >= 1` points (degree `2n - 1`).
///
/// Used only for the exact integrals behind the interpolation operators.
pub fn gauss_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Standard Chebyshev initial guess.
        let mut x = -((std::f64::consts::PI * (i as f64 + 0.75)) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < NODE_TOL {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Barycentric weights for an arbitrary node set.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i] /= nodes[i] - nodes[j];
            }
        }
    }
    w
}

/// Values of all Lagrange basis polynomials of `nodes` at `x`.
pub fn lagrange_at(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    // Exact-node hit: the basis is a Kronecker delta.
    for i in 0..n {
        if x == nodes[i] {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            return v;
        }
    }
    let mut v = vec![0.0; n];
    let mut denom = 0.0;
    for i in 0..n {
        let t = bary[i] / (x - nodes[i]);
        v[i] = t;
        denom += t;
    }
    for vi in v.iter_mut() {
        *vi /= denom;
    }
    v
}

/// Derivatives of all Lagrange basis polynomials of `nodes` at `x`.
///
/// Evaluated by differentiating the first-form barycentric interpolant; exact
/// node hits reduce to rows of the differentiation matrix.
pub fn lagrange_deriv_at(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    for i in 0..n {
        if x == nodes[i] {
            // Row i of the differentiation matrix, transposed into basis form:
            // l_j'(x_i) = (b_j / b_i) / (x_i - x_j), l_i'(x_i) = -sum.
            let mut v = vec![0.0; n];
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    let t = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    v[j] = t;
                    s += t;
                }
            }
            v[i] = -s;
            return v;
        }
    }
    // Generic point: l_j(x) = (b_j/(x-x_j)) / S with S = sum_k b_k/(x-x_k).
    let mut t = vec![0.0; n];
    let (mut s, mut sp) = (0.0, 0.0);
    for i in 0..n {
        t[i] = bary[i] / (x - nodes[i]);
        s += t[i];
        sp += -t[i] / (x - nodes[i]);
    }
    let mut v = vec![0.0; n];
    for i in 0..n {
        let tp = -t[i] / (x - nodes[i]);
        v[i] = (tp * s - t[i] * sp) / (s * s);
    }
    v
}

impl Operator1d {
    /// Build the degree-`p` operator (`p >= 1`).
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "SBP operator needs degree >= 1");
        let n = degree + 1;
        let (nodes, weights) = lgl_nodes(n);
        let bary = barycentric_weights(&nodes);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[(i, j)] = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                }
            }
            // Negative row sum keeps D 1 = 0 exact.
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
            d[(i, i)] = -s;
        }
        let mut q = d.clone();
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] *= weights[i];
            }
        }
        Self {
            degree,
            n,
            nodes,
            weights,
            bary,
            d,
            q,
        }
    }

    /// Boundary matrix diagonal `E = diag(-1, 0, ..., 0, 1)` entry at `i`.
    pub fn e(&self, i: usize) -> f64 {
        if i == 0 {
            -1.0
        } else if i == self.n - 1 {
            1.0
        } else {
            0.0
        }
    }

    /// Max-norm SBP residual `|Q + Q^T - E|`: should be at rounding level.
    pub fn sbp_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let e = if i == j { self.e(i) } else { 0.0 };
                r = r.max((self.q[(i, j)] + self.q[(j, i)] - e).abs());
            }
        }
        r
    }

    /// Max error of `D x^k - k x^{k-1}` over nodes for all `k <= degree`.
    pub fn exactness_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=self.degree {
            for i in 0..self.n {
                let mut acc = 0.0;
                for j in 0..self.n {
                    acc += self.d[(i, j)] * self.nodes[j].powi(k as i32);
                }
                let exact = if k == 0 {
                    0.0
                } else {
                    k as f64 * self.nodes[i].powi(k as i32 - 1)
                };
                worst = worst.max((acc - exact).abs());
            }
        }
        worst
    }
}

/// Cache of 1D operators keyed by degree.
#[derive(Debug, Default, Clone)]
pub struct OperatorSet {
    ops: std::collections::BTreeMap<usize, std::sync::Arc<Operator1d>>,
}

impl OperatorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, degree: usize) -> std::sync::Arc<Operator1d> {
        self.ops
            .entry(degree)
            .or_insert_with(|| std::sync::Arc::new(Operator1d::new(degree)))
            .clone()
    }
}
