use nalgebra::{DMatrix, DVector};

use crate::error::{GeegaError, Result};

/// Gaussian RBF interpolant with an affine tail:
/// `s(p) = sum_i w_i exp(-(|p - p_i| / eps)^2) + c0 + c1 x + c2 y`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfInterpolant {
    pub nodes: Vec<(f64, f64)>,
    pub epsilon: f64,
    pub weights: Vec<f64>,
    pub affine: [f64; 3],
}

fn kernel(r2: f64, eps: f64) -> f64 {
    (-r2 / (eps * eps)).exp()
}

/// Mean distance from each node to its nearest neighbour.
pub fn mean_nearest_neighbor(nodes: &[(f64, f64)]) -> f64 {
    let n = nodes.len();
    let total: f64 = nodes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (a.0 - b.0).hypot(a.1 - b.1))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / n as f64
}

fn singular(message: String) -> GeegaError {
    GeegaError::Numeric(format!("singular interpolation system: {message}"))
}

/// Fits values at `nodes`. The weights satisfy the orthogonality
/// constraints `sum w = sum w x = sum w y = 0`, so planes are reproduced.
pub fn rbf_fit(nodes: &[(f64, f64)], values: &[f64], epsilon: f64) -> Result<RbfInterpolant> {
    let n = nodes.len();
    if values.len() != n {
        return Err(GeegaError::Parameter(format!("{n} nodes but {} values", values.len())));
    }
    if n < 3 {
        return Err(singular(format!("{n} nodes cannot fix an affine tail")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(GeegaError::Parameter(format!("shape parameter {epsilon} is not positive")));
    }
    let scale = nodes.iter().map(|p| p.0.abs().max(p.1.abs())).fold(0.0, f64::max).max(1e-300);
    for i in 0..n {
        for j in i + 1..n {
            if (nodes[i].0 - nodes[j].0).hypot(nodes[i].1 - nodes[j].1) <= 1e-12 * scale {
                return Err(singular(format!("nodes {i} and {j} coincide")));
            }
        }
    }
    let spread = (1..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (ax, ay) = (nodes[i].0 - nodes[0].0, nodes[i].1 - nodes[0].1);
            let (bx, by) = (nodes[j].0 - nodes[0].0, nodes[j].1 - nodes[0].1);
            (ax * by - ay * bx).abs()
        })
        .fold(0.0, f64::max);
    if spread <= 1e-12 * scale * scale {
        return Err(singular("nodes are collinear".into()));
    }
    let m = n + 3;
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (nodes[i].0 - nodes[j].0, nodes[i].1 - nodes[j].1);
            a[(i, j)] = kernel(dx * dx + dy * dy, epsilon);
        }
        let p = [1.0, nodes[i].0, nodes[i].1];
        for (k, v) in p.iter().enumerate() {
            a[(i, n + k)] = *v;
            a[(n + k, i)] = *v;
        }
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs.rows_mut(0, n).copy_from_slice(values);
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| singular("LU factorization failed".into()))?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(singular("non-finite solution".into()));
    }
    Ok(RbfInterpolant {
        nodes: nodes.to_vec(),
        epsilon,
        weights: sol.rows(0, n).iter().copied().collect(),
        affine: [sol[n], sol[n + 1], sol[n + 2]],
    })
}

impl RbfInterpolant {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let radial: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| {
                let (dx, dy) = (x - p.0, y - p.1);
                w * kernel(dx * dx + dy * dy, self.epsilon)
            })
            .sum();
        radial + self.affine[0] + self.affine[1] * x + self.affine[2] * y
    }
}
