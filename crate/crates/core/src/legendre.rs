//! Legendre polynomials, Gauss–Legendre quadrature, and the transform from
//! kinetic intensities to Legendre moments.
//!
//! Conventions: the angular variable lives on [-1, 1] with the plain
//! Lebesgue measure, the angular average is `1/2 ∫ · dv`, and the moments
//! are `m_k = 1/2 ∫ f P_k dv`, so orthogonality reads
//! `1/2 ∫ P_i P_j dv = δ_ij / (2i + 1)`.

use thiserror::Error;

use crate::kinetic::KineticField;
use crate::momsolver::MomentField;

/// Default quadrature order used across the crate. Degree-127 exactness
/// leaves a wide margin for closures up to N ≈ 10.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
    #[error("Newton iteration for Gauss-Legendre nodes of order {order} did not converge")]
    NewtonDivergence { order: usize },
}

#[derive(Debug, Error)]
#[error("kinetic field carries {found} ordinates, quadrature has {expected}")]
pub struct OrdinateMismatch {
    pub expected: usize,
    pub found: usize,
}

/// Evaluate `P_k(x)` by the three-term recurrence
/// `(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}`.
pub fn legendre_eval(k: usize, x: f64) -> f64 {
    legendre_eval_with_derivative(k, x).0
}

/// Evaluate `P_k(x)` and `P_k'(x)` in one recurrence sweep.
pub fn legendre_eval_with_derivative(k: usize, x: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0; // P_0
    let mut p = x; // P_1
    let mut d_prev = 0.0;
    let mut d = 1.0;
    for j in 1..k {
        let jf = j as f64;
        let p_next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
        let d_next = ((2.0 * jf + 1.0) * (p + x * d) - jf * d_prev) / (jf + 1.0);
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Gauss–Legendre nodes and weights on (-1, 1).
#[derive(Debug, Clone)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// Nodes are the roots of `P_q`, found by Newton iteration from
    /// Chebyshev initial guesses; weights are `2 / ((1 - v²) P_q'(v)²)`.
    pub fn gauss_legendre(q: usize) -> Result<Self, QuadratureError> {
        if q == 0 {
            return Err(QuadratureError::ZeroOrder);
        }
        let mut nodes = Vec::with_capacity(q);
        let mut weights = Vec::with_capacity(q);
        for i in 0..q {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
            let mut converged = false;
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_eval_with_derivative(q, x);
                let step = p / d;
                x -= step;
                dp = d;
                if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                    // one polishing step after convergence
                    let (p2, d2) = legendre_eval_with_derivative(q, x);
                    x -= p2 / d2;
                    dp = d2;
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(QuadratureError::NewtonDivergence { order: q });
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        // The Chebyshev guesses enumerate roots in descending order.
        nodes.reverse();
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Angular average `1/2 Σ w_q g(v_q)`.
    pub fn average<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        0.5 * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * g(v))
            .sum::<f64>()
    }
}

/// Table `P[k][q] = P_k(v_q)` for `k = 0..=n_max`.
pub fn legendre_table(n_max: usize, nodes: &[f64]) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; nodes.len()]; n_max + 1];
    for (q, &v) in nodes.iter().enumerate() {
        table[0][q] = 1.0;
        if n_max >= 1 {
            table[1][q] = v;
        }
        for k in 1..n_max {
            let kf = k as f64;
            table[k + 1][q] =
                ((2.0 * kf + 1.0) * v * table[k][q] - kf * table[k - 1][q]) / (kf + 1.0);
        }
    }
    table
}

/// Moments `m_k(x_i) = 1/2 Σ_q w_q f(x_i, v_q) P_k(v_q)` for `k = 0..=n_order`.
pub fn moments_from_kinetic(
    f: &KineticField,
    quad: &Quadrature,
    n_order: usize,
) -> Result<MomentField, OrdinateMismatch> {
    if f.n_ordinates() != quad.len() {
        return Err(OrdinateMismatch {
            expected: quad.len(),
            found: f.n_ordinates(),
        });
    }
    let table = legendre_table(n_order, quad.nodes());
    let nx = f.grid().nx();
    let mut m = MomentField::zero(f.grid().clone(), n_order);
    m.set_time(f.time());
    for k in 0..=n_order {
        let pk = &table[k];
        let mk = m.component_mut(k);
        for (q, &w) in quad.weights().iter().enumerate() {
            let coeff = 0.5 * w * pk[q];
            let fq = f.ordinate(q);
            for i in 0..nx {
                mk[i] += coeff * fq[i];
            }
        }
    }
    Ok(m)
}
