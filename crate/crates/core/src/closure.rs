//! Gradient-closure coefficients and assembly of the closed moment system.
//!
//! A closure supplies the four trailing coefficients
//! `(𝒩_{N-3}, 𝒩_{N-2}, 𝒩_{N-1}, 𝒩_N)` of the gradient relation
//! `∂x m_{N+1} = Σ 𝒩_i ∂x m_i` as functions of the resolved moments. The
//! baseline `PnClosure` sets all of them to zero; the learned closures live
//! in [`crate::nn`]. `hyperbolic_postprocess` maps unconstrained head
//! outputs into the admissible region where the closed system stays
//! symmetrizable hyperbolic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperbolicity::constraints;
use crate::momsolver::MomentField;

/// Relative safety margin added above the `𝒩_{N-1}` lower bound.
///
/// The bound can dwarf the strictly positive `sigma` contribution by many
/// orders of magnitude for extreme head outputs; this keeps the stored
/// coefficient strictly inside the admissible region under f64 evaluation
/// of the bound.
pub const BOUND_CUSHION: f64 = 1e-6;

/// Strictly positive scalar maps used by the constraint layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaFn {
    Softplus,
    Exp,
    SquareEps,
}

impl SigmaFn {
    pub fn eval(self, x: f64) -> f64 {
        let v = match self {
            SigmaFn::Softplus => {
                if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            }
            SigmaFn::Exp => x.exp(),
            SigmaFn::SquareEps => x * x + 1e-6,
        };
        // keep the map strictly positive even where exp underflows
        v.max(1e-300)
    }

    pub fn deriv(self, x: f64) -> f64 {
        match self {
            SigmaFn::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            SigmaFn::Exp => x.exp(),
            SigmaFn::SquareEps => 2.0 * x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaFn::Softplus => "softplus",
            SigmaFn::Exp => "exp",
            SigmaFn::SquareEps => "square_eps",
        }
    }
}

impl std::str::FromStr for SigmaFn {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softplus" => Ok(SigmaFn::Softplus),
            "exp" => Ok(SigmaFn::Exp),
            "square_eps" => Ok(SigmaFn::SquareEps),
            other => Err(format!("unknown sigma function `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("constraint denominator degenerated below 1e-30 (sigma output underflow)")]
    DegenerateConstraint,
}

/// Trailing closure coefficients at one state.
///
/// `values` holds `(𝒩_{N-3}, 𝒩_{N-2}, 𝒩_{N-1}, 𝒩_N)`; slots outside the
/// active `dof` count stay exactly zero so matrix assembly is uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureCoefficients {
    n_order: usize,
    dof: usize,
    values: [f64; 4],
}

impl ClosureCoefficients {
    /// `dof` counts active trailing coefficients: 4 uses all of
    /// `𝒩_{N-3}..𝒩_N`, 3 pins `𝒩_{N-3} = 0`, 2 additionally pins
    /// `𝒩_{N-2} = 0`.
    pub fn new(n_order: usize, dof: usize, mut values: [f64; 4]) -> Self {
        assert!((2..=4).contains(&dof), "dof must be 2, 3 or 4");
        if dof < 4 {
            values[0] = 0.0;
        }
        if dof < 3 {
            values[1] = 0.0;
        }
        let nonzero = values.iter().any(|&v| v != 0.0);
        assert!(
            n_order >= 3 || !nonzero,
            "closures with nonzero coefficients need N >= 3 (got N = {n_order})"
        );
        Self {
            n_order,
            dof,
            values,
        }
    }

    /// The `𝒩 ≡ 0` closure state.
    pub fn pn(n_order: usize) -> Self {
        Self {
            n_order,
            dof: 4,
            values: [0.0; 4],
        }
    }

    #[inline]
    pub fn n_order(&self) -> usize {
        self.n_order
    }

    #[inline]
    pub fn dof(&self) -> usize {
        self.dof
    }

    /// `(𝒩_{N-3}, 𝒩_{N-2}, 𝒩_{N-1}, 𝒩_N)`.
    #[inline]
    pub fn values(&self) -> [f64; 4] {
        self.values
    }

    #[inline]
    pub fn nm3(&self) -> f64 {
        self.values[0]
    }

    #[inline]
    pub fn nm2(&self) -> f64 {
        self.values[1]
    }

    #[inline]
    pub fn nm1(&self) -> f64 {
        self.values[2]
    }

    #[inline]
    pub fn ntop(&self) -> f64 {
        self.values[3]
    }
}

/// Last row `a_0..a_N` of the coefficient matrix:
/// `a_j = (N+1)/(2N+1) 𝒩_j` except `a_{N-1}` which gains the `N/(2N+1)`
/// transport term; columns below `N-3` are exactly zero.
pub fn closure_row(c: &ClosureCoefficients) -> Vec<f64> {
    let n = c.n_order;
    let nf = n as f64;
    let scale = (nf + 1.0) / (2.0 * nf + 1.0);
    let mut row = vec![0.0; n + 1];
    row[n - 1] = nf / (2.0 * nf + 1.0);
    for (j, &v) in c.values.iter().enumerate() {
        if v != 0.0 {
            let col = n + j - 3;
            row[col] += scale * v;
        }
    }
    row
}

/// Dense coefficient matrix of the closed moment system.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    n_order: usize,
    data: Vec<f64>, // (n+1) x (n+1), row-major
}

impl CoefficientMatrix {
    /// The tridiagonal transport pattern with `row` as the last row.
    pub fn with_last_row(n_order: usize, row: &[f64]) -> Self {
        let n = n_order;
        assert_eq!(row.len(), n + 1);
        let size = n + 1;
        let mut data = vec![0.0; size * size];
        for i in 0..n {
            let den = 2.0 * i as f64 + 1.0;
            if i > 0 {
                data[i * size + (i - 1)] = i as f64 / den;
            }
            data[i * size + (i + 1)] = (i as f64 + 1.0) / den;
        }
        data[n * size..].copy_from_slice(row);
        Self { n_order, data }
    }

    /// The classical closure matrix (`𝒩 ≡ 0`); valid for any `n_order >= 1`.
    pub fn pn(n_order: usize) -> Self {
        let nf = n_order as f64;
        let mut row = vec![0.0; n_order + 1];
        row[n_order - 1] = nf / (2.0 * nf + 1.0);
        Self::with_last_row(n_order, &row)
    }

    #[inline]
    pub fn n_order(&self) -> usize {
        self.n_order
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n_order + 1
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let s = self.size();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.size(), self.size(), &self.data)
    }
}

/// Assemble the full coefficient matrix for a closure state.
pub fn assemble_matrix(c: &ClosureCoefficients) -> CoefficientMatrix {
    CoefficientMatrix::with_last_row(c.n_order, &closure_row(c))
}

/// `Σ 𝒩_i ∂x m_i` over the four trailing slots; `gradients` carries
/// `(∂x m_{N-3}, ∂x m_{N-2}, ∂x m_{N-1}, ∂x m_N)`.
pub fn evaluate_closure_gradient(c: &ClosureCoefficients, gradients: [f64; 4]) -> f64 {
    c.values
        .iter()
        .zip(gradients.iter())
        .map(|(&n, &g)| n * g)
        .sum()
}

/// Map raw head outputs `(M_1, M_2, M_3, M_4)` into coefficients that
/// satisfy the hyperbolicity constraints strictly.
///
/// `𝒩_N = M_4`, `𝒩_{N-2} = M_2`, `𝒩_{N-3} = sigma(M_3)` above its floor,
/// and `𝒩_{N-1} = sigma(M_1)` above its state-dependent floor (plus the
/// [`BOUND_CUSHION`] rounding guard).
pub fn hyperbolic_postprocess(
    raw: [f64; 4],
    n_order: usize,
    sigma: SigmaFn,
) -> Result<ClosureCoefficients, PostprocessError> {
    hyperbolic_postprocess_with_dof(raw, n_order, 4, sigma)
}

/// Reduced-ansatz variant: `dof = 3` pins `𝒩_{N-3} = 0` (M_3 unused),
/// `dof = 2` additionally pins `𝒩_{N-2} = 0` (M_2 unused).
pub fn hyperbolic_postprocess_with_dof(
    raw: [f64; 4],
    n_order: usize,
    dof: usize,
    sigma: SigmaFn,
) -> Result<ClosureCoefficients, PostprocessError> {
    assert!(n_order >= 3, "constraint layer needs N >= 3");
    assert!((2..=4).contains(&dof));
    let nm3 = if dof >= 4 {
        sigma.eval(raw[2]) + constraints::nm3_floor(n_order)
    } else {
        0.0
    };
    let nm2 = if dof >= 3 { raw[1] } else { 0.0 };
    let ntop = raw[3];
    let floor = constraints::nm1_floor(nm3, nm2, ntop, n_order)
        .ok_or(PostprocessError::DegenerateConstraint)?;
    let nm1 = sigma.eval(raw[0]) + floor + BOUND_CUSHION * floor.abs();
    Ok(ClosureCoefficients::new(n_order, dof, [nm3, nm2, nm1, ntop]))
}

/// Postprocess plus the 4x4 Jacobian `d𝒩 / dM` (rows in `values` order,
/// columns `M_1..M_4`), for exact backpropagation through the layer.
pub fn hyperbolic_postprocess_with_jacobian(
    raw: [f64; 4],
    n_order: usize,
    dof: usize,
    sigma: SigmaFn,
) -> Result<(ClosureCoefficients, [[f64; 4]; 4]), PostprocessError> {
    let c = hyperbolic_postprocess_with_dof(raw, n_order, dof, sigma)?;
    let [nm3, nm2, _, ntop] = c.values();
    let mut jac = [[0.0; 4]; 4];

    let d_nm3_d_m3 = if dof >= 4 { sigma.deriv(raw[2]) } else { 0.0 };
    if dof >= 4 {
        jac[0][2] = d_nm3_d_m3;
    }
    if dof >= 3 {
        jac[1][1] = 1.0;
    }
    jac[3][3] = 1.0;

    let floor = constraints::nm1_floor(nm3, nm2, ntop, n_order)
        .ok_or(PostprocessError::DegenerateConstraint)?;
    let grad = constraints::nm1_floor_gradient(nm3, nm2, ntop, n_order);
    let cushion = 1.0 + BOUND_CUSHION * floor.signum();
    jac[2][0] = sigma.deriv(raw[0]);
    if dof >= 4 {
        jac[2][2] = cushion * grad[0] * d_nm3_d_m3;
    }
    if dof >= 3 {
        jac[2][1] = cushion * grad[1];
    }
    jac[2][3] = cushion * grad[2];
    Ok((c, jac))
}

/// A closure rule: moments at one node to trailing coefficients.
pub trait Closure: Sync {
    fn n_order(&self) -> usize;

    /// Coefficients at a single state; `moments` has length `n_order + 1`.
    fn coefficients(&self, moments: &[f64]) -> ClosureCoefficients;

    /// Coefficients at every grid node. The default gathers node states one
    /// by one; learned closures override this with a batched forward pass.
    fn coefficients_grid(&self, u: &MomentField, out: &mut Vec<ClosureCoefficients>) {
        let nx = u.grid().nx();
        out.clear();
        out.reserve(nx);
        let mut state = vec![0.0; self.n_order() + 1];
        for i in 0..nx {
            u.node_state(i, &mut state);
            out.push(self.coefficients(&state));
        }
    }

    /// True when the coefficients never depend on the state, so spectrum
    /// scans can be cached across steps.
    fn is_state_independent(&self) -> bool {
        false
    }

    fn label(&self) -> &str;
}

/// The classical closure: every coefficient is zero.
#[derive(Debug, Clone)]
pub struct PnClosure {
    n_order: usize,
}

impl PnClosure {
    pub fn new(n_order: usize) -> Self {
        assert!(n_order >= 1);
        Self { n_order }
    }
}

impl Closure for PnClosure {
    fn n_order(&self) -> usize {
        self.n_order
    }

    fn coefficients(&self, _moments: &[f64]) -> ClosureCoefficients {
        ClosureCoefficients::pn(self.n_order)
    }

    fn coefficients_grid(&self, u: &MomentField, out: &mut Vec<ClosureCoefficients>) {
        out.clear();
        out.resize(u.grid().nx(), ClosureCoefficients::pn(self.n_order));
    }

    fn is_state_independent(&self) -> bool {
        true
    }

    fn label(&self) -> &str {
        "pn"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolicity::{constraint_check_h, constraints};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pn_row_for_n6() {
        let c = ClosureCoefficients::pn(6);
        let row = closure_row(&c);
        assert!((row[5] - 6.0 / 13.0).abs() < 1e-15);
        for j in [0, 1, 2, 3, 4, 6] {
            assert_eq!(row[j], 0.0);
        }
    }

    #[test]
    fn row_with_nm1_and_ntop() {
        let c = ClosureCoefficients::new(6, 4, [0.0, 0.0, -0.5, 0.0]);
        let row = closure_row(&c);
        assert!((row[5] - 2.5 / 13.0).abs() < 1e-15);

        let c = ClosureCoefficients::new(6, 4, [0.0, 0.0, 0.0, 1.0]);
        let row = closure_row(&c);
        assert!((row[6] - 7.0 / 13.0).abs() < 1e-15);
        assert!((row[5] - 6.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn pn_matrices_match_the_moment_equations() {
        let a1 = CoefficientMatrix::pn(1);
        assert_eq!(a1.row(0), &[0.0, 1.0]);
        assert!((a1.entry(1, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a1.entry(1, 1), 0.0);

        let a2 = CoefficientMatrix::pn(2);
        assert_eq!(a2.row(0), &[0.0, 1.0, 0.0]);
        assert!((a2.entry(1, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((a2.entry(1, 2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((a2.entry(2, 1) - 2.0 / 5.0).abs() < 1e-15);
        assert_eq!(a2.entry(2, 0), 0.0);
        assert_eq!(a2.entry(2, 2), 0.0);
    }

    #[test]
    fn assembled_last_row_composes_closure_row() {
        let c = ClosureCoefficients::new(6, 4, [0.0, 0.0, -0.5, 0.0]);
        let a = assemble_matrix(&c);
        let row = a.row(6);
        assert!((row[5] - 2.5 / 13.0).abs() < 1e-15);
        for j in [0usize, 1, 2, 3, 4, 6] {
            assert_eq!(row[j], 0.0);
        }
    }

    #[test]
    fn last_row_sparsity_below_nm3_is_exact() {
        let c = ClosureCoefficients::new(8, 4, [0.3, -0.2, 0.1, 0.7]);
        let a = assemble_matrix(&c);
        for j in 0..8 - 3 {
            assert_eq!(a.entry(8, j), 0.0);
        }
    }

    #[test]
    fn postprocess_at_zero_head_outputs() {
        let c = hyperbolic_postprocess([0.0; 4], 6, SigmaFn::Softplus).unwrap();
        let expected = std::f64::consts::LN_2 - 260.0 / 378.0;
        assert!((c.nm3() - expected).abs() < 1e-12, "nm3 = {}", c.nm3());
        assert_eq!(c.nm2(), 0.0);
        assert_eq!(c.ntop(), 0.0);
        let margins = constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), 6).unwrap();
        assert!(margins.satisfied(), "{margins:?}");
    }

    #[test]
    fn postprocess_reduces_h_when_middle_outputs_vanish() {
        // M2 = M4 = 0 (so nm2 = ntop = 0): the floor must coincide with the
        // pure nm3 form of the constraint numerator.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(3..=8usize);
            let m1: f64 = rng.gen_range(-3.0..3.0);
            let m3: f64 = rng.gen_range(-3.0..3.0);
            let c = hyperbolic_postprocess([m1, 0.0, m3, 0.0], n, SigmaFn::Softplus).unwrap();
            let h_full = constraints::h_value(c.nm3(), 0.0, 0.0, n);
            let nf = n as f64;
            let c1 = (nf - 1.0) * nf * nf * (-2.0 * nf * nf + nf + 3.0).powi(2);
            let c5 = (2.0 * nf + 1.0).powi(2) * (nf - 1.0).powi(3);
            let c6 = 2.0 * (nf - 1.0).powi(2)
                * nf
                * (nf + 1.0)
                * (2.0 * nf - 3.0)
                * (2.0 * nf + 1.0)
                * (nf - 2.0);
            let h_reduced = c.nm3().powi(3) * c1
                + c.nm3() * (nf - 2.0).powi(2) * c5
                + c.nm3() * c.nm3() * c6;
            assert!(
                (h_full - h_reduced).abs() <= 1e-12 * (1.0 + h_full.abs()),
                "n={n}: {h_full} vs {h_reduced}"
            );
            let margins = constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), n).unwrap();
            assert!(margins.satisfied());
        }
    }

    #[test]
    fn postprocess_always_satisfies_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100_000 {
            let n = rng.gen_range(3..=8usize);
            let raw = [
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            ];
            let c = hyperbolic_postprocess(raw, n, SigmaFn::Softplus).unwrap();
            let margins = constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), n).unwrap();
            assert!(
                margins.satisfied(),
                "raw {raw:?}, n = {n}, margins {margins:?}"
            );
        }
    }

    #[test]
    fn reduced_dof_paths_satisfy_their_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let n = rng.gen_range(3..=8usize);
            let raw = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ];
            for dof in [2usize, 3] {
                let c =
                    hyperbolic_postprocess_with_dof(raw, n, dof, SigmaFn::Softplus).unwrap();
                if dof == 2 {
                    assert_eq!(c.nm2(), 0.0);
                }
                assert_eq!(c.nm3(), 0.0);
                let margins =
                    constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), n).unwrap();
                assert!(margins.satisfied());
            }
        }
    }

    #[test]
    fn gradient_evaluation_is_a_dot_product() {
        let c = ClosureCoefficients::new(6, 4, [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(evaluate_closure_gradient(&c, [0.0, 0.0, 0.0, 2.5]), 2.5);
        let c = ClosureCoefficients::new(6, 4, [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            evaluate_closure_gradient(&c, [1.0, 2.0, 3.0, 4.0]),
            10.0
        );
        assert_eq!(evaluate_closure_gradient(&c, [0.0; 4]), 0.0);
    }

    #[test]
    fn sigma_functions_are_strictly_positive() {
        for f in [SigmaFn::Softplus, SigmaFn::Exp, SigmaFn::SquareEps] {
            for x in [-700.0, -30.0, -1.0, 0.0, 1.0, 30.0] {
                assert!(f.eval(x) > 0.0, "{f:?}({x})");
            }
        }
        assert!((SigmaFn::Softplus.eval(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn sigma_derivatives_match_finite_differences() {
        for f in [SigmaFn::Softplus, SigmaFn::Exp, SigmaFn::SquareEps] {
            for x in [-3.0, -0.5, 0.0, 0.7, 2.0] {
                let h = 1e-6;
                let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
                assert!(
                    (f.deriv(x) - fd).abs() < 1e-8 * (1.0 + fd.abs()),
                    "{f:?} at {x}"
                );
            }
        }
    }
}
