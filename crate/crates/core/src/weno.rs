//! Fifth-order finite difference WENO reconstruction on periodic grids.
//!
//! Classic Jiang–Shu weights with epsilon 1e-6. `flux_derivative_periodic`
//! returns the conservative difference of upwinded interface values,
//! `(h_{i+1/2} - h_{i-1/2}) / dx`; summed over a period it telescopes to
//! zero exactly, which is what the moment and kinetic solvers rely on for
//! conservation.

/// Regularisation constant in the nonlinear weights.
pub const WENO_EPS: f64 = 1e-6;

/// Stencil bias of the interface reconstruction. `Left` upwinds positive
/// characteristic speeds, `Right` negative ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bias {
    Left,
    Right,
}

/// Left-biased WENO5 value at the interface between `f0` and `fp1`.
#[inline]
fn reconstruct_left(fm2: f64, fm1: f64, f0: f64, fp1: f64, fp2: f64) -> f64 {
    let q0 = (2.0 * fm2 - 7.0 * fm1 + 11.0 * f0) / 6.0;
    let q1 = (-fm1 + 5.0 * f0 + 2.0 * fp1) / 6.0;
    let q2 = (2.0 * f0 + 5.0 * fp1 - fp2) / 6.0;

    let d0 = fm2 - 2.0 * fm1 + f0;
    let d1 = fm1 - 2.0 * f0 + fp1;
    let d2 = f0 - 2.0 * fp1 + fp2;
    let b0 = 13.0 / 12.0 * d0 * d0 + 0.25 * (fm2 - 4.0 * fm1 + 3.0 * f0).powi(2);
    let b1 = 13.0 / 12.0 * d1 * d1 + 0.25 * (fm1 - fp1).powi(2);
    let b2 = 13.0 / 12.0 * d2 * d2 + 0.25 * (3.0 * f0 - 4.0 * fp1 + fp2).powi(2);

    let a0 = 0.1 / ((WENO_EPS + b0) * (WENO_EPS + b0));
    let a1 = 0.6 / ((WENO_EPS + b1) * (WENO_EPS + b1));
    let a2 = 0.3 / ((WENO_EPS + b2) * (WENO_EPS + b2));
    let s = a0 + a1 + a2;

    (a0 * q0 + a1 * q1 + a2 * q2) / s
}

/// Fill `padded` (length n + 6) with `g` plus three periodic ghost nodes on
/// each side, so `padded[i + 3]` is node `i`.
fn pad_periodic(g: &[f64], padded: &mut Vec<f64>) {
    let n = g.len();
    padded.clear();
    padded.reserve(n + 6);
    padded.extend_from_slice(&g[n - 3..]);
    padded.extend_from_slice(g);
    padded.extend_from_slice(&g[..3]);
}

/// Upwinded conservative derivative of `g` at every node.
///
/// With `Bias::Left` the interface value `h_{i+1/2}` is reconstructed from
/// nodes `i-2..=i+2`; with `Bias::Right` from `i-1..=i+3` (the mirror
/// stencil). `out` receives `(h_{i+1/2} - h_{i-1/2}) / dx`.
pub fn flux_derivative_periodic(g: &[f64], dx: f64, bias: Bias, out: &mut [f64]) {
    let n = g.len();
    assert_eq!(out.len(), n);
    assert!(n >= 6, "need at least 6 nodes for WENO5");

    let mut padded = Vec::new();
    pad_periodic(g, &mut padded);
    let p = &padded[..];

    // Interface values h[i] = reconstruction at x_{i+1/2}, i = -1..n-1;
    // stored shifted by one so h[0] is x_{-1/2}.
    let mut h = vec![0.0; n + 1];
    for (k, hk) in h.iter_mut().enumerate() {
        // interface index i = k - 1, padded node of i is k + 2
        let c = k + 2;
        *hk = match bias {
            Bias::Left => reconstruct_left(p[c - 2], p[c - 1], p[c], p[c + 1], p[c + 2]),
            Bias::Right => reconstruct_left(p[c + 3], p[c + 2], p[c + 1], p[c], p[c - 1]),
        };
    }
    let inv_dx = 1.0 / dx;
    for i in 0..n {
        out[i] = (h[i + 1] - h[i]) * inv_dx;
    }
}

/// Mean of the two one-sided WENO5 derivatives.
///
/// Used for non-conservative products, where neither upwind direction is
/// preferred; on smooth data this stays fifth-order accurate.
pub fn central_weno_derivative_periodic(g: &[f64], dx: f64, out: &mut [f64]) {
    let n = g.len();
    let mut left = vec![0.0; n];
    flux_derivative_periodic(g, dx, Bias::Left, &mut left);
    flux_derivative_periodic(g, dx, Bias::Right, out);
    for i in 0..n {
        out[i] = 0.5 * (out[i] + left[i]);
    }
}

/// Sixth-order central first derivative on the periodic grid.
pub fn central6_derivative_periodic(g: &[f64], dx: f64, out: &mut [f64]) {
    let n = g.len();
    assert_eq!(out.len(), n);
    assert!(n >= 7);
    let c = 1.0 / (60.0 * dx);
    for i in 0..n {
        let im3 = g[(i + n - 3) % n];
        let im2 = g[(i + n - 2) % n];
        let im1 = g[(i + n - 1) % n];
        let ip1 = g[(i + 1) % n];
        let ip2 = g[(i + 2) % n];
        let ip3 = g[(i + 3) % n];
        out[i] = c * (-im3 + 9.0 * im2 - 45.0 * im1 + 45.0 * ip1 - 9.0 * ip2 + ip3);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let g = vec![3.25; 32];
        let mut out = vec![0.0; 32];
        for bias in [Bias::Left, Bias::Right] {
            flux_derivative_periodic(&g, 1.0 / 32.0, bias, &mut out);
            for &d in &out {
                assert!(d.abs() < 1e-13, "derivative of constant: {d}");
            }
        }
    }

    #[test]
    fn derivative_telescopes_over_period() {
        let n = 64;
        let g: Vec<f64> = grid(n)
            .iter()
            .map(|&x| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos())
            .collect();
        let mut out = vec![0.0; n];
        for bias in [Bias::Left, Bias::Right] {
            flux_derivative_periodic(&g, 1.0 / n as f64, bias, &mut out);
            let sum: f64 = out.iter().sum();
            assert!(sum.abs() < 1e-11, "non-telescoping sum {sum}");
        }
    }

    #[test]
    fn smooth_convergence_is_about_fifth_order() {
        let err = |n: usize| -> f64 {
            let xs = grid(n);
            let g: Vec<f64> = xs.iter().map(|&x| (2.0 * PI * x).sin()).collect();
            let mut out = vec![0.0; n];
            flux_derivative_periodic(&g, 1.0 / n as f64, Bias::Left, &mut out);
            let mut l2 = 0.0;
            let mut nrm = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let exact = 2.0 * PI * (2.0 * PI * x).cos();
                l2 += (out[i] - exact) * (out[i] - exact);
                nrm += exact * exact;
            }
            (l2 / nrm).sqrt()
        };
        let e64 = err(64);
        let e128 = err(128);
        let e256 = err(256);
        let order1 = (e64 / e128).log2();
        let order2 = (e128 / e256).log2();
        assert!(
            order1 > 4.5 && order2 > 4.5,
            "observed orders {order1:.2}, {order2:.2}"
        );
    }

    #[test]
    fn central6_is_exact_on_low_degree_trig() {
        let n = 64;
        let xs = grid(n);
        let g: Vec<f64> = xs.iter().map(|&x| (2.0 * PI * x).sin()).collect();
        let mut out = vec![0.0; n];
        central6_derivative_periodic(&g, 1.0 / n as f64, &mut out);
        for (i, &x) in xs.iter().enumerate() {
            let exact = 2.0 * PI * (2.0 * PI * x).cos();
            assert!((out[i] - exact).abs() < 2e-8, "node {i}");
        }
    }
}
