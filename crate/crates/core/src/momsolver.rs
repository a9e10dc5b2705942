//! WENO5 / Lax–Friedrichs / SSP-RK3 solver for the closed moment system,
//! in the standard and the diffusive scaling.
//!
//! The quasi-linear term splits as `A(U) U_x = ∂x(Ā U) + R(U) U_x` where
//! `Ā` is the constant transport pattern (the `𝒩 ≡ 0` matrix) and `R`
//! carries only the closure row. The conservative part is discretized
//! component-wise with global Lax–Friedrichs flux splitting and upwinded
//! WENO5; the remainder uses the bias-averaged WENO5 derivative. With the
//! classical closure the remainder vanishes and the scheme reduces to
//! plain WENO5/LF on the transport system.

use thiserror::Error;

use crate::closure::{Closure, ClosureCoefficients, CoefficientMatrix};
use crate::grid::Grid1d;
use crate::hyperbolicity::spectral_info;
use crate::kinetic::CrossSections;
use crate::weno::{central_weno_derivative_periodic, flux_derivative_periodic, Bias};

/// Moments `m_0..m_N` on a periodic grid; the solver state.
///
/// Storage is component-major: component `k` occupies the contiguous slice
/// `data[k*nx .. (k+1)*nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField {
    grid: Grid1d,
    n_order: usize,
    data: Vec<f64>,
    time: f64,
}

impl MomentField {
    pub fn zero(grid: Grid1d, n_order: usize) -> Self {
        let data = vec![0.0; (n_order + 1) * grid.nx()];
        Self {
            grid,
            n_order,
            data,
            time: 0.0,
        }
    }

    /// Build from a function of component index and position.
    pub fn from_fn(grid: Grid1d, n_order: usize, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut m = Self::zero(grid, n_order);
        for k in 0..=n_order {
            let nx = m.grid.nx();
            let dx = m.grid.dx();
            let comp = m.component_mut(k);
            for (i, v) in comp.iter_mut().enumerate().take(nx) {
                *v = f(k, i as f64 * dx);
            }
        }
        m
    }

    /// Isotropic state: `m_0` from the profile, higher moments zero.
    pub fn isotropic(grid: Grid1d, n_order: usize, profile: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, n_order, |k, x| if k == 0 { profile(x) } else { 0.0 })
    }

    #[inline]
    pub fn grid(&self) -> &Grid1d {
        &self.grid
    }

    #[inline]
    pub fn n_order(&self) -> usize {
        self.n_order
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    #[inline]
    pub fn component(&self, k: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.data[k * nx..(k + 1) * nx]
    }

    #[inline]
    pub fn component_mut(&mut self, k: usize) -> &mut [f64] {
        let nx = self.grid.nx();
        &mut self.data[k * nx..(k + 1) * nx]
    }

    /// Moments `m_0..m_N` at node `i`, written into `out`.
    #[inline]
    pub fn node_state(&self, i: usize, out: &mut [f64]) {
        let nx = self.grid.nx();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.data[k * nx + i];
        }
    }

    #[inline]
    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Domain integral of `m_0` (node sum times dx).
    pub fn total_mass(&self) -> f64 {
        self.component(0).iter().sum::<f64>() * self.grid.dx()
    }

    /// Sample onto a coarser grid whose nodes this grid contains.
    pub fn restrict_to(&self, coarse_nx: usize) -> Option<MomentField> {
        let stride = self.grid.restriction_stride(coarse_nx)?;
        let mut out = MomentField::zero(Grid1d::new(coarse_nx), self.n_order);
        out.time = self.time;
        for k in 0..=self.n_order {
            let fine = self.component(k);
            let coarse = out.component_mut(k);
            for (j, c) in coarse.iter_mut().enumerate() {
                *c = fine[j * stride];
            }
        }
        Some(out)
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solution blew up at t = {time:.6e}")]
    BlowUp { time: f64 },
    #[error("closure produced a non-finite coefficient at t = {time:.6e}")]
    NonFiniteClosure { time: f64 },
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
}

/// Lax–Friedrichs penalty policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LfPenalty {
    /// Penalty equals the instantaneous maximum wave speed.
    Spectral,
    Fixed(f64),
}

/// Time-step policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `dt = factor * dx / c`, re-evaluating the wave speed every step.
    Cfl(f64),
    /// `dt = fraction * dx` regardless of the spectrum.
    FixedDxFraction(f64),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub lf_penalty: LfPenalty,
    pub step_rule: StepRule,
    /// Spectrum scan cadence (in steps) when the step rule does not already
    /// require one per step.
    pub eig_every: usize,
    pub record_trace: bool,
}

impl SolverOptions {
    /// Constrained learned closure: spectral penalty, `dt = 0.8 dx / c`.
    pub fn hyperbolic_ml() -> Self {
        Self {
            lf_penalty: LfPenalty::Spectral,
            step_rule: StepRule::Cfl(0.8),
            eig_every: 1,
            record_trace: true,
        }
    }

    /// Unconstrained learned closure: extra dissipation (penalty 5) and a
    /// fixed `dt = 0.1 dx`, since its spectrum may leave the real axis.
    pub fn nonhyperbolic_ml() -> Self {
        Self {
            lf_penalty: LfPenalty::Fixed(5.0),
            step_rule: StepRule::FixedDxFraction(0.1),
            eig_every: 10,
            record_trace: true,
        }
    }

    /// Classical closure: same scheme as the hyperbolic one.
    pub fn pn() -> Self {
        Self {
            lf_penalty: LfPenalty::Spectral,
            step_rule: StepRule::Cfl(0.8),
            eig_every: 10,
            record_trace: false,
        }
    }
}

/// One spectrum scan along the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub max_speed: f64,
    pub max_im: f64,
}

#[derive(Debug)]
pub struct AdvanceOutcome {
    pub field: MomentField,
    pub trace: Vec<TracePoint>,
    pub steps: usize,
}

/// Largest spectral radius of the coefficient matrix over the grid, plus
/// the largest imaginary part seen.
pub fn max_wave_speed(u: &MomentField, closure: &dyn Closure) -> (f64, f64) {
    let mut coeffs = Vec::new();
    closure.coefficients_grid(u, &mut coeffs);
    wave_speed_of_coeffs(&coeffs)
}

fn wave_speed_of_coeffs(coeffs: &[ClosureCoefficients]) -> (f64, f64) {
    let mut c = 0.0f64;
    let mut im = 0.0f64;
    let mut last: Option<(ClosureCoefficients, (f64, f64))> = None;
    for co in coeffs {
        // consecutive nodes frequently share coefficients (e.g. constant
        // states); skip the eigensolve when they do
        if let Some((prev, info)) = &last {
            if prev == co {
                c = c.max(info.0);
                im = im.max(info.1);
                continue;
            }
        }
        let a = crate::closure::assemble_matrix(co);
        let info = spectral_info(&a);
        c = c.max(info.0);
        im = im.max(info.1);
        last = Some((*co, info));
    }
    (c, im)
}

struct RhsWork {
    flux: Vec<f64>,
    split: Vec<f64>,
    deriv: Vec<f64>,
    accum: Vec<f64>,
    grads: Vec<Vec<f64>>,
    coeffs: Vec<ClosureCoefficients>,
    stage_coeffs: Vec<ClosureCoefficients>,
}

impl RhsWork {
    fn new(nx: usize) -> Self {
        Self {
            flux: vec![0.0; nx],
            split: vec![0.0; nx],
            deriv: vec![0.0; nx],
            accum: vec![0.0; nx],
            grads: (0..4).map(|_| vec![0.0; nx]).collect(),
            coeffs: Vec::with_capacity(nx),
            stage_coeffs: Vec::with_capacity(nx),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rhs_into(
    u: &MomentField,
    coeffs: &[ClosureCoefficients],
    xs: &CrossSections,
    alpha: f64,
    speed_scale: f64,
    include_source: bool,
    work: &mut RhsWork,
    out: &mut MomentField,
) {
    let n = u.n_order();
    let nx = u.grid().nx();
    let dx = u.grid().dx();

    for k in 0..=n {
        let kf = k as f64;
        let den = 2.0 * kf + 1.0;
        // transport flux of component k under the constant pattern
        {
            let flux = &mut work.flux;
            flux.iter_mut().for_each(|f| *f = 0.0);
            if k > 0 {
                let lower = u.component(k - 1);
                let c = kf / den * speed_scale;
                for i in 0..nx {
                    flux[i] += c * lower[i];
                }
            }
            if k < n {
                let upper = u.component(k + 1);
                let c = (kf + 1.0) / den * speed_scale;
                for i in 0..nx {
                    flux[i] += c * upper[i];
                }
            }
        }
        let mk = u.component(k);
        // f+ sweep
        for i in 0..nx {
            work.split[i] = 0.5 * (work.flux[i] + alpha * mk[i]);
        }
        flux_derivative_periodic(&work.split, dx, Bias::Left, &mut work.deriv);
        work.accum.copy_from_slice(&work.deriv);
        // f- sweep
        for i in 0..nx {
            work.split[i] = 0.5 * (work.flux[i] - alpha * mk[i]);
        }
        flux_derivative_periodic(&work.split, dx, Bias::Right, &mut work.deriv);

        let out_k = out.component_mut(k);
        for i in 0..nx {
            out_k[i] = -(work.accum[i] + work.deriv[i]);
        }
    }

    // closure remainder on the last row
    let has_closure_terms = coeffs.iter().any(|c| c.values() != [0.0; 4]);
    if has_closure_terms {
        assert!(n >= 3, "nonzero closure coefficients need N >= 3");
        for j in 0..4 {
            let comp = u.component(n - 3 + j);
            central_weno_derivative_periodic(comp, dx, &mut work.grads[j]);
        }
        let scale = (n as f64 + 1.0) / (2.0 * n as f64 + 1.0) * speed_scale;
        let out_n = out.component_mut(n);
        for (i, co) in coeffs.iter().enumerate() {
            let v = co.values();
            let s = v[0] * work.grads[0][i]
                + v[1] * work.grads[1][i]
                + v[2] * work.grads[2][i]
                + v[3] * work.grads[3][i];
            out_n[i] -= scale * s;
        }
    }

    if include_source {
        let dxg = u.grid().dx();
        for k in 0..=n {
            let mk = u.component(k);
            let out_k = out.component_mut(k);
            for i in 0..nx {
                let x = i as f64 * dxg;
                let rate = if k == 0 {
                    xs.sigma_a_at(x)
                } else {
                    xs.sigma_s_at(x) + xs.sigma_a_at(x)
                };
                out_k[i] -= rate * mk[i];
            }
        }
    }
}

/// Semi-discrete right-hand side in the standard scaling (sources
/// included), mainly for direct inspection in tests.
pub fn spatial_rhs(
    u: &MomentField,
    closure: &dyn Closure,
    xs: &CrossSections,
    alpha: f64,
) -> MomentField {
    let mut work = RhsWork::new(u.grid().nx());
    closure.coefficients_grid(u, &mut work.coeffs);
    let coeffs = std::mem::take(&mut work.coeffs);
    let mut out = MomentField::zero(u.grid().clone(), u.n_order());
    rhs_into(u, &coeffs, xs, alpha, 1.0, true, &mut work, &mut out);
    out
}

fn check_coeffs_finite(coeffs: &[ClosureCoefficients], t: f64) -> Result<(), SolverError> {
    for c in coeffs {
        if c.values().iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteClosure { time: t });
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn ssp_rk3_step(
    u: &mut MomentField,
    closure: &dyn Closure,
    xs: &CrossSections,
    alpha: f64,
    speed_scale: f64,
    include_source: bool,
    dt: f64,
    coeffs0: &[ClosureCoefficients],
    work: &mut RhsWork,
    l: &mut MomentField,
    u1: &mut MomentField,
    u2: &mut MomentField,
) {
    let len = u.raw().len();

    rhs_into(u, coeffs0, xs, alpha, speed_scale, include_source, work, l);
    for i in 0..len {
        u1.raw_mut()[i] = u.raw()[i] + dt * l.raw()[i];
    }

    closure.coefficients_grid(u1, &mut work.stage_coeffs);
    let stage = std::mem::take(&mut work.stage_coeffs);
    rhs_into(u1, &stage, xs, alpha, speed_scale, include_source, work, l);
    work.stage_coeffs = stage;
    for i in 0..len {
        u2.raw_mut()[i] = 0.75 * u.raw()[i] + 0.25 * (u1.raw()[i] + dt * l.raw()[i]);
    }

    closure.coefficients_grid(u2, &mut work.stage_coeffs);
    let stage = std::mem::take(&mut work.stage_coeffs);
    rhs_into(u2, &stage, xs, alpha, speed_scale, include_source, work, l);
    work.stage_coeffs = stage;
    for i in 0..len {
        u.raw_mut()[i] =
            (u.raw()[i] + 2.0 * (u2.raw()[i] + dt * l.raw()[i])) / 3.0;
    }
}

/// March the moment system to `t_end` in the standard scaling.
pub fn advance(
    u0: &MomentField,
    closure: &dyn Closure,
    xs: &CrossSections,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<AdvanceOutcome, SolverError> {
    advance_scaled(u0, closure, xs, t_end, opts, 1.0, true)
}

/// March the moment system in the diffusive scaling with Knudsen number
/// `eps`: convection runs at speed `1/eps`, and the stiff relaxation is
/// applied exactly in a Strang split around each convection step.
pub fn advance_diffusive(
    u0: &MomentField,
    closure: &dyn Closure,
    xs: &CrossSections,
    eps: f64,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<AdvanceOutcome, SolverError> {
    if eps <= 0.0 {
        return Err(SolverError::InvalidEpsilon(eps));
    }
    advance_scaled(u0, closure, xs, t_end, opts, eps, false)
}

fn advance_scaled(
    u0: &MomentField,
    closure: &dyn Closure,
    xs: &CrossSections,
    t_end: f64,
    opts: &SolverOptions,
    eps: f64,
    standard: bool,
) -> Result<AdvanceOutcome, SolverError> {
    let mut u = u0.clone();
    let nx = u.grid().nx();
    let n = u.n_order();
    let dx = u.grid().dx();
    let blow_up_scale = 1e6 * u.max_abs().max(1.0);
    let speed_scale = 1.0 / eps;

    let mut work = RhsWork::new(nx);
    let mut l = MomentField::zero(u.grid().clone(), n);
    let mut u1 = l.clone();
    let mut u2 = l.clone();

    // decay rates of the exact relaxation half-steps (diffusive scaling)
    let relax_rates: Option<(Vec<f64>, Vec<f64>)> = if standard {
        None
    } else {
        let mut r0 = vec![0.0; nx];
        let mut rk = vec![0.0; nx];
        for i in 0..nx {
            let x = i as f64 * dx;
            r0[i] = xs.sigma_a_at(x);
            rk[i] = xs.sigma_s_at(x) / (eps * eps) + xs.sigma_a_at(x);
        }
        Some((r0, rk))
    };

    let mut trace = Vec::new();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut cached_speed: Option<(f64, f64)> = None;

    while t < t_end {
        closure.coefficients_grid(&u, &mut work.coeffs);
        let coeffs0 = std::mem::take(&mut work.coeffs);
        check_coeffs_finite(&coeffs0, t)?;

        let trace_now = opts.record_trace && steps % opts.eig_every.max(1) == 0;
        let speed_needed = matches!(opts.step_rule, StepRule::Cfl(_))
            || matches!(opts.lf_penalty, LfPenalty::Spectral);
        let must_refresh = cached_speed.is_none()
            || ((speed_needed || trace_now) && !closure.is_state_independent());
        let (c, max_im) = if speed_needed || trace_now {
            if must_refresh {
                let info = wave_speed_of_coeffs(&coeffs0);
                cached_speed = Some(info);
                info
            } else {
                cached_speed.unwrap()
            }
        } else {
            (1.0, 0.0)
        };
        if trace_now {
            trace.push(TracePoint {
                t,
                max_speed: c,
                max_im,
            });
        }

        let alpha = match opts.lf_penalty {
            LfPenalty::Spectral => c * speed_scale,
            LfPenalty::Fixed(a) => a,
        };
        let mut dt = match opts.step_rule {
            StepRule::Cfl(f) => f * eps * dx / c.max(1e-12),
            StepRule::FixedDxFraction(f) => f * dx,
        };
        dt = dt.min(t_end - t);

        if let Some((r0, rk)) = &relax_rates {
            apply_relaxation(&mut u, r0, rk, 0.5 * dt);
        }
        ssp_rk3_step(
            &mut u,
            closure,
            xs,
            alpha,
            speed_scale,
            standard,
            dt,
            &coeffs0,
            &mut work,
            &mut l,
            &mut u1,
            &mut u2,
        );
        if let Some((r0, rk)) = &relax_rates {
            apply_relaxation(&mut u, r0, rk, 0.5 * dt);
        }
        work.coeffs = coeffs0;

        t += dt;
        steps += 1;
        if !u.is_finite() || u.max_abs() > blow_up_scale {
            return Err(SolverError::BlowUp { time: t });
        }
    }
    u.set_time(u0.time() + t_end);

    Ok(AdvanceOutcome {
        field: u,
        trace,
        steps,
    })
}

fn apply_relaxation(u: &mut MomentField, r0: &[f64], rk: &[f64], dt: f64) {
    let n = u.n_order();
    let nx = u.grid().nx();
    for k in 0..=n {
        let rates = if k == 0 { r0 } else { rk };
        let comp = u.component_mut(k);
        for i in 0..nx {
            comp[i] *= (-rates[i] * dt).exp();
        }
    }
}

/// Relative discrete error norms per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub rel_l2: f64,
    pub rel_linf: f64,
}

/// Componentwise relative L2 / Linf distances; a zero-norm reference
/// component falls back to absolute norms.
pub fn error_metrics(u: &MomentField, u_ref: &MomentField) -> Vec<ErrorMetrics> {
    assert_eq!(u.n_order(), u_ref.n_order());
    assert_eq!(u.grid().nx(), u_ref.grid().nx());
    let mut out = Vec::with_capacity(u.n_order() + 1);
    for k in 0..=u.n_order() {
        let a = u.component(k);
        let b = u_ref.component(k);
        let mut diff2 = 0.0;
        let mut ref2 = 0.0;
        let mut dinf = 0.0f64;
        let mut rinf = 0.0f64;
        for i in 0..a.len() {
            let d = a[i] - b[i];
            diff2 += d * d;
            ref2 += b[i] * b[i];
            dinf = dinf.max(d.abs());
            rinf = rinf.max(b[i].abs());
        }
        let l2 = if ref2 > 0.0 {
            (diff2 / ref2).sqrt()
        } else {
            diff2.sqrt()
        };
        let linf = if rinf > 0.0 { dinf / rinf } else { dinf };
        out.push(ErrorMetrics {
            rel_l2: l2,
            rel_linf: linf,
        });
    }
    out
}

/// Assemble the coefficient matrix at one grid node.
pub fn matrix_at_node(
    u: &MomentField,
    closure: &dyn Closure,
    i: usize,
) -> CoefficientMatrix {
    let mut state = vec![0.0; u.n_order() + 1];
    u.node_state(i, &mut state);
    crate::closure::assemble_matrix(&closure.coefficients(&state))
}
