//! Discrete-ordinates reference solver for the slab-geometry transfer
//! equation, and the training-data generator built on top of it.
//!
//! Angles are collocated at Gauss–Legendre nodes, transport uses upwinded
//! WENO5 per ordinate, and time stepping is SSP-RK3. The same solver
//! provides the ground truth for the benchmark comparisons and the
//! moment-gradient samples the network trains on.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid1d;
use crate::legendre::{moments_from_kinetic, Quadrature};
use crate::weno::{central6_derivative_periodic, flux_derivative_periodic, Bias};

/// Scattering/absorption profiles; nonnegative everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XsProfile {
    Constant { value: f64 },
    /// `inner` on `x1 <= x < x2`, `outer` elsewhere.
    TwoMaterial {
        x1: f64,
        x2: f64,
        inner: f64,
        outer: f64,
    },
}

impl XsProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            XsProfile::Constant { value } => value,
            XsProfile::TwoMaterial {
                x1,
                x2,
                inner,
                outer,
            } => {
                if x >= x1 && x < x2 {
                    inner
                } else {
                    outer
                }
            }
        }
    }

    fn validate(&self) {
        match *self {
            XsProfile::Constant { value } => assert!(value >= 0.0, "negative cross section"),
            XsProfile::TwoMaterial {
                x1,
                x2,
                inner,
                outer,
            } => {
                assert!(inner >= 0.0 && outer >= 0.0, "negative cross section");
                assert!(0.0 < x1 && x1 < x2 && x2 < 1.0, "need 0 < x1 < x2 < 1");
            }
        }
    }
}

/// Scattering and absorption coefficients as functions of position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSections {
    pub sigma_s: XsProfile,
    pub sigma_a: XsProfile,
}

impl CrossSections {
    pub fn new(sigma_s: XsProfile, sigma_a: XsProfile) -> Self {
        sigma_s.validate();
        sigma_a.validate();
        Self { sigma_s, sigma_a }
    }

    pub fn constant(sigma_s: f64, sigma_a: f64) -> Self {
        Self::new(
            XsProfile::Constant { value: sigma_s },
            XsProfile::Constant { value: sigma_a },
        )
    }

    #[inline]
    pub fn sigma_s_at(&self, x: f64) -> f64 {
        self.sigma_s.eval(x)
    }

    #[inline]
    pub fn sigma_a_at(&self, x: f64) -> f64 {
        self.sigma_a.eval(x)
    }

    /// Largest total cross section over the grid nodes.
    pub fn max_total(&self, grid: &Grid1d) -> f64 {
        (0..grid.nx())
            .map(|i| {
                let x = grid.x(i);
                self.sigma_s_at(x) + self.sigma_a_at(x)
            })
            .fold(0.0, f64::max)
    }
}

/// Specific intensity sampled on grid nodes times quadrature ordinates.
///
/// Storage is ordinate-major: ordinate `q` occupies
/// `data[q*nx .. (q+1)*nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    grid: Grid1d,
    n_ordinates: usize,
    data: Vec<f64>,
    time: f64,
}

impl KineticField {
    pub fn zero(grid: Grid1d, quad: &Quadrature) -> Self {
        let data = vec![0.0; grid.nx() * quad.len()];
        Self {
            grid,
            n_ordinates: quad.len(),
            data,
            time: 0.0,
        }
    }

    /// Sample `f(x, v)` on the grid.
    pub fn from_fn(grid: Grid1d, quad: &Quadrature, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut field = Self::zero(grid, quad);
        let nx = field.grid.nx();
        let dx = field.grid.dx();
        for (q, &v) in quad.nodes().iter().enumerate() {
            let slice = field.ordinate_mut(q);
            for (i, s) in slice.iter_mut().enumerate().take(nx) {
                *s = f(i as f64 * dx, v);
            }
        }
        field
    }

    /// Angle-independent initial data.
    pub fn isotropic(grid: Grid1d, quad: &Quadrature, profile: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, quad, |x, _| profile(x))
    }

    #[inline]
    pub fn grid(&self) -> &Grid1d {
        &self.grid
    }

    #[inline]
    pub fn n_ordinates(&self) -> usize {
        self.n_ordinates
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
    pub fn ordinate(&self, q: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.data[q * nx..(q + 1) * nx]
    }

    #[inline]
    pub fn ordinate_mut(&mut self, q: usize) -> &mut [f64] {
        let nx = self.grid.nx();
        &mut self.data[q * nx..(q + 1) * nx]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |a, &x| a.min(x))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x))
    }
}

#[derive(Debug, Error)]
pub enum KineticError {
    #[error("kinetic solution blew up at t = {time:.6e}")]
    BlowUp { time: f64 },
    #[error("could not draw a nonnegative initial condition after {attempts} attempts")]
    InitialConditionRejected { attempts: usize },
    #[error(transparent)]
    Quadrature(#[from] crate::legendre::QuadratureError),
}

/// Transport + collision tendency per ordinate; writes into `out`.
///
/// `scratch` must have length `nx`; it holds the angular average.
pub fn kinetic_rhs(
    f: &KineticField,
    xs: &CrossSections,
    quad: &Quadrature,
    scratch: &mut [f64],
    out: &mut KineticField,
) {
    let nx = f.grid().nx();
    let dx = f.grid().dx();
    assert_eq!(f.n_ordinates(), quad.len());
    assert_eq!(scratch.len(), nx);

    // angular average 1/2 Σ w f
    scratch.iter_mut().for_each(|s| *s = 0.0);
    for (q, &w) in quad.weights().iter().enumerate() {
        let fq = f.ordinate(q);
        for i in 0..nx {
            scratch[i] += 0.5 * w * fq[i];
        }
    }

    let mut deriv = vec![0.0; nx];
    for (q, &v) in quad.nodes().iter().enumerate() {
        let bias = if v >= 0.0 { Bias::Left } else { Bias::Right };
        flux_derivative_periodic(f.ordinate(q), dx, bias, &mut deriv);
        let fq = f.ordinate(q);
        let out_q = out.ordinate_mut(q);
        for i in 0..nx {
            let x = i as f64 * dx;
            out_q[i] = -v * deriv[i] + xs.sigma_s_at(x) * (scratch[i] - fq[i])
                - xs.sigma_a_at(x) * fq[i];
        }
    }
}

fn stable_dt(grid: &Grid1d, xs: &CrossSections, cfl: f64) -> f64 {
    let dx = grid.dx();
    // |v| <= 1 limits advection; the collision term limits dt once the
    // cross section exceeds 1/dx
    cfl * dx / (dx * xs.max_total(grid)).max(1.0)
}

/// Advance the kinetic equation to exactly `t_end` (last step clipped).
pub fn kinetic_solve(
    f0: &KineticField,
    xs: &CrossSections,
    quad: &Quadrature,
    t_end: f64,
    cfl: f64,
) -> Result<KineticField, KineticError> {
    let snaps = kinetic_solve_snapshots(f0, xs, quad, &[t_end], cfl)?;
    Ok(snaps.into_iter().next().expect("one snapshot requested"))
}

/// Advance the kinetic equation, capturing the state at each requested
/// time (times must be positive and strictly increasing).
pub fn kinetic_solve_snapshots(
    f0: &KineticField,
    xs: &CrossSections,
    quad: &Quadrature,
    times: &[f64],
    cfl: f64,
) -> Result<Vec<KineticField>, KineticError> {
    assert!(!times.is_empty());
    assert!(times[0] > 0.0, "snapshot times must be positive");
    assert!(
        times.windows(2).all(|w| w[0] < w[1]),
        "snapshot times must increase"
    );
    assert!(cfl > 0.0 && cfl <= 1.0);

    let nx = f0.grid().nx();
    let base_dt = stable_dt(f0.grid(), xs, cfl);
    let mut f = f0.clone();
    let mut l = KineticField::zero(f0.grid().clone(), quad);
    let mut f1 = l.clone();
    let mut f2 = l.clone();
    let mut scratch = vec![0.0; nx];

    let mut snapshots = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &target in times {
        while t < target {
            let dt = base_dt.min(target - t);
            let len = f.values().len();

            kinetic_rhs(&f, xs, quad, &mut scratch, &mut l);
            for i in 0..len {
                f1.values_mut()[i] = f.values()[i] + dt * l.values()[i];
            }
            kinetic_rhs(&f1, xs, quad, &mut scratch, &mut l);
            for i in 0..len {
                f2.values_mut()[i] =
                    0.75 * f.values()[i] + 0.25 * (f1.values()[i] + dt * l.values()[i]);
            }
            kinetic_rhs(&f2, xs, quad, &mut scratch, &mut l);
            for i in 0..len {
                f.values_mut()[i] =
                    (f.values()[i] + 2.0 * (f2.values()[i] + dt * l.values()[i])) / 3.0;
            }

            t += dt;
            if !f.is_finite() {
                return Err(KineticError::BlowUp { time: t });
            }
        }
        let mut snap = f.clone();
        snap.set_time(t);
        snapshots.push(snap);
    }
    Ok(snapshots)
}

/// Truncated Fourier profile used for random initial data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierInit {
    pub offset: f64,
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
}

impl FourierInit {
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.offset;
        for (k, (&a, &b)) in self.cos_coeffs.iter().zip(&self.sin_coeffs).enumerate() {
            let arg = 2.0 * std::f64::consts::PI * (k as f64 + 1.0) * x;
            v += a * arg.cos() + b * arg.sin();
        }
        v
    }

    /// Draw coefficients uniformly and redraw until the profile is
    /// nonnegative on the grid.
    pub fn draw_positive(
        rng: &mut impl Rng,
        degree: usize,
        amplitude: f64,
        offset_range: (f64, f64),
        grid: &Grid1d,
    ) -> Result<Self, KineticError> {
        const MAX_ATTEMPTS: usize = 1000;
        for _ in 0..MAX_ATTEMPTS {
            let init = FourierInit {
                offset: rng.gen_range(offset_range.0..=offset_range.1),
                cos_coeffs: (0..degree)
                    .map(|_| rng.gen_range(-amplitude..=amplitude))
                    .collect(),
                sin_coeffs: (0..degree)
                    .map(|_| rng.gen_range(-amplitude..=amplitude))
                    .collect(),
            };
            let min = (0..grid.nx())
                .map(|i| init.eval(grid.x(i)))
                .fold(f64::INFINITY, f64::min);
            if min >= 0.0 {
                return Ok(init);
            }
        }
        Err(KineticError::InitialConditionRejected {
            attempts: MAX_ATTEMPTS,
        })
    }
}

/// Configuration of the training-data run ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingDataConfig {
    pub runs: usize,
    pub n_order: usize,
    pub nx: usize,
    pub quadrature_order: usize,
    pub sample_times: Vec<f64>,
    pub seed: u64,
    /// Scattering coefficient drawn log-uniformly from this range.
    pub sigma_s_range: (f64, f64),
    /// Absorption coefficient drawn uniformly from this list.
    pub sigma_a_choices: Vec<f64>,
    pub fourier_degree: usize,
    pub fourier_amplitude: f64,
    pub offset_range: (f64, f64),
    pub cfl: f64,
}

impl Default for TrainingDataConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            n_order: 6,
            nx: 256,
            quadrature_order: 64,
            sample_times: vec![0.25, 0.5, 0.75, 1.0],
            seed: 0,
            sigma_s_range: (0.5, 100.0),
            sigma_a_choices: vec![0.0, 0.5, 1.0],
            fourier_degree: 4,
            fourier_amplitude: 1.0,
            offset_range: (2.0, 5.0),
            cfl: 0.5,
        }
    }
}

/// Flat per-node training samples.
///
/// Row `r` holds moment inputs `m_0..m_N`, gradient targets
/// `∂x m_0..∂x m_{N+1}`, and the run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_order: usize,
    pub moments: Vec<f64>,
    pub gradients: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub sigma_a: Vec<f64>,
    pub time: Vec<f64>,
}

impl Dataset {
    pub fn empty(n_order: usize) -> Self {
        Self {
            n_order,
            moments: Vec::new(),
            gradients: Vec::new(),
            sigma_s: Vec::new(),
            sigma_a: Vec::new(),
            time: Vec::new(),
        }
    }

    #[inline]
    pub fn n_moment_cols(&self) -> usize {
        self.n_order + 1
    }

    #[inline]
    pub fn n_gradient_cols(&self) -> usize {
        self.n_order + 2
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.sigma_s.len()
    }

    #[inline]
    pub fn moment_row(&self, r: usize) -> &[f64] {
        let w = self.n_moment_cols();
        &self.moments[r * w..(r + 1) * w]
    }

    #[inline]
    pub fn gradient_row(&self, r: usize) -> &[f64] {
        let w = self.n_gradient_cols();
        &self.gradients[r * w..(r + 1) * w]
    }

    fn append(&mut self, other: &Dataset) {
        assert_eq!(self.n_order, other.n_order);
        self.moments.extend_from_slice(&other.moments);
        self.gradients.extend_from_slice(&other.gradients);
        self.sigma_s.extend_from_slice(&other.sigma_s);
        self.sigma_a.extend_from_slice(&other.sigma_a);
        self.time.extend_from_slice(&other.time);
    }
}

/// Sidecar metadata stored next to the dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub rows: usize,
    pub config: TrainingDataConfig,
}

impl Dataset {
    /// Write the dataset as CSV (17-significant-digit cells) plus a
    /// `.meta.json` sidecar recording the seed and configuration.
    pub fn write_csv(&self, path: &std::path::Path, meta: &DatasetMeta) -> std::io::Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.n_order;
        for k in 0..=n {
            write!(w, "{}m_{k}", if k == 0 { "" } else { "," })?;
        }
        for k in 0..=n + 1 {
            write!(w, ",dm_{k}")?;
        }
        writeln!(w, ",sigma_s,sigma_a,t")?;
        for r in 0..self.rows() {
            for (j, v) in self.moment_row(r).iter().enumerate() {
                write!(w, "{}{v:.16e}", if j == 0 { "" } else { "," })?;
            }
            for v in self.gradient_row(r) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(
                w,
                ",{:.16e},{:.16e},{:.16e}",
                self.sigma_s[r], self.sigma_a[r], self.time[r]
            )?;
        }
        w.flush()?;
        let sidecar = path.with_extension("meta.json");
        std::fs::write(
            sidecar,
            serde_json::to_string_pretty(meta).expect("serializable meta"),
        )?;
        Ok(())
    }

    /// Parse a dataset CSV written by [`Dataset::write_csv`].
    pub fn read_csv(path: &std::path::Path) -> std::io::Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let n_moments = header.split(',').filter(|c| c.starts_with("m_")).count();
        assert!(n_moments >= 1, "dataset header carries no moment columns");
        let n = n_moments - 1;
        let mut out = Dataset::empty(n);
        for line in lines.filter(|l| !l.is_empty()) {
            let cells: Vec<f64> = line
                .split(',')
                .map(|c| c.parse::<f64>().expect("numeric cell"))
                .collect();
            assert_eq!(cells.len(), (n + 1) + (n + 2) + 3, "bad row width");
            out.moments.extend_from_slice(&cells[..n + 1]);
            out.gradients.extend_from_slice(&cells[n + 1..2 * n + 3]);
            out.sigma_s.push(cells[2 * n + 3]);
            out.sigma_a.push(cells[2 * n + 4]);
            out.time.push(cells[2 * n + 5]);
        }
        Ok(out)
    }
}

/// Parameters of one ensemble run.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub sigma_s: f64,
    pub sigma_a: f64,
    pub init: FourierInit,
}

/// Draw the parameters of run `run_index` under `config` (deterministic in
/// `(seed, run_index)`).
pub fn draw_run_params(
    config: &TrainingDataConfig,
    run_index: u64,
) -> Result<RunParams, KineticError> {
    let grid = Grid1d::new(config.nx);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run_index + 1);
    let (lo, hi) = config.sigma_s_range;
    let sigma_s = (rng.gen_range(lo.ln()..=hi.ln())).exp();
    let sigma_a = config.sigma_a_choices[rng.gen_range(0..config.sigma_a_choices.len())];
    let init = FourierInit::draw_positive(
        &mut rng,
        config.fourier_degree,
        config.fourier_amplitude,
        config.offset_range,
        &grid,
    )?;
    Ok(RunParams {
        sigma_s,
        sigma_a,
        init,
    })
}

fn run_samples(
    config: &TrainingDataConfig,
    quad: &Quadrature,
    run_index: u64,
) -> Result<Dataset, KineticError> {
    let grid = Grid1d::new(config.nx);
    let params = draw_run_params(config, run_index)?;
    let f0 = KineticField::isotropic(grid.clone(), quad, |x| params.init.eval(x));
    let snapshots = kinetic_solve_snapshots(
        &f0,
        &CrossSections::constant(params.sigma_s, params.sigma_a),
        quad,
        &config.sample_times,
        config.cfl,
    )?;

    let n = config.n_order;
    let nx = config.nx;
    let dx = grid.dx();
    let mut out = Dataset::empty(n);
    let mut grad = vec![0.0; nx];
    for snap in &snapshots {
        // positivity monitor: discard badly negative snapshots
        if snap.min_value() < -1e-8 * snap.max_value().abs() {
            log::warn!(
                "run {run_index}: snapshot at t = {} dropped (negative intensity)",
                snap.time()
            );
            continue;
        }
        let m = moments_from_kinetic(snap, quad, n + 1).expect("matching quadrature");
        let mut gradients = vec![0.0; (n + 2) * nx];
        for k in 0..=n + 1 {
            central6_derivative_periodic(m.component(k), dx, &mut grad);
            gradients[k * nx..(k + 1) * nx].copy_from_slice(&grad);
        }
        for i in 0..nx {
            for k in 0..=n {
                out.moments.push(m.component(k)[i]);
            }
            for k in 0..=n + 1 {
                out.gradients.push(gradients[k * nx + i]);
            }
            out.sigma_s.push(params.sigma_s);
            out.sigma_a.push(params.sigma_a);
            out.time.push(snap.time());
        }
    }
    Ok(out)
}

/// Generate the moment-gradient dataset from an ensemble of kinetic runs.
///
/// Runs are independent and execute in parallel; samples are concatenated
/// in run order, so the output is deterministic in the seed. Runs whose
/// solver blows up are skipped with a warning.
pub fn generate_training_set(config: &TrainingDataConfig) -> Result<Dataset, KineticError> {
    let quad = Quadrature::gauss_legendre(config.quadrature_order)?;
    let results: Vec<Result<Dataset, KineticError>> = (0..config.runs as u64)
        .into_par_iter()
        .map(|run| run_samples(config, &quad, run))
        .collect();

    let mut dataset = Dataset::empty(config.n_order);
    for (run, result) in results.into_iter().enumerate() {
        match result {
            Ok(d) => dataset.append(&d),
            Err(KineticError::BlowUp { time }) => {
                log::warn!("run {run}: solver blew up at t = {time}, skipping");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quad64() -> Quadrature {
        Quadrature::gauss_legendre(64).unwrap()
    }

    #[test]
    fn constant_state_tendencies() {
        let grid = Grid1d::new(32);
        let quad = Quadrature::gauss_legendre(8).unwrap();
        let f = KineticField::isotropic(grid.clone(), &quad, |_| 2.5);
        let mut out = KineticField::zero(grid.clone(), &quad);
        let mut scratch = vec![0.0; 32];

        // free streaming of a constant
        kinetic_rhs(
            &f,
            &CrossSections::constant(0.0, 0.0),
            &quad,
            &mut scratch,
            &mut out,
        );
        assert!(out.values().iter().all(|v| v.abs() < 1e-13));

        // isotropic equilibrium under pure scattering
        kinetic_rhs(
            &f,
            &CrossSections::constant(1.0, 0.0),
            &quad,
            &mut scratch,
            &mut out,
        );
        assert!(out.values().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn advection_tendency_matches_analytic_derivative() {
        let nx = 256;
        let grid = Grid1d::new(nx);
        let quad = Quadrature::gauss_legendre(4).unwrap();
        let f = KineticField::from_fn(grid.clone(), &quad, |x, _| (2.0 * PI * x).sin());
        let mut out = KineticField::zero(grid, &quad);
        let mut scratch = vec![0.0; nx];
        kinetic_rhs(
            &f,
            &CrossSections::constant(0.0, 0.0),
            &quad,
            &mut scratch,
            &mut out,
        );
        for (q, &v) in quad.nodes().iter().enumerate() {
            for i in 0..nx {
                let x = i as f64 / nx as f64;
                let exact = -v * 2.0 * PI * (2.0 * PI * x).cos();
                let got = out.ordinate(q)[i];
                assert!(
                    (got - exact).abs() < 1e-7,
                    "q={q} i={i}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn free_streaming_shifts_each_ordinate() {
        let nx = 256;
        let grid = Grid1d::new(nx);
        let quad = Quadrature::gauss_legendre(4).unwrap();
        let f0 = KineticField::from_fn(grid.clone(), &quad, |x, _| (2.0 * PI * x).sin());
        let f = kinetic_solve(&f0, &CrossSections::constant(0.0, 0.0), &quad, 1.0, 0.5).unwrap();
        for (q, &v) in quad.nodes().iter().enumerate() {
            let mut l2 = 0.0;
            let mut nrm = 0.0;
            for i in 0..nx {
                let x = i as f64 / nx as f64;
                let exact = (2.0 * PI * (x - v)).sin();
                let d = f.ordinate(q)[i] - exact;
                l2 += d * d;
                nrm += exact * exact;
            }
            let rel = (l2 / nrm).sqrt();
            assert!(rel < 1e-4, "ordinate {q}: rel L2 {rel}");
        }
    }

    #[test]
    fn equilibrium_decays_at_the_absorption_rate() {
        let grid = Grid1d::new(32);
        let quad = Quadrature::gauss_legendre(8).unwrap();
        let c = 1.7;
        let f0 = KineticField::isotropic(grid, &quad, |_| c);
        let f = kinetic_solve(&f0, &CrossSections::constant(1.0, 1.0), &quad, 0.75, 0.5).unwrap();
        let expected = c * (-0.75f64).exp();
        for v in f.values() {
            assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
        }
    }

    #[test]
    fn scattering_conserves_mass() {
        let nx = 64;
        let grid = Grid1d::new(nx);
        let quad = quad64();
        let f0 = KineticField::isotropic(grid.clone(), &quad, |x| (2.0 * PI * x).sin() + 2.0);
        let mass = |f: &KineticField| -> f64 {
            let m = moments_from_kinetic(f, &quad, 0).unwrap();
            m.component(0).iter().sum::<f64>() / nx as f64
        };
        let m0 = mass(&f0);
        let f = kinetic_solve(&f0, &CrossSections::constant(5.0, 0.0), &quad, 1.0, 0.5).unwrap();
        let m1 = mass(&f);
        assert!(((m1 - m0) / m0).abs() < 1e-10, "{m0} -> {m1}");
    }

    #[test]
    fn smooth_advection_order_is_at_least_4p5() {
        let quad = Quadrature::gauss_legendre(2).unwrap();
        let err = |nx: usize| -> f64 {
            let grid = Grid1d::new(nx);
            let f0 = KineticField::from_fn(grid, &quad, |x, _| (2.0 * PI * x).sin());
            // scale dt down faster than dx so time error stays below the
            // spatial one
            let cfl = 0.4 * (64.0 / nx as f64).powf(2.0 / 3.0);
            let f = kinetic_solve(&f0, &CrossSections::constant(0.0, 0.0), &quad, 0.5, cfl)
                .unwrap();
            let mut worst = 0.0f64;
            for (q, &v) in quad.nodes().iter().enumerate() {
                let mut l2 = 0.0;
                for i in 0..nx {
                    let x = i as f64 / nx as f64;
                    let exact = (2.0 * PI * (x - 0.5 * v)).sin();
                    let d = f.ordinate(q)[i] - exact;
                    l2 += d * d;
                }
                worst = worst.max((l2 / nx as f64).sqrt());
                let _ = q;
            }
            worst
        };
        let e64 = err(64);
        let e128 = err(128);
        let e256 = err(256);
        let o1 = (e64 / e128).log2();
        let o2 = (e128 / e256).log2();
        assert!(o1 > 4.5 && o2 > 4.5, "orders {o1:.2}, {o2:.2}");
    }

    #[test]
    fn training_set_shape_and_determinism() {
        let config = TrainingDataConfig {
            runs: 2,
            n_order: 6,
            nx: 32,
            quadrature_order: 8,
            sample_times: vec![0.5, 1.0],
            seed: 7,
            ..TrainingDataConfig::default()
        };
        let a = generate_training_set(&config).unwrap();
        assert_eq!(a.rows(), 2 * 2 * 32);
        assert_eq!(a.n_moment_cols(), 7);
        assert_eq!(a.n_gradient_cols(), 8);
        let b = generate_training_set(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_initial_data_has_zero_gradients() {
        let config = TrainingDataConfig {
            runs: 1,
            n_order: 4,
            nx: 32,
            quadrature_order: 8,
            sample_times: vec![0.5],
            seed: 3,
            fourier_amplitude: 0.0,
            ..TrainingDataConfig::default()
        };
        let d = generate_training_set(&config).unwrap();
        assert!(d.rows() > 0);
        for r in 0..d.rows() {
            for &g in d.gradient_row(r) {
                assert!(g.abs() < 1e-11, "gradient {g}");
            }
        }
    }

    #[test]
    fn isotropic_state_is_steady_without_absorption() {
        let grid = Grid1d::new(32);
        let quad = Quadrature::gauss_legendre(8).unwrap();
        let f0 = KineticField::isotropic(grid, &quad, |_| 4.0);
        let f = kinetic_solve(&f0, &CrossSections::constant(3.0, 0.0), &quad, 1.0, 0.5).unwrap();
        for v in f.values() {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_material_profile_evaluates_piecewise() {
        let xs = CrossSections::new(
            XsProfile::TwoMaterial {
                x1: 0.3,
                x2: 0.7,
                inner: 1.0,
                outer: 10.0,
            },
            XsProfile::Constant { value: 0.0 },
        );
        assert_eq!(xs.sigma_s_at(0.5), 1.0);
        assert_eq!(xs.sigma_s_at(0.1), 10.0);
        assert_eq!(xs.sigma_s_at(0.9), 10.0);
        assert_eq!(xs.sigma_a_at(0.5), 0.0);
    }
}
