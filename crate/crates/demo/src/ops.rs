//! Pure-Rust backend of the browser demo. Everything here is plain data
//! in, plain data out, so the host test suite exercises the same code the
//! wasm bindings expose.

use serde::{Deserialize, Serialize};

use momclose::closure::{
    assemble_matrix, hyperbolic_postprocess, Closure, ClosureCoefficients, PnClosure, SigmaFn,
};
use momclose::diffusion::{density_rel_l2, diffusion_solve, DiffusionField};
use momclose::grid::Grid1d;
use momclose::hyperbolicity::{
    constraint_check_h, eigenvalues, symmetrizer_for_coefficients, Verdict,
};
use momclose::kinetic::CrossSections;
use momclose::momsolver::{advance, advance_diffusive, MomentField, SolverOptions};
use momclose::nn::{HyperbolicMlClosure, MlpModel};

/// Verdict, margins, spectrum, and symmetrizer block for one coefficient
/// set.
#[derive(Debug, Serialize)]
pub struct HyperbolicityReport {
    pub verdict: String,
    pub margin_first: f64,
    pub margin_second: f64,
    pub eigenvalues_re: Vec<f64>,
    pub eigenvalues_im: Vec<f64>,
    pub max_im: f64,
    pub b_block: Vec<f64>,
    pub spd_certificate: f64,
    pub symmetry_residual: f64,
}

pub fn check_coefficients(n_order: usize, values: [f64; 4]) -> HyperbolicityReport {
    let c = ClosureCoefficients::new(n_order, 4, values);
    let margins = constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), n_order);
    let sym = symmetrizer_for_coefficients(&c);
    let eigs = eigenvalues(&assemble_matrix(&c));
    let max_im = eigs.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let verdict = match &sym {
        Ok(s) if s.verdict == Verdict::Hyperbolic => "hyperbolic",
        Ok(_) => "not hyperbolic",
        Err(_) => "boundary",
    };
    let (b_block, spd_certificate, symmetry_residual) = match &sym {
        Ok(s) => (s.b_block.clone(), s.spd_certificate, s.symmetry_residual),
        Err(_) => (Vec::new(), f64::NAN, f64::NAN),
    };
    let (margin_first, margin_second) = match margins {
        Ok(m) => (m.first, m.second),
        Err(_) => (f64::NAN, f64::NAN),
    };
    HyperbolicityReport {
        verdict: verdict.to_string(),
        margin_first,
        margin_second,
        eigenvalues_re: eigs.iter().map(|z| z.re).collect(),
        eigenvalues_im: eigs.iter().map(|z| z.im).collect(),
        max_im,
        b_block,
        spd_certificate,
        symmetry_residual,
    }
}

/// Admissible-region scan over the `(𝒩_{N-2}, 𝒩_{N-1})` plane at fixed
/// `𝒩_{N-3}` and `𝒩_N`: cell value 1 marks constraint satisfaction.
#[derive(Debug, Serialize)]
pub struct RegionScan {
    pub res: usize,
    pub nm2_axis: Vec<f64>,
    pub nm1_axis: Vec<f64>,
    pub admissible: Vec<u8>,
}

#[allow(clippy::too_many_arguments)]
pub fn region_scan(
    n_order: usize,
    nm3: f64,
    ntop: f64,
    nm2_min: f64,
    nm2_max: f64,
    nm1_min: f64,
    nm1_max: f64,
    res: usize,
) -> RegionScan {
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (res - 1).max(1) as f64;
    let nm2_axis: Vec<f64> = (0..res).map(|i| lin(nm2_min, nm2_max, i)).collect();
    let nm1_axis: Vec<f64> = (0..res).map(|i| lin(nm1_min, nm1_max, i)).collect();
    let mut admissible = vec![0u8; res * res];
    for (j, &nm1) in nm1_axis.iter().enumerate() {
        for (i, &nm2) in nm2_axis.iter().enumerate() {
            let ok = constraint_check_h(nm3, nm2, nm1, ntop, n_order)
                .map(|m| m.satisfied())
                .unwrap_or(false);
            admissible[j * res + i] = ok as u8;
        }
    }
    RegionScan {
        res,
        nm2_axis,
        nm1_axis,
        admissible,
    }
}

/// Demonstrate the constraint layer: raw head outputs to admissible
/// coefficients.
#[derive(Debug, Serialize)]
pub struct PostprocessDemo {
    pub coefficients: [f64; 4],
    pub report: HyperbolicityReport,
}

pub fn postprocess_demo(n_order: usize, raw: [f64; 4]) -> Result<PostprocessDemo, String> {
    let c = hyperbolic_postprocess(raw, n_order, SigmaFn::Softplus).map_err(|e| e.to_string())?;
    Ok(PostprocessDemo {
        coefficients: c.values(),
        report: check_coefficients(n_order, c.values()),
    })
}

/// Initial profiles selectable in the page.
#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DemoInit {
    Gaussian,
    SinePlateau,
}

impl DemoInit {
    fn eval(self, x: f64) -> f64 {
        match self {
            DemoInit::Gaussian => {
                0.5 / (2.0 * std::f64::consts::PI * 0.01).sqrt()
                    * (-(x - 0.5) * (x - 0.5) / 0.02).exp()
                    + 2.5
            }
            DemoInit::SinePlateau => (2.0 * std::f64::consts::PI * x).sin() + 2.0,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct SimRequest {
    pub n_order: usize,
    pub nx: usize,
    pub sigma_s: f64,
    pub sigma_a: f64,
    pub t_end: f64,
    pub frames: usize,
    pub init: DemoInit,
    /// Optional model JSON; when present the constrained learned closure
    /// runs instead of the classical one.
    #[serde(default)]
    pub model_json: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SimFrames {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub m0: Vec<Vec<f64>>,
    pub m1: Vec<Vec<f64>>,
    pub max_speed: f64,
    pub max_im: f64,
    pub closure: String,
}

pub fn simulate(req: &SimRequest) -> Result<SimFrames, String> {
    if req.nx < 8 || req.nx > 512 {
        return Err("nx must be between 8 and 512".into());
    }
    if req.frames == 0 || req.frames > 200 {
        return Err("frames must be between 1 and 200".into());
    }
    let grid = Grid1d::new(req.nx);
    let closure: Box<dyn Closure> = match &req.model_json {
        Some(json) => {
            let model: MlpModel =
                serde_json::from_str(json).map_err(|e| format!("bad model JSON: {e}"))?;
            if model.n_order != req.n_order {
                return Err(format!(
                    "model order {} does not match requested order {}",
                    model.n_order, req.n_order
                ));
            }
            Box::new(HyperbolicMlClosure::new(model))
        }
        None => Box::new(PnClosure::new(req.n_order)),
    };
    let opts = if req.model_json.is_some() {
        SolverOptions::hyperbolic_ml()
    } else {
        SolverOptions {
            record_trace: true,
            ..SolverOptions::pn()
        }
    };
    let xs = CrossSections::constant(req.sigma_s, req.sigma_a);
    let mut u = MomentField::isotropic(grid.clone(), req.n_order, |x| req.init.eval(x));

    let mut frames_m0 = vec![u.component(0).to_vec()];
    let mut frames_m1 = vec![u.component(1).to_vec()];
    let mut times = vec![0.0];
    let dt_frame = req.t_end / req.frames as f64;
    let mut max_speed = 0.0f64;
    let mut max_im = 0.0f64;
    for f in 1..=req.frames {
        let out = advance(&u, closure.as_ref(), &xs, dt_frame, &opts)
            .map_err(|e| format!("solver failed: {e}"))?;
        for p in &out.trace {
            max_speed = max_speed.max(p.max_speed);
            max_im = max_im.max(p.max_im);
        }
        u = out.field;
        frames_m0.push(u.component(0).to_vec());
        frames_m1.push(u.component(1).to_vec());
        times.push(f as f64 * dt_frame);
    }
    Ok(SimFrames {
        x: grid.positions(),
        times,
        m0: frames_m0,
        m1: frames_m1,
        max_speed,
        max_im,
        closure: closure.label().to_string(),
    })
}

#[derive(Debug, Deserialize)]
pub struct DiffusionRequest {
    pub n_order: usize,
    pub nx: usize,
    pub eps: f64,
    pub t_end: f64,
    pub sigma_s: f64,
}

#[derive(Debug, Serialize)]
pub struct DiffusionCompare {
    pub x: Vec<f64>,
    pub m0_moment: Vec<f64>,
    pub m0_diffusion: Vec<f64>,
    pub rel_l2: f64,
}

pub fn diffusion_compare(req: &DiffusionRequest) -> Result<DiffusionCompare, String> {
    if req.nx < 8 || req.nx > 512 {
        return Err("nx must be between 8 and 512".into());
    }
    if req.eps <= 0.0 {
        return Err("epsilon must be positive".into());
    }
    let grid = Grid1d::new(req.nx);
    let profile = |x: f64| (2.0 * std::f64::consts::PI * x).sin() + 2.0;
    let xs = CrossSections::constant(req.sigma_s, 0.0);
    let closure = PnClosure::new(req.n_order);
    let u0 = MomentField::isotropic(grid.clone(), req.n_order, profile);
    let out = advance_diffusive(&u0, &closure, &xs, req.eps, req.t_end, &SolverOptions::pn())
        .map_err(|e| format!("solver failed: {e}"))?;
    let reference = diffusion_solve(
        &DiffusionField::from_profile(grid.clone(), profile),
        &xs,
        req.t_end,
    )
    .map_err(|e| format!("diffusion reference failed: {e}"))?;
    Ok(DiffusionCompare {
        x: grid.positions(),
        m0_moment: out.field.component(0).to_vec(),
        m0_diffusion: reference.values().to_vec(),
        rel_l2: density_rel_l2(&out.field, &reference),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_row_checks_hyperbolic() {
        let report = check_coefficients(6, [0.0, 0.0, 0.0, 0.0]);
        assert_eq!(report.verdict, "hyperbolic");
        assert!(report.max_im < 1e-12);
        assert!(report.spd_certificate > 0.0);
    }

    #[test]
    fn region_scan_contains_the_origin_and_excludes_deep_negatives() {
        let scan = region_scan(6, 0.0, 0.0, -1.0, 1.0, -2.0, 2.0, 21);
        let at = |nm2: f64, nm1: f64| -> u8 {
            let i = scan
                .nm2_axis
                .iter()
                .position(|&v| (v - nm2).abs() < 1e-9)
                .unwrap();
            let j = scan
                .nm1_axis
                .iter()
                .position(|&v| (v - nm1).abs() < 1e-9)
                .unwrap();
            scan.admissible[j * scan.res + i]
        };
        assert_eq!(at(0.0, 0.0), 1);
        assert_eq!(at(0.0, -2.0), 0);
    }

    #[test]
    fn postprocess_demo_is_always_admissible() {
        for raw in [[0.0; 4], [3.0, -2.0, 1.0, -4.0], [-5.0, 5.0, -5.0, 5.0]] {
            let demo = postprocess_demo(6, raw).unwrap();
            assert_eq!(demo.report.verdict, "hyperbolic", "raw {raw:?}");
        }
    }

    #[test]
    fn classical_simulation_runs_and_conserves_mass() {
        let req = SimRequest {
            n_order: 3,
            nx: 64,
            sigma_s: 1.0,
            sigma_a: 0.0,
            t_end: 0.4,
            frames: 4,
            init: DemoInit::SinePlateau,
            model_json: None,
        };
        let frames = simulate(&req).unwrap();
        assert_eq!(frames.m0.len(), 5);
        assert_eq!(frames.closure, "pn");
        let mass = |m0: &[f64]| m0.iter().sum::<f64>() / 64.0;
        let drift = (mass(&frames.m0[4]) - mass(&frames.m0[0])).abs();
        assert!(drift < 1e-8, "mass drift {drift}");
        assert!(frames.max_im < 1e-10);
    }

    #[test]
    fn diffusion_comparison_is_tight_at_small_knudsen() {
        let req = DiffusionRequest {
            n_order: 3,
            nx: 64,
            eps: 0.02,
            t_end: 0.04,
            sigma_s: 1.0,
        };
        let cmp = diffusion_compare(&req).unwrap();
        assert!(cmp.rel_l2 < 0.05, "rel L2 {}", cmp.rel_l2);
        let req_far = DiffusionRequest { eps: 0.5, ..req };
        let far = diffusion_compare(&req_far).unwrap();
        assert!(far.rel_l2 > cmp.rel_l2);
    }
}
