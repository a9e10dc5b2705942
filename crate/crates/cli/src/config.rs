//! Experiment configuration: TOML specs for the shipped benchmarks plus
//! the compact `--init` string syntax of the `simulate` subcommand.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use momclose::grid::Grid1d;
use momclose::kinetic::{CrossSections, FourierInit, KineticField};
use momclose::legendre::Quadrature;
use momclose::momsolver::MomentField;
use rand_chacha::rand_core::SeedableRng;

/// Initial-condition families. All of them are isotropic in angle, so the
/// moment state starts with `m_0` equal to the profile and higher moments
/// zero.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitSpec {
    /// Random truncated Fourier profile drawn from the training
    /// distribution (deterministic in the seed).
    Fourier {
        seed: u64,
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_offset_range")]
        offset_range: (f64, f64),
    },
    /// Narrow Gaussian bump on a pedestal.
    Gaussian { c1: f64, c2: f64, x0: f64, theta: f64 },
    /// `sin(2πx) + 2`, the diffusion-sweep profile.
    DiffusionInit,
    Constant { value: f64 },
}

fn default_degree() -> usize {
    4
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_offset_range() -> (f64, f64) {
    (2.0, 5.0)
}

impl InitSpec {
    /// Density profile sampled on the grid.
    pub fn profile(&self, grid: &Grid1d) -> Vec<f64> {
        match self {
            InitSpec::Fourier {
                seed,
                degree,
                amplitude,
                offset_range,
            } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let init = FourierInit::draw_positive(
                    &mut rng,
                    *degree,
                    *amplitude,
                    *offset_range,
                    grid,
                )
                .expect("positive draw");
                (0..grid.nx()).map(|i| init.eval(grid.x(i))).collect()
            }
            InitSpec::Gaussian { c1, c2, x0, theta } => (0..grid.nx())
                .map(|i| {
                    let x = grid.x(i);
                    c1 / (2.0 * std::f64::consts::PI * theta).sqrt()
                        * (-(x - x0) * (x - x0) / (2.0 * theta)).exp()
                        + c2
                })
                .collect(),
            InitSpec::DiffusionInit => (0..grid.nx())
                .map(|i| (2.0 * std::f64::consts::PI * grid.x(i)).sin() + 2.0)
                .collect(),
            InitSpec::Constant { value } => vec![*value; grid.nx()],
        }
    }

    pub fn moment_field(&self, grid: &Grid1d, n_order: usize) -> MomentField {
        let profile = self.profile(grid);
        let mut u = MomentField::zero(grid.clone(), n_order);
        u.component_mut(0).copy_from_slice(&profile);
        u
    }

    pub fn kinetic_field(&self, grid: &Grid1d, quad: &Quadrature) -> KineticField {
        let profile = self.profile(grid);
        let mut f = KineticField::zero(grid.clone(), quad);
        for q in 0..quad.len() {
            f.ordinate_mut(q).copy_from_slice(&profile);
        }
        f
    }
}

impl FromStr for InitSpec {
    type Err = String;

    /// Compact syntax: `fourier:seed=7`, `gaussian:c1=0.5,c2=2.5,x0=0.5,theta=0.01`,
    /// `diffusion`, `constant:value=2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, r),
            None => (s, ""),
        };
        let mut params = std::collections::BTreeMap::new();
        for item in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("malformed init parameter `{item}`"))?;
            let v: f64 = v.parse().map_err(|e| format!("bad value in `{item}`: {e}"))?;
            params.insert(k.to_string(), v);
        }
        let get = |key: &str| -> Result<f64, String> {
            params
                .get(key)
                .copied()
                .ok_or_else(|| format!("init spec `{kind}` needs `{key}=`"))
        };
        match kind {
            "fourier" => Ok(InitSpec::Fourier {
                seed: get("seed")? as u64,
                degree: params.get("degree").map(|&d| d as usize).unwrap_or(4),
                amplitude: params.get("amplitude").copied().unwrap_or(1.0),
                offset_range: (
                    params.get("offset_min").copied().unwrap_or(2.0),
                    params.get("offset_max").copied().unwrap_or(5.0),
                ),
            }),
            "gaussian" => Ok(InitSpec::Gaussian {
                c1: get("c1")?,
                c2: get("c2")?,
                x0: get("x0")?,
                theta: get("theta")?,
            }),
            "diffusion" => Ok(InitSpec::DiffusionInit),
            "constant" => Ok(InitSpec::Constant { value: get("value")? }),
            other => Err(format!("unknown init family `{other}`")),
        }
    }
}

/// Optional σ_s sweep section (log-spaced scatter study).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepSpec {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub t_end: f64,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

/// Model files for the learned closure modes.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ModelPaths {
    pub hyp: Option<PathBuf>,
    pub nonhyp: Option<PathBuf>,
}

/// Which benchmark family a config drives.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Constant,
    Gaussian,
    TwoMaterial,
    Diffusion,
}

/// A fully resolved experiment description. The shipped configs under
/// `configs/` cover the four benchmark setups.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub name: String,
    pub n_order: usize,
    pub nx: usize,
    pub quadrature_order: usize,
    pub seed: u64,
    /// Closure modes to compare: any of `pn`, `hyp`, `nonhyp`.
    pub modes: Vec<String>,
    pub snapshot_times: Vec<f64>,
    pub init: InitSpec,
    pub cross_sections: CrossSections,
    #[serde(default)]
    pub models: ModelPaths,
    /// Long-time stability horizon (constant-coefficient benchmark).
    #[serde(default)]
    pub long_time: Option<f64>,
    #[serde(default)]
    pub sigma_sweep: Option<SweepSpec>,
    /// Knudsen ladder (diffusion benchmark).
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// Final time of the diffusion benchmark.
    #[serde(default)]
    pub t_end: Option<f64>,
}

impl ExperimentSpec {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut spec: ExperimentSpec =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
        // model paths are relative to the config file
        if let Some(dir) = path.parent() {
            if let Some(p) = spec.models.hyp.take() {
                spec.models.hyp = Some(if p.is_relative() { dir.join(p) } else { p });
            }
            if let Some(p) = spec.models.nonhyp.take() {
                spec.models.nonhyp = Some(if p.is_relative() { dir.join(p) } else { p });
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_string_syntax_round_trips() {
        let g: InitSpec = "gaussian:c1=0.5,c2=2.5,x0=0.5,theta=0.01".parse().unwrap();
        assert_eq!(
            g,
            InitSpec::Gaussian {
                c1: 0.5,
                c2: 2.5,
                x0: 0.5,
                theta: 0.01
            }
        );
        assert_eq!("diffusion".parse::<InitSpec>().unwrap(), InitSpec::DiffusionInit);
        let f: InitSpec = "fourier:seed=7".parse().unwrap();
        match f {
            InitSpec::Fourier { seed, degree, .. } => {
                assert_eq!(seed, 7);
                assert_eq!(degree, 4);
            }
            other => panic!("{other:?}"),
        }
        assert!("gaussian:c1=0.5".parse::<InitSpec>().is_err());
        assert!("warp:x=1".parse::<InitSpec>().is_err());
    }

    #[test]
    fn gaussian_profile_matches_the_formula() {
        let grid = Grid1d::new(64);
        let spec = InitSpec::Gaussian {
            c1: 0.5,
            c2: 2.5,
            x0: 0.5,
            theta: 0.01,
        };
        let p = spec.profile(&grid);
        let x = grid.x(32);
        let expected = 0.5 / (2.0 * std::f64::consts::PI * 0.01).sqrt()
            * (-(x - 0.5f64).powi(2) / 0.02).exp()
            + 2.5;
        assert!((p[32] - expected).abs() < 1e-14);
        // isotropic start: higher moments vanish
        let u = spec.moment_field(&grid, 4);
        for k in 1..=4 {
            assert!(u.component(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sweep_values_are_log_spaced() {
        let sweep = SweepSpec {
            count: 5,
            min: 0.1,
            max: 1000.0,
            t_end: 0.5,
        };
        let v = sweep.values();
        assert_eq!(v.len(), 5);
        assert!((v[0] - 0.1).abs() < 1e-12);
        assert!((v[4] - 1000.0).abs() < 1e-9);
        let r1 = v[1] / v[0];
        let r2 = v[2] / v[1];
        assert!((r1 - r2).abs() < 1e-9);
    }

    #[test]
    fn toml_spec_round_trips() {
        let text = r#"
kind = "constant"
name = "example1"
n_order = 6
nx = 256
quadrature_order = 64
seed = 42
modes = ["pn", "hyp"]
snapshot_times = [0.5, 1.0]
long_time = 10.0

[init]
type = "fourier"
seed = 777

[cross_sections.sigma_s]
kind = "constant"
value = 1.0

[cross_sections.sigma_a]
kind = "constant"
value = 1.0

[models]
hyp = "models/hyp.json"

[sigma_sweep]
count = 8
min = 0.1
max = 100.0
t_end = 0.5
"#;
        let spec: ExperimentSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.kind, ExperimentKind::Constant);
        assert_eq!(spec.modes, vec!["pn", "hyp"]);
        assert_eq!(spec.sigma_sweep.as_ref().unwrap().count, 8);
        let back = toml::to_string(&spec).unwrap();
        let again: ExperimentSpec = toml::from_str(&back).unwrap();
        assert_eq!(spec, again);
    }
}
