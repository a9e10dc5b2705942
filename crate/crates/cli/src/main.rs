use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use momclose::closure::{Closure, PnClosure};
use momclose::grid::Grid1d;
use momclose::hyperbolicity::{
    constraint_check_h, eigenvalues, symmetrizer_for_coefficients, Verdict,
};
use momclose::kinetic::{generate_training_set, CrossSections, DatasetMeta, TrainingDataConfig};
use momclose::momsolver::{advance, advance_diffusive, SolverError, SolverOptions};
use momclose::nn::{train, DirectMlClosure, HyperbolicMlClosure, MlpModel, TrainConfig};
use momclose::SigmaFn;

use momclose_cli::config::{ExperimentSpec, InitSpec};
use momclose_cli::experiments::run_benchmark;
use momclose_cli::report;

#[derive(Parser)]
#[command(
    name = "momclose",
    about = "Learned hyperbolic moment closures for slab-geometry radiative transfer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the moment-gradient training dataset from kinetic runs.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 6)]
        n_order: usize,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        quadrature: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the closure head on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 1024)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "softplus", value_parser = parse_sigma)]
        sigma: SigmaFn,
        /// Skip the constraint layer (raw head outputs as coefficients).
        #[arg(long)]
        unconstrained: bool,
        /// Write the per-epoch loss curve to this path.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Solve the closed moment system and write profile snapshots.
    Simulate {
        #[arg(long, value_parser = ["pn", "hyp", "nonhyp"])]
        mode: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        n_order: usize,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_s: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_a: f64,
        /// Knudsen number; switches to the diffusive scaling.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Initial condition, e.g. `fourier:seed=7`,
        /// `gaussian:c1=0.5,c2=2.5,x0=0.5,theta=0.01`, `diffusion`,
        /// `constant:value=2`.
        #[arg(long)]
        init: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the spectrum trace (t, c_max, max_im).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate the hyperbolicity constraints and symmetrizer for one
    /// coefficient set.
    CheckHyperbolicity {
        #[arg(long)]
        n_order: usize,
        /// Comma-separated trailing coefficients N_{N-3},N_{N-2},N_{N-1},N_N.
        #[arg(long)]
        coeffs: String,
        #[arg(long)]
        csv: bool,
    },
    /// Knudsen sweep against the diffusion reference.
    DiffusionLimit {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "hyp", value_parser = ["pn", "hyp"])]
        mode: String,
        #[arg(long, default_value = "0.5,0.1,0.05,0.01")]
        eps: String,
        #[arg(long, default_value_t = 6)]
        n_order: usize,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long, default_value_t = 0.1)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a shipped benchmark config and emit its report directory.
    Benchmark {
        /// Config name (example1..example4) or a path to a TOML spec.
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a report's error tables from its profile CSVs.
    Report { dir: PathBuf },
}

fn parse_sigma(s: &str) -> Result<SigmaFn, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::GenerateData {
            out,
            runs,
            n_order,
            nx,
            quadrature,
            seed,
        } => {
            let config = TrainingDataConfig {
                runs,
                n_order,
                nx,
                quadrature_order: quadrature,
                seed,
                ..TrainingDataConfig::default()
            };
            let dataset = generate_training_set(&config)?;
            let meta = DatasetMeta {
                format_version: 1,
                rows: dataset.rows(),
                config,
            };
            dataset.write_csv(&out, &meta)?;
            println!("wrote {} samples to {}", dataset.rows(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            data,
            out,
            layers,
            width,
            epochs,
            batch,
            lr,
            seed,
            sigma,
            unconstrained,
            history,
        } => {
            let dataset = momclose::Dataset::read_csv(&data)?;
            let config = TrainConfig {
                hidden_layers: layers,
                width,
                epochs,
                batch_size: batch,
                learning_rate: lr,
                seed,
                sigma_fn: sigma,
                constrained: !unconstrained,
                ..TrainConfig::default()
            };
            let outcome = train(&dataset, &config)?;
            outcome.model.save_json(&out)?;
            if let Some(hist_path) = history {
                let mut text = String::from("epoch,train_loss,val_loss\n");
                for e in &outcome.history {
                    text.push_str(&format!(
                        "{},{},{}\n",
                        e.epoch,
                        report::fmt(e.train_loss),
                        report::fmt(e.val_loss)
                    ));
                }
                std::fs::write(hist_path, text)?;
            }
            let last = outcome.history.last().unwrap();
            println!(
                "trained {} epochs; final train loss {:.3e}, val loss {:.3e}; model at {}",
                outcome.history.len(),
                last.train_loss,
                last.val_loss,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            mode,
            model,
            n_order,
            nx,
            t_end,
            sigma_s,
            sigma_a,
            epsilon,
            init,
            out,
            trace,
        } => {
            let init_spec: InitSpec = init.parse()?;
            let grid = Grid1d::new(nx);
            let u0 = init_spec.moment_field(&grid, n_order);
            let xs = CrossSections::constant(sigma_s, sigma_a);
            let (closure, opts): (Box<dyn Closure>, SolverOptions) = match mode.as_str() {
                "pn" => (
                    Box::new(PnClosure::new(n_order)),
                    SolverOptions {
                        record_trace: trace.is_some(),
                        ..SolverOptions::pn()
                    },
                ),
                "hyp" => {
                    let path = model.ok_or("--mode hyp needs --model")?;
                    (
                        Box::new(HyperbolicMlClosure::new(MlpModel::load_json(&path)?)),
                        SolverOptions::hyperbolic_ml(),
                    )
                }
                "nonhyp" => {
                    let path = model.ok_or("--mode nonhyp needs --model")?;
                    (
                        Box::new(DirectMlClosure::new(MlpModel::load_json(&path)?)),
                        SolverOptions::nonhyperbolic_ml(),
                    )
                }
                _ => unreachable!("clap validated"),
            };
            let result = match epsilon {
                Some(eps) => advance_diffusive(&u0, closure.as_ref(), &xs, eps, t_end, &opts),
                None => advance(&u0, closure.as_ref(), &xs, t_end, &opts),
            };
            match result {
                Ok(outcome) => {
                    report::write_profile_csv(&out, &outcome.field)?;
                    if let Some(trace_path) = trace {
                        report::write_eig_trace(&trace_path, &outcome.trace)?;
                    }
                    println!(
                        "advanced to t = {t_end} in {} steps; profile at {}",
                        outcome.steps,
                        out.display()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(SolverError::BlowUp { time })
                | Err(SolverError::NonFiniteClosure { time }) => {
                    eprintln!("blow-up detected at t = {time:.6}");
                    Ok(ExitCode::from(2))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::CheckHyperbolicity {
            n_order,
            coeffs,
            csv,
        } => {
            let parts: Vec<f64> = coeffs
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()?;
            if parts.len() != 4 {
                return Err("expected four comma-separated coefficients".into());
            }
            let c = momclose::ClosureCoefficients::new(
                n_order,
                4,
                [parts[0], parts[1], parts[2], parts[3]],
            );
            let margins = constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), n_order)?;
            let sym = symmetrizer_for_coefficients(&c);
            let eigs = eigenvalues(&momclose::closure::assemble_matrix(&c));
            let verdict_str = match &sym {
                Ok(s) if s.verdict == Verdict::Hyperbolic => "hyperbolic",
                Ok(_) => "not_hyperbolic",
                Err(_) => "boundary",
            };
            if csv {
                println!("field,value");
                println!("verdict,{verdict_str}");
                println!("margin_first,{}", report::fmt(margins.first));
                println!("margin_second,{}", report::fmt(margins.second));
                if let Ok(s) = &sym {
                    println!("spd_certificate,{}", report::fmt(s.spd_certificate));
                    println!("symmetry_residual,{}", report::fmt(s.symmetry_residual));
                    for (i, d) in s.d_block.iter().enumerate() {
                        println!("d_{i},{}", report::fmt(*d));
                    }
                    for bi in 0..s.block_size {
                        for bj in 0..s.block_size {
                            println!(
                                "b_{bi}{bj},{}",
                                report::fmt(s.b_block[bi * s.block_size + bj])
                            );
                        }
                    }
                }
                for (i, z) in eigs.iter().enumerate() {
                    println!("eig_{i}_re,{}", report::fmt(z.re));
                    println!("eig_{i}_im,{}", report::fmt(z.im));
                }
            } else {
                println!("verdict: {verdict_str}");
                println!(
                    "constraint margins: first = {:.6e}, second = {:.6e}",
                    margins.first, margins.second
                );
                if let Ok(s) = &sym {
                    println!("symmetrizer: D = diag{:?}, B = {:?}", s.d_block, s.b_block);
                    println!(
                        "spd certificate (min eig of B): {:.6e}; symmetry residual {:.3e}",
                        s.spd_certificate, s.symmetry_residual
                    );
                }
                let eig_strs: Vec<String> = eigs
                    .iter()
                    .map(|z| {
                        format!(
                            "{:.6}{}{:.2e}i",
                            z.re,
                            if z.im < 0.0 { "-" } else { "+" },
                            z.im.abs()
                        )
                    })
                    .collect();
                println!("eigenvalues: {}", eig_strs.join(", "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DiffusionLimit {
            model,
            mode,
            eps,
            n_order,
            nx,
            t_end,
            out,
        } => {
            let eps_list: Vec<f64> = eps
                .split(',')
                .map(|e| e.trim().parse::<f64>())
                .collect::<Result<_, _>>()?;
            let (closure, opts): (Box<dyn Closure>, SolverOptions) = match mode.as_str() {
                "pn" => (Box::new(PnClosure::new(n_order)), SolverOptions::pn()),
                "hyp" => {
                    let path = model.ok_or("--mode hyp needs --model")?;
                    (
                        Box::new(HyperbolicMlClosure::new(MlpModel::load_json(&path)?)),
                        SolverOptions::hyperbolic_ml(),
                    )
                }
                _ => unreachable!("clap validated"),
            };
            let xs = CrossSections::constant(1.0, 0.0);
            let rows = momclose::diffusion::diffusion_limit_study(
                closure.as_ref(),
                &xs,
                &eps_list,
                t_end,
                nx,
                &opts,
            )?;
            let mut text = String::from("eps,rel_l2\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{}\n",
                    report::fmt(r.eps),
                    report::fmt(r.rel_l2)
                ));
                println!("eps = {:<8} rel L2 = {:.6e}", r.eps, r.rel_l2);
            }
            std::fs::write(&out, text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Benchmark { name, config, out } => {
            let config_path =
                config.unwrap_or_else(|| PathBuf::from(format!("configs/{name}.toml")));
            let spec = ExperimentSpec::load(&config_path)?;
            let metadata = run_benchmark(&spec, &out)?;
            for (mode, outcome) in &metadata.outcomes {
                println!("{mode}: {outcome:?}");
            }
            println!("report written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => match momclose_cli::report::recompute_error_table(&dir) {
            Ok(rows) => {
                println!("mode,t,component,rel_l2,rel_linf");
                for r in rows {
                    println!(
                        "{},{},{},{},{}",
                        r.mode,
                        r.t,
                        r.component,
                        report::fmt(r.rel_l2),
                        report::fmt(r.rel_linf)
                    );
                }
                println!("error tables verified against profiles");
                Ok(ExitCode::SUCCESS)
            }
            Err(msg) => {
                eprintln!("report inconsistency: {msg}");
                Ok(ExitCode::from(1))
            }
        },
    }
}
