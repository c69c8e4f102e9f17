use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use superfid::control::{
    evolve_channel, gate_fidelity, noise_sweep, optimize_with_restarts, quadratic_fit,
    ExperimentConfig, NoiseSweepResult, PulseSchedule,
};
use superfid::fidelity::{
    channel_superfidelity_oracle, channel_superfidelity_terms, two_channel_fidelity_oracle,
};
use superfid::io::{read_channel, read_state};
use superfid::lindblad::SingleQubitSweep;
use superfid::DensityOperator;

use crate::failure::{code, Failure, Outcome};

pub struct Context<'a> {
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub oracle: Option<usize>,
    pub tol: Option<f64>,
}

impl Context<'_> {
    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Outcome<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn validate(ctx: &Context, path: &Path) -> Outcome<u8> {
    let ch = read_channel(path)?;
    let tol = ctx.tol.unwrap_or(1e-10);
    let tp = ch.tp_residual();
    println!("kraus_operators {}", ch.len());
    println!("d_in {}", ch.d_in());
    println!("d_out {}", ch.d_out());
    println!("tp_residual {tp:e}");
    let mut ok = tp <= tol;
    if ch.d_in() == ch.d_out() {
        let lam = ch.choi()?.min_eigenvalue();
        println!("choi_min_eigenvalue {lam:e}");
        ok &= lam >= -tol;
    }
    if ok {
        println!("CPTP within {tol:e}");
        Ok(code::OK)
    } else {
        println!("not CPTP within {tol:e}");
        Ok(code::DOMAIN)
    }
}

pub fn gch(ctx: &Context, a: &Path, b: &Path, state: &Path) -> Outcome<u8> {
    let (a, b, sigma) = (read_channel(a)?, read_channel(b)?, read_state(state)?);
    let terms = channel_superfidelity_terms(&a, &b, &sigma)?;
    let g = terms.value().value();
    println!("G_ch {g:.12}");
    println!("cross {:.12}", terms.cross);
    println!("purity_a {:.12}", terms.purity_a);
    println!("purity_b {:.12}", terms.purity_b);
    let d_z = ctx.oracle.unwrap_or(sigma.dim());
    let f2 = two_channel_fidelity_oracle(&a, &b, &sigma, d_z)?.value();
    println!("fidelity_squared {f2:.12}");
    if let Some(d_z) = ctx.oracle {
        let oracle = channel_superfidelity_oracle(&a, &b, &sigma, d_z, None)?.value();
        println!("oracle {oracle:.12}");
        println!("oracle_gap {:e}", (oracle - g).abs());
    }
    Ok(code::OK)
}

pub fn single_qubit_sweep(ctx: &Context) -> Outcome<u8> {
    let sweep: SingleQubitSweep = match ctx.config {
        Some(path) => read_json(path)?,
        None => SingleQubitSweep::default(),
    };
    let rho0 = DensityOperator::new(sweep.rho0.clone()).map_err(|e| Failure::input(format!("rho0: {e}")))?;
    if rho0.dim() != 2 {
        return Err(Failure::input("rho0 must be a qubit state"));
    }
    if let Some(t) = sweep.times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Failure::input(format!("times must be >= 0, got {t}")));
    }
    if sweep.epsilons.iter().chain([&sweep.omega]).any(|v| !v.is_finite()) {
        return Err(Failure::input("omega and epsilons must be finite"));
    }
    let rows = sweep.run()?;
    let path = ctx.out_file("single_qubit_sweep.csv");
    write_csv(&path, &rows)?;
    let worst = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    let tol = ctx.tol.unwrap_or(1e-7);
    println!("rows {}", rows.len());
    println!("max_abs_error {worst:e}");
    println!("wrote {}", path.display());
    Ok(if worst < tol { code::OK } else { code::DOMAIN })
}

fn experiment(ctx: &Context) -> Outcome<(ExperimentConfig, u64)> {
    let cfg: ExperimentConfig = match ctx.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.chain.validate()?;
    let seed = ctx.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

#[derive(Serialize)]
struct OptimizeReport {
    target: String,
    fidelity: f64,
    fidelity_with_dephasing: f64,
    gamma: f64,
    target_fidelity: f64,
    reached_target: bool,
    iterations: usize,
    seed: u64,
}

fn run_optimizer(ctx: &Context, cfg: &ExperimentConfig, seed: u64) -> Outcome<(PulseSchedule, bool)> {
    let target = cfg.target_gate()?;
    let run = optimize_with_restarts(&cfg.chain.closed(), &target, seed, &cfg.optimizer)?;
    let with_dephasing = gate_fidelity(&evolve_channel(&cfg.chain, &run.pulses)?, &target)?.value();
    write_json(&ctx.out_file("pulses.json"), &run.pulses)?;
    let report = OptimizeReport {
        target: cfg.target.clone(),
        fidelity: run.fidelity,
        fidelity_with_dephasing: with_dephasing,
        gamma: cfg.chain.gamma,
        target_fidelity: cfg.optimizer.target_fidelity,
        reached_target: run.reached_target,
        iterations: run.iterations,
        seed: run.seed,
    };
    write_json(&ctx.out_file("optimize.json"), &report)?;
    println!("fidelity {:.12}", run.fidelity);
    println!("fidelity_with_dephasing {with_dephasing:.12}");
    println!("iterations {} (seed {})", run.iterations, run.seed);
    if !run.reached_target {
        eprintln!(
            "target fidelity {} not reached; best {:.6}",
            cfg.optimizer.target_fidelity, run.fidelity
        );
    }
    Ok((run.pulses, run.reached_target))
}

pub fn control_optimize(ctx: &Context) -> Outcome<u8> {
    let (cfg, seed) = experiment(ctx)?;
    let (_, reached) = run_optimizer(ctx, &cfg, seed)?;
    Ok(if reached { code::OK } else { code::TARGET_MISS })
}

#[derive(Serialize)]
struct TrialRow {
    s: f64,
    trial: usize,
    gch: f64,
}

#[derive(Serialize, Deserialize)]
struct SummaryRow {
    s: f64,
    mean: f64,
    min: f64,
    max: f64,
}

fn summary_rows(r: &NoiseSweepResult) -> Vec<SummaryRow> {
    (0..r.s_values.len())
        .map(|i| SummaryRow {
            s: r.s_values[i],
            mean: r.mean[i],
            min: r.min[i],
            max: r.max[i],
        })
        .collect()
}

pub fn control_sweep(ctx: &Context, pulses: Option<&Path>) -> Outcome<u8> {
    let (cfg, seed) = experiment(ctx)?;
    let default_pulses = ctx.out_file("pulses.json");
    let (schedule, mut status) = match pulses {
        Some(path) => (read_json(path)?, code::OK),
        None if default_pulses.exists() => (read_json(&default_pulses)?, code::OK),
        None => {
            let (p, reached) = run_optimizer(ctx, &cfg, seed)?;
            (p, if reached { code::OK } else { code::TARGET_MISS })
        }
    };
    let result = noise_sweep(&cfg.chain, &schedule, &cfg.s_values, cfg.trials, seed)?;
    let trials = result.s_values.iter().zip(&result.samples).flat_map(|(&s, samples)| {
        samples
            .iter()
            .enumerate()
            .map(move |(trial, &gch)| TrialRow { s, trial, gch })
    });
    write_csv(&ctx.out_file("sweep_trials.csv"), trials)?;
    let summary = summary_rows(&result);
    write_csv(&ctx.out_file("sweep_summary.csv"), &summary)?;
    println!("s,mean,min,max");
    for row in &summary {
        println!("{},{},{},{}", row.s, row.mean, row.min, row.max);
    }
    if result.mean.iter().any(|m| !m.is_finite()) {
        status = code::DOMAIN;
    }
    Ok(status)
}

#[derive(Serialize)]
struct FitReport {
    c: f64,
    rel_error: f64,
    s_cutoff: f64,
}

pub fn control_fit(ctx: &Context, summary: Option<&Path>) -> Outcome<u8> {
    let cutoff_override = match ctx.config {
        Some(_) => experiment(ctx)?.0.s_cutoff,
        None => None,
    };
    let path = summary.map(Path::to_path_buf).unwrap_or_else(|| ctx.out_file("sweep_summary.csv"));
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let rows = reader
        .deserialize::<SummaryRow>()
        .collect::<Result<Vec<_>, _>>()?;
    let s: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let cutoff = cutoff_override.unwrap_or_else(|| s.iter().copied().fold(0.0, f64::max) / 2.0 + 1e-12);
    let fit = quadratic_fit(&s, &means, cutoff)?;
    let report = FitReport {
        c: fit.c,
        rel_error: fit.rel_error,
        s_cutoff: fit.s_cutoff,
    };
    write_json(&ctx.out_file("fit.json"), &report)?;
    println!("c {}", fit.c);
    println!("rel_error {:e}", fit.rel_error);
    println!("s_cutoff {}", fit.s_cutoff);
    Ok(code::OK)
}
