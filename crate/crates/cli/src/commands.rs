use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rfm_core::assembly::{assemble_plain, equidistant_grid, extract_blocks};
use rfm_core::features::{sample_frequencies, TrialFunction};
use rfm_core::oracle::{event_mc, moment_check, quartic_integral_bound, quartic_integral_max};
use rfm_core::solver::{median, seed_sweep, solve_problem, FeatureConfig, SolveRecord};
use rfm_core::spectra::{
    pum_sandwich, rate_fit, rho_tail_mc, sigma_upper_bound, singular_values, write_spectrum_csv, BoundParams, McReport,
    RateFit, RateModel, SandwichData, SpectralReport, SpectrumRow,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Spectrum,
    ConvergeN,
    ConvergeR,
    Probability,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub rcond: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub sigma_1: f64,
    pub sigma_min: f64,
    pub floor: f64,
    pub above_floor: usize,
    pub kappa_above_floor: f64,
}

impl From<&SpectralReport> for SpectralSummary {
    fn from(r: &SpectralReport) -> Self {
        Self {
            sigma_1: r.sigma_1(),
            sigma_min: r.sigma.last().copied().unwrap_or(0.0),
            floor: r.check_floor(),
            above_floor: r.above_floor(),
            kappa_above_floor: r.kappa_above_floor(),
        }
    }
}

/// One solve, self-describing: the config echo reruns it with `--seeds <seed>`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    #[serde(flatten)]
    pub record: SolveRecord,
    pub spectrum: SpectralSummary,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ConvergeSummary {
    sweep: &'static str,
    points: Vec<ConvergePoint>,
    fit: RateFit,
}

#[derive(Debug, Clone, Serialize)]
struct ConvergePoint {
    param: usize,
    r: f64,
    median_loss: f64,
    median_e0: f64,
    median_rel_e0: f64,
}

pub fn run(
    command: Command,
    mut config: ExperimentConfig,
    over: &Overrides,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    if let Some(s) = &over.seeds {
        config.seeds = s.clone();
    }
    if let Some(r) = over.rcond {
        config.solver.rcond = r;
    }
    let config = ExperimentConfig::from_json(&serde_json::to_string(&config).expect("config serializes"))?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.into(),
        source,
    })?;
    match command {
        Command::Solve => solve(&config, out, quiet),
        Command::Spectrum => spectrum(&config, out, quiet),
        Command::ConvergeN => converge(&config, out, quiet, false),
        Command::ConvergeR => converge(&config, out, quiet, true),
        Command::Probability => probability(&config, out, quiet),
    }
}

fn create(path: PathBuf) -> Result<(BufWriter<File>, PathBuf), CliError> {
    match File::create(&path) {
        Ok(f) => Ok((BufWriter::new(f), path)),
        Err(source) => Err(CliError::Io { path, source }),
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.into(),
        source,
    }
}

fn finite(what: &str, values: &[f64]) -> Result<(), CliError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CliError::Numerical(format!("{what}: entry {i} is {}", values[i]))),
        None => Ok(()),
    }
}

/// `kappa` is left out: it is legitimately infinite (JSON `null`) when the
/// smallest singular value underflows to exactly zero.
fn check_record(r: &SolveRecord) -> Result<(), CliError> {
    let mut v = vec![r.loss, r.residual];
    v.extend([r.e0, r.e1, r.e2, r.rel_e0].into_iter().flatten());
    finite(&format!("solve record for seed {}", r.seed), &v)
}

fn solve(config: &ExperimentConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    let problem = config.build_problem()?;
    let r = problem.half_width();
    for &seed in &config.seeds {
        let t = Instant::now();
        let res = solve_problem(&problem, config.features, config.grid.n, seed, &config.solver)?;
        let report = singular_values(&res.matrix.matrix, config.solver.rcond);
        finite("singular values", &report.sigma)?;
        check_record(&res.record)?;
        let run = RunRecord {
            config: ExperimentConfig {
                seeds: vec![seed],
                ..config.clone()
            },
            record: res.record.clone(),
            spectrum: (&report).into(),
            wall_time_s: t.elapsed().as_secs_f64(),
        };
        let (mut w, path) = create(out.join(format!("solve_seed{seed}.json")))?;
        serde_json::to_writer_pretty(&mut w, &run).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e.into(),
        })?;
        writeln!(w).and_then(|_| w.flush()).map_err(io(&path))?;
        if config.samples > 0 {
            let (mut w, path) = create(out.join(format!("solution_seed{seed}.csv")))?;
            let exact = &problem.exact.as_ref().expect("manufactured problem").expr;
            let mut rows = Vec::with_capacity(config.samples);
            for i in 0..config.samples {
                let x = if config.samples == 1 {
                    0.0
                } else {
                    -r + 2.0 * r * i as f64 / (config.samples - 1) as f64
                };
                let (un, ut) = (res.model.eval(x, 0), exact.eval(x));
                finite("solution sample", &[un])?;
                rows.push((x, un, ut));
            }
            (|| {
                writeln!(w, "# rfm-solution v1")?;
                writeln!(w, "x,u_N,u_true,error")?;
                for (x, un, ut) in rows {
                    writeln!(w, "{x:.17e},{un:.17e},{ut:.17e},{:.17e}", un - ut)?;
                }
                w.flush()
            })()
            .map_err(io(&path))?;
        }
        if !quiet {
            let rec = &res.record;
            println!(
                "seed {seed}: loss {:.3e}, e0 {:.3e}, rank {}, kappa {:.3e}",
                rec.loss,
                rec.e0.unwrap_or(f64::NAN),
                rec.rank,
                rec.kappa
            );
        }
    }
    Ok(())
}

fn spectrum(config: &ExperimentConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    let problem = config.build_problem()?;
    let band = config.band();
    for &seed in &config.seeds {
        let res = solve_problem(&problem, config.features, config.grid.n, seed, &config.solver)?;
        let fm = &res.matrix;
        let report = singular_values(&fm.matrix, config.solver.rcond);
        finite("singular values", &report.sigma)?;
        let bp = BoundParams::from_matrix(&problem, fm, band, res.record.n_freq);
        let sandwich = match config.features {
            FeatureConfig::Pum { .. } => Some(SandwichData::from_blocks(&extract_blocks(fm)?)),
            FeatureConfig::Plain { .. } => None,
        };
        let mut rows = Vec::with_capacity(report.sigma.len());
        for (i, &sigma) in report.sigma.iter().enumerate() {
            let m = i + 1;
            let upper_bound = match config.features {
                FeatureConfig::Plain { .. } => sigma_upper_bound(m, &bp).ok().filter(|b| b.is_finite()),
                FeatureConfig::Pum { .. } => None,
            };
            let sandwich = sandwich.as_ref().map(|d| pum_sandwich(d, m)).transpose()?;
            rows.push(SpectrumRow {
                m,
                sigma,
                upper_bound,
                sandwich,
                floor: report.check_floor(),
            });
        }
        let (mut w, path) = create(out.join(format!("spectrum_seed{seed}.csv")))?;
        write_spectrum_csv(&rows, &mut w)
            .and_then(|_| w.flush())
            .map_err(io(&path))?;
        let (mut w, path) = create(out.join(format!("sparsity_seed{seed}.csv")))?;
        fm.write_triplets(&mut w).and_then(|_| w.flush()).map_err(io(&path))?;
        if !quiet {
            println!(
                "seed {seed}: {} singular values, {} above floor, sigma_1 {:.3e}",
                report.sigma.len(),
                report.above_floor(),
                report.sigma_1()
            );
        }
    }
    Ok(())
}

fn converge(config: &ExperimentConfig, out: &Path, quiet: bool, in_radius: bool) -> Result<(), CliError> {
    let problem = config.build_problem()?;
    let r = problem.half_width();
    let sweep = match (config.sweep.is_empty(), in_radius) {
        (false, _) => config.sweep.clone(),
        (true, false) => vec![5, 10, 15, 20, 25, 30],
        (true, true) => vec![2, 4, 8, 16],
    };
    if sweep.len() < 4 {
        return Err(CliError::Config(format!(
            "a sweep needs at least 4 points, got {}",
            sweep.len()
        )));
    }
    let mut points = Vec::with_capacity(sweep.len());
    for &v in &sweep {
        let features = match (config.features, in_radius) {
            (FeatureConfig::Plain { band, .. }, false) => FeatureConfig::Plain { features: v, band },
            (FeatureConfig::Pum { patches, band, .. }, false) => FeatureConfig::Pum {
                patches,
                per_patch: v,
                band,
            },
            (FeatureConfig::Pum { per_patch, band, .. }, true) => FeatureConfig::Pum {
                patches: v,
                per_patch,
                band,
            },
            (FeatureConfig::Plain { .. }, true) => {
                return Err(CliError::Config(
                    "converge-r needs patched features (\"kind\": \"pum\")".into(),
                ))
            }
        };
        let records = seed_sweep(&problem, features, config.grid.n, &config.seeds, &config.solver)?;
        for rec in &records {
            check_record(rec)?;
        }
        let col = |f: fn(&SolveRecord) -> Option<f64>| median(&records.iter().filter_map(f).collect::<Vec<_>>());
        let radius = match features {
            FeatureConfig::Pum { patches, .. } => r / patches as f64,
            FeatureConfig::Plain { .. } => r,
        };
        points.push(ConvergePoint {
            param: v,
            r: radius,
            median_loss: median(&records.iter().map(|x| x.loss).collect::<Vec<_>>()),
            median_e0: col(|x| x.e0),
            median_rel_e0: col(|x| x.rel_e0),
        });
    }
    let name = if in_radius { "converge_r" } else { "converge_n" };
    let (mut w, path) = create(out.join(format!("{name}.csv")))?;
    (|| {
        writeln!(w, "# rfm-converge v1")?;
        writeln!(w, "param,r,median_loss,median_e0,median_rel_e0,seeds")?;
        for p in &points {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                p.param,
                p.r,
                p.median_loss,
                p.median_e0,
                p.median_rel_e0,
                config.seeds.len()
            )?;
        }
        w.flush()
    })()
    .map_err(io(&path))?;
    let (data, candidates): (Vec<(f64, f64)>, &[RateModel]) = if in_radius {
        (
            points.iter().map(|p| (p.r, p.median_e0)).collect(),
            &[RateModel::Algebraic],
        )
    } else {
        (
            points.iter().map(|p| (p.param as f64, p.median_e0)).collect(),
            &[
                RateModel::Exponential,
                RateModel::Stretched { s: 2.0 },
                RateModel::Algebraic,
            ],
        )
    };
    let fit = rate_fit(&data, candidates)?;
    finite("rate fit", &[fit.rate, fit.intercept, fit.residual])?;
    let summary = ConvergeSummary {
        sweep: if in_radius { "P" } else { "N" },
        points,
        fit,
    };
    let (mut w, path) = create(out.join(format!("{name}_fit.json")))?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io(&path))?;
    if !quiet {
        for p in &summary.points {
            println!("{} = {:>3}: median e0 {:.3e}", summary.sweep, p.param, p.median_e0);
        }
        println!("fit: {:?}, rate {:.3}", fit.model, fit.rate);
    }
    Ok(())
}

struct ClaimRow {
    parameters: String,
    trials: usize,
    empirical: f64,
    bound: f64,
    ci: (f64, f64),
    holds: bool,
}

impl ClaimRow {
    fn from_mc(parameters: String, r: &McReport) -> Self {
        Self {
            parameters,
            trials: r.trials,
            empirical: r.frequency,
            bound: r.bound,
            ci: (r.ci_low, r.ci_high),
            holds: r.holds(),
        }
    }
}

fn write_claims(out: &Path, name: &str, rows: &[ClaimRow]) -> Result<(), CliError> {
    for r in rows {
        finite(name, &[r.empirical, r.bound, r.ci.0, r.ci.1])?;
    }
    let (mut w, path) = create(out.join(format!("{name}.csv")))?;
    (|| {
        writeln!(w, "# rfm-probability v1")?;
        writeln!(w, "parameters,trials,empirical,bound,ci_low,ci_high,holds")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.parameters, r.trials, r.empirical, r.bound, r.ci.0, r.ci.1, r.holds
            )?;
        }
        w.flush()
    })()
    .map_err(io(&path))
}

fn probability(config: &ExperimentConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    let pc = &config.probability;
    let problem = config.build_problem()?;
    let band = config.band();
    let seed = config.seeds[0];
    let grid = equidistant_grid(config.grid.n, problem.half_width(), problem.op.gamma)?;

    let freq = sample_frequencies(pc.rho_frequencies, band, seed)?;
    let bp = BoundParams::from_matrix(
        &problem,
        &assemble_plain(&problem, &freq, &grid)?,
        band,
        pc.rho_frequencies,
    );
    let (rho_mc, rho_rows): (Vec<McReport>, Vec<ClaimRow>) = [
        (pc.rho_threshold, pc.rho_claim),
        (pc.rho_refined_threshold, pc.rho_refined_claim),
    ]
    .into_iter()
    .map(|(threshold, claim)| {
        let mc = rho_tail_mc(&bp, threshold, claim, pc.rho_trials, seed);
        let params = format!("N={};S={band};threshold={threshold};claim={claim}", pc.rho_frequencies);
        (mc, ClaimRow::from_mc(params, &mc))
    })
    .unzip();

    let ev = event_mc(pc.event_frequencies, pc.event_c, pc.c_u, band, pc.event_trials, seed)?;
    let ev_row = ClaimRow::from_mc(
        format!("N={};c={};C_u={};S={band}", pc.event_frequencies, pc.event_c, pc.c_u),
        &ev,
    );

    let mo = moment_check(pc.moment_frequencies, band, pc.c_u, pc.moment_trials, seed)?;
    let mo_row = ClaimRow {
        parameters: format!("N={};C_u={};S={band}", pc.moment_frequencies, pc.c_u),
        trials: mo.trials,
        empirical: mo.mean,
        bound: mo.bound,
        ci: (mo.mean - 1.96 * mo.std_err, mo.mean + 1.96 * mo.std_err),
        holds: mo.holds(),
    };

    let (argmax, jmax) = quartic_integral_max(pc.quartic_lambda, pc.quartic_delta, pc.quartic_step);
    let grid_points = (pc.quartic_delta / pc.quartic_step).round() as usize + 1;
    let params = format!(
        "lambda={};delta={};argmax={argmax}",
        pc.quartic_lambda, pc.quartic_delta
    );
    let analytic = quartic_integral_bound(pc.quartic_lambda, pc.quartic_delta)?;
    let j_rows = [
        ClaimRow {
            parameters: format!("{params};bound=claimed"),
            trials: grid_points,
            empirical: jmax,
            bound: pc.quartic_claim,
            ci: (jmax, jmax),
            holds: jmax <= pc.quartic_claim,
        },
        ClaimRow {
            parameters: format!("{params};bound=analytic"),
            trials: grid_points,
            empirical: jmax,
            bound: analytic,
            ci: (jmax, jmax),
            holds: jmax <= analytic,
        },
    ];

    write_claims(out, "rho", &rho_rows)?;
    write_claims(out, "event", &[ev_row])?;
    write_claims(out, "moment", &[mo_row])?;
    write_claims(out, "quartic", &j_rows)?;
    if !quiet {
        for rho in &rho_mc {
            println!(
                "rho:    {:.4} vs bound {:.4e} (holds: {})",
                rho.frequency,
                rho.bound,
                rho.holds()
            );
        }
        println!(
            "event:  {:.4} vs bound {:.4} (holds: {})",
            ev.frequency,
            ev.bound,
            ev.holds()
        );
        println!(
            "moment: {:.4e} vs bound {:.4e} (holds: {})",
            mo.mean,
            mo.bound,
            mo.holds()
        );
        println!(
            "quartic: max {jmax:.4} vs claimed {} and analytic {analytic:.4}",
            pc.quartic_claim
        );
    }
    Ok(())
}
