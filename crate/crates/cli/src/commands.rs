//! Subcommand implementations. Each writes its files into the output
//! directory and a short report to `out`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use qtraj_core::bayes::{
    grid_posterior, mh_sample, posterior_evolution, summarize, InferenceProblem, Prior, ProposalConfig, Summary,
    DEFAULT_BINS,
};
use qtraj_core::fisher::{estimate_fisher, fisher_grid};
use qtraj_core::likelihood::{loglik, loglik_trajectory, relative_entropy, ReferenceRate};
use qtraj_core::models::stationary_emission_rate;
use qtraj_core::quantum::bloch_vector;
use qtraj_core::trajectory::{simulate_bimodal_truth, simulate_diffusion, simulate_jump, SimOptions};
use qtraj_core::{
    BimodalModel, ComplexMatrix, DensityMatrix, MeasurementKind, ParametricModel, Record,
};
use serde::Serialize;

use crate::config::{ModelKind, PlaneGrid, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{header, num, OutputDir};
use crate::record_file::RecordFile;

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn theta_map(names: &[String], theta: &[f64]) -> BTreeMap<String, f64> {
    names.iter().cloned().zip(theta.iter().copied()).collect()
}

fn reference_rate(cfg: &RunConfig) -> CliResult<ReferenceRate> {
    Ok(ReferenceRate::new(cfg.lambda.unwrap_or(1.0))?)
}

/// Atomic state of a bimodal state (index `2·atom + config`), traced over the configuration.
fn atomic_state(rho: &DensityMatrix) -> CliResult<DensityMatrix> {
    if rho.dim() == 2 {
        return Ok(rho.clone());
    }
    let m = rho.matrix();
    let reduced = ComplexMatrix::from_fn(2, |i, j| m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)]);
    Ok(DensityMatrix::new(reduced.hermitized())?)
}

/// Stationary click rate; the configuration-weighted mean for the bimodal atom.
pub fn stationary_rate(model: ModelKind, theta: &[f64]) -> CliResult<f64> {
    Ok(match model {
        ModelKind::TwoLevel => stationary_emission_rate(theta[0], theta[1], theta[2])?,
        ModelKind::Bimodal => {
            let (pa, pb) = BimodalModel::stationary_weights(theta[BimodalModel::W_AB], theta[BimodalModel::W_BA]);
            let [oa, da, ga] = BimodalModel::config_parameters(theta, 0);
            let [ob, db, gb] = BimodalModel::config_parameters(theta, 1);
            pa * stationary_emission_rate(oa, da, ga)? + pb * stationary_emission_rate(ob, db, gb)?
        }
    })
}

pub fn simulate(cfg: &RunConfig, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let model = cfg.build_model();
    let model = model.as_dyn();
    let names = model.parameter_names();
    let theta = cfg.full_theta()?;
    model.check_domain(&theta)?;
    let mut opts = SimOptions::new(cfg.horizon, cfg.dt, cfg.seed);
    if let Some(every) = cfg.simulate.sample_every {
        opts = opts.sampling_every(every);
    }
    let start = cfg.simulate.start_config.as_deref().map(|s| usize::from(s == "b"));
    let sim = match (cfg.kind, cfg.model) {
        (MeasurementKind::Jump, ModelKind::Bimodal) => simulate_bimodal_truth(&theta, &opts, start)?,
        (MeasurementKind::Jump, ModelKind::TwoLevel) => simulate_jump(model, &theta, &opts)?,
        (MeasurementKind::Diffusion, _) => {
            if start.is_some() {
                log::warn!("start_config is ignored for homodyne simulation");
            }
            simulate_diffusion(model, &theta, &opts)?
        }
    };
    let mut file = RecordFile::from_record(&sim.record, cfg.model.as_str());
    file.theta = Some(theta_map(&names, &theta));
    file.seed = Some(cfg.seed);
    file.config_digest = Some(cfg.digest.clone());
    let path = dir.path("record.json");
    file.save(&path)?;
    match &sim.record {
        Record::Jump(r) => writeln!(out, "{} clicks over T = {} -> {}", r.n_clicks(), r.horizon(), path.display()),
        Record::Diffusion(r) => writeln!(out, "{} homodyne increments over T = {} -> {}", r.n_steps(), r.horizon(), path.display()),
    }
    .map_err(io)?;

    if let Some(states) = &sim.states {
        let mut t = dir.csv("bloch.csv", &header(&["t", "x", "y", "z"]))?;
        for (time, rho) in states {
            let [x, y, z] = bloch_vector(&atomic_state(rho)?)?;
            t.row(&[*time, x, y, z])?;
        }
        writeln!(out, "{} conditional states -> {}", states.len(), t.finish()?.display()).map_err(io)?;
    }
    if let Some(path) = &sim.hidden_path {
        let mut t = dir.csv("hidden_path.csv", &header(&["t", "config"]))?;
        for (time, c) in path {
            t.fields([num(*time), if *c == 0 { "a".into() } else { "b".into() }])?;
        }
        t.finish()?;
    }
    if let (Some(width), Record::Jump(r)) = (cfg.simulate.bin_width, &sim.record) {
        let horizon = r.horizon();
        let n_bins = (horizon / width).ceil().max(1.0) as usize;
        let mut counts = vec![0usize; n_bins];
        for &c in r.clicks() {
            counts[((c / width) as usize).min(n_bins - 1)] += 1;
        }
        let expected = expected_counts(cfg.model, &theta, sim.hidden_path.as_deref(), horizon, width, n_bins)?;
        let mut t = dir.csv("counts.csv", &header(&["t_start", "t_end", "count", "expected"]))?;
        for (b, (&n, e)) in counts.iter().zip(expected).enumerate() {
            let lo = b as f64 * width;
            t.fields([num(lo), num((lo + width).min(horizon)), n.to_string(), num(e)])?;
        }
        t.finish()?;
    }
    Ok(())
}

/// Expected clicks per bin at the stationary rate, following the
/// configuration path when it is known.
fn expected_counts(
    model: ModelKind,
    theta: &[f64],
    path: Option<&[(f64, usize)]>,
    horizon: f64,
    width: f64,
    n_bins: usize,
) -> CliResult<Vec<f64>> {
    let bin = |b: usize| (b as f64 * width, ((b + 1) as f64 * width).min(horizon));
    let Some(path) = path else {
        let rate = stationary_rate(model, theta)?;
        return Ok((0..n_bins).map(|b| rate * (bin(b).1 - bin(b).0)).collect());
    };
    let mut rates = [0.0; 2];
    for (c, r) in rates.iter_mut().enumerate() {
        let [o, d, g] = BimodalModel::config_parameters(theta, c);
        *r = stationary_emission_rate(o, d, g)?;
    }
    // Piecewise-constant configuration: (start, end, config) segments.
    let segments: Vec<(f64, f64, usize)> = path
        .iter()
        .enumerate()
        .map(|(i, &(t, c))| (t, path.get(i + 1).map_or(horizon, |p| p.0), c))
        .collect();
    Ok((0..n_bins)
        .map(|b| {
            let (lo, hi) = bin(b);
            segments
                .iter()
                .map(|&(s, e, c)| (e.min(hi) - s.max(lo)).max(0.0) * rates[c])
                .sum()
        })
        .collect())
}

fn load_record(cfg: &RunConfig, path: Option<&Path>) -> CliResult<Record> {
    let path = path.ok_or_else(|| CliError::Config("--record is required".into()))?;
    let file = RecordFile::load(path)?;
    if file.model != cfg.model.as_str() {
        log::warn!(
            "record was generated by model `{}`; analysing it with `{}`",
            file.model,
            cfg.model.as_str()
        );
    }
    file.to_record()
}

pub fn loglik_cmd(cfg: &RunConfig, record: Option<&Path>, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let record = load_record(cfg, record)?;
    let model = cfg.build_model();
    let model = model.as_dyn();
    let theta = cfg.full_theta()?;
    let lambda = reference_rate(cfg)?;
    let l = match cfg.loglik.every {
        Some(every) => {
            let res = loglik_trajectory(model, &theta, &record, lambda, every)?;
            let mut t = dir.csv("loglik.csv", &header(&["t", "loglik", "x", "y", "z"]))?;
            for (time, l, rho) in res.trajectory.as_deref().unwrap_or_default() {
                let [x, y, z] = bloch_vector(&atomic_state(rho)?)?;
                t.row(&[*time, *l, x, y, z])?;
            }
            t.finish()?;
            res.loglik
        }
        None => loglik(model, &theta, &record, lambda)?,
    };
    writeln!(out, "loglik {}", num(l)).map_err(io)?;
    if l == f64::NEG_INFINITY {
        return Err(CliError::Numerical("the record has zero likelihood under theta".into()));
    }
    Ok(())
}

fn problem<'a>(
    cfg: &RunConfig,
    model: &'a dyn ParametricModel,
    record: &'a Record,
) -> CliResult<InferenceProblem<'a>> {
    let (free, priors) = cfg.free_parameters()?;
    let base = cfg.theta_with_free(&free)?;
    Ok(InferenceProblem::new(model, record, base, free, priors)?.with_reference_rate(reference_rate(cfg)?))
}

pub fn posterior(cfg: &RunConfig, record: Option<&Path>, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("posterior needs a [grid] section".into()))?;
    let record = load_record(cfg, record)?;
    let model = cfg.build_model();
    let problem = problem(cfg, model.as_dyn(), &record)?;
    let names = problem.free_names();
    let axes: Vec<Vec<f64>> = names.iter().map(|n| grid.axes[n].points()).collect();
    let post = grid_posterior(&problem, &axes)?;
    let mut cols = names.clone();
    cols.extend(["log_weight".to_string(), "probability".to_string()]);
    let mut t = dir.csv("posterior.csv", &cols)?;
    for (i, p) in post.probabilities().iter().enumerate() {
        let mut row = post.point(i);
        row.extend([post.log_weights[i], *p]);
        t.row(&row)?;
    }
    t.finish()?;
    let (mean, std, mode) = (post.mean(), post.std(), post.mode());
    for (k, n) in names.iter().enumerate() {
        writeln!(out, "{n}: mean {} std {} mode {}", num(mean[k]), num(std[k]), num(mode[k])).map_err(io)?;
    }
    if !grid.times.is_empty() {
        let evo = posterior_evolution(&problem, &axes, &grid.times)?;
        let mut cols = vec!["t".to_string()];
        cols.extend(names.iter().cloned());
        cols.push("probability".into());
        let mut t = dir.csv("posterior_evolution.csv", &cols)?;
        for (time, post) in grid.times.iter().zip(&evo) {
            for (i, p) in post.probabilities().iter().enumerate() {
                let mut row = vec![*time];
                row.extend(post.point(i));
                row.push(*p);
                t.row(&row)?;
            }
        }
        writeln!(out, "{} snapshots -> {}", evo.len(), t.finish()?.display()).map_err(io)?;
    }
    Ok(())
}

/// Initial proposal variance when none is configured: a fraction of the prior spread.
fn default_variance(prior: &Prior) -> f64 {
    match *prior {
        Prior::Uniform { lo, hi } => ((hi - lo) / 10.0).powi(2),
        Prior::Normal { sigma, .. } => (sigma / 2.0).powi(2),
        Prior::Gamma { alpha, beta } => alpha / (beta * beta) / 4.0,
    }
}

#[derive(Serialize)]
struct McmcReport<'a> {
    config_digest: &'a str,
    seed: u64,
    names: &'a [String],
    init_attempts: usize,
    proposal_cov: &'a [Vec<f64>],
    summary: &'a Summary,
}

pub fn mcmc(cfg: &RunConfig, record: Option<&Path>, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let m = cfg
        .mcmc
        .as_ref()
        .ok_or_else(|| CliError::Config("mcmc needs an [mcmc] section".into()))?;
    let record = load_record(cfg, record)?;
    let model = cfg.build_model();
    let problem = problem(cfg, model.as_dyn(), &record)?;
    let names = problem.free_names();
    let adapt = m.adapt_burnin.unwrap_or(m.burnin);
    let proposal = match &m.covariance {
        Some(c) => ProposalConfig::new(c.clone(), adapt),
        None => {
            let vars: Vec<f64> = names
                .iter()
                .zip(problem.priors())
                .map(|(n, p)| m.proposal_variance.get(n).copied().unwrap_or_else(|| default_variance(p)))
                .collect();
            ProposalConfig::diagonal(&vars, adapt)
        }
    }
    .learning_covariance(m.learn_covariance);
    let chain = mh_sample(&problem, &proposal, m.steps, cfg.seed)?;
    let mut cols = vec!["step".to_string()];
    cols.extend(names.iter().cloned());
    cols.extend(["log_prior", "loglik", "accepted"].map(String::from));
    let mut t = dir.csv("chain.csv", &cols)?;
    for (i, x) in chain.samples.iter().enumerate() {
        let mut fields = vec![i.to_string()];
        fields.extend(x.iter().map(|v| num(*v)));
        fields.extend([
            num(chain.log_priors[i]),
            num(chain.logliks[i]),
            u8::from(chain.accepted_flags[i]).to_string(),
        ]);
        t.fields(fields)?;
    }
    t.finish()?;
    let summary = summarize(&chain, m.burnin, m.bins.unwrap_or(DEFAULT_BINS))?;
    let path = dir.json(
        "summary.json",
        &McmcReport {
            config_digest: &cfg.digest,
            seed: cfg.seed,
            names: &names,
            init_attempts: chain.init_attempts,
            proposal_cov: &chain.proposal_cov,
            summary: &summary,
        },
    )?;
    writeln!(
        out,
        "acceptance {:.3} (after burn-in {:.3}); summary -> {}",
        summary.acceptance_rate,
        summary.post_burnin_acceptance_rate,
        path.display()
    )
    .map_err(io)?;
    for p in &summary.parameters {
        writeln!(
            out,
            "{}: mean {} std {} 90% [{}, {}]",
            p.name,
            num(p.mean),
            num(p.std),
            num(p.q05),
            num(p.q95)
        )
        .map_err(io)?;
    }
    Ok(())
}

fn plane_axes(cfg: &RunConfig, g: &PlaneGrid) -> CliResult<(usize, usize, Vec<f64>, Vec<f64>)> {
    Ok((cfg.index_of(&g.x)?, cfg.index_of(&g.y)?, g.xs.points(), g.ys.points()))
}

pub fn fisher(cfg: &RunConfig, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let f = cfg
        .fisher
        .as_ref()
        .ok_or_else(|| CliError::Config("fisher needs a [fisher] section".into()))?;
    let model = cfg.build_model();
    let model = model.as_dyn();
    let theta = cfg.full_theta()?;
    model.check_domain(&theta)?;
    if let Some(g) = &f.grid {
        let (ix, iy, xs, ys) = plane_axes(cfg, g)?;
        let points = fisher_grid(
            model,
            &theta,
            (ix, iy),
            &xs,
            &ys,
            cfg.horizon,
            cfg.dt,
            f.n_traj,
            cfg.seed,
            cfg.kind,
        )?;
        let (x, y) = (&g.x, &g.y);
        let cols = vec![
            x.clone(),
            y.clone(),
            format!("I_{x}_{x}"),
            format!("I_{y}_{y}"),
            format!("I_{x}_{y}"),
            format!("se_{x}_{x}"),
            format!("se_{y}_{y}"),
            format!("se_{x}_{y}"),
        ];
        let mut t = dir.csv("fisher_grid.csv", &cols)?;
        for p in &points {
            let (v, s) = (&p.fisher.values, &p.fisher.std_err);
            t.row(&[p.x, p.y, v[0][0], v[1][1], v[0][1], s[0][0], s[1][1], s[0][1]])?;
        }
        writeln!(out, "{} grid points -> {}", points.len(), t.finish()?.display()).map_err(io)?;
        return Ok(());
    }
    let params: Vec<usize> = if f.params.is_empty() {
        (0..model.n_params()).collect()
    } else {
        f.params.iter().map(|p| cfg.index_of(p)).collect::<CliResult<_>>()?
    };
    let fm = estimate_fisher(model, &theta, &params, cfg.horizon, cfg.dt, f.n_traj, cfg.seed, cfg.kind)?;
    let mut t = dir.csv("fisher.csv", &header(&["row", "col", "value", "std_err"]))?;
    for i in 0..fm.dim() {
        for j in 0..fm.dim() {
            t.fields([
                fm.names[i].clone(),
                fm.names[j].clone(),
                num(fm.values[i][j]),
                num(fm.std_err[i][j]),
            ])?;
        }
    }
    let path = t.finish()?;
    for i in 0..fm.dim() {
        let row: Vec<String> = fm.values[i].iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{}: [{}]", fm.names[i], row.join(", ")).map_err(io)?;
    }
    writeln!(out, "{} trajectories -> {}", fm.n_traj, path.display()).map_err(io)?;
    Ok(())
}

/// `(λ, S, SE)` at one parameter point; the reference rate is the stationary
/// rate unless `lambda` is configured. A point that never clicks has `S = 0`.
fn entropy_point(cfg: &RunConfig, model: &dyn ParametricModel, theta: &[f64], n_traj: usize, seed: u64) -> CliResult<[f64; 3]> {
    model.check_domain(theta)?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => stationary_rate(cfg.model, theta)?,
    };
    if lambda == 0.0 {
        return Ok([0.0, 0.0, 0.0]);
    }
    let est = relative_entropy(model, theta, ReferenceRate::new(lambda)?, cfg.horizon, cfg.dt, n_traj, seed)?;
    Ok([lambda, est.mean, est.std_err])
}

pub fn entropy(cfg: &RunConfig, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let e = cfg
        .entropy
        .as_ref()
        .ok_or_else(|| CliError::Config("entropy needs an [entropy] section".into()))?;
    if cfg.kind != MeasurementKind::Jump {
        return Err(CliError::Config("relative entropy is computed for photon counting (kind = \"jump\")".into()));
    }
    let model = cfg.build_model();
    let model = model.as_dyn();
    let theta = cfg.full_theta()?;
    if let Some(g) = &e.grid {
        let (ix, iy, xs, ys) = plane_axes(cfg, g)?;
        let mut t = dir.csv(
            "entropy_grid.csv",
            &header(&[g.x.as_str(), g.y.as_str(), "lambda", "entropy", "std_err"]),
        )?;
        let mut idx = 0u64;
        for &x in &xs {
            for &y in &ys {
                let mut th = theta.clone();
                th[ix] = x;
                th[iy] = y;
                let [l, s, se] = entropy_point(cfg, model, &th, e.n_traj, cfg.seed.wrapping_add(idx))?;
                t.row(&[x, y, l, s, se])?;
                idx += 1;
            }
        }
        writeln!(out, "{idx} grid points -> {}", t.finish()?.display()).map_err(io)?;
        return Ok(());
    }
    let [l, s, se] = entropy_point(cfg, model, &theta, e.n_traj, cfg.seed)?;
    let mut t = dir.csv("entropy.csv", &header(&["lambda", "entropy", "std_err"]))?;
    t.row(&[l, s, se])?;
    writeln!(out, "entropy {} +- {} (lambda {}) -> {}", num(s), num(se), num(l), t.finish()?.display()).map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bimodal_rate_with_identical_configurations() {
        let theta = [1.3, 1.43, 0.55, 1.3, 1.43, 0.55, 0.1, 0.3];
        let want = stationary_emission_rate(1.3, 1.43, 0.55).unwrap();
        assert!((stationary_rate(ModelKind::Bimodal, &theta).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn reduced_state_of_product() {
        let m = ComplexMatrix::from_fn(4, |i, j| if i == j { (if i < 2 { 0.35 } else { 0.15 }).into() } else { 0.0.into() });
        let r = atomic_state(&DensityMatrix::new(m).unwrap()).unwrap();
        assert!((r.matrix()[(0, 0)].re - 0.7).abs() < 1e-15);
    }

    #[test]
    fn expected_counts_follow_path() {
        let theta = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.1, 0.1];
        let path = [(0.0, 0usize), (1.5, 1)];
        let e = expected_counts(ModelKind::Bimodal, &theta, Some(&path), 3.0, 1.0, 3).unwrap();
        let ra = stationary_emission_rate(1.0, 0.0, 1.0).unwrap();
        assert!((e[0] - ra).abs() < 1e-15 && (e[1] - 0.5 * ra).abs() < 1e-15 && e[2] == 0.0);
    }
}
