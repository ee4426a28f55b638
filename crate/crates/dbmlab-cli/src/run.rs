//! Replica orchestration, persistence and aggregation.

use crate::config::{ExperimentConfig, Kind, PotentialSpec};
use crate::CliError;
use dbmlab::dbm::{matrix_marginal, sample_gbe_eigs, simulate_flow, Record};
use dbmlab::homogenization::{homogenization_replica, plan_homogenization, HomogParams, HomogPlan};
use dbmlab::meso_stats::{
    beta_variance_and_shift, gaussian_weight, linear_statistic, mean_correction, variance_functional, Centering,
    CltReport, Equilibrium, TestFunction,
};
use dbmlab::rng::label_hash;
use dbmlab::spectral_stats::{gap_statistics, ks_one_sample, ks_two_sample, wigner_surmise_cdf};
use dbmlab::{FcModel, FlowSpec, NoiseSource, Potential};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const REPLICA_FILE: &str = "replicas.csv";
pub const SUMMARY_FILE: &str = "summary.json";
/// Wall-clock data lives apart from the reproducible outputs.
pub const TIMING_FILE: &str = "timing.json";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvStamp {
    pub version: String,
    pub build: String,
}

impl EnvStamp {
    pub fn current() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            build: option_env!("DBMLAB_BUILD_ID").unwrap_or("dev").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaOutput {
    pub replica: u64,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub kind: Kind,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub env: EnvStamp,
    pub metrics: BTreeMap<String, f64>,
    pub threshold: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config_hash: String,
    pub columns: Vec<&'static str>,
    pub outputs: Vec<ReplicaOutput>,
    pub summary: Summary,
    /// Seconds per stage.
    pub timing: BTreeMap<String, f64>,
}

/// Shared, noise-independent state of a run.
pub enum Prepared {
    Freeconv { model: FcModel },
    Simulate { pot: Potential, t: f64, dt: f64 },
    Homog { plan: Box<HomogPlan> },
    Meso { pot: Potential, t: f64, phi: TestFunction, centering: Centering, variance: f64, mean: f64 },
    Gaps { pot: Potential, t: f64, center: usize, half: usize, rho: Vec<f64> },
    Beta { beta: f64, phi: TestFunction, centering: Centering, variance: f64, shift: f64 },
}

fn lab<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Lab(e.to_string())
}

fn time_t(cfg: &ExperimentConfig) -> f64 {
    cfg.times.t.unwrap_or(1.0)
}

/// Validate and build the shared state.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let bad = cfg.validate();
    if !bad.is_empty() {
        return Err(CliError::Invalid(bad));
    }
    let n = cfg.n;
    let pot = cfg.potential.build(n)?;
    Ok(match cfg.kind {
        Kind::Freeconv => Prepared::Freeconv {
            model: FcModel::new(pot, time_t(cfg)).map_err(lab)?,
        },
        Kind::Simulate => Prepared::Simulate {
            pot,
            t: time_t(cfg),
            dt: cfg.times.dt.unwrap_or(1e-3),
        },
        Kind::Homog => {
            let mut p = HomogParams::new(cfg.times.omega0.unwrap_or(0.0), cfg.times.omega1.unwrap_or(0.0));
            p.eps_b = cfg.times.eps_b;
            p.dt = cfg.times.dt;
            Prepared::Homog {
                plan: Box::new(plan_homogenization(&pot, &p).map_err(lab)?),
            }
        }
        Kind::Meso => {
            let t = time_t(cfg);
            let model = FcModel::new(pot.clone(), t).map_err(lab)?;
            let phi = match &cfg.stats.test_function {
                Some(s) => TestFunction::single(s.clone()),
                None => {
                    let nf = n as f64;
                    let w = nf.powf(cfg.stats.alpha.unwrap_or(0.5)) / nf;
                    TestFunction::gaussian(model.quantile(0.5).map_err(lab)?, w)
                }
            };
            let centering = Centering::new(&model, &phi).map_err(lab)?;
            let variance = variance_functional(&phi, None).map_err(lab)?.double_form;
            let mean = mean_correction(&model, &phi).map_err(lab)?;
            Prepared::Meso {
                pot,
                t,
                phi,
                centering,
                variance,
                mean,
            }
        }
        Kind::Gaps => {
            let t = time_t(cfg);
            let model = FcModel::new(pot.clone(), t).map_err(lab)?;
            let half = cfg.stats.half_window.unwrap_or(10);
            let center = n / 2;
            let rho = (center - half..=center + half)
                .map(|i| {
                    let g = model.quantile((i as f64 + 0.5) / n as f64)?;
                    model.density(g)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(lab)?;
            Prepared::Gaps {
                pot,
                t,
                center,
                half,
                rho,
            }
        }
        Kind::Beta => {
            let beta = cfg.stats.beta.unwrap_or(1.0);
            let phi = TestFunction::single(cfg.stats.test_function.clone().expect("validated"));
            let model = FcModel::new(pot, 1.0).map_err(lab)?;
            let centering = Centering::new(&model, &phi).map_err(lab)?;
            let eq = Equilibrium {
                a: -2.0,
                b: 2.0,
                weight: &gaussian_weight,
            };
            let (variance, shift) = beta_variance_and_shift(&phi, &eq, beta).map_err(lab)?;
            Prepared::Beta {
                beta,
                phi,
                centering,
                variance,
                shift,
            }
        }
    })
}

/// Column names of the per-replica table (after `replica`).
pub fn columns(kind: Kind) -> Vec<&'static str> {
    match kind {
        Kind::Freeconv => vec!["index", "gamma", "density", "cdf"],
        Kind::Simulate => vec!["index", "flow", "matrix"],
        Kind::Homog => vec!["offset", "residual", "scaled_max"],
        Kind::Meso | Kind::Beta => vec!["statistic"],
        Kind::Gaps => vec!["index", "gap"],
    }
}

fn noise_for(cfg: &ExperimentConfig, replica: u64) -> NoiseSource {
    NoiseSource::new(cfg.seed)
        .experiment(label_hash(cfg.kind.name()))
        .replica(replica)
}

fn sample_eigs(pot: &Potential, t: f64, noise: &NoiseSource) -> Result<Vec<f64>, CliError> {
    if pot.values().iter().all(|&v| v == 0.0) {
        // V ≡ 0: √t times a GOE, sampled from the tridiagonal model
        let st = t.sqrt();
        let mut e = sample_gbe_eigs(pot.n(), 1.0, noise).map_err(lab)?;
        e.iter_mut().for_each(|x| *x *= st);
        return Ok(e);
    }
    matrix_marginal(pot, t, noise).map_err(lab)
}

/// One replica's rows. Depends only on (config, replica id).
pub fn run_replica(cfg: &ExperimentConfig, prep: &Prepared, replica: u64) -> Result<ReplicaOutput, CliError> {
    let noise = noise_for(cfg, replica);
    let rows = match prep {
        Prepared::Freeconv { model } => {
            let n = cfg.n;
            let levels: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            let g = model.quantiles_at(&levels).map_err(lab)?;
            g.iter()
                .enumerate()
                .map(|(i, &x)| Ok(vec![i as f64, x, model.density(x)?, model.cdf(x)?]))
                .collect::<Result<Vec<_>, dbmlab::FcError>>()
                .map_err(lab)?
        }
        Prepared::Simulate { pot, t, dt } => {
            let flow = simulate_flow(pot.values(), &FlowSpec::dbm(), (0.0, *t), *dt, &noise, &Record::Final).map_err(lab)?;
            let m = matrix_marginal(pot, *t, &noise.experiment(noise.experiment ^ 1)).map_err(lab)?;
            flow.final_state()
                .iter()
                .zip(&m)
                .enumerate()
                .map(|(i, (a, b))| vec![i as f64, *a, *b])
                .collect()
        }
        Prepared::Homog { plan } => {
            let r = homogenization_replica(plan, &noise).map_err(lab)?;
            r.indices
                .iter()
                .zip(&r.residuals)
                .map(|(&i, &v)| vec![i as f64, v, r.scaled_max])
                .collect()
        }
        Prepared::Meso {
            pot, t, phi, centering, ..
        } => {
            let e = sample_eigs(pot, *t, &noise)?;
            vec![vec![linear_statistic(&e, phi, centering)]]
        }
        Prepared::Gaps {
            pot,
            t,
            center,
            half,
            rho,
        } => {
            let e = sample_eigs(pot, *t, &noise)?;
            let lo = center - half;
            let g = gap_statistics(&e, *center, *half, &|i| rho[i - lo]).map_err(lab)?;
            g.iter()
                .enumerate()
                .map(|(k, &v)| vec![(lo + k) as f64, v])
                .collect()
        }
        Prepared::Beta {
            beta, phi, centering, ..
        } => {
            let e = sample_gbe_eigs(cfg.n, *beta, &noise).map_err(lab)?;
            vec![vec![linear_statistic(&e, phi, centering)]]
        }
    };
    Ok(ReplicaOutput { replica, rows })
}

fn summarize(cfg: &ExperimentConfig, prep: &Prepared, outputs: &[ReplicaOutput]) -> Result<(BTreeMap<String, f64>, Option<f64>, bool), CliError> {
    let mut m = BTreeMap::new();
    let col = |k: usize| -> Vec<f64> { outputs.iter().flat_map(|o| o.rows.iter().map(move |r| r[k])).collect() };
    let threshold = cfg.stats.threshold;
    let pass = match prep {
        Prepared::Freeconv { .. } => {
            let n = cfg.n as f64;
            let err = outputs[0]
                .rows
                .iter()
                .map(|r| (r[3] - (r[0] + 0.5) / n).abs())
                .fold(0.0, f64::max);
            m.insert("quantile_roundtrip_max".into(), err);
            err <= threshold.unwrap_or(1e-8)
        }
        Prepared::Simulate { .. } => {
            let mid = cfg.n.div_ceil(2) - 1;
            let pick = |k: usize| -> Vec<f64> { outputs.iter().map(|o| o.rows[mid][k]).collect() };
            let ks = ks_two_sample(&pick(1), &pick(2));
            // default: 5% critical value of the two-sample KS statistic
            let critical = 1.358 * (2.0 / outputs.len() as f64).sqrt();
            m.insert("ks_center_eigenvalue".into(), ks);
            m.insert("ks_critical_5pct".into(), critical);
            ks <= threshold.unwrap_or(critical)
        }
        Prepared::Homog { .. } => {
            let mut s: Vec<f64> = outputs.iter().map(|o| o.rows.first().map_or(0.0, |r| r[2])).collect();
            s.sort_by(f64::total_cmp);
            let med = dbmlab::spectral_stats::quantile_sorted(&s, 0.5);
            m.insert("median_scaled_max".into(), med);
            m.insert("max_scaled_max".into(), *s.last().unwrap_or(&0.0));
            threshold.is_none_or(|t| med <= t)
        }
        Prepared::Meso { variance, mean, .. } => {
            let v = col(0);
            let lambdas: Vec<f64> = (0..=24).map(|k| -3.0 + 0.25 * k as f64).collect();
            let r = CltReport::new(v, &lambdas, *variance, *mean).map_err(lab)?;
            let dev = r.max_deviation();
            let tol = 3.0 * r.charfn.std_error + 0.05;
            let var_gap = (r.charfn.sample_variance / variance - 1.0).abs();
            m.insert("predicted_variance".into(), *variance);
            m.insert("predicted_mean".into(), *mean);
            m.insert("sample_variance".into(), r.charfn.sample_variance);
            m.insert("sample_mean".into(), r.charfn.sample_mean);
            m.insert("charfn_max_deviation".into(), dev);
            m.insert("charfn_tolerance".into(), tol);
            m.insert("variance_relative_gap".into(), var_gap);
            dev <= tol && var_gap <= threshold.unwrap_or(0.2)
        }
        Prepared::Gaps { .. } => {
            let g = col(1);
            let ks = ks_one_sample(&g, wigner_surmise_cdf);
            m.insert("ks_wigner_surmise".into(), ks);
            m.insert("mean_gap".into(), g.iter().sum::<f64>() / g.len() as f64);
            ks <= threshold.unwrap_or(0.06)
        }
        Prepared::Beta { variance, shift, .. } => {
            let v = col(0);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            m.insert("predicted_variance".into(), *variance);
            m.insert("predicted_shift".into(), *shift);
            m.insert("sample_variance".into(), var);
            m.insert("sample_mean".into(), mean);
            (var / variance - 1.0).abs() <= threshold.unwrap_or(0.2)
        }
    };
    Ok((m, threshold, pass))
}

/// Run every replica (in parallel) and persist the tables under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunRecord, CliError> {
    let mut timing = BTreeMap::new();
    let clock = Instant::now();
    let prep = prepare(cfg)?;
    timing.insert("prepare".to_string(), clock.elapsed().as_secs_f64());
    let replicas = if cfg.kind == Kind::Freeconv { 1 } else { cfg.replicas };
    let clock = Instant::now();
    let work = || {
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| run_replica(cfg, &prep, r))
            .collect::<Result<Vec<_>, _>>()
    };
    let outputs = match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(lab)?
            .install(work)?,
        None => work()?,
    };
    timing.insert("replicas".to_string(), clock.elapsed().as_secs_f64());
    let clock = Instant::now();
    let (metrics, threshold, pass) = summarize(cfg, &prep, &outputs)?;
    let hash = cfg.hash();
    let record = RunRecord {
        config_hash: hash.clone(),
        columns: columns(cfg.kind),
        outputs,
        summary: Summary {
            config_hash: hash,
            kind: cfg.kind,
            n: cfg.n,
            replicas,
            seed: cfg.seed,
            env: EnvStamp::current(),
            metrics,
            threshold,
            pass,
        },
        timing,
    };
    write_record(&record, cfg, out)?;
    let mut record = record;
    record.timing.insert("summary".to_string(), clock.elapsed().as_secs_f64());
    fs::write(out.join(TIMING_FILE), serde_json::to_string_pretty(&record.timing)?)?;
    Ok(record)
}

fn write_record(rec: &RunRecord, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let mut f = fs::File::create(out.join(REPLICA_FILE))?;
    writeln!(f, "# config_hash={}", rec.config_hash)?;
    {
        let mut w = csv::Writer::from_writer(&mut f);
        let mut header = vec!["replica"];
        header.extend(&rec.columns);
        w.write_record(&header)?;
        for o in &rec.outputs {
            for row in &o.rows {
                let mut fields = vec![o.replica.to_string()];
                fields.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&fields)?;
            }
        }
        w.flush()?;
    }
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&rec.summary)?)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

/// Rows of several replica tables that share one config hash.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub config_hash: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn read_hash(path: &Path) -> Result<String, CliError> {
    let mut line = String::new();
    BufReader::new(fs::File::open(path)?).read_line(&mut line)?;
    line.trim()
        .strip_prefix("# config_hash=")
        .map(str::to_string)
        .ok_or_else(|| CliError::Aggregate(format!("{} has no config hash header", path.display())))
}

/// Concatenate replica tables; tables from different configs are rejected.
pub fn aggregate(paths: &[PathBuf]) -> Result<Aggregate, CliError> {
    let mut out: Option<Aggregate> = None;
    for p in paths {
        let hash = read_hash(p)?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(p)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        match &mut out {
            None => {
                out = Some(Aggregate {
                    config_hash: hash,
                    header,
                    rows,
                })
            }
            Some(a) => {
                if a.config_hash != hash {
                    return Err(CliError::Aggregate(format!(
                        "mixed config hashes: {} vs {} ({})",
                        a.config_hash,
                        hash,
                        p.display()
                    )));
                }
                if a.header != header {
                    return Err(CliError::Aggregate(format!("column mismatch in {}", p.display())));
                }
                a.rows.extend(rows);
            }
        }
    }
    out.ok_or_else(|| CliError::Aggregate("no tables given".into()))
}

/// True for the reproducible outputs of a run directory (everything except timing).
pub fn is_reproducible_output(name: &str) -> bool {
    name != TIMING_FILE
}

/// Default constant potential check used by the `beta` kind.
pub fn is_gaussian_potential(spec: &PotentialSpec) -> bool {
    matches!(spec, PotentialSpec::Constant { value } if *value == 0.0)
}
