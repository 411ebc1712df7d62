//! Command-line surface: `simulate`, `fit`, `pvalue`, `render`, `dimsweep`, `rank`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::estimators::{parameter_count, Estimator, FitOptions, FitResult};
use crate::inference::{pvalue_map, u_ols};
use crate::io::{
    fmt_f64, fmt_opt, parse_list, read_pgm_mask, read_tensor, write_pgm, write_tensor,
    DatasetManifest, GrayImage, KeyValues, ScenarioFile,
};
use crate::simgen::{self, numerical_rank, replicate, run_replications, ShapeKind, DEFAULT_RANK_TOL};
use crate::tensor::{Matrix, Tensor};

#[derive(Debug, Parser)]
#[command(name = "tenv", version, about = "Tensor response regression with envelope estimators")]
pub struct Cli {
    /// Worker threads for replication runs.
    #[arg(long, global = true, env = "TENV_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EstimatorFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Random starts per basis update.
    #[arg(long)]
    pub starts: Option<usize>,
}

impl EstimatorFlags {
    fn apply(&self, mut opts: FitOptions) -> FitOptions {
        if let Some(s) = self.seed {
            opts.seed = s;
        }
        if let Some(t) = self.tol {
            opts.tol = t;
        }
        if let Some(m) = self.max_iter {
            opts.max_iter = m;
        }
        if let Some(s) = self.starts {
            opts.random_starts = s;
        }
        opts
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario, run its replications and write data, truth and error tables.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: EstimatorFlags,
    },
    /// Fit one estimator to a dataset manifest.
    Fit {
        manifest: PathBuf,
        /// Envelope dimensions, comma separated; defaults to the full response dims.
        #[arg(long)]
        u: Option<String>,
        #[arg(long, default_value = "env-iterative")]
        estimator: Estimator,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: EstimatorFlags,
    },
    /// Entrywise p-values, raw and BH masks and mask renders for a fit.
    Pvalue {
        fit_dir: PathBuf,
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// BH level; defaults to `--alpha`.
        #[arg(long)]
        fdr: Option<f64>,
        /// Output directory; defaults to the fit directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a two-dimensional slice of a TensorFile as an 8-bit PGM.
    Render {
        tensor: PathBuf,
        /// One entry per mode: `:` keeps a mode, an index fixes it, e.g. `:,:,0`.
        #[arg(long)]
        slice: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Treat nonzero entries as flags: black where set, white elsewhere.
        #[arg(long)]
        mask: bool,
    },
    /// Fit over a list of envelope dimensions and tabulate the results.
    Dimsweep {
        manifest: PathBuf,
        /// Comma list; `5` applies to every mode, `2x3` sets modes separately.
        #[arg(long)]
        u: String,
        #[arg(long, default_value = "env-iterative")]
        estimator: Estimator,
        /// True coefficients for the error column.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: EstimatorFlags,
    },
    /// Numerical rank of a PGM mask or a built-in shape such as `disk:64`.
    Rank {
        mask: String,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        tol: f64,
    },
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(msg) => {
            if !msg.is_empty() {
                print!("{msg}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Simulate { scenario, out, flags } => cmd_simulate(scenario, out, flags, cli.threads),
        Command::Fit {
            manifest,
            u,
            estimator,
            out,
            flags,
        } => cmd_fit(manifest, u.as_deref(), *estimator, out, flags),
        Command::Pvalue {
            fit_dir,
            manifest,
            alpha,
            fdr,
            out,
        } => cmd_pvalue(fit_dir, manifest, *alpha, fdr.unwrap_or(*alpha), out.as_deref()),
        Command::Render {
            tensor,
            slice,
            out,
            mask,
        } => cmd_render(tensor, slice.as_deref(), out, *mask),
        Command::Dimsweep {
            manifest,
            u,
            estimator,
            reference,
            out,
            flags,
        } => cmd_dimsweep(manifest, u, *estimator, reference.as_deref(), out, flags),
        Command::Rank { mask, tol } => cmd_rank(mask, *tol),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

fn join_usize(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn write_factors(dir: &Path, prefix: &str, mats: &[Matrix]) -> Result<()> {
    for (k, m) in mats.iter().enumerate() {
        write_tensor(dir.join(format!("{prefix}_{}.tenv", k + 1)), &Tensor::from_matrix(m))?;
    }
    Ok(())
}

pub fn cmd_simulate(scenario: &Path, out: &Path, flags: &EstimatorFlags, threads: usize) -> Result<String> {
    let mut file = ScenarioFile::read(scenario)?;
    if let Some(seed) = flags.seed {
        file.config.seed = seed;
    }
    let fit = EstimatorFlags { seed: None, ..flags.clone() }.apply(file.fit.clone());
    let config = &file.config;
    let (data, truth) = replicate(config, 0)?;
    let summary = run_replications(config, &file.estimators, &fit, threads.max(1))?;

    create_dir(out)?;
    DatasetManifest::save_dataset(&data, out.join("dataset"))?;
    let truth_dir = out.join("truth");
    create_dir(&truth_dir)?;
    write_tensor(truth_dir.join("b.tenv"), &truth.b)?;
    write_factors(&truth_dir, "sigma", truth.cov.factors())?;
    write_factors(&truth_dir, "gamma", truth.basis.gammas())?;
    let mut info = String::new();
    writeln!(info, "noise_scale = {}", fmt_f64(truth.sigma)).ok();
    writeln!(info, "tau = {}", fmt_f64(truth.cov.tau())).ok();
    writeln!(info, "u = {}", join_usize(&truth.basis.dims())).ok();
    let ranks: Vec<usize> = (0..truth.b.order() - 1)
        .map(|k| truth.b.matricize(k).map(|m| numerical_rank(&m, DEFAULT_RANK_TOL)))
        .collect::<Result<_>>()?;
    writeln!(info, "mode_ranks = {}", join_usize(&ranks)).ok();
    if let Some(spec) = &config.shape {
        if let ShapeKind::Disk(r) = spec.kind {
            let radius = r.unwrap_or_else(|| simgen::default_disk_radius(spec.size));
            writeln!(info, "disk_radius = {}", fmt_f64(radius)).ok();
        }
    }
    write_text(&truth_dir.join("truth.txt"), &info)?;

    let mut reps = String::from("rep,estimator,error,seconds\n");
    for r in &summary.records {
        let secs = if file.record_timings { Some(r.seconds) } else { None };
        writeln!(reps, "{},{},{},{}", r.rep, r.estimator.name(), fmt_opt(r.error), fmt_opt(secs)).ok();
    }
    write_text(&out.join("replications.csv"), &reps)?;

    let mut table = String::from("estimator,n,reps,mean,std_error,failures\n");
    for s in &summary.summaries {
        let mean = (s.successes > 0).then_some(s.mean);
        writeln!(
            table,
            "{},{},{},{},{},{}",
            s.estimator.name(),
            config.n,
            config.reps,
            fmt_opt(mean),
            fmt_opt(s.std_error),
            s.failures
        )
        .ok();
    }
    write_text(&out.join("summary.csv"), &table)?;
    Ok(table)
}

fn resolve_u(spec: Option<&str>, dims: &[usize]) -> Result<Vec<usize>> {
    match spec {
        None => Ok(dims.to_vec()),
        Some(s) => parse_list(s),
    }
}

fn diagnostics(estimator: Estimator, u: &[usize], fit: &FitResult, p: usize) -> Result<String> {
    let dims = fit.cov.dims();
    let counts = parameter_count(&dims, u, p)?;
    let mut d = String::new();
    writeln!(d, "estimator = {}", estimator.name()).ok();
    writeln!(d, "dims = {}", join_usize(&dims)).ok();
    writeln!(d, "u = {}", join_usize(u)).ok();
    writeln!(d, "p = {p}").ok();
    writeln!(d, "tau = {}", fmt_f64(fit.cov.tau())).ok();
    writeln!(d, "iterations = {}", fit.iterations).ok();
    writeln!(d, "converged = {}", fit.converged).ok();
    writeln!(d, "objective_trace = {}", join_f64(&fit.objective_trace)).ok();
    writeln!(d, "params_full = {}", counts.full).ok();
    writeln!(d, "params_envelope = {}", counts.envelope).ok();
    writeln!(d, "params_saved = {}", counts.saved).ok();
    Ok(d)
}

pub fn cmd_fit(
    manifest: &Path,
    u: Option<&str>,
    estimator: Estimator,
    out: &Path,
    flags: &EstimatorFlags,
) -> Result<String> {
    let data = DatasetManifest::read(manifest)?.load()?;
    let u = resolve_u(u, data.response_dims())?;
    let opts = flags.apply(FitOptions::default());
    let fit = estimator.fit(&data, &u, &opts)?;
    let diag = diagnostics(estimator, &u, &fit, data.p())?;

    create_dir(out)?;
    write_tensor(out.join("b.tenv"), &fit.b)?;
    write_factors(out, "sigma", fit.cov.factors())?;
    if let Some(model) = &fit.model {
        write_factors(out, "gamma", model.basis.gammas())?;
    }
    write_text(&out.join("diagnostics.txt"), &diag)?;
    Ok(diag)
}

/// Reads the coefficient tensor and covariance written by `fit`.
pub fn load_fit(dir: &Path) -> Result<(Tensor, SeparableCovariance)> {
    let b = read_tensor(dir.join("b.tenv"))?;
    let diag = KeyValues::read(dir.join("diagnostics.txt"))?;
    let tau: f64 = diag.require("tau")?;
    let factors = (1..b.order())
        .map(|k| read_tensor(dir.join(format!("sigma_{k}.tenv")))?.to_matrix())
        .collect::<Result<Vec<_>>>()?;
    Ok((b, SeparableCovariance::new(factors, tau)?))
}

/// Order-2 slice of `t` along the last mode.
fn predictor_slice(t: &Tensor, l: usize) -> Result<Matrix> {
    t.last_mode_slice(l).to_matrix()
}

pub fn cmd_pvalue(fit_dir: &Path, manifest: &Path, alpha: f64, q: f64, out: Option<&Path>) -> Result<String> {
    let (b, cov) = load_fit(fit_dir)?;
    let data = DatasetManifest::read(manifest)?.load()?;
    let ucov = u_ols(&data.predictor_covariance()?, &cov)?;
    let map = pvalue_map(&b, &ucov, data.n())?;
    let raw = map.threshold(alpha)?;
    let bh = map.bh(q)?;

    let out = out.unwrap_or(fit_dir);
    create_dir(out)?;
    write_tensor(out.join("pvalues.tenv"), &map.pvalues)?;
    write_tensor(out.join("zscores.tenv"), &map.z)?;
    write_tensor(out.join("mask_raw.tenv"), &raw)?;
    write_tensor(out.join("mask_bh.tenv"), &bh)?;
    if b.order() == 3 {
        for l in 0..data.p() {
            write_pgm(out.join(format!("mask_raw_{}.pgm", l + 1)), &GrayImage::from_mask(&predictor_slice(&raw, l)?))?;
            write_pgm(out.join(format!("mask_bh_{}.pgm", l + 1)), &GrayImage::from_mask(&predictor_slice(&bh, l)?))?;
        }
    }
    let count = |t: &Tensor| t.data().iter().filter(|&&v| v != 0.0).count();
    Ok(format!(
        "entries = {}\nraw_significant = {}\nbh_significant = {}\n",
        map.pvalues.len(),
        count(&raw),
        count(&bh)
    ))
}

/// Extracts the two free modes of `spec` (e.g. `:,:,3`) as a matrix.
pub fn slice_matrix(t: &Tensor, spec: Option<&str>) -> Result<Matrix> {
    let default: String;
    let spec = match spec {
        Some(s) => s,
        None if t.order() == 2 => {
            default = ":,:".to_string();
            &default
        }
        None => return Err(Error::invalid(format!("a slice is required for an order-{} tensor", t.order()))),
    };
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != t.order() {
        return Err(Error::invalid(format!("slice {spec:?} has {} entries for order {}", parts.len(), t.order())));
    }
    let mut free = Vec::new();
    let mut fixed = vec![0usize; t.order()];
    for (k, p) in parts.iter().enumerate() {
        if *p == ":" {
            free.push(k);
        } else {
            let i: usize = p.parse().map_err(|_| Error::invalid(format!("bad slice entry {p:?}")))?;
            if i >= t.dims()[k] {
                return Err(Error::invalid(format!("index {i} out of range for mode {k} of size {}", t.dims()[k])));
            }
            fixed[k] = i;
        }
    }
    if free.len() != 2 {
        return Err(Error::invalid(format!("slice {spec:?} must keep exactly two modes")));
    }
    let (a, c) = (free[0], free[1]);
    Ok(Matrix::from_fn(t.dims()[a], t.dims()[c], |i, j| {
        let mut idx = fixed.clone();
        idx[a] = i;
        idx[c] = j;
        t.get(&idx)
    }))
}

pub fn cmd_render(tensor: &Path, slice: Option<&str>, out: &Path, mask: bool) -> Result<String> {
    let t = read_tensor(tensor)?;
    let m = slice_matrix(&t, slice)?;
    let img = if mask { GrayImage::from_mask(&m) } else { GrayImage::from_matrix(&m) };
    write_pgm(out, &img)?;
    Ok(String::new())
}

/// `5` applies to every mode; `2x3` gives one value per mode.
fn parse_u_list(spec: &str, m: usize) -> Result<Vec<Vec<usize>>> {
    spec.split(',')
        .map(|item| {
            let parts: Vec<usize> = item
                .trim()
                .split('x')
                .map(|v| v.trim().parse().map_err(|_| Error::invalid(format!("bad envelope dimension {item:?}"))))
                .collect::<Result<_>>()?;
            match parts.len() {
                1 => Ok(vec![parts[0]; m]),
                len if len == m => Ok(parts),
                len => Err(Error::invalid(format!("{item:?} has {len} dims for {m} modes"))),
            }
        })
        .collect()
}

pub fn cmd_dimsweep(
    manifest: &Path,
    u_spec: &str,
    estimator: Estimator,
    reference: Option<&Path>,
    out: &Path,
    flags: &EstimatorFlags,
) -> Result<String> {
    let data = DatasetManifest::read(manifest)?.load()?;
    let reference = reference.map(read_tensor).transpose()?;
    let dims = data.response_dims().to_vec();
    let grid = parse_u_list(u_spec, dims.len())?;
    let opts = flags.apply(FitOptions::default());
    let mut csv = String::from("u,status,objective,error,iterations,params_full,params_envelope\n");
    for u in &grid {
        let label = u.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
        let (full, env) = match parameter_count(&dims, u, data.p()) {
            Ok(c) => (c.full.to_string(), c.envelope.to_string()),
            Err(_) => ("NA".into(), "NA".into()),
        };
        match estimator.fit(&data, u, &opts) {
            Ok(fit) => {
                let error = match &reference {
                    Some(b) => Some(simgen::error_metric(&fit.b, b)?),
                    None => None,
                };
                writeln!(
                    csv,
                    "{label},ok,{},{},{},{full},{env}",
                    fmt_opt(fit.objective_trace.last().copied()),
                    fmt_opt(error),
                    fit.iterations
                )
                .ok();
            }
            Err(e) => {
                let status = format!("failed: {e}").replace(',', ";");
                writeln!(csv, "{label},{status},NA,NA,NA,{full},{env}").ok();
            }
        }
    }
    write_text(out, &csv)?;
    Ok(csv)
}

pub fn cmd_rank(mask: &str, tol: f64) -> Result<String> {
    let m = match mask.split_once(':') {
        Some((kind, size)) if ["square", "cross", "disk"].contains(&kind) => {
            let size: usize = size.parse().map_err(|_| Error::invalid(format!("bad shape size {size:?}")))?;
            simgen::make_shape(&simgen::ShapeSpec::new(kind.parse()?, size))?
        }
        _ => read_pgm_mask(mask)?,
    };
    Ok(format!("{}\n", numerical_rank(&m, tol)))
}
