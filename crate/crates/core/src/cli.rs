//! Command-line front end: subcommand dispatch, CSV/SVG emission and run
//! manifests.
//!
//! Every run writes `manifest.json` next to its outputs. The manifest embeds
//! the effective configuration (after the seed override), any input files,
//! and the SHA-256 of every output, so `--replay manifest.json` can re-run
//! the job and check the outputs byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::coeffs::Coefficient;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::kernel::{default_quad, green_table, symbol_1d, StableIndex};
use crate::ldp::{estimate_tail, hoelder_norm, HoelderParams, Samples, TailRow, TailSpec, TailVerdict};
use crate::noise::{check_integrability, default_radii, SpectralMeasure, Verdict};
use crate::ratefn::{control_cost, rate_linear_oracle, rate_minimize, RateVerdict};
use crate::skeleton::{solve_skeleton, ControlPath};
use crate::solver::{Field, Solver, Trajectory};

/// Environment variable that overrides `time.seed`.
pub const SEED_ENV: &str = "STABLE_SPDE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "stable-spde",
    version,
    about = "Fractional stochastic heat equation laboratory",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    /// Re-run the job recorded in a manifest and compare its outputs.
    #[arg(long, value_name = "MANIFEST")]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the Green function of every axis.
    KernelTable(Common),
    /// Partial-integral trace of the integrability condition.
    CheckMeasure(Common),
    /// Simulate one replica of the mild solution.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Solve the skeleton equation for a control file.
    Skeleton {
        #[command(flatten)]
        common: Common,
        /// CSV with columns step, mode, re, im.
        #[arg(long)]
        control: PathBuf,
    },
    /// Minimise the rate function for a target snapshot file.
    Rate {
        #[command(flatten)]
        common: Common,
        /// Snapshot CSV in the format written by `simulate`.
        #[arg(long)]
        target: PathBuf,
    },
    /// Tail-probability table.
    Ldp {
        #[command(flatten)]
        common: Common,
        /// Also write an SVG plot.
        #[arg(long)]
        svg: bool,
    },
    /// Discrete Hölder norm of one simulated replica on the central window.
    Hoelder {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Run the built-in sanity checks.
    Selftest,
}

/// A reproducible unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Job {
    KernelTable,
    CheckMeasure,
    Simulate { replica: u64 },
    Skeleton { control: String },
    Rate { target: String },
    Ldp { svg: bool },
    Hoelder { replica: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    job: Job,
    config_sha256: String,
    seed: Option<u64>,
    config: Config,
    /// Output file name → SHA-256.
    outputs: BTreeMap<String, String>,
    summary: serde_json::Value,
}

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    summary: serde_json::Value,
}

/// Run the command line and return the process exit code: 0 on success, 2 for
/// invalid input, 3 for numerical failures, 1 for I/O problems.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        2
    } else if e.is_numeric() {
        3
    } else {
        1
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    if let Some(manifest) = cli.replay {
        return replay(&manifest);
    }
    let Some(command) = cli.command else {
        return Err(Error::Argument("a subcommand or --replay is required".into()));
    };
    let (common, job) = match command {
        Command::Selftest => return Ok(selftest()),
        Command::KernelTable(c) => (c, Job::KernelTable),
        Command::CheckMeasure(c) => (c, Job::CheckMeasure),
        Command::Simulate { common, replica } => (common, Job::Simulate { replica }),
        Command::Skeleton { common, control } => {
            let text = fs::read_to_string(&control)?;
            (common, Job::Skeleton { control: text })
        }
        Command::Rate { common, target } => {
            let text = fs::read_to_string(&target)?;
            (common, Job::Rate { target: text })
        }
        Command::Ldp { common, svg } => (common, Job::Ldp { svg }),
        Command::Hoelder { common, replica } => (common, Job::Hoelder { replica }),
    };
    let mut config = Config::from_json(&fs::read_to_string(&common.config)?)?;
    if let Ok(value) = std::env::var(SEED_ENV) {
        let seed = value
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Validation(format!("{SEED_ENV} must be an unsigned integer, got {value:?}")))?;
        if config.time.is_some() {
            config.set_seed(seed)?;
        }
    }
    let outputs = execute(&job, &config)?;
    write_outputs(&common.out, &job, &config, &outputs)?;
    println!("{}", serde_json::to_string(&outputs.summary)?);
    Ok(0)
}

fn write_outputs(dir: &Path, job: &Job, config: &Config, outputs: &Outputs) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut hashes = BTreeMap::new();
    for (name, bytes) in &outputs.files {
        fs::write(dir.join(name), bytes)?;
        hashes.insert(name.clone(), hex::encode(Sha256::digest(bytes)));
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        job: job.clone(),
        config_sha256: config.sha256(),
        seed: config.time.as_ref().map(|t| t.seed),
        config: config.clone(),
        outputs: hashes,
        summary: outputs.summary.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn replay(path: &Path) -> Result<i32> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.config.sha256() != manifest.config_sha256 {
        return Err(Error::Validation("manifest config does not match its recorded hash".into()));
    }
    let outputs = execute(&manifest.job, &manifest.config)?;
    let dir = path.parent().unwrap_or(Path::new(".")).join("replay");
    fs::create_dir_all(&dir)?;
    let mut mismatched = Vec::new();
    for (name, bytes) in &outputs.files {
        fs::write(dir.join(name), bytes)?;
        let hash = hex::encode(Sha256::digest(bytes));
        if manifest.outputs.get(name) != Some(&hash) {
            mismatched.push(name.clone());
        }
    }
    for name in manifest.outputs.keys() {
        if !outputs.files.iter().any(|(n, _)| n == name) {
            mismatched.push(name.clone());
        }
    }
    if mismatched.is_empty() {
        println!("replay: {} output file(s) identical", outputs.files.len());
        Ok(0)
    } else {
        eprintln!("replay: outputs differ: {}", mismatched.join(", "));
        Ok(3)
    }
}

fn execute(job: &Job, config: &Config) -> Result<Outputs> {
    match job {
        Job::KernelTable => kernel_table(config),
        Job::CheckMeasure => check_measure(config),
        Job::Simulate { replica } => {
            let (solver, outside) = build_solver(config)?;
            let traj = solver.simulate_path(None, *replica)?;
            Ok(Outputs {
                files: vec![("snapshots.csv".into(), snapshots_csv(solver.grid(), &traj)?)],
                summary: json!({
                    "outside_mass": outside,
                    "final_sup_norm": traj.final_field().sup_norm(),
                }),
            })
        }
        Job::Skeleton { control } => {
            let (solver, outside) = build_solver(config)?;
            let h = parse_control(&solver, control)?;
            let z = solve_skeleton(&solver, &h)?;
            Ok(Outputs {
                files: vec![("skeleton.csv".into(), snapshots_csv(solver.grid(), &z)?)],
                summary: json!({
                    "outside_mass": outside,
                    "control_cost": control_cost(&h),
                    "final_sup_norm": z.final_field().sup_norm(),
                }),
            })
        }
        Job::Rate { target } => rate(config, target),
        Job::Ldp { svg } => ldp(config, *svg),
        Job::Hoelder { replica } => {
            let params = *config.hoelder_params()?;
            let (solver, _) = build_solver(config)?;
            let traj = solver.simulate_path(None, *replica)?;
            let samples = Samples::from_trajectory(solver.grid(), &traj, &solver.grid().central_window());
            let norm = hoelder_norm(&samples, &params, solver.config().seed);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["beta1", "beta2", "norm"])?;
            w.write_record([num(params.beta1), num(params.beta2), num(norm)])?;
            Ok(Outputs {
                files: vec![("hoelder.csv".into(), finish(w)?)],
                summary: json!({ "hoelder_norm": norm }),
            })
        }
    }
}

fn build_solver(config: &Config) -> Result<(Solver, f64)> {
    let (cfg, outside) = config.sim_config()?;
    Ok((Solver::new(cfg)?, outside))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn kernel_table(config: &Config) -> Result<Outputs> {
    let idx = config.stable_index()?;
    let k = config.kernel_section();
    if k.points < 2 || !(k.x_max > k.x_min) || k.times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Validation(
            "kernel: need points ≥ 2, x_max > x_min and positive times".into(),
        ));
    }
    let xs: Vec<f64> = (0..k.points)
        .map(|i| k.x_min + (k.x_max - k.x_min) * i as f64 / (k.points - 1) as f64)
        .collect();
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (&a, &d) in idx.alpha().iter().zip(idx.delta()) {
        if !pairs.contains(&(a, d)) {
            pairs.push((a, d));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "delta", "t", "x", "G"])?;
    for &(a, d) in &pairs {
        for &t in &k.times {
            let g = green_table(a, d, t, &xs, default_quad())?;
            for (x, gv) in xs.iter().zip(g) {
                w.write_record([num(a), num(d), num(t), num(*x), num(gv)])?;
            }
        }
    }
    Ok(Outputs {
        files: vec![("kernel.csv".into(), finish(w)?)],
        summary: json!({ "axes": pairs.len(), "rows": pairs.len() * k.times.len() * xs.len() }),
    })
}

fn check_measure(config: &Config) -> Result<Outputs> {
    let idx = config.stable_index()?;
    let m = config.measure_section()?;
    let report = check_integrability(&m.spectral, &idx, m.eta, &default_radii())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["R", "partial_integral", "increment"])?;
    for (i, (r, p)) in report.radii.iter().zip(&report.partial).enumerate() {
        let inc = if i == 0 { *p } else { report.increments[i - 1] };
        w.write_record([num(*r), num(*p), num(inc)])?;
    }
    println!("verdict: {}", report.verdict);
    Ok(Outputs {
        files: vec![("measure.csv".into(), finish(w)?)],
        summary: json!({
            "verdict": report.verdict.to_string(),
            "partial_integral": report.partial.last(),
        }),
    })
}

/// `t, i0[, i1…], x0[, x1…], value` with one row per grid point and snapshot.
pub fn snapshots_csv(grid: &FrequencyGrid, traj: &Trajectory) -> Result<Vec<u8>> {
    let d = grid.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("i{i}")));
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("value".into());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for f in &traj.fields {
        for (p, v) in f.values.iter().enumerate() {
            let mut rec = vec![num(f.time)];
            let axes = grid.axis_indices(p);
            rec.extend(axes.iter().map(|a| a.to_string()));
            rec.extend(axes.iter().map(|&a| num(grid.coordinate(a))));
            rec.push(num(*v));
            w.write_record(&rec)?;
        }
    }
    finish(w)
}

/// Parse a snapshot CSV back into a trajectory laid out for `solver`.
pub fn parse_snapshots(solver: &Solver, text: &str) -> Result<Trajectory> {
    let grid = solver.grid();
    let d = grid.dim();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.len() != 2 * d + 2 {
        return Err(Error::Validation(format!(
            "snapshot file has {} columns, expected {}",
            headers.len(),
            2 * d + 2
        )));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad number {:?} in snapshot file", &rec[i])))
        };
        let t = parse(0)?;
        let axes = (0..d)
            .map(|i| {
                rec[1 + i]
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&a| a < grid.points_per_axis())
                    .ok_or_else(|| Error::Validation(format!("bad grid index {:?}", &rec[1 + i])))
            })
            .collect::<Result<Vec<_>>>()?;
        let v = parse(2 * d + 1)?;
        if times.last() != Some(&t) {
            times.push(t);
            values.push(vec![None; grid.len()]);
        }
        values.last_mut().unwrap()[grid.flat_index(&axes)] = Some(v);
    }
    let fields = times
        .iter()
        .zip(values)
        .map(|(&t, vals)| {
            let vals = vals
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Validation(format!("snapshot at t = {t} does not cover the grid")))?;
            Ok(Field::from_values(solver.transform(), vals, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { fields, stream: 0 })
}

/// `step, mode, re, im` rows; `mode` is the flat grid index.
pub fn control_csv(h: &ControlPath) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "mode", "re", "im"])?;
    for (step, row) in h.coeffs.iter().enumerate() {
        for (&k, c) in h.modes.iter().zip(row) {
            w.write_record([step.to_string(), k.to_string(), num(c.re), num(c.im)])?;
        }
    }
    finish(w)
}

pub fn parse_control(solver: &Solver, text: &str) -> Result<ControlPath> {
    let mut h = ControlPath::zeros_for(solver);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Validation("control rows need step, mode, re, im".into()));
        }
        let bad = |what: &str| Error::Validation(format!("bad {what} in control file: {:?}", rec.as_slice()));
        let step: usize = rec[0].trim().parse().map_err(|_| bad("step"))?;
        let mode: usize = rec[1].trim().parse().map_err(|_| bad("mode"))?;
        let re: f64 = rec[2].trim().parse().map_err(|_| bad("re"))?;
        let im: f64 = rec[3].trim().parse().map_err(|_| bad("im"))?;
        if step >= h.n_steps() {
            return Err(bad("step"));
        }
        match h.modes.binary_search(&mode) {
            Ok(i) => h.coeffs[step][i] = Complex64::new(re, im),
            Err(_) if re == 0.0 && im == 0.0 => {}
            Err(_) => {
                return Err(Error::Validation(format!(
                    "control acts on mode {mode}, which carries no noise"
                )))
            }
        }
    }
    let scale = h.coeffs.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm()));
    if h.hermitian_defect(solver.grid()) > 1e-12 * scale.max(1.0) {
        return Err(Error::Validation(
            "control is not Hermitian: h(-k) must equal conj h(k)".into(),
        ));
    }
    Ok(h)
}

fn rate(config: &Config, target: &str) -> Result<Outputs> {
    let (solver, _) = build_solver(config)?;
    let spec = config.rate_spec();
    let f = parse_snapshots(&solver, target)?;
    let result = rate_minimize(&solver, &f, &spec, None)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "cost", "residual", "objective", "iterations"])?;
    for s in &result.stages {
        w.write_record([num(s.lambda), num(s.cost), num(s.residual), num(s.objective), s.iterations.to_string()])?;
    }
    let cfg = solver.config();
    let oracle = if cfg.drift.is_identically_zero() && cfg.diffusion.as_constant().is_some() {
        match rate_linear_oracle(&solver, &f, spec.mode)? {
            RateVerdict::Finite { rate, .. } => json!(rate),
            RateVerdict::Infeasible { modes } => json!({ "infeasible_modes": modes }),
        }
    } else {
        serde_json::Value::Null
    };
    Ok(Outputs {
        files: vec![
            ("rate.csv".into(), finish(w)?),
            ("control.csv".into(), control_csv(&result.control)?),
        ],
        summary: json!({
            "estimate": result.estimate(),
            "gradient_error": result.gradient_error,
            "oracle": oracle,
        }),
    })
}

fn ldp(config: &Config, svg: bool) -> Result<Outputs> {
    let (solver, _) = build_solver(config)?;
    let spec: TailSpec = config.tail_spec()?.clone();
    let report = estimate_tail(&solver, &spec)?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "p_hat", "rate", "ci_low", "ci_high", "std_err", "hits", "verdict"])?;
    for r in &report.rows {
        let verdict = match r.verdict {
            TailVerdict::Exact => "exact",
            TailVerdict::Estimated => "estimated",
            TailVerdict::InsufficientSamples => "insufficient samples",
        };
        w.write_record([
            num(r.epsilon),
            opt(r.p_hat),
            opt(r.rate),
            num(r.ci.0),
            num(r.ci.1),
            num(r.std_err),
            r.hits.to_string(),
            verdict.to_string(),
        ])?;
    }
    let mut files = vec![("tail.csv".into(), finish(w)?)];
    if svg {
        files.push(("tail.svg".into(), tail_svg(&report.rows, report.oracle_rate).into_bytes()));
    }
    Ok(Outputs {
        files,
        summary: json!({ "oracle_rate": report.oracle_rate, "rows": report.rows }),
    })
}

/// `-ε log P̂` against `ε` (log axis) with the oracle rate as a reference line.
pub fn tail_svg(rows: &[TailRow], oracle: Option<f64>) -> String {
    let (width, height, pad) = (640.0, 400.0, 60.0);
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.rate.filter(|v| v.is_finite()).map(|v| (r.epsilon, v)))
        .collect();
    let ex: Vec<f64> = rows.iter().map(|r| r.epsilon.log10()).collect();
    let (xmin, xmax) = ex
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (xmin, xmax) = if xmax > xmin { (xmin, xmax) } else { (xmin - 1.0, xmin + 1.0) };
    let ymax = points
        .iter()
        .map(|p| p.1)
        .chain(oracle)
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.2;
    let sx = |e: f64| pad + (e.log10() - xmin) / (xmax - xmin) * (width - 2.0 * pad);
    let sy = |v: f64| height - pad - v / ymax * (height - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#,
        y = height - pad,
        x2 = width - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">ε (log scale)</text>"#,
        width / 2.0,
        height - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="14" transform="rotate(-90 15 {})">-ε log P</text>"#,
        height / 2.0,
        height / 2.0
    );
    if let Some(o) = oracle {
        let _ = writeln!(
            s,
            r#"<line x1="{pad}" y1="{y:.2}" x2="{x2}" y2="{y:.2}" stroke="red" stroke-dasharray="6 4"/><text x="{x2}" y="{ty:.2}" text-anchor="end" font-size="12" fill="red">oracle {o:.4}</text>"#,
            y = sy(o),
            x2 = width - pad,
            ty = sy(o) - 5.0
        );
    }
    if points.len() > 1 {
        let path: Vec<String> = points.iter().map(|&(e, v)| format!("{:.2},{:.2}", sx(e), sy(v))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#, path.join(" "));
    }
    for &(e, v) in &points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>ε={e} rate={v}</title></circle>"#,
            sx(e),
            sy(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Quick checks of identities that hold exactly; returns the exit code.
pub fn selftest() -> i32 {
    let checks: Vec<(&str, fn() -> Result<bool>)> = vec![
        ("symbol vanishes at the origin", || Ok(symbol_1d(1.5, 0.3, 0.0).norm() == 0.0)),
        ("alpha = 1 is rejected", || Ok(StableIndex::new(vec![1.0], vec![0.0]).is_err())),
        ("|delta| > min(alpha, 2 - alpha) is rejected", || {
            Ok(StableIndex::new(vec![1.5], vec![0.8]).is_err())
        }),
        ("zero control gives the zero skeleton", || {
            let s = selftest_solver(Coefficient::constant(1.0))?;
            let z = solve_skeleton(&s, &ControlPath::zeros_for(&s))?;
            Ok(z.fields.iter().all(|f| f.sup_norm() == 0.0))
        }),
        ("control cost scales quadratically", || {
            let s = selftest_solver(Coefficient::constant(1.0))?;
            let h = crate::ratefn::random_control(&s, 1.0, 1);
            let c = control_cost(&h);
            Ok((control_cost(&h.scaled(3.0)) - 9.0 * c).abs() <= 1e-12 * c)
        }),
        ("Hölder norm of a constant is its modulus", || {
            let s = Samples::from_fn(vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![0.5]], |_, _| -2.0);
            let p = HoelderParams {
                beta1: 0.2,
                beta2: 0.3,
                eta: 0.5,
                alpha0: 2.0,
            };
            Ok(hoelder_norm(&s, &p, 0) == 2.0)
        }),
        ("noiseless tails are exactly 0 or 1", || {
            let s = selftest_solver(Coefficient::ZERO)?;
            let mut ok = true;
            for (a, p) in [(0.5, 0.0), (0.0, 1.0)] {
                let spec = TailSpec {
                    threshold: a,
                    eps_list: vec![0.1],
                    n_replicas: 4,
                    importance: false,
                };
                ok &= estimate_tail(&s, &spec)?.rows[0].p_hat == Some(p);
            }
            Ok(ok)
        }),
        ("flat measure satisfies the integrability condition", || {
            let mu = SpectralMeasure::Flat {
                amplitude: 1.0,
                cutoff: 3.0,
            };
            let idx = StableIndex::new(vec![0.5], vec![0.0])?;
            Ok(check_integrability(&mu, &idx, 0.5, &default_radii())?.verdict == Verdict::Satisfied)
        }),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let ok = matches!(check(), Ok(true));
        println!("{} {name}", if ok { "ok    " } else { "FAILED" });
        failed += usize::from(!ok);
    }
    if failed == 0 {
        0
    } else {
        3
    }
}

fn selftest_solver(sigma: Coefficient) -> Result<Solver> {
    Solver::new(crate::solver::SimConfig {
        idx: StableIndex::new(vec![2.0], vec![0.0])?,
        grid: FrequencyGrid::new(1, std::f64::consts::PI, 16)?,
        measure: SpectralMeasure::White { amplitude: 1.0 },
        eta: 1.0,
        horizon: 0.5,
        n_steps: 8,
        save_every: 1,
        epsilon: 0.1,
        drift: Coefficient::ZERO,
        diffusion: sigma,
        seed: 1,
        allow_unverified_measure: false,
    })
}
