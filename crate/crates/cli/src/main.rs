//! `tcmocap` command-line interface.
//!
//! Exit status is 0 on success, 1 when a computation fails at run time and 2
//! for usage errors and invalid inputs.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcmocap::baselines::{ik_id_pipeline, marker_ik_series, orientation_ik_series, IkConfig, LowPass};
use tcmocap::estimator::run_filter;
use tcmocap::io::{
    load_filter_config, parse_model, read_measurements, read_orientations, write_estimates, ModelFile, NumericTable,
};
use tcmocap::sim::{
    builtin_model, mask_markers, run_experiment, simulate_experiment, with_zero_torque_rows, write_simulation,
    ExperimentSpec,
};
use tcmocap::{Error, EstimateSeries};

#[derive(Parser)]
#[command(
    name = "tcmocap",
    version,
    about = "Multibody motion capture: twin simulation, IEKF estimation and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report bundle.
    Run(ExperimentArgs),
    /// Write truth, measurement and filter-config files for an experiment.
    Simulate(ExperimentArgs),
    /// Filter a measurement file with the IEKF.
    Estimate(EstimateArgs),
    /// Per-frame inverse kinematics from markers or IMU orientations.
    Ik(IkArgs),
    /// Low-pass, differentiate and apply inverse dynamics to an angle series.
    Id(IdArgs),
    /// RMSD per shared column of two CSV files, matched by time.
    Rmsd(RmsdArgs),
    /// Estimate sensor noise from a static segment of a measurement file.
    CalibrateNoise(CalibrateArgs),
    /// Load a model file and report the first invalid field.
    ValidateModel(ValidateArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment file (TOML).
    spec: PathBuf,
    /// Overrides the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides a spec entry, e.g. `--set noise.sigma_gyro=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; defaults to the experiment's `output`, resolved next to
    /// the experiment file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Model file or the name of a shipped model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
    /// Filter configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Value of the `method` column.
    #[arg(long, default_value = "iekf")]
    method: String,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IkArgs {
    #[arg(long)]
    model: PathBuf,
    /// Measurement CSV; marker columns are used.
    #[arg(long, conflicts_with = "orientations", required_unless_present = "orientations")]
    measurements: Option<PathBuf>,
    /// IMU orientation CSV for orientation-based IK.
    #[arg(long)]
    orientations: Option<PathBuf>,
    /// Initial guess for the first frame, deg.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0_deg: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with `t_s` and `q1_deg`… columns.
    #[arg(long)]
    angles: PathBuf,
    /// Low-pass cutoff, Hz; 0 disables filtering.
    #[arg(long, default_value_t = 6.0)]
    cutoff: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RmsdArgs {
    a: PathBuf,
    b: PathBuf,
    /// Restrict to these columns.
    #[arg(long = "column")]
    columns: Vec<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    measurements: PathBuf,
    /// Segment start, s.
    #[arg(long)]
    from: f64,
    /// Segment end, s.
    #[arg(long)]
    to: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    model: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } => exit_code(source),
        Error::Evaluation { .. } | Error::Diverged { .. } | Error::Model(_) => 1,
        Error::Io { source, .. } if source.kind() != io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn open(path: &Path, what: &str) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Failure::usage(format!("{what} not found: {}", path.display())),
        _ => Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        },
    })
}

fn load_model(path: &Path) -> CliResult<ModelFile> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(parse_model(&text, path)?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let name = path.to_string_lossy();
            match builtin_model(&name) {
                Some(text) => Ok(parse_model(text, path)?),
                None => Err(Failure::usage(format!("model not found: {name}"))),
            }
        }
        Err(e) => Err(Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }),
    }
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut Vec<u8>) -> tcmocap::Result<()>) -> CliResult {
    let mut buf = Vec::new();
    write(&mut buf)?;
    match out {
        Some(path) => std::fs::write(path, buf).map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }),
        None => io::stdout().write_all(&buf).map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        }),
    }
}

fn load_spec(args: &ExperimentArgs) -> CliResult<ExperimentSpec> {
    if !args.spec.is_file() {
        return Err(Failure::usage(format!("spec not found: {}", args.spec.display())));
    }
    let mut overrides = Vec::new();
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    Ok(ExperimentSpec::load(&args.spec, &overrides)?)
}

fn spec_dir(args: &ExperimentArgs) -> PathBuf {
    args.spec
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn out_dir(args: &ExperimentArgs, spec: &ExperimentSpec) -> PathBuf {
    match (&args.out, &spec.output) {
        (Some(out), _) => out.clone(),
        (None, Some(out)) => spec_dir(args).join(out),
        (None, None) => spec_dir(args).join("out").join(&spec.name),
    }
}

fn cmd_run(args: &ExperimentArgs) -> CliResult {
    let spec = load_spec(args)?;
    let out = out_dir(args, &spec);
    let report = run_experiment(&spec, &spec_dir(args), &out)?;
    let table = std::fs::read_to_string(out.join("rmsd_table.txt")).unwrap_or_default();
    print!("{table}");
    eprintln!(
        "wrote {} ({} methods, {} samples)",
        out.display(),
        report.results.len(),
        report.truth.len()
    );
    Ok(())
}

fn cmd_simulate(args: &ExperimentArgs) -> CliResult {
    let spec = load_spec(args)?;
    let out = out_dir(args, &spec);
    let sim = simulate_experiment(&spec, &spec_dir(args))?;
    write_simulation(&spec, &sim, &out)?;
    eprintln!("wrote {} ({} samples)", out.display(), sim.truth.len());
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let physical = model.sensors.without_zero_torque();
    let filter = load_filter_config(&args.config, &model.model, &physical).map_err(|e| match e {
        Error::Io { ref source, .. } if source.kind() == io::ErrorKind::NotFound => {
            Failure::usage(format!("filter config not found: {}", args.config.display()))
        }
        other => other.into(),
    })?;
    let frames = read_measurements(open(&args.measurements, "measurement file")?, &physical)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.measurements.display())))?;
    let frames = if filter.use_markers {
        frames
    } else {
        mask_markers(&frames, &physical)
    };
    let frames = if filter.sensors.torque_joints.is_empty() {
        frames
    } else {
        with_zero_torque_rows(&frames, &filter.sensors)
    };
    let mut config = filter.config;
    if filter.t0_from_data {
        if let Some(f) = frames.first() {
            config.t0 = f.t;
        }
    }
    let run = run_filter(&model.model, &filter.sensors, &config, &frames)?;
    emit(args.out.as_deref(), |b| {
        write_estimates(b, &run.to_series(&args.method))
    })
}

fn write_angles(t: &[f64], q: &[tcmocap::nalgebra::DVector<f64>], method: &str) -> String {
    let dof = q.first().map_or(0, |v| v.len());
    let mut s = String::from("t_s");
    for j in 1..=dof {
        let _ = write!(s, ",q{j}_deg");
    }
    s.push_str(",method\n");
    for (ti, qi) in t.iter().zip(q) {
        let _ = write!(s, "{ti}");
        for v in qi.iter() {
            let _ = write!(s, ",{}", v.to_degrees());
        }
        let _ = writeln!(s, ",{method}");
    }
    s
}

fn cmd_ik(args: &IkArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let physical = model.sensors.without_zero_torque();
    let dof = model.model.dof();
    let q_init: Vec<f64> = match &args.q0_deg {
        Some(v) if v.len() == dof => v.iter().map(|d| d.to_radians()).collect(),
        Some(v) => {
            return Err(Failure::usage(format!(
                "--q0-deg has {} values, model has {dof} joints",
                v.len()
            )))
        }
        None => vec![0.0; dof],
    };
    let cfg = IkConfig {
        max_iters: args.max_iters,
        tol: args.tol,
        ..IkConfig::default()
    };
    let (t, series, method) = match (&args.measurements, &args.orientations) {
        (Some(path), _) => {
            let frames = read_measurements(open(path, "measurement file")?, &physical)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let t: Vec<f64> = frames.iter().map(|f| f.t).collect();
            (
                t,
                marker_ik_series(&model.model, &physical, &frames, &cfg, &q_init)?,
                "marker_ik",
            )
        }
        (None, Some(path)) => {
            let (t, frames) = read_orientations(open(path, "orientation file")?, &physical)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let s = orientation_ik_series(&model.model, &physical.imus, &frames, &cfg, &q_init)?;
            (t, s, "orientation_ik")
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    if !series.unconverged.is_empty() {
        eprintln!("warning: {} frames did not converge", series.unconverged.len());
    }
    if !series.rank_deficient.is_empty() {
        eprintln!("warning: {} frames are under-constrained", series.rank_deficient.len());
    }
    let text = write_angles(&t, &series.q, method);
    emit(args.out.as_deref(), |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })
}

fn uniform_dt(t: &[f64]) -> CliResult<f64> {
    if t.len() < 2 {
        return Err(Failure::usage("angle series needs at least two samples"));
    }
    let dt = t[1] - t[0];
    let uniform = dt > 0.0 && t.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
    if !uniform {
        return Err(Failure::usage("angle series must be uniformly sampled in t_s"));
    }
    Ok(dt)
}

fn cmd_id(args: &IdArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let table = NumericTable::read(open(&args.angles, "angle file")?)?;
    let t = table
        .column("t_s")
        .ok_or_else(|| Failure::usage("angle file has no `t_s` column"))?;
    let dof = model.model.dof();
    let mut cols = Vec::with_capacity(dof);
    for j in 1..=dof {
        let name = format!("q{j}_deg");
        cols.push(
            table
                .column(&name)
                .ok_or_else(|| Failure::usage(format!("angle file has no `{name}` column")))?,
        );
    }
    let q: Vec<_> = (0..t.len())
        .map(|i| tcmocap::nalgebra::DVector::from_iterator(dof, cols.iter().map(|c| c[i].to_radians())))
        .collect();
    let dt = uniform_dt(&t)?;
    let lowpass = (args.cutoff > 0.0).then_some(LowPass { cutoff: args.cutoff });
    let id = ik_id_pipeline(&model.model, &q, dt, lowpass.as_ref())?;
    let series = EstimateSeries {
        method: "ik_id".into(),
        t,
        q,
        qdot: id.qdot,
        tau: id.tau,
        variance: None,
    };
    emit(args.out.as_deref(), |b| write_estimates(b, &series))
}

/// Rows keyed by time; of several rows with the same time the last wins.
fn by_time(table: &NumericTable, path: &Path) -> CliResult<Vec<(f64, usize)>> {
    let t = table
        .column("t_s")
        .ok_or_else(|| Failure::usage(format!("{}: no `t_s` column", path.display())))?;
    let mut rows: Vec<(f64, usize)> = Vec::with_capacity(t.len());
    for (i, &ti) in t.iter().enumerate() {
        match rows.last_mut() {
            Some(last) if same_time(last.0, ti) => last.1 = i,
            _ => rows.push((ti, i)),
        }
    }
    Ok(rows)
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

fn cmd_rmsd(args: &RmsdArgs) -> CliResult {
    let a = NumericTable::read(open(&args.a, "file")?)?;
    let b = NumericTable::read(open(&args.b, "file")?)?;
    let (ra, rb) = (by_time(&a, &args.a)?, by_time(&b, &args.b)?);
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < ra.len() && j < rb.len() {
        if same_time(ra[i].0, rb[j].0) {
            pairs.push((ra[i].1, rb[j].1));
            i += 1;
            j += 1;
        } else if ra[i].0 < rb[j].0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    if pairs.is_empty() {
        return Err(Failure::usage("the two files share no sample times"));
    }
    let columns: Vec<&String> = if args.columns.is_empty() {
        a.headers
            .iter()
            .filter(|h| *h != "t_s" && b.headers.contains(h))
            .collect()
    } else {
        for c in &args.columns {
            if !a.headers.contains(c) || !b.headers.contains(c) {
                return Err(Failure::usage(format!("column `{c}` is not in both files")));
            }
        }
        args.columns.iter().collect()
    };
    if columns.is_empty() {
        return Err(Failure::usage("the two files share no data columns"));
    }
    let mut out = String::from("column,rmsd,samples\n");
    for c in columns {
        let (ca, cb) = (a.column(c).expect("checked"), b.column(c).expect("checked"));
        let xs: Vec<f64> = pairs.iter().map(|&(i, _)| ca[i]).collect();
        let ys: Vec<f64> = pairs.iter().map(|&(_, j)| cb[j]).collect();
        let value = tcmocap::sim::rmsd(&xs, &ys)?;
        let _ = writeln!(out, "{c},{value},{}", pairs.len());
    }
    print!("{out}");
    Ok(())
}

const MIN_CALIBRATION_SAMPLES: usize = 100;

fn cmd_calibrate(args: &CalibrateArgs) -> CliResult {
    let table = NumericTable::read(open(&args.measurements, "measurement file")?)?;
    let t = table
        .column("t_s")
        .ok_or_else(|| Failure::usage("measurement file has no `t_s` column"))?;
    let rows: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= args.from && t[i] <= args.to).collect();
    if rows.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Failure::usage(format!(
            "segment too short: {} samples in [{}, {}] s, need at least {MIN_CALIBRATION_SAMPLES}",
            rows.len(),
            args.from,
            args.to
        )));
    }
    let n = rows.len() as f64;
    let mut groups: [(&str, Vec<f64>); 3] = [("gyro", vec![]), ("accel", vec![]), ("marker", vec![])];
    let mut channels = String::new();
    for (c, name) in table.headers.iter().enumerate() {
        if name == "t_s" {
            continue;
        }
        let xs: Vec<f64> = rows.iter().map(|&i| table.rows[i][c]).collect();
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let g = if name.contains("_gyro_") {
            0
        } else if name.contains("_accel_") {
            1
        } else {
            2
        };
        groups[g].1.push(var);
        let _ = writeln!(channels, "# {name} = {}", var.sqrt());
    }
    let mut out = format!(
        "# noise calibrated over t in [{}, {}] s, {} samples\n",
        args.from,
        args.to,
        rows.len()
    );
    for (name, vars) in &groups {
        if !vars.is_empty() {
            let sigma = (vars.iter().sum::<f64>() / vars.len() as f64).sqrt();
            let _ = writeln!(out, "sigma_{name} = {sigma}");
        }
    }
    out.push_str("# per-channel sample standard deviations\n");
    out.push_str(&channels);
    emit(args.out.as_deref(), |b| {
        b.extend_from_slice(out.as_bytes());
        Ok(())
    })
}

fn cmd_validate(args: &ValidateArgs) -> CliResult {
    if !args.model.is_file() {
        return Err(Failure::usage(format!("model not found: {}", args.model.display())));
    }
    let m = load_model(&args.model)?;
    println!(
        "ok: {} bodies, {} joints, {} IMUs, {} markers",
        m.model.bodies().len(),
        m.model.dof(),
        m.sensors.imus.len(),
        m.sensors.markers.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Ik(a) => cmd_ik(a),
        Command::Id(a) => cmd_id(a),
        Command::Rmsd(a) => cmd_rmsd(a),
        Command::CalibrateNoise(a) => cmd_calibrate(a),
        Command::ValidateModel(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
