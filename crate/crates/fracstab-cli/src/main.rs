//! Command-line front end: load system specs, run stability certificates
//! and simulations, emit CSV/SVG/JSON artifacts, and replay the built-in
//! example. Exit codes: 0 ok/certified/converged, 1 failed condition or
//! diverged, 2 usage or input error, 3 numerical error. Diagnostics go to
//! stderr, data to stdout or the requested files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fracstab::model::{self, ClosedLoopSystem, SystemSpec};
use fracstab::sim::{self, Outcome, SimConfig, Trajectory};
use fracstab::specfun::{self, MLParams};
use fracstab::stability::{self, StabilityCertificate, Verdict};

#[derive(Parser)]
#[command(name = "fracstab", version, about = "Fractional-control stability toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify local asymptotic stabilizability of a system spec.
    Check(CheckArgs),
    /// Integrate a system spec and write the trajectory as CSV (and SVG).
    Simulate(SimulateArgs),
    /// Emit a built-in example spec document.
    Example(ExampleArgs),
    /// Evaluate the two-parameter Mittag-Leffler function.
    Mlf(MlfArgs),
    /// Re-run certificate and simulation across values of one spec scalar.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Path of the system spec document.
    spec: PathBuf,
    /// Supremum horizon for the certificate's kernel and transient bounds.
    #[arg(long, default_value_t = 40.0)]
    horizon: f64,
    /// Ball radius for the gain-ratio estimate.
    #[arg(long, default_value_t = 0.5)]
    ball: f64,
    /// Which margin reading to print on stdout.
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    mode: Mode,
    /// Write the certificate JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    Spectral,
    MaxEntry,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    /// Path of the system spec document.
    spec: PathBuf,
    /// Override the spec's horizon.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Override the spec's step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the spec's initial state (comma-separated).
    #[arg(long)]
    x0: Option<String>,
    /// Trajectory CSV output path.
    #[arg(long)]
    csv: PathBuf,
    /// Optional SVG line-plot output path.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ExampleArgs {
    /// Which catalog entry to emit.
    #[arg(long, value_enum)]
    variant: Variant,
    /// Write the spec document here instead of stdout.
    #[arg(long = "emit-spec")]
    emit_spec: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    OpenAsPrinted,
    ClosedAsPrinted,
    OpenPowerRuleExact,
    ClosedPowerRuleExact,
}

#[derive(Args)]
struct MlfArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    z: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Path of the system spec document.
    spec: PathBuf,
    /// Dot-separated path of a scalar inside the spec document.
    #[arg(long)]
    param: String,
    /// Comma-separated replacement values.
    #[arg(long)]
    values: String,
    /// Per-value certificate-plus-outcome CSV output path.
    #[arg(long)]
    csv: PathBuf,
}

/// Non-zero exits with their diagnostic.
enum Failure {
    /// A checked condition failed or a run diverged.
    Condition(String),
    /// Bad usage or malformed input.
    Usage(String),
    /// The numerics gave up.
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Condition(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Condition(m) | Failure::Usage(m) | Failure::Numerical(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Check(a) => cmd_check(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Example(a) => cmd_example(a),
        Cmd::Mlf(a) => cmd_mlf(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fracstab: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_spec_file(path: &PathBuf) -> Result<SystemSpec, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    model::load_spec(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn close(spec: SystemSpec) -> Result<ClosedLoopSystem, Failure> {
    model::close_loop(spec).map_err(|e| Failure::Usage(e.to_string()))
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Certificate JSON with the versioned report envelope.
fn report_json(cert: &StabilityCertificate) -> String {
    let mut v = serde_json::to_value(cert).expect("certificate serializes");
    v.as_object_mut()
        .expect("certificate is a JSON object")
        .insert("schema_version".into(), 1.into());
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_check(a: CheckArgs) -> Result<(), Failure> {
    let cls = close(load_spec_file(&a.spec)?)?;
    let cert = stability::certify(&cls, a.horizon, a.ball)
        .map_err(|e| Failure::Numerical(e.to_string()))?;
    let report = report_json(&cert);
    match &a.out {
        Some(path) => write_file(path, &report)?,
        None => print!("{report}"),
    }
    if a.mode != Mode::MaxEntry {
        println!(
            "spectral margin: omega {:.6e} vs M3 * norm {:.6e}",
            cert.omega,
            cert.m3 * cert.inv_norm_spectral
        );
    }
    if a.mode != Mode::Spectral {
        println!(
            "max-entry margin: omega {:.6e} vs M3 * entry {:.6e}",
            cert.omega,
            cert.m3 * cert.inv_norm_max_entry
        );
    }
    match cert.verdict {
        Verdict::CertifiedNumerically => {
            println!("verdict: certified_numerically");
            Ok(())
        }
        Verdict::Failed => Err(Failure::Condition(
            "verdict: failed (eigenvalue condition violated)".into(),
        )),
        Verdict::Inconclusive => Err(Failure::Condition(
            "verdict: inconclusive (margin not established at these estimates)".into(),
        )),
    }
}

/// Stride that keeps recorded rows near plotting scale.
fn plot_stride(t_end: f64, dt: f64) -> usize {
    let steps = (t_end / dt).round().max(1.0) as usize;
    steps.div_ceil(4000).max(1)
}

fn parse_x0(text: &str, n: usize) -> Result<Vec<f64>, Failure> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse()).collect();
    let x0 = parts.map_err(|e| Failure::Usage(format!("bad --x0 entry: {e}")))?;
    if x0.len() != n {
        return Err(Failure::Usage(format!(
            "--x0 has {} entries, the system needs {n}",
            x0.len()
        )));
    }
    Ok(x0)
}

/// Same system, replaced initial state.
fn with_x0(spec: &SystemSpec, x0: Vec<f64>) -> Result<SystemSpec, Failure> {
    SystemSpec::new(
        spec.n(),
        spec.a().clone(),
        spec.feedback_k().cloned(),
        spec.alpha1(),
        spec.alpha2(),
        spec.delay_kernel().clone(),
        spec.g().to_vec(),
        x0,
        spec.label().to_string(),
        spec.sim(),
    )
    .map_err(|e| Failure::Usage(e.to_string()))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut spec = load_spec_file(&a.spec)?;
    if let Some(text) = &a.x0 {
        let x0 = parse_x0(text, spec.n())?;
        spec = with_x0(&spec, x0)?;
    }
    let block = spec.sim();
    let t_end = a.t_end.unwrap_or(block.t_end);
    let dt = a.dt.unwrap_or(block.dt);
    let cfg = SimConfig {
        t_end,
        dt,
        divergence_cap: block.divergence_cap,
        record_stride: plot_stride(t_end, dt),
    };
    let cls = close(spec)?;
    let traj = match sim::integrate(&cls, &cfg) {
        Ok(traj) => traj,
        Err(sim::SimError::Config { what }) => return Err(Failure::Usage(what)),
        Err(e @ sim::SimError::Step { .. }) => {
            let sim::SimError::Step { partial, .. } = &e else { unreachable!() };
            write_file(&a.csv, &sim::trajectory_csv(partial))?;
            if let Some(svg) = &a.svg {
                write_file(svg, &svg_plot(partial))?;
            }
            return Err(Failure::Numerical(format!(
                "{e}; partial trajectory retained in {}",
                a.csv.display()
            )));
        }
    };
    write_file(&a.csv, &sim::trajectory_csv(&traj))?;
    if let Some(svg) = &a.svg {
        write_file(svg, &svg_plot(&traj))?;
    }
    let final_norm = traj.norm_track.last().copied().unwrap_or(0.0);
    let t_last = traj.times.last().copied().unwrap_or(0.0);
    match traj.outcome {
        Outcome::Diverged => Err(Failure::Condition(format!(
            "diverged: norm {final_norm:.6e} crossed the cap at t = {t_last:.6e}"
        ))),
        Outcome::Converged => {
            println!("converged: final norm {final_norm:.6e} at t = {t_last:.6e}");
            Ok(())
        }
        Outcome::Completed => {
            println!("completed: final norm {final_norm:.6e} at t = {t_last:.6e}");
            Ok(())
        }
    }
}

fn cmd_example(a: ExampleArgs) -> Result<(), Failure> {
    let (loop_form, gain_form) = match a.variant {
        Variant::OpenAsPrinted => (model::LoopForm::Open, model::GainForm::AsPrinted),
        Variant::ClosedAsPrinted => (model::LoopForm::Closed, model::GainForm::AsPrinted),
        Variant::OpenPowerRuleExact => (model::LoopForm::Open, model::GainForm::PowerRuleExact),
        Variant::ClosedPowerRuleExact => {
            (model::LoopForm::Closed, model::GainForm::PowerRuleExact)
        }
    };
    let doc = model::serialize_spec(&model::builtin_example(loop_form, gain_form));
    match &a.emit_spec {
        Some(path) => write_file(path, &doc)?,
        None => print!("{doc}"),
    }
    Ok(())
}

fn cmd_mlf(a: MlfArgs) -> Result<(), Failure> {
    let params =
        MLParams::new(a.alpha, a.beta).map_err(|e| Failure::Numerical(e.to_string()))?;
    let r = specfun::mittag_leffler(params, a.z)
        .map_err(|e| Failure::Numerical(e.to_string()))?;
    println!(
        "{:.15e} truncation_bound {:.3e} terms {}",
        r.value, r.truncation_bound, r.terms_used
    );
    Ok(())
}

/// Follows a dot-separated path of object keys and array indices to a
/// mutable JSON node.
fn lookup<'a>(
    doc: &'a mut serde_json::Value,
    path: &str,
) -> Result<&'a mut serde_json::Value, Failure> {
    let mut node = doc;
    for seg in path.split('.') {
        node = match node {
            serde_json::Value::Object(map) => map
                .get_mut(seg)
                .ok_or_else(|| Failure::Usage(format!("no key {seg:?} under --param {path}")))?,
            serde_json::Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    Failure::Usage(format!("index {seg:?} under --param {path} is not a number"))
                })?;
                items.get_mut(idx).ok_or_else(|| {
                    Failure::Usage(format!("index {idx} out of range under --param {path}"))
                })?
            }
            _ => {
                return Err(Failure::Usage(format!(
                    "--param {path} descends below a scalar at {seg:?}"
                )))
            }
        };
    }
    if !node.is_number() {
        return Err(Failure::Usage(format!(
            "--param {path} must address a scalar number"
        )));
    }
    Ok(node)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.spec)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.spec.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", a.spec.display())))?;
    let values: Result<Vec<f64>, _> = a
        .values
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect();
    let values = values.map_err(|e| Failure::Usage(format!("bad --values entry: {e}")))?;
    if a.values.trim().is_empty() || values.is_empty() {
        return Err(Failure::Usage("--values must list at least one number".into()));
    }

    let mut out =
        String::from("value,omega,M1,M2,M3,inv_norm_spectral,verdict,outcome,final_norm\n");
    for &value in &values {
        let mut patched = doc.clone();
        *lookup(&mut patched, &a.param)? = value.into();
        let spec = model::load_spec(&patched.to_string())
            .map_err(|e| Failure::Usage(format!("value {value}: {e}")))?;
        let block = spec.sim();
        let cfg = SimConfig {
            t_end: block.t_end,
            dt: block.dt,
            divergence_cap: block.divergence_cap,
            record_stride: plot_stride(block.t_end, block.dt),
        };
        let cls = close(spec)?;
        let cert = stability::certify(&cls, 40.0, 0.5)
            .map_err(|e| Failure::Numerical(format!("value {value}: {e}")))?;
        let traj = sim::integrate(&cls, &cfg).map_err(|e| match e {
            sim::SimError::Config { what } => Failure::Usage(format!("value {value}: {what}")),
            step => Failure::Numerical(format!("value {value}: {step}")),
        })?;
        let verdict = match cert.verdict {
            Verdict::CertifiedNumerically => "certified_numerically",
            Verdict::Failed => "failed",
            Verdict::Inconclusive => "inconclusive",
        };
        let outcome = match traj.outcome {
            Outcome::Converged => "converged",
            Outcome::Diverged => "diverged",
            Outcome::Completed => "completed",
        };
        let _ = writeln!(
            out,
            "{value},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{verdict},{outcome},{:.12e}",
            cert.omega,
            cert.m1,
            cert.m2,
            cert.m3,
            cert.inv_norm_spectral,
            traj.norm_track.last().copied().unwrap_or(0.0),
        );
    }
    write_file(&a.csv, &out)?;
    Ok(())
}

/// 800x600 line plot: one polyline per state component, axis lines, and
/// min/max labels on both axes. Everything is formatted from numbers, so
/// identical trajectories render byte-identically.
fn svg_plot(traj: &Trajectory) -> String {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const L: f64 = 70.0;
    const R: f64 = 780.0;
    const T: f64 = 20.0;
    const B: f64 = 550.0;
    const PALETTE: [&str; 8] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];

    let n = traj.states.first().map_or(0, |s| s.len());
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    if let (Some(first), Some(last)) = (traj.times.first(), traj.times.last()) {
        t0 = *first;
        t1 = *last;
    }
    if t1 <= t0 {
        t1 = t0 + 1.0;
    }
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for row in &traj.states {
        for &v in row {
            y0 = y0.min(v);
            y1 = y1.max(v);
        }
    }
    if !(y0.is_finite() && y1.is_finite()) {
        y0 = 0.0;
        y1 = 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = (R - L) / (t1 - t0);
    let sy = (B - T) / (y1 - y0);

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{L}\" y1=\"{B}\" x2=\"{R}\" y2=\"{B}\" stroke=\"black\"/>\n\
         <line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{B}\" stroke=\"black\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{L}\" y=\"{}\" font-size=\"14\">{t0}</text>",
        B + 20.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{R}\" y=\"{}\" font-size=\"14\" text-anchor=\"end\">{t1}</text>",
        B + 20.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{B}\" font-size=\"14\" text-anchor=\"end\">{y0}</text>",
        L - 8.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"end\">{y1}</text>",
        L - 8.0,
        T + 12.0
    );
    for comp in 0..n {
        let _ = write!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"",
            PALETTE[comp % PALETTE.len()]
        );
        for (i, &t) in traj.times.iter().enumerate() {
            let x = L + (t - t0) * sx;
            let y = B - (traj.states[i][comp] - y0) * sy;
            let _ = write!(s, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
        }
        s.push_str("\"/>\n");
    }
    s.push_str("</svg>\n");
    s
}
