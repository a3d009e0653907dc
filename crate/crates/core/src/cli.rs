//! Command-line front end: `analyze`, `roots`, `margin`, `sweep`, `simulate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::criteria::{
    commuting_radius_test, hyperbolicity_test_with, stability_test_with, SamplerConfig, StabilityReport, Verdict, DEFAULT_MAX_POWER,
};
use crate::error::{Error, Result};
use crate::linalg::spectral_abscissa as matrix_abscissa;
use crate::model::{ComplexMatrix, SystemSpec};
use crate::roots::{critical_delay, spectral_abscissa, RootOptions, RootSet, Window};
use crate::simulator::{aligned_step, default_horizon, default_step, estimate_decay, integrate, random_history};
use crate::small_delay::{
    compact_commuting_margin, destabilizing_sequence, rewritten_system, robustness_margin, skew_feedback_spec, MarginMode,
    RobustnessMargin,
};

pub const EXIT_CERTIFIED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const THREADS_ENV: &str = "DELAYMARGIN_THREADS";
/// Real part above which an oracle root counts as unstable.
const UNSTABLE_RE: f64 = 1e-8;
const MAX_CSV_ROWS: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "delaymargin", version, about = "Stability, hyperbolicity and small-delay margins for linear delay systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CommonArgs {
    /// JSON system spec.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory; nothing is written to disk without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated decay rates for the stability test.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Vec<f64>,
    /// Root search window `re_min:re_max:im_min:im_max`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    window: Option<String>,
    /// Chebyshev degree of the generator discretization.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Delay range `a:b:step`.
    #[arg(long = "tau-range", global = true, allow_hyphen_values = true)]
    tau_range: Option<String>,
    /// Seed for randomized histories.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative slack between certified and sampled resolvent maxima.
    #[arg(long = "rel-tol", global = true, default_value_t = 1e-3)]
    rel_tol: f64,
    /// Largest power `n` in the series test.
    #[arg(long = "max-power", global = true, default_value_t = DEFAULT_MAX_POWER)]
    max_power: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Stable,
    Hyperbolic,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the hyperbolicity and stability tests with a root cross-check.
    Analyze,
    /// Characteristic roots in a window.
    Roots,
    /// Small-delay robustness margin of a feedback system.
    Margin {
        #[arg(long, value_enum, default_value_t = ModeArg::Stable)]
        mode: ModeArg,
        /// Batch over `B = iμ`, `C = d` instead of reading a spec.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mus: Vec<f64>,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        d: f64,
    },
    /// Abscissa and criterion verdicts over a delay range.
    Sweep,
    /// Integrate from a random history and estimate the decay rate.
    Simulate {
        #[arg(long = "t-final")]
        t_final: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
}

struct Outcome {
    code: i32,
    summary: String,
    files: Vec<(String, String)>,
}

fn parse_window(s: &str) -> Result<Window> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad window component '{p}'"))))
        .collect::<Result<_>>()?;
    if v.len() != 4 {
        return Err(Error::Config(format!("window needs re_min:re_max:im_min:im_max, got '{s}'")));
    }
    Window::new(v[0], v[1], v[2], v[3])
}

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad range component '{p}'"))))
        .collect::<Result<_>>()?;
    let (a, b, step) = match v.as_slice() {
        [a, b, step] => (*a, *b, *step),
        [a, b] => (*a, *b, (*b - *a) / 16.0),
        _ => return Err(Error::Config(format!("range needs a:b:step, got '{s}'"))),
    };
    if !(a.is_finite() && b.is_finite() && step > 0.0 && b >= a && a > 0.0) {
        return Err(Error::Config(format!("range '{s}' must satisfy 0 < a <= b and step > 0")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| a + k as f64 * step).collect())
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialize");
    s.push('\n');
    s
}

struct Context {
    common: CommonArgs,
    sampler: SamplerConfig,
}

impl Context {
    fn spec(&self) -> Result<SystemSpec> {
        let path = self.common.input.as_ref().ok_or_else(|| Error::Config("--input is required".into()))?;
        SystemSpec::from_path(path)
    }

    fn root_options(&self) -> Result<RootOptions> {
        let mut opts = RootOptions::default();
        if let Some(n) = self.common.nodes {
            if n < 4 {
                return Err(Error::Config("--nodes must be at least 4".into()));
            }
            opts.degree = n;
        }
        if let Some(w) = &self.common.window {
            opts.window = Some(parse_window(w)?);
        }
        Ok(opts)
    }

    fn config_json(&self, command: &str) -> Value {
        json!({
            "command": command,
            "input": self.common.input,
            "alpha": self.common.alpha,
            "window": self.common.window,
            "nodes": self.common.nodes.unwrap_or(RootOptions::default().degree),
            "tau_range": self.common.tau_range,
            "seed": self.common.seed,
            "max_power": self.common.max_power,
            "sampler": self.sampler,
        })
    }
}

#[derive(Serialize)]
struct TestEntry {
    system: &'static str,
    test: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip)]
    requested: bool,
}

impl TestEntry {
    fn new(system: &'static str, test: String, requested: bool, r: Result<StabilityReport>) -> Self {
        match r {
            Ok(rep) => Self { system, test, report: Some(rep), error: None, requested },
            Err(e) => Self { system, test, report: None, error: Some(e.to_string()), requested },
        }
    }

    fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.passed())
    }
}

fn line_tests(ctx: &Context, spec: &SystemSpec, system: &'static str, alphas: &[f64], requested: bool) -> Result<Vec<TestEntry>> {
    let n = ctx.common.max_power;
    let mut out = vec![TestEntry::new(system, "hyperbolicity".into(), requested, hyperbolicity_test_with(spec, n, &ctx.sampler))];
    let list: Vec<f64> = if alphas.is_empty() {
        if matrix_abscissa(spec.b().as_mat())? < 0.0 {
            vec![0.0]
        } else {
            vec![]
        }
    } else {
        alphas.to_vec()
    };
    for &a in &list {
        out.push(TestEntry::new(system, format!("stability(alpha={a})"), requested && !alphas.is_empty(), stability_test_with(spec, a, n, &ctx.sampler)));
    }
    Ok(out)
}

fn cmd_analyze(ctx: &Context) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let opts = ctx.root_options()?;
    let roots = spectral_abscissa(&spec, &opts);
    let mut tests = line_tests(ctx, &spec, "direct", &ctx.common.alpha, true)?;
    if spec.feedback_data().is_some() {
        let rw = rewritten_system(&spec)?;
        tests.extend(line_tests(ctx, &rw, "rewritten", &[], false)?);
        if spec.phi().points().len() == 1 && spec.phi().kernels().is_empty() {
            if let Ok(rep) = commuting_radius_test(&spec) {
                tests.push(TestEntry::new("direct", "commuting-radius".into(), false, Ok(rep)));
            }
        }
    }
    let oracle_unstable = roots.as_ref().ok().and_then(|r| r.abscissa).is_some_and(|a| a > UNSTABLE_RE)
        || tests.iter().any(|t| t.report.as_ref().is_some_and(|r| r.verdict == Verdict::Unstable));
    let first_error = tests.iter().find(|t| t.requested && t.error.is_some()).and_then(|t| t.error.clone());
    let (verdict, code) = if oracle_unstable {
        ("unstable", EXIT_UNSTABLE)
    } else if tests.iter().any(|t| t.report.as_ref().is_some_and(|r| r.verdict == Verdict::Stable)) {
        ("stable", EXIT_CERTIFIED)
    } else if tests.iter().any(|t| t.passed()) {
        ("hyperbolic", EXIT_CERTIFIED)
    } else if first_error.is_some() {
        ("error", EXIT_ERROR)
    } else {
        ("inconclusive", EXIT_INCONCLUSIVE)
    };
    let roots_json = match &roots {
        Ok(r) => serde_json::to_value(r)?,
        Err(e) => json!({ "error": e.to_string() }),
    };
    let report = json!({
        "config": ctx.config_json("analyze"),
        "spec": spec.to_document(),
        "roots": roots_json,
        "tests": tests,
        "verdict": verdict,
        "exit_code": code,
    });
    let mut summary = format!("verdict: {verdict}\n");
    match &roots {
        Ok(r) => summary.push_str(&format!(
            "spectral abscissa: {}  (roots in window: {}, certified: {})\n",
            r.abscissa.map_or("none".into(), |a| format!("{a:.10}")),
            r.total_multiplicity(),
            r.certified
        )),
        Err(e) => summary.push_str(&format!("root search failed: {e}\n")),
    }
    for t in &tests {
        match (&t.report, &t.error) {
            (Some(r), _) => summary.push_str(&format!(
                "{} {}: {:?} via {}\n",
                t.system,
                t.test,
                r.verdict,
                r.criterion.map_or("none".into(), |c| format!("{c:?}"))
            )),
            (None, Some(e)) => summary.push_str(&format!("{} {}: error: {e}\n", t.system, t.test)),
            _ => {}
        }
    }
    if code == EXIT_ERROR {
        summary.push_str(&format!("error: {}\n", first_error.unwrap_or_default()));
    }
    Ok(Outcome { code, files: vec![("report.json".into(), pretty(&report)), ("summary.txt".into(), summary.clone())], summary })
}

fn cmd_roots(ctx: &Context) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let rs = spectral_abscissa(&spec, &ctx.root_options()?)?;
    let summary = roots_summary(&rs);
    let doc = json!({ "config": ctx.config_json("roots"), "roots": rs });
    Ok(Outcome { code: 0, files: vec![("roots.csv".into(), rs.to_csv()), ("roots.json".into(), pretty(&doc))], summary })
}

fn roots_summary(rs: &RootSet) -> String {
    let mut s = format!(
        "spectral abscissa: {}\nroots: {} (winding {}), certified: {}\n",
        rs.abscissa.map_or("none".into(), |a| format!("{a:.12}")),
        rs.total_multiplicity(),
        rs.winding.map_or("n/a".into(), |w| format!("{w:.6}")),
        rs.certified
    );
    for r in rs.roots.iter().take(10) {
        s.push_str(&format!("  {:.12} {:+.12}i  (multiplicity {})\n", r.lambda.re, r.lambda.im, r.multiplicity));
    }
    s
}

#[derive(Serialize)]
struct MarginEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    margin: RobustnessMargin,
    #[serde(skip_serializing_if = "Option::is_none")]
    commuting_margin: Option<RobustnessMargin>,
    critical_delay: Option<Value>,
    /// `τ* / κ`
    conservatism_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    destabilizing_tau: Option<f64>,
}

fn margin_entry(b: &ComplexMatrix, c: &ComplexMatrix, mode: MarginMode, range: Option<(f64, f64)>) -> Result<MarginEntry> {
    let margin = robustness_margin(b, c, mode)?;
    let commuting_margin = compact_commuting_margin(b, c, mode).ok();
    let kappa = commuting_margin.as_ref().map_or(margin.kappa, |m| m.kappa.max(margin.kappa));
    let (lo, hi) = range.unwrap_or(if kappa.is_finite() { (0.5 * kappa, 40.0 * kappa) } else { (1e-3, 10.0) });
    let (critical, ratio) = match critical_delay(b, c, lo, hi) {
        Ok(cd) => {
            let ratio = kappa.is_finite().then(|| cd.tau / kappa);
            (Some(serde_json::to_value(cd)?), ratio)
        }
        Err(e) => (Some(json!({ "error": e.to_string(), "range": [lo, hi] })), None),
    };
    Ok(MarginEntry { mu: None, margin, commuting_margin, critical_delay: critical, conservatism_ratio: ratio, destabilizing_tau: None })
}

fn cmd_margin(ctx: &Context, mode: ModeArg, mus: &[f64], d: f64) -> Result<Outcome> {
    let mode = match mode {
        ModeArg::Stable => MarginMode::Stable,
        ModeArg::Hyperbolic => MarginMode::Hyperbolic,
    };
    let range = match &ctx.common.tau_range {
        Some(s) => {
            let v = parse_range(s)?;
            Some((v[0], *v.last().expect("nonempty range")))
        }
        None => None,
    };
    let mut entries = Vec::new();
    if !mus.is_empty() {
        let seq = destabilizing_sequence(mus, d)?;
        for e in &seq.entries {
            let spec = skew_feedback_spec(&[e.mu], d, e.tau)?;
            let fb = spec.feedback_data().expect("feedback spec");
            let mut entry = margin_entry(spec.b(), &fb.c, mode, range)?;
            entry.mu = Some(e.mu);
            entry.destabilizing_tau = Some(e.tau);
            entries.push(entry);
        }
    } else {
        let spec = ctx.spec()?;
        let fb = spec.feedback_data().ok_or_else(|| Error::InvalidSpec("margin needs a feedback spec with C and tau".into()))?;
        entries.push(margin_entry(spec.b(), &fb.c, mode, range)?);
    }
    let mut summary = String::new();
    for e in &entries {
        let k = e.commuting_margin.as_ref().map_or(e.margin.kappa, |m| m.kappa.max(e.margin.kappa));
        if let Some(mu) = e.mu {
            summary.push_str(&format!("mu = {mu}: "));
        }
        if e.margin.unconditional {
            summary.push_str("kappa = inf (C = 0, unconditional)\n");
            continue;
        }
        summary.push_str(&format!("kappa = {k:.6e} (kappa1 = {:.6e}, kappa2 = {:.6e})", e.margin.kappa1, e.margin.kappa2));
        if let Some(cd) = e.critical_delay.as_ref().and_then(|v| v.get("tau")).and_then(Value::as_f64) {
            summary.push_str(&format!(", critical delay = {cd:.9}"));
        }
        if let Some(r) = e.conservatism_ratio {
            summary.push_str(&format!(", ratio = {r:.3}"));
        }
        summary.push('\n');
    }
    let doc = json!({ "config": ctx.config_json("margin"), "mode": mode, "d": (!mus.is_empty()).then_some(d), "margins": entries });
    Ok(Outcome { code: 0, files: vec![("margin.json".into(), pretty(&doc))], summary })
}

fn verdict_cell(r: Result<StabilityReport>) -> &'static str {
    match r {
        Ok(rep) if rep.passed() => "pass",
        Ok(_) => "fail",
        Err(Error::AlphaOutOfRange { .. }) | Err(Error::EigenvalueOnLine { .. }) => "n/a",
        Err(_) => "error",
    }
}

fn cmd_sweep(ctx: &Context) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let fb = spec.feedback_data().ok_or_else(|| Error::InvalidSpec("sweep needs a feedback spec with C and tau".into()))?.clone();
    let range = ctx.common.tau_range.as_ref().ok_or_else(|| Error::Config("--tau-range a:b:step is required".into()))?;
    let taus = parse_range(range)?;
    let bc = spec.b().as_mat() + fb.c.as_mat();
    let kappa = if fb.c.norm() == 0.0 {
        Some(f64::INFINITY)
    } else if matrix_abscissa(&bc)? < 0.0 {
        robustness_margin(spec.b(), &fb.c, MarginMode::Stable).ok().map(|m| m.kappa)
    } else {
        None
    };
    let opts = RootOptions { count_check: false, self_check: false, ..ctx.root_options()? };
    let n = ctx.common.max_power;
    let rows: Vec<String> = taus
        .par_iter()
        .map(|&tau| -> Result<String> {
            let s = spec.with_tau(tau)?;
            let rs = spectral_abscissa(&s, &opts)?;
            let hyp = verdict_cell(hyperbolicity_test_with(&s, n, &ctx.sampler));
            let st = verdict_cell(stability_test_with(&s, 0.0, n, &ctx.sampler));
            let rw = verdict_cell(rewritten_system(&s).and_then(|w| stability_test_with(&w, 0.0, n, &ctx.sampler)));
            let below = kappa.map_or("n/a".to_string(), |k| (tau < k).to_string());
            Ok(format!(
                "{tau:.12e},{},{hyp},{st},{rw},{below}\n",
                rs.abscissa.map_or("nan".into(), |a| format!("{a:.12e}"))
            ))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("tau,abscissa,hyperbolicity_direct,stability_direct,stability_rewritten,below_kappa\n");
    csv.extend(rows);
    let summary = format!(
        "{} delays swept{}\n",
        taus.len(),
        kappa.map_or(String::new(), |k| if k.is_finite() { format!(", kappa = {k:.6e}") } else { ", kappa = inf".into() })
    );
    let doc = json!({ "config": ctx.config_json("sweep"), "kappa": kappa.filter(|k| k.is_finite()) });
    Ok(Outcome { code: 0, files: vec![("sweep.csv".into(), csv.clone()), ("sweep.json".into(), pretty(&doc))], summary: summary + &csv })
}

fn cmd_simulate(ctx: &Context, t_final: Option<f64>, step: Option<f64>) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let expected = spectral_abscissa(&spec, &RootOptions { degree: ctx.root_options()?.degree, ..RootOptions::fast() })
        .ok()
        .and_then(|r| r.abscissa);
    let t_final = t_final.unwrap_or_else(|| default_horizon(expected));
    let h = match step {
        Some(h) => aligned_step(&spec, h)?,
        None => default_step(&spec)?,
    };
    let history = random_history(spec.max_delay(), spec.n(), ctx.common.seed)?;
    let decay = estimate_decay(&spec, &history, t_final, h)?;
    let traj = integrate(&spec, &history, t_final, decay.step)?;
    let stride = traj.len().div_ceil(MAX_CSV_ROWS).max(1);
    let doc = json!({
        "config": ctx.config_json("simulate"),
        "t_final": t_final,
        "decay": decay,
        "char_roots_abscissa": expected,
    });
    let summary = format!(
        "decay rate: {:.6} (r^2 = {:.4}, step {:.3e}, converged: {}, diverged: {})\nchar_roots abscissa: {}\n",
        decay.estimate.rate,
        decay.estimate.r_squared,
        decay.step,
        decay.converged,
        decay.diverged,
        expected.map_or("n/a".into(), |a| format!("{a:.6}"))
    );
    Ok(Outcome { code: 0, files: vec![("trajectory.csv".into(), traj.to_csv(stride)), ("decay.json".into(), pretty(&doc))], summary })
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    if !(cli.common.rel_tol > 0.0) {
        return Err(Error::Config("--rel-tol must be positive".into()));
    }
    if cli.common.max_power == 0 {
        return Err(Error::Config("--max-power must be positive".into()));
    }
    let sampler = SamplerConfig { rel_tol: cli.common.rel_tol, ..SamplerConfig::default() };
    let ctx = Context { common: cli.common, sampler };
    match cli.command {
        Command::Analyze => cmd_analyze(&ctx),
        Command::Roots => cmd_roots(&ctx),
        Command::Margin { mode, mus, d } => cmd_margin(&ctx, mode, &mus, d),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Simulate { t_final, step } => cmd_simulate(&ctx, t_final, step),
    }
    .and_then(|o| {
        if let Some(dir) = &ctx.common.out {
            std::fs::create_dir_all(dir)?;
            for (name, body) in &o.files {
                std::fs::write(dir.join(name), body)?;
            }
        }
        Ok(o)
    })
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    configure_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match dispatch(cli) {
        Ok(o) => {
            let _ = stdout.write_all(o.summary.as_bytes());
            o.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}
