#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use moebius_core::catalog::builtin_library;
use moebius_core::dsl::{parse_box, parse_immersion, parse_kv, parse_param_map, DslError, ImmersionSpec, KvEntry};
use moebius_core::moebius::{random_conformal_map, ComputeOptions, MoebiusError, MoebiusInvariants};
use moebius_core::verify::{self, FdPatch, ResidualReport, Tolerances, VerifyError, VerifyOptions};

const EXIT_PASS: u8 = 0;
const EXIT_TOLERANCE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;

/// Header of `grid` output.
pub const GRID_HEADER: &str = "u1,u2,u3,A_tilde_norm2,R2,ric_norm2,integrand,weighted_sectional,rhs_trace_free";

#[derive(Parser, Debug)]
#[command(name = "moebius", version, about = "Möbius invariants of hypersurfaces in R^4")]
struct Cli {
    /// Key-value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print invariants at given or sampled points.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Parameter point `u1,u2,u3` (repeatable).
        #[arg(long, allow_hyphen_values = true)]
        point: Vec<String>,
    },
    /// Run residual suites.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Include third-order relations in the flat suite.
        #[arg(long)]
        extended: bool,
        /// Center of the finite-difference patch (defaults to the box center).
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
    },
    /// Classify a conformally flat hypersurface with closed Möbius form.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Sample the pointwise integrand on a regular grid.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Grid points per axis.
        #[arg(long)]
        n: Option<usize>,
    },
    /// List the built-in immersions.
    List,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Built-in `name(key=value, ...)` or path to a spec file.
    #[arg(long)]
    immersion: Option<String>,
    /// Jet order, 3 to 5.
    #[arg(long)]
    order: Option<usize>,
    /// Number of sampled points.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override: `suite=value`, or a bare value for every suite (repeatable).
    #[arg(long)]
    tol: Vec<String>,
    #[arg(long, value_enum)]
    output: Option<Output>,
    /// Sample box `lo,hi; lo,hi; lo,hi`.
    #[arg(long = "box", allow_hyphen_values = true)]
    sample_box: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Output {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Suite {
    Universal,
    Flat,
    Frames,
    Invariance,
    Pointwise,
    Forms,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Universal => "universal",
            Suite::Flat => "flat",
            Suite::Frames => "frames",
            Suite::Invariance => "invariance",
            Suite::Pointwise => "pointwise",
            Suite::Forms => "forms",
            Suite::All => "all",
        }
    }
}

const SUITES: [Suite; 6] = [Suite::Universal, Suite::Flat, Suite::Frames, Suite::Invariance, Suite::Pointwise, Suite::Forms];

/// Resolved configuration.
#[derive(Debug, Clone)]
struct RunConfig {
    spec: ImmersionSpec,
    order: usize,
    points: usize,
    seed: u64,
    output: Output,
    tol_all: Option<f64>,
    tol: BTreeMap<String, f64>,
    n: usize,
}

struct Failure {
    code: u8,
    message: String,
    usage: bool,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into(), usage: true }
    }
}

impl From<DslError> for Failure {
    fn from(e: DslError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<MoebiusError> for Failure {
    fn from(e: MoebiusError) -> Self {
        match e {
            MoebiusError::Dsl(d) => d.into(),
            other => Self { code: EXIT_DOMAIN, message: other.to_string(), usage: false },
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        let code = match &e {
            VerifyError::NotConformallyFlat { .. } | VerifyError::MoebiusFormNotClosed { .. } | VerifyError::InconsistentSign(_) => {
                EXIT_PRECONDITION
            }
            VerifyError::Moebius(MoebiusError::Dsl(_)) => EXIT_USAGE,
            _ => EXIT_DOMAIN,
        };
        Self { code, message: e.to_string(), usage: false }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let code = match run(cli, &mut out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if f.usage {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            f.code
        }
    };
    print!("{out}");
    ExitCode::from(code)
}

fn run(cli: Cli, out: &mut String) -> Result<u8, Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read config `{path}`: {e}")))?;
            parse_kv(&text)?
        }
        None => Vec::new(),
    };
    match cli.command {
        Command::List => {
            for e in builtin_library().entries() {
                let params: Vec<String> = e.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
                writeln!(out, "{}({})  {}", e.name, params.join(", "), e.summary).unwrap();
            }
            Ok(EXIT_PASS)
        }
        Command::Eval { common, point } => {
            let cfg = resolve(&common, &file, None)?;
            cmd_eval(&cfg, &point, out)
        }
        Command::Verify { common, suite, extended, point } => {
            let cfg = resolve(&common, &file, None)?;
            cmd_verify(&cfg, suite, extended, point.as_deref(), out)
        }
        Command::Classify { common } => {
            let cfg = resolve(&common, &file, None)?;
            cmd_classify(&cfg, out)
        }
        Command::Grid { common, n } => {
            let cfg = resolve(&common, &file, n)?;
            cmd_grid(&cfg, out)
        }
    }
}

fn resolve(c: &Common, file: &[KvEntry], n: Option<usize>) -> Result<RunConfig, Failure> {
    const KEYS: [&str; 8] = ["immersion", "order", "points", "seed", "output", "box", "tol", "n"];
    for e in file {
        if !KEYS.contains(&e.key.as_str()) {
            return Err(Failure::usage(format!("config line {}: unknown key `{}`", e.line, e.key)));
        }
    }
    let get = |k: &str| file.iter().find(|e| e.key == k);
    let num = |k: &str| -> Result<Option<u64>, Failure> {
        get(k)
            .map(|e| e.value.trim().parse::<u64>().map_err(|_| Failure::usage(format!("config line {}: `{k}` must be a natural number", e.line))))
            .transpose()
    };
    let immersion = match (&c.immersion, get("immersion")) {
        (Some(s), _) => s.clone(),
        (None, Some(e)) => e.value.trim().trim_matches('"').to_string(),
        (None, None) => return Err(Failure::usage("--immersion is required")),
    };
    let mut spec = load_immersion(&immersion)?;
    let order = c.order.or(num("order")?.map(|v| v as usize)).unwrap_or(5);
    if !(3..=5).contains(&order) {
        return Err(Failure::usage(format!("--order must be in [3, 5], got {order}")));
    }
    let points = c.points.or(num("points")?.map(|v| v as usize)).unwrap_or(10);
    if points == 0 {
        return Err(Failure::usage("--points must be at least 1"));
    }
    let seed = c.seed.or(num("seed")?).unwrap_or(0);
    let n = n.or(num("n")?.map(|v| v as usize)).unwrap_or(5);
    if n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let output = match (c.output, get("output")) {
        (Some(o), _) => o,
        (None, Some(e)) => Output::from_str(e.value.trim().trim_matches('"'), true)
            .map_err(|_| Failure::usage(format!("config line {}: output must be json or csv", e.line)))?,
        (None, None) => Output::Json,
    };
    let box_entry = match (&c.sample_box, get("box")) {
        (Some(s), _) => Some(KvEntry { key: "box".into(), value: format!("[{s}]"), line: 0, col: 0 }),
        (None, e) => e.cloned(),
    };
    if let Some(e) = box_entry {
        let b = parse_box(&e, &spec.params)?;
        spec = spec.with_box(b)?;
    }
    let mut tol = match get("tol") {
        Some(e) => parse_param_map(e)?,
        None => BTreeMap::new(),
    };
    let mut tol_all = None;
    for t in &c.tol {
        match t.split_once('=') {
            Some((k, v)) => {
                let v: f64 = v.trim().parse().map_err(|_| Failure::usage(format!("bad tolerance `{t}`")))?;
                tol.insert(k.trim().to_string(), v);
            }
            None => tol_all = Some(t.trim().parse().map_err(|_| Failure::usage(format!("bad tolerance `{t}`")))?),
        }
    }
    for (k, v) in &tol {
        if !SUITES.iter().any(|s| s.name() == k) {
            return Err(Failure::usage(format!("unknown suite `{k}` in tolerance override")));
        }
        if !(*v > 0.0) {
            return Err(Failure::usage(format!("tolerance for `{k}` must be positive")));
        }
    }
    Ok(RunConfig { spec, order, points, seed, output, tol_all, tol, n })
}

fn load_immersion(s: &str) -> Result<ImmersionSpec, Failure> {
    if Path::new(s).is_file() {
        let text = std::fs::read_to_string(s).map_err(|e| Failure::usage(format!("cannot read `{s}`: {e}")))?;
        return Ok(parse_immersion(&text)?);
    }
    Ok(builtin_library().resolve(s)?)
}

fn parse_point(s: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let p: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("malformed point `{s}`: expected {dim} comma-separated numbers")))?;
    if p.len() != dim || p.iter().any(|x| !x.is_finite()) {
        return Err(Failure::usage(format!("malformed point `{s}`: expected {dim} comma-separated numbers")));
    }
    Ok(p)
}

impl RunConfig {
    fn options(&self, suite: Suite) -> VerifyOptions {
        let mut tol = Tolerances::default();
        let over = self.tol.get(suite.name()).copied().or(self.tol_all);
        if let Some(v) = over {
            if suite == Suite::Forms {
                tol.fd_rel = v;
            } else {
                tol.jet = v;
                tol.route = v;
            }
        }
        VerifyOptions { order: self.order, tol, ..Default::default() }
    }

    fn sample(&self) -> Vec<Vec<f64>> {
        verify::sample_points(&self.spec, self.points, self.seed)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite")
    } else {
        "NaN".into()
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EvalRecord {
    point: Vec<f64>,
    k: [f64; 3],
    #[serde(rename = "H")]
    h: f64,
    rho2: f64,
    b: [f64; 3],
    a_frame: Option<[f64; 3]>,
    #[serde(rename = "trA")]
    tr_a: Option<f64>,
    #[serde(rename = "C_frame")]
    c_frame: Option<[f64; 3]>,
    #[serde(rename = "R_scalar")]
    r_scalar: Option<f64>,
    ric_norm2: Option<f64>,
    #[serde(rename = "A_tilde_norm2")]
    a_tilde_norm2: Option<f64>,
    curvature_sphere_plane_flags: [bool; 3],
}

fn eval_record(inv: &MoebiusInvariants) -> EvalRecord {
    let fd = &inv.in_frame;
    let a_frame = fd.a.as_ref().map(|a| [*a.get(&[0, 0]), *a.get(&[1, 1]), *a.get(&[2, 2])]);
    let s = verify::pointwise_scalars(inv);
    EvalRecord {
        point: inv.point.clone(),
        k: inv.euclid.k,
        h: inv.euclid.mean.value(),
        rho2: inv.rho2.value(),
        b: inv.frame.b,
        a_frame,
        tr_a: s.map(|s| s.tr_a),
        c_frame: fd.c.as_ref().map(|c| [c[0], c[1], c[2]]),
        r_scalar: fd.scalar,
        ric_norm2: s.map(|s| s.ric_norm2),
        a_tilde_norm2: s.map(|s| s.a_tilde_norm2),
        curvature_sphere_plane_flags: std::array::from_fn(|i| inv.curvature_sphere_test(i).is_plane),
    }
}

fn cmd_eval(cfg: &RunConfig, points: &[String], out: &mut String) -> Result<u8, Failure> {
    let pts = if points.is_empty() {
        cfg.sample()
    } else {
        points.iter().map(|p| parse_point(p, cfg.spec.domain_dim)).collect::<Result<Vec<_>, _>>()?
    };
    let opts = ComputeOptions::order(cfg.order);
    let mut records = Vec::new();
    for r in verify::evaluate_points(&cfg.spec, &pts, opts) {
        records.push(eval_record(&r?));
    }
    match cfg.output {
        Output::Json => out.push_str(&to_json(&json!({
            "immersion": cfg.spec.name,
            "order": cfg.order,
            "records": records,
        }))),
        Output::Csv => {
            out.push_str("u1,u2,u3,k1,k2,k3,H,rho2,b1,b2,b3,a1,a2,a3,trA,C1,C2,C3,R_scalar,ric_norm2,A_tilde_norm2,plane1,plane2,plane3\n");
            for r in &records {
                let opt3 = |v: Option<[f64; 3]>| v.map_or(vec![f64::NAN; 3], |a| a.to_vec());
                let mut row: Vec<f64> = r.point.clone();
                row.extend(r.k);
                row.extend([r.h, r.rho2]);
                row.extend(r.b);
                row.extend(opt3(r.a_frame));
                row.push(r.tr_a.unwrap_or(f64::NAN));
                row.extend(opt3(r.c_frame));
                row.extend([r.r_scalar, r.ric_norm2, r.a_tilde_norm2].map(|v| v.unwrap_or(f64::NAN)));
                let mut cells: Vec<String> = row.into_iter().map(csv_num).collect();
                cells.extend(r.curvature_sphere_plane_flags.iter().map(|b| b.to_string()));
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
    }
    Ok(EXIT_PASS)
}

// ---------------------------------------------------------------------------

/// Outcome of one suite: a report, or a precondition/domain failure.
enum SuiteOutcome {
    Report(ResidualReport),
    Failed { suite: &'static str, error: VerifyError },
}

fn run_suite(cfg: &RunConfig, suite: Suite, extended: bool, center: Option<&[f64]>) -> SuiteOutcome {
    let spec = &cfg.spec;
    let pts = cfg.sample();
    let mut opts = cfg.options(suite);
    opts.extended = extended;
    let res: Result<ResidualReport, VerifyError> = match suite {
        Suite::Universal => Ok(verify::check_universal(spec, &pts, &opts)),
        Suite::Flat => {
            let flat = verify::check_conformal_flatness(spec, &pts, &opts);
            if flat.pass {
                verify::check_flat_relations(spec, &pts, &opts).map(|r| ResidualReport::combine("flat", vec![flat, r]))
            } else {
                Ok(ResidualReport::combine("flat", vec![flat]))
            }
        }
        Suite::Frames => Ok(verify::check_frames(spec, &pts, &opts)),
        Suite::Invariance => verify::safe_shift(spec).and_then(|shift| {
            let maps = random_conformal_map(cfg.seed, shift);
            let mut r = verify::check_moebius_invariance(spec, &maps, &pts, &opts)?;
            r.notes.extend(moebius_core::moebius::describe_maps(&maps));
            Ok(r)
        }),
        Suite::Pointwise => verify::check_pointwise_identities(spec, &pts, &opts),
        Suite::Forms => {
            let c = center.map(<[f64]>::to_vec).unwrap_or_else(|| spec.sample_box.iter().map(|(a, b)| 0.5 * (a + b)).collect());
            verify::fd_exterior(spec, &FdPatch::new(c), &opts)
        }
        Suite::All => unreachable!("expanded by caller"),
    };
    match res {
        Ok(mut r) => {
            r.suite = suite.name().to_string();
            SuiteOutcome::Report(r)
        }
        Err(error) => SuiteOutcome::Failed { suite: suite.name(), error },
    }
}

fn cmd_verify(cfg: &RunConfig, suite: Suite, extended: bool, point: Option<&str>, out: &mut String) -> Result<u8, Failure> {
    let center = point.map(|p| parse_point(p, cfg.spec.domain_dim)).transpose()?;
    let selected: Vec<Suite> = if suite == Suite::All { SUITES.to_vec() } else { vec![suite] };
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut code = EXIT_PASS;
    for s in selected {
        match run_suite(cfg, s, extended, center.as_deref()) {
            SuiteOutcome::Report(r) => {
                if !r.pass {
                    code = code.max(EXIT_TOLERANCE);
                }
                reports.push(r);
            }
            SuiteOutcome::Failed { suite, error } => {
                code = code.max(Failure::from(error.clone()).code);
                failures.push(json!({ "suite": suite, "error": error.name(), "message": error.to_string() }));
            }
        }
    }
    let pass = code == EXIT_PASS;
    match cfg.output {
        Output::Json => out.push_str(&to_json(&json!({
            "immersion": cfg.spec.name,
            "order": cfg.order,
            "points": cfg.points,
            "seed": cfg.seed,
            "pass": pass,
            "reports": reports,
            "failures": failures,
        }))),
        Output::Csv => {
            out.push_str("suite,check,points_evaluated,max_abs_residual,tolerance,pass\n");
            for r in &reports {
                for c in &r.checks {
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.suite,
                        c.check,
                        c.points_evaluated,
                        csv_num(c.max_abs_residual),
                        csv_num(c.tolerance),
                        c.pass
                    )
                    .unwrap();
                }
            }
            for f in &failures {
                writeln!(out, "{},{},0,NaN,NaN,false", f["suite"].as_str().unwrap_or(""), f["error"].as_str().unwrap_or("")).unwrap();
            }
        }
    }
    Ok(code)
}

// ---------------------------------------------------------------------------

fn cmd_classify(cfg: &RunConfig, out: &mut String) -> Result<u8, Failure> {
    let pts = cfg.sample();
    let opts = cfg.options(Suite::Flat);
    let (value, code) = match verify::classify(&cfg.spec, &pts, &opts) {
        Ok(c) => (serde_json::to_value(&c).expect("serializable"), EXIT_PASS),
        Err(VerifyError::InconsistentSign(c)) => {
            let mut v = serde_json::to_value(&*c).expect("serializable");
            v["error"] = Value::from("InconsistentSign");
            (v, EXIT_PRECONDITION)
        }
        Err(e) => return Err(e.into()),
    };
    match cfg.output {
        Output::Json => out.push_str(&to_json(&value)),
        Output::Csv => {
            out.push_str("u1,u2,u3,special_index,Q,ambiguous,motion1,motion2,motion3\n");
            for p in value["points"].as_array().into_iter().flatten() {
                let f = |v: &Value| v.as_f64().map_or("NaN".into(), csv_num);
                let pt: Vec<String> = p["point"].as_array().into_iter().flatten().map(f).collect();
                let m: Vec<String> = p["sphere_motion"].as_array().into_iter().flatten().map(f).collect();
                writeln!(out, "{},{},{},{},{}", pt.join(","), p["special_index"], f(&p["q"]), p["ambiguous"], m.join(",")).unwrap();
            }
        }
    }
    Ok(code)
}

// ---------------------------------------------------------------------------

fn cmd_grid(cfg: &RunConfig, out: &mut String) -> Result<u8, Failure> {
    let pts = cfg.spec.sample_grid(cfg.n);
    let opts = ComputeOptions::order(cfg.order.max(4));
    let mut rows = Vec::with_capacity(pts.len());
    for r in verify::evaluate_points(&cfg.spec, &pts, opts) {
        let inv = r?;
        let s = verify::pointwise_scalars(&inv).expect("order ≥ 4");
        rows.push((inv.point.clone(), s));
    }
    match cfg.output {
        Output::Csv => {
            out.push_str(GRID_HEADER);
            out.push('\n');
            for (p, s) in &rows {
                let vals = [s.a_tilde_norm2, s.scalar * s.scalar, s.ric_norm2, s.integrand, s.weighted_sectional, s.rhs_trace_free];
                let cells: Vec<String> = p.iter().chain(vals.iter()).map(|x| csv_num(*x)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        Output::Json => {
            for (p, s) in &rows {
                let v = json!({
                    "point": p,
                    "A_tilde_norm2": s.a_tilde_norm2,
                    "R2": s.scalar * s.scalar,
                    "ric_norm2": s.ric_norm2,
                    "integrand": s.integrand,
                    "weighted_sectional": s.weighted_sectional,
                    "rhs_trace_free": s.rhs_trace_free,
                });
                out.push_str(&serde_json::to_string(&v).expect("serializable"));
                out.push('\n');
            }
        }
    }
    Ok(EXIT_PASS)
}
