//! Command-line front end: load scenarios, print tables and posteriors, run
//! closures and agreement checks, fuzz the backends, and reproduce the
//! four-dimensional noncommuting example.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage error,
//! 3 scenario parse error, 4 scenario validation error, 5 a check failed.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;

use agreelab::agreement::{self, CKReport};
use agreelab::fuzz::{self, FuzzSummary};
use agreelab::linalg::{c, CMatrix};
use agreelab::probability::{Event, JointDistribution, Prob};
use agreelab::quantum::{self, DensityMatrix};
use agreelab::report::{self, round12, Format, RunReport};
use agreelab::scenario::{self, Backend, Joint, Scenario, ScenarioError};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_CHECK_FAILED: u8 = 5;

/// Tolerance used when comparing the example pipeline with its closed forms.
const EXAMPLE_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "agreelab", version, about = "Common-knowledge closure and agreement checks on joint outcome tables")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the scenario tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Overrides the scenario seed (or seeds the search).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format: `table` or `records` (line-delimited JSON).
    #[arg(long, global = true, default_value = "table", value_parser = parse_format)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Print the joint outcome table.
    Joint { file: PathBuf },
    /// Print both agents' posteriors for every outcome.
    Posteriors { file: PathBuf },
    /// Run the closure for given posteriors (`--qa`, `--qb`) or for the posteriors held at (`--i`, `--j`).
    Ck(CkArgs),
    /// Run every closure and the singular-disagreement check for each scenario.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Randomised search for agreement violations.
    Search(SearchArgs),
    /// Compare the four-dimensional example against its closed-form posteriors.
    PaperExample(ExampleArgs),
}

#[derive(Args)]
struct CkArgs {
    file: PathBuf,
    #[arg(long, requires = "qb", conflicts_with_all = ["i", "j"])]
    qa: Option<String>,
    #[arg(long, requires = "qa")]
    qb: Option<String>,
    #[arg(long, requires = "j")]
    i: Option<usize>,
    #[arg(long, requires = "i")]
    j: Option<usize>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value = "quantum", value_parser = parse_backend)]
    backend: Backend,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 4)]
    max_dim: usize,
}

#[derive(Args)]
struct ExampleArgs {
    /// Angle of Bob's rotation in the first block, e.g. `0.3`, `pi/4`, `2pi/3`.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    theta: f64,
    /// Angle of Bob's rotation in the second block.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    phi: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    r: f64,
    /// `mixed` (default), `block` (uniform on the first two basis states) or a JSON matrix.
    #[arg(long, default_value = "mixed")]
    state: String,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse()
}

/// Accepts plain numbers and multiples of pi such as `pi`, `-pi/6`, `2pi/3`, `0.5*pi`.
fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace(' ', "");
    let Some(pos) = t.find("pi") else {
        return t.parse().map_err(|_| format!("`{s}` is not an angle"));
    };
    let (coef, rest) = (&t[..pos], &t[pos + 2..]);
    let coef = coef.trim_end_matches('*');
    let k = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => x.parse::<f64>().map_err(|_| format!("`{s}` is not an angle"))?,
    };
    let div = match rest.strip_prefix('/') {
        Some(d) => d.parse::<f64>().map_err(|_| format!("`{s}` is not an angle"))?,
        None if rest.is_empty() => 1.0,
        None => return Err(format!("`{s}` is not an angle")),
    };
    Ok(k * PI / div)
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn runtime(message: impl ToString) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }

    fn with_code(code: u8, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_parse_error() { EXIT_PARSE } else { EXIT_VALIDATION };
        let mut message = e.to_string();
        if let ScenarioError::Validation { diagnostics, .. } = &e {
            for d in diagnostics {
                message.push_str("\n  ");
                message.push_str(d);
            }
        }
        Self { code, message }
    }
}

impl From<agreelab::error::Error> for Failure {
    fn from(e: agreelab::error::Error) -> Self {
        Self::runtime(e)
    }
}

fn load(path: &Path, g: &Global) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let mut s = scenario::parse_scenario_named(&text, stem).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    if let Some(tol) = g.tol {
        s.tol = tol;
    }
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn records_line(value: serde_json::Value) -> String {
    format!("{}\n", serde_json::to_string(&value).expect("json values serialise"))
}

fn fmt_num(x: f64) -> String {
    round12(x).to_string()
}

fn cmd_joint(s: &Scenario, format: Format) -> Result<String, Failure> {
    let p = s.joint()?.to_f64();
    let values: Vec<f64> = p.values().iter().copied().map(round12).collect();
    Ok(match format {
        Format::Records => records_line(serde_json::json!({
            "record": "joint",
            "scenario": s.id,
            "shape": p.space().sizes(),
            "values": values,
        })),
        Format::Table => {
            let mut out = format!("scenario  {}\n{:>3} {:>3} {:>3}  p(i,j,k)\n", s.id, "i", "j", "k");
            for (i, j, k) in p.space().triples() {
                let _ = writeln!(out, "{i:>3} {j:>3} {k:>3}  {}", fmt_num(*p.get(i, j, k)));
            }
            out
        }
    })
}

fn cmd_posteriors(s: &Scenario, format: Format) -> Result<String, Failure> {
    let r = report::run_scenario(s)?;
    Ok(match format {
        Format::Records => records_line(serde_json::json!({
            "record": "posteriors",
            "scenario": s.id,
            "event": r.event,
            "posteriors_alice": r.posteriors_alice.iter().map(|x| x.map(round12)).collect::<Vec<_>>(),
            "posteriors_bob": r.posteriors_bob.iter().map(|x| x.map(round12)).collect::<Vec<_>>(),
        })),
        Format::Table => {
            let mut out = format!("scenario  {}\nevent     {:?}\n", s.id, r.event);
            let show = |x: &Option<f64>| x.map_or_else(|| "undefined (null outcome)".to_string(), fmt_num);
            for (i, q) in r.posteriors_alice.iter().enumerate() {
                let _ = writeln!(out, "q_A({i}) = {}", show(q));
            }
            for (j, q) in r.posteriors_bob.iter().enumerate() {
                let _ = writeln!(out, "q_B({j}) = {}", show(q));
            }
            out
        }
    })
}

fn parse_value<P: Prob>(text: &str, from_rational: impl Fn(BigRational) -> P) -> Result<P, Failure> {
    scenario::parse_rational(text)
        .map(&from_rational)
        .or_else(|| text.parse::<f64>().ok().and_then(|x| BigRational::from_float(x).map(&from_rational)))
        .ok_or_else(|| Failure::with_code(EXIT_USAGE, format!("`{text}` is not a probability")))
}

fn ck_report<P: Prob>(
    p: &JointDistribution<P>,
    event: &Event,
    args: &CkArgs,
    tol: f64,
    from_rational: impl Fn(BigRational) -> P,
) -> Result<CKReport<P>, Failure> {
    let p = p.clone().with_tol(tol);
    let (q_a, q_b) = match (&args.qa, &args.qb, args.i, args.j) {
        (Some(a), Some(b), _, _) => (parse_value(a, &from_rational)?, parse_value(b, &from_rational)?),
        (_, _, Some(i), Some(j)) => {
            let invalid = |e| Failure::with_code(EXIT_VALIDATION, e);
            (
                p.posterior_alice(i, event).map_err(invalid)?,
                p.posterior_bob(j, event).map_err(invalid)?,
            )
        }
        _ => return Err(Failure::with_code(EXIT_USAGE, "give either --qa and --qb, or --i and --j")),
    };
    Ok(agreement::ck_closure(&p, event, &q_a, &q_b, tol)?)
}

fn cmd_ck(s: &Scenario, args: &CkArgs, format: Format) -> Result<(String, bool), Failure> {
    let joint = s.joint()?;
    let ck = match &joint {
        Joint::Float(p) => ck_report(p, &s.event, args, s.tol, |q| Prob::to_f64(&q))?,
        Joint::Exact(p) => ck_report(p, &s.event, args, s.tol, |q| q)?.to_f64(),
    };
    let mut r = report::run_scenario(s)?;
    r.violations = usize::from(ck.is_violation());
    r.reports = vec![ck];
    let mut out = report::emit_report(&r, format);
    if let (Format::Table, Some(i), Some(j)) = (format, args.i, args.j) {
        let r0 = &r.reports[0];
        let holds = r0.a_star.contains(&i) && r0.b_star.contains(&j);
        let _ = writeln!(out, "common knowledge at ({i},{j}): {holds}");
    }
    Ok((out, r.violations == 0))
}

fn cmd_verify(files: &[PathBuf], g: &Global) -> Result<(String, bool), Failure> {
    let mut out = String::new();
    let mut ok = true;
    for (n, f) in files.iter().enumerate() {
        let s = load(f, g)?;
        let r: RunReport = report::run_scenario(&s)?;
        ok &= r.passes();
        if n > 0 && g.format == Format::Table {
            out.push('\n');
        }
        out.push_str(&report::emit_report(&r, g.format));
    }
    Ok((out, ok))
}

fn cmd_search(args: &SearchArgs, g: &Global) -> (String, bool) {
    let seed = g.seed.unwrap_or(0);
    let tol = g.tol.unwrap_or(agreelab::probability::DEFAULT_TOL);
    let s: FuzzSummary = fuzz::fuzz_search_with_tol(args.backend, args.trials, args.max_dim, seed, tol);
    let out = match g.format {
        Format::Records => {
            let mut v = serde_json::to_value(&s).expect("summary serialises");
            v.as_object_mut().expect("summary is an object").insert("record".into(), "search".into());
            records_line(v)
        }
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "backend               {}", s.backend);
            let _ = writeln!(out, "seed                  {}", s.seed);
            let _ = writeln!(out, "max dimension         {}", s.max_dim);
            let _ = writeln!(out, "trials                {}", s.trials);
            let _ = writeln!(out, "closures examined     {}", s.closures);
            let _ = writeln!(out, "violations            {}", s.violations);
            let _ = writeln!(out, "singular witnesses    {}", s.singular_witnesses);
            let _ = writeln!(out, "termination failures  {}", s.termination_failures);
            let _ = writeln!(out, "generation errors     {}", s.errors);
            let variants: Vec<String> = s.variants.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "variants              {}", variants.join(" "));
            let sizes: Vec<String> = s.closure_sizes.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let _ = writeln!(out, "|A*|+|B*| histogram   {}", sizes.join(" "));
            if !s.failing_trials.is_empty() {
                let _ = writeln!(out, "failing trials        {:?}", s.failing_trials);
            }
            out
        }
    };
    let ok = s.passes();
    (out, ok)
}

fn example_state(text: &str) -> Result<DensityMatrix, Failure> {
    match text {
        "mixed" => Ok(DensityMatrix::maximally_mixed(4)),
        "block" => {
            let m = CMatrix::from_fn(4, 4, |r, s| c(if r == s && r < 2 { 0.5 } else { 0.0 }, 0.0));
            Ok(DensityMatrix::new(m)?)
        }
        json => {
            let rows: Vec<Vec<serde_json::Value>> =
                serde_json::from_str(json).map_err(|e| Failure::runtime(format!("--state: {e}")))?;
            let entry = |v: &serde_json::Value| match v {
                serde_json::Value::Number(x) => x.as_f64().map(|x| c(x, 0.0)),
                serde_json::Value::Array(p) if p.len() == 2 => Some(c(p[0].as_f64()?, p[1].as_f64()?)),
                _ => None,
            };
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(Failure::runtime("--state must be a square matrix"));
            }
            let mut m = CMatrix::zeros(n, n);
            for (r, row) in rows.iter().enumerate() {
                for (s, v) in row.iter().enumerate() {
                    m[(r, s)] = entry(v).ok_or_else(|| Failure::runtime("--state entries are numbers or [re, im]"))?;
                }
            }
            Ok(DensityMatrix::new(m)?)
        }
    }
}

fn cmd_example(args: &ExampleArgs, g: &Global) -> Result<(String, bool), Failure> {
    let validation = |e| Failure::with_code(EXIT_VALIDATION, e);
    let rho = example_state(&args.state)?;
    let s = quantum::paper_example(args.theta, args.phi, args.q, args.r, rho).map_err(validation)?;
    let (closed_a, closed_b) = quantum::closed_form_posteriors(args.theta, args.phi, args.q, args.r).map_err(validation)?;
    let tol = g.tol.unwrap_or(agreelab::probability::DEFAULT_TOL);
    let p = quantum::sequential_joint(&s)?.with_tol(tol);
    let pipe_a = p.posteriors_alice(s.event())?;
    let pipe_b = p.posteriors_bob(s.event())?;
    let reports = agreement::verify_agreement(&p, s.event(), tol)?;
    let violations = agreement::count_violations(&reports);

    let mut rows = Vec::new();
    let mut ok = violations == 0;
    for (agent, pipe, closed) in [("A", &pipe_a, &closed_a), ("B", &pipe_b, &closed_b)] {
        for (x, (got, want)) in pipe.iter().zip(closed.iter()).enumerate() {
            let diff = got.map(|g| (g - want).abs());
            // outcomes of zero probability have no posterior to compare
            ok &= diff.is_none_or(|d| d <= EXAMPLE_TOL);
            rows.push((agent, x, *got, *want, diff));
        }
    }
    let blocks: Vec<(usize, usize)> = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).collect();
    let mut block_ck = Vec::new();
    for &(i, j) in &blocks {
        if p.prob_ij(i, j) > tol {
            block_ck.push((i, j, agreement::is_common_knowledge(&p, s.event(), i, j, tol)?));
        }
    }

    let out = match g.format {
        Format::Records => {
            let mut out = String::new();
            for (agent, x, got, want, diff) in &rows {
                out.push_str(&records_line(serde_json::json!({
                    "record": "posterior",
                    "agent": agent,
                    "outcome": x,
                    "pipeline": got.map(round12),
                    "closed_form": round12(*want),
                    "deviation": diff.map(round12),
                })));
            }
            for (i, j, holds) in &block_ck {
                out.push_str(&records_line(serde_json::json!({
                    "record": "block",
                    "i": i,
                    "j": j,
                    "common_knowledge": holds,
                })));
            }
            out.push_str(&records_line(serde_json::json!({
                "record": "summary",
                "closures": reports.len(),
                "violations": violations,
                "matches": ok,
            })));
            out
        }
        Format::Table => {
            let mut out = format!(
                "theta {}  phi {}  q {}  r {}  state {}\n",
                fmt_num(args.theta),
                fmt_num(args.phi),
                fmt_num(args.q),
                fmt_num(args.r),
                args.state
            );
            let _ = writeln!(out, "{:<6} {:<8} {:<16} {:<16} |diff|", "agent", "outcome", "pipeline", "closed form");
            for (agent, x, got, want, diff) in &rows {
                let _ = writeln!(
                    out,
                    "{:<6} {:<8} {:<16} {:<16} {}",
                    agent,
                    x,
                    got.map_or_else(|| "-".into(), fmt_num),
                    fmt_num(*want),
                    diff.map_or_else(|| "-".into(), |d| format!("{d:.1e}"))
                );
            }
            let listed: BTreeSet<String> = block_ck
                .iter()
                .map(|(i, j, h)| format!("({i},{j}):{}", if *h { "ck" } else { "no-ck" }))
                .collect();
            let _ = writeln!(out, "block pairs  {}", listed.into_iter().collect::<Vec<_>>().join(" "));
            let _ = writeln!(out, "closures {}, violations {}, closed forms {}", reports.len(), violations, if ok { "match" } else { "DIFFER" });
            out
        }
    };
    Ok((out, ok))
}

fn run(cli: &Cli) -> Result<(String, bool), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Joint { file } => Ok((cmd_joint(&load(file, g)?, g.format)?, true)),
        Command::Posteriors { file } => Ok((cmd_posteriors(&load(file, g)?, g.format)?, true)),
        Command::Ck(args) => cmd_ck(&load(&args.file, g)?, args, g.format),
        Command::Verify { files } => cmd_verify(files, g),
        Command::Search(args) => Ok(cmd_search(args, g)),
        Command::PaperExample(args) => cmd_example(args, g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((out, ok)) => {
            print!("{out}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
