//! Running scenarios and rendering their results.
//!
//! Two output formats are supported. `table` is an aligned human-readable
//! listing. `records` is line-delimited JSON: one `run` record followed by
//! one `ck` record per closure, with fixed field order and every float
//! rounded to 12 significant digits so that output is byte-for-byte
//! reproducible.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agreement::{self, CKReport};
use crate::error::Result;
use crate::probability::{Event, JointDistribution, Prob};
use crate::scenario::{Joint, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub backend: String,
    pub exact: bool,
    pub shape: [usize; 3],
    pub event: Vec<usize>,
    /// Row-major joint table, when echoed.
    pub joint: Option<Vec<f64>>,
    pub posteriors_alice: Vec<Option<f64>>,
    pub posteriors_bob: Vec<Option<f64>>,
    pub reports: Vec<CKReport<f64>>,
    pub violations: usize,
    pub singular_witnesses: Vec<(usize, usize)>,
}

impl RunReport {
    pub fn passes(&self) -> bool {
        self.violations == 0 && self.singular_witnesses.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Records,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" => Ok(Format::Table),
            "records" => Ok(Format::Records),
            _ => Err(format!("unknown format `{s}` (expected table or records)")),
        }
    }
}

/// Posterior tables, all closures and the singular-disagreement check for one joint table.
pub fn analyze<P: Prob>(
    id: &str,
    backend: &str,
    p: &JointDistribution<P>,
    event: &Event,
    tol: f64,
    echo_joint: bool,
) -> Result<RunReport> {
    let p = p.clone().with_tol(tol);
    let to_f64 = |v: Vec<Option<P>>| v.into_iter().map(|x| x.map(|x| x.to_f64())).collect();
    let reports = agreement::verify_agreement(&p, event, tol)?;
    Ok(RunReport {
        scenario: id.to_string(),
        backend: backend.to_string(),
        exact: P::slack(1.0).is_zero(),
        shape: p.space().sizes(),
        event: event.members().iter().copied().collect(),
        joint: echo_joint.then(|| p.values().iter().map(Prob::to_f64).collect()),
        posteriors_alice: to_f64(p.posteriors_alice(event)?),
        posteriors_bob: to_f64(p.posteriors_bob(event)?),
        violations: agreement::count_violations(&reports),
        reports: reports.iter().map(CKReport::to_f64).collect(),
        singular_witnesses: agreement::singular_disagreement_witnesses(&p, event, tol)?,
    })
}

/// Computes the scenario's joint table and runs the agreement checks on it.
pub fn run_scenario(s: &Scenario) -> Result<RunReport> {
    run_scenario_with(s, false)
}

pub fn run_scenario_with(s: &Scenario, echo_joint: bool) -> Result<RunReport> {
    match s.joint()? {
        Joint::Float(p) => analyze(&s.id, s.backend.name(), &p, &s.event, s.tol, echo_joint),
        Joint::Exact(p) => analyze(&s.id, s.backend.name(), &p, &s.event, s.tol, echo_joint),
    }
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn rounded(r: &RunReport) -> RunReport {
    let opt = |v: &[Option<f64>]| v.iter().map(|x| x.map(round12)).collect();
    RunReport {
        joint: r.joint.as_ref().map(|v| v.iter().copied().map(round12).collect()),
        posteriors_alice: opt(&r.posteriors_alice),
        posteriors_bob: opt(&r.posteriors_bob),
        reports: r
            .reports
            .iter()
            .map(|c| CKReport {
                q_a: round12(c.q_a),
                q_b: round12(c.q_b),
                mass_a_star: round12(c.mass_a_star),
                mass_b_star: round12(c.mass_b_star),
                ..c.clone()
            })
            .collect(),
        ..r.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Run {
        scenario: String,
        backend: String,
        exact: bool,
        shape: [usize; 3],
        event: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        joint: Option<Vec<f64>>,
        posteriors_alice: Vec<Option<f64>>,
        posteriors_bob: Vec<Option<f64>>,
        closures: usize,
        violations: usize,
        singular_witnesses: Vec<(usize, usize)>,
    },
    Ck {
        scenario: String,
        index: usize,
        q_a: f64,
        q_b: f64,
        a_star: BTreeSet<usize>,
        b_star: BTreeSet<usize>,
        steps: usize,
        ck_holds: bool,
        agrees: bool,
        mass_a_star: f64,
        mass_b_star: f64,
        witness: Option<(usize, usize)>,
    },
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| round12(v).to_string())
}

fn fmt_set(s: &BTreeSet<usize>) -> String {
    let items: Vec<String> = s.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

pub fn emit_report(r: &RunReport, format: Format) -> String {
    match format {
        Format::Records => emit_records(r),
        Format::Table => emit_table(r),
    }
}

fn emit_records(r: &RunReport) -> String {
    let r = rounded(r);
    let mut out = String::new();
    let mut line = |rec: &Record| {
        out.push_str(&serde_json::to_string(rec).expect("records serialise"));
        out.push('\n');
    };
    line(&Record::Run {
        scenario: r.scenario.clone(),
        backend: r.backend.clone(),
        exact: r.exact,
        shape: r.shape,
        event: r.event.clone(),
        joint: r.joint.clone(),
        posteriors_alice: r.posteriors_alice.clone(),
        posteriors_bob: r.posteriors_bob.clone(),
        closures: r.reports.len(),
        violations: r.violations,
        singular_witnesses: r.singular_witnesses.clone(),
    });
    for (index, c) in r.reports.iter().enumerate() {
        line(&Record::Ck {
            scenario: r.scenario.clone(),
            index,
            q_a: c.q_a,
            q_b: c.q_b,
            a_star: c.a_star.clone(),
            b_star: c.b_star.clone(),
            steps: c.steps,
            ck_holds: c.ck_holds,
            agrees: c.agrees,
            mass_a_star: c.mass_a_star,
            mass_b_star: c.mass_b_star,
            witness: c.witness,
        });
    }
    out
}

fn emit_table(r: &RunReport) -> String {
    let mut out = String::new();
    let [ni, nj, nk] = r.shape;
    let fmt_posts = |v: &[Option<f64>]| v.iter().map(|&x| fmt_opt(x)).collect::<Vec<_>>().join("  ");
    let _ = writeln!(out, "scenario  {}", r.scenario);
    let _ = writeln!(out, "backend   {}{}", r.backend, if r.exact { " (exact)" } else { "" });
    let _ = writeln!(out, "outcomes  {ni} x {nj} x {nk}, event {:?}", r.event);
    let _ = writeln!(out, "q_A(i)    {}", fmt_posts(&r.posteriors_alice));
    let _ = writeln!(out, "q_B(j)    {}", fmt_posts(&r.posteriors_bob));
    let _ = writeln!(
        out,
        "violations {}, singular disagreements {}",
        r.violations,
        r.singular_witnesses.len()
    );
    let header = [
        "q_A", "q_B", "A*", "B*", "steps", "ck", "agrees", "mass(A*)", "mass(B*)", "witness",
    ];
    let rows: Vec<[String; 10]> = r
        .reports
        .iter()
        .map(|c| {
            [
                fmt_opt(Some(c.q_a)),
                fmt_opt(Some(c.q_b)),
                fmt_set(&c.a_star),
                fmt_set(&c.b_star),
                c.steps.to_string(),
                c.ck_holds.to_string(),
                c.agrees.to_string(),
                fmt_opt(Some(c.mass_a_star)),
                fmt_opt(Some(c.mass_b_star)),
                c.witness.map_or_else(|| "-".into(), |(i, j)| format!("({i},{j})")),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|col| rows.iter().map(|row| row[col].len()).chain([header[col].len()]).max().unwrap_or(0))
        .collect();
    let render = |cells: &[&str]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", render(&header));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}", render(&cells));
    }
    out
}

/// Reads a `records` stream produced by [`emit_report`] back into reports.
pub fn parse_records(text: &str) -> std::result::Result<Vec<RunReport>, String> {
    let mut out: Vec<RunReport> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: Record = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        match rec {
            Record::Run {
                scenario,
                backend,
                exact,
                shape,
                event,
                joint,
                posteriors_alice,
                posteriors_bob,
                closures: _,
                violations,
                singular_witnesses,
            } => out.push(RunReport {
                scenario,
                backend,
                exact,
                shape,
                event,
                joint,
                posteriors_alice,
                posteriors_bob,
                reports: Vec::new(),
                violations,
                singular_witnesses,
            }),
            Record::Ck {
                scenario,
                index,
                q_a,
                q_b,
                a_star,
                b_star,
                steps,
                ck_holds,
                agrees,
                mass_a_star,
                mass_b_star,
                witness,
            } => {
                let run = out
                    .last_mut()
                    .filter(|r| r.scenario == scenario && r.reports.len() == index)
                    .ok_or_else(|| format!("line {}: closure record out of sequence", n + 1))?;
                run.reports.push(CKReport {
                    q_a,
                    q_b,
                    a_star,
                    b_star,
                    steps,
                    ck_holds,
                    agrees,
                    mass_a_star,
                    mass_b_star,
                    witness,
                });
            }
        }
    }
    Ok(out)
}
