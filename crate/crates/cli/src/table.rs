//! The two reference tables: prior quartiles per column, and per-transition
//! shrinkage bounds with their intersection.

use clap::Args;
use mgp_core::prior::MgpHyperparams;
use mgp_core::shrinkage::{estimate_quantile_table, shrinkage_region, ShrinkageBound, ShrinkageRegion};
use serde::Serialize;
use std::path::PathBuf;

use crate::output::{full, two_dec, Emitter, Format, RunManifest, Table};
use crate::CliError;

#[derive(Args, Serialize, Clone)]
pub struct OutArgs {
    /// Output directory (created if missing)
    #[arg(long, default_value = "mgp-out")]
    pub out: PathBuf,
    /// Restrict artifacts to one family; both are written when omitted
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Serialize)]
pub struct Table1Args {
    /// First-column increment shape
    #[arg(long, default_value_t = 1.0)]
    pub a1: f64,
    /// Later-column increment shape
    #[arg(long, default_value_t = 1.1)]
    pub a2: f64,
    /// Number of columns
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Monte Carlo draws
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

pub fn table1(args: &Table1Args) -> Result<(), CliError> {
    let hp = MgpHyperparams::new(args.a1, args.a2, args.k)?;
    let tab = estimate_quantile_table(&hp, &[0.25, 0.5, 0.75], args.samples, args.seed)?;
    let manifest = RunManifest::new("table1", args, args.seed, vec![args.samples]);
    let mut em = Emitter::new(&args.out.out, manifest, args.out.format)?;
    em.plan(&["table1.json", "table1.csv", "table1_display.csv"]);
    em.json("table1", &tab)?;
    let headers = [
        "h", "tau_q1", "tau_q2", "tau_q3", "theta_q1", "theta_q2", "theta_q3", "lambda_iqr",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    let mut display = Vec::new();
    for r in &tab.rows {
        let nums = [
            r.tau_q[0], r.tau_q[1], r.tau_q[2], r.theta_q[0], r.theta_q[1], r.theta_q[2],
            r.lambda_iqr,
        ];
        let mut row = vec![r.h.to_string()];
        row.extend(nums.iter().map(|v| full(*v)));
        rows.push(row);
        let mut row = vec![r.h.to_string()];
        row.extend(nums.iter().map(|v| two_dec(*v)));
        display.push(row);
    }
    em.csv("table1", &Table { headers, rows, display_rows: display })?;
    em.finish();
    Ok(())
}

#[derive(Args, Serialize)]
pub struct Table2Args {
    /// Shape pair as "A1,A2"; repeat for several rows. Defaults to the six
    /// reference combinations.
    #[arg(long = "setting", value_name = "A1,A2")]
    pub settings: Vec<String>,
    /// Number of columns (k−1 transitions)
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Monte Carlo draws per solve
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Search ceiling; larger bounds render as ">cap"
    #[arg(long, default_value_t = 100.0)]
    pub cap: f64,
    /// Bisection resolution
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct RegionRow {
    a1: f64,
    a2: f64,
    region: ShrinkageRegion,
}

const DEFAULT_SETTINGS: [(f64, f64); 6] = [
    (1.0, 1.0),
    (1.0, 2.0),
    (1.0, 3.0),
    (2.0, 1.0),
    (2.0, 2.0),
    (2.0, 3.0),
];

fn parse_pair(s: &str) -> Result<(f64, f64), CliError> {
    let err = || CliError::Config(format!("setting must look like \"2.0,1.0\", got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(err)?;
    Ok((
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    ))
}

/// Cap rendered the way the tables print it: no trailing ".0".
pub fn cap_str(cap: f64) -> String {
    if (cap - cap.round()).abs() < 1e-9 {
        format!("{cap:.0}")
    } else {
        format!("{cap}")
    }
}

/// (full-precision cell, 2-decimal display cell) for one solver outcome.
pub fn bound_cells(b: &ShrinkageBound, cap: f64) -> (String, String) {
    match b {
        ShrinkageBound::Bounded { theta } => (full(*theta), two_dec(*theta)),
        ShrinkageBound::ExceedsCap => {
            let s = format!(">{}", cap_str(cap));
            (s.clone(), s)
        }
        ShrinkageBound::Indeterminate { theta, gap, se } => (
            format!("indeterminate({theta};gap={gap};se={se})"),
            format!("indeterminate(~{theta:.2})"),
        ),
    }
}

pub fn table2(args: &Table2Args) -> Result<(), CliError> {
    let pairs: Vec<(f64, f64)> = if args.settings.is_empty() {
        DEFAULT_SETTINGS.to_vec()
    } else {
        args.settings
            .iter()
            .map(|s| parse_pair(s))
            .collect::<Result<_, _>>()?
    };
    let mut payload = Vec::with_capacity(pairs.len());
    for &(a1, a2) in &pairs {
        let hp = MgpHyperparams::new(a1, a2, args.k)?;
        let region = shrinkage_region(&hp, args.samples, args.cap, args.tol, args.seed)?;
        payload.push(RegionRow { a1, a2, region });
    }
    let manifest = RunManifest::new("table2", args, args.seed, vec![args.samples]);
    let mut em = Emitter::new(&args.out.out, manifest, args.out.format)?;
    em.plan(&["table2.json", "table2.csv", "table2_display.csv"]);
    em.json("table2", &payload)?;
    let mut headers = vec!["a1".to_string(), "a2".to_string()];
    for h in 1..args.k {
        headers.push(format!("bound_{h}"));
    }
    headers.push("intersection".into());
    let mut rows = Vec::new();
    let mut display = Vec::new();
    for row in &payload {
        let mut r = vec![full(row.a1), full(row.a2)];
        let mut d = vec![two_dec(row.a1), two_dec(row.a2)];
        for b in &row.region.bounds {
            let (rf, rd) = bound_cells(b, args.cap);
            r.push(rf);
            d.push(rd);
        }
        let (rf, rd) = bound_cells(&row.region.intersection, args.cap);
        r.push(rf);
        d.push(rd);
        rows.push(r);
        display.push(d);
    }
    em.csv("table2", &Table { headers, rows, display_rows: display })?;
    em.finish();
    Ok(())
}
