//! Support probe (box-event frequency for the variance path) and the
//! near-zero density-ratio check as standalone commands.

use clap::Args;
use mgp_core::prior::{full_support_probe, theta_moment, MgpHyperparams};
use mgp_core::shrinkage::{tail_density_ratio_check, TailRatioReport, TailRatioVerdict};
use serde::Serialize;

use crate::output::{full, two_dec, Emitter, RunManifest, Table};
use crate::table::OutArgs;
use crate::CliError;

#[derive(Args, Serialize)]
pub struct ProbeArgs {
    /// First-column increment shape
    #[arg(long, default_value_t = 3.0)]
    pub a1: f64,
    /// Later-column increment shape
    #[arg(long, default_value_t = 3.0)]
    pub a2: f64,
    /// Number of columns (box dimension)
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Box centre as "v1,v2,..."; defaults to the prior variance means
    #[arg(long)]
    pub target: Option<String>,
    /// Box half-width per coordinate
    #[arg(long, default_value_t = 2.0)]
    pub eps: f64,
    /// Monte Carlo draws
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct ProbePayload {
    hyper: MgpHyperparams,
    target: Vec<f64>,
    eps: f64,
    n_samples: usize,
    seed: u64,
    frequency: f64,
    hits: u64,
}

pub fn support_probe(args: &ProbeArgs) -> Result<(), CliError> {
    let hp = MgpHyperparams::new(args.a1, args.a2, args.k)?;
    let target: Vec<f64> = match &args.target {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("target entry {t:?} is not a number")))
            })
            .collect::<Result<_, _>>()?,
        None => (1..=args.k)
            .map(|h| {
                theta_moment(h, 1.0, &hp).map_err(|_| {
                    CliError::Config(
                        "prior variance means diverge for these shapes; pass --target".into(),
                    )
                })
            })
            .collect::<Result<_, _>>()?,
    };
    let frequency = full_support_probe(&target, args.eps, args.samples, &hp, args.seed)?;
    let payload = ProbePayload {
        hyper: hp,
        target: target.clone(),
        eps: args.eps,
        n_samples: args.samples,
        seed: args.seed,
        frequency,
        hits: (frequency * args.samples as f64).round() as u64,
    };
    println!(
        "box frequency: {:.6e} ({} of {} draws)",
        payload.frequency, payload.hits, payload.n_samples
    );

    let manifest = RunManifest::new("support-probe", args, args.seed, vec![args.samples]);
    let mut em = Emitter::new(&args.out.out, manifest, args.out.format)?;
    em.plan(&["support_probe.json", "support_probe.csv", "support_probe_display.csv"]);
    em.json("support_probe", &payload)?;
    let mut headers = vec![
        "frequency".to_string(),
        "hits".into(),
        "eps".into(),
        "samples".into(),
        "seed".into(),
    ];
    for h in 1..=args.k {
        headers.push(format!("target_{h}"));
    }
    let mut row = vec![
        full(payload.frequency),
        payload.hits.to_string(),
        full(payload.eps),
        payload.n_samples.to_string(),
        payload.seed.to_string(),
    ];
    let mut drow = vec![
        format!("{:.2e}", payload.frequency),
        payload.hits.to_string(),
        two_dec(payload.eps),
        payload.n_samples.to_string(),
        payload.seed.to_string(),
    ];
    for v in &payload.target {
        row.push(full(*v));
        drow.push(two_dec(*v));
    }
    em.csv(
        "support_probe",
        &Table { headers, rows: vec![row], display_rows: vec![drow] },
    )?;
    em.finish();
    Ok(())
}

#[derive(Args, Serialize)]
pub struct DensityArgs {
    /// First-column increment shape
    #[arg(long, default_value_t = 2.0)]
    pub a1: f64,
    /// Later-column increment shape
    #[arg(long, default_value_t = 2.0)]
    pub a2: f64,
    /// Which consecutive-column transition to trace (1-based)
    #[arg(long, default_value_t = 1)]
    pub transition: usize,
    /// Largest grid value
    #[arg(long, default_value_t = 0.1)]
    pub theta_max: f64,
    /// Smallest grid value
    #[arg(long, default_value_t = 1e-6)]
    pub theta_min: f64,
    /// Grid points (log-spaced, decreasing)
    #[arg(long, default_value_t = 26)]
    pub points: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct DensityPayload {
    hyper: MgpHyperparams,
    report: TailRatioReport,
}

pub fn verdict_word(v: &TailRatioVerdict) -> &'static str {
    match v {
        TailRatioVerdict::Pass => "pass",
        TailRatioVerdict::Fail => "fail",
        TailRatioVerdict::BelowPrecision => "below-precision",
    }
}

pub fn density_check(args: &DensityArgs) -> Result<(), CliError> {
    if !(args.theta_min > 0.0 && args.theta_max > args.theta_min) {
        return Err(CliError::Config(format!(
            "need theta_max > theta_min > 0, got {} and {}",
            args.theta_max, args.theta_min
        )));
    }
    if args.points < 2 {
        return Err(CliError::Config("need at least 2 grid points".into()));
    }
    let hp = MgpHyperparams::new(args.a1, args.a2, args.transition + 1)?;
    let (lo, hi) = (args.theta_min.ln(), args.theta_max.ln());
    let grid: Vec<f64> = (0..args.points)
        .map(|i| (hi + (lo - hi) * i as f64 / (args.points - 1) as f64).exp())
        .collect();
    let report = tail_density_ratio_check(&hp, args.transition, &grid)?;
    println!("verdict: {}", verdict_word(&report.verdict));

    let manifest = RunManifest::new("density-check", args, 0, vec![args.points]);
    let mut em = Emitter::new(&args.out.out, manifest, args.out.format)?;
    em.plan(&["density_check.json", "density_check.csv", "density_check_display.csv"]);
    let mut headers = vec!["theta".to_string()];
    if report.theta_prev.is_empty() {
        headers.push("log_ratio".into());
    } else {
        for v in &report.theta_prev {
            headers.push(format!("log_ratio_prev_{v}"));
        }
    }
    let mut rows = Vec::new();
    let mut display = Vec::new();
    for (i, &theta) in report.grid.iter().enumerate() {
        let mut r = vec![full(theta)];
        let mut d = vec![format!("{theta:.2e}")];
        for trace in &report.log_ratios {
            r.push(full(trace[i]));
            d.push(two_dec(trace[i]));
        }
        rows.push(r);
        display.push(d);
    }
    em.csv("density_check", &Table { headers, rows, display_rows: display })?;
    let payload = DensityPayload { hyper: hp, report };
    em.json("density_check", &payload)?;
    em.finish();
    Ok(())
}
