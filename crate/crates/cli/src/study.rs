//! Paired factor-model study: the cumulative-product prior settings against
//! an independent-gamma baseline on shared synthetic datasets.

use clap::Args;
use mgp_core::factor::{compare_settings, ComparisonReport, FactorModelConfig, PriorSetting};
use mgp_core::prior::MgpHyperparams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::output::{full, two_dec, Emitter, RunManifest, Table};
use crate::table::OutArgs;
use crate::CliError;

#[derive(clap::ValueEnum, Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 30,000 retained sweeps after 5,000 burn-in
    Full,
    /// 2,000 retained sweeps after 500 burn-in
    Desk,
}

#[derive(Args, Serialize)]
pub struct StudyArgs {
    /// TOML file overriding the defaults (fields mirror the sampler config)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Iteration budget shorthand; wins over the config file when given
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Study seed; wins over the config file when given
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

/// On-disk study description. Every field is optional; omitted ones keep the
/// defaults that reproduce the reference comparison.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    preset: Option<Preset>,
    p: Option<usize>,
    n: Option<usize>,
    k_trunc: Option<usize>,
    upsilon: Option<f64>,
    a_sigma: Option<f64>,
    b_sigma: Option<f64>,
    /// Total sweeps including burn-in.
    iterations: Option<usize>,
    burnin: Option<usize>,
    seed: Option<u64>,
    replicates: Option<usize>,
    k0_list: Option<Vec<usize>>,
    settings: Option<Vec<SettingSpec>>,
}

#[derive(Deserialize, Serialize, Clone, Copy)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SettingSpec {
    Multiplicative { a1: f64, a2: f64 },
    IndependentGamma,
}

impl From<SettingSpec> for PriorSetting {
    fn from(s: SettingSpec) -> Self {
        match s {
            SettingSpec::Multiplicative { a1, a2 } => PriorSetting::Multiplicative { a1, a2 },
            SettingSpec::IndependentGamma => PriorSetting::IndependentGamma,
        }
    }
}

/// Fully resolved study; serialized into the manifest so an artifact is
/// self-describing even when the config file is gone.
#[derive(Serialize)]
struct Resolved {
    p: usize,
    n: usize,
    k_trunc: usize,
    upsilon: f64,
    a_sigma: f64,
    b_sigma: f64,
    iterations: usize,
    burnin: usize,
    seed: u64,
    replicates: usize,
    k0_list: Vec<usize>,
    settings: Vec<String>,
}

fn apply_preset(preset: Preset, iterations: &mut usize, burnin: &mut usize) {
    match preset {
        Preset::Full => {
            *iterations = 35_000;
            *burnin = 5_000;
        }
        Preset::Desk => {
            *iterations = 2_500;
            *burnin = 500;
        }
    }
}

fn file_label(s: &SettingSpec) -> String {
    PriorSetting::from(*s).label()
}

fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() || c == '.' {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

pub fn simstudy(args: &StudyArgs) -> Result<(), CliError> {
    let file: StudyFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => StudyFile::default(),
    };

    let mut iterations = 35_000;
    let mut burnin = 5_000;
    if let Some(p) = file.preset {
        apply_preset(p, &mut iterations, &mut burnin);
    }
    if let Some(i) = file.iterations {
        iterations = i;
    }
    if let Some(b) = file.burnin {
        burnin = b;
    }
    if let Some(p) = args.preset {
        apply_preset(p, &mut iterations, &mut burnin);
    }

    let settings: Vec<PriorSetting> = match &file.settings {
        Some(list) => list.iter().copied().map(PriorSetting::from).collect(),
        None => vec![
            PriorSetting::Multiplicative { a1: 2.0, a2: 1.0 },
            PriorSetting::Multiplicative { a1: 2.0, a2: 2.0 },
            PriorSetting::Multiplicative { a1: 2.0, a2: 3.0 },
            PriorSetting::IndependentGamma,
        ],
    };
    let resolved = Resolved {
        p: file.p.unwrap_or(10),
        n: file.n.unwrap_or(100),
        k_trunc: file.k_trunc.unwrap_or(10),
        upsilon: file.upsilon.unwrap_or(3.0),
        a_sigma: file.a_sigma.unwrap_or(1.0),
        b_sigma: file.b_sigma.unwrap_or(0.3),
        iterations,
        burnin,
        seed: args.seed.or(file.seed).unwrap_or(424_242),
        replicates: file.replicates.unwrap_or(5),
        k0_list: file.k0_list.unwrap_or_else(|| vec![2, 6]),
        settings: file
            .settings
            .as_ref()
            .map(|l| l.iter().map(file_label).collect())
            .unwrap_or_else(|| settings.iter().map(PriorSetting::label).collect()),
    };

    // Everything is checked here, before any chain runs.
    if settings.is_empty() {
        return Err(CliError::Config("settings list is empty; give at least one prior".into()));
    }
    if resolved.k0_list.is_empty() {
        return Err(CliError::Config("k0_list is empty".into()));
    }
    if resolved.replicates == 0 {
        return Err(CliError::Config("replicates must be at least 1".into()));
    }
    if resolved.iterations <= resolved.burnin {
        return Err(CliError::Config(format!(
            "iterations ({}) must exceed burnin ({})",
            resolved.iterations, resolved.burnin
        )));
    }
    for (name, v) in [("p", resolved.p), ("n", resolved.n), ("k_trunc", resolved.k_trunc)] {
        if v == 0 {
            return Err(CliError::Config(format!("{name} must be at least 1")));
        }
    }
    for &k0 in &resolved.k0_list {
        if k0 == 0 || k0 > resolved.k_trunc {
            return Err(CliError::Config(format!(
                "k0 must lie in 1..=k_trunc ({}), got {k0}",
                resolved.k_trunc
            )));
        }
    }
    let template = FactorModelConfig {
        p: resolved.p,
        n: resolved.n,
        k0: resolved.k0_list[0],
        k_trunc: resolved.k_trunc,
        hp: MgpHyperparams::new(2.0, 2.0, resolved.k_trunc)?.with_upsilon(resolved.upsilon)?,
        a_sigma: resolved.a_sigma,
        b_sigma: resolved.b_sigma,
        iterations: resolved.iterations,
        burnin: resolved.burnin,
        seed: 0,
    };
    for s in &settings {
        if let PriorSetting::Multiplicative { a1, a2 } = s {
            MgpHyperparams::new(*a1, *a2, resolved.k_trunc)?;
        }
    }

    let report = compare_settings(
        &template,
        &settings,
        &resolved.k0_list,
        resolved.replicates,
        resolved.seed,
    )?;
    print_summary(&report);

    let manifest = RunManifest::new(
        "simstudy",
        serde_json::json!({ "args": args, "resolved": resolved }),
        resolved.seed,
        vec![resolved.iterations, resolved.burnin],
    );
    let mut em = Emitter::new(&args.out.out, manifest, args.out.format)?;
    let mut planned = vec![
        "study.json".to_string(),
        "medians.csv".into(),
        "medians_display.csv".into(),
        "best_counts.csv".into(),
        "best_counts_display.csv".into(),
    ];
    for block in &report.blocks {
        for label in &block.labels {
            let base = format!("d_k{}_{}", block.k0, slug(label));
            planned.push(format!("{base}.csv"));
            planned.push(format!("{base}_display.csv"));
        }
    }
    let planned_refs: Vec<&str> = planned.iter().map(String::as_str).collect();
    em.plan(&planned_refs);

    em.json("study", &report)?;
    em.csv("medians", &medians_table(&report))?;
    em.csv("best_counts", &best_counts_table(&report))?;
    for block in &report.blocks {
        for (si, rep) in block.first_replicate.iter().enumerate() {
            let name = format!("d_k{}_{}", block.k0, slug(&block.labels[si]));
            let headers = vec!["j".to_string(), "s".to_string(), "d".to_string()];
            let mut rows = Vec::new();
            let mut display = Vec::new();
            for (j, row) in rep.d.iter().enumerate() {
                for (s, &v) in row.iter().enumerate() {
                    rows.push(vec![j.to_string(), s.to_string(), full(v)]);
                    display.push(vec![j.to_string(), s.to_string(), two_dec(v)]);
                }
            }
            em.csv(&name, &Table { headers, rows, display_rows: display })?;
        }
    }
    em.finish();
    Ok(())
}

fn medians_table(report: &ComparisonReport) -> Table {
    let headers = ["k0", "setting", "replicate", "median_d"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut display = Vec::new();
    for block in &report.blocks {
        for (si, label) in block.labels.iter().enumerate() {
            for r in 0..report.replicates {
                let v = block.medians[si][r];
                let head = vec![block.k0.to_string(), label.clone(), r.to_string()];
                rows.push([head.clone(), vec![full(v)]].concat());
                display.push([head, vec![two_dec(v)]].concat());
            }
        }
    }
    Table { headers, rows, display_rows: display }
}

/// `best_count` is the single-dataset count (first replicate); the
/// replicate-averaged variant rides along as a last column.
fn best_counts_table(report: &ComparisonReport) -> Table {
    let headers = ["setting", "k0", "best_count", "median_d", "best_count_averaged"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    let mut display = Vec::new();
    for block in &report.blocks {
        for (si, label) in block.labels.iter().enumerate() {
            let mut meds = block.medians[si].clone();
            meds.sort_by(f64::total_cmp);
            let med = mgp_core::stats::quantile_sorted(&meds, 0.5);
            let head = vec![
                label.clone(),
                block.k0.to_string(),
                block.best_counts_single[si].to_string(),
            ];
            let tail = vec![block.best_counts_averaged[si].to_string()];
            rows.push([head.clone(), vec![full(med)], tail.clone()].concat());
            display.push([head, vec![two_dec(med)], tail].concat());
        }
    }
    Table { headers, rows, display_rows: display }
}

fn print_summary(report: &ComparisonReport) {
    for block in &report.blocks {
        let fmt = |counts: &[usize]| {
            block
                .labels
                .iter()
                .zip(counts)
                .map(|(l, c)| format!("{l}={c}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        println!("k0={} best-entry counts (single dataset): {}", block.k0, fmt(&block.best_counts_single));
        println!("k0={} best-entry counts (averaged):       {}", block.k0, fmt(&block.best_counts_averaged));
        for (si, label) in block.labels.iter().enumerate() {
            let mut meds = block.medians[si].clone();
            meds.sort_by(f64::total_cmp);
            println!(
                "k0={} {label}: median over replicates {:.4}",
                block.k0,
                mgp_core::stats::quantile_sorted(&meds, 0.5)
            );
        }
    }
}
