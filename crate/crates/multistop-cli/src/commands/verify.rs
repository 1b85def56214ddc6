use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use multistop::oracle::EnumerationBudget;
use multistop::verify::{run_matrix, MatrixConfig};

use crate::fmt::{f64_repr, json_string};
use crate::inputs::load_config;
use crate::{engine_err, write_out, CliError};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// JSON config supplying defaults for any flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds (0..N).
    #[arg(long)]
    seeds: Option<u64>,
    /// Binary tree depth of the cross-check matrix (at most 4).
    #[arg(long)]
    depth: Option<usize>,
    /// Budget override: max enumerated rules.
    #[arg(long)]
    max_rules: Option<u64>,
    /// Budget override: max evaluated rule pairs.
    #[arg(long)]
    max_pairs: Option<u64>,
    /// Self-test hook: inject a sign flip that must be caught.
    #[arg(long, hide = true)]
    inject_fault: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    seeds: Option<u64>,
    depth: Option<usize>,
    max_rules: Option<u64>,
    max_pairs: Option<u64>,
    inject_fault: Option<bool>,
    out: Option<PathBuf>,
}

pub fn run(mut args: VerifyArgs) -> Result<(), CliError> {
    let cfg: VerifyConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => VerifyConfig::default(),
    };
    args.seeds = args.seeds.or(cfg.seeds);
    args.depth = args.depth.or(cfg.depth);
    args.max_rules = args.max_rules.or(cfg.max_rules);
    args.max_pairs = args.max_pairs.or(cfg.max_pairs);
    args.inject_fault = args.inject_fault || cfg.inject_fault.unwrap_or(false);
    args.out = args.out.or(cfg.out);

    let out = args
        .out
        .clone()
        .ok_or_else(|| CliError::Input("missing --out directory".into()))?;
    let mut budget = EnumerationBudget::default();
    if let Some(m) = args.max_rules {
        budget.max_rules = m as u128;
    }
    if let Some(m) = args.max_pairs {
        budget.max_pairs = m as u128;
    }
    let matrix = MatrixConfig {
        seeds: args.seeds.unwrap_or(100),
        depths: vec![args.depth.unwrap_or(3)],
        budget,
        inject_fault: args.inject_fault,
        ..MatrixConfig::default()
    };

    let report = run_matrix(&matrix).map_err(engine_err)?;

    fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    let violations: Vec<String> = report
        .violations
        .iter()
        .map(|v| {
            format!(
                "{{\"seed\": {}, \"depth\": {}, \"property\": {}, \"magnitude\": {}}}",
                v.seed,
                v.depth,
                json_string(&v.property),
                f64_repr(v.magnitude)
            )
        })
        .collect();
    let depths: Vec<String> = report.depths.iter().map(|d| d.to_string()).collect();
    let doc = format!(
        "{{\n  \"seeds\": {},\n  \"depths\": [{}],\n  \"max_abs_gap_theorem3\": {},\n  \"max_abs_gap_snell\": {},\n  \"max_supermartingale_violation\": {},\n  \"violations\": [{}]\n}}\n",
        report.seeds,
        depths.join(", "),
        f64_repr(report.max_abs_gap_theorem3),
        f64_repr(report.max_abs_gap_snell),
        f64_repr(report.max_supermartingale_violation),
        violations.join(", "),
    );
    write_out(&out, "verify.json", &doc)?;

    if !report.passed() {
        let first = &report.violations[0];
        return Err(CliError::Property(format!(
            "{} violation(s); first: property '{}' at seed {} depth {} (magnitude {})",
            report.violations.len(),
            first.property,
            first.seed,
            first.depth,
            first.magnitude,
        )));
    }
    Ok(())
}
