use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use multistop::double::{self, TiePreference};
use multistop::oracle::{self, EnumerationBudget};
use multistop::snell;

use crate::fmt::{f64_repr, json_usize_array};
use crate::inputs::{load_config, PsiSource, TreeSource};
use crate::{engine_err, write_out, CliError};

#[derive(Args, Debug)]
pub struct DoubleArgs {
    /// JSON config supplying defaults for any flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario tree JSON document.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Generate a random binary tree of this depth instead.
    #[arg(long, value_name = "DEPTH")]
    gen_tree: Option<usize>,
    /// Seed for the built-in generators.
    #[arg(long)]
    gen_seed: Option<u64>,
    /// Pair-reward table `{"psi": [{"a", "b", "value"}]}`.
    #[arg(long)]
    psi: Option<PathBuf>,
    /// Built-in pair-reward generator (sum, diff, max, uniform).
    #[arg(long, value_name = "NAME")]
    psi_gen: Option<String>,
    /// Override of the contact-set equality slack scale.
    #[arg(long)]
    eps_eq: Option<f64>,
    /// Cross-check the reduced value against the exhaustive pair maximum.
    #[arg(long)]
    verify: bool,
    /// Budget override: max enumerated rules.
    #[arg(long)]
    max_rules: Option<u64>,
    /// Budget override: max evaluated rule pairs.
    #[arg(long)]
    max_pairs: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DoubleConfig {
    tree: Option<PathBuf>,
    gen_tree: Option<usize>,
    gen_seed: Option<u64>,
    psi: Option<PathBuf>,
    psi_gen: Option<String>,
    eps_eq: Option<f64>,
    verify: Option<bool>,
    max_rules: Option<u64>,
    max_pairs: Option<u64>,
    out: Option<PathBuf>,
}

pub fn run(mut args: DoubleArgs) -> Result<(), CliError> {
    let cfg: DoubleConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => DoubleConfig::default(),
    };
    args.tree = args.tree.or(cfg.tree);
    args.gen_tree = args.gen_tree.or(cfg.gen_tree);
    args.gen_seed = args.gen_seed.or(cfg.gen_seed);
    args.psi = args.psi.or(cfg.psi);
    args.psi_gen = args.psi_gen.or(cfg.psi_gen);
    args.eps_eq = args.eps_eq.or(cfg.eps_eq);
    args.verify = args.verify || cfg.verify.unwrap_or(false);
    args.max_rules = args.max_rules.or(cfg.max_rules);
    args.max_pairs = args.max_pairs.or(cfg.max_pairs);
    args.out = args.out.or(cfg.out);

    let seed = args.gen_seed.unwrap_or(0);
    let out = args
        .out
        .clone()
        .ok_or_else(|| CliError::Input("missing --out directory".into()))?;
    let eps = args.eps_eq.unwrap_or(snell::EPS_EQ_SCALE);
    if !eps.is_finite() || eps <= 0.0 {
        return Err(CliError::Input(format!(
            "--eps-eq must be positive, got {eps}"
        )));
    }

    let tree = TreeSource {
        file: args.tree.clone(),
        gen_depth: args.gen_tree,
        seed,
    }
    .load()?;
    let psi = PsiSource {
        file: args.psi.clone(),
        generator: args.psi_gen.clone(),
        seed,
    }
    .load(&tree)?;

    let red = double::reduce_with_options(&tree, &psi, 0, TiePreference::FirstLeg, eps)
        .map_err(engine_err)?;
    let attained = double::evaluate_pair(&tree, &psi, &red.pair).map_err(engine_err)?;
    let rel_gap = (attained - red.reduced_value(0)).abs() / red.reduced_value(0).abs().max(1.0);
    if rel_gap > 1e-10 {
        return Err(CliError::Property(format!(
            "constructed pair misses the reduced value: relative gap {rel_gap}"
        )));
    }

    let oracle_check = if args.verify {
        let mut budget = EnumerationBudget::default();
        if let Some(m) = args.max_rules {
            budget.max_rules = m as u128;
        }
        if let Some(m) = args.max_pairs {
            budget.max_pairs = m as u128;
        }
        let (bf, _) = oracle::brute_force_double(&tree, &psi, 0, &budget).map_err(engine_err)?;
        let gap = (bf - red.reduced_value(0)).abs();
        if gap > 1e-12 {
            return Err(CliError::Property(format!(
                "reduced value misses the exhaustive pair maximum by {gap}"
            )));
        }
        Some((bf, gap))
    } else {
        None
    };

    fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;

    let mut csv = String::from("node_id,t,u1,u2,phi\n");
    for id in 0..tree.num_nodes() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            id,
            tree.time(id),
            f64_repr(red.u1.value(id)),
            f64_repr(red.u2.value(id)),
            f64_repr(red.phi.value(id)),
        ));
    }
    write_out(&out, "u1u2phi.csv", &csv)?;

    let b_items: Vec<String> = red
        .b_indicator
        .iter()
        .map(|(node, b)| format!("{{\"node\": {node}, \"u1_le_u2\": {b}}}"))
        .collect();
    let pair_json = format!(
        "{{\n  \"start\": {},\n  \"theta_star_stops\": {},\n  \"tau1_stops\": {},\n  \"tau2_stops\": {},\n  \"b\": [{}]\n}}\n",
        red.pair.start(),
        json_usize_array(&red.theta_star.stop_nodes()),
        json_usize_array(&red.pair.first().stop_nodes()),
        json_usize_array(&red.pair.second().stop_nodes()),
        b_items.join(", "),
    );
    write_out(&out, "pair.json", &pair_json)?;

    let mut summary = format!(
        "{{\n  \"u_root\": {},\n  \"pair_value\": {}",
        f64_repr(red.reduced_value(0)),
        f64_repr(attained),
    );
    if let Some((bf, gap)) = oracle_check {
        summary.push_str(&format!(
            ",\n  \"oracle_value\": {},\n  \"oracle_gap\": {}",
            f64_repr(bf),
            f64_repr(gap)
        ));
    }
    summary.push_str("\n}\n");
    write_out(&out, "summary.json", &summary)?;
    Ok(())
}
