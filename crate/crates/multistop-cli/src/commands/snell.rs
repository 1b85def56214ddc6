use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use multistop::snell;

use crate::fmt::{f64_repr, json_usize_array};
use crate::inputs::{load_config, RewardSource, TreeSource};
use crate::{engine_err, write_out, CliError};

#[derive(Args, Debug)]
pub struct SnellArgs {
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
    /// Reward JSON document `{"reward": [{"node", "value"}]}`.
    #[arg(long)]
    reward: Option<PathBuf>,
    /// Generate i.i.d. uniform(0,1) rewards instead.
    #[arg(long)]
    gen_reward: bool,
    /// Override of the contact-set equality slack scale.
    #[arg(long)]
    eps_eq: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SnellConfig {
    tree: Option<PathBuf>,
    gen_tree: Option<usize>,
    gen_seed: Option<u64>,
    reward: Option<PathBuf>,
    gen_reward: Option<bool>,
    eps_eq: Option<f64>,
    out: Option<PathBuf>,
}

pub fn run(mut args: SnellArgs) -> Result<(), CliError> {
    let cfg: SnellConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => SnellConfig::default(),
    };
    args.tree = args.tree.or(cfg.tree);
    args.gen_tree = args.gen_tree.or(cfg.gen_tree);
    args.gen_seed = args.gen_seed.or(cfg.gen_seed);
    args.reward = args.reward.or(cfg.reward);
    args.gen_reward = args.gen_reward || cfg.gen_reward.unwrap_or(false);
    args.eps_eq = args.eps_eq.or(cfg.eps_eq);
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
    let reward = RewardSource {
        file: args.reward.clone(),
        generate: args.gen_reward,
        seed,
    }
    .load(&tree)?;

    let values = snell::snell_envelope(&tree, &reward).map_err(engine_err)?;
    let rule = snell::optimal_stop_with_slack(&tree, &values, 0, eps).map_err(engine_err)?;
    let report = snell::check_supermartingale(&tree, values.values()).map_err(engine_err)?;
    if report.max_violation > 1e-12 {
        return Err(CliError::Property(format!(
            "envelope failed the supermartingale check: violation {} at node {:?}",
            report.max_violation, report.worst_node
        )));
    }

    fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;

    let mut csv = String::from("node_id,t,phi,v\n");
    for id in 0..tree.num_nodes() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            id,
            tree.time(id),
            f64_repr(reward.value(id)),
            f64_repr(values.value(id)),
        ));
    }
    write_out(&out, "values.csv", &csv)?;

    let rule_json = format!(
        "{{\n  \"start\": {},\n  \"stops\": {}\n}}\n",
        rule.start(),
        json_usize_array(&rule.stop_nodes()),
    );
    write_out(&out, "rule.json", &rule_json)?;

    let summary = format!(
        "{{\n  \"v_root\": {},\n  \"max_supermartingale_violation\": {}\n}}\n",
        f64_repr(values.value(0)),
        f64_repr(report.max_violation),
    );
    write_out(&out, "summary.json", &summary)?;
    Ok(())
}
