//! Input resolution: files, built-in generators, and the flags-over-config
//! merge.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use multistop::double::BiReward;
use multistop::generators::{self, PsiGenerator};
use multistop::snell::NodeReward;
use multistop::tree::ScenarioTree;

use crate::CliError;

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

/// Tree source: an explicit JSON document or a seeded binary generator.
pub struct TreeSource {
    pub file: Option<PathBuf>,
    pub gen_depth: Option<usize>,
    pub seed: u64,
}

impl TreeSource {
    pub fn load(&self) -> Result<ScenarioTree, CliError> {
        match (&self.file, self.gen_depth) {
            (Some(path), None) => ScenarioTree::from_json(&read_file(path)?)
                .map_err(|e| CliError::Input(e.to_string())),
            (None, Some(depth)) => generators::random_binary_tree(depth, self.seed)
                .map_err(|e| CliError::Input(e.to_string())),
            (None, None) => Err(CliError::Input(
                "no tree source: pass --tree FILE or --gen-tree DEPTH".into(),
            )),
            (Some(_), Some(_)) => Err(CliError::Input(
                "ambiguous tree source: pass exactly one of --tree and --gen-tree".into(),
            )),
        }
    }
}

#[derive(Deserialize)]
struct RewardEntry {
    node: usize,
    value: f64,
}

#[derive(Deserialize)]
struct RewardDoc {
    reward: Vec<RewardEntry>,
}

/// Parses `{"reward": [{"node": id, "value": v}]}` aligned with the tree.
pub fn reward_from_json(tree: &ScenarioTree, text: &str) -> Result<NodeReward, CliError> {
    let doc: RewardDoc = serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("reward JSON parse error: {e}")))?;
    let mut values = vec![f64::NAN; tree.num_nodes()];
    for entry in doc.reward {
        if entry.node >= tree.num_nodes() {
            return Err(CliError::Input(format!(
                "reward references unknown node {}",
                entry.node
            )));
        }
        if !values[entry.node].is_nan() {
            return Err(CliError::Input(format!(
                "reward defines node {} twice",
                entry.node
            )));
        }
        values[entry.node] = entry.value;
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        return Err(CliError::Input(format!(
            "reward missing a value for node {missing}"
        )));
    }
    NodeReward::new(tree, values).map_err(|e| CliError::Input(e.to_string()))
}

/// Reward source: a file or the seeded uniform generator. Exactly one must
/// be given.
pub struct RewardSource {
    pub file: Option<PathBuf>,
    pub generate: bool,
    pub seed: u64,
}

impl RewardSource {
    pub fn load(&self, tree: &ScenarioTree) -> Result<NodeReward, CliError> {
        match (&self.file, self.generate) {
            (Some(path), false) => reward_from_json(tree, &read_file(path)?),
            (None, true) => generators::random_reward(tree, self.seed)
                .map_err(|e| CliError::Input(e.to_string())),
            (None, false) => Err(CliError::Input(
                "no reward source: pass --reward FILE or --gen-reward".into(),
            )),
            (Some(_), true) => Err(CliError::Input(
                "ambiguous reward source: pass exactly one of --reward and --gen-reward".into(),
            )),
        }
    }
}

#[derive(Deserialize)]
struct PsiEntry {
    a: usize,
    b: usize,
    value: f64,
}

#[derive(Deserialize)]
struct PsiDoc {
    psi: Vec<PsiEntry>,
}

/// Parses `{"psi": [{"a": id, "b": id, "value": v}]}` into a validated table.
pub fn psi_from_json(tree: &ScenarioTree, text: &str) -> Result<BiReward, CliError> {
    let doc: PsiDoc = serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("psi JSON parse error: {e}")))?;
    BiReward::from_table(tree, doc.psi.into_iter().map(|e| ((e.a, e.b), e.value)))
        .map_err(|e| CliError::Input(e.to_string()))
}

/// Pair-reward source: a table file or a named generator.
pub struct PsiSource {
    pub file: Option<PathBuf>,
    pub generator: Option<String>,
    pub seed: u64,
}

impl PsiSource {
    pub fn load(&self, tree: &ScenarioTree) -> Result<BiReward, CliError> {
        match (&self.file, &self.generator) {
            (Some(path), None) => psi_from_json(tree, &read_file(path)?),
            (None, Some(name)) => {
                let gen = PsiGenerator::from_name(name).ok_or_else(|| {
                    CliError::Input(format!(
                        "unknown psi generator '{name}'; available: {}",
                        PsiGenerator::names().join(", ")
                    ))
                })?;
                gen.build(tree, self.seed)
                    .map_err(|e| CliError::Input(e.to_string()))
            }
            (None, None) => Err(CliError::Input(
                "no psi source: pass --psi FILE or --psi-gen NAME".into(),
            )),
            (Some(_), Some(_)) => Err(CliError::Input(
                "ambiguous psi source: pass exactly one of --psi and --psi-gen".into(),
            )),
        }
    }
}
