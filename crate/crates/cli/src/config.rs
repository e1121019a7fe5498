//! Optional JSON config file. Anything set here is overridden by flags and
//! environment variables.

use std::path::{Path, PathBuf};

use narrative_player::optimizer::CostTable;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub embed_model: Option<String>,
    pub fixture_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    /// Same `"w1,w2,w3"` form as the flag.
    pub weights: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub beam_width: Option<usize>,
    pub exhaustive_bound: Option<u64>,
    pub prune: Option<bool>,
    pub min_anim_ms: Option<u64>,
    pub wpm: Option<f64>,
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    pub costs: Option<CostTable>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config `{}`: {e}", path.display()))
    }
}
