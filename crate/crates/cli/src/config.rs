//! Run configuration: one JSON file, with command-line flags layered on top.

use std::path::{Path, PathBuf};

use innovbench_core::textlab::JudgeConfig;
use innovbench_core::verify::Theorem;
use innovbench_core::{MetaSpec, ModelKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for parallel sections; `None` uses every core.
    pub threads: Option<usize>,
    pub verify: VerifyConfig,
    pub ngram: NgramConfig,
    pub judge: JudgeSection,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            threads: None,
            verify: VerifyConfig::default(),
            ngram: NgramConfig::default(),
            judge: JudgeSection::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Meta-distribution for the Monte Carlo cells.
    pub meta: MetaSpec,
    /// Corpus size for the Monte Carlo cells.
    pub n: u64,
    pub corpora: usize,
    pub trials: usize,
    /// Explicit δ values, validated against every corpus. When absent the
    /// grid `{1.1·K/|U|, 0.1, 0.25, 0.5, 0.9}` is used and cells outside a
    /// theorem's range are reported without a verdict.
    pub deltas: Option<Vec<f64>>,
    pub theorems: Vec<Theorem>,
    pub models: Vec<ModelKind>,
    pub unconditional: UnconditionalConfig,
    pub exhaustive: ExhaustiveConfig,
    pub weighted: WeightedConfig,
    pub tightness_draws: usize,
    pub regime: RegimeConfig,
}

pub const DEFAULT_DELTA_GRID: [f64; 4] = [0.1, 0.25, 0.5, 0.9];
pub const NEAR_BOUNDARY_FACTOR: f64 = 1.1;

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            meta: MetaSpec::uniform_k(12, 3).expect("valid default meta"),
            n: 8,
            corpora: 20,
            trials: 10_000,
            deltas: None,
            theorems: Theorem::ALL.to_vec(),
            models: ModelKind::battery(),
            unconditional: UnconditionalConfig::default(),
            exhaustive: ExhaustiveConfig::default(),
            weighted: WeightedConfig::default(),
            tightness_draws: 10_000,
            regime: RegimeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnconditionalConfig {
    pub instances: usize,
    pub max_statements: usize,
}

impl Default for UnconditionalConfig {
    fn default() -> Self {
        UnconditionalConfig { instances: 10_000, max_statements: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExhaustiveConfig {
    pub meta: MetaSpec,
    pub max_n: u64,
}

impl Default for ExhaustiveConfig {
    fn default() -> Self {
        ExhaustiveConfig {
            meta: MetaSpec::uniform_k(10, 3).expect("valid default meta"),
            max_n: 4,
        }
    }
}

/// Two-class weighted-subsets prior: the first half of the universe has
/// weight `rho`, the rest weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightedConfig {
    pub n_statements: usize,
    pub k_max: usize,
    pub rho: f64,
    pub max_n: u64,
}

impl Default for WeightedConfig {
    fn default() -> Self {
        WeightedConfig { n_statements: 8, k_max: 2, rho: 2.0, max_n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub n_statements: usize,
    pub k_max: usize,
    pub n: u64,
    pub delta: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        RegimeConfig { n_statements: 4000, k_max: 40, n: 100, delta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramConfig {
    /// Newline-delimited training text; `None` uses the bundled corpus.
    pub corpus: Option<PathBuf>,
    pub n_values: Vec<usize>,
    pub generations: usize,
    pub max_len: usize,
    /// Directory holding `train.iemb` and `gen_n{n}.iemb`, aligned with
    /// `train.txt` and `gen_n{n}.txt` from a previous run.
    pub embeddings: Option<PathBuf>,
    pub threshold: f64,
    pub confidence: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            corpus: None,
            n_values: (2..=7).collect(),
            generations: 500,
            max_len: 20,
            embeddings: None,
            threshold: innovbench_core::measures::SEMANTIC_THRESHOLD,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Human,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub mode: JudgeMode,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub debug_http: bool,
    /// Shuffle the human labeling order with this seed.
    pub shuffle_seed: Option<u64>,
    /// Defaults to `<out>/generations.jsonl`.
    pub generations: Option<PathBuf>,
    /// Defaults to `<out>/labels.jsonl`.
    pub labels: Option<PathBuf>,
    pub confidence: f64,
}

impl Default for JudgeSection {
    fn default() -> Self {
        let base = JudgeConfig::new("https://openrouter.ai/api/v1/chat/completions", "");
        JudgeSection {
            mode: JudgeMode::Human,
            endpoint: base.endpoint,
            model: base.model,
            api_key_env: base.api_key_env,
            timeout_secs: base.timeout_secs,
            max_in_flight: base.max_in_flight,
            debug_http: false,
            shuffle_seed: None,
            generations: None,
            labels: None,
            confidence: 0.95,
        }
    }
}

impl JudgeSection {
    pub fn client(&self) -> JudgeConfig {
        JudgeConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
            max_in_flight: self.max_in_flight,
            debug_http: self.debug_http,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Defaults to `<out>/rates.csv`.
    pub rates: Option<PathBuf>,
    /// Which judged-rate denominator to plot: `all` or `excluding`.
    pub denominator: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { rates: None, denominator: "all".into() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.threads == Some(0) {
            return Err(CliError::config("threads must be positive"));
        }
        let v = &self.verify;
        if v.corpora == 0 || v.n == 0 {
            return Err(CliError::config("verify.corpora and verify.n must be positive"));
        }
        if let Some(ds) = &v.deltas {
            if ds.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
                return Err(CliError::config("every delta must lie in (0, 1]"));
            }
        }
        let g = &self.ngram;
        if g.n_values.is_empty() || g.generations == 0 || g.max_len == 0 {
            return Err(CliError::config("ngram needs n values, generations and max_len"));
        }
        if !["all", "excluding"].contains(&self.report.denominator.as_str()) {
            return Err(CliError::config(format!(
                "report.denominator must be `all` or `excluding`, got `{}`",
                self.report.denominator
            )));
        }
        Ok(())
    }
}

/// Parses `2,3,5` or `2-7` (or a mix, `2-4,7`).
pub fn parse_n_values(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad n value `{t}`: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no n values".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let json = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 9, "verify": {"trials": 2000}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.verify.trials, 2000);
        assert_eq!(c.verify.corpora, 20);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 9}"#).is_err());
    }

    #[test]
    fn n_value_lists() {
        assert_eq!(parse_n_values("2-7").unwrap(), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(parse_n_values("2,4, 6").unwrap(), vec![2, 4, 6]);
        assert_eq!(parse_n_values("2-3,7").unwrap(), vec![2, 3, 7]);
        assert!(parse_n_values("").is_err());
        assert!(parse_n_values("5-2").is_err());
        assert!(parse_n_values("x").is_err());
    }
}
