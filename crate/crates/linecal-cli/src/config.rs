//! Config file parsing and flag overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use linecal::{
    it_class, CampaignConfig, ConnectedTree, Error, ItClassSpec, QuantizationConfig, RePolicy,
    Result, TrajectoryProfile,
};

/// IT class given either as a table label ("0.6") or explicit limits.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ClassSpec {
    Label(String),
    Custom {
        max_magnitude_error: f64,
        max_angle_error: f64,
    },
}

impl ClassSpec {
    pub fn resolve(&self) -> Result<ItClassSpec> {
        match self {
            ClassSpec::Label(label) => it_class(label).ok_or_else(|| {
                Error::Config(format!(
                    "unknown IT class '{label}' (known: 0.15, 0.3, 0.6, 1.2)"
                ))
            }),
            ClassSpec::Custom {
                max_magnitude_error,
                max_angle_error,
            } => ItClassSpec::new(*max_magnitude_error, *max_angle_error),
        }
    }
}

fn default_n() -> usize {
    600
}
fn default_runs() -> usize {
    100
}
fn default_sigma() -> f64 {
    0.0003
}
fn default_seed() -> u64 {
    1
}
fn default_it_class() -> ClassSpec {
    ClassSpec::Label("0.6".into())
}
fn default_rqm_class() -> ClassSpec {
    ClassSpec::Label("0.15".into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tree: PathBuf,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_it_class")]
    pub it_class: ClassSpec,
    #[serde(default = "default_rqm_class")]
    pub rqm_class: ClassSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub re_policy: RePolicy,
    #[serde(default)]
    pub quantization: Option<QuantizationConfig>,
    #[serde(default)]
    pub profile: Option<TrajectoryProfile>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Fully resolved configuration: tree plus campaign settings.
pub struct Resolved {
    pub tree: ConnectedTree,
    pub campaign: CampaignConfig,
    pub output_dir: PathBuf,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub tree: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub n: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Resolved> {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let file: FileConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", config_path.display())))?;

    // paths in the config are relative to the config file's directory
    let base = config_path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let tree_path = overrides.tree.clone().unwrap_or_else(|| rel(&file.tree));
    let tree = linecal::io::load_tree(&tree_path)?;

    let campaign = CampaignConfig {
        n: overrides.n.unwrap_or(file.n),
        runs: overrides.runs.unwrap_or(file.runs),
        noise_sigma: overrides.noise_sigma.unwrap_or(file.noise_sigma),
        it_class: file.it_class.resolve()?,
        rqm_class: file.rqm_class.resolve()?,
        quantization: file.quantization.unwrap_or_default(),
        profile: file.profile.unwrap_or_default(),
        re_policy: file.re_policy,
        seed: overrides.seed.unwrap_or(file.seed),
    };
    campaign.validate()?;

    let output_dir = overrides
        .out
        .clone()
        .or_else(|| file.output_dir.as_deref().map(rel))
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(Resolved {
        tree,
        campaign,
        output_dir,
    })
}
