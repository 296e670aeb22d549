//! Run configuration, stored as JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::PatchSpec;
use crate::baselines::named_baseline;
use crate::dataset::FoldScheme;
use crate::error::{Error, Result};
use crate::estimator::Averaging;
use crate::network::{paper_architecture, toy_architecture, NetworkSpec, TrainConfig};

/// Network size profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Paper,
    #[default]
    Toy,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "toy" => Ok(Profile::Toy),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn network(&self, k: usize) -> NetworkSpec {
        match self {
            Profile::Paper => paper_architecture(k),
            Profile::Toy => toy_architecture(k),
        }
    }

    pub fn patch_spec(&self) -> PatchSpec {
        match self {
            Profile::Paper => PatchSpec::paper(),
            Profile::Toy => PatchSpec::toy(),
        }
    }
}

/// Methods accepted in `RunConfig::methods` besides the named baselines.
pub const CNN_METHODS: [&str; 2] = ["cnn", "cnn_argmax"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub folds: FoldScheme,
    pub k: usize,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default)]
    pub profile: Profile,
    /// Defaults to the profile's patch spec.
    #[serde(default)]
    pub patch: Option<PatchSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub master_seed: u64,
    /// Per-sample CSV; the aggregate JSON goes next to it.
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
    /// When set, corrected images of the `cnn` method are written here.
    #[serde(default)]
    pub dump_corrected: Option<PathBuf>,
}

fn default_restarts() -> usize {
    10
}

fn default_methods() -> Vec<String> {
    vec!["cnn".into(), "grey_world".into()]
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, folds: FoldScheme, k: usize) -> Self {
        RunConfig {
            manifest: manifest.into(),
            folds,
            k,
            kmeans_restarts: default_restarts(),
            profile: Profile::default(),
            patch: None,
            train: TrainConfig::default(),
            methods: default_methods(),
            averaging: Averaging::default(),
            master_seed: 0,
            report: None,
            run_dir: None,
            dump_corrected: None,
        }
    }

    pub fn patch_spec(&self) -> PatchSpec {
        self.patch.clone().unwrap_or_else(|| self.profile.patch_spec())
    }

    pub fn network(&self) -> NetworkSpec {
        self.profile.network(self.k)
    }

    pub fn needs_cnn(&self) -> bool {
        self.methods.iter().any(|m| CNN_METHODS.contains(&m.as_str()))
    }

    /// Checks values only; file existence is checked by [`RunConfig::check_files`].
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.folds.folds() < 2 {
            return Err(Error::Folds("need at least 2 folds".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods to evaluate".into()));
        }
        for m in &self.methods {
            if !CNN_METHODS.contains(&m.as_str()) {
                named_baseline(m)?;
            }
        }
        let patch = self.patch_spec();
        patch.validate()?;
        let net = self.network();
        net.validate()?;
        if patch.net_input_side != net.input_side {
            return Err(Error::Config(format!(
                "patch side {} does not match network input {}",
                patch.net_input_side, net.input_side
            )));
        }
        self.train.validate()
    }

    pub fn check_files(&self) -> Result<()> {
        if !self.manifest.is_file() {
            return Err(Error::io(
                &self.manifest,
                std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// SHA-256 over the compact JSON encoding, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sub-seed for stage `tag`, index `index` of a run.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
