//! Experiment configuration: a sectioned TOML file, strictly keyed.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use levy_dp::{
    build_model, generate_dataset, ChainConfig, Dataset, ErgodicityParams, HistogramOptions,
    InitPolicy, LossModel, ModelKind, Purpose, StreamFactory,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; every random stream is derived from it.
    #[serde(default)]
    pub seed: u64,
    pub model: Option<ModelSection>,
    pub data: Option<DataSection>,
    pub chain: Option<ChainSection>,
    #[serde(default)]
    pub accountant: AccountantSection,
    #[serde(default)]
    pub verifier: VerifierSection,
    pub sample: Option<SampleSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `ridge`, `logistic` or `realizable`.
    pub kind: String,
    pub lambda: f64,
    pub radius: f64,
    pub dim: usize,
    /// Parameter every record is consistent with; realizable models only.
    pub anchor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset file; relative paths resolve against the config file.
    pub file: Option<PathBuf>,
    /// Size of a synthetic dataset.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub eta: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Defaults to the dataset size (full-batch GD).
    pub batch_size: Option<usize>,
    pub iters: usize,
    /// `stable` (default) or `zero`; ignored when `init_point` is set.
    pub init: Option<String>,
    pub init_point: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub replicas: usize,
    /// Record every `trajectory_stride`-th state of replica 0.
    pub trajectory_stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccountantSection {
    /// Lyapunov exponent; defaults to `min(0.49, (alpha - 1)/2)`.
    pub p: Option<f64>,
    /// Ergodicity constants; both or neither. Neither selects the heuristic.
    pub c: Option<f64>,
    pub rho: Option<f64>,
    /// Assume every dataset shares one stable point (realizable models).
    pub universal_stable_point: bool,
    pub n_sweep: Vec<usize>,
    pub d_sweep: Vec<usize>,
}

impl Default for AccountantSection {
    fn default() -> Self {
        Self {
            p: None,
            c: None,
            rho: None,
            universal_stable_point: false,
            n_sweep: vec![100, 1000, 10_000],
            d_sweep: (6..=12).map(|e| 1 << e).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifierSection {
    /// Any of `assumptions`, `drift`, `gamma`, `vp`, `tv`, `falsification`.
    pub suites: Vec<String>,
    pub grid_points: usize,
    /// Grid reaches this multiple of the stable-point norm bound.
    pub grid_radius_factor: f64,
    pub reps: usize,
    pub trials: usize,
    /// Record replaced to build the neighbour.
    pub neighbor_index: usize,
    /// Replacement record; the zero record when absent.
    pub neighbor_record: Option<Vec<f64>>,
    pub tv_sizes: Vec<usize>,
    pub tv_replicas: usize,
    pub tv_checkpoints: Vec<usize>,
    pub bins: usize,
    pub tail_quantile: f64,
}

impl Default for VerifierSection {
    fn default() -> Self {
        Self {
            suites: ["assumptions", "drift", "gamma", "vp"]
                .map(String::from)
                .to_vec(),
            grid_points: 21,
            grid_radius_factor: 10.0,
            reps: 20_000,
            trials: 10_000,
            neighbor_index: 0,
            neighbor_record: None,
            tv_sizes: vec![32, 128, 512],
            tv_replicas: 20_000,
            tv_checkpoints: vec![200, 800],
            bins: 100,
            tail_quantile: 0.001,
        }
    }
}

pub const SUITES: [&str; 6] = ["assumptions", "drift", "gamma", "vp", "tv", "falsification"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub alpha: f64,
    pub dim: usize,
    pub draws: usize,
    #[serde(default = "unit")]
    pub sigma: f64,
    #[serde(default = "twenty")]
    pub directions: usize,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn twenty() -> usize {
    20
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok((cfg, base))
    }

    /// Range checks of every present section, independent of the command.
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.model {
            m.build().context("section [model]")?;
        }
        if let Some(d) = &self.data {
            match (&d.file, d.n) {
                (Some(_), Some(_)) => bail!("section [data]: set either `file` or `n`, not both"),
                (None, None) => bail!("section [data]: missing key `file` or `n`"),
                (None, Some(0)) => bail!("section [data]: `n` must be positive"),
                _ => {}
            }
        }
        if let Some(c) = &self.chain {
            let probe = c.to_chain(self.seed, 1)?;
            probe.validate(usize::MAX).context("section [chain]")?;
            if c.replicas == 0 {
                bail!("section [chain]: `replicas` must be positive");
            }
            if c.iters == 0 {
                bail!("section [chain]: `iters` must be positive");
            }
        }
        let a = &self.accountant;
        a.ergodicity().context("section [accountant]")?;
        if a.n_sweep.contains(&0) {
            bail!("section [accountant]: `n_sweep` entries must be positive");
        }
        let v = &self.verifier;
        for s in &v.suites {
            if !SUITES.contains(&s.as_str()) {
                bail!(
                    "section [verifier]: unknown suite '{s}' (expected one of {})",
                    SUITES.join(", ")
                );
            }
        }
        if v.grid_points < 2 {
            bail!(
                "section [verifier]: `grid_points` must be at least 2, got {}",
                v.grid_points
            );
        }
        if !(v.grid_radius_factor > 0.0 && v.grid_radius_factor.is_finite()) {
            bail!(
                "section [verifier]: `grid_radius_factor` must be positive, got {}",
                v.grid_radius_factor
            );
        }
        if v.reps < 1000 {
            bail!(
                "section [verifier]: `reps` must be at least 1000, got {}",
                v.reps
            );
        }
        if v.trials == 0 || v.tv_replicas < 2 || v.bins == 0 {
            bail!("section [verifier]: `trials`, `tv_replicas` and `bins` must be positive");
        }
        if v.tv_checkpoints.is_empty() || v.tv_checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            bail!("section [verifier]: `tv_checkpoints` must be strictly increasing");
        }
        if !(0.0..0.5).contains(&v.tail_quantile) {
            bail!("section [verifier]: `tail_quantile` must lie in [0, 0.5)");
        }
        if let Some(s) = &self.sample {
            levy_dp::StableSampler::new(s.alpha, s.dim).context("section [sample]")?;
            if !(s.sigma > 0.0 && s.sigma.is_finite()) {
                bail!("section [sample]: `sigma` must be positive");
            }
            if s.draws < 2 || s.directions == 0 {
                bail!("section [sample]: need at least 2 draws and one direction");
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration (after command-line overrides).
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serialises");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn model(&self) -> Result<&ModelSection> {
        self.model
            .as_ref()
            .ok_or_else(|| anyhow!("missing section [model]"))
    }

    pub fn chain(&self) -> Result<&ChainSection> {
        self.chain
            .as_ref()
            .ok_or_else(|| anyhow!("missing section [chain]"))
    }

    pub fn sample(&self) -> Result<&SampleSection> {
        self.sample
            .as_ref()
            .ok_or_else(|| anyhow!("missing section [sample]"))
    }

    /// The dataset from file or generated from the base seed.
    pub fn dataset(&self, base: &Path) -> Result<Dataset> {
        let m = self.model()?;
        let kind = m.kind()?;
        let d = self
            .data
            .as_ref()
            .ok_or_else(|| anyhow!("missing section [data]"))?;
        let data = if let Some(file) = &d.file {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading dataset {}", path.display()))?;
            let (data, file_kind) = levy_dp::problems::parse_dataset(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let compatible = file_kind == kind
                || (file_kind == ModelKind::Ridge && kind == ModelKind::Realizable);
            if !compatible {
                bail!(
                    "dataset {} holds {file_kind} records but the model is {kind}",
                    path.display()
                );
            }
            data
        } else {
            let n = d.n.expect("validated");
            let mut rng = StreamFactory::new(self.seed).stream(Purpose::Data, 0);
            generate_dataset(kind, n, m.dim, m.radius, m.anchor.as_deref(), &mut rng)?
        };
        let want = kind.data_dim(m.dim);
        if data.dim() != want {
            bail!(
                "dataset records have {} fields, model needs {want}",
                data.dim()
            );
        }
        data.check_radius(m.radius)?;
        Ok(data)
    }
}

impl ModelSection {
    pub fn kind(&self) -> Result<ModelKind> {
        self.kind
            .parse::<ModelKind>()
            .map_err(|e| anyhow!("key `model.kind`: {e}"))
    }

    pub fn build(&self) -> Result<Box<dyn LossModel>> {
        let kind = self.kind()?;
        if kind == ModelKind::Realizable && self.anchor.is_none() {
            bail!("missing key `model.anchor` (required for kind = realizable)");
        }
        if kind != ModelKind::Realizable && self.anchor.is_some() {
            bail!("key `model.anchor` only applies to kind = realizable");
        }
        Ok(build_model(
            kind,
            self.dim,
            self.lambda,
            self.radius,
            self.anchor.clone(),
        )?)
    }
}

impl ChainSection {
    pub fn to_chain(&self, seed: u64, default_batch: usize) -> Result<ChainConfig> {
        let init = match (&self.init_point, self.init.as_deref()) {
            (Some(p), _) => InitPolicy::Fixed(p.clone()),
            (None, None | Some("stable")) => InitPolicy::StablePoint,
            (None, Some("zero")) => InitPolicy::Zero,
            (None, Some(other)) => {
                bail!("key `chain.init`: expected 'stable' or 'zero', got '{other}'")
            }
        };
        Ok(ChainConfig {
            eta: self.eta,
            sigma: self.sigma,
            alpha: self.alpha,
            batch_size: self.batch_size.unwrap_or(default_batch),
            iters: self.iters,
            seed,
            init,
            record_stride: None,
        })
    }
}

impl AccountantSection {
    pub fn ergodicity(&self) -> Result<Option<ErgodicityParams>> {
        match (self.c, self.rho) {
            (Some(c), Some(rho)) => Ok(Some(ErgodicityParams::new(c, rho)?)),
            (None, None) => Ok(None),
            _ => bail!("set both `c` and `rho`, or neither for the heuristic default"),
        }
    }
}

impl VerifierSection {
    pub fn histogram(&self) -> HistogramOptions {
        HistogramOptions {
            bins_per_axis: self.bins,
            tail_quantile: self.tail_quantile,
        }
    }

    pub fn has(&self, suite: &str) -> bool {
        self.suites.iter().any(|s| s == suite)
    }
}
