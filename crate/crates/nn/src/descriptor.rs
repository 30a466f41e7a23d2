use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Fenced-block tag of the descriptor wire format.
pub const ARCHITECTURE_SCHEMA: &str = "architecture/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mlp,
    MultiBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub widths: Vec<usize>,
    /// Half-open input column range `[start, end)`. When every branch omits
    /// it, the input is split into three contiguous near-equal parts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<[usize; 2]>,
}

impl BranchSpec {
    pub fn new(widths: &[usize]) -> Self {
        Self { widths: widths.to_vec(), inputs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branches {
    pub temporal: BranchSpec,
    pub spatial: BranchSpec,
    pub frequency: BranchSpec,
}

impl Branches {
    pub const NAMES: [&'static str; 3] = ["temporal", "spatial", "frequency"];

    pub fn all(&self) -> [&BranchSpec; 3] {
        [&self.temporal, &self.spatial, &self.frequency]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSpec {
    pub enabled: bool,
    pub heads: usize,
}

impl Default for AttentionSpec {
    fn default() -> Self {
        Self { enabled: false, heads: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    Ce,
    WeightedCe,
    Focal { alpha: f64, gamma: f64 },
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Ce => "ce",
            LossSpec::WeightedCe => "weighted_ce",
            LossSpec::Focal { .. } => "focal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSpec {
    /// Constant learning rate, used when no schedule is given.
    pub lr: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub max_lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_frac: f64,
    #[serde(default = "default_div")]
    pub div_factor: f64,
    #[serde(default = "default_final_div")]
    pub final_div: f64,
}

fn default_warmup() -> f64 {
    0.3
}
fn default_div() -> f64 {
    25.0
}
fn default_final_div() -> f64 {
    1e4
}

impl ScheduleSpec {
    pub fn one_cycle(max_lr: f64) -> Self {
        Self { max_lr, warmup_frac: default_warmup(), div_factor: default_div(), final_div: default_final_div() }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DescriptorError {
    #[error("{field} contains a zero width")]
    ZeroWidth { field: String },
    #[error("dropout {0} outside [0, 1)")]
    Dropout(f64),
    #[error("{heads} heads do not divide the attention dimension {dim}")]
    Heads { heads: usize, dim: usize },
    #[error("multi_branch family needs a [branches] table")]
    MissingBranches,
    #[error("slice assignment does not cover the input: {0}")]
    Slices(String),
    #[error("fusion_dim mismatch: {0}")]
    FusionDim(String),
    #[error("invalid loss: {0}")]
    Loss(String),
    #[error("invalid optimizer or schedule: {0}")]
    Optim(String),
    #[error("{field} must be at least 1")]
    Training { field: &'static str },
    #[error("input_dim must be at least 1 and n_classes at least 2 (got {input_dim}, {n_classes})")]
    Shape { input_dim: usize, n_classes: usize },
    #[error("descriptor does not parse: {0}")]
    Parse(String),
}

/// Complete description of one candidate network and its training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureDescriptor {
    pub family: Family,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Branches>,
    #[serde(default)]
    pub fusion_dim: usize,
    #[serde(default)]
    pub attention: AttentionSpec,
    #[serde(default)]
    pub head: Vec<usize>,
    pub dropout: f64,
    pub batch_norm: bool,
    pub loss: LossSpec,
    pub optim: OptimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

fn dense_count(input: usize, widths: &[usize], out: Option<usize>, batch_norm: bool) -> usize {
    let mut n = 0;
    let mut prev = input;
    for &w in widths {
        n += prev * w + w;
        if batch_norm {
            n += 2 * w;
        }
        prev = w;
    }
    n + out.map_or(0, |o| prev * o + o)
}

impl ArchitectureDescriptor {
    /// Plain MLP with the default dense-network training recipe.
    pub fn mlp(hidden: &[usize]) -> Self {
        Self {
            family: Family::Mlp,
            hidden: hidden.to_vec(),
            branches: None,
            fusion_dim: 0,
            attention: AttentionSpec::default(),
            head: Vec::new(),
            dropout: 0.2,
            batch_norm: true,
            loss: LossSpec::WeightedCe,
            optim: OptimSpec { lr: 1e-3, weight_decay: 1e-4 },
            schedule: Some(ScheduleSpec::one_cycle(1e-3)),
            epochs: 100,
            batch_size: 64,
            patience: 15,
            seed: 0,
        }
    }

    pub fn reference_mlp() -> Self {
        Self::mlp(&[2048, 1024, 512, 256])
    }

    /// Three-branch network with attention fusion and a tapering discriminator.
    pub fn reference_multi_branch() -> Self {
        Self {
            family: Family::MultiBranch,
            hidden: Vec::new(),
            branches: Some(Branches {
                temporal: BranchSpec::new(&[256, 192]),
                spatial: BranchSpec::new(&[192, 128]),
                frequency: BranchSpec::new(&[128]),
            }),
            fusion_dim: 384,
            attention: AttentionSpec { enabled: true, heads: 12 },
            head: vec![192, 96, 48, 24],
            dropout: 0.2,
            batch_norm: true,
            loss: LossSpec::Focal { alpha: 0.25, gamma: 2.0 },
            optim: OptimSpec { lr: 3e-3, weight_decay: 1e-4 },
            schedule: Some(ScheduleSpec::one_cycle(3e-3)),
            epochs: 100,
            batch_size: 64,
            patience: 15,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        let zero = |field: &str, w: &[usize]| {
            if w.contains(&0) {
                Err(DescriptorError::ZeroWidth { field: field.to_string() })
            } else {
                Ok(())
            }
        };
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DescriptorError::Dropout(self.dropout));
        }
        match self.family {
            Family::Mlp => zero("hidden", &self.hidden)?,
            Family::MultiBranch => {
                let branches = self.branches.as_ref().ok_or(DescriptorError::MissingBranches)?;
                for (name, b) in Branches::NAMES.iter().zip(branches.all()) {
                    if b.widths.is_empty() {
                        return Err(DescriptorError::ZeroWidth { field: format!("branches.{name}.widths") });
                    }
                    zero(&format!("branches.{name}.widths"), &b.widths)?;
                }
                zero("head", &self.head)?;
                if self.fusion_dim == 0 {
                    return Err(DescriptorError::FusionDim("fusion_dim must be at least 1".into()));
                }
                if self.attention.enabled
                    && (self.attention.heads == 0 || !self.fusion_dim.is_multiple_of(self.attention.heads))
                {
                    return Err(DescriptorError::Heads { heads: self.attention.heads, dim: self.fusion_dim });
                }
            }
        }
        match self.loss {
            LossSpec::Focal { alpha, gamma } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(DescriptorError::Loss(format!("focal alpha {alpha} outside (0, 1]")));
                }
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(DescriptorError::Loss(format!("focal gamma {gamma} must be finite and >= 0")));
                }
            }
            LossSpec::Ce | LossSpec::WeightedCe => {}
        }
        if !(self.optim.lr > 0.0 && self.optim.lr.is_finite()) {
            return Err(DescriptorError::Optim(format!("lr {}", self.optim.lr)));
        }
        if !(self.optim.weight_decay >= 0.0 && self.optim.weight_decay.is_finite()) {
            return Err(DescriptorError::Optim(format!("weight_decay {}", self.optim.weight_decay)));
        }
        if let Some(s) = &self.schedule {
            let ok = s.max_lr > 0.0
                && s.max_lr.is_finite()
                && s.warmup_frac > 0.0
                && s.warmup_frac < 1.0
                && s.div_factor >= 1.0
                && s.final_div >= 1.0;
            if !ok {
                return Err(DescriptorError::Optim(format!("schedule {s:?}")));
            }
        }
        if self.epochs == 0 {
            return Err(DescriptorError::Training { field: "epochs" });
        }
        if self.batch_size == 0 {
            return Err(DescriptorError::Training { field: "batch_size" });
        }
        Ok(())
    }

    /// Input column ranges of the temporal, spatial and frequency branches.
    pub fn slices(&self, input_dim: usize) -> Result<[Range<usize>; 3], DescriptorError> {
        let branches = self.branches.as_ref().ok_or(DescriptorError::MissingBranches)?;
        let specs = branches.all();
        let given: Vec<Option<[usize; 2]>> = specs.iter().map(|b| b.inputs).collect();
        if given.iter().all(Option::is_none) {
            if input_dim < 3 {
                return Err(DescriptorError::Slices(format!("{input_dim} inputs cannot feed three branches")));
            }
            let third = input_dim / 3;
            return Ok([0..third, third..2 * third, 2 * third..input_dim]);
        }
        let Some(ranges) = given.iter().map(|g| g.map(|[a, b]| a..b)).collect::<Option<Vec<_>>>() else {
            return Err(DescriptorError::Slices("either every branch or no branch sets inputs".into()));
        };
        let mut sorted = ranges.clone();
        sorted.sort_by_key(|r| r.start);
        let mut next = 0;
        for r in &sorted {
            if r.start != next || r.end <= r.start {
                return Err(DescriptorError::Slices(format!("ranges {ranges:?} do not tile 0..{input_dim}")));
            }
            next = r.end;
        }
        if next != input_dim {
            return Err(DescriptorError::Slices(format!("ranges {ranges:?} do not tile 0..{input_dim}")));
        }
        Ok([ranges[0].clone(), ranges[1].clone(), ranges[2].clone()])
    }

    /// Logit count: a single logit for binary multi-branch models.
    pub fn n_out(&self, n_classes: usize) -> usize {
        match self.family {
            Family::MultiBranch if n_classes == 2 => 1,
            _ => n_classes,
        }
    }

    /// Trainable parameters by layer sum: weights and biases of every linear
    /// layer plus scale and shift of every batch-norm layer.
    pub fn param_count(&self, input_dim: usize, n_classes: usize) -> Result<usize, DescriptorError> {
        self.validate()?;
        if input_dim == 0 || n_classes < 2 {
            return Err(DescriptorError::Shape { input_dim, n_classes });
        }
        let bn = self.batch_norm;
        Ok(match self.family {
            Family::Mlp => dense_count(input_dim, &self.hidden, Some(n_classes), bn),
            Family::MultiBranch => {
                let slices = self.slices(input_dim)?;
                let branches = self.branches.as_ref().expect("validated");
                let f = self.fusion_dim;
                let mut n = 0;
                let mut concat = 0;
                for (b, r) in branches.all().into_iter().zip(slices) {
                    n += dense_count(r.len(), &b.widths, None, bn);
                    let last = *b.widths.last().expect("validated");
                    concat += last;
                    if self.attention.enabled {
                        n += last * f + f;
                    }
                }
                n += concat * f + f;
                if self.attention.enabled {
                    n += 4 * (f * f + f);
                }
                n + dense_count(f, &self.head, Some(self.n_out(n_classes)), bn)
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, DescriptorError> {
        let d: Self = toml::from_str(text).map_err(|e| DescriptorError::Parse(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    /// Hex SHA-256 of the canonical JSON form; identifies a descriptor across runs.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("descriptor serializes to JSON");
        hex::encode(Sha256::digest(&bytes))
    }
}
