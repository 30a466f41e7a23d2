use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use tsa_nn::{ArchitectureDescriptor, AttentionSpec, BranchSpec, Branches, Family, LossSpec, OptimSpec, ScheduleSpec};

/// Fenced-block tag of a rendered search space.
pub const SPACE_SCHEMA: &str = "space/v1";

/// One design choice of the search space, in enumeration order (the last
/// axis varies fastest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Family,
    Hidden,
    Temporal,
    Spatial,
    Frequency,
    FusionDim,
    Head,
    Attention,
    Heads,
    Dropout,
    BatchNorm,
    Loss,
    Lr,
    WeightDecay,
    Epochs,
    BatchSize,
    Patience,
}

impl Axis {
    pub const ALL: [Axis; 17] = [
        Axis::Family,
        Axis::Hidden,
        Axis::Temporal,
        Axis::Spatial,
        Axis::Frequency,
        Axis::FusionDim,
        Axis::Head,
        Axis::Attention,
        Axis::Heads,
        Axis::Dropout,
        Axis::BatchNorm,
        Axis::Loss,
        Axis::Lr,
        Axis::WeightDecay,
        Axis::Epochs,
        Axis::BatchSize,
        Axis::Patience,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Family => "families",
            Axis::Hidden => "hidden",
            Axis::Temporal => "temporal",
            Axis::Spatial => "spatial",
            Axis::Frequency => "frequency",
            Axis::FusionDim => "fusion_dim",
            Axis::Head => "head",
            Axis::Attention => "attention",
            Axis::Heads => "heads",
            Axis::Dropout => "dropout",
            Axis::BatchNorm => "batch_norm",
            Axis::Loss => "loss",
            Axis::Lr => "lr",
            Axis::WeightDecay => "weight_decay",
            Axis::Epochs => "epochs",
            Axis::BatchSize => "batch_size",
            Axis::Patience => "patience",
        }
    }
}

/// Menu indices, one per [`Axis`]. Axes that do not apply to the point's
/// family (or to a disabled attention block) are held at 0.
pub type Point = Vec<usize>;

/// Finite menus of design choices. Every schedule is one-cycle with the
/// default shape and its peak at the candidate's learning rate; seeds are
/// assigned by the orchestrator and are not part of the space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub families: Vec<Family>,
    pub hidden: Vec<Vec<usize>>,
    pub temporal: Vec<Vec<usize>>,
    pub spatial: Vec<Vec<usize>>,
    pub frequency: Vec<Vec<usize>>,
    pub fusion_dim: Vec<usize>,
    pub head: Vec<Vec<usize>>,
    pub attention: Vec<bool>,
    pub heads: Vec<usize>,
    pub dropout: Vec<f64>,
    pub batch_norm: Vec<bool>,
    pub loss: Vec<LossSpec>,
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub patience: Vec<usize>,
}

/// Optional per-axis subsets proposed by a strategy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Narrowing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<Family>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_dim: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_norm: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<Vec<LossSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("menu `{0}` is empty")]
    EmptyMenu(&'static str),
    #[error("menu `{axis}` holds an unusable value: {value}")]
    BadValue { axis: &'static str, value: String },
    #[error("the space contains no valid descriptor")]
    NoValidPoint,
    #[error("unknown search space preset `{0}` (known: desk, full)")]
    UnknownPreset(String),
}

/// Equality used for menu lookups; floats compare with a relative tolerance.
trait MenuItem: Clone + Debug {
    fn same(&self, other: &Self) -> bool;
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()) + 1e-15
}

impl MenuItem for usize {
    fn same(&self, other: &Self) -> bool {
        self == other
    }
}
impl MenuItem for bool {
    fn same(&self, other: &Self) -> bool {
        self == other
    }
}
impl MenuItem for Family {
    fn same(&self, other: &Self) -> bool {
        self == other
    }
}
impl MenuItem for Vec<usize> {
    fn same(&self, other: &Self) -> bool {
        self == other
    }
}
impl MenuItem for f64 {
    fn same(&self, other: &Self) -> bool {
        close(*self, *other)
    }
}
impl MenuItem for LossSpec {
    fn same(&self, other: &Self) -> bool {
        match (self, other) {
            (LossSpec::Focal { alpha: a1, gamma: g1 }, LossSpec::Focal { alpha: a2, gamma: g2 }) => {
                close(*a1, *a2) && close(*g1, *g2)
            }
            _ => self == other,
        }
    }
}

fn find<T: MenuItem>(menu: &[T], value: &T) -> Option<usize> {
    menu.iter().position(|m| m.same(value))
}

fn locate<T: MenuItem>(axis: Axis, menu: &[T], value: &T, why: &mut Vec<String>) -> usize {
    find(menu, value).unwrap_or_else(|| {
        why.push(format!("{} {value:?} is not in the menu {menu:?}", axis.name()));
        0
    })
}

/// Menu entries named by `wanted` that exist in `full`, in menu order.
fn clip<T: MenuItem>(axis: Axis, full: &[T], wanted: &Option<Vec<T>>, warnings: &mut Vec<String>) -> Vec<T> {
    let Some(wanted) = wanted else {
        return full.to_vec();
    };
    for w in wanted {
        if find(full, w).is_none() {
            warnings.push(format!("{}: {w:?} is outside the search space and was dropped", axis.name()));
        }
    }
    let kept: Vec<T> = full.iter().filter(|f| wanted.iter().any(|w| w.same(f))).cloned().collect();
    if kept.is_empty() {
        warnings.push(format!("{}: no proposed value is in the search space, the full menu is kept", axis.name()));
        return full.to_vec();
    }
    kept
}

fn pick<T: Clone>(menu: &[T], idx: &[usize]) -> Option<Vec<T>> {
    Some(idx.iter().map(|&i| menu[i].clone()).collect())
}

/// Descriptor with the orchestrator-owned and irrelevant fields reset, so
/// that equal designs share one digest.
pub fn canonical(desc: &ArchitectureDescriptor) -> ArchitectureDescriptor {
    let mut c = desc.clone();
    c.seed = 0;
    if !c.attention.enabled {
        c.attention.heads = 1;
    }
    c
}

/// Digest identifying a design independently of its seed.
pub fn canonical_digest(desc: &ArchitectureDescriptor) -> String {
    canonical(desc).digest()
}

impl SearchSpace {
    /// Menus sized for the desk-scale 9-bus study.
    pub fn desk() -> Self {
        Self {
            families: vec![Family::Mlp, Family::MultiBranch],
            hidden: vec![vec![64, 32], vec![128, 64], vec![256, 128], vec![256, 128, 64]],
            temporal: vec![vec![32], vec![64, 32]],
            spatial: vec![vec![32], vec![64, 32]],
            frequency: vec![vec![32]],
            fusion_dim: vec![32, 64],
            head: vec![vec![32]],
            attention: vec![false, true],
            heads: vec![2, 4],
            dropout: vec![0.1, 0.2, 0.3],
            batch_norm: vec![true],
            loss: vec![
                LossSpec::WeightedCe,
                LossSpec::Focal { alpha: 0.25, gamma: 2.0 },
                LossSpec::Focal { alpha: 0.75, gamma: 2.0 },
                LossSpec::Ce,
            ],
            lr: vec![1e-3, 3e-3],
            weight_decay: vec![1e-4],
            epochs: vec![100],
            batch_size: vec![32, 64],
            patience: vec![15],
        }
    }

    /// Menus around the reference dense and multi-branch designs.
    pub fn full() -> Self {
        Self {
            families: vec![Family::Mlp, Family::MultiBranch],
            hidden: vec![vec![512, 256], vec![1024, 512, 256], vec![2048, 1024, 512, 256]],
            temporal: vec![vec![128], vec![256, 192]],
            spatial: vec![vec![128], vec![192, 128]],
            frequency: vec![vec![64], vec![128]],
            fusion_dim: vec![192, 384],
            head: vec![vec![96, 48], vec![192, 96, 48, 24]],
            attention: vec![false, true],
            heads: vec![4, 8, 12],
            dropout: vec![0.1, 0.2, 0.3],
            batch_norm: vec![true, false],
            loss: vec![
                LossSpec::WeightedCe,
                LossSpec::Focal { alpha: 0.25, gamma: 2.0 },
                LossSpec::Focal { alpha: 0.75, gamma: 2.0 },
                LossSpec::Ce,
            ],
            lr: vec![1e-3, 3e-3],
            weight_decay: vec![1e-4, 1e-3],
            epochs: vec![100],
            batch_size: vec![64, 128],
            patience: vec![15],
        }
    }

    pub fn preset(name: &str) -> Result<Self, SpaceError> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(SpaceError::UnknownPreset(other.to_string())),
        }
    }

    pub fn menu_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::Family => self.families.len(),
            Axis::Hidden => self.hidden.len(),
            Axis::Temporal => self.temporal.len(),
            Axis::Spatial => self.spatial.len(),
            Axis::Frequency => self.frequency.len(),
            Axis::FusionDim => self.fusion_dim.len(),
            Axis::Head => self.head.len(),
            Axis::Attention => self.attention.len(),
            Axis::Heads => self.heads.len(),
            Axis::Dropout => self.dropout.len(),
            Axis::BatchNorm => self.batch_norm.len(),
            Axis::Loss => self.loss.len(),
            Axis::Lr => self.lr.len(),
            Axis::WeightDecay => self.weight_decay.len(),
            Axis::Epochs => self.epochs.len(),
            Axis::BatchSize => self.batch_size.len(),
            Axis::Patience => self.patience.len(),
        }
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        for axis in Axis::ALL {
            if self.menu_len(axis) == 0 {
                return Err(SpaceError::EmptyMenu(axis.name()));
            }
        }
        let bad = |axis: Axis, v: &dyn Debug| SpaceError::BadValue { axis: axis.name(), value: format!("{v:?}") };
        if let Some(d) = self.dropout.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(bad(Axis::Dropout, d));
        }
        if let Some(v) = self.lr.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(bad(Axis::Lr, v));
        }
        if let Some(v) = self.weight_decay.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(bad(Axis::WeightDecay, v));
        }
        for (axis, menu) in [(Axis::Epochs, &self.epochs), (Axis::BatchSize, &self.batch_size)] {
            if let Some(v) = menu.iter().find(|v| **v == 0) {
                return Err(bad(axis, v));
            }
        }
        if self.descriptors().next().is_none() {
            return Err(SpaceError::NoValidPoint);
        }
        Ok(())
    }

    /// Whether `axis` shapes the descriptor built from `point`.
    pub fn relevant(&self, axis: Axis, point: &[usize]) -> bool {
        let multi = self.families[point[Axis::Family as usize]] == Family::MultiBranch;
        match axis {
            Axis::Hidden => !multi,
            Axis::Temporal | Axis::Spatial | Axis::Frequency | Axis::FusionDim | Axis::Head | Axis::Attention => multi,
            Axis::Heads => multi && self.attention[point[Axis::Attention as usize]],
            _ => true,
        }
    }

    /// Point with every irrelevant axis reset to 0.
    pub fn canonical_point(&self, point: &[usize]) -> Point {
        Axis::ALL.iter().map(|&a| if self.relevant(a, point) { point[a as usize] } else { 0 }).collect()
    }

    /// Descriptor at `point`, or `None` when the combination is invalid
    /// (for example heads that do not divide the fusion width).
    pub fn build(&self, point: &[usize]) -> Option<ArchitectureDescriptor> {
        let at = |a: Axis| point[a as usize];
        let lr = self.lr[at(Axis::Lr)];
        let multi = self.families[at(Axis::Family)] == Family::MultiBranch;
        let enabled = multi && self.attention[at(Axis::Attention)];
        let desc = ArchitectureDescriptor {
            family: self.families[at(Axis::Family)],
            hidden: if multi { Vec::new() } else { self.hidden[at(Axis::Hidden)].clone() },
            branches: multi.then(|| Branches {
                temporal: BranchSpec::new(&self.temporal[at(Axis::Temporal)]),
                spatial: BranchSpec::new(&self.spatial[at(Axis::Spatial)]),
                frequency: BranchSpec::new(&self.frequency[at(Axis::Frequency)]),
            }),
            fusion_dim: if multi { self.fusion_dim[at(Axis::FusionDim)] } else { 0 },
            attention: AttentionSpec { enabled, heads: if enabled { self.heads[at(Axis::Heads)] } else { 1 } },
            head: if multi { self.head[at(Axis::Head)].clone() } else { Vec::new() },
            dropout: self.dropout[at(Axis::Dropout)],
            batch_norm: self.batch_norm[at(Axis::BatchNorm)],
            loss: self.loss[at(Axis::Loss)],
            optim: OptimSpec { lr, weight_decay: self.weight_decay[at(Axis::WeightDecay)] },
            schedule: Some(ScheduleSpec::one_cycle(lr)),
            epochs: self.epochs[at(Axis::Epochs)],
            batch_size: self.batch_size[at(Axis::BatchSize)],
            patience: self.patience[at(Axis::Patience)],
            seed: 0,
        };
        desc.validate().ok().map(|_| desc)
    }

    /// Canonical point of `desc`, or the reasons it lies outside the space.
    pub fn point_of(&self, desc: &ArchitectureDescriptor) -> Result<Point, Vec<String>> {
        let mut why = Vec::new();
        if let Err(e) = desc.validate() {
            why.push(e.to_string());
        }
        let mut p = vec![0; Axis::ALL.len()];
        p[Axis::Family as usize] = locate(Axis::Family, &self.families, &desc.family, &mut why);
        match desc.family {
            Family::Mlp => p[Axis::Hidden as usize] = locate(Axis::Hidden, &self.hidden, &desc.hidden, &mut why),
            Family::MultiBranch => {
                if let Some(b) = &desc.branches {
                    p[Axis::Temporal as usize] = locate(Axis::Temporal, &self.temporal, &b.temporal.widths, &mut why);
                    p[Axis::Spatial as usize] = locate(Axis::Spatial, &self.spatial, &b.spatial.widths, &mut why);
                    p[Axis::Frequency as usize] =
                        locate(Axis::Frequency, &self.frequency, &b.frequency.widths, &mut why);
                }
                p[Axis::FusionDim as usize] = locate(Axis::FusionDim, &self.fusion_dim, &desc.fusion_dim, &mut why);
                p[Axis::Head as usize] = locate(Axis::Head, &self.head, &desc.head, &mut why);
                p[Axis::Attention as usize] =
                    locate(Axis::Attention, &self.attention, &desc.attention.enabled, &mut why);
                if desc.attention.enabled {
                    p[Axis::Heads as usize] = locate(Axis::Heads, &self.heads, &desc.attention.heads, &mut why);
                }
            }
        }
        p[Axis::Dropout as usize] = locate(Axis::Dropout, &self.dropout, &desc.dropout, &mut why);
        p[Axis::BatchNorm as usize] = locate(Axis::BatchNorm, &self.batch_norm, &desc.batch_norm, &mut why);
        p[Axis::Loss as usize] = locate(Axis::Loss, &self.loss, &desc.loss, &mut why);
        p[Axis::Lr as usize] = locate(Axis::Lr, &self.lr, &desc.optim.lr, &mut why);
        p[Axis::WeightDecay as usize] =
            locate(Axis::WeightDecay, &self.weight_decay, &desc.optim.weight_decay, &mut why);
        p[Axis::Epochs as usize] = locate(Axis::Epochs, &self.epochs, &desc.epochs, &mut why);
        p[Axis::BatchSize as usize] = locate(Axis::BatchSize, &self.batch_size, &desc.batch_size, &mut why);
        p[Axis::Patience as usize] = locate(Axis::Patience, &self.patience, &desc.patience, &mut why);
        if !why.is_empty() {
            return Err(why);
        }
        match self.build(&p) {
            Some(built) if same_design(&built, desc) => Ok(p),
            Some(_) => Err(vec![
                "structure outside the space (schedule, branch slices or fields of another family)".into()
            ]),
            None => Err(vec!["the combination is not a valid descriptor".into()]),
        }
    }

    /// Membership test: every field is in its menu.
    pub fn contains(&self, desc: &ArchitectureDescriptor) -> bool {
        self.point_of(desc).is_ok()
    }

    /// Distinct valid descriptors in enumeration order.
    pub fn descriptors(&self) -> impl Iterator<Item = (Point, ArchitectureDescriptor)> + '_ {
        let radices: Vec<usize> = Axis::ALL.iter().map(|&a| self.menu_len(a)).collect();
        let start = radices.iter().all(|&r| r > 0).then(|| vec![0; radices.len()]);
        let mut cursor = start;
        std::iter::from_fn(move || loop {
            let p = cursor.take()?;
            let mut next = p.clone();
            let mut i = next.len();
            cursor = loop {
                if i == 0 {
                    break None;
                }
                i -= 1;
                next[i] += 1;
                if next[i] < radices[i] {
                    break Some(next);
                }
                next[i] = 0;
            };
            if self.canonical_point(&p) != p {
                continue;
            }
            if let Some(d) = self.build(&p) {
                return Some((p, d));
            }
        })
    }

    pub fn size(&self) -> usize {
        self.descriptors().count()
    }

    /// The space restricted to the proposed subsets, with a warning for
    /// every proposed value outside it.
    pub fn narrow(&self, n: &Narrowing) -> (SearchSpace, Vec<String>) {
        let mut w = Vec::new();
        let s = SearchSpace {
            families: clip(Axis::Family, &self.families, &n.families, &mut w),
            hidden: clip(Axis::Hidden, &self.hidden, &n.hidden, &mut w),
            temporal: clip(Axis::Temporal, &self.temporal, &n.temporal, &mut w),
            spatial: clip(Axis::Spatial, &self.spatial, &n.spatial, &mut w),
            frequency: clip(Axis::Frequency, &self.frequency, &n.frequency, &mut w),
            fusion_dim: clip(Axis::FusionDim, &self.fusion_dim, &n.fusion_dim, &mut w),
            head: clip(Axis::Head, &self.head, &n.head, &mut w),
            attention: clip(Axis::Attention, &self.attention, &n.attention, &mut w),
            heads: clip(Axis::Heads, &self.heads, &n.heads, &mut w),
            dropout: clip(Axis::Dropout, &self.dropout, &n.dropout, &mut w),
            batch_norm: clip(Axis::BatchNorm, &self.batch_norm, &n.batch_norm, &mut w),
            loss: clip(Axis::Loss, &self.loss, &n.loss, &mut w),
            lr: clip(Axis::Lr, &self.lr, &n.lr, &mut w),
            weight_decay: clip(Axis::WeightDecay, &self.weight_decay, &n.weight_decay, &mut w),
            epochs: clip(Axis::Epochs, &self.epochs, &n.epochs, &mut w),
            batch_size: clip(Axis::BatchSize, &self.batch_size, &n.batch_size, &mut w),
            patience: clip(Axis::Patience, &self.patience, &n.patience, &mut w),
        };
        (s, w)
    }

    /// Narrowing that keeps, on each axis, the menu entries at `choices[axis]`.
    pub fn narrowing(&self, choices: &[Vec<usize>]) -> Narrowing {
        let c = |a: Axis| &choices[a as usize][..];
        Narrowing {
            families: pick(&self.families, c(Axis::Family)),
            hidden: pick(&self.hidden, c(Axis::Hidden)),
            temporal: pick(&self.temporal, c(Axis::Temporal)),
            spatial: pick(&self.spatial, c(Axis::Spatial)),
            frequency: pick(&self.frequency, c(Axis::Frequency)),
            fusion_dim: pick(&self.fusion_dim, c(Axis::FusionDim)),
            head: pick(&self.head, c(Axis::Head)),
            attention: pick(&self.attention, c(Axis::Attention)),
            heads: pick(&self.heads, c(Axis::Heads)),
            dropout: pick(&self.dropout, c(Axis::Dropout)),
            batch_norm: pick(&self.batch_norm, c(Axis::BatchNorm)),
            loss: pick(&self.loss, c(Axis::Loss)),
            lr: pick(&self.lr, c(Axis::Lr)),
            weight_decay: pick(&self.weight_decay, c(Axis::WeightDecay)),
            epochs: pick(&self.epochs, c(Axis::Epochs)),
            batch_size: pick(&self.batch_size, c(Axis::BatchSize)),
            patience: pick(&self.patience, c(Axis::Patience)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("search space serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

fn same_design(a: &ArchitectureDescriptor, b: &ArchitectureDescriptor) -> bool {
    let (a, b) = (canonical(a), canonical(b));
    let floats = close(a.dropout, b.dropout)
        && close(a.optim.lr, b.optim.lr)
        && close(a.optim.weight_decay, b.optim.weight_decay)
        && a.loss.same(&b.loss);
    let schedule = match (&a.schedule, &b.schedule) {
        (Some(x), Some(y)) => {
            close(x.max_lr, y.max_lr)
                && close(x.warmup_frac, y.warmup_frac)
                && close(x.div_factor, y.div_factor)
                && close(x.final_div, y.final_div)
        }
        (None, None) => true,
        _ => false,
    };
    let rest = |d: &ArchitectureDescriptor| {
        let mut d = d.clone();
        d.dropout = 0.0;
        d.optim = OptimSpec { lr: 1.0, weight_decay: 0.0 };
        d.loss = LossSpec::Ce;
        d.schedule = None;
        d
    };
    floats && schedule && rest(&a) == rest(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twelve() -> SearchSpace {
        SearchSpace {
            families: vec![Family::Mlp],
            hidden: vec![vec![8], vec![16], vec![16, 8]],
            dropout: vec![0.0, 0.2],
            lr: vec![1e-3, 1e-2],
            loss: vec![LossSpec::WeightedCe],
            batch_size: vec![64],
            ..SearchSpace::desk()
        }
    }

    fn brute_force_count(s: &SearchSpace) -> usize {
        let mut n = 0;
        for &family in &s.families {
            let shape = match family {
                Family::Mlp => s.hidden.len(),
                Family::MultiBranch => {
                    let fusion_and_attention: usize = s
                        .fusion_dim
                        .iter()
                        .map(|f| {
                            s.attention
                                .iter()
                                .map(|&on| if on { s.heads.iter().filter(|&&h| f % h == 0).count() } else { 1 })
                                .sum::<usize>()
                        })
                        .sum();
                    s.temporal.len() * s.spatial.len() * s.frequency.len() * s.head.len() * fusion_and_attention
                }
            };
            n += shape
                * s.dropout.len()
                * s.batch_norm.len()
                * s.loss.len()
                * s.lr.len()
                * s.weight_decay.len()
                * s.epochs.len()
                * s.batch_size.len()
                * s.patience.len();
        }
        n
    }

    #[test]
    fn enumeration_matches_the_menu_product() {
        assert_eq!(twelve().size(), 12);
        let desk = SearchSpace::desk();
        assert_eq!(desk.size(), brute_force_count(&desk));
    }

    #[test]
    fn enumerated_descriptors_are_distinct_members() {
        let s = SearchSpace::desk();
        let mut digests = std::collections::HashSet::new();
        for (p, d) in s.descriptors() {
            assert_eq!(s.point_of(&d).unwrap(), p);
            assert!(digests.insert(canonical_digest(&d)));
        }
    }

    #[test]
    fn seed_does_not_change_membership_or_digest() {
        let s = twelve();
        let (_, mut d) = s.descriptors().nth(5).unwrap();
        let before = canonical_digest(&d);
        d.seed = 991;
        assert!(s.contains(&d));
        assert_eq!(canonical_digest(&d), before);
    }

    #[test]
    fn dropout_outside_the_menu_is_rejected() {
        let s = SearchSpace { dropout: vec![0.1, 0.2, 0.3], ..twelve() };
        let (_, mut d) = s.descriptors().next().unwrap();
        d.dropout = 0.9;
        let why = s.point_of(&d).unwrap_err();
        assert!(why.iter().any(|w| w.starts_with("dropout 0.9")), "{why:?}");
    }

    #[test]
    fn foreign_fields_are_rejected() {
        let s = twelve();
        let (_, mut d) = s.descriptors().next().unwrap();
        d.fusion_dim = 32;
        assert!(!s.contains(&d));
        let (_, mut d) = s.descriptors().next().unwrap();
        d.schedule = None;
        assert!(!s.contains(&d));
    }

    #[test]
    fn float_menus_tolerate_rounding() {
        let s = twelve();
        let (_, mut d) = s.descriptors().last().unwrap();
        d.optim.lr = 0.01 * (1.0 + 1e-12);
        d.schedule = Some(ScheduleSpec::one_cycle(d.optim.lr));
        assert!(s.contains(&d));
    }

    #[test]
    fn narrowing_outside_the_space_is_clipped_with_warnings() {
        let s = twelve();
        let n = Narrowing { hidden: Some(vec![vec![16], vec![4096]]), dropout: Some(vec![0.9]), ..Default::default() };
        let (narrow, warnings) = s.narrow(&n);
        assert_eq!(narrow.hidden, vec![vec![16]]);
        assert_eq!(narrow.dropout, s.dropout);
        assert_eq!(warnings.len(), 3, "{warnings:?}");
        assert_eq!(narrow.size(), 4);
        for (_, d) in narrow.descriptors() {
            assert!(s.contains(&d));
        }
    }

    #[test]
    fn heads_that_do_not_divide_the_fusion_width_are_skipped() {
        let s = SearchSpace { fusion_dim: vec![30], heads: vec![4, 5], families: vec![Family::MultiBranch], ..SearchSpace::desk() };
        assert!(s.descriptors().all(|(_, d)| !d.attention.enabled || d.attention.heads == 5));
        assert_eq!(s.size(), brute_force_count(&s));
    }

    #[test]
    fn empty_menu_is_invalid() {
        let s = SearchSpace { lr: Vec::new(), ..twelve() };
        assert_eq!(s.validate(), Err(SpaceError::EmptyMenu("lr")));
        assert!(twelve().validate().is_ok());
        assert!(SearchSpace::full().validate().is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let s = SearchSpace::desk();
        assert_eq!(SearchSpace::from_toml(&s.to_toml()).unwrap(), s);
    }
}
