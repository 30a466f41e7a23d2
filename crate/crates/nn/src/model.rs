use std::collections::HashMap;
use std::ops::Range;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::SelfAttention;
use crate::descriptor::{ArchitectureDescriptor, Branches, DescriptorError, Family, LossSpec};
use crate::error::NnError;
use crate::layers::{Chain, Linear, Mode, Param, Relu};
use crate::loss::{loss, softmax_rows};
use crate::real::Real;

#[derive(Debug, Clone)]
struct MultiBranch<T> {
    slices: [Range<usize>; 3],
    /// Output width of each branch.
    widths: Vec<usize>,
    branches: Vec<Chain<T>>,
    fuse: Linear<T>,
    proj: Vec<Linear<T>>,
    attention: Option<SelfAttention<T>>,
    act: Relu<T>,
    head: Chain<T>,
}

impl<T: Real> MultiBranch<T> {
    fn branch_inputs(&self, x: &Array2<T>) -> Vec<Array2<T>> {
        self.slices.iter().map(|r| x.slice(s![.., r.clone()]).to_owned()).collect()
    }

    /// Stacks per-branch rows so each sample owns consecutive token rows.
    fn tokens(projected: &[Array2<T>]) -> Array2<T> {
        let (n, d) = projected[0].dim();
        let k = projected.len();
        let mut t = Array2::zeros((n * k, d));
        for (i, p) in projected.iter().enumerate() {
            t.slice_mut(s![i..;k, ..]).assign(p);
        }
        t
    }

    fn infer(&self, x: &Array2<T>) -> Array2<T> {
        let outs: Vec<Array2<T>> =
            self.branch_inputs(x).iter().zip(&self.branches).map(|(xi, b)| b.infer(xi)).collect();
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let mut fused = self.fuse.infer(&concatenate(Axis(1), &views).expect("equal batch sizes"));
        if let Some(att) = &self.attention {
            let projected: Vec<_> = outs.iter().zip(&self.proj).map(|(o, p)| p.infer(o)).collect();
            fused += &att.infer(&Self::tokens(&projected));
        }
        self.head.infer(&self.act.infer(&fused))
    }

    fn forward(&mut self, x: &Array2<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Array2<T> {
        let inputs = self.branch_inputs(x);
        let outs: Vec<Array2<T>> =
            inputs.iter().zip(&mut self.branches).map(|(xi, b)| b.forward(xi, mode, rng)).collect();
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let mut fused = self.fuse.forward(&concatenate(Axis(1), &views).expect("equal batch sizes"));
        if let Some(att) = &mut self.attention {
            let projected: Vec<_> = outs.iter().zip(&mut self.proj).map(|(o, p)| p.forward(o)).collect();
            fused += &att.forward(&Self::tokens(&projected));
        }
        let h = self.act.forward(&fused);
        self.head.forward(&h, mode, rng)
    }

    fn backward(&mut self, dlogits: &Array2<T>) {
        let dh = self.head.backward(dlogits);
        let dfused = self.act.backward(&dh);
        let dcat = self.fuse.backward(&dfused);
        let mut offset = 0;
        let mut douts: Vec<Array2<T>> = Vec::with_capacity(3);
        for l in &self.widths {
            douts.push(dcat.slice(s![.., offset..offset + l]).to_owned());
            offset += l;
        }
        if let Some(att) = &mut self.attention {
            let dtokens = att.backward(&dfused);
            let k = self.proj.len();
            for (i, p) in self.proj.iter_mut().enumerate() {
                let dt = dtokens.slice(s![i..;k, ..]).to_owned();
                douts[i] += &p.backward(&dt);
            }
        }
        for (b, d) in self.branches.iter_mut().zip(&douts) {
            b.backward(d);
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.branches.iter().flat_map(|b| b.params()).collect();
        out.extend([&self.fuse.w, &self.fuse.b]);
        for p in &self.proj {
            out.extend([&p.w, &p.b]);
        }
        if let Some(att) = &self.attention {
            out.extend(att.params());
        }
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.branches.iter_mut().flat_map(|b| b.params_mut()).collect();
        out.extend([&mut self.fuse.w, &mut self.fuse.b]);
        for p in &mut self.proj {
            out.extend([&mut p.w, &mut p.b]);
        }
        if let Some(att) = &mut self.attention {
            out.extend(att.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    fn chains_mut(&mut self) -> impl Iterator<Item = &mut Chain<T>> {
        self.branches.iter_mut().chain(std::iter::once(&mut self.head))
    }

    fn chains(&self) -> impl Iterator<Item = &Chain<T>> {
        self.branches.iter().chain(std::iter::once(&self.head))
    }
}

#[derive(Debug, Clone)]
enum Body<T> {
    Mlp(Chain<T>),
    MultiBranch(Box<MultiBranch<T>>),
}

/// A network instantiated from a descriptor. Inputs are standardized with
/// `shift` and `scale` before the first layer.
#[derive(Debug, Clone)]
pub struct Model<T> {
    descriptor: ArchitectureDescriptor,
    input_dim: usize,
    n_classes: usize,
    pub shift: Array1<T>,
    pub scale: Array1<T>,
    body: Body<T>,
}

impl<T: Real> Model<T> {
    pub fn instantiate(desc: &ArchitectureDescriptor, input_dim: usize, n_classes: usize) -> Result<Self, NnError> {
        desc.validate()?;
        if input_dim == 0 || n_classes < 2 {
            return Err(DescriptorError::Shape { input_dim, n_classes }.into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
        let (p, bn) = (desc.dropout, desc.batch_norm);
        let body = match desc.family {
            Family::Mlp => Body::Mlp(Chain::dense("mlp", input_dim, &desc.hidden, Some(n_classes), p, bn, &mut rng)),
            Family::MultiBranch => {
                let slices = desc.slices(input_dim)?;
                let specs = desc.branches.as_ref().expect("validated");
                let f = desc.fusion_dim;
                let mut branches = Vec::new();
                let mut lasts = Vec::new();
                for ((name, spec), r) in Branches::NAMES.iter().zip(specs.all()).zip(&slices) {
                    branches.push(Chain::dense(name, r.len(), &spec.widths, None, p, bn, &mut rng));
                    lasts.push(*spec.widths.last().expect("validated"));
                }
                let fuse = Linear::he("fusion", lasts.iter().sum(), f, &mut rng);
                let (proj, attention) = if desc.attention.enabled {
                    let proj = Branches::NAMES
                        .iter()
                        .zip(&lasts)
                        .map(|(name, &w)| Linear::he(&format!("attention.token.{name}"), w, f, &mut rng))
                        .collect();
                    (proj, Some(SelfAttention::new("attention", f, desc.attention.heads, 3, &mut rng)))
                } else {
                    (Vec::new(), None)
                };
                let head = Chain::dense("head", f, &desc.head, Some(desc.n_out(n_classes)), p, bn, &mut rng);
                Body::MultiBranch(Box::new(MultiBranch {
                    slices,
                    widths: lasts,
                    branches,
                    fuse,
                    proj,
                    attention,
                    act: Relu::new(),
                    head,
                }))
            }
        };
        Ok(Self {
            descriptor: desc.clone(),
            input_dim,
            n_classes,
            shift: Array1::zeros(input_dim),
            scale: Array1::ones(input_dim),
            body,
        })
    }

    pub fn descriptor(&self) -> &ArchitectureDescriptor {
        &self.descriptor
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of logit columns the network emits.
    pub fn n_out(&self) -> usize {
        self.descriptor.n_out(self.n_classes)
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn standardize(&self, x: &Array2<T>) -> Result<Array2<T>, NnError> {
        if x.ncols() != self.input_dim {
            return Err(NnError::Shape { what: "batch width", expected: self.input_dim, found: x.ncols() });
        }
        Ok((x - &self.shift) / &self.scale)
    }

    /// Eval-mode logits without touching any cached state.
    pub fn predict_logits(&self, x: &Array2<T>) -> Result<Array2<T>, NnError> {
        let xs = self.standardize(x)?;
        Ok(match &self.body {
            Body::Mlp(c) => c.infer(&xs),
            Body::MultiBranch(m) => m.infer(&xs),
        })
    }

    /// Class probabilities, one row per sample summing to 1.
    pub fn predict_proba(&self, x: &Array2<T>) -> Result<Array2<T>, NnError> {
        Ok(softmax_rows(&self.class_logits(&self.predict_logits(x)?)))
    }

    pub fn predict(&self, x: &Array2<T>) -> Result<Vec<u32>, NnError> {
        let p = self.predict_proba(x)?;
        Ok(p.rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                best as u32
            })
            .collect())
    }

    /// Logits with caches kept for `backward`.
    pub fn forward(&mut self, x: &Array2<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Array2<T>, NnError> {
        let xs = self.standardize(x)?;
        Ok(match &mut self.body {
            Body::Mlp(c) => c.forward(&xs, mode, rng),
            Body::MultiBranch(m) => m.forward(&xs, mode, rng),
        })
    }

    /// Accumulates parameter gradients from the gradient of the raw logits.
    pub fn backward(&mut self, dlogits: &Array2<T>) {
        match &mut self.body {
            Body::Mlp(c) => {
                c.backward(dlogits);
            }
            Body::MultiBranch(m) => m.backward(dlogits),
        }
    }

    /// Expands a single binary logit `z` to the class logits `[0, z]`.
    pub fn class_logits(&self, raw: &Array2<T>) -> Array2<T> {
        if raw.ncols() == 1 && self.n_classes == 2 {
            concatenate(Axis(1), &[Array2::zeros((raw.nrows(), 1)).view(), raw.view()]).expect("same rows")
        } else {
            raw.clone()
        }
    }

    fn fold_grad(&self, g: Array2<T>) -> Array2<T> {
        if self.n_out() == 1 {
            g.slice(s![.., 1..2]).to_owned()
        } else {
            g
        }
    }

    /// Forward, loss and backward on one batch; returns the batch loss.
    pub fn loss_and_backward(
        &mut self,
        x: &Array2<T>,
        labels: &[u32],
        spec: &LossSpec,
        weights: Option<&[f64]>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<T, NnError> {
        let raw = self.forward(x, mode, rng)?;
        let (l, g) = loss(&self.class_logits(&raw), labels, spec, weights)?;
        let g = self.fold_grad(g);
        self.backward(&g);
        Ok(l)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match &self.body {
            Body::Mlp(c) => c.params(),
            Body::MultiBranch(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match &mut self.body {
            Body::Mlp(c) => c.params_mut(),
            Body::MultiBranch(m) => m.params_mut(),
        }
    }

    /// Every named tensor that defines the model: parameters, batch-norm
    /// running statistics and the input standardization.
    pub fn state(&self) -> Vec<(String, Array2<T>)> {
        let mut out: Vec<(String, Array2<T>)> = self.params().into_iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        let chains: Vec<&Chain<T>> = match &self.body {
            Body::Mlp(c) => vec![c],
            Body::MultiBranch(m) => m.chains().collect(),
        };
        for c in chains {
            out.extend(c.buffers().into_iter().map(|(n, a)| (n, a.clone())));
        }
        out.push(("input.shift".into(), self.shift.clone().insert_axis(Axis(0))));
        out.push(("input.scale".into(), self.scale.clone().insert_axis(Axis(0))));
        out
    }

    /// Overwrites every tensor listed by [`Model::state`]; names and shapes must match.
    pub fn load_state(&mut self, mut tensors: HashMap<String, Array2<T>>) -> Result<(), NnError> {
        let mut take = |name: &str, shape: (usize, usize)| -> Result<Array2<T>, NnError> {
            let t = tensors.remove(name).ok_or_else(|| NnError::Weights(format!("missing tensor {name}")))?;
            if t.dim() != shape {
                return Err(NnError::Weights(format!("tensor {name} has shape {:?}, expected {shape:?}", t.dim())));
            }
            Ok(t)
        };
        for p in self.params_mut() {
            p.value = take(&p.name, p.value.dim())?;
        }
        let chains: Vec<&mut Chain<T>> = match &mut self.body {
            Body::Mlp(c) => vec![c],
            Body::MultiBranch(m) => m.chains_mut().collect(),
        };
        for c in chains {
            for (name, buf) in c.buffers_mut() {
                *buf = take(&name, buf.dim())?;
            }
        }
        let d = self.input_dim;
        self.shift = take("input.shift", (1, d))?.remove_axis(Axis(0));
        self.scale = take("input.scale", (1, d))?.remove_axis(Axis(0));
        if let Some(extra) = tensors.keys().next() {
            return Err(NnError::Weights(format!("unexpected tensor {extra}")));
        }
        Ok(())
    }
}
