use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout masks from the run RNG and batch statistics in batch-norm.
    Train,
    /// Deterministic: no dropout, running statistics in batch-norm.
    Eval,
}

/// A trainable tensor with its accumulated gradient. Vectors are stored as
/// `1 x n` matrices so every parameter has the same shape type.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Array2<T>,
    pub grad: Array2<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: String, value: Array2<T>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { name, value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

fn row<T: Real>(a: Array2<T>) -> Array2<T> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub w: Param<T>,
    pub b: Param<T>,
    input: Option<Array2<T>>,
}

impl<T: Real> Linear<T> {
    /// He-normal weights, zero bias.
    pub fn he(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            let z: f64 = StandardNormal.sample(rng);
            T::of(std * z)
        });
        Self::from_parts(name, w, Array2::zeros((1, fan_out)))
    }

    pub fn from_parts(name: &str, w: Array2<T>, b: Array2<T>) -> Self {
        assert_eq!(b.dim(), (1, w.ncols()), "bias must be 1 x fan_out");
        Self { w: Param::new(format!("{name}.w"), w), b: Param::new(format!("{name}.b"), b), input: None }
    }

    pub fn fan_in(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn infer(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.w.value) + &self.b.value
    }

    pub fn forward(&mut self, x: &Array2<T>) -> Array2<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Array2<T>) -> Array2<T> {
        let x = self.input.as_ref().expect("forward before backward");
        self.w.grad += &x.t().dot(dy);
        self.b.grad += &row(dy.clone());
        dy.dot(&self.w.value.t())
    }
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Array2<T>,
    inv_std: Array2<T>,
    train: bool,
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub name: String,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Array2<T>,
    pub running_var: Array2<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, width: usize) -> Self {
        Self {
            name: name.to_string(),
            gamma: Param::new(format!("{name}.gamma"), Array2::ones((1, width))),
            beta: Param::new(format!("{name}.beta"), Array2::zeros((1, width))),
            running_mean: Array2::zeros((1, width)),
            running_var: Array2::ones((1, width)),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn eval_inv_std(&self) -> Array2<T> {
        let eps = T::of(self.eps);
        self.running_var.mapv(|v| (v + eps).sqrt().recip())
    }

    pub fn infer(&self, x: &Array2<T>) -> Array2<T> {
        (x - &self.running_mean) * &self.eval_inv_std() * &self.gamma.value + &self.beta.value
    }

    pub fn forward(&mut self, x: &Array2<T>, mode: Mode) -> Array2<T> {
        let (xhat, inv_std) = match mode {
            Mode::Eval => {
                let inv_std = self.eval_inv_std();
                ((x - &self.running_mean) * &inv_std, inv_std)
            }
            Mode::Train => {
                let n = x.nrows();
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch").insert_axis(Axis(0));
                let centered = x - &mean;
                let var = (&centered * &centered).mean_axis(Axis(0)).expect("non-empty batch").insert_axis(Axis(0));
                let eps = T::of(self.eps);
                let inv_std = var.mapv(|v| (v + eps).sqrt().recip());
                let m = T::of(self.momentum);
                let unbiased = if n > 1 { T::of(n as f64 / (n - 1) as f64) } else { T::one() };
                self.running_mean = &self.running_mean * (T::one() - m) + &(mean * m);
                self.running_var = &self.running_var * (T::one() - m) + &(var * (m * unbiased));
                (centered * &inv_std, inv_std)
            }
        };
        let y = &xhat * &self.gamma.value + &self.beta.value;
        self.cache = Some(BnCache { xhat, inv_std, train: mode == Mode::Train });
        y
    }

    pub fn backward(&mut self, dy: &Array2<T>) -> Array2<T> {
        let c = self.cache.as_ref().expect("forward before backward");
        self.gamma.grad += &row(dy * &c.xhat);
        self.beta.grad += &row(dy.clone());
        let dxhat = dy * &self.gamma.value;
        if !c.train {
            return dxhat * &c.inv_std;
        }
        let n = T::of(dy.nrows() as f64);
        let sum_d = row(dxhat.clone());
        let sum_dx = row(&dxhat * &c.xhat);
        (dxhat * n - &sum_d - &(&c.xhat * &sum_dx)) * &c.inv_std / n
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    mask: Option<Array2<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { mask: None }
    }

    pub fn infer(&self, x: &Array2<T>) -> Array2<T> {
        x.mapv(|v| v.max(T::zero()))
    }

    pub fn forward(&mut self, x: &Array2<T>) -> Array2<T> {
        self.mask = Some(x.mapv(|v| if v > T::zero() { T::one() } else { T::zero() }));
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Array2<T>) -> Array2<T> {
        dy * self.mask.as_ref().expect("forward before backward")
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - p)` in training.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub p: f64,
    mask: Option<Array2<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    pub fn forward(&mut self, x: &Array2<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Array2<T> {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.p;
        let scale = T::of(1.0 / keep);
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if rng.random::<f64>() < keep { scale } else { T::zero() });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Array2<T>) -> Array2<T> {
        match &self.mask {
            Some(m) => dy * m,
            None => dy.clone(),
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Layer<T> {
    Linear(Linear<T>),
    BatchNorm(BatchNorm<T>),
    Relu(Relu<T>),
    Dropout(Dropout<T>),
}

/// Sequential stack of layers.
#[derive(Debug, Clone, Default)]
pub struct Chain<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Chain<T> {
    /// `[linear -> batch-norm? -> relu -> dropout]` per width, then an
    /// optional output linear layer.
    pub fn dense(
        prefix: &str,
        input: usize,
        widths: &[usize],
        out: Option<usize>,
        dropout: f64,
        batch_norm: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut layers = Vec::new();
        let mut prev = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Layer::Linear(Linear::he(&format!("{prefix}.{i}.linear"), prev, w, rng)));
            if batch_norm {
                layers.push(Layer::BatchNorm(BatchNorm::new(&format!("{prefix}.{i}.bn"), w)));
            }
            layers.push(Layer::Relu(Relu::new()));
            if dropout > 0.0 {
                layers.push(Layer::Dropout(Dropout::new(dropout)));
            }
            prev = w;
        }
        if let Some(o) = out {
            layers.push(Layer::Linear(Linear::he(&format!("{prefix}.out"), prev, o, rng)));
        }
        Self { layers }
    }

    pub fn infer(&self, x: &Array2<T>) -> Array2<T> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Linear(l) => l.infer(&h),
                Layer::BatchNorm(l) => l.infer(&h),
                Layer::Relu(l) => l.infer(&h),
                Layer::Dropout(_) => h,
            };
        }
        h
    }

    pub fn forward(&mut self, x: &Array2<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Array2<T> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Linear(l) => l.forward(&h),
                Layer::BatchNorm(l) => l.forward(&h, mode),
                Layer::Relu(l) => l.forward(&h),
                Layer::Dropout(l) => l.forward(&h, mode, rng),
            };
        }
        h
    }

    pub fn backward(&mut self, dy: &Array2<T>) -> Array2<T> {
        let mut d = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            d = match layer {
                Layer::Linear(l) => l.backward(&d),
                Layer::BatchNorm(l) => l.backward(&d),
                Layer::Relu(l) => l.backward(&d),
                Layer::Dropout(l) => l.backward(&d),
            };
        }
        d
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => out.extend([&l.w, &l.b]),
                Layer::BatchNorm(l) => out.extend([&l.gamma, &l.beta]),
                Layer::Relu(_) | Layer::Dropout(_) => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => out.extend([&mut l.w, &mut l.b]),
                Layer::BatchNorm(l) => out.extend([&mut l.gamma, &mut l.beta]),
                Layer::Relu(_) | Layer::Dropout(_) => {}
            }
        }
        out
    }

    /// Non-trainable state: batch-norm running statistics.
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Array2<T>)> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(l) = layer {
                out.push((format!("{}.running_mean", l.name), &mut l.running_mean));
                out.push((format!("{}.running_var", l.name), &mut l.running_var));
            }
        }
        out
    }

    pub fn buffers(&self) -> Vec<(String, &Array2<T>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm(l) = layer {
                out.push((format!("{}.running_mean", l.name), &l.running_mean));
                out.push((format!("{}.running_var", l.name), &l.running_var));
            }
        }
        out
    }
}
