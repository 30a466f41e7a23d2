use ndarray::{s, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::layers::{Linear, Param};
use crate::loss::softmax_rows;
use crate::real::Real;

#[derive(Debug, Clone)]
struct AttnCache<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Attention weights per (sample, head), each `tokens x tokens`.
    probs: Vec<Array2<T>>,
}

/// Multi-head self-attention over a short token sequence followed by mean
/// pooling. Inputs hold `tokens` consecutive rows per sample.
#[derive(Debug, Clone)]
pub struct SelfAttention<T> {
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub heads: usize,
    pub tokens: usize,
    cache: Option<AttnCache<T>>,
}

impl<T: Real> SelfAttention<T> {
    pub fn new(name: &str, dim: usize, heads: usize, tokens: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "heads must divide the model dimension");
        Self {
            wq: Linear::he(&format!("{name}.q"), dim, dim, rng),
            wk: Linear::he(&format!("{name}.k"), dim, dim, rng),
            wv: Linear::he(&format!("{name}.v"), dim, dim, rng),
            wo: Linear::he(&format!("{name}.o"), dim, dim, rng),
            heads,
            tokens,
            cache: None,
        }
    }

    fn attend(&self, q: &Array2<T>, k: &Array2<T>, v: &Array2<T>) -> (Array2<T>, Vec<Array2<T>>) {
        let (rows, dim) = q.dim();
        let dh = dim / self.heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut out = Array2::zeros((rows, dim));
        let mut probs = Vec::with_capacity(rows / self.tokens * self.heads);
        for b in 0..rows / self.tokens {
            let r = b * self.tokens..(b + 1) * self.tokens;
            for h in 0..self.heads {
                let c = h * dh..(h + 1) * dh;
                let qs = q.slice(s![r.clone(), c.clone()]);
                let ks = k.slice(s![r.clone(), c.clone()]);
                let vs = v.slice(s![r.clone(), c.clone()]);
                let a = softmax_rows(&(qs.dot(&ks.t()) * scale));
                out.slice_mut(s![r.clone(), c]).assign(&a.dot(&vs));
                probs.push(a);
            }
        }
        (out, probs)
    }

    fn pool(&self, y: &Array2<T>) -> Array2<T> {
        let n = y.nrows() / self.tokens;
        let mut pooled = Array2::zeros((n, y.ncols()));
        for b in 0..n {
            let block = y.slice(s![b * self.tokens..(b + 1) * self.tokens, ..]);
            pooled.row_mut(b).assign(&block.mean_axis(Axis(0)).expect("tokens >= 1"));
        }
        pooled
    }

    pub fn infer(&self, x: &Array2<T>) -> Array2<T> {
        let (o, _) = self.attend(&self.wq.infer(x), &self.wk.infer(x), &self.wv.infer(x));
        self.pool(&self.wo.infer(&o))
    }

    pub fn forward(&mut self, x: &Array2<T>) -> Array2<T> {
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let (o, probs) = self.attend(&q, &k, &v);
        let y = self.wo.forward(&o);
        self.cache = Some(AttnCache { q, k, v, probs });
        self.pool(&y)
    }

    pub fn backward(&mut self, dpooled: &Array2<T>) -> Array2<T> {
        let n = dpooled.nrows();
        let dim = dpooled.ncols();
        let inv = T::of(1.0 / self.tokens as f64);
        let mut dy = Array2::zeros((n * self.tokens, dim));
        for b in 0..n {
            for t in 0..self.tokens {
                dy.row_mut(b * self.tokens + t).assign(&(&dpooled.row(b) * inv));
            }
        }
        let d_o = self.wo.backward(&dy);
        let c = self.cache.as_ref().expect("forward before backward");
        let dh = dim / self.heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for b in 0..n {
            let r = b * self.tokens..(b + 1) * self.tokens;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let a = &c.probs[b * self.heads + h];
                let dos = d_o.slice(s![r.clone(), cols.clone()]);
                let qs = c.q.slice(s![r.clone(), cols.clone()]);
                let ks = c.k.slice(s![r.clone(), cols.clone()]);
                let vs = c.v.slice(s![r.clone(), cols.clone()]);
                let da = dos.dot(&vs.t());
                dv.slice_mut(s![r.clone(), cols.clone()]).assign(&a.t().dot(&dos));
                let inner = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = (a * &(da - &inner)) * scale;
                dq.slice_mut(s![r.clone(), cols.clone()]).assign(&ds.dot(&ks));
                dk.slice_mut(s![r.clone(), cols]).assign(&ds.t().dot(&qs));
            }
        }
        self.wq.backward(&dq) + &self.wk.backward(&dk) + &self.wv.backward(&dv)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        [&self.wq, &self.wk, &self.wv, &self.wo].into_iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo]
            .into_iter()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}
