//! Tape-based reverse-mode differentiation.
//!
//! Each operation appends a node holding its output and whatever the
//! backward pass needs. [`Graph::backward`] consumes the tape and returns
//! the gradients of every node that requires one.

use rand::Rng;

use super::tensor::{gemm, Float, Tensor};
use super::NeuralError;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-channel statistics of one training-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    /// Number of positions averaged per channel.
    pub count: usize,
}

enum Op<T> {
    Leaf,
    Conv1d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Relu { x: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, lengths: Vec<usize>, batch_stats: bool },
    Dropout { x: Var, mask: Vec<T> },
    MaskedAvgPool { x: Var, lengths: Vec<usize> },
    Linear { x: Var, w: Var, b: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    Sum { x: Var },
    DotConst { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<V>(msg: String) -> Result<V, NeuralError> {
    Err(NeuralError::ShapeMismatch(msg))
}

/// Output length of a strided "same" convolution.
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Unfolds `x` (`[cin, len]`) into `[cin·k, out_len]` patches.
fn im2col<T: Float>(x: &[T], cin: usize, len: usize, k: usize, stride: usize, pad: usize, out_len: usize, col: &mut [T]) {
    for ci in 0..cin {
        let xrow = &x[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let crow = &mut col[(ci * k + kk) * out_len..(ci * k + kk + 1) * out_len];
            for (j, c) in crow.iter_mut().enumerate() {
                let pos = (j * stride + kk) as isize - pad as isize;
                *c = if pos >= 0 && (pos as usize) < len { xrow[pos as usize] } else { T::zero() };
            }
        }
    }
}

fn col2im<T: Float>(col: &[T], cin: usize, len: usize, k: usize, stride: usize, pad: usize, out_len: usize, dx: &mut [T]) {
    for ci in 0..cin {
        let xrow = &mut dx[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let crow = &col[(ci * k + kk) * out_len..(ci * k + kk + 1) * out_len];
            for (j, &c) in crow.iter().enumerate() {
                let pos = (j * stride + kk) as isize - pad as isize;
                if pos >= 0 && (pos as usize) < len {
                    xrow[pos as usize] += c;
                }
            }
        }
    }
}

fn check_lengths(lengths: &[usize], batch: usize, len: usize) -> Result<(), NeuralError> {
    if lengths.len() != batch {
        return shape_err(format!("{} lengths for batch of {batch}", lengths.len()));
    }
    if lengths.iter().any(|&l| l == 0) {
        return Err(NeuralError::ZeroLength);
    }
    if let Some(&l) = lengths.iter().find(|&&l| l > len) {
        return shape_err(format!("length {l} exceeds sequence length {len}"));
    }
    Ok(())
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A trainable leaf; its gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Strided cross-correlation with zero "same" padding of `(k−1)/2` on
    /// both sides. `x: [b, cin, len]`, `w: [cout, cin, k]`, `b: [cout]`;
    /// output `[b, cout, ceil(len/stride)]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var, NeuralError> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || bs != [ws[0]] {
            return shape_err(format!("conv1d x {xs:?}, w {ws:?}, b {bs:?}"));
        }
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        if k % 2 == 0 || stride == 0 || len == 0 {
            return shape_err(format!("conv1d needs odd kernel, positive stride and length (k={k}, stride={stride})"));
        }
        let pad = (k - 1) / 2;
        let out_len = conv_out_len(len, stride);
        let mut out = vec![T::zero(); batch * cout * out_len];
        let mut col = vec![T::zero(); cin * k * out_len];
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        for bi in 0..batch {
            im2col(&xd[bi * cin * len..(bi + 1) * cin * len], cin, len, k, stride, pad, out_len, &mut col);
            let o = &mut out[bi * cout * out_len..(bi + 1) * cout * out_len];
            for (c, row) in o.chunks_exact_mut(out_len).enumerate() {
                row.fill(bd[c]);
            }
            gemm(cout, cin * k, out_len, wd, false, &col, false, T::one(), o);
        }
        let needs = self.needs(&[x, w, b]);
        let value = Tensor::new(vec![batch, cout, out_len], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b, stride, pad }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(&[x]);
        self.push(value, Op::Relu { x }, needs)
    }

    fn bn_shapes(&self, x: Var, gamma: Var, beta: Var, lengths: &[usize]) -> Result<(usize, usize, usize), NeuralError> {
        let xs = self.value(x).shape();
        if xs.len() != 3 {
            return shape_err(format!("batch norm expects [b, c, l], got {xs:?}"));
        }
        let c = xs[1];
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return shape_err(format!("batch norm affine parameters must have shape [{c}]"));
        }
        check_lengths(lengths, xs[0], xs[2])?;
        Ok((xs[0], c, xs[2]))
    }

    /// Training-mode batch normalization. Statistics are taken over the
    /// first `lengths[i]` positions of each sample; later positions are
    /// zeroed in the output.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        lengths: &[usize],
        eps: f64,
    ) -> Result<(Var, BatchStats<T>), NeuralError> {
        let (batch, channels, len) = self.bn_shapes(x, gamma, beta, lengths)?;
        if batch < 2 {
            return Err(NeuralError::BatchTooSmall(batch));
        }
        let count: usize = lengths.iter().sum();
        let n = T::from_usize(count).expect("count fits");
        let xd = self.value(x).data();
        let (g, be) = (self.value(gamma).data(), self.value(beta).data());
        let mut mean = vec![T::zero(); channels];
        let mut var = vec![T::zero(); channels];
        let mut inv_std = vec![T::zero(); channels];
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        let eps = T::from_f64_lossy(eps);
        for c in 0..channels {
            let rows = || (0..batch).map(move |b| (b * channels + c) * len);
            let mut s = T::zero();
            for (b, start) in rows().enumerate() {
                s += xd[start..start + lengths[b]].iter().copied().sum::<T>();
            }
            let mu = s / n;
            let mut ss = T::zero();
            for (b, start) in rows().enumerate() {
                ss += xd[start..start + lengths[b]].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
            }
            let sigma2 = ss / n;
            let is = T::one() / (sigma2 + eps).sqrt();
            for (b, start) in rows().enumerate() {
                for i in start..start + lengths[b] {
                    xhat[i] = (xd[i] - mu) * is;
                    out[i] = g[c] * xhat[i] + be[c];
                }
            }
            mean[c] = mu;
            var[c] = sigma2;
            inv_std[c] = is;
        }
        let value = Tensor::new(vec![batch, channels, len], out)?;
        let needs = self.needs(&[x, gamma, beta]);
        let var_node = self.push(
            value,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, lengths: lengths.to_vec(), batch_stats: true },
            needs,
        );
        Ok((var_node, BatchStats { mean, var, count }))
    }

    /// Inference-mode batch normalization with fixed statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        var: &[T],
        lengths: &[usize],
        eps: f64,
    ) -> Result<Var, NeuralError> {
        let (batch, channels, len) = self.bn_shapes(x, gamma, beta, lengths)?;
        if mean.len() != channels || var.len() != channels {
            return shape_err("running statistics length".into());
        }
        let eps = T::from_f64_lossy(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let xd = self.value(x).data();
        let (g, be) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..batch {
            for c in 0..channels {
                let start = (b * channels + c) * len;
                for i in start..start + lengths[b] {
                    xhat[i] = (xd[i] - mean[c]) * inv_std[c];
                    out[i] = g[c] * xhat[i] + be[c];
                }
            }
        }
        let value = Tensor::new(vec![batch, channels, len], out)?;
        let needs = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, lengths: lengths.to_vec(), batch_stats: false },
            needs,
        ))
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1/(1−p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let v = self.value(x);
        let mask: Vec<T> = (0..v.numel()).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(&[x]);
        self.push(value, Op::Dropout { x, mask }, needs)
    }

    /// Mean over the first `lengths[i]` positions: `[b, c, l] → [b, c]`.
    pub fn masked_avg_pool(&mut self, x: Var, lengths: &[usize]) -> Result<Var, NeuralError> {
        let xs = self.value(x).shape();
        if xs.len() != 3 {
            return shape_err(format!("pooling expects [b, c, l], got {xs:?}"));
        }
        let (batch, channels, len) = (xs[0], xs[1], xs[2]);
        check_lengths(lengths, batch, len)?;
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); batch * channels];
        for b in 0..batch {
            let n = T::from_usize(lengths[b]).expect("length fits");
            for c in 0..channels {
                let start = (b * channels + c) * len;
                out[b * channels + c] = xd[start..start + lengths[b]].iter().copied().sum::<T>() / n;
            }
        }
        let value = Tensor::new(vec![batch, channels], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::MaskedAvgPool { x, lengths: lengths.to_vec() }, needs))
    }

    /// `x: [b, in]`, `w: [out, in]`, `b: [out]` → `x·wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NeuralError> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return shape_err(format!("linear x {xs:?}, w {ws:?}, b {bs:?}"));
        }
        let (batch, fin, fout) = (xs[0], xs[1], ws[0]);
        let bd = self.value(b).data();
        let mut out: Vec<T> = (0..batch).flat_map(|_| bd.iter().copied()).collect();
        gemm(batch, fin, fout, self.value(x).data(), false, self.value(w).data(), true, T::one(), &mut out);
        let value = Tensor::new(vec![batch, fout], out)?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, needs))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NeuralError> {
        let ls = self.value(logits).shape();
        if ls.len() != 2 || ls[0] != labels.len() || ls[0] == 0 {
            return shape_err(format!("logits {ls:?} for {} labels", labels.len()));
        }
        let (batch, classes) = (ls[0], ls[1]);
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(NeuralError::LabelOutOfRange { label: l, classes });
        }
        let ld = self.value(logits).data();
        let mut probs = vec![T::zero(); ld.len()];
        let mut loss = T::zero();
        for b in 0..batch {
            let row = &ld[b * classes..(b + 1) * classes];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            for (j, &v) in row.iter().enumerate() {
                probs[b * classes + j] = (v - log_z).exp();
            }
            loss += log_z - row[labels[b]];
        }
        let n = T::from_usize(batch).expect("batch fits");
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / n),
            Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, needs)
    }

    /// `Σ x ⊙ weights` for a constant `weights` of the same size.
    pub fn dot_const(&mut self, x: Var, weights: &[T]) -> Result<Var, NeuralError> {
        if self.value(x).numel() != weights.len() {
            return shape_err(format!("dot of {} values with {}", self.value(x).numel(), weights.len()));
        }
        let s = self.value(x).data().iter().zip(weights).map(|(&a, &w)| a * w).sum();
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::DotConst { x, weights: weights.to_vec() }, needs))
    }

    /// Back-propagates from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>, NeuralError> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(NeuralError::NotScalarLoss(self.nodes[loss.0].value.shape().to_vec()));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        fn acc<'g, T: Float>(nodes: &[Node<T>], grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
            if !nodes[v.0].needs_grad {
                return None;
            }
            let n = nodes[v.0].value.numel();
            Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
        }

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Conv1d { x, w, b, stride, pad } => {
                    let xv = &nodes[x.0].value;
                    let wv = &nodes[w.0].value;
                    let (batch, cin, len) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                    let (cout, k) = (wv.shape()[0], wv.shape()[2]);
                    let out_len = node.value.shape()[2];
                    if let Some(gb) = acc(&nodes, &mut grads, *b) {
                        for bi in 0..batch {
                            for c in 0..cout {
                                let s = (bi * cout + c) * out_len;
                                gb[c] += g[s..s + out_len].iter().copied().sum::<T>();
                            }
                        }
                    }
                    let need_w = nodes[w.0].needs_grad;
                    let need_x = nodes[x.0].needs_grad;
                    let mut col = vec![T::zero(); cin * k * out_len];
                    let mut dw = if need_w { vec![T::zero(); cout * cin * k] } else { Vec::new() };
                    let mut dx = if need_x { vec![T::zero(); batch * cin * len] } else { Vec::new() };
                    for bi in 0..batch {
                        let gy = &g[bi * cout * out_len..(bi + 1) * cout * out_len];
                        if need_w {
                            im2col(&xv.data()[bi * cin * len..(bi + 1) * cin * len], cin, len, k, *stride, *pad, out_len, &mut col);
                            gemm(cout, out_len, cin * k, gy, false, &col, true, T::one(), &mut dw);
                        }
                        if need_x {
                            gemm(cin * k, cout, out_len, wv.data(), true, gy, false, T::zero(), &mut col);
                            col2im(&col, cin, len, k, *stride, *pad, out_len, &mut dx[bi * cin * len..(bi + 1) * cin * len]);
                        }
                    }
                    if let Some(gw) = acc(&nodes, &mut grads, *w) {
                        gw.iter_mut().zip(&dw).for_each(|(a, &d)| *a += d);
                    }
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        gx.iter_mut().zip(&dx).for_each(|(a, &d)| *a += d);
                    }
                }
                Op::Relu { x } => {
                    let out = node.value.data();
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        for ((a, &gy), &y) in gx.iter_mut().zip(&g).zip(out) {
                            if y > T::zero() {
                                *a += gy;
                            }
                        }
                    }
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, lengths, batch_stats } => {
                    let s = node.value.shape();
                    let (batch, channels, len) = (s[0], s[1], s[2]);
                    let gd = nodes[gamma.0].value.data().to_vec();
                    let positions = |c: usize| {
                        (0..batch).flat_map(move |b| {
                            let start = (b * channels + c) * len;
                            start..start + lengths[b]
                        })
                    };
                    let mut sum_dy = vec![T::zero(); channels];
                    let mut sum_dy_xhat = vec![T::zero(); channels];
                    for c in 0..channels {
                        for i in positions(c) {
                            sum_dy[c] += g[i];
                            sum_dy_xhat[c] += g[i] * xhat[i];
                        }
                    }
                    if let Some(gg) = acc(&nodes, &mut grads, *gamma) {
                        gg.iter_mut().zip(&sum_dy_xhat).for_each(|(a, &d)| *a += d);
                    }
                    if let Some(gbeta) = acc(&nodes, &mut grads, *beta) {
                        gbeta.iter_mut().zip(&sum_dy).for_each(|(a, &d)| *a += d);
                    }
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        let n = T::from_usize(lengths.iter().sum()).expect("count fits");
                        for c in 0..channels {
                            if *batch_stats {
                                // dx = γ·σ⁻¹/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
                                let scale = gd[c] * inv_std[c] / n;
                                for i in positions(c) {
                                    gx[i] += scale * (n * g[i] - sum_dy[c] - xhat[i] * sum_dy_xhat[c]);
                                }
                            } else {
                                let scale = gd[c] * inv_std[c];
                                for i in positions(c) {
                                    gx[i] += scale * g[i];
                                }
                            }
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        for ((a, &gy), &m) in gx.iter_mut().zip(&g).zip(mask) {
                            *a += gy * m;
                        }
                    }
                }
                Op::MaskedAvgPool { x, lengths } => {
                    let xs = nodes[x.0].value.shape();
                    let (channels, len) = (xs[1], xs[2]);
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        for (b, &l) in lengths.iter().enumerate() {
                            let n = T::from_usize(l).expect("length fits");
                            for c in 0..channels {
                                let share = g[b * channels + c] / n;
                                let start = (b * channels + c) * len;
                                gx[start..start + l].iter_mut().for_each(|a| *a += share);
                            }
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                    let (batch, fin, fout) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                    if let Some(gb) = acc(&nodes, &mut grads, *b) {
                        for row in g.chunks_exact(fout) {
                            gb.iter_mut().zip(row).for_each(|(a, &d)| *a += d);
                        }
                    }
                    if let Some(gw) = acc(&nodes, &mut grads, *w) {
                        gemm(fout, batch, fin, &g, true, xv.data(), false, T::one(), gw);
                    }
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        gemm(batch, fout, fin, &g, false, wv.data(), false, T::one(), gx);
                    }
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let classes = nodes[logits.0].value.shape()[1];
                    let scale = g[0] / T::from_usize(labels.len()).expect("batch fits");
                    if let Some(gl) = acc(&nodes, &mut grads, *logits) {
                        for (b, &label) in labels.iter().enumerate() {
                            for j in 0..classes {
                                let onehot = if j == label { T::one() } else { T::zero() };
                                gl[b * classes + j] += scale * (probs[b * classes + j] - onehot);
                            }
                        }
                    }
                }
                Op::Sum { x } => {
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        gx.iter_mut().for_each(|a| *a += g[0]);
                    }
                }
                Op::DotConst { x, weights } => {
                    if let Some(gx) = acc(&nodes, &mut grads, *x) {
                        gx.iter_mut().zip(weights).for_each(|(a, &w)| *a += g[0] * w);
                    }
                }
            }
        }

        let grads = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.needs_grad => Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape")),
                (Op::Leaf, None) if node.needs_grad => Some(Tensor::zeros(node.value.shape())),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

/// Gradients of the trainable leaves after a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
