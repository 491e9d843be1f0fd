use super::numel;
use super::tape::{Op, Tape, Var};
use crate::error::{NmtError, Result};

/// Maps a flat output index to the flat index of a broadcast input.
enum Bcast {
    Same,
    /// Input is a suffix of the output shape and repeats every `n` elements.
    Repeat(usize),
    Map(Vec<usize>),
}

impl Bcast {
    fn plan(input: &[usize], out: &[usize]) -> Self {
        if input == out {
            return Bcast::Same;
        }
        let lead = input.iter().take_while(|&&d| d == 1).count();
        let trimmed = &input[lead..];
        if out.ends_with(trimmed) {
            return Bcast::Repeat(numel(trimmed).max(1));
        }
        let rank = out.len();
        let mut padded = vec![1; rank - input.len()];
        padded.extend_from_slice(input);
        let mut strides = vec![0; rank];
        let mut acc = 1;
        for d in (0..rank).rev() {
            strides[d] = if padded[d] == 1 { 0 } else { acc };
            acc *= padded[d];
        }
        let total = numel(out);
        let mut map = Vec::with_capacity(total);
        let mut counter = vec![0; rank];
        let mut offset = 0;
        for _ in 0..total {
            map.push(offset);
            for d in (0..rank).rev() {
                counter[d] += 1;
                offset += strides[d];
                if counter[d] < out[d] {
                    break;
                }
                offset -= strides[d] * counter[d];
                counter[d] = 0;
            }
        }
        Bcast::Map(map)
    }

    #[inline]
    fn at(&self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Repeat(n) => i % n,
            Bcast::Map(m) => m[i],
        }
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(NmtError::shape(
            op,
            format!("axis {axis} is out of range for shape {shape:?}"),
        ));
    }
    Ok(())
}

/// Dot product with four independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shape(sa, sb).ok_or_else(|| {
            NmtError::shape(name, format!("shapes {sa:?} and {sb:?} do not broadcast"))
        })?;
        let pa = Bcast::plan(sa, &out_shape);
        let pb = Bcast::plan(sb, &out_shape);
        let (va, vb) = (self.value(a), self.value(b));
        let value = (0..numel(&out_shape))
            .map(|i| f(va[pa.at(i)], vb[pb.at(i)]))
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out_shape, value, op, rg))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).iter().map(|v| v * factor).collect();
        let rg = self.any_grad(&[x]);
        self.push(self.shape(x).to_vec(), value, Op::Scale(x, factor), rg)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NmtError::shape(
                "matmul",
                format!("cannot multiply {sa:?} by {sb:?}"),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        // `p` outermost so each row of `b` is streamed from memory once.
        for p in 0..k {
            let brow = &vb[p * n..(p + 1) * n];
            for i in 0..m {
                let x = va[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, w) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::Matmul(a, b), rg))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|v| v.tanh()).collect();
        let rg = self.any_grad(&[x]);
        self.push(self.shape(x).to_vec(), value, Op::Tanh(x), rg)
    }

    /// Logistic function, evaluated on the branch that cannot overflow.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| stable_sigmoid(v)).collect();
        let rg = self.any_grad(&[x]);
        self.push(self.shape(x).to_vec(), value, Op::Sigmoid(x), rg)
    }

    /// Softmax along `axis` after subtracting the per-slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("softmax", &shape, axis)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let v = self.value(x);
        let mut out = vec![0.0; v.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for t in 0..len {
                    max = max.max(v[base + t * inner]);
                }
                let mut sum = 0.0;
                for t in 0..len {
                    let e = (v[base + t * inner] - max).exp();
                    out[base + t * inner] = e;
                    sum += e;
                }
                for t in 0..len {
                    out[base + t * inner] /= sum;
                }
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(shape, out, Op::Softmax { x, axis }, rg))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        self.concat_all(&[a, b], axis)
    }

    /// Concatenates any number of tensors along `axis`.
    pub fn concat_all(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| NmtError::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(NmtError::shape(
                    "concat",
                    format!("{s:?} does not match {base:?} outside axis {axis}"),
                ));
            }
            out_shape[axis] += s[axis];
        }
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis + 1..]);
        let mut out = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for v in inputs {
                let chunk = self.shape(*v)[axis] * inner;
                out.extend_from_slice(&self.value(*v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(
            out_shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("narrow", &shape, axis)?;
        if start + len > shape[axis] {
            return Err(NmtError::shape(
                "narrow",
                format!("range {start}..{} exceeds axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let v = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * full + start) * inner;
            out.extend_from_slice(&v[from..from + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out_shape, out, Op::Narrow { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != numel(self.shape(x)) {
            return Err(NmtError::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(x)),
            ));
        }
        let node = &self.nodes[x.0];
        let value = std::sync::Arc::clone(&node.value);
        let rg = node.requires_grad;
        self.nodes.push(super::tape::Node {
            shape: shape.to_vec(),
            value,
            op: Op::Reshape(x),
            requires_grad: rg,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Gathers rows of a `[V, d]` table; the result is `[ids.len(), d]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(NmtError::shape(
                "embedding_lookup",
                format!("table must be 2-d, got {shape:?}"),
            ));
        }
        let (rows, d) = (shape[0], shape[1]);
        if let Some((position, &id)) = ids.iter().enumerate().find(|(_, &id)| id >= rows) {
            return Err(NmtError::Index { position, id, rows });
        }
        let v = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&v[id * d..(id + 1) * d]);
        }
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Same-length 1-d convolution over time.
    ///
    /// `input` is `[T, d_in]` or `[B, T, d_in]`, `kernel` is `[n, d_in, d_out]`
    /// with odd `n`, `bias` is `[d_out]`. Each sequence is zero padded by
    /// `(n - 1) / 2` on both ends.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (si, sk, sb) = (self.shape(input), self.shape(kernel), self.shape(bias));
        if sk.len() != 3 {
            return Err(NmtError::shape("conv1d", format!("kernel must be 3-d, got {sk:?}")));
        }
        let (n, d_in, d_out) = (sk[0], sk[1], sk[2]);
        if n % 2 == 0 {
            return Err(NmtError::Config(format!(
                "conv1d filter width must be odd, got {n}"
            )));
        }
        let (batch, steps) = match si {
            [t, d] if *d == d_in => (1, *t),
            [b, t, d] if *d == d_in => (*b, *t),
            _ => {
                return Err(NmtError::shape(
                    "conv1d",
                    format!("input {si:?} does not end in {d_in} channels"),
                ))
            }
        };
        if sb != [d_out] {
            return Err(NmtError::shape(
                "conv1d",
                format!("bias {sb:?} does not match {d_out} output channels"),
            ));
        }
        let out_shape = {
            let mut s = si.to_vec();
            *s.last_mut().unwrap() = d_out;
            s
        };
        let (x, w, bvec) = (self.value(input), self.value(kernel), self.value(bias));
        let pad = (n - 1) / 2;
        let mut out = vec![0.0; batch * steps * d_out];
        for b in 0..batch {
            for t in 0..steps {
                let row = &mut out[(b * steps + t) * d_out..(b * steps + t + 1) * d_out];
                row.copy_from_slice(bvec);
                for j in 0..n {
                    let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < steps) else {
                        continue;
                    };
                    let xin = &x[(b * steps + src) * d_in..(b * steps + src + 1) * d_in];
                    for (i, &xv) in xin.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &w[(j * d_in + i) * d_out..(j * d_in + i + 1) * d_out];
                        for (o, wv) in row.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
        let rg = self.any_grad(&[input, kernel, bias]);
        Ok(self.push(
            out_shape,
            out,
            Op::Conv1d {
                input,
                kernel,
                bias,
            },
            rg,
        ))
    }

    /// Normalizes over the last axis: `(x - mean) / sqrt(var + eps) * gain + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(NmtError::Config(format!("layer_norm eps must be positive, got {eps}")));
        }
        let shape = self.shape(x).to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| NmtError::shape("layer_norm", "input is a scalar"))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(NmtError::shape(
                "layer_norm",
                format!(
                    "gain {:?} / bias {:?} must both be [{d}]",
                    self.shape(gain),
                    self.shape(bias)
                ),
            ));
        }
        let (v, g, b) = (self.value(x), self.value(gain), self.value(bias));
        let rows = if d == 0 { 0 } else { v.len() / d };
        let mut normalized = vec![0.0; v.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; v.len()];
        for r in 0..rows {
            let xs = &v[r * d..(r + 1) * d];
            let mean = xs.iter().sum::<f64>() / d as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            inv_std[r] = rstd;
            for k in 0..d {
                let xh = (xs[k] - mean) * rstd;
                normalized[r * d + k] = xh;
                out[r * d + k] = xh * g[k] + b[k];
            }
        }
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(vec![], vec![total], Op::SumAll(x), rg)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("sum_axis", &shape, axis)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let v = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for t in 0..len {
                let src = &v[(o * len + t) * inner..(o * len + t + 1) * inner];
                for (acc, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += s;
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.any_grad(&[x]);
        Ok(self.push(out_shape, out, Op::SumAxis { x, axis }, rg))
    }

    /// Masked mean negative log-likelihood of `targets` under `softmax(logits)`.
    ///
    /// `logits` is `[steps, V]`; `mask` holds one 0/1 weight per step. The
    /// log-partition is computed with log-sum-exp, so no `log(0)` occurs.
    pub fn nll_loss(&mut self, logits: Var, targets: &[usize], mask: &[f64]) -> Result<Var> {
        let shape = self.shape(logits);
        if shape.len() != 2 {
            return Err(NmtError::shape("nll_loss", format!("logits must be 2-d, got {shape:?}")));
        }
        let (steps, vocab) = (shape[0], shape[1]);
        if targets.len() != steps || mask.len() != steps {
            return Err(NmtError::shape(
                "nll_loss",
                format!(
                    "{steps} steps but {} targets and {} mask entries",
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        if let Some((position, &id)) = targets.iter().enumerate().find(|(_, &t)| t >= vocab) {
            return Err(NmtError::Index {
                position,
                id,
                rows: vocab,
            });
        }
        let denom: f64 = mask.iter().sum();
        if denom <= 0.0 {
            return Err(NmtError::Invalid("nll_loss mask selects no steps".into()));
        }
        let v = self.value(logits);
        let mut probs = vec![0.0; v.len()];
        let mut loss = 0.0;
        for t in 0..steps {
            let row = &v[t * vocab..(t + 1) * vocab];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            for (p, x) in probs[t * vocab..(t + 1) * vocab].iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
            if mask[t] != 0.0 {
                loss += mask[t] * (lse - row[targets[t]]);
            }
        }
        let weights = mask.iter().map(|m| m / denom).collect();
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            vec![],
            vec![loss / denom],
            Op::Nll {
                logits,
                targets: targets.to_vec(),
                weights,
                probs,
            },
            rg,
        ))
    }

    /// Pushes node `i`'s upstream gradient `g` into its inputs.
    pub(crate) fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out_shape = &node.shape;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.slot(grads, *a) {
                    let p = Bcast::plan(self.shape(*a), out_shape);
                    g.iter().enumerate().for_each(|(k, gv)| ga[p.at(k)] += gv);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    let p = Bcast::plan(self.shape(*b), out_shape);
                    g.iter().enumerate().for_each(|(k, gv)| gb[p.at(k)] += sign * gv);
                }
            }
            Op::Mul(a, b) => {
                let pa = Bcast::plan(self.shape(*a), out_shape);
                let pb = Bcast::plan(self.shape(*b), out_shape);
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    g.iter()
                        .enumerate()
                        .for_each(|(k, gv)| ga[pa.at(k)] += gv * vb[pb.at(k)]);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    g.iter()
                        .enumerate()
                        .for_each(|(k, gv)| gb[pb.at(k)] += gv * va[pa.at(k)]);
                }
            }
            Op::Scale(x, factor) => {
                if let Some(gx) = self.slot(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, gv)| *a += gv * factor);
                }
            }
            Op::Matmul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for p in 0..k {
                        let brow = &vb[p * n..(p + 1) * n];
                        for r in 0..m {
                            ga[r * k + p] += dot(&g[r * n..(r + 1) * n], brow);
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for p in 0..k {
                        let grow_p = &mut gb[p * n..(p + 1) * n];
                        for r in 0..m {
                            let x = va[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, gv) in grow_p.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                                *o += x * gv;
                            }
                        }
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((a, y), gv) in gx.iter_mut().zip(node.value.iter()).zip(g) {
                        *a += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((a, y), gv) in gx.iter_mut().zip(node.value.iter()).zip(g) {
                        *a += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Softmax { x, axis } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let (outer, len, inner) = split_axis(out_shape, *axis);
                    let y = &node.value;
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let dot: f64 = (0..len)
                                .map(|t| g[base + t * inner] * y[base + t * inner])
                                .sum();
                            for t in 0..len {
                                let k = base + t * inner;
                                gx[k] += y[k] * (g[k] - dot);
                            }
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let outer = numel(&out_shape[..*axis]);
                let inner = numel(&out_shape[axis + 1..]);
                let total = out_shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let chunk = self.shape(*v)[*axis] * inner;
                    if let Some(gv) = self.slot(grads, *v) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            for (a, s) in gv[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *a += s;
                            }
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Narrow { x, axis, start } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let (outer, full, inner) = split_axis(self.shape(*x), *axis);
                    let len = out_shape[*axis];
                    for o in 0..outer {
                        let to = (o * full + start) * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (a, s) in gx[to..to + len * inner].iter_mut().zip(src) {
                            *a += s;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, s)| *a += s);
                }
            }
            Op::Gather { table, ids } => {
                if let Some(gt) = self.slot(grads, *table) {
                    let d = out_shape[1];
                    for (r, &id) in ids.iter().enumerate() {
                        for (a, s) in gt[id * d..(id + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *a += s;
                        }
                    }
                }
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
            } => self.conv1d_backward(out_shape, g, *input, *kernel, *bias, grads),
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let d = *out_shape.last().unwrap();
                let rows = if d == 0 { 0 } else { g.len() / d };
                let gamma = self.value(*gain);
                if let Some(gg) = self.slot(grads, *gain) {
                    for r in 0..rows {
                        for k in 0..d {
                            gg[k] += g[r * d + k] * normalized[r * d + k];
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    for r in 0..rows {
                        for k in 0..d {
                            gb[k] += g[r * d + k];
                        }
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    let df = d as f64;
                    for r in 0..rows {
                        let xh = &normalized[r * d..(r + 1) * d];
                        let gy = &g[r * d..(r + 1) * d];
                        let mut sum_g = 0.0;
                        let mut sum_gx = 0.0;
                        for k in 0..d {
                            let gn = gy[k] * gamma[k];
                            sum_g += gn;
                            sum_gx += gn * xh[k];
                        }
                        for k in 0..d {
                            let gn = gy[k] * gamma[k];
                            gx[r * d + k] += inv_std[r] * (gn - sum_g / df - xh[k] * sum_gx / df);
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            Op::SumAxis { x, axis } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let (outer, len, inner) = split_axis(self.shape(*x), *axis);
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for t in 0..len {
                            let dst = &mut gx[(o * len + t) * inner..(o * len + t + 1) * inner];
                            dst.iter_mut().zip(src).for_each(|(a, s)| *a += s);
                        }
                    }
                }
            }
            Op::Nll {
                logits,
                targets,
                weights,
                probs,
            } => {
                if let Some(gl) = self.slot(grads, *logits) {
                    let vocab = self.shape(*logits)[1];
                    for (t, (&w, &target)) in weights.iter().zip(targets).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let scale = g[0] * w;
                        let row = &mut gl[t * vocab..(t + 1) * vocab];
                        for (a, p) in row.iter_mut().zip(&probs[t * vocab..(t + 1) * vocab]) {
                            *a += scale * p;
                        }
                        row[target] -= scale;
                    }
                }
            }
        }
    }

    fn conv1d_backward(
        &self,
        out_shape: &[usize],
        g: &[f64],
        input: Var,
        kernel: Var,
        bias: Var,
        grads: &mut [Option<Vec<f64>>],
    ) {
        let sk = self.shape(kernel);
        let (n, d_in, d_out) = (sk[0], sk[1], sk[2]);
        let steps = out_shape[out_shape.len() - 2];
        let batch = if out_shape.len() == 3 { out_shape[0] } else { 1 };
        let pad = (n - 1) / 2;
        let (x, w) = (self.value(input), self.value(kernel));

        if let Some(gb) = self.slot(grads, bias) {
            for r in 0..batch * steps {
                for (a, s) in gb.iter_mut().zip(&g[r * d_out..(r + 1) * d_out]) {
                    *a += s;
                }
            }
        }
        if let Some(gk) = self.slot(grads, kernel) {
            for b in 0..batch {
                for t in 0..steps {
                    let grow = &g[(b * steps + t) * d_out..(b * steps + t + 1) * d_out];
                    for j in 0..n {
                        let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < steps) else {
                            continue;
                        };
                        let xin = &x[(b * steps + src) * d_in..(b * steps + src + 1) * d_in];
                        for (i, &xv) in xin.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let dst = &mut gk[(j * d_in + i) * d_out..(j * d_in + i + 1) * d_out];
                            dst.iter_mut().zip(grow).for_each(|(a, gv)| *a += xv * gv);
                        }
                    }
                }
            }
        }
        if let Some(gx) = self.slot(grads, input) {
            for b in 0..batch {
                for t in 0..steps {
                    let grow = &g[(b * steps + t) * d_out..(b * steps + t + 1) * d_out];
                    for j in 0..n {
                        let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < steps) else {
                            continue;
                        };
                        for i in 0..d_in {
                            let wrow = &w[(j * d_in + i) * d_out..(j * d_in + i + 1) * d_out];
                            gx[(b * steps + src) * d_in + i] +=
                                dot(wrow, grow);
                        }
                    }
                }
            }
        }
    }
}
