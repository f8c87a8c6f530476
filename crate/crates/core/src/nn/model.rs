use rand::Rng;

use super::layers::{
    conv_backward, conv_forward, dense_bwd, dense_fwd, pool_forward, tconv_backward, tconv_forward, ConvDims, Exec,
};
use super::{NetworkProfile, Tensor, TensorSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Conv { dims: ConvDims, w: usize, b: usize },
    Pool { h: usize, w: usize, c: usize, p: usize },
    Dense { nin: usize, nout: usize, w: usize, b: usize },
    TConv { dims: ConvDims, w: usize, b: usize },
    Relu,
}

#[derive(Clone, Debug)]
struct Step {
    op: Op,
    name: String,
    out_len: usize,
}

/// Encoder-decoder network with its parameters in one flat vector, stored
/// tensor by tensor in [`NetworkProfile::tensor_specs`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    profile: NetworkProfile,
    params: Vec<f32>,
}

/// Activations kept for the backward pass.
pub struct Trace {
    acts: Vec<Vec<f32>>,
    argmax: Vec<Vec<u32>>,
}

impl Trace {
    pub fn output(&self) -> &[f32] {
        self.acts.last().expect("non-empty trace")
    }
}

fn plan(profile: &NetworkProfile) -> Vec<Step> {
    let specs = profile.tensor_specs();
    let mut offsets = Vec::with_capacity(specs.len());
    let mut at = 0;
    for s in &specs {
        offsets.push(at);
        at += s.len();
    }
    let mut next = 0;
    let mut take = || {
        let o = (offsets[next], offsets[next + 1]);
        next += 2;
        o
    };
    let mut steps = Vec::new();
    let mut push = |op: Op, name: String, out_len: usize| steps.push(Step { op, name, out_len });

    let (mut side, mut c) = (profile.input_size, 1);
    for (i, s) in profile.encoder.iter().enumerate() {
        let (w, b) = take();
        let dims = ConvDims {
            h: side,
            w: side,
            cin: c,
            cout: s.channels,
            k: s.kernel,
        };
        c = s.channels;
        push(Op::Conv { dims, w, b }, format!("enc{i}.conv"), side * side * c);
        push(Op::Relu, format!("enc{i}.relu"), side * side * c);
        push(Op::Pool { h: side, w: side, c, p: s.pool }, format!("enc{i}.pool"), (side / s.pool).pow(2) * c);
        side /= s.pool;
    }
    let f = profile.flatten_width();
    let widths: Vec<usize> = match profile.adaptive {
        0 => vec![f, f],
        n => vec![f, n, f],
    };
    for (i, win) in widths.windows(2).enumerate() {
        let (w, b) = take();
        push(
            Op::Dense {
                nin: win[0],
                nout: win[1],
                w,
                b,
            },
            format!("dense{i}"),
            win[1],
        );
        if i + 2 < widths.len() {
            push(Op::Relu, format!("dense{i}.relu"), win[1]);
        }
    }
    for (i, s) in profile.decoder.iter().enumerate() {
        let (w, b) = take();
        let dims = ConvDims {
            h: side,
            w: side,
            cin: c,
            cout: s.channels,
            k: s.factor,
        };
        side *= s.factor;
        c = s.channels;
        push(Op::TConv { dims, w, b }, format!("dec{i}.tconv"), side * side * c);
        push(Op::Relu, format!("dec{i}.relu"), side * side * c);
    }
    steps
}

fn lens(dims: &ConvDims) -> (usize, usize) {
    (dims.k * dims.k * dims.cin * dims.cout, dims.cout)
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(profile: NetworkProfile) -> Result<Self> {
        profile.validate()?;
        let n = profile.param_count();
        Ok(Self {
            profile,
            params: vec![0.0; n],
        })
    }

    /// He-uniform weights `U(−sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero
    /// biases, drawn tensor by tensor in storage order.
    pub fn he_uniform<R: Rng>(profile: NetworkProfile, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(profile)?;
        let mut at = 0;
        for spec in m.profile.tensor_specs() {
            let len = spec.len();
            if spec.shape.len() > 1 {
                let fan_in = match spec.shape[..] {
                    [k1, k2, cin, _] if spec.name.starts_with("enc") => k1 * k2 * cin,
                    [_, _, cin, _] => cin,
                    [_, nin] => nin,
                    _ => unreachable!("weight tensors are rank 2 or 4"),
                };
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                for v in &mut m.params[at..at + len] {
                    *v = rng.gen_range(-bound..=bound);
                }
            }
            at += len;
        }
        Ok(m)
    }

    pub fn from_params(profile: NetworkProfile, params: Vec<f32>) -> Result<Self> {
        profile.validate()?;
        if params.len() != profile.param_count() {
            return Err(Error::shape(format!("{} parameters", profile.param_count()), params.len()));
        }
        Ok(Self { profile, params })
    }

    pub fn profile(&self) -> &NetworkProfile {
        &self.profile
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f32> {
        self.params
    }

    /// Parameter tensors paired with their values.
    pub fn tensors(&self) -> Vec<(TensorSpec, &[f32])> {
        let mut at = 0;
        self.profile
            .tensor_specs()
            .into_iter()
            .map(|s| {
                let len = s.len();
                at += len;
                (s, &self.params[at - len..at])
            })
            .collect()
    }

    /// Runs the network on an `R × R` input and keeps every activation.
    pub fn forward_trace(&self, input: &[f32], exec: Exec) -> Result<Trace> {
        let r = self.profile.input_size;
        if input.len() != r * r {
            return Err(Error::shape(format!("{r}x{r}x1 input"), input.len()));
        }
        let p = &self.params;
        let mut acts = vec![input.to_vec()];
        let mut argmax = Vec::new();
        for step in plan(&self.profile) {
            let x = acts.last().expect("input pushed");
            let mut y = vec![0.0f32; step.out_len];
            match step.op {
                Op::Conv { dims, w, b } => {
                    let (wl, bl) = lens(&dims);
                    conv_forward(dims, x, &p[w..w + wl], &p[b..b + bl], &mut y, exec);
                }
                Op::TConv { dims, w, b } => {
                    let (wl, bl) = lens(&dims);
                    tconv_forward(dims, x, &p[w..w + wl], &p[b..b + bl], &mut y, exec);
                }
                Op::Dense { nin, nout, w, b } => {
                    dense_fwd(nin, &p[w..w + nin * nout], &p[b..b + nout], x, &mut y, exec);
                }
                Op::Pool { h, w, c, p: k } => {
                    let mut arg = vec![0u32; step.out_len];
                    pool_forward(h, w, c, k, x, &mut y, &mut arg);
                    argmax.push(arg);
                }
                Op::Relu => {
                    for (o, &v) in y.iter_mut().zip(x) {
                        *o = v.max(0.0);
                    }
                }
            }
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {} output element {i}", step.name)));
            }
            acts.push(y);
        }
        Ok(Trace { acts, argmax })
    }

    /// `R × R × 1` prediction.
    pub fn forward(&self, input: &Tensor, exec: Exec) -> Result<Tensor> {
        let r = self.profile.input_size;
        if input.shape() != [r, r, 1] {
            return Err(Error::shape(format!("[{r}, {r}, 1]"), format!("{:?}", input.shape())));
        }
        let mut trace = self.forward_trace(input.data(), exec)?;
        Tensor::new(vec![r, r, 1], trace.acts.pop().expect("output"))
    }

    /// Accumulates the parameter gradient of a loss whose derivative with
    /// respect to the output is `d_out`.
    pub fn backward(&self, trace: &Trace, d_out: &[f32], grads: &mut [f32], exec: Exec) -> Result<()> {
        if grads.len() != self.params.len() || d_out.len() != trace.output().len() {
            return Err(Error::shape(
                format!("{} gradients, {} output gradients", self.params.len(), trace.output().len()),
                format!("{} and {}", grads.len(), d_out.len()),
            ));
        }
        let p = &self.params;
        let steps = plan(&self.profile);
        let mut g = d_out.to_vec();
        let mut pool_idx = trace.argmax.len();
        for (i, step) in steps.iter().enumerate().rev() {
            let x = &trace.acts[i];
            let first = i == 0;
            let mut gx = if first { Vec::new() } else { vec![0.0f32; x.len()] };
            let d_in = (!first).then_some(&mut gx[..]);
            match step.op {
                Op::Conv { dims, w, b } => {
                    let (wl, bl) = lens(&dims);
                    let (gw, gb) = split(grads, w, wl, b, bl);
                    conv_backward(dims, x, &p[w..w + wl], &g, d_in, gw, gb, exec);
                }
                Op::TConv { dims, w, b } => {
                    let (wl, bl) = lens(&dims);
                    let (gw, gb) = split(grads, w, wl, b, bl);
                    tconv_backward(dims, x, &p[w..w + wl], &g, d_in, gw, gb, exec);
                }
                Op::Dense { nin, nout, w, b } => {
                    let (gw, gb) = split(grads, w, nin * nout, b, nout);
                    dense_bwd(nin, &p[w..w + nin * nout], x, &g, d_in, gw, gb, exec);
                }
                Op::Pool { .. } => {
                    pool_idx -= 1;
                    if !first {
                        for (&j, &gv) in trace.argmax[pool_idx].iter().zip(&g) {
                            gx[j as usize] += gv;
                        }
                    }
                }
                Op::Relu => {
                    if !first {
                        let y = &trace.acts[i + 1];
                        for ((o, &gv), &yv) in gx.iter_mut().zip(&g).zip(y) {
                            *o = if yv > 0.0 { gv } else { 0.0 };
                        }
                    }
                }
            }
            g = gx;
        }
        Ok(())
    }
}

/// Disjoint mutable views of a weight block followed by its bias block.
fn split(grads: &mut [f32], w: usize, wl: usize, b: usize, bl: usize) -> (&mut [f32], &mut [f32]) {
    debug_assert_eq!(w + wl, b);
    let (head, tail) = grads[w..b + bl].split_at_mut(wl);
    (head, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_outputs_zero() {
        let m = Model::zeros(NetworkProfile::small(8)).unwrap();
        let out = m.forward(&Tensor::zeros(vec![40, 40, 1]), Exec::Serial).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }
}
