//! Layer kernels on flat `(H, W, C)` buffers and their `Tensor` wrappers.
//!
//! Convolution kernels are stored `(k, k, C_in, C_out)`, dense weights
//! `(out, in)`. Backward passes accumulate into their gradient buffers.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

/// Serial execution is bit-reproducible; parallel execution splits work
/// across the current rayon pool and may differ in the last ulp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Serial,
    Parallel,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

pub(crate) fn conv_forward(d: ConvDims, input: &[f32], kernel: &[f32], bias: &[f32], out: &mut [f32], exec: Exec) {
    let row = |y: usize, orow: &mut [f32]| {
        let pad = d.k / 2;
        for x in 0..d.w {
            let o = &mut orow[x * d.cout..(x + 1) * d.cout];
            o.copy_from_slice(bias);
            for ky in 0..d.k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < d.h) else {
                    continue;
                };
                for kx in 0..d.k {
                    let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < d.w) else {
                        continue;
                    };
                    let inp = &input[(iy * d.w + ix) * d.cin..][..d.cin];
                    let kb = &kernel[(ky * d.k + kx) * d.cin * d.cout..];
                    for (ci, &a) in inp.iter().enumerate() {
                        let wrow = &kb[ci * d.cout..][..d.cout];
                        for (ov, &wv) in o.iter_mut().zip(wrow) {
                            *ov += a * wv;
                        }
                    }
                }
            }
        }
    };
    let stride = d.w * d.cout;
    match exec {
        Exec::Serial => out.chunks_mut(stride).enumerate().for_each(|(y, r)| row(y, r)),
        Exec::Parallel => out.par_chunks_mut(stride).enumerate().for_each(|(y, r)| row(y, r)),
    }
}

pub(crate) fn conv_backward(
    d: ConvDims,
    input: &[f32],
    kernel: &[f32],
    d_out: &[f32],
    d_in: Option<&mut [f32]>,
    d_kernel: &mut [f32],
    d_bias: &mut [f32],
    exec: Exec,
) {
    let pad = d.k / 2;
    for g in d_out.chunks(d.cout) {
        for (db, &gv) in d_bias.iter_mut().zip(g) {
            *db += gv;
        }
    }
    let tap = |ky: usize, kx: usize, dk: &mut [f32]| {
        for y in 0..d.h {
            let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < d.h) else {
                continue;
            };
            for x in 0..d.w {
                let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < d.w) else {
                    continue;
                };
                let g = &d_out[(y * d.w + x) * d.cout..][..d.cout];
                let inp = &input[(iy * d.w + ix) * d.cin..][..d.cin];
                for (ci, &a) in inp.iter().enumerate() {
                    for (dv, &gv) in dk[ci * d.cout..][..d.cout].iter_mut().zip(g) {
                        *dv += a * gv;
                    }
                }
            }
        }
    };
    let in_row = |iy: usize, drow: &mut [f32]| {
        for ix in 0..d.w {
            let di = &mut drow[ix * d.cin..(ix + 1) * d.cin];
            for ky in 0..d.k {
                let Some(y) = (iy + pad).checked_sub(ky).filter(|&v| v < d.h) else {
                    continue;
                };
                for kx in 0..d.k {
                    let Some(x) = (ix + pad).checked_sub(kx).filter(|&v| v < d.w) else {
                        continue;
                    };
                    let g = &d_out[(y * d.w + x) * d.cout..][..d.cout];
                    let kb = &kernel[(ky * d.k + kx) * d.cin * d.cout..];
                    for (ci, dv) in di.iter_mut().enumerate() {
                        let wrow = &kb[ci * d.cout..][..d.cout];
                        *dv += wrow.iter().zip(g).map(|(w, g)| w * g).sum::<f32>();
                    }
                }
            }
        }
    };
    let tap_len = d.cin * d.cout;
    match exec {
        Exec::Serial => {
            d_kernel
                .chunks_mut(tap_len)
                .enumerate()
                .for_each(|(t, dk)| tap(t / d.k, t % d.k, dk));
            if let Some(d_in) = d_in {
                d_in.chunks_mut(d.w * d.cin).enumerate().for_each(|(y, r)| in_row(y, r));
            }
        }
        Exec::Parallel => {
            d_kernel
                .par_chunks_mut(tap_len)
                .enumerate()
                .for_each(|(t, dk)| tap(t / d.k, t % d.k, dk));
            if let Some(d_in) = d_in {
                d_in.par_chunks_mut(d.w * d.cin).enumerate().for_each(|(y, r)| in_row(y, r));
            }
        }
    }
}

/// Transpose convolution with stride equal to the kernel size `f`; `h, w`
/// are the input dimensions.
pub(crate) fn tconv_forward(d: ConvDims, input: &[f32], kernel: &[f32], bias: &[f32], out: &mut [f32], exec: Exec) {
    let f = d.k;
    let ow = d.w * f;
    let row = |oy: usize, orow: &mut [f32]| {
        let (y, ky) = (oy / f, oy % f);
        for ox in 0..ow {
            let (x, kx) = (ox / f, ox % f);
            let o = &mut orow[ox * d.cout..(ox + 1) * d.cout];
            o.copy_from_slice(bias);
            let inp = &input[(y * d.w + x) * d.cin..][..d.cin];
            let kb = &kernel[(ky * f + kx) * d.cin * d.cout..];
            for (ci, &a) in inp.iter().enumerate() {
                for (ov, &wv) in o.iter_mut().zip(&kb[ci * d.cout..][..d.cout]) {
                    *ov += a * wv;
                }
            }
        }
    };
    let stride = ow * d.cout;
    match exec {
        Exec::Serial => out.chunks_mut(stride).enumerate().for_each(|(y, r)| row(y, r)),
        Exec::Parallel => out.par_chunks_mut(stride).enumerate().for_each(|(y, r)| row(y, r)),
    }
}

pub(crate) fn tconv_backward(
    d: ConvDims,
    input: &[f32],
    kernel: &[f32],
    d_out: &[f32],
    d_in: Option<&mut [f32]>,
    d_kernel: &mut [f32],
    d_bias: &mut [f32],
    exec: Exec,
) {
    let f = d.k;
    let ow = d.w * f;
    for g in d_out.chunks(d.cout) {
        for (db, &gv) in d_bias.iter_mut().zip(g) {
            *db += gv;
        }
    }
    let tap = |ky: usize, kx: usize, dk: &mut [f32]| {
        for y in 0..d.h {
            for x in 0..d.w {
                let g = &d_out[((y * f + ky) * ow + x * f + kx) * d.cout..][..d.cout];
                let inp = &input[(y * d.w + x) * d.cin..][..d.cin];
                for (ci, &a) in inp.iter().enumerate() {
                    for (dv, &gv) in dk[ci * d.cout..][..d.cout].iter_mut().zip(g) {
                        *dv += a * gv;
                    }
                }
            }
        }
    };
    let in_row = |y: usize, drow: &mut [f32]| {
        for x in 0..d.w {
            let di = &mut drow[x * d.cin..(x + 1) * d.cin];
            for ky in 0..f {
                for kx in 0..f {
                    let g = &d_out[((y * f + ky) * ow + x * f + kx) * d.cout..][..d.cout];
                    let kb = &kernel[(ky * f + kx) * d.cin * d.cout..];
                    for (ci, dv) in di.iter_mut().enumerate() {
                        *dv += kb[ci * d.cout..][..d.cout].iter().zip(g).map(|(w, g)| w * g).sum::<f32>();
                    }
                }
            }
        }
    };
    let tap_len = d.cin * d.cout;
    match exec {
        Exec::Serial => {
            d_kernel
                .chunks_mut(tap_len)
                .enumerate()
                .for_each(|(t, dk)| tap(t / f, t % f, dk));
            if let Some(d_in) = d_in {
                d_in.chunks_mut(d.w * d.cin).enumerate().for_each(|(y, r)| in_row(y, r));
            }
        }
        Exec::Parallel => {
            d_kernel
                .par_chunks_mut(tap_len)
                .enumerate()
                .for_each(|(t, dk)| tap(t / f, t % f, dk));
            if let Some(d_in) = d_in {
                d_in.par_chunks_mut(d.w * d.cin).enumerate().for_each(|(y, r)| in_row(y, r));
            }
        }
    }
}

/// Max over non-overlapping `p × p` windows; `argmax` receives the flat
/// input index of the first maximal element of each window.
pub(crate) fn pool_forward(h: usize, w: usize, c: usize, p: usize, input: &[f32], out: &mut [f32], argmax: &mut [u32]) {
    let (oh, ow) = (h / p, w / p);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f32::NEG_INFINITY;
                let mut at = usize::MAX;
                for dy in 0..p {
                    for dx in 0..p {
                        let i = ((oy * p + dy) * w + ox * p + dx) * c + ch;
                        if input[i] > best || at == usize::MAX {
                            best = input[i];
                            at = i;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = best;
                argmax[o] = at as u32;
            }
        }
    }
}

pub(crate) fn dense_fwd(nin: usize, weight: &[f32], bias: &[f32], input: &[f32], out: &mut [f32], exec: Exec) {
    let row = |(o, b): (&mut f32, (&[f32], &f32))| {
        *o = b.1 + b.0.iter().zip(input).map(|(w, x)| w * x).sum::<f32>();
    };
    match exec {
        Exec::Serial => out.iter_mut().zip(weight.chunks(nin).zip(bias)).for_each(row),
        Exec::Parallel => out.par_iter_mut().zip(weight.par_chunks(nin).zip(bias)).for_each(row),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_bwd(
    nin: usize,
    weight: &[f32],
    input: &[f32],
    d_out: &[f32],
    d_in: Option<&mut [f32]>,
    d_weight: &mut [f32],
    d_bias: &mut [f32],
    exec: Exec,
) {
    for (db, g) in d_bias.iter_mut().zip(d_out) {
        *db += g;
    }
    let grad_row = |(dw, &g): (&mut [f32], &f32)| {
        if g != 0.0 {
            for (d, x) in dw.iter_mut().zip(input) {
                *d += g * x;
            }
        }
    };
    match exec {
        Exec::Serial => d_weight.chunks_mut(nin).zip(d_out).for_each(grad_row),
        Exec::Parallel => d_weight.par_chunks_mut(nin).zip(d_out).for_each(grad_row),
    }
    if let Some(d_in) = d_in {
        // row-wise accumulation keeps weight access contiguous
        for (wrow, &g) in weight.chunks(nin).zip(d_out) {
            if g != 0.0 {
                for (d, w) in d_in.iter_mut().zip(wrow) {
                    *d += g * w;
                }
            }
        }
    }
}

fn check_shape(what: &str, t: &Tensor, expected: &[usize]) -> Result<()> {
    if t.shape() != expected {
        return Err(Error::shape(format!("{what} {expected:?}"), format!("{:?}", t.shape())));
    }
    Ok(())
}

fn conv_dims(input: &Tensor, kernels: &Tensor) -> Result<ConvDims> {
    let (h, w, cin) = input.hwc()?;
    match kernels.shape()[..] {
        [k, k2, ci, cout] if k == k2 && ci == cin => Ok(ConvDims { h, w, cin, cout, k }),
        _ => Err(Error::shape(
            format!("(k, k, {cin}, C_out) kernels"),
            format!("{:?}", kernels.shape()),
        )),
    }
}

/// `same` cross-correlation with stride 1 and zero padding `k / 2`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv_dims(input, kernels)?;
    if d.k % 2 == 0 {
        return Err(Error::InvalidInput(format!("same convolution needs an odd kernel, got {}", d.k)));
    }
    check_shape("bias", bias, &[d.cout])?;
    let mut out = Tensor::zeros(vec![d.h, d.w, d.cout]);
    conv_forward(d, input.data(), kernels.data(), bias.data(), out.data_mut(), Exec::Serial);
    Ok(out)
}

/// `(d_input, d_kernels, d_bias)`.
pub fn conv2d_backward(input: &Tensor, kernels: &Tensor, d_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let d = conv_dims(input, kernels)?;
    check_shape("output gradient", d_out, &[d.h, d.w, d.cout])?;
    let mut d_in = Tensor::zeros(input.shape().to_vec());
    let mut d_k = Tensor::zeros(kernels.shape().to_vec());
    let mut d_b = Tensor::zeros(vec![d.cout]);
    conv_backward(
        d,
        input.data(),
        kernels.data(),
        d_out.data(),
        Some(d_in.data_mut()),
        d_k.data_mut(),
        d_b.data_mut(),
        Exec::Serial,
    );
    Ok((d_in, d_k, d_b))
}

/// Transpose convolution whose stride equals the kernel size, so each input
/// pixel expands into its own `f × f` output block.
pub fn tconv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv_dims(input, kernels)?;
    check_shape("bias", bias, &[d.cout])?;
    let mut out = Tensor::zeros(vec![d.h * d.k, d.w * d.k, d.cout]);
    tconv_forward(d, input.data(), kernels.data(), bias.data(), out.data_mut(), Exec::Serial);
    Ok(out)
}

pub fn tconv2d_backward(input: &Tensor, kernels: &Tensor, d_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let d = conv_dims(input, kernels)?;
    check_shape("output gradient", d_out, &[d.h * d.k, d.w * d.k, d.cout])?;
    let mut d_in = Tensor::zeros(input.shape().to_vec());
    let mut d_k = Tensor::zeros(kernels.shape().to_vec());
    let mut d_b = Tensor::zeros(vec![d.cout]);
    tconv_backward(
        d,
        input.data(),
        kernels.data(),
        d_out.data(),
        Some(d_in.data_mut()),
        d_k.data_mut(),
        d_b.data_mut(),
        Exec::Serial,
    );
    Ok((d_in, d_k, d_b))
}

/// Non-overlapping `p × p` max pool; ties go to the first element in
/// row-major window order.
pub fn maxpool(input: &Tensor, p: usize) -> Result<Tensor> {
    Ok(maxpool_indexed(input, p)?.0)
}

fn maxpool_indexed(input: &Tensor, p: usize) -> Result<(Tensor, Vec<u32>)> {
    let (h, w, c) = input.hwc()?;
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::InvalidInput(format!("pool {p} does not divide {h}x{w}")));
    }
    let mut out = Tensor::zeros(vec![h / p, w / p, c]);
    let mut arg = vec![0u32; out.len()];
    pool_forward(h, w, c, p, input.data(), out.data_mut(), &mut arg);
    Ok((out, arg))
}

/// Routes each window's gradient to its maximal element.
pub fn maxpool_backward(input: &Tensor, p: usize, d_out: &Tensor) -> Result<Tensor> {
    let (out, arg) = maxpool_indexed(input, p)?;
    check_shape("output gradient", d_out, out.shape())?;
    let mut d_in = Tensor::zeros(input.shape().to_vec());
    for (&i, &g) in arg.iter().zip(d_out.data()) {
        d_in.data_mut()[i as usize] += g;
    }
    Ok(d_in)
}

/// `W x + b` with `W` of shape `(out, in)`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (nout, nin) = dense_dims(input, weight, bias)?;
    let mut out = Tensor::zeros(vec![nout]);
    dense_fwd(nin, weight.data(), bias.data(), input.data(), out.data_mut(), Exec::Serial);
    Ok(out)
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, d_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (nout, nin) = match weight.shape()[..] {
        [o, i] if i == input.len() => (o, i),
        _ => return Err(Error::shape(format!("(out, {}) weight", input.len()), format!("{:?}", weight.shape()))),
    };
    check_shape("output gradient", d_out, &[nout])?;
    let mut d_in = Tensor::zeros(vec![nin]);
    let mut d_w = Tensor::zeros(weight.shape().to_vec());
    let mut d_b = Tensor::zeros(vec![nout]);
    dense_bwd(
        nin,
        weight.data(),
        input.data(),
        d_out.data(),
        Some(d_in.data_mut()),
        d_w.data_mut(),
        d_b.data_mut(),
        Exec::Serial,
    );
    Ok((d_in, d_w, d_b))
}

fn dense_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    match weight.shape()[..] {
        [o, i] if i == input.len() && bias.shape() == [o] => Ok((o, i)),
        _ => Err(Error::shape(
            format!("(out, {}) weight with (out) bias", input.len()),
            format!("{:?} and {:?}", weight.shape(), bias.shape()),
        )),
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Passes the gradient where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Result<Tensor> {
    check_shape("output gradient", d_out, x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Mean squared error, accumulated in `f64`.
pub fn mse(pred: &[f32], target: &[f32]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(format!("{} values", target.len()), pred.len()));
    }
    let s: f64 = pred.iter().zip(target).map(|(&p, &t)| (p as f64 - t as f64).powi(2)).sum();
    Ok(s / pred.len() as f64)
}

/// `2 (pred − target) / N`.
pub fn mse_backward(pred: &[f32], target: &[f32]) -> Result<Vec<f32>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(format!("{} values", target.len()), pred.len()));
    }
    let scale = 2.0 / pred.len() as f32;
    Ok(pred.iter().zip(target).map(|(p, t)| scale * (p - t)).collect())
}
