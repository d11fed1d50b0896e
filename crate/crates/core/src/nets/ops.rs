//! Forward and backward kernels. Backward functions accumulate into the
//! gradient buffers they are handed.

use super::tensor::Tensor;

/// Instance-norm variance floor.
pub const NORM_EPS: f64 = 1e-7;

/// Output side length of a 3×3, pad-1 convolution.
pub fn conv_out(side: usize, stride: usize) -> usize {
    (side - 1) / stride + 1
}

/// Column range `[lo, hi)` of outputs whose input column `x·s + k − 1` is in
/// bounds.
#[inline]
fn valid_range(out: usize, input: usize, stride: usize, k: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    // Largest x with x·s + k − 1 ≤ input − 1.
    let hi = (input + 1 - k).div_ceil(stride);
    (lo.min(out), hi.min(out))
}

/// 3×3 convolution, zero padding 1. `w` is `[cout][cin][3][3]`.
pub fn conv3x3(x: &Tensor, w: &[f64], b: &[f64], cout: usize, stride: usize) -> Tensor {
    let (cin, h, wd) = x.shape();
    let (oh, ow) = (conv_out(h, stride), conv_out(wd, stride));
    let mut y = Tensor::zeros(cout, oh, ow);
    for o in 0..cout {
        let out = y.plane_mut(o);
        out.fill(b[o]);
        for i in 0..cin {
            let inp = x.plane(i);
            for ky in 0..3 {
                let (ylo, yhi) = valid_range(oh, h, stride, ky);
                for kx in 0..3 {
                    let wv = w[((o * cin + i) * 3 + ky) * 3 + kx];
                    let (xlo, xhi) = valid_range(ow, wd, stride, kx);
                    for yy in ylo..yhi {
                        let iy = yy * stride + ky - 1;
                        let orow = &mut out[yy * ow..(yy + 1) * ow];
                        let irow = &inp[iy * wd..(iy + 1) * wd];
                        if stride == 1 {
                            let src = &irow[xlo + kx - 1..xhi + kx - 1];
                            for (o, &v) in orow[xlo..xhi].iter_mut().zip(src) {
                                *o += wv * v;
                            }
                        } else {
                            for xx in xlo..xhi {
                                orow[xx] += wv * irow[xx * stride + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn conv3x3_backward(
    x: &Tensor,
    w: &[f64],
    gy: &Tensor,
    stride: usize,
    gx: &mut Tensor,
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let (cin, h, wd) = x.shape();
    let (cout, oh, ow) = gy.shape();
    for o in 0..cout {
        let g = gy.plane(o);
        gb[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let inp = x.plane(i);
            for ky in 0..3 {
                let (ylo, yhi) = valid_range(oh, h, stride, ky);
                for kx in 0..3 {
                    let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                    let wv = w[widx];
                    let (xlo, xhi) = valid_range(ow, wd, stride, kx);
                    let mut acc = 0.0;
                    let gxp = gx.plane_mut(i);
                    for yy in ylo..yhi {
                        let iy = yy * stride + ky - 1;
                        let grow = &g[yy * ow..(yy + 1) * ow];
                        let irow = &inp[iy * wd..(iy + 1) * wd];
                        let gxrow = &mut gxp[iy * wd..(iy + 1) * wd];
                        if stride == 1 {
                            let off = kx as isize - 1;
                            let s = (xlo as isize + off) as usize;
                            let e = (xhi as isize + off) as usize;
                            for ((&gv, &iv), gxv) in grow[xlo..xhi].iter().zip(&irow[s..e]).zip(&mut gxrow[s..e]) {
                                acc += gv * iv;
                                *gxv += wv * gv;
                            }
                        } else {
                            for xx in xlo..xhi {
                                let ix = xx * stride + kx - 1;
                                acc += grow[xx] * irow[ix];
                                gxrow[ix] += wv * grow[xx];
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
}

/// Per-channel normalization to zero mean and unit variance, followed by the
/// affine `γ·x̂ + β`. Returns the output, `x̂`, and `1/σ` per channel.
pub fn instance_norm(x: &Tensor, gamma: &[f64], beta: &[f64]) -> (Tensor, Tensor, Vec<f64>) {
    let n = x.plane_len() as f64;
    let mut xhat = x.clone();
    let mut y = x.clone();
    let mut inv = Vec::with_capacity(x.channels);
    for c in 0..x.channels {
        let p = x.plane(c);
        let mean = p.iter().sum::<f64>() / n;
        let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv.push(is);
        for ((xh, yv), &v) in xhat.plane_mut(c).iter_mut().zip(y.plane_mut(c)).zip(p) {
            *xh = (v - mean) * is;
            *yv = gamma[c] * *xh + beta[c];
        }
    }
    (y, xhat, inv)
}

pub fn instance_norm_backward(
    xhat: &Tensor,
    inv: &[f64],
    gamma: &[f64],
    gy: &Tensor,
    gx: &mut Tensor,
    ggamma: &mut [f64],
    gbeta: &mut [f64],
) {
    let n = xhat.plane_len() as f64;
    for c in 0..xhat.channels {
        let xh = xhat.plane(c);
        let g = gy.plane(c);
        let mut sg = 0.0;
        let mut sgx = 0.0;
        for (&gv, &xv) in g.iter().zip(xh) {
            sg += gv;
            sgx += gv * xv;
        }
        ggamma[c] += sgx;
        gbeta[c] += sg;
        // With dx̂ = γ·dy: dx = (1/σ)(dx̂ − mean dx̂ − x̂·mean(dx̂·x̂)).
        let k = gamma[c] * inv[c];
        let (mg, mgx) = (sg / n, sgx / n);
        for ((gxv, &gv), &xv) in gx.plane_mut(c).iter_mut().zip(g).zip(xh) {
            *gxv += k * (gv - mg - xv * mgx);
        }
    }
}

/// Nearest-neighbor 2× upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let mut y = Tensor::zeros(c, 2 * h, 2 * w);
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = y.plane_mut(ch);
        for r in 0..2 * h {
            for col in 0..2 * w {
                dst[r * 2 * w + col] = src[(r / 2) * w + col / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward(gy: &Tensor, gx: &mut Tensor) {
    let (c, h, w) = gx.shape();
    for ch in 0..c {
        let g = gy.plane(ch);
        let dst = gx.plane_mut(ch);
        for r in 0..2 * h {
            for col in 0..2 * w {
                dst[(r / 2) * w + col / 2] += g[r * 2 * w + col];
            }
        }
    }
}

pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Tensor {
        channels: a.channels + b.channels,
        height: a.height,
        width: a.width,
        data,
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Channel means, as a `c×1×1` tensor.
pub fn global_mean(x: &Tensor) -> Tensor {
    let n = x.plane_len() as f64;
    let data = (0..x.channels).map(|c| x.plane(c).iter().sum::<f64>() / n).collect();
    Tensor {
        channels: x.channels,
        height: 1,
        width: 1,
        data,
    }
}

/// Fully connected layer on the flattened input; `w` is `[out][in]`.
pub fn dense(x: &Tensor, w: &[f64], b: &[f64], out: usize) -> Tensor {
    let n = x.data.len();
    let data = (0..out)
        .map(|o| {
            b[o] + w[o * n..(o + 1) * n]
                .iter()
                .zip(&x.data)
                .map(|(a, v)| a * v)
                .sum::<f64>()
        })
        .collect();
    Tensor {
        channels: out,
        height: 1,
        width: 1,
        data,
    }
}

pub fn dense_backward(x: &Tensor, w: &[f64], gy: &Tensor, gx: &mut Tensor, gw: &mut [f64], gb: &mut [f64]) {
    let n = x.data.len();
    for (o, &g) in gy.data.iter().enumerate() {
        gb[o] += g;
        for ((gwv, &xv), (&wv, gxv)) in gw[o * n..(o + 1) * n]
            .iter_mut()
            .zip(&x.data)
            .zip(w[o * n..(o + 1) * n].iter().zip(gx.data.iter_mut()))
        {
            *gwv += g * xv;
            *gxv += g * wv;
        }
    }
}
