//! Forward and backward passes of the primitive ops, on NCHW tensors.
//!
//! Every backward takes the forward input and the upstream gradient `dy` and
//! returns gradients in the same order as the forward's tensor arguments.
//! Kinks (LeakyReLU at 0, hard-sigmoid at ±3) get subgradient 0 on the
//! clamped side.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub const POINTWISE: ConvSpec = ConvSpec { stride: 1, pad: 0, groups: 1 };

    pub fn new(stride: usize, pad: usize, groups: usize) -> Self {
        ConvSpec { stride, pad, groups }
    }

    pub fn output_size(&self, size: usize, k: usize) -> Option<usize> {
        (size + 2 * self.pad).checked_sub(k).map(|s| s / self.stride + 1)
    }
}

fn guard(t: Tensor) -> Tensor {
    debug_assert!(t.is_finite(), "non-finite activation");
    t
}

struct ConvGeom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    cin_g: usize,
    cout_g: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn conv_geom(x: &Tensor, weight: &Tensor, spec: ConvSpec) -> Result<ConvGeom> {
    let (n, cin, h, w) = x.dims4()?;
    let (cout, cin_g, k, k2) = weight.dims4()?;
    let bad = |msg: String| Err(Error::DimensionMismatch(msg));
    if k != k2 {
        return bad(format!("non-square kernel {:?}", weight.shape()));
    }
    if spec.groups == 0 || spec.stride == 0 || cin % spec.groups != 0 || cout % spec.groups != 0 {
        return bad(format!("{cin} -> {cout} channels cannot split into {} groups", spec.groups));
    }
    if cin / spec.groups != cin_g {
        return bad(format!("kernel expects {cin_g} input channels per group, input has {}", cin / spec.groups));
    }
    let (Some(ho), Some(wo)) = (spec.output_size(h, k), spec.output_size(w, k)) else {
        return bad(format!("{h}x{w} input smaller than {k}x{k} kernel"));
    };
    Ok(ConvGeom { n, cin, h, w, cout, cin_g, cout_g: cout / spec.groups, k, ho, wo })
}

/// Grouped 2-D convolution (cross-correlation). `weight` is `[cout, cin/groups, k, k]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: ConvSpec) -> Result<Tensor> {
    let g = conv_geom(x, weight, spec)?;
    if let Some(b) = bias {
        if b.len() != g.cout {
            return Err(Error::DimensionMismatch(format!("bias of {} for {} output channels", b.len(), g.cout)));
        }
    }
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![0.0; g.n * g.cout * g.ho * g.wo];
    for n in 0..g.n {
        for co in 0..g.cout {
            let group = co / g.cout_g;
            let plane = &mut out[(n * g.cout + co) * g.ho * g.wo..][..g.ho * g.wo];
            if let Some(b) = bias {
                plane.fill(b.data()[co]);
            }
            for cg in 0..g.cin_g {
                let ci = group * g.cin_g + cg;
                let xp = &xd[(n * g.cin + ci) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let wv = wd[((co * g.cin_g + cg) * g.k + ky) * g.k + kx];
                        for oy in 0..g.ho {
                            let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let row = &xp[iy as usize * g.w..][..g.w];
                            let orow = &mut plane[oy * g.wo..][..g.wo];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                if ix >= 0 && ix < g.w as isize {
                                    *o += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(guard(Tensor::new(&[g.n, g.cout, g.ho, g.wo], out)?))
}

/// Returns `(dx, dweight, dbias)`.
pub fn conv2d_backward(x: &Tensor, weight: &Tensor, spec: ConvSpec, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let g = conv_geom(x, weight, spec)?;
    if dy.shape() != [g.n, g.cout, g.ho, g.wo] {
        return Err(Error::DimensionMismatch(format!("upstream gradient {:?}", dy.shape())));
    }
    let (xd, wd, dyd) = (x.data(), weight.data(), dy.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut db = vec![0.0; g.cout];
    for n in 0..g.n {
        for co in 0..g.cout {
            let group = co / g.cout_g;
            let dplane = &dyd[(n * g.cout + co) * g.ho * g.wo..][..g.ho * g.wo];
            db[co] += dplane.iter().sum::<f64>();
            for cg in 0..g.cin_g {
                let ci = group * g.cin_g + cg;
                let base = (n * g.cin + ci) * g.h * g.w;
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let widx = ((co * g.cin_g + cg) * g.k + ky) * g.k + kx;
                        let wv = wd[widx];
                        let mut acc = 0.0;
                        for oy in 0..g.ho {
                            let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let row = base + iy as usize * g.w;
                            for ox in 0..g.wo {
                                let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                if ix >= 0 && ix < g.w as isize {
                                    let d = dplane[oy * g.wo + ox];
                                    acc += d * xd[row + ix as usize];
                                    dx[row + ix as usize] += d * wv;
                                }
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), dx)?,
        Tensor::new(weight.shape(), dw)?,
        Tensor::new(&[g.cout], db)?,
    ))
}

/// k×k depthwise convolution: one filter per channel.
pub fn depthwise_conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let (_, c, _, _) = x.dims4()?;
    conv2d(x, weight, bias, ConvSpec::new(stride, pad, c))
}

/// 1×1 convolution, i.e. a per-pixel linear layer over channels.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    conv2d(x, weight, bias, ConvSpec::POINTWISE)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    guard(Tensor::new(x.shape(), data).expect("same shape"))
}

fn map_backward(x: &Tensor, dy: &Tensor, df: impl Fn(f64) -> f64) -> Result<Tensor> {
    x.same_shape(dy)?;
    let data = x.data().iter().zip(dy.data()).map(|(&v, &d)| d * df(v)).collect();
    Tensor::new(x.shape(), data)
}

pub fn leaky_relu(x: &Tensor) -> Tensor {
    map(x, |v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

pub fn leaky_relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    map_backward(x, dy, |v| if v > 0.0 { 1.0 } else { LEAKY_SLOPE })
}

/// `clamp(x / 6 + 0.5, 0, 1)`.
pub fn hard_sigmoid(x: &Tensor) -> Tensor {
    map(x, |v| (v / 6.0 + 0.5).clamp(0.0, 1.0))
}

pub fn hard_sigmoid_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    map_backward(x, dy, |v| if v > -3.0 && v < 3.0 { 1.0 / 6.0 } else { 0.0 })
}

/// Non-overlapping k×k average pooling (stride k); trailing rows and columns
/// that do not fill a window are dropped.
pub fn avg_pool(x: &Tensor, k: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if k == 0 || h < k || w < k {
        return Err(Error::DimensionMismatch(format!("{k}x{k} pool over {h}x{w}")));
    }
    let (ho, wo) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let xd = x.data();
    let mut out = vec![0.0; n * c * ho * wo];
    for p in 0..n * c {
        let plane = &xd[p * h * w..][..h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = 0.0;
                for y in oy * k..oy * k + k {
                    s += plane[y * w + ox * k..][..k].iter().sum::<f64>();
                }
                out[(p * ho + oy) * wo + ox] = s * scale;
            }
        }
    }
    Ok(guard(Tensor::new(&[n, c, ho, wo], out)?))
}

pub fn avg_pool_backward(x: &Tensor, k: usize, dy: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (ho, wo) = (h / k, w / k);
    if dy.shape() != [n, c, ho, wo] {
        return Err(Error::DimensionMismatch(format!("upstream gradient {:?}", dy.shape())));
    }
    let scale = 1.0 / (k * k) as f64;
    let mut dx = vec![0.0; x.len()];
    for p in 0..n * c {
        for y in 0..ho * k {
            for xx in 0..wo * k {
                dx[(p * h + y) * w + xx] = dy.data()[(p * ho + y / k) * wo + xx / k] * scale;
            }
        }
    }
    Tensor::new(x.shape(), dx)
}

/// Mean over H and W: `[n, c, h, w] -> [n, c, 1, 1]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let out = x.data().chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
    Ok(guard(Tensor::new(&[n, c, 1, 1], out)?))
}

pub fn global_avg_pool_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if dy.shape() != [n, c, 1, 1] {
        return Err(Error::DimensionMismatch(format!("upstream gradient {:?}", dy.shape())));
    }
    let hw = h * w;
    let dx = dy.data().iter().flat_map(|&d| std::iter::repeat_n(d / hw as f64, hw)).collect();
    Tensor::new(x.shape(), dx)
}

/// Multiplies each channel of `x` by `scale[n, c, 0, 0]`.
pub fn channel_scale(x: &Tensor, scale: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if scale.shape() != [n, c, 1, 1] {
        return Err(Error::DimensionMismatch(format!("scale {:?} for {:?}", scale.shape(), x.shape())));
    }
    let hw = h * w;
    let out = x.data().iter().enumerate().map(|(i, &v)| v * scale.data()[i / hw]).collect();
    Ok(guard(Tensor::new(x.shape(), out)?))
}

/// Returns `(dx, dscale)`.
pub fn channel_scale_backward(x: &Tensor, scale: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    x.same_shape(dy)?;
    let (_, _, h, w) = x.dims4()?;
    let hw = h * w;
    let dx = dy.data().iter().enumerate().map(|(i, &d)| d * scale.data()[i / hw]).collect();
    let ds = x
        .data()
        .chunks(hw)
        .zip(dy.data().chunks(hw))
        .map(|(xs, ds)| xs.iter().zip(ds).map(|(a, b)| a * b).sum())
        .collect();
    Ok((Tensor::new(x.shape(), dx)?, Tensor::new(scale.shape(), ds)?))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.same_shape(b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(guard(Tensor::new(a.shape(), data)?))
}

/// Multiply-accumulate count of a convolution, doubled: `2·cout·(cin/groups)·k²·ho·wo`.
pub fn conv_flops(cin: usize, cout: usize, k: usize, groups: usize, ho: usize, wo: usize) -> u64 {
    2 * (cout * (cin / groups) * k * k * ho * wo) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::{check, dot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-5;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Inputs bounded away from 0 so the LeakyReLU kink is not straddled.
    fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) { v } else { -v }
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
        Tensor::new(t.shape(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_pointwise_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 3, 4, 5], &mut rng);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(linear(&x, &w, None).unwrap(), x);
    }

    #[test]
    fn conv_matches_hand_computation() {
        // 3x3 ones kernel, pad 1, on a 3x3 ramp: center sums everything, corner sums its 2x2
        let x = Tensor::new(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let w = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let b = Tensor::new(&[1], vec![0.5]).unwrap();
        let y = conv2d(&x, &w, Some(&b), ConvSpec::new(1, 1, 1)).unwrap();
        assert_eq!(y.data()[4], 45.5);
        assert_eq!(y.data()[0], 1.0 + 2.0 + 4.0 + 5.0 + 0.5);
        let s2 = conv2d(&x, &w, None, ConvSpec::new(2, 1, 1)).unwrap();
        assert_eq!(s2.shape(), &[1, 1, 2, 2]);
        assert_eq!(s2.data()[3], 5.0 + 6.0 + 8.0 + 9.0);
    }

    #[test]
    fn activations_by_definition() {
        let x = Tensor::new(&[4], vec![-1.0, 2.0, -6.0, 1.5]).unwrap();
        assert_eq!(leaky_relu(&x).data(), &[-0.01, 2.0, -0.06, 1.5]);
        assert_eq!(hard_sigmoid(&x).data(), &[-1.0 / 6.0 + 0.5, 2.0 / 6.0 + 0.5, 0.0, 0.75]);
    }

    #[test]
    fn flop_formula() {
        assert_eq!(conv_flops(8, 8, 1, 1, 16, 16), 32768);
        assert_eq!(conv_flops(8, 8, 3, 8, 16, 16), 2 * 8 * 9 * 256);
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (spec, cin, cout, k) in [
            (ConvSpec::new(1, 1, 1), 3, 4, 3),
            (ConvSpec::new(2, 1, 1), 2, 3, 3),
            (ConvSpec::new(2, 1, 4), 4, 4, 3),
            (ConvSpec::new(1, 0, 2), 4, 6, 1),
        ] {
            let x = random(&[2, cin, 7, 6], &mut rng);
            let w = random(&[cout, cin / spec.groups, k, k], &mut rng);
            let b = random(&[cout], &mut rng);
            let y = conv2d(&x, &w, Some(&b), spec).unwrap();
            let r = random(y.shape(), &mut rng);
            let (dx, dw, db) = conv2d_backward(&x, &w, spec, &r).unwrap();
            let fx = |v: &[f64]| dot(&conv2d(&with_data(&x, v), &w, Some(&b), spec).unwrap(), &r);
            let fw = |v: &[f64]| dot(&conv2d(&x, &with_data(&w, v), Some(&b), spec).unwrap(), &r);
            let fb = |v: &[f64]| dot(&conv2d(&x, &w, Some(&with_data(&b, v)), spec).unwrap(), &r);
            assert!(check(fx, x.data(), dx.data()) < TOL, "{spec:?} dx");
            assert!(check(fw, w.data(), dw.data()) < TOL, "{spec:?} dw");
            assert!(check(fb, b.data(), db.data()) < TOL, "{spec:?} db");
        }
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = away_from_zero(&[2, 3, 4, 4], &mut rng);
        let r = random(x.shape(), &mut rng);
        let dx = leaky_relu_backward(&x, &r).unwrap();
        assert!(check(|v| dot(&leaky_relu(&with_data(&x, v)), &r), x.data(), dx.data()) < TOL);

        // spread over both saturated sides and the ramp, away from the ±3 kinks
        let xs: Vec<f64> = x.data().iter().map(|v| v * 5.0).filter(|v| (v.abs() - 3.0).abs() > 0.05).collect();
        let x = Tensor::new(&[xs.len()], xs).unwrap();
        let r = random(x.shape(), &mut rng);
        let dx = hard_sigmoid_backward(&x, &r).unwrap();
        assert!(check(|v| dot(&hard_sigmoid(&with_data(&x, v)), &r), x.data(), dx.data()) < TOL);
    }

    #[test]
    fn pooling_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[2, 3, 7, 8], &mut rng);
        for k in [1, 2, 3] {
            let y = avg_pool(&x, k).unwrap();
            let r = random(y.shape(), &mut rng);
            let dx = avg_pool_backward(&x, k, &r).unwrap();
            assert!(check(|v| dot(&avg_pool(&with_data(&x, v), k).unwrap(), &r), x.data(), dx.data()) < TOL);
        }
        let r = random(&[2, 3, 1, 1], &mut rng);
        let dx = global_avg_pool_backward(&x, &r).unwrap();
        assert!(check(|v| dot(&global_avg_pool(&with_data(&x, v)).unwrap(), &r), x.data(), dx.data()) < TOL);
    }

    #[test]
    fn scale_and_add_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 3, 4, 5], &mut rng);
        let s = random(&[2, 3, 1, 1], &mut rng);
        let r = random(x.shape(), &mut rng);
        let (dx, ds) = channel_scale_backward(&x, &s, &r).unwrap();
        assert!(check(|v| dot(&channel_scale(&with_data(&x, v), &s).unwrap(), &r), x.data(), dx.data()) < TOL);
        assert!(check(|v| dot(&channel_scale(&x, &with_data(&s, v)).unwrap(), &r), s.data(), ds.data()) < TOL);
        let b = random(x.shape(), &mut rng);
        assert!(check(|v| dot(&add(&with_data(&x, v), &b).unwrap(), &r), x.data(), r.data()) < TOL);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        assert!(conv2d(&x, &Tensor::zeros(&[2, 2, 3, 3]), None, ConvSpec::new(1, 1, 1)).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[2, 3, 5, 5]), None, ConvSpec::new(1, 0, 1)).is_err());
        assert!(avg_pool(&x, 5).is_err());
        assert!(add(&x, &Tensor::zeros(&[1, 3, 4, 5])).is_err());
        assert!(channel_scale(&x, &Tensor::zeros(&[1, 2, 1, 1])).is_err());
    }
}
