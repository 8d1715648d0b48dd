//! Raw numeric kernels on row-major slices. All `*_acc` functions add into
//! their output buffer.

use crate::error::{Error, Result};

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn matmul_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn matmul_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Geometry of a 2-D cross-correlation over an `N×C×H×W` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Output extent along one axis, or an error if the window does not tile.
pub fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Shape("stride must be positive".into()));
    }
    let padded = input + 2 * pad;
    if kernel > padded {
        return Err(Error::Shape(format!(
            "kernel extent {kernel} exceeds padded input extent {padded}"
        )));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::Shape(format!(
            "window {kernel} with stride {stride} does not tile padded extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(Error::Shape(format!(
                "conv2d expects 4-d input and kernel, got {input:?} and {kernel:?}"
            )));
        }
        if input[1] != kernel[1] {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        let out_h = out_extent(input[2], kernel[2], stride, pad)?;
        let out_w = out_extent(input[3], kernel[3], stride, pad)?;
        Ok(ConvGeom {
            batch: input[0],
            in_ch: input[1],
            in_h: input[2],
            in_w: input[3],
            out_ch: kernel[0],
            kh: kernel[2],
            kw: kernel[3],
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_ch, self.out_h, self.out_w]
    }

    fn patch(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_sample(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    fn out_sample(&self) -> usize {
        self.out_ch * self.positions()
    }

    /// Input coordinate for output position `o` and kernel tap `k`, if inside.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let v = (o * self.stride + k) as isize - self.pad as isize;
        (v >= 0 && (v as usize) < extent).then_some(v as usize)
    }
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let p = g.positions();
    for c in 0..g.in_ch {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[r * p..(r + 1) * p];
                for oy in 0..g.out_h {
                    let sy = g.src(oy, ky, g.in_h);
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match (sy, g.src(ox, kx, g.in_w)) {
                            (Some(y), Some(xx)) => x[(c * g.in_h + y) * g.in_w + xx],
                            _ => 0.0,
                        };
                    }
                }
            }
        }
    }
}

fn col2im_acc(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let p = g.positions();
    for c in 0..g.in_ch {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[r * p..(r + 1) * p];
                for oy in 0..g.out_h {
                    let Some(y) = g.src(oy, ky, g.in_h) else {
                        continue;
                    };
                    for ox in 0..g.out_w {
                        if let Some(xx) = g.src(ox, kx, g.in_w) {
                            dx[(c * g.in_h + y) * g.in_w + xx] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation via patch unrolling and a matrix product per sample.
pub fn conv2d_im2col(g: &ConvGeom, x: &[f64], k: &[f64]) -> Vec<f64> {
    let (r, p) = (g.patch(), g.positions());
    let mut out = vec![0.0; g.batch * g.out_sample()];
    let mut cols = vec![0.0; r * p];
    for n in 0..g.batch {
        im2col(g, &x[n * g.in_sample()..(n + 1) * g.in_sample()], &mut cols);
        let o = &mut out[n * g.out_sample()..(n + 1) * g.out_sample()];
        matmul_acc(k, &cols, o, g.out_ch, r, p);
    }
    out
}

/// Gradients of the im2col convolution. Either output may be skipped.
pub fn conv2d_im2col_backward(
    g: &ConvGeom,
    x: &[f64],
    k: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dk: Option<&mut [f64]>,
) {
    let (r, p) = (g.patch(), g.positions());
    let mut cols = vec![0.0; r * p];
    let mut dcols = vec![0.0; r * p];
    for n in 0..g.batch {
        let xs = &x[n * g.in_sample()..(n + 1) * g.in_sample()];
        let ds = &dout[n * g.out_sample()..(n + 1) * g.out_sample()];
        if let Some(dk) = dk.as_deref_mut() {
            im2col(g, xs, &mut cols);
            matmul_nt_acc(ds, &cols, dk, g.out_ch, p, r);
        }
        if let Some(dx) = dx.as_deref_mut() {
            dcols.iter_mut().for_each(|v| *v = 0.0);
            matmul_tn_acc(k, ds, &mut dcols, r, g.out_ch, p);
            col2im_acc(
                g,
                &dcols,
                &mut dx[n * g.in_sample()..(n + 1) * g.in_sample()],
            );
        }
    }
}

/// Reference cross-correlation by explicit loops.
pub fn conv2d_direct(g: &ConvGeom, x: &[f64], k: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.out_sample()];
    for n in 0..g.batch {
        for co in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = 0.0;
                    for ci in 0..g.in_ch {
                        for ky in 0..g.kh {
                            let Some(y) = g.src(oy, ky, g.in_h) else {
                                continue;
                            };
                            for kx in 0..g.kw {
                                let Some(xx) = g.src(ox, kx, g.in_w) else {
                                    continue;
                                };
                                acc += x[((n * g.in_ch + ci) * g.in_h + y) * g.in_w + xx]
                                    * k[((co * g.in_ch + ci) * g.kh + ky) * g.kw + kx];
                            }
                        }
                    }
                    out[((n * g.out_ch + co) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn conv2d_direct_backward(
    g: &ConvGeom,
    x: &[f64],
    k: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dk: Option<&mut [f64]>,
) {
    for n in 0..g.batch {
        for co in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let d = dout[((n * g.out_ch + co) * g.out_h + oy) * g.out_w + ox];
                    for ci in 0..g.in_ch {
                        for ky in 0..g.kh {
                            let Some(y) = g.src(oy, ky, g.in_h) else {
                                continue;
                            };
                            for kx in 0..g.kw {
                                let Some(xx) = g.src(ox, kx, g.in_w) else {
                                    continue;
                                };
                                let xi = ((n * g.in_ch + ci) * g.in_h + y) * g.in_w + xx;
                                let ki = ((co * g.in_ch + ci) * g.kh + ky) * g.kw + kx;
                                if let Some(dk) = dk.as_deref_mut() {
                                    dk[ki] += d * x[xi];
                                }
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[xi] += d * k[ki];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
