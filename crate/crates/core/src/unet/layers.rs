//! Layer primitives with explicit forward/backward passes.
//!
//! Everything is generic over `f32`/`f64`: production inference and training
//! run in `f32`, while gradient-check tests instantiate the same code in
//! `f64` against central finite differences.
//!
//! Activations are `(batch, channels, height, width)` arrays in standard
//! layout. Convolutions run as im2col + GEMM per sample, sequentially over
//! the batch, so results are bit-for-bit reproducible.

use ndarray::{Array1, Array2, Array4, NdFloat};

pub trait Elem: NdFloat + ndarray::ScalarOperand {}
impl Elem for f32 {}
impl Elem for f64 {}

/// Lower one sample into column form for a k x k convolution with `pad`
/// zeros, writing into `cols` of shape `(cin * k * k, h * w)`.
fn im2col<T: Elem>(x: &[T], cin: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut Array2<T>) {
    debug_assert_eq!(cols.dim(), (cin * k * k, h * w));
    let cols_slice = cols.as_slice_mut().unwrap();
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let out = &mut cols_slice[row * h * w..(row + 1) * h * w];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        for v in &mut out[y * w..(y + 1) * w] {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for xo in 0..w {
                        let sx = xo as isize + kx as isize - pad as isize;
                        out[y * w + xo] = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src_row[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add the column form back into a sample (adjoint of [`im2col`]).
fn col2im_add<T: Elem>(cols: &Array2<T>, cin: usize, h: usize, w: usize, k: usize, pad: usize, out: &mut [T]) {
    let cols_slice = cols.as_slice().unwrap();
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let col_row = &cols_slice[row * h * w..(row + 1) * h * w];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xo in 0..w {
                        let sx = xo as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            out[(ci * h + sy as usize) * w + sx as usize] += col_row[y * w + xo];
                        }
                    }
                }
            }
        }
    }
}

/// Same-padding convolution. Weights are `(cout, cin, k, k)` with square
/// kernels of size 1 or 3.
pub fn conv2d_forward<T: Elem>(x: &Array4<T>, w: &Array4<T>, b: &Array1<T>) -> Array4<T> {
    let (n, cin, h, wd) = x.dim();
    let (cout, cin_w, k, _) = w.dim();
    debug_assert_eq!(cin, cin_w);
    let pad = (k - 1) / 2;
    let w_mat = w.view().into_shape_with_order((cout, cin * k * k)).unwrap();
    let mut y = Array4::zeros((n, cout, h, wd));
    let mut cols = Array2::zeros((cin * k * k, h * wd));
    for s in 0..n {
        let xs = &x.as_slice().unwrap()[s * cin * h * wd..(s + 1) * cin * h * wd];
        im2col(xs, cin, h, wd, k, pad, &mut cols);
        let out = w_mat.dot(&cols); // (cout, h*w)
        let ys = &mut y.as_slice_mut().unwrap()[s * cout * h * wd..(s + 1) * cout * h * wd];
        for co in 0..cout {
            let bias = b[co];
            let src = out.row(co);
            let dst = &mut ys[co * h * wd..(co + 1) * h * wd];
            for (d, &v) in dst.iter_mut().zip(src.iter()) {
                *d = v + bias;
            }
        }
    }
    y
}

/// Gradients of [`conv2d_forward`]: input gradient plus accumulated weight
/// and bias gradients.
pub fn conv2d_backward<T: Elem>(
    x: &Array4<T>,
    w: &Array4<T>,
    dy: &Array4<T>,
) -> (Array4<T>, Array4<T>, Array1<T>) {
    let (n, cin, h, wd) = x.dim();
    let (cout, _, k, _) = w.dim();
    let pad = (k - 1) / 2;
    let w_mat = w.view().into_shape_with_order((cout, cin * k * k)).unwrap();
    let mut dx = Array4::zeros((n, cin, h, wd));
    let mut dw_mat = Array2::<T>::zeros((cout, cin * k * k));
    let mut db = Array1::<T>::zeros(cout);
    let mut cols = Array2::zeros((cin * k * k, h * wd));
    for s in 0..n {
        let xs = &x.as_slice().unwrap()[s * cin * h * wd..(s + 1) * cin * h * wd];
        im2col(xs, cin, h, wd, k, pad, &mut cols);
        let dys = &dy.as_slice().unwrap()[s * cout * h * wd..(s + 1) * cout * h * wd];
        let dy_mat = ndarray::ArrayView2::from_shape((cout, h * wd), dys).unwrap();
        dw_mat = dw_mat + dy_mat.dot(&cols.t());
        for co in 0..cout {
            db[co] = db[co] + dy_mat.row(co).sum();
        }
        let dcols = w_mat.t().dot(&dy_mat); // (cin*k*k, h*w)
        let dxs = &mut dx.as_slice_mut().unwrap()[s * cin * h * wd..(s + 1) * cin * h * wd];
        col2im_add(&dcols, cin, h, wd, k, pad, dxs);
    }
    let dw = dw_mat.into_shape_with_order((cout, cin, k, k)).unwrap();
    (dx, dw, db)
}

pub fn relu_forward<T: Elem>(x: &Array4<T>) -> Array4<T> {
    x.mapv(|v| v.max(T::zero()))
}

/// `z` is the pre-activation input of the forward pass.
pub fn relu_backward<T: Elem>(z: &Array4<T>, dy: &Array4<T>) -> Array4<T> {
    let mut dx = dy.clone();
    dx.zip_mut_with(z, |d, &zv| {
        if zv <= T::zero() {
            *d = T::zero();
        }
    });
    dx
}

pub struct BnCache<T: Elem> {
    pub xhat: Array4<T>,
    pub inv_std: Array1<T>,
}

/// Batch statistics over `(batch, height, width)` per channel;
/// running statistics are updated in place with the given momentum.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward_train<T: Elem>(
    x: &Array4<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
    running_mean: &mut Array1<T>,
    running_var: &mut Array1<T>,
    momentum: T,
    eps: T,
) -> (Array4<T>, BnCache<T>) {
    let (n, c, h, w) = x.dim();
    let m = T::from(n * h * w).unwrap();
    let mut y = Array4::zeros((n, c, h, w));
    let mut xhat = Array4::zeros((n, c, h, w));
    let mut inv_std = Array1::zeros(c);
    for ci in 0..c {
        let mut mean = T::zero();
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    mean = mean + x[(s, ci, yy, xx)];
                }
            }
        }
        mean = mean / m;
        let mut var = T::zero();
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let d = x[(s, ci, yy, xx)] - mean;
                    var = var + d * d;
                }
            }
        }
        var = var / m;
        let istd = T::one() / (var + eps).sqrt();
        inv_std[ci] = istd;
        running_mean[ci] = (T::one() - momentum) * running_mean[ci] + momentum * mean;
        running_var[ci] = (T::one() - momentum) * running_var[ci] + momentum * var;
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let xh = (x[(s, ci, yy, xx)] - mean) * istd;
                    xhat[(s, ci, yy, xx)] = xh;
                    y[(s, ci, yy, xx)] = gamma[ci] * xh + beta[ci];
                }
            }
        }
    }
    (y, BnCache { xhat, inv_std })
}

pub fn batchnorm_forward_eval<T: Elem>(
    x: &Array4<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
    running_mean: &Array1<T>,
    running_var: &Array1<T>,
    eps: T,
) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, h, w));
    for ci in 0..c {
        let istd = T::one() / (running_var[ci] + eps).sqrt();
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    y[(s, ci, yy, xx)] = gamma[ci] * (x[(s, ci, yy, xx)] - running_mean[ci]) * istd + beta[ci];
                }
            }
        }
    }
    y
}

pub fn batchnorm_backward<T: Elem>(
    dy: &Array4<T>,
    cache: &BnCache<T>,
    gamma: &Array1<T>,
) -> (Array4<T>, Array1<T>, Array1<T>) {
    let (n, c, h, w) = dy.dim();
    let m = T::from(n * h * w).unwrap();
    let mut dgamma = Array1::zeros(c);
    let mut dbeta = Array1::zeros(c);
    let mut dx = Array4::zeros((n, c, h, w));
    for ci in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let d = dy[(s, ci, yy, xx)];
                    sum_dy = sum_dy + d;
                    sum_dy_xhat = sum_dy_xhat + d * cache.xhat[(s, ci, yy, xx)];
                }
            }
        }
        dgamma[ci] = sum_dy_xhat;
        dbeta[ci] = sum_dy;
        let scale = gamma[ci] * cache.inv_std[ci];
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let d = dy[(s, ci, yy, xx)];
                    let xh = cache.xhat[(s, ci, yy, xx)];
                    dx[(s, ci, yy, xx)] =
                        scale * (d - sum_dy / m - xh * sum_dy_xhat / m);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// 2x2 max pooling with stride 2; returns the pooled map and the flat argmax
/// within each 2x2 cell (0..4) for the backward scatter.
pub fn maxpool2_forward<T: Elem>(x: &Array4<T>) -> (Array4<T>, Array4<u8>) {
    let (n, c, h, w) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Array4::zeros((n, c, ho, wo));
    let mut arg = Array4::zeros((n, c, ho, wo));
    for s in 0..n {
        for ci in 0..c {
            for yy in 0..ho {
                for xx in 0..wo {
                    let mut best = x[(s, ci, 2 * yy, 2 * xx)];
                    let mut best_i = 0u8;
                    for (i, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].iter().enumerate() {
                        let v = x[(s, ci, 2 * yy + dy, 2 * xx + dx)];
                        if v > best {
                            best = v;
                            best_i = i as u8 + 1;
                        }
                    }
                    y[(s, ci, yy, xx)] = best;
                    arg[(s, ci, yy, xx)] = best_i;
                }
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<T: Elem>(dy: &Array4<T>, arg: &Array4<u8>) -> Array4<T> {
    let (n, c, ho, wo) = dy.dim();
    let mut dx = Array4::zeros((n, c, ho * 2, wo * 2));
    const OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    for s in 0..n {
        for ci in 0..c {
            for yy in 0..ho {
                for xx in 0..wo {
                    let (oy, ox) = OFFSETS[arg[(s, ci, yy, xx)] as usize];
                    dx[(s, ci, 2 * yy + oy, 2 * xx + ox)] = dy[(s, ci, yy, xx)];
                }
            }
        }
    }
    dx
}

/// Inverted dropout; the mask embeds the `1/(1-p)` scaling so inference needs
/// no correction.
pub fn dropout_forward<T: Elem>(
    x: &Array4<T>,
    rate: f64,
    rng: &mut impl rand::Rng,
) -> (Array4<T>, Array4<T>) {
    if rate <= 0.0 {
        return (x.clone(), Array4::from_elem(x.dim(), T::one()));
    }
    let keep = T::from(1.0 - rate).unwrap();
    let mut mask = Array4::zeros(x.dim());
    for v in mask.iter_mut() {
        *v = if rng.random::<f64>() >= rate { T::one() / keep } else { T::zero() };
    }
    (x * &mask, mask)
}

pub fn dropout_backward<T: Elem>(dy: &Array4<T>, mask: &Array4<T>) -> Array4<T> {
    dy * mask
}

/// Transposed convolution with a 2x2 kernel and stride 2 (spatial doubling).
/// Weights are `(cin, cout, 2, 2)`; with stride equal to kernel size every
/// output pixel receives exactly one contribution.
pub fn upconv2_forward<T: Elem>(x: &Array4<T>, w: &Array4<T>, b: &Array1<T>) -> Array4<T> {
    let (n, cin, h, wd) = x.dim();
    let (_, cout, _, _) = w.dim();
    let mut y = Array4::zeros((n, cout, h * 2, wd * 2));
    for s in 0..n {
        for co in 0..cout {
            for yy in 0..h {
                for xx in 0..wd {
                    let mut vals = [b[co]; 4];
                    for ci in 0..cin {
                        let xv = x[(s, ci, yy, xx)];
                        vals[0] = vals[0] + xv * w[(ci, co, 0, 0)];
                        vals[1] = vals[1] + xv * w[(ci, co, 0, 1)];
                        vals[2] = vals[2] + xv * w[(ci, co, 1, 0)];
                        vals[3] = vals[3] + xv * w[(ci, co, 1, 1)];
                    }
                    y[(s, co, 2 * yy, 2 * xx)] = vals[0];
                    y[(s, co, 2 * yy, 2 * xx + 1)] = vals[1];
                    y[(s, co, 2 * yy + 1, 2 * xx)] = vals[2];
                    y[(s, co, 2 * yy + 1, 2 * xx + 1)] = vals[3];
                }
            }
        }
    }
    y
}

pub fn upconv2_backward<T: Elem>(
    x: &Array4<T>,
    w: &Array4<T>,
    dy: &Array4<T>,
) -> (Array4<T>, Array4<T>, Array1<T>) {
    let (n, cin, h, wd) = x.dim();
    let (_, cout, _, _) = w.dim();
    let mut dx = Array4::zeros((n, cin, h, wd));
    let mut dw = Array4::zeros(w.dim());
    let mut db = Array1::zeros(cout);
    for s in 0..n {
        for co in 0..cout {
            for yy in 0..h {
                for xx in 0..wd {
                    let g = [
                        dy[(s, co, 2 * yy, 2 * xx)],
                        dy[(s, co, 2 * yy, 2 * xx + 1)],
                        dy[(s, co, 2 * yy + 1, 2 * xx)],
                        dy[(s, co, 2 * yy + 1, 2 * xx + 1)],
                    ];
                    db[co] = db[co] + g[0] + g[1] + g[2] + g[3];
                    for ci in 0..cin {
                        let xv = x[(s, ci, yy, xx)];
                        dw[(ci, co, 0, 0)] = dw[(ci, co, 0, 0)] + xv * g[0];
                        dw[(ci, co, 0, 1)] = dw[(ci, co, 0, 1)] + xv * g[1];
                        dw[(ci, co, 1, 0)] = dw[(ci, co, 1, 0)] + xv * g[2];
                        dw[(ci, co, 1, 1)] = dw[(ci, co, 1, 1)] + xv * g[3];
                        dx[(s, ci, yy, xx)] = dx[(s, ci, yy, xx)]
                            + g[0] * w[(ci, co, 0, 0)]
                            + g[1] * w[(ci, co, 0, 1)]
                            + g[2] * w[(ci, co, 1, 0)]
                            + g[3] * w[(ci, co, 1, 1)];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Channel-wise concatenation `[a | b]` (standard layout, so downstream
/// GEMMs can view the buffer as a contiguous slice).
pub fn concat_channels<T: Elem>(a: &Array4<T>, b: &Array4<T>) -> Array4<T> {
    let c = ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).unwrap();
    if c.is_standard_layout() {
        c
    } else {
        Array4::from_shape_vec(c.dim(), c.iter().copied().collect()).unwrap()
    }
}

/// Split a gradient back into the two concatenated parts.
pub fn split_channels<T: Elem>(d: &Array4<T>, ca: usize) -> (Array4<T>, Array4<T>) {
    let (da, db) = d.view().split_at(ndarray::Axis(1), ca);
    (da.to_owned(), db.to_owned())
}
