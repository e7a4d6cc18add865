//! Adaptive 2D pooling: maps any `(H, W)` plane onto a fixed `(OH, OW)`
//! grid with floor/ceil bin edges (`start = ⌊i·H/OH⌋`, `end = ⌈(i+1)·H/OH⌉`),
//! so neighboring bins may overlap when the sizes do not divide evenly.
//! This is what makes the regression head independent of patch count.

use ndarray::Array4;

use crate::Real;

/// Inclusive-exclusive bin bounds for output index `i` of `o` bins over
/// `n` inputs.
fn bin(i: usize, n: usize, o: usize) -> (usize, usize) {
    (i * n / o, ((i + 1) * n).div_ceil(o))
}

/// Adaptive average pooling of `(N, C, H, W)` onto `(N, C, OH, OW)`.
pub fn adaptive_avg_pool2d<F: Real>(x: &Array4<F>, oh: usize, ow: usize) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, oh, ow));
    for b in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                let (h0, h1) = bin(oi, h, oh);
                for oj in 0..ow {
                    let (w0, w1) = bin(oj, w, ow);
                    let mut acc = F::zero();
                    for i in h0..h1 {
                        for j in w0..w1 {
                            acc += x[[b, ch, i, j]];
                        }
                    }
                    let cnt = F::from_usize((h1 - h0) * (w1 - w0)).unwrap();
                    y[[b, ch, oi, oj]] = acc / cnt;
                }
            }
        }
    }
    y
}

/// Backward of [`adaptive_avg_pool2d`]: spreads each output gradient
/// uniformly over its bin.
pub fn adaptive_avg_pool2d_backward<F: Real>(
    dy: &Array4<F>,
    h: usize,
    w: usize,
) -> Array4<F> {
    let (n, c, oh, ow) = dy.dim();
    let mut dx = Array4::zeros((n, c, h, w));
    for b in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                let (h0, h1) = bin(oi, h, oh);
                for oj in 0..ow {
                    let (w0, w1) = bin(oj, w, ow);
                    let cnt = F::from_usize((h1 - h0) * (w1 - w0)).unwrap();
                    let g = dy[[b, ch, oi, oj]] / cnt;
                    for i in h0..h1 {
                        for j in w0..w1 {
                            dx[[b, ch, i, j]] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Adaptive max pooling; also returns the flat argmax (`i·W + j`) per
/// output cell for the backward scatter.
pub fn adaptive_max_pool2d<F: Real>(
    x: &Array4<F>,
    oh: usize,
    ow: usize,
) -> (Array4<F>, Array4<usize>) {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, oh, ow));
    let mut arg = Array4::zeros((n, c, oh, ow));
    for b in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                let (h0, h1) = bin(oi, h, oh);
                for oj in 0..ow {
                    let (w0, w1) = bin(oj, w, ow);
                    let mut best = x[[b, ch, h0, w0]];
                    let mut best_at = h0 * w + w0;
                    for i in h0..h1 {
                        for j in w0..w1 {
                            let v = x[[b, ch, i, j]];
                            if v > best {
                                best = v;
                                best_at = i * w + j;
                            }
                        }
                    }
                    y[[b, ch, oi, oj]] = best;
                    arg[[b, ch, oi, oj]] = best_at;
                }
            }
        }
    }
    (y, arg)
}

/// Backward of [`adaptive_max_pool2d`]: routes each output gradient to its
/// argmax cell.
pub fn adaptive_max_pool2d_backward<F: Real>(
    dy: &Array4<F>,
    arg: &Array4<usize>,
    h: usize,
    w: usize,
) -> Array4<F> {
    let (n, c, oh, ow) = dy.dim();
    let mut dx = Array4::zeros((n, c, h, w));
    for b in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let flat = arg[[b, ch, oi, oj]];
                    dx[[b, ch, flat / w, flat % w]] += dy[[b, ch, oi, oj]];
                }
            }
        }
    }
    dx
}
