// Plane-level convolution kernels. Each loops kernel taps outermost so every
// output value sees its contributions in (row, column) tap order.

use super::Scalar;

/// Output indices `o` in `[0, out_len)` with `0 <= o * stride + tap - off < in_len`.
fn valid(out_len: usize, in_len: usize, stride: usize, tap: usize, off: usize) -> (usize, usize) {
    let shift = tap as isize - off as isize;
    let s = stride as isize;
    // smallest o with o*s + shift >= 0
    let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
    // largest o with o*s + shift <= in_len - 1
    let top = in_len as isize - 1 - shift;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top / s + 1).min(out_len as isize);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Geometry {
    pub oh: usize,
    pub ow: usize,
    pub ih: usize,
    pub iw: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub off_y: usize,
    pub off_x: usize,
}

/// `out[oy, ox] += sum_{ky,kx} w[ky, kx] * inp[oy*s + ky - off, ox*s + kx - off]`
pub(crate) fn gather_acc<T: Scalar>(out: &mut [T], inp: &[T], w: &[T], g: &Geometry) {
    for ky in 0..g.kh {
        let (y0, y1) = valid(g.oh, g.ih, g.stride, ky, g.off_y);
        for kx in 0..g.kw {
            let (x0, x1) = valid(g.ow, g.iw, g.stride, kx, g.off_x);
            if x0 >= x1 {
                continue;
            }
            let wv = w[ky * g.kw + kx];
            for oy in y0..y1 {
                let iy = oy * g.stride + ky - g.off_y;
                let in_row = &inp[iy * g.iw..(iy + 1) * g.iw];
                let out_row = &mut out[oy * g.ow + x0..oy * g.ow + x1];
                let ix0 = x0 * g.stride + kx - g.off_x;
                if g.stride == 1 {
                    for (o, &v) in out_row.iter_mut().zip(&in_row[ix0..ix0 + (x1 - x0)]) {
                        *o = *o + wv * v;
                    }
                } else {
                    for (j, o) in out_row.iter_mut().enumerate() {
                        *o = *o + wv * in_row[ix0 + j * g.stride];
                    }
                }
            }
        }
    }
}

/// `out[iy*s + ky - off, ix*s + kx - off] += w[ky, kx] * inp[iy, ix]`.
/// Here `ih, iw` describe `inp` and `oh, ow` describe `out`.
pub(crate) fn scatter_acc<T: Scalar>(out: &mut [T], inp: &[T], w: &[T], g: &Geometry) {
    for ky in 0..g.kh {
        let (y0, y1) = valid(g.ih, g.oh, g.stride, ky, g.off_y);
        for kx in 0..g.kw {
            let (x0, x1) = valid(g.iw, g.ow, g.stride, kx, g.off_x);
            if x0 >= x1 {
                continue;
            }
            let wv = w[ky * g.kw + kx];
            for iy in y0..y1 {
                let oy = iy * g.stride + ky - g.off_y;
                let in_row = &inp[iy * g.iw + x0..iy * g.iw + x1];
                let ox0 = x0 * g.stride + kx - g.off_x;
                let out_row = &mut out[oy * g.ow..(oy + 1) * g.ow];
                if g.stride == 1 {
                    for (o, &v) in out_row[ox0..ox0 + (x1 - x0)].iter_mut().zip(in_row) {
                        *o = *o + wv * v;
                    }
                } else {
                    for (j, &v) in in_row.iter().enumerate() {
                        let o = &mut out_row[ox0 + j * g.stride];
                        *o = *o + wv * v;
                    }
                }
            }
        }
    }
}

/// `gw[ky, kx] += sum_{oy,ox} dout[oy, ox] * inp[oy*s + ky - off, ox*s + kx - off]`
pub(crate) fn weight_grad_acc<T: Scalar>(gw: &mut [T], dout: &[T], inp: &[T], g: &Geometry) {
    for ky in 0..g.kh {
        let (y0, y1) = valid(g.oh, g.ih, g.stride, ky, g.off_y);
        for kx in 0..g.kw {
            let (x0, x1) = valid(g.ow, g.iw, g.stride, kx, g.off_x);
            if x0 >= x1 {
                continue;
            }
            let mut acc = T::zero();
            for oy in y0..y1 {
                let iy = oy * g.stride + ky - g.off_y;
                let ix0 = x0 * g.stride + kx - g.off_x;
                let d_row = &dout[oy * g.ow + x0..oy * g.ow + x1];
                let in_row = &inp[iy * g.iw..(iy + 1) * g.iw];
                for (j, &d) in d_row.iter().enumerate() {
                    acc = acc + d * in_row[ix0 + j * g.stride];
                }
            }
            let slot = &mut gw[ky * g.kw + kx];
            *slot = *slot + acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::valid;

    #[test]
    fn valid_range_brute_force() {
        for out_len in 0..7 {
            for in_len in 0..7 {
                for stride in 1..4 {
                    for tap in 0..5 {
                        for off in 0..5 {
                            let want: Vec<usize> = (0..out_len)
                                .filter(|&o| {
                                    let i = (o * stride + tap) as isize - off as isize;
                                    i >= 0 && i < in_len as isize
                                })
                                .collect();
                            let (lo, hi) = valid(out_len, in_len, stride, tap, off);
                            let got: Vec<usize> = (lo..hi).collect();
                            assert_eq!(got, want, "{out_len} {in_len} {stride} {tap} {off}");
                        }
                    }
                }
            }
        }
    }
}
