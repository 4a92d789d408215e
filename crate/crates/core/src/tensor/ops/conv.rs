//! Grouped 2-d cross-correlation lowered to im2col + GEMM.
//!
//! Plain convolution is `groups == 1`; a depthwise convolution with depth
//! multiplier `D` over `C` channels is `groups == C` with `C·D` output
//! channels, so output channel `c·D + d` reads only input channel `c`.

use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Result, TensorError};

/// Explicit zero padding on each border of the two spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn symmetric(pad_h: usize, pad_w: usize) -> Self {
        Self {
            top: pad_h,
            bottom: pad_h,
            left: pad_w,
            right: pad_w,
        }
    }

    /// Padding that keeps the extent unchanged at stride 1. The odd element
    /// of an even kernel goes after the signal.
    pub fn same(kh: usize, kw: usize) -> Self {
        let (top, bottom) = split_same(kh);
        let (left, right) = split_same(kw);
        Self {
            top,
            bottom,
            left,
            right,
        }
    }
}

fn split_same(k: usize) -> (usize, usize) {
    let total = k.saturating_sub(1);
    (total / 2, total - total / 2)
}

/// Output extent of a window sweep: `floor((extent + pad - k) / stride) + 1`.
pub fn output_extent(extent: usize, pad_total: usize, k: usize, stride: usize) -> Option<usize> {
    if stride == 0 || k == 0 || k > extent + pad_total {
        return None;
    }
    Some((extent + pad_total - k) / stride + 1)
}

/// Fully resolved shape bookkeeping for one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub padding: Padding,
    pub groups: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn resolve(
        input: [usize; 4],
        kernel: [usize; 4],
        stride: (usize, usize),
        padding: Padding,
        groups: usize,
    ) -> Result<Self> {
        let [batch, in_channels, in_h, in_w] = input;
        let [out_channels, per_group, kh, kw] = kernel;
        if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(TensorError::Dimension(format!(
                "{groups} groups do not divide {in_channels} input / {out_channels} output channels"
            )));
        }
        if per_group != in_channels / groups {
            return Err(TensorError::Dimension(format!(
                "kernel expects {per_group} input channels per group, input provides {}",
                in_channels / groups
            )));
        }
        let out_h = output_extent(in_h, padding.top + padding.bottom, kh, stride.0);
        let out_w = output_extent(in_w, padding.left + padding.right, kw, stride.1);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) => Ok(Self {
                batch,
                in_channels,
                in_h,
                in_w,
                out_channels,
                kh,
                kw,
                stride,
                padding,
                groups,
                out_h,
                out_w,
            }),
            _ => Err(TensorError::Dimension(format!(
                "kernel {kh}x{kw} with stride {stride:?} does not fit input {in_h}x{in_w} padded by {padding:?}"
            ))),
        }
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_h, self.out_w]
    }

    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Rows of the im2col matrix for one group.
    fn col_rows(&self) -> usize {
        self.in_per_group() * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_plane(&self) -> usize {
        self.in_h * self.in_w
    }
}

/// Unfolds the channels of one group of one sample into `cols`
/// (`col_rows × col_cols`, row-major).
fn im2col<T: Real>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let (sh, sw) = g.stride;
    let p = g.padding;
    let ow = g.out_w;
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.in_per_group() {
        let plane = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let dst = &mut dst_row[oy * ow..(oy + 1) * ow];
                    let iy = (oy * sh + i) as isize - p.top as isize;
                    if iy < 0 || iy as usize >= g.in_h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * sw + j) as isize - p.left as isize;
                        *d = if ix < 0 || ix as usize >= g.in_w {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back into `dx`.
fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let (sh, sw) = g.stride;
    let p = g.padding;
    let ow = g.out_w;
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.in_per_group() {
        let plane = &mut dx[c * g.in_plane()..(c + 1) * g.in_plane()];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * sh + i) as isize - p.top as isize;
                    if iy < 0 || iy as usize >= g.in_h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, &v) in src_row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * sw + j) as isize - p.left as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn forward<T: Real>(g: &ConvGeometry, x: &[T], kernel: &[T]) -> Vec<T> {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let opg = g.out_per_group();
    let out_sample = g.out_channels * ncols;
    let in_sample = g.in_channels * g.in_plane();
    let mut out = vec![T::zero(); g.batch * out_sample];
    let mut cols = vec![T::zero(); rows * ncols];
    for n in 0..g.batch {
        for grp in 0..g.groups {
            let xs = &x[n * in_sample + grp * g.in_per_group() * g.in_plane()..];
            im2col(g, xs, &mut cols);
            let k = &kernel[grp * opg * rows..(grp + 1) * opg * rows];
            let o = &mut out
                [n * out_sample + grp * opg * ncols..n * out_sample + (grp + 1) * opg * ncols];
            T::gemm(
                opg,
                rows,
                ncols,
                T::one(),
                k,
                (rows, 1),
                &cols,
                (ncols, 1),
                T::zero(),
                o,
                (ncols, 1),
            );
        }
    }
    out
}

/// Gradients with respect to the input (if requested) and the kernel.
pub fn backward<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    kernel: &[T],
    dout: &[T],
    want_dx: bool,
    want_dk: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let opg = g.out_per_group();
    let out_sample = g.out_channels * ncols;
    let in_sample = g.in_channels * g.in_plane();
    let mut dx = want_dx.then(|| vec![T::zero(); x.len()]);
    let mut dk = want_dk.then(|| vec![T::zero(); kernel.len()]);
    let mut cols = vec![T::zero(); rows * ncols];
    for n in 0..g.batch {
        for grp in 0..g.groups {
            let x_off = n * in_sample + grp * g.in_per_group() * g.in_plane();
            let dy =
                &dout[n * out_sample + grp * opg * ncols..n * out_sample + (grp + 1) * opg * ncols];
            let k_range = grp * opg * rows..(grp + 1) * opg * rows;
            if let Some(dk) = dk.as_mut() {
                im2col(g, &x[x_off..], &mut cols);
                // dK_g += dY_g · colsᵀ
                T::gemm(
                    opg,
                    ncols,
                    rows,
                    T::one(),
                    dy,
                    (ncols, 1),
                    &cols,
                    (1, ncols),
                    T::one(),
                    &mut dk[k_range.clone()],
                    (rows, 1),
                );
            }
            if let Some(dx) = dx.as_mut() {
                // dcols = K_gᵀ · dY_g
                T::gemm(
                    rows,
                    opg,
                    ncols,
                    T::one(),
                    &kernel[k_range],
                    (1, rows),
                    dy,
                    (ncols, 1),
                    T::zero(),
                    &mut cols,
                    (ncols, 1),
                );
                col2im(g, &cols, &mut dx[x_off..]);
            }
        }
    }
    (dx, dk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_puts_odd_element_after() {
        assert_eq!(
            Padding::same(1, 16),
            Padding {
                top: 0,
                bottom: 0,
                left: 7,
                right: 8
            }
        );
        assert_eq!(
            Padding::same(1, 125),
            Padding {
                top: 0,
                bottom: 0,
                left: 62,
                right: 62
            }
        );
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(output_extent(2000, 0, 125, 1), Some(1876));
        assert_eq!(output_extent(64, 0, 3, 3), Some(21));
        assert_eq!(output_extent(4, 0, 5, 1), None);
        assert_eq!(output_extent(4, 2, 5, 1), Some(2));
        assert_eq!(output_extent(4, 0, 1, 0), None);
    }

    #[test]
    fn group_mismatch_is_dimension_error() {
        let err = ConvGeometry::resolve([1, 3, 1, 8], [4, 1, 1, 2], (1, 1), Padding::default(), 2);
        assert!(matches!(err, Err(TensorError::Dimension(_))));
        let err = ConvGeometry::resolve([1, 3, 1, 8], [4, 2, 1, 2], (1, 1), Padding::default(), 1);
        assert!(matches!(err, Err(TensorError::Dimension(_))));
    }
}
