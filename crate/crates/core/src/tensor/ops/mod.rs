//! Forward and adjoint kernels on raw buffers. [`Graph`](super::Graph)
//! wires them into the tape; they are public so tests can call them directly.

pub mod activation;
pub mod conv;
pub mod loss;
pub mod norm;
pub mod pool;

use super::Real;

/// `y[N, out] = x[N, in] · wᵀ + b` with `w` stored as `[out, in]`.
pub fn linear_forward<T: Real>(
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
    n: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<T> {
    let mut y = vec![T::zero(); n * d_out];
    if let Some(b) = b {
        for row in y.chunks_mut(d_out) {
            row.copy_from_slice(b);
        }
    }
    let beta = if b.is_some() { T::one() } else { T::zero() };
    T::gemm(
        n,
        d_in,
        d_out,
        T::one(),
        x,
        (d_in, 1),
        w,
        (1, d_in),
        beta,
        &mut y,
        (d_out, 1),
    );
    y
}

pub struct LinearGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    (n, d_in, d_out): (usize, usize, usize),
    (want_dx, want_dw, want_db): (bool, bool, bool),
) -> LinearGrads<T> {
    let dx = want_dx.then(|| {
        let mut dx = vec![T::zero(); n * d_in];
        T::gemm(
            n,
            d_out,
            d_in,
            T::one(),
            dy,
            (d_out, 1),
            w,
            (d_in, 1),
            T::zero(),
            &mut dx,
            (d_in, 1),
        );
        dx
    });
    let dw = want_dw.then(|| {
        let mut dw = vec![T::zero(); d_out * d_in];
        T::gemm(
            d_out,
            n,
            d_in,
            T::one(),
            dy,
            (1, d_out),
            x,
            (d_in, 1),
            T::zero(),
            &mut dw,
            (d_in, 1),
        );
        dw
    });
    let db = want_db.then(|| {
        let mut db = vec![T::zero(); d_out];
        for row in dy.chunks(d_out) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        db
    });
    LinearGrads { dx, dw, db }
}

/// Nearest-neighbour upsampling of `[planes, h, w]` by integer factors.
pub fn upsample_forward<T: Real>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    (fh, fw): (usize, usize),
) -> Vec<T> {
    let (oh, ow) = (h * fh, w * fw);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        for oy in 0..oh {
            let src = &x[(p * h + oy / fh) * w..(p * h + oy / fh + 1) * w];
            for ox in 0..ow {
                out.push(src[ox / fw]);
            }
        }
    }
    out
}

pub fn upsample_backward<T: Real>(
    dy: &[T],
    planes: usize,
    h: usize,
    w: usize,
    (fh, fw): (usize, usize),
) -> Vec<T> {
    let (oh, ow) = (h * fh, w * fw);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for oy in 0..oh {
            let row = (p * h + oy / fh) * w;
            for ox in 0..ow {
                dx[row + ox / fw] += dy[(p * oh + oy) * ow + ox];
            }
        }
    }
    dx
}
