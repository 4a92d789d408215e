//! Scalar objectives: cross-entropy on probabilities, mean squared error and
//! the batch-mined triplet loss.

use crate::tensor::Real;

/// `−mean_n log max(p[n, label_n], floor)` and its gradient.
pub fn cross_entropy<T: Real>(
    probs: &[T],
    classes: usize,
    labels: &[usize],
    floor: T,
) -> (T, Vec<T>) {
    let n = labels.len();
    let inv_n = T::one() / T::lit(n as f64);
    let mut grad = vec![T::zero(); probs.len()];
    let mut total = T::zero();
    for (row, &label) in labels.iter().enumerate() {
        let p = probs[row * classes + label];
        if p > floor {
            total -= p.ln();
            grad[row * classes + label] = -inv_n / p;
        } else {
            total -= floor.ln();
        }
    }
    (total * inv_n, grad)
}

/// One anchor–positive pair together with its mined negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletTerm<T> {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub d_ap: T,
    pub d_an: T,
    pub loss: T,
}

fn distance<T: Real>(z: &[T], dim: usize, a: usize, b: usize) -> T {
    z[a * dim..(a + 1) * dim]
        .iter()
        .zip(&z[b * dim..(b + 1) * dim])
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Semi-hard mining over every ordered anchor–positive pair.
///
/// The negative for `(a, p)` is the closest one strictly farther from the
/// anchor than the positive; when none is, the farthest negative. Ties go to
/// the lowest index. Returns one term per anchor–positive pair; the loss is
/// the mean of their hinge values.
pub fn mine_triplets<T: Real>(
    z: &[T],
    dim: usize,
    labels: &[usize],
    margin: T,
) -> Vec<TripletTerm<T>> {
    let n = labels.len();
    let mut dist = vec![T::zero(); n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = distance(z, dim, a, b);
            dist[a * n + b] = d;
            dist[b * n + a] = d;
        }
    }
    let mut terms = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = dist[a * n + p];
            let mut outside: Option<(usize, T)> = None;
            let mut farthest: Option<(usize, T)> = None;
            for neg in (0..n).filter(|&k| labels[k] != labels[a]) {
                let d = dist[a * n + neg];
                if d > d_ap && outside.is_none_or(|(_, best)| d < best) {
                    outside = Some((neg, d));
                }
                if farthest.is_none_or(|(_, best)| d > best) {
                    farthest = Some((neg, d));
                }
            }
            if let Some((negative, d_an)) = outside.or(farthest) {
                terms.push(TripletTerm {
                    anchor: a,
                    positive: p,
                    negative,
                    d_ap,
                    d_an,
                    loss: (d_ap - d_an + margin).max(T::zero()),
                });
            }
        }
    }
    terms
}

pub fn triplet_loss_value<T: Real>(terms: &[TripletTerm<T>]) -> T {
    if terms.is_empty() {
        return T::zero();
    }
    terms.iter().map(|t| t.loss).sum::<T>() / T::lit(terms.len() as f64)
}

pub fn triplet_backward<T: Real>(
    z: &[T],
    dim: usize,
    terms: &[TripletTerm<T>],
    upstream: T,
) -> Vec<T> {
    let mut grad = vec![T::zero(); z.len()];
    if terms.is_empty() {
        return grad;
    }
    let scale = upstream / T::lit(terms.len() as f64);
    // d‖u − v‖/du = (u − v)/‖u − v‖, taken as zero at coincident points
    let push = |from: usize, to: usize, d: T, sign: T, grad: &mut [T]| {
        if d <= T::zero() {
            return;
        }
        for k in 0..dim {
            let g = sign * scale * (z[from * dim + k] - z[to * dim + k]) / d;
            grad[from * dim + k] += g;
            grad[to * dim + k] -= g;
        }
    };
    for t in terms.iter().filter(|t| t.loss > T::zero()) {
        push(t.anchor, t.positive, t.d_ap, T::one(), &mut grad);
        push(t.anchor, t.negative, t.d_an, -T::one(), &mut grad);
    }
    grad
}
