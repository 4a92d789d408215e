//! Normality, omnibus and pairwise nonparametric tests over per-subject
//! accuracy vectors.

mod shapiro;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};
use thiserror::Error;

pub use shapiro::{shapiro_wilk, SHAPIRO_MAX_N};

/// Largest count of nonzero differences for which Wilcoxon p is exact.
pub const WILCOXON_EXACT_MAX: usize = 12;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatError {
    /// The test is undefined for this input.
    #[error("test: {0}")]
    Test(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, StatError>;

/// Ranks starting at 1; ties share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the groups of equal values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.chunk_by(|a, b| a == b).map(<[f64]>::len).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

/// Friedman test over `blocks` (rows, e.g. subjects) of `k` treatments
/// (columns, e.g. models), tie-corrected. Fully tied data gives χ² = 0, p = 1.
pub fn friedman(blocks: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = blocks.len();
    let k = blocks.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(StatError::Test(format!(
            "Friedman needs at least 2 treatments, got {k}"
        )));
    }
    if n < 2 {
        return Err(StatError::Test(format!(
            "Friedman needs at least 2 blocks, got {n}"
        )));
    }
    if let Some(i) = blocks.iter().position(|b| b.len() != k) {
        return Err(StatError::Protocol(format!(
            "block {i} has {} treatments, expected {k}",
            blocks[i].len()
        )));
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for block in blocks {
        for (j, r) in average_ranks(block).into_iter().enumerate() {
            rank_sums[j] += r;
        }
        ties += tie_groups(block)
            .iter()
            .map(|&t| (t * t * t - t) as f64)
            .sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let correction = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    let df = k - 1;
    if correction <= 0.0 {
        return Ok(FriedmanResult {
            chi2: 0.0,
            df,
            p: 1.0,
        });
    }
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let chi2 = ((12.0 / (nf * kf * (kf + 1.0)) * ss - 3.0 * nf * (kf + 1.0)) / correction).max(0.0);
    let dist = ChiSquared::new(df as f64).expect("df ≥ 1");
    Ok(FriedmanResult {
        chi2,
        df,
        p: dist.sf(chi2).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Rank sum of the negative differences `x − y`.
    pub statistic: f64,
    /// Nonzero differences that entered the test.
    pub n: usize,
    pub p: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on paired samples, zero differences
/// dropped. The p-value is exact for up to [`WILCOXON_EXACT_MAX`] nonzero
/// differences and uses the tie-corrected normal approximation above.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(StatError::Protocol(format!(
            "paired samples of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return Err(StatError::Test("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_minus: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v < 0.0)
        .map(|(r, _)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    if n <= WILCOXON_EXACT_MAX {
        // distribution of the negative rank sum over all 2^n sign patterns,
        // in half-rank units so tied ranks stay integral
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max_sum + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let centre = max_sum as i64;
        let observed = (2 * (2.0 * w_minus).round() as i64 - centre).abs();
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|&(s, _)| (2 * s as i64 - centre).abs() >= observed)
            .map(|(_, c)| c)
            .sum();
        return Ok(WilcoxonResult {
            statistic: w_minus,
            n,
            p: (extreme as f64 / 2f64.powi(n as i32)).min(1.0),
            exact: true,
        });
    }
    let nf = n as f64;
    let ties: f64 = tie_groups(&abs)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let z = (w_minus - total / 2.0) / var.sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    Ok(WilcoxonResult {
        statistic: w_minus,
        n,
        p: p.clamp(0.0, 1.0),
        exact: false,
    })
}

/// Two-sided exact sign test on paired samples, zero differences dropped.
/// The statistic is the count of negative differences.
pub fn sign_test(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(StatError::Protocol(format!(
            "paired samples of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|v| *v != 0.0)
        .collect();
    if d.is_empty() {
        return Err(StatError::Test("all paired differences are zero".into()));
    }
    let n = d.len() as u64;
    let neg = d.iter().filter(|v| **v < 0.0).count() as u64;
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    let lower = dist.cdf(neg);
    let upper = if neg == 0 { 1.0 } else { dist.sf(neg - 1) };
    Ok(WilcoxonResult {
        statistic: neg as f64,
        n: n as usize,
        p: (2.0 * lower.min(upper)).min(1.0),
        exact: true,
    })
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatError::Test(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        running = running.max(((m - i) as f64 * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PostHoc {
    #[default]
    Wilcoxon,
    Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normality {
    pub model: String,
    pub w: Option<f64>,
    pub p: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub a: String,
    pub b: String,
    pub statistic: Option<f64>,
    pub p: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub alpha: f64,
    pub n_subjects: usize,
    pub normality: Vec<Normality>,
    pub friedman: FriedmanResult,
    pub post_hoc: PostHoc,
    /// Empty unless the omnibus test rejects at `alpha`.
    pub pairwise: Vec<PairwiseResult>,
}

/// Shapiro-Wilk per model, Friedman across models, and Holm-adjusted
/// pairwise tests when the omnibus test rejects. Vectors must be aligned
/// by subject.
pub fn compare_models(
    models: &[(String, Vec<f64>)],
    alpha: f64,
    post_hoc: PostHoc,
) -> Result<StatReport> {
    if models.len() < 2 {
        return Err(StatError::Protocol(format!(
            "need at least 2 models, got {}",
            models.len()
        )));
    }
    let n = models[0].1.len();
    if let Some((name, v)) = models.iter().find(|(_, v)| v.len() != n) {
        return Err(StatError::Protocol(format!(
            "{name} has {} subjects, {} has {n}",
            v.len(),
            models[0].0
        )));
    }
    let normality = models
        .iter()
        .map(|(name, v)| match shapiro_wilk(v) {
            Ok((w, p)) => Normality {
                model: name.clone(),
                w: Some(w),
                p: Some(p),
                note: None,
            },
            Err(e) => Normality {
                model: name.clone(),
                w: None,
                p: None,
                note: Some(e.to_string()),
            },
        })
        .collect();
    let blocks: Vec<Vec<f64>> = (0..n)
        .map(|i| models.iter().map(|(_, v)| v[i]).collect())
        .collect();
    let omnibus = friedman(&blocks)?;
    let mut pairwise = Vec::new();
    if omnibus.p < alpha {
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                let (a, b) = (&models[i], &models[j]);
                let test = match post_hoc {
                    PostHoc::Wilcoxon => wilcoxon_signed_rank(&a.1, &b.1),
                    PostHoc::Sign => sign_test(&a.1, &b.1),
                };
                let (statistic, p, note) = match test {
                    Ok(r) => (Some(r.statistic), Some(r.p), None),
                    Err(StatError::Test(_)) => {
                        (None, None, Some("no difference detectable".to_string()))
                    }
                    Err(e) => return Err(e),
                };
                pairwise.push(PairwiseResult {
                    a: a.0.clone(),
                    b: b.0.clone(),
                    statistic,
                    p,
                    p_adjusted: None,
                    note,
                });
            }
        }
        let raw: Vec<f64> = pairwise.iter().filter_map(|r| r.p).collect();
        let mut adjusted = holm_adjust(&raw)?.into_iter();
        for r in pairwise.iter_mut().filter(|r| r.p.is_some()) {
            r.p_adjusted = adjusted.next();
        }
    }
    Ok(StatReport {
        alpha,
        n_subjects: n,
        normality,
        friedman: omnibus,
        post_hoc,
        pairwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistent_ordering_gives_chi2_twenty() {
        let blocks: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, i as f64 + 1.0, i as f64 + 5.0])
            .collect();
        let r = friedman(&blocks).unwrap();
        assert!((r.chi2 - 20.0).abs() < 1e-12);
        assert_eq!(r.df, 2);
    }

    #[test]
    fn full_ties_give_no_evidence() {
        let r = friedman(&vec![vec![0.5; 3]; 6]).unwrap();
        assert_eq!((r.chi2, r.p), (0.0, 1.0));
        assert!(friedman(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn all_positive_differences() {
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p - 0.0625).abs() < 1e-15);
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn holm_step_down() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]).unwrap();
        for (a, e) in adj.iter().zip([0.03, 0.06, 0.06]) {
            assert!((a - e).abs() < 1e-15);
        }
        assert_eq!(holm_adjust(&[0.2]).unwrap(), [0.2]);
        assert_eq!(holm_adjust(&[1.0, 1.0]).unwrap(), [1.0, 1.0]);
    }

    #[test]
    fn sign_test_small_case() {
        let r = sign_test(&[2.0, 3.0, 4.0, 0.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        // 3 positive, 1 negative of 4: 2·P(X ≤ 1) = 2·5/16
        assert_eq!(r.statistic, 1.0);
        assert!((r.p - 0.625).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }
}
