//! Regression and rank-agreement metrics.
//!
//! Correlations come back as `Option<f64>`; `None` means the value is
//! undefined because one of the inputs is constant.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions vs {} targets",
            pred.len(),
            y.len()
        )));
    }
    if pred.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} samples, got {}",
            pred.len()
        )));
    }
    if pred.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input contains NaN or infinity".into()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(pred, y, 1)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(pred, y, 1)?;
    let mse = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(pred: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(pred, y, 2)?;
    Ok(pearson_unchecked(pred, y))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub fn spearman(pred: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(pred, y, 2)?;
    Ok(pearson_unchecked(&average_ranks(pred), &average_ranks(y)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kendall {
    /// Tie-corrected coefficient.
    pub tau_b: Option<f64>,
    /// `(n_c − n_d) / C(n, 2)`, only when neither input has ties.
    pub tau_a: Option<f64>,
}

/// Number of tied pairs among runs of equal keys in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    if !sorted.is_empty() {
        total += run * (run - 1) / 2;
    }
    total
}

/// Stable merge sort of `v`, returning the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_counting_swaps(l, bl) + sort_counting_swaps(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau in O(n log n) by sorting on the first argument and counting
/// inversions in the second.
pub fn kendall(pred: &[f64], y: &[f64]) -> Result<Kendall> {
    check_pair(pred, y, 2)?;
    let n = pred.len() as u64;
    let mut pairs: Vec<(f64, f64)> = pred.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tx = tied_pairs(&xs);
    let txy = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let ty = tied_pairs(&ys);
    let n0 = n * (n - 1) / 2;
    // concordant minus discordant pairs
    let num = n0 as i128 - tx as i128 - ty as i128 + txy as i128 - 2 * swaps as i128;
    let (dx, dy) = (n0 - tx, n0 - ty);
    let tau_b = if dx == 0 || dy == 0 {
        None
    } else {
        Some((num as f64 / ((dx as f64).sqrt() * (dy as f64).sqrt())).clamp(-1.0, 1.0))
    };
    let tau_a = (tx == 0 && ty == 0).then(|| num as f64 / n0 as f64);
    Ok(Kendall { tau_b, tau_a })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelMetrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub kendall_tau_a: Option<f64>,
}

impl LevelMetrics {
    /// Needs at least one sample; correlations stay undefined below two.
    pub fn compute(pred: &[f64], y: &[f64]) -> Result<Self> {
        let (mae, rmse) = (mae(pred, y)?, rmse(pred, y)?);
        let (pearson, spearman, k) = if pred.len() >= 2 {
            (pearson(pred, y)?, spearman(pred, y)?, kendall(pred, y)?)
        } else {
            (
                None,
                None,
                Kendall {
                    tau_b: None,
                    tau_a: None,
                },
            )
        };
        Ok(LevelMetrics {
            n: pred.len(),
            mae,
            rmse,
            pearson,
            spearman,
            kendall: k.tau_b,
            kendall_tau_a: k.tau_a,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub cell: LevelMetrics,
    pub grid: LevelMetrics,
}

impl MetricReport {
    pub fn compute(cell_pred: &[f64], cell_y: &[f64], grid_pred: &[f64], grid_y: &[f64]) -> Result<Self> {
        Ok(MetricReport {
            cell: LevelMetrics::compute(cell_pred, cell_y)?,
            grid: LevelMetrics::compute(grid_pred, grid_y)?,
        })
    }

    /// Mean of cell and grid Spearman; undefined values count as 0.
    pub fn mean_spearman(&self) -> f64 {
        (self.cell.spearman.unwrap_or(0.0) + self.grid.spearman.unwrap_or(0.0)) / 2.0
    }

    pub fn to_text(&self) -> String {
        fn fmt(v: Option<f64>) -> String {
            v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
        }
        let mut s = format!(
            "{:<6} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "level", "n", "mae", "rmse", "pearson", "spearman", "kendall", "tau_a"
        );
        for (name, m) in [("cell", &self.cell), ("grid", &self.grid)] {
            let _ = writeln!(
                s,
                "{:<6} {:>8} {:>10.6} {:>10.6} {:>10} {:>10} {:>10} {:>10}",
                name,
                m.n,
                m.mae,
                m.rmse,
                fmt(m.pearson),
                fmt(m.spearman),
                fmt(m.kendall),
                fmt(m.kendall_tau_a)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_cases() {
        let y = [1.0, 2.0, 4.0];
        assert!((pearson(&y, &y).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson(&neg, &y).unwrap().unwrap() + 1.0).abs() < 1e-15);
        // Σdxdy = 3, Σdx² = 2, Σdy² = 14/3
        let r = pearson(&[1.0, 2.0, 3.0], &y).unwrap().unwrap();
        let expect = 3.0 / (2.0f64.sqrt() * (14.0f64 / 3.0).sqrt());
        assert!((r - expect).abs() < 1e-14, "{r} vs {expect}");
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &y).unwrap(), None);
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_cases() {
        let y = [0.3, -1.0, 2.5, 7.0];
        let mono: Vec<f64> = y.iter().map(|v: &f64| v.exp()).collect();
        assert!((spearman(&mono, &y).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((spearman(&rev, &y).unwrap().unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        // ranks [1.5,1.5,3] vs [1,2,3]
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap().unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn kendall_cases() {
        let k = kendall(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((k.tau_b.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((k.tau_a.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let same = kendall(&[4.0, 1.0, 2.0], &[4.0, 1.0, 2.0]).unwrap();
        assert_eq!(same.tau_b, Some(1.0));
        let tied = kendall(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(tied.tau_a.is_none());
        assert_eq!(kendall(&[2.0, 2.0], &[1.0, 3.0]).unwrap().tau_b, None);
    }

    #[test]
    fn mae_rmse_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 2.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2f64.sqrt());
        assert!(mae(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn report_handles_single_sample() {
        let r = MetricReport::compute(&[0.5], &[0.25], &[0.1, 0.2], &[0.1, 0.3]).unwrap();
        assert_eq!(r.cell.spearman, None);
        assert!((r.grid.spearman.unwrap() - 1.0).abs() < 1e-15);
        assert!(r.to_text().contains("undefined"));
    }
}
