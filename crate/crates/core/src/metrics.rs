//! Multi-label evaluation: subset accuracy, Hamming accuracy, and
//! example-, micro- and macro-averaged F1.

use std::fmt::Write as _;

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl LabelConfusion {
    /// `2tp / (2tp + fp + fn)`, with `0/0 = 0`.
    pub fn f1<T: Scalar>(&self) -> T {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            T::zero()
        } else {
            T::from_u64(2 * self.tp).unwrap() / T::from_u64(denom).unwrap()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub acc: T,
    pub ha: T,
    pub ebf1: T,
    pub mif1: T,
    pub maf1: T,
    pub per_label: Vec<LabelConfusion>,
}

fn check_shapes(truth: &Array2<bool>, pred: &Array2<bool>) -> Result<()> {
    if truth.dim() != pred.dim() {
        return Err(Error::Dimension(format!(
            "truth is {:?} but predictions are {:?}",
            truth.dim(),
            pred.dim()
        )));
    }
    Ok(())
}

pub fn confusion_per_label(
    truth: &Array2<bool>,
    pred: &Array2<bool>,
) -> Result<Vec<LabelConfusion>> {
    check_shapes(truth, pred)?;
    Ok(truth
        .axis_iter(Axis(1))
        .zip(pred.axis_iter(Axis(1)))
        .map(|(t, p)| {
            let mut c = LabelConfusion::default();
            Zip::from(&t).and(&p).for_each(|&y, &yh| match (y, yh) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            });
            c
        })
        .collect())
}

/// All five metrics plus per-label confusion counts.
///
/// Requires `M ≥ 1` and a non-empty label set in every truth row.
pub fn compute_all<T: Scalar>(
    truth: &Array2<bool>,
    pred: &Array2<bool>,
) -> Result<MetricsReport<T>> {
    check_shapes(truth, pred)?;
    let (m, l) = truth.dim();
    if m == 0 || l == 0 {
        return Err(Error::Labels(
            "metrics need at least one sample and label".into(),
        ));
    }
    let per_label = confusion_per_label(truth, pred)?;

    let mut exact = 0usize;
    let mut ebf1 = T::zero();
    for (i, (t, p)) in truth.rows().into_iter().zip(pred.rows()).enumerate() {
        let (mut inter, mut nt, mut np, mut agree) = (0u64, 0u64, 0u64, 0usize);
        Zip::from(&t).and(&p).for_each(|&y, &yh| {
            inter += u64::from(y && yh);
            nt += u64::from(y);
            np += u64::from(yh);
            agree += usize::from(y == yh);
        });
        if nt == 0 {
            return Err(Error::Labels(format!("truth row {i} is empty")));
        }
        if agree == l {
            exact += 1;
        }
        ebf1 += T::from_u64(2 * inter).unwrap() / T::from_u64(nt + np).unwrap();
    }
    let mf = T::from_usize_lossy(m);
    let lf = T::from_usize_lossy(l);

    let agree_total: u64 = per_label.iter().map(|c| c.tp + c.tn).sum();
    let (tp, fp, fn_) = per_label.iter().fold((0u64, 0u64, 0u64), |acc, c| {
        (acc.0 + c.tp, acc.1 + c.fp, acc.2 + c.fn_)
    });
    let mif1 = LabelConfusion { tp, fp, fn_, tn: 0 }.f1();
    let maf1 = per_label.iter().map(|c| c.f1::<T>()).sum::<T>() / lf;

    Ok(MetricsReport {
        acc: T::from_usize_lossy(exact) / mf,
        ha: T::from_u64(agree_total).unwrap() / (mf * lf),
        ebf1: ebf1 / mf,
        mif1,
        maf1,
        per_label,
    })
}

/// Aligned plain-text table, one row per named report.
pub fn text_table<T: Scalar>(rows: &[(&str, &MetricsReport<T>)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}",
        "method", "ACC", "HA", "ebF1", "miF1", "maF1"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}",
            name,
            r.acc.as_f64(),
            r.ha.as_f64(),
            r.ebf1.as_f64(),
            r.mif1.as_f64(),
            r.maf1.as_f64()
        );
    }
    out
}
