use serde::{Deserialize, Serialize};

use crate::error::{Result, RiaftError};

/// Root mean squared difference between estimated and true individual
/// effects.
pub fn metric_pehe(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(RiaftError::Dimension(format!(
            "{} estimates against {} true effects",
            est.len(),
            truth.len()
        )));
    }
    if est.is_empty() {
        return Err(RiaftError::EmptyResponse);
    }
    let ss: f64 = est.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok((ss / est.len() as f64).sqrt())
}

/// Half-open box `(lo, hi]` in the plane of the first two propensity
/// scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsBox {
    pub gps1: (f64, f64),
    pub gps2: (f64, f64),
}

impl GpsBox {
    pub fn contains(&self, g1: f64, g2: f64) -> bool {
        g1 > self.gps1.0 && g1 <= self.gps1.1 && g2 > self.gps2.0 && g2 <= self.gps2.1
    }
}

/// The 40 default subclasses with their reference occupancy out of 2000.
pub const DEFAULT_GPS_SUBCLASSES: [((f64, f64), (f64, f64), usize); 40] = [
    ((0.0, 0.1), (0.0, 1.0), 60),
    ((0.0, 0.2), (0.0, 0.25), 52),
    ((0.0, 0.2), (0.25, 0.5), 48),
    ((0.0, 0.2), (0.5, 0.75), 52),
    ((0.0, 0.2), (0.75, 1.0), 48),
    ((0.2, 0.4), (0.0, 0.2), 44),
    ((0.2, 0.4), (0.2, 0.4), 45),
    ((0.2, 0.4), (0.4, 0.6), 56),
    ((0.2, 0.4), (0.6, 0.8), 42),
    ((0.2, 0.4), (0.8, 1.0), 41),
    ((0.4, 0.5), (0.0, 0.1), 42),
    ((0.4, 0.5), (0.1, 0.3), 44),
    ((0.4, 0.5), (0.3, 0.4), 46),
    ((0.4, 0.5), (0.4, 0.5), 54),
    ((0.4, 0.5), (0.5, 0.6), 56),
    ((0.4, 0.5), (0.6, 0.7), 53),
    ((0.4, 0.5), (0.7, 1.0), 50),
    ((0.5, 0.6), (0.0, 0.2), 42),
    ((0.5, 0.6), (0.2, 0.3), 44),
    ((0.5, 0.6), (0.3, 0.4), 48),
    ((0.5, 0.6), (0.4, 0.5), 56),
    ((0.5, 0.6), (0.5, 0.6), 57),
    ((0.5, 0.6), (0.6, 0.7), 46),
    ((0.5, 0.6), (0.7, 0.8), 44),
    ((0.5, 0.6), (0.8, 1.0), 45),
    ((0.6, 0.7), (0.0, 0.3), 48),
    ((0.6, 0.7), (0.3, 0.5), 45),
    ((0.6, 0.7), (0.5, 0.6), 55),
    ((0.6, 0.7), (0.6, 0.7), 52),
    ((0.6, 0.7), (0.7, 1.0), 50),
    ((0.7, 0.8), (0.0, 0.3), 45),
    ((0.7, 0.8), (0.3, 0.5), 54),
    ((0.7, 0.8), (0.5, 0.7), 52),
    ((0.7, 0.8), (0.7, 1.0), 46),
    ((0.8, 0.9), (0.0, 0.4), 57),
    ((0.8, 0.9), (0.4, 0.6), 48),
    ((0.8, 0.9), (0.6, 1.0), 58),
    ((0.9, 1.0), (0.0, 0.4), 63),
    ((0.9, 1.0), (0.4, 0.6), 52),
    ((0.9, 1.0), (0.6, 1.0), 60),
];

pub fn default_gps_boxes() -> Vec<GpsBox> {
    DEFAULT_GPS_SUBCLASSES
        .iter()
        .map(|&(gps1, gps2, _)| GpsBox { gps1, gps2 })
        .collect()
}

/// Index of the first box containing `(g1, g2)`. The second through fifth
/// default boxes overlap the first; first match keeps the assignment
/// disjoint.
pub fn gps_subclass(boxes: &[GpsBox], g1: f64, g2: f64) -> Option<usize> {
    boxes.iter().position(|b| b.contains(g1, g2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassError {
    /// 1-based subclass id.
    pub subclass: usize,
    pub n: usize,
    pub mean_est: f64,
    pub mean_truth: f64,
    /// Relative bias, or absolute bias when `absolute` is set.
    pub bias: f64,
    /// The true mean was too close to zero for a relative bias.
    pub absolute: bool,
    /// Squared error of the subclass-averaged effect; its root over
    /// replicates is the subclass RMSE.
    pub sq_error: f64,
}

/// Per-subclass bias of the subgroup-averaged effect. Empty subclasses are
/// left out.
pub fn metric_bias_rmse_by_gps(est: &[f64], truth: &[f64], gps: &[[f64; 3]], boxes: &[GpsBox]) -> Result<Vec<SubclassError>> {
    if est.len() != truth.len() || est.len() != gps.len() {
        return Err(RiaftError::Dimension("estimates, truth and scores must align".into()));
    }
    let mut sums = vec![(0usize, 0.0, 0.0); boxes.len()];
    for i in 0..est.len() {
        if let Some(h) = gps_subclass(boxes, gps[i][0], gps[i][1]) {
            sums[h].0 += 1;
            sums[h].1 += est[i];
            sums[h].2 += truth[i];
        }
    }
    Ok(sums
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 > 0)
        .map(|(h, &(n, se, st))| {
            let me = se / n as f64;
            let mt = st / n as f64;
            let absolute = mt.abs() < 1e-8;
            SubclassError {
                subclass: h + 1,
                n,
                mean_est: me,
                mean_truth: mt,
                bias: if absolute { me - mt } else { (me - mt) / mt.abs() },
                absolute,
                sq_error: (me - mt).powi(2),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `None` when nothing was selected.
    pub precision: Option<f64>,
    /// `None` when there are no useful covariates.
    pub recall: Option<f64>,
    pub f1: f64,
    /// Share of noise covariates selected; `None` without noise covariates.
    pub type_i: Option<f64>,
}

/// Scores a selected set against the useful covariates out of `n_total`.
pub fn metric_selection(selected: &[usize], useful: &[usize], n_total: usize) -> SelectionMetrics {
    let is_sel = |j: usize| selected.contains(&j);
    let tp = useful.iter().filter(|&&j| is_sel(j)).count();
    let fn_ = useful.len() - tp;
    let noise: Vec<usize> = (0..n_total).filter(|j| !useful.contains(j)).collect();
    let fp = noise.iter().filter(|&&j| is_sel(j)).count();
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (!useful.is_empty()).then(|| tp as f64 / useful.len() as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    };
    SelectionMetrics {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        type_i: (!noise.is_empty()).then(|| fp as f64 / noise.len() as f64),
    }
}

/// Harrell-type concordance for predicted survival probabilities: a
/// comparable pair has a strictly shorter observed event time, and it is
/// concordant when that individual has the lower predicted survival. Ties
/// in prediction count one half.
pub fn metric_concordance(pred: &[f64], time: &[f64], event: &[bool]) -> Result<f64> {
    if pred.len() != time.len() || pred.len() != event.len() {
        return Err(RiaftError::Dimension("predictions and outcomes must align".into()));
    }
    let n = pred.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let (mut conc, mut comparable) = (0.0, 0u64);
    for (pos, &i) in order.iter().enumerate() {
        if !event[i] {
            continue;
        }
        for &j in &order[pos + 1..] {
            if time[j] <= time[i] {
                continue;
            }
            comparable += 1;
            if pred[i] < pred[j] {
                conc += 1.0;
            } else if pred[i] == pred[j] {
                conc += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(RiaftError::Invariant("no comparable pairs".into()));
    }
    Ok(conc / comparable as f64)
}
