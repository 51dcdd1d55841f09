use std::io::Write;

use serde::{Deserialize, Serialize};

use super::iste::{AteEstimate, IsteEstimate};
use super::subgroups::{Condition, SubgroupRule};
use crate::error::Result;

/// Per-individual CSV: `row,cluster,mean,lower,upper` with 1-based labels.
pub fn write_iste_csv<W: Write>(w: W, iste: &IsteEstimate, cluster: &[usize]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "cluster", "mean", "lower", "upper"])?;
    for (i, s) in iste.summary.iter().enumerate() {
        out.write_record([
            (i + 1).to_string(),
            cluster.get(i).map_or(String::new(), |c| (c + 1).to_string()),
            s.mean.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One-line CSV table of average effects, one row per pair.
pub fn write_ate_csv<W: Write>(w: W, ates: &[AteEstimate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["arm_a", "arm_b", "mean", "lower", "upper", "draws"])?;
    for a in ates {
        out.write_record([
            (a.pair.0 + 1).to_string(),
            (a.pair.1 + 1).to_string(),
            a.summary.mean.to_string(),
            a.summary.lower.to_string(),
            a.summary.upper.to_string(),
            a.draws.len().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub conditions: Vec<Condition>,
    pub rule: String,
    pub n: usize,
    pub effect: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    /// 1-based arms.
    pub arms: (usize, usize),
    pub selected: Vec<String>,
    pub r2_path: Vec<f64>,
    pub rules: Vec<RuleEntry>,
}

impl RuleReport {
    pub fn new(pair: (usize, usize), selected: Vec<String>, r2_path: Vec<f64>, rules: &[SubgroupRule]) -> Self {
        RuleReport {
            arms: (pair.0 + 1, pair.1 + 1),
            selected,
            r2_path,
            rules: rules
                .iter()
                .map(|r| RuleEntry {
                    conditions: r.conditions.clone(),
                    rule: r.describe(),
                    n: r.n,
                    effect: r.effect,
                    lo: r.lower,
                    hi: r.upper,
                })
                .collect(),
        }
    }
}
