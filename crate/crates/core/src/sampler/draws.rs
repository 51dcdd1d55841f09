use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::centering::CenteringConstants;
use super::chain::ChainConfig;
use crate::bart::{ForestSnapshot, Predictors};
use crate::error::{Result, RiaftError};

/// Run-level metadata stored once per draw file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawHeader {
    pub config: ChainConfig,
    pub centering: CenteringConstants,
    pub predictor_names: Vec<String>,
    /// Predictor column holding the treatment arm, if any.
    pub treatment_col: Option<usize>,
    pub n_arms: usize,
    pub n_rows: usize,
    pub n_clusters: usize,
}

/// One kept iteration. Function values are on the uncentered log-time
/// scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iter: usize,
    pub b: Vec<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub alpha: Vec<f64>,
    pub vip: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
    /// Predictions with every row's treatment set to each arm in turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_arm: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<ForestSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub header: DrawHeader,
    pub draws: Vec<Draw>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DrawRecord {
    Header(DrawHeader),
    Draw(Draw),
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn mu_aft(&self) -> f64 {
        self.header.centering.mu_aft
    }

    /// Stored training-row predictions, one slice per draw.
    pub fn f_draws(&self) -> Result<Vec<&[f64]>> {
        self.draws
            .iter()
            .map(|d| d.f.as_deref().ok_or(RiaftError::MissingDraws("function values")))
            .collect()
    }

    /// Stored counterfactual predictions for `arm` (0-based), one slice per
    /// draw.
    pub fn arm_draws(&self, arm: usize) -> Result<Vec<&[f64]>> {
        if arm >= self.header.n_arms {
            return Err(RiaftError::Config(format!(
                "arm {} out of range 1..={}",
                arm + 1,
                self.header.n_arms
            )));
        }
        self.draws
            .iter()
            .map(|d| {
                d.f_arm
                    .as_ref()
                    .map(|v| v[arm].as_slice())
                    .ok_or(RiaftError::MissingDraws("counterfactual predictions"))
            })
            .collect()
    }

    pub fn vip_rows(&self) -> Vec<&[f64]> {
        self.draws.iter().map(|d| d.vip.as_slice()).collect()
    }

    /// Posterior mean of the stored training-row predictions.
    pub fn posterior_mean_f(&self) -> Result<Vec<f64>> {
        let rows = self.f_draws()?;
        let n = self.header.n_rows;
        let mut out = vec![0.0; n];
        for r in &rows {
            for (o, v) in out.iter_mut().zip(r.iter()) {
                *o += v;
            }
        }
        let d = rows.len().max(1) as f64;
        out.iter_mut().for_each(|v| *v /= d);
        Ok(out)
    }

    pub fn posterior_mean_b(&self) -> Vec<f64> {
        let k = self.header.n_clusters;
        let mut out = vec![0.0; k];
        for d in &self.draws {
            for (o, v) in out.iter_mut().zip(&d.b) {
                *o += v;
            }
        }
        let n = self.draws.len().max(1) as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &DrawRecord::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for d in &self.draws {
            serde_json::to_writer(&mut w, &DrawRecord::Draw(d.clone()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut draws = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<DrawRecord>(&line)? {
                DrawRecord::Header(h) => {
                    if header.replace(h).is_some() {
                        return Err(RiaftError::Invariant(format!(
                            "second draw header on line {}",
                            lineno + 1
                        )));
                    }
                }
                DrawRecord::Draw(d) => draws.push(d),
            }
        }
        let header = header.ok_or_else(|| RiaftError::Invariant("draw file has no header".into()))?;
        Ok(PosteriorDraws { header, draws })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}

/// Per-draw predictions `f(a, x) + mu_aft` for the rows of `x`, using the
/// persisted forests. With `arm` set, every row's treatment is overridden.
pub fn predict_posterior(draws: &PosteriorDraws, x: &Predictors, arm: Option<usize>) -> Result<Vec<Vec<f64>>> {
    if x.names() != draws.header.predictor_names.as_slice() {
        return Err(RiaftError::Schema(format!(
            "expected predictors {:?}, got {:?}",
            draws.header.predictor_names,
            x.names()
        )));
    }
    let col = match arm {
        Some(a) => {
            let col = draws
                .header
                .treatment_col
                .ok_or_else(|| RiaftError::Config("model was fitted without a treatment".into()))?;
            if a >= draws.header.n_arms {
                return Err(RiaftError::Config(format!("arm {} out of range", a + 1)));
            }
            Some((col, a as f64))
        }
        None => None,
    };
    let mu = draws.mu_aft();
    draws
        .draws
        .iter()
        .map(|d| {
            let snap = d.forest.as_ref().ok_or(RiaftError::MissingDraws("forests"))?;
            let forest = snap.to_forest()?;
            let mut p = match col {
                Some((c, v)) => forest.predict_override(x, c, v),
                None => forest.predict(x),
            };
            p.iter_mut().for_each(|v| *v += mu);
            Ok(p)
        })
        .collect()
}
