//! Line-delimited JSON persistence for forests: one header line with the
//! hyperparameters, then one line per tree holding its preorder node list.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::forest::{BartHyper, Forest};
use super::tree::{DecisionTree, PreorderNode};
use crate::error::{Result, RiaftError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ForestRecord {
    Header { m: usize, sigma2: f64, hyper: BartHyper },
    Tree { nodes: Vec<PreorderNode> },
}

/// Forest as a self-contained value, suitable for embedding in other records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSnapshot {
    pub sigma2: f64,
    pub hyper: BartHyper,
    pub trees: Vec<Vec<PreorderNode>>,
}

impl ForestSnapshot {
    pub fn of(forest: &Forest) -> Self {
        ForestSnapshot {
            sigma2: forest.sigma2,
            hyper: forest.hyper,
            trees: forest.trees.iter().map(|t| t.preorder()).collect(),
        }
    }

    pub fn to_forest(&self) -> Result<Forest> {
        let trees = self
            .trees
            .iter()
            .map(|nodes| {
                DecisionTree::from_preorder(nodes)
                    .ok_or_else(|| RiaftError::Invariant("malformed tree in forest snapshot".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest::from_parts(self.hyper, trees, self.sigma2))
    }
}

pub fn write_forest<W: Write>(mut w: W, forest: &Forest) -> Result<()> {
    let header = ForestRecord::Header {
        m: forest.m(),
        sigma2: forest.sigma2,
        hyper: forest.hyper,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for tree in &forest.trees {
        serde_json::to_writer(&mut w, &ForestRecord::Tree { nodes: tree.preorder() })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_forest<R: BufRead>(r: R) -> Result<Forest> {
    let mut header = None;
    let mut trees = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ForestRecord>(&line)? {
            ForestRecord::Header { m, sigma2, hyper } => {
                if header.is_some() {
                    return Err(RiaftError::Invariant(format!("second forest header on line {}", lineno + 1)));
                }
                header = Some((m, sigma2, hyper));
            }
            ForestRecord::Tree { nodes } => {
                let tree = DecisionTree::from_preorder(&nodes)
                    .ok_or_else(|| RiaftError::Invariant(format!("malformed tree on line {}", lineno + 1)))?;
                trees.push(tree);
            }
        }
    }
    let (m, sigma2, hyper) = header.ok_or_else(|| RiaftError::Invariant("forest file has no header".into()))?;
    if trees.len() != m {
        return Err(RiaftError::Invariant(format!(
            "forest header declares {m} trees, found {}",
            trees.len()
        )));
    }
    Ok(Forest::from_parts(hyper, trees, sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bart::{init_forest, BartConfig, PredictorKind, Predictors};
    use crate::stats::rng_from_seed;
    use rand::Rng;

    #[test]
    fn forest_roundtrip_is_bit_exact() {
        let mut rng = rng_from_seed(2);
        let n = 80;
        let x = Predictors::new(
            vec!["u".into(), "g".into()],
            vec![PredictorKind::Continuous, PredictorKind::Categorical { n_levels: 3 }],
            vec![
                (0..n).map(|_| rng.random::<f64>() * 1e-3 + 1.0 / 3.0).collect(),
                (0..n).map(|i| (i % 3) as f64).collect(),
            ],
        )
        .unwrap();
        let y: Vec<f64> = (0..n).map(|i| x.value(i, 0) * 1e3 + x.value(i, 1)).collect();
        let mut f = init_forest(7, &y, &BartConfig::default()).unwrap();
        for _ in 0..30 {
            f.backfit_sweep(&x, &y, &mut rng).unwrap();
        }
        let mut buf = Vec::new();
        write_forest(&mut buf, &f).unwrap();
        let back = read_forest(&buf[..]).unwrap();
        assert_eq!(back, f);
        let a = f.predict(&x);
        let b = back.predict(&x);
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        let snap = ForestSnapshot::of(&f);
        let json = serde_json::to_string(&snap).unwrap();
        let again: ForestSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(again.to_forest().unwrap(), f);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let f = init_forest(3, &[0.0, 1.0], &BartConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_forest(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(read_forest(cut.as_bytes()).is_err());
    }
}
