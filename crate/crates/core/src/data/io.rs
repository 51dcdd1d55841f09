//! CSV ingestion and output. Missing covariate cells are empty or `NA`;
//! categorical level labels live in a JSON codebook sidecar next to the CSV.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Covariate, SurvivalDataset};
use crate::error::{Result, RiaftError};

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub time: String,
    pub event: String,
    pub cluster: String,
    /// Used when the column is present in the header.
    pub treatment: Option<String>,
    /// Columns forced to categorical even if every value parses as a number.
    pub categorical: Vec<String>,
    pub codebook: Option<Codebook>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            time: "y".into(),
            event: "delta".into(),
            cluster: "cluster".into(),
            treatment: Some("a".into()),
            categorical: Vec::new(),
            codebook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookColumn {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Codebook {
    pub columns: Vec<CodebookColumn>,
}

impl Codebook {
    pub fn from_dataset(ds: &SurvivalDataset) -> Self {
        Codebook {
            columns: ds
                .covariates
                .iter()
                .map(|c| CodebookColumn {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                })
                .collect(),
        }
    }

    fn kind_of(&self, name: &str) -> Option<&ColumnKind> {
        self.columns.iter().find(|c| c.name == name).map(|c| &c.kind)
    }
}

pub fn codebook_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("codebook.json")
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn parse_label(kind: &'static str, row: usize, column: &str, cell: &str) -> Result<i64> {
    let t = cell.trim();
    if is_missing(t) {
        return Err(RiaftError::MissingRequired {
            row,
            column: column.to_string(),
        });
    }
    let v: f64 = t.parse().map_err(|_| RiaftError::Parse {
        row,
        column: column.to_string(),
        value: t.to_string(),
    })?;
    if v.fract() != 0.0 {
        return Err(RiaftError::UnknownLabel {
            kind,
            row,
            label: v as i64,
            max: 0,
        });
    }
    Ok(v as i64)
}

fn labels_to_codes(kind: &'static str, labels: &[(usize, i64)]) -> Result<(Vec<usize>, usize)> {
    let max = labels.iter().map(|&(_, l)| l).max().unwrap_or(0).max(0) as usize;
    let mut seen = vec![false; max];
    let mut out = Vec::with_capacity(labels.len());
    for &(row, l) in labels {
        if l < 1 {
            return Err(RiaftError::UnknownLabel {
                kind,
                row,
                label: l,
                max,
            });
        }
        seen[(l - 1) as usize] = true;
        out.push((l - 1) as usize);
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(RiaftError::EmptyGroup { kind, label: k + 1 });
    }
    Ok((out, max))
}

fn sorted_levels(cells: &[&str]) -> Vec<String> {
    let set: BTreeSet<&str> = cells.iter().copied().filter(|c| !is_missing(c)).collect();
    let mut levels: Vec<String> = set.into_iter().map(|s| s.trim().to_string()).collect();
    levels.dedup();
    if levels.iter().all(|l| l.parse::<f64>().is_ok()) {
        levels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    levels
}

/// Loads and validates a survival CSV.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let time_col = find(&schema.time).ok_or_else(|| RiaftError::MissingColumn(schema.time.clone()))?;
    let event_col =
        find(&schema.event).ok_or_else(|| RiaftError::MissingColumn(schema.event.clone()))?;
    let cluster_col =
        find(&schema.cluster).ok_or_else(|| RiaftError::MissingColumn(schema.cluster.clone()))?;
    let treat_col = schema.treatment.as_deref().and_then(find);
    let cov_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != time_col && j != event_col && j != cluster_col && Some(j) != treat_col)
        .collect();

    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(RiaftError::EmptyDataset);
    }

    let mut time = Vec::with_capacity(records.len());
    let mut event = Vec::with_capacity(records.len());
    let mut clusters = Vec::with_capacity(records.len());
    let mut arms = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let cell = |j: usize| rec.get(j).unwrap_or("").trim();
        let y = cell(time_col);
        if is_missing(y) {
            return Err(RiaftError::MissingRequired {
                row,
                column: schema.time.clone(),
            });
        }
        let y: f64 = y.parse().map_err(|_| RiaftError::Parse {
            row,
            column: schema.time.clone(),
            value: y.to_string(),
        })?;
        if !(y > 0.0 && y.is_finite()) {
            return Err(RiaftError::NonPositiveTime { row });
        }
        time.push(y);
        let d = cell(event_col);
        event.push(match d.parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => {
                return Err(RiaftError::InvalidEvent {
                    row,
                    value: d.to_string(),
                })
            }
        });
        clusters.push((row, parse_label("cluster", row, &schema.cluster, cell(cluster_col))?));
        if let Some(tc) = treat_col {
            let name = schema.treatment.as_deref().unwrap_or("a");
            arms.push((row, parse_label("treatment", row, name, cell(tc))?));
        }
    }
    let (cluster, _) = labels_to_codes("cluster", &clusters)?;
    let treatment = match treat_col {
        Some(_) => Some(labels_to_codes("treatment", &arms)?.0),
        None => None,
    };

    let mut covariates = Vec::with_capacity(cov_cols.len());
    for &j in &cov_cols {
        let name = header[j].clone();
        let cells: Vec<&str> = records.iter().map(|r| r.get(j).unwrap_or("").trim()).collect();
        let numeric = cells
            .iter()
            .all(|c| is_missing(c) || c.parse::<f64>().is_ok());
        let kind = match schema.codebook.as_ref().and_then(|cb| cb.kind_of(&name)) {
            Some(k) => k.clone(),
            None if numeric && !schema.categorical.contains(&name) => ColumnKind::Continuous,
            None => ColumnKind::Categorical {
                levels: sorted_levels(&cells),
            },
        };
        let mut values = Vec::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if is_missing(c) {
                values.push(f64::NAN);
                continue;
            }
            let v = match &kind {
                ColumnKind::Continuous => c.parse::<f64>().map_err(|_| RiaftError::Parse {
                    row: i + 1,
                    column: name.clone(),
                    value: c.to_string(),
                })?,
                ColumnKind::Categorical { levels } => {
                    levels.iter().position(|l| l == c).ok_or_else(|| RiaftError::Parse {
                        row: i + 1,
                        column: name.clone(),
                        value: c.to_string(),
                    })? as f64
                }
            };
            values.push(v);
        }
        covariates.push(Covariate { name, kind, values });
    }
    SurvivalDataset::new(time, event, cluster, treatment, covariates)
}

/// Loads a CSV, picking up the codebook sidecar when one exists.
pub fn read_dataset(path: &Path) -> Result<SurvivalDataset> {
    let mut schema = Schema::default();
    let cb = codebook_path(path);
    if cb.exists() {
        schema.codebook = Some(read_codebook(&cb)?);
    }
    load_dataset(path, &schema)
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, codebook)?;
    writeln!(w)?;
    Ok(())
}

fn format_cell(kind: &ColumnKind, v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    match kind {
        ColumnKind::Continuous => format!("{v}"),
        ColumnKind::Categorical { levels } => levels[v as usize].clone(),
    }
}

/// Writes the dataset CSV plus its codebook sidecar.
pub fn write_dataset(path: &Path, ds: &SurvivalDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["y".to_string(), "delta".into(), "cluster".into()];
    if ds.treatment.is_some() {
        header.push("a".into());
    }
    header.extend(ds.covariates.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let mut rec = vec![
            format!("{}", ds.time[i]),
            if ds.event[i] { "1" } else { "0" }.to_string(),
            (ds.cluster[i] + 1).to_string(),
        ];
        if let Some(a) = &ds.treatment {
            rec.push((a[i] + 1).to_string());
        }
        rec.extend(ds.covariates.iter().map(|c| format_cell(&c.kind, c.values[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_codebook(&codebook_path(path), &Codebook::from_dataset(ds))
}
