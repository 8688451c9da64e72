//! Multi-environment samples and their on-disk formats.
//!
//! Dataset CSV: header `env,X1,...,Xd,Y`, one row per sample, `env` an integer
//! label, numbers written in shortest round-trip decimal form.
//!
//! Ground-truth sidecar: the graph edge-list format followed by
//! `pa_y=<ids>` and `s_star=<ids>` lines (comma separated, possibly empty).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Dag, NodeId, Relation};

/// `n` samples of `(environment label, covariates, target)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    env: Vec<i64>,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    column_names: Vec<String>,
    target_name: String,
    /// Seed the dataset was simulated from, when it was.
    pub seed: Option<u64>,
}

impl Dataset {
    /// `columns` holds one vector per covariate.
    pub fn new(env: Vec<i64>, columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let names = (1..=columns.len()).map(|i| format!("X{i}")).collect();
        Self::with_names(env, columns, y, names, "Y".to_string())
    }

    pub fn with_names(
        env: Vec<i64>,
        columns: Vec<Vec<f64>>,
        y: Vec<f64>,
        column_names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        let n = y.len();
        if env.len() != n {
            return Err(Error::arg(format!("env has {} entries, y has {n}", env.len())));
        }
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::arg(format!("column {i} has {} entries, y has {n}", c.len())));
        }
        if column_names.len() != columns.len() {
            return Err(Error::arg("one name per covariate column is required"));
        }
        Ok(Dataset {
            env,
            columns,
            y,
            column_names,
            target_name,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariates.
    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn env(&self) -> &[i64] {
        &self.env
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    /// Sorted distinct environment labels with the row indices of each.
    pub fn env_groups(&self) -> Vec<(i64, Vec<usize>)> {
        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &e) in self.env.iter().enumerate() {
            groups.entry(e).or_default().push(i);
        }
        groups.into_iter().collect()
    }

    pub fn env_count(&self) -> usize {
        self.env.iter().collect::<BTreeSet<_>>().len()
    }

    /// Rows `idx`, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            env: idx.iter().map(|&i| self.env[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            column_names: self.column_names.clone(),
            target_name: self.target_name.clone(),
            seed: self.seed,
        }
    }

    /// Same samples with new environment labels.
    pub fn with_env(&self, env: Vec<i64>) -> Result<Dataset> {
        if env.len() != self.n() {
            return Err(Error::arg("relabelled env must have one entry per sample"));
        }
        Ok(Dataset { env, ..self.clone() })
    }

    pub(crate) fn push_column(&mut self, name: String, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.n());
        self.columns.push(values);
        self.column_names.push(name);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = Vec::with_capacity(self.d() + 2);
        header.push("env".to_string());
        header.extend(self.column_names.iter().cloned());
        header.push(self.target_name.clone());
        w.write_record(&header).map_err(csv_io)?;
        let mut row: Vec<String> = Vec::with_capacity(self.d() + 2);
        for i in 0..self.n() {
            row.clear();
            row.push(self.env[i].to_string());
            row.extend(self.columns.iter().map(|c| format_f64(c[i])));
            row.push(format_f64(self.y[i]));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Parses the dataset CSV format; errors carry the 1-based line number.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = r.records();
        let header = match records.next() {
            Some(rec) => rec.map_err(csv_parse)?,
            None => return Err(Error::parse(1, "empty file")),
        };
        if header.len() < 2 || &header[0] != "env" {
            return Err(Error::parse(
                1,
                "header must start with `env` and end with the target column",
            ));
        }
        let d = header.len() - 2;
        let column_names: Vec<String> = header.iter().skip(1).take(d).map(str::to_string).collect();
        let target_name = header[header.len() - 1].to_string();

        let mut env = Vec::new();
        let mut columns = vec![Vec::new(); d];
        let mut y = Vec::new();
        for rec in records {
            let rec = rec.map_err(csv_parse)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != d + 2 {
                return Err(Error::parse(
                    line,
                    format!("expected {} fields, found {}", d + 2, rec.len()),
                ));
            }
            let label: i64 = rec[0]
                .parse()
                .map_err(|_| Error::parse(line, format!("env label {:?} is not an integer", &rec[0])))?;
            env.push(label);
            for (j, col) in columns.iter_mut().enumerate() {
                col.push(parse_number(&rec[j + 1], line)?);
            }
            y.push(parse_number(&rec[d + 1], line)?);
        }
        Dataset::with_names(env, columns, y, column_names, target_name)
    }
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(line, format!("{field:?} is not a finite number"))),
    }
}

/// Shortest decimal text that round-trips; independent of locale.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_parse(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

/// Graph plus reference sets stored next to a simulated dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(skip)]
    pub dag: Option<Dag>,
    pub pa_y: Vec<NodeId>,
    pub s_star: Vec<NodeId>,
}

impl GroundTruth {
    pub fn from_dag(dag: &Dag) -> Self {
        let y = dag.target();
        let pa: BTreeSet<NodeId> = dag.relatives(y, Relation::Parents).expect("target exists");
        let de_e = dag.relatives(dag.env(), Relation::Descendants).expect("env exists");
        GroundTruth {
            pa_y: pa.iter().copied().collect(),
            s_star: pa.intersection(&de_e).copied().collect(),
            dag: Some(dag.clone()),
        }
    }

    pub fn dag(&self) -> &Dag {
        self.dag.as_ref().expect("ground truth always carries its graph")
    }

    pub fn to_text(&self) -> String {
        let mut out = self.dag().to_edge_list();
        let _ = writeln!(out, "pa_y={}", join_ids(&self.pa_y));
        let _ = writeln!(out, "s_star={}", join_ids(&self.s_star));
        out
    }

    /// Parses a sidecar and checks the reference sets against the graph.
    pub fn parse(text: &str) -> Result<Self> {
        let mut graph_text = String::new();
        let mut pa_y = None;
        let mut s_star = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix("pa_y=") {
                pa_y = Some((parse_ids(rest, line_no)?, line_no));
            } else if let Some(rest) = line.strip_prefix("s_star=") {
                s_star = Some((parse_ids(rest, line_no)?, line_no));
            } else {
                graph_text.push_str(raw);
            }
            graph_text.push('\n');
        }
        let dag = Dag::parse_edge_list(&graph_text)?;
        let expected = GroundTruth::from_dag(&dag);
        let last = text.lines().count().max(1);
        let (pa_y, pa_line) = pa_y.ok_or_else(|| Error::parse(last, "missing pa_y= line"))?;
        let (s_star, s_line) = s_star.ok_or_else(|| Error::parse(last, "missing s_star= line"))?;
        if pa_y != expected.pa_y {
            return Err(Error::parse(pa_line, "pa_y does not match the graph"));
        }
        if s_star != expected.s_star {
            return Err(Error::parse(s_line, "s_star does not match the graph"));
        }
        Ok(expected)
    }
}

pub(crate) fn join_ids(ids: &[NodeId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_ids(text: &str, line_no: usize) -> Result<Vec<NodeId>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut ids = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<NodeId>()
                .map_err(|_| Error::parse(line_no, format!("{t:?} is not a node id")))
        })
        .collect::<Result<Vec<_>>>()?;
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}
