//! Tabular ingestion, variable roles, preprocessing and train/test splitting.
//!
//! A [`Dataset`] holds typed raw values in schema order. Fitting a
//! [`PreprocessPlan`] on the training rows and applying it yields a
//! [`PreparedData`]: standardized numeric columns plus reference-coded
//! indicator columns, split by role into outcome, focal and moderator blocks.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Outcome,
    Focal,
    Moderator,
    Weight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Ordinal,
    /// Ordered level list; the first level is the reference cell.
    Categorical(Vec<String>),
}

impl Kind {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Kind::Categorical(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, role: Role, kind: Kind) -> Self {
        Self {
            name: name.into(),
            role,
            kind,
        }
    }
}

/// Validated list of variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VariableSpec>", into = "Vec<VariableSpec>")]
pub struct Schema {
    vars: Vec<VariableSpec>,
}

impl TryFrom<Vec<VariableSpec>> for Schema {
    type Error = Error;

    fn try_from(vars: Vec<VariableSpec>) -> Result<Self> {
        Schema::new(vars)
    }
}

impl From<Schema> for Vec<VariableSpec> {
    fn from(s: Schema) -> Self {
        s.vars
    }
}

impl Schema {
    pub fn new(vars: Vec<VariableSpec>) -> Result<Self> {
        let count = |role| vars.iter().filter(|v| v.role == role).count();
        if count(Role::Outcome) != 1 {
            return Err(Error::Schema("exactly one outcome variable required".into()));
        }
        if count(Role::Focal) != 1 {
            return Err(Error::Schema("exactly one focal variable required".into()));
        }
        if count(Role::Weight) > 1 {
            return Err(Error::Schema("at most one weight variable allowed".into()));
        }
        let mut names = HashSet::new();
        for v in &vars {
            if !names.insert(v.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable `{}`", v.name)));
            }
            match (&v.role, &v.kind) {
                (Role::Moderator, _) => {}
                (_, Kind::Categorical(_)) => {
                    return Err(Error::Schema(format!(
                        "variable `{}` with role {:?} must be numeric",
                        v.name, v.role
                    )))
                }
                _ => {}
            }
            if let Kind::Categorical(levels) = &v.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("`{}` has no levels", v.name)));
                }
                let uniq: HashSet<_> = levels.iter().collect();
                if uniq.len() != levels.len() {
                    return Err(Error::Schema(format!("`{}` has duplicate levels", v.name)));
                }
            }
        }
        Ok(Self { vars })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.vars
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    fn role_position(&self, role: Role) -> Option<usize> {
        self.vars.iter().position(|v| v.role == role)
    }

    pub fn outcome(&self) -> &VariableSpec {
        &self.vars[self.role_position(Role::Outcome).unwrap()]
    }

    pub fn focal(&self) -> &VariableSpec {
        &self.vars[self.role_position(Role::Focal).unwrap()]
    }

    pub fn weight(&self) -> Option<&VariableSpec> {
        self.role_position(Role::Weight).map(|i| &self.vars[i])
    }

    pub fn moderators(&self) -> impl Iterator<Item = &VariableSpec> {
        self.vars.iter().filter(|v| v.role == Role::Moderator)
    }
}

/// A single typed column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Indices into the declared level list.
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }
}

/// Raw tabular data with roles attached. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    weights: Vec<f64>,
    dropped: usize,
}

impl Dataset {
    /// Builds a dataset from columns in schema order.
    pub fn from_columns(schema: Schema, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.vars.len() {
            return Err(Error::Schema(format!(
                "{} columns for {} variables",
                columns.len(),
                schema.vars.len()
            )));
        }
        let n = columns.first().map_or(0, Column::len);
        if n == 0 {
            return Err(Error::EmptyData { dropped: 0 });
        }
        for (spec, col) in schema.vars.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Schema(format!("column `{}` has wrong length", spec.name)));
            }
            match (&spec.kind, col) {
                (Kind::Categorical(levels), Column::Categorical(v)) => {
                    if v.iter().any(|&l| l as usize >= levels.len()) {
                        return Err(Error::Schema(format!("level out of range in `{}`", spec.name)));
                    }
                }
                (Kind::Categorical(_), _) | (_, Column::Categorical(_)) => {
                    return Err(Error::Schema(format!("column `{}` has wrong kind", spec.name)))
                }
                (_, Column::Numeric(v)) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Schema(format!("non-finite value in `{}`", spec.name)));
                    }
                }
            }
        }
        let weights = match schema.role_position(Role::Weight) {
            Some(i) => columns[i].as_numeric().unwrap().to_vec(),
            None => vec![1.0; n],
        };
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Schema("negative survey weight".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(Self {
            schema,
            columns,
            weights,
            dropped: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.position(name).map(|i| &self.columns[i])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rows discarded at ingestion because of missing or unparseable cells.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.subset(rows)).collect(),
            weights: rows.iter().map(|&r| self.weights[r]).collect(),
            dropped: 0,
        }
    }

    /// Writes the dataset as CSV (header row, empty cells never emitted).
    pub fn write_csv<W: std::io::Write>(&self, writer: W, comment: Option<&str>) -> Result<()> {
        let mut raw = writer;
        if let Some(c) = comment {
            writeln!(raw, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(raw);
        w.write_record(self.schema.vars.iter().map(|v| v.name.as_str()))?;
        for r in 0..self.n_rows() {
            let row: Vec<String> = self
                .schema
                .vars
                .iter()
                .zip(&self.columns)
                .map(|(spec, col)| match (col, &spec.kind) {
                    (Column::Numeric(v), _) => format_real(v[r]),
                    (Column::Categorical(v), Kind::Categorical(levels)) => {
                        levels[v[r] as usize].clone()
                    }
                    _ => unreachable!("validated at construction"),
                })
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trippable decimal representation.
pub(crate) fn format_real(x: f64) -> String {
    format!("{x:?}")
}

/// Reads a CSV file and coerces it to `schema`. Lines starting with `#` are
/// skipped; rows with missing or unparseable cells are dropped and counted.
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_table_from_reader(file, schema)
}

pub fn load_table_from_reader<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let positions: Vec<usize> = schema
        .vars
        .iter()
        .map(|v| {
            headers
                .iter()
                .position(|h| h.trim() == v.name)
                .ok_or_else(|| Error::Schema(format!("missing column `{}`", v.name)))
        })
        .collect::<Result<_>>()?;

    let mut columns: Vec<Column> = schema
        .vars
        .iter()
        .map(|v| match v.kind {
            Kind::Categorical(_) => Column::Categorical(Vec::new()),
            _ => Column::Numeric(Vec::new()),
        })
        .collect();
    let mut dropped = 0;
    let mut parsed: Vec<Cell> = Vec::with_capacity(schema.vars.len());
    for record in rdr.records() {
        let record = record?;
        parsed.clear();
        let ok = schema.vars.iter().zip(&positions).all(|(spec, &pos)| {
            match record.get(pos).and_then(|cell| parse_cell(cell, spec)) {
                Some(c) => {
                    parsed.push(c);
                    true
                }
                None => false,
            }
        });
        if !ok {
            dropped += 1;
            continue;
        }
        for (col, cell) in columns.iter_mut().zip(&parsed) {
            match (col, cell) {
                (Column::Numeric(v), Cell::Num(x)) => v.push(*x),
                (Column::Categorical(v), Cell::Level(l)) => v.push(*l),
                _ => unreachable!(),
            }
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyData { dropped });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing or unparseable cells");
    }
    let mut ds = Dataset::from_columns(schema.clone(), columns)?;
    ds.dropped = dropped;
    Ok(ds)
}

enum Cell {
    Num(f64),
    Level(u32),
}

fn parse_cell(cell: &str, spec: &VariableSpec) -> Option<Cell> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    match &spec.kind {
        Kind::Categorical(levels) => levels.iter().position(|l| l == cell).map(|i| Cell::Level(i as u32)),
        _ => {
            let x: f64 = cell.parse().ok()?;
            let valid = x.is_finite() && (spec.role != Role::Weight || x >= 0.0);
            valid.then_some(Cell::Num(x))
        }
    }
}

/// How one numeric column is standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        self.mean + self.sd * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "lowercase")]
pub enum ColumnPlan {
    Standardize {
        name: String,
        role: Role,
        ordinal: bool,
        #[serde(flatten)]
        stats: Standardizer,
    },
    /// Reference-cell coding: one indicator per retained level.
    Encode {
        name: String,
        reference: String,
        retained: Vec<String>,
    },
    /// Survey weights pass through untouched.
    Passthrough { name: String },
}

impl ColumnPlan {
    pub fn name(&self) -> &str {
        match self {
            ColumnPlan::Standardize { name, .. }
            | ColumnPlan::Encode { name, .. }
            | ColumnPlan::Passthrough { name } => name,
        }
    }
}

/// Train-set preprocessing statistics, one entry per schema variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub columns: Vec<ColumnPlan>,
}

impl PreprocessPlan {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn outcome(&self) -> &Standardizer {
        self.standardizer_for_role(Role::Outcome)
    }

    pub fn focal(&self) -> &Standardizer {
        self.standardizer_for_role(Role::Focal)
    }

    fn standardizer_for_role(&self, wanted: Role) -> &Standardizer {
        self.columns
            .iter()
            .find_map(|c| match c {
                ColumnPlan::Standardize { role, stats, .. } if *role == wanted => Some(stats),
                _ => None,
            })
            .expect("plan always covers outcome and focal")
    }
}

/// Captures train-set means, sample standard deviations and level maps.
pub fn fit_preprocess(train: &Dataset) -> Result<PreprocessPlan> {
    if train.n_rows() == 0 {
        return Err(Error::EmptyData { dropped: 0 });
    }
    let columns = train
        .schema
        .vars
        .iter()
        .zip(&train.columns)
        .map(|(spec, col)| match (&spec.kind, col) {
            (_, Column::Numeric(_)) if spec.role == Role::Weight => Ok(ColumnPlan::Passthrough {
                name: spec.name.clone(),
            }),
            (kind, Column::Numeric(v)) => {
                let (mean, sd) = mean_sd(v);
                if !(sd > 0.0) || !sd.is_finite() {
                    return Err(Error::DegenerateColumn(spec.name.clone()));
                }
                Ok(ColumnPlan::Standardize {
                    name: spec.name.clone(),
                    role: spec.role,
                    ordinal: *kind == Kind::Ordinal,
                    stats: Standardizer { mean, sd },
                })
            }
            (Kind::Categorical(levels), Column::Categorical(_)) => Ok(ColumnPlan::Encode {
                name: spec.name.clone(),
                reference: levels[0].clone(),
                retained: levels[1..].to_vec(),
            }),
            _ => unreachable!("dataset validated at construction"),
        })
        .collect::<Result<_>>()?;
    Ok(PreprocessPlan { columns })
}

/// Mean and sample (n-1) standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Where a schema-level moderator lives in the expanded moderator matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous { column: usize },
    Ordinal { column: usize },
    Categorical { columns: Vec<usize>, levels: Vec<String> },
}

impl FeatureGroup {
    pub fn columns(&self) -> Vec<usize> {
        match &self.kind {
            FeatureKind::Continuous { column } | FeatureKind::Ordinal { column } => vec![*column],
            FeatureKind::Categorical { columns, .. } => columns.clone(),
        }
    }
}

/// Preprocessed data ready for fitting: standardized outcome and focal,
/// an `n x D` moderator matrix, and untouched survey weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub outcome_name: String,
    pub focal_name: String,
    pub outcome: Vec<f64>,
    pub focal: Vec<f64>,
    pub moderators: Array2<f64>,
    pub moderator_names: Vec<String>,
    pub features: Vec<FeatureGroup>,
    pub weights: Vec<f64>,
}

impl PreparedData {
    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    /// Number of expanded predictor columns, focal included.
    pub fn design_width(&self) -> usize {
        self.moderators.ncols() + 1
    }

    pub fn feature(&self, name: &str) -> Result<&FeatureGroup> {
        self.features
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn subset(&self, rows: &[usize]) -> PreparedData {
        PreparedData {
            outcome: rows.iter().map(|&r| self.outcome[r]).collect(),
            focal: rows.iter().map(|&r| self.focal[r]).collect(),
            moderators: self.moderators.select(ndarray::Axis(0), rows),
            weights: rows.iter().map(|&r| self.weights[r]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> PreparedData {
        PreparedData {
            outcome_name: self.outcome_name.clone(),
            focal_name: self.focal_name.clone(),
            outcome: Vec::new(),
            focal: Vec::new(),
            moderators: Array2::zeros((0, self.moderators.ncols())),
            moderator_names: self.moderator_names.clone(),
            features: self.features.clone(),
            weights: Vec::new(),
        }
    }
}

/// Applies train statistics to any dataset with the same variables.
pub fn apply_preprocess(plan: &PreprocessPlan, data: &Dataset) -> Result<PreparedData> {
    let schema = &data.schema;
    if plan.columns.len() != schema.vars.len()
        || plan.columns.iter().zip(&schema.vars).any(|(p, v)| p.name() != v.name)
    {
        return Err(Error::Layout("dataset columns do not match the preprocessing plan".into()));
    }
    let n = data.n_rows();
    let mut outcome = None;
    let mut focal = None;
    let mut mod_cols: Vec<Vec<f64>> = Vec::new();
    let mut moderator_names = Vec::new();
    let mut features = Vec::new();

    for ((p, spec), col) in plan.columns.iter().zip(&schema.vars).zip(&data.columns) {
        match (p, col) {
            (ColumnPlan::Passthrough { .. }, _) => {}
            (ColumnPlan::Standardize { stats, ordinal, .. }, Column::Numeric(v)) => {
                let z: Vec<f64> = v.iter().map(|&x| stats.apply(x)).collect();
                match spec.role {
                    Role::Outcome => outcome = Some(z),
                    Role::Focal => focal = Some(z),
                    Role::Moderator => {
                        let column = mod_cols.len();
                        features.push(FeatureGroup {
                            name: spec.name.clone(),
                            kind: if *ordinal {
                                FeatureKind::Ordinal { column }
                            } else {
                                FeatureKind::Continuous { column }
                            },
                        });
                        moderator_names.push(spec.name.clone());
                        mod_cols.push(z);
                    }
                    Role::Weight => unreachable!("weights pass through"),
                }
            }
            (ColumnPlan::Encode { reference, retained, .. }, Column::Categorical(v)) => {
                let Kind::Categorical(levels) = &spec.kind else {
                    unreachable!()
                };
                // Map this dataset's level indices onto the plan's indicator slots.
                let slot: Vec<Option<usize>> = levels
                    .iter()
                    .map(|l| {
                        if l == reference {
                            Ok(None)
                        } else {
                            retained.iter().position(|r| r == l).map(Some).ok_or_else(|| {
                                Error::UnknownLevel {
                                    column: spec.name.clone(),
                                    level: l.clone(),
                                }
                            })
                        }
                    })
                    .collect::<Result<_>>()?;
                let first = mod_cols.len();
                for level in retained {
                    moderator_names.push(format!("{}={}", spec.name, level));
                    mod_cols.push(vec![0.0; n]);
                }
                for (r, &l) in v.iter().enumerate() {
                    if let Some(s) = slot[l as usize] {
                        mod_cols[first + s][r] = 1.0;
                    }
                }
                features.push(FeatureGroup {
                    name: spec.name.clone(),
                    kind: FeatureKind::Categorical {
                        columns: (first..first + retained.len()).collect(),
                        levels: retained.clone(),
                    },
                });
            }
            _ => {
                return Err(Error::Layout(format!(
                    "column `{}` kind does not match the plan",
                    spec.name
                )))
            }
        }
    }

    let d = mod_cols.len();
    let mut moderators = Array2::zeros((n, d));
    for (j, c) in mod_cols.iter().enumerate() {
        for (r, &x) in c.iter().enumerate() {
            moderators[[r, j]] = x;
        }
    }
    Ok(PreparedData {
        outcome_name: schema.outcome().name.clone(),
        focal_name: schema.focal().name.clone(),
        outcome: outcome.expect("schema has an outcome"),
        focal: focal.expect("schema has a focal"),
        moderators,
        moderator_names,
        features,
        weights: data.weights.clone(),
    })
}

/// A reproducible train/test partition of row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub seed: u64,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<SplitIndex> {
    split_rows(data.n_rows(), ratio, seed)
}

/// Uniform random partition of `0..n`; both index lists come back sorted.
pub fn split_rows(n: usize, ratio: f64, seed: u64) -> Result<SplitIndex> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 rows to split, got {n}")));
    }
    let n_train = ((n as f64) * ratio).round() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_rows = idx[..n_train].to_vec();
    let mut test_rows = idx[n_train..].to_vec();
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(SplitIndex {
        seed,
        train_rows,
        test_rows,
    })
}
