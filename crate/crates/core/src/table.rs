//! Typed in-memory tabular datasets: CSV ingestion, train/test splitting,
//! and empirical marginal distributions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Substrings that the sentence codec reserves; they may not appear in
/// column names or rendered values.
pub const RESERVED_DELIMITERS: [&str; 2] = [", ", " is "];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv file is empty")]
    EmptyFile,
    #[error("csv has a header but no data rows")]
    NoRows,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column name `{0}` is empty or contains a reserved delimiter")]
    InvalidColumnName(String),
    #[error("missing cell in row {row} (column `{column}`)")]
    MissingCell { row: usize, column: String },
    #[error("row {row}: cannot parse `{text}` as a finite number for continuous column `{column}`")]
    BadNumber {
        row: usize,
        column: String,
        text: String,
    },
    #[error("row {row}: value `{text}` for column `{column}` contains reserved delimiter `{delimiter}`")]
    ReservedDelimiter {
        row: usize,
        column: String,
        text: String,
        delimiter: &'static str,
    },
    #[error("row {row} has {got} fields, expected {want}")]
    RowWidth { row: usize, got: usize, want: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("schema must have at least one feature column")]
    NoFeatures,
    #[error("schema hint does not match file header: {0}")]
    HeaderMismatch(String),
    #[error("test_fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split produced an empty {0} set")]
    EmptySplit(&'static str),
    #[error("dataset must contain at least one row")]
    Empty,
    #[error("row {row}: expected a {expected} value for column `{column}`")]
    KindMismatch {
        row: usize,
        column: String,
        expected: &'static str,
    },
}

/// Kind of a column: categorical values are strings, continuous values are
/// finite reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

/// Prediction task attached to the target column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification => write!(f, "classification"),
            Task::Regression => write!(f, "regression"),
        }
    }
}

/// A single cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Cat(String),
    Num(f64),
}

impl Value {
    /// Shortest decimal rendering that round-trips the stored value.
    pub fn render(&self) -> String {
        match self {
            Value::Cat(s) => s.clone(),
            Value::Num(x) => format!("{x}"),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

/// Column layout of a dataset: M ordered feature columns plus one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    feature_names: Vec<String>,
    feature_kinds: Vec<ColumnKind>,
    target_name: String,
    task: Task,
}

fn validate_name(name: &str) -> Result<(), TableError> {
    if name.is_empty() {
        return Err(TableError::InvalidColumnName(name.to_string()));
    }
    for delim in RESERVED_DELIMITERS {
        if name.contains(delim) {
            return Err(TableError::InvalidColumnName(name.to_string()));
        }
    }
    Ok(())
}

impl Schema {
    pub fn new(
        feature_names: Vec<String>,
        feature_kinds: Vec<ColumnKind>,
        target_name: String,
        task: Task,
    ) -> Result<Self, TableError> {
        if feature_names.is_empty() {
            return Err(TableError::NoFeatures);
        }
        assert_eq!(feature_names.len(), feature_kinds.len());
        let mut seen = HashSet::new();
        for name in feature_names.iter().chain(Some(&target_name)) {
            validate_name(name)?;
            if !seen.insert(name.as_str()) {
                return Err(TableError::DuplicateColumn(name.clone()));
            }
        }
        Ok(Schema {
            feature_names,
            feature_kinds,
            target_name,
            task,
        })
    }

    /// Number of feature columns (M).
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[ColumnKind] {
        &self.feature_kinds
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn target_kind(&self) -> ColumnKind {
        match self.task {
            Task::Classification => ColumnKind::Categorical,
            Task::Regression => ColumnKind::Continuous,
        }
    }

    /// Resolve a column name to a feature index, or `None` for the target.
    pub fn column(&self, name: &str) -> Result<Option<usize>, TableError> {
        if name == self.target_name {
            return Ok(None);
        }
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(Some)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn kind_of(&self, column: Option<usize>) -> ColumnKind {
        match column {
            Some(i) => self.feature_kinds[i],
            None => self.target_kind(),
        }
    }

    pub fn name_of(&self, column: Option<usize>) -> &str {
        match column {
            Some(i) => &self.feature_names[i],
            None => &self.target_name,
        }
    }
}

/// A validated table. Each row stores M feature values followed by the
/// target value. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<Value>>,
}

fn validate_value(
    value: &Value,
    kind: ColumnKind,
    row: usize,
    column: &str,
) -> Result<(), TableError> {
    match (value, kind) {
        (Value::Num(x), ColumnKind::Continuous) => {
            if !x.is_finite() {
                return Err(TableError::BadNumber {
                    row,
                    column: column.to_string(),
                    text: format!("{x}"),
                });
            }
        }
        (Value::Cat(s), ColumnKind::Categorical) => {
            if s.is_empty() {
                return Err(TableError::MissingCell {
                    row,
                    column: column.to_string(),
                });
            }
            for delim in RESERVED_DELIMITERS {
                if s.contains(delim) {
                    return Err(TableError::ReservedDelimiter {
                        row,
                        column: column.to_string(),
                        text: s.clone(),
                        delimiter: delim,
                    });
                }
            }
        }
        (Value::Num(_), ColumnKind::Categorical) => {
            return Err(TableError::KindMismatch {
                row,
                column: column.to_string(),
                expected: "categorical",
            })
        }
        (Value::Cat(_), ColumnKind::Continuous) => {
            return Err(TableError::KindMismatch {
                row,
                column: column.to_string(),
                expected: "continuous",
            })
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Self, TableError> {
        if rows.is_empty() {
            return Err(TableError::Empty);
        }
        let m = schema.num_features();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != m + 1 {
                return Err(TableError::RowWidth {
                    row: r + 1,
                    got: row.len(),
                    want: m + 1,
                });
            }
            for (j, value) in row.iter().enumerate() {
                let (kind, name) = if j < m {
                    (schema.feature_kinds[j], schema.feature_names[j].as_str())
                } else {
                    (schema.target_kind(), schema.target_name.as_str())
                };
                validate_value(value, kind, r + 1, name)?;
            }
        }
        Ok(Dataset { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.rows[i]
    }

    /// Feature slice of row `i` (target excluded).
    pub fn features(&self, i: usize) -> &[Value] {
        &self.rows[i][..self.schema.num_features()]
    }

    pub fn target(&self, i: usize) -> &Value {
        &self.rows[i][self.schema.num_features()]
    }

    /// Distinct target classes in sort order (classification only).
    pub fn classes(&self) -> Vec<String> {
        let mut set: Vec<String> = self
            .rows
            .iter()
            .filter_map(|r| r[self.schema.num_features()].as_cat().map(str::to_string))
            .collect();
        set.sort();
        set.dedup();
        set
    }

    /// 80/20-style split. Classification datasets are stratified per class
    /// when every class has at least two rows; otherwise the split is plain
    /// random. Deterministic given the seed.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), TableError> {
        self.split_with(test_fraction, seed, true)
    }

    /// Like [`Dataset::split`] but with stratification switchable off.
    pub fn split_with(
        &self,
        test_fraction: f64,
        seed: u64,
        stratify: bool,
    ) -> Result<(Dataset, Dataset), TableError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(TableError::BadFraction(test_fraction));
        }
        let mut rng = rng::stream(seed);
        let strata = self.strata(stratify);
        let mut test_idx = Vec::new();
        for mut stratum in strata {
            stratum.shuffle(&mut rng);
            let n_test = ((stratum.len() as f64) * test_fraction).round() as usize;
            test_idx.extend_from_slice(&stratum[..n_test.min(stratum.len())]);
        }
        if test_idx.is_empty() {
            return Err(TableError::EmptySplit("test"));
        }
        if test_idx.len() == self.len() {
            return Err(TableError::EmptySplit("train"));
        }
        let in_test: HashSet<usize> = test_idx.iter().copied().collect();
        let mut train_rows = Vec::with_capacity(self.len() - test_idx.len());
        let mut test_rows = Vec::with_capacity(test_idx.len());
        for (i, row) in self.rows.iter().enumerate() {
            if in_test.contains(&i) {
                test_rows.push(row.clone());
            } else {
                train_rows.push(row.clone());
            }
        }
        Ok((
            Dataset::new(self.schema.clone(), train_rows)?,
            Dataset::new(self.schema.clone(), test_rows)?,
        ))
    }

    fn strata(&self, stratify: bool) -> Vec<Vec<usize>> {
        if stratify && self.schema.task == Task::Classification {
            let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, row) in self.rows.iter().enumerate() {
                let class = row[self.schema.num_features()].render();
                groups.entry(class).or_default().push(i);
            }
            if groups.values().all(|g| g.len() >= 2) {
                return groups.into_values().collect();
            }
        }
        vec![(0..self.len()).collect()]
    }

    /// Empirical marginal of a column by name.
    pub fn empirical_marginal(&self, column: &str) -> Result<Marginal, TableError> {
        let col = self.schema.column(column)?;
        Ok(self.marginal_of(col))
    }

    /// Empirical marginal of a resolved column (`None` = target).
    pub fn marginal_of(&self, column: Option<usize>) -> Marginal {
        let idx = match column {
            Some(i) => i,
            None => self.schema.num_features(),
        };
        match self.schema.kind_of(column) {
            ColumnKind::Categorical => {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for row in &self.rows {
                    *counts.entry(row[idx].render()).or_insert(0) += 1;
                }
                let n = self.rows.len() as f64;
                Marginal::Categorical(
                    counts
                        .into_iter()
                        .map(|(v, c)| (v, c as f64 / n))
                        .collect(),
                )
            }
            ColumnKind::Continuous => Marginal::Continuous(
                self.rows
                    .iter()
                    .map(|row| row[idx].as_num().expect("validated continuous column"))
                    .collect(),
            ),
        }
    }
}

/// Empirical distribution of one column: exact relative frequencies for
/// categorical columns, the observed-value multiset for continuous ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    /// `(value, relative frequency)` in value sort order; frequencies sum to 1.
    Categorical(Vec<(String, f64)>),
    /// Observed values in row order (a multiset; duplicates kept).
    Continuous(Vec<f64>),
}

impl Marginal {
    /// Draw one value: categorical by stored frequency, continuous uniformly
    /// from the observed multiset.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            Marginal::Categorical(entries) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (value, p) in entries {
                    acc += p;
                    if u < acc {
                        return Value::Cat(value.clone());
                    }
                }
                Value::Cat(entries.last().expect("non-empty support").0.clone())
            }
            Marginal::Continuous(values) => {
                let i = rng.random_range(0..values.len());
                Value::Num(values[i])
            }
        }
    }

    pub fn support_contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Marginal::Categorical(entries), Value::Cat(s)) => {
                entries.iter().any(|(v, _)| v == s)
            }
            (Marginal::Continuous(values), Value::Num(x)) => values.iter().any(|v| v == x),
            _ => false,
        }
    }

    /// Most frequent value; categorical ties break toward sort order.
    pub fn mode(&self) -> Value {
        match self {
            Marginal::Categorical(entries) => {
                let mut best = &entries[0];
                for e in entries {
                    if e.1 > best.1 {
                        best = e;
                    }
                }
                Value::Cat(best.0.clone())
            }
            Marginal::Continuous(values) => {
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                Value::Num(sorted[sorted.len() / 2])
            }
        }
    }
}

/// Raw CSV contents before typing.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if text.trim().is_empty() {
            return Err(TableError::EmptyFile);
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut cells = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            let row: Vec<String> = record.iter().map(str::to_string).collect();
            if row.len() != headers.len() {
                return Err(TableError::RowWidth {
                    row: r + 1,
                    got: row.len(),
                    want: headers.len(),
                });
            }
            cells.push(row);
        }
        if cells.is_empty() {
            return Err(TableError::NoRows);
        }
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(TableError::DuplicateColumn(h.clone()));
            }
        }
        Ok(RawTable { headers, cells })
    }

    /// A column is continuous iff every cell parses as a finite decimal.
    fn column_is_numeric(&self, col: usize) -> bool {
        self.cells
            .iter()
            .all(|row| matches!(row[col].trim().parse::<f64>(), Ok(x) if x.is_finite()))
    }

    /// Infer a schema. The last column is the target unless overridden by
    /// name; a fully numeric target means regression.
    pub fn infer_schema(&self, target: Option<&str>) -> Result<Schema, TableError> {
        let target_idx = match target {
            Some(name) => self
                .headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| TableError::UnknownColumn(name.to_string()))?,
            None => self.headers.len() - 1,
        };
        self.check_missing()?;
        let mut feature_names = Vec::new();
        let mut feature_kinds = Vec::new();
        for (j, h) in self.headers.iter().enumerate() {
            if j == target_idx {
                continue;
            }
            feature_names.push(h.clone());
            feature_kinds.push(if self.column_is_numeric(j) {
                ColumnKind::Continuous
            } else {
                ColumnKind::Categorical
            });
        }
        let task = if self.column_is_numeric(target_idx) {
            Task::Regression
        } else {
            Task::Classification
        };
        Schema::new(feature_names, feature_kinds, self.headers[target_idx].clone(), task)
    }

    fn check_missing(&self) -> Result<(), TableError> {
        for (r, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if cell.trim().is_empty() {
                    return Err(TableError::MissingCell {
                        row: r + 1,
                        column: self.headers[j].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Type the raw cells against `schema`. Columns are reordered so the
    /// target comes last regardless of its position in the file.
    pub fn into_dataset(self, schema: Schema) -> Result<Dataset, TableError> {
        self.check_missing()?;
        let mut col_of = Vec::with_capacity(schema.num_features() + 1);
        for name in schema
            .feature_names()
            .iter()
            .chain(Some(&schema.target_name().to_string()))
        {
            let idx = self
                .headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| TableError::HeaderMismatch(format!("column `{name}` not in file")))?;
            col_of.push(idx);
        }
        if self.headers.len() != schema.num_features() + 1 {
            return Err(TableError::HeaderMismatch(format!(
                "file has {} columns, schema expects {}",
                self.headers.len(),
                schema.num_features() + 1
            )));
        }
        let m = schema.num_features();
        let mut rows = Vec::with_capacity(self.cells.len());
        for (r, raw) in self.cells.iter().enumerate() {
            let mut row = Vec::with_capacity(m + 1);
            for (k, &src) in col_of.iter().enumerate() {
                let kind = if k < m {
                    schema.feature_kinds()[k]
                } else {
                    schema.target_kind()
                };
                let name: &str = if k < m {
                    &schema.feature_names()[k]
                } else {
                    schema.target_name()
                };
                let text = raw[src].trim();
                let value = match kind {
                    ColumnKind::Continuous => {
                        let x: f64 = text.parse().map_err(|_| TableError::BadNumber {
                            row: r + 1,
                            column: name.to_string(),
                            text: text.to_string(),
                        })?;
                        if !x.is_finite() {
                            return Err(TableError::BadNumber {
                                row: r + 1,
                                column: name.to_string(),
                                text: text.to_string(),
                            });
                        }
                        Value::Num(x)
                    }
                    ColumnKind::Categorical => Value::Cat(text.to_string()),
                };
                row.push(value);
            }
            rows.push(row);
        }
        Dataset::new(schema, rows)
    }
}

/// Load a CSV file. When `schema_hint` is absent the schema is inferred:
/// fully numeric columns become continuous, the last column is the target.
pub fn load_csv(path: &Path, schema_hint: Option<&Schema>) -> Result<Dataset, TableError> {
    let raw = RawTable::read(path)?;
    let schema = match schema_hint {
        Some(s) => s.clone(),
        None => raw.infer_schema(None)?,
    };
    raw.into_dataset(schema)
}
