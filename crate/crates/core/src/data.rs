//! Weighted categorical datasets: schema, CSV ingestion, dummy encoding,
//! train/validation/test splits, cross-fitting folds, and group partitions.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quad::class_index;
use crate::rng::{self, tags};

pub const SCHEMA_VERSION: u32 = 1;

/// One categorical covariate and its ordered modality codes. The first code
/// is the reference modality for dummy encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub modalities: Vec<i64>,
}

impl Feature {
    pub fn new(name: impl Into<String>, modalities: Vec<i64>) -> Self {
        Feature {
            name: name.into(),
            modalities,
        }
    }

    pub fn level_of(&self, code: i64) -> Option<usize> {
        self.modalities.iter().position(|&m| m == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalSchema {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub features: Vec<Feature>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl CategoricalSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let schema = CategoricalSchema {
            version: SCHEMA_VERSION,
            features,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The eight rating variables of the French young-driver sample: car age,
    /// car group, insuree age, profession, usage, region, zone, gender.
    pub fn default_insurance() -> Self {
        let seq = |lo: i64, hi: i64| (lo..=hi).collect::<Vec<_>>();
        CategoricalSchema {
            version: SCHEMA_VERSION,
            features: vec![
                Feature::new("car_age", seq(1, 12)),
                Feature::new("car_group", seq(1, 6)),
                Feature::new("age", seq(1, 9)),
                Feature::new("profession", seq(1, 8)),
                Feature::new("usage", seq(1, 4)),
                Feature::new("region", seq(1, 10)),
                Feature::new("zone", seq(2, 6)),
                Feature::new("gender", seq(1, 2)),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.features.is_empty() {
            return Err(Error::Schema("no features declared".into()));
        }
        let mut names = BTreeSet::new();
        for f in &self.features {
            if ["c", "r", "w"].contains(&f.name.as_str()) {
                return Err(Error::Schema(format!("feature name `{}` is reserved", f.name)));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
            if f.modalities.len() < 2 {
                return Err(Error::Schema(format!(
                    "feature `{}` needs at least two modalities",
                    f.name
                )));
            }
            let distinct: BTreeSet<_> = f.modalities.iter().collect();
            if distinct.len() != f.modalities.len() {
                return Err(Error::Schema(format!(
                    "feature `{}` has repeated modality codes",
                    f.name
                )));
            }
        }
        Ok(())
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::Invalid(format!("no feature named `{name}`")))
    }

    /// Width of the dummy design: constant plus `modalities - 1` per feature.
    pub fn design_width(&self) -> usize {
        1 + self.features.iter().map(|f| f.modalities.len() - 1).sum::<usize>()
    }

    pub fn cell_count(&self) -> f64 {
        self.features.iter().map(|f| f.modalities.len() as f64).product()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: CategoricalSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

/// One insuree: modality levels (indices into the schema's modality lists),
/// the coverage and claim indicators, and the sampling weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub levels: Vec<usize>,
    pub c: bool,
    pub r: bool,
    pub w: f64,
}

impl Record {
    pub fn class(&self) -> usize {
        class_index(self.c, self.r)
    }

    /// Indicator `y_jk = 1(c = j, r = k)`.
    pub fn y(&self, j: bool, k: bool) -> f64 {
        if self.c == j && self.r == k {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<CategoricalSchema>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: CategoricalSchema, records: Vec<Record>) -> Result<Self> {
        schema.validate()?;
        Self::with_shared_schema(Arc::new(schema), records)
    }

    pub fn with_shared_schema(schema: Arc<CategoricalSchema>, records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Invalid("dataset is empty".into()));
        }
        for (i, rec) in records.iter().enumerate() {
            check_record(&schema, rec).map_err(|(column, message)| Error::Row {
                row: i + 1,
                column,
                message,
            })?;
        }
        Ok(Dataset { schema, records })
    }

    pub fn schema(&self) -> &CategoricalSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<CategoricalSchema> {
        Arc::clone(&self.schema)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.w).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.w).sum()
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Invalid("empty subset".into()));
        }
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            records,
        })
    }

    /// Modality codes of record `i`.
    pub fn codes(&self, i: usize) -> Vec<i64> {
        self.records[i]
            .levels
            .iter()
            .zip(&self.schema.features)
            .map(|(&l, f)| f.modalities[l])
            .collect()
    }

    /// Weighted class frequencies `(p00, p01, p10, p11)`.
    pub fn class_frequencies(&self) -> [f64; 4] {
        let mut acc = [0.0; 4];
        for r in &self.records {
            acc[r.class()] += r.w;
        }
        let total: f64 = acc.iter().sum();
        acc.map(|a| a / total)
    }

    pub fn load_csv(path: &Path, schema: &CategoricalSchema) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, schema)
    }

    /// Parses the comma-separated layout: one integer column per feature,
    /// then `c`, `r`, `w`, in any column order. Rows are numbered from 1
    /// (the header is not counted).
    pub fn read_csv<R: std::io::Read>(reader: R, schema: &CategoricalSchema) -> Result<Dataset> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let position = |name: &str| -> Result<usize> {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Row {
                row: 0,
                column: name.to_string(),
                message: "missing column".into(),
            })
        };
        let feature_cols = schema
            .features
            .iter()
            .map(|f| position(&f.name))
            .collect::<Result<Vec<_>>>()?;
        let (c_col, r_col, w_col) = (position("c")?, position("r")?, position("w")?);
        let expected = schema.features.len() + 3;
        if headers.len() != expected {
            let known: BTreeSet<&str> = schema
                .features
                .iter()
                .map(|f| f.name.as_str())
                .chain(["c", "r", "w"])
                .collect();
            let extra = headers.iter().find(|h| !known.contains(h.trim())).unwrap_or("?");
            return Err(Error::Row {
                row: 0,
                column: extra.to_string(),
                message: "unexpected column".into(),
            });
        }

        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row_no = i + 1;
            let row = row?;
            let field = |col: usize, name: &str| -> Result<&str> {
                let v = row.get(col).map(str::trim).unwrap_or("");
                if v.is_empty() {
                    Err(Error::Row {
                        row: row_no,
                        column: name.to_string(),
                        message: "missing value".into(),
                    })
                } else {
                    Ok(v)
                }
            };
            let mut levels = Vec::with_capacity(schema.features.len());
            for (f, &col) in schema.features.iter().zip(&feature_cols) {
                let raw = field(col, &f.name)?;
                let code: i64 = raw.parse().map_err(|_| Error::Row {
                    row: row_no,
                    column: f.name.clone(),
                    message: format!("`{raw}` is not an integer code"),
                })?;
                let level = f.level_of(code).ok_or_else(|| Error::Row {
                    row: row_no,
                    column: f.name.clone(),
                    message: format!("unknown modality code {code}"),
                })?;
                levels.push(level);
            }
            let binary = |col: usize, name: &str| -> Result<bool> {
                match field(col, name)? {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Row {
                        row: row_no,
                        column: name.to_string(),
                        message: format!("`{other}` is not binary"),
                    }),
                }
            };
            let c = binary(c_col, "c")?;
            let r = binary(r_col, "r")?;
            let raw_w = field(w_col, "w")?;
            let w: f64 = raw_w.parse().map_err(|_| Error::Row {
                row: row_no,
                column: "w".into(),
                message: format!("`{raw_w}` is not a number"),
            })?;
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Row {
                    row: row_no,
                    column: "w".into(),
                    message: format!("weight {w} outside (0, 1]"),
                });
            }
            records.push(Record { levels, c, r, w });
        }
        Dataset::new(schema.clone(), records)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.features.iter().map(|f| f.name.as_str()).collect();
        header.extend(["c", "r", "w"]);
        wtr.write_record(&header)?;
        for i in 0..self.records.len() {
            let rec = &self.records[i];
            let mut fields: Vec<String> = self.codes(i).iter().map(i64::to_string).collect();
            fields.push(u8::from(rec.c).to_string());
            fields.push(u8::from(rec.r).to_string());
            fields.push(rec.w.to_string());
            wtr.write_record(&fields)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn check_record(schema: &CategoricalSchema, rec: &Record) -> std::result::Result<(), (String, String)> {
    if rec.levels.len() != schema.features.len() {
        return Err((
            "covariates".into(),
            format!("{} covariates, schema has {}", rec.levels.len(), schema.features.len()),
        ));
    }
    for (&l, f) in rec.levels.iter().zip(&schema.features) {
        if l >= f.modalities.len() {
            return Err((f.name.clone(), format!("level {l} out of range")));
        }
    }
    if !(rec.w > 0.0 && rec.w <= 1.0) {
        return Err(("w".into(), format!("weight {} outside (0, 1]", rec.w)));
    }
    Ok(())
}

/// Maps modality levels to dummy columns. Column 0 is the constant; each
/// included feature contributes one column per non-reference modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    included: Vec<usize>,
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    width: usize,
}

impl Encoder {
    pub fn new(schema: &CategoricalSchema) -> Self {
        Self::with_features(schema, &(0..schema.features.len()).collect::<Vec<_>>())
    }

    /// Encoder over a subset of features (in the given order).
    pub fn with_features(schema: &CategoricalSchema, included: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(included.len());
        let mut sizes = Vec::with_capacity(included.len());
        let mut width = 1;
        for &f in included {
            offsets.push(width);
            let k = schema.features[f].modalities.len();
            sizes.push(k);
            width += k - 1;
        }
        Encoder {
            included: included.to_vec(),
            offsets,
            sizes,
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn included(&self) -> &[usize] {
        &self.included
    }

    /// Indices of the nonzero (unit) entries of the dummy row.
    pub fn active(&self, levels: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(1 + self.included.len());
        out.push(0);
        for (slot, &f) in self.included.iter().enumerate() {
            let l = levels[f];
            if l > 0 {
                out.push(self.offsets[slot] + l - 1);
            }
        }
        out
    }

    pub fn encode(&self, levels: &[usize]) -> Vec<f64> {
        let mut row = vec![0.0; self.width];
        for j in self.active(levels) {
            row[j] = 1.0;
        }
        row
    }

    /// Inverse of [`Encoder::encode`] for the included features; features
    /// outside the encoder are returned as level 0.
    pub fn decode(&self, row: &[f64], n_features: usize) -> Result<Vec<usize>> {
        if row.len() != self.width || row[0] != 1.0 {
            return Err(Error::Invalid("not a dummy row of this encoder".into()));
        }
        let mut levels = vec![0; n_features];
        for (slot, &f) in self.included.iter().enumerate() {
            let block = &row[self.offsets[slot]..self.offsets[slot] + self.sizes[slot] - 1];
            let ones: Vec<usize> = block
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(i, _)| i)
                .collect();
            if block.iter().any(|&v| v != 0.0 && v != 1.0) || ones.len() > 1 {
                return Err(Error::Invalid(format!("malformed dummy block for feature {f}")));
            }
            levels[f] = ones.first().map_or(0, |i| i + 1);
        }
        Ok(levels)
    }

    /// Schema feature owning design column `j` (`None` for the constant).
    pub fn column_feature(&self, j: usize) -> Option<usize> {
        if j == 0 {
            return None;
        }
        self.included
            .iter()
            .enumerate()
            .find(|(slot, _)| j >= self.offsets[*slot] && j < self.offsets[*slot] + self.sizes[*slot] - 1)
            .map(|(_, &f)| f)
    }
}

/// Dense dummy-coded design, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    width: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width)
    }
}

/// Dummy-codes every record against the schema's first-listed modalities.
pub fn one_hot_encode(d: &Dataset) -> DesignMatrix {
    let enc = Encoder::new(d.schema());
    let mut data = Vec::with_capacity(d.len() * enc.width());
    for rec in d.records() {
        data.extend(enc.encode(&rec.levels));
    }
    DesignMatrix {
        width: enc.width(),
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let plan = SplitPlan {
            train,
            validation,
            test,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// The 70/15/15 protocol used for network selection.
    pub fn standard(seed: u64) -> Self {
        SplitPlan {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.validation, self.test];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!("split fractions must lie in (0,1): {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {fr:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled(n: usize, seed: u64, tag: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, tag, 0));
    idx
}

// floor(n * f) with slack for fractions such as 0.7 + 0.15 that land a hair
// below the exact product.
fn cut(n: usize, f: f64) -> usize {
    ((n as f64 * f) + 1e-9).floor() as usize
}

/// Random train/validation/test assignment. Records are shuffled with the
/// plan's seed, the first `floor(n·f_train)` go to training, the next
/// `floor(n·(f_train + f_val)) - floor(n·f_train)` to validation, the rest
/// to test.
pub fn split_indices(n: usize, plan: &SplitPlan) -> Result<SplitIndices> {
    plan.validate()?;
    let order = shuffled(n, plan.seed, tags::SPLIT);
    let a = cut(n, plan.train);
    let b = cut(n, plan.train + plan.validation).min(n);
    if a == 0 || b <= a || b >= n {
        return Err(Error::Invalid(format!(
            "split of {n} records leaves an empty part ({a}/{}/{})",
            b.saturating_sub(a),
            n.saturating_sub(b)
        )));
    }
    Ok(SplitIndices {
        train: order[..a].to_vec(),
        validation: order[a..b].to_vec(),
        test: order[b..].to_vec(),
    })
}

pub fn split(d: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset, Dataset)> {
    let s = split_indices(d.len(), plan)?;
    Ok((d.subset(&s.train)?, d.subset(&s.validation)?, d.subset(&s.test)?))
}

/// Two-way random split: the first `floor(n·fraction)` shuffled records and
/// the remainder.
pub fn split_two(n: usize, fraction: f64, seed: u64, tag: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0,1)")));
    }
    let order = shuffled(n, seed, tag);
    let a = cut(n, fraction);
    if a == 0 || a >= n {
        return Err(Error::Invalid(format!(
            "two-way split of {n} records leaves an empty part"
        )));
    }
    Ok((order[..a].to_vec(), order[a..].to_vec()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub fold: Vec<usize>,
}

impl FoldAssignment {
    /// Records in fold `f`, ascending.
    pub fn members(&self, f: usize) -> Vec<usize> {
        (0..self.fold.len()).filter(|&i| self.fold[i] == f).collect()
    }

    /// Records outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.fold.len()).filter(|&i| self.fold[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold {
            s[f] += 1;
        }
        s
    }
}

pub fn make_folds_n(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Invalid(format!("{k} folds requested for {n} records")));
    }
    let order = shuffled(n, seed, tags::FOLDS);
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(FoldAssignment { k, seed, fold })
}

pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    make_folds_n(d.len(), k, seed)
}

/// `Σ wᵢvᵢ / Σ wᵢ`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Invalid("weighted mean of empty input".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Invalid("values and weights differ in length".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Invalid("weights must be positive".into()));
    }
    let (num, den) = values
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(n, d), (v, w)| (n + w * v, d + w));
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupScheme {
    /// One group per observed modality of a feature.
    ByModality { feature: String },
    /// Modalities of an ordered feature pooled at the weighted quartiles.
    ByQuartile { feature: String },
    /// Records sorted by a per-record value and cut at weighted quantiles.
    ByValue { values: Vec<f64>, groups: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: String,
    pub indices: Vec<usize>,
}

pub fn partition(d: &Dataset, scheme: &GroupScheme) -> Result<Vec<Group>> {
    match scheme {
        GroupScheme::ByModality { feature } => {
            let f = d.schema().feature_index(feature)?;
            let feat = &d.schema().features[f];
            let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); feat.modalities.len()];
            for (i, rec) in d.records().iter().enumerate() {
                by_level[rec.levels[f]].push(i);
            }
            Ok(by_level
                .into_iter()
                .enumerate()
                .filter(|(_, idx)| !idx.is_empty())
                .map(|(l, indices)| Group {
                    label: format!("{}={}", feat.name, feat.modalities[l]),
                    indices,
                })
                .collect())
        }
        GroupScheme::ByQuartile { feature } => {
            let f = d.schema().feature_index(feature)?;
            let feat = &d.schema().features[f];
            let mut mass = vec![0.0; feat.modalities.len()];
            for rec in d.records() {
                mass[rec.levels[f]] += rec.w;
            }
            let total: f64 = mass.iter().sum();
            let mut group_of = vec![0usize; mass.len()];
            let mut below = 0.0;
            for (l, m) in mass.iter().enumerate() {
                let mid = (below + m / 2.0) / total;
                group_of[l] = [0.25, 0.5, 0.75].iter().filter(|&&c| mid > c).count();
                below += m;
            }
            let mut groups: Vec<Group> = (0..4)
                .map(|g| {
                    let codes: Vec<String> = (0..mass.len())
                        .filter(|&l| group_of[l] == g && mass[l] > 0.0)
                        .map(|l| feat.modalities[l].to_string())
                        .collect();
                    Group {
                        label: format!("{} Q{} [{}]", feat.name, g + 1, codes.join(",")),
                        indices: Vec::new(),
                    }
                })
                .collect();
            for (i, rec) in d.records().iter().enumerate() {
                groups[group_of[rec.levels[f]]].indices.push(i);
            }
            if let Some(g) = groups.iter().position(|g| g.indices.is_empty()) {
                return Err(Error::Invalid(format!(
                    "quartile group {} of `{}` is empty",
                    g + 1,
                    feat.name
                )));
            }
            Ok(groups)
        }
        GroupScheme::ByValue { values, groups } => {
            if values.len() != d.len() {
                return Err(Error::Invalid("one value per record required".into()));
            }
            partition_by_value(values, &d.weights(), *groups)
        }
    }
}

/// Sorts records by `(value, index)` and assigns each to the group holding
/// the midpoint of its cumulative weight share. Non-finite values are left
/// out. Errors if a group ends up empty.
pub fn partition_by_value(values: &[f64], weights: &[f64], groups: usize) -> Result<Vec<Group>> {
    if groups == 0 {
        return Err(Error::Config("need at least one group".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| weights[i]).sum();
    let mut out: Vec<Group> = (0..groups)
        .map(|g| Group {
            label: format!("G{}", g + 1),
            indices: Vec::new(),
        })
        .collect();
    let mut below = 0.0;
    for &i in &order {
        let mid = (below + weights[i] / 2.0) / total;
        let g = ((mid * groups as f64).floor() as usize).min(groups - 1);
        out[g].indices.push(i);
        below += weights[i];
    }
    if let Some(g) = out.iter().position(|g| g.indices.is_empty()) {
        return Err(Error::Invalid(format!("sorted group {} is empty", g + 1)));
    }
    Ok(out)
}

/// Record indices keyed by covariate cell (levels vector).
pub fn cells(d: &Dataset) -> HashMap<Vec<usize>, Vec<usize>> {
    let mut map: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (i, rec) in d.records().iter().enumerate() {
        map.entry(rec.levels.clone()).or_default().push(i);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_schema() -> CategoricalSchema {
        CategoricalSchema::new(vec![Feature::new("x", vec![0, 1])]).unwrap()
    }

    fn toy(n: usize) -> Dataset {
        let schema =
            CategoricalSchema::new(vec![Feature::new("a", vec![1, 2, 3]), Feature::new("b", vec![5, 7])]).unwrap();
        let records = (0..n)
            .map(|i| Record {
                levels: vec![i % 3, (i / 3) % 2],
                c: i % 2 == 0,
                r: i % 5 == 0,
                w: 0.25 + 0.75 * ((i % 4) as f64) / 3.0,
            })
            .collect();
        Dataset::new(schema, records).unwrap()
    }

    #[test]
    fn default_schema_has_49_columns() {
        let s = CategoricalSchema::default_insurance();
        s.validate().unwrap();
        assert_eq!(s.design_width(), 49);
        let sizes: Vec<usize> = s.features.iter().map(|f| f.modalities.len()).collect();
        assert_eq!(sizes, vec![12, 6, 9, 8, 4, 10, 5, 2]);
    }

    #[test]
    fn schema_rejects_bad_declarations() {
        assert!(CategoricalSchema::new(vec![Feature::new("x", vec![1])]).is_err());
        assert!(CategoricalSchema::new(vec![Feature::new("x", vec![1, 1])]).is_err());
        assert!(CategoricalSchema::new(vec![Feature::new("x", vec![1, 2]), Feature::new("x", vec![1, 2])]).is_err());
        assert!(CategoricalSchema::new(vec![Feature::new("w", vec![1, 2])]).is_err());
    }

    #[test]
    fn schema_toml_round_trip() {
        let s = CategoricalSchema::default_insurance();
        let text = s.to_toml_string().unwrap();
        assert_eq!(CategoricalSchema::from_toml_str(&text).unwrap(), s);
        assert_eq!(s.fingerprint().len(), 64);
    }

    #[test]
    fn load_minimal_file() {
        let text = "x,c,r,w\n0,0,0,1\n1,1,0,0.5\n0,0,1,0.25\n1,1,1,1\n";
        let d = Dataset::read_csv(text.as_bytes(), &binary_schema()).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.records()[1].levels, vec![1]);
        assert!(d.records()[3].c && d.records()[3].r);
    }

    #[test]
    fn load_reports_row_and_column() {
        let text = "x,c,r,w\n0,0,0,1\n1,1,0,0.5\n0,0,1,1.2\n";
        match Dataset::read_csv(text.as_bytes(), &binary_schema()) {
            Err(Error::Row { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "w");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "x,c,r,w\n0,2,0,1\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), &binary_schema()),
            Err(Error::Row { row: 1, ref column, .. }) if column == "c"
        ));
        let text = "x,c,r,w\n3,0,0,1\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), &binary_schema()),
            Err(Error::Row { row: 1, ref column, .. }) if column == "x"
        ));
        let text = "x,c,w\n0,0,1\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), &binary_schema()),
            Err(Error::Row { row: 0, ref column, .. }) if column == "r"
        ));
        let text = "x,c,r,w\n0,0,,1\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), &binary_schema()),
            Err(Error::Row { row: 1, ref column, .. }) if column == "r"
        ));
        let text = "x,c,r,w\n";
        assert!(Dataset::read_csv(text.as_bytes(), &binary_schema()).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_records() {
        let d = toy(20);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), d.schema()).unwrap();
        assert_eq!(back.records(), d.records());
    }

    #[test]
    fn encoding_widths_and_reference_row() {
        let d = Dataset::new(
            binary_schema(),
            vec![Record {
                levels: vec![0],
                c: false,
                r: false,
                w: 1.0,
            }],
        )
        .unwrap();
        let x = one_hot_encode(&d);
        assert_eq!(x.width(), 2);
        assert_eq!(x.row(0), &[1.0, 0.0]);

        let d = toy(6);
        let x = one_hot_encode(&d);
        assert_eq!(x.width(), 1 + 2 + 1);
        // record 0 holds both reference modalities
        assert_eq!(x.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(x.row(5), &[1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn encoder_column_ownership() {
        let d = toy(3);
        let enc = Encoder::new(d.schema());
        assert_eq!(enc.column_feature(0), None);
        assert_eq!(enc.column_feature(1), Some(0));
        assert_eq!(enc.column_feature(2), Some(0));
        assert_eq!(enc.column_feature(3), Some(1));
        let dropped = Encoder::with_features(d.schema(), &[1]);
        assert_eq!(dropped.width(), 2);
        assert_eq!(dropped.column_feature(1), Some(1));
        assert_eq!(dropped.decode(&[1.0, 1.0], 2).unwrap(), vec![0, 1]);
        assert!(enc.decode(&[1.0, 1.0, 1.0, 0.0], 2).is_err());
    }

    #[test]
    fn split_sizes() {
        let s = split_indices(100, &SplitPlan::standard(1)).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 15));
        let s = split_indices(6333, &SplitPlan::standard(1)).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (4433, 950, 950));
        assert_eq!(s, split_indices(6333, &SplitPlan::standard(1)).unwrap());
        assert!(split_indices(2, &SplitPlan::standard(1)).is_err());
        assert!(SplitPlan::new(0.5, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let s = split_indices(57, &SplitPlan::standard(9)).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn fold_sizes() {
        assert_eq!(make_folds_n(10, 5, 0).unwrap().sizes(), vec![2; 5]);
        let mut s = make_folds_n(11, 5, 0).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
        assert!(make_folds_n(4, 5, 0).is_err());
        assert!(make_folds_n(4, 1, 0).is_err());
        let a = make_folds_n(100, 5, 1).unwrap();
        let b = make_folds_n(100, 5, 2).unwrap();
        assert_eq!(a, make_folds_n(100, 5, 1).unwrap());
        assert_ne!(a.fold, b.fold);
    }

    #[test]
    fn weighted_mean_examples() {
        assert_eq!(weighted_mean(&[1.0, 1.0], &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(weighted_mean(&[0.0, 1.0], &[1.0, 3.0]).unwrap(), 0.75);
        assert!((weighted_mean(&[2.0, 4.0, 9.0], &[0.3; 3]).unwrap() - 5.0).abs() < 1e-14);
        assert!(weighted_mean(&[], &[]).is_err());
        assert!(weighted_mean(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn partitions() {
        let d = toy(24);
        let g = partition(&d, &GroupScheme::ByModality { feature: "a".into() }).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.iter().map(|g| g.indices.len()).sum::<usize>(), 24);
        assert!(partition(&d, &GroupScheme::ByModality { feature: "zz".into() }).is_err());
        // only three modalities: one quartile group must be empty
        assert!(partition(&d, &GroupScheme::ByQuartile { feature: "a".into() }).is_err());

        let single = Dataset::new(
            binary_schema(),
            vec![
                Record {
                    levels: vec![1],
                    c: false,
                    r: false,
                    w: 1.0
                };
                3
            ],
        )
        .unwrap();
        let g = partition(&single, &GroupScheme::ByModality { feature: "x".into() }).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn quartiles_of_twelve_modalities() {
        let schema = CategoricalSchema::new(vec![Feature::new("car_age", (1..=12).collect())]).unwrap();
        let records = (0..120)
            .map(|i| Record {
                levels: vec![i % 12],
                c: false,
                r: false,
                w: 1.0,
            })
            .collect();
        let d = Dataset::new(schema, records).unwrap();
        let g = partition(
            &d,
            &GroupScheme::ByQuartile {
                feature: "car_age".into(),
            },
        )
        .unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.iter().all(|g| g.indices.len() == 30));
        assert!(g[0].label.contains("[1,2,3]"));
    }

    #[test]
    fn value_partition_handles_ties() {
        let values = vec![0.0; 10];
        let g = partition_by_value(&values, &[1.0; 10], 4).unwrap();
        let sizes: Vec<usize> = g.iter().map(|g| g.indices.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        // midpoints 0.05 and 0.15 fall in the first quarter
        assert_eq!(g[0].indices, vec![0, 1]);
    }
}
