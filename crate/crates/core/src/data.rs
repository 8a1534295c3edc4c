//! Labeled tabular datasets: CSV loading, normalization, label corruption,
//! synthetic blobs and seeded mini-batching.
//!
//! Sample ids are dense positions `0..N` assigned when a split is created.
//! Batching shuffles ids, never rows, so the id → row association is fixed
//! for the lifetime of a dataset.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{precondition, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A one-hot encoded categorical input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub column: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<usize>,
    num_classes: usize,
    pub split: Split,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub encodings: Vec<CategoricalEncoding>,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        num_features: usize,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if labels.is_empty() || num_features == 0 || num_classes == 0 {
            return Err(Error::Dataset("dataset must have samples, features and classes".into()));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::Shape {
                op: "dataset",
                left: vec![labels.len(), num_features],
                right: vec![features.len()],
            });
        }
        if let Some(y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Dataset(format!("label {y} outside 0..{num_classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("features contain NaN or infinite values".into()));
        }
        Ok(Self {
            features,
            num_features,
            labels,
            num_classes,
            split,
            class_names: (0..num_classes).map(|c| c.to_string()).collect(),
            feature_names: (0..num_features).map(|j| format!("x{j}")).collect(),
            encodings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Sample ids are positions; this is `0..len`.
    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.len()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.features[id * self.num_features..(id + 1) * self.num_features]
    }

    pub fn features_tensor(&self) -> Tensor {
        Tensor::new(vec![self.len(), self.num_features], self.features.clone()).expect("validated shape")
    }

    /// New dataset holding `rows` (in order) with ids renumbered from 0.
    pub fn subset(&self, rows: &[usize], split: Split) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.num_features);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let mut out = Self::new(features, self.num_features, labels, self.num_classes, split)?;
        out.class_names = self.class_names.clone();
        out.feature_names = self.feature_names.clone();
        out.encodings = self.encodings.clone();
        Ok(out)
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        let mut out = self.clone();
        if labels.len() != self.len() || labels.iter().any(|&y| y >= self.num_classes) {
            return Err(Error::Dataset("replacement labels do not fit the dataset".into()));
        }
        out.labels = labels;
        Ok(out)
    }

    /// Cheap content fingerprint (FNV-1a over feature bits and labels).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        self.features.iter().for_each(|v| eat(v.to_bits()));
        self.labels.iter().for_each(|&y| eat(y as u64));
        h
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("last".into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label: LabelColumn::default(),
            has_header: true,
            delimiter: b',',
        }
    }
}

struct RawTable {
    path: PathBuf,
    header: Option<Vec<String>>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path, opts: &CsvOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let header = if opts.has_header {
        Some(reader.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Dataset(format!("{}: no data rows", path.display())));
    }
    Ok(RawTable {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

fn resolve_label(label: &LabelColumn, header: Option<&[String]>, width: usize) -> Result<usize> {
    let idx = match label {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(n) if n == "last" => width - 1,
        LabelColumn::Name(n) if n == "first" => 0,
        LabelColumn::Name(n) => header
            .and_then(|h| h.iter().position(|c| c == n))
            .ok_or_else(|| Error::Dataset(format!("label column {n:?} not found")))?,
    };
    if idx >= width {
        return Err(Error::Dataset(format!("label column index {idx} outside {width} columns")));
    }
    Ok(idx)
}

/// Loads one CSV file as a training split.
///
/// Columns whose first value does not parse as a number are treated as
/// categorical and one-hot encoded (categories in first-appearance order);
/// in numeric columns every cell must parse. Labels are mapped to dense
/// indices in first-appearance order.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<LabeledDataset> {
    let table = read_table(path, opts)?;
    let mut parsed = encode_tables(&[table], opts)?;
    Ok(parsed.remove(0))
}

/// Loads a train/test pair sharing one class map and categorical encoding.
pub fn load_csv_pair(train: &Path, test: &Path, opts: &CsvOptions) -> Result<(LabeledDataset, LabeledDataset)> {
    let tables = vec![read_table(train, opts)?, read_table(test, opts)?];
    let mut parsed = encode_tables(&tables, opts)?;
    let mut test_ds = parsed.pop().expect("two tables");
    test_ds.split = Split::Test;
    Ok((parsed.pop().expect("two tables"), test_ds))
}

fn encode_tables(tables: &[RawTable], opts: &CsvOptions) -> Result<Vec<LabeledDataset>> {
    let first = &tables[0];
    let width = first.header.as_ref().map_or(first.rows[0].1.len(), Vec::len);
    let label_idx = resolve_label(&opts.label, first.header.as_deref(), width)?;
    let col_name = |j: usize| {
        first
            .header
            .as_ref()
            .and_then(|h| h.get(j).cloned())
            .unwrap_or_else(|| format!("column {j}"))
    };

    for t in tables {
        for (line, row) in &t.rows {
            if row.len() != width {
                return Err(Error::Parse {
                    path: t.path.clone(),
                    row: *line,
                    column: "*".into(),
                    message: format!("expected {width} fields, found {}", row.len()),
                });
            }
        }
    }

    // Column kinds and category/class maps, in first-appearance order over all tables.
    let first_row = &first.rows[0].1;
    let categorical: Vec<bool> = (0..width)
        .map(|j| j != label_idx && first_row[j].parse::<f64>().is_err())
        .collect();
    let mut categories: Vec<Vec<String>> = vec![Vec::new(); width];
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    for t in tables {
        for (_, row) in &t.rows {
            for j in (0..width).filter(|&j| categorical[j]) {
                if !categories[j].contains(&row[j]) {
                    categories[j].push(row[j].clone());
                }
            }
            let y = &row[label_idx];
            if !class_index.contains_key(y) {
                class_index.insert(y.clone(), class_names.len());
                class_names.push(y.clone());
            }
        }
    }

    let mut feature_names = Vec::new();
    let mut encodings = Vec::new();
    for j in (0..width).filter(|&j| j != label_idx) {
        if categorical[j] {
            for c in &categories[j] {
                feature_names.push(format!("{}={c}", col_name(j)));
            }
            encodings.push(CategoricalEncoding {
                column: col_name(j),
                categories: categories[j].clone(),
            });
        } else {
            feature_names.push(col_name(j));
        }
    }
    let num_features = feature_names.len();
    if num_features == 0 {
        return Err(Error::Dataset("no feature columns".into()));
    }

    let mut out = Vec::with_capacity(tables.len());
    for (ti, t) in tables.iter().enumerate() {
        let mut features = Vec::with_capacity(t.rows.len() * num_features);
        let mut labels = Vec::with_capacity(t.rows.len());
        for (line, row) in &t.rows {
            for j in (0..width).filter(|&j| j != label_idx) {
                if categorical[j] {
                    let hot = categories[j].iter().position(|c| c == &row[j]).expect("collected");
                    features.extend((0..categories[j].len()).map(|c| if c == hot { 1.0 } else { 0.0 }));
                } else {
                    let v: f64 = row[j].parse().map_err(|_| Error::Parse {
                        path: t.path.clone(),
                        row: *line,
                        column: col_name(j),
                        message: format!("cannot parse {:?} as a number", row[j]),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            path: t.path.clone(),
                            row: *line,
                            column: col_name(j),
                            message: "non-finite value".into(),
                        });
                    }
                    features.push(v);
                }
            }
            labels.push(class_index[&row[label_idx]]);
        }
        let split = if ti == 0 { Split::Train } else { Split::Test };
        let mut ds = LabeledDataset::new(features, num_features, labels, class_names.len(), split)?;
        ds.class_names = class_names.clone();
        ds.feature_names = feature_names.clone();
        ds.encodings = encodings.clone();
        out.push(ds);
    }
    Ok(out)
}

/// Seeded random split; returns `(train, test, test_rows)` where `test_rows`
/// are the source row positions that went to the test split.
pub fn train_test_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(precondition(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let n = ds.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(precondition(format!("cannot split {n} samples with fraction {test_fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_rows, train_rows) = order.split_at(n_test);
    let mut test_rows = test_rows.to_vec();
    let mut train_rows = train_rows.to_vec();
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok((ds.subset(&train_rows, Split::Train)?, ds.subset(&test_rows, Split::Test)?, test_rows))
}

/// Per-feature statistics computed on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(ds: &LabeledDataset) -> Self {
        let d = ds.num_features();
        let n = ds.len() as f64;
        let mut mean = vec![0.0; d];
        for id in ds.ids() {
            for (m, &v) in mean.iter_mut().zip(ds.row(id)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for id in ds.ids() {
            for ((s, &v), &m) in var.iter_mut().zip(ds.row(id)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Self { mean, std }
    }

    fn is_constant(&self, j: usize) -> bool {
        self.std[j] <= 1e-12 * self.mean[j].abs().max(1.0)
    }

    pub fn apply(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        let d = ds.num_features();
        if d != self.mean.len() {
            return Err(Error::Shape {
                op: "normalize",
                left: vec![self.mean.len()],
                right: vec![d],
            });
        }
        let mut out = ds.clone();
        for (k, v) in out.features.iter_mut().enumerate() {
            let j = k % d;
            *v = if self.is_constant(j) {
                0.0
            } else {
                (*v - self.mean[j]) / self.std[j]
            };
        }
        Ok(out)
    }
}

/// Z-scores both splits with statistics from `train` only. Zero-variance
/// features become 0.
pub fn zscore_normalize(
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<(LabeledDataset, LabeledDataset, NormStats)> {
    if train.is_empty() {
        return Err(precondition("cannot normalize with an empty training split"));
    }
    let stats = NormStats::fit(train);
    Ok((stats.apply(train)?, stats.apply(test)?, stats))
}

/// Which samples had their labels redrawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub rate: f64,
    pub seed: u64,
    pub indices: Vec<usize>,
}

impl Corruption {
    pub fn indices_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &i in &self.indices {
            for b in (i as u64).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Selects exactly `round(rate·N)` training samples and redraws each label
/// uniformly from all `C` classes (a redraw may hit the original label).
pub fn corrupt_labels(ds: &LabeledDataset, rate: f64, seed: u64) -> Result<(LabeledDataset, Corruption)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(precondition(format!("corruption rate must be in [0, 1], got {rate}")));
    }
    if ds.split == Split::Test {
        return Err(precondition("test labels are never corrupted"));
    }
    let n = ds.len();
    let m = ((n as f64) * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = index::sample(&mut rng, n, m).into_vec();
    indices.sort_unstable();
    let mut labels = ds.labels().to_vec();
    for &i in &indices {
        labels[i] = rng.random_range(0..ds.num_classes());
    }
    Ok((ds.with_labels(labels)?, Corruption { rate, seed, indices }))
}

/// `C` isotropic unit-variance Gaussian clusters in `D` dimensions whose
/// centers have mean pairwise distance `separation`, split 80/20 per class.
pub fn gaussian_blobs(
    n_per_class: usize,
    num_classes: usize,
    dims: usize,
    separation: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if n_per_class < 2 || num_classes == 0 || dims == 0 {
        return Err(precondition("blob counts must be positive (and ≥ 2 samples per class)"));
    }
    if !(separation >= 0.0) {
        return Err(precondition("separation must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut dist_sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..num_classes {
        for b in a + 1..num_classes {
            let d2: f64 = centers[a].iter().zip(&centers[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            dist_sum += d2.sqrt();
            pairs += 1;
        }
    }
    let scale = if pairs > 0 && dist_sum > 0.0 {
        separation / (dist_sum / pairs as f64)
    } else {
        0.0
    };
    centers.iter_mut().flatten().for_each(|v| *v *= scale);

    let n_train = ((n_per_class as f64) * 0.8).round() as usize;
    let n_train = n_train.clamp(1, n_per_class - 1);
    let (mut tr_x, mut tr_y, mut te_x, mut te_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (c, center) in centers.iter().enumerate() {
        for i in 0..n_per_class {
            let (xs, ys) = if i < n_train { (&mut tr_x, &mut tr_y) } else { (&mut te_x, &mut te_y) };
            for &mu in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                xs.push(mu + noise);
            }
            ys.push(c);
        }
    }
    Ok((
        LabeledDataset::new(tr_x, dims, tr_y, num_classes, Split::Train)?,
        LabeledDataset::new(te_x, dims, te_y, num_classes, Split::Test)?,
    ))
}

/// Seeded per-epoch permutations.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    batch_size: usize,
    rng: ChaCha8Rng,
}

/// One mini-batch; `ids` address rows of the dataset and the soft-label store.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl BatchPlan {
    pub fn new(seed: u64, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(precondition("batch size must be ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Dedicated stream so batching never shares draws with initialization.
        rng.set_stream(1);
        Ok(Self { batch_size, rng })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// The next epoch's id order, chunked into `⌈N/B⌉` batches.
    pub fn next_epoch_ids(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Materializes the next epoch of batches for `ds`.
pub fn epoch_batches(plan: &mut BatchPlan, ds: &LabeledDataset) -> Vec<Batch> {
    let d = ds.num_features();
    plan.next_epoch_ids(ds.len())
        .into_iter()
        .map(|ids| {
            let mut x = Vec::with_capacity(ids.len() * d);
            for &id in &ids {
                x.extend_from_slice(ds.row(id));
            }
            let labels = ids.iter().map(|&id| ds.labels()[id]).collect();
            Batch {
                features: Tensor::new(vec![ids.len(), d], x).expect("batch shape"),
                labels,
                ids,
            }
        })
        .collect()
}
