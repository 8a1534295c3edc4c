//! Turns the `[dataset]` section into train/test splits.

use retrolearn::data::{
    gaussian_blobs, load_csv, load_csv_pair, train_test_split, zscore_normalize, LabeledDataset, NormStats,
};
use serde::Serialize;

use crate::config::{DatasetKind, LoadedConfig};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub norm: Option<NormStats>,
    /// Source rows that went to the test split, for single-file datasets.
    pub test_rows: Option<Vec<usize>>,
}

/// What the manifest records about the data a run saw.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub categorical: Vec<retrolearn::data::CategoricalEncoding>,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub normalization: Option<NormStats>,
    pub test_split_rows: Option<Vec<usize>>,
}

impl PreparedData {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            name: self.name.clone(),
            train_rows: self.train.len(),
            test_rows: self.test.len(),
            num_features: self.train.num_features(),
            num_classes: self.train.num_classes(),
            class_names: self.train.class_names.clone(),
            feature_names: self.train.feature_names.clone(),
            categorical: self.train.encodings.clone(),
            train_fingerprint: format!("{:016x}", self.train.fingerprint()),
            test_fingerprint: format!("{:016x}", self.test.fingerprint()),
            normalization: self.norm.clone(),
            test_split_rows: self.test_rows.clone(),
        }
    }
}

pub fn prepare(loaded: &LoadedConfig) -> Result<PreparedData, CliError> {
    let d = &loaded.config.dataset;
    let (train, test, test_rows) = match d.kind {
        DatasetKind::Blobs => {
            let (tr, te) = gaussian_blobs(d.n_per_class, d.classes, d.dims, d.separation, d.blob_seed)
                .map_err(|e| CliError::config(format!("dataset: {e}")))?;
            (tr, te, None)
        }
        DatasetKind::Csv => {
            let train_path = d
                .train
                .as_ref()
                .ok_or_else(|| CliError::config("dataset.train is required for csv datasets"))?;
            let train_path = loaded.resolve(train_path);
            let opts = d.csv_options()?;
            if !train_path.exists() {
                return Err(CliError::data(format!("dataset file {} does not exist", train_path.display())));
            }
            match &d.test {
                Some(test_path) => {
                    let test_path = loaded.resolve(test_path);
                    if !test_path.exists() {
                        return Err(CliError::data(format!(
                            "dataset file {} does not exist",
                            test_path.display()
                        )));
                    }
                    let (tr, te) = load_csv_pair(&train_path, &test_path, &opts)?;
                    (tr, te, None)
                }
                None => {
                    let all = load_csv(&train_path, &opts)?;
                    let (tr, te, rows) = train_test_split(&all, d.test_fraction, d.split_seed)?;
                    (tr, te, Some(rows))
                }
            }
        }
    };
    let (train, test, norm) = if d.normalize {
        let (tr, te, stats) = zscore_normalize(&train, &test)?;
        (tr, te, Some(stats))
    } else {
        (train, test, None)
    };
    Ok(PreparedData {
        name: d.display_name(),
        train,
        test,
        norm,
        test_rows,
    })
}
