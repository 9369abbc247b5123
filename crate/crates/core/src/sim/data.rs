//! Labeled datasets: the synthetic Gaussian mixture, CSV import and IID
//! sharding.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    classes: usize,
    x: Vec<f64>,
    y: Vec<usize>,
}

impl Dataset {
    /// Row-major features; every label must be below `classes`.
    pub fn new(features: usize, classes: usize, x: Vec<f64>, y: Vec<usize>) -> Result<Self> {
        if features == 0 || x.len() != features * y.len() {
            return Err(Error::DimensionMismatch {
                expected: features * y.len(),
                actual: x.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidInput(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self { features, classes, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.y[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.y
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.features);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            features: self.features,
            classes: self.classes,
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Settings of the builtin Gaussian-mixture task.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "defaults::features")]
    pub features: usize,
    #[serde(default = "defaults::classes")]
    pub classes: usize,
    #[serde(default = "defaults::train")]
    pub train: usize,
    #[serde(default = "defaults::test")]
    pub test: usize,
    /// Standard deviation of the class means; samples have unit noise.
    #[serde(default = "defaults::separation")]
    pub separation: f64,
}

mod defaults {
    pub fn features() -> usize {
        64
    }
    pub fn classes() -> usize {
        10
    }
    pub fn train() -> usize {
        5000
    }
    pub fn test() -> usize {
        1000
    }
    pub fn separation() -> f64 {
        0.3
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            features: defaults::features(),
            classes: defaults::classes(),
            train: defaults::train(),
            test: defaults::test(),
            separation: defaults::separation(),
        }
    }
}

/// Class `k` draws from `N(μ_k, I)` with `μ_k ~ N(0, separation² I)`;
/// labels cycle through the classes so every class is balanced.
pub fn synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if spec.classes < 2 || spec.features == 0 {
        return Err(Error::Config("synthetic task needs two classes and one feature".into()));
    }
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    spec.separation * z
                })
                .collect()
        })
        .collect();
    let mut draw = |n: usize| {
        let mut x = Vec::with_capacity(n * spec.features);
        let y: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        for &label in &y {
            for mu in &means[label] {
                let z: f64 = StandardNormal.sample(rng);
                x.push(mu + z);
            }
        }
        Dataset::new(spec.features, spec.classes, x, y)
    };
    let train = draw(spec.train)?;
    let test = draw(spec.test)?;
    Ok((train, test))
}

/// Parses headerless CSV rows; the last column is the integer label.
/// `classes` defaults to one more than the largest label.
pub fn parse_csv(text: &str, classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut features = None;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "need at least one feature and a label".into(),
            });
        }
        let width = record.len() - 1;
        if *features.get_or_insert(width) != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, got {}", features.unwrap_or(0) + 1, record.len()),
            });
        }
        for cell in record.iter().take(width) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric feature `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite feature `{cell}`"),
                });
            }
            x.push(v);
        }
        let cell = &record[width];
        y.push(cell.parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric label `{cell}`"),
        })?);
    }
    let features = features.ok_or_else(|| Error::Parse {
        line: 0,
        message: "no rows".into(),
    })?;
    let classes = classes.unwrap_or_else(|| y.iter().max().map_or(0, |m| m + 1));
    Dataset::new(features, classes, x, y)
}

pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    parse_csv(&std::fs::read_to_string(path)?, classes)
}

/// Shuffles and splits into `users` equal shards; leftover rows are dropped.
pub fn shard_iid<R: Rng + ?Sized>(data: &Dataset, users: usize, rng: &mut R) -> Result<Vec<Dataset>> {
    if users == 0 || data.len() < users {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot fill {users} shards",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let size = data.len() / users;
    Ok(idx.chunks_exact(size).take(users).map(|c| data.subset(c)).collect())
}

/// Random held-out split: `(train, test)` with `test_fraction` of the rows
/// in the test part.
pub fn split<R: Rng + ?Sized>(data: &Dataset, test_fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
    let n_test = (data.len() as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= data.len() {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} leaves an empty side of {} rows",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    Ok((data.subset(&idx[n_test..]), data.subset(&idx[..n_test])))
}
