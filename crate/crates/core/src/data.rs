//! Multi-view datasets: in-memory representation, on-disk format,
//! per-view normalization and a seeded synthetic generator.
//!
//! Views are stored features × samples, so every column is one sample.
//!
//! On disk a dataset is a JSON manifest
//! `{"name": ..., "views": [{"path": ...}], "labels": path-or-null}` whose
//! paths are resolved against the manifest's directory. View files are
//! headerless CSV (row = feature, column = sample) and labels are one
//! integer per line.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spread of each latent blob around its center.
const BLOB_SIGMA: f64 = 0.1;
/// Outlier magnitude as a multiple of the clean view's standard deviation.
const OUTLIER_SCALE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub name: String,
    pub views: Vec<DMatrix<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    /// Builds a dataset and checks every structural invariant.
    pub fn new(
        name: impl Into<String>,
        views: Vec<DMatrix<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let ds = MultiViewDataset {
            name: name.into(),
            views,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.views.first() else {
            return Err(Error::InvalidInput("dataset has no views".into()));
        };
        let n = first.ncols();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        for (v, x) in self.views.iter().enumerate() {
            if x.nrows() == 0 {
                return Err(Error::InvalidInput(format!("view {v} has no features")));
            }
            if x.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "view {v} has {} samples, view 0 has {n}",
                    x.ncols()
                )));
            }
            if let Some(pos) = x.iter().position(|a| !a.is_finite()) {
                let (i, j) = (pos % x.nrows(), pos / x.nrows());
                return Err(Error::InvalidInput(format!(
                    "view {v} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
            check_label_classes(labels)?;
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }

    /// Number of ground-truth classes, if labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |c| c + 1))
    }
}

fn check_label_classes(labels: &[usize]) -> Result<()> {
    let c = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut seen = vec![false; c];
    for &l in labels {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidInput(format!(
            "labels span 0..{c} but class {missing} never occurs"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    #[default]
    None,
    UnitColumnL2,
    ZscorePerFeature,
}

impl std::str::FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "unit-column-l2" => Ok(Self::UnitColumnL2),
            "zscore-per-feature" | "zscore" => Ok(Self::ZscorePerFeature),
            other => Err(Error::InvalidInput(format!(
                "unknown normalization mode {other:?}"
            ))),
        }
    }
}

/// Applies `mode` to every view independently.
pub fn normalize(ds: &MultiViewDataset, mode: NormalizationMode) -> MultiViewDataset {
    let mut out = ds.clone();
    match mode {
        NormalizationMode::None => {}
        NormalizationMode::UnitColumnL2 => {
            for x in &mut out.views {
                for mut col in x.column_iter_mut() {
                    let norm = col.norm();
                    if norm > 0.0 {
                        col /= norm;
                    }
                }
            }
        }
        NormalizationMode::ZscorePerFeature => {
            for x in &mut out.views {
                let n = x.ncols() as f64;
                for mut row in x.row_iter_mut() {
                    let mean = row.sum() / n;
                    let var = row.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    if sd > 0.0 {
                        row.apply(|a| *a = (*a - mean) / sd);
                    } else {
                        row.fill(0.0);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub c: usize,
    pub m: usize,
    pub dims: Vec<usize>,
    pub noise_sigma: f64,
    pub corrupt_frac: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 300,
            c: 5,
            m: 3,
            dims: vec![40, 30, 20],
            noise_sigma: 0.05,
            corrupt_frac: 0.0,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::InvalidInput(format!("c = {} < 2", self.c)));
        }
        if self.n < self.c {
            return Err(Error::InvalidInput(format!(
                "n = {} is smaller than c = {}",
                self.n, self.c
            )));
        }
        if self.m == 0 || self.dims.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "m = {} but {} view dimensions given",
                self.m,
                self.dims.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidInput("view dimension 0".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_sigma = {} must be a finite value >= 0",
                self.noise_sigma
            )));
        }
        if !(0.0..=0.5).contains(&self.corrupt_frac) {
            return Err(Error::InvalidInput(format!(
                "corrupt_frac = {} outside [0, 0.5]",
                self.corrupt_frac
            )));
        }
        Ok(())
    }
}

/// A generated dataset together with the latent points it was built from.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: MultiViewDataset,
    /// `c × n` latent coordinates before the view maps.
    pub latent: DMatrix<f64>,
}

/// Draws `c` Gaussian blobs centred on the scaled basis vectors of a
/// `c`-dimensional latent space, maps them into each view with a random
/// near-orthonormal linear map, adds Gaussian noise and finally replaces a
/// `corrupt_frac` share of each view's entries with uniform outliers.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, c) = (spec.n, spec.c);

    let labels: Vec<usize> = (0..n).map(|j| j % c).collect();
    let blob = Normal::new(0.0, BLOB_SIGMA).expect("positive sigma");
    let mut latent = DMatrix::<f64>::zeros(c, n);
    for (j, &l) in labels.iter().enumerate() {
        for i in 0..c {
            let center = if i == l { 1.0 } else { 0.0 };
            latent[(i, j)] = center + blob.sample(&mut rng);
        }
    }

    let mut views = Vec::with_capacity(spec.m);
    for &d in &spec.dims {
        let scale = 1.0 / (d as f64).sqrt();
        let map = DMatrix::<f64>::from_fn(d, c, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        let mut x = &map * &latent;
        if spec.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, spec.noise_sigma).expect("checked sigma");
            x.apply(|a| *a += noise.sample(&mut rng));
        }
        let total = d * n;
        let n_corrupt = (spec.corrupt_frac * total as f64).round() as usize;
        if n_corrupt > 0 {
            let mean = x.mean();
            let sd = (x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / total as f64).sqrt();
            let bound = OUTLIER_SCALE * sd;
            for pos in index::sample(&mut rng, total, n_corrupt) {
                x.as_mut_slice()[pos] = rng.random_range(-bound..=bound);
            }
        }
        views.push(x);
    }

    let dataset = MultiViewDataset::new(
        format!("synthetic-n{n}-c{c}-m{}-seed{}", spec.m, spec.seed),
        views,
        Some(labels),
    )?;
    Ok(SynthOutput { dataset, latent })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub views: Vec<ViewEntry>,
    pub labels: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewEntry {
    pub path: String,
}

pub fn load_dataset(manifest_path: &Path) -> Result<MultiViewDataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    if manifest.views.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: manifest lists no views",
            manifest_path.display()
        )));
    }

    let mut views = Vec::with_capacity(manifest.views.len());
    let mut n = None;
    for entry in &manifest.views {
        let path = base.join(&entry.path);
        let x = read_matrix_csv(&path)?;
        match n {
            None => n = Some(x.ncols()),
            Some(expected) if expected != x.ncols() => {
                return Err(Error::InconsistentSamples {
                    path,
                    expected,
                    found: x.ncols(),
                });
            }
            Some(_) => {}
        }
        views.push(x);
    }

    let labels = match &manifest.labels {
        Some(rel) => {
            let path = base.join(rel);
            let labels = read_labels(&path)?;
            let expected = n.unwrap_or(0);
            if labels.len() != expected {
                return Err(Error::InconsistentSamples {
                    path,
                    expected,
                    found: labels.len(),
                });
            }
            Some(labels)
        }
        None => None,
    };

    MultiViewDataset::new(manifest.name, views, labels)
}

/// Writes `manifest.json`, `view{v}.csv` and (when present) `labels.csv`
/// into `dir`, returning the manifest path.
pub fn write_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.views.len());
    for (v, x) in ds.views.iter().enumerate() {
        let file = format!("view{v}.csv");
        write_matrix_csv(&dir.join(&file), x)?;
        entries.push(ViewEntry { path: file });
    }
    let labels = match &ds.labels {
        Some(labels) => {
            write_labels(&dir.join("labels.csv"), labels)?;
            Some("labels.csv".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        name: ds.name.clone(),
        views: entries,
        labels,
    };
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a headerless numeric CSV into a rows × columns matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (ci, cell) in line.split(',').enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: li + 1,
                column: ci + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: li + 1,
                    column: ci + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: li + 1,
                    column: row.len().min(first.len()) + 1,
                    message: format!("row has {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "empty matrix file".into(),
        });
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a matrix as headerless CSV using the shortest decimal form that
/// parses back to the identical `f64`.
pub fn write_matrix_csv(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(x.len() * 12);
    for row in x.row_iter() {
        for (j, a) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&a.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(li, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: li + 1,
                column: 1,
                message: format!("not a non-negative integer label: {l:?}"),
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::{kmeans, KMeansConfig};
    use crate::metrics::accuracy;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn loads_two_view_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2,3,4\n5,6,7,8\n9,10,11,12\n");
        write(dir.path(), "b.csv", "0.5,0.25,-1,2e3\n1,1,1,1\n");
        write(
            dir.path(),
            "m.json",
            r#"{"name": "toy", "views": [{"path": "a.csv"}, {"path": "b.csv"}], "labels": null}"#,
        );
        let ds = load_dataset(&dir.path().join("m.json")).unwrap();
        assert_eq!(ds.n_views(), 2);
        assert_eq!(ds.n_samples(), 4);
        assert_eq!(ds.dims(), vec![3, 2]);
        assert_eq!(ds.views[1][(0, 3)], 2000.0);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn inconsistent_sample_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2,3,4\n");
        write(dir.path(), "b.csv", "1,2,3,4,5\n");
        write(
            dir.path(),
            "m.json",
            r#"{"name": "bad", "views": [{"path": "a.csv"}, {"path": "b.csv"}], "labels": null}"#,
        );
        let err = load_dataset(&dir.path().join("m.json")).unwrap_err();
        match err {
            Error::InconsistentSamples {
                path,
                expected,
                found,
            } => {
                assert!(path.ends_with("b.csv"));
                assert_eq!((expected, found), (4, 5));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn labels_define_class_count() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2,3,4\n");
        write(dir.path(), "y.txt", "0\n2\n1\n2\n");
        write(
            dir.path(),
            "m.json",
            r#"{"name": "l", "views": [{"path": "a.csv"}], "labels": "y.txt"}"#,
        );
        let ds = load_dataset(&dir.path().join("m.json")).unwrap();
        assert_eq!(ds.n_classes(), Some(3));
    }

    #[test]
    fn parse_errors_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2\n3,abc\n");
        let err = read_matrix_csv(&dir.path().join("a.csv")).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn label_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2,3\n");
        write(dir.path(), "y.txt", "0\n1\n");
        write(
            dir.path(),
            "m.json",
            r#"{"name": "l", "views": [{"path": "a.csv"}], "labels": "y.txt"}"#,
        );
        assert!(matches!(
            load_dataset(&dir.path().join("m.json")),
            Err(Error::InconsistentSamples { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(&dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn normalize_modes() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 0.0]);
        let ds = MultiViewDataset::new("t", vec![x], None).unwrap();
        assert_eq!(normalize(&ds, NormalizationMode::None), ds);

        let unit = normalize(&ds, NormalizationMode::UnitColumnL2);
        assert!((unit.views[0][(0, 0)] - 0.6).abs() < 1e-15);
        assert!((unit.views[0][(1, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(unit.views[0][(0, 1)], 0.0);
        assert_eq!(normalize(&unit, NormalizationMode::UnitColumnL2), unit);

        let row = DMatrix::from_row_slice(2, 3, &[5.0, 5.0, 5.0, 1.0, 2.0, 3.0]);
        let ds = MultiViewDataset::new("z", vec![row], None).unwrap();
        let z = normalize(&ds, NormalizationMode::ZscorePerFeature);
        assert_eq!(z.views[0].row(0).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
        let r1: Vec<f64> = z.views[0].row(1).iter().copied().collect();
        assert!(r1.iter().sum::<f64>().abs() < 1e-12);
        let var = r1.iter().map(|a| a * a).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corrupt_fraction_bounds() {
        let mut spec = SynthSpec {
            n: 20,
            c: 2,
            m: 1,
            dims: vec![4],
            corrupt_frac: 0.5,
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(&spec).is_ok());
        spec.corrupt_frac = 0.6;
        assert!(matches!(
            generate_synthetic(&spec),
            Err(Error::InvalidInput(_))
        ));
        spec.corrupt_frac = 0.0;
        spec.n = 1;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SynthSpec {
            corrupt_frac: 0.1,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let other = generate_synthetic(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.dataset.views[0], other.dataset.views[0]);
    }

    #[test]
    fn synthetic_corruption_count() {
        let spec = SynthSpec {
            n: 50,
            c: 2,
            m: 1,
            dims: vec![10],
            noise_sigma: 0.0,
            corrupt_frac: 0.2,
            seed: 3,
        };
        let clean = generate_synthetic(&SynthSpec {
            corrupt_frac: 0.0,
            ..spec.clone()
        })
        .unwrap();
        let dirty = generate_synthetic(&spec).unwrap();
        let changed = clean.dataset.views[0]
            .iter()
            .zip(dirty.dataset.views[0].iter())
            .filter(|(a, b)| a != b)
            .count();
        // Uniform draws collide with the clean value with probability zero.
        assert_eq!(changed, 100);
    }

    #[test]
    fn latent_blobs_are_kmeans_separable() {
        let out = generate_synthetic(&SynthSpec::default()).unwrap();
        let cfg = KMeansConfig {
            c: 5,
            seed: 7,
            ..KMeansConfig::default()
        };
        let res = kmeans(&out.latent, &cfg).unwrap();
        let acc = accuracy(&res.labels, out.dataset.labels.as_ref().unwrap()).unwrap();
        assert!(acc >= 0.99, "latent ACC {acc}");
    }

    #[test]
    fn write_then_load_is_exact() {
        let out = generate_synthetic(&SynthSpec {
            n: 30,
            c: 3,
            m: 2,
            dims: vec![5, 4],
            corrupt_frac: 0.1,
            ..SynthSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&out.dataset, dir.path()).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back, out.dataset);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn csv_round_trip_is_bit_exact(
                vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 12)
            ) {
                let x = DMatrix::from_vec(3, 4, vals);
                let dir = tempfile::tempdir().unwrap();
                let p = dir.path().join("x.csv");
                write_matrix_csv(&p, &x).unwrap();
                let back = read_matrix_csv(&p).unwrap();
                for (a, b) in x.iter().zip(back.iter()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }

            #[test]
            fn unit_l2_is_idempotent(vals in proptest::collection::vec(-100.0f64..100.0, 12)) {
                let ds = MultiViewDataset::new("p", vec![DMatrix::from_vec(4, 3, vals)], None).unwrap();
                let once = normalize(&ds, NormalizationMode::UnitColumnL2);
                let twice = normalize(&once, NormalizationMode::UnitColumnL2);
                for (a, b) in once.views[0].iter().zip(twice.views[0].iter()) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }
    }
}
