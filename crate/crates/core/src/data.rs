//! Concentric-spheres dataset: generation, squared-feature basis and
//! feature normalization.

use crate::error::{Error, Result};
use crate::math::{derive_seed, fnv1a, stable_norm};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
        }
    }
}

/// Geometry and sizes of the two-spheres problem.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SphereConfig {
    pub dim: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig {
            dim: 500,
            inner_radius: 1.0,
            outer_radius: 1.3,
            n_train: 1000,
            n_val: 100_000,
            seed: 0,
        }
    }
}

impl SphereConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("dim must be >= 2, got {}", self.dim)));
        }
        if !(self.inner_radius > 0.0) || !self.inner_radius.is_finite() {
            return Err(Error::Config(format!(
                "inner_radius must be positive, got {}",
                self.inner_radius
            )));
        }
        if !(self.outer_radius > self.inner_radius) || !self.outer_radius.is_finite() {
            return Err(Error::Config(format!(
                "outer_radius must exceed inner_radius, got {} <= {}",
                self.outer_radius, self.inner_radius
            )));
        }
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::Config("n_train and n_val must be positive".into()));
        }
        Ok(())
    }

    /// Radius of the sphere carrying the given class label.
    pub fn radius_of(&self, label: u8) -> f64 {
        if label == 0 {
            self.inner_radius
        } else {
            self.outer_radius
        }
    }

    /// Stable fingerprint over the canonical field encoding.
    pub fn fingerprint(&self) -> u64 {
        let mut s = String::new();
        let _ = write!(
            s,
            "dim={};ri={};ro={};nt={};nv={};seed={}",
            self.dim,
            self.inner_radius.to_bits(),
            self.outer_radius.to_bits(),
            self.n_train,
            self.n_val,
            self.seed
        );
        fnv1a(s.as_bytes())
    }
}

/// Points on the two spheres with their labels. Inner sphere carries
/// label 0, outer sphere label 1; labels are a deterministic function of
/// the row norm.
#[derive(Debug, Clone)]
pub struct SphereDataset {
    pub points: Array2<f64>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl SphereDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Squared-feature matrix of all points.
    pub fn features(&self) -> Array2<f64> {
        feature_map_matrix(self.points.view())
    }
}

/// Draw `n` points i.i.d. uniform on the sphere of the given radius, by
/// normalizing standard Gaussian vectors.
pub fn sample_sphere(dim: usize, radius: f64, n: usize, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if dim < 2 {
        return Err(Error::Config(format!("dim must be >= 2, got {dim}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Config(format!("radius must be positive, got {radius}")));
    }
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let mut out = Array2::zeros((n, dim));
    for mut row in out.rows_mut() {
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = stable_norm(row.view());
            if norm > 0.0 && norm.is_finite() {
                let scale = radius / norm;
                row.mapv_inplace(|v| v * scale);
                break;
            }
        }
    }
    Ok(out)
}

/// Elementwise square of one input point.
pub fn feature_map(x: ArrayView1<'_, f64>) -> Array1<f64> {
    x.mapv(|v| v * v)
}

/// Elementwise square of a matrix of points, row per point.
pub fn feature_map_matrix(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.mapv(|v| v * v)
}

/// Per-column z-score statistics, fit on training features only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
}

impl FeatureNormalizer {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Identity normalizer; used where features are already standardized.
    pub fn identity(dim: usize) -> Self {
        FeatureNormalizer {
            means: Array1::zeros(dim),
            stds: Array1::ones(dim),
        }
    }

    pub fn normalize(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "normalizer fitted for {} columns, got {}",
                self.dim(),
                features.ncols()
            )));
        }
        let mut out = features.to_owned();
        self.normalize_in_place(&mut out);
        Ok(out)
    }

    pub fn normalize_in_place(&self, features: &mut Array2<f64>) {
        for mut row in features.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
    }

    pub fn normalize_row(&self, feature_row: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = feature_row.to_owned();
        for (j, v) in out.iter_mut().enumerate() {
            *v = (*v - self.means[j]) / self.stds[j];
        }
        out
    }

    /// Inverse transform; recovers inputs to within 1e-12 relative error.
    pub fn denormalize(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "normalizer fitted for {} columns, got {}",
                self.dim(),
                features.ncols()
            )));
        }
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.stds[j] + self.means[j];
            }
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        push_row(&mut s, self.means.iter());
        push_row(&mut s, self.stds.iter());
        std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut rows = text.lines();
        let means = parse_float_row(rows.next().unwrap_or(""), path)?;
        let stds = parse_float_row(rows.next().unwrap_or(""), path)?;
        if means.len() != stds.len() || means.is_empty() {
            return Err(Error::parse(
                path.display().to_string(),
                "normalizer file must hold two equal-length rows",
            ));
        }
        Ok(FeatureNormalizer {
            means: Array1::from(means),
            stds: Array1::from(stds),
        })
    }
}

/// Per-column sample mean and sample standard deviation (divisor n-1) of
/// the training features.
pub fn fit_normalizer(train_features: ArrayView2<'_, f64>) -> Result<FeatureNormalizer> {
    let n = train_features.nrows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "need at least two rows to fit a normalizer".into(),
        ));
    }
    let means = train_features.mean_axis(Axis(0)).expect("n >= 2");
    let mut stds = Array1::zeros(train_features.ncols());
    for (j, col) in train_features.axis_iter(Axis(1)).enumerate() {
        let m = means[j];
        let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let var = ss / (n as f64 - 1.0);
        if var <= 0.0 {
            return Err(Error::DegenerateData(format!(
                "feature column {j} has zero variance"
            )));
        }
        stds[j] = var.sqrt();
    }
    Ok(FeatureNormalizer { means, stds })
}

/// Generate both splits deterministically from the config seed.
///
/// Each split draws half its points on the inner sphere (label 0) and half
/// on the outer sphere (label 1); an odd count leaves the extra point on
/// the inner sphere.
pub fn generate(config: &SphereConfig) -> Result<(SphereDataset, SphereDataset)> {
    config.validate()?;
    let train = generate_split(config, Split::Train)?;
    let val = generate_split(config, Split::Val)?;
    Ok((train, val))
}

pub fn generate_split(config: &SphereConfig, split: Split) -> Result<SphereDataset> {
    config.validate()?;
    let n = match split {
        Split::Train => config.n_train,
        Split::Val => config.n_val,
    };
    let n_inner = n - n / 2;
    let n_outer = n / 2;
    let tag = match split {
        Split::Train => "data/train",
        Split::Val => "data/val",
    };
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(config.seed, tag, 0));
    let mut points = Array2::zeros((n, config.dim));
    let mut labels = vec![0u8; n];
    if n_inner > 0 {
        let inner = sample_sphere(config.dim, config.inner_radius, n_inner, &mut rng)?;
        points.slice_mut(ndarray::s![..n_inner, ..]).assign(&inner);
    }
    if n_outer > 0 {
        let outer = sample_sphere(config.dim, config.outer_radius, n_outer, &mut rng)?;
        points.slice_mut(ndarray::s![n_inner.., ..]).assign(&outer);
        for l in labels[n_inner..].iter_mut() {
            *l = 1;
        }
    }
    Ok(SphereDataset {
        points,
        labels,
        split,
    })
}

fn push_row<'a>(s: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            s.push(',');
        }
        let _ = write!(s, "{v}");
        first = false;
    }
    s.push('\n');
}

fn parse_float_row(line: &str, path: &Path) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path.display().to_string(), format!("bad float {tok:?}")))
        })
        .collect()
}

impl SphereDataset {
    /// CSV with one row per point: D coordinates then the label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let mut line = String::new();
        for (row, label) in self.points.rows().into_iter().zip(&self.labels) {
            line.clear();
            for v in row.iter() {
                let _ = write!(line, "{v},");
            }
            let _ = writeln!(line, "{label}");
            w.write_all(line.as_bytes())
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_csv(path: &Path, split: Split) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let mut vals = parse_float_row(line, path)?;
            let label = vals
                .pop()
                .ok_or_else(|| Error::parse(path.display().to_string(), "empty row"))?;
            if label != 0.0 && label != 1.0 {
                return Err(Error::parse(
                    path.display().to_string(),
                    format!("label must be 0 or 1, got {label}"),
                ));
            }
            labels.push(label as u8);
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::parse(path.display().to_string(), "no rows"));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::parse(
                path.display().to_string(),
                "ragged rows in dataset file",
            ));
        }
        let mut points = Array2::zeros((rows.len(), dim));
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                points[[i, j]] = *v;
            }
        }
        Ok(SphereDataset {
            points,
            labels,
            split,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SPHCACH1";

/// Cache file name for a config; the key covers every config field
/// including the seed.
pub fn cache_file_name(config: &SphereConfig) -> String {
    format!("dataset_{:016x}.bin", config.fingerprint())
}

/// Write both splits to a binary cache keyed by the config fingerprint.
pub fn write_cache(
    path: &Path,
    config: &SphereConfig,
    train: &SphereDataset,
    val: &SphereDataset,
) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path.display().to_string(), e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    w.write_all(&config.fingerprint().to_le_bytes()).map_err(io)?;
    w.write_all(&(config.dim as u64).to_le_bytes()).map_err(io)?;
    for ds in [train, val] {
        w.write_all(&(ds.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&ds.labels).map_err(io)?;
        for v in ds.points.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Read the cache back; fails if the fingerprint does not match the config.
pub fn read_cache(path: &Path, config: &SphereConfig) -> Result<(SphereDataset, SphereDataset)> {
    let mut file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::parse(p.clone(), "truncated cache file"));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 8)? != CACHE_MAGIC {
        return Err(Error::parse(p, "bad cache magic"));
    }
    let key = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
    if key != config.fingerprint() {
        return Err(Error::parse(p, "cache key does not match config"));
    }
    let dim = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
    let mut splits = Vec::with_capacity(2);
    for split in [Split::Train, Split::Val] {
        let n = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
        let labels = take(&mut off, n)?.to_vec();
        let mut points = Array2::zeros((n, dim));
        for i in 0..n {
            for j in 0..dim {
                let b = take(&mut off, 8)?;
                points[[i, j]] = f64::from_le_bytes(b.try_into().unwrap());
            }
        }
        splits.push(SphereDataset {
            points,
            labels,
            split,
        });
    }
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn test_rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn sample_sphere_2d_row_on_circle() {
        let mut rng = test_rng(1);
        let m = sample_sphere(2, 1.0, 1, &mut rng).unwrap();
        let c = m[[0, 0]];
        let s = m[[0, 1]];
        assert!((c * c + s * s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_sphere_500d_row_norms() {
        let mut rng = test_rng(2);
        let m = sample_sphere(500, 1.3, 1000, &mut rng).unwrap();
        for row in m.rows() {
            let norm = stable_norm(row);
            assert!((norm - 1.3).abs() <= 1e-9 * 1.3);
        }
    }

    #[test]
    fn sample_sphere_coordinate_means_vanish() {
        // Monte-Carlo symmetry check: analytic per-coordinate mean is 0 with
        // variance 1/D, so the sample mean stays within 4/sqrt(D*n).
        let mut rng = test_rng(3);
        let n = 100_000;
        let m = sample_sphere(3, 1.0, n, &mut rng).unwrap();
        let bound = 4.0 / ((3 * n) as f64).sqrt();
        for j in 0..3 {
            let mean = m.column(j).mean().unwrap();
            assert!(mean.abs() < bound, "coordinate {j}: {mean} vs {bound}");
        }
    }

    #[test]
    fn sample_sphere_marginal_second_moment() {
        // E[(<u,x>/r)^2] = 1/D for any fixed unit direction u.
        let dim = 5;
        let n = 100_000;
        let mut rng = test_rng(4);
        let m = sample_sphere(dim, 2.0, n, &mut rng).unwrap();
        let mut u = Array1::zeros(dim);
        u[0] = (0.5f64).sqrt();
        u[2] = -(0.5f64).sqrt();
        let projs: Vec<f64> = m
            .rows()
            .into_iter()
            .map(|row| (row.dot(&u) / 2.0).powi(2))
            .collect();
        let mean: f64 = projs.iter().sum::<f64>() / n as f64;
        let var: f64 = projs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        let expect = 1.0 / dim as f64;
        assert!(
            (mean - expect).abs() < 5.0 * se,
            "second moment {mean} vs {expect} (5se = {})",
            5.0 * se
        );
    }

    #[test]
    fn sample_sphere_rejects_bad_inputs() {
        let mut rng = test_rng(5);
        assert!(matches!(
            sample_sphere(1, 1.0, 1, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            sample_sphere(3, -1.0, 1, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            sample_sphere(3, 1.0, 0, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_map_squares() {
        let out = feature_map(array![1.0, 2.0].view());
        assert_eq!(out, array![1.0, 4.0]);
        let zeros = feature_map(Array1::zeros(4).view());
        assert_eq!(zeros, Array1::zeros(4));
        let signed = feature_map(array![-3.0, 0.5].view());
        assert_eq!(signed, array![9.0, 0.25]);
    }

    proptest! {
        #[test]
        fn feature_map_is_even(xs in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let x = Array1::from(xs);
            let neg = x.mapv(|v| -v);
            prop_assert_eq!(feature_map(x.view()), feature_map(neg.view()));
        }

        #[test]
        fn normalize_then_denormalize_is_identity(
            seed in 0u64..1000,
            n in 3usize..20,
            d in 2usize..6,
        ) {
            let mut rng = test_rng(seed);
            let pts = sample_sphere(d, 1.0, n, &mut rng).unwrap();
            let feats = feature_map_matrix(pts.view());
            if let Ok(norm) = fit_normalizer(feats.view()) {
                let fwd = norm.normalize(feats.view()).unwrap();
                let back = norm.denormalize(fwd.view()).unwrap();
                for (a, b) in feats.iter().zip(back.iter()) {
                    let scale = a.abs().max(1e-30);
                    prop_assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
                }
            }
        }
    }

    #[test]
    fn fit_normalizer_two_point_column() {
        let feats = array![[1.0], [3.0]];
        let norm = fit_normalizer(feats.view()).unwrap();
        assert!((norm.means[0] - 2.0).abs() < 1e-15);
        assert!((norm.stds[0] - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fit_normalizer_idempotent_on_standardized() {
        let mut rng = test_rng(6);
        let pts = sample_sphere(4, 1.0, 200, &mut rng).unwrap();
        let feats = feature_map_matrix(pts.view());
        let norm = fit_normalizer(feats.view()).unwrap();
        let z = norm.normalize(feats.view()).unwrap();
        let norm2 = fit_normalizer(z.view()).unwrap();
        for j in 0..4 {
            assert!(norm2.means[j].abs() < 1e-10);
            assert!((norm2.stds[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_normalizer_rejects_constant_column() {
        let feats = array![[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]];
        assert!(matches!(
            fit_normalizer(feats.view()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn normalized_train_columns_standard_at_500d() {
        let config = SphereConfig {
            n_train: 300,
            n_val: 10,
            seed: 11,
            ..SphereConfig::default()
        };
        let train = generate_split(&config, Split::Train).unwrap();
        let feats = train.features();
        let norm = fit_normalizer(feats.view()).unwrap();
        let z = norm.normalize(feats.view()).unwrap();
        let recheck = fit_normalizer(z.view()).unwrap();
        for j in 0..config.dim {
            assert!(recheck.means[j].abs() < 1e-10, "col {j}");
            assert!((recheck.stds[j] - 1.0).abs() < 1e-10, "col {j}");
        }
    }

    #[test]
    fn normalize_of_the_means_row_is_zero() {
        let feats = array![[1.0, 5.0], [3.0, 9.0]];
        let norm = fit_normalizer(feats.view()).unwrap();
        let row = norm.normalize_row(norm.means.view());
        assert_eq!(row, Array1::zeros(2));
    }

    #[test]
    fn val_columns_not_centered_by_train_statistics() {
        let config = SphereConfig {
            dim: 20,
            n_train: 100,
            n_val: 100,
            seed: 12,
            ..SphereConfig::default()
        };
        let (train, val) = generate(&config).unwrap();
        let norm = fit_normalizer(train.features().view()).unwrap();
        let z = norm.normalize(val.features().view()).unwrap();
        let max_mean = z
            .axis_iter(Axis(1))
            .map(|col| col.mean().unwrap().abs())
            .fold(0.0f64, f64::max);
        assert!(max_mean > 1e-12, "val means exactly zero is implausible");
    }

    #[test]
    fn normalize_dimension_mismatch() {
        let norm = FeatureNormalizer::identity(3);
        let feats = Array2::<f64>::zeros((2, 4));
        assert!(matches!(
            norm.normalize(feats.view()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn generate_is_deterministic_and_labeled_by_norm() {
        let config = SphereConfig {
            dim: 10,
            n_train: 31,
            n_val: 17,
            seed: 42,
            ..SphereConfig::default()
        };
        let (t1, v1) = generate(&config).unwrap();
        let (t2, _) = generate(&config).unwrap();
        assert_eq!(t1.points, t2.points);
        assert_eq!(t1.labels, t2.labels);
        assert_eq!(t1.len(), 31);
        assert_eq!(v1.len(), 17);
        // odd count: inner gets the extra point
        assert_eq!(t1.labels.iter().filter(|&&l| l == 0).count(), 16);
        for (row, &label) in t1.points.rows().into_iter().zip(&t1.labels) {
            let r = config.radius_of(label);
            assert!((stable_norm(row) - r).abs() <= 1e-9 * r);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let config = SphereConfig {
            dim: 4,
            n_train: 9,
            n_val: 5,
            seed: 3,
            ..SphereConfig::default()
        };
        let (train, _) = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        train.write_csv(&path).unwrap();
        let back = SphereDataset::read_csv(&path, Split::Train).unwrap();
        assert_eq!(back.points, train.points);
        assert_eq!(back.labels, train.labels);
    }

    #[test]
    fn cache_roundtrip_and_key_check() {
        let config = SphereConfig {
            dim: 6,
            n_train: 8,
            n_val: 4,
            seed: 9,
            ..SphereConfig::default()
        };
        let (train, val) = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(cache_file_name(&config));
        write_cache(&path, &config, &train, &val).unwrap();
        let (t2, v2) = read_cache(&path, &config).unwrap();
        assert_eq!(t2.points, train.points);
        assert_eq!(v2.points, val.points);
        assert_eq!(v2.labels, val.labels);

        let other = SphereConfig {
            seed: 10,
            ..config.clone()
        };
        assert!(matches!(
            read_cache(&path, &other),
            Err(Error::Parse { .. })
        ));
    }
}
