//! Feature files, split files, reports and the synthetic domain-shift generator.
//!
//! Feature files come in two forms:
//!
//! * CSV: one instance per line, comma-separated values written as `%.17g`, no header.
//! * Binary: the magic bytes `CPLS`, `u32` rows, `u32` cols (little-endian), then
//!   `rows * cols` little-endian IEEE-754 `f64` values in row-major order.
//!
//! The loader detects the binary form from the magic bytes. Label files hold one base-10
//! integer per line.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::capls::IterationRecord;
use crate::preprocess::{Domain, FeatureMatrix};
use crate::slpp::LabeledDataset;
use crate::zsl::ZslSplit;
use crate::{Error, Real, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"CPLS";
pub const REPORT_FORMAT: u32 = 1;

/// Formats like C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a feature matrix in either format.
pub fn load_matrix<T: Real>(path: &Path, domain: Domain) -> Result<FeatureMatrix<T>> {
    let bytes = read(path)?;
    let data = if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(path, &bytes)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 0, "not UTF-8 text"))?;
        decode_csv(path, &text)?
    };
    FeatureMatrix::new(data.mapv(T::of), domain)
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 12 {
        return Err(parse_err(path, 0, "truncated binary header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let body = &bytes[12..];
    if body.len() != rows * cols * 8 {
        return Err(parse_err(
            path,
            0,
            format!("binary body holds {} bytes, header implies {}", body.len(), rows * cols * 8),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

fn decode_csv(path: &Path, text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    for (i, line) in lines[..last].iter().enumerate() {
        let line_no = i + 1;
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid number {:?}", field.trim())))?;
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(parse_err(path, line_no, format!("expected {c} columns, found {n}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(path, 1, "no rows"))?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape tracked"))
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 0, "not UTF-8 text"))?;
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    lines[..last]
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(path, i + 1, format!("invalid label {:?}", l.trim())))
        })
        .collect()
}

/// Features plus labels. The class count is `max(label) + 1`.
pub fn load_features<T: Real>(
    features_path: &Path,
    labels_path: &Path,
    domain: Domain,
) -> Result<LabeledDataset<T>> {
    let features = load_matrix(features_path, domain)?;
    let labels = load_labels(labels_path)?;
    if labels.len() != features.rows() {
        return Err(Error::RowCountMismatch {
            features: features.rows(),
            labels: labels.len(),
        });
    }
    LabeledDataset::from_labels(features, labels)
}

pub fn encode_csv<T: Real>(x: &FeatureMatrix<T>) -> String {
    let mut out = String::new();
    for row in x.data().rows() {
        let fields: Vec<String> = row.iter().map(|v| format_g17(v.f64())).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn encode_binary<T: Real>(x: &FeatureMatrix<T>) -> Result<Vec<u8>> {
    let dims = |v: usize| u32::try_from(v).map_err(|_| Error::Config(format!("dimension {v} exceeds u32")));
    let mut out = Vec::with_capacity(12 + x.rows() * x.cols() * 8);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&dims(x.rows())?.to_le_bytes());
    out.extend_from_slice(&dims(x.cols())?.to_le_bytes());
    for v in x.data().iter() {
        out.extend_from_slice(&v.f64().to_le_bytes());
    }
    Ok(out)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_features_csv<T: Real>(x: &FeatureMatrix<T>, path: &Path) -> Result<()> {
    write(path, encode_csv(x).as_bytes())
}

pub fn save_features_binary<T: Real>(x: &FeatureMatrix<T>, path: &Path) -> Result<()> {
    write(path, &encode_binary(x)?)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut s = String::new();
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    write(path, s.as_bytes())
}

pub fn load_split(path: &Path) -> Result<ZslSplit> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_split(split: &ZslSplit, path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(split).expect("split serialises");
    write(path, s.as_bytes())
}

/// Named domains sharing one label space and feature dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle<T> {
    pub name: String,
    pub domains: BTreeMap<String, LabeledDataset<T>>,
    pub class_names: Vec<String>,
}

impl<T: Real> DatasetBundle<T> {
    pub fn domain(&self, name: &str) -> Option<&LabeledDataset<T>> {
        self.domains.get(name)
    }
}

/// Parameters of the rotated Gaussian-blob benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_per_class_source: usize,
    pub n_per_class_target: usize,
    pub dim: usize,
    /// Distance between class means, in units of the (unit) blob standard deviation.
    pub class_sep: f64,
    /// Rotation of the target in one seeded coordinate plane, radians.
    pub rotation: f64,
    /// Length of the translation applied to every target instance.
    pub translation: f64,
    /// Standard deviation of the extra noise added to target instances.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_per_class_source: 100,
            n_per_class_target: 100,
            dim: 32,
            class_sep: 4.0,
            rotation: PI / 6.0,
            translation: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_classes == 0 || self.n_per_class_source == 0 || self.n_per_class_target == 0 {
            return bad("class and per-class counts must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.rotation != 0.0 && self.dim < 2 {
            return bad("rotation needs dim >= 2");
        }
        if !(self.class_sep > 0.0) || !self.class_sep.is_finite() {
            return bad("class_sep must be positive");
        }
        if !(self.noise >= 0.0) || !self.translation.is_finite() || !self.rotation.is_finite() {
            return bad("noise must be non-negative and shift parameters finite");
        }
        Ok(())
    }
}

/// Source and target domains of seeded Gaussian blobs.
///
/// Class means lie at `class_sep / √2` along random unit directions, so two means are
/// `class_sep` apart on average in high dimension. Target instances are fresh draws from
/// the source distribution, rotated in a random coordinate plane, translated along a
/// random unit direction, and perturbed with extra Gaussian noise.
pub fn generate_synthetic<T: Real>(cfg: &SynthConfig) -> Result<DatasetBundle<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let radius = cfg.class_sep / 2f64.sqrt();
    let means: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| {
            let u = unit_vector(&mut rng, d);
            u.into_iter().map(|v| v * radius).collect()
        })
        .collect();
    let plane = if d >= 2 {
        let idx = sample(&mut rng, d, 2);
        (idx.index(0), idx.index(1))
    } else {
        (0, 0)
    };
    let shift = unit_vector(&mut rng, d);

    let blob = |rng: &mut ChaCha8Rng, per_class: usize| {
        let n = per_class * cfg.n_classes;
        let mut x = Array2::<f64>::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for c in 0..cfg.n_classes {
            for k in 0..per_class {
                let r = c * per_class + k;
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    x[[r, j]] = means[c][j] + z;
                }
                labels.push(c);
            }
        }
        (x, labels)
    };

    let (xs, ys) = blob(&mut rng, cfg.n_per_class_source);
    let (mut xt, yt) = blob(&mut rng, cfg.n_per_class_target);
    let (cos, sin) = (cfg.rotation.cos(), cfg.rotation.sin());
    for mut row in xt.rows_mut() {
        if cfg.rotation != 0.0 {
            let (a, b) = (row[plane.0], row[plane.1]);
            row[plane.0] = cos * a - sin * b;
            row[plane.1] = sin * a + cos * b;
        }
        for (j, v) in row.iter_mut().enumerate() {
            *v += cfg.translation * shift[j];
            if cfg.noise > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                *v += cfg.noise * z;
            }
        }
    }

    let source = LabeledDataset::new(FeatureMatrix::new(xs.mapv(T::of), Domain::Source)?, ys, cfg.n_classes)?;
    let target = LabeledDataset::new(FeatureMatrix::new(xt.mapv(T::of), Domain::Target)?, yt, cfg.n_classes)?;
    let mut domains = BTreeMap::new();
    domains.insert("source".to_string(), source);
    domains.insert("target".to_string(), target);
    Ok(DatasetBundle {
        name: format!("synthetic-seed{}", cfg.seed),
        domains,
        class_names: (0..cfg.n_classes).map(|c| format!("class{c}")).collect(),
    })
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub capls: String,
    pub report_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            capls: env!("CARGO_PKG_VERSION").to_string(),
            report_format: REPORT_FORMAT,
        }
    }
}

/// JSON run report with the top-level keys `config`, `trace`, `metrics` and `versions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub trace: Vec<IterationRecord>,
    pub metrics: serde_json::Value,
    pub versions: Versions,
}

pub fn save_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(report).expect("report serialises");
    write(path, s.as_bytes())
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(0.0001), "0.0001");
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(1e16), "10000000000000000");
        assert_eq!(format_g17(1e17), "1e+17");
    }

    #[test]
    fn csv_two_rows() {
        let x = decode_csv(Path::new("x"), "1.0,2.0\n3.0,4.0\n").unwrap();
        assert_eq!(x, array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        match decode_csv(Path::new("f.csv"), "1,2\n3,x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match decode_csv(Path::new("f.csv"), "1,2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_header_checks() {
        assert!(decode_binary(Path::new("b"), b"CPLS\x01\x00").is_err());
        let mut bytes = b"CPLS".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.5f64.to_le_bytes());
        assert!(decode_binary(Path::new("b"), &bytes).is_err());
        bytes.extend_from_slice(&(-3.0f64).to_le_bytes());
        assert_eq!(decode_binary(Path::new("b"), &bytes).unwrap(), array![[1.5, -3.0]]);
    }

    #[test]
    fn synth_validation() {
        let cfg = SynthConfig {
            dim: 1,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = SynthConfig {
            dim: 1,
            rotation: 0.0,
            n_classes: 1,
            ..Default::default()
        };
        cfg.validate().unwrap();
        let cfg = SynthConfig {
            class_sep: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = SynthConfig {
            translation: 1.0,
            noise: 0.3,
            ..Default::default()
        };
        let a: DatasetBundle<f64> = generate_synthetic(&cfg).unwrap();
        let b: DatasetBundle<f64> = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c: DatasetBundle<f64> = generate_synthetic(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.domain("source").unwrap().len(), 1000);
        assert_eq!(a.domain("target").unwrap().features().cols(), 32);
    }

    proptest! {
        #[test]
        fn g17_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let s = format_g17(x);
            prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }
}
