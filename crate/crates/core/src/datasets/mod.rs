//! Labelled feature tables, their CSV forms, stratified splitting and the
//! mapping of feature rows onto unit-power input fields.

mod modulation;
mod planar;

pub use modulation::{
    analytic_signal, extract_features, extract_features_real, gen_modfmt_dataset, gen_modulated_signals, FeatureConfig,
    Modulation, ModulationFeatures, SignalConfig, MODFMT_FEATURES,
};
pub use planar::{gen_ring, gen_triangle, ring_class, triangle_class, RING_CLASSES, TRIANGLE_CLASSES};

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::C64;
use crate::network::Samples;
use crate::rng::{substream, STREAM_SPLIT};

/// Real feature rows with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(d) = features.first().map(Vec::len) {
            if features.iter().any(|r| r.len() != d) {
                return Err(Error::shape("feature rows differ in length"));
            }
        }
        if features.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label {l} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature count per row.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut t = vec![0.0; self.classes()];
        t[self.labels[i]] = 1.0;
        t
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Rescale every column onto `[0, 1]` in place and return the map used.
    pub fn minmax_scale(&mut self) -> Scaling {
        let scaling = Scaling::fit(&self.features);
        for row in &mut self.features {
            scaling.apply(row);
        }
        scaling
    }

    pub fn apply_scaling(&mut self, scaling: &Scaling) -> Result<()> {
        if scaling.min.len() != self.dim() {
            return Err(Error::shape(format!(
                "scaling for {} columns applied to {} features",
                scaling.min.len(),
                self.dim()
            )));
        }
        for row in &mut self.features {
            scaling.apply(row);
        }
        Ok(())
    }

    /// Write `f1,...,fd,label` with class names as labels.
    pub fn write_csv(&self, path: &Path, header: Option<&[&str]>) -> Result<()> {
        let mut out = String::new();
        match header {
            Some(cols) => out.push_str(&cols.join(",")),
            None => {
                let cols: Vec<String> = (1..=self.dim()).map(|k| format!("f{k}")).collect();
                out.push_str(&cols.join(","));
            }
        }
        out.push_str(",label\n");
        for (row, &l) in self.features.iter().zip(&self.labels) {
            for x in row {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&self.class_names[l]);
            out.push('\n');
        }
        crate::fsio::write_atomic(path, out.as_bytes())
    }
}

/// Per-column min-max map. Constant columns map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaling {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in rows {
            for (k, &x) in row.iter().enumerate() {
                min[k] = min[k].min(x);
                max[k] = max[k].max(x);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((x, lo), hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvSchema {
    /// UCI iris: four measurements then the species name.
    Iris,
    /// UCI wine: cultivar 1-3 then thirteen measurements, no header.
    Wine,
}

pub const IRIS_CLASSES: [&str; 3] = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"];
pub const WINE_CLASSES: [&str; 3] = ["1", "2", "3"];

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn parse_number(path: &Path, row: usize, field: &str) -> Result<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, row, format!("not a number: {field:?}")))?;
    if !x.is_finite() {
        return Err(parse_err(path, row, format!("non-finite value {field:?}")));
    }
    Ok(x)
}

const IRIS_DATA: &str = include_str!("../../data/iris.data");
const WINE_DATA: &str = include_str!("../../data/wine.data");

/// Read a UCI table without rescaling.
pub fn read_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    parse_uci(&crate::fsio::read_to_string(path)?, path, schema)
}

/// The copy of a UCI table shipped with the crate, unscaled.
pub fn bundled(schema: CsvSchema) -> Dataset {
    let (text, name) = match schema {
        CsvSchema::Iris => (IRIS_DATA, "iris.data"),
        CsvSchema::Wine => (WINE_DATA, "wine.data"),
    };
    parse_uci(text, Path::new(name), schema).expect("bundled tables are well formed")
}

/// Parse UCI text; `origin` only labels errors.
pub fn parse_uci(text: &str, origin: &Path, schema: CsvSchema) -> Result<Dataset> {
    let path = origin;
    let (columns, classes): (usize, &[&str]) = match schema {
        CsvSchema::Iris => (5, &IRIS_CLASSES),
        CsvSchema::Wine => (14, &WINE_CLASSES),
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(parse_err(
                path,
                row,
                format!("expected {columns} columns, found {}", fields.len()),
            ));
        }
        let (label, values) = match schema {
            CsvSchema::Iris => (fields[4], &fields[..4]),
            CsvSchema::Wine => (fields[0], &fields[1..]),
        };
        let label = label.trim();
        let class = classes
            .iter()
            .position(|c| *c == label)
            .ok_or_else(|| parse_err(path, row, format!("unknown label {label:?}")))?;
        features.push(
            values
                .iter()
                .map(|f| parse_number(path, row, f))
                .collect::<Result<Vec<_>>>()?,
        );
        labels.push(class);
    }
    if features.is_empty() {
        return Err(parse_err(path, 0, "no data rows"));
    }
    Dataset::new(features, labels, classes.iter().map(|c| c.to_string()).collect())
}

/// Read a UCI table and min-max scale each feature column to `[0, 1]`.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    let mut ds = read_csv(path, schema)?;
    ds.minmax_scale();
    Ok(ds)
}

/// Read a headed CSV whose last column is a class name. With `classes`
/// unset the class list is the sorted set of names found.
pub fn read_labeled_csv(path: &Path, classes: Option<&[String]>) -> Result<Dataset> {
    let text = crate::fsio::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 0, "empty file"))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(parse_err(path, 1, "header needs at least one feature and a label"));
    }
    let mut features = Vec::new();
    let mut names = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(parse_err(
                path,
                row,
                format!("expected {columns} columns, found {}", fields.len()),
            ));
        }
        features.push(
            fields[..columns - 1]
                .iter()
                .map(|f| parse_number(path, row, f))
                .collect::<Result<Vec<_>>>()?,
        );
        names.push((row, fields[columns - 1].trim().to_string()));
    }
    if features.is_empty() {
        return Err(parse_err(path, 0, "no data rows"));
    }
    let class_names: Vec<String> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut c: Vec<String> = names.iter().map(|(_, n)| n.clone()).collect();
            c.sort();
            c.dedup();
            c
        }
    };
    let labels = names
        .iter()
        .map(|(row, n)| {
            class_names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| parse_err(path, *row, format!("unknown label {n:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(features, labels, class_names)
}

/// Stratified shuffle split. The train total is `round(fraction · n)`,
/// shared between classes by largest remainder; every class keeps at least
/// one row on each side.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes()];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, rows)) = by_class.iter().enumerate().find(|(_, r)| !r.is_empty() && r.len() < 2) {
        return Err(Error::invalid(format!(
            "class {:?} has {} row(s); stratified split needs at least 2",
            ds.class_names[c],
            rows.len()
        )));
    }

    let ideal: Vec<f64> = by_class.iter().map(|r| r.len() as f64 * train_fraction).collect();
    let mut quota: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let target = (ds.len() as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(quota.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] + 1 < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    for (q, rows) in quota.iter_mut().zip(&by_class) {
        if !rows.is_empty() {
            *q = (*q).clamp(1, rows.len() - 1);
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, rows) in by_class.iter().enumerate() {
        let mut rows = rows.clone();
        rows.shuffle(&mut substream(seed, STREAM_SPLIT, c as u64, 0));
        train.extend_from_slice(&rows[..quota[c]]);
        test.extend_from_slice(&rows[quota[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// `[x_1, ..., x_d, 1, 0, ...]` normalised to unit power. The constant port
/// keeps the overall scale of the row visible after normalisation.
pub fn encode_input(row: &[f64], width: usize) -> Result<Vec<C64>> {
    if row.len() + 1 > width {
        return Err(Error::shape(format!(
            "{} features plus a bias port do not fit {width} ports",
            row.len()
        )));
    }
    let mut amps = vec![0.0; width];
    amps[..row.len()].copy_from_slice(row);
    amps[row.len()] = 1.0;
    Ok(normalize(&amps))
}

fn normalize(amps: &[f64]) -> Vec<C64> {
    let norm = amps.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        amps.iter().map(|x| C64::new(x / norm, 0.0)).collect()
    } else {
        let u = 1.0 / (amps.len() as f64).sqrt();
        vec![C64::new(u, 0.0); amps.len()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// Features plus a constant bias port, see [`encode_input`].
    Biased,
    /// Features alone, zero-padded and normalised; an all-zero row becomes
    /// the uniform field.
    Plain,
}

impl InputEncoding {
    /// Biased when a spare port exists, plain when the features fill the mesh.
    pub fn for_dims(dim: usize, width: usize) -> Result<Self> {
        if dim < width {
            Ok(Self::Biased)
        } else if dim == width {
            Ok(Self::Plain)
        } else {
            Err(Error::shape(format!("{dim} features do not fit {width} ports")))
        }
    }

    pub fn encode(self, row: &[f64], width: usize) -> Result<Vec<C64>> {
        match self {
            Self::Biased => encode_input(row, width),
            Self::Plain => {
                if row.len() > width {
                    return Err(Error::shape(format!("{} features do not fit {width} ports", row.len())));
                }
                let mut amps = vec![0.0; width];
                amps[..row.len()].copy_from_slice(row);
                Ok(normalize(&amps))
            }
        }
    }
}

pub fn encode_dataset(ds: &Dataset, width: usize, encoding: InputEncoding) -> Result<Samples> {
    let fields = ds
        .features
        .iter()
        .map(|row| encoding.encode(row, width))
        .collect::<Result<Vec<_>>>()?;
    Samples::new(width, ds.classes(), fields, ds.labels.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::fs;
    use std::path::PathBuf;

    fn data_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
    }

    #[test]
    fn iris_shape() {
        let ds = load_csv(&data_dir().join("iris.data"), CsvSchema::Iris).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes()), (150, 4, 3));
        assert_eq!(ds.class_counts(), vec![50, 50, 50]);
        for k in 0..4 {
            let col: Vec<f64> = ds.features().iter().map(|r| r[k]).collect();
            assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
    }

    #[test]
    fn wine_shape() {
        let ds = load_csv(&data_dir().join("wine.data"), CsvSchema::Wine).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes()), (178, 13, 3));
        assert_eq!(ds.class_counts(), vec![59, 71, 48]);
    }

    #[test]
    fn bundled_tables_match_files() {
        for schema in [CsvSchema::Iris, CsvSchema::Wine] {
            let name = if schema == CsvSchema::Iris {
                "iris.data"
            } else {
                "wine.data"
            };
            assert_eq!(bundled(schema), read_csv(&data_dir().join(name), schema).unwrap());
        }
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.data");
        fs::write(&empty, "").unwrap();
        assert!(matches!(read_csv(&empty, CsvSchema::Iris), Err(Error::Parse { .. })));

        let short = dir.path().join("short.data");
        fs::write(&short, "5.1,3.5,1.4,0.2,Iris-setosa\n5.1,3.5,1.4,Iris-setosa\n").unwrap();
        match read_csv(&short, CsvSchema::Iris) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }

        let unknown = dir.path().join("unknown.data");
        fs::write(&unknown, "5.1,3.5,1.4,0.2,Iris-setosa\n\n5.1,3.5,1.4,0.2,Iris-nova\n").unwrap();
        match read_csv(&unknown, CsvSchema::Iris) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 3);
                assert!(message.contains("Iris-nova"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_csv(&dir.path().join("missing"), CsvSchema::Wine),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn labeled_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_triangle(40, 3).unwrap();
        let path = dir.path().join("tri.csv");
        ds.write_csv(&path, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("f1,f2,label\n"));
        let back = read_labeled_csv(&path, Some(ds.class_names())).unwrap();
        assert_eq!(back, ds);
        let sorted = read_labeled_csv(&path, None).unwrap();
        assert_eq!(sorted.class_names(), ds.class_names());
    }

    #[test]
    fn split_sizes() {
        let ds = gen_triangle(400, 1).unwrap();
        let (train, test) = split(&ds, 0.8, 9).unwrap();
        assert_eq!((train.len(), test.len()), (320, 80));

        let iris = load_csv(&data_dir().join("iris.data"), CsvSchema::Iris).unwrap();
        let (train, test) = split(&iris, 0.8, 9).unwrap();
        assert_eq!((train.len(), test.len()), (120, 30));
        for (a, b) in train.class_counts().iter().zip(test.class_counts()) {
            assert!((39..=41).contains(a));
            assert!((9..=11).contains(&b));
        }
    }

    #[test]
    fn split_preserves_proportions_and_is_deterministic() {
        let ds = gen_ring(403, 5).unwrap();
        let (a_train, a_test) = split(&ds, 0.7, 42).unwrap();
        let (b_train, b_test) = split(&ds, 0.7, 42).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        for (c, &n) in ds.class_counts().iter().enumerate() {
            let got = a_train.class_counts()[c] as f64;
            assert!((got - 0.7 * n as f64).abs() <= 1.0);
        }
        let (c_train, _) = split(&ds, 0.7, 43).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn split_rejects_tiny_classes() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0, 1], vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(split(&ds, 0.5, 0), Err(Error::InvalidParameter(_))));
        assert!(split(&gen_triangle(50, 0).unwrap(), 1.0, 0).is_err());
    }

    #[test]
    fn encode_examples() {
        let bias_only = encode_input(&[0.0, 0.0], 5).unwrap();
        assert_eq!(bias_only, [0.0, 0.0, 1.0, 0.0, 0.0].map(|x| C64::new(x, 0.0)).to_vec());

        let v = encode_input(&[3.0, 4.0], 5).unwrap();
        let r = 26f64.sqrt();
        for (got, want) in v.iter().zip([3.0 / r, 4.0 / r, 1.0 / r, 0.0, 0.0]) {
            assert_abs_diff_eq!(got.re, want, epsilon = 1e-15);
            assert_eq!(got.im, 0.0);
        }
        assert!(matches!(encode_input(&[1.0, 2.0], 2), Err(Error::Shape(_))));
    }

    #[test]
    fn encoding_selection() {
        assert_eq!(InputEncoding::for_dims(2, 5).unwrap(), InputEncoding::Biased);
        assert_eq!(InputEncoding::for_dims(4, 4).unwrap(), InputEncoding::Plain);
        assert!(InputEncoding::for_dims(5, 4).is_err());
        let plain = InputEncoding::Plain.encode(&[0.0; 4], 4).unwrap();
        assert_abs_diff_eq!(plain.iter().map(|z| z.norm_sqr()).sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
