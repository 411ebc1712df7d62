use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::{Dataset, Estimator, FitOptions};
use crate::simgen::{ScenarioConfig, ShapeKind, ShapeSpec};
use crate::tensor::Matrix;

use super::{read_tensor, write_tensor};

/// Flat `key = value` document; `#` starts a comment.
#[derive(Clone, Debug)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config {
                path: path.clone(),
                line: line_no,
                msg,
            };
            if line.starts_with('[') {
                return Err(err("sections are not supported".into()));
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(format!("invalid key {key:?}")));
            }
            if entries.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
                return Err(err(format!("duplicate key {key:?}")));
            }
        }
        Ok(KeyValues { path, entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Fails on the first key outside `allowed`, naming its line.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        let mut unknown: Vec<(usize, &str)> = self
            .entries
            .iter()
            .filter(|(k, _)| !allowed.contains(&k.as_str()))
            .map(|(k, (_, line))| (*line, k.as_str()))
            .collect();
        unknown.sort();
        match unknown.first() {
            Some(&(line, key)) => Err(self.error(line, format!("unknown key {key:?}"))),
            None => Ok(()),
        }
    }

    fn error(&self, line: usize, msg: String) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            msg,
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| self.error(*line, format!("bad value for {key}: {e}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::Config {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing key {key:?}"),
        })
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|e| self.error(*line, format!("bad list for {key}: {e}"))),
        }
    }
}

/// Parses a comma-separated list such as `2,3,4`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| Error::invalid(format!("bad list entry {v:?}: {e}")))
        })
        .collect()
}

/// Simulation scenario plus the estimator settings used on it.
#[derive(Clone, Debug)]
pub struct ScenarioFile {
    pub config: ScenarioConfig,
    pub estimators: Vec<Estimator>,
    pub fit: FitOptions,
    /// Write wall-clock seconds per replication instead of `NA`.
    pub record_timings: bool,
}

const SCENARIO_KEYS: &[&str] = &[
    "dims",
    "p",
    "n",
    "snr",
    "sigma0_sq",
    "u",
    "fit_u",
    "reps",
    "seed",
    "shape",
    "size",
    "radius",
    "estimators",
    "tol",
    "max_iter",
    "starts",
    "center",
    "record_timings",
];

impl ScenarioFile {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.check_keys(SCENARIO_KEYS)?;
        let shape = match kv.raw("shape") {
            None => None,
            Some(s) => {
                let mut kind: ShapeKind = s.parse()?;
                if let (ShapeKind::Disk(r), Some(radius)) = (&mut kind, kv.get::<f64>("radius")?) {
                    *r = Some(radius);
                }
                if let ShapeKind::MaskFile(path) = &mut kind {
                    if path.is_relative() {
                        if let Some(dir) = kv.path().parent() {
                            *path = dir.join(&*path);
                        }
                    }
                }
                Some(ShapeSpec::new(kind, kv.get("size")?.unwrap_or(64)))
            }
        };
        let dims = match &shape {
            Some(s) => vec![s.size, s.size],
            None => kv.get_list("dims")?.unwrap_or_else(|| vec![20, 30, 40]),
        };
        let u: Vec<usize> = match kv.get_list("u")? {
            Some(u) => u,
            None => {
                return Err(Error::Config {
                    path: kv.path().to_path_buf(),
                    line: 0,
                    msg: "missing key \"u\"".into(),
                })
            }
        };
        let config = ScenarioConfig {
            dims,
            p: kv.get("p")?.unwrap_or(if shape.is_some() { 1 } else { 5 }),
            n: kv.require("n")?,
            snr: kv.require("snr")?,
            sigma0_sq: kv.get("sigma0_sq")?.unwrap_or(1.0),
            u,
            fit_u: kv.get_list("fit_u")?,
            reps: kv.get("reps")?.unwrap_or(1),
            seed: kv.get("seed")?.unwrap_or(0),
            shape,
        };
        config.validate()?;
        let defaults = FitOptions::default();
        let fit = FitOptions {
            tol: kv.get("tol")?.unwrap_or(defaults.tol),
            max_iter: kv.get("max_iter")?.unwrap_or(defaults.max_iter),
            random_starts: kv.get("starts")?.unwrap_or(defaults.random_starts),
            center: kv.get("center")?.unwrap_or(defaults.center),
            ..defaults
        };
        Ok(ScenarioFile {
            config,
            estimators: kv
                .get_list("estimators")?
                .unwrap_or_else(|| vec![Estimator::Ols, Estimator::EnvIterative]),
            fit,
            record_timings: kv.get("record_timings")?.unwrap_or(false),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }
}

/// Points at the predictor CSV and the stacked response TensorFile of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub x: PathBuf,
    pub y: PathBuf,
    pub n: usize,
    pub p: usize,
    pub dims: Vec<usize>,
    /// Optional per-sample group labels, one per line.
    pub groups: Option<PathBuf>,
}

const MANIFEST_KEYS: &[&str] = &["x", "y", "n", "p", "dims", "groups"];

impl DatasetManifest {
    /// Reads a manifest; relative paths resolve against its directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KeyValues::read(path)?;
        kv.check_keys(MANIFEST_KEYS)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        Ok(DatasetManifest {
            x: resolve(kv.require::<PathBuf>("x")?),
            y: resolve(kv.require::<PathBuf>("y")?),
            n: kv.require("n")?,
            p: kv.require("p")?,
            dims: kv.get_list("dims")?.ok_or_else(|| Error::Config {
                path: path.to_path_buf(),
                line: 0,
                msg: "missing key \"dims\"".into(),
            })?,
            groups: kv.get::<PathBuf>("groups")?.map(resolve),
        })
    }

    /// Writes the manifest with paths relative to its directory where possible.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let mut text = format!(
            "x = {}\ny = {}\nn = {}\np = {}\ndims = {}\n",
            rel(&self.x),
            rel(&self.y),
            self.n,
            self.p,
            dims.join(",")
        );
        if let Some(g) = &self.groups {
            text.push_str(&format!("groups = {}\n", rel(g)));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads and cross-checks the data against the declared sizes.
    pub fn load(&self) -> Result<Dataset> {
        let x = read_x_csv(&self.x)?;
        let y = read_tensor(&self.y)?;
        if x.ncols() != self.n || x.nrows() != self.p {
            return Err(Error::format(
                &self.x,
                format!("has {} rows x {} columns, manifest says n = {}, p = {}", x.ncols(), x.nrows(), self.n, self.p),
            ));
        }
        let mut expected = self.dims.clone();
        expected.push(self.n);
        if y.dims() != expected.as_slice() {
            return Err(Error::format(
                &self.y,
                format!("dims {:?} differ from manifest {:?}", y.dims(), expected),
            ));
        }
        Dataset::new(x, y)
    }

    /// Writes `data` as `x.csv`, `y.tenv` and `manifest.txt` inside `dir`.
    pub fn save_dataset(data: &Dataset, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = DatasetManifest {
            x: dir.join("x.csv"),
            y: dir.join("y.tenv"),
            n: data.n(),
            p: data.p(),
            dims: data.response_dims().to_vec(),
            groups: None,
        };
        write_x_csv(&manifest.x, data.x())?;
        write_tensor(&manifest.y, data.y())?;
        manifest.write(dir.join("manifest.txt"))?;
        Ok(manifest)
    }
}

/// Predictor CSV: `n` rows of `p` numbers; a non-numeric first row is a header.
/// Returns the `p x n` predictor matrix.
pub fn read_x_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::format(path, format!("row {}: {e}", i + 1))),
        }
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || p == 0 {
        return Err(Error::format(path, "no data rows"));
    }
    Ok(Matrix::from_fn(p, rows.len(), |l, i| rows[i][l]))
}

pub fn write_x_csv(path: impl AsRef<Path>, x: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for i in 0..x.ncols() {
        w.write_record(x.column(i).iter().map(|v| fmt_f64(*v)))
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest decimal text that parses back to the same double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// `fmt_f64`, or `NA` when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}
