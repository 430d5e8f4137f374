//! File formats: density-matrix JSON, dataset CSV with a JSON sidecar,
//! Wigner CSV and run manifests. Every write goes through a temporary file
//! in the destination directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kerr_core::fockspace::DensityMatrix;
use kerr_core::linalg::CMatrix;
use kerr_core::measurement::{QDataset, QGrid, QKind};
use kerr_core::tomography::WignerGrid;
use kerr_core::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CSV_HEADER: [&str; 5] = ["n", "re_alpha", "im_alpha", "value", "kind"];

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl DensityJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows =
            |f: fn(&C64) -> f64| -> Vec<Vec<f64>> { (0..m.rows()).map(|i| m.row(i).iter().map(f).collect()).collect() };
        Self {
            dim: m.rows(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let d = self.dim;
        if self.re.len() != d || self.im.len() != d {
            bail!("density JSON: expected {d} rows in re and im");
        }
        let mut data = Vec::with_capacity(d * d);
        for (i, (re, im)) in self.re.iter().zip(&self.im).enumerate() {
            if re.len() != d || im.len() != d {
                bail!("density JSON: row {i} does not have {d} entries");
            }
            data.extend(re.iter().zip(im).map(|(&r, &m)| C64::new(r, m)));
        }
        Ok(CMatrix::from_row_major(d, d, data))
    }
}

pub fn write_density(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let json = serde_json::to_string_pretty(&DensityJson::from_matrix(rho.matrix()))?;
    write_atomic(path, json.as_bytes())
}

pub fn read_density(path: &Path) -> Result<DensityMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: DensityJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    DensityMatrix::new(parsed.to_matrix()?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Grid description stored next to datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl GridShape {
    pub fn of(grid: &QGrid) -> Self {
        Self {
            rows: grid.rows(),
            cols: grid.cols(),
            re_min: grid.re_range().0,
            re_max: grid.re_range().1,
            im_min: grid.im_range().0,
            im_max: grid.im_range().1,
        }
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

pub fn dataset_csv(ds: &QDataset) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(CSV_HEADER)?;
    let kind = ds.kind.as_str();
    for (k, &n) in ds.n_list.iter().enumerate() {
        for (p, a) in ds.grid.points().iter().enumerate() {
            w.write_record([
                n.to_string(),
                a.re.to_string(),
                a.im.to_string(),
                ds.value(k, p).to_string(),
                kind.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

pub fn wigner_csv(w: &WignerGrid) -> Result<Vec<u8>> {
    let mut out = csv_writer();
    out.write_record(CSV_HEADER)?;
    for (a, v) in w.grid.points().iter().zip(&w.values) {
        // no Fock projection applies to a Wigner value
        out.write_record([
            String::new(),
            a.re.to_string(),
            a.im.to_string(),
            v.to_string(),
            "wigner".into(),
        ])?;
    }
    out.into_inner().map_err(|e| anyhow!("{e}"))
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    n: String,
    re_alpha: f64,
    im_alpha: f64,
    value: f64,
    kind: String,
}

const POINT_TOL: f64 = 1e-9;

/// Parses a dataset CSV. The grid is recovered from the coordinates, which
/// must repeat the same row-major uniform grid for every projection.
pub fn parse_dataset_csv(bytes: &[u8]) -> Result<QDataset> {
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    let headers = reader.headers().context("reading CSV header")?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        bail!("CSV header must be {}", CSV_HEADER.join(","));
    }
    let mut rows: Vec<(usize, C64, f64)> = Vec::new();
    let mut kind: Option<QKind> = None;
    for (idx, record) in reader.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let row = record.map_err(|e| anyhow!("row {line}: {e}"))?;
        let n: usize = row
            .n
            .trim()
            .parse()
            .map_err(|_| anyhow!("row {line}: n must be a nonnegative integer, got {:?}", row.n))?;
        let this_kind =
            QKind::parse(row.kind.trim()).ok_or_else(|| anyhow!("row {line}: unsupported kind {:?}", row.kind))?;
        match kind {
            None => kind = Some(this_kind),
            Some(k) if k != this_kind => bail!("row {line}: kind {:?} differs from earlier rows", row.kind),
            _ => {}
        }
        if !row.value.is_finite() || !row.re_alpha.is_finite() || !row.im_alpha.is_finite() {
            bail!("row {line}: non-finite number");
        }
        rows.push((n, C64::new(row.re_alpha, row.im_alpha), row.value));
    }
    let kind = kind.ok_or_else(|| anyhow!("dataset has no rows"))?;

    let first_n = rows[0].0;
    let per_n = rows.iter().take_while(|r| r.0 == first_n).count();
    if rows.len() % per_n != 0 {
        bail!("row count {} is not a multiple of the {per_n}-point grid", rows.len());
    }
    let points: Vec<C64> = rows[..per_n].iter().map(|r| r.1).collect();
    let cols = points
        .iter()
        .position(|p| (p.im - points[0].im).abs() > POINT_TOL)
        .unwrap_or(per_n);
    if per_n % cols != 0 {
        bail!("grid points do not form complete rows");
    }
    let grid_rows = per_n / cols;
    let re_min = points[0].re;
    let re_max = points[cols - 1].re;
    let im_min = points[0].im;
    let im_max = points[per_n - 1].im;
    let grid = QGrid::uniform(grid_rows, cols, (re_min, re_max), (im_min, im_max)).map_err(|e| anyhow!("grid: {e}"))?;

    let mut n_list = Vec::new();
    let mut values = Vec::with_capacity(rows.len());
    for (block, chunk) in rows.chunks(per_n).enumerate() {
        let n = chunk[0].0;
        for (p, r) in chunk.iter().enumerate() {
            let line = block * per_n + p + 2;
            if r.0 != n {
                bail!("row {line}: projection {} inside the block of n = {n}", r.0);
            }
            if (r.1 - grid.points()[p]).norm() > POINT_TOL {
                bail!("row {line}: point {} is not on the expected grid", r.1);
            }
            values.push(r.2);
        }
        n_list.push(n);
    }
    QDataset::new(grid, n_list, values, kind).map_err(|e| anyhow!("{e}"))
}

pub fn read_dataset(path: &Path) -> Result<QDataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dataset_csv(&bytes).with_context(|| format!("dataset {}", path.display()))
}

/// Sidecar path `foo.csv` → `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub inputs: Vec<OutputRecord>,
    pub outputs: Vec<OutputRecord>,
    pub versions: std::collections::BTreeMap<String, String>,
}

/// Collects written files for the manifest.
#[derive(Debug)]
pub struct OutputSet {
    root: PathBuf,
    records: Vec<(PathBuf, String, u64)>,
}

impl OutputSet {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            records: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        self.records.push((path.clone(), sha256_hex(bytes), bytes.len() as u64));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Re-reads every output and compares its hash, then writes the
    /// manifest. Fails if any output is missing or changed.
    pub fn finish(self, command: &str, config_hash: String, inputs: Vec<OutputRecord>) -> Result<Manifest> {
        let mut outputs = Vec::with_capacity(self.records.len());
        for (path, hash, bytes) in &self.records {
            let on_disk = fs::read(path).with_context(|| format!("validating {}", path.display()))?;
            if sha256_hex(&on_disk) != *hash {
                bail!("{} changed after it was written", path.display());
            }
            outputs.push(OutputRecord {
                path: path
                    .strip_prefix(&self.root)
                    .unwrap_or(path)
                    .to_string_lossy()
                    .into_owned(),
                sha256: hash.clone(),
                bytes: *bytes,
            });
        }
        let mut versions = std::collections::BTreeMap::new();
        versions.insert("kerr".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("format".to_string(), "1".to_string());
        let manifest = Manifest {
            command: command.to_string(),
            config_hash,
            inputs,
            outputs,
            versions,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.root.join("manifest.json"), text.as_bytes())?;
        Ok(manifest)
    }
}

pub fn input_record(path: &Path) -> Result<OutputRecord> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(OutputRecord {
        path: path.to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kerr_core::measurement::qn_dataset;

    #[test]
    fn dataset_csv_round_trip() {
        let grid = QGrid::uniform(3, 4, (-1.0, 2.0), (-0.5, 0.5)).unwrap();
        let rho = DensityMatrix::new(CMatrix::identity(4).scale(C64::new(0.25, 0.0))).unwrap();
        let ds = qn_dataset(&rho, &grid, &[0, 2]).unwrap();
        let bytes = dataset_csv(&ds).unwrap();
        let back = parse_dataset_csv(&bytes).unwrap();
        assert_eq!(back.n_list, ds.n_list);
        assert_eq!(back.values, ds.values);
        assert_eq!(back.kind, ds.kind);
        for (a, b) in back.grid.points().iter().zip(ds.grid.points()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn schema_errors_name_the_row() {
        let text = "n,re_alpha,im_alpha,value,kind\n0,0,0,0.3,ideal\n0,1,0,oops,ideal\n";
        let err = parse_dataset_csv(text.as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("row 3"), "{err:#}");
        let text = "n,re,im,value,kind\n";
        assert!(parse_dataset_csv(text.as_bytes()).is_err());
        let text = "n,re_alpha,im_alpha,value,kind\n0,0,0,0.3,wigner\n";
        assert!(format!("{:#}", parse_dataset_csv(text.as_bytes()).unwrap_err()).contains("row 2"));
    }

    #[test]
    fn density_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = CMatrix::identity(3).scale(C64::new(1.0 / 3.0, 0.0));
        m[(0, 1)] = C64::new(0.1, 0.05);
        m[(1, 0)] = C64::new(0.1, -0.05);
        let rho = DensityMatrix::new(m).unwrap();
        let path = dir.path().join("rho.json");
        write_density(&path, &rho).unwrap();
        let back = read_density(&path).unwrap();
        assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-15);
    }
}
