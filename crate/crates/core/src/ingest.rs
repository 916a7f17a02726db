//! On-disk formats: a JSON manifest plus comma-separated files for raw
//! slices, feature records and trial results. Every file has a header row.
//! Reals are written in shortest round-trip scientific notation.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{TrialRecord, TrialSpec};
use crate::metrics::{ConfusionMatrix, Scores};
use crate::scalar::Scalar;
use crate::types::{Dataset, FeatureRecord, FlareClass, MvtsSlice, SuperClass};

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

const SLICE_KEYS: [&str; 5] = ["event_id", "partition_id", "class", "slice_index", "step"];
const FEATURE_KEYS: [&str; 6] = [
    "slice_uid",
    "partition_id",
    "event_id",
    "slice_index",
    "class",
    "superclass",
];
pub const TRIAL_HEADER: [&str; 18] = [
    "experiment",
    "train_partition",
    "test_partition",
    "repeat",
    "remedy",
    "normalization",
    "feature_set",
    "seed",
    "TP",
    "FP",
    "TN",
    "FN",
    "tss",
    "hss",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub id: u32,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub n_params: usize,
    pub steps_per_slice: usize,
    pub param_names: Vec<String>,
    pub partitions: Vec<PartitionEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_reader(BufReader::new(file))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported dataset format version {:?}",
                self.format_version
            )));
        }
        if self.param_names.len() != self.n_params {
            return Err(Error::Shape(format!(
                "manifest lists {} parameter names for n_params = {}",
                self.param_names.len(),
                self.n_params
            )));
        }
        let mut seen = HashSet::new();
        for p in &self.partitions {
            if !seen.insert(p.id) {
                return Err(Error::Config(format!("partition {} listed twice", p.id)));
            }
            let path = self.root.join(&p.path);
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "partition file missing"),
                ));
            }
        }
        Ok(())
    }

    pub fn partition_path(&self, id: u32) -> Result<PathBuf> {
        self.partitions
            .iter()
            .find(|p| p.id == id)
            .map(|p| self.root.join(&p.path))
            .ok_or_else(|| Error::Config(format!("partition {id} not in manifest")))
    }
}

pub(crate) fn fmt_real<F: Scalar>(x: F) -> String {
    format!("{x:e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(BufReader::new(file)))
}

fn record_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(path, line, e.to_string())
}

/// Field parser that reports `path:line` on failure.
struct Row<'a> {
    path: &'a Path,
    line: u64,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn str(&self, i: usize) -> &str {
        self.rec.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, what: &str) -> Result<T> {
        self.str(i)
            .parse()
            .map_err(|_| self.err(format!("bad {what} {:?}", self.str(i))))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, msg)
    }
}

fn check_header(path: &Path, header: &csv::StringRecord, keys: &[&str]) -> Result<()> {
    if header.len() < keys.len() || keys.iter().zip(header.iter()).any(|(k, h)| *k != h) {
        return Err(Error::parse(
            path,
            1,
            format!("header must start with {}", keys.join(",")),
        ));
    }
    Ok(())
}

/// Writes one partition's slices in long form, one row per time step.
pub fn write_slices<F: Scalar, W: Write>(slices: &[MvtsSlice<F>], param_names: &[String], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SLICE_KEYS.iter().copied().chain(param_names.iter().map(String::as_str)))?;
    let mut row: Vec<String> = Vec::with_capacity(SLICE_KEYS.len() + param_names.len());
    for s in slices {
        if s.n_params != param_names.len() {
            return Err(Error::Shape(format!(
                "slice {} has {} parameters, header has {}",
                s.uid(),
                s.n_params,
                param_names.len()
            )));
        }
        for t in 0..s.steps {
            row.clear();
            row.push(s.event_id.clone());
            row.push(s.partition_id.to_string());
            row.push(s.label.to_string());
            row.push(s.slice_index.to_string());
            row.push(t.to_string());
            for j in 0..s.n_params {
                row.push(if s.is_missing(t, j) {
                    String::new()
                } else {
                    fmt_real(s.value(t, j))
                });
            }
            out.write_record(&row)?;
        }
    }
    out.flush().map_err(|e| Error::io("<slice writer>", e))?;
    Ok(())
}

/// Reads long-form slices. Rows of one slice must be contiguous with steps
/// `0..steps_per_slice` in order.
pub fn read_slices_file<F: Scalar>(
    path: &Path,
    param_names: &[String],
    steps_per_slice: usize,
    partition_id: Option<u32>,
) -> Result<Vec<MvtsSlice<F>>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| record_error(path, e))?.clone();
    check_header(path, &header, &SLICE_KEYS)?;
    let names: Vec<&str> = header.iter().skip(SLICE_KEYS.len()).collect();
    if names != param_names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::parse(path, 1, "parameter columns differ from the manifest"));
    }
    let n_params = param_names.len();

    struct Pending<F> {
        event_id: String,
        partition_id: u32,
        class: FlareClass,
        slice_index: usize,
        values: Vec<F>,
        missing: Vec<bool>,
        last_line: u64,
    }

    let mut out: Vec<MvtsSlice<F>> = Vec::new();
    let mut cur: Option<Pending<F>> = None;
    let finish = |p: Pending<F>, out: &mut Vec<MvtsSlice<F>>| -> Result<()> {
        let steps = p.values.len() / n_params.max(1);
        if steps != steps_per_slice {
            return Err(Error::parse(
                path,
                p.last_line,
                format!(
                    "slice {}:{} has {steps} steps, expected {steps_per_slice}",
                    p.event_id, p.slice_index
                ),
            ));
        }
        out.push(MvtsSlice::new(
            p.event_id,
            p.partition_id,
            p.slice_index,
            p.class,
            steps,
            n_params,
            p.values,
            p.missing,
        )?);
        Ok(())
    };

    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(record_error(path, e)),
        }
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row { path, line, rec: &rec };
        let event_id = row.str(0);
        let pid: u32 = row.parse(1, "partition_id")?;
        let class: FlareClass = row.parse(2, "class")?;
        let slice_index: usize = row.parse(3, "slice_index")?;
        let step: usize = row.parse(4, "step")?;
        if let Some(want) = partition_id {
            if pid != want {
                return Err(row.err(format!("row belongs to partition {pid}, expected {want}")));
            }
        }
        let same = cur
            .as_ref()
            .is_some_and(|c| c.event_id == event_id && c.slice_index == slice_index);
        if !same {
            if let Some(done) = cur.take() {
                finish(done, &mut out)?;
            }
            cur = Some(Pending {
                event_id: event_id.to_string(),
                partition_id: pid,
                class,
                slice_index,
                values: Vec::with_capacity(steps_per_slice * n_params),
                missing: Vec::with_capacity(steps_per_slice * n_params),
                last_line: line,
            });
        }
        let p = cur.as_mut().expect("pending slice");
        if p.partition_id != pid || p.class != class {
            return Err(row.err("partition or class changes within a slice"));
        }
        if step != p.values.len() / n_params.max(1) {
            return Err(row.err(format!(
                "step {step} out of order (expected {})",
                p.values.len() / n_params.max(1)
            )));
        }
        for j in 0..n_params {
            let cell = row.str(SLICE_KEYS.len() + j);
            if cell.is_empty() {
                p.values.push(F::zero());
                p.missing.push(true);
            } else {
                let v: F = cell
                    .parse()
                    .map_err(|_| row.err(format!("bad value {cell:?} for {}", param_names[j])))?;
                p.values.push(v);
                p.missing.push(false);
            }
        }
        p.last_line = line;
    }
    if let Some(done) = cur.take() {
        finish(done, &mut out)?;
    }
    Ok(out)
}

/// Reads the slices of one partition listed in `manifest`.
pub fn read_slices<F: Scalar>(manifest: &DatasetManifest, partition_id: u32) -> Result<Vec<MvtsSlice<F>>> {
    let path = manifest.partition_path(partition_id)?;
    read_slices_file(&path, &manifest.param_names, manifest.steps_per_slice, Some(partition_id))
}

/// Writes `partition_<id>.csv` for every partition plus the manifest.
pub fn write_dataset<F: Scalar>(dir: &Path, dataset: &Dataset<F>) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (id, slices) in &dataset.partitions {
        let name = PathBuf::from(format!("partition_{id}.csv"));
        let path = dir.join(&name);
        write_slices(slices, &dataset.param_names, create(&path)?)?;
        entries.push(PartitionEntry { id: *id, path: name });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION.to_string(),
        n_params: dataset.n_params(),
        steps_per_slice: dataset.steps_per_slice,
        param_names: dataset.param_names.clone(),
        partitions: entries,
        root: dir.to_path_buf(),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads every partition of the dataset described by `manifest_path`.
pub fn read_dataset<F: Scalar>(manifest_path: &Path) -> Result<Dataset<F>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let mut partitions = Vec::new();
    for p in &manifest.partitions {
        partitions.push((p.id, read_slices(&manifest, p.id)?));
    }
    let ds = Dataset {
        param_names: manifest.param_names,
        steps_per_slice: manifest.steps_per_slice,
        partitions,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes feature records, one row per slice. All records must share one
/// column layout; `columns` names it when `records` is empty.
pub fn write_features<F: Scalar, W: Write>(records: &[FeatureRecord<F>], columns: &[String], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(FEATURE_KEYS.iter().copied().chain(columns.iter().map(String::as_str)))?;
    let mut seen = HashSet::new();
    let mut row: Vec<String> = Vec::with_capacity(FEATURE_KEYS.len() + columns.len());
    for r in records {
        if *r.feature_names != columns {
            return Err(Error::Shape(format!(
                "record {} has a different column layout",
                r.slice_uid
            )));
        }
        if !seen.insert(r.slice_uid.as_str()) {
            return Err(Error::DuplicateUid(r.slice_uid.clone()));
        }
        row.clear();
        row.push(r.slice_uid.clone());
        row.push(r.partition_id.to_string());
        row.push(r.event_id.clone());
        row.push(r.slice_index.to_string());
        row.push(r.label.to_string());
        row.push(r.superclass.to_string());
        row.extend(r.features.iter().map(|&v| fmt_real(v)));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<feature writer>", e))?;
    Ok(())
}

pub fn save_features<F: Scalar>(path: &Path, records: &[FeatureRecord<F>], columns: &[String]) -> Result<()> {
    write_features(records, columns, create(path)?)
}

/// Reads a feature file. Returns the column names and the records.
pub fn read_features<F: Scalar>(path: &Path) -> Result<(Arc<Vec<String>>, Vec<FeatureRecord<F>>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| record_error(path, e))?.clone();
    check_header(path, &header, &FEATURE_KEYS)?;
    let names: Arc<Vec<String>> = Arc::new(header.iter().skip(FEATURE_KEYS.len()).map(String::from).collect());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(record_error(path, e)),
        }
        let row = Row {
            path,
            line: rec.position().map_or(0, |p| p.line()),
            rec: &rec,
        };
        let uid = row.str(0);
        if !seen.insert(uid.to_string()) {
            return Err(row.err(format!("duplicate slice_uid {uid}")));
        }
        let pid: u32 = row.parse(1, "partition_id")?;
        let idx: usize = row.parse(3, "slice_index")?;
        let class: FlareClass = row.parse(4, "class")?;
        let sc: SuperClass = row.parse(5, "superclass")?;
        let features = (0..names.len())
            .map(|j| row.parse::<F>(FEATURE_KEYS.len() + j, &names[j]))
            .collect::<Result<Vec<F>>>()?;
        let r = FeatureRecord::new(row.str(2), pid, idx, class, features, Arc::clone(&names))
            .map_err(|e| row.err(e.to_string()))?;
        if r.slice_uid != uid || r.superclass != sc {
            return Err(row.err("slice_uid or superclass inconsistent with the other fields"));
        }
        out.push(r);
    }
    Ok((names, out))
}

fn opt_real<F: Scalar>(v: Option<F>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn trial_row<F: Scalar>(r: &TrialRecord<F>) -> Vec<String> {
    let s = &r.spec;
    let cm = &r.confusion;
    let sc = &r.scores;
    vec![
        s.experiment.to_string(),
        s.train_partition.to_string(),
        s.test_partition.to_string(),
        s.repeat.to_string(),
        s.remedy.to_string(),
        s.normalization.to_string(),
        s.feature_set.to_string(),
        s.seed.to_string(),
        cm.tp.to_string(),
        cm.fp.to_string(),
        cm.tn.to_string(),
        cm.fn_.to_string(),
        opt_real(sc.tss),
        opt_real(sc.hss),
        opt_real(sc.accuracy),
        opt_real(sc.precision),
        opt_real(sc.recall),
        opt_real(sc.f1),
    ]
}

/// Writes a results table with header. Undefined scores are empty cells.
pub fn write_trials<F: Scalar, W: Write>(records: &[TrialRecord<F>], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TRIAL_HEADER)?;
    for r in records {
        out.write_record(trial_row(r))?;
    }
    out.flush().map_err(|e| Error::io("<results writer>", e))?;
    Ok(())
}

pub fn save_trials<F: Scalar>(path: &Path, records: &[TrialRecord<F>]) -> Result<()> {
    write_trials(records, create(path)?)
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_trials<F: Scalar>(path: &Path, records: &[TrialRecord<F>]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = csv_writer(BufWriter::new(file));
    if fresh {
        out.write_record(TRIAL_HEADER)?;
    }
    for r in records {
        out.write_record(trial_row(r))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_trials<F: Scalar>(path: &Path) -> Result<Vec<TrialRecord<F>>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| record_error(path, e))?.clone();
    if header.len() != TRIAL_HEADER.len() {
        check_header(path, &header, &TRIAL_HEADER)?;
        return Err(Error::parse(path, 1, "unexpected results columns"));
    }
    check_header(path, &header, &TRIAL_HEADER)?;
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(record_error(path, e)),
        }
        let row = Row {
            path,
            line: rec.position().map_or(0, |p| p.line()),
            rec: &rec,
        };
        let spec = TrialSpec {
            experiment: row.parse(0, "experiment")?,
            train_partition: row.parse(1, "train_partition")?,
            test_partition: row.parse(2, "test_partition")?,
            repeat: row.parse(3, "repeat")?,
            remedy: row.parse(4, "remedy")?,
            normalization: row.parse(5, "normalization")?,
            feature_set: row.parse(6, "feature_set")?,
            seed: row.parse(7, "seed")?,
        };
        let confusion = ConfusionMatrix::new(
            row.parse(8, "TP")?,
            row.parse(9, "FP")?,
            row.parse(10, "TN")?,
            row.parse(11, "FN")?,
        );
        let opt = |i: usize, what: &str| -> Result<Option<F>> {
            if row.str(i).is_empty() {
                Ok(None)
            } else {
                row.parse(i, what).map(Some)
            }
        };
        let scores = Scores {
            tss: opt(12, "tss")?,
            hss: opt(13, "hss")?,
            accuracy: opt(14, "accuracy")?,
            precision: opt(15, "precision")?,
            recall: opt(16, "recall")?,
            f1: opt(17, "f1")?,
        };
        out.push(TrialRecord {
            spec,
            confusion,
            scores,
        });
    }
    Ok(out)
}
