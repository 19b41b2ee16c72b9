//! On-disk formats: trial binaries, feature and prediction CSVs, manifests.
//!
//! Byte layouts are documented in `FORMATS.md` at the repository root.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{CsiArray, CsiPacket, Dims, InteractionLabel, Trial};
use crate::error::{Error, Result};
use crate::features::{feature_names, FeatureFrame, SplitSpec};
use crate::postprocess::PredictionTrace;

pub const TRIAL_MAGIC: &[u8; 4] = b"HHIT";
pub const TRIAL_VERSION: u16 = 1;
pub const MANIFEST_VERSION: u32 = 1;
pub const TRIAL_EXTENSION: &str = "hhit";
const UNLABELED: u8 = 0xFF;

/// Little-endian byte sink.
#[derive(Default)]
pub(crate) struct ByteWriter(pub Vec<u8>);

impl ByteWriter {
    pub fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn str16(&mut self, s: &str) -> Result<()> {
        let n = u16::try_from(s.len()).map_err(|_| Error::format(format!("string of {} bytes is too long", s.len())))?;
        self.u16(n);
        self.bytes(s.as_bytes());
        Ok(())
    }
    /// Append the CRC32 of everything written so far.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.u32(crc);
        self.0
    }
}

/// Little-endian byte source that reports truncation.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    pub fn pos(&self) -> usize {
        self.pos
    }
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    pub fn str16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("string is not UTF-8"))
    }
}

/// Compare the trailing CRC32 with one computed over the preceding bytes.
pub(crate) fn verify_crc(buf: &[u8]) -> Result<()> {
    if buf.len() < 4 {
        return Err(Error::format("truncated: no checksum"));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(())
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let res = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(|e| Error::from(e).at(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::from(e).at(path))
}

/// Bytes per packet record.
pub fn trial_record_stride(dims: Dims) -> usize {
    8 + 4 + 4 + 4 * dims.n_rx + 8 * dims.len() + 1
}

pub fn encode_trial(trial: &Trial) -> Result<Vec<u8>> {
    let d = trial.dims;
    let dim16 = |v: usize| u16::try_from(v).map_err(|_| Error::format(format!("dimension {v} exceeds u16")));
    let mut w = ByteWriter::default();
    w.bytes(TRIAL_MAGIC);
    w.u16(TRIAL_VERSION);
    w.u16(dim16(d.n_tx)?);
    w.u16(dim16(d.n_rx)?);
    w.u16(dim16(d.n_sc)?);
    w.str16(&trial.pair_id)?;
    w.str16(&trial.trial_id)?;
    w.u32(u32::try_from(trial.len()).map_err(|_| Error::format("too many packets"))?);
    for (i, p) in trial.packets.iter().enumerate() {
        if p.rssi.len() != d.n_rx || p.csi.dims != d || p.csi.data.len() != d.len() {
            return Err(Error::shape(format!("packet {i} does not match trial dims {d}")));
        }
        w.f64(p.timestamp);
        w.f32(p.noise as f32);
        w.f32(p.agc as f32);
        p.rssi.iter().for_each(|&r| w.f32(r as f32));
        for c in &p.csi.data {
            w.f32(c.re as f32);
            w.f32(c.im as f32);
        }
        w.u8(p.label.map_or(UNLABELED, |l| l.index() as u8));
    }
    Ok(w.finish())
}

pub fn decode_trial(buf: &[u8]) -> Result<Trial> {
    let mut r = ByteReader::new(buf);
    if r.take(4)? != TRIAL_MAGIC {
        return Err(Error::format("not a trial file (bad magic)"));
    }
    let version = r.u16()?;
    if version != TRIAL_VERSION {
        return Err(Error::Version { found: version, expected: TRIAL_VERSION });
    }
    let dims = Dims::new(r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
    let pair_id = r.str16()?;
    let trial_id = r.str16()?;
    let count = r.u32()? as usize;
    let expected = r.pos() + count * trial_record_stride(dims) + 4;
    if buf.len() != expected {
        return Err(Error::format(format!(
            "{}: header declares {count} packets ({expected} bytes), file has {} bytes",
            if buf.len() < expected { "truncated" } else { "trailing data" },
            buf.len()
        )));
    }
    verify_crc(buf)?;
    let mut packets = Vec::with_capacity(count);
    for _ in 0..count {
        let timestamp = r.f64()?;
        let noise = r.f32()? as f64;
        let agc = r.f32()? as f64;
        let rssi = (0..dims.n_rx).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(dims.len());
        for _ in 0..dims.len() {
            let re = r.f32()? as f64;
            let im = r.f32()? as f64;
            data.push(Complex64::new(re, im));
        }
        let code = r.u8()?;
        let label = match code {
            UNLABELED => None,
            c => Some(InteractionLabel::from_index(c as usize).map_err(|_| Error::format(format!("invalid label byte {c}")))?),
        };
        packets.push(CsiPacket {
            timestamp,
            noise,
            agc,
            rssi,
            csi: CsiArray::from_vec(dims, data)?,
            label,
        });
    }
    Ok(Trial { pair_id, trial_id, dims, packets })
}

pub fn write_trial(trial: &Trial, path: &Path) -> Result<()> {
    write_atomic(path, &encode_trial(trial)?)
}

pub fn read_trial(path: &Path) -> Result<Trial> {
    decode_trial(&read_file(path)?).map_err(|e| e.at(path))
}

/// Round to the precision stored in trial files.
pub fn quantize_trial(trial: &Trial) -> Trial {
    let q = |v: f64| v as f32 as f64;
    let mut t = trial.clone();
    for p in &mut t.packets {
        p.noise = q(p.noise);
        p.agc = q(p.agc);
        p.rssi.iter_mut().for_each(|r| *r = q(*r));
        p.csi.data.iter_mut().for_each(|c| *c = Complex64::new(q(c.re), q(c.im)));
    }
    t
}

/// Feature CSV: a header of feature names plus `label`, one row per packet,
/// values with 9 significant digits, labels as class names (blank if absent).
pub fn feature_csv_string(frame: &FeatureFrame, names: &[String]) -> Result<String> {
    if names.len() != frame.cols {
        return Err(Error::shape(format!("{} column names for {} columns", names.len(), frame.cols)));
    }
    let mut s = String::with_capacity(frame.rows * frame.cols * 16 + 4096);
    s.push_str(&names.join(","));
    s.push_str(",label\n");
    for i in 0..frame.rows {
        for v in frame.row(i) {
            s.push_str(&format!("{v:.8e},"));
        }
        if let Some(l) = &frame.labels {
            s.push_str(l[i].name());
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn export_feature_csv(frame: &FeatureFrame, dims: Option<Dims>, path: &Path) -> Result<()> {
    let names = match dims {
        Some(d) => feature_names(d),
        None => (0..frame.cols).map(|c| format!("f{c}")).collect(),
    };
    write_atomic(path, feature_csv_string(frame, &names)?.as_bytes())
}

pub fn parse_feature_csv(text: &str) -> Result<FeatureFrame> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty feature file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.last() != Some(&"label") || columns.len() < 2 {
        return Err(Error::format("feature header must end with a label column"));
    }
    let cols = columns.len() - 1;
    let mut data = Vec::new();
    let mut labels: Vec<Option<InteractionLabel>> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols + 1 {
            return Err(Error::format(format!(
                "row {}: expected {} columns, found {}",
                i + 1,
                cols + 1,
                fields.len()
            )));
        }
        for f in &fields[..cols] {
            let v: f64 = f.parse().map_err(|_| Error::format(format!("row {}: invalid number {f:?}", i + 1)))?;
            data.push(v);
        }
        let l = fields[cols];
        labels.push(if l.is_empty() { None } else { Some(l.parse().map_err(|_| Error::format(format!("row {}: unknown label {l:?}", i + 1)))?) });
    }
    if labels.is_empty() {
        return Err(Error::format("zero rows"));
    }
    let rows = labels.len();
    let labels = match labels.iter().filter(|l| l.is_some()).count() {
        0 => None,
        n if n == rows => Some(labels.into_iter().map(|l| l.expect("all present")).collect()),
        _ => return Err(Error::format("label column is only partially filled")),
    };
    FeatureFrame::new(rows, cols, data, labels)
}

pub fn import_feature_csv(path: &Path) -> Result<FeatureFrame> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    parse_feature_csv(&text).map_err(|e| e.at(path))
}

/// Prediction CSV: `packet, fold_0..fold_{k-1}, ensemble, smoothed, true`
/// with class indices; `true` is blank when unknown.
pub fn predictions_csv_string(trace: &PredictionTrace) -> Result<String> {
    trace.validate()?;
    let k = trace.per_fold.len();
    let mut s = String::from("packet");
    for f in 0..k {
        s.push_str(&format!(",fold_{f}"));
    }
    s.push_str(",ensemble,smoothed,true\n");
    for i in 0..trace.len() {
        s.push_str(&i.to_string());
        for f in &trace.per_fold {
            s.push_str(&format!(",{}", f[i]));
        }
        s.push_str(&format!(",{},{},", trace.ensembled[i], trace.smoothed[i]));
        if let Some(t) = &trace.truth {
            s.push_str(&t[i].to_string());
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_predictions(trace: &PredictionTrace, path: &Path) -> Result<()> {
    write_atomic(path, predictions_csv_string(trace)?.as_bytes())
}

pub fn parse_predictions(text: &str) -> Result<PredictionTrace> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::format("empty prediction file"))?.split(',').collect();
    let n = header.len();
    if n < 5 || header[0] != "packet" || header[n - 3..] != ["ensemble", "smoothed", "true"] {
        return Err(Error::format("prediction header must be packet, fold_*, ensemble, smoothed, true"));
    }
    let k = n - 4;
    for (f, h) in header[1..=k].iter().enumerate() {
        if *h != format!("fold_{f}") {
            return Err(Error::format(format!("unexpected prediction column {h:?}")));
        }
    }
    let mut per_fold = vec![Vec::new(); k];
    let (mut ens, mut smo, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(Error::format(format!("row {}: expected {n} columns, found {}", i + 1, fields.len())));
        }
        let num = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::format(format!("row {}: invalid label {s:?}", i + 1))) };
        if num(fields[0])? != i {
            return Err(Error::format(format!("row {}: packet index out of sequence", i + 1)));
        }
        for f in 0..k {
            per_fold[f].push(num(fields[1 + f])?);
        }
        ens.push(num(fields[k + 1])?);
        smo.push(num(fields[k + 2])?);
        truth.push(if fields[k + 3].is_empty() { None } else { Some(num(fields[k + 3])?) });
    }
    let rows = ens.len();
    let truth = match truth.iter().filter(|t| t.is_some()).count() {
        0 => None,
        c if c == rows => Some(truth.into_iter().map(|t| t.expect("all present")).collect()),
        _ => return Err(Error::format("true column is only partially filled")),
    };
    let trace = PredictionTrace {
        per_fold,
        ensembled: ens,
        smoothed: smo,
        truth,
    };
    trace.validate().map_err(|e| Error::format(e.to_string()))?;
    Ok(trace)
}

pub fn read_predictions(path: &Path) -> Result<PredictionTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    parse_predictions(&text).map_err(|e| e.at(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the dataset root.
    pub path: String,
    pub pair: String,
    pub trial: String,
    pub class: InteractionLabel,
    pub length: usize,
}

/// Index of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Dataset root relative to the manifest's directory.
    pub root: String,
    pub seed: u64,
    pub profile_hash: String,
    pub packet_rate: f64,
    pub dims: Dims,
    pub entries: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(skip)]
    base: PathBuf,
}

impl Manifest {
    pub fn new(seed: u64, profile_hash: String, packet_rate: f64, dims: Dims, entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            root: ".".into(),
            seed,
            profile_hash,
            packet_rate,
            dims,
            entries,
            split: None,
            base: PathBuf::from("."),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    /// Parse and check that every referenced trial file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(format!("manifest: {e}")).at(path))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Config(format!("manifest version {} (expected {MANIFEST_VERSION})", m.version)).at(path));
        }
        m.base = path.parent().unwrap_or(Path::new(".")).join(&m.root);
        let missing: Vec<String> = m
            .entries
            .iter()
            .filter(|e| !m.entry_path(e).is_file())
            .map(|e| e.path.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::format(format!("missing trial files: {}", missing.join(", "))).at(path));
        }
        Ok(m)
    }

    pub fn entry_path(&self, e: &ManifestEntry) -> PathBuf {
        self.base.join(&e.path)
    }
}
