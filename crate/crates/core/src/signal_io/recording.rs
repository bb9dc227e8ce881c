use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GeegaError, Result};

/// Magic bytes of the binary recording format.
pub const RECORDING_MAGIC: &[u8; 4] = b"GEEG";
pub const RECORDING_VERSION: u16 = 1;

/// How the raw label column is to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Subjective 1-9 score, binarized as low (1-5) / high (6-9).
    Score,
    /// Already 0/1.
    Binary,
}

impl LabelKind {
    fn code(self) -> u8 {
        match self {
            LabelKind::Score => 0,
            LabelKind::Binary => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(LabelKind::Score),
            1 => Ok(LabelKind::Binary),
            other => Err(GeegaError::Format(format!("unknown label kind code {other}"))),
        }
    }
}

/// Maps a 1-9 score to low (0) or high (1).
pub fn binarize_label(raw_score: i64) -> Result<u8> {
    match raw_score {
        1..=5 => Ok(0),
        6..=9 => Ok(1),
        other => Err(GeegaError::Label(format!("score {other} outside 1..=9"))),
    }
}

/// Raw per-sample label track.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub kind: LabelKind,
    pub values: Vec<u8>,
}

impl LabelTrack {
    pub fn constant(kind: LabelKind, value: u8, len: usize) -> Self {
        LabelTrack {
            kind,
            values: vec![value; len],
        }
    }

    /// Binary label of one raw value.
    pub fn binary(&self, raw: u8) -> Result<u8> {
        match self.kind {
            LabelKind::Score => binarize_label(raw as i64),
            LabelKind::Binary if raw <= 1 => Ok(raw),
            LabelKind::Binary => Err(GeegaError::Label(format!("binary label {raw} is not 0 or 1"))),
        }
    }
}

/// Multichannel recording stored channel-major (`data[ch * T + t]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EegRecording {
    pub subject_id: String,
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub data: Vec<f32>,
    pub labels: LabelTrack,
}

impl EegRecording {
    pub fn new(
        subject_id: &str,
        channels: Vec<String>,
        sample_rate_hz: f64,
        data: Vec<f32>,
        labels: LabelTrack,
    ) -> Result<Self> {
        let n_samples = labels.values.len();
        let rec = EegRecording {
            subject_id: subject_id.to_string(),
            channels,
            sample_rate_hz,
            n_samples,
            data,
            labels,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeegaError::Contract(m));
        if self.channels.is_empty() {
            return bad("recording has no channels".into());
        }
        if self.n_samples == 0 {
            return bad("recording has no samples".into());
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample rate {} is not positive", self.sample_rate_hz));
        }
        if self.data.len() != self.channels.len() * self.n_samples {
            return bad(format!(
                "{} values for {} channels x {} samples",
                self.data.len(),
                self.channels.len(),
                self.n_samples
            ));
        }
        if self.labels.values.len() != self.n_samples {
            return bad("label track length differs from sample count".into());
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return bad(format!(
                "non-finite sample at channel {} index {}",
                i / self.n_samples,
                i % self.n_samples
            ));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        &self.data[ch * self.n_samples..(ch + 1) * self.n_samples]
    }

    pub fn channel_f64(&self, ch: usize) -> Vec<f64> {
        self.channel(ch).iter().map(|&v| v as f64).collect()
    }
}

/// On-disk layouts understood by [`ingest`].
#[derive(Clone, Debug, PartialEq)]
pub enum RecordingFormat {
    /// `time,<ch1>,...,<chC>,label` with one sample per row. The sample rate
    /// is taken from the descriptor or, when absent, from the first two
    /// time stamps. The subject defaults to the file stem.
    Csv {
        sample_rate_hz: Option<f64>,
        label_kind: LabelKind,
        subject_id: Option<String>,
    },
    Binary,
}

impl RecordingFormat {
    /// Chooses by file extension: `.csv` reads 1-9 scores, anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RecordingFormat::Csv {
                sample_rate_hz: None,
                label_kind: LabelKind::Score,
                subject_id: None,
            },
            _ => RecordingFormat::Binary,
        }
    }
}

pub fn ingest(path: &Path, format: &RecordingFormat) -> Result<EegRecording> {
    match format {
        RecordingFormat::Csv {
            sample_rate_hz,
            label_kind,
            subject_id,
        } => read_csv(path, *sample_rate_hz, *label_kind, subject_id.as_deref()),
        RecordingFormat::Binary => read_binary(path),
    }
}

fn ingest_err(path: &Path, message: impl Into<String>) -> GeegaError {
    GeegaError::Ingest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_csv(path: &Path, rate: Option<f64>, kind: LabelKind, subject: Option<&str>) -> Result<EegRecording> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ingest_err(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| ingest_err(path, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || !cols[0].eq_ignore_ascii_case("time") || !cols[cols.len() - 1].eq_ignore_ascii_case("label") {
        return Err(ingest_err(
            path,
            format!("malformed header `{}`: expected time,<channels...>,label", cols.join(",")),
        ));
    }
    let channels: Vec<String> = cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let c = channels.len();
    let mut times = Vec::new();
    let mut columns: Vec<Vec<f32>> = vec![Vec::new(); c];
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ingest_err(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != c + 2 {
            return Err(ingest_err(
                path,
                format!("row {row}: {} fields, header declares {} channels", record.len(), c),
            ));
        }
        let t: f64 = record[0]
            .parse()
            .map_err(|_| ingest_err(path, format!("row {row} column time: bad number `{}`", &record[0])))?;
        times.push(t);
        for (ch, cell) in record.iter().skip(1).take(c).enumerate() {
            let v: f32 = cell.parse().map_err(|_| {
                ingest_err(path, format!("row {row} column {}: bad number `{cell}`", channels[ch]))
            })?;
            if !v.is_finite() {
                return Err(ingest_err(
                    path,
                    format!("row {row} column {}: non-finite sample `{cell}`", channels[ch]),
                ));
            }
            columns[ch].push(v);
        }
        let raw = &record[c + 1];
        let label: u8 = raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v))
            .map(|v| v as u8)
            .ok_or_else(|| ingest_err(path, format!("row {row} column label: bad label `{raw}`")))?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(ingest_err(path, "no sample rows"));
    }
    let fs = match rate {
        Some(r) => r,
        None if times.len() >= 2 && times[1] > times[0] => {
            let r = 1.0 / (times[1] - times[0]);
            (r * 1e6).round() / 1e6
        }
        None => return Err(ingest_err(path, "cannot infer sample rate from the time column")),
    };
    let subject = subject
        .map(str::to_string)
        .or_else(|| path.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .unwrap_or_default();
    let data = columns.concat();
    EegRecording::new(&subject, channels, fs, data, LabelTrack { kind, values: labels })
        .map_err(|e| ingest_err(path, e.to_string()))
}

pub fn write_csv(rec: &EegRecording, path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| ingest_err(path, e.to_string());
    let mut out = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["time".to_string()];
    header.extend(rec.channels.iter().cloned());
    header.push("label".into());
    out.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(rec.n_channels() + 2);
    for t in 0..rec.n_samples {
        row.clear();
        row.push((t as f64 / rec.sample_rate_hz).to_string());
        row.extend((0..rec.n_channels()).map(|ch| rec.data[ch * rec.n_samples + t].to_string()));
        row.push(rec.labels.values[t].to_string());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| GeegaError::Format(format!("string too long: {s}")))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Binary layout, all little-endian:
/// `GEEG` | version u16 | c u16 | T u64 | sample_rate f64 |
/// c*T f32 samples, channel-major | label kind u8 | T u8 raw labels |
/// subject id (u16 length + UTF-8) | c channel names (u16 length + UTF-8).
pub fn encode_binary(rec: &EegRecording) -> Result<Vec<u8>> {
    rec.validate()?;
    let c = u16::try_from(rec.n_channels()).map_err(|_| GeegaError::Format("too many channels".into()))?;
    let mut buf = Vec::with_capacity(32 + rec.data.len() * 4 + rec.n_samples);
    buf.extend_from_slice(RECORDING_MAGIC);
    buf.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
    buf.extend_from_slice(&c.to_le_bytes());
    buf.extend_from_slice(&(rec.n_samples as u64).to_le_bytes());
    buf.extend_from_slice(&rec.sample_rate_hz.to_le_bytes());
    for v in &rec.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(rec.labels.kind.code());
    buf.extend_from_slice(&rec.labels.values);
    put_str(&mut buf, &rec.subject_id)?;
    for ch in &rec.channels {
        put_str(&mut buf, ch)?;
    }
    Ok(buf)
}

pub fn write_binary(rec: &EegRecording, path: &Path) -> Result<()> {
    fs::write(path, encode_binary(rec)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(ingest_err(&self.path, format!("truncated file while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u16(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ingest_err(&self.path, format!("{what} is not UTF-8")))
    }
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<EegRecording> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path: path.to_path_buf(),
    };
    if r.take(4, "magic")? != RECORDING_MAGIC {
        return Err(ingest_err(path, "malformed header: bad magic bytes"));
    }
    let version = r.u16("version")?;
    if version != RECORDING_VERSION {
        return Err(ingest_err(path, format!("unsupported version {version}")));
    }
    let c = r.u16("channel count")? as usize;
    let t = u64::from_le_bytes(r.take(8, "sample count")?.try_into().unwrap()) as usize;
    let fs = f64::from_le_bytes(r.take(8, "sample rate")?.try_into().unwrap());
    let raw = r.take(c * t * 4, "samples")?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(ingest_err(
            path,
            format!("non-finite sample at channel {} index {}", i / t.max(1), i % t.max(1)),
        ));
    }
    let kind = LabelKind::from_code(r.take(1, "label kind")?[0]).map_err(|e| ingest_err(path, e.to_string()))?;
    let values = r.take(t, "labels")?.to_vec();
    let subject = r.string("subject id")?;
    let channels = (0..c).map(|_| r.string("channel name")).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(ingest_err(path, "trailing bytes after channel names"));
    }
    EegRecording::new(&subject, channels, fs, data, LabelTrack { kind, values })
        .map_err(|e| ingest_err(path, e.to_string()))
}

fn read_binary(path: &Path) -> Result<EegRecording> {
    let bytes = fs::read(path)?;
    decode_binary(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_boundaries() {
        assert_eq!(binarize_label(5).unwrap(), 0);
        assert_eq!(binarize_label(6).unwrap(), 1);
        assert_eq!(binarize_label(1).unwrap(), 0);
        assert_eq!(binarize_label(9).unwrap(), 1);
        assert!(matches!(binarize_label(0), Err(GeegaError::Label(_))));
        assert!(binarize_label(10).is_err());
    }

    #[test]
    fn recording_validation() {
        let labels = LabelTrack::constant(LabelKind::Binary, 0, 2);
        assert!(EegRecording::new("s", vec![], 256.0, vec![], labels.clone()).is_err());
        assert!(EegRecording::new("s", vec!["a".into()], 0.0, vec![0.0; 2], labels.clone()).is_err());
        assert!(EegRecording::new("s", vec!["a".into()], 256.0, vec![0.0, f32::NAN], labels.clone()).is_err());
        assert!(EegRecording::new("s", vec!["a".into()], 256.0, vec![0.0; 3], labels).is_err());
    }

    #[test]
    fn binary_rejects_bad_magic_and_truncation() {
        let rec = EegRecording::new(
            "S01",
            vec!["A".into(), "B".into()],
            128.0,
            vec![1.0, 2.0, 3.0, 4.0],
            LabelTrack::constant(LabelKind::Score, 7, 2),
        )
        .unwrap();
        let bytes = encode_binary(&rec).unwrap();
        let p = Path::new("mem.geeg");
        assert_eq!(decode_binary(&bytes, p).unwrap(), rec);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_binary(&bad, p).is_err());
        assert!(decode_binary(&bytes[..bytes.len() - 3], p).is_err());
    }
}
