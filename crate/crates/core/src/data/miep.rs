//! MIEP: one little-endian file per subject.
//!
//! | offset | type | field |
//! |---|---|---|
//! | 0 | `[u8; 4]` | magic `MIEP` |
//! | 4 | `u16` | version (1) |
//! | 6 | `u32` | n_trials |
//! | 10 | `u16` | n_channels |
//! | 12 | `u32` | n_samples |
//! | 16 | `f32` | sample rate, Hz |
//! | 20 | `[u8; n_trials]` | labels |
//! | 20 + n_trials | `[f32]` | samples, trial-major then channel-major |
//!
//! The subject id is the file stem. Channel names live in an optional
//! `montage.txt` next to the files, one name per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{default_montage, DataError, EpochedDataset, Result, SubjectRecord};

pub const MAGIC: &[u8; 4] = b"MIEP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
pub const MONTAGE_FILE: &str = "montage.txt";
const EXTENSION: &str = "miep";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode(record: &SubjectRecord, sample_rate: f32) -> Result<Vec<u8>> {
    let too_big = |what: &str| {
        DataError::Geometry(format!(
            "subject {}: {what} exceeds the format's range",
            record.subject_id()
        ))
    };
    let n_trials = u32::try_from(record.n_trials()).map_err(|_| too_big("trial count"))?;
    let n_channels = u16::try_from(record.n_channels()).map_err(|_| too_big("channel count"))?;
    let n_samples = u32::try_from(record.n_samples()).map_err(|_| too_big("sample count"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + record.n_trials() + record.trials().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n_trials.to_le_bytes());
    out.extend_from_slice(&n_channels.to_le_bytes());
    out.extend_from_slice(&n_samples.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(record.labels());
    for v in record.trials() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Writes one `<subject>.miep` per subject plus `montage.txt` into `dir`,
/// creating it if needed.
pub fn save_dataset(dataset: &EpochedDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for record in dataset.subjects() {
        let path = dir.join(format!("{}.{EXTENSION}", record.subject_id()));
        fs::write(&path, encode(record, dataset.sample_rate())?).map_err(io_err(&path))?;
    }
    let path = dir.join(MONTAGE_FILE);
    let mut text = dataset.montage().join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

struct Reader<'a> {
    file: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<V>(&self, offset: usize, message: impl Into<String>) -> Result<V> {
        Err(DataError::Format {
            file: self.file.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
        {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => self.fail(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            ),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

struct Decoded {
    record: SubjectRecord,
    sample_rate: f32,
}

fn decode(file: &Path, subject_id: &str, bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader {
        file,
        bytes,
        pos: 0,
    };
    if &r.array::<4>("magic")? != MAGIC {
        return r.fail(0, "bad magic (expected MIEP)");
    }
    let version = u16::from_le_bytes(r.array("version")?);
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let n_trials = u32::from_le_bytes(r.array("n_trials")?) as usize;
    let n_channels = u16::from_le_bytes(r.array("n_channels")?) as usize;
    let n_samples = u32::from_le_bytes(r.array("n_samples")?) as usize;
    let sample_rate = f32::from_le_bytes(r.array("sample rate")?);
    if n_trials == 0 || n_channels == 0 || n_samples == 0 {
        return r.fail(
            6,
            format!("empty geometry {n_trials} × {n_channels} × {n_samples}"),
        );
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return r.fail(16, format!("sample rate {sample_rate} is not positive"));
    }
    let labels = r.take(n_trials, "labels")?.to_vec();
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return r.fail(HEADER_LEN + i, format!("label {} is not 0 or 1", labels[i]));
    }
    let count = n_trials
        .checked_mul(n_channels)
        .and_then(|v| v.checked_mul(n_samples))
        .filter(|v| v.checked_mul(4).is_some());
    let Some(count) = count else {
        return r.fail(6, "geometry overflows");
    };
    let payload = r.take(count * 4, "sample payload")?;
    if r.pos != bytes.len() {
        return r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let trials = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let record = SubjectRecord::new(subject_id, n_channels, n_samples, trials, labels)?;
    Ok(Decoded {
        record,
        sample_rate,
    })
}

fn subject_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == EXTENSION) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_string(), path.clone()));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every `*.miep` file in `dir`; subjects come back sorted by id.
pub fn load_dataset(dir: &Path) -> Result<EpochedDataset> {
    let files = subject_files(dir)?;
    let mut subjects = Vec::with_capacity(files.len());
    let mut reference: Option<(PathBuf, usize, usize, f32)> = None;
    for (id, path) in &files {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let Decoded {
            record,
            sample_rate,
        } = decode(path, id, &bytes)?;
        let geometry = (record.n_channels(), record.n_samples(), sample_rate);
        match &reference {
            None => reference = Some((path.clone(), geometry.0, geometry.1, geometry.2)),
            Some((first, c, s, rate)) if (*c, *s, *rate) != geometry => {
                return Err(DataError::Geometry(format!(
                    "{} is {} ch × {} samples at {} Hz but {} is {c} ch × {s} samples at {rate} Hz",
                    path.display(),
                    geometry.0,
                    geometry.1,
                    geometry.2,
                    first.display()
                )));
            }
            Some(_) => {}
        }
        subjects.push(record);
    }
    let Some((_, n_channels, _, sample_rate)) = reference else {
        return Err(DataError::Empty);
    };
    let montage_path = dir.join(MONTAGE_FILE);
    let montage = if montage_path.exists() {
        let text = fs::read_to_string(&montage_path).map_err(io_err(&montage_path))?;
        let names: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if names.len() != n_channels {
            return Err(DataError::Geometry(format!(
                "{} lists {} channels, files hold {n_channels}",
                montage_path.display(),
                names.len()
            )));
        }
        names
    } else {
        default_montage(n_channels)
    };
    EpochedDataset::new(subjects, montage, sample_rate)
}

/// Inspection dump: one row per (trial, channel) with subject, trial, label,
/// channel name, then the samples.
pub fn export_csv(dataset: &EpochedDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| DataError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut header = vec![
        "subject".to_string(),
        "trial".into(),
        "label".into(),
        "channel".into(),
    ];
    header.extend((0..dataset.n_samples()).map(|i| format!("s{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for record in dataset.subjects() {
        for t in 0..record.n_trials() {
            for (c, name) in dataset.montage().iter().enumerate() {
                let samples =
                    &record.trial(t)[c * record.n_samples()..(c + 1) * record.n_samples()];
                let mut row = vec![
                    record.subject_id().to_string(),
                    t.to_string(),
                    record.labels()[t].to_string(),
                    name.clone(),
                ];
                row.extend(samples.iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.into_inner()
        .map_err(|e| csv_err(e.into_error().into()))?
        .flush()
        .map_err(io_err(path))
}
