//! On-disk formats for per-token loss dumps, checkpoint manifests and
//! external metric files.
//!
//! A binary dump is laid out as
//!
//! ```text
//! offset  size     content
//! 0       8        magic "CELOSSv1"
//! 8       8        count, u64 little-endian
//! 16      4*count  losses, IEEE-754 f32 little-endian
//! ```
//!
//! `+inf` is stored as the IEEE infinity bit pattern. Files that do not start
//! with the `CELOSS` prefix are read as text, one decimal loss per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CELOSSv1";
const HEADER_LEN: u64 = 16;
const READ_BUFFER: usize = 1 << 16;

/// The empirical per-token CE distribution of one checkpoint, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector {
    checkpoint_id: String,
    losses: Vec<f32>,
}

fn check_loss(index: usize, value: f32) -> Result<()> {
    if value.is_nan() || value < 0.0 {
        return Err(Error::InvalidLoss {
            index,
            value: value as f64,
        });
    }
    Ok(())
}

impl LossVector {
    pub fn new(checkpoint_id: impl Into<String>, losses: Vec<f32>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::EmptyLosses);
        }
        for (i, &v) in losses.iter().enumerate() {
            check_loss(i, v)?;
        }
        Ok(LossVector {
            checkpoint_id: checkpoint_id.into(),
            losses,
        })
    }

    /// Converts from `f64`, rounding each value to the nearest `f32`.
    pub fn from_f64(checkpoint_id: impl Into<String>, losses: &[f64]) -> Result<Self> {
        Self::new(checkpoint_id, losses.iter().map(|&v| v as f32).collect())
    }

    pub fn checkpoint_id(&self) -> &str {
        &self.checkpoint_id
    }

    pub fn losses(&self) -> &[f32] {
        &self.losses
    }

    pub fn count(&self) -> usize {
        self.losses.len()
    }

    pub fn with_id(mut self, checkpoint_id: impl Into<String>) -> Self {
        self.checkpoint_id = checkpoint_id.into();
        self
    }

    pub fn into_losses(self) -> Vec<f32> {
        self.losses
    }
}

pub fn write_loss_dump(losses: &LossVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(losses.count() as u64).to_le_bytes()).map_err(io)?;
    for v in losses.losses() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_loss_dump(path: impl AsRef<Path>) -> Result<LossVector> {
    let path = path.as_ref();
    let reader = LossReader::open(path)?;
    let mut losses = Vec::with_capacity(reader.declared_count().unwrap_or(0) as usize);
    for v in reader {
        losses.push(v?);
    }
    if losses.is_empty() {
        return Err(Error::EmptyLosses);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(LossVector {
        checkpoint_id: id,
        losses,
    })
}

enum Source {
    Binary {
        inner: BufReader<File>,
        remaining: u64,
    },
    Text {
        lines: std::io::Lines<BufReader<File>>,
        line: usize,
    },
}

/// Streaming reader over a loss dump. Memory use is one fixed-size buffer
/// regardless of the number of values.
pub struct LossReader {
    path: PathBuf,
    source: Source,
    declared: Option<u64>,
    index: usize,
    failed: bool,
}

fn looks_textual(bytes: &[u8]) -> bool {
    bytes.iter().all(|&b| b.is_ascii_graphic() || b.is_ascii_whitespace())
}

impl LossReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let mut inner = BufReader::with_capacity(READ_BUFFER, file);

        let mut head = [0u8; 8];
        let n = read_up_to(&mut inner, &mut head).map_err(|e| Error::io(&path, e))?;
        let head = &head[..n];

        if head == MAGIC {
            let mut count = [0u8; 8];
            let got = read_up_to(&mut inner, &mut count).map_err(|e| Error::io(&path, e))?;
            if got < 8 {
                return Err(Error::Truncated {
                    path,
                    expected: 0,
                    actual: len.saturating_sub(8),
                });
            }
            let count = u64::from_le_bytes(count);
            let payload = len - HEADER_LEN;
            let needed = count.saturating_mul(4);
            if payload < needed {
                return Err(Error::Truncated {
                    path,
                    expected: count,
                    actual: payload,
                });
            }
            if payload > needed {
                return Err(Error::CountMismatch {
                    path,
                    header: count,
                    actual: payload / 4,
                });
            }
            return Ok(LossReader {
                path,
                source: Source::Binary {
                    inner,
                    remaining: count,
                },
                declared: Some(count),
                index: 0,
                failed: false,
            });
        }

        if head.starts_with(b"CELOSS") || (n == 8 && !looks_textual(head)) {
            return Err(Error::BadMagic {
                path,
                found: String::from_utf8_lossy(head).into_owned(),
            });
        }

        // Text fallback: reopen so the first line is not lost.
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(LossReader {
            path,
            source: Source::Text {
                lines: BufReader::with_capacity(READ_BUFFER, file).lines(),
                line: 0,
            },
            declared: None,
            index: 0,
            failed: false,
        })
    }

    /// Value count from the binary header; `None` for text dumps.
    pub fn declared_count(&self) -> Option<u64> {
        self.declared
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_value(&mut self) -> Option<Result<f32>> {
        match &mut self.source {
            Source::Binary { inner, remaining } => {
                if *remaining == 0 {
                    return None;
                }
                let mut buf = [0u8; 4];
                if let Err(e) = inner.read_exact(&mut buf) {
                    return Some(Err(Error::io(&self.path, e)));
                }
                *remaining -= 1;
                Some(Ok(f32::from_le_bytes(buf)))
            }
            Source::Text { lines, line } => loop {
                let text = match lines.next()? {
                    Ok(t) => t,
                    Err(e) => {
                        return Some(Err(if e.kind() == std::io::ErrorKind::InvalidData {
                            Error::BadMagic {
                                path: self.path.clone(),
                                found: "non-UTF-8 data".into(),
                            }
                        } else {
                            Error::io(&self.path, e)
                        }))
                    }
                };
                *line += 1;
                let trimmed = text.trim();
                if trimmed.is_empty() {
                    continue;
                }
                return Some(trimmed.parse::<f32>().map_err(|_| Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    text: trimmed.to_string(),
                }));
            },
        }
    }
}

impl Iterator for LossReader {
    type Item = Result<f32>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_value()?.and_then(|v| {
            check_loss(self.index, v)?;
            Ok(v)
        });
        self.index += 1;
        if item.is_err() {
            self.failed = true;
        }
        Some(item)
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// One checkpoint entry of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointMeta {
    pub id: String,
    /// Family tags; a checkpoint may belong to several families (a shared
    /// teacher, for instance).
    pub families: Vec<String>,
    pub step: u64,
    pub objective: String,
    pub metrics: BTreeMap<String, f64>,
    pub loss_path: PathBuf,
}

impl CheckpointMeta {
    pub fn in_family(&self, family: &str) -> bool {
        self.families.iter().any(|f| f == family)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub checkpoints: Vec<CheckpointMeta>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum FamilyField {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCheckpoint {
    id: String,
    family: FamilyField,
    step: u64,
    objective: String,
    loss: PathBuf,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metrics: BTreeMap<String, f64>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: u32,
    #[serde(default)]
    checkpoints: Vec<RawCheckpoint>,
}

/// Loads and validates a TOML manifest. Relative `loss` paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = parse_manifest(&text, base).map_err(|e| match e {
        Error::InvalidArgument(message) => Error::Manifest {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    for c in &manifest.checkpoints {
        // Opening validates magic and header/payload agreement.
        LossReader::open(&c.loss_path)?;
    }
    Ok(manifest)
}

/// Parses a manifest document without touching the referenced loss files.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let raw: RawManifest = toml::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
    if raw.checkpoints.is_empty() {
        return Err(Error::invalid("manifest lists no checkpoints"));
    }
    let mut seen = BTreeSet::new();
    let mut checkpoints = Vec::with_capacity(raw.checkpoints.len());
    for c in raw.checkpoints {
        if !seen.insert(c.id.clone()) {
            return Err(Error::DuplicateId(c.id));
        }
        let families = match c.family {
            FamilyField::One(f) => vec![f],
            FamilyField::Many(fs) => fs,
        };
        if families.is_empty() || families.iter().any(|f| f.is_empty()) {
            return Err(Error::invalid(format!("checkpoint {:?} has an empty family", c.id)));
        }
        if let Some((name, v)) = c.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "checkpoint {:?}: metric {name:?} is not finite ({v})",
                c.id
            )));
        }
        let loss_path = if c.loss.is_absolute() {
            c.loss
        } else {
            base_dir.join(c.loss)
        };
        checkpoints.push(CheckpointMeta {
            id: c.id,
            families,
            step: c.step,
            objective: c.objective,
            metrics: c.metrics,
            loss_path,
        });
    }
    Ok(Manifest {
        version: raw.version,
        checkpoints,
    })
}

impl Manifest {
    /// Sorted, de-duplicated family tags.
    pub fn families(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.checkpoints.iter().flat_map(|c| &c.families).collect();
        set.into_iter().cloned().collect()
    }

    /// Members of `family`, in manifest order.
    pub fn family(&self, family: &str) -> Result<Vec<&CheckpointMeta>> {
        let members: Vec<_> = self.checkpoints.iter().filter(|c| c.in_family(family)).collect();
        if members.is_empty() {
            return Err(Error::UnknownFamily(family.to_string()));
        }
        Ok(members)
    }

    pub fn get(&self, id: &str) -> Option<&CheckpointMeta> {
        self.checkpoints.iter().find(|c| c.id == id)
    }

    /// Renders the manifest as TOML. Loss paths under `base_dir` are written
    /// relative to it.
    pub fn to_toml(&self, base_dir: &Path) -> Result<String> {
        let raw = RawManifest {
            version: self.version,
            checkpoints: self
                .checkpoints
                .iter()
                .map(|c| RawCheckpoint {
                    id: c.id.clone(),
                    family: if c.families.len() == 1 {
                        FamilyField::One(c.families[0].clone())
                    } else {
                        FamilyField::Many(c.families.clone())
                    },
                    step: c.step,
                    objective: c.objective.clone(),
                    loss: c
                        .loss_path
                        .strip_prefix(base_dir)
                        .map(Path::to_path_buf)
                        .unwrap_or_else(|_| c.loss_path.clone()),
                    metrics: c.metrics.clone(),
                })
                .collect(),
        };
        toml::to_string(&raw).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Reads a two-column `checkpoint_id,value` file. A first line whose value
/// column does not parse is treated as a header.
pub fn read_metric_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                text: rec.iter().collect::<Vec<_>>().join(","),
            });
        }
        let value = match rec[1].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    text: rec[1].to_string(),
                })
            }
        };
        if out.insert(rec[0].to_string(), value).is_some() {
            return Err(Error::DuplicateId(rec[0].to_string()));
        }
    }
    Ok(out)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            text: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn single_value_layout() {
        let dir = tmp();
        let p = dir.path().join("one.bin");
        write_loss_dump(&LossVector::new("x", vec![0.5]).unwrap(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 0.5);
    }

    #[test]
    fn empty_and_invalid_rejected() {
        assert!(matches!(LossVector::new("x", vec![]), Err(Error::EmptyLosses)));
        assert!(matches!(
            LossVector::new("x", vec![0.1, f32::NAN]),
            Err(Error::InvalidLoss { index: 1, .. })
        ));
        assert!(matches!(
            LossVector::new("x", vec![-1.0]),
            Err(Error::InvalidLoss { index: 0, .. })
        ));
        assert!(matches!(
            LossVector::new("x", vec![f32::NEG_INFINITY]),
            Err(Error::InvalidLoss { .. })
        ));
        assert!(LossVector::new("x", vec![f32::INFINITY, 0.0]).is_ok());
    }

    #[test]
    fn round_trip_small() {
        let dir = tmp();
        let p = dir.path().join("a.bin");
        let v = LossVector::new("a", vec![0.1, 0.2]).unwrap();
        write_loss_dump(&v, &p).unwrap();
        assert_eq!(read_loss_dump(&p).unwrap().losses(), &[0.1f32, 0.2]);
    }

    #[test]
    fn text_fallback() {
        let dir = tmp();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "0.1\n0.2\n").unwrap();
        let v = read_loss_dump(&p).unwrap();
        assert_eq!(v.losses(), &[0.1f32, 0.2]);
        assert_eq!(v.checkpoint_id(), "a");

        std::fs::write(&p, "0.1\ninf\n\n3\n").unwrap();
        assert_eq!(read_loss_dump(&p).unwrap().losses(), &[0.1, f32::INFINITY, 3.0]);

        std::fs::write(&p, "0.1\nabc\n").unwrap();
        assert!(matches!(read_loss_dump(&p), Err(Error::Parse { line: 2, .. })));

        std::fs::write(&p, "0.1\n-2\n").unwrap();
        assert!(matches!(read_loss_dump(&p), Err(Error::InvalidLoss { index: 1, .. })));
    }

    #[test]
    fn bad_magic() {
        let dir = tmp();
        let p = dir.path().join("a.bin");
        let mut bytes = b"CELOSSv9".to_vec();
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_loss_dump(&p), Err(Error::BadMagic { .. })));

        std::fs::write(&p, [0u8, 1, 2, 3, 0xff, 0xfe, 7, 8, 9]).unwrap();
        assert!(matches!(read_loss_dump(&p), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_and_count_mismatch() {
        let dir = tmp();
        let p = dir.path().join("a.bin");
        write_loss_dump(&LossVector::new("a", vec![1.0, 2.0, 3.0]).unwrap(), &p).unwrap();
        let full = std::fs::read(&p).unwrap();

        std::fs::write(&p, &full[..full.len() - 4]).unwrap();
        assert!(matches!(
            read_loss_dump(&p),
            Err(Error::Truncated {
                expected: 3,
                actual: 8,
                ..
            })
        ));
        std::fs::write(&p, &full[..12]).unwrap();
        assert!(matches!(read_loss_dump(&p), Err(Error::Truncated { .. })));

        let mut longer = full.clone();
        longer.extend_from_slice(&4.0f32.to_le_bytes());
        std::fs::write(&p, &longer).unwrap();
        assert!(matches!(
            read_loss_dump(&p),
            Err(Error::CountMismatch {
                header: 3,
                actual: 4,
                ..
            })
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_loss_dump("/definitely/not/here.bin").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.bin"));
    }

    #[test]
    fn reader_reports_declared_count() {
        let dir = tmp();
        let p = dir.path().join("a.bin");
        write_loss_dump(&LossVector::new("a", vec![1.0; 1000]).unwrap(), &p).unwrap();
        let r = LossReader::open(&p).unwrap();
        assert_eq!(r.declared_count(), Some(1000));
        assert_eq!(r.count(), 1000);
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    fn entry(id: &str, family: &str, loss: &str) -> String {
        format!(
            "[[checkpoints]]\nid = \"{id}\"\nfamily = {family}\nstep = 250000\nobjective = \"token-ce\"\nloss = \"{loss}\"\n\n"
        )
    }

    #[test]
    fn manifest_thirty_checkpoints_shared_teacher() {
        let dir = tmp();
        let dump = dir.path().join("d.bin");
        write_loss_dump(&LossVector::new("d", vec![1.0]).unwrap(), &dump).unwrap();
        let mut body = String::from("version = 1\n\n");
        // 3 teacher snapshots shared, 4 students x 3 distilled, 5 control runs x 3.
        for s in ["50k", "100k", "250k"] {
            body += &entry(&format!("teacher-{s}"), "[\"distilled\", \"scratch\"]", "d.bin");
            for run in ["fullkl", "top40", "top15", "top5"] {
                body += &entry(&format!("{run}-{s}"), "\"distilled\"", "d.bin");
            }
            for run in 0..5 {
                body += &entry(&format!("ctl{run}-{s}"), "\"scratch\"", "d.bin");
            }
        }
        let m = load_manifest(write_manifest(dir.path(), &body)).unwrap();
        assert_eq!(m.checkpoints.len(), 30);
        assert_eq!(m.family("distilled").unwrap().len(), 15);
        assert_eq!(m.family("scratch").unwrap().len(), 18);
        assert_eq!(m.families(), vec!["distilled", "scratch"]);
        assert!(matches!(m.family("nope"), Err(Error::UnknownFamily(_))));
        assert_eq!(m.checkpoints[0].loss_path, dir.path().join("d.bin"));
    }

    #[test]
    fn manifest_errors() {
        let dir = tmp();
        let dump = dir.path().join("d.bin");
        write_loss_dump(&LossVector::new("d", vec![1.0]).unwrap(), &dump).unwrap();

        let dup = format!(
            "version = 1\n{}{}",
            entry("teacher", "\"a\"", "d.bin"),
            entry("teacher", "\"a\"", "d.bin")
        );
        assert!(matches!(
            load_manifest(write_manifest(dir.path(), &dup)),
            Err(Error::DuplicateId(id)) if id == "teacher"
        ));

        let empty = "version = 1\ncheckpoints = []\n";
        assert!(matches!(
            load_manifest(write_manifest(dir.path(), empty)),
            Err(Error::Manifest { .. })
        ));

        let missing = format!("version = 1\n{}", entry("a", "\"a\"", "gone.bin"));
        let err = load_manifest(write_manifest(dir.path(), &missing)).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("gone.bin"));

        assert!(matches!(
            load_manifest(write_manifest(dir.path(), "version = [")),
            Err(Error::Manifest { .. })
        ));
    }

    #[test]
    fn manifest_metrics_and_round_trip() {
        let dir = tmp();
        let dump = dir.path().join("d.bin");
        write_loss_dump(&LossVector::new("d", vec![1.0]).unwrap(), &dump).unwrap();
        let body = format!(
            "version = 1\n{}[checkpoints.metrics]\njudge = 2.06\n",
            entry("top5", "\"distilled\"", "d.bin")
        );
        let m = load_manifest(write_manifest(dir.path(), &body)).unwrap();
        assert_eq!(m.checkpoints[0].metrics["judge"], 2.06);
        let again = parse_manifest(&m.to_toml(dir.path()).unwrap(), dir.path()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn metric_file() {
        let dir = tmp();
        let p = dir.path().join("judge.csv");
        std::fs::write(&p, "checkpoint_id,value\nteacher,2.01\ntop5, 2.06\n").unwrap();
        let m = read_metric_file(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["top5"], 2.06);

        std::fs::write(&p, "teacher,2.01\ntop5,abc\n").unwrap();
        assert!(matches!(read_metric_file(&p), Err(Error::Parse { line: 2, .. })));
    }

    fn loss_strategy() -> impl Strategy<Value = f32> {
        prop_oneof![
            8 => 0.0f32..50.0,
            1 => Just(f32::INFINITY),
            1 => Just(0.0f32),
            1 => any::<u32>().prop_map(|b| f32::from_bits(b & 0x7f7f_ffff)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn write_read_is_bit_exact(values in prop::collection::vec(loss_strategy(), 1..2000)) {
            let dir = tmp();
            let p = dir.path().join("v.bin");
            let v = LossVector::new("v", values).unwrap();
            write_loss_dump(&v, &p).unwrap();
            let back = read_loss_dump(&p).unwrap();
            let a: Vec<u32> = v.losses().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.losses().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
