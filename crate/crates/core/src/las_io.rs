//! LAS ingestion: binary point-record parsing, class filtering and
//! order-preserving uniform subsampling.
//!
//! Only uncompressed LAS 1.2–1.4 files with point data formats
//! 0, 1, 2, 3, 6, 7 and 8 are accepted. A plain CSV form with the columns
//! `x,y,z,intensity,scan_angle,num_returns,return_number,class` is accepted
//! as well so pipelines can run without binary fixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Point data formats this reader understands.
pub const SUPPORTED_FORMATS: [u8; 7] = [0, 1, 2, 3, 6, 7, 8];

/// ASPRS codes for ground, noise, water, rail, bridge deck and high noise.
pub const TARGET_CLASS_CODES: [u8; 6] = [2, 7, 9, 10, 17, 18];

const LEGACY_HEADER_SIZE: usize = 227;
const SCAN_ANGLE_UNIT_DEG: f64 = 0.006;

#[derive(Debug, Error)]
pub enum LasError {
    #[error("not a LAS file (missing \"LASF\" signature)")]
    BadMagic,
    #[error("unsupported point data format {0} (supported: 0, 1, 2, 3, 6, 7, 8)")]
    UnsupportedFormat(u8),
    #[error("compressed (LAZ) point data is not supported; decompress to LAS first")]
    Compressed,
    #[error("truncated LAS data: {what} needs {needed} bytes, only {available} available")]
    Truncated {
        what: &'static str,
        needed: u64,
        available: u64,
    },
    #[error("invalid LAS header: {0}")]
    InvalidHeader(String),
    #[error("record {record}: {message}")]
    InvalidRecord { record: usize, message: String },
    #[error("sample size {requested} exceeds cloud size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LasError> = std::result::Result<T, E>;

/// The public header block fields the reader needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LasHeader {
    pub version_major: u8,
    pub version_minor: u8,
    pub header_size: u16,
    pub point_data_format: u8,
    pub point_count: u64,
    pub point_record_length: u16,
    pub offset_to_points: u32,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

/// One LiDAR return with the seven retained attributes and its class code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    /// Degrees from nadir, in [-90, 90].
    pub scan_angle: f64,
    pub num_returns: u8,
    pub return_number: u8,
    pub class_code: u8,
}

/// Points in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points per class code, ascending by code.
    pub fn class_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.points {
            *counts.entry(p.class_code).or_insert(0) += 1;
        }
        counts
    }
}

/// A record that was repaired while reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub record: usize,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WarningKind {
    ScanAngleClamped { raw: f64 },
    NumReturnsZero,
    ReturnNumberZero,
    ReturnNumberExceedsCount { return_number: u8, num_returns: u8 },
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            WarningKind::ScanAngleClamped { raw } => {
                write!(f, "record {}: scan angle {raw} clamped to [-90, 90]", self.record)
            }
            WarningKind::NumReturnsZero => {
                write!(f, "record {}: number of returns 0 clamped to 1", self.record)
            }
            WarningKind::ReturnNumberZero => {
                write!(f, "record {}: return number 0 clamped to 1", self.record)
            }
            WarningKind::ReturnNumberExceedsCount {
                return_number,
                num_returns,
            } => write!(
                f,
                "record {}: return number {return_number} exceeds number of returns {num_returns}; clamped",
                self.record
            ),
        }
    }
}

/// Result of reading a LAS file.
#[derive(Debug, Clone)]
pub struct LasFile {
    pub header: LasHeader,
    pub cloud: PointCloud,
    pub warnings: Vec<ParseWarning>,
}

fn min_record_length(format: u8) -> Option<u16> {
    match format {
        0 => Some(20),
        1 => Some(28),
        2 => Some(26),
        3 => Some(34),
        6 => Some(30),
        7 => Some(36),
        8 => Some(38),
        _ => None,
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn i32_at(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn truncated(what: &'static str, needed: u64, available: usize) -> LasError {
    LasError::Truncated {
        what,
        needed,
        available: available as u64,
    }
}

/// Decodes the public header block.
pub fn parse_header(bytes: &[u8]) -> Result<LasHeader> {
    if bytes.len() < 4 || &bytes[..4] != b"LASF" {
        return Err(LasError::BadMagic);
    }
    if bytes.len() < LEGACY_HEADER_SIZE {
        return Err(truncated("header", LEGACY_HEADER_SIZE as u64, bytes.len()));
    }
    let version_major = bytes[24];
    let version_minor = bytes[25];
    let header_size = u16_at(bytes, 94);
    let offset_to_points = u32_at(bytes, 96);
    let raw_format = bytes[104];
    // Bits 6 and 7 of the format byte mark LAZ-compressed records.
    if raw_format & 0xC0 != 0 {
        return Err(LasError::Compressed);
    }
    let point_data_format = raw_format;
    let point_record_length = u16_at(bytes, 105);
    let legacy_count = u32_at(bytes, 107) as u64;

    if (header_size as usize) < LEGACY_HEADER_SIZE {
        return Err(LasError::InvalidHeader(format!(
            "header size {header_size} is smaller than the minimum {LEGACY_HEADER_SIZE}"
        )));
    }
    if offset_to_points < header_size as u32 {
        return Err(LasError::InvalidHeader(format!(
            "offset to point data {offset_to_points} precedes end of header {header_size}"
        )));
    }
    let min_len = min_record_length(point_data_format)
        .ok_or(LasError::UnsupportedFormat(point_data_format))?;
    if point_record_length < min_len {
        return Err(LasError::InvalidHeader(format!(
            "point record length {point_record_length} is below the minimum {min_len} for format {point_data_format}"
        )));
    }

    let mut point_count = legacy_count;
    if version_major == 1 && version_minor >= 4 && legacy_count == 0 {
        if bytes.len() < 255 || header_size < 255 {
            return Err(truncated("LAS 1.4 header", 255, bytes.len()));
        }
        point_count = u64_at(bytes, 247);
    }

    let scale = [f64_at(bytes, 131), f64_at(bytes, 139), f64_at(bytes, 147)];
    let offset = [f64_at(bytes, 155), f64_at(bytes, 163), f64_at(bytes, 171)];
    if scale.iter().any(|s| !s.is_finite() || *s == 0.0) || offset.iter().any(|o| !o.is_finite()) {
        return Err(LasError::InvalidHeader(format!(
            "scale {scale:?} / offset {offset:?} must be finite with nonzero scale"
        )));
    }

    Ok(LasHeader {
        version_major,
        version_minor,
        header_size,
        point_data_format,
        point_count,
        point_record_length,
        offset_to_points,
        scale,
        offset,
    })
}

/// Parses an uncompressed LAS file held in memory.
pub fn parse_las(bytes: &[u8]) -> Result<LasFile> {
    let header = parse_header(bytes)?;
    let start = header.offset_to_points as u64;
    let rec_len = header.point_record_length as u64;
    let needed = start + header.point_count * rec_len;
    if (bytes.len() as u64) < needed {
        return Err(truncated("point records", needed, bytes.len()));
    }

    let extended = header.point_data_format >= 6;
    let mut points = Vec::with_capacity(header.point_count as usize);
    let mut warnings = Vec::new();
    for i in 0..header.point_count as usize {
        let base = start as usize + i * rec_len as usize;
        let rec = &bytes[base..base + rec_len as usize];
        let raw = [i32_at(rec, 0), i32_at(rec, 4), i32_at(rec, 8)];
        let intensity = u16_at(rec, 12) as f64;
        let (return_number, num_returns, class_code, scan_angle) = if extended {
            let bits = rec[14];
            let angle = i16::from_le_bytes([rec[18], rec[19]]) as f64 * SCAN_ANGLE_UNIT_DEG;
            (bits & 0x0F, bits >> 4, rec[16], angle)
        } else {
            let bits = rec[14];
            (bits & 0x07, (bits >> 3) & 0x07, rec[15] & 0x1F, rec[16] as i8 as f64)
        };
        let point = LidarPoint {
            x: raw[0] as f64 * header.scale[0] + header.offset[0],
            y: raw[1] as f64 * header.scale[1] + header.offset[1],
            z: raw[2] as f64 * header.scale[2] + header.offset[2],
            intensity,
            scan_angle,
            num_returns,
            return_number,
            class_code,
        };
        points.push(sanitize(point, i, &mut warnings));
    }

    Ok(LasFile {
        header,
        cloud: PointCloud { points },
        warnings,
    })
}

pub fn read_las<P: AsRef<Path>>(path: P) -> Result<LasFile> {
    let bytes = std::fs::read(path)?;
    parse_las(&bytes)
}

/// Clamps out-of-range attributes so every returned point satisfies the
/// `LidarPoint` invariants, recording one warning per repair.
fn sanitize(mut p: LidarPoint, record: usize, warnings: &mut Vec<ParseWarning>) -> LidarPoint {
    if !(-90.0..=90.0).contains(&p.scan_angle) {
        warnings.push(ParseWarning {
            record,
            kind: WarningKind::ScanAngleClamped { raw: p.scan_angle },
        });
        p.scan_angle = p.scan_angle.clamp(-90.0, 90.0);
    }
    if p.num_returns == 0 {
        warnings.push(ParseWarning {
            record,
            kind: WarningKind::NumReturnsZero,
        });
        p.num_returns = 1;
    }
    if p.return_number == 0 {
        warnings.push(ParseWarning {
            record,
            kind: WarningKind::ReturnNumberZero,
        });
        p.return_number = 1;
    }
    if p.return_number > p.num_returns {
        warnings.push(ParseWarning {
            record,
            kind: WarningKind::ReturnNumberExceedsCount {
                return_number: p.return_number,
                num_returns: p.num_returns,
            },
        });
        p.return_number = p.num_returns;
    }
    p
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    x: f64,
    y: f64,
    z: f64,
    intensity: f64,
    scan_angle: f64,
    num_returns: u8,
    return_number: u8,
    class: u8,
}

/// Reads the CSV fallback form. Columns are matched by header name.
pub fn parse_csv<R: Read>(reader: R) -> Result<(PointCloud, Vec<ParseWarning>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        let coords = [row.x, row.y, row.z, row.intensity, row.scan_angle];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(LasError::InvalidRecord {
                record: i,
                message: "non-finite attribute value".into(),
            });
        }
        let point = LidarPoint {
            x: row.x,
            y: row.y,
            z: row.z,
            intensity: row.intensity,
            scan_angle: row.scan_angle,
            num_returns: row.num_returns,
            return_number: row.return_number,
            class_code: row.class,
        };
        points.push(sanitize(point, i, &mut warnings));
    }
    Ok((PointCloud { points }, warnings))
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<(PointCloud, Vec<ParseWarning>)> {
    parse_csv(std::fs::File::open(path)?)
}

pub fn write_csv<W: Write>(cloud: &PointCloud, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in &cloud.points {
        wtr.serialize(CsvRow {
            x: p.x,
            y: p.y,
            z: p.z,
            intensity: p.intensity,
            scan_angle: p.scan_angle,
            num_returns: p.num_returns,
            return_number: p.return_number,
            class: p.class_code,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Encodes a cloud as a minimal LAS 1.2 (formats 0–3) or 1.4 (formats 6–8)
/// file with no VLRs. Coordinates are quantized to the given scale.
/// Intended for fixtures; fields outside the seven retained attributes are
/// written as zero.
pub fn write_las(cloud: &PointCloud, format: u8, scale: [f64; 3], offset: [f64; 3]) -> Result<Vec<u8>> {
    let rec_len = min_record_length(format).ok_or(LasError::UnsupportedFormat(format))?;
    let extended = format >= 6;
    let header_size: usize = if extended { 375 } else { LEGACY_HEADER_SIZE };
    let n = cloud.len();
    let mut out = vec![0u8; header_size];
    out[..4].copy_from_slice(b"LASF");
    out[24] = 1;
    out[25] = if extended { 4 } else { 2 };
    out[94..96].copy_from_slice(&(header_size as u16).to_le_bytes());
    out[96..100].copy_from_slice(&(header_size as u32).to_le_bytes());
    out[104] = format;
    out[105..107].copy_from_slice(&rec_len.to_le_bytes());
    let legacy = if extended { 0u32 } else { n as u32 };
    out[107..111].copy_from_slice(&legacy.to_le_bytes());
    for a in 0..3 {
        out[131 + 8 * a..139 + 8 * a].copy_from_slice(&scale[a].to_le_bytes());
        out[155 + 8 * a..163 + 8 * a].copy_from_slice(&offset[a].to_le_bytes());
    }
    if extended {
        out[247..255].copy_from_slice(&(n as u64).to_le_bytes());
    }

    for (i, p) in cloud.points.iter().enumerate() {
        let mut rec = vec![0u8; rec_len as usize];
        for (a, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            let q = ((v - offset[a]) / scale[a]).round();
            if !(i32::MIN as f64..=i32::MAX as f64).contains(&q) {
                return Err(LasError::InvalidRecord {
                    record: i,
                    message: format!("coordinate {v} does not fit the i32 grid for scale {}", scale[a]),
                });
            }
            rec[4 * a..4 * a + 4].copy_from_slice(&(q as i32).to_le_bytes());
        }
        let intensity = p.intensity.round().clamp(0.0, u16::MAX as f64) as u16;
        rec[12..14].copy_from_slice(&intensity.to_le_bytes());
        if extended {
            rec[14] = (p.return_number & 0x0F) | (p.num_returns << 4);
            rec[16] = p.class_code;
            let angle = (p.scan_angle / SCAN_ANGLE_UNIT_DEG).round() as i16;
            rec[18..20].copy_from_slice(&angle.to_le_bytes());
        } else {
            rec[14] = (p.return_number & 0x07) | ((p.num_returns & 0x07) << 3);
            rec[15] = p.class_code & 0x1F;
            rec[16] = p.scan_angle.round() as i8 as u8;
        }
        out.extend_from_slice(&rec);
    }
    Ok(out)
}

/// Keeps points whose class code is in `codes`, in their original order.
pub fn filter_classes(cloud: &PointCloud, codes: &BTreeSet<u8>) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| codes.contains(&p.class_code))
            .copied()
            .collect(),
    }
}

/// Indices `floor(i * n / s)` for `i = 0..s`.
pub fn subsample_indices(n: usize, s: usize) -> Result<Vec<usize>> {
    if s == 0 {
        return Err(LasError::EmptySample);
    }
    if s > n {
        return Err(LasError::SampleTooLarge {
            requested: s,
            available: n,
        });
    }
    Ok((0..s)
        .map(|i| ((i as u128 * n as u128) / s as u128) as usize)
        .collect())
}

/// Equally spaced subsample following file order.
pub fn subsample_uniform(cloud: &PointCloud, s: usize) -> Result<PointCloud> {
    let idx = subsample_indices(cloud.len(), s)?;
    Ok(PointCloud {
        points: idx.into_iter().map(|i| cloud.points[i]).collect(),
    })
}
