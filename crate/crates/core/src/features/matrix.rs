use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};
use crate::las_io::PointCloud;

/// One of the per-point attributes retained from the LAS records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    X,
    Y,
    Z,
    Intensity,
    ScanAngle,
    NumReturns,
    ReturnNumber,
}

impl Attribute {
    /// The seven retained attributes, spatial coordinates first.
    pub const DEFAULT: [Attribute; 7] = [
        Attribute::X,
        Attribute::Y,
        Attribute::Z,
        Attribute::Intensity,
        Attribute::ScanAngle,
        Attribute::NumReturns,
        Attribute::ReturnNumber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::X => "x",
            Attribute::Y => "y",
            Attribute::Z => "z",
            Attribute::Intensity => "intensity",
            Attribute::ScanAngle => "scan_angle",
            Attribute::NumReturns => "num_returns",
            Attribute::ReturnNumber => "return_number",
        }
    }

    fn value(self, p: &crate::las_io::LidarPoint) -> f64 {
        match self {
            Attribute::X => p.x,
            Attribute::Y => p.y,
            Attribute::Z => p.z,
            Attribute::Intensity => p.intensity,
            Attribute::ScanAngle => p.scan_angle,
            Attribute::NumReturns => p.num_returns as f64,
            Attribute::ReturnNumber => p.return_number as f64,
        }
    }
}

/// Dense mapping between ASPRS class codes and label indices `0..C`,
/// ordered by ascending code.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassMap {
    codes: Vec<u8>,
}

impl ClassMap {
    pub fn from_codes<I: IntoIterator<Item = u8>>(codes: I) -> Self {
        let mut codes: Vec<u8> = codes.into_iter().collect();
        codes.sort_unstable();
        codes.dedup();
        Self { codes }
    }

    pub fn index_of(&self, code: u8) -> Option<usize> {
        self.codes.binary_search(&code).ok()
    }

    pub fn code(&self, index: usize) -> Option<u8> {
        self.codes.get(index).copied()
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Row-major `rows × cols` examples with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_map: ClassMap,
}

impl FeatureMatrix {
    /// Validates shape, label range and finiteness.
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_map: ClassMap,
    ) -> Result<Self> {
        if cols == 0 || data.len() != rows * cols || labels.len() != rows || feature_names.len() != cols {
            return Err(FeatureError::InvalidShape(format!(
                "{rows}x{cols} with {} values, {} labels, {} names",
                data.len(),
                labels.len(),
                feature_names.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_map.len()) {
            return Err(FeatureError::InvalidShape(format!(
                "label {bad} outside class map of size {}",
                class_map.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            labels,
            feature_names,
            class_map,
        })
    }

    /// Builds a matrix from unnamed data; names default to `f0, f1, ...`
    /// and the class map to codes `0..=max(label)`.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let names = (0..cols).map(|j| format!("f{j}")).collect();
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let class_map = ClassMap::from_codes((0..n_classes).map(|c| c as u8));
        Self::new(rows, cols, data, labels, names, class_map)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_map(&self) -> &ClassMap {
        &self.class_map
    }

    pub fn n_classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_map: self.class_map.clone(),
        }
    }

    /// Same rows and labels with new feature values.
    pub fn with_features(&self, cols: usize, data: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        Self::new(
            self.rows,
            cols,
            data,
            self.labels.clone(),
            feature_names,
            self.class_map.clone(),
        )
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Replaces the features with the contents of `m` (one row per example).
    pub fn with_dmatrix(&self, m: &DMatrix<f64>, prefix: &str) -> Result<Self> {
        if m.nrows() != self.rows {
            return Err(FeatureError::DimMismatch {
                expected: self.rows,
                found: m.nrows(),
            });
        }
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter().copied());
        }
        let names = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
        self.with_features(m.ncols(), data, names)
    }

    /// Writes a header of feature names plus `label` (holding the class code).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("label");
        wtr.write_record(&header)?;
        for i in 0..self.rows {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.class_map.code(self.labels[i]).unwrap_or_default().to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV form written by [`FeatureMatrix::write_csv`]; the last
    /// column must be `label` and hold class codes.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[header.len() - 1] != "label" {
            return Err(FeatureError::InvalidShape("last CSV column must be `label`".into()));
        }
        let cols = header.len() - 1;
        let names: Vec<String> = header.iter().take(cols).map(str::to_string).collect();
        let mut data = Vec::new();
        let mut codes = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for field in rec.iter().take(cols) {
                data.push(field.parse::<f64>().map_err(|e| FeatureError::InvalidShape(e.to_string()))?);
            }
            codes.push(rec[cols].parse::<u8>().map_err(|e| FeatureError::InvalidShape(e.to_string()))?);
        }
        let class_map = ClassMap::from_codes(codes.iter().copied());
        let labels = codes.iter().map(|&c| class_map.index_of(c).unwrap()).collect();
        Self::new(codes.len(), cols, data, labels, names, class_map)
    }

    /// Little-endian blob: magic, version, rows, cols, class codes, feature
    /// names, row-major values, labels.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BLOB_MAGIC)?;
        w.write_all(&BLOB_VERSION.to_le_bytes())?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        w.write_all(&(self.class_map.len() as u32).to_le_bytes())?;
        w.write_all(self.class_map.codes())?;
        for name in &self.feature_names {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        for &l in &self.labels {
            w.write_all(&(l as u32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BLOB_MAGIC {
            return Err(FeatureError::BadBlob("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BLOB_VERSION {
            return Err(FeatureError::BadBlob(format!("unsupported version {version}")));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let n_codes = read_u32(&mut r)? as usize;
        let mut codes = vec![0u8; n_codes];
        r.read_exact(&mut codes)?;
        let mut names = Vec::with_capacity(cols);
        for _ in 0..cols {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(String::from_utf8(buf).map_err(|e| FeatureError::BadBlob(e.to_string()))?);
        }
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            labels.push(read_u32(&mut r)? as usize);
        }
        Self::new(rows, cols, data, labels, names, ClassMap::from_codes(codes))
    }
}

const BLOB_MAGIC: &[u8; 4] = b"PCFM";
const BLOB_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// The seven retained attributes in their default column order.
pub fn to_feature_matrix(cloud: &PointCloud) -> Result<FeatureMatrix> {
    to_feature_matrix_with(cloud, &Attribute::DEFAULT)
}

/// Extracts the chosen attributes; labels are class codes remapped densely
/// by ascending code.
pub fn to_feature_matrix_with(cloud: &PointCloud, attributes: &[Attribute]) -> Result<FeatureMatrix> {
    if cloud.is_empty() {
        return Err(FeatureError::EmptyCloud);
    }
    if attributes.is_empty() {
        return Err(FeatureError::InvalidShape("no attributes selected".into()));
    }
    let class_map = ClassMap::from_codes(cloud.points.iter().map(|p| p.class_code));
    let mut data = Vec::with_capacity(cloud.len() * attributes.len());
    let mut labels = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        data.extend(attributes.iter().map(|a| a.value(p)));
        labels.push(class_map.index_of(p.class_code).unwrap());
    }
    let names = attributes.iter().map(|a| a.name().to_string()).collect();
    FeatureMatrix::new(cloud.len(), attributes.len(), data, labels, names, class_map)
}
